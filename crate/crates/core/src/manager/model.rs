use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::{GruCache, TextCache};
use crate::nn::{Gradients, Gru, Linear, ParamSet, Real, TextEncoder, TextEncoderShape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ManagerConfig {
    /// Width of image features, responses and the state (D).
    pub dim: usize,
    /// Word embedding width.
    pub embed: usize,
    /// Filters per convolution width.
    pub filters: usize,
    /// Fixed token sequence length.
    pub max_len: usize,
    /// Nearest neighbours in the candidate softmax (K).
    pub top_k: usize,
    /// Skip already shown items when generating candidates.
    pub exclude_shown: bool,
    pub init_seed: u64,
}

impl Default for ManagerConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            embed: 32,
            filters: 32,
            max_len: crate::feedback::DEFAULT_MAX_LEN,
            top_k: 3,
            exclude_shown: true,
            init_seed: 0,
        }
    }
}

/// Dialog manager parameters and layer handles.
///
/// Response encoder: text CNN and the fusion matrix `W` (`D x 2D`).
/// State tracker: GRU and the projection `W^s` (`D x D`).
#[derive(Clone, Debug)]
pub struct DialogManager<T = f32> {
    config: ManagerConfig,
    params: ParamSet<T>,
    text: TextEncoder,
    fusion: Linear,
    gru: Gru,
    proj: Linear,
}

/// Everything needed to backpropagate one turn.
#[derive(Clone, Debug)]
pub struct TurnCache<T> {
    text: TextCache<T>,
    fused_input: Vec<T>,
    gru: GruCache<T>,
    h: Vec<T>,
}

pub(crate) const TEXT: &str = "response.text";
pub(crate) const FUSION: &str = "response.fusion";
pub(crate) const GRU: &str = "tracker.gru";
pub(crate) const PROJ: &str = "tracker.proj";

impl<T: Real> DialogManager<T> {
    /// Fresh parameters: Glorot-uniform matrices, zero biases.
    pub fn new(config: ManagerConfig, vocab_size: usize) -> Result<Self> {
        Self::check_config(&config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut params = ParamSet::new();
        let d = config.dim;
        let text = TextEncoder::register(&mut params, &mut rng, TEXT, text_shape(&config, vocab_size))?;
        let fusion = Linear::register(&mut params, &mut rng, FUSION, 2 * d, d, false)?;
        let gru = Gru::register(&mut params, &mut rng, GRU, d)?;
        let proj = Linear::register(&mut params, &mut rng, PROJ, d, d, false)?;
        Ok(Self {
            config,
            params,
            text,
            fusion,
            gru,
            proj,
        })
    }

    /// Wraps existing parameters, checking every name and shape.
    pub fn from_params(config: ManagerConfig, vocab_size: usize, params: ParamSet<T>) -> Result<Self> {
        Self::check_config(&config)?;
        let expected = Self::new(config.clone(), vocab_size)?;
        params.check_compatible(&expected.params)?;
        let d = config.dim;
        let text = TextEncoder::attach(&params, TEXT, text_shape(&config, vocab_size))?;
        let fusion = Linear::attach(&params, FUSION, 2 * d, d, false)?;
        let gru = Gru::attach(&params, GRU, d)?;
        let proj = Linear::attach(&params, PROJ, d, d, false)?;
        Ok(Self {
            config,
            params,
            text,
            fusion,
            gru,
            proj,
        })
    }

    fn check_config(config: &ManagerConfig) -> Result<()> {
        if config.dim == 0 || config.top_k == 0 {
            return Err(Error::Config("dim and top_k must be positive".into()));
        }
        Ok(())
    }

    pub fn config(&self) -> &ManagerConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.text.shape.vocab
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamSet<T> {
        self.params
    }

    pub fn cast<U: Real>(&self) -> DialogManager<U> {
        DialogManager {
            config: self.config.clone(),
            params: self.params.cast(),
            text: self.text,
            fusion: self.fusion,
            gru: self.gru,
            proj: self.proj,
        }
    }

    pub fn fusion_weight(&self) -> crate::nn::ParamId {
        self.fusion.weight()
    }

    pub fn projection_weight(&self) -> crate::nn::ParamId {
        self.proj.weight()
    }

    /// `x_t = W (x_im ⊕ x_txt)`.
    pub fn encode_response(&self, image: &[T], tokens: &[u32]) -> Result<(Vec<T>, TextCache<T>, Vec<T>)> {
        if image.len() != self.config.dim {
            return Err(Error::shape("image feature", &[self.config.dim], &[image.len()]));
        }
        let (txt, text_cache) = self.text.forward(&self.params, tokens)?;
        let mut fused_input = image.to_vec();
        fused_input.extend(txt);
        let x = self.fusion.forward(&self.params, &fused_input)?;
        Ok((x, text_cache, fused_input))
    }

    /// `(g, h) = GRU(x, h_prev)` with `g = h`; `s = W^s g`.
    pub fn track_state(&self, x: &[T], h_prev: &[T]) -> Result<(Vec<T>, Vec<T>, GruCache<T>)> {
        let (h, cache) = self.gru.step(&self.params, x, h_prev)?;
        let s = self.proj.forward(&self.params, &h)?;
        Ok((s, h, cache))
    }

    /// One full turn: returns `(s_t, h_t, cache)`.
    pub fn turn(&self, h_prev: &[T], image: &[T], tokens: &[u32]) -> Result<(Vec<T>, Vec<T>, TurnCache<T>)> {
        let (x, text, fused_input) = self.encode_response(image, tokens)?;
        let (s, h, gru) = self.track_state(&x, h_prev)?;
        let cache = TurnCache {
            text,
            fused_input,
            gru,
            h: h.clone(),
        };
        Ok((s, h, cache))
    }

    /// Backpropagates `dL/ds_t` plus the gradient arriving from the next turn
    /// through `h_t`; returns `dL/dh_{t-1}`.
    pub fn backward_turn(
        &self,
        cache: &TurnCache<T>,
        ds: &[T],
        dh_next: &[T],
        grads: &mut Gradients<T>,
    ) -> Vec<T> {
        let mut dh = self.proj.backward(&self.params, &cache.h, ds, grads);
        crate::nn::tensor::add_acc(&mut dh, dh_next);
        let (dx, dh_prev) = self.gru.backward(&self.params, &cache.gru, &dh, grads);
        self.backward_response(&cache.text, &cache.fused_input, &dx, grads);
        dh_prev
    }

    /// Backpropagates `dL/dx_t` into the fusion matrix and the text encoder.
    pub fn backward_response(&self, text: &TextCache<T>, fused_input: &[T], dx: &[T], grads: &mut Gradients<T>) {
        let dfused = self.fusion.backward(&self.params, fused_input, dx, grads);
        // image features are frozen; only the text half continues
        self.text.backward(&self.params, text, &dfused[self.config.dim..], grads);
    }

    /// Backpropagates a whole episode given `dL/ds_t` for every turn.
    pub fn backward_episode(&self, caches: &[TurnCache<T>], ds: &[Vec<T>], grads: &mut Gradients<T>) {
        let mut dh = vec![T::zero(); self.config.dim];
        for (cache, ds_t) in caches.iter().zip(ds).rev() {
            dh = self.backward_turn(cache, ds_t, &dh, grads);
        }
    }
}

fn text_shape(config: &ManagerConfig, vocab: usize) -> TextEncoderShape {
    TextEncoderShape {
        vocab,
        embed: config.embed,
        filters: config.filters,
        max_len: config.max_len,
        out: config.dim,
    }
}
