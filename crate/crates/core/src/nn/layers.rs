//! Fixed layers of the dialog manager with hand-written backward passes.

use rand::Rng;

use super::params::{glorot, Gradients, ParamId, ParamSet};
use super::tensor::{add_acc, matvec, matvec_t_acc, outer_acc, sigmoid, Real, Tensor};
use crate::error::{Error, Result};

fn check_len<T>(context: &str, v: &[T], expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::shape(context, &[expected], &[v.len()]));
    }
    Ok(())
}

/// `y = W x (+ b)`
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    weight: ParamId,
    bias: Option<ParamId>,
}

impl Linear {
    pub fn register<T: Real, R: Rng + ?Sized>(
        params: &mut ParamSet<T>,
        rng: &mut R,
        name: &str,
        inputs: usize,
        outputs: usize,
        bias: bool,
    ) -> Result<Self> {
        let weight = params.insert(format!("{name}.weight"), glorot(rng, outputs, inputs))?;
        let bias = if bias {
            Some(params.insert(format!("{name}.bias"), Tensor::zeros(&[outputs]))?)
        } else {
            None
        };
        Ok(Self {
            inputs,
            outputs,
            weight,
            bias,
        })
    }

    pub fn attach<T: Real>(
        params: &ParamSet<T>,
        name: &str,
        inputs: usize,
        outputs: usize,
        bias: bool,
    ) -> Result<Self> {
        let weight = params.expect(&format!("{name}.weight"), &[outputs, inputs])?;
        let bias = if bias {
            Some(params.expect(&format!("{name}.bias"), &[outputs])?)
        } else {
            None
        };
        Ok(Self {
            inputs,
            outputs,
            weight,
            bias,
        })
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn forward<T: Real>(&self, params: &ParamSet<T>, x: &[T]) -> Result<Vec<T>> {
        check_len("linear input", x, self.inputs)?;
        let mut y = vec![T::zero(); self.outputs];
        matvec(params.value(self.weight).data(), self.outputs, self.inputs, x, &mut y);
        if let Some(b) = self.bias {
            add_acc(&mut y, params.value(b).data());
        }
        Ok(y)
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward<T: Real>(
        &self,
        params: &ParamSet<T>,
        x: &[T],
        dy: &[T],
        grads: &mut Gradients<T>,
    ) -> Vec<T> {
        outer_acc(grads.get_mut(self.weight), self.inputs, dy, x);
        if let Some(b) = self.bias {
            add_acc(grads.get_mut(b), dy);
        }
        let mut dx = vec![T::zero(); self.inputs];
        matvec_t_acc(params.value(self.weight).data(), self.inputs, dy, &mut dx);
        dx
    }
}

/// Single-layer GRU cell. Its output equals its new hidden state.
#[derive(Clone, Copy, Debug)]
pub struct Gru {
    pub dim: usize,
    w: [ParamId; 3],
    u: [ParamId; 3],
    b: [ParamId; 3],
}

const GATES: [&str; 3] = ["update", "reset", "candidate"];

/// Intermediate values of one GRU step, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct GruCache<T> {
    x: Vec<T>,
    h_prev: Vec<T>,
    z: Vec<T>,
    r: Vec<T>,
    rh: Vec<T>,
    cand: Vec<T>,
}

impl Gru {
    pub fn register<T: Real, R: Rng + ?Sized>(
        params: &mut ParamSet<T>,
        rng: &mut R,
        name: &str,
        dim: usize,
    ) -> Result<Self> {
        let mut ids = [[ParamId(0); 3]; 3];
        for (g, gate) in GATES.iter().enumerate() {
            ids[0][g] = params.insert(format!("{name}.{gate}.w"), glorot(rng, dim, dim))?;
            ids[1][g] = params.insert(format!("{name}.{gate}.u"), glorot(rng, dim, dim))?;
            ids[2][g] = params.insert(format!("{name}.{gate}.b"), Tensor::zeros(&[dim]))?;
        }
        Ok(Self {
            dim,
            w: ids[0],
            u: ids[1],
            b: ids[2],
        })
    }

    pub fn attach<T: Real>(params: &ParamSet<T>, name: &str, dim: usize) -> Result<Self> {
        let mut ids = [[ParamId(0); 3]; 3];
        for (g, gate) in GATES.iter().enumerate() {
            ids[0][g] = params.expect(&format!("{name}.{gate}.w"), &[dim, dim])?;
            ids[1][g] = params.expect(&format!("{name}.{gate}.u"), &[dim, dim])?;
            ids[2][g] = params.expect(&format!("{name}.{gate}.b"), &[dim])?;
        }
        Ok(Self {
            dim,
            w: ids[0],
            u: ids[1],
            b: ids[2],
        })
    }

    fn affine<T: Real>(&self, params: &ParamSet<T>, gate: usize, x: &[T], h: &[T]) -> Vec<T> {
        let d = self.dim;
        let mut a = params.value(self.b[gate]).data().to_vec();
        let mut tmp = vec![T::zero(); d];
        matvec(params.value(self.w[gate]).data(), d, d, x, &mut tmp);
        add_acc(&mut a, &tmp);
        matvec(params.value(self.u[gate]).data(), d, d, h, &mut tmp);
        add_acc(&mut a, &tmp);
        a
    }

    /// Returns the new hidden state `h` (which is also the cell output).
    pub fn step<T: Real>(
        &self,
        params: &ParamSet<T>,
        x: &[T],
        h_prev: &[T],
    ) -> Result<(Vec<T>, GruCache<T>)> {
        check_len("gru input", x, self.dim)?;
        check_len("gru hidden", h_prev, self.dim)?;
        let z: Vec<T> = self.affine(params, 0, x, h_prev).into_iter().map(sigmoid).collect();
        let r: Vec<T> = self.affine(params, 1, x, h_prev).into_iter().map(sigmoid).collect();
        let rh: Vec<T> = r.iter().zip(h_prev).map(|(a, b)| *a * *b).collect();
        let cand: Vec<T> = self.affine(params, 2, x, &rh).into_iter().map(T::tanh).collect();
        let h = (0..self.dim)
            .map(|i| (T::one() - z[i]) * h_prev[i] + z[i] * cand[i])
            .collect();
        let cache = GruCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            z,
            r,
            rh,
            cand,
        };
        Ok((h, cache))
    }

    /// Backpropagates `dL/dh`; returns `(dL/dx, dL/dh_prev)`.
    pub fn backward<T: Real>(
        &self,
        params: &ParamSet<T>,
        cache: &GruCache<T>,
        dh: &[T],
        grads: &mut Gradients<T>,
    ) -> (Vec<T>, Vec<T>) {
        let d = self.dim;
        let one = T::one();
        let mut dx = vec![T::zero(); d];
        let mut dh_prev: Vec<T> = (0..d).map(|i| dh[i] * (one - cache.z[i])).collect();

        let da_cand: Vec<T> = (0..d)
            .map(|i| dh[i] * cache.z[i] * (one - cache.cand[i] * cache.cand[i]))
            .collect();
        let da_z: Vec<T> = (0..d)
            .map(|i| dh[i] * (cache.cand[i] - cache.h_prev[i]) * cache.z[i] * (one - cache.z[i]))
            .collect();

        // candidate gate sees r ⊙ h_prev
        self.gate_backward(params, 2, &cache.x, &cache.rh, &da_cand, grads, &mut dx);
        let mut drh = vec![T::zero(); d];
        matvec_t_acc(params.value(self.u[2]).data(), d, &da_cand, &mut drh);
        let mut da_r = vec![T::zero(); d];
        for i in 0..d {
            dh_prev[i] += drh[i] * cache.r[i];
            da_r[i] = drh[i] * cache.h_prev[i] * cache.r[i] * (one - cache.r[i]);
        }

        for (gate, da) in [(0, &da_z), (1, &da_r)] {
            self.gate_backward(params, gate, &cache.x, &cache.h_prev, da, grads, &mut dx);
            matvec_t_acc(params.value(self.u[gate]).data(), d, da, &mut dh_prev);
        }
        (dx, dh_prev)
    }

    #[allow(clippy::too_many_arguments)]
    fn gate_backward<T: Real>(
        &self,
        params: &ParamSet<T>,
        gate: usize,
        x: &[T],
        h: &[T],
        da: &[T],
        grads: &mut Gradients<T>,
        dx: &mut [T],
    ) {
        let d = self.dim;
        outer_acc(grads.get_mut(self.w[gate]), d, da, x);
        outer_acc(grads.get_mut(self.u[gate]), d, da, h);
        add_acc(grads.get_mut(self.b[gate]), da);
        matvec_t_acc(params.value(self.w[gate]).data(), d, da, dx);
    }
}

/// Shape of the convolutional sentence encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TextEncoderShape {
    pub vocab: usize,
    pub embed: usize,
    pub filters: usize,
    pub max_len: usize,
    pub out: usize,
}

pub const CONV_WIDTHS: [usize; 3] = [2, 3, 4];

/// Word embedding, 1-D convolutions of widths 2/3/4 with ReLU and
/// max-over-time pooling, then a linear map to the output width.
#[derive(Clone, Copy, Debug)]
pub struct TextEncoder {
    pub shape: TextEncoderShape,
    embed: ParamId,
    conv_w: [ParamId; 3],
    conv_b: [ParamId; 3],
    proj: Linear,
}

#[derive(Clone, Debug)]
pub struct TextCache<T> {
    tokens: Vec<u32>,
    /// Window start of the pooled maximum per (width, filter); `None` when the
    /// rectified maximum is zero and no gradient flows.
    argmax: Vec<Option<usize>>,
    pooled: Vec<T>,
}

impl TextEncoder {
    pub fn register<T: Real, R: Rng + ?Sized>(
        params: &mut ParamSet<T>,
        rng: &mut R,
        name: &str,
        shape: TextEncoderShape,
    ) -> Result<Self> {
        Self::check_shape(&shape)?;
        let embed = params.insert(format!("{name}.embed"), glorot(rng, shape.vocab, shape.embed))?;
        let mut conv_w = [ParamId(0); 3];
        let mut conv_b = [ParamId(0); 3];
        for (k, w) in CONV_WIDTHS.iter().enumerate() {
            conv_w[k] = params.insert(
                format!("{name}.conv{w}.weight"),
                glorot(rng, shape.filters, w * shape.embed),
            )?;
            conv_b[k] = params.insert(format!("{name}.conv{w}.bias"), Tensor::zeros(&[shape.filters]))?;
        }
        let proj = Linear::register(
            params,
            rng,
            &format!("{name}.proj"),
            CONV_WIDTHS.len() * shape.filters,
            shape.out,
            true,
        )?;
        Ok(Self {
            shape,
            embed,
            conv_w,
            conv_b,
            proj,
        })
    }

    pub fn attach<T: Real>(params: &ParamSet<T>, name: &str, shape: TextEncoderShape) -> Result<Self> {
        Self::check_shape(&shape)?;
        let embed = params.expect(&format!("{name}.embed"), &[shape.vocab, shape.embed])?;
        let mut conv_w = [ParamId(0); 3];
        let mut conv_b = [ParamId(0); 3];
        for (k, w) in CONV_WIDTHS.iter().enumerate() {
            conv_w[k] = params.expect(&format!("{name}.conv{w}.weight"), &[shape.filters, w * shape.embed])?;
            conv_b[k] = params.expect(&format!("{name}.conv{w}.bias"), &[shape.filters])?;
        }
        let proj = Linear::attach(
            params,
            &format!("{name}.proj"),
            CONV_WIDTHS.len() * shape.filters,
            shape.out,
            true,
        )?;
        Ok(Self {
            shape,
            embed,
            conv_w,
            conv_b,
            proj,
        })
    }

    fn check_shape(shape: &TextEncoderShape) -> Result<()> {
        let max_width = CONV_WIDTHS[CONV_WIDTHS.len() - 1];
        if shape.max_len < max_width {
            return Err(Error::Config(format!(
                "max sequence length {} is shorter than the widest filter {max_width}",
                shape.max_len
            )));
        }
        if shape.vocab == 0 || shape.embed == 0 || shape.filters == 0 || shape.out == 0 {
            return Err(Error::Config("text encoder dimensions must be positive".into()));
        }
        Ok(())
    }

    /// Pads with id 0 or truncates to the fixed sequence length.
    fn fit(&self, tokens: &[u32]) -> Result<Vec<u32>> {
        if let Some(&id) = tokens.iter().find(|&&t| t as usize >= self.shape.vocab) {
            return Err(Error::OutOfVocabulary {
                id,
                vocab: self.shape.vocab,
            });
        }
        let mut fitted: Vec<u32> = tokens.iter().copied().take(self.shape.max_len).collect();
        fitted.resize(self.shape.max_len, 0);
        Ok(fitted)
    }

    pub fn forward<T: Real>(&self, params: &ParamSet<T>, tokens: &[u32]) -> Result<(Vec<T>, TextCache<T>)> {
        let tokens = self.fit(tokens)?;
        let e = self.shape.embed;
        let f = self.shape.filters;
        let embed = params.value(self.embed);
        // contiguous [len * e] so a window is a single slice
        let mut seq = Vec::with_capacity(tokens.len() * e);
        for &t in &tokens {
            seq.extend_from_slice(embed.row(t as usize));
        }

        let mut pooled = vec![T::zero(); CONV_WIDTHS.len() * f];
        let mut argmax = vec![None; CONV_WIDTHS.len() * f];
        for (k, &w) in CONV_WIDTHS.iter().enumerate() {
            let weight = params.value(self.conv_w[k]).data();
            let bias = params.value(self.conv_b[k]).data();
            let span = w * e;
            for start in 0..=(tokens.len() - w) {
                let window = &seq[start * e..start * e + span];
                for j in 0..f {
                    let a = bias[j] + super::tensor::dot(&weight[j * span..(j + 1) * span], window);
                    // ReLU then max: only strictly positive activations can win
                    let slot = k * f + j;
                    if a > pooled[slot] {
                        pooled[slot] = a;
                        argmax[slot] = Some(start);
                    }
                }
            }
        }
        let out = self.proj.forward(params, &pooled)?;
        Ok((
            out,
            TextCache {
                tokens,
                argmax,
                pooled,
            },
        ))
    }

    pub fn backward<T: Real>(
        &self,
        params: &ParamSet<T>,
        cache: &TextCache<T>,
        dout: &[T],
        grads: &mut Gradients<T>,
    ) {
        let e = self.shape.embed;
        let f = self.shape.filters;
        let dpooled = self.proj.backward(params, &cache.pooled, dout, grads);
        let embed = params.value(self.embed);
        for (k, &w) in CONV_WIDTHS.iter().enumerate() {
            let span = w * e;
            let weight = params.value(self.conv_w[k]).data();
            for j in 0..f {
                let slot = k * f + j;
                let Some(start) = cache.argmax[slot] else {
                    continue;
                };
                let g = dpooled[slot];
                if g == T::zero() {
                    continue;
                }
                grads.get_mut(self.conv_b[k])[j] += g;
                let dw = &mut grads.get_mut(self.conv_w[k])[j * span..(j + 1) * span];
                for p in 0..w {
                    let row = embed.row(cache.tokens[start + p] as usize);
                    for c in 0..e {
                        dw[p * e + c] += g * row[c];
                    }
                }
                let demb = grads.get_mut(self.embed);
                for p in 0..w {
                    let tok = cache.tokens[start + p] as usize;
                    for c in 0..e {
                        demb[tok * e + c] += g * weight[j * span + p * e + c];
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_keep_zero_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = ParamSet::<f64>::new();
        let gru = Gru::register(&mut p, &mut rng, "gru", 4).unwrap();
        for id in p.ids().collect::<Vec<_>>() {
            p.value_mut(id).fill(0.0);
        }
        let (h, cache) = gru.step(&p, &[1.0, -2.0, 3.0, 0.5], &[0.0; 4]).unwrap();
        assert_eq!(h, vec![0.0; 4]);
        assert!(cache.z.iter().all(|&z| z == 0.5));
    }

    #[test]
    fn gru_rejects_wrong_widths() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = ParamSet::<f32>::new();
        let gru = Gru::register(&mut p, &mut rng, "gru", 4).unwrap();
        assert!(matches!(gru.step(&p, &[0.0; 3], &[0.0; 4]), Err(Error::Shape { .. })));
        assert!(matches!(gru.step(&p, &[0.0; 4], &[0.0; 5]), Err(Error::Shape { .. })));
    }

    #[test]
    fn hidden_state_from_zero_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = ParamSet::<f32>::new();
        let gru = Gru::register(&mut p, &mut rng, "gru", 8).unwrap();
        // exaggerate weights so the gates saturate
        for id in p.ids().collect::<Vec<_>>() {
            p.value_mut(id).data_mut().iter_mut().for_each(|v| *v *= 5.0);
        }
        let mut h = vec![0.0f32; 8];
        for _ in 0..100 {
            let x: Vec<f32> = (0..8).map(|_| rng.random_range(-10.0..10.0)).collect();
            h = gru.step(&p, &x, &h).unwrap().0;
            assert!(h.iter().all(|v| v.abs() <= 1.0));
        }
    }

    fn tiny_text(vocab: usize) -> (ParamSet<f32>, TextEncoder) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = ParamSet::new();
        let shape = TextEncoderShape {
            vocab,
            embed: 8,
            filters: 4,
            max_len: 16,
            out: 8,
        };
        let enc = TextEncoder::register(&mut p, &mut rng, "text", shape).unwrap();
        (p, enc)
    }

    #[test]
    fn text_encoder_shape_and_determinism() {
        let (p, enc) = tiny_text(20);
        let pad = vec![0u32; 16];
        let (a, _) = enc.forward(&p, &pad).unwrap();
        let (b, _) = enc.forward(&p, &pad).unwrap();
        assert_eq!(a, b);
        for len in [0, 1, 5, 16, 40] {
            let toks: Vec<u32> = (0..len).map(|i| (i % 20) as u32).collect();
            assert_eq!(enc.forward(&p, &toks).unwrap().0.len(), 8);
        }
    }

    #[test]
    fn text_encoder_rejects_out_of_vocabulary() {
        let (p, enc) = tiny_text(20);
        assert!(matches!(
            enc.forward(&p, &[3, 20]),
            Err(Error::OutOfVocabulary { id: 20, vocab: 20 })
        ));
    }
}
