use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Phase, TrainConfig};
use super::objectives::{nll_episode, triplet_episode};
use super::reward::compute_return;
use super::value::best_action;
use crate::corpus::{FeatureBank, ItemId};
use crate::error::{Error, Result};
use crate::feedback::FeedbackSource;
use crate::manager::{first_candidate, rollout, DialogManager, EpisodeOptions, Rollout, SelectionMode};
use crate::nn::{save_checkpoint, Gradients, OptimizerState};
use crate::seed::combine;

/// What a trainer needs besides the model: the training bank (also the
/// candidate pool), a simulated user and the episode shape.
#[derive(Clone, Copy)]
pub struct TrainEnv<'a> {
    pub bank: &'a FeatureBank,
    pub feedback: &'a dyn FeedbackSource,
    pub options: EpisodeOptions,
}

/// Everything that determines one training episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSeed {
    pub target: ItemId,
    pub first: ItemId,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    /// Mean reward over every turn of the batch's rollouts.
    pub mean_percentile: f64,
}

fn mean_reward(rollouts: &[Rollout<f32>]) -> f64 {
    let (sum, n) = rollouts
        .iter()
        .flat_map(|r| &r.rewards)
        .fold((0.0, 0usize), |(s, n), r| (s + r, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn stochastic_rollout(manager: &DialogManager, env: &TrainEnv, episode: &EpisodeSeed, rng: &mut ChaCha8Rng) -> Result<Rollout<f32>> {
    rollout(manager, env.bank, env.feedback, episode.target, episode.first, &env.options, |_, d| {
        Ok(d.select(SelectionMode::Stochastic, rng))
    })
}

/// Uniform bank item other than `target`.
fn negative(bank: &FeatureBank, target: ItemId, rng: &mut ChaCha8Rng) -> ItemId {
    loop {
        let id = bank.ids()[rng.random_range(0..bank.len())];
        if id != target || bank.len() == 1 {
            return id;
        }
    }
}

/// Mean over the batch of `Σ_t` triplet loss against a fresh random negative
/// per turn; gradients go into `grads`.
pub fn sl_batch(
    manager: &DialogManager,
    env: &TrainEnv,
    batch: &[EpisodeSeed],
    margin: f64,
    grads: &mut Gradients<f32>,
) -> Result<StepStats> {
    let weight = 1.0 / batch.len() as f32;
    let mut loss = 0.0;
    let mut rollouts = Vec::with_capacity(batch.len());
    for episode in batch {
        let mut rng = ChaCha8Rng::seed_from_u64(episode.seed);
        let r = stochastic_rollout(manager, env, episode, &mut rng)?;
        let negatives: Vec<ItemId> = (0..r.states.len()).map(|_| negative(env.bank, episode.target, &mut rng)).collect();
        loss += triplet_episode(manager, env.bank, &r, &negatives, margin as f32, weight, grads)? as f64;
        rollouts.push(r);
    }
    Ok(StepStats {
        loss,
        mean_percentile: mean_reward(&rollouts),
    })
}

/// One improvement episode: the next candidate is the look-ahead best action
/// with probability `1 − ε` and a policy sample otherwise. Returns the rollout
/// and the best action at every turn that has a next candidate.
pub fn improvement_episode(
    manager: &DialogManager,
    env: &TrainEnv,
    episode: &EpisodeSeed,
    gamma: f64,
    epsilon: f64,
) -> Result<(Rollout<f32>, Vec<ItemId>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(episode.seed);
    let mut labels = Vec::with_capacity(env.options.horizon);
    let r = rollout(manager, env.bank, env.feedback, episode.target, episode.first, &env.options, |state, dist| {
        let (best, _) = best_action(manager, env.bank, env.feedback, episode.target, state, dist, &env.options, gamma)?;
        labels.push(best);
        Ok(if rng.random::<f64>() < epsilon {
            dist.select(SelectionMode::Stochastic, &mut rng)
        } else {
            best
        })
    })?;
    Ok((r, labels))
}

/// Mean over the batch of `Σ_t −log π(a*_t | h_t)`.
pub fn improvement_batch(
    manager: &DialogManager,
    env: &TrainEnv,
    batch: &[EpisodeSeed],
    gamma: f64,
    epsilon: f64,
    grads: &mut Gradients<f32>,
) -> Result<StepStats> {
    let weight = 1.0 / batch.len() as f32;
    let mut loss = 0.0;
    let mut rollouts = Vec::with_capacity(batch.len());
    for episode in batch {
        let (r, labels) = improvement_episode(manager, env, episode, gamma, epsilon)?;
        loss += nll_episode(manager, env.bank, &r, &labels, weight, grads)? as f64;
        rollouts.push(r);
    }
    Ok(StepStats {
        loss,
        mean_percentile: mean_reward(&rollouts),
    })
}

/// Self-critical surrogate `(u − û) Σ_t −log π(a_{t+1} | h_t)` with the greedy
/// return `û` from the same target and first candidate as baseline.
pub fn scst_batch(
    manager: &DialogManager,
    env: &TrainEnv,
    batch: &[EpisodeSeed],
    gamma: f64,
    grads: &mut Gradients<f32>,
) -> Result<StepStats> {
    let weight = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut rollouts = Vec::with_capacity(batch.len());
    for episode in batch {
        let mut rng = ChaCha8Rng::seed_from_u64(episode.seed);
        let sampled = stochastic_rollout(manager, env, episode, &mut rng)?;
        let greedy = rollout(manager, env.bank, env.feedback, episode.target, episode.first, &env.options, |_, d| {
            Ok(d.argmax())
        })?;
        let advantage = compute_return(&sampled.rewards, gamma) - compute_return(&greedy.rewards, gamma);
        if advantage != 0.0 {
            let coef = (advantage * weight) as f32;
            loss += nll_episode(manager, env.bank, &sampled, &sampled.actions[1..], coef, grads)? as f64;
        }
        rollouts.push(sampled);
    }
    Ok(StepStats {
        loss,
        mean_percentile: mean_reward(&rollouts),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchMetrics {
    pub phase: Phase,
    pub epoch: usize,
    pub batch: usize,
    pub loss: f64,
    pub mean_percentile: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_percentile: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs: Vec<EpochMetrics>,
    pub batches: Vec<BatchMetrics>,
    pub checkpoints: Vec<PathBuf>,
    pub metrics: Option<PathBuf>,
}

impl TrainSummary {
    pub fn loss_curve(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.mean_loss).collect()
    }
}

/// Runs one phase: epochs of shuffled episodes, one optimizer step per batch.
pub struct Trainer<'a> {
    env: TrainEnv<'a>,
    config: TrainConfig,
    manager: DialogManager,
    optimizer: OptimizerState,
    last_checkpoint: Option<PathBuf>,
}

impl<'a> Trainer<'a> {
    pub fn new(manager: DialogManager, env: TrainEnv<'a>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        env.options.validate()?;
        if env.options.horizon != config.horizon {
            return Err(Error::Config(format!(
                "episode horizon {} differs from training horizon {}",
                env.options.horizon, config.horizon
            )));
        }
        if env.bank.len() < 2 {
            return Err(Error::NotEnoughItems {
                needed: 2,
                available: env.bank.len(),
            });
        }
        let optimizer = OptimizerState::new(config.optimizer(), manager.params());
        Ok(Self {
            env,
            config,
            manager,
            optimizer,
            last_checkpoint: None,
        })
    }

    pub fn manager(&self) -> &DialogManager {
        &self.manager
    }

    pub fn into_manager(self) -> DialogManager {
        self.manager
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Episodes of `epoch`: every bank item as target in shuffled order,
    /// cycled to `episodes_per_epoch`.
    pub fn epoch_plan(&self, epoch: usize) -> Vec<EpisodeSeed> {
        let phase = self.config.phase as u64 + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(combine(self.config.seed, combine(phase, epoch as u64)));
        let mut targets = self.env.bank.ids().to_vec();
        targets.shuffle(&mut rng);
        (0..self.config.episodes_per_epoch)
            .map(|i| EpisodeSeed {
                target: targets[i % targets.len()],
                first: first_candidate(self.env.bank, &mut rng),
                seed: rng.random(),
            })
            .collect()
    }

    /// Computes the batch gradient and applies one optimizer step.
    pub fn step(&mut self, batch: &[EpisodeSeed]) -> Result<StepStats> {
        let mut grads = self.manager.params().zeros_like_grads();
        let env = self.env;
        let cfg = &self.config;
        let stats = match cfg.phase {
            Phase::Sl => sl_batch(&self.manager, &env, batch, cfg.margin, &mut grads)?,
            Phase::Mbpi => improvement_batch(&self.manager, &env, batch, cfg.gamma, cfg.epsilon, &mut grads)?,
            Phase::Scst => scst_batch(&self.manager, &env, batch, cfg.gamma, &mut grads)?,
        };
        if !stats.loss.is_finite() {
            return Err(self.non_finite(format!("loss {}", stats.loss)));
        }
        let params = self.manager.params_mut();
        params.zero_grad();
        params.accumulate(&grads);
        match self.optimizer.step(params) {
            Err(Error::NonFiniteGradient(name)) => Err(self.non_finite(format!("gradient of {name}"))),
            other => other.map(|_| stats),
        }
    }

    fn non_finite(&self, what: String) -> Error {
        let last = match &self.last_checkpoint {
            Some(p) => format!("last good checkpoint {}", p.display()),
            None => "no checkpoint written yet".to_string(),
        };
        Error::NonFiniteLoss(format!("{} phase: non-finite {what}; {last}", self.config.phase.name()))
    }

    pub fn run_epoch(&mut self, epoch: usize) -> Result<Vec<BatchMetrics>> {
        let plan = self.epoch_plan(epoch);
        let mut out = Vec::new();
        for (b, batch) in plan.chunks(self.config.batch_size).enumerate() {
            let stats = self.step(batch)?;
            out.push(BatchMetrics {
                phase: self.config.phase,
                epoch,
                batch: b,
                loss: stats.loss,
                mean_percentile: stats.mean_percentile,
            });
        }
        Ok(out)
    }

    /// Trains for the configured number of epochs. With `out_dir`, writes
    /// `metrics.csv` and one checkpoint per epoch.
    pub fn run(&mut self, out_dir: Option<&Path>) -> Result<TrainSummary> {
        let mut summary = TrainSummary::default();
        let mut writer = match out_dir {
            Some(dir) => {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                let path = dir.join(format!("metrics-{}.csv", self.config.phase.name()));
                let w = csv::Writer::from_path(&path)?;
                summary.metrics = Some(path);
                Some(w)
            }
            None => None,
        };
        for epoch in 1..=self.config.epochs() {
            let batches = self.run_epoch(epoch)?;
            if let Some(w) = writer.as_mut() {
                for row in &batches {
                    w.serialize(row)?;
                }
                w.flush().map_err(|e| Error::io("metrics", e))?;
            }
            let n = batches.len() as f64;
            summary.epochs.push(EpochMetrics {
                epoch,
                mean_loss: batches.iter().map(|b| b.loss).sum::<f64>() / n,
                mean_percentile: batches.iter().map(|b| b.mean_percentile).sum::<f64>() / n,
            });
            summary.batches.extend(batches);
            if let Some(dir) = out_dir {
                let path = dir.join(format!("{}-epoch{:03}.ckpt", self.config.phase.name(), epoch));
                save_checkpoint(self.manager.params(), &path)?;
                self.last_checkpoint = Some(path.clone());
                summary.checkpoints.push(path);
            }
        }
        Ok(summary)
    }
}

/// Supervised pre-training with the default optimizer for the phase.
pub fn pretrain_sl(manager: DialogManager, env: TrainEnv, config: TrainConfig) -> Result<(DialogManager, TrainSummary)> {
    let config = TrainConfig {
        phase: Phase::Sl,
        ..config
    };
    let mut trainer = Trainer::new(manager, env, config)?;
    let summary = trainer.run(None)?;
    Ok((trainer.into_manager(), summary))
}
