//! Fixtures, finite-difference cases and reference oracles shared by the
//! integration and acceptance tests.
#![allow(dead_code)]

use dmgr_core::corpus::{Corpus, FeatureBank, FeatureEncoder, ItemId, SplitKind};
use dmgr_core::feedback::{FeedbackConfig, FeedbackSource, Grammar, Simulator};
use dmgr_core::manager::{rollout, DialogManager, EpisodeOptions, ManagerConfig, SelectionMode};
use dmgr_core::nn::{grad_check, l2_distance, GradCheckReport, Gradients, Gru, ParamSet, TextEncoder, TextEncoderShape};
use dmgr_core::training::{nll_episode, replay, triplet_episode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GRAD_TOL: f64 = 1e-4;
const EPS: f64 = 1e-6;

// ---- finite differences at D=8 ----

fn small_manager(seed: u64, vocab: usize) -> DialogManager<f64> {
    let config = ManagerConfig {
        dim: 8,
        embed: 8,
        filters: 4,
        init_seed: seed,
        ..ManagerConfig::default()
    };
    let mut m = DialogManager::<f64>::new(config, vocab).unwrap();
    // nonzero biases so their gradients are exercised
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
    let ids: Vec<_> = m.params().ids().collect();
    for id in ids {
        if m.params().name(id).ends_with(".bias") || m.params().name(id).ends_with(".b") {
            for v in m.params_mut().value_mut(id).data_mut() {
                *v = rng.random_range(-0.3..0.3);
            }
        }
    }
    m
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn random_tokens(rng: &mut ChaCha8Rng, vocab: usize, max_len: usize) -> Vec<u32> {
    let len = rng.random_range(1..=max_len);
    (0..len).map(|_| rng.random_range(0..vocab as u32)).collect()
}

fn worst(report: GradCheckReport) -> (String, f64) {
    report.worst().cloned().unwrap_or_default()
}

pub struct GradWorld {
    bank: FeatureBank,
    sim: Simulator,
}

pub fn grad_world() -> GradWorld {
    let corpus = Corpus::generate(11, 40, 0.5).unwrap();
    let bank = FeatureBank::build(&corpus, &FeatureEncoder::new(8, 1))
        .subset(corpus.ids(SplitKind::Train))
        .unwrap();
    let sim = Simulator::new(&corpus, Grammar::default(), FeedbackConfig::default()).unwrap();
    GradWorld { bank, sim }
}

/// Worst relative error of each case, as `(parameter, error)`.
pub type GradCase = fn(&GradWorld, u64) -> (String, f64);

pub const GRAD_CASES: [(&str, GradCase); 6] = [
    ("gru tracker", gru_step),
    ("text encoder", text_encoder),
    ("response encoder", response_encoder),
    ("full pipeline", full_pipeline),
    ("triplet loss", triplet),
    ("scst surrogate", scst_surrogate),
];

pub fn gru_step(_: &GradWorld, seed: u64) -> (String, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::<f64>::new();
    let gru = Gru::register(&mut params, &mut rng, "gru", 4).unwrap();
    let x = random_vec(&mut rng, 4);
    let h0 = random_vec(&mut rng, 4);
    let w = random_vec(&mut rng, 4);
    // two steps so the recurrent path is exercised
    let report = grad_check(&params, 1e-4, |p| {
        let (h1, c1) = gru.step(p, &x, &h0)?;
        let (h2, c2) = gru.step(p, &x, &h1)?;
        let loss = h2.iter().zip(&w).map(|(a, b)| a * b).sum();
        let mut g = p.zeros_like_grads();
        let (_, dh1) = gru.backward(p, &c2, &w, &mut g);
        gru.backward(p, &c1, &dh1, &mut g);
        Ok((loss, g))
    })
    .unwrap();
    worst(report)
}

pub fn text_encoder(_: &GradWorld, seed: u64) -> (String, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = TextEncoderShape { vocab: 20, embed: 8, filters: 4, max_len: 16, out: 8 };
    let mut params = ParamSet::<f64>::new();
    let enc = TextEncoder::register(&mut params, &mut rng, "text", shape).unwrap();
    let tokens = random_tokens(&mut rng, 20, 16);
    let w = random_vec(&mut rng, 8);
    let report = grad_check(&params, EPS, |p| {
        let (out, cache) = enc.forward(p, &tokens)?;
        let loss = out.iter().zip(&w).map(|(a, b)| a * b).sum();
        let mut g = p.zeros_like_grads();
        enc.backward(p, &cache, &w, &mut g);
        Ok((loss, g))
    })
    .unwrap();
    worst(report)
}

pub fn response_encoder(w: &GradWorld, seed: u64) -> (String, f64) {
    let vocab = w.sim.vocab().len();
    let m = small_manager(seed, vocab);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let image = random_vec(&mut rng, 8);
    let tokens = random_tokens(&mut rng, vocab, 16);
    let anchor = random_vec(&mut rng, 8);
    let config = m.config().clone();
    let report = grad_check(m.params(), EPS, |p| {
        let m = DialogManager::from_params(config.clone(), vocab, p.clone())?;
        let (x, text, fused) = m.encode_response(&image, &tokens)?;
        let loss = l2_distance(&x, &anchor);
        let mut g = p.zeros_like_grads();
        let dx: Vec<f64> = x.iter().zip(&anchor).map(|(a, b)| (a - b) / loss).collect();
        m.backward_response(&text, &fused, &dx, &mut g);
        Ok((loss, g))
    })
    .unwrap();
    worst(report)
}

pub fn full_pipeline(w: &GradWorld, seed: u64) -> (String, f64) {
    let vocab = w.sim.vocab().len();
    let m = small_manager(seed, vocab);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let turns: Vec<(Vec<f64>, Vec<u32>)> = (0..3)
        .map(|_| (random_vec(&mut rng, 8), random_tokens(&mut rng, vocab, 16)))
        .collect();
    let anchor = random_vec(&mut rng, 8);
    let config = m.config().clone();
    let report = grad_check(m.params(), EPS, |p| {
        let m = DialogManager::from_params(config.clone(), vocab, p.clone())?;
        let mut h = vec![0.0; 8];
        let mut caches = Vec::new();
        let mut ds = Vec::new();
        let mut loss = 0.0;
        for (image, tokens) in &turns {
            let (s, h2, cache) = m.turn(&h, image, tokens)?;
            let d = l2_distance(&s, &anchor);
            loss += d;
            ds.push(s.iter().zip(&anchor).map(|(a, b)| (a - b) / d).collect());
            caches.push(cache);
            h = h2;
        }
        let mut g = p.zeros_like_grads();
        m.backward_episode(&caches, &ds, &mut g);
        Ok((loss, g))
    })
    .unwrap();
    worst(report)
}

fn sampled_actions(w: &GradWorld, m: &DialogManager<f64>, rng: &mut ChaCha8Rng) -> (ItemId, Vec<ItemId>) {
    let opts = EpisodeOptions::new(m.config(), 4);
    let ids = w.bank.ids();
    let target = ids[rng.random_range(0..ids.len())];
    let first = ids[rng.random_range(0..ids.len())];
    let actions = rollout(m, &w.bank, &w.sim, target, first, &opts, |_, d| Ok(d.select(SelectionMode::Stochastic, rng)))
        .unwrap()
        .actions;
    (target, actions)
}

pub fn triplet(w: &GradWorld, seed: u64) -> (String, f64) {
    let vocab = w.sim.vocab().len();
    let m = small_manager(seed, vocab);
    let opts = EpisodeOptions::new(m.config(), 4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (target, actions) = sampled_actions(w, &m, &mut rng);
    let ids = w.bank.ids();
    let negatives: Vec<_> = (0..4).map(|k| ids[(seed as usize + 3 * k) % ids.len()]).collect();
    let config = m.config().clone();
    let report = grad_check(m.params(), EPS, |p| {
        let m = DialogManager::from_params(config.clone(), vocab, p.clone())?;
        let r = replay(&m, &w.bank, &w.sim, target, &actions, &opts)?;
        let mut g = p.zeros_like_grads();
        // margin large enough that every hinge is active
        let loss = triplet_episode(&m, &w.bank, &r, &negatives, 5.0, 1.0, &mut g)?;
        Ok((loss, g))
    })
    .unwrap();
    worst(report)
}

pub fn scst_surrogate(w: &GradWorld, seed: u64) -> (String, f64) {
    let vocab = w.sim.vocab().len();
    let m = small_manager(seed, vocab);
    let opts = EpisodeOptions::new(m.config(), 4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (target, actions) = sampled_actions(w, &m, &mut rng);
    // frozen advantage
    let advantage = rng.random_range(-1.0..1.0);
    let config = m.config().clone();
    let report = grad_check(m.params(), EPS, |p| {
        let m = DialogManager::from_params(config.clone(), vocab, p.clone())?;
        let r = replay(&m, &w.bank, &w.sim, target, &actions, &opts)?;
        let mut g: Gradients<f64> = p.zeros_like_grads();
        let loss = nll_episode(&m, &w.bank, &r, &actions[1..], advantage, &mut g)?;
        Ok((loss, g))
    })
    .unwrap();
    worst(report)
}

// ---- reference oracles ----

pub fn bank(seed: u64, n: usize, dim: usize) -> (Corpus, FeatureBank) {
    let corpus = Corpus::generate(seed, n, 0.5).unwrap();
    let bank = FeatureBank::build(&corpus, &FeatureEncoder::new(dim, seed));
    (corpus, bank)
}

pub fn dist_f64(s: &[f64], row: &[f32]) -> f64 {
    s.iter().zip(row).map(|(a, b)| (a - *b as f64).powi(2)).sum::<f64>().sqrt()
}

/// Full sort of every eligible row, then softmax of the K smallest.
pub fn sort_oracle(s: &[f64], bank: &FeatureBank, k: usize, excluded: &[ItemId]) -> (Vec<ItemId>, Vec<f64>) {
    let mut all: Vec<(f64, ItemId)> = (0..bank.len())
        .filter(|&r| !excluded.contains(&bank.ids()[r]))
        .map(|r| (dist_f64(s, bank.row(r)), bank.ids()[r]))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.truncate(k);
    let w: Vec<f64> = all.iter().map(|(d, _)| (all[0].0 - d).exp()).collect();
    let z: f64 = w.iter().sum();
    (all.iter().map(|e| e.1).collect(), w.iter().map(|x| x / z).collect())
}

pub fn percentile_oracle(s: &[f64], bank: &FeatureBank, target: ItemId) -> f64 {
    let mut order: Vec<(f64, ItemId)> = (0..bank.len()).map(|r| (dist_f64(s, bank.row(r)), bank.ids()[r])).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let rank = 1 + order.iter().position(|e| e.1 == target).unwrap();
    let n = bank.len();
    (n - rank) as f64 / (n - 1) as f64
}

/// N=12 training bank, K=2, T=3, f64 model at D=8.
pub struct Tiny {
    pub bank: FeatureBank,
    pub sim: Simulator,
    pub manager: DialogManager<f64>,
    pub options: EpisodeOptions,
}

pub fn tiny(seed: u64) -> Tiny {
    let corpus = Corpus::generate(seed, 24, 0.5).unwrap();
    let bank = FeatureBank::build(&corpus, &FeatureEncoder::new(8, seed))
        .subset(corpus.ids(SplitKind::Train))
        .unwrap();
    assert_eq!(bank.len(), 12);
    let sim = Simulator::new(&corpus, Grammar::default(), FeedbackConfig::default()).unwrap();
    let config = ManagerConfig {
        dim: 8,
        embed: 8,
        filters: 4,
        top_k: 2,
        init_seed: seed,
        ..ManagerConfig::default()
    };
    let manager = DialogManager::<f64>::new(config.clone(), sim.vocab().len()).unwrap();
    Tiny {
        bank,
        sim,
        manager,
        options: EpisodeOptions::new(&config, 3),
    }
}

/// Recursive look-ahead written against the raw model API: show `action`,
/// score the state, then follow the nearest unseen item until the horizon.
pub fn q_oracle(w: &Tiny, target: ItemId, h: &[f64], shown: &[ItemId], turn: usize, action: ItemId, gamma: f64) -> f64 {
    let image: Vec<f64> = w.bank.feature(action).unwrap().iter().map(|&v| v as f64).collect();
    let tokens = w.sim.feedback(target, action).unwrap().tokens;
    let (s, h2, _) = w.manager.turn(h, &image, &tokens).unwrap();
    let r = percentile_oracle(&s, &w.bank, target);
    if turn == w.options.horizon {
        return r;
    }
    let mut seen = shown.to_vec();
    seen.push(action);
    let (ids, probs) = sort_oracle(&s, &w.bank, 2, &seen);
    let next = if probs[1] > probs[0] || (probs[1] == probs[0] && ids[1] < ids[0]) { ids[1] } else { ids[0] };
    r + gamma * q_oracle(w, target, &h2, &seen, turn + 1, next, gamma)
}

/// Desk-scale corpus (N=1200, D=64) split into training and test banks.
pub fn desk() -> (Corpus, FeatureBank, FeatureBank, Simulator) {
    let corpus = Corpus::generate(0, 1200, 1000.0 / 1200.0).unwrap();
    let full = FeatureBank::build(&corpus, &FeatureEncoder::new(64, 0));
    let train = full.subset(corpus.ids(SplitKind::Train)).unwrap();
    let test = full.subset(corpus.ids(SplitKind::Test)).unwrap();
    let sim = Simulator::new(&corpus, Grammar::default(), FeedbackConfig::default()).unwrap();
    (corpus, train, test, sim)
}
