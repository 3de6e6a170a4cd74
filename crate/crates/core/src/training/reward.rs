use serde::{Deserialize, Serialize};

use crate::corpus::{FeatureBank, ItemId};
use crate::error::{Error, Result};
use crate::nn::{distance_to_row, l2_distance, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardSpec {
    pub gamma: f64,
    pub horizon: usize,
}

impl Default for RewardSpec {
    fn default() -> Self {
        Self { gamma: 1.0, horizon: 5 }
    }
}

impl RewardSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("discount {} not in [0, 1]", self.gamma)));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        Ok(())
    }
}

/// Ranking percentile of `target` when the bank is sorted by distance to `s`:
/// `(N - rank) / (N - 1)`, rank 1 being the nearest. Rows at exactly the
/// target's distance rank ahead of it when their id is lower.
pub fn ranking_percentile<T: Real>(s: &[T], bank: &FeatureBank, target: ItemId) -> Result<f64> {
    let n = bank.len();
    if n < 2 {
        return Err(Error::NotEnoughItems { needed: 2, available: n });
    }
    let t_row = bank.row_index(target).ok_or(Error::InvalidItem(target))?;
    let dist = |r: usize| distance_to_row(s, bank.row(r));
    let d_target = dist(t_row);
    let ahead = (0..n)
        .filter(|&r| r != t_row)
        .filter(|&r| {
            let d = dist(r);
            d < d_target || (d == d_target && bank.ids()[r] < target)
        })
        .count();
    let rank = 1 + ahead;
    Ok((n - rank) as f64 / (n - 1) as f64)
}

/// `Σ_t γ^(t-1) r_t`.
pub fn compute_return(rewards: &[f64], gamma: f64) -> f64 {
    let mut discount = 1.0;
    let mut total = 0.0;
    for r in rewards {
        total += discount * r;
        discount *= gamma;
    }
    total
}

/// Hinge triplet loss `max(0, ‖s−x⁺‖ − ‖s−x⁻‖ + m)` and its gradient w.r.t. `s`
/// (`None` when the hinge is inactive).
pub fn triplet_loss<T: Real>(s: &[T], positive: &[T], negative: &[T], margin: T) -> (T, Option<Vec<T>>) {
    let dp = l2_distance(s, positive);
    let dn = l2_distance(s, negative);
    let loss = dp - dn + margin;
    if loss <= T::zero() {
        return (T::zero(), None);
    }
    let eps = T::of(1e-12);
    let grad = s
        .iter()
        .zip(positive.iter().zip(negative))
        .map(|(&si, (&p, &q))| {
            let gp = if dp > eps { (si - p) / dp } else { T::zero() };
            let gn = if dn > eps { (si - q) / dn } else { T::zero() };
            gp - gn
        })
        .collect();
    (loss, Some(grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Corpus, FeatureEncoder};

    #[test]
    fn returns() {
        assert!((compute_return(&[0.2, 0.3, 0.5], 1.0) - 1.0).abs() < 1e-12);
        assert_eq!(compute_return(&[0.7, 0.3, 0.5], 0.0), 0.7);
        assert_eq!(compute_return(&[1.0, 1.0, 1.0], 0.5), 1.75);
    }

    #[test]
    fn triplet_cases() {
        let m = 0.1f64;
        let (l, g) = triplet_loss(&[0.3, -0.2], &[1.0, 1.0], &[1.0, 1.0], m);
        assert!((l - m).abs() < 1e-12);
        assert!(g.is_some());
        let (l, g) = triplet_loss(&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.5], m);
        assert_eq!(l, 0.0);
        assert!(g.is_none());
        let (l, _) = triplet_loss(&[0.0, 0.0], &[1.0, 0.0], &[0.0, 3.0], m);
        assert_eq!(l, 0.0);
    }

    #[test]
    fn percentile_extremes() {
        let corpus = Corpus::generate(0, 50, 0.5).unwrap();
        let bank = FeatureBank::build(&corpus, &FeatureEncoder::new(8, 0));
        for target in [0, 7, 49] {
            let at_target: Vec<f32> = bank.feature(target).unwrap().to_vec();
            assert_eq!(ranking_percentile(&at_target, &bank, target).unwrap(), 1.0);
        }
        // far out along u, rows order by their projection onto u
        let u = [0.3f64, -0.1, 0.7, 0.2, -0.5, 0.1, 0.05, -0.3];
        let proj = |id: usize| -> f64 { bank.feature(id).unwrap().iter().zip(&u).map(|(a, b)| *a as f64 * b).sum() };
        let by_proj = |a: &usize, b: &usize| proj(*a).total_cmp(&proj(*b));
        let lowest = (0..50).min_by(by_proj).unwrap();
        let highest = (0..50).max_by(by_proj).unwrap();
        let far: Vec<f64> = u.iter().map(|v| v * 1e4).collect();
        assert_eq!(ranking_percentile(&far, &bank, lowest).unwrap(), 0.0);
        assert_eq!(ranking_percentile(&far, &bank, highest).unwrap(), 1.0);
        assert!(ranking_percentile(&[0.0f32; 8], &bank, 50).is_err());
    }

    #[test]
    fn percentile_needs_two_rows() {
        let corpus = Corpus::generate(0, 20, 0.5).unwrap();
        let bank = FeatureBank::build(&corpus, &FeatureEncoder::new(4, 0));
        let one = bank.subset(&[3]).unwrap();
        assert!(matches!(
            ranking_percentile(&[0.0f32; 4], &one, 3),
            Err(Error::NotEnoughItems { .. })
        ));
    }
}
