use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::FeedbackConfig;
use crate::manager::ManagerConfig;
use crate::training::TrainConfig;

/// Per-turn mean and standard deviation of the ranking percentile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_id: String,
    pub horizon: usize,
    pub episodes: usize,
    pub seed: u64,
    /// Indexed by turn − 1.
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl EvalReport {
    pub fn final_mean(&self) -> f64 {
        self.mean.last().copied().unwrap_or(0.0)
    }

    /// True iff the per-turn means never decrease.
    pub fn is_monotone(&self) -> bool {
        self.mean.windows(2).all(|w| w[1] >= w[0])
    }

    /// Non-decreasing except for at most `allowed` drops, each no larger than `tolerance`.
    pub fn is_nearly_monotone(&self, tolerance: f64, allowed: usize) -> bool {
        let drops: Vec<f64> = self
            .mean
            .windows(2)
            .filter(|w| w[1] < w[0])
            .map(|w| w[0] - w[1])
            .collect();
        drops.len() <= allowed && drops.iter().all(|d| *d <= tolerance)
    }
}

/// Provenance of a training or evaluation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_id: String,
    pub corpus: Option<PathBuf>,
    pub corpus_seed: u64,
    pub corpus_size: usize,
    pub grammar: Option<PathBuf>,
    pub feature_seed: u64,
    pub manager: ManagerConfig,
    pub feedback: FeedbackConfig,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub init_checkpoint: Option<PathBuf>,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    #[serde(default)]
    pub metrics: Option<PathBuf>,
    #[serde(default)]
    pub report: Option<EvalReport>,
}

impl RunManifest {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(Error::json)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(Error::json)
    }
}

pub const COMPARE_HEADER: &str = "config,turn,mean,std,episodes,diff_from_first";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub config: String,
    pub turn: usize,
    pub mean: f64,
    pub std: f64,
    pub episodes: usize,
    /// Difference to the first report at the same turn.
    pub diff_from_first: f64,
}

/// Aligns the per-turn means of every manifest's report, one row per
/// (config, turn), in input order.
pub fn compare(manifests: &[RunManifest]) -> Result<Vec<CompareRow>> {
    let reports = manifests
        .iter()
        .map(|m| {
            m.report
                .as_ref()
                .ok_or_else(|| Error::Config(format!("manifest `{}` has no evaluation report", m.config_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    let Some(first) = reports.first() else {
        return Ok(Vec::new());
    };
    if let Some(bad) = reports.iter().find(|r| r.horizon != first.horizon) {
        return Err(Error::Config(format!(
            "horizon mismatch: `{}` has T={} but `{}` has T={}",
            first.config_id, first.horizon, bad.config_id, bad.horizon
        )));
    }
    let mut rows = Vec::with_capacity(reports.len() * first.horizon);
    for r in &reports {
        for t in 0..r.horizon {
            rows.push(CompareRow {
                config: r.config_id.clone(),
                turn: t + 1,
                mean: r.mean[t],
                std: r.std[t],
                episodes: r.episodes,
                diff_from_first: r.mean[t] - first.mean[t],
            });
        }
    }
    Ok(rows)
}

pub fn compare_csv(rows: &[CompareRow]) -> Result<String> {
    to_csv(COMPARE_HEADER, rows)
}

pub const CURVE_HEADER: &str = "turn,mean,std,monotonic";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub turn: usize,
    pub mean: f64,
    pub std: f64,
    /// Same on every row: whether the whole curve is non-decreasing.
    pub monotonic: bool,
}

/// Plot data behind a percentile-vs-turn curve.
pub fn turn_curve_csv(report: &EvalReport) -> Result<String> {
    let monotonic = report.is_monotone();
    let points: Vec<CurvePoint> = (0..report.horizon)
        .map(|t| CurvePoint {
            turn: t + 1,
            mean: report.mean[t],
            std: report.std[t],
            monotonic,
        })
        .collect();
    to_csv(CURVE_HEADER, &points)
}

pub fn parse_turn_curve(text: &str) -> Result<Vec<CurvePoint>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != CURVE_HEADER {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: format!("expected header `{CURVE_HEADER}`, found `{header}`"),
        });
    }
    Ok(reader.deserialize().collect::<std::result::Result<_, _>>()?)
}

fn to_csv<R: Serialize>(header: &str, rows: &[R]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let body = w.into_inner().map_err(|e| Error::io("csv buffer", e.into_error()))?;
    Ok(format!("{header}\n{}", String::from_utf8_lossy(&body)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(id: &str, mean: Vec<f64>) -> EvalReport {
        EvalReport {
            config_id: id.into(),
            horizon: mean.len(),
            episodes: 10,
            seed: 0,
            std: vec![0.1; mean.len()],
            mean,
        }
    }

    fn manifest(r: EvalReport) -> RunManifest {
        RunManifest {
            config_id: r.config_id.clone(),
            corpus: None,
            corpus_seed: 0,
            corpus_size: 1200,
            grammar: None,
            feature_seed: 0,
            manager: ManagerConfig::default(),
            feedback: FeedbackConfig::default(),
            train: None,
            init_checkpoint: None,
            checkpoint: None,
            metrics: None,
            report: Some(r),
        }
    }

    #[test]
    fn monotone_flags() {
        assert!(report("a", vec![0.5, 0.6, 0.6, 0.9]).is_monotone());
        let dip = report("b", vec![0.5, 0.6, 0.595, 0.9]);
        assert!(!dip.is_monotone());
        assert!(dip.is_nearly_monotone(0.01, 1));
        assert!(!dip.is_nearly_monotone(0.001, 1));
        assert!(!report("c", vec![0.5, 0.49, 0.6, 0.59]).is_nearly_monotone(0.01, 1));
    }

    #[test]
    fn identical_runs_have_zero_difference() {
        let a = manifest(report("sl", vec![0.5, 0.7, 0.8]));
        let rows = compare(&[a.clone(), a]).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.diff_from_first == 0.0));
    }

    #[test]
    fn horizon_mismatch_is_an_error() {
        let a = manifest(report("a", vec![0.5, 0.7, 0.8]));
        let b = manifest(report("b", vec![0.5, 0.7]));
        assert!(matches!(compare(&[a, b]), Err(Error::Config(_))));
    }

    #[test]
    fn compare_golden() {
        let rows = compare(&[
            manifest(report("sl", vec![0.5, 0.75])),
            manifest(report("ours", vec![0.5, 1.0])),
        ])
        .unwrap();
        let expected = "config,turn,mean,std,episodes,diff_from_first\n\
                        sl,1,0.5,0.1,10,0.0\n\
                        sl,2,0.75,0.1,10,0.0\n\
                        ours,1,0.5,0.1,10,0.0\n\
                        ours,2,1.0,0.1,10,0.25\n";
        assert_eq!(compare_csv(&rows).unwrap(), expected);
    }

    #[test]
    fn curve_round_trip() {
        let r = report("x", vec![0.51, 0.625, 0.7]);
        let csv = turn_curve_csv(&r).unwrap();
        assert!(csv.starts_with("turn,mean,std,monotonic\n1,0.51,0.1,true\n"));
        let points = parse_turn_curve(&csv).unwrap();
        assert_eq!(points.len(), 3);
        assert_eq!(points[1].mean, 0.625);
        assert!(points.iter().all(|p| p.monotonic));
        assert!(parse_turn_curve("a,b\n1,2\n").is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        let m = manifest(report("nl", vec![0.5, 0.9]));
        m.save(&path).unwrap();
        assert_eq!(RunManifest::load(&path).unwrap(), m);
    }
}
