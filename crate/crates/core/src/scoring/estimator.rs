//! The offline pairwise reward estimator: training on concatenated parent
//! embeddings, clamped prediction, and the versioned model file.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::OfflineSample;
use super::gbt::{GbtConfig, GradientBoostedTrees};
use super::ridge::RidgeRegression;
use super::threshold::threshold_fit;
use super::ScoringError;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressorConfig {
    Gbt(GbtConfig),
    Ridge { lambda: f64 },
}

impl Default for RegressorConfig {
    fn default() -> Self {
        Self::Gbt(GbtConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regressor {
    Constant { value: f64 },
    Gbt(GradientBoostedTrees),
    Ridge(RidgeRegression),
}

impl Regressor {
    pub fn predict_raw(&self, x: &[f64]) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::Gbt(m) => m.predict(x),
            Self::Ridge(m) => m.predict(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub sample_count: usize,
    pub train_count: usize,
    pub holdout_count: usize,
    pub train_mse: f64,
    pub holdout_mse: Option<f64>,
    /// MSE of predicting the training-label mean on the holdout split.
    pub holdout_baseline_mse: Option<f64>,
    pub holdout_pearson: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerModel {
    pub format_version: u32,
    pub embedder_id: String,
    /// Dimension of each of the two embeddings.
    pub dim: usize,
    pub threshold: f64,
    pub regressor: Regressor,
    pub training_report: TrainingReport,
}

fn features(sample: &OfflineSample) -> Vec<f64> {
    let mut x = Vec::with_capacity(sample.emb_i.len() + sample.emb_j.len());
    x.extend_from_slice(&sample.emb_i);
    x.extend_from_slice(&sample.emb_j);
    x
}

fn mse(pred: &[f64], labels: &[f64]) -> f64 {
    pred.iter().zip(labels).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / labels.len().max(1) as f64
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    if a.len() < 2 {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    (va > 0.0 && vb > 0.0).then(|| cov / (va.sqrt() * vb.sqrt()))
}

pub fn train_estimator(
    dataset: &[OfflineSample],
    embedder_id: &str,
    holdout_fraction: f64,
    config: &RegressorConfig,
    seed: u64,
) -> Result<ScorerModel, ScoringError> {
    if dataset.len() < 10 {
        return Err(ScoringError::DatasetTooSmall(dataset.len()));
    }
    if !(0.0..1.0).contains(&holdout_fraction) {
        return Err(ScoringError::InvalidInput("holdout_fraction must lie in [0, 1)".into()));
    }
    let dim = dataset[0].emb_i.len();
    if let Some(bad) = dataset.iter().find(|s| s.emb_i.len() != dim || s.emb_j.len() != dim) {
        return Err(ScoringError::DimensionMismatch {
            expected: dim,
            found: bad.emb_i.len().max(bad.emb_j.len()),
        });
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let holdout_count = ((dataset.len() as f64 * holdout_fraction).round() as usize).min(dataset.len() - 1);
    let (holdout_idx, train_idx) = order.split_at(holdout_count);

    let x_train: Vec<Vec<f64>> = train_idx.iter().map(|&i| features(&dataset[i])).collect();
    let y_train: Vec<f64> = train_idx.iter().map(|&i| dataset[i].reward).collect();
    let first = y_train[0];
    let regressor = if y_train.iter().all(|&y| y == first) {
        log::warn!("all training labels equal {first}; fitting a constant model");
        Regressor::Constant { value: first }
    } else {
        match config {
            RegressorConfig::Gbt(params) => Regressor::Gbt(GradientBoostedTrees::fit(&x_train, &y_train, params)),
            RegressorConfig::Ridge { lambda } => Regressor::Ridge(RidgeRegression::fit(&x_train, &y_train, *lambda)),
        }
    };
    let clamp = |v: f64| v.clamp(0.0, 1.0);
    let train_pred: Vec<f64> = x_train.iter().map(|x| clamp(regressor.predict_raw(x))).collect();
    let train_mse = mse(&train_pred, &y_train);

    let (holdout_mse, holdout_baseline_mse, holdout_pearson) = if holdout_idx.is_empty() {
        (None, None, None)
    } else {
        let y_hold: Vec<f64> = holdout_idx.iter().map(|&i| dataset[i].reward).collect();
        let pred: Vec<f64> = holdout_idx
            .iter()
            .map(|&i| clamp(regressor.predict_raw(&features(&dataset[i]))))
            .collect();
        let mean = y_train.iter().sum::<f64>() / y_train.len() as f64;
        (
            Some(mse(&pred, &y_hold)),
            Some(mse(&vec![mean; y_hold.len()], &y_hold)),
            pearson(&pred, &y_hold),
        )
    };

    let labels: Vec<bool> = y_train.iter().map(|&y| y >= 0.5).collect();
    let threshold = match threshold_fit(&train_pred, &labels) {
        Ok(t) => t,
        Err(ScoringError::NoPositiveLabels) => {
            log::warn!("no positive training labels; threshold set to 1.0");
            1.0
        }
        Err(e) => return Err(e),
    };

    Ok(ScorerModel {
        format_version: MODEL_FORMAT_VERSION,
        embedder_id: embedder_id.to_string(),
        dim,
        threshold,
        regressor,
        training_report: TrainingReport {
            sample_count: dataset.len(),
            train_count: train_idx.len(),
            holdout_count,
            train_mse,
            holdout_mse,
            holdout_baseline_mse,
            holdout_pearson,
        },
    })
}

pub fn estimator_predict(model: &ScorerModel, emb_i: &[f64], emb_j: &[f64]) -> Result<f64, ScoringError> {
    for e in [emb_i, emb_j] {
        if e.len() != model.dim {
            return Err(ScoringError::DimensionMismatch {
                expected: model.dim,
                found: e.len(),
            });
        }
    }
    let mut x = Vec::with_capacity(2 * model.dim);
    x.extend_from_slice(emb_i);
    x.extend_from_slice(emb_j);
    let raw = model.regressor.predict_raw(&x);
    Ok(if raw.is_nan() { 0.0 } else { raw.clamp(0.0, 1.0) })
}

impl ScorerModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), ScoringError> {
        fs::write(path, self.to_json() + "\n").map_err(|e| ScoringError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    /// Loads a model, refusing it when `expected_embedder` differs from the
    /// embedder it was trained with.
    pub fn load(path: &Path, expected_embedder: Option<&str>) -> Result<Self, ScoringError> {
        let io = |message: String| ScoringError::Io {
            path: path.display().to_string(),
            message,
        };
        let raw = fs::read_to_string(path).map_err(|e| io(e.to_string()))?;
        let model: Self = serde_json::from_str(&raw).map_err(|e| io(e.to_string()))?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(io(format!("unsupported model format version {}", model.format_version)));
        }
        if let Some(expected) = expected_embedder {
            if expected != model.embedder_id {
                return Err(ScoringError::EmbedderMismatch {
                    expected: model.embedder_id,
                    found: expected.to_string(),
                });
            }
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(a: f64, b: f64, r: f64) -> OfflineSample {
        OfflineSample {
            query_id: "q".into(),
            emb_i: vec![a],
            emb_j: vec![b],
            reward: r,
        }
    }

    #[test]
    fn constant_labels() {
        let data: Vec<_> = (0..20).map(|i| sample(i as f64, 0.0, 0.5)).collect();
        let m = train_estimator(&data, "e", 0.2, &RegressorConfig::default(), 1).unwrap();
        assert_eq!(m.regressor, Regressor::Constant { value: 0.5 });
        assert_eq!(m.training_report.train_mse, 0.0);
        assert_eq!(m.training_report.holdout_mse, Some(0.0));
        assert_eq!(estimator_predict(&m, &[9.0], &[1.0]).unwrap(), 0.5);
        assert_eq!(m.threshold, 0.5);
    }

    #[test]
    fn too_small_and_mismatched() {
        let data: Vec<_> = (0..9).map(|i| sample(i as f64, 0.0, 0.5)).collect();
        assert!(matches!(
            train_estimator(&data, "e", 0.2, &RegressorConfig::default(), 1),
            Err(ScoringError::DatasetTooSmall(9))
        ));
        let data: Vec<_> = (0..20).map(|i| sample(i as f64, 0.0, 0.5)).collect();
        let m = train_estimator(&data, "e", 0.0, &RegressorConfig::default(), 1).unwrap();
        assert!(matches!(
            estimator_predict(&m, &[1.0, 2.0], &[1.0]),
            Err(ScoringError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn predictions_are_clamped() {
        let data: Vec<_> = (0..40).map(|i| sample(i as f64, 0.0, if i < 20 { 0.0 } else { 1.0 })).collect();
        let m = train_estimator(&data, "e", 0.0, &RegressorConfig::Ridge { lambda: 1e-6 }, 3).unwrap();
        for x in [-100.0, 0.0, 10.0, 1e6] {
            let p = estimator_predict(&m, &[x], &[0.0]).unwrap();
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn save_load_and_embedder_check() {
        let dir = tempfile::tempdir().unwrap();
        let data: Vec<_> = (0..30).map(|i| sample(i as f64, 1.0, f64::from(i % 2))).collect();
        let m = train_estimator(&data, "emb-1", 0.2, &RegressorConfig::default(), 7).unwrap();
        let path = dir.path().join("model.json");
        m.save(&path).unwrap();
        assert_eq!(ScorerModel::load(&path, Some("emb-1")).unwrap(), m);
        assert!(matches!(
            ScorerModel::load(&path, Some("emb-2")),
            Err(ScoringError::EmbedderMismatch { .. })
        ));
    }
}
