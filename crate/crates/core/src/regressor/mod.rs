//! RBF epsilon-SVR mapping feature vectors to quality scores.

mod grid;
mod smo;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VqaError};
use crate::features::{FeatureVector, VariantConfig};

pub use grid::{fold_assignment, grid_search, GridPoint, GridSearchResult, HyperGrid};

pub const MODEL_VERSION: &str = "onestep-vqa-svr/1";
pub const MIN_TRAINING_ROWS: usize = 8;
pub const KKT_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub cost: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl Hyperparams {
    fn validate(&self) -> Result<()> {
        if !(self.cost.is_finite() && self.cost > 0.0) {
            return Err(VqaError::Validation(format!("cost {} must be positive", self.cost)));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(VqaError::Validation(format!("gamma {} must be positive", self.gamma)));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(VqaError::Validation(format!(
                "epsilon {} must be non-negative",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Tube half-width used when none is given: a tenth of a percent of the score range.
pub fn default_epsilon(scores: &[f64]) -> f64 {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        0.1 * (hi - lo) / 100.0
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    Rbf { gamma: f64 },
}

impl Kernel {
    #[inline]
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Rbf { gamma } => {
                let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d).exp()
            }
        }
    }
}

/// Training-set range of one feature; values map linearly onto [-1, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub min: f64,
    pub max: f64,
}

impl FeatureRange {
    #[inline]
    pub fn scale(&self, v: f64) -> f64 {
        if self.max > self.min {
            2.0 * (v - self.min) / (self.max - self.min) - 1.0
        } else {
            0.0
        }
    }
}

/// A trained regressor, self-contained for prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub version: String,
    /// Feature layout the model was trained on; `None` for free-form features.
    pub variant: Option<VariantConfig>,
    pub kernel: Kernel,
    pub cost: f64,
    pub epsilon: f64,
    pub feature_scaling: Vec<FeatureRange>,
    /// Scaled support vectors, one row per vector.
    pub support_vectors: Vec<Vec<f64>>,
    pub dual_coefficients: Vec<f64>,
    pub bias: f64,
    /// Free-form record of how the model was produced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

fn validate_training(features: &[Vec<f64>], scores: &[f64]) -> Result<usize> {
    if features.len() != scores.len() {
        return Err(VqaError::Shape(format!(
            "{} feature rows vs {} scores",
            features.len(),
            scores.len()
        )));
    }
    if features.len() < MIN_TRAINING_ROWS {
        return Err(VqaError::Validation(format!(
            "training needs at least {MIN_TRAINING_ROWS} rows, got {}",
            features.len()
        )));
    }
    let dims = features[0].len();
    if dims == 0 {
        return Err(VqaError::Validation("feature rows are empty".into()));
    }
    for (i, row) in features.iter().enumerate() {
        if row.len() != dims {
            return Err(VqaError::Shape(format!(
                "row {i} has {} features, expected {dims}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(VqaError::Validation(format!("row {i} has a non-finite feature")));
        }
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(VqaError::Validation(format!("score {i} is not finite")));
    }
    Ok(dims)
}

fn feature_ranges(features: &[Vec<f64>], dims: usize) -> Vec<FeatureRange> {
    (0..dims)
        .map(|d| {
            let (min, max) = features.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(r[d]), hi.max(r[d]))
            });
            if min == max {
                log::warn!("feature column {d} is constant ({min}); it is scaled to 0");
            }
            FeatureRange { min, max }
        })
        .collect()
}

/// Trains an epsilon-SVR on raw (unscaled) feature rows.
pub fn train_rows(
    features: &[Vec<f64>],
    scores: &[f64],
    hyperparams: Hyperparams,
    variant: Option<VariantConfig>,
) -> Result<TrainedModel> {
    hyperparams.validate()?;
    let dims = validate_training(features, scores)?;
    if let Some(v) = variant {
        if v.feature_count() != dims {
            return Err(VqaError::Shape(format!(
                "variant {} expects {} features, rows have {dims}",
                v.name,
                v.feature_count()
            )));
        }
    }

    let ranges = feature_ranges(features, dims);
    let scaled: Vec<Vec<f64>> = features
        .iter()
        .map(|r| r.iter().zip(&ranges).map(|(&v, s)| s.scale(v)).collect())
        .collect();

    let kernel = Kernel::Rbf {
        gamma: hyperparams.gamma,
    };
    let n = scaled.len();
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval(&scaled[i], &scaled[j]);
            gram[i * n + j] = v;
            gram[j * n + i] = v;
        }
    }

    let solution = smo::solve(
        &gram,
        scores,
        &smo::SolverParams {
            cost: hyperparams.cost,
            epsilon: hyperparams.epsilon,
            tolerance: KKT_TOLERANCE,
            max_iterations: (100 * 2 * n).max(10_000_000),
        },
    );
    if !solution.converged {
        log::warn!(
            "SMO stopped after {} iterations without reaching tolerance",
            solution.iterations
        );
    }

    let mut support_vectors = Vec::new();
    let mut dual_coefficients = Vec::new();
    for (row, &coef) in scaled.iter().zip(&solution.coefficients) {
        if coef != 0.0 {
            support_vectors.push(row.clone());
            dual_coefficients.push(coef.clamp(-hyperparams.cost, hyperparams.cost));
        }
    }
    if support_vectors.is_empty() {
        // every target already lies inside the tube around the bias
        support_vectors.push(scaled[0].clone());
        dual_coefficients.push(0.0);
    }

    Ok(TrainedModel {
        version: MODEL_VERSION.to_string(),
        variant,
        kernel,
        cost: hyperparams.cost,
        epsilon: hyperparams.epsilon,
        feature_scaling: ranges,
        support_vectors,
        dual_coefficients,
        bias: solution.bias,
        provenance: None,
    })
}

/// Trains on labeled feature vectors; they must all share one variant.
pub fn train(features: &[FeatureVector], scores: &[f64], hyperparams: Hyperparams) -> Result<TrainedModel> {
    let variant = features
        .first()
        .map(|f| f.variant)
        .ok_or_else(|| VqaError::Validation("no training rows".into()))?;
    if let Some(f) = features.iter().find(|f| f.variant != variant) {
        return Err(VqaError::Validation(format!(
            "mixed variants in training set: {} and {}",
            variant.name, f.variant.name
        )));
    }
    let rows: Vec<Vec<f64>> = features.iter().map(|f| f.values.clone()).collect();
    train_rows(&rows, scores, hyperparams, Some(variant))
}

impl TrainedModel {
    pub fn n_features(&self) -> usize {
        self.feature_scaling.len()
    }

    pub fn hyperparams(&self) -> Hyperparams {
        let Kernel::Rbf { gamma } = self.kernel;
        Hyperparams {
            cost: self.cost,
            gamma,
            epsilon: self.epsilon,
        }
    }

    /// Score for raw feature values.
    pub fn predict_values(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.n_features() {
            return Err(VqaError::Contract(format!(
                "model expects {} features, got {}",
                self.n_features(),
                values.len()
            )));
        }
        let scaled: Vec<f64> = values
            .iter()
            .zip(&self.feature_scaling)
            .map(|(&v, s)| s.scale(v))
            .collect();
        let sum: f64 = self
            .support_vectors
            .iter()
            .zip(&self.dual_coefficients)
            .map(|(sv, &c)| c * self.kernel.eval(sv, &scaled))
            .sum();
        Ok(sum + self.bias)
    }

    pub fn check(&self) -> Result<()> {
        if self.version != MODEL_VERSION {
            return Err(VqaError::Validation(format!(
                "unsupported model version {:?}",
                self.version
            )));
        }
        if self.support_vectors.is_empty() || self.support_vectors.len() != self.dual_coefficients.len() {
            return Err(VqaError::Validation(
                "model needs matching, non-empty support vectors and duals".into(),
            ));
        }
        let dims = self.n_features();
        if self.support_vectors.iter().any(|sv| sv.len() != dims) {
            return Err(VqaError::Validation(
                "support vector length differs from feature scaling".into(),
            ));
        }
        if let Some(v) = self.variant {
            if v.feature_count() != dims {
                return Err(VqaError::Validation(format!(
                    "variant {} does not match {dims} features",
                    v.name
                )));
            }
        }
        self.hyperparams().validate()?;
        if self.dual_coefficients.iter().any(|c| c.abs() > self.cost) {
            return Err(VqaError::Validation("dual coefficient exceeds cost".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: TrainedModel = serde_json::from_str(text)?;
        model.check()?;
        Ok(model)
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        let mut out = BufWriter::new(out);
        serde_json::to_writer_pretty(&mut out, self)?;
        out.write_all(b"\n").map_err(serde_json::Error::io)?;
        out.flush().map_err(serde_json::Error::io)?;
        Ok(())
    }

    pub fn read_json<R: Read>(input: R) -> Result<Self> {
        let model: TrainedModel = serde_json::from_reader(BufReader::new(input))?;
        model.check()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.write_json(File::create(path).map_err(|e| VqaError::io(path, e))?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::read_json(File::open(path).map_err(|e| VqaError::io(path, e))?)
    }
}

/// Score for a feature vector; its variant must match the model's.
pub fn predict(model: &TrainedModel, features: &FeatureVector) -> Result<f64> {
    if let Some(v) = model.variant {
        if v != features.variant {
            return Err(VqaError::Contract(format!(
                "model trained on variant {}, features are variant {}",
                v.name, features.variant.name
            )));
        }
    }
    model.predict_values(&features.values)
}
