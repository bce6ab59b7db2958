//! Benchmarking protocol: SROCC, LCC and RMSE after a logistic mapping, over
//! repeated content-disjoint train/test splits, plus rank-sum comparisons of
//! the resulting metric distributions.

mod correlation;
mod logistic;
mod wilcoxon;

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use correlation::{average_ranks, median, pearson, rmse, srocc};
pub use logistic::{fit_logistic_then_lcc_rmse, FitStatus, LogisticFit, LogisticParams};
pub use wilcoxon::{rank_sum_test, wilcoxon_rank_sum, RankSumTest};

use crate::error::{Result, VqaError};
use crate::features::VariantConfig;
use crate::regressor::{grid_search, train_rows, HyperGrid, Hyperparams};

pub const DEFAULT_ITERATIONS: usize = 1000;
pub const TRAIN_FRACTION: f64 = 0.8;
pub const MIN_CONTENTS: usize = 5;

/// Random stream for one unit of work, independent of scheduling.
pub fn iteration_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Repeated random content-disjoint train/test partitions.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitPlan {
    pub seed: u64,
    pub iterations: usize,
    pub train_fraction: f64,
    pub content_ids: Vec<String>,
}

impl SplitPlan {
    pub fn new(content_ids: Vec<String>, seed: u64, iterations: usize) -> Self {
        SplitPlan {
            seed,
            iterations,
            train_fraction: TRAIN_FRACTION,
            content_ids,
        }
    }

    /// Distinct contents in first-appearance order.
    pub fn contents(&self) -> Vec<&str> {
        let mut seen = HashMap::new();
        let mut out = Vec::new();
        for c in &self.content_ids {
            if seen.insert(c.as_str(), ()).is_none() {
                out.push(c.as_str());
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        let n = self.contents().len();
        if n < MIN_CONTENTS {
            return Err(VqaError::Validation(format!(
                "split evaluation needs at least {MIN_CONTENTS} distinct contents, got {n}"
            )));
        }
        if self.iterations == 0 {
            return Err(VqaError::Validation("iteration count must be positive".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(VqaError::Validation(format!(
                "train fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        Ok(())
    }

    /// Row indices of the training and test sets for one iteration.
    pub fn split(&self, iteration: usize) -> (Vec<usize>, Vec<usize>) {
        let mut contents = self.contents();
        let n = contents.len();
        let n_train = ((n as f64 * self.train_fraction).round() as usize).clamp(1, n - 1);
        contents.shuffle(&mut iteration_rng(self.seed, iteration as u64));
        let train: HashMap<&str, ()> = contents[..n_train].iter().map(|&c| (c, ())).collect();
        let (mut tr, mut te) = (Vec::new(), Vec::new());
        for (row, c) in self.content_ids.iter().enumerate() {
            if train.contains_key(c.as_str()) {
                tr.push(row);
            } else {
                te.push(row);
            }
        }
        (tr, te)
    }
}

/// How each split's regressor gets its hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum HyperparamChoice {
    Fixed(Hyperparams),
    /// Content-disjoint k-fold grid search on each training set.
    GridSearchPerSplit {
        grid: HyperGrid,
        folds: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationResult {
    pub srocc: f64,
    pub lcc: f64,
    pub rmse: f64,
    pub logistic: LogisticParams,
    pub logistic_status: FitStatus,
    pub hyperparams: Hyperparams,
    /// Contents found on both sides of this iteration's split.
    pub overlapping_contents: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Medians {
    pub srocc: f64,
    pub lcc: f64,
    pub rmse: f64,
}

/// Identifies what was evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelIdentity {
    pub name: String,
    pub variant: Option<VariantConfig>,
    pub hyperparams: HyperparamChoice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: ModelIdentity,
    pub seed: u64,
    pub iterations: usize,
    pub train_fraction: f64,
    pub srocc: Vec<f64>,
    pub lcc: Vec<f64>,
    pub rmse: Vec<f64>,
    pub logistic: Vec<LogisticParams>,
    pub logistic_status: Vec<FitStatus>,
    pub hyperparams: Vec<Hyperparams>,
    pub median: Medians,
    /// Iterations whose train and test sets shared a content.
    pub disjointness_violations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

impl EvaluationReport {
    fn from_iterations(model: ModelIdentity, plan: &SplitPlan, results: Vec<IterationResult>) -> Self {
        let srocc: Vec<f64> = results.iter().map(|r| r.srocc).collect();
        let lcc: Vec<f64> = results.iter().map(|r| r.lcc).collect();
        let rmse: Vec<f64> = results.iter().map(|r| r.rmse).collect();
        let median = Medians {
            srocc: median(&srocc),
            lcc: median(&lcc),
            rmse: median(&rmse),
        };
        EvaluationReport {
            model,
            seed: plan.seed,
            iterations: plan.iterations,
            train_fraction: plan.train_fraction,
            logistic: results.iter().map(|r| r.logistic).collect(),
            logistic_status: results.iter().map(|r| r.logistic_status).collect(),
            hyperparams: results.iter().map(|r| r.hyperparams).collect(),
            disjointness_violations: results.iter().filter(|r| r.overlapping_contents > 0).count(),
            srocc,
            lcc,
            rmse,
            median,
            provenance: None,
        }
    }

    /// Recomputes the medians from the per-iteration lists.
    pub fn audit_medians(&self) -> bool {
        !self.srocc.is_empty()
            && median(&self.srocc) == self.median.srocc
            && median(&self.lcc) == self.median.lcc
            && median(&self.rmse) == self.median.rmse
    }

    pub fn metric(&self, name: &str) -> Result<&[f64]> {
        match name {
            "srocc" => Ok(&self.srocc),
            "lcc" => Ok(&self.lcc),
            "rmse" => Ok(&self.rmse),
            other => Err(VqaError::Validation(format!("unknown metric {other:?}"))),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| VqaError::io(path, e))?;
        let mut out = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut out, self)?;
        out.write_all(b"\n").map_err(|e| VqaError::io(path, e))?;
        out.flush().map_err(|e| VqaError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| VqaError::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }
}

fn gather<T: Clone>(values: &[T], rows: &[usize]) -> Vec<T> {
    rows.iter().map(|&i| values[i].clone()).collect()
}

fn run_iteration(
    features: &[Vec<f64>],
    scores: &[f64],
    plan: &SplitPlan,
    choice: &HyperparamChoice,
    iteration: usize,
) -> Result<IterationResult> {
    let (train_rows_idx, test_rows_idx) = plan.split(iteration);
    if test_rows_idx.len() < 5 {
        return Err(VqaError::Validation(format!(
            "iteration {iteration}: test split has {} rows, at least 5 are needed",
            test_rows_idx.len()
        )));
    }
    let train_contents: HashSet<&str> = train_rows_idx.iter().map(|&i| plan.content_ids[i].as_str()).collect();
    let overlapping_contents = test_rows_idx
        .iter()
        .map(|&i| plan.content_ids[i].as_str())
        .filter(|c| train_contents.contains(c))
        .collect::<HashSet<_>>()
        .len();
    let train_x = gather(features, &train_rows_idx);
    let train_y = gather(scores, &train_rows_idx);
    let hyperparams = match choice {
        HyperparamChoice::Fixed(hp) => *hp,
        HyperparamChoice::GridSearchPerSplit { grid, folds } => {
            let contents = gather(&plan.content_ids, &train_rows_idx);
            grid_search(&train_x, &train_y, &contents, grid, *folds)?.best
        }
    };
    let model = train_rows(&train_x, &train_y, hyperparams, None)?;
    let test_y = gather(scores, &test_rows_idx);
    let pred = test_rows_idx
        .iter()
        .map(|&i| model.predict_values(&features[i]))
        .collect::<Result<Vec<_>>>()?;

    let srocc = match srocc(&pred, &test_y) {
        Ok(r) => r,
        Err(VqaError::UndefinedCorrelation(_)) => 0.0,
        Err(e) => return Err(e),
    };
    let fit = match fit_logistic_then_lcc_rmse(&pred, &test_y) {
        Ok(fit) => fit,
        Err(VqaError::Validation(_)) => {
            // constant predictions: the best mapping is the flat mean
            let (mean, std) = correlation::mean_std(&test_y);
            LogisticFit {
                params: LogisticParams {
                    beta1: mean,
                    beta2: mean,
                    beta3: pred[0],
                    beta4: 1.0,
                },
                lcc: 0.0,
                rmse: std,
                status: FitStatus::Flat,
            }
        }
        Err(e) => return Err(e),
    };
    Ok(IterationResult {
        srocc,
        lcc: fit.lcc,
        rmse: fit.rmse,
        logistic: fit.params,
        logistic_status: fit.status,
        hyperparams,
        overlapping_contents,
    })
}

/// Trains and tests on every split of `plan`; iterations run in parallel but
/// each draws from its own seeded stream, so the report is schedule-independent.
pub fn run_split_evaluation(
    features: &[Vec<f64>],
    scores: &[f64],
    plan: &SplitPlan,
    choice: HyperparamChoice,
    model_name: &str,
    variant: Option<VariantConfig>,
) -> Result<EvaluationReport> {
    if features.len() != scores.len() || features.len() != plan.content_ids.len() {
        return Err(VqaError::Shape(format!(
            "{} feature rows, {} scores, {} content ids",
            features.len(),
            scores.len(),
            plan.content_ids.len()
        )));
    }
    plan.validate()?;
    let results = (0..plan.iterations)
        .into_par_iter()
        .map(|it| run_iteration(features, scores, plan, &choice, it))
        .collect::<Result<Vec<_>>>()?;
    let model = ModelIdentity {
        name: model_name.to_string(),
        variant,
        hyperparams: choice,
    };
    Ok(EvaluationReport::from_iterations(model, plan, results))
}

/// Rank-sum comparison of one metric between two reports.
pub fn compare_reports(a: &EvaluationReport, b: &EvaluationReport, metric: &str, level: f64) -> Result<RankSumTest> {
    let test = rank_sum_test(a.metric(metric)?, b.metric(metric)?, level)?;
    // lower RMSE is better; flip so +1 always means "a is superior"
    if metric == "rmse" {
        return Ok(RankSumTest {
            decision: -test.decision,
            ..test
        });
    }
    Ok(test)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn contents(n: usize, per: usize) -> Vec<String> {
        (0..n * per).map(|i| format!("c{}", i / per)).collect()
    }

    #[test]
    fn splits_are_content_disjoint_and_deterministic() {
        let plan = SplitPlan::new(contents(10, 3), 7, 20);
        for it in 0..20 {
            let (tr, te) = plan.split(it);
            assert_eq!(tr.len() + te.len(), 30);
            assert_eq!(te.len(), 6);
            for &a in &tr {
                for &b in &te {
                    assert_ne!(plan.content_ids[a], plan.content_ids[b]);
                }
            }
            assert_eq!(plan.split(it), (tr, te));
        }
        assert_ne!(plan.split(0), plan.split(1));
    }

    #[test]
    fn too_few_contents() {
        let x = vec![vec![1.0]; 8];
        let y: Vec<f64> = (0..8).map(f64::from).collect();
        let plan = SplitPlan::new(contents(4, 2), 1, 2);
        let hp = HyperparamChoice::Fixed(Hyperparams {
            cost: 1.0,
            gamma: 1.0,
            epsilon: 0.1,
        });
        assert!(matches!(
            run_split_evaluation(&x, &y, &plan, hp, "t", None),
            Err(VqaError::Validation(_))
        ));
    }

    #[test]
    fn rmse_comparison_is_oriented() {
        let report = |rmse: Vec<f64>| EvaluationReport {
            model: ModelIdentity {
                name: "m".into(),
                variant: None,
                hyperparams: HyperparamChoice::Fixed(Hyperparams {
                    cost: 1.0,
                    gamma: 1.0,
                    epsilon: 0.0,
                }),
            },
            seed: 0,
            iterations: rmse.len(),
            train_fraction: 0.8,
            srocc: rmse.clone(),
            lcc: rmse.clone(),
            rmse,
            logistic: vec![],
            logistic_status: vec![],
            hyperparams: vec![],
            median: Medians {
                srocc: 0.0,
                lcc: 0.0,
                rmse: 0.0,
            },
            disjointness_violations: 0,
            provenance: None,
        };
        let low = report((0..20).map(|i| 1.0 + i as f64 * 0.01).collect());
        let high = report((0..20).map(|i| 5.0 + i as f64 * 0.01).collect());
        assert_eq!(compare_reports(&low, &high, "rmse", 0.05).unwrap().decision, 1);
        assert_eq!(compare_reports(&low, &high, "srocc", 0.05).unwrap().decision, -1);
    }
}
