use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train_rows, Hyperparams};
use crate::error::{Result, VqaError};
use crate::evaluation::srocc;

/// Cost x gamma candidates sharing one epsilon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub costs: Vec<f64>,
    pub gammas: Vec<f64>,
    pub epsilon: f64,
}

impl HyperGrid {
    /// `cost = 2^-3 .. 2^10`, `gamma = 2^-10 .. 2^3`.
    pub fn standard(epsilon: f64) -> Self {
        HyperGrid {
            costs: (-3..=10).map(|e| 2f64.powi(e)).collect(),
            gammas: (-10..=3).map(|e| 2f64.powi(e)).collect(),
            epsilon,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub cost: f64,
    pub gamma: f64,
    pub mean_srocc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best: Hyperparams,
    pub best_srocc: f64,
    pub points: Vec<GridPoint>,
}

/// Fold index per row: distinct contents in first-appearance order are dealt
/// round-robin into `folds` groups, so no content spans two folds.
pub fn fold_assignment<S: AsRef<str>>(content_ids: &[S], folds: usize) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(VqaError::Validation(format!("need at least 2 folds, got {folds}")));
    }
    let mut index: HashMap<&str, usize> = HashMap::new();
    for c in content_ids {
        let next = index.len();
        index.entry(c.as_ref()).or_insert(next);
    }
    if index.len() < folds {
        return Err(VqaError::Validation(format!(
            "{} distinct contents cannot fill {folds} folds",
            index.len()
        )));
    }
    Ok(content_ids.iter().map(|c| index[c.as_ref()] % folds).collect())
}

fn cross_validated_srocc(
    features: &[Vec<f64>],
    scores: &[f64],
    assignment: &[usize],
    folds: usize,
    hp: Hyperparams,
) -> Result<f64> {
    let mut total = 0.0;
    for fold in 0..folds {
        let (mut train_x, mut train_y, mut test_x, mut test_y) = (vec![], vec![], vec![], vec![]);
        for ((row, &y), &f) in features.iter().zip(scores).zip(assignment) {
            if f == fold {
                test_x.push(row.clone());
                test_y.push(y);
            } else {
                train_x.push(row.clone());
                train_y.push(y);
            }
        }
        let model = train_rows(&train_x, &train_y, hp, None)?;
        let pred = test_x
            .iter()
            .map(|r| model.predict_values(r))
            .collect::<Result<Vec<_>>>()?;
        total += match srocc(&pred, &test_y) {
            Ok(r) => r,
            // constant predictions carry no ranking information
            Err(VqaError::UndefinedCorrelation(_)) => 0.0,
            Err(e) => return Err(e),
        };
    }
    Ok(total / folds as f64)
}

/// Picks the (cost, gamma) with the highest mean content-disjoint k-fold SROCC.
/// Ties go to the smaller cost, then the smaller gamma.
pub fn grid_search<S: AsRef<str> + Sync>(
    features: &[Vec<f64>],
    scores: &[f64],
    content_ids: &[S],
    grid: &HyperGrid,
    folds: usize,
) -> Result<GridSearchResult> {
    if grid.costs.is_empty() || grid.gammas.is_empty() {
        return Err(VqaError::Validation("hyperparameter grid is empty".into()));
    }
    if content_ids.len() != features.len() || scores.len() != features.len() {
        return Err(VqaError::Shape(format!(
            "{} feature rows, {} scores, {} content ids",
            features.len(),
            scores.len(),
            content_ids.len()
        )));
    }
    let assignment = fold_assignment(content_ids, folds)?;

    let mut candidates: Vec<(f64, f64)> = grid
        .costs
        .iter()
        .flat_map(|&c| grid.gammas.iter().map(move |&g| (c, g)))
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    candidates.dedup();

    let points = candidates
        .par_iter()
        .map(|&(cost, gamma)| {
            let hp = Hyperparams {
                cost,
                gamma,
                epsilon: grid.epsilon,
            };
            cross_validated_srocc(features, scores, &assignment, folds, hp).map(|mean_srocc| GridPoint {
                cost,
                gamma,
                mean_srocc,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best = points[0];
    for p in &points[1..] {
        if p.mean_srocc > best.mean_srocc {
            best = *p;
        }
    }
    Ok(GridSearchResult {
        best: Hyperparams {
            cost: best.cost,
            gamma: best.gamma,
            epsilon: grid.epsilon,
        },
        best_srocc: best.mean_srocc,
        points,
    })
}
