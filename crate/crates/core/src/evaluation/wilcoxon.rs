//! Two-sided Wilcoxon rank-sum test, normal approximation with tie and
//! continuity corrections.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::correlation::average_ranks;
use crate::error::{Result, VqaError};

pub const MIN_SAMPLE: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankSumTest {
    /// Sum of the ranks of the first sample in the pooled data.
    pub rank_sum: f64,
    pub z: f64,
    pub p_value: f64,
    /// +1 when the first sample is significantly larger, -1 when smaller, 0 otherwise.
    pub decision: i8,
}

pub fn rank_sum_test(a: &[f64], b: &[f64], level: f64) -> Result<RankSumTest> {
    if a.len() < MIN_SAMPLE || b.len() < MIN_SAMPLE {
        return Err(VqaError::Validation(format!(
            "rank-sum test needs at least {MIN_SAMPLE} values per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(VqaError::Validation(format!(
            "significance level {level} outside (0, 1)"
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(VqaError::Validation("non-finite value in rank-sum input".into()));
    }

    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = average_ranks(&pooled);
    let rank_sum: f64 = ranks[..a.len()].iter().sum();

    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n = na + nb;
    let expected = na * (n + 1.0) / 2.0;

    let mut sorted = pooled;
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let variance = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));

    let diff = rank_sum - expected;
    if variance <= 0.0 {
        return Ok(RankSumTest {
            rank_sum,
            z: 0.0,
            p_value: 1.0,
            decision: 0,
        });
    }
    let z = diff.signum() * (diff.abs() - 0.5).max(0.0) / variance.sqrt();
    let p_value = erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0);
    let decision = if p_value < level {
        if diff > 0.0 {
            1
        } else {
            -1
        }
    } else {
        0
    };
    Ok(RankSumTest {
        rank_sum,
        z,
        p_value,
        decision,
    })
}

/// Significance decision in {-1, 0, +1}.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64], level: f64) -> Result<i8> {
    rank_sum_test(a, b, level).map(|t| t.decision)
}
