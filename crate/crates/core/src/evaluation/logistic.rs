//! Four-parameter logistic mapping of predictions onto the MOS scale,
//! fitted by Levenberg-Marquardt.

use serde::{Deserialize, Serialize};

use super::correlation::{mean_std, median, pearson, rmse};
use crate::error::{Result, VqaError};

const MAX_ITERATIONS: usize = 500;
const MAX_DAMPING: f64 = 1e16;

/// `q(x) = b1 + (b2 - b1) / (1 + exp(-(x - b3) / |b4|))`
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub beta4: f64,
}

impl LogisticParams {
    fn from_array(p: [f64; 4]) -> Self {
        LogisticParams {
            beta1: p[0],
            beta2: p[1],
            beta3: p[2],
            beta4: p[3],
        }
    }

    fn to_array(self) -> [f64; 4] {
        [self.beta1, self.beta2, self.beta3, self.beta4]
    }

    fn scale(&self) -> f64 {
        self.beta4.abs().max(f64::MIN_POSITIVE)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let g = 1.0 / (1.0 + (-(x - self.beta3) / self.scale()).exp());
        self.beta1 + (self.beta2 - self.beta1) * g
    }

    /// Value and partial derivatives with respect to the four parameters.
    fn eval_with_gradient(&self, x: f64) -> (f64, [f64; 4]) {
        let s = self.scale();
        let z = (x - self.beta3) / s;
        let g = 1.0 / (1.0 + (-z).exp());
        let dg = g * (1.0 - g);
        let span = self.beta2 - self.beta1;
        let q = self.beta1 + span * g;
        let sign = if self.beta4 < 0.0 { -1.0 } else { 1.0 };
        (q, [1.0 - g, g, -span * dg / s, -span * dg * z / s * sign])
    }
}

/// How the reported mapping was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    /// The optimizer did not settle; metrics come from a straight-line fit.
    LinearFallback,
    /// No logistic beat the constant-mean curve, which is reported instead.
    Flat,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub params: LogisticParams,
    pub lcc: f64,
    pub rmse: f64,
    pub status: FitStatus,
}

fn sse(params: &LogisticParams, x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(&xi, &yi)| (params.eval(xi) - yi).powi(2)).sum()
}

/// Solves the 4x4 system by Gaussian elimination with partial pivoting.
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let pivot = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col];
            for (dst, src) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *dst -= f * src;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let tail: f64 = (row + 1..4).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn levenberg_marquardt(x: &[f64], y: &[f64], start: LogisticParams) -> (LogisticParams, bool) {
    let mut params = start;
    let mut cost = sse(&params, x, y);
    let mut damping = 1e-3;
    for _ in 0..MAX_ITERATIONS {
        if cost <= 1e-30 {
            return (params, true);
        }
        let mut jtj = [[0.0; 4]; 4];
        let mut jtr = [0.0; 4];
        for (&xi, &yi) in x.iter().zip(y) {
            let (q, grad) = params.eval_with_gradient(xi);
            let r = q - yi;
            for i in 0..4 {
                jtr[i] += grad[i] * r;
                for j in 0..4 {
                    jtj[i][j] += grad[i] * grad[j];
                }
            }
        }

        loop {
            let mut a = jtj;
            for (i, row) in a.iter_mut().enumerate() {
                row[i] += damping * jtj[i][i].max(1e-12);
            }
            let step = solve4(a, jtr.map(|g| -g));
            let candidate = step.map(|d| {
                let p = params.to_array();
                LogisticParams::from_array([p[0] + d[0], p[1] + d[1], p[2] + d[2], p[3] + d[3]])
            });
            let candidate_cost = candidate.map(|c| sse(&c, x, y)).unwrap_or(f64::INFINITY);
            if candidate_cost < cost {
                let candidate = candidate.expect("finite cost implies a step");
                let improvement = cost - candidate_cost;
                let p = params.to_array();
                let c = candidate.to_array();
                let moved = (0..4)
                    .map(|i| (c[i] - p[i]).abs() / (p[i].abs() + 1e-12))
                    .fold(0.0, f64::max);
                params = candidate;
                cost = candidate_cost;
                damping = (damping / 10.0).max(1e-12);
                if improvement <= 1e-12 * cost || moved < 1e-12 {
                    return (params, true);
                }
                break;
            }
            damping *= 10.0;
            if damping > MAX_DAMPING {
                // no descent direction left: stationary point
                return (params, true);
            }
        }
    }
    (params, false)
}

/// Fits the logistic from the standard start point and reports the Pearson
/// correlation and RMSE of the mapped predictions against MOS.
pub fn fit_logistic_then_lcc_rmse(predictions: &[f64], mos: &[f64]) -> Result<LogisticFit> {
    if predictions.len() != mos.len() {
        return Err(VqaError::Shape(format!(
            "{} predictions vs {} scores",
            predictions.len(),
            mos.len()
        )));
    }
    if predictions.len() < 5 {
        return Err(VqaError::Validation(format!(
            "logistic fit needs at least 5 points, got {}",
            predictions.len()
        )));
    }
    if predictions.iter().chain(mos).any(|v| !v.is_finite()) {
        return Err(VqaError::Validation("non-finite value in logistic input".into()));
    }
    let (_, pred_std) = mean_std(predictions);
    if pred_std == 0.0 {
        return Err(VqaError::Validation("predictions are constant".into()));
    }

    let start = LogisticParams {
        beta1: mos.iter().copied().fold(f64::INFINITY, f64::min),
        beta2: mos.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        beta3: median(predictions),
        beta4: pred_std,
    };
    let (params, converged) = levenberg_marquardt(predictions, mos, start);

    if !converged {
        return Ok(linear_fallback(predictions, mos, params));
    }

    let (mos_mean, _) = mean_std(mos);
    let flat_cost: f64 = mos.iter().map(|m| (m - mos_mean).powi(2)).sum();
    if sse(&params, predictions, mos) > flat_cost {
        let flat = LogisticParams {
            beta1: mos_mean,
            beta2: mos_mean,
            ..start
        };
        let mapped = vec![mos_mean; mos.len()];
        return Ok(LogisticFit {
            params: flat,
            lcc: 0.0,
            rmse: rmse(&mapped, mos),
            status: FitStatus::Flat,
        });
    }

    let mapped: Vec<f64> = predictions.iter().map(|&x| params.eval(x)).collect();
    let lcc = pearson(&mapped, mos).unwrap_or(0.0);
    Ok(LogisticFit {
        params,
        lcc,
        rmse: rmse(&mapped, mos),
        status: FitStatus::Converged,
    })
}

fn linear_fallback(x: &[f64], y: &[f64], params: LogisticParams) -> LogisticFit {
    let (mx, _) = mean_std(x);
    let (my, _) = mean_std(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let mapped: Vec<f64> = x.iter().map(|a| my + slope * (a - mx)).collect();
    LogisticFit {
        params,
        lcc: pearson(x, y).unwrap_or(0.0),
        rmse: rmse(&mapped, y),
        status: FitStatus::LinearFallback,
    }
}
