//! Epsilon-SVR dual solved by sequential minimal optimization with
//! second-order working-set selection.
//!
//! The dual has `2n` variables: `alpha[0..n]` for the upper tube side and
//! `alpha[n..2n]` for the lower one, with
//!
//! ```text
//! min 1/2 a'Qa + p'a   s.t.  s'a = 0,  0 <= a_t <= C
//! Q_tu = s_t s_u K(t mod n, u mod n),  p_t = eps - s_t y_(t mod n)
//! ```
//!
//! and `s_t = +1` for the first half, `-1` for the second. Regression
//! coefficients are `alpha[i] - alpha[i + n]`.

const TAU: f64 = 1e-12;

pub(crate) struct SolverParams {
    pub cost: f64,
    pub epsilon: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

pub(crate) struct Solution {
    pub coefficients: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `kernel` is the dense row-major `n x n` Gram matrix.
pub(crate) fn solve(kernel: &[f64], targets: &[f64], params: &SolverParams) -> Solution {
    let n = targets.len();
    let l = 2 * n;
    let c = params.cost;
    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    let k = |t: usize, u: usize| kernel[(t % n) * n + (u % n)];

    let mut alpha = vec![0.0; l];
    let mut grad: Vec<f64> = (0..l).map(|t| params.epsilon - sign(t) * targets[t % n]).collect();

    let in_up = |a: f64, s: f64| if s > 0.0 { a < c } else { a > 0.0 };
    let in_low = |a: f64, s: f64| if s > 0.0 { a > 0.0 } else { a < c };

    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iterations {
        // i: maximal violating index on the "up" side (lowest index on ties)
        let mut g_max = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..l {
            let s = sign(t);
            if in_up(alpha[t], s) && -s * grad[t] > g_max {
                g_max = -s * grad[t];
                i = t;
            }
        }

        let mut g_max2 = f64::NEG_INFINITY;
        let mut obj_min = f64::INFINITY;
        let mut j = usize::MAX;
        if i != usize::MAX {
            let kii = k(i, i);
            for t in 0..l {
                let s = sign(t);
                if !in_low(alpha[t], s) {
                    continue;
                }
                g_max2 = g_max2.max(s * grad[t]);
                let b = g_max + s * grad[t];
                if b > 0.0 {
                    let mut a = kii + k(t, t) - 2.0 * k(i, t);
                    if a <= 0.0 {
                        a = TAU;
                    }
                    let obj = -b * b / a;
                    if obj < obj_min {
                        obj_min = obj;
                        j = t;
                    }
                }
            }
        }
        if i == usize::MAX || j == usize::MAX || g_max + g_max2 < params.tolerance {
            converged = true;
            break;
        }
        iterations += 1;

        let (si, sj) = (sign(i), sign(j));
        let q_ij = si * sj * k(i, j);
        let (q_ii, q_jj) = (k(i, i), k(j, j));
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if si != sj {
            let mut quad = q_ii + q_jj + 2.0 * q_ij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = q_ii + q_jj - 2.0 * q_ij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            let st = sign(t);
            *g += st * (si * k(t, i) * di + sj * k(t, j) * dj);
        }
    }

    let bias = -rho(&alpha, &grad, n, c);
    let coefficients: Vec<f64> = (0..n).map(|t| alpha[t] - alpha[t + n]).collect();
    let mut solution = Solution {
        coefficients,
        bias,
        iterations,
        converged,
    };
    if converged {
        if let Some((coefficients, bias)) = polish(kernel, targets, &alpha, params) {
            solution.coefficients = coefficients;
            solution.bias = bias;
        }
    }
    solution
}

fn rho(alpha: &[f64], grad: &[f64], n: usize, c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..2 * n {
        let s = if t < n { 1.0 } else { -1.0 };
        let yg = s * grad[t];
        if alpha[t] >= c {
            if s < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if s > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    if free > 0 {
        sum_free / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Side {
    Zero,
    Upper,
    Lower,
    FreePos,
    FreeNeg,
}

/// Re-solves the optimality conditions exactly on the active set SMO settled
/// on. The result no longer depends on the order SMO visited the variables.
fn polish(kernel: &[f64], y: &[f64], alpha: &[f64], params: &SolverParams) -> Option<(Vec<f64>, f64)> {
    let n = y.len();
    let c = params.cost;
    let eps = params.epsilon;
    let mut sides = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = (alpha[i], alpha[i + n]);
        let side = match (a > 0.0, b > 0.0) {
            (false, false) => Side::Zero,
            (true, false) if a >= c => Side::Upper,
            (true, false) => Side::FreePos,
            (false, true) if b >= c => Side::Lower,
            (false, true) => Side::FreeNeg,
            (true, true) => return None,
        };
        sides.push(side);
    }
    let free: Vec<usize> = (0..n)
        .filter(|&i| matches!(sides[i], Side::FreePos | Side::FreeNeg))
        .collect();
    if free.is_empty() {
        return None;
    }
    let bounded = |i: usize| match sides[i] {
        Side::Upper => c,
        Side::Lower => -c,
        _ => 0.0,
    };

    // [K_FF 1; 1' 0] [beta_F; b] = [y_F - eps s_F - K_FB beta_B; -sum(beta_B)]
    let m = free.len() + 1;
    let mut a = vec![0.0; m * m];
    let mut rhs = vec![0.0; m];
    for (r, &i) in free.iter().enumerate() {
        for (col, &j) in free.iter().enumerate() {
            a[r * m + col] = kernel[i * n + j];
        }
        a[r * m + m - 1] = 1.0;
        a[(m - 1) * m + r] = 1.0;
        let s = if sides[i] == Side::FreePos { 1.0 } else { -1.0 };
        let fixed: f64 = (0..n).map(|j| kernel[i * n + j] * bounded(j)).sum();
        rhs[r] = y[i] - eps * s - fixed;
    }
    rhs[m - 1] = -(0..n).map(bounded).sum::<f64>();
    let x = lu_solve(a, rhs, m)?;

    let mut beta: Vec<f64> = (0..n).map(bounded).collect();
    for (r, &i) in free.iter().enumerate() {
        let v = x[r];
        let ok = match sides[i] {
            Side::FreePos => v > 0.0 && v <= c,
            _ => v < 0.0 && v >= -c,
        };
        if !ok {
            return None;
        }
        beta[i] = v;
    }
    let bias = x[m - 1];

    let tol = params.tolerance;
    for i in 0..n {
        let f: f64 = (0..n).map(|j| kernel[i * n + j] * beta[j]).sum::<f64>() + bias;
        let r = y[i] - f;
        let ok = match sides[i] {
            Side::Zero => r.abs() <= eps + tol,
            Side::Upper => r >= eps - tol,
            Side::Lower => r <= -eps + tol,
            _ => true,
        };
        if !ok {
            return None;
        }
    }
    Some((beta, bias))
}

/// Dense LU solve with partial pivoting.
fn lu_solve(mut a: Vec<f64>, mut b: Vec<f64>, m: usize) -> Option<Vec<f64>> {
    for col in 0..m {
        let pivot = (col..m).max_by(|&i, &j| a[i * m + col].abs().total_cmp(&a[j * m + col].abs()))?;
        if a[pivot * m + col].abs() < 1e-14 {
            return None;
        }
        if pivot != col {
            for k in 0..m {
                a.swap(col * m + k, pivot * m + k);
            }
            b.swap(col, pivot);
        }
        let d = a[col * m + col];
        for row in col + 1..m {
            let f = a[row * m + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..m {
                a[row * m + k] -= f * a[col * m + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; m];
    for row in (0..m).rev() {
        let tail: f64 = (row + 1..m).map(|k| a[row * m + k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row * m + row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}
