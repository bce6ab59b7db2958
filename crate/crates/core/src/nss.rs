//! Natural scene statistics primitives: mean subtracted contrast normalized
//! (MSCN) coefficients and zero-mean generalized Gaussian (GGD) fits.

use std::borrow::Cow;
use std::sync::OnceLock;

use statrs::function::gamma::ln_gamma;

use crate::error::{Result, VqaError};
use crate::video::{reflect, LumaFrame};

/// Additive stability constant in the divisive normalization.
pub const STABILITY_C: f64 = 1.0;

/// Smallest field side for which the 7x7 window is defined.
pub const MIN_MSCN_SIDE: usize = 7;

/// Fewest samples accepted by [`fit_ggd`].
pub const MIN_GGD_SAMPLES: usize = 100;

/// Bounds and resolution of the GGD shape search grid.
pub const ALPHA_MIN: f64 = 0.2;
pub const ALPHA_MAX: f64 = 10.0;
pub const ALPHA_GRID_POINTS: usize = 10_000;

/// A two-dimensional scalar signal that can be contrast normalized.
pub trait Field2d {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn real_values(&self) -> Cow<'_, [f64]>;
}

impl Field2d for LumaFrame {
    fn width(&self) -> usize {
        LumaFrame::width(self)
    }

    fn height(&self) -> usize {
        LumaFrame::height(self)
    }

    fn real_values(&self) -> Cow<'_, [f64]> {
        Cow::Owned(self.to_f64())
    }
}

/// A borrowed real-valued field.
#[derive(Clone, Copy, Debug)]
pub struct RealField<'a> {
    pub width: usize,
    pub height: usize,
    pub values: &'a [f64],
}

impl<'a> RealField<'a> {
    pub fn new(width: usize, height: usize, values: &'a [f64]) -> Result<Self> {
        if values.len() != width * height {
            return Err(VqaError::Shape(format!(
                "{} values for a {width}x{height} field",
                values.len()
            )));
        }
        Ok(RealField { width, height, values })
    }
}

impl Field2d for RealField<'_> {
    fn width(&self) -> usize {
        self.width
    }

    fn height(&self) -> usize {
        self.height
    }

    fn real_values(&self) -> Cow<'_, [f64]> {
        Cow::Borrowed(self.values)
    }
}

/// The 7x7 circularly symmetric Gaussian used for local mean and deviation.
///
/// The window is separable: `weight(k, l) = taps[k] * taps[l]`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizationWindow {
    taps: [f64; 7],
}

impl NormalizationWindow {
    pub const HALF_EXTENT: usize = 3;
    pub const SIGMA: f64 = 7.0 / 6.0;

    pub fn gaussian() -> Self {
        let mut taps = [0.0; 7];
        for (k, t) in taps.iter_mut().enumerate() {
            let d = k as f64 - Self::HALF_EXTENT as f64;
            *t = (-d * d / (2.0 * Self::SIGMA * Self::SIGMA)).exp();
        }
        let sum: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= sum);
        NormalizationWindow { taps }
    }

    pub fn taps(&self) -> &[f64; 7] {
        &self.taps
    }

    /// Weight at offset `(k, l)`, each in `-3..=3`.
    pub fn weight(&self, k: isize, l: isize) -> f64 {
        let h = Self::HALF_EXTENT as isize;
        self.taps[(k + h) as usize] * self.taps[(l + h) as usize]
    }
}

impl Default for NormalizationWindow {
    fn default() -> Self {
        Self::gaussian()
    }
}

fn window() -> &'static NormalizationWindow {
    static WINDOW: OnceLock<NormalizationWindow> = OnceLock::new();
    WINDOW.get_or_init(NormalizationWindow::gaussian)
}

/// Per-pixel normalized coefficients of a frame or difference signal.
#[derive(Clone, Debug, PartialEq)]
pub struct MscnField {
    width: usize,
    height: usize,
    coefficients: Vec<f64>,
}

impl MscnField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn into_coefficients(self) -> Vec<f64> {
        self.coefficients
    }
}

/// Computes `(v - mu) / (sigma + 1)` at every pixel, with `mu` and `sigma`
/// the Gaussian-weighted local mean and deviation (reflected borders).
pub fn compute_mscn<F: Field2d + ?Sized>(field: &F) -> Result<MscnField> {
    let (w, h) = (field.width(), field.height());
    if w < MIN_MSCN_SIDE || h < MIN_MSCN_SIDE {
        return Err(VqaError::DegenerateInput(format!(
            "{w}x{h} field is smaller than the {MIN_MSCN_SIDE}x{MIN_MSCN_SIDE} window"
        )));
    }
    let values = field.real_values();
    if values.len() != w * h {
        return Err(VqaError::Shape(format!("{} values for a {w}x{h} field", values.len())));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(VqaError::Validation(format!("non-finite field value {v}")));
    }
    let coefficients = mscn_kernel(&values, w, h, window().taps());
    Ok(MscnField {
        width: w,
        height: h,
        coefficients,
    })
}

/// Symmetric 7-tap filter of `src` (length `n + 6`) into `dst` (length `n`).
#[inline]
fn filter_row(src: &[f64], dst: &mut [f64], t: &[f64; 7]) {
    let n = dst.len();
    let (a, b, c, d) = (&src[..n], &src[1..n + 1], &src[2..n + 2], &src[3..n + 3]);
    let (e, f, g) = (&src[4..n + 4], &src[5..n + 5], &src[6..n + 6]);
    for x in 0..n {
        dst[x] = t[0] * (a[x] + g[x]) + t[1] * (b[x] + f[x]) + t[2] * (c[x] + e[x]) + t[3] * d[x];
    }
}

fn mscn_kernel(values: &[f64], w: usize, h: usize, taps: &[f64; 7]) -> Vec<f64> {
    const R: usize = NormalizationWindow::HALF_EXTENT;
    const K: usize = 2 * R + 1;
    debug_assert!((0..R).all(|k| taps[k] == taps[K - 1 - k]));

    // Shifting by the midrange keeps the second-moment subtraction well
    // conditioned and makes constant fields come out as exact zeros.
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let offset = 0.5 * (lo + hi);

    // horizontal sums of source row r live in ring slot r % K
    let mut ring1 = vec![0.0; K * w];
    let mut ring2 = vec![0.0; K * w];
    let mut padded = vec![0.0; w + 2 * R];
    let mut padded_sq = vec![0.0; w + 2 * R];
    let mut next_row = 0;

    let mut out = vec![0.0; w * h];
    for y in 0..h {
        while next_row <= (y + R).min(h - 1) {
            let row = &values[next_row * w..(next_row + 1) * w];
            for (i, (p, q)) in padded.iter_mut().zip(padded_sq.iter_mut()).enumerate() {
                let v = row[reflect(i as isize - R as isize, w)] - offset;
                *p = v;
                *q = v * v;
            }
            let slot = (next_row % K) * w;
            filter_row(&padded, &mut ring1[slot..slot + w], taps);
            filter_row(&padded_sq, &mut ring2[slot..slot + w], taps);
            next_row += 1;
        }
        let rows: [usize; K] = std::array::from_fn(|k| (reflect(y as isize + k as isize - R as isize, h) % K) * w);
        let s1: [&[f64]; K] = rows.map(|r| &ring1[r..r + w]);
        let s2: [&[f64]; K] = rows.map(|r| &ring2[r..r + w]);
        let src = &values[y * w..(y + 1) * w];
        let dst = &mut out[y * w..(y + 1) * w];
        for x in 0..w {
            let mu = taps[0] * (s1[0][x] + s1[6][x])
                + taps[1] * (s1[1][x] + s1[5][x])
                + taps[2] * (s1[2][x] + s1[4][x])
                + taps[3] * s1[3][x];
            let e2 = taps[0] * (s2[0][x] + s2[6][x])
                + taps[1] * (s2[1][x] + s2[5][x])
                + taps[2] * (s2[2][x] + s2[4][x])
                + taps[3] * s2[3][x];
            let var = e2 - mu * mu;
            let var = if var > 0.0 { var } else { 0.0 };
            dst[x] = (src[x] - offset - mu) / (var.sqrt() + STABILITY_C);
        }
    }
    out
}

/// Zero-mean generalized Gaussian parameters.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GgdFit {
    pub alpha: f64,
    pub sigma: f64,
}

impl GgdFit {
    /// Substituted for fields with no variation (Gaussian shape, zero spread).
    pub const FALLBACK: GgdFit = GgdFit { alpha: 2.0, sigma: 0.0 };
}

/// Moment ratio `Γ(1/α)Γ(3/α) / Γ(2/α)²`, equal to `E[x²] / E[|x|]²` for a GGD.
pub fn ggd_ratio(alpha: f64) -> f64 {
    (ln_gamma(1.0 / alpha) + ln_gamma(3.0 / alpha) - 2.0 * ln_gamma(2.0 / alpha)).exp()
}

/// Geometric grid of shape values and their moment ratios, ascending in alpha.
pub fn alpha_grid() -> &'static [(f64, f64)] {
    static GRID: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    GRID.get_or_init(|| {
        let span = (ALPHA_MAX / ALPHA_MIN).ln();
        let last = (ALPHA_GRID_POINTS - 1) as f64;
        (0..ALPHA_GRID_POINTS)
            .map(|k| {
                let alpha = match k {
                    0 => ALPHA_MIN,
                    k if k == ALPHA_GRID_POINTS - 1 => ALPHA_MAX,
                    k => ALPHA_MIN * (span * k as f64 / last).exp(),
                };
                (alpha, ggd_ratio(alpha))
            })
            .collect()
    })
}

/// Moment-matching GGD fit: sigma is the sample standard deviation, alpha the
/// grid point whose moment ratio is closest to the empirical one.
pub fn fit_ggd(samples: &[f64]) -> Result<GgdFit> {
    let n = samples.len();
    if n < MIN_GGD_SAMPLES {
        return Err(VqaError::Validation(format!(
            "GGD fit needs at least {MIN_GGD_SAMPLES} samples, got {n}"
        )));
    }
    if let Some(x) = samples.iter().find(|x| !x.is_finite()) {
        return Err(VqaError::Validation(format!("non-finite sample {x}")));
    }
    let first = samples[0];
    if samples.iter().all(|&x| x == first) {
        return Err(VqaError::DegenerateDistribution(format!(
            "all {n} samples equal {first}"
        )));
    }
    let [sum, sum_abs, sum_sq] = lane_sums(samples, |x| [x, x.abs(), x * x]);

    let nf = n as f64;
    let mean = sum / nf;
    let [centered, _, _] = lane_sums(samples, |x| [(x - mean) * (x - mean), 0.0, 0.0]);
    let sigma = (centered / (nf - 1.0)).sqrt();

    let mean_abs = sum_abs / nf;
    let ratio = (sum_sq / nf) / (mean_abs * mean_abs);
    Ok(GgdFit {
        alpha: nearest_alpha(ratio),
        sigma,
    })
}

/// Three sums of `f(x)` over four interleaved lanes.
#[inline]
fn lane_sums(samples: &[f64], f: impl Fn(f64) -> [f64; 3]) -> [f64; 3] {
    let mut acc = [[0.0; 4]; 3];
    let chunks = samples.chunks_exact(4);
    let tail = chunks.remainder();
    for chunk in chunks {
        for (lane, &x) in chunk.iter().enumerate() {
            let v = f(x);
            for k in 0..3 {
                acc[k][lane] += v[k];
            }
        }
    }
    let mut out = acc.map(|a| (a[0] + a[1]) + (a[2] + a[3]));
    for &x in tail {
        let v = f(x);
        for k in 0..3 {
            out[k] += v[k];
        }
    }
    out
}

/// Like [`fit_ggd`], but a constant input yields [`GgdFit::FALLBACK`].
pub fn fit_ggd_or_fallback(samples: &[f64]) -> Result<GgdFit> {
    match fit_ggd(samples) {
        Err(VqaError::DegenerateDistribution(_)) => Ok(GgdFit::FALLBACK),
        other => other,
    }
}

fn nearest_alpha(ratio: f64) -> f64 {
    let grid = alpha_grid();
    // ratios decrease with alpha
    let idx = grid.partition_point(|&(_, r)| r > ratio);
    let candidates = [idx.checked_sub(1), (idx < grid.len()).then_some(idx)];
    let mut best = None;
    for i in candidates.into_iter().flatten() {
        let err = (grid[i].1 - ratio).abs();
        match best {
            Some((_, e)) if e <= err => {}
            _ => best = Some((i, err)),
        }
    }
    grid[best.map(|(i, _)| i).unwrap_or(0)].0
}
