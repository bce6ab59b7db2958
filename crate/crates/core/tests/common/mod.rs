//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

use onestep_vqa::{LumaFrame, VideoSequence};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Zero-mean GGD draws with shape `alpha` and standard deviation `sigma`,
/// via |x|^alpha / s^alpha ~ Gamma(1/alpha, 1).
pub fn ggd_samples(alpha: f64, sigma: f64, n: usize, seed: u64) -> Vec<f64> {
    let scale = sigma * (0.5 * (ln_gamma(1.0 / alpha) - ln_gamma(3.0 / alpha))).exp();
    let gamma = Gamma::new(1.0 / alpha, 1.0).unwrap();
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let mag = scale * gamma.sample(&mut r).powf(1.0 / alpha);
            if r.random::<bool>() {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

/// Profile log-likelihood of a zero-mean GGD at shape `alpha`, with the scale
/// at its closed-form maximum.
fn ggd_profile_loglik(abs: &[f64], alpha: f64) -> f64 {
    let n = abs.len() as f64;
    let s_alpha = alpha / n * abs.iter().map(|v| v.powf(alpha)).sum::<f64>();
    let ln_s = s_alpha.ln() / alpha;
    n * (alpha.ln() - std::f64::consts::LN_2 - ln_s - ln_gamma(1.0 / alpha)) - n / alpha
}

/// Maximum-likelihood GGD fit by golden-section search over ln(alpha).
/// Returns (alpha, sigma) with sigma the implied standard deviation.
pub fn ggd_ml_fit(samples: &[f64]) -> (f64, f64) {
    let abs: Vec<f64> = samples.iter().map(|v| v.abs()).collect();
    let f = |la: f64| -ggd_profile_loglik(&abs, la.exp());
    let (mut lo, mut hi) = (0.2f64.ln(), 10f64.ln());
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > 1e-6 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    let alpha = ((lo + hi) / 2.0).exp();
    let n = abs.len() as f64;
    let s = (alpha / n * abs.iter().map(|v| v.powf(alpha)).sum::<f64>()).powf(1.0 / alpha);
    let sigma = s * ((ln_gamma(3.0 / alpha) - ln_gamma(1.0 / alpha)) / 2.0).exp();
    (alpha, sigma)
}

/// Direct windowed MSCN: every tap evaluated with explicit reflection.
pub fn naive_mscn(values: &[f64], w: usize, h: usize) -> Vec<f64> {
    let sigma = 7.0 / 6.0;
    let mut weights = [[0.0; 7]; 7];
    let mut total = 0.0;
    for (k, row) in weights.iter_mut().enumerate() {
        for (l, wt) in row.iter_mut().enumerate() {
            let (dk, dl) = (k as f64 - 3.0, l as f64 - 3.0);
            *wt = (-(dk * dk + dl * dl) / (2.0 * sigma * sigma)).exp();
            total += *wt;
        }
    }
    let refl = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let mut i = i;
        loop {
            if i < 0 {
                i = -i - 1;
            } else if i >= n {
                i = 2 * n - i - 1;
            } else {
                return i as usize;
            }
        }
    };
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (mut mu, mut m2) = (0.0, 0.0);
            for (k, row) in weights.iter().enumerate() {
                for (l, wt) in row.iter().enumerate() {
                    let xx = refl(x as isize + k as isize - 3, w);
                    let yy = refl(y as isize + l as isize - 3, h);
                    let v = values[yy * w + xx];
                    mu += wt / total * v;
                    m2 += wt / total * v * v;
                }
            }
            let var = (m2 - mu * mu).max(0.0);
            out[y * w + x] = (values[y * w + x] - mu) / (var.sqrt() + 1.0);
        }
    }
    out
}

pub fn noise_frame(w: usize, h: usize, mean: f64, std: f64, r: &mut ChaCha8Rng) -> LumaFrame {
    LumaFrame::from_fn(w, h, |_, _| {
        let v: f64 = StandardNormal.sample(r);
        (mean + std * v).round().clamp(0.0, 255.0) as u8
    })
    .unwrap()
}

pub fn noise_video(w: usize, h: usize, frames: usize, seed: u64) -> VideoSequence {
    let mut r = rng(seed);
    let frames = (0..frames).map(|_| noise_frame(w, h, 128.0, 40.0, &mut r)).collect();
    VideoSequence::new(frames, 30.0, "noise").unwrap()
}

/// Separable Gaussian blur with symmetric borders, rounded back to 8 bits.
pub fn blur(frame: &LumaFrame, sigma: f64) -> LumaFrame {
    if sigma <= 0.0 {
        return frame.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = taps.iter().sum();
    let (w, h) = (frame.width(), frame.height());
    let refl = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let mut i = i;
        while i < 0 || i >= n {
            i = if i < 0 { -i - 1 } else { 2 * n - i - 1 };
        }
        i as usize
    };
    let src = frame.to_f64();
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * src[y * w + refl(x as isize + i as isize - radius, w)])
                .sum::<f64>()
                / norm;
        }
    }
    LumaFrame::from_fn(w, h, |x, y| {
        let v = taps
            .iter()
            .enumerate()
            .map(|(i, t)| t * tmp[refl(y as isize + i as isize - radius, h) * w + x])
            .sum::<f64>()
            / norm;
        v.round().clamp(0.0, 255.0) as u8
    })
    .unwrap()
}

pub fn add_noise(frame: &LumaFrame, std: f64, r: &mut ChaCha8Rng) -> LumaFrame {
    if std <= 0.0 {
        return frame.clone();
    }
    LumaFrame::from_fn(frame.width(), frame.height(), |x, y| {
        let n: f64 = StandardNormal.sample(r);
        (f64::from(frame.get(x, y)) + std * n).round().clamp(0.0, 255.0) as u8
    })
    .unwrap()
}

/// Smooth random texture drifting by (vx, vy) pixels per frame.
pub fn textured_video(w: usize, h: usize, frames: usize, seed: u64) -> VideoSequence {
    let mut r = rng(seed);
    let waves: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                r.random_range(0.05..0.6),
                r.random_range(0.05..0.6),
                r.random_range(0.0..std::f64::consts::TAU),
                r.random_range(8.0..30.0),
            )
        })
        .collect();
    let (vx, vy) = (r.random_range(-1.5..1.5), r.random_range(-1.5..1.5));
    let grain = r.random_range(2.0..8.0);
    let frames = (0..frames)
        .map(|t| {
            let base = LumaFrame::from_fn(w, h, |x, y| {
                let (px, py) = (x as f64 - vx * t as f64, y as f64 - vy * t as f64);
                let v: f64 = waves
                    .iter()
                    .map(|&(fx, fy, ph, a)| a * (fx * px + fy * py + ph).sin())
                    .sum();
                (128.0 + v).round().clamp(0.0, 255.0) as u8
            })
            .unwrap();
            add_noise(&base, grain, &mut r)
        })
        .collect();
    VideoSequence::new(frames, 30.0, "texture").unwrap()
}
