//! Subjective-study processing (Z-scores, MOS, split-half consistency) and
//! SI/TI content descriptors.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VqaError};
use crate::evaluation::{iteration_rng, median, srocc};
use crate::table::format_f64;
use crate::video::{reflect, LumaFrame, VideoSequence};

pub const MIN_RATINGS_PER_VIDEO: usize = 2;
pub const MIN_SPLIT_HALF_RATINGS: usize = 4;
pub const MOS_MIN: f64 = 1.0;
pub const MOS_MAX: f64 = 100.0;
/// How per-video mean Z-scores are mapped onto the MOS range.
pub const MOS_RESCALE: &str = "global-linear";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub subject_id: String,
    pub session: u8,
    pub video_id: String,
    pub raw_score: f64,
}

/// Raw opinion scores, one per (subject, session, video).
#[derive(Clone, Debug, PartialEq)]
pub struct RatingTable {
    rows: Vec<Rating>,
}

impl RatingTable {
    pub fn new(rows: Vec<Rating>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &rows {
            if r.session != 1 && r.session != 2 {
                return Err(VqaError::Validation(format!(
                    "subject {:?}: session {} is not 1 or 2",
                    r.subject_id, r.session
                )));
            }
            if !(r.raw_score.is_finite() && (MOS_MIN..=MOS_MAX).contains(&r.raw_score)) {
                return Err(VqaError::Validation(format!(
                    "subject {:?}, video {:?}: raw score {} outside [1, 100]",
                    r.subject_id, r.video_id, r.raw_score
                )));
            }
            if !seen.insert((r.subject_id.as_str(), r.session, r.video_id.as_str())) {
                return Err(VqaError::Validation(format!(
                    "duplicate rating for subject {:?}, session {}, video {:?}",
                    r.subject_id, r.session, r.video_id
                )));
            }
        }
        Ok(RatingTable { rows })
    }

    pub fn rows(&self) -> &[Rating] {
        &self.rows
    }

    /// CSV with header `subject_id,session,video_id,raw_score`.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let rows = reader.deserialize().collect::<Result<Vec<Rating>, _>>()?;
        RatingTable::new(rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| VqaError::io(path, e))?;
        RatingTable::read_csv(BufReader::new(file))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub subject_id: String,
    pub session: u8,
    pub video_id: String,
    pub z: f64,
}

/// Standardizes each subject's scores within each session (sample std).
pub fn zscore(ratings: &RatingTable) -> Result<Vec<ZScore>> {
    let mut groups: HashMap<(&str, u8), Vec<f64>> = HashMap::new();
    for r in ratings.rows() {
        groups
            .entry((r.subject_id.as_str(), r.session))
            .or_default()
            .push(r.raw_score);
    }
    let mut stats = HashMap::with_capacity(groups.len());
    for (&(subject, session), scores) in &groups {
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = if scores.len() < 2 {
            0.0
        } else {
            scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)
        };
        if var <= 0.0 {
            return Err(VqaError::DegenerateSubject {
                subject: subject.to_string(),
                session,
            });
        }
        stats.insert((subject, session), (mean, var.sqrt()));
    }
    Ok(ratings
        .rows()
        .iter()
        .map(|r| {
            let (mean, std) = stats[&(r.subject_id.as_str(), r.session)];
            ZScore {
                subject_id: r.subject_id.clone(),
                session: r.session,
                video_id: r.video_id.clone(),
                z: (r.raw_score - mean) / std,
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MosEntry {
    pub video_id: String,
    pub ratings: usize,
    pub mean_z: f64,
    pub mos: f64,
}

/// Videos in first-appearance order with their Z-values.
fn z_by_video(z: &[ZScore]) -> Vec<(&str, Vec<&ZScore>)> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut out: Vec<(&str, Vec<&ZScore>)> = Vec::new();
    for row in z {
        let i = *index.entry(row.video_id.as_str()).or_insert_with(|| {
            out.push((row.video_id.as_str(), Vec::new()));
            out.len() - 1
        });
        out[i].1.push(row);
    }
    out
}

/// Per-video mean Z-score, rescaled linearly so the lowest video maps to 1
/// and the highest to 100.
pub fn mos(z: &[ZScore]) -> Result<Vec<MosEntry>> {
    let videos = z_by_video(z);
    let mut entries = Vec::with_capacity(videos.len());
    for (video, rows) in &videos {
        if rows.len() < MIN_RATINGS_PER_VIDEO {
            return Err(VqaError::Coverage {
                video: video.to_string(),
                count: rows.len(),
                required: MIN_RATINGS_PER_VIDEO,
            });
        }
        let mean_z = rows.iter().map(|r| r.z).sum::<f64>() / rows.len() as f64;
        entries.push(MosEntry {
            video_id: video.to_string(),
            ratings: rows.len(),
            mean_z,
            mos: 0.0,
        });
    }
    let lo = entries.iter().map(|e| e.mean_z).fold(f64::INFINITY, f64::min);
    let hi = entries.iter().map(|e| e.mean_z).fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Err(VqaError::Validation(
            "MOS rescaling needs at least two videos with different mean Z-scores".into(),
        ));
    }
    for e in &mut entries {
        e.mos = MOS_MIN + (MOS_MAX - MOS_MIN) * (e.mean_z - lo) / (hi - lo);
    }
    Ok(entries)
}

pub fn write_zscores_csv<W: Write>(z: &[ZScore], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subject_id", "session", "video_id", "z"])?;
    for r in z {
        w.write_record([&r.subject_id, &r.session.to_string(), &r.video_id, &format_f64(r.z)])?;
    }
    w.flush().map_err(|e| VqaError::io("<csv output>", e))
}

pub fn write_mos_csv<W: Write>(entries: &[MosEntry], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["video_id", "ratings", "mean_z", "mos"])?;
    for e in entries {
        w.write_record([
            &e.video_id,
            &e.ratings.to_string(),
            &format_f64(e.mean_z),
            &format_f64(e.mos),
        ])?;
    }
    w.flush().map_err(|e| VqaError::io("<csv output>", e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub seed: u64,
    pub repeats: usize,
    pub videos: usize,
    pub median_srocc: f64,
    pub srocc: Vec<f64>,
}

/// Median SROCC between the MOS of two random disjoint, equal-sized halves of
/// each video's subjects. A subject who rated a video in both sessions
/// contributes the mean of those Z-values to whichever half they land in.
pub fn split_half_consistency(ratings: &RatingTable, repeats: usize, seed: u64) -> Result<ConsistencyReport> {
    if repeats == 0 {
        return Err(VqaError::Validation("repeat count must be positive".into()));
    }
    let z = zscore(ratings)?;
    let mut per_video: Vec<Vec<f64>> = Vec::new();
    for (video, rows) in z_by_video(&z) {
        if rows.len() < MIN_SPLIT_HALF_RATINGS {
            return Err(VqaError::Validation(format!(
                "video {video:?} has {} ratings; split-half analysis needs at least {MIN_SPLIT_HALF_RATINGS}",
                rows.len()
            )));
        }
        let mut subjects: Vec<(&str, f64, usize)> = Vec::new();
        for r in rows {
            match subjects.iter_mut().find(|s| s.0 == r.subject_id) {
                Some(s) => {
                    s.1 += r.z;
                    s.2 += 1;
                }
                None => subjects.push((r.subject_id.as_str(), r.z, 1)),
            }
        }
        if subjects.len() < 2 {
            return Err(VqaError::Validation(format!(
                "video {video:?} was rated by a single subject"
            )));
        }
        per_video.push(subjects.into_iter().map(|(_, sum, n)| sum / n as f64).collect());
    }
    if per_video.len() < 3 {
        return Err(VqaError::Validation(format!(
            "split-half SROCC needs at least 3 videos, got {}",
            per_video.len()
        )));
    }

    let values: Vec<f64> = (0..repeats)
        .into_par_iter()
        .map(|rep| {
            let mut rng = iteration_rng(seed, rep as u64);
            let (mut a, mut b) = (Vec::with_capacity(per_video.len()), Vec::with_capacity(per_video.len()));
            for subjects in &per_video {
                let mut order = subjects.clone();
                order.shuffle(&mut rng);
                let half = order.len() / 2;
                a.push(order[..half].iter().sum::<f64>() / half as f64);
                b.push(order[half..2 * half].iter().sum::<f64>() / half as f64);
            }
            match srocc(&a, &b) {
                Ok(r) => Ok(r),
                Err(VqaError::UndefinedCorrelation(_)) => Ok(0.0),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    Ok(ConsistencyReport {
        seed,
        repeats,
        videos: per_video.len(),
        median_srocc: median(&values),
        srocc: values,
    })
}

/// Spatial and temporal perceptual information.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiTi {
    pub si: f64,
    pub ti: f64,
}

fn population_std(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    let mean = sum / n as f64;
    (values.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt()
}

/// 3x3 Sobel gradient magnitude with symmetric borders.
pub fn sobel_magnitude(frame: &LumaFrame) -> Vec<f64> {
    let (w, h) = (frame.width(), frame.height());
    let px = |x: isize, y: isize| f64::from(frame.get(reflect(x, w), reflect(y, h)));
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (px(x + 1, y - 1) + 2.0 * px(x + 1, y) + px(x + 1, y + 1))
                - (px(x - 1, y - 1) + 2.0 * px(x - 1, y) + px(x - 1, y + 1));
            let gy = (px(x - 1, y + 1) + 2.0 * px(x, y + 1) + px(x + 1, y + 1))
                - (px(x - 1, y - 1) + 2.0 * px(x, y - 1) + px(x + 1, y - 1));
            out.push(gx.hypot(gy));
        }
    }
    out
}

pub fn compute_siti(video: &VideoSequence) -> SiTi {
    let frames = video.frames();
    let si = frames
        .iter()
        .map(|f| population_std(sobel_magnitude(f).into_iter()))
        .fold(0.0, f64::max);
    let ti = frames
        .windows(2)
        .map(|pair| {
            let diff = pair[0]
                .samples()
                .iter()
                .zip(pair[1].samples())
                .map(|(&a, &b)| f64::from(a) - f64::from(b));
            population_std(diff)
        })
        .fold(0.0, f64::max);
    SiTi { si, ti }
}
