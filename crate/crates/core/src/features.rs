//! Per-pair feature extraction: spatial (NFS) shape parameters and
//! displaced-difference (NVS) shape/spread parameters, at two scales, for both
//! the reference and the compressed video, mean pooled over time.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VqaError};
use crate::nss::{compute_mscn, fit_ggd_or_fallback};
use crate::temporal::{nvs_fits_for_pair, DirectionSet};
use crate::video::{downscale_by_2, open_y4m, LumaFrame, VideoSequence};

/// Smallest scale-1 frame side; scale 2 must still fit a frame pair.
pub const MIN_FEATURE_SIDE: usize = 18;

/// Base model and the three ablations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "base")]
    Base,
    #[serde(rename = "I")]
    I,
    #[serde(rename = "II")]
    II,
    #[serde(rename = "III")]
    III,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Base, Variant::I, Variant::II, Variant::III];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::I => "I",
            Variant::II => "II",
            Variant::III => "III",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = VqaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Variant::Base),
            "I" | "i" => Ok(Variant::I),
            "II" | "ii" => Ok(Variant::II),
            "III" | "iii" => Ok(Variant::III),
            other => Err(VqaError::Validation(format!(
                "unknown variant {other:?} (expected base, I, II or III)"
            ))),
        }
    }
}

/// What to extract for one variant. Always built from a [`Variant`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawVariantConfig")]
pub struct VariantConfig {
    pub name: Variant,
    pub nvs_scales: NvsScales,
    pub direction_set: DirectionSet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NvsScales {
    /// Original resolution only.
    One,
    /// Original and half resolution.
    Both,
}

#[derive(Deserialize)]
struct RawVariantConfig {
    name: Variant,
    nvs_scales: NvsScales,
    direction_set: DirectionSet,
}

impl TryFrom<RawVariantConfig> for VariantConfig {
    type Error = String;

    fn try_from(raw: RawVariantConfig) -> std::result::Result<Self, Self::Error> {
        let cfg = VariantConfig::of(raw.name);
        if cfg.nvs_scales != raw.nvs_scales || cfg.direction_set != raw.direction_set {
            return Err(format!("inconsistent settings for variant {}", raw.name));
        }
        Ok(cfg)
    }
}

impl VariantConfig {
    pub fn of(name: Variant) -> Self {
        let (nvs_scales, direction_set) = match name {
            Variant::Base => (NvsScales::Both, DirectionSet::Diagonal4),
            Variant::I => (NvsScales::One, DirectionSet::Diagonal4),
            Variant::II => (NvsScales::Both, DirectionSet::Cardinal4Center),
            Variant::III => (NvsScales::Both, DirectionSet::All8Center),
        };
        VariantConfig {
            name,
            nvs_scales,
            direction_set,
        }
    }

    pub fn base() -> Self {
        Self::of(Variant::Base)
    }

    fn has_nvs_at(&self, scale: usize) -> bool {
        scale == 1 || self.nvs_scales == NvsScales::Both
    }

    /// Feature labels for one source video (`ref` or `cmp`).
    fn block_labels(&self, source: &str) -> Vec<String> {
        let mut labels = Vec::new();
        for scale in 1..=2 {
            labels.push(format!("{source}.s{scale}.nfs.alpha"));
            if self.has_nvs_at(scale) {
                for dir in self.direction_set.directions() {
                    labels.push(format!("{source}.s{scale}.{}.alpha", dir.label()));
                    labels.push(format!("{source}.s{scale}.{}.sigma", dir.label()));
                }
            }
        }
        labels
    }

    /// Ordered labels of the full feature vector.
    pub fn labels(&self) -> Vec<String> {
        let mut labels = self.block_labels("ref");
        labels.extend(self.block_labels("cmp"));
        labels
    }

    pub fn feature_count(&self) -> usize {
        2 * self.block_len()
    }

    fn block_len(&self) -> usize {
        let nvs_scales = if self.nvs_scales == NvsScales::Both { 2 } else { 1 };
        2 + nvs_scales * 2 * self.direction_set.directions().len()
    }

    /// The variant whose label sequence equals `labels`, if any.
    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> Option<Self> {
        Variant::ALL.into_iter().map(Self::of).find(|cfg| {
            let want = cfg.labels();
            want.len() == labels.len() && want.iter().zip(labels).all(|(a, b)| a == b.as_ref())
        })
    }
}

impl Default for VariantConfig {
    fn default() -> Self {
        Self::base()
    }
}

/// Labeled features of one (reference, compressed) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub labels: Vec<String>,
    pub variant: VariantConfig,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, variant: VariantConfig) -> Result<Self> {
        if values.len() != variant.feature_count() {
            return Err(VqaError::Shape(format!(
                "variant {} has {} features, got {}",
                variant.name,
                variant.feature_count(),
                values.len()
            )));
        }
        Ok(FeatureVector {
            values,
            labels: variant.labels(),
            variant,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.labels.iter().position(|l| l == label).map(|i| self.values[i])
    }

    /// Reference block followed by compressed block.
    pub fn blocks(&self) -> (&[f64], &[f64]) {
        self.values.split_at(self.values.len() / 2)
    }
}

/// Running sums of per-frame statistics at one scale.
struct ScaleState {
    nvs: bool,
    prev: Option<LumaFrame>,
    nfs_mean: f64,
    nvs_mean: Vec<(f64, f64)>,
}

/// Running mean: exact when every value is the same, and fixed-order.
fn update_mean(mean: &mut f64, value: f64, count: usize) {
    *mean += (value - *mean) / count as f64;
}

/// Streaming per-video extractor; frames are pooled in arrival order.
pub struct VideoFeatureAccumulator {
    variant: VariantConfig,
    scales: [ScaleState; 2],
    frames: usize,
    dims: Option<(usize, usize)>,
}

impl VideoFeatureAccumulator {
    pub fn new(variant: VariantConfig) -> Self {
        let n_dirs = variant.direction_set.directions().len();
        let scale = |nvs: bool| ScaleState {
            nvs,
            prev: None,
            nfs_mean: 0.0,
            nvs_mean: vec![(0.0, 0.0); if nvs { n_dirs } else { 0 }],
        };
        VideoFeatureAccumulator {
            variant,
            scales: [scale(true), scale(variant.has_nvs_at(2))],
            frames: 0,
            dims: None,
        }
    }

    pub fn push(&mut self, frame: LumaFrame) -> Result<()> {
        let dims = (frame.width(), frame.height());
        match self.dims {
            None => {
                if dims.0 < MIN_FEATURE_SIDE || dims.1 < MIN_FEATURE_SIDE {
                    return Err(VqaError::DegenerateInput(format!(
                        "{}x{} video; feature extraction needs at least {MIN_FEATURE_SIDE}x{MIN_FEATURE_SIDE}",
                        dims.0, dims.1
                    )));
                }
                self.dims = Some(dims);
            }
            Some(d) if d != dims => {
                return Err(VqaError::Shape(format!(
                    "frame {} is {}x{}, expected {}x{}",
                    self.frames, dims.0, dims.1, d.0, d.1
                )));
            }
            Some(_) => {}
        }

        let half = downscale_by_2(&frame)?;
        let directions = self.variant.direction_set.directions();
        for (state, frame) in self.scales.iter_mut().zip([frame, half]) {
            let mscn = compute_mscn(&frame)?;
            update_mean(
                &mut state.nfs_mean,
                fit_ggd_or_fallback(mscn.coefficients())?.alpha,
                self.frames + 1,
            );
            if state.nvs {
                if let Some(prev) = &state.prev {
                    let fits = nvs_fits_for_pair(prev, &frame, directions)?;
                    for (acc, (_, fit)) in state.nvs_mean.iter_mut().zip(fits) {
                        update_mean(&mut acc.0, fit.alpha, self.frames);
                        update_mean(&mut acc.1, fit.sigma, self.frames);
                    }
                }
                state.prev = Some(frame);
            }
        }
        self.frames += 1;
        Ok(())
    }

    pub fn frames_seen(&self) -> usize {
        self.frames
    }

    /// Mean-pooled block in label order.
    pub fn finish(self) -> Result<Vec<f64>> {
        if self.frames < 2 {
            return Err(VqaError::Validation(format!(
                "a video needs at least 2 frames, got {}",
                self.frames
            )));
        }
        let mut block = Vec::with_capacity(self.variant.block_len());
        for state in &self.scales {
            block.push(state.nfs_mean);
            for &(a, s) in &state.nvs_mean {
                block.push(a);
                block.push(s);
            }
        }
        Ok(block)
    }
}

/// Features of one video, computed independently of its counterpart.
pub fn extract_video_block<I>(frames: I, variant: VariantConfig) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = Result<LumaFrame>>,
{
    let mut acc = VideoFeatureAccumulator::new(variant);
    for frame in frames {
        acc.push(frame?)?;
    }
    acc.finish()
}

pub fn extract_features(
    reference: &VideoSequence,
    compressed: &VideoSequence,
    variant: VariantConfig,
) -> Result<FeatureVector> {
    let ref_block = extract_video_block(reference.frames().iter().cloned().map(Ok), variant)?;
    let cmp_block = extract_video_block(compressed.frames().iter().cloned().map(Ok), variant)?;
    FeatureVector::new([ref_block, cmp_block].concat(), variant)
}

fn extract_file_block(path: &Path, variant: VariantConfig) -> Result<Vec<f64>> {
    extract_video_block(open_y4m(path)?, variant)
}

/// Streams both files frame by frame; the result equals
/// `extract_features(load_y4m(ref), load_y4m(cmp), variant)`.
pub fn extract_features_from_files(
    reference: impl AsRef<Path>,
    compressed: impl AsRef<Path>,
    variant: VariantConfig,
) -> Result<FeatureVector> {
    let ref_block = extract_file_block(reference.as_ref(), variant)?;
    let cmp_block = extract_file_block(compressed.as_ref(), variant)?;
    FeatureVector::new([ref_block, cmp_block].concat(), variant)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRow {
    pub id: String,
    pub ref_path: PathBuf,
    pub cmp_path: PathBuf,
}

#[derive(Debug)]
pub struct BatchRow {
    pub id: String,
    pub result: Result<FeatureVector>,
}

/// Extraction results in manifest order, failures included.
#[derive(Debug)]
pub struct BatchOutput {
    pub variant: VariantConfig,
    pub rows: Vec<BatchRow>,
}

impl BatchOutput {
    pub fn successes(&self) -> impl Iterator<Item = (&str, &FeatureVector)> {
        self.rows
            .iter()
            .filter_map(|r| r.result.as_ref().ok().map(|f| (r.id.as_str(), f)))
    }

    pub fn failures(&self) -> impl Iterator<Item = (&str, &VqaError)> {
        self.rows
            .iter()
            .filter_map(|r| r.result.as_ref().err().map(|e| (r.id.as_str(), e)))
    }

    pub fn has_failures(&self) -> bool {
        self.failures().next().is_some()
    }

    pub fn to_table(&self) -> crate::table::FeatureTable {
        let mut table = crate::table::FeatureTable::new(self.variant);
        for (id, fv) in self.successes() {
            table.rows.push((id.to_string(), fv.values.clone()));
        }
        table
    }
}

/// Extracts every manifest row on a pool of `workers` threads (0 = all cores).
///
/// Each row is computed sequentially, so results do not depend on the pool size.
pub fn extract_batch(manifest: &[ManifestRow], variant: VariantConfig, workers: usize) -> Result<BatchOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| VqaError::Validation(format!("thread pool: {e}")))?;
    let rows = pool.install(|| {
        manifest
            .par_iter()
            .map(|row| BatchRow {
                id: row.id.clone(),
                result: extract_features_from_files(&row.ref_path, &row.cmp_path, variant),
            })
            .collect()
    });
    Ok(BatchOutput { variant, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_counts() {
        assert_eq!(VariantConfig::of(Variant::Base).feature_count(), 36);
        assert_eq!(VariantConfig::of(Variant::I).feature_count(), 20);
        assert_eq!(VariantConfig::of(Variant::II).feature_count(), 44);
        assert_eq!(VariantConfig::of(Variant::III).feature_count(), 76);
        for v in Variant::ALL {
            let cfg = VariantConfig::of(v);
            assert_eq!(cfg.labels().len(), cfg.feature_count());
            assert_eq!(VariantConfig::from_labels(&cfg.labels()), Some(cfg));
        }
    }

    #[test]
    fn variant_json_rejects_inconsistent_settings() {
        let ok = serde_json::to_string(&VariantConfig::of(Variant::II)).unwrap();
        assert_eq!(
            serde_json::from_str::<VariantConfig>(&ok).unwrap(),
            VariantConfig::of(Variant::II)
        );
        let bad = r#"{"name":"I","nvs_scales":"both","direction_set":"diagonal4"}"#;
        assert!(serde_json::from_str::<VariantConfig>(bad).is_err());
    }

    #[test]
    fn constant_video_yields_fallbacks() {
        let frames = vec![LumaFrame::filled(32, 32, 128).unwrap(); 2];
        let video = VideoSequence::new(frames, 30.0, "gray").unwrap();
        let fv = extract_features(&video, &video, VariantConfig::base()).unwrap();
        assert_eq!(fv.len(), 36);
        for (label, v) in fv.labels.iter().zip(&fv.values) {
            let want = if label.ends_with("sigma") { 0.0 } else { 2.0 };
            assert_eq!(*v, want, "{label}");
        }
    }

    #[test]
    fn small_video_is_rejected() {
        let frames = vec![LumaFrame::filled(17, 40, 1).unwrap(); 2];
        let video = VideoSequence::new(frames, 30.0, "narrow").unwrap();
        assert!(matches!(
            extract_features(&video, &video, VariantConfig::base()),
            Err(VqaError::DegenerateInput(_))
        ));
    }

    #[test]
    fn empty_manifest() {
        let out = extract_batch(&[], VariantConfig::base(), 1).unwrap();
        assert!(out.rows.is_empty());
        assert!(!out.has_failures());
    }
}
