//! Quality prediction for compressed videos whose references are themselves
//! distorted.
//!
//! The model pools natural-scene statistics of video frames (spatial MSCN
//! shape parameters) and of displaced frame differences (spatio-temporal MSCN
//! shape and spread parameters), taken from both the reference and the
//! compressed video at two scales, and maps them to a quality score with an
//! RBF epsilon-SVR. The crate also carries the evaluation protocol (rank and
//! linear correlation after a logistic mapping, content-disjoint random splits,
//! rank-sum significance tests) and subjective-study tooling (Z-scores, MOS,
//! split-half consistency, SI/TI).

pub mod error;
pub mod evaluation;
pub mod features;
pub mod nss;
pub mod regressor;
pub mod subjective;
pub mod table;
pub mod temporal;
pub mod video;

pub use error::{Result, VqaError};
pub use features::{
    extract_batch, extract_features, extract_features_from_files, FeatureVector, ManifestRow, Variant, VariantConfig,
};
pub use nss::{compute_mscn, fit_ggd, GgdFit, MscnField};
pub use regressor::{predict, train, Hyperparams, TrainedModel};
pub use temporal::{displaced_difference, nvs_fits_for_pair, DifferenceField, DirectionSet, DisplacementDirection};
pub use video::{downscale_by_2, load_y4m, LumaFrame, VideoSequence};

/// Crate version, recorded in run provenance and model files.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
