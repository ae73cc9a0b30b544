//! Randomized Time Warping (RTW).
//!
//! Sequences of feature vectors are turned into sets of randomly time-warped
//! views ([`sampling`]), compressed into low-dimensional "hypo subspaces"
//! ([`subspace`]) and compared through canonical angles ([`msm`]). The
//! [`classifier`] builds per-class reference banks on top of that, and
//! [`attention`] traces canonical vectors back to per-frame contribution
//! weights so they can be set against multi-head self-attention patterns.
//!
//! [`synth`] generates warped synthetic datasets. [`io`], [`config`],
//! [`view`] and [`harness`] hold the file formats, run configuration, view
//! extraction and pipelines used by the `rtw` command line tool.

pub mod attention;
pub mod classifier;
pub mod config;
pub mod error;
pub mod harness;
pub mod io;
mod linalg;
pub mod msm;
pub mod rng;
pub mod sampling;
pub mod subspace;
pub mod synth;
pub mod view;

pub use attention::{AttentionPattern, MatchReport, PatternKind, SelfAttentionConfig};
pub use classifier::{BuildConfig, ClassificationResult, ReferenceBank, SeedPolicy};
pub use config::RunConfig;
pub use error::{Result, RtwError};
pub use msm::{CanonicalDecomposition, Side};
pub use sampling::{FeatureSequence, TEFeature, TESet};
pub use subspace::HypoSubspace;
pub use synth::SynthSpec;
