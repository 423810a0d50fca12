//! Score-level multi-biometric and biographical identity de-duplication.
//!
//! Identifiers (fingerprint, face, name fields, ...) are fused one stage at
//! a time; a veto ensemble of logistic-regression models decides after each
//! stage whether the rank-1 candidate is already certain. The numeric core
//! is generic over `f32` and `f64`; the aliases below fix the scalar for
//! callers that do not care.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod io;
pub mod normalize;
pub mod pipeline;
pub mod predictor;
pub mod rng;
mod scalar;
pub mod scores;
pub mod textsim;

pub use error::{Error, Result};
pub use scalar::Real;

pub use eval::{CmcCurve, EvalCurve, PeetCurve, VerificationRates};
pub use pipeline::{DedupDecision, FusionModel, StopRule};
pub use predictor::{StageVerdict, VetoEnsemble};
pub use scores::{IdentifierId, IdentifierKind, QualityLevel, ScoreMatrix, ScoreSet};
pub use textsim::{CanonicalString, DistanceKind, SimilarityScore};

pub type NormStatsF64 = normalize::NormStats<f64>;
pub type NormStatsF32 = normalize::NormStats<f32>;
pub type FusionModelF64 = FusionModel<f64>;
pub type FusionModelF32 = FusionModel<f32>;
pub type VetoEnsembleF64 = VetoEnsemble<f64>;
pub type VetoEnsembleF32 = VetoEnsemble<f32>;
pub type ScoreMatrixF64 = ScoreMatrix<f64>;
pub type ScoreMatrixF32 = ScoreMatrix<f32>;
pub type ScoreSetF64 = ScoreSet<f64>;
pub type ScoreSetF32 = ScoreSet<f32>;
pub type DedupDecisionF64 = DedupDecision<f64>;
pub type DensityModelF64 = fusion::DensityModel<f64>;
