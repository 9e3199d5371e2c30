//! File formats, synthetic data, pipeline glue and evaluation around
//! `patchground-core`.

pub mod eval;
pub mod interchange;
pub mod pipeline;
pub mod synth;
