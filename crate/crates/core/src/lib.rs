//! Training-free prototype retrieval and spatial grounding kernels.
//!
//! The crate turns annotated reference feature grids into filtered per-class
//! prototype banks, and turns a query feature grid plus a bank into a ranked
//! set of foreground point prompts for a promptable segmenter.
//!
//! # Overview
//!
//! - [`grid`] – feature grids, binary annotation masks, patch coverage and
//!   flat patch index sets, with their invariants checked at construction.
//! - [`gridops`] – per-patch L2 normalization, mask-to-patch alignment by
//!   block averaging, and strict coverage thresholding.
//! - [`bank`] – raw bank harvesting and cohesion distillation: cross-image
//!   coherence scoring with an adaptive per-class threshold, or within-image
//!   scoring when only one reference exists.
//! - [`tsg`] – max-cosine similarity landscape, loose candidate mask,
//!   8-connected component filtering, windowed peak detection with greedy NMS
//!   and pixel-space prompt emission.
//! - [`prompting`] – text prompt formatting, prompt validation and the
//!   normalized text+point payload handed to the segmenter.
//! - [`metrics`] – confusion counts and IoU / precision / recall / F1.
//!
//! # Features
//!
//! - `std` *(default)* – use the standard library. Without it the crate is
//!   `no_std` + `alloc`.
//! - `rayon` – scores bank candidates and evaluates similarity landscapes in
//!   parallel. Every value is computed by the same scalar code and collected
//!   in input order, so results are bit-identical to the serial build.
//!
//! All patches are addressed by the row-major flat index `p = i * grid_w + j`.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod bank;
pub mod error;
pub mod grid;
pub mod gridops;
pub mod metrics;
pub mod prompting;
pub mod tsg;

mod kernel;

pub use bank::{
    adaptive_threshold, build_raw_bank, distill, distill_single_reference, nn_match,
    score_coherence, BankVector, BuildRecord, ClassBank, Coherence, IccdParams, KappaMode, NnMatch,
    RawBank, Reference, Target,
};
pub use error::{Error, Result};
pub use grid::{AnnotationMask, FeatureGrid, PatchCoverage, PatchIndexSet};
pub use gridops::{align_mask, l2_normalize, select_foreground};
pub use metrics::{confusion, mean_over_classes, ConfusionCounts, Metrics};
pub use prompting::{
    build_payload, format_text_prompt, validate_prompts, ClassName, GroundingPayload, PayloadPoint,
};
pub use tsg::{
    connected_components, extract_peaks, ground, loose_mask, similarity_map, to_prompt_set,
    Component, Grounding, PatchMask, Peak, Prompt, PromptSet, SimilarityMap, TsgParams,
};
