//! Detection-head engine for human-object interaction (HOI) detection.
//!
//! Everything here sits *below* the neural network: dense interaction-region
//! target assignment, the classification/regression loss family with analytic
//! gradients, voting-based fusion of per-region predictions into scored
//! `<human, verb, object>` triplets, role mAP evaluation, and a synthetic scene
//! harness that drives all of it end to end.
//!
//! Module map:
//!
//! | module | contents |
//! |---|---|
//! | [`geometry`] | boxes, IoU/coverage, anchor grids, regression deltas |
//! | [`assignment`] | interaction-region decision and per-anchor targets |
//! | [`losses`] | ignorance / focal / foreground losses, smooth-L1, BCE |
//! | [`voting`] | region-to-instance matching, Gaussian location voting, triplet scoring |
//! | [`eval`] | greedy triplet matching, all-points AP, mAP_role |
//! | [`harness`] | synthetic scenes, file formats, config, ablation and benchmark drivers |

pub mod assignment;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod harness;
pub mod losses;
pub mod voting;

pub use error::{Error, Result};
