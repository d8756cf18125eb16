//! Hyperdimensional image classification and differential fuzzing.
//!
//! The classifier encodes a grayscale image as the bundle of
//! `position ⊛ value` hypervectors and predicts by cosine similarity against
//! per-class references. The fuzzer mutates inputs until the predicted label
//! flips, steering by distance from the reference class.

pub mod dataset;
pub mod defense;
pub mod error;
pub mod fuzz;
pub mod hv;
pub mod image;
pub mod model;
pub mod report;
pub mod rng;

pub use dataset::LabeledDataset;
pub use defense::{run_defense, DefenseConfig, DefenseOutcome, DefenseSummary, ReattackMode};
pub use error::{Error, Result};
pub use fuzz::{
    fuzz_campaign, fuzz_campaign_with, fuzz_one, CampaignReport, CampaignSummary, CaseRecord, FuzzConfig, FuzzOutcome,
    FuzzResult, MutationStrategy, Norm,
};
pub use hv::{Accumulator, Hypervector};
pub use image::Image;
pub use model::{HdcModel, ModelSpec, Prediction};
pub use report::{emit_case_triples, per_class_stats, render_table, PerClassStats, RenderedTable};
pub use rng::RngStream;
