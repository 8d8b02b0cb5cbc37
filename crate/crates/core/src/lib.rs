//! Retweet diffusion network toolkit.
//!
//! Reconstructs retweet diffusion trees from archived cascade records,
//! fits a per-user spreading-rate model in log space and simulates
//! SI-style diffusion driven by that model.

pub mod cascade;
pub mod cli;
pub mod graphcore;
pub mod ingest;
pub mod rdn;
pub mod regress;

pub use cascade::{AttributeSampler, CascadeConfig, SimulationMode};
pub use graphcore::{DegreeHistogram, DiffusionTree, Provenance};
pub use ingest::{parse_cascade, validate, CascadeDataset, CascadeRecord, ValidationReport};
pub use rdn::{build_rdn, AttachmentRule, BuildLog, RuleKind};
pub use regress::{BetaSample, Feature, FeatureSet, FitReport, SpreadModel};
