//! Identification of all k-weakly-relevant variables in a tabular dataset
//! by exhaustive multidimensional conditional-mutual-information search.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`dataset`] ingests delimited text and discretizes continuous
//!    variables into equipotent categories, optionally with randomly
//!    shifted split points.
//! 2. [`scan`] enumerates every k-tuple of descriptors, builds each
//!    tuple's contingency table with the response, and reduces each
//!    member's conditional mutual information to a per-variable extreme.
//! 3. [`calibrate`] turns the extremes into p-values through the
//!    chi-squared law and a fitted exponential extreme-value model, then
//!    applies Bonferroni-Holm or Benjamini-Hochberg selection.
//! 4. [`synth`] generates benchmark datasets with known ground truth.

pub mod calibrate;
pub mod dataset;
pub mod scan;
pub mod synth;

pub use calibrate::{
    bh_select, build_report, chi2_survival, estimate_gamma, exponential_pvalue, holm_select,
    pmin_from_score, ExponentialFit, GammaCalibration, GammaConfig, Method, SelectionReport,
};
pub use dataset::{
    discretize_dataset, discretize_equipotent, discretize_shifted, ingest, DiscreteMatrix,
    DiscretizationSpec, RawDataset,
};
pub use scan::info::{
    build_contingency, conditional_mutual_information, entropy, evaluate_tuple,
    interaction_information, ContingencyTable, TupleResult,
};
pub use scan::{merge_scores, scan_k, ScanMode, ScanOptions, VariableScore};
pub use synth::{generate, Manifest, ResponseKind, SynthConfig};
