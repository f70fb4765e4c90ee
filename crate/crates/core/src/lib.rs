//! Multiresolution detection of level shifts in long-range-dependent
//! series.
//!
//! A scale-1 series is aggregated over windows of `b^(k-1)` samples for
//! `k = 1..=M`, each window sum divided by `L^H` so that fractional Gaussian
//! noise keeps unit variance at every scale. A time is flagged when the
//! largest absolute value across its scales exceeds a family-wise critical
//! value calibrated to the cross-scale correlation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detect;
pub mod error;
pub mod eval;
pub mod fgn;
pub mod normal;
pub mod pyramid;
pub mod rng;
pub mod threshold;

pub use detect::{
    detect, flags_to_intervals, pvalue_map, standardize, DetectionConfig, DetectionResult,
    Interval, PValueMap, Standardization,
};
pub use error::{Error, Result};
pub use eval::{
    confusion, inject, metrics, naive_baseline, run_experiment, ConfusionCounts, ExperimentConfig,
    ExperimentReport, InjectionSpec, MetricSummary,
};
pub use fgn::{
    estimate_hurst, fbm_cov, fgn_acf, synthesize_fgn, FgnGenerator, LrdModel, TimeSeries,
};
pub use pyramid::{build_nowa, build_swa, Method, Pyramid, ScaleConfig, StreamState};
pub use threshold::{
    asymptotic_threshold, compute_threshold, cross_scale_corr, improved_threshold, power_gap,
    power_single_scale, power_two_scale, scale_cov_matrix, two_scale_expansion, ThresholdKind,
    ThresholdQuery, ThresholdResult,
};
