//! Variable read disturbance (VRD) laboratory.
//!
//! Models DRAM rows whose read-disturbance threshold (RDT) changes from one
//! measurement to the next, profiles them with a bounded hammer-count sweep,
//! and analyzes the resulting series.

pub mod device;
pub mod num;
pub mod params;
pub mod profiler;
pub mod seed;
pub mod timing;
pub mod report;
pub mod campaign;
pub mod ecc;
pub mod mitigation;
pub mod sampling;
pub mod stats;

/// Exact rational scalar for the subset-sampling combinatorics.
pub type Exact = num_rational::Ratio<i128>;
pub type SeriesStatsF64 = stats::SeriesStats<f64>;
pub type SeriesStatsF32 = stats::SeriesStats<f32>;
pub type EccProbabilitiesF64 = ecc::EccProbabilities<f64>;
pub type EccProbabilitiesF32 = ecc::EccProbabilities<f32>;
pub type BerF64 = ecc::Ber<f64>;
