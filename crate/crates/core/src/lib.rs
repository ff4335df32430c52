//! Apparent homogenized tensors of random two-phase media, with
//! defect-based control variates.
//!
//! The library computes the apparent homogenized tensor of a two-phase
//! random coefficient on a truncated periodic cell and reduces the Monte
//! Carlo variance of its estimation with control variates built from a
//! defect catalog: deterministic solves with zero, one and two defect
//! cells. A weakly-stochastic expansion covers the near-deterministic
//! regimes, a reduced-basis projection keeps the catalog affordable, and
//! a closed-form one-dimensional model provides exact enumeration oracles
//! for the variance scalings.
//!
//! Batch work (sampling, catalog fills, sweeps) is data-parallel over
//! deterministic per-item seeds; build without the default `parallel`
//! feature for a fully sequential binary with identical results.

pub mod catalog;
pub mod cv;
pub mod error;
pub mod exec;
pub mod field;
pub mod oned;
pub mod rb;
pub mod rho;
pub mod rng;
pub mod solver;
pub mod stats;
pub mod tensor;

pub use catalog::{
    one_defect_tensor, two_defect_tensor, CatalogOptions, DefectCatalog, Offset, Side,
    SymmetryLevel,
};
pub use cv::{
    attach_surrogates, controlled_value, degraded_second_order, draw_batch, estimate,
    optimal_rho_single, optimal_rho_triple, surrogate_first, surrogate_second, variance_ratio,
    weak_report, EstimatorKind, EstimatorReport, RhoPolicy, SampleBatch, SampleRecord,
};
pub use error::{Error, Result};
pub use field::{coefficient_at, DefectField, MaterialModel, Phase};
pub use oned::{
    enumerate_exact_moments, moment_bound_check, scaling_study, Controls1d, Enumeration1d,
    Moment, Observable, OneDModel, ScalingStudy,
};
pub use rb::{
    all_offsets, build_basis, build_reduced_catalog, named_snapshot_set, rb_two_defect_tensor,
    RbDiagnostics, ReducedBasisSet,
};
pub use solver::{
    apparent_tensor, periodic_tensor, solve_cell_problem, solve_corrector, CellSolution,
    CorrectorSolution, DiscreteGrid, ElementCoefficients, SolverOptions,
};
pub use tensor::Tensor;
