//! Numerical defaults shared across the crate.
//!
//! Every tolerance that is not passed explicitly by a caller comes from here,
//! so a single edit changes the behaviour consistently.

/// Residual target for the Newton solve of the defining equations.
pub const TOL_NEWTON: f64 = 1e-10;

/// Iteration cap for every Newton loop in the crate.
pub const MAX_NEWTON_ITER: usize = 50;

/// Central-difference step for first and second derivatives.
pub const H_FD: f64 = 1e-4;

/// Base step for fourth-order quantities (Richardson-extrapolated).
pub const H_FD_HIGH: f64 = 1e-2;

/// Lower bound on |det E| accepted as non-degenerate.
pub const EPS_E: f64 = 1e-10;

/// Relative tolerance deciding whether a piece is active in a max.
pub const TIE_TOL: f64 = 1e-9;

/// Pieces closer than this (in every coordinate) are merged.
pub const DEDUP_TOL: f64 = 1e-12;

/// Relative mass tolerance for the semi-discrete solver.
pub const TOL_MASS: f64 = 1e-6;

/// Cap on outer sweeps of the semi-discrete solver.
pub const MAX_OUTER: usize = 10_000;

/// Default quadrature resolution per axis for node-based decompositions.
pub const GRID_PER_AXIS: usize = 256;

/// Default Monte-Carlo sample count (dimension three and above).
pub const MC_SAMPLES: usize = 1_000_000;

/// Default seed for every randomised routine.
pub const DEFAULT_SEED: u64 = 0xC0FFEE;

/// Headroom factor applied to the sampled A5 constant.
pub const A5_HEADROOM: f64 = 1.1;

/// Relative floor on cell masses inside the height flow.
pub const FLOW_MASS_FLOOR: f64 = 1e-12;

/// Relative tolerance for the A3w-type sign checks.
pub const TOL_CONDITION: f64 = 1e-6;
