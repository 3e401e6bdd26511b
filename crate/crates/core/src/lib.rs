//! Numerical toolkit for state-constrained optimal control: forward and
//! measure-driven linear solvers, Stieltjes quadrature against monotone
//! multipliers, spike variations, a first-order optimality certificate
//! checker and an experimental penalized descent solver.

pub mod bv;
pub mod checker;
pub mod cli;
pub mod csp;
pub mod csv_io;
pub mod dual;
pub mod ekeland;
pub mod error;
pub mod expr;
pub mod grid;
pub mod ode;
pub mod problem;
pub mod spike;

pub use bv::{fubini_residual, normalize_bv, stieltjes_integral, total_variation, BVPath, NBVMeasure};
pub use checker::{check_certificate, Candidate, Certificate, Tolerances, Verdict};
pub use csp::{solve_csp_duhamel, solve_csp_fixed_point};
pub use error::{Error, Result};
pub use expr::{parse_expression, Expr, Wrt};
pub use grid::{CellSeries, TimeGrid};
pub use ode::{
    duhamel_linear, estimate_lipschitz, solve_forward, ControlSignal, Direction, LipschitzEstimate,
    TransitionTable, Trajectory,
};
pub use problem::{load_problem, Omega, Problem};
pub use spike::{build_qrho, differentiability_probe, spike_control, variation_vector, SpikeSet};
