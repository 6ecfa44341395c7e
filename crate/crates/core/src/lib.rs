//! Simulation of linear port-Hamiltonian systems with implicit Euler and
//! goal-oriented adaptive refinement of the time grid.
//!
//! The quantity of interest measures how well the discrete trajectory
//! satisfies the continuous energy balance. A discrete adjoint weights the
//! local residuals into per-interval error indicators, which drive Dörfler
//! marking and bisection.
//!
//! ```
//! use phadapt_core::{presets, run_adaptive, RunConfig};
//!
//! let sys = presets::paper_r2();
//! let cfg = RunConfig { max_intervals: 40, ..RunConfig::default() };
//! let run = run_adaptive(&sys, &presets::step_input(), &presets::initial_state(), 10.0, &cfg).unwrap();
//! assert!(run.final_grid.intervals() <= 40);
//! ```

pub mod adjoint;
pub mod driver;
mod error;
pub mod estimator;
pub mod forward;
pub mod numerics;
pub mod ph;
pub mod presets;
pub mod qoi;

pub use adjoint::{
    adjoint_block_matrix, solve_adjoint_exact, solve_adjoint_jacobi, solve_adjoint_jacobi_iterated,
    stability_report, AdjointMethod, AdjointSolution, StabilityReport,
};
pub use driver::{
    compare_strategies, run_adaptive, run_uniform, AdaptiveRun, AdjointMode, Comparison, IterationRecord,
    RunConfig, StopReason,
};
pub use error::{Error, Result};
pub use estimator::{compute_indicators, doerfler_mark, estimator_total, refine_grid, IndicatorSet, MarkingResult};
pub use forward::{forward_block_matrix, solve_forward, solve_reference, FactorCache, ForwardSolveArtifacts};
pub use numerics::{Matrix, Vector};
pub use ph::{
    dissipation_rate, eval_input, hamiltonian, GridFunction, Input, InputSignal, PhSystem, StateTrajectory, TimeGrid,
};
pub use qoi::{assemble_adjoint_rhs, qoi_global, qoi_local_residuals, qoi_total, AdjointRhs, LocalResiduals, QoiConfig, QoiKind};
