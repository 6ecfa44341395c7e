//! The adaptive refinement loop, the uniform baseline and the comparison
//! harness.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::adjoint::{solve_adjoint_exact_with, solve_adjoint_jacobi_with, AdjointSolution};
use crate::error::{check_len, Error, Result};
use crate::estimator::{compute_indicators, doerfler_mark, refine_grid, IndicatorSet};
use crate::forward::{solve_forward, ReferenceFlow};
use crate::numerics::Vector;
use crate::ph::{GridFunction, InputSignal, PhSystem, StateTrajectory, TimeGrid};
use crate::qoi::{assemble_adjoint_rhs, qoi_local_residuals, qoi_total, QoiConfig, QoiKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjointMode {
    Exact,
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TolReached,
    MaxIters,
    MaxIntervals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub qoi: QoiConfig,
    pub theta: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub max_intervals: usize,
    pub adjoint_mode: AdjointMode,
    pub initial_m: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            qoi: QoiConfig::local(),
            theta: 0.5,
            tol: 0.0,
            max_iters: 60,
            max_intervals: 200,
            adjoint_mode: AdjointMode::Exact,
            initial_m: 20,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.qoi.validate()?;
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::InvalidTheta(self.theta));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(Error::InvalidConfig(format!("run.tol must be >= 0, got {}", self.tol)));
        }
        if self.initial_m < 2 {
            return Err(Error::InvalidConfig(format!(
                "run.initial_m must be >= 2, got {}",
                self.initial_m
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("run.max_iters must be >= 1".into()));
        }
        if self.max_intervals < self.initial_m {
            return Err(Error::InvalidConfig(format!(
                "run.max_intervals ({}) is below run.initial_m ({})",
                self.max_intervals, self.initial_m
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub intervals: usize,
    /// `NaN` for strategies without an estimator.
    pub estimator_total: f64,
    /// The configured QoI on the discrete trajectory.
    pub qoi: f64,
    /// `Σ r_i²` on the discrete trajectory.
    pub i_loc: f64,
    /// The configured QoI on the reference sampled at the same nodes.
    pub qoi_reference: f64,
    pub i_loc_reference: f64,
    /// `max_k ‖x_k − x(t_k)‖_∞` over the grid nodes.
    pub max_error: f64,
    pub wall_ms: f64,
}

impl IterationRecord {
    pub fn i_loc_reference_gap(&self) -> f64 {
        (self.i_loc - self.i_loc_reference).abs()
    }
}

#[derive(Debug, Clone)]
pub struct AdaptiveRun {
    pub iterations: Vec<IterationRecord>,
    pub final_grid: TimeGrid,
    pub final_trajectory: StateTrajectory,
    pub stop_reason: StopReason,
    /// One trajectory per record.
    pub trajectories: Vec<StateTrajectory>,
    pub final_indicators: Option<IndicatorSet>,
    pub final_adjoint: Option<AdjointSolution>,
}

/// Exact states on a fixed set of times, looked up by node value.
#[derive(Debug, Clone)]
pub struct ReferenceSamples {
    times: Vec<f64>,
    states: Vec<Vector>,
}

impl ReferenceSamples {
    /// Exact flow evaluated once on the union of the nodes of `grids`.
    pub fn on_union<'a>(
        sys: &PhSystem,
        u: &InputSignal,
        x0: &Vector,
        grids: impl IntoIterator<Item = &'a TimeGrid>,
    ) -> Result<Self> {
        let mut times: Vec<f64> = grids.into_iter().flat_map(|g| g.nodes().iter().copied()).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let states = ReferenceFlow::new(sys).states_at(u, x0, &times)?;
        Ok(Self { times, states })
    }

    pub fn trajectory(&self, sys: &PhSystem, grid: &TimeGrid) -> Result<StateTrajectory> {
        let values = grid
            .nodes()
            .iter()
            .map(|t| {
                self.times
                    .binary_search_by(|s| s.total_cmp(t))
                    .map(|k| self.states[k].clone())
                    .map_err(|_| Error::GridMismatch(format!("node {t} missing from reference")))
            })
            .collect::<Result<Vec<_>>>()?;
        StateTrajectory::new(sys, GridFunction::new(grid.clone(), values)?)
    }
}

fn local_qoi(sys: &PhSystem, traj: &StateTrajectory, u: &InputSignal) -> Result<f64> {
    Ok(qoi_local_residuals(sys, traj, u)?.sum_of_squares())
}

/// Fills the reference-dependent fields of `run`'s records.
pub fn attach_reference(
    sys: &PhSystem,
    u: &InputSignal,
    qoi: &QoiConfig,
    reference: &ReferenceSamples,
    run: &mut AdaptiveRun,
) -> Result<()> {
    for (rec, traj) in run.iterations.iter_mut().zip(&run.trajectories) {
        let exact = reference.trajectory(sys, traj.grid())?;
        rec.qoi_reference = qoi_total(sys, &exact, u, qoi)?;
        rec.i_loc_reference = local_qoi(sys, &exact, u)?;
        rec.max_error = traj.state().max_abs_diff(exact.state())?;
    }
    Ok(())
}

fn check_problem(sys: &PhSystem, u: &InputSignal, x0: &Vector, horizon: f64) -> Result<()> {
    check_len("initial state", sys.state_dim(), x0.len())?;
    check_len("input dimension", sys.input_dim(), crate::ph::Input::dim(u))?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidConfig(format!("horizon must be positive, got {horizon}")));
    }
    if (u.horizon() - horizon).abs() > 1e-12 * horizon {
        return Err(Error::InvalidInput(format!(
            "input horizon {} differs from {horizon}",
            u.horizon()
        )));
    }
    Ok(())
}

fn blank_record(iter: usize, intervals: usize) -> IterationRecord {
    IterationRecord {
        iter,
        intervals,
        estimator_total: f64::NAN,
        qoi: 0.0,
        i_loc: 0.0,
        qoi_reference: f64::NAN,
        i_loc_reference: f64::NAN,
        max_error: f64::NAN,
        wall_ms: 0.0,
    }
}

/// The adaptive loop without reference diagnostics.
pub fn run_adaptive_unreferenced(
    sys: &PhSystem,
    u: &InputSignal,
    x0: &Vector,
    horizon: f64,
    cfg: &RunConfig,
) -> Result<AdaptiveRun> {
    cfg.validate()?;
    check_problem(sys, u, x0, horizon)?;
    let mut grid = TimeGrid::uniform(horizon, cfg.initial_m)?;
    let mut records = Vec::new();
    let mut trajectories = Vec::new();
    loop {
        let start = Instant::now();
        let fwd = solve_forward(sys, &grid, u, x0)?;
        let traj = fwd.trajectory;
        let rhs = assemble_adjoint_rhs(sys, &traj, u, &cfg.qoi)?;
        let lam = match cfg.adjoint_mode {
            AdjointMode::Exact => solve_adjoint_exact_with(sys, &fwd.factor_cache, &grid, &rhs)?,
            AdjointMode::Jacobi => solve_adjoint_jacobi_with(sys, &fwd.factor_cache, &grid, &rhs)?,
        };
        let ind = compute_indicators(sys, &grid, &traj, &lam, u)?;

        let mut rec = blank_record(records.len() + 1, grid.intervals());
        rec.estimator_total = ind.total;
        rec.qoi = qoi_total(sys, &traj, u, &cfg.qoi)?;
        rec.i_loc = local_qoi(sys, &traj, u)?;

        let m = grid.intervals();
        let stop = if ind.total <= cfg.tol {
            Some(StopReason::TolReached)
        } else if records.len() + 1 >= cfg.max_iters {
            Some(StopReason::MaxIters)
        } else if m >= cfg.max_intervals {
            Some(StopReason::MaxIntervals)
        } else {
            None
        };
        if let Some(stop_reason) = stop {
            rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
            records.push(rec);
            trajectories.push(traj.clone());
            return Ok(AdaptiveRun {
                iterations: records,
                final_grid: grid,
                final_trajectory: traj,
                stop_reason,
                trajectories,
                final_indicators: Some(ind),
                final_adjoint: Some(lam),
            });
        }

        // Only the largest indicators are split when the full marking would
        // overshoot the interval budget.
        let marking = doerfler_mark(&ind, cfg.theta)?.truncated(cfg.max_intervals - m);
        let refined = refine_grid(&grid, &marking)?;
        rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        records.push(rec);
        trajectories.push(traj);
        grid = refined;
    }
}

/// The adaptive loop, followed by one reference solve on the union of all
/// grids visited.
pub fn run_adaptive(
    sys: &PhSystem,
    u: &InputSignal,
    x0: &Vector,
    horizon: f64,
    cfg: &RunConfig,
) -> Result<AdaptiveRun> {
    let mut run = run_adaptive_unreferenced(sys, u, x0, horizon, cfg)?;
    let reference = ReferenceSamples::on_union(sys, u, x0, run.trajectories.iter().map(|t| t.grid()))?;
    attach_reference(sys, u, &cfg.qoi, &reference, &mut run)?;
    Ok(run)
}

fn run_on_grids(
    sys: &PhSystem,
    u: &InputSignal,
    x0: &Vector,
    grids: Vec<TimeGrid>,
    qoi: &QoiConfig,
) -> Result<AdaptiveRun> {
    let mut records = Vec::with_capacity(grids.len());
    let mut trajectories = Vec::with_capacity(grids.len());
    for grid in grids {
        let start = Instant::now();
        let traj = solve_forward(sys, &grid, u, x0)?.trajectory;
        let mut rec = blank_record(records.len() + 1, grid.intervals());
        rec.qoi = qoi_total(sys, &traj, u, qoi)?;
        rec.i_loc = local_qoi(sys, &traj, u)?;
        rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        records.push(rec);
        trajectories.push(traj);
    }
    let final_trajectory = trajectories
        .last()
        .cloned()
        .ok_or_else(|| Error::InvalidConfig("at least one grid is required".into()))?;
    Ok(AdaptiveRun {
        iterations: records,
        final_grid: final_trajectory.grid().clone(),
        final_trajectory,
        stop_reason: StopReason::MaxIters,
        trajectories,
        final_indicators: None,
        final_adjoint: None,
    })
}

/// Forward solves on uniform grids with `initial_m · 2^k` intervals,
/// `k = 0..levels`.
pub fn run_uniform(
    sys: &PhSystem,
    u: &InputSignal,
    x0: &Vector,
    horizon: f64,
    levels: usize,
    initial_m: usize,
) -> Result<AdaptiveRun> {
    run_uniform_with(sys, u, x0, horizon, levels, initial_m, &QoiConfig::local())
}

pub fn run_uniform_with(
    sys: &PhSystem,
    u: &InputSignal,
    x0: &Vector,
    horizon: f64,
    levels: usize,
    initial_m: usize,
    qoi: &QoiConfig,
) -> Result<AdaptiveRun> {
    if levels == 0 {
        return Err(Error::InvalidConfig("levels must be >= 1".into()));
    }
    if initial_m == 0 {
        return Err(Error::InvalidConfig("initial_m must be >= 1".into()));
    }
    check_problem(sys, u, x0, horizon)?;
    let grids = (0..levels)
        .map(|k| TimeGrid::uniform(horizon, initial_m << k))
        .collect::<Result<Vec<_>>>()?;
    let mut run = run_on_grids(sys, u, x0, grids, qoi)?;
    let reference = ReferenceSamples::on_union(sys, u, x0, run.trajectories.iter().map(|t| t.grid()))?;
    attach_reference(sys, u, qoi, &reference, &mut run)?;
    Ok(run)
}

pub const UNIFORM: &str = "uniform";
pub const ADAPTIVE_EXACT: &str = "adaptive-exact";
pub const ADAPTIVE_JACOBI: &str = "adaptive-jacobi";
pub const ADAPTIVE_EXACT_UNWEIGHTED: &str = "adaptive-exact-unweighted";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrategyPoint {
    pub i_loc: f64,
    pub max_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub intervals: usize,
    /// One entry per strategy, in [`Comparison::strategies`] order; `None`
    /// when the strategy never used this interval count.
    pub points: Vec<Option<StrategyPoint>>,
}

impl ComparisonRow {
    pub fn is_matched(&self) -> bool {
        self.points.iter().all(Option::is_some)
    }
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub strategies: Vec<&'static str>,
    pub rows: Vec<ComparisonRow>,
    pub runs: Vec<AdaptiveRun>,
}

/// Direction of the weighted-QoI trade-off at the final matched interval count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeOff {
    pub intervals: usize,
    pub weighted: StrategyPoint,
    pub unweighted: StrategyPoint,
}

impl TradeOff {
    /// Lower trajectory error bought with a higher balance violation.
    pub fn is_expected_direction(&self) -> bool {
        self.weighted.max_error <= self.unweighted.max_error && self.weighted.i_loc >= self.unweighted.i_loc
    }
}

impl Comparison {
    pub fn strategy_index(&self, name: &str) -> Option<usize> {
        self.strategies.iter().position(|s| *s == name)
    }

    pub fn run(&self, name: &str) -> Option<&AdaptiveRun> {
        self.strategy_index(name).map(|k| &self.runs[k])
    }

    pub fn matched_rows(&self) -> impl Iterator<Item = &ComparisonRow> {
        self.rows.iter().filter(|r| r.is_matched())
    }

    pub fn final_matched(&self) -> Option<&ComparisonRow> {
        self.matched_rows().last()
    }

    /// Strategy with the lowest `I_loc` in `row`; ties go to the earlier strategy.
    pub fn lowest_i_loc(&self, row: &ComparisonRow) -> Option<&'static str> {
        let mut best: Option<(usize, f64)> = None;
        for (k, p) in row.points.iter().enumerate() {
            if let Some(p) = p {
                if best.is_none_or(|(_, v)| p.i_loc < v) {
                    best = Some((k, p.i_loc));
                }
            }
        }
        best.map(|(k, _)| self.strategies[k])
    }

    pub fn trade_off(&self) -> Option<TradeOff> {
        let w = self.strategy_index(ADAPTIVE_EXACT)?;
        let uw = self.strategy_index(ADAPTIVE_EXACT_UNWEIGHTED)?;
        let row = self.final_matched()?;
        Some(TradeOff {
            intervals: row.intervals,
            weighted: row.points[w]?,
            unweighted: row.points[uw]?,
        })
    }
}

/// Runs the uniform baseline and the adaptive strategies, then evaluates all
/// of them against one shared reference. Rows are keyed by the interval
/// counts visited by the adaptive runs; the uniform baseline is solved at
/// each of them.
pub fn compare_strategies(
    sys: &PhSystem,
    u: &InputSignal,
    x0: &Vector,
    horizon: f64,
    cfg: &RunConfig,
) -> Result<Comparison> {
    cfg.validate()?;
    check_problem(sys, u, x0, horizon)?;

    let mut configs = vec![
        (ADAPTIVE_EXACT, RunConfig { adjoint_mode: AdjointMode::Exact, ..cfg.clone() }),
        (ADAPTIVE_JACOBI, RunConfig { adjoint_mode: AdjointMode::Jacobi, ..cfg.clone() }),
    ];
    if cfg.qoi.kind == QoiKind::LocalWeighted && cfg.qoi.rho > 0.0 {
        configs.push((
            ADAPTIVE_EXACT_UNWEIGHTED,
            RunConfig {
                adjoint_mode: AdjointMode::Exact,
                qoi: QoiConfig::local(),
                ..cfg.clone()
            },
        ));
    }
    let adaptive: Vec<AdaptiveRun> = {
        use rayon::prelude::*;
        configs
            .par_iter()
            .map(|(_, c)| run_adaptive_unreferenced(sys, u, x0, horizon, c))
            .collect::<Result<Vec<_>>>()?
    };

    let mut keys: Vec<usize> = adaptive
        .iter()
        .flat_map(|r| r.iterations.iter().map(|rec| rec.intervals))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    let uniform_grids = keys
        .iter()
        .map(|&m| TimeGrid::uniform(horizon, m))
        .collect::<Result<Vec<_>>>()?;
    let uniform = run_on_grids(sys, u, x0, uniform_grids, &cfg.qoi)?;

    let mut strategies = vec![UNIFORM];
    let mut runs = vec![uniform];
    for ((name, _), run) in configs.iter().zip(adaptive) {
        strategies.push(name);
        runs.push(run);
    }

    let reference = ReferenceSamples::on_union(
        sys,
        u,
        x0,
        runs.iter().flat_map(|r| r.trajectories.iter().map(|t| t.grid())),
    )?;
    for ((_, c), run) in std::iter::once(&(UNIFORM, cfg.clone())).chain(&configs).zip(&mut runs) {
        attach_reference(sys, u, &c.qoi, &reference, run)?;
    }

    let rows = keys
        .iter()
        .map(|&m| ComparisonRow {
            intervals: m,
            points: runs
                .iter()
                .map(|run| {
                    run.iterations.iter().find(|r| r.intervals == m).map(|r| StrategyPoint {
                        i_loc: r.i_loc,
                        max_error: r.max_error,
                    })
                })
                .collect(),
        })
        .collect();

    Ok(Comparison { strategies, rows, runs })
}
