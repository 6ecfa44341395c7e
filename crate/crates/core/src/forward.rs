//! Implicit Euler on arbitrary grids, plus the exact variation-of-constants
//! reference used as ground truth.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::numerics::{lu_factor, matrix_exponential, LuFactors, Matrix, Vector};
use crate::ph::{GridFunction, Input, InputSignal, PhSystem, StateTrajectory, TimeGrid};

/// Step widths agreeing to 14 significant digits share a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WidthKey {
    exponent: i32,
    mantissa: i64,
}

impl WidthKey {
    pub fn new(h: f64) -> Self {
        debug_assert!(h > 0.0 && h.is_finite());
        let mut exponent = h.log10().floor() as i32;
        let mut mantissa = (h / 10f64.powi(exponent) * 1e13).round() as i64;
        // 9.99…9e-1 and 1.0 must share a key.
        if mantissa >= 100_000_000_000_000 {
            mantissa = (mantissa as f64 / 10.0).round() as i64;
            exponent += 1;
        }
        Self { exponent, mantissa }
    }
}

/// Widths closer than this (relative) share one factorization. Node
/// differences carry rounding noise of order `ε·T/h`, far above `ε`.
pub const WIDTH_RTOL: f64 = 1e-10;

/// LU factors of `I − h·A` for every distinct step width of a grid.
///
/// The same factors solve the adjoint blocks `I − h·Aᵀ` through
/// [`LuFactors::solve_transpose`].
#[derive(Debug, Clone)]
pub struct FactorCache {
    /// Sorted cluster representatives (the smallest width of each cluster).
    widths: Vec<f64>,
    factors: Vec<LuFactors>,
}

impl FactorCache {
    pub fn build(sys: &PhSystem, grid: &TimeGrid) -> Result<Self> {
        let mut sorted = grid.widths();
        sorted.sort_by(f64::total_cmp);
        let mut widths: Vec<f64> = Vec::new();
        for h in sorted {
            match widths.last() {
                Some(&rep) if h - rep <= WIDTH_RTOL * rep => {}
                _ => widths.push(h),
            }
        }

        let n = sys.state_dim();
        let factors = widths
            .par_iter()
            .map(|&h| {
                let step = Matrix::identity(n, n) - sys.a() * h;
                lu_factor(&step).map_err(|_| Error::SingularStep { width: h })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { widths, factors })
    }

    pub fn get(&self, h: f64) -> Result<&LuFactors> {
        let k = self.widths.partition_point(|&w| w <= h);
        k.checked_sub(1)
            .filter(|&k| h - self.widths[k] <= WIDTH_RTOL * self.widths[k])
            .map(|k| &self.factors[k])
            .ok_or(Error::SingularStep { width: h })
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct ForwardSolveArtifacts {
    pub trajectory: StateTrajectory,
    pub factor_cache: FactorCache,
}

/// `(I − h_i A) x_i = x_{i−1} + h_i B u(t_i)`, `x_0 = x0`.
pub fn solve_forward(
    sys: &PhSystem,
    grid: &TimeGrid,
    u: &dyn Input,
    x0: &Vector,
) -> Result<ForwardSolveArtifacts> {
    let cache = FactorCache::build(sys, grid)?;
    let trajectory = solve_forward_with(sys, &cache, grid, u, x0)?;
    Ok(ForwardSolveArtifacts {
        trajectory,
        factor_cache: cache,
    })
}

pub fn solve_forward_with(
    sys: &PhSystem,
    cache: &FactorCache,
    grid: &TimeGrid,
    u: &dyn Input,
    x0: &Vector,
) -> Result<StateTrajectory> {
    check_len("initial state", sys.state_dim(), x0.len())?;
    check_len("input dimension", sys.input_dim(), u.dim())?;
    let nodes = grid.nodes();
    let mut values = Vec::with_capacity(nodes.len());
    values.push(x0.clone());
    for i in 1..nodes.len() {
        let h = grid.width(i);
        let rhs = &values[i - 1] + sys.b() * u.sample(nodes[i])? * h;
        values.push(cache.get(h)?.solve(&rhs)?);
    }
    StateTrajectory::from_values(sys, grid.clone(), values)
}

/// Block lower-bidiagonal matrix of the discrete state equation: identity in
/// the first block row, then `[−I, I − h_i A]` in block row `i`.
pub fn forward_block_matrix(sys: &PhSystem, grid: &TimeGrid) -> Matrix {
    let n = sys.state_dim();
    let m = grid.intervals();
    let mut big = Matrix::zeros((m + 1) * n, (m + 1) * n);
    for k in 0..n {
        big[(k, k)] = 1.0;
    }
    for i in 1..=m {
        let h = grid.width(i);
        for r in 0..n {
            big[(i * n + r, (i - 1) * n + r)] = -1.0;
            for c in 0..n {
                let delta = if r == c { 1.0 } else { 0.0 };
                big[(i * n + r, i * n + c)] = delta - h * sys.a()[(r, c)];
            }
        }
    }
    big
}

/// Exact propagator over one step of width `h` with constant input:
/// `x ↦ e^{hA} x + (∫_0^h e^{sA} ds) B u`, from the exponential of the
/// augmented matrix `[[A, B], [0, 0]]`.
#[derive(Debug, Clone)]
struct ExactStep {
    transition: Matrix,
    input_gain: Matrix,
}

/// Exact flow of the linear system under a piecewise-constant input, with
/// propagators cached per step width.
#[derive(Debug, Clone)]
pub struct ReferenceFlow {
    augmented: Matrix,
    n: usize,
    steps: HashMap<WidthKey, ExactStep>,
}

impl ReferenceFlow {
    pub fn new(sys: &PhSystem) -> Self {
        let n = sys.state_dim();
        let m = sys.input_dim();
        let mut augmented = Matrix::zeros(n + m, n + m);
        augmented.view_mut((0, 0), (n, n)).copy_from(sys.a());
        augmented.view_mut((0, n), (n, m)).copy_from(sys.b());
        Self {
            augmented,
            n,
            steps: HashMap::new(),
        }
    }

    fn step(&mut self, h: f64) -> Result<&ExactStep> {
        let key = WidthKey::new(h);
        if !self.steps.contains_key(&key) {
            let e = matrix_exponential(&self.augmented, h)?;
            let n = self.n;
            let m = e.ncols() - n;
            let step = ExactStep {
                transition: e.view((0, 0), (n, n)).into_owned(),
                input_gain: e.view((0, n), (n, m)).into_owned(),
            };
            self.steps.insert(key, step);
        }
        Ok(&self.steps[&key])
    }

    /// Exact states at each of `times` (sorted, starting at 0). Input
    /// breakpoints are inserted as intermediate stops so that the input is
    /// constant on every propagation step.
    pub fn states_at(&mut self, u: &InputSignal, x0: &Vector, times: &[f64]) -> Result<Vec<Vector>> {
        check_len("initial state", self.n, x0.len())?;
        check_len("input dimension", self.augmented.ncols() - self.n, u.dim())?;
        let mut stops: Vec<(f64, bool)> = times.iter().map(|&t| (t, true)).collect();
        let last = times.last().copied().unwrap_or(0.0);
        stops.extend(
            u.breakpoints()
                .iter()
                .filter(|&&b| b > 0.0 && b < last)
                .map(|&b| (b, false)),
        );
        stops.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));

        let mut out = Vec::with_capacity(times.len());
        let mut x = x0.clone();
        let mut t = 0.0;
        for (s, keep) in stops {
            if s > t {
                let uk = u.sample(s)?;
                let step = self.step(s - t)?;
                x = &step.transition * &x + &step.input_gain * uk;
                t = s;
            }
            if keep {
                out.push(x.clone());
            }
        }
        Ok(out)
    }
}

/// Exact solution sampled at the grid nodes.
pub fn solve_reference(
    sys: &PhSystem,
    grid: &TimeGrid,
    u: &InputSignal,
    x0: &Vector,
) -> Result<StateTrajectory> {
    let mut flow = ReferenceFlow::new(sys);
    let values = flow.states_at(u, x0, grid.nodes())?;
    StateTrajectory::new(sys, GridFunction::new(grid.clone(), values)?)
}
