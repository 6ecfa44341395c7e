//! Discrete adjoint of the implicit Euler scheme.
//!
//! The adjoint block system is the exact transpose of the forward one:
//!
//! ```text
//! λ_0 − λ_1                 = l_0
//! (I − h_i Aᵀ) λ_i − λ_{i+1} = l_i,   i = 1..M−1
//! (I − h_M Aᵀ) λ_M           = l_M
//! ```
//!
//! so `⟨l, δx⟩ = ⟨λ, M_fwd δx⟩` for every nodal perturbation `δx`. It is
//! solved exactly by a backward sweep, or approximately by block Jacobi,
//! which drops the `−λ_{i+1}` coupling and decouples all cells.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::forward::FactorCache;
use crate::numerics::{
    eigenvalues, lu_factor, matrix_exponential, spectral_radius, symmetric_eigen, Matrix, Vector,
};
use crate::ph::{GridFunction, PhSystem, TimeGrid};
use crate::qoi::AdjointRhs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjointMethod {
    Exact,
    JacobiOneShot,
    JacobiIterated(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointSolution {
    pub lambda: GridFunction,
    pub method: AdjointMethod,
}

fn check_rhs(sys: &PhSystem, grid: &TimeGrid, rhs: &AdjointRhs) -> Result<()> {
    check_len("adjoint loads", grid.intervals() + 1, rhs.loads.len())?;
    for l in &rhs.loads {
        check_len("adjoint load", sys.state_dim(), l.len())?;
    }
    Ok(())
}

pub fn solve_adjoint_exact(sys: &PhSystem, grid: &TimeGrid, rhs: &AdjointRhs) -> Result<AdjointSolution> {
    let cache = FactorCache::build(sys, grid)?;
    solve_adjoint_exact_with(sys, &cache, grid, rhs)
}

/// Backward sweep reusing the forward factorizations.
pub fn solve_adjoint_exact_with(
    sys: &PhSystem,
    cache: &FactorCache,
    grid: &TimeGrid,
    rhs: &AdjointRhs,
) -> Result<AdjointSolution> {
    check_rhs(sys, grid, rhs)?;
    let m = grid.intervals();
    let mut lambda = vec![Vector::zeros(sys.state_dim()); m + 1];
    lambda[m] = cache.get(grid.width(m))?.solve_transpose(&rhs.loads[m])?;
    for i in (1..m).rev() {
        let b = &lambda[i + 1] + &rhs.loads[i];
        lambda[i] = cache.get(grid.width(i))?.solve_transpose(&b)?;
    }
    lambda[0] = &lambda[1] + &rhs.loads[0];
    Ok(AdjointSolution {
        lambda: GridFunction::new(grid.clone(), lambda)?,
        method: AdjointMethod::Exact,
    })
}

pub fn solve_adjoint_jacobi(sys: &PhSystem, grid: &TimeGrid, rhs: &AdjointRhs) -> Result<AdjointSolution> {
    let cache = FactorCache::build(sys, grid)?;
    solve_adjoint_jacobi_with(sys, &cache, grid, rhs)
}

/// One block-Jacobi sweep from zero: every node solves its own block.
pub fn solve_adjoint_jacobi_with(
    sys: &PhSystem,
    cache: &FactorCache,
    grid: &TimeGrid,
    rhs: &AdjointRhs,
) -> Result<AdjointSolution> {
    check_rhs(sys, grid, rhs)?;
    let zero = vec![Vector::zeros(sys.state_dim()); grid.intervals() + 1];
    let lambda = jacobi_sweep(cache, grid, rhs, &zero)?;
    Ok(AdjointSolution {
        lambda: GridFunction::new(grid.clone(), lambda)?,
        method: AdjointMethod::JacobiOneShot,
    })
}

fn jacobi_sweep(
    cache: &FactorCache,
    grid: &TimeGrid,
    rhs: &AdjointRhs,
    previous: &[Vector],
) -> Result<Vec<Vector>> {
    let m = grid.intervals();
    let coupled = |i: usize| if i < m { &previous[i + 1] + &rhs.loads[i] } else { rhs.loads[m].clone() };
    let solved = (1..=m)
        .into_par_iter()
        .map(|i| cache.get(grid.width(i))?.solve_transpose(&coupled(i)))
        .collect::<Result<Vec<_>>>()?;
    let mut next = Vec::with_capacity(m + 1);
    next.push(&previous[1] + &rhs.loads[0]);
    next.extend(solved);
    Ok(next)
}

pub fn solve_adjoint_jacobi_iterated(
    sys: &PhSystem,
    grid: &TimeGrid,
    rhs: &AdjointRhs,
    sweeps: usize,
) -> Result<AdjointSolution> {
    let cache = FactorCache::build(sys, grid)?;
    solve_adjoint_jacobi_iterated_with(sys, &cache, grid, rhs, sweeps)
}

/// `sweeps` block-Jacobi iterations from zero. The iteration matrix is
/// nilpotent, so `M + 1` sweeps reproduce the backward sweep.
pub fn solve_adjoint_jacobi_iterated_with(
    sys: &PhSystem,
    cache: &FactorCache,
    grid: &TimeGrid,
    rhs: &AdjointRhs,
    sweeps: usize,
) -> Result<AdjointSolution> {
    if sweeps == 0 {
        return Err(Error::InvalidConfig("block-Jacobi needs at least one sweep".into()));
    }
    check_rhs(sys, grid, rhs)?;
    let mut lambda = vec![Vector::zeros(sys.state_dim()); grid.intervals() + 1];
    for _ in 0..sweeps {
        lambda = jacobi_sweep(cache, grid, rhs, &lambda)?;
    }
    Ok(AdjointSolution {
        lambda: GridFunction::new(grid.clone(), lambda)?,
        method: AdjointMethod::JacobiIterated(sweeps),
    })
}

/// The adjoint block matrix assembled directly from its block structure.
pub fn adjoint_block_matrix(sys: &PhSystem, grid: &TimeGrid) -> Matrix {
    let n = sys.state_dim();
    let m = grid.intervals();
    let at = sys.a().transpose();
    let mut big = Matrix::zeros((m + 1) * n, (m + 1) * n);
    for k in 0..n {
        big[(k, k)] = 1.0;
    }
    for i in 0..=m {
        let row = i * n;
        if i >= 1 {
            let h = grid.width(i);
            for r in 0..n {
                for c in 0..n {
                    let delta = if r == c { 1.0 } else { 0.0 };
                    big[(row + r, row + c)] = delta - h * at[(r, c)];
                }
            }
        }
        if i < m {
            for r in 0..n {
                big[(row + r, row + n + r)] = -1.0;
            }
        }
    }
    big
}

fn stack(values: &[Vector]) -> Vector {
    Vector::from_iterator(
        values.iter().map(|v| v.len()).sum(),
        values.iter().flat_map(|v| v.iter().copied()),
    )
}

/// `‖M_adj Λ − L‖ / max(‖L‖, floor)` for a candidate adjoint.
pub fn block_residual(sys: &PhSystem, grid: &TimeGrid, rhs: &AdjointRhs, lambda: &GridFunction) -> f64 {
    let big = adjoint_block_matrix(sys, grid);
    let l = stack(&rhs.loads);
    let r = big * stack(lambda.values()) - &l;
    r.norm() / l.norm().max(1e-14)
}

/// Largest ratio `‖G v‖_Q / ‖v‖_Q` for `G = (I − hAᵀ)^{-1}`, i.e. the
/// induced `Q`-norm of one backward step. `None` when `Q` is singular.
pub fn backward_step_q_gain(sys: &PhSystem, h: f64) -> Result<Option<f64>> {
    let n = sys.state_dim();
    let g = lu_factor(&(Matrix::identity(n, n) - sys.a().transpose() * h))?.inverse()?;
    let Some(chol) = sys.q().clone().cholesky() else {
        return Ok(None);
    };
    // ‖G‖_Q = ‖Lᵀ G L^{-ᵀ}‖₂ with Q = L Lᵀ.
    let l = chol.l();
    let lt_inv = l
        .transpose()
        .try_inverse()
        .ok_or(Error::SingularMatrix { pivot: 0.0, threshold: 0.0 })?;
    let w = l.transpose() * g * lt_inv;
    let (ev, _) = symmetric_eigen(&(w.transpose() * &w))?;
    Ok(Some(ev.last().copied().unwrap_or(0.0).max(0.0).sqrt()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub eigenvalues_of_a: Vec<Complex64>,
    pub is_hurwitz: bool,
    /// `(h, ρ((I − hAᵀ)^{-1}))` for each distinct width probed.
    pub contraction_factors: Vec<(f64, f64)>,
    /// `−max Re μ(A)`.
    pub analytic_omega: f64,
    /// Least-squares fit of `log ‖e^{sAᵀ} λ_T‖ ≈ log C − ω s`.
    pub fitted_omega: f64,
    pub fitted_c: f64,
}

const HURWITZ_MARGIN: f64 = 1e-12;
const PROBE_HORIZON: f64 = 5.0;
const PROBE_SAMPLES: usize = 50;

/// Spectrum, per-width contraction factors for the widths of `grid`, and the
/// decay fit of a unit terminal perturbation.
pub fn stability_report(sys: &PhSystem, grid: &TimeGrid) -> Result<StabilityReport> {
    let mut widths = grid.widths();
    widths.sort_by(f64::total_cmp);
    widths.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * a.abs().max(b.abs()));
    stability_report_for_widths(sys, &widths)
}

pub fn stability_report_for_widths(sys: &PhSystem, widths: &[f64]) -> Result<StabilityReport> {
    let ev = eigenvalues(sys.a())?;
    let max_re = ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let n = sys.state_dim();
    let at = sys.a().transpose();

    let contraction_factors = widths
        .iter()
        .map(|&h| {
            let inv = lu_factor(&(Matrix::identity(n, n) - &at * h))?.inverse()?;
            Ok((h, spectral_radius(&inv)?))
        })
        .collect::<Result<Vec<_>>>()?;

    let probe = Vector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut samples = Vec::with_capacity(PROBE_SAMPLES + 1);
    for k in 0..=PROBE_SAMPLES {
        let s = PROBE_HORIZON * k as f64 / PROBE_SAMPLES as f64;
        let d = (matrix_exponential(&at, s)? * &probe).norm();
        if d > 1e-300 {
            samples.push((s, d.ln()));
        }
    }
    let (slope, intercept) = least_squares_line(&samples);

    Ok(StabilityReport {
        eigenvalues_of_a: ev,
        is_hurwitz: max_re < -HURWITZ_MARGIN,
        contraction_factors,
        analytic_omega: -max_re,
        fitted_omega: -slope,
        fitted_c: intercept.exp(),
    })
}

fn least_squares_line(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    if points.len() < 2 {
        return (0.0, points.first().map(|p| p.1).unwrap_or(0.0));
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
