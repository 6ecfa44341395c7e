//! Energy-balance quantities of interest and their discrete derivatives.
//!
//! Every QoI is built from the per-cell residual
//!
//! ```text
//! r_i = h_i (−u(t_i)ᵀ y_i + x_iᵀ QRQ x_i) + H(x_i) − H(x_{i−1}),   i = 1..M
//! ```
//!
//! which uses the same right-endpoint rule as the forward scheme. QoI cells
//! coincide with the cells of the trajectory's grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::numerics::Vector;
use crate::ph::{dissipation_rate, hamiltonian, Input, PhSystem, StateTrajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QoiKind {
    /// `(Σ r_i)²`
    Global,
    /// `Σ r_i²`
    Local,
    /// `Σ r_i² + ρ Σ h_i ‖x_i‖²`
    LocalWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QoiConfig {
    pub kind: QoiKind,
    #[serde(default)]
    pub rho: f64,
}

impl QoiConfig {
    pub fn global() -> Self {
        Self {
            kind: QoiKind::Global,
            rho: 0.0,
        }
    }

    pub fn local() -> Self {
        Self {
            kind: QoiKind::Local,
            rho: 0.0,
        }
    }

    pub fn local_weighted(rho: f64) -> Self {
        Self {
            kind: QoiKind::LocalWeighted,
            rho,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "qoi.rho must be finite and nonnegative, got {}",
                self.rho
            )));
        }
        Ok(())
    }

    fn weight(&self) -> f64 {
        match self.kind {
            QoiKind::LocalWeighted => self.rho,
            _ => 0.0,
        }
    }
}

impl Default for QoiConfig {
    fn default() -> Self {
        Self::local()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalResiduals {
    /// `r[i − 1]` belongs to the cell `(t_{i−1}, t_i]`.
    pub r: Vec<f64>,
}

impl LocalResiduals {
    /// `I_loc = Σ r_i²`.
    pub fn sum_of_squares(&self) -> f64 {
        self.r.iter().map(|r| r * r).sum()
    }

    pub fn sum(&self) -> f64 {
        self.r.iter().sum()
    }
}

/// Node loads `l_0..l_M`, the gradient of the QoI with respect to the nodal
/// state values.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointRhs {
    pub loads: Vec<Vector>,
}

impl AdjointRhs {
    pub fn zeros(nodes: usize, dim: usize) -> Self {
        Self {
            loads: vec![Vector::zeros(dim); nodes],
        }
    }

    /// A single load `value` at `node`, zero elsewhere.
    pub fn point_load(nodes: usize, node: usize, value: Vector) -> Self {
        let mut rhs = Self::zeros(nodes, value.len());
        rhs.loads[node] = value;
        rhs
    }

    pub fn dot(&self, other: &[Vector]) -> f64 {
        self.loads.iter().zip(other).map(|(a, b)| a.dot(b)).sum()
    }
}

fn check_traj(sys: &PhSystem, traj: &StateTrajectory, u: &dyn Input) -> Result<()> {
    check_len("trajectory state", sys.state_dim(), traj.state().dim())?;
    check_len("input dimension", sys.input_dim(), u.dim())
}

pub fn qoi_local_residuals(
    sys: &PhSystem,
    traj: &StateTrajectory,
    u: &dyn Input,
) -> Result<LocalResiduals> {
    check_traj(sys, traj, u)?;
    let grid = traj.grid();
    let r = (1..=grid.intervals())
        .into_par_iter()
        .map(|i| {
            let h = grid.width(i);
            let ui = u.sample(grid.nodes()[i])?;
            let x = traj.x(i);
            let power = -ui.dot(traj.y(i)) + dissipation_rate(sys, x)?;
            Ok(h * power + hamiltonian(sys, x)? - hamiltonian(sys, traj.x(i - 1))?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LocalResiduals { r })
}

/// Violation of the energy balance over the whole horizon, squared.
pub fn qoi_global(sys: &PhSystem, traj: &StateTrajectory, u: &dyn Input) -> Result<f64> {
    let s = qoi_local_residuals(sys, traj, u)?.sum();
    Ok(s * s)
}

/// `Σ h_i ‖x_i‖²`, the L² norm of the piecewise-constant state.
pub fn state_l2_squared(traj: &StateTrajectory) -> f64 {
    let grid = traj.grid();
    (1..=grid.intervals())
        .map(|i| grid.width(i) * traj.x(i).norm_squared())
        .sum()
}

pub fn qoi_total(
    sys: &PhSystem,
    traj: &StateTrajectory,
    u: &dyn Input,
    cfg: &QoiConfig,
) -> Result<f64> {
    cfg.validate()?;
    let res = qoi_local_residuals(sys, traj, u)?;
    Ok(match cfg.kind {
        QoiKind::Global => res.sum().powi(2),
        QoiKind::Local => res.sum_of_squares(),
        QoiKind::LocalWeighted => res.sum_of_squares() + cfg.rho * state_l2_squared(traj),
    })
}

/// Derivative of `r_i` with respect to `x_i` (first) and `x_{i−1}` (second).
fn residual_gradient(
    sys: &PhSystem,
    traj: &StateTrajectory,
    u: &dyn Input,
    i: usize,
) -> Result<(Vector, Vector)> {
    let grid = traj.grid();
    let h = grid.width(i);
    let ui = u.sample(grid.nodes()[i])?;
    let x = traj.x(i);
    let qx = sys.q() * x;
    let qrqx = sys.q() * (sys.r() * &qx);
    let d_right = (sys.q() * (sys.b() * ui)) * (-h) + qrqx * (2.0 * h) + qx;
    let d_left = -sys.energy_gradient(traj.x(i - 1));
    Ok((d_right, d_left))
}

/// Gradient of `qoi_total` with respect to the nodal values `x_0..x_M`.
pub fn assemble_adjoint_rhs(
    sys: &PhSystem,
    traj: &StateTrajectory,
    u: &dyn Input,
    cfg: &QoiConfig,
) -> Result<AdjointRhs> {
    cfg.validate()?;
    let res = qoi_local_residuals(sys, traj, u)?;
    let grid = traj.grid();
    let m = grid.intervals();
    let global_sum = res.sum();
    let rho = cfg.weight();

    let contributions = (1..=m)
        .into_par_iter()
        .map(|i| {
            let (d_right, d_left) = residual_gradient(sys, traj, u, i)?;
            let coeff = 2.0
                * match cfg.kind {
                    QoiKind::Global => global_sum,
                    _ => res.r[i - 1],
                };
            let mut right = d_right * coeff;
            if rho != 0.0 {
                right += traj.x(i) * (2.0 * rho * grid.width(i));
            }
            Ok((right, d_left * coeff))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rhs = AdjointRhs::zeros(m + 1, sys.state_dim());
    for (k, (right, left)) in contributions.into_iter().enumerate() {
        rhs.loads[k + 1] += right;
        rhs.loads[k] += left;
    }
    Ok(rhs)
}
