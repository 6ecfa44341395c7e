//! Port-Hamiltonian system data, time grids, inputs and grid functions.

use std::sync::Arc;

use crate::error::{check_len, Error, Result};
use crate::numerics::{asymmetry, min_symmetric_eigenvalue, norm_inf, Matrix, Vector};

const STRUCTURE_TOL: f64 = 1e-12;

/// Linear system `ẋ = (J − R)Q x + B u`, `y = BᵀQ x`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhSystem {
    j: Matrix,
    r: Matrix,
    q: Matrix,
    b: Matrix,
    a: Matrix,
}

impl PhSystem {
    /// Validates skew-symmetry of `J`, symmetry and semidefiniteness of `R`
    /// and `Q`, and the shapes of all four matrices.
    pub fn new(j: Matrix, r: Matrix, q: Matrix, b: Matrix) -> Result<Self> {
        let n = j.nrows();
        if n == 0 {
            return Err(invalid("J", "empty matrix".into()));
        }
        for (field, m) in [("J", &j), ("R", &r), ("Q", &q)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(invalid(
                    field,
                    format!("expected {n}x{n}, found {}x{}", m.nrows(), m.ncols()),
                ));
            }
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(invalid(
                "B",
                format!("expected {n} rows and at least one column, found {}x{}", b.nrows(), b.ncols()),
            ));
        }
        for (field, m) in [("J", &j), ("R", &r), ("Q", &q), ("B", &b)] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(invalid(field, "non-finite entry".into()));
            }
        }

        let skew = norm_inf(&(&j + j.transpose()));
        if skew > STRUCTURE_TOL * j.amax().max(1.0) {
            return Err(invalid("J", format!("not skew-symmetric (‖J + Jᵀ‖∞ = {skew:e})")));
        }
        for (field, m) in [("R", &r), ("Q", &q)] {
            let scale = m.amax().max(1.0);
            let asym = asymmetry(m);
            if asym > STRUCTURE_TOL * scale {
                return Err(invalid(field, format!("not symmetric (asymmetry {asym:e})")));
            }
            let min = min_symmetric_eigenvalue(m)?;
            if min < -STRUCTURE_TOL * scale {
                return Err(invalid(
                    field,
                    format!("not positive semidefinite (min eigenvalue {min:e})"),
                ));
            }
        }

        let a = (&j - &r) * &q;
        Ok(Self { j, r, q, b, a })
    }

    pub fn state_dim(&self) -> usize {
        self.j.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn j(&self) -> &Matrix {
        &self.j
    }

    pub fn r(&self) -> &Matrix {
        &self.r
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    /// System matrix `(J − R)Q`.
    pub fn a(&self) -> &Matrix {
        &self.a
    }

    /// Same structure with the dissipation scaled by `factor`.
    pub fn with_dissipation_scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.j.clone(), &self.r * factor, self.q.clone(), self.b.clone())
    }

    /// Port output `y = BᵀQx`.
    pub fn output(&self, x: &Vector) -> Result<Vector> {
        check_len("output", self.state_dim(), x.len())?;
        Ok(self.b.transpose() * (&self.q * x))
    }

    /// Gradient of the Hamiltonian, `H′(x) = Qx`.
    pub fn energy_gradient(&self, x: &Vector) -> Vector {
        &self.q * x
    }

    /// `√(vᵀQv)`.
    pub fn q_norm(&self, v: &Vector) -> f64 {
        v.dot(&(&self.q * v)).max(0.0).sqrt()
    }
}

fn invalid(field: &'static str, reason: String) -> Error {
    Error::InvalidSystem { field, reason }
}

/// Stored energy `½ xᵀQx`.
pub fn hamiltonian(sys: &PhSystem, x: &Vector) -> Result<f64> {
    check_len("hamiltonian", sys.state_dim(), x.len())?;
    Ok(0.5 * x.dot(&(sys.q() * x)))
}

/// Dissipated power `xᵀQRQx = ‖R^{1/2}Qx‖²`, evaluated as a quadratic form.
pub fn dissipation_rate(sys: &PhSystem, x: &Vector) -> Result<f64> {
    check_len("dissipation_rate", sys.state_dim(), x.len())?;
    let qx = sys.q() * x;
    Ok(qx.dot(&(sys.r() * &qx)))
}

/// Strictly increasing nodes `0 = t_0 < … < t_M = T`. Cheap to clone.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Arc<[f64]>,
}

impl TimeGrid {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidGrid("need at least two nodes".into()));
        }
        if nodes[0] != 0.0 {
            return Err(Error::InvalidGrid(format!("first node is {}, expected 0", nodes[0])));
        }
        if let Some(bad) = nodes.iter().find(|t| !t.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite node {bad}")));
        }
        if let Some(i) = nodes.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!(
                "nodes not strictly increasing at index {}: {} then {}",
                i + 1,
                nodes[i],
                nodes[i + 1]
            )));
        }
        Ok(Self {
            nodes: nodes.into(),
        })
    }

    /// `intervals` equal cells on `[0, horizon]`; the last node is exactly `horizon`.
    pub fn uniform(horizon: f64, intervals: usize) -> Result<Self> {
        if intervals == 0 {
            return Err(Error::InvalidGrid("need at least one interval".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        let mut nodes: Vec<f64> = (0..=intervals)
            .map(|i| horizon * i as f64 / intervals as f64)
            .collect();
        nodes[intervals] = horizon;
        Self::new(nodes)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Number of cells `M`.
    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// Width `h_i = t_i − t_{i−1}` of the cell ending at node `i` (1-based, `1..=M`).
    pub fn width(&self, i: usize) -> f64 {
        self.nodes[i] - self.nodes[i - 1]
    }

    pub fn widths(&self) -> Vec<f64> {
        self.nodes.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Index of the node closest to `t`.
    pub fn nearest_node(&self, t: f64) -> usize {
        match self.nodes.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) if i >= self.nodes.len() => self.nodes.len() - 1,
            Err(i) => {
                if (t - self.nodes[i - 1]) <= (self.nodes[i] - t) {
                    i - 1
                } else {
                    i
                }
            }
        }
    }
}

/// Anything that can be sampled as an input `u(t) ∈ ℝ^m`.
pub trait Input: Sync {
    fn dim(&self) -> usize;
    fn sample(&self, t: f64) -> Result<Vector>;
}

/// Piecewise-constant input; segment `k` holds on `(b_k, b_{k+1}]`, and the
/// first segment also covers `t = b_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSignal {
    breakpoints: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl InputSignal {
    pub fn new(breakpoints: Vec<f64>, values: Vec<Vector>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::InvalidInput("need at least two breakpoints".into()));
        }
        if values.len() + 1 != breakpoints.len() {
            return Err(Error::InvalidInput(format!(
                "{} breakpoints need {} segment values, found {}",
                breakpoints.len(),
                breakpoints.len() - 1,
                values.len()
            )));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::InvalidInput("first breakpoint must be 0".into()));
        }
        if breakpoints.iter().any(|b| !b.is_finite())
            || breakpoints.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::InvalidInput("breakpoints must be finite and strictly increasing".into()));
        }
        let m = values[0].len();
        if m == 0 || values.iter().any(|v| v.len() != m) {
            return Err(Error::InvalidInput("segment values must share a positive length".into()));
        }
        if values.iter().flat_map(|v| v.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite segment value".into()));
        }
        Ok(Self {
            breakpoints,
            values: values.into_iter().map(|v| v.as_slice().to_vec()).collect(),
        })
    }

    pub fn constant(horizon: f64, value: Vector) -> Result<Self> {
        Self::new(vec![0.0, horizon], vec![value])
    }

    pub fn zero(horizon: f64, dim: usize) -> Result<Self> {
        Self::constant(horizon, Vector::zeros(dim))
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn horizon(&self) -> f64 {
        self.breakpoints[self.breakpoints.len() - 1]
    }

    pub fn segment_value(&self, k: usize) -> Vector {
        Vector::from_column_slice(&self.values[k])
    }

    /// Index of the segment whose half-open cell contains `t`.
    pub fn segment_at(&self, t: f64) -> Result<usize> {
        let end = self.horizon();
        let slack = 1e-12 * end;
        if !(t >= -slack && t <= end + slack) {
            return Err(Error::OutOfDomain { t, start: 0.0, end });
        }
        let k = self.breakpoints[1..].partition_point(|&b| b < t);
        Ok(k.min(self.values.len() - 1))
    }
}

impl Input for InputSignal {
    fn dim(&self) -> usize {
        self.values[0].len()
    }

    fn sample(&self, t: f64) -> Result<Vector> {
        Ok(self.segment_value(self.segment_at(t)?))
    }
}

/// Evaluates a piecewise-constant input at `t`.
pub fn eval_input(u: &InputSignal, t: f64) -> Result<Vector> {
    u.sample(t)
}

/// One vector per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: TimeGrid,
    values: Vec<Vector>,
}

impl GridFunction {
    pub fn new(grid: TimeGrid, values: Vec<Vector>) -> Result<Self> {
        check_len("grid function nodes", grid.intervals() + 1, values.len())?;
        let n = values[0].len();
        for v in &values {
            check_len("grid function value", n, v.len())?;
        }
        if values.iter().flat_map(|v| v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::GridMismatch("grid function has non-finite entries".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        let values = vec![Vector::zeros(dim); grid.intervals() + 1];
        Self { grid, values }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Vector] {
        &self.values
    }

    pub fn value(&self, i: usize) -> &Vector {
        &self.values[i]
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    /// `[v]_i = v_{i+1} − v_i` for `i = 0..M−1`.
    pub fn jumps(&self) -> Vec<Vector> {
        self.values.windows(2).map(|w| &w[1] - &w[0]).collect()
    }

    /// Largest componentwise difference to another function on the same nodes.
    pub fn max_abs_diff(&self, other: &GridFunction) -> Result<f64> {
        if self.grid.nodes() != other.grid.nodes() {
            return Err(Error::GridMismatch("functions live on different grids".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max))
    }
}

/// Discrete state with its port outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    state: GridFunction,
    outputs: Vec<Vector>,
}

impl StateTrajectory {
    pub fn new(sys: &PhSystem, state: GridFunction) -> Result<Self> {
        check_len("trajectory state", sys.state_dim(), state.dim())?;
        let outputs = state
            .values()
            .iter()
            .map(|x| sys.output(x))
            .collect::<Result<_>>()?;
        Ok(Self { state, outputs })
    }

    pub fn from_values(sys: &PhSystem, grid: TimeGrid, values: Vec<Vector>) -> Result<Self> {
        Self::new(sys, GridFunction::new(grid, values)?)
    }

    pub fn state(&self) -> &GridFunction {
        &self.state
    }

    pub fn grid(&self) -> &TimeGrid {
        self.state.grid()
    }

    pub fn x(&self, i: usize) -> &Vector {
        self.state.value(i)
    }

    pub fn y(&self, i: usize) -> &Vector {
        &self.outputs[i]
    }

    pub fn outputs(&self) -> &[Vector] {
        &self.outputs
    }

    /// Linear interpolation between nodes.
    pub fn interpolate(&self, t: f64) -> Result<Vector> {
        let nodes = self.grid().nodes();
        let end = self.grid().horizon();
        if !(0.0..=end).contains(&t) {
            return Err(Error::OutOfDomain { t, start: 0.0, end });
        }
        let k = nodes.partition_point(|&n| n < t);
        if k == 0 {
            return Ok(self.x(0).clone());
        }
        let (a, b) = (nodes[k - 1], nodes[k]);
        let w = (t - a) / (b - a);
        Ok(self.x(k - 1) * (1.0 - w) + self.x(k) * w)
    }
}

/// `H(x(t)) − H(x(s)) − ∫_s^t (uᵀy − xᵀQRQx) dτ`, with the trajectory read
/// as piecewise linear and the integral by composite trapezoid.
///
/// The input is sampled at the midpoint of each quadrature cell, so input
/// jumps located at trajectory nodes are integrated exactly.
pub fn continuous_energy_residual(
    sys: &PhSystem,
    traj: &StateTrajectory,
    u: &dyn Input,
    s: f64,
    t: f64,
) -> Result<f64> {
    let end = traj.grid().horizon();
    if !(s >= 0.0 && t <= end && s < t) {
        return Err(Error::OutOfDomain {
            t: if s < 0.0 || s >= t { s } else { t },
            start: 0.0,
            end,
        });
    }
    let mut times = vec![s];
    times.extend(traj.grid().nodes().iter().copied().filter(|&n| n > s && n < t));
    times.push(t);

    let states: Vec<Vector> = times
        .iter()
        .map(|&tau| traj.interpolate(tau))
        .collect::<Result<_>>()?;
    let mut integral = 0.0;
    for k in 0..times.len() - 1 {
        let h = times[k + 1] - times[k];
        let um = u.sample(0.5 * (times[k] + times[k + 1]))?;
        let power = |x: &Vector| -> Result<f64> {
            Ok(um.dot(&sys.output(x)?) - dissipation_rate(sys, x)?)
        };
        integral += 0.5 * h * (power(&states[k])? + power(&states[k + 1])?);
    }
    let last = states.len() - 1;
    Ok(hamiltonian(sys, &states[last])? - hamiltonian(sys, &states[0])? - integral)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use proptest::prelude::*;

    fn diag(v: &[f64]) -> Matrix {
        Matrix::from_diagonal(&Vector::from_column_slice(v))
    }

    fn vecf(v: &[f64]) -> Vector {
        Vector::from_column_slice(v)
    }

    fn sys_with(r: Matrix, q: Matrix) -> PhSystem {
        PhSystem::new(presets::j(), r, q, presets::b()).unwrap()
    }

    #[test]
    fn hamiltonian_examples() {
        let s = sys_with(Matrix::zeros(3, 3), Matrix::identity(3, 3));
        assert_eq!(hamiltonian(&s, &vecf(&[1.0, 2.0, 1.0])).unwrap(), 3.0);
        assert_eq!(hamiltonian(&s, &Vector::zeros(3)).unwrap(), 0.0);
        let s = sys_with(Matrix::zeros(3, 3), diag(&[2.0, 0.0, 0.0]));
        assert_eq!(hamiltonian(&s, &vecf(&[3.0, 5.0, 7.0])).unwrap(), 9.0);
        assert!(matches!(
            hamiltonian(&s, &Vector::zeros(2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn dissipation_examples() {
        let x = vecf(&[1.0, 2.0, 1.0]);
        let s = sys_with(Matrix::zeros(3, 3), Matrix::identity(3, 3));
        assert_eq!(dissipation_rate(&s, &x).unwrap(), 0.0);
        let s = sys_with(Matrix::identity(3, 3), Matrix::identity(3, 3));
        assert_eq!(dissipation_rate(&s, &x).unwrap(), 6.0);

        // R1 = [[1,1,0],[1,1,0],[0,0,0]], x = (1,1,0): xᵀR1x = 4.
        let s = sys_with(presets::r1(), Matrix::identity(3, 3));
        let x = vecf(&[1.0, 1.0, 0.0]);
        let d = dissipation_rate(&s, &x).unwrap();
        assert_eq!(d, 4.0);
        // Oracle: ‖R^{1/2}x‖² with the symmetric square root from the eigen-decomposition.
        let (w, v) = crate::numerics::symmetric_eigen(&presets::r1()).unwrap();
        let sqrt_w = Vector::from_iterator(3, w.iter().map(|l| l.max(0.0).sqrt()));
        let root = &v * Matrix::from_diagonal(&sqrt_w) * v.transpose();
        assert!(((root * &x).norm_squared() - d).abs() < 1e-12);
    }

    #[test]
    fn validation_names_the_field() {
        let bad_j = Matrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let err = PhSystem::new(bad_j, presets::r1(), Matrix::identity(3, 3), presets::b());
        assert!(matches!(err, Err(Error::InvalidSystem { field: "J", .. })));

        let bad_r = diag(&[1.0, -1.0, 0.0]);
        let err = PhSystem::new(presets::j(), bad_r, Matrix::identity(3, 3), presets::b());
        assert!(matches!(err, Err(Error::InvalidSystem { field: "R", .. })));

        let err = PhSystem::new(presets::j(), presets::r1(), Matrix::identity(2, 2), presets::b());
        assert!(matches!(err, Err(Error::InvalidSystem { field: "Q", .. })));

        let err = PhSystem::new(presets::j(), presets::r1(), Matrix::identity(3, 3), Matrix::zeros(2, 1));
        assert!(matches!(err, Err(Error::InvalidSystem { field: "B", .. })));
    }

    #[test]
    fn a_is_j_minus_r_times_q() {
        let q = diag(&[2.0, 1.0, 0.5]);
        let s = sys_with(presets::r1(), q.clone());
        assert_eq!(s.a(), &((presets::j() - presets::r1()) * q));
    }

    #[test]
    fn step_input_half_open() {
        let u = presets::step_input();
        assert_eq!(eval_input(&u, 0.0).unwrap()[0], 0.0);
        assert_eq!(eval_input(&u, 5.0).unwrap()[0], 0.0);
        assert_eq!(eval_input(&u, 5.01).unwrap()[0], 10.0);
        assert_eq!(eval_input(&u, 10.0).unwrap()[0], 10.0);
        assert!(matches!(eval_input(&u, 10.5), Err(Error::OutOfDomain { .. })));
        assert!(matches!(eval_input(&u, -1.0), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn constant_input_everywhere() {
        let u = InputSignal::constant(3.0, vecf(&[1.5, -2.0])).unwrap();
        for t in [0.0, 0.1, 1.7, 3.0] {
            assert_eq!(eval_input(&u, t).unwrap(), vecf(&[1.5, -2.0]));
        }
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(vec![0.0]).is_err());
        assert!(TimeGrid::new(vec![0.1, 1.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, 1.0, 1.0]).is_err());
        let g = TimeGrid::uniform(10.0, 3).unwrap();
        assert_eq!(g.horizon(), 10.0);
        assert_eq!(g.intervals(), 3);
        assert!(g.widths().iter().all(|h| *h > 0.0));
        assert_eq!(g.nearest_node(6.0), 2);
    }

    #[test]
    fn energy_residual_vanishes_for_equilibrium() {
        // R = 0, Q = diag(0,0,1) gives A x = 0 for x = (1,1,0).
        let s = sys_with(Matrix::zeros(3, 3), diag(&[0.0, 0.0, 1.0]));
        let g = TimeGrid::uniform(2.0, 4).unwrap();
        let x = vecf(&[1.0, 1.0, 0.0]);
        assert!((s.a() * &x).norm() == 0.0);
        let traj = StateTrajectory::from_values(&s, g, vec![x; 5]).unwrap();
        let u = InputSignal::zero(2.0, 1).unwrap();
        assert_eq!(continuous_energy_residual(&s, &traj, &u, 0.0, 2.0).unwrap(), 0.0);
        assert!(continuous_energy_residual(&s, &traj, &u, 1.0, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn a_is_q_dissipative(x in prop::collection::vec(-10.0..10.0f64, 3), scale in 0.0..5.0f64) {
            let s = sys_with(presets::r1() * scale, diag(&[1.0, 2.0, 0.5]));
            let x = Vector::from_vec(x);
            let v = x.dot(&(s.q() * s.a() * &x));
            prop_assert!(v <= 1e-12 * x.norm_squared().max(1.0));
            prop_assert!(hamiltonian(&s, &x).unwrap() >= 0.0);
        }

        #[test]
        fn input_constant_on_segments(t in 0.0..10.0f64) {
            let u = presets::step_input();
            let expect = if t <= 5.0 { 0.0 } else { 10.0 };
            prop_assert_eq!(eval_input(&u, t).unwrap()[0], expect);
        }
    }
}
