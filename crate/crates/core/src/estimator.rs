//! Dual-weighted residual indicators, Dörfler marking and bisection.

use rayon::prelude::*;

use crate::adjoint::AdjointSolution;
use crate::error::{Error, Result};
use crate::ph::{Input, PhSystem, StateTrajectory, TimeGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorSet {
    /// `eta[i − 1]` belongs to the cell `(t_{i−1}, t_i]`.
    pub eta: Vec<f64>,
    pub total: f64,
}

impl IndicatorSet {
    pub fn new(eta: Vec<f64>) -> Self {
        let total = eta.iter().sum();
        Self { eta, total }
    }

    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }
}

/// Local indicators
///
/// ```text
/// η_i = | h_i/2 ⟨−A x_i, Δλ_i⟩ + ⟨x_i − x_{i−1}, Δλ_i⟩
///         + h_i/2 (λ_{i−1}ᵀ B u(t_{i−1}) − λ_iᵀ B u(t_i)) |,   Δλ_i = λ_i − λ_{i−1},
/// ```
///
/// where `Δλ_i` is the nodal gap between the piecewise-linear interpolant of
/// the discrete adjoint and the adjoint itself.
pub fn compute_indicators(
    sys: &PhSystem,
    grid: &TimeGrid,
    traj: &StateTrajectory,
    lam: &AdjointSolution,
    u: &dyn Input,
) -> Result<IndicatorSet> {
    if traj.grid().nodes() != grid.nodes() || lam.lambda.grid().nodes() != grid.nodes() {
        return Err(Error::GridMismatch(
            "trajectory, adjoint and grid must share nodes".into(),
        ));
    }
    let nodes = grid.nodes();
    let eta = (1..=grid.intervals())
        .into_par_iter()
        .map(|i| {
            let h = grid.width(i);
            let (l_prev, l_cur) = (lam.lambda.value(i - 1), lam.lambda.value(i));
            let dl = l_cur - l_prev;
            let ax = sys.a() * traj.x(i);
            let dx = traj.x(i) - traj.x(i - 1);
            let bu_prev = sys.b() * u.sample(nodes[i - 1])?;
            let bu_cur = sys.b() * u.sample(nodes[i])?;
            let value = -0.5 * h * ax.dot(&dl)
                + dx.dot(&dl)
                + 0.5 * h * (l_prev.dot(&bu_prev) - l_cur.dot(&bu_cur));
            Ok(value.abs())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IndicatorSet::new(eta))
}

/// `Σ η_i`, the computable surrogate for the QoI error.
pub fn estimator_total(ind: &IndicatorSet) -> f64 {
    ind.eta.iter().sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkingResult {
    /// Marked cell indices (0-based) in selection order, largest indicator first.
    pub marked: Vec<usize>,
    pub theta: f64,
    pub covered_fraction: f64,
}

impl MarkingResult {
    pub fn sorted(&self) -> Vec<usize> {
        let mut v = self.marked.clone();
        v.sort_unstable();
        v
    }

    /// Keeps only the first `limit` selections.
    pub fn truncated(&self, limit: usize) -> MarkingResult {
        MarkingResult {
            marked: self.marked.iter().copied().take(limit).collect(),
            ..self.clone()
        }
    }
}

/// Greedy Dörfler marking: largest indicators first (ties by lower index)
/// until their sum reaches `theta` times the total. Zero indicators are
/// never marked.
pub fn doerfler_mark(ind: &IndicatorSet, theta: f64) -> Result<MarkingResult> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidTheta(theta));
    }
    let mut order: Vec<usize> = (0..ind.eta.len()).collect();
    order.sort_by(|&a, &b| ind.eta[b].total_cmp(&ind.eta[a]).then(a.cmp(&b)));
    // Summed in selection order so that theta = 1 is reached exactly.
    let total: f64 = order.iter().map(|&i| ind.eta[i]).sum();
    if total <= 0.0 {
        return Ok(MarkingResult {
            marked: Vec::new(),
            theta,
            covered_fraction: 1.0,
        });
    }
    let goal = theta * total;
    let mut covered = 0.0;
    let mut marked = Vec::new();
    for i in order {
        if covered >= goal || ind.eta[i] <= 0.0 {
            break;
        }
        covered += ind.eta[i];
        marked.push(i);
    }
    Ok(MarkingResult {
        marked,
        theta,
        covered_fraction: covered / total,
    })
}

/// Bisects every marked cell at its midpoint.
pub fn refine_grid(grid: &TimeGrid, marking: &MarkingResult) -> Result<TimeGrid> {
    let m = grid.intervals();
    let mut flag = vec![false; m];
    for &i in &marking.marked {
        if i >= m {
            return Err(Error::IndexOutOfRange { index: i, len: m });
        }
        flag[i] = true;
    }
    let nodes = grid.nodes();
    let mut out = Vec::with_capacity(nodes.len() + marking.marked.len());
    out.push(nodes[0]);
    for (i, split) in flag.into_iter().enumerate() {
        if split {
            out.push(0.5 * (nodes[i] + nodes[i + 1]));
        }
        out.push(nodes[i + 1]);
    }
    TimeGrid::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjoint::AdjointMethod;
    use crate::numerics::{Matrix, Vector};
    use crate::ph::{GridFunction, InputSignal};
    use proptest::prelude::*;

    fn marking(eta: &[f64], theta: f64) -> MarkingResult {
        doerfler_mark(&IndicatorSet::new(eta.to_vec()), theta).unwrap()
    }

    #[test]
    fn doerfler_examples() {
        let m = marking(&[4.0, 3.0, 2.0, 1.0], 0.5);
        assert_eq!(m.sorted(), vec![0, 1]);
        assert!((m.covered_fraction - 0.7).abs() < 1e-15);

        let m = marking(&[0.0, 2.0, 0.0, 1e-3, 5.0], 1.0);
        assert_eq!(m.sorted(), vec![1, 3, 4]);
        assert_eq!(m.covered_fraction, 1.0);

        let m = marking(&[1.0; 10], 0.5);
        assert_eq!(m.sorted(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn invalid_theta() {
        let ind = IndicatorSet::new(vec![1.0]);
        for theta in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(doerfler_mark(&ind, theta), Err(Error::InvalidTheta(_))));
        }
    }

    #[test]
    fn totals() {
        assert_eq!(estimator_total(&IndicatorSet::new(vec![])), 0.0);
        assert_eq!(estimator_total(&IndicatorSet::new(vec![1.0, 2.0, 3.0])), 6.0);
    }

    #[test]
    fn refine_examples() {
        let g = TimeGrid::new(vec![0.0, 1.0, 2.0]).unwrap();
        let m = |marked: Vec<usize>| MarkingResult {
            marked,
            theta: 0.5,
            covered_fraction: 1.0,
        };
        assert_eq!(refine_grid(&g, &m(vec![0])).unwrap().nodes(), &[0.0, 0.5, 1.0, 2.0]);
        assert_eq!(refine_grid(&g, &m(vec![])).unwrap(), g);
        let u = TimeGrid::uniform(8.0, 4).unwrap();
        assert_eq!(refine_grid(&u, &m(vec![0, 1, 2, 3])).unwrap(), TimeGrid::uniform(8.0, 8).unwrap());
        assert!(matches!(
            refine_grid(&g, &m(vec![2])),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        ));
    }

    fn scalar() -> PhSystem {
        // A = −1, B = 0
        PhSystem::new(
            Matrix::zeros(1, 1),
            Matrix::identity(1, 1),
            Matrix::identity(1, 1),
            Matrix::zeros(1, 1),
        )
        .unwrap()
    }

    fn adjoint(grid: &TimeGrid, values: Vec<Vector>) -> AdjointSolution {
        AdjointSolution {
            lambda: GridFunction::new(grid.clone(), values).unwrap(),
            method: AdjointMethod::Exact,
        }
    }

    #[test]
    fn scalar_indicator() {
        let sys = scalar();
        let grid = TimeGrid::new(vec![0.0, 1.0]).unwrap();
        let traj = StateTrajectory::from_values(
            &sys,
            grid.clone(),
            vec![Vector::from_element(1, 1.0), Vector::from_element(1, 0.5)],
        )
        .unwrap();
        let lam = adjoint(&grid, vec![Vector::from_element(1, 0.5), Vector::from_element(1, 1.0)]);
        let u = InputSignal::zero(1.0, 1).unwrap();
        let ind = compute_indicators(&sys, &grid, &traj, &lam, &u).unwrap();
        // ½·⟨−A x₁, Δλ⟩ + ⟨Δx, Δλ⟩ = ½·(½)(½) + (−½)(½) = −1/8
        assert_eq!(ind.eta, vec![0.125]);
    }

    #[test]
    fn zero_and_constant_adjoints() {
        let sys = crate::presets::paper_r1();
        let grid = TimeGrid::uniform(10.0, 4).unwrap();
        let u = crate::presets::step_input();
        let traj = crate::forward::solve_forward(&sys, &grid, &u, &crate::presets::initial_state())
            .unwrap()
            .trajectory;
        let zero = adjoint(&grid, vec![Vector::zeros(3); 5]);
        let ind = compute_indicators(&sys, &grid, &traj, &zero, &u).unwrap();
        assert!(ind.eta.iter().all(|e| *e == 0.0));

        let c = Vector::from_column_slice(&[0.3, -1.0, 2.0]);
        let constant = adjoint(&grid, vec![c.clone(); 5]);
        let ind = compute_indicators(&sys, &grid, &traj, &constant, &u).unwrap();
        for i in 1..=4 {
            let h = grid.width(i);
            let du = u.sample(grid.nodes()[i - 1]).unwrap() - u.sample(grid.nodes()[i]).unwrap();
            let expect = (0.5 * h * c.dot(&(sys.b() * du))).abs();
            assert!((ind.eta[i - 1] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_mismatch() {
        let sys = scalar();
        let g1 = TimeGrid::new(vec![0.0, 1.0]).unwrap();
        let g2 = TimeGrid::new(vec![0.0, 2.0]).unwrap();
        let traj = StateTrajectory::from_values(&sys, g1.clone(), vec![Vector::zeros(1); 2]).unwrap();
        let lam = adjoint(&g2, vec![Vector::zeros(1); 2]);
        let u = InputSignal::zero(2.0, 1).unwrap();
        assert!(matches!(
            compute_indicators(&sys, &g1, &traj, &lam, &u),
            Err(Error::GridMismatch(_))
        ));
    }

    proptest! {
        #[test]
        fn marking_invariants(eta in prop::collection::vec(0.0..10.0f64, 1..40), t1 in 0.01..1.0f64, t2 in 0.01..1.0f64) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let a = marking(&eta, lo);
            let b = marking(&eta, hi);
            prop_assert!(a.covered_fraction >= lo);
            // greedy prefix: a larger fraction keeps everything already marked
            prop_assert!(b.marked.starts_with(&a.marked));
            if let Some((&last, head)) = a.marked.split_last() {
                let total: f64 = eta.iter().sum();
                let without: f64 = head.iter().map(|&i| eta[i]).sum();
                prop_assert!(without < lo * total * (1.0 + 1e-12) || eta[last] == 0.0);
            }
        }

        #[test]
        fn refinement_keeps_nodes(widths in prop::collection::vec(0.01..2.0f64, 1..30), mask in prop::collection::vec(any::<bool>(), 30)) {
            let mut nodes = vec![0.0];
            for w in &widths { nodes.push(nodes.last().unwrap() + w); }
            let g = TimeGrid::new(nodes).unwrap();
            let marked: Vec<usize> = (0..g.intervals()).filter(|&i| mask[i]).collect();
            let count = marked.len();
            let r = refine_grid(&g, &MarkingResult { marked, theta: 1.0, covered_fraction: 1.0 }).unwrap();
            prop_assert_eq!(r.intervals(), g.intervals() + count);
            prop_assert_eq!(r.horizon(), g.horizon());
            prop_assert_eq!(r.nodes()[0], 0.0);
            for t in g.nodes() { prop_assert!(r.nodes().contains(t)); }
        }
    }
}
