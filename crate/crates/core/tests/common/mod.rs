#![allow(dead_code)]

use phadapt_core::{InputSignal, Matrix, PhSystem, TimeGrid, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Random pH data: `J = G − Gᵀ`, `R = L Lᵀ` (possibly rank deficient),
/// `Q = K Kᵀ + δI`.
pub fn random_system(rng: &mut ChaCha8Rng, n: usize, m: usize) -> PhSystem {
    let g = random_matrix(rng, n, n);
    let j = &g - g.transpose();
    let rank = rng.random_range(0..=n);
    let l = random_matrix(rng, n, rank);
    let r = &l * l.transpose();
    let k = random_matrix(rng, n, n);
    let q = &k * k.transpose() + Matrix::identity(n, n) * 0.1;
    let b = random_matrix(rng, n, m);
    PhSystem::new(j, r, q, b).expect("random pH data is valid")
}

pub fn random_grid(rng: &mut ChaCha8Rng, horizon: f64, intervals: usize) -> TimeGrid {
    let weights: Vec<f64> = (0..intervals).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut nodes = vec![0.0];
    let mut t = 0.0;
    for w in &weights {
        t += horizon * w / total;
        nodes.push(t);
    }
    nodes[intervals] = horizon;
    TimeGrid::new(nodes).unwrap()
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_input(rng: &mut ChaCha8Rng, horizon: f64, m: usize) -> InputSignal {
    let segments = rng.random_range(1..=3);
    let mut breakpoints: Vec<f64> = (1..segments).map(|_| rng.random_range(0.1..0.9) * horizon).collect();
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.insert(0, 0.0);
    breakpoints.push(horizon);
    let values = (0..segments).map(|_| random_vector(rng, m)).collect();
    InputSignal::new(breakpoints, values).unwrap()
}
