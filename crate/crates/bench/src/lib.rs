//! Fixtures shared by the criterion benchmarks.

use phadapt_core::{presets, InputSignal, PhSystem, TimeGrid, Vector};

pub struct Problem {
    pub sys: PhSystem,
    pub input: InputSignal,
    pub x0: Vector,
    pub horizon: f64,
}

/// The three-state step-input scenario for the given preset name.
pub fn problem(preset: &str) -> Problem {
    Problem {
        sys: presets::by_name(preset).expect("known preset"),
        input: presets::step_input(),
        x0: presets::initial_state(),
        horizon: presets::HORIZON,
    }
}

/// A grid with `intervals` cells whose widths cycle through a few values, so
/// that the factor cache holds more than one entry.
pub fn graded_grid(horizon: f64, intervals: usize) -> TimeGrid {
    let weights: Vec<f64> = (0..intervals).map(|i| 1.0 + (i % 3) as f64).collect();
    let total: f64 = weights.iter().sum();
    let mut nodes = Vec::with_capacity(intervals + 1);
    let mut t = 0.0;
    nodes.push(t);
    for w in &weights {
        t += horizon * w / total;
        nodes.push(t);
    }
    nodes[intervals] = horizon;
    TimeGrid::new(nodes).expect("increasing nodes")
}
