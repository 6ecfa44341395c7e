//! The three-state benchmark family with a scalar input and its step-input scenario.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};
use crate::ph::{InputSignal, PhSystem};

pub const HORIZON: f64 = 10.0;
pub const STEP_TIME: f64 = 5.0;
pub const STEP_VALUE: f64 = 10.0;

pub const PRESET_NAMES: [&str; 3] = ["paper-R1", "paper-R2", "paper-10R2"];

pub fn j() -> Matrix {
    Matrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 0.0, 0.0, -1.0, -1.0, 1.0, 0.0])
}

pub fn r1() -> Matrix {
    Matrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0])
}

pub fn r2() -> Matrix {
    Matrix::identity(3, 3)
}

pub fn q() -> Matrix {
    Matrix::identity(3, 3)
}

pub fn b() -> Matrix {
    Matrix::from_column_slice(3, 1, &[1.0, 1.0, 0.0])
}

/// Not exponentially stable: spectrum of `J − R₁` is `{−2, ±√2 i}`.
pub fn paper_r1() -> PhSystem {
    PhSystem::new(j(), r1(), q(), b()).expect("preset is a valid pH system")
}

pub fn paper_r2() -> PhSystem {
    PhSystem::new(j(), r2(), q(), b()).expect("preset is a valid pH system")
}

pub fn paper_10r2() -> PhSystem {
    PhSystem::new(j(), r2() * 10.0, q(), b()).expect("preset is a valid pH system")
}

pub fn by_name(name: &str) -> Result<PhSystem> {
    match name {
        "paper-R1" => Ok(paper_r1()),
        "paper-R2" => Ok(paper_r2()),
        "paper-10R2" => Ok(paper_10r2()),
        other => Err(Error::InvalidConfig(format!(
            "unknown preset {other:?}; expected one of {PRESET_NAMES:?}"
        ))),
    }
}

pub fn initial_state() -> Vector {
    Vector::from_column_slice(&[1.0, 2.0, 1.0])
}

/// `u = 0` on `[0, 5]`, `u = 10` on `(5, 10]`.
pub fn step_input() -> InputSignal {
    InputSignal::new(
        vec![0.0, STEP_TIME, HORIZON],
        vec![Vector::zeros(1), Vector::from_element(1, STEP_VALUE)],
    )
    .expect("valid step input")
}
