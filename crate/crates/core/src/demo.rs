//! A small two-dimensional example used by the docs, tests and CLI configs.

use alloc::vec;
use alloc::vec::Vec;

use crate::domain::{BoxDomain, EmpiricalMeasure};

/// Eight atoms spread over the unit square.
pub const DEMO_POINTS: [[f64; 2]; 8] = [
    [0.2, 0.2],
    [0.35, 0.75],
    [0.5, 0.45],
    [0.7, 0.2],
    [0.8, 0.7],
    [0.15, 0.5],
    [0.6, 0.9],
    [0.9, 0.4],
];

/// [`DEMO_POINTS`] as an empirical measure on `[0, 1]^2`.
pub fn demo_measure() -> EmpiricalMeasure {
    let points: Vec<Vec<f64>> = DEMO_POINTS.iter().map(|p| vec![p[0], p[1]]).collect();
    EmpiricalMeasure::new(&BoxDomain::unit(2), points).expect("demo atoms lie in the unit square")
}
