//! Derivative-free optimizers for acquisition surfaces.
//!
//! Three routines cover the needs of the acquisition layer: [`cmaes_minimize`]
//! for noisy Monte-Carlo objectives, [`direct_maximize`] for deterministic
//! global search, and [`local_refine`] for bounded local polishing with
//! finite-difference gradients.

mod cmaes;
mod direct;
pub(crate) mod refine;

pub use cmaes::{cmaes_minimize, CmaesConfig};
pub use direct::direct_maximize;
pub use refine::local_refine;

use nalgebra::DVector;
use rand::Rng;

/// Axis-aligned search box.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxBounds {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl BoxBounds {
    /// Panics unless `lower < upper` elementwise.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len(), "bound dimension mismatch");
        assert!(
            lower.iter().zip(&upper).all(|(l, u)| l < u),
            "lower bound must be strictly below upper bound in every dimension"
        );
        Self {
            lower: DVector::from_vec(lower),
            upper: DVector::from_vec(upper),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn widths(&self) -> DVector<f64> {
        &self.upper - &self.lower
    }

    pub fn center(&self) -> DVector<f64> {
        (&self.upper + &self.lower) * 0.5
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .enumerate()
                .all(|(i, v)| *v >= self.lower[i] && *v <= self.upper[i])
    }

    /// Coordinate-wise projection onto the box.
    pub fn clip(&self, x: &[f64]) -> DVector<f64> {
        assert_eq!(x.len(), self.dim(), "bound dimension mismatch");
        DVector::from_iterator(
            x.len(),
            x.iter()
                .enumerate()
                .map(|(i, v)| v.clamp(self.lower[i], self.upper[i])),
        )
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|i| rng.random_range(self.lower[i]..=self.upper[i])),
        )
    }

    /// Concatenation `[self; other]`, used to form joint context-parameter
    /// boxes.
    pub fn join(&self, other: &BoxBounds) -> BoxBounds {
        let lower = self
            .lower
            .iter()
            .chain(other.lower.iter())
            .copied()
            .collect();
        let upper = self
            .upper
            .iter()
            .chain(other.upper.iter())
            .copied()
            .collect();
        BoxBounds::new(lower, upper)
    }
}
