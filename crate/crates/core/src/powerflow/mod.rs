//! AC and DC power flow.
//!
//! [`solve_ac`] is the ground-truth oracle for every dataset. It and the
//! physics loss evaluate the same [`power_mismatch`]; [`solve_gauss_seidel`]
//! is an independent fixed-point method kept for cross-checking Newton.

mod dc;
mod gauss_seidel;
mod mismatch;
mod newton;

pub use dc::solve_dc;
pub use gauss_seidel::{solve_gauss_seidel, GaussSeidelOptions};
pub use mismatch::{calculated_injections, physics_loss, power_mismatch, MismatchVector};
pub use newton::{solve_ac, solve_ac_from, AcResult};

use thiserror::Error;

use crate::grid::{Grid, GridError};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerFlowError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("power flow did not converge in {iterations} iterations (max mismatch {mismatch:e} p.u.)")]
    Diverged { iterations: usize, mismatch: f64 },
    #[error("singular jacobian at iteration {0}")]
    SingularJacobian(usize),
    #[error("singular DC susceptance matrix")]
    SingularSusceptance,
    #[error("line {0} has zero reactance; the DC approximation is undefined")]
    ZeroReactance(usize),
    #[error("state has {got} buses, grid has {expected}")]
    Shape { expected: usize, got: usize },
    #[error("invalid solver options: {0}")]
    Options(String),
}

/// Per-bus voltage state in polar form.
#[derive(Clone, Debug, PartialEq)]
pub struct VoltageSolution<T> {
    pub vm: Vec<T>,
    pub va: Vec<T>,
}

impl<T: Scalar> VoltageSolution<T> {
    pub fn new(vm: Vec<T>, va: Vec<T>) -> Self {
        assert_eq!(vm.len(), va.len(), "vm and va lengths differ");
        Self { vm, va }
    }

    /// Every bus at the slack reference.
    pub fn flat(grid: &Grid<T>) -> Self {
        let slack = grid.slack_bus();
        let n = grid.n_buses();
        Self {
            vm: vec![slack.vm_ref; n],
            va: vec![slack.va_ref; n],
        }
    }

    pub fn len(&self) -> usize {
        self.vm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vm.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.vm.iter().chain(&self.va).all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> VoltageSolution<U> {
        VoltageSolution {
            vm: self.vm.iter().map(|v| U::lit(v.as_f64())).collect(),
            va: self.va.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<(), PowerFlowError> {
        if self.vm.len() != n || self.va.len() != n {
            return Err(PowerFlowError::Shape {
                expected: n,
                got: self.vm.len().min(self.va.len()),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions<T> {
    /// Maximum absolute PQ-bus mismatch accepted as converged, p.u.
    pub tol: T,
    pub max_iter: usize,
    /// Start from the slack reference everywhere; otherwise start from the
    /// DC angles with unit magnitudes.
    pub flat_start: bool,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-8),
            max_iter: 30,
            flat_start: true,
        }
    }
}

impl<T: Scalar> SolverOptions<T> {
    pub fn validate(&self) -> Result<(), PowerFlowError> {
        if !(self.tol > T::zero()) {
            return Err(PowerFlowError::Options(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(PowerFlowError::Options("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}
