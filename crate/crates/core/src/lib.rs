//! Graph neural network voltage prediction for distribution grids.
//!
//! The crate is layered bottom-up:
//!
//! - [`grid`]: buses, lines, admittance matrix and node features;
//! - [`powerflow`]: Newton-Raphson, Gauss-Seidel and DC solvers plus the
//!   power-balance residual;
//! - [`autodiff`]: a reverse-mode tape over dense tensors, with complex values
//!   carried as real/imaginary pairs;
//! - [`neural`]: GraphConv models in real, residual and complex form;
//! - [`training`]: Adam, plateau schedule, supervised and physics losses;
//! - [`datagen`]: synthetic radial feeder families and dataset splits;
//! - [`bench`]: metrics, experiment rows and result tables.
//!
//! Grid, solver and tape code is generic over [`Scalar`] (`f32`, `f64`);
//! the learning stack runs in `f64`.

pub mod autodiff;
pub mod bench;
pub mod datagen;
pub mod grid;
pub mod linalg;
pub mod neural;
pub mod powerflow;
pub mod scalar;
pub mod training;

pub use scalar::Scalar;

pub type Grid64 = grid::Grid<f64>;
pub type Grid32 = grid::Grid<f32>;
pub type Bus64 = grid::Bus<f64>;
pub type Line64 = grid::Line<f64>;
pub type AdmittanceMatrix64 = grid::AdmittanceMatrix<f64>;
pub type VoltageSolution64 = powerflow::VoltageSolution<f64>;
pub type VoltageSolution32 = powerflow::VoltageSolution<f32>;
pub type Tensor64 = autodiff::Tensor<f64>;
pub type Tape64 = autodiff::Tape<f64>;
