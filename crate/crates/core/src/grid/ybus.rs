use crate::scalar::Scalar;

use super::{Grid, GridError};

/// Dense bus admittance matrix `Y = G + jB`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmittanceMatrix<T> {
    n: usize,
    g: Vec<T>,
    b: Vec<T>,
}

/// One structurally nonzero entry of the admittance matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdmittanceEntry<T> {
    pub row: usize,
    pub col: usize,
    pub g: T,
    pub b: T,
}

impl<T: Scalar> AdmittanceMatrix<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn g(&self, i: usize, k: usize) -> T {
        self.g[i * self.n + k]
    }

    #[inline]
    pub fn b(&self, i: usize, k: usize) -> T {
        self.b[i * self.n + k]
    }

    pub fn g_matrix(&self) -> &[T] {
        &self.g
    }

    pub fn b_matrix(&self) -> &[T] {
        &self.b
    }

    /// Diagonal entries plus every off-diagonal entry backed by a line, in
    /// row-major order.
    pub fn entries(&self) -> Vec<AdmittanceEntry<T>> {
        let mut out = Vec::new();
        for row in 0..self.n {
            for col in 0..self.n {
                let (g, b) = (self.g(row, col), self.b(row, col));
                if row == col || g != T::zero() || b != T::zero() {
                    out.push(AdmittanceEntry { row, col, g, b });
                }
            }
        }
        out
    }
}

/// Assembles the series-only admittance matrix. Each line contributes
/// `y = 1 / (r + jx)` to both diagonals and `-y` to both off-diagonals.
pub fn build_ybus<T: Scalar>(grid: &Grid<T>) -> Result<AdmittanceMatrix<T>, GridError> {
    let n = grid.n_buses();
    let mut g = vec![T::zero(); n * n];
    let mut b = vec![T::zero(); n * n];
    for (index, line) in grid.lines().iter().enumerate() {
        let denom = line.r * line.r + line.x * line.x;
        if !(denom > T::zero()) || !denom.is_finite() {
            return Err(GridError::BadImpedance {
                index,
                from: line.from_bus,
                to: line.to_bus,
                r: line.r.as_f64(),
                x: line.x.as_f64(),
            });
        }
        let (yg, yb) = (line.r / denom, -line.x / denom);
        let (f, t) = (line.from_bus, line.to_bus);
        g[f * n + t] -= yg;
        b[f * n + t] -= yb;
        g[t * n + f] -= yg;
        b[t * n + f] -= yb;
        g[f * n + f] += yg;
        b[f * n + f] += yb;
        g[t * n + t] += yg;
        b[t * n + t] += yb;
    }
    Ok(AdmittanceMatrix { n, g, b })
}
