use crate::grid::{AdmittanceMatrix, Grid};
use crate::scalar::Scalar;

use super::VoltageSolution;

/// Active/reactive residuals `scheduled - calculated` per bus.
#[derive(Clone, Debug, PartialEq)]
pub struct MismatchVector<T> {
    pub dp: Vec<T>,
    pub dq: Vec<T>,
}

impl<T: Scalar> MismatchVector<T> {
    /// Largest absolute residual over the given buses.
    pub fn max_abs_over(&self, buses: &[usize]) -> T {
        buses
            .iter()
            .map(|&i| self.dp[i].abs().max(self.dq[i].abs()))
            .fold(T::zero(), T::max)
    }
}

/// Injections implied by a voltage state:
/// `P_i = sum_k |V_i||V_k| (G_ik cos t_ik + B_ik sin t_ik)` and
/// `Q_i = sum_k |V_i||V_k| (G_ik sin t_ik - B_ik cos t_ik)`.
pub fn calculated_injections<T: Scalar>(
    y: &AdmittanceMatrix<T>,
    sol: &VoltageSolution<T>,
) -> (Vec<T>, Vec<T>) {
    let n = y.n();
    assert_eq!(sol.len(), n, "voltage state length must match admittance matrix");
    let mut p = vec![T::zero(); n];
    let mut q = vec![T::zero(); n];
    for i in 0..n {
        let (mut pi, mut qi) = (T::zero(), T::zero());
        for k in 0..n {
            let (g, b) = (y.g(i, k), y.b(i, k));
            if g == T::zero() && b == T::zero() {
                continue;
            }
            let (s, c) = (sol.va[i] - sol.va[k]).sin_cos();
            let vv = sol.vm[i] * sol.vm[k];
            pi += vv * (g * c + b * s);
            qi += vv * (g * s - b * c);
        }
        p[i] = pi;
        q[i] = qi;
    }
    (p, q)
}

/// Residuals of the AC balance equations at `sol`, slack rows included.
pub fn power_mismatch<T: Scalar>(
    grid: &Grid<T>,
    y: &AdmittanceMatrix<T>,
    sol: &VoltageSolution<T>,
) -> MismatchVector<T> {
    let (p, q) = calculated_injections(y, sol);
    let buses = grid.buses();
    MismatchVector {
        dp: buses.iter().zip(&p).map(|(b, &pc)| b.p_inj - pc).collect(),
        dq: buses.iter().zip(&q).map(|(b, &qc)| b.q_inj - qc).collect(),
    }
}

/// Sum of squared residuals over PQ buses. The slack row is excluded since
/// its injection is whatever balances the losses.
pub fn physics_loss<T: Scalar>(
    grid: &Grid<T>,
    y: &AdmittanceMatrix<T>,
    sol: &VoltageSolution<T>,
) -> T {
    let mis = power_mismatch(grid, y, sol);
    grid.pq_buses()
        .into_iter()
        .map(|i| mis.dp[i] * mis.dp[i] + mis.dq[i] * mis.dq[i])
        .sum()
}
