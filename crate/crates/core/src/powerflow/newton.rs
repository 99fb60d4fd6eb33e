use crate::grid::{build_ybus, AdmittanceMatrix, Grid};
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

use super::mismatch::{calculated_injections, power_mismatch};
use super::{solve_dc, PowerFlowError, SolverOptions, VoltageSolution};

#[derive(Clone, Debug, PartialEq)]
pub struct AcResult<T> {
    pub solution: VoltageSolution<T>,
    /// Newton updates applied before the mismatch dropped below tolerance.
    pub iterations: usize,
    /// Largest absolute PQ-bus mismatch at the returned state.
    pub max_mismatch: T,
}

/// Newton-Raphson AC power flow over the `2(N-1)` PQ unknowns.
pub fn solve_ac<T: Scalar>(grid: &Grid<T>, opts: &SolverOptions<T>) -> Result<AcResult<T>, PowerFlowError> {
    opts.validate()?;
    let y = build_ybus(grid)?;
    let slack = grid.slack_bus();
    let n = grid.n_buses();
    let init = if opts.flat_start {
        let mut vm = vec![T::one(); n];
        vm[grid.slack()] = slack.vm_ref;
        VoltageSolution::new(vm, vec![slack.va_ref; n])
    } else {
        let mut dc = solve_dc(grid, &y)?;
        dc.vm[grid.slack()] = slack.vm_ref;
        dc
    };
    newton(grid, &y, init, opts)
}

/// Newton-Raphson from a caller-supplied state. The slack entries of
/// `initial` are overwritten by the slack reference.
pub fn solve_ac_from<T: Scalar>(
    grid: &Grid<T>,
    opts: &SolverOptions<T>,
    initial: &VoltageSolution<T>,
) -> Result<AcResult<T>, PowerFlowError> {
    opts.validate()?;
    initial.check_len(grid.n_buses())?;
    let y = build_ybus(grid)?;
    newton(grid, &y, initial.clone(), opts)
}

fn newton<T: Scalar>(
    grid: &Grid<T>,
    y: &AdmittanceMatrix<T>,
    mut sol: VoltageSolution<T>,
    opts: &SolverOptions<T>,
) -> Result<AcResult<T>, PowerFlowError> {
    let slack = grid.slack();
    sol.vm[slack] = grid.slack_bus().vm_ref;
    sol.va[slack] = grid.slack_bus().va_ref;
    let pq = grid.pq_buses();
    let m = pq.len();

    for iter in 0..=opts.max_iter {
        let mis = power_mismatch(grid, y, &sol);
        let worst = mis.max_abs_over(&pq);
        if !worst.is_finite() {
            return Err(PowerFlowError::Diverged {
                iterations: iter,
                mismatch: f64::INFINITY,
            });
        }
        if worst < opts.tol {
            return Ok(AcResult {
                solution: sol,
                iterations: iter,
                max_mismatch: worst,
            });
        }
        if iter == opts.max_iter {
            return Err(PowerFlowError::Diverged {
                iterations: iter,
                mismatch: worst.as_f64(),
            });
        }

        let jac = jacobian(y, &sol, &pq);
        let rhs: Vec<T> = pq.iter().map(|&i| mis.dp[i]).chain(pq.iter().map(|&i| mis.dq[i])).collect();
        let step = jac.solve(&rhs).ok_or(PowerFlowError::SingularJacobian(iter))?;
        for (row, &bus) in pq.iter().enumerate() {
            sol.va[bus] += step[row];
            sol.vm[bus] += step[m + row];
        }
    }
    unreachable!("loop returns on its last iteration")
}

/// Polar Jacobian of the calculated injections with respect to
/// `[va_pq, vm_pq]`, rows ordered `[P_pq, Q_pq]`.
fn jacobian<T: Scalar>(y: &AdmittanceMatrix<T>, sol: &VoltageSolution<T>, pq: &[usize]) -> DenseMatrix<T> {
    let m = pq.len();
    let (p, q) = calculated_injections(y, sol);
    let mut jac = DenseMatrix::zeros(2 * m);
    for (r, &i) in pq.iter().enumerate() {
        let vi = sol.vm[i];
        for (c, &k) in pq.iter().enumerate() {
            if i == k {
                let (gii, bii) = (y.g(i, i), y.b(i, i));
                jac.set(r, c, -q[i] - bii * vi * vi);
                jac.set(r, m + c, p[i] / vi + gii * vi);
                jac.set(m + r, c, p[i] - gii * vi * vi);
                jac.set(m + r, m + c, q[i] / vi - bii * vi);
                continue;
            }
            let (g, b) = (y.g(i, k), y.b(i, k));
            if g == T::zero() && b == T::zero() {
                continue;
            }
            let (s, co) = (sol.va[i] - sol.va[k]).sin_cos();
            let vk = sol.vm[k];
            let a = g * s - b * co;
            let d = g * co + b * s;
            jac.set(r, c, vi * vk * a);
            jac.set(r, m + c, vi * d);
            jac.set(m + r, c, -vi * vk * d);
            jac.set(m + r, m + c, vi * a);
        }
    }
    jac
}
