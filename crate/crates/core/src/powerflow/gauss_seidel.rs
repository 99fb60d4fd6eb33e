use num_complex::Complex;

use crate::grid::{build_ybus, Grid};
use crate::scalar::Scalar;

use super::{PowerFlowError, VoltageSolution};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussSeidelOptions<T> {
    /// Stop once the largest voltage update in a sweep falls below this.
    pub tol: T,
    pub max_sweeps: usize,
    /// Over-relaxation factor; 1 is plain Gauss-Seidel.
    pub acceleration: T,
}

impl<T: Scalar> Default for GaussSeidelOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-13),
            max_sweeps: 200_000,
            acceleration: T::one(),
        }
    }
}

/// Complex-voltage Gauss-Seidel sweep
/// `V_i <- (conj(S_i) / conj(V_i) - sum_{k != i} Y_ik V_k) / Y_ii`.
pub fn solve_gauss_seidel<T: Scalar>(
    grid: &Grid<T>,
    opts: &GaussSeidelOptions<T>,
) -> Result<VoltageSolution<T>, PowerFlowError> {
    let y = build_ybus(grid)?;
    let n = grid.n_buses();
    let slack = grid.slack_bus();
    let mut v: Vec<Complex<T>> = vec![Complex::from_polar(slack.vm_ref, slack.va_ref); n];
    let rows: Vec<Vec<(usize, Complex<T>)>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&k| k != i && (y.g(i, k) != T::zero() || y.b(i, k) != T::zero()))
                .map(|k| (k, Complex::new(y.g(i, k), y.b(i, k))))
                .collect()
        })
        .collect();
    let pq = grid.pq_buses();

    for sweep in 0..opts.max_sweeps {
        let mut worst = T::zero();
        for &i in &pq {
            let yii = Complex::new(y.g(i, i), y.b(i, i));
            let s = Complex::new(grid.buses()[i].p_inj, grid.buses()[i].q_inj);
            let coupled: Complex<T> = rows[i].iter().map(|&(k, yik)| yik * v[k]).fold(Complex::new(T::zero(), T::zero()), |a, b| a + b);
            let target = (s.conj() / v[i].conj() - coupled) / yii;
            let next = v[i] + (target - v[i]) * opts.acceleration;
            worst = worst.max((next - v[i]).norm());
            v[i] = next;
        }
        if !worst.is_finite() {
            return Err(PowerFlowError::Diverged {
                iterations: sweep,
                mismatch: f64::INFINITY,
            });
        }
        if worst < opts.tol {
            return Ok(VoltageSolution::new(
                v.iter().map(|c| c.norm()).collect(),
                v.iter().map(|c| c.arg()).collect(),
            ));
        }
    }
    Err(PowerFlowError::Diverged {
        iterations: opts.max_sweeps,
        mismatch: f64::NAN,
    })
}
