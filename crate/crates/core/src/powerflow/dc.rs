use crate::grid::{AdmittanceMatrix, Grid};
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

use super::{PowerFlowError, VoltageSolution};

/// Lossless linearized power flow: unit magnitudes and `B' theta = P` over
/// the non-slack buses with `B'` built from `1/x` per line.
///
/// The admittance matrix is only used for a dimension check; the
/// susceptances come straight from line reactances.
pub fn solve_dc<T: Scalar>(grid: &Grid<T>, y: &AdmittanceMatrix<T>) -> Result<VoltageSolution<T>, PowerFlowError> {
    let n = grid.n_buses();
    if y.n() != n {
        return Err(PowerFlowError::Shape { expected: n, got: y.n() });
    }
    let slack = grid.slack();
    let pq = grid.pq_buses();
    // position of each bus in the reduced system
    let mut pos = vec![usize::MAX; n];
    for (r, &i) in pq.iter().enumerate() {
        pos[i] = r;
    }
    let mut bp = DenseMatrix::zeros(pq.len());
    for (index, line) in grid.lines().iter().enumerate() {
        if line.x == T::zero() {
            return Err(PowerFlowError::ZeroReactance(index));
        }
        let bl = T::one() / line.x;
        let (f, t) = (pos[line.from_bus], pos[line.to_bus]);
        if f != usize::MAX {
            bp.add_to(f, f, bl);
        }
        if t != usize::MAX {
            bp.add_to(t, t, bl);
        }
        if f != usize::MAX && t != usize::MAX {
            bp.add_to(f, t, -bl);
            bp.add_to(t, f, -bl);
        }
    }
    let p: Vec<T> = pq.iter().map(|&i| grid.buses()[i].p_inj).collect();
    let theta = bp.solve(&p).ok_or(PowerFlowError::SingularSusceptance)?;

    let va_ref = grid.slack_bus().va_ref;
    let mut va = vec![va_ref; n];
    for (r, &i) in pq.iter().enumerate() {
        va[i] = va_ref + theta[r];
    }
    let mut vm = vec![T::one(); n];
    vm[slack] = T::one();
    Ok(VoltageSolution::new(vm, va))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_ybus, Bus, Line};

    #[test]
    fn single_line_angle() {
        let g: Grid<f64> = Grid::new(
            vec![Bus::slack(0, 1.0, 0.0), Bus::pq(1, -0.1, 0.0)],
            vec![Line::new(0, 1, 0.0, 0.1)],
            0.4,
            "t",
        )
        .unwrap();
        let sol = solve_dc(&g, &build_ybus(&g).unwrap()).unwrap();
        assert!((sol.va[1] + 0.01).abs() < 1e-15);
        assert_eq!(sol.vm, vec![1.0, 1.0]);
    }

    #[test]
    fn zero_injection_pins_slack_angle() {
        let g: Grid<f64> = Grid::new(
            vec![Bus::slack(0, 1.0, 0.3), Bus::pq(1, 0.0, 0.0), Bus::pq(2, 0.0, 0.0)],
            vec![Line::new(0, 1, 0.0, 0.1), Line::new(1, 2, 0.01, 0.1)],
            0.4,
            "t",
        )
        .unwrap();
        let sol = solve_dc(&g, &build_ybus(&g).unwrap()).unwrap();
        assert!(sol.va.iter().all(|a| (a - 0.3).abs() < 1e-15));
    }

    #[test]
    fn zero_reactance_rejected() {
        let g: Grid<f64> = Grid::new(
            vec![Bus::slack(0, 1.0, 0.0), Bus::pq(1, -0.1, 0.0)],
            vec![Line::new(0, 1, 0.1, 0.0)],
            0.4,
            "t",
        )
        .unwrap();
        let err = solve_dc(&g, &build_ybus(&g).unwrap()).unwrap_err();
        assert_eq!(err, PowerFlowError::ZeroReactance(0));
    }
}
