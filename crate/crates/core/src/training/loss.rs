//! Supervised and physics losses, as plain functions and as tape graphs.

use crate::autodiff::{Tape, Tensor, Var};
use crate::neural::{PhysicsTerms, Prediction};
use crate::powerflow::VoltageSolution;

use super::TrainingError;

/// Mean squared error over every bus and both channels, vm in per-unit and
/// va in radians, equally weighted.
pub fn mse_loss(pred: &Prediction, truth: &VoltageSolution<f64>) -> Result<f64, TrainingError> {
    weighted_mse(pred, truth, 1.0, 1.0)
}

/// `(vm_weight * sum dvm^2 + va_weight * sum dva^2) / (2N)`.
pub fn weighted_mse(pred: &Prediction, truth: &VoltageSolution<f64>, vm_weight: f64, va_weight: f64) -> Result<f64, TrainingError> {
    let n = truth.vm.len();
    if pred.vm.len() != n || pred.va.len() != n || truth.va.len() != n {
        return Err(TrainingError::Shape { expected: n, got: pred.vm.len() });
    }
    if n == 0 {
        return Ok(0.0);
    }
    let vm: f64 = pred.vm.iter().zip(&truth.vm).map(|(p, t)| (p - t).powi(2)).sum();
    let va: f64 = pred.va.iter().zip(&truth.va).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((vm_weight * vm + va_weight * va) / (2 * n) as f64)
}

/// Tape version of [`weighted_mse`] over a whole batch.
pub fn mse_loss_var(
    tape: &mut Tape<f64>,
    vm: Var,
    va: Var,
    truth_vm: &[f64],
    truth_va: &[f64],
    vm_weight: f64,
    va_weight: f64,
) -> Result<Var, TrainingError> {
    let n = truth_vm.len();
    let tvm = tape.constant(Tensor::matrix(n, 1, truth_vm.to_vec()));
    let tva = tape.constant(Tensor::matrix(n, 1, truth_va.to_vec()));
    let dvm = tape.sub(vm, tvm)?;
    let dva = tape.sub(va, tva)?;
    let svm = tape.square(dvm)?;
    let sva = tape.square(dva)?;
    let svm = tape.sum(svm)?;
    let sva = tape.sum(sva)?;
    let svm = tape.scale(svm, vm_weight / (2 * n) as f64)?;
    let sva = tape.scale(sva, va_weight / (2 * n) as f64)?;
    Ok(tape.add(svm, sva)?)
}

/// Sum of squared PQ-bus power mismatches implied by `(vm, va)`, divided by
/// `n_graphs`. Injections come from the admittance entries:
/// `P_i = sum_k V_i V_k (G_ik cos t_ik + B_ik sin t_ik)`,
/// `Q_i = sum_k V_i V_k (G_ik sin t_ik - B_ik cos t_ik)`.
pub fn physics_loss_var(tape: &mut Tape<f64>, vm: Var, va: Var, terms: &PhysicsTerms, n_graphs: usize) -> Result<Var, TrainingError> {
    let n = terms.p_spec.len();
    let e = terms.rows.len();
    let vi = tape.gather(vm, terms.rows.clone())?;
    let vk = tape.gather(vm, terms.cols.clone())?;
    let ti = tape.gather(va, terms.rows.clone())?;
    let tk = tape.gather(va, terms.cols.clone())?;
    let vv = tape.mul(vi, vk)?;
    let t = tape.sub(ti, tk)?;
    let (c, s) = (tape.cos(t)?, tape.sin(t)?);
    let g = tape.constant(Tensor::matrix(e, 1, terms.g.clone()));
    let b = tape.constant(Tensor::matrix(e, 1, terms.b.clone()));
    let gc = tape.mul(g, c)?;
    let bs = tape.mul(b, s)?;
    let gs = tape.mul(g, s)?;
    let bc = tape.mul(b, c)?;
    let p_terms = tape.add(gc, bs)?;
    let q_terms = tape.sub(gs, bc)?;
    let p_terms = tape.mul(vv, p_terms)?;
    let q_terms = tape.mul(vv, q_terms)?;
    let p = tape.scatter_sum(p_terms, terms.rows.clone(), n)?;
    let q = tape.scatter_sum(q_terms, terms.rows.clone(), n)?;
    let p_spec = tape.constant(Tensor::matrix(n, 1, terms.p_spec.clone()));
    let q_spec = tape.constant(Tensor::matrix(n, 1, terms.q_spec.clone()));
    let dp = tape.sub(p_spec, p)?;
    let dq = tape.sub(q_spec, q)?;
    let dp = tape.gather(dp, terms.pq_nodes.clone())?;
    let dq = tape.gather(dq, terms.pq_nodes.clone())?;
    let dp2 = tape.square(dp)?;
    let dq2 = tape.square(dq)?;
    let total = tape.add(dp2, dq2)?;
    let total = tape.sum(total)?;
    Ok(tape.scale(total, 1.0 / n_graphs.max(1) as f64)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_is_zero() {
        let t = VoltageSolution::new(vec![1.0, 0.98], vec![0.0, -0.01]);
        let p = Prediction { vm: t.vm.clone(), va: t.va.clone() };
        assert_eq!(mse_loss(&p, &t).unwrap(), 0.0);
    }

    #[test]
    fn single_bus_hand_value() {
        let t = VoltageSolution::new(vec![1.0], vec![0.0]);
        let p = Prediction { vm: vec![1.1], va: vec![0.0] };
        assert!((mse_loss(&p, &t).unwrap() - 0.005).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let t = VoltageSolution::new(vec![1.0], vec![0.0]);
        let p = Prediction { vm: vec![1.0, 1.0], va: vec![0.0, 0.0] };
        assert!(mse_loss(&p, &t).is_err());
    }
}
