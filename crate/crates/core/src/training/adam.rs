use crate::autodiff::Tensor;

use super::TrainingError;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// First and second moments for every parameter array. Complex weights are
/// stored as separate real and imaginary arrays, so each real channel gets
/// its own moments.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor<f64>]) -> Self {
        Self {
            m: params.iter().map(|t| vec![0.0; t.numel()]).collect(),
            v: params.iter().map(|t| vec![0.0; t.numel()]).collect(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. A `None` gradient counts as zero.
pub fn adam_step(params: &mut [Tensor<f64>], grads: &[Option<&Tensor<f64>>], state: &mut AdamState, lr: f64) -> Result<(), TrainingError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(TrainingError::Shape { expected: params.len(), got: grads.len() });
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        if m.len() != p.numel() {
            return Err(TrainingError::Shape { expected: m.len(), got: p.numel() });
        }
        let g = grads[i].map(Tensor::data);
        if let Some(g) = g {
            if g.len() != m.len() {
                return Err(TrainingError::Shape { expected: m.len(), got: g.len() });
            }
        }
        for (j, w) in p.data_mut().iter_mut().enumerate() {
            let gj = g.map_or(0.0, |g| g[j]);
            m[j] = BETA1 * m[j] + (1.0 - BETA1) * gj;
            v[j] = BETA2 * v[j] + (1.0 - BETA2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + EPS);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = vec![Tensor::vector(vec![1.5, -2.0])];
        let mut s = AdamState::new(&p);
        s.m[0] = vec![0.1, 0.1];
        let zero = Tensor::vector(vec![0.0, 0.0]);
        // moments are nonzero here, so only check the decay
        adam_step(&mut p, &[Some(&zero)], &mut s, 0.0).unwrap();
        assert!((s.m[0][0] - 0.09).abs() < 1e-15);
        let mut fresh = vec![Tensor::vector(vec![1.5, -2.0])];
        let mut s = AdamState::new(&fresh);
        adam_step(&mut fresh, &[Some(&zero)], &mut s, 0.1).unwrap();
        assert_eq!(fresh[0].data(), &[1.5, -2.0]);
    }

    #[test]
    fn first_step_is_lr() {
        let mut p = vec![Tensor::vector(vec![0.0, 0.0])];
        let mut s = AdamState::new(&p);
        let g = Tensor::vector(vec![3.0, -0.5]);
        adam_step(&mut p, &[Some(&g)], &mut s, 0.01).unwrap();
        assert!((p[0].data()[0] + 0.01).abs() < 1e-9);
        assert!((p[0].data()[1] - 0.01).abs() < 1e-9);
    }
}
