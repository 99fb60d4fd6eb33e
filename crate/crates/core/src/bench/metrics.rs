use serde::{Deserialize, Serialize};

use crate::neural::Prediction;
use crate::powerflow::VoltageSolution;

use super::BenchError;

/// Denominator floor of [`mape`]: per-unit for magnitudes, degrees for angles.
pub const MAPE_EPS: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quantity {
    /// Magnitude, per-unit.
    Vm,
    /// Angle, reported in degrees.
    Va,
}

/// `(pred, truth)` pairs of one quantity, angles converted to degrees.
fn pairs<'a>(
    pred: &'a [Prediction],
    truth: &'a [VoltageSolution<f64>],
    q: Quantity,
) -> Result<impl Iterator<Item = (f64, f64)> + 'a, BenchError> {
    if pred.len() != truth.len() {
        return Err(BenchError::Shape { expected: truth.len(), got: pred.len() });
    }
    let mut buses = 0;
    for (p, t) in pred.iter().zip(truth) {
        if p.vm.len() != t.vm.len() || p.va.len() != t.va.len() {
            return Err(BenchError::Shape { expected: t.vm.len(), got: p.vm.len() });
        }
        buses += t.vm.len();
    }
    if buses == 0 {
        return Err(BenchError::Empty);
    }
    Ok(pred.iter().zip(truth).flat_map(move |(p, t)| {
        let (a, b) = match q {
            Quantity::Vm => (&p.vm, &t.vm),
            Quantity::Va => (&p.va, &t.va),
        };
        a.iter().zip(b).map(move |(&x, &y)| match q {
            Quantity::Vm => (x, y),
            Quantity::Va => (x.to_degrees(), y.to_degrees()),
        })
    }))
}

/// Root mean squared error pooled over every bus of every sample.
pub fn rmse(pred: &[Prediction], truth: &[VoltageSolution<f64>], q: Quantity) -> Result<f64, BenchError> {
    let (mut sum, mut n) = (0.0, 0usize);
    for (p, t) in pairs(pred, truth, q)? {
        sum += (p - t) * (p - t);
        n += 1;
    }
    Ok((sum / n as f64).sqrt())
}

/// Mean of `|pred - truth| / max(|truth|, eps) * 100` over every bus.
pub fn mape(pred: &[Prediction], truth: &[VoltageSolution<f64>], q: Quantity, eps: f64) -> Result<f64, BenchError> {
    let (mut sum, mut n) = (0.0, 0usize);
    for (p, t) in pairs(pred, truth, q)? {
        sum += (p - t).abs() / t.abs().max(eps) * 100.0;
        n += 1;
    }
    Ok(sum / n as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse_vm: f64,
    /// Degrees.
    pub rmse_va: f64,
    /// Percent.
    pub mape_vm: f64,
    /// Percent.
    pub mape_va: f64,
    pub train_seconds: f64,
}

impl MetricsReport {
    pub fn compute(pred: &[Prediction], truth: &[VoltageSolution<f64>], train_seconds: f64) -> Result<Self, BenchError> {
        Ok(Self {
            rmse_vm: rmse(pred, truth, Quantity::Vm)?,
            rmse_va: rmse(pred, truth, Quantity::Va)?,
            mape_vm: mape(pred, truth, Quantity::Vm, MAPE_EPS)?,
            mape_va: mape(pred, truth, Quantity::Va, MAPE_EPS)?,
            train_seconds,
        })
    }

    /// `[rmse_vm, rmse_va, mape_vm, mape_va]`.
    pub fn metrics(&self) -> [f64; 4] {
        [self.rmse_vm, self.rmse_va, self.mape_vm, self.mape_va]
    }
}
