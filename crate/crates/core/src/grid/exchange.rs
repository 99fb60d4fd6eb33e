//! Grid-exchange documents.
//!
//! ```json
//! {
//!   "buses": [{"id": 0, "kind": "slack", "p": 0.0, "q": 0.0, "vm_ref": 1.0, "va_ref": 0.0}, ...],
//!   "lines": [{"from": 0, "to": 1, "r": 0.01, "x": 0.02}, ...],
//!   "base_kv": 0.4,
//!   "family": "lv-rural1",
//!   "solution": [{"id": 0, "vm": 1.0, "va": 0.0}, ...]
//! }
//! ```
//!
//! Ids are explicit so record order is irrelevant. `solution` and
//! `slack_impedance` are optional.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

use super::{Bus, BusKind, Grid, GridError, Line};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusRecord {
    pub id: usize,
    pub kind: BusKind,
    pub p: f64,
    pub q: f64,
    #[serde(default = "one")]
    pub vm_ref: f64,
    #[serde(default)]
    pub va_ref: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineRecord {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub id: usize,
    pub vm: f64,
    pub va: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFile {
    pub buses: Vec<BusRecord>,
    pub lines: Vec<LineRecord>,
    pub base_kv: f64,
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slack_impedance: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution: Option<Vec<SolutionRecord>>,
}

impl GridFile {
    pub fn from_grid<T: Scalar>(grid: &Grid<T>) -> Self {
        let [rs, xs] = grid.slack_impedance();
        let slack_impedance = if rs == T::zero() && xs == T::zero() {
            None
        } else {
            Some([rs.as_f64(), xs.as_f64()])
        };
        Self {
            buses: grid
                .buses()
                .iter()
                .map(|b| BusRecord {
                    id: b.id,
                    kind: b.kind,
                    p: b.p_inj.as_f64(),
                    q: b.q_inj.as_f64(),
                    vm_ref: b.vm_ref.as_f64(),
                    va_ref: b.va_ref.as_f64(),
                })
                .collect(),
            lines: grid
                .lines()
                .iter()
                .map(|l| LineRecord {
                    from: l.from_bus,
                    to: l.to_bus,
                    r: l.r.as_f64(),
                    x: l.x.as_f64(),
                })
                .collect(),
            base_kv: grid.base_kv(),
            family: grid.family().to_string(),
            slack_impedance,
            solution: None,
        }
    }

    pub fn to_grid<T: Scalar>(&self) -> Result<Grid<T>, GridError> {
        let buses = self
            .buses
            .iter()
            .map(|b| Bus {
                id: b.id,
                kind: b.kind,
                p_inj: T::lit(b.p),
                q_inj: T::lit(b.q),
                vm_ref: T::lit(b.vm_ref),
                va_ref: T::lit(b.va_ref),
            })
            .collect();
        let lines = self
            .lines
            .iter()
            .map(|l| Line::new(l.from, l.to, T::lit(l.r), T::lit(l.x)))
            .collect();
        let grid = Grid::new(buses, lines, self.base_kv, self.family.clone())?;
        Ok(match self.slack_impedance {
            Some([r, x]) => grid.with_slack_impedance(T::lit(r), T::lit(x)),
            None => grid,
        })
    }

    /// Attaches a per-bus state given in dense bus order.
    pub fn with_solution(mut self, vm: &[f64], va: &[f64]) -> Self {
        self.solution = Some(
            vm.iter()
                .zip(va)
                .enumerate()
                .map(|(id, (&vm, &va))| SolutionRecord { id, vm, va })
                .collect(),
        );
        self
    }

    /// The embedded solution in dense bus order.
    pub fn solution_vectors(&self) -> Result<Option<(Vec<f64>, Vec<f64>)>, GridError> {
        let Some(records) = &self.solution else {
            return Ok(None);
        };
        let n = self.buses.len();
        let mut vm = vec![f64::NAN; n];
        let mut va = vec![f64::NAN; n];
        for rec in records {
            if rec.id >= n || !vm[rec.id].is_nan() {
                return Err(GridError::Format(format!("bad solution record for bus {}", rec.id)));
            }
            vm[rec.id] = rec.vm;
            va[rec.id] = rec.va;
        }
        if let Some(missing) = vm.iter().position(|v| v.is_nan()) {
            return Err(GridError::Format(format!("solution missing bus {missing}")));
        }
        Ok(Some((vm, va)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("grid file serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GridError> {
        serde_json::from_str(text).map_err(|e| GridError::Format(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"{
        "buses": [
            {"id": 1, "kind": "pq", "p": -0.1, "q": -0.02},
            {"id": 0, "kind": "slack", "p": 0.0, "q": 0.0, "vm_ref": 1.01, "va_ref": 0.0}
        ],
        "lines": [{"from": 1, "to": 0, "r": 0.05, "x": 0.02}],
        "base_kv": 0.4,
        "family": "lv-test",
        "solution": [{"id": 1, "vm": 0.99, "va": -0.01}, {"id": 0, "vm": 1.01, "va": 0.0}]
    }"#;

    #[test]
    fn parses_out_of_order_records() {
        let file = GridFile::from_json(DOC).unwrap();
        let grid: Grid<f64> = file.to_grid().unwrap();
        assert_eq!(grid.slack(), 0);
        assert_eq!(grid.buses()[1].p_inj, -0.1);
        assert_eq!(grid.family(), "lv-test");
        let (vm, va) = file.solution_vectors().unwrap().unwrap();
        assert_eq!(vm, vec![1.01, 0.99]);
        assert_eq!(va, vec![0.0, -0.01]);
    }

    #[test]
    fn round_trips_through_json() {
        let grid: Grid<f64> = GridFile::from_json(DOC).unwrap().to_grid().unwrap();
        let text = GridFile::from_grid(&grid).with_solution(&[1.0, 0.98], &[0.0, -0.02]).to_json();
        let back = GridFile::from_json(&text).unwrap();
        assert_eq!(back.to_grid::<f64>().unwrap(), grid);
        assert_eq!(back.solution_vectors().unwrap().unwrap().1, vec![0.0, -0.02]);
    }

    #[test]
    fn rejects_malformed() {
        assert!(matches!(GridFile::from_json("{\"buses\": 3}"), Err(GridError::Format(_))));
        let mut file = GridFile::from_json(DOC).unwrap();
        file.solution.as_mut().unwrap().pop();
        assert!(file.solution_vectors().is_err());
    }
}
