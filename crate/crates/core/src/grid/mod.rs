//! Per-unit electrical network model.
//!
//! A [`Grid`] is a validated, immutable set of buses and series-impedance
//! lines with exactly one slack bus. All electrical quantities are per-unit;
//! angles are radians. The kV base is carried as metadata only.

mod exchange;
mod features;
mod ybus;

pub use exchange::{BusRecord, GridFile, LineRecord, SolutionRecord};
pub use features::{extract_features, FeatureSet, GLOBAL_FEATURES, NODE_FEATURES, EDGE_FEATURES};
pub use ybus::{build_ybus, AdmittanceMatrix, AdmittanceEntry};

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid has no buses")]
    Empty,
    #[error("grid must contain exactly one slack bus, found {0}")]
    SlackCount(usize),
    #[error("bus ids must be dense 0..{n}: {detail}")]
    BusIds { n: usize, detail: String },
    #[error("bus {0} has a non-finite injection")]
    NonFiniteInjection(usize),
    #[error("slack bus {0} has an invalid voltage reference")]
    BadSlackReference(usize),
    #[error("line {index} ({from}-{to}) references a missing bus")]
    DanglingLine { index: usize, from: usize, to: usize },
    #[error("line {index} is a self loop on bus {bus}")]
    SelfLoop { index: usize, bus: usize },
    #[error("line {index} ({from}-{to}) has invalid impedance r={r}, x={x}")]
    BadImpedance { index: usize, from: usize, to: usize, r: f64, x: f64 },
    #[error("line {index} duplicates the bus pair {from}-{to}")]
    DuplicateLine { index: usize, from: usize, to: usize },
    #[error("grid is disconnected; buses unreachable from slack: {0:?}")]
    Disconnected(Vec<usize>),
    #[error("malformed grid file: {0}")]
    Format(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    #[serde(rename = "pq")]
    PQ,
}

/// A network node. Injections follow the generation-positive convention.
#[derive(Clone, Debug, PartialEq)]
pub struct Bus<T> {
    pub id: usize,
    pub kind: BusKind,
    pub p_inj: T,
    pub q_inj: T,
    /// Reference magnitude; meaningful on the slack bus only.
    pub vm_ref: T,
    /// Reference angle in radians; meaningful on the slack bus only.
    pub va_ref: T,
}

impl<T: Scalar> Bus<T> {
    pub fn slack(id: usize, vm_ref: T, va_ref: T) -> Self {
        Self {
            id,
            kind: BusKind::Slack,
            p_inj: T::zero(),
            q_inj: T::zero(),
            vm_ref,
            va_ref,
        }
    }

    pub fn pq(id: usize, p_inj: T, q_inj: T) -> Self {
        Self {
            id,
            kind: BusKind::PQ,
            p_inj,
            q_inj,
            vm_ref: T::one(),
            va_ref: T::zero(),
        }
    }

    pub fn is_slack(&self) -> bool {
        self.kind == BusKind::Slack
    }
}

/// Series-impedance branch between two buses.
#[derive(Clone, Debug, PartialEq)]
pub struct Line<T> {
    pub from_bus: usize,
    pub to_bus: usize,
    pub r: T,
    pub x: T,
}

impl<T: Scalar> Line<T> {
    pub fn new(from_bus: usize, to_bus: usize, r: T, x: T) -> Self {
        Self { from_bus, to_bus, r, x }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    buses: Vec<Bus<T>>,
    lines: Vec<Line<T>>,
    base_kv: f64,
    family: String,
    slack: usize,
    slack_impedance: [T; 2],
}

impl<T: Scalar> Grid<T> {
    /// Validates and builds a grid. Buses may be given in any order; they are
    /// sorted by id and the ids must then be exactly `0..N`.
    pub fn new(
        mut buses: Vec<Bus<T>>,
        lines: Vec<Line<T>>,
        base_kv: f64,
        family: impl Into<String>,
    ) -> Result<Self, GridError> {
        if buses.is_empty() {
            return Err(GridError::Empty);
        }
        buses.sort_by_key(|b| b.id);
        let n = buses.len();
        for (expect, bus) in buses.iter().enumerate() {
            if bus.id != expect {
                return Err(GridError::BusIds {
                    n,
                    detail: format!("expected id {expect}, found {}", bus.id),
                });
            }
        }
        let slacks: Vec<usize> = buses.iter().filter(|b| b.is_slack()).map(|b| b.id).collect();
        if slacks.len() != 1 {
            return Err(GridError::SlackCount(slacks.len()));
        }
        let slack = slacks[0];
        for bus in &buses {
            if !bus.p_inj.is_finite() || !bus.q_inj.is_finite() {
                return Err(GridError::NonFiniteInjection(bus.id));
            }
        }
        let sb = &buses[slack];
        if !(sb.vm_ref > T::zero()) || !sb.vm_ref.is_finite() || !sb.va_ref.is_finite() {
            return Err(GridError::BadSlackReference(slack));
        }

        let mut pairs = HashSet::new();
        for (index, line) in lines.iter().enumerate() {
            let (from, to) = (line.from_bus, line.to_bus);
            if from >= n || to >= n {
                return Err(GridError::DanglingLine { index, from, to });
            }
            if from == to {
                return Err(GridError::SelfLoop { index, bus: from });
            }
            let valid = line.r.is_finite()
                && line.x.is_finite()
                && line.r >= T::zero()
                && (line.x > T::zero() || line.r > T::zero())
                && line.x >= T::zero();
            if !valid {
                return Err(GridError::BadImpedance {
                    index,
                    from,
                    to,
                    r: line.r.as_f64(),
                    x: line.x.as_f64(),
                });
            }
            if !pairs.insert((from.min(to), from.max(to))) {
                return Err(GridError::DuplicateLine { index, from, to });
            }
        }

        let grid = Self {
            buses,
            lines,
            base_kv,
            family: family.into(),
            slack,
            slack_impedance: [T::zero(), T::zero()],
        };
        grid.hop_distances()?;
        Ok(grid)
    }

    /// Sets the slack source impedance exposed as a global feature. It is not
    /// stamped into the admittance matrix.
    pub fn with_slack_impedance(mut self, r: T, x: T) -> Self {
        self.slack_impedance = [r, x];
        self
    }

    pub fn buses(&self) -> &[Bus<T>] {
        &self.buses
    }

    pub fn lines(&self) -> &[Line<T>] {
        &self.lines
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn base_kv(&self) -> f64 {
        self.base_kv
    }

    pub fn family(&self) -> &str {
        &self.family
    }

    pub fn slack(&self) -> usize {
        self.slack
    }

    pub fn slack_bus(&self) -> &Bus<T> {
        &self.buses[self.slack]
    }

    pub fn slack_impedance(&self) -> [T; 2] {
        self.slack_impedance
    }

    /// Indices of every non-slack bus, ascending.
    pub fn pq_buses(&self) -> Vec<usize> {
        (0..self.n_buses()).filter(|&i| i != self.slack).collect()
    }

    /// Neighbor lists of the undirected line graph.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_buses()];
        for line in &self.lines {
            adj[line.from_bus].push(line.to_bus);
            adj[line.to_bus].push(line.from_bus);
        }
        adj
    }

    /// Breadth-first hop count from the slack bus.
    pub fn hop_distances(&self) -> Result<Vec<usize>, GridError> {
        hop_distances(self)
    }

    /// Returns a copy with the injections of every bus replaced.
    pub fn with_injections(&self, p: &[T], q: &[T]) -> Result<Self, GridError> {
        let mut buses = self.buses.clone();
        for (bus, (&pi, &qi)) in buses.iter_mut().zip(p.iter().zip(q)) {
            if !bus.is_slack() {
                bus.p_inj = pi;
                bus.q_inj = qi;
            }
        }
        let grid = Grid::new(buses, self.lines.clone(), self.base_kv, self.family.clone())?;
        Ok(grid.with_slack_impedance(self.slack_impedance[0], self.slack_impedance[1]))
    }

    /// Converts every value into another scalar type.
    pub fn cast<U: Scalar>(&self) -> Grid<U> {
        let c = |v: T| U::lit(v.as_f64());
        Grid {
            buses: self
                .buses
                .iter()
                .map(|b| Bus {
                    id: b.id,
                    kind: b.kind,
                    p_inj: c(b.p_inj),
                    q_inj: c(b.q_inj),
                    vm_ref: c(b.vm_ref),
                    va_ref: c(b.va_ref),
                })
                .collect(),
            lines: self
                .lines
                .iter()
                .map(|l| Line::new(l.from_bus, l.to_bus, c(l.r), c(l.x)))
                .collect(),
            base_kv: self.base_kv,
            family: self.family.clone(),
            slack: self.slack,
            slack_impedance: [c(self.slack_impedance[0]), c(self.slack_impedance[1])],
        }
    }
}

pub fn hop_distances<T: Scalar>(grid: &Grid<T>) -> Result<Vec<usize>, GridError> {
    let adj = grid.adjacency();
    let mut dist = vec![usize::MAX; grid.n_buses()];
    let mut queue = VecDeque::new();
    dist[grid.slack()] = 0;
    queue.push_back(grid.slack());
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let unreachable: Vec<usize> = (0..dist.len()).filter(|&i| dist[i] == usize::MAX).collect();
    if unreachable.is_empty() {
        Ok(dist)
    } else {
        Err(GridError::Disconnected(unreachable))
    }
}
