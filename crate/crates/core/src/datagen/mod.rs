//! Synthetic radial feeder families and dataset assembly.

mod dataset;
mod split;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{Bus, Grid, GridError, Line};
use crate::powerflow::PowerFlowError;

pub use dataset::{generate_dataset, Dataset, Manifest, ManifestSample, Sample, SpecEntry};
pub use split::{make_split, SplitMode, SplitPlan};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("invalid family spec `{name}`: {detail}")]
    Spec { name: String, detail: String },
    #[error("family `{family}`: no convergent sample after {attempts} attempts")]
    Resample { family: String, attempts: usize },
    #[error("unknown family `{0}`")]
    UnknownFamily(String),
    #[error("leave-one-family-out needs at least two families, found {0}")]
    TooFewFamilies(usize),
    #[error("dataset is empty")]
    Empty,
    #[error("sample {id}: {detail}")]
    Sample { id: usize, detail: String },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Parameter ranges of one feeder family. Ranges are inclusive `[lo, hi]`;
/// impedances are per-unit per km.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub name: String,
    pub n_buses: [usize; 2],
    /// Probability that a new bus attaches to a bus that already has children.
    pub branching: f64,
    pub r_per_km: [f64; 2],
    pub x_per_km: [f64; 2],
    pub length_km: [f64; 2],
    /// Active injection of load buses; negative values consume.
    pub load_p: [f64; 2],
    pub load_q_ratio: [f64; 2],
    /// Fraction of PQ buses with net generation.
    pub pv_fraction: f64,
    #[serde(default = "unit_range")]
    pub slack_vm: [f64; 2],
    #[serde(default = "default_base_kv")]
    pub base_kv: f64,
}

fn unit_range() -> [f64; 2] {
    [1.0, 1.0]
}

fn default_base_kv() -> f64 {
    0.4
}

fn sample<R: Rng>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

impl FamilySpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let fail = |detail: &str| Err(DataError::Spec { name: self.name.clone(), detail: detail.into() });
        if self.name.is_empty() {
            return fail("empty name");
        }
        if self.n_buses[0] < 2 || self.n_buses[0] > self.n_buses[1] {
            return fail("n_buses must be an ordered range starting at 2 or more");
        }
        let ranges = [
            ("r_per_km", self.r_per_km),
            ("x_per_km", self.x_per_km),
            ("length_km", self.length_km),
            ("load_p", self.load_p),
            ("load_q_ratio", self.load_q_ratio),
            ("slack_vm", self.slack_vm),
        ];
        for (label, [lo, hi]) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return fail(&format!("{label} must be a finite ordered range"));
            }
        }
        if self.r_per_km[0] < 0.0 || self.x_per_km[0] < 0.0 || self.length_km[0] <= 0.0 {
            return fail("line parameters must be non-negative with positive length");
        }
        if self.r_per_km[1] == 0.0 && self.x_per_km[1] == 0.0 {
            return fail("lines need a nonzero impedance");
        }
        if self.slack_vm[0] <= 0.0 {
            return fail("slack_vm must be positive");
        }
        for (label, v) in [("branching", self.branching), ("pv_fraction", self.pv_fraction)] {
            if !(0.0..=1.0).contains(&v) {
                return fail(&format!("{label} must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    /// Mean R/X over the sampling box, from many independent draws.
    pub fn mean_rx(&self, draws: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let total: f64 = (0..draws)
            .map(|_| sample(&mut rng, self.r_per_km) / sample(&mut rng, self.x_per_km))
            .sum();
        total / draws as f64
    }

    fn lv(name: &str, n_max: usize, branching: f64, length: [f64; 2], load: f64, pv: f64) -> Self {
        Self {
            name: name.into(),
            n_buses: [5, n_max],
            branching,
            r_per_km: [0.8, 1.6],
            x_per_km: [0.4, 0.8],
            length_km: length,
            load_p: [-load, -load * 0.1],
            load_q_ratio: [0.1, 0.4],
            pv_fraction: pv,
            slack_vm: [1.0, 1.03],
            base_kv: 0.4,
        }
    }

    fn mv(name: &str, n_min: usize, branching: f64, length: [f64; 2], load: f64, pv: f64) -> Self {
        Self {
            name: name.into(),
            n_buses: [n_min, 80],
            branching,
            r_per_km: [0.006, 0.012],
            x_per_km: [0.008, 0.02],
            length_km: length,
            load_p: [-load, -load * 0.1],
            load_q_ratio: [0.2, 0.5],
            pv_fraction: pv,
            slack_vm: [1.0, 1.03],
            base_kv: 20.0,
        }
    }
}

/// Six low-voltage and four medium-voltage families. LV lines have
/// R/X between 1 and 4, MV lines between 0.3 and 1.5.
pub fn default_specs() -> Vec<FamilySpec> {
    vec![
        FamilySpec::lv("lv-rural1", 20, 0.2, [0.03, 0.08], 0.025, 0.1),
        FamilySpec::lv("lv-rural2", 30, 0.35, [0.02, 0.07], 0.025, 0.2),
        FamilySpec::lv("lv-rural3", 40, 0.5, [0.02, 0.06], 0.03, 0.3),
        FamilySpec::lv("lv-semiurb4", 35, 0.6, [0.01, 0.04], 0.04, 0.15),
        FamilySpec::lv("lv-semiurb5", 40, 0.45, [0.01, 0.05], 0.035, 0.25),
        FamilySpec::lv("lv-urban6", 40, 0.7, [0.01, 0.03], 0.05, 0.1),
        FamilySpec::mv("mv-comm", 15, 0.6, [0.2, 1.0], 0.08, 0.1),
        FamilySpec::mv("mv-rural", 20, 0.3, [0.5, 3.0], 0.06, 0.3),
        FamilySpec::mv("mv-semiurb", 15, 0.45, [0.3, 1.5], 0.08, 0.2),
        FamilySpec::mv("mv-urban", 25, 0.7, [0.1, 0.8], 0.1, 0.1),
    ]
}

/// Tree skeleton: `parent[i]` feeds bus `i` through a line of the given
/// per-unit impedance. Bus 0 is the slack.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Topology {
    pub parent: Vec<usize>,
    pub r: Vec<f64>,
    pub x: Vec<f64>,
}

impl Topology {
    pub fn n_buses(&self) -> usize {
        self.parent.len()
    }

    pub(crate) fn random<R: Rng>(spec: &FamilySpec, rng: &mut R) -> Self {
        let n = rng.random_range(spec.n_buses[0]..=spec.n_buses[1]);
        let mut topo = Self { parent: vec![0], r: vec![0.0], x: vec![0.0] };
        let mut children = vec![0usize];
        for _ in 1..n {
            let inner: Vec<usize> = (0..children.len()).filter(|&i| children[i] > 0).collect();
            let leaves: Vec<usize> = (0..children.len()).filter(|&i| children[i] == 0).collect();
            let pool = if !inner.is_empty() && rng.random_bool(spec.branching) { &inner } else { &leaves };
            let parent = pool[rng.random_range(0..pool.len())];
            children[parent] += 1;
            children.push(0);
            topo.attach(spec, rng, parent);
        }
        topo
    }

    fn attach<R: Rng>(&mut self, spec: &FamilySpec, rng: &mut R, parent: usize) {
        let len = sample(rng, spec.length_km);
        self.parent.push(parent);
        self.r.push(sample(rng, spec.r_per_km) * len);
        self.x.push(sample(rng, spec.x_per_km) * len);
    }

    /// Structural variation: every line impedance scaled by `U(0.9, 1.1)`,
    /// then with probability 0.3 one leaf added or removed.
    pub(crate) fn vary<R: Rng>(&self, spec: &FamilySpec, rng: &mut R) -> Self {
        let mut topo = self.clone();
        for i in 1..topo.n_buses() {
            topo.r[i] *= rng.random_range(0.9..=1.1);
            topo.x[i] *= rng.random_range(0.9..=1.1);
        }
        if rng.random_bool(0.3) {
            let n = topo.n_buses();
            let mut is_leaf = vec![true; n];
            for &p in &topo.parent[1..] {
                is_leaf[p] = false;
            }
            let leaves: Vec<usize> = (1..n).filter(|&i| is_leaf[i]).collect();
            if rng.random_bool(0.5) && n > 2 && !leaves.is_empty() {
                topo.remove_leaf(leaves[rng.random_range(0..leaves.len())]);
            } else {
                let parent = rng.random_range(0..n);
                topo.attach(spec, rng, parent);
            }
        }
        topo
    }

    fn remove_leaf(&mut self, leaf: usize) {
        self.parent.remove(leaf);
        self.r.remove(leaf);
        self.x.remove(leaf);
        for p in &mut self.parent {
            if *p > leaf {
                *p -= 1;
            }
        }
    }

    /// Grid with freshly sampled slack voltage and injections.
    pub(crate) fn realize<R: Rng>(&self, spec: &FamilySpec, rng: &mut R) -> Result<Grid<f64>, GridError> {
        let mut buses = vec![Bus::slack(0, sample(rng, spec.slack_vm), 0.0)];
        for i in 1..self.n_buses() {
            let draw = sample(rng, spec.load_p);
            let ratio = sample(rng, spec.load_q_ratio);
            let bus = if rng.random_bool(spec.pv_fraction) {
                Bus::pq(i, draw.abs(), 0.0)
            } else {
                Bus::pq(i, draw, draw * ratio)
            };
            buses.push(bus);
        }
        let lines = (1..self.n_buses())
            .map(|i| Line::new(self.parent[i], i, self.r[i], self.x[i]))
            .collect();
        Grid::new(buses, lines, spec.base_kv, spec.name.clone())
    }
}

/// One random feeder of the family: a tree grown by sequential attachment
/// with injections drawn from the spec.
pub fn generate_grid(spec: &FamilySpec, seed: u64) -> Result<Grid<f64>, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topo = Topology::random(spec, &mut rng);
    Ok(topo.realize(spec, &mut rng)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_bus_family() {
        let spec = FamilySpec { n_buses: [2, 2], ..default_specs()[0].clone() };
        let g = generate_grid(&spec, 5).unwrap();
        assert_eq!(g.n_buses(), 2);
        assert_eq!(g.n_lines(), 1);
    }

    #[test]
    fn trees_and_determinism() {
        for spec in default_specs() {
            for seed in 0..5 {
                let g = generate_grid(&spec, seed).unwrap();
                assert_eq!(g.n_lines(), g.n_buses() - 1);
                assert!(g.n_buses() >= spec.n_buses[0] && g.n_buses() <= spec.n_buses[1]);
                assert_eq!(g, generate_grid(&spec, seed).unwrap());
            }
        }
    }

    #[test]
    fn leaf_removal_renumbers() {
        let mut t = Topology { parent: vec![0, 0, 1, 1], r: vec![0.0, 1.0, 2.0, 3.0], x: vec![0.0; 4] };
        t.remove_leaf(2);
        assert_eq!(t.parent, vec![0, 0, 1]);
        assert_eq!(t.r, vec![0.0, 1.0, 3.0]);
    }

    #[test]
    fn rejects_bad_spec() {
        let spec = FamilySpec { n_buses: [1, 3], ..default_specs()[0].clone() };
        assert!(generate_grid(&spec, 0).is_err());
        let spec = FamilySpec { load_p: [0.1, -0.1], ..default_specs()[0].clone() };
        assert!(spec.validate().is_err());
    }
}
