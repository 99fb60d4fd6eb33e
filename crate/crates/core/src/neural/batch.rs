//! Disjoint-union batching of grids.

use std::rc::Rc;

use crate::grid::{build_ybus, extract_features, Grid, GridError};

/// Raw per-node input width: three node features plus four broadcast globals.
pub const INPUT_FEATURES: usize = 7;

/// Coupling weight of a line: per-unit admittance magnitude, clamped to
/// `[0, 100]`.
pub fn edge_weight(r: f64, x: f64) -> f64 {
    (1.0 / (r * r + x * x).sqrt()).clamp(0.0, 100.0)
}

/// Admittance entries and scheduled injections of a batch, in batch-global
/// node numbering.
#[derive(Clone, Debug)]
pub struct PhysicsTerms {
    pub rows: Rc<[usize]>,
    pub cols: Rc<[usize]>,
    pub g: Vec<f64>,
    pub b: Vec<f64>,
    pub p_spec: Vec<f64>,
    pub q_spec: Vec<f64>,
    pub pq_nodes: Rc<[usize]>,
}

/// Several grids stacked into one graph with no edges between them.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    pub n_graphs: usize,
    pub n_nodes: usize,
    /// Node offset of each graph, plus a trailing total.
    pub offsets: Vec<usize>,
    pub raw_features: Vec<[f64; INPUT_FEATURES]>,
    /// Directed message edges; every line appears in both directions.
    pub edge_src: Rc<[usize]>,
    pub edge_dst: Rc<[usize]>,
    pub edge_weight: Vec<f64>,
    pub slack_vm: Vec<f64>,
    pub slack_va: Vec<f64>,
    pub physics: PhysicsTerms,
}

impl GraphBatch {
    pub fn from_grids(grids: &[&Grid<f64>]) -> Result<Self, GridError> {
        let mut offsets = vec![0];
        let mut raw_features = Vec::new();
        let (mut src, mut dst, mut weight) = (Vec::new(), Vec::new(), Vec::new());
        let (mut slack_vm, mut slack_va) = (Vec::new(), Vec::new());
        let (mut rows, mut cols, mut g, mut b) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let (mut p_spec, mut q_spec, mut pq_nodes) = (Vec::new(), Vec::new(), Vec::new());

        for grid in grids {
            let base = *offsets.last().expect("offsets non-empty");
            let feats = extract_features(grid)?;
            let globals = feats.global_features;
            for node in &feats.node_features {
                raw_features.push([node[0], node[1], node[2], globals[0], globals[1], globals[2], globals[3]]);
                slack_vm.push(globals[0]);
                slack_va.push(globals[1]);
            }
            for line in grid.lines() {
                let w = edge_weight(line.r, line.x);
                src.extend([base + line.from_bus, base + line.to_bus]);
                dst.extend([base + line.to_bus, base + line.from_bus]);
                weight.extend([w, w]);
            }
            for entry in build_ybus(grid)?.entries() {
                rows.push(base + entry.row);
                cols.push(base + entry.col);
                g.push(entry.g);
                b.push(entry.b);
            }
            for bus in grid.buses() {
                p_spec.push(bus.p_inj);
                q_spec.push(bus.q_inj);
            }
            pq_nodes.extend(grid.pq_buses().into_iter().map(|i| base + i));
            offsets.push(base + grid.n_buses());
        }

        let n_nodes = *offsets.last().expect("offsets non-empty");
        Ok(Self {
            n_graphs: grids.len(),
            n_nodes,
            offsets,
            raw_features,
            edge_src: src.into(),
            edge_dst: dst.into(),
            edge_weight: weight,
            slack_vm,
            slack_va,
            physics: PhysicsTerms {
                rows: rows.into(),
                cols: cols.into(),
                g,
                b,
                p_spec,
                q_spec,
                pq_nodes: pq_nodes.into(),
            },
        })
    }

    pub fn n_edges(&self) -> usize {
        self.edge_src.len()
    }

    /// Node range of graph `i`.
    pub fn graph_nodes(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }
}
