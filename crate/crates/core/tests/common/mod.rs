#![allow(dead_code)]

use gridflux_core::autodiff::{ComplexVar, Tape, Tensor, Var};
use gridflux_core::grid::{Bus, Grid, Line};
use gridflux_core::neural::{graphconv_forward, EdgeSet, GraphBatch, GraphConvLayer, Mode, Model, ModelConfig, ParamStore, Variant};
use gridflux_core::powerflow::VoltageSolution;
use gridflux_core::training::{mse_loss_var, physics_loss_var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random radial feeder: bus `i > 0` hangs off a uniformly chosen earlier bus.
/// Injections are loads in `[-load, 0]`, q a fraction of p.
pub fn radial(rng: &mut ChaCha8Rng, n: usize, load: f64, lossless: bool) -> Grid<f64> {
    let mut buses = vec![Bus::slack(0, 1.0, 0.0)];
    let mut lines = Vec::new();
    for i in 1..n {
        let p = -rng.random_range(0.0..load);
        let q = if lossless { 0.0 } else { p * rng.random_range(0.0..0.5) };
        buses.push(Bus::pq(i, p, q));
        let parent = rng.random_range(0..i);
        let x = rng.random_range(0.01..0.05);
        let r = if lossless { 0.0 } else { rng.random_range(0.005..0.05) };
        lines.push(Line::new(parent, i, r, x));
    }
    Grid::new(buses, lines, 0.4, "random").expect("valid radial grid")
}

/// slack - 1 - 2 chain used by small gradient checks.
pub fn three_bus() -> Grid<f64> {
    Grid::new(
        vec![Bus::slack(0, 1.02, 0.01), Bus::pq(1, -0.05, -0.02), Bus::pq(2, 0.03, -0.01)],
        vec![Line::new(0, 1, 0.02, 0.04), Line::new(1, 2, 0.03, 0.02)],
        0.4,
        "three",
    )
    .unwrap()
    .with_slack_impedance(0.01, 0.03)
}

/// `|a - b| / max(|a|, |b|)` over the whole vector, 0 when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Central differences of `f` at `x` with step `h`.
pub fn central_diff(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub type Op = fn(&mut Tape<f64>, &[Var]) -> Var;

/// A primitive under test: input shapes, value sampler and the operation.
pub struct PrimitiveCase {
    pub name: &'static str,
    pub shapes: Vec<Vec<usize>>,
    pub sample: fn(&mut ChaCha8Rng) -> f64,
    pub op: Op,
}

fn any_value(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(-2.0..2.0)
}

// keeps ReLU inputs away from the kink and sqrt/div arguments away from 0
fn away_from_zero(rng: &mut ChaCha8Rng) -> f64 {
    let m = rng.random_range(0.2..2.0);
    if rng.random_bool(0.5) { m } else { -m }
}

fn positive(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(0.2..2.0)
}

/// Every tape primitive on randomized shapes with at most 16 elements per input.
pub fn primitive_cases(rng: &mut ChaCha8Rng) -> Vec<PrimitiveCase> {
    let r = rng.random_range(1..=4usize);
    let c = rng.random_range(1..=4usize);
    let k = rng.random_range(1..=4usize);
    let m = [r, c];
    let case = |name, shapes: Vec<Vec<usize>>, sample, op: Op| PrimitiveCase { name, shapes, sample, op };
    vec![
        case("add", vec![m.to_vec(), m.to_vec()], any_value, |t, v| t.add(v[0], v[1]).unwrap()),
        case("sub", vec![m.to_vec(), m.to_vec()], any_value, |t, v| t.sub(v[0], v[1]).unwrap()),
        case("mul", vec![m.to_vec(), m.to_vec()], any_value, |t, v| t.mul(v[0], v[1]).unwrap()),
        case("div", vec![m.to_vec(), m.to_vec()], away_from_zero, |t, v| t.div(v[0], v[1]).unwrap()),
        case("neg", vec![m.to_vec()], any_value, |t, v| t.neg(v[0]).unwrap()),
        case("scale", vec![m.to_vec()], any_value, |t, v| t.scale(v[0], -1.7).unwrap()),
        case("offset", vec![m.to_vec()], any_value, |t, v| t.offset(v[0], 0.3).unwrap()),
        case("relu", vec![m.to_vec()], away_from_zero, |t, v| t.relu(v[0]).unwrap()),
        case("square", vec![m.to_vec()], any_value, |t, v| t.square(v[0]).unwrap()),
        case("sqrt", vec![m.to_vec()], positive, |t, v| t.sqrt(v[0]).unwrap()),
        case("sin", vec![m.to_vec()], any_value, |t, v| t.sin(v[0]).unwrap()),
        case("cos", vec![m.to_vec()], any_value, |t, v| t.cos(v[0]).unwrap()),
        case("atan2", vec![m.to_vec(), m.to_vec()], away_from_zero, |t, v| t.atan2(v[0], v[1]).unwrap()),
        case("matmul", vec![vec![r, k], vec![k, c]], any_value, |t, v| t.matmul(v[0], v[1]).unwrap()),
        case("sum", vec![m.to_vec()], any_value, |t, v| t.sum(v[0]).unwrap()),
        case("mean", vec![m.to_vec()], any_value, |t, v| t.mean(v[0]).unwrap()),
        case("sum_rows", vec![m.to_vec()], any_value, |t, v| t.sum_rows(v[0]).unwrap()),
        case("mean_rows", vec![m.to_vec()], any_value, |t, v| t.mean_rows(v[0]).unwrap()),
        case("broadcast_row", vec![vec![1, c]], any_value, |t, v| t.broadcast(v[0], 3, t.shape(v[0])[1]).unwrap()),
        case("broadcast_col", vec![vec![r, 1]], any_value, |t, v| t.broadcast(v[0], t.shape(v[0])[0], 3).unwrap()),
        case("concat_rows", vec![m.to_vec(), vec![k, c]], any_value, |t, v| t.concat(&[v[0], v[1]], 0).unwrap()),
        case("concat_cols", vec![m.to_vec(), vec![r, k]], any_value, |t, v| t.concat(&[v[0], v[1]], 1).unwrap()),
        case("slice_rows", vec![vec![4, c]], any_value, |t, v| t.slice_rows(v[0], 1, 3).unwrap()),
        case("slice_cols", vec![vec![r, 4]], any_value, |t, v| t.slice_cols(v[0], 1, 3).unwrap()),
        case("gather", vec![vec![4, c]], any_value, |t, v| t.gather(v[0], vec![3, 0, 0, 2, 3].into()).unwrap()),
        case("scatter_sum", vec![vec![5, c]], any_value, |t, v| t.scatter_sum(v[0], vec![1, 0, 1, 3, 1].into(), 4).unwrap()),
        case("complex_matmul", vec![vec![r, k], vec![r, k], vec![k, c], vec![k, c]], any_value, |t, v| {
            let z = t
                .complex_matmul(ComplexVar { re: v[0], im: v[1] }, ComplexVar { re: v[2], im: v[3] })
                .unwrap();
            t.concat(&[z.re, z.im], 1).unwrap()
        }),
        case("complex_relu", vec![m.to_vec(), m.to_vec()], away_from_zero, |t, v| {
            let z = t.complex_relu(ComplexVar { re: v[0], im: v[1] }).unwrap();
            t.concat(&[z.re, z.im], 1).unwrap()
        }),
        case("complex_abs2", vec![m.to_vec(), m.to_vec()], any_value, |t, v| {
            t.complex_abs2(ComplexVar { re: v[0], im: v[1] }).unwrap()
        }),
    ]
}

/// Contracts the op output with fixed random weights so every output element
/// contributes to the scalar.
fn contracted(tape: &mut Tape<f64>, out: Var, seed: u64) -> Var {
    let shape = tape.shape(out).to_vec();
    let mut r = rng(seed);
    let n: usize = shape.iter().product();
    let w = Tensor::new(shape, (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
    let w = tape.constant(w);
    let p = tape.mul(out, w).unwrap();
    tape.sum(p).unwrap()
}

/// Relative error between tape gradients and central differences (step
/// 1e-5) over all inputs of one case.
pub fn primitive_fd_error(case: &PrimitiveCase, rng: &mut ChaCha8Rng) -> f64 {
    let inputs: Vec<Tensor<f64>> = case
        .shapes
        .iter()
        .map(|s| {
            let n = s.iter().product();
            Tensor::new(s.clone(), (0..n).map(|_| (case.sample)(rng)).collect()).unwrap()
        })
        .collect();
    let wseed = rng.random();
    let run = |inputs: &[Tensor<f64>], grad: bool| -> (f64, Vec<f64>) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), grad)).collect();
        let out = (case.op)(&mut tape, &vars);
        let loss = contracted(&mut tape, out, wseed);
        let value = tape.value(loss).item().unwrap();
        if !grad {
            return (value, vec![]);
        }
        let g = tape.backward(loss).unwrap();
        let flat = vars
            .iter()
            .zip(inputs)
            .flat_map(|(&v, t)| g.get(v).map_or_else(|| vec![0.0; t.numel()], |x| x.data().to_vec()))
            .collect();
        (value, flat)
    };
    let (_, analytic) = run(&inputs, true);
    let x: Vec<f64> = inputs.iter().flat_map(|t| t.data().to_vec()).collect();
    let numeric = central_diff(&x, 1e-5, |p| {
        let mut off = 0;
        let moved: Vec<Tensor<f64>> = inputs
            .iter()
            .map(|t| {
                let n = t.numel();
                let v = Tensor::new(t.shape().to_vec(), p[off..off + n].to_vec()).unwrap();
                off += n;
                v
            })
            .collect();
        run(&moved, false).0
    });
    rel_err(&analytic, &numeric)
}

/// Small network so full-parameter finite differences stay cheap.
pub fn small_config(variant: Variant) -> ModelConfig {
    ModelConfig { hidden_dim: 4, mp_layers: 2, pre_layers: 1, post_layers: 1, ..ModelConfig::new(variant) }
}

/// Finite-difference check of a train-mode forward pass followed by either
/// the supervised or the physics loss, over every parameter.
pub fn model_fd_error(model: &Model, grids: &[&Grid<f64>], truth: &[VoltageSolution<f64>], physics: bool) -> f64 {
    let batch = GraphBatch::from_grids(grids).unwrap();
    let tvm: Vec<f64> = truth.iter().flat_map(|s| s.vm.clone()).collect();
    let tva: Vec<f64> = truth.iter().flat_map(|s| s.va.clone()).collect();
    let loss_of = |m: &Model, grad: bool| -> (f64, Vec<f64>) {
        let mut tape = Tape::new();
        let out = m.forward(&mut tape, &batch, Mode::Train, grad).unwrap();
        let loss = if physics {
            physics_loss_var(&mut tape, out.vm, out.va, &batch.physics, batch.n_graphs).unwrap()
        } else {
            mse_loss_var(&mut tape, out.vm, out.va, &tvm, &tva, 1.0, 1.0).unwrap()
        };
        let value = tape.value(loss).item().unwrap();
        if !grad {
            return (value, vec![]);
        }
        let g = tape.backward(loss).unwrap();
        let flat = out
            .params
            .iter()
            .zip(m.params().tensors())
            .flat_map(|(&v, t)| g.get(v).map_or_else(|| vec![0.0; t.numel()], |x| x.data().to_vec()))
            .collect();
        (value, flat)
    };
    let (_, analytic) = loss_of(model, true);
    let x: Vec<f64> = model.params().tensors().iter().flat_map(|t| t.data().to_vec()).collect();
    let mut probe = model.clone();
    let numeric = central_diff(&x, 1e-5, |p| {
        let mut off = 0;
        for t in probe.params_mut().tensors_mut() {
            let n = t.numel();
            t.data_mut().copy_from_slice(&p[off..off + n]);
            off += n;
        }
        loss_of(&probe, false).0
    });
    rel_err(&analytic, &numeric)
}

/// Fresh small model with every parameter nudged, so zero-initialized heads
/// still pass gradient to earlier layers.
pub fn jittered_model(variant: Variant, seed: u64) -> Model {
    let mut model = Model::init(small_config(variant), seed).unwrap();
    let mut r = rng(seed ^ 0xabc);
    for t in model.params_mut().tensors_mut() {
        for v in t.data_mut() {
            *v += r.random_range(-0.1..0.1);
        }
    }
    model
}
/// Directed graph for layer oracles; edge `k` carries `w[k]` from `src[k]` to `dst[k]`.
pub struct Graph {
    pub n: usize,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub w: Vec<f64>,
}

pub fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> Graph {
    let (mut src, mut dst, mut w) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random_bool(0.3) {
                src.push(j);
                dst.push(i);
                w.push(rng.random_range(0.0..100.0));
            }
        }
    }
    Graph { n, src, dst, w }
}

pub fn gc_layer(store: &mut ParamStore, rng_seed: u64, din: usize, dout: usize) -> GraphConvLayer {
    GraphConvLayer::init(store, &mut ChaCha8Rng::seed_from_u64(rng_seed), "gc", din, dout, false)
}

pub fn run_graphconv(layer: &GraphConvLayer, store: &ParamStore, g: &Graph, x: &Tensor<f64>) -> Vec<f64> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let weight = tape.constant(Tensor::matrix(g.w.len(), 1, g.w.clone()));
    let edges = EdgeSet { src: g.src.clone().into(), dst: g.dst.clone().into(), weight, n_nodes: g.n };
    let y = graphconv_forward(&mut tape, layer, store, xv, &edges).unwrap();
    tape.value(y).data().to_vec()
}

/// `x W1 + A x W2 + b` with a dense adjacency `A[i][j] = sum of e over j -> i`.
pub fn dense_oracle(layer: &GraphConvLayer, store: &ParamStore, g: &Graph, x: &Tensor<f64>) -> Vec<f64> {
    let (n, din) = x.dims2().unwrap();
    let w1 = store.get(layer.w_self.re);
    let w2 = store.get(layer.w_neigh.re);
    let b = store.get(layer.bias.re);
    let dout = w1.dims2().unwrap().1;
    let mut a = vec![vec![0.0; n]; n];
    for ((&s, &d), &w) in g.src.iter().zip(&g.dst).zip(&g.w) {
        a[d][s] += w;
    }
    let mut out = vec![0.0; n * dout];
    for i in 0..n {
        for o in 0..dout {
            let mut v = b.at(0, o);
            for k in 0..din {
                v += x.at(i, k) * w1.at(k, o);
                let ax: f64 = (0..n).map(|j| a[i][j] * x.at(j, k)).sum();
                v += ax * w2.at(k, o);
            }
            out[i * dout + o] = v;
        }
    }
    out
}
