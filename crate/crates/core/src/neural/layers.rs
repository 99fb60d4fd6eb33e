//! Linear, GraphConv and batch-norm layers in real and complex form.

use std::rc::Rc;

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ComplexVar, Tape, Tensor, Var};

use super::params::{uniform, ParamId, ParamStore};
use super::NeuralError;

/// A real weight, or the real/imaginary pair of a complex weight.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WeightRef {
    pub re: ParamId,
    pub im: Option<ParamId>,
}

impl WeightRef {
    pub fn is_complex(&self) -> bool {
        self.im.is_some()
    }
}

/// How complex products are evaluated. `Paired` is the four-matmul form
/// used for training; `Block` multiplies `[x y]` by the real matrix
/// `[[W_r, W_i], [-W_i, W_r]]` and exists as an independent check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ComplexForm {
    #[default]
    Paired,
    Block,
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum Hidden {
    Real(Var),
    Complex(ComplexVar),
}

impl Hidden {
    pub(crate) fn check_finite(&self, tape: &Tape<f64>, layer: &str) -> Result<(), NeuralError> {
        let ok = match *self {
            Hidden::Real(v) => tape.value(v).is_finite(),
            Hidden::Complex(z) => tape.value(z.re).is_finite() && tape.value(z.im).is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(NeuralError::NonFinite { layer: layer.to_string() })
        }
    }

}

/// Parameters recorded on a tape, indexed like the store.
pub(crate) struct Bound<'a> {
    pub vars: &'a [Var],
    pub form: ComplexForm,
}

impl Bound<'_> {
    fn real(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    fn complex(&self, w: WeightRef) -> ComplexVar {
        ComplexVar {
            re: self.vars[w.re.0],
            im: self.vars[w.im.expect("complex weight").0],
        }
    }
}

fn init_weight(
    store: &mut ParamStore,
    rng: &mut ChaCha8Rng,
    name: &str,
    rows: usize,
    cols: usize,
    bound: f64,
    complex: bool,
) -> WeightRef {
    if complex {
        // half the variance in each part keeps E|w|^2 equal to the real case
        let b = bound / std::f64::consts::SQRT_2;
        let re = store.push(format!("{name}.re"), uniform(rng, rows, cols, b));
        let im = store.push(format!("{name}.im"), uniform(rng, rows, cols, b));
        WeightRef { re, im: Some(im) }
    } else {
        WeightRef {
            re: store.push(name.to_string(), uniform(rng, rows, cols, bound)),
            im: None,
        }
    }
}

/// `x W + b` applied to every row, optionally complex.
pub(crate) fn affine(tape: &mut Tape<f64>, bound: &Bound, x: Hidden, w: WeightRef, b: WeightRef) -> Result<Hidden, NeuralError> {
    match x {
        Hidden::Real(x) => {
            let xw = tape.matmul(x, bound.real(w.re))?;
            Ok(Hidden::Real(add_row(tape, xw, bound.real(b.re))?))
        }
        Hidden::Complex(z) => {
            let zw = complex_product(tape, bound, z, w)?;
            let bias = bound.complex(b);
            Ok(Hidden::Complex(ComplexVar {
                re: add_row(tape, zw.re, bias.re)?,
                im: add_row(tape, zw.im, bias.im)?,
            }))
        }
    }
}

fn add_row(tape: &mut Tape<f64>, x: Var, row: Var) -> Result<Var, NeuralError> {
    let (n, c) = tape.value(x).dims2().expect("matrix");
    let r = tape.broadcast(row, n, c)?;
    Ok(tape.add(x, r)?)
}

/// `z W` for a complex weight, in the configured evaluation form.
fn complex_product(tape: &mut Tape<f64>, bound: &Bound, z: ComplexVar, w: WeightRef) -> Result<ComplexVar, NeuralError> {
    let w = bound.complex(w);
    match bound.form {
        ComplexForm::Paired => Ok(tape.complex_matmul(z, w)?),
        ComplexForm::Block => {
            let out = tape.value(w.re).dims2().expect("weight matrix").1;
            let stacked = tape.concat(&[z.re, z.im], 1)?;
            let neg_im = tape.neg(w.im)?;
            let top = tape.concat(&[w.re, w.im], 1)?;
            let bottom = tape.concat(&[neg_im, w.re], 1)?;
            let block = tape.concat(&[top, bottom], 0)?;
            let prod = tape.matmul(stacked, block)?;
            Ok(ComplexVar {
                re: tape.slice_cols(prod, 0, out)?,
                im: tape.slice_cols(prod, out, 2 * out)?,
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearLayer {
    pub weight: WeightRef,
    pub bias: WeightRef,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl LinearLayer {
    pub(crate) fn init(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        complex: bool,
        zero: bool,
    ) -> Self {
        let bound = if zero { 0.0 } else { 1.0 / (in_dim as f64).sqrt() };
        Self {
            weight: init_weight(store, rng, &format!("{name}.w"), in_dim, out_dim, bound, complex),
            bias: init_weight(store, rng, &format!("{name}.b"), 1, out_dim, bound, complex),
            in_dim,
            out_dim,
        }
    }

    pub(crate) fn forward(&self, tape: &mut Tape<f64>, bound: &Bound, x: Hidden) -> Result<Hidden, NeuralError> {
        affine(tape, bound, x, self.weight, self.bias)
    }
}

/// `x_i' = W_1 x_i + W_2 sum_{j in N(i)} e_ij x_j + b`, with weights stored
/// as `[in, out]` and applied on the right of row states.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphConvLayer {
    pub w_self: WeightRef,
    pub w_neigh: WeightRef,
    pub bias: WeightRef,
    pub complex: bool,
}

/// Directed message edges of a batch, recorded once per forward pass.
pub struct EdgeSet {
    pub src: Rc<[usize]>,
    pub dst: Rc<[usize]>,
    /// `[E, 1]` constant.
    pub weight: Var,
    pub n_nodes: usize,
}

impl GraphConvLayer {
    pub fn init(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, in_dim: usize, out_dim: usize, complex: bool) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        Self {
            w_self: init_weight(store, rng, &format!("{name}.w_self"), in_dim, out_dim, bound, complex),
            w_neigh: init_weight(store, rng, &format!("{name}.w_neigh"), in_dim, out_dim, bound, complex),
            bias: init_weight(store, rng, &format!("{name}.b"), 1, out_dim, bound, complex),
            complex,
        }
    }

    /// Weighted neighbor sum `sum_j e_ij x_j` for a real channel block.
    pub fn aggregate(tape: &mut Tape<f64>, x: Var, edges: &EdgeSet) -> Result<Var, NeuralError> {
        let width = tape.value(x).dims2().expect("node states").1;
        let e = tape.broadcast(edges.weight, edges.src.len(), width)?;
        let msgs = tape.gather(x, edges.src.clone())?;
        let weighted = tape.mul(msgs, e)?;
        Ok(tape.scatter_sum(weighted, edges.dst.clone(), edges.n_nodes)?)
    }

    pub(crate) fn forward(&self, tape: &mut Tape<f64>, bound: &Bound, x: Hidden, edges: &EdgeSet) -> Result<Hidden, NeuralError> {
        for &i in edges.src.iter().chain(edges.dst.iter()) {
            if i >= edges.n_nodes {
                return Err(NeuralError::EdgeIndex { index: i, nodes: edges.n_nodes });
            }
        }
        let agg = match x {
            Hidden::Real(v) => Hidden::Real(Self::aggregate(tape, v, edges)?),
            Hidden::Complex(z) => Hidden::Complex(ComplexVar {
                re: Self::aggregate(tape, z.re, edges)?,
                im: Self::aggregate(tape, z.im, edges)?,
            }),
        };
        let own = affine(tape, bound, x, self.w_self, self.bias)?;
        let neigh = match agg {
            Hidden::Real(a) => Hidden::Real(tape.matmul(a, bound.real(self.w_neigh.re))?),
            Hidden::Complex(a) => Hidden::Complex(complex_product(tape, bound, a, self.w_neigh)?),
        };
        Ok(match (own, neigh) {
            (Hidden::Real(a), Hidden::Real(b)) => Hidden::Real(tape.add(a, b)?),
            (Hidden::Complex(a), Hidden::Complex(b)) => Hidden::Complex(tape.complex_add(a, b)?),
            _ => unreachable!("layer kinds agree"),
        })
    }
}

/// Running statistics and affine parameters of one batch-norm layer.
/// Complex layers normalize real and imaginary channels independently, so
/// they carry `2 * width` channels: real parts first.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub eps: f64,
    pub momentum: f64,
    pub complex: bool,
}

/// Batch mean and biased variance per channel, from a training pass.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

impl BatchNormState {
    pub fn init(store: &mut ParamStore, name: &str, width: usize, complex: bool, eps: f64, momentum: f64) -> Self {
        let channels = if complex { 2 * width } else { width };
        Self {
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            gamma: store.push(format!("{name}.gamma"), Tensor::filled(vec![1, channels], 1.0)),
            beta: store.push(format!("{name}.beta"), Tensor::zeros(vec![1, channels])),
            eps,
            momentum,
            complex,
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }

    /// Folds batch statistics into the running estimates; the running
    /// variance uses the unbiased batch variance.
    pub fn update(&mut self, stats: &BatchStats) {
        let n = stats.count as f64;
        let correction = if stats.count > 1 { n / (n - 1.0) } else { 1.0 };
        let m = self.momentum;
        for c in 0..self.channels() {
            self.running_mean[c] = (1.0 - m) * self.running_mean[c] + m * stats.mean[c];
            self.running_var[c] = (1.0 - m) * self.running_var[c] + m * stats.var[c] * correction;
        }
    }

    pub(crate) fn forward(&self, tape: &mut Tape<f64>, bound: &Bound, x: Hidden, mode: Mode) -> Result<(Hidden, Option<BatchStats>), NeuralError> {
        match x {
            Hidden::Real(v) => {
                let (y, s) = self.forward_matrix(tape, bound, v, mode)?;
                Ok((Hidden::Real(y), s))
            }
            Hidden::Complex(z) => {
                let w = tape.value(z.re).dims2().expect("matrix").1;
                let joined = tape.concat(&[z.re, z.im], 1)?;
                let (y, s) = self.forward_matrix(tape, bound, joined, mode)?;
                let re = tape.slice_cols(y, 0, w)?;
                let im = tape.slice_cols(y, w, 2 * w)?;
                Ok((Hidden::Complex(ComplexVar { re, im }), s))
            }
        }
    }

    /// Normalizes the columns of `x`.
    pub(crate) fn forward_matrix(&self, tape: &mut Tape<f64>, bound: &Bound, x: Var, mode: Mode) -> Result<(Var, Option<BatchStats>), NeuralError> {
        let (n, c) = tape.value(x).dims2().expect("matrix");
        if c != self.channels() {
            return Err(NeuralError::Config(format!("batch norm expects {} channels, got {c}", self.channels())));
        }
        let gamma = tape.broadcast(bound.real(self.gamma), n, c)?;
        let beta = tape.broadcast(bound.real(self.beta), n, c)?;
        let (normalized, stats) = match mode {
            Mode::Train => {
                if n < 2 {
                    return Err(NeuralError::BatchTooSmall(n));
                }
                let mean = tape.mean_rows(x)?;
                let mean_b = tape.broadcast(mean, n, c)?;
                let centered = tape.sub(x, mean_b)?;
                let sq = tape.square(centered)?;
                let var = tape.mean_rows(sq)?;
                let stats = BatchStats {
                    mean: tape.value(mean).data().to_vec(),
                    var: tape.value(var).data().to_vec(),
                    count: n,
                };
                let shifted = tape.offset(var, self.eps)?;
                let std = tape.sqrt(shifted)?;
                let std_b = tape.broadcast(std, n, c)?;
                (tape.div(centered, std_b)?, Some(stats))
            }
            Mode::Eval => {
                let mean = tape.constant(Tensor::matrix(1, c, self.running_mean.clone()));
                let inv = self.running_var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
                let inv = tape.constant(Tensor::matrix(1, c, inv));
                let mean_b = tape.broadcast(mean, n, c)?;
                let inv_b = tape.broadcast(inv, n, c)?;
                let centered = tape.sub(x, mean_b)?;
                (tape.mul(centered, inv_b)?, None)
            }
        };
        let scaled = tape.mul(normalized, gamma)?;
        Ok((tape.add(scaled, beta)?, stats))
    }
}

/// Real GraphConv update with parameters read from `store`.
pub fn graphconv_forward(
    tape: &mut Tape<f64>,
    layer: &GraphConvLayer,
    store: &ParamStore,
    x: Var,
    edges: &EdgeSet,
) -> Result<Var, NeuralError> {
    if layer.complex {
        return Err(NeuralError::Config("graphconv_forward takes a real layer".into()));
    }
    let vars = store.bind(tape, false);
    let bound = Bound { vars: &vars, form: ComplexForm::Paired };
    match layer.forward(tape, &bound, Hidden::Real(x), edges)? {
        Hidden::Real(y) => Ok(y),
        Hidden::Complex(_) => unreachable!("real layer"),
    }
}

/// Column-wise batch norm of a real matrix with parameters read from `store`.
pub fn batchnorm_forward(
    tape: &mut Tape<f64>,
    state: &BatchNormState,
    store: &ParamStore,
    x: Var,
    mode: Mode,
) -> Result<(Var, Option<BatchStats>), NeuralError> {
    let vars = store.bind(tape, false);
    let bound = Bound { vars: &vars, form: ComplexForm::Paired };
    state.forward_matrix(tape, &bound, x, mode)
}

pub(crate) fn relu(tape: &mut Tape<f64>, x: Hidden) -> Result<Hidden, NeuralError> {
    Ok(match x {
        Hidden::Real(v) => Hidden::Real(tape.relu(v)?),
        Hidden::Complex(z) => Hidden::Complex(tape.complex_relu(z)?),
    })
}
