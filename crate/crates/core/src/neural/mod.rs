//! Graph neural network voltage predictor: real, residual and complex variants.

mod batch;
mod checkpoint;
mod layers;
mod params;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdError, ComplexVar, Tape, Tensor, Var};
use crate::grid::{Grid, GridError};
use crate::powerflow::VoltageSolution;

pub use batch::{edge_weight, GraphBatch, PhysicsTerms, INPUT_FEATURES};
pub use layers::{batchnorm_forward, graphconv_forward, BatchNormState, BatchStats, ComplexForm, EdgeSet, GraphConvLayer, LinearLayer, Mode, WeightRef};
pub use params::{ParamId, ParamStore};

use layers::{relu, Bound, Hidden};

#[derive(Debug, thiserror::Error)]
pub enum NeuralError {
    #[error(transparent)]
    Autodiff(#[from] AdError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("non-finite activation in layer {layer}")]
    NonFinite { layer: String },
    #[error("batch norm needs at least 2 rows in training mode, got {0}")]
    BatchTooSmall(usize),
    #[error("edge endpoint {index} out of range for {nodes} nodes")]
    EdgeIndex { index: usize, nodes: usize },
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Base,
    PhysLoss,
    Complex,
    Residual,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Base, Variant::PhysLoss, Variant::Complex, Variant::Residual];

    pub fn is_complex(self) -> bool {
        self == Variant::Complex
    }

    /// Short label used in result tables.
    pub fn label(self) -> &'static str {
        match self {
            Variant::Base => "Base",
            Variant::PhysLoss => "PhysLoss",
            Variant::Complex => "Complex",
            Variant::Residual => "Residual",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Variant::Base => "base",
            Variant::PhysLoss => "physloss",
            Variant::Complex => "complex",
            Variant::Residual => "residual",
        };
        f.write_str(s)
    }
}

impl FromStr for Variant {
    type Err = NeuralError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "base" => Ok(Variant::Base),
            "physloss" => Ok(Variant::PhysLoss),
            "complex" => Ok(Variant::Complex),
            "residual" | "residuals" => Ok(Variant::Residual),
            _ => Err(NeuralError::Config(format!("unknown variant `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub hidden_dim: usize,
    pub mp_layers: usize,
    pub pre_layers: usize,
    pub post_layers: usize,
    pub seed: u64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Base,
            hidden_dim: 32,
            mp_layers: 7,
            pre_layers: 2,
            post_layers: 2,
            seed: 0,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    pub fn new(variant: Variant) -> Self {
        Self { variant, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.hidden_dim == 0 {
            return Err(NeuralError::Config("hidden_dim must be at least 1".into()));
        }
        if self.mp_layers == 0 {
            return Err(NeuralError::Config("mp_layers must be at least 1".into()));
        }
        if !(self.bn_eps > 0.0) {
            return Err(NeuralError::Config("batch norm epsilon must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(NeuralError::Config("batch norm momentum must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Width of the first layer's input: raw features for real variants,
    /// complex channels for the complex one.
    fn input_width(&self) -> usize {
        if self.variant.is_complex() {
            COMPLEX_INPUTS
        } else {
            INPUT_FEATURES
        }
    }
}

/// Complex input channels: `p + iq`, `hop + 0i`, `vm_ref + i va_ref`,
/// `r_slack + i x_slack`.
const COMPLEX_INPUTS: usize = 4;

/// Per-column standardization of the raw node inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: [f64; INPUT_FEATURES],
    pub std: [f64; INPUT_FEATURES],
}

impl Default for Normalizer {
    fn default() -> Self {
        Self { mean: [0.0; INPUT_FEATURES], std: [1.0; INPUT_FEATURES] }
    }
}

impl Normalizer {
    /// Statistics over every node of `grids`. Constant columns keep unit
    /// scale so they are only centered.
    pub fn fit(grids: &[&Grid<f64>]) -> Result<Self, NeuralError> {
        let batch = GraphBatch::from_grids(grids)?;
        let n = batch.raw_features.len();
        if n == 0 {
            return Ok(Self::default());
        }
        let mut mean = [0.0; INPUT_FEATURES];
        for row in &batch.raw_features {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut std = [0.0; INPUT_FEATURES];
        for row in &batch.raw_features {
            for c in 0..INPUT_FEATURES {
                std[c] += (row[c] - mean[c]).powi(2);
            }
        }
        for s in &mut std {
            *s = (*s / n as f64).sqrt();
            if *s < 1e-8 {
                *s = 1.0;
            }
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, row: &[f64; INPUT_FEATURES]) -> [f64; INPUT_FEATURES] {
        std::array::from_fn(|c| (row[c] - self.mean[c]) / self.std[c])
    }
}

/// Affine map from raw head outputs to voltages, fit on training targets.
///
/// Real variants emit `vm = vm_mean + vm_scale * h0`, `va = va_mean +
/// va_scale * h1`; the residual variant uses zero means and adds the slack
/// reference instead. The complex variant decodes `z = 1 + vm_scale * h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputScale {
    pub vm_mean: f64,
    pub vm_scale: f64,
    pub va_mean: f64,
    pub va_scale: f64,
}

impl Default for OutputScale {
    fn default() -> Self {
        Self { vm_mean: 0.0, vm_scale: 1.0, va_mean: 0.0, va_scale: 1.0 }
    }
}

fn floor_scale(s: f64) -> f64 {
    if s.is_finite() && s > 1e-8 {
        s
    } else {
        1.0
    }
}

impl OutputScale {
    /// Target statistics for `variant` over solved grids.
    pub fn fit(variant: Variant, samples: &[(&Grid<f64>, &VoltageSolution<f64>)]) -> Self {
        let n: usize = samples.iter().map(|(_, s)| s.vm.len()).sum();
        if n == 0 {
            return Self::default();
        }
        let nf = n as f64;
        let all = || samples.iter().flat_map(|(g, s)| {
            let slack = g.slack_bus();
            s.vm.iter().zip(&s.va).map(move |(&vm, &va)| (vm, va, slack.vm_ref, slack.va_ref))
        });
        match variant {
            Variant::Base | Variant::PhysLoss => {
                let vm_mean = all().map(|t| t.0).sum::<f64>() / nf;
                let va_mean = all().map(|t| t.1).sum::<f64>() / nf;
                let vm_var = all().map(|t| (t.0 - vm_mean).powi(2)).sum::<f64>() / nf;
                let va_var = all().map(|t| (t.1 - va_mean).powi(2)).sum::<f64>() / nf;
                Self { vm_mean, vm_scale: floor_scale(vm_var.sqrt()), va_mean, va_scale: floor_scale(va_var.sqrt()) }
            }
            Variant::Residual => {
                let vm_ms = all().map(|t| (t.0 - t.2).powi(2)).sum::<f64>() / nf;
                let va_ms = all().map(|t| (t.1 - t.3).powi(2)).sum::<f64>() / nf;
                Self { vm_scale: floor_scale(vm_ms.sqrt()), va_scale: floor_scale(va_ms.sqrt()), ..Self::default() }
            }
            Variant::Complex => {
                let ms = all().map(|t| (t.0 * t.1.cos() - 1.0).powi(2) + (t.0 * t.1.sin()).powi(2)).sum::<f64>() / nf;
                Self { vm_scale: floor_scale(ms.sqrt()), ..Self::default() }
            }
        }
    }
}

/// Predicted bus voltages of one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
}

/// Values recorded by one forward pass.
pub struct ForwardOutput {
    /// `[N, 1]` magnitudes.
    pub vm: Var,
    /// `[N, 1]` angles in radians.
    pub va: Var,
    /// Parameter leaves, indexed like [`ParamStore`].
    pub params: Vec<Var>,
    /// Batch statistics of every norm layer in order; empty in eval mode.
    pub bn_stats: Vec<BatchStats>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    normalizer: Normalizer,
    output: OutputScale,
    pre: Vec<LinearLayer>,
    mp: Vec<GraphConvLayer>,
    post: Vec<LinearLayer>,
    norms: Vec<BatchNormState>,
    head: LinearLayer,
    form: ComplexForm,
}

impl Model {
    /// Fresh parameters drawn from `seed`. Real weights are
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`; the residual head starts at zero.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, NeuralError> {
        config.validate()?;
        let mut config = config;
        config.seed = seed;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::default();
        let complex = config.variant.is_complex();
        let h = config.hidden_dim;
        let (eps, momentum) = (config.bn_eps, config.bn_momentum);
        let mut norms = Vec::new();

        let mut width = config.input_width();
        let mut pre = Vec::new();
        for i in 0..config.pre_layers {
            let name = format!("pre.{i}");
            pre.push(LinearLayer::init(&mut params, &mut rng, &name, width, h, complex, false));
            norms.push(BatchNormState::init(&mut params, &format!("{name}.bn"), h, complex, eps, momentum));
            width = h;
        }
        let mut mp = Vec::new();
        for i in 0..config.mp_layers {
            let name = format!("mp.{i}");
            mp.push(GraphConvLayer::init(&mut params, &mut rng, &name, width, h, complex));
            norms.push(BatchNormState::init(&mut params, &format!("{name}.bn"), h, complex, eps, momentum));
            width = h;
        }
        let mut post = Vec::new();
        for i in 0..config.post_layers {
            let name = format!("post.{i}");
            post.push(LinearLayer::init(&mut params, &mut rng, &name, h, h, complex, false));
            norms.push(BatchNormState::init(&mut params, &format!("{name}.bn"), h, complex, eps, momentum));
        }
        let out = if complex { 1 } else { 2 };
        let zero_head = config.variant == Variant::Residual;
        let head = LinearLayer::init(&mut params, &mut rng, "head", h, out, complex, zero_head);

        Ok(Self {
            config,
            params,
            normalizer: Normalizer::default(),
            output: OutputScale::default(),
            pre,
            mp,
            post,
            norms,
            head,
            form: ComplexForm::Paired,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn set_normalizer(&mut self, normalizer: Normalizer) {
        self.normalizer = normalizer;
    }

    pub fn output_scale(&self) -> &OutputScale {
        &self.output
    }

    pub fn set_output_scale(&mut self, output: OutputScale) {
        self.output = output;
    }

    pub fn norms(&self) -> &[BatchNormState] {
        &self.norms
    }

    pub fn mp_layers(&self) -> &[GraphConvLayer] {
        &self.mp
    }

    pub fn head(&self) -> &LinearLayer {
        &self.head
    }

    pub fn complex_form(&self) -> ComplexForm {
        self.form
    }

    pub fn set_complex_form(&mut self, form: ComplexForm) {
        self.form = form;
    }

    /// Folds the batch statistics of a training pass into the running
    /// estimates.
    pub fn commit_bn_stats(&mut self, stats: &[BatchStats]) {
        for (state, s) in self.norms.iter_mut().zip(stats) {
            state.update(s);
        }
    }

    /// Records the whole network on `tape`.
    pub fn forward(&self, tape: &mut Tape<f64>, batch: &GraphBatch, mode: Mode, requires_grad: bool) -> Result<ForwardOutput, NeuralError> {
        let vars = self.params.bind(tape, requires_grad);
        let bound = Bound { vars: &vars, form: self.form };
        let n = batch.n_nodes;
        let mut x = self.input(tape, batch);
        let edge_w = tape.constant(Tensor::matrix(batch.n_edges(), 1, batch.edge_weight.clone()));
        let edges = EdgeSet {
            src: batch.edge_src.clone(),
            dst: batch.edge_dst.clone(),
            weight: edge_w,
            n_nodes: n,
        };

        let mut stats = Vec::new();
        let mut norms = self.norms.iter();
        let mut block = |tape: &mut Tape<f64>, x: Hidden, name: String, norm: &BatchNormState| -> Result<Hidden, NeuralError> {
            let (y, s) = norm.forward(tape, &bound, x, mode)?;
            stats.extend(s);
            let y = relu(tape, y)?;
            y.check_finite(tape, &name)?;
            Ok(y)
        };
        for (i, layer) in self.pre.iter().enumerate() {
            let name = format!("pre.{i}");
            let y = layer.forward(tape, &bound, x)?;
            y.check_finite(tape, &name)?;
            x = block(tape, y, name, norms.next().expect("norm per layer"))?;
        }
        for (i, layer) in self.mp.iter().enumerate() {
            let name = format!("mp.{i}");
            let y = layer.forward(tape, &bound, x, &edges)?;
            y.check_finite(tape, &name)?;
            x = block(tape, y, name, norms.next().expect("norm per layer"))?;
        }
        for (i, layer) in self.post.iter().enumerate() {
            let name = format!("post.{i}");
            let y = layer.forward(tape, &bound, x)?;
            y.check_finite(tape, &name)?;
            x = block(tape, y, name, norms.next().expect("norm per layer"))?;
        }
        let out = self.head.forward(tape, &bound, x)?;
        out.check_finite(tape, "head")?;

        let (vm, va) = match out {
            Hidden::Real(y) => {
                let o = &self.output;
                let vm = tape.slice_cols(y, 0, 1)?;
                let va = tape.slice_cols(y, 1, 2)?;
                let vm = tape.scale(vm, o.vm_scale)?;
                let va = tape.scale(va, o.va_scale)?;
                if self.config.variant == Variant::Residual {
                    let svm = tape.constant(Tensor::matrix(n, 1, batch.slack_vm.clone()));
                    let sva = tape.constant(Tensor::matrix(n, 1, batch.slack_va.clone()));
                    (tape.add(vm, svm)?, tape.add(va, sva)?)
                } else {
                    (tape.offset(vm, o.vm_mean)?, tape.offset(va, o.va_mean)?)
                }
            }
            Hidden::Complex(z) => {
                let re = tape.scale(z.re, self.output.vm_scale)?;
                let re = tape.offset(re, 1.0)?;
                let im = tape.scale(z.im, self.output.vm_scale)?;
                let abs2 = tape.complex_abs2(ComplexVar { re, im })?;
                (tape.sqrt(abs2)?, tape.atan2(im, re)?)
            }
        };
        if !tape.value(vm).is_finite() || !tape.value(va).is_finite() {
            return Err(NeuralError::NonFinite { layer: "decode".into() });
        }
        Ok(ForwardOutput { vm, va, params: vars, bn_stats: stats })
    }

    /// Standardized inputs as a real `[N, 7]` block or four complex channels.
    fn input(&self, tape: &mut Tape<f64>, batch: &GraphBatch) -> Hidden {
        let rows: Vec<[f64; INPUT_FEATURES]> = batch.raw_features.iter().map(|r| self.normalizer.apply(r)).collect();
        let n = rows.len();
        if self.config.variant.is_complex() {
            let mut re = Vec::with_capacity(n * COMPLEX_INPUTS);
            let mut im = Vec::with_capacity(n * COMPLEX_INPUTS);
            for r in &rows {
                re.extend([r[0], r[2], r[3], r[5]]);
                im.extend([r[1], 0.0, r[4], r[6]]);
            }
            Hidden::Complex(ComplexVar {
                re: tape.constant(Tensor::matrix(n, COMPLEX_INPUTS, re)),
                im: tape.constant(Tensor::matrix(n, COMPLEX_INPUTS, im)),
            })
        } else {
            let data = rows.iter().flatten().copied().collect();
            Hidden::Real(tape.constant(Tensor::matrix(n, INPUT_FEATURES, data)))
        }
    }

    /// Eval-mode prediction for several grids at once.
    pub fn predict_batch(&self, grids: &[&Grid<f64>]) -> Result<Vec<Prediction>, NeuralError> {
        if grids.is_empty() {
            return Ok(Vec::new());
        }
        let batch = GraphBatch::from_grids(grids)?;
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, &batch, Mode::Eval, false)?;
        let vm = tape.value(out.vm).data();
        let va = tape.value(out.va).data();
        Ok((0..batch.n_graphs)
            .map(|g| {
                let r = batch.graph_nodes(g);
                Prediction { vm: vm[r.clone()].to_vec(), va: va[r].to_vec() }
            })
            .collect())
    }

    pub fn predict(&self, grid: &Grid<f64>) -> Result<Prediction, NeuralError> {
        Ok(self.predict_batch(&[grid])?.remove(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Bus, Line};

    fn feeder() -> Grid<f64> {
        let buses = vec![
            Bus::slack(0, 1.02, 0.05),
            Bus::pq(1, -0.1, -0.02),
            Bus::pq(2, -0.05, -0.01),
            Bus::pq(3, 0.02, 0.0),
        ];
        let lines = vec![Line::new(0, 1, 0.02, 0.01), Line::new(1, 2, 0.03, 0.01), Line::new(1, 3, 0.01, 0.02)];
        Grid::new(buses, lines, 0.4, "t").unwrap()
    }

    fn small(variant: Variant) -> ModelConfig {
        ModelConfig { hidden_dim: 6, mp_layers: 2, pre_layers: 1, post_layers: 1, ..ModelConfig::new(variant) }
    }

    #[test]
    fn residual_starts_at_slack() {
        let model = Model::init(small(Variant::Residual), 9).unwrap();
        let p = model.predict(&feeder()).unwrap();
        assert!(p.vm.iter().all(|&v| v == 1.02));
        assert!(p.va.iter().all(|&v| v == 0.05));
    }

    #[test]
    fn complex_magnitude_non_negative() {
        let model = Model::init(small(Variant::Complex), 2).unwrap();
        let p = model.predict(&feeder()).unwrap();
        assert_eq!(p.vm.len(), 4);
        assert!(p.vm.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn same_seed_same_model() {
        let a = Model::init(small(Variant::Base), 4).unwrap();
        let b = Model::init(small(Variant::Base), 4).unwrap();
        assert_eq!(a, b);
        let c = Model::init(small(Variant::Base), 5).unwrap();
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn physloss_shares_base_architecture() {
        let a = Model::init(small(Variant::Base), 4).unwrap();
        let b = Model::init(small(Variant::PhysLoss), 4).unwrap();
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn variant_parsing() {
        for v in Variant::ALL {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("Phys-Loss".parse::<Variant>().unwrap(), Variant::PhysLoss);
        assert!("gat".parse::<Variant>().is_err());
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = ModelConfig { hidden_dim: 0, ..ModelConfig::default() };
        assert!(Model::init(cfg, 0).is_err());
        let cfg = ModelConfig { mp_layers: 0, ..ModelConfig::default() };
        assert!(Model::init(cfg, 0).is_err());
    }

    #[test]
    fn non_finite_input_names_layer() {
        let mut model = Model::init(small(Variant::Base), 1).unwrap();
        model.set_normalizer(Normalizer { mean: [0.0; 7], std: [0.0; 7] });
        match model.predict(&feeder()) {
            Err(NeuralError::NonFinite { layer }) => assert_eq!(layer, "pre.0"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
