//! Supervised training, learning-rate schedule and physics fine-tuning.

mod adam;
mod loss;
mod schedule;

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdError, Tape};
use crate::datagen::Sample;
use crate::grid::{build_ybus, GridError};
use crate::neural::{GraphBatch, Mode, Model, NeuralError, Normalizer, OutputScale};
use crate::powerflow::{physics_loss, VoltageSolution};

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPS};
pub use loss::{mse_loss, mse_loss_var, physics_loss_var, weighted_mse};
pub use schedule::{lr_schedule, PlateauSchedule};

#[derive(Debug, thiserror::Error)]
pub enum TrainingError {
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("epoch {epoch}, batch {batch}: {source}")]
    Forward {
        epoch: usize,
        batch: usize,
        #[source]
        source: NeuralError,
    },
    #[error("length mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("no training samples")]
    EmptyTraining,
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Autodiff(#[from] AdError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Loss minimized during fine-tuning.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinetuneObjective {
    /// Physics loss alone.
    Physics,
    /// `mse + physics_gamma * physics`.
    Weighted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub lr_factor: f64,
    pub patience: usize,
    /// Coefficient of `sum w^2` added to the supervised loss.
    pub weight_decay: f64,
    pub vm_weight: f64,
    pub va_weight: f64,
    pub finetune_epochs: usize,
    pub finetune_lr: f64,
    pub finetune_objective: FinetuneObjective,
    pub physics_gamma: f64,
    /// Fine-tuned checkpoints whose validation MSE exceeds this multiple of
    /// the starting MSE are never selected.
    pub guard_factor: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 128,
            lr_start: 1e-3,
            lr_end: 1e-5,
            lr_factor: 0.5,
            patience: 50,
            weight_decay: 0.0,
            vm_weight: 1.0,
            va_weight: 1.0,
            finetune_epochs: 20,
            finetune_lr: 1e-5,
            finetune_objective: FinetuneObjective::Physics,
            physics_gamma: 1.0,
            guard_factor: 2.0,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        let fail = |m: &str| Err(TrainingError::Config(m.into()));
        if self.epochs == 0 {
            return fail("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if !(self.lr_end >= 0.0 && self.lr_start >= self.lr_end && self.lr_start.is_finite()) {
            return fail("learning rates must satisfy lr_start >= lr_end >= 0");
        }
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return fail("lr_factor must lie in (0, 1)");
        }
        if self.patience == 0 {
            return fail("patience must be at least 1");
        }
        if !(self.finetune_lr >= 0.0) || !(self.guard_factor >= 1.0) || !(self.weight_decay >= 0.0) {
            return fail("finetune_lr and weight_decay must be non-negative, guard_factor at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainingHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Equality of every column except wall-clock time.
    pub fn same_trajectory(&self, other: &Self) -> bool {
        self.len() == other.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.train_loss.to_bits() == b.train_loss.to_bits()
                    && a.val_loss.to_bits() == b.val_loss.to_bits()
                    && a.lr.to_bits() == b.lr.to_bits()
            })
    }

    pub fn total_seconds(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.seconds)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,lr,seconds\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.lr, r.seconds);
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), TrainingError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
enum Objective {
    Supervised,
    Physics,
    Weighted(f64),
}

/// Validation quantities of a model in eval mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    /// Bus-weighted mean squared error over the set.
    pub mse: f64,
    /// Mean physics loss per sample.
    pub physics: f64,
}

/// Eval-mode MSE and physics loss over `samples`.
pub fn evaluate(model: &Model, samples: &[&Sample], config: &TrainingConfig) -> Result<Evaluation, TrainingError> {
    if samples.is_empty() {
        return Ok(Evaluation { mse: 0.0, physics: 0.0 });
    }
    let (mut sq, mut count, mut phys) = (0.0, 0usize, 0.0);
    for chunk in samples.chunks(config.batch_size) {
        let grids: Vec<_> = chunk.iter().map(|s| &s.grid).collect();
        let preds = model.predict_batch(&grids)?;
        for (s, p) in chunk.iter().zip(&preds) {
            let n = s.grid.n_buses();
            sq += weighted_mse(p, &s.solution, config.vm_weight, config.va_weight)? * (2 * n) as f64;
            count += 2 * n;
            let y = build_ybus(&s.grid)?;
            phys += physics_loss(&s.grid, &y, &VoltageSolution::new(p.vm.clone(), p.va.clone()));
        }
    }
    Ok(Evaluation { mse: sq / count as f64, physics: phys / samples.len() as f64 })
}

/// Forward, loss, backward and Adam update on one mini-batch. Returns the
/// batch loss.
fn train_step(
    model: &mut Model,
    adam: &mut AdamState,
    chunk: &[&Sample],
    objective: Objective,
    lr: f64,
    config: &TrainingConfig,
    (epoch, batch_index): (usize, usize),
) -> Result<f64, TrainingError> {
    let at = |source| TrainingError::Forward { epoch, batch: batch_index, source };
    let grids: Vec<_> = chunk.iter().map(|s| &s.grid).collect();
    let batch = GraphBatch::from_grids(&grids)?;
    let mut tape = Tape::new();
    let out = model.forward(&mut tape, &batch, Mode::Train, true).map_err(at)?;
    let truth_vm: Vec<f64> = chunk.iter().flat_map(|s| s.solution.vm.iter().copied()).collect();
    let truth_va: Vec<f64> = chunk.iter().flat_map(|s| s.solution.va.iter().copied()).collect();
    let mse = |tape: &mut Tape<f64>| mse_loss_var(tape, out.vm, out.va, &truth_vm, &truth_va, config.vm_weight, config.va_weight);
    let phys = |tape: &mut Tape<f64>| physics_loss_var(tape, out.vm, out.va, &batch.physics, batch.n_graphs);
    let loss = match objective {
        Objective::Supervised => mse(&mut tape)?,
        Objective::Physics => phys(&mut tape)?,
        Objective::Weighted(gamma) => {
            let a = mse(&mut tape)?;
            let b = phys(&mut tape)?;
            let b = tape.scale(b, gamma)?;
            tape.add(a, b)?
        }
    };
    let value = tape.value(loss).item().expect("scalar loss");
    if !value.is_finite() {
        return Err(TrainingError::NonFiniteLoss { epoch, batch: batch_index });
    }
    let grads = tape.backward(loss)?;
    let mut owned: Vec<_> = out.params.iter().map(|&v| grads.get(v).cloned()).collect();
    if config.weight_decay > 0.0 && matches!(objective, Objective::Supervised) {
        for (g, p) in owned.iter_mut().zip(model.params().tensors()) {
            if let Some(g) = g {
                for (gj, wj) in g.data_mut().iter_mut().zip(p.data()) {
                    *gj += 2.0 * config.weight_decay * wj;
                }
            }
        }
    }
    if owned.iter().flatten().any(|g| !g.is_finite()) {
        return Err(TrainingError::NonFiniteLoss { epoch, batch: batch_index });
    }
    let refs: Vec<_> = owned.iter().map(Option::as_ref).collect();
    adam_step(model.params_mut().tensors_mut(), &refs, adam, lr)?;
    model.commit_bn_stats(&out.bn_stats);
    Ok(value)
}

/// One pass over `train` in a freshly shuffled order; returns the mean
/// batch loss weighted by batch size.
fn run_epoch(
    model: &mut Model,
    adam: &mut AdamState,
    train: &[&Sample],
    rng: &mut ChaCha8Rng,
    objective: Objective,
    lr: f64,
    config: &TrainingConfig,
    epoch: usize,
) -> Result<f64, TrainingError> {
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(rng);
    let (mut total, mut seen) = (0.0, 0usize);
    for (b, idx) in order.chunks(config.batch_size).enumerate() {
        let chunk: Vec<&Sample> = idx.iter().map(|&i| train[i]).collect();
        total += train_step(model, adam, &chunk, objective, lr, config, (epoch, b))? * chunk.len() as f64;
        seen += chunk.len();
    }
    Ok(total / seen as f64)
}

/// Mini-batch MSE training with reduce-on-plateau learning rate. Input
/// normalization and output scaling are refit on `train`. Returns the checkpoint with the
/// lowest validation MSE (training loss when `val` is empty).
pub fn train_supervised(mut model: Model, train: &[&Sample], val: &[&Sample], config: &TrainingConfig) -> Result<(Model, TrainingHistory), TrainingError> {
    config.validate()?;
    if train.is_empty() {
        return Err(TrainingError::EmptyTraining);
    }
    let grids: Vec<_> = train.iter().map(|s| &s.grid).collect();
    model.set_normalizer(Normalizer::fit(&grids)?);
    let pairs: Vec<_> = train.iter().map(|s| (&s.grid, &s.solution)).collect();
    model.set_output_scale(OutputScale::fit(model.variant(), &pairs));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(model.params().tensors());
    let mut schedule = PlateauSchedule::new(config);
    let mut history = TrainingHistory::default();
    let mut best: Option<(f64, Model)> = None;
    let start = Instant::now();

    for epoch in 0..config.epochs {
        let lr = schedule.lr();
        let train_loss = run_epoch(&mut model, &mut adam, train, &mut rng, Objective::Supervised, lr, config, epoch)?;
        let val_loss = if val.is_empty() { train_loss } else { evaluate(&model, val, config)?.mse };
        if !val_loss.is_finite() {
            return Err(TrainingError::NonFiniteLoss { epoch, batch: 0 });
        }
        schedule.observe(val_loss);
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, model.clone()));
        }
        history.records.push(EpochRecord { epoch, train_loss, val_loss, lr, seconds: start.elapsed().as_secs_f64() });
        log::debug!("epoch {epoch}: train {train_loss:.3e} val {val_loss:.3e} lr {lr:.1e}");
    }
    let (_, best) = best.expect("at least one epoch");
    Ok((best, history))
}

/// Physics-loss fine-tuning at a fixed learning rate. Among the starting
/// model and the model after each epoch, returns the one with the lowest
/// validation physics loss whose validation MSE stays within
/// `guard_factor` times the starting MSE. The returned model therefore
/// never has a higher validation physics loss than the input.
pub fn finetune_physics(model: Model, train: &[&Sample], val: &[&Sample], config: &TrainingConfig) -> Result<(Model, TrainingHistory), TrainingError> {
    config.validate()?;
    let mut history = TrainingHistory::default();
    if config.finetune_epochs == 0 {
        return Ok((model, history));
    }
    if train.is_empty() {
        return Err(TrainingError::EmptyTraining);
    }
    let guard_set = if val.is_empty() { train } else { val };
    let initial = evaluate(&model, guard_set, config)?;
    let limit = config.guard_factor * initial.mse;
    let objective = match config.finetune_objective {
        FinetuneObjective::Physics => Objective::Physics,
        FinetuneObjective::Weighted => Objective::Weighted(config.physics_gamma),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut adam = AdamState::new(model.params().tensors());
    let mut best = (initial.physics, model.clone());
    let mut model = model;
    let start = Instant::now();

    for epoch in 0..config.finetune_epochs {
        let lr = config.finetune_lr;
        let train_loss = run_epoch(&mut model, &mut adam, train, &mut rng, objective, lr, config, epoch)?;
        let eval = evaluate(&model, guard_set, config)?;
        if eval.mse <= limit && eval.physics < best.0 {
            best = (eval.physics, model.clone());
        }
        history.records.push(EpochRecord {
            epoch,
            train_loss,
            val_loss: eval.physics,
            lr,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok((best.1, history))
}
