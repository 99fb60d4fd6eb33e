//! Metrics, experiment runs, DC comparison and result tables.

mod metrics;

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::datagen::{DataError, Dataset, SplitMode, SplitPlan};
use crate::grid::{build_ybus, GridError};
use crate::neural::{Model, ModelConfig, NeuralError, Prediction, Variant};
use crate::powerflow::{solve_dc, PowerFlowError, VoltageSolution};
use crate::training::{finetune_physics, train_supervised, TrainingConfig, TrainingError, TrainingHistory};

pub use metrics::{mape, rmse, MetricsReport, Quantity, MAPE_EPS};

/// Row label of the in-distribution experiment.
pub const KNOWN_LABEL: &str = "All (Known)";
/// Model label of the DC baseline.
pub const DC_LABEL: &str = "DC";

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("empty evaluation set")]
    Empty,
    #[error("length mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("malformed results file, line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error("training {variant} failed: {source}")]
    Training {
        variant: Variant,
        #[source]
        source: TrainingError,
    },
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub testing_grid: String,
    pub model: String,
    pub report: MetricsReport,
}

/// Result rows keyed by (testing grid, model).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentMatrix {
    pub rows: Vec<ResultRow>,
}

const CSV_HEADER: &str = "testing_grid,model,rmse_vm,rmse_va,mape_vm,mape_va,seconds";

impl ExperimentMatrix {
    pub fn get(&self, testing_grid: &str, model: &str) -> Option<&MetricsReport> {
        self.rows
            .iter()
            .find(|r| r.testing_grid == testing_grid && r.model == model)
            .map(|r| &r.report)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            let m = &r.report;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.testing_grid, r.model, m.rmse_vm, m.rmse_va, m.mape_vm, m.mape_va, m.train_seconds
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, BenchError> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(CSV_HEADER) {
            return Err(BenchError::Parse { line: 1, detail: "unexpected header".into() });
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let fail = |detail: String| BenchError::Parse { line: i + 2, detail };
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 7 {
                return Err(fail(format!("expected 7 columns, got {}", cols.len())));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| fail(format!("{s}: {e}")));
            rows.push(ResultRow {
                testing_grid: cols[0].to_string(),
                model: cols[1].to_string(),
                report: MetricsReport {
                    rmse_vm: num(cols[2])?,
                    rmse_va: num(cols[3])?,
                    mape_vm: num(cols[4])?,
                    mape_va: num(cols[5])?,
                    train_seconds: num(cols[6])?,
                },
            });
        }
        Ok(Self { rows })
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), BenchError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Fixed-width text table.
    pub fn to_table(&self) -> String {
        let w = self.rows.iter().map(|r| r.testing_grid.len()).max().unwrap_or(0).max(12);
        let mut out = format!(
            "{:<w$}  {:<9} {:>10} {:>10} {:>10} {:>10} {:>9}\n",
            "Testing grid", "Model", "RMSE VM", "RMSE VA", "MAPE VM", "MAPE VA", "Time (s)"
        );
        for r in &self.rows {
            let m = &r.report;
            let _ = writeln!(
                out,
                "{:<w$}  {:<9} {:>10.5} {:>10.4} {:>10.4} {:>10.2} {:>9.1}",
                r.testing_grid, r.model, m.rmse_vm, m.rmse_va, m.mape_vm, m.mape_va, m.train_seconds
            );
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Architecture shared by all variants; `variant` is overwritten.
    pub model: ModelConfig,
    pub training: TrainingConfig,
    /// Parameter seed, identical for every variant.
    pub seed: u64,
}

/// Row label of a split: the held-out family or [`KNOWN_LABEL`].
pub fn split_label(split: &SplitPlan) -> String {
    match &split.mode {
        SplitMode::Shuffled => KNOWN_LABEL.to_string(),
        SplitMode::LeaveOneFamilyOut(f) => f.clone(),
    }
}

pub struct TrainedModel {
    pub model: Model,
    pub history: TrainingHistory,
    /// Empty unless the variant is fine-tuned.
    pub finetune_history: TrainingHistory,
    /// Wall time of both stages.
    pub seconds: f64,
}

/// Trains `variant` on the split, with physics fine-tuning for
/// [`Variant::PhysLoss`].
pub fn train_variant(dataset: &Dataset, split: &SplitPlan, variant: Variant, config: &ExperimentConfig) -> Result<TrainedModel, BenchError> {
    let train = dataset.subset(&split.train);
    let val = dataset.subset(&split.val);
    let wrap = |source| BenchError::Training { variant, source };
    let start = Instant::now();
    let model = Model::init(ModelConfig { variant, ..config.model.clone() }, config.seed)?;
    let (mut model, history) = train_supervised(model, &train, &val, &config.training).map_err(wrap)?;
    let mut finetune_history = TrainingHistory::default();
    if variant == Variant::PhysLoss {
        (model, finetune_history) = finetune_physics(model, &train, &val, &config.training).map_err(wrap)?;
    }
    Ok(TrainedModel { model, history, finetune_history, seconds: start.elapsed().as_secs_f64() })
}

/// Predictions of `model` on the split's test partition.
pub fn predict_test(model: &Model, dataset: &Dataset, split: &SplitPlan, batch_size: usize) -> Result<Vec<Prediction>, BenchError> {
    let test = dataset.subset(&split.test);
    let mut preds = Vec::with_capacity(test.len());
    for chunk in test.chunks(batch_size.max(1)) {
        let grids: Vec<_> = chunk.iter().map(|s| &s.grid).collect();
        preds.extend(model.predict_batch(&grids)?);
    }
    Ok(preds)
}

fn test_truth(dataset: &Dataset, split: &SplitPlan) -> Vec<VoltageSolution<f64>> {
    split.test.iter().map(|&i| dataset.samples[i].solution.clone()).collect()
}

/// One row per variant on a common split. Every variant starts from the
/// same seed and sees the same indices in the same order.
pub fn run_experiment(dataset: &Dataset, split: &SplitPlan, variants: &[Variant], config: &ExperimentConfig) -> Result<Vec<ResultRow>, BenchError> {
    if split.test.is_empty() {
        return Err(BenchError::Empty);
    }
    let truth = test_truth(dataset, split);
    let label = split_label(split);
    let mut rows = Vec::with_capacity(variants.len());
    for &variant in variants {
        let trained = train_variant(dataset, split, variant, config)?;
        let preds = predict_test(&trained.model, dataset, split, config.training.batch_size)?;
        let report = MetricsReport::compute(&preds, &truth, trained.seconds)?;
        log::info!("{label} / {}: rmse_vm {:.5} rmse_va {:.4}", variant.label(), report.rmse_vm, report.rmse_va);
        rows.push(ResultRow { testing_grid: label.clone(), model: variant.label().to_string(), report });
    }
    Ok(rows)
}

/// DC power flow on the test partition, scored like a trained model.
pub fn compare_dc(dataset: &Dataset, split: &SplitPlan) -> Result<MetricsReport, BenchError> {
    let mut preds = Vec::with_capacity(split.test.len());
    for &i in &split.test {
        let grid = &dataset.samples[i].grid;
        let sol = solve_dc(grid, &build_ybus(grid)?)?;
        preds.push(Prediction { vm: sol.vm, va: sol.va });
    }
    MetricsReport::compute(&preds, &test_truth(dataset, split), 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean,
            std: var.sqrt(),
        })
    }
}

/// Statistics of one model over the out-of-distribution rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub rows: usize,
    pub rmse_vm: Stats,
    pub rmse_va: Stats,
    pub mape_vm: Stats,
    pub mape_va: Stats,
}

/// Min/max/mean/std per model over every row except [`KNOWN_LABEL`], in
/// order of first appearance.
pub fn summarize(matrix: &ExperimentMatrix) -> Vec<SummaryRow> {
    let mut models: Vec<&str> = Vec::new();
    for r in &matrix.rows {
        if r.testing_grid != KNOWN_LABEL && !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    models
        .into_iter()
        .map(|model| {
            let reports: Vec<&MetricsReport> = matrix
                .rows
                .iter()
                .filter(|r| r.model == model && r.testing_grid != KNOWN_LABEL)
                .map(|r| &r.report)
                .collect();
            let col = |k: usize| Stats::of(&reports.iter().map(|m| m.metrics()[k]).collect::<Vec<_>>()).expect("non-empty");
            SummaryRow {
                model: model.to_string(),
                rows: reports.len(),
                rmse_vm: col(0),
                rmse_va: col(1),
                mape_vm: col(2),
                mape_va: col(3),
            }
        })
        .collect()
}

pub fn summary_table(summary: &[SummaryRow]) -> String {
    let mut out = format!("{:<9} {:<6} {:>10} {:>10} {:>10} {:>10}\n", "Model", "Stat", "RMSE VM", "RMSE VA", "MAPE VM", "MAPE VA");
    for s in summary {
        let stats = [s.rmse_vm, s.rmse_va, s.mape_vm, s.mape_va];
        for (name, pick) in [("min", 0), ("max", 1), ("mean", 2), ("std", 3)] {
            let v: Vec<f64> = stats.iter().map(|st| [st.min, st.max, st.mean, st.std][pick]).collect();
            let _ = writeln!(out, "{:<9} {:<6} {:>10.5} {:>10.4} {:>10.4} {:>10.2}", s.model, name, v[0], v[1], v[2], v[3]);
        }
    }
    out
}

/// `ood / known` per metric; how much worse a model does on an unseen
/// family than on known ones.
pub fn ood_ratio(ood: &MetricsReport, known: &MetricsReport) -> [f64; 4] {
    let (a, b) = (ood.metrics(), known.metrics());
    std::array::from_fn(|k| a[k] / b[k])
}
