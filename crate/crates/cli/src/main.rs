use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use gridflux_core::bench::{
    compare_dc, predict_test, run_experiment, summarize, summary_table, train_variant, split_label, ExperimentConfig, ExperimentMatrix,
    MetricsReport, ResultRow, TrainedModel, DC_LABEL,
};
use gridflux_core::datagen::{default_specs, generate_dataset, make_split, Dataset, FamilySpec, SplitMode, SplitPlan};
use gridflux_core::neural::{Model, ModelConfig, Variant};
use gridflux_core::training::TrainingConfig;

#[derive(Parser)]
#[command(name = "gridflux", version, about = "GNN voltage prediction for distribution grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a solved synthetic dataset.
    Generate {
        /// JSON family specs; the built-in ten families when omitted.
        #[arg(long)]
        specs: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Samples per family; overrides `per_family` in the specs file.
        #[arg(long)]
        per_family: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model variant and write a checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        variant: Variant,
        /// `shuffled` or `loo:<family>`.
        #[arg(long, default_value = "shuffled")]
        split: SplitMode,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch history as CSV.
        #[arg(long)]
        history: Option<PathBuf>,
        #[command(flatten)]
        opts: TrainOpts,
    },
    /// Score a checkpoint against every sample of a dataset, or against the
    /// test partition of a split.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        split: Option<SplitMode>,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
    },
    /// Train several variants on common splits and tabulate the results.
    Compare {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "base,physloss,complex,residual")]
        variants: Vec<Variant>,
        /// Also score the DC power flow on each split.
        #[arg(long)]
        dc: bool,
        /// Add one leave-one-family-out row per family and a summary.
        #[arg(long)]
        ood: bool,
        /// Delimited results file.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        opts: TrainOpts,
    },
}

#[derive(Args, Clone)]
struct TrainOpts {
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    #[arg(long, default_value_t = 7)]
    mp_layers: usize,
    #[arg(long, default_value_t = 20)]
    finetune_epochs: usize,
    /// Seed for parameters, shuffling and splits.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl TrainOpts {
    fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            model: ModelConfig { hidden_dim: self.hidden, mp_layers: self.mp_layers, ..ModelConfig::default() },
            training: TrainingConfig {
                epochs: self.epochs,
                batch_size: self.batch_size,
                finetune_epochs: self.finetune_epochs,
                seed: self.seed,
                ..TrainingConfig::default()
            },
            seed: self.seed,
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SpecFile {
    List(Vec<FamilySpec>),
    Object { per_family: Option<usize>, families: Vec<FamilySpec> },
}

fn read_specs(path: &Path) -> Result<(Vec<FamilySpec>, Option<usize>)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let parsed: SpecFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(match parsed {
        SpecFile::List(f) => (f, None),
        SpecFile::Object { per_family, families } => (families, per_family),
    })
}

fn load_dataset(dir: &Path) -> Result<Dataset> {
    Dataset::load(dir).with_context(|| format!("loading dataset from {}", dir.display()))
}

fn print_report(label: &str, r: &MetricsReport) {
    println!(
        "{label}: rmse_vm {:.6} p.u., rmse_va {:.5} deg, mape_vm {:.4} %, mape_va {:.3} %",
        r.rmse_vm, r.rmse_va, r.mape_vm, r.mape_va
    );
}

fn generate(specs: Option<PathBuf>, seed: u64, per_family: Option<usize>, out: &Path) -> Result<()> {
    let (specs, from_file) = match specs {
        Some(p) => read_specs(&p)?,
        None => (default_specs(), None),
    };
    let per_family = per_family.or(from_file).unwrap_or(300);
    let ds = generate_dataset(&specs, per_family, seed)?;
    ds.save(out).with_context(|| format!("writing dataset to {}", out.display()))?;
    println!(
        "wrote {} samples from {} families to {} ({} non-convergent draws resampled)",
        ds.len(),
        specs.len(),
        out.display(),
        ds.resampled
    );
    Ok(())
}

fn train(data: &Path, variant: Variant, split: SplitMode, out: &Path, history: Option<PathBuf>, opts: &TrainOpts) -> Result<()> {
    let ds = load_dataset(data)?;
    let plan = make_split(&ds, split, opts.seed)?;
    let cfg = opts.experiment();
    let TrainedModel { model, history: hist, seconds, .. } = train_variant(&ds, &plan, variant, &cfg)?;
    if let Some(path) = history {
        hist.write_csv(&path)?;
    }
    model.save(out).with_context(|| format!("writing {}", out.display()))?;
    println!("trained {} in {seconds:.1} s, checkpoint {}", variant.label(), out.display());
    if !plan.test.is_empty() {
        let preds = predict_test(&model, &ds, &plan, cfg.training.batch_size)?;
        let truth: Vec<_> = plan.test.iter().map(|&i| ds.samples[i].solution.clone()).collect();
        print_report("test", &MetricsReport::compute(&preds, &truth, seconds)?);
    }
    Ok(())
}

fn evaluate(ckpt: &Path, data: &Path, split: Option<SplitMode>, split_seed: u64) -> Result<()> {
    let model = Model::load(ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
    let ds = load_dataset(data)?;
    let plan = match split {
        Some(mode) => make_split(&ds, mode, split_seed)?,
        None => SplitPlan { mode: SplitMode::Shuffled, train: vec![], val: vec![], test: (0..ds.len()).collect() },
    };
    let preds = predict_test(&model, &ds, &plan, 128)?;
    let truth: Vec<_> = plan.test.iter().map(|&i| ds.samples[i].solution.clone()).collect();
    print_report(model.variant().label(), &MetricsReport::compute(&preds, &truth, 0.0)?);
    Ok(())
}

fn compare(data: &Path, variants: &[Variant], dc: bool, ood: bool, csv: Option<PathBuf>, opts: &TrainOpts) -> Result<()> {
    if variants.is_empty() && !dc {
        bail!("nothing to compare: give --variants or --dc");
    }
    let ds = load_dataset(data)?;
    let cfg = opts.experiment();
    let mut modes = vec![SplitMode::Shuffled];
    if ood {
        modes.extend(ds.families().into_iter().map(SplitMode::LeaveOneFamilyOut));
    }
    let mut matrix = ExperimentMatrix::default();
    for mode in modes {
        let plan = make_split(&ds, mode, opts.seed)?;
        matrix.rows.extend(run_experiment(&ds, &plan, variants, &cfg)?);
        if dc {
            let report = compare_dc(&ds, &plan)?;
            matrix.rows.push(ResultRow {
                testing_grid: split_label(&plan),
                model: DC_LABEL.to_string(),
                report,
            });
        }
    }
    print!("{}", matrix.to_table());
    if ood {
        println!();
        print!("{}", summary_table(&summarize(&matrix)));
    }
    if let Some(path) = csv {
        matrix.write_csv(&path)?;
        println!("results written to {}", path.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Generate { specs, seed, per_family, out } => generate(specs, seed, per_family, &out),
        Command::Train { data, variant, split, out, history, opts } => train(&data, variant, split, &out, history, &opts),
        Command::Evaluate { ckpt, data, split, split_seed } => evaluate(&ckpt, &data, split, split_seed),
        Command::Compare { data, variants, dc, ood, csv, opts } => compare(&data, &variants, dc, ood, csv, &opts),
    }
}
