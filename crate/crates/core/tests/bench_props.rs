use gridflux_core::bench::{
    compare_dc, mape, rmse, run_experiment, summarize, ExperimentConfig, ExperimentMatrix, MetricsReport, Quantity, ResultRow, KNOWN_LABEL,
    MAPE_EPS,
};
use gridflux_core::datagen::{default_specs, generate_dataset, make_split, SplitMode};
use gridflux_core::neural::{ModelConfig, Prediction, Variant};
use gridflux_core::powerflow::VoltageSolution;
use gridflux_core::training::TrainingConfig;
use proptest::prelude::*;

type Case = (Vec<Prediction>, Vec<VoltageSolution<f64>>);

fn cases() -> impl Strategy<Value = Case> {
    prop::collection::vec(prop::collection::vec((0.9f64..1.1, 0.9f64..1.1, -0.2f64..0.2, -0.2f64..0.2), 1..8), 1..6).prop_map(|samples| {
        samples
            .into_iter()
            .map(|buses| {
                (
                    Prediction { vm: buses.iter().map(|b| b.0).collect(), va: buses.iter().map(|b| b.2).collect() },
                    VoltageSolution::new(buses.iter().map(|b| b.1).collect(), buses.iter().map(|b| b.3).collect()),
                )
            })
            .unzip()
    })
}

#[test]
fn dc_baseline_is_deterministic_and_scores_flat_magnitudes() {
    let mut spec = default_specs()[2].clone();
    spec.n_buses = [8, 12];
    let ds = generate_dataset(&[spec], 20, 4).unwrap();
    let plan = make_split(&ds, SplitMode::Shuffled, 1).unwrap();
    let a = compare_dc(&ds, &plan).unwrap();
    assert_eq!(a, compare_dc(&ds, &plan).unwrap());
    let (mut sq, mut n) = (0.0, 0.0);
    for &i in &plan.test {
        for &v in &ds.samples[i].solution.vm {
            sq += (v - 1.0) * (v - 1.0);
            n += 1.0;
        }
    }
    assert!((a.rmse_vm - (sq / n).sqrt()).abs() < 1e-12);
}

#[test]
fn summary_matches_loop_over_rows() {
    let mut rows = Vec::new();
    for (k, fam) in ["a", "b", "c", KNOWN_LABEL].iter().enumerate() {
        for (m, model) in ["Base", "Complex"].iter().enumerate() {
            let x = (k * 2 + m) as f64;
            rows.push(ResultRow {
                testing_grid: fam.to_string(),
                model: model.to_string(),
                report: MetricsReport { rmse_vm: 0.01 * x, rmse_va: 0.1 + x, mape_vm: x * x, mape_va: 3.0 - x, train_seconds: 1.0 },
            });
        }
    }
    let matrix = ExperimentMatrix { rows };
    let summary = summarize(&matrix);
    assert_eq!(summary.len(), 2);
    for s in &summary {
        let vals: Vec<f64> = matrix
            .rows
            .iter()
            .filter(|r| r.model == s.model && r.testing_grid != KNOWN_LABEL)
            .map(|r| r.report.mape_vm)
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
        assert_eq!(s.rows, 3);
        assert!((s.mape_vm.mean - mean).abs() < 1e-12);
        assert!((s.mape_vm.std - std).abs() < 1e-12);
        assert_eq!(s.mape_vm.max, vals.iter().copied().fold(f64::MIN, f64::max));
    }
}

#[test]
fn experiment_rows_cover_every_variant() {
    let mut spec = default_specs()[0].clone();
    spec.n_buses = [6, 6];
    let ds = generate_dataset(&[spec], 20, 0).unwrap();
    let plan = make_split(&ds, SplitMode::Shuffled, 0).unwrap();
    let cfg = ExperimentConfig {
        model: ModelConfig { hidden_dim: 4, mp_layers: 1, ..ModelConfig::default() },
        training: TrainingConfig { epochs: 2, batch_size: 8, finetune_epochs: 1, ..TrainingConfig::default() },
        seed: 0,
    };
    let rows = run_experiment(&ds, &plan, &Variant::ALL, &cfg).unwrap();
    let labels: Vec<&str> = rows.iter().map(|r| r.model.as_str()).collect();
    assert_eq!(labels, ["Base", "PhysLoss", "Complex", "Residual"]);
    assert!(rows.iter().all(|r| r.testing_grid == KNOWN_LABEL && r.report.rmse_vm.is_finite()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rmse_and_mape_match_loops((pred, truth) in cases()) {
        let (mut sv, mut sa, mut mv, mut n) = (0.0, 0.0, 0.0, 0.0);
        for (p, t) in pred.iter().zip(&truth) {
            for i in 0..p.vm.len() {
                sv += (p.vm[i] - t.vm[i]).powi(2);
                sa += (p.va[i].to_degrees() - t.va[i].to_degrees()).powi(2);
                mv += (p.vm[i] - t.vm[i]).abs() / t.vm[i].abs().max(MAPE_EPS) * 100.0;
                n += 1.0;
            }
        }
        prop_assert!((rmse(&pred, &truth, Quantity::Vm).unwrap() - (sv / n).sqrt()).abs() < 1e-12);
        prop_assert!((rmse(&pred, &truth, Quantity::Va).unwrap() - (sa / n).sqrt()).abs() < 1e-10);
        prop_assert!((mape(&pred, &truth, Quantity::Vm, MAPE_EPS).unwrap() - mv / n).abs() < 1e-10);
    }

    #[test]
    fn angle_rmse_is_radian_rmse_in_degrees((pred, truth) in cases()) {
        let (mut s, mut n) = (0.0, 0.0);
        for (p, t) in pred.iter().zip(&truth) {
            for i in 0..p.va.len() {
                s += (p.va[i] - t.va[i]).powi(2);
                n += 1.0;
            }
        }
        let deg = rmse(&pred, &truth, Quantity::Va).unwrap();
        prop_assert!((deg - (s / n).sqrt() * 180.0 / std::f64::consts::PI).abs() < 1e-10);
    }

    #[test]
    fn metrics_ignore_sample_order((pred, truth) in cases(), shift in 0usize..6) {
        let k = shift % pred.len();
        let (mut p2, mut t2) = (pred.clone(), truth.clone());
        p2.rotate_left(k);
        t2.rotate_left(k);
        let (a, b) = (MetricsReport::compute(&pred, &truth, 0.0).unwrap(), MetricsReport::compute(&p2, &t2, 0.0).unwrap());
        for (x, y) in a.metrics().iter().zip(b.metrics()) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }
}
