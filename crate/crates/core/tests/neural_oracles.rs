mod common;

use gridflux_core::autodiff::Tensor;
use gridflux_core::neural::{ComplexForm, Model, ModelConfig, ParamStore, Variant};
use gridflux_core::powerflow::{solve_ac, SolverOptions};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn random_x(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Tensor<f64> {
    Tensor::matrix(n, d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect())
}

#[test]
fn two_node_hand_example() {
    let mut store = ParamStore::default();
    let l = common::gc_layer(&mut store, 0, 1, 1);
    store.get_mut(l.w_self.re).data_mut()[0] = 0.0;
    store.get_mut(l.w_neigh.re).data_mut()[0] = 1.0;
    store.get_mut(l.bias.re).data_mut()[0] = 0.0;
    let g = common::Graph { n: 2, src: vec![0, 1], dst: vec![1, 0], w: vec![2.0, 2.0] };
    let y = common::run_graphconv(&l, &store, &g, &Tensor::matrix(2, 1, vec![1.0, 3.0]));
    assert_eq!(y, vec![6.0, 2.0]);
}

#[test]
fn isolated_node_sees_only_itself() {
    let mut store = ParamStore::default();
    let l = common::gc_layer(&mut store, 1, 2, 3);
    let g = common::Graph { n: 1, src: vec![], dst: vec![], w: vec![] };
    let x = Tensor::matrix(1, 2, vec![0.5, -1.0]);
    let y = common::run_graphconv(&l, &store, &g, &x);
    let (w1, b) = (store.get(l.w_self.re), store.get(l.bias.re));
    for o in 0..3 {
        let expect = 0.5 * w1.at(0, o) - w1.at(1, o) + b.at(0, o);
        assert!((y[o] - expect).abs() < 1e-15);
    }
}

#[test]
fn matches_dense_adjacency_on_random_graphs() {
    let mut rng = common::rng(5);
    for trial in 0..20 {
        let n = rng.random_range(1..=16);
        let (din, dout) = (rng.random_range(1..5), rng.random_range(1..5));
        let g = common::random_graph(&mut rng, n);
        let mut store = ParamStore::default();
        let l = common::gc_layer(&mut store, trial, din, dout);
        let x = random_x(&mut rng, n, din);
        let got = common::run_graphconv(&l, &store, &g, &x);
        let want = common::dense_oracle(&l, &store, &g, &x);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12, "trial {trial}: {a} vs {b}");
        }
    }
}

#[test]
fn zero_edge_weights_reduce_to_linear_layer() {
    let mut rng = common::rng(9);
    let mut g = common::random_graph(&mut rng, 8);
    g.w.iter_mut().for_each(|w| *w = 0.0);
    let mut store = ParamStore::default();
    let l = common::gc_layer(&mut store, 3, 3, 2);
    let x = random_x(&mut rng, 8, 3);
    let empty = common::Graph { n: 8, src: vec![], dst: vec![], w: vec![] };
    assert_eq!(common::run_graphconv(&l, &store, &g, &x), common::run_graphconv(&l, &store, &empty, &x));
}

#[test]
fn block_form_matches_paired_complex_product() {
    let grids: Vec<_> = (0..3).map(|s| common::radial(&mut common::rng(s), 6 + s as usize, 0.05, false)).collect();
    let refs: Vec<_> = grids.iter().collect();
    let paired = common::jittered_model(Variant::Complex, 2);
    let mut block = paired.clone();
    block.set_complex_form(ComplexForm::Block);
    let (a, b) = (paired.predict_batch(&refs).unwrap(), block.predict_batch(&refs).unwrap());
    for (pa, pb) in a.iter().zip(&b) {
        for i in 0..pa.vm.len() {
            assert!((pa.vm[i] - pb.vm[i]).abs() < 1e-9);
            assert!((pa.va[i] - pb.va[i]).abs() < 1e-9);
        }
    }
}

fn variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
}

#[test]
fn complex_init_keeps_real_weight_variance() {
    let cfg = |v| ModelConfig { hidden_dim: 100, ..ModelConfig::new(v) };
    let real = Model::init(cfg(Variant::Base), 1).unwrap();
    let cplx = Model::init(cfg(Variant::Complex), 1).unwrap();
    let get = |m: &Model, name: &str| m.params().get(m.params().find(name).unwrap()).data().to_vec();
    let vr = variance(&get(&real, "mp.0.w_self"));
    let vc = variance(&get(&cplx, "mp.0.w_self.re")) + variance(&get(&cplx, "mp.0.w_self.im"));
    assert_eq!(get(&real, "mp.0.w_self").len(), 10_000);
    assert!((vc / vr - 1.0).abs() < 0.2, "real {vr:.3e} complex {vc:.3e}");
}

#[test]
fn every_variant_passes_finite_differences_on_three_buses() {
    let g = common::three_bus();
    let truth = solve_ac(&g, &SolverOptions::default()).unwrap().solution;
    for variant in Variant::ALL {
        let model = common::jittered_model(variant, 4);
        let err = common::model_fd_error(&model, &[&g], std::slice::from_ref(&truth), false);
        assert!(err < 1e-4, "{variant}: {err:.2e}");
    }
    let model = common::jittered_model(Variant::PhysLoss, 4);
    let err = common::model_fd_error(&model, &[&g], std::slice::from_ref(&truth), true);
    assert!(err < 1e-4, "physics path: {err:.2e}");
}

#[test]
fn fresh_residual_predicts_slack_reference() {
    for seed in 0..5 {
        let g = common::radial(&mut common::rng(seed), 12, 0.05, false);
        let model = Model::init(ModelConfig::new(Variant::Residual), seed).unwrap();
        let p = model.predict(&g).unwrap();
        let s = g.slack_bus();
        assert!(p.vm.iter().all(|&v| v == s.vm_ref));
        assert!(p.va.iter().all(|&v| v == s.va_ref));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn graphconv_is_permutation_equivariant(seed in any::<u64>(), n in 1usize..12) {
        let mut rng = common::rng(seed);
        let g = common::random_graph(&mut rng, n);
        let mut store = ParamStore::default();
        let l = common::gc_layer(&mut store, seed, 3, 2);
        let x = random_x(&mut rng, n, 3);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        // node i moves to position perm[i]
        let mut px = vec![0.0; n * 3];
        for i in 0..n {
            px[perm[i] * 3..perm[i] * 3 + 3].copy_from_slice(&x.data()[i * 3..i * 3 + 3]);
        }
        let pg = common::Graph {
            n,
            src: g.src.iter().map(|&s| perm[s]).collect(),
            dst: g.dst.iter().map(|&d| perm[d]).collect(),
            w: g.w.clone(),
        };
        let y = common::run_graphconv(&l, &store, &g, &x);
        let py = common::run_graphconv(&l, &store, &pg, &Tensor::matrix(n, 3, px));
        for i in 0..n {
            for o in 0..2 {
                prop_assert!((y[i * 2 + o] - py[perm[i] * 2 + o]).abs() < 1e-9);
            }
        }
    }
}
