mod common;

use gridflux_core::grid::{build_ybus, extract_features, Bus, Grid, GridFile, Line};
use proptest::prelude::*;

fn floyd_warshall(grid: &Grid<f64>) -> Vec<usize> {
    let n = grid.n_buses();
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for l in grid.lines() {
        d[l.from_bus][l.to_bus] = 1;
        d[l.to_bus][l.from_bus] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    (0..n).map(|i| d[grid.slack()][i]).collect()
}

#[test]
fn hop_distances_match_all_pairs_search() {
    for seed in 0..20 {
        let g = common::radial(&mut common::rng(seed), 10, 0.05, false);
        assert_eq!(g.hop_distances().unwrap(), floyd_warshall(&g), "seed {seed}");
    }
}

#[test]
fn three_bus_star_by_hand() {
    let g: Grid<f64> = Grid::new(
        vec![Bus::slack(0, 1.0, 0.0), Bus::pq(1, 0.0, 0.0), Bus::pq(2, 0.0, 0.0)],
        vec![Line::new(0, 1, 0.1, 0.1), Line::new(0, 2, 0.1, 0.1)],
        0.4,
        "star",
    )
    .unwrap();
    let y = build_ybus(&g).unwrap();
    // each line contributes 5 - j5
    let g_expect = [10.0, -5.0, -5.0, -5.0, 5.0, 0.0, -5.0, 0.0, 5.0];
    let b_expect = [-10.0, 5.0, 5.0, 5.0, -5.0, 0.0, 5.0, 0.0, -5.0];
    for k in 0..9 {
        assert!((y.g_matrix()[k] - g_expect[k]).abs() < 1e-12);
        assert!((y.b_matrix()[k] - b_expect[k]).abs() < 1e-12);
    }
}

#[test]
fn feature_shapes() {
    let g = common::radial(&mut common::rng(3), 12, 0.05, false);
    let f = extract_features(&g).unwrap();
    assert_eq!(f.node_shape(), (12, 3));
    assert_eq!(f.edge_shape(), (11, 2));
    assert_eq!(f.global_shape(), 4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ybus_symmetric_and_rows_sum_to_zero(seed in any::<u64>(), n in 1usize..25) {
        let g = common::radial(&mut common::rng(seed), n, 0.1, false);
        let y = build_ybus(&g).unwrap();
        for i in 0..n {
            let (mut gs, mut bs) = (0.0, 0.0);
            for k in 0..n {
                prop_assert_eq!(y.g(i, k).to_bits(), y.g(k, i).to_bits());
                prop_assert_eq!(y.b(i, k).to_bits(), y.b(k, i).to_bits());
                gs += y.g(i, k);
                bs += y.b(i, k);
            }
            let scale = y.g(i, i).abs().max(y.b(i, i).abs()).max(1.0);
            prop_assert!(gs.abs() < 1e-12 * scale && bs.abs() < 1e-12 * scale);
        }
    }

    #[test]
    fn hops_differ_by_at_most_one_along_lines(seed in any::<u64>(), n in 1usize..30) {
        let g = common::radial(&mut common::rng(seed), n, 0.1, false);
        let d = g.hop_distances().unwrap();
        prop_assert_eq!(d[g.slack()], 0);
        for l in g.lines() {
            prop_assert!(d[l.from_bus].abs_diff(d[l.to_bus]) <= 1);
        }
    }

    #[test]
    fn features_are_pure(seed in any::<u64>(), n in 1usize..20) {
        let g = common::radial(&mut common::rng(seed), n, 0.1, false);
        prop_assert_eq!(extract_features(&g).unwrap(), extract_features(&g.clone()).unwrap());
    }

    #[test]
    fn exchange_round_trip(seed in any::<u64>(), n in 1usize..20) {
        let g = common::radial(&mut common::rng(seed), n, 0.1, false).with_slack_impedance(0.01, 0.02);
        let text = GridFile::from_grid(&g).to_json();
        let back: Grid<f64> = GridFile::from_json(&text).unwrap().to_grid().unwrap();
        prop_assert_eq!(back, g);
    }
}
