mod common;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use radnet_core::corruption::{self, CorruptionKind, CorruptionSpec};
use radnet_core::graph::{self, NodeSet, UndirectedGraph};
use radnet_core::model::{self, GenerativeModel};
use radnet_core::panel::default_labels;
use radnet_core::spectral::{self, FrequencyGrid, WelchParams};

fn two_node(a: [f64; 2], b12: f64, b21: f64, var: [f64; 2]) -> GenerativeModel {
    GenerativeModel::new(
        default_labels(2),
        UndirectedGraph::chain(2),
        BTreeMap::from([((0, 1), b12), ((1, 0), b21)]),
        vec![vec![a[0]], vec![a[1]]],
        var.to_vec(),
    )
    .unwrap()
}

/// Stationary covariance of `x[t] = A x[t-1] + w` from the discrete
/// Lyapunov equation, solved through its Kronecker form.
fn lyapunov(a: &DMatrix<f64>, sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let kron = a.kronecker(a);
    let lhs = DMatrix::identity(n * n, n * n) - kron;
    let rhs = nalgebra::DVector::from_column_slice(sigma.as_slice());
    let vec = lhs.lu().solve(&rhs).unwrap();
    DMatrix::from_column_slice(n, n, vec.as_slice())
}

#[test]
fn two_node_variance_matches_lyapunov_solution() {
    let m = two_node([0.2, -0.1], 0.5, 0.36, [1.0, 2.0]);
    let a = DMatrix::from_row_slice(2, 2, &[0.2, 0.5, 0.36, -0.1]);
    let sigma = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0]));
    let p = lyapunov(&a, &sigma);

    for v in 0..2 {
        let r = corruption::autocovariance(&m, v, 1, 4096).unwrap();
        assert!((r[0] - p[(v, v)]).abs() < 1e-9 * p[(v, v)], "{} vs {}", r[0], p[(v, v)]);
        // lag one: (A P)_vv
        let ap = &a * &p;
        assert!((r[1] - ap[(v, v)]).abs() < 1e-9);
    }

    let panel = model::simulate(&m, 1_000_000, 9).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            let (x, y) = (panel.channel(i), panel.channel(j));
            let c = x.iter().zip(y).map(|(u, v)| u * v).sum::<f64>() / x.len() as f64;
            let scale = (p[(i, i)] * p[(j, j)]).sqrt();
            assert!((c - p[(i, j)]).abs() < 0.02 * scale, "({i},{j}): {c} vs {}", p[(i, j)]);
        }
    }
}

#[test]
fn marginal_inverse_is_schur_complement() {
    let m = GenerativeModel::new(
        default_labels(3),
        UndirectedGraph::chain(3),
        BTreeMap::from([((0, 1), 0.4), ((1, 0), -0.3), ((1, 2), 0.5), ((2, 1), 0.2)]),
        vec![vec![0.0], vec![0.3], vec![0.0]],
        vec![1.0, 0.5, 2.0],
    )
    .unwrap();
    let grid = FrequencyGrid::dft(64).unwrap();
    let psd = model::analytic_psd(&m, &grid).unwrap();
    let k = model::analytic_inverse_psd(&m, &grid).unwrap();
    let marginal = spectral::marginal_inverse_psd(&psd, &[0, 2], 0.0).unwrap();
    for f in 0..grid.len() {
        let km = k.at(f);
        let s = |i: usize, j: usize| km[(i, j)] - km[(i, 1)] * km[(1, j)] / km[(1, 1)];
        for (a, i) in [0, 2].into_iter().enumerate() {
            for (b, j) in [0, 2].into_iter().enumerate() {
                assert!((marginal.entry(f, a, b) - s(i, j)).norm() < 1e-10);
            }
        }
        // hiding the middle node links its two neighbours
        assert!(marginal.entry(f, 0, 1).norm() > 1e-3);
    }
}

#[test]
fn inverse_assembly_matches_dense_inversion() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let grid = FrequencyGrid::dft(32).unwrap();
    for _ in 0..10 {
        let inst = common::assumption_instance(&mut rng, 7..=10);
        let psd = model::analytic_psd(&inst.model, &grid).unwrap();
        let dense = common::dense_inverse(&psd);
        let assembled = model::analytic_inverse_psd(&inst.model, &grid).unwrap();
        for (f, d) in dense.iter().enumerate() {
            assert!(common::relative_gap(assembled.at(f), d) < 1e-10);
        }
    }
}

#[test]
fn welch_estimate_converges_to_analytic_psd() {
    let m = two_node([0.3, 0.0], 0.5, -0.4, [1.0, 1.5]);
    let panel = model::simulate(&m, 400_000, 1).unwrap();
    let params = WelchParams {
        segment_length: 128,
        ..Default::default()
    };
    let est = spectral::estimate_cpsd(&panel, &params).unwrap();
    let exact = model::analytic_psd(&m, est.grid()).unwrap();
    let err = est.mean_relative_error(&exact);
    assert!(err < 0.05, "mean relative error {err}");
    assert!(est.hermitian_defect() < 1e-12);
}

fn sample_ar1(len: usize, seed: u64) -> (GenerativeModel, Vec<f64>) {
    let m = two_node([0.5, 0.0], 0.3, 0.3, [1.0, 1.0]);
    let panel = model::simulate(&m, len, seed).unwrap();
    (m, panel.channel(0).to_vec())
}

fn check_signature(kind: CorruptionKind, h_tol: f64, d_tol: f64) {
    let (m, x) = sample_ar1(2_000_000, 17);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let u = corruption::corrupt_channel(&x, &kind, &mut rng);
    let params = WelchParams {
        segment_length: 256,
        ..Default::default()
    };
    let (grid, est) = corruption::estimate_signature(&x, &u, &params).unwrap();
    let exact = corruption::analytic_signature(&kind, &m, 0, &grid).unwrap();
    let h_err = (0..grid.len())
        .map(|k| (est.h[k] - exact.h[k]).norm() / exact.h[k].norm().max(0.1))
        .sum::<f64>()
        / grid.len() as f64;
    let d_scale = exact.d.iter().copied().fold(0.0, f64::max).max(1e-3);
    let d_err = (0..grid.len())
        .map(|k| (est.d[k] - exact.d[k]).abs() / d_scale)
        .sum::<f64>()
        / grid.len() as f64;
    assert!(h_err < h_tol, "{kind:?}: mean h error {h_err}");
    assert!(d_err < d_tol, "{kind:?}: mean d error {d_err}");
    assert!(est.d.iter().all(|&d| d >= 0.0));
}

#[test]
fn random_delay_signature_matches_simulation() {
    check_signature(
        CorruptionKind::RandomDelay {
            t1: -2,
            t2: 0,
            p: 0.7,
        },
        0.03,
        0.05,
    );
}

#[test]
fn packet_drop_signature_matches_simulation() {
    check_signature(CorruptionKind::PacketDrop { p: 0.7 }, 0.03, 0.08);
}

#[test]
fn noisy_filter_signature_matches_simulation() {
    check_signature(
        CorruptionKind::NoisyFilter {
            filter: vec![1.0, -0.4, 0.2],
            noise_variance: 0.3,
        },
        0.03,
        0.05,
    );
}

#[test]
fn corrupted_spectrum_matches_simulated_streams() {
    let m = two_node([0.2, 0.0], 0.5, 0.4, [1.0, 1.0]);
    let spec = CorruptionSpec::new(
        1,
        CorruptionKind::RandomDelay {
            t1: -1,
            t2: 0,
            p: 0.5,
        },
    );
    let panel = model::simulate(&m, 1_000_000, 5).unwrap();
    let u = corruption::apply_corruption(&panel, &[spec.clone()], 8).unwrap();
    let params = WelchParams {
        segment_length: 128,
        ..Default::default()
    };
    let est = spectral::estimate_cpsd(&u, &params).unwrap();
    let sigs = BTreeMap::from([(
        1,
        corruption::analytic_signature(&spec.kind, &m, 1, est.grid()).unwrap(),
    )]);
    let exact = spectral::analytic_corrupted_psd(&m, &sigs, est.grid()).unwrap();
    let err = est.mean_relative_error(&exact);
    assert!(err < 0.05, "mean relative error {err}");
}

#[test]
fn perturbed_graph_matches_path_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..40 {
        let n = rng.gen_range(3..14);
        let mut tree = UndirectedGraph::new(n);
        for i in 1..n {
            tree.add_edge(rng.gen_range(0..i), i).unwrap();
        }
        let corrupt: NodeSet = (0..n).filter(|_| rng.gen_bool(0.3)).collect();
        let moral = graph::moral_graph(&tree).unwrap();
        let fast = graph::perturbed_graph(&moral, &corrupt).unwrap();
        assert_eq!(fast.edge_set(), common::brute_force_perturbed(&moral, &corrupt));
        assert_eq!(moral.edge_set(), common::two_hop_pairs(&tree));
    }
}

#[test]
fn separation_matches_path_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..60 {
        let n = rng.gen_range(4..10);
        let mut g = UndirectedGraph::new(n);
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_bool(0.3) {
                    g.add_edge(i, j).unwrap();
                }
            }
        }
        let c = rng.gen_range(0..n);
        let d = (c + 1 + rng.gen_range(0..n - 1)) % n;
        let cut: NodeSet = (0..n)
            .filter(|&v| v != c && v != d && rng.gen_bool(0.3))
            .collect();
        assert_eq!(
            graph::separates(&g, c, d, &cut).unwrap(),
            common::brute_force_separates(&g, c, d, &cut)
        );
    }
}

#[test]
fn woodbury_step_zero_rescales_by_gains() {
    let m = common::assumption_instance(&mut ChaCha8Rng::seed_from_u64(2), 7..=9);
    let grid = FrequencyGrid::dft(16).unwrap();
    let sigs = radnet_core::experiment::analytic_signatures(&m.model, &m.corruption, &grid).unwrap();
    let clean = model::analytic_inverse_psd(&m.model, &grid).unwrap();
    let order: Vec<usize> = sigs.keys().copied().collect();
    let chain = spectral::woodbury_chain(&clean, &sigs, &order).unwrap();
    let one = Complex64::new(1.0, 0.0);
    for f in 0..grid.len() {
        let h = |i: usize| sigs.get(&i).map_or(one, |s| s.h[f]);
        for i in 0..m.model.node_count() {
            for j in 0..m.model.node_count() {
                let expect = clean.entry(f, i, j) / (h(i).conj() * h(j));
                assert!((chain.step(0).entry(f, i, j) - expect).norm() < 1e-12);
            }
        }
    }
}
