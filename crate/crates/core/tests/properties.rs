mod common;

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use radnet_core::corruption::{self, CorruptionKind, CorruptionSignature};
use radnet_core::experiment::{self, Placement};
use radnet_core::graph::{self, NodeSet};
use radnet_core::io;
use radnet_core::panel::{default_labels, TimeSeriesPanel};
use radnet_core::spectral::{FrequencyGrid, SpectralMatrix};

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 48,
        ..ProptestConfig::default()
    }
}

fn corruption_kind() -> impl Strategy<Value = CorruptionKind> {
    prop_oneof![
        (-3i64..=-1, 0.05f64..0.95).prop_map(|(t1, p)| CorruptionKind::RandomDelay { t1, t2: 0, p }),
        (prop::collection::vec(-1.0f64..1.0, 1..4), 0.0f64..2.0).prop_map(|(mut f, v)| {
            f[0] = 1.0;
            CorruptionKind::NoisyFilter {
                filter: f,
                noise_variance: v,
            }
        }),
        (0.05f64..0.95).prop_map(|p| CorruptionKind::PacketDrop { p }),
    ]
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn clique_neighbourhoods_are_leaves_or_corrupt(seed in any::<u64>(), n in 7usize..=20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = experiment::max_assumption_corrupt(n).clamp(1, 3);
        let inst = experiment::random_instance(n, c, Placement::Assumption, &mut rng).unwrap();
        let tree = inst.model.topology();
        let g = experiment::expected_perturbed_graph(&inst).unwrap();
        let corrupt = inst.corrupt_set();
        let leaves = tree.leaves();
        for i in 0..n {
            let clique = graph::neighborhood_is_clique(&g, i).unwrap();
            prop_assert_eq!(clique, leaves.contains(i) || corrupt.contains(i), "node {}", i);
        }
    }

    #[test]
    fn perturbed_graph_contains_moral_graph(seed in any::<u64>(), n in 3usize..=16, frac in 0.0f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tree = radnet_core::UndirectedGraph::new(n);
        for i in 1..n {
            tree.add_edge(rand::Rng::gen_range(&mut rng, 0..i), i).unwrap();
        }
        prop_assert!(graph::is_tree(&tree));
        let corrupt: NodeSet = (0..n).filter(|_| rand::Rng::gen_bool(&mut rng, frac)).collect();
        let moral = graph::moral_graph(&tree).unwrap();
        let pert = graph::perturbed_graph(&moral, &corrupt).unwrap();
        prop_assert!(tree.is_subgraph_of(&moral));
        prop_assert!(moral.is_subgraph_of(&pert));
        if corrupt.is_empty() {
            prop_assert_eq!(pert.edge_set(), moral.edge_set());
        }
    }

    #[test]
    fn analytic_corrupted_psd_is_hermitian_psd(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = common::assumption_instance(&mut rng, 7..=12);
        let grid = FrequencyGrid::dft(32).unwrap();
        let psd = experiment::analytic_corrupted_psd(&inst.model, &inst.corruption, &grid).unwrap();
        prop_assert!(psd.hermitian_defect() < 1e-12);
        for m in psd.values() {
            let herm = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
            let eig = herm.symmetric_eigenvalues();
            prop_assert!(eig.iter().all(|&e| e > 0.0), "{:?}", eig);
        }
    }

    #[test]
    fn signature_noise_is_nonnegative(kind in corruption_kind(), a in -0.6f64..0.6) {
        let m = radnet_core::GenerativeModel::new(
            default_labels(2),
            radnet_core::UndirectedGraph::chain(2),
            [((0, 1), 0.3), ((1, 0), 0.2)].into_iter().collect(),
            vec![vec![a], vec![0.0]],
            vec![1.0, 1.0],
        ).unwrap();
        let grid = FrequencyGrid::dft(64).unwrap();
        let sig = corruption::analytic_signature(&kind, &m, 0, &grid).unwrap();
        prop_assert!(sig.d.iter().all(|&d| d >= -1e-12), "{:?}", sig.d);
        prop_assert!(sig.h.iter().all(|h| h.norm().is_finite()));
    }

    #[test]
    fn panel_binary_round_trip_is_exact(
        data in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 5), 2..5),
        dt in 0.001f64..10.0,
    ) {
        let n = data.len();
        let panel = TimeSeriesPanel::new(data, default_labels(n), dt).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let bin = dir.path().join("p.bin");
        io::write_panel(&panel, &bin).unwrap();
        prop_assert_eq!(&io::read_panel(&bin).unwrap(), &panel);
        let csv = dir.path().join("p.csv");
        io::write_panel(&panel, &csv).unwrap();
        prop_assert_eq!(&io::read_panel_csv(&csv, dt).unwrap(), &panel);
    }

    #[test]
    fn spectrum_round_trip_is_exact(seed in any::<u64>(), n in 2usize..5, k in 8usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || rand::Rng::gen_range(&mut rng, -5.0f64..5.0);
        let values: Vec<DMatrix<Complex64>> = (0..k)
            .map(|_| DMatrix::from_fn(n, n, |_, _| Complex64::new(draw(), draw())))
            .collect();
        let grid = FrequencyGrid::dft(k).unwrap();
        let s = SpectralMatrix::new(grid, values, default_labels(n)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let bin = dir.path().join("s.bin");
        io::write_spectrum_binary(&s, &bin).unwrap();
        prop_assert_eq!(&io::read_spectrum_binary(&bin).unwrap(), &s);
        let csv = dir.path().join("s.csv");
        io::write_spectrum_csv(&s, &csv).unwrap();
        let back = io::read_spectrum_csv(&csv).unwrap();
        for f in 0..k {
            prop_assert!((back.at(f) - s.at(f)).iter().all(|z| z.norm() == 0.0));
        }
    }

    #[test]
    fn signature_csv_round_trip(seed in any::<u64>(), k in 8usize..24) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || rand::Rng::gen_range(&mut rng, -2.0f64..2.0);
        let sig = CorruptionSignature {
            h: (0..k).map(|_| Complex64::new(draw(), draw())).collect(),
            d: (0..k).map(|_| draw().abs()).collect(),
        };
        let grid = FrequencyGrid::dft(k).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sig.csv");
        io::write_signature_csv(&grid, &sig, &path).unwrap();
        let (g, back) = io::read_signature_csv(&path).unwrap();
        prop_assert_eq!(g, grid);
        prop_assert_eq!(back, sig);
    }

    #[test]
    fn analytic_pipeline_recovers_random_trees(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = common::assumption_instance(&mut rng, 7..=14);
        let grid = FrequencyGrid::dft(128).unwrap();
        let psd = experiment::analytic_corrupted_psd(&inst.model, &inst.corruption, &grid).unwrap();
        let params = radnet_core::EdgeDecisionParams::exact();
        let out = experiment::learn_from_spectrum(&psd, &params, 0.0).unwrap();
        let eval = experiment::evaluate(&out.estimate, inst.model.topology(), &inst.corrupt_set());
        prop_assert!(eval.recovered, "{:?}", eval);
        prop_assert!(eval.corrupt_correct);
        prop_assert!(common::is_tree(&out.estimate.graph));
    }

    #[test]
    fn relabelling_permutes_the_estimate(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = common::assumption_instance(&mut rng, 7..=10);
        let n = inst.model.node_count();
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let moved = inst.model.permuted(&perm).unwrap();
        let specs: Vec<_> = inst
            .corruption
            .iter()
            .map(|s| corruption::CorruptionSpec::new(perm[s.node], s.kind.clone()))
            .collect();
        let grid = FrequencyGrid::dft(128).unwrap();
        let params = radnet_core::EdgeDecisionParams::exact();
        let a = experiment::learn_from_spectrum(
            &experiment::analytic_corrupted_psd(&inst.model, &inst.corruption, &grid).unwrap(),
            &params,
            0.0,
        ).unwrap();
        let b = experiment::learn_from_spectrum(
            &experiment::analytic_corrupted_psd(&moved, &specs, &grid).unwrap(),
            &params,
            0.0,
        ).unwrap();
        prop_assert_eq!(a.estimate.graph.permuted(&perm).unwrap().edge_set(), b.estimate.graph.edge_set());
    }
}
