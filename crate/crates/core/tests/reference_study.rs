mod common;

use radnet_core::detection;
use radnet_core::experiment::{self, reference_corruption, reference_model};
use radnet_core::graph::{self, NodeSet, UndirectedGraph};
use radnet_core::reconstruction::EdgeProvenance;
use radnet_core::spectral::{self, FrequencyGrid};
use radnet_core::{model, EdgeDecisionParams};

// node labels start at 1
fn one_based(edges: &[(usize, usize)]) -> UndirectedGraph {
    UndirectedGraph::from_edges(7, edges.iter().map(|&(i, j)| (i - 1, j - 1))).unwrap()
}

fn chain_perturbed_graph() -> UndirectedGraph {
    one_based(&[
        (1, 2),
        (1, 3),
        (2, 3),
        (2, 4),
        (2, 5),
        (2, 6),
        (3, 4),
        (3, 5),
        (3, 6),
        (4, 5),
        (4, 6),
        (5, 6),
        (5, 7),
        (6, 7),
    ])
}

#[test]
fn chain_couplings_and_stability() {
    let m = reference_model();
    assert_eq!(m.topology().edge_set(), common::chain(7).edge_set());
    assert_eq!(m.coupling(2, 3), -1.7);
    assert_eq!(m.coupling(4, 3), 1.5);
    let radius = m.spectral_radius().unwrap();
    assert!((radius - 0.8556).abs() < 1e-3, "radius {radius}");
}

#[test]
fn perturbed_graph_of_the_chain() {
    let moral = graph::moral_graph(&common::chain(7)).unwrap();
    let corrupt: NodeSet = [3].into_iter().collect();
    let g = graph::perturbed_graph(&moral, &corrupt).unwrap();
    assert_eq!(g.edge_set(), chain_perturbed_graph().edge_set());
    // nodes 1 and 7 are the leaves, node 4 the corrupt node
    let cliques: Vec<usize> = (0..7)
        .filter(|&i| graph::neighborhood_is_clique(&g, i).unwrap())
        .collect();
    assert_eq!(cliques, vec![0, 3, 6]);
    assert!(graph::separates(&g, 0, 6, &[1, 2].into_iter().collect()).unwrap());
}

#[test]
fn analytic_spectrum_recovers_the_chain() {
    let m = reference_model();
    let grid = FrequencyGrid::dft(1024).unwrap();
    let psd = experiment::analytic_corrupted_psd(&m, &reference_corruption(), &grid).unwrap();
    let params = EdgeDecisionParams::exact();
    let out = experiment::learn_from_spectrum(&psd, &params, 0.0).unwrap();

    assert_eq!(out.report.perturbed_graph.edge_set(), chain_perturbed_graph().edge_set());
    assert_eq!(out.report.corrupt.to_vec(), vec![3]);
    assert_eq!(out.report.leaves.to_vec(), vec![0, 6]);
    assert_eq!(
        out.report.leaf_edges.iter().copied().collect::<Vec<_>>(),
        vec![(0, 1), (5, 6)]
    );
    assert!(out.report.is_clean());

    let est = &out.estimate;
    assert!(est.is_clean(), "{:?}", est.diagnostics);
    assert_eq!(est.graph.edge_set(), common::chain(7).edge_set());
    assert_eq!(est.provenance[&(1, 2)], EdgeProvenance::Separation);
    assert_eq!(est.provenance[&(4, 5)], EdgeProvenance::Separation);
    assert_eq!(est.provenance[&(2, 3)], EdgeProvenance::Placement);
    assert_eq!(est.provenance[&(3, 4)], EdgeProvenance::Placement);
    assert_eq!(est.components.len(), 2);
    // hiding node 4 links 3 and 5 in the observed support
    assert!(est.observed_graph.has_edge(2, 4));
    assert!(!est.graph.has_edge(2, 4));
}

#[test]
fn woodbury_chain_matches_direct_inversion() {
    let m = reference_model();
    let grid = FrequencyGrid::dft(256).unwrap();
    let specs = reference_corruption();
    let sigs = experiment::analytic_signatures(&m, &specs, &grid).unwrap();
    let clean_inv = model::analytic_inverse_psd(&m, &grid).unwrap();
    let chain = spectral::woodbury_chain(&clean_inv, &sigs, &[3]).unwrap();
    let psd = experiment::analytic_corrupted_psd(&m, &specs, &grid).unwrap();
    let dense = common::dense_inverse(&psd);
    for (f, d) in dense.iter().enumerate() {
        assert!(common::relative_gap(chain.inverse().at(f), d) < 1e-9);
    }
}

#[test]
fn phase_of_corrupt_neighbourhood_is_non_constant() {
    let m = reference_model();
    let grid = FrequencyGrid::dft(1024).unwrap();
    let psd = experiment::analytic_corrupted_psd(&m, &reference_corruption(), &grid).unwrap();
    let inv = spectral::invert_spectrum(&psd, 0.0).unwrap();
    let params = EdgeDecisionParams::default();
    // entries touching the corrupt node vary in phase, the 2-hop pair 1-3 does not
    for j in [1, 2, 4, 5] {
        assert!(detection::phase_nonconstancy_score(&inv, 3, j, &params).unwrap() > 0.1);
    }
    assert!(detection::phase_nonconstancy_score(&inv, 0, 2, &params).unwrap() < 1e-6);
    assert!(detection::phase_nonconstancy_score(&inv, 4, 6, &params).unwrap() < 1e-6);
}

#[test]
fn uncorrupted_chain_reports_no_corrupt_nodes() {
    let m = reference_model();
    let grid = FrequencyGrid::dft(512).unwrap();
    let psd = model::analytic_psd(&m, &grid).unwrap();
    let out = experiment::learn_from_spectrum(&psd, &EdgeDecisionParams::exact(), 0.0).unwrap();
    assert!(out.report.corrupt.is_empty());
    assert_eq!(out.report.leaves.to_vec(), vec![0, 6]);
    assert_eq!(out.estimate.graph.edge_set(), common::chain(7).edge_set());
}
