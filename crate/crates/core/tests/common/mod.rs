#![allow(dead_code)]

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use radnet_core::experiment::{self, Instance, Placement};
use radnet_core::graph::{self, edge, NodeSet, UndirectedGraph};
use radnet_core::spectral::SpectralMatrix;

/// Random Assumption-1 instance with `n` in `nodes` and as many corrupt nodes
/// (1 to 3) as fit.
pub fn assumption_instance(rng: &mut impl Rng, nodes: std::ops::RangeInclusive<usize>) -> Instance {
    let n = rng.gen_range(nodes);
    let max = experiment::max_assumption_corrupt(n).clamp(1, 3);
    let c = rng.gen_range(1..=max);
    experiment::random_instance(n, c, Placement::Assumption, rng).expect("room for corrupt nodes")
}

/// Edges `i - j` such that some path from `i` to `j` in `moral` has only
/// corrupt intermediate nodes, found by exhaustive path search.
pub fn brute_force_perturbed(moral: &UndirectedGraph, corrupt: &NodeSet) -> BTreeSet<(usize, usize)> {
    let n = moral.node_count();
    let mut out = moral.edge_set();
    for start in 0..n {
        // depth-first over simple paths whose interior stays in `corrupt`
        let mut stack = vec![(start, vec![start])];
        while let Some((at, path)) = stack.pop() {
            for next in moral.neighbors(at) {
                if path.contains(&next) {
                    continue;
                }
                if path.len() >= 2 {
                    out.insert(edge(start, next));
                }
                if corrupt.contains(next) {
                    let mut p = path.clone();
                    p.push(next);
                    stack.push((next, p));
                }
            }
        }
    }
    out
}

/// Whether every path from `c` to `d` meets `cut`, by enumerating simple
/// paths.
pub fn brute_force_separates(g: &UndirectedGraph, c: usize, d: usize, cut: &NodeSet) -> bool {
    let mut stack = vec![vec![c]];
    while let Some(path) = stack.pop() {
        let at = *path.last().unwrap();
        if at == d {
            return false;
        }
        for next in g.neighbors(at) {
            if !path.contains(&next) && !cut.contains(next) {
                let mut p = path.clone();
                p.push(next);
                stack.push(p);
            }
        }
    }
    true
}

/// Pairs at tree distance 1 or 2.
pub fn two_hop_pairs(tree: &UndirectedGraph) -> BTreeSet<(usize, usize)> {
    let dist = tree.distance_matrix();
    let n = tree.node_count();
    let mut out = BTreeSet::new();
    for i in 0..n {
        for j in i + 1..n {
            if matches!(dist[i][j], Some(1) | Some(2)) {
                out.insert((i, j));
            }
        }
    }
    out
}

/// Dense per-frequency inverse with no conditioning checks.
pub fn dense_inverse(s: &SpectralMatrix) -> Vec<DMatrix<Complex64>> {
    s.values()
        .iter()
        .map(|m| m.clone().try_inverse().expect("invertible"))
        .collect()
}

/// `max |a - b| / max |b|` over one frequency.
pub fn relative_gap(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    let scale = b.iter().map(|z| z.norm()).fold(0.0, f64::max);
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max) / scale
}

/// Tree paths `p - q - l - r - s` through `l`.
pub fn configurations(tree: &UndirectedGraph, l: usize) -> Vec<[usize; 5]> {
    let mut out = Vec::new();
    for q in tree.neighbors(l) {
        for r in tree.neighbors(l) {
            if q == r {
                continue;
            }
            for p in tree.neighbors(q).filter(|&p| p != l) {
                for s in tree.neighbors(r).filter(|&s| s != l) {
                    out.push([p, q, l, r, s]);
                }
            }
        }
    }
    out
}

pub fn chain(n: usize) -> UndirectedGraph {
    UndirectedGraph::chain(n)
}

pub fn is_tree(g: &UndirectedGraph) -> bool {
    graph::is_tree(g)
}
