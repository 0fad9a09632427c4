//! Topology reconstruction once the corrupt nodes are known.
//!
//! The corrupt streams are hidden and the inverse PSD of the remaining
//! streams is formed. Among the observed nodes the support of that inverse
//! contains every true edge plus spurious chords; a chord `p-q` never
//! separates the observed graph, a true edge between non-leaf nodes always
//! does. The surviving edges plus the leaf edges form a forest whose
//! components are joined through the corrupt nodes, using the clique and
//! phase structure of the full inverse PSD.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::detection::{
    self, diagnostics_json, DetectionReport, Diagnostic, DiagnosticKind, EdgeDecisionParams,
};
use crate::error::{Error, Result};
use crate::graph::{self, edge, NodeSet, UndirectedGraph};
use crate::spectral::{self, SpectralMatrix};

/// How an edge of the estimate was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeProvenance {
    /// The one non-constant-phase edge of a detected leaf.
    Leaf,
    /// Kept by the two-vertex separation test on the observed nodes.
    Separation,
    /// Attaches a corrupt node to a component.
    Placement,
}

/// One `(p, q, l, r, s)` configuration examined when placing corrupt node `l`
/// between components `θ_a ∋ q` and `θ_b ∋ r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementCandidate {
    pub components: (usize, usize),
    pub corrupt: usize,
    pub p: usize,
    pub q: usize,
    pub r: usize,
    pub s: usize,
    /// Phase spread of the inverse-PSD entry `(p, s)`.
    pub phase_score: f64,
    pub accepted: bool,
}

/// Reconstructed topology with the evidence behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyEstimate {
    pub graph: UndirectedGraph,
    pub provenance: BTreeMap<(usize, usize), EdgeProvenance>,
    pub corrupt: NodeSet,
    /// Support graph of the inverse PSD of the observed streams (corrupt
    /// nodes isolated).
    pub observed_graph: UndirectedGraph,
    /// Components of the true-edge forest before the corrupt nodes are
    /// placed.
    pub components: Vec<NodeSet>,
    pub placements: Vec<PlacementCandidate>,
    pub diagnostics: Vec<Diagnostic>,
}

impl TopologyEstimate {
    pub fn is_tree(&self) -> bool {
        graph::is_tree(&self.graph)
    }

    /// No detection or reconstruction diagnostics and a spanning tree.
    pub fn is_clean(&self) -> bool {
        self.diagnostics.is_empty() && self.is_tree()
    }

    pub fn to_json(&self, labels: &[String]) -> serde_json::Value {
        let l = |i: usize| labels[i].clone();
        serde_json::json!({
            "graph": graph::GraphJson::from_graph(&self.graph, labels).ok(),
            "is_tree": self.is_tree(),
            "edges": self.graph.edges().into_iter().map(|e| serde_json::json!({
                "a": l(e.0), "b": l(e.1),
                "provenance": self.provenance.get(&e),
            })).collect::<Vec<_>>(),
            "corrupt": self.corrupt.iter().map(l).collect::<Vec<_>>(),
            "observed_graph": graph::GraphJson::from_graph(&self.observed_graph, labels).ok(),
            "components": self.components.iter()
                .map(|c| c.iter().map(l).collect::<Vec<_>>()).collect::<Vec<_>>(),
            "placements": self.placements.iter().map(|c| serde_json::json!({
                "components": [c.components.0, c.components.1],
                "corrupt": l(c.corrupt),
                "p": l(c.p), "q": l(c.q), "r": l(c.r), "s": l(c.s),
                "phase_score": c.phase_score,
                "accepted": c.accepted,
            })).collect::<Vec<_>>(),
            "diagnostics": diagnostics_json(&self.diagnostics, labels),
        })
    }

    /// DOT with edges coloured by provenance and corrupt nodes filled.
    pub fn to_dot(&self, labels: &[String]) -> String {
        let mut style = graph::DotStyle::default();
        for c in &self.corrupt {
            style
                .node_attrs
                .push((c, "color=red, style=filled, fillcolor=mistyrose".into()));
        }
        for (&e, p) in &self.provenance {
            let colour = match p {
                EdgeProvenance::Leaf => "color=blue",
                EdgeProvenance::Separation => "color=black",
                EdgeProvenance::Placement => "color=red, style=dashed",
            };
            style.edge_attrs.push((e, colour.into()));
        }
        graph::to_dot(&self.graph, labels, "topology", &style)
    }
}

/// Support graph of the inverse PSD of the streams outside `corrupt`,
/// embedded in the full node set, together with that inverse.
pub fn observed_support_graph(
    psd: &SpectralMatrix,
    corrupt: &NodeSet,
    params: &EdgeDecisionParams,
    ridge: f64,
) -> Result<(UndirectedGraph, SpectralMatrix)> {
    let n = psd.dim();
    let observed: Vec<usize> = (0..n).filter(|&i| !corrupt.contains(i)).collect();
    let inv = spectral::marginal_inverse_psd(psd, &observed, ridge)?;
    let local = detection::infer_support_graph(&inv, params)?;
    let mut g = UndirectedGraph::new(n);
    for (a, b) in local.edges() {
        g.add_edge(observed[a], observed[b])?;
    }
    Ok((g, inv))
}

/// Edges `p-q` of `observed_graph` with both endpoints in `non_leaf` whose
/// removal (with both endpoints) leaves the other observed nodes in at least
/// two components.
pub fn separation_edges(
    observed_graph: &UndirectedGraph,
    observed: &NodeSet,
    non_leaf: &NodeSet,
) -> BTreeSet<(usize, usize)> {
    let mut kept = BTreeSet::new();
    for (p, q) in observed_graph.edges() {
        if !(non_leaf.contains(p) && non_leaf.contains(q)) {
            continue;
        }
        let mut rest = observed.clone();
        rest.remove(p);
        rest.remove(q);
        if graph::components_within(observed_graph, &rest).len() >= 2 {
            kept.insert((p, q));
        }
    }
    kept
}

/// Joins the components of the true-edge forest `theta` through the corrupt
/// nodes.
///
/// For every pair of components `θ_a, θ_b` and corrupt `l`, each
/// configuration `q ∈ θ_a, p ∈ N_θ(q), r ∈ θ_b, s ∈ N_θ(r)` with
/// `{p, q, l, r, s}` a clique of the perturbed graph is scored by the phase
/// spread of `inv_psd(p, s)`; a constant phase places `l` on `q - l - r`.
/// Returns the placed edges per corrupt node and every configuration tried.
pub fn place_corrupt_nodes(
    theta: &UndirectedGraph,
    components: &[NodeSet],
    corrupt: &NodeSet,
    perturbed: &UndirectedGraph,
    inv_psd: &SpectralMatrix,
    params: &EdgeDecisionParams,
) -> Result<(BTreeMap<usize, BTreeSet<(usize, usize)>>, Vec<PlacementCandidate>)> {
    let mut placed: BTreeMap<usize, BTreeSet<(usize, usize)>> = BTreeMap::new();
    let mut tried = Vec::new();
    for a in 0..components.len() {
        for b in a + 1..components.len() {
            for l in corrupt {
                for q in &components[a] {
                    for r in &components[b] {
                        if !(perturbed.has_edge(q, l) && perturbed.has_edge(l, r)) {
                            continue;
                        }
                        for p in theta.neighbors(q) {
                            for s in theta.neighbors(r) {
                                if !graph::is_clique(perturbed, &[p, q, l, r, s]) {
                                    continue;
                                }
                                let score =
                                    detection::phase_nonconstancy_score(inv_psd, p, s, params)?;
                                let accepted = score < params.phase_threshold;
                                if accepted {
                                    let entry = placed.entry(l).or_default();
                                    entry.insert(edge(q, l));
                                    entry.insert(edge(l, r));
                                }
                                tried.push(PlacementCandidate {
                                    components: (a, b),
                                    corrupt: l,
                                    p,
                                    q,
                                    r,
                                    s,
                                    phase_score: score,
                                    accepted,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((placed, tried))
}

/// Full reconstruction from the corrupted PSD `psd`, its inverse `inv_psd`
/// and a detection report.
pub fn reconstruct(
    psd: &SpectralMatrix,
    inv_psd: &SpectralMatrix,
    report: &DetectionReport,
    params: &EdgeDecisionParams,
    ridge: f64,
) -> Result<TopologyEstimate> {
    let n = psd.dim();
    if inv_psd.dim() != n || report.perturbed_graph.node_count() != n {
        return Err(Error::Data("spectrum and detection report sizes differ".into()));
    }
    let labels = psd.labels();
    let corrupt = report.corrupt.clone();
    let all: NodeSet = (0..n).collect();
    let observed = all.difference(&corrupt);
    let mut diagnostics = report.diagnostics.clone();
    let mut provenance = BTreeMap::new();

    let observed_graph = if corrupt.is_empty() {
        report.perturbed_graph.clone()
    } else if observed.len() < 2 {
        diagnostics.push(Diagnostic {
            kind: DiagnosticKind::SmallComponent,
            nodes: observed.to_vec(),
            message: format!(
                "{} of {n} nodes flagged corrupt; nothing left to marginalise onto",
                corrupt.len()
            ),
        });
        UndirectedGraph::new(n)
    } else {
        observed_support_graph(psd, &corrupt, params, ridge)?.0
    };
    let non_leaf = observed
        .difference(&report.leaves)
        .difference(&report.candidates);
    for (p, q) in separation_edges(&observed_graph, &observed, &non_leaf) {
        provenance.insert((p, q), EdgeProvenance::Separation);
    }
    for &e in &report.leaf_edges {
        provenance.insert(e, EdgeProvenance::Leaf);
    }
    let mut theta = UndirectedGraph::new(n);
    for &(p, q) in provenance.keys() {
        theta.add_edge(p, q)?;
    }
    let components = graph::components_within(&theta, &observed);

    let mut placements = Vec::new();
    if !corrupt.is_empty() {
        for c in components.iter().filter(|c| c.len() < 2) {
            diagnostics.push(Diagnostic {
                kind: DiagnosticKind::SmallComponent,
                nodes: c.to_vec(),
                message: format!(
                    "observed component {{{}}} has fewer than 2 nodes",
                    c.iter().map(|i| labels[i].as_str()).collect::<Vec<_>>().join(", ")
                ),
            });
        }
        let (placed, tried) = place_corrupt_nodes(
            &theta,
            &components,
            &corrupt,
            &report.perturbed_graph,
            inv_psd,
            params,
        )?;
        placements = tried;
        for l in &corrupt {
            match placed.get(&l) {
                None => diagnostics.push(Diagnostic {
                    kind: DiagnosticKind::NoPlacement,
                    nodes: vec![l],
                    message: format!("no configuration places corrupt node {}", labels[l]),
                }),
                Some(edges) => {
                    let touched: Vec<usize> = edges
                        .iter()
                        .map(|&(x, y)| if x == l { y } else { x })
                        .filter_map(|u| components.iter().position(|c| c.contains(u)))
                        .collect();
                    let distinct: BTreeSet<usize> = touched.iter().copied().collect();
                    if distinct.len() < touched.len() {
                        diagnostics.push(Diagnostic {
                            kind: DiagnosticKind::ConflictingPlacement,
                            nodes: vec![l],
                            message: format!(
                                "corrupt node {} attached twice to the same component",
                                labels[l]
                            ),
                        });
                    }
                    for &e in edges {
                        provenance.entry(e).or_insert(EdgeProvenance::Placement);
                    }
                }
            }
        }
    }

    let mut graph = UndirectedGraph::new(n);
    for &(p, q) in provenance.keys() {
        graph.add_edge(p, q)?;
    }
    if !graph::is_tree(&graph) {
        diagnostics.push(Diagnostic {
            kind: DiagnosticKind::NotATree,
            nodes: Vec::new(),
            message: format!(
                "reconstruction has {} edges on {} nodes and {} components",
                graph.edge_count(),
                n,
                graph::connected_components(&graph).len()
            ),
        });
    }
    Ok(TopologyEstimate {
        graph,
        provenance,
        corrupt,
        observed_graph,
        components,
        placements,
        diagnostics,
    })
}
