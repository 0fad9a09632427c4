//! Corrupt-node detection from the inverse PSD of the observed streams.
//!
//! The support of the inverse PSD gives the perturbed graph. Nodes whose
//! neighbourhood is a clique there are leaves or corrupt nodes; a corrupt
//! node has at least two neighbours whose inverse-PSD entry has a
//! frequency-dependent phase, a leaf has exactly one (its true edge).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, edge, NodeSet, UndirectedGraph};
use crate::spectral::SpectralMatrix;

/// Thresholds turning exact-zero and exact-constancy tests into decisions on
/// estimated spectra.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdgeDecisionParams {
    /// Edge present iff the normalised magnitude score is at least this.
    pub magnitude_threshold: f64,
    /// Phase non-constant iff the circular spread is at least this (radians).
    pub phase_threshold: f64,
    /// Frequencies whose entry magnitude is below this quantile are ignored
    /// by the phase test.
    pub magnitude_floor_quantile: f64,
    /// Frequencies within this many bins of 0 and π are ignored by the
    /// phase test.
    pub band_edge_bins: usize,
}

impl Default for EdgeDecisionParams {
    fn default() -> Self {
        Self {
            magnitude_threshold: 0.05,
            phase_threshold: 0.1,
            magnitude_floor_quantile: 0.25,
            band_edge_bins: 2,
        }
    }
}

impl EdgeDecisionParams {
    /// Thresholds for exact (analytic) spectra, where absent entries are
    /// zero and constant phases are constant up to rounding.
    pub fn exact() -> Self {
        Self {
            magnitude_threshold: 1e-8,
            phase_threshold: 1e-6,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.magnitude_threshold > 0.0 && self.phase_threshold > 0.0) {
            return Err(Error::Config("decision thresholds must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.magnitude_floor_quantile) {
            return Err(Error::Config("magnitude floor quantile must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Normalised magnitude `max_ω |M_ij| / sqrt(|M_ii| |M_jj|)` over valid
/// frequencies.
pub fn magnitude_score(inv_psd: &SpectralMatrix, i: usize, j: usize) -> f64 {
    (0..inv_psd.grid().len())
        .filter(|&k| inv_psd.is_valid(k))
        .map(|k| {
            let scale = (inv_psd.entry(k, i, i).norm() * inv_psd.entry(k, j, j).norm()).sqrt();
            if scale > 0.0 {
                inv_psd.entry(k, i, j).norm() / scale
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

/// All pairwise magnitude scores `(i, j, score)` with `i < j`.
pub fn magnitude_scores(inv_psd: &SpectralMatrix) -> Vec<(usize, usize, f64)> {
    let n = inv_psd.dim();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push((i, j, magnitude_score(inv_psd, i, j)));
        }
    }
    out
}

fn check_diagonal(inv_psd: &SpectralMatrix) -> Result<()> {
    for i in 0..inv_psd.dim() {
        let usable = (0..inv_psd.grid().len())
            .any(|k| inv_psd.is_valid(k) && inv_psd.entry(k, i, i).re > 0.0);
        if !usable {
            return Err(Error::Numerical(format!(
                "inverse PSD diagonal of node {} is nonpositive at every frequency",
                inv_psd.labels()[i]
            )));
        }
    }
    Ok(())
}

/// Graph with an edge wherever the normalised inverse-PSD magnitude reaches
/// `magnitude_threshold`.
pub fn infer_support_graph(
    inv_psd: &SpectralMatrix,
    params: &EdgeDecisionParams,
) -> Result<UndirectedGraph> {
    params.validate()?;
    check_diagonal(inv_psd)?;
    let mut g = UndirectedGraph::new(inv_psd.dim());
    for (i, j, s) in magnitude_scores(inv_psd) {
        if s >= params.magnitude_threshold {
            g.add_edge(i, j)?;
        }
    }
    Ok(g)
}

/// Magnitude-weighted circular standard deviation `sqrt(-2 ln R)` of the
/// phase of entry `(i, j)`, over valid frequencies away from the band edges
/// whose magnitude clears the floor quantile. Zero for constant phase.
pub fn phase_nonconstancy_score(
    inv_psd: &SpectralMatrix,
    i: usize,
    j: usize,
    params: &EdgeDecisionParams,
) -> Result<f64> {
    let grid = inv_psd.grid();
    let samples: Vec<_> = (0..grid.len())
        .filter(|&k| inv_psd.is_valid(k) && !grid.near_band_edge(k, params.band_edge_bins))
        .map(|k| inv_psd.entry(k, i, j))
        .collect();
    let mut mags: Vec<f64> = samples.iter().map(|z| z.norm()).collect();
    mags.sort_by(f64::total_cmp);
    let floor = mags
        .get((params.magnitude_floor_quantile * mags.len() as f64).floor() as usize)
        .copied()
        .unwrap_or(f64::INFINITY);
    let (mut sum, mut weight) = (num_complex::Complex64::new(0.0, 0.0), 0.0);
    for z in samples {
        let m = z.norm();
        if m >= floor && m > 0.0 {
            // weight |z| times the unit phasor z/|z|
            sum += z;
            weight += m;
        }
    }
    if weight == 0.0 {
        return Err(Error::Numerical(format!(
            "no admissible frequencies for the phase of entry ({}, {})",
            inv_psd.labels()[i],
            inv_psd.labels()[j]
        )));
    }
    let resultant = (sum.norm() / weight).clamp(1e-300, 1.0);
    Ok((-2.0 * resultant.ln()).max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    /// A clique-neighbourhood node had no neighbour with non-constant phase.
    NoNonConstantEdge,
    /// A component of the observed true-edge graph has fewer than 2 nodes.
    SmallComponent,
    /// No placement configuration passed for a corrupt node.
    NoPlacement,
    /// Placement configurations disagree.
    ConflictingPlacement,
    /// The reconstructed graph is not a spanning tree.
    NotATree,
}

/// Structured report of an assumption violation or an estimation failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub nodes: Vec<usize>,
    pub message: String,
}

/// Phase evidence for one neighbour of a candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseEvidence {
    pub neighbor: usize,
    pub phase_score: f64,
    pub non_constant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    /// Estimated perturbed graph.
    pub perturbed_graph: UndirectedGraph,
    /// Normalised magnitude score of every pair.
    pub edge_scores: Vec<(usize, usize, f64)>,
    /// Nodes whose neighbourhood is a clique.
    pub candidates: NodeSet,
    pub corrupt: NodeSet,
    pub leaves: NodeSet,
    /// The true edge of every leaf.
    pub leaf_edges: BTreeSet<(usize, usize)>,
    /// `(candidate, per-neighbour evidence)`.
    pub evidence: Vec<(usize, Vec<PhaseEvidence>)>,
    pub diagnostics: Vec<Diagnostic>,
}

impl DetectionReport {
    pub fn is_clean(&self) -> bool {
        self.diagnostics.is_empty()
    }

    pub fn to_json(&self, labels: &[String]) -> serde_json::Value {
        let l = |i: usize| labels[i].clone();
        let set = |s: &NodeSet| s.iter().map(l).collect::<Vec<_>>();
        serde_json::json!({
            "perturbed_graph": graph::GraphJson::from_graph(&self.perturbed_graph, labels).ok(),
            "edge_scores": self.edge_scores.iter().map(|&(i, j, s)| serde_json::json!({
                "a": l(i), "b": l(j), "score": s,
                "present": self.perturbed_graph.has_edge(i, j),
            })).collect::<Vec<_>>(),
            "candidates": set(&self.candidates),
            "corrupt": set(&self.corrupt),
            "leaves": set(&self.leaves),
            "leaf_edges": self.leaf_edges.iter().map(|&(i, j)| [l(i), l(j)]).collect::<Vec<_>>(),
            "evidence": self.evidence.iter().map(|(c, ev)| serde_json::json!({
                "candidate": l(*c),
                "neighbors": ev.iter().map(|e| serde_json::json!({
                    "neighbor": l(e.neighbor),
                    "phase_score": e.phase_score,
                    "non_constant": e.non_constant,
                })).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
            "diagnostics": diagnostics_json(&self.diagnostics, labels),
        })
    }

    /// DOT of the perturbed graph; corrupt nodes red, leaves blue, other
    /// candidates grey, leaf edges bold.
    pub fn to_dot(&self, labels: &[String]) -> String {
        let mut style = graph::DotStyle::default();
        for c in &self.candidates {
            let colour = if self.corrupt.contains(c) {
                "color=red, style=filled, fillcolor=mistyrose"
            } else if self.leaves.contains(c) {
                "color=blue"
            } else {
                "color=gray"
            };
            style.node_attrs.push((c, colour.to_string()));
        }
        for &e in &self.leaf_edges {
            style.edge_attrs.push((e, "penwidth=2".to_string()));
        }
        graph::to_dot(&self.perturbed_graph, labels, "perturbed", &style)
    }
}

pub(crate) fn diagnostics_json(diags: &[Diagnostic], labels: &[String]) -> serde_json::Value {
    serde_json::Value::Array(
        diags
            .iter()
            .map(|d| {
                serde_json::json!({
                    "kind": d.kind,
                    "nodes": d.nodes.iter().map(|&i| labels[i].clone()).collect::<Vec<_>>(),
                    "message": d.message,
                })
            })
            .collect(),
    )
}

/// Candidate set, corrupt/leaf split and leaf edges from an inverse PSD.
///
/// Candidates with no non-constant neighbour are reported as diagnostics and
/// left out of both `corrupt` and `leaves`.
pub fn detect(inv_psd: &SpectralMatrix, params: &EdgeDecisionParams) -> Result<DetectionReport> {
    let support = infer_support_graph(inv_psd, params)?;
    let edge_scores = magnitude_scores(inv_psd);
    let mut report = DetectionReport {
        perturbed_graph: support.clone(),
        edge_scores,
        candidates: NodeSet::new(),
        corrupt: NodeSet::new(),
        leaves: NodeSet::new(),
        leaf_edges: BTreeSet::new(),
        evidence: Vec::new(),
        diagnostics: Vec::new(),
    };
    for i in 0..support.node_count() {
        if !graph::neighborhood_is_clique(&support, i)? {
            continue;
        }
        report.candidates.insert(i);
        let mut evidence = Vec::new();
        for j in support.neighbors(i) {
            let score = phase_nonconstancy_score(inv_psd, i, j, params)?;
            evidence.push(PhaseEvidence {
                neighbor: j,
                phase_score: score,
                non_constant: score >= params.phase_threshold,
            });
        }
        let varying: Vec<usize> = evidence
            .iter()
            .filter(|e| e.non_constant)
            .map(|e| e.neighbor)
            .collect();
        match varying.len() {
            0 => report.diagnostics.push(Diagnostic {
                kind: DiagnosticKind::NoNonConstantEdge,
                nodes: vec![i],
                message: format!(
                    "candidate {} has no neighbour with non-constant phase",
                    inv_psd.labels()[i]
                ),
            }),
            1 => {
                report.leaves.insert(i);
                report.leaf_edges.insert(edge(i, varying[0]));
            }
            _ => {
                report.corrupt.insert(i);
            }
        }
        report.evidence.push((i, evidence));
    }
    Ok(report)
}
