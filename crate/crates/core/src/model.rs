//! Discrete-time bidirectional network dynamics.
//!
//! Node `i` evolves as `S_i(z) x_i = Σ_j b_ij x_j + w_i` with
//! `S_i(z) = z^m - a_1 z^(m-1) - ... - a_m` and white Gaussian `w_i` of
//! variance `σ²_i`. In the time domain that is
//!
//! ```text
//! x_i[t] = Σ_k a_k x_i[t-k] + Σ_j b_ij x_j[t-m] + w_i[t-m]
//! ```
//!
//! so `S_i(z) = z` gives the one-step coupled AR model `x[t] = B x[t-1] + w`.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, UndirectedGraph};
use crate::panel::TimeSeriesPanel;
use crate::spectral::{FrequencyGrid, SpectralMatrix};

/// Minimum gap between the companion spectral radius and the unit circle.
pub const STABILITY_MARGIN: f64 = 1e-3;

/// Samples discarded before recording a trajectory.
pub const DEFAULT_BURN_IN: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeModel {
    labels: Vec<String>,
    topology: UndirectedGraph,
    /// `(i, j) -> b_ij`, the weight of `x_j` in node `i`'s equation.
    coupling: BTreeMap<(usize, usize), f64>,
    /// AR coefficients `a_1..a_m` of each `S_i`.
    self_dynamics: Vec<Vec<f64>>,
    noise_variance: Vec<f64>,
}

impl GenerativeModel {
    /// Builds and validates a model. `coupling` must hold a nonzero `b_ij`
    /// and `b_ji` for every topology edge and nothing else, and the system
    /// must be stable with [`STABILITY_MARGIN`].
    pub fn new(
        labels: Vec<String>,
        topology: UndirectedGraph,
        coupling: BTreeMap<(usize, usize), f64>,
        self_dynamics: Vec<Vec<f64>>,
        noise_variance: Vec<f64>,
    ) -> Result<Self> {
        let n = topology.node_count();
        if n < 2 {
            return Err(Error::Model("a model needs at least 2 nodes".into()));
        }
        if labels.len() != n || self_dynamics.len() != n || noise_variance.len() != n {
            return Err(Error::Model(format!(
                "per-node data lengths must all equal the node count {n}"
            )));
        }
        let mut seen = labels.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != n {
            return Err(Error::Model("node labels must be unique".into()));
        }
        for (&(i, j), &b) in &coupling {
            topology.check_node(i)?;
            topology.check_node(j)?;
            if !topology.has_edge(i, j) {
                return Err(Error::Model(format!(
                    "coupling b[{},{}] on a pair that is not a topology edge",
                    labels[i], labels[j]
                )));
            }
            if !b.is_finite() || b == 0.0 {
                return Err(Error::Model(format!(
                    "coupling b[{},{}] must be finite and nonzero",
                    labels[i], labels[j]
                )));
            }
        }
        for (i, j) in topology.edges() {
            if !coupling.contains_key(&(i, j)) || !coupling.contains_key(&(j, i)) {
                return Err(Error::Model(format!(
                    "edge {}-{} needs couplings in both directions",
                    labels[i], labels[j]
                )));
            }
        }
        for (i, ar) in self_dynamics.iter().enumerate() {
            if ar.is_empty() || ar.iter().any(|a| !a.is_finite()) {
                return Err(Error::Model(format!(
                    "node {} needs at least one finite AR coefficient",
                    labels[i]
                )));
            }
        }
        for (i, &s) in noise_variance.iter().enumerate() {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Model(format!(
                    "noise variance of node {} must be positive",
                    labels[i]
                )));
            }
        }
        let model = Self {
            labels,
            topology,
            coupling,
            self_dynamics,
            noise_variance,
        };
        let radius = model.spectral_radius()?;
        if radius > 1.0 - STABILITY_MARGIN {
            return Err(Error::Unstable {
                radius,
                margin: STABILITY_MARGIN,
            });
        }
        Ok(model)
    }

    pub fn node_count(&self) -> usize {
        self.topology.node_count()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn topology(&self) -> &UndirectedGraph {
        &self.topology
    }

    pub fn is_radial(&self) -> bool {
        graph::is_tree(&self.topology)
    }

    /// `b_ij`, zero off the topology.
    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        self.coupling.get(&(i, j)).copied().unwrap_or(0.0)
    }

    pub fn couplings(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.coupling
    }

    pub fn self_dynamics(&self, i: usize) -> &[f64] {
        &self.self_dynamics[i]
    }

    pub fn noise_variance(&self, i: usize) -> f64 {
        self.noise_variance[i]
    }

    fn order(&self, i: usize) -> usize {
        self.self_dynamics[i].len()
    }

    /// `S_i(e^{jω})`.
    pub fn self_polynomial(&self, i: usize, omega: f64) -> Complex64 {
        let ar = &self.self_dynamics[i];
        let m = ar.len() as i32;
        let z = |p: i32| Complex64::from_polar(1.0, omega * p as f64);
        let mut s = z(m);
        for (k, &a) in ar.iter().enumerate() {
            s -= a * z(m - 1 - k as i32);
        }
        s
    }

    /// `𝒢_ij(e^{jω}) = b_ij / S_i(e^{jω})`.
    pub fn transfer(&self, i: usize, j: usize, omega: f64) -> Complex64 {
        let b = self.coupling(i, j);
        if b == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            b / self.self_polynomial(i, omega)
        }
    }

    /// PSD of `e_i = w_i / S_i`: `σ²_i / |S_i(e^{jω})|²`.
    pub fn noise_psd(&self, i: usize, omega: f64) -> f64 {
        self.noise_variance[i] / self.self_polynomial(i, omega).norm_sqr()
    }

    /// State matrix of the stacked-lag (companion) form.
    pub fn companion_matrix(&self) -> DMatrix<f64> {
        let n = self.node_count();
        let lags = (0..n).map(|i| self.order(i)).max().unwrap_or(1);
        let dim = n * lags;
        let mut a = DMatrix::zeros(dim, dim);
        for i in 0..n {
            for (k, &coef) in self.self_dynamics[i].iter().enumerate() {
                a[(i, k * n + i)] += coef;
            }
            let m = self.order(i);
            for j in self.topology.neighbors(i) {
                a[(i, (m - 1) * n + j)] += self.coupling(i, j);
            }
        }
        for r in n..dim {
            a[(r, r - n)] = 1.0;
        }
        a
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        let eig = self.companion_matrix().complex_eigenvalues();
        let radius = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if radius.is_finite() {
            Ok(radius)
        } else {
            Err(Error::Numerical("eigenvalue computation diverged".into()))
        }
    }

    /// Same model with node `i` renamed to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.node_count();
        let mut labels = vec![String::new(); n];
        let mut ar = vec![Vec::new(); n];
        let mut noise = vec![0.0; n];
        for i in 0..n {
            labels[perm[i]] = self.labels[i].clone();
            ar[perm[i]] = self.self_dynamics[i].clone();
            noise[perm[i]] = self.noise_variance[i];
        }
        let coupling = self
            .coupling
            .iter()
            .map(|(&(i, j), &b)| ((perm[i], perm[j]), b))
            .collect();
        Self::new(labels, self.topology.permuted(perm)?, coupling, ar, noise)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: ModelFile = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        };
        spec.build()
    }

    pub fn to_file_spec(&self) -> ModelFile {
        ModelFile {
            nodes: (0..self.node_count())
                .map(|i| NodeSpec {
                    label: self.labels[i].clone(),
                    ar: self.self_dynamics[i].clone(),
                    noise_variance: self.noise_variance[i],
                })
                .collect(),
            edges: self
                .topology
                .edges()
                .into_iter()
                .map(|(i, j)| EdgeSpec {
                    a: self.labels[i].clone(),
                    b: self.labels[j].clone(),
                    b_ab: self.coupling(i, j),
                    b_ba: self.coupling(j, i),
                })
                .collect(),
        }
    }
}

/// Serialized model: nodes with their self dynamics and noise level, edges
/// with both coupling directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub edges: Vec<EdgeSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub label: String,
    /// AR coefficients of `S(z)`; `[0.0]` means `S(z) = z`.
    #[serde(default = "default_ar")]
    pub ar: Vec<f64>,
    #[serde(default = "default_variance")]
    pub noise_variance: f64,
}

fn default_ar() -> Vec<f64> {
    vec![0.0]
}

fn default_variance() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub a: String,
    pub b: String,
    /// Weight of `x_b` in node `a`'s equation.
    pub b_ab: f64,
    /// Weight of `x_a` in node `b`'s equation.
    pub b_ba: f64,
}

impl ModelFile {
    pub fn build(&self) -> Result<GenerativeModel> {
        let labels: Vec<String> = self.nodes.iter().map(|n| n.label.clone()).collect();
        let index = |label: &str| {
            labels
                .iter()
                .position(|l| l == label)
                .ok_or_else(|| Error::Model(format!("edge references unknown node {label:?}")))
        };
        let mut topology = UndirectedGraph::new(labels.len());
        let mut coupling = BTreeMap::new();
        for e in &self.edges {
            let (a, b) = (index(&e.a)?, index(&e.b)?);
            if !topology.add_edge(a, b)? {
                return Err(Error::Model(format!("duplicate edge {}-{}", e.a, e.b)));
            }
            coupling.insert((a, b), e.b_ab);
            coupling.insert((b, a), e.b_ba);
        }
        GenerativeModel::new(
            labels,
            topology,
            coupling,
            self.nodes.iter().map(|n| n.ar.clone()).collect(),
            self.nodes.iter().map(|n| n.noise_variance).collect(),
        )
    }
}

/// Simulates `length` samples after discarding `burn_in` samples. Output is
/// a deterministic function of `(model, length, seed, burn_in)`.
pub fn simulate_with_burn_in(
    model: &GenerativeModel,
    length: usize,
    seed: u64,
    burn_in: usize,
) -> Result<TimeSeriesPanel> {
    if length == 0 {
        return Err(Error::Config("trajectory length must be at least 1".into()));
    }
    let n = model.node_count();
    let orders: Vec<usize> = (0..n).map(|i| model.order(i)).collect();
    let ring = orders.iter().copied().max().unwrap_or(1) + 1;
    let sigma: Vec<f64> = (0..n).map(|i| model.noise_variance(i).sqrt()).collect();
    let nbrs: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            model
                .topology()
                .neighbors(i)
                .map(|j| (j, model.coupling(i, j)))
                .collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hist = vec![0.0; ring * n];
    let mut out = vec![Vec::with_capacity(length); n];
    let at = |t: usize, lag: usize| ((t - lag) % ring) * n;
    for t in 0..burn_in + length {
        let slot = (t % ring) * n;
        for i in 0..n {
            let noise: f64 = StandardNormal.sample(&mut rng);
            let mut v = sigma[i] * noise;
            for (k, &a) in model.self_dynamics(i).iter().enumerate() {
                if t > k {
                    v += a * hist[at(t, k + 1) + i];
                }
            }
            let m = orders[i];
            if t >= m {
                let base = at(t, m);
                for &(j, b) in &nbrs[i] {
                    v += b * hist[base + j];
                }
            }
            if !v.is_finite() {
                return Err(Error::Numerical(format!(
                    "simulation overflowed at t={t} on node {}",
                    model.labels()[i]
                )));
            }
            hist[slot + i] = v;
        }
        if t >= burn_in {
            for (i, ch) in out.iter_mut().enumerate() {
                ch.push(hist[slot + i]);
            }
        }
    }
    TimeSeriesPanel::new(out, model.labels().to_vec(), 1.0)
}

/// [`simulate_with_burn_in`] with [`DEFAULT_BURN_IN`].
pub fn simulate(model: &GenerativeModel, length: usize, seed: u64) -> Result<TimeSeriesPanel> {
    simulate_with_burn_in(model, length, seed, DEFAULT_BURN_IN)
}

/// `I - 𝒢(e^{jω})`.
fn return_difference(model: &GenerativeModel, omega: f64) -> DMatrix<Complex64> {
    let n = model.node_count();
    let mut m = DMatrix::identity(n, n);
    for (&(i, j), _) in model.couplings() {
        m[(i, j)] -= model.transfer(i, j, omega);
    }
    m
}

/// `Φ_xx = (I - 𝒢)^{-1} Φ_e (I - 𝒢)^{-*}` on every grid frequency.
pub fn analytic_psd(model: &GenerativeModel, grid: &FrequencyGrid) -> Result<SpectralMatrix> {
    let n = model.node_count();
    let mut values = Vec::with_capacity(grid.len());
    for (k, &omega) in grid.omegas().iter().enumerate() {
        let inv = return_difference(model, omega)
            .try_inverse()
            .ok_or(Error::Singular { omega, step: k })?;
        let noise = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(model.noise_psd(i, omega), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        values.push(&inv * noise * inv.adjoint());
    }
    SpectralMatrix::new(grid.clone(), values, model.labels().to_vec())
}

/// Inverse PSD assembled entry by entry from the tree structure:
///
/// * diagonal: `1/Φ_ei + Σ_{k∈N(i)} |𝒢_ki|² / Φ_ek`
/// * neighbours: `-𝒢_ij / Φ_ei - conj(𝒢_ji) / Φ_ej`
/// * common neighbour `k`: `conj(𝒢_ki) 𝒢_kj / Φ_ek`
/// * zero otherwise.
///
/// Requires a radial model (two distinct nodes share at most one neighbour).
pub fn analytic_inverse_psd(
    model: &GenerativeModel,
    grid: &FrequencyGrid,
) -> Result<SpectralMatrix> {
    if !model.is_radial() {
        return Err(Error::Model(
            "entrywise inverse PSD requires a tree topology".into(),
        ));
    }
    let n = model.node_count();
    let g = model.topology();
    let zero = Complex64::new(0.0, 0.0);
    let mut values = Vec::with_capacity(grid.len());
    for &omega in grid.omegas() {
        let inv_noise: Vec<f64> = (0..n).map(|i| 1.0 / model.noise_psd(i, omega)).collect();
        let mut m = DMatrix::from_element(n, n, zero);
        for i in 0..n {
            let mut diag = Complex64::new(inv_noise[i], 0.0);
            for k in g.neighbors(i) {
                diag += model.transfer(k, i, omega).norm_sqr() * inv_noise[k];
            }
            m[(i, i)] = diag;
            for j in g.neighbors(i) {
                m[(i, j)] = -model.transfer(i, j, omega) * inv_noise[i]
                    - model.transfer(j, i, omega).conj() * inv_noise[j];
            }
            for k in g.neighbors(i) {
                for j in g.neighbors(k) {
                    if j != i {
                        m[(i, j)] = model.transfer(k, i, omega).conj()
                            * model.transfer(k, j, omega)
                            * inv_noise[k];
                    }
                }
            }
        }
        values.push(m);
    }
    SpectralMatrix::new(grid.clone(), values, model.labels().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::default_labels;

    fn two_node(b12: f64, b21: f64) -> GenerativeModel {
        GenerativeModel::new(
            default_labels(2),
            UndirectedGraph::chain(2),
            BTreeMap::from([((0, 1), b12), ((1, 0), b21)]),
            vec![vec![0.0], vec![0.2]],
            vec![1.0, 2.0],
        )
        .unwrap()
    }

    #[test]
    fn validation_errors() {
        let ok = two_node(0.3, 0.4);
        assert!(ok.spectral_radius().unwrap() < 1.0);
        // one direction missing
        let missing = GenerativeModel::new(
            default_labels(2),
            UndirectedGraph::chain(2),
            BTreeMap::from([((0, 1), 0.3)]),
            vec![vec![0.0]; 2],
            vec![1.0; 2],
        );
        assert!(matches!(missing, Err(Error::Model(_))));
        let unstable = GenerativeModel::new(
            default_labels(2),
            UndirectedGraph::chain(2),
            BTreeMap::from([((0, 1), 1.5), ((1, 0), 1.5)]),
            vec![vec![0.0]; 2],
            vec![1.0; 2],
        );
        assert!(matches!(unstable, Err(Error::Unstable { .. })));
        let bad_noise = GenerativeModel::new(
            default_labels(2),
            UndirectedGraph::chain(2),
            BTreeMap::from([((0, 1), 0.1), ((1, 0), 0.1)]),
            vec![vec![0.0]; 2],
            vec![1.0, 0.0],
        );
        assert!(bad_noise.is_err());
    }

    #[test]
    fn companion_radius_matches_closed_form() {
        // x[t] = B x[t-1]: eigenvalues ±sqrt(b12 b21).
        let m = GenerativeModel::new(
            default_labels(2),
            UndirectedGraph::chain(2),
            BTreeMap::from([((0, 1), 0.5), ((1, 0), 0.32)]),
            vec![vec![0.0]; 2],
            vec![1.0; 2],
        )
        .unwrap();
        assert!((m.spectral_radius().unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn self_polynomial_evaluates_monic_form() {
        let m = two_node(0.3, 0.4);
        let w = 0.7;
        let z = Complex64::from_polar(1.0, w);
        assert!((m.self_polynomial(0, w) - z).norm() < 1e-14);
        assert!((m.self_polynomial(1, w) - (z - 0.2)).norm() < 1e-14);
    }

    #[test]
    fn simulation_is_reproducible() {
        let m = two_node(0.3, 0.4);
        let a = simulate_with_burn_in(&m, 500, 7, 100).unwrap();
        let b = simulate_with_burn_in(&m, 500, 7, 100).unwrap();
        let c = simulate_with_burn_in(&m, 500, 8, 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(simulate(&m, 0, 1).is_err());
    }

    #[test]
    fn model_file_round_trip() {
        let m = two_node(0.3, -0.4);
        let text = toml::to_string(&m.to_file_spec()).unwrap();
        let back: ModelFile = toml::from_str(&text).unwrap();
        assert_eq!(back.build().unwrap(), m);
    }
}
