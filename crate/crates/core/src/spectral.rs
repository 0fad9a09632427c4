//! Frequency grids, per-frequency complex matrices, Welch cross-spectra and
//! the corrupted-spectrum oracles (direct and rank-one update chain).

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::corruption::CorruptionSignature;
use crate::error::{Error, Result};
use crate::model::{self, GenerativeModel};
use crate::panel::TimeSeriesPanel;

/// Condition number above which an inverse is considered unusable.
pub const CONDITION_CAP: f64 = 1e12;

/// Strictly increasing frequencies in `(-π, π]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    omegas: Vec<f64>,
    symmetric: bool,
}

impl FrequencyGrid {
    pub fn new(omegas: Vec<f64>) -> Result<Self> {
        if omegas.len() < 8 {
            return Err(Error::Config(format!(
                "a frequency grid needs at least 8 points, got {}",
                omegas.len()
            )));
        }
        if omegas.iter().any(|&w| !(w > -PI && w <= PI)) {
            return Err(Error::Config("grid frequencies must lie in (-pi, pi]".into()));
        }
        if omegas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("grid frequencies must be strictly increasing".into()));
        }
        let tol = 1e-12;
        let symmetric = omegas.iter().all(|&w| {
            (w - PI).abs() < tol || omegas.iter().any(|&v| (v + w).abs() < tol)
        });
        Ok(Self { omegas, symmetric })
    }

    /// The `n` DFT bin frequencies `2πk/n`, wrapped into `(-π, π]` and sorted.
    pub fn dft(n: usize) -> Result<Self> {
        let mut omegas: Vec<f64> = (0..n)
            .map(|k| {
                let w = 2.0 * PI * k as f64 / n as f64;
                if k > n / 2 {
                    w - 2.0 * PI
                } else {
                    w
                }
            })
            .collect();
        omegas.sort_by(f64::total_cmp);
        Self::new(omegas)
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Index of `-ω_k`, if present.
    pub fn mirror(&self, k: usize) -> Option<usize> {
        let target = -self.omegas[k];
        self.omegas.iter().position(|&w| (w - target).abs() < 1e-12)
    }

    /// Smallest gap between consecutive frequencies.
    pub fn spacing(&self) -> f64 {
        self.omegas
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether `ω_k` lies within `bins` grid spacings of `0` or `±π`.
    pub fn near_band_edge(&self, k: usize, bins: usize) -> bool {
        let reach = bins as f64 * self.spacing() + 1e-12;
        let w = self.omegas[k].abs();
        w <= reach || PI - w <= reach
    }
}

/// One complex `N×N` matrix per grid frequency, with a per-frequency
/// validity flag. Invalid frequencies (singular inverses, vanishing
/// corruption gains) are skipped by every downstream test.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMatrix {
    grid: FrequencyGrid,
    values: Vec<DMatrix<Complex64>>,
    labels: Vec<String>,
    valid: Vec<bool>,
}

impl SpectralMatrix {
    pub fn new(
        grid: FrequencyGrid,
        values: Vec<DMatrix<Complex64>>,
        labels: Vec<String>,
    ) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Data(format!(
                "{} matrices for a grid of {} frequencies",
                values.len(),
                grid.len()
            )));
        }
        let n = labels.len();
        if values.iter().any(|m| m.nrows() != n || m.ncols() != n) {
            return Err(Error::Data(format!("every matrix must be {n}x{n}")));
        }
        let valid = vec![true; grid.len()];
        Ok(Self {
            grid,
            values,
            labels,
            valid,
        })
    }

    pub fn with_validity(mut self, valid: Vec<bool>) -> Result<Self> {
        if valid.len() != self.grid.len() {
            return Err(Error::Data("validity mask length mismatch".into()));
        }
        self.valid = valid;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn values(&self) -> &[DMatrix<Complex64>] {
        &self.values
    }

    pub fn at(&self, k: usize) -> &DMatrix<Complex64> {
        &self.values[k]
    }

    pub fn entry(&self, k: usize, i: usize, j: usize) -> Complex64 {
        self.values[k][(i, j)]
    }

    pub fn is_valid(&self, k: usize) -> bool {
        self.valid[k]
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    /// Frequencies flagged invalid.
    pub fn invalid_frequencies(&self) -> Vec<f64> {
        self.valid
            .iter()
            .zip(self.grid.omegas())
            .filter_map(|(&v, &w)| (!v).then_some(w))
            .collect()
    }

    /// Series of entry `(i, j)` over the grid.
    pub fn series(&self, i: usize, j: usize) -> Vec<Complex64> {
        self.values.iter().map(|m| m[(i, j)]).collect()
    }

    /// Principal submatrix on `keep` (in that order).
    pub fn submatrix(&self, keep: &[usize]) -> Result<Self> {
        if let Some(&bad) = keep.iter().find(|&&i| i >= self.dim()) {
            return Err(Error::InvalidNode {
                index: bad,
                node_count: self.dim(),
            });
        }
        let values = self
            .values
            .iter()
            .map(|m| DMatrix::from_fn(keep.len(), keep.len(), |a, b| m[(keep[a], keep[b])]))
            .collect();
        let labels = keep.iter().map(|&i| self.labels[i].clone()).collect();
        Self::new(self.grid.clone(), values, labels)?.with_validity(self.valid.clone())
    }

    /// Largest per-frequency `‖M - M*‖_F / ‖M‖_F` over valid frequencies.
    pub fn hermitian_defect(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.valid)
            .filter(|(_, &v)| v)
            .map(|(m, _)| {
                let norm = m.norm();
                if norm == 0.0 {
                    0.0
                } else {
                    (m - m.adjoint()).norm() / norm
                }
            })
            .fold(0.0, f64::max)
    }

    /// Largest per-frequency relative Frobenius distance to `other`.
    pub fn max_relative_error(&self, other: &SpectralMatrix) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .enumerate()
            .filter(|(k, _)| self.valid[*k] && other.valid[*k])
            .map(|(_, (a, b))| {
                let scale = b.norm().max(f64::MIN_POSITIVE);
                (a - b).norm() / scale
            })
            .fold(0.0, f64::max)
    }

    /// Mean over valid frequencies of the relative Frobenius distance.
    pub fn mean_relative_error(&self, other: &SpectralMatrix) -> f64 {
        let errs: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .enumerate()
            .filter(|(k, _)| self.valid[*k] && other.valid[*k])
            .map(|(_, (a, b))| (a - b).norm() / b.norm().max(f64::MIN_POSITIVE))
            .collect();
        errs.iter().sum::<f64>() / errs.len().max(1) as f64
    }

    /// Median real part of the diagonal over all entries and frequencies.
    pub fn median_diagonal(&self) -> f64 {
        let mut d: Vec<f64> = self
            .values
            .iter()
            .flat_map(|m| (0..m.nrows()).map(move |i| m[(i, i)].re))
            .collect();
        d.sort_by(f64::total_cmp);
        d.get(d.len() / 2).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Hann,
    Rectangular,
}

impl Window {
    fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            // periodic Hann
            Window::Hann => (0..len)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
                .collect(),
            Window::Rectangular => vec![1.0; len],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WelchParams {
    pub segment_length: usize,
    pub overlap_fraction: f64,
    pub window: Window,
}

impl Default for WelchParams {
    fn default() -> Self {
        Self {
            segment_length: 1024,
            overlap_fraction: 0.5,
            window: Window::Hann,
        }
    }
}

impl WelchParams {
    pub fn step(&self) -> usize {
        let overlap = (self.segment_length as f64 * self.overlap_fraction).round() as usize;
        (self.segment_length - overlap.min(self.segment_length - 1)).max(1)
    }

    pub fn segment_count(&self, len: usize) -> usize {
        if len < self.segment_length {
            0
        } else {
            (len - self.segment_length) / self.step() + 1
        }
    }

    /// Shortest series that yields the minimum of 8 segments.
    pub fn min_length(&self) -> usize {
        self.segment_length + 7 * self.step()
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        if !self.segment_length.is_power_of_two() || self.segment_length < 8 {
            return Err(Error::Config(format!(
                "segment length must be a power of two >= 8, got {}",
                self.segment_length
            )));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(Error::Config(format!(
                "overlap fraction must be in [0, 1), got {}",
                self.overlap_fraction
            )));
        }
        if len < self.min_length() {
            return Err(Error::Data(format!(
                "series of length {len} gives {} Welch segments; at least 8 are needed ({} samples)",
                self.segment_count(len),
                self.min_length()
            )));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::dft(self.segment_length)
    }
}

/// Grid index of DFT bin `k` for a segment of length `n` (matches
/// [`FrequencyGrid::dft`]).
fn grid_index(k: usize, n: usize) -> usize {
    if k > n / 2 {
        k - (n / 2 + 1)
    } else {
        k + (n - n / 2 - 1)
    }
}

/// Welch cross-spectral estimate of every channel pair.
///
/// Entry `(i, j)` estimates `Σ_k R_ij(k) e^{-jωk}` with
/// `R_ij(k) = E[x_i[t+k] x_j[t]]`, i.e. the average of `X_i conj(X_j)`
/// normalised by the window energy.
pub fn estimate_cpsd(panel: &TimeSeriesPanel, params: &WelchParams) -> Result<SpectralMatrix> {
    let refs: Vec<&[f64]> = panel.channels().iter().map(Vec::as_slice).collect();
    estimate_cpsd_channels(&refs, panel.labels(), params)
}

/// [`estimate_cpsd`] over borrowed channels.
pub fn estimate_cpsd_channels(
    channels: &[&[f64]],
    labels: &[String],
    params: &WelchParams,
) -> Result<SpectralMatrix> {
    let n = channels.len();
    if n == 0 || labels.len() != n {
        return Err(Error::Data("channel/label count mismatch".into()));
    }
    let len = channels[0].len();
    if channels.iter().any(|c| c.len() != len) {
        return Err(Error::Data("channels have different lengths".into()));
    }
    if channels.iter().any(|c| c.iter().any(|v| !v.is_finite())) {
        return Err(Error::Data("non-finite sample in cross-spectrum input".into()));
    }
    params.validate(len)?;

    let seg = params.segment_length;
    let half = seg / 2;
    let window = params.window.coefficients(seg);
    let energy: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(seg);
    let segments = params.segment_count(len);

    // acc[(k * n + i) * n + j] for bins k = 0..=half, i <= j
    let mut acc = vec![Complex64::new(0.0, 0.0); (half + 1) * n * n];
    let mut spectra = vec![Complex64::new(0.0, 0.0); n * seg];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for s in 0..segments {
        let start = s * params.step();
        for (i, ch) in channels.iter().enumerate() {
            let buf = &mut spectra[i * seg..(i + 1) * seg];
            for (b, (&x, &w)) in buf.iter_mut().zip(ch[start..start + seg].iter().zip(&window)) {
                *b = Complex64::new(x * w, 0.0);
            }
            fft.process_with_scratch(buf, &mut scratch);
        }
        for k in 0..=half {
            let base = k * n * n;
            for i in 0..n {
                let xi = spectra[i * seg + k];
                for j in i..n {
                    acc[base + i * n + j] += xi * spectra[j * seg + k].conj();
                }
            }
        }
    }

    let scale = 1.0 / (segments as f64 * energy);
    let grid = FrequencyGrid::dft(seg)?;
    let mut values = vec![DMatrix::from_element(n, n, Complex64::new(0.0, 0.0)); seg];
    for k in 0..=half {
        let mut m = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        for i in 0..n {
            for j in i..n {
                let v = acc[k * n * n + i * n + j] * scale;
                if i == j {
                    m[(i, i)] = Complex64::new(v.re, 0.0);
                } else {
                    m[(i, j)] = v;
                    m[(j, i)] = v.conj();
                }
            }
        }
        if k != 0 && k != half {
            // real data: the negative bin is the conjugate
            values[grid_index(seg - k, seg)] = m.map(|z| z.conj());
        }
        values[grid_index(k, seg)] = m;
    }
    SpectralMatrix::new(grid, values, labels.to_vec())
}

/// Per-frequency inverse of `M + ridge·I`, symmetrised to be exactly
/// Hermitian. Frequencies whose matrix is singular or has condition number
/// above [`CONDITION_CAP`] are marked invalid (their values are zero).
pub fn invert_spectrum(s: &SpectralMatrix, ridge: f64) -> Result<SpectralMatrix> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::Config(format!("ridge must be nonnegative, got {ridge}")));
    }
    let n = s.dim();
    let eye = DMatrix::<Complex64>::identity(n, n);
    let mut values = Vec::with_capacity(s.grid.len());
    let mut valid = s.valid.clone();
    for (k, m) in s.values.iter().enumerate() {
        let shifted = m + &eye * Complex64::new(ridge, 0.0);
        let inverse = if valid[k] && well_conditioned(&shifted) {
            shifted.try_inverse()
        } else {
            None
        };
        match inverse {
            Some(inv) => values.push((&inv + inv.adjoint()) * Complex64::new(0.5, 0.0)),
            None => {
                valid[k] = false;
                values.push(DMatrix::from_element(n, n, Complex64::new(0.0, 0.0)));
            }
        }
    }
    SpectralMatrix::new(s.grid.clone(), values, s.labels.clone())?.with_validity(valid)
}

fn well_conditioned(m: &DMatrix<Complex64>) -> bool {
    let sv = m.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    min > 0.0 && max.is_finite() && max / min <= CONDITION_CAP
}

/// Ridge of `1e-10 ×` the median diagonal, for ill-conditioned estimates.
pub fn suggested_ridge(s: &SpectralMatrix) -> f64 {
    1e-10 * s.median_diagonal().abs()
}

/// Corruption signatures keyed by node; absent nodes are uncorrupted
/// (`h = 1`, `d = 0`).
pub type SignatureMap = BTreeMap<usize, CorruptionSignature>;

fn check_signatures(signatures: &SignatureMap, grid: &FrequencyGrid, n: usize) -> Result<()> {
    for (&v, sig) in signatures {
        if v >= n {
            return Err(Error::InvalidNode {
                index: v,
                node_count: n,
            });
        }
        if sig.len() != grid.len() {
            return Err(Error::Data(format!(
                "signature of node {v} has {} samples for a {}-point grid",
                sig.len(),
                grid.len()
            )));
        }
    }
    Ok(())
}

/// `H Φ H* + Σ_v e_v d_v e_vᵀ`.
pub fn corrupt_spectrum(clean: &SpectralMatrix, signatures: &SignatureMap) -> Result<SpectralMatrix> {
    let n = clean.dim();
    check_signatures(signatures, &clean.grid, n)?;
    let values = clean
        .values
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let h: Vec<Complex64> = (0..n)
                .map(|i| signatures.get(&i).map_or(Complex64::new(1.0, 0.0), |s| s.h[k]))
                .collect();
            let mut out = DMatrix::from_fn(n, n, |i, j| h[i] * m[(i, j)] * h[j].conj());
            for (&v, sig) in signatures {
                out[(v, v)] += sig.d[k];
            }
            out
        })
        .collect();
    SpectralMatrix::new(clean.grid.clone(), values, clean.labels.clone())?
        .with_validity(clean.valid.clone())
}

/// Analytic PSD of the corrupted streams of `model`.
pub fn analytic_corrupted_psd(
    model: &GenerativeModel,
    signatures: &SignatureMap,
    grid: &FrequencyGrid,
) -> Result<SpectralMatrix> {
    corrupt_spectrum(&model::analytic_psd(model, grid)?, signatures)
}

/// A frequency dropped from the rank-one update chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainExclusion {
    pub omega: f64,
    /// 0 for the initial scaling, `k` for the `k`-th update.
    pub step: usize,
    pub reason: String,
}

/// Inverses `Ψ_0^{-1}, …, Ψ_n^{-1}`; the last one is the inverse of the
/// corrupted PSD.
#[derive(Debug, Clone)]
pub struct WoodburyChain {
    pub order: Vec<usize>,
    pub steps: Vec<SpectralMatrix>,
    pub exclusions: Vec<ChainExclusion>,
}

impl WoodburyChain {
    pub fn inverse(&self) -> &SpectralMatrix {
        self.steps.last().expect("chain has at least the initial step")
    }

    /// `Ψ_k^{-1}`.
    pub fn step(&self, k: usize) -> &SpectralMatrix {
        &self.steps[k]
    }
}

/// Inverse of the corrupted PSD built from the clean inverse without any
/// dense inversion.
///
/// `Ψ_0^{-1}(i,j) = Φ^{-1}(i,j) / (conj(h_i) h_j)`, then for each corrupt
/// node `v` in `order`:
///
/// ```text
/// Ψ_{k+1}^{-1} = Ψ_k^{-1} - d_v Ψ_k^{-1} e_v e_vᵀ Ψ_k^{-1} / (1 + d_v Ψ_k^{-1}(v,v))
/// ```
///
/// which is the usual `Γ = Ψ^{-1} e e' Ψ^{-1} / Δ`, `Δ = 1/d + Ψ^{-1}(v,v)`
/// update written so that `d = 0` is a no-op instead of a division by zero.
pub fn woodbury_chain(
    clean_inverse: &SpectralMatrix,
    signatures: &SignatureMap,
    order: &[usize],
) -> Result<WoodburyChain> {
    let n = clean_inverse.dim();
    check_signatures(signatures, &clean_inverse.grid, n)?;
    let mut sorted_order = order.to_vec();
    sorted_order.sort_unstable();
    let corrupt: Vec<usize> = signatures.keys().copied().collect();
    if sorted_order != corrupt {
        return Err(Error::Config(
            "update order must list every corrupt node exactly once".into(),
        ));
    }
    let grid = &clean_inverse.grid;
    let mut valid = clean_inverse.valid.clone();
    let mut exclusions = Vec::new();
    let one = Complex64::new(1.0, 0.0);
    let gain = |i: usize, k: usize| signatures.get(&i).map_or(one, |s| s.h[k]);

    let mut current: Vec<DMatrix<Complex64>> = Vec::with_capacity(grid.len());
    for (k, m) in clean_inverse.values.iter().enumerate() {
        let h: Vec<Complex64> = (0..n).map(|i| gain(i, k)).collect();
        if valid[k] && h.iter().any(|z| z.norm() < 1e-12) {
            valid[k] = false;
            exclusions.push(ChainExclusion {
                omega: grid.omegas[k],
                step: 0,
                reason: "corruption gain vanishes".into(),
            });
        }
        current.push(if valid[k] {
            DMatrix::from_fn(n, n, |i, j| m[(i, j)] / (h[i].conj() * h[j]))
        } else {
            DMatrix::from_element(n, n, Complex64::new(0.0, 0.0))
        });
    }
    let snapshot = |values: &[DMatrix<Complex64>], valid: &[bool]| {
        SpectralMatrix::new(grid.clone(), values.to_vec(), clean_inverse.labels.clone())
            .and_then(|s| s.with_validity(valid.to_vec()))
    };
    let mut steps = vec![snapshot(&current, &valid)?];

    for (step, &v) in order.iter().enumerate() {
        let sig = &signatures[&v];
        for (k, m) in current.iter_mut().enumerate() {
            if !valid[k] {
                continue;
            }
            let d = sig.d[k];
            if d == 0.0 {
                continue;
            }
            let denom = one + d * m[(v, v)];
            if denom.norm() < f64::EPSILON * (1.0 + (d * m[(v, v)]).norm()) {
                valid[k] = false;
                exclusions.push(ChainExclusion {
                    omega: grid.omegas[k],
                    step: step + 1,
                    reason: format!("update denominator vanishes for node {v}"),
                });
                continue;
            }
            let col = m.column(v).into_owned();
            let row = m.row(v).into_owned();
            *m -= (&col * &row) * (Complex64::new(d, 0.0) / denom);
        }
        steps.push(snapshot(&current, &valid)?);
    }
    Ok(WoodburyChain {
        order: order.to_vec(),
        steps,
        exclusions,
    })
}

/// [`woodbury_chain`] on the analytic clean inverse, updating corrupt nodes
/// in ascending order.
pub fn woodbury_chain_inverse(
    model: &GenerativeModel,
    signatures: &SignatureMap,
    grid: &FrequencyGrid,
) -> Result<WoodburyChain> {
    let clean = model::analytic_inverse_psd(model, grid)?;
    let order: Vec<usize> = signatures.keys().copied().collect();
    woodbury_chain(&clean, signatures, &order)
}

/// Inverse of the principal submatrix of `psd` on `observed`: the inverse
/// PSD of the observed streams with the others marginalised out.
pub fn marginal_inverse_psd(
    psd: &SpectralMatrix,
    observed: &[usize],
    ridge: f64,
) -> Result<SpectralMatrix> {
    if observed.len() < 2 {
        return Err(Error::Config(format!(
            "marginalisation needs at least 2 observed nodes, got {}",
            observed.len()
        )));
    }
    invert_spectrum(&psd.submatrix(observed)?, ridge)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::default_labels;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn dft_grid_layout() {
        let g = FrequencyGrid::dft(16).unwrap();
        assert_eq!(g.len(), 16);
        assert!(g.is_symmetric());
        assert!((g.omegas()[15] - PI).abs() < 1e-15);
        assert!((g.omegas()[7]).abs() < 1e-15);
        for k in 0..16 {
            let w = 2.0 * PI * k as f64 / 16.0;
            let w = if k > 8 { w - 2.0 * PI } else { w };
            assert!((g.omegas()[grid_index(k, 16)] - w).abs() < 1e-12);
        }
        assert!(FrequencyGrid::dft(4).is_err());
        assert!(FrequencyGrid::new(vec![0.0, 0.1, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).is_err());
        let near = g.near_band_edge(7, 2) && g.near_band_edge(15, 2) && g.near_band_edge(0, 2);
        assert!(near);
        assert!(!g.near_band_edge(11, 2));
    }

    #[test]
    fn welch_segment_arithmetic() {
        let p = WelchParams {
            segment_length: 256,
            ..Default::default()
        };
        assert_eq!(p.step(), 128);
        assert_eq!(p.segment_count(1024), 7);
        assert!(p.validate(1024).is_err());
        assert!(p.validate(p.min_length()).is_ok());
        let bad = WelchParams {
            segment_length: 100,
            ..Default::default()
        };
        assert!(bad.validate(10_000).is_err());
    }

    #[test]
    fn white_noise_has_flat_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sd = [1.0, 2.0];
        let channels: Vec<Vec<f64>> = sd
            .iter()
            .map(|s| {
                (0..200_000)
                    .map(|_| s * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                    .collect()
            })
            .collect();
        let panel = TimeSeriesPanel::new(channels, default_labels(2), 1.0).unwrap();
        let params = WelchParams {
            segment_length: 64,
            ..Default::default()
        };
        let s = estimate_cpsd(&panel, &params).unwrap();
        assert_eq!(s.hermitian_defect(), 0.0);
        for k in 0..s.grid().len() {
            assert!((s.entry(k, 0, 0).re - 1.0).abs() < 0.08);
            assert!((s.entry(k, 1, 1).re - 4.0).abs() < 0.3);
            assert!(s.entry(k, 0, 1).norm() < 0.15);
            assert!(s.entry(k, 0, 0).re >= 0.0 && s.entry(k, 0, 0).im == 0.0);
        }
        let mirror = s.grid().mirror(3).unwrap();
        assert_eq!(s.at(3).map(|z| z.conj()), *s.at(mirror));
    }

    #[test]
    fn inversion_basics() {
        let grid = FrequencyGrid::dft(8).unwrap();
        let eye = vec![DMatrix::<Complex64>::identity(3, 3); 8];
        let s = SpectralMatrix::new(grid.clone(), eye.clone(), default_labels(3)).unwrap();
        assert_eq!(invert_spectrum(&s, 0.0).unwrap().values(), &eye[..]);

        let diag: Vec<_> = (0..8)
            .map(|k| {
                DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                    Complex64::new(2.0 + k as f64, 0.0),
                    Complex64::new(4.0, 0.0),
                ]))
            })
            .collect();
        let s = SpectralMatrix::new(grid.clone(), diag, default_labels(2)).unwrap();
        let inv = invert_spectrum(&s, 0.0).unwrap();
        for k in 0..8 {
            assert!((inv.entry(k, 0, 0).re - 1.0 / (2.0 + k as f64)).abs() < 1e-15);
            assert_eq!(inv.entry(k, 0, 1), Complex64::new(0.0, 0.0));
        }

        let singular = vec![DMatrix::from_element(2, 2, Complex64::new(1.0, 0.0)); 8];
        let s = SpectralMatrix::new(grid, singular, default_labels(2)).unwrap();
        let inv = invert_spectrum(&s, 0.0).unwrap();
        assert_eq!(inv.invalid_frequencies().len(), 8);
        assert!(invert_spectrum(&s, 1e-3).unwrap().invalid_frequencies().is_empty());
        assert!(invert_spectrum(&s, -1.0).is_err());
    }
}
