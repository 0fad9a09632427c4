//! Stream corruption models (random delay, packet drop, noisy filtering) and
//! their spectral signatures `(h, d)`:
//!
//! ```text
//! Φ_ux = h Φ_xx,    Φ_uu = |h|² Φ_xx + d
//! ```

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, GenerativeModel};
use crate::panel::TimeSeriesPanel;
use crate::spectral::{self, FrequencyGrid, WelchParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CorruptionKind {
    /// `u[t] = x[t + ζ[t]]`, `ζ[t] = t1` with probability `p`, else `t2`,
    /// drawn independently per sample.
    RandomDelay { t1: i64, t2: i64, p: f64 },
    /// `u[t] = x[t]` with probability `p`, otherwise `u[t-1]`.
    PacketDrop { p: f64 },
    /// `u = L * x + ζ` with FIR `L` and white noise of the given variance.
    NoisyFilter { filter: Vec<f64>, noise_variance: f64 },
    None,
}

impl CorruptionKind {
    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| {
            if p > 0.0 && p <= 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("probability must be in (0, 1], got {p}")))
            }
        };
        match self {
            CorruptionKind::RandomDelay { t1, t2, p } => {
                prob(*p)?;
                if *t1 == 0 && *t2 == 0 {
                    return Err(Error::Config("random delay needs a nonzero shift".into()));
                }
                Ok(())
            }
            CorruptionKind::PacketDrop { p } => prob(*p),
            CorruptionKind::NoisyFilter {
                filter,
                noise_variance,
            } => {
                if filter.is_empty() || filter.iter().any(|c| !c.is_finite()) {
                    return Err(Error::Config("filter taps must be finite and nonempty".into()));
                }
                if !(*noise_variance >= 0.0 && noise_variance.is_finite()) {
                    return Err(Error::Config("filter noise variance must be >= 0".into()));
                }
                Ok(())
            }
            CorruptionKind::None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub node: usize,
    #[serde(flatten)]
    pub kind: CorruptionKind,
}

impl CorruptionSpec {
    pub fn new(node: usize, kind: CorruptionKind) -> Self {
        Self { node, kind }
    }

    /// True unless the kind is `None`.
    pub fn is_active(&self) -> bool {
        !matches!(self.kind, CorruptionKind::None)
    }
}

/// Samples of `h(ω)` and `d(ω)` on a frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionSignature {
    pub h: Vec<Complex64>,
    pub d: Vec<f64>,
}

impl CorruptionSignature {
    pub fn trivial(len: usize) -> Self {
        Self {
            h: vec![Complex64::new(1.0, 0.0); len],
            d: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }
}

fn check_specs(specs: &[CorruptionSpec], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for s in specs {
        if s.node >= n {
            return Err(Error::InvalidNode {
                index: s.node,
                node_count: n,
            });
        }
        if std::mem::replace(&mut seen[s.node], true) {
            return Err(Error::Config(format!("node {} has two corruption specs", s.node)));
        }
        s.kind.validate()?;
    }
    Ok(())
}

/// Random stream for `node`, independent across nodes for a fixed seed.
fn node_rng(seed: u64, node: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(node as u64 + 1);
    rng
}

/// Corrupts one channel.
pub fn corrupt_channel(x: &[f64], kind: &CorruptionKind, rng: &mut impl Rng) -> Vec<f64> {
    let len = x.len();
    match kind {
        CorruptionKind::None => x.to_vec(),
        CorruptionKind::RandomDelay { t1, t2, p } => {
            let last = len as i64 - 1;
            (0..len as i64)
                .map(|t| {
                    let shift = if rng.gen::<f64>() < *p { *t1 } else { *t2 };
                    // out-of-range reads clamp to the boundary sample
                    x[(t + shift).clamp(0, last) as usize]
                })
                .collect()
        }
        CorruptionKind::PacketDrop { p } => {
            let mut out = Vec::with_capacity(len);
            out.push(x[0]);
            for &xt in &x[1..] {
                let held = *out.last().unwrap_or(&xt);
                out.push(if rng.gen::<f64>() < *p { xt } else { held });
            }
            out
        }
        CorruptionKind::NoisyFilter {
            filter,
            noise_variance,
        } => {
            let sd = noise_variance.sqrt();
            (0..len)
                .map(|t| {
                    let filtered: f64 = filter
                        .iter()
                        .enumerate()
                        .take(t + 1)
                        .map(|(k, c)| c * x[t - k])
                        .sum();
                    let noise: f64 = StandardNormal.sample(rng);
                    filtered + sd * noise
                })
                .collect()
        }
    }
}

/// Applies `specs` in place; channels without a spec are untouched.
pub fn corrupt_in_place(panel: &mut TimeSeriesPanel, specs: &[CorruptionSpec], seed: u64) -> Result<()> {
    check_specs(specs, panel.channel_count())?;
    for spec in specs.iter().filter(|s| s.is_active()) {
        let mut rng = node_rng(seed, spec.node);
        let u = corrupt_channel(panel.channel(spec.node), &spec.kind, &mut rng);
        *panel.channel_mut(spec.node) = u;
    }
    Ok(())
}

/// Corrupted copy of `panel`.
pub fn apply_corruption(
    panel: &TimeSeriesPanel,
    specs: &[CorruptionSpec],
    seed: u64,
) -> Result<TimeSeriesPanel> {
    let mut out = panel.clone();
    corrupt_in_place(&mut out, specs, seed)?;
    Ok(out)
}

/// `h = Φ̂_ux / Φ̂_xx`, `d = max(Φ̂_uu - |h|² Φ̂_xx, 0)` from Welch estimates.
pub fn estimate_signature(
    clean: &[f64],
    corrupt: &[f64],
    params: &WelchParams,
) -> Result<(FrequencyGrid, CorruptionSignature)> {
    let labels = vec!["u".to_string(), "x".to_string()];
    let s = spectral::estimate_cpsd_channels(&[corrupt, clean], &labels, params)?;
    let peak = (0..s.grid().len())
        .map(|k| s.entry(k, 1, 1).re)
        .fold(0.0, f64::max);
    let floor = 1e-12 * peak.max(f64::MIN_POSITIVE);
    let mut h = Vec::with_capacity(s.grid().len());
    let mut d = Vec::with_capacity(s.grid().len());
    for k in 0..s.grid().len() {
        let pxx = s.entry(k, 1, 1).re;
        if pxx <= floor {
            return Err(Error::Numerical(format!(
                "clean autospectrum vanishes at omega={:.6}",
                s.grid().omegas()[k]
            )));
        }
        let gain = s.entry(k, 0, 1) / pxx;
        h.push(gain);
        d.push((s.entry(k, 0, 0).re - gain.norm_sqr() * pxx).max(0.0));
    }
    Ok((s.grid().clone(), CorruptionSignature { h, d }))
}

/// Autocovariance `R(0..=max_lag)` of node `v`'s clean stream, by
/// integrating the analytic autospectrum on a `points`-bin DFT grid.
pub fn autocovariance(
    model: &GenerativeModel,
    v: usize,
    max_lag: usize,
    points: usize,
) -> Result<Vec<f64>> {
    let grid = FrequencyGrid::dft(points)?;
    let psd = model::analytic_psd(model, &grid)?;
    let auto: Vec<f64> = (0..grid.len()).map(|k| psd.entry(k, v, v).re).collect();
    Ok((0..=max_lag)
        .map(|lag| {
            grid.omegas()
                .iter()
                .zip(&auto)
                .map(|(w, s)| s * (w * lag as f64).cos())
                .sum::<f64>()
                / points as f64
        })
        .collect())
}

const QUADRATURE_POINTS: usize = 8192;

/// Exact signature of `kind` applied to node `v` of `model`, on `grid`.
pub fn analytic_signature(
    kind: &CorruptionKind,
    model: &GenerativeModel,
    v: usize,
    grid: &FrequencyGrid,
) -> Result<CorruptionSignature> {
    kind.validate()?;
    let omegas = grid.omegas();
    match kind {
        CorruptionKind::None => Ok(CorruptionSignature::trivial(grid.len())),
        CorruptionKind::RandomDelay { t1, t2, p } => {
            let lag = (t1 - t2).unsigned_abs() as usize;
            let r = autocovariance(model, v, lag, QUADRATURE_POINTS)?;
            let d = 2.0 * p * (1.0 - p) * (r[0] - r[lag]);
            let h = omegas
                .iter()
                .map(|&w| {
                    *p * Complex64::from_polar(1.0, w * *t1 as f64)
                        + (1.0 - p) * Complex64::from_polar(1.0, w * *t2 as f64)
                })
                .collect();
            Ok(CorruptionSignature {
                h,
                d: vec![d.max(0.0); grid.len()],
            })
        }
        CorruptionKind::NoisyFilter {
            filter,
            noise_variance,
        } => Ok(CorruptionSignature {
            h: omegas.iter().map(|&w| fir_response(filter, w)).collect(),
            d: vec![*noise_variance; grid.len()],
        }),
        CorruptionKind::PacketDrop { p } => packet_drop_signature(*p, model, v, grid),
    }
}

/// `Σ_k L_k e^{-jωk}`.
pub fn fir_response(filter: &[f64], omega: f64) -> Complex64 {
    filter
        .iter()
        .enumerate()
        .map(|(k, &c)| c * Complex64::from_polar(1.0, -omega * k as f64))
        .sum()
}

/// Packet drops hold the last received sample, so `u[t] = x[t - A_t]` with
/// the age `A_t` geometric. Consecutive ages are coupled: with probability
/// `(1-p)^k` nothing arrives in `(t, t+k]` and `u[t+k] = u[t]`; otherwise the
/// later age is a fresh geometric variable truncated below `k`.
fn packet_drop_signature(
    p: f64,
    model: &GenerativeModel,
    v: usize,
    grid: &FrequencyGrid,
) -> Result<CorruptionSignature> {
    let q = 1.0 - p;
    let max_lag = 2048usize;
    let ages = if q == 0.0 {
        1
    } else {
        ((1e-15f64.ln() / q.ln()).ceil() as usize).clamp(1, 4 * max_lag)
    };
    let r = autocovariance(model, v, max_lag + ages + 1, QUADRATURE_POINTS)?;
    let r_at = |m: i64| r.get(m.unsigned_abs() as usize).copied().unwrap_or(0.0);
    // tail(m) = Σ_a p q^a R(m + a)
    let tail: Vec<f64> = (0..=max_lag as i64)
        .map(|m| (0..ages).map(|a| p * q.powi(a as i32) * r_at(m + a as i64)).sum())
        .collect();
    let mut ruu = vec![r[0]; max_lag + 1];
    for (k, slot) in ruu.iter_mut().enumerate().skip(1) {
        let mut acc = q.powi(k as i32) * r[0];
        for a in 0..k {
            let w = p * q.powi(a as i32);
            if w < 1e-18 {
                break;
            }
            acc += w * tail[k - a];
        }
        *slot = acc;
    }
    let psd = model::analytic_psd(model, grid)?;
    let mut h = Vec::with_capacity(grid.len());
    let mut d = Vec::with_capacity(grid.len());
    for (k, &w) in grid.omegas().iter().enumerate() {
        let gain = p / (Complex64::new(1.0, 0.0) - q * Complex64::from_polar(1.0, -w));
        let puu = ruu[0]
            + 2.0
                * ruu[1..]
                    .iter()
                    .enumerate()
                    .map(|(m, c)| c * (w * (m + 1) as f64).cos())
                    .sum::<f64>();
        h.push(gain);
        d.push((puu - gain.norm_sqr() * psd.entry(k, v, v).re).max(0.0));
    }
    Ok(CorruptionSignature { h, d })
}
