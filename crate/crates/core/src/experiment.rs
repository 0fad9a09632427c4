//! Reproducible runs: configuration, the seven-node reference study,
//! random instance generation and sweeps.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corruption::{self, CorruptionKind, CorruptionSpec};
use crate::detection::{self, DetectionReport, DiagnosticKind, EdgeDecisionParams};
use crate::error::{Error, Result};
use crate::graph::{self, edge, NodeSet, UndirectedGraph};
use crate::model::{self, EdgeSpec, GenerativeModel, ModelFile, NodeSpec, DEFAULT_BURN_IN};
use crate::panel::{default_labels, TimeSeriesPanel};
use crate::reconstruction::{self, TopologyEstimate};
use crate::spectral::{self, FrequencyGrid, SignatureMap, SpectralMatrix, WelchParams};

/// Output formats selectable on the command line and in configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Bin,
    Json,
    Dot,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "bin" => Ok(Format::Bin),
            "json" => Ok(Format::Json),
            "dot" => Ok(Format::Dot),
            _ => Err(Error::Config(format!(
                "unknown format {s:?} (expected csv, bin, json or dot)"
            ))),
        }
    }
}

/// A corruption entry in a config file; the node is given by label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionEntry {
    pub node: String,
    #[serde(flatten)]
    pub kind: CorruptionKind,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub formats: Vec<Format>,
}

fn default_length() -> usize {
    1_000_000
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

fn default_grid_points() -> usize {
    1024
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Inline model; exclusive with `model_path`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelFile>,
    /// Model file, relative to the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_path: Option<PathBuf>,
    #[serde(default)]
    pub corruption: Vec<CorruptionEntry>,
    #[serde(default = "default_length")]
    pub trajectory_length: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    /// Use exact spectra on a `grid_points` DFT grid instead of simulating.
    #[serde(default)]
    pub analytic: bool,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default)]
    pub welch: WelchParams,
    /// Defaults to [`EdgeDecisionParams::default`] for estimated spectra and
    /// [`EdgeDecisionParams::exact`] for analytic ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<EdgeDecisionParams>,
    #[serde(default)]
    pub ridge: f64,
    #[serde(default)]
    pub outputs: OutputConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = if crate::io::has_extension(path, "json") {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            Self::from_toml_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn decision(&self) -> EdgeDecisionParams {
        self.decision.unwrap_or(if self.analytic {
            EdgeDecisionParams::exact()
        } else {
            EdgeDecisionParams::default()
        })
    }

    /// Path of the model file after resolving against the config directory.
    pub fn resolved_model_path(&self) -> Option<PathBuf> {
        self.model_path.as_ref().map(|p| {
            if p.is_absolute() {
                p.clone()
            } else {
                self.base_dir.join(p)
            }
        })
    }

    pub fn build_model(&self) -> Result<GenerativeModel> {
        match (&self.model, self.resolved_model_path()) {
            (Some(m), None) => m.build(),
            (None, Some(path)) => {
                if !path.exists() {
                    return Err(Error::Config(format!(
                        "model file {} does not exist",
                        path.display()
                    )));
                }
                GenerativeModel::from_file(&path)
            }
            (Some(_), Some(_)) => Err(Error::Config(
                "give either an inline model or model_path, not both".into(),
            )),
            (None, None) => Err(Error::Config("config has no model".into())),
        }
    }

    pub fn corruption_specs(&self, labels: &[String]) -> Result<Vec<CorruptionSpec>> {
        self.corruption
            .iter()
            .map(|c| {
                let node = labels.iter().position(|l| *l == c.node).ok_or_else(|| {
                    Error::Config(format!("corruption refers to unknown node {:?}", c.node))
                })?;
                c.kind.validate()?;
                Ok(CorruptionSpec::new(node, c.kind.clone()))
            })
            .collect()
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<GenerativeModel> {
        let model = self.build_model()?;
        self.corruption_specs(model.labels())?;
        self.decision().validate()?;
        if self.analytic {
            FrequencyGrid::dft(self.grid_points)?;
        } else {
            self.welch.validate(self.trajectory_length).map_err(|e| match e {
                Error::Data(m) => Error::Config(m),
                other => other,
            })?;
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::Config("ridge must be nonnegative".into()));
        }
        Ok(model)
    }
}

/// Seed for the corruption randomness derived from the run seed.
pub fn corruption_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

/// The seven-node chain of the reference study, `S_i(z) = z`, unit noise.
pub fn reference_model() -> GenerativeModel {
    reference_model_file()
        .build()
        .expect("reference model is valid")
}

pub fn reference_model_file() -> ModelFile {
    let b = [
        (0.5, 0.36),
        (0.6, 0.95),
        (-1.7, 0.51),
        (0.55, 1.5),
        (0.6, 0.7),
        (0.5, 0.65),
    ];
    let labels = default_labels(7);
    ModelFile {
        nodes: labels
            .iter()
            .map(|l| NodeSpec {
                label: l.clone(),
                ar: vec![0.0],
                noise_variance: 1.0,
            })
            .collect(),
        edges: b
            .iter()
            .enumerate()
            .map(|(k, &(b_ab, b_ba))| EdgeSpec {
                a: labels[k].clone(),
                b: labels[k + 1].clone(),
                b_ab,
                b_ba,
            })
            .collect(),
    }
}

/// Node 4 delayed by two samples with probability 0.7.
pub fn reference_corruption() -> Vec<CorruptionSpec> {
    vec![CorruptionSpec::new(
        3,
        CorruptionKind::RandomDelay {
            t1: -2,
            t2: 0,
            p: 0.7,
        },
    )]
}

/// Reference study config at trajectory length `length`.
pub fn reference_config(length: usize) -> ExperimentConfig {
    let model = reference_model_file();
    let corruption = reference_corruption()
        .into_iter()
        .map(|s| CorruptionEntry {
            node: model.nodes[s.node].label.clone(),
            kind: s.kind,
        })
        .collect();
    ExperimentConfig {
        model: Some(model),
        model_path: None,
        corruption,
        trajectory_length: length,
        seed: 2020,
        burn_in: DEFAULT_BURN_IN,
        analytic: false,
        grid_points: default_grid_points(),
        welch: WelchParams::default(),
        decision: None,
        ridge: 0.0,
        outputs: OutputConfig::default(),
        base_dir: PathBuf::new(),
    }
}

/// Exact signatures of `specs` on `grid`.
pub fn analytic_signatures(
    model: &GenerativeModel,
    specs: &[CorruptionSpec],
    grid: &FrequencyGrid,
) -> Result<SignatureMap> {
    let mut out = SignatureMap::new();
    for s in specs.iter().filter(|s| s.is_active()) {
        model.topology().check_node(s.node)?;
        out.insert(
            s.node,
            corruption::analytic_signature(&s.kind, model, s.node, grid)?,
        );
    }
    Ok(out)
}

/// Exact PSD of the corrupted streams.
pub fn analytic_corrupted_psd(
    model: &GenerativeModel,
    specs: &[CorruptionSpec],
    grid: &FrequencyGrid,
) -> Result<SpectralMatrix> {
    spectral::analytic_corrupted_psd(model, &analytic_signatures(model, specs, grid)?, grid)
}

/// Simulated and corrupted streams.
pub fn simulate_corrupted(
    model: &GenerativeModel,
    specs: &[CorruptionSpec],
    length: usize,
    seed: u64,
    burn_in: usize,
) -> Result<TimeSeriesPanel> {
    let mut panel = model::simulate_with_burn_in(model, length, seed, burn_in)?;
    corruption::corrupt_in_place(&mut panel, specs, corruption_seed(seed))?;
    Ok(panel)
}

/// Everything learned from one spectrum.
#[derive(Debug, Clone)]
pub struct LearnOutput {
    pub inverse: SpectralMatrix,
    pub report: DetectionReport,
    pub estimate: TopologyEstimate,
}

/// Inverts `psd`, detects corrupt nodes and reconstructs the topology.
pub fn learn_from_spectrum(
    psd: &SpectralMatrix,
    params: &EdgeDecisionParams,
    ridge: f64,
) -> Result<LearnOutput> {
    let inverse = spectral::invert_spectrum(psd, ridge)?;
    let report = detection::detect(&inverse, params)?;
    let estimate = reconstruction::reconstruct(psd, &inverse, &report, params, ridge)?;
    Ok(LearnOutput {
        inverse,
        report,
        estimate,
    })
}

/// Comparison of an estimate against the generating system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Estimated edge set equals the true one.
    pub recovered: bool,
    /// Detected corrupt set equals the true one.
    pub corrupt_correct: bool,
    pub missing_edges: Vec<(usize, usize)>,
    pub extra_edges: Vec<(usize, usize)>,
    pub diagnostics: Vec<DiagnosticKind>,
}

impl Evaluation {
    /// Recovery failed without any diagnostic pointing at it.
    pub fn is_silent_failure(&self) -> bool {
        !self.recovered && self.diagnostics.is_empty()
    }
}

pub fn evaluate(
    estimate: &TopologyEstimate,
    truth: &UndirectedGraph,
    corrupt: &NodeSet,
) -> Evaluation {
    let est = estimate.graph.edge_set();
    let tru = truth.edge_set();
    Evaluation {
        recovered: est == tru,
        corrupt_correct: estimate.corrupt == *corrupt,
        missing_edges: tru.difference(&est).copied().collect(),
        extra_edges: est.difference(&tru).copied().collect(),
        diagnostics: estimate.diagnostics.iter().map(|d| d.kind).collect(),
    }
}

/// How corrupt nodes are placed in random instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// At least 3 hops from every leaf and every other corrupt node.
    Assumption,
    /// Two corrupt nodes 2 hops apart (otherwise as `Assumption`).
    CloseCorrupt,
    /// One corrupt node 2 hops from a leaf.
    NearLeaf,
}

/// A random system with its corrupted nodes.
#[derive(Debug, Clone)]
pub struct Instance {
    pub model: GenerativeModel,
    pub corruption: Vec<CorruptionSpec>,
}

impl Instance {
    pub fn corrupt_set(&self) -> NodeSet {
        self.corruption.iter().map(|s| s.node).collect()
    }
}

/// Random tree made of a path of `spine` nodes with the remaining nodes
/// attached uniformly at random.
fn random_tree(n: usize, spine: usize, rng: &mut impl Rng) -> UndirectedGraph {
    let mut g = UndirectedGraph::new(n);
    for i in 1..n {
        let parent = if i < spine { i - 1 } else { rng.gen_range(0..i) };
        g.add_edge(parent, i).expect("fresh edge");
    }
    // relabel so node order carries no structure
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    g.permuted(&perm).expect("permutation of 0..n")
}

/// Largest corrupt count an `n`-node tree can hold under the 3-hop rule.
pub fn max_assumption_corrupt(n: usize) -> usize {
    n.saturating_sub(4) / 3
}

fn random_corruption(rng: &mut impl Rng) -> CorruptionKind {
    match rng.gen_range(0..3) {
        0 => CorruptionKind::RandomDelay {
            t1: -rng.gen_range(1..=3),
            t2: 0,
            p: rng.gen_range(0.3..0.8),
        },
        1 => CorruptionKind::NoisyFilter {
            filter: vec![1.0, rng.gen_range(0.3..0.7) * if rng.gen() { 1.0 } else { -1.0 }],
            noise_variance: rng.gen_range(0.2..1.0),
        },
        _ => CorruptionKind::PacketDrop {
            p: rng.gen_range(0.5..0.9),
        },
    }
}

fn hop(dist: &[Vec<Option<usize>>], a: usize, b: usize) -> usize {
    dist[a][b].unwrap_or(usize::MAX)
}

/// Picks `count` corrupt nodes following `placement`, or `None` when the
/// tree has no room.
fn choose_corrupt(
    g: &UndirectedGraph,
    count: usize,
    placement: Placement,
    rng: &mut impl Rng,
) -> Option<Vec<usize>> {
    let dist = g.distance_matrix();
    let leaves = g.leaves();
    let far_from_leaves = |v: usize, min: usize| leaves.iter().all(|l| hop(&dist, v, l) >= min);
    let mut nodes: Vec<usize> = (0..g.node_count()).collect();
    nodes.shuffle(rng);
    let mut chosen: Vec<usize> = Vec::new();
    match placement {
        Placement::Assumption => {}
        Placement::NearLeaf => {
            let v = *nodes.iter().find(|&&v| {
                let m = leaves.iter().map(|l| hop(&dist, v, l)).min().unwrap_or(0);
                m == 2
            })?;
            chosen.push(v);
        }
        Placement::CloseCorrupt => {
            if count < 2 {
                return None;
            }
            let (a, b) = nodes.iter().find_map(|&a| {
                if !far_from_leaves(a, 3) {
                    return None;
                }
                nodes
                    .iter()
                    .find(|&&b| hop(&dist, a, b) == 2 && far_from_leaves(b, 3))
                    .map(|&b| (a, b))
            })?;
            chosen.extend([a, b]);
        }
    }
    for &v in &nodes {
        if chosen.len() == count {
            break;
        }
        if !chosen.contains(&v)
            && far_from_leaves(v, 3)
            && chosen.iter().all(|&c| hop(&dist, v, c) >= 3)
        {
            chosen.push(v);
        }
    }
    (chosen.len() == count).then_some(chosen)
}

/// Random stable radial system with `corrupt_count` corrupt nodes placed
/// according to `placement`. Couplings are drawn in `±[0.2, 0.9]` and
/// scaled down until the companion radius is below 0.95; self dynamics are
/// `S(z) = z - a` with `|a| ≤ 0.3`.
pub fn random_instance(
    n: usize,
    corrupt_count: usize,
    placement: Placement,
    rng: &mut impl Rng,
) -> Result<Instance> {
    if n < 2 {
        return Err(Error::Config("instances need at least 2 nodes".into()));
    }
    for _ in 0..1000 {
        let spine = rng.gen_range((3 * corrupt_count + 4).min(n)..=n);
        let topology = random_tree(n, spine, rng);
        let Some(corrupt) = choose_corrupt(&topology, corrupt_count, placement, rng) else {
            continue;
        };
        let mut coupling = std::collections::BTreeMap::new();
        for (i, j) in topology.edges() {
            for (a, b) in [(i, j), (j, i)] {
                let sign = if rng.gen() { 1.0 } else { -1.0 };
                coupling.insert((a, b), sign * rng.gen_range(0.2..0.9));
            }
        }
        let self_dynamics: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(-0.3..0.3)]).collect();
        let noise: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
        let mut scale = 1.0;
        let model = loop {
            let scaled = coupling.iter().map(|(&k, &v)| (k, v * scale)).collect();
            let candidate = GenerativeModel::new(
                default_labels(n),
                topology.clone(),
                scaled,
                self_dynamics.clone(),
                noise.clone(),
            );
            match candidate {
                Ok(m) if m.spectral_radius()? < 0.95 => break Some(m),
                Ok(_) | Err(Error::Unstable { .. }) if scale > 0.05 => scale *= 0.85,
                Ok(_) | Err(Error::Unstable { .. }) => break None,
                Err(e) => return Err(e),
            }
        };
        let Some(model) = model else { continue };
        let corruption = corrupt
            .into_iter()
            .map(|v| CorruptionSpec::new(v, random_corruption(rng)))
            .collect();
        return Ok(Instance { model, corruption });
    }
    Err(Error::AssumptionViolation(format!(
        "no {n}-node tree with room for {corrupt_count} corrupt nodes ({placement:?})"
    )))
}

/// Support edges of the exact corrupted inverse PSD whose normalised score
/// falls below `floor`, i.e. numerically cancelled entries of the expected
/// perturbed graph.
pub fn weak_expected_edges(
    inverse: &SpectralMatrix,
    expected: &UndirectedGraph,
    floor: f64,
) -> Vec<(usize, usize)> {
    expected
        .edges()
        .into_iter()
        .filter(|&(i, j)| detection::magnitude_score(inverse, i, j) < floor)
        .collect()
}

/// Trajectory length of a sweep cell: exact spectra or a finite sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepLength {
    Analytic,
    Samples(usize),
}

impl Serialize for SweepLength {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SweepLength::Analytic => s.serialize_str("analytic"),
            SweepLength::Samples(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for SweepLength {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Word(String),
            Number(u64),
        }
        match Raw::deserialize(d)? {
            Raw::Number(n) => Ok(SweepLength::Samples(n as usize)),
            Raw::Word(w) if w == "analytic" => Ok(SweepLength::Analytic),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "expected \"analytic\" or a sample count, got {w:?}"
            ))),
        }
    }
}

impl std::fmt::Display for SweepLength {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepLength::Analytic => f.write_str("analytic"),
            SweepLength::Samples(n) => write!(f, "{n}"),
        }
    }
}

fn default_instances() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Instances per `(nodes, corrupt, length)` cell.
    #[serde(default = "default_instances")]
    pub instances: usize,
    /// Node counts to sweep.
    pub nodes: Vec<usize>,
    /// Corrupt-node counts to sweep.
    pub corrupt: Vec<usize>,
    pub lengths: Vec<SweepLength>,
    #[serde(default = "placement_default")]
    pub placement: Placement,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default)]
    pub welch: WelchParams,
    /// Thresholds for estimated spectra; analytic cells use
    /// [`EdgeDecisionParams::exact`].
    #[serde(default)]
    pub decision: EdgeDecisionParams,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

fn placement_default() -> Placement {
    Placement::Assumption
}

impl SweepConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.iter().any(|&n| n < 2) {
            return Err(Error::Config("sweep node counts must be at least 2".into()));
        }
        for l in &self.lengths {
            if let SweepLength::Samples(t) = l {
                self.welch.validate(*t).map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        FrequencyGrid::dft(self.grid_points)?;
        self.decision.validate()
    }

    /// Cells in output order.
    pub fn cells(&self) -> Vec<(usize, usize, SweepLength, usize)> {
        let mut out = Vec::new();
        for &n in &self.nodes {
            for &c in &self.corrupt {
                for &len in &self.lengths {
                    for k in 0..self.instances {
                        out.push((n, c, len, k));
                    }
                }
            }
        }
        out
    }
}

/// One sweep instance outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub instance: usize,
    pub nodes: usize,
    pub corrupt: usize,
    pub length: SweepLength,
    pub recovered: bool,
    pub corrupt_correct: bool,
    /// Diagnostic kinds, or an error class if the run failed.
    pub diagnostics: String,
}

impl SweepRow {
    pub const HEADER: [&'static str; 7] = [
        "instance",
        "nodes",
        "corrupt",
        "length",
        "recovered",
        "corrupt_correct",
        "diagnostics",
    ];

    pub fn record(&self) -> [String; 7] {
        [
            self.instance.to_string(),
            self.nodes.to_string(),
            self.corrupt.to_string(),
            self.length.to_string(),
            self.recovered.to_string(),
            self.corrupt_correct.to_string(),
            self.diagnostics.clone(),
        ]
    }
}

fn instance_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x2545_f491_4f6c_dd1d)
        .wrapping_add(index as u64)
}

/// Runs one instance: builds it, learns from exact or simulated spectra and
/// compares against the truth.
pub fn run_instance(
    cfg: &SweepConfig,
    index: usize,
    nodes: usize,
    corrupt: usize,
    length: SweepLength,
) -> SweepRow {
    let mut row = SweepRow {
        instance: index,
        nodes,
        corrupt,
        length,
        recovered: false,
        corrupt_correct: false,
        diagnostics: String::new(),
    };
    let outcome = (|| -> Result<Evaluation> {
        let mut rng = ChaCha8Rng::seed_from_u64(instance_seed(cfg.seed, index));
        let inst = random_instance(nodes, corrupt, cfg.placement, &mut rng)?;
        let learned = match length {
            SweepLength::Analytic => {
                let grid = FrequencyGrid::dft(cfg.grid_points)?;
                let psd = analytic_corrupted_psd(&inst.model, &inst.corruption, &grid)?;
                learn_from_spectrum(&psd, &EdgeDecisionParams::exact(), 0.0)?
            }
            SweepLength::Samples(t) => {
                let panel = simulate_corrupted(
                    &inst.model,
                    &inst.corruption,
                    t,
                    rng.gen(),
                    cfg.burn_in,
                )?;
                let psd = spectral::estimate_cpsd(&panel, &cfg.welch)?;
                learn_from_spectrum(&psd, &cfg.decision, 0.0)?
            }
        };
        Ok(evaluate(
            &learned.estimate,
            inst.model.topology(),
            &inst.corrupt_set(),
        ))
    })();
    match outcome {
        Ok(ev) => {
            row.recovered = ev.recovered;
            row.corrupt_correct = ev.corrupt_correct;
            let kinds: BTreeSet<String> = ev
                .diagnostics
                .iter()
                .map(|k| {
                    serde_json::to_value(k)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_string))
                        .unwrap_or_default()
                })
                .collect();
            row.diagnostics = kinds.into_iter().collect::<Vec<_>>().join(";");
        }
        Err(e) => row.diagnostics = format!("error:{:?}", e.class()),
    }
    row
}

/// Runs every sweep cell on up to `threads` workers; rows come back in cell
/// order regardless of scheduling.
pub fn run_sweep(cfg: &SweepConfig, threads: usize) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let cells = cfg.cells();
    let results: Mutex<Vec<Option<SweepRow>>> = Mutex::new(vec![None; cells.len()]);
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..threads.max(1).min(cells.len().max(1)) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(n, c, len, _)) = cells.get(k) else {
                    break;
                };
                let row = run_instance(cfg, k, n, c, len);
                results.lock().expect("no worker panics while holding the lock")[k] = Some(row);
            });
        }
    });
    Ok(results
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect())
}

/// Fraction of recovered rows per `(nodes, corrupt, length)` cell.
pub fn recovery_rates(rows: &[SweepRow]) -> Vec<((usize, usize, String), f64)> {
    let mut acc: std::collections::BTreeMap<(usize, usize, String), (usize, usize)> =
        Default::default();
    for r in rows {
        let e = acc
            .entry((r.nodes, r.corrupt, r.length.to_string()))
            .or_default();
        e.0 += r.recovered as usize;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(k, (ok, total))| (k, ok as f64 / total as f64))
        .collect()
}

/// Ground-truth perturbed graph of an instance.
pub fn expected_perturbed_graph(inst: &Instance) -> Result<UndirectedGraph> {
    graph::perturbed_graph(&graph::moral_graph(inst.model.topology())?, &inst.corrupt_set())
}

/// Ground-truth leaf edges.
pub fn expected_leaf_edges(topology: &UndirectedGraph) -> BTreeSet<(usize, usize)> {
    topology
        .leaves()
        .iter()
        .flat_map(|l| topology.neighbors(l).map(move |k| edge(l, k)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_config_round_trips_through_toml() {
        let cfg = reference_config(1_000_000);
        let text = cfg.to_toml().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.build_model().unwrap(), reference_model());
        assert_eq!(
            back.corruption_specs(reference_model().labels()).unwrap(),
            reference_corruption()
        );
    }

    #[test]
    fn sweep_lengths_parse() {
        let cfg: SweepConfig = toml::from_str(
            "nodes = [7]\ncorrupt = [1]\nlengths = [\"analytic\", 100000]\n",
        )
        .unwrap();
        assert_eq!(
            cfg.lengths,
            vec![SweepLength::Analytic, SweepLength::Samples(100_000)]
        );
        assert!(toml::from_str::<SweepConfig>("nodes=[7]\ncorrupt=[1]\nlengths=[\"x\"]").is_err());
    }

    #[test]
    fn generated_instances_respect_placement() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let inst = random_instance(12, 2, Placement::Assumption, &mut rng).unwrap();
            let g = inst.model.topology();
            assert!(graph::is_tree(g));
            let dist = g.distance_matrix();
            let c = inst.corrupt_set().to_vec();
            for &v in &c {
                for l in g.leaves().iter() {
                    assert!(hop(&dist, v, l) >= 3);
                }
            }
            assert!(hop(&dist, c[0], c[1]) >= 3);
            assert!(inst.model.spectral_radius().unwrap() < 0.95);
        }
    }
}
