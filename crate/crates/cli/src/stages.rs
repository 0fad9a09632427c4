//! The stage commands. Every stage reads its inputs from the output
//! directory, so `pipeline` is literally the five stages run in order.

use std::path::{Path, PathBuf};

use radnet_core::corruption::CorruptionSpec;
use radnet_core::experiment::{self, ExperimentConfig, Format, SweepConfig, SweepRow};
use radnet_core::spectral::{self, FrequencyGrid, SpectralMatrix};
use radnet_core::{detection, io, model, Error, GenerativeModel, Result, TimeSeriesPanel};

use crate::manifest::Manifest;
use crate::{Command, Options};

/// Panels and spectra above this many entries are never written as CSV.
const CSV_ENTRY_LIMIT: usize = 10_000_000;

const DEFAULT_OUT: &str = "radnet-out";

pub fn run(command: Command, opts: &Options) -> Result<()> {
    if command == Command::Sweep {
        return sweep(opts);
    }
    let mut run = Run::new(command, opts)?;
    match command {
        Command::Simulate => simulate(&mut run)?,
        Command::Corrupt => corrupt(&mut run)?,
        Command::Spectra => spectra(&mut run)?,
        Command::Detect => detect(&mut run)?,
        Command::Learn => learn(&mut run)?,
        Command::Pipeline => {
            simulate(&mut run)?;
            corrupt(&mut run)?;
            spectra(&mut run)?;
            detect(&mut run)?;
            learn(&mut run)?;
        }
        Command::Sweep => unreachable!(),
    }
    run.finish()
}

fn effective_formats(opts: &Options, configured: &[Format], default: &[Format]) -> Vec<Format> {
    let mut f = if !opts.formats.is_empty() {
        opts.formats.clone()
    } else if !configured.is_empty() {
        configured.to_vec()
    } else {
        default.to_vec()
    };
    f.sort();
    f.dedup();
    f
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })
}

struct Run {
    config: ExperimentConfig,
    model: GenerativeModel,
    specs: Vec<CorruptionSpec>,
    out: PathBuf,
    formats: Vec<Format>,
    manifest: Manifest,
    violations: Vec<String>,
}

impl Run {
    fn new(command: Command, opts: &Options) -> Result<Self> {
        let mut config = ExperimentConfig::load(&opts.config)?;
        if let Some(seed) = opts.seed {
            config.seed = seed;
        }
        let model = config.validate()?;
        let specs = config.corruption_specs(model.labels())?;
        let out = match (&opts.out, &config.outputs.dir) {
            (Some(dir), _) => dir.clone(),
            (None, Some(dir)) => config.base_dir.join(dir),
            (None, None) => PathBuf::from(DEFAULT_OUT),
        };
        create_dir(&out)?;
        let formats = effective_formats(
            opts,
            &config.outputs.formats,
            &[Format::Bin, Format::Json, Format::Dot],
        );

        let mut manifest = Manifest::new(command.name(), &opts.config);
        manifest.record_input(&opts.config)?;
        if let Some(path) = config.resolved_model_path() {
            manifest.record_input(&path)?;
        }
        manifest.seed = config.seed;
        manifest.threads = opts.threads;
        manifest.formats = formats.clone();
        let mut echo = config.clone();
        echo.decision = Some(config.decision());
        echo.outputs.formats = formats.clone();
        manifest.config =
            serde_json::to_value(&echo).map_err(|e| Error::Config(e.to_string()))?;

        Ok(Self {
            config,
            model,
            specs,
            out,
            formats,
            manifest,
            violations: Vec::new(),
        })
    }

    fn labels(&self) -> &[String] {
        self.model.labels()
    }

    fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Which of (binary, CSV) to write for an array artifact. At least one
    /// is always written since later stages read it back.
    fn array_formats(&self, entries: usize) -> (bool, bool) {
        let csv = self.wants(Format::Csv) && entries <= CSV_ENTRY_LIMIT;
        (self.wants(Format::Bin) || !csv, csv)
    }

    fn wrote(&mut self, path: &Path) -> Result<()> {
        self.manifest.record_output(path)
    }

    fn note(&mut self, text: String) {
        eprintln!("{text}");
        self.manifest.notes.push(text);
    }

    fn write_panel(&mut self, name: &str, panel: &TimeSeriesPanel) -> Result<()> {
        let (bin, csv) = self.array_formats(panel.len() * panel.channel_count());
        if bin {
            let p = self.path(&format!("{name}.bin"));
            io::write_panel_binary(panel, &p)?;
            self.wrote(&p)?;
        }
        if csv {
            let p = self.path(&format!("{name}.csv"));
            io::write_panel_csv(panel, &p)?;
            self.wrote(&p)?;
        }
        Ok(())
    }

    fn upstream(&self, name: &str, stage: &str) -> Result<(PathBuf, bool)> {
        let bin = self.path(&format!("{name}.bin"));
        if bin.exists() {
            return Ok((bin, true));
        }
        let csv = self.path(&format!("{name}.csv"));
        if csv.exists() {
            return Ok((csv, false));
        }
        Err(Error::Data(format!(
            "missing {} (run `radnet {stage}` first)",
            bin.display()
        )))
    }

    fn read_panel(&mut self, name: &str, stage: &str) -> Result<TimeSeriesPanel> {
        let (path, binary) = self.upstream(name, stage)?;
        let panel = if binary {
            io::read_panel_binary(&path)?
        } else {
            io::read_panel_csv(&path, 1.0)?
        };
        if panel.labels() != self.labels() {
            return Err(Error::Data(format!(
                "{} does not match the configured model's nodes",
                path.display()
            )));
        }
        self.manifest.record_artifact_input(&path)?;
        Ok(panel)
    }

    fn write_spectrum(&mut self, name: &str, s: &SpectralMatrix) -> Result<()> {
        let (bin, csv) = self.array_formats(s.dim() * s.dim() * s.grid().len());
        if bin {
            let p = self.path(&format!("{name}.bin"));
            io::write_spectrum_binary(s, &p)?;
            self.wrote(&p)?;
        }
        if csv {
            let p = self.path(&format!("{name}.csv"));
            io::write_spectrum_csv(s, &p)?;
            self.wrote(&p)?;
        }
        Ok(())
    }

    fn read_spectrum(&mut self) -> Result<SpectralMatrix> {
        let (path, binary) = self.upstream("spectrum", "spectra")?;
        let s = if binary {
            io::read_spectrum_binary(&path)?
        } else {
            io::read_spectrum_csv(&path)?
        };
        if s.labels() != self.labels() {
            return Err(Error::Data(format!(
                "{} does not match the configured model's nodes",
                path.display()
            )));
        }
        self.manifest.record_artifact_input(&path)?;
        Ok(s)
    }

    /// JSON and/or DOT report; JSON if neither was asked for.
    fn write_report(
        &mut self,
        name: &str,
        dot_name: &str,
        mut json: serde_json::Value,
        dot: String,
    ) -> Result<()> {
        let dot_wanted = self.wants(Format::Dot);
        if self.wants(Format::Json) || !dot_wanted {
            if let Some(obj) = json.as_object_mut() {
                obj.insert("seed".into(), self.config.seed.into());
            }
            let p = self.path(&format!("{name}.json"));
            io::write_json(&json, &p)?;
            self.wrote(&p)?;
        }
        if dot_wanted {
            let p = self.path(&format!("{dot_name}.dot"));
            io::write_text(&format!("// seed {}\n{dot}", self.config.seed), &p)?;
            self.wrote(&p)?;
        }
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        let path = self.path("manifest.json");
        self.manifest.notes.extend(self.violations.iter().cloned());
        io::write_json(&self.manifest, &path)?;
        if self.violations.is_empty() {
            Ok(())
        } else {
            Err(Error::AssumptionViolation(self.violations.join("; ")))
        }
    }
}

fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn analytic_grid(run: &Run) -> Result<FrequencyGrid> {
    FrequencyGrid::dft(run.config.grid_points)
}

fn simulate(run: &mut Run) -> Result<()> {
    if run.config.analytic {
        run.note("simulate: analytic config, nothing to simulate".into());
        return Ok(());
    }
    let panel = model::simulate_with_burn_in(
        &run.model,
        run.config.trajectory_length,
        run.config.seed,
        run.config.burn_in,
    )?;
    run.write_panel("clean", &panel)
}

fn corrupt(run: &mut Run) -> Result<()> {
    let grid = if run.config.analytic {
        analytic_grid(run)?
    } else {
        let mut panel = run.read_panel("clean", "simulate")?;
        radnet_core::corruption::corrupt_in_place(
            &mut panel,
            &run.specs,
            experiment::corruption_seed(run.config.seed),
        )?;
        run.write_panel("corrupted", &panel)?;
        run.config.welch.grid()?
    };
    let sigs = experiment::analytic_signatures(&run.model, &run.specs, &grid)?;
    for (node, sig) in &sigs {
        let p = run.path(&format!("signature_{}.csv", file_stem(&run.labels()[*node])));
        io::write_signature_csv(&grid, sig, &p)?;
        run.wrote(&p)?;
    }
    Ok(())
}

fn spectra(run: &mut Run) -> Result<()> {
    let psd = if run.config.analytic {
        experiment::analytic_corrupted_psd(&run.model, &run.specs, &analytic_grid(run)?)?
    } else {
        let panel = run.read_panel("corrupted", "corrupt")?;
        spectral::estimate_cpsd(&panel, &run.config.welch)?
    };
    if !psd.invalid_frequencies().is_empty() {
        run.note(format!(
            "spectra: {} frequencies are singular and excluded",
            psd.invalid_frequencies().len()
        ));
    }
    run.write_spectrum("spectrum", &psd)
}

fn names(labels: &[String], nodes: impl IntoIterator<Item = usize>) -> String {
    let v: Vec<&str> = nodes.into_iter().map(|i| labels[i].as_str()).collect();
    format!("{{{}}}", v.join(", "))
}

fn detect(run: &mut Run) -> Result<()> {
    let psd = run.read_spectrum()?;
    let inverse = spectral::invert_spectrum(&psd, run.config.ridge)?;
    let report = detection::detect(&inverse, &run.config.decision())?;
    if run.wants(Format::Csv) {
        let p = run.path("inverse_magnitude_phase.csv");
        io::write_magnitude_phase_csv(&inverse, &p)?;
        run.wrote(&p)?;
    }
    let labels = run.labels().to_vec();
    println!("corrupt: {}", names(&labels, report.corrupt.iter()));
    println!("leaves: {}", names(&labels, report.leaves.iter()));
    for d in &report.diagnostics {
        run.violations.push(format!("detect: {}", d.message));
    }
    run.write_report(
        "detection",
        "perturbed",
        report.to_json(&labels),
        report.to_dot(&labels),
    )
}

fn learn(run: &mut Run) -> Result<()> {
    let psd = run.read_spectrum()?;
    let learned = experiment::learn_from_spectrum(&psd, &run.config.decision(), run.config.ridge)?;
    let est = &learned.estimate;
    let labels = run.labels().to_vec();
    println!("corrupt: {}", names(&labels, est.corrupt.iter()));
    for (i, j) in est.graph.edges() {
        println!("edge: {} -- {}", labels[i], labels[j]);
    }
    for d in &est.diagnostics {
        run.violations.push(format!("learn: {}", d.message));
    }
    if est.diagnostics.is_empty() && !est.is_tree() {
        run.violations
            .push("learn: the estimate is not a tree".into());
    }
    run.write_report("estimate", "topology", est.to_json(&labels), est.to_dot(&labels))
}

fn sweep(opts: &Options) -> Result<()> {
    let mut cfg = SweepConfig::load(&opts.config)?;
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let out = opts.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    create_dir(&out)?;

    let mut manifest = Manifest::new(Command::Sweep.name(), &opts.config);
    manifest.record_input(&opts.config)?;
    manifest.seed = cfg.seed;
    manifest.threads = opts.threads;
    manifest.formats = vec![Format::Csv];
    manifest.config = serde_json::to_value(&cfg).map_err(|e| Error::Config(e.to_string()))?;

    let rows = experiment::run_sweep(&cfg, opts.threads)?;

    let rows_path = out.join("sweep.csv");
    write_csv(&rows_path, &SweepRow::HEADER, rows.iter().map(|r| r.record().to_vec()))?;
    manifest.record_output(&rows_path)?;

    let summary_path = out.join("sweep_summary.csv");
    let rates = experiment::recovery_rates(&rows);
    let counts = |key: &(usize, usize, String)| {
        rows.iter()
            .filter(|r| (r.nodes, r.corrupt, r.length.to_string()) == *key)
            .count()
    };
    write_csv(
        &summary_path,
        &["nodes", "corrupt", "length", "instances", "recovery_rate"],
        rates.iter().map(|(key, rate)| {
            vec![
                key.0.to_string(),
                key.1.to_string(),
                key.2.clone(),
                counts(key).to_string(),
                format!("{rate:.4}"),
            ]
        }),
    )?;
    manifest.record_output(&summary_path)?;
    for ((n, c, len), rate) in &rates {
        println!("nodes={n} corrupt={c} length={len} recovery={rate:.4}");
    }
    io::write_json(&manifest, out.join("manifest.json"))
}

fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}
