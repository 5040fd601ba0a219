//! Run configuration, manifests, orchestration and CSV emission.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::forcing::{SignalSpec, Symbol, TermSpec, Wave};
use crate::harness::{
    absorbing_experiment, attractor_estimate, energy_experiment, evaluate_moment, evaluate_moment4,
    evaluate_regularity, moment_runs, representative_trajectory, stability_experiment, translation_identity_check,
    AbsorbingPlan, AttractorPlan, Curve, EnergyPlan, ExperimentKind, ExperimentReport, Ladder, MomentPlan,
    MomentRuns, MonteCarlo, Setup, StabilityPlan, TranslationPlan,
};
use crate::integrator::write_trajectory_csv;
use crate::metrics::write_distance_table;
use crate::model::{check_assumptions, check_field_bounds, AssumptionReport, ConstantLedger, DiffusionSpec, DriftSpec, ModelParams, Profile};
use crate::spectral::{calibrate_ladyzhenskaya, write_fields, GridSpec};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable naming the output root when no directory is given.
pub const OUTPUT_ROOT_ENV: &str = "MVNS_OUTPUT_ROOT";

pub mod exit {
    pub const PASS: i32 = 0;
    pub const IO: i32 = 1;
    pub const ASSERTION_FAILED: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const NUMERIC: i32 = 4;
    pub const ASSUMPTION: i32 = 5;
    pub const NOT_DISSIPATIVE: i32 = 6;
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::AssumptionViolated { .. } => exit::ASSUMPTION,
        Error::NotDissipative { .. } => exit::NOT_DISSIPATIVE,
        Error::NonFinite { .. } | Error::StepTooLarge { .. } | Error::Solver(_) => exit::NUMERIC,
        Error::Io(_) | Error::MissingReport(_) => exit::IO,
        _ => exit::CONFIG,
    }
}

/// Values applied to every experiment plan when set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Defaults {
    pub seed: u64,
    pub seeds: Option<usize>,
    pub particles: Option<usize>,
    pub dt: Option<f64>,
}

impl Default for Defaults {
    fn default() -> Self {
        Self { seed: 1, seeds: None, particles: None, dt: None }
    }
}

impl Defaults {
    fn apply(&self, mc: &mut MonteCarlo) {
        mc.seed = self.seed;
        if let Some(n) = self.seeds {
            mc.seeds = n;
        }
        if let Some(n) = self.particles {
            mc.particles = n;
        }
        if let Some(dt) = self.dt {
            mc.dt = dt;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckPlan {
    /// Draws of the pointwise coefficient checks.
    pub draws: usize,
    /// Draws of the field-level Hilbert–Schmidt checks.
    pub field_draws: usize,
    /// Draws of the Ladyzhenskaya constant calibration.
    pub lady_draws: usize,
    /// Fixed Ladyzhenskaya constant; calibrated when absent.
    pub c_lady: Option<f64>,
    pub seed: u64,
}

impl Default for CheckPlan {
    fn default() -> Self {
        Self { draws: 10_000, field_draws: 10_000, lady_draws: 2000, c_lady: None, seed: 7 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForcingSpec {
    pub g: SignalSpec,
    pub h: SignalSpec,
}

impl Default for ForcingSpec {
    /// g = sin t · w₍₁,₁₎ and h = (sin t + sin √2 t)·(sin x₂, 0).
    fn default() -> Self {
        let h_wave = vec![Wave { k: [0, 1], amplitude: 1.0, phase: -std::f64::consts::FRAC_PI_2 }];
        Self {
            g: SignalSpec {
                terms: vec![TermSpec { frequency: 1.0, phase: 0.0, waves: vec![Wave { k: [1, 1], amplitude: 1.0, phase: 0.0 }] }],
            },
            h: SignalSpec {
                terms: vec![
                    TermSpec { frequency: 1.0, phase: 0.0, waves: h_wave.clone() },
                    TermSpec { frequency: std::f64::consts::SQRT_2, phase: 0.0, waves: h_wave },
                ],
            },
        }
    }
}

impl ForcingSpec {
    pub fn build(&self, grid: GridSpec) -> Result<Symbol> {
        Symbol::new(self.g.build(grid)?, self.h.build(grid)?)
    }
}

/// Dissipative default: ν = 2, ε = 1/2, eight noise modes with decaying
/// coefficients and a weak law-dependent drift.
pub fn default_model() -> ModelParams {
    let k = 8;
    ModelParams {
        nu: 2.0,
        epsilon: 0.5,
        kappa: Profile::constant(0.5).with_mode([1, 1], 0.1, 0.0),
        lambda: 1.0,
        noise_modes: k,
        drift: DriftSpec { phi1: Profile::constant(0.01), psi1: Profile::constant(0.002), ..Default::default() },
        diffusion: DiffusionSpec {
            beta: (0..k).map(|j| 0.002 / (j as f64 + 1.0)).collect(),
            gamma_hat: (0..k).map(|j| 0.05 / (j as f64 + 1.0)).collect(),
            lip: None,
            shapes: None,
        },
    }
}

fn default_grid() -> GridSpec {
    GridSpec { modes_per_axis: 8, dealias: true }
}

fn default_experiments() -> Vec<ExperimentKind> {
    ExperimentKind::ALL.to_vec()
}

/// Parsed configuration document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub defaults: Defaults,
    pub grid: GridSpec,
    pub model: ModelParams,
    pub forcing: ForcingSpec,
    pub experiments: Vec<ExperimentKind>,
    pub checks: CheckPlan,
    pub moment: MomentPlan,
    pub energy: EnergyPlan,
    pub stability: StabilityPlan,
    pub translation: TranslationPlan,
    pub absorbing: AbsorbingPlan,
    pub attractor: AttractorPlan,
    /// Times at which the representative run keeps the full ensemble.
    pub snapshot_times: Vec<f64>,
    /// Run non-dissipative parameters with assertions skipped.
    pub force: bool,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            defaults: Defaults::default(),
            grid: default_grid(),
            model: default_model(),
            forcing: ForcingSpec::default(),
            experiments: default_experiments(),
            checks: CheckPlan::default(),
            moment: MomentPlan::default(),
            energy: EnergyPlan::default(),
            stability: StabilityPlan::default(),
            translation: TranslationPlan::default(),
            absorbing: AbsorbingPlan::default(),
            attractor: AttractorPlan::default(),
            snapshot_times: Vec::new(),
            force: false,
        }
    }
}

/// Command-line adjustments applied before the manifest is built.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub force: bool,
    pub snapshot_times: Option<Vec<f64>>,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies overrides and the defaults section to every plan. Idempotent.
    pub fn resolved(mut self, overrides: &Overrides) -> Self {
        if let Some(seed) = overrides.seed {
            self.defaults.seed = seed;
        }
        self.force |= overrides.force;
        if let Some(t) = &overrides.snapshot_times {
            self.snapshot_times = t.clone();
        }
        let d = self.defaults.clone();
        for mc in [
            &mut self.moment.mc,
            &mut self.energy.mc,
            &mut self.stability.mc,
            &mut self.translation.mc,
            &mut self.absorbing.mc,
            &mut self.attractor.mc,
        ] {
            d.apply(mc);
        }
        let mut seen = BTreeSet::new();
        self.experiments.retain(|k| seen.insert(*k));
        self
    }
}

fn needs_dissipation(kind: ExperimentKind) -> bool {
    !matches!(kind, ExperimentKind::Energy | ExperimentKind::Translation)
}

/// Resolved configuration with the derived constants; fully determines a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// SHA-256 of every other field, as hex.
    pub hash: String,
    pub tool_version: String,
    pub config: Config,
    pub c_lady: f64,
    pub ledger: ConstantLedger,
    pub assumptions: AssumptionReport,
}

#[derive(Serialize)]
struct HashedBody<'a> {
    tool_version: &'a str,
    config: &'a Config,
    c_lady: f64,
    ledger: &'a ConstantLedger,
    assumptions: &'a AssumptionReport,
}

/// Fields of a stored manifest that determine it; the rest is recomputed.
#[derive(Deserialize)]
struct StoredManifest {
    hash: String,
    tool_version: String,
    config: Config,
}

impl RunManifest {
    /// Validates the configuration, runs the assumption checks, calibrates the
    /// Ladyzhenskaya constant and computes the constant ledger.
    pub fn build(config: Config, overrides: &Overrides) -> Result<Self> {
        let config = config.resolved(overrides);
        config.grid.validate()?;
        config.model.validate()?;
        let grid = config.grid;
        let symbol = config.forcing.build(grid)?;
        let c = &config.checks;
        let assumptions = check_assumptions(&config.model, c.draws, c.seed)?
            .merged(check_field_bounds(&config.model, &symbol, grid, c.field_draws, c.seed)?)
            .into_result()?;
        let c_lady = match c.c_lady {
            Some(v) if v > 0.0 && v.is_finite() => v,
            Some(v) => return Err(Error::InvalidParameter(format!("Ladyzhenskaya constant must be positive, got {v}"))),
            None => calibrate_ladyzhenskaya(grid, c.lady_draws, c.seed),
        };
        let ledger = ConstantLedger::from_symbol(&config.model, &symbol, c_lady);
        let dissipative = ledger.dissipative && ledger.gamma_ok;
        if !dissipative && !config.force && config.experiments.iter().any(|&k| needs_dissipation(k)) {
            return Err(Error::NotDissipative { nu: config.model.nu, required: 2.0 * ledger.k0 / config.model.lambda });
        }
        let mut manifest =
            Self { hash: String::new(), tool_version: TOOL_VERSION.into(), config, c_lady, ledger, assumptions };
        manifest.hash = manifest.compute_hash()?;
        Ok(manifest)
    }

    fn compute_hash(&self) -> Result<String> {
        let body = HashedBody {
            tool_version: &self.tool_version,
            config: &self.config,
            c_lady: self.c_lady,
            ledger: &self.ledger,
            assumptions: &self.assumptions,
        };
        let digest = Sha256::digest(serde_json::to_vec(&body)?);
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Rebuilds a stored manifest and checks that its hash still matches.
    pub fn from_json(text: &str, overrides: &Overrides) -> Result<Self> {
        let stored: StoredManifest = serde_json::from_str(text)?;
        if stored.tool_version != TOOL_VERSION {
            return Err(Error::Config(format!(
                "manifest written by version {}, this is {TOOL_VERSION}",
                stored.tool_version
            )));
        }
        let unchanged = *overrides == Overrides::default();
        let manifest = Self::build(stored.config, overrides)?;
        if unchanged && manifest.hash != stored.hash {
            return Err(Error::Config("manifest hash does not match its contents".into()));
        }
        Ok(manifest)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn setup(&self) -> Result<Setup> {
        let symbol = self.config.forcing.build(self.config.grid)?;
        let mut setup = Setup::new(self.config.model.clone(), symbol, self.c_lady)?;
        setup.force = self.config.force;
        Ok(setup)
    }
}

/// Reads a TOML config, or a JSON manifest written by an earlier run.
pub fn parse_config(path: &Path, overrides: &Overrides) -> Result<RunManifest> {
    let text = fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        RunManifest::from_json(&text, overrides)
    } else {
        RunManifest::build(Config::from_toml(&text)?, overrides)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub kind: ExperimentKind,
    pub file: String,
    pub pass: bool,
    pub skipped: bool,
    pub failures: Vec<String>,
}

/// Index of a run directory; lists every emitted file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub hash: String,
    pub pass: bool,
    /// Set when a numeric or other failure stopped the run; outputs are partial.
    pub aborted: bool,
    pub error: Option<String>,
    pub reports: Vec<ReportEntry>,
    pub snapshot_times: Vec<f64>,
    pub files: Vec<String>,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            exit::PASS
        } else {
            exit::ASSERTION_FAILED
        }
    }
}

pub const SUMMARY_FILE: &str = "summary.json";

struct Output<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Output<'_> {
    fn create(&mut self, rel: &str) -> Result<BufWriter<fs::File>> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        self.files.push(rel.to_string());
        Ok(BufWriter::new(fs::File::create(path)?))
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let mut w = self.create(rel)?;
        w.write_all(bytes)?;
        w.flush()?;
        Ok(())
    }
}

/// Output directory: the explicit one, else `$MVNS_OUTPUT_ROOT/<hash prefix>`,
/// else `runs/<hash prefix>`.
pub fn output_dir(explicit: Option<&Path>, manifest: &RunManifest) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    let root = std::env::var_os(OUTPUT_ROOT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
    root.join(&manifest.hash[..12])
}

/// Runs every configured experiment and writes the manifest copy, ledger CSV,
/// report JSONs, plot CSVs, the representative trajectory and the summary.
/// A failing experiment stops the run; the summary then records the error.
pub fn run(manifest: &RunManifest, dir: &Path) -> Result<RunSummary> {
    fs::create_dir_all(dir)?;
    let mut out = Output { dir, files: Vec::new() };
    let mut summary = RunSummary {
        hash: manifest.hash.clone(),
        pass: false,
        aborted: false,
        error: None,
        reports: Vec::new(),
        snapshot_times: Vec::new(),
        files: Vec::new(),
    };
    let mut reports = Vec::new();
    let result = run_into(manifest, &mut out, &mut summary, &mut reports);
    if let Err(e) = &result {
        summary.aborted = true;
        summary.error = Some(e.to_string());
    }
    summary.pass = result.is_ok() && summary.reports.iter().all(|r| r.pass);
    summary.files = out.files.clone();
    out.write(SUMMARY_FILE, serde_json::to_string_pretty(&summary)?.as_bytes())?;
    result.map(|_| summary)
}

fn run_into(manifest: &RunManifest, out: &mut Output, summary: &mut RunSummary, reports: &mut Vec<ExperimentReport>) -> Result<()> {
    out.write("manifest.json", manifest.to_json()?.as_bytes())?;
    {
        let mut w = out.create("ledger.csv")?;
        manifest.ledger.write_csv(&mut w)?;
        w.flush()?;
    }
    let setup = manifest.setup()?;
    let cfg = &manifest.config;
    let mut runs: Option<MomentRuns> = None;
    for &kind in &cfg.experiments {
        let report = match kind {
            ExperimentKind::Moment | ExperimentKind::Moment4 | ExperimentKind::Regularity => {
                if runs.is_none() {
                    runs = Some(moment_runs(&setup, &cfg.moment)?);
                }
                let r = runs.as_ref().expect("just computed");
                match kind {
                    ExperimentKind::Moment => evaluate_moment(&setup, r),
                    ExperimentKind::Moment4 => evaluate_moment4(&setup, r),
                    _ => evaluate_regularity(&setup, r),
                }
            }
            ExperimentKind::Energy => energy_experiment(&setup, &cfg.energy)?,
            ExperimentKind::Stability => stability_experiment(&setup, &cfg.stability)?,
            ExperimentKind::Translation => translation_identity_check(&setup, &cfg.translation)?,
            ExperimentKind::Absorbing => absorbing_experiment(&setup, &cfg.absorbing)?,
            ExperimentKind::Attractor => {
                let (report, sections) = attractor_estimate(&setup, &cfg.attractor)?;
                for (j, law) in sections.iter().enumerate() {
                    let mut w = out.create(&format!("sections/hull_{j}.bin"))?;
                    write_fields(law.atoms(), &mut w)?;
                    w.flush()?;
                }
                let mut w = out.create("sections/distances.csv")?;
                write_distance_table(&sections, &sections, &mut w)?;
                w.flush()?;
                report
            }
        };
        let file = format!("reports/{}.json", kind.name());
        out.write(&file, serde_json::to_string_pretty(&report)?.as_bytes())?;
        summary.reports.push(ReportEntry {
            kind,
            file,
            pass: report.pass(),
            skipped: report.skipped,
            failures: report.failures().iter().map(|a| a.id.clone()).collect(),
        });
        reports.push(report);
    }
    if cfg.experiments.iter().any(|&k| needs_dissipation(k)) || !cfg.snapshot_times.is_empty() {
        let traj = representative_trajectory(&setup, &cfg.moment, &cfg.snapshot_times)?;
        let mut w = out.create("trajectory.csv")?;
        write_trajectory_csv(&traj, setup.c_lady(), &mut w)?;
        w.flush()?;
        for (j, (t, fields)) in traj.snapshots.iter().enumerate() {
            let mut w = out.create(&format!("snapshots/snapshot_{j}.bin"))?;
            write_fields(fields, &mut w)?;
            w.flush()?;
            summary.snapshot_times.push(*t);
        }
    }
    let inputs: Vec<PlotInput> = reports.iter().map(PlotInput::from).collect();
    let dir = out.dir.to_path_buf();
    out.files.extend(emit_plots(&inputs, &dir)?);
    Ok(())
}

/// The parts of a report that feed the plot CSVs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotInput {
    pub kind: ExperimentKind,
    pub curves: Vec<Curve>,
    pub ladders: Vec<Ladder>,
}

impl From<&ExperimentReport> for PlotInput {
    fn from(r: &ExperimentReport) -> Self {
        Self { kind: r.kind, curves: r.curves.clone(), ladders: r.ladders.clone() }
    }
}

pub const MOMENT_CURVES_HEADER: &str = "report,quantity,t,mean,stderr,bound";
pub const ATTRACTION_CURVES_HEADER: &str = "report,curve,t,value,stderr,floor";
pub const STABILITY_LADDERS_HEADER: &str = "report,ladder,level,offset,mean,stderr";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:e}"))
}

/// Writes one tidy CSV per figure kind that has data: moment_curves.csv
/// (every curve except attraction), attraction_curves.csv and
/// stability_ladders.csv. Returns the written file names.
pub fn emit_plots(inputs: &[PlotInput], dir: &Path) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let mut moment = String::new();
    let mut attraction = String::new();
    let mut ladders = String::new();
    for input in inputs {
        let name = input.kind.name();
        for c in &input.curves {
            let attract = input.kind == ExperimentKind::Attractor;
            for p in &c.points {
                if attract {
                    attraction += &format!("{name},{},{:e},{:e},{:e},{}\n", c.name, p.t, p.mean, p.stderr, opt(p.bound));
                } else {
                    moment += &format!("{name},{},{:e},{:e},{:e},{}\n", c.name, p.t, p.mean, p.stderr, opt(p.bound));
                }
            }
        }
        for l in &input.ladders {
            for p in &l.points {
                ladders += &format!("{name},{},{},{:e},{:e},{:e}\n", l.name, p.level, p.offset, p.mean, p.stderr);
            }
        }
    }
    let mut written = Vec::new();
    for (file, header, body) in [
        ("moment_curves.csv", MOMENT_CURVES_HEADER, moment),
        ("attraction_curves.csv", ATTRACTION_CURVES_HEADER, attraction),
        ("stability_ladders.csv", STABILITY_LADDERS_HEADER, ladders),
    ] {
        if body.is_empty() {
            continue;
        }
        fs::write(dir.join(file), format!("{header}\n{body}"))?;
        written.push(file.to_string());
    }
    Ok(written)
}

/// Plot inputs of every report listed in a run directory's summary.
pub fn load_plot_inputs(run_dir: &Path) -> Result<Vec<PlotInput>> {
    let summary_path = run_dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&summary_path)
        .map_err(|_| Error::MissingReport(summary_path.display().to_string()))?;
    let summary: RunSummary = serde_json::from_str(&text)?;
    summary
        .reports
        .iter()
        .map(|entry| {
            let path = run_dir.join(&entry.file);
            let text = fs::read_to_string(&path).map_err(|_| Error::MissingReport(path.display().to_string()))?;
            Ok(serde_json::from_str(&text)?)
        })
        .collect()
}
