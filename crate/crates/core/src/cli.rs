//! Command-line front end: run configuration, trace generation, experiment
//! runs and report summaries.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::HardwareConfig;
use crate::envsim::SLOT_SECONDS;
use crate::experiments::{
    build_fleet, cluster_fleet, day_by_day_report, dynamic_report, read_report, run_shared_policy,
    run_transfer, write_day_csv, write_plot_csvs, write_report_json, Arm, DynamicOptions,
    ExperimentError, ExperimentOutput, ExperimentReport, FleetSpec, LearningSetup,
};
use crate::qlearn::{ConvergenceCriterion, Hyperparameters};
use crate::traces::{
    generate_suite, load_trace, write_trace_csv, ArchetypeKind, ArchetypeParams, Calendar,
    LightTrace, PlacementArchetype, SlotSeries, TraceError, DEFAULT_RESOLUTION, DEFAULT_START,
};

/// Environment variable holding the log filter (`error`, `info`, `debug`, ...).
pub const LOG_ENV: &str = "HARVEST_RL_LOG";
pub const DEFAULT_DAYS: usize = 90;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("{path}: {message}")]
    Report { path: String, message: String },
    #[error("{0}: output directory already exists and is not empty")]
    OutputExists(String),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Io { .. } => "io",
            CliError::Trace(_) => "trace",
            CliError::Experiment(_) => "experiment",
            CliError::Report { .. } => "report",
            CliError::OutputExists(_) => "output_exists",
            CliError::Usage(_) => "usage",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    /// Single-line JSON error record for stderr.
    pub fn record(&self) -> String {
        serde_json::json!({ "error": { "kind": self.kind(), "message": self.to_string() } }).to_string()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Daybyday,
    Dynamic,
    Shared,
    Transfer,
    #[default]
    All,
}

impl ExperimentKind {
    /// The concrete experiments this selection runs, in output order.
    pub fn expand(self) -> Vec<ExperimentKind> {
        use ExperimentKind::*;
        match self {
            All => vec![Daybyday, Dynamic, Shared, Transfer],
            k => vec![k],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Daybyday => "daybyday",
            ExperimentKind::Dynamic => "dynamic",
            ExperimentKind::Shared => "shared",
            ExperimentKind::Transfer => "transfer",
            ExperimentKind::All => "all",
        }
    }
}

/// A synthetic placement; unset fields keep the built-in values for `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchetypeSpec {
    pub kind: String,
    pub peak_lux: Option<f64>,
    pub active_start_hour: Option<f64>,
    pub active_end_hour: Option<f64>,
    pub occupancy_rate: Option<f64>,
    pub weekend_factor: Option<f64>,
    pub daily_variation: Option<f64>,
}

impl ArchetypeSpec {
    pub fn of(kind: ArchetypeKind) -> Self {
        Self {
            kind: kind.name().to_string(),
            peak_lux: None,
            active_start_hour: None,
            active_end_hour: None,
            occupancy_rate: None,
            weekend_factor: None,
            daily_variation: None,
        }
    }

    pub fn resolve(&self) -> Result<PlacementArchetype, String> {
        let kind: ArchetypeKind = self.kind.parse()?;
        let d = PlacementArchetype::default_for(kind).params;
        let params = ArchetypeParams {
            peak_lux: self.peak_lux.unwrap_or(d.peak_lux),
            active_start_hour: self.active_start_hour.unwrap_or(d.active_start_hour),
            active_end_hour: self.active_end_hour.unwrap_or(d.active_end_hour),
            occupancy_rate: self.occupancy_rate.unwrap_or(d.occupancy_rate),
            weekend_factor: self.weekend_factor.unwrap_or(d.weekend_factor),
            daily_variation: self.daily_variation.unwrap_or(d.daily_variation),
        };
        PlacementArchetype::new(kind, params).map_err(|e| e.to_string())
    }
}

/// Trace source: CSV files when `paths` is non-empty, otherwise synthetic
/// archetypes (all five when `archetypes` is empty too).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TracesConfig {
    pub paths: Vec<PathBuf>,
    pub archetypes: Vec<ArchetypeSpec>,
    /// First timestamp of generated traces; should be local midnight.
    pub start: i64,
    /// Resampling step for loaded traces, in seconds. Generated traces use 60 s.
    pub resolution: u32,
}

impl Default for TracesConfig {
    fn default() -> Self {
        Self {
            paths: Vec::new(),
            archetypes: Vec::new(),
            start: DEFAULT_START,
            resolution: DEFAULT_RESOLUTION,
        }
    }
}

/// Everything a run depends on. Flags override the matching fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub experiment: ExperimentKind,
    /// Days to generate, or to keep from the start of loaded traces
    /// (whole traces when unset).
    pub days: Option<usize>,
    pub output_dir: PathBuf,
    pub hardware: HardwareConfig,
    pub hyperparameters: Hyperparameters,
    pub convergence: ConvergenceCriterion,
    pub calendar: Calendar,
    pub traces: TracesConfig,
    pub dynamic: DynamicOptions,
    pub fleet: FleetSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            experiment: ExperimentKind::All,
            days: None,
            output_dir: PathBuf::from("out"),
            hardware: HardwareConfig::default(),
            hyperparameters: Hyperparameters::default(),
            convergence: ConvergenceCriterion::default(),
            calendar: Calendar::default(),
            traces: TracesConfig::default(),
            dynamic: DynamicOptions::default(),
            fleet: FleetSpec::default(),
        }
    }
}

/// Flag values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub experiment: Option<ExperimentKind>,
    pub out: Option<PathBuf>,
    pub days: Option<usize>,
}

impl RunConfig {
    /// Parses TOML; relative trace paths are taken relative to `base_dir`.
    pub fn from_toml(text: &str, source: &str, base_dir: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config {
            path: source.to_string(),
            message: e.to_string(),
        })?;
        for p in &mut cfg.traces.paths {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, &path.display().to_string(), dir)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = Some(s);
        }
        if let Some(e) = o.experiment {
            self.experiment = e;
        }
        if let Some(out) = &o.out {
            self.output_dir = out.clone();
        }
        if let Some(d) = o.days {
            self.days = Some(d);
        }
    }

    /// Checks every field; errors name the offending field path.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |path: &str, message: String| CliError::Config {
            path: path.to_string(),
            message,
        };
        if self.seed.is_none() {
            return Err(bad("seed", "a seed is required (config `seed` or --seed)".into()));
        }
        if self.days == Some(0) {
            return Err(bad("days", "must be at least 1".into()));
        }
        self.hardware.validate().map_err(|e| bad("hardware", e.to_string()))?;
        self.hyperparameters
            .validate()
            .map_err(|e| bad("hyperparameters", e.to_string()))?;
        self.convergence.validate().map_err(|e| bad("convergence", e.to_string()))?;
        self.dynamic.validate().map_err(|e| bad("dynamic", e.to_string()))?;
        if self.fleet.per_base_count == 0 || self.fleet.cluster_count == 0 {
            return Err(bad("fleet", "per_base_count and cluster_count must be at least 1".into()));
        }
        let t = &self.traces;
        if !t.paths.is_empty() && !t.archetypes.is_empty() {
            return Err(bad("traces", "set either `paths` or `archetypes`, not both".into()));
        }
        if t.resolution == 0 || 86_400 % t.resolution != 0 || SLOT_SECONDS % t.resolution != 0 {
            return Err(bad("traces.resolution", format!("{} s must divide a 900 s slot", t.resolution)));
        }
        for (i, p) in t.paths.iter().enumerate() {
            if !p.is_file() {
                return Err(bad(&format!("traces.paths[{i}]"), format!("{} does not exist", p.display())));
            }
        }
        let mut kinds = BTreeSet::new();
        for (i, a) in t.archetypes.iter().enumerate() {
            let resolved = a.resolve().map_err(|m| bad(&format!("traces.archetypes[{i}]"), m))?;
            if !kinds.insert(resolved.kind) {
                return Err(bad(
                    &format!("traces.archetypes[{i}].kind"),
                    format!("duplicate archetype `{}`", a.kind),
                ));
            }
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or_default()
    }

    pub fn setup(&self) -> LearningSetup {
        LearningSetup {
            hardware: self.hardware,
            hyperparameters: self.hyperparameters,
            convergence: self.convergence,
        }
    }

    fn archetypes(&self) -> Vec<PlacementArchetype> {
        if self.traces.archetypes.is_empty() {
            ArchetypeKind::ALL.iter().map(|&k| PlacementArchetype::default_for(k)).collect()
        } else {
            self.traces
                .archetypes
                .iter()
                .map(|a| a.resolve().expect("validated"))
                .collect()
        }
    }

    /// The base traces of the run: loaded files or generated placements.
    pub fn base_traces(&self) -> Result<Vec<LightTrace>, CliError> {
        let t = &self.traces;
        if t.paths.is_empty() {
            let days = self.days.unwrap_or(DEFAULT_DAYS);
            return Ok(generate_suite(&self.archetypes(), days, self.seed(), t.start, &self.calendar)?);
        }
        let mut out = Vec::with_capacity(t.paths.len());
        let mut ids = BTreeSet::new();
        for p in &t.paths {
            let trace = load_trace(p, t.resolution).map_err(|e| CliError::Config {
                path: p.display().to_string(),
                message: e.to_string(),
            })?;
            let trace = match self.days {
                Some(d) => trace.sub_days(0, d)?,
                None => trace,
            };
            if !ids.insert(trace.node_id().to_string()) {
                return Err(CliError::Config {
                    path: p.display().to_string(),
                    message: format!("duplicate node id `{}`", trace.node_id()),
                });
            }
            out.push(trace);
        }
        Ok(out)
    }
}

/// Files of one run, relative to the output directory.
type Artifacts = Vec<(PathBuf, Vec<u8>)>;

/// Writes `files` into a fresh sibling directory, then renames it to `out`,
/// so a failed run leaves nothing behind. Refuses to touch a non-empty `out`.
pub fn write_atomically(out: &Path, files: &Artifacts) -> Result<(), CliError> {
    if out.exists() {
        let empty = out.is_dir() && std::fs::read_dir(out).map_err(io_err(out))?.next().is_none();
        if !empty {
            return Err(CliError::OutputExists(out.display().to_string()));
        }
    }
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    let stage = tempfile::Builder::new()
        .prefix(".harvest-rl-")
        .tempdir_in(parent)
        .map_err(io_err(parent))?;
    for (rel, bytes) in files {
        let path = stage.path().join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        std::fs::write(&path, bytes).map_err(io_err(&path))?;
    }
    if out.exists() {
        std::fs::remove_dir(out).map_err(io_err(out))?;
    }
    let staged = stage.keep();
    std::fs::rename(&staged, out).map_err(|e| {
        let _ = std::fs::remove_dir_all(&staged);
        io_err(out)(e)
    })
}

fn resolved_config(cfg: &RunConfig) -> Result<Vec<u8>, CliError> {
    toml::to_string_pretty(cfg)
        .map(String::into_bytes)
        .map_err(|e| CliError::Config {
            path: "config".into(),
            message: e.to_string(),
        })
}

/// Writes one `timestamp,lux` CSV per configured placement.
pub fn cmd_generate(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    cfg.validate()?;
    if !cfg.traces.paths.is_empty() {
        return Err(CliError::Config {
            path: "traces.paths".into(),
            message: "generate works on synthetic archetypes only".into(),
        });
    }
    let traces = cfg.base_traces()?;
    let mut files = Artifacts::new();
    for t in &traces {
        let mut buf = Vec::new();
        write_trace_csv(t, &mut buf).map_err(io_err(&cfg.output_dir))?;
        files.push((PathBuf::from(format!("{}.csv", t.node_id())), buf));
    }
    write_atomically(&cfg.output_dir, &files)?;
    log::info!("wrote {} traces to {}", files.len(), cfg.output_dir.display());
    Ok(files.into_iter().map(|(p, _)| cfg.output_dir.join(p)).collect())
}

/// Runs the selected experiments and collects their outputs in order.
pub fn run_experiments(cfg: &RunConfig) -> Result<Vec<ExperimentOutput>, CliError> {
    cfg.validate()?;
    let seed = cfg.seed();
    let setup = cfg.setup();
    let bases = cfg.base_traces()?;
    let series = bases
        .iter()
        .map(|t| SlotSeries::from_trace(t, SLOT_SECONDS, cfg.calendar))
        .collect::<Result<Vec<_>, _>>()?;
    let mut outputs = Vec::new();
    for kind in cfg.experiment.expand() {
        log::info!("running {}", kind.name());
        let out = match kind {
            ExperimentKind::Daybyday => day_by_day_report(&series, &setup, seed)?,
            ExperimentKind::Dynamic => dynamic_report(&series, &setup, &cfg.dynamic, seed)?,
            ExperimentKind::Shared => {
                let fleet = build_fleet(&bases, cfg.fleet.per_base_count, seed)?;
                let assignment = cluster_fleet(&fleet, cfg.fleet.cluster_count)?;
                run_shared_policy(&fleet, &assignment, &setup, cfg.calendar, seed)?.output
            }
            ExperimentKind::Transfer => run_transfer(&series, &setup, seed, None)?.output,
            ExperimentKind::All => unreachable!("expanded above"),
        };
        outputs.push(out);
    }
    Ok(outputs)
}

/// Serializes outputs as `<experiment>/{report.json, days.csv, plot_*.csv,
/// qtables/*.json}` plus the resolved `config.toml`.
pub fn experiment_artifacts(cfg: &RunConfig, outputs: &[ExperimentOutput]) -> Result<Artifacts, CliError> {
    let io = |e: std::io::Error| io_err(&cfg.output_dir)(e);
    let mut files = vec![(PathBuf::from("config.toml"), resolved_config(cfg)?)];
    for out in outputs {
        let dir = PathBuf::from(&out.report.experiment);
        let mut json = Vec::new();
        write_report_json(&out.report, &mut json).map_err(io)?;
        files.push((dir.join("report.json"), json));
        let mut days = Vec::new();
        write_day_csv(&out.report, &mut days).map_err(io)?;
        files.push((dir.join("days.csv"), days));
        for (name, bytes) in write_plot_csvs(&out.report).map_err(io)? {
            files.push((dir.join(name), bytes));
        }
        for t in &out.tables {
            let mut bytes = serde_json::to_vec_pretty(&t.file).map_err(|e| io(e.into()))?;
            bytes.push(b'\n');
            files.push((dir.join("qtables").join(format!("{}.json", t.name)), bytes));
        }
    }
    Ok(files)
}

pub fn cmd_experiment(cfg: &RunConfig) -> Result<Vec<ExperimentOutput>, CliError> {
    let outputs = run_experiments(cfg)?;
    let files = experiment_artifacts(cfg, &outputs)?;
    write_atomically(&cfg.output_dir, &files)?;
    log::info!("wrote {} files to {}", files.len(), cfg.output_dir.display());
    Ok(outputs)
}

/// Report files named directly, or `report.json` inside a run directory and
/// its experiment subdirectories.
pub fn find_reports(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut found = Vec::new();
    for p in paths {
        if !p.is_dir() {
            found.push(p.clone());
            continue;
        }
        let own = p.join("report.json");
        let has_own = own.is_file();
        if has_own {
            found.push(own);
        }
        let mut subs: Vec<PathBuf> = std::fs::read_dir(p)
            .map_err(io_err(p))?
            .filter_map(|e| e.ok().map(|e| e.path().join("report.json")))
            .filter(|r| r.is_file())
            .collect();
        subs.sort();
        if subs.is_empty() && !has_own {
            return Err(CliError::Report {
                path: p.display().to_string(),
                message: "no report.json found".into(),
            });
        }
        found.extend(subs);
    }
    Ok(found)
}

pub fn load_reports(paths: &[PathBuf]) -> Result<Vec<(String, ExperimentReport)>, CliError> {
    find_reports(paths)?
        .into_iter()
        .map(|p| {
            let file = std::fs::File::open(&p).map_err(io_err(&p))?;
            let report = read_report(std::io::BufReader::new(file)).map_err(|message| CliError::Report {
                path: p.display().to_string(),
                message,
            })?;
            Ok((p.display().to_string(), report))
        })
        .collect()
}

/// Fractional reduction in trainings, `1 - dynamic / baseline`.
pub fn training_reduction(baseline: usize, dynamic: usize) -> Option<f64> {
    (baseline > 0).then(|| 1.0 - dynamic as f64 / baseline as f64)
}

/// Per-report node totals, followed by method comparisons when the inputs
/// allow them: day-by-day vs dynamic trainings, cluster vs global rewards and
/// warm vs cold transfer.
pub fn render_summary(reports: &[(String, ExperimentReport)]) -> String {
    let mut s = String::new();
    for (source, r) in reports {
        let _ = writeln!(s, "{} (seed {}) from {source}", r.experiment, r.seed);
        let _ = writeln!(
            s,
            "  {:<24} {:<14} {:>5} {:>9} {:>8} {:>12} {:>10}",
            "node", "arm", "days", "trainings", "neg_days", "total_reward", "samples"
        );
        for n in &r.nodes {
            let _ = writeln!(
                s,
                "  {:<24} {:<14} {:>5} {:>9} {:>8} {:>12.0} {:>10}",
                n.node_id,
                n.arm.name(),
                n.days,
                n.trainings_performed,
                n.negative_reward_days,
                n.total_reward,
                n.samples_sent
            );
        }
        s.push('\n');
    }

    let find = |name: &str| reports.iter().map(|(_, r)| r).find(|r| r.experiment == name);
    if let (Some(base), Some(dynamic)) = (find("daybyday"), find("dynamic")) {
        let _ = writeln!(s, "policy trainings: day-by-day vs dynamic interval");
        let _ = writeln!(s, "  {:<24} {:>14} {:>14} {:>10}", "node", "day_by_day", "dynamic", "reduction");
        for b in &base.nodes {
            let Some(d) = dynamic.node(&b.node_id, Arm::Dynamic) else { continue };
            let pct = training_reduction(b.trainings_performed, d.trainings_performed)
                .map(|f| format!("{:.1}%", 100.0 * f))
                .unwrap_or_else(|| "n/a".into());
            let _ = writeln!(
                s,
                "  {:<24} {:>14} {:>14} {:>10}",
                b.node_id,
                format!("{} ({})", b.trainings_performed, b.negative_reward_days),
                format!("{} ({})", d.trainings_performed, d.negative_reward_days),
                pct
            );
        }
        s.push('\n');
    }
    if let Some(shared) = find("shared") {
        let _ = writeln!(s, "total reward: cluster vs global table");
        let _ = writeln!(s, "  {:<24} {:>8} {:>12} {:>12} {:>8}", "node", "cluster", "cluster_tot", "global_tot", "ratio");
        for c in shared.nodes.iter().filter(|n| n.arm == Arm::Cluster) {
            let Some(g) = shared.node(&c.node_id, Arm::Global) else { continue };
            let ratio = if g.total_reward > 0.0 {
                format!("{:.2}", c.total_reward / g.total_reward)
            } else {
                "n/a".into()
            };
            let cluster = c.cluster.map(|k| k.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "  {:<24} {:>8} {:>12.0} {:>12.0} {:>8}",
                c.node_id, cluster, c.total_reward, g.total_reward, ratio
            );
        }
        s.push('\n');
    }
    if let Some(transfer) = find("transfer") {
        let _ = writeln!(s, "transfer learning: warm vs cold start");
        let _ = writeln!(s, "  {:<24} {:>16} {:>16}", "node", "warm neg/total", "cold neg/total");
        for w in transfer.nodes.iter().filter(|n| n.arm == Arm::TransferWarm) {
            let Some(c) = transfer.node(&w.node_id, Arm::TransferCold) else { continue };
            let _ = writeln!(
                s,
                "  {:<24} {:>16} {:>16}",
                w.node_id,
                format!("{}/{:.0}", w.negative_reward_days, w.total_reward),
                format!("{}/{:.0}", c.negative_reward_days, c.total_reward)
            );
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Parser)]
#[command(name = "harvest-rl", version, about = "Q-learning sampling-rate control for energy-harvesting sensor nodes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// TOML run configuration; defaults apply to anything it leaves out.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; must not exist or be empty.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    days: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic light traces as CSV.
    Generate(RunArgs),
    /// Run experiments and write reports and Q-tables.
    Experiment {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        experiment: Option<ExperimentKind>,
    },
    /// Summarize report files or run directories.
    Report {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
}

fn config_for(run: &RunArgs, experiment: Option<ExperimentKind>) -> Result<RunConfig, CliError> {
    let mut cfg = match &run.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: run.seed,
        experiment,
        out: run.out.clone(),
        days: run.days,
    });
    Ok(cfg)
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Generate(run) => {
            for p in cmd_generate(&config_for(&run, None)?)? {
                println!("{}", p.display());
            }
        }
        Command::Experiment { run, experiment } => {
            let cfg = config_for(&run, experiment)?;
            let outputs = cmd_experiment(&cfg)?;
            let reports: Vec<(String, ExperimentReport)> = outputs
                .into_iter()
                .map(|o| (cfg.output_dir.join(&o.report.experiment).display().to_string(), o.report))
                .collect();
            print!("{}", render_summary(&reports));
        }
        Command::Report { paths } => print!("{}", render_summary(&load_reports(&paths)?)),
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
/// Failures print one JSON error record on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let err = CliError::Usage(e.kind().to_string() + ": " + e.to_string().lines().next().unwrap_or(""));
            eprintln!("{}", err.record());
            return err.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("{}", e.record());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, CliError> {
        RunConfig::from_toml(text, "test.toml", Path::new("/cfg"))
    }

    #[test]
    fn defaults_need_only_a_seed() {
        let cfg = parse("seed = 4").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::All);
        assert!(matches!(parse("").unwrap().validate(), Err(CliError::Config { path, .. }) if path == "seed"));
    }

    #[test]
    fn flags_override_config() {
        let mut cfg = parse("seed = 4\ndays = 30\nexperiment = \"dynamic\"").unwrap();
        cfg.apply(&Overrides {
            seed: Some(9),
            experiment: Some(ExperimentKind::Transfer),
            out: Some("x".into()),
            days: None,
        });
        assert_eq!((cfg.seed, cfg.days, cfg.experiment), (Some(9), Some(30), ExperimentKind::Transfer));
        assert_eq!(cfg.output_dir, PathBuf::from("x"));
    }

    #[test]
    fn unknown_archetype_names_its_field() {
        let cfg = parse("seed = 1\n[[traces.archetypes]]\nkind = \"window\"\n[[traces.archetypes]]\nkind = \"attic\"").unwrap();
        match cfg.validate() {
            Err(CliError::Config { path, message }) => {
                assert_eq!(path, "traces.archetypes[1]");
                assert!(message.contains("attic"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_and_bad_sections_are_rejected() {
        assert!(matches!(parse("seed = 1\nsede = 2"), Err(CliError::Config { .. })));
        let cfg = parse("seed = 1\n[hyperparameters]\ngamma = 1.5").unwrap();
        assert!(matches!(cfg.validate(), Err(CliError::Config { path, .. }) if path == "hyperparameters"));
    }

    #[test]
    fn relative_paths_resolve_against_the_config() {
        let cfg = parse("seed = 1\n[traces]\npaths = [\"a.csv\"]").unwrap();
        assert_eq!(cfg.traces.paths, vec![PathBuf::from("/cfg/a.csv")]);
        assert!(matches!(cfg.validate(), Err(CliError::Config { path, .. }) if path == "traces.paths[0]"));
    }

    #[test]
    fn overridden_archetype_fields() {
        let spec = ArchetypeSpec {
            peak_lux: Some(900.0),
            ..ArchetypeSpec::of(ArchetypeKind::MiddleOffice)
        };
        let a = spec.resolve().unwrap();
        assert_eq!(a.params.peak_lux, 900.0);
        assert_eq!(
            a.params.active_start_hour,
            PlacementArchetype::default_for(ArchetypeKind::MiddleOffice).params.active_start_hour
        );
    }

    #[test]
    fn reduction_formula() {
        assert_eq!(training_reduction(89, 89), Some(0.0));
        assert!((training_reduction(89, 25).unwrap() - 64.0 / 89.0).abs() < 1e-15);
        assert_eq!(training_reduction(0, 3), None);
    }

    #[test]
    fn error_records_are_json() {
        let e = CliError::OutputExists("out".into());
        let v: serde_json::Value = serde_json::from_str(&e.record()).unwrap();
        assert_eq!(v["error"]["kind"], "output_exists");
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn atomic_write_refuses_non_empty_output() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let files = vec![(PathBuf::from("a/b.txt"), b"x".to_vec())];
        write_atomically(&out, &files).unwrap();
        assert_eq!(std::fs::read(out.join("a/b.txt")).unwrap(), b"x");
        assert!(matches!(write_atomically(&out, &files), Err(CliError::OutputExists(_))));
        let leftovers = std::fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(leftovers, 1);
    }
}
