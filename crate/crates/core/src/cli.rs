//! Command-line front end: config documents, CSV emission, replay files.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::channel::FadingMode;
use crate::simulator::{run_scenario, sweep, Algorithm, RunSummary, SimConfig, SimError, SweepCell, SweepParam};
use crate::world::{generate_scenario, Scenario};

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

pub const METRICS_HEADER: [&str; 7] =
    ["slot", "urllc_covered", "urllc_tput_bps", "embb_tput_bps", "sum_tput_bps", "displacement_m", "fallback"];
pub const SWEEP_HEADER: [&str; 8] = [
    "param",
    "value",
    "seed",
    "algorithm",
    "mean_urllc_tput",
    "mean_embb_tput",
    "mean_sum_tput",
    "mean_urllc_covered",
];
pub const TRACE_HEADER: [&str; 7] = ["slot", "fallback", "zone_size", "zu_size", "S_z", "T_z_bps", "displacement_m"];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io { .. } => 2,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// `%g`-style rendering with six significant digits.
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.5e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp) as usize;
        strip_zeros(format!("{:.*}", decimals, x))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", strip_zeros(mantissa.to_string()), sign, exp.abs())
    }
}

fn strip_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Deep-merges `over` onto `base`, refusing keys `base` does not have.
/// Tagged-enum tables (those carrying a `law` key) are replaced wholesale.
fn merge(base: &mut toml::Table, over: toml::Table, prefix: &str) -> Result<(), CliError> {
    for (k, v) in over {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        let Some(slot) = base.get_mut(&k) else {
            return Err(CliError::Config(format!("unknown key `{key}`")));
        };
        match (slot, v) {
            (toml::Value::Table(b), toml::Value::Table(o)) if !b.contains_key("law") => merge(b, o, &key)?,
            (slot, v) => {
                if let (toml::Value::Float(_), toml::Value::Integer(i)) = (&*slot, &v) {
                    *slot = toml::Value::Float(*i as f64);
                } else {
                    *slot = v;
                }
            }
        }
    }
    Ok(())
}

fn default_table() -> toml::Table {
    toml::Table::try_from(SimConfig::default()).expect("default config serializes")
}

/// Parses a (possibly partial) config document over the built-in defaults
/// and validates the result.
pub fn parse_config(text: &str) -> Result<SimConfig, CliError> {
    let over: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
    let mut table = default_table();
    merge(&mut table, over, "")?;
    let cfg: SimConfig =
        toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

/// Fully resolved config document.
pub fn emit_config(cfg: &SimConfig) -> String {
    toml::to_string(cfg).expect("config serializes")
}

pub fn load_config(path: &Path) -> Result<SimConfig, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

pub fn metrics_csv(summary: &RunSummary) -> String {
    let mut w = csv_writer();
    w.write_record(METRICS_HEADER).expect("in-memory write");
    for m in &summary.slots {
        w.write_record([
            m.slot.to_string(),
            m.urllc_covered_count.to_string(),
            format_float(m.urllc_throughput),
            format_float(m.embb_throughput),
            format_float(m.sum_throughput),
            format_float(m.uav_displacement),
            m.fallback_level.as_str().to_string(),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

pub fn trace_csv(summary: &RunSummary) -> String {
    let mut w = csv_writer();
    w.write_record(TRACE_HEADER).expect("in-memory write");
    for m in &summary.slots {
        w.write_record([
            m.slot.to_string(),
            m.fallback_level.as_str().to_string(),
            m.zone_size.to_string(),
            m.zu_size.to_string(),
            m.planned_covered.to_string(),
            format_float(m.planned_embb_bps),
            format_float(m.uav_displacement),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut w = csv_writer();
    w.write_record(SWEEP_HEADER).expect("in-memory write");
    for c in cells {
        let s = &c.summary;
        w.write_record([
            c.param.as_str().to_string(),
            format_float(c.value),
            c.seed.to_string(),
            c.algorithm.as_str().to_string(),
            format_float(s.urllc_throughput.mean),
            format_float(s.embb_throughput.mean),
            format_float(s.sum_throughput.mean),
            format_float(s.urllc_covered.mean),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ReplayPayload {
    config: SimConfig,
    scenario: Scenario,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReplayFile {
    schema_version: u32,
    checksum: String,
    config: SimConfig,
    scenario: Scenario,
}

fn payload_checksum(p: &ReplayPayload) -> String {
    let text = toml::to_string(p).expect("payload serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn emit_scenario_file(config: &SimConfig, scenario: &Scenario) -> String {
    let payload = ReplayPayload { config: config.clone(), scenario: scenario.clone() };
    let file = ReplayFile {
        schema_version: SCENARIO_SCHEMA_VERSION,
        checksum: payload_checksum(&payload),
        config: payload.config,
        scenario: payload.scenario,
    };
    toml::to_string(&file).expect("replay file serializes")
}

pub fn parse_scenario_file(text: &str) -> Result<(SimConfig, Scenario), CliError> {
    let raw: toml::Table =
        text.parse().map_err(|e: toml::de::Error| CliError::Config(format!("scenario file: {}", e.message())))?;
    match raw.get("schema_version").and_then(|v| v.as_integer()) {
        Some(v) if v == SCENARIO_SCHEMA_VERSION as i64 => {}
        Some(v) => {
            return Err(CliError::Config(format!(
                "scenario schema version {v} unsupported (expected {SCENARIO_SCHEMA_VERSION})"
            )))
        }
        None => return Err(CliError::Config("scenario file lacks schema_version".into())),
    }
    let file: ReplayFile = toml::Value::Table(raw)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(format!("scenario file: {}", e.message())))?;
    let payload = ReplayPayload { config: file.config, scenario: file.scenario };
    if payload_checksum(&payload) != file.checksum {
        return Err(CliError::Config("scenario checksum mismatch".into()));
    }
    payload.config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok((payload.config, payload.scenario))
}

/// `runs/out.csv` -> `runs/out.<suffix>`.
pub fn sibling_path(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(io_err(path))
}

#[derive(Debug, Parser)]
#[command(name = "uavplan", version, about = "UAV trajectory planning for URLLC/eMBB traffic")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AlgorithmArg {
    Proposed,
    Baseline,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Proposed => Algorithm::Proposed,
            AlgorithmArg::Baseline => Algorithm::Baseline,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ParamArg {
    #[value(name = "coverage_radius")]
    CoverageRadius,
    Obstacles,
    Velocity,
}

impl From<ParamArg> for SweepParam {
    fn from(p: ParamArg) -> Self {
        match p {
            ParamArg::CoverageRadius => SweepParam::CoverageRadius,
            ParamArg::Obstacles => SweepParam::ObstacleCount,
            ParamArg::Velocity => SweepParam::UserVmax,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Single simulation run.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        algorithm: Option<AlgorithmArg>,
        #[arg(long)]
        out: PathBuf,
        /// Per-slot planner trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        deterministic_fading: bool,
    },
    /// Parameter sweep over several seeds.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        param: ParamArg,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Number of seeds, counted up from the config seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        compare_baseline: bool,
    },
    /// Re-run a scenario file written by `run`.
    Replay {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn print_summary(out: &mut dyn Write, s: &RunSummary) {
    let _ = writeln!(
        out,
        "slots={} seed={} algorithm={} mean_urllc_tput={} mean_embb_tput={} mean_sum_tput={} mean_urllc_covered={} coverage_violations={} excluded_users={}",
        s.slots.len(),
        s.seed,
        s.config.sim.algorithm.as_str(),
        format_float(s.urllc_throughput.mean),
        format_float(s.embb_throughput.mean),
        format_float(s.sum_throughput.mean),
        format_float(s.urllc_covered.mean),
        s.coverage_violations,
        s.excluded_users,
    );
}

pub fn cmd_run(
    config: &Path,
    seed: Option<u64>,
    algorithm: Option<Algorithm>,
    out: &Path,
    trace: Option<&Path>,
    deterministic_fading: bool,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.sim.seed = s;
    }
    if let Some(a) = algorithm {
        cfg.sim.algorithm = a;
    }
    if deterministic_fading {
        cfg.sim.fading_mode = FadingMode::Deterministic;
    }
    let scenario = generate_scenario(&cfg, cfg.sim.seed).map_err(|e| CliError::Config(e.to_string()))?;
    let summary = run_scenario(&cfg, scenario.clone())?;
    write_file(out, &metrics_csv(&summary))?;
    write_file(&sibling_path(out, "config.toml"), &emit_config(&cfg))?;
    write_file(&sibling_path(out, "scenario.toml"), &emit_scenario_file(&cfg, &scenario))?;
    if let Some(t) = trace {
        write_file(t, &trace_csv(&summary))?;
    }
    print_summary(stdout, &summary);
    Ok(())
}

pub fn cmd_sweep(
    config: &Path,
    param: SweepParam,
    values: &[f64],
    seeds: u64,
    out: &Path,
    compare_baseline: bool,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    if values.is_empty() || seeds == 0 {
        return Err(CliError::Config("sweep needs at least one value and one seed".into()));
    }
    let seed_list: Vec<u64> = (0..seeds).map(|k| cfg.sim.seed.wrapping_add(k)).collect();
    let algorithms =
        if compare_baseline { vec![Algorithm::Proposed, Algorithm::Baseline] } else { vec![cfg.sim.algorithm] };
    for &v in values {
        let mut probe = cfg.clone();
        param.apply(&mut probe, v);
        probe.validate().map_err(|e| CliError::Config(format!("{}={}: {e}", param.as_str(), format_float(v))))?;
    }
    let cells = sweep(&cfg, param, values, &seed_list, &algorithms)?;
    write_file(out, &sweep_csv(&cells))?;
    write_file(&sibling_path(out, "config.toml"), &emit_config(&cfg))?;
    let _ = writeln!(stdout, "{} sweep cells written to {}", cells.len(), out.display());
    Ok(())
}

pub fn cmd_replay(scenario: &Path, out: &Path, stdout: &mut dyn Write) -> Result<(), CliError> {
    let text = std::fs::read_to_string(scenario)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", scenario.display())))?;
    let (cfg, sc) = parse_scenario_file(&text)?;
    let summary = run_scenario(&cfg, sc)?;
    write_file(out, &metrics_csv(&summary))?;
    print_summary(stdout, &summary);
    Ok(())
}

/// Parses `args` and dispatches; returns the process exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let _ = write!(stderr, "{e}");
            return 1;
        }
    };
    let result = match cli.command {
        Command::Run { config, seed, algorithm, out, trace, deterministic_fading } => cmd_run(
            &config,
            seed,
            algorithm.map(Into::into),
            &out,
            trace.as_deref(),
            deterministic_fading,
            stdout,
        ),
        Command::Sweep { config, param, values, seeds, out, compare_baseline } => {
            cmd_sweep(&config, param.into(), &values, seeds, &out, compare_baseline, stdout)
        }
        Command::Replay { scenario, out } => cmd_replay(&scenario, &out, stdout),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.to_string().replace('\n', " "));
            e.exit_code()
        }
    }
}
