//! Command-line front end: configuration, run orchestration and CSV/JSON
//! output.
//!
//! A run is described by a [`RunConfig`], assembled from an optional config
//! file (plain `key = value` lines, or a JSON sidecar from an earlier run)
//! overlaid with command-line flags. Every run writes one CSV whose first
//! line is a `#` provenance comment, plus a JSON sidecar next to it holding
//! the resolved config. Feeding that sidecar back through `--config`
//! reproduces the CSV byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analysis::{fit_power_law, fit_prefactor, PowerLawFit, SpreadingSeries, REFERENCE_COM2_PREFACTOR};
use crate::coherent::{coherent_profile, run_coherent};
use crate::correlation::{ansatz_alpha, evolve_correlation, CorrelationConfig, CorrelationGrid};
use crate::dephasing::{DephasedWalk, KickSchedule};
use crate::ensemble::{EnsembleAccumulator, SeedPolicy};
use crate::error::{Error, Result};
use crate::fiber::{Coupler, FiberLoop};
use crate::master::{analytic_classical_profile, evolve_master, MasterConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_FLAGGED: i32 = 2;

/// Fallback for `--threads`.
pub const THREADS_ENV: &str = "DEPHASE_WALK_THREADS";

/// Fit window in units of `J_e t` when none is given.
pub const DEFAULT_WINDOW: (f64, f64) = (10.0, 50.0);

/// `v<crate version>`, with `-g<hash>` appended when built with
/// `DEPHASE_WALK_GIT_HASH` set.
pub fn version_string() -> String {
    match option_env!("DEPHASE_WALK_GIT_HASH") {
        Some(hash) if !hash.is_empty() => format!("v{}-g{hash}", env!("CARGO_PKG_VERSION")),
        _ => format!("v{}", env!("CARGO_PKG_VERSION")),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Coherent,
    Dephased,
    Master1d,
    Corr2d,
    Fiberloop,
    Fit,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Coherent => "coherent",
            Mode::Dephased => "dephased",
            Mode::Master1d => "master1d",
            Mode::Corr2d => "corr2d",
            Mode::Fiberloop => "fiberloop",
            Mode::Fit => "fit",
        }
    }
}

/// Everything a run needs. Unset fields take mode defaults in
/// [`RunConfig::resolve`].
///
/// In `coherent` mode `dt_kick` is the sampling interval. `window` is in
/// units of `J_e t` (`J_e m` for the fiber loop) except in `fit` mode, where
/// it applies to the first CSV column directly.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Option<Mode>,
    #[serde(rename = "J", default)]
    pub hopping: Option<f64>,
    #[serde(default)]
    pub dt_kick: Option<f64>,
    #[serde(rename = "J_e", default)]
    pub hop_rate: Option<f64>,
    #[serde(default)]
    pub beta_frac: Option<f64>,
    #[serde(default)]
    pub t_max: Option<f64>,
    #[serde(default)]
    pub m_max: Option<usize>,
    #[serde(default)]
    pub n_traj: Option<u64>,
    #[serde(default)]
    pub master_seed: Option<u64>,
    #[serde(default)]
    pub sample_stride: Option<usize>,
    #[serde(default)]
    pub out_path: Option<PathBuf>,
    #[serde(default)]
    pub window: Option<(f64, f64)>,
    #[serde(default)]
    pub snapshot_times: Option<Vec<f64>>,
    /// `fit` mode: CSV to read.
    #[serde(default)]
    pub input: Option<PathBuf>,
    /// `fit` mode: column to fit against the first column.
    #[serde(default)]
    pub column: Option<String>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn positive(name: &str, v: Option<f64>) -> Result<f64> {
    match v {
        Some(x) if x > 0.0 && x.is_finite() => Ok(x),
        Some(x) => Err(config_err(format!("{name} must be positive, got {x}"))),
        None => Err(config_err(format!("{name} is required"))),
    }
}

fn at_least_one<T: PartialOrd + From<u8> + std::fmt::Display + Copy>(name: &str, v: Option<T>) -> Result<T> {
    match v {
        Some(x) if x >= T::from(1) => Ok(x),
        Some(x) => Err(config_err(format!("{name} must be ≥ 1, got {x}"))),
        None => Err(config_err(format!("{name} is required"))),
    }
}

impl RunConfig {
    /// Fields set in `other` replace those in `self`.
    pub fn overlay(mut self, other: RunConfig) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $(if other.$f.is_some() { self.$f = other.$f; })* };
        }
        take!(mode, hopping, dt_kick, hop_rate, beta_frac, t_max, m_max, n_traj, master_seed, sample_stride);
        take!(out_path, window, snapshot_times, input, column);
        self
    }

    /// Fills mode defaults, validates, and clears fields the mode ignores.
    /// Resolving a resolved config changes nothing.
    pub fn resolve(self) -> Result<RunConfig> {
        let mode = self.mode.ok_or_else(|| config_err("no mode given"))?;
        let mut r = RunConfig { mode: Some(mode), ..RunConfig::default() };
        r.out_path = Some(self.out_path.clone().unwrap_or_else(|| {
            PathBuf::from(if mode == Mode::Fit { "fit.json".to_string() } else { format!("{}.csv", mode.name()) })
        }));
        let stride = at_least_one("sample_stride", Some(self.sample_stride.unwrap_or(1)))?;
        let window = self.window.unwrap_or(DEFAULT_WINDOW);
        if !(window.0 < window.1 && window.0 > 0.0 && window.1.is_finite()) {
            return Err(config_err(format!("window must satisfy 0 < lo < hi, got {window:?}")));
        }
        // J_e given directly, or derived from J and the kick interval
        let hop_rate = || -> Result<f64> {
            match (self.hop_rate, self.hopping, self.dt_kick) {
                (Some(je), _, _) => positive("J_e", Some(je)),
                (None, Some(j), Some(dt)) => Ok(positive("J", Some(j))?.powi(2) * positive("dt_kick", Some(dt))?),
                _ => Ok(0.5),
            }
        };
        match mode {
            Mode::Coherent => {
                r.hopping = Some(positive("J", Some(self.hopping.unwrap_or(1.0)))?);
                r.dt_kick = Some(positive("dt_kick", Some(self.dt_kick.unwrap_or(0.5)))?);
                r.t_max = Some(positive("t_max", Some(self.t_max.unwrap_or(20.0)))?);
                r.sample_stride = Some(stride);
            }
            Mode::Dephased => {
                r.hopping = Some(positive("J", Some(self.hopping.unwrap_or(1.0)))?);
                r.dt_kick = Some(positive("dt_kick", Some(self.dt_kick.unwrap_or(0.5)))?);
                r.t_max = Some(positive("t_max", Some(self.t_max.unwrap_or(50.0)))?);
                r.n_traj = Some(at_least_one("n_traj", Some(self.n_traj.unwrap_or(10_000)))?);
                r.master_seed = Some(self.master_seed.unwrap_or(0));
                r.sample_stride = Some(stride);
                r.window = Some(window);
            }
            Mode::Master1d | Mode::Corr2d => {
                r.hop_rate = Some(hop_rate()?);
                r.t_max = Some(positive("t_max", Some(self.t_max.unwrap_or(100.0)))?);
                r.sample_stride = Some(stride);
                if mode == Mode::Corr2d {
                    r.window = Some(window);
                    let snaps = self.snapshot_times.clone().unwrap_or_default();
                    let t_max = r.t_max.unwrap();
                    if let Some(bad) = snaps.iter().find(|&&t| !(t > 0.0 && t <= t_max)) {
                        return Err(config_err(format!("snapshot time {bad} outside (0, {t_max}]")));
                    }
                    r.snapshot_times = Some(snaps);
                }
            }
            Mode::Fiberloop => {
                let frac = self.beta_frac.unwrap_or(0.8);
                if !(frac > 0.0 && frac < 1.0) {
                    return Err(config_err(format!("beta_frac must lie in (0, 1), got {frac}")));
                }
                r.beta_frac = Some(frac);
                r.m_max = Some(at_least_one("m_max", Some(self.m_max.unwrap_or(2000)))?);
                r.n_traj = Some(at_least_one("n_traj", Some(self.n_traj.unwrap_or(10_000)))?);
                r.master_seed = Some(self.master_seed.unwrap_or(0));
                r.sample_stride = Some(stride);
                r.window = Some(window);
            }
            Mode::Fit => {
                r.input = Some(self.input.clone().ok_or_else(|| config_err("fit mode needs --input"))?);
                r.column = Some(self.column.clone().unwrap_or_else(|| "mean_com2".into()));
                r.window = Some(self.window.ok_or_else(|| config_err("fit mode needs --window lo,hi"))?);
                if !(window.0 < window.1 && window.0 > 0.0) {
                    return Err(config_err(format!("window must satisfy 0 < lo < hi, got {window:?}")));
                }
            }
        }
        Ok(r)
    }
}

fn parse_list(key: &str, text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| config_err(format!("{key}: cannot parse {s:?} as a number"))))
        .collect()
}

/// Parses a `key = value` config file or a JSON sidecar (an object with a
/// `config` member, or a bare config object).
pub fn parse_config_text(text: &str) -> Result<RunConfig> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        let mut value: Value = serde_json::from_str(text)?;
        if let Some(inner) = value.get_mut("config") {
            value = inner.take();
        }
        return serde_json::from_value(value).map_err(|e| config_err(format!("config object: {e}")));
    }
    let mut map = serde_json::Map::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, val) =
            line.split_once('=').ok_or_else(|| config_err(format!("line {}: expected key = value", lineno + 1)))?;
        let (key, val) = (key.trim(), val.trim().trim_matches('"'));
        let json = match key {
            "mode" | "out_path" | "input" | "column" => Value::String(val.to_string()),
            "window" | "snapshot_times" => Value::from(parse_list(key, val)?),
            "m_max" | "n_traj" | "master_seed" | "sample_stride" => Value::from(
                val.parse::<u64>()
                    .map_err(|_| config_err(format!("{key}: expected a non-negative integer, got {val:?}")))?,
            ),
            _ => Value::from(
                val.parse::<f64>().map_err(|_| config_err(format!("{key}: cannot parse {val:?} as a number")))?,
            ),
        };
        if map.insert(key.to_string(), json).is_some() {
            return Err(config_err(format!("line {}: {key} given twice", lineno + 1)));
        }
    }
    serde_json::from_value(Value::Object(map)).map_err(|e| config_err(e.to_string()))
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_text(&text)
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    match parse_list("window", s).map_err(|e| e.to_string())?.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err(format!("expected lo,hi, got {s:?}")),
    }
}

/// Simulate photonic random walks under stochastic dephasing.
#[derive(Debug, Parser)]
#[command(name = "dephase-walk", version)]
pub struct Cli {
    /// What to run; may instead come from the config file.
    #[arg(value_enum)]
    pub mode: Option<Mode>,
    /// Coherent hopping rate J.
    #[arg(long = "J")]
    pub hopping: Option<f64>,
    /// Interval between phase kicks (sampling interval in coherent mode).
    #[arg(long)]
    pub dt_kick: Option<f64>,
    /// Effective hop rate J_e of the master equations.
    #[arg(long = "Je")]
    pub hop_rate: Option<f64>,
    /// Coupler angle as a fraction of π/2.
    #[arg(long)]
    pub beta_frac: Option<f64>,
    /// Final time
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Round trips of the fiber loop.
    #[arg(long)]
    pub m_max: Option<usize>,
    /// Number of trajectories
    #[arg(long)]
    pub n_traj: Option<u64>,
    /// Master seed for the trajectory streams
    #[arg(long = "seed")]
    pub master_seed: Option<u64>,
    /// Keep every k-th sample.
    #[arg(long)]
    pub sample_stride: Option<usize>,
    /// Output CSV; the run sidecar goes next to it
    #[arg(long = "out")]
    pub out_path: Option<PathBuf>,
    /// Fit window `lo,hi`.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    pub window: Option<(f64, f64)>,
    /// Grid snapshot times for corr2d, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub snapshot_times: Option<Vec<f64>>,
    /// CSV to fit (fit mode).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Column to fit (fit mode).
    #[arg(long)]
    pub column: Option<String>,
    /// Worker threads; falls back to DEPHASE_WALK_THREADS, then all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// `key = value` file or JSON sidecar; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write results and exit 0 even if a run touched the lattice boundary.
    #[arg(long)]
    pub allow_flagged: bool,
}

impl Cli {
    fn flags(&self) -> RunConfig {
        RunConfig {
            mode: self.mode,
            hopping: self.hopping,
            dt_kick: self.dt_kick,
            hop_rate: self.hop_rate,
            beta_frac: self.beta_frac,
            t_max: self.t_max,
            m_max: self.m_max,
            n_traj: self.n_traj,
            master_seed: self.master_seed,
            sample_stride: self.sample_stride,
            out_path: self.out_path.clone(),
            window: self.window,
            snapshot_times: self.snapshot_times.clone(),
            input: self.input.clone(),
            column: self.column.clone(),
        }
    }

    /// Config file (if any) overlaid with the flags, resolved.
    pub fn run_config(&self) -> Result<RunConfig> {
        let base = match &self.config {
            Some(path) => load_config(path)?,
            None => RunConfig::default(),
        };
        base.overlay(self.flags()).resolve()
    }

    pub fn thread_count(&self) -> Result<Option<usize>> {
        if let Some(n) = self.threads {
            return if n == 0 { Err(config_err("--threads must be ≥ 1")) } else { Ok(Some(n)) };
        }
        match std::env::var(THREADS_ENV) {
            Ok(s) if !s.trim().is_empty() => match s.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok(Some(n)),
                _ => Err(config_err(format!("{THREADS_ENV}={s:?} is not a positive integer"))),
            },
            _ => Ok(None),
        }
    }
}

/// JSON written next to every output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub config: RunConfig,
    pub seed: Option<u64>,
    pub version: String,
    pub invalid_trajectories: u64,
    pub total_trajectories: u64,
    pub flagged: bool,
    /// Largest boundary mass seen by a deterministic run.
    pub boundary_mass: Option<f64>,
    pub outputs: Vec<PathBuf>,
    /// Power-law fit of `E[⟨n⟩²]` over the window.
    pub fit: Option<PowerLawFit>,
    /// Prefactor with the exponent pinned at 1/2.
    pub sqrt_prefactor: Option<f64>,
    pub notes: Vec<String>,
}

/// What [`run`] produced.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub sidecar_path: PathBuf,
    pub sidecar: Sidecar,
}

/// Failure of [`run`], split by exit code.
#[derive(Debug)]
pub enum RunFailure {
    Config(Error),
    Flagged(String),
}

impl RunFailure {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunFailure::Config(_) => EXIT_CONFIG,
            RunFailure::Flagged(_) => EXIT_FLAGGED,
        }
    }
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunFailure::Config(e) => write!(f, "{e}"),
            RunFailure::Flagged(msg) => write!(f, "flagged run: {msg} (rerun with --allow-flagged to keep the output)"),
        }
    }
}

impl From<Error> for RunFailure {
    fn from(e: Error) -> Self {
        RunFailure::Config(e)
    }
}

/// `<stem>.run.json` next to the output.
pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("run.json")
}

fn companion(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    out.with_file_name(format!("{stem}_{suffix}.csv"))
}

struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(header: Vec<&'static str>) -> Self {
        Table { header, rows: Vec::new() }
    }

    fn column(&self, name: &str) -> Vec<f64> {
        let k = self.header.iter().position(|h| *h == name).expect("known column");
        self.rows.iter().map(|r| r[k]).collect()
    }
}

fn provenance(cfg: &RunConfig, extra: &str) -> String {
    let seed = cfg.master_seed.map_or("none".to_string(), |s| s.to_string());
    let mode = cfg.mode.map_or("?", Mode::name);
    format!("# dephase-walk {} mode={mode} seed={seed}{extra}\n", version_string())
}

fn write_rows<W: Write>(
    mut out: W,
    comment: &str,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    out.write_all(comment.as_bytes()).map_err(|e| Error::io("<csv>", e))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(std::io::BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?))
}

fn write_table(path: &Path, cfg: &RunConfig, table: &Table) -> Result<()> {
    let rows = table.rows.iter().map(|r| r.iter().map(|v| v.to_string()).collect());
    write_rows(create(path)?, &provenance(cfg, ""), &table.header, rows)
}

fn fill_ensemble(table: &mut Table, acc: &EnsembleAccumulator, hop_rate: f64, coherent: Option<&[f64]>) {
    let (n2, n2e) = (acc.mean_n2(), acc.mean_n2_stderr());
    let (c2, c2e) = (acc.mean_com2(), acc.mean_com2_stderr());
    let (c, ce) = (acc.mean_com(), acc.mean_com_stderr());
    for (i, &t) in acc.times().iter().enumerate() {
        let mut row = vec![t, n2[i], n2e[i], c2[i], c2e[i], c[i], ce[i]];
        if let Some(coh) = coherent {
            row.push(coh[i]);
        }
        row.push(2.0 * hop_rate * t);
        row.push(REFERENCE_COM2_PREFACTOR * (hop_rate * t).sqrt());
        table.rows.push(row);
    }
}

/// Fits `E[⟨n⟩²]` against `J_e t`; failures become notes.
fn com2_fits(table: &Table, time_col: &str, value_col: &str, hop_rate: f64, window: (f64, f64), sidecar: &mut Sidecar) {
    let jet: Vec<f64> = table.column(time_col).iter().map(|t| hop_rate * t).collect();
    let series = SpreadingSeries::new(jet, table.column(value_col));
    match series.and_then(|s| Ok((fit_power_law(&s, window)?, fit_prefactor(&s, window, 0.5)?))) {
        Ok((fit, pre)) => {
            sidecar.fit = Some(fit);
            sidecar.sqrt_prefactor = Some(pre);
        }
        Err(e) => sidecar.notes.push(format!("no fit over J_e t in {window:?}: {e}")),
    }
}

fn ensemble_flag(acc: &EnsembleAccumulator, sidecar: &mut Sidecar) {
    sidecar.invalid_trajectories = acc.invalid();
    sidecar.total_trajectories = acc.total();
    if acc.check_invalid_fraction().is_err() {
        sidecar.flagged = true;
    } else if acc.invalid() > 0 {
        sidecar.notes.push(format!("{} trajectories dropped at the boundary", acc.invalid()));
    }
}

/// Executes a resolved config. Outputs are written even for flagged runs;
/// the caller decides the exit status from `sidecar.flagged`.
pub fn execute(cfg: &RunConfig, threads: Option<usize>) -> Result<RunOutcome> {
    let mode = cfg.mode.ok_or_else(|| config_err("no mode given"))?;
    let out = cfg.out_path.clone().ok_or_else(|| config_err("no output path"))?;
    let mut sidecar = Sidecar {
        config: cfg.clone(),
        seed: cfg.master_seed,
        version: version_string(),
        invalid_trajectories: 0,
        total_trajectories: 0,
        flagged: false,
        boundary_mass: None,
        outputs: vec![out.clone()],
        fit: None,
        sqrt_prefactor: None,
        notes: Vec::new(),
    };
    let stride = cfg.sample_stride.unwrap_or(1);
    match mode {
        Mode::Coherent => {
            let (j, dt, t_max) = (cfg.hopping.unwrap(), cfg.dt_kick.unwrap(), cfg.t_max.unwrap());
            let run = run_coherent(j, dt, t_max)?;
            let mut table = Table::new(vec!["t", "mean_n", "mean_n2", "n2_theory"]);
            for (k, (&t, m)) in run.times.iter().zip(&run.moments).enumerate() {
                if (k + 1) % stride == 0 {
                    table.rows.push(vec![t, m.mean, m.second, 2.0 * j * j * t * t]);
                }
            }
            write_table(&out, cfg, &table)?;
            let t_end = *run.times.last().unwrap();
            let p = run.final_field.probabilities();
            let theory = coherent_profile(j, t_end, (-p.offset()) as usize);
            let profile_path = companion(&out, "profile");
            let rows = p.sites().map(|n| vec![n.to_string(), p.get(n).to_string(), theory.get(n).to_string()]);
            let comment = provenance(cfg, &format!(" t={t_end}"));
            write_rows(create(&profile_path)?, &comment, &["n", "P", "P_theory"], rows)?;
            sidecar.outputs.push(profile_path);
            sidecar.boundary_mass = Some(run.monitor.worst());
            sidecar.flagged = run.monitor.is_flagged();
        }
        Mode::Dephased => {
            let (j, dt) = (cfg.hopping.unwrap(), cfg.dt_kick.unwrap());
            let schedule = KickSchedule::new(dt, cfg.t_max.unwrap(), stride)?;
            let walk = DephasedWalk::new(j, schedule)?;
            let acc =
                walk.run_ensemble_unchecked(cfg.n_traj.unwrap(), SeedPolicy::new(cfg.master_seed.unwrap()), threads)?;
            let hop_rate = walk.effective_hop_rate();
            let mut table = Table::new(vec![
                "t",
                "mean_n2",
                "mean_n2_stderr",
                "mean_com2",
                "mean_com2_stderr",
                "mean_com",
                "mean_com_stderr",
                "n2_theory",
                "com2_theory",
            ]);
            fill_ensemble(&mut table, &acc, hop_rate, None);
            write_table(&out, cfg, &table)?;
            ensemble_flag(&acc, &mut sidecar);
            com2_fits(&table, "t", "mean_com2", hop_rate, cfg.window.unwrap(), &mut sidecar);
        }
        Mode::Master1d => {
            let hop_rate = cfg.hop_rate.unwrap();
            let mc = MasterConfig::new(hop_rate, cfg.t_max.unwrap())?;
            let mut table = Table::new(vec!["t", "mean_n", "mean_n2", "total", "n2_theory"]);
            let mut step = 0;
            let (p, monitor) = evolve_master(&mc, |t, p| {
                step += 1;
                if step % stride == 0 {
                    let m = p.moments();
                    table.rows.push(vec![t, m.mean, m.second, p.total(), 2.0 * hop_rate * t]);
                }
            });
            write_table(&out, cfg, &table)?;
            let theory = analytic_classical_profile(hop_rate, mc.t_max, (-p.offset()) as usize);
            let profile_path = companion(&out, "profile");
            let rows = p.sites().map(|n| vec![n.to_string(), p.get(n).to_string(), theory.get(n).to_string()]);
            let comment = provenance(cfg, &format!(" t={}", mc.t_max));
            write_rows(create(&profile_path)?, &comment, &["n", "P", "P_theory"], rows)?;
            sidecar.outputs.push(profile_path);
            sidecar.boundary_mass = Some(monitor.worst());
            sidecar.flagged = monitor.is_flagged();
        }
        Mode::Corr2d => {
            let hop_rate = cfg.hop_rate.unwrap();
            let cc = CorrelationConfig::new(hop_rate, cfg.t_max.unwrap())?;
            let mut pending: Vec<f64> = cfg.snapshot_times.clone().unwrap_or_default();
            pending.sort_by(f64::total_cmp);
            pending.dedup();
            let mut snaps: Vec<(f64, f64, CorrelationGrid)> = Vec::new();
            let mut table = Table::new(vec!["t", "Je_t", "msd", "mass", "com2_theory", "ansatz_theory"]);
            let alpha = ansatz_alpha();
            let mut step = 0;
            let (_, monitor) = evolve_correlation(&cc, |t, g| {
                step += 1;
                while let Some(&want) = pending.first() {
                    if t + 0.5 * cc.dt_ode < want {
                        break;
                    }
                    snaps.push((want, t, g.clone()));
                    pending.remove(0);
                }
                if step % stride == 0 {
                    let jet = hop_rate * t;
                    table.rows.push(vec![
                        t,
                        jet,
                        g.msd(),
                        g.mass(),
                        REFERENCE_COM2_PREFACTOR * jet.sqrt(),
                        alpha * jet.sqrt(),
                    ]);
                }
            })?;
            write_table(&out, cfg, &table)?;
            for (want, t, g) in &snaps {
                let path = companion(&out, &format!("C_t{want}"));
                let mut f = create(&path)?;
                f.write_all(provenance(cfg, &format!(" t={t}")).as_bytes()).map_err(|e| Error::io(&path, e))?;
                g.write_csv(f)?;
                sidecar.outputs.push(path);
            }
            sidecar.boundary_mass = Some(monitor.worst());
            sidecar.flagged = monitor.is_flagged();
            com2_fits(&table, "t", "msd", hop_rate, cfg.window.unwrap(), &mut sidecar);
        }
        Mode::Fiberloop => {
            let coupler = Coupler::from_fraction(cfg.beta_frac.unwrap())?;
            let m_max = cfg.m_max.unwrap();
            let coherent = FiberLoop::new(coupler, m_max, false)?.with_sample_stride(stride)?;
            let coherent_rec = coherent.run_trajectory(&mut SeedPolicy::new(0).stream(0));
            let dephased = FiberLoop::new(coupler, m_max, true)?.with_sample_stride(stride)?;
            let acc = dephased.run_ensemble_unchecked(
                cfg.n_traj.unwrap(),
                SeedPolicy::new(cfg.master_seed.unwrap()),
                threads,
            )?;
            let hop_rate = coupler.effective_hop_rate();
            let mut table = Table::new(vec![
                "m",
                "mean_n2",
                "mean_n2_stderr",
                "mean_com2",
                "mean_com2_stderr",
                "mean_com",
                "mean_com_stderr",
                "coherent_n2",
                "n2_theory",
                "com2_theory",
            ]);
            fill_ensemble(&mut table, &acc, hop_rate, Some(&coherent_rec.second_moment));
            write_table(&out, cfg, &table)?;
            ensemble_flag(&acc, &mut sidecar);
            if !coherent_rec.valid {
                sidecar.flagged = true;
                sidecar.notes.push("coherent reference run reached the boundary".into());
            }
            com2_fits(&table, "m", "mean_com2", hop_rate, cfg.window.unwrap(), &mut sidecar);
        }
        Mode::Fit => {
            let input = cfg.input.clone().unwrap();
            let column = cfg.column.clone().unwrap();
            let series = read_series(&input, &column)?;
            let fit = fit_power_law(&series, cfg.window.unwrap())?;
            let mut f = create(&out)?;
            serde_json::to_writer_pretty(&mut f, &fit)?;
            f.write_all(b"\n").map_err(|e| Error::io(&out, e))?;
            sidecar.fit = Some(fit);
        }
    }
    let path = sidecar_path(&out);
    let mut f = create(&path)?;
    serde_json::to_writer_pretty(&mut f, &sidecar)?;
    f.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
    Ok(RunOutcome { sidecar_path: path, sidecar })
}

/// Reads the first column and `column` of a CSV written by this tool.
pub fn read_series(path: &Path, column: &str) -> Result<SpreadingSeries> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    let header = reader.headers()?.clone();
    let k = header
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| config_err(format!("{}: no column {column:?}", path.display())))?;
    let mut columns: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        for idx in [0, k] {
            let v: f64 = record[idx]
                .parse()
                .map_err(|_| Error::Series(format!("{}: bad number {:?}", path.display(), &record[idx])))?;
            columns.entry(idx).or_default().push(v);
        }
    }
    let times = columns.get(&0).cloned().unwrap_or_default();
    let values = columns.get(&k).cloned().unwrap_or_default();
    SpreadingSeries::new(times, values)
}

/// Runs with `allow_flagged` deciding whether a flagged run is an error.
pub fn run(
    cfg: &RunConfig,
    threads: Option<usize>,
    allow_flagged: bool,
) -> std::result::Result<RunOutcome, RunFailure> {
    check_flagged(execute(cfg, threads)?, allow_flagged)
}

/// Turns a flagged outcome into [`RunFailure::Flagged`] unless allowed.
pub fn check_flagged(outcome: RunOutcome, allow_flagged: bool) -> std::result::Result<RunOutcome, RunFailure> {
    if outcome.sidecar.flagged && !allow_flagged {
        let s = &outcome.sidecar;
        let msg = if s.total_trajectories > 0 {
            format!("{} of {} trajectories reached the lattice boundary", s.invalid_trajectories, s.total_trajectories)
        } else {
            format!("boundary mass {:e} above threshold", s.boundary_mass.unwrap_or(f64::NAN))
        };
        return Err(RunFailure::Flagged(msg));
    }
    Ok(outcome)
}

/// Full command-line entry point; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let prepared = cli.run_config().and_then(|cfg| Ok((cfg, cli.thread_count()?)));
    let (cfg, threads) = match prepared {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    match run(&cfg, threads, cli.allow_flagged) {
        Ok(outcome) => {
            for p in &outcome.sidecar.outputs {
                println!("wrote {}", p.display());
            }
            println!("wrote {}", outcome.sidecar_path.display());
            if let Some(fit) = &outcome.sidecar.fit {
                println!(
                    "fit over {:?}: exponent {:.4} ± {:.4}, prefactor {:.4}",
                    fit.window, fit.exponent, fit.exponent_stderr, fit.prefactor
                );
            }
            for note in &outcome.sidecar.notes {
                eprintln!("note: {note}");
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
