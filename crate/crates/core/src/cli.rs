//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::{self, scenario_json, SCHEMA_VERSION};
use crate::csi::{ecdf, read_snapshot_csv, recurrence_series, snapshot_csv, synthetic_series, SyntheticSpec};
use crate::harness::{scenario_matrix, Campaign, CampaignResult, Scenario};
use crate::oracle::{self, MAX_K, MAX_M, MAX_TAU_P};
use crate::rng::seeded;
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Oracle agreement required by `oracle-check`.
pub const ORACLE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(name = "gfad", version, about = "Grant-free device activity detection simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a Monte-Carlo campaign (or a scenario matrix) and write ROC results.
    Simulate(SimulateArgs),
    /// Channel-recurrence correlation and ECDF of a CSI snapshot file.
    Correlate(CorrelateArgs),
    /// Write a synthetic CSI snapshot file with a known recurrence profile.
    SynthCsi(SynthCsiArgs),
    /// Cross-check the structured estimator against the dense Kronecker oracle.
    OracleCheck(OracleArgs),
    /// Print the effective configuration (defaults plus overrides).
    Config(ConfigArgs),
}

#[derive(Debug, Args, Default)]
pub struct Overrides {
    #[arg(long)]
    pub n_sim: Option<usize>,
    /// co-located or cell-free
    #[arg(long)]
    pub mode: Option<String>,
    /// Total antenna count M
    #[arg(long = "m")]
    pub m: Option<usize>,
    #[arg(long = "k")]
    pub k: Option<usize>,
    #[arg(long)]
    pub tau_p: Option<usize>,
    #[arg(long)]
    pub rho_mw: Option<f64>,
    #[arg(long)]
    pub rho_dbm: Option<f64>,
    #[arg(long)]
    pub sigma2_dbm: Option<f64>,
    #[arg(long)]
    pub epsilon_a: Option<f64>,
    #[arg(long)]
    pub area_m: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub v_min: Option<f64>,
    #[arg(long)]
    pub v_max: Option<f64>,
    #[arg(long)]
    pub v_points: Option<usize>,
    #[arg(long)]
    pub redraw_pilots: bool,
    /// Any configuration key, as KEY=VALUE (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl Overrides {
    fn pairs(&self) -> Result<Vec<(String, String)>, Error> {
        let mut out: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        };
        push("n_sim", self.n_sim.map(|v| v.to_string()));
        push("mode", self.mode.clone());
        push("m_total", self.m.map(|v| v.to_string()));
        push("k_devices", self.k.map(|v| v.to_string()));
        push("tau_p", self.tau_p.map(|v| v.to_string()));
        push("rho_mw", self.rho_mw.map(|v| v.to_string()));
        push("rho_dbm", self.rho_dbm.map(|v| v.to_string()));
        push("sigma2_dbm", self.sigma2_dbm.map(|v| v.to_string()));
        push("epsilon_a", self.epsilon_a.map(|v| v.to_string()));
        push("area_m", self.area_m.map(|v| v.to_string()));
        push("seed", self.seed.map(|v| v.to_string()));
        push("v_min", self.v_min.map(|v| v.to_string()));
        push("v_max", self.v_max.map(|v| v.to_string()));
        push("v_points", self.v_points.map(|v| v.to_string()));
        push("redraw_pilots", self.redraw_pilots.then(|| "true".to_string()));
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::config("--set", format!("expected KEY=VALUE, got `{kv}`")))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }

    /// Loads `config` (or the defaults) and applies the overrides.
    pub fn resolve(&self, config: Option<&Path>) -> Result<Scenario, Error> {
        let mut s = match config {
            Some(p) => config::load_scenario(p)?,
            None => Scenario::default(),
        };
        config::apply_all(&mut s, &self.pairs()?)?;
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Flat key-value config file or a previous summary.json
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    /// Sweep a parameter, as KEY=V1,V2,... (repeatable; Cartesian product)
    #[arg(long = "sweep", value_name = "KEY=VALUES")]
    pub sweep: Vec<String>,
    /// Worker threads (results do not depend on it)
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.9)]
    pub threshold: f64,
    /// Output directory for series.csv and ecdf.csv
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthCsiArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub snapshots: usize,
    #[arg(long, default_value_t = 4)]
    pub antennas: usize,
    #[arg(long, default_value_t = 0.91)]
    pub fraction_above: f64,
    #[arg(long, default_value_t = 0.9)]
    pub threshold: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long = "m", default_value_t = 3)]
    pub m: usize,
    #[arg(long = "k", default_value_t = 4)]
    pub k: usize,
    #[arg(long, default_value_t = 2)]
    pub tau_p: usize,
    #[arg(long, default_value_t = 100)]
    pub seeds: u64,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Correlate(a) => cmd_correlate(&a),
        Command::SynthCsi(a) => cmd_synth_csi(&a),
        Command::OracleCheck(a) => cmd_oracle_check(&a),
        Command::Config(a) => match a.overrides.resolve(a.config.as_deref()) {
            Ok(s) => {
                print!("{}", config::to_config_text(&s));
                EXIT_OK
            }
            Err(e) => report(&e),
        },
    }
}

fn report(e: &Error) -> i32 {
    eprintln!("error: {e}");
    if e.is_usage() {
        EXIT_USAGE
    } else {
        EXIT_RUNTIME
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), i32> {
    fs::write(path, contents).map_err(|e| {
        eprintln!("error: cannot write {}: {e}", path.display());
        EXIT_RUNTIME
    })
}

fn parse_sweeps(raw: &[String]) -> Result<Vec<(String, Vec<String>)>, Error> {
    raw.iter()
        .map(|s| {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::config("--sweep", format!("expected KEY=V1,V2,..., got `{s}`")))?;
            Ok((
                k.trim().to_string(),
                v.split(',')
                    .map(|x| x.trim().to_string())
                    .filter(|x| !x.is_empty())
                    .collect(),
            ))
        })
        .collect()
}

pub fn cmd_simulate(args: &SimulateArgs) -> i32 {
    let base = match args.overrides.resolve(args.config.as_deref()) {
        Ok(s) => s,
        Err(e) => return report(&e),
    };
    let scenarios = match parse_sweeps(&args.sweep).and_then(|sw| scenario_matrix(&base, &sw)) {
        Ok(s) => s,
        Err(e) => return report(&e),
    };
    let single = args.sweep.is_empty();
    for (i, scenario) in scenarios.iter().enumerate() {
        let dir = if single {
            args.out.clone()
        } else {
            args.out.join(format!("{i:03}_{}", scenario.label()))
        };
        let result = match Campaign::new(scenario.clone()).and_then(|c| c.run(args.threads)) {
            Ok(r) => r,
            Err(e) => return report(&e),
        };
        if let Err(code) = write_outputs(&dir, &result) {
            return code;
        }
        let o = result.roc.v_opt();
        println!(
            "{}: {} trials ({} failed), v_opt = {}, P_fa = {} (floor {}), P_md = {} (floor {}) -> {}",
            scenario.label(),
            result.n_trials(),
            result.failed.len(),
            o.v,
            o.p_fa,
            o.floor_fa,
            o.p_md,
            o.floor_md,
            dir.display()
        );
    }
    EXIT_OK
}

pub fn summary_json(result: &CampaignResult) -> serde_json::Value {
    let o = result.roc.v_opt();
    let nan_null = |x: f64| if x.is_nan() { serde_json::Value::Null } else { json!(x) };
    json!({
        "schema_version": SCHEMA_VERSION,
        "seed": result.scenario.master_seed,
        "scenario": scenario_json(&result.scenario),
        "n_trials": result.n_trials(),
        "n_failed": result.failed.len(),
        "failed_trials": result.failed,
        "v_opt": {
            "v": o.v,
            "p_fa": nan_null(o.p_fa),
            "p_md": nan_null(o.p_md),
            "n_fa": o.n_fa,
            "n_miss": o.n_miss,
            "floor_fa": o.floor_fa,
            "floor_md": o.floor_md,
            "p_fa_zero": o.n_fa == 0,
            "p_md_zero": o.n_miss == 0,
        },
        "roc_monotone": result.roc.is_monotone(),
        "timing": result.timing,
    })
}

pub fn trials_csv(result: &CampaignResult) -> String {
    let mut rows: Vec<(usize, String)> = result
        .trials
        .iter()
        .map(|t| {
            (
                t.trial_index,
                format!(
                    "{},ok,{},{},{}",
                    t.trial_index, t.n_active, t.misses_at_v_opt, t.false_alarms_at_v_opt
                ),
            )
        })
        .chain(
            result
                .failed
                .iter()
                .map(|f| (f.trial_index, format!("{},failed,,,", f.trial_index))),
        )
        .collect();
    rows.sort_by_key(|r| r.0);
    let mut out = String::from("trial_index,status,n_active,misses_at_v_opt,false_alarms_at_v_opt\n");
    for (_, r) in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

/// Writes `roc.csv`, `summary.json` and `trials.csv` into `dir`.
pub fn write_outputs(dir: &Path, result: &CampaignResult) -> Result<(), i32> {
    fs::create_dir_all(dir).map_err(|e| {
        eprintln!("error: cannot create {}: {e}", dir.display());
        EXIT_RUNTIME
    })?;
    write_file(&dir.join("roc.csv"), &result.roc.to_csv())?;
    let summary = serde_json::to_string_pretty(&summary_json(result)).expect("serializable summary");
    write_file(&dir.join("summary.json"), &(summary + "\n"))?;
    write_file(&dir.join("trials.csv"), &trials_csv(result))
}

pub fn cmd_correlate(args: &CorrelateArgs) -> i32 {
    if !(0.0..=1.0).contains(&args.threshold) {
        return report(&Error::config("--threshold", "must lie in [0, 1]"));
    }
    let series = match read_snapshot_csv(&args.input) {
        Ok(s) => s,
        Err(e) => return report(&e),
    };
    let deltas = match recurrence_series(&series) {
        Ok(d) => d,
        Err(e) => return report(&e),
    };
    let valid: Vec<f64> = deltas.iter().flatten().copied().collect();
    let missing = deltas.len() - valid.len();
    if missing > 0 {
        log::warn!("{missing} snapshots have zero norm and are excluded");
    }
    let e = match ecdf(&valid) {
        Ok(e) => e,
        Err(e) => return report(&e),
    };
    let mut series_csv = String::from("index,timestamp,delta\n");
    for (j, d) in deltas.iter().enumerate() {
        let ts = series.timestamps.as_ref().map_or(String::new(), |t| t[j].to_string());
        let d = d.map_or(String::new(), |d| d.to_string());
        series_csv.push_str(&format!("{j},{ts},{d}\n"));
    }
    let mut ecdf_csv = String::from("value,fraction\n");
    for (v, f) in e.steps() {
        ecdf_csv.push_str(&format!("{v},{f}\n"));
    }
    if let Err(e) = fs::create_dir_all(&args.out) {
        eprintln!("error: cannot create {}: {e}", args.out.display());
        return EXIT_RUNTIME;
    }
    if let Err(code) = write_file(&args.out.join("series.csv"), &series_csv)
        .and_then(|_| write_file(&args.out.join("ecdf.csv"), &ecdf_csv))
    {
        return code;
    }
    println!("snapshots: {} (missing {missing})", deltas.len());
    println!(
        "fraction_above {}: {}",
        args.threshold,
        e.fraction_above(args.threshold)
    );
    EXIT_OK
}

pub fn cmd_synth_csi(args: &SynthCsiArgs) -> i32 {
    let spec = SyntheticSpec {
        n_snapshots: args.snapshots,
        n_antennas: args.antennas,
        fraction_above: args.fraction_above,
        threshold: args.threshold,
        ..SyntheticSpec::default()
    };
    match synthetic_series(&spec, &mut seeded(args.seed)) {
        Ok(s) => match write_file(&args.out, &snapshot_csv(&s)) {
            Ok(()) => EXIT_OK,
            Err(code) => code,
        },
        Err(e) => report(&e),
    }
}

pub fn cmd_oracle_check(args: &OracleArgs) -> i32 {
    let (m, k, tau_p) = (args.m, args.k, args.tau_p);
    if m == 0 || k == 0 || tau_p == 0 || m > MAX_M || k > MAX_K || tau_p > MAX_TAU_P {
        eprintln!("error: oracle sizes must satisfy 1 <= M <= {MAX_M}, 1 <= K <= {MAX_K}, 1 <= tau_p <= {MAX_TAU_P}");
        return EXIT_USAGE;
    }
    if m * tau_p < k {
        eprintln!("error: M*tau_p = {} < K = {k}: nothing to compare", m * tau_p);
        return EXIT_USAGE;
    }
    let reports = match oracle::oracle_suite(m, k, tau_p, args.seeds) {
        Ok(r) => r,
        Err(e) => return report(&e),
    };
    let Some(worst) = reports.iter().max_by(|a, b| a.worst().total_cmp(&b.worst())) else {
        eprintln!("error: no seeds requested");
        return EXIT_USAGE;
    };
    println!(
        "{} instances (M={m}, K={k}, tau_p={tau_p}); worst relative error {:e} at seed {} (gram {:e}, signal {:e}, estimate {:e})",
        reports.len(),
        worst.worst(),
        worst.seed,
        worst.gram_error,
        worst.signal_error,
        worst.estimate_error
    );
    if worst.worst() <= ORACLE_TOLERANCE {
        EXIT_OK
    } else {
        eprintln!("oracle mismatch above {ORACLE_TOLERANCE:e}");
        EXIT_RUNTIME
    }
}
