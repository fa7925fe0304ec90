//! Command-line front end. Every command is deterministic given its arguments
//! and configuration; exit codes follow [`Error::exit_code`] plus the verdict
//! codes 3 (fails) and 4 (no second-order matching prior exists).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::coverage::{self, CoverageConfig};
use crate::error::{Error, Result};
use crate::family::catalog::{self, Settings};
use crate::family::FamilyModel;
use crate::matching::{self, Verdict};
use crate::priors::{self, Construction, PriorDescriptor};

pub const EXIT_FAILS: i32 = 3;
pub const EXIT_NONEXISTENCE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "priorforge", version, about = "Objective priors: construction, matching checks and coverage experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// The family catalog.
    Families {
        #[command(subcommand)]
        action: FamiliesCmd,
    },
    /// Prior construction.
    Prior {
        #[command(subcommand)]
        action: PriorCmd,
    },
    /// Probability-matching checks.
    Matching {
        #[command(subcommand)]
        action: MatchingCmd,
    },
    /// Monte Carlo experiments.
    Coverage {
        #[command(subcommand)]
        action: CoverageCmd,
    },
}

#[derive(Debug, Subcommand)]
pub enum FamiliesCmd {
    List {
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args)]
pub struct FamilyArgs {
    #[arg(long)]
    pub family: String,
    /// Fixed family settings such as `m=5` or `n_cells=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub settings: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum PriorCmd {
    /// Tabulate log π on a grid (CSV) and write its descriptor (JSON).
    Derive {
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long)]
        method: String,
        /// Points per coordinate.
        #[arg(long, default_value_t = 33)]
        grid: usize,
        /// Interest coordinate for two-group constructions.
        #[arg(long)]
        interest: Option<usize>,
        /// CSV output; the descriptor goes next to it with a .json extension.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OrderArg {
    First,
    Second,
    Existence,
}

#[derive(Debug, Subcommand)]
pub enum MatchingCmd {
    /// Evaluate a matching residual; the exit code carries the verdict.
    Check {
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long)]
        prior: String,
        #[arg(long, value_enum)]
        order: OrderArg,
        #[arg(long)]
        interest: Option<usize>,
        /// JSON report; a CSV of the residuals goes next to it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum CoverageCmd {
    /// Run the experiment described by a JSON configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replications: Option<usize>,
    },
}

/// Configuration files for `coverage run`, selected by their `experiment` field.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum ExperimentConfig {
    Coverage(CoverageConfig),
    RateScan {
        #[serde(flatten)]
        template: CoverageConfig,
        ns: Vec<usize>,
    },
    ExactMatchingNormal {
        n: usize,
        seed: u64,
        alphas: Vec<f64>,
        #[serde(default = "default_datasets")]
        datasets: usize,
        #[serde(default = "coverage_default_replications")]
        replications: usize,
    },
    NeymanScott {
        n_cells: usize,
        k: usize,
        sigma_true: f64,
        seed: u64,
    },
}

fn default_datasets() -> usize {
    1000
}

fn coverage_default_replications() -> usize {
    coverage::DEFAULT_REPLICATIONS
}

impl ExperimentConfig {
    fn apply_overrides(&mut self, seed: Option<u64>, reps: Option<usize>) {
        match self {
            ExperimentConfig::Coverage(c) | ExperimentConfig::RateScan { template: c, .. } => {
                if let Some(s) = seed {
                    c.seed = s;
                }
                if let Some(r) = reps {
                    c.replications = r;
                }
            }
            ExperimentConfig::ExactMatchingNormal { seed: s0, replications, .. } => {
                if let Some(s) = seed {
                    *s0 = s;
                }
                if let Some(r) = reps {
                    *replications = r;
                }
            }
            ExperimentConfig::NeymanScott { seed: s0, .. } => {
                if let Some(s) = seed {
                    *s0 = s;
                }
            }
        }
    }

    fn seed(&self) -> u64 {
        match self {
            ExperimentConfig::Coverage(c) | ExperimentConfig::RateScan { template: c, .. } => c.seed,
            ExperimentConfig::ExactMatchingNormal { seed, .. } | ExperimentConfig::NeymanScott { seed, .. } => *seed,
        }
    }
}

/// Provenance written beside every experiment's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the effective configuration (after command-line overrides).
    pub config_hash: String,
    pub config: Value,
    pub seed: u64,
    pub version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub outputs: Vec<String>,
}

pub fn config_hash(config: &Value) -> String {
    let bytes = serde_json::to_vec(config).expect("a JSON value always serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn parse_settings(items: &[String]) -> Result<Settings> {
    let mut s = Settings::new();
    for it in items {
        let (k, v) = it.split_once('=').ok_or_else(|| Error::Config(format!("setting `{it}` is not KEY=VALUE")))?;
        let v: f64 = v.trim().parse().map_err(|_| Error::Config(format!("setting `{it}` has a non-numeric value")))?;
        s.insert(k.trim().to_string(), v);
    }
    Ok(s)
}

fn build_family(args: &FamilyArgs) -> Result<FamilyModel> {
    catalog::build(&args.family, &parse_settings(&args.settings)?)
}

fn descriptor_for(family: &FamilyModel, method: &str, interest: Option<usize>) -> Result<PriorDescriptor> {
    let c: Construction = method.parse()?;
    let params = match interest {
        Some(i) => json!({ "interest_index": i }),
        None => json!({}),
    };
    Ok(PriorDescriptor { construction: c.as_str().to_string(), family_id: family.id(), anchor: None, params })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn json_text<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

/// Parse arguments and run; returns the process exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if e.use_stderr() { write!(stderr, "{e}") } else { write!(stdout, "{e}") };
            return code;
        }
    };
    match run(&cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Families { action: FamiliesCmd::List { json } } => families_list(*json, out),
        Command::Prior { action: PriorCmd::Derive { family, method, grid, interest, out: path } } => {
            prior_derive(family, method, *grid, *interest, path, out)
        }
        Command::Matching { action: MatchingCmd::Check { family, prior, order, interest, out: path } } => {
            matching_check(family, prior, *order, *interest, path.as_deref(), out)
        }
        Command::Coverage { action: CoverageCmd::Run { config, out: dir, seed, replications } } => {
            coverage_run(config, dir, *seed, *replications, out)
        }
    }
}

#[derive(Debug, Serialize)]
struct FamilyListing {
    id: String,
    description: String,
    parameters: Vec<String>,
    space: Vec<[f64; 2]>,
    interest_index: usize,
    exact_fisher: bool,
    exact_g3: bool,
}

fn families_list(as_json: bool, out: &mut dyn Write) -> Result<i32> {
    let mut rows = Vec::new();
    for id in catalog::IDS {
        let f = catalog::family(id)?;
        rows.push(FamilyListing {
            id: f.id(),
            description: f.description(),
            parameters: f.param_names(),
            space: f.space().boxes().iter().map(|b| [b.lower, b.upper]).collect(),
            interest_index: f.interest_index(),
            exact_fisher: f.has_exact_fisher(),
            exact_g3: f.has_exact_g3(),
        });
    }
    if as_json {
        out.write_all(json_text(&rows)?.as_bytes())?;
        return Ok(0);
    }
    writeln!(out, "{:<22} {:<28} {:<12} description", "id", "parameters", "exact")?;
    for r in &rows {
        let exact = match (r.exact_fisher, r.exact_g3) {
            (true, true) => "I, g3",
            (true, false) => "I",
            (false, true) => "g3",
            (false, false) => "-",
        };
        let mut params = r.parameters.join(", ");
        if params.len() > 27 {
            params = format!("{}, …", r.parameters[..2].join(", "));
        }
        writeln!(out, "{:<22} {:<28} {:<12} {}", r.id, params, exact, r.description)?;
    }
    Ok(0)
}

fn prior_derive(fargs: &FamilyArgs, method: &str, per_coord: usize, interest: Option<usize>, path: &Path, out: &mut dyn Write) -> Result<i32> {
    let family = build_family(fargs)?;
    let desc = descriptor_for(&family, method, interest)?;
    let prior = priors::from_descriptor(&family, &desc)?;
    let grid = family.space().grid(per_coord.max(2));
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = family.param_names();
    header.push("log_prior".into());
    w.write_record(&header)?;
    for (t, lp) in prior.tabulate(&grid)? {
        let mut row: Vec<String> = t.iter().map(|v| format!("{v:.16e}")).collect();
        row.push(format!("{lp:.16e}"));
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    let json_path = path.with_extension("json");
    write_text(&json_path, &json_text(prior.descriptor())?)?;
    writeln!(out, "wrote {} and {}", path.display(), json_path.display())?;
    Ok(0)
}

fn verdict_code(v: Verdict) -> i32 {
    match v {
        Verdict::Matches => 0,
        Verdict::Fails => EXIT_FAILS,
        Verdict::NoSecondOrderExists => EXIT_NONEXISTENCE,
    }
}

fn matching_check(fargs: &FamilyArgs, prior_tag: &str, order: OrderArg, interest: Option<usize>, path: Option<&Path>, out: &mut dyn Write) -> Result<i32> {
    let family = build_family(fargs)?;
    let family = match interest {
        Some(i) => family.with_interest(i)?,
        None => family,
    };
    let grid = if family.dim() == 1 { matching::default_grid(family.space()) } else { family.diagnostic_grid() };
    let report = if order == OrderArg::Existence {
        matching::second_order_existence(&family, &grid)?
    } else {
        let desc = descriptor_for(&family, prior_tag, interest)?;
        let prior = priors::from_descriptor(&family, &desc)?;
        match (order, family.dim()) {
            (OrderArg::First, 1) => matching::first_order_residual(&prior, &family, &grid)?,
            (OrderArg::Second, 1) => matching::second_order_residual(&prior, &family, &grid)?,
            (OrderArg::First, _) => matching::nuisance_first_order_residual(&prior, &family, &grid)?,
            _ => matching::orthogonal_second_order_for_prior(&prior, &family, &grid)?,
        }
    };
    if let Some(p) = path {
        write_text(p, &(report.to_json()? + "\n"))?;
        let csv_path = p.with_extension("csv");
        let mut buf = Vec::new();
        report.write_csv(&mut buf)?;
        fs::write(csv_path, buf)?;
    }
    writeln!(
        out,
        "{} {} {}: {} (max scaled residual {:.3e})",
        report.family,
        report.prior,
        report.check,
        report.verdict.as_str(),
        report.max_scaled_residual
    )?;
    Ok(verdict_code(report.verdict))
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)?;
    let raw: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: malformed JSON at line {}, column {}: {e}", path.display(), e.line(), e.column())))?;
    // a manifest from an earlier run replays its effective configuration
    let raw = match raw {
        Value::Object(mut m) if m.contains_key("config_hash") && m.contains_key("config") => {
            let cfg = m.remove("config").unwrap_or(Value::Null);
            let expected = m.get("config_hash").and_then(Value::as_str).unwrap_or_default();
            if config_hash(&cfg) != expected {
                return Err(Error::Config(format!("{}: manifest config does not match its config_hash", path.display())));
            }
            cfg
        }
        other => other,
    };
    // a bare coverage configuration needs no experiment tag
    let raw = match raw {
        Value::Object(mut m) if !m.contains_key("experiment") => {
            m.insert("experiment".into(), Value::String("coverage".into()));
            Value::Object(m)
        }
        other => other,
    };
    serde_json::from_value(raw).map_err(|e| Error::Config(format!("{}: invalid configuration: {e}", path.display())))
}

fn coverage_run(config: &Path, dir: &Path, seed: Option<u64>, reps: Option<usize>, out: &mut dyn Write) -> Result<i32> {
    let mut cfg = load_config(config)?;
    cfg.apply_overrides(seed, reps);
    let effective = serde_json::to_value(&cfg)?;
    let threads = coverage::threads_from_env()?;
    let started = now();
    fs::create_dir_all(dir)?;
    let mut outputs = Vec::new();
    let mut emit = |name: &str, bytes: Vec<u8>| -> Result<()> {
        fs::write(dir.join(name), bytes)?;
        outputs.push(name.to_string());
        Ok(())
    };
    let summary = coverage::with_threads(threads, || -> Result<String> {
        Ok(match &cfg {
            ExperimentConfig::Coverage(c) => {
                let r = coverage::simulate_coverage(c)?;
                emit("coverage.json", json_text(&r)?.into_bytes())?;
                let mut csv = Vec::new();
                r.write_csv(&mut csv)?;
                emit("coverage.csv", csv)?;
                let worst = r.per_alpha.iter().map(|a| ((a.coverage - a.nominal) / a.std_error).abs()).fold(0.0, f64::max);
                format!("coverage for {} alphas, worst deviation {:.2} SE, {} failures", r.per_alpha.len(), worst, r.failures)
            }
            ExperimentConfig::RateScan { template, ns } => {
                let rows = coverage::coverage_rate_scan(template, ns)?;
                emit("rate_scan.json", json_text(&rows)?.into_bytes())?;
                let mut csv = Vec::new();
                coverage::write_scan_csv(&rows, &mut csv)?;
                emit("rate_scan.csv", csv)?;
                format!("rate scan over {} sample sizes", ns.len())
            }
            ExperimentConfig::ExactMatchingNormal { n, seed, alphas, datasets, replications } => {
                let r = coverage::exact_matching_normal(*n, *seed, alphas, *datasets, *replications)?;
                emit("exact_matching.json", json_text(&r)?.into_bytes())?;
                format!(
                    "identities {} (max rel. error μ {:.2e}, σ² {:.2e})",
                    if r.identities_hold { "hold" } else { "FAIL" },
                    r.max_rel_error_mu,
                    r.max_rel_error_sigma2
                )
            }
            ExperimentConfig::NeymanScott { n_cells, k, sigma_true, seed } => {
                let r = coverage::neyman_scott_experiment(*n_cells, *k, *sigma_true, *seed)?;
                emit("neyman_scott.json", json_text(&r)?.into_bytes())?;
                format!("posterior mean of σ²: Jeffreys {:.6}, reference {:.6}", r.jeffreys_mean_closed, r.reference_mean_closed)
            }
        })
    })??;
    let manifest = RunManifest {
        command: "coverage run".into(),
        config_hash: config_hash(&effective),
        config: effective,
        seed: cfg.seed(),
        version: env!("CARGO_PKG_VERSION").into(),
        started_unix: started,
        finished_unix: now(),
        outputs,
    };
    write_text(&dir.join("manifest.json"), &json_text(&manifest)?)?;
    writeln!(out, "{summary}")?;
    Ok(0)
}
