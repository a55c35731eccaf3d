//! Command-line interface: ingestion, configuration, and orchestration of the
//! cluster → mode → sample → diagnose pipeline.
//!
//! Configuration is a flat `key = value` file mirrored one-to-one by CLI
//! flags, with flags taking precedence. Every resolved setting — including
//! defaults — feeds a configuration hash, and every output file embeds the
//! seed, that hash, and the build id in its header, so any artifact can be
//! traced to the exact run that produced it and reproduced byte-for-byte
//! from (input files, config, seed).
//!
//! Chain files hold kept draws only (burn-in goes to a separate file on
//! request) as CSV with `# key: value` header lines; the telemetry log has
//! one line per iteration with fields `iter,accepted,m,sigma2,de,u_refreshed`;
//! diagnostic reports are JSON.

use clap::{Args, Parser, Subcommand};
use ndarray::{Array1, Array2, ArrayView2};
use std::collections::{BTreeMap, HashMap};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::clustering::{
    cluster_by_class, cluster_rows, standardize, ClusterModel, Standardization,
};
use crate::data::{format_float, ingest_csv, synth_logistic, write_csv, Dataset, StratumPredicate};
use crate::diagnostics::{
    efficiency_report, mean_equality_test, relative_report, report_for_chain, EfficiencyReport,
    MeanTest,
};
use crate::error::{Error, Result};
use crate::estimator::DifferenceEstimator;
use crate::model::{GaussianLinear, Glm, GlmSpec, Logistic, Model};
use crate::sampler::{
    find_mode, run_mcmc_exact, run_pmcmc, ChainOutput, GaussianPrior, Proposal, SamplerConfig,
};

/// Source revision baked in at compile time (see `build.rs`).
const BUILD_ID: &str = env!("BUILD_ID");

/// Entry point used by the binary; returns the process exit code.
///
/// Exit codes: 0 success, 1 validation error (bad flags, files, or settings),
/// 2 numerical failure (non-finite values, failed factorizations, stalled
/// adaptation).
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // --help/--version arrive here as "errors"; print and succeed
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[derive(Parser)]
#[command(
    name = "submc",
    version,
    about = "Subsampling MCMC with clustered difference estimators"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build an ε-ball cluster artifact from a dataset
    Cluster(ClusterArgs),
    /// Find the posterior mode and curvature for proposal construction
    Mode(ModeArgs),
    /// Run one exact or subsampled MCMC chain
    Sample(SampleArgs),
    /// Compute inefficiency factors and mean-equality tests for chain files
    Diagnose(DiagnoseArgs),
    /// Generate a synthetic logistic-regression dataset
    Synth(SynthArgs),
    /// Cluster, find the mode, run exact + subsampled chains, and report
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct ClusterArgs {
    /// Flat key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input dataset CSV (config key `data`)
    #[arg(long)]
    input: Option<String>,
    /// Response column name
    #[arg(long)]
    response: Option<String>,
    /// Prepend an all-ones intercept column
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    add_intercept: Option<bool>,
    /// Standardize covariates before clustering
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    standardize: Option<bool>,
    /// Ball radius ε for the greedy pass
    #[arg(long)]
    epsilon: Option<f64>,
    /// Cluster covariates separately within each response class
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    by_class: Option<bool>,
    /// Rows matching this predicate (e.g. "y == 1") are kept exact, not clustered
    #[arg(long)]
    exact_stratum: Option<String>,
    /// Cluster artifact to write (config key `out`)
    #[arg(long)]
    output: Option<String>,
}

#[derive(Args)]
struct ModeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input dataset CSV
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    response: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    add_intercept: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    standardize: Option<bool>,
    /// Model name: logistic, gaussian, poisson, glm-gaussian, bernoulli
    #[arg(long)]
    model: Option<String>,
    /// Noise standard deviation for the gaussian model
    #[arg(long)]
    sigma: Option<f64>,
    /// Prior variance τ of the isotropic Gaussian prior
    #[arg(long)]
    tau: Option<f64>,
    /// Starting point as comma-separated floats (zeros when omitted)
    #[arg(long)]
    theta0: Option<String>,
    /// Mode report to write (JSON)
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input dataset CSV
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    response: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    add_intercept: Option<bool>,
    /// Cluster artifact (required for the pmcmc engine)
    #[arg(long)]
    clusters: Option<String>,
    /// Chain engine: pmcmc (default) or exact
    #[arg(long)]
    engine: Option<String>,
    /// Standardize covariates (exact engine without an artifact only;
    /// otherwise the artifact's standardization is applied)
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    standardize: Option<bool>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Proposal kind: rwm or imh
    #[arg(long)]
    proposal: Option<String>,
    /// Random-walk step-scale multiplier (default 2.38²/p)
    #[arg(long)]
    scale: Option<f64>,
    /// Degrees of freedom of the independence proposal's t distribution
    #[arg(long)]
    dof: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// Subsample refresh probability ω ∈ (0, 1]
    #[arg(long)]
    omega: Option<f64>,
    /// Variance ceiling enforced by adaptive augmentation
    #[arg(long)]
    vmax: Option<f64>,
    /// Initial subsample size
    #[arg(long)]
    m0: Option<usize>,
    /// Total iterations, burn-in included
    #[arg(long)]
    iters: Option<usize>,
    /// Leading iterations treated as burn-in
    #[arg(long)]
    burnin: Option<usize>,
    /// Grow the subsample whenever σ̂_z² exceeds vmax
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    adaptive: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    theta0: Option<String>,
    /// Predicate that must reproduce the artifact's exact stratum (validation)
    #[arg(long)]
    exact_stratum: Option<String>,
    /// Evaluate proxy curvature once at the mode instead of per iteration
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    freeze_hessians: Option<bool>,
    /// Chain CSV to write (kept draws)
    #[arg(long)]
    out: Option<String>,
    /// Write burn-in draws to this separate file
    #[arg(long)]
    burnin_out: Option<String>,
    /// Write per-iteration telemetry to this file
    #[arg(long)]
    telemetry: Option<String>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Chain CSV to analyze
    #[arg(long)]
    chain: Option<String>,
    /// Baseline chain CSV for relative efficiency and mean-equality tests
    #[arg(long)]
    baseline: Option<String>,
    /// Extra leading rows of the chain files to discard
    #[arg(long)]
    burnin: Option<usize>,
    /// Significance level of the mean-equality test
    #[arg(long)]
    level: Option<f64>,
    /// Override the evaluations-per-iteration recorded in the chain header
    #[arg(long)]
    de_mean: Option<f64>,
    /// Report JSON to write
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of rows
    #[arg(long)]
    n: Option<usize>,
    /// True coefficients, comma-separated (length = covariate count incl. intercept)
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset CSV to write
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    response: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    add_intercept: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    standardize: Option<bool>,
    /// Cluster artifact path; reused when it exists, built and written otherwise
    #[arg(long)]
    clusters: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    by_class: Option<bool>,
    #[arg(long)]
    exact_stratum: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    proposal: Option<String>,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    dof: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// Refresh probabilities to sweep, comma-separated (one chain file each)
    #[arg(long)]
    omegas: Option<String>,
    /// Also run the exact-likelihood baseline chain
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    exact: Option<bool>,
    #[arg(long)]
    vmax: Option<f64>,
    #[arg(long)]
    m0: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    adaptive: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    theta0: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    freeze_hessians: Option<bool>,
    #[arg(long)]
    level: Option<f64>,
    /// Output path prefix for chain and telemetry files
    #[arg(long)]
    out: Option<String>,
    /// Combined report JSON (default: <out>_report.json)
    #[arg(long)]
    report: Option<String>,
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Cluster(a) => run_cluster(a),
        Cmd::Mode(a) => run_mode(a),
        Cmd::Sample(a) => run_sample(a),
        Cmd::Diagnose(a) => run_diagnose(a),
        Cmd::Synth(a) => run_synth(a),
        Cmd::Pipeline(a) => run_pipeline(a),
    }
}

// ---------------------------------------------------------------------------
// configuration resolution

/// Every key a configuration file may contain. Flags use the same names
/// (cluster's `--input`/`--output` map to `data`/`out`).
const KNOWN_KEYS: &[&str] = &[
    "add-intercept",
    "adaptive",
    "baseline",
    "beta",
    "burnin",
    "burnin-out",
    "by-class",
    "chain",
    "clusters",
    "data",
    "de-mean",
    "dof",
    "engine",
    "epsilon",
    "exact",
    "exact-stratum",
    "freeze-hessians",
    "iters",
    "level",
    "m0",
    "model",
    "n",
    "omega",
    "omegas",
    "out",
    "proposal",
    "report",
    "response",
    "scale",
    "seed",
    "sigma",
    "standardize",
    "tau",
    "telemetry",
    "theta0",
    "vmax",
];

/// Parse a flat `key = value` configuration file.
///
/// Blank lines and lines starting with `#` are skipped; keys must come from
/// [`KNOWN_KEYS`]. Values keep everything after the first `=`, so predicates
/// like `exact-stratum = y == 1` work unquoted.
fn parse_config_file(path: &Path) -> Result<HashMap<String, String>> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(&display, e))?;
    let mut map = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::InvalidValue {
                name: "config".to_string(),
                reason: format!("{display}:{}: expected 'key = value'", lineno + 1),
            });
        };
        let key = key.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::InvalidValue {
                name: "config".to_string(),
                reason: format!("{display}:{}: unknown key '{key}'", lineno + 1),
            });
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

/// Merges flag values over file values over defaults, recording every
/// resolved setting so the configuration hash covers the complete effective
/// configuration.
struct Resolver {
    file: HashMap<String, String>,
    used: BTreeMap<String, String>,
}

impl Resolver {
    fn new(command: &str, config: Option<&Path>) -> Result<Self> {
        let file = match config {
            Some(p) => parse_config_file(p)?,
            None => HashMap::new(),
        };
        let mut used = BTreeMap::new();
        used.insert("command".to_string(), command.to_string());
        Ok(Resolver { file, used })
    }

    fn record(&mut self, key: &str, value: String) {
        self.used.insert(key.to_string(), value);
    }

    /// String-valued setting; `None` when neither flag nor file provides it.
    fn str_opt(&mut self, key: &str, flag: Option<String>) -> Option<String> {
        let v = flag.or_else(|| self.file.get(key).cloned());
        if let Some(ref s) = v {
            self.record(key, s.clone());
        }
        v
    }

    fn str_req(&mut self, key: &str, flag: Option<String>) -> Result<String> {
        self.str_opt(key, flag).ok_or_else(|| Error::InvalidValue {
            name: key.to_string(),
            reason: format!("required: pass --{key} or set '{key}' in the config file"),
        })
    }

    fn str_or(&mut self, key: &str, flag: Option<String>, default: &str) -> String {
        let v = flag
            .or_else(|| self.file.get(key).cloned())
            .unwrap_or_else(|| default.to_string());
        self.record(key, v.clone());
        v
    }

    /// Typed setting with a default.
    fn parse_or<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: std::str::FromStr + std::fmt::Display,
    {
        let v = match flag {
            Some(v) => v,
            None => match self.file.get(key) {
                Some(raw) => raw.parse::<T>().map_err(|_| Error::InvalidValue {
                    name: key.to_string(),
                    reason: format!("cannot parse '{raw}'"),
                })?,
                None => default,
            },
        };
        self.record(key, format!("{v}"));
        Ok(v)
    }

    /// Typed setting with no default; `None` when absent everywhere.
    fn parse_opt<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: std::str::FromStr + std::fmt::Display,
    {
        let v = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(raw) => Some(raw.parse::<T>().map_err(|_| Error::InvalidValue {
                    name: key.to_string(),
                    reason: format!("cannot parse '{raw}'"),
                })?),
                None => None,
            },
        };
        if let Some(ref v) = v {
            self.record(key, format!("{v}"));
        }
        Ok(v)
    }

    fn parse_req<T>(&mut self, key: &str, flag: Option<T>) -> Result<T>
    where
        T: std::str::FromStr + std::fmt::Display,
    {
        self.parse_opt(key, flag)?.ok_or_else(|| Error::InvalidValue {
            name: key.to_string(),
            reason: format!("required: pass --{key} or set '{key}' in the config file"),
        })
    }

    /// Hash of every recorded setting, as 16 hex digits.
    fn config_hash(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.used {
            s.push_str(k);
            s.push('=');
            s.push_str(v);
            s.push('\n');
        }
        format!("{:016x}", fnv1a64(s.as_bytes()))
    }
}

/// 64-bit FNV-1a content fingerprint (not cryptographic; used to stamp
/// outputs with the configuration that produced them).
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn parse_float_list(key: &str, s: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for tok in s.split(',') {
        let tok = tok.trim();
        if tok.is_empty() {
            continue;
        }
        out.push(tok.parse::<f64>().map_err(|_| Error::InvalidValue {
            name: key.to_string(),
            reason: format!("cannot parse '{tok}' as a number"),
        })?);
    }
    if out.is_empty() {
        return Err(Error::InvalidValue {
            name: key.to_string(),
            reason: "expected at least one comma-separated number".to_string(),
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// shared builders

fn build_model(name: &str, sigma: f64) -> Result<Box<dyn Model>> {
    match name {
        "logistic" => Ok(Box::new(Logistic)),
        "gaussian" => Ok(Box::new(GaussianLinear::new(sigma)?)),
        "poisson" | "glm-poisson" => Ok(Box::new(Glm::new(GlmSpec::poisson_log_link()))),
        "glm-gaussian" => Ok(Box::new(Glm::new(GlmSpec::gaussian_identity()))),
        "bernoulli" | "glm-bernoulli" => Ok(Box::new(Glm::new(GlmSpec::bernoulli_logit()))),
        other => Err(Error::InvalidValue {
            name: "model".to_string(),
            reason: format!(
                "unknown model '{other}' (expected logistic, gaussian, poisson, \
                 glm-gaussian, or bernoulli)"
            ),
        }),
    }
}

/// Standardize a dataset's covariates (intercept exempt), or pass it through
/// with an identity record when disabled.
fn fresh_standardization(raw: &Dataset, enabled: bool) -> Result<(Dataset, Standardization)> {
    if !enabled {
        return Ok((raw.clone(), Standardization::identity(raw.p())));
    }
    let exempt: Vec<bool> = (0..raw.p())
        .map(|j| Some(j) == raw.intercept_col())
        .collect();
    let (x_std, record) = standardize(raw.x(), &exempt, raw.covariate_names())?;
    Ok((raw.with_x(x_std)?, record))
}

/// Rows of `0..n` not in the sorted-or-not list `rows`.
fn complement(n: usize, rows: &[usize]) -> Vec<usize> {
    let mut keep = vec![true; n];
    for &k in rows {
        keep[k] = false;
    }
    (0..n).filter(|&k| keep[k]).collect()
}

fn parse_theta0(spec: Option<&str>, p: usize) -> Result<Option<Array1<f64>>> {
    let Some(s) = spec else { return Ok(None) };
    let vals = parse_float_list("theta0", s)?;
    if vals.len() != p {
        return Err(Error::InvalidValue {
            name: "theta0".to_string(),
            reason: format!("expected {p} coordinates, got {}", vals.len()),
        });
    }
    Ok(Some(Array1::from_vec(vals)))
}

struct ProposalSettings {
    kind: String,
    scale: Option<f64>,
    dof: f64,
}

impl ProposalSettings {
    fn resolve(
        r: &mut Resolver,
        kind: Option<String>,
        scale: Option<f64>,
        dof: Option<f64>,
    ) -> Result<Self> {
        let kind = r.str_or("proposal", kind, "rwm");
        if kind != "rwm" && kind != "imh" {
            return Err(Error::InvalidValue {
                name: "proposal".to_string(),
                reason: format!("expected 'rwm' or 'imh', got '{kind}'"),
            });
        }
        let scale = r.parse_opt("scale", scale)?;
        let dof = r.parse_or("dof", dof, 10.0)?;
        Ok(ProposalSettings { kind, scale, dof })
    }

    fn build(&self, mode: Array1<f64>, hess_inv: Array2<f64>) -> Result<Proposal> {
        if self.kind == "imh" {
            Proposal::imh(mode, hess_inv, self.dof)
        } else {
            Proposal::rwm(mode, hess_inv, self.scale)
        }
    }
}

// ---------------------------------------------------------------------------
// chain file I/O

/// Write a draw matrix as CSV: `# key: value` header lines, then a column
/// header of parameter names, then one row per draw.
fn write_chain_csv(
    path: &Path,
    names: &[String],
    draws: ArrayView2<f64>,
    meta: &[(String, String)],
) -> Result<()> {
    let display = path.display().to_string();
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(&display, e))?,
    );
    for (k, v) in meta {
        writeln!(out, "# {k}: {v}").map_err(|e| Error::io(&display, e))?;
    }
    writeln!(out, "{}", names.join(",")).map_err(|e| Error::io(&display, e))?;
    for row in draws.outer_iter() {
        let fields: Vec<String> = row.iter().map(|&v| format_float(v)).collect();
        writeln!(out, "{}", fields.join(",")).map_err(|e| Error::io(&display, e))?;
    }
    out.flush().map_err(|e| Error::io(&display, e))?;
    Ok(())
}

/// Read a chain CSV back: draws, column names, and the `# key: value` header
/// block.
fn read_chain_csv(path: &Path) -> Result<(Array2<f64>, Vec<String>, BTreeMap<String, String>)> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(&display, e))?;
    let mut meta = BTreeMap::new();
    let mut names: Option<Vec<String>> = None;
    let mut values: Vec<f64> = Vec::new();
    let mut rows = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once(':') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        match names {
            None => names = Some(line.split(',').map(|s| s.trim().to_string()).collect()),
            Some(ref names) => {
                let mut count = 0usize;
                for tok in line.split(',') {
                    values.push(tok.trim().parse::<f64>().map_err(|_| {
                        Error::InvalidValue {
                            name: "chain file".to_string(),
                            reason: format!("{display}:{}: bad number '{tok}'", lineno + 1),
                        }
                    })?);
                    count += 1;
                }
                if count != names.len() {
                    return Err(Error::InvalidValue {
                        name: "chain file".to_string(),
                        reason: format!(
                            "{display}:{}: {count} fields, header has {}",
                            lineno + 1,
                            names.len()
                        ),
                    });
                }
                rows += 1;
            }
        }
    }
    let names = names.ok_or_else(|| Error::InvalidValue {
        name: "chain file".to_string(),
        reason: format!("{display}: no header row"),
    })?;
    if rows == 0 {
        return Err(Error::InvalidValue {
            name: "chain file".to_string(),
            reason: format!("{display}: no draws"),
        });
    }
    let draws =
        Array2::from_shape_vec((rows, names.len()), values).expect("row-count bookkeeping");
    Ok((draws, names, meta))
}

/// Header block shared by all output files.
fn base_meta(seed: u64, hash: &str) -> Vec<(String, String)> {
    vec![
        ("seed".to_string(), seed.to_string()),
        ("config".to_string(), hash.to_string()),
        ("build".to_string(), BUILD_ID.to_string()),
    ]
}

fn push_meta(meta: &mut Vec<(String, String)>, key: &str, value: String) {
    meta.push((key.to_string(), value));
}

/// Mean log-density evaluations per post-burn-in iteration, the de-mean the
/// chain header records and the efficiency report consumes.
fn chain_de_mean(out: &ChainOutput) -> f64 {
    let tail = &out.de_per_iter[out.burn_in..];
    if tail.is_empty() {
        return 0.0;
    }
    tail.iter().map(|&d| d as f64).sum::<f64>() / tail.len() as f64
}

/// Per-iteration telemetry: `iter,accepted,m,sigma2,de,u_refreshed`, one line
/// per iteration, burn-in included.
fn write_telemetry(path: &Path, out: &ChainOutput, meta: &[(String, String)]) -> Result<()> {
    let display = path.display().to_string();
    let mut w = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(&display, e))?,
    );
    for (k, v) in meta {
        writeln!(w, "# {k}: {v}").map_err(|e| Error::io(&display, e))?;
    }
    writeln!(w, "iter,accepted,m,sigma2,de,u_refreshed").map_err(|e| Error::io(&display, e))?;
    for i in 0..out.draws.nrows() {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            i,
            out.accepted[i] as u8,
            out.m_trajectory[i],
            format_float(out.sigma2_at_proposal[i]),
            out.de_per_iter[i],
            out.u_refreshed[i] as u8
        )
        .map_err(|e| Error::io(&display, e))?;
    }
    w.flush().map_err(|e| Error::io(&display, e))?;
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let display = path.display().to_string();
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidValue {
        name: "report".to_string(),
        reason: format!("cannot serialize: {e}"),
    })?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(&display, e))
}

fn array2_to_json(a: &Array2<f64>) -> serde_json::Value {
    serde_json::json!(a
        .outer_iter()
        .map(|r| r.to_vec())
        .collect::<Vec<Vec<f64>>>())
}

// ---------------------------------------------------------------------------
// cluster

fn run_cluster(a: ClusterArgs) -> Result<()> {
    let mut r = Resolver::new("cluster", a.config.as_deref())?;
    let data_path = r.str_req("data", a.input)?;
    let response = r.str_or("response", a.response, "y");
    let add_intercept = r.parse_or("add-intercept", a.add_intercept, true)?;
    let do_standardize = r.parse_or("standardize", a.standardize, true)?;
    let epsilon = r.parse_req("epsilon", a.epsilon)?;
    let by_class = r.parse_or("by-class", a.by_class, false)?;
    let stratum = r.str_opt("exact-stratum", a.exact_stratum);
    let out_path = r.str_req("out", a.output)?;

    let raw = ingest_csv(Path::new(&data_path), &response, add_intercept)?;
    let exact_rows = match stratum.as_deref() {
        Some(expr) => StratumPredicate::parse(expr)?.select(&raw)?,
        None => Vec::new(),
    };
    let est_rows = complement(raw.n(), &exact_rows);
    if est_rows.is_empty() {
        return Err(Error::InvalidValue {
            name: "exact-stratum".to_string(),
            reason: "predicate matches every row; nothing left to cluster".to_string(),
        });
    }
    let (data, record) = fresh_standardization(&raw, do_standardize)?;

    let mut last = 0usize;
    let mut progress = |rows: usize, clusters: usize| {
        if rows >= last + 10_000 {
            eprintln!("clustering: {rows} rows assigned, {clusters} clusters");
            last = rows;
        }
    };
    let rows_opt = stratum.as_deref().map(|_| est_rows.as_slice());
    let mut model = if by_class {
        cluster_by_class(data.y(), data.x(), epsilon, rows_opt, Some(&mut progress))?
    } else {
        let z = data.z_matrix();
        cluster_rows(z.view(), epsilon, rows_opt, Some(&mut progress))?
    };
    model.standardization = record;
    model.validate()?;
    model.write(Path::new(&out_path))?;

    println!(
        "cluster: {} rows ({} exact), epsilon {}, {} clusters, monitor fraction {:.4}",
        raw.n(),
        exact_rows.len(),
        format_float(epsilon),
        model.n_clusters(),
        model.monitor_fraction()
    );
    println!("wrote {out_path} [config {}]", r.config_hash());
    Ok(())
}

// ---------------------------------------------------------------------------
// mode

fn run_mode(a: ModeArgs) -> Result<()> {
    let mut r = Resolver::new("mode", a.config.as_deref())?;
    let data_path = r.str_req("data", a.data)?;
    let response = r.str_or("response", a.response, "y");
    let add_intercept = r.parse_or("add-intercept", a.add_intercept, true)?;
    let do_standardize = r.parse_or("standardize", a.standardize, true)?;
    let model_name = r.str_or("model", a.model, "logistic");
    let sigma = r.parse_or("sigma", a.sigma, 1.0)?;
    let tau = r.parse_or("tau", a.tau, 10.0)?;
    let theta0_spec = r.str_opt("theta0", a.theta0);
    let seed = r.parse_or("seed", None, 1u64)?;
    let out_path = r.str_req("out", a.out)?;

    let raw = ingest_csv(Path::new(&data_path), &response, add_intercept)?;
    let (data, _) = fresh_standardization(&raw, do_standardize)?;
    let model = build_model(&model_name, sigma)?;
    if model.requires_binary_response() {
        data.check_binary_response()?;
    }
    let prior = GaussianPrior::new(tau)?;
    let theta0 = parse_theta0(theta0_spec.as_deref(), data.p())?
        .unwrap_or_else(|| Array1::zeros(data.p()));
    let (theta_star, hess_inv) = find_mode(model.as_ref(), &data, &prior, theta0.view())?;

    let hash = r.config_hash();
    let report = serde_json::json!({
        "seed": seed,
        "config": hash,
        "build": BUILD_ID,
        "model": model_name,
        "tau": tau,
        "standardized": do_standardize,
        "columns": data.covariate_names(),
        "theta_star": theta_star.to_vec(),
        "hess_inv": array2_to_json(&hess_inv),
    });
    write_json(Path::new(&out_path), &report)?;
    println!(
        "mode: {} at [{}]",
        model.name(),
        theta_star
            .iter()
            .map(|&v| format!("{v:.6}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    println!("wrote {out_path} [config {hash}]");
    Ok(())
}

// ---------------------------------------------------------------------------
// sample

/// Everything a single chain run needs beyond the estimator itself.
struct ChainSetup {
    model_name: String,
    proposal_kind: String,
    standardized: bool,
    config: SamplerConfig,
}

/// Assemble chain-file metadata from the run settings and outcome.
fn chain_meta(
    setup: &ChainSetup,
    engine: &str,
    out: &ChainOutput,
    n_rows: usize,
    hash: &str,
    segment: &str,
) -> Vec<(String, String)> {
    let mut meta = base_meta(setup.config.seed, hash);
    push_meta(&mut meta, "engine", engine.to_string());
    push_meta(&mut meta, "model", setup.model_name.clone());
    push_meta(&mut meta, "proposal", setup.proposal_kind.clone());
    push_meta(&mut meta, "standardized", setup.standardized.to_string());
    push_meta(&mut meta, "iters", setup.config.n_iter.to_string());
    push_meta(&mut meta, "burn-in", setup.config.burn_in.to_string());
    if engine == "pmcmc" {
        push_meta(&mut meta, "omega", format_float(setup.config.omega));
        push_meta(&mut meta, "vmax", format_float(setup.config.v_max));
        push_meta(&mut meta, "m0", setup.config.m0.to_string());
        push_meta(&mut meta, "adaptive", setup.config.adaptive.to_string());
        push_meta(&mut meta, "mean-sigma-z", format_float(out.mean_sigma_z()));
        push_meta(&mut meta, "m-capped", out.m_capped.to_string());
        push_meta(
            &mut meta,
            "fraction-evaluated",
            format_float(out.fraction_evaluated(n_rows)),
        );
    }
    push_meta(&mut meta, "de-mean", format_float(chain_de_mean(out)));
    push_meta(&mut meta, "acceptance", format_float(out.acceptance_rate()));
    push_meta(&mut meta, "segment", segment.to_string());
    meta
}

fn warn_if_capped(out: &ChainOutput, label: &str) {
    if out.m_capped > 0 {
        eprintln!(
            "warning: {label}: variance target unattainable at {} iterations \
             (subsample capped at the full estimated stratum)",
            out.m_capped
        );
    }
}

fn run_sample(a: SampleArgs) -> Result<()> {
    let mut r = Resolver::new("sample", a.config.as_deref())?;
    let data_path = r.str_req("data", a.data)?;
    let response = r.str_or("response", a.response, "y");
    let add_intercept = r.parse_or("add-intercept", a.add_intercept, true)?;
    let engine = r.str_or("engine", a.engine, "pmcmc");
    if engine != "pmcmc" && engine != "exact" {
        return Err(Error::InvalidValue {
            name: "engine".to_string(),
            reason: format!("expected 'pmcmc' or 'exact', got '{engine}'"),
        });
    }
    let clusters_path = r.str_opt("clusters", a.clusters);
    let do_standardize = r.parse_or("standardize", a.standardize, true)?;
    let model_name = r.str_or("model", a.model, "logistic");
    let sigma = r.parse_or("sigma", a.sigma, 1.0)?;
    let prop = ProposalSettings::resolve(&mut r, a.proposal, a.scale, a.dof)?;
    let tau = r.parse_or("tau", a.tau, 10.0)?;
    let defaults = SamplerConfig::default();
    let config = SamplerConfig {
        n_iter: r.parse_or("iters", a.iters, defaults.n_iter)?,
        burn_in: r.parse_or("burnin", a.burnin, defaults.burn_in)?,
        omega: r.parse_or("omega", a.omega, defaults.omega)?,
        v_max: r.parse_or("vmax", a.vmax, defaults.v_max)?,
        m0: r.parse_or("m0", a.m0, defaults.m0)?,
        adaptive: r.parse_or("adaptive", a.adaptive, defaults.adaptive)?,
        seed: r.parse_or("seed", a.seed, defaults.seed)?,
        theta0: None,
    };
    let stratum = r.str_opt("exact-stratum", a.exact_stratum);
    let freeze = r.parse_or("freeze-hessians", a.freeze_hessians, false)?;
    let theta0_spec = r.str_opt("theta0", a.theta0);
    let out_path = r.str_req("out", a.out)?;
    let burnin_out = r.str_opt("burnin-out", a.burnin_out);
    let telemetry = r.str_opt("telemetry", a.telemetry);

    let raw = ingest_csv(Path::new(&data_path), &response, add_intercept)?;
    let clusters = match clusters_path.as_deref() {
        Some(p) => Some(ClusterModel::read(Path::new(p))?),
        None => None,
    };
    if engine == "pmcmc" && clusters.is_none() {
        return Err(Error::InvalidValue {
            name: "clusters".to_string(),
            reason: "the pmcmc engine needs a cluster artifact (--clusters)".to_string(),
        });
    }
    // chains run in the coordinates the artifact was built in; without an
    // artifact the exact engine standardizes (or not) on its own
    let data = match clusters.as_ref() {
        Some(c) => raw.with_x(c.standardization.apply(raw.x())?)?,
        None => fresh_standardization(&raw, do_standardize)?.0,
    };
    let model = build_model(&model_name, sigma)?;
    if model.requires_binary_response() {
        data.check_binary_response()?;
    }
    if let (Some(expr), Some(c)) = (stratum.as_deref(), clusters.as_ref()) {
        let selected = StratumPredicate::parse(expr)?.select(&raw)?;
        if selected != c.unclustered_rows() {
            return Err(Error::InvalidValue {
                name: "exact-stratum".to_string(),
                reason: "predicate does not reproduce the artifact's exact stratum".to_string(),
            });
        }
    }

    let prior = GaussianPrior::new(tau)?;
    let theta_start = parse_theta0(theta0_spec.as_deref(), data.p())?;
    let mode_start = theta_start.clone().unwrap_or_else(|| Array1::zeros(data.p()));
    let (theta_star, hess_inv) = find_mode(model.as_ref(), &data, &prior, mode_start.view())?;
    let proposal = prop.build(theta_star, hess_inv)?;
    let config = SamplerConfig {
        theta0: theta_start,
        ..config
    };

    let out = if engine == "exact" {
        run_mcmc_exact(model.as_ref(), &data, &prior, &proposal, &config)?
    } else {
        let c = clusters.as_ref().expect("checked above");
        let mut estimator = DifferenceEstimator::new(model.as_ref(), &data, c)?;
        if freeze {
            estimator.freeze_hessians_at(proposal.mode.view())?;
        }
        run_pmcmc(&estimator, &prior, &proposal, &config)?
    };
    warn_if_capped(&out, "sample");

    let setup = ChainSetup {
        model_name,
        proposal_kind: prop.kind.clone(),
        standardized: clusters
            .as_ref()
            .map(|c| c.standardization.exempt.iter().any(|&e| !e))
            .unwrap_or(do_standardize),
        config,
    };
    let hash = r.config_hash();
    let names = data.covariate_names().to_vec();
    let meta = chain_meta(&setup, &engine, &out, data.n(), &hash, "kept");
    write_chain_csv(Path::new(&out_path), &names, out.kept_draws(), &meta)?;
    if let Some(p) = burnin_out {
        let meta = chain_meta(&setup, &engine, &out, data.n(), &hash, "burn-in");
        let head = out.draws.slice(ndarray::s![..out.burn_in, ..]);
        write_chain_csv(Path::new(&p), &names, head, &meta)?;
    }
    if let Some(p) = telemetry {
        let meta = chain_meta(&setup, &engine, &out, data.n(), &hash, "telemetry");
        write_telemetry(Path::new(&p), &out, &meta)?;
    }

    println!(
        "sample: engine={engine} n={} p={} iters={} burn-in={}",
        data.n(),
        data.p(),
        setup.config.n_iter,
        setup.config.burn_in
    );
    println!(
        "chain: acceptance {:.4}{}",
        out.acceptance_rate(),
        if engine == "pmcmc" {
            format!(
                ", mean sigma_z {:.4}, fraction evaluated {:.4}",
                out.mean_sigma_z(),
                out.fraction_evaluated(data.n())
            )
        } else {
            String::new()
        }
    );
    println!(
        "wrote {out_path} ({} draws) [config {hash}]",
        out.draws.nrows() - out.burn_in
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// diagnose

/// Pull the de-mean a chain file recorded, with an optional override.
fn de_mean_for(
    meta: &BTreeMap<String, String>,
    override_value: Option<f64>,
    label: &str,
) -> Result<f64> {
    if let Some(v) = override_value {
        return Ok(v);
    }
    meta.get("de-mean")
        .and_then(|s| s.parse::<f64>().ok())
        .ok_or_else(|| Error::InvalidValue {
            name: "de-mean".to_string(),
            reason: format!("{label} has no de-mean header; pass --de-mean"),
        })
}

fn trimmed(draws: &Array2<f64>, burnin: usize, label: &str) -> Result<Array2<f64>> {
    if burnin >= draws.nrows() {
        return Err(Error::InvalidValue {
            name: "burnin".to_string(),
            reason: format!(
                "{label}: cannot discard {burnin} of {} draws",
                draws.nrows()
            ),
        });
    }
    Ok(draws.slice(ndarray::s![burnin.., ..]).to_owned())
}

fn run_diagnose(a: DiagnoseArgs) -> Result<()> {
    let mut r = Resolver::new("diagnose", a.config.as_deref())?;
    let chain_path = r.str_req("chain", a.chain)?;
    let baseline_path = r.str_opt("baseline", a.baseline);
    let burnin = r.parse_or("burnin", a.burnin, 0usize)?;
    let level = r.parse_or("level", a.level, 0.05)?;
    let de_override = r.parse_opt("de-mean", a.de_mean)?;
    let out_path = r.str_req("out", a.out)?;

    let (chain_raw, names, chain_header) = read_chain_csv(Path::new(&chain_path))?;
    let chain = trimmed(&chain_raw, burnin, "chain")?;
    let de_mean = de_mean_for(&chain_header, de_override, "chain file")?;
    let mut report = efficiency_report(chain.view(), de_mean)?;

    let mut baseline_report: Option<EfficiencyReport> = None;
    let mut tests: Option<Vec<MeanTest>> = None;
    if let Some(bp) = baseline_path.as_deref() {
        let (base_raw, base_names, base_header) = read_chain_csv(Path::new(bp))?;
        if base_names != names {
            return Err(Error::InvalidValue {
                name: "baseline".to_string(),
                reason: "baseline chain has different parameter columns".to_string(),
            });
        }
        let base = trimmed(&base_raw, burnin, "baseline")?;
        let base_de = de_mean_for(&base_header, None, "baseline file")?;
        let base_report = efficiency_report(base.view(), base_de)?;
        let (rif, red) = relative_report(&report, &base_report)?;
        report.rif = rif;
        report.red = red;
        tests = Some(mean_equality_test(chain.view(), base.view(), level)?);
        baseline_report = Some(base_report);
    }

    let hash = r.config_hash();
    let seed = chain_header
        .get("seed")
        .and_then(|s| s.parse::<u64>().ok())
        .unwrap_or(0);
    let value = serde_json::json!({
        "seed": seed,
        "config": hash,
        "build": BUILD_ID,
        "chain": chain_path,
        "baseline": baseline_path,
        "columns": names,
        "level": level,
        "efficiency": &report,
        "baseline_efficiency": baseline_report,
        "mean_test": tests,
    });
    write_json(Path::new(&out_path), &value)?;

    println!(
        "diagnose: {} draws, mean IF {:.3}, effective draws {:.1}",
        report.n_draws, report.mean_if, report.ed
    );
    if let Some(ts) = value.get("mean_test").and_then(|t| t.as_array()) {
        let rejected = ts
            .iter()
            .filter(|t| t.get("reject").and_then(|v| v.as_bool()) == Some(true))
            .count();
        println!(
            "mean-equality: {rejected} of {} parameters reject at level {}",
            ts.len(),
            format_float(level)
        );
    }
    println!("wrote {out_path} [config {hash}]");
    Ok(())
}

// ---------------------------------------------------------------------------
// synth

fn run_synth(a: SynthArgs) -> Result<()> {
    let mut r = Resolver::new("synth", a.config.as_deref())?;
    let n = r.parse_req("n", a.n)?;
    let beta_spec = r.str_req("beta", a.beta)?;
    let seed = r.parse_or("seed", a.seed, 1u64)?;
    let out_path = r.str_req("out", a.out)?;
    let beta = parse_float_list("beta", &beta_spec)?;
    let ds = synth_logistic(n, &beta, seed)?;
    write_csv(&ds, Path::new(&out_path))?;
    let rate = ds.y().iter().sum::<f64>() / ds.n() as f64;
    println!(
        "synth: n={} p={} seed={seed}, positive-class rate {rate:.4}",
        ds.n(),
        ds.p()
    );
    println!("wrote {out_path} [config {}]", r.config_hash());
    Ok(())
}

// ---------------------------------------------------------------------------
// pipeline

/// One chain the pipeline runs: the exact baseline or a PMCMC sweep point.
struct SweepPoint {
    /// "exact", or the ω token as written in the config (used in filenames).
    tag: String,
    omega: Option<f64>,
}

fn run_pipeline(a: PipelineArgs) -> Result<()> {
    fn stage(name: &'static str) -> impl FnOnce(Error) -> Error {
        move |e: Error| {
            eprintln!("pipeline: stage '{name}' failed");
            e
        }
    }

    let mut r = Resolver::new("pipeline", a.config.as_deref())?;
    let data_path = r.str_req("data", a.data)?;
    let response = r.str_or("response", a.response, "y");
    let add_intercept = r.parse_or("add-intercept", a.add_intercept, true)?;
    let do_standardize = r.parse_or("standardize", a.standardize, true)?;
    let out_prefix = r.str_req("out", a.out)?;
    let clusters_path = match r.str_opt("clusters", a.clusters) {
        Some(p) => p,
        None => {
            let p = format!("{out_prefix}.clu");
            r.record("clusters", p.clone());
            p
        }
    };
    let epsilon = r.parse_opt("epsilon", a.epsilon)?;
    let by_class = r.parse_or("by-class", a.by_class, false)?;
    let stratum = r.str_opt("exact-stratum", a.exact_stratum);
    let model_name = r.str_or("model", a.model, "logistic");
    let sigma = r.parse_or("sigma", a.sigma, 1.0)?;
    let prop = ProposalSettings::resolve(&mut r, a.proposal, a.scale, a.dof)?;
    let tau = r.parse_or("tau", a.tau, 10.0)?;
    let omegas_spec = r.str_or("omegas", a.omegas, "1");
    let run_exact = r.parse_or("exact", a.exact, true)?;
    let defaults = SamplerConfig::default();
    let base_config = SamplerConfig {
        n_iter: r.parse_or("iters", a.iters, defaults.n_iter)?,
        burn_in: r.parse_or("burnin", a.burnin, defaults.burn_in)?,
        omega: 1.0,
        v_max: r.parse_or("vmax", a.vmax, defaults.v_max)?,
        m0: r.parse_or("m0", a.m0, defaults.m0)?,
        adaptive: r.parse_or("adaptive", a.adaptive, defaults.adaptive)?,
        seed: r.parse_or("seed", a.seed, defaults.seed)?,
        theta0: None,
    };
    let theta0_spec = r.str_opt("theta0", a.theta0);
    let freeze = r.parse_or("freeze-hessians", a.freeze_hessians, false)?;
    let level = r.parse_or("level", a.level, 0.05)?;
    let report_path = match r.str_opt("report", a.report) {
        Some(p) => p,
        None => {
            let p = format!("{out_prefix}_report.json");
            r.record("report", p.clone());
            p
        }
    };

    // sweep points: one PMCMC chain per ω token, plus the exact baseline
    let mut sweep: Vec<SweepPoint> = Vec::new();
    if run_exact {
        sweep.push(SweepPoint {
            tag: "exact".to_string(),
            omega: None,
        });
    }
    for tok in omegas_spec.split(',') {
        let tok = tok.trim();
        if tok.is_empty() {
            continue;
        }
        let w = tok.parse::<f64>().map_err(|_| Error::InvalidValue {
            name: "omegas".to_string(),
            reason: format!("cannot parse '{tok}'"),
        })?;
        sweep.push(SweepPoint {
            tag: tok.to_string(),
            omega: Some(w),
        });
    }
    if sweep.is_empty() {
        return Err(Error::InvalidValue {
            name: "omegas".to_string(),
            reason: "nothing to run: no omegas and exact disabled".to_string(),
        });
    }

    // --- ingest ---
    let raw =
        ingest_csv(Path::new(&data_path), &response, add_intercept).map_err(stage("ingest"))?;

    // --- cluster (reuse the artifact when it exists) ---
    let clu = Path::new(&clusters_path);
    let clusters = if clu.exists() {
        let c = ClusterModel::read(clu).map_err(stage("cluster"))?;
        println!(
            "pipeline: reusing {} ({} clusters, monitor fraction {:.4})",
            clusters_path,
            c.n_clusters(),
            c.monitor_fraction()
        );
        c
    } else {
        let eps = epsilon.ok_or_else(|| Error::InvalidValue {
            name: "epsilon".to_string(),
            reason: format!("no artifact at {clusters_path}; epsilon is required to build one"),
        })?;
        let built = (|| -> Result<ClusterModel> {
            let exact_rows = match stratum.as_deref() {
                Some(expr) => StratumPredicate::parse(expr)?.select(&raw)?,
                None => Vec::new(),
            };
            let est_rows = complement(raw.n(), &exact_rows);
            if est_rows.is_empty() {
                return Err(Error::InvalidValue {
                    name: "exact-stratum".to_string(),
                    reason: "predicate matches every row; nothing left to cluster".to_string(),
                });
            }
            let (data, record) = fresh_standardization(&raw, do_standardize)?;
            let mut last = 0usize;
            let mut progress = |rows: usize, clusters: usize| {
                if rows >= last + 10_000 {
                    eprintln!("clustering: {rows} rows assigned, {clusters} clusters");
                    last = rows;
                }
            };
            let rows_opt = stratum.as_deref().map(|_| est_rows.as_slice());
            let mut model = if by_class {
                cluster_by_class(data.y(), data.x(), eps, rows_opt, Some(&mut progress))?
            } else {
                let z = data.z_matrix();
                cluster_rows(z.view(), eps, rows_opt, Some(&mut progress))?
            };
            model.standardization = record;
            model.validate()?;
            model.write(clu)?;
            Ok(model)
        })()
        .map_err(stage("cluster"))?;
        println!(
            "pipeline: built {} ({} clusters, monitor fraction {:.4})",
            clusters_path,
            built.n_clusters(),
            built.monitor_fraction()
        );
        built
    };

    // --- shared preparation: coordinates, model, mode, proposal ---
    let prepared = (|| -> Result<_> {
        let data = raw.with_x(clusters.standardization.apply(raw.x())?)?;
        let model = build_model(&model_name, sigma)?;
        if model.requires_binary_response() {
            data.check_binary_response()?;
        }
        let prior = GaussianPrior::new(tau)?;
        let theta_start = parse_theta0(theta0_spec.as_deref(), data.p())?;
        let mode_start = theta_start
            .clone()
            .unwrap_or_else(|| Array1::zeros(data.p()));
        let (theta_star, hess_inv) = find_mode(model.as_ref(), &data, &prior, mode_start.view())?;
        let proposal = prop.build(theta_star, hess_inv)?;
        Ok((data, model, prior, proposal, theta_start))
    })()
    .map_err(stage("mode"))?;
    let (data, model, prior, proposal, theta_start) = prepared;
    println!(
        "pipeline: mode at [{}]",
        proposal
            .mode
            .iter()
            .map(|&v| format!("{v:.6}"))
            .collect::<Vec<_>>()
            .join(", ")
    );

    let mut estimator = DifferenceEstimator::new(model.as_ref(), &data, &clusters)
        .map_err(stage("sample"))?;
    if freeze {
        estimator
            .freeze_hessians_at(proposal.mode.view())
            .map_err(stage("sample"))?;
    }

    // --- run the sweep, concurrently unless SUBMC_THREADS=1 ---
    let config_for = |point: &SweepPoint| SamplerConfig {
        omega: point.omega.unwrap_or(1.0),
        theta0: theta_start.clone(),
        ..base_config.clone()
    };
    let run_point = |point: &SweepPoint| -> Result<ChainOutput> {
        let cfg = config_for(point);
        match point.omega {
            None => run_mcmc_exact(model.as_ref(), &data, &prior, &proposal, &cfg),
            Some(_) => run_pmcmc(&estimator, &prior, &proposal, &cfg),
        }
    };
    let sequential = std::env::var("SUBMC_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .is_some_and(|t| t <= 1);
    let outputs: Vec<Result<ChainOutput>> = if sequential || sweep.len() == 1 {
        sweep.iter().map(run_point).collect()
    } else {
        std::thread::scope(|s| {
            let rp = &run_point;
            let handles: Vec<_> = sweep
                .iter()
                .map(|point| s.spawn(move || rp(point)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("chain thread panicked"))
                .collect()
        })
    };

    // --- persist chains + telemetry, then the combined report ---
    let hash = r.config_hash();
    let names = data.covariate_names().to_vec();
    let mut exact_report: Option<EfficiencyReport> = None;
    let mut exact_kept: Option<Array2<f64>> = None;
    let mut runs_json: Vec<serde_json::Value> = Vec::new();
    let mut exact_json = serde_json::Value::Null;

    for (point, result) in sweep.iter().zip(outputs) {
        let out = result.map_err(stage("sample"))?;
        let engine = if point.omega.is_none() { "exact" } else { "pmcmc" };
        let label = if engine == "exact" {
            "exact baseline".to_string()
        } else {
            format!("omega {}", point.tag)
        };
        warn_if_capped(&out, &label);
        let setup = ChainSetup {
            model_name: model_name.clone(),
            proposal_kind: prop.kind.clone(),
            standardized: clusters.standardization.exempt.iter().any(|&e| !e),
            config: config_for(point),
        };
        let chain_file = if engine == "exact" {
            format!("{out_prefix}_exact.csv")
        } else {
            format!("{out_prefix}_omega{}.csv", point.tag)
        };
        let meta = chain_meta(&setup, engine, &out, data.n(), &hash, "kept");
        write_chain_csv(Path::new(&chain_file), &names, out.kept_draws(), &meta)
            .map_err(stage("persist"))?;
        let telemetry_file = format!("{out_prefix}_telemetry_{}.csv", point.tag);
        let tmeta = chain_meta(&setup, engine, &out, data.n(), &hash, "telemetry");
        write_telemetry(Path::new(&telemetry_file), &out, &tmeta).map_err(stage("persist"))?;

        let report = report_for_chain(&out).map_err(stage("diagnose"))?;
        println!(
            "pipeline: {label}: acceptance {:.4}, mean IF {:.3}, effective draws {:.1}",
            out.acceptance_rate(),
            report.mean_if,
            report.ed
        );
        if engine == "exact" {
            exact_json = serde_json::json!({
                "file": chain_file,
                "telemetry": telemetry_file,
                "acceptance": out.acceptance_rate(),
                "efficiency": &report,
            });
            exact_kept = Some(out.kept_draws().to_owned());
            exact_report = Some(report);
        } else {
            let mut report = report;
            let mut tests: Option<Vec<MeanTest>> = None;
            if let (Some(base_rep), Some(base_draws)) = (&exact_report, &exact_kept) {
                let (rif, red) =
                    relative_report(&report, base_rep).map_err(stage("diagnose"))?;
                report.rif = rif;
                report.red = red;
                tests = Some(
                    mean_equality_test(out.kept_draws(), base_draws.view(), level)
                        .map_err(stage("diagnose"))?,
                );
            }
            if let Some(ts) = &tests {
                let rejected = ts.iter().filter(|t| t.reject).count();
                println!(
                    "pipeline: {label}: mean-equality rejects {rejected} of {} at level {}",
                    ts.len(),
                    format_float(level)
                );
            }
            runs_json.push(serde_json::json!({
                "omega": point.omega,
                "file": chain_file,
                "telemetry": telemetry_file,
                "acceptance": out.acceptance_rate(),
                "mean_sigma_z": out.mean_sigma_z(),
                "fraction_evaluated": out.fraction_evaluated(data.n()),
                "m_capped": out.m_capped,
                "efficiency": report,
                "mean_test": tests,
            }));
        }
    }

    let value = serde_json::json!({
        "seed": base_config.seed,
        "config": hash,
        "build": BUILD_ID,
        "data": data_path,
        "model": model_name,
        "proposal": prop.kind,
        "level": level,
        "columns": names,
        "clusters": {
            "path": clusters_path,
            "epsilon": clusters.epsilon,
            "n_clusters": clusters.n_clusters(),
            "monitor_fraction": clusters.monitor_fraction(),
            "exact_rows": clusters.n_total - clusters.n_clustered,
        },
        "mode": proposal.mode.to_vec(),
        "exact": exact_json,
        "runs": runs_json,
    });
    write_json(Path::new(&report_path), &value).map_err(stage("persist"))?;
    println!("wrote {report_path} [config {hash}]");
    Ok(())
}
