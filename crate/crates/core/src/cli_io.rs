//! Run configuration, result files and the subcommand drivers behind the `ssp` binary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::problems::{
    verify_assumptions, AucAtom, AucSaddle, AucSpec, AucSynthetic, MatrixGame, MatrixGameSpec, ProblemInstance,
    RandomGame,
};
use crate::risk_lab::{fit_rate, quantile_curve, run_experiment, ExperimentConfig, QuantilePoint, RiskRecord, RiskSolvers};
use crate::shifted::{
    check_lemma41_chain, check_localization, exp_moment_check, grid_refinement_check, lambda_lemma42,
    ShiftedProcessConfig, DEFAULT_ALLOWANCE,
};
use crate::solver::{solve_saddle, SolverConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NON_CONVERGENCE: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

pub const THREADS_ENV: &str = "SSP_THREADS";
pub const CSV_HEADER: &str = "n,rep,seed,risk,emp_gap,oracle_gap,wall_ms";
const REFINEMENT_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceConfig {
    MatrixGame {
        dim: usize,
        lambda_x: f64,
        lambda_y: f64,
        truncation_l: f64,
        /// Explicit support: one `dim × dim` matrix (list of rows) per atom.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        matrices: Option<Vec<Vec<Vec<f64>>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        probabilities: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        random: Option<RandomGame>,
    },
    Auc {
        beta: f64,
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        box_bound: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        synthetic: Option<AucSynthetic>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        atoms: Option<Vec<AucAtom<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        probabilities: Option<Vec<f64>>,
    },
}

impl InstanceConfig {
    pub fn build(&self) -> Result<ProblemInstance<f64>> {
        match self {
            Self::MatrixGame { dim, lambda_x, lambda_y, truncation_l, matrices, probabilities, random } => {
                let spec = match (matrices, random) {
                    (Some(ms), None) => {
                        let k = ms.len();
                        let mut flat = Vec::with_capacity(k);
                        for (a, m) in ms.iter().enumerate() {
                            if m.len() != *dim || m.iter().any(|row| row.len() != *dim) {
                                return Err(Error::Config(format!("matrix {a} is not {dim} × {dim}")));
                            }
                            flat.push(m.iter().flatten().copied().collect());
                        }
                        let probabilities =
                            probabilities.clone().unwrap_or_else(|| vec![1.0 / k.max(1) as f64; k]);
                        MatrixGameSpec {
                            dim: *dim,
                            matrices: flat,
                            probabilities,
                            lambda_x: *lambda_x,
                            lambda_y: *lambda_y,
                            truncation_l: *truncation_l,
                        }
                    }
                    (None, Some(recipe)) => {
                        if probabilities.is_some() {
                            return Err(Error::Config("probabilities cannot be combined with random".into()));
                        }
                        MatrixGameSpec::random(*dim, *recipe, *lambda_x, *lambda_y, *truncation_l)?
                    }
                    _ => return Err(Error::Config("matrix_game needs exactly one of matrices or random".into())),
                };
                Ok(ProblemInstance::MatrixGame(MatrixGame::new(spec)?))
            }
            Self::Auc { beta, radius, box_bound, synthetic, atoms, probabilities } => {
                let spec = match (synthetic, atoms) {
                    (Some(recipe), None) => {
                        if probabilities.is_some() {
                            return Err(Error::Config("probabilities cannot be combined with synthetic".into()));
                        }
                        AucSpec::synthetic(*recipe, *beta, *radius, *box_bound)?
                    }
                    (None, Some(atoms)) => {
                        let k = atoms.len();
                        let dim = atoms.first().map_or(0, |a| a.features.len());
                        AucSpec {
                            dim,
                            atoms: atoms.clone(),
                            probabilities: probabilities.clone().unwrap_or_else(|| vec![1.0 / k.max(1) as f64; k]),
                            beta: *beta,
                            radius: *radius,
                            box_bound: box_bound.unwrap_or_else(|| crate::problems::default_box_bound(*radius)),
                            positive_probability: None,
                        }
                    }
                    _ => return Err(Error::Config("auc needs exactly one of synthetic or atoms".into())),
                };
                Ok(ProblemInstance::Auc(AucSaddle::new(spec)?))
            }
        }
    }
}

fn default_n_probe() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_n_probe")]
    pub n_probe: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { n_probe: default_n_probe(), seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub instance: InstanceConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "SolverConfig::oracle")]
    pub oracle: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shifted: Option<ShiftedProcessConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

/// A parsed, validated config together with its digest.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub instance: ProblemInstance<f64>,
    pub sha256: String,
    pub path: PathBuf,
}

/// Sorted-key compact JSON of the raw config.
pub fn canonical_json(raw: &str) -> Result<String> {
    let value: Value = serde_json::from_str(raw)?;
    Ok(serde_json::to_string(&sort_keys(value))?)
}

fn sort_keys(v: Value) -> Value {
    match v {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, sort_keys(v))).collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

pub fn config_digest(raw: &str) -> Result<String> {
    Ok(hex::encode(Sha256::digest(canonical_json(raw)?.as_bytes())))
}

impl RunConfig {
    pub fn parse(raw: &str) -> Result<Self> {
        let mut config: RunConfig = serde_json::from_str(raw)?;
        if let Some(exp) = config.experiment.as_mut() {
            exp.solvers = RiskSolvers { solver: config.solver.clone(), oracle: config.oracle.clone() };
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        self.oracle.validate()?;
        if let Some(exp) = &self.experiment {
            exp.validate()?;
        }
        if let Some(v) = &self.verify {
            if v.n_probe < 2 {
                return Err(Error::Config(format!("verify.n_probe must be at least 2, got {}", v.n_probe)));
            }
        }
        if let Some(s) = &self.shifted {
            s.validate()?;
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let raw = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let config = RunConfig::parse(&raw)?;
    let instance = config.instance.build()?;
    Ok(LoadedConfig { config, instance, sha256: config_digest(&raw)?, path: path.to_path_buf() })
}

/// `SSP_THREADS`, then the config's `threads`, then the available parallelism.
pub fn resolve_threads(config_threads: Option<usize>) -> Result<usize> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        return match v.trim().parse::<usize>() {
            Ok(t) if t >= 1 => Ok(t),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        };
    }
    Ok(config_threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())))
}

/// Positional decimal with 17 significant digits.
pub fn format_decimal(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() { "NaN".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.16e}", v.abs());
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let mut out = String::with_capacity(digits.len() + 8);
    if v < 0.0 {
        out.push('-');
    }
    if exp < 0 {
        out.push_str("0.");
        out.extend(std::iter::repeat_n('0', (-exp - 1) as usize));
        out.push_str(&digits);
    } else {
        let point = exp as usize + 1;
        if point >= digits.len() {
            out.push_str(&digits);
            out.extend(std::iter::repeat_n('0', point - digits.len()));
        } else {
            out.push_str(&digits[..point]);
            out.push('.');
            out.push_str(&digits[point..]);
        }
    }
    out
}

pub fn records_csv(records: &[RiskRecord]) -> String {
    let mut s = String::with_capacity(64 * (records.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.n,
            r.rep,
            r.seed,
            format_decimal(r.risk),
            format_decimal(r.emp_gap),
            format_decimal(r.oracle_gap),
            format_decimal(r.wall_ms)
        );
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_path: String,
    pub config_sha256: String,
    pub version: String,
    pub master_seed: Option<u64>,
    pub threads: usize,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub exit_code: i32,
    pub outputs: Vec<String>,
    pub parameters: Value,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(dir.join(name), text)?;
    Ok(())
}

pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::Json(_)
        | Error::Io(_)
        | Error::InvalidInstance(_)
        | Error::InvalidGeometry(_)
        | Error::InfeasibleGeometry(_)
        | Error::DimensionMismatch { .. }
        | Error::EmptySupport => EXIT_CONFIG,
        Error::NonConvergence(_) => EXIT_NON_CONVERGENCE,
        _ => EXIT_CHECK_FAILED,
    }
}

fn report_config_error(path: &Path, err: &Error) {
    match err {
        Error::Json(e) => eprintln!("{}:{}:{}: config error: {e}", path.display(), e.line(), e.column()),
        e => eprintln!("{}: config error: {e}", path.display()),
    }
}

/// Shared bookkeeping around one subcommand.
struct Run {
    subcommand: &'static str,
    loaded: LoadedConfig,
    out: PathBuf,
    threads: usize,
    started: u64,
    outputs: Vec<String>,
}

impl Run {
    fn start(subcommand: &'static str, config: &Path, out: &Path) -> std::result::Result<Self, i32> {
        let loaded = load_config(config).map_err(|e| {
            report_config_error(config, &e);
            EXIT_CONFIG
        })?;
        let threads = resolve_threads(loaded.config.threads).map_err(|e| {
            eprintln!("config error: {e}");
            EXIT_CONFIG
        })?;
        fs::create_dir_all(out).map_err(|e| {
            eprintln!("cannot create {}: {e}", out.display());
            EXIT_CONFIG
        })?;
        Ok(Self { subcommand, loaded, out: out.to_path_buf(), threads, started: unix_now(), outputs: Vec::new() })
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        write_json(&self.out, name, value)?;
        self.outputs.push(name.into());
        Ok(())
    }

    fn text(&mut self, name: &str, value: &str) -> Result<()> {
        fs::write(self.out.join(name), value)?;
        self.outputs.push(name.into());
        Ok(())
    }

    fn finish(self, exit_code: i32, master_seed: Option<u64>) -> i32 {
        let manifest = RunManifest {
            subcommand: self.subcommand.into(),
            config_path: self.loaded.path.display().to_string(),
            config_sha256: self.loaded.sha256.clone(),
            version: env!("CARGO_PKG_VERSION").into(),
            master_seed,
            threads: self.threads,
            started_unix: self.started,
            finished_unix: unix_now(),
            exit_code,
            outputs: self.outputs.clone(),
            parameters: serde_json::to_value(&self.loaded.config).unwrap_or(Value::Null),
        };
        if let Err(e) = write_json(&self.out, "manifest.json", &manifest) {
            eprintln!("cannot write manifest: {e}");
            return if exit_code == EXIT_OK { EXIT_CONFIG } else { exit_code };
        }
        exit_code
    }

    fn fail(self, err: &Error, master_seed: Option<u64>) -> i32 {
        eprintln!("{}: {err}", self.subcommand);
        let code = exit_code_for(err);
        self.finish(code, master_seed)
    }
}

#[derive(Serialize)]
struct SolutionOutput<'a> {
    x: &'a [f64],
    y: &'a [f64],
    final_gap: f64,
    iterations: usize,
    converged: bool,
    step_size: f64,
    gap_every: usize,
    gap_trace: &'a [f64],
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.10}")).collect();
    format!("[{}]", parts.join(", "))
}

pub fn cmd_solve(config: &Path, out: &Path) -> i32 {
    let mut run = match Run::start("solve", config, out) {
        Ok(r) => r,
        Err(code) => return code,
    };
    let report = match solve_saddle(&run.loaded.instance.population(), &run.loaded.config.solver) {
        Ok(r) => r,
        Err(e) => return run.fail(&e, None),
    };
    let output = SolutionOutput {
        x: &report.solution.x,
        y: &report.solution.y,
        final_gap: report.final_gap,
        iterations: report.iterations,
        converged: report.converged,
        step_size: report.step_size,
        gap_every: report.gap_every,
        gap_trace: &report.gap_trace,
    };
    if let Err(e) = run.json("solution.json", &output) {
        return run.fail(&e, None);
    }
    println!("x = {}", fmt_vec(&report.solution.x));
    println!("y = {}", fmt_vec(&report.solution.y));
    println!("gap = {:e} after {} iterations", report.final_gap, report.iterations);
    if report.converged {
        run.finish(EXIT_OK, None)
    } else {
        eprintln!("solve: gap {:e} above tolerance {:e}", report.final_gap, run.loaded.config.solver.gap_tolerance);
        run.finish(EXIT_NON_CONVERGENCE, None)
    }
}

#[derive(Serialize)]
struct QuantileLevel {
    delta: f64,
    quantiles: Vec<QuantilePoint>,
}

#[derive(Serialize)]
struct RateFitOutput {
    slope: Option<f64>,
    intercept: Option<f64>,
    r2: Option<f64>,
    residual_rms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit_error: Option<String>,
    delta: f64,
    quantiles: Vec<QuantilePoint>,
    extra: Vec<QuantileLevel>,
}

pub fn cmd_experiment(config: &Path, out: &Path) -> i32 {
    let mut run = match Run::start("experiment", config, out) {
        Ok(r) => r,
        Err(code) => return code,
    };
    let Some(exp) = run.loaded.config.experiment.clone() else {
        eprintln!("{}: config error: missing experiment section", config.display());
        return run.finish(EXIT_CONFIG, None);
    };
    let seed = Some(exp.master_seed);
    let outcome = match run_experiment(&run.loaded.instance, &exp, run.threads) {
        Ok(o) => o,
        Err(e) => return run.fail(&e, seed),
    };
    let csv = records_csv(&outcome.records);
    if !outcome.failures.is_empty() || !outcome.all_converged() {
        for (n, rep, msg) in &outcome.failures {
            eprintln!("experiment: replication (n = {n}, rep = {rep}) failed: {msg}");
        }
        let unconverged = outcome.records.iter().filter(|r| !r.converged).count();
        if unconverged > 0 {
            eprintln!("experiment: {unconverged} replications did not reach the gap tolerance");
        }
        if let Err(e) = run.text("records.csv.partial", &csv) {
            return run.fail(&e, seed);
        }
        return run.finish(EXIT_NON_CONVERGENCE, seed);
    }
    if let Err(e) = run.text("records.csv", &csv) {
        return run.fail(&e, seed);
    }
    let curve = match quantile_curve(&outcome.records, &exp.n_grid, exp.replications, exp.delta) {
        Ok(c) => c,
        Err(e) => return run.fail(&e, seed),
    };
    let mut extra = Vec::new();
    for &d in &exp.extra_deltas {
        match quantile_curve(&outcome.records, &exp.n_grid, exp.replications, d) {
            Ok(c) => extra.push(QuantileLevel { delta: d, quantiles: c.points }),
            Err(e) => return run.fail(&e, seed),
        }
    }
    let output = match fit_rate(&curve) {
        Ok(f) => RateFitOutput {
            slope: Some(f.slope),
            intercept: Some(f.intercept),
            r2: Some(f.r2),
            residual_rms: Some(f.residual_rms),
            fit_error: None,
            delta: exp.delta,
            quantiles: f.quantiles,
            extra,
        },
        Err(e) => RateFitOutput {
            slope: None,
            intercept: None,
            r2: None,
            residual_rms: None,
            fit_error: Some(e.to_string()),
            delta: exp.delta,
            quantiles: curve.points.clone(),
            extra,
        },
    };
    if let Err(e) = run.json("rate_fit.json", &output) {
        return run.fail(&e, seed);
    }
    println!("{} records", outcome.records.len());
    for p in &output.quantiles {
        println!("n = {:>6}  q = {:e}  mean = {:e}", p.n, p.quantile, p.mean);
    }
    match (output.slope, output.r2) {
        (Some(s), Some(r2)) => println!("slope = {s:.4}  r2 = {r2:.4}"),
        _ => println!("rate fit skipped: {}", output.fit_error.as_deref().unwrap_or("")),
    }
    run.finish(EXIT_OK, seed)
}

pub fn cmd_verify(config: &Path, out: &Path) -> i32 {
    let mut run = match Run::start("verify", config, out) {
        Ok(r) => r,
        Err(code) => return code,
    };
    let v = run.loaded.config.verify.clone().unwrap_or_default();
    let report = match verify_assumptions(&run.loaded.instance, v.n_probe, v.seed) {
        Ok(r) => r,
        Err(e) => return run.fail(&e, Some(v.seed)),
    };
    if let Err(e) = run.json("verify_report.json", &report) {
        return run.fail(&e, Some(v.seed));
    }
    for c in &report.checks {
        println!(
            "{:<12} {:<4} estimate = {:<14.6e} theory = {:<14.6e} slack = {:.3e}",
            c.name,
            if c.consistent { "ok" } else { "FAIL" },
            c.estimate,
            c.theory,
            c.slack
        );
    }
    if report.passed {
        run.finish(EXIT_OK, Some(v.seed))
    } else {
        for c in report.failures() {
            eprintln!("verify: {} failed with worst slack {:e}", c.name, c.slack);
        }
        run.finish(EXIT_CHECK_FAILED, Some(v.seed))
    }
}

#[derive(Serialize)]
struct Lemma41Summary {
    n: usize,
    replications: usize,
    worst_slack: f64,
    allowance: f64,
    failures: Vec<u64>,
    passed: bool,
}

#[derive(Serialize)]
struct ShiftedReport {
    passed: bool,
    failures: Vec<String>,
    exp_moment: Value,
    refinement: Option<Value>,
    lemma41: Lemma41Summary,
    localization: Value,
}

pub fn cmd_shifted(config: &Path, out: &Path) -> i32 {
    let mut run = match Run::start("shifted", config, out) {
        Ok(r) => r,
        Err(code) => return code,
    };
    let Some(cfg) = run.loaded.config.shifted.clone() else {
        eprintln!("{}: config error: missing shifted section", config.display());
        return run.finish(EXIT_CONFIG, None);
    };
    let seed = Some(cfg.seed);
    let instance = run.loaded.instance.clone();
    let mut failures = Vec::new();

    if let Err(e) = lambda_lemma42(&instance.constants(), cfg.n) {
        return run.fail(&e, seed);
    }
    let moment = match exp_moment_check(&instance, &cfg, run.threads) {
        Ok(m) => m,
        Err(e) => return run.fail(&e, seed),
    };
    if !moment.passed {
        failures.push(format!(
            "exp_moment: log estimate {:e} exceeds log bound {:e}",
            moment.log_mc_estimate, moment.log_paper_bound
        ));
    }
    let mut suprema = String::from("draw,sup,grid_sup\n");
    for (m, (s, g)) in moment.suprema.iter().zip(&moment.grid_suprema).enumerate() {
        let _ = writeln!(suprema, "{m},{},{}", format_decimal(*s), format_decimal(*g));
    }

    let refinement = if cfg.refinement_check {
        match grid_refinement_check(&instance, &cfg, REFINEMENT_TOLERANCE) {
            Ok(r) => {
                if !r.passed {
                    failures.push(format!("grid refinement: difference {:e} above {:e}", r.difference, r.tolerance));
                }
                Some(serde_json::to_value(r).unwrap_or(Value::Null))
            }
            Err(e) => return run.fail(&e, seed),
        }
    } else {
        None
    };

    let mut lemma41 = Lemma41Summary {
        n: cfg.lemma41_n,
        replications: cfg.lemma41_replications,
        worst_slack: f64::INFINITY,
        allowance: DEFAULT_ALLOWANCE,
        failures: Vec::new(),
        passed: true,
    };
    for r in 0..cfg.lemma41_replications {
        let s = crate::rng::derive_seed(cfg.seed, &[41, r as u64]);
        match check_lemma41_chain(&instance, cfg.lemma41_n, s, &run.loaded.config.solver, DEFAULT_ALLOWANCE) {
            Ok(rep) => {
                lemma41.worst_slack = lemma41.worst_slack.min(rep.slack);
                if !rep.passed {
                    lemma41.failures.push(s);
                }
            }
            Err(e) => return run.fail(&e, seed),
        }
    }
    lemma41.passed = lemma41.failures.is_empty();
    if !lemma41.passed {
        failures.push(format!(
            "lemma41 chain: {} replications below allowance, worst slack {:e}",
            lemma41.failures.len(),
            lemma41.worst_slack
        ));
    }

    let localization = if instance.constants().assumption4_holds {
        match check_localization(&instance, cfg.localization_probes, cfg.seed, DEFAULT_ALLOWANCE) {
            Ok(l) => {
                if !l.passed {
                    failures.push(format!("localization: worst slack {:e}", l.worst_slack));
                }
                serde_json::to_value(l).unwrap_or(Value::Null)
            }
            Err(e) => return run.fail(&e, seed),
        }
    } else {
        serde_json::json!({ "skipped": "L_xy is not below min(σ_x, σ_y)" })
    };

    let mut moment_json = serde_json::to_value(&moment).unwrap_or(Value::Null);
    if let Value::Object(m) = &mut moment_json {
        m.remove("suprema");
        m.remove("grid_suprema");
    }
    let report = ShiftedReport {
        passed: failures.is_empty(),
        failures: failures.clone(),
        exp_moment: moment_json,
        refinement,
        lemma41,
        localization,
    };
    if let Err(e) = run.json("shifted_report.json", &report).and_then(|_| run.text("suprema.csv", &suprema)) {
        return run.fail(&e, seed);
    }
    println!(
        "exp moment: log estimate = {:e}, log bound = {:.1}, λ = {:e}",
        moment.log_mc_estimate, moment.log_paper_bound, moment.constants.lambda
    );
    println!("symmetrization chain: worst slack = {:e}", report.lemma41.worst_slack);
    if failures.is_empty() {
        println!("all checks passed");
        run.finish(EXIT_OK, seed)
    } else {
        for f in &failures {
            eprintln!("shifted: {f}");
        }
        run.finish(EXIT_CHECK_FAILED, seed)
    }
}
