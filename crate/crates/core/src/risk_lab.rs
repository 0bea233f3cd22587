//! Monte-Carlo study of the strong excess risk of empirical saddle points.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BlockVector;
use crate::problems::ProblemInstance;
use crate::rng;
use crate::scalar::Scalar;
use crate::solver::{best_response_x, best_response_y, solve_saddle, SaddlePair, SolverConfig};

/// Risks below this are treated as oracle failures.
pub const RISK_FLOOR: f64 = -1e-8;
/// Oracle suboptimality allowed relative to the measured risk.
pub const ORACLE_BUDGET: f64 = 0.01;
const MIN_ORACLE_TOLERANCE: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RiskEvaluation<T> {
    /// `F(x̂, y*(x̂)) − F(x*(ŷ), ŷ)` under the population distribution.
    pub risk: T,
    pub primal: T,
    pub dual: T,
    /// Combined certified suboptimality of the two population best responses.
    pub oracle_bound: T,
    pub y_response: BlockVector<T>,
    pub x_response: BlockVector<T>,
    pub oracle_tolerance: f64,
}

fn evaluate_once<T: Scalar>(
    instance: &ProblemInstance<T>,
    pair: &SaddlePair<T>,
    oracle: &SolverConfig,
) -> Result<RiskEvaluation<T>> {
    let pop = instance.population();
    let by = best_response_y(&pop, &pair.x, oracle)?;
    let bx = best_response_x(&pop, &pair.y, oracle)?;
    let risk = by.value - bx.value;
    if !risk.is_finite() {
        return Err(Error::NonFinite("strong excess risk"));
    }
    Ok(RiskEvaluation {
        risk,
        primal: by.value,
        dual: bx.value,
        oracle_bound: by.optimality_bound + bx.optimality_bound,
        y_response: by.point,
        x_response: bx.point,
        oracle_tolerance: oracle.inner_tolerance,
    })
}

/// Strong excess risk of `pair` with population best responses.
///
/// The oracle tolerance is tightened until its certified error is below 1% of
/// the measured risk or the tolerance floor is reached.
pub fn strong_excess_risk<T: Scalar>(
    instance: &ProblemInstance<T>,
    pair: &SaddlePair<T>,
    oracle: &SolverConfig,
) -> Result<RiskEvaluation<T>> {
    instance.x_geometry().ensure_feasible(&pair.x, "x")?;
    instance.y_geometry().ensure_feasible(&pair.y, "y")?;
    let mut cfg = oracle.clone();
    let mut eval = evaluate_once(instance, pair, &cfg)?;
    let budget = T::lit(ORACLE_BUDGET);
    while eval.oracle_bound > budget * eval.risk.abs() && cfg.inner_tolerance > MIN_ORACLE_TOLERANCE {
        cfg.inner_tolerance = (cfg.inner_tolerance * 0.01).max(MIN_ORACLE_TOLERANCE);
        cfg.inner_max_iters = cfg.inner_max_iters.saturating_mul(2);
        eval = evaluate_once(instance, pair, &cfg)?;
    }
    if eval.risk.as_f64() < RISK_FLOOR {
        return Err(Error::Oracle(format!("strong excess risk {:e} is negative", eval.risk.as_f64())));
    }
    Ok(eval)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskRecord {
    pub n: usize,
    pub rep: usize,
    pub seed: u64,
    pub risk: f64,
    pub emp_gap: f64,
    pub oracle_gap: f64,
    pub wall_ms: f64,
    pub converged: bool,
}

/// Solvers for the empirical problem and for the population oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskSolvers {
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "SolverConfig::oracle")]
    pub oracle: SolverConfig,
}

impl Default for RiskSolvers {
    fn default() -> Self {
        Self { solver: SolverConfig::default(), oracle: SolverConfig::oracle() }
    }
}

/// Sample with `seed`, solve the empirical problem, measure its risk.
pub fn run_replication_seeded<T: Scalar>(
    instance: &ProblemInstance<T>,
    n: usize,
    rep: usize,
    seed: u64,
    solvers: &RiskSolvers,
    record_wall_time: bool,
) -> Result<RiskRecord> {
    let start = Instant::now();
    let sample = instance.sample(n, seed)?;
    let empirical = instance.empirical(&sample)?;
    let report = solve_saddle(&empirical, &solvers.solver)?;
    let eval = strong_excess_risk(instance, &report.solution, &solvers.oracle)?;
    let wall_ms = if record_wall_time { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
    Ok(RiskRecord {
        n,
        rep,
        seed,
        risk: eval.risk.as_f64(),
        emp_gap: report.final_gap.as_f64(),
        oracle_gap: eval.oracle_bound.as_f64(),
        wall_ms,
        converged: report.converged,
    })
}

/// Replication `rep` at size `n` with the seed derived from `master_seed`.
pub fn run_replication<T: Scalar>(
    instance: &ProblemInstance<T>,
    n: usize,
    rep: usize,
    master_seed: u64,
    solvers: &RiskSolvers,
) -> Result<RiskRecord> {
    run_replication_seeded(instance, n, rep, rng::replication_seed(master_seed, n, rep), solvers, false)
}

fn default_delta() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_grid: Vec<usize>,
    pub replications: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub master_seed: u64,
    /// Filled from the run config's `solver` and `oracle` sections.
    #[serde(skip)]
    pub solvers: RiskSolvers,
    /// Extra quantile levels reported alongside `delta`.
    #[serde(default)]
    pub extra_deltas: Vec<f64>,
    /// Store elapsed time per replication; zero otherwise so reruns are byte-identical.
    #[serde(default)]
    pub record_wall_time: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() {
            return Err(Error::Config("n_grid must not be empty".into()));
        }
        if self.n_grid.iter().any(|&n| n < 2) {
            return Err(Error::Config("every n in n_grid must be at least 2".into()));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("n_grid must be strictly increasing".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        for &d in std::iter::once(&self.delta).chain(&self.extra_deltas) {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::Config(format!("delta must lie in (0, 1), got {d}")));
            }
            if d <= 0.1 && self.replications < 20 {
                return Err(Error::Config(format!(
                    "delta = {d} needs at least 20 replications, got {}",
                    self.replications
                )));
            }
        }
        self.solvers.solver.validate()?;
        self.solvers.oracle.validate()
    }

    pub fn tasks(&self) -> Vec<(usize, usize)> {
        self.n_grid
            .iter()
            .flat_map(|&n| (0..self.replications).map(move |rep| (n, rep)))
            .collect()
    }
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    /// Successful records sorted by `(n, rep)`.
    pub records: Vec<RiskRecord>,
    pub failures: Vec<(usize, usize, String)>,
}

impl ExperimentOutcome {
    pub fn all_converged(&self) -> bool {
        self.records.iter().all(|r| r.converged)
    }
}

/// Runs every `(n, rep)` task on a pool of `threads` workers.
pub fn run_experiment<T: Scalar>(
    instance: &ProblemInstance<T>,
    config: &ExperimentConfig,
    threads: usize,
) -> Result<ExperimentOutcome> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let tasks = config.tasks();
    let results: Vec<_> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(n, rep)| {
                let seed = rng::replication_seed(config.master_seed, n, rep);
                run_replication_seeded(instance, n, rep, seed, &config.solvers, config.record_wall_time)
            })
            .collect()
    });
    let mut records = Vec::with_capacity(tasks.len());
    let mut failures = Vec::new();
    for (&(n, rep), res) in tasks.iter().zip(results) {
        match res {
            Ok(r) => records.push(r),
            Err(e) => failures.push((n, rep, e.to_string())),
        }
    }
    Ok(ExperimentOutcome { records, failures })
}

/// The `⌈(1−δ)R⌉`-th smallest value.
pub fn order_statistic_quantile(values: &[f64], delta: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::RateFit("quantile of an empty set".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let r = sorted.len();
    let k = (((1.0 - delta) * r as f64) - 1e-9).ceil().clamp(1.0, r as f64) as usize;
    Ok(sorted[k - 1])
}

fn median(sorted: &[f64]) -> f64 {
    let r = sorted.len();
    if r % 2 == 1 {
        sorted[r / 2]
    } else {
        0.5 * (sorted[r / 2 - 1] + sorted[r / 2])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantilePoint {
    pub n: usize,
    #[serde(rename = "q")]
    pub quantile: f64,
    pub mean: f64,
    pub median: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileCurve {
    pub delta: f64,
    pub points: Vec<QuantilePoint>,
}

impl QuantileCurve {
    pub fn at(&self, n: usize) -> Option<&QuantilePoint> {
        self.points.iter().find(|p| p.n == n)
    }
}

/// Per-n `(1−δ)`-quantile of the recorded risks; every `(n, rep)` must be present.
pub fn quantile_curve(
    records: &[RiskRecord],
    n_grid: &[usize],
    replications: usize,
    delta: f64,
) -> Result<QuantileCurve> {
    let mut missing = Vec::new();
    let mut points = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let mut seen = vec![false; replications];
        let mut risks = Vec::with_capacity(replications);
        for r in records.iter().filter(|r| r.n == n && r.rep < replications) {
            if !seen[r.rep] {
                seen[r.rep] = true;
                risks.push(r.risk);
            }
        }
        missing.extend(seen.iter().enumerate().filter(|(_, s)| !**s).map(|(rep, _)| (n, rep)));
        if risks.is_empty() {
            continue;
        }
        let quantile = order_statistic_quantile(&risks, delta)?;
        risks.sort_by(f64::total_cmp);
        let mean = risks.iter().sum::<f64>() / risks.len() as f64;
        points.push(QuantilePoint { n, quantile, mean, median: median(&risks), count: risks.len() });
    }
    if !missing.is_empty() {
        return Err(Error::MissingRecords(missing));
    }
    Ok(QuantileCurve { delta, points })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub residual_rms: f64,
    pub quantiles: Vec<QuantilePoint>,
}

/// Least squares of `log q` on `log n`.
pub fn fit_rate(curve: &QuantileCurve) -> Result<RateFit> {
    let pts = &curve.points;
    if pts.len() < 4 {
        return Err(Error::RateFit(format!("need at least 4 grid points, got {}", pts.len())));
    }
    if let Some(p) = pts.iter().find(|p| !(p.quantile > 0.0)) {
        return Err(Error::RateFit(format!("quantile {:e} at n = {} is not positive", p.quantile, p.n)));
    }
    let xs: Vec<f64> = pts.iter().map(|p| (p.n as f64).ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.quantile.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(RateFit { slope, intercept, r2, residual_rms: (ss_res / m).sqrt(), quantiles: pts.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(qs: &[(usize, f64)]) -> QuantileCurve {
        QuantileCurve {
            delta: 0.05,
            points: qs
                .iter()
                .map(|&(n, q)| QuantilePoint { n, quantile: q, mean: q, median: q, count: 1 })
                .collect(),
        }
    }

    #[test]
    fn order_statistics() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(order_statistic_quantile(&v, 0.05).unwrap(), 95.0);
        assert_eq!(order_statistic_quantile(&[3.0; 25], 0.1).unwrap(), 3.0);
        // Odd R: δ = 1/2 picks the middle element.
        assert_eq!(order_statistic_quantile(&[5.0, 1.0, 3.0, 2.0, 4.0], 0.5).unwrap(), 3.0);
    }

    #[test]
    fn exact_power_laws() {
        let fit = fit_rate(&curve(&[(64, 3.0 / 64.0), (128, 3.0 / 128.0), (256, 3.0 / 256.0), (512, 3.0 / 512.0)])).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12 && fit.residual_rms < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-10);
        let half: Vec<_> = [16usize, 64, 256, 1024].iter().map(|&n| (n, 2.0 / (n as f64).sqrt())).collect();
        assert!((fit_rate(&curve(&half)).unwrap().slope + 0.5).abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(fit_rate(&curve(&[(1, 1.0), (2, 0.5), (4, 0.25)])).is_err());
        assert!(fit_rate(&curve(&[(1, 1.0), (2, 0.0), (4, 0.25), (8, 0.1)])).is_err());
    }

    #[test]
    fn missing_records_are_listed() {
        let rec = |n, rep| RiskRecord { n, rep, seed: 0, risk: 1.0, emp_gap: 0.0, oracle_gap: 0.0, wall_ms: 0.0, converged: true };
        let records = vec![rec(4, 0), rec(4, 2), rec(8, 1)];
        match quantile_curve(&records, &[4, 8], 3, 0.5) {
            Err(Error::MissingRecords(m)) => assert_eq!(m, vec![(4, 1), (8, 0), (8, 2)]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let ok = ExperimentConfig {
            n_grid: vec![4, 8],
            replications: 20,
            delta: 0.05,
            master_seed: 1,
            solvers: RiskSolvers::default(),
            extra_deltas: vec![],
            record_wall_time: false,
        };
        assert!(ok.validate().is_ok());
        assert!(ExperimentConfig { n_grid: vec![8, 4], ..ok.clone() }.validate().is_err());
        assert!(ExperimentConfig { n_grid: vec![1, 4], ..ok.clone() }.validate().is_err());
        assert!(ExperimentConfig { replications: 19, ..ok.clone() }.validate().is_err());
        assert!(ExperimentConfig { replications: 1, delta: 0.5, ..ok.clone() }.validate().is_ok());
        assert!(ExperimentConfig { delta: 1.0, ..ok.clone() }.validate().is_err());
    }
}
