//! Shifted Rademacher process, symmetrization chain and localization checks.

use std::f64::consts::{E, SQRT_2};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BlockVector, GeometrySpec};
use crate::problems::{ProblemInstance, SampleSet, TheoreticalConstants};
use crate::rng;
use crate::scalar::Scalar;
use crate::solver::{best_response_x, best_response_y, solve_saddle, Averaging, SaddlePair, SolverConfig, StepSize};

pub const DEFAULT_ALLOWANCE: f64 = 1e-6;
pub const MIN_DRAWS: usize = 100;
pub const MAX_RESOLUTION: f64 = 0.05;
const MAX_BLOCK_POINTS: usize = 200_000;
const MAX_PAIR_EVALUATIONS: usize = 200_000_000;
const BOOTSTRAP_RESAMPLES: usize = 200;

/// Step size `λ` of the exponential-moment bound with its auxiliary constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaConstants {
    pub lambda: f64,
    /// `C = 1 − L_xy / min σ`.
    pub c: f64,
    /// `C̃ = √2 (1 + L_xy / min σ)`.
    pub c_tilde: f64,
    /// `L̃ = 2 max(L_x, L_y) C̃`.
    pub l_tilde: f64,
}

pub fn lambda_lemma42<T: Scalar>(constants: &TheoreticalConstants<T>, n: usize) -> Result<LambdaConstants> {
    let min_sigma = constants.min_sigma().as_f64();
    let max_sigma = constants.max_sigma().as_f64();
    let l_xy = constants.l_xy.as_f64();
    if !(min_sigma > 0.0) {
        return Err(Error::Assumption(format!("min σ = {min_sigma} must be positive")));
    }
    let ratio = l_xy / min_sigma;
    let c = 1.0 - ratio;
    if c < 0.0 {
        return Err(Error::Assumption(format!("L_xy = {l_xy} exceeds min σ = {min_sigma}")));
    }
    let c_tilde = SQRT_2 * (1.0 + ratio);
    let l_tilde = 2.0 * constants.max_lipschitz().as_f64() * c_tilde;
    let lambda = max_sigma * c * c * n as f64 / (32.0 * SQRT_2 * E * l_tilde * l_tilde);
    Ok(LambdaConstants { lambda, c, c_tilde, l_tilde })
}

/// `ln(e + e^{3d} + 12 e^{2048 (1+e)² d / e})`.
pub fn log_paper_bound(d: usize) -> f64 {
    let d = d as f64;
    log_sum_exp(&[1.0, 3.0 * d, 12f64.ln() + 2048.0 * (1.0 + E).powi(2) * d / E])
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn log_mean_exp(values: &[f64]) -> f64 {
    log_sum_exp(values) - (values.len() as f64).ln()
}

/// High-accuracy population saddle point.
pub fn population_saddle<T: Scalar>(instance: &ProblemInstance<T>) -> Result<SaddlePair<T>> {
    let cfg = SolverConfig {
        step_size: StepSize::Auto,
        max_iters: 200_000,
        gap_tolerance: 1e-14,
        averaging: Averaging::Last,
        ..SolverConfig::oracle()
    };
    let report = solve_saddle(&instance.population(), &cfg)?;
    if !(report.final_gap.as_f64() <= 1e-10) {
        return Err(Error::NonConvergence(format!(
            "population saddle gap {:e} after {} iterations",
            report.final_gap.as_f64(),
            report.iterations
        )));
    }
    Ok(report.solution)
}

fn rademacher(n: usize, seed: u64) -> Vec<i8> {
    let mut stream = rng::stream(seed);
    (0..n).map(|_| if stream.random::<bool>() { 1 } else { -1 }).collect()
}

/// Rademacher signs of draw `m`.
pub fn rademacher_draw(n: usize, seed: u64, m: usize) -> Vec<i8> {
    rademacher(n, rng::derive_seed(seed, &[0x5348_4946, m as u64]))
}

/// The process `P_n ε(F(x, y*(x), ξ) − F(x*(y), y, ξ)) − (σ_y/8)‖y − y*(x)‖² − (σ_x/8)‖x − x*(y)‖²`
/// with population best responses.
pub struct ShiftedProcess<'a, T> {
    instance: &'a ProblemInstance<T>,
    /// Per-atom signed weights `(1/n) Σ_{i: ξ_i = k} ε_i`.
    weights: Vec<T>,
    sigma_x: T,
    sigma_y: T,
    oracle: SolverConfig,
}

impl<'a, T: Scalar> ShiftedProcess<'a, T> {
    pub fn new(instance: &'a ProblemInstance<T>, sample: &SampleSet, eps: &[i8]) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::EmptySupport);
        }
        if eps.len() != sample.len() {
            return Err(Error::DimensionMismatch { expected: sample.len(), got: eps.len() });
        }
        if eps.iter().any(|&e| e != 1 && e != -1) {
            return Err(Error::Config("Rademacher signs must be ±1".into()));
        }
        let mut weights = vec![T::zero(); instance.support_len()];
        let inv_n = T::one() / T::from_usize_lossy(sample.len());
        for (&k, &e) in sample.indices.iter().zip(eps) {
            if k >= weights.len() {
                return Err(Error::UnknownAtom { index: k, len: weights.len() });
            }
            weights[k] = weights[k] + T::lit(f64::from(e)) * inv_n;
        }
        let c = instance.constants();
        Ok(Self { instance, weights, sigma_x: c.sigma_x, sigma_y: c.sigma_y, oracle: SolverConfig::oracle() })
    }

    /// Multiplies both localization penalties.
    pub fn with_penalty_scale(mut self, scale: T) -> Self {
        self.sigma_x = self.sigma_x * scale;
        self.sigma_y = self.sigma_y * scale;
        self
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    fn signed(&self, x: &[T], y: &[T]) -> T {
        self.instance.atom_losses(x, y).into_iter().zip(&self.weights).map(|(f, &w)| w * f).sum()
    }

    fn penalty_x(&self, x: &[T], xs: &[T]) -> Result<T> {
        let d = self.instance.x_geometry().distance(x, xs)?;
        Ok(self.sigma_x / T::lit(8.0) * d * d)
    }

    fn penalty_y(&self, y: &[T], ys: &[T]) -> Result<T> {
        let d = self.instance.y_geometry().distance(y, ys)?;
        Ok(self.sigma_y / T::lit(8.0) * d * d)
    }

    /// `(y*(x), x*(y))` from the population oracle.
    pub fn responses(&self, x: &[T], y: &[T]) -> Result<(BlockVector<T>, BlockVector<T>)> {
        let pop = self.instance.population();
        let ys = best_response_y(&pop, x, &self.oracle)?.point;
        let xs = best_response_x(&pop, y, &self.oracle)?.point;
        Ok((ys, xs))
    }

    pub fn value(&self, x: &[T], y: &[T]) -> Result<T> {
        self.instance.x_geometry().ensure_feasible(x, "x")?;
        self.instance.y_geometry().ensure_feasible(y, "y")?;
        let (ys, xs) = self.responses(x, y)?;
        let linear = self.signed(x, &ys) - self.signed(&xs, y);
        Ok(linear - self.penalty_y(y, &ys)? - self.penalty_x(x, &xs)?)
    }
}

/// Evaluates the process at an arbitrary pair.
pub fn shifted_process_value<T: Scalar>(
    instance: &ProblemInstance<T>,
    pair: &SaddlePair<T>,
    sample: &SampleSet,
    eps: &[i8],
) -> Result<T> {
    ShiftedProcess::new(instance, sample, eps)?.value(&pair.x, &pair.y)
}

/// Lattice `ℓ + (1 − dℓ) k/m`, `Σ k = m`, with ℓ1 spacing `2(1 − dℓ)/m ≤ resolution`.
fn simplex_lattice<T: Scalar>(geom: &GeometrySpec<T>, resolution: f64) -> Result<Vec<BlockVector<T>>> {
    let d = geom.dim();
    let floor = geom.floor().map_or(0.0, |f| f.as_f64());
    let mass = 1.0 - d as f64 * floor;
    let m = (2.0 * mass / resolution).ceil().max(1.0) as usize;
    // Number of compositions of m into d parts.
    let mut count: f64 = 1.0;
    for i in 1..d {
        count *= (m + i) as f64 / i as f64;
    }
    if count > MAX_BLOCK_POINTS as f64 {
        return Err(Error::Config(format!(
            "grid with resolution {resolution} needs {count:.0} points per block (limit {MAX_BLOCK_POINTS})"
        )));
    }
    let mut points = Vec::with_capacity(count as usize);
    let mut k = vec![0usize; d];
    fn rec<T: Scalar>(k: &mut [usize], i: usize, left: usize, m: usize, floor: f64, mass: f64, out: &mut Vec<BlockVector<T>>) {
        if i + 1 == k.len() {
            k[i] = left;
            out.push(BlockVector(
                k.iter().map(|&ki| T::lit(floor + mass * ki as f64 / m as f64)).collect(),
            ));
            return;
        }
        for v in 0..=left {
            k[i] = v;
            rec(k, i + 1, left - v, m, floor, mass, out);
        }
    }
    rec(&mut k, 0, m, m, floor, mass, &mut points);
    Ok(points)
}

/// Grid in both blocks with precomputed population best responses.
pub struct ShiftedGrid<T> {
    pub resolution: f64,
    xs: Vec<BlockVector<T>>,
    ys: Vec<BlockVector<T>>,
    /// `y*(x_i)`.
    y_resp: Vec<BlockVector<T>>,
    /// `x*(y_j)`.
    x_resp: Vec<BlockVector<T>>,
    /// Per-atom losses `f_k(x_i, y*(x_i))` and `f_k(x*(y_j), y_j)`.
    fx: Vec<Vec<T>>,
    fy: Vec<Vec<T>>,
    saddle: SaddlePair<T>,
}

impl<T: Scalar> ShiftedGrid<T> {
    pub fn new(instance: &ProblemInstance<T>, resolution: f64) -> Result<Self> {
        if !(resolution > 0.0 && resolution <= MAX_RESOLUTION) {
            return Err(Error::Config(format!("grid resolution must lie in (0, {MAX_RESOLUTION}], got {resolution}")));
        }
        Self::build(instance, resolution)
    }

    /// Builds without the resolution ceiling (used for refinement checks).
    pub fn build(instance: &ProblemInstance<T>, resolution: f64) -> Result<Self> {
        let (gx, gy) = (instance.x_geometry(), instance.y_geometry());
        if !gx.is_entropic() || !gy.is_entropic() {
            return Err(Error::Config("the shifted-process supremum needs simplex blocks (matrix games)".into()));
        }
        let xs = simplex_lattice(gx, resolution)?;
        let ys = simplex_lattice(gy, resolution)?;
        if xs.len().saturating_mul(ys.len()) > MAX_PAIR_EVALUATIONS {
            return Err(Error::Config(format!(
                "grid of {} × {} pairs exceeds the evaluation budget",
                xs.len(),
                ys.len()
            )));
        }
        let pop = instance.population();
        let oracle = SolverConfig::oracle();
        let y_resp = xs.iter().map(|x| best_response_y(&pop, x, &oracle).map(|b| b.point)).collect::<Result<Vec<_>>>()?;
        let x_resp = ys.iter().map(|y| best_response_x(&pop, y, &oracle).map(|b| b.point)).collect::<Result<Vec<_>>>()?;
        let fx = xs.iter().zip(&y_resp).map(|(x, ys)| instance.atom_losses(x, ys)).collect();
        let fy = ys.iter().zip(&x_resp).map(|(y, xs)| instance.atom_losses(xs, y)).collect();
        let saddle = population_saddle(instance)?;
        Ok(Self { resolution, xs, ys, y_resp, x_resp, fx, fy, saddle })
    }

    pub fn len(&self) -> (usize, usize) {
        (self.xs.len(), self.ys.len())
    }

    pub fn saddle(&self) -> &SaddlePair<T> {
        &self.saddle
    }

    /// Best grid pair `(value, i, j)`.
    fn grid_max(&self, process: &ShiftedProcess<'_, T>) -> Result<(T, usize, usize)> {
        let w = &process.weights;
        let weighted = |f: &[T]| f.iter().zip(w).map(|(&a, &b)| a * b).sum::<T>();
        let a: Vec<T> = self.fx.iter().map(|f| weighted(f)).collect();
        let b: Vec<T> = self.fy.iter().map(|f| weighted(f)).collect();
        let (gx, gy) = (process.instance.x_geometry(), process.instance.y_geometry());
        let eighth = T::lit(0.125);
        let (sx, sy) = (process.sigma_x * eighth, process.sigma_y * eighth);
        let mut best = (T::neg_infinity(), 0, 0);
        for (i, x) in self.xs.iter().enumerate() {
            for (j, y) in self.ys.iter().enumerate() {
                let dy = gy.distance(y, &self.y_resp[i])?;
                let dx = gx.distance(x, &self.x_resp[j])?;
                let v = a[i] - b[j] - sy * dy * dy - sx * dx * dx;
                if v > best.0 {
                    best = (v, i, j);
                }
            }
        }
        Ok(best)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupremumEstimate<T> {
    /// Best value on the grid.
    pub grid_value: T,
    /// Value after local refinement; never below zero.
    pub value: T,
    pub argmax: SaddlePair<T>,
}

/// Pattern search along `e_a − e_b` moves inside the truncated simplices.
fn refine<T: Scalar>(
    process: &ShiftedProcess<'_, T>,
    start: SaddlePair<T>,
    start_value: T,
    initial_step: f64,
) -> Result<(T, SaddlePair<T>)> {
    let (gx, gy) = (process.instance.x_geometry(), process.instance.y_geometry());
    let mut best = (start_value, start);
    let mut step = initial_step;
    let mut evaluations = 0;
    while step > 1e-10 && evaluations < 20_000 {
        let mut improved = false;
        for block in 0..2 {
            let d = if block == 0 { gx.dim() } else { gy.dim() };
            let floor = if block == 0 { gx.floor() } else { gy.floor() }.unwrap_or_else(T::zero);
            for a in 0..d {
                for b in 0..d {
                    if a == b {
                        continue;
                    }
                    let mut cand = best.1.clone();
                    let v = if block == 0 { &mut cand.x.0 } else { &mut cand.y.0 };
                    let s = T::lit(step);
                    if v[b] - s < floor {
                        continue;
                    }
                    v[a] = v[a] + s;
                    v[b] = v[b] - s;
                    evaluations += 1;
                    let value = process.value(&cand.x, &cand.y)?;
                    if value > best.0 {
                        best = (value, cand);
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok(best)
}

/// Supremum of the process over both blocks: grid search, then local refinement,
/// with the population saddle (value 0) as a witness.
pub fn sup_shifted_process<T: Scalar>(
    grid: &ShiftedGrid<T>,
    process: &ShiftedProcess<'_, T>,
    refine_locally: bool,
) -> Result<SupremumEstimate<T>> {
    let (grid_value, i, j) = grid.grid_max(process)?;
    if !grid_value.is_finite() {
        return Err(Error::NonFinite("shifted-process supremum"));
    }
    let grid_pair = SaddlePair::new(grid.xs[i].clone(), grid.ys[j].clone());
    let (mut value, mut argmax) = if refine_locally {
        let start = process.value(&grid_pair.x, &grid_pair.y)?;
        let spacing = grid.resolution / 2.0;
        refine(process, grid_pair, start, spacing)?
    } else {
        (grid_value, grid_pair)
    };
    let witness = process.value(&grid.saddle.x, &grid.saddle.y)?;
    if witness.max(T::zero()) >= value {
        value = witness.max(T::zero());
        argmax = grid.saddle.clone();
    }
    Ok(SupremumEstimate { grid_value, value, argmax })
}

fn default_lemma41_n() -> usize {
    16
}
fn default_lemma41_replications() -> usize {
    100
}
fn default_probes() -> usize {
    1000
}
fn default_resolution() -> f64 {
    0.02
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftedProcessConfig {
    pub n: usize,
    /// Rademacher draws `M`.
    pub draws: usize,
    /// ℓ1 spacing of the grid in each block.
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    #[serde(default)]
    pub seed: u64,
    /// Compare the grid supremum with a 10× finer grid on the first draw.
    #[serde(default = "default_true")]
    pub refinement_check: bool,
    #[serde(default = "default_lemma41_n")]
    pub lemma41_n: usize,
    #[serde(default = "default_lemma41_replications")]
    pub lemma41_replications: usize,
    #[serde(default = "default_probes")]
    pub localization_probes: usize,
}

impl ShiftedProcessConfig {
    pub fn new(n: usize, draws: usize, seed: u64) -> Self {
        Self {
            n,
            draws,
            resolution: default_resolution(),
            seed,
            refinement_check: true,
            lemma41_n: default_lemma41_n(),
            lemma41_replications: default_lemma41_replications(),
            localization_probes: default_probes(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.lemma41_n == 0 {
            return Err(Error::Config("n and lemma41_n must be positive".into()));
        }
        if self.draws < MIN_DRAWS {
            return Err(Error::Config(format!("draws must be at least {MIN_DRAWS}, got {}", self.draws)));
        }
        if !(self.resolution > 0.0 && self.resolution <= MAX_RESOLUTION) {
            return Err(Error::Config(format!(
                "resolution must lie in (0, {MAX_RESOLUTION}], got {}",
                self.resolution
            )));
        }
        if self.lemma41_replications == 0 || self.localization_probes == 0 {
            return Err(Error::Config("lemma41_replications and localization_probes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExpMomentReport {
    pub d: usize,
    pub n: usize,
    pub draws: usize,
    pub constants: LambdaConstants,
    pub log_mc_estimate: f64,
    pub log_paper_bound: f64,
    pub bootstrap_se: f64,
    pub passed: bool,
    /// Refined supremum per draw.
    pub suprema: Vec<f64>,
    pub grid_suprema: Vec<f64>,
}

/// Log-mean-exp of `λ · sup` over `M` Rademacher draws against the closed-form bound.
pub fn exp_moment_check<T: Scalar>(
    instance: &ProblemInstance<T>,
    config: &ShiftedProcessConfig,
    threads: usize,
) -> Result<ExpMomentReport> {
    config.validate()?;
    let grid = ShiftedGrid::new(instance, config.resolution)?;
    exp_moment_with_grid(instance, &grid, config, threads)
}

pub fn exp_moment_with_grid<T: Scalar>(
    instance: &ProblemInstance<T>,
    grid: &ShiftedGrid<T>,
    config: &ShiftedProcessConfig,
    threads: usize,
) -> Result<ExpMomentReport> {
    let constants = lambda_lemma42(&instance.constants(), config.n)?;
    let sample = instance.sample(config.n, config.seed)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let sups: Vec<Result<(f64, f64)>> = pool.install(|| {
        (0..config.draws)
            .into_par_iter()
            .map(|m| {
                let eps = rademacher_draw(config.n, config.seed, m);
                let process = ShiftedProcess::new(instance, &sample, &eps)?;
                let est = sup_shifted_process(grid, &process, true)?;
                Ok((est.value.as_f64(), est.grid_value.as_f64()))
            })
            .collect()
    });
    let (suprema, grid_suprema): (Vec<f64>, Vec<f64>) = sups.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    if suprema.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("shifted-process supremum"));
    }
    let scaled: Vec<f64> = suprema.iter().map(|s| constants.lambda * s).collect();
    let log_mc_estimate = log_mean_exp(&scaled);
    let bootstrap_se = bootstrap_se(&scaled, rng::derive_seed(config.seed, &[0x424f_4f54]));
    let bound = log_paper_bound(instance.dim());
    Ok(ExpMomentReport {
        d: instance.dim(),
        n: config.n,
        draws: config.draws,
        constants,
        log_mc_estimate,
        log_paper_bound: bound,
        bootstrap_se,
        passed: log_mc_estimate <= bound,
        suprema,
        grid_suprema,
    })
}

/// Bootstrap standard error of the log-mean-exp.
fn bootstrap_se(values: &[f64], seed: u64) -> f64 {
    let mut stream = rng::stream(seed);
    let m = values.len();
    let mut resample = vec![0.0; m];
    let estimates: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            for r in resample.iter_mut() {
                *r = values[stream.random_range(0..m)];
            }
            log_mean_exp(&resample)
        })
        .collect();
    let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
    let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (estimates.len() - 1) as f64;
    var.sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefinementCheck {
    pub coarse_resolution: f64,
    pub fine_resolution: f64,
    pub coarse_grid_value: f64,
    pub fine_grid_value: f64,
    pub difference: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Grid supremum at `resolution` against a grid ten times finer, on draw 0.
pub fn grid_refinement_check<T: Scalar>(
    instance: &ProblemInstance<T>,
    config: &ShiftedProcessConfig,
    tolerance: f64,
) -> Result<RefinementCheck> {
    let sample = instance.sample(config.n, config.seed)?;
    let eps = rademacher_draw(config.n, config.seed, 0);
    let process = ShiftedProcess::new(instance, &sample, &eps)?;
    let coarse = ShiftedGrid::new(instance, config.resolution)?;
    let fine = ShiftedGrid::build(instance, config.resolution / 10.0)?;
    let c = sup_shifted_process(&coarse, &process, false)?.grid_value.as_f64();
    let f = sup_shifted_process(&fine, &process, false)?.grid_value.as_f64();
    let difference = (c - f).abs();
    Ok(RefinementCheck {
        coarse_resolution: config.resolution,
        fine_resolution: config.resolution / 10.0,
        coarse_grid_value: c,
        fine_grid_value: f,
        difference,
        tolerance,
        passed: difference <= tolerance,
    })
}

/// Terms of `P g ≤ 2(P − P_n) g − (3σ_y/4)‖ŷ − y*(x̂)‖² − (3σ_x/4)‖x̂ − x*(ŷ)‖²`
/// with `g(ξ) = F(x̂, y*(x̂), ξ) − F(x*(ŷ), ŷ, ξ)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Lemma41Terms {
    pub population_mean: f64,
    pub empirical_mean: f64,
    pub dist_x: f64,
    pub dist_y: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
}

impl Lemma41Terms {
    pub fn lhs(&self) -> f64 {
        self.population_mean
    }

    pub fn rhs_with(&self, sigma_x: f64, sigma_y: f64) -> f64 {
        2.0 * (self.population_mean - self.empirical_mean)
            - 0.75 * sigma_y * self.dist_y * self.dist_y
            - 0.75 * sigma_x * self.dist_x * self.dist_x
    }

    pub fn rhs(&self) -> f64 {
        self.rhs_with(self.sigma_x, self.sigma_y)
    }

    pub fn slack(&self) -> f64 {
        self.rhs() - self.lhs()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Lemma41Report {
    pub n: usize,
    pub seed: u64,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub allowance: f64,
    pub empirical_gap: f64,
    pub passed: bool,
    pub terms: Lemma41Terms,
}

/// Evaluates the symmetrization inequality exactly on the finite support.
pub fn check_lemma41_chain<T: Scalar>(
    instance: &ProblemInstance<T>,
    n: usize,
    seed: u64,
    solver: &SolverConfig,
    allowance: f64,
) -> Result<Lemma41Report> {
    let sample = instance.sample(n, seed)?;
    let empirical = instance.empirical(&sample)?;
    let report = solve_saddle(&empirical, solver)?;
    let (xh, yh) = (&report.solution.x, &report.solution.y);
    let pop = instance.population();
    let oracle = SolverConfig::oracle();
    let ys = best_response_y(&pop, xh, &oracle)?.point;
    let xs = best_response_x(&pop, yh, &oracle)?.point;
    let g: Vec<f64> = instance
        .atom_losses(xh, &ys)
        .into_iter()
        .zip(instance.atom_losses(&xs, yh))
        .map(|(a, b)| (a - b).as_f64())
        .collect();
    let p: Vec<f64> = instance.probabilities().iter().map(|v| v.as_f64()).collect();
    let w: Vec<f64> = sample.weights::<f64>(instance.support_len());
    let mean = |weights: &[f64]| weights.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
    let c = instance.constants();
    let terms = Lemma41Terms {
        population_mean: mean(&p),
        empirical_mean: mean(&w),
        dist_x: instance.x_geometry().distance(xh, &xs)?.as_f64(),
        dist_y: instance.y_geometry().distance(yh, &ys)?.as_f64(),
        sigma_x: c.sigma_x.as_f64(),
        sigma_y: c.sigma_y.as_f64(),
    };
    let slack = terms.slack();
    Ok(Lemma41Report {
        n,
        seed,
        lhs: terms.lhs(),
        rhs: terms.rhs(),
        slack,
        allowance,
        empirical_gap: report.final_gap.as_f64(),
        passed: slack >= -allowance && report.converged,
        terms,
    })
}

/// One probe of the two localization inequalities; slacks are `rhs − lhs`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalizationProbe {
    /// `‖x*(y) − x*‖ ≤ (L_xy/σ_x) ‖y − y*‖`.
    pub x_response_lhs: f64,
    pub x_response_slack: f64,
    /// `‖y*(x) − y*‖ ≤ (L_xy/σ_y) ‖x − x*‖`.
    pub y_response_lhs: f64,
    pub y_response_slack: f64,
    /// `(C²/2)(‖x − x*‖ + ‖y − y*‖)² ≤ ‖x − x*(y)‖² + ‖y − y*(x)‖²`.
    pub regularizer_lhs: f64,
    pub regularizer_slack: f64,
}

impl LocalizationProbe {
    pub fn worst_slack(&self) -> f64 {
        self.x_response_slack.min(self.y_response_slack).min(self.regularizer_slack)
    }
}

pub fn localization_probe<T: Scalar>(
    instance: &ProblemInstance<T>,
    saddle: &SaddlePair<T>,
    pair: &SaddlePair<T>,
    oracle: &SolverConfig,
) -> Result<LocalizationProbe> {
    let c = instance.constants();
    let (sx, sy, lxy) = (c.sigma_x.as_f64(), c.sigma_y.as_f64(), c.l_xy.as_f64());
    let loc = 1.0 - lxy / sx.min(sy);
    let (gx, gy) = (instance.x_geometry(), instance.y_geometry());
    let pop = instance.population();
    let xs_y = best_response_x(&pop, &pair.y, oracle)?.point;
    let ys_x = best_response_y(&pop, &pair.x, oracle)?.point;
    let dist = |g: &GeometrySpec<T>, a: &[T], b: &[T]| g.distance(a, b).map(|v| v.as_f64());
    let dx = dist(gx, &pair.x, &saddle.x)?;
    let dy = dist(gy, &pair.y, &saddle.y)?;
    let x_response_lhs = dist(gx, &xs_y, &saddle.x)?;
    let y_response_lhs = dist(gy, &ys_x, &saddle.y)?;
    let regularizer_lhs = 0.5 * loc * loc * (dx + dy).powi(2);
    let regularizer_rhs = dist(gx, &pair.x, &xs_y)?.powi(2) + dist(gy, &pair.y, &ys_x)?.powi(2);
    Ok(LocalizationProbe {
        x_response_lhs,
        x_response_slack: lxy / sx * dy - x_response_lhs,
        y_response_lhs,
        y_response_slack: lxy / sy * dx - y_response_lhs,
        regularizer_lhs,
        regularizer_slack: regularizer_rhs - regularizer_lhs,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalizationReport {
    pub n_probe: usize,
    pub seed: u64,
    pub c: f64,
    pub worst_x_response_slack: f64,
    pub worst_y_response_slack: f64,
    pub worst_regularizer_slack: f64,
    pub worst_slack: f64,
    pub allowance: f64,
    pub passed: bool,
}

/// Both localization inequalities on `n_probe` random feasible pairs.
pub fn check_localization<T: Scalar>(
    instance: &ProblemInstance<T>,
    n_probe: usize,
    seed: u64,
    allowance: f64,
) -> Result<LocalizationReport> {
    let c = instance.constants();
    if !c.assumption4_holds {
        return Err(Error::Assumption("localization needs L_xy below min(σ_x, σ_y)".into()));
    }
    let saddle = population_saddle(instance)?;
    let oracle = SolverConfig::oracle();
    let mut stream = rng::stream(seed);
    let mut report = LocalizationReport {
        n_probe,
        seed,
        c: 1.0 - c.l_xy.as_f64() / c.min_sigma().as_f64(),
        worst_x_response_slack: f64::INFINITY,
        worst_y_response_slack: f64::INFINITY,
        worst_regularizer_slack: f64::INFINITY,
        worst_slack: f64::INFINITY,
        allowance,
        passed: true,
    };
    for _ in 0..n_probe {
        let (x, y) = instance.sample_pair(&mut stream);
        let probe = localization_probe(instance, &saddle, &SaddlePair::new(x, y), &oracle)?;
        report.worst_x_response_slack = report.worst_x_response_slack.min(probe.x_response_slack);
        report.worst_y_response_slack = report.worst_y_response_slack.min(probe.y_response_slack);
        report.worst_regularizer_slack = report.worst_regularizer_slack.min(probe.regularizer_slack);
        report.worst_slack = report.worst_slack.min(probe.worst_slack());
    }
    report.passed = report.worst_slack >= -allowance;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constants(s: f64, l: f64, lxy: f64) -> TheoreticalConstants<f64> {
        TheoreticalConstants::new(s, s, l, l, lxy)
    }

    #[test]
    fn lambda_reference_value() {
        let k = lambda_lemma42(&constants(2.0, 5.0, 1.0), 1024).unwrap();
        assert!((k.lambda - 9.249e-3).abs() < 1e-6, "{}", k.lambda);
        assert_eq!(k.c, 0.5);
        let k2 = lambda_lemma42(&constants(2.0, 5.0, 1.0), 2048).unwrap();
        assert_eq!(k2.lambda, 2.0 * k.lambda);
    }

    #[test]
    fn lambda_vanishes_at_boundary_and_errors_beyond() {
        assert_eq!(lambda_lemma42(&constants(2.0, 5.0, 2.0), 100).unwrap().lambda, 0.0);
        assert!(lambda_lemma42(&constants(2.0, 5.0, 2.5), 100).is_err());
    }

    #[test]
    fn lambda_symmetric_under_relabeling() {
        let a = TheoreticalConstants::new(2.0, 3.0, 5.0, 7.0, 1.0);
        let b = TheoreticalConstants::new(3.0, 2.0, 7.0, 5.0, 1.0);
        assert_eq!(lambda_lemma42(&a, 64).unwrap(), lambda_lemma42(&b, 64).unwrap());
    }

    #[test]
    fn paper_bound_for_one_dimension() {
        let expected = 12f64.ln() + 2048.0 * (1.0 + E).powi(2) / E;
        assert!((log_paper_bound(1) - expected).abs() < 1e-9);
        assert!((log_paper_bound(1) - 1.0419e4).abs() < 1.0);
    }

    #[test]
    fn log_sum_exp_is_stable() {
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn lattice_counts_and_spacing() {
        let g = GeometrySpec::<f64>::truncated_simplex(3, 3.0).unwrap();
        let pts = simplex_lattice(&g, 0.05).unwrap();
        assert!(pts.iter().all(|p| g.contains(p)));
        let m = (2.0 * (1.0 - 3.0 * (-3f64).exp()) / 0.05).ceil() as usize;
        assert_eq!(pts.len(), (m + 1) * (m + 2) / 2);
    }
}
