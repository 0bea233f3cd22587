//! Mirror-prox saddle solver, block best responses and duality-gap certificates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BlockVector;
use crate::problems::SaddleObjective;
use crate::scalar::Scalar;

/// Numerically negative gaps above this are clamped to zero.
pub const GAP_CLAMP: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSize {
    Fixed(f64),
    #[serde(with = "auto_tag")]
    Auto,
}

mod auto_tag {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("auto")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "auto" {
            Ok(())
        } else {
            Err(de::Error::custom(format!("step_size must be a number or \"auto\", got {s:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    Last,
    Ergodic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub step_size: StepSize,
    pub max_iters: usize,
    pub gap_tolerance: f64,
    /// Best responses stop when the prox-gradient mapping is below `inner_tolerance · σ`.
    pub inner_tolerance: f64,
    pub inner_max_iters: usize,
    /// Duality gap is evaluated every `gap_every` iterations.
    pub gap_every: usize,
    pub averaging: Averaging,
    /// Keep every iterate in the report.
    pub trace_iterates: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            step_size: StepSize::Auto,
            max_iters: 10_000,
            gap_tolerance: 1e-10,
            inner_tolerance: 1e-7,
            inner_max_iters: 10_000,
            gap_every: 5,
            averaging: Averaging::Last,
            trace_iterates: false,
        }
    }
}

impl SolverConfig {
    /// Settings for population ("ground truth") best responses.
    pub fn oracle() -> Self {
        Self { inner_tolerance: 1e-9, inner_max_iters: 100_000, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.inner_max_iters == 0 || self.gap_every == 0 {
            return Err(Error::Config("max_iters, inner_max_iters and gap_every must be ≥ 1".into()));
        }
        if !(self.gap_tolerance > 0.0) || !(self.inner_tolerance > 0.0) {
            return Err(Error::Config("gap_tolerance and inner_tolerance must be positive".into()));
        }
        if let StepSize::Fixed(s) = self.step_size {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::Config(format!("step_size must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SaddlePair<T> {
    pub x: BlockVector<T>,
    pub y: BlockVector<T>,
}

impl<T: Scalar> SaddlePair<T> {
    pub fn new(x: BlockVector<T>, y: BlockVector<T>) -> Self {
        Self { x, y }
    }

    pub fn center<O: SaddleObjective<T> + ?Sized>(obj: &O) -> Self {
        Self { x: obj.x_geometry().center(), y: obj.y_geometry().center() }
    }

    pub fn is_feasible<O: SaddleObjective<T> + ?Sized>(&self, obj: &O) -> bool {
        obj.x_geometry().contains(&self.x) && obj.y_geometry().contains(&self.y)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BestResponse<T> {
    pub point: BlockVector<T>,
    /// Objective value at `point`.
    pub value: T,
    /// Norm of the final prox-gradient mapping.
    pub mapping_norm: T,
    /// `mapping_norm² / (2σ)`: certified suboptimality of `point`.
    pub optimality_bound: T,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapCertificate<T> {
    pub gap: T,
    /// `y*(x)` for the pair's `x`.
    pub y_response: BestResponse<T>,
    /// `x*(y)` for the pair's `y`.
    pub x_response: BestResponse<T>,
}

impl<T: Scalar> GapCertificate<T> {
    /// Combined suboptimality of the two inner solves.
    pub fn oracle_bound(&self) -> T {
        self.x_response.optimality_bound + self.y_response.optimality_bound
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport<T> {
    pub solution: SaddlePair<T>,
    pub final_gap: T,
    pub iterations: usize,
    /// `gap_trace[j]` is the gap after `j · gap_every` iterations.
    pub gap_trace: Vec<T>,
    pub gap_every: usize,
    pub converged: bool,
    pub step_size: T,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub iterates: Vec<SaddlePair<T>>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Block {
    X,
    Y,
}

fn safe_inverse<T: Scalar>(v: T) -> T {
    if v > T::zero() && v.is_finite() {
        T::one() / v
    } else {
        T::one()
    }
}

/// Prox-gradient loop on one block with the other block frozen.
fn best_response<T: Scalar, O: SaddleObjective<T> + ?Sized>(
    obj: &O,
    block: Block,
    other: &[T],
    start: BlockVector<T>,
    config: &SolverConfig,
) -> Result<BestResponse<T>> {
    let (geom, sigma, smooth) = match block {
        Block::X => (obj.x_geometry(), obj.curvature().0, obj.block_smoothness().0),
        Block::Y => (obj.y_geometry(), obj.curvature().1, obj.block_smoothness().1),
    };
    let eta = safe_inverse(smooth);
    let threshold = T::lit(config.inner_tolerance) * sigma;
    let mut current = start;
    let mut best: Option<(T, BlockVector<T>)> = None;
    for iter in 1..=config.inner_max_iters {
        // Descent direction for the minimizing block, ascent for the maximizing one.
        let step = match block {
            Block::X => obj.grad_x(&current, other)?,
            Block::Y => obj.grad_y(other, &current)?.scale(-T::one()),
        };
        if !step.is_finite() {
            return Err(Error::NonFinite("best-response gradient"));
        }
        let next = geom.prox_step(&current, &step, eta)?;
        let mapping = geom.distance(&current, &next)? / eta;
        if best.as_ref().is_none_or(|(m, _)| mapping < *m) {
            best = Some((mapping, next.clone()));
        }
        if mapping <= threshold {
            return finish(obj, block, other, next, mapping, sigma, iter, true);
        }
        current = next;
    }
    let (mapping, point) = best.expect("at least one inner iteration");
    finish(obj, block, other, point, mapping, sigma, config.inner_max_iters, false)
}

#[allow(clippy::too_many_arguments)]
fn finish<T: Scalar, O: SaddleObjective<T> + ?Sized>(
    obj: &O,
    block: Block,
    other: &[T],
    point: BlockVector<T>,
    mapping: T,
    sigma: T,
    iterations: usize,
    converged: bool,
) -> Result<BestResponse<T>> {
    let value = match block {
        Block::X => obj.value(&point, other)?,
        Block::Y => obj.value(other, &point)?,
    };
    let optimality_bound = if sigma > T::zero() {
        mapping * mapping / (T::lit(2.0) * sigma)
    } else {
        T::infinity()
    };
    Ok(BestResponse { point, value, mapping_norm: mapping, optimality_bound, iterations, converged })
}

/// `x*(y) = argmin_x F(x, y)`.
pub fn best_response_x<T: Scalar, O: SaddleObjective<T> + ?Sized>(
    obj: &O,
    y: &[T],
    config: &SolverConfig,
) -> Result<BestResponse<T>> {
    best_response(obj, Block::X, y, obj.x_geometry().center(), config)
}

/// `y*(x) = argmax_y F(x, y)`.
pub fn best_response_y<T: Scalar, O: SaddleObjective<T> + ?Sized>(
    obj: &O,
    x: &[T],
    config: &SolverConfig,
) -> Result<BestResponse<T>> {
    best_response(obj, Block::Y, x, obj.y_geometry().center(), config)
}

/// Warm-started variants.
pub fn best_response_x_from<T: Scalar, O: SaddleObjective<T> + ?Sized>(
    obj: &O,
    y: &[T],
    start: BlockVector<T>,
    config: &SolverConfig,
) -> Result<BestResponse<T>> {
    best_response(obj, Block::X, y, start, config)
}

pub fn best_response_y_from<T: Scalar, O: SaddleObjective<T> + ?Sized>(
    obj: &O,
    x: &[T],
    start: BlockVector<T>,
    config: &SolverConfig,
) -> Result<BestResponse<T>> {
    best_response(obj, Block::Y, x, start, config)
}

fn gap_from<T: Scalar, O: SaddleObjective<T> + ?Sized>(
    obj: &O,
    pair: &SaddlePair<T>,
    x_start: BlockVector<T>,
    y_start: BlockVector<T>,
    config: &SolverConfig,
) -> Result<GapCertificate<T>> {
    let y_response = best_response_y_from(obj, &pair.x, y_start, config)?;
    let x_response = best_response_x_from(obj, &pair.y, x_start, config)?;
    let raw = y_response.value - x_response.value;
    let gap = if raw >= T::zero() {
        raw
    } else if raw >= -T::lit(GAP_CLAMP) {
        T::zero()
    } else {
        return Err(Error::NegativeGap(raw.as_f64()));
    };
    Ok(GapCertificate { gap, y_response, x_response })
}

/// `F(x, y*(x)) − F(x*(y), y)` with both responses and their certificates.
pub fn duality_gap_certificate<T: Scalar, O: SaddleObjective<T> + ?Sized>(
    obj: &O,
    pair: &SaddlePair<T>,
    config: &SolverConfig,
) -> Result<GapCertificate<T>> {
    obj.x_geometry().ensure_feasible(&pair.x, "x")?;
    obj.y_geometry().ensure_feasible(&pair.y, "y")?;
    gap_from(obj, pair, obj.x_geometry().center(), obj.y_geometry().center(), config)
}

pub fn duality_gap<T: Scalar, O: SaddleObjective<T> + ?Sized>(
    obj: &O,
    pair: &SaddlePair<T>,
    config: &SolverConfig,
) -> Result<T> {
    duality_gap_certificate(obj, pair, config).map(|c| c.gap)
}

/// Step size used by `solve_saddle`.
pub fn step_size_for<T: Scalar, O: SaddleObjective<T> + ?Sized>(obj: &O, config: &SolverConfig) -> T {
    match config.step_size {
        StepSize::Fixed(s) => T::lit(s),
        StepSize::Auto => {
            let (sx, sy) = obj.block_smoothness();
            let total = sx.max(sy) + obj.coupling();
            safe_inverse(T::lit(2.0) * total)
        }
    }
}

/// Mirror-prox (extragradient with block prox steps) from the block centers.
pub fn solve_saddle<T: Scalar, O: SaddleObjective<T> + ?Sized>(
    obj: &O,
    config: &SolverConfig,
) -> Result<SolveReport<T>> {
    solve_saddle_from(obj, SaddlePair::center(obj), config)
}

pub fn solve_saddle_from<T: Scalar, O: SaddleObjective<T> + ?Sized>(
    obj: &O,
    start: SaddlePair<T>,
    config: &SolverConfig,
) -> Result<SolveReport<T>> {
    config.validate()?;
    let (gx, gy) = (obj.x_geometry(), obj.y_geometry());
    gx.ensure_feasible(&start.x, "initial x")?;
    gy.ensure_feasible(&start.y, "initial y")?;
    let eta = step_size_for(obj, config);
    let tol = T::lit(config.gap_tolerance);
    let ergodic = config.averaging == Averaging::Ergodic;

    let mut z = start;
    let mut avg = z.clone();
    let mut weight_sum = T::zero();
    let mut iterates = Vec::new();
    let mut gap_trace = Vec::new();
    // Warm starts for the gap best responses.
    let mut x_warm = gx.center();
    let mut y_warm = gy.center();

    let evaluate = |point: &SaddlePair<T>, x_warm: &mut BlockVector<T>, y_warm: &mut BlockVector<T>| {
        let cert = gap_from(obj, point, x_warm.clone(), y_warm.clone(), config)?;
        *x_warm = cert.x_response.point.clone();
        *y_warm = cert.y_response.point.clone();
        Ok::<T, Error>(cert.gap)
    };

    let mut gap = evaluate(&z, &mut x_warm, &mut y_warm)?;
    gap_trace.push(gap);
    if config.trace_iterates {
        iterates.push(z.clone());
    }
    let mut iterations = 0;
    while gap > tol && iterations < config.max_iters {
        let gx0 = obj.grad_x(&z.x, &z.y)?;
        let gy0 = obj.grad_y(&z.x, &z.y)?.scale(-T::one());
        let w = SaddlePair::new(gx.prox_step(&z.x, &gx0, eta)?, gy.prox_step(&z.y, &gy0, eta)?);
        let gx1 = obj.grad_x(&w.x, &w.y)?;
        let gy1 = obj.grad_y(&w.x, &w.y)?.scale(-T::one());
        z = SaddlePair::new(gx.prox_step(&z.x, &gx1, eta)?, gy.prox_step(&z.y, &gy1, eta)?);
        iterations += 1;

        if ergodic {
            weight_sum = weight_sum + T::one();
            let t = T::one() / weight_sum;
            avg = SaddlePair::new(
                avg.x.scale(T::one() - t).axpy(t, &w.x),
                avg.y.scale(T::one() - t).axpy(t, &w.y),
            );
        }
        if config.trace_iterates {
            iterates.push(if ergodic { avg.clone() } else { z.clone() });
        }
        if iterations % config.gap_every == 0 || iterations == config.max_iters {
            let point = if ergodic { &avg } else { &z };
            gap = evaluate(point, &mut x_warm, &mut y_warm)?;
            if iterations % config.gap_every == 0 {
                gap_trace.push(gap);
            }
        }
    }
    let solution = if ergodic && iterations > 0 { avg } else { z };
    Ok(SolveReport {
        solution,
        final_gap: gap,
        iterations,
        gap_trace,
        gap_every: config.gap_every,
        converged: gap <= tol,
        step_size: eta,
        iterates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{MatrixGame, MatrixGameSpec, ProblemInstance, RandomGame};

    fn single(d: usize, a: Vec<f64>, lambda: f64, l: f64) -> ProblemInstance<f64> {
        ProblemInstance::MatrixGame(MatrixGame::new(MatrixGameSpec::single(d, a, lambda, lambda, l)).unwrap())
    }

    fn random(d: usize, lambda: f64, seed: u64) -> ProblemInstance<f64> {
        let recipe = RandomGame { atoms: 3, base_scale: 0.5, perturbation: 0.5, seed };
        ProblemInstance::MatrixGame(MatrixGame::new(MatrixGameSpec::random(d, recipe, lambda, lambda, 3.0).unwrap()).unwrap())
    }

    #[test]
    fn zero_matrix_gives_uniform() {
        let inst = single(4, vec![0.0; 16], 2.0, 3.0);
        let report = solve_saddle(&inst.population(), &SolverConfig::default()).unwrap();
        assert!(report.converged);
        for v in report.solution.x.iter().chain(report.solution.y.iter()) {
            assert!((v - 0.25).abs() < 1e-9);
        }
    }

    #[test]
    fn converges_to_tolerance_and_stays_feasible() {
        let inst = random(3, 2.0, 11);
        let obj = inst.population();
        let cfg = SolverConfig { gap_tolerance: 1e-8, gap_every: 1, trace_iterates: true, ..Default::default() };
        let report = solve_saddle(&obj, &cfg).unwrap();
        assert!(report.converged && report.final_gap <= 1e-8);
        assert!(report.iterates.iter().all(|p| p.is_feasible(&obj)));
        // Gap shrinks along the trace.
        let t = &report.gap_trace;
        for k in 1..t.len() / 2 {
            assert!(t[2 * k] <= t[k] + 1e-10, "k={k}: {} > {}", t[2 * k], t[k]);
        }
    }

    #[test]
    fn best_response_matches_grid_search() {
        let inst = single(2, vec![1.0, -1.0, -1.0, 1.0], 2.0, 5.0);
        let obj = inst.population();
        let y = [0.7, 0.3];
        let br = best_response_x(&obj, &y, &SolverConfig::oracle()).unwrap();
        let floor = (-5.0f64).exp();
        let (mut best, mut arg) = (f64::INFINITY, 0.0);
        let steps = 100_000;
        for i in 0..=steps {
            let t = floor + (1.0 - 2.0 * floor) * i as f64 / steps as f64;
            let v = obj.value(&[t, 1.0 - t], &y).unwrap();
            if v < best {
                best = v;
                arg = t;
            }
        }
        let l1 = (br.point[0] - arg).abs() + (br.point[1] - (1.0 - arg)).abs();
        assert!(l1 <= 3e-4, "{:?} vs {arg}", br.point);
        assert!((br.point[0] - 0.401).abs() < 1e-3);
        assert!(br.converged && br.optimality_bound <= 1e-15);
    }

    #[test]
    fn best_response_at_saddle_is_fixed_point() {
        let inst = random(4, 2.0, 2);
        let obj = inst.population();
        let report = solve_saddle(&obj, &SolverConfig { gap_tolerance: 1e-13, ..Default::default() }).unwrap();
        let s = &report.solution;
        let by = best_response_y(&obj, &s.x, &SolverConfig::oracle()).unwrap();
        let bx = best_response_x(&obj, &s.y, &SolverConfig::oracle()).unwrap();
        assert!(s.y.sub(&by.point).l2() < 1e-6);
        assert!(s.x.sub(&bx.point).l2() < 1e-6);
    }

    #[test]
    fn gap_dominates_one_sided_suboptimality() {
        let inst = random(3, 2.0, 4);
        let obj = inst.population();
        let pair = SaddlePair::new(BlockVector(vec![0.6, 0.3, 0.1]), BlockVector(vec![0.2, 0.2, 0.6]));
        let cfg = SolverConfig::oracle();
        let gap = duality_gap(&obj, &pair, &cfg).unwrap();
        let bx = best_response_x(&obj, &pair.y, &cfg).unwrap();
        let one_sided = obj.value(&pair.x, &pair.y).unwrap() - bx.value;
        assert!(gap >= one_sided.max(0.0) - 1e-12);
    }

    #[test]
    fn ergodic_averaging_converges() {
        let inst = random(3, 2.0, 6);
        let cfg = SolverConfig { averaging: Averaging::Ergodic, gap_tolerance: 1e-4, max_iters: 50_000, ..Default::default() };
        let report = solve_saddle(&inst.population(), &cfg).unwrap();
        assert!(report.converged, "gap {}", report.final_gap);
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let inst = random(3, 2.0, 6);
        let cfg = SolverConfig { max_iters: 2, gap_tolerance: 1e-14, ..Default::default() };
        let report = solve_saddle(&inst.population(), &cfg).unwrap();
        assert!(!report.converged);
        assert_eq!(report.iterations, 2);
    }

    #[test]
    fn step_size_parses_from_json() {
        let cfg: SolverConfig = serde_json::from_str(r#"{"step_size": "auto"}"#).unwrap();
        assert_eq!(cfg.step_size, StepSize::Auto);
        let cfg: SolverConfig = serde_json::from_str(r#"{"step_size": 0.1}"#).unwrap();
        assert_eq!(cfg.step_size, StepSize::Fixed(0.1));
        assert!(serde_json::from_str::<SolverConfig>(r#"{"step_size": "fast"}"#).is_err());
        assert!(serde_json::from_str::<SolverConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn f32_solve() {
        let spec = MatrixGameSpec::<f32>::single(2, vec![0.5, -0.5, -0.5, 0.5], 2.0, 2.0, 3.0);
        let inst = ProblemInstance::MatrixGame(MatrixGame::new(spec).unwrap());
        let cfg = SolverConfig { gap_tolerance: 1e-5, inner_tolerance: 1e-4, ..Default::default() };
        let report = solve_saddle(&inst.population(), &cfg).unwrap();
        assert!(report.converged);
    }
}
