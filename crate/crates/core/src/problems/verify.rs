//! Numerical probes of the curvature and Lipschitz assumptions.

use rand::Rng;
use serde::Serialize;

use super::{ProblemInstance, TheoreticalConstants};
use crate::error::{Error, Result};
use crate::geometry::BlockVector;
use crate::rng;
use crate::scalar::Scalar;

const RELATIVE_TOL: f64 = 1e-6;
const MIN_SEPARATION: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstantCheck {
    pub name: String,
    pub estimate: f64,
    pub theory: f64,
    /// Positive when the estimate is on the safe side of the theoretical value.
    pub slack: f64,
    pub consistent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub n_probe: usize,
    pub seed: u64,
    pub constants: TheoreticalConstants<f64>,
    pub checks: Vec<ConstantCheck>,
    pub passed: bool,
}

impl AssumptionReport {
    pub fn failures(&self) -> impl Iterator<Item = &ConstantCheck> {
        self.checks.iter().filter(|c| !c.consistent)
    }

    pub fn check(&self, name: &str) -> Option<&ConstantCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Default)]
struct Extremes {
    sigma_x: f64,
    sigma_y: f64,
    l_x: f64,
    l_y: f64,
    l_xy: f64,
}

/// Probes `n_probe` random point pairs and atoms.
///
/// Curvature is estimated from midpoint gaps: σ-strong convexity
/// at `α = 1/2` reads `(F(x) + F(x'))/2 − F((x + x')/2) ≥ (σ/8)‖x − x'‖²`, so
/// `8 · gap / ‖x − x'‖²` must stay above σ.
pub fn verify_assumptions<T: Scalar>(
    instance: &ProblemInstance<T>,
    n_probe: usize,
    seed: u64,
) -> Result<AssumptionReport> {
    if n_probe < 2 {
        return Err(Error::Config(format!("n_probe must be at least 2, got {n_probe}")));
    }
    let (gx, gy) = (instance.x_geometry(), instance.y_geometry());
    for (name, g) in [("x", gx), ("y", gy)] {
        if g.diameter() <= T::zero() {
            return Err(Error::DegenerateDomain(format!("the {name} block has zero diameter")));
        }
    }
    let atoms: Vec<usize> = (0..instance.support_len())
        .filter(|&k| instance.probabilities()[k] > T::zero())
        .collect();

    let mut ext = Extremes {
        sigma_x: f64::INFINITY,
        sigma_y: f64::INFINITY,
        ..Default::default()
    };
    let mut stream = rng::stream(seed);
    let sep = T::lit(MIN_SEPARATION);
    let eight = T::lit(8.0);
    let half = T::lit(0.5);
    for _ in 0..n_probe {
        let atom = atoms[stream.random_range(0..atoms.len())];
        let (x, y) = instance.sample_pair(&mut stream);
        let (x2, y2) = instance.sample_pair(&mut stream);
        let dx = gx.distance(&x, &x2)?;
        let dy = gy.distance(&y, &y2)?;
        let f = |a: &BlockVector<T>, b: &BlockVector<T>| instance.loss(a, b, atom);
        let f_xy = f(&x, &y)?;

        if dx > sep {
            let f_x2y = f(&x2, &y)?;
            let f_mid = f(&x.midpoint(&x2), &y)?;
            let gap = half * (f_xy + f_x2y) - f_mid;
            ext.sigma_x = ext.sigma_x.min((eight * gap / (dx * dx)).as_f64());
            ext.l_x = ext.l_x.max(((f_xy - f_x2y).abs() / dx).as_f64());
            let dgy = instance.grad_y(&x, &y, atom)?.sub(&instance.grad_y(&x2, &y, atom)?);
            ext.l_xy = ext.l_xy.max((gy.dual_norm(&dgy)? / dx).as_f64());
        }
        if dy > sep {
            let f_xy2 = f(&x, &y2)?;
            let f_mid = f(&x, &y.midpoint(&y2))?;
            let gap = f_mid - half * (f_xy + f_xy2);
            ext.sigma_y = ext.sigma_y.min((eight * gap / (dy * dy)).as_f64());
            ext.l_y = ext.l_y.max(((f_xy - f_xy2).abs() / dy).as_f64());
            let dgx = instance.grad_x(&x, &y, atom)?.sub(&instance.grad_x(&x, &y2, atom)?);
            ext.l_xy = ext.l_xy.max((gx.dual_norm(&dgx)? / dy).as_f64());
        }
    }

    let c = instance.constants();
    let constants = TheoreticalConstants {
        sigma_x: c.sigma_x.as_f64(),
        sigma_y: c.sigma_y.as_f64(),
        l_x: c.l_x.as_f64(),
        l_y: c.l_y.as_f64(),
        l_xy: c.l_xy.as_f64(),
        assumption4_holds: c.assumption4_holds,
    };
    let tol = |theory: f64| RELATIVE_TOL * theory.abs().max(1.0);
    let lower = |name: &str, estimate: f64, theory: f64| {
        let slack = estimate - theory + tol(theory);
        ConstantCheck { name: name.into(), estimate, theory, slack, consistent: slack >= 0.0 }
    };
    let upper = |name: &str, estimate: f64, theory: f64| {
        let slack = theory + tol(theory) - estimate;
        ConstantCheck { name: name.into(), estimate, theory, slack, consistent: slack >= 0.0 }
    };
    let mut checks = vec![
        lower("sigma_x", ext.sigma_x, constants.sigma_x),
        lower("sigma_y", ext.sigma_y, constants.sigma_y),
        upper("L_x", ext.l_x, constants.l_x),
        upper("L_y", ext.l_y, constants.l_y),
        upper("L_xy", ext.l_xy, constants.l_xy),
    ];
    let min_sigma = constants.sigma_x.min(constants.sigma_y);
    checks.push(ConstantCheck {
        name: "assumption4".into(),
        estimate: ext.l_xy,
        theory: min_sigma,
        slack: min_sigma - constants.l_xy,
        consistent: constants.assumption4_holds,
    });
    let passed = checks.iter().all(|c| c.consistent);
    Ok(AssumptionReport { n_probe, seed, constants, checks, passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{MatrixGame, MatrixGameSpec, RandomGame};

    fn game(d: usize, lambda: f64) -> ProblemInstance<f64> {
        let recipe = RandomGame { atoms: 3, base_scale: 0.5, perturbation: 0.5, seed: 3 };
        let spec = MatrixGameSpec::random(d, recipe, lambda, lambda, 2.0).unwrap();
        ProblemInstance::MatrixGame(MatrixGame::new(spec).unwrap())
    }

    #[test]
    fn regularized_game_is_consistent() {
        let report = verify_assumptions(&game(3, 2.0), 1000, 5).unwrap();
        assert!(report.passed, "{report:?}");
        assert!(report.check("sigma_x").unwrap().estimate >= 2.0 - 1e-6);
    }

    #[test]
    fn unregularized_game_has_no_curvature() {
        let report = verify_assumptions(&game(3, 0.0), 500, 5).unwrap();
        assert!(report.check("sigma_x").unwrap().estimate <= 1e-8);
        assert!(!report.check("assumption4").unwrap().consistent);
        assert!(!report.passed);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let g = game(2, 2.0);
        assert_eq!(verify_assumptions(&g, 200, 9).unwrap(), verify_assumptions(&g, 200, 9).unwrap());
    }

    #[test]
    fn degenerate_domain_and_probe_floor() {
        assert!(matches!(verify_assumptions(&game(1, 2.0), 10, 0), Err(Error::DegenerateDomain(_))));
        assert!(verify_assumptions(&game(2, 2.0), 1, 0).is_err());
    }
}
