//! Linear AUC maximization as a saddle-point problem.
//!
//! The min block is `(w, a, b)` with `w ∈ B_r` and `a, b ∈ [-c, c]`; the max
//! block is `α ∈ [-c, c]`. With `s = wᵀx` and `p = P(y = 1)`:
//!
//! ```text
//! F = (1-p)(s-a)² 1[y=1] + p(s-b)² 1[y=-1]
//!     + 2(1+α) s (p 1[y=-1] - (1-p) 1[y=1]) - p(1-p) α² + β‖w‖²
//! ```

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{validate_probabilities, TheoreticalConstants};
use crate::error::{Error, Result};
use crate::geometry::{BlockVector, GeometrySpec};
use crate::rng;
use crate::scalar::{dot, l2, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AucAtom<T> {
    pub features: Vec<T>,
    /// `+1` or `-1`.
    pub label: i8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AucSpec<T> {
    pub dim: usize,
    pub atoms: Vec<AucAtom<T>>,
    pub probabilities: Vec<T>,
    pub beta: T,
    pub radius: T,
    /// Half-width `c` of the boxes for `a`, `b` and `α`.
    pub box_bound: T,
    /// If given, must equal the label-1 mass of the support.
    #[serde(default)]
    pub positive_probability: Option<T>,
}

/// Two Gaussian classes, clipped into the feature ball, equiprobable atoms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AucSynthetic {
    pub dim: usize,
    pub atoms: usize,
    #[serde(default = "half")]
    pub positive_fraction: f64,
    #[serde(default = "half")]
    pub separation: f64,
    #[serde(default = "default_noise")]
    pub noise: f64,
    pub seed: u64,
}

fn half() -> f64 {
    0.5
}

fn default_noise() -> f64 {
    0.3
}

/// Box half-width containing every best response of `a`, `b` (|·| ≤ r²) and
/// `α` (|·| ≤ 2r²) when features lie in `B_r`.
pub fn default_box_bound(radius: f64) -> f64 {
    radius.max(2.0 * radius * radius)
}

impl<T: Scalar> AucSpec<T> {
    pub fn synthetic(recipe: AucSynthetic, beta: T, radius: T, box_bound: Option<T>) -> Result<Self> {
        if recipe.atoms < 2 || recipe.dim == 0 {
            return Err(Error::InvalidInstance("synthetic AUC needs dim ≥ 1 and ≥ 2 atoms".into()));
        }
        let positives = ((recipe.atoms as f64) * recipe.positive_fraction).round() as usize;
        if positives == 0 || positives == recipe.atoms {
            return Err(Error::InvalidInstance("both labels must appear in the support".into()));
        }
        let mut stream = rng::stream(recipe.seed);
        let r = radius.as_f64();
        let shift = recipe.separation / (recipe.dim as f64).sqrt();
        let atoms = (0..recipe.atoms)
            .map(|k| {
                let label: i8 = if k < positives { 1 } else { -1 };
                let mut f: Vec<f64> = (0..recipe.dim)
                    .map(|_| {
                        let z: f64 = stream.sample(StandardNormal);
                        f64::from(label) * shift + recipe.noise * z
                    })
                    .collect();
                let n = f.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n > r {
                    f.iter_mut().for_each(|v| *v *= r / n);
                }
                AucAtom { features: f.into_iter().map(T::lit).collect(), label }
            })
            .collect();
        let prob = T::one() / T::from_usize_lossy(recipe.atoms);
        Ok(Self {
            dim: recipe.dim,
            atoms,
            probabilities: vec![prob; recipe.atoms],
            beta,
            radius,
            box_bound: box_bound.unwrap_or_else(|| T::lit(default_box_bound(r))),
            positive_probability: None,
        })
    }
}

#[derive(Clone, Debug)]
pub struct AucSaddle<T> {
    spec: AucSpec<T>,
    p: T,
    max_feature_norm: T,
    x_geometry: GeometrySpec<T>,
    y_geometry: GeometrySpec<T>,
}

impl<T: Scalar> AucSaddle<T> {
    pub fn new(spec: AucSpec<T>) -> Result<Self> {
        let d = spec.dim;
        if spec.atoms.len() != spec.probabilities.len() {
            return Err(Error::InvalidInstance("atoms and probabilities differ in length".into()));
        }
        validate_probabilities(&spec.probabilities)?;
        if !(spec.beta > T::zero()) {
            return Err(Error::InvalidInstance("beta must be positive".into()));
        }
        let tol = T::feasibility_tol();
        let mut p = T::zero();
        let mut max_norm = T::zero();
        for (k, atom) in spec.atoms.iter().enumerate() {
            if atom.features.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: atom.features.len() });
            }
            if atom.label != 1 && atom.label != -1 {
                return Err(Error::InvalidInstance(format!("atom {k} has label {}", atom.label)));
            }
            let n = l2(&atom.features);
            if n > spec.radius + tol {
                return Err(Error::InvalidInstance(format!(
                    "atom {k} has ‖x‖ = {n} outside the radius-{} ball",
                    spec.radius
                )));
            }
            max_norm = max_norm.max(n);
            if atom.label == 1 {
                p = p + spec.probabilities[k];
            }
        }
        if !(p > T::zero() && p < T::one()) {
            return Err(Error::InvalidInstance(format!("positive-class mass {p} not in (0, 1)")));
        }
        if let Some(claimed) = spec.positive_probability {
            if (claimed - p).abs() > tol {
                return Err(Error::InvalidInstance(format!(
                    "positive_probability {claimed} differs from support label mass {p}"
                )));
            }
        }
        let x_geometry = GeometrySpec::ball_box(d, spec.radius, 2, spec.box_bound)?;
        let y_geometry = GeometrySpec::euclidean_ball(1, spec.box_bound)?;
        Ok(Self { spec, p, max_feature_norm: max_norm, x_geometry, y_geometry })
    }

    pub fn spec(&self) -> &AucSpec<T> {
        &self.spec
    }

    pub fn positive_probability(&self) -> T {
        self.p
    }

    pub fn x_geometry(&self) -> &GeometrySpec<T> {
        &self.x_geometry
    }

    pub fn y_geometry(&self) -> &GeometrySpec<T> {
        &self.y_geometry
    }

    pub fn probabilities(&self) -> &[T] {
        &self.spec.probabilities
    }

    /// Label weight `(1-p)` for positives and `p` for negatives.
    fn class_weight(&self, label: i8) -> T {
        if label == 1 {
            T::one() - self.p
        } else {
            self.p
        }
    }

    /// Constants for the population objective over the compact domain.
    ///
    /// With `ρ = max ‖x_k‖`, `c` the box half-width and `q_± ∈ {1-p, p}`:
    /// * `‖∇_(w,a,b) F‖ ≤ √(g_w² + g_a²)` where
    ///   `g_w = 2q(rρ + c)ρ + 2(1 + c)qρ + 2βr` and `g_a = 2q(rρ + c)`;
    /// * `|∂_α F| ≤ 2 max(p, 1-p) rρ + 2p(1-p)c`;
    /// * `∂_α ∇_w F = 2x(p1[y=-1] - (1-p)1[y=1])`, so `L_xy = 2ρ max(p, 1-p)`;
    /// * `σ_y = 2p(1-p)` exactly; `σ_x` is the smallest eigenvalue of the
    ///   population Hessian in `(w, a, b)` (the objective is quadratic).
    ///
    /// Per-sample losses are flat in `b` for positive atoms and in `a` for
    /// negative ones, so σ_x is a property of the averaged objective only.
    pub fn theoretical_constants(&self) -> TheoreticalConstants<T> {
        let two = T::lit(2.0);
        let (r, c, rho, beta, p) =
            (self.spec.radius, self.spec.box_bound, self.max_feature_norm, self.spec.beta, self.p);
        let grad_bound = |q: T| {
            let gw = two * q * (r * rho + c) * rho + two * (T::one() + c) * q * rho + two * beta * r;
            let ga = two * q * (r * rho + c);
            (gw * gw + ga * ga).sqrt()
        };
        let qmax = p.max(T::one() - p);
        let l_x = grad_bound(T::one() - p).max(grad_bound(p));
        let l_y = two * qmax * r * rho + two * p * (T::one() - p) * c;
        let l_xy = two * rho * qmax;
        let (sigma_x, _) = self.hessian_extremes(&self.spec.probabilities);
        TheoreticalConstants::new(sigma_x, two * p * (T::one() - p), l_x, l_y, l_xy)
    }

    /// Smallest and largest eigenvalue of the `(w, a, b)` Hessian of the mixture.
    fn hessian_extremes(&self, weights: &[T]) -> (T, T) {
        let d = self.spec.dim;
        let m = d + 2;
        let mut h = DMatrix::<f64>::zeros(m, m);
        for i in 0..d {
            h[(i, i)] = 2.0 * self.spec.beta.as_f64();
        }
        for (atom, &w) in self.spec.atoms.iter().zip(weights) {
            let w = w.as_f64();
            if w == 0.0 {
                continue;
            }
            let mut z: Vec<f64> = atom.features.iter().map(|v| v.as_f64()).collect();
            z.extend(if atom.label == 1 { [-1.0, 0.0] } else { [0.0, -1.0] });
            let coef = 2.0 * w * self.class_weight(atom.label).as_f64();
            for i in 0..m {
                for j in 0..m {
                    h[(i, j)] += coef * z[i] * z[j];
                }
            }
        }
        let eig = h.symmetric_eigenvalues();
        let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (T::lit(lo.max(0.0)), T::lit(hi))
    }

    pub(crate) fn objective(&self, weights: Vec<T>) -> AucObjective<'_, T> {
        let (lo, hi) = self.hessian_extremes(&weights);
        let r = self.spec.radius;
        let qmax = self.p.max(T::one() - self.p);
        AucObjective {
            auc: self,
            sigma_x: lo.max(hi * T::lit(1e-12)),
            smooth_x: hi,
            coupling: T::lit(2.0) * qmax * self.max_feature_norm.min(r),
            weights,
        }
    }

    pub(crate) fn atom_loss(&self, x: &[T], y: &[T], atom: usize) -> T {
        let d = self.spec.dim;
        let at = &self.spec.atoms[atom];
        let (w, a, b, alpha) = (&x[..d], x[d], x[d + 1], y[0]);
        let s = dot(w, &at.features);
        let p = self.p;
        let q = T::one() - p;
        let two = T::lit(2.0);
        let reg = self.spec.beta * dot(w, w) - p * q * alpha * alpha;
        if at.label == 1 {
            q * (s - a) * (s - a) - two * (T::one() + alpha) * q * s + reg
        } else {
            p * (s - b) * (s - b) + two * (T::one() + alpha) * p * s + reg
        }
    }

    pub(crate) fn atom_grad_x(&self, x: &[T], y: &[T], atom: usize) -> BlockVector<T> {
        let mut g = vec![T::zero(); self.spec.dim + 2];
        self.accumulate_grad_x(&mut g, x, y, atom, T::one());
        BlockVector(g)
    }

    fn accumulate_grad_x(&self, g: &mut [T], x: &[T], y: &[T], atom: usize, weight: T) {
        let d = self.spec.dim;
        let at = &self.spec.atoms[atom];
        let (w, a, b, alpha) = (&x[..d], x[d], x[d + 1], y[0]);
        let s = dot(w, &at.features);
        let two = T::lit(2.0);
        let p = self.p;
        let q = T::one() - p;
        // ∂F/∂s, and the a or b partial.
        let (ds, da, db) = if at.label == 1 {
            (two * q * (s - a) - two * (T::one() + alpha) * q, -two * q * (s - a), T::zero())
        } else {
            (two * p * (s - b) + two * (T::one() + alpha) * p, T::zero(), -two * p * (s - b))
        };
        for i in 0..d {
            g[i] = g[i] + weight * (ds * at.features[i] + two * self.spec.beta * w[i]);
        }
        g[d] = g[d] + weight * da;
        g[d + 1] = g[d + 1] + weight * db;
    }

    pub(crate) fn atom_grad_y(&self, x: &[T], y: &[T], atom: usize) -> BlockVector<T> {
        BlockVector(vec![self.atom_dalpha(x, y, atom)])
    }

    fn atom_dalpha(&self, x: &[T], y: &[T], atom: usize) -> T {
        let d = self.spec.dim;
        let at = &self.spec.atoms[atom];
        let s = dot(&x[..d], &at.features);
        let two = T::lit(2.0);
        let p = self.p;
        let q = T::one() - p;
        let sign = if at.label == 1 { -q } else { p };
        two * s * sign - two * p * q * y[0]
    }
}

/// Weighted-mixture AUC objective.
#[derive(Clone, Debug)]
pub struct AucObjective<'a, T> {
    auc: &'a AucSaddle<T>,
    weights: Vec<T>,
    sigma_x: T,
    smooth_x: T,
    coupling: T,
}

impl<T: Scalar> AucObjective<'_, T> {
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn x_geometry(&self) -> &GeometrySpec<T> {
        &self.auc.x_geometry
    }

    pub fn y_geometry(&self) -> &GeometrySpec<T> {
        &self.auc.y_geometry
    }

    fn active(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.weights.iter().copied().enumerate().filter(|&(_, w)| w != T::zero())
    }

    pub fn value(&self, x: &[T], y: &[T]) -> Result<T> {
        let v = self.active().fold(T::zero(), |acc, (k, w)| acc + w * self.auc.atom_loss(x, y, k));
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("AUC value"))
        }
    }

    pub fn grad_x(&self, x: &[T], y: &[T]) -> Result<BlockVector<T>> {
        let mut g = vec![T::zero(); self.auc.spec.dim + 2];
        for (k, w) in self.active() {
            self.auc.accumulate_grad_x(&mut g, x, y, k, w);
        }
        Ok(BlockVector(g))
    }

    pub fn grad_y(&self, x: &[T], y: &[T]) -> Result<BlockVector<T>> {
        let v = self.active().fold(T::zero(), |acc, (k, w)| acc + w * self.auc.atom_dalpha(x, y, k));
        Ok(BlockVector(vec![v]))
    }

    pub fn curvature(&self) -> (T, T) {
        let p = self.auc.p;
        (self.sigma_x, T::lit(2.0) * p * (T::one() - p))
    }

    pub fn block_smoothness(&self) -> (T, T) {
        let p = self.auc.p;
        (self.smooth_x, T::lit(2.0) * p * (T::one() - p))
    }

    pub fn coupling(&self) -> T {
        self.coupling
    }
}
