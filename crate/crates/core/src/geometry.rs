//! Block geometries: norms, dual norms, Euclidean projections and prox steps.
//!
//! Two kinds of blocks appear in the shipped instances:
//!
//! * Euclidean blocks (a ball, optionally followed by box-bounded scalar
//!   coordinates) measured in ℓ2, with the Euclidean prox.
//! * The truncated simplex `{x : Σx = 1, x_i ≥ e^{-L}}` measured in ℓ1 with
//!   the entropic (KL) prox.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dot, l1, l2, linf, Scalar};

/// A coordinate vector belonging to one block of a saddle pair.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlockVector<T>(pub Vec<T>);

impl<T: Scalar> BlockVector<T> {
    pub fn new(coords: Vec<T>) -> Self {
        Self(coords)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![T::zero(); dim])
    }

    pub fn filled(dim: usize, value: T) -> Self {
        Self(vec![value; dim])
    }

    pub fn coords(&self) -> &[T] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &Self) -> T {
        dot(&self.0, &other.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(&a, &b)| a - b).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(&a, &b)| a + b).collect())
    }

    pub fn scale(&self, s: T) -> Self {
        Self(self.0.iter().map(|&a| a * s).collect())
    }

    /// `self + s * other`
    pub fn axpy(&self, s: T, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(&a, &b)| a + s * b).collect())
    }

    pub fn midpoint(&self, other: &Self) -> Self {
        let half = T::lit(0.5);
        Self(self.0.iter().zip(&other.0).map(|(&a, &b)| half * (a + b)).collect())
    }

    pub fn l2(&self) -> T {
        l2(&self.0)
    }

    pub fn map_to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|v| v.as_f64()).collect()
    }
}

impl<T> std::ops::Deref for BlockVector<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T> From<Vec<T>> for BlockVector<T> {
    fn from(v: Vec<T>) -> Self {
        Self(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeometryKind {
    EuclideanBall,
    TruncatedSimplexEntropy,
    BallBox,
}

/// Feasible set and norm of one block.
#[derive(Clone, Debug, PartialEq)]
pub enum GeometrySpec<T> {
    /// `{v ∈ R^dim : ‖v‖₂ ≤ radius}` with ℓ2.
    EuclideanBall { dim: usize, radius: T },
    /// `{v : Σv = 1, v_i ≥ e^{-truncation_l}}` with ℓ1 and the entropic prox.
    TruncatedSimplexEntropy { dim: usize, truncation_l: T },
    /// Product of a ball in the first `ball_dim` coordinates and the box
    /// `[-bound, bound]^box_dim` in the trailing ones, with ℓ2.
    BallBox {
        ball_dim: usize,
        radius: T,
        box_dim: usize,
        bound: T,
    },
}

impl<T: Scalar> GeometrySpec<T> {
    pub fn euclidean_ball(dim: usize, radius: T) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidGeometry("dim must be positive".into()));
        }
        if !(radius > T::zero()) || !radius.is_finite() {
            return Err(Error::InvalidGeometry(format!("radius must be positive, got {radius}")));
        }
        Ok(Self::EuclideanBall { dim, radius })
    }

    pub fn truncated_simplex(dim: usize, truncation_l: T) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidGeometry("dim must be positive".into()));
        }
        if !(truncation_l > T::zero()) || !truncation_l.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "truncation_L must be positive, got {truncation_l}"
            )));
        }
        let floor = (-truncation_l).exp();
        if T::from_usize_lossy(dim) * floor >= T::one() {
            return Err(Error::InfeasibleGeometry(format!(
                "dim * exp(-L) = {} >= 1 (dim = {dim}, L = {truncation_l})",
                T::from_usize_lossy(dim) * floor
            )));
        }
        Ok(Self::TruncatedSimplexEntropy { dim, truncation_l })
    }

    pub fn ball_box(ball_dim: usize, radius: T, box_dim: usize, bound: T) -> Result<Self> {
        if ball_dim == 0 {
            return Err(Error::InvalidGeometry("ball_dim must be positive".into()));
        }
        if !(radius > T::zero()) || !(bound > T::zero()) {
            return Err(Error::InvalidGeometry("radius and box bound must be positive".into()));
        }
        Ok(Self::BallBox { ball_dim, radius, box_dim, bound })
    }

    pub fn kind(&self) -> GeometryKind {
        match self {
            Self::EuclideanBall { .. } => GeometryKind::EuclideanBall,
            Self::TruncatedSimplexEntropy { .. } => GeometryKind::TruncatedSimplexEntropy,
            Self::BallBox { .. } => GeometryKind::BallBox,
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            Self::EuclideanBall { dim, .. } | Self::TruncatedSimplexEntropy { dim, .. } => dim,
            Self::BallBox { ball_dim, box_dim, .. } => ball_dim + box_dim,
        }
    }

    /// Per-coordinate lower bound `e^{-L}` of a truncated simplex.
    pub fn floor(&self) -> Option<T> {
        match *self {
            Self::TruncatedSimplexEntropy { truncation_l, .. } => Some((-truncation_l).exp()),
            _ => None,
        }
    }

    pub fn is_entropic(&self) -> bool {
        matches!(self, Self::TruncatedSimplexEntropy { .. })
    }

    fn check_dim(&self, v: &[T]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: v.len() });
        }
        Ok(())
    }

    /// ℓ2 for Euclidean blocks, ℓ1 for the simplex.
    pub fn norm(&self, v: &[T]) -> Result<T> {
        self.check_dim(v)?;
        Ok(match self {
            Self::TruncatedSimplexEntropy { .. } => l1(v),
            _ => l2(v),
        })
    }

    /// ℓ2 for Euclidean blocks, ℓ∞ for the simplex.
    pub fn dual_norm(&self, v: &[T]) -> Result<T> {
        self.check_dim(v)?;
        Ok(match self {
            Self::TruncatedSimplexEntropy { .. } => linf(v),
            _ => l2(v),
        })
    }

    pub fn distance(&self, a: &[T], b: &[T]) -> Result<T> {
        self.check_dim(a)?;
        let diff: Vec<T> = a.iter().zip(b).map(|(&p, &q)| p - q).collect();
        self.norm(&diff)
    }

    pub fn contains(&self, v: &[T]) -> bool {
        if v.len() != self.dim() || v.iter().any(|c| !c.is_finite()) {
            return false;
        }
        let tol = T::feasibility_tol();
        match *self {
            Self::EuclideanBall { radius, .. } => l2(v) <= radius + tol,
            Self::TruncatedSimplexEntropy { .. } => {
                let floor = self.floor().unwrap();
                let sum: T = v.iter().copied().sum();
                v.iter().all(|&c| c >= floor - tol) && (sum - T::one()).abs() <= tol
            }
            Self::BallBox { ball_dim, radius, bound, .. } => {
                l2(&v[..ball_dim]) <= radius + tol
                    && v[ball_dim..].iter().all(|c| c.abs() <= bound + tol)
            }
        }
    }

    pub fn ensure_feasible(&self, v: &[T], what: &str) -> Result<()> {
        self.check_dim(v)?;
        if self.contains(v) {
            Ok(())
        } else {
            Err(Error::InfeasiblePoint(format!("{what} is outside its {:?} block", self.kind())))
        }
    }

    /// Canonical interior point: the origin, or the uniform distribution.
    pub fn center(&self) -> BlockVector<T> {
        match self {
            Self::TruncatedSimplexEntropy { dim, .. } => {
                BlockVector::filled(*dim, T::one() / T::from_usize_lossy(*dim))
            }
            _ => BlockVector::zeros(self.dim()),
        }
    }

    /// Largest distance between two feasible points, in the block norm.
    pub fn diameter(&self) -> T {
        match *self {
            Self::EuclideanBall { radius, .. } => radius + radius,
            Self::TruncatedSimplexEntropy { dim, .. } => {
                if dim < 2 {
                    T::zero()
                } else {
                    let mass = T::one() - T::from_usize_lossy(dim) * self.floor().unwrap();
                    mass + mass
                }
            }
            Self::BallBox { radius, box_dim, bound, .. } => {
                let r2 = radius * radius;
                let b2 = bound * bound * T::from_usize_lossy(box_dim);
                (T::lit(4.0) * (r2 + b2)).sqrt()
            }
        }
    }

    /// Euclidean projection onto the block's feasible set.
    pub fn project(&self, v: &[T]) -> Result<BlockVector<T>> {
        self.check_dim(v)?;
        if v.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("projection input"));
        }
        Ok(match *self {
            Self::EuclideanBall { radius, .. } => BlockVector(project_ball(v, radius)),
            Self::TruncatedSimplexEntropy { dim, .. } => {
                let floor = self.floor().unwrap();
                let mass = T::one() - T::from_usize_lossy(dim) * floor;
                if mass <= T::zero() {
                    return Err(Error::InfeasibleGeometry("dim * exp(-L) >= 1".into()));
                }
                let shifted: Vec<T> = v.iter().map(|&c| c - floor).collect();
                let w = project_simplex(&shifted, mass);
                BlockVector(w.into_iter().map(|c| c + floor).collect())
            }
            Self::BallBox { ball_dim, radius, bound, .. } => {
                let mut out = project_ball(&v[..ball_dim], radius);
                out.extend(v[ball_dim..].iter().map(|&c| c.max(-bound).min(bound)));
                BlockVector(out)
            }
        })
    }

    /// One prox step from the feasible point `x` along `-grad` with step `eta`.
    ///
    /// Euclidean blocks use `project(x - eta * grad)`. The simplex uses the
    /// multiplicative update `u_i = x_i exp(-eta grad_i)` followed by the KL
    /// projection onto the truncated simplex, `z_i = max(floor, c u_i)`.
    pub fn prox_step(&self, x: &[T], grad: &[T], eta: T) -> Result<BlockVector<T>> {
        self.check_dim(x)?;
        self.check_dim(grad)?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("prox gradient"));
        }
        if !(eta > T::zero()) {
            return Err(Error::InvalidGeometry(format!("step size must be positive, got {eta}")));
        }
        match self {
            Self::TruncatedSimplexEntropy { .. } => {
                if x.iter().any(|&c| c <= T::zero()) {
                    return Err(Error::InfeasiblePoint(
                        "entropic prox needs strictly positive coordinates".into(),
                    ));
                }
                let log_u: Vec<T> = x.iter().zip(grad).map(|(&xi, &gi)| xi.ln() - eta * gi).collect();
                Ok(BlockVector(kl_project_log(&log_u, self.floor().unwrap())))
            }
            _ => {
                let moved: Vec<T> = x.iter().zip(grad).map(|(&xi, &gi)| xi - eta * gi).collect();
                self.project(&moved)
            }
        }
    }

    /// Minimizer of `<a, z> + weight * Σ z_i ln z_i` over the truncated simplex.
    ///
    /// Closed form `z_i = max(floor, c exp(-a_i / weight))`.
    pub fn entropic_argmin(&self, linear: &[T], weight: T) -> Result<BlockVector<T>> {
        self.check_dim(linear)?;
        let floor = self
            .floor()
            .ok_or_else(|| Error::InvalidGeometry("entropic argmin needs a simplex block".into()))?;
        if !(weight > T::zero()) {
            return Err(Error::InvalidGeometry("entropy weight must be positive".into()));
        }
        let log_u: Vec<T> = linear.iter().map(|&a| -a / weight).collect();
        Ok(BlockVector(kl_project_log(&log_u, floor)))
    }

    /// Uniformly distributed feasible point (Dirichlet(1) on the simplex).
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> BlockVector<T> {
        match *self {
            Self::EuclideanBall { dim, radius } => BlockVector(sample_ball(rng, dim, radius)),
            Self::TruncatedSimplexEntropy { dim, .. } => {
                let floor = self.floor().unwrap();
                let mass = T::one() - T::from_usize_lossy(dim) * floor;
                let e: Vec<f64> = (0..dim).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
                let total: f64 = e.iter().sum();
                BlockVector(e.iter().map(|&v| floor + mass * T::lit(v / total)).collect())
            }
            Self::BallBox { ball_dim, radius, box_dim, bound } => {
                let mut v = sample_ball(rng, ball_dim, radius);
                v.extend((0..box_dim).map(|_| bound * T::lit(2.0 * rng.random::<f64>() - 1.0)));
                BlockVector(v)
            }
        }
    }
}

fn project_ball<T: Scalar>(v: &[T], radius: T) -> Vec<T> {
    let n = l2(v);
    if n > radius {
        let s = radius / n;
        v.iter().map(|&c| c * s).collect()
    } else {
        v.to_vec()
    }
}

/// Euclidean projection onto `{w ≥ 0, Σw = mass}` by sorting.
fn project_simplex<T: Scalar>(v: &[T], mass: T) -> Vec<T> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite input"));
    let mut cumsum = T::zero();
    let mut tau = T::zero();
    for (k, &u) in sorted.iter().enumerate() {
        cumsum = cumsum + u;
        let candidate = (cumsum - mass) / T::from_usize_lossy(k + 1);
        if u - candidate > T::zero() {
            tau = candidate;
        }
    }
    v.iter().map(|&c| (c - tau).max(T::zero())).collect()
}

/// KL projection of `u = exp(log_u)` onto the truncated simplex.
///
/// The solution is `z_i = max(floor, c u_i)`: coordinates with the smallest
/// `u_i` are pinned to the floor and the rest share the remaining mass
/// proportionally.
fn kl_project_log<T: Scalar>(log_u: &[T], floor: T) -> Vec<T> {
    let d = log_u.len();
    let top = log_u.iter().copied().fold(T::neg_infinity(), T::max);
    let u: Vec<T> = log_u.iter().map(|&l| (l - top).exp()).collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| u[b].partial_cmp(&u[a]).expect("finite weights"));

    // Free set = `order[..k]`; grow it from the largest weights.
    let mut free_sum = T::zero();
    let mut scale = (T::one() - T::from_usize_lossy(d - 1) * floor) / u[order[0]];
    for k in 1..=d {
        free_sum = free_sum + u[order[k - 1]];
        let remaining = T::one() - T::from_usize_lossy(d - k) * floor;
        let c = remaining / free_sum;
        let next_pinned = k == d || c * u[order[k]] <= floor;
        if next_pinned && c * u[order[k - 1]] >= floor {
            scale = c;
            break;
        }
    }
    let mut z: Vec<T> = u.iter().map(|&ui| (scale * ui).max(floor)).collect();
    // Put the rounding residue on the largest free coordinate so Σz = 1 holds tightly.
    let residue = T::one() - z.iter().copied().sum::<T>();
    z[order[0]] = z[order[0]] + residue;
    z
}

fn sample_ball<T: Scalar, R: Rng + ?Sized>(rng: &mut R, dim: usize, radius: T) -> Vec<T> {
    let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let r = radius.as_f64() * rng.random::<f64>().powf(1.0 / dim as f64);
    g.iter().map(|&v| T::lit(v / norm * r)).collect()
}
