//! Stochastic saddle-point instances with finite-support distributions.
//!
//! Every instance carries an exact population oracle: the expectation over
//! its support is a finite weighted sum, so population objectives, gradients
//! and best responses are computed without Monte-Carlo error.

mod auc;
mod matrix_game;
mod verify;

pub use auc::{default_box_bound, AucAtom, AucObjective, AucSaddle, AucSpec, AucSynthetic};
pub use matrix_game::{GameObjective, MatrixGame, MatrixGameSpec, RandomGame};
pub use verify::{verify_assumptions, AssumptionReport, ConstantCheck};

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{BlockVector, GeometrySpec};
use crate::rng;
use crate::scalar::Scalar;

/// Constants of the strong convexity, Lipschitz and cross-gradient assumptions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TheoreticalConstants<T> {
    pub sigma_x: T,
    pub sigma_y: T,
    pub l_x: T,
    pub l_y: T,
    pub l_xy: T,
    pub assumption4_holds: bool,
}

impl<T: Scalar> TheoreticalConstants<T> {
    pub fn new(sigma_x: T, sigma_y: T, l_x: T, l_y: T, l_xy: T) -> Self {
        Self {
            sigma_x,
            sigma_y,
            l_x,
            l_y,
            l_xy,
            assumption4_holds: l_xy <= sigma_x.min(sigma_y),
        }
    }

    pub fn min_sigma(&self) -> T {
        self.sigma_x.min(self.sigma_y)
    }

    pub fn max_sigma(&self) -> T {
        self.sigma_x.max(self.sigma_y)
    }

    pub fn max_lipschitz(&self) -> T {
        self.l_x.max(self.l_y)
    }

    /// Localization constant `1 - L_xy / min(σ_x, σ_y)`.
    pub fn localization(&self) -> T {
        T::one() - self.l_xy / self.min_sigma()
    }
}

/// A min-max objective over two geometries, as consumed by the solver.
pub trait SaddleObjective<T: Scalar>: Sync {
    fn x_geometry(&self) -> &GeometrySpec<T>;
    fn y_geometry(&self) -> &GeometrySpec<T>;
    fn value(&self, x: &[T], y: &[T]) -> Result<T>;
    fn grad_x(&self, x: &[T], y: &[T]) -> Result<BlockVector<T>>;
    fn grad_y(&self, x: &[T], y: &[T]) -> Result<BlockVector<T>>;
    /// Strong convexity in x and strong concavity in y, in the block norms.
    fn curvature(&self) -> (T, T);
    /// Smoothness of each block relative to its prox geometry.
    fn block_smoothness(&self) -> (T, T);
    /// Lipschitz constant of `∇_x` in y and of `∇_y` in x.
    fn coupling(&self) -> T;
}

/// An i.i.d. sample of support indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SampleSet {
    pub indices: Vec<usize>,
    pub seed: u64,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn counts(&self, support_len: usize) -> Vec<usize> {
        let mut counts = vec![0; support_len];
        for &i in &self.indices {
            counts[i] += 1;
        }
        counts
    }

    /// Empirical measure as weights over the support.
    pub fn weights<T: Scalar>(&self, support_len: usize) -> Vec<T> {
        let n = T::from_usize_lossy(self.len());
        self.counts(support_len)
            .into_iter()
            .map(|c| T::from_usize_lossy(c) / n)
            .collect()
    }
}

/// Draws `n` inverse-CDF samples from `probabilities` with a stream keyed by `seed`.
pub fn sample_indices<T: Scalar>(probabilities: &[T], n: usize, seed: u64) -> Result<SampleSet> {
    if probabilities.is_empty() {
        return Err(Error::EmptySupport);
    }
    let mut cdf = Vec::with_capacity(probabilities.len());
    let mut acc = 0.0f64;
    for p in probabilities {
        acc += p.as_f64();
        cdf.push(acc);
    }
    let last = probabilities.len() - 1;
    let mut stream = rng::stream(seed);
    let indices = (0..n)
        .map(|_| {
            let u = stream.random::<f64>() * acc;
            cdf.partition_point(|&c| c <= u).min(last)
        })
        .collect();
    Ok(SampleSet { indices, seed })
}

pub(crate) fn validate_probabilities<T: Scalar>(probabilities: &[T]) -> Result<()> {
    if probabilities.is_empty() {
        return Err(Error::EmptySupport);
    }
    if probabilities.iter().any(|&p| !(p >= T::zero()) || !p.is_finite()) {
        return Err(Error::InvalidInstance("probabilities must be finite and nonnegative".into()));
    }
    let total: T = probabilities.iter().copied().sum();
    if (total - T::one()).abs() > T::feasibility_tol() {
        return Err(Error::InvalidInstance(format!("probabilities sum to {total}, not 1")));
    }
    Ok(())
}

/// One of the shipped stochastic saddle-point problems.
#[derive(Clone, Debug)]
pub enum ProblemInstance<T> {
    MatrixGame(MatrixGame<T>),
    Auc(AucSaddle<T>),
}

/// Weighted-mixture objective over an instance's support.
#[derive(Clone, Debug)]
pub enum Objective<'a, T> {
    Game(GameObjective<'a, T>),
    Auc(AucObjective<'a, T>),
}

impl<T: Scalar> ProblemInstance<T> {
    pub fn x_geometry(&self) -> &GeometrySpec<T> {
        match self {
            Self::MatrixGame(g) => g.geometry(),
            Self::Auc(a) => a.x_geometry(),
        }
    }

    pub fn y_geometry(&self) -> &GeometrySpec<T> {
        match self {
            Self::MatrixGame(g) => g.geometry(),
            Self::Auc(a) => a.y_geometry(),
        }
    }

    pub fn probabilities(&self) -> &[T] {
        match self {
            Self::MatrixGame(g) => &g.spec().probabilities,
            Self::Auc(a) => a.probabilities(),
        }
    }

    pub fn support_len(&self) -> usize {
        self.probabilities().len()
    }

    /// Problem dimension entering the generalization rate (max of block dims).
    pub fn dim(&self) -> usize {
        self.x_geometry().dim().max(self.y_geometry().dim())
    }

    pub fn constants(&self) -> TheoreticalConstants<T> {
        match self {
            Self::MatrixGame(g) => g.theoretical_constants(),
            Self::Auc(a) => a.theoretical_constants(),
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleSet> {
        if n == 0 {
            return Err(Error::InvalidInstance("sample size must be at least 1".into()));
        }
        sample_indices(self.probabilities(), n, seed)
    }

    fn check_atom(&self, atom: usize) -> Result<()> {
        if atom >= self.support_len() {
            return Err(Error::UnknownAtom { index: atom, len: self.support_len() });
        }
        Ok(())
    }

    fn check_point(&self, x: &[T], y: &[T]) -> Result<()> {
        self.x_geometry().ensure_feasible(x, "x")?;
        self.y_geometry().ensure_feasible(y, "y")
    }

    /// Per-sample loss `F(x, y, ξ_atom)`.
    pub fn loss(&self, x: &[T], y: &[T], atom: usize) -> Result<T> {
        self.check_atom(atom)?;
        self.check_point(x, y)?;
        Ok(match self {
            Self::MatrixGame(g) => g.atom_loss(x, y, atom),
            Self::Auc(a) => a.atom_loss(x, y, atom),
        })
    }

    pub fn grad_x(&self, x: &[T], y: &[T], atom: usize) -> Result<BlockVector<T>> {
        self.check_atom(atom)?;
        self.check_point(x, y)?;
        match self {
            Self::MatrixGame(g) => g.atom_grad_x(x, y, atom),
            Self::Auc(a) => Ok(a.atom_grad_x(x, y, atom)),
        }
    }

    pub fn grad_y(&self, x: &[T], y: &[T], atom: usize) -> Result<BlockVector<T>> {
        self.check_atom(atom)?;
        self.check_point(x, y)?;
        match self {
            Self::MatrixGame(g) => g.atom_grad_y(x, y, atom),
            Self::Auc(a) => Ok(a.atom_grad_y(x, y, atom)),
        }
    }

    /// Per-atom losses at one point, without feasibility checks.
    pub fn atom_losses(&self, x: &[T], y: &[T]) -> Vec<T> {
        (0..self.support_len())
            .map(|k| match self {
                Self::MatrixGame(g) => g.atom_loss(x, y, k),
                Self::Auc(a) => a.atom_loss(x, y, k),
            })
            .collect()
    }

    /// Objective `Σ_k weights[k] F(·, ·, ξ_k)`.
    pub fn mixture(&self, weights: Vec<T>) -> Result<Objective<'_, T>> {
        if weights.len() != self.support_len() {
            return Err(Error::DimensionMismatch { expected: self.support_len(), got: weights.len() });
        }
        Ok(match self {
            Self::MatrixGame(g) => Objective::Game(g.objective(&weights)),
            Self::Auc(a) => Objective::Auc(a.objective(weights)),
        })
    }

    /// Exact population objective.
    pub fn population(&self) -> Objective<'_, T> {
        self.mixture(self.probabilities().to_vec())
            .expect("probabilities match the support")
    }

    /// Empirical objective of a sample.
    pub fn empirical(&self, sample: &SampleSet) -> Result<Objective<'_, T>> {
        if sample.is_empty() {
            return Err(Error::InvalidInstance("empty sample".into()));
        }
        if let Some(&bad) = sample.indices.iter().find(|&&i| i >= self.support_len()) {
            return Err(Error::UnknownAtom { index: bad, len: self.support_len() });
        }
        self.mixture(sample.weights(self.support_len()))
    }

    pub fn population_loss(&self, x: &[T], y: &[T]) -> Result<T> {
        self.check_point(x, y)?;
        self.population().value(x, y)
    }

    pub fn population_grads(&self, x: &[T], y: &[T]) -> Result<(BlockVector<T>, BlockVector<T>)> {
        self.check_point(x, y)?;
        let pop = self.population();
        Ok((pop.grad_x(x, y)?, pop.grad_y(x, y)?))
    }

    /// Independent feasible points, one per block.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (BlockVector<T>, BlockVector<T>) {
        let x = self.x_geometry().sample_point(rng);
        let y = self.y_geometry().sample_point(rng);
        (x, y)
    }
}

impl<T: Scalar> SaddleObjective<T> for Objective<'_, T> {
    fn x_geometry(&self) -> &GeometrySpec<T> {
        match self {
            Self::Game(o) => o.x_geometry(),
            Self::Auc(o) => o.x_geometry(),
        }
    }
    fn y_geometry(&self) -> &GeometrySpec<T> {
        match self {
            Self::Game(o) => o.y_geometry(),
            Self::Auc(o) => o.y_geometry(),
        }
    }
    fn value(&self, x: &[T], y: &[T]) -> Result<T> {
        match self {
            Self::Game(o) => o.value(x, y),
            Self::Auc(o) => o.value(x, y),
        }
    }
    fn grad_x(&self, x: &[T], y: &[T]) -> Result<BlockVector<T>> {
        match self {
            Self::Game(o) => o.grad_x(x, y),
            Self::Auc(o) => o.grad_x(x, y),
        }
    }
    fn grad_y(&self, x: &[T], y: &[T]) -> Result<BlockVector<T>> {
        match self {
            Self::Game(o) => o.grad_y(x, y),
            Self::Auc(o) => o.grad_y(x, y),
        }
    }
    fn curvature(&self) -> (T, T) {
        match self {
            Self::Game(o) => o.curvature(),
            Self::Auc(o) => o.curvature(),
        }
    }
    fn block_smoothness(&self) -> (T, T) {
        match self {
            Self::Game(o) => o.block_smoothness(),
            Self::Auc(o) => o.block_smoothness(),
        }
    }
    fn coupling(&self) -> T {
        match self {
            Self::Game(o) => o.coupling(),
            Self::Auc(o) => o.coupling(),
        }
    }
}
