//! Entropy-regularized stochastic matrix game on the truncated simplex.
//!
//! `F(x, y, ξ) = xᵀ A_ξ y + λ_x Σ x_i ln x_i − λ_y Σ y_j ln y_j`

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{validate_probabilities, TheoreticalConstants};
use crate::error::{Error, Result};
use crate::geometry::{BlockVector, GeometrySpec};
use crate::rng;
use crate::scalar::Scalar;

/// Matrices are `dim × dim`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixGameSpec<T> {
    pub dim: usize,
    pub matrices: Vec<Vec<T>>,
    pub probabilities: Vec<T>,
    pub lambda_x: T,
    pub lambda_y: T,
    pub truncation_l: T,
}

/// Recipe for the default distribution: a base matrix plus equiprobable
/// bounded perturbations, clipped entrywise to `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomGame {
    pub atoms: usize,
    #[serde(default = "default_base_scale")]
    pub base_scale: f64,
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
    pub seed: u64,
}

fn default_base_scale() -> f64 {
    0.5
}

fn default_perturbation() -> f64 {
    0.5
}

impl<T: Scalar> MatrixGameSpec<T> {
    pub fn random(
        dim: usize,
        recipe: RandomGame,
        lambda_x: T,
        lambda_y: T,
        truncation_l: T,
    ) -> Result<Self> {
        if recipe.atoms == 0 {
            return Err(Error::EmptySupport);
        }
        let mut stream = rng::stream(recipe.seed);
        let base: Vec<f64> = (0..dim * dim)
            .map(|_| recipe.base_scale * (2.0 * stream.random::<f64>() - 1.0))
            .collect();
        let matrices = (0..recipe.atoms)
            .map(|_| {
                base.iter()
                    .map(|&b| {
                        let v = b + recipe.perturbation * (2.0 * stream.random::<f64>() - 1.0);
                        T::lit(v.clamp(-1.0, 1.0))
                    })
                    .collect()
            })
            .collect();
        let p = T::one() / T::from_usize_lossy(recipe.atoms);
        Ok(Self {
            dim,
            matrices,
            probabilities: vec![p; recipe.atoms],
            lambda_x,
            lambda_y,
            truncation_l,
        })
    }

    /// A single deterministic matrix (degenerate distribution).
    pub fn single(dim: usize, matrix: Vec<T>, lambda_x: T, lambda_y: T, truncation_l: T) -> Self {
        Self {
            dim,
            matrices: vec![matrix],
            probabilities: vec![T::one()],
            lambda_x,
            lambda_y,
            truncation_l,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MatrixGame<T> {
    spec: MatrixGameSpec<T>,
    geometry: GeometrySpec<T>,
    max_entry: T,
}

impl<T: Scalar> MatrixGame<T> {
    pub fn new(spec: MatrixGameSpec<T>) -> Result<Self> {
        let d = spec.dim;
        let geometry = GeometrySpec::truncated_simplex(d, spec.truncation_l)?;
        if spec.matrices.len() != spec.probabilities.len() {
            return Err(Error::InvalidInstance(format!(
                "{} matrices but {} probabilities",
                spec.matrices.len(),
                spec.probabilities.len()
            )));
        }
        validate_probabilities(&spec.probabilities)?;
        let mut max_entry = T::zero();
        for (k, a) in spec.matrices.iter().enumerate() {
            if a.len() != d * d {
                return Err(Error::InvalidInstance(format!(
                    "matrix {k} has {} entries, expected {}",
                    a.len(),
                    d * d
                )));
            }
            for &v in a {
                if !v.is_finite() || v.abs() > T::one() {
                    return Err(Error::InvalidInstance(format!(
                        "matrix {k} has entry {v} outside [-1, 1]"
                    )));
                }
                max_entry = max_entry.max(v.abs());
            }
        }
        for (name, l) in [("lambda_x", spec.lambda_x), ("lambda_y", spec.lambda_y)] {
            if !(l >= T::zero()) || !l.is_finite() {
                return Err(Error::InvalidInstance(format!("{name} must be nonnegative, got {l}")));
            }
        }
        Ok(Self { spec, geometry, max_entry })
    }

    pub fn spec(&self) -> &MatrixGameSpec<T> {
        &self.spec
    }

    pub fn geometry(&self) -> &GeometrySpec<T> {
        &self.geometry
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    /// σ = λ, L = λ(L + 1) + 1, L_xy = 1; the coupling condition needs λ_x, λ_y > 1.
    pub fn theoretical_constants(&self) -> TheoreticalConstants<T> {
        let s = &self.spec;
        let one = T::one();
        let mut c = TheoreticalConstants::new(
            s.lambda_x,
            s.lambda_y,
            s.lambda_x * (s.truncation_l + one) + one,
            s.lambda_y * (s.truncation_l + one) + one,
            one,
        );
        c.assumption4_holds = s.lambda_x > one && s.lambda_y > one;
        c
    }

    /// `Σ_k w_k A_k`
    pub fn averaged_matrix(&self, weights: &[T]) -> Vec<T> {
        let mut abar = vec![T::zero(); self.dim() * self.dim()];
        for (a, &w) in self.spec.matrices.iter().zip(weights) {
            if w == T::zero() {
                continue;
            }
            for (acc, &v) in abar.iter_mut().zip(a) {
                *acc = *acc + w * v;
            }
        }
        abar
    }

    pub(crate) fn objective(&self, weights: &[T]) -> GameObjective<'_, T> {
        let abar = self.averaged_matrix(weights);
        GameObjective { game: self, abar }
    }

    pub(crate) fn atom_loss(&self, x: &[T], y: &[T], atom: usize) -> T {
        game_value(&self.spec.matrices[atom], self.dim(), self.spec.lambda_x, self.spec.lambda_y, x, y)
    }

    pub(crate) fn atom_grad_x(&self, x: &[T], y: &[T], atom: usize) -> Result<BlockVector<T>> {
        positive(x, "x")?;
        Ok(game_grad_x(&self.spec.matrices[atom], self.dim(), self.spec.lambda_x, x, y))
    }

    pub(crate) fn atom_grad_y(&self, x: &[T], y: &[T], atom: usize) -> Result<BlockVector<T>> {
        positive(y, "y")?;
        Ok(game_grad_y(&self.spec.matrices[atom], self.dim(), self.spec.lambda_y, x, y))
    }
}

fn positive<T: Scalar>(v: &[T], what: &str) -> Result<()> {
    if v.iter().any(|&c| !(c > T::zero())) {
        return Err(Error::InfeasiblePoint(format!(
            "{what} has a coordinate at or below 0; the entropy gradient is undefined"
        )));
    }
    Ok(())
}

fn neg_entropy<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, &c| acc + c * c.ln())
}

fn bilinear<T: Scalar>(a: &[T], d: usize, x: &[T], y: &[T]) -> T {
    let mut total = T::zero();
    for i in 0..d {
        let row = &a[i * d..(i + 1) * d];
        let ay = row.iter().zip(y).fold(T::zero(), |acc, (&r, &yj)| acc + r * yj);
        total = total + x[i] * ay;
    }
    total
}

fn game_value<T: Scalar>(a: &[T], d: usize, lx: T, ly: T, x: &[T], y: &[T]) -> T {
    bilinear(a, d, x, y) + lx * neg_entropy(x) - ly * neg_entropy(y)
}

fn game_grad_x<T: Scalar>(a: &[T], d: usize, lx: T, x: &[T], y: &[T]) -> BlockVector<T> {
    BlockVector(
        (0..d)
            .map(|i| {
                let ay = a[i * d..(i + 1) * d]
                    .iter()
                    .zip(y)
                    .fold(T::zero(), |acc, (&r, &yj)| acc + r * yj);
                ay + lx * (T::one() + x[i].ln())
            })
            .collect(),
    )
}

fn game_grad_y<T: Scalar>(a: &[T], d: usize, ly: T, x: &[T], y: &[T]) -> BlockVector<T> {
    BlockVector(
        (0..d)
            .map(|j| {
                let atx = (0..d).fold(T::zero(), |acc, i| acc + a[i * d + j] * x[i]);
                atx - ly * (T::one() + y[j].ln())
            })
            .collect(),
    )
}

/// Mixture objective of a matrix game; linear in A, so it is the game with
/// the averaged matrix.
#[derive(Clone, Debug)]
pub struct GameObjective<'a, T> {
    game: &'a MatrixGame<T>,
    abar: Vec<T>,
}

impl<T: Scalar> GameObjective<'_, T> {
    pub fn averaged_matrix(&self) -> &[T] {
        &self.abar
    }

    pub fn game(&self) -> &MatrixGame<T> {
        self.game
    }

    pub fn x_geometry(&self) -> &GeometrySpec<T> {
        &self.game.geometry
    }

    pub fn y_geometry(&self) -> &GeometrySpec<T> {
        &self.game.geometry
    }

    pub fn value(&self, x: &[T], y: &[T]) -> Result<T> {
        let s = &self.game.spec;
        let v = game_value(&self.abar, s.dim, s.lambda_x, s.lambda_y, x, y);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("matrix game value"))
        }
    }

    pub fn grad_x(&self, x: &[T], y: &[T]) -> Result<BlockVector<T>> {
        positive(x, "x")?;
        let s = &self.game.spec;
        Ok(game_grad_x(&self.abar, s.dim, s.lambda_x, x, y))
    }

    pub fn grad_y(&self, x: &[T], y: &[T]) -> Result<BlockVector<T>> {
        positive(y, "y")?;
        let s = &self.game.spec;
        Ok(game_grad_y(&self.abar, s.dim, s.lambda_y, x, y))
    }

    pub fn curvature(&self) -> (T, T) {
        (self.game.spec.lambda_x, self.game.spec.lambda_y)
    }

    /// The bilinear term is linear in each block, so each block is exactly
    /// λ-smooth relative to the entropy.
    pub fn block_smoothness(&self) -> (T, T) {
        (self.game.spec.lambda_x, self.game.spec.lambda_y)
    }

    pub fn coupling(&self) -> T {
        self.game.max_entry
    }
}
