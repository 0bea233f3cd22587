//! Sample-average approximation for stochastic saddle-point problems.
//!
//! The crate solves empirical saddle problems over finite-support
//! distributions, measures the strong excess risk of the empirical solution
//! against exact population oracles, and runs the Monte-Carlo studies that
//! check its `O((d + log(1/δ))/n)` high-probability decay.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the double-precision types the experiments and CLI use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli_io;
pub mod error;
pub mod geometry;
pub mod problems;
pub mod risk_lab;
pub mod rng;
pub mod scalar;
pub mod shifted;
pub mod solver;

pub use error::{Error, Result};
pub use geometry::{BlockVector, GeometryKind, GeometrySpec};
pub use problems::{Objective, ProblemInstance, SaddleObjective, SampleSet, TheoreticalConstants};
pub use risk_lab::{ExperimentConfig, QuantileCurve, RateFit, RiskRecord, RiskSolvers};
pub use scalar::Scalar;
pub use solver::{Averaging, BestResponse, GapCertificate, SaddlePair, SolveReport, SolverConfig, StepSize};

pub type Geometry = GeometrySpec<f64>;
pub type Vector = BlockVector<f64>;
pub type Instance = ProblemInstance<f64>;
pub type Constants = TheoreticalConstants<f64>;
pub type Pair = SaddlePair<f64>;
pub type Report = SolveReport<f64>;
