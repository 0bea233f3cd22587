use ssp_core::geometry::BlockVector;
use ssp_core::problems::{MatrixGame, MatrixGameSpec, RandomGame};
use ssp_core::risk_lab::{
    order_statistic_quantile, quantile_curve, run_experiment, run_replication, strong_excess_risk, ExperimentConfig,
    RiskSolvers,
};
use ssp_core::shifted::population_saddle;
use ssp_core::solver::{SaddlePair, SolverConfig};
use ssp_core::{rng, Instance, ProblemInstance, SaddleObjective};

fn game(d: usize, seed: u64) -> Instance {
    game_with(d, 3, seed)
}

fn game_with(d: usize, atoms: usize, seed: u64) -> Instance {
    let recipe = RandomGame { atoms, base_scale: 0.5, perturbation: 0.5, seed };
    ProblemInstance::MatrixGame(MatrixGame::new(MatrixGameSpec::random(d, recipe, 2.0, 2.0, 3.0).unwrap()).unwrap())
}

#[test]
fn risk_vanishes_at_population_saddle() {
    let inst = game(3, 9);
    let saddle = population_saddle(&inst).unwrap();
    let eval = strong_excess_risk(&inst, &saddle, &SolverConfig::oracle()).unwrap();
    assert!(eval.risk.abs() <= 1e-8);
}

#[test]
fn risk_is_nonnegative_for_feasible_pairs() {
    let inst = game(4, 3);
    let mut stream = rng::stream(2);
    for _ in 0..200 {
        let (x, y) = inst.sample_pair(&mut stream);
        assert!(strong_excess_risk(&inst, &SaddlePair::new(x, y), &SolverConfig::oracle()).unwrap().risk >= -1e-8);
    }
}

#[test]
fn risk_matches_grid_best_responses() {
    let inst = game(2, 5);
    let obj = inst.population();
    let floor = (-3f64).exp();
    let x = vec![0.5, 0.5];
    let y = vec![0.7, 0.3];
    let steps = 10_000;
    let (mut sup_y, mut inf_x) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..=steps {
        let t = floor + (1.0 - 2.0 * floor) * i as f64 / steps as f64;
        sup_y = sup_y.max(obj.value(&x, &[t, 1.0 - t]).unwrap());
        inf_x = inf_x.min(obj.value(&[t, 1.0 - t], &y).unwrap());
    }
    let pair = SaddlePair::new(BlockVector(x), BlockVector(y));
    let risk = strong_excess_risk(&inst, &pair, &SolverConfig::oracle()).unwrap().risk;
    assert!((risk - (sup_y - inf_x)).abs() <= 5e-4, "{risk} vs {}", sup_y - inf_x);
}

#[test]
fn single_atom_replication_has_no_risk() {
    let spec = MatrixGameSpec::<f64>::single(3, vec![0.2, -0.4, 0.6, 0.0, 0.1, -0.9, 0.3, 0.5, -0.2], 2.0, 2.0, 3.0);
    let inst = ProblemInstance::MatrixGame(MatrixGame::new(spec).unwrap());
    let solvers = RiskSolvers::default();
    for n in [2, 17, 300] {
        let r = run_replication(&inst, n, 0, 4, &solvers).unwrap();
        assert!(r.risk <= 2.0 * solvers.solver.gap_tolerance, "{r:?}");
    }
}

#[test]
fn replications_are_deterministic() {
    let inst = game(3, 1);
    let solvers = RiskSolvers::default();
    assert_eq!(run_replication(&inst, 64, 3, 11, &solvers).unwrap(), run_replication(&inst, 64, 3, 11, &solvers).unwrap());
}

#[test]
fn larger_samples_usually_carry_less_risk() {
    // With only three atoms the fluctuation lives in a two-dimensional span and
    // the paired win rate sits right at 0.9; five atoms put it near 0.97.
    let inst = game_with(3, 5, 7);
    let solvers = RiskSolvers::default();
    let mut wins = 0;
    for master in 0..50 {
        let small = run_replication(&inst, 32, 0, master, &solvers).unwrap();
        let large = run_replication(&inst, 512, 0, master, &solvers).unwrap();
        assert!(large.risk > 0.0);
        wins += usize::from(large.risk < small.risk);
    }
    assert!(wins >= 45, "{wins} of 50");
}

fn config() -> ExperimentConfig {
    ExperimentConfig {
        n_grid: vec![16, 64, 256],
        replications: 40,
        delta: 0.05,
        master_seed: 3,
        solvers: RiskSolvers::default(),
        extra_deltas: vec![],
        record_wall_time: false,
    }
}

#[test]
fn scheduling_does_not_change_records() {
    let inst = game(3, 2);
    let cfg = config();
    let serial = run_experiment(&inst, &cfg, 1).unwrap();
    let parallel = run_experiment(&inst, &cfg, 3).unwrap();
    assert_eq!(serial.records, parallel.records);
    assert!(serial.failures.is_empty());
    assert!(serial.records.iter().all(|r| r.risk >= -1e-8 && r.emp_gap <= cfg.solvers.solver.gap_tolerance));
}

#[test]
fn quantiles_drop_with_n_and_grow_with_confidence() {
    let inst = game(3, 2);
    let cfg = config();
    let out = run_experiment(&inst, &cfg, 2).unwrap();
    let curve = quantile_curve(&out.records, &cfg.n_grid, cfg.replications, cfg.delta).unwrap();
    assert!(curve.points.last().unwrap().quantile < curve.points[0].quantile);
    for &n in &cfg.n_grid {
        let q = |d| quantile_curve(&out.records, &[n], cfg.replications, d).unwrap().points[0].quantile;
        assert!(q(0.01) >= q(0.1));
    }
    let risks: Vec<f64> = out.records.iter().filter(|r| r.n == 16).map(|r| r.risk).collect();
    let p = curve.at(16).unwrap();
    assert_eq!(p.quantile, order_statistic_quantile(&risks, 0.05).unwrap());
    assert!(p.mean > 0.0 && p.median <= p.quantile);
}

