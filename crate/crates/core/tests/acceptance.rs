//! End-to-end acceptance run. Prints one line per criterion, then fails if any criterion failed.

use std::path::PathBuf;

use ssp_core::cli_io::{load_config, records_csv, LoadedConfig};
use ssp_core::problems::{verify_assumptions, MatrixGame, MatrixGameSpec, RandomGame};
use ssp_core::risk_lab::{fit_rate, quantile_curve, run_experiment, ExperimentOutcome, RiskRecord};
use ssp_core::shifted::{
    check_lemma41_chain, check_localization, exp_moment_check, grid_refinement_check, DEFAULT_ALLOWANCE,
};
use ssp_core::solver::{solve_saddle, SolverConfig};
use ssp_core::{Instance, ProblemInstance, SaddleObjective};

fn config(name: &str) -> LoadedConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    load_config(&path).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn shipped() -> Vec<(&'static str, LoadedConfig)> {
    ["rate_matrix_game.json", "auc_rate.json", "solve_d3.json", "shifted_d1.json", "shifted_d2.json", "verify_weak.json"]
        .into_iter()
        .map(|n| (n, config(n)))
        .collect()
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn experiment(loaded: &LoadedConfig, threads: usize) -> ExperimentOutcome {
    let exp = loaded.config.experiment.as_ref().expect("experiment section");
    let out = run_experiment(&loaded.instance, exp, threads).expect("experiment runs");
    assert!(out.failures.is_empty(), "{:?}", out.failures);
    out
}

fn quantile(records: &[RiskRecord], n: usize, reps: usize, delta: f64) -> f64 {
    quantile_curve(records, &[n], reps, delta).unwrap().points[0].quantile
}

fn rate_reproduction(loaded: &LoadedConfig, records: &[RiskRecord]) -> Outcome {
    let exp = loaded.config.experiment.as_ref().unwrap();
    let curve = quantile_curve(records, &exp.n_grid, exp.replications, exp.delta).unwrap();
    let fit = fit_rate(&curve).unwrap();
    // The truncation level L = 1 leaves an empty domain in five dimensions.
    let stated = MatrixGameSpec::<f64>::random(5, RandomGame { atoms: 3, base_scale: 0.5, perturbation: 0.5, seed: 2024 }, 2.0, 2.0, 1.0)
        .and_then(MatrixGame::new)
        .is_err();
    let passed = (-1.30..=-0.75).contains(&fit.slope) && fit.r2 >= 0.95 && stated;
    outcome(
        passed,
        format!("slope = {:.4}, r2 = {:.4} (L = 3; L = 1 rejected as empty: {stated})", fit.slope, fit.r2),
    )
}

fn delta_dependence(loaded: &LoadedConfig, records: &[RiskRecord]) -> Outcome {
    let reps = loaded.config.experiment.as_ref().unwrap().replications;
    let ratio = quantile(records, 1024, reps, 0.01) / quantile(records, 1024, reps, 0.2);
    outcome((1.0..=20.0).contains(&ratio), format!("q(0.01)/q(0.2) at n = 1024 is {ratio:.3}"))
}

fn solver_certification() -> Outcome {
    let loaded = config("solve_d3.json");
    let report = solve_saddle(&loaded.instance.population(), &loaded.config.solver).unwrap();
    let zero = ProblemInstance::MatrixGame(
        MatrixGame::new(MatrixGameSpec::<f64>::single(4, vec![0.0; 16], 2.0, 2.0, 3.0)).unwrap(),
    );
    let z = solve_saddle(&zero.population(), &SolverConfig::default()).unwrap();
    let l1: f64 = z.solution.x.iter().chain(z.solution.y.iter()).map(|v: &f64| (v - 0.25).abs()).sum();
    let passed = report.converged && report.final_gap <= 1e-8 && report.iterations <= 10_000 && l1 <= 1e-6;
    outcome(
        passed,
        format!("gap = {:.3e} in {} iterations; zero game ℓ1 distance to uniform = {l1:.2e}", report.final_gap, report.iterations),
    )
}

fn gradient_error(inst: &Instance, x: &[f64], y: &[f64]) -> f64 {
    let obj = inst.population();
    let h = 1e-6;
    let fd = |block: usize, i: usize| {
        let (mut xp, mut xm, mut yp, mut ym) = (x.to_vec(), x.to_vec(), y.to_vec(), y.to_vec());
        if block == 0 {
            xp[i] += h;
            xm[i] -= h;
        } else {
            yp[i] += h;
            ym[i] -= h;
        }
        (obj.value(&xp, &yp).unwrap() - obj.value(&xm, &ym).unwrap()) / (2.0 * h)
    };
    let gx = obj.grad_x(x, y).unwrap();
    let gy = obj.grad_y(x, y).unwrap();
    let rel = |g: &[f64], block: usize| {
        let num: f64 = g.iter().enumerate().map(|(i, v)| (v - fd(block, i)).powi(2)).sum::<f64>().sqrt();
        let den = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        num / den
    };
    rel(&gx, 0).max(rel(&gy, 1))
}

fn gradient_checks(instances: &[(&str, LoadedConfig)]) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut stream = ssp_core::rng::stream(99);
    for (_, loaded) in instances {
        for _ in 0..200 {
            let (x, y) = loaded.instance.sample_pair(&mut stream);
            worst = worst.max(gradient_error(&loaded.instance, &x, &y));
        }
    }
    outcome(worst <= 1e-5, format!("worst relative error {worst:.2e} over {} instances × 200 points", instances.len()))
}

fn constants(instances: &[(&str, LoadedConfig)]) -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, loaded) in instances {
        let ProblemInstance::MatrixGame(game) = &loaded.instance else { continue };
        let s = game.spec();
        let c = loaded.instance.constants();
        let exact = c.sigma_x == s.lambda_x
            && c.sigma_y == s.lambda_y
            && c.l_x == s.lambda_x * (s.truncation_l + 1.0) + 1.0
            && c.l_y == s.lambda_y * (s.truncation_l + 1.0) + 1.0
            && c.l_xy == 1.0;
        if loaded.instance.dim() < 2 {
            ok &= exact;
            continue;
        }
        let report = verify_assumptions(&loaded.instance, 1000, 1).unwrap();
        let contradicted: Vec<_> =
            report.checks.iter().filter(|k| k.name != "assumption4" && !k.consistent).map(|k| k.name.clone()).collect();
        ok &= exact && contradicted.is_empty();
        if !contradicted.is_empty() {
            notes.push(format!("{name}: {contradicted:?}"));
        }
    }
    outcome(ok, if notes.is_empty() { "all matrix-game instances consistent".into() } else { notes.join("; ") })
}

fn localization(instances: &[(&str, LoadedConfig)]) -> Outcome {
    let mut worst = f64::INFINITY;
    let mut checked = Vec::new();
    for (name, loaded) in instances {
        if !loaded.instance.constants().assumption4_holds {
            continue;
        }
        let r = check_localization(&loaded.instance, 1000, 21, DEFAULT_ALLOWANCE).unwrap();
        worst = worst.min(r.worst_slack);
        checked.push(*name);
    }
    outcome(worst >= -1e-6 && !checked.is_empty(), format!("worst slack {worst:.3e} on {checked:?}"))
}

fn symmetrization() -> Outcome {
    let loaded = config("shifted_d2.json");
    let mut worst = f64::INFINITY;
    let mut failed = 0;
    for r in 0..100 {
        let rep = check_lemma41_chain(&loaded.instance, 16, ssp_core::rng::derive_seed(41, &[r]), &loaded.config.solver, 1e-6)
            .unwrap();
        worst = worst.min(rep.slack);
        failed += usize::from(!rep.passed);
    }
    outcome(failed == 0, format!("worst slack {worst:.3e}, {failed} of 100 replications below allowance"))
}

fn exp_moment() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["shifted_d1.json", "shifted_d2.json"] {
        let loaded = config(name);
        let cfg = loaded.config.shifted.clone().unwrap();
        assert_eq!(cfg.draws, 500);
        let r = exp_moment_check(&loaded.instance, &cfg, 4).unwrap();
        ok &= r.passed;
        parts.push(format!("d = {}: log estimate {:.3e} ≤ {:.1}", r.d, r.log_mc_estimate, r.log_paper_bound));
        if loaded.instance.dim() == 2 {
            let refine = grid_refinement_check(&loaded.instance, &cfg, 1e-3).unwrap();
            ok &= refine.passed;
            parts.push(format!("refinement change {:.2e}", refine.difference));
        }
    }
    outcome(ok, parts.join("; "))
}

fn determinism(loaded: &LoadedConfig, reference: &str) -> Outcome {
    let same = [4, 8].iter().all(|&t| records_csv(&experiment(loaded, t).records) == reference);
    outcome(same, format!("CSV of {} bytes identical for 1, 4 and 8 threads", reference.len()))
}

fn auc_decay() -> Outcome {
    let loaded = config("auc_rate.json");
    let out = experiment(&loaded, 8);
    let reps = loaded.config.experiment.as_ref().unwrap().replications;
    let (q128, q2048) = (quantile(&out.records, 128, reps, 0.05), quantile(&out.records, 2048, reps, 0.05));
    outcome(q2048 <= q128 / 8.0, format!("q(2048)/q(128) = {:.4}", q2048 / q128))
}

fn main() {
    let instances = shipped();
    let rate = config("rate_matrix_game.json");
    let base = experiment(&rate, 1);
    let reference = records_csv(&base.records);

    let results = [
        ("rate reproduction", rate_reproduction(&rate, &base.records)),
        ("delta dependence", delta_dependence(&rate, &base.records)),
        ("solver certification", solver_certification()),
        ("gradient checks", gradient_checks(&instances)),
        ("theoretical constants", constants(&instances)),
        ("localization inequalities", localization(&instances)),
        ("symmetrization chain", symmetrization()),
        ("exponential moment", exp_moment()),
        ("determinism", determinism(&rate, &reference)),
        ("AUC decay", auc_decay()),
    ];
    for (i, (name, o)) in results.iter().enumerate() {
        println!("criterion {:>2} {} {name}: {}", i + 1, if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed: Vec<_> = results.iter().enumerate().filter(|(_, (_, o))| !o.passed).map(|(i, _)| i + 1).collect();
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
