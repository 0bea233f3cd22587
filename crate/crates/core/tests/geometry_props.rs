use proptest::prelude::*;
use ssp_core::problems::{MatrixGame, MatrixGameSpec, RandomGame};
use ssp_core::{rng, Geometry, ProblemInstance, SaddleObjective};

fn geometry() -> impl Strategy<Value = Geometry> {
    prop_oneof![
        (1usize..6, 0.1f64..5.0).prop_map(|(d, r)| Geometry::euclidean_ball(d, r).unwrap()),
        (2usize..7, 0.05f64..3.0).prop_map(|(d, extra)| Geometry::truncated_simplex(d, (d as f64).ln() + extra).unwrap()),
        (1usize..4, 0.1f64..2.0, 1usize..3, 0.1f64..3.0)
            .prop_map(|(d, r, k, c)| Geometry::ball_box(d, r, k, c).unwrap()),
    ]
}

fn with_vector() -> impl Strategy<Value = (Geometry, Vec<f64>, u64)> {
    geometry().prop_flat_map(|g| {
        let d = g.dim();
        (Just(g), prop::collection::vec(-10.0f64..10.0, d), any::<u64>())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn projection_is_idempotent((g, v, _) in with_vector()) {
        let p = g.project(&v).unwrap();
        prop_assert!(g.contains(&p));
        let q = g.project(&p).unwrap();
        for (a, b) in p.iter().zip(q.iter()) {
            prop_assert!((a - b).abs() <= 1e-12, "{p:?} vs {q:?}");
        }
    }

    #[test]
    fn projection_is_nearest((g, v, seed) in with_vector()) {
        let p = g.project(&v).unwrap();
        let z = g.sample_point(&mut rng::stream(seed));
        let dist = |a: &[f64]| a.iter().zip(&v).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        prop_assert!(dist(&p) <= dist(&z) + 1e-10);
    }

    #[test]
    fn prox_step_stays_feasible((g, grad, seed) in with_vector(), eta in 1e-3f64..10.0) {
        let x = g.sample_point(&mut rng::stream(seed));
        let next = g.prox_step(&x, &grad, eta).unwrap();
        prop_assert!(g.contains(&next), "{next:?}");
    }

    #[test]
    fn holder_inequality((g, u, seed) in with_vector()) {
        let mut stream = rng::stream(seed);
        let v: Vec<f64> = g.sample_point(&mut stream).iter().zip(g.sample_point(&mut stream).iter()).map(|(a, b)| a - b).collect();
        let inner: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
        prop_assert!(inner.abs() <= g.dual_norm(&u).unwrap() * g.norm(&v).unwrap() + 1e-10);
    }

    #[test]
    fn zero_gradient_is_fixed((g, _, seed) in with_vector()) {
        let x = g.sample_point(&mut rng::stream(seed));
        let next = g.prox_step(&x, &vec![0.0; g.dim()], 0.5).unwrap();
        for (a, b) in x.iter().zip(next.iter()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}

fn game(d: usize, atoms: usize, seed: u64) -> ProblemInstance<f64> {
    let recipe = RandomGame { atoms, base_scale: 0.5, perturbation: 0.5, seed };
    ProblemInstance::MatrixGame(MatrixGame::new(MatrixGameSpec::random(d, recipe, 2.0, 2.0, 3.0).unwrap()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn population_is_probability_weighted(d in 2usize..6, atoms in 1usize..5, seed in any::<u64>()) {
        let inst = game(d, atoms, seed);
        let (x, y) = inst.sample_pair(&mut rng::stream(seed ^ 1));
        let direct: f64 = (0..atoms).map(|k| inst.probabilities()[k] * inst.loss(&x, &y, k).unwrap()).sum();
        let pop = inst.population_loss(&x, &y).unwrap();
        prop_assert!((pop - direct).abs() <= 1e-12 * direct.abs().max(1.0));
        let (gx, gy) = inst.population_grads(&x, &y).unwrap();
        let obj = inst.population();
        prop_assert_eq!(gx, obj.grad_x(&x, &y).unwrap());
        prop_assert_eq!(gy, obj.grad_y(&x, &y).unwrap());
    }

    #[test]
    fn bilinear_part_is_bounded(d in 2usize..6, seed in any::<u64>()) {
        let recipe = RandomGame { atoms: 3, base_scale: 0.5, perturbation: 0.5, seed };
        let spec = MatrixGameSpec::<f64>::random(d, recipe, 0.0, 0.0, 3.0).unwrap();
        let inst = ProblemInstance::MatrixGame(MatrixGame::new(spec).unwrap());
        let (x, y) = inst.sample_pair(&mut rng::stream(seed));
        for k in 0..3 {
            prop_assert!(inst.loss(&x, &y, k).unwrap().abs() <= 1.0 + 1e-12);
        }
    }
}
