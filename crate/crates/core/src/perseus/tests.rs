use super::*;
use crate::config::ScenarioConfig;
use crate::linalg::Matrix;
use crate::mobility::MobilityChain;
use crate::model::action::ActionClass;

fn toy_model() -> Model<f64> {
    let cfg = ScenarioConfig {
        num_sectors: 3,
        power_levels: vec![20.0, 30.0],
        dt_durations: vec![3, 5],
        blockage_p10: 0.05,
        blockage_p01: 0.2,
        belief_set_size: 60,
        ..Default::default()
    };
    let chain = Matrix::from_rows(&[
        vec![0.9, 0.1, 0.0, 0.0],
        vec![0.0, 0.9, 0.1, 0.0],
        vec![0.0, 0.0, 0.9, 0.1],
        vec![0.0, 0.0, 0.0, 1.0],
    ]);
    Model::from_parts(&cfg, MobilityChain::from_matrix(chain, 1e-4)).unwrap()
}

fn random_belief(n: usize, rng: &mut ChaCha8Rng) -> Belief<f64> {
    let w: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.3) { rng.random::<f64>() } else { 0.0 }).collect();
    Belief::from_weights(w).unwrap_or_else(|| Belief::point(n, rng.random_range(0..n)))
}

#[test]
fn dot_matches_naive() {
    let a: Vec<f64> = (0..13).map(|i| i as f64 * 0.5 - 2.0).collect();
    let b: Vec<f64> = (0..13).map(|i| (i as f64).sin()).collect();
    let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    assert!((dot(&a, &b) - naive).abs() < 1e-12);
}

#[test]
fn backup_from_zero_is_myopic() {
    let model = toy_model();
    let rewards = model.lagrangian_table(1.0);
    let tables = BackupTables::new(&model.kernel);
    let q0 = AlphaVectorSet::zero(model.space.num_active(), 0);
    let op = Backup::new(&model.kernel, &rewards, &tables, &q0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let b = random_belief(model.space.num_active(), &mut rng);
        let (alpha, value) = op.backup(&b);
        let myopic: Vec<f64> = rewards.iter().map(|r| b.dot(r)).collect();
        let best = myopic.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let first = myopic.iter().position(|&v| v == best).unwrap();
        assert_eq!(alpha.action, first);
        assert_eq!(alpha.values, rewards[first]);
        assert!((value - best).abs() <= 1e-10 * best.abs().max(1.0));
    }
}

#[test]
fn backup_value_is_inner_product_and_dominates() {
    let model = toy_model();
    let rewards = model.lagrangian_table(10.0);
    let beliefs = model_belief_set(&model);
    let sol = solve(&beliefs, &model.kernel, &rewards, SolveOptions { tol: 1e-3, max_iters: 15, seed: 4 });
    let tables = BackupTables::new(&model.kernel);
    let op = Backup::new(&model.kernel, &rewards, &tables, &sol.alphas);
    for b in &beliefs.beliefs {
        let (alpha, value) = op.backup(b);
        assert!((value - b.dot(&alpha.values)).abs() <= 1e-10 * value.abs().max(1.0));
        // the backed-up value can never fall below the current lower bound
        assert!(value >= sol.alphas.value(b) - 1e-9 * value.abs().max(1.0));
    }
}

#[test]
fn assembled_vector_matches_explicit_back_projection() {
    let model = toy_model();
    let rewards = model.lagrangian_table(10.0);
    let k = &model.kernel;
    let tables = BackupTables::new(k);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = model.space.num_active();
    let alphas = AlphaVectorSet {
        vectors: (0..5)
            .map(|i| AlphaVector { values: (0..n).map(|_| rng.random_range(-1e4..1e5)).collect(), action: i })
            .collect(),
        iteration: 3,
    };
    let op = Backup::new(k, &rewards, &tables, &alphas);
    for _ in 0..20 {
        let b = random_belief(n, &mut rng);
        let (alpha, _) = op.backup(&b);
        let a = alpha.action;
        // explicit oracle: for every observation pick the best vector by its back-projection
        let mut expected = rewards[a].clone();
        for &y in &k.actions[a].support {
            let gs: Vec<Vec<f64>> = alphas.vectors.iter().map(|v| k.back_project(a, y, &v.values)).collect();
            let mut best = 0;
            for (i, g) in gs.iter().enumerate() {
                if b.dot(g) > b.dot(&gs[best]) {
                    best = i;
                }
            }
            for (e, g) in expected.iter_mut().zip(&gs[best]) {
                *e += g;
            }
        }
        for (x, y) in alpha.values.iter().zip(&expected) {
            assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0), "{x} vs {y}");
        }
    }
}

#[test]
fn sweeps_improve_monotonically_and_stay_bounded() {
    let model = toy_model();
    let rewards = model.lagrangian_table(10.0);
    let beliefs = model_belief_set(&model);
    let tables = BackupTables::new(&model.kernel);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut q = AlphaVectorSet::zero(model.space.num_active(), 0);
    let mut values: Vec<f64> = beliefs.beliefs.iter().map(|b| q.value(b)).collect();
    for _ in 0..30 {
        let (next, next_values, stats) =
            perseus_sweep(&beliefs, &q, &values, &model.kernel, &rewards, &tables, &mut rng);
        assert!(next.len() <= beliefs.len());
        assert!(stats.backups <= beliefs.len());
        for (i, b) in beliefs.beliefs.iter().enumerate() {
            assert!(next_values[i] >= values[i]);
            assert_eq!(next_values[i], next.value(b));
        }
        q = next;
        values = next_values;
    }
}

#[test]
fn huge_lambda_avoids_powered_actions() {
    let model = toy_model();
    let beliefs = model_belief_set(&model);
    let sol = solve_model(&model, 1e9, &beliefs);
    assert!(sol.converged);
    for b in &beliefs.beliefs {
        assert!(sol.alphas.value(b) <= 0.0);
        let a = sol.alphas.extract_action(b);
        assert!(model.catalog.actions[a].power_dbm().is_none(), "{}", model.catalog.actions[a]);
    }
}

#[test]
fn value_trace_is_non_decreasing() {
    let model = toy_model();
    let beliefs = model_belief_set(&model);
    let sol = solve_model(&model, 10.0, &beliefs);
    for w in sol.trace.windows(2) {
        for (a, b) in w[0].iter().zip(&w[1]) {
            assert!(b >= a);
        }
    }
    assert_eq!(sol.trace.len(), sol.sweeps.len() + 1);
}

#[test]
fn extract_action_edge_cases() {
    let single = AlphaVectorSet { vectors: vec![AlphaVector { values: vec![1.0, -2.0, 3.0], action: 7 }], iteration: 1 };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        assert_eq!(single.extract_action(&random_belief(3, &mut rng)), 7);
    }
    let set = AlphaVectorSet {
        vectors: vec![
            AlphaVector { values: vec![1.0, 0.0, 0.0], action: 0 },
            AlphaVector { values: vec![0.0, 5.0, 0.0], action: 1 },
            AlphaVector { values: vec![0.0, 5.0, 1.0], action: 2 },
        ],
        iteration: 1,
    };
    assert_eq!(set.extract_action(&Belief::point(3, 0)), 0);
    assert_eq!(set.extract_action(&Belief::point(3, 1)), 1);
    assert_eq!(set.extract_action(&Belief::point(3, 2)), 2);
}

#[test]
fn expansion_respects_target_and_distinctness() {
    let model = toy_model();
    let seed = BeliefSet::with_corners(Belief::initial(&model.space));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let grown = expand_beliefs(&seed, &model.kernel, 80, &mut rng);
    assert!(grown.len() <= 80);
    assert!(grown.len() > seed.len());
    assert_eq!(&grown.beliefs[..seed.len()], &seed.beliefs[..]);
    for (i, a) in grown.beliefs.iter().enumerate() {
        assert!((a.total() - 1.0).abs() < 1e-12);
        for b in &grown.beliefs[..i] {
            assert_ne!(a, b);
        }
    }
}

#[test]
fn expansion_adds_farthest_candidate() {
    let model = toy_model();
    let k = &model.kernel;
    let seed = BeliefSet::new(vec![Belief::initial(&model.space)]);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut replay = rng.clone();
    let grown = expand_beliefs(&seed, k, 2, &mut rng);
    assert_eq!(grown.len(), 2);
    let origin = &seed.beliefs[0];
    let mut distances = Vec::new();
    for a in 0..k.num_actions() {
        let probs = origin.observation_probs(k, a);
        let y = sample_index(&probs, &mut replay);
        if y == k.obs_exit_index() {
            continue;
        }
        let c = origin.update(k, a, y).unwrap();
        distances.push(seed.nearest_distance(&c));
    }
    let added = seed.nearest_distance(&grown.beliefs[1]);
    for d in distances {
        assert!(added >= d);
    }
}

#[test]
fn expansion_stalls_without_new_beliefs() {
    // a single absorbing active state with an uninformative observation
    let kernel = Kernel::new(1, 1, vec![Matrix::identity(2)], vec![(None, vec![1.0], 0)]).unwrap();
    let seed = BeliefSet::new(vec![Belief::point(1, 0)]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert_eq!(expand_beliefs(&seed, &kernel, 10, &mut rng).len(), 1);
}

#[test]
fn policy_file_round_trip_and_guard() {
    let model = toy_model();
    let beliefs = model_belief_set(&model);
    let sol = solve_model(&model, 10.0, &beliefs);
    let file = PolicyFile::from_solution(&model, 10.0, &sol);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("policy.json");
    file.save(&path).unwrap();
    let loaded = PolicyFile::load(&path).unwrap();
    assert_eq!(loaded, file);
    let alphas: AlphaVectorSet<f64> = loaded.to_alphas(&model).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100 {
        let b = random_belief(model.space.num_active(), &mut rng);
        assert_eq!(alphas.value(&b), sol.alphas.value(&b));
        assert_eq!(alphas.extract_action(&b), sol.alphas.extract_action(&b));
    }
    let other_cfg = ScenarioConfig { sidelobe_ratio: 0.02, ..model.cfg.clone() };
    let other = Model::<f64>::from_parts(&other_cfg, model.mobility.clone()).unwrap();
    assert!(matches!(loaded.to_alphas(&other), Err(Error::ConfigHashMismatch { .. })));
}

#[test]
fn policy_vectors_carry_catalog_actions() {
    let model = toy_model();
    let beliefs = model_belief_set(&model);
    let sol = solve_model(&model, 1.0, &beliefs);
    assert!(sol.alphas.vectors.iter().any(|a| model.catalog.actions[a.action].class == ActionClass::DataTransmission));
}
