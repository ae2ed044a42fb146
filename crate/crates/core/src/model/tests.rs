use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::action::ActionSpec;
use super::state::SystemState;
use super::*;
use crate::blockage::BLOCKED;

fn toy_cfg(sectors: usize) -> ScenarioConfig {
    ScenarioConfig {
        num_sectors: sectors,
        power_levels: vec![-30.0, -20.0],
        dt_durations: vec![2, 3],
        symbols_per_slot: 20,
        pilot_fraction: 0.2,
        sidelobe_ratio: 0.05,
        blockage_p10: 0.2,
        blockage_p01: 0.3,
        blockage_p10_bs2: Some(0.1),
        blockage_p01_bs2: Some(0.4),
        ..Default::default()
    }
}

fn toy_chain(sectors: usize) -> MobilityChain<f64> {
    let n = sectors + 1;
    let mut rows = vec![vec![0.0; n]; n];
    for s in 0..sectors {
        rows[s][s] = 0.6;
        rows[s][s + 1] = 0.3;
        if s > 0 {
            rows[s][s - 1] = 0.1;
        } else {
            rows[s][s] += 0.1;
        }
    }
    rows[sectors][sectors] = 1.0;
    MobilityChain::from_matrix(Matrix::from_rows(&rows), 1e-4)
}

fn toy_model(sectors: usize) -> Model<f64> {
    Model::from_parts(&toy_cfg(sectors), toy_chain(sectors)).unwrap()
}

fn frozen_model() -> Model<f64> {
    let cfg = ScenarioConfig { blockage_p10: 0.0, blockage_p01: 0.0, ..toy_cfg(3) };
    Model::from_parts(&cfg, MobilityChain::from_matrix(Matrix::identity(4), 1e-4)).unwrap()
}

#[test]
fn kernel_normalized_and_exit_consistent() {
    let model = toy_model(3);
    let k = &model.kernel;
    let sp = model.space;
    for a in 0..k.num_actions() {
        for u in 0..sp.num_states() {
            let mut total = 0.0;
            let mut exit_obs = 0.0;
            for next in 0..sp.num_states() {
                for y in 0..sp.num_observations() {
                    let p = k.prob(a, u, next, y);
                    assert!(p >= 0.0);
                    total += p;
                    if y == sp.obs_exit_index() {
                        exit_obs += p;
                    }
                }
            }
            assert!((total - 1.0).abs() < 1e-9, "a={a} u={u}: {total}");
            let exit_state: f64 = (0..sp.num_observations()).map(|y| k.prob(a, u, sp.exit_index(), y)).sum();
            assert!((exit_obs - exit_state).abs() < 1e-12);
        }
        // absorbing exit
        assert_eq!(k.prob(a, sp.exit_index(), sp.exit_index(), sp.obs_exit_index()), 1.0);
    }
}

#[test]
fn handover_flips_serving_station() {
    let model = toy_model(3);
    let sp = model.space;
    let ho = model.catalog.position(&ActionSpec::handover(1)).unwrap();
    let m = model.mobility.power(1);
    let (b1, b2) = (model.blockage[0].power(1), model.blockage[1].power(1));
    for (u, st) in sp.active_states() {
        let SystemState::Active { sector, serving, blockage } = st else { unreachable!() };
        for s2 in 0..3 {
            for c1 in 0..2 {
                for c2 in 0..2 {
                    let to = sp.index(SystemState::Active { sector: s2, serving: 1 - serving, blockage: [c1, c2] });
                    let expected = m[(sector, s2)] * b1[blockage[0]][c1] * b2[blockage[1]][c2];
                    assert!((model.kernel.prob(ho, u, to, sp.nothing_index()) - expected).abs() < 1e-15);
                    let stay = sp.index(SystemState::Active { sector: s2, serving, blockage: [c1, c2] });
                    assert_eq!(model.kernel.prob(ho, u, stay, sp.nothing_index()), 0.0);
                }
            }
        }
    }
}

/// Per-slot generative simulation of one action from `start`; returns (end state, observation).
fn generative_step(model: &Model<f64>, start: SystemState, action: &ActionSpec, rng: &mut ChaCha8Rng) -> (usize, usize) {
    let sp = model.space;
    let cfg = &model.cfg;
    let SystemState::Active { mut sector, mut serving, mut blockage } = start else { unreachable!() };
    let mut exited = false;
    let mut ack = false;
    let sample_row = |row: &[f64], rng: &mut ChaCha8Rng| {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        row.len() - 1
    };
    for slot in 0..action.duration {
        if action.class == ActionClass::DataTransmission && slot + 2 == action.duration {
            let aligned = sector == action.sectors[0] && blockage[serving] == LOS;
            let gain = if aligned { 1.0 } else { cfg.sidelobe_ratio };
            let n = cfg.pilot_fraction * cfg.symbols_per_slot as f64;
            let mean = 1.0 + n * gain * action.snr;
            let z = -mean * (1.0 - rng.random::<f64>()).ln();
            ack = z > model.feedback.dt_eta(action.snr);
        }
        let next = sample_row(model.mobility.matrix.row(sector), rng);
        for bs in 0..2 {
            blockage[bs] = model.blockage[bs].sample_step(blockage[bs], rng);
        }
        if next == sp.sectors {
            exited = true;
            break;
        }
        sector = next;
    }
    if action.is_handover() {
        serving = 1 - serving;
    }
    if exited {
        return (sp.exit_index(), sp.obs_exit_index());
    }
    let y = match action.class {
        ActionClass::DataTransmission if ack => action.sectors[0],
        _ => sp.nothing_index(),
    };
    (sp.index(SystemState::Active { sector, serving, blockage }), y)
}

#[test]
fn kernel_matches_generative_simulation() {
    let model = toy_model(2);
    let sp = model.space;
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let draws = 1_000_000usize;
    let ho = ActionSpec::handover(1);
    let dt = model
        .catalog
        .actions
        .iter()
        .find(|a| a.class == ActionClass::DataTransmission && a.duration == 3 && a.sectors[0] == 1)
        .unwrap()
        .clone();
    let starts = [
        SystemState::Active { sector: 0, serving: 0, blockage: [LOS, LOS] },
        SystemState::Active { sector: 1, serving: 1, blockage: [LOS, BLOCKED] },
    ];
    for action in [&ho, &dt] {
        let a = model.catalog.position(action).unwrap();
        for start in starts {
            let u = sp.index(start);
            let mut counts = vec![0usize; sp.num_states() * sp.num_observations()];
            for _ in 0..draws {
                let (next, y) = generative_step(&model, start, action, &mut rng);
                counts[next * sp.num_observations() + y] += 1;
            }
            for next in 0..sp.num_states() {
                for y in 0..sp.num_observations() {
                    let p = model.kernel.prob(a, u, next, y);
                    let f = counts[next * sp.num_observations() + y] as f64 / draws as f64;
                    let sigma = (p * (1.0 - p) / draws as f64).sqrt().max(1.0 / draws as f64);
                    // about a hundred cells are compared: 4.5 sigma keeps the family-wise error near 1e-3
                    assert!((f - p).abs() <= 4.5 * sigma + 1e-12, "{action} from {start}: ({next},{y}) {f} vs {p}");
                }
            }
        }
    }
}

#[test]
fn bt_state_marginal_matches_generative_simulation() {
    let model = toy_model(2);
    let sp = model.space;
    let a = model.catalog.actions.iter().position(|a| a.class == ActionClass::BeamTraining).unwrap();
    let action = model.catalog.actions[a].clone();
    let start = SystemState::Active { sector: 0, serving: 0, blockage: [LOS, LOS] };
    let u = sp.index(start);
    let mut rng = ChaCha8Rng::seed_from_u64(73);
    let draws = 1_000_000usize;
    let mut counts = vec![0usize; sp.num_states()];
    for _ in 0..draws {
        counts[generative_step(&model, start, &action, &mut rng).0] += 1;
    }
    let marginal = model.kernel.state_marginal(a, u);
    for next in 0..sp.num_states() {
        let p = marginal[next];
        let f = counts[next] as f64 / draws as f64;
        let sigma = (p * (1.0 - p) / draws as f64).sqrt().max(1.0 / draws as f64);
        assert!((f - p).abs() <= 4.5 * sigma, "state {next}: {f} vs {p}");
    }
}

#[test]
fn non_dt_actions_earn_nothing() {
    let model = toy_model(3);
    for (a, action) in model.catalog.actions.iter().enumerate() {
        if action.class != ActionClass::DataTransmission {
            assert!(model.rewards[a].iter().all(|&r| r == 0.0));
        }
    }
    assert_eq!(model.energy(&ActionSpec::handover(1)), 0.0);
}

#[test]
fn frozen_dynamics_reward_counts_every_data_slot() {
    let model = frozen_model();
    let action = ActionSpec::data_transmission(1, 10, 30.0, model.budget.gamma);
    let start = SystemState::Active { sector: 1, serving: 0, blockage: [LOS, BLOCKED] };
    let per_slot = model.optimal_rate(action.snr).throughput * 1e-4;
    assert!((model.reward(&start, &action) / (9.0 * per_slot) - 1.0).abs() < 1e-12);
    let off = SystemState::Active { sector: 0, serving: 0, blockage: [LOS, LOS] };
    assert_eq!(model.reward(&off, &action), 0.0);
}

#[test]
fn reward_matches_trajectory_enumeration() {
    let model = toy_model(3);
    let sp = model.space;
    let action = ActionSpec::data_transmission(1, 3, -20.0, model.budget.gamma);
    let per_slot = model.optimal_rate(action.snr).throughput * model.cfg.slot_duration;
    let mob = &model.mobility.matrix;
    for (_, st) in sp.active_states() {
        let SystemState::Active { sector, serving, blockage } = st else { unreachable!() };
        let bm = model.blockage[serving].matrix();
        // slots 0 and 1 carry data; enumerate (z0, b0) -> (z1, b1)
        let mut expected = 0.0;
        let b0 = blockage[serving];
        if sector == 1 && b0 == LOS {
            expected += per_slot;
        }
        for z1 in 0..=3 {
            for b1 in 0..2 {
                let p = mob[(sector, z1)] * bm[b0][b1];
                if z1 == 1 && b1 == LOS {
                    expected += p * per_slot;
                }
            }
        }
        let got = model.reward(&st, &action);
        assert!((got - expected).abs() <= 1e-12 * expected.max(1.0), "{st}: {got} vs {expected}");
    }
}

#[test]
fn energy_and_lagrangian() {
    let cfg = ScenarioConfig { num_sectors: 3, ..Default::default() };
    let model = Model::<f64>::from_parts(&cfg, toy_chain(3)).unwrap();
    let dt = ActionSpec::data_transmission(0, 10, 30.0, model.budget.gamma);
    assert!((model.energy(&dt) - 9e-4).abs() < 1e-15);
    let short = ActionSpec::data_transmission(0, 2, 30.0, model.budget.gamma);
    assert!((model.energy(&short) - 1e-4).abs() < 1e-16);
    let u = SystemState::Active { sector: 0, serving: 0, blockage: [LOS, LOS] };
    assert_eq!(model.lagrangian(&u, &dt, 0.0), model.reward(&u, &dt));
    assert_eq!(model.lagrangian(&u, &ActionSpec::handover(1), 1e9), 0.0);
    let threshold = model.reward(&u, &dt) / model.energy(&dt) / LAMBDA_UNIT;
    assert!(model.lagrangian(&u, &dt, threshold * 1.001) < 0.0);
    assert!(model.lagrangian(&u, &dt, threshold * 0.999) > 0.0);
    assert_eq!(model.lagrangian(&SystemState::Exit, &dt, 0.0), 0.0);
}

#[test]
fn reward_non_increasing_in_blockage_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let p10: f64 = rng.random_range(0.0..0.3);
        let p10_hi = p10 + rng.random_range(0.0..0.3);
        let p01: f64 = rng.random_range(0.01..0.5);
        let mk = |p| {
            let cfg = ScenarioConfig { blockage_p10: p, blockage_p01: p01, blockage_p10_bs2: None, blockage_p01_bs2: None, ..toy_cfg(3) };
            Model::<f64>::from_parts(&cfg, toy_chain(3)).unwrap()
        };
        let (lo, hi) = (mk(p10), mk(p10_hi));
        for a in 0..lo.num_actions() {
            for (x, y) in lo.rewards[a].iter().zip(&hi.rewards[a]) {
                assert!(y <= &(x * (1.0 + 1e-12) + 1e-12));
            }
        }
    }
}

#[test]
fn single_precision_model_normalizes() {
    let cfg = toy_cfg(2);
    let chain32 = {
        let c = toy_chain(2);
        let rows: Vec<Vec<f32>> = (0..3).map(|i| c.matrix.row(i).iter().map(|&x| x as f32).collect()).collect();
        MobilityChain::from_matrix(Matrix::from_rows(&rows), 1e-4)
    };
    let model = Model::<f32>::from_parts(&cfg, chain32).unwrap();
    for a in 0..model.num_actions() {
        for u in 0..model.space.num_active() {
            let total: f32 = (0..model.space.num_states())
                .flat_map(|n| (0..model.space.num_observations()).map(move |y| (n, y)))
                .map(|(n, y)| model.kernel.prob(a, u, n, y))
                .sum();
            assert!((total - 1.0).abs() < 1e-5);
        }
    }
}
