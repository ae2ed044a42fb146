use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::belief::Belief;
use crate::blockage::LOS;
use crate::error::{Error, Result};
use crate::geometry::outage_prob;
use crate::model::action::{ActionClass, ActionSpec};
use crate::model::kernel::Kernel;
use crate::model::state::{Observation, SystemState};
use crate::model::Model;
use crate::perseus::AlphaVectorSet;
use crate::policies::FsmPolicy;

/// What drives the decisions of an episode.
#[derive(Debug, Clone)]
pub enum PolicySpec {
    /// Greedy with respect to solved hyperplanes over the model catalog.
    Perseus(AlphaVectorSet<f64>),
    Fsm(FsmPolicy),
    /// Transmits every slot on the true sector through any BS in LOS.
    Genie { power_dbm: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    pub episodes: usize,
    pub seed: u64,
    /// Maintain the Bayesian belief even when the policy does not need it.
    pub track_belief: bool,
    /// Keep the per-epoch log in every record.
    pub keep_log: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub slot: u64,
    pub state: String,
    /// Most likely state and its probability under the belief, when tracked.
    pub belief_mode: Option<String>,
    pub belief_mass: Option<f64>,
    pub action: String,
    pub observation: String,
    pub bits: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub epochs: Vec<EpochLog>,
    pub decisions: usize,
    pub bits: f64,
    pub energy: f64,
    pub slots: u64,
}

#[derive(Debug, Clone, Copy)]
struct Truth {
    sector: usize,
    serving: usize,
    blockage: [usize; 2],
}

impl Truth {
    fn state(&self) -> SystemState {
        SystemState::Active { sector: self.sector, serving: self.serving, blockage: self.blockage }
    }

    fn serving_los(&self) -> bool {
        self.blockage[self.serving] == LOS
    }
}

/// Per-action constants used slot by slot.
#[derive(Debug, Clone)]
struct Plan {
    spec: ActionSpec,
    slot_energy: f64,
    success: f64,
    /// Per-slot success when the link is misaligned or blocked (side-lobe SNR).
    sidelobe_success: f64,
    bits_per_success: f64,
    eta: f64,
}

/// A policy prepared against one model.
#[derive(Debug, Clone)]
pub struct Controller<'m> {
    model: &'m Model<f64>,
    policy: PolicySpec,
    plans: Vec<Plan>,
    kernel: Option<Kernel<f64>>,
    /// Sparse mobility rows `(next, cumulative probability)`, self-loop first.
    mobility: Vec<Vec<(usize, f64)>>,
}

impl<'m> Controller<'m> {
    /// `track_belief` builds the kernel the belief filter needs; PERSEUS always tracks.
    pub fn new(model: &'m Model<f64>, policy: PolicySpec, track_belief: bool) -> Result<Self> {
        let cfg = &model.cfg;
        let actions = match &policy {
            PolicySpec::Perseus(alphas) => {
                if alphas.vectors.iter().any(|a| a.action >= model.num_actions()) {
                    return Err(Error::PolicyFile("hyperplane action outside the catalog".into()));
                }
                model.catalog.actions.clone()
            }
            PolicySpec::Fsm(fsm) => fsm.actions(),
            PolicySpec::Genie { power_dbm } => {
                vec![ActionSpec::data_transmission(0, 2, *power_dbm, model.budget.gamma)]
            }
        };
        let kernel = match &policy {
            PolicySpec::Perseus(_) => Some(model.kernel.clone()),
            PolicySpec::Fsm(_) if track_belief => Some(model.kernel_for(&actions)?),
            _ => None,
        };
        let plans = actions
            .into_iter()
            .map(|spec| {
                let rate = model.optimal_rate(spec.snr);
                let eta = match spec.class {
                    ActionClass::BeamTraining => model.feedback.bt_eta(spec.snr),
                    ActionClass::DataTransmission => model.feedback.dt_eta(spec.snr),
                    ActionClass::Handover => 0.0,
                };
                Plan {
                    slot_energy: cfg.slot_duration * spec.power_watt,
                    success: 1.0 - rate.epsilon,
                    sidelobe_success: 1.0
                        - outage_prob(rate.rate, cfg.sidelobe_ratio * spec.snr, cfg.bandwidth),
                    bits_per_success: cfg.slot_duration * (1.0 - cfg.pilot_fraction) * rate.rate,
                    eta,
                    spec,
                }
            })
            .collect();
        let s = model.space.sectors;
        let mobility = (0..s)
            .map(|from| {
                let row = model.mobility.matrix.row(from);
                let mut order: Vec<usize> = std::iter::once(from).chain((0..=s).filter(|&j| j != from)).collect();
                order.retain(|&j| row[j] > 0.0);
                let mut acc = 0.0;
                order
                    .into_iter()
                    .map(|j| {
                        acc += row[j];
                        (j, acc)
                    })
                    .collect()
            })
            .collect();
        Ok(Self { model, policy, plans, kernel, mobility })
    }

    pub fn policy(&self) -> &PolicySpec {
        &self.policy
    }

    fn tracks_belief(&self) -> bool {
        self.kernel.is_some()
    }

    /// Advances the truth by one slot; returns `true` when the MU leaves.
    fn step(&self, truth: &mut Truth, rng: &mut ChaCha8Rng) -> bool {
        let row = &self.mobility[truth.sector];
        let u: f64 = rng.random();
        let mut next = row.last().map(|&(j, _)| j).unwrap_or(truth.sector);
        for &(j, c) in row {
            if u < c {
                next = j;
                break;
            }
        }
        for bs in 0..2 {
            truth.blockage[bs] = self.model.blockage[bs].sample_step(truth.blockage[bs], rng);
        }
        if next == self.model.space.sectors {
            return true;
        }
        truth.sector = next;
        false
    }

    /// Runs one action on the truth. Returns the observation, bits, energy and slots used.
    fn execute(&self, plan: &Plan, truth: &mut Truth, rng: &mut ChaCha8Rng) -> (Observation, f64, f64, u64) {
        let spec = &plan.spec;
        let fb = &self.model.feedback;
        let mut bits = 0.0;
        let mut energy = 0.0;
        match spec.class {
            ActionClass::Handover => {
                for t in 0..spec.duration as u64 {
                    if self.step(truth, rng) {
                        return (Observation::Exit, 0.0, 0.0, t + 1);
                    }
                }
                truth.serving = 1 - truth.serving;
                (Observation::Nothing, 0.0, 0.0, spec.duration as u64)
            }
            ActionClass::BeamTraining => {
                let mut best: Option<(f64, usize)> = None;
                for (t, &beam) in spec.sectors.iter().enumerate() {
                    let mean = fb.beacon_mean(&truth.state(), beam, spec.snr);
                    let z = -mean * (1.0 - rng.random::<f64>()).ln();
                    if best.is_none_or(|(m, _)| z > m) {
                        best = Some((z, beam));
                    }
                    energy += plan.slot_energy;
                    if self.step(truth, rng) {
                        return (Observation::Exit, 0.0, energy, t as u64 + 1);
                    }
                }
                if self.step(truth, rng) {
                    return (Observation::Exit, 0.0, energy, spec.duration as u64);
                }
                let obs = match best {
                    Some((z, beam)) if z > plan.eta => Observation::Sector(beam),
                    _ => Observation::Nothing,
                };
                (obs, 0.0, energy, spec.duration as u64)
            }
            ActionClass::DataTransmission => {
                let beam = spec.dt_sector();
                let duration = spec.duration as u64;
                let mut ack = false;
                for t in 0..duration {
                    if t + 1 < duration {
                        energy += plan.slot_energy;
                        let aligned = truth.sector == beam && truth.serving_los();
                        let success = if aligned { plan.success } else { plan.sidelobe_success };
                        if rng.random::<f64>() < success {
                            bits += plan.bits_per_success;
                        }
                        if t + 2 == duration {
                            let gain = if aligned { 1.0 } else { self.model.cfg.sidelobe_ratio };
                            let mean = 1.0 + fb.pilot_symbols * gain * spec.snr;
                            let z = -mean * (1.0 - rng.random::<f64>()).ln();
                            ack = z > plan.eta;
                        }
                    }
                    if self.step(truth, rng) {
                        return (Observation::Exit, bits, energy, t + 1);
                    }
                }
                let obs = if ack { Observation::Sector(beam) } else { Observation::Nothing };
                (obs, bits, energy, duration)
            }
        }
    }

    fn decide(&self, belief: Option<&Belief<f64>>, last: Option<(usize, Observation)>) -> Option<usize> {
        match &self.policy {
            PolicySpec::Perseus(alphas) => Some(alphas.extract_action(belief.expect("PERSEUS tracks the belief"))),
            PolicySpec::Fsm(fsm) => match last {
                None => Some(fsm.start_index()),
                Some((i, y)) => fsm.next_index(i, y),
            },
            PolicySpec::Genie { .. } => None,
        }
    }
}

/// Simulates one episode from the initial state (first sector, BS 1, both LOS).
pub fn run_episode(controller: &Controller<'_>, episode: usize, rng: &mut ChaCha8Rng, keep_log: bool) -> Result<EpisodeRecord> {
    let model = controller.model;
    let space = model.space;
    let mut truth = Truth { sector: 0, serving: 0, blockage: [LOS, LOS] };
    let mut belief = controller.tracks_belief().then(|| Belief::initial(&space));
    let mut record = EpisodeRecord { episode, epochs: Vec::new(), decisions: 0, bits: 0.0, energy: 0.0, slots: 0 };

    if let PolicySpec::Genie { .. } = controller.policy {
        let plan = &controller.plans[0];
        loop {
            let available = truth.blockage[0] == LOS || truth.blockage[1] == LOS;
            let (mut bits, mut energy) = (0.0, 0.0);
            if available {
                energy = plan.slot_energy;
                if rng.random::<f64>() < plan.success {
                    bits = plan.bits_per_success;
                }
            }
            if keep_log {
                record.epochs.push(EpochLog {
                    slot: record.slots,
                    state: truth.state().to_string(),
                    belief_mode: None,
                    belief_mass: None,
                    action: if available { format!("GENIE[s{}]", truth.sector + 1) } else { "IDLE".into() },
                    observation: String::new(),
                    bits,
                    energy,
                });
            }
            record.bits += bits;
            record.energy += energy;
            record.slots += 1;
            record.decisions += 1;
            if controller.step(&mut truth, rng) {
                return Ok(record);
            }
        }
    }

    let mut last: Option<(usize, Observation)> = None;
    loop {
        let Some(a) = controller.decide(belief.as_ref(), last) else { return Ok(record) };
        let plan = &controller.plans[a];
        let start_state = truth.state();
        let start_slot = record.slots;
        let (obs, bits, energy, slots) = controller.execute(plan, &mut truth, rng);
        if keep_log {
            let (mode, mass) = match &belief {
                Some(b) => {
                    let m = b.mode();
                    (Some(space.state(m).to_string()), Some(b.probs[m]))
                }
                None => (None, None),
            };
            record.epochs.push(EpochLog {
                slot: start_slot,
                state: start_state.to_string(),
                belief_mode: mode,
                belief_mass: mass,
                action: plan.spec.label(),
                observation: obs.to_string(),
                bits,
                energy,
            });
        }
        record.bits += bits;
        record.energy += energy;
        record.slots += slots;
        record.decisions += 1;
        if obs == Observation::Exit {
            return Ok(record);
        }
        if let (Some(b), Some(kernel)) = (belief.as_mut(), controller.kernel.as_ref()) {
            *b = b.update(kernel, a, space.obs_index(obs)).map_err(|_| Error::ImpossibleObservation {
                observation: obs.to_string(),
                action: format!("{} (episode {episode}, slot {start_slot})", plan.spec),
            })?;
        }
        last = Some((a, obs));
    }
}

/// Per-episode generator: the run seed with the episode index as stream.
pub fn episode_rng(seed: u64, episode: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode as u64);
    rng
}

/// Runs `options.episodes` independent episodes in parallel; the output is
/// ordered by episode index and independent of the thread count.
pub fn simulate(model: &Model<f64>, policy: PolicySpec, options: SimOptions) -> Result<Vec<EpisodeRecord>> {
    let controller = Controller::new(model, policy, options.track_belief)?;
    (0..options.episodes)
        .into_par_iter()
        .map(|i| run_episode(&controller, i, &mut episode_rng(options.seed, i), options.keep_log))
        .collect()
}
