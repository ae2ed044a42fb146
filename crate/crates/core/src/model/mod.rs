//! The POMDP: states, actions, feedback, the transition-observation kernel,
//! rewards, energy costs and the Lagrangian.

pub mod action;
pub mod feedback;
pub mod kernel;
pub mod state;

use std::collections::HashMap;

use crate::blockage::{BlockageChain, LOS};
use crate::config::ScenarioConfig;
use crate::error::Result;
use crate::geometry::{optimal_throughput, LinkBudget, OptimalRate, SectorTable};
use crate::linalg::Matrix;
use crate::mobility::{estimate_from_config, MobilityChain};
use crate::scalar::Scalar;

use self::action::{ActionCatalog, ActionClass, ActionSpec};
use self::feedback::FeedbackModel;
use self::kernel::Kernel;
use self::state::{StateSpace, SystemState};

/// `lambda` is configured in Mbit/J; rewards are in bits and energy in Joules.
pub const LAMBDA_UNIT: f64 = 1e6;

#[derive(Debug, Clone)]
pub struct Model<T> {
    pub cfg: ScenarioConfig,
    pub space: StateSpace,
    pub table: SectorTable<T>,
    pub budget: LinkBudget<T>,
    pub mobility: MobilityChain<T>,
    pub blockage: [BlockageChain<T>; 2],
    pub feedback: FeedbackModel<T>,
    pub catalog: ActionCatalog,
    pub kernel: Kernel<T>,
    /// Expected bits per catalog action and active state.
    pub rewards: Vec<Vec<T>>,
    /// Energy per catalog action, Joules.
    pub energy: Vec<T>,
}

impl<T: Scalar> Model<T> {
    /// Estimates the sector chain from Gauss-Markov trajectories and assembles the model.
    pub fn build(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let table64 = SectorTable::<f64>::new(cfg);
        let mobility = estimate_from_config(cfg, &table64);
        Self::from_parts(cfg, mobility)
    }

    pub fn from_parts(cfg: &ScenarioConfig, mobility: MobilityChain<T>) -> Result<Self> {
        cfg.validate()?;
        let table = SectorTable::<T>::new(cfg);
        let budget = LinkBudget::new(cfg, &table);
        let catalog = ActionCatalog::build(cfg, budget.gamma.as_f64());
        Self::with_catalog(cfg, mobility, catalog)
    }

    pub fn with_catalog(cfg: &ScenarioConfig, mobility: MobilityChain<T>, catalog: ActionCatalog) -> Result<Self> {
        assert_eq!(mobility.num_sectors(), cfg.num_sectors, "mobility chain size must match num_sectors");
        let table = SectorTable::<T>::new(cfg);
        let budget = LinkBudget::new(cfg, &table);
        let (p10b, p01b) = cfg.blockage_bs2();
        let blockage = [
            BlockageChain::new(T::lit(cfg.blockage_p10), T::lit(cfg.blockage_p01)),
            BlockageChain::new(T::lit(p10b), T::lit(p01b)),
        ];
        let mut model = Self {
            cfg: cfg.clone(),
            space: StateSpace::new(cfg.num_sectors),
            table,
            budget,
            mobility,
            blockage,
            feedback: FeedbackModel::from_config(cfg),
            catalog: ActionCatalog { actions: Vec::new() },
            kernel: Kernel { states: 0, observations: 0, transitions: Vec::new(), actions: Vec::new() },
            rewards: Vec::new(),
            energy: Vec::new(),
        };
        model.kernel = model.kernel_for(&catalog.actions)?;
        model.rewards = catalog.actions.iter().map(|a| model.reward_vector(a)).collect();
        model.energy = catalog.actions.iter().map(|a| model.energy(a)).collect();
        model.catalog = catalog;
        Ok(model)
    }

    pub fn num_actions(&self) -> usize {
        self.catalog.len()
    }

    /// Joint state transition over `t` slots; `flip` swaps the serving BS.
    pub fn joint_transition(&self, t: u64, flip: bool) -> Matrix<T> {
        let sp = self.space;
        let m = self.mobility.power(t);
        let b = [self.blockage[0].power(t), self.blockage[1].power(t)];
        let exit_sector = sp.sectors;
        let mut out = Matrix::zeros(sp.num_states());
        for (u, state) in sp.active_states() {
            let SystemState::Active { sector, serving, blockage } = state else { unreachable!() };
            let next_serving = if flip { 1 - serving } else { serving };
            let row = out.row_mut(u);
            for s2 in 0..=exit_sector {
                let pm = m[(sector, s2)];
                if pm == T::zero() {
                    continue;
                }
                if s2 == exit_sector {
                    row[sp.exit_index()] = row[sp.exit_index()] + pm;
                    continue;
                }
                for b1 in 0..2 {
                    for b2 in 0..2 {
                        let next = SystemState::Active { sector: s2, serving: next_serving, blockage: [b1, b2] };
                        row[sp.index(next)] = pm * b[0][blockage[0]][b1] * b[1][blockage[1]][b2];
                    }
                }
            }
        }
        out[(sp.exit_index(), sp.exit_index())] = T::one();
        out
    }

    /// Builds the factored kernel for an arbitrary list of actions.
    pub fn kernel_for(&self, actions: &[ActionSpec]) -> Result<Kernel<T>> {
        let sp = self.space;
        let mut pool: Vec<Matrix<T>> = Vec::new();
        let mut index: HashMap<(u64, bool), usize> = HashMap::new();
        let mut intern = |t: u64, flip: bool, pool: &mut Vec<Matrix<T>>| -> usize {
            *index.entry((t, flip)).or_insert_with(|| {
                pool.push(self.joint_transition(t, flip));
                pool.len() - 1
            })
        };
        let width = sp.sectors + 1;
        let mut factors = Vec::with_capacity(actions.len());
        for action in actions {
            let t = action.duration as u64;
            let mut emission = vec![T::zero(); sp.num_active() * width];
            let (pre, post) = match action.class {
                ActionClass::Handover => {
                    for u in 0..sp.num_active() {
                        emission[u * width + sp.nothing_index()] = T::one();
                    }
                    (None, intern(t, true, &mut pool))
                }
                ActionClass::BeamTraining => {
                    for (u, state) in sp.active_states() {
                        let probs = self.feedback.bt_observation_probs(&sp, &state, action)?;
                        emission[u * width..(u + 1) * width].copy_from_slice(&probs[..width]);
                    }
                    (None, intern(t, false, &mut pool))
                }
                ActionClass::DataTransmission => {
                    let beam = action.dt_sector();
                    for (u, state) in sp.active_states() {
                        let ack = self.feedback.dt_ack_prob(&state, action);
                        emission[u * width + beam] = ack;
                        emission[u * width + sp.nothing_index()] = T::one() - ack;
                    }
                    let pre = (t > 2).then(|| intern(t - 2, false, &mut pool));
                    (pre, intern(2.min(t), false, &mut pool))
                }
            };
            factors.push((pre, emission, post));
        }
        Kernel::new(sp.num_active(), width, pool, factors)
    }

    pub fn optimal_rate(&self, snr: T) -> OptimalRate<T> {
        optimal_throughput(snr, T::lit(self.cfg.pilot_fraction), T::lit(self.cfg.bandwidth))
    }

    /// Expected bits delivered by `action` from `state`.
    pub fn reward(&self, state: &SystemState, action: &ActionSpec) -> T {
        match (state, action.class) {
            (SystemState::Active { .. }, ActionClass::DataTransmission) => {
                self.reward_vector(action)[self.space.index(*state)]
            }
            _ => T::zero(),
        }
    }

    /// Expected bits for every active state.
    pub fn reward_vector(&self, action: &ActionSpec) -> Vec<T> {
        let sp = self.space;
        if action.class != ActionClass::DataTransmission {
            return vec![T::zero(); sp.num_active()];
        }
        let beam = action.dt_sector();
        let per_slot = self.optimal_rate(T::lit(action.snr)).throughput * T::lit(self.cfg.slot_duration);
        // aligned[s] = sum_t P^t[s, beam] * B^t[b, LOS], accumulated per (sector, bs, b)
        let n = sp.sectors + 1;
        let mut hit = vec![[[T::zero(); 2]; 2]; sp.sectors];
        let mut m_t = Matrix::<T>::identity(n);
        for t in 0..action.duration.saturating_sub(1) as u64 {
            if t > 0 {
                m_t = m_t.matmul(&self.mobility.matrix);
            }
            let b_t = [self.blockage[0].power(t), self.blockage[1].power(t)];
            for (s, h) in hit.iter_mut().enumerate() {
                for bs in 0..2 {
                    for b in 0..2 {
                        h[bs][b] = h[bs][b] + m_t[(s, beam)] * b_t[bs][b][LOS];
                    }
                }
            }
        }
        sp.active_states()
            .map(|(_, st)| match st {
                SystemState::Active { sector, serving, blockage } => {
                    per_slot * hit[sector][serving][blockage[serving]]
                }
                SystemState::Exit => T::zero(),
            })
            .collect()
    }

    /// Transmit energy of `action`, Joules: the feedback slot is free.
    pub fn energy(&self, action: &ActionSpec) -> T {
        T::lit(self.cfg.slot_duration) * T::lit(action.snr) / self.budget.gamma * T::lit(action.powered_slots() as f64)
    }

    pub fn lagrangian(&self, state: &SystemState, action: &ActionSpec, lambda: f64) -> T {
        if matches!(state, SystemState::Exit) {
            return T::zero();
        }
        self.reward(state, action) - T::lit(lambda * LAMBDA_UNIT) * self.energy(action)
    }

    /// `L(u, a)` over active states for every catalog action.
    pub fn lagrangian_table(&self, lambda: f64) -> Vec<Vec<T>> {
        let w = T::lit(lambda * LAMBDA_UNIT);
        self.rewards
            .iter()
            .zip(&self.energy)
            .map(|(r, &e)| r.iter().map(|&x| x - w * e).collect())
            .collect()
    }

    /// Largest expected bits per slot over the catalog.
    pub fn max_slot_reward(&self) -> T {
        let best = self
            .catalog
            .actions
            .iter()
            .filter(|a| a.class == ActionClass::DataTransmission)
            .map(|a| a.snr)
            .fold(0.0, f64::max);
        self.optimal_rate(T::lit(best)).throughput * T::lit(self.cfg.slot_duration)
    }
}

#[cfg(test)]
mod tests;
