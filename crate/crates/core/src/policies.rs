//! Finite-state-machine policies (heuristic and periodic-BT baseline), exact
//! evaluation of such machines, and the genie-aided bound.

use nalgebra::{DMatrix, DVector};

use crate::blockage::BlockageChain;
use crate::error::{Error, Result};
use crate::geometry::optimal_throughput;
use crate::model::action::{ActionClass, ActionSpec};
use crate::model::kernel::Kernel;
use crate::model::state::{Observation, StateSpace};
use crate::model::Model;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FsmVariant {
    /// Repeats a DT block after every ACK.
    Heuristic,
    /// Retrains after every DT block regardless of the outcome.
    Baseline,
}

impl FsmVariant {
    pub fn name(self) -> &'static str {
        match self {
            FsmVariant::Heuristic => "fsm-heu",
            FsmVariant::Baseline => "baseline",
        }
    }
}

/// Next action of the machine after executing `action` and observing `y`.
/// Returns `None` once the MU has left (`y` is the exit observation).
pub fn fsm_next(
    action: &ActionSpec,
    y: Observation,
    variant: FsmVariant,
    dt_duration: u32,
    power_dbm: f64,
    gamma: f64,
    sectors: usize,
    handover_slots: u32,
) -> Option<ActionSpec> {
    let exhaustive = || ActionSpec::beam_training((0..sectors).collect(), power_dbm, gamma);
    match (action.class, y) {
        (_, Observation::Exit) => None,
        (ActionClass::BeamTraining, Observation::Sector(s)) => {
            Some(ActionSpec::data_transmission(s, dt_duration, power_dbm, gamma))
        }
        (ActionClass::BeamTraining, Observation::Nothing) => Some(ActionSpec::handover(handover_slots)),
        (ActionClass::DataTransmission, Observation::Sector(_)) => match variant {
            FsmVariant::Heuristic => Some(action.clone()),
            FsmVariant::Baseline => Some(exhaustive()),
        },
        (ActionClass::DataTransmission, Observation::Nothing) => Some(exhaustive()),
        (ActionClass::Handover, _) => Some(exhaustive()),
    }
}

/// A machine bound to one transmit power and DT length.
#[derive(Debug, Clone, PartialEq)]
pub struct FsmPolicy {
    pub variant: FsmVariant,
    pub dt_duration: u32,
    pub power_dbm: f64,
    pub gamma: f64,
    pub sectors: usize,
    pub handover_slots: u32,
}

impl FsmPolicy {
    pub fn new<T: Scalar>(model: &Model<T>, variant: FsmVariant, power_dbm: f64) -> Self {
        Self {
            variant,
            dt_duration: model.cfg.fsm_dt_duration,
            power_dbm,
            gamma: model.budget.gamma.as_f64(),
            sectors: model.space.sectors,
            handover_slots: model.cfg.handover_slots,
        }
    }

    /// Machine states: HO, exhaustive BT, then DT on every sector.
    pub fn actions(&self) -> Vec<ActionSpec> {
        let mut out = vec![
            ActionSpec::handover(self.handover_slots),
            ActionSpec::beam_training((0..self.sectors).collect(), self.power_dbm, self.gamma),
        ];
        out.extend((0..self.sectors).map(|s| ActionSpec::data_transmission(s, self.dt_duration, self.power_dbm, self.gamma)));
        out
    }

    /// Index of the episode's first action (exhaustive BT).
    pub fn start_index(&self) -> usize {
        1
    }

    pub fn next(&self, action: &ActionSpec, y: Observation) -> Option<ActionSpec> {
        fsm_next(action, y, self.variant, self.dt_duration, self.power_dbm, self.gamma, self.sectors, self.handover_slots)
    }

    /// Successor as an index into [`FsmPolicy::actions`].
    pub fn next_index(&self, index: usize, y: Observation) -> Option<usize> {
        let actions = self.actions();
        let next = self.next(&actions[index], y)?;
        Some(actions.iter().position(|a| *a == next).expect("machine is closed over its action list"))
    }
}

/// Exact values `V(u, a)` of a machine, indexed `[machine action][active state]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FsmValues {
    pub actions: Vec<ActionSpec>,
    pub values: Vec<Vec<f64>>,
    /// Relative residual of the solved system.
    pub residual: f64,
}

impl FsmValues {
    pub fn value(&self, machine_action: usize, belief: &[f64]) -> f64 {
        self.values[machine_action].iter().zip(belief).map(|(v, p)| v * p).sum()
    }
}

/// Solves `V(u,a) = L(u,a) + sum_{u',y} P(u',y|u,a) V(u', next(a,y))` with the
/// exit worth zero, by dense LU in double precision.
pub fn evaluate_fsm<T: Scalar>(model: &Model<T>, policy: &FsmPolicy, lambda: f64) -> Result<FsmValues> {
    let actions = policy.actions();
    let kernel = model.kernel_for(&actions)?;
    let lagrangian: Vec<Vec<f64>> = actions
        .iter()
        .map(|a| {
            let w = lambda * crate::model::LAMBDA_UNIT * model.energy(a).as_f64();
            model.reward_vector(a).iter().map(|r| r.as_f64() - w).collect()
        })
        .collect();
    let successors: Vec<Vec<Option<usize>>> = (0..actions.len())
        .map(|i| (0..kernel.observations).map(|y| policy.next_index(i, model.space.observation(y))).collect())
        .collect();
    evaluate_machine(&kernel, &lagrangian, &successors)
        .map(|(values, residual)| FsmValues { actions, values, residual })
}

/// Policy evaluation for a deterministic machine over a factored kernel.
/// `successors[i][y]` is the machine state after observing non-exit `y` in
/// machine state `i`.
pub fn evaluate_machine<T: Scalar>(
    kernel: &Kernel<T>,
    lagrangian: &[Vec<f64>],
    successors: &[Vec<Option<usize>>],
) -> Result<(Vec<Vec<f64>>, f64)> {
    let n = kernel.states;
    let k = successors.len();
    let dim = n * k;
    let mut a_mat = DMatrix::<f64>::identity(dim, dim);
    let mut b = DVector::<f64>::zeros(dim);
    for i in 0..k {
        for u in 0..n {
            b[i * n + u] = lagrangian[i][u];
        }
        let pre = kernel.pre(i);
        let post = kernel.post(i);
        for &y in &kernel.actions[i].support {
            let Some(j) = successors[i][y] else { continue };
            for u in 0..n {
                let row = i * n + u;
                let mut mid = vec![0.0; n];
                match pre {
                    None => mid[u] = kernel.emission(i, u, y).as_f64(),
                    Some(p) => {
                        for (m, slot) in mid.iter_mut().enumerate() {
                            *slot = p[(u, m)].as_f64() * kernel.emission(i, m, y).as_f64();
                        }
                    }
                }
                for (m, &w) in mid.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    for next in 0..n {
                        let p = w * post[(m, next)].as_f64();
                        if p != 0.0 {
                            a_mat[(row, j * n + next)] -= p;
                        }
                    }
                }
            }
        }
    }
    let lu = a_mat.clone().lu();
    let x = lu
        .solve(&b)
        .ok_or_else(|| Error::SingularSystem("the machine never reaches the exit from some state".into()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem("solution is not finite".into()));
    }
    let r = &a_mat * &x - &b;
    let scale = a_mat.row_iter().map(|row| row.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
        * x.amax()
        + b.amax();
    let residual = if scale > 0.0 { r.amax() / scale } else { 0.0 };
    if residual > 1e-8 {
        return Err(Error::SingularSystem(format!("relative residual {residual:e} after solve")));
    }
    let values = (0..k).map(|i| x.rows(i * n, n).iter().copied().collect()).collect();
    Ok((values, residual))
}

/// Genie-aided operating point: spectral efficiency (bit/s/Hz) and average power (W).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenieBound<T> {
    pub spectral_efficiency: T,
    pub power_watt: T,
}

/// Perfect alignment whenever at least one BS has LOS, no training or
/// handover overhead. `pi_b1`, `pi_b2` are the steady-state blockage probabilities.
pub fn genie_bound<T: Scalar>(snr: T, pi_b1: T, pi_b2: T, kappa: T, bandwidth: T, gamma: T) -> GenieBound<T> {
    let available = T::one() - pi_b1 * pi_b2;
    let rate = optimal_throughput(snr, kappa, bandwidth);
    GenieBound { spectral_efficiency: available * rate.throughput / bandwidth, power_watt: available * snr / gamma }
}

/// Genie bound of `model` at transmit power `power_dbm`.
pub fn model_genie_bound<T: Scalar>(model: &Model<T>, power_dbm: f64) -> Result<GenieBound<T>> {
    let snr = model.budget.snr_of_power(T::lit(crate::config::dbm_to_watt(power_dbm)));
    let pi: Vec<T> = model.blockage.iter().map(BlockageChain::steady_state).collect::<Result<_>>()?;
    Ok(genie_bound(snr, pi[0], pi[1], T::lit(model.cfg.pilot_fraction), T::lit(model.cfg.bandwidth), model.budget.gamma))
}

/// Every `(machine action, observation)` pair the machine can face, with its successor.
pub fn reachable_transitions(policy: &FsmPolicy, space: &StateSpace) -> Vec<(ActionSpec, Observation, Option<ActionSpec>)> {
    let actions = policy.actions();
    let mut seen = vec![false; actions.len()];
    let mut stack = vec![policy.start_index()];
    let mut out = Vec::new();
    while let Some(i) = stack.pop() {
        if std::mem::replace(&mut seen[i], true) {
            continue;
        }
        for y in 0..space.num_observations() {
            let obs = space.observation(y);
            let next = policy.next(&actions[i], obs);
            if let Some(n) = &next {
                let j = actions.iter().position(|a| a == n).expect("closed machine");
                stack.push(j);
            }
            out.push((actions[i].clone(), obs, next));
        }
    }
    out
}
