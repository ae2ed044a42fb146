//! Joint transition-observation kernel `P(u', y | u, a)` for multi-slot actions.
//!
//! Each action is stored in factored form: a transition `pre` from the decision
//! epoch to the slot whose signal produces the feedback, an emission table over
//! the state in that slot, and a transition `post` to the end of the action.
//! For BT and HO the emission is read at the epoch-start state (`pre` is the
//! identity); for DT it is read at the pilot slot `T - 2`. Whenever the end
//! state is the exit, the observation is forced to exit.
//!
//! The kernel only knows sizes: `states` active states followed by one
//! absorbing exit, and `observations` non-exit observations followed by the
//! exit observation. Small hand-built kernels are therefore just as valid as
//! the ones assembled from a scenario.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct ActionKernel<T> {
    /// Index into [`Kernel::transitions`]; `None` is the identity.
    pub pre: Option<usize>,
    pub post: usize,
    /// Row-major `states x observations` emission table over non-exit observations.
    pub emission: Vec<T>,
    /// Non-exit observations with positive probability from some state.
    pub support: Vec<usize>,
    /// `P(u' = exit | u, a)` for each active `u`.
    pub exit_prob: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel<T> {
    /// Number of active (non-exit) states.
    pub states: usize,
    /// Number of non-exit observations.
    pub observations: usize,
    /// Shared multi-slot state transition matrices over all `states + 1` states.
    pub transitions: Vec<Matrix<T>>,
    pub actions: Vec<ActionKernel<T>>,
}

impl<T: Scalar> Kernel<T> {
    /// Assembles a kernel from `(pre, emission, post)` triples, filling in the
    /// observation support and exit probabilities.
    pub fn new(
        states: usize,
        observations: usize,
        transitions: Vec<Matrix<T>>,
        factors: Vec<(Option<usize>, Vec<T>, usize)>,
    ) -> Result<Self> {
        for (i, m) in transitions.iter().enumerate() {
            if m.dim() != states + 1 {
                return Err(Error::Validation(format!("transition {i} has dimension {}, expected {}", m.dim(), states + 1)));
            }
        }
        let mut actions = Vec::with_capacity(factors.len());
        for (a, (pre, emission, post)) in factors.into_iter().enumerate() {
            if emission.len() != states * observations {
                return Err(Error::Validation(format!("emission table of action {a} has wrong size")));
            }
            if post >= transitions.len() || pre.is_some_and(|p| p >= transitions.len()) {
                return Err(Error::Validation(format!("action {a} references a missing transition")));
            }
            let support = (0..observations)
                .filter(|&y| (0..states).any(|u| emission[u * observations + y] > T::zero()))
                .collect();
            actions.push(ActionKernel { pre, post, emission, support, exit_prob: Vec::new() });
        }
        let mut kernel = Self { states, observations, transitions, actions };
        for a in 0..kernel.num_actions() {
            let exit_prob = (0..states).map(|u| kernel.state_marginal(a, u)[states]).collect();
            kernel.actions[a].exit_prob = exit_prob;
        }
        Ok(kernel)
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    /// Active states plus the exit.
    pub fn num_states(&self) -> usize {
        self.states + 1
    }

    pub fn exit_index(&self) -> usize {
        self.states
    }

    /// Non-exit observations plus the exit observation.
    pub fn num_observations(&self) -> usize {
        self.observations + 1
    }

    pub fn obs_exit_index(&self) -> usize {
        self.observations
    }

    #[inline]
    pub fn emission(&self, a: usize, m: usize, y: usize) -> T {
        self.actions[a].emission[m * self.observations + y]
    }

    pub fn pre(&self, a: usize) -> Option<&Matrix<T>> {
        self.actions[a].pre.map(|i| &self.transitions[i])
    }

    pub fn post(&self, a: usize) -> &Matrix<T> {
        &self.transitions[self.actions[a].post]
    }

    /// `P(u', y | u, a)` for arbitrary state and observation indices.
    pub fn prob(&self, a: usize, u: usize, next: usize, y: usize) -> T {
        let exit = self.exit_index();
        if u == exit {
            return if next == exit && y == self.obs_exit_index() { T::one() } else { T::zero() };
        }
        if y == self.obs_exit_index() {
            return if next == exit { self.actions[a].exit_prob[u] } else { T::zero() };
        }
        if next == exit {
            return T::zero();
        }
        let post = self.post(a);
        match self.pre(a) {
            None => self.emission(a, u, y) * post[(u, next)],
            Some(pre) => (0..self.states)
                .map(|m| pre[(u, m)] * self.emission(a, m, y) * post[(m, next)])
                .sum(),
        }
    }

    /// Row `P(. | u, a)` of the end-state marginal.
    pub fn state_marginal(&self, a: usize, u: usize) -> Vec<T> {
        let post = self.post(a);
        match self.pre(a) {
            None => post.row(u).to_vec(),
            Some(pre) => post.vec_mul(pre.row(u)),
        }
    }

    /// Weights moved to the probe slot: `w^T pre` restricted to active states.
    pub fn to_probe(&self, a: usize, weights: &[T]) -> Vec<T> {
        match self.pre(a) {
            None => weights.to_vec(),
            Some(pre) => {
                let mut padded = weights.to_vec();
                padded.push(T::zero());
                let mut v = pre.vec_mul(&padded);
                v.truncate(self.states);
                v
            }
        }
    }

    /// Unnormalized next-state weights `sum_u w(u) P(u', y | u, a)` over active `u'`
    /// for a non-exit observation `y`, given weights `w` over active states.
    pub fn forward(&self, a: usize, weights: &[T], y: usize) -> Vec<T> {
        let mut emitted: Vec<T> = self
            .to_probe(a, weights)
            .iter()
            .enumerate()
            .map(|(m, &w)| w * self.emission(a, m, y))
            .collect();
        emitted.push(T::zero());
        let mut out = self.post(a).vec_mul(&emitted);
        out.truncate(self.states);
        out
    }

    /// `g(u) = sum_{u'} P(u', y | u, a) alpha(u')` for a non-exit `y`, with the
    /// exit valued at zero.
    pub fn back_project(&self, a: usize, y: usize, alpha: &[T]) -> Vec<T> {
        let mut padded = alpha.to_vec();
        padded.push(T::zero());
        let projected = self.post(a).mul_vec(&padded);
        let emitted: Vec<T> = (0..self.states).map(|m| self.emission(a, m, y) * projected[m]).collect();
        match self.pre(a) {
            None => emitted,
            Some(pre) => {
                let mut padded = emitted;
                padded.push(T::zero());
                let mut v = pre.mul_vec(&padded);
                v.truncate(self.states);
                v
            }
        }
    }
}
