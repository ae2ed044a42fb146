//! Exact Bayesian filtering over the POMDP state.

use crate::error::{Error, Result};
use crate::model::kernel::Kernel;
use crate::model::state::{StateSpace, SystemState};
use crate::scalar::Scalar;

/// Probability over active states plus the absorbed (exit) mass.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief<T> {
    pub probs: Vec<T>,
    pub exit: T,
}

impl<T: Scalar> Belief<T> {
    pub fn point(states: usize, u: usize) -> Self {
        let mut probs = vec![T::zero(); states];
        probs[u] = T::one();
        Self { probs, exit: T::zero() }
    }

    pub fn exited(states: usize) -> Self {
        Self { probs: vec![T::zero(); states], exit: T::one() }
    }

    /// MU in the first sector, served by BS 1, both links in LOS.
    pub fn initial(space: &StateSpace) -> Self {
        let start = SystemState::Active { sector: 0, serving: 0, blockage: [1, 1] };
        Self::point(space.num_active(), space.index(start))
    }

    /// Normalizes arbitrary nonnegative weights over active states.
    pub fn from_weights(weights: Vec<T>) -> Option<Self> {
        let total: T = weights.iter().copied().sum();
        if !(total > T::zero()) {
            return None;
        }
        Some(Self { probs: weights.into_iter().map(|w| w / total).collect(), exit: T::zero() })
    }

    pub fn num_states(&self) -> usize {
        self.probs.len()
    }

    pub fn total(&self) -> T {
        self.probs.iter().copied().sum::<T>() + self.exit
    }

    pub fn is_exited(&self) -> bool {
        self.exit >= T::one()
    }

    pub fn dot(&self, alpha: &[T]) -> T {
        self.probs.iter().zip(alpha).map(|(&p, &a)| p * a).sum()
    }

    pub fn l1_distance(&self, other: &Self) -> T {
        self.probs.iter().zip(&other.probs).map(|(&a, &b)| (a - b).abs()).sum::<T>() + (self.exit - other.exit).abs()
    }

    /// Most likely active state.
    pub fn mode(&self) -> usize {
        let mut best = 0;
        for (u, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = u;
            }
        }
        best
    }

    /// `P(y | beta, a)` for every observation, exit last.
    pub fn observation_probs(&self, kernel: &Kernel<T>, a: usize) -> Vec<T> {
        let mut out = vec![T::zero(); kernel.num_observations()];
        let probe = kernel.to_probe(a, &self.probs);
        let post = kernel.post(a);
        let exit_col = kernel.exit_index();
        for (m, &w) in probe.iter().enumerate() {
            if w == T::zero() {
                continue;
            }
            let stay = w * (T::one() - post[(m, exit_col)]);
            for &y in &kernel.actions[a].support {
                out[y] = out[y] + stay * kernel.emission(a, m, y);
            }
        }
        let exit: T = self.probs.iter().zip(&kernel.actions[a].exit_prob).map(|(&p, &e)| p * e).sum();
        out[kernel.obs_exit_index()] = exit + self.exit;
        out
    }

    /// One-step prediction of the end-state marginal, without conditioning.
    pub fn predict(&self, kernel: &Kernel<T>, a: usize) -> Self {
        let mut probs = vec![T::zero(); kernel.states];
        let mut exit = self.exit;
        for (u, &p) in self.probs.iter().enumerate() {
            if p == T::zero() {
                continue;
            }
            let row = kernel.state_marginal(a, u);
            for (q, &r) in probs.iter_mut().zip(&row) {
                *q = *q + p * r;
            }
            exit = exit + p * row[kernel.exit_index()];
        }
        Self { probs, exit }
    }

    /// Bayes update after executing `a` and observing `y`.
    pub fn update(&self, kernel: &Kernel<T>, a: usize, y: usize) -> Result<Self> {
        let impossible = || Error::ImpossibleObservation { observation: format!("#{y}"), action: format!("#{a}") };
        if y == kernel.obs_exit_index() {
            let mass: T =
                self.exit + self.probs.iter().zip(&kernel.actions[a].exit_prob).map(|(&p, &e)| p * e).sum::<T>();
            return if mass > T::zero() { Ok(Self::exited(kernel.states)) } else { Err(impossible()) };
        }
        if y > kernel.obs_exit_index() {
            return Err(impossible());
        }
        Self::from_weights(kernel.forward(a, &self.probs, y)).ok_or_else(impossible)
    }
}
