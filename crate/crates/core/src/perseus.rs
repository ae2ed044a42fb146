//! Point-based value iteration with randomized backups (PERSEUS), belief-set
//! expansion by stochastic simulation with exploratory actions, and policy
//! persistence.
//!
//! Values are undiscounted expected Lagrangian totals up to the exit, which is
//! absorbing and worth zero. Alpha vectors therefore only store the active
//! states.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::belief::Belief;
use crate::error::{Error, Result};
use crate::model::action::ActionSpec;
use crate::model::kernel::Kernel;
use crate::model::Model;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaVector<T> {
    pub values: Vec<T>,
    pub action: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaVectorSet<T> {
    pub vectors: Vec<AlphaVector<T>>,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefSet<T> {
    pub beliefs: Vec<Belief<T>>,
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for (k, slot) in acc.iter_mut().enumerate() {
            *slot = *slot + a[4 * i + k] * b[4 * i + k];
        }
    }
    let mut tail = T::zero();
    for i in 4 * chunks..a.len() {
        tail = tail + a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

impl<T: Scalar> AlphaVectorSet<T> {
    /// `Q_0`: a single zero hyperplane tied to `action`.
    pub fn zero(states: usize, action: usize) -> Self {
        Self { vectors: vec![AlphaVector { values: vec![T::zero(); states], action }], iteration: 0 }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Index and value of the maximizing hyperplane; ties go to the lowest index.
    pub fn best(&self, belief: &Belief<T>) -> (usize, T) {
        let mut best = (0, T::neg_infinity());
        for (i, alpha) in self.vectors.iter().enumerate() {
            let v = dot(&belief.probs, &alpha.values);
            if v > best.1 {
                best = (i, v);
            }
        }
        best
    }

    pub fn value(&self, belief: &Belief<T>) -> T {
        self.best(belief).1
    }

    /// Greedy action at `belief`.
    pub fn extract_action(&self, belief: &Belief<T>) -> usize {
        self.vectors[self.best(belief).0].action
    }
}

impl<T: Scalar> BeliefSet<T> {
    pub fn new(beliefs: Vec<Belief<T>>) -> Self {
        let mut set = Self { beliefs: Vec::with_capacity(beliefs.len()) };
        for b in beliefs {
            set.insert(b);
        }
        set
    }

    pub fn len(&self) -> usize {
        self.beliefs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beliefs.is_empty()
    }

    /// Adds `belief` unless an identical one is present.
    pub fn insert(&mut self, belief: Belief<T>) -> bool {
        if self.beliefs.contains(&belief) {
            return false;
        }
        self.beliefs.push(belief);
        true
    }

    /// L1 distance from `belief` to its nearest member.
    pub fn nearest_distance(&self, belief: &Belief<T>) -> T {
        self.beliefs.iter().map(|b| b.l1_distance(belief)).fold(T::infinity(), T::min)
    }

    /// Initial belief followed by a point mass on every active state.
    pub fn with_corners(initial: Belief<T>) -> Self {
        let n = initial.num_states();
        let mut beliefs = vec![initial];
        beliefs.extend((0..n).map(|u| Belief::point(n, u)));
        Self::new(beliefs)
    }
}

/// Per-action data that does not change across sweeps.
#[derive(Debug, Clone)]
pub struct BackupTables<T> {
    /// `emission_cols[a][j][m] = P(y_j | m, a)` for `y_j` in the support of `a`.
    emission_cols: Vec<Vec<Vec<T>>>,
    /// Distinct `(pre, post)` pairs and the pair used by each action.
    pairs: Vec<(Option<usize>, usize)>,
    pair_of: Vec<usize>,
    /// Transition indices used as `post` by some action.
    posts: Vec<usize>,
}

impl<T: Scalar> BackupTables<T> {
    pub fn new(kernel: &Kernel<T>) -> Self {
        let mut pairs = Vec::new();
        let mut pair_of = Vec::with_capacity(kernel.num_actions());
        let mut posts = Vec::new();
        let mut emission_cols = Vec::with_capacity(kernel.num_actions());
        for (a, ak) in kernel.actions.iter().enumerate() {
            let key = (ak.pre, ak.post);
            let idx = pairs.iter().position(|p| *p == key).unwrap_or_else(|| {
                pairs.push(key);
                pairs.len() - 1
            });
            pair_of.push(idx);
            if !posts.contains(&ak.post) {
                posts.push(ak.post);
            }
            emission_cols.push(
                ak.support
                    .iter()
                    .map(|&y| (0..kernel.states).map(|m| kernel.emission(a, m, y)).collect())
                    .collect(),
            );
        }
        Self { emission_cols, pairs, pair_of, posts }
    }
}

/// Backup operator against a fixed `Q_n`.
pub struct Backup<'a, T> {
    kernel: &'a Kernel<T>,
    rewards: &'a [Vec<T>],
    tables: &'a BackupTables<T>,
    alphas: &'a AlphaVectorSet<T>,
    /// `proj[p][i] = (post_p alpha_i)` over active states, indexed by transition.
    proj: Vec<Vec<Vec<T>>>,
}

impl<'a, T: Scalar> Backup<'a, T> {
    pub fn new(
        kernel: &'a Kernel<T>,
        rewards: &'a [Vec<T>],
        tables: &'a BackupTables<T>,
        alphas: &'a AlphaVectorSet<T>,
    ) -> Self {
        assert!(!alphas.is_empty(), "backup needs a non-empty alpha-vector set");
        let mut proj = vec![Vec::new(); kernel.transitions.len()];
        for &p in &tables.posts {
            let post = &kernel.transitions[p];
            proj[p] = alphas
                .vectors
                .iter()
                .map(|alpha| (0..kernel.states).map(|m| dot(&post.row(m)[..kernel.states], &alpha.values)).collect())
                .collect();
        }
        Self { kernel, rewards, tables, alphas, proj }
    }

    /// Returns the backed-up hyperplane at `belief` and its value there.
    pub fn backup(&self, belief: &Belief<T>) -> (AlphaVector<T>, T) {
        let k = self.kernel;
        let n = k.states;
        let q = self.alphas.len();
        let mut probe_cache: Vec<Option<Vec<T>>> = vec![None; k.transitions.len()];
        let mut z_cache: Vec<Option<Vec<T>>> = vec![None; self.tables.pairs.len()];
        let mut best_action = 0;
        let mut best_value = T::neg_infinity();
        let mut best_choice = Vec::new();
        let mut choice = Vec::new();
        for a in 0..k.num_actions() {
            let pair = self.tables.pair_of[a];
            if z_cache[pair].is_none() {
                let (pre, post) = self.tables.pairs[pair];
                let probe = match pre {
                    None => belief.probs.clone(),
                    Some(p) => probe_cache[p].get_or_insert_with(|| k.to_probe(a, &belief.probs)).clone(),
                };
                let mut z = Vec::with_capacity(q * n);
                for proj in &self.proj[post] {
                    z.extend(probe.iter().zip(proj).map(|(&w, &g)| w * g));
                }
                z_cache[pair] = Some(z);
            }
            let z = z_cache[pair].as_ref().expect("filled above");
            let mut value = dot(&belief.probs, &self.rewards[a]);
            choice.clear();
            for col in &self.tables.emission_cols[a] {
                let mut arg = 0;
                let mut top = T::neg_infinity();
                for i in 0..q {
                    let s = dot(col, &z[i * n..(i + 1) * n]);
                    if s > top {
                        top = s;
                        arg = i;
                    }
                }
                value = value + top;
                choice.push(arg);
            }
            if value > best_value {
                best_value = value;
                best_action = a;
                best_choice.clone_from(&choice);
            }
        }
        let alpha = self.assemble(best_action, &best_choice);
        let value = dot(&belief.probs, &alpha.values);
        (alpha, value)
    }

    /// `L(., a) + sum_y sum_u' P(u', y | ., a) alpha_{choice[y]}(u')`.
    fn assemble(&self, a: usize, choice: &[usize]) -> AlphaVector<T> {
        let k = self.kernel;
        let n = k.states;
        let post = k.actions[a].post;
        let mut mid = vec![T::zero(); n + 1];
        for (col, &i) in self.tables.emission_cols[a].iter().zip(choice) {
            let g = &self.proj[post][i];
            for m in 0..n {
                mid[m] = mid[m] + col[m] * g[m];
            }
        }
        let future = match k.pre(a) {
            None => mid[..n].to_vec(),
            Some(pre) => {
                let mut v = pre.mul_vec(&mid);
                v.truncate(n);
                v
            }
        };
        let values = self.rewards[a].iter().zip(&future).map(|(&r, &f)| r + f).collect();
        AlphaVector { values, action: a }
    }
}

/// Statistics of one randomized sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepStats {
    pub backups: usize,
    pub improved: usize,
    pub vectors: usize,
}

/// One PERSEUS sweep. `values[i]` must be `V_n(beliefs[i])` under `q_n`.
/// Returns `Q_{n+1}`, the new values on the belief set and sweep statistics.
pub fn perseus_sweep<T: Scalar>(
    beliefs: &BeliefSet<T>,
    q_n: &AlphaVectorSet<T>,
    values: &[T],
    kernel: &Kernel<T>,
    rewards: &[Vec<T>],
    tables: &BackupTables<T>,
    rng: &mut ChaCha8Rng,
) -> (AlphaVectorSet<T>, Vec<T>, SweepStats) {
    let op = Backup::new(kernel, rewards, tables, q_n);
    let mut next: Vec<AlphaVector<T>> = Vec::new();
    let mut kept_old: Vec<usize> = Vec::new();
    let mut new_values = vec![T::neg_infinity(); beliefs.len()];
    let mut pending: Vec<usize> = (0..beliefs.len()).collect();
    let mut stats = SweepStats { backups: 0, improved: 0, vectors: 0 };
    while !pending.is_empty() {
        let pick = pending[rng.random_range(0..pending.len())];
        let belief = &beliefs.beliefs[pick];
        let (alpha, value) = op.backup(belief);
        stats.backups += 1;
        let added = if value > values[pick] {
            stats.improved += 1;
            Some(alpha)
        } else {
            let (old, _) = q_n.best(belief);
            if kept_old.contains(&old) {
                None
            } else {
                kept_old.push(old);
                Some(q_n.vectors[old].clone())
            }
        };
        if let Some(alpha) = added {
            for (b, v) in beliefs.beliefs.iter().zip(new_values.iter_mut()) {
                let x = dot(&b.probs, &alpha.values);
                if x > *v {
                    *v = x;
                }
            }
            next.push(alpha);
        }
        pending.retain(|&i| new_values[i] < values[i]);
    }
    stats.vectors = next.len();
    (AlphaVectorSet { vectors: next, iteration: q_n.iteration + 1 }, new_values, stats)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions<T> {
    /// Absolute tolerance on value changes over the belief set.
    pub tol: T,
    pub max_iters: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Solution<T> {
    pub alphas: AlphaVectorSet<T>,
    pub converged: bool,
    /// `trace[n][i]` is `V_n(beliefs[i])`, starting with `V_0`.
    pub trace: Vec<Vec<T>>,
    pub sweeps: Vec<SweepStats>,
    /// Largest point-based Bellman residual found by the final check, if one ran.
    pub residual: Option<T>,
}

/// Largest amount by which a full backup improves on the current values.
pub fn bellman_residual<T: Scalar>(
    beliefs: &BeliefSet<T>,
    alphas: &AlphaVectorSet<T>,
    values: &[T],
    kernel: &Kernel<T>,
    rewards: &[Vec<T>],
    tables: &BackupTables<T>,
) -> T {
    let op = Backup::new(kernel, rewards, tables, alphas);
    beliefs
        .beliefs
        .iter()
        .zip(values)
        .map(|(b, &v)| op.backup(b).1 - v)
        .fold(T::zero(), T::max)
}

/// Repeats sweeps from `initial` until the values on the belief set move by
/// less than `tol` and a full backup of every point confirms the fixed point,
/// or until `max_iters` sweeps have run.
pub fn solve_from<T: Scalar>(
    beliefs: &BeliefSet<T>,
    kernel: &Kernel<T>,
    rewards: &[Vec<T>],
    initial: AlphaVectorSet<T>,
    options: SolveOptions<T>,
) -> Solution<T> {
    assert!(options.tol > T::zero(), "tolerance must be positive");
    let tables = BackupTables::new(kernel);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut alphas = initial;
    let mut values: Vec<T> = beliefs.beliefs.iter().map(|b| alphas.value(b)).collect();
    let mut trace = vec![values.clone()];
    let mut sweeps = Vec::new();
    let mut converged = false;
    let mut residual = None;
    for _ in 0..options.max_iters {
        let (next, next_values, stats) = perseus_sweep(beliefs, &alphas, &values, kernel, rewards, &tables, &mut rng);
        let delta = values.iter().zip(&next_values).map(|(&a, &b)| (b - a).abs()).fold(T::zero(), T::max);
        alphas = next;
        values = next_values;
        trace.push(values.clone());
        sweeps.push(stats);
        if delta < options.tol {
            let r = bellman_residual(beliefs, &alphas, &values, kernel, rewards, &tables);
            residual = Some(r);
            if r < options.tol {
                converged = true;
                break;
            }
        }
    }
    Solution { alphas, converged, trace, sweeps, residual }
}

/// [`solve_from`] starting at the zero hyperplane tied to action 0.
pub fn solve<T: Scalar>(
    beliefs: &BeliefSet<T>,
    kernel: &Kernel<T>,
    rewards: &[Vec<T>],
    options: SolveOptions<T>,
) -> Solution<T> {
    solve_from(beliefs, kernel, rewards, AlphaVectorSet::zero(kernel.states, 0), options)
}

fn sample_index<T: Scalar>(probs: &[T], rng: &mut ChaCha8Rng) -> usize {
    let total: T = probs.iter().copied().sum();
    let u = T::lit(rng.random::<f64>()) * total;
    let mut acc = T::zero();
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > T::zero() {
            acc = acc + p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Grows `beliefs` towards `target` points. Every round simulates one step
/// from each member under every action, sampling the observation, and adds
/// the candidate farthest (L1) from the current set. Candidates that exit are
/// skipped. Stops early when a round adds nothing.
pub fn expand_beliefs<T: Scalar>(
    beliefs: &BeliefSet<T>,
    kernel: &Kernel<T>,
    target: usize,
    rng: &mut ChaCha8Rng,
) -> BeliefSet<T> {
    let mut out = beliefs.clone();
    while out.len() < target {
        let mut added = false;
        let round = out.len();
        for i in 0..round {
            if out.len() >= target {
                break;
            }
            let origin = out.beliefs[i].clone();
            if origin.is_exited() {
                continue;
            }
            let mut best: Option<(T, Belief<T>)> = None;
            for a in 0..kernel.num_actions() {
                let probs = origin.observation_probs(kernel, a);
                let y = sample_index(&probs, rng);
                if y == kernel.obs_exit_index() {
                    continue;
                }
                let Ok(candidate) = origin.update(kernel, a, y) else { continue };
                let d = out.nearest_distance(&candidate);
                if best.as_ref().is_none_or(|(bd, _)| d > *bd) {
                    best = Some((d, candidate));
                }
            }
            if let Some((d, candidate)) = best {
                if d > T::zero() && out.insert(candidate) {
                    added = true;
                }
            }
        }
        if !added {
            break;
        }
    }
    out
}

/// Belief set for `model`: the initial belief, every active-state corner, then
/// expansion up to `belief_set_size` points.
pub fn model_belief_set<T: Scalar>(model: &Model<T>) -> BeliefSet<T> {
    let seed = BeliefSet::with_corners(Belief::initial(&model.space));
    let mut rng = ChaCha8Rng::seed_from_u64(model.cfg.seed);
    rng.set_stream(1);
    expand_beliefs(&seed, &model.kernel, model.cfg.belief_set_size, &mut rng)
}

/// Solves `model` at Lagrange multiplier `lambda` (Mbit/J) on `beliefs`.
pub fn solve_model<T: Scalar>(model: &Model<T>, lambda: f64, beliefs: &BeliefSet<T>) -> Solution<T> {
    let rewards = model.lagrangian_table(lambda);
    let options = SolveOptions {
        tol: T::lit(model.cfg.solver_tol) * model.max_slot_reward(),
        max_iters: model.cfg.max_iters,
        seed: model.cfg.seed,
    };
    solve(beliefs, &model.kernel, &rewards, options)
}

/// On-disk policy: hyperplanes with their action descriptors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    pub states: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
    pub actions: Vec<ActionSpec>,
    pub iteration: usize,
    pub lambda: f64,
    pub config_hash: String,
    pub seed: u64,
    pub converged: bool,
}

impl PolicyFile {
    pub fn from_solution<T: Scalar>(model: &Model<T>, lambda: f64, solution: &Solution<T>) -> Self {
        let alphas = &solution.alphas;
        Self {
            states: model.space.labels()[..model.space.num_active()].to_vec(),
            vectors: alphas.vectors.iter().map(|a| a.values.iter().map(|v| v.as_f64()).collect()).collect(),
            actions: alphas.vectors.iter().map(|a| model.catalog.actions[a.action].clone()).collect(),
            iteration: alphas.iteration,
            lambda,
            config_hash: model.cfg.config_hash(),
            seed: model.cfg.seed,
            converged: solution.converged,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Rebuilds the hyperplanes against `model`, refusing files produced for
    /// a different model.
    pub fn to_alphas<T: Scalar>(&self, model: &Model<T>) -> Result<AlphaVectorSet<T>> {
        let expected = model.cfg.config_hash();
        if self.config_hash != expected {
            return Err(Error::ConfigHashMismatch { expected, found: self.config_hash.clone() });
        }
        if self.vectors.len() != self.actions.len() || self.vectors.is_empty() {
            return Err(Error::PolicyFile("vector and action lists must be non-empty and of equal length".into()));
        }
        let n = model.space.num_active();
        let mut vectors = Vec::with_capacity(self.vectors.len());
        for (values, spec) in self.vectors.iter().zip(&self.actions) {
            if values.len() != n {
                return Err(Error::PolicyFile(format!("vector has {} entries, expected {n}", values.len())));
            }
            let action = model
                .catalog
                .position(spec)
                .ok_or_else(|| Error::PolicyFile(format!("action {spec} is not in the catalog")))?;
            vectors.push(AlphaVector { values: values.iter().map(|&v| T::lit(v)).collect(), action });
        }
        Ok(AlphaVectorSet { vectors, iteration: self.iteration })
    }
}

/// On-disk belief set, as produced by [`model_belief_set`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefSetFile {
    pub states: Vec<String>,
    pub beliefs: Vec<Vec<f64>>,
    pub config_hash: String,
    pub seed: u64,
}

impl BeliefSetFile {
    pub fn from_set<T: Scalar>(model: &Model<T>, set: &BeliefSet<T>) -> Self {
        Self {
            states: model.space.labels()[..model.space.num_active()].to_vec(),
            beliefs: set.beliefs.iter().map(|b| b.probs.iter().map(|p| p.as_f64()).collect()).collect(),
            config_hash: model.cfg.config_hash(),
            seed: model.cfg.seed,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn to_set<T: Scalar>(&self, model: &Model<T>) -> Result<BeliefSet<T>> {
        let expected = model.cfg.config_hash();
        if self.config_hash != expected {
            return Err(Error::ConfigHashMismatch { expected, found: self.config_hash.clone() });
        }
        let n = model.space.num_active();
        let mut beliefs = Vec::with_capacity(self.beliefs.len());
        for probs in &self.beliefs {
            if probs.len() != n || probs.iter().any(|p| !(*p >= 0.0)) {
                return Err(Error::PolicyFile(format!("belief must have {n} nonnegative entries")));
            }
            let b = Belief::from_weights(probs.iter().map(|&p| T::lit(p)).collect())
                .ok_or_else(|| Error::PolicyFile("belief with zero mass".into()))?;
            beliefs.push(b);
        }
        if beliefs.is_empty() {
            return Err(Error::PolicyFile("empty belief set".into()));
        }
        Ok(BeliefSet::new(beliefs))
    }
}

#[cfg(test)]
mod tests;
