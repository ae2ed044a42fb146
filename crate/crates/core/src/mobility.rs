//! Gauss-Markov vehicle mobility and the sector-level Markov chain estimated from it.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::geometry::SectorTable;
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Hard cap on trajectory length, slots.
const MAX_TRAJECTORY_SLOTS: usize = 100_000_000;

/// Speed recursion `v_k = g v_{k-1} + (1-g) mu + sigma sqrt(1-g^2) n_k`.
#[derive(Debug, Clone, Copy)]
pub struct SpeedProcess {
    pub mean: f64,
    pub std: f64,
    pub memory: f64,
}

impl SpeedProcess {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        Self { mean: cfg.speed_mean, std: cfg.speed_std, memory: cfg.memory }
    }

    pub fn step<R: Rng + ?Sized>(&self, v: f64, rng: &mut R) -> f64 {
        let g = self.memory;
        let noise: f64 = rng.sample(StandardNormal);
        g * v + (1.0 - g) * self.mean + self.std * (1.0 - g * g).sqrt() * noise
    }
}

/// One slot of a trajectory: road coordinate (m) and speed (m/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionSample {
    pub position: f64,
    pub speed: f64,
}

/// Runs the mobility model from the road entrance until the first slot off the road.
/// The returned sequence ends with that off-road slot.
pub fn simulate_trajectory<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    table: &SectorTable<f64>,
    rng: &mut R,
) -> Vec<MotionSample> {
    let process = SpeedProcess::from_config(cfg);
    let mut out = Vec::new();
    let (mut x, mut v) = (0.0, cfg.speed_mean);
    loop {
        out.push(MotionSample { position: x, speed: v });
        if table.sector_of_position(x).is_none() || out.len() >= MAX_TRAJECTORY_SLOTS {
            return out;
        }
        let next_v = process.step(v, rng);
        x += cfg.slot_duration * v;
        v = next_v;
    }
}

/// Slot-to-slot sector transition counts; index `S` is the exit.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionCounts {
    sectors: usize,
    counts: Vec<u64>,
}

impl TransitionCounts {
    pub fn new(sectors: usize) -> Self {
        Self { sectors, counts: vec![0; (sectors + 1) * (sectors + 1)] }
    }

    pub fn record(&mut self, trajectory: &[MotionSample], table: &SectorTable<f64>) {
        let exit = self.sectors;
        let n = self.sectors + 1;
        let mut prev: Option<usize> = None;
        for sample in trajectory {
            let cur = table.sector_of_position(sample.position).unwrap_or(exit);
            if let Some(p) = prev {
                self.counts[p * n + cur] += 1;
            }
            if cur == exit {
                break;
            }
            prev = Some(cur);
        }
    }

    pub fn merge(mut self, other: &Self) -> Self {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self
    }

    pub fn count(&self, from: usize, to: usize) -> u64 {
        self.counts[from * (self.sectors + 1) + to]
    }

    /// Row-normalized maximum-likelihood chain. Unvisited sectors become self-loops.
    pub fn into_chain<T: Scalar>(&self, slot_duration: f64) -> MobilityChain<T> {
        let n = self.sectors + 1;
        let mut m = Matrix::zeros(n);
        let mut unvisited = Vec::new();
        for i in 0..self.sectors {
            let row = &self.counts[i * n..(i + 1) * n];
            let total: u64 = row.iter().sum();
            if total == 0 {
                m[(i, i)] = T::one();
                unvisited.push(i);
                continue;
            }
            for (j, &c) in row.iter().enumerate() {
                m[(i, j)] = T::lit(c as f64 / total as f64);
            }
        }
        m[(self.sectors, self.sectors)] = T::one();
        MobilityChain { matrix: m, slot_duration, unvisited }
    }
}

/// Sector Markov chain over `S` sectors plus the absorbing exit (last index).
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityChain<T> {
    pub matrix: Matrix<T>,
    pub slot_duration: f64,
    /// Sectors never visited during estimation (modelled as self-loops).
    pub unvisited: Vec<usize>,
}

impl<T: Scalar> MobilityChain<T> {
    pub fn from_matrix(matrix: Matrix<T>, slot_duration: f64) -> Self {
        Self { matrix, slot_duration, unvisited: Vec::new() }
    }

    pub fn num_sectors(&self) -> usize {
        self.matrix.dim() - 1
    }

    pub fn exit(&self) -> usize {
        self.num_sectors()
    }

    /// `P^t`.
    pub fn power(&self, t: u64) -> Matrix<T> {
        self.matrix.pow(t)
    }

    /// CSV with a header of sector labels followed by `exit`.
    pub fn to_csv(&self) -> String {
        let s = self.num_sectors();
        let mut out = String::new();
        let header: Vec<String> = (1..=s).map(|k| format!("s{k}")).chain(["exit".to_string()]).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for i in 0..=s {
            let row: Vec<String> = self.matrix.row(i).iter().map(|p| format!("{:e}", p.as_f64())).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Estimates the sector chain from `trajectories` simulated trajectories.
pub fn estimate_chain<T: Scalar>(
    trajectories: &[Vec<MotionSample>],
    table: &SectorTable<f64>,
    slot_duration: f64,
) -> Result<MobilityChain<T>> {
    if trajectories.is_empty() {
        return Err(Error::NoTrajectories);
    }
    let mut counts = TransitionCounts::new(table.num_sectors());
    for t in trajectories {
        counts.record(t, table);
    }
    Ok(counts.into_chain(slot_duration))
}

/// Simulates `cfg.mobility_trajectories` trajectories and estimates the chain,
/// streaming counts so that no trajectory is kept in memory.
pub fn estimate_from_config<T: Scalar>(cfg: &ScenarioConfig, table: &SectorTable<f64>) -> MobilityChain<T> {
    let mut counts = TransitionCounts::new(table.num_sectors());
    for i in 0..cfg.mobility_trajectories {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.mobility_seed);
        rng.set_stream(i as u64);
        let traj = simulate_trajectory(cfg, table, &mut rng);
        counts.record(&traj, table);
    }
    counts.into_chain(cfg.slot_duration)
}
