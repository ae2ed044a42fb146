//! Sector geometry, the sectored-antenna link budget, and the outage/throughput
//! formulas for Rayleigh-faded LOS links.

use crate::config::ScenarioConfig;
use crate::scalar::Scalar;

/// Partition of the covered road segment into equal-length sectors, one beam each.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorTable<T> {
    /// Angular support of each beam, radians, ordered along the road.
    pub intervals: Vec<(T, T)>,
    pub sector_length: T,
    pub road_length: T,
    pub coverage: T,
    pub distance: T,
}

impl<T: Scalar> SectorTable<T> {
    pub fn new(cfg: &ScenarioConfig) -> Self {
        let s = cfg.num_sectors;
        let d = T::lit(cfg.road_distance);
        let coverage = T::lit(cfg.coverage_angle.to_radians());
        let two = T::lit(2.0);
        let road_length = two * d * (coverage / two).tan();
        let sector_length = road_length / T::lit(s as f64);
        let edge = |k: usize| ((T::lit(k as f64) * sector_length - road_length / two) / d).atan();
        let intervals = (0..s).map(|k| (edge(k), edge(k + 1))).collect();
        Self { intervals, sector_length, road_length, coverage, distance: d }
    }

    pub fn num_sectors(&self) -> usize {
        self.intervals.len()
    }

    /// Zero-based sector containing road coordinate `x`; `None` once the MU is off the road.
    pub fn sector_of_position(&self, x: T) -> Option<usize> {
        if !(x >= T::zero()) || x >= self.road_length {
            return None;
        }
        let k = (x / self.sector_length).floor().to_usize()?;
        Some(k.min(self.num_sectors() - 1))
    }
}

/// Main-lobe SNR per transmitted watt and the quantities it is built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget<T> {
    /// SNR per watt, 1/W.
    pub gamma: T,
    pub noise_power: T,
    pub wavelength: T,
}

impl<T: Scalar> LinkBudget<T> {
    pub fn new(cfg: &ScenarioConfig, table: &SectorTable<T>) -> Self {
        let noise_power = T::lit(cfg.noise_power());
        let wavelength = T::lit(cfg.wavelength());
        let gamma = wavelength * wavelength
            / (T::lit(8.0) * T::PI() * noise_power * table.sector_length * table.distance);
        Self { gamma, noise_power, wavelength }
    }

    pub fn snr_of_power(&self, watts: T) -> T {
        self.gamma * watts
    }

    pub fn power_of_snr(&self, snr: T) -> T {
        snr / self.gamma
    }
}

/// Average receive SNR: `Gamma * P` on the main lobe with LOS, `rho * Gamma * P` otherwise.
pub fn snr<T: Scalar>(power: T, aligned: bool, los: bool, budget: &LinkBudget<T>, sidelobe: T) -> T {
    let main = budget.gamma * power;
    if aligned && los {
        main
    } else {
        sidelobe * main
    }
}

/// Outage probability of rate `rate` (bps) over Rayleigh fading with mean SNR `snr`.
pub fn outage_prob<T: Scalar>(rate: T, snr: T, bandwidth: T) -> T {
    if rate <= T::zero() {
        return T::zero();
    }
    if snr <= T::zero() {
        return T::one();
    }
    let required = (rate / bandwidth * T::LN_2()).exp_m1();
    -(-required / snr).exp_m1()
}

/// Largest rate whose outage probability is at most `eps`.
pub fn epsilon_outage_capacity<T: Scalar>(snr: T, eps: T, bandwidth: T) -> T {
    if snr <= T::zero() {
        return T::zero();
    }
    let u = -(-eps).ln_1p();
    bandwidth * (snr * u).ln_1p() / T::LN_2()
}

/// Average throughput `(1 - kappa)(1 - eps) C_eps(snr)`.
pub fn throughput<T: Scalar>(eps: T, snr: T, kappa: T, bandwidth: T) -> T {
    (T::one() - kappa) * (T::one() - eps) * epsilon_outage_capacity(snr, eps, bandwidth)
}

/// Result of maximizing throughput over the outage target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalRate<T> {
    /// Maximal average throughput, bps.
    pub throughput: T,
    /// Maximizing outage target.
    pub epsilon: T,
    /// Transmission rate `C_eps*`, bps.
    pub rate: T,
}

/// Maximizes [`throughput`] over `eps`.
///
/// With `u = -ln(1 - eps)` the derivative is proportional to
/// `snr / (1 + snr u) - ln(1 + snr u)`, strictly decreasing in `u`, so the
/// stationary point is found by bisection on its sign.
pub fn optimal_throughput<T: Scalar>(snr: T, kappa: T, bandwidth: T) -> OptimalRate<T> {
    if snr <= T::zero() {
        return OptimalRate { throughput: T::zero(), epsilon: T::lit(0.5), rate: T::zero() };
    }
    let slope = |u: T| snr / (T::one() + snr * u) - (snr * u).ln_1p();
    let mut lo = T::zero();
    // slope(hi) < 0 once ln(1 + snr hi) > 1 >= snr / (1 + snr hi)
    let mut hi = (T::lit(2.0) + T::one() / snr).max(T::one());
    while slope(hi) > T::zero() {
        hi = hi * T::lit(2.0);
    }
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid) > T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let u = (lo + hi) / T::lit(2.0);
    let epsilon = -(-u).exp_m1();
    let rate = bandwidth * (snr * u).ln_1p() / T::LN_2();
    OptimalRate { throughput: (T::one() - kappa) * (T::one() - epsilon) * rate, epsilon, rate }
}
