use serde::Serialize;

use crate::config::watt_to_dbm;
use crate::error::{Error, Result};
use crate::model::LAMBDA_UNIT;
use crate::sim::episode::EpisodeRecord;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959963984540054;

/// One point of a spectral-efficiency versus power curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffPoint {
    pub policy: String,
    /// Lagrange multiplier (Mbit/J) for PERSEUS, transmit power (dBm) otherwise.
    pub grid_value: f64,
    /// Average power expressed in dBm.
    pub power_dbm: f64,
    pub avg_power_w: f64,
    pub spectral_eff_bps_hz: f64,
    /// `throughput - lambda * power` in bit/s.
    pub objective: f64,
    /// 95% half-widths.
    pub ci_se: f64,
    pub ci_power: f64,
    pub episodes: usize,
    pub seed: u64,
}

/// Half-width of the 95% interval for the ratio `sum(x) / sum(d)` by the delta method.
fn ratio_ci(x: &[f64], d: &[f64], ratio: f64) -> f64 {
    let n = x.len() as f64;
    let mean_d = d.iter().sum::<f64>() / n;
    if mean_d == 0.0 {
        return 0.0;
    }
    let var = x.iter().zip(d).map(|(&xi, &di)| (xi - ratio * di).powi(2)).sum::<f64>() / (n - 1.0);
    Z95 * (var / n).sqrt() / mean_d
}

/// Little's-theorem averages over episodes: totals of bits and energy divided
/// by the total duration in seconds.
pub fn aggregate(
    records: &[EpisodeRecord],
    lambda: f64,
    bandwidth: f64,
    slot_duration: f64,
    policy: &str,
    grid_value: f64,
    seed: u64,
) -> Result<TradeoffPoint> {
    if records.len() < 2 {
        return Err(Error::Validation(format!("aggregation needs at least 2 episodes, got {}", records.len())));
    }
    let durations: Vec<f64> = records.iter().map(|r| r.slots as f64 * slot_duration).collect();
    let bits: Vec<f64> = records.iter().map(|r| r.bits).collect();
    let energy: Vec<f64> = records.iter().map(|r| r.energy).collect();
    let total_d: f64 = durations.iter().sum();
    let (throughput, power) = if total_d > 0.0 {
        (bits.iter().sum::<f64>() / total_d, energy.iter().sum::<f64>() / total_d)
    } else {
        (0.0, 0.0)
    };
    Ok(TradeoffPoint {
        policy: policy.to_string(),
        grid_value,
        power_dbm: watt_to_dbm(power),
        avg_power_w: power,
        spectral_eff_bps_hz: throughput / bandwidth,
        objective: throughput - lambda * LAMBDA_UNIT * power,
        ci_se: ratio_ci(&bits, &durations, throughput) / bandwidth,
        ci_power: ratio_ci(&energy, &durations, power),
        episodes: records.len(),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(bits: f64, energy: f64, slots: u64) -> EpisodeRecord {
        EpisodeRecord { episode: 0, epochs: Vec::new(), decisions: 1, bits, energy, slots }
    }

    #[test]
    fn zeros_and_identity() {
        let zero = aggregate(&[rec(0.0, 0.0, 0), rec(0.0, 0.0, 0)], 1.0, 1e8, 1e-4, "x", 0.0, 1).unwrap();
        assert_eq!((zero.spectral_eff_bps_hz, zero.avg_power_w, zero.objective), (0.0, 0.0, 0.0));
        let recs = [rec(1e6, 0.5, 10_000), rec(3e6, 0.2, 20_000), rec(2e5, 0.0, 5_000)];
        let p = aggregate(&recs, 2.0, 1e8, 1e-4, "x", 0.0, 1).unwrap();
        let t = 4.2e6 / 3.5;
        let w = 0.7 / 3.5;
        assert!((p.spectral_eff_bps_hz - t / 1e8).abs() < 1e-15);
        assert!((p.avg_power_w - w).abs() < 1e-15);
        assert_eq!(p.objective, p.spectral_eff_bps_hz * 1e8 - 2.0 * 1e6 * p.avg_power_w);
        assert!(aggregate(&recs[..1], 0.0, 1e8, 1e-4, "x", 0.0, 1).is_err());
    }

    #[test]
    fn doubling_the_episode_set_keeps_point_estimates() {
        let recs = vec![rec(1e6, 0.5, 10_000), rec(3e6, 0.2, 20_000), rec(2e5, 0.1, 5_000)];
        let twice: Vec<EpisodeRecord> = recs.iter().chain(&recs).cloned().collect();
        let a = aggregate(&recs, 1.0, 1e8, 1e-4, "x", 0.0, 1).unwrap();
        let b = aggregate(&twice, 1.0, 1e8, 1e-4, "x", 0.0, 1).unwrap();
        assert!((a.spectral_eff_bps_hz - b.spectral_eff_bps_hz).abs() < 1e-15 * a.spectral_eff_bps_hz);
        assert!((a.avg_power_w - b.avg_power_w).abs() < 1e-15);
        assert!(b.ci_se < a.ci_se);
    }

    #[test]
    fn interval_covers_ratio_estimator_spread() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let mut covered = 0;
        let trials = 400;
        for _ in 0..trials {
            let recs: Vec<EpisodeRecord> = (0..200)
                .map(|_| {
                    let slots = rng.random_range(5_000..20_000u64);
                    rec(slots as f64 * rng.random_range(0.0..2.0), 0.0, slots)
                })
                .collect();
            let p = aggregate(&recs, 0.0, 1.0, 1.0, "x", 0.0, 1).unwrap();
            if (p.spectral_eff_bps_hz - 1.0).abs() <= p.ci_se {
                covered += 1;
            }
        }
        let rate = covered as f64 / trials as f64;
        assert!((rate - 0.95).abs() < 0.04, "coverage {rate}");
    }
}
