//! Matched-filter feedback statistics for BT and DT.
//!
//! With a Rayleigh LOS gain and white noise, the normalized matched-filter
//! output over `n` symbols is exponential with mean `1 + n * snr_rx`, where
//! `snr_rx` is the per-symbol receive SNR.

use crate::config::{ScenarioConfig, Threshold, FALSE_ALARM};
use crate::error::{Error, Result};
use crate::model::action::{ActionClass, ActionSpec};
use crate::model::state::{StateSpace, SystemState};
use crate::scalar::Scalar;

/// `P(z > eta)` for a matched-filter output over `symbols` symbols at receive SNR `snr_rx`.
pub fn detection_prob<T: Scalar>(snr_rx: T, eta: T, symbols: T) -> T {
    (-eta / (T::one() + symbols * snr_rx)).exp()
}

/// Threshold separating an aligned output (mean `m_hi`) from a side-lobe one
/// (mean `m_lo`): the crossing point of the two exponential densities, floored
/// at the level giving `FALSE_ALARM` on noise alone.
pub fn auto_threshold<T: Scalar>(m_hi: T, m_lo: T) -> T {
    let floor = -T::lit(FALSE_ALARM).ln();
    if m_hi <= m_lo {
        return floor;
    }
    let crossing = (m_hi / m_lo).ln() * m_hi * m_lo / (m_hi - m_lo);
    crossing.max(floor)
}

/// Joint law of the BT report for independent exponential outputs with the
/// given `means`, one per scanned beam in scan order.
///
/// Returns `P(argmax = i, max > eta)` for each position followed by
/// `P(max <= eta)`. Evaluated by inclusion-exclusion over the CDF product,
/// grouping equal means so the cost is polynomial in the beam count.
pub fn bt_feedback_dist<T: Scalar>(means: &[T], eta: T) -> Result<Vec<T>> {
    if means.is_empty() {
        return Err(Error::EmptyScan);
    }
    let mut groups: Vec<(T, usize)> = Vec::new();
    for &m in means {
        match groups.iter_mut().find(|(g, _)| *g == m) {
            Some(g) => g.1 += 1,
            None => groups.push((m, 1)),
        }
    }
    let mut out = Vec::with_capacity(means.len() + 1);
    for &m in means {
        let rate = T::one() / m;
        let others: Vec<(T, usize)> = groups
            .iter()
            .map(|&(g, c)| (T::one() / g, if g == m { c - 1 } else { c }))
            .collect();
        out.push(argmax_term(rate, &others, eta));
    }
    let none = means.iter().map(|&m| -(-eta / m).exp_m1()).fold(T::one(), |a, b| a * b);
    out.push(none);
    Ok(out)
}

// sum over subsets J of the other beams of (-1)^|J| r/(r + r_J) exp(-(r + r_J) eta)
fn argmax_term<T: Scalar>(rate: T, others: &[(T, usize)], eta: T) -> T {
    fn recurse<T: Scalar>(rate: T, others: &[(T, usize)], eta: T, acc_rate: T, coeff: T) -> T {
        match others.split_first() {
            None => {
                let total = rate + acc_rate;
                coeff * rate / total * (-total * eta).exp()
            }
            Some((&(r, count), rest)) => {
                let mut sum = T::zero();
                let mut binom = T::one();
                for a in 0..=count {
                    let sign = if a % 2 == 0 { T::one() } else { -T::one() };
                    sum = sum
                        + recurse(rate, rest, eta, acc_rate + T::lit(a as f64) * r, coeff * sign * binom);
                    binom = binom * T::lit((count - a) as f64) / T::lit((a + 1) as f64);
                }
                sum
            }
        }
    }
    recurse(rate, others, eta, T::zero(), T::one())
}

/// Feedback parameters resolved from the configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackModel<T> {
    pub symbols: T,
    pub pilot_symbols: T,
    pub sidelobe: T,
    pub bt_threshold: Threshold,
    pub dt_threshold: Threshold,
}

impl<T: Scalar> FeedbackModel<T> {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        let symbols = T::lit(cfg.symbols_per_slot as f64);
        Self {
            symbols,
            pilot_symbols: T::lit(cfg.pilot_fraction) * symbols,
            sidelobe: T::lit(cfg.sidelobe_ratio),
            bt_threshold: cfg.bt_threshold,
            dt_threshold: cfg.dt_threshold,
        }
    }

    /// Output means (aligned, side-lobe) for a target SNR over `n` symbols.
    pub fn means(&self, snr: T, n: T) -> (T, T) {
        (T::one() + n * snr, T::one() + n * self.sidelobe * snr)
    }

    pub fn bt_eta(&self, snr: T) -> T {
        match self.bt_threshold {
            Threshold::Fixed(v) => T::lit(v),
            Threshold::Auto => {
                let (hi, lo) = self.means(snr, self.symbols);
                auto_threshold(hi, lo)
            }
        }
    }

    pub fn dt_eta(&self, snr: T) -> T {
        match self.dt_threshold {
            Threshold::Fixed(v) => T::lit(v),
            Threshold::Auto => {
                let (hi, lo) = self.means(snr, self.pilot_symbols);
                auto_threshold(hi, lo)
            }
        }
    }

    /// Beacon output mean for beam `beam` when the MU sits in `state`.
    pub fn beacon_mean(&self, state: &SystemState, beam: usize, snr: T) -> T {
        let (hi, lo) = self.means(snr, self.symbols);
        match state {
            SystemState::Active { sector, .. } if *sector == beam && state.serving_los() => hi,
            _ => lo,
        }
    }

    /// BT report distribution over observation indices (exit entry left at zero),
    /// with the MU frozen in `state` during the scan.
    pub fn bt_observation_probs(&self, space: &StateSpace, state: &SystemState, action: &ActionSpec) -> Result<Vec<T>> {
        debug_assert_eq!(action.class, ActionClass::BeamTraining);
        let snr = T::lit(action.snr);
        let means: Vec<T> = action.sectors.iter().map(|&b| self.beacon_mean(state, b, snr)).collect();
        let dist = bt_feedback_dist(&means, self.bt_eta(snr))?;
        let mut out = vec![T::zero(); space.num_observations()];
        for (pos, &beam) in action.sectors.iter().enumerate() {
            out[beam] = out[beam] + dist[pos];
        }
        out[space.nothing_index()] = dist[action.sectors.len()];
        Ok(out)
    }

    /// ACK probability of the DT pilot probe taken with the MU in `state`.
    pub fn dt_ack_prob(&self, state: &SystemState, action: &ActionSpec) -> T {
        let snr = T::lit(action.snr);
        let beam = action.dt_sector();
        let aligned = matches!(state, SystemState::Active { sector, .. } if *sector == beam) && state.serving_los();
        let gain = if aligned { T::one() } else { self.sidelobe };
        detection_prob(gain * snr, self.dt_eta(snr), self.pilot_symbols)
    }
}
