use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::{dbm_to_watt, watt_to_dbm, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionClass {
    #[serde(rename = "HO")]
    Handover,
    #[serde(rename = "BT")]
    BeamTraining,
    #[serde(rename = "DT")]
    DataTransmission,
}

/// A multi-slot action `(class, sectors, target SNR, duration)`.
///
/// `sectors` is the ordered scan list for BT, a single beam for DT and empty for
/// HO. `snr` is the main-lobe receive SNR targeted by the transmit power
/// `power_watt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub class: ActionClass,
    pub sectors: Vec<usize>,
    pub snr: f64,
    pub power_watt: f64,
    pub duration: u32,
}

impl ActionSpec {
    pub fn handover(slots: u32) -> Self {
        Self { class: ActionClass::Handover, sectors: Vec::new(), snr: 0.0, power_watt: 0.0, duration: slots }
    }

    /// BT over `sectors` at `power_dbm`; lasts one slot per beam plus one feedback slot.
    pub fn beam_training(sectors: Vec<usize>, power_dbm: f64, gamma: f64) -> Self {
        let power_watt = dbm_to_watt(power_dbm);
        let duration = sectors.len() as u32 + 1;
        Self { class: ActionClass::BeamTraining, sectors, snr: gamma * power_watt, power_watt, duration }
    }

    pub fn data_transmission(sector: usize, duration: u32, power_dbm: f64, gamma: f64) -> Self {
        let power_watt = dbm_to_watt(power_dbm);
        Self {
            class: ActionClass::DataTransmission,
            sectors: vec![sector],
            snr: gamma * power_watt,
            power_watt,
            duration,
        }
    }

    pub fn is_handover(&self) -> bool {
        self.class == ActionClass::Handover
    }

    /// DT beam. Panics for other classes.
    pub fn dt_sector(&self) -> usize {
        assert_eq!(self.class, ActionClass::DataTransmission);
        self.sectors[0]
    }

    pub fn power_dbm(&self) -> Option<f64> {
        (self.power_watt > 0.0).then(|| watt_to_dbm(self.power_watt))
    }

    /// Slots during which the BS transmits (all but the feedback slot).
    pub fn powered_slots(&self) -> u32 {
        match self.class {
            ActionClass::Handover => 0,
            _ => self.duration.saturating_sub(1),
        }
    }

    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ActionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.power_dbm().map(|p| format!("{p:.0}dBm")).unwrap_or_default();
        match self.class {
            ActionClass::Handover => write!(f, "HO[T{}]", self.duration),
            ActionClass::BeamTraining => {
                let s: Vec<String> = self.sectors.iter().map(|s| (s + 1).to_string()).collect();
                write!(f, "BT[{};{p}]", s.join(" "))
            }
            ActionClass::DataTransmission => {
                write!(f, "DT[s{};T{};{p}]", self.sectors[0] + 1, self.duration)
            }
        }
    }
}

/// The finite action set offered to the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionCatalog {
    pub actions: Vec<ActionSpec>,
}

impl ActionCatalog {
    /// HO, then exhaustive BT per power, then width-3 BT windows centred on each
    /// sector per power, then DT per sector, duration and power.
    pub fn build(cfg: &ScenarioConfig, gamma: f64) -> Self {
        let s = cfg.num_sectors;
        let mut actions = vec![ActionSpec::handover(cfg.handover_slots)];
        let exhaustive: Vec<usize> = (0..s).collect();
        for &p in &cfg.power_levels {
            actions.push(ActionSpec::beam_training(exhaustive.clone(), p, gamma));
        }
        let mut windows: Vec<Vec<usize>> = Vec::new();
        for c in 0..s {
            let w: Vec<usize> = (c.saturating_sub(1)..=(c + 1).min(s - 1)).collect();
            if w != exhaustive && !windows.contains(&w) {
                windows.push(w);
            }
        }
        for &p in &cfg.power_levels {
            for w in &windows {
                actions.push(ActionSpec::beam_training(w.clone(), p, gamma));
            }
        }
        for sector in 0..s {
            for &t in &cfg.dt_durations {
                for &p in &cfg.power_levels {
                    actions.push(ActionSpec::data_transmission(sector, t, p, gamma));
                }
            }
        }
        Self { actions }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn position(&self, action: &ActionSpec) -> Option<usize> {
        self.actions.iter().position(|a| a == action)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_shape() {
        let cfg = ScenarioConfig::default();
        let cat = ActionCatalog::build(&cfg, 7939.0);
        assert_eq!(cat.len(), 1 + 5 + 8 * 5 + 8 * 3 * 5);
        for a in &cat.actions {
            match a.class {
                ActionClass::Handover => {
                    assert!(a.sectors.is_empty());
                    assert_eq!(a.snr, 0.0);
                    assert_eq!(a.duration, cfg.handover_slots);
                }
                ActionClass::BeamTraining => assert_eq!(a.duration as usize, a.sectors.len() + 1),
                ActionClass::DataTransmission => {
                    assert_eq!(a.sectors.len(), 1);
                    assert!(a.duration >= 2);
                }
            }
        }
        let first_dt = ActionSpec::data_transmission(0, 10, 0.0, 7939.0);
        assert!(cat.position(&first_dt).is_some());
    }

    #[test]
    fn two_sector_windows_collapse() {
        let cfg = ScenarioConfig { num_sectors: 2, power_levels: vec![30.0], dt_durations: vec![2], ..Default::default() };
        let cat = ActionCatalog::build(&cfg, 1.0);
        // HO, exhaustive BT, two DT
        assert_eq!(cat.len(), 4);
    }

    #[test]
    fn labels() {
        let a = ActionSpec::data_transmission(2, 40, 30.0, 7939.0);
        assert_eq!(a.to_string(), "DT[s3;T40;30dBm]");
        assert_eq!(a.powered_slots(), 39);
        assert_eq!(ActionSpec::beam_training(vec![0, 1, 2], 10.0, 1.0).to_string(), "BT[1 2 3;10dBm]");
        assert_eq!(ActionSpec::handover(1).to_string(), "HO[T1]");
    }
}
