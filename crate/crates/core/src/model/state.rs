use std::fmt;

use crate::blockage::LOS;

/// POMDP state: sector, serving base station and the LOS flags of both links,
/// or the absorbing exit state. Sectors and base stations are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SystemState {
    Active { sector: usize, serving: usize, blockage: [usize; 2] },
    Exit,
}

impl SystemState {
    pub fn serving_los(&self) -> bool {
        match *self {
            SystemState::Active { serving, blockage, .. } => blockage[serving] == LOS,
            SystemState::Exit => false,
        }
    }
}

impl fmt::Display for SystemState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            SystemState::Active { sector, serving, blockage } => {
                write!(f, "s{}/bs{}/b{}{}", sector + 1, serving + 1, blockage[0], blockage[1])
            }
            SystemState::Exit => f.write_str("exit"),
        }
    }
}

/// Feedback received at the end of an action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Observation {
    /// Reported beam (BT) or ACK on the transmitted beam (DT). Zero-based.
    Sector(usize),
    /// No beam above threshold (BT), NACK (DT), or the HO outcome.
    Nothing,
    Exit,
}

impl fmt::Display for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observation::Sector(s) => write!(f, "s{}", s + 1),
            Observation::Nothing => f.write_str("none"),
            Observation::Exit => f.write_str("exit"),
        }
    }
}

/// Dense indexing of states and observations for a given number of sectors.
///
/// Active states occupy `0..8S`, the exit state is `8S`. Observations are
/// `0..S` for sectors, `S` for nothing and `S + 1` for exit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateSpace {
    pub sectors: usize,
}

impl StateSpace {
    pub fn new(sectors: usize) -> Self {
        Self { sectors }
    }

    pub fn num_active(&self) -> usize {
        8 * self.sectors
    }

    pub fn num_states(&self) -> usize {
        self.num_active() + 1
    }

    pub fn exit_index(&self) -> usize {
        self.num_active()
    }

    pub fn index(&self, state: SystemState) -> usize {
        match state {
            SystemState::Active { sector, serving, blockage } => {
                ((sector * 2 + serving) * 2 + blockage[0]) * 2 + blockage[1]
            }
            SystemState::Exit => self.exit_index(),
        }
    }

    pub fn state(&self, index: usize) -> SystemState {
        if index >= self.num_active() {
            return SystemState::Exit;
        }
        SystemState::Active {
            sector: index / 8,
            serving: (index / 4) % 2,
            blockage: [(index / 2) % 2, index % 2],
        }
    }

    pub fn active_states(&self) -> impl Iterator<Item = (usize, SystemState)> + '_ {
        (0..self.num_active()).map(move |i| (i, self.state(i)))
    }

    pub fn num_observations(&self) -> usize {
        self.sectors + 2
    }

    pub fn nothing_index(&self) -> usize {
        self.sectors
    }

    pub fn obs_exit_index(&self) -> usize {
        self.sectors + 1
    }

    pub fn obs_index(&self, y: Observation) -> usize {
        match y {
            Observation::Sector(s) => s,
            Observation::Nothing => self.nothing_index(),
            Observation::Exit => self.obs_exit_index(),
        }
    }

    pub fn observation(&self, index: usize) -> Observation {
        if index < self.sectors {
            Observation::Sector(index)
        } else if index == self.sectors {
            Observation::Nothing
        } else {
            Observation::Exit
        }
    }

    pub fn labels(&self) -> Vec<String> {
        (0..self.num_states()).map(|i| self.state(i).to_string()).collect()
    }
}
