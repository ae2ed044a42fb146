//! Two-state LOS/blockage Markov chain, one per base station.
//!
//! State `1` is LOS, state `0` is blocked. Matrices are indexed `[from][to]`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const BLOCKED: usize = 0;
pub const LOS: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockageChain<T> {
    /// P(LOS -> blocked) per slot.
    pub p10: T,
    /// P(blocked -> LOS) per slot.
    pub p01: T,
}

impl<T: Scalar> BlockageChain<T> {
    pub fn new(p10: T, p01: T) -> Self {
        Self { p10, p01 }
    }

    /// Stationary blockage probability `p10 / (p10 + p01)`.
    pub fn steady_state(&self) -> Result<T> {
        let total = self.p10 + self.p01;
        if total <= T::zero() {
            return Err(Error::DegenerateBlockage);
        }
        Ok(self.p10 / total)
    }

    pub fn matrix(&self) -> [[T; 2]; 2] {
        let one = T::one();
        [[one - self.p01, self.p01], [self.p10, one - self.p10]]
    }

    /// `P^t` via the spectral form `Pi + (1 - p10 - p01)^t (I - Pi)`.
    pub fn power(&self, t: u64) -> [[T; 2]; 2] {
        let one = T::one();
        let total = self.p10 + self.p01;
        if total <= T::zero() {
            return [[one, T::zero()], [T::zero(), one]];
        }
        let blocked = self.p10 / total;
        let los = self.p01 / total;
        let decay = powi(one - total, t);
        [
            [blocked + decay * los, los - decay * los],
            [blocked - decay * blocked, los + decay * blocked],
        ]
    }

    /// One slot of the chain from state `b` (`0` blocked, `1` LOS).
    pub fn sample_step<R: Rng + ?Sized>(&self, b: usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        if b == LOS {
            if u < self.p10.as_f64() { BLOCKED } else { LOS }
        } else if u < self.p01.as_f64() {
            LOS
        } else {
            BLOCKED
        }
    }
}

fn powi<T: Scalar>(base: T, mut exp: u64) -> T {
    let mut acc = T::one();
    let mut b = base;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * b;
        }
        b = b * b;
        exp >>= 1;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table1() -> BlockageChain<f64> {
        BlockageChain::new(1.25e-4, 5e-4)
    }

    fn naive(c: &BlockageChain<f64>, t: u64) -> [[f64; 2]; 2] {
        let m = c.matrix();
        let mut acc = [[1.0, 0.0], [0.0, 1.0]];
        for _ in 0..t {
            let mut next = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    next[i][j] = acc[i][0] * m[0][j] + acc[i][1] * m[1][j];
                }
            }
            acc = next;
        }
        acc
    }

    #[test]
    fn steady_state_values() {
        assert_eq!(table1().steady_state().unwrap(), 0.2);
        assert_eq!(BlockageChain::new(0.0, 0.3).steady_state().unwrap(), 0.0);
        assert_eq!(BlockageChain::new(0.01, 0.01).steady_state().unwrap(), 0.5);
        assert!(BlockageChain::new(0.0, 0.0).steady_state().is_err());
    }

    #[test]
    fn power_matches_products() {
        let c = table1();
        assert_eq!(c.power(0), [[1.0, 0.0], [0.0, 1.0]]);
        for t in [1, 2, 3, 7, 40] {
            let (a, b) = (c.power(t), naive(&c, t));
            for i in 0..2 {
                for j in 0..2 {
                    assert!((a[i][j] - b[i][j]).abs() < 1e-14, "t={t}");
                }
            }
        }
        let far = c.power(10_000_000);
        for row in far {
            assert!((row[BLOCKED] - 0.2).abs() < 1e-12);
            assert!((row[LOS] - 0.8).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let never = BlockageChain::new(0.0, 0.5);
        let always = BlockageChain::new(0.5, 1.0);
        for _ in 0..10_000 {
            assert_eq!(never.sample_step(LOS, &mut rng), LOS);
            assert_eq!(always.sample_step(BLOCKED, &mut rng), LOS);
        }
    }

    #[test]
    fn empirical_transition_frequency() {
        let c = BlockageChain::new(0.01, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 1_000_000;
        let hits = (0..n).filter(|_| c.sample_step(LOS, &mut rng) == BLOCKED).count();
        let freq = hits as f64 / n as f64;
        let sigma = (0.01 * 0.99 / n as f64).sqrt();
        assert!((freq - 0.01).abs() < 3.0 * sigma, "{freq}");
    }

    #[test]
    fn mean_blockage_sojourn() {
        let c = BlockageChain::new(0.01, 0.05);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut b = BLOCKED;
        let (mut blocked_slots, mut episodes) = (0u64, 0u64);
        for _ in 0..2_000_000 {
            let next = c.sample_step(b, &mut rng);
            if b == BLOCKED {
                blocked_slots += 1;
                if next == LOS {
                    episodes += 1;
                }
            }
            b = next;
        }
        let mean = blocked_slots as f64 / episodes as f64;
        assert!((mean - 20.0).abs() < 0.5, "{mean}");
    }

    #[test]
    fn independent_chains_uncorrelated() {
        let c = BlockageChain::new(0.05, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let (mut b1, mut b2) = (LOS, LOS);
        let n = 200_000usize;
        let (mut s1, mut s2, mut s12) = (0.0, 0.0, 0.0);
        // sample every 50 slots to thin autocorrelation
        for _ in 0..n {
            for _ in 0..50 {
                b1 = c.sample_step(b1, &mut rng);
                b2 = c.sample_step(b2, &mut rng);
            }
            let (x, y) = (b1 as f64, b2 as f64);
            s1 += x;
            s2 += y;
            s12 += x * y;
        }
        let nf = n as f64;
        let (m1, m2) = (s1 / nf, s2 / nf);
        let cov = s12 / nf - m1 * m2;
        let corr = cov / ((m1 * (1.0 - m1)) * (m2 * (1.0 - m2))).sqrt();
        assert!(corr.abs() < 3.0 / nf.sqrt(), "corr {corr}");
    }
}
