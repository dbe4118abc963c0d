//! Two-state guessing bench: a static hidden bit, a symmetric noisy sensor,
//! reward 1 for naming the bit. The belief is a single probability and the
//! horizon-limited optimum is computable by exact expectimax, so this is the
//! reference target for solver correctness.

use rand::{Rng, RngCore};

use crate::solver::{BeliefMdp, StepFailure};

#[derive(Debug, Clone)]
pub struct TwoStateToy {
    /// P(sensor reports the true state). Must exceed 0.5 or the sensor is
    /// useless/backwards.
    pub obs_accuracy: f64,
    pub discount: f64,
}

impl TwoStateToy {
    pub fn new(obs_accuracy: f64, discount: f64) -> Self {
        assert!(obs_accuracy > 0.5 && obs_accuracy < 1.0);
        assert!(discount > 0.0 && discount <= 1.0);
        Self {
            obs_accuracy,
            discount,
        }
    }

    /// Exact Bayes update of P(state = 0) on sensor symbol `o`.
    pub fn posterior(&self, p: f64, o: u8) -> f64 {
        let acc = self.obs_accuracy;
        let (l0, l1) = if o == 0 {
            (acc, 1.0 - acc)
        } else {
            (1.0 - acc, acc)
        };
        let z = l0 * p + l1 * (1.0 - p);
        l0 * p / z
    }

    /// P(sensor emits 0) under belief p.
    pub fn observation_marginal(&self, p: f64) -> f64 {
        self.obs_accuracy * p + (1.0 - self.obs_accuracy) * (1.0 - p)
    }

    pub fn expected_reward(&self, p: f64, action: usize) -> f64 {
        if action == 0 {
            p
        } else {
            1.0 - p
        }
    }
}

impl BeliefMdp for TwoStateToy {
    type Belief = f64;
    type ObsKey = u8;

    fn num_actions(&self) -> usize {
        2
    }

    fn discount(&self) -> f64 {
        self.discount
    }

    fn step(
        &self,
        belief: &f64,
        action: usize,
        rng: &mut dyn RngCore,
    ) -> Result<(f64, u8, f64), StepFailure> {
        let p = *belief;
        let reward = self.expected_reward(p, action);
        let state_is_zero = rng.random::<f64>() < p;
        let correct = rng.random::<f64>() < self.obs_accuracy;
        let o: u8 = match (state_is_zero, correct) {
            (true, true) | (false, false) => 0,
            _ => 1,
        };
        Ok((self.posterior(p, o), o, reward))
    }
}
