//! Contract for the underlying partially observable problem.
//!
//! A hypothesis set swaps out only the dynamics; action set, observation
//! model, reward, and discount are shared across all conditioned variants.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::belief::ConditionalBelief;

/// Base problem with swappable dynamics. `Dynamics` is whatever parameter
/// object selects one transition model (a stiffness value, a drag
/// multiplier, a full matrix).
pub trait Pomdp: Send + Sync + Sized {
    type Dynamics: Clone + Send + Sync;

    fn state_dim(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn discount(&self) -> f64;

    /// Same problem with the dynamics replaced; everything else must be
    /// untouched.
    fn with_dynamics(&self, dynamics: &Self::Dynamics) -> Self;

    fn sample_transition(
        &self,
        state: &DVector<f64>,
        action: usize,
        rng: &mut dyn RngCore,
    ) -> DVector<f64>;

    fn sample_observation(
        &self,
        next_state: &DVector<f64>,
        action: usize,
        rng: &mut dyn RngCore,
    ) -> DVector<f64>;

    /// p(o | s', a), used by particle corrections.
    fn observation_density(
        &self,
        observation: &DVector<f64>,
        next_state: &DVector<f64>,
        action: usize,
    ) -> f64;

    /// Realized reward for one transition. Observation-dependent effects
    /// (detection outcomes) enter through `sample_obs_and_reward`; this
    /// form is kept for problems where reward is observation-free.
    fn reward(
        &self,
        step: usize,
        state: &DVector<f64>,
        action: usize,
        next_state: &DVector<f64>,
        observation: &DVector<f64>,
    ) -> f64;

    /// Draws the observation and the realized reward in one call so both
    /// can share latent outcomes such as a detection coin.
    fn sample_obs_and_reward(
        &self,
        step: usize,
        state: &DVector<f64>,
        action: usize,
        next_state: &DVector<f64>,
        rng: &mut dyn RngCore,
    ) -> (DVector<f64>, f64) {
        let obs = self.sample_observation(next_state, action, rng);
        let r = self.reward(step, state, action, next_state, &obs);
        (obs, r)
    }

    /// E[R | s, a], marginalizing transition and observation noise.
    fn expected_reward(&self, step: usize, state: &DVector<f64>, action: usize) -> f64;

    /// Plan the problem is nominally expected to follow, if it has one.
    fn nominal_action(&self, _step: usize) -> Option<usize> {
        None
    }

    /// Checks a ground-truth state for physical validity. A violation
    /// aborts the episode; the harness records it as failed.
    fn validate_state(&self, _state: &DVector<f64>) -> Result<(), String> {
        Ok(())
    }

    /// Ground-truth initial state for an episode.
    fn initial_state(&self, rng: &mut dyn RngCore) -> DVector<f64>;

    /// Initial conditional belief for one hypothesis. Particle priors draw
    /// their cloud from `rng`.
    fn initial_conditional(
        &self,
        updater: &crate::estimators::UpdaterConfig,
        rng: &mut dyn RngCore,
    ) -> ConditionalBelief;

    // Gaussian-updater support. Problems that only run particle filters can
    // leave these as None.

    /// Deterministic transition mean map.
    fn transition_mean(&self, _state: &DVector<f64>, _action: usize) -> Option<DVector<f64>> {
        None
    }

    /// Additive process noise covariance.
    fn process_noise(&self, _action: usize) -> Option<DMatrix<f64>> {
        None
    }

    /// Deterministic measurement map h(s').
    fn observation_mean(&self, _next_state: &DVector<f64>, _action: usize) -> Option<DVector<f64>> {
        None
    }

    /// Additive measurement noise covariance.
    fn observation_noise(&self, _action: usize) -> Option<DMatrix<f64>> {
        None
    }

    /// Contiguous state blocks with independent dynamics and block-diagonal
    /// beliefs, if the problem factorizes. Gaussian updates then run per
    /// block instead of on the full state.
    fn independent_blocks(&self) -> Option<Vec<std::ops::Range<usize>>> {
        None
    }

    /// Block measured by `action`, when `independent_blocks` is in effect.
    fn observed_block(&self, _action: usize) -> Option<usize> {
        None
    }

    /// Transition mean restricted to one independent block.
    fn transition_mean_block(
        &self,
        _block: usize,
        _sub_state: &DVector<f64>,
        _action: usize,
    ) -> Option<DVector<f64>> {
        None
    }

    /// Process noise restricted to one independent block.
    fn process_noise_block(&self, _block: usize, _action: usize) -> Option<DMatrix<f64>> {
        None
    }

    /// Measurement map restricted to one independent block.
    fn observation_mean_block(
        &self,
        _block: usize,
        _sub_state: &DVector<f64>,
        _action: usize,
    ) -> Option<DVector<f64>> {
        None
    }
}

/// One call of the state-level generative model: s' ~ T, o ~ Z, realized
/// reward.
pub fn generate_state<P: Pomdp>(
    problem: &P,
    state: &DVector<f64>,
    action: usize,
    step: usize,
    rng: &mut dyn RngCore,
) -> (DVector<f64>, DVector<f64>, f64) {
    let next = problem.sample_transition(state, action, rng);
    let (obs, reward) = problem.sample_obs_and_reward(step, state, action, &next, rng);
    (next, obs, reward)
}
