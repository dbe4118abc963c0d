//! Hypothesis-augmented belief-MDP: conditioned problem array, hybrid
//! belief generative model, and the composite reward.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DVector;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{
    sample_hypothesis, sample_state, BeliefError, CategoricalBelief, ConditionalBelief,
    HybridBelief,
};
use crate::estimators::{expectation_under, mm_update, EstimatorError, UpdaterConfig};
use crate::problem::Pomdp;
use crate::solver::{BeliefMdp, StepFailure};

#[derive(Debug, Error)]
pub enum MdhError {
    #[error("hypothesis set needs at least 2 models, got {0}")]
    TooFewHypotheses(usize),
    #[error("{models} models vs {labels} labels")]
    LabelCount { models: usize, labels: usize },
    #[error("duplicate hypothesis label {0:?}")]
    DuplicateLabel(String),
    #[error("epsilon must lie in (0, 1), got {0}")]
    BadEpsilon(f64),
    #[error("deadline must be positive")]
    ZeroDeadline,
    #[error(
        "resolution threshold 1-epsilon = {threshold} is not above the uniform prior 1/{n}"
    )]
    ThresholdAtPrior { threshold: f64, n: usize },
    #[error("weight must be finite and >= 0, got {0}")]
    BadWeight(f64),
    #[error("updater config: {0}")]
    Updater(String),
    #[error("{updaters} updaters for {hypotheses} hypotheses")]
    UpdaterCount { updaters: usize, hypotheses: usize },
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
}

/// Candidate dynamics models, one per hypothesis.
#[derive(Debug, Clone)]
pub struct HypothesisSet<D> {
    models: Vec<D>,
    labels: Vec<String>,
}

impl<D> HypothesisSet<D> {
    pub fn new(models: Vec<D>, labels: Vec<String>) -> Result<Self, MdhError> {
        if models.len() != labels.len() {
            return Err(MdhError::LabelCount {
                models: models.len(),
                labels: labels.len(),
            });
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(MdhError::DuplicateLabel(l.clone()));
            }
        }
        Ok(Self { models, labels })
    }

    pub fn models(&self) -> &[D] {
        &self.models
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

/// Decision threshold 1-epsilon and step deadline for the sparse
/// resolution reward.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolutionSpec {
    pub epsilon: f64,
    pub deadline: usize,
}

impl ResolutionSpec {
    pub fn threshold(&self) -> f64 {
        1.0 - self.epsilon
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisRewardKind {
    None,
    Entropy,
    ResolutionTime,
}

/// The augmented planning problem: one conditioned copy of the base problem
/// per hypothesis, paired with its belief updater, plus the composite
/// reward parameters. Immutable and shareable across searches.
pub struct MdhProblem<P: Pomdp> {
    conditioned: Vec<P>,
    updaters: Vec<UpdaterConfig>,
    labels: Vec<String>,
    resolution: ResolutionSpec,
    reward_kind: HypothesisRewardKind,
    weight: f64,
    discount: f64,
    degenerate_updates: AtomicU64,
}

impl<P: Pomdp> MdhProblem<P> {
    /// Builds the conditioned problem array from a base problem and a
    /// hypothesis set; every hypothesis gets a copy of `updater`.
    pub fn construct(
        base: &P,
        hypotheses: &HypothesisSet<P::Dynamics>,
        updater: UpdaterConfig,
        resolution: ResolutionSpec,
        reward_kind: HypothesisRewardKind,
        weight: f64,
    ) -> Result<Self, MdhError> {
        if hypotheses.len() < 2 {
            return Err(MdhError::TooFewHypotheses(hypotheses.len()));
        }
        Self::assemble(base, hypotheses, updater, resolution, reward_kind, weight)
    }

    /// Degenerate single-hypothesis variant; the augmented problem then
    /// reduces to the base belief-MDP. Used for reduction checks.
    pub fn single_model(
        base: &P,
        dynamics: P::Dynamics,
        updater: UpdaterConfig,
        resolution: ResolutionSpec,
        reward_kind: HypothesisRewardKind,
        weight: f64,
    ) -> Result<Self, MdhError> {
        let set = HypothesisSet::new(vec![dynamics], vec!["only".into()])?;
        Self::assemble(base, &set, updater, resolution, reward_kind, weight)
    }

    fn assemble(
        base: &P,
        hypotheses: &HypothesisSet<P::Dynamics>,
        updater: UpdaterConfig,
        resolution: ResolutionSpec,
        reward_kind: HypothesisRewardKind,
        weight: f64,
    ) -> Result<Self, MdhError> {
        if !(resolution.epsilon > 0.0 && resolution.epsilon < 1.0) {
            return Err(MdhError::BadEpsilon(resolution.epsilon));
        }
        if resolution.deadline == 0 {
            return Err(MdhError::ZeroDeadline);
        }
        let n = hypotheses.len();
        if n > 1 && resolution.threshold() <= 1.0 / n as f64 {
            return Err(MdhError::ThresholdAtPrior {
                threshold: resolution.threshold(),
                n,
            });
        }
        if !weight.is_finite() || weight < 0.0 {
            return Err(MdhError::BadWeight(weight));
        }
        updater.validate().map_err(MdhError::Updater)?;
        let conditioned: Vec<P> = hypotheses
            .models()
            .iter()
            .map(|d| base.with_dynamics(d))
            .collect();
        Ok(Self {
            updaters: vec![updater; n],
            labels: hypotheses.labels().to_vec(),
            resolution,
            reward_kind,
            weight,
            discount: base.discount(),
            conditioned,
            degenerate_updates: AtomicU64::new(0),
        })
    }

    /// Replaces the per-hypothesis updaters (they may differ in kind).
    pub fn with_updaters(mut self, updaters: Vec<UpdaterConfig>) -> Result<Self, MdhError> {
        if updaters.len() != self.conditioned.len() {
            return Err(MdhError::UpdaterCount {
                updaters: updaters.len(),
                hypotheses: self.conditioned.len(),
            });
        }
        for u in &updaters {
            u.validate().map_err(MdhError::Updater)?;
        }
        self.updaters = updaters;
        Ok(self)
    }

    pub fn num_hypotheses(&self) -> usize {
        self.conditioned.len()
    }

    pub fn conditioned(&self) -> &[P] {
        &self.conditioned
    }

    pub fn updaters(&self) -> &[UpdaterConfig] {
        &self.updaters
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn resolution(&self) -> &ResolutionSpec {
        &self.resolution
    }

    pub fn reward_kind(&self) -> HypothesisRewardKind {
        self.reward_kind
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn note_degenerate_update(&self) {
        self.degenerate_updates.fetch_add(1, Ordering::Relaxed);
    }

    /// How many updates fell back to the uninformative branch because every
    /// hypothesis reported zero likelihood.
    pub fn degenerate_updates(&self) -> u64 {
        self.degenerate_updates.load(Ordering::Relaxed)
    }

    /// Uniform hypothesis prior with per-hypothesis conditionals drawn on
    /// identical forked streams: hypotheses share one initial state prior,
    /// so their sampled clouds start identical and later differ only
    /// through hypothesis-dependent dynamics (see `mm_update`).
    pub fn initial_belief(&self, rng: &mut dyn RngCore) -> Result<HybridBelief, MdhError> {
        let n = self.num_hypotheses();
        let fork = rng.next_u64();
        let conditionals = self
            .conditioned
            .iter()
            .zip(&self.updaters)
            .map(|(p, u)| {
                let mut hrng = crate::rng::derive_rng(fork, &[]);
                p.initial_conditional(u, &mut hrng)
            })
            .collect();
        Ok(HybridBelief::new(
            CategoricalBelief::uniform(n)?,
            conditionals,
            0,
            false,
        )?)
    }

    /// One step of the belief-level generative model: sample a hypothesis
    /// and a state, simulate the observation under that hypothesis, run the
    /// multiple-model update, and score the transition.
    pub fn generate_belief(
        &self,
        belief: &HybridBelief,
        action: usize,
        rng: &mut dyn RngCore,
    ) -> Result<(HybridBelief, DVector<f64>, f64), MdhError> {
        let h = sample_hypothesis(belief, rng);
        let state = sample_state(belief, h, rng)?;
        let model = &self.conditioned[h];
        let next_state = model.sample_transition(&state, action, rng);
        let observation = model.sample_observation(&next_state, action, rng);
        let next_belief = mm_update(self, belief, action, &observation, rng)?;
        let reward = self.composite_reward(belief, action, &next_belief);
        Ok((next_belief, observation, reward))
    }

    /// First term of the composite reward: the base reward averaged over
    /// the hybrid belief. Particle conditionals use the weighted particle
    /// sum, Gaussian conditionals a sigma-point expectation.
    pub fn expected_state_reward(&self, belief: &HybridBelief, action: usize) -> f64 {
        let step = belief.time_step;
        let probs = belief.hypothesis_belief.probabilities();
        let mut total = 0.0;
        for (i, cond) in belief.conditional_beliefs.iter().enumerate() {
            if probs[i] == 0.0 {
                continue;
            }
            let model = &self.conditioned[i];
            let inner = match cond {
                ConditionalBelief::Particle(pb) => pb
                    .particles()
                    .iter()
                    .zip(pb.weights())
                    .map(|(x, &w)| w * model.expected_reward(step, x, action))
                    .sum::<f64>(),
                ConditionalBelief::Gaussian(gb) => expectation_under(
                    gb,
                    &self.updaters[i].ukf_params(),
                    |x| model.expected_reward(step, x, action),
                ),
            };
            total += probs[i] * inner;
        }
        total
    }

    /// The hypothesis-reward term evaluated on the post-transition belief.
    /// `resolved_before` must be the pre-transition latch: the sparse reward
    /// pays on the transition that first crosses the threshold.
    pub fn hypothesis_reward(&self, resolved_before: bool, next_belief: &HybridBelief) -> f64 {
        match self.reward_kind {
            HypothesisRewardKind::None => 0.0,
            HypothesisRewardKind::Entropy => entropy_reward(&next_belief.hypothesis_belief),
            HypothesisRewardKind::ResolutionTime => {
                resolution_time_reward(
                    &next_belief.hypothesis_belief,
                    next_belief.time_step,
                    resolved_before,
                    &self.resolution,
                )
                .0
            }
        }
    }

    /// Base term on the pre-transition belief plus the weighted hypothesis
    /// term on the post-transition belief.
    pub fn composite_reward(
        &self,
        belief: &HybridBelief,
        action: usize,
        next_belief: &HybridBelief,
    ) -> f64 {
        self.expected_state_reward(belief, action)
            + self.weight * self.hypothesis_reward(belief.resolved, next_belief)
    }
}

/// Sum of p ln p: the negated Shannon entropy, always <= 0.
pub fn entropy_reward(belief_h: &CategoricalBelief) -> f64 {
    -belief_h.entropy()
}

/// Sparse resolution reward. Pays 1.0 exactly when the posterior first
/// crosses the threshold at or before the deadline; the returned latch
/// also engages on later crossings (for decision bookkeeping) but those
/// pay nothing.
pub fn resolution_time_reward(
    belief_h: &CategoricalBelief,
    time_step: usize,
    resolved: bool,
    spec: &ResolutionSpec,
) -> (f64, bool) {
    let (_, max_p) = belief_h.argmax();
    let crossed = max_p >= spec.threshold();
    let reward = if crossed && time_step <= spec.deadline && !resolved {
        1.0
    } else {
        0.0
    };
    (reward, resolved || crossed)
}

impl<P: Pomdp> BeliefMdp for MdhProblem<P> {
    type Belief = HybridBelief;
    type ObsKey = Vec<u64>;

    fn num_actions(&self) -> usize {
        self.conditioned[0].num_actions()
    }

    fn discount(&self) -> f64 {
        self.discount
    }

    fn step(
        &self,
        belief: &HybridBelief,
        action: usize,
        rng: &mut dyn RngCore,
    ) -> Result<(HybridBelief, Vec<u64>, f64), StepFailure> {
        let (next, obs, reward) = self
            .generate_belief(belief, action, rng)
            .map_err(|e| StepFailure(Box::new(e)))?;
        let key = obs.iter().map(|v| v.to_bits()).collect();
        Ok((next, key, reward))
    }
}
