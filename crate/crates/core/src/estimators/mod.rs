//! Belief updaters and the multiple-model update that fuses per-hypothesis
//! filters into the hypothesis posterior.

mod particle;
mod unscented;

pub use particle::{pf_correct, pf_predict, systematic_resample};
pub use unscented::{
    expectation_under, gaussian_density, ukf_correct, ukf_predict, EstimatorError, UkfParams,
};

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::belief::{CategoricalBelief, ConditionalBelief, GaussianBelief, HybridBelief};
use crate::mdh::MdhProblem;
use crate::problem::Pomdp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdaterKind {
    Particle,
    Unscented,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UpdaterConfig {
    pub kind: UpdaterKind,
    pub particle_count: usize,
    pub ess_threshold_fraction: f64,
    pub ukf_spread: f64,
    pub ukf_secondary_scaling: f64,
}

impl Default for UpdaterConfig {
    fn default() -> Self {
        Self {
            kind: UpdaterKind::Particle,
            particle_count: 250,
            ess_threshold_fraction: 0.5,
            ukf_spread: 1.0,
            ukf_secondary_scaling: 2.0,
        }
    }
}

impl UpdaterConfig {
    pub fn unscented() -> Self {
        Self {
            kind: UpdaterKind::Unscented,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.kind == UpdaterKind::Particle && self.particle_count < 2 {
            return Err(format!(
                "particle_count must be >= 2, got {}",
                self.particle_count
            ));
        }
        if !(self.ess_threshold_fraction > 0.0 && self.ess_threshold_fraction <= 1.0) {
            return Err(format!(
                "ess_threshold_fraction must be in (0, 1], got {}",
                self.ess_threshold_fraction
            ));
        }
        if !(self.ukf_spread > 0.0) {
            return Err(format!("ukf_spread must be > 0, got {}", self.ukf_spread));
        }
        Ok(())
    }

    pub fn ukf_params(&self) -> UkfParams {
        UkfParams {
            spread: self.ukf_spread,
            secondary_scaling: self.ukf_secondary_scaling,
            kappa: 0.0,
        }
    }
}

/// One multiple-model Bayes step: per-hypothesis predict and correct, then
/// reweight the hypothesis posterior by each hypothesis's marginal
/// observation likelihood and renormalize.
///
/// Takes `rng` because particle resampling is stochastic. Every particle
/// hypothesis runs on an identical stream forked from one draw of `rng`
/// (common random numbers): state components whose dynamics do not depend
/// on the hypothesis then stay identical across the conditional filters,
/// so their observation terms cancel exactly in the Bayes ratio instead of
/// injecting Monte Carlo noise into the hypothesis posterior.
///
/// A hypothesis whose marginal likelihood is exactly 0 keeps its predicted
/// (uncorrected) conditional belief; if every hypothesis reports 0 the
/// hypothesis belief is left unchanged and the event is counted on the
/// problem, signalling model mismatch instead of crashing rollouts.
pub fn mm_update<P: Pomdp>(
    problem: &MdhProblem<P>,
    belief: &HybridBelief,
    action: usize,
    observation: &DVector<f64>,
    rng: &mut dyn RngCore,
) -> Result<HybridBelief, EstimatorError> {
    let n = belief.num_hypotheses();
    let prior = belief.hypothesis_belief.probabilities();
    let fork = rng.next_u64();
    let mut conditionals = Vec::with_capacity(n);
    let mut mass = Vec::with_capacity(n);
    for i in 0..n {
        let cond = &problem.conditioned()[i];
        let updater = &problem.updaters()[i];
        match &belief.conditional_beliefs[i] {
            ConditionalBelief::Particle(pb) => {
                let mut hrng = crate::rng::derive_rng(fork, &[]);
                let predicted = pf_predict(
                    pb,
                    action,
                    |s, a, r| cond.sample_transition(s, a, r),
                    &mut hrng,
                );
                let (updated, ml) = pf_correct(
                    &predicted,
                    action,
                    observation,
                    |x, a, o| cond.observation_density(o, x, a),
                    updater.ess_threshold_fraction,
                    &mut hrng,
                );
                mass.push(prior[i] * ml);
                conditionals.push(ConditionalBelief::Particle(updated));
            }
            ConditionalBelief::Gaussian(gb) => {
                let (updated, ml) =
                    gaussian_step(cond, updater, gb, action, observation)?;
                mass.push(prior[i] * ml);
                conditionals.push(ConditionalBelief::Gaussian(updated));
            }
        }
    }
    let total: f64 = mass.iter().sum();
    let hypothesis_belief = if total > 0.0 && total.is_finite() {
        CategoricalBelief::from_unnormalized(&mass)?
    } else {
        problem.note_degenerate_update();
        belief.hypothesis_belief.clone()
    };
    let threshold = 1.0 - problem.resolution().epsilon;
    let resolved = belief.resolved || hypothesis_belief.argmax().1 >= threshold;
    Ok(HybridBelief::new(
        hypothesis_belief,
        conditionals,
        belief.time_step + 1,
        resolved,
    )?)
}

/// Gaussian predict/correct for one hypothesis. Runs per independent block
/// when the problem factorizes (only the measured block is corrected);
/// otherwise transforms the full state.
fn gaussian_step<P: Pomdp>(
    cond: &P,
    updater: &UpdaterConfig,
    gb: &GaussianBelief,
    action: usize,
    observation: &DVector<f64>,
) -> Result<(GaussianBelief, f64), EstimatorError> {
    let params = updater.ukf_params();
    if let (Some(blocks), Some(observed)) = (cond.independent_blocks(), cond.observed_block(action))
    {
        let dim = gb.state_dim();
        let mut mean = DVector::zeros(dim);
        let mut cov = DMatrix::zeros(dim, dim);
        let mut marginal = 0.0;
        for (bi, range) in blocks.iter().enumerate() {
            let width = range.len();
            let sub = GaussianBelief::new(
                gb.mean().rows(range.start, width).into_owned(),
                gb.covariance()
                    .view((range.start, range.start), (width, width))
                    .into_owned(),
            )?;
            let q = cond
                .process_noise_block(bi, action)
                .ok_or(EstimatorError::MissingModel {
                    what: "per-block process noise",
                })?;
            let predicted = ukf_predict(
                &sub,
                |x| {
                    cond.transition_mean_block(bi, x, action)
                        .expect("block transition mean available when blocks are declared")
                },
                &q,
                &params,
            )?;
            let stored = if bi == observed {
                let r = cond
                    .observation_noise(action)
                    .ok_or(EstimatorError::MissingModel {
                        what: "measurement noise covariance",
                    })?;
                let (corrected, ml) = ukf_correct(
                    &predicted,
                    |x| {
                        cond.observation_mean_block(bi, x, action)
                            .expect("block observation mean available when blocks are declared")
                    },
                    &r,
                    observation,
                    &params,
                )?;
                marginal = ml;
                if ml > 0.0 {
                    corrected
                } else {
                    predicted
                }
            } else {
                predicted
            };
            mean.rows_mut(range.start, width).copy_from(stored.mean());
            cov.view_mut((range.start, range.start), (width, width))
                .copy_from(stored.covariance());
        }
        Ok((GaussianBelief::new(mean, cov)?, marginal))
    } else {
        let q = cond
            .process_noise(action)
            .ok_or(EstimatorError::MissingModel {
                what: "process noise covariance",
            })?;
        let predicted = ukf_predict(
            gb,
            |x| {
                cond.transition_mean(x, action)
                    .expect("transition mean available for gaussian updaters")
            },
            &q,
            &params,
        )?;
        let r = cond
            .observation_noise(action)
            .ok_or(EstimatorError::MissingModel {
                what: "measurement noise covariance",
            })?;
        let (corrected, ml) = ukf_correct(
            &predicted,
            |x| {
                cond.observation_mean(x, action)
                    .expect("observation mean available for gaussian updaters")
            },
            &r,
            observation,
            &params,
        )?;
        if ml > 0.0 {
            Ok((corrected, ml))
        } else {
            Ok((predicted, ml))
        }
    }
}

