//! Particle-filter predict/correct with systematic resampling.

use nalgebra::DVector;
use rand::{Rng, RngCore};

use crate::belief::ParticleBelief;

/// Propagates every particle through one transition draw; weights are
/// untouched.
pub fn pf_predict<F>(
    belief: &ParticleBelief,
    action: usize,
    dynamics: F,
    rng: &mut dyn RngCore,
) -> ParticleBelief
where
    F: Fn(&DVector<f64>, usize, &mut dyn RngCore) -> DVector<f64>,
{
    let particles = belief
        .particles()
        .iter()
        .map(|p| dynamics(p, action, rng))
        .collect();
    ParticleBelief::new(particles, belief.weights().to_vec())
        .expect("prediction preserves particle shape")
}

/// Reweights by the observation likelihood and renormalizes. Returns the
/// pre-normalization weighted likelihood sum (the marginal likelihood
/// estimate). A zero sum marks a degenerate update: the input belief is
/// returned unchanged with marginal likelihood 0 and the caller decides.
///
/// Resampling (systematic) fires when the effective sample size drops below
/// `ess_threshold_fraction` x particle count, which is why this step draws
/// from `rng`.
pub fn pf_correct<L>(
    belief: &ParticleBelief,
    action: usize,
    observation: &DVector<f64>,
    likelihood: L,
    ess_threshold_fraction: f64,
    rng: &mut dyn RngCore,
) -> (ParticleBelief, f64)
where
    L: Fn(&DVector<f64>, usize, &DVector<f64>) -> f64,
{
    let n = belief.len();
    let mut weights = Vec::with_capacity(n);
    let mut marginal = 0.0;
    for (p, &w) in belief.particles().iter().zip(belief.weights()) {
        let l = likelihood(p, action, observation);
        let lw = if l.is_finite() && l >= 0.0 { w * l } else { 0.0 };
        weights.push(lw);
        marginal += lw;
    }
    if marginal <= 0.0 || !marginal.is_finite() {
        return (belief.clone(), 0.0);
    }
    for w in &mut weights {
        *w /= marginal;
    }
    let ess = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
    if ess < ess_threshold_fraction * n as f64 {
        let particles = systematic_resample(belief.particles(), &weights, rng);
        let resampled = ParticleBelief::new(particles, vec![1.0; n])
            .expect("resampling preserves particle shape");
        (resampled, marginal)
    } else {
        let corrected = ParticleBelief::new(belief.particles().to_vec(), weights)
            .expect("corrected weights are normalized");
        (corrected, marginal)
    }
}

/// One stratified sweep through the cumulative weights with a single
/// uniform offset.
pub fn systematic_resample(
    particles: &[DVector<f64>],
    weights: &[f64],
    rng: &mut dyn RngCore,
) -> Vec<DVector<f64>> {
    let n = particles.len();
    let offset: f64 = rng.random::<f64>() / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut cumulative = weights[0];
    let mut j = 0;
    for i in 0..n {
        let target = offset + i as f64 / n as f64;
        while cumulative < target && j + 1 < n {
            j += 1;
            cumulative += weights[j];
        }
        out.push(particles[j].clone());
    }
    out
}
