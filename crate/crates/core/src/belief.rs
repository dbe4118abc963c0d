//! Belief containers: categorical, particle, Gaussian, and the hybrid
//! belief that pairs a hypothesis distribution with per-hypothesis
//! conditional state beliefs.
//!
//! All values are immutable after construction; updates return new values.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

/// Probabilities this far below the floor are clamped before renormalizing,
/// so no hypothesis dies permanently of underflow.
pub const PROB_FLOOR: f64 = 1e-12;
const NORM_TOL: f64 = 1e-9;
const SYM_TOL: f64 = 1e-9;
const PSD_REPAIR_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum BeliefError {
    #[error("categorical belief must have at least one entry")]
    EmptyCategorical,
    #[error("probability entry {index} is {value}, expected finite and >= 0")]
    BadProbability { index: usize, value: f64 },
    #[error("probabilities sum to {sum}, expected 1 within {tol}")]
    NotNormalized { sum: f64, tol: f64 },
    #[error("particle belief needs matching particle/weight counts > 0 (got {particles}/{weights})")]
    ParticleShape { particles: usize, weights: usize },
    #[error("particle weights sum to {sum}, expected positive and finite")]
    BadWeights { sum: f64 },
    #[error("particles disagree on state dimension ({a} vs {b})")]
    MixedDimensions { a: usize, b: usize },
    #[error("covariance is {rows}x{cols}, expected {dim}x{dim}")]
    CovarianceShape { rows: usize, cols: usize, dim: usize },
    #[error("covariance asymmetry {max_gap} exceeds {tol}")]
    NotSymmetric { max_gap: f64, tol: f64 },
    #[error("covariance eigenvalue {lambda} below repair tolerance -{tol}")]
    NotPsd { lambda: f64, tol: f64 },
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },
    #[error("hypothesis index {index} out of range (n_H = {n})")]
    HypothesisOutOfRange { index: usize, n: usize },
    #[error("{conditionals} conditional beliefs for {hypotheses} hypotheses")]
    LengthMismatch { conditionals: usize, hypotheses: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalBelief {
    probabilities: Vec<f64>,
}

impl CategoricalBelief {
    /// Validates and renormalizes exactly; the input must already sum to 1
    /// within 1e-9.
    pub fn new(probabilities: Vec<f64>) -> Result<Self, BeliefError> {
        if probabilities.is_empty() {
            return Err(BeliefError::EmptyCategorical);
        }
        for (index, &value) in probabilities.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(BeliefError::BadProbability { index, value });
            }
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > NORM_TOL {
            return Err(BeliefError::NotNormalized { sum, tol: NORM_TOL });
        }
        let probabilities = probabilities.iter().map(|p| p / sum).collect();
        Ok(Self { probabilities })
    }

    pub fn uniform(n: usize) -> Result<Self, BeliefError> {
        if n == 0 {
            return Err(BeliefError::EmptyCategorical);
        }
        Ok(Self {
            probabilities: vec![1.0 / n as f64; n],
        })
    }

    /// Renormalizes arbitrary nonnegative mass, clamping entries below the
    /// probability floor so underflow never kills a hypothesis for good.
    pub fn from_unnormalized(mass: &[f64]) -> Result<Self, BeliefError> {
        if mass.is_empty() {
            return Err(BeliefError::EmptyCategorical);
        }
        for (index, &value) in mass.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(BeliefError::BadProbability { index, value });
            }
        }
        let sum: f64 = mass.iter().sum();
        if sum <= 0.0 || !sum.is_finite() {
            return Err(BeliefError::BadWeights { sum });
        }
        let mut probabilities: Vec<f64> = mass.iter().map(|m| m / sum).collect();
        if probabilities.iter().any(|&p| p < PROB_FLOOR) {
            for p in &mut probabilities {
                if *p < PROB_FLOOR {
                    *p = PROB_FLOOR;
                }
            }
            let again: f64 = probabilities.iter().sum();
            for p in &mut probabilities {
                *p /= again;
            }
        }
        Ok(Self { probabilities })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// Largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> (usize, f64) {
        let mut best = 0;
        for (i, &p) in self.probabilities.iter().enumerate() {
            if p > self.probabilities[best] {
                best = i;
            }
        }
        (best, self.probabilities[best])
    }

    /// Shannon entropy in nats, with 0 log 0 = 0.
    pub fn entropy(&self) -> f64 {
        -self
            .probabilities
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &p) in self.probabilities.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probabilities.len() - 1
    }
}

#[derive(Debug, Clone)]
pub struct ParticleBelief {
    particles: Vec<DVector<f64>>,
    weights: Vec<f64>,
}

impl ParticleBelief {
    /// Weights may be any positive mass; they are normalized here.
    pub fn new(particles: Vec<DVector<f64>>, weights: Vec<f64>) -> Result<Self, BeliefError> {
        if particles.is_empty() || particles.len() != weights.len() {
            return Err(BeliefError::ParticleShape {
                particles: particles.len(),
                weights: weights.len(),
            });
        }
        let dim = particles[0].len();
        for p in &particles {
            if p.len() != dim {
                return Err(BeliefError::MixedDimensions { a: dim, b: p.len() });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(BeliefError::NonFinite { what: "particle" });
            }
        }
        for (index, &value) in weights.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(BeliefError::BadProbability { index, value });
            }
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 || !sum.is_finite() {
            return Err(BeliefError::BadWeights { sum });
        }
        let weights = weights.iter().map(|w| w / sum).collect();
        Ok(Self { particles, weights })
    }

    pub fn uniform(particles: Vec<DVector<f64>>) -> Result<Self, BeliefError> {
        let n = particles.len();
        Self::new(particles, vec![1.0; n.max(1)])
    }

    pub fn particles(&self) -> &[DVector<f64>] {
        &self.particles
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.particles[0].len()
    }

    /// 1 / sum of squared normalized weights.
    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut mean = DVector::zeros(self.state_dim());
        for (p, &w) in self.particles.iter().zip(&self.weights) {
            mean.axpy(w, p, 1.0);
        }
        mean
    }

    pub fn mean_cov(&self) -> (DVector<f64>, DMatrix<f64>) {
        let mean = self.mean();
        let dim = self.state_dim();
        let mut cov = DMatrix::zeros(dim, dim);
        for (p, &w) in self.particles.iter().zip(&self.weights) {
            let d = p - &mean;
            cov.syger(w, &d, &d, 1.0);
        }
        cov.fill_upper_triangle_with_lower_triangle();
        (mean, cov)
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (p, &w) in self.particles.iter().zip(&self.weights) {
            acc += w;
            if u < acc {
                return p.clone();
            }
        }
        self.particles[self.particles.len() - 1].clone()
    }
}

#[derive(Debug, Clone)]
pub struct GaussianBelief {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl GaussianBelief {
    /// Symmetrizes, then repairs tiny negative eigenvalues (clamped to 0 when
    /// above -1e-8); anything worse is an error.
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self, BeliefError> {
        let dim = mean.len();
        if covariance.nrows() != dim || covariance.ncols() != dim {
            return Err(BeliefError::CovarianceShape {
                rows: covariance.nrows(),
                cols: covariance.ncols(),
                dim,
            });
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(BeliefError::NonFinite { what: "mean" });
        }
        if covariance.iter().any(|v| !v.is_finite()) {
            return Err(BeliefError::NonFinite { what: "covariance" });
        }
        let mut max_gap = 0.0f64;
        for i in 0..dim {
            for j in (i + 1)..dim {
                max_gap = max_gap.max((covariance[(i, j)] - covariance[(j, i)]).abs());
            }
        }
        if max_gap > SYM_TOL {
            return Err(BeliefError::NotSymmetric {
                max_gap,
                tol: SYM_TOL,
            });
        }
        let mut sym = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                sym[(i, j)] = 0.5 * (covariance[(i, j)] + covariance[(j, i)]);
            }
        }
        // Cheap PSD check first; the eigen repair path is only for the rare
        // semidefinite or slightly indefinite case.
        if sym.clone().cholesky().is_none() {
            let eig = nalgebra::SymmetricEigen::new(sym.clone());
            let min = eig.eigenvalues.min();
            if min < -PSD_REPAIR_TOL {
                return Err(BeliefError::NotPsd {
                    lambda: min,
                    tol: PSD_REPAIR_TOL,
                });
            }
            let clipped = eig.eigenvalues.map(|l| l.max(0.0));
            let mut rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped);
            rebuilt *= eig.eigenvectors.transpose();
            for i in 0..dim {
                for j in 0..i {
                    let v = 0.5 * (rebuilt[(i, j)] + rebuilt[(j, i)]);
                    rebuilt[(i, j)] = v;
                    rebuilt[(j, i)] = v;
                }
            }
            sym = rebuilt;
        }
        Ok(Self {
            mean,
            covariance: sym,
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn state_dim(&self) -> usize {
        self.mean.len()
    }

    /// Lower-triangular square root; falls back to an eigen square root for
    /// semidefinite covariances.
    pub fn sqrt_factor(&self) -> DMatrix<f64> {
        match self.covariance.clone().cholesky() {
            Some(ch) => ch.l(),
            None => {
                let eig = nalgebra::SymmetricEigen::new(self.covariance.clone());
                let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
                &eig.eigenvectors * DMatrix::from_diagonal(&roots)
            }
        }
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        let l = self.sqrt_factor();
        let z = DVector::from_fn(self.mean.len(), |_, _| StandardNormal.sample(rng));
        &self.mean + l * z
    }
}

#[derive(Debug, Clone)]
pub enum ConditionalBelief {
    Particle(ParticleBelief),
    Gaussian(GaussianBelief),
}

impl ConditionalBelief {
    pub fn state_dim(&self) -> usize {
        match self {
            ConditionalBelief::Particle(p) => p.state_dim(),
            ConditionalBelief::Gaussian(g) => g.state_dim(),
        }
    }

    pub fn mean_cov(&self) -> (DVector<f64>, DMatrix<f64>) {
        match self {
            ConditionalBelief::Particle(p) => p.mean_cov(),
            ConditionalBelief::Gaussian(g) => (g.mean().clone(), g.covariance().clone()),
        }
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        match self {
            ConditionalBelief::Particle(p) => p.sample(rng),
            ConditionalBelief::Gaussian(g) => g.sample(rng),
        }
    }
}

/// Joint belief over (hypothesis, state), plus the episode clock and the
/// latched decision flag that keep the sparse resolution reward Markov.
#[derive(Debug, Clone)]
pub struct HybridBelief {
    pub hypothesis_belief: CategoricalBelief,
    pub conditional_beliefs: Vec<ConditionalBelief>,
    pub time_step: usize,
    pub resolved: bool,
}

impl HybridBelief {
    pub fn new(
        hypothesis_belief: CategoricalBelief,
        conditional_beliefs: Vec<ConditionalBelief>,
        time_step: usize,
        resolved: bool,
    ) -> Result<Self, BeliefError> {
        if conditional_beliefs.len() != hypothesis_belief.len() {
            return Err(BeliefError::LengthMismatch {
                conditionals: conditional_beliefs.len(),
                hypotheses: hypothesis_belief.len(),
            });
        }
        let dim = conditional_beliefs[0].state_dim();
        for c in &conditional_beliefs {
            if c.state_dim() != dim {
                return Err(BeliefError::MixedDimensions {
                    a: dim,
                    b: c.state_dim(),
                });
            }
        }
        Ok(Self {
            hypothesis_belief,
            conditional_beliefs,
            time_step,
            resolved,
        })
    }

    pub fn num_hypotheses(&self) -> usize {
        self.hypothesis_belief.len()
    }

    pub fn state_dim(&self) -> usize {
        self.conditional_beliefs[0].state_dim()
    }
}

pub fn sample_hypothesis(belief: &HybridBelief, rng: &mut dyn RngCore) -> usize {
    belief.hypothesis_belief.sample(rng)
}

pub fn sample_state(
    belief: &HybridBelief,
    hypothesis: usize,
    rng: &mut dyn RngCore,
) -> Result<DVector<f64>, BeliefError> {
    let n = belief.num_hypotheses();
    if hypothesis >= n {
        return Err(BeliefError::HypothesisOutOfRange {
            index: hypothesis,
            n,
        });
    }
    Ok(belief.conditional_beliefs[hypothesis].sample(rng))
}

/// Mixture mean and law-of-total-variance covariance across hypotheses.
pub fn marginal_moments(belief: &HybridBelief) -> (DVector<f64>, DMatrix<f64>) {
    let dim = belief.state_dim();
    let probs = belief.hypothesis_belief.probabilities();
    let moments: Vec<(DVector<f64>, DMatrix<f64>)> = belief
        .conditional_beliefs
        .iter()
        .map(|c| c.mean_cov())
        .collect();
    let mut mean = DVector::zeros(dim);
    for (&w, (mu, _)) in probs.iter().zip(&moments) {
        mean.axpy(w, mu, 1.0);
    }
    let mut cov = DMatrix::zeros(dim, dim);
    for (&w, (mu, sigma)) in probs.iter().zip(&moments) {
        cov += sigma * w;
        let d = mu - &mean;
        cov.syger(w, &d, &d, 1.0);
    }
    cov.fill_upper_triangle_with_lower_triangle();
    (mean, cov)
}

pub fn entropy(belief: &CategoricalBelief) -> f64 {
    belief.entropy()
}
