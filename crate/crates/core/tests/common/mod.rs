//! Shared fixtures: a closed-form multiple-model Kalman filter for the
//! linear bench, an exact expectimax oracle for the two-state toy, and
//! closed-loop rollout helpers used by several suites.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

use mdhp_core::mdh::MdhProblem;
use mdhp_core::problem::Pomdp;
use mdhp_core::problems::linear_gaussian::LinearGaussian;
use mdhp_core::problems::toy::TwoStateToy;
use mdhp_core::rng::{derive_rng, STREAM_FILTER, STREAM_WORLD};
use mdhp_core::{mm_update, BeliefMdp};

/// Multiple-model Kalman filter for identity-measurement linear systems.
/// Everything is textbook closed form: per-model predict/correct plus Bayes
/// reweighting by the innovation likelihood. No flooring, no clamping.
pub struct MmKalman {
    models: Vec<DMatrix<f64>>,
    q: DMatrix<f64>,
    obs_sigmas: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
    pub b: Vec<f64>,
}

impl MmKalman {
    pub fn new(
        models: Vec<DMatrix<f64>>,
        q: DMatrix<f64>,
        obs_sigmas: Vec<f64>,
        init_mean: DVector<f64>,
        init_cov: DMatrix<f64>,
    ) -> Self {
        let n = models.len();
        Self {
            models,
            q,
            obs_sigmas,
            means: vec![init_mean; n],
            covs: vec![init_cov; n],
            b: vec![1.0 / n as f64; n],
        }
    }

    /// The bench fixture with its exact initial moments and uniform prior.
    pub fn for_bench() -> (LinearGaussian, mdhp_core::HypothesisSet<DMatrix<f64>>, Self) {
        let (base, set) = LinearGaussian::bench();
        let oracle = Self::new(
            set.models().to_vec(),
            DMatrix::identity(2, 2) * 1e-4,
            vec![0.1, 1.0],
            DVector::from_vec(vec![1.0, 0.0]),
            DMatrix::identity(2, 2) * 0.25,
        );
        (base, set, oracle)
    }

    pub fn step(&mut self, action: usize, obs: &DVector<f64>) {
        let dim = obs.len();
        let sigma = self.obs_sigmas[action];
        let r = DMatrix::identity(dim, dim) * sigma * sigma;
        let mut mass = Vec::with_capacity(self.models.len());
        for (i, a) in self.models.iter().enumerate() {
            let m_pred = a * &self.means[i];
            let p_pred = a * &self.covs[i] * a.transpose() + &self.q;
            // H = I: innovation covariance is predicted cov plus R.
            let s = &p_pred + &r;
            let residual = obs - &m_pred;
            let ml = mvn_density(&residual, &s);
            let gain = &p_pred * s.clone().try_inverse().unwrap();
            self.means[i] = &m_pred + &gain * &residual;
            self.covs[i] = &p_pred - &gain * &s * gain.transpose();
            mass.push(self.b[i] * ml);
        }
        let total: f64 = mass.iter().sum();
        for (bi, m) in self.b.iter_mut().zip(mass) {
            *bi = m / total;
        }
    }
}

/// Dense multivariate normal density at `residual` with covariance `s`.
pub fn mvn_density(residual: &DVector<f64>, s: &DMatrix<f64>) -> f64 {
    let chol = s.clone().cholesky().expect("innovation covariance not PD");
    let solved = chol.solve(residual);
    let quad = residual.dot(&solved);
    let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    let k = residual.len() as f64;
    (-0.5 * (quad + log_det + k * (2.0 * std::f64::consts::PI).ln())).exp()
}

/// Simulates the given true dynamics for `steps` epochs under a fixed
/// action and returns the observation sequence.
pub fn lg_observations(
    base: &LinearGaussian,
    truth: &DMatrix<f64>,
    action: usize,
    steps: usize,
    seed: u64,
) -> Vec<DVector<f64>> {
    let model = base.with_dynamics(truth);
    let mut world = derive_rng(seed, &[STREAM_WORLD]);
    let mut state = model.initial_state(&mut world);
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let next = model.sample_transition(&state, action, &mut world);
        out.push(model.sample_observation(&next, action, &mut world));
        state = next;
    }
    out
}

/// Runs the multiple-model update over a fixed observation sequence and
/// returns the hypothesis posterior after each step.
pub fn mm_posteriors<P: Pomdp>(
    problem: &MdhProblem<P>,
    action: usize,
    observations: &[DVector<f64>],
    seed: u64,
) -> Vec<Vec<f64>> {
    let mut filter = derive_rng(seed, &[STREAM_FILTER]);
    let mut belief = problem.initial_belief(&mut filter).unwrap();
    let mut out = Vec::with_capacity(observations.len());
    for obs in observations {
        belief = mm_update(problem, &belief, action, obs, &mut filter).unwrap();
        out.push(belief.hypothesis_belief.probabilities().to_vec());
    }
    out
}

/// Closed-loop filter-only rollout: the indicated true model drives the
/// world under a fixed action while the hybrid belief tracks it. Returns
/// the hypothesis posterior trace.
pub fn filtered_trace<P: Pomdp>(
    problem: &MdhProblem<P>,
    true_hypothesis: usize,
    action: usize,
    steps: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let mut world = derive_rng(seed, &[STREAM_WORLD]);
    let mut filter = derive_rng(seed, &[STREAM_FILTER]);
    let model = &problem.conditioned()[true_hypothesis];
    let mut state = model.initial_state(&mut world);
    let mut belief = problem.initial_belief(&mut filter).unwrap();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let next = model.sample_transition(&state, action, &mut world);
        let obs = model.sample_observation(&next, action, &mut world);
        belief = mm_update(problem, &belief, action, &obs, &mut filter).unwrap();
        out.push(belief.hypothesis_belief.probabilities().to_vec());
        state = next;
    }
    out
}

/// Exact depth-limited action values for the two-state toy. The sensor does
/// not depend on the action, so the continuation term is shared.
pub fn toy_q_values(toy: &TwoStateToy, p: f64, depth: usize) -> [f64; 2] {
    assert!(depth >= 1);
    let cont = if depth == 1 {
        0.0
    } else {
        let m = toy.observation_marginal(p);
        m * toy_value(toy, toy.posterior(p, 0), depth - 1)
            + (1.0 - m) * toy_value(toy, toy.posterior(p, 1), depth - 1)
    };
    [
        toy.expected_reward(p, 0) + toy.discount() * cont,
        toy.expected_reward(p, 1) + toy.discount() * cont,
    ]
}

/// Exact depth-limited optimal value (zero beyond the horizon, matching a
/// search with zero-length rollouts).
pub fn toy_value(toy: &TwoStateToy, p: f64, depth: usize) -> f64 {
    if depth == 0 {
        return 0.0;
    }
    let q = toy_q_values(toy, p, depth);
    q[0].max(q[1])
}

pub fn median(xs: &mut [f64]) -> f64 {
    assert!(!xs.is_empty());
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Column-wise medians of per-run traces (runs x steps x components).
pub fn stepwise_median(traces: &[Vec<Vec<f64>>], component: usize) -> Vec<f64> {
    let steps = traces[0].len();
    (0..steps)
        .map(|t| {
            let mut col: Vec<f64> = traces.iter().map(|tr| tr[t][component]).collect();
            median(&mut col)
        })
        .collect()
}
