//! Linear-Gaussian test bench. Rotation-with-damping dynamics, identity
//! measurements, two noise levels to choose between. Every quantity has a
//! closed-form Kalman counterpart, which is what the estimator tests lean on.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::belief::{ConditionalBelief, GaussianBelief, ParticleBelief};
use crate::estimators::{UpdaterConfig, UpdaterKind};
use crate::mdh::HypothesisSet;
use crate::problem::Pomdp;
use crate::problems::{normal_pdf, psd_sqrt};

#[derive(Clone)]
pub struct LinearGaussian {
    a: DMatrix<f64>,
    q: DMatrix<f64>,
    q_sqrt: DMatrix<f64>,
    /// Measurement noise std per action; the measurement map is identity.
    obs_sigmas: Vec<f64>,
    init_mean: DVector<f64>,
    init_cov: DMatrix<f64>,
    init_sqrt: DMatrix<f64>,
    discount: f64,
}

/// rho-scaled planar rotation by theta.
pub fn rotation_damping(rho: f64, theta: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(
        2,
        2,
        &[
            rho * theta.cos(),
            -rho * theta.sin(),
            rho * theta.sin(),
            rho * theta.cos(),
        ],
    )
}

impl LinearGaussian {
    pub fn new(
        a: DMatrix<f64>,
        q: DMatrix<f64>,
        obs_sigmas: Vec<f64>,
        init_mean: DVector<f64>,
        init_cov: DMatrix<f64>,
        discount: f64,
    ) -> Self {
        let n = a.nrows();
        assert_eq!(a.ncols(), n);
        assert_eq!(q.nrows(), n);
        assert_eq!(init_mean.len(), n);
        assert!(!obs_sigmas.is_empty() && obs_sigmas.iter().all(|s| *s > 0.0));
        let q_sqrt = psd_sqrt(&q);
        let init_sqrt = psd_sqrt(&init_cov);
        Self {
            a,
            q,
            q_sqrt,
            obs_sigmas,
            init_mean,
            init_cov,
            init_sqrt,
            discount,
        }
    }

    /// The standard three-hypothesis bench: slow turn, fast turn, damped
    /// turn. Precise and coarse measurement actions.
    pub fn bench() -> (Self, HypothesisSet<DMatrix<f64>>) {
        let models = vec![
            rotation_damping(0.98, 0.10),
            rotation_damping(0.98, 0.25),
            rotation_damping(0.90, 0.10),
        ];
        let labels = vec![
            "slow-turn".to_string(),
            "fast-turn".to_string(),
            "damped-turn".to_string(),
        ];
        let base = Self::new(
            models[0].clone(),
            DMatrix::identity(2, 2) * 1e-4,
            vec![0.1, 1.0],
            DVector::from_vec(vec![1.0, 0.0]),
            DMatrix::identity(2, 2) * 0.25,
            0.95,
        );
        (base, HypothesisSet::new(models, labels).unwrap())
    }

    pub fn dynamics_matrix(&self) -> &DMatrix<f64> {
        &self.a
    }
}

impl Pomdp for LinearGaussian {
    type Dynamics = DMatrix<f64>;

    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn num_actions(&self) -> usize {
        self.obs_sigmas.len()
    }

    fn discount(&self) -> f64 {
        self.discount
    }

    fn with_dynamics(&self, dynamics: &DMatrix<f64>) -> Self {
        let mut out = self.clone();
        assert_eq!(dynamics.nrows(), out.a.nrows());
        out.a = dynamics.clone();
        out
    }

    fn sample_transition(
        &self,
        state: &DVector<f64>,
        _action: usize,
        rng: &mut dyn RngCore,
    ) -> DVector<f64> {
        let z = DVector::from_fn(self.state_dim(), |_, _| rng.sample(StandardNormal));
        &self.a * state + &self.q_sqrt * z
    }

    fn sample_observation(
        &self,
        next_state: &DVector<f64>,
        action: usize,
        rng: &mut dyn RngCore,
    ) -> DVector<f64> {
        let sigma = self.obs_sigmas[action];
        DVector::from_fn(next_state.len(), |i, _| {
            next_state[i] + sigma * rng.sample::<f64, _>(StandardNormal)
        })
    }

    fn observation_density(
        &self,
        observation: &DVector<f64>,
        next_state: &DVector<f64>,
        action: usize,
    ) -> f64 {
        let sigma = self.obs_sigmas[action];
        observation
            .iter()
            .zip(next_state.iter())
            .map(|(o, s)| normal_pdf(*o, *s, sigma))
            .product()
    }

    fn reward(
        &self,
        _step: usize,
        _state: &DVector<f64>,
        _action: usize,
        _next_state: &DVector<f64>,
        _observation: &DVector<f64>,
    ) -> f64 {
        0.0
    }

    fn expected_reward(&self, _step: usize, _state: &DVector<f64>, _action: usize) -> f64 {
        0.0
    }

    fn initial_state(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        let z = DVector::from_fn(self.state_dim(), |_, _| rng.sample(StandardNormal));
        &self.init_mean + &self.init_sqrt * z
    }

    fn initial_conditional(
        &self,
        updater: &UpdaterConfig,
        rng: &mut dyn RngCore,
    ) -> ConditionalBelief {
        match updater.kind {
            UpdaterKind::Unscented => ConditionalBelief::Gaussian(
                GaussianBelief::new(self.init_mean.clone(), self.init_cov.clone()).unwrap(),
            ),
            UpdaterKind::Particle => {
                let particles = (0..updater.particle_count)
                    .map(|_| self.initial_state(rng))
                    .collect();
                ConditionalBelief::Particle(ParticleBelief::uniform(particles).unwrap())
            }
        }
    }

    fn transition_mean(&self, state: &DVector<f64>, _action: usize) -> Option<DVector<f64>> {
        Some(&self.a * state)
    }

    fn process_noise(&self, _action: usize) -> Option<DMatrix<f64>> {
        Some(self.q.clone())
    }

    fn observation_mean(&self, next_state: &DVector<f64>, _action: usize) -> Option<DVector<f64>> {
        Some(next_state.clone())
    }

    fn observation_noise(&self, action: usize) -> Option<DMatrix<f64>> {
        let s = self.obs_sigmas[action];
        Some(DMatrix::identity(self.state_dim(), self.state_dim()) * s * s)
    }
}
