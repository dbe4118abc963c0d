//! Three Van der Pol oscillators watched from the origin by an 8-beam range
//! sensor. One object (the object of interest) has a disputed stiffness; the
//! hypothesis set enumerates candidate values. Tasking an object buys a
//! chance of an accurate range return on its beam and pays its distance as
//! reward.

use nalgebra::DVector;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::belief::{ConditionalBelief, GaussianBelief, ParticleBelief};
use crate::estimators::{UpdaterConfig, UpdaterKind};
use crate::mdh::HypothesisSet;
use crate::problem::Pomdp;
use crate::problems::normal_pdf;

use std::f64::consts::TAU;

pub const BEAM_COUNT: usize = 8;
const SECTOR: f64 = TAU / BEAM_COUNT as f64;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VdpParams {
    /// Nominal stiffness per object. The entry at `ooi` is what the
    /// hypothesis set argues about; by convention hypothesis 0 repeats it.
    pub mu: Vec<f64>,
    pub hypothesis_mus: Vec<f64>,
    pub ooi: usize,
    /// Process noise std per axis, added once per decision epoch.
    pub process_sigma: f64,
    pub beam_sigma: f64,
    pub accurate_sigma: f64,
    pub detect_probs: Vec<f64>,
    /// Decision epoch length; integrated internally in `substeps` RK4 steps.
    pub dt: f64,
    pub substeps: usize,
    pub init_center: [f64; 2],
    pub init_side: f64,
    /// Pre-noise reading of a beam containing no object.
    pub no_return_range: f64,
    /// Flip the sign of the distance reward (sensitivity runs).
    pub negate_reward: bool,
    pub discount: f64,
}

impl Default for VdpParams {
    fn default() -> Self {
        Self {
            mu: vec![0.6, 2.0, 1.4],
            hypothesis_mus: vec![1.4, 3.0, 0.75],
            ooi: 2,
            process_sigma: 0.05,
            beam_sigma: 2.0,
            accurate_sigma: 0.5,
            detect_probs: vec![0.95, 0.80, 0.65],
            dt: 0.12,
            substeps: 5,
            init_center: [1.0, 1.0],
            init_side: 0.5,
            no_return_range: 4.0,
            negate_reward: false,
            discount: 0.95,
        }
    }
}

impl VdpParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.mu.is_empty() {
            return Err("vdp.mu: need at least one object".into());
        }
        if self.ooi >= self.mu.len() {
            return Err(format!(
                "vdp.ooi: index {} out of range for {} objects",
                self.ooi,
                self.mu.len()
            ));
        }
        if self.detect_probs.len() != self.mu.len() {
            return Err("vdp.detect_probs: one entry per object required".into());
        }
        if self.mu.iter().any(|m| *m == 0.0 || !m.is_finite()) {
            return Err("vdp.mu: stiffness values must be nonzero and finite".into());
        }
        if self.hypothesis_mus.is_empty()
            || self.hypothesis_mus.iter().any(|m| *m == 0.0 || !m.is_finite())
        {
            return Err("vdp.hypothesis_mus: nonzero finite values required".into());
        }
        if self.detect_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err("vdp.detect_probs: probabilities must lie in [0, 1]".into());
        }
        if self.process_sigma <= 0.0 || self.beam_sigma <= 0.0 || self.accurate_sigma <= 0.0 {
            return Err("vdp sigmas must be positive".into());
        }
        if self.dt <= 0.0 || self.substeps == 0 {
            return Err("vdp.dt and vdp.substeps must be positive".into());
        }
        if self.init_side <= 0.0 {
            return Err("vdp.init_side must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.discount) || self.discount == 0.0 {
            return Err("vdp.discount must lie in (0, 1]".into());
        }
        Ok(())
    }
}

/// Van der Pol vector field. Zero stiffness divides by zero; callers validate.
#[inline]
pub fn vdp_derivative(x: f64, y: f64, mu: f64) -> (f64, f64) {
    debug_assert!(mu != 0.0, "vdp stiffness must be nonzero");
    (mu * (x - x * x * x / 3.0 - y), x / mu)
}

/// One classical RK4 step of the Van der Pol field.
#[inline]
pub fn rk4_step(x: f64, y: f64, mu: f64, dt: f64) -> (f64, f64) {
    let (k1x, k1y) = vdp_derivative(x, y, mu);
    let (k2x, k2y) = vdp_derivative(x + 0.5 * dt * k1x, y + 0.5 * dt * k1y, mu);
    let (k3x, k3y) = vdp_derivative(x + 0.5 * dt * k2x, y + 0.5 * dt * k2y, mu);
    let (k4x, k4y) = vdp_derivative(x + dt * k3x, y + dt * k3y, mu);
    (
        x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
        y + dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y),
    )
}

/// Noise-free drift of one object over a decision epoch.
#[inline]
pub fn propagate_object(x: f64, y: f64, mu: f64, dt: f64, substeps: usize) -> (f64, f64) {
    let h = dt / substeps as f64;
    let (mut px, mut py) = (x, y);
    for _ in 0..substeps {
        let (nx, ny) = rk4_step(px, py, mu, h);
        px = nx;
        py = ny;
    }
    (px, py)
}

#[derive(Clone)]
pub struct VdpProblem {
    params: VdpParams,
    ooi_mu: f64,
}

impl VdpProblem {
    pub fn new(params: VdpParams) -> Result<Self, String> {
        params.validate()?;
        let ooi_mu = params.mu[params.ooi];
        Ok(Self { params, ooi_mu })
    }

    pub fn params(&self) -> &VdpParams {
        &self.params
    }

    pub fn hypothesis_set(&self) -> HypothesisSet<f64> {
        let labels = self
            .params
            .hypothesis_mus
            .iter()
            .map(|m| format!("mu-{m}"))
            .collect();
        HypothesisSet::new(self.params.hypothesis_mus.clone(), labels).unwrap()
    }

    pub fn num_objects(&self) -> usize {
        self.params.mu.len()
    }

    fn object_mu(&self, k: usize) -> f64 {
        if k == self.params.ooi {
            self.ooi_mu
        } else {
            self.params.mu[k]
        }
    }

    fn position(state: &DVector<f64>, k: usize) -> (f64, f64) {
        (state[2 * k], state[2 * k + 1])
    }

    fn range(state: &DVector<f64>, k: usize) -> f64 {
        let (x, y) = Self::position(state, k);
        x.hypot(y)
    }

    /// Beam index of a bearing; sector 0 starts at the +x axis.
    pub fn sector(x: f64, y: f64) -> usize {
        let idx = (y.atan2(x).rem_euclid(std::f64::consts::TAU) / SECTOR) as usize;
        idx.min(BEAM_COUNT - 1)
    }

    /// Which object each beam sees. The dwell is pointed at the tasked
    /// object, so it always wins its own sector; elsewhere objects sharing
    /// a sector occlude by index order (highest wins). Overlaps are
    /// transient.
    pub fn occupants(&self, state: &DVector<f64>, action: usize) -> [Option<usize>; BEAM_COUNT] {
        let mut occ = [None; BEAM_COUNT];
        for k in 0..self.num_objects() {
            let (x, y) = Self::position(state, k);
            occ[Self::sector(x, y)] = Some(k);
        }
        let (tx, ty) = Self::position(state, action);
        occ[Self::sector(tx, ty)] = Some(action);
        occ
    }

    /// Samples the 8-beam scan and the detection outcome for the tasked
    /// object.
    pub fn observe_with_detection(
        &self,
        state: &DVector<f64>,
        action: usize,
        rng: &mut dyn RngCore,
    ) -> (DVector<f64>, bool) {
        let detected = rng.random::<f64>() < self.params.detect_probs[action];
        let occ = self.occupants(state, action);
        let mut obs = DVector::zeros(BEAM_COUNT);
        for (j, slot) in occ.iter().enumerate() {
            let (mean, sigma) = match slot {
                Some(k) => {
                    let s = if *k == action && detected {
                        self.params.accurate_sigma
                    } else {
                        self.params.beam_sigma
                    };
                    (Self::range(state, *k), s)
                }
                None => (self.params.no_return_range, self.params.beam_sigma),
            };
            let z: f64 = rng.sample(StandardNormal);
            // Ranges are physical: clamp at zero. The density below stays
            // plain Gaussian; the clamp hits all hypotheses identically.
            obs[j] = (mean + sigma * z).max(0.0);
        }
        (obs, detected)
    }

    /// Distance-on-detection reward, optionally negated.
    pub fn base_reward(&self, state: &DVector<f64>, action: usize, detected: bool) -> f64 {
        let r = if detected {
            Self::range(state, action)
        } else {
            0.0
        };
        if self.params.negate_reward {
            -r
        } else {
            r
        }
    }
}

impl Pomdp for VdpProblem {
    /// The disputed quantity: the OOI's stiffness.
    type Dynamics = f64;

    fn state_dim(&self) -> usize {
        2 * self.num_objects()
    }

    fn num_actions(&self) -> usize {
        self.num_objects()
    }

    fn discount(&self) -> f64 {
        self.params.discount
    }

    fn with_dynamics(&self, dynamics: &f64) -> Self {
        assert!(*dynamics != 0.0 && dynamics.is_finite());
        Self {
            params: self.params.clone(),
            ooi_mu: *dynamics,
        }
    }

    fn sample_transition(
        &self,
        state: &DVector<f64>,
        _action: usize,
        rng: &mut dyn RngCore,
    ) -> DVector<f64> {
        let mut next = DVector::zeros(state.len());
        for k in 0..self.num_objects() {
            let (x, y) = Self::position(state, k);
            let (px, py) =
                propagate_object(x, y, self.object_mu(k), self.params.dt, self.params.substeps);
            next[2 * k] = px + self.params.process_sigma * rng.sample::<f64, _>(StandardNormal);
            next[2 * k + 1] = py + self.params.process_sigma * rng.sample::<f64, _>(StandardNormal);
        }
        next
    }

    fn sample_observation(
        &self,
        next_state: &DVector<f64>,
        action: usize,
        rng: &mut dyn RngCore,
    ) -> DVector<f64> {
        self.observe_with_detection(next_state, action, rng).0
    }

    fn observation_density(
        &self,
        observation: &DVector<f64>,
        next_state: &DVector<f64>,
        action: usize,
    ) -> f64 {
        let occ = self.occupants(next_state, action);
        let sb = self.params.beam_sigma;
        let ln_norm = 0.5 * (sb * sb * TAU).ln();
        let mut log_l = 0.0;
        for (j, slot) in occ.iter().enumerate() {
            match slot {
                Some(k) if *k == action => {
                    // Detection is latent here: mixture over the coin.
                    let p = self.params.detect_probs[action];
                    let r = Self::range(next_state, *k);
                    let m = p * normal_pdf(observation[j], r, self.params.accurate_sigma)
                        + (1.0 - p) * normal_pdf(observation[j], r, sb);
                    log_l += m.ln();
                }
                Some(k) => {
                    let z = (observation[j] - Self::range(next_state, *k)) / sb;
                    log_l -= 0.5 * z * z + ln_norm;
                }
                None => {
                    let z = (observation[j] - self.params.no_return_range) / sb;
                    log_l -= 0.5 * z * z + ln_norm;
                }
            }
        }
        log_l.exp()
    }

    /// Observation-free form: detection marginalized out. The episode path
    /// goes through `sample_obs_and_reward`, which shares the real coin.
    fn reward(
        &self,
        step: usize,
        _state: &DVector<f64>,
        action: usize,
        next_state: &DVector<f64>,
        _observation: &DVector<f64>,
    ) -> f64 {
        self.expected_reward(step, next_state, action)
    }

    fn sample_obs_and_reward(
        &self,
        _step: usize,
        _state: &DVector<f64>,
        action: usize,
        next_state: &DVector<f64>,
        rng: &mut dyn RngCore,
    ) -> (DVector<f64>, f64) {
        let (obs, detected) = self.observe_with_detection(next_state, action, rng);
        (obs, self.base_reward(next_state, action, detected))
    }

    /// Detection-marginalized reward on the current geometry. One epoch
    /// stale relative to the realized reward, which pays on the post-motion
    /// state; the gap is far below the noise floor of the benchmark.
    fn expected_reward(&self, _step: usize, state: &DVector<f64>, action: usize) -> f64 {
        let r = self.params.detect_probs[action] * Self::range(state, action);
        if self.params.negate_reward {
            -r
        } else {
            r
        }
    }

    fn initial_state(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        let half = self.params.init_side / 2.0;
        DVector::from_fn(self.state_dim(), |i, _| {
            let c = self.params.init_center[i % 2];
            rng.random_range(c - half..=c + half)
        })
    }

    fn initial_conditional(
        &self,
        updater: &UpdaterConfig,
        rng: &mut dyn RngCore,
    ) -> ConditionalBelief {
        match updater.kind {
            UpdaterKind::Particle => {
                let particles = (0..updater.particle_count)
                    .map(|_| self.initial_state(rng))
                    .collect();
                ConditionalBelief::Particle(ParticleBelief::uniform(particles).unwrap())
            }
            UpdaterKind::Unscented => {
                let mean = DVector::from_fn(self.state_dim(), |i, _| self.params.init_center[i % 2]);
                let var = self.params.init_side * self.params.init_side / 12.0;
                let cov = nalgebra::DMatrix::identity(self.state_dim(), self.state_dim()) * var;
                ConditionalBelief::Gaussian(GaussianBelief::new(mean, cov).unwrap())
            }
        }
    }
}
