//! Planar LEO catalog-maintenance bench. Five objects under two-body
//! gravity plus cannonball drag with an exponential atmosphere; a single
//! ground station measures range and range-rate of whichever object is
//! tasked each minute. The lowest object's drag scale is disputed.
//!
//! State layout: [x, y, vx, vy] per object, km and km/s, concatenated in
//! object order.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{ConditionalBelief, GaussianBelief, ParticleBelief};
use crate::estimators::{UpdaterConfig, UpdaterKind};
use crate::mdh::HypothesisSet;
use crate::problem::Pomdp;
use crate::problems::normal_pdf;

pub const EARTH_RADIUS_KM: f64 = 6378.1363;
pub const MU_EARTH: f64 = 398600.4418;
const OBJ_DIM: usize = 4;

#[derive(Debug, Error)]
pub enum SdaError {
    #[error("object {object} radius {radius:.3} km is below the Earth surface")]
    Reentry { object: usize, radius: f64 },
    #[error("ephemeris line {line}: {detail}")]
    Ephemeris { line: usize, detail: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdaParams {
    pub mu_earth: f64,
    /// Strictly increasing; entry 0 is the nominal scale.
    pub drag_multipliers: Vec<f64>,
    pub step_seconds: f64,
    pub horizon_seconds: f64,
    pub decision_deadline_seconds: f64,
    /// Explicit tasking plan, cycled over the horizon. Empty selects
    /// round-robin over the non-OOI objects, which never moves the
    /// hypothesis belief and so pins the baseline at zero deviations.
    pub nominal_plan: Vec<usize>,
    pub obs_sigma_range: f64,
    pub obs_sigma_rate: f64,
    /// Nominal drag strength, 1/km; multiplied by the hypothesis scale on
    /// the OOI.
    pub drag_coeff: f64,
    pub scale_height_km: f64,
    pub reference_altitude_km: f64,
    pub station: [f64; 2],
    /// RK4 internal step, capped at 10 s.
    pub substep_seconds: f64,
    pub process_sigma_pos: f64,
    pub process_sigma_vel: f64,
    pub init_sigma_pos: f64,
    pub init_sigma_vel: f64,
    pub ooi: usize,
    pub discount: f64,
    /// Initial [x, y, vx, vy] per object; empty selects the built-in ring.
    pub catalog: Vec<[f64; 4]>,
}

impl Default for SdaParams {
    fn default() -> Self {
        Self {
            mu_earth: MU_EARTH,
            drag_multipliers: vec![1.0, 5.0, 20.0],
            step_seconds: 60.0,
            horizon_seconds: 3600.0,
            decision_deadline_seconds: 1600.0,
            nominal_plan: Vec::new(),
            obs_sigma_range: 0.05,
            obs_sigma_rate: 3e-4,
            drag_coeff: 2e-8,
            scale_height_km: 100.0,
            reference_altitude_km: 500.0,
            station: [EARTH_RADIUS_KM, 0.0],
            substep_seconds: 5.0,
            process_sigma_pos: 1e-4,
            process_sigma_vel: 1e-6,
            init_sigma_pos: 0.5,
            init_sigma_vel: 5e-4,
            ooi: 4,
            discount: 0.95,
            catalog: Vec::new(),
        }
    }
}

/// Near-circular ring: 700 down to 500 km altitude, phases 72 degrees
/// apart, prograde. The lowest orbit is the default OOI.
fn default_catalog(mu_earth: f64) -> Vec<[f64; 4]> {
    let altitudes = [700.0, 650.0, 600.0, 550.0, 500.0];
    altitudes
        .iter()
        .enumerate()
        .map(|(k, alt)| {
            let r = EARTH_RADIUS_KM + alt;
            let v = (mu_earth / r).sqrt();
            let phase = k as f64 * std::f64::consts::TAU / 5.0;
            [
                r * phase.cos(),
                r * phase.sin(),
                -v * phase.sin(),
                v * phase.cos(),
            ]
        })
        .collect()
}

impl SdaParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.drag_multipliers.len() < 2 {
            return Err("sda.drag_multipliers: need at least two hypotheses".into());
        }
        if !self.drag_multipliers.windows(2).all(|w| w[0] < w[1]) {
            return Err("sda.drag_multipliers: must be strictly increasing".into());
        }
        if self.drag_multipliers.iter().any(|m| *m < 0.0) {
            return Err("sda.drag_multipliers: must be nonnegative".into());
        }
        if self.step_seconds <= 0.0 || self.horizon_seconds < self.step_seconds {
            return Err("sda.step_seconds/horizon_seconds: invalid epoch grid".into());
        }
        if self.decision_deadline_seconds <= 0.0 {
            return Err("sda.decision_deadline_seconds: must be positive".into());
        }
        if self.substep_seconds <= 0.0 || self.substep_seconds > 10.0 {
            return Err("sda.substep_seconds: must lie in (0, 10]".into());
        }
        if self.obs_sigma_range <= 0.0 || self.obs_sigma_rate <= 0.0 {
            return Err("sda observation sigmas must be positive".into());
        }
        if self.drag_coeff < 0.0 || self.scale_height_km <= 0.0 {
            return Err("sda.drag_coeff/scale_height_km: invalid atmosphere".into());
        }
        if self.process_sigma_pos <= 0.0
            || self.process_sigma_vel <= 0.0
            || self.init_sigma_pos <= 0.0
            || self.init_sigma_vel <= 0.0
        {
            return Err("sda process/init sigmas must be positive".into());
        }
        let n = if self.catalog.is_empty() {
            5
        } else {
            self.catalog.len()
        };
        if self.ooi >= n {
            return Err(format!("sda.ooi: index {} out of range for {n} objects", self.ooi));
        }
        if self.nominal_plan.iter().any(|a| *a >= n) {
            return Err("sda.nominal_plan: object index out of range".into());
        }
        if !(0.0..=1.0).contains(&self.discount) || self.discount == 0.0 {
            return Err("sda.discount must lie in (0, 1]".into());
        }
        Ok(())
    }

    pub fn horizon_steps(&self) -> usize {
        (self.horizon_seconds / self.step_seconds).round() as usize
    }

    pub fn deadline_steps(&self) -> usize {
        (self.decision_deadline_seconds / self.step_seconds).ceil() as usize
    }
}

/// Plain-text ephemeris: one object per line, `id x y vx vy`, `#` comments.
/// Objects are sorted by id and ids must be 0..n without gaps.
pub fn parse_ephemeris(text: &str) -> Result<Vec<[f64; 4]>, SdaError> {
    let mut rows: Vec<(usize, [f64; 4])> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(SdaError::Ephemeris {
                line: lineno + 1,
                detail: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        let id: usize = fields[0].parse().map_err(|e| SdaError::Ephemeris {
            line: lineno + 1,
            detail: format!("bad id: {e}"),
        })?;
        let mut vals = [0.0; 4];
        for (i, f) in fields[1..].iter().enumerate() {
            vals[i] = f.parse().map_err(|e| SdaError::Ephemeris {
                line: lineno + 1,
                detail: format!("bad number {f:?}: {e}"),
            })?;
        }
        rows.push((id, vals));
    }
    rows.sort_by_key(|(id, _)| *id);
    for (want, (id, _)) in rows.iter().enumerate() {
        if *id != want {
            return Err(SdaError::Ephemeris {
                line: 0,
                detail: format!("object ids must be 0..n without gaps; found {id}"),
            });
        }
    }
    Ok(rows.into_iter().map(|(_, v)| v).collect())
}

#[derive(Clone)]
pub struct SdaProblem {
    params: SdaParams,
    ooi_mult: f64,
    catalog: Vec<[f64; 4]>,
    plan: Vec<usize>,
}

impl SdaProblem {
    pub fn new(params: SdaParams) -> Result<Self, String> {
        params.validate()?;
        let catalog = if params.catalog.is_empty() {
            default_catalog(params.mu_earth)
        } else {
            params.catalog.clone()
        };
        let plan = if params.nominal_plan.is_empty() {
            (0..catalog.len()).filter(|k| *k != params.ooi).collect()
        } else {
            params.nominal_plan.clone()
        };
        let ooi_mult = params.drag_multipliers[0];
        Ok(Self {
            params,
            ooi_mult,
            catalog,
            plan,
        })
    }

    pub fn params(&self) -> &SdaParams {
        &self.params
    }

    pub fn hypothesis_set(&self) -> HypothesisSet<f64> {
        let labels = self
            .params
            .drag_multipliers
            .iter()
            .map(|m| format!("drag-x{m}"))
            .collect();
        HypothesisSet::new(self.params.drag_multipliers.clone(), labels).unwrap()
    }

    pub fn num_objects(&self) -> usize {
        self.catalog.len()
    }

    pub fn nominal_plan(&self) -> &[usize] {
        &self.plan
    }

    fn multiplier_for(&self, object: usize) -> f64 {
        if object == self.params.ooi {
            self.ooi_mult
        } else {
            self.params.drag_multipliers[0]
        }
    }

    fn acceleration(&self, s: &[f64; 4], mult: f64) -> (f64, f64) {
        let r = s[0].hypot(s[1]);
        let g = -self.params.mu_earth / (r * r * r);
        let alt = r - EARTH_RADIUS_KM;
        let density =
            (-(alt - self.params.reference_altitude_km) / self.params.scale_height_km).exp();
        let speed = s[2].hypot(s[3]);
        let d = -self.params.drag_coeff * mult * density * speed;
        (g * s[0] + d * s[2], g * s[1] + d * s[3])
    }

    fn rk4_object(&self, s: [f64; 4], mult: f64, h: f64) -> [f64; 4] {
        let f = |s: &[f64; 4]| {
            let (ax, ay) = self.acceleration(s, mult);
            [s[2], s[3], ax, ay]
        };
        let k1 = f(&s);
        let add = |s: &[f64; 4], k: &[f64; 4], c: f64| {
            [s[0] + c * k[0], s[1] + c * k[1], s[2] + c * k[2], s[3] + c * k[3]]
        };
        let k2 = f(&add(&s, &k1, 0.5 * h));
        let k3 = f(&add(&s, &k2, 0.5 * h));
        let k4 = f(&add(&s, &k3, h));
        let mut out = s;
        for i in 0..OBJ_DIM {
            out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }

    /// One object integrated over `dt` without any validity check.
    pub fn propagate_object(&self, s: [f64; 4], mult: f64, dt: f64) -> [f64; 4] {
        let n = (dt / self.params.substep_seconds).ceil().max(1.0) as usize;
        let h = dt / n as f64;
        let mut cur = s;
        for _ in 0..n {
            cur = self.rk4_object(cur, mult, h);
        }
        cur
    }

    fn object_slice(state: &DVector<f64>, k: usize) -> [f64; 4] {
        [
            state[OBJ_DIM * k],
            state[OBJ_DIM * k + 1],
            state[OBJ_DIM * k + 2],
            state[OBJ_DIM * k + 3],
        ]
    }

    fn propagate_free(&self, state: &DVector<f64>, dt: f64) -> DVector<f64> {
        let mut next = DVector::zeros(state.len());
        for k in 0..self.num_objects() {
            let out = self.propagate_object(Self::object_slice(state, k), self.multiplier_for(k), dt);
            for i in 0..OBJ_DIM {
                next[OBJ_DIM * k + i] = out[i];
            }
        }
        next
    }

    /// Full-state propagation with the reentry check.
    pub fn propagate(&self, state: &DVector<f64>, dt: f64) -> Result<DVector<f64>, SdaError> {
        let next = self.propagate_free(state, dt);
        for k in 0..self.num_objects() {
            let r = next[OBJ_DIM * k].hypot(next[OBJ_DIM * k + 1]);
            if r <= EARTH_RADIUS_KM {
                return Err(SdaError::Reentry { object: k, radius: r });
            }
        }
        Ok(next)
    }

    /// Noise-free range and range-rate of one object from the station.
    pub fn geometry(&self, sub: &[f64; 4]) -> (f64, f64) {
        let dx = sub[0] - self.params.station[0];
        let dy = sub[1] - self.params.station[1];
        let range = dx.hypot(dy);
        let rate = (dx * sub[2] + dy * sub[3]) / range;
        (range, rate)
    }

    /// v^2/2 - mu/r for one object; drag must bleed this monotonically.
    pub fn specific_energy(&self, sub: &[f64; 4]) -> f64 {
        let r = sub[0].hypot(sub[1]);
        let v2 = sub[2] * sub[2] + sub[3] * sub[3];
        v2 / 2.0 - self.params.mu_earth / r
    }

    fn process_block(&self) -> DMatrix<f64> {
        let sp = self.params.process_sigma_pos;
        let sv = self.params.process_sigma_vel;
        DMatrix::from_diagonal(&DVector::from_vec(vec![sp * sp, sp * sp, sv * sv, sv * sv]))
    }
}

impl Pomdp for SdaProblem {
    /// OOI drag multiplier.
    type Dynamics = f64;

    fn state_dim(&self) -> usize {
        OBJ_DIM * self.num_objects()
    }

    fn num_actions(&self) -> usize {
        self.num_objects()
    }

    fn discount(&self) -> f64 {
        self.params.discount
    }

    fn with_dynamics(&self, dynamics: &f64) -> Self {
        assert!(*dynamics >= 0.0 && dynamics.is_finite());
        let mut out = self.clone();
        out.ooi_mult = *dynamics;
        out
    }

    fn sample_transition(
        &self,
        state: &DVector<f64>,
        _action: usize,
        _rng: &mut dyn RngCore,
    ) -> DVector<f64> {
        // Ground truth is deterministic; the filter's process noise covers
        // discretization slack.
        self.propagate_free(state, self.params.step_seconds)
    }

    fn sample_observation(
        &self,
        next_state: &DVector<f64>,
        action: usize,
        rng: &mut dyn RngCore,
    ) -> DVector<f64> {
        let (range, rate) = self.geometry(&Self::object_slice(next_state, action));
        DVector::from_vec(vec![
            range + self.params.obs_sigma_range * rng.sample::<f64, _>(StandardNormal),
            rate + self.params.obs_sigma_rate * rng.sample::<f64, _>(StandardNormal),
        ])
    }

    fn observation_density(
        &self,
        observation: &DVector<f64>,
        next_state: &DVector<f64>,
        action: usize,
    ) -> f64 {
        let (range, rate) = self.geometry(&Self::object_slice(next_state, action));
        normal_pdf(observation[0], range, self.params.obs_sigma_range)
            * normal_pdf(observation[1], rate, self.params.obs_sigma_rate)
    }

    fn reward(
        &self,
        step: usize,
        _state: &DVector<f64>,
        action: usize,
        _next_state: &DVector<f64>,
        _observation: &DVector<f64>,
    ) -> f64 {
        if Some(action) == self.nominal_action(step) {
            0.0
        } else {
            -1.0
        }
    }

    fn expected_reward(&self, step: usize, _state: &DVector<f64>, action: usize) -> f64 {
        if Some(action) == self.nominal_action(step) {
            0.0
        } else {
            -1.0
        }
    }

    fn nominal_action(&self, step: usize) -> Option<usize> {
        Some(self.plan[step % self.plan.len()])
    }

    fn validate_state(&self, state: &DVector<f64>) -> Result<(), String> {
        for k in 0..self.num_objects() {
            let r = state[OBJ_DIM * k].hypot(state[OBJ_DIM * k + 1]);
            if r <= EARTH_RADIUS_KM {
                return Err(SdaError::Reentry { object: k, radius: r }.to_string());
            }
        }
        Ok(())
    }

    fn initial_state(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        let mut s = DVector::zeros(self.state_dim());
        for (k, obj) in self.catalog.iter().enumerate() {
            for i in 0..OBJ_DIM {
                let sigma = if i < 2 {
                    self.params.init_sigma_pos
                } else {
                    self.params.init_sigma_vel
                };
                s[OBJ_DIM * k + i] = obj[i] + sigma * rng.sample::<f64, _>(StandardNormal);
            }
        }
        s
    }

    fn initial_conditional(
        &self,
        updater: &UpdaterConfig,
        rng: &mut dyn RngCore,
    ) -> ConditionalBelief {
        let mean = DVector::from_fn(self.state_dim(), |i, _| {
            self.catalog[i / OBJ_DIM][i % OBJ_DIM]
        });
        let cov = DMatrix::from_diagonal(&DVector::from_fn(self.state_dim(), |i, _| {
            let sigma = if i % OBJ_DIM < 2 {
                self.params.init_sigma_pos
            } else {
                self.params.init_sigma_vel
            };
            sigma * sigma
        }));
        match updater.kind {
            UpdaterKind::Unscented => {
                ConditionalBelief::Gaussian(GaussianBelief::new(mean, cov).unwrap())
            }
            UpdaterKind::Particle => {
                let particles = (0..updater.particle_count)
                    .map(|_| self.initial_state(rng))
                    .collect();
                ConditionalBelief::Particle(ParticleBelief::uniform(particles).unwrap())
            }
        }
    }

    fn transition_mean(&self, state: &DVector<f64>, _action: usize) -> Option<DVector<f64>> {
        Some(self.propagate_free(state, self.params.step_seconds))
    }

    fn process_noise(&self, _action: usize) -> Option<DMatrix<f64>> {
        let n = self.state_dim();
        let mut q = DMatrix::zeros(n, n);
        let block = self.process_block();
        for k in 0..self.num_objects() {
            q.view_mut((OBJ_DIM * k, OBJ_DIM * k), (OBJ_DIM, OBJ_DIM))
                .copy_from(&block);
        }
        Some(q)
    }

    fn observation_mean(&self, next_state: &DVector<f64>, action: usize) -> Option<DVector<f64>> {
        let (range, rate) = self.geometry(&Self::object_slice(next_state, action));
        Some(DVector::from_vec(vec![range, rate]))
    }

    fn observation_noise(&self, _action: usize) -> Option<DMatrix<f64>> {
        let sr = self.params.obs_sigma_range;
        let sv = self.params.obs_sigma_rate;
        Some(DMatrix::from_diagonal(&DVector::from_vec(vec![
            sr * sr,
            sv * sv,
        ])))
    }

    fn independent_blocks(&self) -> Option<Vec<std::ops::Range<usize>>> {
        Some(
            (0..self.num_objects())
                .map(|k| OBJ_DIM * k..OBJ_DIM * (k + 1))
                .collect(),
        )
    }

    fn observed_block(&self, action: usize) -> Option<usize> {
        Some(action)
    }

    fn transition_mean_block(
        &self,
        block: usize,
        sub_state: &DVector<f64>,
        _action: usize,
    ) -> Option<DVector<f64>> {
        let s = [sub_state[0], sub_state[1], sub_state[2], sub_state[3]];
        let out = self.propagate_object(s, self.multiplier_for(block), self.params.step_seconds);
        Some(DVector::from_row_slice(&out))
    }

    fn process_noise_block(&self, _block: usize, _action: usize) -> Option<DMatrix<f64>> {
        Some(self.process_block())
    }

    fn observation_mean_block(
        &self,
        _block: usize,
        sub_state: &DVector<f64>,
        _action: usize,
    ) -> Option<DVector<f64>> {
        let s = [sub_state[0], sub_state[1], sub_state[2], sub_state[3]];
        let (range, rate) = self.geometry(&s);
        Some(DVector::from_vec(vec![range, rate]))
    }
}
