//! Unscented transform predict/correct for Gaussian beliefs.

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

use crate::belief::{BeliefError, GaussianBelief};

#[derive(Debug, Clone, Copy)]
pub struct UkfParams {
    /// Sigma-point spread (commonly written alpha). Kept at 1 so the
    /// weights stay O(1/n); tiny spreads give weights near 1e6 and the
    /// weighted sums cancel catastrophically in high dimension.
    pub spread: f64,
    /// Distribution-shape compensation in the zeroth covariance weight
    /// (commonly beta; 2 is Gaussian-optimal).
    pub secondary_scaling: f64,
    /// Tertiary scaling (kappa); kept at 0.
    pub kappa: f64,
}

impl Default for UkfParams {
    fn default() -> Self {
        Self {
            spread: 1.0,
            secondary_scaling: 2.0,
            kappa: 0.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error("innovation covariance is singular or not positive definite ({detail})")]
    SingularInnovation { detail: String },
    #[error("gaussian updater requires {what} from the problem")]
    MissingModel { what: &'static str },
    #[error("non-finite value produced in {what}")]
    NonFinite { what: &'static str },
}

struct SigmaSet {
    points: Vec<DVector<f64>>,
    w_mean: Vec<f64>,
    w_cov: Vec<f64>,
}

fn sigma_points(belief: &GaussianBelief, params: &UkfParams) -> SigmaSet {
    let n = belief.state_dim();
    let nf = n as f64;
    let lambda = params.spread * params.spread * (nf + params.kappa) - nf;
    let scale = (nf + lambda).sqrt();
    let l = belief.sqrt_factor();
    let mut points = Vec::with_capacity(2 * n + 1);
    points.push(belief.mean().clone());
    for i in 0..n {
        let col = l.column(i) * scale;
        points.push(belief.mean() + &col);
        points.push(belief.mean() - &col);
    }
    let w0m = lambda / (nf + lambda);
    let w0c = w0m + 1.0 - params.spread * params.spread + params.secondary_scaling;
    let wi = 0.5 / (nf + lambda);
    let mut w_mean = vec![wi; 2 * n + 1];
    let mut w_cov = vec![wi; 2 * n + 1];
    w_mean[0] = w0m;
    w_cov[0] = w0c;
    SigmaSet {
        points,
        w_mean,
        w_cov,
    }
}

fn transform<F>(set: &SigmaSet, map: F) -> (Vec<DVector<f64>>, DVector<f64>)
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mapped: Vec<DVector<f64>> = set.points.iter().map(&map).collect();
    let mut mean = DVector::zeros(mapped[0].len());
    for (y, &w) in mapped.iter().zip(&set.w_mean) {
        mean.axpy(w, y, 1.0);
    }
    (mapped, mean)
}

fn spread_cov(mapped: &[DVector<f64>], mean: &DVector<f64>, w_cov: &[f64]) -> DMatrix<f64> {
    let dim = mean.len();
    let mut cov = DMatrix::zeros(dim, dim);
    for (y, &w) in mapped.iter().zip(w_cov) {
        let d = y - mean;
        cov.syger(w, &d, &d, 1.0);
    }
    cov.fill_upper_triangle_with_lower_triangle();
    cov
}

/// Unscented transform through the dynamics map, plus additive process
/// noise.
pub fn ukf_predict<F>(
    belief: &GaussianBelief,
    dynamics: F,
    process_noise: &DMatrix<f64>,
    params: &UkfParams,
) -> Result<GaussianBelief, EstimatorError>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let set = sigma_points(belief, params);
    let (mapped, mean) = transform(&set, dynamics);
    let cov = spread_cov(&mapped, &mean, &set.w_cov) + process_noise;
    Ok(GaussianBelief::new(mean, cov)?)
}

/// Unscented measurement update. The marginal likelihood is the Gaussian
/// density of the innovation under the innovation covariance.
pub fn ukf_correct<H>(
    belief: &GaussianBelief,
    obs_model: H,
    measurement_noise: &DMatrix<f64>,
    observation: &DVector<f64>,
    params: &UkfParams,
) -> Result<(GaussianBelief, f64), EstimatorError>
where
    H: Fn(&DVector<f64>) -> DVector<f64>,
{
    let set = sigma_points(belief, params);
    let (mapped, y_mean) = transform(&set, obs_model);
    let s = spread_cov(&mapped, &y_mean, &set.w_cov) + measurement_noise;
    let obs_dim = y_mean.len();
    let state_dim = belief.state_dim();
    let mut cross = DMatrix::zeros(state_dim, obs_dim);
    for ((point, y), &w) in set.points.iter().zip(&mapped).zip(&set.w_cov) {
        let dx = point - belief.mean();
        let dy = y - &y_mean;
        cross.ger(w, &dx, &dy, 1.0);
    }
    let chol = Cholesky::new(s.clone()).ok_or_else(|| EstimatorError::SingularInnovation {
        detail: format!("dim {obs_dim}, diagonal {:?}", s.diagonal().as_slice()),
    })?;
    // K = C S^-1 via S K^T = C^T.
    let gain = chol.solve(&cross.transpose()).transpose();
    let innovation = observation - &y_mean;
    let mean = belief.mean() + &gain * &innovation;
    let cov = belief.covariance() - &gain * s * gain.transpose();
    let marginal = gaussian_density(&innovation, &chol);
    if !marginal.is_finite() {
        return Err(EstimatorError::NonFinite {
            what: "innovation likelihood",
        });
    }
    Ok((GaussianBelief::new(mean, cov)?, marginal))
}

/// Sigma-point approximation of E[f(x)] under a Gaussian belief.
pub fn expectation_under<F>(belief: &GaussianBelief, params: &UkfParams, f: F) -> f64
where
    F: Fn(&DVector<f64>) -> f64,
{
    let set = sigma_points(belief, params);
    set.points
        .iter()
        .zip(&set.w_mean)
        .map(|(p, &w)| w * f(p))
        .sum()
}

/// N(d; 0, S) evaluated from the Cholesky factor of S.
pub fn gaussian_density(residual: &DVector<f64>, chol: &Cholesky<f64, nalgebra::Dyn>) -> f64 {
    let k = residual.len() as f64;
    let solved = chol.solve(residual);
    let quad = residual.dot(&solved);
    let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    (-0.5 * (quad + log_det + k * (2.0 * std::f64::consts::PI).ln())).exp()
}
