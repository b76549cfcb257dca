//! Unscented Kalman filter baseline.
//!
//! The filter carries a mean and covariance. Measurements enter through the
//! known linear sensor matrix with the standard gain computation in Joseph
//! form; the nonlinear transition is handled by the scaled unscented
//! transform, propagating `2n + 1` sigma points through the full cell update
//! and recombining them with the classic weights
//!
//! ```text
//! lambda = alpha^2 (n + kappa) - n
//! W0_mean = lambda / (n + lambda)         Wi = 1 / (2 (n + lambda))
//! W0_cov  = W0_mean + 1 - alpha^2 + beta
//! ```
//!
//! Tiny `alpha` puts `n + lambda` close to zero, so the covariance square
//! root is scaled by a very small spread and round-off can push the updated
//! covariance slightly indefinite. The filter repairs that by flooring
//! eigenvalues at 1e-12 (counted and logged) rather than failing, and only
//! errors if the repair itself cannot restore a factorizable matrix.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::EstimatorError;
use crate::fd::FundamentalDiagram;
use crate::metrics::{rmse, EstimationTrace, TraceStep};
use crate::sim::{clamp_saturating, SystemModel};
use crate::state::ExogenousInput;

/// Scaled unscented-transform parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UkfParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

/// Sigma-point weights for a given state dimension.
#[derive(Debug, Clone, Copy)]
pub struct UtWeights {
    pub lambda: f64,
    /// Column scaling `sqrt(n + lambda)` of the covariance square root.
    pub spread: f64,
    pub w0_mean: f64,
    pub w0_cov: f64,
    pub wi: f64,
}

impl UkfParams {
    pub fn weights(&self, n: usize) -> Result<UtWeights, EstimatorError> {
        let nf = n as f64;
        let lambda = self.alpha * self.alpha * (nf + self.kappa) - nf;
        let scale = nf + lambda;
        if scale <= 0.0 {
            return Err(EstimatorError::SigmaScaling(scale));
        }
        Ok(UtWeights {
            lambda,
            spread: scale.sqrt(),
            w0_mean: lambda / scale,
            w0_cov: lambda / scale + 1.0 - self.alpha * self.alpha + self.beta,
            wi: 0.5 / scale,
        })
    }
}

/// Filter state: mean, covariance, and repair bookkeeping.
#[derive(Debug, Clone)]
pub struct UkfState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Number of eigenvalue-flooring repairs applied so far.
    pub repairs: usize,
    /// Number of mean entries saturated by the density clamp so far.
    pub clamped_entries: usize,
}

impl UkfState {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        Self {
            mean,
            cov,
            repairs: 0,
            clamped_entries: 0,
        }
    }

    fn resymmetrize(&mut self) {
        let sym = (&self.cov + self.cov.transpose()) * 0.5;
        self.cov = sym;
    }

    fn clamp_mean(&mut self, bounds: Option<&FundamentalDiagram>) {
        if let Some(fd) = bounds {
            let (mean, count) = clamp_saturating(self.mean.clone(), fd);
            self.mean = mean;
            self.clamped_entries += count;
        }
    }

    /// Cholesky factor of the covariance, flooring eigenvalues at 1e-12 if
    /// the direct factorization fails.
    fn sqrt_cov(&mut self) -> Result<DMatrix<f64>, EstimatorError> {
        if let Some(chol) = Cholesky::<f64, Dyn>::new(self.cov.clone()) {
            return Ok(chol.unpack());
        }
        let eig = self.cov.clone().symmetric_eigen();
        let floored = DVector::from_iterator(
            eig.eigenvalues.len(),
            eig.eigenvalues.iter().map(|&l| l.max(1e-12)),
        );
        self.cov = &eig.eigenvectors
            * DMatrix::from_diagonal(&floored)
            * eig.eigenvectors.transpose();
        self.resymmetrize();
        self.repairs += 1;
        log::warn!(
            "covariance required eigenvalue flooring (repair #{})",
            self.repairs
        );
        Cholesky::<f64, Dyn>::new(self.cov.clone())
            .map(|c| c.unpack())
            .ok_or_else(|| {
                EstimatorError::CovarianceRepair(
                    "eigenvalue flooring did not restore positive definiteness".into(),
                )
            })
    }
}

/// Measurement update through the linear sensor matrix, Joseph form.
pub fn ukf_update(
    state: &mut UkfState,
    y: &DVector<f64>,
    c: &DMatrix<f64>,
    r: &DMatrix<f64>,
    bounds: Option<&FundamentalDiagram>,
) -> Result<(), EstimatorError> {
    let n = state.mean.len();
    if y.len() != c.nrows() || c.ncols() != n || r.nrows() != c.nrows() {
        return Err(EstimatorError::DimensionMismatch(format!(
            "y {}, C {}x{}, R {}x{}, state {}",
            y.len(),
            c.nrows(),
            c.ncols(),
            r.nrows(),
            r.ncols(),
            n
        )));
    }
    let innovation_cov = c * &state.cov * c.transpose() + r;
    let chol = Cholesky::<f64, Dyn>::new(innovation_cov).ok_or_else(|| {
        EstimatorError::CovarianceRepair("innovation covariance not positive definite".into())
    })?;
    // K = P C' S^-1 computed as solving S K' = C P.
    let gain = chol.solve(&(c * &state.cov)).transpose();
    let innovation = y - c * &state.mean;
    state.mean += &gain * innovation;
    let shape = DMatrix::identity(n, n) - &gain * c;
    state.cov = &shape * &state.cov * shape.transpose() + &gain * r * gain.transpose();
    state.resymmetrize();
    state.clamp_mean(bounds);
    Ok(())
}

/// Prediction through the nonlinear transition via the unscented transform,
/// adding the process covariance `q`.
pub fn ukf_predict<F>(
    state: &mut UkfState,
    transition: F,
    q: &DMatrix<f64>,
    params: &UkfParams,
    bounds: Option<&FundamentalDiagram>,
) -> Result<(), EstimatorError>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = state.mean.len();
    let w = params.weights(n)?;
    let sqrt_cov = state.sqrt_cov()?;

    let mut sigma = Vec::with_capacity(2 * n + 1);
    sigma.push(state.mean.clone());
    for i in 0..n {
        let offset = sqrt_cov.column(i) * w.spread;
        sigma.push(&state.mean + &offset);
        sigma.push(&state.mean - &offset);
    }
    let propagated: Vec<DVector<f64>> = sigma.iter().map(|x| transition(x)).collect();

    let mut mean = &propagated[0] * w.w0_mean;
    for point in propagated.iter().skip(1) {
        mean += point * w.wi;
    }
    let mut cov = q.clone();
    for (idx, point) in propagated.iter().enumerate() {
        let weight = if idx == 0 { w.w0_cov } else { w.wi };
        let d = point - &mean;
        cov += (&d * d.transpose()) * weight;
    }
    state.mean = mean;
    state.cov = cov;
    state.resymmetrize();
    state.clamp_mean(bounds);
    Ok(())
}

/// One filter cycle: absorb the measurement of the current state, then
/// predict through the transition. Both estimators therefore consume the
/// same measurement when advancing from `k` to `k + 1`.
#[allow(clippy::too_many_arguments)]
pub fn ukf_step<F>(
    state: &mut UkfState,
    y: &DVector<f64>,
    transition: F,
    c: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    params: &UkfParams,
    bounds: Option<&FundamentalDiagram>,
) -> Result<(), EstimatorError>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    ukf_update(state, y, c, r, bounds)?;
    ukf_predict(state, transition, q, params, bounds)
}

/// Runs the filter over a full measurement record against the known truth.
/// Mirrors the observer runner so the two traces are directly comparable.
#[allow(clippy::too_many_arguments)]
pub fn run_ukf(
    model: &SystemModel,
    params: &UkfParams,
    xhat0: &DVector<f64>,
    p0: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    truth: &[DVector<f64>],
    measurements: &[DVector<f64>],
    inputs: &[ExogenousInput],
    perf: &DMatrix<f64>,
    stream_digest: &str,
) -> Result<EstimationTrace, EstimatorError> {
    let horizon = measurements.len();
    if truth.len() != horizon + 1 || inputs.len() != horizon {
        return Err(EstimatorError::DimensionMismatch(format!(
            "truth {} / measurements {} / inputs {}",
            truth.len(),
            horizon,
            inputs.len()
        )));
    }
    let c = model.c_matrix();
    let fd = model.diagram();
    let mut state = UkfState::new(xhat0.clone(), p0.clone());
    let mut steps = Vec::with_capacity(horizon);
    let mut busy = std::time::Duration::ZERO;
    for k in 0..horizon {
        let input = &inputs[k];
        let tick = Instant::now();
        ukf_step(
            &mut state,
            &measurements[k],
            |x| model.propagate_saturating(x, input),
            c,
            q,
            r,
            params,
            Some(fd),
        )?;
        busy += tick.elapsed();
        let x = &truth[k + 1];
        let e = x - &state.mean;
        steps.push(TraceStep {
            k: k + 1,
            x: x.clone(),
            xhat: state.mean.clone(),
            y: measurements[k].clone(),
            error_norm: e.norm(),
            perf_norm: (perf * &e).norm(),
        });
    }
    if state.repairs > 0 {
        log::info!("ukf run finished with {} covariance repairs", state.repairs);
    }
    let rmse_value = rmse(&steps)?;
    Ok(EstimationTrace {
        label: "ukf".into(),
        steps,
        rmse: rmse_value,
        wall_seconds: busy.as_secs_f64(),
        stream_digest: stream_digest.to_string(),
    })
}
