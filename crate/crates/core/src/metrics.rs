//! Estimation traces and the error metrics computed from them.

use nalgebra::DVector;

use crate::error::{EstimatorError, ScenarioError};

/// One recorded step: true state, estimate, the measurement consumed to form
/// the estimate, and the norms of the error and of the performance output.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub k: usize,
    pub x: DVector<f64>,
    pub xhat: DVector<f64>,
    pub y: DVector<f64>,
    pub error_norm: f64,
    pub perf_norm: f64,
}

/// A full estimation run: `horizon` steps plus aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationTrace {
    pub label: String,
    pub steps: Vec<TraceStep>,
    pub rmse: f64,
    /// Wall time of the estimation arithmetic alone (no generation, no I/O).
    pub wall_seconds: f64,
    /// Digest of the measurement stream the run consumed.
    pub stream_digest: String,
}

impl EstimationTrace {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn error_norms(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.error_norm).collect()
    }

    pub fn perf_norms(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.perf_norm).collect()
    }
}

/// Sum over state components of the per-component root-mean-square error:
/// `sum_i sqrt(mean_k e_i[k]^2)`. Note this is a sum of component RMS
/// values, not the RMS of the error-vector norm.
pub fn rmse(steps: &[TraceStep]) -> Result<f64, EstimatorError> {
    if steps.is_empty() {
        return Err(EstimatorError::EmptyTrace);
    }
    let n = steps[0].x.len();
    let kf = steps.len() as f64;
    let mut total = 0.0;
    for i in 0..n {
        let sum_sq: f64 = steps
            .iter()
            .map(|s| {
                let e = s.x[i] - s.xhat[i];
                e * e
            })
            .sum();
        total += (sum_sq / kf).sqrt();
    }
    Ok(total)
}

/// Per-component RMS table (diagnostic companion to [`rmse`]).
pub fn per_component_rms(steps: &[TraceStep]) -> Result<Vec<f64>, EstimatorError> {
    if steps.is_empty() {
        return Err(EstimatorError::EmptyTrace);
    }
    let n = steps[0].x.len();
    let kf = steps.len() as f64;
    Ok((0..n)
        .map(|i| {
            let sum_sq: f64 = steps
                .iter()
                .map(|s| {
                    let e = s.x[i] - s.xhat[i];
                    e * e
                })
                .sum();
            (sum_sq / kf).sqrt()
        })
        .collect())
}

/// Comparison of the performance-output series against the certified bound
/// `zeta = mu * ||w||_Linf`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceReport {
    pub mu: f64,
    pub w_linf: f64,
    pub zeta: f64,
    /// First step index from which the series stays at or below `zeta`
    /// through the end of the horizon, if any.
    pub settle_step: Option<usize>,
}

impl PerformanceReport {
    pub fn new(trace: &EstimationTrace, mu: f64, w_linf: f64) -> Result<Self, ScenarioError> {
        if !mu.is_finite() || mu < 0.0 {
            return Err(ScenarioError::MissingMetadata(format!(
                "performance level mu = {mu}"
            )));
        }
        if !w_linf.is_finite() || w_linf < 0.0 {
            return Err(ScenarioError::MissingMetadata(format!(
                "disturbance norm ||w|| = {w_linf}"
            )));
        }
        let zeta = mu * w_linf;
        let mut settle: Option<usize> = None;
        for step in trace.steps.iter().rev() {
            if step.perf_norm <= zeta {
                settle = Some(step.k);
            } else {
                break;
            }
        }
        Ok(Self {
            mu,
            w_linf,
            zeta,
            settle_step: settle,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(k: usize, x: Vec<f64>, xhat: Vec<f64>) -> TraceStep {
        let x = DVector::from_vec(x);
        let xhat = DVector::from_vec(xhat);
        let e = &x - &xhat;
        TraceStep {
            k,
            x,
            xhat,
            y: DVector::zeros(0),
            error_norm: e.norm(),
            perf_norm: 0.1 * e.norm(),
        }
    }

    #[test]
    fn zero_error_gives_zero_rmse() {
        let steps = vec![step(1, vec![0.1, 0.2], vec![0.1, 0.2])];
        assert_eq!(rmse(&steps).unwrap(), 0.0);
    }

    #[test]
    fn constant_error_sums_per_component() {
        // e_i[k] = c for all i, k gives RMSE = n * c.
        let c = 0.03;
        let steps: Vec<_> = (1..=5)
            .map(|k| step(k, vec![c, c, c], vec![0.0, 0.0, 0.0]))
            .collect();
        let value = rmse(&steps).unwrap();
        assert!((value - 3.0 * c).abs() < 1e-12);
        let table = per_component_rms(&steps).unwrap();
        assert_eq!(table.len(), 3);
        assert!(table.iter().all(|v| (v - c).abs() < 1e-12));
    }

    #[test]
    fn empty_trace_is_an_error() {
        assert!(matches!(rmse(&[]), Err(EstimatorError::EmptyTrace)));
    }

    #[test]
    fn performance_weight_scales_error_norm_exactly() {
        let s = step(1, vec![0.4, 0.0], vec![0.1, 0.4]);
        assert!((s.perf_norm - 0.1 * s.error_norm).abs() < 1e-15);
    }

    #[test]
    fn settle_step_finds_suffix() {
        let mut steps = vec![];
        for k in 1..=10 {
            let mut s = step(k, vec![0.1], vec![0.1]);
            s.perf_norm = if k <= 4 { 1.0 } else { 0.01 };
            steps.push(s);
        }
        let trace = EstimationTrace {
            label: "test".into(),
            steps,
            rmse: 0.0,
            wall_seconds: 0.0,
            stream_digest: String::new(),
        };
        let report = PerformanceReport::new(&trace, 1.0, 0.05).unwrap();
        assert!((report.zeta - 0.05).abs() < 1e-15);
        assert_eq!(report.settle_step, Some(5));

        let none = PerformanceReport::new(&trace, 1.0, 0.001).unwrap();
        assert_eq!(none.settle_step, None);

        assert!(PerformanceReport::new(&trace, f64::NAN, 0.05).is_err());
    }

    #[test]
    fn zero_error_series_sits_below_any_bound() {
        let steps: Vec<_> = (1..=3).map(|k| step(k, vec![0.1], vec![0.1])).collect();
        let trace = EstimationTrace {
            label: "zero".into(),
            steps,
            rmse: 0.0,
            wall_seconds: 0.0,
            stream_digest: String::new(),
        };
        let report = PerformanceReport::new(&trace, 2.5, 0.003).unwrap();
        assert_eq!(report.settle_step, Some(1));
    }
}
