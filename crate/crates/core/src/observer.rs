//! Fixed-gain observer: model prediction plus a constant linear correction.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::EstimatorError;
use crate::fd::FundamentalDiagram;
use crate::metrics::{rmse, EstimationTrace, TraceStep};
use crate::sim::{clamp_saturating, SystemModel};
use crate::state::ExogenousInput;

/// Observer state: the current estimate and the constant gain.
#[derive(Debug, Clone)]
pub struct ObserverState {
    pub xhat: DVector<f64>,
    pub gain: DMatrix<f64>,
    /// How many estimate entries the density clamp has saturated so far;
    /// nonzero values mean the unconstrained observer left the box.
    pub clamped_entries: usize,
}

impl ObserverState {
    pub fn new(xhat: DVector<f64>, gain: DMatrix<f64>) -> Self {
        Self {
            xhat,
            gain,
            clamped_entries: 0,
        }
    }

    /// One correction step: `xhat' = predict(xhat) + L (y - C xhat)`, then
    /// clamp into the density box so the model is only evaluated on its
    /// operating region. Clamps are counted, not hidden.
    pub fn step<F>(
        &mut self,
        y: &DVector<f64>,
        predict: F,
        c: &DMatrix<f64>,
        fd: &FundamentalDiagram,
    ) -> Result<(), EstimatorError>
    where
        F: FnOnce(&DVector<f64>) -> DVector<f64>,
    {
        if y.len() != c.nrows() || self.xhat.len() != c.ncols() {
            return Err(EstimatorError::DimensionMismatch(format!(
                "y has {} entries, C is {}x{}, estimate has {}",
                y.len(),
                c.nrows(),
                c.ncols(),
                self.xhat.len()
            )));
        }
        let innovation = y - c * &self.xhat;
        let next = predict(&self.xhat) + &self.gain * innovation;
        let (clamped, count) = clamp_saturating(next, fd);
        if count > 0 {
            log::debug!("observer clamp saturated {count} entries");
        }
        self.clamped_entries += count;
        self.xhat = clamped;
        Ok(())
    }
}

/// Runs the observer over a full measurement record against the known truth,
/// producing the estimation trace. `truth` holds `x[0..=horizon]`;
/// `measurements[k]` is the noisy reading of `x[k]` consumed when stepping to
/// `k + 1`. Wall time covers the estimation arithmetic only.
#[allow(clippy::too_many_arguments)]
pub fn run_observer(
    model: &SystemModel,
    gain: &DMatrix<f64>,
    xhat0: &DVector<f64>,
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
    let mut obs = ObserverState::new(xhat0.clone(), gain.clone());
    let mut steps = Vec::with_capacity(horizon);
    let mut busy = std::time::Duration::ZERO;
    for k in 0..horizon {
        let input = &inputs[k];
        let tick = Instant::now();
        obs.step(
            &measurements[k],
            |x| {
                model.a_matrix() * x
                    + model
                        .nonlinear_residual(x, input)
                        .expect("estimate stays inside the density box")
            },
            c,
            fd,
        )?;
        busy += tick.elapsed();
        let x = &truth[k + 1];
        let e = x - &obs.xhat;
        steps.push(TraceStep {
            k: k + 1,
            x: x.clone(),
            xhat: obs.xhat.clone(),
            y: measurements[k].clone(),
            error_norm: e.norm(),
            perf_norm: (perf * &e).norm(),
        });
    }
    let rmse_value = rmse(&steps)?;
    Ok(EstimationTrace {
        label: "observer".into(),
        steps,
        rmse: rmse_value,
        wall_seconds: busy.as_secs_f64(),
        stream_digest: stream_digest.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{assemble_system, step, Decomposition, SensorLayout};
    use crate::state::TrafficState;
    use crate::topology::HighwayTopology;
    use approx::assert_relative_eq;

    fn setup() -> SystemModel {
        let fd = FundamentalDiagram::new(28.8889, 6.6667, 0.0249, 0.1333).unwrap();
        let topo =
            HighwayTopology::new(3, vec![2], vec![3], 200.0, 1.0, vec![], &fd).unwrap();
        let layout = SensorLayout {
            sections: vec![1, 3],
            onramps: vec![],
            offramps: vec![],
        };
        assemble_system(&topo, &fd, &layout, Decomposition::Contraction(0.45)).unwrap()
    }

    fn some_input(model: &SystemModel) -> ExogenousInput {
        let mut u = ExogenousInput::zero(model.topology());
        u.mainline_in = 0.3;
        u.mainline_out = 0.5;
        u.onramp_demand[0] = 0.2;
        u.offramp_capacity[0] = 0.4;
        u.split_ratio[0] = 0.1;
        u
    }

    #[test]
    fn zero_innovation_equals_open_loop() {
        let model = setup();
        let u = some_input(&model);
        let x = DVector::from_vec(vec![0.05, 0.08, 0.02, 0.04, 0.01]);
        let gain = DMatrix::from_element(5, 2, 0.7);
        let mut obs = ObserverState::new(x.clone(), gain);
        let y = model.measure(&x);
        let predict =
            |v: &DVector<f64>| model.a_matrix() * v + model.nonlinear_residual(v, &u).unwrap();
        let open_loop = predict(&x);
        obs.step(&y, predict, model.c_matrix(), model.diagram()).unwrap();
        assert_relative_eq!(obs.xhat, open_loop, max_relative = 1e-15);
    }

    #[test]
    fn zero_gain_is_pure_prediction() {
        let model = setup();
        let u = some_input(&model);
        let x = DVector::from_vec(vec![0.05, 0.08, 0.02, 0.04, 0.01]);
        let mut obs = ObserverState::new(x.clone(), DMatrix::zeros(5, 2));
        // Wildly wrong measurement must not matter with L = 0.
        let y = DVector::from_vec(vec![9.0, -3.0]);
        let predict =
            |v: &DVector<f64>| model.a_matrix() * v + model.nonlinear_residual(v, &u).unwrap();
        let open_loop = predict(&x);
        obs.step(&y, predict, model.c_matrix(), model.diagram()).unwrap();
        assert_relative_eq!(obs.xhat, open_loop, max_relative = 1e-15);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let model = setup();
        let mut obs = ObserverState::new(DVector::zeros(5), DMatrix::zeros(5, 2));
        let y = DVector::zeros(3);
        let r = obs.step(&y, |x| x.clone(), model.c_matrix(), model.diagram());
        assert!(matches!(r, Err(EstimatorError::DimensionMismatch(_))));
    }

    /// Started on the true state with exact measurements, the observer
    /// reproduces the plant trajectory bit-for-bit modulo round-off.
    #[test]
    fn exact_start_tracks_plant() {
        let model = setup();
        let topo = model.topology().clone();
        let fd = *model.diagram();
        let u = some_input(&model);
        let x0 = DVector::from_vec(vec![0.05, 0.08, 0.02, 0.04, 0.01]);

        let mut truth = vec![x0.clone()];
        let mut state = TrafficState::new(x0.clone(), &topo, &fd).unwrap();
        for _ in 0..200 {
            state = step(&state, &u, &topo, &fd).unwrap();
            truth.push(state.as_vector().clone());
        }
        let measurements: Vec<_> = (0..200).map(|k| model.measure(&truth[k])).collect();
        let inputs = vec![u; 200];
        let gain = DMatrix::from_element(5, 2, 0.3);
        let trace = run_observer(
            &model,
            &gain,
            &x0,
            &truth,
            &measurements,
            &inputs,
            &DMatrix::identity(5, 5),
            "",
        )
        .unwrap();
        for s in &trace.steps {
            assert!(
                s.error_norm <= 1e-12,
                "error {} at step {}",
                s.error_norm,
                s.k
            );
        }
        assert!(trace.rmse <= 1e-12);
    }
}
