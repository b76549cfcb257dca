//! One-step dynamics of the ramp-connected highway and its state-space form.
//!
//! The update is synchronous: every flow is evaluated on the current state,
//! then each state entry advances by its conservation balance. Six cases
//! cover the state layout: plain sections, sections with only an on-ramp,
//! only an off-ramp, both, then the on-ramp and off-ramp states themselves.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::fd::FundamentalDiagram;
use crate::flows;
use crate::state::{ExogenousInput, TrafficState};
use crate::topology::HighwayTopology;

/// Round-off tolerance for the post-step clamp, relative to the jam density.
/// A violation beyond it indicates a model-logic bug, not round-off.
pub const CLAMP_TOL: f64 = 1e-9;

/// Unclamped one-step update of the full state vector (veh/m).
///
/// This is the map whose residual against the chosen linear part defines the
/// lumped nonlinearity; the public [`step`] clamps and validates its output.
pub fn raw_update(
    state: &TrafficState,
    input: &ExogenousInput,
    topo: &HighwayTopology,
    fd: &FundamentalDiagram,
) -> Result<DVector<f64>, ModelError> {
    let n_sections = topo.sections();
    let ratio = topo.flow_to_density();
    let x = state.as_vector();
    let mut next = x.clone();

    // Mainline interface flows q_0..q_N on the current state.
    let mut q = Vec::with_capacity(n_sections + 1);
    for b in 0..=n_sections {
        q.push(flows::interface_flow(b, state, input, topo, fd)?);
    }

    for i in 1..=n_sections {
        let idx = topo.section_state(i).expect("in range");
        let inflow = q[i - 1];
        let r = if topo.has_onramp(i) {
            flows::onramp_flow(i, state, topo, fd)?
        } else {
            0.0
        };
        // An off-ramp section sheds q_i / (1 - beta) in total: q_i stays on
        // the mainline and s_i = beta/(1-beta) * q_i exits via the ramp.
        let outflow = match input.split_ratio_at(i, topo) {
            Some(beta) if beta > 0.0 => q[i] / (1.0 - beta),
            _ => q[i],
        };
        next[idx] = x[idx] + ratio * (inflow + r - outflow);
    }

    for &i in topo.onramp_sections() {
        let idx = topo.onramp_state(i).expect("member");
        let r_hat = flows::onramp_boundary_inflow(i, state, input, topo, fd)?;
        let r = flows::onramp_flow(i, state, topo, fd)?;
        next[idx] = x[idx] + ratio * (r_hat - r);
    }

    for &i in topo.offramp_sections() {
        let idx = topo.offramp_state(i).expect("member");
        let s = match input.split_ratio_at(i, topo) {
            Some(beta) if beta > 0.0 => beta / (1.0 - beta) * q[i],
            _ => 0.0,
        };
        let s_check = flows::offramp_boundary_outflow(i, state, input, topo, fd)?;
        next[idx] = x[idx] + ratio * (s - s_check);
    }

    Ok(next)
}

/// Clamps a raw update into `[0, rho_m]`, erroring if any entry violates the
/// box by more than round-off.
pub fn clamp_checked(
    mut next: DVector<f64>,
    fd: &FundamentalDiagram,
) -> Result<DVector<f64>, ModelError> {
    let jam = fd.jam_density();
    let tol = CLAMP_TOL * jam;
    for (i, v) in next.iter_mut().enumerate() {
        if *v < -tol || *v > jam + tol {
            return Err(ModelError::DensityOutOfBounds {
                index: i,
                value: *v,
                jam,
            });
        }
        *v = v.clamp(0.0, jam);
    }
    Ok(next)
}

/// Clamps into `[0, rho_m]` unconditionally, reporting how many entries were
/// actually clamped. Used where out-of-box values are expected (corrected
/// estimates, sigma points), never for the plant itself.
pub fn clamp_saturating(mut v: DVector<f64>, fd: &FundamentalDiagram) -> (DVector<f64>, usize) {
    let jam = fd.jam_density();
    let mut clamped = 0;
    for x in v.iter_mut() {
        if *x < 0.0 || *x > jam {
            clamped += 1;
            *x = x.clamp(0.0, jam);
        }
    }
    (v, clamped)
}

/// Advances the plant by one step.
pub fn step(
    state: &TrafficState,
    input: &ExogenousInput,
    topo: &HighwayTopology,
    fd: &FundamentalDiagram,
) -> Result<TrafficState, ModelError> {
    let next = raw_update(state, input, topo, fd)?;
    Ok(TrafficState::from_raw(clamp_checked(next, fd)?))
}

/// Sensor placement by section number, one measured density per entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorLayout {
    /// Sections whose mainline density is measured.
    pub sections: Vec<usize>,
    /// Sections whose on-ramp density is measured.
    pub onramps: Vec<usize>,
    /// Sections whose off-ramp density is measured.
    pub offramps: Vec<usize>,
}

impl SensorLayout {
    /// Measures every state entry.
    pub fn full(topo: &HighwayTopology) -> Self {
        Self {
            sections: (1..=topo.sections()).collect(),
            onramps: topo.onramp_sections().to_vec(),
            offramps: topo.offramp_sections().to_vec(),
        }
    }

    /// Resolves the layout to ordered 0-based state indices.
    pub fn state_indices(&self, topo: &HighwayTopology) -> Result<Vec<usize>, ModelError> {
        let mut idx = Vec::new();
        for &s in &self.sections {
            idx.push(topo.section_state(s).ok_or(ModelError::InvalidSensors(format!(
                "section {s} out of range"
            )))?);
        }
        for &s in &self.onramps {
            idx.push(topo.onramp_state(s).ok_or(ModelError::InvalidSensors(format!(
                "no on-ramp at section {s}"
            )))?);
        }
        for &s in &self.offramps {
            idx.push(topo.offramp_state(s).ok_or(ModelError::InvalidSensors(format!(
                "no off-ramp at section {s}"
            )))?);
        }
        if idx.is_empty() {
            return Err(ModelError::InvalidSensors("no sensors placed".into()));
        }
        let mut seen = vec![false; topo.num_states()];
        for &i in &idx {
            if seen[i] {
                return Err(ModelError::InvalidSensors(format!(
                    "state {i} measured twice"
                )));
            }
            seen[i] = true;
        }
        Ok(idx)
    }
}

/// Choice of the linear part `A` in `x[k+1] = A x[k] + f(x, u)`.
///
/// The decomposition never changes the dynamics (`A x + f(x, u)` always
/// equals the cell update); it changes how much of the update is treated as
/// known linear structure versus lumped nonlinearity when synthesizing an
/// observer gain. `Identity` keeps the whole update inside `f`; with fewer
/// sensors than states it leaves marginal unobservable modes in `A` that no
/// gain can stabilize, so gain synthesis rejects it. `Contraction(a)` assigns
/// a uniform per-step relaxation rate `a` in (0, 1) to the linear part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Decomposition {
    Identity,
    Contraction(f64),
}

impl Decomposition {
    pub fn factor(&self) -> f64 {
        match self {
            Decomposition::Identity => 1.0,
            Decomposition::Contraction(a) => *a,
        }
    }
}

/// The assembled state-space view of the model: linear part, disturbance
/// channels, sensor matrix, and the evaluable lumped nonlinearity.
///
/// Disturbances stack as `w = [w_process; w_measurement]` with pure selector
/// matrices `B_w = [I 0]` and `D_w = [0 I]`; noise magnitudes are properties
/// of the signal `w`, set by the scenario, not of the system matrices.
#[derive(Debug, Clone)]
pub struct SystemModel {
    topo: HighwayTopology,
    fd: FundamentalDiagram,
    decomposition: Decomposition,
    a: DMatrix<f64>,
    c: DMatrix<f64>,
    b_w: DMatrix<f64>,
    d_w: DMatrix<f64>,
    measured_states: Vec<usize>,
}

/// Builds the state-space matrices for a sensor layout and decomposition.
pub fn assemble_system(
    topo: &HighwayTopology,
    fd: &FundamentalDiagram,
    sensors: &SensorLayout,
    decomposition: Decomposition,
) -> Result<SystemModel, ModelError> {
    if let Decomposition::Contraction(a) = decomposition {
        if !(a.is_finite() && a > 0.0 && a < 1.0) {
            return Err(ModelError::InvalidTopology(format!(
                "contraction factor must lie in (0, 1), got {a}"
            )));
        }
    }
    let n = topo.num_states();
    let measured = sensors.state_indices(topo)?;
    let p = measured.len();
    let q = n + p;

    let a = DMatrix::identity(n, n) * decomposition.factor();
    let mut c = DMatrix::zeros(p, n);
    for (row, &state) in measured.iter().enumerate() {
        c[(row, state)] = 1.0;
    }
    let mut b_w = DMatrix::zeros(n, q);
    for i in 0..n {
        b_w[(i, i)] = 1.0;
    }
    let mut d_w = DMatrix::zeros(p, q);
    for i in 0..p {
        d_w[(i, n + i)] = 1.0;
    }
    Ok(SystemModel {
        topo: topo.clone(),
        fd: *fd,
        decomposition,
        a,
        c,
        b_w,
        d_w,
        measured_states: measured,
    })
}

impl SystemModel {
    pub fn topology(&self) -> &HighwayTopology {
        &self.topo
    }

    pub fn diagram(&self) -> &FundamentalDiagram {
        &self.fd
    }

    pub fn decomposition(&self) -> Decomposition {
        self.decomposition
    }

    pub fn num_states(&self) -> usize {
        self.topo.num_states()
    }

    pub fn num_measurements(&self) -> usize {
        self.c.nrows()
    }

    pub fn num_disturbances(&self) -> usize {
        self.b_w.ncols()
    }

    pub fn a_matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn c_matrix(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn b_w(&self) -> &DMatrix<f64> {
        &self.b_w
    }

    pub fn d_w(&self) -> &DMatrix<f64> {
        &self.d_w
    }

    pub fn measured_states(&self) -> &[usize] {
        &self.measured_states
    }

    /// The lumped nonlinearity `f(x, u)` = cell update minus `A x`.
    pub fn nonlinear_residual(
        &self,
        x: &DVector<f64>,
        input: &ExogenousInput,
    ) -> Result<DVector<f64>, ModelError> {
        let state = TrafficState::new(x.clone(), &self.topo, &self.fd)?;
        let next = raw_update(&state, input, &self.topo, &self.fd)?;
        Ok(next - &self.a * x)
    }

    /// Full transition `A x + f(x, u)` clamped into the density box.
    ///
    /// Accepts vectors slightly outside the box (sigma points, corrected
    /// estimates): they are saturated in before evaluating the flows.
    pub fn propagate_saturating(&self, x: &DVector<f64>, input: &ExogenousInput) -> DVector<f64> {
        let (boxed, _) = clamp_saturating(x.clone(), &self.fd);
        let state = TrafficState::from_raw(boxed);
        let next = raw_update(&state, input, &self.topo, &self.fd)
            .expect("in-box state cannot fail flow evaluation");
        clamp_saturating(next, &self.fd).0
    }

    /// Measurement of a state vector: `C x`.
    pub fn measure(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.c * x
    }
}
