//! Traffic state and exogenous input vectors.

use nalgebra::DVector;

use crate::error::ModelError;
use crate::fd::FundamentalDiagram;
use crate::topology::HighwayTopology;

/// Stacked density vector: sections `1..=N`, then on-ramps, then off-ramps
/// (each group in ascending section order). Entries in veh/m, inside
/// `[0, rho_m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficState {
    densities: DVector<f64>,
}

impl TrafficState {
    pub fn new(
        densities: DVector<f64>,
        topo: &HighwayTopology,
        fd: &FundamentalDiagram,
    ) -> Result<Self, ModelError> {
        if densities.len() != topo.num_states() {
            return Err(ModelError::InvalidState(format!(
                "expected {} entries, got {}",
                topo.num_states(),
                densities.len()
            )));
        }
        for (i, &rho) in densities.iter().enumerate() {
            if !rho.is_finite() || rho < 0.0 || rho > fd.jam_density() {
                return Err(ModelError::InvalidState(format!(
                    "density {rho} at state {i} outside [0, {}]",
                    fd.jam_density()
                )));
            }
        }
        Ok(Self { densities })
    }

    /// All-zero (empty highway) state.
    pub fn empty(topo: &HighwayTopology) -> Self {
        Self {
            densities: DVector::zeros(topo.num_states()),
        }
    }

    /// Uniform density on every state entry.
    pub fn uniform(
        rho: f64,
        topo: &HighwayTopology,
        fd: &FundamentalDiagram,
    ) -> Result<Self, ModelError> {
        Self::new(DVector::from_element(topo.num_states(), rho), topo, fd)
    }

    /// Internal constructor for values already known to be in range.
    pub(crate) fn from_raw(densities: DVector<f64>) -> Self {
        Self { densities }
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.densities
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.densities
    }

    /// Density of a highway section (1-based index).
    pub fn section(&self, section: usize, topo: &HighwayTopology) -> Option<f64> {
        topo.section_state(section).map(|i| self.densities[i])
    }

    /// Density of the on-ramp at `section`, if one exists.
    pub fn onramp(&self, section: usize, topo: &HighwayTopology) -> Option<f64> {
        topo.onramp_state(section).map(|i| self.densities[i])
    }

    /// Density of the off-ramp at `section`, if one exists.
    pub fn offramp(&self, section: usize, topo: &HighwayTopology) -> Option<f64> {
        topo.offramp_state(section).map(|i| self.densities[i])
    }
}

/// Per-step boundary conditions and ramp demands, all flows in veh/s.
#[derive(Debug, Clone, PartialEq)]
pub struct ExogenousInput {
    /// Traffic wanting to enter section 1.
    pub mainline_in: f64,
    /// Traffic that can leave section N.
    pub mainline_out: f64,
    /// External demand per on-ramp, aligned with the topology's on-ramp set.
    pub onramp_demand: Vec<f64>,
    /// Discharge capacity per off-ramp, aligned with the off-ramp set.
    pub offramp_capacity: Vec<f64>,
    /// Split ratio per off-ramp, each in `[0, 1)`.
    pub split_ratio: Vec<f64>,
}

impl ExogenousInput {
    /// All-zero input (closed boundaries, no ramp demand, zero split).
    pub fn zero(topo: &HighwayTopology) -> Self {
        Self {
            mainline_in: 0.0,
            mainline_out: 0.0,
            onramp_demand: vec![0.0; topo.onramp_sections().len()],
            offramp_capacity: vec![0.0; topo.offramp_sections().len()],
            split_ratio: vec![0.0; topo.offramp_sections().len()],
        }
    }

    pub fn validate(
        &self,
        topo: &HighwayTopology,
        fd: &FundamentalDiagram,
    ) -> Result<(), ModelError> {
        let err = |msg: String| Err(ModelError::InvalidInput(msg));
        if self.onramp_demand.len() != topo.onramp_sections().len() {
            return err(format!(
                "on-ramp demand length {} vs {} on-ramps",
                self.onramp_demand.len(),
                topo.onramp_sections().len()
            ));
        }
        if self.offramp_capacity.len() != topo.offramp_sections().len()
            || self.split_ratio.len() != topo.offramp_sections().len()
        {
            return err(format!(
                "off-ramp input lengths ({}, {}) vs {} off-ramps",
                self.offramp_capacity.len(),
                self.split_ratio.len(),
                topo.offramp_sections().len()
            ));
        }
        let cap = fd.capacity();
        let flows = [self.mainline_in, self.mainline_out]
            .into_iter()
            .chain(self.onramp_demand.iter().copied())
            .chain(self.offramp_capacity.iter().copied());
        for f in flows {
            if !f.is_finite() || f < 0.0 || f > cap {
                return err(format!("flow {f} outside [0, v_f*rho_c = {cap}]"));
            }
        }
        for &b in &self.split_ratio {
            if !b.is_finite() || !(0.0..1.0).contains(&b) {
                return err(format!("split ratio {b} outside [0, 1)"));
            }
        }
        Ok(())
    }

    /// Split ratio for the off-ramp at `section`.
    pub fn split_ratio_at(&self, section: usize, topo: &HighwayTopology) -> Option<f64> {
        topo.offramp_rank(section).map(|r| self.split_ratio[r])
    }

    /// External demand for the on-ramp at `section`.
    pub fn onramp_demand_at(&self, section: usize, topo: &HighwayTopology) -> Option<f64> {
        topo.onramp_rank(section).map(|r| self.onramp_demand[r])
    }

    /// Discharge capacity for the off-ramp at `section`.
    pub fn offramp_capacity_at(&self, section: usize, topo: &HighwayTopology) -> Option<f64> {
        topo.offramp_rank(section).map(|r| self.offramp_capacity[r])
    }

    /// Stacked input vector `[f_in, f_out, on-ramp demands.., off-ramp capacities..]`.
    pub fn as_vector(&self) -> DVector<f64> {
        let mut v = Vec::with_capacity(2 + self.onramp_demand.len() + self.offramp_capacity.len());
        v.push(self.mainline_in);
        v.push(self.mainline_out);
        v.extend_from_slice(&self.onramp_demand);
        v.extend_from_slice(&self.offramp_capacity);
        DVector::from_vec(v)
    }
}
