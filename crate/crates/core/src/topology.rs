//! Highway layout: section count, ramp attachment sets, discretization.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::fd::FundamentalDiagram;

/// A stretched highway of `N` equal-length sections, each optionally carrying
/// an on-ramp and/or an off-ramp. Section indices are 1-based throughout the
/// public API.
///
/// The state vector stacks section densities `1..=N`, then on-ramp densities
/// in ascending section order, then off-ramp densities in ascending section
/// order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighwayTopology {
    sections: usize,
    onramp_sections: Vec<usize>,
    offramp_sections: Vec<usize>,
    cell_length: f64,
    time_step: f64,
    /// Merge occupancy parameter per on-ramp (1/s), aligned with `onramp_sections`.
    xi: Vec<f64>,
}

impl HighwayTopology {
    /// Builds and validates a topology against a fundamental diagram.
    ///
    /// `xi` may be empty (every on-ramp defaults to `w_c`, the least
    /// restrictive merge) or give one value per on-ramp.
    pub fn new(
        sections: usize,
        onramp_sections: Vec<usize>,
        offramp_sections: Vec<usize>,
        cell_length: f64,
        time_step: f64,
        xi: Vec<f64>,
        fd: &FundamentalDiagram,
    ) -> Result<Self, ModelError> {
        let err = |msg: String| Err(ModelError::InvalidTopology(msg));
        if sections == 0 {
            return err("at least one section required".into());
        }
        if !(cell_length.is_finite() && cell_length > 0.0) {
            return err(format!("cell length must be > 0, got {cell_length}"));
        }
        if !(time_step.is_finite() && time_step > 0.0) {
            return err(format!("time step must be > 0, got {time_step}"));
        }
        for (name, set) in [("on-ramp", &onramp_sections), ("off-ramp", &offramp_sections)] {
            if !set.windows(2).all(|w| w[0] < w[1]) {
                return err(format!("{name} sections must be strictly ascending: {set:?}"));
            }
            if set.iter().any(|&s| s == 0 || s > sections) {
                return err(format!("{name} sections out of range 1..={sections}: {set:?}"));
            }
        }
        let xi = if xi.is_empty() {
            vec![fd.congestion_wave_speed(); onramp_sections.len()]
        } else {
            if xi.len() != onramp_sections.len() {
                return err(format!(
                    "xi length {} does not match on-ramp count {}",
                    xi.len(),
                    onramp_sections.len()
                ));
            }
            xi
        };
        for (&section, &x) in onramp_sections.iter().zip(&xi) {
            if !(0.0..=fd.congestion_wave_speed()).contains(&x) {
                return err(format!(
                    "xi for on-ramp at section {section} must lie in [0, w_c = {}], got {x}",
                    fd.congestion_wave_speed()
                ));
            }
        }
        // Stability of the discretization. The free-flow condition is the
        // stated contract; the congestion-wave analogue is also required for
        // the update to stay inside [0, rho_m] and is checked alongside.
        let cfl_free = fd.free_flow_speed() * time_step / cell_length;
        if cfl_free > 1.0 {
            return err(format!("CFL violated: v_f*T/l = {cfl_free} > 1"));
        }
        let cfl_congested = fd.congestion_wave_speed() * time_step / cell_length;
        if cfl_congested > 1.0 {
            return err(format!("CFL violated: w_c*T/l = {cfl_congested} > 1"));
        }
        Ok(Self {
            sections,
            onramp_sections,
            offramp_sections,
            cell_length,
            time_step,
            xi,
        })
    }

    pub fn sections(&self) -> usize {
        self.sections
    }

    pub fn onramp_sections(&self) -> &[usize] {
        &self.onramp_sections
    }

    pub fn offramp_sections(&self) -> &[usize] {
        &self.offramp_sections
    }

    pub fn cell_length(&self) -> f64 {
        self.cell_length
    }

    pub fn time_step(&self) -> f64 {
        self.time_step
    }

    /// `T / l`, the factor converting flows (veh/s) to density increments (veh/m).
    pub fn flow_to_density(&self) -> f64 {
        self.time_step / self.cell_length
    }

    /// CFL number `v_f * T / l` for a given diagram.
    pub fn cfl_number(&self, fd: &FundamentalDiagram) -> f64 {
        fd.free_flow_speed() * self.time_step / self.cell_length
    }

    /// State dimension `n = N + |on-ramps| + |off-ramps|`.
    pub fn num_states(&self) -> usize {
        self.sections + self.onramp_sections.len() + self.offramp_sections.len()
    }

    /// Input dimension `m = 2 + |on-ramps| + |off-ramps|`.
    pub fn num_inputs(&self) -> usize {
        2 + self.onramp_sections.len() + self.offramp_sections.len()
    }

    pub fn has_onramp(&self, section: usize) -> bool {
        self.onramp_sections.binary_search(&section).is_ok()
    }

    pub fn has_offramp(&self, section: usize) -> bool {
        self.offramp_sections.binary_search(&section).is_ok()
    }

    /// Rank of `section` within the ordered on-ramp set.
    pub fn onramp_rank(&self, section: usize) -> Option<usize> {
        self.onramp_sections.binary_search(&section).ok()
    }

    /// Rank of `section` within the ordered off-ramp set.
    pub fn offramp_rank(&self, section: usize) -> Option<usize> {
        self.offramp_sections.binary_search(&section).ok()
    }

    /// 0-based state index of a section density.
    pub fn section_state(&self, section: usize) -> Option<usize> {
        (section >= 1 && section <= self.sections).then(|| section - 1)
    }

    /// 0-based state index of the on-ramp density at `section`.
    pub fn onramp_state(&self, section: usize) -> Option<usize> {
        self.onramp_rank(section).map(|r| self.sections + r)
    }

    /// 0-based state index of the off-ramp density at `section`.
    pub fn offramp_state(&self, section: usize) -> Option<usize> {
        self.offramp_rank(section)
            .map(|r| self.sections + self.onramp_sections.len() + r)
    }

    /// Occupancy parameter of the on-ramp at `section`.
    pub fn xi(&self, section: usize) -> Option<f64> {
        self.onramp_rank(section).map(|r| self.xi[r])
    }

    pub fn xi_values(&self) -> &[f64] {
        &self.xi
    }
}
