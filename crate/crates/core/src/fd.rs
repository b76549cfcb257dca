//! Triangular fundamental diagram: the density-to-flow map of the highway.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Relative tolerance on the continuity condition `v_f * rho_c = w_c * (rho_m - rho_c)`.
///
/// Published parameter sets are usually rounded unit conversions and miss
/// exact continuity by a fraction of a percent; 2% accepts them verbatim.
pub const CONTINUITY_TOL: f64 = 0.02;

/// Triangular fundamental diagram parameters, all in SI units.
///
/// Flow rises with slope `v_f` (free-flow speed, m/s) up to the critical
/// density `rho_c` (veh/m), then falls with slope `-w_c` (congestion wave
/// speed, m/s) until the jam density `rho_m` (veh/m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FundamentalDiagram {
    free_flow_speed: f64,
    congestion_wave_speed: f64,
    critical_density: f64,
    jam_density: f64,
}

impl FundamentalDiagram {
    pub fn new(
        free_flow_speed: f64,
        congestion_wave_speed: f64,
        critical_density: f64,
        jam_density: f64,
    ) -> Result<Self, ModelError> {
        let fd = Self {
            free_flow_speed,
            congestion_wave_speed,
            critical_density,
            jam_density,
        };
        fd.validate()?;
        Ok(fd)
    }

    fn validate(&self) -> Result<(), ModelError> {
        let err = |msg: String| Err(ModelError::InvalidDiagram(msg));
        if !self.free_flow_speed.is_finite() || self.free_flow_speed <= 0.0 {
            return err(format!("free-flow speed must be > 0, got {}", self.free_flow_speed));
        }
        if !self.congestion_wave_speed.is_finite() || self.congestion_wave_speed <= 0.0 {
            return err(format!(
                "congestion wave speed must be > 0, got {}",
                self.congestion_wave_speed
            ));
        }
        if !self.critical_density.is_finite() || self.critical_density <= 0.0 {
            return err(format!("critical density must be > 0, got {}", self.critical_density));
        }
        if !self.jam_density.is_finite() || self.jam_density <= self.critical_density {
            return err(format!(
                "jam density must exceed critical density ({} <= {})",
                self.jam_density, self.critical_density
            ));
        }
        let free_peak = self.free_flow_speed * self.critical_density;
        let congested_peak =
            self.congestion_wave_speed * (self.jam_density - self.critical_density);
        if (free_peak - congested_peak).abs() > CONTINUITY_TOL * free_peak {
            return err(format!(
                "discontinuous at the critical density: v_f*rho_c = {free_peak} vs \
                 w_c*(rho_m - rho_c) = {congested_peak} (tolerance {CONTINUITY_TOL:.0e} relative)"
            ));
        }
        Ok(())
    }

    /// Free-flow speed `v_f` (m/s).
    pub fn free_flow_speed(&self) -> f64 {
        self.free_flow_speed
    }

    /// Congestion wave speed `w_c` (m/s).
    pub fn congestion_wave_speed(&self) -> f64 {
        self.congestion_wave_speed
    }

    /// Critical density `rho_c` (veh/m).
    pub fn critical_density(&self) -> f64 {
        self.critical_density
    }

    /// Jam density `rho_m` (veh/m).
    pub fn jam_density(&self) -> f64 {
        self.jam_density
    }

    /// Peak flow `v_f * rho_c` (veh/s); every flow in the model is capped by it.
    pub fn capacity(&self) -> f64 {
        self.free_flow_speed * self.critical_density
    }

    /// The triangular flux map itself.
    pub fn flux(&self, density: f64) -> f64 {
        if density <= self.critical_density {
            self.free_flow_speed * density.max(0.0)
        } else {
            (self.congestion_wave_speed * (self.jam_density - density)).max(0.0)
        }
    }
}
