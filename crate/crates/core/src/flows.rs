//! Demand, supply, and ramp flow functions of the cell-based model.
//!
//! Every flow is a min-composition of fundamental-diagram branches and
//! returns veh/s in `[0, v_f * rho_c]` for valid states and inputs.

use crate::error::ModelError;
use crate::fd::FundamentalDiagram;
use crate::state::{ExogenousInput, TrafficState};
use crate::topology::HighwayTopology;

fn check_section(i: usize, topo: &HighwayTopology) -> Result<(), ModelError> {
    if i >= 1 && i <= topo.sections() {
        Ok(())
    } else {
        Err(ModelError::SectionOutOfRange {
            index: i,
            max: topo.sections(),
        })
    }
}

/// Supply of the off-ramp at section `i`: how much the ramp can absorb.
fn offramp_supply(
    i: usize,
    state: &TrafficState,
    topo: &HighwayTopology,
    fd: &FundamentalDiagram,
) -> f64 {
    let rho_ramp = state.offramp(i, topo).expect("caller checked membership");
    (fd.congestion_wave_speed() * (fd.jam_density() - rho_ramp)).min(fd.capacity())
}

/// Demand of section `i`: the flux it would send downstream given infinite
/// downstream storage. For a section with an off-ramp the demand is scaled by
/// the kept fraction `1 - beta` and limited by the ramp's own supply.
///
/// A zero split ratio on an off-ramp section degenerates to the plain-section
/// demand (no off-ramp flow this step) instead of dividing by zero.
pub fn demand(
    i: usize,
    state: &TrafficState,
    input: &ExogenousInput,
    topo: &HighwayTopology,
    fd: &FundamentalDiagram,
) -> Result<f64, ModelError> {
    check_section(i, topo)?;
    let rho = state.section(i, topo).expect("index checked");
    let free = fd.free_flow_speed() * rho;
    let cap = fd.capacity();
    match input.split_ratio_at(i, topo) {
        Some(beta) if beta > 0.0 => {
            let kept = 1.0 - beta;
            let ramp_limited = kept / beta * offramp_supply(i, state, topo, fd);
            Ok((kept * free).min(kept * cap).min(ramp_limited))
        }
        _ => Ok(free.min(cap)),
    }
}

/// Flow entering section `i` from its on-ramp.
pub fn onramp_flow(
    i: usize,
    state: &TrafficState,
    topo: &HighwayTopology,
    fd: &FundamentalDiagram,
) -> Result<f64, ModelError> {
    check_section(i, topo)?;
    let xi = topo.xi(i).ok_or(ModelError::NoOnRamp(i))?;
    let rho_ramp = state.onramp(i, topo).expect("membership checked");
    let rho = state.section(i, topo).expect("index checked");
    let ramp_demand = fd.free_flow_speed() * rho_ramp;
    let space = xi * (fd.jam_density() - rho);
    let share = xi / fd.congestion_wave_speed() * fd.capacity();
    Ok(ramp_demand.min(space).min(share).max(0.0))
}

/// Supply of section `i`: the flux it can accept from upstream given infinite
/// upstream storage. On-ramp flow claims its share of the available space
/// first; the result is clamped at zero when that share exceeds it.
pub fn supply(
    i: usize,
    state: &TrafficState,
    topo: &HighwayTopology,
    fd: &FundamentalDiagram,
) -> Result<f64, ModelError> {
    check_section(i, topo)?;
    let rho = state.section(i, topo).expect("index checked");
    let space = fd.congestion_wave_speed() * (fd.jam_density() - rho);
    let cap = fd.capacity();
    let r = if topo.has_onramp(i) {
        onramp_flow(i, state, topo, fd)?
    } else {
        0.0
    };
    Ok((space - r).min(cap - r).max(0.0))
}

/// Mainline flow across boundary `i` (0 = upstream of section 1, N =
/// downstream of section N): the min of upstream demand and downstream
/// supply, with the known boundary flows substituted at the ends.
pub fn interface_flow(
    i: usize,
    state: &TrafficState,
    input: &ExogenousInput,
    topo: &HighwayTopology,
    fd: &FundamentalDiagram,
) -> Result<f64, ModelError> {
    let n = topo.sections();
    if i > n {
        return Err(ModelError::BoundaryOutOfRange { index: i, max: n });
    }
    let upstream = if i == 0 {
        input.mainline_in
    } else {
        demand(i, state, input, topo, fd)?
    };
    let downstream = if i == n {
        input.mainline_out
    } else {
        supply(i + 1, state, topo, fd)?
    };
    Ok(upstream.min(downstream))
}

/// Flow entering the on-ramp of section `i` from outside the network.
pub fn onramp_boundary_inflow(
    i: usize,
    state: &TrafficState,
    input: &ExogenousInput,
    topo: &HighwayTopology,
    fd: &FundamentalDiagram,
) -> Result<f64, ModelError> {
    check_section(i, topo)?;
    let rho_ramp = state.onramp(i, topo).ok_or(ModelError::NoOnRamp(i))?;
    let demand_ext = input.onramp_demand_at(i, topo).ok_or(ModelError::NoOnRamp(i))?;
    let space = fd.congestion_wave_speed() * (fd.jam_density() - rho_ramp);
    Ok(space.min(fd.capacity()).min(demand_ext))
}

/// Flow leaving the off-ramp of section `i` out of the network.
pub fn offramp_boundary_outflow(
    i: usize,
    state: &TrafficState,
    input: &ExogenousInput,
    topo: &HighwayTopology,
    fd: &FundamentalDiagram,
) -> Result<f64, ModelError> {
    check_section(i, topo)?;
    let rho_ramp = state.offramp(i, topo).ok_or(ModelError::NoOffRamp(i))?;
    let capacity_ext = input
        .offramp_capacity_at(i, topo)
        .ok_or(ModelError::NoOffRamp(i))?;
    Ok((fd.free_flow_speed() * rho_ramp)
        .min(fd.capacity())
        .min(capacity_ext))
}
