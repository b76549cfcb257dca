//! Traffic density estimation on a ramp-connected stretched highway.
//!
//! The crate has three layers:
//!
//! * a discrete-time macroscopic traffic model (cell-based conservation with
//!   a triangular fundamental diagram and per-section on/off-ramps),
//! * observer-gain synthesis: a linear matrix inequality certifying a bound
//!   on the estimation-error performance output under bounded disturbances,
//!   solved by a small interior-point solver over semidefinite blocks,
//! * an estimation harness that simulates the plant, generates noisy
//!   measurements, and runs a fixed-gain observer against an unscented
//!   Kalman filter baseline, producing comparable traces and reports.
//!
//! All operations are pure functions of their arguments; estimator state is
//! owned by the caller, so independent runs can execute concurrently.

pub mod error;
pub mod experiment;
pub mod fd;
pub mod flows;
pub mod lipschitz;
pub mod lmi;
pub mod metrics;
pub mod observer;
pub mod scenario;
pub mod sdp;
pub mod sim;
pub mod state;
pub mod synthesis;
pub mod topology;
pub mod ukf;

pub use error::{EstimatorError, ModelError, ScenarioError, SynthesisError};
pub use experiment::{run_experiment, ExperimentReport, GainSource};
pub use fd::FundamentalDiagram;
pub use lipschitz::{estimate_lipschitz, estimate_lipschitz_map, LipschitzDomain};
pub use lmi::{assemble_lmi, AssemblyOptions, SynthesisProblem};
pub use metrics::{per_component_rms, rmse, EstimationTrace, PerformanceReport, TraceStep};
pub use observer::{run_observer, ObserverState};
pub use scenario::{
    generate_inputs, inject_noise, simulate_plant, MeasurementStream, PlantRun, Scenario,
    UkfConfig,
};
pub use sdp::{solve_program, ConicProgram, SolveOptions, SolverOutcome};
pub use sim::{assemble_system, raw_update, step, Decomposition, SensorLayout, SystemModel};
pub use state::{ExogenousInput, TrafficState};
pub use synthesis::{
    alpha_sweep, read_report, solve, write_report, SynthesisOptions, SynthesisReportData,
    SynthesisResult,
};
pub use topology::HighwayTopology;
pub use ukf::{run_ukf, ukf_predict, ukf_step, ukf_update, UkfParams, UkfState};
