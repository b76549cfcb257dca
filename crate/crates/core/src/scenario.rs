//! Scenario files and the generators that turn them into experiment inputs.
//!
//! A scenario is a TOML document with six tables; all values are SI units
//! (m, s, veh/m, veh/s). Key names are exactly the struct field names below:
//!
//! ```toml
//! [fd]          # triangular fundamental diagram
//! free_flow_speed = 28.8889
//! congestion_wave_speed = 6.6667
//! critical_density = 0.0249
//! jam_density = 0.1333
//!
//! [highway]
//! sections = 10
//! onramp_sections = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]
//! offramp_sections = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]
//! cell_length = 200.0
//! time_step = 1.0
//! # xi = [...]                 # optional, one per on-ramp, defaults to w_c
//!
//! [sensors]
//! sections = [2, 5, 10]
//! onramps = [2, 4, 5, 7, 9]
//! offramps = [1, 3, 6, 8, 10]
//!
//! [run]
//! horizon = 3000
//! seed = 42
//! split_ratio = 0.1
//! input_hold_steps = 60        # redraw period of the random demands
//! # initial_estimate_density = 0.06665   # optional, defaults to rho_m / 2
//!
//! [noise]
//! process_variance = 0.0
//! measurement_variance = 1e-3
//! truncation_sigmas = 3.0
//!
//! [synthesis]
//! alpha = 0.05
//! gamma = 0.5
//! mu1 = 1e4
//! performance_weight = 0.1
//! contraction = 0.45           # omit for an identity linear part
//!
//! [ukf]                        # optional, defaults shown
//! alpha = 0.01
//! beta = 2.0
//! kappa = -4.0
//! process_variance = 1e-3
//! initial_covariance = 1e-4
//! ```

use std::path::Path;

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ScenarioError;
use crate::fd::FundamentalDiagram;
use crate::sim::{assemble_system, clamp_checked, raw_update, Decomposition, SensorLayout, SystemModel};
use crate::state::{ExogenousInput, TrafficState};
use crate::topology::HighwayTopology;

/// UKF tuning carried by the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UkfConfig {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    pub process_variance: f64,
    pub initial_covariance: f64,
}

impl Default for UkfConfig {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            beta: 2.0,
            kappa: -4.0,
            process_variance: 1e-3,
            initial_covariance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FdTable {
    free_flow_speed: f64,
    congestion_wave_speed: f64,
    critical_density: f64,
    jam_density: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct HighwayTable {
    sections: usize,
    onramp_sections: Vec<usize>,
    offramp_sections: Vec<usize>,
    cell_length: f64,
    time_step: f64,
    #[serde(default)]
    xi: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunTable {
    horizon: usize,
    seed: u64,
    split_ratio: f64,
    input_hold_steps: usize,
    #[serde(default)]
    initial_estimate_density: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NoiseTable {
    process_variance: f64,
    measurement_variance: f64,
    truncation_sigmas: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SynthesisTable {
    alpha: f64,
    gamma: f64,
    mu1: f64,
    performance_weight: f64,
    #[serde(default)]
    contraction: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScenarioFile {
    fd: FdTable,
    highway: HighwayTable,
    sensors: SensorLayout,
    run: RunTable,
    noise: NoiseTable,
    synthesis: SynthesisTable,
    #[serde(default)]
    ukf: UkfConfig,
}

/// A validated scenario: everything needed to reproduce one experiment.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub fd: FundamentalDiagram,
    pub topo: HighwayTopology,
    pub sensors: SensorLayout,
    pub horizon: usize,
    pub seed: u64,
    pub split_ratio: f64,
    pub input_hold_steps: usize,
    pub initial_estimate_density: f64,
    pub process_variance: f64,
    pub measurement_variance: f64,
    pub truncation_sigmas: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub mu1: f64,
    pub performance_weight: f64,
    pub decomposition: Decomposition,
    pub ukf: UkfConfig,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_toml(&text)
    }

    fn from_file(file: ScenarioFile) -> Result<Self, ScenarioError> {
        let fd = FundamentalDiagram::new(
            file.fd.free_flow_speed,
            file.fd.congestion_wave_speed,
            file.fd.critical_density,
            file.fd.jam_density,
        )?;
        let topo = HighwayTopology::new(
            file.highway.sections,
            file.highway.onramp_sections,
            file.highway.offramp_sections,
            file.highway.cell_length,
            file.highway.time_step,
            file.highway.xi,
            &fd,
        )?;
        let err = |msg: String| Err(ScenarioError::Validation(msg));
        if file.run.horizon == 0 {
            return err("horizon must be at least 1".into());
        }
        if file.run.input_hold_steps == 0 {
            return err("input_hold_steps must be at least 1".into());
        }
        if !(0.0..1.0).contains(&file.run.split_ratio) {
            return err(format!("split_ratio {} outside [0, 1)", file.run.split_ratio));
        }
        if file.noise.process_variance < 0.0 || file.noise.measurement_variance < 0.0 {
            return err("noise variances must be nonnegative".into());
        }
        if file.noise.truncation_sigmas <= 0.0 {
            return err("truncation_sigmas must be positive".into());
        }
        if !(file.synthesis.alpha > 0.0 && file.synthesis.alpha < 1.0) {
            return err(format!("alpha {} outside (0, 1)", file.synthesis.alpha));
        }
        if file.synthesis.gamma < 0.0 || file.synthesis.mu1 <= 0.0 {
            return err("gamma must be >= 0 and mu1 > 0".into());
        }
        let decomposition = match file.synthesis.contraction {
            None => Decomposition::Identity,
            Some(a) if a > 0.0 && a < 1.0 => Decomposition::Contraction(a),
            Some(a) => return err(format!("contraction {a} outside (0, 1)")),
        };
        let initial_estimate_density = file
            .run
            .initial_estimate_density
            .unwrap_or(fd.jam_density() / 2.0);
        if !(0.0..=fd.jam_density()).contains(&initial_estimate_density) {
            return err(format!(
                "initial_estimate_density {initial_estimate_density} outside [0, rho_m]"
            ));
        }
        // Sensor layout is validated against the topology here so a broken
        // scenario fails on load, not mid-pipeline.
        file.sensors.state_indices(&topo)?;
        Ok(Self {
            fd,
            topo,
            sensors: file.sensors,
            horizon: file.run.horizon,
            seed: file.run.seed,
            split_ratio: file.run.split_ratio,
            input_hold_steps: file.run.input_hold_steps,
            initial_estimate_density,
            process_variance: file.noise.process_variance,
            measurement_variance: file.noise.measurement_variance,
            truncation_sigmas: file.noise.truncation_sigmas,
            alpha: file.synthesis.alpha,
            gamma: file.synthesis.gamma,
            mu1: file.synthesis.mu1,
            performance_weight: file.synthesis.performance_weight,
            decomposition,
            ukf: file.ukf,
        })
    }

    fn to_file(&self) -> ScenarioFile {
        ScenarioFile {
            fd: FdTable {
                free_flow_speed: self.fd.free_flow_speed(),
                congestion_wave_speed: self.fd.congestion_wave_speed(),
                critical_density: self.fd.critical_density(),
                jam_density: self.fd.jam_density(),
            },
            highway: HighwayTable {
                sections: self.topo.sections(),
                onramp_sections: self.topo.onramp_sections().to_vec(),
                offramp_sections: self.topo.offramp_sections().to_vec(),
                cell_length: self.topo.cell_length(),
                time_step: self.topo.time_step(),
                xi: self.topo.xi_values().to_vec(),
            },
            sensors: self.sensors.clone(),
            run: RunTable {
                horizon: self.horizon,
                seed: self.seed,
                split_ratio: self.split_ratio,
                input_hold_steps: self.input_hold_steps,
                initial_estimate_density: Some(self.initial_estimate_density),
            },
            noise: NoiseTable {
                process_variance: self.process_variance,
                measurement_variance: self.measurement_variance,
                truncation_sigmas: self.truncation_sigmas,
            },
            synthesis: SynthesisTable {
                alpha: self.alpha,
                gamma: self.gamma,
                mu1: self.mu1,
                performance_weight: self.performance_weight,
                contraction: match self.decomposition {
                    Decomposition::Identity => None,
                    Decomposition::Contraction(a) => Some(a),
                },
            },
            ukf: self.ukf,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(&self.to_file()).expect("scenario serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), ScenarioError> {
        std::fs::write(path, self.to_toml()).map_err(|e| ScenarioError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    /// Content digest identifying the scenario (parameters and seed).
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_toml().as_bytes());
        hex_digest(hasher)
    }

    pub fn build_model(&self) -> Result<SystemModel, ScenarioError> {
        Ok(assemble_system(
            &self.topo,
            &self.fd,
            &self.sensors,
            self.decomposition,
        )?)
    }

    /// Observer and filter both start from this estimate.
    pub fn initial_estimate(&self) -> DVector<f64> {
        DVector::from_element(self.topo.num_states(), self.initial_estimate_density)
    }

    /// Random initial plant state, uniform over the density box.
    pub fn initial_state(&self) -> TrafficState {
        let mut rng = stream_rng(self.seed, 0);
        let jam = self.fd.jam_density();
        TrafficState::from_raw(DVector::from_fn(self.topo.num_states(), |_, _| {
            rng.random::<f64>() * jam
        }))
    }

    /// The per-step input schedule for this scenario.
    pub fn input_schedule(&self) -> Vec<ExogenousInput> {
        generate_inputs(
            &self.topo,
            &self.fd,
            self.horizon,
            self.input_hold_steps,
            self.split_ratio,
            self.seed,
        )
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn hex_digest(hasher: Sha256) -> String {
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Piecewise-constant random demands: every boundary and ramp channel is
/// redrawn uniformly from `[0, v_f rho_c]` each `hold` steps. Deterministic
/// in the seed.
pub fn generate_inputs(
    topo: &HighwayTopology,
    fd: &FundamentalDiagram,
    horizon: usize,
    hold: usize,
    split_ratio: f64,
    seed: u64,
) -> Vec<ExogenousInput> {
    let mut rng = stream_rng(seed, 1);
    let cap = fd.capacity();
    let n_on = topo.onramp_sections().len();
    let n_off = topo.offramp_sections().len();
    let channels = 2 + n_on + n_off;
    let segments = horizon.div_ceil(hold);
    let draws: Vec<Vec<f64>> = (0..channels)
        .map(|_| (0..segments).map(|_| rng.random::<f64>() * cap).collect())
        .collect();
    (0..horizon)
        .map(|k| {
            let seg = k / hold;
            ExogenousInput {
                mainline_in: draws[0][seg],
                mainline_out: draws[1][seg],
                onramp_demand: (0..n_on).map(|i| draws[2 + i][seg]).collect(),
                offramp_capacity: (0..n_off).map(|i| draws[2 + n_on + i][seg]).collect(),
                split_ratio: vec![split_ratio; n_off],
            }
        })
        .collect()
}

/// Measurement noise draws, truncated to keep the disturbance bounded.
#[derive(Debug, Clone)]
pub struct NoiseRecord {
    /// Noisy measurements, one per step.
    pub y_noisy: Vec<DVector<f64>>,
    /// Per-step measurement-noise vectors (the measurement rows of `w`).
    pub w_meas: Vec<DVector<f64>>,
}

/// Adds i.i.d. zero-mean Gaussian noise of the given variance to every
/// sensor channel, truncating each draw at `truncation_sigmas` standard
/// deviations so the disturbance signal has a hard bound.
pub fn inject_noise(
    y_clean: &[DVector<f64>],
    variance: f64,
    truncation_sigmas: f64,
    seed: u64,
) -> NoiseRecord {
    let sigma = variance.sqrt();
    let bound = truncation_sigmas * sigma;
    let mut rng = stream_rng(seed, 2);
    let normal = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("sigma is finite");
    let mut y_noisy = Vec::with_capacity(y_clean.len());
    let mut w_meas = Vec::with_capacity(y_clean.len());
    for y in y_clean {
        let w = if sigma == 0.0 {
            DVector::zeros(y.len())
        } else {
            DVector::from_fn(y.len(), |_, _| {
                normal.sample(&mut rng).clamp(-bound, bound)
            })
        };
        y_noisy.push(y + &w);
        w_meas.push(w);
    }
    NoiseRecord { y_noisy, w_meas }
}

/// A simulated plant trajectory with its clean measurements.
#[derive(Debug, Clone)]
pub struct PlantRun {
    /// States `x[0..=horizon]`.
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<ExogenousInput>,
    /// Clean measurements `C x[k]` for `k = 0..horizon`.
    pub y_clean: Vec<DVector<f64>>,
    /// Per-step process-noise vectors (the state rows of `w`).
    pub w_proc: Vec<DVector<f64>>,
}

/// Simulates the plant over the scenario horizon, injecting truncated
/// process noise when the scenario carries a nonzero process variance.
pub fn simulate_plant(scenario: &Scenario, model: &SystemModel) -> Result<PlantRun, ScenarioError> {
    let topo = &scenario.topo;
    let fd = &scenario.fd;
    let inputs = scenario.input_schedule();
    let mut state = scenario.initial_state();
    let sigma = scenario.process_variance.sqrt();
    let bound = scenario.truncation_sigmas * sigma;
    let mut rng = stream_rng(scenario.seed, 3);
    let normal = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("sigma is finite");

    let mut states = Vec::with_capacity(scenario.horizon + 1);
    let mut y_clean = Vec::with_capacity(scenario.horizon);
    let mut w_proc = Vec::with_capacity(scenario.horizon);
    states.push(state.as_vector().clone());
    for input in &inputs {
        y_clean.push(model.measure(state.as_vector()));
        let mut next = raw_update(&state, input, topo, fd)?;
        let w = if sigma == 0.0 {
            DVector::zeros(next.len())
        } else {
            DVector::from_fn(next.len(), |_, _| {
                normal.sample(&mut rng).clamp(-bound, bound)
            })
        };
        if sigma > 0.0 {
            next += &w;
            // Process noise may push the state outside the box; the plant
            // saturates physically rather than erroring.
            next = crate::sim::clamp_saturating(next, fd).0;
        } else {
            next = clamp_checked(next, fd)?;
        }
        w_proc.push(w);
        state = TrafficState::from_raw(next);
        states.push(state.as_vector().clone());
    }
    Ok(PlantRun {
        states,
        inputs,
        y_clean,
        w_proc,
    })
}

/// The noisy measurement record both estimator arms consume, plus the
/// realized disturbance bookkeeping.
#[derive(Debug, Clone)]
pub struct MeasurementStream {
    pub y: Vec<DVector<f64>>,
    /// Realized `max_k ||w[k]||_2` of the stacked disturbance.
    pub w_linf: f64,
    pub digest: String,
}

impl MeasurementStream {
    /// Builds the stream from a plant run, stacking `w = [w_proc; w_meas]`
    /// per step for the disturbance record.
    pub fn build(run: &PlantRun, scenario: &Scenario) -> Self {
        let noise = inject_noise(
            &run.y_clean,
            scenario.measurement_variance,
            scenario.truncation_sigmas,
            scenario.seed,
        );
        let mut w_linf = 0.0f64;
        for (wp, wm) in run.w_proc.iter().zip(&noise.w_meas) {
            let norm = (wp.norm_squared() + wm.norm_squared()).sqrt();
            w_linf = w_linf.max(norm);
        }
        let mut hasher = Sha256::new();
        hasher.update((noise.y_noisy.len() as u64).to_le_bytes());
        for y in &noise.y_noisy {
            hasher.update((y.len() as u64).to_le_bytes());
            for v in y.iter() {
                hasher.update(v.to_le_bytes());
            }
        }
        Self {
            y: noise.y_noisy,
            w_linf,
            digest: hex_digest(hasher),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const BENCH_TOML: &str = r#"
[fd]
free_flow_speed = 28.8889
congestion_wave_speed = 6.6667
critical_density = 0.0249
jam_density = 0.1333

[highway]
sections = 10
onramp_sections = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]
offramp_sections = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]
cell_length = 200.0
time_step = 1.0

[sensors]
sections = [2, 5, 10]
onramps = [2, 4, 5, 7, 9]
offramps = [1, 3, 6, 8, 10]

[run]
horizon = 3000
seed = 42
split_ratio = 0.1
input_hold_steps = 60

[noise]
process_variance = 0.0
measurement_variance = 1e-3
truncation_sigmas = 3.0

[synthesis]
alpha = 0.05
gamma = 0.5
mu1 = 1e4
performance_weight = 0.1
contraction = 0.45
"#;

    #[test]
    fn parses_and_validates_benchmark_scenario() {
        let s = Scenario::from_toml(BENCH_TOML).unwrap();
        assert_eq!(s.topo.num_states(), 30);
        assert_eq!(s.topo.num_inputs(), 22);
        assert_eq!(s.horizon, 3000);
        assert_eq!(s.ukf, UkfConfig::default());
        assert!((s.initial_estimate_density - 0.06665).abs() < 1e-12);
        let model = s.build_model().unwrap();
        assert_eq!(model.num_measurements(), 13);
    }

    #[test]
    fn scenario_round_trips_through_toml() {
        let s = Scenario::from_toml(BENCH_TOML).unwrap();
        let again = Scenario::from_toml(&s.to_toml()).unwrap();
        assert_eq!(s.digest(), again.digest());
    }

    #[test]
    fn rejects_malformed_and_invalid() {
        assert!(matches!(
            Scenario::from_toml("not toml at all ["),
            Err(ScenarioError::Parse(_))
        ));
        let bad = BENCH_TOML.replace("split_ratio = 0.1", "split_ratio = 1.0");
        assert!(matches!(
            Scenario::from_toml(&bad),
            Err(ScenarioError::Validation(_))
        ));
        let bad = BENCH_TOML.replace("contraction = 0.45", "contraction = 1.45");
        assert!(Scenario::from_toml(&bad).is_err());
    }

    #[test]
    fn input_schedule_is_deterministic_and_segmented() {
        let s = Scenario::from_toml(BENCH_TOML).unwrap();
        let a = s.input_schedule();
        let b = s.input_schedule();
        assert_eq!(a.len(), 3000);
        assert_eq!(a, b);
        // 3000 / 60 = 50 segments: the schedule changes exactly at segment
        // boundaries for at least one channel.
        let mut changes = 0;
        for k in 1..a.len() {
            if a[k] != a[k - 1] {
                assert_eq!(k % 60, 0, "change off the segment grid at {k}");
                changes += 1;
            }
        }
        assert!(changes >= 45, "expected ~49 segment changes, saw {changes}");
        // All draws inside [0, capacity].
        let cap = s.fd.capacity();
        for u in &a {
            assert!(u.mainline_in >= 0.0 && u.mainline_in <= cap);
            assert!(u.onramp_demand.iter().all(|&v| (0.0..=cap).contains(&v)));
        }
    }

    #[test]
    fn single_step_horizon_draws_once_per_channel() {
        let fd = FundamentalDiagram::new(28.8889, 6.6667, 0.0249, 0.1333).unwrap();
        let topo = HighwayTopology::new(2, vec![1], vec![2], 200.0, 1.0, vec![], &fd).unwrap();
        let schedule = generate_inputs(&topo, &fd, 1, 60, 0.1, 7);
        assert_eq!(schedule.len(), 1);
    }

    #[test]
    fn zero_variance_noise_is_identity() {
        let y = vec![DVector::from_vec(vec![0.1, 0.2]); 5];
        let rec = inject_noise(&y, 0.0, 3.0, 1);
        assert_eq!(rec.y_noisy, y);
        assert!(rec.w_meas.iter().all(|w| w.norm() == 0.0));
    }

    #[test]
    fn noise_respects_truncation_bound() {
        let p = 13;
        let r = 1e-3;
        let y = vec![DVector::zeros(p); 2000];
        let rec = inject_noise(&y, r, 3.0, 99);
        let bound = 3.0 * (p as f64 * r).sqrt();
        for w in &rec.w_meas {
            assert!(w.norm() <= bound + 1e-12);
            for v in w.iter() {
                assert!(v.abs() <= 3.0 * r.sqrt() + 1e-15);
            }
        }
    }

    #[test]
    fn plant_simulation_is_deterministic_and_in_box() {
        let mut s = Scenario::from_toml(BENCH_TOML).unwrap();
        s.horizon = 200;
        let model = s.build_model().unwrap();
        let a = simulate_plant(&s, &model).unwrap();
        let b = simulate_plant(&s, &model).unwrap();
        assert_eq!(a.states, b.states);
        let jam = s.fd.jam_density();
        for x in &a.states {
            assert!(x.iter().all(|&v| (0.0..=jam).contains(&v)));
        }
        let stream_a = MeasurementStream::build(&a, &s);
        let stream_b = MeasurementStream::build(&b, &s);
        assert_eq!(stream_a.digest, stream_b.digest);
        assert!(stream_a.w_linf > 0.0);
        assert!(stream_a.w_linf <= 3.0 * (13.0f64 * 1e-3).sqrt());
    }
}
