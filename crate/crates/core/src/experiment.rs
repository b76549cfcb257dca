//! End-to-end experiment: simulate the plant once, feed the identical noisy
//! measurement stream to both estimators, and bundle comparable results.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;
use crate::metrics::{EstimationTrace, PerformanceReport, TraceStep};
use crate::observer::run_observer;
use crate::scenario::{simulate_plant, MeasurementStream, Scenario};
use crate::synthesis::{read_report, solve, SynthesisOptions, SynthesisReportData};
use crate::ukf::{run_ukf, UkfParams};

/// Where the observer gain comes from.
#[derive(Debug, Clone)]
pub enum GainSource {
    /// Solve the synthesis problem defined by the scenario.
    Synthesize,
    /// Read a previously written synthesis report file.
    Report(std::path::PathBuf),
    /// Use a gain and performance level supplied directly.
    Direct { gain: DMatrix<f64>, mu: f64 },
}

/// Everything one experiment produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub scenario_digest: String,
    pub stream_digest: String,
    /// Certified disturbance-to-performance level of the observer gain.
    pub mu: f64,
    /// Realized sup norm of the stacked disturbance.
    pub w_linf: f64,
    /// `mu * w_linf`, the certified asymptotic bound on the performance
    /// output norm.
    pub zeta: f64,
    /// First step from which the observer's performance output stays at or
    /// below `zeta`.
    pub observer_settle_step: Option<usize>,
    pub observer: EstimationTrace,
    pub ukf: EstimationTrace,
    /// Present when the gain was synthesized (or loaded) with its
    /// certificate scalars.
    pub synthesis: Option<SynthesisReportData>,
}

/// Runs the full pipeline for one scenario.
pub fn run_experiment(
    scenario: &Scenario,
    gain_source: &GainSource,
    synthesis_options: &SynthesisOptions,
) -> Result<ExperimentReport, ScenarioError> {
    let model = scenario.build_model()?;
    let n = model.num_states();
    let p = model.num_measurements();

    let (gain, mu, synthesis) = match gain_source {
        GainSource::Synthesize => {
            let problem = crate::lmi::SynthesisProblem::from_model(
                &model,
                scenario.performance_weight,
                scenario.gamma,
                scenario.alpha,
                scenario.mu1,
            );
            let result = solve(&problem, synthesis_options)?;
            let data = result.report_data();
            (result.gain, result.mu, Some(data))
        }
        GainSource::Report(path) => {
            let data = read_report(path)?;
            (data.gain.clone(), data.mu, Some(data))
        }
        GainSource::Direct { gain, mu } => (gain.clone(), *mu, None),
    };
    if gain.nrows() != n || gain.ncols() != p {
        return Err(ScenarioError::Validation(format!(
            "gain is {}x{}, model needs {}x{}",
            gain.nrows(),
            gain.ncols(),
            n,
            p
        )));
    }

    let run = simulate_plant(scenario, &model)?;
    let stream = MeasurementStream::build(&run, scenario);
    let perf = DMatrix::<f64>::identity(n, n) * scenario.performance_weight;
    let xhat0 = scenario.initial_estimate();

    let ukf_params = UkfParams {
        alpha: scenario.ukf.alpha,
        beta: scenario.ukf.beta,
        kappa: scenario.ukf.kappa,
    };
    let q = DMatrix::<f64>::identity(n, n) * scenario.ukf.process_variance;
    let r = DMatrix::<f64>::identity(p, p) * scenario.measurement_variance;
    let p0 = DMatrix::<f64>::identity(n, n) * scenario.ukf.initial_covariance;

    // The two arms consume the same materialized stream and are independent.
    let (observer_trace, ukf_trace) = std::thread::scope(|scope| {
        let observer_arm = scope.spawn(|| {
            run_observer(
                &model,
                &gain,
                &xhat0,
                &run.states,
                &stream.y,
                &run.inputs,
                &perf,
                &stream.digest,
            )
        });
        let ukf_arm = scope.spawn(|| {
            run_ukf(
                &model,
                &ukf_params,
                &xhat0,
                &p0,
                &q,
                &r,
                &run.states,
                &stream.y,
                &run.inputs,
                &perf,
                &stream.digest,
            )
        });
        (
            observer_arm.join().expect("observer arm panicked"),
            ukf_arm.join().expect("ukf arm panicked"),
        )
    });
    let observer_trace =
        observer_trace.map_err(|e| ScenarioError::Validation(format!("observer arm: {e}")))?;
    let ukf_trace = ukf_trace.map_err(|e| ScenarioError::Validation(format!("ukf arm: {e}")))?;
    debug_assert_eq!(observer_trace.stream_digest, ukf_trace.stream_digest);

    let performance = PerformanceReport::new(&observer_trace, mu, stream.w_linf)?;
    Ok(ExperimentReport {
        scenario_digest: scenario.digest(),
        stream_digest: stream.digest,
        mu,
        w_linf: stream.w_linf,
        zeta: performance.zeta,
        observer_settle_step: performance.settle_step,
        observer: observer_trace,
        ukf: ukf_trace,
        synthesis,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct ReportSummary {
    scenario_digest: String,
    stream_digest: String,
    mu: f64,
    w_linf: f64,
    zeta: f64,
    observer_settle_step: Option<usize>,
    observer_rmse: f64,
    ukf_rmse: f64,
    observer_wall_seconds: f64,
    ukf_wall_seconds: f64,
    observer_stream_digest: String,
    ukf_stream_digest: String,
    has_synthesis: bool,
}

impl ExperimentReport {
    /// Human-readable comparison table.
    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<12} {:>12} {:>16}\n",
            "estimator", "rmse", "wall_seconds"
        ));
        out.push_str(&format!(
            "{:<12} {:>12.6} {:>16.4}\n",
            "observer", self.observer.rmse, self.observer.wall_seconds
        ));
        out.push_str(&format!(
            "{:<12} {:>12.6} {:>16.4}\n",
            "ukf", self.ukf.rmse, self.ukf.wall_seconds
        ));
        out.push_str(&format!(
            "mu = {}  ||w||_inf = {}  zeta = {}\n",
            self.mu, self.w_linf, self.zeta
        ));
        match self.observer_settle_step {
            Some(k) => out.push_str(&format!(
                "performance output stays below zeta from step {k}\n"
            )),
            None => out.push_str("performance output never settles below zeta\n"),
        }
        out
    }

    /// Equality that ignores wall-time fields (reruns with the same seed
    /// must agree on everything else).
    pub fn content_eq(&self, other: &Self) -> bool {
        let strip = |r: &Self| {
            let mut r = r.clone();
            r.observer.wall_seconds = 0.0;
            r.ukf.wall_seconds = 0.0;
            if let Some(s) = r.synthesis.as_mut() {
                s.solve_seconds = 0.0;
            }
            r
        };
        strip(self) == strip(other)
    }

    /// Writes the report as a directory: `report.toml` (summary scalars),
    /// one full CSV per estimator arm, plot-ready series, and the synthesis
    /// report when present.
    pub fn write_dir(&self, dir: &Path) -> Result<(), ScenarioError> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let summary = ReportSummary {
            scenario_digest: self.scenario_digest.clone(),
            stream_digest: self.stream_digest.clone(),
            mu: self.mu,
            w_linf: self.w_linf,
            zeta: self.zeta,
            observer_settle_step: self.observer_settle_step,
            observer_rmse: self.observer.rmse,
            ukf_rmse: self.ukf.rmse,
            observer_wall_seconds: self.observer.wall_seconds,
            ukf_wall_seconds: self.ukf.wall_seconds,
            observer_stream_digest: self.observer.stream_digest.clone(),
            ukf_stream_digest: self.ukf.stream_digest.clone(),
            has_synthesis: self.synthesis.is_some(),
        };
        let text = toml::to_string_pretty(&summary)
            .map_err(|e| ScenarioError::ReportFormat(e.to_string()))?;
        write_file(&dir.join("report.toml"), &text)?;
        write_trace_csv(&dir.join("observer_trace.csv"), &self.observer)?;
        write_trace_csv(&dir.join("ukf_trace.csv"), &self.ukf)?;
        if let Some(synth) = &self.synthesis {
            crate::synthesis::write_report(synth, &dir.join("synthesis.txt"))?;
        }

        // Plot series: performance output vs bound, error norms, densities.
        let mut perf = String::from("k,observer_perf_norm,zeta\n");
        for s in &self.observer.steps {
            perf.push_str(&format!("{},{},{}\n", s.k, s.perf_norm, self.zeta));
        }
        write_file(&dir.join("performance.csv"), &perf)?;

        let mut err = String::from("k,observer_error_norm,ukf_error_norm\n");
        for (o, u) in self.observer.steps.iter().zip(&self.ukf.steps) {
            err.push_str(&format!("{},{},{}\n", o.k, o.error_norm, u.error_norm));
        }
        write_file(&dir.join("error_norms.csv"), &err)?;
        Ok(())
    }

    /// Writes the three density-evolution series (true vs observer estimate)
    /// split by state group, given the group sizes.
    pub fn write_density_series(
        &self,
        dir: &Path,
        sections: usize,
        onramps: usize,
        offramps: usize,
    ) -> Result<(), ScenarioError> {
        let groups = [
            ("densities_sections.csv", 0, sections),
            ("densities_onramps.csv", sections, onramps),
            ("densities_offramps.csv", sections + onramps, offramps),
        ];
        for (name, offset, count) in groups {
            if count == 0 {
                continue;
            }
            let mut head = vec!["k".to_string()];
            for i in 0..count {
                head.push(format!("true_{}", i + 1));
            }
            for i in 0..count {
                head.push(format!("est_{}", i + 1));
            }
            let mut text = head.join(",");
            text.push('\n');
            for s in &self.observer.steps {
                let mut row = vec![s.k.to_string()];
                for i in 0..count {
                    row.push(format!("{}", s.x[offset + i]));
                }
                for i in 0..count {
                    row.push(format!("{}", s.xhat[offset + i]));
                }
                text.push_str(&row.join(","));
                text.push('\n');
            }
            write_file(&dir.join(name), &text)?;
        }
        Ok(())
    }

    /// Reads back a directory written by [`ExperimentReport::write_dir`].
    pub fn read_dir(dir: &Path) -> Result<Self, ScenarioError> {
        let text =
            std::fs::read_to_string(dir.join("report.toml")).map_err(|e| io_err(dir, e))?;
        let summary: ReportSummary =
            toml::from_str(&text).map_err(|e| ScenarioError::ReportFormat(e.to_string()))?;
        let mut observer = read_trace_csv(&dir.join("observer_trace.csv"), "observer")?;
        observer.rmse = summary.observer_rmse;
        observer.wall_seconds = summary.observer_wall_seconds;
        observer.stream_digest = summary.observer_stream_digest.clone();
        let mut ukf = read_trace_csv(&dir.join("ukf_trace.csv"), "ukf")?;
        ukf.rmse = summary.ukf_rmse;
        ukf.wall_seconds = summary.ukf_wall_seconds;
        ukf.stream_digest = summary.ukf_stream_digest.clone();
        let synthesis = if summary.has_synthesis {
            Some(read_report(&dir.join("synthesis.txt"))?)
        } else {
            None
        };
        Ok(Self {
            scenario_digest: summary.scenario_digest,
            stream_digest: summary.stream_digest,
            mu: summary.mu,
            w_linf: summary.w_linf,
            zeta: summary.zeta,
            observer_settle_step: summary.observer_settle_step,
            observer,
            ukf,
            synthesis,
        })
    }
}

fn io_err(path: &Path, e: std::io::Error) -> ScenarioError {
    ScenarioError::Io {
        path: path.display().to_string(),
        source: e,
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), ScenarioError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// One row per step: `k`, the true state, the estimate, the measurement the
/// step consumed, then the two norms. Floats use the shortest exact form.
fn write_trace_csv(path: &Path, trace: &EstimationTrace) -> Result<(), ScenarioError> {
    let mut text = String::new();
    if let Some(first) = trace.steps.first() {
        let n = first.x.len();
        let p = first.y.len();
        let mut head = vec!["k".to_string()];
        head.extend((0..n).map(|i| format!("x{i}")));
        head.extend((0..n).map(|i| format!("xhat{i}")));
        head.extend((0..p).map(|i| format!("y{i}")));
        head.push("error_norm".into());
        head.push("perf_norm".into());
        text.push_str(&head.join(","));
        text.push('\n');
    }
    for s in &trace.steps {
        let mut row = Vec::with_capacity(3 + 2 * s.x.len() + s.y.len());
        row.push(s.k.to_string());
        row.extend(s.x.iter().map(|v| format!("{v}")));
        row.extend(s.xhat.iter().map(|v| format!("{v}")));
        row.extend(s.y.iter().map(|v| format!("{v}")));
        row.push(format!("{}", s.error_norm));
        row.push(format!("{}", s.perf_norm));
        text.push_str(&row.join(","));
        text.push('\n');
    }
    write_file(path, &text)
}

fn read_trace_csv(path: &Path, label: &str) -> Result<EstimationTrace, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| ScenarioError::ReportFormat(format!("{}: empty", path.display())))?;
    let n = header.split(',').filter(|h| h.starts_with("xhat")).count();
    let p = header.split(',').filter(|h| h.starts_with('y')).count();
    let mut steps = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 1 + 2 * n + p + 2 {
            return Err(ScenarioError::ReportFormat(format!(
                "{} line {}: {} fields, expected {}",
                path.display(),
                ln + 2,
                fields.len(),
                1 + 2 * n + p + 2
            )));
        }
        let parse = |s: &str| -> Result<f64, ScenarioError> {
            s.parse::<f64>()
                .map_err(|e| ScenarioError::ReportFormat(format!("bad float '{s}': {e}")))
        };
        let k: usize = fields[0]
            .parse()
            .map_err(|e| ScenarioError::ReportFormat(format!("bad step index: {e}")))?;
        let x = DVector::from_iterator(
            n,
            fields[1..1 + n]
                .iter()
                .map(|s| parse(s))
                .collect::<Result<Vec<_>, _>>()?,
        );
        let xhat = DVector::from_iterator(
            n,
            fields[1 + n..1 + 2 * n]
                .iter()
                .map(|s| parse(s))
                .collect::<Result<Vec<_>, _>>()?,
        );
        let y = DVector::from_iterator(
            p,
            fields[1 + 2 * n..1 + 2 * n + p]
                .iter()
                .map(|s| parse(s))
                .collect::<Result<Vec<_>, _>>()?,
        );
        steps.push(TraceStep {
            k,
            x,
            xhat,
            y,
            error_norm: parse(fields[1 + 2 * n + p])?,
            perf_norm: parse(fields[2 + 2 * n + p])?,
        });
    }
    Ok(EstimationTrace {
        label: label.into(),
        steps,
        rmse: 0.0,
        wall_seconds: 0.0,
        stream_digest: String::new(),
    })
}
