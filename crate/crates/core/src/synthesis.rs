//! Observer-gain synthesis: solve the assembled inequalities, re-verify the
//! certificate outside the solver, and persist the result.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::SynthesisError;
use crate::lmi::{
    assemble_lmi, performance_matrix, stability_matrix, AssemblyOptions, SynthesisProblem,
};
use crate::sdp::{solve_program, SolveOptions, SolverOutcome};

/// Solver and verification knobs.
#[derive(Debug, Clone)]
pub struct SynthesisOptions {
    pub assembly: AssemblyOptions,
    pub solver: SolveOptions,
    /// Residuals re-evaluated outside the solver must not exceed this.
    pub residual_tol: f64,
    /// Relative consistency bound on `P L = Y`.
    pub gain_consistency_tol: f64,
    /// Condition number of `P` above which the result is flagged.
    pub condition_flag: f64,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            assembly: AssemblyOptions::default(),
            solver: SolveOptions::default(),
            residual_tol: 1e-7,
            gain_consistency_tol: 1e-8,
            condition_flag: 1e12,
        }
    }
}

/// A synthesized gain with its certificate and verification data.
#[derive(Debug, Clone)]
pub struct SynthesisResult {
    /// Observer gain `L = P^-1 Y` (n x p).
    pub gain: DMatrix<f64>,
    pub p_mat: DMatrix<f64>,
    pub y_mat: DMatrix<f64>,
    pub epsilon: f64,
    pub mu0: f64,
    pub mu1: f64,
    pub mu2: f64,
    /// Certified disturbance-to-performance level `sqrt(mu0 mu1 + mu2)`.
    pub mu: f64,
    pub alpha: f64,
    pub gamma: f64,
    /// Largest eigenvalue of the re-evaluated stability block.
    pub residual_stability: f64,
    /// Largest eigenvalue of the re-evaluated performance block.
    pub residual_performance: f64,
    /// `||P L - Y||_F / ||Y||_F`.
    pub residual_gain: f64,
    pub p_condition: f64,
    pub condition_flagged: bool,
    pub solver_gap: f64,
    pub newton_iters: usize,
    pub solve_seconds: f64,
}

fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Solves the synthesis problem and re-verifies the certificate.
///
/// Infeasibility is reported with the minimal uniform shift certified by the
/// solver's first phase. A result is only returned when the independently
/// re-evaluated block residuals pass `residual_tol`.
pub fn solve(
    problem: &SynthesisProblem,
    options: &SynthesisOptions,
) -> Result<SynthesisResult, SynthesisError> {
    problem.validate()?;
    let started = Instant::now();
    let (program, layout) = assemble_lmi(problem, &options.assembly)?;
    let outcome = solve_program(&program, &options.solver)?;
    let solution = match outcome {
        SolverOutcome::Infeasible { min_shift } => {
            return Err(SynthesisError::Infeasible { min_shift })
        }
        SolverOutcome::Feasible(sol) => sol,
    };
    let (p_mat, y_mat, epsilon, mu0, mu2) = layout.unpack(&solution.theta);

    let p_chol = Cholesky::<f64, Dyn>::new(p_mat.clone()).ok_or_else(|| {
        SynthesisError::SolverStalled("returned P is not positive definite".into())
    })?;
    let gain = p_chol.solve(&y_mat);

    // Independent residual re-verification: rebuild both blocks densely from
    // the returned variables and eigen-check them.
    let residual_stability =
        max_eigenvalue(&stability_matrix(problem, &p_mat, &y_mat, epsilon, mu0));
    let residual_performance = max_eigenvalue(&performance_matrix(problem, &p_mat, mu2));
    if residual_stability > options.residual_tol || residual_performance > options.residual_tol {
        return Err(SynthesisError::SolverStalled(format!(
            "residual re-verification failed: stability {residual_stability:.3e}, \
             performance {residual_performance:.3e} (tol {:.1e})",
            options.residual_tol
        )));
    }
    let y_norm = y_mat.norm();
    let residual_gain = if y_norm == 0.0 {
        0.0
    } else {
        (&p_mat * &gain - &y_mat).norm() / y_norm
    };
    if residual_gain > options.gain_consistency_tol {
        return Err(SynthesisError::SolverStalled(format!(
            "gain consistency ||P L - Y|| / ||Y|| = {residual_gain:.3e} exceeds {:.1e}",
            options.gain_consistency_tol
        )));
    }

    let p_eigs = p_mat.clone().symmetric_eigen().eigenvalues;
    let p_min = p_eigs.iter().copied().fold(f64::INFINITY, f64::min);
    let p_max = p_eigs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let p_condition = if p_min > 0.0 { p_max / p_min } else { f64::INFINITY };
    let condition_flagged = p_condition > options.condition_flag;
    if condition_flagged {
        log::warn!("synthesized P is near singular: condition number {p_condition:.3e}");
    }

    let mu = (mu0 * problem.mu1 + mu2).sqrt();
    Ok(SynthesisResult {
        gain,
        p_mat,
        y_mat,
        epsilon,
        mu0,
        mu1: problem.mu1,
        mu2,
        mu,
        alpha: problem.alpha,
        gamma: problem.gamma,
        residual_stability,
        residual_performance,
        residual_gain,
        p_condition,
        condition_flagged,
        solver_gap: solution.gap_bound,
        newton_iters: solution.newton_iters,
        solve_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Solves once per grid point and keeps the feasible result with the
/// smallest performance level.
///
/// Returns the winner plus the full sweep table `(alpha, mu or None)`.
/// Structural errors (bad dimensions, undetectable pair) abort the sweep;
/// infeasibility and solver stalls mark the grid point and move on.
pub fn alpha_sweep(
    problem: &SynthesisProblem,
    alpha_grid: &[f64],
    options: &SynthesisOptions,
) -> Result<(SynthesisResult, Vec<(f64, Option<f64>)>), SynthesisError> {
    if alpha_grid.is_empty() {
        return Err(SynthesisError::InvalidProblem("empty alpha grid".into()));
    }
    let mut table = Vec::with_capacity(alpha_grid.len());
    let mut best: Option<SynthesisResult> = None;
    for &alpha in alpha_grid {
        let candidate = SynthesisProblem {
            alpha,
            ..problem.clone()
        };
        match solve(&candidate, options) {
            Ok(result) => {
                table.push((alpha, Some(result.mu)));
                if best.as_ref().map_or(true, |b| result.mu < b.mu) {
                    best = Some(result);
                }
            }
            Err(SynthesisError::Infeasible { .. }) | Err(SynthesisError::SolverStalled(_)) => {
                table.push((alpha, None));
            }
            Err(other) => return Err(other),
        }
    }
    match best {
        Some(result) => Ok((result, table)),
        None => Err(SynthesisError::SweepExhausted(alpha_grid.len())),
    }
}

/// Scalars and gain read back from a synthesis report file.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisReportData {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub mu0: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub mu: f64,
    pub p_condition: f64,
    pub residual_stability: f64,
    pub residual_performance: f64,
    pub residual_gain: f64,
    pub solver_gap: f64,
    pub solve_seconds: f64,
    pub gain: DMatrix<f64>,
}

impl SynthesisResult {
    pub fn report_data(&self) -> SynthesisReportData {
        SynthesisReportData {
            alpha: self.alpha,
            gamma: self.gamma,
            epsilon: self.epsilon,
            mu0: self.mu0,
            mu1: self.mu1,
            mu2: self.mu2,
            mu: self.mu,
            p_condition: self.p_condition,
            residual_stability: self.residual_stability,
            residual_performance: self.residual_performance,
            residual_gain: self.residual_gain,
            solver_gap: self.solver_gap,
            solve_seconds: self.solve_seconds,
            gain: self.gain.clone(),
        }
    }
}

/// Writes a report as plain text: one `key value` line per scalar, then the
/// gain as `gain <rows> <cols>` followed by one whitespace-separated row per
/// line. Floats use the shortest representation that round-trips exactly.
pub fn write_report(data: &SynthesisReportData, path: &Path) -> Result<(), SynthesisError> {
    let mut out = String::new();
    out.push_str("# observer synthesis report\n");
    let mut scalar = |k: &str, v: f64| out.push_str(&format!("{k} {v}\n"));
    scalar("alpha", data.alpha);
    scalar("gamma", data.gamma);
    scalar("epsilon", data.epsilon);
    scalar("mu0", data.mu0);
    scalar("mu1", data.mu1);
    scalar("mu2", data.mu2);
    scalar("mu", data.mu);
    scalar("p_condition", data.p_condition);
    scalar("residual_stability", data.residual_stability);
    scalar("residual_performance", data.residual_performance);
    scalar("residual_gain", data.residual_gain);
    scalar("solver_gap", data.solver_gap);
    scalar("solve_seconds", data.solve_seconds);
    out.push_str(&format!("gain {} {}\n", data.gain.nrows(), data.gain.ncols()));
    for r in 0..data.gain.nrows() {
        let row: Vec<String> = (0..data.gain.ncols())
            .map(|c| format!("{}", data.gain[(r, c)]))
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    let mut file = std::fs::File::create(path)
        .map_err(|e| SynthesisError::ReportIo(format!("{}: {e}", path.display())))?;
    file.write_all(out.as_bytes())
        .map_err(|e| SynthesisError::ReportIo(format!("{}: {e}", path.display())))?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<SynthesisReportData, SynthesisError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SynthesisError::ReportIo(format!("{}: {e}", path.display())))?;
    let mut scalars = std::collections::HashMap::new();
    let mut gain: Option<DMatrix<f64>> = None;
    let mut lines = text.lines().peekable();
    while let Some(line) = lines.next() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap();
        if key == "gain" {
            let rows: usize = parse_field(parts.next(), "gain rows")?;
            let cols: usize = parse_field(parts.next(), "gain cols")?;
            let mut values = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                let row_line = lines
                    .next()
                    .ok_or_else(|| SynthesisError::ReportFormat(format!("missing gain row {r}")))?;
                for tok in row_line.split_whitespace() {
                    values.push(tok.parse::<f64>().map_err(|e| {
                        SynthesisError::ReportFormat(format!("gain entry '{tok}': {e}"))
                    })?);
                }
            }
            if values.len() != rows * cols {
                return Err(SynthesisError::ReportFormat(format!(
                    "gain has {} entries, expected {}",
                    values.len(),
                    rows * cols
                )));
            }
            gain = Some(DMatrix::from_row_slice(rows, cols, &values));
        } else {
            let value: f64 = parse_field(parts.next(), key)?;
            scalars.insert(key.to_string(), value);
        }
    }
    let get = |k: &str| {
        scalars
            .get(k)
            .copied()
            .ok_or_else(|| SynthesisError::ReportFormat(format!("missing field '{k}'")))
    };
    Ok(SynthesisReportData {
        alpha: get("alpha")?,
        gamma: get("gamma")?,
        epsilon: get("epsilon")?,
        mu0: get("mu0")?,
        mu1: get("mu1")?,
        mu2: get("mu2")?,
        mu: get("mu")?,
        p_condition: get("p_condition")?,
        residual_stability: get("residual_stability")?,
        residual_performance: get("residual_performance")?,
        residual_gain: get("residual_gain")?,
        solver_gap: get("solver_gap")?,
        solve_seconds: get("solve_seconds")?,
        gain: gain.ok_or_else(|| SynthesisError::ReportFormat("missing gain".into()))?,
    })
}

fn parse_field<T: std::str::FromStr>(
    tok: Option<&str>,
    what: &str,
) -> Result<T, SynthesisError>
where
    T::Err: std::fmt::Display,
{
    let tok = tok.ok_or_else(|| SynthesisError::ReportFormat(format!("missing {what}")))?;
    tok.parse::<T>()
        .map_err(|e| SynthesisError::ReportFormat(format!("bad {what} '{tok}': {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_problem() -> SynthesisProblem {
        SynthesisProblem {
            a: DMatrix::from_element(1, 1, 0.5),
            c: DMatrix::from_element(1, 1, 1.0),
            b_w: DMatrix::from_element(1, 1, 0.0),
            d_w: DMatrix::from_element(1, 1, 1.0),
            z: DMatrix::from_element(1, 1, 1.0),
            gamma: 0.0,
            alpha: 0.3,
            mu1: 10.0,
        }
    }

    /// Brute-force feasibility oracle for the scalar problem: grid over
    /// (P, Y, mu0) with eps tied to P, checking both blocks by eigenvalue.
    fn scalar_grid_best_mu(problem: &SynthesisProblem) -> f64 {
        let mut best = f64::INFINITY;
        for p_exp in -6..4 {
            let p = 10f64.powi(p_exp);
            let p_m = DMatrix::from_element(1, 1, p);
            for y_step in -40..=40 {
                let y = p * (y_step as f64) / 20.0;
                let y_m = DMatrix::from_element(1, 1, y);
                let eps = 2.0 * p;
                for mu0_exp in -8..4 {
                    let mu0 = 10f64.powi(mu0_exp);
                    let mu2 = 0.0;
                    let stab = stability_matrix(problem, &p_m, &y_m, eps, mu0);
                    let perf = performance_matrix(problem, &p_m, mu2);
                    if max_eigenvalue(&stab) <= 0.0 && max_eigenvalue(&perf) <= 0.0 {
                        let mu = (mu0 * problem.mu1 + mu2).sqrt();
                        if mu < best {
                            best = mu;
                        }
                    }
                }
            }
        }
        best
    }

    #[test]
    fn scalar_solve_matches_grid_oracle_and_contracts() {
        let problem = scalar_problem();
        let result = solve(&problem, &SynthesisOptions::default()).unwrap();
        // The error dynamics A - L C must be a contraction.
        let l = result.gain[(0, 0)];
        assert!((0.5 - l).abs() < 1.0, "|A - LC| = {} >= 1", (0.5 - l).abs());
        // Residuals verified outside the solver.
        assert!(result.residual_stability <= 0.0);
        assert!(result.residual_performance <= 0.0);
        assert!(result.residual_gain <= 1e-8);
        // The optimizer can only do at least as well as the grid oracle.
        let grid_mu = scalar_grid_best_mu(&problem);
        assert!(
            result.mu <= grid_mu + 1e-6,
            "solver mu {} worse than grid mu {}",
            result.mu,
            grid_mu
        );
    }

    #[test]
    fn undetectable_pair_rejected_before_solving() {
        let problem = SynthesisProblem {
            a: DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.2]),
            c: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            b_w: DMatrix::zeros(2, 4),
            d_w: DMatrix::from_row_slice(1, 4, &[0.0, 0.0, 1.0, 0.0]),
            z: DMatrix::identity(2, 2),
            gamma: 0.0,
            alpha: 0.3,
            mu1: 10.0,
        };
        assert!(matches!(
            solve(&problem, &SynthesisOptions::default()),
            Err(SynthesisError::Undetectable { .. })
        ));
    }

    #[test]
    fn zero_performance_weight_admits_zero_mu2() {
        let problem = SynthesisProblem {
            z: DMatrix::from_element(1, 1, 0.0),
            ..scalar_problem()
        };
        let result = solve(&problem, &SynthesisOptions::default()).unwrap();
        // With Z = 0 the performance block is satisfiable with mu2 = 0 and
        // the objective drives both scalars toward zero.
        assert!(result.mu2 < 1e-5, "mu2 = {}", result.mu2);
        assert!(result.mu < 1e-2, "mu = {}", result.mu);
    }

    #[test]
    fn singleton_sweep_equals_solve() {
        let problem = scalar_problem();
        let direct = solve(&problem, &SynthesisOptions::default()).unwrap();
        let (best, table) =
            alpha_sweep(&problem, &[problem.alpha], &SynthesisOptions::default()).unwrap();
        assert_eq!(table.len(), 1);
        assert!((best.mu - direct.mu).abs() <= 1e-9 * direct.mu.max(1e-12));
    }

    #[test]
    fn sweep_minimum_does_not_increase_with_refinement() {
        let problem = scalar_problem();
        let opts = SynthesisOptions::default();
        let (coarse, _) = alpha_sweep(&problem, &[0.3], &opts).unwrap();
        let (fine, table) = alpha_sweep(&problem, &[0.1, 0.3, 0.6], &opts).unwrap();
        assert!(fine.mu <= coarse.mu + 1e-9);
        assert_eq!(table.len(), 3);
    }

    #[test]
    fn sweep_with_empty_grid_fails() {
        assert!(matches!(
            alpha_sweep(&scalar_problem(), &[], &SynthesisOptions::default()),
            Err(SynthesisError::InvalidProblem(_))
        ));
    }

    #[test]
    fn report_round_trip_is_exact() {
        let problem = scalar_problem();
        let result = solve(&problem, &SynthesisOptions::default()).unwrap();
        let data = result.report_data();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("synthesis.txt");
        write_report(&data, &path).unwrap();
        let back = read_report(&path).unwrap();
        assert_eq!(data, back);
    }

    #[test]
    fn malformed_report_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "alpha 0.05\ngain 2 2\n1.0 2.0\n").unwrap();
        assert!(matches!(
            read_report(&path),
            Err(SynthesisError::ReportFormat(_))
        ));
    }
}
