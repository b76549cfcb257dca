//! Assembly of the observer-synthesis matrix inequalities.
//!
//! Decision variables are the lower triangle of the certificate `P` (n x n,
//! symmetric positive definite), the transformed gain `Y` (n x p, with the
//! gain recovered as `L = P^-1 Y`), and scalars `epsilon, mu0, mu2 >= 0`.
//! With the decay rate `alpha` and the scalar `mu1` fixed, both constraint
//! blocks are affine and minimizing `mu0 * mu1 + mu2` is a linear objective;
//! the certified disturbance-to-performance gain is `sqrt(mu0 * mu1 + mu2)`.
//!
//! The stability block (size `3n + q`, must be negative semidefinite) couples
//! the error contraction `A - L C`, the Lipschitz budget `epsilon gamma^2`,
//! and the disturbance feedthrough `Phi = P B_w - Y D_w`:
//!
//! ```text
//! [ (alpha-1)P + eps gamma^2 I    *         *           *  ]
//! [ P A - Y C                     P - eps I *           *  ]
//! [ 0                             Phi'      -alpha mu0  *  ]
//! [ P A - Y C                     0         Phi         -P ]
//! ```
//!
//! The performance block (size `n + q + z`) bounds the weighted error output
//! `z = Z e`:
//!
//! ```text
//! [ -P  *       *       ]
//! [ 0   -mu2 I  *       ]
//! [ Z   0       -mu1 I  ]
//! ```

use nalgebra::{DMatrix, DVector};

use crate::error::SynthesisError;
use crate::sdp::{BlockBuilder, ConicProgram};
use crate::sim::SystemModel;

/// Hard positive-definiteness floor on `P`.
pub const DEFINITENESS_FLOOR: f64 = 1e-8;

/// Data of the synthesis problem. `A`, `C`, `B_w`, `D_w` describe the error
/// dynamics; `Z` weights the performance output; `gamma` bounds the lumped
/// nonlinearity; `alpha` (decay rate) and `mu1` are fixed a priori to keep
/// the problem convex.
#[derive(Debug, Clone)]
pub struct SynthesisProblem {
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub b_w: DMatrix<f64>,
    pub d_w: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub gamma: f64,
    pub alpha: f64,
    pub mu1: f64,
}

impl SynthesisProblem {
    /// Problem for an assembled traffic model with `Z = z_weight * I`.
    pub fn from_model(model: &SystemModel, z_weight: f64, gamma: f64, alpha: f64, mu1: f64) -> Self {
        let n = model.num_states();
        Self {
            a: model.a_matrix().clone(),
            c: model.c_matrix().clone(),
            b_w: model.b_w().clone(),
            d_w: model.d_w().clone(),
            z: DMatrix::identity(n, n) * z_weight,
            gamma,
            alpha,
            mu1,
        }
    }

    pub fn num_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn num_measurements(&self) -> usize {
        self.c.nrows()
    }

    pub fn num_disturbances(&self) -> usize {
        self.b_w.ncols()
    }

    pub fn num_outputs(&self) -> usize {
        self.z.nrows()
    }

    pub fn validate(&self) -> Result<(), SynthesisError> {
        let n = self.num_states();
        let p = self.num_measurements();
        let q = self.num_disturbances();
        let dims_ok = self.a.ncols() == n
            && self.c.ncols() == n
            && self.b_w.nrows() == n
            && self.d_w.nrows() == p
            && self.d_w.ncols() == q
            && self.z.ncols() == n;
        if !dims_ok {
            return Err(SynthesisError::DimensionMismatch(format!(
                "A {}x{}, C {}x{}, B_w {}x{}, D_w {}x{}, Z {}x{}",
                self.a.nrows(),
                self.a.ncols(),
                self.c.nrows(),
                self.c.ncols(),
                self.b_w.nrows(),
                self.b_w.ncols(),
                self.d_w.nrows(),
                self.d_w.ncols(),
                self.z.nrows(),
                self.z.ncols()
            )));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(SynthesisError::AlphaOutOfRange(self.alpha));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(SynthesisError::InvalidProblem(format!(
                "gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        if !(self.mu1.is_finite() && self.mu1 > 0.0) {
            return Err(SynthesisError::InvalidProblem(format!(
                "mu1 must be > 0, got {}",
                self.mu1
            )));
        }
        self.check_detectability()
    }

    /// Rank test on `[lambda I - A; C]` at every eigenvalue of `A` with
    /// `|lambda| >= 1`. A rank drop there means an unobservable mode no gain
    /// can stabilize, so synthesis fails fast with a diagnosable error
    /// instead of an opaque infeasibility.
    pub fn check_detectability(&self) -> Result<(), SynthesisError> {
        let n = self.num_states();
        let p = self.num_measurements();
        let eigs = self.a.clone().complex_eigenvalues();
        let mut worst_drop = 0usize;
        let mut worst_magnitude = 0.0f64;
        for lambda in eigs.iter() {
            if lambda.norm() < 1.0 - 1e-9 {
                continue;
            }
            let mut pencil = DMatrix::zeros(n + p, n);
            for i in 0..n {
                for j in 0..n {
                    pencil[(i, j)] = nalgebra::Complex::new(-self.a[(i, j)], 0.0);
                }
                pencil[(i, i)] += lambda;
            }
            for i in 0..p {
                for j in 0..n {
                    pencil[(n + i, j)] = nalgebra::Complex::new(self.c[(i, j)], 0.0);
                }
            }
            let sv = pencil.singular_values();
            let tol = sv.max() * (n + p) as f64 * f64::EPSILON * 16.0;
            let rank = sv.iter().filter(|&&s| s > tol).count();
            if rank < n && n - rank > worst_drop {
                worst_drop = n - rank;
                worst_magnitude = lambda.norm();
            }
        }
        if worst_drop > 0 {
            return Err(SynthesisError::Undetectable {
                undetectable: worst_drop,
                worst_magnitude,
            });
        }
        Ok(())
    }
}

/// Variable layout of the assembled program.
#[derive(Debug, Clone)]
pub struct VarLayout {
    pub n: usize,
    pub p: usize,
    pub num_vars: usize,
}

impl VarLayout {
    pub fn new(n: usize, p: usize) -> Self {
        Self {
            n,
            p,
            num_vars: n * (n + 1) / 2 + n * p + 3,
        }
    }

    /// Variable index of `P[i, j]` (order-free).
    pub fn p_var(&self, i: usize, j: usize) -> usize {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        hi * (hi + 1) / 2 + lo
    }

    /// Variable index of `Y[r, c]`.
    pub fn y_var(&self, r: usize, c: usize) -> usize {
        self.n * (self.n + 1) / 2 + r * self.p + c
    }

    pub fn eps_var(&self) -> usize {
        self.n * (self.n + 1) / 2 + self.n * self.p
    }

    pub fn mu0_var(&self) -> usize {
        self.eps_var() + 1
    }

    pub fn mu2_var(&self) -> usize {
        self.eps_var() + 2
    }

    pub fn unpack(&self, theta: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>, f64, f64, f64) {
        let mut p_mat = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in 0..=i {
                let v = theta[self.p_var(i, j)];
                p_mat[(i, j)] = v;
                p_mat[(j, i)] = v;
            }
        }
        let mut y_mat = DMatrix::zeros(self.n, self.p);
        for r in 0..self.n {
            for c in 0..self.p {
                y_mat[(r, c)] = theta[self.y_var(r, c)];
            }
        }
        (
            p_mat,
            y_mat,
            theta[self.eps_var()],
            theta[self.mu0_var()],
            theta[self.mu2_var()],
        )
    }
}

/// Knobs of the assembly; the defaults match the documented contract.
#[derive(Debug, Clone)]
pub struct AssemblyOptions {
    /// `P >= definiteness_floor * I`.
    pub definiteness_floor: f64,
    /// Uniform slack subtracted from both matrix blocks so the returned
    /// point satisfies them strictly; keeps independently re-evaluated
    /// residuals negative despite round-off.
    pub feasibility_margin: f64,
    /// Upper bound on `epsilon`. With `gamma = 0` nothing else bounds it
    /// from above and the barrier would push it to infinity.
    pub epsilon_cap: f64,
    /// Typical magnitude of `P` entries, used to precondition the solver.
    /// `None` derives it from `Z` and `mu1`.
    pub variable_scale: Option<f64>,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self {
            definiteness_floor: DEFINITENESS_FLOOR,
            feasibility_margin: 1e-9,
            epsilon_cap: 1e8,
            variable_scale: None,
        }
    }
}

/// Emits the two matrix blocks (negated into `>= 0` form), the floor on `P`,
/// and scalar sign constraints as one conic program.
pub fn assemble_lmi(
    problem: &SynthesisProblem,
    options: &AssemblyOptions,
) -> Result<(ConicProgram, VarLayout), SynthesisError> {
    let n = problem.num_states();
    let p = problem.num_measurements();
    let q = problem.num_disturbances();
    let z_rows = problem.num_outputs();
    let dims_ok = problem.a.ncols() == n
        && problem.c.ncols() == n
        && problem.b_w.nrows() == n
        && problem.d_w.nrows() == p
        && problem.d_w.ncols() == q
        && problem.z.ncols() == n;
    if !dims_ok {
        return Err(SynthesisError::DimensionMismatch(
            "system matrices disagree on n/p/q".into(),
        ));
    }
    if !(problem.alpha.is_finite() && problem.alpha > 0.0 && problem.alpha < 1.0) {
        return Err(SynthesisError::AlphaOutOfRange(problem.alpha));
    }
    let layout = VarLayout::new(n, p);
    let alpha = problem.alpha;
    let gamma2 = problem.gamma * problem.gamma;

    // ---- Stability block, sign-flipped: S = -(M) - margin I >= 0.
    // Row offsets: error, nonlinearity, disturbance, slack.
    let (o1, o2, o3, o4) = (0, n, 2 * n, 2 * n + q);
    let mut stab = BlockBuilder::new("stability", 3 * n + q);
    for i in 0..3 * n + q {
        stab.add_const(i, i, -options.feasibility_margin);
    }
    for i in 0..n {
        for j in 0..=i {
            // (1,1): (alpha - 1) P  -> flip
            stab.add_var(layout.p_var(i, j), o1 + i, o1 + j, 1.0 - alpha);
            // (2,2): P
            stab.add_var(layout.p_var(i, j), o2 + i, o2 + j, -1.0);
            // (4,4): -P
            stab.add_var(layout.p_var(i, j), o4 + i, o4 + j, 1.0);
        }
        // (1,1) diagonal: eps gamma^2, (2,2) diagonal: -eps.
        stab.add_var(layout.eps_var(), o1 + i, o1 + i, -gamma2);
        stab.add_var(layout.eps_var(), o2 + i, o2 + i, 1.0);
    }
    // (2,1) and (4,1): P A - Y C.
    for r in 0..n {
        for c in 0..n {
            for k in 0..n {
                let coeff = problem.a[(k, c)];
                if coeff != 0.0 {
                    stab.add_var(layout.p_var(r, k), o2 + r, o1 + c, -coeff);
                    stab.add_var(layout.p_var(r, k), o4 + r, o1 + c, -coeff);
                }
            }
            for k in 0..p {
                let coeff = problem.c[(k, c)];
                if coeff != 0.0 {
                    stab.add_var(layout.y_var(r, k), o2 + r, o1 + c, coeff);
                    stab.add_var(layout.y_var(r, k), o4 + r, o1 + c, coeff);
                }
            }
        }
    }
    // (3,2) holds Phi' and (4,3) holds Phi, with Phi = P B_w - Y D_w.
    for r in 0..n {
        for c in 0..q {
            for k in 0..n {
                let coeff = problem.b_w[(k, c)];
                if coeff != 0.0 {
                    stab.add_var(layout.p_var(r, k), o3 + c, o2 + r, -coeff);
                    stab.add_var(layout.p_var(r, k), o4 + r, o3 + c, -coeff);
                }
            }
            for k in 0..p {
                let coeff = problem.d_w[(k, c)];
                if coeff != 0.0 {
                    stab.add_var(layout.y_var(r, k), o3 + c, o2 + r, coeff);
                    stab.add_var(layout.y_var(r, k), o4 + r, o3 + c, coeff);
                }
            }
        }
    }
    // (3,3): -alpha mu0 I.
    for c in 0..q {
        stab.add_var(layout.mu0_var(), o3 + c, o3 + c, alpha);
    }

    // ---- Performance block, sign-flipped.
    let (p1, p2, p3) = (0, n, n + q);
    let mut perf = BlockBuilder::new("performance", n + q + z_rows);
    for i in 0..n + q + z_rows {
        perf.add_const(i, i, -options.feasibility_margin);
    }
    for i in 0..n {
        for j in 0..=i {
            perf.add_var(layout.p_var(i, j), p1 + i, p1 + j, 1.0);
        }
    }
    for i in 0..q {
        perf.add_var(layout.mu2_var(), p2 + i, p2 + i, 1.0);
    }
    for r in 0..z_rows {
        for c in 0..n {
            if problem.z[(r, c)] != 0.0 {
                perf.add_const(p3 + r, p1 + c, -problem.z[(r, c)]);
            }
        }
        perf.add_const(p3 + r, p3 + r, problem.mu1);
    }

    // ---- P floor, scalar signs, epsilon cap.
    let mut floor = BlockBuilder::new("p-floor", n);
    for i in 0..n {
        for j in 0..=i {
            floor.add_var(layout.p_var(i, j), i, j, 1.0);
        }
        floor.add_const(i, i, -options.definiteness_floor);
    }
    let mut eps_pos = BlockBuilder::new("eps-nonneg", 1);
    eps_pos.add_var(layout.eps_var(), 0, 0, 1.0);
    let mut eps_cap = BlockBuilder::new("eps-cap", 1);
    eps_cap.add_const(0, 0, options.epsilon_cap);
    eps_cap.add_var(layout.eps_var(), 0, 0, -1.0);
    let mut mu0_pos = BlockBuilder::new("mu0-nonneg", 1);
    mu0_pos.add_var(layout.mu0_var(), 0, 0, 1.0);
    let mut mu2_pos = BlockBuilder::new("mu2-nonneg", 1);
    mu2_pos.add_var(layout.mu2_var(), 0, 0, 1.0);

    let mut objective = DVector::zeros(layout.num_vars);
    objective[layout.mu0_var()] = problem.mu1;
    objective[layout.mu2_var()] = 1.0;

    let mut program = ConicProgram::new(
        layout.num_vars,
        objective,
        vec![
            stab.build(),
            perf.build(),
            floor.build(),
            eps_pos.build(),
            eps_cap.build(),
            mu0_pos.build(),
            mu2_pos.build(),
        ],
    );

    // Precondition: P, Y, eps live near the scale forced by the performance
    // block (P >= Z'Z / mu1), mu0 near scale / alpha.
    let scale = options.variable_scale.unwrap_or_else(|| {
        let z_norm = problem.z.norm() / (problem.z.nrows().max(1) as f64).sqrt();
        let from_z = z_norm * z_norm / problem.mu1;
        from_z.max(options.definiteness_floor * 10.0)
    });
    let mut var_scale = DVector::from_element(layout.num_vars, scale);
    var_scale[layout.mu0_var()] = scale / alpha;
    program.var_scale = var_scale;

    Ok((program, layout))
}

/// Dense stability block at given variable values. Written independently of
/// the sparse assembly so residual checks do not share its code path.
pub fn stability_matrix(
    problem: &SynthesisProblem,
    p_mat: &DMatrix<f64>,
    y_mat: &DMatrix<f64>,
    eps: f64,
    mu0: f64,
) -> DMatrix<f64> {
    let n = problem.num_states();
    let q = problem.num_disturbances();
    let pa_yc = p_mat * &problem.a - y_mat * &problem.c;
    let phi = p_mat * &problem.b_w - y_mat * &problem.d_w;
    let eye = DMatrix::<f64>::identity(n, n);
    let mut m = DMatrix::zeros(3 * n + q, 3 * n + q);
    let block11 = p_mat * (problem.alpha - 1.0) + &eye * (eps * problem.gamma * problem.gamma);
    m.view_mut((0, 0), (n, n)).copy_from(&block11);
    m.view_mut((n, 0), (n, n)).copy_from(&pa_yc);
    m.view_mut((0, n), (n, n)).copy_from(&pa_yc.transpose());
    let block22 = p_mat - &eye * eps;
    m.view_mut((n, n), (n, n)).copy_from(&block22);
    m.view_mut((2 * n, n), (q, n)).copy_from(&phi.transpose());
    m.view_mut((n, 2 * n), (n, q)).copy_from(&phi);
    for i in 0..q {
        m[(2 * n + i, 2 * n + i)] = -problem.alpha * mu0;
    }
    let o4 = 2 * n + q;
    m.view_mut((o4, 0), (n, n)).copy_from(&pa_yc);
    m.view_mut((0, o4), (n, n)).copy_from(&pa_yc.transpose());
    m.view_mut((o4, 2 * n), (n, q)).copy_from(&phi);
    m.view_mut((2 * n, o4), (q, n)).copy_from(&phi.transpose());
    m.view_mut((o4, o4), (n, n)).copy_from(&(-p_mat));
    m
}

/// Dense performance block at given variable values.
pub fn performance_matrix(
    problem: &SynthesisProblem,
    p_mat: &DMatrix<f64>,
    mu2: f64,
) -> DMatrix<f64> {
    let n = problem.num_states();
    let q = problem.num_disturbances();
    let z_rows = problem.num_outputs();
    let mut m = DMatrix::zeros(n + q + z_rows, n + q + z_rows);
    m.view_mut((0, 0), (n, n)).copy_from(&(-p_mat));
    for i in 0..q {
        m[(n + i, n + i)] = -mu2;
    }
    m.view_mut((n + q, 0), (z_rows, n)).copy_from(&problem.z);
    m.view_mut((0, n + q), (n, z_rows))
        .copy_from(&problem.z.transpose());
    for i in 0..z_rows {
        m[(n + q + i, n + q + i)] = -problem.mu1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::svec_to_mat;

    /// Scalar system with every matrix 1x1: the assembled blocks must agree
    /// entrywise with the hand-written block matrices.
    #[test]
    fn scalar_blocks_match_hand_expansion() {
        let problem = SynthesisProblem {
            a: DMatrix::from_element(1, 1, 0.9),
            c: DMatrix::from_element(1, 1, 1.0),
            b_w: DMatrix::from_element(1, 1, 0.6),
            d_w: DMatrix::from_element(1, 1, 0.8),
            z: DMatrix::from_element(1, 1, 1.1),
            gamma: 0.4,
            alpha: 0.3,
            mu1: 5.0,
        };
        let options = AssemblyOptions {
            feasibility_margin: 0.0,
            ..Default::default()
        };
        let (program, layout) = assemble_lmi(&problem, &options).unwrap();
        let (p, y, eps, mu0, mu2) = (2.0, 3.0, 0.5, 0.7, 0.2);
        let mut theta = DVector::zeros(layout.num_vars);
        theta[layout.p_var(0, 0)] = p;
        theta[layout.y_var(0, 0)] = y;
        theta[layout.eps_var()] = eps;
        theta[layout.mu0_var()] = mu0;
        theta[layout.mu2_var()] = mu2;

        // Hand expansion of the 4x4 stability block.
        let pa_yc = p * 0.9 - y * 1.0;
        let phi = p * 0.6 - y * 0.8;
        let stab_expect = DMatrix::from_row_slice(
            4,
            4,
            &[
                (0.3 - 1.0) * p + eps * 0.16,
                pa_yc,
                0.0,
                pa_yc,
                pa_yc,
                p - eps,
                phi,
                0.0,
                0.0,
                phi,
                -0.3 * mu0,
                phi,
                pa_yc,
                0.0,
                phi,
                -p,
            ],
        );
        let perf_expect = DMatrix::from_row_slice(
            3,
            3,
            &[-p, 0.0, 1.1, 0.0, -mu2, 0.0, 1.1, 0.0, -5.0],
        );

        // The program stores the negated blocks.
        let stab = program.blocks[0].eval(&theta);
        let perf = program.blocks[1].eval(&theta);
        assert!(stab.relative_eq(&(-&stab_expect), 1e-14, 1e-14), "{stab}");
        assert!(perf.relative_eq(&(-&perf_expect), 1e-14, 1e-14), "{perf}");

        // The independent dense evaluators must agree as well.
        let p_m = DMatrix::from_element(1, 1, p);
        let y_m = DMatrix::from_element(1, 1, y);
        let stab_dense = stability_matrix(&problem, &p_m, &y_m, eps, mu0);
        let perf_dense = performance_matrix(&problem, &p_m, mu2);
        assert!(stab_dense.relative_eq(&stab_expect, 1e-14, 1e-14));
        assert!(perf_dense.relative_eq(&perf_expect, 1e-14, 1e-14));
    }

    /// On a random multivariate instance the sparse assembly and the dense
    /// evaluators must produce the same matrices.
    #[test]
    fn assembly_agrees_with_dense_evaluators() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (n, p, q, zr) = (4, 2, 3, 2);
        let mut rand_mat = |r: usize, c: usize| {
            DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
        };
        let problem = SynthesisProblem {
            a: rand_mat(n, n),
            c: rand_mat(p, n),
            b_w: rand_mat(n, q),
            d_w: rand_mat(p, q),
            z: rand_mat(zr, n),
            gamma: 0.7,
            alpha: 0.2,
            mu1: 100.0,
        };
        let options = AssemblyOptions {
            feasibility_margin: 0.0,
            ..Default::default()
        };
        let (program, layout) = assemble_lmi(&problem, &options).unwrap();
        let mut rng2 = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let theta = DVector::from_fn(layout.num_vars, |_, _| rng2.random_range(-1.0..1.0));
        let (p_m, y_m, eps, mu0, mu2) = layout.unpack(&theta);

        let stab = program.blocks[0].eval(&theta);
        let expect = -stability_matrix(&problem, &p_m, &y_m, eps, mu0);
        assert!(stab.relative_eq(&expect, 1e-12, 1e-12));

        let perf = program.blocks[1].eval(&theta);
        let expect = -performance_matrix(&problem, &p_m, mu2);
        assert!(perf.relative_eq(&expect, 1e-12, 1e-12));

        // P floor block is P - floor*I.
        let floor = program.blocks[2].eval(&theta);
        let expect = &p_m - DMatrix::identity(n, n) * options.definiteness_floor;
        assert!(floor.relative_eq(&expect, 1e-12, 1e-12));
        let _ = svec_to_mat(&program.blocks[2].constant, n);
    }

    #[test]
    fn gamma_zero_drops_lipschitz_term() {
        let problem = SynthesisProblem {
            a: DMatrix::from_element(1, 1, 0.5),
            c: DMatrix::from_element(1, 1, 1.0),
            b_w: DMatrix::from_element(1, 1, 0.0),
            d_w: DMatrix::from_element(1, 1, 1.0),
            z: DMatrix::from_element(1, 1, 1.0),
            gamma: 0.0,
            alpha: 0.3,
            mu1: 10.0,
        };
        let (program, layout) = assemble_lmi(&problem, &AssemblyOptions::default()).unwrap();
        // epsilon's only remaining appearance in row 1 is gone: its (1,1)
        // coefficient vanished, leaving the (2,2) diagonal entry.
        let stab = &program.blocks[0];
        let col = stab
            .columns
            .iter()
            .find(|(v, _)| *v == layout.eps_var())
            .map(|(_, c)| c.clone())
            .unwrap();
        assert_eq!(col.len(), 1, "only the (2,2) diagonal coefficient remains");
    }

    #[test]
    fn alpha_out_of_range_rejected() {
        let problem = SynthesisProblem {
            a: DMatrix::identity(1, 1),
            c: DMatrix::identity(1, 1),
            b_w: DMatrix::zeros(1, 1),
            d_w: DMatrix::identity(1, 1),
            z: DMatrix::identity(1, 1),
            gamma: 0.0,
            alpha: 1.5,
            mu1: 1.0,
        };
        assert!(matches!(
            assemble_lmi(&problem, &AssemblyOptions::default()),
            Err(SynthesisError::AlphaOutOfRange(_))
        ));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let problem = SynthesisProblem {
            a: DMatrix::identity(2, 2),
            c: DMatrix::identity(1, 1),
            b_w: DMatrix::zeros(2, 2),
            d_w: DMatrix::identity(1, 2),
            z: DMatrix::identity(2, 2),
            gamma: 0.0,
            alpha: 0.5,
            mu1: 1.0,
        };
        assert!(matches!(
            assemble_lmi(&problem, &AssemblyOptions::default()),
            Err(SynthesisError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn undetectable_pair_is_reported() {
        // Unstable mode 1.1 invisible to C = [1 0].
        let problem = SynthesisProblem {
            a: DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.1]),
            c: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            b_w: DMatrix::zeros(2, 2),
            d_w: DMatrix::identity(1, 2),
            z: DMatrix::identity(2, 2),
            gamma: 0.0,
            alpha: 0.5,
            mu1: 1.0,
        };
        assert!(matches!(
            problem.validate(),
            Err(SynthesisError::Undetectable { .. })
        ));

        // Stable unobservable mode is fine.
        let problem = SynthesisProblem {
            a: DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.9]),
            ..problem
        };
        problem.validate().unwrap();
    }

    /// With fewer sensors than states an identity linear part leaves
    /// marginal unobservable modes, which the detectability check rejects.
    #[test]
    fn identity_linear_part_with_partial_sensing_is_undetectable() {
        let problem = SynthesisProblem {
            a: DMatrix::identity(3, 3),
            c: DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]),
            b_w: DMatrix::zeros(3, 3),
            d_w: DMatrix::identity(1, 3),
            z: DMatrix::identity(3, 3),
            gamma: 0.5,
            alpha: 0.05,
            mu1: 1e4,
        };
        let err = problem.validate().unwrap_err();
        match err {
            SynthesisError::Undetectable { undetectable, .. } => assert_eq!(undetectable, 2),
            other => panic!("expected undetectable, got {other}"),
        }
    }
}
