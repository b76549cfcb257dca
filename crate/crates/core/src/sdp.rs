//! Affine semidefinite constraint blocks and a dense barrier solver.
//!
//! A [`ConicProgram`] minimizes a linear objective over decision variables
//! `theta` subject to symmetric affine blocks `S_b(theta) = S0_b + sum_j
//! theta_j * Sj_b` being positive semidefinite. Block data is stored in
//! scaled lower-triangular vectorized form ("svec"): the lower triangle is
//! stacked row-major with off-diagonal entries multiplied by sqrt(2), so the
//! Euclidean inner product of two svecs equals the Frobenius inner product of
//! the matrices they represent.
//!
//! The solver is a primal log-barrier interior-point method specialized for
//! programs whose variable count is much smaller than the total svec
//! dimension: each Newton step forms the dense Schur complement on the
//! variable space instead of factorizing in the slack space. Phase one
//! minimizes a uniform shift `tau` over `S_b + tau I`, exiting as soon as the
//! shift is strictly negative (a strictly feasible point); if instead the
//! shift converges to a positive value, that value certifies infeasibility.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::SynthesisError;

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// svec position of matrix entry `(i, j)` with `j <= i`.
pub fn svec_index(i: usize, j: usize) -> usize {
    debug_assert!(j <= i);
    i * (i + 1) / 2 + j
}

/// Length of the svec of a `side x side` symmetric matrix.
pub fn svec_len(side: usize) -> usize {
    side * (side + 1) / 2
}

/// Packs a symmetric matrix into scaled lower-triangular form.
pub fn mat_to_svec(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    debug_assert_eq!(m.ncols(), n);
    let mut out = Vec::with_capacity(svec_len(n));
    for i in 0..n {
        for j in 0..=i {
            out.push(if i == j { m[(i, j)] } else { SQRT2 * m[(i, j)] });
        }
    }
    out
}

/// Unpacks a scaled lower-triangular vector into a dense symmetric matrix.
pub fn svec_to_mat(s: &[f64], side: usize) -> DMatrix<f64> {
    debug_assert_eq!(s.len(), svec_len(side));
    let mut m = DMatrix::zeros(side, side);
    let mut idx = 0;
    for i in 0..side {
        for j in 0..=i {
            if i == j {
                m[(i, i)] = s[idx];
            } else {
                let v = s[idx] / SQRT2;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
            idx += 1;
        }
    }
    m
}

/// One affine symmetric block `S(theta) = S0 + sum_j theta_j Sj >= 0`.
#[derive(Debug, Clone)]
pub struct LmiBlock {
    pub label: String,
    pub side: usize,
    /// svec of the constant part.
    pub constant: Vec<f64>,
    /// Per-variable svec columns, sorted by variable index.
    pub columns: Vec<(usize, Vec<(usize, f64)>)>,
}

impl LmiBlock {
    /// Dense value of the block at `theta`.
    pub fn eval(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let mut s = self.constant.clone();
        for (var, col) in &self.columns {
            let tv = theta[*var];
            if tv != 0.0 {
                for &(idx, coeff) in col {
                    s[idx] += tv * coeff;
                }
            }
        }
        svec_to_mat(&s, self.side)
    }

    /// Matrix-entry form `(i, j, value)` with `j <= i` of one svec column.
    fn column_entries(col: &[(usize, f64)]) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(col.len());
        let mut row = 0usize;
        for &(idx, coeff) in col {
            // Columns are sorted by svec index, so the row scan only advances.
            while svec_index(row + 1, 0) <= idx {
                row += 1;
            }
            let j = idx - svec_index(row, 0);
            let value = if j == row { coeff } else { coeff / SQRT2 };
            out.push((row, j, value));
        }
        out
    }
}

/// Accumulates one symmetric affine block entry by entry.
///
/// `add_*(i, j, v)` adds `v` at matrix position `(i, j)` and, for
/// off-diagonal positions, mirrors it to `(j, i)`.
pub struct BlockBuilder {
    label: String,
    side: usize,
    constant: Vec<f64>,
    cols: std::collections::BTreeMap<usize, std::collections::BTreeMap<usize, f64>>,
}

impl BlockBuilder {
    pub fn new(label: impl Into<String>, side: usize) -> Self {
        Self {
            label: label.into(),
            side,
            constant: vec![0.0; svec_len(side)],
            cols: Default::default(),
        }
    }

    pub fn add_const(&mut self, i: usize, j: usize, v: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(hi < self.side);
        self.constant[svec_index(hi, lo)] += if hi == lo { v } else { SQRT2 * v };
    }

    pub fn add_var(&mut self, var: usize, i: usize, j: usize, coeff: f64) {
        if coeff == 0.0 {
            return;
        }
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(hi < self.side);
        let idx = svec_index(hi, lo);
        let scaled = if hi == lo { coeff } else { SQRT2 * coeff };
        *self.cols.entry(var).or_default().entry(idx).or_insert(0.0) += scaled;
    }

    pub fn build(self) -> LmiBlock {
        LmiBlock {
            label: self.label,
            side: self.side,
            constant: self.constant,
            columns: self
                .cols
                .into_iter()
                .map(|(var, entries)| {
                    (
                        var,
                        entries
                            .into_iter()
                            .filter(|&(_, c)| c != 0.0)
                            .collect::<Vec<_>>(),
                    )
                })
                .filter(|(_, col)| !col.is_empty())
                .collect(),
        }
    }
}

/// Linear objective over affine-semidefinite blocks.
#[derive(Debug, Clone)]
pub struct ConicProgram {
    pub num_vars: usize,
    pub objective: DVector<f64>,
    pub blocks: Vec<LmiBlock>,
    /// Typical magnitude per variable; the solver works in rescaled
    /// coordinates `theta = scale * theta'` for conditioning.
    pub var_scale: DVector<f64>,
}

impl ConicProgram {
    pub fn new(num_vars: usize, objective: DVector<f64>, blocks: Vec<LmiBlock>) -> Self {
        Self {
            num_vars,
            objective,
            blocks,
            var_scale: DVector::from_element(num_vars, 1.0),
        }
    }

    /// Total barrier parameter: sum of block sides.
    pub fn barrier_degree(&self) -> f64 {
        self.blocks.iter().map(|b| b.side as f64).sum()
    }

    /// Minimum eigenvalue over all blocks at `theta`.
    pub fn min_eigenvalue(&self, theta: &DVector<f64>) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                b.eval(theta)
                    .symmetric_eigen()
                    .eigenvalues
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Target on the barrier gap bound `degree / t`.
    pub gap_tol: f64,
    /// Newton decrement threshold declaring a point centered.
    pub center_tol: f64,
    /// Multiplicative increase of the path parameter per outer stage.
    pub t_scale: f64,
    /// Hard cap on total Newton iterations across both phases.
    pub max_newton: usize,
    /// Relative gap at which a nonnegative phase-one shift is declared
    /// infeasible.
    pub infeasibility_tol: f64,
    /// Box `|theta'_j| <= trust_radius` on the rescaled variables. The
    /// constraint blocks are positively homogeneous in typical gain
    /// synthesis problems, so without a box the barrier inflates the
    /// iterates without bound; a binding radius is logged.
    pub trust_radius: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-8,
            center_tol: 1e-10,
            t_scale: 20.0,
            max_newton: 6000,
            infeasibility_tol: 1e-3,
            trust_radius: 1e3,
        }
    }
}

/// Strictly feasible solution returned by the barrier solver.
#[derive(Debug, Clone)]
pub struct Solution {
    pub theta: DVector<f64>,
    pub objective: f64,
    /// Upper bound on the distance to the optimal objective value.
    pub gap_bound: f64,
    pub newton_iters: usize,
}

#[derive(Debug, Clone)]
pub enum SolverOutcome {
    Feasible(Solution),
    /// No point makes every block positive semidefinite: every uniform shift
    /// keeping them so is at least `min_shift > 0`.
    Infeasible { min_shift: f64 },
}

struct Factorized {
    inverses: Vec<DMatrix<f64>>,
    logdet: f64,
}

/// What a Newton centering run ended on.
enum CenterStop {
    Centered,
    EarlyExit,
}

struct Workspace<'a> {
    program: &'a ConicProgram,
    /// Matrix-entry form of every block column, precomputed once.
    entries: Vec<Vec<Vec<(usize, usize, f64)>>>,
}

impl<'a> Workspace<'a> {
    fn new(program: &'a ConicProgram) -> Self {
        let entries = program
            .blocks
            .iter()
            .map(|b| {
                b.columns
                    .iter()
                    .map(|(_, col)| LmiBlock::column_entries(col))
                    .collect()
            })
            .collect();
        Self { program, entries }
    }

    /// Cholesky-factors every block; `None` if any block is not PD.
    fn factorize(&self, theta: &DVector<f64>) -> Option<Factorized> {
        let mut inverses = Vec::with_capacity(self.program.blocks.len());
        let mut logdet = 0.0;
        for block in &self.program.blocks {
            let chol = Cholesky::<f64, Dyn>::new(block.eval(theta))?;
            logdet += 2.0
                * chol
                    .l_dirty()
                    .diagonal()
                    .iter()
                    .map(|d| d.ln())
                    .sum::<f64>();
            inverses.push(chol.inverse());
        }
        Some(Factorized { inverses, logdet })
    }

    /// Gradient and Hessian of `t * c' theta - sum_b logdet S_b(theta)`.
    fn derivatives(&self, t: f64, fact: &Factorized) -> (DVector<f64>, DMatrix<f64>) {
        let nv = self.program.num_vars;
        let mut grad = &self.program.objective * t;
        let mut hess = DMatrix::zeros(nv, nv);

        for (b, block) in self.program.blocks.iter().enumerate() {
            let sinv = &fact.inverses[b];
            let side = block.side;
            let nb = block.columns.len();

            // grad_j -= <S^-1, Sj>
            for (pos, (var, _)) in block.columns.iter().enumerate() {
                let mut acc = 0.0;
                for &(i, j, v) in &self.entries[b][pos] {
                    acc += v * if i == j { sinv[(i, i)] } else { 2.0 * sinv[(i, j)] };
                }
                grad[*var] -= acc;
            }

            // hess_{jk} += <S^-1 Sj S^-1, Sk>, exploiting sparse Sj as a sum
            // of symmetrized unit entries: S^-1 Sj S^-1 is a short sum of
            // outer products of columns of S^-1.
            let mut mj = DMatrix::<f64>::zeros(side, side);
            for (pos_j, (var_j, _)) in block.columns.iter().enumerate() {
                mj.fill(0.0);
                for &(i, j, v) in &self.entries[b][pos_j] {
                    let ci = sinv.column(i);
                    let cj = sinv.column(j);
                    if i == j {
                        for r in 0..side {
                            let vi = v * ci[r];
                            for c in 0..side {
                                mj[(r, c)] += vi * cj[c];
                            }
                        }
                    } else {
                        for r in 0..side {
                            let vi = v * ci[r];
                            let vj = v * cj[r];
                            for c in 0..side {
                                mj[(r, c)] += vi * cj[c] + vj * ci[c];
                            }
                        }
                    }
                }
                for pos_k in pos_j..nb {
                    let (var_k, _) = &block.columns[pos_k];
                    let mut acc = 0.0;
                    for &(i, j, v) in &self.entries[b][pos_k] {
                        acc += v * if i == j { mj[(i, i)] } else { 2.0 * mj[(i, j)] };
                    }
                    hess[(*var_j, *var_k)] += acc;
                    if var_k != var_j {
                        hess[(*var_k, *var_j)] += acc;
                    }
                }
            }
        }
        (grad, hess)
    }

    /// Newton-centers `theta` for fixed `t`, honoring an optional early exit
    /// predicate checked after every accepted step.
    fn center(
        &self,
        theta: &mut DVector<f64>,
        t: f64,
        opts: &SolveOptions,
        budget: &mut usize,
        early_exit: Option<&dyn Fn(&DVector<f64>) -> bool>,
    ) -> Result<CenterStop, SynthesisError> {
        loop {
            if *budget == 0 {
                return Err(SynthesisError::SolverStalled(
                    "newton iteration budget exhausted".into(),
                ));
            }
            *budget -= 1;
            let fact = self.factorize(theta).ok_or_else(|| {
                SynthesisError::SolverStalled("iterate left the cone interior".into())
            })?;
            let (grad, mut hess) = self.derivatives(t, &fact);
            // Tikhonov fallback keeps the step well-posed when a variable is
            // absent from every block or the Hessian is near-singular.
            let mut reg = 0.0;
            let step = loop {
                match Cholesky::<f64, Dyn>::new(hess.clone()) {
                    Some(ch) => break ch.solve(&(-&grad)),
                    None => {
                        reg = if reg == 0.0 { 1e-12 } else { reg * 100.0 };
                        if reg > 1e9 {
                            return Err(SynthesisError::SolverStalled(
                                "hessian irreparably singular".into(),
                            ));
                        }
                        for i in 0..hess.nrows() {
                            hess[(i, i)] += reg;
                        }
                    }
                }
            };
            let decrement = -grad.dot(&step);
            if decrement <= 2.0 * opts.center_tol {
                return Ok(CenterStop::Centered);
            }
            // Backtracking line search: stay strictly feasible, then Armijo.
            let merit0 = t * self.program.objective.dot(theta) - fact.logdet;
            let mut s = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let cand = theta.clone() + &step * s;
                if let Some(f) = self.factorize(&cand) {
                    let merit = t * self.program.objective.dot(&cand) - f.logdet;
                    if merit <= merit0 - 0.25 * s * decrement {
                        *theta = cand;
                        accepted = true;
                        break;
                    }
                }
                s *= 0.5;
            }
            if *budget % 50 == 0 {
                log::debug!(
                    "newton: budget {budget} t {t:.2e} decrement {decrement:.3e} s {s:.2e} \
                     merit {merit0:.6e} |step| {:.3e}",
                    step.norm()
                );
            }
            if !accepted {
                // Step rejected at every scale: as centered as floating
                // point allows at this t.
                return Ok(CenterStop::Centered);
            }
            if let Some(exit) = early_exit {
                if exit(theta) {
                    return Ok(CenterStop::EarlyExit);
                }
            }
        }
    }
}

/// Solves a conic program with the two-phase barrier method.
pub fn solve_program(
    program: &ConicProgram,
    opts: &SolveOptions,
) -> Result<SolverOutcome, SynthesisError> {
    assert_eq!(program.objective.len(), program.num_vars);
    assert_eq!(program.var_scale.len(), program.num_vars);

    // Work in rescaled coordinates theta = D theta', with the objective
    // normalized to unit max-magnitude so the path parameter t is
    // comparable across problems.
    let mut scaled = rescale(program);
    let obj_norm = scaled.objective.amax();
    let obj_norm = if obj_norm > 0.0 { obj_norm } else { 1.0 };
    scaled.objective /= obj_norm;
    add_trust_boxes(&mut scaled, opts.trust_radius);
    let mut budget = opts.max_newton;

    // ---- Phase one: minimize the uniform shift tau over S_b + tau I.
    let aug = augment_with_shift(&scaled);
    let theta0: DVector<f64> = DVector::zeros(scaled.num_vars);
    let tau0 = 1.0 - scaled.min_eigenvalue(&theta0).min(0.0);
    // Exit once strictly feasible with a little slack; if the interior is
    // thinner than the slack, full centering with tau < 0 also qualifies.
    let exit_level = -1e-7 * tau0;
    let nv = scaled.num_vars;
    let exit = move |p: &DVector<f64>| p[nv] < exit_level;

    let ws1 = Workspace::new(&aug);
    let mut point = theta0.push(tau0);
    let degree1 = aug.barrier_degree();
    // Start with the shift objective already dominating the barrier pull;
    // at small t the centered shift sits near +degree instead of descending.
    let mut t = (degree1 / tau0).max(1.0);
    let feasible = loop {
        let stop = ws1.center(&mut point, t, opts, &mut budget, Some(&exit))?;
        let tau = point[nv];
        log::debug!("phase 1: t = {t:.3e}, shift = {tau:.6e}, budget left {budget}");
        if tau < 0.0 {
            break true;
        }
        if matches!(stop, CenterStop::Centered) && degree1 / t < opts.infeasibility_tol * tau {
            break false;
        }
        t *= opts.t_scale;
        if !t.is_finite() {
            break false;
        }
    };
    if !feasible {
        let tau = point[nv];
        let bound = (tau - degree1 / t.min(1e300)).max(0.0);
        return Ok(SolverOutcome::Infeasible { min_shift: bound });
    }
    let mut theta = point.rows(0, nv).into_owned();

    // ---- Phase two: follow the central path of the true objective.
    let ws2 = Workspace::new(&scaled);
    let degree2 = scaled.barrier_degree();
    let obj0 = scaled.objective.dot(&theta).abs();
    let mut t = (degree2 / (obj0 + 1.0)).max(1.0);
    loop {
        ws2.center(&mut theta, t, opts, &mut budget, None)?;
        log::debug!(
            "phase 2: t = {t:.3e}, objective = {:.6e}, budget left {budget}",
            scaled.objective.dot(&theta) * obj_norm
        );
        if degree2 / t * obj_norm <= opts.gap_tol {
            break;
        }
        t *= opts.t_scale;
    }

    if theta.amax() > 0.9 * opts.trust_radius {
        log::warn!(
            "solution sits near the trust box ({:e} of {:e}); the reported optimum \
             may be radius-limited",
            theta.amax(),
            opts.trust_radius
        );
    }
    let theta_unscaled = theta.component_mul(&program.var_scale);
    let objective = program.objective.dot(&theta_unscaled);
    Ok(SolverOutcome::Feasible(Solution {
        theta: theta_unscaled,
        objective,
        gap_bound: degree2 / t * obj_norm,
        newton_iters: opts.max_newton - budget,
    }))
}

/// Substitutes `theta = D theta'` into the program.
fn rescale(program: &ConicProgram) -> ConicProgram {
    let mut blocks = program.blocks.clone();
    for b in &mut blocks {
        for (var, col) in &mut b.columns {
            let s = program.var_scale[*var];
            for (_, c) in col.iter_mut() {
                *c *= s;
            }
        }
    }
    let objective = program.objective.component_mul(&program.var_scale);
    ConicProgram {
        num_vars: program.num_vars,
        objective,
        blocks,
        var_scale: DVector::from_element(program.num_vars, 1.0),
    }
}

/// Adds `|theta_j| <= radius` as a pair of scalar blocks per variable.
fn add_trust_boxes(program: &mut ConicProgram, radius: f64) {
    for j in 0..program.num_vars {
        let mut lo = BlockBuilder::new(format!("trust-lo-{j}"), 1);
        lo.add_const(0, 0, radius);
        lo.add_var(j, 0, 0, 1.0);
        let mut hi = BlockBuilder::new(format!("trust-hi-{j}"), 1);
        hi.add_const(0, 0, radius);
        hi.add_var(j, 0, 0, -1.0);
        program.blocks.push(lo.build());
        program.blocks.push(hi.build());
    }
}

/// Appends the phase-one shift variable: every block gains `tau I`.
fn augment_with_shift(program: &ConicProgram) -> ConicProgram {
    let tau = program.num_vars;
    let mut blocks = program.blocks.clone();
    for b in &mut blocks {
        let col: Vec<(usize, f64)> = (0..b.side).map(|i| (svec_index(i, i), 1.0)).collect();
        b.columns.push((tau, col));
    }
    let mut objective = DVector::zeros(tau + 1);
    objective[tau] = 1.0;
    ConicProgram {
        num_vars: tau + 1,
        objective,
        blocks,
        var_scale: DVector::from_element(tau + 1, 1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Finite-difference validation of the analytic gradient and Hessian of
    /// the barrier merit on a random multi-entry program.
    #[test]
    fn derivatives_match_finite_differences() {
        let mut b = BlockBuilder::new("s", 3);
        b.add_const(0, 0, 2.0);
        b.add_const(1, 1, 3.0);
        b.add_const(2, 2, 4.0);
        b.add_const(0, 1, 0.3);
        b.add_var(0, 0, 0, 1.0);
        b.add_var(0, 1, 2, -0.5);
        b.add_var(1, 0, 2, 0.8);
        b.add_var(1, 1, 1, 0.4);
        let mut c = BlockBuilder::new("t", 2);
        c.add_const(0, 0, 1.5);
        c.add_const(1, 1, 1.0);
        c.add_var(0, 0, 1, 0.6);
        c.add_var(1, 0, 0, -0.2);
        let program = ConicProgram::new(
            2,
            DVector::from_vec(vec![0.4, -0.3]),
            vec![b.build(), c.build()],
        );
        let ws = Workspace::new(&program);
        let t = 3.0;
        let merit = |theta: &DVector<f64>| -> f64 {
            let f = ws.factorize(theta).expect("interior point");
            t * program.objective.dot(theta) - f.logdet
        };
        let theta = DVector::from_vec(vec![0.1, -0.2]);
        let fact = ws.factorize(&theta).unwrap();
        let (grad, hess) = ws.derivatives(t, &fact);
        let h = 1e-6;
        for j in 0..2 {
            let mut tp = theta.clone();
            tp[j] += h;
            let mut tm = theta.clone();
            tm[j] -= h;
            let numeric = (merit(&tp) - merit(&tm)) / (2.0 * h);
            assert!(
                (grad[j] - numeric).abs() < 1e-6 * (1.0 + numeric.abs()),
                "grad[{j}]: analytic {} vs numeric {numeric}",
                grad[j]
            );
            for k in 0..2 {
                let mut tpp = theta.clone();
                tpp[j] += h;
                tpp[k] += h;
                let mut tpm = theta.clone();
                tpm[j] += h;
                tpm[k] -= h;
                let mut tmp = theta.clone();
                tmp[j] -= h;
                tmp[k] += h;
                let mut tmm = theta.clone();
                tmm[j] -= h;
                tmm[k] -= h;
                let numeric =
                    (merit(&tpp) - merit(&tpm) - merit(&tmp) + merit(&tmm)) / (4.0 * h * h);
                assert!(
                    (hess[(j, k)] - numeric).abs() < 1e-3 * (1.0 + numeric.abs()),
                    "hess[{j}][{k}]: analytic {} vs numeric {numeric}",
                    hess[(j, k)]
                );
            }
        }
    }

    #[test]
    fn svec_round_trip_preserves_inner_products() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.5, 1.0, 3.0, -1.0, 0.5, -1.0, 4.0]);
        let b = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.2, -2.0, 0.7, 0.0, 0.7, 5.0]);
        let sa = mat_to_svec(&a);
        let sb = mat_to_svec(&b);
        let dot: f64 = sa.iter().zip(&sb).map(|(x, y)| x * y).sum();
        let frob = (a.transpose() * &b).trace();
        assert!((dot - frob).abs() < 1e-12);
        assert!(svec_to_mat(&sa, 3).relative_eq(&a, 1e-15, 1e-15));
    }

    #[test]
    fn builder_eval_matches_direct_assembly() {
        // S(x) = [[1 + 2 x0, x1], [x1, 3 - x0]]
        let mut b = BlockBuilder::new("test", 2);
        b.add_const(0, 0, 1.0);
        b.add_const(1, 1, 3.0);
        b.add_var(0, 0, 0, 2.0);
        b.add_var(0, 1, 1, -1.0);
        b.add_var(1, 0, 1, 1.0);
        let block = b.build();
        let theta = DVector::from_vec(vec![0.5, -0.25]);
        let s = block.eval(&theta);
        let expect = DMatrix::from_row_slice(2, 2, &[2.0, -0.25, -0.25, 2.5]);
        assert!(s.relative_eq(&expect, 1e-15, 1e-15));
    }

    /// min x s.t. x I - A >= 0 has optimum lambda_max(A).
    #[test]
    fn recovers_largest_eigenvalue() {
        let a =
            DMatrix::from_row_slice(3, 3, &[1.0, 0.4, -0.2, 0.4, -0.5, 0.3, -0.2, 0.3, 0.8]);
        let mut builder = BlockBuilder::new("shift", 3);
        for i in 0..3 {
            for j in 0..=i {
                builder.add_const(i, j, -a[(i, j)]);
            }
            builder.add_var(0, i, i, 1.0);
        }
        let program = ConicProgram::new(1, DVector::from_vec(vec![1.0]), vec![builder.build()]);
        let SolverOutcome::Feasible(sol) = solve_program(&program, &SolveOptions::default())
            .unwrap()
        else {
            panic!("feasible program reported infeasible");
        };
        let lmax = a
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(
            (sol.objective - lmax).abs() < 1e-6,
            "{} vs {}",
            sol.objective,
            lmax
        );
        assert!(program.min_eigenvalue(&sol.theta) >= 0.0);
    }

    /// min t s.t. [[t, 1], [1, t]] >= 0 has optimum 1.
    #[test]
    fn recovers_two_by_two_boundary() {
        let mut builder = BlockBuilder::new("arrow", 2);
        builder.add_const(1, 0, 1.0);
        builder.add_var(0, 0, 0, 1.0);
        builder.add_var(0, 1, 1, 1.0);
        let program = ConicProgram::new(1, DVector::from_vec(vec![1.0]), vec![builder.build()]);
        let SolverOutcome::Feasible(sol) = solve_program(&program, &SolveOptions::default())
            .unwrap()
        else {
            panic!("feasible program reported infeasible");
        };
        assert!((sol.objective - 1.0).abs() < 1e-6, "{}", sol.objective);
    }

    /// A constant block forcing -1 >= 0 is infeasible with minimal shift 1.
    #[test]
    fn certifies_infeasibility() {
        let mut neg = BlockBuilder::new("neg", 1);
        neg.add_const(0, 0, -1.0);
        let mut upper = BlockBuilder::new("upper", 1);
        upper.add_const(0, 0, 1.0);
        upper.add_var(0, 0, 0, -1.0);
        let mut lower = BlockBuilder::new("lower", 1);
        lower.add_var(0, 0, 0, 1.0);
        let program = ConicProgram::new(
            1,
            DVector::from_vec(vec![0.0]),
            vec![neg.build(), upper.build(), lower.build()],
        );
        match solve_program(&program, &SolveOptions::default()).unwrap() {
            SolverOutcome::Infeasible { min_shift } => {
                assert!((min_shift - 1.0).abs() < 5e-3, "shift {min_shift}");
            }
            SolverOutcome::Feasible(_) => panic!("infeasible program reported feasible"),
        }
    }

    /// LP corner: min x0 + x1 s.t. x0 >= 2, x1 >= -1 (diagonal blocks).
    #[test]
    fn solves_diagonal_linear_program() {
        let mut b0 = BlockBuilder::new("x0", 1);
        b0.add_const(0, 0, -2.0);
        b0.add_var(0, 0, 0, 1.0);
        let mut b1 = BlockBuilder::new("x1", 1);
        b1.add_const(0, 0, 1.0);
        b1.add_var(1, 0, 0, 1.0);
        let program = ConicProgram::new(
            2,
            DVector::from_vec(vec![1.0, 1.0]),
            vec![b0.build(), b1.build()],
        );
        let SolverOutcome::Feasible(sol) = solve_program(&program, &SolveOptions::default())
            .unwrap()
        else {
            panic!("feasible LP reported infeasible");
        };
        assert!((sol.theta[0] - 2.0).abs() < 1e-6);
        assert!((sol.theta[1] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn returned_point_is_strictly_feasible() {
        let mut builder = BlockBuilder::new("s", 4);
        for i in 0..4 {
            builder.add_const(i, i, 1.0);
        }
        builder.add_var(0, 0, 1, 1.0);
        builder.add_var(1, 2, 3, 1.0);
        builder.add_var(0, 0, 0, 0.5);
        let program =
            ConicProgram::new(2, DVector::from_vec(vec![0.3, -0.7]), vec![builder.build()]);
        let SolverOutcome::Feasible(sol) = solve_program(&program, &SolveOptions::default())
            .unwrap()
        else {
            panic!("expected feasible");
        };
        assert!(program.min_eigenvalue(&sol.theta) > 0.0);
    }

    #[test]
    fn variable_scaling_reaches_same_solution() {
        // Same LP as above with wildly scaled variables.
        let mut b0 = BlockBuilder::new("x0", 1);
        b0.add_const(0, 0, -2e-6);
        b0.add_var(0, 0, 0, 1.0);
        let mut b1 = BlockBuilder::new("x1", 1);
        b1.add_const(0, 0, 1e6);
        b1.add_var(1, 0, 0, 1.0);
        let mut program = ConicProgram::new(
            2,
            DVector::from_vec(vec![1.0, 1.0]),
            vec![b0.build(), b1.build()],
        );
        program.var_scale = DVector::from_vec(vec![1e-6, 1e6]);
        let SolverOutcome::Feasible(sol) = solve_program(&program, &SolveOptions::default())
            .unwrap()
        else {
            panic!("feasible LP reported infeasible");
        };
        assert!((sol.theta[0] - 2e-6).abs() < 1e-11);
        assert!((sol.theta[1] + 1e6).abs() < 1.0);
    }
}
