//! Cone-constrained group Lasso
//!
//! ```text
//! min  1/2 || sum_g D_g X^T (u_g - v_g) - y ||^2 + beta sum_g (||u_g|| + ||v_g||)
//! s.t. u_g, v_g in K_g
//! ```
//!
//! The prox of `beta ||.|| + 1_K` is block soft-thresholding of the cone
//! projection, so every iterate is feasible. A full proximal block coordinate
//! sweep (per-block step `1 / lambda_max(X D_g X^T)`) activates blocks and is
//! followed by the duality gap. Between sweeps the nonzero blocks get either
//! more coordinate passes or accelerated proximal gradient, which copes better
//! when a few overlapping groups share the same samples.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::cones::{ChamberCone, SampleRows, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::model::{DataMatrix, Labels, PatternSet};

pub const DEFAULT_MAX_ITER: usize = 50_000;
/// Iterations on the nonzero blocks between the first two full sweeps; the
/// count doubles after each sweep.
const FULL_SWEEP_EVERY: usize = 20;

/// Relative size below which a block is dropped from the returned solution.
const NEGLIGIBLE_BLOCK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Stop once `gap <= tol (1 + |objective|)`.
    pub tol: f64,
    /// Cap on iterations (full sweeps plus accelerated steps).
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroupLassoProblem {
    x: DataMatrix,
    y: Labels,
    beta: f64,
    patterns: PatternSet,
    rows: Arc<SampleRows>,
    cones: Vec<ChamberCone>,
    /// `G x n`, row `g` is the diagonal of `D_g`.
    masks: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupLassoSolution {
    pub beta: f64,
    pub u: Vec<DVector<f64>>,
    pub v: Vec<DVector<f64>>,
    pub objective: f64,
    pub gap: f64,
    pub iterations: usize,
    /// Number of nonzero `u_g` plus nonzero `v_g`.
    pub active_groups: usize,
    pub certified: bool,
}

impl GroupLassoSolution {
    pub fn group_count(&self) -> usize {
        self.u.len()
    }
}

pub fn build_problem(
    x: &DataMatrix,
    y: &Labels,
    beta: f64,
    patterns: &PatternSet,
) -> Result<GroupLassoProblem> {
    GroupLassoProblem::new(x.clone(), y.clone(), beta, patterns.clone())
}

/// `max(1 - threshold / ||z||, 0) z`.
pub fn group_prox(z: &DVector<f64>, threshold: f64) -> DVector<f64> {
    let norm = z.norm();
    if norm <= threshold || norm == 0.0 {
        DVector::zeros(z.len())
    } else {
        z * (1.0 - threshold / norm)
    }
}

impl GroupLassoProblem {
    pub fn new(x: DataMatrix, y: Labels, beta: f64, patterns: PatternSet) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::invalid(format!("beta must be positive, got {beta}")));
        }
        y.check_paired(&x)?;
        if patterns.is_empty() {
            return Err(Error::EmptyPatternSet);
        }
        if patterns.n() != x.n() {
            return Err(Error::dims(format!(
                "patterns have {} bits, data has {} samples",
                patterns.n(),
                x.n()
            )));
        }
        let rows = Arc::new(SampleRows::new(&x));
        let cones = patterns
            .iter()
            .map(|h| ChamberCone::from_rows(rows.clone(), h.clone()))
            .collect::<Result<Vec<_>>>()?;
        let masks = DMatrix::from_fn(patterns.len(), x.n(), |g, i| {
            if patterns.get(g).get(i) {
                1.0
            } else {
                0.0
            }
        });
        Ok(Self {
            x,
            y,
            beta,
            patterns,
            rows,
            cones,
            masks,
        })
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::invalid(format!("beta must be positive, got {beta}")));
        }
        let mut out = self.clone();
        out.beta = beta;
        Ok(out)
    }

    pub fn x(&self) -> &DataMatrix {
        &self.x
    }

    pub fn y(&self) -> &Labels {
        &self.y
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn patterns(&self) -> &PatternSet {
        &self.patterns
    }

    pub fn group_count(&self) -> usize {
        self.patterns.len()
    }

    pub fn d(&self) -> usize {
        self.x.d()
    }

    pub fn n(&self) -> usize {
        self.x.n()
    }

    /// `A_g = D_g X^T`.
    pub fn block(&self, g: usize) -> DMatrix<f64> {
        let xt = self.rows.xt();
        DMatrix::from_fn(xt.nrows(), xt.ncols(), |i, k| self.masks[(g, i)] * xt[(i, k)])
    }

    pub fn cone(&self, g: usize) -> &ChamberCone {
        &self.cones[g]
    }

    fn check_variables(&self, u: &[DVector<f64>], v: &[DVector<f64>]) -> Result<()> {
        let g = self.group_count();
        if u.len() != g || v.len() != g {
            return Err(Error::dims(format!(
                "expected {g} groups, got {} u and {} v",
                u.len(),
                v.len()
            )));
        }
        if u.iter().chain(v).any(|z| z.len() != self.d()) {
            return Err(Error::dims("group variable length differs from d"));
        }
        Ok(())
    }

    fn stack(&self, zs: &[DVector<f64>]) -> DMatrix<f64> {
        DMatrix::from_fn(zs.len(), self.d(), |g, k| zs[g][k])
    }

    /// `sum_g D_g X^T z_g` for `z` stored as `G x d` rows.
    fn fitted_rows(&self, z: &DMatrix<f64>) -> DVector<f64> {
        let n = self.n();
        let active: Vec<usize> = (0..z.nrows())
            .filter(|&g| z.row(g).iter().any(|&v| v != 0.0))
            .collect();
        let mut out = DVector::zeros(n);
        if active.is_empty() {
            return out;
        }
        if active.len() * 4 < z.nrows() {
            let xt = self.rows.xt();
            for &g in &active {
                let zg = z.row(g).transpose();
                let proj = xt * zg;
                for i in 0..n {
                    if self.masks[(g, i)] != 0.0 {
                        out[i] += proj[i];
                    }
                }
            }
        } else {
            let f = z * self.x.matrix();
            for i in 0..n {
                out[i] = self.masks.column(i).dot(&f.column(i));
            }
        }
        out
    }

    /// Rows `X D_g r`, one per group.
    fn correlations(&self, r: &DVector<f64>) -> DMatrix<f64> {
        let mut scaled = self.rows.xt().clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= r[i];
        }
        &self.masks * scaled
    }

    pub fn fitted(&self, u: &[DVector<f64>], v: &[DVector<f64>]) -> Result<DVector<f64>> {
        self.check_variables(u, v)?;
        Ok(self.fitted_rows(&(self.stack(u) - self.stack(v))))
    }

    pub fn objective(&self, u: &[DVector<f64>], v: &[DVector<f64>]) -> Result<f64> {
        let fit = self.fitted(u, v)?;
        let penalty: f64 = u.iter().chain(v).map(|z| z.norm()).sum();
        Ok(0.5 * (fit - self.y.vector()).norm_squared() + self.beta * penalty)
    }

    /// Largest `max(||P_K(c_g)||, ||P_K(-c_g)||)` over `c_g = X D_g r`.
    fn max_dual_norm(&self, r: &DVector<f64>) -> Result<f64> {
        let corr = self.correlations(r);
        let mut order: Vec<(usize, f64)> =
            (0..corr.nrows()).map(|g| (g, corr.row(g).norm())).collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut best = 0.0f64;
        for (g, norm) in order {
            if norm <= best {
                break;
            }
            let c = corr.row(g).transpose();
            let cone = &self.cones[g];
            best = best.max(cone.project(&c, DEFAULT_TOL)?.norm());
            if norm <= best {
                continue;
            }
            best = best.max(cone.project(&(-c), DEFAULT_TOL)?.norm());
        }
        Ok(best)
    }

    /// Smallest `beta` with the zero solution optimal.
    pub fn beta_max(&self) -> Result<f64> {
        if self.y.vector().iter().all(|&v| v == 0.0) {
            return Ok(0.0);
        }
        self.max_dual_norm(self.y.vector())
    }

    /// Duality gap from the primal point's fitted values.
    fn gap_from_fit(&self, fit: &DVector<f64>, penalty: f64) -> Result<(f64, f64)> {
        let y = self.y.vector();
        let primal = 0.5 * (fit - y).norm_squared() + self.beta * penalty;
        let rv = y - fit;
        let dn = self.max_dual_norm(&rv)?;
        let s = if dn > self.beta { self.beta / dn } else { 1.0 };
        let dual = 0.5 * y.norm_squared() - 0.5 * (rv * s - y).norm_squared();
        Ok((primal, primal - dual))
    }

    /// Primal minus dual value of a candidate.
    pub fn certify(&self, candidate: &GroupLassoSolution) -> Result<f64> {
        let fit = self.fitted(&candidate.u, &candidate.v)?;
        let penalty: f64 = candidate.u.iter().chain(&candidate.v).map(|z| z.norm()).sum();
        Ok(self.gap_from_fit(&fit, penalty)?.1)
    }

    fn zero_solution(&self, gap: f64, iterations: usize) -> GroupLassoSolution {
        let g = self.group_count();
        GroupLassoSolution {
            beta: self.beta,
            u: vec![DVector::zeros(self.d()); g],
            v: vec![DVector::zeros(self.d()); g],
            objective: 0.5 * self.y.vector().norm_squared(),
            gap,
            iterations,
            active_groups: 0,
            certified: true,
        }
    }

    pub fn solve(&self, opts: &SolveOptions) -> Result<GroupLassoSolution> {
        self.solve_from(opts, None)
    }

    /// Solve, optionally warm-started from a solution on the same patterns.
    pub fn solve_from(
        &self,
        opts: &SolveOptions,
        warm: Option<&GroupLassoSolution>,
    ) -> Result<GroupLassoSolution> {
        if !(opts.tol > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        if self.y.vector().iter().all(|&v| v == 0.0) {
            return Ok(self.zero_solution(0.0, 0));
        }
        let (g_count, d) = (self.group_count(), self.d());
        let mut z: Vec<[DVector<f64>; 2]> = match warm {
            Some(w) => {
                self.check_variables(&w.u, &w.v)?;
                (0..g_count).map(|g| [w.u[g].clone(), w.v[g].clone()]).collect()
            }
            None => vec![[DVector::zeros(d), DVector::zeros(d)]; g_count],
        };
        let mut state = Sweep {
            problem: self,
            lip: self.block_lipschitz(),
            members: (0..g_count)
                .map(|g| (0..self.n()).filter(|&i| self.masks[(g, i)] != 0.0).collect())
                .collect(),
            warm_sets: vec![[Vec::new(), Vec::new()]; g_count],
            resid: DVector::zeros(0),
            joint_lip: 0.0,
        };
        state.refresh_residual(&z);

        let all: Vec<usize> = (0..g_count).collect();
        let mut best: Option<(f64, Vec<[DVector<f64>; 2]>)> = None;
        let mut evaluated = false;
        let mut iterations = 0;
        let mut chunk = FULL_SWEEP_EVERY;
        let mut rates = [f64::INFINITY; 2];
        while iterations < opts.max_iter {
            iterations += 1;
            state.sweep(&mut z, &all)?;
            state.refresh_residual(&z);
            let fit = self.y.vector() + &state.resid;
            let penalty: f64 = z.iter().flatten().map(|b| b.norm()).sum();
            let (primal, gap) = self.gap_from_fit(&fit, penalty)?;
            evaluated = true;
            if best.as_ref().is_none_or(|b| gap < b.0) {
                best = Some((gap, z.clone()));
            }
            if gap <= opts.tol * (1.0 + primal.abs()) {
                break;
            }
            let steps = chunk.min(opts.max_iter - iterations);
            // the active set settles, so full sweeps get rarer
            chunk *= 2;
            if steps == 0 {
                continue;
            }
            // coordinate passes suit many loosely coupled blocks, acceleration
            // a few strongly coupled ones; run whichever last decreased the
            // objective faster, trying each once
            let mode = if rates[1] > rates[0] { 1 } else { 0 };
            if mode == 0 {
                let groups: Vec<usize> = (0..g_count)
                    .filter(|&g| z[g].iter().flatten().any(|&c| c != 0.0))
                    .collect();
                for _ in 0..steps {
                    state.sweep(&mut z, &groups)?;
                }
            } else {
                let blocks: Vec<(usize, usize)> = (0..g_count)
                    .flat_map(|g| [(g, 0), (g, 1)])
                    .filter(|&(g, b)| z[g][b].iter().any(|&c| c != 0.0))
                    .collect();
                state.accelerate(&mut z, &blocks, steps)?;
            }
            let penalty: f64 = z.iter().flatten().map(|b| b.norm()).sum();
            let after = 0.5 * state.resid.norm_squared() + self.beta * penalty;
            rates[mode] = (primal - after) / steps as f64;
            iterations += steps;
            evaluated = false;
        }
        // the budget may run out between full sweeps
        if !evaluated {
            let fit = self.fitted_rows(&self.stack_pairs(&z));
            let penalty: f64 = z.iter().flatten().map(|b| b.norm()).sum();
            let gap = self.gap_from_fit(&fit, penalty)?.1;
            if best.as_ref().is_none_or(|b| gap < b.0) {
                best = Some((gap, z));
            }
        }

        let (mut gap, mut z) = best.expect("set above");
        // blocks many orders below the largest are numerical residue of
        // deactivation; drop them when that keeps the certificate
        let largest = z.iter().flatten().map(|b| b.norm()).fold(0.0, f64::max);
        let tiny = |b: &DVector<f64>| b.norm() > 0.0 && b.norm() <= NEGLIGIBLE_BLOCK * largest;
        if z.iter().flatten().any(tiny) {
            let mut pruned = z.clone();
            for b in pruned.iter_mut().flatten() {
                if tiny(b) {
                    b.fill(0.0);
                }
            }
            let fit = self.fitted_rows(&self.stack_pairs(&pruned));
            let penalty: f64 = pruned.iter().flatten().map(|b| b.norm()).sum();
            let (primal, pruned_gap) = self.gap_from_fit(&fit, penalty)?;
            if pruned_gap <= gap.max(opts.tol * (1.0 + primal.abs())) {
                gap = pruned_gap;
                z = pruned;
            }
        }
        let u: Vec<DVector<f64>> = z.iter().map(|p| p[0].clone()).collect();
        let v: Vec<DVector<f64>> = z.iter().map(|p| p[1].clone()).collect();
        let objective = self.objective(&u, &v)?;
        let active_groups = u
            .iter()
            .chain(&v)
            .filter(|z| z.iter().any(|&c| c != 0.0))
            .count();
        Ok(GroupLassoSolution {
            beta: self.beta,
            certified: gap <= opts.tol * (1.0 + objective.abs()),
            u,
            v,
            objective,
            gap,
            iterations,
            active_groups,
        })
    }

    fn stack_pairs(&self, z: &[[DVector<f64>; 2]]) -> DMatrix<f64> {
        DMatrix::from_fn(z.len(), self.d(), |g, k| z[g][0][k] - z[g][1][k])
    }

    /// `lambda_max(X D_g X^T)` per group.
    fn block_lipschitz(&self) -> Vec<f64> {
        let x = self.x.matrix();
        (0..self.group_count())
            .map(|g| {
                let mut gram = DMatrix::<f64>::zeros(self.d(), self.d());
                for i in 0..self.n() {
                    if self.masks[(g, i)] != 0.0 {
                        let xi = x.column(i);
                        gram.ger(1.0, &xi, &xi, 1.0);
                    }
                }
                gram.symmetric_eigenvalues().max().max(0.0)
            })
            .collect()
    }
}

/// Working state of block coordinate descent: `resid = fit - y` is kept in
/// step with the blocks.
struct Sweep<'a> {
    problem: &'a GroupLassoProblem,
    lip: Vec<f64>,
    members: Vec<Vec<usize>>,
    warm_sets: Vec<[Vec<usize>; 2]>,
    resid: DVector<f64>,
    /// Step bound for the accelerated phase, grown by backtracking.
    joint_lip: f64,
}

impl Sweep<'_> {
    fn refresh_residual(&mut self, z: &[[DVector<f64>; 2]]) {
        let p = self.problem;
        self.resid = p.fitted_rows(&p.stack_pairs(z)) - p.y.vector();
    }

    /// One proximal step per block (`u_g` then `v_g`) in the given group
    /// order.
    fn sweep(&mut self, z: &mut [[DVector<f64>; 2]], groups: &[usize]) -> Result<()> {
        let p = self.problem;
        let x = p.x.matrix();
        let d = p.d();
        for &g in groups {
            let lip = self.lip[g];
            if lip <= 0.0 {
                continue;
            }
            let members = &self.members[g];
            for (b, sign) in [(0usize, 1.0f64), (1, -1.0)] {
                // gradient of the loss in this block: sign * X D_g resid
                let mut grad = DVector::zeros(d);
                for &i in members {
                    grad.axpy(sign * self.resid[i], &x.column(i), 1.0);
                }
                let old = &z[g][b];
                let was_zero = old.iter().all(|&c| c == 0.0);
                if was_zero && grad.norm() <= p.beta {
                    continue;
                }
                let c = old - &grad / lip;
                let thr = p.beta / lip;
                let new = if c.norm() <= thr {
                    DVector::zeros(d)
                } else {
                    let proj = p.cones[g].project_warm(&c, DEFAULT_TOL, Some(&self.warm_sets[g][b]))?;
                    self.warm_sets[g][b] = proj.active;
                    group_prox(&proj.point, thr)
                };
                let delta = &new - old;
                if delta.iter().all(|&c| c == 0.0) {
                    continue;
                }
                for &i in members {
                    self.resid[i] += sign * x.column(i).dot(&delta);
                }
                z[g][b] = new;
            }
        }
        Ok(())
    }

    /// `sum_b sign_b D_g X^T z_b - y` over the listed blocks; all other blocks
    /// are zero.
    fn residual_of(&self, blocks: &[(usize, usize)], vals: &[DVector<f64>]) -> DVector<f64> {
        let x = self.problem.x.matrix();
        let mut r = -self.problem.y.vector();
        for (&(g, b), val) in blocks.iter().zip(vals) {
            let sign = if b == 0 { 1.0 } else { -1.0 };
            for &i in &self.members[g] {
                r[i] += sign * x.column(i).dot(val);
            }
        }
        r
    }

    /// Accelerated proximal gradient restricted to `blocks`, with
    /// backtracking on the joint step and gradient-based restarts. Blocks may
    /// vanish but none outside the list is touched.
    fn accelerate(
        &mut self,
        z: &mut [[DVector<f64>; 2]],
        blocks: &[(usize, usize)],
        iters: usize,
    ) -> Result<()> {
        let p = self.problem;
        let x = p.x.matrix();
        let d = p.d();
        if blocks.is_empty() {
            return Ok(());
        }
        if self.joint_lip <= 0.0 {
            self.joint_lip = blocks.iter().map(|&(g, _)| self.lip[g]).fold(0.0, f64::max);
        }
        let mut cur: Vec<DVector<f64>> = blocks.iter().map(|&(g, b)| z[g][b].clone()).collect();
        let mut ext = cur.clone();
        let mut t = 1.0f64;
        for _ in 0..iters {
            let r_ext = self.residual_of(blocks, &ext);
            let f_ext = 0.5 * r_ext.norm_squared();
            let grads: Vec<DVector<f64>> = blocks
                .iter()
                .map(|&(g, b)| {
                    let sign = if b == 0 { 1.0 } else { -1.0 };
                    let mut grad = DVector::zeros(d);
                    for &i in &self.members[g] {
                        grad.axpy(sign * r_ext[i], &x.column(i), 1.0);
                    }
                    grad
                })
                .collect();
            let next = loop {
                let lip = self.joint_lip;
                let mut cand = Vec::with_capacity(blocks.len());
                for (k, &(g, b)) in blocks.iter().enumerate() {
                    let c = &ext[k] - &grads[k] / lip;
                    let thr = p.beta / lip;
                    cand.push(if c.norm() <= thr {
                        DVector::zeros(d)
                    } else {
                        let proj =
                            p.cones[g].project_warm(&c, DEFAULT_TOL, Some(&self.warm_sets[g][b]))?;
                        self.warm_sets[g][b] = proj.active;
                        group_prox(&proj.point, thr)
                    });
                }
                let f_cand = 0.5 * self.residual_of(blocks, &cand).norm_squared();
                let (mut lin, mut sq) = (0.0, 0.0);
                for k in 0..blocks.len() {
                    let diff = &cand[k] - &ext[k];
                    lin += grads[k].dot(&diff);
                    sq += diff.norm_squared();
                }
                if f_cand <= f_ext + lin + 0.5 * lip * sq + 1e-12 * (1.0 + f_ext) {
                    break cand;
                }
                self.joint_lip *= 2.0;
            };
            let restart: f64 = (0..blocks.len())
                .map(|k| (&ext[k] - &next[k]).dot(&(&next[k] - &cur[k])))
                .sum();
            let (t_next, mom) = if restart > 0.0 {
                (1.0, 0.0)
            } else {
                let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                (tn, (t - 1.0) / tn)
            };
            // extrapolated points may leave the cones; only the prox input
            // uses them, so iterates stay feasible
            ext = (0..blocks.len())
                .map(|k| &next[k] + (&next[k] - &cur[k]) * mom)
                .collect();
            t = t_next;
            cur = next;
        }
        for (&(g, b), val) in blocks.iter().zip(cur) {
            z[g][b] = val;
        }
        self.resid = self.residual_of(blocks, &blocks.iter().map(|&(g, b)| z[g][b].clone()).collect::<Vec<_>>());
        Ok(())
    }
}

/// Solves along a descending sequence of betas with warm starts. Failures are
/// reported per point and do not stop the sweep.
pub fn reg_path(
    x: &DataMatrix,
    y: &Labels,
    patterns: &PatternSet,
    betas: &[f64],
    opts: &SolveOptions,
) -> Result<Vec<Result<GroupLassoSolution>>> {
    let Some(&first) = betas.first() else {
        return Ok(Vec::new());
    };
    if betas.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::invalid("betas must be sorted in descending order"));
    }
    let base = GroupLassoProblem::new(x.clone(), y.clone(), first, patterns.clone())?;
    let mut out = Vec::with_capacity(betas.len());
    let mut warm: Option<GroupLassoSolution> = None;
    for &beta in betas {
        let result = base
            .with_beta(beta)
            .and_then(|p| p.solve_from(opts, warm.as_ref()));
        if let Ok(sol) = &result {
            warm = Some(sol.clone());
        }
        out.push(result);
    }
    Ok(out)
}
