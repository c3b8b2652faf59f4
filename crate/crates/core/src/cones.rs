//! Activation-chamber cones `K = {z : (2 D - I) X^T z >= 0}` and Euclidean
//! projection onto them.
//!
//! The main projection solves the polar problem: `K` is cut out by rows
//! `a_i = s_i x_i`, so its polar is generated by the `-a_i` and
//! `c = P_K(c) + P_polar(c)`. `P_polar(c)` is a nonnegative least-squares
//! fit of `c` by the generators (Lawson-Hanson), which terminates with an
//! exact active set. Dykstra's alternating projections over the halfspaces
//! back it up if the active-set result fails verification.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{ActivationPattern, DataMatrix};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DYKSTRA_MAX_SWEEPS: usize = 10_000;

/// `X^T` with unit-normalized copies of its rows, shared by every cone built
/// on the same data.
#[derive(Debug)]
pub struct SampleRows {
    xt: DMatrix<f64>,
    unit: DMatrix<f64>,
}

impl SampleRows {
    pub fn new(x: &DataMatrix) -> Self {
        let xt = x.matrix().transpose();
        let mut unit = xt.clone();
        for mut row in unit.row_iter_mut() {
            let norm = row.norm();
            if norm > 0.0 {
                row /= norm;
            }
        }
        Self { xt, unit }
    }

    pub fn xt(&self) -> &DMatrix<f64> {
        &self.xt
    }

    pub fn n(&self) -> usize {
        self.xt.nrows()
    }

    pub fn d(&self) -> usize {
        self.xt.ncols()
    }
}

#[derive(Debug, Clone)]
pub struct ChamberCone {
    rows: Arc<SampleRows>,
    pattern: ActivationPattern,
}

/// Projection result with the active constraint set, reusable as a warm
/// start for a nearby point.
#[derive(Debug, Clone)]
pub struct Projection {
    pub point: DVector<f64>,
    pub active: Vec<usize>,
}

impl ChamberCone {
    pub fn new(x: &DataMatrix, pattern: ActivationPattern) -> Result<Self> {
        Self::from_rows(Arc::new(SampleRows::new(x)), pattern)
    }

    pub fn from_rows(rows: Arc<SampleRows>, pattern: ActivationPattern) -> Result<Self> {
        if pattern.len() != rows.n() {
            return Err(Error::dims(format!(
                "pattern has {} bits, data has {} samples",
                pattern.len(),
                rows.n()
            )));
        }
        Ok(Self { rows, pattern })
    }

    pub fn pattern(&self) -> &ActivationPattern {
        &self.pattern
    }

    pub fn dim(&self) -> usize {
        self.rows.d()
    }

    #[inline]
    fn sign(&self, i: usize) -> f64 {
        if self.pattern.get(i) {
            1.0
        } else {
            -1.0
        }
    }

    /// `M = (2 D - I) X^T`, one row per sample.
    pub fn constraint_matrix(&self) -> DMatrix<f64> {
        let xt = &self.rows.xt;
        DMatrix::from_fn(xt.nrows(), xt.ncols(), |i, k| self.sign(i) * xt[(i, k)])
    }

    /// `M z`.
    pub fn slacks(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut s = &self.rows.xt * z;
        for i in 0..s.len() {
            s[i] *= self.sign(i);
        }
        s
    }

    /// Slacks against unit-normalized rows.
    fn unit_slacks(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut s = &self.rows.unit * z;
        for i in 0..s.len() {
            s[i] *= self.sign(i);
        }
        s
    }

    pub fn contains(&self, z: &DVector<f64>, tol: f64) -> bool {
        z.len() == self.dim() && self.slacks(z).iter().all(|&v| v >= -tol)
    }

    /// Euclidean projection of `c` onto the cone.
    pub fn project(&self, c: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
        self.project_warm(c, tol, None).map(|p| p.point)
    }

    /// Projection seeded with a previous active set.
    pub fn project_warm(
        &self,
        c: &DVector<f64>,
        tol: f64,
        warm: Option<&[usize]>,
    ) -> Result<Projection> {
        if c.len() != self.dim() {
            return Err(Error::dims(format!(
                "point has {} entries, cone lives in {} dimensions",
                c.len(),
                self.dim()
            )));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("cannot project a non-finite point"));
        }
        let cn = c.norm();
        if cn == 0.0 {
            return Ok(Projection {
                point: c.clone(),
                active: Vec::new(),
            });
        }
        if let Some(proj) = self.nnls_projection(c, warm) {
            if self.verify(c, &proj.point, tol) {
                return Ok(proj);
            }
        }
        let point = self.project_dykstra(c, tol, DYKSTRA_MAX_SWEEPS)?;
        Ok(Projection {
            point,
            active: Vec::new(),
        })
    }

    /// Feasibility and complementarity of a candidate projection, scaled to
    /// `||c||`.
    fn verify(&self, c: &DVector<f64>, p: &DVector<f64>, tol: f64) -> bool {
        let scale = c.norm().max(1.0);
        let violation = -self.unit_slacks(p).min().min(0.0);
        let residual = p.dot(&(c - p)).abs();
        violation <= tol * scale && residual <= tol * (1.0 + c.norm_squared())
    }

    /// Lawson-Hanson on generators `g_i = -s_i x_i / ||x_i||`.
    fn nnls_projection(&self, c: &DVector<f64>, warm: Option<&[usize]>) -> Option<Projection> {
        let n = self.rows.n();
        let d = self.dim();
        let generator = |i: usize| -> DVector<f64> {
            self.rows.unit.row(i).transpose() * (-self.sign(i))
        };
        let zero_row = |i: usize| self.rows.unit.row(i).iter().all(|&v| v == 0.0);
        let stop = 1e-13 * c.norm();

        let mut passive: Vec<usize> = Vec::new();
        let mut lambda: Vec<f64> = Vec::new();

        if let Some(w) = warm {
            let cand: Vec<usize> = w.iter().copied().filter(|&i| i < n && !zero_row(i)).collect();
            if !cand.is_empty() && cand.len() <= d {
                let g = DMatrix::from_fn(d, cand.len(), |r, k| generator(cand[k])[r]);
                if let Some(s) = least_squares(&g, c) {
                    if s.iter().all(|&v| v > 0.0) {
                        passive = cand;
                        lambda = s.iter().copied().collect();
                    }
                }
            }
        }

        let residual = |passive: &[usize], lambda: &[f64]| -> DVector<f64> {
            let mut r = c.clone();
            for (&i, &l) in passive.iter().zip(lambda) {
                r -= generator(i) * l;
            }
            r
        };

        let mut r = residual(&passive, &lambda);
        // candidates that just failed to enter; cleared after any progress
        let mut blocked: Vec<usize> = Vec::new();
        for _ in 0..(3 * n + 10) {
            // gradient of the fit: g_i . r = -s_i x_i . r / ||x_i||
            let slack = self.unit_slacks(&r);
            let mut best = None;
            let mut best_val = stop;
            for i in 0..n {
                let gi = -slack[i];
                if gi > best_val && !blocked.contains(&i) && !passive.contains(&i) {
                    best_val = gi;
                    best = Some(i);
                }
            }
            let Some(j) = best else {
                return Some(Projection {
                    point: r,
                    active: passive,
                });
            };
            let saved = (passive.clone(), lambda.clone());
            passive.push(j);
            lambda.push(0.0);

            let mut dropped_new = false;
            let mut dependent = false;
            for _ in 0..(d + n + 2) {
                let g = DMatrix::from_fn(d, passive.len(), |row, k| generator(passive[k])[row]);
                let Some(s) = least_squares(&g, c) else {
                    dependent = true;
                    break;
                };
                if s.iter().all(|&v| v > 0.0) {
                    lambda = s.iter().copied().collect();
                    break;
                }
                let mut alpha = 1.0f64;
                for (k, &sk) in s.iter().enumerate() {
                    if sk <= 0.0 {
                        let denom = lambda[k] - sk;
                        if denom > 0.0 {
                            alpha = alpha.min(lambda[k] / denom);
                        } else {
                            alpha = 0.0;
                        }
                    }
                }
                for (k, l) in lambda.iter_mut().enumerate() {
                    *l += alpha * (s[k] - *l);
                }
                let mut k = 0;
                while k < passive.len() {
                    if lambda[k] <= 1e-15 {
                        if passive[k] == j {
                            dropped_new = true;
                        }
                        passive.remove(k);
                        lambda.remove(k);
                    } else {
                        k += 1;
                    }
                }
                if passive.is_empty() {
                    break;
                }
            }
            if dependent {
                // numerically dependent on the passive set: skip this candidate
                (passive, lambda) = saved;
                blocked.push(j);
                continue;
            }
            if dropped_new {
                blocked.push(j);
            } else {
                blocked.clear();
            }
            r = residual(&passive, &lambda);
        }
        None
    }

    /// Dykstra's alternating projections over the `n` halfspaces.
    pub fn project_dykstra(
        &self,
        c: &DVector<f64>,
        tol: f64,
        max_sweeps: usize,
    ) -> Result<DVector<f64>> {
        let n = self.rows.n();
        let d = self.dim();
        let mut z = c.clone();
        let mut corrections = DMatrix::<f64>::zeros(d, n);
        let scale = c.norm().max(1.0);
        let mut violation = f64::INFINITY;
        let mut residual = f64::INFINITY;
        for sweep in 0..max_sweeps {
            let before = z.clone();
            for i in 0..n {
                let a = self.rows.unit.row(i).transpose() * self.sign(i);
                if a.iter().all(|&v| v == 0.0) {
                    continue;
                }
                let v = &z + corrections.column(i);
                let t = a.dot(&v);
                let p = if t < 0.0 { &v - &a * t } else { v.clone() };
                corrections.set_column(i, &(v - &p));
                z = p;
            }
            violation = -self.unit_slacks(&z).min().min(0.0);
            residual = z.dot(&(c - &z)).abs();
            let moved = (&z - &before).norm();
            if violation <= tol * scale
                && residual <= tol * (1.0 + c.norm_squared())
                && moved <= tol * scale
            {
                return Ok(z);
            }
            if sweep + 1 == max_sweeps {
                break;
            }
        }
        Err(Error::ProjectionFailed {
            iterations: max_sweeps,
            violation,
            residual,
            best: z.iter().copied().collect(),
        })
    }

    /// `max { c . w : ||w||_2 <= 1, w in K } = ||P_K(c)||_2`.
    pub fn dual_norm(&self, c: &DVector<f64>) -> Result<f64> {
        Ok(self.project(c, DEFAULT_TOL)?.norm())
    }

    /// Exact projection for `d <= 2` by comparing the candidates `c`, `0` and
    /// the projections of `c` onto every boundary ray. `O(n^2)`; independent
    /// of the active-set solver.
    pub fn project_by_faces(&self, c: &DVector<f64>) -> Result<DVector<f64>> {
        let d = self.dim();
        if d > 2 {
            return Err(Error::ScaleExceeded(format!(
                "face enumeration supports d <= 2, got {d}"
            )));
        }
        if c.len() != d {
            return Err(Error::dims("point dimension differs from cone"));
        }
        let feasible = |z: &DVector<f64>| {
            let scale = z.norm().max(1.0);
            self.unit_slacks(z).iter().all(|&v| v >= -1e-12 * scale)
        };
        if feasible(c) {
            return Ok(c.clone());
        }
        let mut best = DVector::zeros(d);
        let mut best_dist = c.norm_squared();
        if d == 2 {
            for i in 0..self.rows.n() {
                let a = self.rows.unit.row(i);
                if a[0] == 0.0 && a[1] == 0.0 {
                    continue;
                }
                for ray in [[-a[1], a[0]], [a[1], -a[0]]] {
                    let ray = DVector::from_row_slice(&ray);
                    let t = ray.dot(c).max(0.0);
                    let p = ray * t;
                    let dist = (c - &p).norm_squared();
                    if dist < best_dist && feasible(&p) {
                        best_dist = dist;
                        best = p;
                    }
                }
            }
        }
        Ok(best)
    }
}

/// Minimizes `||G s - c||` for a tall-or-square `G`; `None` when `G` is
/// numerically rank deficient.
fn least_squares(g: &DMatrix<f64>, c: &DVector<f64>) -> Option<DVector<f64>> {
    let svd = g.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) || svd.singular_values.min() <= 1e-10 * smax {
        return None;
    }
    svd.solve(c, 0.0).ok()
}
