//! Standard Lasso `1/2 ||A z + c - y||^2 + beta ||z||_1` with an optional
//! unpenalized intercept `c`, by accelerated proximal gradient on singleton
//! groups.
//!
//! The intercept is eliminated by centering: at any `z` the best `c` is
//! `mean(y - A z)`, which leaves a Lasso in the centered columns.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::solver::SolveOptions;

#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    pub coef: DVector<f64>,
    pub intercept: f64,
    pub objective: f64,
    pub gap: f64,
    pub iterations: usize,
    pub certified: bool,
}

impl LassoSolution {
    pub fn support(&self) -> Vec<usize> {
        (0..self.coef.len()).filter(|&j| self.coef[j] != 0.0).collect()
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn centered(a: &DMatrix<f64>, y: &DVector<f64>, intercept: bool) -> (DMatrix<f64>, DVector<f64>) {
    if !intercept {
        return (a.clone(), y.clone());
    }
    let mut ac = a.clone();
    for mut col in ac.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let yc = y.add_scalar(-y.mean());
    (ac, yc)
}

/// `||A_c^T y_c||_inf`: the smallest `beta` with `z = 0` optimal.
pub fn lasso_beta_max(a: &DMatrix<f64>, y: &DVector<f64>, intercept: bool) -> f64 {
    let (ac, yc) = centered(a, y, intercept);
    (ac.transpose() * yc).amax()
}

fn lasso_gap(ac: &DMatrix<f64>, yc: &DVector<f64>, z: &DVector<f64>, beta: f64) -> (f64, f64) {
    let r = yc - ac * z;
    let primal = 0.5 * r.norm_squared() + beta * z.lp_norm(1);
    let dn = (ac.transpose() * &r).amax();
    let s = if dn > beta { beta / dn } else { 1.0 };
    let dual = 0.5 * yc.norm_squared() - 0.5 * (&r * s - yc).norm_squared();
    (primal, primal - dual)
}

pub fn solve_lasso(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    beta: f64,
    intercept: bool,
    opts: &SolveOptions,
) -> Result<LassoSolution> {
    if a.nrows() != y.len() {
        return Err(Error::dims(format!(
            "dictionary has {} rows, labels have {}",
            a.nrows(),
            y.len()
        )));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let p = a.ncols();
    let (ac, yc) = centered(a, y, intercept);
    let finish = |z: DVector<f64>, gap: f64, iterations: usize| {
        let intercept_value = if intercept {
            (y - a * &z).mean()
        } else {
            0.0
        };
        let resid = a * &z - y + DVector::from_element(y.len(), intercept_value);
        let objective = 0.5 * resid.norm_squared() + beta * z.lp_norm(1);
        LassoSolution {
            coef: z,
            intercept: intercept_value,
            objective,
            gap,
            iterations,
            certified: gap <= opts.tol * (1.0 + objective.abs()),
        }
    };
    if p == 0 || yc.iter().all(|&v| v == 0.0) {
        let z = DVector::zeros(p);
        let (_, gap) = lasso_gap(&ac, &yc, &z, beta);
        return Ok(finish(z, gap, 0));
    }

    // largest eigenvalue of A_c^T A_c, refined by backtracking below
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut q = DVector::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
    let mut est: f64 = 0.0;
    for _ in 0..50 {
        let norm = q.norm();
        if norm == 0.0 {
            break;
        }
        q /= norm;
        let next = ac.tr_mul(&(&ac * &q));
        est = q.dot(&next);
        q = next;
    }
    let mut lip = (est * 1.05).max(f64::MIN_POSITIVE);

    let every = 10;
    let mut z = DVector::zeros(p);
    let mut w = z.clone();
    let mut t = 1.0f64;
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut iterations = 0;
    for it in 1..=opts.max_iter {
        iterations = it;
        let rw = &ac * &w - &yc;
        let grad = ac.tr_mul(&rw);
        let fw = 0.5 * rw.norm_squared();
        let next = loop {
            let step = 1.0 / lip;
            let cand = (&w - &grad * step).map(|v| soft_threshold(v, step * beta));
            let diff = &cand - &w;
            let fc = 0.5 * (&ac * &cand - &yc).norm_squared();
            if fc <= fw + grad.dot(&diff) + 0.5 * lip * diff.norm_squared() + 1e-12 * (1.0 + fw) {
                break cand;
            }
            lip *= 2.0;
        };
        let restart = (&w - &next).dot(&(&next - &z)) > 0.0;
        let t_next = if restart {
            1.0
        } else {
            0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt())
        };
        let mom = if restart { 0.0 } else { (t - 1.0) / t_next };
        w = &next + (&next - &z) * mom;
        t = t_next;
        z = next;
        if it % every == 0 || it == opts.max_iter {
            let (primal, gap) = lasso_gap(&ac, &yc, &z, beta);
            if best.as_ref().is_none_or(|b| gap < b.0) {
                best = Some((gap, z.clone()));
            }
            if gap <= opts.tol * (1.0 + primal.abs()) {
                break;
            }
        }
    }
    let (gap, z) = best.expect("at least one certification runs");
    Ok(finish(z, gap, iterations))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthonormal_design_is_soft_threshold() {
        let a = DMatrix::identity(3, 3);
        let y = DVector::from_row_slice(&[2.0, -0.3, -1.5]);
        let sol = solve_lasso(&a, &y, 0.5, false, &SolveOptions::with_tol(1e-12)).unwrap();
        let expect = DVector::from_row_slice(&[1.5, 0.0, -1.0]);
        assert!((sol.coef - expect).norm() < 1e-9);
        assert_eq!(sol.intercept, 0.0);
    }

    #[test]
    fn above_threshold_is_zero() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 1.0, 0.0, 3.0]);
        let y = DVector::from_row_slice(&[1.0, 2.0, 4.0]);
        let bm = lasso_beta_max(&a, &y, true);
        let sol = solve_lasso(&a, &y, bm * 1.001, true, &SolveOptions::default()).unwrap();
        assert!(sol.support().is_empty());
        assert!((sol.intercept - y.mean()).abs() < 1e-15);
    }

    #[test]
    fn empty_dictionary_fits_intercept() {
        let a = DMatrix::zeros(2, 0);
        let y = DVector::from_row_slice(&[1.0, 3.0]);
        let sol = solve_lasso(&a, &y, 1.0, true, &SolveOptions::default()).unwrap();
        assert_eq!(sol.intercept, 2.0);
        assert!((sol.objective - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gap_is_certified() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.5, -1.0, 0.0, 1.0, 0.3, 1.0, -2.0]);
        let y = DVector::from_row_slice(&[1.0, -1.0, 2.0]);
        let sol = solve_lasso(&a, &y, 0.1, false, &SolveOptions::with_tol(1e-10)).unwrap();
        assert!(sol.certified);
        assert!(sol.gap >= -1e-12);
    }
}
