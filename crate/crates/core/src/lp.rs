//! Maximum-margin sign-separation LPs used by exact enumeration and the
//! zonotope vertex test.

use minilp::{ComparisonOp, OptimizationDirection, Problem};

use crate::error::{Error, Result};

/// Margins below this (on unit-normalized rows and a unit box for `w`) are
/// treated as zero.
pub(crate) const MARGIN_EPS: f64 = 1e-9;

pub(crate) struct Separation {
    pub margin: f64,
    pub direction: Vec<f64>,
}

/// Solves `max t` over `w in [-1,1]^d`, `t in [0,1]` subject to
///
/// * `x_i . w >= t` (or `>= 0` when `strict_active` is false) for active rows,
/// * `x_i . w <= -t` for inactive rows.
///
/// Rows are normalized to unit length first; zero rows are kept as written,
/// which pins `t = 0` whenever they carry a strict requirement.
pub(crate) fn max_margin(
    rows: &[(&[f64], bool)],
    d: usize,
    strict_active: bool,
) -> Result<Separation> {
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let w: Vec<_> = (0..d).map(|_| lp.add_var(0.0, (-1.0, 1.0))).collect();
    let t = lp.add_var(1.0, (0.0, 1.0));
    for &(x, active) in rows {
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = if norm > 0.0 { 1.0 / norm } else { 0.0 };
        let mut terms: Vec<_> = w.iter().zip(x).map(|(&v, &c)| (v, c * scale)).collect();
        if active {
            if strict_active {
                terms.push((t, -1.0));
            } else if norm == 0.0 {
                continue;
            }
            lp.add_constraint(terms.as_slice(), ComparisonOp::Ge, 0.0);
        } else {
            terms.push((t, 1.0));
            lp.add_constraint(terms.as_slice(), ComparisonOp::Le, 0.0);
        }
    }
    let sol = lp.solve().map_err(|e| Error::Lp(e.to_string()))?;
    Ok(Separation {
        margin: sol.objective(),
        direction: w.iter().map(|&v| sol[v]).collect(),
    })
}
