//! Signed volumes and wedge-product Lasso dictionaries.
//!
//! For generators `g_1..g_{k-1}` in `R^k` the map `v -> det[v, g_1, ..]` is
//! linear, `v -> n . v`. A dictionary column is `(n . x_i)_+ / ||n_w||_p`
//! where `n_w` drops the bias coordinate when points are lifted by a trailing
//! one. Each generator tuple contributes two columns, one per orientation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lasso::{solve_lasso, LassoSolution};
use crate::model::{DataMatrix, Labels, Provenance, TwoLayerNet, WeightNorm};
use crate::solver::SolveOptions;

pub const MAX_WEDGE_SAMPLES: usize = 30;
pub const MAX_WEDGE_DIM: usize = 3;
const DEGENERATE_TOL: f64 = 1e-12;

/// Determinant of the matrix whose columns are `vectors`.
pub fn wedge_signed_volume(vectors: &[DVector<f64>]) -> Result<f64> {
    let k = vectors.len();
    if vectors.iter().any(|v| v.len() != k) {
        return Err(Error::dims(format!(
            "signed volume needs {k} vectors of length {k}"
        )));
    }
    let m = |r: usize, c: usize| vectors[c][r];
    Ok(match k {
        0 => 1.0,
        1 => m(0, 0),
        2 => m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0),
        3 => {
            m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1))
                - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
                + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0))
        }
        _ => DMatrix::from_columns(vectors).lu().determinant(),
    })
}

/// `n` with `n . v = det[v, g_1, .., g_{k-1}]` for every `v`.
pub fn wedge_normal(generators: &[DVector<f64>]) -> Result<DVector<f64>> {
    let k = generators.len() + 1;
    let mut cols = Vec::with_capacity(k);
    cols.push(DVector::zeros(k));
    cols.extend(generators.iter().cloned());
    let mut n = DVector::zeros(k);
    for l in 0..k {
        cols[0].fill(0.0);
        cols[0][l] = 1.0;
        n[l] = wedge_signed_volume(&cols)?;
    }
    Ok(n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WedgeColumn {
    /// Strictly increasing sample indices of the generators.
    pub indices: Vec<usize>,
    /// `+1` or `-1`.
    pub orientation: f64,
    /// Normalized weight part of the normal (unit `l_p` norm).
    pub weight: DVector<f64>,
    /// Normalized bias part; zero without lifting.
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WedgeDictionary {
    pub a: DMatrix<f64>,
    pub columns: Vec<WedgeColumn>,
    pub norm: WeightNorm,
    pub with_bias: bool,
    /// Generator tuples skipped for a zero denominator.
    pub dropped: Vec<Vec<usize>>,
}

fn lifted(x: &DataMatrix, i: usize, with_bias: bool) -> DVector<f64> {
    let mut v: Vec<f64> = x.sample(i).iter().copied().collect();
    if with_bias {
        v.push(1.0);
    }
    DVector::from_vec(v)
}

/// All strictly increasing `len`-tuples from `0..n`.
fn tuples(n: usize, len: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, len: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, len, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, len, &mut Vec::new(), &mut out);
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Signed ratio `det[x_i, g..] / ||n_w||_p` for generators given in any
/// order, before the positive part. `None` when the denominator vanishes.
pub fn wedge_ratio(
    point: &DVector<f64>,
    generators: &[DVector<f64>],
    norm: WeightNorm,
    with_bias: bool,
) -> Result<Option<f64>> {
    let n = wedge_normal(generators)?;
    let wlen = if with_bias { n.len() - 1 } else { n.len() };
    let denom = norm.of(&n.as_slice()[..wlen]);
    if denom <= DEGENERATE_TOL {
        return Ok(None);
    }
    if point.len() != n.len() {
        return Err(Error::dims("point dimension differs from generators"));
    }
    Ok(Some(n.dot(point) / denom))
}

pub fn build_wedge_dictionary(
    x: &DataMatrix,
    norm: WeightNorm,
    with_bias: bool,
    max_columns: usize,
) -> Result<WedgeDictionary> {
    let k = x.d() + usize::from(with_bias);
    let tuple_len = k - 1;
    let expected = 2.0 * binomial(x.n(), tuple_len);
    if tuple_len > x.n() || expected > max_columns as f64 {
        return Err(Error::ScaleExceeded(format!(
            "wedge dictionary would have {expected} columns (cap {max_columns})"
        )));
    }
    let points: Vec<DVector<f64>> = (0..x.n()).map(|i| lifted(x, i, with_bias)).collect();
    let mut columns = Vec::new();
    let mut dropped = Vec::new();
    let mut normals = Vec::new();
    for idx in tuples(x.n(), tuple_len) {
        let gens: Vec<DVector<f64>> = idx.iter().map(|&j| points[j].clone()).collect();
        let n = wedge_normal(&gens)?;
        let wlen = if with_bias { k - 1 } else { k };
        let denom = norm.of(&n.as_slice()[..wlen]);
        if denom <= DEGENERATE_TOL {
            dropped.push(idx);
            continue;
        }
        normals.push((idx, n / denom));
    }
    for orientation in [1.0, -1.0] {
        for (idx, n) in &normals {
            let (weight, bias) = if with_bias {
                (n.rows(0, k - 1) * orientation, n[k - 1] * orientation)
            } else {
                (n * orientation, 0.0)
            };
            columns.push(WedgeColumn {
                indices: idx.clone(),
                orientation,
                weight,
                bias,
            });
        }
    }
    let a = DMatrix::from_fn(x.n(), columns.len(), |i, c| {
        let col = &columns[c];
        let t = col.weight.dot(&x.sample(i)) + col.bias;
        t.max(0.0)
    });
    Ok(WedgeDictionary {
        a,
        columns,
        norm,
        with_bias,
        dropped,
    })
}

#[derive(Debug, Clone)]
pub struct WedgeFit {
    pub dictionary: WedgeDictionary,
    pub lasso: LassoSolution,
    pub fitted: DVector<f64>,
    /// Balanced network realizing the fit; its `l_p` weight-decay objective
    /// with `lambda = beta / 2` equals the Lasso objective.
    pub net: TwoLayerNet,
}

impl WedgeFit {
    pub fn support(&self) -> Vec<usize> {
        self.lasso.support()
    }
}

pub fn train_wedge_lasso(
    x: &DataMatrix,
    y: &Labels,
    beta: f64,
    norm: WeightNorm,
    with_bias: bool,
    opts: &SolveOptions,
) -> Result<WedgeFit> {
    y.check_paired(x)?;
    if x.n() > MAX_WEDGE_SAMPLES || x.d() > MAX_WEDGE_DIM {
        return Err(Error::ScaleExceeded(format!(
            "wedge training supports n <= {MAX_WEDGE_SAMPLES}, d <= {MAX_WEDGE_DIM}"
        )));
    }
    let dict = build_wedge_dictionary(x, norm, with_bias, usize::MAX)?;
    let lasso = solve_lasso(&dict.a, y.vector(), beta, false, opts)?;
    let fitted = &dict.a * &lasso.coef;

    let support = lasso.support();
    let d = x.d();
    let mut w = DMatrix::zeros(d, support.len());
    let mut b = DVector::zeros(support.len());
    let mut alpha = DVector::zeros(support.len());
    for (j, &c) in support.iter().enumerate() {
        let z = lasso.coef[c];
        let s = z.abs().sqrt();
        let col = &dict.columns[c];
        w.set_column(j, &(&col.weight * s));
        b[j] = col.bias * s;
        alpha[j] = z / s;
    }
    let net = TwoLayerNet::new(w, with_bias.then_some(b), alpha)?.with_meta(Provenance {
        method: "wedge-lasso".into(),
        beta,
        seed: None,
        pattern_count: Some(dict.columns.len()),
        duality_gap: Some(lasso.gap),
        bias_lifted: false,
    });
    Ok(WedgeFit {
        dictionary: dict,
        lasso,
        fitted,
        net,
    })
}
