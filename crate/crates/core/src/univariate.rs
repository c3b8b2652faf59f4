//! One-dimensional inputs: training reduces to a plain Lasso over the
//! dictionaries `A+[i][j] = sigma(x_i - x_j)` and `A-[i][j] = sigma(x_j - x_i)`,
//! and each nonzero coefficient becomes one biased neuron with a kink at a
//! training point.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lasso::{solve_lasso, LassoSolution};
use crate::model::{Activation, Labels, Provenance, TwoLayerNet};
use crate::solver::SolveOptions;

#[derive(Debug, Clone, PartialEq)]
pub struct UnivariateDictionary {
    pub aplus: DMatrix<f64>,
    pub aminus: DMatrix<f64>,
    /// Training inputs in sample order; column `j` has its kink at `knots[j]`.
    pub knots: Vec<f64>,
    pub activation: Activation,
}

impl UnivariateDictionary {
    /// `[A+ A-]` for ReLU, `A+` alone for the symmetric activation.
    pub fn stacked(&self) -> DMatrix<f64> {
        match self.activation {
            Activation::Abs => self.aplus.clone(),
            Activation::Relu => {
                let n = self.aplus.nrows();
                let mut out = DMatrix::zeros(n, 2 * self.aplus.ncols());
                out.columns_mut(0, self.aplus.ncols()).copy_from(&self.aplus);
                out.columns_mut(self.aplus.ncols(), self.aminus.ncols())
                    .copy_from(&self.aminus);
                out
            }
        }
    }

    pub fn sorted_knots(&self) -> Vec<f64> {
        let mut k = self.knots.clone();
        k.sort_by(f64::total_cmp);
        k
    }
}

pub fn build_univariate_dictionary(
    xs: &[f64],
    activation: Activation,
) -> Result<UnivariateDictionary> {
    if xs.is_empty() {
        return Err(Error::invalid("need at least one input"));
    }
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("inputs must be finite"));
    }
    let n = xs.len();
    let aplus = DMatrix::from_fn(n, n, |i, j| activation.apply(xs[i] - xs[j]));
    let aminus = DMatrix::from_fn(n, n, |i, j| activation.apply(xs[j] - xs[i]));
    Ok(UnivariateDictionary {
        aplus,
        aminus,
        knots: xs.to_vec(),
        activation,
    })
}

#[derive(Debug, Clone)]
pub struct UnivariateFit {
    pub dictionary: UnivariateDictionary,
    pub lasso: LassoSolution,
    pub zplus: DVector<f64>,
    /// Empty for the symmetric activation.
    pub zminus: DVector<f64>,
    pub net: TwoLayerNet,
}

impl UnivariateFit {
    /// `A+ z+ + A- z- + c` at the training inputs.
    pub fn fitted(&self) -> DVector<f64> {
        let mut f = &self.dictionary.aplus * &self.zplus;
        if !self.zminus.is_empty() {
            f += &self.dictionary.aminus * &self.zminus;
        }
        f.add_scalar(self.lasso.intercept)
    }
}

/// Balanced neuron realizing `z * sigma(sign * (x - knot))`.
fn neuron(z: f64, knot: f64, sign: f64) -> (f64, f64, f64) {
    let s = z.abs().sqrt();
    (sign * s, -sign * s * knot, z / s)
}

pub fn solve_univariate(
    xs: &[f64],
    y: &Labels,
    beta: f64,
    activation: Activation,
    intercept: bool,
    opts: &SolveOptions,
) -> Result<UnivariateFit> {
    if y.len() != xs.len() {
        return Err(Error::dims(format!(
            "{} inputs but {} labels",
            xs.len(),
            y.len()
        )));
    }
    let dict = build_univariate_dictionary(xs, activation)?;
    let a = dict.stacked();
    let lasso = solve_lasso(&a, y.vector(), beta, intercept, opts)?;
    let n = xs.len();
    let zplus = lasso.coef.rows(0, n).into_owned();
    let zminus = if activation == Activation::Relu {
        lasso.coef.rows(n, n).into_owned()
    } else {
        DVector::zeros(0)
    };

    let mut w = Vec::new();
    let mut b = Vec::new();
    let mut alpha = Vec::new();
    for (coefs, sign) in [(&zplus, 1.0), (&zminus, -1.0)] {
        for (j, &z) in coefs.iter().enumerate() {
            if z != 0.0 {
                let (wj, bj, aj) = neuron(z, xs[j], sign);
                w.push(wj);
                b.push(bj);
                alpha.push(aj);
            }
        }
    }
    let m = w.len();
    let mut net = TwoLayerNet::new(
        DMatrix::from_row_slice(1, m, &w),
        Some(DVector::from_vec(b)),
        DVector::from_vec(alpha),
    )?
    .with_activation(activation)
    .with_meta(Provenance {
        method: "univariate-lasso".into(),
        beta,
        seed: None,
        pattern_count: None,
        duality_gap: Some(lasso.gap),
        bias_lifted: false,
    });
    net.offset = lasso.intercept;
    Ok(UnivariateFit {
        dictionary: dict,
        lasso,
        zplus,
        zminus,
        net,
    })
}
