//! Data model shared by every solver: training data, activation patterns and
//! the two-layer network itself.
//!
//! Data is stored feature-major: a [`DataMatrix`] is `d x n` with one column
//! per sample. Files on disk are rows-are-samples; the transpose happens at
//! ingestion.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};

/// Training inputs, `d` features by `n` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    entries: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(Error::invalid(format!(
                "data matrix must be non-empty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("data matrix contains non-finite entries"));
        }
        Ok(Self { entries })
    }

    /// Builds the matrix from a list of samples, one inner vector per sample.
    pub fn from_samples(samples: &[Vec<f64>]) -> Result<Self> {
        let n = samples.len();
        let d = samples.first().map_or(0, Vec::len);
        if let Some((i, s)) = samples.iter().enumerate().find(|(_, s)| s.len() != d) {
            return Err(Error::dims(format!(
                "sample {i} has {} features, expected {d}",
                s.len()
            )));
        }
        Self::new(DMatrix::from_fn(d, n, |r, c| samples[c][r]))
    }

    pub fn d(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n(&self) -> usize {
        self.entries.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn sample(&self, i: usize) -> DVectorView<'_, f64> {
        self.entries.column(i)
    }

    /// Samples as rows (`n x d`), the orientation used by files.
    pub fn to_samples(&self) -> Vec<Vec<f64>> {
        (0..self.n())
            .map(|i| self.sample(i).iter().copied().collect())
            .collect()
    }

    /// Appends a constant-one feature so that a bias can be carried as an
    /// ordinary weight coordinate.
    pub fn with_ones_row(&self) -> Self {
        let (d, n) = self.entries.shape();
        let lifted = DMatrix::from_fn(d + 1, n, |r, c| {
            if r == d {
                1.0
            } else {
                self.entries[(r, c)]
            }
        });
        Self { entries: lifted }
    }

    pub fn select_samples(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n()) {
            return Err(Error::dims(format!("sample index {bad} out of range")));
        }
        Self::new(self.entries.select_columns(indices))
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(&self.entries * c)
    }
}

/// Regression targets paired with a [`DataMatrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    values: DVector<f64>,
}

impl Labels {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::from_vector(DVector::from_vec(values))
    }

    pub fn from_vector(values: DVector<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("labels contain non-finite entries"));
        }
        Ok(Self { values })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            values: DVector::zeros(n),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::from_vector(&self.values * c)
    }

    pub fn check_paired(&self, x: &DataMatrix) -> Result<()> {
        if self.len() != x.n() {
            return Err(Error::dims(format!(
                "{} labels for {} samples",
                self.len(),
                x.n()
            )));
        }
        Ok(())
    }

    /// Mean squared error of `predictions` against these labels.
    pub fn mse(&self, predictions: &Labels) -> Result<f64> {
        if predictions.len() != self.len() {
            return Err(Error::dims("prediction length differs from labels"));
        }
        if self.is_empty() {
            return Ok(0.0);
        }
        Ok((&predictions.values - &self.values).norm_squared() / self.len() as f64)
    }
}

/// Which samples activate a neuron: bit `i` is `1{x_i . w >= 0}`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActivationPattern {
    bits: Vec<bool>,
}

impl ActivationPattern {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn ones(n: usize) -> Self {
        Self {
            bits: vec![true; n],
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::invalid(format!(
                    "pattern '{s}' contains '{other}', expected 0/1"
                ))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn is_zero(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn complement(&self) -> Self {
        Self {
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    /// True when every active sample of `self` is also active in `other`.
    pub fn is_subset_of(&self, other: &ActivationPattern) -> bool {
        self.bits.len() == other.bits.len()
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// The pattern as a 0/1 diagonal, i.e. `h` itself as floats.
    pub fn mask(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.bits.iter().map(|&b| f64::from(u8::from(b))))
    }
}

impl fmt::Display for ActivationPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Deduplicated, lexicographically sorted activation patterns, never
/// containing the all-zero pattern.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PatternSet {
    n: usize,
    patterns: Vec<ActivationPattern>,
}

impl PatternSet {
    pub fn new(n: usize, patterns: impl IntoIterator<Item = ActivationPattern>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for p in patterns {
            if p.len() != n {
                return Err(Error::dims(format!(
                    "pattern of length {} in a set over {n} samples",
                    p.len()
                )));
            }
            if !p.is_zero() {
                set.insert(p);
            }
        }
        Ok(Self {
            n,
            patterns: set.into_iter().collect(),
        })
    }

    pub fn empty(n: usize) -> Self {
        Self {
            n,
            patterns: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ActivationPattern> {
        self.patterns.iter()
    }

    pub fn get(&self, g: usize) -> &ActivationPattern {
        &self.patterns[g]
    }

    pub fn contains(&self, p: &ActivationPattern) -> bool {
        self.patterns.binary_search(p).is_ok()
    }

    pub fn position(&self, p: &ActivationPattern) -> Option<usize> {
        self.patterns.binary_search(p).ok()
    }

    pub fn is_subset_of(&self, other: &PatternSet) -> bool {
        self.patterns.iter().all(|p| other.contains(p))
    }

    pub fn union(&self, other: &PatternSet) -> Result<PatternSet> {
        PatternSet::new(
            self.n,
            self.patterns.iter().chain(other.patterns.iter()).cloned(),
        )
    }
}

impl<'a> IntoIterator for &'a PatternSet {
    type Item = &'a ActivationPattern;
    type IntoIter = std::slice::Iter<'a, ActivationPattern>;

    fn into_iter(self) -> Self::IntoIter {
        self.patterns.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub enum Activation {
    #[default]
    Relu,
    Abs,
}

impl Activation {
    #[inline]
    pub fn apply(self, t: f64) -> f64 {
        match self {
            Activation::Relu => t.max(0.0),
            Activation::Abs => t.abs(),
        }
    }

    /// Derivative with the `1{t >= 0}` convention at the kink.
    #[inline]
    pub fn derivative(self, t: f64) -> f64 {
        match self {
            Activation::Relu => {
                if t >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Abs => {
                if t >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Abs => "abs",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "abs" => Ok(Activation::Abs),
            other => Err(Error::invalid(format!("unknown activation '{other}'"))),
        }
    }
}

/// Norm used for the inner weights in the weight-decay penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightNorm {
    L1,
    #[default]
    L2,
}

impl WeightNorm {
    pub fn of(self, w: &[f64]) -> f64 {
        match self {
            WeightNorm::L1 => w.iter().map(|v| v.abs()).sum(),
            WeightNorm::L2 => w.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }

    pub fn from_p(p: u32) -> Result<Self> {
        match p {
            1 => Ok(WeightNorm::L1),
            2 => Ok(WeightNorm::L2),
            other => Err(Error::invalid(format!("p must be 1 or 2, got {other}"))),
        }
    }
}

/// Ties the Lasso penalty `beta` to the weight-decay coefficient `lambda` on
/// `sum_j ||w_j||^2 + alpha_j^2`.
///
/// Rescaling a neuron minimizes `lambda (g^2 ||w||^2 + alpha^2 / g^2)` at
/// `2 lambda ||w|| |alpha|`, so the two programs share an optimal value only
/// when `lambda = beta / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizationConvention {
    pub lasso_beta: f64,
    pub nonconvex_coeff: f64,
    pub weight_norm: WeightNorm,
}

impl RegularizationConvention {
    pub fn from_beta(beta: f64) -> Self {
        Self {
            lasso_beta: beta,
            nonconvex_coeff: beta / 2.0,
            weight_norm: WeightNorm::L2,
        }
    }

    pub fn with_weight_norm(mut self, norm: WeightNorm) -> Self {
        self.weight_norm = norm;
        self
    }
}

/// Where a network came from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Provenance {
    pub method: String,
    pub beta: f64,
    pub seed: Option<u64>,
    pub pattern_count: Option<usize>,
    pub duality_gap: Option<f64>,
    /// The network was fit on data with an appended ones-row; its bias is
    /// the last row of `W` and is regularized with the weights.
    pub bias_lifted: bool,
}

/// `f(x) = sum_j sigma(x . w_j + b_j) alpha_j + offset`.
///
/// `weights` is `rows x m`. When `bias` is absent and `rows = d + 1` for the
/// data being evaluated, the last row is a folded bias multiplying a constant
/// one (and is regularized like any other weight). Explicit `bias` entries are
/// never regularized, nor is `offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoLayerNet {
    weights: DMatrix<f64>,
    bias: Option<DVector<f64>>,
    alpha: DVector<f64>,
    pub activation: Activation,
    pub offset: f64,
    pub meta: Provenance,
}

impl TwoLayerNet {
    pub fn new(
        weights: DMatrix<f64>,
        bias: Option<DVector<f64>>,
        alpha: DVector<f64>,
    ) -> Result<Self> {
        let m = weights.ncols();
        if alpha.len() != m {
            return Err(Error::dims(format!(
                "{} output weights for {m} neurons",
                alpha.len()
            )));
        }
        if let Some(b) = &bias {
            if b.len() != m {
                return Err(Error::dims(format!("{} biases for {m} neurons", b.len())));
            }
        }
        let finite = weights.iter().chain(alpha.iter()).all(|v| v.is_finite())
            && bias.as_ref().is_none_or(|b| b.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::invalid("network parameters must be finite"));
        }
        Ok(Self {
            weights,
            bias,
            alpha,
            activation: Activation::Relu,
            offset: 0.0,
            meta: Provenance::default(),
        })
    }

    /// The identically-zero network (`m = 0`) on `rows`-dimensional weights.
    pub fn zero(rows: usize) -> Self {
        Self {
            weights: DMatrix::zeros(rows, 0),
            bias: None,
            alpha: DVector::zeros(0),
            activation: Activation::Relu,
            offset: 0.0,
            meta: Provenance::default(),
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_meta(mut self, meta: Provenance) -> Self {
        self.meta = meta;
        self
    }

    pub fn width(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn bias(&self) -> Option<&DVector<f64>> {
        self.bias.as_ref()
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Moves a folded last weight row into an explicit bias vector.
    pub fn unfold_bias(&self) -> Result<Self> {
        if self.bias.is_some() || self.weights.nrows() < 2 {
            return Err(Error::invalid("network has no folded bias row to unfold"));
        }
        let rows = self.weights.nrows();
        let mut out = self.clone();
        out.bias = Some(self.weights.row(rows - 1).transpose());
        out.weights = self.weights.rows(0, rows - 1).into_owned();
        Ok(out)
    }

    /// Moves an explicit bias back into a last weight row.
    pub fn fold_bias(&self) -> Result<Self> {
        let Some(b) = &self.bias else {
            return Err(Error::invalid("network has no explicit bias to fold"));
        };
        let mut out = self.clone();
        out.weights = self.weights.clone().insert_row(self.weights.nrows(), 0.0);
        out.weights.row_mut(self.weights.nrows()).copy_from(&b.transpose());
        out.bias = None;
        Ok(out)
    }

    fn folded_for(&self, d: usize) -> Result<bool> {
        let rows = self.weights.nrows();
        if rows == d {
            Ok(false)
        } else if rows == d + 1 && self.bias.is_none() {
            Ok(true)
        } else {
            Err(Error::dims(format!(
                "network weights have {rows} rows but data has {d} features"
            )))
        }
    }

    /// Pre-activation `x . w_j + b_j` of neuron `j` at a single input.
    fn preactivation(&self, j: usize, x: &[f64], folded: bool) -> f64 {
        let w = self.weights.column(j);
        let mut t: f64 = x.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
        if folded {
            t += w[x.len()];
        }
        if let Some(b) = &self.bias {
            t += b[j];
        }
        t
    }

    pub fn predict_point(&self, x: &[f64]) -> Result<f64> {
        let folded = self.folded_for(x.len())?;
        let mut out = self.offset;
        for j in 0..self.width() {
            out += self.activation.apply(self.preactivation(j, x, folded)) * self.alpha[j];
        }
        Ok(out)
    }

    pub fn predict(&self, x: &DataMatrix) -> Result<Labels> {
        let folded = self.folded_for(x.d())?;
        let mut out = DVector::from_element(x.n(), self.offset);
        let mut buf = vec![0.0; x.d()];
        for i in 0..x.n() {
            buf.iter_mut().zip(x.sample(i).iter()).for_each(|(b, v)| *b = *v);
            for j in 0..self.width() {
                out[i] +=
                    self.activation.apply(self.preactivation(j, &buf, folded)) * self.alpha[j];
            }
        }
        Labels::from_vector(out)
    }

    /// `sum_j ||w_j||^2 + alpha_j^2` with the given inner-weight norm. Explicit
    /// biases and the offset are excluded.
    pub fn weight_penalty(&self, norm: WeightNorm) -> f64 {
        (0..self.width())
            .map(|j| {
                let w = norm.of(self.weights.column(j).as_slice());
                w * w + self.alpha[j] * self.alpha[j]
            })
            .sum()
    }

    /// `1/2 ||f(X) - y||^2 + lambda * weight_penalty`.
    pub fn objective(
        &self,
        x: &DataMatrix,
        y: &Labels,
        conv: &RegularizationConvention,
    ) -> Result<f64> {
        y.check_paired(x)?;
        let pred = self.predict(x)?;
        let loss = 0.5 * (pred.vector() - y.vector()).norm_squared();
        Ok(loss + conv.nonconvex_coeff * self.weight_penalty(conv.weight_norm))
    }

    /// Neurons that cannot be balanced: zero inner weights with a nonzero
    /// output weight.
    pub fn degenerate_neurons(&self) -> Vec<usize> {
        (0..self.width())
            .filter(|&j| self.weights.column(j).norm() == 0.0 && self.alpha[j] != 0.0)
            .collect()
    }

    /// Rescales every neuron so that `||w_j||_2 = |alpha_j|`, leaving the
    /// function unchanged. Neurons with `alpha_j = 0` are zeroed; degenerate
    /// neurons are passed through.
    pub fn balance_rescale(&self) -> Self {
        let mut out = self.clone();
        for j in 0..self.width() {
            let wn = self.weights.column(j).norm();
            let a = self.alpha[j];
            if wn == 0.0 {
                continue;
            }
            let gamma = (a.abs() / wn).sqrt();
            if gamma == 0.0 {
                out.weights.column_mut(j).fill(0.0);
                if let Some(b) = &mut out.bias {
                    b[j] = 0.0;
                }
                continue;
            }
            out.weights.column_mut(j).scale_mut(gamma);
            if let Some(b) = &mut out.bias {
                b[j] *= gamma;
            }
            out.alpha[j] = a / gamma;
        }
        out
    }

    /// Multiplies neuron `j`'s inner weights (and bias) by `c` and divides its
    /// output weight by `c`.
    pub fn rescale_neuron(&mut self, j: usize, c: f64) {
        self.weights.column_mut(j).scale_mut(c);
        if let Some(b) = &mut self.bias {
            b[j] *= c;
        }
        self.alpha[j] /= c;
    }

    pub fn scale_outputs(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.alpha *= c;
        out
    }
}
