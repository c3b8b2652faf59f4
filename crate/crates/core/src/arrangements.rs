//! Activation patterns of the hyperplane arrangement `{w : x_i . w = 0}`.
//!
//! Exact enumeration has two routes: an angular sweep for `d = 2` (any `n`)
//! and a depth-first search over sign prefixes with one margin LP per node
//! for general `d` (`n <= 16`). Sampling draws Gaussian directions from a
//! counter-based stream so the output depends only on `(seed, count)`.

use std::collections::BTreeMap;
use std::f64::consts::{E, PI};
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lp::{max_margin, MARGIN_EPS};
use crate::model::{ActivationPattern, DataMatrix, PatternSet};

/// Largest `n` accepted by the LP enumeration route.
pub const LP_MAX_SAMPLES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnumerationMethod {
    ExactLp,
    Exact2d,
    Sampled,
}

impl EnumerationMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            EnumerationMethod::ExactLp => "exact-lp",
            EnumerationMethod::Exact2d => "exact-2d",
            EnumerationMethod::Sampled => "sampled",
        }
    }

    pub fn is_exact(self) -> bool {
        !matches!(self, EnumerationMethod::Sampled)
    }
}

impl fmt::Display for EnumerationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct ArrangementReport {
    pub patterns: PatternSet,
    pub method: EnumerationMethod,
    pub samples_drawn: usize,
    pub seed: Option<u64>,
    /// Numerical rank of the data matrix.
    pub rank: usize,
    /// Upper bound on the number of patterns, see [`pattern_count_bound`].
    pub bound: f64,
}

/// `1{X^T w >= 0}`; samples on the hyperplane count as active.
pub fn pattern_of(x: &DataMatrix, w: &[f64]) -> Result<ActivationPattern> {
    if w.len() != x.d() {
        return Err(Error::dims(format!(
            "direction has {} entries, data has {} features",
            w.len(),
            x.d()
        )));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("direction must be finite"));
    }
    Ok(pattern_unchecked(x, w))
}

fn pattern_unchecked(x: &DataMatrix, w: &[f64]) -> ActivationPattern {
    ActivationPattern::new(
        (0..x.n())
            .map(|i| x.sample(i).iter().zip(w).map(|(a, b)| a * b).sum::<f64>() >= 0.0)
            .collect(),
    )
}

/// Rank with singular-value cutoff `max(d, n) * eps * sigma_max`.
pub fn numerical_rank(x: &DataMatrix) -> usize {
    let sv = x.matrix().clone().singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    let cutoff = x.d().max(x.n()) as f64 * f64::EPSILON * smax;
    sv.iter().filter(|&&s| s > cutoff).count()
}

/// `2 r (e (n - 1) / r)^r`, valid once `n - 1 >= r`. Smaller cases fall back
/// to the trivial `2^n`, and rank zero admits only the all-ones pattern.
pub fn pattern_count_bound(n: usize, rank: usize) -> f64 {
    if rank == 0 {
        return 1.0;
    }
    if n < rank + 1 {
        return 2f64.powi(n as i32);
    }
    let r = rank as f64;
    2.0 * r * (E * (n as f64 - 1.0) / r).powf(r)
}

/// `(2 diag(h) - I) X^T`, whose nonnegativity defines the closed chamber of `h`.
pub fn chamber_constraints(x: &DataMatrix, h: &ActivationPattern) -> Result<DMatrix<f64>> {
    if h.len() != x.n() {
        return Err(Error::dims(format!(
            "pattern has {} bits, data has {} samples",
            h.len(),
            x.n()
        )));
    }
    Ok(DMatrix::from_fn(x.n(), x.d(), |i, k| {
        let s = if h.get(i) { 1.0 } else { -1.0 };
        s * x.matrix()[(k, i)]
    }))
}

/// All patterns of the arrangement except the all-zero one.
pub fn enumerate_exact(x: &DataMatrix) -> Result<ArrangementReport> {
    let (witnessed, method) = enumerate_with_witnesses(x)?;
    let rank = numerical_rank(x);
    Ok(ArrangementReport {
        patterns: PatternSet::new(x.n(), witnessed.into_keys())?,
        method,
        samples_drawn: 0,
        seed: None,
        rank,
        bound: pattern_count_bound(x.n(), rank),
    })
}

/// Exact enumeration that also returns one realizing direction per pattern.
/// The all-zero pattern is excluded; the all-ones pattern carries `w = 0`.
pub fn enumerate_with_witnesses(
    x: &DataMatrix,
) -> Result<(BTreeMap<ActivationPattern, DVector<f64>>, EnumerationMethod)> {
    if x.d() == 2 {
        Ok((sweep_2d(x), EnumerationMethod::Exact2d))
    } else if x.n() <= LP_MAX_SAMPLES {
        Ok((lp_search(x)?, EnumerationMethod::ExactLp))
    } else {
        Err(Error::ScaleExceeded(format!(
            "exact enumeration needs d = 2 or n <= {LP_MAX_SAMPLES}, got d = {}, n = {}",
            x.d(),
            x.n()
        )))
    }
}

/// Candidate directions are the normals `+-x_i^perp` (boundary patterns) and
/// the bisectors between consecutive normals (open chambers).
fn sweep_2d(x: &DataMatrix) -> BTreeMap<ActivationPattern, DVector<f64>> {
    let mut normals: Vec<(f64, [f64; 2])> = Vec::with_capacity(2 * x.n());
    for i in 0..x.n() {
        let (a, b) = (x.matrix()[(0, i)], x.matrix()[(1, i)]);
        if a == 0.0 && b == 0.0 {
            continue;
        }
        for w in [[-b, a], [b, -a]] {
            normals.push((w[1].atan2(w[0]), w));
        }
    }
    normals.sort_by(|p, q| p.0.total_cmp(&q.0));

    let mut candidates: Vec<[f64; 2]> = normals.iter().map(|&(_, w)| w).collect();
    if normals.is_empty() {
        candidates.push([1.0, 0.0]);
    }
    for k in 0..normals.len() {
        let a = normals[k].0;
        let b = if k + 1 < normals.len() {
            normals[k + 1].0
        } else {
            normals[0].0 + 2.0 * PI
        };
        if b > a {
            let mid = 0.5 * (a + b);
            candidates.push([mid.cos(), mid.sin()]);
        }
    }

    let mut out = BTreeMap::new();
    out.insert(ActivationPattern::ones(x.n()), DVector::zeros(2));
    for w in candidates {
        let h = pattern_unchecked(x, &w);
        if !h.is_zero() {
            out.entry(h).or_insert_with(|| DVector::from_row_slice(&w));
        }
    }
    out
}

fn lp_search(x: &DataMatrix) -> Result<BTreeMap<ActivationPattern, DVector<f64>>> {
    let samples = x.to_samples();
    let mut out = BTreeMap::new();
    let mut prefix = Vec::with_capacity(x.n());
    lp_extend(&samples, x.d(), &mut prefix, &mut out)?;
    out.remove(&ActivationPattern::new(vec![false; x.n()]));
    Ok(out)
}

fn lp_extend(
    samples: &[Vec<f64>],
    d: usize,
    prefix: &mut Vec<bool>,
    out: &mut BTreeMap<ActivationPattern, DVector<f64>>,
) -> Result<()> {
    if prefix.len() == samples.len() {
        let h = ActivationPattern::new(prefix.clone());
        let witness = realizing_direction(samples, prefix, d)?;
        out.insert(h, witness);
        return Ok(());
    }
    for bit in [false, true] {
        prefix.push(bit);
        if prefix_feasible(samples, prefix, d)? {
            lp_extend(samples, d, prefix, out)?;
        }
        prefix.pop();
    }
    Ok(())
}

fn rows_for<'a>(samples: &'a [Vec<f64>], prefix: &[bool]) -> Vec<(&'a [f64], bool)> {
    prefix
        .iter()
        .enumerate()
        .map(|(i, &b)| (samples[i].as_slice(), b))
        .collect()
}

fn prefix_feasible(samples: &[Vec<f64>], prefix: &[bool], d: usize) -> Result<bool> {
    if prefix.iter().all(|&b| b) {
        return Ok(true);
    }
    let sep = max_margin(&rows_for(samples, prefix), d, false)?;
    Ok(sep.margin > MARGIN_EPS)
}

/// Prefers a strictly separating direction; boundary-only patterns fall back
/// to the non-strict LP solution.
fn realizing_direction(samples: &[Vec<f64>], bits: &[bool], d: usize) -> Result<DVector<f64>> {
    if bits.iter().all(|&b| b) {
        return Ok(DVector::zeros(d));
    }
    let rows = rows_for(samples, bits);
    let strict = max_margin(&rows, d, true)?;
    if strict.margin > MARGIN_EPS {
        return Ok(DVector::from_vec(strict.direction));
    }
    Ok(DVector::from_vec(max_margin(&rows, d, false)?.direction))
}

/// The `index`-th standard normal direction of the stream keyed by `seed`.
pub fn sample_direction(d: usize, seed: u64, index: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(&mut rng)))
}

/// Patterns of `count` Gaussian directions. Identical `(seed, count)` give
/// identical results, and a larger count with the same seed gives a superset.
pub fn sample_patterns(x: &DataMatrix, count: usize, seed: u64) -> Result<ArrangementReport> {
    let patterns: Vec<ActivationPattern> = (0..count as u64)
        .into_par_iter()
        .map(|i| pattern_unchecked(x, sample_direction(x.d(), seed, i).as_slice()))
        .collect();
    let rank = numerical_rank(x);
    Ok(ArrangementReport {
        patterns: PatternSet::new(x.n(), patterns)?,
        method: EnumerationMethod::Sampled,
        samples_drawn: count,
        seed: Some(seed),
        rank,
        bound: pattern_count_bound(x.n(), rank),
    })
}

/// The zonotope `{X h : h in [0,1]^n}` generated by the samples.
#[derive(Debug, Clone)]
pub struct Zonotope {
    generators: DMatrix<f64>,
}

impl Zonotope {
    pub fn new(x: &DataMatrix) -> Self {
        Self {
            generators: x.matrix().clone(),
        }
    }

    pub fn generator_count(&self) -> usize {
        self.generators.ncols()
    }

    /// `X h`.
    pub fn point(&self, h: &ActivationPattern) -> DVector<f64> {
        &self.generators * h.mask()
    }

    /// Support function `max_{z in Z} w . z = sum_i (x_i . w)_+`.
    pub fn support(&self, w: &DVector<f64>) -> f64 {
        (self.generators.transpose() * w).iter().map(|v| v.max(0.0)).sum()
    }
}

#[derive(Debug, Clone)]
pub struct VertexCheck {
    pub is_vertex: bool,
    /// Strictly separating direction, present when `is_vertex`.
    pub witness: Option<DVector<f64>>,
    pub margin: f64,
}

/// Whether `X h` is a vertex of the zonotope, i.e. some `w` has `x_i . w > 0`
/// exactly where `h_i = 1` and `< 0` elsewhere.
pub fn is_zonotope_vertex(x: &DataMatrix, h: &ActivationPattern) -> Result<VertexCheck> {
    if h.len() != x.n() {
        return Err(Error::dims("pattern length differs from sample count"));
    }
    if x.n() > LP_MAX_SAMPLES {
        return Err(Error::ScaleExceeded(format!(
            "vertex test supports n <= {LP_MAX_SAMPLES}, got {}",
            x.n()
        )));
    }
    let samples = x.to_samples();
    let sep = max_margin(&rows_for(&samples, h.bits()), x.d(), true)?;
    let is_vertex = sep.margin > MARGIN_EPS;
    Ok(VertexCheck {
        is_vertex,
        witness: is_vertex.then(|| DVector::from_vec(sep.direction)),
        margin: sep.margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exdata() -> DataMatrix {
        DataMatrix::from_samples(&[vec![2.0, 2.0], vec![3.0, 3.0], vec![1.0, 0.0]]).unwrap()
    }

    fn bits(s: &str) -> ActivationPattern {
        ActivationPattern::parse(s).unwrap()
    }

    #[test]
    fn worked_example_patterns() {
        let x = exdata();
        assert_eq!(pattern_of(&x, &[-1.0, 2.0]).unwrap(), bits("110"));
        assert_eq!(pattern_of(&x, &[1.0, -2.0]).unwrap(), bits("001"));
        assert_eq!(pattern_of(&x, &[0.0, 0.0]).unwrap(), bits("111"));
        assert!(pattern_of(&x, &[1.0]).is_err());

        let report = enumerate_exact(&x).unwrap();
        assert_eq!(report.method, EnumerationMethod::Exact2d);
        let got: Vec<String> = report.patterns.iter().map(|p| p.to_string()).collect();
        assert_eq!(got, ["001", "110", "111"]);
    }

    #[test]
    fn lp_route_agrees_with_sweep_on_worked_example() {
        let x = exdata();
        let lp = lp_search(&x).unwrap();
        let sweep = sweep_2d(&x);
        assert_eq!(
            lp.keys().collect::<Vec<_>>(),
            sweep.keys().collect::<Vec<_>>()
        );
    }

    #[test]
    fn scalar_data_has_one_pattern() {
        let x = DataMatrix::from_samples(&[vec![1.0]]).unwrap();
        let report = enumerate_exact(&x).unwrap();
        assert_eq!(report.method, EnumerationMethod::ExactLp);
        assert_eq!(report.patterns.len(), 1);
        assert_eq!(report.patterns.get(0), &bits("1"));
    }

    #[test]
    fn anti_parallel_boundary_pattern_is_found() {
        // w = 0 is the only direction activating both samples
        let x = DataMatrix::from_samples(&[vec![1.0], vec![-1.0]]).unwrap();
        let got: Vec<String> = enumerate_exact(&x)
            .unwrap()
            .patterns
            .iter()
            .map(|p| p.to_string())
            .collect();
        assert_eq!(got, ["01", "10", "11"]);
    }

    #[test]
    fn too_large_for_exact() {
        let samples: Vec<Vec<f64>> = (0..17).map(|i| vec![i as f64, 1.0, -1.0]).collect();
        let x = DataMatrix::from_samples(&samples).unwrap();
        assert!(matches!(enumerate_exact(&x), Err(Error::ScaleExceeded(_))));
    }

    #[test]
    fn chamber_constraints_examples() {
        let x = exdata();
        let m = chamber_constraints(&x, &bits("110")).unwrap();
        assert_eq!(
            m,
            DMatrix::from_row_slice(3, 2, &[2.0, 2.0, 3.0, 3.0, -1.0, -0.0])
        );
        let ones = chamber_constraints(&x, &bits("111")).unwrap();
        assert_eq!(ones, x.matrix().transpose());
        let h = bits("010");
        let sum = chamber_constraints(&x, &h).unwrap()
            + chamber_constraints(&x, &h.complement()).unwrap();
        assert!(sum.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sampling_edge_cases() {
        let x = exdata();
        let empty = sample_patterns(&x, 0, 3).unwrap();
        assert!(empty.patterns.is_empty());
        assert_eq!(empty.seed, Some(3));
        let small = sample_patterns(&x, 20, 9).unwrap();
        let large = sample_patterns(&x, 200, 9).unwrap();
        assert!(small.patterns.is_subset_of(&large.patterns));
        assert_eq!(
            sample_patterns(&x, 200, 9).unwrap().patterns,
            large.patterns
        );
    }

    #[test]
    fn zonotope_vertices() {
        let eye = DataMatrix::new(DMatrix::identity(2, 2)).unwrap();
        let v = is_zonotope_vertex(&eye, &bits("11")).unwrap();
        assert!(v.is_vertex);
        let w = v.witness.unwrap();
        assert!((w[0] - 1.0).abs() < 1e-12 && (w[1] - 1.0).abs() < 1e-12);

        let x = exdata();
        assert!(!is_zonotope_vertex(&x, &bits("101")).unwrap().is_vertex);
        let check = is_zonotope_vertex(&x, &bits("110")).unwrap();
        assert!(check.is_vertex);
        assert_eq!(
            pattern_of(&x, check.witness.unwrap().as_slice()).unwrap(),
            bits("110")
        );
    }

    #[test]
    fn zonotope_support_matches_vertex() {
        let x = exdata();
        let z = Zonotope::new(&x);
        let w = DVector::from_vec(vec![-1.0, 2.0]);
        let h = pattern_of(&x, w.as_slice()).unwrap();
        assert!((z.support(&w) - w.dot(&z.point(&h))).abs() < 1e-12);
        assert_eq!(z.generator_count(), 3);
    }

    #[test]
    fn bound_special_cases() {
        assert_eq!(pattern_count_bound(5, 0), 1.0);
        assert_eq!(pattern_count_bound(1, 1), 2.0);
        let b = pattern_count_bound(3, 2);
        assert!((b - 4.0 * E * E).abs() < 1e-12);
    }
}
