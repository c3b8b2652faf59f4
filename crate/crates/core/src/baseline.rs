//! Non-convex reference training: gradient descent / SGD with weight decay on
//! `1/2 ||f(X) - y||^2 + lambda sum_j (||w_j||^2 + alpha_j^2)`, plus a
//! brute-force oracle for tiny instances.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::arrangements::enumerate_exact;
use crate::error::{Error, Result};
use crate::model::{
    Activation, DataMatrix, Labels, Provenance, RegularizationConvention, TwoLayerNet, WeightNorm,
};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Step size on the per-sample average `objective / n`.
    pub learning_rate: f64,
    pub epochs: usize,
    /// `None` is full batch.
    pub batch_size: Option<usize>,
    pub restarts: usize,
    /// Half-width of the uniform initialization; `None` uses `1/sqrt(d m)`.
    pub init_scale: Option<f64>,
    pub seed: u64,
    pub weight_decay: f64,
    pub momentum: Option<f64>,
    /// Train an explicit, unregularized bias per neuron.
    pub bias: bool,
    pub weight_norm: WeightNorm,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 1000,
            batch_size: None,
            restarts: 1,
            init_scale: None,
            seed: 0,
            weight_decay: 0.0,
            momentum: None,
            bias: false,
            weight_norm: WeightNorm::L2,
        }
    }
}

impl TrainConfig {
    pub fn from_convention(conv: &RegularizationConvention) -> Self {
        Self {
            weight_decay: conv.nonconvex_coeff,
            weight_norm: conv.weight_norm,
            ..Self::default()
        }
    }

    fn convention(&self) -> RegularizationConvention {
        RegularizationConvention {
            lasso_beta: 2.0 * self.weight_decay,
            nonconvex_coeff: self.weight_decay,
            weight_norm: self.weight_norm,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub net: TwoLayerNet,
    pub objective: f64,
    /// Objective after each epoch of the best restart, starting with the
    /// initialization.
    pub trace: Vec<f64>,
    /// `None` for diverged restarts.
    pub restart_objectives: Vec<Option<f64>>,
    pub diverged: Vec<usize>,
}

/// Dense parameters of one network during training.
#[derive(Debug, Clone)]
struct Params {
    w: DMatrix<f64>,
    b: Option<DVector<f64>>,
    alpha: DVector<f64>,
}

impl Params {
    fn axpy(&mut self, c: f64, other: &Params) {
        self.w += &other.w * c;
        self.alpha += &other.alpha * c;
        if let (Some(b), Some(ob)) = (&mut self.b, &other.b) {
            *b += ob * c;
        }
    }

    fn scale(&mut self, c: f64) {
        self.w *= c;
        self.alpha *= c;
        if let Some(b) = &mut self.b {
            *b *= c;
        }
    }

    fn zeros_like(&self) -> Params {
        Params {
            w: DMatrix::zeros(self.w.nrows(), self.w.ncols()),
            b: self.b.as_ref().map(|b| DVector::zeros(b.len())),
            alpha: DVector::zeros(self.alpha.len()),
        }
    }

    fn finite(&self) -> bool {
        self.w.iter().chain(self.alpha.iter()).all(|v| v.is_finite())
            && self.b.as_ref().is_none_or(|b| b.iter().all(|v| v.is_finite()))
    }

    fn into_net(self, activation: Activation) -> Result<TwoLayerNet> {
        Ok(TwoLayerNet::new(self.w, self.b, self.alpha)?.with_activation(activation))
    }
}

fn penalty_grad(w: &DMatrix<f64>, norm: WeightNorm) -> DMatrix<f64> {
    match norm {
        WeightNorm::L2 => w * 2.0,
        WeightNorm::L1 => {
            let mut g = w.map(f64::signum);
            for (j, mut col) in g.column_iter_mut().enumerate() {
                let l1 = w.column(j).lp_norm(1);
                col *= 2.0 * l1;
            }
            g
        }
    }
}

/// Loss-part gradient over the samples in `idx`, plus the loss value.
fn loss_grad(
    p: &Params,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    idx: &[usize],
    act: Activation,
) -> (Params, f64) {
    let d = x.nrows();
    let m = p.w.ncols();
    let xb = DMatrix::from_fn(d, idx.len(), |r, c| x[(r, idx[c])]);
    let mut pre = p.w.tr_mul(&xb);
    if let Some(b) = &p.b {
        for mut col in pre.column_iter_mut() {
            col += b;
        }
    }
    let a = pre.map(|t| act.apply(t));
    let f = a.tr_mul(&p.alpha);
    let r = DVector::from_fn(idx.len(), |i, _| f[i] - y[idx[i]]);
    let d_alpha = &a * &r;
    let mut gmat = pre.map(|t| act.derivative(t));
    for j in 0..m {
        for i in 0..idx.len() {
            gmat[(j, i)] *= p.alpha[j] * r[i];
        }
    }
    let d_w = &xb * gmat.transpose();
    let d_b = p.b.as_ref().map(|_| gmat.column_sum());
    (
        Params {
            w: d_w,
            b: d_b,
            alpha: d_alpha,
        },
        0.5 * r.norm_squared(),
    )
}

fn full_objective(
    p: &Params,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    all: &[usize],
    act: Activation,
    lambda: f64,
    norm: WeightNorm,
) -> f64 {
    let (_, loss) = loss_grad(p, x, y, all, act);
    let pen: f64 = (0..p.w.ncols())
        .map(|j| {
            let wn = norm.of(p.w.column(j).as_slice());
            wn * wn + p.alpha[j] * p.alpha[j]
        })
        .sum();
    loss + lambda * pen
}

#[allow(clippy::too_many_arguments)]
fn full_gradient(
    p: &Params,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    idx: &[usize],
    act: Activation,
    lambda_scaled: f64,
    norm: WeightNorm,
    loss_scale: f64,
) -> Params {
    let (mut g, _) = loss_grad(p, x, y, idx, act);
    g.scale(loss_scale);
    g.w += penalty_grad(&p.w, norm) * lambda_scaled;
    g.alpha += &p.alpha * (2.0 * lambda_scaled);
    g
}

fn init_params(d: usize, m: usize, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Params {
    let s = cfg.init_scale.unwrap_or(1.0 / ((d * m) as f64).sqrt());
    let w = DMatrix::from_fn(d, m, |_, _| rng.random_range(-s..=s));
    let alpha = DVector::from_fn(m, |_, _| rng.random_range(-s..=s));
    let b = cfg.bias.then(|| DVector::zeros(m));
    Params { w, b, alpha }
}

struct RestartResult {
    params: Params,
    objective: f64,
    trace: Vec<f64>,
}

fn run_restart(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    m: usize,
    cfg: &TrainConfig,
    act: Activation,
    restart: usize,
) -> Option<RestartResult> {
    let (d, n) = (x.nrows(), x.ncols());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(restart as u64);
    let mut p = init_params(d, m, cfg, &mut rng);
    let all: Vec<usize> = (0..n).collect();
    let lambda = cfg.weight_decay;
    let objective = |p: &Params| full_objective(p, x, y, &all, act, lambda, cfg.weight_norm);
    let mut current = objective(&p);
    let mut trace = vec![current];
    let mut velocity = p.zeros_like();
    let mut lr = cfg.learning_rate;
    let batch = cfg.batch_size.unwrap_or(n).clamp(1, n);
    let monotone = batch == n && cfg.momentum.is_none();
    let mut order = all.clone();

    for _ in 0..cfg.epochs {
        if monotone {
            // full-batch descent with step halving keeps the trace monotone
            let g = full_gradient(&p, x, y, &all, act, lambda / n as f64, cfg.weight_norm, 1.0 / n as f64);
            loop {
                let mut cand = p.clone();
                cand.axpy(-lr, &g);
                let val = objective(&cand);
                if val.is_finite() && val <= current {
                    p = cand;
                    current = val;
                    break;
                }
                lr *= 0.5;
                if lr < 1e-300 {
                    break;
                }
            }
        } else {
            order.shuffle(&mut rng);
            for chunk in order.chunks(batch) {
                let g = full_gradient(
                    &p,
                    x,
                    y,
                    chunk,
                    act,
                    lambda / n as f64,
                    cfg.weight_norm,
                    1.0 / chunk.len() as f64,
                );
                match cfg.momentum {
                    Some(mu) => {
                        velocity.scale(mu);
                        velocity.axpy(1.0, &g);
                        p.axpy(-lr, &velocity);
                    }
                    None => p.axpy(-lr, &g),
                }
            }
            current = objective(&p);
        }
        if !current.is_finite() || !p.finite() {
            return None;
        }
        trace.push(current);
    }
    Some(RestartResult {
        params: p,
        objective: current,
        trace,
    })
}

/// Best-of-restarts training. Restarts run in parallel, each on its own
/// random stream; ties go to the lowest restart index.
pub fn train_sgd(
    x: &DataMatrix,
    y: &Labels,
    m: usize,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    train_with_activation(x, y, m, cfg, Activation::Relu)
}

pub fn train_with_activation(
    x: &DataMatrix,
    y: &Labels,
    m: usize,
    cfg: &TrainConfig,
    activation: Activation,
) -> Result<TrainReport> {
    y.check_paired(x)?;
    if m == 0 {
        return Err(Error::invalid("width must be at least 1"));
    }
    if cfg.restarts == 0 {
        return Err(Error::invalid("restarts must be at least 1"));
    }
    if !(cfg.learning_rate > 0.0) {
        return Err(Error::invalid("learning rate must be positive"));
    }
    if cfg.batch_size.is_some_and(|b| b == 0 || b > x.n()) {
        return Err(Error::invalid(format!(
            "batch size must be in 1..={}",
            x.n()
        )));
    }
    if !(cfg.weight_decay >= 0.0) {
        return Err(Error::invalid("weight decay must be nonnegative"));
    }
    let results: Vec<Option<RestartResult>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| run_restart(x.matrix(), y.vector(), m, cfg, activation, r))
        .collect();
    let restart_objectives: Vec<Option<f64>> =
        results.iter().map(|r| r.as_ref().map(|r| r.objective)).collect();
    let diverged: Vec<usize> = (0..results.len()).filter(|&r| results[r].is_none()).collect();
    let best = results
        .into_iter()
        .flatten()
        .reduce(|a, b| if b.objective < a.objective { b } else { a })
        .ok_or_else(|| Error::invalid("every restart diverged"))?;
    let net = best.params.into_net(activation)?.with_meta(Provenance {
        method: "sgd".into(),
        beta: 2.0 * cfg.weight_decay,
        seed: Some(cfg.seed),
        pattern_count: None,
        duality_gap: None,
        bias_lifted: false,
    });
    let objective = net.objective(x, y, &cfg.convention())?;
    Ok(TrainReport {
        net,
        objective,
        trace: best.trace,
        restart_objectives,
        diverged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub convex_iterations: usize,
    pub restarts: usize,
    pub gd_epochs: usize,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            convex_iterations: 1_000_000,
            restarts: 1000,
            gd_epochs: 2000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleReport {
    /// Objective reached on the convex program by the independent method.
    pub convex_value: f64,
    /// Best non-convex objective over all gradient-descent restarts.
    pub gd_value: f64,
    pub value: f64,
}

/// Independent estimate of the training optimum on tiny inputs (`n <= 6`,
/// `d <= 2`): plain proximal gradient on the convex program with
/// face-enumeration projections, and many-restart gradient descent on the
/// network. Both values are attained by feasible points, so each is an upper
/// bound on the optimum.
pub fn brute_force_oracle(
    x: &DataMatrix,
    y: &Labels,
    conv: &RegularizationConvention,
    cfg: &OracleConfig,
) -> Result<OracleReport> {
    y.check_paired(x)?;
    if x.n() > 6 || x.d() > 2 {
        return Err(Error::ScaleExceeded(format!(
            "brute-force oracle needs n <= 6 and d <= 2, got n = {}, d = {}",
            x.n(),
            x.d()
        )));
    }
    let beta = conv.lasso_beta;
    if !(beta > 0.0) {
        return Err(Error::invalid("beta must be positive"));
    }
    let convex_value = oracle_convex(x, y, beta, cfg.convex_iterations)?;
    let gd_cfg = TrainConfig {
        learning_rate: 1.0,
        epochs: cfg.gd_epochs,
        batch_size: None,
        restarts: cfg.restarts,
        init_scale: Some(1.0),
        seed: cfg.seed,
        weight_decay: conv.nonconvex_coeff,
        momentum: None,
        bias: false,
        weight_norm: conv.weight_norm,
    };
    let gd_value = train_sgd(x, y, x.n() + 1, &gd_cfg)?.objective;
    Ok(OracleReport {
        convex_value,
        gd_value,
        value: convex_value.min(gd_value),
    })
}

fn oracle_convex(x: &DataMatrix, y: &Labels, beta: f64, iterations: usize) -> Result<f64> {
    use crate::cones::ChamberCone;
    let pats = enumerate_exact(x)?.patterns;
    let d = x.d();
    let xt = x.matrix().transpose();
    let blocks: Vec<DMatrix<f64>> = pats
        .iter()
        .map(|h| DMatrix::from_fn(x.n(), d, |i, k| if h.get(i) { xt[(i, k)] } else { 0.0 }))
        .collect();
    let cones: Vec<ChamberCone> = pats
        .iter()
        .map(|h| ChamberCone::new(x, h.clone()))
        .collect::<Result<_>>()?;
    // Lipschitz constant of the stacked [A, -A] operator
    let gram = blocks.iter().fold(DMatrix::zeros(x.n(), x.n()), |acc, a| acc + a * a.transpose());
    let lip = 2.0 * gram.symmetric_eigenvalues().max();
    let yv = y.vector();
    let objective = |u: &[DVector<f64>], v: &[DVector<f64>]| {
        let mut fit = DVector::zeros(x.n());
        for (g, a) in blocks.iter().enumerate() {
            fit += a * (&u[g] - &v[g]);
        }
        0.5 * (fit - yv).norm_squared()
            + beta * u.iter().chain(v).map(|z| z.norm()).sum::<f64>()
    };
    let zero = vec![DVector::zeros(d); blocks.len()];
    let (mut u, mut v) = (zero.clone(), zero);
    let mut best = objective(&u, &v);
    if lip <= 0.0 {
        return Ok(best);
    }
    let step = 1.0 / lip;
    let mut checkpoint = best;
    for it in 1..=iterations {
        let mut fit = DVector::zeros(x.n());
        for (g, a) in blocks.iter().enumerate() {
            fit += a * (&u[g] - &v[g]);
        }
        let r = fit - yv;
        for g in 0..blocks.len() {
            let grad = blocks[g].tr_mul(&r);
            for (z, sign) in [(&mut u[g], 1.0), (&mut v[g], -1.0)] {
                let c = &*z - &grad * (sign * step);
                let p = cones[g].project_by_faces(&c)?;
                let pn = p.norm();
                *z = if pn > step * beta {
                    p * (1.0 - step * beta / pn)
                } else {
                    DVector::zeros(d)
                };
            }
        }
        best = best.min(objective(&u, &v));
        if it % 1000 == 0 {
            if checkpoint - best <= 1e-15 * (1.0 + best.abs()) {
                break;
            }
            checkpoint = best;
        }
    }
    Ok(best)
}
