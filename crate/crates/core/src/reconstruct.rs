//! Networks from group-Lasso solutions: each nonzero `u_g` gives a neuron
//! `w = u_g / sqrt(||u_g||)`, `alpha = sqrt(||u_g||)`, and each nonzero `v_g`
//! the same with `alpha` negated.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::model::{Provenance, RegularizationConvention, TwoLayerNet};
use crate::solver::{GroupLassoProblem, GroupLassoSolution};

/// Which group variable a neuron came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeuronSource {
    pub group: usize,
    /// `true` for `u_g` (positive output weight), `false` for `v_g`.
    pub positive: bool,
}

#[derive(Debug, Clone)]
pub struct ReconstructionReport {
    pub net: TwoLayerNet,
    pub convex_objective: f64,
    pub nonconvex_objective: f64,
    pub discrepancy: f64,
    pub width: usize,
    pub sources: Vec<NeuronSource>,
    /// The source solution met its gap tolerance.
    pub certified: bool,
}

pub fn reconstruct_net(
    sol: &GroupLassoSolution,
    problem: &GroupLassoProblem,
    conv: &RegularizationConvention,
) -> Result<ReconstructionReport> {
    let d = problem.d();
    let mut columns: Vec<DVector<f64>> = Vec::new();
    let mut alpha = Vec::new();
    let mut sources = Vec::new();
    for g in 0..sol.group_count() {
        for (z, positive) in [(&sol.u[g], true), (&sol.v[g], false)] {
            let norm = z.norm();
            if norm == 0.0 {
                continue;
            }
            let s = norm.sqrt();
            columns.push(z / s);
            alpha.push(if positive { s } else { -s });
            sources.push(NeuronSource { group: g, positive });
        }
    }
    let weights = if columns.is_empty() {
        DMatrix::zeros(d, 0)
    } else {
        DMatrix::from_columns(&columns)
    };
    let net = TwoLayerNet::new(weights, None, DVector::from_vec(alpha))?.with_meta(Provenance {
        method: "convex".into(),
        beta: problem.beta(),
        seed: None,
        pattern_count: Some(problem.group_count()),
        duality_gap: Some(sol.gap),
        bias_lifted: false,
    });
    let nonconvex_objective = net.objective(problem.x(), problem.y(), conv)?;
    Ok(ReconstructionReport {
        width: net.width(),
        convex_objective: sol.objective,
        discrepancy: (sol.objective - nonconvex_objective).abs(),
        nonconvex_objective,
        net,
        sources,
        certified: sol.certified,
    })
}

/// Every neuron lies in its source chamber; samples it activates strictly
/// (beyond `tol` relative to `||x_i|| ||w||`) are active in the source
/// pattern, and the realized pattern equals the source pattern when no
/// sample is within `tol` of the neuron's hyperplane.
pub fn verify_chamber_consistency(
    report: &ReconstructionReport,
    problem: &GroupLassoProblem,
    tol: f64,
) -> bool {
    let x = problem.x();
    report.sources.iter().enumerate().all(|(j, src)| {
        let w = report.net.weights().column(j).into_owned();
        let wn = w.norm();
        let cone = problem.cone(src.group);
        if !cone.contains(&w, tol * wn.max(1.0)) {
            return false;
        }
        let h = problem.patterns().get(src.group);
        let mut interior = true;
        for i in 0..x.n() {
            let xi = x.sample(i);
            let t = xi.dot(&w);
            let scale = tol * xi.norm() * wn;
            if t > scale && !h.get(i) {
                return false;
            }
            if t.abs() <= scale {
                interior = false;
            }
        }
        if interior {
            (0..x.n()).all(|i| (x.sample(i).dot(&w) >= 0.0) == h.get(i))
        } else {
            true
        }
    })
}
