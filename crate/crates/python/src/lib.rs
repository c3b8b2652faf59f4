//! Python bindings. Data matrices are passed as lists of samples (rows),
//! labels as flat lists.

use cvxnn::arrangements::{enumerate_exact, sample_patterns, ArrangementReport};
use cvxnn::baseline::{train_sgd as train_sgd_core, TrainConfig};
use cvxnn::formats::{from_json_str, timestamp_now, to_json_pretty, ModelFile};
use cvxnn::io::make_autoregressive;
use cvxnn::reconstruct::reconstruct_net;
use cvxnn::solver::{GroupLassoProblem, GroupLassoSolution, SolveOptions, DEFAULT_MAX_ITER};
use cvxnn::synth::{synthetic_ecg as ecg, EcgConfig};
use cvxnn::univariate::solve_univariate;
use cvxnn::{
    Activation, ActivationPattern, DataMatrix, Labels, PatternSet, RegularizationConvention,
    TwoLayerNet,
};
use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn py_err(e: cvxnn::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn data(samples: &[Vec<f64>]) -> PyResult<DataMatrix> {
    DataMatrix::from_samples(samples).map_err(py_err)
}

fn labels(y: Vec<f64>) -> PyResult<Labels> {
    Labels::new(y).map_err(py_err)
}

fn columns(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().copied().collect()).collect()
}

fn arrangement(x: &DataMatrix, samples: Option<usize>, seed: u64) -> PyResult<ArrangementReport> {
    match samples {
        Some(count) => sample_patterns(x, count, seed),
        None => enumerate_exact(x),
    }
    .map_err(py_err)
}

/// Activation patterns of `x` as 0/1 strings, exact unless `samples` is given.
#[pyfunction]
#[pyo3(signature = (x, samples=None, seed=0))]
fn activation_patterns(x: Vec<Vec<f64>>, samples: Option<usize>, seed: u64) -> PyResult<Vec<String>> {
    let rep = arrangement(&data(&x)?, samples, seed)?;
    Ok(rep.patterns.iter().map(|p| p.to_string()).collect())
}

/// A two-layer network `f(x) = sum_j alpha_j sigma(w_j . x + b_j) + offset`.
#[pyclass(name = "Network", module = "cvxnn")]
#[derive(Clone)]
struct PyNetwork {
    net: TwoLayerNet,
}

#[pymethods]
impl PyNetwork {
    #[getter]
    fn width(&self) -> usize {
        self.net.width()
    }

    /// Hidden weights, one list per neuron.
    #[getter]
    fn weights(&self) -> Vec<Vec<f64>> {
        columns(self.net.weights())
    }

    #[getter]
    fn bias(&self) -> Option<Vec<f64>> {
        self.net.bias().map(|b| b.iter().copied().collect())
    }

    #[getter]
    fn alpha(&self) -> Vec<f64> {
        self.net.alpha().iter().copied().collect()
    }

    #[getter]
    fn offset(&self) -> f64 {
        self.net.offset
    }

    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        Ok(self.net.predict(&data(&x)?).map_err(py_err)?.as_slice().to_vec())
    }

    /// Squared loss plus `beta / 2` times the weight penalty.
    fn objective(&self, x: Vec<Vec<f64>>, y: Vec<f64>, beta: f64) -> PyResult<f64> {
        let conv = RegularizationConvention::from_beta(beta);
        self.net
            .objective(&data(&x)?, &labels(y)?, &conv)
            .map_err(py_err)
    }

    fn to_json(&self) -> PyResult<String> {
        to_json_pretty(&ModelFile::from_net(&self.net, timestamp_now())).map_err(py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let file: ModelFile = from_json_str(text).map_err(py_err)?;
        Ok(Self {
            net: file.to_net().map_err(py_err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("Network(width={}, activation={})", self.net.width(), self.net.activation.name())
    }
}

#[pyclass(name = "Solution", module = "cvxnn")]
#[derive(Clone)]
struct PySolution {
    sol: GroupLassoSolution,
}

#[pymethods]
impl PySolution {
    #[getter]
    fn beta(&self) -> f64 {
        self.sol.beta
    }

    #[getter]
    fn objective(&self) -> f64 {
        self.sol.objective
    }

    #[getter]
    fn gap(&self) -> f64 {
        self.sol.gap
    }

    #[getter]
    fn certified(&self) -> bool {
        self.sol.certified
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.sol.iterations
    }

    #[getter]
    fn active_groups(&self) -> usize {
        self.sol.active_groups
    }

    #[getter]
    fn u(&self) -> Vec<Vec<f64>> {
        self.sol.u.iter().map(|z| z.iter().copied().collect()).collect()
    }

    #[getter]
    fn v(&self) -> Vec<Vec<f64>> {
        self.sol.v.iter().map(|z| z.iter().copied().collect()).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Solution(objective={}, gap={:e}, active_groups={})",
            self.sol.objective, self.sol.gap, self.sol.active_groups
        )
    }
}

/// The convex program over a fixed set of activation patterns.
#[pyclass(name = "ConvexProblem", module = "cvxnn")]
struct PyProblem {
    problem: GroupLassoProblem,
}

#[pymethods]
impl PyProblem {
    /// Patterns default to the exact arrangement of `x`.
    #[new]
    #[pyo3(signature = (x, y, beta, patterns=None))]
    fn new(x: Vec<Vec<f64>>, y: Vec<f64>, beta: f64, patterns: Option<Vec<String>>) -> PyResult<Self> {
        let x = data(&x)?;
        let patterns = match patterns {
            Some(ps) => {
                let parsed = ps
                    .iter()
                    .map(|s| ActivationPattern::parse(s))
                    .collect::<cvxnn::Result<Vec<_>>>()
                    .map_err(py_err)?;
                PatternSet::new(x.n(), parsed).map_err(py_err)?
            }
            None => enumerate_exact(&x).map_err(py_err)?.patterns,
        };
        let problem = GroupLassoProblem::new(x, labels(y)?, beta, patterns).map_err(py_err)?;
        Ok(Self { problem })
    }

    #[getter]
    fn patterns(&self) -> Vec<String> {
        self.problem.patterns().iter().map(|p| p.to_string()).collect()
    }

    /// Smallest beta at which the zero solution is optimal.
    fn beta_max(&self) -> PyResult<f64> {
        self.problem.beta_max().map_err(py_err)
    }

    #[pyo3(signature = (tol=1e-6, max_iter=DEFAULT_MAX_ITER))]
    fn solve(&self, tol: f64, max_iter: usize) -> PyResult<PySolution> {
        let sol = self
            .problem
            .solve(&SolveOptions { tol, max_iter })
            .map_err(py_err)?;
        Ok(PySolution { sol })
    }

    /// Duality gap of a solution for this problem.
    fn certify(&self, solution: &PySolution) -> PyResult<f64> {
        self.problem.certify(&solution.sol).map_err(py_err)
    }

    /// Network with the same objective as the solution.
    fn network(&self, solution: &PySolution) -> PyResult<PyNetwork> {
        let conv = RegularizationConvention::from_beta(self.problem.beta());
        let rep = reconstruct_net(&solution.sol, &self.problem, &conv).map_err(py_err)?;
        Ok(PyNetwork { net: rep.net })
    }
}

/// Best-of-restarts gradient training with weight decay `beta / 2`; returns
/// the network and its objective.
#[pyfunction]
#[pyo3(signature = (x, y, width, beta, lr=0.01, epochs=1000, batch=None, restarts=1, seed=0, momentum=None))]
#[allow(clippy::too_many_arguments)]
fn train_sgd(
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    width: usize,
    beta: f64,
    lr: f64,
    epochs: usize,
    batch: Option<usize>,
    restarts: usize,
    seed: u64,
    momentum: Option<f64>,
) -> PyResult<(PyNetwork, f64)> {
    let cfg = TrainConfig {
        learning_rate: lr,
        epochs,
        batch_size: batch,
        restarts,
        seed,
        momentum,
        ..TrainConfig::from_convention(&RegularizationConvention::from_beta(beta))
    };
    let rep = train_sgd_core(&data(&x)?, &labels(y)?, width, &cfg).map_err(py_err)?;
    Ok((PyNetwork { net: rep.net }, rep.objective))
}

/// Univariate fit through the Lasso over ramp features at the inputs;
/// returns the network, Lasso objective and duality gap.
#[pyfunction]
#[pyo3(signature = (xs, y, beta, activation="relu", intercept=true, tol=1e-6))]
fn fit_univariate(
    xs: Vec<f64>,
    y: Vec<f64>,
    beta: f64,
    activation: &str,
    intercept: bool,
    tol: f64,
) -> PyResult<(PyNetwork, f64, f64)> {
    let act = match activation {
        "relu" => Activation::Relu,
        "abs" => Activation::Abs,
        other => return Err(PyValueError::new_err(format!("unknown activation `{other}`"))),
    };
    let fit = solve_univariate(&xs, &labels(y)?, beta, act, intercept, &SolveOptions::with_tol(tol))
        .map_err(py_err)?;
    Ok((PyNetwork { net: fit.net }, fit.lasso.objective, fit.lasso.gap))
}

type Split = (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>, Vec<f64>);

/// Lagged windows split chronologically: `(x_train, y_train, x_test, y_test)`.
#[pyfunction]
fn autoregressive(series: Vec<f64>, lags: usize, split: f64) -> PyResult<Split> {
    let sp = make_autoregressive(&series, lags, split).map_err(py_err)?;
    Ok((
        sp.x_train.to_samples(),
        sp.y_train.as_slice().to_vec(),
        sp.x_test.to_samples(),
        sp.y_test.as_slice().to_vec(),
    ))
}

#[pyfunction]
#[pyo3(signature = (len=2400, seed=0, noise=0.01))]
fn synthetic_ecg(len: usize, seed: u64, noise: f64) -> Vec<f64> {
    ecg(&EcgConfig {
        len,
        seed,
        noise,
        ..EcgConfig::default()
    })
}

#[pymodule]
#[pyo3(name = "cvxnn")]
pub fn cvxnn_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetwork>()?;
    m.add_class::<PySolution>()?;
    m.add_class::<PyProblem>()?;
    m.add_function(wrap_pyfunction!(activation_patterns, m)?)?;
    m.add_function(wrap_pyfunction!(train_sgd, m)?)?;
    m.add_function(wrap_pyfunction!(fit_univariate, m)?)?;
    m.add_function(wrap_pyfunction!(autoregressive, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_ecg, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_are_listed_per_neuron() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(columns(&m), vec![vec![1.0, 4.0], vec![2.0, 5.0], vec![3.0, 6.0]]);
    }

    #[test]
    fn ragged_samples_are_rejected() {
        assert!(DataMatrix::from_samples(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        let net = PyNetwork {
            net: TwoLayerNet::zero(2),
        };
        assert_eq!(net.width(), 0);
        assert!(net.alpha().is_empty());
    }
}
