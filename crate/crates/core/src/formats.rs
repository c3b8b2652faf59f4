//! JSON documents: pattern sets, group-Lasso solutions and model files.

use std::path::Path;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::model::{Activation, ActivationPattern, PatternSet, Provenance, TwoLayerNet};
use crate::solver::GroupLassoSolution;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSetFile {
    pub n: usize,
    pub patterns: Vec<String>,
}

impl PatternSetFile {
    pub fn from_set(set: &PatternSet) -> Self {
        Self {
            n: set.n(),
            patterns: set.iter().map(ToString::to_string).collect(),
        }
    }

    pub fn to_set(&self) -> Result<PatternSet> {
        let pats = self
            .patterns
            .iter()
            .map(|s| ActivationPattern::parse(s))
            .collect::<Result<Vec<_>>>()?;
        PatternSet::new(self.n, pats)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEntry {
    pub pattern: String,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Nonzero groups only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub beta: f64,
    pub objective: f64,
    pub gap: f64,
    pub groups: Vec<GroupEntry>,
}

impl SolutionFile {
    pub fn from_solution(sol: &GroupLassoSolution, patterns: &PatternSet) -> Self {
        let groups = (0..sol.group_count())
            .filter(|&g| sol.u[g].iter().chain(sol.v[g].iter()).any(|&c| c != 0.0))
            .map(|g| GroupEntry {
                pattern: patterns.get(g).to_string(),
                u: sol.u[g].iter().copied().collect(),
                v: sol.v[g].iter().copied().collect(),
            })
            .collect();
        Self {
            beta: sol.beta,
            objective: sol.objective,
            gap: sol.gap,
            groups,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceFile {
    pub method: String,
    pub beta: f64,
    pub lambda: f64,
    pub seed: Option<u64>,
    pub pattern_count: Option<usize>,
    pub duality_gap: Option<f64>,
    pub created_at: String,
    /// Inputs were lifted with a trailing one; `W` has `d + 1` rows and the
    /// last is a regularized bias.
    #[serde(default)]
    pub bias_lifted: bool,
}

fn default_activation() -> String {
    Activation::Relu.name().to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    /// Input features of the data the model consumes.
    pub d: usize,
    pub m: usize,
    pub has_bias: bool,
    /// One array per neuron.
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
    pub bias: Option<Vec<f64>>,
    pub alpha: Vec<f64>,
    #[serde(default = "default_activation")]
    pub activation: String,
    #[serde(default)]
    pub offset: f64,
    pub provenance: ProvenanceFile,
}

/// RFC 3339 time, honoring `SOURCE_DATE_EPOCH` for reproducible output.
pub fn timestamp_now() -> String {
    let t = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.parse::<u64>().ok())
        .map(|s| UNIX_EPOCH + Duration::from_secs(s))
        .unwrap_or_else(SystemTime::now);
    humantime::format_rfc3339_seconds(t).to_string()
}

impl ModelFile {
    pub fn from_net(net: &TwoLayerNet, created_at: String) -> Self {
        let rows = net.weights().nrows();
        let lifted = net.meta.bias_lifted;
        Self {
            schema_version: MODEL_SCHEMA_VERSION,
            d: if lifted { rows - 1 } else { rows },
            m: net.width(),
            has_bias: net.bias().is_some() || lifted,
            w: net
                .weights()
                .column_iter()
                .map(|c| c.iter().copied().collect())
                .collect(),
            bias: net.bias().map(|b| b.iter().copied().collect()),
            alpha: net.alpha().iter().copied().collect(),
            activation: net.activation.name().to_string(),
            offset: net.offset,
            provenance: ProvenanceFile {
                method: net.meta.method.clone(),
                beta: net.meta.beta,
                lambda: net.meta.beta / 2.0,
                seed: net.meta.seed,
                pattern_count: net.meta.pattern_count,
                duality_gap: net.meta.duality_gap,
                created_at,
                bias_lifted: lifted,
            },
        }
    }

    pub fn to_net(&self) -> Result<TwoLayerNet> {
        if self.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model schema version {}",
                self.schema_version
            )));
        }
        let rows = self.d + usize::from(self.provenance.bias_lifted);
        if self.w.len() != self.m || self.w.iter().any(|c| c.len() != rows) {
            return Err(Error::dims(format!(
                "W must hold {} arrays of length {rows}",
                self.m
            )));
        }
        if self.provenance.bias_lifted && self.bias.is_some() {
            return Err(Error::invalid("a lifted model cannot also carry explicit biases"));
        }
        if self.has_bias != (self.bias.is_some() || self.provenance.bias_lifted) {
            return Err(Error::invalid("has_bias disagrees with the stored biases"));
        }
        let weights = if self.m == 0 {
            DMatrix::zeros(rows, 0)
        } else {
            DMatrix::from_fn(rows, self.m, |r, c| self.w[c][r])
        };
        let bias = self.bias.as_ref().map(|b| DVector::from_vec(b.clone()));
        let mut net = TwoLayerNet::new(weights, bias, DVector::from_vec(self.alpha.clone()))?
            .with_activation(self.activation.parse()?)
            .with_meta(Provenance {
                method: self.provenance.method.clone(),
                beta: self.provenance.beta,
                seed: self.provenance.seed,
                pattern_count: self.provenance.pattern_count,
                duality_gap: self.provenance.duality_gap,
                bias_lifted: self.provenance.bias_lifted,
            });
        if !self.offset.is_finite() {
            return Err(Error::invalid("offset must be finite"));
        }
        net.offset = self.offset;
        Ok(net)
    }
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, to_json_pretty(value)?.as_bytes())
}

pub fn from_json_str<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    Ok(serde_json::from_str(text)?)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    from_json_str(&std::fs::read_to_string(path)?)
}

pub fn save_model(path: &Path, net: &TwoLayerNet) -> Result<()> {
    write_json(path, &ModelFile::from_net(net, timestamp_now()))
}

pub fn load_model(path: &Path) -> Result<TwoLayerNet> {
    read_json::<ModelFile>(path)?.to_net()
}
