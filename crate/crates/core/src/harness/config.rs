use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::diagnostics::IntegrationConfig;
use crate::error::{Error, Result};
use crate::gaussian_flows::{GaussianMoments, HessianMode, MomentFlowName, QuadratureScheme};
use crate::particle_flows::{KernelSpec, ParticleFlow};
use crate::targets::TargetModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    Gaussian { lambda: f64 },
    Logconcave { lambda: f64 },
    Rosenbrock { lambda: f64 },
    PolynomialEven {
        #[serde(rename = "K")]
        k: usize,
    },
}

impl TargetSpec {
    pub fn build(&self) -> Result<TargetModel> {
        match *self {
            TargetSpec::Gaussian { lambda } => TargetModel::gaussian_benchmark(lambda),
            TargetSpec::Logconcave { lambda } => TargetModel::logconcave(lambda),
            TargetSpec::Rosenbrock { lambda } => TargetModel::rosenbrock(lambda),
            TargetSpec::PolynomialEven { k } => TargetModel::counterexample(k),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TargetSpec::Gaussian { .. } => "gaussian",
            TargetSpec::Logconcave { .. } => "logconcave",
            TargetSpec::Rosenbrock { .. } => "rosenbrock",
            TargetSpec::PolynomialEven { .. } => "polynomial_even",
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        match *self {
            TargetSpec::Gaussian { lambda }
            | TargetSpec::Logconcave { lambda }
            | TargetSpec::Rosenbrock { lambda } => Some(lambda),
            TargetSpec::PolynomialEven { .. } => None,
        }
    }

    /// Benchmark initial distribution.
    pub fn initial(&self) -> GaussianMoments {
        let (mean, var): (Vec<f64>, Vec<f64>) = match self {
            TargetSpec::Gaussian { .. } => (vec![10.0, 10.0], vec![0.5, 2.0]),
            TargetSpec::Logconcave { .. } => (vec![10.0, 10.0], vec![4.0, 4.0]),
            TargetSpec::Rosenbrock { .. } => (vec![0.0, 0.0], vec![4.0, 4.0]),
            TargetSpec::PolynomialEven { .. } => (vec![0.0], vec![2.0]),
        };
        GaussianMoments::from_parts(
            DVector::from_vec(mean),
            DMatrix::from_diagonal(&DVector::from_vec(var)),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FlowSpec {
    Particle {
        flow: ParticleFlow,
        particles: usize,
        dt: f64,
        #[serde(default)]
        kernel: Option<KernelSpec>,
    },
    Gaussian {
        flow: MomentFlowName,
        dt: f64,
        #[serde(default)]
        quadrature: Option<QuadratureScheme>,
        #[serde(default)]
        hessian_mode: Option<HessianMode>,
    },
}

impl FlowSpec {
    pub fn name(&self) -> &'static str {
        match self {
            FlowSpec::Particle { flow, .. } => flow.as_str(),
            FlowSpec::Gaussian { flow, .. } => flow.as_str(),
        }
    }

    pub fn dt(&self) -> f64 {
        match *self {
            FlowSpec::Particle { dt, .. } | FlowSpec::Gaussian { dt, .. } => dt,
        }
    }

    /// Label used in CSV rows; Gaussian moment flows get a `gaussian_` prefix.
    pub fn label(&self) -> String {
        match self {
            FlowSpec::Particle { flow, .. } => flow.as_str().to_string(),
            FlowSpec::Gaussian { flow, .. } => format!("gaussian_{}", flow.as_str()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub dynamics: u64,
    pub probe: u64,
}

fn default_report_interval() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub target: TargetSpec,
    pub flow: FlowSpec,
    pub horizon: f64,
    #[serde(default = "default_report_interval")]
    pub report_interval: f64,
    pub seeds: Seeds,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub integration: Option<IntegrationConfig>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(e).context(format!("reading {}", path.display())))?;
        Self::from_json(&text).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if let Some(l) = self.target.lambda() {
            if !(l > 0.0 && l.is_finite()) {
                return bad(format!("lambda must be positive, got {l}"));
            }
        }
        if let TargetSpec::PolynomialEven { k } = self.target {
            if k == 0 {
                return bad("K must be at least 1".into());
            }
        }
        let dt = self.flow.dt();
        if !(dt > 0.0 && dt.is_finite()) {
            return bad(format!("dt must be positive, got {dt}"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if !(self.report_interval > 0.0) {
            return bad(format!("report interval must be positive, got {}", self.report_interval));
        }
        let ratio = self.report_interval / dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
            return bad(format!(
                "dt = {dt} does not divide the report interval {}",
                self.report_interval
            ));
        }
        if let FlowSpec::Particle { particles, .. } = self.flow {
            if particles == 0 {
                return bad("particle count must be positive".into());
            }
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        (self.horizon / self.flow.dt()).round() as usize
    }

    pub fn report_every(&self) -> usize {
        (self.report_interval / self.flow.dt()).round() as usize
    }

    pub fn file_stem(&self) -> String {
        match self.target.lambda() {
            Some(l) => format!("{}_{}_lambda{}", self.flow.label(), self.target.name(), l),
            None => format!("{}_{}", self.flow.label(), self.target.name()),
        }
    }

    pub fn output_path(&self) -> PathBuf {
        self.output_dir.join(format!("{}.csv", self.file_stem()))
    }
}

/// A base experiment plus JSON merge patches, one per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: Value,
    #[serde(default)]
    pub overrides: Vec<Value>,
}

/// Recursive merge: objects merge key by key, anything else replaces.
pub fn merge_json(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge_json(b.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p.clone(),
    }
}

impl SweepConfig {
    /// Accepts either a sweep file or a plain experiment file (no overrides).
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if value.get("base").is_some() {
            serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))
        } else {
            Ok(Self {
                base: value,
                overrides: Vec::new(),
            })
        }
    }

    pub fn with_lambdas(mut self, lambdas: &[f64]) -> Self {
        self.overrides = lambdas
            .iter()
            .map(|l| serde_json::json!({ "target": { "lambda": l } }))
            .collect();
        self
    }

    /// Expands into validated experiments; no overrides means the base alone.
    pub fn expand(&self) -> Result<Vec<ExperimentConfig>> {
        let patches: Vec<Value> = if self.overrides.is_empty() {
            vec![Value::Object(Default::default())]
        } else {
            self.overrides.clone()
        };
        patches
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut v = self.base.clone();
                merge_json(&mut v, p);
                let cfg: ExperimentConfig = serde_json::from_value(v)
                    .map_err(|e| Error::Config(format!("override {i}: {e}")))?;
                cfg.validate().map_err(|e| e.context(format!("override {i}")))?;
                Ok(cfg)
            })
            .collect()
    }
}
