//! Gaussian approximate gradient flows.
//!
//! Each flow is an explicit ODE on the moments `(m, C)` of a Gaussian
//! approximation `N(m, C)`; the expectations of `∇ log ρ_post` and
//! `∇∇ log ρ_post` under the current Gaussian are computed by cubature.

mod analytic;
mod integrate;
mod rhs;
mod spectrum;

pub use analytic::analytic_fisher_rao_gaussian;
pub use integrate::{
    integrate_moment_flow, integrate_moment_flow_with, MomentFlowConfig, MomentTrajectory,
};
pub use rhs::{moment_flow_rhs, BilinearKernel, MomentFlowKind, MomentFlowName, MomentRhs, Preconditioner};
pub use spectrum::{fisher_rao_stationary_1d, jacobian_spectrum_1d, JacobianSpectrum1D};

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::quadrature::gauss_hermite_cached;
use crate::targets::TargetModel;

/// Mean and covariance of a Gaussian `N(m, C)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMoments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianMoments {
    /// Validated constructor: `cov` must be symmetric (to 1e-12, relative) and SPD.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let g = Self::from_parts(mean, cov);
        g.validate()?;
        Ok(g)
    }

    /// Unchecked constructor, e.g. for empirical moments that may be degenerate.
    pub fn from_parts(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        Self { mean, cov }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(self.dim(), self.cov.nrows())?;
        check_dim(self.dim(), self.cov.ncols())?;
        let scale = self.cov.amax().max(1.0);
        if linalg::asymmetry(&self.cov) > 1e-12 * scale {
            return Err(Error::InvalidArgument("covariance is not symmetric".into()));
        }
        linalg::cholesky(&self.cov)?;
        Ok(())
    }

    /// Lower Cholesky factor `L` with `L Lᵀ = C`.
    pub fn cholesky_factor(&self) -> Result<DMatrix<f64>> {
        Ok(linalg::cholesky(&self.cov)?.l())
    }

    /// Moments of the image under `θ ↦ Aθ + b`.
    pub fn affine_image(&self, a: &DMatrix<f64>, b: &DVector<f64>) -> Self {
        Self {
            mean: a * &self.mean + b,
            cov: linalg::symmetrize(&(a * &self.cov * a.transpose())),
        }
    }
}

/// Weighted point set approximating expectations under a Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn expect<F>(&self, mut f: F) -> f64
    where
        F: FnMut(&DVector<f64>) -> f64,
    {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p))
            .sum()
    }
}

/// Unscented (sigma-point) rule with `2N + 1` points.
///
/// Points are `m` and `m ± √(N+κ) L e_i`; weights `κ/(N+κ)` and `1/(2(N+κ))`.
/// Integrates every polynomial of total degree ≤ 3 exactly under `N(m, C)`.
pub fn unscented_rule(g: &GaussianMoments, kappa: f64) -> Result<QuadratureRule> {
    let n = g.dim();
    let spread = n as f64 + kappa;
    if !(spread > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "unscented rule needs N + kappa > 0, got {spread}"
        )));
    }
    let l = g.cholesky_factor()?;
    let scale = spread.sqrt();
    let mut points = Vec::with_capacity(2 * n + 1);
    let mut weights = Vec::with_capacity(2 * n + 1);
    points.push(g.mean.clone());
    weights.push(kappa / spread);
    for i in 0..n {
        let col = l.column(i) * scale;
        points.push(&g.mean + &col);
        points.push(&g.mean - &col);
        weights.push(0.5 / spread);
        weights.push(0.5 / spread);
    }
    Ok(QuadratureRule { points, weights })
}

/// Tensor-product Gauss–Hermite rule with `nodes` points per dimension.
pub fn gauss_hermite_rule(g: &GaussianMoments, nodes: usize) -> Result<QuadratureRule> {
    let n = g.dim();
    if nodes == 0 {
        return Err(Error::InvalidArgument("Gauss-Hermite needs at least one node".into()));
    }
    let total = (nodes as f64).powi(n as i32);
    if total > 4.0e6 {
        return Err(Error::InvalidArgument(format!(
            "tensor Gauss-Hermite rule would need {total} points"
        )));
    }
    let l = g.cholesky_factor()?;
    let rule = gauss_hermite_cached(nodes);
    let (x, w) = (&rule.0, &rule.1);
    let total = total as usize;
    let mut points = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    let mut idx = vec![0usize; n];
    for _ in 0..total {
        let z = DVector::from_iterator(n, idx.iter().map(|&i| x[i]));
        points.push(&g.mean + &l * z);
        weights.push(idx.iter().map(|&i| w[i]).product());
        for slot in idx.iter_mut() {
            *slot += 1;
            if *slot < nodes {
                break;
            }
            *slot = 0;
        }
    }
    Ok(QuadratureRule { points, weights })
}

/// How Gaussian expectations are computed inside a moment flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum QuadratureScheme {
    Unscented { kappa: f64 },
    GaussHermite { nodes: usize },
}

impl QuadratureScheme {
    /// Unscented with `κ = 3 − N`.
    pub fn default_for(dim: usize) -> Self {
        QuadratureScheme::Unscented {
            kappa: 3.0 - dim as f64,
        }
    }

    pub fn rule(&self, g: &GaussianMoments) -> Result<QuadratureRule> {
        match *self {
            QuadratureScheme::Unscented { kappa } => unscented_rule(g, kappa),
            QuadratureScheme::GaussHermite { nodes } => gauss_hermite_rule(g, nodes),
        }
    }
}

/// Source of `E[∇∇ log ρ_post]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HessianMode {
    /// Average the analytic Hessian over the rule.
    Analytic,
    /// Stein's identity: `E[∇ log ρ (θ − m)ᵀ] C⁻¹`, then symmetrized.
    SteinGradient,
}

impl HessianMode {
    pub fn default_for(target: &TargetModel) -> Self {
        if target.has_hessian() {
            HessianMode::Analytic
        } else {
            HessianMode::SteinGradient
        }
    }
}

/// `(E[∇ log ρ_post], E[∇∇ log ρ_post])` under the Gaussian the rule was built from.
pub fn gaussian_expectations(
    g: &GaussianMoments,
    target: &TargetModel,
    rule: &QuadratureRule,
    mode: HessianMode,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = g.dim();
    check_dim(target.dim(), n)?;
    let mut grad_mean = DVector::zeros(n);
    let mut hess_mean = DMatrix::zeros(n, n);
    match mode {
        HessianMode::Analytic => {
            for (p, &w) in rule.points.iter().zip(&rule.weights) {
                grad_mean += target.grad_log_density(p.as_slice())? * w;
                hess_mean += target.hess_log_density(p.as_slice())? * w;
            }
        }
        HessianMode::SteinGradient => {
            let mut cross = DMatrix::zeros(n, n);
            for (p, &w) in rule.points.iter().zip(&rule.weights) {
                let grad = target.grad_log_density(p.as_slice())?;
                cross += linalg::outer(&grad, &(p - &g.mean)) * w;
                grad_mean += grad * w;
            }
            let prec = linalg::spd_inverse(&g.cov)?;
            hess_mean = linalg::symmetrize(&(cross * prec));
        }
    }
    Ok((grad_mean, linalg::symmetrize(&hess_mean)))
}

/// Writes `t,m_1..m_N,c_11,c_12,..,c_NN` rows (full row-major covariance).
pub fn write_moment_csv<W: Write>(out: W, traj: &MomentTrajectory) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = traj.states.first().map(|g| g.dim()).unwrap_or(0);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("m_{i}")));
    for i in 1..=n {
        for j in 1..=n {
            header.push(format!("c_{i}{j}"));
        }
    }
    w.write_record(&header)?;
    for (t, g) in traj.times.iter().zip(&traj.states) {
        let mut row = vec![format!("{t:.12e}")];
        row.extend(g.mean.iter().map(|v| format!("{v:.12e}")));
        for i in 0..n {
            for j in 0..n {
                row.push(format!("{:.12e}", g.cov[(i, j)]));
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
