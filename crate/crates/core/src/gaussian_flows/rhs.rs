use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{gaussian_expectations, GaussianMoments, HessianMode, QuadratureRule};
use crate::error::{Error, Result};
use crate::linalg;
use crate::targets::TargetModel;

/// Constant-in-θ preconditioner `P` of the bilinear Stein kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioner {
    Identity,
    Covariance,
}

pub type MatrixRule = Arc<dyn Fn(&GaussianMoments) -> Result<DMatrix<f64>> + Send + Sync>;
pub type ScalarRule = Arc<dyn Fn(&GaussianMoments) -> f64 + Send + Sync>;

/// Coefficients of the bilinear kernel `κ(θ, θ') = (θ − m)ᵀ A (θ' − m) + b`.
#[derive(Clone)]
pub struct BilinearKernel {
    pub preconditioner: Preconditioner,
    pub a: MatrixRule,
    pub b: ScalarRule,
}

impl BilinearKernel {
    /// `P = C`, `A = ½ C⁻¹`, `b = 1`: reduces to the Fisher–Rao flow.
    pub fn fisher_rao() -> Self {
        Self {
            preconditioner: Preconditioner::Covariance,
            a: Arc::new(|g| Ok(linalg::spd_inverse(&g.cov)? * 0.5)),
            b: Arc::new(|_| 1.0),
        }
    }

    /// `P = I`, `A = C⁻¹`, `b = 1`: reduces to the Wasserstein flow.
    pub fn wasserstein() -> Self {
        Self {
            preconditioner: Preconditioner::Identity,
            a: Arc::new(|g| linalg::spd_inverse(&g.cov)),
            b: Arc::new(|_| 1.0),
        }
    }

    /// `P = I`, `A = I`, `b = 1`: reduces to the Galy flow.
    pub fn galy() -> Self {
        Self {
            preconditioner: Preconditioner::Identity,
            a: Arc::new(|g| Ok(DMatrix::identity(g.dim(), g.dim()))),
            b: Arc::new(|_| 1.0),
        }
    }
}

impl fmt::Debug for BilinearKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BilinearKernel")
            .field("preconditioner", &self.preconditioner)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum MomentFlowKind {
    FisherRao,
    Wasserstein,
    KalmanWasserstein,
    SteinBilinear(BilinearKernel),
    Galy,
    Vanilla,
}

/// Serializable name of a moment flow; `stein_bilinear` maps to the
/// Fisher–Rao-reducing kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentFlowName {
    FisherRao,
    Wasserstein,
    KalmanWasserstein,
    SteinBilinear,
    Galy,
    Vanilla,
}

impl MomentFlowName {
    pub fn as_str(&self) -> &'static str {
        match self {
            MomentFlowName::FisherRao => "fisher_rao",
            MomentFlowName::Wasserstein => "wasserstein",
            MomentFlowName::KalmanWasserstein => "kalman_wasserstein",
            MomentFlowName::SteinBilinear => "stein_bilinear",
            MomentFlowName::Galy => "galy",
            MomentFlowName::Vanilla => "vanilla",
        }
    }
}

impl From<MomentFlowName> for MomentFlowKind {
    fn from(name: MomentFlowName) -> Self {
        match name {
            MomentFlowName::FisherRao => MomentFlowKind::FisherRao,
            MomentFlowName::Wasserstein => MomentFlowKind::Wasserstein,
            MomentFlowName::KalmanWasserstein => MomentFlowKind::KalmanWasserstein,
            MomentFlowName::SteinBilinear => MomentFlowKind::SteinBilinear(BilinearKernel::fisher_rao()),
            MomentFlowName::Galy => MomentFlowKind::Galy,
            MomentFlowName::Vanilla => MomentFlowKind::Vanilla,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentRhs {
    pub dm: DVector<f64>,
    pub dc: DMatrix<f64>,
}

/// Time derivative `(dm/dt, dC/dt)` of the chosen moment flow at `g`.
pub fn moment_flow_rhs(
    kind: &MomentFlowKind,
    g: &GaussianMoments,
    target: &TargetModel,
    rule: &QuadratureRule,
    mode: HessianMode,
) -> Result<MomentRhs> {
    let n = g.dim();
    let (e_grad, h) = gaussian_expectations(g, target, rule, mode)?;
    let c = &g.cov;
    let eye = DMatrix::<f64>::identity(n, n);
    let (dm, dc) = match kind {
        MomentFlowKind::FisherRao => (c * &e_grad, c + c * &h * c),
        MomentFlowKind::Wasserstein => (e_grad.clone(), &eye * 2.0 + &h * c + c * &h),
        MomentFlowKind::KalmanWasserstein => (c * &e_grad, c * 2.0 + c * &h * c * 2.0),
        MomentFlowKind::Galy => {
            let c2 = c * c;
            (e_grad.clone(), c * 2.0 + &h * &c2 + &c2 * &h)
        }
        MomentFlowKind::Vanilla => {
            let prec = linalg::spd_inverse(c)?;
            (e_grad.clone(), (prec + &h) * 0.5)
        }
        MomentFlowKind::SteinBilinear(kernel) => {
            let a = (kernel.a)(g)?;
            let b = (kernel.b)(g);
            if b == 0.0 || !b.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "bilinear kernel needs finite nonzero b, got {b}"
                )));
            }
            if a.nrows() != n || a.ncols() != n || a.clone().try_inverse().is_none() {
                return Err(Error::InvalidArgument(
                    "bilinear kernel matrix A must be square and nonsingular".into(),
                ));
            }
            let p = match kernel.preconditioner {
                Preconditioner::Identity => eye.clone(),
                Preconditioner::Covariance => c.clone(),
            };
            let pac = &p * &a * c;
            let phcac = &p * &h * c * &a * c;
            (&p * &e_grad * b, &pac + pac.transpose() + &phcac + phcac.transpose())
        }
    };
    Ok(MomentRhs {
        dm,
        dc: linalg::symmetrize(&dc),
    })
}
