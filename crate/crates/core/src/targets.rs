//! Target posteriors `ρ_post ∝ exp(−Φ)` with analytic derivatives.
//!
//! Every density here is unnormalized. The API only ever exposes `−Φ` and its
//! derivatives; no normalization constant is computed or required.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::linalg;

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// User-supplied potential `Φ` with its gradient and, optionally, its Hessian.
#[derive(Clone)]
pub struct CustomTarget {
    pub potential: ScalarFn,
    pub gradient: VectorFn,
    pub hessian: Option<MatrixFn>,
}

#[derive(Clone)]
pub enum TargetKind {
    Gaussian {
        mean: DVector<f64>,
        cov: DMatrix<f64>,
        precision: DMatrix<f64>,
    },
    /// `Φ = (√λ θ₁ − θ₂)²/20 + θ₂⁴/20`
    LogConcave { lambda: f64 },
    /// `Φ = λ(θ₂ − θ₁²)²/20 + (1 − θ₁)²/20`
    Rosenbrock { lambda: f64 },
    /// `Φ = Σ_k a_{2k} θ^{2k}`, `coeffs[k-1] = a_{2k}` for `k = 1..`.
    PolynomialEven { coeffs: Vec<f64> },
    Custom(CustomTarget),
}

#[derive(Clone)]
pub struct TargetModel {
    dim: usize,
    kind: TargetKind,
}

impl fmt::Debug for TargetModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            TargetKind::Gaussian { .. } => "gaussian".to_string(),
            TargetKind::LogConcave { lambda } => format!("logconcave(λ={lambda})"),
            TargetKind::Rosenbrock { lambda } => format!("rosenbrock(λ={lambda})"),
            TargetKind::PolynomialEven { coeffs } => format!("polynomial_even({coeffs:?})"),
            TargetKind::Custom(_) => "custom".to_string(),
        };
        f.debug_struct("TargetModel")
            .field("dim", &self.dim)
            .field("kind", &kind)
            .finish()
    }
}

fn positive_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "anisotropy parameter must be positive and finite, got {lambda}"
        )));
    }
    Ok(())
}

impl TargetModel {
    /// Gaussian target `N(mean, cov)`.
    pub fn gaussian(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        check_dim(mean.len(), cov.nrows())?;
        check_dim(mean.len(), cov.ncols())?;
        let cov = linalg::symmetrize(&cov);
        let precision = linalg::spd_inverse(&cov)?;
        Ok(Self {
            dim: mean.len(),
            kind: TargetKind::Gaussian {
                mean,
                cov,
                precision,
            },
        })
    }

    /// The 2D Gaussian benchmark `Φ = ½ θᵀ diag(1, λ) θ`.
    pub fn gaussian_benchmark(lambda: f64) -> Result<Self> {
        positive_lambda(lambda)?;
        Self::gaussian(
            DVector::zeros(2),
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0 / lambda])),
        )
    }

    pub fn logconcave(lambda: f64) -> Result<Self> {
        positive_lambda(lambda)?;
        Ok(Self {
            dim: 2,
            kind: TargetKind::LogConcave { lambda },
        })
    }

    pub fn rosenbrock(lambda: f64) -> Result<Self> {
        positive_lambda(lambda)?;
        Ok(Self {
            dim: 2,
            kind: TargetKind::Rosenbrock { lambda },
        })
    }

    /// One-dimensional even polynomial potential; `coeffs[k-1]` multiplies `θ^{2k}`.
    pub fn polynomial_even(coeffs: Vec<f64>) -> Result<Self> {
        match coeffs.last() {
            Some(&lead) if lead > 0.0 => {}
            _ => {
                return Err(Error::InvalidArgument(
                    "leading coefficient of an even polynomial potential must be positive".into(),
                ))
            }
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coefficient".into()));
        }
        Ok(Self {
            dim: 1,
            kind: TargetKind::PolynomialEven { coeffs },
        })
    }

    /// The slow-convergence polynomial target of order `k`.
    pub fn counterexample(k: usize) -> Result<Self> {
        Self::polynomial_even(counterexample_coefficients(k)?)
    }

    pub fn custom(
        dim: usize,
        potential: ScalarFn,
        gradient: VectorFn,
        hessian: Option<MatrixFn>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        Ok(Self {
            dim,
            kind: TargetKind::Custom(CustomTarget {
                potential,
                gradient,
                hessian,
            }),
        })
    }

    /// Law of `Aθ + b` for `θ ~ ρ_post`: `Φ̃(y) = Φ(A⁻¹(y − b))`.
    pub fn affine_pushforward(&self, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Self> {
        check_dim(self.dim, a.nrows())?;
        check_dim(self.dim, a.ncols())?;
        check_dim(self.dim, b.len())?;
        let a_inv = linalg::inverse(a)?;
        let a_inv_t = a_inv.transpose();
        let pull = {
            let a_inv = a_inv.clone();
            let b = b.clone();
            move |y: &[f64]| -> DVector<f64> { &a_inv * (DVector::from_column_slice(y) - &b) }
        };
        let pull = Arc::new(pull);

        let base = self.clone();
        let p = pull.clone();
        let potential: ScalarFn = Arc::new(move |y| base.potential_unchecked(p(y).as_slice()));

        let base = self.clone();
        let p = pull.clone();
        let at = a_inv_t.clone();
        let gradient: VectorFn =
            Arc::new(move |y| &at * base.potential_gradient_unchecked(p(y).as_slice()));

        let hessian: Option<MatrixFn> = if self.has_hessian() {
            let base = self.clone();
            let p = pull;
            let ai = a_inv;
            let at = a_inv_t;
            Some(Arc::new(move |y| {
                let h = base
                    .potential_hessian_unchecked(p(y).as_slice())
                    .expect("source target provides a Hessian");
                linalg::symmetrize(&(&at * h * &ai))
            }))
        } else {
            None
        };

        Self::custom(self.dim, potential, gradient, hessian)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &TargetKind {
        &self.kind
    }

    pub fn has_hessian(&self) -> bool {
        match &self.kind {
            TargetKind::Custom(c) => c.hessian.is_some(),
            _ => true,
        }
    }

    /// `log ρ_post(θ) = −Φ(θ)`, without any normalization constant.
    pub fn log_density_unnorm(&self, theta: &[f64]) -> Result<f64> {
        check_dim(self.dim, theta.len())?;
        Ok(-self.potential_unchecked(theta))
    }

    /// `∇ log ρ_post(θ) = −∇Φ(θ)`.
    pub fn grad_log_density(&self, theta: &[f64]) -> Result<DVector<f64>> {
        check_dim(self.dim, theta.len())?;
        Ok(-self.potential_gradient_unchecked(theta))
    }

    /// `∇∇ log ρ_post(θ) = −∇∇Φ(θ)`; unsupported for custom targets without a Hessian.
    pub fn hess_log_density(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        check_dim(self.dim, theta.len())?;
        self.potential_hessian_unchecked(theta)
            .map(|h| -h)
            .ok_or_else(|| {
                Error::Unsupported(
                    "custom target has no Hessian; use the Stein-gradient estimator".into(),
                )
            })
    }

    pub(crate) fn potential_unchecked(&self, t: &[f64]) -> f64 {
        match &self.kind {
            TargetKind::Gaussian {
                mean, precision, ..
            } => {
                let d = DVector::from_column_slice(t) - mean;
                0.5 * d.dot(&(precision * &d))
            }
            TargetKind::LogConcave { lambda } => {
                let u = lambda.sqrt() * t[0] - t[1];
                u * u / 20.0 + t[1].powi(4) / 20.0
            }
            TargetKind::Rosenbrock { lambda } => {
                let r = t[1] - t[0] * t[0];
                lambda * r * r / 20.0 + (1.0 - t[0]).powi(2) / 20.0
            }
            TargetKind::PolynomialEven { coeffs } => {
                let x2 = t[0] * t[0];
                let mut pow = 1.0;
                coeffs
                    .iter()
                    .map(|a| {
                        pow *= x2;
                        a * pow
                    })
                    .sum()
            }
            TargetKind::Custom(c) => (c.potential)(t),
        }
    }

    pub(crate) fn potential_gradient_unchecked(&self, t: &[f64]) -> DVector<f64> {
        match &self.kind {
            TargetKind::Gaussian {
                mean, precision, ..
            } => precision * (DVector::from_column_slice(t) - mean),
            TargetKind::LogConcave { lambda } => {
                let s = lambda.sqrt();
                let u = s * t[0] - t[1];
                DVector::from_vec(vec![s * u / 10.0, -u / 10.0 + t[1].powi(3) / 5.0])
            }
            TargetKind::Rosenbrock { lambda } => {
                let r = t[1] - t[0] * t[0];
                DVector::from_vec(vec![
                    -lambda * t[0] * r / 5.0 - (1.0 - t[0]) / 10.0,
                    lambda * r / 10.0,
                ])
            }
            TargetKind::PolynomialEven { coeffs } => {
                let x = t[0];
                let mut g = 0.0;
                for (i, a) in coeffs.iter().enumerate() {
                    let k = (i + 1) as i32;
                    g += 2.0 * k as f64 * a * x.powi(2 * k - 1);
                }
                DVector::from_element(1, g)
            }
            TargetKind::Custom(c) => (c.gradient)(t),
        }
    }

    pub(crate) fn potential_hessian_unchecked(&self, t: &[f64]) -> Option<DMatrix<f64>> {
        Some(match &self.kind {
            TargetKind::Gaussian { precision, .. } => precision.clone(),
            TargetKind::LogConcave { lambda } => {
                let s = lambda.sqrt();
                DMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        lambda / 10.0,
                        -s / 10.0,
                        -s / 10.0,
                        0.1 + 0.6 * t[1] * t[1],
                    ],
                )
            }
            TargetKind::Rosenbrock { lambda } => {
                let r = t[1] - t[0] * t[0];
                let off = -lambda * t[0] / 5.0;
                DMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        -lambda * r / 5.0 + 2.0 * lambda * t[0] * t[0] / 5.0 + 0.1,
                        off,
                        off,
                        lambda / 10.0,
                    ],
                )
            }
            TargetKind::PolynomialEven { coeffs } => {
                let x = t[0];
                let mut h = 0.0;
                for (i, a) in coeffs.iter().enumerate() {
                    let k = (i + 1) as i32;
                    let deg = 2 * k;
                    h += (deg * (deg - 1)) as f64 * a * x.powi(deg - 2);
                }
                DMatrix::from_element(1, 1, h)
            }
            TargetKind::Custom(c) => return c.hessian.as_ref().map(|h| h(t)),
        })
    }
}

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `(2j - 1)!! = E[Z^{2j}]` for a standard normal `Z`; equals 1 for `j = 0`.
pub(crate) fn gaussian_even_moment(j: u32) -> f64 {
    (1..=j).fold(1.0, |acc, i| acc * (2 * i - 1) as f64)
}

/// Coefficients `a_{2k}`, `k = 1..=2K+1`, of the polynomial potential for which the
/// curvature function `f(C) = E_{N(0,C)}[Φ'']` satisfies `1 − f(C)·C = −(C − 1)^{2K+1}`.
pub fn counterexample_coefficients(order: usize) -> Result<Vec<f64>> {
    if order == 0 {
        return Err(Error::InvalidArgument("order K must be at least 1".into()));
    }
    let n = 2 * order as u64 + 1;
    Ok((1..=n)
        .map(|k| {
            let kk = k as f64;
            // 2k(2k-1)(2k-2)!/(2^{k-1}(k-1)!) = 2k(2k-1)(2k-3)!!
            let scale = 2.0 * kk * (2.0 * kk - 1.0) * gaussian_even_moment(k as u32 - 1);
            let sign = if (n - k) % 2 == 0 { 1.0 } else { -1.0 };
            binomial(n, k) * sign / scale
        })
        .collect())
}

/// `E_{N(0,c)}[Φ''(θ)]` for an even polynomial potential with coefficients `a_{2k}`.
pub fn polynomial_curvature_mean(coeffs: &[f64], c: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let k = (i + 1) as u32;
            let deg = 2.0 * k as f64;
            deg * (deg - 1.0) * a * gaussian_even_moment(k - 1) * c.powi(k as i32 - 1)
        })
        .sum()
}

/// Central finite-difference gradient of `log ρ_post`, step `1e-5·max(1, |θ_i|)`.
pub fn finite_difference_grad(target: &TargetModel, theta: &[f64]) -> Result<DVector<f64>> {
    check_dim(target.dim(), theta.len())?;
    let mut out = DVector::zeros(theta.len());
    let mut x = theta.to_vec();
    for i in 0..theta.len() {
        let h = 1e-5 * theta[i].abs().max(1.0);
        x[i] = theta[i] + h;
        let up = target.log_density_unnorm(&x)?;
        x[i] = theta[i] - h;
        let down = target.log_density_unnorm(&x)?;
        x[i] = theta[i];
        out[i] = (up - down) / (2.0 * h);
    }
    Ok(out)
}

/// Central finite-difference Hessian of `log ρ_post` from the analytic gradient.
pub fn finite_difference_hess(target: &TargetModel, theta: &[f64]) -> Result<DMatrix<f64>> {
    check_dim(target.dim(), theta.len())?;
    let n = theta.len();
    let mut out = DMatrix::zeros(n, n);
    let mut x = theta.to_vec();
    for j in 0..n {
        let h = 1e-5 * theta[j].abs().max(1.0);
        x[j] = theta[j] + h;
        let up = target.grad_log_density(&x)?;
        x[j] = theta[j] - h;
        let down = target.grad_log_density(&x)?;
        x[j] = theta[j];
        out.set_column(j, &((up - down) / (2.0 * h)));
    }
    Ok(linalg::symmetrize(&out))
}
