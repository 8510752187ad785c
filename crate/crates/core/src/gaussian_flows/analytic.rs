use nalgebra::{DMatrix, DVector};

use super::GaussianMoments;
use crate::error::{check_dim, Result};
use crate::linalg;

/// Exact Fisher–Rao moment trajectory for a Gaussian target `N(m★, C★)`:
///
/// `C_t⁻¹ = C★⁻¹ + e^{-t}(C₀⁻¹ − C★⁻¹)`,
/// `m_t = m★ + e^{-t} ((1 − e^{-t}) C★⁻¹ + e^{-t} C₀⁻¹)⁻¹ C₀⁻¹ (m₀ − m★)`.
pub fn analytic_fisher_rao_gaussian(
    m0: &DVector<f64>,
    c0: &DMatrix<f64>,
    m_star: &DVector<f64>,
    c_star: &DMatrix<f64>,
    t: f64,
) -> Result<GaussianMoments> {
    let n = m0.len();
    check_dim(n, c0.nrows())?;
    check_dim(n, m_star.len())?;
    check_dim(n, c_star.nrows())?;
    let p0 = linalg::spd_inverse(c0)?;
    let ps = linalg::spd_inverse(c_star)?;
    let e = (-t).exp();
    let prec_t = &ps + (&p0 - &ps) * e;
    let cov = linalg::spd_inverse(&prec_t)?;
    let mean = m_star + &cov * (&p0 * (m0 - m_star)) * e;
    Ok(GaussianMoments::from_parts(mean, cov))
}
