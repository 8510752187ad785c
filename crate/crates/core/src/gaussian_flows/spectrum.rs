use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::{
    gauss_hermite_rule, integrate_moment_flow_with, moment_flow_rhs, GaussianMoments, HessianMode,
    MomentFlowConfig, MomentFlowKind, QuadratureScheme,
};
use crate::error::{check_dim, Error, Result};
use crate::targets::TargetModel;

const STATIONARY_TOL: f64 = 1e-8;

/// Eigenvalues of the linearized 1D Fisher–Rao moment flow at a fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobianSpectrum1D {
    pub a1: f64,
    pub a2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

fn fr_residual(target: &TargetModel, m: f64, c: f64, nodes: usize) -> Result<Vector2<f64>> {
    let g = GaussianMoments::from_parts(DVector::from_element(1, m), DMatrix::from_element(1, 1, c));
    let rule = gauss_hermite_rule(&g, nodes)?;
    let r = moment_flow_rhs(&MomentFlowKind::FisherRao, &g, target, &rule, HessianMode::Analytic)?;
    Ok(Vector2::new(r.dm[0], r.dc[(0, 0)]))
}

fn require_1d_with_hessian(target: &TargetModel) -> Result<()> {
    if target.dim() != 1 {
        return Err(Error::Unsupported(format!(
            "Jacobian spectrum is only available in one dimension, target has {}",
            target.dim()
        )));
    }
    if !target.has_hessian() {
        return Err(Error::Unsupported("Jacobian spectrum needs an analytic Hessian".into()));
    }
    Ok(())
}

/// Spectrum at the stationary point `g_star`, with expectations from an
/// `quad_points`-node Gauss–Hermite rule.
pub fn jacobian_spectrum_1d(
    target: &TargetModel,
    g_star: &GaussianMoments,
    quad_points: usize,
) -> Result<JacobianSpectrum1D> {
    require_1d_with_hessian(target)?;
    check_dim(1, g_star.dim())?;
    g_star.validate()?;
    let m = g_star.mean[0];
    let c = g_star.cov[(0, 0)];
    let res = fr_residual(target, m, c, quad_points)?;
    if res.norm() >= STATIONARY_TOL {
        return Err(Error::Precondition(format!(
            "({m}, {c}) is not a stationary point of the Fisher-Rao flow (residual {:.3e})",
            res.norm()
        )));
    }
    let rule = gauss_hermite_rule(g_star, quad_points)?;
    let mut a1 = 0.0;
    let mut a2 = 0.0;
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        let curvature = -target.hess_log_density(p.as_slice())?[(0, 0)];
        let d = p[0] - m;
        a1 += w * curvature * d;
        a2 += w * curvature * d * d;
    }
    let half_sum = 1.5 + 0.5 * a2;
    let disc = ((0.5 - 0.5 * a2).powi(2) + 2.0 * a1 * a1 * c).sqrt();
    let lambda1 = 0.5 * (-half_sum - disc);
    // Conjugate form avoids cancellation in −half_sum + disc.
    let lambda2 = -(1.0 + a2 - a1 * a1 * c) / (half_sum + disc);
    Ok(JacobianSpectrum1D {
        a1,
        a2,
        lambda1,
        lambda2,
    })
}

/// Locates a Fisher–Rao fixed point: integrate from `g0` to `t = 200` with
/// `dt = 0.01`, then polish with Newton steps on the flow residual.
pub fn fisher_rao_stationary_1d(
    target: &TargetModel,
    g0: &GaussianMoments,
    quad_points: usize,
) -> Result<GaussianMoments> {
    require_1d_with_hessian(target)?;
    let cfg = MomentFlowConfig::new(1e-2, 200.0, target)
        .with_scheme(QuadratureScheme::GaussHermite {
            nodes: quad_points.min(40),
        })
        .with_hessian_mode(HessianMode::Analytic);
    let coarse = integrate_moment_flow_with(&MomentFlowKind::FisherRao, g0, target, &cfg, |_, _| Ok(()))?;
    let mut x = Vector2::new(coarse.mean[0], coarse.cov[(0, 0)]);
    for _ in 0..30 {
        let f = fr_residual(target, x[0], x[1], quad_points)?;
        if f.norm() < 1e-14 {
            break;
        }
        let mut jac = Matrix2::zeros();
        for k in 0..2 {
            let h = 1e-7 * x[k].abs().max(1e-3);
            let mut up = x;
            let mut down = x;
            up[k] += h;
            down[k] -= h;
            let col = (fr_residual(target, up[0], up[1], quad_points)?
                - fr_residual(target, down[0], down[1], quad_points)?)
                / (2.0 * h);
            jac.set_column(k, &col);
        }
        let step = jac
            .lu()
            .solve(&f)
            .ok_or_else(|| Error::Decomposition("singular Jacobian in Newton polish".into()))?;
        x -= step;
        if !(x[1] > 0.0) {
            return Err(Error::Decomposition("Newton polish left the SPD cone".into()));
        }
    }
    GaussianMoments::new(DVector::from_element(1, x[0]), DMatrix::from_element(1, 1, x[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn log_cosh_target() -> TargetModel {
        TargetModel::custom(
            1,
            Arc::new(|x| 0.5 * x[0] * x[0] + x[0].cosh().ln()),
            Arc::new(|x| DVector::from_element(1, x[0] + x[0].tanh())),
            Some(Arc::new(|x| {
                let s = 1.0 / x[0].cosh();
                DMatrix::from_element(1, 1, 1.0 + s * s)
            })),
        )
        .unwrap()
    }

    #[test]
    fn gaussian_target_spectrum() {
        let c_star = 3.0;
        let t = TargetModel::gaussian(DVector::from_element(1, 1.0), DMatrix::from_element(1, 1, c_star)).unwrap();
        let g = GaussianMoments::new(DVector::from_element(1, 1.0), DMatrix::from_element(1, 1, c_star)).unwrap();
        let s = jacobian_spectrum_1d(&t, &g, 200).unwrap();
        assert!(s.a1.abs() < 1e-12);
        assert!((s.a2 - 1.0).abs() < 1e-12);
        // With A1 = 0, A2 = 1 both roots collapse to −1.
        assert!((s.lambda1 + 1.0).abs() < 1e-12);
        assert!((s.lambda2 + 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_stationary_point_rejected() {
        let t = TargetModel::gaussian(DVector::zeros(1), DMatrix::identity(1, 1)).unwrap();
        let g = GaussianMoments::new(DVector::from_element(1, 0.5), DMatrix::identity(1, 1)).unwrap();
        assert!(matches!(jacobian_spectrum_1d(&t, &g, 50), Err(Error::Precondition(_))));
    }

    #[test]
    fn two_dimensional_target_unsupported() {
        let t = TargetModel::gaussian_benchmark(1.0).unwrap();
        let g = GaussianMoments::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        assert!(matches!(jacobian_spectrum_1d(&t, &g, 50), Err(Error::Unsupported(_))));
    }

    #[test]
    fn closed_form_matches_numerical_jacobian() {
        let t = log_cosh_target();
        let g0 = GaussianMoments::new(DVector::from_element(1, 0.7), DMatrix::identity(1, 1)).unwrap();
        let g = fisher_rao_stationary_1d(&t, &g0, 200).unwrap();
        let s = jacobian_spectrum_1d(&t, &g, 200).unwrap();
        let (m, c) = (g.mean[0], g.cov[(0, 0)]);
        let mut jac = Matrix2::zeros();
        for k in 0..2 {
            let h = 1e-5;
            let mut up = Vector2::new(m, c);
            let mut down = up;
            up[k] += h;
            down[k] -= h;
            let col = (fr_residual(&t, up[0], up[1], 200).unwrap()
                - fr_residual(&t, down[0], down[1], 200).unwrap())
                / (2.0 * h);
            jac.set_column(k, &col);
        }
        let mut eig: Vec<f64> = jac.complex_eigenvalues().iter().map(|z| z.re).collect();
        eig.sort_by(f64::total_cmp);
        assert!((eig[0] - s.lambda1).abs() < 1e-6, "{eig:?} {s:?}");
        assert!((eig[1] - s.lambda2).abs() < 1e-6, "{eig:?} {s:?}");
        assert!(s.lambda1 <= -1.0);
        assert!(s.a2 / c >= s.a1 * s.a1);
    }
}
