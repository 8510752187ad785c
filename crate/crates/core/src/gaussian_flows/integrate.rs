use super::{moment_flow_rhs, GaussianMoments, HessianMode, MomentFlowKind, QuadratureScheme};
use crate::error::{Error, Result};
use crate::linalg;
use crate::targets::TargetModel;

const MAX_HALVINGS: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentFlowConfig {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: QuadratureScheme,
    pub hessian_mode: HessianMode,
}

impl MomentFlowConfig {
    /// Unscented rule with `κ = 3 − N` and the target's default Hessian mode.
    pub fn new(dt: f64, t_end: f64, target: &TargetModel) -> Self {
        Self {
            dt,
            t_end,
            scheme: QuadratureScheme::default_for(target.dim()),
            hessian_mode: HessianMode::default_for(target),
        }
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.scheme = QuadratureScheme::Unscented { kappa };
        self
    }

    pub fn with_scheme(mut self, scheme: QuadratureScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_hessian_mode(mut self, mode: HessianMode) -> Self {
        self.hessian_mode = mode;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "t_end must be nonnegative, got {}",
                self.t_end
            )));
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        // Tolerate t_end/dt landing a hair below an integer.
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<GaussianMoments>,
}

impl MomentTrajectory {
    pub fn last(&self) -> &GaussianMoments {
        self.states.last().expect("trajectory always holds the initial state")
    }
}

/// Integrates with classic RK4, recording every step of the `dt` grid.
pub fn integrate_moment_flow(
    kind: &MomentFlowKind,
    g0: &GaussianMoments,
    target: &TargetModel,
    cfg: &MomentFlowConfig,
) -> Result<MomentTrajectory> {
    let mut traj = MomentTrajectory {
        times: Vec::new(),
        states: Vec::new(),
    };
    integrate_moment_flow_with(kind, g0, target, cfg, |t, g| {
        traj.times.push(t);
        traj.states.push(g.clone());
        Ok(())
    })?;
    Ok(traj)
}

/// Like [`integrate_moment_flow`] but hands each grid state to `observe`
/// (including `t = 0`) instead of storing it.
pub fn integrate_moment_flow_with<F>(
    kind: &MomentFlowKind,
    g0: &GaussianMoments,
    target: &TargetModel,
    cfg: &MomentFlowConfig,
    mut observe: F,
) -> Result<GaussianMoments>
where
    F: FnMut(f64, &GaussianMoments) -> Result<()>,
{
    cfg.validate()?;
    g0.validate()?;
    crate::error::check_dim(target.dim(), g0.dim())?;
    let steps = cfg.steps();
    let mut g = g0.clone();
    observe(0.0, &g)?;
    for k in 0..steps {
        let t0 = k as f64 * cfg.dt;
        let h = (cfg.t_end - t0).min(cfg.dt);
        g = advance(kind, &g, target, cfg, t0, h, 0)?;
        observe(t0 + h, &g)?;
    }
    Ok(g)
}

fn advance(
    kind: &MomentFlowKind,
    g: &GaussianMoments,
    target: &TargetModel,
    cfg: &MomentFlowConfig,
    t: f64,
    h: f64,
    depth: u32,
) -> Result<GaussianMoments> {
    match rk4_step(kind, g, target, cfg, h) {
        Ok(next) => Ok(next),
        Err(Error::Decomposition(reason)) => {
            if depth >= MAX_HALVINGS {
                return Err(Error::IntegrationFailure {
                    t,
                    reason: format!("covariance lost positive definiteness: {reason}"),
                    last_valid: Box::new(g.clone()),
                });
            }
            let mid = advance(kind, g, target, cfg, t, 0.5 * h, depth + 1)?;
            advance(kind, &mid, target, cfg, t + 0.5 * h, 0.5 * h, depth + 1)
        }
        Err(e) => Err(e),
    }
}

fn rk4_step(
    kind: &MomentFlowKind,
    g: &GaussianMoments,
    target: &TargetModel,
    cfg: &MomentFlowConfig,
    h: f64,
) -> Result<GaussianMoments> {
    let eval = |s: &GaussianMoments| {
        let rule = cfg.scheme.rule(s)?;
        moment_flow_rhs(kind, s, target, &rule, cfg.hessian_mode)
    };
    let shift = |k: &super::MomentRhs, a: f64| {
        GaussianMoments::from_parts(&g.mean + &k.dm * a, linalg::symmetrize(&(&g.cov + &k.dc * a)))
    };
    let k1 = eval(g)?;
    let k2 = eval(&shift(&k1, 0.5 * h))?;
    let k3 = eval(&shift(&k2, 0.5 * h))?;
    let k4 = eval(&shift(&k3, h))?;
    let w = h / 6.0;
    let mean = &g.mean + (&k1.dm + &k2.dm * 2.0 + &k3.dm * 2.0 + &k4.dm) * w;
    let cov = &g.cov + (&k1.dc + &k2.dc * 2.0 + &k3.dc * 2.0 + &k4.dc) * w;
    let next = GaussianMoments::from_parts(mean, linalg::symmetrize(&cov));
    if next.mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::Decomposition("mean became non-finite".into()));
    }
    linalg::cholesky(&next.cov)?;
    Ok(next)
}
