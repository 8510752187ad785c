//! Summary statistics, reference moments of the benchmark targets, and the
//! error metrics reported along a trajectory.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gaussian_flows::GaussianMoments;
use crate::particle_flows::{empirical_moments, Ensemble};
use crate::quadrature::midpoint_multi;
use crate::targets::{TargetKind, TargetModel};

/// Number of cosine probes per experiment.
pub const PROBE_COUNT: usize = 20;

/// Environment variable naming the reference cache directory.
pub const CACHE_ENV: &str = "FLOWSAMPLER_CACHE";

/// Test function `cos(ωᵀθ + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosProbe {
    pub omega: Vec<f64>,
    pub b: f64,
}

impl CosProbe {
    /// `count` probes with `ω ~ N(0, I)` and `b ~ U(0, 2π)`.
    pub fn draw(count: usize, dim: usize, seed: u64) -> Vec<CosProbe> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let omega = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                let b = rng.random_range(0.0..std::f64::consts::TAU);
                CosProbe { omega, b }
            })
            .collect()
    }

    /// The standard set of [`PROBE_COUNT`] probes.
    pub fn standard(dim: usize, seed: u64) -> Vec<CosProbe> {
        Self::draw(PROBE_COUNT, dim, seed)
    }

    fn phase(&self, theta: &[f64]) -> f64 {
        self.omega.iter().zip(theta).map(|(w, x)| w * x).sum::<f64>() + self.b
    }

    /// `E[cos(ωᵀθ + b)]` for `θ ~ N(m, C)`: `exp(−½ ωᵀCω) cos(ωᵀm + b)`.
    pub fn gaussian_expectation(&self, g: &GaussianMoments) -> f64 {
        let w = DVector::from_column_slice(&self.omega);
        let quad = (w.transpose() * &g.cov * &w)[(0, 0)];
        (-0.5 * quad).exp() * self.phase(g.mean.as_slice()).cos()
    }
}

/// Mean, covariance and one cosine expectation per probe.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub cos_values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct StatsFile {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
    cos_values: Vec<f64>,
}

impl ReferenceStats {
    pub fn to_json(&self) -> Result<String> {
        let file = StatsFile {
            mean: self.mean.iter().copied().collect(),
            cov: self.cov.row_iter().map(|r| r.iter().copied().collect()).collect(),
            cos_values: self.cos_values.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: StatsFile = serde_json::from_str(text)?;
        let n = file.mean.len();
        if file.cov.len() != n || file.cov.iter().any(|r| r.len() != n) {
            return Err(Error::Format("covariance shape does not match mean".into()));
        }
        Ok(Self {
            mean: DVector::from_vec(file.mean),
            cov: DMatrix::from_row_iterator(n, n, file.cov.into_iter().flatten()),
            cos_values: file.cos_values,
        })
    }
}

/// Anything whose summary statistics can be compared with a reference.
pub trait Summarize {
    fn summarize(&self, probes: &[CosProbe]) -> ReferenceStats;
}

impl Summarize for Ensemble {
    fn summarize(&self, probes: &[CosProbe]) -> ReferenceStats {
        let g = empirical_moments(self);
        let j = self.len() as f64;
        let cos_values = probes
            .iter()
            .map(|p| self.iter().map(|x| p.phase(x).cos()).sum::<f64>() / j)
            .collect();
        ReferenceStats {
            mean: g.mean,
            cov: g.cov,
            cos_values,
        }
    }
}

impl Summarize for GaussianMoments {
    fn summarize(&self, probes: &[CosProbe]) -> ReferenceStats {
        ReferenceStats {
            mean: self.mean.clone(),
            cov: self.cov.clone(),
            cos_values: probes.iter().map(|p| p.gaussian_expectation(self)).collect(),
        }
    }
}

pub fn summary_stats<S: Summarize + ?Sized>(state: &S, probes: &[CosProbe]) -> ReferenceStats {
    state.summarize(probes)
}

/// Outer-variable midpoint rule used for the non-Gaussian references.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrationConfig {
    pub points: usize,
    /// Overrides the per-target default truncation interval.
    pub interval: Option<(f64, f64)>,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            points: 10_000_000,
            interval: None,
        }
    }
}

const TRUNCATION_TOL: f64 = 1e-10;

/// Ground-truth statistics of a benchmark target. Gaussian targets are exact;
/// for the Rosenbrock and log-concave targets the inner variable is Gaussian
/// given the outer one and is integrated analytically.
pub fn reference_statistics(
    target: &TargetModel,
    probes: &[CosProbe],
    cfg: &IntegrationConfig,
) -> Result<ReferenceStats> {
    for p in probes {
        check_dim(target.dim(), p.omega.len())?;
    }
    match target.kind() {
        TargetKind::Gaussian { mean, cov, .. } => {
            let g = GaussianMoments::from_parts(mean.clone(), cov.clone());
            Ok(g.summarize(probes))
        }
        TargetKind::Rosenbrock { lambda } => {
            let stats = rosenbrock_reference(*lambda, probes, cfg)?;
            let exact = rosenbrock_closed_form(*lambda);
            let rel = (&stats.mean - &exact.mean).norm() / exact.mean.norm()
                + (&stats.cov - &exact.cov).norm() / exact.cov.norm();
            if rel > 1e-3 {
                return Err(Error::Truncation(format!(
                    "Rosenbrock quadrature misses the closed-form moments by {rel:.3e}"
                )));
            }
            Ok(stats)
        }
        TargetKind::LogConcave { lambda } => logconcave_reference(*lambda, probes, cfg),
        _ => Err(Error::Unsupported(
            "reference statistics exist only for the gaussian, logconcave and rosenbrock targets".into(),
        )),
    }
}

/// Closed-form Rosenbrock moments: mean `(1, 11)`, covariance `[[10, 20], [20, 10/λ + 240]]`.
pub fn rosenbrock_closed_form(lambda: f64) -> GaussianMoments {
    GaussianMoments::from_parts(
        DVector::from_vec(vec![1.0, 11.0]),
        DMatrix::from_row_slice(2, 2, &[10.0, 20.0, 20.0, 10.0 / lambda + 240.0]),
    )
}

/// Integrates `weight(x) · [1, moments(x)..., cosines(x)...]` over the outer
/// variable and checks the truncation.
fn outer_integral<W, F>(
    lo: f64,
    hi: f64,
    points: usize,
    moments: usize,
    probes: usize,
    weight: W,
    mut fill: F,
) -> Result<(Vec<f64>, f64)>
where
    W: Fn(f64) -> f64,
    F: FnMut(f64, &mut [f64]),
{
    if points < 2 || !(lo < hi) {
        return Err(Error::InvalidArgument(format!(
            "bad integration setup: [{lo}, {hi}] with {points} points"
        )));
    }
    let edge = weight(lo).max(weight(hi));
    // Peak of the weights used here is at most 1 and attained inside the interval.
    if edge > TRUNCATION_TOL {
        return Err(Error::Truncation(format!(
            "integrand at the boundary of [{lo}, {hi}] is {edge:.3e} of its peak"
        )));
    }
    let width = 1 + moments + probes;
    let sums = midpoint_multi(lo, hi, points, width, |x, out| {
        let w = weight(x);
        out[0] = w;
        fill(x, &mut out[1..]);
        for v in &mut out[1..] {
            *v *= w;
        }
    });
    let z = sums[0];
    Ok((sums[1..].iter().map(|s| s / z).collect(), z))
}

fn rosenbrock_reference(lambda: f64, probes: &[CosProbe], cfg: &IntegrationConfig) -> Result<ReferenceStats> {
    let (lo, hi) = cfg.interval.unwrap_or((-40.0, 42.0));
    let inner_var = 10.0 / lambda;
    let damp: Vec<f64> = probes
        .iter()
        .map(|p| (-0.5 * p.omega[1] * p.omega[1] * inner_var).exp())
        .collect();
    let (e, _) = outer_integral(
        lo,
        hi,
        cfg.points,
        5,
        probes.len(),
        |x| (-(1.0 - x).powi(2) / 20.0).exp(),
        |x, out| {
            let x2 = x * x;
            out[0] = x;
            out[1] = x2;
            out[2] = x2;
            out[3] = x2 * x2 + inner_var;
            out[4] = x2 * x;
            for (k, p) in probes.iter().enumerate() {
                out[5 + k] = damp[k] * (p.omega[0] * x + p.omega[1] * x2 + p.b).cos();
            }
        },
    )?;
    let (m1, m2) = (e[0], e[2]);
    let cov = DMatrix::from_row_slice(
        2,
        2,
        &[e[1] - m1 * m1, e[4] - m1 * m2, e[4] - m1 * m2, e[3] - m2 * m2],
    );
    Ok(ReferenceStats {
        mean: DVector::from_vec(vec![m1, m2]),
        cov,
        cos_values: e[5..].to_vec(),
    })
}

fn logconcave_reference(lambda: f64, probes: &[CosProbe], cfg: &IntegrationConfig) -> Result<ReferenceStats> {
    let (lo, hi) = cfg.interval.unwrap_or((-30.0, 30.0));
    let root = lambda.sqrt();
    let inner_var = 10.0 / lambda;
    let damp: Vec<f64> = probes
        .iter()
        .map(|p| (-0.5 * p.omega[0] * p.omega[0] * inner_var).exp())
        .collect();
    let (e, _) = outer_integral(
        lo,
        hi,
        cfg.points,
        5,
        probes.len(),
        |y| (-y.powi(4) / 20.0).exp(),
        |y, out| {
            out[0] = y / root;
            out[1] = y;
            out[2] = y * y / lambda + inner_var;
            out[3] = y * y;
            out[4] = y * y / root;
            for (k, p) in probes.iter().enumerate() {
                out[5 + k] = damp[k] * (p.omega[0] * y / root + p.omega[1] * y + p.b).cos();
            }
        },
    )?;
    let (m1, m2) = (e[0], e[1]);
    let c12 = e[4] - m1 * m2;
    Ok(ReferenceStats {
        mean: DVector::from_vec(vec![m1, m2]),
        cov: DMatrix::from_row_slice(2, 2, &[e[2] - m1 * m1, c12, c12, e[3] - m2 * m2]),
        cos_values: e[5..].to_vec(),
    })
}

/// Default cache directory: `$FLOWSAMPLER_CACHE`, else a folder in the system temp dir.
pub fn cache_dir() -> PathBuf {
    std::env::var_os(CACHE_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("flowsampler-cache"))
}

fn cache_key(target: &TargetModel, probe_seed: u64, cfg: &IntegrationConfig) -> Option<String> {
    let (kind, lambda) = match target.kind() {
        TargetKind::Rosenbrock { lambda } => ("rosenbrock", *lambda),
        TargetKind::LogConcave { lambda } => ("logconcave", *lambda),
        _ => return None,
    };
    let interval = cfg
        .interval
        .map(|(a, b)| format!("_{a:e}_{b:e}"))
        .unwrap_or_default();
    Some(format!(
        "{kind}_lambda{lambda:e}_probe{probe_seed}_n{}{interval}.json",
        cfg.points
    ))
}

/// [`reference_statistics`] over the standard probes for `probe_seed`, cached
/// as JSON under `dir`. Gaussian targets are never cached.
pub fn reference_statistics_cached(
    target: &TargetModel,
    probe_seed: u64,
    cfg: &IntegrationConfig,
    dir: &Path,
) -> Result<ReferenceStats> {
    let probes = CosProbe::standard(target.dim(), probe_seed);
    let Some(key) = cache_key(target, probe_seed, cfg) else {
        return reference_statistics(target, &probes, cfg);
    };
    let path = dir.join(key);
    if let Ok(text) = fs::read_to_string(&path) {
        match ReferenceStats::from_json(&text) {
            Ok(stats) if stats.cos_values.len() == probes.len() => return Ok(stats),
            _ => log::warn!("ignoring unreadable cache entry {}", path.display()),
        }
    }
    let stats = reference_statistics(target, &probes, cfg)?;
    fs::create_dir_all(dir)?;
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, stats.to_json()?)?;
    fs::rename(&tmp, &path)?;
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub mean_err: f64,
    pub cov_rel_err: f64,
    pub cos_err: f64,
}

/// Mean L2 error, relative Frobenius covariance error and mean absolute cosine error.
pub fn error_report(stats: &ReferenceStats, reference: &ReferenceStats) -> Result<ErrorReport> {
    check_dim(reference.mean.len(), stats.mean.len())?;
    if stats.cos_values.len() != reference.cos_values.len() {
        return Err(Error::InvalidArgument(format!(
            "probe lists differ: {} vs {} values",
            stats.cos_values.len(),
            reference.cos_values.len()
        )));
    }
    let cos_err = if reference.cos_values.is_empty() {
        0.0
    } else {
        stats
            .cos_values
            .iter()
            .zip(&reference.cos_values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / reference.cos_values.len() as f64
    };
    Ok(ErrorReport {
        mean_err: (&stats.mean - &reference.mean).norm(),
        cov_rel_err: (&stats.cov - &reference.cov).norm() / reference.cov.norm(),
        cos_err,
    })
}

/// Least-squares slope of `ln y` against `x`.
pub fn fit_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument("slope fit needs two or more paired points".into()));
    }
    if y.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument("slope fit needs positive values".into()));
    }
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn standard_normal() -> GaussianMoments {
        GaussianMoments::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap()
    }

    #[test]
    fn cosine_closed_form_examples() {
        let g = standard_normal();
        let p = CosProbe {
            omega: vec![1.0, 0.0],
            b: 0.0,
        };
        assert!((p.gaussian_expectation(&g) - (-0.5f64).exp()).abs() < 1e-15);
        let zero = CosProbe {
            omega: vec![0.0, 0.0],
            b: 0.0,
        };
        assert_eq!(zero.gaussian_expectation(&g), 1.0);
        let e = Ensemble::new(2, vec![3.0, -1.0, 0.5, 2.0]).unwrap();
        assert_eq!(e.summarize(std::slice::from_ref(&zero)).cos_values, vec![1.0]);
    }

    #[test]
    fn cosine_closed_form_matches_quadrature() {
        let probes = CosProbe::draw(10, 1, 4);
        for (k, p) in probes.iter().enumerate() {
            let m = 0.3 * k as f64 - 1.0;
            let c = 0.2 + 0.15 * k as f64;
            let g = GaussianMoments::new(DVector::from_element(1, m), DMatrix::from_element(1, 1, c)).unwrap();
            let sd = c.sqrt();
            let out = midpoint_multi(m - 15.0 * sd, m + 15.0 * sd, 200_000, 1, |x, o| {
                o[0] = (p.omega[0] * x + p.b).cos() * (-0.5 * (x - m).powi(2) / c).exp()
                    / (std::f64::consts::TAU * c).sqrt();
            });
            assert!((out[0] - p.gaussian_expectation(&g)).abs() < 1e-8);
        }
    }

    #[test]
    fn probes_are_deterministic() {
        let a = CosProbe::standard(2, 17);
        assert_eq!(a.len(), PROBE_COUNT);
        assert_eq!(a, CosProbe::standard(2, 17));
        assert_ne!(a, CosProbe::standard(2, 18));
        assert!(a.iter().all(|p| (0.0..std::f64::consts::TAU).contains(&p.b)));
    }

    #[test]
    fn monte_carlo_cosines_agree() {
        let g = standard_normal();
        let e = Ensemble::sample_gaussian(&g, 100_000, 8).unwrap();
        let probes = CosProbe::standard(2, 1);
        let mc = e.summarize(&probes);
        let exact = g.summarize(&probes);
        for (a, b) in mc.cos_values.iter().zip(&exact.cos_values) {
            assert!((a - b).abs() < 3.0 / (1e5f64).sqrt());
        }
    }

    #[test]
    fn gaussian_reference_is_exact() {
        let t = TargetModel::gaussian_benchmark(0.01).unwrap();
        let r = reference_statistics(&t, &CosProbe::standard(2, 0), &IntegrationConfig::default()).unwrap();
        assert_eq!(r.mean, DVector::zeros(2));
        assert!((r.cov - DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 100.0]))).norm() < 1e-12);
    }

    #[test]
    fn rosenbrock_reference_matches_closed_form() {
        let cfg = IntegrationConfig {
            points: 200_000,
            interval: None,
        };
        let r = reference_statistics(&TargetModel::rosenbrock(0.1).unwrap(), &CosProbe::standard(2, 0), &cfg).unwrap();
        assert!((r.mean[0] - 1.0).abs() < 1e-6);
        assert!((r.mean[1] - 11.0).abs() < 1e-6);
        assert!((r.cov[(0, 1)] - 20.0).abs() < 1e-5);
        assert!((r.cov[(1, 1)] - 340.0).abs() < 1e-4);
    }

    #[test]
    fn truncated_interval_is_rejected() {
        let cfg = IntegrationConfig {
            points: 1000,
            interval: Some((-3.0, 3.0)),
        };
        let err = reference_statistics(&TargetModel::logconcave(1.0).unwrap(), &[], &cfg).unwrap_err();
        assert!(matches!(err, Error::Truncation(_)));
        let custom = TargetModel::counterexample(1).unwrap();
        assert!(matches!(
            reference_statistics(&custom, &[], &cfg),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn error_report_examples() {
        let probes = CosProbe::standard(2, 3);
        let g = standard_normal();
        let r = g.summarize(&probes);
        let same = error_report(&r, &r).unwrap();
        assert_eq!((same.mean_err, same.cov_rel_err, same.cos_err), (0.0, 0.0, 0.0));
        let shifted = GaussianMoments::from_parts(DVector::from_vec(vec![3.0, 4.0]), g.cov.clone() * 2.0);
        let rep = error_report(&shifted.summarize(&probes), &r).unwrap();
        assert!((rep.mean_err - 5.0).abs() < 1e-15);
        assert!((rep.cov_rel_err - 1.0).abs() < 1e-15);
        let short = g.summarize(&probes[..3]);
        assert!(matches!(error_report(&short, &r), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn json_round_trip_and_cache() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = IntegrationConfig {
            points: 10_000,
            interval: None,
        };
        let t = TargetModel::logconcave(1.0).unwrap();
        let first = reference_statistics_cached(&t, 5, &cfg, dir.path()).unwrap();
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        let second = reference_statistics_cached(&t, 5, &cfg, dir.path()).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn log_slope_of_exponential() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|t| 3.0 * (-0.7 * t).exp()).collect();
        assert!((fit_log_slope(&x, &y).unwrap() + 0.7).abs() < 1e-12);
    }
}
