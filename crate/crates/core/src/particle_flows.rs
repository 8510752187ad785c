//! Interacting-particle samplers: overdamped Langevin, its covariance-preconditioned
//! (affine invariant) variant, SVGD and affine invariant SVGD.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gaussian_flows::GaussianMoments;
use crate::linalg;
use crate::targets::TargetModel;

pub use crate::linalg::spd_sqrt;

/// `J` particles in `R^N`, stored row-major (particle `j` is `data[j*N..(j+1)*N]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    dim: usize,
    data: Vec<f64>,
}

impl Ensemble {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.is_empty() || data.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "cannot shape {} values into particles of dimension {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Divergence { particle: pos / dim });
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        for r in rows {
            check_dim(dim, r.len())?;
        }
        Self::new(dim, rows.concat())
    }

    /// `J` i.i.d. draws from `N(m, C)`.
    pub fn sample_gaussian(g: &GaussianMoments, particles: usize, seed: u64) -> Result<Self> {
        if particles == 0 {
            return Err(Error::InvalidArgument("ensemble needs at least one particle".into()));
        }
        let l = g.cholesky_factor()?;
        let n = g.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Dynamics noise uses streams 0, 1, 2, ...; keep the initial draw apart.
        rng.set_stream(u64::MAX);
        let mut data = Vec::with_capacity(particles * n);
        for _ in 0..particles {
            let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
            data.extend((&g.mean + &l * z).iter());
        }
        Self::new(n, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn particle(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Image of every particle under `θ ↦ Aθ + b`.
    pub fn affine_image(&self, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Self> {
        check_dim(self.dim, a.ncols())?;
        check_dim(a.nrows(), b.len())?;
        let mut data = Vec::with_capacity(self.len() * a.nrows());
        for p in self.iter() {
            data.extend((a * DVector::from_column_slice(p) + b).iter());
        }
        Self::new(a.nrows(), data)
    }

    /// One particle per row, columns `theta_1..theta_N`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record((1..=self.dim).map(|i| format!("theta_{i}")))?;
        for p in self.iter() {
            w.write_record(p.iter().map(|v| format!("{v:.12e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Empirical mean and population (`1/J`) covariance. The covariance is not
/// checked for definiteness; a single particle yields the zero matrix.
pub fn empirical_moments(e: &Ensemble) -> GaussianMoments {
    let n = e.dim();
    let j = e.len() as f64;
    let mut mean = DVector::zeros(n);
    for p in e.iter() {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    mean /= j;
    let mut cov = DMatrix::zeros(n, n);
    for p in e.iter() {
        for a in 0..n {
            let da = p[a] - mean[a];
            for b in a..n {
                cov[(a, b)] += da * (p[b] - mean[b]);
            }
        }
    }
    for a in 0..n {
        for b in a..n {
            cov[(a, b)] /= j;
            cov[(b, a)] = cov[(a, b)];
        }
    }
    GaussianMoments::from_parts(mean, cov)
}

fn spd_empirical_cov(e: &Ensemble) -> Result<GaussianMoments> {
    if e.len() < e.dim() + 1 {
        return Err(Error::DegenerateEnsemble(format!(
            "{} particles cannot span a {}-dimensional covariance",
            e.len(),
            e.dim()
        )));
    }
    let g = empirical_moments(e);
    linalg::cholesky(&g.cov)?;
    Ok(g)
}

/// Median-heuristic bandwidth `h = med² / log(J + 1)` over distinct pairs;
/// for an even pair count the lower middle distance is used.
pub fn median_bandwidth(e: &Ensemble) -> Result<f64> {
    let j = e.len();
    if j < 2 {
        return Err(Error::DegenerateEnsemble(
            "median bandwidth needs at least two particles".into(),
        ));
    }
    let mut sq = Vec::with_capacity(j * (j - 1) / 2);
    for a in 0..j {
        let pa = e.particle(a);
        for b in (a + 1)..j {
            sq.push(
                pa.iter()
                    .zip(e.particle(b))
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>(),
            );
        }
    }
    let k = (sq.len() - 1) / 2;
    let (_, med2, _) = sq.select_nth_unstable_by(k, f64::total_cmp);
    let h = *med2 / ((j + 1) as f64).ln();
    if !(h > 0.0) {
        return Err(Error::DegenerateBandwidth);
    }
    Ok(h)
}

/// Kernel family used by the SVGD flows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelSpec {
    /// `(1 + 4 log(J+1)/N)^{N/2} exp(−‖θ − θ'‖²/h)` with the median bandwidth `h`.
    MedianGaussian,
    /// `3^{N/2} exp(−½ (θ − θ')ᵀ C⁻¹ (θ − θ'))` with the ensemble covariance `C`.
    CovarianceGaussian,
}

/// Kernel `scale · exp(−Δᵀ M Δ)` with its statistics frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedKernel {
    pub scale: f64,
    /// The matrix `M`.
    pub precision: DMatrix<f64>,
}

impl ResolvedKernel {
    fn median_scale(n: usize, particles: usize) -> f64 {
        let n = n as f64;
        (1.0 + 4.0 * ((particles + 1) as f64).ln() / n).powf(0.5 * n)
    }

    /// Resolves the kernel on the current ensemble.
    pub fn from_ensemble(spec: KernelSpec, e: &Ensemble) -> Result<Self> {
        let n = e.dim();
        match spec {
            KernelSpec::MedianGaussian => {
                let scale = Self::median_scale(n, e.len());
                // A lone particle feels no repulsion, so its bandwidth is irrelevant.
                let precision = if e.len() == 1 {
                    DMatrix::identity(n, n)
                } else {
                    DMatrix::identity(n, n) / median_bandwidth(e)?
                };
                Ok(Self { scale, precision })
            }
            KernelSpec::CovarianceGaussian => {
                let g = spd_empirical_cov(e)?;
                Ok(Self::covariance(&g.cov)?)
            }
        }
    }

    /// Resolves the kernel for a Gaussian `N(m, C)` in place of an ensemble;
    /// the median kernel uses `med² I → N C` and needs the particle count `J`.
    pub fn for_gaussian(spec: KernelSpec, g: &GaussianMoments, particles: usize) -> Result<Self> {
        let n = g.dim();
        match spec {
            KernelSpec::MedianGaussian => {
                let rate = ((particles + 1) as f64).ln() / n as f64;
                Ok(Self {
                    scale: Self::median_scale(n, particles),
                    precision: linalg::spd_inverse(&g.cov)? * rate,
                })
            }
            KernelSpec::CovarianceGaussian => Self::covariance(&g.cov),
        }
    }

    fn covariance(cov: &DMatrix<f64>) -> Result<Self> {
        let n = cov.nrows() as f64;
        Ok(Self {
            scale: 3f64.powf(0.5 * n),
            precision: linalg::spd_inverse(cov)? * 0.5,
        })
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let d = DVector::from_iterator(x.len(), x.iter().zip(y).map(|(a, b)| a - b));
        self.scale * (-(d.transpose() * &self.precision * &d)[(0, 0)]).exp()
    }

    /// `∇_y κ(x, y) = 2 κ(x, y) M (x − y)`.
    pub fn grad_second(&self, x: &[f64], y: &[f64]) -> DVector<f64> {
        let d = DVector::from_iterator(x.len(), x.iter().zip(y).map(|(a, b)| a - b));
        &self.precision * d * (2.0 * self.eval(x, y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParticleFlow {
    Langevin,
    AiLangevin,
    Svgd,
    AiSvgd,
}

impl ParticleFlow {
    pub fn as_str(&self) -> &'static str {
        match self {
            ParticleFlow::Langevin => "langevin",
            ParticleFlow::AiLangevin => "ai_langevin",
            ParticleFlow::Svgd => "svgd",
            ParticleFlow::AiSvgd => "ai_svgd",
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self, ParticleFlow::Langevin | ParticleFlow::AiLangevin)
    }

    /// Kernel each SVGD variant is paired with by default.
    pub fn default_kernel(&self) -> KernelSpec {
        match self {
            ParticleFlow::AiSvgd | ParticleFlow::AiLangevin => KernelSpec::CovarianceGaussian,
            _ => KernelSpec::MedianGaussian,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdeConfig {
    pub dt: f64,
    pub steps: usize,
    pub seed: u64,
    pub flow: ParticleFlow,
}

impl SdeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps as f64
    }
}

/// Counter-based Gaussian noise: the draw for `(step, particle)` depends only
/// on the seed and those two indices, never on evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseStream {
    seed: u64,
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn normal(&self, step: u64, particle: usize, dim: usize) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(step);
        rng.set_word_pos((particle as u128) << 32);
        DVector::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)))
    }
}

fn gradients(e: &Ensemble, target: &TargetModel) -> Result<Vec<DVector<f64>>> {
    e.iter().map(|p| target.grad_log_density(p)).collect()
}

/// Mean-field drift `(1/J) Σ_j κ_ij [P ∇log ρ(θ_j) + P ∇_{θ_j} κ_ij]`.
fn stein_drift(
    e: &Ensemble,
    grads: &[DVector<f64>],
    kernel: &ResolvedKernel,
    p: Option<&DMatrix<f64>>,
) -> Result<Vec<DVector<f64>>> {
    let n = e.dim();
    let j = e.len();
    // Whitened coordinates z = Lᵀθ turn ΔᵀMΔ into a squared distance.
    let lt = linalg::cholesky(&kernel.precision)?.l().transpose();
    let mut z: Vec<f64> = Vec::with_capacity(j * n);
    for q in e.iter() {
        z.extend((&lt * DVector::from_column_slice(q)).iter());
    }
    let x = e.as_slice();
    let g: Vec<f64> = grads.iter().flat_map(|v| v.iter().copied()).collect();
    // Flat accumulators keep the O(J²) pair loop allocation-free.
    let mut wg = vec![0.0; j * n];
    let mut wp = vec![0.0; j * n];
    let mut mass = vec![0.0; j];
    for a in 0..j {
        let ra = a * n..(a + 1) * n;
        for d in 0..n {
            wg[a * n + d] += g[a * n + d] * kernel.scale;
            wp[a * n + d] += x[a * n + d] * kernel.scale;
        }
        mass[a] += kernel.scale;
        let za = &z[ra.clone()];
        for b in (a + 1)..j {
            let zb = &z[b * n..(b + 1) * n];
            let dist2: f64 = za.iter().zip(zb).map(|(p, q)| (p - q) * (p - q)).sum();
            let k = kernel.scale * (-dist2).exp();
            if k == 0.0 {
                continue;
            }
            for d in 0..n {
                wg[a * n + d] += g[b * n + d] * k;
                wg[b * n + d] += g[a * n + d] * k;
                wp[a * n + d] += x[b * n + d] * k;
                wp[b * n + d] += x[a * n + d] * k;
            }
            mass[a] += k;
            mass[b] += k;
        }
    }
    let weighted_grad: Vec<DVector<f64>> = wg.chunks(n).map(DVector::from_column_slice).collect();
    let weighted_pos: Vec<DVector<f64>> = wp.chunks(n).map(DVector::from_column_slice).collect();
    let two_m = &kernel.precision * 2.0;
    let inv_j = 1.0 / j as f64;
    let mut out = Vec::with_capacity(j);
    for a in 0..j {
        let pa = DVector::from_column_slice(e.particle(a));
        let repulse = &two_m * (pa * mass[a] - &weighted_pos[a]);
        let raw = &weighted_grad[a] + repulse;
        out.push(match p {
            Some(p) => p * raw * inv_j,
            None => raw * inv_j,
        });
    }
    Ok(out)
}

/// One explicit step of size `cfg.dt`; `step` indexes the noise stream.
pub fn flow_step(
    e: &Ensemble,
    target: &TargetModel,
    cfg: &SdeConfig,
    kernel: KernelSpec,
    step: u64,
) -> Result<Ensemble> {
    cfg.validate()?;
    check_dim(target.dim(), e.dim())?;
    let n = e.dim();
    let dt = cfg.dt;
    let grads = gradients(e, target)?;
    let mut next = Vec::with_capacity(e.as_slice().len());
    match cfg.flow {
        ParticleFlow::Langevin | ParticleFlow::AiLangevin => {
            let noise = NoiseStream::new(cfg.seed);
            let (precond, root) = if cfg.flow == ParticleFlow::AiLangevin {
                let g = spd_empirical_cov(e)?;
                let root = spd_sqrt(&g.cov)?;
                (Some(g.cov), Some(root))
            } else {
                (None, None)
            };
            let amp = (2.0 * dt).sqrt();
            for (j, (p, grad)) in e.iter().zip(&grads).enumerate() {
                let xi = noise.normal(step, j, n);
                let (drift, kick) = match (&precond, &root) {
                    (Some(c), Some(s)) => (c * grad, s * xi),
                    _ => (grad.clone(), xi),
                };
                next.extend(p.iter().zip(drift.iter().zip(kick.iter())).map(|(x, (d, k))| x + dt * d + amp * k));
            }
        }
        ParticleFlow::Svgd | ParticleFlow::AiSvgd => {
            let resolved = ResolvedKernel::from_ensemble(kernel, e)?;
            let cov = if cfg.flow == ParticleFlow::AiSvgd {
                Some(spd_empirical_cov(e)?.cov)
            } else {
                None
            };
            let drift = stein_drift(e, &grads, &resolved, cov.as_ref())?;
            for (p, d) in e.iter().zip(&drift) {
                next.extend(p.iter().zip(d.iter()).map(|(x, v)| x + dt * v));
            }
        }
    }
    if let Some(pos) = next.iter().position(|v| !v.is_finite()) {
        return Err(Error::Divergence { particle: pos / n });
    }
    Ensemble::new(n, next)
}

/// Runs `cfg.steps` steps, calling `observe(k, &ensemble)` after step `k`
/// (and with `k = 0` before the first step).
pub fn run_particles<F>(
    e0: &Ensemble,
    target: &TargetModel,
    cfg: &SdeConfig,
    kernel: KernelSpec,
    mut observe: F,
) -> Result<Ensemble>
where
    F: FnMut(usize, &Ensemble) -> Result<()>,
{
    let mut e = e0.clone();
    observe(0, &e)?;
    for k in 0..cfg.steps {
        e = flow_step(&e, target, cfg, kernel, k as u64)?;
        observe(k + 1, &e)?;
    }
    Ok(e)
}

/// Monte-Carlo estimate of `∫∫ κ(θ, θ') N(θ; m, C) N(θ'; m, C)` with its
/// standard error, from `samples` independent pairs.
pub fn kernel_normalization_check(
    kernel: &ResolvedKernel,
    g: &GaussianMoments,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    check_dim(g.dim(), kernel.precision.nrows())?;
    let l = g.cholesky_factor()?;
    let n = g.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || &g.mean + &l * DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let x = draw();
        let y = draw();
        let k = kernel.eval(x.as_slice(), y.as_slice());
        sum += k;
        sum_sq += k * k;
    }
    let s = samples as f64;
    let mean = sum / s;
    let var = ((sum_sq - s * mean * mean) / (s - 1.0)).max(0.0);
    Ok((mean, (var / s).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64]) -> Ensemble {
        Ensemble::new(1, points.to_vec()).unwrap()
    }

    #[test]
    fn moments_of_square() {
        let e = Ensemble::from_rows(&[vec![0.0, 0.0], vec![2.0, 0.0], vec![0.0, 2.0], vec![2.0, 2.0]]).unwrap();
        let g = empirical_moments(&e);
        assert_eq!(g.mean.as_slice(), &[1.0, 1.0]);
        assert!((g.cov - DMatrix::identity(2, 2)).norm() < 1e-15);
    }

    #[test]
    fn repeated_particle_is_degenerate() {
        let e = Ensemble::from_rows(&vec![vec![1.0, 2.0]; 5]).unwrap();
        assert_eq!(empirical_moments(&e).cov, DMatrix::zeros(2, 2));
        assert!(matches!(median_bandwidth(&e), Err(Error::DegenerateBandwidth)));
        assert!(ResolvedKernel::from_ensemble(KernelSpec::CovarianceGaussian, &e).is_err());
    }

    #[test]
    fn standard_normal_covariance_near_identity() {
        let g = GaussianMoments::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        let e = Ensemble::sample_gaussian(&g, 1000, 7).unwrap();
        let m = empirical_moments(&e);
        assert!((m.cov - DMatrix::identity(2, 2)).norm() < 0.15);
    }

    #[test]
    fn median_examples() {
        let h = median_bandwidth(&line(&[0.0, 1.0, 3.0])).unwrap();
        assert!((h - 4.0 / 4f64.ln()).abs() < 1e-12);
        let d = 2.5;
        let h = median_bandwidth(&line(&[0.0, d])).unwrap();
        assert!((h - d * d / 3f64.ln()).abs() < 1e-12);
        let h = median_bandwidth(&line(&[0.0, 1.0, 2.0, 3.0])).unwrap();
        assert!((h - 1.0 / 5f64.ln()).abs() < 1e-12);
        assert!(matches!(median_bandwidth(&line(&[1.0])), Err(Error::DegenerateEnsemble(_))));
    }

    #[test]
    fn covariance_kernel_repulsion_equals_displacement() {
        let g = GaussianMoments::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
        )
        .unwrap();
        let k = ResolvedKernel::for_gaussian(KernelSpec::CovarianceGaussian, &g, 10).unwrap();
        let x = [0.3, -0.4];
        let y = [-0.2, 0.9];
        // Finite-difference gradient in the second argument.
        let h = 1e-6;
        let mut fd = DVector::zeros(2);
        for i in 0..2 {
            let mut up = y;
            let mut down = y;
            up[i] += h;
            down[i] -= h;
            fd[i] = (k.eval(&x, &up) - k.eval(&x, &down)) / (2.0 * h);
        }
        assert!((&fd - k.grad_second(&x, &y)).norm() < 1e-8);
        let lhs = &g.cov * fd;
        let rhs = DVector::from_vec(vec![x[0] - y[0], x[1] - y[1]]) * k.eval(&x, &y);
        assert!((lhs - rhs).norm() < 1e-6);
    }

    #[test]
    fn single_particle_svgd_is_gradient_ascent() {
        let target = TargetModel::gaussian(
            DVector::from_vec(vec![1.0, -2.0]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0])),
        )
        .unwrap();
        let e = Ensemble::new(2, vec![3.0, 3.0]).unwrap();
        let cfg = SdeConfig {
            dt: 0.1,
            steps: 1,
            seed: 0,
            flow: ParticleFlow::Svgd,
        };
        let next = flow_step(&e, &target, &cfg, KernelSpec::MedianGaussian, 0).unwrap();
        let scale = ResolvedKernel::median_scale(2, 1);
        let grad = target.grad_log_density(&[3.0, 3.0]).unwrap();
        for i in 0..2 {
            assert!((next.particle(0)[i] - (3.0 + 0.1 * scale * grad[i])).abs() < 1e-14);
        }
        let cfg = SdeConfig { steps: 400, ..cfg };
        let end = run_particles(&e, &target, &cfg, KernelSpec::MedianGaussian, |_, _| Ok(())).unwrap();
        assert!((end.particle(0)[0] - 1.0).abs() < 1e-6);
        assert!((end.particle(0)[1] + 2.0).abs() < 1e-6);
    }

    #[test]
    fn stein_drift_matches_direct_sum() {
        let target = TargetModel::logconcave(0.5).unwrap();
        let g = GaussianMoments::new(DVector::zeros(2), DMatrix::identity(2, 2) * 2.0).unwrap();
        let e = Ensemble::sample_gaussian(&g, 12, 3).unwrap();
        let grads = gradients(&e, &target).unwrap();
        for flow in [ParticleFlow::Svgd, ParticleFlow::AiSvgd] {
            let spec = flow.default_kernel();
            let k = ResolvedKernel::from_ensemble(spec, &e).unwrap();
            let p = (flow == ParticleFlow::AiSvgd).then(|| empirical_moments(&e).cov);
            let fast = stein_drift(&e, &grads, &k, p.as_ref()).unwrap();
            for i in 0..e.len() {
                let mut direct = DVector::zeros(2);
                for j in 0..e.len() {
                    let kij = k.eval(e.particle(i), e.particle(j));
                    direct += &grads[j] * kij + k.grad_second(e.particle(i), e.particle(j));
                }
                direct /= e.len() as f64;
                if let Some(p) = &p {
                    direct = p * direct;
                }
                assert!((&fast[i] - &direct).norm() < 1e-10 * (1.0 + direct.norm()));
            }
        }
    }

    #[test]
    fn noise_is_counter_based() {
        let s = NoiseStream::new(11);
        assert_eq!(s.normal(3, 5, 2), s.normal(3, 5, 2));
        assert_ne!(s.normal(3, 5, 2), s.normal(3, 6, 2));
        assert_ne!(s.normal(3, 5, 2), s.normal(4, 5, 2));
    }

    #[test]
    fn langevin_determinism_and_divergence() {
        let target = TargetModel::gaussian_benchmark(1.0).unwrap();
        let g = GaussianMoments::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        let e = Ensemble::sample_gaussian(&g, 20, 1).unwrap();
        let cfg = SdeConfig {
            dt: 0.01,
            steps: 10,
            seed: 99,
            flow: ParticleFlow::AiLangevin,
        };
        let a = run_particles(&e, &target, &cfg, KernelSpec::MedianGaussian, |_, _| Ok(())).unwrap();
        let b = run_particles(&e, &target, &cfg, KernelSpec::MedianGaussian, |_, _| Ok(())).unwrap();
        assert_eq!(a, b);
        let blowup = SdeConfig {
            dt: 1e300,
            steps: 3,
            seed: 1,
            flow: ParticleFlow::Langevin,
        };
        let err = run_particles(&e, &target, &blowup, KernelSpec::MedianGaussian, |_, _| Ok(())).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }

    #[test]
    fn spd_sqrt_examples() {
        assert_eq!(spd_sqrt(&DMatrix::identity(2, 2)).unwrap(), DMatrix::identity(2, 2));
        let s = spd_sqrt(&DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 0.25]))).unwrap();
        assert!((s - DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5]))).norm() < 1e-14);
        assert!(spd_sqrt(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
    }

    #[test]
    fn normalization_examples() {
        let g = GaussianMoments::new(
            DVector::from_vec(vec![1.0, -1.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.5]),
        )
        .unwrap();
        for spec in [KernelSpec::CovarianceGaussian, KernelSpec::MedianGaussian] {
            let k = ResolvedKernel::for_gaussian(spec, &g, 1000).unwrap();
            let (est, se) = kernel_normalization_check(&k, &g, 100_000, 5).unwrap();
            assert!((est - 1.0).abs() < 3.0 * se, "{spec:?}: {est} ± {se}");
        }
        let zero = ResolvedKernel {
            scale: 0.0,
            precision: DMatrix::identity(2, 2),
        };
        assert_eq!(kernel_normalization_check(&zero, &g, 1000, 5).unwrap().0, 0.0);
    }
}
