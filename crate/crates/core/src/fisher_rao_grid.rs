//! Closed-form Fisher–Rao KL flow on a tensor grid:
//! `ρ_t ∝ ρ_0^{e^{-t}} ρ_post^{1 − e^{-t}}`, evaluated in log space.

use std::io::Write;

use crate::error::{check_dim, Error, Result};
use crate::targets::TargetModel;

/// Boundary-to-peak density ratio above which a grid counts as truncated.
const TRUNCATION_ERROR: f64 = 1e-6;
const TRUNCATION_WARN: f64 = 1e-12;

/// Uniform axis with `n` nodes from `lo` to `hi` inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridAxis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl GridAxis {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo < hi) || n < 2 || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "bad grid axis [{lo}, {hi}] with {n} nodes"
            )));
        }
        Ok(Self { lo, hi, n })
    }

    /// 4096 nodes over `[m − 12σ, m + 12σ]`.
    pub fn around(m: f64, sigma: f64) -> Result<Self> {
        Self::new(m - 12.0 * sigma, m + 12.0 * sigma, 4096)
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.step()
    }
}

/// Normalized density on a 1D or 2D grid (first axis varies slowest).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    axes: Vec<GridAxis>,
    log_values: Vec<f64>,
    values: Vec<f64>,
    cell_volume: f64,
}

impl DensityGrid {
    /// Tabulates `exp(log_density)` and normalizes it by its Riemann sum.
    pub fn from_log_fn<F>(axes: Vec<GridAxis>, mut log_density: F) -> Result<Self>
    where
        F: FnMut(&[f64]) -> f64,
    {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::Unsupported(format!(
                "grids must be 1D or 2D, got {} axes",
                axes.len()
            )));
        }
        let mut raw = Vec::with_capacity(axes.iter().map(|a| a.n).product());
        let mut point = vec![0.0; axes.len()];
        for_each_index(&axes, |idx| {
            for (k, &i) in idx.iter().enumerate() {
                point[k] = axes[k].point(i);
            }
            raw.push(log_density(&point));
        });
        Self::from_unnormalized_logs(axes, raw)
    }

    fn from_unnormalized_logs(axes: Vec<GridAxis>, mut logs: Vec<f64>) -> Result<Self> {
        let cell_volume: f64 = axes.iter().map(GridAxis::step).product();
        let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !peak.is_finite() {
            return Err(Error::InvalidArgument("log density has no finite maximum".into()));
        }
        logs.iter_mut().for_each(|l| *l -= peak);
        let mass: f64 = logs.iter().map(|l| l.exp()).sum::<f64>() * cell_volume;
        let shift = mass.ln();
        logs.iter_mut().for_each(|l| *l -= shift);
        let values = logs.iter().map(|l| l.exp()).collect();
        Ok(Self {
            axes,
            log_values: logs,
            values,
            cell_volume,
        })
    }

    /// The target `exp(−Φ)` normalized on the given axes.
    pub fn from_target(target: &TargetModel, axes: Vec<GridAxis>) -> Result<Self> {
        check_dim(target.dim(), axes.len())?;
        let mut err = None;
        let grid = Self::from_log_fn(axes, |p| match target.log_density_unnorm(p) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                f64::NAN
            }
        });
        match err {
            Some(e) => Err(e),
            None => grid,
        }
    }

    /// One-dimensional `N(m, var)`.
    pub fn gaussian_1d(m: f64, var: f64, axis: GridAxis) -> Result<Self> {
        if !(var > 0.0) {
            return Err(Error::InvalidArgument(format!("variance must be positive, got {var}")));
        }
        Self::from_log_fn(vec![axis], |p| -0.5 * (p[0] - m).powi(2) / var)
    }

    pub fn axes(&self) -> &[GridAxis] {
        &self.axes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn log_values(&self) -> &[f64] {
        &self.log_values
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_volume
    }

    /// Grid node coordinates, in storage order.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.values.len());
        for_each_index(&self.axes, |idx| {
            out.push(idx.iter().zip(&self.axes).map(|(&i, a)| a.point(i)).collect());
        });
        out
    }

    /// `E[|θ|²]` by Riemann sum.
    pub fn second_moment(&self) -> f64 {
        self.points()
            .iter()
            .zip(&self.values)
            .map(|(p, v)| v * p.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            * self.cell_volume
    }

    /// Largest density on the grid boundary relative to the peak.
    pub fn boundary_ratio(&self) -> f64 {
        let peak = self.log_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut worst = f64::NEG_INFINITY;
        let mut k = 0;
        for_each_index(&self.axes, |idx| {
            let edge = idx.iter().zip(&self.axes).any(|(&i, a)| i == 0 || i + 1 == a.n);
            if edge {
                worst = worst.max(self.log_values[k]);
            }
            k += 1;
        });
        (worst - peak).exp()
    }

    fn same_grid(&self, other: &DensityGrid) -> Result<()> {
        if self.axes != other.axes {
            return Err(Error::InvalidArgument("densities live on different grids".into()));
        }
        Ok(())
    }
}

fn for_each_index<F: FnMut(&[usize])>(axes: &[GridAxis], mut f: F) {
    let mut idx = vec![0usize; axes.len()];
    let total: usize = axes.iter().map(|a| a.n).product();
    for _ in 0..total {
        f(&idx);
        for k in (0..axes.len()).rev() {
            idx[k] += 1;
            if idx[k] < axes[k].n {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Fisher–Rao flow at time `t` started from `rho0`.
pub fn fr_density(rho0: &DensityGrid, target: &TargetModel, t: f64) -> Result<DensityGrid> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("time must be nonnegative, got {t}")));
    }
    check_dim(target.dim(), rho0.axes.len())?;
    let decay = (-t).exp();
    let points = rho0.points();
    let mut logs = Vec::with_capacity(points.len());
    for (p, l0) in points.iter().zip(&rho0.log_values) {
        logs.push(decay * l0 + (1.0 - decay) * target.log_density_unnorm(p)?);
    }
    let out = DensityGrid::from_unnormalized_logs(rho0.axes.clone(), logs)?;
    let ratio = out.boundary_ratio();
    if ratio > TRUNCATION_ERROR {
        return Err(Error::Truncation(format!(
            "density at the grid boundary is {ratio:.3e} of its peak at t = {t}"
        )));
    }
    if ratio > TRUNCATION_WARN {
        log::warn!("grid boundary carries {ratio:.3e} of peak density at t = {t}");
    }
    Ok(out)
}

/// `KL[p ‖ q]` by Riemann sum over a shared grid, with `0 log 0 = 0`.
pub fn kl_between(p: &DensityGrid, q: &DensityGrid) -> Result<f64> {
    p.same_grid(q)?;
    let sum: f64 = p
        .values
        .iter()
        .zip(p.log_values.iter().zip(&q.log_values))
        .filter(|(v, _)| **v > 0.0)
        .map(|(v, (lp, lq))| v * (lp - lq))
        .sum();
    Ok(sum * p.cell_volume)
}

/// `KL[ρ ‖ ρ_post]` with the target normalized on `rho`'s grid.
pub fn grid_kl(rho: &DensityGrid, target: &TargetModel) -> Result<f64> {
    let post = DensityGrid::from_target(target, rho.axes.clone())?;
    kl_between(rho, &post)
}

/// Smallest `K` with `|log(ρ_0/ρ_post)| ≤ K (1 + |θ|²)` at every grid node.
pub fn log_ratio_envelope(rho0: &DensityGrid, post: &DensityGrid) -> Result<f64> {
    rho0.same_grid(post)?;
    Ok(rho0
        .points()
        .iter()
        .zip(rho0.log_values.iter().zip(&post.log_values))
        .map(|(p, (a, b))| (a - b).abs() / (1.0 + p.iter().map(|x| x * x).sum::<f64>()))
        .fold(0.0, f64::max))
}

/// Uniform bound `(2 + B + eB) K e^{-t}`, valid for `t ≥ log((1 + B) K)`.
pub fn kl_decay_bound(k: f64, b: f64, t: f64) -> f64 {
    (2.0 + b + std::f64::consts::E * b) * k * (-t).exp()
}

pub fn kl_bound_start(k: f64, b: f64) -> f64 {
    ((1.0 + b) * k).ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlPoint {
    pub t: f64,
    pub kl: f64,
    pub bound: f64,
}

pub fn write_kl_curve_csv<W: Write>(out: W, curve: &[KlPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "kl", "bound"])?;
    for p in curve {
        w.write_record([
            format!("{:.12e}", p.t),
            format!("{:.12e}", p.kl),
            format!("{:.12e}", p.bound),
        ])?;
    }
    w.flush()?;
    Ok(())
}
