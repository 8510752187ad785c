use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, FlowSpec};
use crate::diagnostics::{
    cache_dir, error_report, reference_statistics_cached, CosProbe, ReferenceStats, Summarize,
};
use crate::error::{Error, Result};
use crate::gaussian_flows::{
    integrate_moment_flow_with, HessianMode, MomentFlowConfig, MomentFlowKind, QuadratureScheme,
};
use crate::particle_flows::{run_particles, Ensemble, SdeConfig};

pub const TRAJECTORY_HEADER: [&str; 7] = ["flow", "target", "lambda", "t", "mean_err", "cov_rel_err", "cos_err"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub mean_err: f64,
    pub cov_rel_err: f64,
    pub cos_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub flow: String,
    pub target: String,
    pub lambda: Option<f64>,
    pub rows: Vec<TrajectoryRow>,
}

impl Trajectory {
    pub fn metric(&self, name: &str) -> Option<Vec<f64>> {
        let pick: fn(&TrajectoryRow) -> f64 = match name {
            "mean_err" => |r| r.mean_err,
            "cov_rel_err" => |r| r.cov_rel_err,
            "cos_err" => |r| r.cos_err,
            _ => return None,
        };
        Some(self.rows.iter().map(pick).collect())
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    /// Row closest to time `t`.
    pub fn at(&self, t: f64) -> Option<&TrajectoryRow> {
        self.rows
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
    }
}

struct RowSink<W: Write> {
    writer: csv::Writer<W>,
    labels: [String; 3],
}

impl<W: Write> RowSink<W> {
    fn new(out: W, traj: &Trajectory) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(TRAJECTORY_HEADER)?;
        Ok(Self {
            writer,
            labels: [
                traj.flow.clone(),
                traj.target.clone(),
                traj.lambda.map(|l| l.to_string()).unwrap_or_default(),
            ],
        })
    }

    fn push(&mut self, row: &TrajectoryRow) -> Result<()> {
        let mut rec: Vec<String> = self.labels.to_vec();
        rec.extend(
            [row.t, row.mean_err, row.cov_rel_err, row.cos_err]
                .iter()
                .map(|v| format!("{v:.10e}")),
        );
        self.writer.write_record(&rec)?;
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        self.writer.flush()?;
        Ok(())
    }
}

/// Writes a trajectory in the CSV schema used by `run` and `plot`.
pub fn write_trajectory_csv<W: Write>(out: W, traj: &Trajectory) -> Result<()> {
    let mut sink = RowSink::new(out, traj)?;
    for r in &traj.rows {
        sink.push(r)?;
    }
    sink.flush()
}

/// Parses one trajectory CSV; any schema deviation is a format error.
pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory> {
    let fmt = |msg: String| Error::Format(format!("{}: {msg}", path.display()));
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != TRAJECTORY_HEADER {
        return Err(fmt(format!("unexpected header {header:?}")));
    }
    let mut traj: Option<Trajectory> = None;
    for rec in reader.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| fmt(format!("bad number in column {}", TRAJECTORY_HEADER[i])))
        };
        let lambda = match rec.get(2) {
            Some("") | None => None,
            Some(_) => Some(num(2)?),
        };
        let row = TrajectoryRow {
            t: num(3)?,
            mean_err: num(4)?,
            cov_rel_err: num(5)?,
            cos_err: num(6)?,
        };
        let t = traj.get_or_insert_with(|| Trajectory {
            flow: rec[0].to_string(),
            target: rec[1].to_string(),
            lambda,
            rows: Vec::new(),
        });
        if t.flow != rec[0] || t.target != rec[1] || t.lambda != lambda {
            return Err(fmt("labels change within one file".into()));
        }
        if let Some(prev) = t.rows.last() {
            if !(row.t > prev.t) {
                return Err(fmt("times are not strictly increasing".into()));
            }
        }
        t.rows.push(row);
    }
    traj.ok_or_else(|| fmt("no trajectory rows".into()))
}

/// Reference statistics for the configured target, using the on-disk cache.
pub fn reference_for(cfg: &ExperimentConfig) -> Result<ReferenceStats> {
    let target = cfg.target.build()?;
    let integration = cfg.integration.unwrap_or_default();
    reference_statistics_cached(&target, cfg.seeds.probe, &integration, &cache_dir())
}

/// Runs one experiment and writes `<output_dir>/<stem>.csv`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Trajectory> {
    let reference = reference_for(cfg)?;
    run_experiment_with_reference(cfg, &reference)
}

/// Like [`run_experiment`] with a precomputed reference. Rows are flushed
/// to disk before any error is returned.
pub fn run_experiment_with_reference(
    cfg: &ExperimentConfig,
    reference: &ReferenceStats,
) -> Result<Trajectory> {
    cfg.validate()?;
    let target = cfg.target.build()?;
    let probes = CosProbe::standard(target.dim(), cfg.seeds.probe);
    let mut traj = Trajectory {
        flow: cfg.flow.label(),
        target: cfg.target.name().to_string(),
        lambda: cfg.target.lambda(),
        rows: Vec::new(),
    };
    fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_path();
    let mut sink = RowSink::new(BufWriter::new(File::create(&path)?), &traj)?;
    let every = cfg.report_every();
    let total = cfg.total_steps();
    let dt = cfg.flow.dt();
    let mut record = |k: usize, stats: ReferenceStats, rows: &mut Vec<TrajectoryRow>| -> Result<()> {
        if k % every != 0 && k != total {
            return Ok(());
        }
        let rep = error_report(&stats, reference)?;
        let row = TrajectoryRow {
            t: k as f64 * dt,
            mean_err: rep.mean_err,
            cov_rel_err: rep.cov_rel_err,
            cos_err: rep.cos_err,
        };
        if ![row.mean_err, row.cov_rel_err, row.cos_err].iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { particle: 0 }.context(format!("non-finite error at t = {}", row.t)));
        }
        sink.push(&row)?;
        rows.push(row);
        Ok(())
    };
    let init = cfg.target.initial();
    let outcome = match cfg.flow {
        FlowSpec::Particle {
            flow,
            particles,
            dt,
            kernel,
        } => {
            let sde = SdeConfig {
                dt,
                steps: total,
                seed: cfg.seeds.dynamics,
                flow,
            };
            let kernel = kernel.unwrap_or_else(|| flow.default_kernel());
            Ensemble::sample_gaussian(&init, particles, cfg.seeds.dynamics).and_then(|e0| {
                run_particles(&e0, &target, &sde, kernel, |k, e| {
                    record(k, e.summarize(&probes), &mut traj.rows)
                })
            })
            .map(|_| ())
        }
        FlowSpec::Gaussian {
            flow,
            dt,
            quadrature,
            hessian_mode,
        } => {
            let mfc = MomentFlowConfig {
                dt,
                t_end: total as f64 * dt,
                scheme: quadrature.unwrap_or_else(|| QuadratureScheme::default_for(target.dim())),
                hessian_mode: hessian_mode.unwrap_or_else(|| HessianMode::default_for(&target)),
            };
            let kind = MomentFlowKind::from(flow);
            let mut k = 0usize;
            integrate_moment_flow_with(&kind, &init, &target, &mfc, |_, g| {
                let r = record(k, g.summarize(&probes), &mut traj.rows);
                k += 1;
                r
            })
            .map(|_| ())
        }
    };
    let flushed = sink.flush();
    outcome.map_err(|e| e.context(format!("experiment writing {}", path.display())))?;
    flushed?;
    log::info!("wrote {} rows to {}", traj.rows.len(), path.display());
    Ok(traj)
}

/// Runs independent experiments on scoped threads; results keep input order.
pub fn run_sweep(configs: &[ExperimentConfig], workers: usize) -> Result<Vec<Trajectory>> {
    // References are computed up front so concurrent runs never race on the cache.
    let references: Vec<ReferenceStats> = configs.iter().map(reference_for).collect::<Result<_>>()?;
    let workers = workers.max(1);
    let mut results: Vec<Option<Result<Trajectory>>> = (0..configs.len()).map(|_| None).collect();
    for (chunk_cfg, (chunk_ref, chunk_out)) in configs
        .chunks(workers)
        .zip(references.chunks(workers).zip(results.chunks_mut(workers)))
    {
        std::thread::scope(|s| {
            let handles: Vec<_> = chunk_cfg
                .iter()
                .zip(chunk_ref)
                .map(|(c, r)| s.spawn(move || run_experiment_with_reference(c, r)))
                .collect();
            for (slot, h) in chunk_out.iter_mut().zip(handles) {
                *slot = Some(h.join().unwrap_or_else(|_| {
                    Err(Error::Precondition("experiment worker panicked".into()))
                }));
            }
        });
    }
    results.into_iter().map(|r| r.expect("every slot is filled")).collect()
}
