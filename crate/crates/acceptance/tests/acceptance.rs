//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//! Runtime budgets are part of each criterion.

use std::time::{Duration, Instant};

use flowsampler::diagnostics::{
    fit_log_slope, reference_statistics_cached, rosenbrock_closed_form, IntegrationConfig,
};
use flowsampler::fisher_rao_grid::{
    fr_density, grid_kl, kl_bound_start, kl_decay_bound, log_ratio_envelope, DensityGrid, GridAxis,
};
use flowsampler::gaussian_flows::{
    analytic_fisher_rao_gaussian, fisher_rao_stationary_1d, integrate_moment_flow, jacobian_spectrum_1d,
    GaussianMoments, MomentFlowConfig, MomentFlowKind,
};
use flowsampler::harness::{run_experiment_with_reference, ExperimentConfig, Trajectory};
use flowsampler::diagnostics::{reference_statistics, CosProbe};
use flowsampler::particle_flows::{
    kernel_normalization_check, run_particles, Ensemble, KernelSpec, ParticleFlow, ResolvedKernel, SdeConfig,
};
use flowsampler::targets::TargetModel;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(v))
}

fn moments(m: &[f64], c: DMatrix<f64>) -> GaussianMoments {
    GaussianMoments::new(DVector::from_column_slice(m), c).unwrap()
}

fn analytic_equivalence() -> Outcome {
    let m_star = DVector::from_vec(vec![1.0, -2.0]);
    let c_star = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let target = TargetModel::gaussian(m_star.clone(), c_star.clone()).unwrap();
    let g0 = moments(&[10.0, 10.0], diag(&[0.5, 2.0]));
    let cfg = MomentFlowConfig::new(1e-3, 5.0, &target);
    let traj = integrate_moment_flow(&MomentFlowKind::FisherRao, &g0, &target, &cfg).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (t, g) in traj.times.iter().zip(&traj.states) {
        let exact = analytic_fisher_rao_gaussian(&g0.mean, &g0.cov, &m_star, &c_star, *t).unwrap();
        let dm = (&g.mean - &exact.mean).norm() / exact.mean.norm();
        let dc = (&g.cov - &exact.cov).norm() / exact.cov.norm();
        worst = worst.max(dm).max(dc);
    }
    check(
        worst <= 1e-6 && traj.times.len() == 5001,
        format!("max relative deviation {worst:.2e} over {} grid times (tol 1e-6)", traj.times.len()),
    )
}

/// Slope of `ln err` over the window, for the covariance or mean error.
fn window_slope(traj: &flowsampler::gaussian_flows::MomentTrajectory, target: &GaussianMoments, lo: f64, hi: f64, cov: bool) -> f64 {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (t, g) in traj.times.iter().zip(&traj.states) {
        if *t >= lo - 1e-9 && *t <= hi + 1e-9 {
            x.push(*t);
            y.push(if cov {
                (&g.cov - &target.cov).norm()
            } else {
                (&g.mean - &target.mean).norm()
            });
        }
    }
    fit_log_slope(&x, &y).unwrap_or(f64::NAN)
}

fn rate_fits() -> Outcome {
    let run = |kind: MomentFlowKind, lambda: f64, c0: f64, t_end: f64| {
        let target = TargetModel::gaussian_benchmark(lambda).unwrap();
        let g0 = moments(&[1.0, 1.0], DMatrix::identity(2, 2) * c0);
        let cfg = MomentFlowConfig::new(0.01, t_end, &target);
        integrate_moment_flow(&kind, &g0, &target, &cfg).map_err(|e| e.to_string())
    };
    let star = |lambda: f64| moments(&[0.0, 0.0], diag(&[1.0, 1.0 / lambda]));
    let within = |got: f64, want: f64, tol: f64| ((got - want) / want).abs() <= tol;

    let fr = run(MomentFlowKind::FisherRao, 0.1, 1.0, 20.0)?;
    let fr_m = window_slope(&fr, &star(0.1), 10.0, 20.0, false);
    let fr_c = window_slope(&fr, &star(0.1), 10.0, 20.0, true);
    // λ = 0.1 gives λ★,max = 10.
    let w = run(MomentFlowKind::Wasserstein, 0.1, 1.0, 200.0)?;
    let w_m = window_slope(&w, &star(0.1), 100.0, 200.0, false);
    let w_c = window_slope(&w, &star(0.1), 50.0, 100.0, true);
    // C0 = I would already equal C★ at λ = 1, so vanilla starts from 2I.
    let v = run(MomentFlowKind::Vanilla, 1.0, 2.0, 40.0)?;
    let v_c = window_slope(&v, &star(1.0), 20.0, 40.0, true);

    let ok = within(fr_m, -1.0, 0.1)
        && within(fr_c, -1.0, 0.1)
        && within(w_m, -0.1, 0.1)
        && within(w_c, -0.2, 0.1)
        && within(v_c, -0.5, 0.15);
    check(
        ok,
        format!(
            "fisher_rao mean {fr_m:.4}/cov {fr_c:.4} (want -1), wasserstein mean {w_m:.4} (want -0.1) cov {w_c:.4} (want -0.2), vanilla cov {v_c:.4} (want -0.5)"
        ),
    )
}

fn grid_bound() -> Outcome {
    let target = TargetModel::gaussian(DVector::zeros(1), DMatrix::identity(1, 1)).unwrap();
    let axis = GridAxis::around(0.0, 2f64.sqrt()).unwrap();
    let rho0 = DensityGrid::gaussian_1d(0.0, 2.0, axis).unwrap();
    let post = DensityGrid::from_target(&target, vec![axis]).unwrap();
    let k = log_ratio_envelope(&rho0, &post).unwrap();
    let b = rho0.second_moment().max(post.second_moment());
    let t0 = kl_bound_start(k, b).max(0.0);
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_closed = 0.0f64;
    let mut prev = f64::INFINITY;
    let mut monotone = true;
    for i in 0..50 {
        let t = t0 + 10.0 * i as f64 / 49.0;
        let rho = fr_density(&rho0, &target, t).map_err(|e| e.to_string())?;
        let kl = grid_kl(&rho, &target).map_err(|e| e.to_string())?;
        worst_gap = worst_gap.max(kl - kl_decay_bound(k, b, t));
        let e = (-t).exp();
        let s2 = 1.0 / (0.5 * e + 1.0 - e);
        let closed = 0.5 * (s2 - 1.0 - s2.ln());
        worst_closed = worst_closed.max((kl - closed).abs());
        monotone &= kl <= prev + 1e-15;
        prev = kl;
    }
    check(
        worst_gap <= 0.0 && worst_closed <= 1e-6 && monotone,
        format!(
            "K = {k:.6}, B = {b:.6}, t ≥ {t0:.4}: max(KL - bound) = {worst_gap:.3e}, max |KL - closed form| = {worst_closed:.2e}, monotone = {monotone}"
        ),
    )
}

fn random_matrix_cond10(rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let rot = |a: f64| DMatrix::from_row_slice(2, 2, &[a.cos(), -a.sin(), a.sin(), a.cos()]);
    let alpha = rng.random_range(0.0..std::f64::consts::TAU);
    let beta = rng.random_range(0.0..std::f64::consts::TAU);
    rot(alpha) * diag(&[2.0, 0.2]) * rot(beta)
}

fn affine_run(flow: ParticleFlow, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<f64, String> {
    let target = TargetModel::gaussian_benchmark(0.01).unwrap();
    let pushed = target.affine_pushforward(a, b).unwrap();
    let init = moments(&[10.0, 10.0], diag(&[0.5, 2.0]));
    let e0 = Ensemble::sample_gaussian(&init, 200, 4).unwrap();
    let cfg = SdeConfig {
        dt: 0.01,
        steps: 500,
        seed: 0,
        flow,
    };
    let go = |e: &Ensemble, t: &TargetModel| {
        run_particles(e, t, &cfg, flow.default_kernel(), |_, _| Ok(())).map_err(|e| e.to_string())
    };
    let x = go(&e0, &target)?.affine_image(a, b).unwrap();
    let y = go(&e0.affine_image(a, b).unwrap(), &pushed)?;
    let scale = x.as_slice().iter().fold(0.0f64, |s, v| s.max(v.abs()));
    Ok(x.as_slice()
        .iter()
        .zip(y.as_slice())
        .fold(0.0f64, |s, (p, q)| s.max((p - q).abs()))
        / scale)
}

fn ai_svgd_equivariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let a = random_matrix_cond10(&mut rng);
    let b = DVector::from_vec(vec![rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]);
    let cond = {
        let s = a.clone().svd(false, false).singular_values;
        s.max() / s.min()
    };
    let ai = affine_run(ParticleFlow::AiSvgd, &a, &b)?;
    let plain = affine_run(ParticleFlow::Svgd, &a, &b)?;
    check(
        ai < 1e-8 && plain > 1e-2,
        format!("cond(A) = {cond:.2}; ai_svgd relative deviation {ai:.2e} (tol 1e-8), svgd {plain:.2e} (need > 1e-2)"),
    )
}

fn rosenbrock_references() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for lambda in [0.01, 0.1, 1.0] {
        let target = TargetModel::rosenbrock(lambda).unwrap();
        let stats = reference_statistics_cached(&target, 0, &IntegrationConfig::default(), dir.path())
            .map_err(|e| e.to_string())?;
        let exact = rosenbrock_closed_form(lambda);
        for (got, want) in stats.mean.iter().zip(exact.mean.iter()).chain(stats.cov.iter().zip(exact.cov.iter())) {
            worst = worst.max(((got - want) / want).abs());
        }
    }
    check(worst <= 1e-3, format!("max relative entry error {worst:.2e} over λ ∈ {{0.01, 0.1, 1}} (tol 1e-3)"))
}

fn kernel_normalization() -> Outcome {
    let g = moments(&[1.0, -1.0], DMatrix::from_row_slice(2, 2, &[2.0, 0.7, 0.7, 0.5]));
    let kernel = ResolvedKernel::for_gaussian(KernelSpec::CovarianceGaussian, &g, 1000).unwrap();
    let (mean, se) = kernel_normalization_check(&kernel, &g, 100_000, 7).map_err(|e| e.to_string())?;
    check(
        (mean - 1.0).abs() <= 3.0 * se,
        format!("estimate {mean:.5} ± {se:.5}, |estimate - 1| = {:.2} SE", (mean - 1.0).abs() / se),
    )
}

fn counterexample_rate() -> Outcome {
    let target = TargetModel::counterexample(1).unwrap();
    let g0 = moments(&[0.0], DMatrix::from_element(1, 1, 2.0));
    let cfg = MomentFlowConfig::new(0.1, 1e4, &target);
    let traj = integrate_moment_flow(&MomentFlowKind::FisherRao, &g0, &target, &cfg).map_err(|e| e.to_string())?;
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut max_mean = 0.0f64;
    for (t, g) in traj.times.iter().zip(&traj.states) {
        max_mean = max_mean.max(g.mean[0].abs());
        if *t >= 1e2 - 1e-9 {
            x.push(t.ln());
            y.push((g.cov[(0, 0)] - 1.0).abs());
        }
    }
    let slope = fit_log_slope(&x, &y).map_err(|e| e.to_string())?;

    // Scalar oracle dC/dt = −C(C − 1)³ by RK4 on the same grid.
    let f = |c: f64| -c * (c - 1.0).powi(3);
    let (mut c, h) = (2.0, 0.1);
    for _ in 0..100_000 {
        let k1 = f(c);
        let k2 = f(c + 0.5 * h * k1);
        let k3 = f(c + 0.5 * h * k2);
        let k4 = f(c + h * k3);
        c += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    let end = traj.last().cov[(0, 0)];
    let oracle_gap = ((end - 1.0) - (c - 1.0)).abs() / (c - 1.0);
    check(
        (slope + 0.5).abs() <= 0.05 && max_mean <= 1e-12 && oracle_gap < 1e-6,
        format!(
            "log-log slope {slope:.4} (want -0.5 ± 0.05), max |m_t| = {max_mean:.1e}, C(1e4) - 1 = {:.4e} vs scalar oracle {:.4e}",
            end - 1.0,
            c - 1.0
        ),
    )
}

fn jacobian_bound() -> Outcome {
    use std::sync::Arc;
    let target = TargetModel::custom(
        1,
        Arc::new(|t: &[f64]| 0.5 * t[0] * t[0] + t[0].cosh().ln()),
        Arc::new(|t: &[f64]| DVector::from_element(1, t[0] + t[0].tanh())),
        Some(Arc::new(|t: &[f64]| DMatrix::from_element(1, 1, 1.0 + 1.0 / t[0].cosh().powi(2)))),
    )
    .unwrap();
    let g0 = moments(&[0.5], DMatrix::from_element(1, 1, 1.0));
    let star = fisher_rao_stationary_1d(&target, &g0, 60).map_err(|e| e.to_string())?;
    let s = jacobian_spectrum_1d(&target, &star, 60).map_err(|e| e.to_string())?;
    let c_star = star.cov[(0, 0)];
    let lower = 1.0 / ((7.0 + 4.0 / std::f64::consts::PI.sqrt()) * (1.0 + 2f64.ln()));
    let upper = -1.0 / (3.0 + s.a2);
    let ok = -s.lambda2 >= lower && s.lambda2 <= upper && s.a2 / c_star >= s.a1 * s.a1;
    check(
        ok,
        format!(
            "C★ = {c_star:.6}, A1 = {:.2e}, A2 = {:.6}, λ1 = {:.6}, λ2 = {:.6}; need -λ2 ≥ {lower:.6} and λ2 ≤ {upper:.6}",
            s.a1, s.a2, s.lambda1, s.lambda2
        ),
    )
}

fn particle_config(dir: &std::path::Path, flow: ParticleFlow, lambda: f64) -> ExperimentConfig {
    let text = format!(
        r#"{{
            "target": {{"kind": "gaussian", "lambda": {lambda}}},
            "flow": {{"type": "particle", "flow": "{}", "particles": 1000, "dt": 0.01}},
            "horizon": 15.0,
            "seeds": {{"dynamics": 42, "probe": 0}},
            "output_dir": {:?}
        }}"#,
        flow.as_str(),
        dir
    );
    ExperimentConfig::from_json(&text).unwrap()
}

fn particle_signature() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut runs: Vec<(ParticleFlow, f64, Trajectory)> = Vec::new();
    for flow in [ParticleFlow::AiLangevin, ParticleFlow::AiSvgd, ParticleFlow::Langevin, ParticleFlow::Svgd] {
        for lambda in [0.01, 1.0] {
            let cfg = particle_config(dir.path(), flow, lambda);
            let target = cfg.target.build().unwrap();
            let reference = reference_statistics(&target, &CosProbe::standard(2, 0), &IntegrationConfig::default())
                .map_err(|e| e.to_string())?;
            let traj = run_experiment_with_reference(&cfg, &reference).map_err(|e| e.to_string())?;
            runs.push((flow, lambda, traj));
        }
    }
    let find = |flow: ParticleFlow, lambda: f64| {
        &runs.iter().find(|(f, l, _)| *f == flow && *l == lambda).unwrap().2
    };
    let metrics = ["mean_err", "cov_rel_err", "cos_err"];
    let mut notes = Vec::new();
    let mut ok = true;
    for flow in [ParticleFlow::AiLangevin, ParticleFlow::AiSvgd] {
        let (a, b) = (find(flow, 0.01), find(flow, 1.0));
        for m in metrics {
            let (ya, yb) = (a.metric(m).unwrap(), b.metric(m).unwrap());
            let gap = a
                .times()
                .iter()
                .zip(ya.iter().zip(&yb))
                .filter(|(t, _)| **t > 2.0)
                .map(|(_, (p, q))| (p.log10() - q.log10()).abs())
                .fold(0.0f64, f64::max);
            ok &= gap < 0.5;
            notes.push(format!("{} {m} max gap {gap:.2}", flow.as_str()));
        }
    }
    for flow in [ParticleFlow::Langevin, ParticleFlow::Svgd] {
        let (a, b) = (find(flow, 0.01).at(5.0).unwrap(), find(flow, 1.0).at(5.0).unwrap());
        for (m, p, q) in [
            ("mean_err", a.mean_err, b.mean_err),
            ("cov_rel_err", a.cov_rel_err, b.cov_rel_err),
            ("cos_err", a.cos_err, b.cos_err),
        ] {
            let sep = p.log10() - q.log10();
            ok &= sep >= 1.0;
            notes.push(format!("{} {m} separation {sep:.2}", flow.as_str()));
        }
    }
    check(ok, notes.join("; "))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 9] = [
        ("analytic-solution equivalence", analytic_equivalence, Duration::from_secs(1)),
        ("moment-flow rate fits", rate_fits, Duration::from_secs(10)),
        ("grid Fisher-Rao KL bound", grid_bound, Duration::from_secs(5)),
        ("ai_svgd exact affine equivariance", ai_svgd_equivariance, Duration::from_secs(30)),
        ("Rosenbrock references", rosenbrock_references, Duration::from_secs(60)),
        ("kernel normalization", kernel_normalization, Duration::from_secs(1)),
        ("slow-convergence counterexample", counterexample_rate, Duration::from_secs(5)),
        ("Jacobian spectral bound", jacobian_bound, Duration::from_secs(5)),
        ("particle affine-invariance signature", particle_signature, Duration::from_secs(300)),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let id = format!("criterion {}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str()) || id.ends_with(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) => (elapsed <= *budget, d),
            Err(d) => (false, d),
        };
        failed += usize::from(!ok);
        println!(
            "{} {id} ({name}): {detail} [{:.2} s, budget {} s]",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
