//! Acceptance suite. Prints one pass/fail line per criterion and exits
//! nonzero if any criterion fails.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use curvflow_core::algebra::{algebraic_residuals, random_curvature};
use curvflow_core::experiments::{
    coercivity_family, fit_decay_rate, gradient_check, identity_suite, run_scenario, RunStatus, ScenarioConfig,
    FINAL_SNAPSHOT, RUN_FILE, SUMMARY_FILE, TRACE_FILE,
};
use curvflow_core::flow::{maintain_gauge, GaugePolicy, StopReason};
use curvflow_core::functionals::{
    energy_f, estimate_yamabe, gauss_bonnet_chi, mult_sobolev_check, random_positive_even, sigma2, sobolev_alpha,
};
use curvflow_core::{compute_geometry, geometry::volume, RadialField, WarpedMetric};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

fn algebra_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let worst = (0..1000).map(|_| algebraic_residuals(&random_curvature(&mut rng)).max()).fold(0.0, f64::max);
    let elapsed = start.elapsed();
    verdict(worst <= 1e-11 && within(elapsed, 5), format!("max residual {worst:.2e}, {elapsed:.2?}"))
}

fn round_calibration() -> Outcome {
    let start = Instant::now();
    let m = WarpedMetric::round(128).map_err(|e| e.to_string())?;
    let calc = || -> curvflow_core::Result<_> {
        let geo = compute_geometry(&m)?;
        let s_err = geo.s.values().iter().map(|s| (s - 12.0).abs()).fold(0.0, f64::max);
        Ok((s_err, volume(&m), energy_f(&m)?, gauss_bonnet_chi(&m)?, sigma2(&m)?, estimate_yamabe(&m, 0)?.value))
    };
    let (s_err, vol, f, chi, sig, yam) = calc().map_err(|e| e.to_string())?;
    let vol_rel = (vol / (8.0 * PI * PI / 3.0) - 1.0).abs();
    let f_rel = (f / (64.0 * PI * PI) - 1.0).abs();
    let yam_rel = (yam / (8.0 * 6f64.sqrt() * PI) - 1.0).abs();
    let elapsed = start.elapsed();
    let ok = s_err <= 1e-3
        && vol_rel <= 1e-4
        && f_rel <= 1e-3
        && (chi - 2.0).abs() <= 1e-3
        && (sig - 2.0).abs() <= 1e-3
        && yam_rel <= 1e-2
        && within(elapsed, 10);
    verdict(
        ok,
        format!(
            "s err {s_err:.1e}, vol rel {vol_rel:.1e}, F rel {f_rel:.1e}, chi {chi:.6}, sigma2 {sig:.6}, \
             Yamabe rel {yam_rel:.1e}, {elapsed:.2?}"
        ),
    )
}

fn gradient_certification() -> Outcome {
    let start = Instant::now();
    let cfg = ScenarioConfig { grid_n: 64, ..Default::default() };
    let grad = gradient_check(&cfg, 10).map_err(|e| e.to_string())?;
    let ids = identity_suite(&cfg).map_err(|e| e.to_string())?;
    let ratio = |name: &str| ids.checks.iter().find(|c| c.name == name).map_or(0.0, |c| c.coarse / c.fine);
    let min_grad = grad.rows.iter().map(|r| r.ratio()).fold(f64::INFINITY, f64::min);
    let (tr, div) = (ratio("trace_identity"), ratio("divergence_identity"));
    let elapsed = start.elapsed();
    verdict(
        grad.passed() && tr >= 3.5 && div >= 3.5 && within(elapsed, 60),
        format!("min gradient-gap ratio {min_grad:.2}, trace ratio {tr:.2}, divergence ratio {div:.2}, {elapsed:.2?}"),
    )
}

struct ConvergenceRun {
    outcome: curvflow_core::experiments::ScenarioOutcome,
    stop: Option<StopReason>,
    elapsed: Duration,
}

fn convergence_run(dir: &Path) -> Result<ConvergenceRun, String> {
    let mut cfg = ScenarioConfig::parse(
        "grid_n = 96\nperturb_mode = 2\nperturb_amplitude = 0.05\nstop_grad_norm = 1e-6\n\
         # resolve the decay well enough to fit it\ndt_max = 2e-4\n",
    )
    .map_err(|e| e.to_string())?;
    cfg.outputs = Some(dir.to_path_buf());
    let start = Instant::now();
    let outcome = run_scenario(&cfg);
    let elapsed = start.elapsed();
    let run = fs::read_to_string(dir.join(RUN_FILE)).map_err(|e| e.to_string())?;
    let stop = run.contains("\"GradNorm\"").then_some(StopReason::GradNorm);
    Ok(ConvergenceRun { outcome, stop, elapsed })
}

fn convergence(run: &ConvergenceRun, dir: &Path) -> Outcome {
    let rows = &run.outcome.trace.rows;
    if run.outcome.status != RunStatus::Completed || rows.is_empty() {
        return Err(format!("run did not complete: {}", run.outcome.message));
    }
    let last = rows.last().expect("nonempty");
    let grad = last.grad_l2sq.sqrt();
    // F is evaluated to about 1e-14 relative; rises below that floor are noise
    let rise = run.outcome.trace.max_energy_rise();
    let monotone = rise <= 1e-12;
    let z_drop = last.z_l2sq / rows[0].z_l2sq;
    let fit = fit_decay_rate(&run.outcome.trace, 0.5).map_err(|e| e.to_string())?;

    let (m, _) = WarpedMetric::read_snapshot(&dir.join(FINAL_SNAPSHOT)).map_err(|e| e.to_string())?;
    let gauged = maintain_gauge(&m, GaugePolicy::LapseOne).map_err(|e| e.to_string())?;
    let radius = (3.0 * volume(&gauged) / (8.0 * PI * PI)).powf(0.25);
    let profile_err = gauged
        .nodes()
        .zip(gauged.warp())
        .map(|(t, f)| (f - radius * (t / radius).sin()).abs())
        .fold(0.0, f64::max);

    let ok = run.stop == Some(StopReason::GradNorm)
        && grad <= 1e-6
        && monotone
        && z_drop <= 1e-4
        && fit.eta > 0.0
        && fit.r_squared >= 0.99
        && profile_err <= 1e-3
        && within(run.elapsed, 600);
    verdict(
        ok,
        format!(
            "{} rows, final |grad F| {grad:.1e}, max F rise {rise:.1e} rel, z ratio {z_drop:.1e}, eta {:.1}, R^2 {:.6}, \
             profile err {profile_err:.1e}, {:.2?}",
            rows.len(),
            fit.eta,
            fit.r_squared,
            run.elapsed
        ),
    )
}

fn energy_identity(run: &ConvergenceRun) -> Outcome {
    let rows = &run.outcome.trace.rows;
    let worst = rows
        .iter()
        .map(|r| (r.energy - (32.0 * PI * PI * r.chi + 4.0 * r.z_l2sq)).abs() / r.energy)
        .fold(0.0, f64::max);
    verdict(!rows.is_empty() && worst <= 1e-3, format!("max relative defect {worst:.1e} over {} rows", rows.len()))
}

fn coercivity() -> Outcome {
    let coarse = coercivity_family(64).map_err(|e| e.to_string())?;
    let fine = coercivity_family(128).map_err(|e| e.to_string())?;
    let min_ratio = coarse.ratios.iter().chain(&fine.ratios).copied().fold(f64::INFINITY, f64::min);
    let drift = (coarse.delta_star / fine.delta_star - 1.0).abs();
    verdict(
        min_ratio > 0.0 && drift <= 0.2,
        format!("delta* {:.4e} (N=64), {:.4e} (N=128), drift {:.1}%", coarse.delta_star, fine.delta_star, 100.0 * drift),
    )
}

fn conformal_sigma2() -> Outcome {
    let m = WarpedMetric::round(128).map_err(|e| e.to_string())?.perturb(2, 0.05).map_err(|e| e.to_string())?;
    let base = sigma2(&m).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let u = random_positive_even(&m, &mut rng, 0.4);
        let moved = m.conformal(&u).and_then(|g| sigma2(&g)).map_err(|e| e.to_string())?;
        worst = worst.max((moved - base).abs());
    }
    verdict(worst <= 1e-3, format!("max |delta sigma2| {worst:.1e} over 20 factors"))
}

fn sobolev() -> Outcome {
    let alpha = sobolev_alpha(2.0, 8.0).map_err(|e| e.to_string())?;
    let worst = |n: usize| -> Result<f64, String> {
        let m = WarpedMetric::round(n).map_err(|e| e.to_string())?;
        let unit = m.scaled(volume(&m).powf(-0.25));
        let c = PI / unit.length();
        (1..=8).try_fold(0.0, |acc: f64, k| {
            let u = RadialField::from_fn(&unit, |t| (c * t).cos().powi(k));
            Ok(acc.max(mult_sobolev_check(&unit, &u, 2.0, 8.0).map_err(|e| e.to_string())?.ratio()))
        })
    };
    let (k1, k2) = (worst(96)?, worst(192)?);
    let change = (k1 / k2 - 1.0).abs();
    verdict(
        alpha == 0.8 && change <= 0.05,
        format!("alpha {alpha}, worst cos^k ratio {k1:.5} (N=96), {k2:.5} (N=192), change {:.2}%", 100.0 * change),
    )
}

fn determinism_and_restart(root: &Path) -> Outcome {
    let run = |name: &str, text: &str, restart: Option<&Path>| -> Result<_, String> {
        let mut cfg = ScenarioConfig::parse(text).map_err(|e| e.to_string())?;
        cfg.outputs = Some(root.join(name));
        cfg.restart_from = restart.map(Path::to_path_buf);
        let out = run_scenario(&cfg);
        if out.status != RunStatus::Completed {
            return Err(format!("{name}: {}", out.message));
        }
        Ok(out)
    };
    let base = "grid_n = 96\nperturb_amplitude = 0.05\nseed = 11\ndt_init = 5e-4\ndt_max = 5e-4\nstop_grad_norm = 1e-12\n";
    let at = |t: f64| format!("{base}stop_time = {t}\n");
    run("a", &at(0.004), None)?;
    run("b", &at(0.004), None)?;
    let identical = [TRACE_FILE, SUMMARY_FILE, FINAL_SNAPSHOT, RUN_FILE]
        .iter()
        .all(|f| fs::read(root.join("a").join(f)).ok() == fs::read(root.join("b").join(f)).ok());
    let whole = run("whole", &at(0.008), None)?;
    let resumed = run("resumed", &at(0.008), Some(&root.join("a").join(FINAL_SNAPSHOT)))?;
    let fa = whole.trace.rows.last().map_or(f64::NAN, |r| r.energy);
    let fb = resumed.trace.rows.last().map_or(f64::NAN, |r| r.energy);
    let drift = (fa - fb).abs() / fa;
    verdict(identical && drift <= 1e-9, format!("byte-identical {identical}, restart F drift {drift:.1e}"))
}

fn main() -> ExitCode {
    let scratch = tempfile::tempdir().expect("temporary directory");
    let conv_dir = scratch.path().join("convergence");
    let conv = convergence_run(&conv_dir);
    let with_run = |f: &dyn Fn(&ConvergenceRun) -> Outcome| conv.as_ref().map_err(Clone::clone).and_then(f);

    let results: Vec<(&str, Outcome)> = vec![
        ("algebraic identities", algebra_suite()),
        ("round-sphere calibration", round_calibration()),
        ("gradient certification", gradient_certification()),
        ("convergence run", with_run(&|r| convergence(r, &conv_dir))),
        ("energy identity audit", with_run(&energy_identity)),
        ("coercivity monitor", coercivity()),
        ("sigma2 conformal invariance", conformal_sigma2()),
        ("multiplicative Sobolev inequality", sobolev()),
        ("determinism and restart", determinism_and_restart(&scratch.path().join("restart"))),
    ];
    let mut failed = 0;
    for (i, (name, result)) in results.iter().enumerate() {
        let (tag, detail) = match result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {} [{tag}] {name}: {detail}", i + 1);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
