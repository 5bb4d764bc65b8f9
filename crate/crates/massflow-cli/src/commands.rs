//! Command implementations.

use std::process::ExitCode;

use massflow::estimators::fit_exponent;
use massflow::rng::StreamKey;
use massflow::runner::{run, Observable, RunPlan};
use massflow::sim;
use massflow::verify::{self, SuiteConfig};
use serde_json::json;

use crate::config::{
    load_config, ConvergeArgs, EstimateArgs, GlobalArgs, SimulateArgs, VerifyArgs,
};
use crate::output;

fn effective<T: serde::de::DeserializeOwned>(
    global: &GlobalArgs,
    args: T,
    patch: impl FnOnce(&mut T),
) -> Result<T, String> {
    match &global.config {
        Some(path) => load_config(path),
        None => {
            let mut args = args;
            patch(&mut args);
            Ok(args)
        }
    }
}

pub fn simulate(global: &GlobalArgs, args: SimulateArgs) -> Result<ExitCode, String> {
    let cfg = effective(global, args, |a| {
        a.seed = global.seed;
        a.replicates = global.replicates.unwrap_or(1);
    })?;
    if cfg.replicates == 0 {
        return Err("replicates must be > 0".into());
    }
    let profile = cfg.profile.simulation_profile()?;
    let stepper = cfg.stepper.to_config(cfg.grid.times()?);
    stepper.validate().map_err(|e| e.to_string())?;

    let trajectories: Vec<sim::Trajectory> = (0..cfg.replicates)
        .map(|rep| sim::simulate(&profile, &stepper, StreamKey::new(cfg.seed, rep, 0)))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;

    output::ensure_dir(&global.out)?;
    output::write_trajectories(&global.out.join("trajectory.csv"), &trajectories)?;
    output::write_manifest(&global.out, "simulate", cfg.seed, cfg.replicates, &cfg)?;
    println!(
        "wrote {} replicate(s) to {}",
        cfg.replicates,
        global.out.join("trajectory.csv").display()
    );
    Ok(ExitCode::SUCCESS)
}

pub fn estimate(global: &GlobalArgs, args: EstimateArgs) -> Result<ExitCode, String> {
    let cfg = effective(global, args, |a| {
        a.seed = global.seed;
        a.replicates = global.replicates.unwrap_or(10_000);
    })?;
    if cfg.replicates == 0 {
        return Err("replicates must be > 0".into());
    }
    let profile = cfg.profile.simulation_profile()?;
    let b = cfg.profile.total_mass;
    let at = cfg.at.unwrap_or(0.5 * b);
    let observable = match cfg.observable.as_str() {
        "mass" => Observable::MassAt(at),
        "inverse_mass" => Observable::InverseMassAt(at),
        "abs_displacement" => Observable::AbsDisplacement(at),
        "cluster_count" => Observable::ClusterCount,
        other => {
            return Err(format!(
                "unknown observable '{other}' (expected mass, inverse_mass, abs_displacement or cluster_count)"
            ))
        }
    };
    let stepper = cfg.stepper.to_config(cfg.grid.times()?);
    let plan = RunPlan::new(profile, stepper, cfg.seed, cfg.replicates).observe(observable);
    let out = run(&plan).map_err(|e| e.to_string())?;
    let curve = out.curve(0, 0.95);

    output::ensure_dir(&global.out)?;
    output::write_curves(&global.out.join("curve.csv"), std::slice::from_ref(&curve))?;
    if cfg.fit {
        let fit = fit_exponent(&curve.fit_points(), 0.0, f64::INFINITY)
            .map_err(|e| e.to_string())?;
        output::write_json(
            &global.out.join("fit.json"),
            &json!({
                "observable": curve.observable,
                "slope": fit.slope,
                "stderr": fit.stderr,
                "intercept": fit.intercept,
                "r_squared": fit.r_squared,
                "target": cfg.fit_target,
                "range": [fit.t_range.0, fit.t_range.1],
                "points_used": fit.points_used,
            }),
        )?;
        println!("fit: slope = {:.5} +- {:.5}", fit.slope, fit.stderr);
    }
    output::write_manifest(&global.out, "estimate", cfg.seed, cfg.replicates, &cfg)?;
    println!("wrote {}", global.out.join("curve.csv").display());
    Ok(ExitCode::SUCCESS)
}

pub fn verify(global: &GlobalArgs, args: VerifyArgs) -> Result<ExitCode, String> {
    let cfg = effective(global, args, |a| {
        a.seed = global.seed;
    })?;
    let suite_cfg = SuiteConfig {
        seed: cfg.seed,
        quick: cfg.quick,
    };
    let reports = verify::run_suite(&cfg.suite, &suite_cfg).map_err(|e| e.to_string())?;
    for report in &reports {
        print!("{}", report.render_text());
    }
    output::ensure_dir(&global.out)?;
    output::write_json(&global.out.join("report.json"), &reports)?;
    output::write_manifest(&global.out, "verify", cfg.seed, 0, &cfg)?;

    let failed = reports.iter().filter(|r| !r.passed()).count();
    println!(
        "{} check(s), {} failed or inconclusive; report at {}",
        reports.len(),
        failed,
        global.out.join("report.json").display()
    );
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

pub fn converge(global: &GlobalArgs, args: ConvergeArgs) -> Result<ExitCode, String> {
    let cfg = effective(global, args, |a| {
        a.seed = global.seed;
        a.replicates = global.replicates.unwrap_or(10_000);
    })?;
    let profile = match cfg.profile.parsed()? {
        massflow::profile::Profile::Tabulated(t) => t,
        massflow::profile::Profile::Step(_) => {
            return Err(
                "converge needs a tabulated/analytic profile to refine dyadically".into(),
            )
        }
    };
    let at = cfg.at.unwrap_or(0.5 * cfg.profile.total_mass);
    let stepper = cfg.stepper.to_config(vec![]);
    let report = verify::check_dyadic_convergence(
        &profile,
        &cfg.level_list,
        at,
        cfg.t,
        cfg.replicates,
        cfg.seed,
        &stepper,
    )
    .map_err(|e| e.to_string())?;
    print!("{}", report.render_text());
    output::ensure_dir(&global.out)?;
    output::write_json(&global.out.join("report.json"), &report)?;
    output::write_manifest(&global.out, "converge", cfg.seed, cfg.replicates, &cfg)?;
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
