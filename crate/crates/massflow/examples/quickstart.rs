//! Minimal library walkthrough: build a profile, run replicates, fit the
//! small-time mass exponent.

use massflow::estimators::fit_exponent;
use massflow::profile::TabulatedProfile;
use massflow::runner::{geometric_grid, run, Observable, RunPlan};
use massflow::sim::StepperConfig;

fn main() {
    // Lebesgue initial mass on [0,1], dyadically split into 256 particles.
    let profile = TabulatedProfile::uniform(1.0).dyadic_step_approximation(8);

    // Estimate E m(1/2, t) on a geometric grid down from t = 1e-2.
    let grid = geometric_grid(1e-2, 0.7, 12);
    let config = StepperConfig::new(1e-4).with_save_times(grid);
    let plan = RunPlan::new(profile, config, 42, 2000).observe(Observable::MassAt(0.5));
    let out = run(&plan).unwrap();
    let curve = out.curve(0, 0.95);

    for p in &curve.points {
        println!("t = {:10.4e}   E m = {:.5} +- {:.5}", p.t, p.mean, p.se);
    }
    let fit = fit_exponent(&curve.fit_points(), 0.0, f64::INFINITY).unwrap();
    println!(
        "mass growth exponent: {:.4} +- {:.4}  (1/3 for uniform initial mass)",
        fit.slope, fit.stderr
    );
}
