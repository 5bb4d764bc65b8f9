//! Named verification suites with pinned full-scale parameters (the quick
//! variants only reduce replicate counts, never tolerances).

use crate::profile::{PiecewiseConstant, Side, StepProfile, TabulatedProfile};
use crate::runner::geometric_grid;
use crate::sim::{SimError, StepperConfig};

use super::bounds::BoundCase;
use super::exponents::LilVariant;
use super::{
    check_center_of_mass, check_displacement_exponent, check_dyadic_convergence,
    check_inverse_mass_integral, check_lil_pathwise, check_martingale, check_mass_bound,
    check_mass_exponent, check_moment_growth, check_qv_identity, check_qv_two_particle,
    check_rescaling, check_two_particle, CheckReport, TwoParticleSpec, Verdict,
};

#[derive(Debug, Clone, Copy)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Reduce replicate counts roughly tenfold for a fast sanity pass.
    pub quick: bool,
}

impl SuiteConfig {
    fn n(&self, full: u64) -> u64 {
        if self.quick {
            (full / 10).max(1000)
        } else {
            full
        }
    }
}

pub fn available_suites() -> &'static [&'static str] {
    &[
        "two_particle",
        "mass_bound",
        "envelopes",
        "mass_exponent",
        "displacement_exponent",
        "qv",
        "martingale",
        "center_of_mass",
        "rescaling",
        "dyadic",
        "lil",
        "all",
    ]
}

fn uniform_level(level: u32) -> StepProfile {
    TabulatedProfile::uniform(1.0).dyadic_step_approximation(level)
}

fn power_level(alpha: f64, u0: f64, level: u32) -> StepProfile {
    TabulatedProfile::power(alpha, u0, 1.0, 1.0)
        .unwrap()
        .dyadic_step_approximation(level)
        .canonicalize()
}

/// The 20 bound-check triples: u0 and side vary, r spans [0.02, 0.2] and t
/// spans [1e-4, 1e-2].
pub fn mass_bound_cases() -> Vec<BoundCase> {
    let mut cases = Vec::new();
    for &t in &[1e-4, 1e-3, 1e-2] {
        for &r in &[0.02, 0.05, 0.1] {
            cases.push(BoundCase { u0: 0.5, r, t, side: Side::Right });
        }
    }
    for &t in &[1e-4, 1e-2] {
        cases.push(BoundCase { u0: 0.5, r: 0.2, t, side: Side::Right });
        cases.push(BoundCase { u0: 0.5, r: 0.1, t, side: Side::Left });
        cases.push(BoundCase { u0: 0.3, r: 0.05, t, side: Side::Right });
        cases.push(BoundCase { u0: 0.7, r: 0.05, t, side: Side::Left });
    }
    for &t in &[1e-3, 1e-2] {
        cases.push(BoundCase { u0: 0.25, r: 0.02, t, side: Side::Right });
    }
    cases.push(BoundCase { u0: 0.75, r: 0.02, t: 1e-4, side: Side::Left });
    assert_eq!(cases.len(), 20);
    cases
}

/// Invert a report's verdict for deliberately broken inputs (negative
/// controls): the control passes exactly when the underlying check fails.
fn negative_control(mut report: CheckReport, what: &str) -> CheckReport {
    report.name = format!("{}_negative_control", report.name);
    report.verdict = match report.verdict {
        Verdict::Fail => Verdict::Pass,
        Verdict::Pass => Verdict::Fail,
        Verdict::Inconclusive => Verdict::Inconclusive,
    };
    report.notes.push(format!(
        "negative control ({what}): the underlying check is expected to fail"
    ));
    report
}

/// Run one named suite (or `all`).
pub fn run_suite(name: &str, cfg: &SuiteConfig) -> Result<Vec<CheckReport>, SimError> {
    let seed = cfg.seed;
    let mut reports = Vec::new();
    match name {
        "two_particle" => {
            let spec = TwoParticleSpec::new(0.5, 0.5, 0.1);
            reports.push(check_two_particle(spec, 0.01, 1e-6, cfg.n(100_000), seed)?);
            let grid = geometric_grid(5e-2, 0.6, 8);
            reports.push(check_qv_two_particle(spec, &grid, 1e-5, cfg.n(10_000), seed)?);
        }
        "mass_bound" => {
            let profile = uniform_level(10);
            let stepper = StepperConfig::new(1e-4);
            reports.push(check_mass_bound(
                &profile,
                &mass_bound_cases(),
                cfg.n(100_000),
                seed,
                0.99,
                &stepper,
            )?);
            // Flat-profile control triple: the event is impossible.
            let flat =
                StepProfile::new(vec![0.0, 0.2, 0.8, 1.0], vec![0.0, 1.0, 2.0]).unwrap();
            reports.push(check_mass_bound(
                &flat,
                &[BoundCase { u0: 0.35, r: 0.3, t: 5e-3, side: Side::Right }],
                cfg.n(100_000),
                seed,
                0.99,
                &stepper,
            )?);
        }
        "envelopes" => {
            let profile = uniform_level(8);
            let stepper = StepperConfig::new(1e-4);
            let grid = geometric_grid(1e-2, 0.7, 12);
            reports.push(check_inverse_mass_integral(
                &profile,
                1.0,
                &grid,
                cfg.n(10_000),
                seed,
                &stepper,
            )?);
            reports.push(check_moment_growth(
                &profile,
                0.0,
                2e-2,
                cfg.n(10_000),
                seed,
                &stepper,
            )?);
        }
        "mass_exponent" => {
            let stepper = StepperConfig::new(1e-4);
            let grid = geometric_grid(1e-2, 0.7, 14);
            reports.push(check_mass_exponent(
                &uniform_level(10),
                1.0,
                0.5,
                &grid,
                cfg.n(10_000),
                seed,
                &stepper,
                0.06,
            )?);
            reports.push(check_mass_exponent(
                &power_level(2.0, 0.5, 10),
                2.0,
                0.5,
                &grid,
                cfg.n(10_000),
                seed,
                &stepper,
                0.06,
            )?);
        }
        "displacement_exponent" => {
            let stepper = StepperConfig::new(1e-4);
            let grid = geometric_grid(1e-2, 0.7, 14);
            reports.push(check_displacement_exponent(
                &uniform_level(10),
                1.0,
                0.5,
                &grid,
                cfg.n(10_000),
                seed,
                &stepper,
                0.06,
                None,
            )?);
            // Free-diffusion control: Brownian scaling gives slope 1/2.
            let single = StepProfile::new(vec![0.0, 1.0], vec![0.0]).unwrap();
            reports.push(check_displacement_exponent(
                &single,
                1.0,
                0.5,
                &grid,
                cfg.n(10_000),
                seed,
                &StepperConfig::new(1e-5),
                0.06,
                Some((0.5, 0.02)),
            )?);
        }
        "qv" => {
            let profile = uniform_level(8);
            let stepper = StepperConfig::new(1e-4);
            let grid = geometric_grid(1e-2, 0.7, 7);
            let h = PiecewiseConstant::indicator(0.0, 0.25, 1.0);
            reports.push(check_qv_identity(
                &profile,
                0.5,
                &grid,
                cfg.n(10_000),
                seed,
                &stepper,
                Some(h),
            )?);
        }
        "martingale" => {
            let profile = uniform_level(6);
            let stepper = StepperConfig::new(1e-4);
            reports.push(check_martingale(
                &profile,
                &[0.35, 0.65],
                &[(5e-3, 2e-2), (2e-2, 8e-2)],
                cfg.n(10_000),
                seed,
                &stepper,
            )?);
        }
        "center_of_mass" => {
            reports.push(check_center_of_mass(
                &uniform_level(5),
                0.1,
                cfg.n(10_000),
                seed,
                &StepperConfig::new(1e-3),
            )?);
        }
        "rescaling" => {
            let grid = geometric_grid(1e-3, 0.56234, 5); // spans [1e-4, 1e-3]
            reports.push(check_rescaling(
                1.0,
                0.5,
                9,
                0.5,
                &grid,
                &[0.0, 0.15],
                cfg.n(4_000),
                seed,
                &StepperConfig::new(1e-4),
            )?);
        }
        "dyadic" => {
            let g = TabulatedProfile::power(2.0, 0.0, 1.0, 1.0).unwrap();
            reports.push(check_dyadic_convergence(
                &g,
                &[6, 7, 8, 9, 10],
                0.5,
                1e-2,
                cfg.n(4_000),
                seed,
                &StepperConfig::new(1e-4),
            )?);
        }
        "lil" => {
            let profile = uniform_level(8);
            let stepper = StepperConfig::new(1e-5);
            reports.push(check_lil_pathwise(
                &profile,
                1.0,
                0.5,
                0.7,
                (16, 34),
                0.5,
                cfg.n(4_000),
                seed,
                &stepper,
                LilVariant::UpperVanishes,
                None,
                0.95,
            )?);
            reports.push(check_lil_pathwise(
                &profile,
                1.0,
                0.5,
                0.7,
                (16, 34),
                0.5,
                cfg.n(4_000),
                seed,
                &stepper,
                LilVariant::LowerDiverges,
                None,
                0.95,
            )?);
            // Wrong normalization (exponent zeroed): the divergence test must
            // reject it.
            let broken = check_lil_pathwise(
                &profile,
                1.0,
                0.5,
                0.7,
                (16, 34),
                0.5,
                cfg.n(4_000),
                seed,
                &stepper,
                LilVariant::LowerDiverges,
                Some(0.0),
                0.95,
            )?;
            reports.push(negative_control(broken, "normalization exponent replaced by 0"));
        }
        "all" => {
            for suite in available_suites() {
                if *suite != "all" {
                    reports.extend(run_suite(suite, cfg)?);
                }
            }
        }
        other => {
            return Err(SimError::InvalidConfig(format!(
                "unknown suite '{other}'; known: {}",
                available_suites().join(", ")
            )));
        }
    }
    Ok(reports)
}
