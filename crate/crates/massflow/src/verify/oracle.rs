//! Exact two-particle reference values and the simulator-vs-oracle check.
//!
//! For two clusters with masses `m1, m2` and initial gap `d0`, the gap before
//! coalescence is a Brownian motion with variance rate
//! `sigma^2 = 1/m1 + 1/m2`, so the reflection principle gives the closed-form
//! coalescence law used here.

use serde_json::json;

use crate::profile::StepProfile;
use crate::runner::{run, CountSpec, Observable, RunPlan};
use crate::sim::{SimError, StepperConfig};
use crate::special::{clopper_pearson_lower, clopper_pearson_upper, normal_cdf};

use super::{timed, CheckCase, CheckReport};

/// Two clusters with masses `m1, m2 > 0` separated by `gap > 0`.
#[derive(Debug, Clone, Copy)]
pub struct TwoParticleSpec {
    pub m1: f64,
    pub m2: f64,
    pub gap: f64,
}

impl TwoParticleSpec {
    pub fn new(m1: f64, m2: f64, gap: f64) -> Self {
        assert!(m1 > 0.0 && m2 > 0.0 && gap > 0.0);
        Self { m1, m2, gap }
    }

    /// Variance rate of the gap process.
    pub fn sigma_sq(&self) -> f64 {
        1.0 / self.m1 + 1.0 / self.m2
    }

    /// `P{tau <= t} = 2 Phi(-gap / (sigma sqrt(t)))`.
    pub fn coalescence_probability(&self, t: f64) -> f64 {
        assert!(t > 0.0);
        2.0 * normal_cdf(-self.gap / (self.sigma_sq() * t).sqrt())
    }

    /// Expected mass seen from the first particle: `m1 + m2 P{tau <= t}`.
    pub fn expected_mass_first(&self, t: f64) -> f64 {
        self.m1 + self.m2 * self.coalescence_probability(t)
    }

    /// `E[1/m(u0, s)]` for `u0` inside the first block.
    pub fn expected_inverse_mass_first(&self, s: f64) -> f64 {
        let p = self.coalescence_probability(s);
        (1.0 - p) / self.m1 + p / (self.m1 + self.m2)
    }

    /// `Var X(u0, t) = int_0^t E[1/m(u0, s)] ds`, by composite Simpson
    /// quadrature of the closed-form integrand (the integrand is flat at 0
    /// since P vanishes faster than any power).
    pub fn variance_first(&self, t: f64) -> f64 {
        let panels = 4000;
        let h = t / panels as f64;
        let f = |s: f64| {
            if s <= 0.0 {
                1.0 / self.m1
            } else {
                self.expected_inverse_mass_first(s)
            }
        };
        let mut acc = f(0.0) + f(t);
        for i in 1..panels {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(i as f64 * h);
        }
        acc * h / 3.0
    }

    /// The simulable profile: block `[0, m1)` at position 0, block
    /// `[m1, m1+m2]` at position `gap`.
    pub fn profile(&self) -> StepProfile {
        StepProfile::new(vec![0.0, self.m1, self.m1 + self.m2], vec![0.0, self.gap]).unwrap()
    }
}

/// Simulate the two-particle system with a fixed step and compare the
/// empirical coalescence probability, expected mass and the position
/// martingale against the reflection-principle values.
pub fn check_two_particle(
    spec: TwoParticleSpec,
    t: f64,
    dt: f64,
    replicates: u64,
    seed: u64,
) -> Result<CheckReport, SimError> {
    let profile = spec.profile();
    let u0 = 0.5 * spec.m1;
    let config = StepperConfig::new(dt).fixed_step().with_save_times(vec![t]);
    let mut plan = RunPlan::new(profile, config, seed, replicates)
        .observe(Observable::MassAt(u0))
        .observe(Observable::Displacement(u0));
    // Mass is m1 until the merge, m1+m2 after; count the un-merged replicates.
    plan.counters.push(CountSpec {
        observable: 0,
        time_index: 0,
        below: spec.m1 + 0.5 * spec.m2,
    });

    let (out, wall) = timed(|| run(&plan));
    let out = out?;

    let not_merged = out.counter(0);
    let k = not_merged.n - not_merged.hits;
    let p_hat = k as f64 / not_merged.n as f64;
    let p_oracle = spec.coalescence_probability(t);
    let p_ci = (
        clopper_pearson_lower(k, not_merged.n, 0.9975),
        clopper_pearson_upper(k, not_merged.n, 0.9975),
    );

    let mass = out.pooled(0);
    let mass_cell = mass.cell(0);
    let m_oracle = spec.expected_mass_first(t);
    let m_ci = mass_cell.mean_ci(0.995);

    let disp = out.pooled(1);
    let disp_cell = disp.cell(0);
    let x_ci = disp_cell.mean_ci(0.995);

    let cases = vec![
        CheckCase::new(
            format!("P{{coalesced by t={t}}}"),
            p_hat,
            p_oracle,
            p_ci,
            p_ci.0 <= p_oracle && p_oracle <= p_ci.1,
        ),
        CheckCase::new(
            format!("E m(u0, t={t})"),
            mass_cell.mean(),
            m_oracle,
            m_ci,
            m_ci.0 <= m_oracle && m_oracle <= m_ci.1,
        ),
        CheckCase::new(
            "E[X(u0,t) - x1(0)] (martingale)",
            disp_cell.mean(),
            0.0,
            x_ci,
            x_ci.0 <= 0.0 && 0.0 <= x_ci.1,
        ),
    ];
    Ok(CheckReport::from_cases(
        "two_particle",
        json!({
            "m1": spec.m1, "m2": spec.m2, "gap": spec.gap,
            "t": t, "dt": dt, "u0": u0,
        }),
        replicates,
        wall,
        cases,
        vec![format!(
            "oracle: P = 2 Phi(-gap/(sigma sqrt(t))) = {p_oracle:.6}, E m = {m_oracle:.6}"
        )],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_reference_values() {
        // m1 = m2 = 0.5, gap 0.1, t = 0.01: sigma^2 = 4, so
        // P = 2 Phi(-0.5) = 0.61708 and E m = 0.80854.
        let spec = TwoParticleSpec::new(0.5, 0.5, 0.1);
        let p = spec.coalescence_probability(0.01);
        assert!((p - 0.617_075_077_451_974).abs() < 1e-12);
        let m = spec.expected_mass_first(0.01);
        assert!((m - 0.808_537_538_725_987).abs() < 1e-12);
    }

    #[test]
    fn oracle_limits() {
        let far = TwoParticleSpec::new(0.5, 0.5, 1e9);
        assert!(far.coalescence_probability(1.0) < 1e-12);
        assert!((far.expected_mass_first(1.0) - 0.5).abs() < 1e-12);

        let spec = TwoParticleSpec::new(0.5, 0.5, 0.1);
        assert!(spec.coalescence_probability(1e12) > 0.9999);
        assert!((spec.expected_mass_first(1e12) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn oracle_monotonicity() {
        let spec = TwoParticleSpec::new(0.3, 0.7, 0.05);
        let mut last = 0.0;
        for &t in &[1e-4, 1e-3, 1e-2, 1e-1, 1.0] {
            let p = spec.coalescence_probability(t);
            assert!(p > last);
            last = p;
            let m = spec.expected_mass_first(t);
            assert!(m >= spec.m1 && m <= spec.m1 + spec.m2);
        }
        // Decreasing in the initial gap.
        let tight = TwoParticleSpec::new(0.3, 0.7, 0.01);
        assert!(tight.coalescence_probability(0.01) > spec.coalescence_probability(0.01));
    }

    #[test]
    fn variance_quadrature_bounds() {
        // 1/(m1+m2) t <= Var <= (1/m1) t, and exact in the never-merge limit.
        let spec = TwoParticleSpec::new(0.5, 0.5, 0.1);
        let t = 0.02;
        let v = spec.variance_first(t);
        assert!(v > t && v < 2.0 * t, "v = {v}");
        let far = TwoParticleSpec::new(0.5, 0.5, 1e9);
        assert!((far.variance_first(t) - 2.0 * t).abs() < 1e-12);
    }

    #[test]
    fn simulated_two_particle_matches_oracle_smoke() {
        // Small-N smoke test of the full check; the acceptance suite runs the
        // pinned large-N version.
        let spec = TwoParticleSpec::new(0.5, 0.5, 0.1);
        let report = check_two_particle(spec, 0.01, 1e-5, 3000, 13).unwrap();
        assert!(
            report.passed(),
            "two-particle check failed:\n{}",
            report.render_text()
        );
    }
}
