//! Statistical verification of the model's theoretical properties: probability
//! bounds, moment-growth envelopes, martingale and quadratic-variation
//! identities, rescaling invariance, dyadic-approximation stabilization and
//! small-time exponents.
//!
//! Every check runs a Monte Carlo experiment and reduces it to a
//! [`CheckReport`]: per-case observed statistics against theoretical
//! bounds/targets with confidence intervals. A check only fails when a
//! confidence interval excludes the theoretical region; weak evidence is
//! inconclusive, never a silent pass.

mod bounds;
mod convergence;
mod exponents;
mod identity;
mod oracle;
mod rescaling;
mod suite;

pub use bounds::{
    check_inverse_mass_integral, check_mass_bound, check_moment_growth, empirical_mass_cdf,
    lemma_bounds, BoundCase, MassCdfPoint,
};
pub use convergence::check_dyadic_convergence;
pub use exponents::{
    check_displacement_exponent, check_lil_pathwise, check_mass_exponent, LilVariant,
};
pub use identity::{
    check_center_of_mass, check_martingale, check_qv_identity, check_qv_two_particle,
};
pub use oracle::{check_two_particle, TwoParticleSpec};
pub use rescaling::check_rescaling;
pub use suite::{available_suites, mass_bound_cases, run_suite, SuiteConfig};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Pass => write!(f, "PASS"),
            Verdict::Fail => write!(f, "FAIL"),
            Verdict::Inconclusive => write!(f, "INCONCLUSIVE"),
        }
    }
}

/// One comparison inside a check: an observed statistic against a theoretical
/// bound or target, with the interval the verdict was judged on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckCase {
    pub label: String,
    pub observed: f64,
    pub target: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub verdict: Verdict,
}

impl CheckCase {
    pub fn new(
        label: impl Into<String>,
        observed: f64,
        target: f64,
        ci: (f64, f64),
        pass: bool,
    ) -> Self {
        Self {
            label: label.into(),
            observed,
            target,
            ci_lo: ci.0,
            ci_hi: ci.1,
            verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        }
    }

    pub fn inconclusive(label: impl Into<String>, observed: f64, target: f64) -> Self {
        Self {
            label: label.into(),
            observed,
            target,
            ci_lo: f64::NAN,
            ci_hi: f64::NAN,
            verdict: Verdict::Inconclusive,
        }
    }
}

/// Outcome of one verification check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub parameters: serde_json::Value,
    pub verdict: Verdict,
    pub replicates: u64,
    pub wall_time_s: f64,
    pub cases: Vec<CheckCase>,
    pub notes: Vec<String>,
}

impl CheckReport {
    /// Combine case verdicts: any fail fails, any inconclusive (without a
    /// fail) is inconclusive.
    pub fn from_cases(
        name: impl Into<String>,
        parameters: serde_json::Value,
        replicates: u64,
        wall_time_s: f64,
        cases: Vec<CheckCase>,
        notes: Vec<String>,
    ) -> Self {
        let verdict = if cases.iter().any(|c| c.verdict == Verdict::Fail) {
            Verdict::Fail
        } else if cases.iter().any(|c| c.verdict == Verdict::Inconclusive) {
            Verdict::Inconclusive
        } else {
            Verdict::Pass
        };
        Self {
            name: name.into(),
            parameters,
            verdict,
            replicates,
            wall_time_s,
            cases,
            notes,
        }
    }

    pub fn inconclusive(
        name: impl Into<String>,
        parameters: serde_json::Value,
        reason: impl Into<String>,
    ) -> Self {
        Self {
            name: name.into(),
            parameters,
            verdict: Verdict::Inconclusive,
            replicates: 0,
            wall_time_s: 0.0,
            cases: Vec::new(),
            notes: vec![reason.into()],
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// Aligned human-readable table.
    pub fn render_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "== {} [{}]  (N={}, {:.1}s)",
            self.name, self.verdict, self.replicates, self.wall_time_s
        );
        for c in &self.cases {
            let _ = writeln!(
                out,
                "   {:12} {:44} observed={:<13.6} target={:<13.6} ci=[{:.6}, {:.6}]",
                format!("{}", c.verdict),
                c.label,
                c.observed,
                c.target,
                c.ci_lo,
                c.ci_hi
            );
        }
        for n in &self.notes {
            let _ = writeln!(out, "   note: {n}");
        }
        out
    }
}

pub(crate) fn intervals_overlap(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.1 && b.0 <= a.1
}

pub(crate) fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = std::time::Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}
