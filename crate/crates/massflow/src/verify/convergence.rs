//! Stabilization of the law under dyadic refinement of the initial profile.

use serde_json::json;

use crate::profile::TabulatedProfile;
use crate::runner::{run, Observable, RunPlan};
use crate::sim::{SimError, StepperConfig};
use crate::special::normal_quantile;

use super::{intervals_overlap, timed, CheckCase, CheckReport};

struct LevelStat {
    value: f64,
    se: f64,
}

/// Simulate from the dyadic approximations `g_n` at the given levels and test
/// Cauchy-style stabilization of summary statistics at `(u0, t)`: successive
/// differences must not grow (within noise slack) and the last two levels'
/// confidence intervals must overlap.
pub fn check_dyadic_convergence(
    g: &TabulatedProfile,
    levels: &[u32],
    u0: f64,
    t: f64,
    replicates: u64,
    seed: u64,
    config: &StepperConfig,
) -> Result<CheckReport, SimError> {
    if levels.len() < 3 || !levels.windows(2).all(|w| w[0] < w[1]) {
        return Err(SimError::InvalidConfig(
            "need at least 3 strictly increasing levels".into(),
        ));
    }

    let mut per_stat: Vec<Vec<LevelStat>> = vec![Vec::new(), Vec::new(), Vec::new()];
    let stat_names = ["E m(u0,t)", "Var X(u0,t)", "E cluster count"];
    let mut wall_total = 0.0;
    for (li, &level) in levels.iter().enumerate() {
        let profile = g.dyadic_step_approximation(level).canonicalize();
        let mut cfg = config.clone();
        cfg.save_times = vec![t];
        let plan = RunPlan::new(profile, cfg, seed.wrapping_add(li as u64), replicates)
            .observe(Observable::MassAt(u0))
            .observe(Observable::Displacement(u0))
            .observe(Observable::ClusterCount);
        let (out, wall) = timed(|| run(&plan));
        let out = out?;
        wall_total += wall;
        let mass = out.pooled(0);
        let mass = mass.cell(0);
        per_stat[0].push(LevelStat {
            value: mass.mean(),
            se: mass.se_mean(),
        });
        let disp = out.pooled(1);
        let disp = disp.cell(0);
        per_stat[1].push(LevelStat {
            value: disp.variance(),
            se: disp.se_variance(),
        });
        let count = out.pooled(2);
        let count = count.cell(0);
        per_stat[2].push(LevelStat {
            value: count.mean(),
            se: count.se_mean(),
        });
    }

    let z99 = normal_quantile(0.995);
    let z975 = normal_quantile(0.9875);
    let mut cases = Vec::new();
    for (stat, name) in per_stat.iter().zip(stat_names) {
        let diffs: Vec<(f64, f64)> = stat
            .windows(2)
            .map(|w| {
                let d = (w[1].value - w[0].value).abs();
                let se = (w[0].se * w[0].se + w[1].se * w[1].se).sqrt();
                (d, se)
            })
            .collect();
        for (k, pair) in diffs.windows(2).enumerate() {
            let (d0, se0) = pair[0];
            let (d1, se1) = pair[1];
            // Differences may not grow beyond noise slack.
            let slack = z99 * (se0 + se1);
            cases.push(CheckCase::new(
                format!(
                    "{name}: |D(L{}->L{})| <= |D(L{}->L{})| + slack",
                    levels[k + 1],
                    levels[k + 2],
                    levels[k],
                    levels[k + 1]
                ),
                d1,
                d0 + slack,
                (d1 - z99 * se1, d1 + z99 * se1),
                d1 <= d0 + slack,
            ));
        }
        let last = &stat[stat.len() - 1];
        let prev = &stat[stat.len() - 2];
        let ci_last = (last.value - z975 * last.se, last.value + z975 * last.se);
        let ci_prev = (prev.value - z975 * prev.se, prev.value + z975 * prev.se);
        cases.push(CheckCase::new(
            format!(
                "{name}: levels L{} and L{} agree",
                levels[levels.len() - 2],
                levels[levels.len() - 1]
            ),
            last.value,
            prev.value,
            ci_last,
            intervals_overlap(ci_last, ci_prev),
        ));
    }

    let notes = per_stat
        .iter()
        .zip(stat_names)
        .map(|(stat, name)| {
            let values: Vec<String> = stat.iter().map(|s| format!("{:.5}", s.value)).collect();
            format!("{name} by level: {}", values.join(" -> "))
        })
        .collect();
    Ok(CheckReport::from_cases(
        "dyadic_convergence",
        json!({"levels": levels, "u0": u0, "t": t, "replicates": replicates}),
        replicates,
        wall_total,
        cases,
        notes,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::Interpolation;

    #[test]
    fn step_input_has_zero_differences() {
        // g already constant on level-2 cells: deeper conditioning changes
        // nothing, so all levels simulate the same system.
        let g = TabulatedProfile::from_samples(
            vec![0.0, 0.25, 0.5, 0.75, 1.0],
            vec![0.0, 1.0, 2.0, 3.0, 3.0],
            Interpolation::StepRight,
        )
        .unwrap();
        let cfg = StepperConfig::new(1e-4);
        let report =
            check_dyadic_convergence(&g, &[2, 3, 4], 0.4, 5e-3, 400, 61, &cfg).unwrap();
        assert!(report.passed(), "{}", report.render_text());
    }

    #[test]
    fn square_profile_stabilizes_smoke() {
        let g = TabulatedProfile::power(2.0, 0.0, 1.0, 1.0).unwrap();
        let cfg = StepperConfig::new(1e-4);
        let report =
            check_dyadic_convergence(&g, &[4, 5, 6, 7], 0.5, 1e-2, 1200, 63, &cfg).unwrap();
        assert!(report.passed(), "{}", report.render_text());
    }

    #[test]
    fn needs_three_levels() {
        let g = TabulatedProfile::uniform(1.0);
        let cfg = StepperConfig::new(1e-4);
        assert!(check_dyadic_convergence(&g, &[4, 5], 0.5, 1e-2, 100, 1, &cfg).is_err());
    }
}
