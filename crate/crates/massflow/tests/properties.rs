//! Property tests of the structural invariants.

use massflow::estimators::MomentAccumulator;
use massflow::profile::{
    partition_leq, MassFunction, PiecewiseConstant, Side, StepProfile, TabulatedProfile,
};
use massflow::sim::resolve_coalescence;
use proptest::prelude::*;

/// Random non-decreasing step profile on [0, 1].
fn step_profile_strategy() -> impl Strategy<Value = StepProfile> {
    (2usize..12).prop_flat_map(|d| {
        (
            proptest::collection::vec(0.05f64..1.0, d),
            proptest::collection::vec(0.0f64..0.5, d),
        )
            .prop_map(|(widths, gaps)| {
                let total: f64 = widths.iter().sum();
                let mut cuts = vec![0.0];
                for w in &widths {
                    cuts.push(cuts.last().unwrap() + w / total);
                }
                let n = cuts.len();
                cuts[n - 1] = 1.0;
                let mut values = Vec::with_capacity(gaps.len());
                let mut v = -1.0;
                for g in gaps {
                    v += g;
                    values.push(v);
                }
                StepProfile::new(cuts, values).unwrap()
            })
    })
}

fn piecewise_strategy() -> impl Strategy<Value = PiecewiseConstant> {
    (2usize..10).prop_flat_map(|d| {
        (
            proptest::collection::vec(0.05f64..1.0, d),
            proptest::collection::vec(-3.0f64..3.0, d),
        )
            .prop_map(|(widths, values)| {
                let total: f64 = widths.iter().sum();
                let mut cuts = vec![0.0];
                for w in &widths {
                    cuts.push(cuts.last().unwrap() + w / total);
                }
                let n = cuts.len();
                cuts[n - 1] = 1.0;
                PiecewiseConstant::new(cuts, values).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn canonicalize_preserves_integral_and_sorts(p in step_profile_strategy()) {
        let c = p.canonicalize();
        prop_assert!(c.is_canonical());
        prop_assert!((c.integral() - p.integral()).abs() <= 1e-12 * p.integral().abs().max(1.0));
        // Idempotent.
        prop_assert_eq!(c.canonicalize(), c.clone());
        // Same function almost everywhere (check midpoints of original pieces).
        for k in 0..p.pieces() {
            let mid = 0.5 * (p.breakpoints()[k] + p.breakpoints()[k + 1]);
            prop_assert!((c.evaluate(mid) - p.evaluate(mid)).abs() <= 1e-9);
        }
    }

    #[test]
    fn dyadic_contracts_and_nests(alpha in 0.6f64..3.0, center in 0.1f64..0.9, level in 1u32..7) {
        let g = TabulatedProfile::power(alpha, center, 1.0, 1.0).unwrap();
        let coarse = g.dyadic_step_approximation(level);
        let fine = g.dyadic_step_approximation(level + 1);
        prop_assert!((coarse.integral() - g.integral_over(0.0, 1.0)).abs() < 1e-12);
        prop_assert!(coarse.lp_norm(2.0) <= g.lp_norm(2.0) + 1e-12);
        prop_assert!(fine.lp_norm(2.0) >= coarse.lp_norm(2.0) - 1e-12);
        prop_assert!(partition_leq(&fine.partition(), &coarse.partition()));
    }

    #[test]
    fn projection_idempotent_nonexpansive(p in step_profile_strategy(), h in piecewise_strategy()) {
        let proj = p.project(&h);
        let twice = p.project(&proj);
        for (a, b) in proj.values().iter().zip(twice.values()) {
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        }
        prop_assert!(proj.l2_norm() <= h.l2_norm() + 1e-12);
    }

    #[test]
    fn increments_nonnegative_and_additive(
        p in step_profile_strategy(),
        u in 0.05f64..0.5,
        r1 in 0.01f64..0.2,
        r2 in 0.01f64..0.2,
    ) {
        let g1 = p.increment(u, r1, Side::Right).unwrap();
        prop_assert!(g1 >= 0.0);
        let g2 = p.increment(u + r1, r2, Side::Right).unwrap();
        let whole = p.increment(u, r1 + r2, Side::Right).unwrap();
        prop_assert!((g1 + g2 - whole).abs() <= 1e-12 * whole.abs().max(1.0));
    }

    #[test]
    fn pava_invariants(
        positions in proptest::collection::vec(-5.0f64..5.0, 1..40),
        raw_masses in proptest::collection::vec(0.01f64..2.0, 1..40),
    ) {
        let n = positions.len().min(raw_masses.len());
        let mut pos = positions[..n].to_vec();
        let mut mass = raw_masses[..n].to_vec();
        let mut lo: Vec<u32> = (0..n as u32).collect();
        let mut hi = lo.clone();
        let total_before: f64 = mass.iter().sum();
        let com_before: f64 = pos.iter().zip(&mass).map(|(x, m)| x * m).sum();

        resolve_coalescence(&mut pos, &mut mass, &mut lo, &mut hi);

        prop_assert!(pos.windows(2).all(|w| w[0] < w[1]));
        let total_after: f64 = mass.iter().sum();
        prop_assert!((total_after - total_before).abs() <= 1e-12 * total_before);
        let com_after: f64 = pos.iter().zip(&mass).map(|(x, m)| x * m).sum();
        prop_assert!((com_after - com_before).abs() <= 1e-10 * com_before.abs().max(1.0));
        // Blocks stay contiguous and ordered.
        prop_assert_eq!(lo[0], 0);
        prop_assert_eq!(*hi.last().unwrap() as usize, n - 1);
        for k in 1..lo.len() {
            prop_assert_eq!(lo[k], hi[k - 1] + 1);
        }
    }

    #[test]
    fn accumulator_merge_is_order_free(
        xs in proptest::collection::vec(-10.0f64..10.0, 8..120),
        split in 1usize..7,
    ) {
        let chunks: Vec<&[f64]> = xs.chunks(xs.len() / split + 1).collect();
        let accs: Vec<MomentAccumulator> = chunks
            .iter()
            .map(|c| {
                let mut a = MomentAccumulator::new();
                c.iter().for_each(|&x| a.push(x));
                a
            })
            .collect();
        let mut forward = MomentAccumulator::new();
        accs.iter().for_each(|a| forward.merge(a));
        let mut backward = MomentAccumulator::new();
        accs.iter().rev().for_each(|a| backward.merge(a));
        prop_assert_eq!(forward.count(), backward.count());
        prop_assert!((forward.mean() - backward.mean()).abs() <= 1e-12 * forward.mean().abs().max(1.0));
        prop_assert!((forward.variance() - backward.variance()).abs() <= 1e-10 * forward.variance().max(1e-12));
    }

    #[test]
    fn cadlag_modification_idempotent(d in 2usize..8) {
        let us: Vec<f64> = (0..d).map(|i| i as f64 / (d - 1) as f64).collect();
        let values: Vec<f64> = (0..d).map(|i| (i * i) as f64).collect();
        let g = TabulatedProfile::from_samples(us, values, massflow::profile::Interpolation::StepLeft).unwrap();
        let once = g.cadlag_modification();
        let twice = once.cadlag_modification();
        prop_assert_eq!(&once, &twice);
        // Agrees with the input at continuity points (piece interiors).
        for i in 0..d - 1 {
            let mid = 0.5 * (i as f64 + i as f64 + 1.0) / (d - 1) as f64;
            prop_assert!((once.evaluate(mid) - g.evaluate(mid)).abs() <= 1e-12);
        }
    }
}
