use proptest::prelude::*;

use flatlab::haar::{haar_rotation, SamplerConfig};
use flatlab::interlace::{build_bordered, fan_pall_border, jacobian_j, log_jacobian_j, InterlacingPair};
use flatlab::linalg::sym_eigen;
use flatlab::mc::{radius_rescale_check, scaling_monotonicity_check};
use flatlab::rearrange::{
    equimeasurability_defect, hl_inequality_check, inv_sqrt_pair_integral, lemma_1dsmall_check, monotone_rearrange,
    StepFunction,
};
use flatlab::spectrum::{a_n, classify_regime, l_n, log_prime, tilde_beta, trace_reduce, Spectrum};

fn gaps_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..10.0, n - 1)
}

fn from_gaps(g: &[f64], scale: f64) -> Spectrum {
    let mut v = vec![0.0];
    for d in g {
        v.push(v.last().unwrap() + d * scale);
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    Spectrum::new(v.iter().map(|x| x - mean).collect()).unwrap()
}

fn step_strategy() -> impl Strategy<Value = StepFunction> {
    (1usize..8)
        .prop_flat_map(|k| (prop::collection::vec(0u32..64, k + 1), prop::collection::vec(0u32..16, k)))
        .prop_map(|(mut ticks, vals)| {
            ticks.sort();
            ticks.dedup();
            let bps: Vec<f64> = ticks.iter().map(|t| *t as f64 / 8.0 - 4.0).collect();
            let m = bps.len().saturating_sub(1);
            if m == 0 {
                return StepFunction::zero();
            }
            StepFunction::new(bps, vals[..m].iter().map(|v| *v as f64 / 4.0).collect()).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn regime_is_scale_invariant(g in gaps_strategy(5), t in 0.01f64..100.0) {
        let s = from_gaps(&g, 1.0);
        let a = classify_regime(&s).unwrap();
        let b = classify_regime(&s.scaled(t).unwrap()).unwrap();
        prop_assert_eq!(a.kind, b.kind);
        prop_assert_eq!(a.i, b.i);
    }

    #[test]
    fn density_side_invariants(g in gaps_strategy(4), t in 1.0f64..1e4) {
        let s = from_gaps(&g, t);
        prop_assert!(l_n(&s) >= 1.0 - 1e-12);
        prop_assert!(tilde_beta(&s) >= 1.0);
        prop_assert!(a_n(&s) > 0.0);
        let back = s.negated();
        prop_assert!((l_n(&back) - l_n(&s)).abs() <= 1e-12 * l_n(&s));
        prop_assert!((tilde_beta(&back) - tilde_beta(&s)).abs() <= 1e-12 * tilde_beta(&s));
    }

    #[test]
    fn log_prime_is_increasing(x in 0.0f64..1e12, dx in 1e-6f64..1e6) {
        prop_assert!(log_prime(x + dx).unwrap() > log_prime(x).unwrap());
    }

    #[test]
    fn trace_reduce_removes_the_trace(v in prop::collection::vec(-50.0f64..50.0, 3..6)) {
        let s = Spectrum::new(v).unwrap();
        if let Some(r) = trace_reduce(&s) {
            prop_assert!(r.is_tracefree());
            prop_assert_eq!(r.dim(), s.dim());
        }
    }

    #[test]
    fn haar_rotations_are_special_orthogonal(seed in any::<u64>(), index in any::<u64>(), n in 2usize..7) {
        let k = haar_rotation(&SamplerConfig::new(seed, n), index).unwrap();
        prop_assert!(k.matrix().orthogonality_defect() < 1e-12);
        prop_assert!((k.matrix().det() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fan_pall_round_trip(pts in prop::collection::btree_set(-1000i32..1000, 7), n in 3usize..5) {
        let p: Vec<f64> = pts.iter().take(2 * n - 1).map(|x| *x as f64 / 7.0).collect();
        let lam: Vec<f64> = p.iter().step_by(2).copied().collect();
        let mu: Vec<f64> = p.iter().skip(1).step_by(2).copied().collect();
        let pair = InterlacingPair::new(Spectrum::new(lam.clone()).unwrap(), Spectrum::new(mu.clone()).unwrap()).unwrap();
        let x = build_bordered(pair.mu(), &fan_pall_border(&pair)).unwrap();
        let scale = 1.0 + pair.lambda().norm();
        for (a, b) in sym_eigen(&x).unwrap().values.iter().zip(&lam) {
            prop_assert!((a - b).abs() < 1e-9 * scale);
        }
        prop_assert!((jacobian_j(&pair).ln() - log_jacobian_j(&pair)).abs() < 1e-9);
    }

    #[test]
    fn rearrangement_is_equimeasurable_and_monotone(f in step_strategy()) {
        let r = monotone_rearrange(&f);
        prop_assert_eq!(equimeasurability_defect(&f, &r), 0.0);
        prop_assert!(r.is_nonincreasing());
        prop_assert_eq!(r.integral(), f.integral());
        prop_assert_eq!(monotone_rearrange(&r), r);
    }

    #[test]
    fn hardy_littlewood(fs in prop::collection::vec(step_strategy(), 2..4)) {
        let rep = hl_inequality_check(&fs).unwrap();
        prop_assert!(rep.holds, "{:?}", rep);
    }

    #[test]
    fn one_d_small_quadrature_matches_closed_form(a in 1e-3f64..10.0, ratio in 1.0f64..1e8) {
        let t = a * ratio;
        let r = lemma_1dsmall_check(a, t).unwrap();
        prop_assert_eq!(r.exact, inv_sqrt_pair_integral(a, t));
        prop_assert!((r.quadrature - r.exact).abs() <= 1e-7 * r.exact);
    }

    #[test]
    fn hit_counts_respect_scaling_and_radius(g in gaps_strategy(3), t in 1.0f64..8.0, r in 0.2f64..4.0, seed in any::<u64>()) {
        let s = from_gaps(&g, 1.0);
        let cfg = SamplerConfig::new(seed, 3);
        prop_assert!(scaling_monotonicity_check(&s, t, 2_000, &cfg).unwrap().dominated());
        prop_assert!(radius_rescale_check(&s, r, 2_000, &cfg).unwrap().identical());
    }
}
