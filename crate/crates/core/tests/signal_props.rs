use proptest::prelude::*;
use roadchat_core::signal::*;

fn feasible_ratios() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..0.4, 2..=4).prop_filter("Y below limit", |ys| {
        ys.iter().sum::<f64>() < 0.94
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn webster_invariants(ys in feasible_ratios(), lost in 2.0f64..6.0) {
        let input = WebsterInput::from_ratios(&ys, lost);
        let plan = webster_program(&input).unwrap();
        let p = input.params;
        let total: f64 = plan.phases.iter().map(|ph| ph.duration).sum();
        prop_assert!((total - plan.cycle).abs() < 1e-9);
        prop_assert!(plan.effective_greens.iter().all(|g| *g >= p.min_green));
        prop_assert!(plan.cycle >= p.min_cycle);
        let floor = (ys.len() as f64 * (lost + p.min_green)).ceil();
        prop_assert!(plan.cycle <= p.max_cycle.max(floor));
        prop_assert_eq!(plan.cycle, plan.cycle.round());
    }

    #[test]
    fn webster_cycle_is_monotone_in_flow(
        ys in feasible_ratios(),
        which in 0usize..4,
        bump in 0.0f64..0.2,
    ) {
        let i = which % ys.len();
        let mut more = ys.clone();
        more[i] += bump;
        prop_assume!(more.iter().sum::<f64>() < 0.94);
        let a = webster_program(&WebsterInput::from_ratios(&ys, 5.0)).unwrap();
        let b = webster_program(&WebsterInput::from_ratios(&more, 5.0)).unwrap();
        prop_assert!(b.raw_cycle >= a.raw_cycle);
        prop_assert!(b.cycle >= a.cycle);
    }

    #[test]
    fn offsets_stay_in_cycle_and_shift_uniformly(
        distances in prop::collection::vec(1.0f64..2000.0, 1..6),
        speed in 1.0f64..30.0,
        cycle in 20.0f64..120.0,
        shift in -500.0f64..500.0,
    ) {
        let lights: Vec<String> = (0..=distances.len()).map(|i| format!("L{i}")).collect();
        let spec = CorridorSpec { lights, distances, speed };
        let cycles = vec![cycle; spec.lights.len()];
        let base = spec.offsets(&cycles, 0.0).unwrap();
        let moved = spec.offsets(&cycles, shift).unwrap();
        for (a, b) in base.iter().zip(&moved) {
            prop_assert!(*a >= 0.0 && *a < cycle);
            prop_assert!(*b >= 0.0 && *b < cycle);
        }
        // pairwise differences are unchanged modulo the cycle
        for j in 1..base.len() {
            let d0 = (base[j] - base[0]).rem_euclid(cycle);
            let d1 = (moved[j] - moved[0]).rem_euclid(cycle);
            let diff = (d0 - d1).abs();
            prop_assert!(diff < 1e-6 || (cycle - diff) < 1e-6, "{} vs {}", d0, d1);
        }
    }

    #[test]
    fn equally_spaced_lights_form_progression(n in 3usize..7, gap in 50.0f64..800.0, speed in 5.0f64..20.0) {
        let spec = CorridorSpec {
            lights: (0..n).map(|i| format!("L{i}")).collect(),
            distances: vec![gap; n - 1],
            speed,
        };
        let cycle = 70.0;
        let offs = spec.offsets(&vec![cycle; n], 0.0).unwrap();
        let step = (gap / speed).rem_euclid(cycle);
        for j in 1..n {
            let d = (offs[j] - offs[j - 1]).rem_euclid(cycle);
            let diff = (d - step).abs();
            prop_assert!(diff < 1e-6 || (cycle - diff) < 1e-6);
        }
    }
}
