use aeps::geom::Vec3;
use aeps::metrics::{complexity_of, power_of, safety_of, AgilityReport, NormRefs, PowerTerm};
use aeps::planner::{aggressiveness, enforce_envelope, Envelope, Mode};
use aeps::plant::{allocate, step, PlantSpec, PlantState};
use aeps::powermodel::{instant_demand, DemandParams};
use aeps::trajectory::Trajectory;
use proptest::prelude::*;

fn soc() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(1.0), 0.0..=1.0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn allocation_respects_caps_and_balance(load in 0.0..100.0f64, fc in soc(), batt in soc(), uc in soc()) {
        let spec = PlantSpec::<f64>::paper_defaults();
        let s = PlantState::new(spec, fc, batt, uc).unwrap();
        let d = allocate(load, &s, 0.1).unwrap();
        prop_assert!(d.p_fc_batt <= spec.p_max() && d.p_uc <= spec.ultracap.max_output);
        prop_assert!(d.p_uc == 0.0 || d.p_charge == 0.0);
        prop_assert!(d.supplied() <= load);
        prop_assert_eq!(d.brownout, d.supplied() < load);
        let next = step(&s, &d, 0.1).unwrap();
        for x in [next.soc_fc, next.soc_batt, next.soc_uc] {
            prop_assert!((0.0..=1.0).contains(&x));
        }
    }

    #[test]
    fn cell_share_is_monotone_in_load(a in 0.0..100.0f64, b in 0.0..100.0f64, fc in soc(), batt in soc(), uc in soc()) {
        let s = PlantState::new(PlantSpec::<f64>::paper_defaults(), fc, batt, uc).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let dl = allocate(lo, &s, 0.1).unwrap();
        let dh = allocate(hi, &s, 0.1).unwrap();
        prop_assert!(dl.p_fc_batt <= dh.p_fc_batt);
        prop_assert!(!dl.brownout || dh.brownout);
    }

    #[test]
    fn lambda_non_decreasing_in_uc_charge(a in soc(), b in soc(), fc in soc(), batt in soc()) {
        let spec = PlantSpec::<f64>::paper_defaults();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let l = aggressiveness(&PlantState::new(spec, fc, batt, lo).unwrap(), Mode::AgilityEnhanced);
        let h = aggressiveness(&PlantState::new(spec, fc, batt, hi).unwrap(), Mode::AgilityEnhanced);
        prop_assert!(l <= h);
        prop_assert!((0.0..=1.0).contains(&l));
        prop_assert_eq!(aggressiveness(&PlantState::new(spec, fc, batt, hi).unwrap(), Mode::Normal), 0.0);
    }

    #[test]
    fn demand_monotone_in_each_input(
        base in 0.0..50.0f64, c in 0.0..10.0f64, d in 0.0..500.0f64, m in 0.0..10.0f64, bump in 0.0..5.0f64, which in 0usize..4,
    ) {
        let p = DemandParams::<f64>::scaled();
        let mut x = [base, c, d, m];
        let before = instant_demand(x[0], x[1], x[2], x[3], &p);
        x[which] += bump;
        prop_assert!(instant_demand(x[0], x[1], x[2], x[3], &p) >= before);
    }

    #[test]
    fn statistics_ignore_step_order(values in prop::collection::vec(0.0..40.0f64, 1..200), seed in any::<u64>()) {
        let mut shuffled = values.clone();
        // Fisher-Yates with a tiny LCG so the permutation depends only on `seed`.
        let mut state = seed | 1;
        for i in (1..shuffled.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (state >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(safety_of(&values).unwrap(), safety_of(&shuffled).unwrap());
        prop_assert_eq!(complexity_of(&values).unwrap(), complexity_of(&shuffled).unwrap());
        prop_assert_eq!(power_of(&values).unwrap(), power_of(&shuffled).unwrap());
    }

    #[test]
    fn agility_is_component_sum(p in 0.0..60.0f64, c in 0.0..100.0f64, s in 0.0..30.0f64) {
        let r = AgilityReport::new(PowerTerm { max: p, mean: p / 2.0 }, c, s, &NormRefs::default());
        prop_assert_eq!(r.agility, r.power_term + r.complexity + r.safety);
        prop_assert!((r.agility - r.power_term - r.complexity - r.safety).abs() <= 4.0 * f64::EPSILON * r.agility);
    }
}

/// Random-walk trajectory at 0.1 s with per-step speed and heading changes.
fn walk() -> impl Strategy<Value = Trajectory<f64>> {
    prop::collection::vec((0.5..14.0f64, -1.2..1.2f64, -0.3..0.3f64), 10..120).prop_map(|steps| {
        let mut p = Vec3::new(0.0, 0.0, 10.0);
        let mut heading = 0.0f64;
        let mut pts = vec![p];
        for (speed, turn, climb) in steps {
            heading += turn;
            p = p + Vec3::new(heading.cos(), heading.sin(), climb) * (speed * 0.1);
            pts.push(p);
        }
        Trajectory::from_uniform(&pts, 0.0, 0.1).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn envelope_caps_hold(traj in walk()) {
        let env = Envelope::default();
        let (out, _) = enforce_envelope(&traj, &env);
        let vmax = out.speed_series().into_iter().fold(0.0, f64::max);
        prop_assert!(vmax <= env.speed[1] * (1.0 + 1e-6), "speed {vmax}");
        let kmax = out.curvature_series().unwrap().into_iter().fold(0.0, f64::max);
        prop_assert!(kmax <= env.curvature_cap * (1.0 + 1e-6), "curvature {kmax}");
    }
}
