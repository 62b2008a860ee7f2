use proptest::prelude::*;

use vrmerge_core::lateral::{PathGeometry, PathSegment};
use vrmerge_core::sim::{self, scenarios, Event, LateralSetup, LeaderProfile, ScenarioConfig};
use vrmerge_core::WeightScheme;

fn straight_lateral(dt: f64) -> ScenarioConfig {
    let mut s = ScenarioConfig::new(vec![], vec![0.0]);
    s.leader = LeaderProfile::Constant;
    s.duration = 20.0;
    s.dt = dt;
    s.control_period = dt;
    s.merge_distance = 500.0;
    let path = PathGeometry {
        start: Default::default(),
        segments: vec![PathSegment { length: 1000.0, curvature: 0.0 }],
        merge_s: 500.0,
    };
    s.lateral = Some(LateralSetup::new(path));
    s
}

#[test]
fn straight_segment_lateral_convergence() {
    let trace = sim::run(&straight_lateral(0.001)).unwrap();
    let lat = trace.vehicles[0].lateral.as_ref().unwrap();
    let k15 = trace.sample_at(15.0);
    assert!(lat.r[k15].abs() < 0.02);
    assert!(lat.dtheta[k15].abs() < 0.1f64.to_radians());
    assert!(lat.r.iter().all(|r| r.abs() <= 2.0));
    assert!(lat.dtheta.iter().all(|d| d.abs() <= 2.0 * 5f64.to_radians()));
}

#[test]
fn arc_length_advances_with_longitudinal_speed() {
    // s' = v~ cos(dtheta) must equal the longitudinal speed.
    let s = scenarios::single_ramp_lateral();
    let trace = sim::run(&s).unwrap();
    let veh = &trace.vehicles[0];
    let lat = veh.lateral.as_ref().unwrap();
    for k in 0..trace.len() - 1 {
        assert!((lat.s[k + 1] - lat.s[k] - veh.v[k] * s.dt).abs() < 1e-12);
        assert!(lat.s[k + 1] >= lat.s[k]);
    }
}

#[test]
fn lateral_trajectory_is_first_order_in_dt() {
    let coarse = sim::run(&straight_lateral(0.002)).unwrap();
    let fine = sim::run(&straight_lateral(0.001)).unwrap();
    let finer = sim::run(&straight_lateral(0.0005)).unwrap();
    let r_at = |t: &sim::SimulationTrace, time: f64| t.vehicles[0].lateral.as_ref().unwrap().r[t.sample_at(time)];
    let d1 = (r_at(&coarse, 2.0) - r_at(&fine, 2.0)).abs();
    let d2 = (r_at(&fine, 2.0) - r_at(&finer, 2.0)).abs();
    assert!(d1 < 1e-2);
    let ratio = d1 / d2;
    assert!((1.6..2.4).contains(&ratio), "{ratio}");
}

#[test]
fn curved_ramp_run_respects_small_angle_guard() {
    let mut s = scenarios::curved_ramp();
    s.duration = 40.0;
    let trace = sim::run(&s).unwrap();
    assert!(!trace.collided());
    assert!(!trace.events.iter().any(|e| matches!(e, Event::SmallAngleViolation { .. })));
    let ramp: Vec<_> = trace.vehicles.iter().filter_map(|v| v.lateral.as_ref()).collect();
    assert_eq!(ramp.len(), 5);
    for lat in ramp {
        assert!(lat.px.iter().all(|x| x.is_finite()));
    }
}

#[test]
fn twelve_vehicle_run_settles_at_desired_gap() {
    let mut s = scenarios::twelve_vehicle(WeightScheme::Equal);
    s.leader = LeaderProfile::Constant;
    s.duration = 60.0;
    let trace = sim::run(&s).unwrap();
    let last = trace.len() - 1;
    for w in trace.vehicles.windows(2) {
        let gap = w[0].x[last] - w[1].x[last];
        assert!((gap - 25.0).abs() < 0.1, "{gap}");
    }
}

#[test]
fn repeated_runs_are_bit_identical() {
    let mut s = scenarios::twelve_vehicle(WeightScheme::Geometric);
    s.duration = 10.0;
    assert_eq!(sim::run(&s).unwrap(), sim::run(&s).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn single_lane_chain_settles_within_control_budget(
        gaps in prop::collection::vec(23.0f64..27.0, 1..6),
    ) {
        // A single lane gives every follower exactly one predecessor. Initial
        // gaps stay within 2 m of the 25 m equilibrium.
        let mut positions = vec![0.0];
        for g in &gaps {
            let next = positions[positions.len() - 1] - g;
            positions.push(next);
        }
        let mut s = ScenarioConfig::new(positions, vec![]);
        s.leader = LeaderProfile::Constant;
        s.duration = 30.0;
        s.record_every = 10;
        let trace = sim::run(&s).unwrap();
        prop_assert!(!trace.collided());
        for v in trace.vehicles.iter().skip(1) {
            let t = sim::settle_time(&trace.times, &v.e, 0.1, 0.0, 1.0);
            prop_assert!(t.is_some());
            let travelled = v.x[trace.sample_at(t.unwrap())] - v.x[0];
            prop_assert!(travelled <= 250.0, "travelled {}", travelled);
        }
    }

    #[test]
    fn merge_passages_follow_the_sequence(seed in 0u64..1000) {
        let mut s = ScenarioConfig::new(vec![], vec![]);
        s.vehicles.random = Some(sim::RandomPlacement { mainline: 4, ramp: 3, mean_gap: 20.0, jitter: 10.0, seed });
        s.leader = LeaderProfile::Constant;
        s.merge_distance = 100.0;
        s.duration = 20.0;
        s.record_every = 100;
        let trace = sim::run(&s).unwrap();
        prop_assert!(!trace.collided());
        let order: Vec<usize> = trace
            .events
            .iter()
            .filter_map(|e| match e {
                Event::MergePassage { vehicle, .. } => Some(*vehicle),
                _ => None,
            })
            .collect();
        prop_assert_eq!(order, (0..7).collect::<Vec<_>>());
    }
}
