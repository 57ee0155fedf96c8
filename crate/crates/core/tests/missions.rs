use approx::assert_relative_eq;

use omnipipe::kinematics::{CommandVector, RobotGeometry};
use omnipipe::pipenet::{
    load_network, module_path_radii, ElbowRatioMode, PipeNetwork, PipeSegment, TeeExit,
};
use omnipipe::planner::{junction_regions, plan_mission, PlanCursor, PlannerConfig, StepKind};
use omnipipe::sim::{
    drive_sign, run_mission, step, Execution, MissionOutcome, SimConfig, SimEvent, SimState,
    TeeExperiment,
};
use omnipipe::singularity::{failure_probability, sweep_with, SingularityRegion, TeeSweep};

const D: f64 = 160.0;

fn tee_net(exit: TeeExit) -> PipeNetwork {
    PipeNetwork::new(vec![
        PipeSegment::straight(D, 200.0),
        PipeSegment::tee(D, 0.0, exit),
        PipeSegment::straight(D, 200.0),
    ])
    .unwrap()
}

fn mixed_net() -> PipeNetwork {
    PipeNetwork::new(vec![
        PipeSegment::straight(D, 300.0),
        PipeSegment::elbow(D, 90.0, 90.0, 40.0),
        PipeSegment::straight(D, 150.0),
        PipeSegment::tee(D, 25.0, TeeExit::Branch),
        PipeSegment::straight(D, 120.0),
        PipeSegment::tee(D, 0.0, TeeExit::Through),
        PipeSegment::elbow(D, 240.0, 45.0, 200.0),
        PipeSegment::straight(D, 80.0),
    ])
    .unwrap()
}

fn regions(net: &PipeNetwork) -> Vec<Option<SingularityRegion>> {
    junction_regions(net, &RobotGeometry::default(), &TeeSweep::default()).unwrap()
}

fn run(
    net: &PipeNetwork,
    roll_deg: f64,
    planner: PlannerConfig,
    sim: SimConfig,
) -> omnipipe::sim::MissionReport {
    let geom = RobotGeometry::default();
    let regions = regions(net);
    let roll = roll_deg.to_radians();
    let plan = plan_mission(
        net,
        PlanCursor::at_roll(roll),
        &regions,
        &sim.matching_planner(planner),
        &geom,
    )
    .unwrap();
    run_mission(net, &plan, &regions, &geom, &sim, SimState::at_roll(roll)).unwrap()
}

#[test]
fn network_round_trips_through_json() {
    let net = mixed_net();
    let back = load_network(&net.to_json().unwrap()).unwrap();
    assert_eq!(back.segments(), net.segments());
    assert_eq!(back.total_length(), net.total_length());
}

#[test]
fn total_length_is_sum_of_segments() {
    let net = mixed_net();
    let sum: f64 = (0..net.len()).map(|i| net.segment_length(i)).sum();
    assert_relative_eq!(net.total_length(), sum, epsilon = 1e-9);
    assert_relative_eq!(
        net.segment_length(1),
        90.0 * std::f64::consts::FRAC_PI_2,
        epsilon = 1e-12
    );
}

#[test]
fn centerline_is_continuous() {
    let net = mixed_net();
    for i in 1..net.len() {
        let end = net
            .centerline_pose(i - 1, net.segment_length(i - 1))
            .unwrap();
        let start = net.centerline_pose(i, 0.0).unwrap();
        assert!(
            (end.translation.vector - start.translation.vector).norm() < 1e-9,
            "position at {i}"
        );
        let t0 = end.rotation * nalgebra::Vector3::z();
        let t1 = start.rotation * nalgebra::Vector3::z();
        assert!((t0 - t1).norm() < 1e-9, "tangent at {i}");
    }
    assert!(net.centerline_pose(0, 301.0).is_err());
}

#[test]
fn path_radii_sum_is_constant() {
    let elbow = PipeSegment::elbow(D, 90.0, 90.0, 0.0);
    for k in 0..3600 {
        let t = (k as f64 * 0.1).to_radians();
        let fixed = module_path_radii(&elbow, t, ElbowRatioMode::FixedBend).unwrap();
        assert!((fixed.iter().sum::<f64>() - 4.5 * D).abs() < 1e-12);
        let general = module_path_radii(&elbow, t, ElbowRatioMode::Generalized).unwrap();
        assert!((general.iter().sum::<f64>() - 270.0).abs() < 1e-12);
    }
}

#[test]
fn plans_satisfy_step_invariants() {
    let net = mixed_net();
    let geom = RobotGeometry::default();
    let regions = regions(&net);
    let cfg = PlannerConfig::default();
    for k in 0..72 {
        let roll = (k as f64 * 5.0).to_radians();
        let plan = plan_mission(&net, PlanCursor::at_roll(roll), &regions, &cfg, &geom).unwrap();
        let again = plan_mission(&net, PlanCursor::at_roll(roll), &regions, &cfg, &geom).unwrap();
        assert_eq!(plan, again);

        let mut theta5 = roll;
        for s in &plan {
            match s.kind {
                StepKind::HolonomicRotate => theta5 += s.command.theta_dot_4 * s.duration_s,
                StepKind::TurnTee => {
                    let region = regions[s.segment_index].as_ref().unwrap();
                    let turn_roll = net.segments()[s.segment_index].turn_roll().unwrap();
                    assert!(
                        !region.contains(theta5 - turn_roll),
                        "singular tee onset from {k}"
                    );
                }
                StepKind::Drive | StepKind::TurnElbow => {
                    let mean =
                        s.command.drive_rates().iter().sum::<f64>() / 3.0 * geom.lug_radius_mm;
                    assert_relative_eq!(mean.abs(), cfg.straight_speed_mm_s, max_relative = 1e-12);
                }
            }
            if s.kind == StepKind::TurnElbow {
                let seg = &net.segments()[s.segment_index];
                let turn_roll = seg.turn_roll().unwrap();
                let radii = module_path_radii(seg, theta5 - turn_roll, cfg.elbow_mode).unwrap();
                let ratios = s.speed_ratios.unwrap();
                for i in 0..3 {
                    for j in 0..3 {
                        assert_relative_eq!(
                            ratios[i] / ratios[j],
                            radii[i] / radii[j],
                            max_relative = 1e-12
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn straight_only_takes_length_over_speed() {
    let net = PipeNetwork::new(vec![
        PipeSegment::straight(D, 1000.0),
        PipeSegment::straight(D, 234.5),
    ])
    .unwrap();
    let report = run(&net, 17.0, PlannerConfig::default(), SimConfig::default());
    assert_eq!(report.outcome, MissionOutcome::Success);
    assert_relative_eq!(report.final_state.time_s, 12.345, max_relative = 1e-9);
    for r in &report.records {
        assert_relative_eq!(r.theta5, 17f64.to_radians(), epsilon = 1e-15);
    }
}

#[test]
fn planned_tee_missions_always_succeed() {
    for exit in [TeeExit::Branch, TeeExit::Through] {
        let net = tee_net(exit);
        for k in 0..360 {
            let report = run(
                &net,
                k as f64,
                PlannerConfig::default(),
                SimConfig {
                    record: false,
                    ..Default::default()
                },
            );
            assert!(
                report.outcome.is_success(),
                "{exit:?} from {k}°: {:?}",
                report.outcome
            );
        }
    }
    for k in 0..120 {
        let report = run(
            &mixed_net(),
            k as f64 * 3.0,
            PlannerConfig::default(),
            SimConfig::default(),
        );
        assert!(report.outcome.is_success(), "mixed from {}°", k * 3);
    }
}

#[test]
fn singular_start_without_roll_fails() {
    let net = tee_net(TeeExit::Branch);
    let cfg = PlannerConfig {
        holonomic: false,
        ..Default::default()
    };
    let report = run(&net, 30.0, cfg, SimConfig::default());
    assert!(matches!(
        report.outcome,
        MissionOutcome::SingularityFailure {
            segment_index: 1,
            ..
        }
    ));
    assert!(report
        .records
        .last()
        .unwrap()
        .events
        .contains(&SimEvent::SingularityFailure));
    let free = run(&net, 0.0, cfg, SimConfig::default());
    assert!(free.outcome.is_success());
}

#[test]
fn simulation_is_deterministic_and_step_size_robust() {
    let net = mixed_net();
    let a = run(&net, 47.0, PlannerConfig::default(), SimConfig::default());
    let b = run(&net, 47.0, PlannerConfig::default(), SimConfig::default());
    assert_eq!(a.records, b.records);
    assert_eq!(a.final_state, b.final_state);
    let half = run(
        &net,
        47.0,
        PlannerConfig::default(),
        SimConfig {
            dt_s: 0.005,
            ..Default::default()
        },
    );
    let s = |r: &omnipipe::sim::MissionReport| {
        net.segment_start(r.final_state.segment_index) + r.final_state.s_mm
    };
    assert!((s(&a) - s(&half)).abs() <= 1e-9 * s(&a));
    assert_relative_eq!(
        a.final_state.time_s,
        half.final_state.time_s,
        max_relative = 1e-9
    );
}

#[test]
fn drive_reverses_past_half_turn() {
    let net = PipeNetwork::new(vec![PipeSegment::straight(D, 5000.0)]).unwrap();
    let geom = RobotGeometry::default();
    let cfg = SimConfig::default();
    let mut state = SimState {
        s_mm: 1000.0,
        ..SimState::default()
    };
    let forward = CommandVector::new(5.0, 5.0, 5.0, 0.0);

    let (next, _) = step(&state, &forward, 0.1, &net, &geom, &cfg).unwrap();
    assert!(next.s_mm > state.s_mm);

    // roll in place until each module has turned past 180° about its axis
    let roll = CommandVector::new(0.0, 0.0, 0.0, -0.5);
    while state.module_self_rotation[0] <= std::f64::consts::PI + 0.05 {
        state = step(&state, &roll, 0.01, &net, &geom, &cfg).unwrap().0;
    }
    let (next, rec) = step(&state, &forward, 0.1, &net, &geom, &cfg).unwrap();
    assert!(next.s_mm < state.s_mm);
    assert_eq!(rec.drive_signs, [-1; 3]);

    state.module_self_rotation = [std::f64::consts::FRAC_PI_2; 3];
    let (next, rec) = step(&state, &forward, 0.1, &net, &geom, &cfg).unwrap();
    assert_eq!(next.s_mm, state.s_mm);
    assert_eq!(rec.drive_signs, [0; 3]);
}

#[test]
fn drive_sign_is_periodic_and_even() {
    let db = 1f64.to_radians();
    for k in -720..720 {
        let a = (k as f64 * 0.5 + 0.123).to_radians();
        let s = drive_sign(a, db);
        assert_eq!(s, drive_sign(a + std::f64::consts::TAU, db));
        assert_eq!(s, drive_sign(-a, db));
    }
    assert_eq!(drive_sign(185f64.to_radians(), db), -1);
}

#[test]
fn fixed_roll_rate_converges_to_geometric_prediction() {
    let net = tee_net(TeeExit::Branch);
    let exp = TeeExperiment {
        net: &net,
        planner: PlannerConfig::default(),
        sim: SimConfig::default(),
        geom: RobotGeometry::default(),
        sweep: TeeSweep::default(),
    };
    let region = sweep_with(D, &exp.geom, &exp.sweep).unwrap();
    let expected = 1.0 - failure_probability(&region);
    let n = 20_000;
    let mc = exp.monte_carlo(n, 3, false, Execution::Sequential).unwrap();
    let sigma = (expected * (1.0 - expected) / n as f64).sqrt();
    assert!(
        (mc.success_rate - expected).abs() < 4.0 * sigma,
        "{} vs {expected}",
        mc.success_rate
    );
    assert!(mc.ci_low <= mc.success_rate && mc.success_rate <= mc.ci_high);

    let par = exp
        .monte_carlo(2_000, 9, false, Execution::Parallel)
        .unwrap();
    let seq = exp
        .monte_carlo(2_000, 9, false, Execution::Sequential)
        .unwrap();
    assert_eq!(par.successes, seq.successes);
    assert!(exp.monte_carlo(0, 1, false, Execution::Sequential).is_err());

    let grid = exp.grid_sweep(0.5, true, Execution::default()).unwrap();
    assert_eq!(grid.success_rate, 1.0);
}
