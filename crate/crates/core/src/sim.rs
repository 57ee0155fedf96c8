//! Deterministic kinematic simulation along a pipe network.
//!
//! The pose is intrinsic: segment index, arc length along the centerline,
//! roll `θ₅` of module 1 and the self-rotation angle of each module. Commands
//! are piecewise constant, so explicit Euler integration is exact per piece.
//!
//! Crawler drive model: a module rotated about its own axis by `α` drives
//! with `sign(cos α)`, and not at all within a deadband of the no-motion line
//! `α ≡ 90° (mod 180°)`. Rolling the robot spins each module about its own
//! axis in the opposite sense; see [`self_rotation_coefficient`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::angle::wrap;
use crate::kinematics::{forward_kinematics, CommandVector, RobotGeometry, TwistVector};
use crate::pipenet::PipeNetwork;
use crate::planner::{
    junction_regions, plan_mission, MissionStep, PlanCursor, PlannerConfig, StepKind,
};
use crate::singularity::{SingularityRegion, TeeSweep};
use crate::{Error, Result};

const TAU: f64 = std::f64::consts::TAU;
const END_TOL_MM: f64 = 1e-6;

/// Crawler drive direction for module self-rotation `alpha` (rad).
pub fn drive_sign(alpha: f64, deadband: f64) -> i8 {
    let folded = wrap(alpha, std::f64::consts::PI);
    if (folded - std::f64::consts::FRAC_PI_2).abs() <= deadband {
        0
    } else if alpha.cos() > 0.0 {
        1
    } else {
        -1
    }
}

/// Module self-rotation per unit robot roll: `−(D/2) / module_outer_radius`
/// times `gain`. The circular module cross-section rolls without slip on the
/// pipe wall while the robot turns about the pipe axis.
pub fn self_rotation_coefficient(diameter_mm: f64, geom: &RobotGeometry, gain: f64) -> f64 {
    -gain * (diameter_mm / 2.0) / geom.module_outer_radius_mm
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub dt_s: f64,
    /// No-motion deadband around 90° module self-rotation, rad.
    pub deadband_rad: f64,
    pub self_rotation_gain: f64,
    /// Keep per-step trajectory records.
    pub record: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt_s: 0.01,
            deadband_rad: 1f64.to_radians(),
            self_rotation_gain: 1.0,
            record: true,
        }
    }
}

impl SimConfig {
    /// Planner settings that model the same crawler as this simulator.
    pub fn matching_planner(&self, base: PlannerConfig) -> PlannerConfig {
        PlannerConfig {
            wobble_deadband_rad: self.deadband_rad,
            self_rotation_gain: self.self_rotation_gain,
            ..base
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimState {
    pub segment_index: usize,
    /// Arc length into the current segment, mm.
    pub s_mm: f64,
    /// Roll of module 1 in the network roll frame, rad in `[0, 2π)`.
    pub theta5: f64,
    /// Cumulative self-rotation of each module, rad, not wrapped.
    pub module_self_rotation: [f64; 3],
    pub time_s: f64,
}

impl SimState {
    pub fn at_roll(theta5: f64) -> Self {
        Self {
            theta5: wrap(theta5, TAU),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimEvent {
    StepStart(StepKind),
    TurnOnset,
    MidTurnSingular,
    SingularityFailure,
    EndOfNetwork,
    StartOfNetwork,
}

impl SimEvent {
    pub fn tag(&self) -> &'static str {
        match self {
            Self::StepStart(kind) => kind.tag(),
            Self::TurnOnset => "turn_onset",
            Self::MidTurnSingular => "mid_turn_singular",
            Self::SingularityFailure => "singularity_failure",
            Self::EndOfNetwork => "end_of_network",
            Self::StartOfNetwork => "start_of_network",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub time_s: f64,
    pub segment_index: usize,
    pub s_mm: f64,
    pub theta5: f64,
    pub command: CommandVector,
    pub twist: TwistVector,
    pub drive_signs: [i8; 3],
    pub singular: bool,
    pub events: Vec<SimEvent>,
}

/// Advances `state` by `dt` under `cmd`. The returned record describes the
/// state at the end of the step.
pub fn step(
    state: &SimState,
    cmd: &CommandVector,
    dt: f64,
    net: &PipeNetwork,
    geom: &RobotGeometry,
    cfg: &SimConfig,
) -> Result<(SimState, TrajectoryRecord)> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "time step must be positive, got {dt}"
        )));
    }
    if !cmd.is_finite() {
        return Err(Error::InvalidArgument(
            "command has non-finite components".into(),
        ));
    }
    let signs = state
        .module_self_rotation
        .map(|a| drive_sign(a, cfg.deadband_rad));
    let effective = CommandVector::new(
        cmd.theta_dot_1 * signs[0] as f64,
        cmd.theta_dot_2 * signs[1] as f64,
        cmd.theta_dot_3 * signs[2] as f64,
        cmd.theta_dot_4,
    );
    let twist = forward_kinematics(&effective, geom);

    let mut events = Vec::new();
    let start = net.segment_start(state.segment_index) + state.s_mm;
    let mut along = start + twist.v_cz * dt;
    let total = net.total_length();
    if along >= total && twist.v_cz > 0.0 {
        along = total;
        events.push(SimEvent::EndOfNetwork);
    } else if along <= 0.0 && twist.v_cz < 0.0 {
        along = 0.0;
        events.push(SimEvent::StartOfNetwork);
    }
    let (segment_index, s_mm) = locate(net, along);

    let diameter = net.segments()[state.segment_index].diameter_mm;
    let alpha_rate =
        self_rotation_coefficient(diameter, geom, cfg.self_rotation_gain) * cmd.theta_dot_4;
    let next = SimState {
        segment_index,
        s_mm,
        theta5: wrap(state.theta5 + cmd.theta_dot_4 * dt, TAU),
        module_self_rotation: state.module_self_rotation.map(|a| a + alpha_rate * dt),
        time_s: state.time_s + dt,
    };
    let record = TrajectoryRecord {
        time_s: next.time_s,
        segment_index,
        s_mm,
        theta5: next.theta5,
        command: *cmd,
        twist,
        drive_signs: signs,
        singular: false,
        events,
    };
    Ok((next, record))
}

fn locate(net: &PipeNetwork, along: f64) -> (usize, f64) {
    let last = net.len() - 1;
    let mut index = 0;
    while index < last && net.segment_start(index + 1) <= along {
        index += 1;
    }
    let s = (along - net.segment_start(index)).clamp(0.0, net.segment_length(index));
    (index, s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum MissionOutcome {
    Success,
    /// A module was in contact loss when the tee turn began.
    SingularityFailure {
        segment_index: usize,
        theta5_deg: f64,
    },
    /// The plan ran out before the end of the network.
    Incomplete {
        remaining_mm: f64,
    },
}

impl MissionOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, Self::Success)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionReport {
    pub outcome: MissionOutcome,
    pub final_state: SimState,
    pub records: Vec<TrajectoryRecord>,
}

/// Summary written next to a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeSummary {
    pub outcome: MissionOutcome,
    pub final_time_s: f64,
    pub final_segment: usize,
    pub final_s_mm: f64,
    pub final_theta5_deg: f64,
    pub steps: usize,
}

impl MissionReport {
    pub fn summary(&self) -> OutcomeSummary {
        OutcomeSummary {
            outcome: self.outcome,
            final_time_s: self.final_state.time_s,
            final_segment: self.final_state.segment_index,
            final_s_mm: self.final_state.s_mm,
            final_theta5_deg: self.final_state.theta5.to_degrees(),
            steps: self.records.len(),
        }
    }
}

fn tee_region<'a>(
    regions: &'a [Option<SingularityRegion>],
    net: &PipeNetwork,
    index: usize,
) -> Option<(&'a SingularityRegion, f64)> {
    let region = regions.get(index)?.as_ref()?;
    let roll = net.segment(index)?.turn_roll()?;
    Some((region, roll))
}

/// Runs `plan` from `initial`. Each step's command is held for its duration,
/// cut into `cfg.dt_s` pieces with a shorter final piece.
pub fn run_mission(
    net: &PipeNetwork,
    plan: &[MissionStep],
    regions: &[Option<SingularityRegion>],
    geom: &RobotGeometry,
    cfg: &SimConfig,
    initial: SimState,
) -> Result<MissionReport> {
    if !(cfg.dt_s.is_finite() && cfg.dt_s > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "dt must be positive, got {}",
            cfg.dt_s
        )));
    }
    if regions.len() != net.len() {
        return Err(Error::MalformedPlan(
            "one region slot per segment required".into(),
        ));
    }
    let mut state = initial;
    let mut records = Vec::new();
    let mut reached_end = false;

    'plan: for (k, mission_step) in plan.iter().enumerate() {
        if !(mission_step.duration_s.is_finite() && mission_step.duration_s >= 0.0) {
            return Err(Error::MalformedPlan(format!(
                "step {k}: bad duration {}",
                mission_step.duration_s
            )));
        }
        if mission_step.segment_index >= net.len() || !mission_step.command.is_finite() {
            return Err(Error::MalformedPlan(format!(
                "step {k}: bad segment or command"
            )));
        }
        let turning_tee = if mission_step.kind == StepKind::TurnTee {
            let (region, roll) = tee_region(regions, net, mission_step.segment_index)
                .ok_or_else(|| Error::MalformedPlan(format!("step {k}: tee turn outside a tee")))?;
            if region.contains(state.theta5 - roll) {
                let outcome = MissionOutcome::SingularityFailure {
                    segment_index: mission_step.segment_index,
                    theta5_deg: wrap(state.theta5 - roll, TAU).to_degrees(),
                };
                if cfg.record {
                    let signs = state
                        .module_self_rotation
                        .map(|a| drive_sign(a, cfg.deadband_rad));
                    records.push(TrajectoryRecord {
                        time_s: state.time_s,
                        segment_index: state.segment_index,
                        s_mm: state.s_mm,
                        theta5: state.theta5,
                        command: mission_step.command,
                        twist: TwistVector::default(),
                        drive_signs: signs,
                        singular: true,
                        events: vec![SimEvent::SingularityFailure],
                    });
                }
                return Ok(MissionReport {
                    outcome,
                    final_state: state,
                    records,
                });
            }
            Some((region, roll))
        } else {
            None
        };

        let full = (mission_step.duration_s / cfg.dt_s + 1e-9).floor() as usize;
        let rest = mission_step.duration_s - full as f64 * cfg.dt_s;
        let pieces = full + usize::from(rest > 1e-12);
        for piece in 0..pieces {
            let dt = if piece < full { cfg.dt_s } else { rest };
            let (next, mut record) = step(&state, &mission_step.command, dt, net, geom, cfg)?;
            state = next;
            if piece == 0 {
                record
                    .events
                    .insert(0, SimEvent::StepStart(mission_step.kind));
                if turning_tee.is_some() {
                    record.events.insert(1, SimEvent::TurnOnset);
                }
            }
            record.singular = match turning_tee {
                Some((region, roll)) => region.contains(state.theta5 - roll),
                None => tee_region(regions, net, state.segment_index)
                    .is_some_and(|(region, roll)| region.contains(state.theta5 - roll)),
            };
            if turning_tee.is_some() && record.singular {
                record.events.push(SimEvent::MidTurnSingular);
            }
            let at_end = record.events.contains(&SimEvent::EndOfNetwork);
            if cfg.record {
                records.push(record);
            }
            if at_end {
                reached_end = true;
                break 'plan;
            }
        }
    }

    let along = net.segment_start(state.segment_index) + state.s_mm;
    let remaining = net.total_length() - along;
    let outcome = if reached_end || remaining <= END_TOL_MM {
        MissionOutcome::Success
    } else {
        MissionOutcome::Incomplete {
            remaining_mm: remaining,
        }
    };
    Ok(MissionReport {
        outcome,
        final_state: state,
        records,
    })
}

/// How Monte-Carlo trials are scheduled. Results do not depend on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Rayon thread pool; falls back to sequential without the `parallel`
    /// feature.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Self::Parallel
        } else {
            Self::Sequential
        }
    }
}

fn count_successes<F>(trials: u64, exec: Execution, trial: F) -> Result<u64>
where
    F: Fn(u64) -> Result<bool> + Sync + Send,
{
    let as_count = |ok: Result<bool>| ok.map(u64::from);
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..trials)
                .into_par_iter()
                .map(|i| as_count(trial(i)))
                .sum()
        }
        _ => (0..trials).map(|i| as_count(trial(i))).sum(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub trials: u64,
    pub successes: u64,
    pub success_rate: f64,
    /// Wilson score interval at 95 %.
    pub ci_low: f64,
    pub ci_high: f64,
    pub with_holonomic: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

const Z95: f64 = 1.959_963_984_540_054;

pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Everything a tee experiment needs besides the initial roll.
#[derive(Debug, Clone)]
pub struct TeeExperiment<'a> {
    pub net: &'a PipeNetwork,
    pub planner: PlannerConfig,
    pub sim: SimConfig,
    pub geom: RobotGeometry,
    pub sweep: TeeSweep,
}

impl TeeExperiment<'_> {
    fn runner(
        &self,
        with_holonomic: bool,
    ) -> Result<impl Fn(f64) -> Result<bool> + Sync + Send + '_> {
        let regions = junction_regions(self.net, &self.geom, &self.sweep)?;
        if !regions.iter().any(Option::is_some) {
            return Err(Error::InvalidArgument("network has no tee".into()));
        }
        let planner = PlannerConfig {
            holonomic: with_holonomic,
            ..self.sim.matching_planner(self.planner)
        };
        let sim = SimConfig {
            record: false,
            ..self.sim
        };
        Ok(move |roll: f64| -> Result<bool> {
            let plan = plan_mission(
                self.net,
                PlanCursor::at_roll(roll),
                &regions,
                &planner,
                &self.geom,
            )?;
            let report = run_mission(
                self.net,
                &plan,
                &regions,
                &self.geom,
                &sim,
                SimState::at_roll(roll),
            )?;
            Ok(report.outcome.is_success())
        })
    }

    /// Samples the initial roll uniformly on `[0°, 120°)`. Trial `i` draws
    /// from its own ChaCha stream, so the result is schedule independent.
    pub fn monte_carlo(
        &self,
        trials: u64,
        seed: u64,
        with_holonomic: bool,
        exec: Execution,
    ) -> Result<MonteCarloSummary> {
        if trials == 0 {
            return Err(Error::InvalidArgument("at least one trial required".into()));
        }
        let run = self.runner(with_holonomic)?;
        let successes = count_successes(trials, exec, |i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let roll = rng.gen_range(0.0..crate::angle::MODULE_SPACING);
            run(roll)
        })?;
        Ok(summary(trials, successes, with_holonomic, Some(seed)))
    }

    /// Runs every initial roll `k·step` in `[0°, 120°)`.
    pub fn grid_sweep(
        &self,
        step_deg: f64,
        with_holonomic: bool,
        exec: Execution,
    ) -> Result<MonteCarloSummary> {
        if !(step_deg > 0.0 && step_deg <= 120.0) {
            return Err(Error::InvalidArgument(format!(
                "grid step must lie in (0, 120], got {step_deg}"
            )));
        }
        let run = self.runner(with_holonomic)?;
        let n = (120.0 / step_deg - 1e-9).ceil() as u64;
        let successes = count_successes(n, exec, |k| run((k as f64 * step_deg).to_radians()))?;
        Ok(summary(n, successes, with_holonomic, None))
    }
}

fn summary(
    trials: u64,
    successes: u64,
    with_holonomic: bool,
    seed: Option<u64>,
) -> MonteCarloSummary {
    let (ci_low, ci_high) = wilson_interval(successes, trials);
    MonteCarloSummary {
        trials,
        successes,
        success_rate: successes as f64 / trials as f64,
        ci_low,
        ci_high,
        with_holonomic,
        seed,
    }
}

/// Monte-Carlo estimate of the tee success rate over uniformly random
/// initial roll.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_tee(
    net: &PipeNetwork,
    planner: &PlannerConfig,
    sim: &SimConfig,
    geom: &RobotGeometry,
    sweep: &TeeSweep,
    trials: u64,
    seed: u64,
    with_holonomic: bool,
    exec: Execution,
) -> Result<MonteCarloSummary> {
    TeeExperiment {
        net,
        planner: *planner,
        sim: *sim,
        geom: *geom,
        sweep: *sweep,
    }
    .monte_carlo(trials, seed, with_holonomic, exec)
}

pub const CSV_HEADER: [&str; 17] = [
    "time_s",
    "segment",
    "s_mm",
    "theta5_deg",
    "th1",
    "th2",
    "th3",
    "th4",
    "wx",
    "wy",
    "wz",
    "vcz",
    "sign1",
    "sign2",
    "sign3",
    "singular",
    "event",
];

pub fn write_trajectory_csv<W: std::io::Write>(records: &[TrajectoryRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        let c = &r.command;
        let t = &r.twist;
        let events: Vec<&str> = r.events.iter().map(SimEvent::tag).collect();
        w.write_record([
            r.time_s.to_string(),
            r.segment_index.to_string(),
            r.s_mm.to_string(),
            r.theta5.to_degrees().to_string(),
            c.theta_dot_1.to_string(),
            c.theta_dot_2.to_string(),
            c.theta_dot_3.to_string(),
            c.theta_dot_4.to_string(),
            t.omega_x.to_string(),
            t.omega_y.to_string(),
            t.omega_z.to_string(),
            t.v_cz.to_string(),
            r.drive_signs[0].to_string(),
            r.drive_signs[1].to_string(),
            r.drive_signs[2].to_string(),
            u8::from(r.singular).to_string(),
            events.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}
