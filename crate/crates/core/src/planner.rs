//! Command schedules for straights, elbows and tees.
//!
//! A plan is a flat list of [`MissionStep`]s, each a constant motor command
//! held for a fixed duration. The planner tracks the robot's roll and the
//! modules' self-rotation as it goes, so drive commands already carry the
//! sign flip needed once the crawlers run reversed (see
//! [`crate::sim::drive_sign`]).

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::angle::{wrap_signed, MODULE_SPACING};
use crate::kinematics::{inverse_kinematics, CommandVector, RobotGeometry, TwistVector};
use crate::pipenet::{
    module_path_radii, ElbowRatioMode, PipeNetwork, PipeSegment, SegmentKind, TeeExit,
};
use crate::sim::{drive_sign, self_rotation_coefficient};
use crate::singularity::{escape_rotation, sweep_with, SingularityRegion, TeeSweep};
use crate::{Error, Result};

const MAX_ROTATION: f64 = std::f64::consts::PI / 3.0;
const ANGLE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Drive,
    HolonomicRotate,
    TurnElbow,
    TurnTee,
}

impl StepKind {
    pub fn tag(self) -> &'static str {
        match self {
            Self::Drive => "drive",
            Self::HolonomicRotate => "holonomic_rotate",
            Self::TurnElbow => "turn_elbow",
            Self::TurnTee => "turn_tee",
        }
    }
}

/// When a step starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Trigger {
    Immediate,
    /// The robot head has entered the junction by `fraction·D`.
    HeadReachesFractionOfD {
        fraction: f64,
    },
}

/// What the step's duration was computed to achieve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Completion {
    /// Centerline distance travelled, mm.
    Distance(f64),
    /// Roll rotation about the pipe axis, rad.
    Roll(f64),
    /// Heading change of the robot axis, rad.
    Heading(f64),
}

/// Consequences of a holonomic rotation for the crawler drive direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RotationHazard {
    /// Module self-rotation passes an odd multiple of 90°.
    pub crosses_no_motion_line: bool,
    /// Module self-rotation passes a multiple of 180°.
    pub crosses_half_turn: bool,
    /// The crawler drive direction after the rotation is opposite to before.
    pub drive_reversed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionStep {
    pub kind: StepKind,
    pub segment_index: usize,
    pub command: CommandVector,
    pub duration_s: f64,
    pub trigger: Trigger,
    pub completion: Completion,
    /// Module speeds divided by the mean speed, for speed-modulated turns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_ratios: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hazard: Option<RotationHazard>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Mean module speed on straights and through elbows, mm/s.
    pub straight_speed_mm_s: f64,
    /// Turning speeds start once the head is this fraction of `D` into a tee.
    pub tee_trigger_fraction: f64,
    pub elbow_mode: ElbowRatioMode,
    /// Half-width of the no-motion band around 90° module self-rotation, rad.
    pub wobble_deadband_rad: f64,
    /// Whether the robot may roll in place. Without it, no rotate steps are
    /// emitted.
    pub holonomic: bool,
    pub holonomic_rate_rad_s: f64,
    /// Roll to a gap centre at every tee, not only when singular.
    pub align_at_tee: bool,
    /// Target curvature radius of a tee turn as a fraction of `D`.
    pub tee_turn_radius_fraction: f64,
    /// Multiplier on the rolling ratio that couples robot roll to module
    /// self-rotation; must match the simulator's.
    pub self_rotation_gain: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            straight_speed_mm_s: 100.0,
            tee_trigger_fraction: 0.25,
            elbow_mode: ElbowRatioMode::Generalized,
            wobble_deadband_rad: 1f64.to_radians(),
            holonomic: true,
            holonomic_rate_rad_s: 0.5,
            align_at_tee: false,
            tee_turn_radius_fraction: 0.3,
            self_rotation_gain: 1.0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("straight_speed_mm_s", self.straight_speed_mm_s),
            ("holonomic_rate_rad_s", self.holonomic_rate_rad_s),
            ("tee_turn_radius_fraction", self.tee_turn_radius_fraction),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.tee_trigger_fraction > 0.0 && self.tee_trigger_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "tee_trigger_fraction must lie in (0, 1], got {}",
                self.tee_trigger_fraction
            )));
        }
        if !(0.0..=10f64.to_radians()).contains(&self.wobble_deadband_rad) {
            return Err(Error::InvalidArgument(
                "wobble deadband must lie in [0°, 10°]".into(),
            ));
        }
        if !self.self_rotation_gain.is_finite() {
            return Err(Error::InvalidArgument(
                "self_rotation_gain must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Robot state the planner carries from step to step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlanCursor {
    /// Roll of module 1 in the network roll frame, rad.
    pub roll: f64,
    /// Module self-rotation, rad (equal for all three modules).
    pub alpha: f64,
    /// Planned centerline distance from the network start, mm.
    pub distance: f64,
}

impl PlanCursor {
    pub fn at_roll(roll: f64) -> Self {
        Self {
            roll,
            ..Self::default()
        }
    }

    fn sign(&self, cfg: &PlannerConfig) -> Result<f64> {
        match drive_sign(self.alpha, cfg.wobble_deadband_rad) {
            0 => Err(Error::InvalidArgument(format!(
                "module self-rotation {:.3}° lies on the no-motion line",
                self.alpha.to_degrees()
            ))),
            s => Ok(s as f64),
        }
    }
}

/// Forbidden-orientation region of every tee in the network.
pub fn junction_regions(
    net: &PipeNetwork,
    geom: &RobotGeometry,
    sweep: &TeeSweep,
) -> Result<Vec<Option<SingularityRegion>>> {
    let mut cache: Vec<(f64, SingularityRegion)> = Vec::new();
    net.segments()
        .iter()
        .map(|seg| {
            if !seg.is_tee() {
                return Ok(None);
            }
            if let Some((_, r)) = cache.iter().find(|(d, _)| *d == seg.diameter_mm) {
                return Ok(Some(r.clone()));
            }
            let region = sweep_with(seg.diameter_mm, geom, sweep)?;
            cache.push((seg.diameter_mm, region.clone()));
            Ok(Some(region))
        })
        .collect()
}

fn drive_step(distance: f64, sign: f64, cfg: &PlannerConfig, geom: &RobotGeometry) -> MissionStep {
    let rate = sign * cfg.straight_speed_mm_s / geom.lug_radius_mm;
    MissionStep {
        kind: StepKind::Drive,
        segment_index: 0,
        command: CommandVector::new(rate, rate, rate, 0.0),
        duration_s: distance / cfg.straight_speed_mm_s,
        trigger: Trigger::Immediate,
        completion: Completion::Distance(distance),
        speed_ratios: None,
        hazard: None,
    }
}

/// Straight drive at `cfg.straight_speed_mm_s` with equal module rates.
pub fn plan_straight(
    length_mm: f64,
    cfg: &PlannerConfig,
    geom: &RobotGeometry,
) -> Result<MissionStep> {
    if !(length_mm.is_finite() && length_mm > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "drive length must be positive, got {length_mm}"
        )));
    }
    Ok(drive_step(length_mm, 1.0, cfg, geom))
}

/// In-place roll by `delta` rad at `rate` rad/s; `None` for a zero rotation.
pub fn holonomic_rotate_step(delta: f64, rate: f64) -> Result<Option<MissionStep>> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "rotation rate must be positive, got {rate}"
        )));
    }
    if delta.abs() > MAX_ROTATION + ANGLE_EPS {
        return Err(Error::InvalidArgument(format!(
            "rotation {:.3}° exceeds 60°",
            delta.to_degrees()
        )));
    }
    if delta == 0.0 {
        return Ok(None);
    }
    Ok(Some(MissionStep {
        kind: StepKind::HolonomicRotate,
        segment_index: 0,
        command: CommandVector::new(0.0, 0.0, 0.0, rate.copysign(delta)),
        duration_s: delta.abs() / rate,
        trigger: Trigger::Immediate,
        completion: Completion::Roll(delta),
        speed_ratios: None,
        hazard: None,
    }))
}

/// Drive-direction hazards of moving module self-rotation from `before` to
/// `after`; `None` when nothing is crossed.
pub fn rotation_hazard(before: f64, after: f64, deadband: f64) -> Option<RotationHazard> {
    let (lo, hi) = if before <= after {
        (before, after)
    } else {
        (after, before)
    };
    let half = std::f64::consts::PI;
    let crosses = |offset: f64, period: f64| -> bool {
        // some offset + k·period in (lo, hi]
        ((hi - offset) / period).floor() > ((lo - offset) / period).floor()
    };
    let crosses_no_motion_line = crosses(FRAC_PI_2, half);
    let crosses_half_turn = crosses(0.0, half);
    let drive_reversed = {
        let (a, b) = (drive_sign(before, deadband), drive_sign(after, deadband));
        a != 0 && b != 0 && a != b
    };
    (crosses_no_motion_line || crosses_half_turn || drive_reversed).then_some(RotationHazard {
        crosses_no_motion_line,
        crosses_half_turn,
        drive_reversed,
    })
}

/// Rotation step taking the cursor roll by about `nominal`, nudged when the
/// result would leave the modules on the no-motion line. `acceptable` judges
/// the new roll.
fn rotate(
    cursor: &mut PlanCursor,
    nominal: f64,
    acceptable: &dyn Fn(f64) -> bool,
    diameter_mm: f64,
    cfg: &PlannerConfig,
    geom: &RobotGeometry,
) -> Result<Option<MissionStep>> {
    let coef = self_rotation_coefficient(diameter_mm, geom, cfg.self_rotation_gain);
    // stay clear of the band edge: the simulator accumulates α piecewise and
    // may round either way at exactly the deadband
    let clearance = 1.25 * cfg.wobble_deadband_rad + 1e-9;
    let usable = |delta: f64| {
        delta.abs() <= MAX_ROTATION + ANGLE_EPS
            && acceptable(cursor.roll + delta)
            && drive_sign(cursor.alpha + coef * delta, clearance) != 0
    };
    let candidates: Vec<f64> = if cfg.holonomic {
        let step = if coef == 0.0 {
            0.0
        } else {
            (cfg.wobble_deadband_rad.max(1e-3) / coef.abs()) * 0.5
        };
        std::iter::once(nominal)
            .chain((1..=64).flat_map(|k| {
                let off = step * k as f64;
                [nominal + off, nominal - off]
            }))
            .collect()
    } else {
        vec![0.0]
    };
    let delta = candidates.into_iter().find(|&d| usable(d)).ok_or_else(|| {
        if cfg.holonomic {
            Error::NoEscape
        } else {
            Error::InvalidArgument(
                "orientation cannot be corrected without holonomic motion".into(),
            )
        }
    })?;
    let step = holonomic_rotate_step(delta, cfg.holonomic_rate_rad_s)?.map(|mut s| {
        let after = cursor.alpha + coef * delta;
        s.hazard = rotation_hazard(cursor.alpha, after, cfg.wobble_deadband_rad);
        s
    });
    cursor.roll += delta;
    cursor.alpha += coef * delta;
    Ok(step)
}

/// Rotate to the preferred pose (one module on the innermost curvature),
/// then drive through the bend with module speeds proportional to their path
/// radii and a mean speed of `cfg.straight_speed_mm_s`.
pub fn plan_elbow(
    index: usize,
    elbow: &PipeSegment,
    cursor: &mut PlanCursor,
    cfg: &PlannerConfig,
    geom: &RobotGeometry,
) -> Result<Vec<MissionStep>> {
    let SegmentKind::Elbow {
        bend_radius_mm,
        bend_angle_deg,
        turn_plane_roll_deg,
    } = elbow.kind
    else {
        return Err(Error::NotAnElbow);
    };
    let turn_roll = turn_plane_roll_deg.to_radians();
    let mut steps = Vec::new();

    let rel = cursor.roll - turn_roll;
    let nominal = if cfg.holonomic {
        -wrap_signed(rel, MODULE_SPACING)
    } else {
        0.0
    };
    if let Some(step) = rotate(cursor, nominal, &|_| true, elbow.diameter_mm, cfg, geom)? {
        steps.push(step);
    }

    let radii = module_path_radii(elbow, cursor.roll - turn_roll, cfg.elbow_mode)?;
    let mean = radii.iter().sum::<f64>() / 3.0;
    let ratios = radii.map(|r| r / mean);
    let sign = cursor.sign(cfg)?;
    let rates = ratios.map(|k| sign * k * cfg.straight_speed_mm_s / geom.lug_radius_mm);
    let length = bend_radius_mm * bend_angle_deg.to_radians();
    steps.push(MissionStep {
        kind: StepKind::TurnElbow,
        segment_index: index,
        command: CommandVector::new(rates[0], rates[1], rates[2], 0.0),
        duration_s: length / cfg.straight_speed_mm_s,
        trigger: Trigger::Immediate,
        completion: Completion::Distance(length),
        speed_ratios: Some(ratios),
        hazard: None,
    });
    cursor.distance += length;
    Ok(steps)
}

/// Twist for turning toward roll `rel` (turn frame) with axial speed `v` and
/// curvature radius `radius` as given by the module-speed formula.
///
/// Module speeds are affine in the angular rate: `Vᵢ = v + ω·cᵢ`. With
/// `u = v/ω` the radius is `Σ|u + cᵢ| / 3`, increasing in `u` past the
/// median offset, so `u` is found by bisection there.
pub fn tee_turn_twist(rel: f64, v: f64, radius: f64, geom: &RobotGeometry) -> Result<TwistVector> {
    let axis = (rel.sin(), rel.cos());
    let unit = inverse_kinematics(&TwistVector::new(axis.0, axis.1, 0.0, 0.0), geom)?;
    let offsets = unit.drive_rates().map(|w| w * geom.lug_radius_mm);
    let radius_at = |u: f64| offsets.iter().map(|c| (u + c).abs()).sum::<f64>() / 3.0;
    let mut sorted = offsets;
    sorted.sort_by(f64::total_cmp);
    let mut lo = (-sorted[1]).max(0.0);
    if radius_at(lo) >= radius {
        return Err(Error::InvalidArgument(format!(
            "turn radius {radius:.3} mm is below the attainable minimum {:.3} mm",
            radius_at(lo)
        )));
    }
    let mut hi = lo.max(1.0);
    while radius_at(hi) < radius {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if radius_at(mid) < radius {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let omega = v / (0.5 * (lo + hi));
    Ok(TwistVector::new(omega * axis.0, omega * axis.1, 0.0, v))
}

/// Tee negotiation. Branch exit: roll out of the singularity region if
/// needed, drive until the head is `tee_trigger_fraction·D` into the
/// junction, then turn with the inner module reversed until the heading has
/// changed by 90°. Through exit: roll so two modules straddle the branch
/// mouth; the following drive is left to the caller.
pub fn plan_tee(
    index: usize,
    tee: &PipeSegment,
    cursor: &mut PlanCursor,
    region: &SingularityRegion,
    cfg: &PlannerConfig,
    geom: &RobotGeometry,
) -> Result<Vec<MissionStep>> {
    let SegmentKind::TJunction {
        branch_roll_deg,
        exit,
    } = tee.kind
    else {
        return Err(Error::NotATee);
    };
    let turn_roll = branch_roll_deg.to_radians();
    let d = tee.diameter_mm;
    let mut steps = Vec::new();
    let rel = cursor.roll - turn_roll;

    match exit {
        TeeExit::Through => {
            let nominal = if cfg.holonomic {
                wrap_signed(MODULE_SPACING / 2.0 - rel, MODULE_SPACING)
            } else {
                0.0
            };
            let free = |roll: f64| !region.contains(roll - turn_roll);
            if let Some(step) = rotate(cursor, nominal, &free, d, cfg, geom)? {
                steps.push(step);
            }
        }
        TeeExit::Branch => {
            let singular = region.contains(rel);
            let nominal = if cfg.holonomic && (singular || cfg.align_at_tee) {
                escape_rotation(rel, region)?
            } else {
                0.0
            };
            let rotated = if cfg.holonomic {
                let free = |roll: f64| !region.contains(roll - turn_roll);
                rotate(cursor, nominal, &free, d, cfg, geom)?
            } else {
                // no correction possible: keep whatever pose we arrived in
                rotate(cursor, 0.0, &|_| true, d, cfg, geom)?
            };
            steps.extend(rotated);

            let sign = cursor.sign(cfg)?;
            let lead = cfg.tee_trigger_fraction * d;
            let mut drive = drive_step(lead, sign, cfg, geom);
            drive.segment_index = index;
            drive.trigger = Trigger::Immediate;
            steps.push(drive);
            cursor.distance += lead;

            let rel = cursor.roll - turn_roll;
            let v = cfg.straight_speed_mm_s;
            let twist = tee_turn_twist(rel, v, cfg.tee_turn_radius_fraction * d, geom)?;
            let mut command = inverse_kinematics(&twist, geom)?;
            command.theta_dot_1 *= sign;
            command.theta_dot_2 *= sign;
            command.theta_dot_3 *= sign;
            let omega = twist.angular().norm();
            let duration = FRAC_PI_2 / omega;
            let ratios = command
                .drive_rates()
                .map(|w| sign * w * geom.lug_radius_mm / v);
            steps.push(MissionStep {
                kind: StepKind::TurnTee,
                segment_index: index,
                command,
                duration_s: duration,
                trigger: Trigger::HeadReachesFractionOfD {
                    fraction: cfg.tee_trigger_fraction,
                },
                completion: Completion::Heading(FRAC_PI_2),
                speed_ratios: Some(ratios),
                hazard: None,
            });
            cursor.distance += v * duration;
        }
    }
    Ok(steps)
}

/// Full mission through `net`, starting at the network entry.
pub fn plan_mission(
    net: &PipeNetwork,
    start: PlanCursor,
    regions: &[Option<SingularityRegion>],
    cfg: &PlannerConfig,
    geom: &RobotGeometry,
) -> Result<Vec<MissionStep>> {
    cfg.validate()?;
    geom.validate()?;
    if regions.len() != net.len() {
        return Err(Error::InvalidArgument(
            "one region slot per segment required".into(),
        ));
    }
    let mut cursor = start;
    let mut steps = Vec::new();
    let drive_to = |target: f64,
                    index: usize,
                    cursor: &mut PlanCursor,
                    steps: &mut Vec<MissionStep>|
     -> Result<()> {
        let gap = target - cursor.distance;
        if gap > 1e-9 {
            let mut step = drive_step(gap, cursor.sign(cfg)?, cfg, geom);
            step.segment_index = index;
            steps.push(step);
            cursor.distance = target;
        }
        Ok(())
    };

    for (index, seg) in net.segments().iter().enumerate() {
        match seg.kind {
            SegmentKind::Straight { .. } => {}
            SegmentKind::Elbow { .. } => {
                drive_to(net.segment_start(index), index, &mut cursor, &mut steps)?;
                let mut elbow = plan_elbow(index, seg, &mut cursor, cfg, geom)?;
                for s in &mut elbow {
                    s.segment_index = index;
                }
                steps.extend(elbow);
            }
            SegmentKind::TJunction { .. } => {
                drive_to(net.segment_start(index), index, &mut cursor, &mut steps)?;
                let region = regions[index].as_ref().ok_or_else(|| {
                    Error::InvalidArgument(format!("no singularity region for tee {index}"))
                })?;
                let mut tee = plan_tee(index, seg, &mut cursor, region, cfg, geom)?;
                for s in &mut tee {
                    s.segment_index = index;
                }
                steps.extend(tee);
            }
        }
    }
    drive_to(net.total_length(), net.len() - 1, &mut cursor, &mut steps)?;
    Ok(steps)
}
