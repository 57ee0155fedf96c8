//! Closed-form differential kinematics of the three-module crawler.
//!
//! Frames: the robot frame has its origin at the centre of the robot head,
//! `z` along the pipe axis (direction of travel) and `x` pointing at module 1.
//! Modules 2 and 3 sit at 120° and 240° about `z`. The motor-space command is
//! `(θ̇₁, θ̇₂, θ̇₃, θ̇₄)`: the three crawler drive rates and the holonomic roll
//! rate of the robot frame about `z`. The output twist is
//! `(ω_x, ω_y, ω_z, v_cz)`.

use nalgebra::{Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Below this angular-speed norm (rad/s) the robot is treated as driving straight.
pub const STRAIGHT_OMEGA_TOL: f64 = 1e-12;

/// Module contact reach that reproduces a 96.54° singularity sector in a
/// 160 mm equal-bore tee (cut planes swept up to 45°).
pub const DEFAULT_REACH_MAX_MM: f64 = 104.721_129_466_860_7;

/// Physical constants of the robot. All lengths in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotGeometry {
    /// Lug rolling radius `r`.
    pub lug_radius_mm: f64,
    /// Nominal distance `l` of a module centre from the robot centre.
    pub arm_length_mm: f64,
    /// Perpendicular distance `a` from the robot centre to the line joining
    /// the other two modules.
    pub a_offset_mm: f64,
    /// Radial travel limits of the module, set by springs and shaft caps.
    pub reach_min_mm: f64,
    /// Largest radial distance at which a module still presses the wall.
    pub reach_max_mm: f64,
    /// Radius of the circular module cross-section.
    pub module_outer_radius_mm: f64,
}

impl Default for RobotGeometry {
    fn default() -> Self {
        Self::symmetric(15.0, 60.0, 50.0, DEFAULT_REACH_MAX_MM, 20.0)
    }
}

impl RobotGeometry {
    /// Geometry with the equilateral layout assumption `a = l / 2`.
    pub fn symmetric(
        lug_radius_mm: f64,
        arm_length_mm: f64,
        reach_min_mm: f64,
        reach_max_mm: f64,
        module_outer_radius_mm: f64,
    ) -> Self {
        Self {
            lug_radius_mm,
            arm_length_mm,
            a_offset_mm: arm_length_mm / 2.0,
            reach_min_mm,
            reach_max_mm,
            module_outer_radius_mm,
        }
    }

    /// Geometry carrying only `r` and `l`; reach limits are set to `l` so the
    /// struct validates. Useful for pure Jacobian queries.
    pub fn jacobian_only(lug_radius_mm: f64, arm_length_mm: f64) -> Self {
        Self::symmetric(
            lug_radius_mm,
            arm_length_mm,
            arm_length_mm,
            arm_length_mm,
            lug_radius_mm,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("lug_radius_mm", self.lug_radius_mm),
            ("arm_length_mm", self.arm_length_mm),
            ("a_offset_mm", self.a_offset_mm),
            ("reach_min_mm", self.reach_min_mm),
            ("reach_max_mm", self.reach_max_mm),
            ("module_outer_radius_mm", self.module_outer_radius_mm),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidGeometry(format!(
                    "{name} must be finite and positive, got {value}"
                )));
            }
        }
        if !(self.reach_min_mm <= self.arm_length_mm && self.arm_length_mm <= self.reach_max_mm) {
            return Err(Error::InvalidGeometry(format!(
                "arm length {} mm outside reach limits [{}, {}] mm",
                self.arm_length_mm, self.reach_min_mm, self.reach_max_mm
            )));
        }
        Ok(())
    }
}

/// Motor-space input `ω_a = (θ̇₁, θ̇₂, θ̇₃, θ̇₄)`, rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CommandVector {
    #[serde(rename = "th1")]
    pub theta_dot_1: f64,
    #[serde(rename = "th2")]
    pub theta_dot_2: f64,
    #[serde(rename = "th3")]
    pub theta_dot_3: f64,
    #[serde(rename = "th4")]
    pub theta_dot_4: f64,
}

impl CommandVector {
    pub const fn new(
        theta_dot_1: f64,
        theta_dot_2: f64,
        theta_dot_3: f64,
        theta_dot_4: f64,
    ) -> Self {
        Self {
            theta_dot_1,
            theta_dot_2,
            theta_dot_3,
            theta_dot_4,
        }
    }

    pub fn drive_rates(&self) -> [f64; 3] {
        [self.theta_dot_1, self.theta_dot_2, self.theta_dot_3]
    }

    pub fn is_finite(&self) -> bool {
        self.as_vector().iter().all(|x| x.is_finite())
    }

    pub fn as_vector(&self) -> Vector4<f64> {
        Vector4::new(
            self.theta_dot_1,
            self.theta_dot_2,
            self.theta_dot_3,
            self.theta_dot_4,
        )
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::from_vector(&(self.as_vector() * k))
    }
}

/// Robot twist `V_a = (ω_x, ω_y, ω_z, v_cz)`: rad/s and mm/s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TwistVector {
    #[serde(rename = "wx")]
    pub omega_x: f64,
    #[serde(rename = "wy")]
    pub omega_y: f64,
    #[serde(rename = "wz")]
    pub omega_z: f64,
    #[serde(rename = "vcz")]
    pub v_cz: f64,
}

impl TwistVector {
    pub const fn new(omega_x: f64, omega_y: f64, omega_z: f64, v_cz: f64) -> Self {
        Self {
            omega_x,
            omega_y,
            omega_z,
            v_cz,
        }
    }

    pub fn as_vector(&self) -> Vector4<f64> {
        Vector4::new(self.omega_x, self.omega_y, self.omega_z, self.v_cz)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn angular(&self) -> Vector3<f64> {
        Vector3::new(self.omega_x, self.omega_y, self.omega_z)
    }
}

/// Translational module speeds along local `z` (mm/s) with the instantaneous
/// arm extensions (mm) at which they act.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModuleVelocities {
    pub speeds: [f64; 3],
    pub arms: [f64; 3],
}

impl ModuleVelocities {
    pub fn with_arms(speeds: [f64; 3], arms: [f64; 3]) -> Self {
        Self { speeds, arms }
    }

    /// Checks the arm extensions against the geometry's reach limits.
    pub fn validate(&self, geom: &RobotGeometry) -> Result<()> {
        for (i, &arm) in self.arms.iter().enumerate() {
            if !(geom.reach_min_mm..=geom.reach_max_mm).contains(&arm) {
                return Err(Error::InvalidGeometry(format!(
                    "module {} arm {arm} mm outside [{}, {}] mm",
                    i + 1,
                    geom.reach_min_mm,
                    geom.reach_max_mm
                )));
            }
        }
        Ok(())
    }
}

/// Lug rolling without slip: `vᵢ = r·θ̇ᵢ`, arms at their nominal length.
pub fn module_linear_velocities(cmd: &CommandVector, geom: &RobotGeometry) -> ModuleVelocities {
    let r = geom.lug_radius_mm;
    let l = geom.arm_length_mm;
    ModuleVelocities {
        speeds: cmd.drive_rates().map(|w| r * w),
        arms: [l; 3],
    }
}

/// Expresses a vector seen in the rotating robot frame in the co-located
/// non-rotating frame: `f + (θ̇₄ ẑ) × p`.
pub fn coriolis_transform(
    vec: &Vector3<f64>,
    position: &Vector3<f64>,
    theta_dot_4: f64,
) -> Vector3<f64> {
    vec + Vector3::z().scale(theta_dot_4).cross(position)
}

/// Module contact positions in the robot frame for the given arm lengths.
pub fn module_positions(arms: &[f64; 3]) -> [Vector3<f64>; 3] {
    // exact unit directions at 0°, 120°, 240° so equal arms sum to zero
    let h = 3f64.sqrt() / 2.0;
    let dirs = [(1.0, 0.0), (-0.5, h), (-0.5, -h)];
    std::array::from_fn(|i| Vector3::new(arms[i] * dirs[i].0, arms[i] * dirs[i].1, 0.0))
}

/// Linear velocity of the robot centre: mean of the three module velocity
/// vectors after the rotating-frame transform. Arm lengths may differ.
pub fn center_velocity(mv: &ModuleVelocities, theta_dot_4: f64) -> Vector3<f64> {
    let positions = module_positions(&mv.arms);
    let sum = mv
        .speeds
        .iter()
        .zip(positions.iter())
        .map(|(&v, p)| coriolis_transform(&Vector3::new(0.0, 0.0, v), p, theta_dot_4))
        .fold(Vector3::zeros(), |acc, v| acc + v);
    sum / 3.0
}

/// The 4×4 Jacobian mapping `ω_a` to `V_a` for equal arm lengths and `a = l/2`.
pub fn jacobian(geom: &RobotGeometry) -> Matrix4<f64> {
    let r = geom.lug_radius_mm;
    let l = geom.arm_length_mm;
    let s = 3f64.sqrt() * r / (3.0 * l);
    let q = r / (3.0 * l);
    #[rustfmt::skip]
    let j = Matrix4::new(
        0.0,        -s,      s,       0.0,
        -2.0 * q,   q,       q,       0.0,
        0.0,        0.0,     0.0,     1.0,
        r / 3.0,    r / 3.0, r / 3.0, 0.0,
    );
    j
}

pub fn forward_kinematics(cmd: &CommandVector, geom: &RobotGeometry) -> TwistVector {
    TwistVector::from_vector(&(jacobian(geom) * cmd.as_vector()))
}

pub fn inverse_kinematics(twist: &TwistVector, geom: &RobotGeometry) -> Result<CommandVector> {
    let r = geom.lug_radius_mm;
    let l = geom.arm_length_mm;
    if !(r.is_finite() && l.is_finite() && r > 0.0 && l > 0.0) {
        return Err(Error::InvalidGeometry(format!(
            "Jacobian is singular for r = {r} mm, l = {l} mm"
        )));
    }
    let inv = jacobian(geom)
        .try_inverse()
        .ok_or_else(|| Error::InvalidGeometry("Jacobian is not invertible".into()))?;
    Ok(CommandVector::from_vector(&(inv * twist.as_vector())))
}

/// Outcome of the curvature-radius formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurvatureRadius {
    Finite(f64),
    /// Angular speed is zero: straight-line motion.
    Straight,
    /// No motion at all; curvature is not defined.
    Undefined,
}

impl CurvatureRadius {
    pub fn finite(self) -> Option<f64> {
        match self {
            Self::Finite(r) => Some(r),
            _ => None,
        }
    }
}

/// `R = (|V₁| + |V₂| + |V₃|) / (3‖ω‖)`.
pub fn radius_of_curvature(mv: &ModuleVelocities, twist: &TwistVector) -> CurvatureRadius {
    let speed_sum: f64 = mv.speeds.iter().map(|v| v.abs()).sum();
    let omega = twist.angular().norm();
    if omega < STRAIGHT_OMEGA_TOL {
        if speed_sum == 0.0 {
            CurvatureRadius::Undefined
        } else {
            CurvatureRadius::Straight
        }
    } else {
        CurvatureRadius::Finite(speed_sum / (3.0 * omega))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn geom() -> RobotGeometry {
        RobotGeometry::jacobian_only(15.0, 60.0)
    }

    #[test]
    fn module_speeds_scale_with_lug_radius() {
        let g = geom();
        let mv = module_linear_velocities(&CommandVector::new(2.0, 2.0, 2.0, 9.0), &g);
        assert_eq!(mv.speeds, [30.0, 30.0, 30.0]);
        let mv = module_linear_velocities(&CommandVector::default(), &g);
        assert_eq!(mv.speeds, [0.0; 3]);
        let mv = module_linear_velocities(&CommandVector::new(1.0, 2.0, 3.0, 0.0), &g);
        assert_eq!(mv.speeds, [15.0, 30.0, 45.0]);
        assert_eq!(mv.arms, [60.0; 3]);
    }

    #[test]
    fn coriolis_matches_module_expressions() {
        let v = Vector3::new(1.0, -2.0, 3.0);
        assert_eq!(coriolis_transform(&v, &Vector3::new(5.0, 6.0, 0.0), 0.0), v);

        let (l1, v1, w) = (60.0, 25.0, 0.7);
        let out = coriolis_transform(&Vector3::new(0.0, 0.0, v1), &Vector3::new(l1, 0.0, 0.0), w);
        assert_relative_eq!(out, Vector3::new(0.0, w * l1, v1), epsilon = 1e-12);

        // modules 2 and 3 at 120° and 240°
        let (l2, l3, v2, v3) = (55.0, 58.0, 10.0, -4.0);
        let pos = module_positions(&[l1, l2, l3]);
        let c30 = 30f64.to_radians().cos();
        let s30 = 30f64.to_radians().sin();
        let out2 = coriolis_transform(&Vector3::new(0.0, 0.0, v2), &pos[1], w);
        assert_relative_eq!(
            out2,
            Vector3::new(-l2 * c30 * w, -l2 * s30 * w, v2),
            epsilon = 1e-12
        );
        let out3 = coriolis_transform(&Vector3::new(0.0, 0.0, v3), &pos[2], w);
        assert_relative_eq!(
            out3,
            Vector3::new(l3 * c30 * w, -l3 * s30 * w, v3),
            epsilon = 1e-12
        );
    }

    #[test]
    fn center_velocity_cases() {
        let mv = ModuleVelocities::with_arms([30.0; 3], [60.0; 3]);
        let c = center_velocity(&mv, 5.0);
        assert!(c.x.abs() < 1e-12 && c.y.abs() < 1e-12);
        assert_relative_eq!(c.z, 30.0, epsilon = 1e-12);

        let mv = ModuleVelocities::with_arms([15.0, 30.0, 45.0], [60.0; 3]);
        assert_relative_eq!(
            center_velocity(&mv, 0.0),
            Vector3::new(0.0, 0.0, 30.0),
            epsilon = 1e-12
        );

        // unequal arms: termwise sum of the three module expressions
        let mv = ModuleVelocities::with_arms([0.0; 3], [60.0, 55.0, 55.0]);
        let c = center_velocity(&mv, 1.0);
        let c30 = 3f64.sqrt() / 2.0;
        let expected_x = (-55.0 * c30 + 55.0 * c30) / 3.0;
        let expected_y = (60.0 - 55.0 * 0.5 - 55.0 * 0.5) / 3.0;
        assert_relative_eq!(c.x, expected_x, epsilon = 1e-12);
        assert_relative_eq!(c.y, expected_y, epsilon = 1e-12);
        assert!(c.y.abs() > 1.0);
    }

    #[test]
    fn forward_kinematics_examples() {
        let g = geom();
        assert_eq!(
            forward_kinematics(&CommandVector::new(2.0, 2.0, 2.0, 0.0), &g),
            TwistVector::new(0.0, 0.0, 0.0, 30.0)
        );
        assert_eq!(
            forward_kinematics(&CommandVector::new(0.0, 0.0, 0.0, 5.0), &g),
            TwistVector::new(0.0, 0.0, 5.0, 0.0)
        );
        let t = forward_kinematics(&CommandVector::new(1.0, 2.0, 3.0, 0.0), &g);
        assert_relative_eq!(t.omega_x, 0.144_337_567_297_406_4, max_relative = 1e-12);
        assert_relative_eq!(t.omega_y, 0.25, max_relative = 1e-12);
        assert_eq!(t.omega_z, 0.0);
        assert_relative_eq!(t.v_cz, 30.0, max_relative = 1e-12);
    }

    #[test]
    fn jacobian_determinant_closed_form() {
        let g = geom();
        let (r, l) = (g.lug_radius_mm, g.arm_length_mm);
        let expected = 2.0 * 3f64.sqrt() * r.powi(3) / (9.0 * l * l);
        assert_relative_eq!(jacobian(&g).determinant(), expected, max_relative = 1e-12);
    }

    #[test]
    fn inverse_kinematics_examples() {
        let g = geom();
        let c = inverse_kinematics(&TwistVector::new(0.0, 0.0, 0.0, 30.0), &g).unwrap();
        assert_relative_eq!(
            c.as_vector(),
            Vector4::new(2.0, 2.0, 2.0, 0.0),
            epsilon = 1e-12
        );
        let c = inverse_kinematics(&TwistVector::new(0.0, 0.0, 5.0, 0.0), &g).unwrap();
        assert_relative_eq!(
            c.as_vector(),
            Vector4::new(0.0, 0.0, 0.0, 5.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn inverse_kinematics_rejects_degenerate_geometry() {
        let t = TwistVector::new(0.0, 0.0, 0.0, 1.0);
        for g in [
            RobotGeometry::jacobian_only(0.0, 60.0),
            RobotGeometry::jacobian_only(15.0, 0.0),
        ] {
            assert!(matches!(
                inverse_kinematics(&t, &g),
                Err(Error::InvalidGeometry(_))
            ));
        }
    }

    #[test]
    fn curvature_cases() {
        let straight = ModuleVelocities::with_arms([30.0; 3], [60.0; 3]);
        assert_eq!(
            radius_of_curvature(&straight, &TwistVector::default()),
            CurvatureRadius::Straight
        );

        let mv = ModuleVelocities::with_arms([15.0, 30.0, 45.0], [60.0; 3]);
        let twist = TwistVector::new(0.144_337_567_297_406_4, 0.25, 0.0, 30.0);
        let r = radius_of_curvature(&mv, &twist).finite().unwrap();
        assert_relative_eq!(r, 103.923_048_454_132_6, max_relative = 1e-9);

        let still = ModuleVelocities::with_arms([0.0; 3], [60.0; 3]);
        assert_eq!(
            radius_of_curvature(&still, &TwistVector::default()),
            CurvatureRadius::Undefined
        );
    }

    #[test]
    fn geometry_validation() {
        RobotGeometry::default().validate().unwrap();
        let g = RobotGeometry {
            reach_min_mm: 70.0,
            ..RobotGeometry::default()
        };
        assert!(g.validate().is_err());
        let g = RobotGeometry {
            lug_radius_mm: -1.0,
            ..RobotGeometry::default()
        };
        assert!(g.validate().is_err());
        assert_eq!(RobotGeometry::default().a_offset_mm, 30.0);
    }

    #[test]
    fn module_velocities_reach_check() {
        let g = RobotGeometry::default();
        assert!(ModuleVelocities::with_arms([0.0; 3], [60.0, 55.0, 55.0])
            .validate(&g)
            .is_ok());
        assert!(ModuleVelocities::with_arms([0.0; 3], [60.0, 40.0, 55.0])
            .validate(&g)
            .is_err());
    }
}
