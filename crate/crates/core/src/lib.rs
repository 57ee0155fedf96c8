//! Kinematics and mission simulation for a three-module omnidirectional
//! in-pipe crawler.
//!
//! The robot carries three crawler modules spaced 120° apart around its
//! axis. Each module drives along the pipe and can spin about its own axis,
//! which rolls the whole robot about the pipe axis (holonomic motion). The
//! crate provides:
//!
//! * [`kinematics`]: the closed-form Jacobian between motor rates and robot
//!   twist, the rotating-frame velocity transform and the curvature radius.
//! * [`singularity`]: contact-loss geometry on the elliptical cross-sections
//!   met in a T-junction and the resulting forbidden roll orientations.
//! * [`pipenet`]: pipe network model, JSON ingestion and centerline poses.
//! * [`planner`]: command schedules for straights, elbows and tees.
//! * [`sim`]: a deterministic kinematic simulator and Monte-Carlo runner.
//!
//! Units are millimetres, radians and seconds unless a field name says
//! otherwise (`*_deg`, `*_mm`).

pub mod error;
pub mod kinematics;
pub mod pipenet;
pub mod planner;
pub mod sim;
pub mod singularity;

mod angle;

pub use error::{Error, Result};
pub use kinematics::{
    CommandVector, CurvatureRadius, ModuleVelocities, RobotGeometry, TwistVector,
};
pub use pipenet::{PipeNetwork, PipeSegment, SegmentKind, TeeExit};
pub use planner::{MissionStep, PlannerConfig, StepKind};
pub use sim::{Execution, MissionOutcome, SimConfig, SimState, TrajectoryRecord};
pub use singularity::{EllipseSection, SingularityRegion};
