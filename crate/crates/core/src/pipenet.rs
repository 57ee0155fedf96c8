//! Pipe networks: ordered runs of straights, elbows and tees.
//!
//! Document format (all lengths mm, angles degrees, unknown fields rejected):
//!
//! ```json
//! {"segments": [
//!   {"kind": "straight", "D_mm": 160, "length_mm": 1000},
//!   {"kind": "elbow", "D_mm": 160, "bend_radius_mm": 90, "bend_angle_deg": 90, "turn_plane_roll_deg": 0},
//!   {"kind": "tee", "D_mm": 160, "branch_roll_deg": 0, "exit": "branch"}
//! ]}
//! ```
//!
//! Roll angles (`turn_plane_roll_deg`, `branch_roll_deg`) give the direction
//! of the turn about the pipe axis, in the same roll frame as the robot's
//! `θ₅`. For an elbow that direction is the inner side of the bend.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Isometry3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::angle::MODULE_SPACING;
use crate::{Error, Result};

/// Default radius of the tee's branch-exit centerline, as a fraction of `D`.
pub const DEFAULT_TEE_RADIUS_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TeeExit {
    Through,
    Branch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SegmentKind {
    Straight {
        length_mm: f64,
    },
    Elbow {
        bend_radius_mm: f64,
        bend_angle_deg: f64,
        turn_plane_roll_deg: f64,
    },
    #[serde(rename = "tee")]
    TJunction {
        branch_roll_deg: f64,
        exit: TeeExit,
    },
}

/// One piece of pipe. Serializes to a flat JSON object with a `kind` tag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipeSegment {
    #[serde(rename = "D_mm")]
    pub diameter_mm: f64,
    #[serde(flatten)]
    pub kind: SegmentKind,
}

// Strict per-kind shapes used for parsing, so unknown fields are rejected.
#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum SegmentDoc {
    Straight {
        #[serde(rename = "D_mm")]
        d: f64,
        length_mm: f64,
    },
    Elbow {
        #[serde(rename = "D_mm")]
        d: f64,
        bend_radius_mm: f64,
        bend_angle_deg: f64,
        #[serde(default)]
        turn_plane_roll_deg: f64,
    },
    Tee {
        #[serde(rename = "D_mm")]
        d: f64,
        #[serde(default)]
        branch_roll_deg: f64,
        exit: TeeExit,
    },
}

impl From<SegmentDoc> for PipeSegment {
    fn from(doc: SegmentDoc) -> Self {
        match doc {
            SegmentDoc::Straight { d, length_mm } => PipeSegment::straight(d, length_mm),
            SegmentDoc::Elbow {
                d,
                bend_radius_mm,
                bend_angle_deg,
                turn_plane_roll_deg,
            } => PipeSegment::elbow(d, bend_radius_mm, bend_angle_deg, turn_plane_roll_deg),
            SegmentDoc::Tee {
                d,
                branch_roll_deg,
                exit,
            } => PipeSegment::tee(d, branch_roll_deg, exit),
        }
    }
}

impl PipeSegment {
    pub fn straight(diameter_mm: f64, length_mm: f64) -> Self {
        Self {
            diameter_mm,
            kind: SegmentKind::Straight { length_mm },
        }
    }

    pub fn elbow(
        diameter_mm: f64,
        bend_radius_mm: f64,
        bend_angle_deg: f64,
        turn_plane_roll_deg: f64,
    ) -> Self {
        Self {
            diameter_mm,
            kind: SegmentKind::Elbow {
                bend_radius_mm,
                bend_angle_deg,
                turn_plane_roll_deg,
            },
        }
    }

    pub fn tee(diameter_mm: f64, branch_roll_deg: f64, exit: TeeExit) -> Self {
        Self {
            diameter_mm,
            kind: SegmentKind::TJunction {
                branch_roll_deg,
                exit,
            },
        }
    }

    pub fn is_elbow(&self) -> bool {
        matches!(self.kind, SegmentKind::Elbow { .. })
    }

    pub fn is_tee(&self) -> bool {
        matches!(self.kind, SegmentKind::TJunction { .. })
    }

    /// Roll direction (rad) of the turn this segment imposes, if any. A tee
    /// taken straight through still reports its branch direction.
    pub fn turn_roll(&self) -> Option<f64> {
        match self.kind {
            SegmentKind::Straight { .. } => None,
            SegmentKind::Elbow {
                turn_plane_roll_deg,
                ..
            } => Some(turn_plane_roll_deg.to_radians()),
            SegmentKind::TJunction {
                branch_roll_deg, ..
            } => Some(branch_roll_deg.to_radians()),
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        let bad = |field: &'static str, message: String| Error::Validation {
            index,
            field,
            message,
        };
        let finite = |field: &'static str, v: f64| -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(bad(field, format!("must be finite, got {v}")))
            }
        };
        finite("D_mm", self.diameter_mm)?;
        if self.diameter_mm <= 0.0 {
            return Err(bad(
                "D_mm",
                format!("must be positive, got {}", self.diameter_mm),
            ));
        }
        match self.kind {
            SegmentKind::Straight { length_mm } => {
                finite("length_mm", length_mm)?;
                if length_mm <= 0.0 {
                    return Err(bad(
                        "length_mm",
                        format!("must be positive, got {length_mm}"),
                    ));
                }
            }
            SegmentKind::Elbow {
                bend_radius_mm,
                bend_angle_deg,
                turn_plane_roll_deg,
            } => {
                finite("bend_radius_mm", bend_radius_mm)?;
                finite("bend_angle_deg", bend_angle_deg)?;
                finite("turn_plane_roll_deg", turn_plane_roll_deg)?;
                if bend_radius_mm <= 0.0 {
                    return Err(bad(
                        "bend_radius_mm",
                        format!("must be positive, got {bend_radius_mm}"),
                    ));
                }
                if !(bend_angle_deg > 0.0 && bend_angle_deg <= 180.0) {
                    return Err(bad(
                        "bend_angle_deg",
                        format!("must lie in (0, 180], got {bend_angle_deg}"),
                    ));
                }
            }
            SegmentKind::TJunction {
                branch_roll_deg, ..
            } => finite("branch_roll_deg", branch_roll_deg)?,
        }
        Ok(())
    }
}

/// Three module path radii in a bend, from the roll `theta5` of module 1
/// relative to the inner side of the bend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ElbowRatioMode {
    /// `rᵢ = 1.5D − 0.5D·cos(θ₅ − φᵢ)`, the fixed 1.5D-bend rule.
    FixedBend,
    /// `rᵢ = R_bend − 0.5D·cos(θ₅ − φᵢ)` using the segment's own bend radius.
    #[default]
    Generalized,
}

/// Module path radii (mm) through an elbow; `φᵢ = 0°, +120°, −120°`.
pub fn module_path_radii(
    elbow: &PipeSegment,
    theta5: f64,
    mode: ElbowRatioMode,
) -> Result<[f64; 3]> {
    let SegmentKind::Elbow { bend_radius_mm, .. } = elbow.kind else {
        return Err(Error::NotAnElbow);
    };
    let d = elbow.diameter_mm;
    let center = match mode {
        ElbowRatioMode::FixedBend => 1.5 * d,
        ElbowRatioMode::Generalized => bend_radius_mm,
    };
    let offsets = [0.0, MODULE_SPACING, -MODULE_SPACING];
    Ok(offsets.map(|phi| center - 0.5 * d * (theta5 - phi).cos()))
}

/// Validated, immutable pipe network traversed in segment order.
#[derive(Debug, Clone, PartialEq)]
pub struct PipeNetwork {
    segments: Vec<PipeSegment>,
    tee_radius_fraction: f64,
    starts: Vec<Isometry3<f64>>,
    cumulative: Vec<f64>,
}

#[derive(Serialize)]
struct NetworkDoc<'a> {
    segments: &'a [PipeSegment],
}

impl PipeNetwork {
    pub fn new(segments: Vec<PipeSegment>) -> Result<Self> {
        Self::with_tee_radius_fraction(segments, DEFAULT_TEE_RADIUS_FRACTION)
    }

    /// `fraction` sets the branch-exit centerline radius of every tee to
    /// `fraction·D`, in `(0, 0.5]`.
    pub fn with_tee_radius_fraction(segments: Vec<PipeSegment>, fraction: f64) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Document("network has no segments".into()));
        }
        if !(fraction > 0.0 && fraction <= 0.5) {
            return Err(Error::InvalidArgument(format!(
                "tee radius fraction must lie in (0, 0.5], got {fraction}"
            )));
        }
        for (i, seg) in segments.iter().enumerate() {
            seg.validate(i)?;
            if i > 0 && seg.diameter_mm != segments[i - 1].diameter_mm {
                return Err(Error::Validation {
                    index: i,
                    field: "D_mm",
                    message: format!(
                        "diameter {} differs from previous segment {}",
                        seg.diameter_mm,
                        segments[i - 1].diameter_mm
                    ),
                });
            }
        }
        let mut net = Self {
            segments,
            tee_radius_fraction: fraction,
            starts: Vec::new(),
            cumulative: Vec::new(),
        };
        let mut frame = Isometry3::identity();
        let mut total = 0.0;
        for i in 0..net.segments.len() {
            net.starts.push(frame);
            net.cumulative.push(total);
            let len = net.segment_length(i);
            frame *= net.local_pose(i, len);
            total += len;
        }
        net.cumulative.push(total);
        Ok(net)
    }

    pub fn segments(&self) -> &[PipeSegment] {
        &self.segments
    }

    pub fn segment(&self, index: usize) -> Option<&PipeSegment> {
        self.segments.get(index)
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn tee_radius_mm(&self, index: usize) -> f64 {
        self.tee_radius_fraction * self.segments[index].diameter_mm
    }

    /// Centerline length of one segment. Elbows contribute `R·angle`; a tee
    /// taken through contributes `D`; the branch exit contributes a lead-in,
    /// a quarter arc and a lead-out that together span the junction.
    pub fn segment_length(&self, index: usize) -> f64 {
        let seg = &self.segments[index];
        match seg.kind {
            SegmentKind::Straight { length_mm } => length_mm,
            SegmentKind::Elbow {
                bend_radius_mm,
                bend_angle_deg,
                ..
            } => bend_radius_mm * bend_angle_deg.to_radians(),
            SegmentKind::TJunction {
                exit: TeeExit::Through,
                ..
            } => seg.diameter_mm,
            SegmentKind::TJunction {
                exit: TeeExit::Branch,
                ..
            } => {
                let radius = self.tee_radius_mm(index);
                let lead = seg.diameter_mm / 2.0 - radius;
                2.0 * lead + radius * FRAC_PI_2
            }
        }
    }

    /// Arc length from the network start to the start of `index`.
    pub fn segment_start(&self, index: usize) -> f64 {
        self.cumulative[index]
    }

    pub fn total_length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Pose of the centerline at arc length `s` into segment `index`, with
    /// the frame's `z` axis along the tangent. The network starts at the
    /// origin heading along `+z`.
    pub fn centerline_pose(&self, index: usize, s: f64) -> Result<Isometry3<f64>> {
        if index >= self.segments.len() {
            return Err(Error::InvalidArgument(format!(
                "segment {index} does not exist"
            )));
        }
        let length = self.segment_length(index);
        if !(0.0..=length).contains(&s) {
            return Err(Error::OutOfRange { index, s, length });
        }
        Ok(self.starts[index] * self.local_pose(index, s))
    }

    /// Pose at `s` relative to the segment's entry frame.
    fn local_pose(&self, index: usize, s: f64) -> Isometry3<f64> {
        let seg = &self.segments[index];
        match seg.kind {
            SegmentKind::Straight { .. }
            | SegmentKind::TJunction {
                exit: TeeExit::Through,
                ..
            } => Isometry3::translation(0.0, 0.0, s),
            SegmentKind::Elbow {
                bend_radius_mm,
                turn_plane_roll_deg,
                ..
            } => arc_pose(bend_radius_mm, turn_plane_roll_deg.to_radians(), s),
            SegmentKind::TJunction {
                branch_roll_deg,
                exit: TeeExit::Branch,
            } => {
                let radius = self.tee_radius_mm(index);
                let lead = seg.diameter_mm / 2.0 - radius;
                let arc_len = radius * FRAC_PI_2;
                let roll = branch_roll_deg.to_radians();
                if s <= lead {
                    Isometry3::translation(0.0, 0.0, s)
                } else if s <= lead + arc_len {
                    Isometry3::translation(0.0, 0.0, lead) * arc_pose(radius, roll, s - lead)
                } else {
                    Isometry3::translation(0.0, 0.0, lead)
                        * arc_pose(radius, roll, arc_len)
                        * Isometry3::translation(0.0, 0.0, s - lead - arc_len)
                }
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&NetworkDoc {
            segments: &self.segments,
        })?)
    }
}

/// Circular arc of radius `radius` bending toward roll direction `roll`.
fn arc_pose(radius: f64, roll: f64, s: f64) -> Isometry3<f64> {
    let theta = s / radius;
    let inward = Vector3::new(roll.cos(), roll.sin(), 0.0);
    let position = inward * radius * (1.0 - theta.cos()) + Vector3::z() * radius * theta.sin();
    let axis = Unit::new_normalize(Vector3::z().cross(&inward));
    Isometry3::from_parts(
        Translation3::from(position),
        UnitQuaternion::from_axis_angle(&axis, theta),
    )
}

/// Parses and validates a network document.
pub fn load_network(document: &str) -> Result<PipeNetwork> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Doc {
        segments: Vec<serde_json::Value>,
    }
    let doc: Doc = serde_json::from_str(document).map_err(|e| Error::Document(e.to_string()))?;
    let segments = doc
        .segments
        .into_iter()
        .enumerate()
        .map(|(index, value)| {
            serde_json::from_value::<SegmentDoc>(value)
                .map(PipeSegment::from)
                .map_err(|e| Error::Parse {
                    index,
                    message: e.to_string(),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    PipeNetwork::new(segments)
}
