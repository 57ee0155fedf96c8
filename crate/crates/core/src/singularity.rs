//! Motion-singularity geometry in T-junctions.
//!
//! While the robot pivots into the branch of a tee, the pipe wall it presses
//! against is seen through cut planes tilted by `φ` from the perpendicular
//! cross-section. Such a cut is an ellipse with semi-minor `D/2` and
//! semi-major `D / (2 cos φ)`. A module whose ray points near a major-axis end
//! finds the wall farther away than its reach and loses contact; with only two
//! modules pressing, the robot lacks traction to complete the turn.
//!
//! Angles on the cross-section come in two frames:
//! * `ψ`, measured from the ellipse major axis ([`contact_loss_arcs`]);
//! * the turn frame, measured from the turning direction, which is where the
//!   roll `θ₅` of module 1 lives. The major axis sits at
//!   [`MAJOR_AXIS_IN_TURN_FRAME_DEG`] in that frame.
//!
//! Orientations repeat every 120° because the three modules are identical, so
//! the forbidden roll set is kept modulo 120°.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::kinematics::RobotGeometry;
use crate::{Error, Result};

/// Period of the robot's roll symmetry.
pub const ORIENTATION_PERIOD_DEG: f64 = 120.0;

/// Direction of the cut ellipse's major axis, measured from the turning
/// direction. With this placement the pose with one module on the turning
/// direction sits at the centre of a free gap.
pub const MAJOR_AXIS_IN_TURN_FRAME_DEG: f64 = 90.0;

/// Sector measure that the default reach is calibrated against.
pub const REFERENCE_SECTOR_DEG: f64 = 96.54;

const TIE_TOL_DEG: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseSection {
    pub semi_major_mm: f64,
    pub semi_minor_mm: f64,
    /// Tilt of the cut plane from the perpendicular cross-section, rad.
    pub tilt_rad: f64,
}

impl EllipseSection {
    /// Ellipse from its semi-axes; the tilt is the one that produces it from a
    /// circle of radius `semi_minor`.
    pub fn new(semi_major_mm: f64, semi_minor_mm: f64) -> Result<Self> {
        if !(semi_minor_mm > 0.0 && semi_major_mm >= semi_minor_mm && semi_major_mm.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "ellipse needs semi_major >= semi_minor > 0, got {semi_major_mm}, {semi_minor_mm}"
            )));
        }
        Ok(Self {
            semi_major_mm,
            semi_minor_mm,
            tilt_rad: (semi_minor_mm / semi_major_mm).acos(),
        })
    }
}

/// Polar distance from the centre to the ellipse at angle `psi` (rad) from
/// the major axis.
pub fn ellipse_radial_distance(e: &EllipseSection, psi: f64) -> f64 {
    let (a, b) = (e.semi_major_mm, e.semi_minor_mm);
    let (s, c) = psi.sin_cos();
    a * b / (b * b * c * c + a * a * s * s).sqrt()
}

/// Section of a pipe of diameter `d_mm` cut by a plane tilted `phi` rad.
pub fn cross_section_at(d_mm: f64, phi: f64) -> Result<EllipseSection> {
    if !(d_mm > 0.0 && d_mm.is_finite()) || !(0.0..FRAC_PI_2).contains(&phi) {
        return Err(Error::InvalidSection {
            tilt_deg: phi.to_degrees(),
        });
    }
    let b = d_mm / 2.0;
    Ok(EllipseSection {
        semi_major_mm: b / phi.cos(),
        semi_minor_mm: b,
        tilt_rad: phi,
    })
}

/// Closed angular interval on a circle, in degrees, given by centre and
/// half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub center_deg: f64,
    pub half_width_deg: f64,
}

impl Arc {
    pub fn start_deg(&self) -> f64 {
        self.center_deg - self.half_width_deg
    }

    pub fn end_deg(&self) -> f64 {
        self.center_deg + self.half_width_deg
    }

    pub fn rotated(&self, by_deg: f64) -> Self {
        Self {
            center_deg: self.center_deg + by_deg,
            ..*self
        }
    }
}

/// Interval `[start_deg, end_deg]`. On a circle, `end_deg < start_deg` marks
/// an interval wrapping through zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start_deg: f64,
    pub end_deg: f64,
}

/// Arcs around both major-axis ends where the wall lies beyond `reach_mm`,
/// in the major-axis frame `ψ`.
///
/// The boundary solves `b²cos²ψ + a²sin²ψ = (ab/reach)²`, i.e.
/// `sin²ψ = ((ab/reach)² − b²) / (a² − b²)`.
pub fn contact_loss_arcs(e: &EllipseSection, reach_mm: f64) -> Result<Vec<Arc>> {
    let (a, b) = (e.semi_major_mm, e.semi_minor_mm);
    if reach_mm < b {
        return Err(Error::InsufficientReach {
            reach_mm,
            semi_minor_mm: b,
        });
    }
    if reach_mm >= a {
        return Ok(Vec::new());
    }
    let target = (a * b / reach_mm).powi(2);
    let sin2 = ((target - b * b) / (a * a - b * b)).clamp(0.0, 1.0);
    let half_width_deg = sin2.sqrt().asin().to_degrees();
    Ok(vec![
        Arc {
            center_deg: 0.0,
            half_width_deg,
        },
        Arc {
            center_deg: 180.0,
            half_width_deg,
        },
    ])
}

/// Sorted, disjoint closed intervals on a circle of circumference `period`.
#[derive(Debug, Clone, PartialEq)]
struct CircleSet {
    period: f64,
    intervals: Vec<(f64, f64)>,
}

impl CircleSet {
    fn from_arcs<'a>(period: f64, arcs: impl IntoIterator<Item = &'a Arc>) -> Self {
        let mut raw = Vec::new();
        for arc in arcs {
            let width = 2.0 * arc.half_width_deg;
            if width >= period {
                raw.clear();
                raw.push((0.0, period));
                return Self::merged(period, raw);
            }
            let start = crate::angle::wrap(arc.start_deg(), period);
            let end = start + width;
            if end > period {
                raw.push((start, period));
                raw.push((0.0, end - period));
            } else {
                raw.push((start, end));
            }
        }
        Self::merged(period, raw)
    }

    fn merged(period: f64, mut raw: Vec<(f64, f64)>) -> Self {
        raw.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
        let mut intervals: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (s, e) in raw {
            match intervals.last_mut() {
                Some(last) if s <= last.1 => last.1 = last.1.max(e),
                _ => intervals.push((s, e)),
            }
        }
        Self { period, intervals }
    }

    fn measure(&self) -> f64 {
        self.intervals
            .iter()
            .map(|(s, e)| e - s)
            .sum::<f64>()
            .min(self.period)
    }

    /// Intervals with pieces touching `0` and `period` joined into one
    /// wrapping interval.
    fn wrapped_intervals(&self) -> Vec<Interval> {
        let mut out: Vec<Interval> = self
            .intervals
            .iter()
            .map(|&(s, e)| Interval {
                start_deg: s,
                end_deg: e,
            })
            .collect();
        if out.len() >= 2 && out[0].start_deg <= 0.0 && out[out.len() - 1].end_deg >= self.period {
            let first = out.remove(0);
            let last = out.last_mut().unwrap();
            last.end_deg = first.end_deg;
        }
        out
    }

    /// Open gaps of the complement, as (start, width) with start in
    /// `[0, period)`.
    fn gaps(&self) -> Vec<(f64, f64)> {
        if self.intervals.is_empty() {
            return vec![(0.0, self.period)];
        }
        let n = self.intervals.len();
        let mut gaps = Vec::new();
        for i in 0..n {
            let end = self.intervals[i].1;
            let next_start = if i + 1 < n {
                self.intervals[i + 1].0
            } else {
                self.intervals[0].0 + self.period
            };
            if next_start > end {
                gaps.push((crate::angle::wrap(end, self.period), next_start - end));
            }
        }
        gaps
    }
}

/// Forbidden roll orientations for one junction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularityRegion {
    /// Contact-loss arcs on the cross-section circle, turn frame.
    pub forbidden_arcs: Vec<Interval>,
    /// Forbidden `θ₅` values modulo 120°.
    pub orientation_forbidden_set: Vec<Interval>,
    pub sector_measure_deg: f64,
    /// Rotation available on either side of the preferred orientation,
    /// `(120° − sector) / 2`.
    pub free_margin_deg: f64,
}

impl SingularityRegion {
    pub fn empty() -> Self {
        orientation_forbidden_set(&[])
    }

    fn orientation_set(&self) -> CircleSet {
        CircleSet::merged(
            ORIENTATION_PERIOD_DEG,
            self.orientation_forbidden_set
                .iter()
                .flat_map(|iv| {
                    if iv.end_deg < iv.start_deg {
                        vec![(iv.start_deg, ORIENTATION_PERIOD_DEG), (0.0, iv.end_deg)]
                    } else {
                        vec![(iv.start_deg, iv.end_deg)]
                    }
                })
                .collect(),
        )
    }

    pub fn is_empty(&self) -> bool {
        self.sector_measure_deg == 0.0
    }

    pub fn free_measure_deg(&self) -> f64 {
        ORIENTATION_PERIOD_DEG - self.sector_measure_deg
    }

    /// Centres of the free gaps, degrees in `[0, 120)`.
    pub fn free_gap_centers_deg(&self) -> Vec<f64> {
        let set = self.orientation_set();
        if set.intervals.is_empty() {
            // no constraint: every pose equals the preferred one modulo 120°
            return vec![0.0];
        }
        set.gaps()
            .into_iter()
            .map(|(s, w)| crate::angle::wrap(s + w / 2.0, ORIENTATION_PERIOD_DEG))
            .collect()
    }

    /// Whether roll `theta5` (rad, turn frame) puts some module in contact loss.
    pub fn contains(&self, theta5: f64) -> bool {
        let x = crate::angle::wrap(theta5.to_degrees(), ORIENTATION_PERIOD_DEG);
        self.orientation_forbidden_set.iter().any(|iv| {
            if iv.start_deg <= iv.end_deg {
                iv.start_deg <= x && x <= iv.end_deg
            } else {
                x >= iv.start_deg || x <= iv.end_deg
            }
        })
    }
}

/// Builds the roll-orientation region from contact-loss arcs given in the
/// turn frame: `θ₅` is forbidden iff one of `θ₅`, `θ₅ ± 120°` falls in an
/// arc, which reduces to the arcs taken modulo 120°.
pub fn orientation_forbidden_set(arcs: &[Arc]) -> SingularityRegion {
    let circle = CircleSet::from_arcs(360.0, arcs);
    let orientation = CircleSet::from_arcs(ORIENTATION_PERIOD_DEG, arcs);
    let sector = orientation.measure();
    SingularityRegion {
        forbidden_arcs: circle.wrapped_intervals(),
        orientation_forbidden_set: orientation.wrapped_intervals(),
        sector_measure_deg: sector,
        free_margin_deg: (ORIENTATION_PERIOD_DEG - sector) / 2.0,
    }
}

/// Tilt of the plane through the tee centre and the far rim of the branch
/// mouth. Equal bores give 45°.
pub fn tee_mouth_tilt(main_d_mm: f64, branch_d_mm: f64) -> f64 {
    (branch_d_mm / main_d_mm).atan()
}

/// Parameters of the cut-plane sweep through a tee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeeSweep {
    pub phi_max_rad: f64,
    pub steps: usize,
}

impl Default for TeeSweep {
    fn default() -> Self {
        Self {
            phi_max_rad: tee_mouth_tilt(1.0, 1.0),
            steps: 91,
        }
    }
}

/// Union of the forbidden sets of the cut sections for `φ` in
/// `[0, phi_max]`, sampled at `steps` evenly spaced tilts.
pub fn sweep_t_junction(
    d_mm: f64,
    geom: &RobotGeometry,
    phi_max: f64,
    steps: usize,
) -> Result<SingularityRegion> {
    if steps < 2 {
        return Err(Error::InvalidArgument(format!(
            "sweep needs at least 2 steps, got {steps}"
        )));
    }
    let mut arcs = Vec::new();
    for k in 0..steps {
        let phi = phi_max * k as f64 / (steps - 1) as f64;
        let section = cross_section_at(d_mm, phi)?;
        arcs.extend(
            contact_loss_arcs(&section, geom.reach_max_mm)?
                .into_iter()
                .map(|a| a.rotated(MAJOR_AXIS_IN_TURN_FRAME_DEG)),
        );
    }
    Ok(orientation_forbidden_set(&arcs))
}

pub fn sweep_with(d_mm: f64, geom: &RobotGeometry, sweep: &TeeSweep) -> Result<SingularityRegion> {
    sweep_t_junction(d_mm, geom, sweep.phi_max_rad, sweep.steps)
}

pub fn in_singularity(theta5: f64, region: &SingularityRegion) -> bool {
    region.contains(theta5)
}

/// Smallest signed rotation (rad) taking `theta5` to the centre of a free
/// gap. Ties prefer the positive rotation.
pub fn escape_rotation(theta5: f64, region: &SingularityRegion) -> Result<f64> {
    if region.free_measure_deg() <= 0.0 {
        return Err(Error::NoEscape);
    }
    let here = theta5.to_degrees();
    let mut best: Option<f64> = None;
    for center in region.free_gap_centers_deg() {
        let delta = crate::angle::wrap_signed(center - here, ORIENTATION_PERIOD_DEG);
        best = match best {
            None => Some(delta),
            Some(b) if (delta.abs() - b.abs()).abs() <= TIE_TOL_DEG => Some(b.max(delta)),
            Some(b) if delta.abs() < b.abs() => Some(delta),
            keep => keep,
        };
    }
    let delta = best.ok_or(Error::NoEscape)?;
    if delta.abs() <= TIE_TOL_DEG {
        Ok(0.0)
    } else {
        Ok(delta.to_radians())
    }
}

pub fn failure_probability(region: &SingularityRegion) -> f64 {
    (region.sector_measure_deg / ORIENTATION_PERIOD_DEG).clamp(0.0, 1.0)
}

/// Reach at which the swept sector measure equals `target_sector_deg`,
/// found by bisection. The sector shrinks monotonically as reach grows.
pub fn calibrate_reach_max(d_mm: f64, target_sector_deg: f64, sweep: &TeeSweep) -> Result<f64> {
    let sector = |reach: f64| -> Result<f64> {
        let geom = RobotGeometry {
            reach_max_mm: reach,
            ..RobotGeometry::jacobian_only(1.0, 1.0)
        };
        Ok(sweep_with(d_mm, &geom, sweep)?.sector_measure_deg)
    };
    let mut lo = d_mm / 2.0;
    let mut hi = d_mm / (2.0 * sweep.phi_max_rad.cos());
    let (s_lo, s_hi) = (sector(lo)?, sector(hi)?);
    if !(s_hi <= target_sector_deg && target_sector_deg <= s_lo) {
        return Err(Error::InvalidArgument(format!(
            "target sector {target_sector_deg}° outside attainable range [{s_hi}, {s_lo}]°"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sector(mid)? > target_sector_deg {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
