//! Actor motion: straight-line walks and anchored sway.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Operating envelope of line trajectories.
pub const SPEED_RANGE: (f64, f64) = (1.0, 3.0);
pub const RANGE_LIMITS: (f64, f64) = (5.0, 10.0);

/// Rigid placement of a mesh at one instant:
/// `world = position + rotate_yaw(v, yaw) + lean * v.y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    pub yaw: f64,
    /// Horizontal displacement per metre of height (a shear about the base).
    pub lean: Vec3,
}

impl Pose {
    pub fn at(position: Vec3) -> Self {
        Pose {
            position,
            yaw: 0.0,
            lean: Vec3::default(),
        }
    }

    pub fn apply(&self, v: Vec3) -> Vec3 {
        self.position + v.rotate_yaw(self.yaw) + self.lean * v.y
    }
}

/// One wind gust: the sway envelope rises and falls as a raised cosine over
/// `[start_s, start_s + duration_s]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gust {
    pub start_s: f64,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Trajectory {
    /// Uniform motion through `anchor` at time `t_mid`, heading measured
    /// from the `+x` axis towards `+z`. The actor is present only while
    /// within `half_length` of the anchor along the path.
    Line {
        anchor: Vec3,
        speed: f64,
        heading: f64,
        t_mid: f64,
        half_length: f64,
    },
    /// Anchored at `base`; the top sways by `amplitude * sin(2 pi f t + phase)`
    /// along azimuth `direction`, scaled by the gust envelope. An empty gust
    /// list means a steady sway.
    Oscillation {
        base: Vec3,
        amplitude: f64,
        frequency: f64,
        phase: f64,
        direction: f64,
        gusts: Vec<Gust>,
    },
}

impl Trajectory {
    /// Pose at time `t` for a mesh of height `height`; `None` while absent.
    pub fn pose(&self, t: f64, height: f64) -> Option<Pose> {
        match *self {
            Trajectory::Line {
                anchor,
                speed,
                heading,
                t_mid,
                half_length,
            } => {
                let s = speed * (t - t_mid);
                if s.abs() > half_length {
                    return None;
                }
                let dir = Vec3::new(heading.cos(), 0.0, heading.sin());
                Some(Pose {
                    position: anchor + dir * s,
                    yaw: -heading,
                    lean: Vec3::default(),
                })
            }
            Trajectory::Oscillation {
                base,
                direction,
                ..
            } => {
                let top = self.sway(t);
                let lean = if height > 0.0 {
                    Vec3::new(direction.cos(), 0.0, direction.sin()) * (top / height)
                } else {
                    Vec3::default()
                };
                Some(Pose {
                    position: base,
                    yaw: 0.0,
                    lean,
                })
            }
        }
    }

    /// Horizontal displacement of the mesh top (oscillation) or of the
    /// reference point along the path (line) at time `t`.
    pub fn sway(&self, t: f64) -> f64 {
        match self {
            Trajectory::Line {
                speed, t_mid, ..
            } => speed * (t - t_mid),
            Trajectory::Oscillation {
                amplitude,
                frequency,
                phase,
                gusts,
                ..
            } => amplitude * gust_envelope(gusts, t) * (2.0 * PI * frequency * t + phase).sin(),
        }
    }

    /// Reference range (m): anchor depth of a walk, base depth of a sway.
    pub fn range(&self) -> f64 {
        match self {
            Trajectory::Line { anchor, .. } => anchor.z,
            Trajectory::Oscillation { base, .. } => base.z,
        }
    }

    /// Checks the operating envelope: walking speed within 1–3 m/s and the
    /// reference range within 5–10 m.
    pub fn check_envelope(&self) -> Result<()> {
        if let Trajectory::Line { speed, .. } = *self {
            if !(SPEED_RANGE.0..=SPEED_RANGE.1).contains(&speed) {
                return Err(Error::InvalidInput(format!(
                    "speed {speed} m/s outside [{}, {}] m/s",
                    SPEED_RANGE.0, SPEED_RANGE.1
                )));
            }
        }
        let r = self.range();
        if !(RANGE_LIMITS.0 - 1e-9..=RANGE_LIMITS.1 + 1e-9).contains(&r) {
            return Err(Error::InvalidInput(format!(
                "range {r} m outside [{}, {}] m",
                RANGE_LIMITS.0, RANGE_LIMITS.1
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Trajectory::Line {
                speed,
                half_length,
                ..
            } => {
                if !(*speed > 0.0 && *half_length >= 0.0) {
                    return Err(Error::InvalidInput("line speed must be > 0".into()));
                }
            }
            Trajectory::Oscillation {
                amplitude,
                frequency,
                gusts,
                ..
            } => {
                if !(*amplitude >= 0.0 && *frequency >= 0.0) {
                    return Err(Error::InvalidInput("sway amplitude and frequency must be >= 0".into()));
                }
                if gusts.iter().any(|g| !(g.duration_s > 0.0)) {
                    return Err(Error::InvalidInput("gust duration must be > 0".into()));
                }
            }
        }
        Ok(())
    }
}

/// Sum of raised-cosine bumps, capped at 1.
pub fn gust_envelope(gusts: &[Gust], t: f64) -> f64 {
    if gusts.is_empty() {
        return 1.0;
    }
    let e: f64 = gusts
        .iter()
        .filter(|g| t >= g.start_s && t <= g.start_s + g.duration_s)
        .map(|g| 0.5 * (1.0 - (2.0 * PI * (t - g.start_s) / g.duration_s).cos()))
        .sum();
    e.min(1.0)
}
