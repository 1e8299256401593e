//! Waypoint densification and embodiment placement.
//!
//! Consecutive wayposes of a densified path differ by at most
//! [`MAX_STEP_TRANSLATION`] meters and [`MAX_STEP_ROTATION_DEG`] degrees of
//! geodesic rotation. Position and orientation share one step count so they
//! stay in lockstep.
//!
//! World frame is z-up with the floor at z = 0. Orientations are
//! camera-to-world rotations (camera +z forward, +y down).

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_STEP_TRANSLATION: f64 = 0.05;
pub const MAX_STEP_ROTATION_DEG: f64 = 0.5;

const UNIT_TOL: f64 = 1e-9;

/// Step counts within this of an integer are not bumped up by `ceil`.
const STEP_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WayposeRecord", into = "WayposeRecord")]
pub struct Waypose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

/// On-disk form: position in meters, quaternion as `[w, x, y, z]`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct WayposeRecord {
    pub position: [f64; 3],
    pub orientation: [f64; 4],
}

impl TryFrom<WayposeRecord> for Waypose {
    type Error = Error;

    fn try_from(r: WayposeRecord) -> Result<Self> {
        let [w, x, y, z] = r.orientation;
        Waypose::new(Vector3::from(r.position), Quaternion::new(w, x, y, z))
    }
}

impl From<Waypose> for WayposeRecord {
    fn from(p: Waypose) -> Self {
        let q = p.orientation.quaternion();
        WayposeRecord {
            position: [p.position.x, p.position.y, p.position.z],
            orientation: [q.w, q.i, q.j, q.k],
        }
    }
}

fn check_unit(q: &Quaternion<f64>) -> Result<()> {
    let n = q.norm();
    if !n.is_finite() || (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::InvalidPose(format!("quaternion norm {n} is not 1")));
    }
    Ok(())
}

impl Waypose {
    /// Rejects quaternions whose norm is off by more than 1e-9.
    pub fn new(position: Vector3<f64>, orientation: Quaternion<f64>) -> Result<Self> {
        if !position.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidPose("non-finite position".into()));
        }
        check_unit(&orientation)?;
        Ok(Self {
            position,
            orientation: UnitQuaternion::new_unchecked(orientation),
        })
    }

    /// Level camera at `position` facing `yaw_deg` (counter-clockwise from
    /// world +x about +z).
    pub fn looking(position: Vector3<f64>, yaw_deg: f64) -> Self {
        let (s, c) = yaw_deg.to_radians().sin_cos();
        let forward = Vector3::new(c, s, 0.0);
        let right = Vector3::new(s, -c, 0.0);
        let down = Vector3::new(0.0, 0.0, -1.0);
        let m = nalgebra::Matrix3::from_columns(&[right, down, forward]);
        let rot = nalgebra::Rotation3::from_matrix_unchecked(m);
        Self {
            position,
            orientation: UnitQuaternion::from_rotation_matrix(&rot),
        }
    }
}

/// Geodesic angle in radians between two orientations.
pub fn rotation_angle(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    let d = a.inverse() * b;
    let q = d.quaternion();
    2.0 * q.imag().norm().atan2(q.w.abs())
}

/// Shortest-arc interpolation; `t = 0` gives `a`, `t = 1` gives `b` or `-b`.
fn slerp(a: &Quaternion<f64>, b: &Quaternion<f64>, t: f64) -> Quaternion<f64> {
    let b = if a.dot(b) < 0.0 { -b } else { *b };
    // 4D arc angle between a and b (half the rotation angle), without acos.
    let omega = 2.0 * (a - b).norm().atan2((a + b).norm());
    let out = if omega < 1e-12 {
        a * (1.0 - t) + b * t
    } else {
        let s = omega.sin();
        a * (((1.0 - t) * omega).sin() / s) + b * ((t * omega).sin() / s)
    };
    out.normalize()
}

/// Interpolates `a -> b` inclusive, in
/// `n = max(ceil(dist / 5cm), ceil(angle / 0.5°), 1)` steps.
pub fn densify_segment(a: &Waypose, b: &Waypose) -> Result<Vec<Waypose>> {
    check_unit(a.orientation.quaternion())?;
    check_unit(b.orientation.quaternion())?;
    let dist = (b.position - a.position).norm();
    let angle = rotation_angle(&a.orientation, &b.orientation);
    let steps_for = |x: f64, limit: f64| (x / limit - STEP_SLACK).ceil().max(0.0) as usize;
    let n = steps_for(dist, MAX_STEP_TRANSLATION)
        .max(steps_for(angle, MAX_STEP_ROTATION_DEG.to_radians()))
        .max(1);
    let (qa, qb) = (a.orientation.quaternion(), b.orientation.quaternion());
    let mut out = Vec::with_capacity(n + 1);
    out.push(*a);
    for i in 1..n {
        let t = i as f64 / n as f64;
        out.push(Waypose {
            position: a.position + (b.position - a.position) * t,
            orientation: UnitQuaternion::new_unchecked(slerp(qa, qb, t)),
        });
    }
    out.push(*b);
    Ok(out)
}

/// Densifies every leg and drops the repeated junction poses.
pub fn densify_path(waypoints: &[Waypose]) -> Result<Vec<Waypose>> {
    if waypoints.len() < 2 {
        return Err(Error::InvalidPose(format!(
            "need at least 2 waypoints, got {}",
            waypoints.len()
        )));
    }
    let mut out = vec![waypoints[0]];
    for pair in waypoints.windows(2) {
        let seg = densify_segment(&pair[0], &pair[1])?;
        out.extend_from_slice(&seg[1..]);
    }
    Ok(out)
}

/// Largest translation and rotation (degrees) between consecutive poses.
pub fn max_step(traj: &[Waypose]) -> (f64, f64) {
    traj.windows(2).fold((0.0f64, 0.0f64), |(t, r), w| {
        (
            t.max((w[1].position - w[0].position).norm()),
            r.max(rotation_angle(&w[0].orientation, &w[1].orientation).to_degrees()),
        )
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorOffset {
    /// `[w, x, y, z]`, body-to-sensor rotation.
    pub rotation: [f64; 4],
    /// Body-frame offset in meters.
    pub translation: [f64; 3],
}

impl Default for SensorOffset {
    fn default() -> Self {
        Self {
            rotation: [1.0, 0.0, 0.0, 0.0],
            translation: [0.0; 3],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Illumination {
    Ambient,
    Active { power_w: f64 },
}

/// Robot-specific sensor placement. Illumination is validated and carried
/// along for renderers; it does not change the trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbodimentConfig {
    pub sensor_height_m: f64,
    #[serde(default)]
    pub sensor_offset: SensorOffset,
    pub illumination: Illumination,
}

impl EmbodimentConfig {
    pub fn at_height(sensor_height_m: f64) -> Self {
        Self {
            sensor_height_m,
            sensor_offset: SensorOffset::default(),
            illumination: Illumination::Ambient,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.sensor_height_m.is_finite() || self.sensor_height_m < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "sensor height {} must be non-negative",
                self.sensor_height_m
            )));
        }
        if let Illumination::Active { power_w } = self.illumination {
            if !power_w.is_finite() || power_w <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "active illumination needs positive power, got {power_w}"
                )));
            }
        }
        let [w, x, y, z] = self.sensor_offset.rotation;
        check_unit(&Quaternion::new(w, x, y, z))
            .map_err(|e| Error::InvalidConfig(format!("sensor offset: {e}")))?;
        if !self.sensor_offset.translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("sensor offset translation".into()));
        }
        Ok(())
    }
}

/// Places the sensor on each body pose: the body is lifted to
/// `sensor_height_m` above the floor, then the body-frame offset applied.
pub fn apply_embodiment(traj: &[Waypose], cfg: &EmbodimentConfig) -> Result<Vec<Waypose>> {
    cfg.validate()?;
    let [w, x, y, z] = cfg.sensor_offset.rotation;
    let q_off = UnitQuaternion::new_unchecked(Quaternion::new(w, x, y, z));
    let t_off = Vector3::from(cfg.sensor_offset.translation);
    let identity = cfg.sensor_offset == SensorOffset::default();
    Ok(traj
        .iter()
        .map(|p| {
            let mut position = p.position;
            position.z = cfg.sensor_height_m;
            if identity {
                return Waypose {
                    position,
                    orientation: p.orientation,
                };
            }
            Waypose {
                position: position + p.orientation * t_off,
                orientation: p.orientation * q_off,
            }
        })
        .collect())
}
