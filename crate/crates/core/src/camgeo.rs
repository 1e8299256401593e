//! Pinhole camera model: projection, depth unprojection, prompt visibility.
//!
//! Conventions: extrinsics map world coordinates into the camera frame
//! (`q = R·p + T`), the camera looks down its +z axis with +x right and +y
//! down, and pixel `(0, 0)` is the top-left pixel centre. Depth is the
//! camera-frame z coordinate, not the ray length.

use nalgebra::{Matrix3, Matrix3x4, Matrix4, Point3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::PixelPoint;

/// World-frame point in meters.
pub type WorldPoint = Point3<f64>;

const RIGID_TOL: f64 = 1e-9;

/// Default tolerance for the depth-test in [`prompt_visible`], meters.
pub const DEFAULT_VISIBILITY_TOL: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let k = Self { fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.fx, self.fy, self.cx, self.cy].iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidCamera("non-finite intrinsics".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidCamera(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Reads `fx, fy, cx, cy` from a calibration matrix with zero skew.
    pub fn from_matrix(k: &Matrix3<f64>) -> Result<Self> {
        let zero = [k[(0, 1)], k[(1, 0)], k[(2, 0)], k[(2, 1)]];
        if zero.iter().any(|&x| x != 0.0) || k[(2, 2)] != 1.0 {
            return Err(Error::InvalidCamera(
                "intrinsics must be [[fx,0,cx],[0,fy,cy],[0,0,1]]".into(),
            ));
        }
        Self::new(k[(0, 0)], k[(1, 1)], k[(0, 2)], k[(1, 2)])
    }
}

/// Rotation plus translation, `x ↦ R·x + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|x| x.is_finite()) {
            return Err(Error::InvalidPose("non-finite transform".into()));
        }
        let ortho_err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if ortho_err > RIGID_TOL {
            return Err(Error::InvalidPose(format!(
                "rotation is not orthonormal (max deviation {ortho_err:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > RIGID_TOL {
            return Err(Error::InvalidPose(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_quaternion(q: &UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: *q.to_rotation_matrix().matrix(),
            translation,
        }
    }

    pub fn from_matrix4(m: &Matrix4<f64>) -> Result<Self> {
        let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::InvalidPose("last row must be [0, 0, 0, 1]".into()));
        }
        Self::new(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    pub fn to_matrix4(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraModel {
    pub intrinsics: Intrinsics,
    /// World-to-camera.
    pub extrinsics: RigidTransform,
    pub width: u32,
    pub height: u32,
}

impl CameraModel {
    pub fn new(intrinsics: Intrinsics, extrinsics: RigidTransform, width: u32, height: u32) -> Result<Self> {
        intrinsics.validate()?;
        if width == 0 || height == 0 {
            return Err(Error::InvalidCamera(format!("{width}x{height} image")));
        }
        Ok(Self {
            intrinsics,
            extrinsics,
            width,
            height,
        })
    }

    /// Camera placed at `position` with camera-to-world `orientation`.
    pub fn from_pose(
        intrinsics: Intrinsics,
        position: &Vector3<f64>,
        orientation: &UnitQuaternion<f64>,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let cam_to_world = RigidTransform::from_quaternion(orientation, *position);
        Self::new(intrinsics, cam_to_world.inverse(), width, height)
    }

    /// `C = K [R | T]`.
    pub fn projection_matrix(&self) -> Matrix3x4<f64> {
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(self.extrinsics.rotation());
        rt.fixed_view_mut::<3, 1>(0, 3).copy_from(self.extrinsics.translation());
        self.intrinsics.matrix() * rt
    }

    /// Optical centre in world coordinates.
    pub fn center(&self) -> WorldPoint {
        Point3::from(self.extrinsics.inverse().translation)
    }

    pub fn same_dims(&self, width: u32, height: u32) -> bool {
        self.width == width && self.height == height
    }
}

/// Where a world point lands in the image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Projection {
    BehindCamera,
    Image {
        pixel: PixelPoint,
        depth: f64,
        in_bounds: bool,
    },
}

impl Projection {
    pub fn visible_pixel(&self) -> Option<(PixelPoint, f64)> {
        match *self {
            Projection::Image {
                pixel,
                depth,
                in_bounds: true,
            } => Some((pixel, depth)),
            _ => None,
        }
    }

    pub fn in_bounds(&self) -> bool {
        matches!(self, Projection::Image { in_bounds: true, .. })
    }
}

fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

/// Sub-pixel image coordinates and depth, `None` behind the camera.
pub fn project_continuous(p: &WorldPoint, c: &CameraModel) -> Option<(f64, f64, f64)> {
    let q = c.extrinsics.apply(p);
    if !(q.z > 0.0) || !q.x.is_finite() || !q.y.is_finite() {
        return None;
    }
    let k = &c.intrinsics;
    Some((k.fx * q.x / q.z + k.cx, k.fy * q.y / q.z + k.cy, q.z))
}

pub fn project(p: &WorldPoint, c: &CameraModel) -> Projection {
    match project_continuous(p, c) {
        None => Projection::BehindCamera,
        Some((x, y, depth)) => {
            let pixel = PixelPoint::new(round_half_up(x), round_half_up(y));
            Projection::Image {
                pixel,
                depth,
                in_bounds: pixel.in_bounds(c.width, c.height),
            }
        }
    }
}

/// Inverse of [`project_continuous`] at a sub-pixel location.
pub fn unproject_continuous(x: f64, y: f64, depth: f64, c: &CameraModel) -> Result<WorldPoint> {
    if !depth.is_finite() || depth <= 0.0 {
        return Err(Error::OutOfRange(format!("depth {depth} must be positive and finite")));
    }
    let k = &c.intrinsics;
    let q = Point3::new(depth * (x - k.cx) / k.fx, depth * (y - k.cy) / k.fy, depth);
    let inv = c.extrinsics.inverse();
    Ok(inv.apply(&q))
}

pub fn unproject(px: PixelPoint, depth: f64, c: &CameraModel) -> Result<WorldPoint> {
    unproject_continuous(px.u as f64, px.v as f64, depth, c)
}

/// Row-major per-pixel depth in meters. [`DepthImage::NO_READING`] marks
/// pixels without a measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage {
    width: u32,
    height: u32,
    data: Vec<f64>,
}

impl DepthImage {
    pub const NO_READING: f64 = 0.0;

    pub fn new(width: u32, height: u32, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width as usize * height as usize {
            return Err(Error::Dimension(format!(
                "{} depth values for a {width}x{height} image",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: u32, height: u32, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn raw(&self, u: u32, v: u32) -> f64 {
        self.data[v as usize * self.width as usize + u as usize]
    }

    pub fn set(&mut self, u: u32, v: u32, d: f64) {
        self.data[v as usize * self.width as usize + u as usize] = d;
    }

    /// Valid depth at an in-bounds pixel, `None` for no reading.
    pub fn at(&self, p: PixelPoint) -> Option<f64> {
        if !p.in_bounds(self.width, self.height) {
            return None;
        }
        let d = self.raw(p.u as u32, p.v as u32);
        (d.is_finite() && d > 0.0).then_some(d)
    }
}

/// True iff the point projects inside the image and is not hidden behind the
/// measured surface by more than `tol`. Pixels with no depth reading cannot
/// occlude.
pub fn prompt_visible(p: &WorldPoint, c: &CameraModel, depth: &DepthImage, tol: f64) -> Result<bool> {
    if !c.same_dims(depth.width, depth.height) {
        return Err(Error::DimensionMismatch {
            left_w: c.width,
            left_h: c.height,
            right_w: depth.width,
            right_h: depth.height,
        });
    }
    let Some((pixel, z)) = project(p, c).visible_pixel() else {
        return Ok(false);
    };
    Ok(match depth.at(pixel) {
        Some(surface) => z <= surface + tol,
        None => true,
    })
}
