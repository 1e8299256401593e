//! Synthetic RGB-D scenes of axis-aligned boxes with exact ground truth.
//!
//! Each pixel centre casts a ray `o + t·R·K⁻¹(u, v, 1)`; with that
//! parametrisation `t` is the camera-frame depth. The nearest box hit owns
//! the pixel, ties going to the lower id. Background pixels carry no label
//! and no depth reading.

use std::collections::HashSet;
use std::str::FromStr;

use nalgebra::{Point3, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camgeo::{CameraModel, DepthImage, Intrinsics};
use crate::error::{Error, Result};
use crate::mask::masks_from_labels;
use crate::trajectory::Waypose;
use crate::tube::{FrameSegmentation, InstanceId, Segment};

/// Ids at or above this offset are the second half of a `split` object.
pub const SPLIT_ID_OFFSET: InstanceId = 1 << 32;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxObject {
    /// Label written into ground-truth id maps; never 0.
    pub id: u16,
    pub center: [f64; 3],
    /// Full side lengths in meters.
    pub extents: [f64; 3],
}

impl BoxObject {
    fn lo(&self) -> Vector3<f64> {
        Vector3::from(self.center) - Vector3::from(self.extents) * 0.5
    }

    fn hi(&self) -> Vector3<f64> {
        Vector3::from(self.center) + Vector3::from(self.extents) * 0.5
    }

    fn corners(&self) -> [Point3<f64>; 8] {
        let (lo, hi) = (self.lo(), self.hi());
        std::array::from_fn(|i| {
            Point3::new(
                if i & 1 == 0 { lo.x } else { hi.x },
                if i & 2 == 0 { lo.y } else { hi.y },
                if i & 4 == 0 { lo.z } else { hi.z },
            )
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub intrinsics: Intrinsics,
    pub boxes: Vec<BoxObject>,
    /// One camera-to-world pose per frame.
    pub trajectory: Vec<Waypose>,
    #[serde(default)]
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Dimension(format!("{}x{} scene", self.width, self.height)));
        }
        self.intrinsics.validate()?;
        if self.trajectory.is_empty() {
            return Err(Error::InvalidConfig("scene has no camera poses".into()));
        }
        let mut seen = HashSet::new();
        for b in &self.boxes {
            if b.id == 0 {
                return Err(Error::InvalidConfig("box id 0 is reserved for background".into()));
            }
            if !seen.insert(b.id) {
                return Err(Error::InvalidConfig(format!("box id {} repeated", b.id)));
            }
            if !b.center.iter().all(|x| x.is_finite()) {
                return Err(Error::InvalidConfig(format!("box {} has a non-finite center", b.id)));
            }
            if !b.extents.iter().all(|&e| e.is_finite() && e > 0.0) {
                return Err(Error::InvalidConfig(format!("box {} has degenerate extents", b.id)));
            }
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.trajectory.len()
    }

    pub fn camera(&self, index: usize) -> Result<CameraModel> {
        let pose = self.trajectory.get(index).ok_or_else(|| {
            Error::OutOfRange(format!("pose {index} of {}", self.trajectory.len()))
        })?;
        CameraModel::from_pose(self.intrinsics, &pose.position, &pose.orientation, self.width, self.height)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedFrame {
    /// Row-major box ids, 0 for background.
    pub labels: Vec<u16>,
    pub segmentation: FrameSegmentation,
    pub depth: DepthImage,
    pub camera: CameraModel,
}

/// Entry distance along `dir`, or `None` on a miss or when `origin` is
/// inside the box.
fn ray_box(origin: &Vector3<f64>, dir: &Vector3<f64>, lo: &Vector3<f64>, hi: &Vector3<f64>) -> Option<f64> {
    let mut near = f64::NEG_INFINITY;
    let mut far = f64::INFINITY;
    for i in 0..3 {
        if dir[i] == 0.0 {
            if origin[i] < lo[i] || origin[i] > hi[i] {
                return None;
            }
            continue;
        }
        let a = (lo[i] - origin[i]) / dir[i];
        let b = (hi[i] - origin[i]) / dir[i];
        near = near.max(a.min(b));
        far = far.min(a.max(b));
    }
    (near <= far && near > 0.0).then_some(near)
}

/// Inclusive pixel rectangle that can contain the box, or the whole image
/// when a corner is not in front of the camera.
fn footprint(b: &BoxObject, cam: &CameraModel) -> Option<(u32, u32, u32, u32)> {
    let (w, h) = (cam.width as f64, cam.height as f64);
    let k = &cam.intrinsics;
    let (mut u0, mut v0, mut u1, mut v1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for c in b.corners() {
        let q = cam.extrinsics.apply(&c);
        if q.z <= 0.0 {
            return Some((0, 0, cam.width - 1, cam.height - 1));
        }
        let x = k.fx * q.x / q.z + k.cx;
        let y = k.fy * q.y / q.z + k.cy;
        u0 = u0.min(x);
        u1 = u1.max(x);
        v0 = v0.min(y);
        v1 = v1.max(y);
    }
    // One pixel of slack absorbs rounding in the corner projections.
    let (u0, v0) = ((u0.floor() - 1.0).max(0.0), (v0.floor() - 1.0).max(0.0));
    let (u1, v1) = ((u1.ceil() + 1.0).min(w - 1.0), (v1.ceil() + 1.0).min(h - 1.0));
    (u0 <= u1 && v0 <= v1).then(|| (u0 as u32, v0 as u32, u1 as u32, v1 as u32))
}

pub fn render_frame(spec: &SceneSpec, pose_index: usize) -> Result<RenderedFrame> {
    spec.validate()?;
    let cam = spec.camera(pose_index)?;
    let (w, h) = (spec.width as usize, spec.height as usize);
    let pose = &spec.trajectory[pose_index];
    let rot = pose.orientation.to_rotation_matrix();
    let origin = pose.position;
    let k = spec.intrinsics;

    let mut boxes = spec.boxes.clone();
    boxes.sort_by_key(|b| b.id);
    let mut best = vec![f64::INFINITY; w * h];
    let mut labels = vec![0u16; w * h];
    for b in &boxes {
        let Some((u0, v0, u1, v1)) = footprint(b, &cam) else {
            continue;
        };
        let (lo, hi) = (b.lo(), b.hi());
        for v in v0..=v1 {
            let y = (v as f64 - k.cy) / k.fy;
            for u in u0..=u1 {
                let x = (u as f64 - k.cx) / k.fx;
                let dir = rot * Vector3::new(x, y, 1.0);
                if let Some(t) = ray_box(&origin, &dir, &lo, &hi) {
                    let i = v as usize * w + u as usize;
                    // Strict: boxes arrive in id order, so ties keep the lower id.
                    if t < best[i] {
                        best[i] = t;
                        labels[i] = b.id;
                    }
                }
            }
        }
    }
    let depth: Vec<f64> = best
        .into_iter()
        .map(|t| if t.is_finite() { t } else { DepthImage::NO_READING })
        .collect();
    let depth = DepthImage::new(spec.width, spec.height, depth)?;
    let segments = masks_from_labels(spec.width, spec.height, &labels)?
        .into_iter()
        .map(|(id, mask)| Segment { id: id as InstanceId, mask })
        .collect();
    let segmentation = FrameSegmentation::from_segments(spec.width, spec.height, segments)?;
    Ok(RenderedFrame {
        labels,
        segmentation,
        depth,
        camera: cam,
    })
}

/// Renders every pose, in parallel when enabled.
pub fn render_video(spec: &SceneSpec) -> Result<Vec<RenderedFrame>> {
    spec.validate()?;
    let render = |t: usize| render_frame(spec, t).map_err(|e| Error::at_frame(t, e));
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..spec.frames()).into_par_iter().map(render).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..spec.frames()).map(render).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Perturbation {
    /// Drop every mask on odd frames.
    Flicker,
    /// From the middle frame on, every object continues under a new id.
    Split,
    /// Fresh random ids on every frame.
    RandomIds,
}

impl Perturbation {
    pub const ALL: [Perturbation; 3] = [Perturbation::Flicker, Perturbation::Split, Perturbation::RandomIds];

    pub fn name(self) -> &'static str {
        match self {
            Perturbation::Flicker => "flicker",
            Perturbation::Split => "split",
            Perturbation::RandomIds => "random-ids",
        }
    }
}

impl FromStr for Perturbation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Perturbation::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown perturbation {s:?}")))
    }
}

impl std::fmt::Display for Perturbation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn frame_rng(seed: u64, frame: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame as u64);
    rng
}

pub fn perturb_segmentation(frames: &[FrameSegmentation], mode: Perturbation, seed: u64) -> Vec<FrameSegmentation> {
    let mid = frames.len() / 2;
    frames
        .iter()
        .enumerate()
        .map(|(t, f)| {
            let mut f = f.clone();
            match mode {
                Perturbation::Flicker => {
                    if t % 2 == 1 {
                        f.retain(|_| false);
                    }
                }
                Perturbation::Split => {
                    if t >= mid {
                        for s in f.segments_mut() {
                            s.id += SPLIT_ID_OFFSET;
                        }
                    }
                }
                Perturbation::RandomIds => {
                    let mut rng = frame_rng(seed, t);
                    let mut ids = HashSet::new();
                    for s in f.segments_mut() {
                        s.id = loop {
                            let id = rng.random_range(1..1u64 << 48);
                            if ids.insert(id) {
                                break id;
                            }
                        };
                    }
                }
            }
            f.sort_by_id();
            f
        })
        .collect()
}

/// Parameters for a scene of boxes on a jittered grid, watched by a level
/// camera that slides sideways back and forth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZigzagScene {
    pub objects: usize,
    pub frames: usize,
    /// Camera translation per frame, meters.
    pub step_m: f64,
    /// Frames per sweep before the camera turns back.
    pub sweep_steps: usize,
    /// Upper bound on a box side; the grid cell size caps it further.
    pub box_size_m: f64,
    /// Boxes sit at 4 m ± this along the viewing direction.
    pub depth_jitter_m: f64,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
}

impl Default for ZigzagScene {
    fn default() -> Self {
        Self {
            objects: 8,
            frames: 64,
            step_m: 0.05,
            sweep_steps: 4,
            box_size_m: 0.4,
            depth_jitter_m: 0.3,
            width: 320,
            height: 240,
            seed: 0,
        }
    }
}

const CAMERA_HEIGHT: f64 = 1.0;
const SCENE_DISTANCE: f64 = 4.0;
const GRID_HALF_WIDTH: f64 = 1.6;
const GRID_Z: (f64, f64) = (0.3, 1.7);

/// Camera offset along x at frame `t`, a triangle wave in `[0, sweep·step]`.
pub fn zigzag_offset(t: usize, step_m: f64, sweep_steps: usize) -> f64 {
    let period = 2 * sweep_steps.max(1);
    let p = t % period;
    let n = if p <= sweep_steps { p } else { period - p };
    n as f64 * step_m
}

/// Builds a scene in which every box stays fully in view and unoccluded for
/// moderate camera sweeps. The camera looks along world +y from 1 m height.
pub fn zigzag_scene(p: &ZigzagScene) -> Result<SceneSpec> {
    if p.objects == 0 || p.objects >= u16::MAX as usize || p.frames == 0 {
        return Err(Error::InvalidConfig("zigzag scene needs objects and frames".into()));
    }
    if !(p.step_m >= 0.0 && p.box_size_m > 0.0 && p.depth_jitter_m >= 0.0) {
        return Err(Error::InvalidConfig("zigzag scene sizes must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let f = 0.75 * p.width as f64;
    let intrinsics = Intrinsics::new(f, f, (p.width as f64 - 1.0) / 2.0, (p.height as f64 - 1.0) / 2.0)?;

    let aspect = (2.0 * GRID_HALF_WIDTH) / (GRID_Z.1 - GRID_Z.0);
    let cols = ((p.objects as f64 * aspect).sqrt().ceil() as usize).clamp(1, p.objects);
    let rows = p.objects.div_ceil(cols);
    let cell_w = 2.0 * GRID_HALF_WIDTH / cols as f64;
    let cell_h = (GRID_Z.1 - GRID_Z.0) / rows as f64;
    let size = p.box_size_m.min(0.6 * cell_w.min(cell_h));
    let x_mid = p.step_m * p.sweep_steps as f64 / 2.0;

    let mut cells: Vec<usize> = (0..cols * rows).collect();
    cells.shuffle(&mut rng);
    let mut boxes = Vec::with_capacity(p.objects);
    for (i, &cell) in cells.iter().take(p.objects).enumerate() {
        let (c, r) = (cell % cols, cell / cols);
        let sx = size * rng.random_range(0.6..=1.0);
        let sz = size * rng.random_range(0.6..=1.0);
        let sy = size * rng.random_range(0.3..=1.0);
        let slack_x = (cell_w - sx) / 2.0 * 0.3;
        let slack_z = (cell_h - sz) / 2.0 * 0.3;
        let jitter = if p.depth_jitter_m > 0.0 {
            rng.random_range(-p.depth_jitter_m..=p.depth_jitter_m)
        } else {
            0.0
        };
        boxes.push(BoxObject {
            id: (i + 1) as u16,
            center: [
                x_mid - GRID_HALF_WIDTH + (c as f64 + 0.5) * cell_w + rng.random_range(-slack_x..=slack_x),
                SCENE_DISTANCE + jitter,
                GRID_Z.0 + (r as f64 + 0.5) * cell_h + rng.random_range(-slack_z..=slack_z),
            ],
            extents: [sx, sy, sz],
        });
    }
    let trajectory = (0..p.frames)
        .map(|t| {
            Waypose::looking(
                Vector3::new(zigzag_offset(t, p.step_m, p.sweep_steps), 0.0, CAMERA_HEIGHT),
                90.0,
            )
        })
        .collect();
    let spec = SceneSpec {
        width: p.width,
        height: p.height,
        intrinsics,
        boxes,
        trajectory,
        seed: p.seed,
    };
    spec.validate()?;
    Ok(spec)
}
