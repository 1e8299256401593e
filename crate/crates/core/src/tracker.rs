//! Geometric self-prompting track association.
//!
//! The tracker keeps one 3D world-frame prompt per live track, an estimate of
//! the object's centroid. Each frame:
//!
//! 1. every prompt is projected with the current camera; prompts that land
//!    outside the image or behind the measured surface take a miss,
//! 2. each visible prompt claims every input segment containing its
//!    projected pixel, and the claimed segments are unioned into one output
//!    mask carrying the prompt's track id,
//! 3. a segment containing several prompt pixels goes to the prompt whose
//!    pixel is nearest the segment's centroid,
//! 4. unclaimed segments large enough spawn new tracks,
//! 5. every emitted mask's centroid pixel is unprojected with the depth image
//!    to refresh its prompt,
//! 6. prompts that missed more than `miss_budget` frames in a row retire.
//!
//! Input segment ids are ignored; the per-frame segmenter is an external
//! input stream.

use crate::camgeo::{project, prompt_visible, unproject, CameraModel, DepthImage, WorldPoint};
use crate::error::{Error, Result};
use crate::mask::{centroid_in_mask, PixelPoint, RleMask};
use crate::tube::{FrameSegmentation, InstanceId};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrackerConfig {
    /// Depth-test slack in meters.
    pub visibility_tol: f64,
    /// Consecutive misses tolerated before a prompt retires. `u32::MAX`
    /// keeps prompts forever.
    pub miss_budget: u32,
    /// Unclaimed segments smaller than this (pixels) never start a track.
    pub min_segment_area: u64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            visibility_tol: 0.05,
            miss_budget: 10,
            min_segment_area: 16,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.visibility_tol > 0.0) || !self.visibility_tol.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "visibility tolerance {} must be positive",
                self.visibility_tol
            )));
        }
        if self.miss_budget == 0 {
            return Err(Error::InvalidConfig("miss budget must be positive".into()));
        }
        if self.min_segment_area == 0 {
            return Err(Error::InvalidConfig("minimum segment area must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelfPrompt {
    pub track_id: InstanceId,
    pub position: WorldPoint,
    pub misses: u32,
    pub age: u32,
}

/// Live prompts, sorted by track id, plus the id counter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PromptSet {
    prompts: Vec<SelfPrompt>,
    next_id: InstanceId,
}

impl PromptSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn prompts(&self) -> &[SelfPrompt] {
        &self.prompts
    }

    pub fn get(&self, id: InstanceId) -> Option<&SelfPrompt> {
        self.prompts.iter().find(|p| p.track_id == id)
    }

    /// Number of track ids issued so far.
    pub fn issued(&self) -> InstanceId {
        self.next_id
    }
}

fn check_dims(segments: &FrameSegmentation, depth: &DepthImage, cam: &CameraModel) -> Result<()> {
    let (w, h) = (segments.width(), segments.height());
    for (ow, oh) in [(depth.width(), depth.height()), (cam.width, cam.height)] {
        if (ow, oh) != (w, h) {
            return Err(Error::DimensionMismatch {
                left_w: w,
                left_h: h,
                right_w: ow,
                right_h: oh,
            });
        }
    }
    Ok(())
}

fn dist2(a: PixelPoint, b: PixelPoint) -> i64 {
    (a.u - b.u).pow(2) + (a.v - b.v).pow(2)
}

/// Depth for unprojecting `mask`'s centroid: the reading at the centroid
/// pixel, else the nearest valid foreground reading (ties by `(v, u)`).
fn anchor_depth(mask: &RleMask, depth: &DepthImage) -> Option<(PixelPoint, f64)> {
    let c = centroid_in_mask(mask).ok()?;
    if let Some(d) = depth.at(c) {
        return Some((c, d));
    }
    mask.pixels()
        .filter_map(|p| depth.at(p).map(|d| ((dist2(p, c), p.v, p.u), d)))
        .min_by(|a, b| a.0.cmp(&b.0))
        .map(|(_, d)| (c, d))
}

/// One association step. Pure: returns the labelled frame and the next
/// prompt set.
pub fn step(
    segments: &FrameSegmentation,
    depth: &DepthImage,
    cam: &CameraModel,
    state: &PromptSet,
    cfg: &TrackerConfig,
) -> Result<(FrameSegmentation, PromptSet)> {
    cfg.validate()?;
    check_dims(segments, depth, cam)?;

    // 1. project prompts
    let mut pixels: Vec<Option<PixelPoint>> = Vec::with_capacity(state.prompts.len());
    for p in &state.prompts {
        let visible = prompt_visible(&p.position, cam, depth, cfg.visibility_tol)?;
        pixels.push(if visible {
            project(&p.position, cam).visible_pixel().map(|(px, _)| px)
        } else {
            None
        });
    }

    // 2-3. each segment goes to at most one prompt
    let segs = segments.segments();
    let mut owner: Vec<Option<usize>> = vec![None; segs.len()];
    for (si, s) in segs.iter().enumerate() {
        if s.mask.is_empty() {
            continue;
        }
        let claimants: Vec<usize> = pixels
            .iter()
            .enumerate()
            .filter_map(|(pi, px)| px.filter(|&px| s.mask.contains(px)).map(|_| pi))
            .collect();
        owner[si] = match claimants.len() {
            0 => None,
            1 => Some(claimants[0]),
            _ => {
                let c = centroid_in_mask(&s.mask)?;
                claimants
                    .into_iter()
                    .min_by_key(|&pi| (dist2(pixels[pi].unwrap(), c), state.prompts[pi].track_id))
            }
        };
    }

    let mut merged: Vec<Option<RleMask>> = vec![None; state.prompts.len()];
    for (si, s) in segs.iter().enumerate() {
        if let Some(pi) = owner[si] {
            merged[pi] = Some(match merged[pi].take() {
                None => s.mask.clone(),
                Some(m) => m.union(&s.mask)?,
            });
        }
    }

    let mut out = FrameSegmentation::new(segments.width(), segments.height())?;
    let mut next = PromptSet {
        prompts: Vec::with_capacity(state.prompts.len()),
        next_id: state.next_id,
    };

    // 5-6 for existing prompts
    for (pi, prompt) in state.prompts.iter().enumerate() {
        let mut p = prompt.clone();
        p.age = p.age.saturating_add(1);
        match merged[pi].take() {
            Some(mask) => {
                if let Some((c, d)) = anchor_depth(&mask, depth) {
                    p.position = unproject(c, d, cam)?;
                }
                p.misses = 0;
                out.push(p.track_id, mask)?;
            }
            None => p.misses = p.misses.saturating_add(1),
        }
        if p.misses <= cfg.miss_budget {
            next.prompts.push(p);
        }
    }

    // 4. spawn, in an order that does not depend on input ids or ordering
    let mut fresh: Vec<&RleMask> = segs
        .iter()
        .zip(&owner)
        .filter(|(s, o)| o.is_none() && s.mask.area() >= cfg.min_segment_area)
        .map(|(s, _)| &s.mask)
        .collect();
    fresh.sort_by(|a, b| {
        (a.first_foreground_index(), a.area(), a.runs()).cmp(&(b.first_foreground_index(), b.area(), b.runs()))
    });
    for mask in fresh {
        let id = next.next_id;
        next.next_id += 1;
        if let Some((c, d)) = anchor_depth(mask, depth) {
            next.prompts.push(SelfPrompt {
                track_id: id,
                position: unproject(c, d, cam)?,
                misses: 0,
                age: 0,
            });
        }
        out.push(id, mask.clone())?;
    }

    out.sort_by_id();
    Ok((out, next))
}

/// Stateful wrapper folding [`step`] over a stream of frames.
#[derive(Clone, Debug)]
pub struct Tracker {
    cfg: TrackerConfig,
    state: PromptSet,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            state: PromptSet::new(),
        })
    }

    pub fn state(&self) -> &PromptSet {
        &self.state
    }

    pub fn step(
        &mut self,
        segments: &FrameSegmentation,
        depth: &DepthImage,
        cam: &CameraModel,
    ) -> Result<FrameSegmentation> {
        let (out, next) = step(segments, depth, cam, &self.state, &self.cfg)?;
        self.state = next;
        Ok(out)
    }
}

/// One frame of tracker input.
#[derive(Clone, Debug)]
pub struct TrackerFrame {
    pub segments: FrameSegmentation,
    pub depth: DepthImage,
    pub camera: CameraModel,
}

pub fn run_video(frames: &[TrackerFrame], cfg: &TrackerConfig) -> Result<Vec<FrameSegmentation>> {
    if frames.is_empty() {
        return Err(Error::InvalidConfig("tracker needs at least one frame".into()));
    }
    let mut tracker = Tracker::new(*cfg)?;
    frames
        .iter()
        .enumerate()
        .map(|(t, f)| {
            tracker
                .step(&f.segments, &f.depth, &f.camera)
                .map_err(|e| Error::at_frame(t, e))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camgeo::{Intrinsics, RigidTransform};
    use crate::tube::Segment;
    use nalgebra::Vector3;

    const W: u32 = 64;
    const H: u32 = 48;

    fn camera_at(x: f64) -> CameraModel {
        let k = Intrinsics::new(50.0, 50.0, 32.0, 24.0).unwrap();
        // Camera at (x, 0, 0) looking down world +z.
        let ext = RigidTransform::new(nalgebra::Matrix3::identity(), Vector3::new(-x, 0.0, 0.0)).unwrap();
        CameraModel::new(k, ext, W, H).unwrap()
    }

    /// Fronto-parallel square patches at fixed depth; returns segments (with
    /// caller-chosen ids) and a matching depth image.
    fn scene(cam_x: f64, patches: &[(f64, f64, f64)], ids: &[u64]) -> (FrameSegmentation, DepthImage) {
        let mut depth = DepthImage::filled(W, H, DepthImage::NO_READING).unwrap();
        let mut segs = Vec::new();
        for (i, &(x, y, z)) in patches.iter().enumerate() {
            let half = 0.1;
            let u0 = (50.0 * (x - half - cam_x) / z + 32.0).ceil() as i64;
            let u1 = (50.0 * (x + half - cam_x) / z + 32.0).floor() as i64 + 1;
            let v0 = (50.0 * (y - half) / z + 24.0).ceil() as i64;
            let v1 = (50.0 * (y + half) / z + 24.0).floor() as i64 + 1;
            let m = RleMask::rect(W, H, u0, v0, u1, v1).unwrap();
            for p in m.pixels() {
                depth.set(p.u as u32, p.v as u32, z);
            }
            segs.push(Segment { id: ids[i], mask: m });
        }
        (FrameSegmentation::from_segments(W, H, segs).unwrap(), depth)
    }

    #[test]
    fn static_scene_keeps_ids() {
        let patches = [(-0.3, 0.0, 1.5), (0.3, 0.1, 2.0)];
        let (segs, depth) = scene(0.0, &patches, &[5, 9]);
        let cam = camera_at(0.0);
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        let a = t.step(&segs, &depth, &cam).unwrap();
        let pos: Vec<WorldPoint> = t.state().prompts().iter().map(|p| p.position).collect();
        let b = t.step(&segs, &depth, &cam).unwrap();
        assert_eq!(a.ids().collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(a, b);
        for (p, q) in pos.iter().zip(t.state().prompts()) {
            assert!((p - q.position).norm() < 1e-9);
        }
    }

    #[test]
    fn lateral_motion_keeps_ids_despite_random_input_ids() {
        let patches = [(-0.3, 0.0, 1.5), (0.3, 0.1, 2.0)];
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        let (s0, d0) = scene(0.0, &patches, &[1, 2]);
        let f0 = t.step(&s0, &d0, &camera_at(0.0)).unwrap();
        // Camera slides 5 cm; the segmenter swaps its ids.
        let (s1, d1) = scene(0.05, &patches, &[2, 1]);
        let cam1 = camera_at(0.05);
        for p in t.state().prompts() {
            let (px, _) = project(&p.position, &cam1).visible_pixel().unwrap();
            assert!(s1.segments().iter().any(|s| s.mask.contains(px)));
        }
        let f1 = t.step(&s1, &d1, &cam1).unwrap();
        assert_eq!(f0.ids().collect::<Vec<_>>(), f1.ids().collect::<Vec<_>>());
        for id in f0.ids() {
            let (a, b) = (f0.get(id).unwrap(), f1.get(id).unwrap());
            // Same object: centroid shifts left as the camera moves right.
            assert!(a.centroid().unwrap().u >= b.centroid().unwrap().u);
        }
    }

    #[test]
    fn fragments_are_unioned_under_one_prompt() {
        let patches = [(0.0, 0.0, 1.5)];
        let (s0, d0) = scene(0.0, &patches, &[1]);
        let cam = camera_at(0.0);
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        t.step(&s0, &d0, &cam).unwrap();
        let whole = s0.segments()[0].mask.clone();
        // Two overlapping fragments that both cover the prompt pixel.
        let prompt_px = project(&t.state().prompts()[0].position, &cam).visible_pixel().unwrap().0;
        let left = whole.crop_columns(0, prompt_px.u as u32 + 1);
        let right = whole.crop_columns(prompt_px.u as u32, W);
        assert!(left.contains(prompt_px) && right.contains(prompt_px));
        let frag = FrameSegmentation::from_segments(
            W,
            H,
            vec![Segment { id: 3, mask: left.clone() }, Segment { id: 4, mask: right.clone() }],
        )
        .unwrap();
        let out = t.step(&frag, &d0, &cam).unwrap();
        assert_eq!(out.len(), 1);
        let m = &out.segments()[0].mask;
        let inter = left.intersection_area(&right).unwrap();
        assert_eq!(m.area(), left.area() + right.area() - inter);
        assert_eq!(m, &whole);
    }

    #[test]
    fn conflict_goes_to_prompt_nearest_centroid() {
        let cam = camera_at(0.0);
        let (s0, d0) = scene(0.0, &[(-0.12, 0.0, 1.0), (0.12, 0.0, 1.0)], &[1, 2]);
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        t.step(&s0, &d0, &cam).unwrap();
        // Both objects now arrive as one merged segment whose centroid sits
        // nearer the left prompt after appending extra area on the left.
        let merged = s0.segments()[0]
            .mask
            .union(&s0.segments()[1].mask)
            .unwrap()
            .union(&RleMask::rect(W, H, 0, 14, 14, 34).unwrap())
            .unwrap();
        let one = FrameSegmentation::from_segments(W, H, vec![Segment { id: 1, mask: merged }]).unwrap();
        let out = t.step(&one, &d0, &cam).unwrap();
        assert_eq!(out.ids().collect::<Vec<_>>(), vec![0]);
        let right = t.state().get(1).unwrap();
        assert_eq!(right.misses, 1);
    }

    #[test]
    fn misses_retire_prompts_and_ids_are_never_reused() {
        let cam = camera_at(0.0);
        let (s0, d0) = scene(0.0, &[(0.0, 0.0, 1.5)], &[1]);
        let cfg = TrackerConfig {
            miss_budget: 2,
            ..TrackerConfig::default()
        };
        let mut t = Tracker::new(cfg).unwrap();
        t.step(&s0, &d0, &cam).unwrap();
        let blank = FrameSegmentation::new(W, H).unwrap();
        for expected_live in [1, 1, 0] {
            t.step(&blank, &d0, &cam).unwrap();
            assert_eq!(t.state().prompts().len(), expected_live);
        }
        let out = t.step(&s0, &d0, &cam).unwrap();
        assert_eq!(out.ids().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn small_unclaimed_segments_do_not_spawn() {
        let cam = camera_at(0.0);
        let depth = DepthImage::filled(W, H, 2.0).unwrap();
        let tiny = RleMask::rect(W, H, 0, 0, 3, 3).unwrap();
        let f = FrameSegmentation::from_segments(W, H, vec![Segment { id: 1, mask: tiny }]).unwrap();
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        assert!(t.step(&f, &depth, &cam).unwrap().is_empty());
    }

    #[test]
    fn missing_depth_falls_back_to_nearest_reading() {
        let cam = camera_at(0.0);
        let mask = RleMask::rect(W, H, 10, 10, 20, 20).unwrap();
        let mut depth = DepthImage::filled(W, H, DepthImage::NO_READING).unwrap();
        depth.set(10, 10, 3.0);
        let f = FrameSegmentation::from_segments(W, H, vec![Segment { id: 1, mask: mask.clone() }]).unwrap();
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        t.step(&f, &depth, &cam).unwrap();
        let p = &t.state().prompts()[0];
        let (px, d) = project(&p.position, &cam).visible_pixel().unwrap();
        assert_eq!(px, mask.centroid().unwrap());
        assert!((d - 3.0).abs() < 1e-12);

        // No reading at all: the id is issued but no prompt is kept.
        let none = DepthImage::filled(W, H, DepthImage::NO_READING).unwrap();
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        let out = t.step(&f, &none, &cam).unwrap();
        assert_eq!(out.len(), 1);
        assert!(t.state().prompts().is_empty());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let cam = camera_at(0.0);
        let depth = DepthImage::filled(W + 1, H, 1.0).unwrap();
        let f = FrameSegmentation::new(W, H).unwrap();
        assert!(step(&f, &depth, &cam, &PromptSet::new(), &TrackerConfig::default()).is_err());
    }

    #[test]
    fn single_frame_ids_are_sequential() {
        let (s0, d0) = scene(0.0, &[(-0.3, 0.0, 1.5), (0.3, 0.1, 2.0), (0.0, -0.2, 1.2)], &[7, 3, 11]);
        let frames = vec![TrackerFrame {
            segments: s0,
            depth: d0,
            camera: camera_at(0.0),
        }];
        let out = run_video(&frames, &TrackerConfig::default()).unwrap();
        assert_eq!(out[0].ids().collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!(run_video(&[], &TrackerConfig::default()).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = TrackerConfig::default();
        c.visibility_tol = 0.0;
        assert!(c.validate().is_err());
        c = TrackerConfig { miss_budget: 0, ..TrackerConfig::default() };
        assert!(c.validate().is_err());
        c = TrackerConfig { min_segment_area: 0, ..TrackerConfig::default() };
        assert!(Tracker::new(c).is_err());
    }
}
