//! Frame segmentations, segment tubes over k-frame windows, and tube overlap.

use std::collections::BTreeMap;
use std::collections::HashSet;

use crate::assignment::{solve_max_assignment, ScoreMatrix};
use crate::error::{Error, Result};
use crate::mask::{f_measure, RleMask};

/// Opaque instance / track identifier.
pub type InstanceId = u64;

#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub id: InstanceId,
    pub mask: RleMask,
}

/// All segments predicted (or annotated) in one frame. Ground truth is
/// non-overlapping; predictions may overlap freely.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSegmentation {
    width: u32,
    height: u32,
    segments: Vec<Segment>,
}

impl FrameSegmentation {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!("{width}x{height} frame")));
        }
        Ok(Self {
            width,
            height,
            segments: Vec::new(),
        })
    }

    pub fn from_segments(width: u32, height: u32, segments: Vec<Segment>) -> Result<Self> {
        let mut f = Self::new(width, height)?;
        for s in segments {
            f.push(s.id, s.mask)?;
        }
        Ok(f)
    }

    pub fn push(&mut self, id: InstanceId, mask: RleMask) -> Result<()> {
        if mask.width() != self.width || mask.height() != self.height {
            return Err(Error::DimensionMismatch {
                left_w: self.width,
                left_h: self.height,
                right_w: mask.width(),
                right_h: mask.height(),
            });
        }
        self.segments.push(Segment { id, mask });
        Ok(())
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segments_mut(&mut self) -> &mut [Segment] {
        &mut self.segments
    }

    pub fn into_segments(self) -> Vec<Segment> {
        self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = InstanceId> + '_ {
        self.segments.iter().map(|s| s.id)
    }

    pub fn get(&self, id: InstanceId) -> Option<&RleMask> {
        self.segments.iter().find(|s| s.id == id).map(|s| &s.mask)
    }

    pub fn retain(&mut self, f: impl FnMut(&Segment) -> bool) {
        self.segments.retain(f);
    }

    pub fn sort_by_id(&mut self) {
        self.segments.sort_by_key(|s| s.id);
    }

    /// `frame` is only used for the error report.
    pub fn check_unique_ids(&self, frame: usize) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.segments.len());
        for s in &self.segments {
            if !seen.insert(s.id) {
                return Err(Error::DuplicateId { frame, id: s.id });
            }
        }
        Ok(())
    }

    pub fn same_dims(&self, other: &FrameSegmentation) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// `length` consecutive frames starting at `start`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Window {
    pub start: usize,
    pub length: usize,
}

impl Window {
    pub fn new(start: usize, length: usize) -> Result<Self> {
        if length == 0 {
            return Err(Error::WindowMismatch("window length must be at least 1".into()));
        }
        Ok(Self { start, length })
    }

    pub fn end(&self) -> usize {
        self.start + self.length
    }

    pub fn frames(&self) -> std::ops::Range<usize> {
        self.start..self.end()
    }
}

/// One instance's masks over a window. Frames where the instance is not
/// observed hold the empty mask.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentTube {
    instance_id: InstanceId,
    start_frame: usize,
    masks: Vec<RleMask>,
    area: u64,
}

impl SegmentTube {
    pub fn new(instance_id: InstanceId, start_frame: usize, masks: Vec<RleMask>) -> Result<Self> {
        let first = masks
            .first()
            .ok_or_else(|| Error::WindowMismatch("tube with no frames".into()))?;
        for m in &masks[1..] {
            first.check_same_dims(m)?;
        }
        let area: u64 = masks.iter().map(RleMask::area).sum();
        if area == 0 {
            return Err(Error::EmptyMask("tube has no foreground in any frame"));
        }
        Ok(Self {
            instance_id,
            start_frame,
            masks,
            area,
        })
    }

    pub fn instance_id(&self) -> InstanceId {
        self.instance_id
    }

    pub fn start_frame(&self) -> usize {
        self.start_frame
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn window(&self) -> Window {
        Window {
            start: self.start_frame,
            length: self.masks.len(),
        }
    }

    pub fn masks(&self) -> &[RleMask] {
        &self.masks
    }

    /// Total foreground pixels over all frames.
    pub fn volume(&self) -> u64 {
        self.area
    }

    fn check_compatible(&self, other: &SegmentTube) -> Result<()> {
        if self.window() != other.window() {
            return Err(Error::WindowMismatch(format!(
                "{:?} vs {:?}",
                self.window(),
                other.window()
            )));
        }
        self.masks[0].check_same_dims(&other.masks[0])
    }
}

/// Groups a window's segments by instance id, one tube per id that has
/// foreground somewhere in the window. Tubes are sorted by id.
pub fn build_tubes_from_ids(frames: &[FrameSegmentation], w: Window) -> Result<Vec<SegmentTube>> {
    if w.end() > frames.len() {
        return Err(Error::WindowMismatch(format!(
            "window {}..{} exceeds {} frames",
            w.start,
            w.end(),
            frames.len()
        )));
    }
    let window_frames = &frames[w.frames()];
    let (width, height) = (window_frames[0].width(), window_frames[0].height());
    let mut present: BTreeMap<InstanceId, Vec<Option<&RleMask>>> = BTreeMap::new();
    for (offset, frame) in window_frames.iter().enumerate() {
        if frame.width() != width || frame.height() != height {
            return Err(Error::at_frame(
                w.start + offset,
                Error::DimensionMismatch {
                    left_w: width,
                    left_h: height,
                    right_w: frame.width(),
                    right_h: frame.height(),
                },
            ));
        }
        frame.check_unique_ids(w.start + offset)?;
        for s in frame.segments() {
            if s.mask.is_empty() {
                continue;
            }
            present.entry(s.id).or_insert_with(|| vec![None; w.length])[offset] = Some(&s.mask);
        }
    }
    let empty = RleMask::empty(width, height)?;
    present
        .into_iter()
        .map(|(id, slots)| {
            let masks = slots
                .into_iter()
                .map(|m| m.cloned().unwrap_or_else(|| empty.clone()))
                .collect();
            SegmentTube::new(id, w.start, masks)
        })
        .collect()
}

/// Formats tubes from frame-level output: consecutive frames are linked by
/// maximum-F-measure assignment, matched segments inherit the predecessor's
/// track id and the rest receive fresh ids. Only adjacent frames are linked.
pub fn link_frame_predictions(frames: &[FrameSegmentation]) -> Result<Vec<FrameSegmentation>> {
    let mut out: Vec<FrameSegmentation> = Vec::with_capacity(frames.len());
    let mut next_id: InstanceId = 0;
    for (t, frame) in frames.iter().enumerate() {
        let mut linked = FrameSegmentation::new(frame.width(), frame.height())?;
        match out.last() {
            None => {
                for s in frame.segments() {
                    linked.push(next_id, s.mask.clone())?;
                    next_id += 1;
                }
            }
            Some(prev) => {
                if !prev.same_dims(frame) {
                    return Err(Error::at_frame(
                        t,
                        Error::DimensionMismatch {
                            left_w: prev.width(),
                            left_h: prev.height(),
                            right_w: frame.width(),
                            right_h: frame.height(),
                        },
                    ));
                }
                let (ps, cs) = (prev.segments(), frame.segments());
                let mut scores = Vec::with_capacity(ps.len() * cs.len());
                for p in ps {
                    for c in cs {
                        scores.push(f_measure(&p.mask, &c.mask)?);
                    }
                }
                let matching = solve_max_assignment(&ScoreMatrix::new(ps.len(), cs.len(), scores)?);
                let mut inherited = vec![None; cs.len()];
                for &(r, c) in &matching.pairs {
                    inherited[c] = Some(ps[r].id);
                }
                for (c, s) in cs.iter().enumerate() {
                    let id = inherited[c].unwrap_or_else(|| {
                        next_id += 1;
                        next_id - 1
                    });
                    linked.push(id, s.mask.clone())?;
                }
            }
        }
        out.push(linked);
    }
    Ok(out)
}

/// How per-frame overlaps are aggregated into one tube IoU.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IouMode {
    /// Intersections and unions summed over the window before dividing.
    #[default]
    Volumetric,
    /// Mean of per-frame IoU over frames where either tube is present.
    FrameAveraged,
}

/// Per-frame intersection counts between two tubes plus their volumes.
#[derive(Clone, Debug, PartialEq)]
pub struct TubeOverlap {
    pub intersections: Vec<u64>,
    pub unions: Vec<u64>,
    pub volume_a: u64,
    pub volume_b: u64,
}

impl TubeOverlap {
    pub fn compute(a: &SegmentTube, b: &SegmentTube) -> Result<Self> {
        a.check_compatible(b)?;
        let mut intersections = Vec::with_capacity(a.len());
        let mut unions = Vec::with_capacity(a.len());
        for (ma, mb) in a.masks.iter().zip(&b.masks) {
            let i = ma.intersection_area(mb)?;
            intersections.push(i);
            unions.push(ma.area() + mb.area() - i);
        }
        Ok(Self {
            intersections,
            unions,
            volume_a: a.area,
            volume_b: b.area,
        })
    }

    pub fn intersection(&self) -> u64 {
        self.intersections.iter().sum()
    }

    pub fn f_measure(&self) -> f64 {
        2.0 * self.intersection() as f64 / (self.volume_a + self.volume_b) as f64
    }

    pub fn iou(&self, mode: IouMode) -> f64 {
        match mode {
            IouMode::Volumetric => {
                let inter = self.intersection();
                inter as f64 / (self.volume_a + self.volume_b - inter) as f64
            }
            IouMode::FrameAveraged => {
                let (mut sum, mut n) = (0.0, 0usize);
                for (&i, &u) in self.intersections.iter().zip(&self.unions) {
                    if u > 0 {
                        sum += i as f64 / u as f64;
                        n += 1;
                    }
                }
                if n == 0 {
                    0.0
                } else {
                    sum / n as f64
                }
            }
        }
    }
}

/// Volumetric F-measure `2·Σ|u∩v| / (Σ|u| + Σ|v|)`.
pub fn tube_f_measure(u: &SegmentTube, v: &SegmentTube) -> Result<f64> {
    Ok(TubeOverlap::compute(u, v)?.f_measure())
}

/// Volumetric IoU `Σ|u∩v| / Σ|u∪v|`.
pub fn tube_iou(u: &SegmentTube, v: &SegmentTube) -> Result<f64> {
    Ok(TubeOverlap::compute(u, v)?.iou(IouMode::Volumetric))
}
