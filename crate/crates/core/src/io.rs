//! On-disk datasets and file codecs.
//!
//! A dataset is a JSON manifest listing videos. Per video:
//!
//! - `gt/`: 16-bit grayscale PNG instance-id maps `000000.png, ...`, 0 = unlabelled,
//! - `depth/`: 16-bit grayscale PNGs, `depth_scale` meters per unit, 0 = no reading,
//! - `pose/`: JSON camera records `000000.json, ...`,
//! - `pred`: one JSON file of run-length encoded predictions, overlaps allowed.
//!
//! Relative paths resolve against the manifest's directory. Everything a
//! command needs is loaded and checked before any work starts, so a bad
//! dataset never yields a partial report.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Matrix4};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::camgeo::{CameraModel, DepthImage, Intrinsics, RigidTransform};
use crate::error::{Error, Result};
use crate::mask::{masks_from_labels, RleMask};
use crate::synth::{perturb_segmentation, render_video, Perturbation, SceneSpec};
use crate::tracker::{run_video, TrackerConfig, TrackerFrame};
use crate::tube::{FrameSegmentation, InstanceId, Segment};
use crate::vsq::{evaluate_dataset, EvalConfig, VideoPair, VsqReport};

pub const DEFAULT_DEPTH_SCALE: f64 = 0.001;

fn frame_name(t: usize, ext: &str) -> String {
    format!("{t:06}.{ext}")
}

fn map_frames<R: Send>(n: usize, f: impl Fn(usize) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(|t| f(t).map_err(|e| Error::at_frame(t, e))).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(|t| f(t).map_err(|e| Error::at_frame(t, e))).collect()
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| {
        if e.is_io() {
            Error::io(path, e.into())
        } else {
            Error::format(path, e.to_string())
        }
    })
}

/// Pretty-printed, newline-terminated.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn png_error(path: &Path, e: png::DecodingError) -> Error {
    match e {
        png::DecodingError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    }
}

/// Reads a 16-bit single-channel PNG as row-major samples.
pub fn read_u16_png(path: &Path) -> Result<(u32, u32, Vec<u16>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| png_error(path, e))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen {
        return Err(Error::format(
            path,
            format!(
                "expected 16-bit grayscale, found {:?} at {:?}",
                info.color_type, info.bit_depth
            ),
        ));
    }
    let (w, h) = (info.width, info.height);
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    reader.next_frame(&mut buf).map_err(|e| png_error(path, e))?;
    let samples = buf
        .chunks_exact(2)
        .take(w as usize * h as usize)
        .map(|b| u16::from_be_bytes([b[0], b[1]]))
        .collect();
    Ok((w, h, samples))
}

pub fn write_u16_png(path: &Path, width: u32, height: u32, samples: &[u16]) -> Result<()> {
    if samples.len() != width as usize * height as usize {
        return Err(Error::Dimension(format!(
            "{} samples for a {width}x{height} image",
            samples.len()
        )));
    }
    let mut bytes = Vec::with_capacity(samples.len() * 2 + 1024);
    {
        let mut enc = png::Encoder::new(&mut bytes, width, height);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Sixteen);
        let to_err = |e: png::EncodingError| Error::format(path, e.to_string());
        let mut w = enc.write_header().map_err(to_err)?;
        let data: Vec<u8> = samples.iter().flat_map(|s| s.to_be_bytes()).collect();
        w.write_image_data(&data).map_err(to_err)?;
        w.finish().map_err(to_err)?;
    }
    write_bytes(path, &bytes)
}

/// One mask per nonzero id of a 16-bit id map.
pub fn load_gt_frame(path: &Path) -> Result<FrameSegmentation> {
    let (w, h, labels) = read_u16_png(path)?;
    gt_from_labels(w, h, &labels)
}

fn gt_from_labels(w: u32, h: u32, labels: &[u16]) -> Result<FrameSegmentation> {
    let segments = masks_from_labels(w, h, labels)?
        .into_iter()
        .map(|(id, mask)| Segment { id: id as InstanceId, mask })
        .collect();
    FrameSegmentation::from_segments(w, h, segments)
}

/// Paints a non-overlapping segmentation into an id map. Ids must lie in
/// `1..=65535`.
pub fn save_gt_frame(path: &Path, frame: &FrameSegmentation) -> Result<()> {
    let (w, h) = (frame.width(), frame.height());
    let mut labels = vec![0u16; w as usize * h as usize];
    for s in frame.segments() {
        let id = u16::try_from(s.id)
            .ok()
            .filter(|&id| id != 0)
            .ok_or_else(|| Error::OutOfRange(format!("ground-truth id {} not in 1..=65535", s.id)))?;
        for p in s.mask.pixels() {
            let slot = &mut labels[p.v as usize * w as usize + p.u as usize];
            if *slot != 0 {
                return Err(Error::format(path, format!("ids {} and {id} overlap", *slot)));
            }
            *slot = id;
        }
    }
    write_u16_png(path, w, h, &labels)
}

pub fn load_depth(path: &Path, scale: f64) -> Result<DepthImage> {
    let (w, h, raw) = read_u16_png(path)?;
    // A zero sample stays zero, which is the no-reading sentinel.
    DepthImage::new(w, h, raw.into_iter().map(|d| d as f64 * scale).collect())
}

/// Quantizes to the nearest unit; readings that would collapse to 0 are
/// kept as 1 so they stay valid.
pub fn save_depth(path: &Path, depth: &DepthImage, scale: f64) -> Result<()> {
    let mut raw = Vec::with_capacity(depth.data().len());
    for &d in depth.data() {
        if !(d > 0.0) {
            raw.push(0);
            continue;
        }
        let q = (d / scale).round();
        if q > u16::MAX as f64 {
            return Err(Error::OutOfRange(format!("depth {d} m exceeds the 16-bit range at scale {scale}")));
        }
        raw.push((q as u16).max(1));
    }
    write_u16_png(path, depth.width(), depth.height(), &raw)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseConvention {
    #[default]
    WorldToCamera,
    CameraToWorld,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub width: u32,
    pub height: u32,
    /// Row-major 3×3 calibration matrix.
    pub intrinsics: [[f64; 3]; 3],
    /// Row-major 4×4 rigid transform.
    pub extrinsics: [[f64; 4]; 4],
    #[serde(default)]
    pub convention: PoseConvention,
}

impl PoseRecord {
    pub fn from_camera(cam: &CameraModel) -> Self {
        let k = cam.intrinsics.matrix();
        let m = cam.extrinsics.to_matrix4();
        Self {
            width: cam.width,
            height: cam.height,
            intrinsics: std::array::from_fn(|r| std::array::from_fn(|c| k[(r, c)])),
            extrinsics: std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)])),
            convention: PoseConvention::WorldToCamera,
        }
    }

    pub fn to_camera(&self) -> Result<CameraModel> {
        let k = Matrix3::from_fn(|r, c| self.intrinsics[r][c]);
        let m = Matrix4::from_fn(|r, c| self.extrinsics[r][c]);
        let rigid = RigidTransform::from_matrix4(&m)?;
        let extrinsics = match self.convention {
            PoseConvention::WorldToCamera => rigid,
            PoseConvention::CameraToWorld => rigid.inverse(),
        };
        CameraModel::new(Intrinsics::from_matrix(&k)?, extrinsics, self.width, self.height)
    }
}

pub fn load_pose(path: &Path) -> Result<CameraModel> {
    read_json::<PoseRecord>(path)?.to_camera()
}

pub fn save_pose(path: &Path, cam: &CameraModel) -> Result<()> {
    write_json(path, &PoseRecord::from_camera(cam))
}

/// Per-frame predictions; masks within a frame may overlap.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionSet {
    pub width: u32,
    pub height: u32,
    pub frames: Vec<FrameSegmentation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub frame: usize,
    pub track_id: InstanceId,
    /// `[height, width]`.
    pub size: [u32; 2],
    /// Column-major runs, background first.
    pub counts: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionFile {
    pub width: u32,
    pub height: u32,
    pub frames: usize,
    pub records: Vec<PredictionRecord>,
}

impl PredictionSet {
    pub fn new(width: u32, height: u32, frames: Vec<FrameSegmentation>) -> Result<Self> {
        for (t, f) in frames.iter().enumerate() {
            if (f.width(), f.height()) != (width, height) {
                return Err(Error::at_frame(
                    t,
                    Error::DimensionMismatch {
                        left_w: width,
                        left_h: height,
                        right_w: f.width(),
                        right_h: f.height(),
                    },
                ));
            }
            f.check_unique_ids(t)?;
        }
        Ok(Self { width, height, frames })
    }

    /// Records ordered by frame, then track id.
    pub fn to_file(&self) -> PredictionFile {
        let mut records = Vec::new();
        for (t, f) in self.frames.iter().enumerate() {
            let mut segs: Vec<&Segment> = f.segments().iter().collect();
            segs.sort_by_key(|s| s.id);
            records.extend(segs.into_iter().map(|s| PredictionRecord {
                frame: t,
                track_id: s.id,
                size: [self.height, self.width],
                counts: s.mask.runs().to_vec(),
            }));
        }
        PredictionFile {
            width: self.width,
            height: self.height,
            frames: self.frames.len(),
            records,
        }
    }

    /// `origin` labels errors; a record error names its index.
    pub fn from_file(file: PredictionFile, origin: &Path) -> Result<Self> {
        let (w, h) = (file.width, file.height);
        let mut frames = (0..file.frames)
            .map(|_| FrameSegmentation::new(w, h))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::format(origin, e.to_string()))?;
        let mut seen = HashSet::new();
        for (i, r) in file.records.into_iter().enumerate() {
            let bad = |msg: String| Error::format(origin, format!("record {i}: {msg}"));
            if r.size != [h, w] {
                return Err(bad(format!("size {:?} differs from [{h}, {w}]", r.size)));
            }
            let frame = frames
                .get_mut(r.frame)
                .ok_or_else(|| bad(format!("frame {} beyond {}", r.frame, file.frames)))?;
            if !seen.insert((r.frame, r.track_id)) {
                return Err(bad(format!("track {} repeated in frame {}", r.track_id, r.frame)));
            }
            let mask = RleMask::from_runs(w, h, &r.counts).map_err(|e| bad(e.to_string()))?;
            frame.push(r.track_id, mask).map_err(|e| bad(e.to_string()))?;
        }
        for f in &mut frames {
            f.sort_by_id();
        }
        Ok(Self { width: w, height: h, frames })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(&self.to_file()).expect("prediction records serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let file: PredictionFile = serde_json::from_str(text).map_err(|e| Error::format(origin, e.to_string()))?;
        Self::from_file(file, origin)
    }
}

pub fn load_predictions(path: &Path) -> Result<PredictionSet> {
    PredictionSet::from_file(read_json(path)?, path)
}

/// Compact JSON: prediction files are large.
pub fn save_predictions(path: &Path, set: &PredictionSet) -> Result<()> {
    write_bytes(path, set.to_json().as_bytes())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AxisConvention {
    /// Camera +x right, +y down, +z forward; world-to-camera extrinsics
    /// unless a pose file says otherwise.
    #[default]
    XRightYDownZForward,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoEntry {
    pub id: String,
    pub frames: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<PathBuf>,
}

fn default_depth_scale() -> f64 {
    DEFAULT_DEPTH_SCALE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub width: u32,
    pub height: u32,
    #[serde(default = "default_depth_scale")]
    pub depth_scale: f64,
    #[serde(default)]
    pub convention: AxisConvention,
    pub videos: Vec<VideoEntry>,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub root: PathBuf,
}

/// Per-video data a command reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Gt,
    Pred,
    Depth,
    Pose,
}

impl Stream {
    fn name(self) -> &'static str {
        match self {
            Stream::Gt => "gt",
            Stream::Pred => "pred",
            Stream::Depth => "depth",
            Stream::Pose => "pose",
        }
    }

    fn ext(self) -> &'static str {
        match self {
            Stream::Gt | Stream::Depth => "png",
            Stream::Pred | Stream::Pose => "json",
        }
    }
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let mut m: DatasetManifest = read_json(path)?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.check_header(path)?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    fn check_header(&self, path: &Path) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::format(path, format!("image size {}x{}", self.width, self.height)));
        }
        if !(self.depth_scale > 0.0 && self.depth_scale.is_finite()) {
            return Err(Error::format(path, format!("depth scale {}", self.depth_scale)));
        }
        let mut ids = HashSet::new();
        for v in &self.videos {
            let ok = !v.id.is_empty()
                && v.id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
                && !v.id.starts_with('.');
            if !ok {
                return Err(Error::format(path, format!("video id {:?} is not a plain name", v.id)));
            }
            if !ids.insert(&v.id) {
                return Err(Error::format(path, format!("video id {:?} repeated", v.id)));
            }
            if v.frames == 0 {
                return Err(Error::format(path, format!("video {:?} has no frames", v.id)));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.root.join(p)
    }

    pub fn stream_path(&self, video: &VideoEntry, s: Stream) -> Result<PathBuf> {
        let p = match s {
            Stream::Gt => &video.gt,
            Stream::Pred => &video.pred,
            Stream::Depth => &video.depth,
            Stream::Pose => &video.pose,
        };
        p.as_deref()
            .map(|p| self.resolve(p))
            .ok_or_else(|| Error::in_video(&video.id, Error::InvalidConfig(format!("no {} path", s.name()))))
    }

    /// Path of frame `t` in a per-frame stream directory.
    pub fn frame_path(&self, video: &VideoEntry, s: Stream, t: usize) -> Result<PathBuf> {
        Ok(self.stream_path(video, s)?.join(frame_name(t, s.ext())))
    }

    /// Checks that every listed stream exists for every video, with exactly
    /// `frames` files in each per-frame directory.
    pub fn validate(&self, streams: &[Stream]) -> Result<()> {
        for v in &self.videos {
            for &s in streams {
                self.validate_stream(v, s).map_err(|e| Error::in_video(&v.id, e))?;
            }
        }
        Ok(())
    }

    fn validate_stream(&self, v: &VideoEntry, s: Stream) -> Result<()> {
        let path = self.stream_path(v, s)?;
        if s == Stream::Pred {
            if !path.is_file() {
                return Err(Error::format(&path, "prediction file missing"));
            }
            return Ok(());
        }
        if !path.is_dir() {
            return Err(Error::format(&path, format!("{} directory missing", s.name())));
        }
        let ext = s.ext();
        let mut count = 0usize;
        for entry in std::fs::read_dir(&path).map_err(|e| Error::io(&path, e))? {
            let entry = entry.map_err(|e| Error::io(&path, e))?;
            if entry.path().extension().is_some_and(|x| x == ext) {
                count += 1;
            }
        }
        if count != v.frames {
            return Err(Error::format(
                &path,
                format!("{count} .{ext} files for {} frames", v.frames),
            ));
        }
        for t in 0..v.frames {
            let f = path.join(frame_name(t, ext));
            if !f.is_file() {
                return Err(Error::format(&f, "frame file missing"));
            }
        }
        Ok(())
    }

    fn check_frame_dims(&self, w: u32, h: u32, path: &Path) -> Result<()> {
        if (w, h) != (self.width, self.height) {
            return Err(Error::format(
                path,
                format!("{w}x{h} frame in a {}x{} dataset", self.width, self.height),
            ));
        }
        Ok(())
    }

    pub fn load_gt(&self, v: &VideoEntry) -> Result<Vec<FrameSegmentation>> {
        map_frames(v.frames, |t| {
            let path = self.frame_path(v, Stream::Gt, t)?;
            let f = load_gt_frame(&path)?;
            self.check_frame_dims(f.width(), f.height(), &path)?;
            Ok(f)
        })
        .map_err(|e| Error::in_video(&v.id, e))
    }

    pub fn load_pred(&self, v: &VideoEntry) -> Result<Vec<FrameSegmentation>> {
        let path = self.stream_path(v, Stream::Pred)?;
        let set = load_predictions(&path).map_err(|e| Error::in_video(&v.id, e))?;
        self.check_frame_dims(set.width, set.height, &path)
            .map_err(|e| Error::in_video(&v.id, e))?;
        if set.frames.len() != v.frames {
            return Err(Error::in_video(
                &v.id,
                Error::format(&path, format!("{} frames, manifest says {}", set.frames.len(), v.frames)),
            ));
        }
        Ok(set.frames)
    }

    pub fn load_depth(&self, v: &VideoEntry) -> Result<Vec<DepthImage>> {
        map_frames(v.frames, |t| {
            let path = self.frame_path(v, Stream::Depth, t)?;
            let d = load_depth(&path, self.depth_scale)?;
            self.check_frame_dims(d.width(), d.height(), &path)?;
            Ok(d)
        })
        .map_err(|e| Error::in_video(&v.id, e))
    }

    pub fn load_poses(&self, v: &VideoEntry) -> Result<Vec<CameraModel>> {
        map_frames(v.frames, |t| {
            let path = self.frame_path(v, Stream::Pose, t)?;
            let c = load_pose(&path).map_err(|e| match e {
                e @ (Error::Io { .. } | Error::Format { .. }) => e,
                other => Error::format(&path, other.to_string()),
            })?;
            self.check_frame_dims(c.width, c.height, &path)?;
            Ok(c)
        })
        .map_err(|e| Error::in_video(&v.id, e))
    }
}

/// Loads ground truth and predictions for every video, then scores them.
pub fn evaluate_manifest(manifest: &DatasetManifest, cfg: &EvalConfig) -> Result<VsqReport> {
    cfg.validate()?;
    manifest.validate(&[Stream::Gt, Stream::Pred])?;
    let videos = manifest
        .videos
        .iter()
        .map(|v| Ok((manifest.load_gt(v)?, manifest.load_pred(v)?)))
        .collect::<Result<Vec<VideoPair>>>()?;
    evaluate_dataset(&videos, cfg)
}

fn two_decimals(x: f64) -> Box<RawValue> {
    RawValue::from_string(format!("{x:.2}")).expect("a formatted float is valid JSON")
}

#[derive(Serialize)]
struct CountsDoc {
    tp: u64,
    fp: u64,
    #[serde(rename = "fn")]
    fn_: u64,
}

#[derive(Serialize)]
struct ReportDoc<'a> {
    per_k: BTreeMap<usize, Box<RawValue>>,
    vsq: Box<RawValue>,
    counts: BTreeMap<usize, CountsDoc>,
    videos: usize,
    config: &'a EvalConfig,
}

/// Report JSON with scores fixed to two decimals.
pub fn report_json(report: &VsqReport) -> String {
    let doc = ReportDoc {
        per_k: report.per_k.iter().map(|(&k, &v)| (k, two_decimals(v))).collect(),
        vsq: two_decimals(report.vsq),
        counts: report
            .counts
            .iter()
            .map(|(&k, a)| (k, CountsDoc { tp: a.tp, fp: a.fp, fn_: a.fn_ }))
            .collect(),
        videos: report.videos,
        config: &report.config,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
    s.push('\n');
    s
}

pub fn save_report(path: &Path, report: &VsqReport) -> Result<()> {
    write_bytes(path, report_json(report).as_bytes())
}

/// Runs the tracker on every video's `pred` segmentation, writing
/// `<out>/<video>.json` and `<out>/manifest.json`. Returns the new manifest
/// path. Other streams keep pointing at the input dataset.
pub fn track_manifest(manifest: &DatasetManifest, cfg: &TrackerConfig, out: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    manifest.validate(&[Stream::Pred, Stream::Depth, Stream::Pose])?;
    let mut inputs = Vec::with_capacity(manifest.videos.len());
    for v in &manifest.videos {
        let segs = manifest.load_pred(v)?;
        let depth = manifest.load_depth(v)?;
        let poses = manifest.load_poses(v)?;
        let frames: Vec<TrackerFrame> = segs
            .into_iter()
            .zip(depth)
            .zip(poses)
            .map(|((segments, depth), camera)| TrackerFrame { segments, depth, camera })
            .collect();
        inputs.push(frames);
    }
    let run = |(v, frames): (&VideoEntry, &Vec<TrackerFrame>)| {
        run_video(frames, cfg).map_err(|e| Error::in_video(&v.id, e))
    };
    #[cfg(feature = "parallel")]
    let outputs: Vec<Result<Vec<FrameSegmentation>>> = {
        use rayon::prelude::*;
        manifest.videos.par_iter().zip(inputs.par_iter()).map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outputs: Vec<Result<Vec<FrameSegmentation>>> = manifest.videos.iter().zip(inputs.iter()).map(run).collect();

    let root = absolute(&manifest.root)?;
    let mut entries = Vec::with_capacity(manifest.videos.len());
    for (v, tracked) in manifest.videos.iter().zip(outputs) {
        let set = PredictionSet::new(manifest.width, manifest.height, tracked?)?;
        let name = format!("{}.json", v.id);
        save_predictions(&out.join(&name), &set)?;
        let abs = |p: &Option<PathBuf>| p.as_ref().map(|p| root.join(p));
        entries.push(VideoEntry {
            id: v.id.clone(),
            frames: v.frames,
            gt: abs(&v.gt),
            pred: Some(PathBuf::from(name)),
            depth: abs(&v.depth),
            pose: abs(&v.pose),
        });
    }
    let tracked = DatasetManifest {
        videos: entries,
        root: PathBuf::new(),
        ..manifest.clone()
    };
    let path = out.join("manifest.json");
    tracked.save(&path)?;
    Ok(path)
}

fn absolute(p: &Path) -> Result<PathBuf> {
    let p = if p.as_os_str().is_empty() { Path::new(".") } else { p };
    std::path::absolute(p).map_err(|e| Error::io(p, e))
}

/// Renders each scene as one video under `out/<id>/` and writes
/// `out/manifest.json`. Predictions are the exact ground truth, optionally
/// perturbed.
pub fn write_synth_dataset(
    scenes: &[SceneSpec],
    out: &Path,
    perturbation: Option<Perturbation>,
    seed: u64,
) -> Result<PathBuf> {
    let first = scenes
        .first()
        .ok_or_else(|| Error::InvalidConfig("no scenes to render".into()))?;
    let (w, h) = (first.width, first.height);
    let mut videos = Vec::with_capacity(scenes.len());
    for (i, spec) in scenes.iter().enumerate() {
        let id = format!("video{i:03}");
        if (spec.width, spec.height) != (w, h) {
            return Err(Error::in_video(
                &id,
                Error::Dimension(format!("{}x{} scene in a {w}x{h} dataset", spec.width, spec.height)),
            ));
        }
        let frames = render_video(spec).map_err(|e| Error::in_video(&id, e))?;
        let dir = out.join(&id);
        map_frames(frames.len(), |t| {
            let f = &frames[t];
            write_u16_png(&dir.join("gt").join(frame_name(t, "png")), w, h, &f.labels)?;
            save_depth(&dir.join("depth").join(frame_name(t, "png")), &f.depth, DEFAULT_DEPTH_SCALE)?;
            save_pose(&dir.join("pose").join(frame_name(t, "json")), &f.camera)
        })
        .map_err(|e| Error::in_video(&id, e))?;
        let gt: Vec<FrameSegmentation> = frames.into_iter().map(|f| f.segmentation).collect();
        let pred = match perturbation {
            Some(p) => perturb_segmentation(&gt, p, seed),
            None => gt,
        };
        let n = pred.len();
        save_predictions(&dir.join("pred.json"), &PredictionSet::new(w, h, pred)?)?;
        videos.push(VideoEntry {
            frames: n,
            gt: Some(PathBuf::from(&id).join("gt")),
            pred: Some(PathBuf::from(&id).join("pred.json")),
            depth: Some(PathBuf::from(&id).join("depth")),
            pose: Some(PathBuf::from(&id).join("pose")),
            id,
        });
    }
    let manifest = DatasetManifest {
        width: w,
        height: h,
        depth_scale: DEFAULT_DEPTH_SCALE,
        convention: AxisConvention::default(),
        videos,
        root: PathBuf::new(),
    };
    let path = out.join("manifest.json");
    manifest.save(&path)?;
    Ok(path)
}

/// A scene file holds one scene or a list of them.
#[derive(Deserialize)]
#[serde(untagged)]
enum SceneFile {
    One(Box<SceneSpec>),
    Many(Vec<SceneSpec>),
}

pub fn load_scenes(path: &Path) -> Result<Vec<SceneSpec>> {
    let scenes = match read_json::<SceneFile>(path)? {
        SceneFile::One(s) => vec![*s],
        SceneFile::Many(v) => v,
    };
    for (i, s) in scenes.iter().enumerate() {
        s.validate().map_err(|e| Error::in_video(format!("#{i}"), e))?;
    }
    Ok(scenes)
}
