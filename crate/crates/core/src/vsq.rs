//! Video segmentation quality.
//!
//! For a window length `k`, ground-truth and predicted tubes of every window
//! are matched by maximum total tube F-measure. Matched pairs are true
//! positives, leftover predictions false positives, leftover ground truth
//! false negatives, and
//!
//! ```text
//! VSQ^k = Σ_TP IoU(u, û) / (|TP| + ½|FP| + ½|FN|)
//! VSQ   = mean of VSQ^k over the window-length set K
//! ```
//!
//! Counts are pooled over every window of every video before dividing
//! (micro-average) unless per-video pooling is requested.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::assignment::{solve_max_assignment, ScoreMatrix};
use crate::error::{Error, Result};
use crate::tube::{build_tubes_from_ids, FrameSegmentation, IouMode, SegmentTube, TubeOverlap, Window};

pub const DEFAULT_K_SET: [usize; 4] = [1, 5, 10, 15];
pub const DEFAULT_STRIDE: usize = 15;

/// Running TP/FP/FN counts and summed TP IoU for one window length.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VsqAccumulator {
    pub k: usize,
    pub sum_tp_iou: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl VsqAccumulator {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }

    pub fn merge(&mut self, other: &VsqAccumulator) {
        self.k = self.k.max(other.k);
        self.sum_tp_iou += other.sum_tp_iou;
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    pub fn merged(mut self, other: &VsqAccumulator) -> Self {
        self.merge(other);
        self
    }

    /// No tubes on either side.
    pub fn is_vacuous(&self) -> bool {
        self.tp == 0 && self.fp == 0 && self.fn_ == 0
    }
}

/// VSQ^k as a percentage. A window set with no tubes at all scores 100.
pub fn vsq_k(acc: &VsqAccumulator) -> f64 {
    if acc.is_vacuous() {
        return 100.0;
    }
    let denom = acc.tp as f64 + 0.5 * acc.fp as f64 + 0.5 * acc.fn_ as f64;
    100.0 * acc.sum_tp_iou / denom
}

/// Complete windows of length `k` starting every `stride` frames.
pub fn enumerate_windows(video_length: usize, k: usize, stride: usize) -> Vec<Window> {
    if k == 0 || stride == 0 || k > video_length {
        return Vec::new();
    }
    (0..=video_length - k)
        .step_by(stride)
        .map(|start| Window { start, length: k })
        .collect()
}

/// Per-window scoring knobs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WindowScoring {
    /// A matched pair only counts as TP when its tube IoU exceeds this.
    pub tp_threshold: f64,
    pub iou_mode: IouMode,
}

/// Matches one window's tubes and tallies TP/FP/FN.
pub fn score_window(gt: &[SegmentTube], pred: &[SegmentTube]) -> Result<VsqAccumulator> {
    score_window_with(gt, pred, &WindowScoring::default())
}

pub fn score_window_with(
    gt: &[SegmentTube],
    pred: &[SegmentTube],
    opts: &WindowScoring,
) -> Result<VsqAccumulator> {
    let k = gt.first().or(pred.first()).map_or(0, SegmentTube::len);
    let mut acc = VsqAccumulator::new(k);
    let mut overlaps: Vec<Option<TubeOverlap>> = Vec::with_capacity(gt.len() * pred.len());
    let mut scores = Vec::with_capacity(gt.len() * pred.len());
    for g in gt {
        for p in pred {
            let o = TubeOverlap::compute(g, p)?;
            if o.intersection() == 0 {
                scores.push(0.0);
                overlaps.push(None);
            } else {
                scores.push(o.f_measure());
                overlaps.push(Some(o));
            }
        }
    }
    let matching = solve_max_assignment(&ScoreMatrix::new(gt.len(), pred.len(), scores)?);
    for &(r, c) in &matching.pairs {
        let o = overlaps[r * pred.len() + c]
            .as_ref()
            .expect("matched pairs have positive overlap");
        let iou = o.iou(opts.iou_mode);
        if iou > opts.tp_threshold {
            acc.tp += 1;
            acc.sum_tp_iou += iou;
        }
    }
    acc.fp = pred.len() as u64 - acc.tp;
    acc.fn_ = gt.len() as u64 - acc.tp;
    Ok(acc)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    /// Pool counts over all windows of all videos, then divide.
    #[default]
    Micro,
    /// VSQ^k per video, then the unweighted mean over videos.
    PerVideo,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmptyPolicy {
    /// Nothing to find and nothing predicted scores 100.
    #[default]
    Perfect,
    /// Such videos are left out of per-video averages.
    Skip,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub k_set: Vec<usize>,
    pub stride: usize,
    pub pooling: Pooling,
    pub empty: EmptyPolicy,
    pub scoring: WindowScoring,
    /// Link frame-level predictions by pairwise assignment before scoring.
    pub link_predictions: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k_set: DEFAULT_K_SET.to_vec(),
            stride: DEFAULT_STRIDE,
            pooling: Pooling::Micro,
            empty: EmptyPolicy::Perfect,
            scoring: WindowScoring::default(),
            link_predictions: false,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_set.is_empty() {
            return Err(Error::InvalidConfig("k set is empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for &k in &self.k_set {
            if k == 0 {
                return Err(Error::InvalidConfig("window length 0".into()));
            }
            if !seen.insert(k) {
                return Err(Error::InvalidConfig(format!("window length {k} repeated")));
            }
        }
        if self.stride == 0 {
            return Err(Error::InvalidConfig("stride must be at least 1".into()));
        }
        let t = self.scoring.tp_threshold;
        if !(0.0..1.0).contains(&t) {
            return Err(Error::InvalidConfig(format!("tp threshold {t} outside [0, 1)")));
        }
        Ok(())
    }
}

/// Accumulators for one video, aligned with `EvalConfig::k_set`.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoScore {
    pub per_k: Vec<VsqAccumulator>,
}

/// Scores every window of one video for every `k`.
pub fn score_video(
    gt: &[FrameSegmentation],
    pred: &[FrameSegmentation],
    cfg: &EvalConfig,
) -> Result<VideoScore> {
    if gt.len() != pred.len() {
        return Err(Error::WindowMismatch(format!(
            "{} ground-truth frames vs {} predicted frames",
            gt.len(),
            pred.len()
        )));
    }
    for (t, (g, p)) in gt.iter().zip(pred).enumerate() {
        if !g.same_dims(p) {
            return Err(Error::at_frame(
                t,
                Error::DimensionMismatch {
                    left_w: g.width(),
                    left_h: g.height(),
                    right_w: p.width(),
                    right_h: p.height(),
                },
            ));
        }
    }
    let linked;
    let pred = if cfg.link_predictions {
        linked = crate::tube::link_frame_predictions(pred)?;
        &linked[..]
    } else {
        pred
    };
    let mut per_k = Vec::with_capacity(cfg.k_set.len());
    for &k in &cfg.k_set {
        let mut acc = VsqAccumulator::new(k);
        for w in enumerate_windows(gt.len(), k, cfg.stride) {
            let gt_tubes = build_tubes_from_ids(gt, w)?;
            let pred_tubes = build_tubes_from_ids(pred, w)?;
            acc.merge(&score_window_with(&gt_tubes, &pred_tubes, &cfg.scoring)?);
        }
        per_k.push(acc);
    }
    Ok(VideoScore { per_k })
}

/// Dataset-level result. Percentages are kept at full precision here;
/// rounding happens when the report is written.
#[derive(Clone, Debug, PartialEq)]
pub struct VsqReport {
    pub per_k: BTreeMap<usize, f64>,
    pub vsq: f64,
    pub counts: BTreeMap<usize, VsqAccumulator>,
    pub window_stride: usize,
    pub k_set: Vec<usize>,
    pub videos: usize,
    pub config: EvalConfig,
}

/// Folds video scores in the order they are pushed, so the floating-point
/// reduction is independent of how the videos were scored.
#[derive(Clone, Debug)]
pub struct Evaluator {
    cfg: EvalConfig,
    pooled: Vec<VsqAccumulator>,
    per_video_sum: Vec<f64>,
    per_video_n: Vec<usize>,
    videos: usize,
}

impl Evaluator {
    pub fn new(cfg: EvalConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.k_set.len();
        Ok(Self {
            pooled: cfg.k_set.iter().map(|&k| VsqAccumulator::new(k)).collect(),
            per_video_sum: vec![0.0; n],
            per_video_n: vec![0; n],
            videos: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &EvalConfig {
        &self.cfg
    }

    pub fn push(&mut self, score: &VideoScore) {
        for (i, acc) in score.per_k.iter().enumerate() {
            self.pooled[i].merge(acc);
            if acc.is_vacuous() && self.cfg.empty == EmptyPolicy::Skip {
                continue;
            }
            self.per_video_sum[i] += vsq_k(acc);
            self.per_video_n[i] += 1;
        }
        self.videos += 1;
    }

    pub fn add_video(&mut self, gt: &[FrameSegmentation], pred: &[FrameSegmentation]) -> Result<()> {
        let s = score_video(gt, pred, &self.cfg)?;
        self.push(&s);
        Ok(())
    }

    pub fn finish(self) -> VsqReport {
        let mut per_k = BTreeMap::new();
        let mut counts = BTreeMap::new();
        let mut values = Vec::with_capacity(self.cfg.k_set.len());
        for (i, &k) in self.cfg.k_set.iter().enumerate() {
            let value = match self.cfg.pooling {
                Pooling::Micro => vsq_k(&self.pooled[i]),
                Pooling::PerVideo if self.per_video_n[i] == 0 => 100.0,
                Pooling::PerVideo => self.per_video_sum[i] / self.per_video_n[i] as f64,
            };
            values.push(value);
            per_k.insert(k, value);
            counts.insert(k, self.pooled[i]);
        }
        let vsq = values.iter().sum::<f64>() / values.len() as f64;
        VsqReport {
            per_k,
            vsq,
            counts,
            window_stride: self.cfg.stride,
            k_set: self.cfg.k_set.clone(),
            videos: self.videos,
            config: self.cfg,
        }
    }
}

/// Ground-truth and predicted frames for one video.
pub type VideoPair = (Vec<FrameSegmentation>, Vec<FrameSegmentation>);

/// Scores all videos (in parallel when enabled) and reduces in input order.
pub fn evaluate_dataset(videos: &[VideoPair], cfg: &EvalConfig) -> Result<VsqReport> {
    let mut ev = Evaluator::new(cfg.clone())?;
    let score = |(i, (gt, pred)): (usize, &VideoPair)| {
        score_video(gt, pred, cfg).map_err(|e| Error::in_video(format!("#{i}"), e))
    };
    #[cfg(feature = "parallel")]
    let scores: Vec<Result<VideoScore>> = {
        use rayon::prelude::*;
        videos.par_iter().enumerate().map(score).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let scores: Vec<Result<VideoScore>> = videos.iter().enumerate().map(score).collect();
    for s in scores {
        ev.push(&s?);
    }
    Ok(ev.finish())
}
