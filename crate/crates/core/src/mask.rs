//! Run-length encoded binary masks and pixel-set geometry.
//!
//! Runs alternate background/foreground in column-major pixel order: pixel
//! `(u, v)` (column, row) sits at flat index `u * height + v`. The first run
//! always counts background pixels and may be zero. This is the same layout
//! COCO-style tooling uses, so externally produced RLE can be ingested as-is.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer pixel coordinate. `u` is the column, `v` the row.
///
/// Signed because projected prompts can land outside the image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: i64,
    pub v: i64,
}

impl PixelPoint {
    pub fn new(u: i64, v: i64) -> Self {
        Self { u, v }
    }

    pub fn in_bounds(&self, width: u32, height: u32) -> bool {
        self.u >= 0 && self.v >= 0 && self.u < width as i64 && self.v < height as i64
    }
}

/// Dense binary grid stored row-major. Mostly useful for tests and small tools.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DenseMask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl DenseMask {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            data: vec![false; width as usize * height as usize],
        })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Result<Self> {
        let mut m = Self::new(width, height)?;
        for v in 0..height {
            for u in 0..width {
                m.data[(v * width + u) as usize] = f(u, v);
            }
        }
        Ok(m)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, u: u32, v: u32) -> bool {
        self.data[(v * self.width + u) as usize]
    }

    pub fn set(&mut self, u: u32, v: u32, value: bool) {
        self.data[(v * self.width + u) as usize] = value;
    }

    pub fn count(&self) -> u64 {
        self.data.iter().filter(|&&b| b).count() as u64
    }
}

fn check_dims(width: u32, height: u32) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Dimension(format!("{width}x{height} has a zero side")));
    }
    if (width as u64) * (height as u64) > u32::MAX as u64 {
        return Err(Error::Dimension(format!("{width}x{height} exceeds 2^32 pixels")));
    }
    Ok(())
}

/// Accumulates alternating runs, merging zero-length and same-value pushes
/// into canonical form.
struct RunBuilder {
    runs: Vec<u32>,
    fg: bool,
}

impl RunBuilder {
    fn new() -> Self {
        Self {
            runs: vec![0],
            fg: false,
        }
    }

    #[inline]
    fn push(&mut self, fg: bool, len: u32) {
        if len == 0 {
            return;
        }
        if fg == self.fg {
            *self.runs.last_mut().unwrap() += len;
        } else {
            self.runs.push(len);
            self.fg = fg;
        }
    }

    fn finish(self) -> Vec<u32> {
        self.runs
    }
}

/// A binary mask in run-length form. Values are immutable once built.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RleMask {
    width: u32,
    height: u32,
    runs: Vec<u32>,
    area: u64,
    /// Inclusive range of columns holding foreground, `None` when empty.
    col_span: Option<(u32, u32)>,
}

impl RleMask {
    fn from_canonical(width: u32, height: u32, runs: Vec<u32>) -> Self {
        let mut area = 0u64;
        let mut first = None;
        let mut last_end = 0u64;
        let mut pos = 0u64;
        for (i, &r) in runs.iter().enumerate() {
            if i % 2 == 1 && r > 0 {
                area += r as u64;
                if first.is_none() {
                    first = Some(pos);
                }
                last_end = pos + r as u64;
            }
            pos += r as u64;
        }
        let h = height as u64;
        let col_span = first.map(|f| ((f / h) as u32, ((last_end - 1) / h) as u32));
        Self {
            width,
            height,
            runs,
            area,
            col_span,
        }
    }

    pub fn empty(width: u32, height: u32) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self::from_canonical(width, height, vec![width * height]))
    }

    pub fn full(width: u32, height: u32) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self::from_canonical(width, height, vec![0, width * height]))
    }

    /// Builds a mask from externally supplied runs. Zero-length interior runs
    /// are folded so equal pixel sets always compare equal.
    pub fn from_runs(width: u32, height: u32, runs: &[u32]) -> Result<Self> {
        check_dims(width, height)?;
        let total: u64 = runs.iter().map(|&r| r as u64).sum();
        let expected = width as u64 * height as u64;
        if total != expected {
            return Err(Error::Dimension(format!(
                "runs sum to {total}, expected {width}x{height} = {expected}"
            )));
        }
        let mut b = RunBuilder::new();
        for (i, &r) in runs.iter().enumerate() {
            b.push(i % 2 == 1, r);
        }
        Ok(Self::from_canonical(width, height, b.finish()))
    }

    /// Column-major predicate constructor: `f(u, v)` is queried once per pixel.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Result<Self> {
        check_dims(width, height)?;
        let mut b = RunBuilder::new();
        for u in 0..width {
            for v in 0..height {
                b.push(f(u, v), 1);
            }
        }
        Ok(Self::from_canonical(width, height, b.finish()))
    }

    /// Axis-aligned rectangle `[u0, u1) x [v0, v1)`, clipped to the image.
    pub fn rect(width: u32, height: u32, u0: i64, v0: i64, u1: i64, v1: i64) -> Result<Self> {
        check_dims(width, height)?;
        let cu0 = u0.clamp(0, width as i64) as u32;
        let cu1 = u1.clamp(0, width as i64) as u32;
        let cv0 = v0.clamp(0, height as i64) as u32;
        let cv1 = v1.clamp(0, height as i64) as u32;
        if cu0 >= cu1 || cv0 >= cv1 {
            return Self::empty(width, height);
        }
        let mut b = RunBuilder::new();
        b.push(false, cu0 * height);
        for _ in cu0..cu1 {
            b.push(false, cv0);
            b.push(true, cv1 - cv0);
            b.push(false, height - cv1);
        }
        b.push(false, (width - cu1) * height);
        Ok(Self::from_canonical(width, height, b.finish()))
    }

    pub fn encode(dense: &DenseMask) -> Self {
        let (w, h) = (dense.width, dense.height);
        let mut b = RunBuilder::new();
        for u in 0..w {
            for v in 0..h {
                b.push(dense.data[(v * w + u) as usize], 1);
            }
        }
        Self::from_canonical(w, h, b.finish())
    }

    pub fn decode(&self) -> DenseMask {
        let mut dense = DenseMask {
            width: self.width,
            height: self.height,
            data: vec![false; self.width as usize * self.height as usize],
        };
        for (u, v0, v1) in self.column_spans() {
            for v in v0..=v1 {
                dense.set(u, v, true);
            }
        }
        dense
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn runs(&self) -> &[u32] {
        &self.runs
    }

    pub fn area(&self) -> u64 {
        self.area
    }

    pub fn is_empty(&self) -> bool {
        self.area == 0
    }

    pub fn col_span(&self) -> Option<(u32, u32)> {
        self.col_span
    }

    pub fn same_dims(&self, other: &RleMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn check_same_dims(&self, other: &RleMask) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                left_w: self.width,
                left_h: self.height,
                right_w: other.width,
                right_h: other.height,
            })
        }
    }

    /// Flat column-major index of the first foreground pixel.
    pub fn first_foreground_index(&self) -> Option<u64> {
        if self.runs.len() > 1 {
            Some(self.runs[0] as u64)
        } else {
            None
        }
    }

    pub fn contains(&self, p: PixelPoint) -> bool {
        if !p.in_bounds(self.width, self.height) {
            return false;
        }
        let idx = p.u as u64 * self.height as u64 + p.v as u64;
        let mut pos = 0u64;
        for (i, &r) in self.runs.iter().enumerate() {
            pos += r as u64;
            if idx < pos {
                return i % 2 == 1;
            }
        }
        false
    }

    /// Foreground pixels as `(column, first_row, last_row)` segments, in
    /// column-major order.
    pub fn column_spans(&self) -> ColumnSpans<'_> {
        ColumnSpans {
            mask: self,
            run: 0,
            pos: 0,
            pending: None,
        }
    }

    /// Foreground pixel coordinates in column-major order.
    pub fn pixels(&self) -> impl Iterator<Item = PixelPoint> + '_ {
        self.column_spans().flat_map(|(u, v0, v1)| {
            (v0..=v1).map(move |v| PixelPoint::new(u as i64, v as i64))
        })
    }

    pub fn intersection_area(&self, other: &RleMask) -> Result<u64> {
        self.check_same_dims(other)?;
        Ok(self.intersection_unchecked(other))
    }

    fn intersection_unchecked(&self, other: &RleMask) -> u64 {
        match (self.col_span, other.col_span) {
            (Some((a0, a1)), Some((b0, b1))) if a0 <= b1 && b0 <= a1 => {}
            _ => return 0,
        }
        let (a, b) = (&self.runs, &other.runs);
        let (mut i, mut j) = (0usize, 0usize);
        let (mut ra, mut rb) = (a[0], b[0]);
        let mut total = 0u64;
        loop {
            let step = ra.min(rb);
            if i % 2 == 1 && j % 2 == 1 {
                total += step as u64;
            }
            ra -= step;
            rb -= step;
            if ra == 0 {
                i += 1;
                if i == a.len() {
                    break;
                }
                ra = a[i];
            }
            if rb == 0 {
                j += 1;
                if j == b.len() {
                    break;
                }
                rb = b[j];
            }
        }
        total
    }

    pub fn union_area(&self, other: &RleMask) -> Result<u64> {
        let inter = self.intersection_area(other)?;
        Ok(self.area + other.area - inter)
    }

    /// Pixel-wise union as a new mask.
    pub fn union(&self, other: &RleMask) -> Result<RleMask> {
        self.check_same_dims(other)?;
        if other.is_empty() {
            return Ok(self.clone());
        }
        if self.is_empty() {
            return Ok(other.clone());
        }
        let (a, b) = (&self.runs, &other.runs);
        let (mut i, mut j) = (0usize, 0usize);
        let (mut ra, mut rb) = (a[0], b[0]);
        let mut out = RunBuilder::new();
        loop {
            let step = ra.min(rb);
            out.push(i % 2 == 1 || j % 2 == 1, step);
            ra -= step;
            rb -= step;
            if ra == 0 {
                i += 1;
                if i == a.len() {
                    break;
                }
                ra = a[i];
            }
            if rb == 0 {
                j += 1;
                if j == b.len() {
                    break;
                }
                rb = b[j];
            }
        }
        Ok(RleMask::from_canonical(self.width, self.height, out.finish()))
    }

    /// Keeps only the columns in `[u0, u1)`.
    pub fn crop_columns(&self, u0: u32, u1: u32) -> RleMask {
        let u1 = u1.min(self.width);
        let mut b = RunBuilder::new();
        let h = self.height;
        let mut cursor = 0u64;
        for (u, v0, v1) in self.column_spans() {
            if u < u0 || u >= u1 {
                continue;
            }
            let s = u as u64 * h as u64 + v0 as u64;
            b.push(false, (s - cursor) as u32);
            b.push(true, v1 - v0 + 1);
            cursor = s + (v1 - v0 + 1) as u64;
        }
        let total = self.width as u64 * h as u64;
        b.push(false, (total - cursor) as u32);
        RleMask::from_canonical(self.width, self.height, b.finish())
    }

    pub fn iou(&self, other: &RleMask) -> Result<f64> {
        iou(self, other)
    }

    pub fn f_measure(&self, other: &RleMask) -> Result<f64> {
        f_measure(self, other)
    }

    pub fn centroid(&self) -> Result<PixelPoint> {
        centroid_in_mask(self)
    }
}

/// Iterator over foreground column segments.
pub struct ColumnSpans<'a> {
    mask: &'a RleMask,
    run: usize,
    pos: u64,
    /// Remaining part of the current foreground run: (start index, length).
    pending: Option<(u64, u64)>,
}

impl Iterator for ColumnSpans<'_> {
    type Item = (u32, u32, u32);

    fn next(&mut self) -> Option<Self::Item> {
        let h = self.mask.height as u64;
        loop {
            if let Some((start, len)) = self.pending {
                let u = start / h;
                let v0 = start % h;
                let take = len.min(h - v0);
                self.pending = if take < len {
                    Some((start + take, len - take))
                } else {
                    None
                };
                return Some((u as u32, v0 as u32, (v0 + take - 1) as u32));
            }
            let runs = &self.mask.runs;
            if self.run >= runs.len() {
                return None;
            }
            let r = runs[self.run] as u64;
            if self.run % 2 == 1 && r > 0 {
                self.pending = Some((self.pos, r));
            }
            self.pos += r;
            self.run += 1;
        }
    }
}

pub fn intersection_area(a: &RleMask, b: &RleMask) -> Result<u64> {
    a.intersection_area(b)
}

/// Intersection over union. Two empty masks score 0.
pub fn iou(a: &RleMask, b: &RleMask) -> Result<f64> {
    let inter = a.intersection_area(b)?;
    let union = a.area + b.area - inter;
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}

/// Dice / F-measure `2|a∩b| / (|a|+|b|)`. Two empty masks score 0.
pub fn f_measure(a: &RleMask, b: &RleMask) -> Result<f64> {
    let inter = a.intersection_area(b)?;
    let denom = a.area + b.area;
    Ok(if denom == 0 {
        0.0
    } else {
        2.0 * inter as f64 / denom as f64
    })
}

/// A representative foreground pixel near the mask's centre of mass.
///
/// The mean pixel coordinate is rounded half-up per axis. If that pixel is
/// background (rings, crescents), the foreground pixel nearest the unrounded
/// mean is returned, ties going to the smallest `(v, u)`.
pub fn centroid_in_mask(m: &RleMask) -> Result<PixelPoint> {
    if m.is_empty() {
        return Err(Error::EmptyMask("centroid of an empty mask"));
    }
    let n = m.area as i128;
    let (mut su, mut sv) = (0i128, 0i128);
    for (u, v0, v1) in m.column_spans() {
        let cnt = (v1 - v0 + 1) as i128;
        su += u as i128 * cnt;
        sv += (v0 as i128 + v1 as i128) * cnt / 2;
        // (v0 + v1) * cnt is always even: one of cnt, v0 + v1 is even.
    }
    let round = |s: i128| (2 * s + n).div_euclid(2 * n);
    let guess = PixelPoint::new(round(su) as i64, round(sv) as i64);
    if m.contains(guess) {
        return Ok(guess);
    }
    // Exact integer distances scaled by n^2: (u*n - su)^2 + (v*n - sv)^2.
    let mut best: Option<(i128, i64, i64)> = None;
    for (u, v0, v1) in m.column_spans() {
        let du = u as i128 * n - su;
        let fl = sv.div_euclid(n);
        let candidates = [fl, fl + 1].map(|c| c.clamp(v0 as i128, v1 as i128));
        for v in candidates {
            let dv = v * n - sv;
            let key = (du * du + dv * dv, v as i64, u as i64);
            if best.is_none_or(|b| key < b) {
                best = Some(key);
            }
        }
    }
    let (_, v, u) = best.expect("non-empty mask has spans");
    Ok(PixelPoint::new(u, v))
}

/// Splits a row-major label image into one mask per nonzero label, sorted by
/// label. Single pass over the pixels.
pub fn masks_from_labels(width: u32, height: u32, labels: &[u16]) -> Result<Vec<(u16, RleMask)>> {
    check_dims(width, height)?;
    let total = width as u64 * height as u64;
    if labels.len() as u64 != total {
        return Err(Error::Dimension(format!(
            "label buffer has {} entries, expected {width}x{height}",
            labels.len()
        )));
    }
    struct State {
        runs: Vec<u32>,
        fg_end: u64,
    }
    let mut slot_of: HashMap<u16, usize> = HashMap::new();
    let mut states: Vec<(u16, State)> = Vec::new();
    let mut last: Option<(u16, usize)> = None;
    let mut idx = 0u64;
    for u in 0..width as usize {
        for v in 0..height as usize {
            let label = labels[v * width as usize + u];
            if label != 0 {
                let slot = match last {
                    Some((l, s)) if l == label => s,
                    _ => {
                        let s = *slot_of.entry(label).or_insert_with(|| {
                            states.push((
                                label,
                                State {
                                    runs: Vec::new(),
                                    fg_end: 0,
                                },
                            ));
                            states.len() - 1
                        });
                        last = Some((label, s));
                        s
                    }
                };
                let st = &mut states[slot].1;
                if !st.runs.is_empty() && st.fg_end == idx {
                    *st.runs.last_mut().unwrap() += 1;
                } else {
                    st.runs.push((idx - st.fg_end) as u32);
                    st.runs.push(1);
                }
                st.fg_end = idx + 1;
            }
            idx += 1;
        }
    }
    let mut out: Vec<(u16, RleMask)> = states
        .into_iter()
        .map(|(label, mut st)| {
            if st.fg_end < total {
                st.runs.push((total - st.fg_end) as u32);
            }
            (label, RleMask::from_canonical(width, height, st.runs))
        })
        .collect();
    out.sort_by_key(|(l, _)| *l);
    Ok(out)
}
