//! WebAssembly bindings behind `www/index.html`.
//!
//! Three operations: densify a waypoint loop, compare the geometric tracker
//! against overlap linking on a rendered box scene, and plot VSQ^k for
//! k = 1..=15 under a chosen perturbation.

use nalgebra::Vector3;
use wasm_bindgen::prelude::*;

use vsqkit::synth::{perturb_segmentation, render_video, zigzag_scene, Perturbation, ZigzagScene};
use vsqkit::tracker::{run_video, TrackerConfig, TrackerFrame};
use vsqkit::trajectory::{apply_embodiment, densify_path, EmbodimentConfig, Waypose};
use vsqkit::tube::{link_frame_predictions, FrameSegmentation, InstanceId};
use vsqkit::vsq::{evaluate_dataset, EvalConfig};

const DEMO_FRAMES: usize = 64;
const DEMO_WIDTH: u32 = 320;
const DEMO_HEIGHT: u32 = 240;

fn js_err(e: vsqkit::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// `waypoints` holds `[x, y, yaw_deg]` triples on the floor. Returns the
/// densified path as `[x, y, z, yaw_deg]` quadruples.
pub fn densify_floor_path(waypoints: &[f64], sensor_height_m: f64) -> vsqkit::Result<Vec<f64>> {
    if waypoints.len() % 3 != 0 {
        return Err(vsqkit::Error::InvalidConfig("waypoints come in [x, y, yaw] triples".into()));
    }
    let poses: Vec<Waypose> = waypoints
        .chunks_exact(3)
        .map(|w| Waypose::looking(Vector3::new(w[0], w[1], 0.0), w[2]))
        .collect();
    let traj = apply_embodiment(&densify_path(&poses)?, &EmbodimentConfig::at_height(sensor_height_m))?;
    Ok(traj
        .iter()
        .flat_map(|p| {
            // Forward axis is the third column of the camera-to-world rotation.
            let f = p.orientation * Vector3::z();
            [p.position.x, p.position.y, p.position.z, f.y.atan2(f.x).to_degrees()]
        })
        .collect())
}

#[wasm_bindgen(js_name = densifyFloorPath)]
pub fn densify_floor_path_js(waypoints: &[f64], sensor_height_m: f64) -> Result<Vec<f64>, JsError> {
    densify_floor_path(waypoints, sensor_height_m).map_err(js_err)
}

/// Which labelling [`SceneDemo::frame_rgba`] paints.
#[wasm_bindgen]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum View {
    GroundTruth = 0,
    Tracker = 1,
    Linker = 2,
}

/// A rendered scene whose per-frame segment ids are scrambled, relabelled
/// once by the tracker and once by overlap linking.
#[wasm_bindgen]
pub struct SceneDemo {
    gt: Vec<FrameSegmentation>,
    tracked: Vec<FrameSegmentation>,
    linked: Vec<FrameSegmentation>,
    tracker_vsq: Vec<f64>,
    linker_vsq: Vec<f64>,
}

#[wasm_bindgen]
impl SceneDemo {
    /// `step_cm` is the sideways camera motion per frame.
    #[wasm_bindgen(constructor)]
    pub fn new(objects: usize, step_cm: f64, seed: u64) -> Result<SceneDemo, JsError> {
        Self::build(objects, step_cm, seed).map_err(js_err)
    }

    pub fn frames(&self) -> usize {
        self.gt.len()
    }

    pub fn width(&self) -> u32 {
        DEMO_WIDTH
    }

    pub fn height(&self) -> u32 {
        DEMO_HEIGHT
    }

    /// VSQ^1, VSQ^5, VSQ^10, VSQ^15 and VSQ for the tracker output.
    #[wasm_bindgen(js_name = trackerScores)]
    pub fn tracker_scores(&self) -> Vec<f64> {
        self.tracker_vsq.clone()
    }

    #[wasm_bindgen(js_name = linkerScores)]
    pub fn linker_scores(&self) -> Vec<f64> {
        self.linker_vsq.clone()
    }

    /// Row-major RGBA, one colour per id.
    #[wasm_bindgen(js_name = frameRgba)]
    pub fn frame_rgba(&self, t: usize, view: View) -> Vec<u8> {
        let frames = match view {
            View::GroundTruth => &self.gt,
            View::Tracker => &self.tracked,
            View::Linker => &self.linked,
        };
        paint(&frames[t.min(frames.len() - 1)])
    }

    /// VSQ^k for k = 1..=15 of the ground truth scored against a perturbed
    /// copy of itself. `mode` is `flicker`, `split` or `random-ids`.
    #[wasm_bindgen(js_name = vsqCurve)]
    pub fn vsq_curve(&self, mode: &str) -> Result<Vec<f64>, JsError> {
        let p: Perturbation = mode.parse().map_err(js_err)?;
        vsq_by_window(&self.gt, &perturb_segmentation(&self.gt, p, 0)).map_err(js_err)
    }
}

impl SceneDemo {
    pub fn build(objects: usize, step_cm: f64, seed: u64) -> vsqkit::Result<Self> {
        let spec = zigzag_scene(&ZigzagScene {
            objects,
            frames: DEMO_FRAMES,
            step_m: step_cm / 100.0,
            sweep_steps: if step_cm > 20.0 { 1 } else { 4 },
            box_size_m: if step_cm > 20.0 { 0.12 } else { 0.4 },
            width: DEMO_WIDTH,
            height: DEMO_HEIGHT,
            seed,
            ..ZigzagScene::default()
        })?;
        let rendered = render_video(&spec)?;
        let gt: Vec<FrameSegmentation> = rendered.iter().map(|f| f.segmentation.clone()).collect();
        let scrambled = perturb_segmentation(&gt, Perturbation::RandomIds, seed);
        let input: Vec<TrackerFrame> = rendered
            .into_iter()
            .zip(scrambled.iter().cloned())
            .map(|(f, segments)| TrackerFrame { segments, depth: f.depth, camera: f.camera })
            .collect();
        let tracked = run_video(&input, &TrackerConfig::default())?;
        let linked = link_frame_predictions(&scrambled)?;
        let score = |pred: &[FrameSegmentation]| -> vsqkit::Result<Vec<f64>> {
            let r = evaluate_dataset(&[(gt.clone(), pred.to_vec())], &EvalConfig::default())?;
            Ok(r.per_k.values().copied().chain([r.vsq]).collect())
        };
        Ok(Self {
            tracker_vsq: score(&tracked)?,
            linker_vsq: score(&linked)?,
            gt,
            tracked,
            linked,
        })
    }
}

/// VSQ^k for every k in 1..=15 with the default stride.
pub fn vsq_by_window(gt: &[FrameSegmentation], pred: &[FrameSegmentation]) -> vsqkit::Result<Vec<f64>> {
    let cfg = EvalConfig { k_set: (1..=15).collect(), ..EvalConfig::default() };
    let r = evaluate_dataset(&[(gt.to_vec(), pred.to_vec())], &cfg)?;
    Ok(r.per_k.into_values().collect())
}

/// Well-spread hue per id; ids are arbitrary 64-bit values.
pub fn id_colour(id: InstanceId) -> [u8; 3] {
    let mut x = id.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^= x >> 31;
    let h = (x % 360) as f64;
    let (s, v) = (0.65, 0.95);
    let c = v * s;
    let hp = h / 60.0;
    let xx = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, xx, 0.0),
        1 => (xx, c, 0.0),
        2 => (0.0, c, xx),
        3 => (0.0, xx, c),
        4 => (xx, 0.0, c),
        _ => (c, 0.0, xx),
    };
    let m = v - c;
    [r, g, b].map(|ch| ((ch + m) * 255.0).round() as u8)
}

fn paint(frame: &FrameSegmentation) -> Vec<u8> {
    let (w, h) = (frame.width() as usize, frame.height() as usize);
    let mut rgba: Vec<u8> = [24u8, 24, 28, 255].repeat(w * h);
    for s in frame.segments() {
        let [r, g, b] = id_colour(s.id);
        for p in s.mask.pixels() {
            let i = 4 * (p.v as usize * w + p.u as usize);
            rgba[i..i + 3].copy_from_slice(&[r, g, b]);
        }
    }
    rgba
}
