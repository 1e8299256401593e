//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any fails.

use std::collections::{BTreeMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vsqkit::assignment::{solve_max_assignment, ScoreMatrix};
use vsqkit::camgeo::{
    prompt_visible, project_continuous, unproject_continuous, CameraModel, DepthImage, Intrinsics, RigidTransform,
    WorldPoint,
};
use vsqkit::io::{evaluate_manifest, report_json, track_manifest, write_synth_dataset, DatasetManifest};
use vsqkit::mask::RleMask;
use vsqkit::synth::{perturb_segmentation, render_frame, render_video, zigzag_scene, Perturbation, SceneSpec, ZigzagScene};
use vsqkit::tracker::{run_video, TrackerConfig, TrackerFrame};
use vsqkit::trajectory::{densify_path, densify_segment, Waypose};
use vsqkit::tube::{build_tubes_from_ids, FrameSegmentation, Window};
use vsqkit::vsq::{evaluate_dataset, score_window, vsq_k, EvalConfig, VideoPair, VsqReport};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

struct Rendered {
    gt: Vec<FrameSegmentation>,
    frames: Vec<TrackerFrame>,
}

fn render(spec: &SceneSpec) -> Rendered {
    let frames = render_video(spec).expect("scene renders");
    Rendered {
        gt: frames.iter().map(|f| f.segmentation.clone()).collect(),
        frames: frames
            .into_iter()
            .map(|f| TrackerFrame {
                segments: f.segmentation,
                depth: f.depth,
                camera: f.camera,
            })
            .collect(),
    }
}

fn scene(objects: usize, frames: usize, seed: u64) -> SceneSpec {
    zigzag_scene(&ZigzagScene {
        objects,
        frames,
        seed,
        ..ZigzagScene::default()
    })
    .unwrap()
}

fn evaluate(videos: &[VideoPair], cfg: &EvalConfig) -> VsqReport {
    evaluate_dataset(videos, cfg).expect("evaluation succeeds")
}

fn fmt_per_k(r: &VsqReport) -> String {
    r.per_k.iter().map(|(k, v)| format!("k{k}={v:.2}")).collect::<Vec<_>>().join(" ")
}

// 1 ------------------------------------------------------------------------

fn metric_identity() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scenes: Vec<SceneSpec> = (0..3).map(|s| scene(6, 64, s)).collect();
    let path = write_synth_dataset(&scenes, dir.path(), None, 0).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let m = DatasetManifest::load(&path).map_err(|e| e.to_string())?;
    let report = evaluate_manifest(&m, &EvalConfig::default()).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    ensure!(report.vsq == 100.0, "VSQ = {} on identical input", report.vsq);
    ensure!(report.per_k.values().all(|&v| v == 100.0), "per-k {}", fmt_per_k(&report));
    ensure!(secs < 10.0, "took {secs:.2} s");
    Ok(format!("VSQ=100.00 on 3 videos x 64 frames x 6 objects from disk in {secs:.2} s"))
}

// 2 ------------------------------------------------------------------------

const SIDE: u32 = 16;

fn random_rect(rng: &mut ChaCha8Rng) -> RleMask {
    let u0 = rng.random_range(0..SIDE as i64);
    let v0 = rng.random_range(0..SIDE as i64);
    let u1 = rng.random_range(u0 + 1..=SIDE as i64);
    let v1 = rng.random_range(v0 + 1..=SIDE as i64);
    RleMask::rect(SIDE, SIDE, u0, v0, u1, v1).unwrap()
}

fn jitter(m: &RleMask, rng: &mut ChaCha8Rng) -> RleMask {
    let d = m.decode();
    let (du, dv) = (rng.random_range(-2i64..=2), rng.random_range(-2i64..=2));
    RleMask::from_fn(SIDE, SIDE, |u, v| {
        let (su, sv) = (u as i64 - du, v as i64 - dv);
        let inside = (0..SIDE as i64).contains(&su) && (0..SIDE as i64).contains(&sv);
        let keep = inside && d.get(su as u32, sv as u32);
        keep ^ (rng.random_range(0..25) == 0)
    })
    .unwrap()
}

/// Dense voxels of every id present in the window.
fn voxels(frames: &[FrameSegmentation]) -> BTreeMap<u64, Vec<bool>> {
    let n = (SIDE * SIDE) as usize;
    let mut out: BTreeMap<u64, Vec<bool>> = BTreeMap::new();
    for (t, f) in frames.iter().enumerate() {
        for s in f.segments() {
            let d = s.mask.decode();
            for v in 0..SIDE {
                for u in 0..SIDE {
                    if d.get(u, v) {
                        let vox = out.entry(s.id).or_insert_with(|| vec![false; n * frames.len()]);
                        vox[t * n + (v * SIDE + u) as usize] = true;
                    }
                }
            }
        }
    }
    out
}

/// Exhaustive matching over every injective partial assignment; returns the
/// VSQ of each assignment that reaches the best total F-measure.
fn brute_force_vsq(gt: &[Vec<bool>], pred: &[Vec<bool>]) -> Vec<f64> {
    let stats = |a: &Vec<bool>, b: &Vec<bool>| {
        let (mut i, mut na, mut nb) = (0u64, 0u64, 0u64);
        for (&x, &y) in a.iter().zip(b) {
            i += (x && y) as u64;
            na += x as u64;
            nb += y as u64;
        }
        let f = 2.0 * i as f64 / (na + nb) as f64;
        let iou = i as f64 / (na + nb - i) as f64;
        (f, iou)
    };
    let table: Vec<Vec<(f64, f64)>> = gt.iter().map(|g| pred.iter().map(|p| stats(g, p)).collect()).collect();

    let mut all = Vec::new();
    fn walk(
        i: usize,
        table: &[Vec<(f64, f64)>],
        used: &mut Vec<bool>,
        f: f64,
        iou: f64,
        tp: usize,
        all: &mut Vec<(f64, f64, usize)>,
    ) {
        if i == table.len() {
            all.push((f, iou, tp));
            return;
        }
        walk(i + 1, table, used, f, iou, tp, all);
        for j in 0..used.len() {
            let (fj, ij) = table[i][j];
            if !used[j] && fj > 0.0 {
                used[j] = true;
                walk(i + 1, table, used, f + fj, iou + ij, tp + 1, all);
                used[j] = false;
            }
        }
    }
    walk(0, &table, &mut vec![false; pred.len()], 0.0, 0.0, 0, &mut all);
    let best = all.iter().map(|a| a.0).fold(f64::NEG_INFINITY, f64::max);
    all.into_iter()
        .filter(|a| a.0 >= best - 1e-12)
        .map(|(_, iou, tp)| {
            let fp = pred.len() - tp;
            let fn_ = gt.len() - tp;
            let denom = tp as f64 + 0.5 * fp as f64 + 0.5 * fn_ as f64;
            if denom == 0.0 {
                100.0
            } else {
                100.0 * iou / denom
            }
        })
        .collect()
}

fn window_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut ties = 0;
    for case in 0..500 {
        let k = rng.random_range(1..=5usize);
        let n_gt = rng.random_range(0..=6u64);
        let n_pred = rng.random_range(0..=6u64);
        let gt_rects: Vec<RleMask> = (0..n_gt).map(|_| random_rect(&mut rng)).collect();
        let mut gt = Vec::with_capacity(k);
        let mut pred = Vec::with_capacity(k);
        let sources: Vec<Option<usize>> = (0..n_pred)
            .map(|_| (n_gt > 0 && rng.random_bool(0.7)).then(|| rng.random_range(0..n_gt as usize)))
            .collect();
        for _ in 0..k {
            let mut g = FrameSegmentation::new(SIDE, SIDE).unwrap();
            for (i, r) in gt_rects.iter().enumerate() {
                if rng.random_bool(0.85) {
                    g.push(i as u64 + 1, jitter(r, &mut rng)).unwrap();
                }
            }
            let mut p = FrameSegmentation::new(SIDE, SIDE).unwrap();
            for (j, src) in sources.iter().enumerate() {
                if !rng.random_bool(0.85) {
                    continue;
                }
                let m = match src.and_then(|s| g.get(s as u64 + 1)) {
                    Some(m) => jitter(m, &mut rng),
                    None => random_rect(&mut rng),
                };
                p.push(j as u64 + 1, m).unwrap();
            }
            gt.push(g);
            pred.push(p);
        }
        let w = Window::new(0, k).unwrap();
        let got = vsq_k(
            &score_window(&build_tubes_from_ids(&gt, w).unwrap(), &build_tubes_from_ids(&pred, w).unwrap()).unwrap(),
        );
        let gv: Vec<Vec<bool>> = voxels(&gt).into_values().collect();
        let pv: Vec<Vec<bool>> = voxels(&pred).into_values().collect();
        let expected = brute_force_vsq(&gv, &pv);
        let distinct: HashSet<u64> = expected.iter().map(|x| (x * 1e6).round() as u64).collect();
        if distinct.len() > 1 {
            ties += 1;
        }
        let err = expected.iter().map(|e| (e - got).abs()).fold(f64::INFINITY, f64::min);
        ensure!(err <= 1e-9, "case {case}: got {got}, brute force {expected:?}");
        worst = worst.max(err);
    }
    Ok(format!("500 windows, max |diff| = {worst:.1e} ({ties} with tied optimal matchings)"))
}

// 3 ------------------------------------------------------------------------

fn hungarian_oracle() -> Outcome {
    fn best(m: &ScoreMatrix, r: usize, used: &mut Vec<bool>) -> f64 {
        if r == m.rows() {
            return 0.0;
        }
        let mut b = best(m, r + 1, used);
        for c in 0..m.cols() {
            if !used[c] {
                used[c] = true;
                b = b.max(m.get(r, c) + best(m, r + 1, used));
                used[c] = false;
            }
        }
        b
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..1000 {
        let (r, c) = (rng.random_range(1..=6), rng.random_range(1..=6));
        // Multiples of 1/1024 keep every sum exact.
        let m = ScoreMatrix::from_fn(r, c, |_, _| {
            if rng.random_bool(0.2) {
                0.0
            } else {
                rng.random_range(0..=1024u32) as f64 / 1024.0
            }
        })
        .unwrap();
        let got = solve_max_assignment(&m);
        let expected = best(&m, 0, &mut vec![false; c]);
        ensure!(got.total == expected, "case {case}: {} vs exhaustive {expected}", got.total);
        let sum: f64 = got.pairs.iter().map(|&(i, j)| m.get(i, j)).sum();
        ensure!(sum == got.total, "case {case}: pairs sum to {sum}, total {}", got.total);
        ensure!(got.pairs.iter().all(|&(i, j)| m.get(i, j) > 0.0), "case {case}: zero pair kept");
    }
    Ok("1000 matrices up to 6x6, totals identical to exhaustive search".into())
}

// 4, 5 ---------------------------------------------------------------------

/// Three 64-frame videos; the midpoint 32 falls inside windows of every
/// length above 1.
fn perturbation_videos() -> Vec<Vec<FrameSegmentation>> {
    (10..13).map(|s| render(&scene(6, 64, s)).gt).collect()
}

fn perturbed(videos: &[Vec<FrameSegmentation>], p: Perturbation) -> Vec<VideoPair> {
    videos.iter().map(|gt| (gt.clone(), perturb_segmentation(gt, p, 0))).collect()
}

fn split_sensitivity(videos: &[Vec<FrameSegmentation>]) -> Outcome {
    let cfg = EvalConfig::default();
    let clean: Vec<VideoPair> = videos.iter().map(|g| (g.clone(), g.clone())).collect();
    let base = evaluate(&clean, &cfg);
    let split = evaluate(&perturbed(videos, Perturbation::Split), &cfg);
    ensure!((split.per_k[&1] - base.per_k[&1]).abs() <= 1e-9, "VSQ1 moved: {} -> {}", base.per_k[&1], split.per_k[&1]);
    for k in [5, 10, 15] {
        ensure!(split.per_k[&k] < base.per_k[&k], "VSQ{k} not reduced: {} -> {}", base.per_k[&k], split.per_k[&k]);
    }
    Ok(format!("clean {} | split {}", fmt_per_k(&base), fmt_per_k(&split)))
}

fn flicker_sensitivity(videos: &[Vec<FrameSegmentation>]) -> Outcome {
    let cfg = EvalConfig::default();
    let clean: Vec<VideoPair> = videos.iter().map(|g| (g.clone(), g.clone())).collect();
    let base = evaluate(&clean, &cfg);
    let flick = evaluate(&perturbed(videos, Perturbation::Flicker), &cfg);
    let drop1 = base.per_k[&1] - flick.per_k[&1];
    let drop15 = base.per_k[&15] - flick.per_k[&15];
    ensure!(drop15 > drop1, "drop at k=15 ({drop15:.2}) not above drop at k=1 ({drop1:.2})");
    Ok(format!("drop k1={drop1:.2} k15={drop15:.2} ({})", fmt_per_k(&flick)))
}

// 6 ------------------------------------------------------------------------

fn random_id_input(r: &Rendered, seed: u64) -> Vec<TrackerFrame> {
    let gt: Vec<FrameSegmentation> = r.frames.iter().map(|f| f.segments.clone()).collect();
    perturb_segmentation(&gt, Perturbation::RandomIds, seed)
        .into_iter()
        .zip(&r.frames)
        .map(|(segments, f)| TrackerFrame {
            segments,
            depth: f.depth.clone(),
            camera: f.camera.clone(),
        })
        .collect()
}

fn tracker_beats_overlap_linking() -> Outcome {
    let cfg = EvalConfig::default();

    // Slow sweep: 5 cm per frame.
    let slow = render(&scene(8, 64, 21));
    let steps = slow.frames.windows(2).map(|w| (w[1].camera.center() - w[0].camera.center()).norm());
    ensure!(steps.clone().all(|d| d >= 0.05 - 1e-12), "camera step below 5 cm");
    let tracked = run_video(&random_id_input(&slow, 1), &TrackerConfig::default()).map_err(|e| e.to_string())?;
    let tracked_report = evaluate(&[(slow.gt.clone(), tracked)], &cfg);
    ensure!(tracked_report.vsq == 100.0, "tracker VSQ {} at 5 cm/frame ({})", tracked_report.vsq, fmt_per_k(&tracked_report));

    // Fast sweep: 0.5 m per frame, small boxes so no mask overlaps itself
    // between consecutive frames.
    let fast = render(
        &zigzag_scene(&ZigzagScene {
            objects: 6,
            frames: 64,
            step_m: 0.5,
            sweep_steps: 1,
            box_size_m: 0.08,
            width: 640,
            height: 480,
            seed: 22,
            ..ZigzagScene::default()
        })
        .unwrap(),
    );
    for (t, w) in fast.gt.windows(2).enumerate() {
        for s in w[0].segments() {
            if let Some(next) = w[1].get(s.id) {
                ensure!(s.mask.intersection_area(next).unwrap() == 0, "object {} overlaps itself at frame {t}", s.id);
            }
        }
    }
    let input = random_id_input(&fast, 2);
    let raw: Vec<FrameSegmentation> = input.iter().map(|f| f.segments.clone()).collect();
    let linked = evaluate(&[(fast.gt.clone(), raw)], &EvalConfig { link_predictions: true, ..cfg.clone() });
    for k in [5, 10, 15] {
        ensure!(linked.per_k[&k] < 50.0, "overlap linking VSQ{k} = {}", linked.per_k[&k]);
    }
    let tracked_fast = run_video(&input, &TrackerConfig::default()).map_err(|e| e.to_string())?;
    let fast_report = evaluate(&[(fast.gt.clone(), tracked_fast)], &cfg);
    ensure!(fast_report.vsq > linked.vsq, "tracker {} not above linker {}", fast_report.vsq, linked.vsq);
    Ok(format!(
        "5 cm/frame tracker VSQ={:.2}; 0.5 m/frame linker {} vs tracker VSQ={:.2}",
        tracked_report.vsq,
        fmt_per_k(&linked),
        fast_report.vsq
    ))
}

// 7 ------------------------------------------------------------------------

fn random_unit_quaternion(rng: &mut ChaCha8Rng) -> UnitQuaternion<f64> {
    loop {
        let q = Quaternion::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = q.norm();
        if n > 0.1 && n <= 1.0 {
            return UnitQuaternion::from_quaternion(q);
        }
    }
}

fn geometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let k = Intrinsics::new(
            rng.random_range(200.0..900.0),
            rng.random_range(200.0..900.0),
            rng.random_range(100.0..540.0),
            rng.random_range(100.0..380.0),
        )
        .unwrap();
        let t = Vector3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
        let ext = RigidTransform::from_quaternion(&random_unit_quaternion(&mut rng), t);
        let cam = CameraModel::new(k, ext, 640, 480).unwrap();
        let z = rng.random_range(0.1..30.0);
        let q = WorldPoint::new(z * rng.random_range(-0.6..0.6), z * rng.random_range(-0.5..0.5), z);
        let p = cam.extrinsics.inverse().apply(&q);
        let (x, y, d) = project_continuous(&p, &cam).ok_or("point behind camera")?;
        let back = unproject_continuous(x, y, d, &cam).map_err(|e| e.to_string())?;
        worst = worst.max((back - p).norm());
    }
    ensure!(worst < 1e-6, "round trip error {worst:e} m");

    let cam = CameraModel::new(Intrinsics::new(100.0, 100.0, 50.0, 50.0).unwrap(), RigidTransform::identity(), 100, 100).unwrap();
    let mut depth = DepthImage::filled(100, 100, 2.0).unwrap();
    depth.set(50, 50, DepthImage::NO_READING);
    let tol = 0.05;
    let cases = [
        (WorldPoint::new(0.2, 0.0, 1.0), true, "in front of the surface"),
        (WorldPoint::new(0.4, 0.0, 2.04), true, "within tolerance behind the surface"),
        (WorldPoint::new(0.4, 0.0, 2.2), false, "occluded by the surface"),
        (WorldPoint::new(0.0, 0.0, 3.0), true, "behind a pixel with no reading"),
        (WorldPoint::new(5.0, 0.0, 2.0), false, "outside the image"),
        (WorldPoint::new(0.0, 0.0, -1.0), false, "behind the camera"),
    ];
    for (p, expected, what) in cases {
        let got = prompt_visible(&p, &cam, &depth, tol).map_err(|e| e.to_string())?;
        ensure!(got == expected, "point {what}: visible = {got}");
    }
    Ok(format!("10^4 random poses, max round-trip error {worst:.1e} m; {} visibility cases", cases.len()))
}

// 8 ------------------------------------------------------------------------

/// Largest translation and rotation (degrees) between consecutive poses,
/// measured from the raw quaternion dot product.
fn steps(path: &[Waypose]) -> (f64, f64) {
    path.windows(2).fold((0.0f64, 0.0f64), |(t, r), w| {
        let dot = w[0].orientation.coords.dot(&w[1].orientation.coords).abs().min(1.0);
        (
            t.max((w[1].position - w[0].position).norm()),
            r.max((2.0 * dot.acos()).to_degrees()),
        )
    })
}

fn trajectory_bounds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut worst_t, mut worst_r) = (0.0f64, 0.0f64);
    for case in 0..1000 {
        let a = Waypose {
            position: Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(0.0..2.0)),
            orientation: random_unit_quaternion(&mut rng),
        };
        let b = Waypose {
            position: Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(0.0..2.0)),
            orientation: random_unit_quaternion(&mut rng),
        };
        let path = densify_segment(&a, &b).map_err(|e| e.to_string())?;
        let (dt, dr) = steps(&path);
        ensure!(dt <= 0.05 + 1e-12, "case {case}: step {dt} m");
        ensure!(dr <= 0.5 + 1e-9, "case {case}: step {dr} deg");
        ensure!(path[0] == a && path[path.len() - 1] == b, "case {case}: endpoints moved");
        worst_t = worst_t.max(dt);
        worst_r = worst_r.max(dr);
    }
    let origin = Waypose::looking(Vector3::zeros(), 0.0);
    let meter = densify_path(&[origin, Waypose::looking(Vector3::new(1.0, 0.0, 0.0), 0.0)]).map_err(|e| e.to_string())?;
    let turn = densify_path(&[origin, Waypose::looking(Vector3::zeros(), 10.0)]).map_err(|e| e.to_string())?;
    ensure!(meter.len() - 1 == 20, "1 m path has {} steps", meter.len() - 1);
    ensure!(turn.len() - 1 == 20, "10 degree turn has {} steps", turn.len() - 1);
    Ok(format!("1000 pairs, max step {worst_t:.4} m / {worst_r:.4} deg; 1 m and 10 deg give 20 steps"))
}

// 9 ------------------------------------------------------------------------

fn performance() -> Outcome {
    use rayon::prelude::*;
    let start = Instant::now();
    let order = [None, Some(Perturbation::Flicker), Some(Perturbation::Split), Some(Perturbation::RandomIds)];
    let videos: Vec<VideoPair> = (0..100u64)
        .map(|i| {
            let spec = zigzag_scene(&ZigzagScene {
                objects: 20,
                frames: 300,
                width: 640,
                height: 480,
                seed: 900 + i,
                ..ZigzagScene::default()
            })
            .unwrap();
            // Frame by frame: only the masks are kept.
            let gt: Vec<FrameSegmentation> = (0..spec.frames())
                .into_par_iter()
                .map(|t| render_frame(&spec, t).unwrap().segmentation)
                .collect();
            let pred = match order[i as usize % order.len()] {
                Some(p) => perturb_segmentation(&gt, p, i),
                None => gt.clone(),
            };
            (gt, pred)
        })
        .collect();
    let render_secs = start.elapsed().as_secs_f64();
    ensure!(videos.iter().all(|(g, _)| g.iter().all(|f| f.len() == 20)), "scene lost objects");
    let start = Instant::now();
    let report = evaluate(&videos, &EvalConfig::default());
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 300.0, "evaluation took {secs:.1} s");
    Ok(format!(
        "100 videos x 300 frames x 20 objects at 640x480 scored in {secs:.1} s on {} thread(s) (VSQ {:.2}; rendering {render_secs:.1} s)",
        rayon::current_num_threads(),
        report.vsq
    ))
}

// 10 -----------------------------------------------------------------------

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scenes: Vec<SceneSpec> = (30..34).map(|s| scene(6, 40, s)).collect();
    let path = write_synth_dataset(&scenes, &dir.path().join("in"), Some(Perturbation::RandomIds), 4)
        .map_err(|e| e.to_string())?;
    let m = DatasetManifest::load(&path).map_err(|e| e.to_string())?;
    let mut reports = Vec::new();
    let mut tracks = Vec::new();
    for (run, threads) in [1, 4, 1, 4].into_iter().enumerate() {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
        let out = dir.path().join(format!("track{run}"));
        let (report, tracked) = pool.install(|| -> Result<_, String> {
            let raw = report_json(&evaluate_manifest(&m, &EvalConfig::default()).map_err(|e| e.to_string())?);
            let tp = track_manifest(&m, &TrackerConfig::default(), &out).map_err(|e| e.to_string())?;
            let tm = DatasetManifest::load(&tp).map_err(|e| e.to_string())?;
            let tracked_report = report_json(&evaluate_manifest(&tm, &EvalConfig::default()).map_err(|e| e.to_string())?);
            Ok((raw + &tracked_report, tp))
        })?;
        let mut bytes = Vec::new();
        for v in &m.videos {
            bytes.push(std::fs::read(out.join(format!("{}.json", v.id))).map_err(|e| e.to_string())?);
        }
        bytes.push(std::fs::read(tracked).map_err(|e| e.to_string())?);
        reports.push(report);
        tracks.push(bytes);
    }
    ensure!(reports.iter().all(|r| *r == reports[0]), "evaluation reports differ across runs");
    ensure!(tracks.iter().all(|t| *t == tracks[0]), "tracker outputs differ across runs");
    Ok("evaluate and track byte-identical over 4 runs alternating 1 and 4 threads".into())
}

fn main() {
    let videos = perturbation_videos();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("metric identity", Box::new(metric_identity)),
        ("window scoring oracle", Box::new(window_oracle)),
        ("assignment oracle", Box::new(hungarian_oracle)),
        ("split sensitivity", Box::new(|| split_sensitivity(&videos))),
        ("flicker sensitivity", Box::new(|| flicker_sensitivity(&videos))),
        ("tracker vs overlap linking", Box::new(tracker_beats_overlap_linking)),
        ("geometry", Box::new(geometry)),
        ("trajectory bounds", Box::new(trajectory_bounds)),
        ("performance", Box::new(performance)),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{:>2}] {name} ({secs:.1} s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL [{:>2}] {name} ({secs:.1} s): {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
