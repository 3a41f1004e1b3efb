//! End-to-end acceptance checks. Runs without the libtest harness so the
//! timing criteria are not disturbed by concurrently running tests; prints
//! one PASS/FAIL line per criterion and exits non-zero if any failed.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::*;
use lidar_change::alignment::{align_missions, icp_coarse_to_fine, MissionTrajectory};
use lidar_change::descriptors::{describe, DescribeParams, DescribedObject};
use lidar_change::geometry::{fit_rigid, voxel_downsample, Point3, PointCloud, RigidTransform};
use lidar_change::grouping::{
    assign_correspondences, cluster_confidence, kmeans, select_k_elbow, ChangeKind, Weights,
};
use lidar_change::octree::{
    build_octree, diff_octrees, trace_segment, ChangeSet, KeyFrame, OccupancyOctree, OctreeParams,
};
use lidar_change::pipeline::{
    detect, evaluate_detection, simulate_dataset, Dataset, Detection, PipelineConfig, SimulationConfig,
};
use lidar_change::scenegen::examples::{ellipse_route_phase, office_changes, office_overlap_changes, office_scene};
use lidar_change::scenegen::OdometryNoise;
use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

struct Scene {
    data: Dataset,
    det: Detection,
    seconds: f64,
}

fn run_scene(overlap: bool) -> Scene {
    let start = Instant::now();
    let script = if overlap { office_overlap_changes() } else { office_changes() };
    let data = simulate_dataset(&office_scene(), &script, &SimulationConfig::default()).expect("simulation");
    let det = detect(&data.a, &data.b, &PipelineConfig::default()).expect("detection");
    Scene {
        data,
        det,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn recall_of(s: &Scene) -> Result<(f64, f64, f64), String> {
    let m = evaluate_detection(&s.det, &s.data.truth, &PipelineConfig::default().eval).map_err(|e| e.to_string())?;
    match (m.precision.value(), m.recall.value(), m.specificity.value()) {
        (Some(p), Some(r), Some(sp)) => Ok((p, r, sp)),
        _ => Err(format!("undefined metric in {:?}", m.counts)),
    }
}

fn bundled_scene(clean: &Scene) -> Outcome {
    let (p, r, s) = recall_of(clean)?;
    let detail = format!(
        "precision {p:.3} recall {r:.3} specificity {s:.3} in {:.1} s",
        clean.seconds
    );
    ensure!(p >= 0.80 && r >= 0.65 && s >= 0.98, "{detail}");
    ensure!(clean.seconds < 300.0, "{detail}");
    Ok(detail)
}

fn overlap_degrades(clean: &Scene, overlap: &Scene) -> Outcome {
    let (_, rc, _) = recall_of(clean)?;
    let (_, ro, _) = recall_of(overlap)?;
    let detail = format!("recall {ro:.3} with overlapping moves vs {rc:.3}");
    ensure!(ro < rc - 0.1, "{detail}");
    Ok(detail)
}

fn identity_run(clean: &Scene) -> Outcome {
    let copy = clean.data.a.clone();
    let det = detect(&clean.data.a, &copy, &PipelineConfig::default()).map_err(|e| e.to_string())?;
    let detail = format!(
        "{} changed voxels, {} correspondences",
        det.changes.len(),
        det.assignment.correspondences.len()
    );
    ensure!(det.changes.is_empty() && det.assignment.correspondences.is_empty(), "{detail}");
    Ok(detail)
}

fn descriptor_invariance() -> Outcome {
    let params = DescribeParams::default();
    let suite = object_suite(2024);
    let mut rng = rng(99);
    let (mut rigid, mut deletion) = (0.0f64, 0.0f64);
    for seg in &suite {
        let base = describe(seg, &params).map_err(|e| e.to_string())?;
        for _ in 0..100 {
            let t = random_rigid(&mut rng, 50.0);
            rigid = rigid.max(base.distance(&describe(&transformed(seg, &t), &params).map_err(|e| e.to_string())?));
        }
        for _ in 0..10 {
            let mut idx: Vec<usize> = (0..seg.len()).collect();
            idx.shuffle(&mut rng);
            idx.truncate(seg.len() * 4 / 5);
            idx.sort_unstable();
            let kept = lidar_change::segmentation::Segment::new(seg.id, seg.mission, seg.cloud.select(&idx))
                .map_err(|e| e.to_string())?;
            deletion = deletion.max(base.distance(&describe(&kept, &params).map_err(|e| e.to_string())?));
        }
    }
    let detail = format!("max deviation {rigid:.2e} under rigid motion, {deletion:.3} after 20% deletion");
    ensure!(rigid < 1e-6 && deletion < 0.15, "{detail}");
    Ok(detail)
}

fn confidence_oracle() -> Outcome {
    let mut worst = 0.0f64;
    let mut checked = 0;
    for trial in 0..50u64 {
        let mut r = rng(500 + trial);
        let truth_k = r.random_range(2..7);
        let (per, spread) = (r.random_range(4..12), r.random_range(0.3..3.0));
        let (rows, _) = blobs(&mut r, truth_k, per, 16, spread);
        let k = r.random_range(2..8).min(rows.len());
        let c = kmeans(&rows, k, trial).map_err(|e| e.to_string())?;
        let conf = cluster_confidence(&rows, &c);

        let mut mean = vec![0.0; k];
        let mut live = Vec::new();
        for j in 0..k {
            let members: Vec<&Vec<f64>> = rows.iter().zip(&c.assignments).filter(|(_, &a)| a == j).map(|(v, _)| v).collect();
            if members.is_empty() {
                continue;
            }
            let centroid: Vec<f64> = (0..16).map(|d| members.iter().map(|v| v[d]).sum::<f64>() / members.len() as f64).collect();
            for d in 0..16 {
                worst = worst.max((centroid[d] - c.centroids[j][d]).abs());
            }
            let dists: Vec<f64> = members
                .iter()
                .map(|v| v.iter().zip(&centroid).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                .collect();
            mean[j] = dists.iter().sum::<f64>() / dists.len() as f64;
            worst = worst.max((mean[j] - conf.mean_distance[j]).abs());
            live.push(j);
        }
        let lo = live.iter().map(|&j| mean[j]).fold(f64::INFINITY, f64::min);
        let hi = live.iter().map(|&j| mean[j]).fold(f64::NEG_INFINITY, f64::max);
        ensure!(live.len() >= 2 && hi > lo, "trial {trial}: clustering collapsed");
        for &j in &live {
            worst = worst.max(((mean[j] - lo) / (hi - lo) - conf.confidence[j]).abs());
        }
        let got: Vec<f64> = live.iter().map(|&j| conf.confidence[j]).collect();
        ensure!(
            got.iter().copied().fold(f64::INFINITY, f64::min) == 0.0 && got.iter().copied().fold(f64::NEG_INFINITY, f64::max) == 1.0,
            "trial {trial}: confidences {got:?} do not span [0, 1]"
        );
        checked += 1;
    }
    let detail = format!("{checked} clusterings, largest deviation {worst:.2e}");
    ensure!(worst < 1e-9, "{detail}");
    Ok(detail)
}

/// Independent min-max weighted distance over a list of raw pairs.
fn oracle_weighted(raw: &[(f64, f64)], w: &Weights) -> Vec<f64> {
    let span = |f: &dyn Fn(&(f64, f64)) -> f64| {
        let lo = raw.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = raw.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let (pl, ph) = span(&|r| r.0);
    let (dl, dh) = span(&|r| r.1);
    raw.iter()
        .map(|r| {
            let p = if ph > pl { (r.0 - pl) / (ph - pl) } else { 0.0 };
            let d = if dh > dl { (r.1 - dl) / (dh - dl) } else { 0.0 };
            w.alpha * p + w.beta * d
        })
        .collect()
}

fn raw_pair(x: &DescribedObject, y: &DescribedObject) -> (f64, f64) {
    ((x.segment.centroid - y.segment.centroid).norm(), x.descriptor.distance(&y.descriptor))
}

/// Every way of matching all of `rows` into distinct `cols`.
fn enumerate(rows: &[usize], cols: &[usize], used: &mut Vec<bool>, cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
    if cur.len() == rows.len() {
        out.push(cur.clone());
        return;
    }
    let r = rows[cur.len()];
    for (k, &c) in cols.iter().enumerate() {
        if !used[k] {
            used[k] = true;
            cur.push((r, c));
            enumerate(rows, cols, used, cur, out);
            cur.pop();
            used[k] = false;
        }
    }
}

struct OracleClass {
    pairs: BTreeSet<(usize, usize)>,
    tied: bool,
    odd: Option<(bool, usize)>,
}

fn oracle_class(a: &[&DescribedObject], b: &[&DescribedObject], w: &Weights) -> OracleClass {
    let n = a.len() + b.len();
    let odd = (n % 2 == 1).then(|| {
        let all: Vec<&DescribedObject> = a.iter().chain(b).copied().collect();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let raw: Vec<(f64, f64)> = pairs.iter().map(|&(i, j)| raw_pair(all[i], all[j])).collect();
        let wv = oracle_weighted(&raw, w);
        let mut score = vec![0.0; n];
        for (&(i, j), v) in pairs.iter().zip(&wv) {
            score[i] += v;
            score[j] += v;
        }
        let side: Vec<usize> = if a.len() > b.len() { (0..a.len()).collect() } else { (a.len()..n).collect() };
        let best = side.into_iter().fold(None, |acc: Option<usize>, i| match acc {
            Some(j) if score[j] >= score[i] => Some(j),
            _ => Some(i),
        });
        let i = best.expect("odd class has a larger side");
        if i < a.len() { (true, i) } else { (false, i - a.len()) }
    });
    let raw: Vec<(f64, f64)> = a.iter().flat_map(|x| b.iter().map(move |y| raw_pair(x, y))).collect();
    let wv = oracle_weighted(&raw, w);
    let cost = |i: usize, j: usize| wv[i * b.len() + j];
    let live_a: Vec<usize> = (0..a.len()).filter(|&i| odd != Some((true, i))).collect();
    let live_b: Vec<usize> = (0..b.len()).filter(|&j| odd != Some((false, j))).collect();
    let mut all = Vec::new();
    if live_a.len() <= live_b.len() {
        enumerate(&live_a, &live_b, &mut vec![false; live_b.len()], &mut Vec::new(), &mut all);
    } else {
        let mut flipped = Vec::new();
        enumerate(&live_b, &live_a, &mut vec![false; live_a.len()], &mut Vec::new(), &mut flipped);
        all = flipped.into_iter().map(|m| m.into_iter().map(|(j, i)| (i, j)).collect()).collect();
    }
    let mut scored: Vec<(f64, BTreeSet<(usize, usize)>)> =
        all.into_iter().map(|m| (m.iter().map(|&(i, j)| cost(i, j)).sum(), m.into_iter().collect())).collect();
    scored.sort_by(|x, y| x.0.total_cmp(&y.0));
    let tied = scored.len() > 1 && scored[1].0 - scored[0].0 < 1e-12;
    OracleClass {
        pairs: scored.into_iter().next().map(|s| s.1).unwrap_or_default(),
        tied,
        odd,
    }
}

fn correspondence_oracle() -> Outcome {
    let w = Weights::default();
    let (mut classes_checked, mut odd_classes, mut single_leftover) = (0, 0, 0);
    for trial in 0..100u64 {
        let mut r = rng(9000 + trial);
        let k = r.random_range(1..5);
        let mut a = Vec::new();
        let mut b = Vec::new();
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        let balanced = trial % 2 == 0;
        for c in 0..k {
            let (na, nb) = loop {
                let na = r.random_range(0..5usize);
                let nb = if balanced { (na + r.random_range(0..3usize)).saturating_sub(1).min(4) } else { r.random_range(0..5usize) };
                if na + nb > 0 {
                    break (na, nb);
                }
            };
            for _ in 0..na {
                a.push(random_object(&mut r, a.len() as u64, 1, 6.0));
                ca.push(c);
            }
            for _ in 0..nb {
                b.push(random_object(&mut r, 1000 + b.len() as u64, 2, 6.0));
                cb.push(c);
            }
        }
        let classes: Vec<usize> = ca.iter().chain(&cb).copied().collect();
        let got = assign_correspondences(&a, &b, &classes, &w).map_err(|e| e.to_string())?;
        for c in 0..k {
            let ia: Vec<usize> = (0..a.len()).filter(|&i| ca[i] == c).collect();
            let ib: Vec<usize> = (0..b.len()).filter(|&j| cb[j] == c).collect();
            let ra: Vec<&DescribedObject> = ia.iter().map(|&i| &a[i]).collect();
            let rb: Vec<&DescribedObject> = ib.iter().map(|&j| &b[j]).collect();
            let want = oracle_class(&ra, &rb, &w);
            let pairs: BTreeSet<(usize, usize)> = got
                .correspondences
                .iter()
                .filter(|x| x.class == c && x.kind == ChangeKind::Moved)
                .map(|x| {
                    let i = ia.iter().position(|&i| a[i].segment.id == x.object_a.unwrap()).unwrap();
                    let j = ib.iter().position(|&j| b[j].segment.id == x.object_b.unwrap()).unwrap();
                    (i, j)
                })
                .collect();
            ensure!(
                want.tied || pairs == want.pairs,
                "trial {trial} class {c}: got {pairs:?}, enumeration gives {:?}",
                want.pairs
            );
            let unmatched = ia.len() + ib.len() - 2 * pairs.len();
            if let Some((side_a, i)) = want.odd {
                odd_classes += 1;
                let left_out = if side_a {
                    pairs.iter().all(|p| p.0 != i)
                } else {
                    pairs.iter().all(|p| p.1 != i)
                };
                ensure!(left_out, "trial {trial} class {c}: odd instance was paired");
                ensure!(
                    unmatched == ia.len().abs_diff(ib.len()) && unmatched >= 1,
                    "trial {trial} class {c}: {unmatched} unmatched of {}+{}",
                    ia.len(),
                    ib.len()
                );
                if ia.len().abs_diff(ib.len()) == 1 {
                    ensure!(unmatched == 1, "trial {trial} class {c}: {unmatched} unmatched");
                    single_leftover += 1;
                }
            }
            classes_checked += 1;
        }
    }
    Ok(format!(
        "{classes_checked} classes match enumeration; {odd_classes} odd classes, {single_leftover} with sides differing by one leave exactly one unmatched"
    ))
}

fn elbow_recovery() -> Outcome {
    let mut hits = 0;
    for seed in 0..100u64 {
        let mut r = rng(31_000 + seed);
        let (rows, _) = blobs(&mut r, 4, 10, 16, 0.5);
        if select_k_elbow(&rows, 10, seed).map_err(|e| e.to_string())?.k == 4 {
            hits += 1;
        }
    }
    let detail = format!("K = 4 in {hits} of 100 trials");
    ensure!(hits >= 95, "{detail}");
    Ok(detail)
}

fn registration(clean: &Scene) -> Outcome {
    let mut errors = BTreeMap::new();
    for c in &clean.det.assignment.correspondences {
        let (Some(id), Some(t)) = (c.object_a, c.transform) else { continue };
        let seg = clean.det.segments.iter().find(|s| s.id == id).ok_or("missing segment")?;
        let Some(label) = seg.majority_label() else { continue };
        if let Some(truth) = clean.data.truth.moved.get(&label) {
            let (dr, dt) = t.error_to(truth);
            errors.insert(label, (dr.to_degrees(), dt));
        }
    }
    let mut detail: Vec<String> = errors.iter().map(|(l, (r, t))| format!("object {l}: {r:.2} deg {:.1} cm", t * 100.0)).collect();

    let mut r = rng(77);
    let mut exact = 0.0f64;
    for _ in 0..100 {
        let src: Vec<Point3> = (0..r.random_range(3..60)).map(|_| random_point(&mut r, 3.0)).collect();
        let truth = random_rigid(&mut r, 10.0);
        let dst: Vec<Point3> = src.iter().map(|p| truth.apply(p)).collect();
        let fit = fit_rigid(&src, &dst).ok_or("fit failed")?;
        let (dr, dt) = fit.error_to(&truth);
        exact = exact.max(dr).max(dt);
    }
    detail.push(format!("exact correspondences within {exact:.1e}"));
    let detail = detail.join(", ");
    ensure!(errors.len() == clean.data.truth.moved.len(), "not every moved object was matched: {detail}");
    ensure!(errors.values().all(|&(r, t)| r < 2.0 && t < 0.05), "{detail}");
    ensure!(exact < 1e-6, "{detail}");
    Ok(detail)
}

/// Changed voxels holding no point of a truly changed object.
fn false_positive_voxels(changes: &ChangeSet, a: &MissionTrajectory, b: &MissionTrajectory, changed: &BTreeSet<u32>) -> usize {
    let supported = |cloud: PointCloud, keys: &BTreeSet<lidar_change::octree::VoxelKey>| {
        let mut hit = BTreeSet::new();
        for (p, l) in cloud.points.iter().zip(cloud.labels.as_ref().expect("simulated labels")) {
            if changed.contains(l) {
                if let Some(k) = changes.frame.key_of(p).filter(|k| keys.contains(k)) {
                    hit.insert(k);
                }
            }
        }
        keys.len() - hit.len()
    };
    supported(a.merged_cloud(), &changes.removed) + supported(b.merged_cloud(), &changes.added)
}

fn diff_of(a: &MissionTrajectory, b: &MissionTrajectory, cfg: &PipelineConfig) -> Result<ChangeSet, String> {
    let ta = build_octree(cfg.octree, &a.world_scans()).map_err(|e| e.to_string())?;
    let tb = build_octree(cfg.octree, &b.world_scans()).map_err(|e| e.to_string())?;
    diff_octrees(&ta, &tb, &cfg.diff).map_err(|e| e.to_string())
}

fn multi_mission_alignment() -> Outcome {
    let cfg = PipelineConfig::default();
    let offset = RigidTransform::from_yaw(5f64.to_radians(), Vector3::new(0.8, 0.6, 0.0));
    let sim = SimulationConfig {
        frame_offset_b: Some(offset),
        ..SimulationConfig::default()
    };
    let data = simulate_dataset(&office_scene(), &office_changes(), &sim).map_err(|e| e.to_string())?;
    let al = align_missions(&[data.a.clone(), data.b.clone()], &cfg.align).map_err(|e| e.to_string())?;
    let route = &sim.route;
    let truth_b = ellipse_route_phase(route.poses, route.radius_x, route.radius_y, route.height, route.phase_b);
    let (mut rot, mut trans) = (0.0f64, 0.0f64);
    for (node, truth) in al.graph.trajectories[1].nodes.iter().zip(&truth_b) {
        let (dr, dt) = node.pose.error_to(truth);
        rot = rot.max(dr);
        trans = trans.max(dt);
    }
    let recovered = format!("offset recovered to {:.3} deg {:.1} cm", rot.to_degrees(), trans * 100.0);
    ensure!(rot.to_degrees() < 0.5 && trans < 0.05, "{recovered}");

    // Drifting odometry: one rigid whole-map fit cannot undo it.
    let noisy = SimulationConfig {
        odometry_noise: OdometryNoise {
            translation_sigma: 0.02,
            rotation_sigma: 0.002,
        },
        ..sim
    };
    let data = simulate_dataset(&office_scene(), &office_changes(), &noisy).map_err(|e| e.to_string())?;
    let al = align_missions(&[data.a.clone(), data.b.clone()], &cfg.align).map_err(|e| e.to_string())?;
    let graph_fp = false_positive_voxels(
        &diff_of(&al.graph.trajectories[0], &al.graph.trajectories[1], &cfg)?,
        &al.graph.trajectories[0],
        &al.graph.trajectories[1],
        &data.truth.changed,
    );
    let thin = |m: &MissionTrajectory| -> Result<PointCloud, String> {
        let mut c = voxel_downsample(&m.merged_cloud(), cfg.align.icp_downsample).map_err(|e| e.to_string())?;
        c.labels = None;
        Ok(c)
    };
    let whole = icp_coarse_to_fine(
        &thin(&data.b)?,
        &thin(&data.a)?,
        &RigidTransform::identity(),
        &cfg.align.icp,
        &cfg.align.icp_schedule,
    )
    .map_err(|e| e.to_string())?;
    let b_whole = data.b.transformed(&whole.transform);
    let whole_fp = false_positive_voxels(&diff_of(&data.a, &b_whole, &cfg)?, &data.a, &b_whole, &data.truth.changed);
    let detail = format!("{recovered}; false-positive voxels {whole_fp} whole-map vs {graph_fp} pose graph");
    ensure!(whole_fp > graph_fp, "{detail}");
    Ok(detail)
}

fn octree_properties(clean: &Scene) -> Outcome {
    let cfg = PipelineConfig::default();
    let a = build_octree(cfg.octree, &clean.data.a.world_scans()).map_err(|e| e.to_string())?;
    let b = build_octree(cfg.octree, &clean.data.b.world_scans()).map_err(|e| e.to_string())?;
    ensure!(diff_octrees(&a, &a, &cfg.diff).map_err(|e| e.to_string())?.is_empty(), "diff(A, A) is not empty");
    let ab = diff_octrees(&a, &b, &cfg.diff).map_err(|e| e.to_string())?;
    let ba = diff_octrees(&b, &a, &cfg.diff).map_err(|e| e.to_string())?;
    ensure!(ab.added == ba.removed && ab.removed == ba.added, "diff is not symmetric under swap");
    drop((a, b));

    let frame = KeyFrame::new(0.05, 16);
    let mut r = rng(4242);
    let mut free = Vec::new();
    for _ in 0..10_000 {
        let o = random_point(&mut r, 5.0);
        let e = o + random_point(&mut r, 6.0).coords;
        free.clear();
        let end = trace_segment(&frame, &o, &e, &mut free);
        let mut reference = reference_traversal(&frame, &o, &e);
        let last = reference.pop();
        ensure!(Some(end) == last && free == reference, "traversal differs for ray {o} -> {e}");
    }

    let mut t = OccupancyOctree::new(OctreeParams::default()).map_err(|e| e.to_string())?;
    t.insert_scan(&PointCloud::new(vec![Point3::new(0.999, 0.025, 0.025)]).with_origin(Point3::new(0.001, 0.025, 0.025)))
        .map_err(|e| e.to_string())?;
    let hit = t.query_occupancy(&Point3::new(0.98, 0.02, 0.02)).ok_or("endpoint unknown")?;
    let miss = t.query_occupancy(&Point3::new(0.5, 0.02, 0.02)).ok_or("traversed voxel unknown")?;
    let detail = format!(
        "{} added / {} removed voxels mirror under swap, 10000 rays match, single update {hit} / {miss}",
        ab.added.len(),
        ab.removed.len()
    );
    ensure!((hit - 0.7).abs() < 1e-12 && (miss - 0.4).abs() < 1e-12, "{detail}");
    Ok(detail)
}

fn performance(clean: &Scene) -> Outcome {
    let params = DescribeParams::default();
    let mut objects = Vec::new();
    for seed in 0..8 {
        for seg in object_suite(700 + seed) {
            let thin = voxel_downsample(&seg.cloud, 0.05).map_err(|e| e.to_string())?;
            objects.push(lidar_change::segmentation::Segment::new(seg.id, seg.mission, thin).map_err(|e| e.to_string())?);
        }
    }
    objects.truncate(150);
    let start = Instant::now();
    for seg in &objects {
        describe(seg, &params).map_err(|e| e.to_string())?;
    }
    let per_object = start.elapsed().as_secs_f64() * 1000.0 / objects.len() as f64;

    let scans = clean.data.a.world_scans();
    let points: usize = scans.iter().map(|s| s.len()).sum();
    let start = Instant::now();
    build_octree(PipelineConfig::default().octree, &scans).map_err(|e| e.to_string())?;
    let rate = points as f64 / start.elapsed().as_secs_f64();
    let detail = format!("descriptor {per_object:.2} ms/object, octree insertion {:.0}k points/s", rate / 1000.0);
    ensure!(per_object <= 50.0 && rate >= 200_000.0, "{detail}");
    Ok(detail)
}

fn check(n: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        Err(e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let secs = start.elapsed().as_secs_f64();
    match &out {
        Ok(d) => println!("criterion {n:>2} PASS {name}: {d} [{secs:.1} s]"),
        Err(d) => println!("criterion {n:>2} FAIL {name}: {d} [{secs:.1} s]"),
    }
    out.is_ok()
}

fn main() {
    // libtest-style arguments are accepted and ignored; listing prints nothing.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let clean = run_scene(false);
    let overlap = run_scene(true);
    let results = [
        check(1, "bundled scene", || bundled_scene(&clean)),
        check(2, "overlap degradation", || overlap_degrades(&clean, &overlap)),
        check(3, "identity run", || identity_run(&clean)),
        check(4, "descriptor invariance", descriptor_invariance),
        check(5, "cluster confidence oracle", confidence_oracle),
        check(6, "correspondence oracle", correspondence_oracle),
        check(7, "elbow recovery", elbow_recovery),
        check(8, "registration", || registration(&clean)),
        check(9, "multi-mission alignment", multi_mission_alignment),
        check(10, "octree properties", || octree_properties(&clean)),
        check(11, "performance", || performance(&clean)),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
