//! End-to-end flow: simulate two missions, align them, difference their
//! occupancy maps, segment the changed points into objects, describe and
//! group them, and score the result.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::alignment::{align_missions, read_mission, write_mission, write_trajectory_file, AlignParams, GraphReport, MissionId, MissionTrajectory};
use crate::descriptors::{describe_all, DescribeParams, DescribedObject};
use crate::error::{Error, Result};
use crate::evaluation::{
    compute_metrics, label_points, read_json, write_json, write_metrics, write_report, ChangeReport, ClusterSummary, ConfusionCounts,
    CorrespondenceRecord, EvalParams, MetricsReport,
};
use crate::geometry::{crop_box, voxel_downsample, Aabb, Label, PointCloud, RigidTransform};
use crate::grouping::{
    assign_correspondences, cluster_confidence, register_pair, select_k_elbow, Assignment, ChangeKind, ClusterConfidence,
    DescriptorClustering, PairParams, Weights,
};
use crate::octree::{build_octree, diff_octrees, project_changes, ChangeSet, ChangeSide, DiffOptions, OctreeParams};
use crate::scenegen::examples::ellipse_route_phase;
use crate::scenegen::{apply_changes, build_scene, generate_mission, ChangeAction, ChangeScript, LidarModel, OdometryNoise, SceneSpec};
use crate::segmentation::{
    denoise_morphological, euclidean_cluster, merge_or_split, mls_smooth, ransac_ground, region_grow_refine, remove_plane,
    ClusterParams, MlsParams, MorphologyParams, OverlapParams, PlaneModel, RansacParams, RegionGrowParams, Segment,
};

pub const MISSION_A_DIR: &str = "mission_a";
pub const MISSION_B_DIR: &str = "mission_b";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const SIMULATION_FILE: &str = "simulation.json";
pub const CONFIG_FILE: &str = "config.json";

/// Elliptic inspection route shared by both missions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RouteSpec {
    pub poses: usize,
    pub radius_x: f64,
    pub radius_y: f64,
    pub height: f64,
    /// Fraction of a step by which the second mission's poses trail the
    /// first's, so the two missions never scan from identical spots.
    pub phase_b: f64,
}

impl Default for RouteSpec {
    fn default() -> Self {
        Self {
            poses: 20,
            radius_x: 5.5,
            radius_y: 3.5,
            height: 1.2,
            phase_b: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub lidar: LidarModel,
    pub route: RouteSpec,
    pub seed: u64,
    pub odometry_noise: OdometryNoise,
    /// Rigid offset applied to the second mission's recorded poses, as if
    /// its odometry frame started elsewhere.
    pub frame_offset_b: Option<RigidTransform>,
    pub mission_ids: [MissionId; 2],
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            lidar: LidarModel::os0_128_like(),
            route: RouteSpec::default(),
            seed: 7,
            odometry_noise: OdometryNoise::default(),
            frame_offset_b: None,
            mission_ids: [1, 2],
        }
    }
}

/// Scripted truth of a simulated mission pair.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub mission_ids: [MissionId; 2],
    /// Every object that moved, appeared or vanished.
    pub changed: BTreeSet<Label>,
    /// World-frame motion of each moved object.
    pub moved: BTreeMap<Label, RigidTransform>,
    pub added: BTreeSet<Label>,
    pub removed: BTreeSet<Label>,
}

impl GroundTruth {
    pub fn from_script(spec: &SceneSpec, script: &ChangeScript, mission_ids: [MissionId; 2]) -> Result<(SceneSpec, Self)> {
        let (after, changed) = apply_changes(spec, script)?;
        let mut gt = GroundTruth {
            mission_ids,
            changed,
            ..Default::default()
        };
        for action in &script.changes {
            match action {
                ChangeAction::Move { id, transform } => {
                    let prev = gt.moved.get(id).copied().unwrap_or_else(RigidTransform::identity);
                    gt.moved.insert(*id, transform.to_transform() * prev);
                }
                ChangeAction::Remove { id } => {
                    gt.moved.remove(id);
                    if !gt.added.remove(id) {
                        gt.removed.insert(*id);
                    }
                }
                ChangeAction::Add { object } => {
                    gt.added.insert(object.id);
                }
            }
        }
        Ok((after, gt))
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub a: MissionTrajectory,
    pub b: MissionTrajectory,
    pub truth: GroundTruth,
}

/// Simulates the scene before and after `script`.
pub fn simulate_dataset(spec: &SceneSpec, script: &ChangeScript, cfg: &SimulationConfig) -> Result<Dataset> {
    let (after, truth) = GroundTruth::from_script(spec, script, cfg.mission_ids)?;
    let r = &cfg.route;
    let route_a = ellipse_route_phase(r.poses, r.radius_x, r.radius_y, r.height, 0.0);
    let route_b = ellipse_route_phase(r.poses, r.radius_x, r.radius_y, r.height, r.phase_b);
    let scene_a = build_scene(spec)?;
    let scene_b = build_scene(&after)?;
    let a = generate_mission(&scene_a, &route_a, &cfg.lidar, cfg.seed, &cfg.odometry_noise, cfg.mission_ids[0])?;
    let mut b = generate_mission(
        &scene_b,
        &route_b,
        &cfg.lidar,
        cfg.seed.wrapping_add(1_000_003),
        &cfg.odometry_noise,
        cfg.mission_ids[1],
    )?;
    if let Some(off) = &cfg.frame_offset_b {
        b = b.transformed(off);
    }
    Ok(Dataset { a, b, truth })
}

pub fn write_dataset(dir: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_mission(dir.join(MISSION_A_DIR), &data.a)?;
    write_mission(dir.join(MISSION_B_DIR), &data.b)?;
    write_json(&dir.join(GROUND_TRUTH_FILE), &data.truth)
}

pub fn read_ground_truth(dir: impl AsRef<Path>) -> Result<GroundTruth> {
    read_json(&dir.as_ref().join(GROUND_TRUTH_FILE))
}

pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let truth = read_ground_truth(dir)?;
    Ok(Dataset {
        a: read_mission(dir.join(MISSION_A_DIR), truth.mission_ids[0])?,
        b: read_mission(dir.join(MISSION_B_DIR), truth.mission_ids[1])?,
        truth,
    })
}

/// Every tunable of [`detect`]. Unknown keys are rejected when parsed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    /// `false` trusts the recorded poses and skips multi-mission alignment.
    pub align_missions: bool,
    pub align: AlignParams,
    pub octree: OctreeParams,
    pub diff: DiffOptions,
    /// Changed points outside this box are dropped.
    pub crop: Option<Aabb>,
    /// Ground plane fitted on each mission's full map; `None` keeps ground.
    pub ground: Option<RansacParams>,
    /// Changed points closer than this to the ground plane are dropped.
    pub ground_margin: f64,
    /// Leaf used to thin the map before the ground fit.
    pub ground_sample_voxel: f64,
    pub mls: Option<MlsParams>,
    pub morphology: MorphologyParams,
    pub cluster: ClusterParams,
    /// Splits clusters into smooth surface patches when set.
    pub region_grow: Option<RegionGrowParams>,
    pub overlap: OverlapParams,
    /// Leaf used to thin segments before description and registration.
    pub describe_voxel: f64,
    pub describe: DescribeParams,
    pub weights: Weights,
    pub k_max: usize,
    pub pair: PairParams,
    pub eval: EvalParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            align_missions: true,
            align: AlignParams::default(),
            octree: OctreeParams::default(),
            diff: DiffOptions {
                require_observed_both: true,
                tolerance_voxels: 1,
                ..Default::default()
            },
            crop: None,
            ground: Some(RansacParams::default()),
            ground_margin: 0.06,
            ground_sample_voxel: 0.1,
            mls: Some(MlsParams::default()),
            morphology: MorphologyParams {
                erode_min_neighbors: Some(3),
                ..Default::default()
            },
            cluster: ClusterParams::default(),
            region_grow: None,
            overlap: OverlapParams::default(),
            describe_voxel: 0.05,
            describe: DescribeParams::default(),
            weights: Weights::default(),
            k_max: 10,
            pair: PairParams {
                planar: true,
                ..Default::default()
            },
            eval: EvalParams::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        crate::evaluation::parse_json(text, "pipeline config")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }

    pub fn validate(&self) -> Result<()> {
        self.octree.validate()?;
        self.weights.validate()?;
        let positive = [
            ("ground_margin", self.ground_margin),
            ("ground_sample_voxel", self.ground_sample_voxel),
            ("describe_voxel", self.describe_voxel),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.k_max == 0 {
            return Err(Error::InvalidArgument("k_max must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct Detection {
    /// Both missions in the common frame.
    pub missions: [MissionTrajectory; 2],
    pub graph_report: Option<GraphReport>,
    pub accepted_closures: usize,
    pub changes: ChangeSet,
    /// Changed points of each mission after filtering, before clustering.
    pub change_clouds: [PointCloud; 2],
    /// First mission's segments, then the second's; ids are unique.
    pub segments: Vec<Segment>,
    pub objects: Vec<DescribedObject>,
    pub clustering: Option<DescriptorClustering>,
    pub confidence: Option<ClusterConfidence>,
    pub assignment: Assignment,
    pub report: ChangeReport,
    pub timings: Vec<StageTiming>,
}

impl Detection {
    pub fn mission_segments(&self, side: usize) -> impl Iterator<Item = &Segment> {
        let id = self.missions[side].id;
        self.segments.iter().filter(move |s| s.mission == id)
    }

    /// Union of the segment points of one mission.
    pub fn predicted(&self, side: usize) -> PointCloud {
        let mut out = PointCloud::default();
        for s in self.mission_segments(side) {
            out.extend(&s.cloud);
        }
        out
    }
}

struct Timer {
    start: Instant,
    timings: Vec<StageTiming>,
}

impl Timer {
    fn lap(&mut self, stage: &str) {
        let seconds = self.start.elapsed().as_secs_f64();
        log::info!("stage {stage}: {seconds:.2} s");
        self.timings.push(StageTiming {
            stage: stage.into(),
            seconds,
        });
        self.start = Instant::now();
    }
}

/// Aligns the missions (unless disabled) and runs [`detect_aligned`].
pub fn detect(a: &MissionTrajectory, b: &MissionTrajectory, cfg: &PipelineConfig) -> Result<Detection> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let start = Instant::now();
    let mut b = b.clone();
    if b.id == a.id {
        log::warn!("both missions carry id {}; renumbering the second to {}", a.id, a.id + 1);
        b.id = a.id + 1;
    }
    let (aligned, report, accepted) = if cfg.align_missions {
        let al = align_missions(&[a.clone(), b], &cfg.align).map_err(|e| e.in_stage("align"))?;
        let accepted = al.closures.iter().filter(|c| c.accepted).count();
        let mut t = al.graph.trajectories.into_iter();
        let pair = [t.next().expect("two missions"), t.next().expect("two missions")];
        (pair, al.report, accepted)
    } else {
        ([a.clone(), b], None, 0)
    };
    let seconds = start.elapsed().as_secs_f64();
    log::info!("stage align: {seconds:.2} s");
    let mut det = detect_aligned(aligned, cfg)?;
    det.graph_report = report;
    det.accepted_closures = accepted;
    det.timings.insert(0, StageTiming { stage: "align".into(), seconds });
    Ok(det)
}

fn ground_plane(cloud: &PointCloud, cfg: &PipelineConfig) -> Result<Option<PlaneModel>> {
    let Some(params) = &cfg.ground else {
        return Ok(None);
    };
    let sample = voxel_downsample(cloud, cfg.ground_sample_voxel)?;
    Ok(Some(ransac_ground(&sample, params)?.0))
}

fn filter_changes(diff: &PointCloud, plane: Option<&PlaneModel>, cfg: &PipelineConfig) -> Result<PointCloud> {
    let mut c = match &cfg.crop {
        Some(b) => crop_box(diff, b),
        None => diff.clone(),
    };
    if let Some(p) = plane {
        c = remove_plane(&c, p, cfg.ground_margin);
    }
    if let Some(m) = &cfg.mls {
        c = mls_smooth(&c, m)?;
    }
    denoise_morphological(&c, &cfg.morphology)
}

fn cluster_side(cloud: &PointCloud, mission: MissionId, cfg: &PipelineConfig) -> Result<Vec<Segment>> {
    let segs = euclidean_cluster(cloud, &cfg.cluster, mission)?;
    let Some(rg) = &cfg.region_grow else {
        return Ok(segs);
    };
    let mut out = Vec::new();
    for s in &segs {
        let parts = if s.len() >= rg.normal_k { region_grow_refine(s, rg)? } else { vec![s.clone()] };
        for p in parts {
            out.push(Segment::new(out.len() as u64, mission, p.cloud)?);
        }
    }
    Ok(out)
}

/// Thins each segment to the description leaf, dropping those left with
/// fewer points than the descriptor needs.
pub fn thin_segments(segments: &[Segment], cfg: &PipelineConfig) -> Result<Vec<Segment>> {
    let mut thinned = Vec::new();
    for s in segments {
        let t = Segment::new(s.id, s.mission, voxel_downsample(&s.cloud, cfg.describe_voxel)?)?;
        if t.len() >= cfg.describe.min_points {
            thinned.push(t);
        } else {
            log::warn!("segment {} too small to describe ({} points after thinning)", s.id, t.len());
        }
    }
    Ok(thinned)
}

/// Change detection between two missions already in a common frame.
pub fn detect_aligned(missions: [MissionTrajectory; 2], cfg: &PipelineConfig) -> Result<Detection> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let mut timer = Timer {
        start: Instant::now(),
        timings: Vec::new(),
    };
    let [ma, mb] = &missions;
    let scans_a = ma.world_scans();
    let scans_b = mb.world_scans();
    let tree_a = build_octree(cfg.octree, &scans_a).map_err(|e| e.in_stage("octree"))?;
    let tree_b = build_octree(cfg.octree, &scans_b).map_err(|e| e.in_stage("octree"))?;
    timer.lap("octree");
    let changes = diff_octrees(&tree_a, &tree_b, &cfg.diff).map_err(|e| e.in_stage("diff"))?;
    drop((tree_a, tree_b));
    timer.lap("diff");
    log::info!("{} added and {} removed voxels", changes.added.len(), changes.removed.len());

    let map_a = ma.merged_cloud();
    let map_b = mb.merged_cloud();
    let raw_a = project_changes(&changes, &map_a, ChangeSide::Removed);
    let raw_b = project_changes(&changes, &map_b, ChangeSide::Added);
    let mut filtered = Vec::new();
    for (map, raw) in [(&map_a, &raw_a), (&map_b, &raw_b)] {
        let plane = if raw.is_empty() {
            None
        } else {
            ground_plane(map, cfg).map_err(|e| e.in_stage("ground"))?
        };
        filtered.push(filter_changes(raw, plane.as_ref(), cfg).map_err(|e| e.in_stage("segment"))?);
    }
    let change_clouds: [PointCloud; 2] = [filtered.remove(0), filtered.remove(0)];
    let seg_a = cluster_side(&change_clouds[0], ma.id, cfg).map_err(|e| e.in_stage("segment"))?;
    let seg_b = cluster_side(&change_clouds[1], mb.id, cfg).map_err(|e| e.in_stage("segment"))?;
    let (seg_a, seg_b) = merge_or_split(&seg_a, &seg_b, &cfg.overlap).map_err(|e| e.in_stage("segment"))?;
    let mut segments = Vec::with_capacity(seg_a.len() + seg_b.len());
    for s in seg_a.into_iter().chain(seg_b) {
        segments.push(Segment::new(segments.len() as u64, s.mission, s.cloud)?);
    }
    timer.lap("segment");

    let thinned = thin_segments(&segments, cfg).map_err(|e| e.in_stage("describe"))?;
    let objects = describe_all(&thinned, &cfg.describe).map_err(|e| e.in_stage("describe"))?;
    timer.lap("describe");

    let grouping = group_objects(&objects, &thinned, ma.id, cfg)?;
    timer.lap("group");
    let report = ChangeReport {
        mission_a: ma.id,
        mission_b: mb.id,
        changed_voxels: changes.len(),
        ..grouping.report()
    };
    let Grouping {
        clustering,
        confidence,
        assignment,
    } = grouping;
    Ok(Detection {
        missions,
        graph_report: None,
        accepted_closures: 0,
        changes,
        change_clouds,
        segments,
        objects,
        clustering,
        confidence,
        assignment,
        report,
        timings: timer.timings,
    })
}

/// Descriptor classes, correspondences and relative poses of one set of
/// described objects.
#[derive(Debug, Clone, Default)]
pub struct Grouping {
    pub clustering: Option<DescriptorClustering>,
    pub confidence: Option<ClusterConfidence>,
    pub assignment: Assignment,
}

impl Grouping {
    /// Report body without mission ids or voxel counts.
    pub fn report(&self) -> ChangeReport {
        let (clustering, confidence) = (&self.clustering, &self.confidence);
        ChangeReport {
            mission_a: 0,
            mission_b: 0,
            changed_voxels: 0,
            clusters: clustering.as_ref().zip(confidence.as_ref()).map(|(c, conf)| ClusterSummary {
                k: c.k,
                wcss_curve: c.wcss_curve.clone(),
                mean_distance: conf.mean_distance.clone(),
                confidence: conf.confidence.clone(),
                degenerate: c.degenerate || conf.degenerate,
            }),
            correspondences: self
                .assignment
                .correspondences
                .iter()
                .map(|c| CorrespondenceRecord::new(c, confidence.as_ref().map_or(0.0, |conf| conf.confidence[c.class])))
                .collect(),
        }
    }
}

/// Clusters the descriptors, assigns correspondences within each class and
/// registers every moved pair using the matching entries of `segments`.
/// Objects of `mission_a` form the first side.
pub fn group_objects(objects: &[DescribedObject], segments: &[Segment], mission_a: MissionId, cfg: &PipelineConfig) -> Result<Grouping> {
    if objects.is_empty() {
        return Ok(Grouping::default());
    }
    let (objs_a, objs_b): (Vec<DescribedObject>, Vec<DescribedObject>) = objects.iter().cloned().partition(|o| o.segment.mission == mission_a);
    let ordered: Vec<&DescribedObject> = objs_a.iter().chain(&objs_b).collect();
    let rows: Vec<[f64; 16]> = ordered.iter().map(|o| *o.descriptor.values()).collect();
    let k_max = cfg.k_max.min(rows.len());
    let clustering = select_k_elbow(&rows, k_max, cfg.seed).map_err(|e| e.in_stage("group"))?;
    let confidence = cluster_confidence(&rows, &clustering);
    let mut assignment = assign_correspondences(&objs_a, &objs_b, &clustering.assignments, &cfg.weights).map_err(|e| e.in_stage("group"))?;
    for c in &mut assignment.correspondences {
        if let (ChangeKind::Moved, Some(ia), Some(ib)) = (c.kind, c.object_a, c.object_b) {
            let find = |id| {
                segments
                    .iter()
                    .find(|s| s.id == id)
                    .ok_or(Error::UnknownSegment(id))
                    .map_err(|e| e.in_stage("register"))
            };
            let reg = register_pair(find(ia)?, find(ib)?, &cfg.pair).map_err(|e| e.in_stage("register"))?;
            c.transform = Some(reg.transform);
        }
    }
    Ok(Grouping {
        clustering: Some(clustering),
        confidence: Some(confidence),
        assignment,
    })
}

/// Per-point counts over both missions against the scripted truth.
pub fn score(missions: &[MissionTrajectory; 2], predicted: [&PointCloud; 2], truth: &GroundTruth, params: &EvalParams) -> Result<MetricsReport> {
    let mut total = ConfusionCounts::default();
    for (m, pred) in missions.iter().zip(predicted) {
        total = total + label_points(pred, &m.merged_cloud(), &truth.changed, params.match_radius, &params.exclude_labels)?;
    }
    Ok(compute_metrics(total))
}

pub fn evaluate_detection(det: &Detection, truth: &GroundTruth, params: &EvalParams) -> Result<MetricsReport> {
    score(&det.missions, [&det.predicted(0), &det.predicted(1)], truth, params)
}

pub fn poses_file(id: MissionId) -> String {
    format!("poses_{id}.txt")
}

/// Writes the change report, segments, match matrix, aligned poses, the
/// filtered change clouds and the effective configuration.
pub fn write_detection(dir: impl AsRef<Path>, det: &Detection, cfg: &PipelineConfig, metrics: Option<&MetricsReport>) -> Result<()> {
    let dir = dir.as_ref();
    write_report(dir, &det.report, &det.assignment.matrix, &det.segments, metrics)?;
    for m in &det.missions {
        let rows: Vec<(f64, RigidTransform)> = m.nodes.iter().map(|n| (n.timestamp, n.pose)).collect();
        write_trajectory_file(&dir.join(poses_file(m.id)), m.id, &rows)?;
    }
    for (m, c) in det.missions.iter().zip(&det.change_clouds) {
        crate::io::save_cloud(c, dir.join(format!("changes_m{}.ply", m.id)), crate::io::CloudFormat::Ply)?;
    }
    write_json(&dir.join("timings.json"), &det.timings)?;
    cfg.save(dir.join(CONFIG_FILE))
}

/// Scores a detection directory written by [`write_detection`] against a
/// dataset directory written by [`write_dataset`].
pub fn evaluate_dirs(report_dir: impl AsRef<Path>, dataset_dir: impl AsRef<Path>, params: &EvalParams) -> Result<MetricsReport> {
    let (rd, dd) = (report_dir.as_ref(), dataset_dir.as_ref());
    let report = crate::evaluation::read_report(rd)?;
    let data = read_dataset(dd)?;
    let ids = [data.a.id, data.b.id];
    let expected = [report.mission_a, report.mission_b];
    if ids != expected && !(ids[0] == ids[1] && expected[0] == ids[0]) {
        return Err(Error::InvalidArgument(format!(
            "report covers missions {expected:?} but the dataset holds {ids:?}"
        )));
    }
    let mut missions = [data.a, data.b];
    for (m, id) in missions.iter_mut().zip(expected) {
        m.id = id;
        let path = rd.join(poses_file(id));
        let (_, rows) = crate::alignment::parse_trajectory(&fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?, &path)?;
        if rows.len() != m.nodes.len() {
            return Err(Error::InvalidArgument(format!(
                "{} holds {} poses but mission {id} has {} scans",
                path.display(),
                rows.len(),
                m.nodes.len()
            )));
        }
        for (n, (_, pose)) in m.nodes.iter_mut().zip(rows) {
            n.pose = pose;
        }
    }
    let segments = crate::segmentation::import_segments(rd.join(crate::evaluation::SEGMENTS_DIR))?;
    report.check_ids(&segments)?;
    let mut pred = [PointCloud::default(), PointCloud::default()];
    for s in &segments {
        if let Some(k) = expected.iter().position(|&id| id == s.mission) {
            pred[k].extend(&s.cloud);
        }
    }
    let metrics = score(&missions, [&pred[0], &pred[1]], &data.truth, params)?;
    write_metrics(rd, &metrics)?;
    Ok(metrics)
}
