//! Joint registration of several missions into one frame.
//!
//! Missions enter as posed scan sequences in a rough shared frame. Nearby
//! scan pairs across missions are registered with ICP, accepted results
//! become loop-closure factors, and one pose graph over all missions is
//! solved. Registration is always scan-to-scan: a whole-map ICP path would
//! bake local misalignment into the map and is deliberately absent.

mod graph;
mod icp;
mod trajectory;

pub use graph::{
    information_from_sigmas, optimize_pose_graph, Factor, FactorKind, GraphParams, GraphReport, MissionGraph, NodeRef,
};
pub use icp::{icp_coarse_to_fine, icp_register, IcpParams, IcpResult};
pub use trajectory::{
    format_pose_row, parse_trajectory, read_mission, write_mission, write_trajectory_file, MissionId,
    MissionTrajectory, TrajectoryNode, MANIFEST_FILE, TRAJECTORY_FILE,
};

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{voxel_downsample, PointCloud, RigidTransform};

/// Pairs `(i, j)` where node `j` of `b` is the nearest node of `b` to node
/// `i` of `a` and lies within `radius`. At most one pair per node of `a`,
/// sorted by `i`.
pub fn propose_loop_closures(a: &MissionTrajectory, b: &MissionTrajectory, radius: f64) -> Vec<(usize, usize)> {
    let r2 = radius * radius;
    let mut out = BTreeSet::new();
    for (i, na) in a.nodes.iter().enumerate() {
        let pa = na.pose.translation();
        let best = b
            .nodes
            .iter()
            .enumerate()
            .map(|(j, nb)| (j, (nb.pose.translation() - pa).norm_squared()))
            .filter(|&(_, d2)| d2 <= r2)
            .min_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
        if let Some((j, _)) = best {
            out.insert((i, j));
        }
    }
    out.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlignParams {
    /// Candidate scan pairs must lie within this distance under the rough
    /// initial alignment.
    pub radius: f64,
    /// Final-stage ICP settings.
    pub icp: IcpParams,
    /// Correspondence distances of the coarse stages run before `icp`.
    pub icp_schedule: Vec<f64>,
    /// Voxel leaf used to thin scans before ICP.
    pub icp_downsample: f64,
    /// Scan points beyond this range are ignored for registration.
    pub icp_max_range: f64,
    pub min_inlier_fraction: f64,
    /// Largest accepted ICP RMS, in metres.
    pub max_fitness: f64,
    /// Evenly thins the candidates of each mission pair to this many.
    pub max_closures_per_pair: usize,
    pub odometry_sigma: [f64; 2],
    pub loop_sigma: [f64; 2],
    pub graph: GraphParams,
    /// Optional rough world-from-mission transforms keyed by mission id.
    pub seeds: BTreeMap<MissionId, RigidTransform>,
}

impl Default for AlignParams {
    fn default() -> Self {
        Self {
            radius: 3.0,
            icp: IcpParams {
                max_iter: 50,
                corr_dist: 0.1,
                convergence_eps: 1e-7,
            },
            icp_schedule: vec![1.0, 0.5, 0.25],
            icp_downsample: 0.1,
            icp_max_range: 20.0,
            min_inlier_fraction: 0.6,
            max_fitness: 0.1,
            max_closures_per_pair: 10,
            odometry_sigma: [0.05, 0.01],
            loop_sigma: [0.05, 0.01],
            graph: GraphParams::default(),
            seeds: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosureReport {
    pub a: NodeRef,
    pub b: NodeRef,
    pub fitness: f64,
    pub inlier_fraction: f64,
    pub accepted: bool,
    /// Set when ICP itself failed.
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Alignment {
    pub graph: MissionGraph,
    /// Each mission's scans in the common frame, concatenated.
    pub merged: Vec<PointCloud>,
    pub closures: Vec<ClosureReport>,
    pub report: Option<GraphReport>,
}

fn registration_cloud(scan: &PointCloud, p: &AlignParams) -> Result<PointCloud> {
    let r2 = p.icp_max_range * p.icp_max_range;
    let near = scan.filter(|_, q| q.coords.norm_squared() <= r2);
    let mut thin = voxel_downsample(&near, p.icp_downsample)?;
    thin.labels = None;
    Ok(thin)
}

fn thin_evenly(pairs: Vec<(usize, usize)>, max: usize) -> Vec<(usize, usize)> {
    if max == 0 || pairs.len() <= max {
        return pairs;
    }
    let n = pairs.len();
    (0..max).map(|k| pairs[k * (n - 1) / (max - 1).max(1)]).collect()
}

/// Registers all missions into the frame of the first one.
pub fn align_missions(missions: &[MissionTrajectory], params: &AlignParams) -> Result<Alignment> {
    if missions.is_empty() {
        return Err(Error::InvalidArgument("alignment needs at least one mission".into()));
    }
    let mut ids = BTreeSet::new();
    for m in missions {
        if !ids.insert(m.id) {
            return Err(Error::InvalidArgument(format!("duplicate mission id {}", m.id)));
        }
    }
    let seeded: Vec<MissionTrajectory> = missions
        .iter()
        .map(|m| match params.seeds.get(&m.id) {
            Some(t) => m.transformed(t),
            None => m.clone(),
        })
        .collect();
    let odo = information_from_sigmas(params.odometry_sigma[0], params.odometry_sigma[1]);
    let loop_info = information_from_sigmas(params.loop_sigma[0], params.loop_sigma[1]);
    let mut graph = MissionGraph::new(seeded, odo)?;

    let mut candidates = Vec::new();
    for ma in 0..missions.len() {
        for mb in ma + 1..missions.len() {
            let pairs = propose_loop_closures(&graph.trajectories[ma], &graph.trajectories[mb], params.radius);
            log::debug!("missions {ma}/{mb}: {} loop closure candidates", pairs.len());
            for (i, j) in thin_evenly(pairs, params.max_closures_per_pair) {
                candidates.push((NodeRef::new(ma, i), NodeRef::new(mb, j)));
            }
        }
    }

    let mut clouds: BTreeMap<NodeRef, PointCloud> = BTreeMap::new();
    for &(a, b) in &candidates {
        for n in [a, b] {
            if !clouds.contains_key(&n) {
                let scan = &graph.trajectories[n.mission].nodes[n.node].scan;
                clouds.insert(n, registration_cloud(scan, params)?);
            }
        }
    }

    let closures: Vec<(ClosureReport, Option<RigidTransform>)> = candidates
        .par_iter()
        .map(|&(a, b)| {
            let init = graph.pose(a).inverse() * *graph.pose(b);
            let (src, dst) = (&clouds[&b], &clouds[&a]);
            let res = if src.is_empty() || dst.is_empty() {
                Err(Error::Divergence("empty registration cloud".into()))
            } else {
                icp_coarse_to_fine(src, dst, &init, &params.icp, &params.icp_schedule)
            };
            match res {
                Ok(r) => {
                    let accepted = r.inlier_fraction >= params.min_inlier_fraction && r.fitness <= params.max_fitness;
                    let rep = ClosureReport {
                        a,
                        b,
                        fitness: r.fitness,
                        inlier_fraction: r.inlier_fraction,
                        accepted,
                        error: None,
                    };
                    (rep, accepted.then_some(r.transform))
                }
                Err(e) => (
                    ClosureReport {
                        a,
                        b,
                        fitness: f64::INFINITY,
                        inlier_fraction: 0.0,
                        accepted: false,
                        error: Some(e.to_string()),
                    },
                    None,
                ),
            }
        })
        .collect();

    let mut reports = Vec::with_capacity(closures.len());
    for (rep, z) in closures {
        if let Some(z) = z {
            graph.add_factor(Factor::new(FactorKind::LoopClosure, rep.a, rep.b, z, loop_info)?)?;
        }
        reports.push(rep);
    }
    log::info!(
        "{} of {} loop closures accepted",
        reports.iter().filter(|r| r.accepted).count(),
        reports.len()
    );

    let report = if missions.len() > 1 {
        Some(optimize_pose_graph(&mut graph, &params.graph)?)
    } else {
        None
    };
    let merged = graph.trajectories.iter().map(|t| t.merged_cloud()).collect();
    Ok(Alignment {
        graph,
        merged,
        closures: reports,
        report,
    })
}
