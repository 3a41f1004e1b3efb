use nalgebra::{DMatrix, DVector, Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use super::trajectory::MissionTrajectory;
use crate::error::{Error, Result};
use crate::geometry::RigidTransform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    Odometry,
    LoopClosure,
}

/// A node of the joint graph: mission index within the graph plus node index
/// within that mission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeRef {
    pub mission: usize,
    pub node: usize,
}

impl NodeRef {
    pub fn new(mission: usize, node: usize) -> Self {
        Self { mission, node }
    }
}

/// Relative-pose constraint: `from⁻¹ · to ≈ measurement`.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub kind: FactorKind,
    pub from: NodeRef,
    pub to: NodeRef,
    pub measurement: RigidTransform,
    /// Weight on the `[ρ, φ]` residual.
    pub information: Matrix6<f64>,
}

/// Diagonal information for the given translation and rotation sigmas.
pub fn information_from_sigmas(trans_sigma: f64, rot_sigma: f64) -> Matrix6<f64> {
    let t = 1.0 / (trans_sigma * trans_sigma);
    let r = 1.0 / (rot_sigma * rot_sigma);
    Matrix6::from_diagonal(&Vector6::new(t, t, t, r, r, r))
}

fn check_spd(m: &Matrix6<f64>) -> bool {
    m.iter().all(|v| v.is_finite()) && (m - m.transpose()).amax() <= 1e-9 * m.amax().max(1.0) && m.cholesky().is_some()
}

impl Factor {
    pub fn new(kind: FactorKind, from: NodeRef, to: NodeRef, measurement: RigidTransform, information: Matrix6<f64>) -> Result<Self> {
        if from == to {
            return Err(Error::InvalidArgument(format!("factor endpoints coincide at {from:?}")));
        }
        if !check_spd(&information) {
            return Err(Error::InvalidArgument("factor information is not symmetric positive definite".into()));
        }
        Ok(Self {
            kind,
            from,
            to,
            measurement,
            information,
        })
    }

    fn residual(&self, xi: &RigidTransform, xj: &RigidTransform) -> Vector6<f64> {
        (self.measurement.inverse() * xi.inverse() * *xj).log()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionGraph {
    pub trajectories: Vec<MissionTrajectory>,
    pub factors: Vec<Factor>,
    /// Gauge prior on node 0 of mission 0.
    pub prior: RigidTransform,
    pub prior_information: Matrix6<f64>,
}

impl MissionGraph {
    /// Chains each mission with odometry factors taken from its own poses and
    /// anchors the first node of the first mission where it currently is.
    pub fn new(trajectories: Vec<MissionTrajectory>, odometry_information: Matrix6<f64>) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::InvalidArgument("pose graph needs at least one mission".into()));
        }
        let mut factors = Vec::new();
        for (m, traj) in trajectories.iter().enumerate() {
            traj.validate()?;
            for k in 1..traj.len() {
                let z = traj.nodes[k - 1].pose.inverse() * traj.nodes[k].pose;
                factors.push(Factor::new(
                    FactorKind::Odometry,
                    NodeRef::new(m, k - 1),
                    NodeRef::new(m, k),
                    z,
                    odometry_information,
                )?);
            }
        }
        let prior = trajectories[0].nodes[0].pose;
        Ok(Self {
            trajectories,
            factors,
            prior,
            prior_information: Matrix6::identity() * 1e8,
        })
    }

    pub fn pose(&self, n: NodeRef) -> &RigidTransform {
        &self.trajectories[n.mission].nodes[n.node].pose
    }

    fn exists(&self, n: NodeRef) -> bool {
        self.trajectories.get(n.mission).is_some_and(|t| n.node < t.len())
    }

    pub fn add_factor(&mut self, f: Factor) -> Result<()> {
        if !self.exists(f.from) || !self.exists(f.to) {
            return Err(Error::InvalidArgument(format!("factor references a missing node: {:?} -> {:?}", f.from, f.to)));
        }
        self.factors.push(f);
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.trajectories.iter().map(|t| t.len()).sum()
    }

    fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.trajectories
            .iter()
            .map(|t| {
                let o = acc;
                acc += t.len();
                o
            })
            .collect()
    }

    fn index(&self, offsets: &[usize], n: NodeRef) -> usize {
        offsets[n.mission] + n.node
    }

    /// Groups missions into connected components of the factor graph.
    pub fn mission_components(&self) -> Vec<Vec<usize>> {
        let offsets = self.offsets();
        let mut uf = UnionFind::new(self.node_count());
        for f in &self.factors {
            uf.union(self.index(&offsets, f.from), self.index(&offsets, f.to));
        }
        let mut comps: Vec<(usize, Vec<usize>)> = Vec::new();
        for (m, &o) in offsets.iter().enumerate() {
            let root = uf.find(o);
            match comps.iter_mut().find(|c| c.0 == root) {
                Some(c) => c.1.push(m),
                None => comps.push((root, vec![m])),
            }
        }
        comps.into_iter().map(|c| c.1).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for f in &self.factors {
            if !self.exists(f.from) || !self.exists(f.to) {
                return Err(Error::InvalidArgument(format!("factor references a missing node: {:?} -> {:?}", f.from, f.to)));
            }
        }
        let comps = self.mission_components();
        if comps.len() > 1 {
            let ids: Vec<String> = comps
                .iter()
                .map(|c| {
                    let v: Vec<String> = c.iter().map(|&m| self.trajectories[m].id.to_string()).collect();
                    format!("{{{}}}", v.join(", "))
                })
                .collect();
            return Err(Error::Disconnected(format!("mission components {}", ids.join(" "))));
        }
        Ok(())
    }

    /// Σ rᵀ Ω r over all factors plus the gauge prior.
    pub fn total_error(&self) -> f64 {
        let offsets = self.offsets();
        self.error_of(&offsets, &self.flat_poses())
    }

    fn flat_poses(&self) -> Vec<RigidTransform> {
        self.trajectories.iter().flat_map(|t| t.nodes.iter().map(|n| n.pose)).collect()
    }

    fn error_of(&self, offsets: &[usize], x: &[RigidTransform]) -> f64 {
        let rp = prior_residual(&self.prior, &x[0]);
        let mut e = rp.dot(&(self.prior_information * rp));
        for f in &self.factors {
            let r = f.residual(&x[self.index(offsets, f.from)], &x[self.index(offsets, f.to)]);
            e += r.dot(&(f.information * r));
        }
        e
    }

    pub fn set_pose(&mut self, n: NodeRef, pose: RigidTransform) {
        self.trajectories[n.mission].nodes[n.node].pose = pose;
    }
}

fn prior_residual(prior: &RigidTransform, x: &RigidTransform) -> Vector6<f64> {
    (prior.inverse() * *x).log()
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphParams {
    pub max_iter: usize,
    /// Stop once the relative error decrease falls below this.
    pub tolerance: f64,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphReport {
    pub initial_error: f64,
    pub final_error: f64,
    pub iterations: usize,
}

const JAC_STEP: f64 = 1e-7;

/// Derivatives of `r` with respect to right perturbations of both endpoints,
/// by central differences.
fn jacobians(
    r: impl Fn(&RigidTransform, &RigidTransform) -> Vector6<f64>,
    xi: &RigidTransform,
    xj: &RigidTransform,
) -> (Matrix6<f64>, Matrix6<f64>) {
    let mut ji = Matrix6::zeros();
    let mut jj = Matrix6::zeros();
    for k in 0..6 {
        let mut d = Vector6::zeros();
        d[k] = JAC_STEP;
        let plus = RigidTransform::exp(&d);
        let minus = RigidTransform::exp(&-d);
        let col_i = (r(&(*xi * plus), xj) - r(&(*xi * minus), xj)) / (2.0 * JAC_STEP);
        let col_j = (r(xi, &(*xj * plus)) - r(xi, &(*xj * minus))) / (2.0 * JAC_STEP);
        ji.set_column(k, &col_i);
        jj.set_column(k, &col_j);
    }
    (ji, jj)
}

fn add_block(h: &mut DMatrix<f64>, r: usize, c: usize, b: &Matrix6<f64>) {
    let mut v = h.view_mut((6 * r, 6 * c), (6, 6));
    v += b;
}

fn add_rows(b: &mut DVector<f64>, start: usize, v: &Vector6<f64>) {
    let mut r = b.rows_mut(start, 6);
    r += v;
}

fn build_system(g: &MissionGraph, offsets: &[usize], x: &[RigidTransform]) -> (DMatrix<f64>, DVector<f64>) {
    let n = 6 * x.len();
    let mut h = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    let rp = prior_residual(&g.prior, &x[0]);
    let (_, jp) = jacobians(|_, p| prior_residual(&g.prior, p), &x[0], &x[0]);
    add_block(&mut h, 0, 0, &(jp.transpose() * g.prior_information * jp));
    add_rows(&mut b, 0, &(jp.transpose() * g.prior_information * rp));
    for f in &g.factors {
        let (i, j) = (g.index(offsets, f.from), g.index(offsets, f.to));
        let r = f.residual(&x[i], &x[j]);
        let (ji, jj) = jacobians(|a, c| f.residual(a, c), &x[i], &x[j]);
        let o = &f.information;
        add_block(&mut h, i, i, &(ji.transpose() * o * ji));
        add_block(&mut h, j, j, &(jj.transpose() * o * jj));
        add_block(&mut h, i, j, &(ji.transpose() * o * jj));
        add_block(&mut h, j, i, &(jj.transpose() * o * ji));
        add_rows(&mut b, 6 * i, &(ji.transpose() * o * r));
        add_rows(&mut b, 6 * j, &(jj.transpose() * o * r));
    }
    (h, b)
}

fn retract(x: &[RigidTransform], delta: &DVector<f64>) -> Vec<RigidTransform> {
    x.iter()
        .enumerate()
        .map(|(i, p)| *p * RigidTransform::exp(&Vector6::from_iterator(delta.rows(6 * i, 6).iter().copied())))
        .collect()
}

fn singular_block(g: &MissionGraph, h: &DMatrix<f64>) -> Option<Error> {
    let mut block = 0;
    for t in &g.trajectories {
        for k in 0..t.len() {
            let sub: Matrix6<f64> = h.fixed_view::<6, 6>(6 * block, 6 * block).into_owned();
            if sub.cholesky().is_none() {
                return Some(Error::Singular {
                    block,
                    node: format!("mission {} node {k}", t.id),
                });
            }
            block += 1;
        }
    }
    None
}

/// Batch Gauss–Newton over all poses; falls back to Levenberg damping when a
/// plain step fails to lower the error. Never returns a graph with a higher
/// total error than the input. Poses are updated in place.
pub fn optimize_pose_graph(graph: &mut MissionGraph, params: &GraphParams) -> Result<GraphReport> {
    graph.validate()?;
    let offsets = graph.offsets();
    let mut x = graph.flat_poses();
    let mut err = graph.error_of(&offsets, &x);
    let initial_error = err;
    let mut iterations = 0;
    let mut lambda = 0.0f64;
    while iterations < params.max_iter {
        iterations += 1;
        let (h, b) = build_system(graph, &offsets, &x);
        if iterations == 1 {
            if let Some(e) = singular_block(graph, &h) {
                return Err(e);
            }
        }
        let mut improved = false;
        for _ in 0..12 {
            let mut damped = h.clone();
            for d in 0..damped.nrows() {
                damped[(d, d)] += lambda * h[(d, d)].max(1e-12);
            }
            let Some(chol) = damped.cholesky() else {
                lambda = if lambda == 0.0 { 1e-6 } else { lambda * 10.0 };
                continue;
            };
            let delta = -chol.solve(&b);
            let candidate = retract(&x, &delta);
            let cerr = graph.error_of(&offsets, &candidate);
            if cerr <= err {
                let rel = (err - cerr) / err.max(f64::MIN_POSITIVE);
                x = candidate;
                err = cerr;
                lambda = if lambda < 1e-6 { 0.0 } else { lambda / 10.0 };
                improved = rel > params.tolerance && delta.amax() > 1e-12;
                break;
            }
            lambda = if lambda == 0.0 { 1e-6 } else { lambda * 10.0 };
        }
        if !improved {
            break;
        }
    }
    let mut it = x.into_iter();
    for t in &mut graph.trajectories {
        for n in &mut t.nodes {
            n.pose = it.next().expect("one pose per node");
        }
    }
    Ok(GraphReport {
        initial_error,
        final_error: err,
        iterations,
    })
}
