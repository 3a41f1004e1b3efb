use lidar_change::alignment::{
    icp_register, information_from_sigmas, optimize_pose_graph, Factor, FactorKind, GraphParams, IcpParams, MissionGraph,
    MissionTrajectory, NodeRef, TrajectoryNode,
};
use lidar_change::geometry::{transform_cloud, Point3, PointCloud, RigidTransform};
use nalgebra::{Vector3, Vector6};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn random_transform(rng: &mut impl Rng, t_scale: f64, r_scale: f64) -> RigidTransform {
    let mut xi = Vector6::zeros();
    for k in 0..3 {
        xi[k] = rng.random_range(-t_scale..t_scale);
        xi[k + 3] = rng.random_range(-r_scale..r_scale);
    }
    RigidTransform::exp(&xi)
}

/// Three orthogonal walls with random texture, enough to pin all six DOF.
fn corner_cloud(rng: &mut impl Rng, n: usize) -> PointCloud {
    let mut pts = Vec::with_capacity(3 * n);
    for _ in 0..n {
        let (u, v) = (rng.random_range(0.0..2.0), rng.random_range(0.0..2.0));
        pts.push(Point3::new(u, v, 0.05 * (3.0 * u).sin()));
        pts.push(Point3::new(u, 0.05 * (2.0 * v).cos(), v));
        pts.push(Point3::new(0.05 * (u * v).sin(), u, v));
    }
    PointCloud::new(pts)
}

fn mission(id: u32, poses: &[RigidTransform]) -> MissionTrajectory {
    let nodes = poses
        .iter()
        .enumerate()
        .map(|(k, p)| TrajectoryNode {
            timestamp: k as f64,
            pose: *p,
            scan: PointCloud::default(),
        })
        .collect();
    MissionTrajectory::new(id, nodes).unwrap()
}

fn circle(n: usize, r: f64) -> Vec<RigidTransform> {
    (0..n)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / n as f64;
            RigidTransform::from_yaw(a + std::f64::consts::FRAC_PI_2, Vector3::new(r * a.cos(), r * a.sin(), 0.0))
        })
        .collect()
}

/// Two missions on the same circle with noisy odometry and loop closures
/// taken from the true poses.
fn noisy_graph(seed: u64) -> (MissionGraph, Vec<RigidTransform>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = circle(8, 3.0);
    let mut perturbed = |poses: &[RigidTransform]| -> Vec<RigidTransform> {
        let mut out = vec![poses[0]];
        for w in poses.windows(2) {
            let step = w[0].inverse() * w[1] * random_transform(&mut rng, 0.05, 0.02);
            out.push(*out.last().unwrap() * step);
        }
        out
    };
    let a = perturbed(&truth);
    let b: Vec<RigidTransform> = perturbed(&truth).iter().map(|p| RigidTransform::from_translation(Vector3::new(0.3, -0.2, 0.0)) * *p).collect();
    let mut g = MissionGraph::new(vec![mission(1, &a), mission(2, &b)], information_from_sigmas(0.05, 0.02)).unwrap();
    for k in 0..8 {
        let z = truth[k].inverse() * truth[k];
        g.add_factor(Factor::new(FactorKind::LoopClosure, NodeRef::new(0, k), NodeRef::new(1, k), z, information_from_sigmas(0.01, 0.005)).unwrap())
            .unwrap();
    }
    (g, truth)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn icp_history_is_monotone(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target = corner_cloud(&mut rng, 300);
        let motion = random_transform(&mut rng, 0.15, 0.12);
        let noise = Normal::new(0.0, 0.003).unwrap();
        let mut source = transform_cloud(&target, &motion.inverse());
        for p in &mut source.points {
            *p += Vector3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
        }
        let params = IcpParams { max_iter: 60, corr_dist: 0.6, convergence_eps: 1e-10 };
        let res = icp_register(&source, &target, &RigidTransform::identity(), &params).unwrap();
        for w in res.history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12, "{:?}", res.history);
        }
        prop_assert_eq!(res.fitness, *res.history.last().unwrap());
    }

    #[test]
    fn graph_error_never_increases(seed in 0u64..10_000) {
        let (mut g, _) = noisy_graph(seed);
        let before = g.total_error();
        let report = optimize_pose_graph(&mut g, &GraphParams::default()).unwrap();
        prop_assert!((report.initial_error - before).abs() <= 1e-9 * before.max(1.0));
        prop_assert!(report.final_error <= report.initial_error);
        prop_assert!((g.total_error() - report.final_error).abs() <= 1e-9 * before.max(1.0));
    }

    #[test]
    fn optimum_is_gauge_covariant(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
        let gauge = random_transform(&mut rng, 5.0, 1.0);
        let (mut g, _) = noisy_graph(seed);
        let mut h = g.clone();
        for t in &mut h.trajectories {
            for n in &mut t.nodes {
                n.pose = gauge * n.pose;
            }
        }
        h.prior = gauge * h.prior;
        optimize_pose_graph(&mut g, &GraphParams::default()).unwrap();
        optimize_pose_graph(&mut h, &GraphParams::default()).unwrap();
        for (tg, th) in g.trajectories.iter().zip(&h.trajectories) {
            for (ng, nh) in tg.nodes.iter().zip(&th.nodes) {
                let (dr, dt) = (gauge * ng.pose).error_to(&nh.pose);
                prop_assert!(dr < 1e-6 && dt < 1e-6, "{} {}", dr, dt);
            }
        }
    }
}

#[test]
fn loop_closures_pull_missions_together() {
    let (mut g, truth) = noisy_graph(3);
    let spread = |g: &MissionGraph| {
        (0..8)
            .map(|k| g.pose(NodeRef::new(0, k)).error_to(g.pose(NodeRef::new(1, k))).1)
            .fold(0.0, f64::max)
    };
    let before = spread(&g);
    optimize_pose_graph(&mut g, &GraphParams::default()).unwrap();
    assert!(spread(&g) < 0.25 * before, "{} -> {}", before, spread(&g));
    assert!(g.pose(NodeRef::new(0, 0)).error_to(&truth[0]).1 < 1e-3);
}
