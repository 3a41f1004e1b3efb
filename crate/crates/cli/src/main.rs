use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lidar_change::alignment::{align_missions, read_mission, write_mission};
use lidar_change::descriptors::{describe_all, export_descriptors, import_descriptors, DescribedObject};
use lidar_change::evaluation::{read_json, write_json, write_report};
use lidar_change::pipeline::{
    detect, evaluate_dirs, evaluate_detection, group_objects, read_ground_truth, simulate_dataset, thin_segments, write_dataset,
    write_detection, PipelineConfig, SimulationConfig, CONFIG_FILE, MISSION_A_DIR, MISSION_B_DIR, SIMULATION_FILE,
};
use lidar_change::scenegen::examples::{office_changes, office_scene};
use lidar_change::scenegen::{ChangeScript, SceneSpec};
use lidar_change::segmentation::import_segments;
use lidar_change::{Error, Result};

#[derive(Parser)]
#[command(name = "lidar-change", version, about = "Object-level change detection between LiDAR missions")]
struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log stage progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate two missions of a scene before and after a change script.
    Simulate {
        /// Scene JSON; the bundled office scene when omitted.
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Change script JSON; the bundled office changes when omitted.
        #[arg(long)]
        script: Option<PathBuf>,
        /// Simulation settings JSON (sensor, route, noise, seed).
        #[arg(long)]
        sim_config: Option<PathBuf>,
        /// Overrides the simulation seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Dataset directory to create.
        #[arg(long)]
        out: PathBuf,
    },
    /// Register two missions into a common frame.
    Align {
        #[command(flatten)]
        missions: Missions,
        #[command(flatten)]
        config: ConfigArgs,
        /// Directory for the aligned missions and closure reports.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full change detection pipeline.
    Detect {
        #[command(flatten)]
        missions: Missions,
        #[command(flatten)]
        config: ConfigArgs,
        /// Dataset directory holding ground truth; metrics are added when set.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Directory for the report, segments and change clouds.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a detection directory against a simulated dataset.
    Evaluate {
        /// Output directory of a detect run.
        #[arg(long)]
        report: PathBuf,
        /// Simulated dataset directory.
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Compute descriptors for exported segments.
    Describe {
        /// Segment directory written by detect.
        #[arg(long)]
        segments: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Output text file, one `id v1 … v16` row per segment.
        #[arg(long)]
        out: PathBuf,
    },
    /// Group described segments into classes and correspondences.
    Match {
        /// Segment directory written by detect.
        #[arg(long)]
        segments: PathBuf,
        /// Descriptor file written by describe.
        #[arg(long)]
        descriptors: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Directory for the report and match matrix.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Missions {
    /// Directory of the earlier mission.
    #[arg(long)]
    mission_a: PathBuf,
    /// Directory of the later mission.
    #[arg(long)]
    mission_b: PathBuf,
}

impl Missions {
    fn load(&self) -> Result<[lidar_change::alignment::MissionTrajectory; 2]> {
        let a = read_mission(&self.mission_a, 1).map_err(|e| e.in_stage("input"))?;
        let b = read_mission(&self.mission_b, 2).map_err(|e| e.in_stage("input"))?;
        Ok([a, b])
    }
}

#[derive(Args)]
struct ConfigArgs {
    /// Pipeline configuration JSON; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Weight of the centroid distance in the pairing distance.
    #[arg(long)]
    alpha: Option<f64>,
    /// Weight of the descriptor distance in the pairing distance.
    #[arg(long)]
    beta: Option<f64>,
    /// Seed for clustering restarts.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p),
            None => Ok(PipelineConfig::default()),
        }
        .map_err(|e| e.in_stage("config"))?;
        if let Some(a) = self.alpha {
            cfg.weights.alpha = a;
        }
        if let Some(b) = self.beta {
            cfg.weights.beta = b;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate().map_err(|e| e.in_stage("config"))?;
        Ok(cfg)
    }
}

fn simulate(scene: Option<&Path>, script: Option<&Path>, sim: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let spec: SceneSpec = scene.map_or_else(|| Ok(office_scene()), |p| read_json(p))?;
    let script: ChangeScript = script.map_or_else(|| Ok(office_changes()), |p| read_json(p))?;
    let mut cfg: SimulationConfig = sim.map_or_else(|| Ok(SimulationConfig::default()), |p| read_json(p))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let data = simulate_dataset(&spec, &script, &cfg)?;
    write_dataset(out, &data)?;
    write_json(&out.join(SIMULATION_FILE), &cfg)?;
    println!(
        "wrote {} and {} ({} + {} scans); {} changed objects",
        out.join(MISSION_A_DIR).display(),
        out.join(MISSION_B_DIR).display(),
        data.a.nodes.len(),
        data.b.nodes.len(),
        data.truth.changed.len()
    );
    Ok(())
}

fn align(missions: &Missions, config: &ConfigArgs, out: &Path) -> Result<()> {
    let cfg = config.resolve()?;
    let [a, b] = missions.load()?;
    let al = align_missions(&[a, b], &cfg.align).map_err(|e| e.in_stage("align"))?;
    let out_err = |e: Error| e.in_stage("output");
    fs::create_dir_all(out).map_err(|e| Error::io(out, e)).map_err(out_err)?;
    for (m, dir) in al.graph.trajectories.iter().zip([MISSION_A_DIR, MISSION_B_DIR]) {
        write_mission(out.join(dir), m).map_err(out_err)?;
    }
    write_json(&out.join("closures.json"), &al.closures).map_err(out_err)?;
    write_json(&out.join("graph_report.json"), &al.report).map_err(out_err)?;
    cfg.save(out.join(CONFIG_FILE)).map_err(out_err)?;
    let accepted = al.closures.iter().filter(|c| c.accepted).count();
    println!("{accepted} of {} loop closures accepted", al.closures.len());
    Ok(())
}

fn run_detect(missions: &Missions, config: &ConfigArgs, truth: Option<&Path>, out: &Path) -> Result<()> {
    let cfg = config.resolve()?;
    let [a, b] = missions.load()?;
    let det = detect(&a, &b, &cfg)?;
    let metrics = match truth {
        Some(dir) => {
            let gt = read_ground_truth(dir).map_err(|e| e.in_stage("evaluate"))?;
            Some(evaluate_detection(&det, &gt, &cfg.eval).map_err(|e| e.in_stage("evaluate"))?)
        }
        None => None,
    };
    write_detection(out, &det, &cfg, metrics.as_ref()).map_err(|e| e.in_stage("output"))?;
    for t in &det.timings {
        log::info!("{:>10} {:8.2} s", t.stage, t.seconds);
    }
    println!(
        "{} changed voxels, {} segments, {} correspondences",
        det.report.changed_voxels,
        det.segments.len(),
        det.report.correspondences.len()
    );
    for c in &det.report.correspondences {
        println!(
            "  {:<8} class {} a {:?} b {:?} confidence {:.3}",
            format!("{:?}", c.kind).to_lowercase(),
            c.class,
            c.object_a,
            c.object_b,
            c.cluster_confidence
        );
    }
    if let Some(m) = metrics {
        println!("{}", m.table());
    }
    Ok(())
}

fn evaluate(report: &Path, dataset: &Path, config: &ConfigArgs) -> Result<()> {
    let cfg = config.resolve()?;
    let m = evaluate_dirs(report, dataset, &cfg.eval).map_err(|e| e.in_stage("evaluate"))?;
    println!("{}", m.table());
    Ok(())
}

fn describe(segments: &Path, config: &ConfigArgs, out: &Path) -> Result<()> {
    let cfg = config.resolve()?;
    let segs = import_segments(segments).map_err(|e| e.in_stage("input"))?;
    let thinned = thin_segments(&segs, &cfg).map_err(|e| e.in_stage("describe"))?;
    let objects = describe_all(&thinned, &cfg.describe).map_err(|e| e.in_stage("describe"))?;
    let rows: Vec<_> = objects.iter().map(|o| (o.segment.id, o.descriptor.clone())).collect();
    export_descriptors(out, &rows).map_err(|e| e.in_stage("output"))?;
    println!("described {} of {} segments", rows.len(), segs.len());
    Ok(())
}

fn run_match(segments: &Path, descriptors: &Path, config: &ConfigArgs, out: &Path) -> Result<()> {
    let cfg = config.resolve()?;
    let segs = import_segments(segments).map_err(|e| e.in_stage("input"))?;
    let known: BTreeSet<u64> = segs.iter().map(|s| s.id).collect();
    let rows = import_descriptors(descriptors, Some(&known)).map_err(|e| e.in_stage("input"))?;
    let missions: BTreeSet<_> = segs.iter().map(|s| s.mission).collect();
    if missions.len() > 2 {
        return Err(Error::InvalidArgument(format!("segments span {} missions, expected at most 2", missions.len())).in_stage("input"));
    }
    let mut ids = missions.iter().copied();
    let mission_a = ids.next().unwrap_or(1);
    let mission_b = ids.next().unwrap_or(mission_a);
    let thinned = thin_segments(&segs, &cfg).map_err(|e| e.in_stage("describe"))?;
    let objects = rows
        .into_iter()
        .map(|(id, descriptor)| match thinned.iter().find(|s| s.id == id) {
            Some(s) => Ok(DescribedObject {
                segment: s.clone(),
                descriptor,
            }),
            None => Err(Error::InvalidArgument(format!("segment {id} has too few points to describe")).in_stage("describe")),
        })
        .collect::<Result<Vec<_>>>()?;
    let grouping = group_objects(&objects, &thinned, mission_a, &cfg)?;
    let mut report = grouping.report();
    report.mission_a = mission_a;
    report.mission_b = mission_b;
    let used: Vec<_> = segs.into_iter().filter(|s| objects.iter().any(|o| o.segment.id == s.id)).collect();
    write_report(out, &report, &grouping.assignment.matrix, &used, None).map_err(|e| e.in_stage("output"))?;
    cfg.save(out.join(CONFIG_FILE)).map_err(|e| e.in_stage("output"))?;
    println!(
        "{} objects in {} classes, {} correspondences",
        objects.len(),
        grouping.clustering.as_ref().map_or(0, |c| c.k),
        report.correspondences.len()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate {
            scene,
            script,
            sim_config,
            seed,
            out,
        } => simulate(scene.as_deref(), script.as_deref(), sim_config.as_deref(), *seed, out).map_err(|e| e.in_stage("simulate")),
        Command::Align { missions, config, out } => align(missions, config, out),
        Command::Detect {
            missions,
            config,
            truth,
            out,
        } => run_detect(missions, config, truth.as_deref(), out),
        Command::Evaluate { report, dataset, config } => evaluate(report, dataset, config),
        Command::Describe { segments, config, out } => describe(segments, config, out),
        Command::Match {
            segments,
            descriptors,
            config,
            out,
        } => run_match(segments, descriptors, config, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
