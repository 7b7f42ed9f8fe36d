mod render;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use simdiff::config::{parse_delta, RunConfig};
use simdiff::io::{read_cloud_bin, read_poses, write_cloud_bin};
use simdiff::scene::{make_synthetic_scene, SceneKind};
use simdiff::tasks::{
    recast_rows_to_text, run_recast_eval, run_sweep, run_task, straight_trajectory, Context, DenoiserChoice, Placement,
    Scan, SweepAxis, TaskKind, TaskSpec,
};
use simdiff::{Error, RigidTransform};

#[derive(Parser, Debug)]
#[command(name = "simdiff", version, about = "Multi-view consistent diffusion sampling for LiDAR scans")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Weight of the consistent image in the per-step blend.
    #[arg(long, global = true)]
    omega: Option<f64>,
    /// Depth disagreement limit in meters, or "inf".
    #[arg(long, global = true)]
    delta: Option<String>,
    #[arg(long, global = true)]
    steps: Option<usize>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    fov_up: Option<f64>,
    #[arg(long, global = true)]
    fov_down: Option<f64>,
    #[arg(long, global = true)]
    height: Option<usize>,
    #[arg(long, global = true)]
    width: Option<usize>,
    /// Use only the first N synthetic views of the placement.
    #[arg(long, global = true)]
    views: Option<usize>,
    /// none | circle:r[,n] | circles[:r1,r2..] | road:o1,o2.. | trajectory:stride,count
    #[arg(long, global = true)]
    placement: Option<String>,
    /// oracle | prior | zero | remote:tcp:<host:port> | remote:exec:<command>
    #[arg(long, global = true)]
    denoiser: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Completion distance threshold in meters (a chosen default, not a published one).
    #[arg(long, global = true)]
    tau: Option<f64>,
    /// Drop the ancestral noise term (z = 0).
    #[arg(long, global = true)]
    deterministic: bool,
    /// Built-in synthetic scene used when no --input is given.
    #[arg(long, global = true, value_enum, default_value = "room")]
    scene: SceneArg,
    /// Scan in KITTI .bin format.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Pose file with one `frame r00 .. tz` line per frame.
    #[arg(long, global = true)]
    poses: Option<PathBuf>,
    /// Frame of the input scan in the pose file.
    #[arg(long, global = true, default_value_t = 0)]
    frame: usize,
    /// Ground-truth world point set (.bin) for scene completion with file input.
    #[arg(long, global = true)]
    truth: Option<PathBuf>,
    /// Output directory for images, clouds and reports.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print JSON instead of key=value.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SceneArg {
    Room,
    Corridor,
    Occluders,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum TaskArg {
    Densify,
    Inpaint,
    NovelView,
    SceneComplete,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fill in beams removed from the scan.
    Densify {
        #[arg(long)]
        keep_every: Option<usize>,
    },
    /// Fill in an angular gap.
    Inpaint {
        #[arg(long)]
        gap_center: Option<f64>,
        #[arg(long)]
        gap_width: Option<f64>,
        /// Gap as a fraction of the full turn; overrides --gap-width.
        #[arg(long)]
        missing_fraction: Option<f64>,
    },
    /// Generate scans further along the trajectory.
    NovelView {
        #[arg(long, default_value_t = 5)]
        stride: usize,
        #[arg(long, default_value_t = 7)]
        count: usize,
    },
    /// Generate views around the scan and score the merged cloud.
    SceneComplete,
    /// Coverage and depth error of plain recasting along the trajectory.
    RecastEval {
        #[arg(long, default_value_t = 5)]
        stride: usize,
        #[arg(long, default_value_t = 7)]
        count: usize,
    },
    /// Repeat a task over values of one parameter.
    Sweep {
        #[arg(long, value_enum)]
        task: TaskArg,
        /// omega | delta | views | placement
        #[arg(long)]
        axis: String,
        /// Values separated by ';' (placements contain commas).
        #[arg(long)]
        values: String,
        #[arg(long, default_value_t = 5)]
        stride: usize,
        #[arg(long, default_value_t = 7)]
        count: usize,
    },
    /// Print the effective configuration as TOML.
    ShowConfig,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_denoiser_error() {
        4
    } else if matches!(e, Error::InvalidParameter(_)) {
        2
    } else {
        3
    }
}

fn effective_config(c: &Common) -> simdiff::Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let s = &mut cfg.sensor;
    s.height = c.height.unwrap_or(s.height);
    s.width = c.width.unwrap_or(s.width);
    s.fov_up = c.fov_up.unwrap_or(s.fov_up);
    s.fov_down = c.fov_down.unwrap_or(s.fov_down);
    s.alpha = c.alpha.unwrap_or(s.alpha);
    let m = &mut cfg.sampler;
    m.steps = c.steps.unwrap_or(m.steps);
    m.omega = c.omega.unwrap_or(m.omega);
    if let Some(d) = &c.delta {
        m.delta = parse_delta(d)?;
    }
    m.seed = c.seed.unwrap_or(m.seed);
    if c.deterministic {
        m.stochastic = false;
    }
    let t = &mut cfg.task;
    if let Some(p) = &c.placement {
        t.placement = p.clone();
    }
    if let Some(d) = &c.denoiser {
        t.denoiser = d.clone();
    }
    t.tau = c.tau.unwrap_or(t.tau);
    if c.input.is_some() {
        cfg.paths.input = c.input.clone();
    }
    if c.poses.is_some() {
        cfg.paths.poses = c.poses.clone();
    }
    if c.out.is_some() {
        cfg.paths.output = c.out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn poses_by_frame(path: &Path) -> simdiff::Result<Vec<RigidTransform>> {
    let mut records = read_poses(path)?;
    records.sort_by_key(|r| r.frame_index);
    let mut out = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        if r.frame_index != i {
            return Err(Error::Format(format!("pose file has no frame {i}")));
        }
        out.push(r.world_from_sensor);
    }
    Ok(out)
}

fn build_context(c: &Common, cfg: &RunConfig) -> simdiff::Result<(Context, Scan)> {
    let sensor = cfg.sensor_model()?;
    let sampler = cfg.sampler_config()?;
    let denoiser: DenoiserChoice = cfg.task.denoiser.parse()?;
    let mut ctx = Context::new(sensor, sampler, denoiser);
    ctx.tau = cfg.task.tau;
    let scan = match &cfg.paths.input {
        Some(input) => {
            let cloud = read_cloud_bin(input)?;
            if let Some(p) = &cfg.paths.poses {
                ctx.trajectory = poses_by_frame(p)?;
                ctx.start_frame = c.frame;
            }
            let pose = ctx.trajectory.get(c.frame).copied().unwrap_or_else(RigidTransform::identity);
            if let Some(t) = &c.truth {
                ctx.completion_truth = Some(simdiff::WorldPointSet::from_cloud(&read_cloud_bin(t)?, 0));
            }
            Scan { cloud, pose }
        }
        None => {
            let kind = match c.scene {
                SceneArg::Room => SceneKind::Room,
                SceneArg::Corridor => SceneKind::Corridor,
                SceneArg::Occluders => SceneKind::Occluders,
            };
            let scene = make_synthetic_scene(kind, cfg.sampler.seed);
            let pose = RigidTransform::identity();
            let cloud = scene.scan(&pose, &ctx.sensor, cfg.sampler.seed);
            ctx.trajectory = straight_trajectory(&pose, 200, 1.0);
            ctx = ctx.with_scene(scene);
            Scan { cloud, pose }
        }
    };
    Ok((ctx, scan))
}

fn task_spec(task: TaskArg, cfg: &RunConfig, views: Option<usize>, stride: usize, count: usize) -> simdiff::Result<TaskSpec> {
    let kind = match task {
        TaskArg::Densify => TaskKind::Densify {
            keep_every: cfg.task.keep_every,
        },
        TaskArg::Inpaint => TaskKind::Inpaint {
            center_deg: cfg.task.gap_center_deg,
            width_deg: cfg.task.gap_width_deg,
        },
        TaskArg::NovelView => TaskKind::NovelView { stride, count },
        TaskArg::SceneComplete => TaskKind::SceneComplete,
    };
    let placement: Placement = cfg.task.placement.parse()?;
    Ok(TaskSpec {
        kind,
        placement,
        max_views: views,
    })
}

fn write_text(dir: Option<&Path>, name: &str, text: &str) -> simdiff::Result<()> {
    if let Some(d) = dir {
        std::fs::create_dir_all(d)?;
        std::fs::write(d.join(name), text)?;
    }
    Ok(())
}

fn run(cli: Cli) -> simdiff::Result<()> {
    let mut cfg = effective_config(&cli.common)?;
    let (task, stride, count) = match &cli.command {
        Command::ShowConfig => {
            print!("{}", cfg.to_toml());
            return Ok(());
        }
        Command::Densify { keep_every } => {
            cfg.task.keep_every = keep_every.unwrap_or(cfg.task.keep_every);
            (TaskArg::Densify, 5, 7)
        }
        Command::Inpaint {
            gap_center,
            gap_width,
            missing_fraction,
        } => {
            cfg.task.gap_center_deg = gap_center.unwrap_or(cfg.task.gap_center_deg);
            cfg.task.gap_width_deg = gap_width.unwrap_or(cfg.task.gap_width_deg);
            if let Some(f) = missing_fraction {
                if !(0.0..1.0).contains(f) {
                    return Err(Error::InvalidParameter(format!("missing fraction {f} outside [0, 1)")));
                }
                cfg.task.gap_width_deg = f * 360.0;
            }
            (TaskArg::Inpaint, 5, 7)
        }
        Command::NovelView { stride, count } => (TaskArg::NovelView, *stride, *count),
        Command::SceneComplete => (TaskArg::SceneComplete, 5, 7),
        Command::RecastEval { stride, count } => {
            let (ctx, scan) = build_context(&cli.common, &cfg)?;
            let rows = run_recast_eval(&ctx, &scan, *stride, *count)?;
            let text = recast_rows_to_text(&rows);
            let json = serde_json::to_string_pretty(&rows).expect("rows serialize");
            print!("{}", if cli.common.json { &json } else { &text });
            write_text(cfg.paths.output.as_deref(), "recast.txt", &text)?;
            write_text(cfg.paths.output.as_deref(), "recast.json", &json)?;
            return Ok(());
        }
        Command::Sweep {
            task,
            axis,
            values,
            stride,
            count,
        } => {
            let axis: SweepAxis = axis.parse()?;
            let values: Vec<String> = values.split(';').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
            let spec = task_spec(*task, &cfg, cli.common.views, *stride, *count)?;
            let (mut ctx, scan) = build_context(&cli.common, &cfg)?;
            let table = run_sweep(&mut ctx, &scan, &spec, axis, &values)?;
            print!("{}", if cli.common.json { table.to_json() } else { table.to_text() });
            let out = cfg.paths.output.as_deref();
            write_text(out, "sweep.txt", &table.to_text())?;
            write_text(out, "sweep.csv", &table.to_csv())?;
            write_text(out, "sweep.json", &table.to_json())?;
            return Ok(());
        }
    };
    let spec = task_spec(task, &cfg, cli.common.views, stride, count)?;
    let (ctx, scan) = build_context(&cli.common, &cfg)?;
    let outcome = run_task(&ctx, &scan, &spec)?;
    let report = if cli.common.json { outcome.to_json() } else { outcome.to_key_values() };
    print!("{report}");
    if let Some(dir) = cfg.paths.output.as_deref() {
        render::render_outputs(&outcome, dir)?;
        write_text(Some(dir), "report.txt", &outcome.to_key_values())?;
        write_text(Some(dir), "report.json", &outcome.to_json())?;
        write_text(Some(dir), "config.toml", &cfg.to_toml())?;
        if let Some(world) = &outcome.world {
            write_cloud_bin(&world.to_cloud(), dir.join("world.bin"))?;
        }
    }
    Ok(())
}
