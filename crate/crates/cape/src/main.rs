//! Command-line entry point: data generation, training, single-episode
//! planning, paired benchmarks, and parameter sweeps.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use cape::config::RunConfig;
use cape::datagen;
use cape::denoiser::{self, Denoiser};
use cape::experiments::{
    self, check_chi_profile, check_controller_ordering, check_lambda_robustness,
    check_limited_gap, check_m_delta_trend, check_refinement_economy, CheckOutcome,
    ExperimentEnv, SweepSpec,
};
use cape::planner::ControllerKind;
use cape::trajectory::path_length;
use cape::world::{self, ObsMode, Outcome, PlanSnapshot, Timing};

#[derive(Parser)]
#[command(name = "cape", version, about = "Collision-aware diffusion trajectory planning")]
struct Cli {
    /// Cap worker threads used for episode parallelism.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an obstacle-free demonstration dataset.
    GenData(GenDataArgs),
    /// Train the noise predictor and write a checkpoint.
    Train(TrainArgs),
    /// Generate a randomized scene file.
    GenScene(GenSceneArgs),
    /// Run one planning episode on a scene file.
    Plan(PlanArgs),
    /// Run the paired controller benchmark.
    Bench(BenchArgs),
    /// Sweep named parameters over paired scenes.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// Configuration file; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> anyhow::Result<RunConfig> {
        match &self.config {
            Some(path) => Ok(RunConfig::load(path)?),
            None => Ok(RunConfig::default()),
        }
    }
}

#[derive(Args)]
struct GenDataArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Output dataset path.
    #[arg(long)]
    out: PathBuf,
    /// Base demonstration count before augmentation.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Waypoints per trajectory.
    #[arg(long)]
    n: Option<usize>,
    /// Workspace dimension.
    #[arg(long)]
    dim: Option<usize>,
    /// Start-resampled variants per demonstration.
    #[arg(long)]
    k_per_traj: Option<usize>,
    /// Overwrite an existing output file.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Input dataset path.
    #[arg(long)]
    data: PathBuf,
    /// Output checkpoint path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Reduced-epoch training for smoke runs.
    #[arg(long)]
    quick: bool,
}

#[derive(Args)]
struct GenSceneArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    difficulty: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Trained checkpoint.
    #[arg(long)]
    ckpt: PathBuf,
    /// Scene file to plan in.
    #[arg(long)]
    scene: PathBuf,
    /// Controller: cape, mpd, or mpd-refine.
    #[arg(long, default_value = "cape")]
    controller: String,
    /// Guidance strength (lambda).
    #[arg(long)]
    lambda: Option<f64>,
    /// Prefix length (m).
    #[arg(long)]
    m: Option<usize>,
    /// Prior noise level (delta).
    #[arg(long)]
    delta: Option<usize>,
    /// Guidance start step (chi).
    #[arg(long)]
    chi: Option<usize>,
    /// Observation mode: full or limited.
    #[arg(long)]
    obs: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write per-iteration plan snapshots as JSON lines.
    #[arg(long)]
    dump_plans: Option<PathBuf>,
    /// Write an SVG overlay of the episode.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    ckpt: PathBuf,
    /// Output directory; defaults under the output root.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    difficulty: Option<String>,
    #[arg(long)]
    obs: Option<String>,
    #[arg(long)]
    scenes: Option<usize>,
    #[arg(long)]
    poses: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Drop to 20 episodes per cell.
    #[arg(long)]
    quick: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Swept parameter as name=v1,v2,...; repeatable (cartesian product).
    #[arg(long = "param")]
    params: Vec<String>,
    /// Comma-separated controllers.
    #[arg(long)]
    controllers: Option<String>,
    #[arg(long)]
    difficulty: Option<String>,
    #[arg(long)]
    obs: Option<String>,
    #[arg(long)]
    scenes: Option<usize>,
    #[arg(long)]
    poses: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Drop to 20 episodes per cell.
    #[arg(long)]
    quick: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: could not configure {jobs} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> anyhow::Result<u8> {
    match command {
        Command::GenData(args) => gen_data(args),
        Command::Train(args) => train(args),
        Command::GenScene(args) => gen_scene(args),
        Command::Plan(args) => plan(args),
        Command::Bench(args) => bench(args),
        Command::Sweep(args) => sweep(args),
    }
}

fn out_root() -> PathBuf {
    std::env::var_os("CAPE_OUT_ROOT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("cape-out"))
}

fn gen_data(args: GenDataArgs) -> anyhow::Result<u8> {
    let mut cfg = args.config.load()?;
    if let Some(count) = args.count {
        cfg.datagen.count = count;
    }
    if let Some(k) = args.k_per_traj {
        cfg.datagen.k_per_traj = k;
    }
    if let Some(n) = args.n {
        cfg.general.n = n;
    }
    if let Some(d) = args.dim {
        cfg.general.d = d;
    }
    cfg.validate()?;
    if cfg.datagen.count == 0 {
        bail!("--count must be positive");
    }
    if args.out.exists() && !args.force {
        bail!("{} already exists; pass --force to overwrite", args.out.display());
    }
    let seed = args.seed.unwrap_or(cfg.experiment.seed);
    let dataset = datagen::generate_dataset(
        &cfg.datagen_config(),
        cfg.general.n,
        cfg.general.d,
        &cfg.bounds(),
        seed,
    )?;
    datagen::write_dataset(&dataset, &args.out)?;
    println!(
        "wrote {} trajectories (n={}, d={}) to {}",
        dataset.meta.count,
        dataset.meta.n,
        dataset.meta.d,
        args.out.display()
    );
    Ok(0)
}

fn train(args: TrainArgs) -> anyhow::Result<u8> {
    let mut cfg = args.config.load()?;
    if let Some(lr) = args.lr {
        cfg.training.learning_rate = lr;
    }
    if let Some(batch) = args.batch {
        cfg.general.batch_size = batch;
    }
    if let Some(seed) = args.seed {
        cfg.training.seed = seed;
    }
    match (args.epochs, args.quick) {
        (Some(epochs), _) => cfg.training.epochs = epochs,
        (None, true) => cfg.training.epochs = 15,
        (None, false) => {}
    }
    cfg.validate()?;

    let dataset = datagen::read_dataset(&args.data)
        .with_context(|| format!("reading dataset {}", args.data.display()))?;
    let sched = cfg.schedule()?;
    let (model, report) =
        denoiser::train(&dataset, &cfg.training_config(), &cfg.denoiser_config(), &sched)?;
    denoiser::save_checkpoint(&model, &args.out)?;
    println!(
        "trained {} epochs on {} trajectories: loss {:.4} -> {:.4}; checkpoint {}",
        cfg.training.epochs,
        dataset.meta.count,
        report.initial_loss(),
        report.final_loss(),
        args.out.display()
    );
    Ok(0)
}

fn gen_scene(args: GenSceneArgs) -> anyhow::Result<u8> {
    let cfg = args.config.load()?;
    let difficulty = match &args.difficulty {
        Some(d) => d.parse()?,
        None => cfg.difficulty()?,
    };
    let scene = world::generate_scene(difficulty, args.seed, &cfg.bounds())?;
    world::write_scene(&scene, &args.out)?;
    println!(
        "wrote {difficulty} scene (seed {}, {} obstacles) to {}",
        args.seed,
        scene.obstacles.len(),
        args.out.display()
    );
    Ok(0)
}

fn load_model(path: &Path, cfg: &RunConfig) -> anyhow::Result<Denoiser> {
    let model = denoiser::load_checkpoint(path)
        .with_context(|| format!("loading checkpoint {}", path.display()))?;
    if model.diffusion_steps() != cfg.general.diffusion_steps {
        bail!(
            "checkpoint was trained with diffusion_steps={} but the configuration says {}",
            model.diffusion_steps(),
            cfg.general.diffusion_steps
        );
    }
    Ok(model)
}

fn plan(args: PlanArgs) -> anyhow::Result<u8> {
    let mut cfg = args.config.load()?;
    if let Some(lambda) = args.lambda {
        cfg.guidance.strength = lambda;
    }
    if let Some(m) = args.m {
        cfg.planner.prefix_length = m;
    }
    if let Some(delta) = args.delta {
        cfg.planner.prior_noise_level = delta;
    }
    if let Some(chi) = args.chi {
        cfg.guidance.start_step = chi;
    }
    if let Some(obs) = &args.obs {
        cfg.observation.mode = obs.clone();
    }
    cfg.validate()?;

    let controller: ControllerKind = args.controller.parse()?;
    let model = load_model(&args.ckpt, &cfg)?;
    let scene = world::read_scene(&args.scene)?;
    let sched = cfg.schedule()?;
    let pcfg = cfg.planner_config(controller)?;
    let gcfg = cfg.guidance_config();
    let obs = cfg.observation_model()?;

    let mut snapshots: Vec<PlanSnapshot> = Vec::new();
    let want_snaps = args.dump_plans.is_some() || args.plot.is_some();
    let record = world::run_episode(
        &scene,
        &model,
        &sched,
        &pcfg,
        &gcfg,
        &obs,
        args.seed,
        Timing::Wall,
        want_snaps.then_some(&mut snapshots),
    )?;

    if let Some(path) = &args.dump_plans {
        let mut file = fs::File::create(path)
            .with_context(|| format!("creating {}", path.display()))?;
        for snap in &snapshots {
            writeln!(file, "{}", serde_json::to_string(snap)?)?;
        }
        println!("wrote {} plan snapshots to {}", snapshots.len(), path.display());
    }
    if let Some(path) = &args.plot {
        let title = format!("{controller} on {} [{}]", args.scene.display(), record.outcome);
        cape::plots::write_episode_overlay(&scene, &record.executed_path, &snapshots, &title, path)?;
        println!("wrote overlay to {}", path.display());
    }

    let executed = cape::trajectory::rows_to_array(&record.executed_path);
    println!(
        "outcome: {}; model evals: {}; refines: {}; executed path length: {:.4}; wall time: {:.3}s",
        record.outcome,
        record.model_eval_count,
        record.refine_count,
        path_length(&executed),
        record.wall_time_secs
    );
    Ok(match record.outcome {
        Outcome::Success => 0,
        Outcome::Collision => 2,
        Outcome::NonCompletion => 3,
    })
}

fn prepare_out_dir(out_dir: &Path, cfg: &RunConfig) -> anyhow::Result<()> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    fs::write(out_dir.join("resolved.toml"), cfg.to_toml())
        .with_context(|| "writing resolved.toml")?;
    Ok(())
}

fn bench_csv(rows: &[experiments::BenchRow], result_meta: (&str, &str), path: &Path) -> anyhow::Result<()> {
    let mut text = String::from("controller,difficulty,obs_mode,sr,cr,ncr,mean_model_evals,mean_refine_hz,n\n");
    for row in rows {
        let s = &row.summary;
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            row.controller,
            result_meta.0,
            result_meta.1,
            s.sr(),
            s.cr(),
            s.ncr(),
            s.mean_model_evals,
            s.mean_refine_hz,
            s.episodes
        ));
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn bench(args: BenchArgs) -> anyhow::Result<u8> {
    let mut cfg = args.config.load()?;
    if let Some(difficulty) = &args.difficulty {
        cfg.experiment.difficulty = difficulty.clone();
    }
    if let Some(obs) = &args.obs {
        cfg.observation.mode = obs.clone();
    }
    if let Some(scenes) = args.scenes {
        cfg.experiment.scenes = scenes;
    }
    if let Some(poses) = args.poses {
        cfg.experiment.poses = poses;
    }
    if let Some(seed) = args.seed {
        cfg.experiment.seed = seed;
    }
    if args.quick {
        cfg.experiment.scenes = 10;
        cfg.experiment.poses = 2;
    }
    cfg.validate()?;

    let model = load_model(&args.ckpt, &cfg)?;
    let sched = cfg.schedule()?;
    let difficulty = cfg.difficulty()?;
    let obs_mode = cfg.observation_model()?.mode;
    let controllers = cfg.controllers()?;
    let out_dir = args.out_dir.unwrap_or_else(|| {
        out_root().join(format!("bench-{difficulty}-{obs_mode}"))
    });
    prepare_out_dir(&out_dir, &cfg)?;

    let env = ExperimentEnv {
        model: &model,
        sched: &sched,
        bounds: cfg.bounds(),
        guidance: cfg.guidance_config(),
        planner: cfg.planner_config(ControllerKind::Cape)?,
        observation: cfg.observation_model()?,
        timing: Timing::Wall,
        root_seed: cfg.experiment.seed,
    };
    let result = experiments::run_benchmark(
        &env,
        difficulty,
        obs_mode,
        &controllers,
        cfg.experiment.scenes,
        cfg.experiment.poses,
    )?;

    bench_csv(&result.rows, (difficulty.name(), &obs_mode.to_string()), &out_dir.join("results.csv"))?;
    let scene_dir = out_dir.join("scenes");
    fs::create_dir_all(&scene_dir).with_context(|| format!("creating {}", scene_dir.display()))?;
    for (i, episode_idx) in (0..result.scenes.len()).step_by(cfg.experiment.poses).enumerate() {
        world::write_scene(&result.scenes[episode_idx], &scene_dir.join(format!("scene_{i:02}.txt")))?;
    }
    experiments::emit_bench_plots(&result, cfg.experiment.poses, &out_dir.join("plots"))?;

    let mut checks: Vec<CheckOutcome> = Vec::new();
    let have = |kind: ControllerKind| result.row(kind).is_some();
    if have(ControllerKind::Cape) && have(ControllerKind::Mpd) && have(ControllerKind::MpdRefine) {
        checks.extend(check_controller_ordering(&result));
    }
    if have(ControllerKind::Cape) && have(ControllerKind::MpdRefine) {
        checks.extend(check_refinement_economy(
            &result,
            cfg.planner.prior_noise_level,
            cfg.general.diffusion_steps,
        ));
    }
    if obs_mode == ObsMode::Limited && have(ControllerKind::Cape) && have(ControllerKind::Mpd) {
        checks.push(check_limited_gap(&result));
    }
    experiments::write_verdict(&checks, &out_dir.join("verdict.json"))?;

    for row in &result.rows {
        let s = &row.summary;
        println!(
            "{:<11} sr {:.2}  cr {:.2}  ncr {:.2}  evals {:>7.1}  refine {:>6.2} Hz  (n={})",
            row.controller.to_string(),
            s.sr(),
            s.cr(),
            s.ncr(),
            s.mean_model_evals,
            s.mean_refine_hz,
            s.episodes
        );
    }
    for check in &checks {
        println!("[{}] {}: {}", if check.pass { "pass" } else { "FAIL" }, check.id, check.detail);
    }
    println!("results in {}", out_dir.display());
    Ok(0)
}

fn parse_param(raw: &str) -> anyhow::Result<(String, Vec<f64>)> {
    let (name, values) = raw
        .split_once('=')
        .ok_or_else(|| anyhow!("--param expects name=v1,v2,..., got '{raw}'"))?;
    let values: Vec<f64> = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| anyhow!("invalid value '{v}' for parameter {name}")))
        .collect::<anyhow::Result<_>>()?;
    Ok((name.to_string(), values))
}

fn sweep(args: SweepArgs) -> anyhow::Result<u8> {
    let mut cfg = args.config.load()?;
    if let Some(difficulty) = &args.difficulty {
        cfg.experiment.difficulty = difficulty.clone();
    }
    if let Some(obs) = &args.obs {
        cfg.observation.mode = obs.clone();
    }
    if let Some(scenes) = args.scenes {
        cfg.experiment.scenes = scenes;
    }
    if let Some(poses) = args.poses {
        cfg.experiment.poses = poses;
    }
    if let Some(seed) = args.seed {
        cfg.experiment.seed = seed;
    }
    if let Some(controllers) = &args.controllers {
        cfg.experiment.controllers = controllers.split(',').map(|s| s.trim().to_string()).collect();
    }
    if args.quick {
        cfg.experiment.scenes = 10;
        cfg.experiment.poses = 2;
    }
    cfg.validate()?;
    if args.params.is_empty() {
        bail!("sweep needs at least one --param name=v1,v2,...");
    }
    let grid: Vec<(String, Vec<f64>)> =
        args.params.iter().map(|p| parse_param(p)).collect::<anyhow::Result<_>>()?;

    let model = load_model(&args.ckpt, &cfg)?;
    let sched = cfg.schedule()?;
    let spec = SweepSpec {
        grid,
        controllers: cfg.controllers()?,
        difficulty: cfg.difficulty()?,
        obs_mode: cfg.observation_model()?.mode,
        n_scenes: cfg.experiment.scenes,
        n_poses: cfg.experiment.poses,
    };
    let out_dir = args.out_dir.unwrap_or_else(|| {
        let names: Vec<&str> = spec.grid.iter().map(|(n, _)| n.as_str()).collect();
        out_root().join(format!("sweep-{}", names.join("-")))
    });
    prepare_out_dir(&out_dir, &cfg)?;

    let env = ExperimentEnv {
        model: &model,
        sched: &sched,
        bounds: cfg.bounds(),
        guidance: cfg.guidance_config(),
        planner: cfg.planner_config(ControllerKind::Cape)?,
        observation: cfg.observation_model()?,
        timing: Timing::Wall,
        root_seed: cfg.experiment.seed,
    };
    let rows = experiments::run_sweep(&env, &spec, &out_dir.join("results.csv"))?;
    experiments::emit_sweep_plots(&spec, &rows, &out_dir.join("plots"))?;

    let swept: Vec<&str> = spec.grid.iter().map(|(n, _)| n.as_str()).collect();
    let mut checks: Vec<CheckOutcome> = Vec::new();
    if swept.contains(&"lambda")
        && spec.controllers.contains(&ControllerKind::Cape)
        && spec.controllers.contains(&ControllerKind::MpdRefine)
    {
        checks.push(check_lambda_robustness(&rows));
    }
    if swept.contains(&"m") && swept.contains(&"delta") {
        checks.push(check_m_delta_trend(&rows));
    }
    if swept.contains(&"chi") {
        checks.push(check_chi_profile(&rows));
    }
    experiments::write_verdict(&checks, &out_dir.join("verdict.json"))?;

    for row in &rows {
        let params: Vec<String> =
            row.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!(
            "{:<11} {:<24} sr {:.2}  cr {:.2}  (n={})",
            row.controller.to_string(),
            params.join(" "),
            row.summary.sr(),
            row.summary.cr(),
            row.summary.episodes
        );
    }
    for check in &checks {
        println!("[{}] {}: {}", if check.pass { "pass" } else { "FAIL" }, check.id, check.detail);
    }
    println!("results in {}", out_dir.display());
    Ok(0)
}
