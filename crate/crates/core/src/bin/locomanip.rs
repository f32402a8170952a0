//! Command-line entry point: plan scenarios, generate classifier training
//! data, train the classifier, benchmark edge evaluators, and export region
//! grids — all driven by one TOML scenario config.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use locomanip::config::{ConfigError, EvaluatorMode, ScenarioConfig};
use locomanip::feasibility::{
    dataset_to_string, foot_region_grid, generate_dataset, hand_region_grid, parse_dataset, train,
    FootGridSpec, HandGridEvaluator, HandGridSpec, HandHomePoses, MlpModel,
};
use locomanip::planner::{
    reconstruct, search, ClassifierEvaluator, IkOracleEvaluator, PlanError, SearchProblem,
    SuggestedPath,
};
use locomanip::scenario::sample_bounds_for_model;
use locomanip::transition::Transition;
use locomanip::Side;

#[derive(Parser)]
#[command(name = "locomanip", about = "Humanoid locomanipulation planning toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's rng seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's evaluator mode.
    #[arg(long, value_parser = parse_evaluator)]
    evaluator: Option<EvaluatorMode>,
}

fn parse_evaluator(s: &str) -> Result<EvaluatorMode, String> {
    match s {
        "classifier" => Ok(EvaluatorMode::Classifier),
        "ik-oracle" => Ok(EvaluatorMode::IkOracle),
        other => Err(format!("expected classifier|ik-oracle, got '{other}'")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Search for a locomanipulation plan and write the plan artifacts.
    Plan(Common),
    /// Generate IK-labeled training data for the feasibility classifier.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Number of samples (stratified across the six transition types).
        #[arg(long, default_value_t = 600)]
        count: usize,
        /// Worker threads.
        #[arg(long, default_value_t = 4)]
        parallelism: usize,
    },
    /// Train the classifier on a generated dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset file produced by gen-data.
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Benchmark classifier vs IK-oracle edge checks on identical edges.
    BenchEdges {
        #[command(flatten)]
        common: Common,
        /// Number of random edges to time.
        #[arg(long, default_value_t = 50)]
        count: usize,
    },
    /// Export a feasibility region grid.
    Region(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, run): (&Common, fn(&Ctx) -> Result<(), CmdError>) = match &cli.command {
        Command::Plan(c) => (c, cmd_plan),
        Command::GenData { common, .. } => (common, cmd_gen_data),
        Command::Train { common, .. } => (common, cmd_train),
        Command::BenchEdges { common, .. } => (common, cmd_bench_edges),
        Command::Region(c) => (c, cmd_region),
    };
    let ctx = match Ctx::prepare(&cli, common) {
        Ok(ctx) => ctx,
        Err(e) => return fail(e),
    };
    match run(&ctx) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}

#[derive(Debug)]
enum CmdError {
    Config(ConfigError),
    NoPlanFound(String),
    ReconstructionFailed(usize),
    Other(String),
}

impl From<ConfigError> for CmdError {
    fn from(e: ConfigError) -> Self {
        CmdError::Config(e)
    }
}

/// Machine-readable failure line plus the exit code.
fn fail(e: CmdError) -> ExitCode {
    let (token, detail, code) = match &e {
        CmdError::Config(ConfigError::MissingFile(p)) => {
            ("missing-file".to_string(), p.display().to_string(), 2)
        }
        CmdError::Config(c) => ("invalid-config".to_string(), c.to_string(), 2),
        CmdError::NoPlanFound(d) => ("no-plan-found".to_string(), d.clone(), 3),
        CmdError::ReconstructionFailed(idx) => {
            ("reconstruction-failed".to_string(), format!("edge {idx}"), 4)
        }
        CmdError::Other(d) => ("error".to_string(), d.clone(), 1),
    };
    eprintln!("error: {token}: {detail}");
    ExitCode::from(code)
}

/// Resolved command context.
struct Ctx {
    cli_count: usize,
    cli_parallelism: usize,
    cli_dataset: Option<PathBuf>,
    config: ScenarioConfig,
    base: PathBuf,
    out_dir: PathBuf,
}

impl Ctx {
    fn prepare(cli: &Cli, common: &Common) -> Result<Self, CmdError> {
        let mut config = ScenarioConfig::load(&common.config)?;
        if let Some(seed) = common.seed {
            config.seed = seed;
        }
        if let Some(ev) = common.evaluator {
            config.evaluator = ev;
        }
        let base = common.config.parent().unwrap_or(Path::new(".")).to_path_buf();
        // Re-validate after overrides (e.g. switching to classifier mode).
        config.validate(&base)?;
        let out_dir = common.out.clone().unwrap_or_else(|| PathBuf::from(&config.out_dir));
        std::fs::create_dir_all(&out_dir)
            .map_err(|e| CmdError::Other(format!("creating {}: {e}", out_dir.display())))?;
        let (cli_count, cli_parallelism, cli_dataset) = match &cli.command {
            Command::GenData { count, parallelism, .. } => (*count, *parallelism, None),
            Command::BenchEdges { count, .. } => (*count, 1, None),
            Command::Train { dataset, .. } => (0, 1, Some(dataset.clone())),
            _ => (0, 1, None),
        };
        Ok(Self { cli_count, cli_parallelism, cli_dataset, config, base, out_dir })
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CmdError> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| CmdError::Other(format!("writing {}: {e}", path.display())))?;
        Ok(path)
    }
}

fn cmd_plan(ctx: &Ctx) -> Result<(), CmdError> {
    let (model, scenario) = ctx.config.build_scenario(&ctx.base).map_err(|e| match e {
        ConfigError::Scenario(s) => CmdError::NoPlanFound(s.to_string()),
        other => CmdError::Config(other),
    })?;
    let lattice = &ctx.config.lattice;
    let weights = &ctx.config.weights;
    let frame = scenario.lattice_frame();
    let suggested =
        SuggestedPath::new(&scenario.manipulation, &scenario.start_left, &scenario.start_right)
            .map_err(|e| CmdError::Other(e.to_string()))?;
    let start = scenario.start_vertex(lattice);
    let oracle_mode = ctx.config.evaluator == EvaluatorMode::IkOracle;
    let problem = SearchProblem {
        lattice,
        frame: &frame,
        weights,
        manipulation: &scenario.manipulation,
        suggested: &suggested,
        q_start: Some(&scenario.q_start),
    };

    let classifier = if oracle_mode {
        None
    } else {
        let path = ScenarioConfig::resolve(&ctx.base, &ctx.config.classifier_model);
        Some(MlpModel::load(&path).map_err(|e| CmdError::Other(e.to_string()))?)
    };
    let outcome = if let Some(mlp) = &classifier {
        let home =
            HandHomePoses::from_model(&model).map_err(|e| CmdError::Other(e.to_string()))?;
        let pelvis_height = locomanip::feasibility::nominal_pelvis_height(&model)
            .map_err(|e| CmdError::Other(e.to_string()))?;
        let mut evaluator = ClassifierEvaluator {
            scorer: mlp,
            manipulation: &scenario.manipulation,
            home,
            pelvis_height,
            n_m: ctx.config.n_m,
        };
        search(&problem, start, &mut evaluator, ctx.config.seed)
    } else {
        let mut evaluator = IkOracleEvaluator {
            model: &model,
            manipulation: &scenario.manipulation,
            gait: scenario.gait,
            ik: ctx.config.ik,
        };
        search(&problem, start, &mut evaluator, ctx.config.seed)
    };
    let outcome = outcome.map_err(|e| match e {
        PlanError::NoPlanFound { expansions } => {
            CmdError::NoPlanFound(format!("queue exhausted after {expansions} expansions"))
        }
        other => CmdError::Other(other.to_string()),
    })?;

    let plan = reconstruct(
        outcome,
        &model,
        &scenario.manipulation,
        &scenario.gait,
        &ctx.config.ik,
        lattice,
        &frame,
        &scenario.q_start,
        oracle_mode,
    )
    .map_err(|e| match e {
        PlanError::ReconstructionFailed { edge_index } => {
            CmdError::ReconstructionFailed(edge_index)
        }
        other => CmdError::Other(other.to_string()),
    })?;

    ctx.write("plan.txt", &plan.plan_file(lattice, &frame))?;
    ctx.write("trajectory.txt", &plan.trajectory_file())?;
    ctx.write("metrics.txt", &plan.metrics.report())?;
    println!(
        "plan found: cost {:.3}, {} edges, {} footsteps, s reaches {:.2}",
        plan.total_cost,
        plan.actions.len(),
        plan.footsteps.len(),
        plan.trajectory.last().map(|p| p.s).unwrap_or(0.0)
    );
    print!("{}", plan.metrics.report());
    Ok(())
}

fn cmd_gen_data(ctx: &Ctx) -> Result<(), CmdError> {
    let model = ctx.config.load_model(&ctx.base)?;
    let gait = ctx.config.gait_params(&model)?;
    let bounds = resolved_bounds(ctx, &model);
    let data = generate_dataset(
        &model,
        &bounds,
        &gait,
        &ctx.config.ik,
        ctx.cli_count,
        ctx.config.seed,
        ctx.cli_parallelism,
    )
    .map_err(|e| CmdError::Other(e.to_string()))?;
    let feasible = data.iter().filter(|e| e.label).count();
    let path = ctx.write("dataset.txt", &dataset_to_string(&data))?;
    println!(
        "generated {} samples ({} feasible, {:.1}%) -> {}",
        data.len(),
        feasible,
        100.0 * feasible as f64 / data.len().max(1) as f64,
        path.display()
    );
    Ok(())
}

/// Sampling bounds with the model-derived pelvis height when the config
/// leaves it at zero.
fn resolved_bounds(
    ctx: &Ctx,
    model: &locomanip::RobotModel,
) -> locomanip::feasibility::SampleBounds {
    let mut bounds = ctx.config.sampling;
    if bounds.pelvis_z == (0.0, 0.0) {
        bounds.pelvis_z = sample_bounds_for_model(model).pelvis_z;
    }
    bounds
}

fn cmd_train(ctx: &Ctx) -> Result<(), CmdError> {
    let dataset_path = ctx.cli_dataset.as_ref().expect("train always passes a dataset");
    if !dataset_path.exists() {
        return Err(CmdError::Config(ConfigError::MissingFile(dataset_path.clone())));
    }
    let text = std::fs::read_to_string(dataset_path)
        .map_err(|e| CmdError::Other(format!("reading dataset: {e}")))?;
    let data = parse_dataset(&text).map_err(|e| CmdError::Other(e.to_string()))?;
    let mut settings = ctx.config.train;
    settings.seed = ctx.config.seed;
    let (mlp, metrics) = train(&data, &settings).map_err(|e| CmdError::Other(e.to_string()))?;
    let model_path = ctx.out_dir.join("classifier.bin");
    mlp.save(&model_path).map_err(|e| CmdError::Other(e.to_string()))?;
    ctx.write("train_metrics.txt", &metrics.report())?;
    println!(
        "trained on {} examples: val accuracy {:.3}, val AUC {:.3} -> {}",
        metrics.train_count,
        metrics.validation_accuracy,
        metrics.validation_auc,
        model_path.display()
    );
    Ok(())
}

fn cmd_bench_edges(ctx: &Ctx) -> Result<(), CmdError> {
    use rand::Rng;
    use rand::SeedableRng;
    let (model, scenario) = ctx.config.build_scenario(&ctx.base)?;
    let classifier_path = ScenarioConfig::resolve(&ctx.base, &ctx.config.classifier_model);
    let mlp = if ctx.config.classifier_model.is_empty() {
        // Benchmarking only needs a deterministic network of the right shape.
        MlpModel::new_random(ctx.config.seed)
    } else {
        MlpModel::load(&classifier_path).map_err(|e| CmdError::Other(e.to_string()))?
    };
    let home = HandHomePoses::from_model(&model).map_err(|e| CmdError::Other(e.to_string()))?;
    let pelvis_height = locomanip::feasibility::nominal_pelvis_height(&model)
        .map_err(|e| CmdError::Other(e.to_string()))?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(ctx.config.seed);
    let lattice = &ctx.config.lattice;

    // Random edges around the start stance: one footstep from the template,
    // possibly with a progression increment.
    let mut edges = Vec::new();
    for _ in 0..ctx.cli_count.max(1) {
        let side = if rng.gen_bool(0.5) { Side::Left } else { Side::Right };
        let offset = lattice.step_offsets[rng.gen_range(0..lattice.step_offsets.len())];
        let (dy, dyaw) = match side {
            Side::Left => (offset[1], offset[2]),
            Side::Right => (-offset[1], -offset[2]),
        };
        let stance = match side {
            Side::Left => scenario.start_right,
            Side::Right => scenario.start_left,
        };
        let local = locomanip::FramePose::from_xy_yaw(offset[0], dy, dyaw);
        let world =
            locomanip::FramePose::from_isometry(&(stance.to_isometry() * local.to_isometry()));
        let pose =
            locomanip::FramePose::from_xy_yaw(world.position.x, world.position.y, world.yaw());
        let ds = [0.0, 0.05][rng.gen_range(0..2)];
        edges.push((side, pose, ds));
    }

    // IK-oracle timing.
    let mut ik_times = Vec::new();
    for (side, pose, ds) in &edges {
        let t = Transition {
            left: scenario.start_left,
            right: scenario.start_right,
            step: Some(locomanip::locomotion::Footstep { side: *side, pose: *pose }),
            s_start: 0.0,
            delta_s: *ds,
        };
        let te = Instant::now();
        let _ = t.solve(
            &model,
            &scenario.q_start,
            Some(&scenario.manipulation),
            &scenario.gait,
            &ctx.config.ik,
        );
        ik_times.push(te.elapsed().as_secs_f64());
    }

    // Classifier timing on the identical edges.
    let frame = scenario.lattice_frame();
    let start = scenario.start_vertex(lattice);
    let mut cls_times = Vec::new();
    let mut acc = 0.0;
    for (side, pose, ds) in &edges {
        let idx = frame.snap(pose, lattice);
        let v2 = start.with_foot(*side, idx);
        let v2 = locomanip::planner::Vertex {
            s: ((*ds / lattice.s_resolution).round() as i32).min(lattice.s_steps()),
            ..v2
        };
        let pelvis = locomanip::feasibility::stance_pelvis_pose(
            &scenario.start_left,
            &scenario.start_right,
            pelvis_height,
        );
        let query = locomanip::feasibility::ScoreQuery {
            v1_left: scenario.start_left,
            v1_right: scenario.start_right,
            v2_left: frame.world_pose(v2.left, lattice),
            v2_right: frame.world_pose(v2.right, lattice),
            swing: *side,
            has_step: true,
            manipulation: &scenario.manipulation,
            s: 0.0,
            delta_s: *ds,
            n_m: ctx.config.n_m,
            pelvis,
            home: &home,
        };
        let te = Instant::now();
        acc += locomanip::feasibility::feasibility_score(&mlp, &query)
            .map_err(|e| CmdError::Other(e.to_string()))?;
        cls_times.push(te.elapsed().as_secs_f64());
    }
    std::hint::black_box(acc);

    let stats = |xs: &[f64]| {
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        (mean, var.sqrt())
    };
    let (ik_mean, ik_std) = stats(&ik_times);
    let (cls_mean, cls_std) = stats(&cls_times);
    let ratio = ik_mean / cls_mean;
    let report = format!(
        "# edge feasibility check performance over {} identical edges\nIK Trajectory (s/edge) {:.6} +- {:.6}\nNeural Network Classifier (s/edge) {:.9} +- {:.9}\nSpeedup Ratio {:.1}\n",
        edges.len(),
        ik_mean,
        ik_std,
        cls_mean,
        cls_std,
        ratio
    );
    ctx.write("bench_edges.txt", &report)?;
    print!("{report}");
    Ok(())
}

fn cmd_region(ctx: &Ctx) -> Result<(), CmdError> {
    let model = ctx.config.load_model(&ctx.base)?;
    let gait = ctx.config.gait_params(&model)?;
    let region = &ctx.config.region;
    let (left, right) = ctx.config.start_poses();
    let hand = if region.hand == "left" { Side::Left } else { Side::Right };
    let swing = if region.swing == "left" { Side::Left } else { Side::Right };
    let classifier = match ctx.config.evaluator {
        EvaluatorMode::Classifier => {
            let path = ScenarioConfig::resolve(&ctx.base, &ctx.config.classifier_model);
            Some(MlpModel::load(&path).map_err(|e| CmdError::Other(e.to_string()))?)
        }
        EvaluatorMode::IkOracle => None,
    };
    let grid = match region.kind.as_str() {
        "hand" => {
            let spec = HandGridSpec {
                hand,
                x: (region.x[0], region.x[1]),
                y: (region.y[0], region.y[1]),
                nx: region.nx,
                ny: region.ny,
                z: region.z,
                orientation: nalgebra::UnitQuaternion::from_euler_angles(
                    0.0,
                    0.0,
                    region.orientation_yaw,
                ),
            };
            let evaluator = match &classifier {
                Some(mlp) => HandGridEvaluator::Classifier { scorer: mlp, swing },
                None => HandGridEvaluator::LocomanipulationIk { swing },
            };
            hand_region_grid(&model, &left, &right, &spec, &evaluator, &gait, &ctx.config.ik)
                .map_err(|e| CmdError::Other(e.to_string()))?
        }
        "foot" => {
            let spec = FootGridSpec {
                swing,
                x: (region.x[0], region.x[1]),
                y: (region.y[0], region.y[1]),
                nx: region.nx,
                ny: region.ny,
                landing_yaw: region.landing_yaw,
            };
            let hand_pose = locomanip::FramePose::new(
                nalgebra::Vector3::from(region.hand_target),
                nalgebra::UnitQuaternion::from_euler_angles(0.0, 0.0, region.orientation_yaw),
            );
            foot_region_grid(&model, &left, &right, hand, &hand_pose, &spec, &gait, &ctx.config.ik)
                .map_err(|e| CmdError::Other(e.to_string()))?
        }
        other => {
            return Err(CmdError::Config(ConfigError::Field {
                field: "region.kind".into(),
                msg: format!("unknown kind '{other}'"),
            }))
        }
    };
    let path = ctx.write("region.txt", &grid.to_file_string())?;
    println!(
        "wrote {} cells ({} feasible) -> {}",
        grid.cells.len(),
        grid.feasible_count(),
        path.display()
    );
    Ok(())
}
