//! Command-line interface: dataset generation, training, evaluation,
//! single-instance solving, and config-driven experiments.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use geocop::dataset::{self, GenOptions, Ordering};
use geocop::geometry::{PointSet, DEFAULT_HK_MAX};
use geocop::harness::{self, experiment::render_instance, ExperimentConfig};
use geocop::model::{
    load_checkpoint, save_checkpoint, train, BeamVariant, CheckpointDtype, DecoderChoice,
    ModelConfig, ModelParams, StartToken, TrainOptions,
};
use geocop::nncore::AdamState;
use geocop::Task;
use std::fs;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "geocop",
    about = "Neural solver for planar combinatorial geometry tasks (Delaunay triangulation, convex hull, TSP)",
    version
)]
struct Cli {
    /// Worker threads (0 = all cores). Results are thread-count independent;
    /// use 1 for single-threaded runs.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled dataset.
    Gen(GenArgs),
    /// Train a model on a dataset file.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset file.
    Eval(EvalArgs),
    /// Solve one instance from a points file and render it.
    Solve(SolveArgs),
    /// Run a config-driven experiment (training + evaluation + reports).
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    task: Task,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    count: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = "sorted")]
    ordering: Ordering,
    #[arg(long)]
    out: PathBuf,
    /// Largest instance solved exactly by Held-Karp; larger TSP instances
    /// get 2-opt labels flagged non-optimal.
    #[arg(long, default_value_t = DEFAULT_HK_MAX)]
    hk_max: usize,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 256)]
    hidden: usize,
    #[arg(long, default_value = "on")]
    self_attention: OnOff,
    #[arg(long, default_value = "on")]
    mask: OnOff,
    #[arg(long, default_value = "zero")]
    start_token: StartToken,
    #[arg(long, default_value_t = 0.002)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    beta2: f64,
    #[arg(long, default_value_t = 128)]
    batch: usize,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    /// Initialization / shuffle seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the step,loss curve.
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    /// Store checkpoint tensors as f32 (training stays f64).
    #[arg(long)]
    save_f32: bool,
    /// Resume from an existing checkpoint (continues its optimizer state).
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "greedy")]
    decoder: DecoderKind,
    #[arg(long, default_value_t = 4)]
    beam_width: usize,
    #[arg(long, default_value = "joint")]
    variant: BeamVariant,
    /// Report path; writes `<report>.json` and `<report>.csv`.
    #[arg(long)]
    report: PathBuf,
    /// Render the first N instances as SVG next to the report.
    #[arg(long, default_value_t = 0)]
    svg_count: usize,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// JSON file with [[x, y], ...] points.
    #[arg(long)]
    points: PathBuf,
    #[arg(long)]
    svg: PathBuf,
    #[arg(long, default_value = "greedy")]
    decoder: DecoderKind,
    #[arg(long, default_value_t = 4)]
    beam_width: usize,
    #[arg(long, default_value = "joint")]
    variant: BeamVariant,
    #[arg(long, default_value_t = DEFAULT_HK_MAX)]
    hk_max: usize,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config JSON.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum OnOff {
    On,
    Off,
}

impl From<OnOff> for bool {
    fn from(v: OnOff) -> bool {
        v == OnOff::On
    }
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum DecoderKind {
    Greedy,
    Beam,
}

fn decoder_choice(kind: DecoderKind, width: usize, variant: BeamVariant) -> DecoderChoice {
    match kind {
        DecoderKind::Greedy => DecoderChoice::Greedy,
        DecoderKind::Beam => DecoderChoice::Beam { width, variant },
    }
}

fn main() {
    let cli = Cli::parse();
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .ok();
    }
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen(args) => gen(args),
        Command::Train(args) => train_cmd(args),
        Command::Eval(args) => eval_cmd(args),
        Command::Solve(args) => solve_cmd(args),
        Command::Experiment(args) => experiment_cmd(args),
    }
}

fn gen(args: GenArgs) -> Result<()> {
    let data = dataset::generate(
        args.task,
        args.m,
        args.count,
        args.seed,
        args.ordering,
        GenOptions { hk_max: args.hk_max },
    )
    .context("dataset generation failed")?;
    dataset::save(&data, &args.out).context("writing dataset")?;
    println!(
        "wrote {} {} instances (m={}) to {}",
        data.instances.len(),
        args.task,
        args.m,
        args.out.display()
    );
    Ok(())
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let data = dataset::load(&args.data).context("loading dataset")?;
    let task = data.header.task;

    let (mut params, mut adam) = match &args.resume {
        Some(path) => {
            let ckpt = load_checkpoint(path).context("loading resume checkpoint")?;
            let adam = ckpt
                .adam
                .unwrap_or_else(|| AdamState::new(args.lr, args.beta1, args.beta2));
            (ckpt.params, adam)
        }
        None => {
            let mut config = ModelConfig::new(task).with_hidden(args.hidden);
            config.self_attention = args.self_attention.into();
            config.mask_enabled = args.mask.into();
            config.start_token = args.start_token;
            config.lr = args.lr;
            config.beta1 = args.beta1;
            config.beta2 = args.beta2;
            config.batch_size = args.batch;
            let params = ModelParams::init(config, args.seed)?;
            let adam = AdamState::new(args.lr, args.beta1, args.beta2);
            (params, adam)
        }
    };

    let opts = TrainOptions {
        epochs: args.epochs,
        shuffle_seed: args.seed,
        shuffle: true,
        record_loss_every: 1,
    };
    let summary = train(&mut params, &mut adam, &data.instances, &opts, |report, _| {
        eprintln!(
            "epoch {} done: {} steps, mean loss {:.4}",
            report.epoch + 1,
            report.steps_done,
            report.mean_loss
        );
        true
    })?;

    if let Some(path) = &args.loss_csv {
        let mut csv = String::from("step,loss\n");
        for (step, loss) in &summary.loss_curve {
            csv.push_str(&format!("{step},{loss:.6}\n"));
        }
        fs::write(path, csv).context("writing loss curve")?;
    }
    let dtype = if args.save_f32 { CheckpointDtype::F32 } else { CheckpointDtype::F64 };
    save_checkpoint(&args.out, &params, Some(&adam), dtype).context("writing checkpoint")?;
    println!(
        "trained {} steps ({} epochs), final epoch mean loss {:.4}; checkpoint at {}",
        summary.steps,
        summary.epochs_run,
        summary.final_epoch_loss,
        args.out.display()
    );
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.ckpt).context("loading checkpoint")?;
    let data = dataset::load(&args.data).context("loading dataset")?;
    if data.header.task != ckpt.params.config.task {
        bail!(
            "checkpoint task {} does not match dataset task {}",
            ckpt.params.config.task,
            data.header.task
        );
    }
    let decoder = decoder_choice(args.decoder, args.beam_width, args.variant);
    let (report, outcomes) = harness::evaluate(&data, &ckpt.params, decoder)?;

    let json_path = args.report.with_extension("json");
    let csv_path = args.report.with_extension("csv");
    fs::write(&json_path, serde_json::to_string_pretty(&report)?)?;
    fs::write(&csv_path, report.to_csv())?;

    if args.svg_count > 0 {
        let dir = args
            .report
            .parent()
            .map(|p| p.to_path_buf())
            .unwrap_or_else(|| PathBuf::from("."))
            .join("svg");
        fs::create_dir_all(&dir)?;
        for (k, (inst, outcome)) in
            data.instances.iter().zip(&outcomes).take(args.svg_count).enumerate()
        {
            fs::write(dir.join(format!("{k:03}.svg")), render_instance(inst, outcome)?)?;
        }
    }
    print!("{}", report.to_csv());
    println!("reports: {} {}", json_path.display(), csv_path.display());
    Ok(())
}

fn solve_cmd(args: SolveArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.ckpt).context("loading checkpoint")?;
    let text = fs::read_to_string(&args.points).context("reading points file")?;
    let pairs: Vec<[f64; 2]> =
        serde_json::from_str(&text).context("points must be [[x,y],...]")?;
    let raw = PointSet::new(
        pairs.iter().map(|&[x, y]| geocop::geometry::Point::new(x, y)).collect(),
    );
    let sorted = geocop::sequencing::sort_input(&raw).sorted_points;

    let task = ckpt.params.config.task;
    let decoder = decoder_choice(args.decoder, args.beam_width, args.variant);
    let outcome = match decoder {
        DecoderChoice::Greedy => geocop::model::greedy_decode(&sorted, &ckpt.params, None),
        DecoderChoice::Beam { width, variant } => {
            geocop::model::beam_decode(&sorted, &ckpt.params, width, variant, None)
        }
    };

    // Render against the exact solver's answer where one exists.
    let truth = oracle_label(task, &sorted, args.hk_max)?;
    let inst = geocop::dataset::Instance {
        task,
        points: sorted,
        label: truth,
        meta: geocop::dataset::InstanceMeta { seed: 0, optimal: true },
    };
    fs::write(&args.svg, render_instance(&inst, &outcome)?)?;

    let body = outcome.seq.body_indices();
    println!(
        "decoded {} tokens (log prob {:.4}, fallback steps {}): {:?}",
        body.len(),
        outcome.log_prob,
        outcome.fallback_steps,
        body
    );
    println!("svg: {}", args.svg.display());
    Ok(())
}

fn oracle_label(
    task: Task,
    points: &PointSet,
    hk_max: usize,
) -> Result<geocop::sequencing::TokenSequence> {
    use geocop::geometry;
    use geocop::sequencing;
    Ok(match task {
        Task::Dt => {
            let tris = geometry::delaunay_triangulate(points)?;
            sequencing::canonicalize_dt(&tris, points)?
        }
        Task::Hull => {
            let hull = geometry::convex_hull(points)?;
            sequencing::canonicalize_hull(&hull, points)
        }
        Task::Tsp => {
            let tour = if points.len() <= hk_max {
                geometry::held_karp(points, hk_max)?.0
            } else {
                geometry::two_opt(points, &geometry::nearest_neighbor_tour(points))
            };
            sequencing::canonicalize_tour(&tour, points)?
        }
    })
}

fn experiment_cmd(args: ExperimentArgs) -> Result<()> {
    let text = fs::read_to_string(&args.config).context("reading experiment config")?;
    let config: ExperimentConfig = serde_json::from_str(&text).context("parsing config")?;
    let results = harness::run_experiment(&config, &args.out_dir)?;
    for (variant, report) in &results {
        println!("== {variant} ==");
        print!("{}", report.to_csv());
    }
    println!("artifacts in {}", args.out_dir.display());
    Ok(())
}
