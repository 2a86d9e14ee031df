//! `handoff`: generate beam-sequence datasets, train and evaluate the GRU
//! predictor, and sweep learning curves.
//!
//! Exit codes: 0 success, 2 config, 3 dataset, 4 argument, 5 compatibility.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mmwave_handoff::checkpoint::Checkpoint;
use mmwave_handoff::dataset::{split, BeamSequence, Dataset, DatasetHeader};
use mmwave_handoff::manifest::RunManifest;
use mmwave_handoff::optim::AdamConfig;
use mmwave_handoff::plot::{line_plot, Series};
use mmwave_handoff::scenario::{generate_dataset, ScenarioConfig};
use mmwave_handoff::train::{evaluate, learning_curve, train, CurveConfig, TrainConfig};
use mmwave_handoff::Error;

#[derive(Parser)]
#[command(
    name = "handoff",
    version,
    about = "Proactive mmWave hand-off prediction from beam sequences"
)]
struct Cli {
    /// Cap on worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate trajectories and write a labeled dataset.
    Generate(GenerateArgs),
    /// Train a model on a dataset file.
    Train(TrainArgs),
    /// Print the success probability of a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Success probability versus training size, over several seeds.
    Curve(CurveArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Scenario TOML file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 500)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Hyper {
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 20)]
    embed: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Global gradient-norm clip.
    #[arg(long, default_value_t = 5.0)]
    clip: f64,
    /// Episodes per optimizer step.
    #[arg(long, default_value_t = 1)]
    batch_size: usize,
}

impl Hyper {
    fn train_config(&self, seed: u64, eval_every: usize) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            seed,
            adam: AdamConfig {
                lr: self.lr,
                ..AdamConfig::default()
            },
            eval_every,
            clip_norm: self.clip,
            hidden: self.hidden,
            embed: self.embed,
            batch_size: self.batch_size,
        }
    }

    fn record(&self, m: RunManifest) -> RunManifest {
        m.param("epochs", self.epochs)
            .param("hidden", self.hidden)
            .param("embed", self.embed)
            .param("lr", self.lr)
            .param("clip", self.clip)
            .param("batch_size", self.batch_size)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[command(flatten)]
    hyper: Hyper,
    #[arg(long, default_value_t = 1)]
    eval_every: usize,
    /// Share of episodes used for training; the rest is held out.
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
}

#[derive(Args)]
struct CurveArgs {
    #[arg(long)]
    config: PathBuf,
    /// Training sizes in time steps, ascending.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "2000,4000,6000,8000,10000,12000,14000"
    )]
    sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    seeds: Vec<u64>,
    /// Episodes generated per seed.
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    /// Held-out time steps per seed.
    #[arg(long, default_value_t = 2000)]
    test_size: usize,
    #[command(flatten)]
    hyper: Hyper,
    #[arg(long)]
    out: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

/// Maps a library error to `code`, except that configuration errors always
/// exit with the config code.
fn fail(code: u8) -> impl Fn(Error) -> Failure {
    move |e| Failure {
        code: if matches!(e, Error::Config(_)) {
            CONFIG
        } else {
            code
        },
        message: e.to_string(),
    }
}

const CONFIG: u8 = 2;
const DATASET: u8 = 3;
const ARGUMENT: u8 = 4;
const COMPAT: u8 = 5;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { ARGUMENT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(ARGUMENT);
        }
    };
    let result = pool.install(|| match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Curve(a) => curve(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn create_dir(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir).map_err(|e| Failure {
        code: ARGUMENT,
        message: format!("{}: {e}", dir.display()),
    })
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> CliResult {
    std::fs::write(path, contents).map_err(|e| Failure {
        code: ARGUMENT,
        message: format!("{}: {e}", path.display()),
    })
}

fn generate(a: &GenerateArgs) -> CliResult {
    let scenario = ScenarioConfig::load(&a.config).map_err(fail(CONFIG))?;
    let cb = scenario.codebook().map_err(fail(CONFIG))?;
    let episodes = generate_dataset(&scenario, a.episodes, &cb, a.seed).map_err(fail(ARGUMENT))?;
    let ds = Dataset {
        header: DatasetHeader {
            codebook_size: cb.len(),
            num_bs: scenario.num_bs(),
            seed: a.seed,
            scenario: scenario.hash_hex(),
        },
        sequences: episodes.iter().map(BeamSequence::from).collect(),
    };
    create_dir(&a.out)?;
    ds.save(a.out.join("dataset.txt")).map_err(fail(ARGUMENT))?;
    let mut m = RunManifest::new("generate", a.seed, &a.out).param("episodes", a.episodes);
    m.config_path = Some(a.config.display().to_string());
    m.scenario_hash = Some(scenario.hash_hex());
    m.write(&a.out).map_err(fail(ARGUMENT))?;
    println!(
        "{} episodes, {} steps -> {}",
        ds.sequences.len(),
        ds.num_steps(),
        a.out.join("dataset.txt").display()
    );
    Ok(())
}

fn train_cmd(a: &TrainArgs) -> CliResult {
    let cfg = a.hyper.train_config(a.seed, a.eval_every);
    cfg.validate().map_err(fail(ARGUMENT))?;
    let ds = Dataset::load(&a.dataset).map_err(fail(DATASET))?;
    if ds.sequences.len() < 2 {
        return Err(Failure {
            code: DATASET,
            message: "dataset needs at least 2 episodes to hold some out".into(),
        });
    }
    let (train_set, test_set) =
        split(&ds.sequences, a.train_fraction, a.seed).map_err(fail(ARGUMENT))?;
    let dims = cfg.dims(ds.header.codebook_size, ds.header.num_bs);
    dims.validate().map_err(fail(DATASET))?;
    let trained = train(&train_set, &test_set, dims, &cfg).map_err(fail(ARGUMENT))?;

    create_dir(&a.out)?;
    Checkpoint {
        model: trained.model,
        seed: a.seed,
        step: trained.step,
    }
    .save(a.out.join("model.ckpt"))
    .map_err(fail(ARGUMENT))?;
    write(&a.out.join("metrics.csv"), trained.report.metrics_csv())?;
    let mut m = a
        .hyper
        .record(RunManifest::new("train", a.seed, &a.out))
        .param("dataset", a.dataset.display())
        .param("eval_every", a.eval_every)
        .param("train_fraction", a.train_fraction)
        .param("train_episodes", train_set.len())
        .param("test_episodes", test_set.len());
    m.scenario_hash = Some(ds.header.scenario.clone());
    m.write(&a.out).map_err(fail(ARGUMENT))?;
    println!(
        "held-out success probability {:.4}",
        trained.report.final_success
    );
    Ok(())
}

fn eval(a: &EvalArgs) -> CliResult {
    let ck = Checkpoint::load(&a.checkpoint).map_err(fail(COMPAT))?;
    let ds = Dataset::load(&a.dataset).map_err(fail(DATASET))?;
    let d = ck.model.dims;
    if d.vocab != ds.header.codebook_size || d.outputs != ds.header.num_bs {
        return Err(Failure {
            code: COMPAT,
            message: format!(
                "checkpoint expects MCB={} N={}, dataset has MCB={} N={}",
                d.vocab, d.outputs, ds.header.codebook_size, ds.header.num_bs
            ),
        });
    }
    let p = evaluate(&ck.model, &ds.sequences).map_err(fail(DATASET))?;
    println!("{p:.4}");
    Ok(())
}

fn curve(a: &CurveArgs) -> CliResult {
    let scenario = ScenarioConfig::load(&a.config).map_err(fail(CONFIG))?;
    if a.seeds.is_empty() {
        return Err(Failure {
            code: ARGUMENT,
            message: "at least one seed is required".into(),
        });
    }
    let curve_cfg = CurveConfig {
        sizes: a.sizes.clone(),
        pool_episodes: a.episodes,
        test_steps: a.test_size,
    };
    let mut per_seed = Vec::with_capacity(a.seeds.len());
    for &seed in &a.seeds {
        let cfg = a.hyper.train_config(seed, a.hyper.epochs);
        let points = learning_curve(&cfg, &curve_cfg, &scenario, seed).map_err(fail(ARGUMENT))?;
        per_seed.push((seed, points));
    }

    let mut csv = String::from("train_size,success_prob,seed\n");
    for (seed, points) in &per_seed {
        for p in points {
            writeln!(csv, "{},{:.6},{seed}", p.train_size, p.success).unwrap();
        }
    }
    let mean: Vec<(f64, f64)> = a
        .sizes
        .iter()
        .enumerate()
        .map(|(i, &size)| {
            let total: f64 = per_seed.iter().map(|(_, pts)| pts[i].success).sum();
            (size as f64, total / per_seed.len() as f64)
        })
        .collect();
    let mut mean_csv = String::from("train_size,success_prob\n");
    for (size, p) in &mean {
        writeln!(mean_csv, "{size},{p:.6}").unwrap();
    }

    let mut series: Vec<Series> = per_seed
        .iter()
        .map(|(seed, pts)| Series {
            name: format!("seed {seed}"),
            points: pts
                .iter()
                .map(|p| (p.train_size as f64, p.success))
                .collect(),
            emphasis: false,
        })
        .collect();
    series.push(Series {
        name: "mean".into(),
        points: mean.clone(),
        emphasis: true,
    });
    let svg = line_plot(
        "Hand-off prediction",
        "training size (time steps)",
        "success probability",
        &series,
    );

    create_dir(&a.out)?;
    write(&a.out.join("curve.csv"), csv)?;
    write(&a.out.join("curve_mean.csv"), mean_csv)?;
    write(&a.out.join("curve.svg"), svg)?;
    let seeds: Vec<String> = a.seeds.iter().map(u64::to_string).collect();
    let sizes: Vec<String> = a.sizes.iter().map(usize::to_string).collect();
    let mut m = a
        .hyper
        .record(RunManifest::new("curve", a.seeds[0], &a.out))
        .param("seeds", seeds.join(","))
        .param("sizes", sizes.join(","))
        .param("episodes", a.episodes)
        .param("test_size", a.test_size);
    m.config_path = Some(a.config.display().to_string());
    m.scenario_hash = Some(scenario.hash_hex());
    m.write(&a.out).map_err(fail(ARGUMENT))?;
    for (size, p) in &mean {
        println!("{size}\t{p:.4}");
    }
    Ok(())
}
