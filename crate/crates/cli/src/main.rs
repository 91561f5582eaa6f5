use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use kancql::cql::{self, Alpha1Mode, CqlHyperparams, PenaltyMode};
use kancql::eval::{self, ParamRow};
use kancql::nn::checkpoint::Checkpoint;
use kancql::policy::{NetworkConfig, Networks};
use kancql::{Dataset, EnvSpec, Error, Tier};

/// Exit codes beyond clap's own usage code (2).
const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_FORMAT: u8 = 4;

#[derive(Parser)]
#[command(
    name = "kancql",
    version,
    about = "Conservative Q-learning with MLP and KAN backbones"
)]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an offline dataset from a scripted behavior policy.
    GenData(GenDataArgs),
    /// Train one configuration on a dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint's deterministic policy.
    Eval(EvalArgs),
    /// Print actor and critic parameter counts for all ten configurations.
    CountParams(CountArgs),
    /// Time training epochs for one configuration.
    Bench(BenchArgs),
}

#[derive(Args)]
struct Output {
    /// Emit machine-readable JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    env: String,
    #[arg(long)]
    tier: String,
    /// Number of transitions.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct HpArgs {
    /// `logsumexp` or `paper-literal`.
    #[arg(long, default_value = "logsumexp")]
    penalty_mode: String,
    /// Fixed conservative weight.
    #[arg(long, default_value_t = 5.0)]
    alpha1: f64,
    /// Tune alpha1 as a Lagrange multiplier toward this penalty instead.
    #[arg(long)]
    lagrange_gap: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    steps_per_epoch: usize,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    /// Policy (and uniform) action samples per state in the penalty.
    #[arg(long, default_value_t = 10)]
    n_actions: usize,
}

impl HpArgs {
    fn hyperparams(&self) -> Result<CqlHyperparams> {
        let penalty_mode: PenaltyMode = self.penalty_mode.parse()?;
        let alpha1 = match self.lagrange_gap {
            None => Alpha1Mode::Fixed(self.alpha1),
            Some(target_gap) => Alpha1Mode::Lagrange {
                initial: self.alpha1,
                target_gap,
                lr: 3e-4,
            },
        };
        let hp = CqlHyperparams {
            alpha1,
            penalty_mode,
            steps_per_epoch: self.steps_per_epoch,
            batch_size: self.batch_size,
            n_policy_actions: self.n_actions,
            n_random_actions: self.n_actions,
            ..Default::default()
        };
        hp.validate()?;
        Ok(hp)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: String,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    hp: HpArgs,
    #[arg(long, default_value_t = 10)]
    eval_episodes: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 10)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct CountArgs {
    /// Defaults to both 17/6 and 11/3 when omitted.
    #[arg(long, requires = "act_dim")]
    obs_dim: Option<usize>,
    #[arg(long, requires = "obs_dim")]
    act_dim: Option<usize>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: String,
    #[arg(long)]
    data: PathBuf,
    /// Timed epochs after one warmup epoch (at least 3).
    #[arg(long, default_value_t = 3)]
    epochs: usize,
    #[command(flatten)]
    hp: HpArgs,
    #[command(flatten)]
    output: Output,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Io(_) => EXIT_IO,
                e if e.is_format_error() => EXIT_FORMAT,
                Error::UnknownConfig(_) | Error::UnknownEnv(_) | Error::UnknownTier(_) | Error::InvalidArgument(_) => {
                    EXIT_USAGE
                }
                _ => EXIT_FAILURE,
            };
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
    }
    EXIT_FAILURE
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => evaluate(a),
        Command::CountParams(a) => count_params(a),
        Command::Bench(a) => bench(a),
    }
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::load(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

#[derive(Serialize)]
struct GenDataReport {
    env: String,
    tier: String,
    transitions: usize,
    episodes: usize,
    seed: u64,
    mean_episode_return: f64,
    random_score: f64,
    expert_score: f64,
    out: String,
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let spec = EnvSpec::by_name(&a.env)?;
    let tier: Tier = a.tier.parse()?;
    let data = Dataset::generate(&spec, tier, a.n, a.seed)?;
    data.save(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    let report = GenDataReport {
        env: spec.name().to_string(),
        tier: tier.name().to_string(),
        transitions: data.len(),
        episodes: data.episode_returns().len(),
        seed: a.seed,
        mean_episode_return: data.mean_episode_return(),
        random_score: data.random_score,
        expert_score: data.expert_score,
        out: a.out.display().to_string(),
    };
    if a.output.json {
        return print_json(&report);
    }
    print_pairs(&[
        ("env", report.env),
        ("tier", report.tier),
        ("transitions", report.transitions.to_string()),
        ("episodes", report.episodes.to_string()),
        ("seed", report.seed.to_string()),
        ("mean_episode_return", report.mean_episode_return.to_string()),
        ("random_score", report.random_score.to_string()),
        ("expert_score", report.expert_score.to_string()),
        ("out", report.out),
    ]);
    Ok(())
}

#[derive(Serialize)]
struct TrainReport {
    config: String,
    seed: u64,
    epochs: usize,
    metrics: String,
    checkpoint: String,
    final_normalized_score: Option<f64>,
    rows: Vec<cql::EpochMetrics>,
}

fn train(a: TrainArgs) -> Result<()> {
    let cfg = NetworkConfig::by_name(&a.config)?;
    let hp = CqlHyperparams {
        eval_episodes: a.eval_episodes,
        ..a.hp.hyperparams()?
    };
    hp.validate()?;
    let data = load_dataset(&a.data)?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let metrics_path = a.out_dir.join("metrics.csv");
    let ckpt_path = a.out_dir.join("checkpoint.kcql");

    let hook = eval::dataset_eval_hook(&data, hp.eval_episodes, a.seed);
    let outcome = cql::train(&cfg, &data, &hp, a.epochs, a.seed, hook, Some(&ckpt_path))?;
    if a.epochs == 0 {
        cql::train_state_checkpoint(&outcome.state, &hp).save(&ckpt_path)?;
    }
    let file = fs::File::create(&metrics_path).with_context(|| format!("writing {}", metrics_path.display()))?;
    cql::write_metrics_csv(file, &outcome.metrics)?;

    let report = TrainReport {
        config: cfg.name.to_string(),
        seed: a.seed,
        epochs: a.epochs,
        metrics: metrics_path.display().to_string(),
        checkpoint: ckpt_path.display().to_string(),
        final_normalized_score: outcome.metrics.last().map(|m| m.normalized_score),
        rows: outcome.metrics,
    };
    if a.output.json {
        return print_json(&report);
    }
    println!(
        "{:>5} {:>14} {:>14} {:>14} {:>12} {:>14} {:>14} {:>12}",
        "epoch", "critic1_loss", "actor_loss", "gap", "alpha2", "eval_return", "normalized", "seconds"
    );
    for m in &report.rows {
        println!(
            "{:>5} {:>14} {:>14} {:>14} {:>12} {:>14} {:>14} {:>12}",
            m.epoch,
            m.critic1_loss,
            m.actor_loss,
            m.conservative_gap,
            m.alpha2,
            m.eval_return_mean,
            m.normalized_score,
            m.wall_seconds
        );
    }
    println!("metrics: {}", report.metrics);
    println!("checkpoint: {}", report.checkpoint);
    Ok(())
}

fn evaluate(a: EvalArgs) -> Result<()> {
    let ckpt =
        Checkpoint::load(&a.checkpoint).with_context(|| format!("loading checkpoint {}", a.checkpoint.display()))?;
    let nets = Networks::from_checkpoint(&ckpt)?;
    let data = load_dataset(&a.data)?;
    let report = eval::evaluate_against(
        &nets.actor,
        &data.env,
        a.episodes,
        a.seed,
        data.random_score,
        data.expert_score,
    )?
    .with_config(nets.config.name);
    if a.output.json {
        return print_json(&report);
    }
    print_pairs(&[
        ("config", nets.config.name.to_string()),
        ("episodes", report.episodes.to_string()),
        ("seed", report.seed.to_string()),
        ("return_mean", report.return_mean.to_string()),
        ("return_std", report.return_std.to_string()),
        ("normalized_score", report.normalized_score.to_string()),
    ]);
    Ok(())
}

fn count_params(a: CountArgs) -> Result<()> {
    let dims = match (a.obs_dim, a.act_dim) {
        (Some(o), Some(d)) => vec![(o, d)],
        _ => vec![(17, 6), (11, 3)],
    };
    let rows: Vec<ParamRow> = eval::param_table(&dims);
    if a.output.json {
        return print_json(&rows);
    }
    println!(
        "{:<10} {:>7} {:>7} {:>12} {:>13}",
        "config", "obs_dim", "act_dim", "actor_params", "critic_params"
    );
    for r in &rows {
        println!(
            "{:<10} {:>7} {:>7} {:>12} {:>13}",
            r.config, r.obs_dim, r.act_dim, r.actor_params, r.critic_params
        );
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let cfg = NetworkConfig::by_name(&a.config)?;
    let hp = a.hp.hyperparams()?;
    let data = load_dataset(&a.data)?;
    let report = eval::bench_epoch(&cfg, &data, &hp, a.epochs)?;
    if a.output.json {
        return print_json(&report);
    }
    let seconds: Vec<String> = report.epoch_seconds.iter().map(f64::to_string).collect();
    print_pairs(&[
        ("config", report.config.clone()),
        ("actor_params", report.actor_params.to_string()),
        ("critic_params", report.critic_params.to_string()),
        ("steps_per_epoch", report.steps_per_epoch.to_string()),
        ("epochs_timed", report.epochs_timed.to_string()),
        ("epoch_seconds", seconds.join(" ")),
        ("mean_epoch_seconds", report.mean_epoch_seconds.to_string()),
        ("steps_per_second", report.steps_per_second.to_string()),
    ]);
    Ok(())
}

fn print_pairs(pairs: &[(&str, String)]) {
    let width = pairs.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (k, v) in pairs {
        println!("{k:<width$}  {v}");
    }
}
