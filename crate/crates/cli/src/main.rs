use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fedxgb::dataset::{make_partition, write_csv, PartitionManifest, PartitionSpec, Scheme};
use fedxgb::experiment::{
    partition_seed, prepare, read_prepared, render_dataset, run_grid, write_grid, write_prepared,
    write_report, ExperimentConfig, Mode, Recipe,
};
use fedxgb::federation::{
    run_party, run_training, FederationConfig, PartyConfig, RunFailure, TransportKind,
};
use fedxgb::{Error, F1Average};

const EXIT_CONFIG: u8 = 2;
const EXIT_TRAINING: u8 = 3;

#[derive(Parser)]
#[command(
    name = "fedxgb",
    version,
    about = "Federated gradient boosting experiments"
)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a raw dataset and split it into train and holdout files.
    Prepare(PrepareArgs),
    /// Partition a prepared training set across five parties.
    Partition(PartitionArgs),
    /// Run the centralized, local and federated grid for one dataset.
    Run(Box<RunArgs>),
    /// Rebuild the combined results table from an output directory.
    Report(ReportArgs),
    /// Run the aggregator side of a federation config.
    Aggregator(AggregatorArgs),
    /// Serve one party of a TCP federation config.
    Party(PartyArgs),
}

#[derive(Args)]
struct PrepareArgs {
    /// Bundled recipe name or path to a recipe JSON file.
    dataset: String,
    #[arg(long, default_value = "data/raw")]
    raw_dir: PathBuf,
    #[arg(long, default_value = "prepared")]
    prepared_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PartitionArgs {
    dataset: String,
    #[arg(long)]
    scheme: Scheme,
    #[arg(long, default_value = "prepared")]
    prepared_dir: PathBuf,
    /// Partition seed; derived from the prepared master seed when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write one CSV per party and a federation config into this directory.
    #[arg(long)]
    export: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportArg {
    InProcess,
    Tcp,
}

impl From<TransportArg> for TransportKind {
    fn from(t: TransportArg) -> Self {
        match t {
            TransportArg::InProcess => TransportKind::InProcess,
            TransportArg::Tcp => TransportKind::Tcp,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Centralized,
    Local,
    Federated,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Centralized => Mode::Centralized,
            ModeArg::Local => Mode::Local,
            ModeArg::Federated => Mode::Federated,
        }
    }
}

#[derive(Args, Default)]
struct HyperparameterArgs {
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    /// Learning rate.
    #[arg(long)]
    eta: Option<f64>,
    /// L2 penalty on leaf weights.
    #[arg(long)]
    lambda: Option<f64>,
    /// Minimum gain for a split.
    #[arg(long)]
    gamma: Option<f64>,
    /// Maximum split candidates per feature.
    #[arg(long)]
    max_bins: Option<usize>,
    /// Relative error of the feature sketches.
    #[arg(long)]
    relative_error: Option<f64>,
    #[arg(long)]
    min_child_count: Option<u64>,
}

impl HyperparameterArgs {
    fn apply(&self, h: &mut fedxgb::Hyperparameters) {
        if let Some(v) = self.rounds {
            h.rounds = v;
        }
        if let Some(v) = self.max_depth {
            h.max_depth = v;
        }
        if let Some(v) = self.eta {
            h.eta = v;
        }
        if let Some(v) = self.lambda {
            h.lambda = v;
        }
        if let Some(v) = self.gamma {
            h.gamma = v;
        }
        if let Some(v) = self.max_bins {
            h.max_bins = v;
        }
        if let Some(v) = self.relative_error {
            h.relative_error = v;
        }
        if let Some(v) = self.min_child_count {
            h.min_child_count = v;
        }
    }
}

#[derive(Args)]
struct RunArgs {
    dataset: String,
    /// Experiment config JSON; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "prepared")]
    prepared_dir: PathBuf,
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<Scheme>>,
    #[arg(long, value_delimiter = ',', value_enum)]
    modes: Option<Vec<ModeArg>>,
    #[command(flatten)]
    hyperparameters: HyperparameterArgs,
    /// Master seed; must match the one used by `prepare`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    transport: Option<TransportArg>,
    #[arg(long)]
    f1_average: Option<F1Average>,
    #[arg(long)]
    timeout_secs: Option<f64>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct AggregatorArgs {
    /// Federation config JSON.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "model.json")]
    model_out: PathBuf,
}

#[derive(Args)]
struct PartyArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    id: u32,
    /// Where to write the final model received from the aggregator.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

/// A job that ran but did not finish cleanly.
#[derive(Debug)]
struct TrainingFailed(String);

impl std::fmt::Display for TrainingFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for TrainingFailed {}

fn cmd_prepare(args: &PrepareArgs) -> Result<()> {
    let recipe = Recipe::resolve(&args.dataset)?;
    let prepared = prepare(&recipe, &args.raw_dir, args.seed)?;
    let dir = args.prepared_dir.join(&recipe.name);
    write_prepared(&prepared, &dir)?;
    let m = &prepared.manifest;
    println!(
        "{}: {} rows, {} features, {} classes -> train {} / test {} in {}",
        recipe.name,
        m.rows,
        m.feature_names.len(),
        m.task.num_classes(),
        m.train_rows,
        m.test_rows,
        dir.display()
    );
    println!("train label counts: {:?}", m.train_label_counts);
    Ok(())
}

fn cmd_partition(args: &PartitionArgs) -> Result<()> {
    let recipe = Recipe::resolve(&args.dataset)?;
    if !recipe.is_feasible(args.scheme) {
        return Err(Error::InfeasiblePartition(format!(
            "scheme {} cannot be run for {}: {}",
            args.scheme, recipe.name, recipe.notes
        ))
        .into());
    }
    let dir = args.prepared_dir.join(&recipe.name);
    let prepared = read_prepared(&dir)?;
    let seed = args
        .seed
        .unwrap_or_else(|| partition_seed(prepared.manifest.master_seed, args.scheme));
    let spec = PartitionSpec::new(args.scheme, seed);
    let result = make_partition(&prepared.train, &spec)?;
    let manifest = PartitionManifest::new(&recipe.name, &spec, &prepared.train, &result);
    let path = dir.join(format!("partition-{}.json", args.scheme));
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)
        .with_context(|| format!("writing {}", path.display()))?;
    let counts: Vec<String> = result.counts().iter().map(usize::to_string).collect();
    println!("{}", counts.join(" "));
    log::info!("partition manifest written to {}", path.display());

    if let Some(export) = &args.export {
        fs::create_dir_all(export)?;
        let mut parties = Vec::new();
        for (i, rows) in result.parties.iter().enumerate() {
            let id = i as u32 + 1;
            let data_path = export.join(format!("party{id}.csv"));
            write_csv(&data_path, &prepared.train.subset(rows))?;
            parties.push(PartyConfig { id, data_path });
        }
        let config = FederationConfig {
            transport: TransportKind::InProcess,
            aggregator_addr: "127.0.0.1:7878".into(),
            task: prepared.manifest.task,
            parties,
            hyperparameters: fedxgb::Hyperparameters::default(),
            seed: prepared.manifest.master_seed,
            timeout_secs: 60.0,
        };
        let config_path = export.join("federation.json");
        fs::write(&config_path, serde_json::to_string_pretty(&config)?)?;
        log::info!("party files and {} written", config_path.display());
    }
    Ok(())
}

fn experiment_config(
    args: &RunArgs,
    recipe: &Recipe,
    prepared_seed: u64,
) -> Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig {
            seed: prepared_seed,
            ..ExperimentConfig::new(&recipe.name)
        },
    };
    config.dataset = recipe.name.clone();
    if let Some(s) = &args.schemes {
        config.schemes = s.clone();
    }
    if let Some(m) = &args.modes {
        config.modes = m.iter().map(|&m| m.into()).collect();
    }
    args.hyperparameters.apply(&mut config.hyperparameters);
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = &args.out {
        config.output_dir = v.clone();
    }
    if let Some(v) = args.transport {
        config.transport = v.into();
    }
    if let Some(v) = args.f1_average {
        config.f1_average = v;
    }
    if let Some(v) = args.timeout_secs {
        config.timeout_secs = v;
    }
    config.validate()?;
    Ok(config)
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let recipe = Recipe::resolve(&args.dataset)?;
    let prepared = read_prepared(&args.prepared_dir.join(&recipe.name))?;
    let config = experiment_config(args, &recipe, prepared.manifest.master_seed)?;
    let report = run_grid(&config, &recipe, &prepared)?;
    write_grid(&report, &config.output_dir)?;
    print!("{}", render_dataset(&report));
    let failed: Vec<String> = report
        .failed()
        .map(|c| {
            format!(
                "{} {} {}: {}",
                c.mode.as_str(),
                c.scheme.map_or("-", Scheme::as_str),
                c.party.map_or_else(|| "-".into(), |p| p.to_string()),
                c.error.as_deref().unwrap_or("")
            )
        })
        .collect();
    if !failed.is_empty() {
        return Err(TrainingFailed(format!(
            "{} cells failed: {}",
            failed.len(),
            failed.join("; ")
        ))
        .into());
    }
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let path = write_report(&args.out)?;
    print!("{}", fs::read_to_string(&path)?);
    Ok(())
}

fn write_model(path: &Path, model: &fedxgb::TreeModel) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, model.to_json()).with_context(|| format!("writing {}", path.display()))
}

fn cmd_aggregator(args: &AggregatorArgs) -> Result<()> {
    let config = FederationConfig::from_path(&args.config)?;
    match run_training(&config) {
        Ok(outcome) => {
            write_model(&args.model_out, &outcome.model)?;
            for entry in &outcome.log {
                println!(
                    "round {:>4}  train loss {:.6}",
                    entry.round, entry.train_loss
                );
            }
            println!(
                "model {} written to {}",
                outcome.model.digest(),
                args.model_out.display()
            );
            Ok(())
        }
        Err(RunFailure { error, last_good }) => {
            if let Some(model) = last_good {
                write_model(&args.model_out, &model)?;
                eprintln!(
                    "last acknowledged model ({} trees) written to {}",
                    model.trees.len(),
                    args.model_out.display()
                );
            }
            Err(anyhow::Error::new(error)
                .context(TrainingFailed("federated training failed".into())))
        }
    }
}

fn cmd_party(args: &PartyArgs) -> Result<()> {
    let config = FederationConfig::from_path(&args.config)?;
    if config.transport != TransportKind::Tcp {
        bail!(Error::Config(
            "the party command needs a config with the tcp transport".into()
        ));
    }
    let model = run_party(&config, args.id).map_err(|e| {
        anyhow::Error::new(e).context(TrainingFailed(format!("party {} failed", args.id)))
    })?;
    if let Some(path) = &args.model_out {
        write_model(path, &model)?;
    }
    println!("party {} finished with model {}", args.id, model.digest());
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<TrainingFailed>().is_some() {
            return EXIT_TRAINING;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config(_)
                | Error::OutOfRange { .. }
                | Error::Load { .. }
                | Error::Parse { .. }
                | Error::Schema(_)
                | Error::InfeasiblePartition(_)
                | Error::UnsupportedScheme(_)
                | Error::Format(_) => EXIT_CONFIG,
                _ => EXIT_TRAINING,
            };
        }
    }
    EXIT_CONFIG
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Prepare(a) => cmd_prepare(a),
        Command::Partition(a) => cmd_partition(a),
        Command::Run(a) => cmd_run(a),
        Command::Report(a) => cmd_report(a),
        Command::Aggregator(a) => cmd_aggregator(a),
        Command::Party(a) => cmd_party(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
