//! `iakrec`: generate data, pretrain a backbone, fine-tune adapters, evaluate,
//! serve, and run experiments.
//!
//! Every command reads one TOML run configuration (`--config`, with
//! `--set key=value` overrides on top) and writes into a fresh output
//! directory named after the time and seed, next to a copy of the effective
//! configuration. Relative paths are resolved against `--workdir`.

mod output;

use std::io::{self, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use iakrec::checkpoint::Checkpoint;
use iakrec::config::RunConfig;
use iakrec::datagen::{read_jsonl, write_jsonl, InteractionRecord};
use iakrec::eval::{ExperimentKind, Workbench};
use iakrec::iak::{adapters_from_checkpoint, adapters_to_checkpoint, IakAdapter};
use iakrec::models::MultiTaskModel;
use iakrec::recipe;
use iakrec::report::write_csv;
use iakrec::router::{serve, serve_unix, DomainRouter};

use output::{Failure, OutputDir};

#[derive(Parser, Debug)]
#[command(name = "iakrec", version, about = "Adapter fine-tuning for multi-task recommenders")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Run configuration (TOML). Without it every key takes its default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set train.finetune_lr=0.05`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Override the run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory that relative paths are resolved against.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,
    /// Output directory; must not exist yet or be empty. Defaults to
    /// `runs/<time>-seed<seed>-<command>` under the working directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic dataset as JSON lines.
    GenData,
    /// Pretrain and freeze the backbone on the training split.
    Pretrain {
        #[arg(long)]
        data: PathBuf,
    },
    /// Fine-tune one adapter per target domain on a frozen backbone.
    Finetune {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        backbone: Option<PathBuf>,
    },
    /// Test-split metrics of the zero-shot backbone, each adapter, and the
    /// routed system.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        backbone: Option<PathBuf>,
        #[arg(long)]
        adapters: Option<PathBuf>,
    },
    /// Score JSON-line requests from stdin, or from a Unix socket.
    Serve {
        #[arg(long)]
        backbone: Option<PathBuf>,
        #[arg(long)]
        adapters: Option<PathBuf>,
        #[arg(long)]
        socket: Option<PathBuf>,
    },
    /// Run one experiment kind, or `all`.
    Experiment {
        #[arg(long, default_value = "all")]
        kind: String,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::Pretrain { .. } => "pretrain",
            Command::Finetune { .. } => "finetune",
            Command::Eval { .. } => "eval",
            Command::Serve { .. } => "serve",
            Command::Experiment { .. } => "experiment",
        }
    }
}

fn resolve(workdir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        workdir.join(path)
    }
}

fn load_config(common: &Common) -> Result<RunConfig, Failure> {
    let path = common.config.as_deref().map(|p| resolve(&common.workdir, p));
    if let Some(p) = &path {
        if !p.is_file() {
            return Err(Failure::config(format!("config file {} not found", p.display())));
        }
    }
    let mut overrides = common.overrides.clone();
    if let Some(seed) = common.seed {
        overrides.push(format!("seed={seed}"));
    }
    RunConfig::load(path.as_deref(), &overrides).map_err(|e| Failure::config(e.to_string()))
}

/// A required input path, resolved and checked to exist.
fn input(workdir: &Path, path: Option<&Path>, what: &str) -> Result<PathBuf, Failure> {
    let path = path.ok_or_else(|| Failure::precondition(format!("{what} required")))?;
    let resolved = resolve(workdir, path);
    if !resolved.is_file() {
        return Err(Failure::io(format!("{what} {} not found", resolved.display())));
    }
    Ok(resolved)
}

fn load_data(workdir: &Path, path: &Path) -> Result<Vec<InteractionRecord>, Failure> {
    Ok(read_jsonl(&input(workdir, Some(path), "dataset")?)?)
}

fn load_backbone(workdir: &Path, path: Option<&Path>) -> Result<MultiTaskModel, Failure> {
    let ck = Checkpoint::read(&input(workdir, path, "backbone checkpoint")?)?;
    let mut model = MultiTaskModel::from_checkpoint(&ck)?;
    model.freeze();
    Ok(model)
}

fn load_adapters(workdir: &Path, path: Option<&Path>) -> Result<Vec<IakAdapter>, Failure> {
    Ok(adapters_from_checkpoint(&Checkpoint::read(&input(workdir, path, "adapter checkpoint")?)?)?)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli.common)?;
    let workdir = &cli.common.workdir;
    let text = cfg.to_toml();
    let out = || OutputDir::create(workdir, cli.common.out.as_deref(), cli.command.name(), cfg.seed, &text);

    match &cli.command {
        Command::GenData => {
            let data = recipe::generate_data(&cfg)?;
            let dir = out()?;
            write_jsonl(&data, &dir.file("data.jsonl"))?;
            dir.announce();
        }
        Command::Pretrain { data } => {
            let data = load_data(workdir, data)?;
            let (train, _) = recipe::split(&cfg, &data)?;
            let (backbone, report) = recipe::pretrain_backbone(&cfg, &train)?;
            let dir = out()?;
            backbone.to_checkpoint(&text).write(&dir.file("backbone.ckpt"))?;
            write_csv(&report.curve, &dir.file("pretrain_curve.csv"))?;
            dir.announce();
        }
        Command::Finetune { data, backbone } => {
            let backbone = load_backbone(workdir, backbone.as_deref())?;
            let data = load_data(workdir, data)?;
            let (train, _) = recipe::split(&cfg, &data)?;
            let report = recipe::finetune_targets(&cfg, &backbone, &train)?;
            let dir = out()?;
            adapters_to_checkpoint(&report.adapters, &text).write(&dir.file("adapters.ckpt"))?;
            write_csv(&report.curve, &dir.file("finetune_curve.csv"))?;
            dir.announce();
        }
        Command::Eval { data, backbone, adapters } => {
            let backbone = load_backbone(workdir, backbone.as_deref())?;
            let adapters = load_adapters(workdir, adapters.as_deref())?;
            let data = load_data(workdir, data)?;
            let (_, test) = recipe::split(&cfg, &data)?;
            let reports = recipe::evaluate_test(&cfg, &backbone, &adapters, &test)?;
            let dir = out()?;
            write_csv(&reports, &dir.file("eval.csv"))?;
            dir.announce();
        }
        Command::Serve { backbone, adapters, socket } => {
            let backbone = load_backbone(workdir, backbone.as_deref())?;
            let adapters = recipe::routable(&cfg, &load_adapters(workdir, adapters.as_deref())?);
            let router = DomainRouter::new(backbone, adapters, cfg.router.clone())?;
            match socket {
                Some(path) => serve_unix(Arc::new(router), &resolve(workdir, path))?,
                None => {
                    let stats = serve(&router, BufReader::new(io::stdin().lock()), io::stdout().lock())?;
                    eprintln!("served {} responses, {} malformed requests", stats.responses, stats.errors);
                }
            }
        }
        Command::Experiment { kind } => {
            let kinds = match kind.as_str() {
                "all" => ExperimentKind::ALL.to_vec(),
                k => vec![ExperimentKind::parse(k).map_err(|e| Failure::config(e.to_string()))?],
            };
            let dir = out()?;
            let mut bench = Workbench::new(cfg.clone())?;
            for k in kinds {
                let result = bench.run(k)?;
                std::fs::write(dir.file(&format!("{}.csv", k.name())), result.to_csv()?)
                    .map_err(|e| Failure::io(e.to_string()))?;
            }
            dir.announce();
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { output::USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
