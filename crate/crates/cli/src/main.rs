use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use schemafilter_cli::config::ProviderKind;
use schemafilter_cli::{
    cmd_bench, cmd_enrich, cmd_eval, cmd_filter, cmd_index, cmd_train, load_source_schemas, select_databases,
    with_jobs, CliError, EngineConfig, SelectionOverride,
};
use schemafilter_core::eval::Selection;

/// Question-aware schema filtering.
///
/// Exit codes: 0 success, 1 usage, 2 data error, 3 provider error.
#[derive(Parser)]
#[command(name = "schemafilter", version)]
struct Cli {
    #[arg(long, global = true, default_value = "schemafilter.toml")]
    config: PathBuf,
    /// Worker threads (default: all cores). Output does not depend on this.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overrides `reranker.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `provider.kind`.
    #[arg(long, global = true, value_enum)]
    provider: Option<ProviderKind>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DbArgs {
    /// Database id; repeat for several.
    #[arg(long = "db")]
    db: Vec<String>,
    /// Every database under `paths.schemas`.
    #[arg(long, conflicts_with = "db")]
    all: bool,
}

#[derive(Args)]
#[group(multiple = false)]
struct SelectionArgs {
    #[arg(long)]
    top_k: Option<usize>,
    /// Fraction of columns in (0, 1].
    #[arg(long)]
    top_percent: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
}

impl SelectionArgs {
    fn mode(&self) -> Option<Selection> {
        self.top_k
            .map(Selection::TopK)
            .or(self.top_percent.map(Selection::TopPercent))
            .or(self.threshold.map(Selection::Threshold))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build FD graphs, merging predicted keys, into `graph/`.
    Enrich(DbArgs),
    /// Index value dumps into `index/`.
    Index(DbArgs),
    /// Train the reranker on a JSON-lines dataset into `weights/`.
    Train {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Print the filtered sub-schema for one question as JSON.
    Filter {
        #[arg(long)]
        db: String,
        #[arg(long)]
        question: String,
        #[command(flatten)]
        selection: SelectionArgs,
        #[arg(long)]
        no_steiner: bool,
    },
    /// Score an evaluation set; writes `reports/eval.json` and curve CSVs.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Time the pipeline per question; writes `reports/latency.csv`.
    Bench {
        #[arg(long)]
        questions: PathBuf,
        /// Restrict to these databases.
        #[arg(long = "db")]
        db: Vec<String>,
    },
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("output always serializes"));
}

fn databases(config: &EngineConfig, args: &DbArgs) -> Result<Vec<String>, CliError> {
    if args.all {
        Ok(select_databases(&load_source_schemas(config)?, &[], true))
    } else {
        Ok(select_databases(&Default::default(), &args.db, false))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = EngineConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.reranker.seed = seed;
    }
    if let Some(kind) = cli.provider {
        config.provider.kind = kind;
    }
    config.validate()?;
    with_jobs(cli.jobs, || match &cli.command {
        Command::Enrich(args) => cmd_enrich(&config, &databases(&config, args)?).map(|r| print_json(&r)),
        Command::Index(args) => cmd_index(&config, &databases(&config, args)?).map(|r| print_json(&r)),
        Command::Train { dataset } => cmd_train(&config, dataset).map(|r| print_json(&r)),
        Command::Filter { db, question, selection, no_steiner } => {
            let over = SelectionOverride { mode: selection.mode(), no_steiner: *no_steiner };
            cmd_filter(&config, db, question, over).map(|r| print_json(&r))
        }
        Command::Eval { dataset } => cmd_eval(&config, dataset).map(|(report, out)| {
            log::info!("pooled ROC AUC {:.4}, PR AUC {:.4}", report.roc_auc, report.pr_auc);
            print_json(&out)
        }),
        Command::Bench { questions, db } => cmd_bench(&config, db, questions).map(|r| print_json(&r)),
    })?
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
