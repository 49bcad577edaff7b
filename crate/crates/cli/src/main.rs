//! `wsner`: weakly supervised sequence-labeling toolkit.

mod commands;
mod config;
mod format;

use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::CliConfig;

#[derive(Parser)]
#[command(
    name = "wsner",
    version,
    about = "Weakly supervised named-entity tagger with reinforcement-based denoising",
    disable_help_subcommand = true
)]
struct Cli {
    /// Flat `key = value` configuration file; flags override its values
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<String>,

    /// Random seed; runs with the same seed are bit-reproducible
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Tagging scheme
    #[arg(long, global = true, value_enum, value_name = "SCHEME")]
    scheme: Option<SchemeArg>,

    /// Annotation mode: default keeps all tags open outside dictionary
    /// matches; phrase restricts open positions to a phrase list
    #[arg(long, global = true, value_enum, value_name = "MODE")]
    mode: Option<ModeArg>,

    /// Drop the word-level embeddings and encode from characters alone
    #[arg(long, global = true)]
    char_only: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Bio,
    Bioes,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Default,
    Phrase,
}

#[derive(Subcommand)]
enum Command {
    /// Dictionary-annotate a raw token file into allowed-tag sets
    /// (config keys: raw, dictionary, output; phrases in phrase mode)
    Annotate,
    /// Train a tagger on gold plus distantly annotated data
    /// (config keys: gold, distant, dev, model, entity_types)
    Pretrain,
    /// Remove unreliable distant sentences with the learned policy
    /// (config keys: model, gold, distant, dev, output; optional trace)
    Denoise,
    /// Train a fresh tagger on gold plus a cleaned distant set
    /// (config keys: gold, distant, dev, model, entity_types)
    Retrain,
    /// Tag a raw token file with a trained model
    /// (config keys: model, input, output)
    Tag,
    /// Span-level precision/recall/F1 of predictions against gold
    /// (config keys: predictions, gold, entity_types; optional output)
    Eval,
}

fn load_config(cli: &Cli) -> Result<CliConfig, String> {
    let mut cfg = match &cli.config {
        None => CliConfig::default(),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("io: cannot read {path}: {e}"))?;
            CliConfig::parse(&text).map_err(|e| format!("config: {e}"))?
        }
    };
    if let Some(seed) = cli.seed {
        cfg.set("seed", seed.to_string());
    }
    if let Some(scheme) = cli.scheme {
        cfg.set(
            "scheme",
            match scheme {
                SchemeArg::Bio => "bio".into(),
                SchemeArg::Bioes => "bioes".into(),
            },
        );
    }
    if let Some(mode) = cli.mode {
        cfg.set(
            "mode",
            match mode {
                ModeArg::Default => "default".into(),
                ModeArg::Phrase => "phrase".into(),
            },
        );
    }
    if cli.char_only {
        cfg.set("char_only", "true".into());
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), String> {
    let cfg = load_config(cli)?;
    match cli.command {
        Command::Annotate => commands::cmd_annotate(&cfg),
        Command::Pretrain => commands::cmd_pretrain(&cfg),
        Command::Denoise => commands::cmd_denoise(&cfg),
        Command::Retrain => commands::cmd_retrain(&cfg),
        Command::Tag => commands::cmd_tag(&cfg),
        Command::Eval => commands::cmd_eval(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {}", msg.replace('\n', "; "));
            ExitCode::FAILURE
        }
    }
}
