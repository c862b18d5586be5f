mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use mir_core::manifest::RunConfig;

use args::{Cli, Command, Common};

/// Config file (if any), then flags, then the seed fan-out; validated.
fn config(common: &Common, apply: impl FnOnce(&mut RunConfig)) -> anyhow::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    common.apply(&mut cfg);
    apply(&mut cfg);
    cfg.apply_seed();
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    let (name, cfg, check_released) = match command {
        Command::Fixture { common, fixture } => ("fixture", config(&common, |c| fixture.apply(c))?, false),
        Command::Ingest { common, data } => ("ingest", config(&common, |c| data.apply(c))?, false),
        Command::Stats {
            common,
            data,
            check_released,
        } => ("stats", config(&common, |c| data.apply(c))?, check_released),
        Command::Synth {
            common,
            data,
            synth,
            encoder,
        } => {
            let cfg = config(&common, |c| {
                data.apply(c);
                synth.apply(c);
                encoder.apply(c);
            })?;
            ("synth", cfg, false)
        }
        Command::Train {
            common,
            data,
            synth,
            encoder,
            optim,
            checkpoint,
        } => {
            let cfg = config(&common, |c| {
                data.apply(c);
                synth.apply(c);
                encoder.apply(c);
                optim.apply(c);
                if checkpoint.is_some() {
                    c.checkpoint = checkpoint;
                }
            })?;
            ("train", cfg, false)
        }
        Command::Embed {
            common,
            data,
            checkpoint,
        } => {
            let cfg = config(&common, |c| {
                data.apply(c);
                if checkpoint.is_some() {
                    c.checkpoint = checkpoint;
                }
            })?;
            ("embed", cfg, false)
        }
        Command::Retrieve {
            common,
            data,
            embeddings_dir,
            eval,
        } => {
            let cfg = config(&common, |c| {
                data.apply(c);
                eval.apply(c);
                if embeddings_dir.is_some() {
                    c.embeddings_dir = embeddings_dir;
                }
            })?;
            ("retrieve", cfg, false)
        }
        Command::Eval {
            common,
            data,
            rankings,
            eval,
        } => {
            let cfg = config(&common, |c| {
                data.apply(c);
                eval.apply(c);
                if rankings.is_some() {
                    c.rankings = rankings;
                }
            })?;
            ("eval", cfg, false)
        }
        Command::Elbow {
            common,
            data,
            rankings,
            k_max,
        } => {
            let cfg = config(&common, |c| {
                data.apply(c);
                if rankings.is_some() {
                    c.rankings = rankings;
                }
                if let Some(k) = k_max {
                    c.k_max = k;
                }
            })?;
            ("elbow", cfg, false)
        }
        Command::Rerank {
            common,
            data,
            rankings,
            eval,
            judge,
            checkpoint,
        } => {
            let cfg = config(&common, |c| {
                data.apply(c);
                eval.apply(c);
                judge.apply(c);
                if rankings.is_some() {
                    c.rankings = rankings;
                }
                if checkpoint.is_some() {
                    c.checkpoint = checkpoint;
                }
            })?;
            ("rerank", cfg, false)
        }
        Command::Replay {
            manifest,
            entry,
            out_dir,
        } => return commands::replay(&manifest, entry, &out_dir),
    };
    commands::execute(name, cfg, check_released)
}

/// 1 for configuration and input validation failures, 2 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let invalid = err
        .chain()
        .any(|e| matches!(e.downcast_ref::<mir_core::Error>(), Some(mir_core::Error::InvalidConfig(_))));
    if invalid {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
