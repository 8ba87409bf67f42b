use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chdg_cli::{
    cmd_convergence, cmd_robustness, cmd_run, exit_code, parse_pairs, split_pair, RunConfig, EXIT_CHECK_FAILED,
    EXIT_OK,
};

#[derive(Parser)]
#[command(name = "chdg", version, about = "Mixed DG Cahn-Hilliard simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// key=value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// override a configuration key; may be repeated
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one case to its final time
    Run {
        /// case name (overrides the config file)
        #[arg(long)]
        case: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Manufactured-solution convergence study on 16^2, 32^2, 64^2
    Convergence {
        #[command(flatten)]
        common: Common,
    },
    /// Average GMRES iterations per Newton iteration across refinements
    Robustness {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common, case: Option<&str>) -> chdg_core::Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        cfg.apply(&parse_pairs(&std::fs::read_to_string(path)?)?)?;
    }
    if let Some(c) = case {
        cfg.case = c.to_string();
    }
    for s in &common.set {
        let (k, v) = split_pair(s)?;
        cfg.set(&k, &v)?;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Cmd::Run { case, common } => load(common, case.as_deref()).and_then(|cfg| cmd_run(&cfg).map(|s| (s, true))),
        Cmd::Convergence { common } => load(common, None).and_then(|cfg| cmd_convergence(&cfg)),
        Cmd::Robustness { common } => load(common, None).and_then(|cfg| cmd_robustness(&cfg)),
    };
    let code = match result {
        Ok((summary, ok)) => {
            print!("{summary}");
            if ok {
                EXIT_OK
            } else {
                EXIT_CHECK_FAILED
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
