// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rtlfix_cli::commands::{cmd_passk, cmd_repair, cmd_synth_bench, cmd_verify, CmdError, Exit};
use rtlfix_cli::config::{ConfigError, ProjectConfig, ENV_PREFIX};
use rtlfix_cli::oracle::OracleStyle;
use rtlfix_cli::synth::BugClass;

#[derive(Parser)]
#[command(name = "rtlfix", version, about = "Agentic RTL debugging with hypothesis-tree search")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Project file (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Override any key, e.g. `--set budget.max_tokens_total=500000`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    work_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Style {
    Direct,
    Explore,
    Hopeless,
}

#[derive(Subcommand)]
enum Cmd {
    /// Search for a fix and write the work directory.
    Repair(ConfigArgs),
    /// Simulate sources against every testbench.
    Verify {
        #[command(flatten)]
        args: ConfigArgs,
        /// Directory holding the patched sources; defaults to the configured ones.
        #[arg(long)]
        patched: Option<PathBuf>,
    },
    /// Generate a random design with one injected bug.
    SynthBench {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        class: BugClass,
        #[arg(long)]
        out: PathBuf,
        /// Also record a replay fixture from the scripted agent.
        #[arg(long, value_enum)]
        fixture: Option<Style>,
    },
    /// Independent repair trials with seeds base, base+1, ...
    Passk {
        #[command(flatten)]
        args: ConfigArgs,
        /// Number of trials; defaults to `search.retries`.
        #[arg(short)]
        k: Option<usize>,
    },
}

fn load(a: &ConfigArgs) -> Result<ProjectConfig, CmdError> {
    let mut env: BTreeMap<String, String> = std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    for s in &a.set {
        let (key, value) = s
            .split_once('=')
            .and_then(|(k, v)| k.split_once('.').map(|(sec, key)| (format!("{sec}__{key}"), v)))
            .ok_or_else(|| ConfigError::Invalid(format!("--set {s}: expected SECTION.KEY=VALUE")))?;
        env.insert(format!("{ENV_PREFIX}{}", key.to_ascii_uppercase()), value.to_string());
    }
    let mut cfg = ProjectConfig::load_with_env(&a.config, &env)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(w) = &a.work_dir {
        cfg.work_dir = w.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli, out: &mut dyn Write) -> Result<Exit, CmdError> {
    match cli.cmd {
        Cmd::Repair(a) => cmd_repair(&load(&a)?, out),
        Cmd::Verify { args, patched } => cmd_verify(&load(&args)?, patched.as_deref(), out),
        Cmd::SynthBench {
            seed,
            class,
            out: dir,
            fixture,
        } => {
            let style = fixture.map(|s| match s {
                Style::Direct => OracleStyle::Direct,
                Style::Explore => OracleStyle::Explore,
                Style::Hopeless => OracleStyle::Hopeless,
            });
            cmd_synth_bench(seed, class, &dir, style, out)
        }
        Cmd::Passk { args, k } => cmd_passk(&load(&args)?, k, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out = std::io::stdout().lock();
    let code = match run(cli, &mut out) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit()
        }
    };
    ExitCode::from(code as u8)
}
