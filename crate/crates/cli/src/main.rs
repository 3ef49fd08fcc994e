use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use entroball_cli::{cmd_mincross, cmd_sweep, cmd_transport, CliError, Problem, RunConfig};

#[derive(Parser)]
#[command(name = "entroball", version, about = "Minimum cross-entropy densities in Wasserstein balls")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Transport from the prior to the points, with region maps.
    Transport(Common),
    /// Minimum cross-entropy density for a single delta.
    Mincross(Common),
    /// One minimum cross-entropy fit per delta in delta_list.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Solve the deltas on separate threads (outputs are unchanged).
        #[arg(long)]
        parallel: bool,
    },
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(common: &Common) -> Result<Problem, CliError> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    Problem::new(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Transport(c) => load(c).and_then(|p| cmd_transport(&p)),
        Command::Mincross(c) => load(c).and_then(|p| cmd_mincross(&p)),
        Command::Sweep { common, parallel } => load(common).and_then(|p| cmd_sweep(&p, *parallel)),
    };
    match result {
        Ok(report) => {
            // a closed stdout (e.g. piped into head) is not a failure
            let mut out = std::io::stdout().lock();
            let _ = writeln!(out, "{}", report.summary);
            for f in &report.files {
                let _ = writeln!(out, "wrote {}", f.display());
            }
            if report.converged {
                ExitCode::SUCCESS
            } else {
                eprintln!("entroball: solver did not converge");
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("entroball: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
