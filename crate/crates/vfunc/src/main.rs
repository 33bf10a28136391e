use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use vfunc::{resolve, run, Command, Overrides};

#[derive(Parser)]
#[command(name = "vfunc", version, about = "Train and analyse generative models over functions")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Train a model and write a checkpoint plus metrics.csv
    Train(Common),
    /// Predictive mean and std over a grid (regression)
    EvalBand(Common),
    /// Latent interpolation: interp.csv (regression) or per-alpha maps (rl)
    Interp(Common),
    /// State-visitation maps for sampled latents (rl)
    Visitation(Common),
    /// Mean pairwise total variation between visitation maps (rl)
    Diversity(Common),
    /// Enumerated entropies against bound estimates on the discrete toy joint
    BoundsCheck(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment config
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `out` in the config)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for per-latent evaluation
    #[arg(long, default_value_t = 1)]
    jobs: usize,
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
    let (command, common) = match cli.command {
        Sub::Train(c) => (Command::Train, c),
        Sub::EvalBand(c) => (Command::EvalBand, c),
        Sub::Interp(c) => (Command::Interp, c),
        Sub::Visitation(c) => (Command::Visitation, c),
        Sub::Diversity(c) => (Command::Diversity, c),
        Sub::BoundsCheck(c) => (Command::BoundsCheck, c),
    };
    let overrides = Overrides { seed: common.seed, out: common.out, jobs: common.jobs };
    let result = resolve(&common.config, &overrides).and_then(|cfg| run(command, &cfg, overrides.jobs));
    match result {
        Ok(summary) => {
            for n in &summary.notices {
                eprintln!("note: {n}");
            }
            for l in &summary.lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
