use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use klgreed_cli::config::{
    load, BanditSurfaceConfig, MazeConfig, SwitchStayConfig, TheoryConfig,
};
use klgreed_cli::out::{ensure_dir, write_manifest};
use klgreed_cli::{bandit_surface, maze_cmd, switch_stay_cmd, theory_cmd};
use std::path::PathBuf;
use std::process::ExitCode;

/// KL-greedification experiments on small MDPs: loss surfaces, iterate
/// studies, the verification suite, and maze exploration runs. Each
/// subcommand writes CSV files plus a manifest into the output directory.
#[derive(Parser)]
#[command(name = "klgreed", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for CSV files and the manifest.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the number of seeds where the experiment is seeded.
    #[arg(long)]
    seeds: Option<u64>,
    /// Worker threads (defaults to all cores). Outputs do not depend on it.
    #[arg(long)]
    parallel: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// KL loss over a (mean, std) grid on the bimodal bandit.
    BanditSurface(Common),
    /// Final value-polytope points of gradient iterates on Switch-Stay.
    SwitchStay(Common),
    /// Verification suite and the relative-gap experiment.
    Theory(Common),
    /// Replay-buffer (and optional exact-evaluation) maze runs.
    Maze(Common),
}

fn init_threads(common: &Common) {
    if let Some(n) = common.parallel {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(check_failures) if check_failures == 0 => ExitCode::SUCCESS,
        Ok(n) => {
            eprintln!("{n} checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Returns the number of failed checks (only the theory subcommand has any).
fn run(cli: Cli) -> Result<usize> {
    match cli.command {
        Command::BanditSurface(common) => {
            init_threads(&common);
            let (config, text) = load::<BanditSurfaceConfig>(common.config.as_deref())?;
            ensure_dir(&common.out)?;
            write_manifest(&common.out, "bandit-surface", &text)?;
            let files = bandit_surface::run(&config, &common.out)?;
            for f in files {
                println!("wrote {}", f.display());
            }
            Ok(0)
        }
        Command::SwitchStay(common) => {
            init_threads(&common);
            let (mut config, text) = load::<SwitchStayConfig>(common.config.as_deref())?;
            if let Some(seeds) = common.seeds {
                config.iterates = seeds as usize;
            }
            ensure_dir(&common.out)?;
            write_manifest(&common.out, "switch-stay", &text)?;
            let files = switch_stay_cmd::run(&config, &common.out)?;
            for f in files {
                println!("wrote {}", f.display());
            }
            Ok(0)
        }
        Command::Theory(common) => {
            init_threads(&common);
            let (mut config, text) = load::<TheoryConfig>(common.config.as_deref())?;
            if let Some(seeds) = common.seeds {
                config.gap_seeds = seeds;
            }
            ensure_dir(&common.out)?;
            write_manifest(&common.out, "theory", &text)?;
            let run = theory_cmd::run(&config, &common.out)?;
            print!("{}", theory_cmd::render_report(&run.outcomes));
            for f in run.files {
                println!("wrote {}", f.display());
            }
            Ok(run.outcomes.iter().filter(|o| !o.passed).count())
        }
        Command::Maze(common) => {
            init_threads(&common);
            let (mut config, text) = load::<MazeConfig>(common.config.as_deref())?;
            if let Some(seeds) = common.seeds {
                config.seeds = seeds;
            }
            ensure_dir(&common.out)?;
            write_manifest(&common.out, "maze", &text)?;
            let files = maze_cmd::run(&config, &common.out)?;
            for f in files {
                println!("wrote {}", f.display());
            }
            Ok(0)
        }
    }
}
