use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use recbench::cli::{cmd_compare, cmd_run};
use recbench::dataset::load::write_csv;
use recbench::fixtures::{planted_rank1, synthetic, two_clusters, uniform_random, SyntheticConfig};

#[derive(Parser)]
#[command(name = "recbench", version, about = "Offline evaluation of rating-based recommenders")]
struct Cli {
    /// Seed for the split and every seeded model component, overriding the manifest.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the manifest's model and run the full evaluation protocol.
    Run {
        manifest: PathBuf,
        /// Override one manifest key, e.g. `--set model.k=50`. Repeatable.
        #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
        set: Vec<String>,
        /// Output directory (overrides `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Do not print the summary table.
        #[arg(long)]
        quiet: bool,
    },
    /// Side-by-side table of report files or run directories.
    Compare {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Also write the table to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a seeded synthetic dataset as CSV.
    GenFixture {
        #[arg(long, value_enum, default_value_t = FixtureKind::Synthetic)]
        kind: FixtureKind,
        #[arg(long, default_value_t = 1000)]
        users: usize,
        #[arg(long, default_value_t = 500)]
        items: usize,
        /// Mean logs per user (synthetic) or logs per user (uniform).
        #[arg(long, default_value_t = 40.0)]
        ratings_per_user: f64,
        /// Planted item clusters (synthetic).
        #[arg(long, default_value_t = 0)]
        clusters: usize,
        /// Latent rank (synthetic).
        #[arg(long, default_value_t = 4)]
        rank: usize,
        #[arg(long, short)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureKind {
    /// Low-rank ratings with skewed activity and popularity.
    Synthetic,
    /// Full rank-1 matrix.
    Rank1,
    /// Two internally identical item groups (`--users` is rounded to blocks of 4, `--items` split in half).
    Clusters,
    /// Uniform ratings on random pairs.
    Uniform,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            manifest,
            set,
            out,
            quiet,
        } => match cmd_run(&manifest, &set, cli.seed, out.as_deref()) {
            Ok(outcome) => {
                if !quiet {
                    print!("{}", outcome.report.summary());
                }
                eprintln!("report written to {}", outcome.output_dir.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
        Command::Compare { reports, out } => match cmd_compare(&reports) {
            Ok(table) => {
                print!("{table}");
                if let Some(out) = out {
                    if let Err(e) = fs::write(&out, &table) {
                        eprintln!("error: cannot write {}: {e}", out.display());
                        return ExitCode::from(5);
                    }
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
        Command::GenFixture {
            kind,
            users,
            items,
            ratings_per_user,
            clusters,
            rank,
            out,
        } => {
            let seed = cli.seed.unwrap_or(0);
            let logs = match kind {
                FixtureKind::Synthetic => synthetic(&SyntheticConfig {
                    mean_ratings_per_user: ratings_per_user,
                    clusters,
                    rank,
                    ..SyntheticConfig::new(users, items, seed)
                }),
                FixtureKind::Rank1 => planted_rank1(users, items, seed),
                FixtureKind::Clusters => two_clusters(users.div_ceil(4), items.div_ceil(2), seed),
                FixtureKind::Uniform => {
                    uniform_random(users, items, (ratings_per_user as usize).min(items), seed)
                }
            };
            let parent = out.parent().filter(|p| !p.as_os_str().is_empty());
            let result = parent
                .map_or(Ok(()), fs::create_dir_all)
                .and_then(|()| fs::File::create(&out))
                .and_then(|f| write_csv(&logs, f));
            match result {
                Ok(()) => {
                    eprintln!("wrote {} logs to {}", logs.len(), out.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: cannot write {}: {e}", out.display());
                    ExitCode::from(3)
                }
            }
        }
    }
}
