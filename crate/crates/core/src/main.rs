use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use densecast::app::{cmd_fetch, cmd_inspect, cmd_report, cmd_run, RunOverrides};
use densecast::calendar::YearMonth;
use densecast::eval::{Engine, RunConfig};
use densecast::fredmd::{default_cache_dir, FetchConfig, InfoSetKind};

/// Density nowcasts of quarterly GDP growth.
#[derive(Parser)]
#[command(name = "densecast", version)]
struct Cli {
    /// Overrides the global seed of `run`; other commands are deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Download monthly vintages into the cache.
    Fetch {
        #[arg(long, value_parser = parse_month)]
        from: YearMonth,
        #[arg(long, value_parser = parse_month)]
        to: YearMonth,
        #[arg(long)]
        source_url: Option<String>,
        /// Defaults to $DENSECAST_CACHE or ./.densecast-cache.
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Rolling evaluation; writes manifest, records, metrics and statistics.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated: dfm,bbb,mcd,naive.
        #[arg(long, value_delimiter = ',')]
        engines: Option<Vec<Engine>>,
        /// Comma-separated: m1,m2,m3.
        #[arg(long, value_delimiter = ',')]
        info_sets: Option<Vec<InfoSetKind>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// SVG charts and an HTML summary of a results directory.
    Report {
        dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a results directory, checkpoint or vintage CSV.
    Inspect { path: PathBuf },
}

fn parse_month(s: &str) -> Result<YearMonth, String> {
    YearMonth::parse_date(s).map_err(|e| e.to_string())
}

fn run(cli: Cli) -> densecast::Result<i32> {
    match cli.command {
        Command::Fetch {
            from,
            to,
            source_url,
            cache_dir,
        } => {
            let url = source_url.unwrap_or_else(|| FetchConfig::default().source_url);
            let cache = cache_dir.unwrap_or_else(default_cache_dir);
            let files = cmd_fetch(from, to, &url, &cache)?;
            println!("{} vintages cached", files.len());
            Ok(0)
        }
        Command::Run {
            config,
            engines,
            info_sets,
            out,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            RunOverrides {
                engines,
                info_sets,
                seed: cli.seed,
                out,
            }
            .apply(&mut cfg)?;
            let outcome = cmd_run(&cfg, Some(&config))?;
            println!(
                "{} records ({} flagged) written to {}",
                outcome.records.len(),
                outcome.failed,
                cfg.output.dir.display()
            );
            Ok(outcome.exit_code())
        }
        Command::Report { dir, out } => {
            let files = cmd_report(&dir, out.as_deref())?;
            println!("{} report files written", files.len());
            Ok(0)
        }
        Command::Inspect { path } => {
            print!("{}", cmd_inspect(&path)?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
