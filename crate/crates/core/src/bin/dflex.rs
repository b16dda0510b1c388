use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dflex::pipeline::{run, Command, RunConfig};
use dflex::Error;

#[derive(Parser)]
#[command(
    name = "dflex",
    version,
    about = "Patent disruption indices and the D_FLEX score"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Args)]
struct Opts {
    /// `key = value` configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: $DFLEX_OUT_DIR or ./dflex-out)
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    patents: Option<String>,
    #[arg(long, global = true)]
    citations: Option<String>,
    /// Precomputed score table used instead of a corpus
    #[arg(long, global = true)]
    scores: Option<String>,
    #[arg(long, global = true)]
    window_months: Option<u32>,
    /// cd | bdtc | csf_d | bwh
    #[arg(long, global = true)]
    index: Option<String>,
    /// industry | year | industry-year
    #[arg(long, global = true)]
    group_by: Option<String>,
    /// exact | min | max | geometric
    #[arg(long, global = true)]
    mode: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    sigma: Option<String>,
    /// Comma-separated weights
    #[arg(long, global = true)]
    weights: Option<String>,
    /// Additional `key=value` settings, applied last
    #[arg(long = "set", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    Ingest,
    Partition,
    Indices,
    Normalize,
    Dflex,
    Calibrate {
        #[arg(long)]
        cases: Option<String>,
        #[arg(long)]
        population: Option<String>,
        #[arg(long)]
        pi: Option<String>,
        /// lo:hi:n
        #[arg(long)]
        pi_grid: Option<String>,
    },
    /// table2 | table4 | hist | scatter | longterm | trends | logit
    Report {
        kind: String,
    },
    Lookup {
        id: String,
    },
    Synth,
}

fn build(cli: Cli) -> Result<(RunConfig, Command), Error> {
    let mut cfg = match &cli.opts.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let o = &cli.opts;
    let mut pairs: Vec<(&str, String)> = Vec::new();
    let mut push = |k: &'static str, v: Option<String>| {
        if let Some(v) = v {
            pairs.push((k, v));
        }
    };
    push("patents", o.patents.clone());
    push("citations", o.citations.clone());
    push("scores", o.scores.clone());
    push("window_months", o.window_months.map(|v| v.to_string()));
    push("index", o.index.clone());
    push("group_by", o.group_by.clone());
    push("mode", o.mode.clone());
    push("sigma", o.sigma.clone());
    push("weights", o.weights.clone());
    push("seed", o.seed.map(|v| v.to_string()));
    push("threads", o.threads.map(|v| v.to_string()));
    let command = match cli.command {
        Cmd::Ingest => Command::Ingest,
        Cmd::Partition => Command::Partition,
        Cmd::Indices => Command::Indices,
        Cmd::Normalize => Command::Normalize,
        Cmd::Dflex => Command::Dflex,
        Cmd::Calibrate {
            cases,
            population,
            pi,
            pi_grid,
        } => {
            push("cases", cases);
            push("population", population);
            push("pi", pi);
            push("pi_grid", pi_grid);
            Command::Calibrate
        }
        Cmd::Report { kind } => Command::Report(kind.parse()?),
        Cmd::Lookup { id } => Command::Lookup(id),
        Cmd::Synth => Command::Synth,
    };
    for (k, v) in pairs {
        cfg.set(k, &v)?;
    }
    if let Some(dir) = &o.out_dir {
        cfg.out_dir = dir.clone();
    }
    cfg.apply_overrides(&o.overrides)?;
    Ok((cfg, command))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = build(cli).and_then(|(cfg, command)| run(&cfg, &command).map(|s| (cfg, s)));
    match result {
        Ok((cfg, summary)) => {
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "wrote {} files to {}",
                summary.files.len(),
                cfg.out_dir.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
