//! The full pipeline on a synthetic corpus: every report kind written to a
//! temporary directory with its manifest.

use dflex::pipeline::{run, Command, ReportKind, RunConfig};

fn main() -> dflex::Result<()> {
    let dir = std::env::temp_dir().join("dflex-reports-example");
    let mut config = RunConfig {
        out_dir: dir.join("corpus"),
        seed: 4,
        ..RunConfig::default()
    };
    config.apply_overrides(&["synth_n_patents=3000"])?;
    run(&config, &Command::Synth)?;

    let corpus_dir = config.out_dir.clone();
    let mut config = RunConfig {
        patents: Some(corpus_dir.join("patents.csv")),
        citations: Some(corpus_dir.join("citations.csv")),
        out_dir: dir.join("out"),
        ..RunConfig::default()
    };
    config.apply_overrides(&["min_group_size=10", "top_percentile=0.95"])?;
    for kind in ReportKind::ALL {
        let summary = run(&config, &Command::Report(kind))?;
        println!("report {}: {} files", kind.name(), summary.files.len());
    }
    let text = std::fs::read_to_string(config.out_dir.join("report_table4.txt")).map_err(|e| {
        dflex::Error::Io {
            path: config.out_dir.clone(),
            source: e,
        }
    })?;
    print!("{text}");
    Ok(())
}
