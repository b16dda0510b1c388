//! Grouped percentile normalization and D_FLEX for a synthetic corpus.

use dflex::aggregate::{dflex_min, generalized_mean, DflexParams, Exponent};
use dflex::normalize::{assemble_scores, Grouping, ScoreConfig};
use dflex::synth::{generate_corpus, SynthConfig};

fn main() -> dflex::Result<()> {
    let synth = generate_corpus(&SynthConfig {
        n_patents: 3000,
        seed: 5,
        ..SynthConfig::default()
    })?;
    let table = assemble_scores(
        &synth.corpus,
        &ScoreConfig {
            grouping: Grouping::Industry,
            ..ScoreConfig::default()
        },
    )?;
    let md = &table.metadata;
    println!(
        "{} focal patents, {} scored, {} with an undefined index",
        md.focal, md.scored, md.excluded_undefined
    );
    let exact = DflexParams::uniform(3, Exponent::Finite(-10.0))?;
    println!(
        "{:<10} {:>6} {:>6} {:>6} {:>8} {:>8}",
        "patent", "g1", "g2", "g3", "min", "M(-10)"
    );
    for r in table.scored().take(12) {
        let g = r.g.expect("scored");
        println!(
            "{:<10} {:>6.3} {:>6.3} {:>6.3} {:>8.3} {:>8.3}",
            r.patent_id,
            g[0],
            g[1],
            g[2],
            dflex_min(&g)?,
            generalized_mean(&g, &exact)?
        );
    }
    Ok(())
}
