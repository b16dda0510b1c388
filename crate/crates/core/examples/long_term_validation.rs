//! Long-term citations by score bin on a cohort where top-scoring patents
//! receive extra citations after the scoring window.

use chrono::NaiveDate;
use dflex::aggregate::dflex_min;
use dflex::analysis::{long_term_bins, TopThreshold};
use dflex::corpus::nearest_rank_quantile;
use dflex::normalize::{assemble_scores, ScoreConfig};
use dflex::synth::{boost_late_citations, generate_corpus, SynthConfig};

fn main() -> dflex::Result<()> {
    let synth = generate_corpus(&SynthConfig {
        n_patents: 6000,
        seed: 3,
        ..SynthConfig::default()
    })?;
    let config = ScoreConfig::default();
    let mut table = assemble_scores(&synth.corpus, &config)?;
    for r in &mut table.rows {
        r.dflex = r.g.map(|g| dflex_min(&g)).transpose()?;
    }
    let scores: Vec<f64> = table.rows.iter().filter_map(|r| r.dflex).collect();
    let p90 = nearest_rank_quantile(&scores, 0.9)?;
    let top: Vec<String> = table
        .rows
        .iter()
        .filter(|r| r.dflex.is_some_and(|d| d >= p90))
        .map(|r| r.patent_id.clone())
        .collect();
    let boosted = boost_late_citations(&synth.corpus, &top, 15, 60, 9)?;

    let cohort = (
        NaiveDate::from_ymd_opt(1982, 1, 1).expect("date"),
        NaiveDate::from_ymd_opt(1990, 12, 31).expect("date"),
    );
    let horizon = NaiveDate::from_ymd_opt(2015, 6, 30).expect("date");
    let v = long_term_bins(
        &boosted,
        &table.rows,
        cohort,
        horizon,
        60,
        10,
        TopThreshold::Percentile(0.99),
    )?;
    println!(
        "{} cohort patents; top tail = at least {} long-term citations",
        v.cohort_size, v.top_threshold
    );
    for (b, s) in v.bins.iter().enumerate() {
        println!(
            "[{:.1}, {:.1}) n={:>4} mean={:>8} top share={}",
            v.edges[b],
            v.edges[b + 1],
            s.count,
            s.mean_long_term.map_or("-".into(), |m| format!("{m:.2}")),
            s.share_top.map_or("-".into(), |m| format!("{m:.3}")),
        );
    }
    Ok(())
}
