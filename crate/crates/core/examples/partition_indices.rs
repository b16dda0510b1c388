//! Successor partition and disruption indices for a hand-built corpus.

use chrono::NaiveDate;
use dflex::corpus::{successor_partition, CitationCorpus, PatentRecord};
use dflex::indices::disruption_indices;

fn patent(id: &str, y: i32, m: u32) -> PatentRecord {
    PatentRecord {
        patent_id: id.into(),
        grant_date: NaiveDate::from_ymd_opt(y, m, 1),
        group_code: Some("1".into()),
        novelty_count: 0,
        is_focal: true,
        case_label: None,
    }
}

fn main() -> dflex::Result<()> {
    // F cites prior art B; C1 cites only F, C2 cites F and B, C3 cites only B.
    let records = vec![
        patent("B", 1990, 1),
        patent("F", 1995, 1),
        patent("C1", 1996, 6),
        patent("C2", 1997, 3),
        patent("C3", 1998, 9),
        patent("LATE", 2003, 1),
    ];
    let edges = [
        ("F", "B"),
        ("C1", "F"),
        ("C2", "F"),
        ("C2", "B"),
        ("C3", "B"),
        ("LATE", "F"),
    ];
    let corpus = CitationCorpus::from_parts(records, edges)?;
    let counts = successor_partition(&corpus, "F", 60)?;
    println!(
        "F={} N_i={} N_j={} N_k={}",
        counts.f, counts.n_i, counts.n_j, counts.n_k
    );

    let s = disruption_indices(&counts)?;
    for (name, v) in [
        ("cd", s.cd),
        ("bdtc", s.bdtc),
        ("csf_d", s.csf_d),
        ("csf_c", s.csf_c),
        ("bwh", s.bwh),
        ("mcd", s.mcd),
    ] {
        println!(
            "{name:>6} = {}",
            v.map_or("undefined".to_string(), |v| format!("{v:.4}"))
        );
    }
    Ok(())
}
