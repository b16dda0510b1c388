//! Minimum-mode scores and single-patent reports for ten well-known patents.
//!
//! The relative criterion is recomputed against a background of scores
//! whose three percentiles are independent and uniform.

use dflex::aggregate::dflex_min;
use dflex::analysis::{case_lookup, Criteria};
use dflex::normalize::{RowFlags, ScoreRow};
use dflex::pipeline::read_score_table;

fn main() -> dflex::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/case_studies.csv");
    let mut rows = read_score_table(path.as_ref())?;
    let ids: Vec<String> = rows.iter().map(|r| r.patent_id.clone()).collect();

    let k = 20;
    for a in 0..k {
        for b in 0..k {
            for c in 0..k {
                let u = |i: usize| (i as f64 + 0.5) / k as f64;
                rows.push(ScoreRow {
                    patent_id: format!("bg{a:02}{b:02}{c:02}"),
                    group_code: "background".into(),
                    grant_year: 1990,
                    grant_date: None,
                    counts: None,
                    indices: None,
                    case_label: None,
                    x1: 0.0,
                    x2: 0.0,
                    x3: None,
                    g: Some([u(a), u(b), u(c)]),
                    flags: RowFlags::default(),
                    dflex: None,
                });
            }
        }
    }
    for r in &mut rows {
        r.dflex = Some(dflex_min(&r.g.expect("scored"))?);
    }
    for id in ids {
        print!(
            "{}",
            case_lookup(&rows, &id, &Criteria::default())?.render()
        );
    }
    Ok(())
}
