use dflex::aggregate::{generalized_mean, DflexParams, Exponent};
use dflex::analysis::{
    long_term_bins, threshold_summary, trend_panels, Measure, Selection, TopThreshold,
};
use dflex::calibrate::{contaminated_loglik, fit_ml, CalibrationSample, FitConfig, Reparam};
use dflex::corpus::{load_corpus, partition_all, write_corpus, CitationCorpus, SuccessorCounts};
use dflex::format::fmt_f64;
use dflex::indices::{cd_fraction, disruption_indices, mcd_fraction};
use dflex::normalize::{assemble_scores, percentile_rank, ScoreConfig, UndefinedPolicy};
use dflex::synth::{generate_corpus, random_small_corpus, SynthConfig};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ranks(values: &[f64], groups: &[u8]) -> Vec<f64> {
    let vals: Vec<Option<f64>> = values.iter().map(|&v| Some(v)).collect();
    percentile_rank(&vals, groups, UndefinedPolicy::Exclude)
        .unwrap()
        .into_iter()
        .map(|r| r.unwrap().value())
        .collect()
}

fn simplex(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

fn mean(g: &[f64], w: &[f64], sigma: f64) -> f64 {
    let p = DflexParams::new(w.to_vec(), Exponent::Finite(sigma)).unwrap();
    generalized_mean(g, &p).unwrap()
}

fn counts() -> impl Strategy<Value = SuccessorCounts> {
    (0u64..60, 0u64..60, 0u64..60).prop_map(|(i, j, k)| SuccessorCounts::new(i, j, k))
}

proptest! {
    #[test]
    fn partition_ignores_edge_order(seed in 0u64..10_000, shuffle in 0u64..1000) {
        let corpus = random_small_corpus(seed, 25);
        let mut pairs: Vec<(u32, u32)> = corpus.edges().map(|(a, b)| (a as u32, b as u32)).collect();
        pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle));
        let permuted = CitationCorpus::from_indexed(corpus.records().to_vec(), pairs).unwrap();
        prop_assert_eq!(partition_all(&corpus, 60).unwrap(), partition_all(&permuted, 60).unwrap());
    }

    #[test]
    fn shorter_window_never_increases_counts(seed in 0u64..10_000, w in 1u32..120, d in 1u32..60) {
        let corpus = random_small_corpus(seed, 25);
        let short = partition_all(&corpus, w).unwrap();
        let long = partition_all(&corpus, w + d).unwrap();
        for ((i, a), (j, b)) in short.iter().zip(&long) {
            prop_assert_eq!(i, j);
            prop_assert_eq!(a.f, a.n_i + a.n_j);
            prop_assert!(a.f <= b.f && a.n_i <= b.n_i && a.n_j <= b.n_j && a.n_k <= b.n_k);
        }
    }

    #[test]
    fn mcd_is_f_times_cd_exactly(c in counts()) {
        match (mcd_fraction(&c), cd_fraction(&c)) {
            (Some(m), Some(cd)) => {
                prop_assert_eq!(m.num * cd.den, c.f as i128 * cd.num * m.den);
            }
            (None, None) => prop_assert_eq!(c.n_i + c.n_j + c.n_k, 0),
            _ => prop_assert!(false, "definedness differs"),
        }
    }

    #[test]
    fn index_ranges_and_decomposition(c in counts()) {
        let s = disruption_indices(&c).unwrap();
        if let (Some(cd), Some(d), Some(k)) = (s.cd, s.csf_d, s.csf_c) {
            prop_assert!((cd - (d - k)).abs() <= 1e-15);
            prop_assert!((-1.0..=1.0).contains(&cd));
            prop_assert!((0.0..=1.0).contains(&d) && (0.0..=1.0).contains(&k));
        }
        if let Some(b) = s.bdtc {
            prop_assert!((-1.0..=1.0).contains(&b));
        }
        if let Some(b) = s.bwh {
            prop_assert!((0.0..=1.0).contains(&b));
        }
    }

    #[test]
    fn index_monotonicity(c in counts()) {
        let base = disruption_indices(&c).unwrap();
        let more_i = disruption_indices(&SuccessorCounts::new(c.n_i + 1, c.n_j, c.n_k)).unwrap();
        let more_j = disruption_indices(&SuccessorCounts::new(c.n_i, c.n_j + 1, c.n_k)).unwrap();
        let le = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => a <= b,
            _ => true,
        };
        prop_assert!(le(base.cd, more_i.cd) && le(base.bdtc, more_i.bdtc));
        prop_assert!(le(base.csf_d, more_i.csf_d) && le(base.bwh, more_i.bwh));
        prop_assert!(le(more_j.cd, base.cd) && le(more_j.bdtc, base.bdtc) && le(more_j.bwh, base.bwh));
    }

    #[test]
    fn ranks_preserve_order(values in prop::collection::vec(-50i32..50, 1..60), groups in prop::collection::vec(0u8..3, 60)) {
        let v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
        let gr = &groups[..v.len()];
        let g = ranks(&v, gr);
        for a in 0..v.len() {
            prop_assert!(g[a] > 0.0 && g[a] <= 1.0);
            let group_max = (0..v.len()).filter(|&b| gr[b] == gr[a]).all(|b| v[b] <= v[a]);
            prop_assert_eq!(group_max, g[a] == 1.0);
            for b in 0..v.len() {
                if gr[a] == gr[b] && v[a] < v[b] {
                    prop_assert!(g[a] <= g[b]);
                }
                if gr[a] == gr[b] && v[a] == v[b] {
                    prop_assert_eq!(g[a], g[b]);
                }
            }
        }
    }

    #[test]
    fn mean_rank_identity(values in prop::collection::vec(-1000i32..1000, 1..80)) {
        let n = values.len();
        let v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
        let vals: Vec<Option<f64>> = v.iter().map(|&x| Some(x)).collect();
        let r = percentile_rank(&vals, &vec![0u8; n], UndefinedPolicy::Exclude).unwrap();
        let sum_le: u64 = r.iter().map(|r| r.unwrap().le).sum();
        let mut distinct = v.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let tri = (n * (n + 1) / 2) as u64;
        if distinct.len() == n {
            // mean(g) = (n+1)/(2n) as an exact rational
            prop_assert_eq!(sum_le, tri);
        } else {
            prop_assert!(sum_le >= tri);
        }
    }

    #[test]
    fn ranks_invariant_under_increasing_maps(values in prop::collection::vec(-5.0f64..5.0, 1..50), groups in prop::collection::vec(0u8..2, 50)) {
        let gr = &groups[..values.len()];
        let base = ranks(&values, gr);
        let cubed: Vec<f64> = values.iter().map(|x| x.powi(3) + 2.0 * x).collect();
        let exped: Vec<f64> = values.iter().map(|x| x.exp()).collect();
        prop_assert_eq!(&base, &ranks(&cubed, gr));
        prop_assert_eq!(&base, &ranks(&exped, gr));
    }

    #[test]
    fn power_mean_bounds_and_ordering(
        raw in prop::collection::vec(0.01f64..1.0, 3),
        g in prop::collection::vec(1e-6f64..=1.0, 3),
        s1 in -50.0f64..10.0,
        s2 in -50.0f64..10.0,
    ) {
        let w = simplex(&raw);
        let (lo, hi) = (s1.min(s2), s1.max(s2));
        let (a, b) = (mean(&g, &w, lo), mean(&g, &w, hi));
        let gmin = g.iter().cloned().fold(f64::INFINITY, f64::min);
        let gmax = g.iter().cloned().fold(0.0, f64::max);
        prop_assert!(a >= gmin * (1.0 - 1e-12) && a <= gmax * (1.0 + 1e-12));
        prop_assert!(a <= b * (1.0 + 1e-12));
    }

    #[test]
    fn power_mean_coordinate_monotone_and_homogeneous(
        raw in prop::collection::vec(0.01f64..1.0, 3),
        g in prop::collection::vec(1e-3f64..=1.0, 3),
        s in -50.0f64..10.0,
        coord in 0usize..3,
        bump in 0.0f64..1.0,
        c in 0.01f64..=1.0,
    ) {
        let w = simplex(&raw);
        let base = mean(&g, &w, s);
        let mut up = g.clone();
        up[coord] = (up[coord] + bump).min(1.0);
        prop_assert!(mean(&up, &w, s) >= base * (1.0 - 1e-12));
        let scaled: Vec<f64> = g.iter().map(|v| c * v).collect();
        prop_assert!((mean(&scaled, &w, s) - c * base).abs() <= 1e-12 * base.max(1e-300) * 10.0);
        prop_assert!((mean(&[g[0]; 3], &w, s) - g[0]).abs() <= 1e-15);
    }

    #[test]
    fn power_mean_limits(raw in prop::collection::vec(0.01f64..1.0, 3), g in prop::collection::vec(0.05f64..=1.0, 3)) {
        let w = simplex(&raw);
        let geo = g.iter().zip(&w).map(|(v, a)| a * v.ln()).sum::<f64>().exp();
        prop_assert!((mean(&g, &w, 1e-6) - geo).abs() <= 1e-9);
        prop_assert!((mean(&g, &w, -1e-6) - geo).abs() <= 1e-9);
        let gmin = g.iter().cloned().fold(f64::INFINITY, f64::min);
        let uniform = [1.0 / 3.0; 3];
        prop_assert!((mean(&g, &uniform, -100.0) - gmin).abs() <= 0.02 * gmin + 1e-12);
        prop_assert_eq!(mean(&g, &[1.0, 0.0, 0.0], 1.0), g[0]);
    }

    #[test]
    fn reparam_round_trip(raw in prop::collection::vec(0.05f64..1.0, 3), sigma in -49.0f64..9.0) {
        let r = Reparam { dims: 3, sigma_lo: -50.0, sigma_hi: 10.0 };
        let w = simplex(&raw);
        let u = r.unconstrained(&w, sigma).unwrap();
        let back = r.unconstrained(&r.weights(&u), r.sigma(&u)).unwrap();
        for (a, b) in u.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn loglik_row_order_and_duplication(seed in 0u64..1000, sigma in -20.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let mut draw = |n: usize| -> Vec<Vec<f64>> { (0..n).map(|_| (0..3).map(|_| 1.0 - rng.gen::<f64>()).collect()).collect() };
        let (cases, pop) = (draw(20), draw(200));
        let theta = DflexParams::new(vec![0.2, 0.3, 0.5], Exponent::Finite(sigma)).unwrap();
        let base = contaminated_loglik(&theta, &CalibrationSample::new(cases.clone(), pop.clone(), 0.1).unwrap()).unwrap();
        let (mut c2, mut p2) = (cases.clone(), pop.clone());
        c2.reverse();
        p2.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let permuted = contaminated_loglik(&theta, &CalibrationSample::new(c2, p2, 0.1).unwrap()).unwrap();
        prop_assert!((base - permuted).abs() <= 1e-9 * base.abs());
        let doubled = CalibrationSample::new([cases.clone(), cases].concat(), [pop.clone(), pop].concat(), 0.1).unwrap();
        let twice = contaminated_loglik(&theta, &doubled).unwrap();
        prop_assert!((twice - 2.0 * base).abs() <= 1e-9 * base.abs());
    }

    #[test]
    fn threshold_partitions_table(seed in 0u64..200, cut in 0.0f64..1.0) {
        let table = small_table(seed);
        let r = threshold_summary(&table, Measure::Dflex, Selection::Absolute(cut)).unwrap();
        prop_assert_eq!(r.selected.n_selected + r.complement.n_selected, r.n_considered);
        prop_assert_eq!(r.n_considered + r.n_undefined, table.len());
    }
}

fn small_table(seed: u64) -> Vec<dflex::normalize::ScoreRow> {
    let cfg = SynthConfig {
        n_patents: 300,
        n_groups: 2,
        seed,
        ..SynthConfig::default()
    };
    let corpus = generate_corpus(&cfg).unwrap().corpus;
    let mut table = assemble_scores(&corpus, &ScoreConfig::default()).unwrap();
    for r in table.rows.iter_mut() {
        r.dflex = r.g.map(|g| g.iter().cloned().fold(f64::INFINITY, f64::min));
    }
    table.rows
}

#[test]
fn entropy_bound_when_scores_are_flat() {
    // P = pi everywhere and pi equals the sampling share h
    let cases = vec![vec![0.5; 3]; 30];
    let pop = vec![vec![0.5; 3]; 270];
    let h = 30.0 / 300.0;
    let sample = CalibrationSample::new(cases, pop, 0.5).unwrap();
    assert!((sample.sampling_share() - h).abs() < 1e-15);
    let theta = DflexParams::new(vec![0.2, 0.3, 0.5], Exponent::Finite(-3.0)).unwrap();
    let ll = contaminated_loglik(&theta, &sample.with_prevalence(0.5).unwrap()).unwrap();
    let bound = 30.0 * h.ln() + 270.0 * (1.0 - h).ln();
    assert!((ll - bound).abs() <= 1e-9 * bound.abs(), "{ll} vs {bound}");
}

#[test]
fn fit_is_deterministic() {
    let theta = DflexParams::uniform(3, Exponent::Finite(-4.0)).unwrap();
    let sample = dflex::synth::calibration_sample(&theta, 1500, 60, 0.3, 9).unwrap();
    let init = DflexParams::uniform(3, Exponent::Finite(-1.0)).unwrap();
    let cfg = FitConfig {
        starts: 3,
        ..FitConfig::default()
    };
    let a = fit_ml(&sample, &init, &cfg).unwrap();
    let b = fit_ml(&sample, &init, &cfg).unwrap();
    assert_eq!(a.to_key_value(), b.to_key_value());
}

#[test]
fn corpus_round_trip() {
    for seed in 0..40 {
        let corpus = random_small_corpus(seed, 40);
        let dir = tempfile::tempdir().unwrap();
        let (p, c) = (dir.path().join("p.csv"), dir.path().join("c.csv"));
        write_corpus(&corpus, &p, &c).unwrap();
        let back = load_corpus(&p, &c).unwrap();
        assert_eq!(corpus.records(), back.records());
        let edges = |k: &CitationCorpus| {
            let mut e: Vec<(String, String)> = k
                .edges()
                .map(|(a, b)| (k.record(a).patent_id.clone(), k.record(b).patent_id.clone()))
                .collect();
            e.sort();
            e
        };
        assert_eq!(edges(&corpus), edges(&back));
    }
}

#[test]
fn synth_is_deterministic_and_planted_patents_score_higher() {
    let cfg = SynthConfig {
        n_patents: 3000,
        planted_fraction: 0.03,
        seed: 4,
        ..SynthConfig::default()
    };
    let (a, b) = (
        generate_corpus(&cfg).unwrap(),
        generate_corpus(&cfg).unwrap(),
    );
    let dir = tempfile::tempdir().unwrap();
    let files = |tag: &str| {
        (
            dir.path().join(format!("{tag}p.csv")),
            dir.path().join(format!("{tag}c.csv")),
        )
    };
    let ((pa, ca), (pb, cb)) = (files("a"), files("b"));
    write_corpus(&a.corpus, &pa, &ca).unwrap();
    write_corpus(&b.corpus, &pb, &cb).unwrap();
    assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
    assert_eq!(std::fs::read(&ca).unwrap(), std::fs::read(&cb).unwrap());

    let table = assemble_scores(&a.corpus, &ScoreConfig::default()).unwrap();
    let (mut planted, mut rest) = (Vec::new(), Vec::new());
    for r in table.scored() {
        let m = r.g.unwrap().iter().cloned().fold(f64::INFINITY, f64::min);
        if a.planted.contains(&r.patent_id) {
            planted.push(m);
        } else {
            rest.push(m);
        }
    }
    let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(!planted.is_empty());
    assert!(avg(&planted) > avg(&rest));
}

#[test]
fn report_invariants_on_synthetic_table() {
    let cfg = SynthConfig {
        n_patents: 2000,
        seed: 12,
        ..SynthConfig::default()
    };
    let corpus = generate_corpus(&cfg).unwrap().corpus;
    let mut table = assemble_scores(&corpus, &ScoreConfig::default()).unwrap();
    for r in table.rows.iter_mut() {
        r.dflex = r.g.map(|g| dflex::aggregate::dflex_min(&g).unwrap());
    }
    for p in trend_panels(&table.rows).unwrap() {
        for s in [p.share_at_least_090, p.share_below_030] {
            assert!((0.0..=1.0).contains(&s));
        }
        let year: Vec<f64> = table
            .rows
            .iter()
            .filter(|r| r.grant_year == p.year && (p.group == "all" || r.group_code == p.group))
            .filter_map(|r| r.dflex)
            .collect();
        let lo = year.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = year.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(p.p90 >= lo && p.p90 <= hi, "{} {}", p.group, p.year);
    }
    let from = chrono::NaiveDate::from_ymd_opt(1985, 1, 1).unwrap();
    let to = chrono::NaiveDate::from_ymd_opt(1995, 12, 31).unwrap();
    let horizon = chrono::NaiveDate::from_ymd_opt(2010, 12, 31).unwrap();
    let v = long_term_bins(
        &corpus,
        &table.rows,
        (from, to),
        horizon,
        60,
        10,
        TopThreshold::Percentile(0.99),
    )
    .unwrap();
    assert_eq!(v.bins.iter().map(|b| b.count).sum::<usize>(), v.cohort_size);
    assert!(v
        .bins
        .iter()
        .all(|b| b.mean_long_term.is_none_or(|m| m >= 0.0)));
    assert_eq!(fmt_f64(0.1), "0.10000000000000001");
}
