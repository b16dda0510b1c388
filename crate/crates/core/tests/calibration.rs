use dflex::aggregate::{DflexParams, Exponent};
use dflex::calibrate::{
    contaminated_loglik, fit_gmm, fit_ml, CalibrationSample, FitConfig, PROB_CLAMP,
};
use dflex::synth::{calibration_sample, uniform_prevalence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The membership log-likelihood written out term by term.
fn straight_line_loglik(
    w: &[f64],
    sigma: f64,
    cases: &[Vec<f64>],
    pop: &[Vec<f64>],
    pi: f64,
) -> f64 {
    let h = cases.len() as f64 / (cases.len() + pop.len()) as f64;
    let p = |g: &[f64]| {
        let m = g
            .iter()
            .zip(w)
            .map(|(v, a)| a * v.powf(sigma))
            .sum::<f64>()
            .powf(1.0 / sigma);
        m.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    };
    let mut ll = 0.0;
    for g in cases {
        let r = h * p(g) / pi;
        ll += (r / (r + 1.0 - h)).ln();
    }
    for g in pop {
        let r = h * p(g) / pi;
        ll += ((1.0 - h) / (r + 1.0 - h)).ln();
    }
    ll
}

#[test]
fn loglik_matches_straight_line_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..50 {
        let mut draw = |n: usize| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| (0..3).map(|_| 1.0 - rng.gen::<f64>()).collect())
                .collect()
        };
        let (cases, pop) = (draw(25), draw(400));
        let raw: Vec<f64> = (0..3).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let sigma = rng.gen_range(-12.0..4.0);
        let pi = rng.gen_range(0.05..0.6);
        let theta = DflexParams::new(w.clone(), Exponent::Finite(sigma)).unwrap();
        let got = contaminated_loglik(
            &theta,
            &CalibrationSample::new(cases.clone(), pop.clone(), pi).unwrap(),
        )
        .unwrap();
        let want = straight_line_loglik(&w, sigma, &cases, &pop, pi);
        assert!((got - want).abs() <= 1e-12 * want.abs(), "{got} vs {want}");
    }
}

#[test]
fn cases_at_the_minimum_give_negative_exponent() {
    // cases have min(g) near 1, the population is uniform
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pop: Vec<Vec<f64>> = (0..3000)
        .map(|_| (0..3).map(|_| 1.0 - rng.gen::<f64>()).collect())
        .collect();
    let cases: Vec<Vec<f64>> = (0..150)
        .map(|_| (0..3).map(|_| rng.gen_range(0.85..=1.0)).collect())
        .collect();
    let sample = CalibrationSample::new(cases, pop, 0.05).unwrap();
    let init = DflexParams::uniform(3, Exponent::Finite(-1.0)).unwrap();
    let cfg = FitConfig {
        starts: 4,
        ..FitConfig::default()
    };
    let ml = fit_ml(&sample, &init, &cfg).unwrap();
    assert!(ml.sigma <= -2.0, "{}", ml.sigma);
}

#[test]
fn moderate_exponent_is_recovered() {
    let truth = DflexParams::new(vec![0.5, 0.3, 0.2], Exponent::Finite(-3.0)).unwrap();
    let pi = uniform_prevalence(&truth, 60);
    let sample = calibration_sample(&truth, 6000, 600, pi, 21).unwrap();
    let init = DflexParams::uniform(3, Exponent::Finite(-1.0)).unwrap();
    let cfg = FitConfig {
        starts: 4,
        gmm_starts: 2,
        ..FitConfig::default()
    };
    let ml = fit_ml(&sample, &init, &cfg).unwrap();
    assert!(ml.converged);
    assert!(ml.log_likelihood >= contaminated_loglik(&truth, &sample).unwrap());
    assert!((ml.sigma + 3.0).abs() < 2.0, "{}", ml.sigma);
    for (w, t) in ml.weights.iter().zip([0.5, 0.3, 0.2]) {
        assert!((w - t).abs() < 0.15, "{:?}", ml.weights);
    }
    assert!(ml.moment_norm <= 1e-6);
    let gmm = fit_gmm(&sample, &init, &cfg).unwrap();
    assert!(gmm.moment_norm <= 1e-6);
    assert!((gmm.sigma - ml.sigma).abs() < 1e-3);
    for (a, b) in gmm.weights.iter().zip(&ml.weights) {
        assert!((a - b).abs() < 1e-3);
    }
}

/// Ten times the acceptance sample size; about a minute per seed.
#[test]
#[ignore]
fn large_sample_recovers_uniform_weights_and_strong_exponent() {
    let truth = DflexParams::uniform(3, Exponent::Finite(-8.0)).unwrap();
    let pi = uniform_prevalence(&truth, 100);
    let init = DflexParams::uniform(3, Exponent::Finite(-1.0)).unwrap();
    for seed in [1, 3] {
        let sample = calibration_sample(&truth, 200_000, 2000, pi, seed).unwrap();
        let ml = fit_ml(&sample, &init, &FitConfig::default()).unwrap();
        assert!(ml.converged);
        assert!(ml.sigma < -5.0 && ml.sigma > -12.0, "{}", ml.sigma);
        for w in &ml.weights {
            assert!((w - 1.0 / 3.0).abs() <= 0.15, "{:?}", ml.weights);
        }
    }
}
