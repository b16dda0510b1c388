//! Recovering the aggregator's exponent from a synthetic case-population
//! sample by maximum likelihood and by score-based moments.

use dflex::aggregate::{DflexParams, Exponent};
use dflex::calibrate::{contaminated_loglik, fit_gmm, fit_ml, FitConfig};
use dflex::synth::{calibration_sample, uniform_prevalence};

fn main() -> dflex::Result<()> {
    let truth = DflexParams::uniform(3, Exponent::Finite(-8.0))?;
    let pi = uniform_prevalence(&truth, 60);
    let sample = calibration_sample(&truth, 5000, 100, pi, 7)?;
    println!(
        "prevalence {pi:.4}; log-likelihood at the truth {:.4}",
        contaminated_loglik(&truth, &sample)?
    );

    let init = DflexParams::uniform(3, Exponent::Finite(-1.0))?;
    let config = FitConfig {
        starts: 4,
        gmm_starts: 2,
        ..FitConfig::default()
    };
    let ml = fit_ml(&sample, &init, &config)?;
    print!("maximum likelihood\n{}", ml.to_key_value());
    let gmm = fit_gmm(&sample, &init, &config)?;
    print!("\nscore moments\n{}", gmm.to_key_value());
    Ok(())
}
