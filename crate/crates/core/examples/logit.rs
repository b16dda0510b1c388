//! Logistic regression of planted labels on D_FLEX, with the average
//! marginal effect and a linear probability model alongside.

use dflex::aggregate::dflex_min;
use dflex::analysis::logit_fit;
use dflex::normalize::{assemble_scores, ScoreConfig};
use dflex::synth::{generate_corpus, SynthConfig};
use nalgebra::DMatrix;

fn main() -> dflex::Result<()> {
    let synth = generate_corpus(&SynthConfig {
        n_patents: 4000,
        planted_fraction: 0.05,
        seed: 11,
        ..SynthConfig::default()
    })?;
    let table = assemble_scores(&synth.corpus, &ScoreConfig::default())?;
    let mut labels = Vec::new();
    let mut score = Vec::new();
    for r in table.scored() {
        labels.push(r.case_label == Some(true));
        score.push(dflex_min(&r.g.expect("scored"))?);
    }
    let x = DMatrix::from_fn(score.len(), 2, |i, j| if j == 0 { 1.0 } else { score[i] });
    let fit = logit_fit(&labels, &x, &["const".into(), "dflex".into()])?;
    for j in 0..2 {
        println!(
            "{:<6} coef {:>8.4} se {:>7.4} p {:>9.2e} AME {:>7.4} | LPM {:>7.4} (p {:.2e})",
            fit.names[j],
            fit.coefficients[j],
            fit.std_errors[j],
            fit.p_values[j],
            fit.marginal_effects[j],
            fit.linear_probability.coefficients[j],
            fit.linear_probability.p_values[j],
        );
    }
    Ok(())
}
