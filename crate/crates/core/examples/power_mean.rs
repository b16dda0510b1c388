//! How the weighted power mean moves from the arithmetic mean toward the
//! minimum as the exponent decreases.

use dflex::aggregate::{dflex_min, generalized_mean, DflexParams, Exponent};

fn main() -> dflex::Result<()> {
    let g = [0.989, 0.806, 0.973];
    println!("g = {g:?}, min = {}", dflex_min(&g)?);
    for sigma in [1.0, 0.0, -1.0, -4.0, -8.0, -20.0, -50.0, -100.0] {
        let p = DflexParams::uniform(3, Exponent::Finite(sigma))?;
        println!("sigma = {sigma:>6}: M = {:.6}", generalized_mean(&g, &p)?);
    }
    let p = DflexParams::uniform(3, Exponent::NegInfinity)?;
    println!("sigma = -inf  : M = {:.6}", generalized_mean(&g, &p)?);

    // Weights act through alpha^(1/sigma): unequal weights shift the mean
    // away from the minimum until |sigma| is large.
    let skewed = DflexParams::new(vec![0.6, 0.1, 0.3], Exponent::Finite(-8.0))?;
    println!(
        "skewed weights, sigma = -8: M = {:.6}",
        generalized_mean(&g, &skewed)?
    );
    Ok(())
}
