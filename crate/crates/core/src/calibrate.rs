//! Estimation of the aggregator's weights and exponent from a case sample
//! and an unlabeled ("contaminated") population sample.
//!
//! With sampling share `h = n1 / (n1 + n0)`, prevalence `pi` and model
//! probability `P(x)`, a row belongs to the case stratum with probability
//! `r / (r + 1 - h)` where `r = h P(x) / pi`. The log-likelihood is the sum
//! of the log membership probabilities of every row.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::aggregate::{approximation_gap, mean_unchecked, DflexParams, Exponent};
use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::optim::{nelder_mead, SimplexOptions};

/// Lower clamp for model probabilities; the upper clamp is `1 - PROB_CLAMP`.
pub const PROB_CLAMP: f64 = 1e-9;

const CHUNK: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSample {
    cases: Vec<Vec<f64>>,
    population: Vec<Vec<f64>>,
    prevalence: f64,
}

impl CalibrationSample {
    pub fn new(cases: Vec<Vec<f64>>, population: Vec<Vec<f64>>, prevalence: f64) -> Result<Self> {
        if cases.is_empty() {
            return Err(Error::EmptyInput("case stratum"));
        }
        if population.is_empty() {
            return Err(Error::EmptyInput("population stratum"));
        }
        if !(prevalence > 0.0 && prevalence < 1.0) {
            return Err(Error::invalid(format!(
                "prevalence {prevalence} outside (0,1)"
            )));
        }
        let dims = cases[0].len();
        if dims == 0 {
            return Err(Error::invalid("rows need at least one score"));
        }
        for row in cases.iter().chain(&population) {
            if row.len() != dims {
                return Err(Error::invalid(format!(
                    "row of width {} in a sample of width {dims}",
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
                return Err(Error::invalid(format!("score {v} outside (0,1]")));
            }
        }
        Ok(CalibrationSample {
            cases,
            population,
            prevalence,
        })
    }

    pub fn with_prevalence(&self, prevalence: f64) -> Result<Self> {
        Self::new(self.cases.clone(), self.population.clone(), prevalence)
    }

    pub fn cases(&self) -> &[Vec<f64>] {
        &self.cases
    }

    pub fn population(&self) -> &[Vec<f64>] {
        &self.population
    }

    pub fn prevalence(&self) -> f64 {
        self.prevalence
    }

    pub fn dims(&self) -> usize {
        self.cases[0].len()
    }

    /// Share of case rows in the pooled sample.
    pub fn sampling_share(&self) -> f64 {
        let n1 = self.cases.len() as f64;
        n1 / (n1 + self.population.len() as f64)
    }
}

/// Conditional log-likelihood of stratum membership under the aggregator.
pub fn contaminated_loglik(theta: &DflexParams, sample: &CalibrationSample) -> Result<f64> {
    theta.validate()?;
    if theta.dims() != sample.dims() {
        return Err(Error::invalid(format!(
            "{} weights for {}-dimensional scores",
            theta.dims(),
            sample.dims()
        )));
    }
    Ok(loglik_unchecked(theta, sample))
}

fn loglik_unchecked(theta: &DflexParams, sample: &CalibrationSample) -> f64 {
    let h = sample.sampling_share();
    let scale = h / sample.prevalence;
    let log_rest = (1.0 - h).ln();
    let term = |g: &Vec<f64>, case: bool| {
        let p = mean_unchecked(g, theta).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let r = scale * p;
        let denom = (r + 1.0 - h).ln();
        if case {
            r.ln() - denom
        } else {
            log_rest - denom
        }
    };
    // Fixed chunking keeps the summation order independent of thread count.
    let partial = |rows: &[Vec<f64>], case: bool| -> f64 {
        rows.par_chunks(CHUNK)
            .map(|chunk| chunk.iter().map(|g| term(g, case)).sum::<f64>())
            .collect::<Vec<f64>>()
            .into_iter()
            .sum()
    };
    partial(&sample.cases, true) + partial(&sample.population, false)
}

/// Unconstrained coordinates: `dims - 1` weight logits (the last logit is
/// fixed at zero) followed by a logistic transform of the exponent into
/// the open interval `(sigma_lo, sigma_hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reparam {
    pub dims: usize,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
}

impl Reparam {
    pub fn len(&self) -> usize {
        self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.dims == 0
    }

    pub fn weights(&self, u: &[f64]) -> Vec<f64> {
        let logits = u[..self.dims - 1]
            .iter()
            .copied()
            .chain(std::iter::once(0.0));
        let top = logits.clone().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = logits.map(|l| (l - top).exp()).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }

    pub fn sigma(&self, u: &[f64]) -> f64 {
        let t = u[self.dims - 1];
        let logistic = if t >= 0.0 {
            1.0 / (1.0 + (-t).exp())
        } else {
            let e = t.exp();
            e / (1.0 + e)
        };
        self.sigma_lo + (self.sigma_hi - self.sigma_lo) * logistic
    }

    pub fn params(&self, u: &[f64]) -> DflexParams {
        let mut p = DflexParams::new(self.weights(u), Exponent::Finite(self.sigma(u)))
            .expect("softmax weights lie on the simplex");
        // Never collapse to the geometric branch inside the optimizer's
        // finite differences; the threshold only guards exact zeros.
        p.geometric_threshold = 0.0;
        p
    }

    pub fn unconstrained(&self, weights: &[f64], sigma: f64) -> Result<Vec<f64>> {
        if weights.len() != self.dims {
            return Err(Error::invalid(
                "weight count does not match parameterization",
            ));
        }
        let last = weights[self.dims - 1];
        if weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::invalid("interior weights required"));
        }
        if !(sigma > self.sigma_lo && sigma < self.sigma_hi) {
            return Err(Error::invalid(format!(
                "sigma {sigma} outside ({}, {})",
                self.sigma_lo, self.sigma_hi
            )));
        }
        let mut u: Vec<f64> = weights[..self.dims - 1]
            .iter()
            .map(|w| (w / last).ln())
            .collect();
        u.push(((sigma - self.sigma_lo) / (self.sigma_hi - sigma)).ln());
        Ok(u)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub sigma_bounds: (f64, f64),
    /// Total number of optimizer starts, including the supplied initial point.
    pub starts: usize,
    /// Starts used by the moment solver.
    pub gmm_starts: usize,
    pub seed: u64,
    pub simplex: SimplexOptions,
    /// Moment-norm tolerance for the GMM solution.
    pub moment_tolerance: f64,
    pub gmm_max_iter: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            sigma_bounds: (-50.0, 10.0),
            starts: 8,
            gmm_starts: 4,
            seed: 0,
            // the score refinement after the simplex search supplies precision
            simplex: SimplexOptions {
                max_iter: 1000,
                ftol: 1e-10,
                xtol: 1e-6,
                step: 0.5,
            },
            moment_tolerance: 1e-6,
            gmm_max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    MaximumLikelihood,
    Moments,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::MaximumLikelihood => "ml",
            Estimator::Moments => "gmm",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub estimator: Estimator,
    pub weights: Vec<f64>,
    pub sigma: f64,
    pub log_likelihood: f64,
    pub converged: bool,
    /// Local curvature determines every parameter.
    pub identified: bool,
    /// Exponent estimate sits on the edge of its box.
    pub at_boundary: bool,
    pub iterations: usize,
    pub evaluations: usize,
    /// Largest `|M_sigma - min|` over the fitting rows.
    pub min_approx_gap: f64,
    /// Norm of the score moments at the estimate.
    pub moment_norm: f64,
    pub prevalence: f64,
    pub seed: u64,
}

impl FitResult {
    pub fn params(&self) -> Result<DflexParams> {
        DflexParams::new(self.weights.clone(), Exponent::Finite(self.sigma))
    }

    /// Flat `key=value` rendering.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("estimator={}\n", self.estimator.name()));
        for (i, w) in self.weights.iter().enumerate() {
            out.push_str(&format!("alpha{}={}\n", i + 1, fmt_f64(*w)));
        }
        out.push_str(&format!("sigma={}\n", fmt_f64(self.sigma)));
        out.push_str(&format!("loglik={}\n", fmt_f64(self.log_likelihood)));
        out.push_str(&format!("converged={}\n", self.converged));
        out.push_str(&format!("identified={}\n", self.identified));
        out.push_str(&format!("at_boundary={}\n", self.at_boundary));
        out.push_str(&format!("iterations={}\n", self.iterations));
        out.push_str(&format!("evaluations={}\n", self.evaluations));
        out.push_str(&format!(
            "min_approx_gap={}\n",
            fmt_f64(self.min_approx_gap)
        ));
        out.push_str(&format!("moment_norm={}\n", fmt_f64(self.moment_norm)));
        out.push_str(&format!("pi={}\n", fmt_f64(self.prevalence)));
        out.push_str(&format!("seed={}\n", self.seed));
        out
    }

    /// Reads the weights and exponent back from [`FitResult::to_key_value`] output.
    pub fn params_from_key_value(text: &str) -> Result<DflexParams> {
        let mut weights: Vec<(usize, f64)> = Vec::new();
        let mut sigma = None;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("malformed line `{line}`")))?;
            let num = || {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::invalid(format!("`{k}` is not a number")))
            };
            if let Some(i) = k.trim().strip_prefix("alpha") {
                let i: usize = i
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad key `{k}`")))?;
                weights.push((i, num()?));
            } else if k.trim() == "sigma" {
                sigma = Some(num()?);
            }
        }
        weights.sort_by_key(|&(i, _)| i);
        if weights.iter().enumerate().any(|(j, &(i, _))| i != j + 1) {
            return Err(Error::invalid("weights must be numbered alpha1..alphaS"));
        }
        let sigma = sigma.ok_or_else(|| Error::invalid("missing `sigma`"))?;
        DflexParams::new(
            weights.into_iter().map(|(_, w)| w).collect(),
            Exponent::from_f64(sigma),
        )
    }
}

/// Largest magnitude of any unconstrained coordinate the optimizers visit.
const COORD_BOX: f64 = 30.0;

/// Log-likelihood in unconstrained coordinates over log scores.
struct Objective {
    dims: usize,
    log_cases: Vec<f64>,
    log_population: Vec<f64>,
    h: f64,
    prevalence: f64,
    reparam: Reparam,
    gap_rows: Vec<Vec<f64>>,
}

impl Objective {
    fn new(sample: &CalibrationSample, reparam: Reparam) -> Self {
        let flat = |rows: &[Vec<f64>]| rows.iter().flatten().map(|v| v.ln()).collect();
        Objective {
            dims: sample.dims(),
            log_cases: flat(&sample.cases),
            log_population: flat(&sample.population),
            h: sample.sampling_share(),
            prevalence: sample.prevalence,
            reparam,
            gap_rows: sample
                .cases
                .iter()
                .chain(&sample.population)
                .cloned()
                .collect(),
        }
    }

    fn loglik(&self, u: &[f64]) -> f64 {
        if u.iter().any(|v| !(v.abs() <= COORD_BOX)) {
            return f64::NEG_INFINITY;
        }
        let weights = self.reparam.weights(u);
        let sigma = self.reparam.sigma(u);
        let (h, d) = (self.h, self.dims);
        let scale = h / self.prevalence;
        let log_scale = scale.ln();
        let log_rest = (1.0 - h).ln();
        let weight_excess = weights.iter().sum::<f64>() - 1.0;
        let (log_lo, log_hi) = (PROB_CLAMP.ln(), (-PROB_CLAMP).ln_1p());
        // ln M(g) from ln g, anchored at the extreme coordinate.
        let log_mean = |lg: &[f64]| {
            let (lo, hi) = lg
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                    (a.min(v), b.max(v))
                });
            if sigma == 0.0 {
                return lg
                    .iter()
                    .zip(&weights)
                    .map(|(v, w)| v * w)
                    .sum::<f64>()
                    .clamp(lo, hi);
            }
            let anchor = if sigma < 0.0 { lo } else { hi };
            let mut excess = weight_excess;
            for (v, w) in lg.iter().zip(&weights) {
                if *v != anchor {
                    excess += w * (sigma * (v - anchor)).exp_m1();
                }
            }
            (anchor + excess.ln_1p() / sigma).clamp(lo, hi)
        };
        let term = |lg: &[f64], case: bool| {
            let log_p = log_mean(lg).clamp(log_lo, log_hi);
            let r = scale * log_p.exp();
            let denom = (r + 1.0 - h).ln();
            if case {
                log_scale + log_p - denom
            } else {
                log_rest - denom
            }
        };
        let partial = |flat: &[f64], case: bool| -> f64 {
            flat.par_chunks(CHUNK * d)
                .map(|chunk| chunk.chunks_exact(d).map(|lg| term(lg, case)).sum::<f64>())
                .collect::<Vec<f64>>()
                .into_iter()
                .sum()
        };
        partial(&self.log_cases, true) + partial(&self.log_population, false)
    }

    /// Central-difference score with step 1e-5 in unconstrained coordinates.
    fn score(&self, u: &[f64]) -> Vec<f64> {
        const STEP: f64 = 1e-5;
        (0..u.len())
            .map(|i| {
                let mut up = u.to_vec();
                let mut dn = u.to_vec();
                up[i] += STEP;
                dn[i] -= STEP;
                (self.loglik(&up) - self.loglik(&dn)) / (2.0 * STEP)
            })
            .collect()
    }

    /// Finite-difference Jacobian of the score (the log-likelihood Hessian).
    fn score_jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        const STEP: f64 = 1e-3;
        let k = u.len();
        let mut jac = DMatrix::zeros(k, k);
        for j in 0..k {
            let mut up = u.to_vec();
            let mut dn = u.to_vec();
            up[j] += STEP;
            dn[j] -= STEP;
            let (su, sd) = (self.score(&up), self.score(&dn));
            for i in 0..k {
                jac[(i, j)] = (su[i] - sd[i]) / (2.0 * STEP);
            }
        }
        (&jac + jac.transpose()) * 0.5
    }

    /// Local maximum with curvature in every direction.
    fn identified(&self, u: &[f64]) -> bool {
        let hess = self.score_jacobian(u);
        if hess.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let eig = SymmetricEigen::new(hess).eigenvalues;
        let largest = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        largest > 1e-9 && eig.iter().all(|&v| v < -1e-9 * largest)
    }

    /// Levenberg-Marquardt on the score equations. Returns the point and
    /// its moment norm.
    fn solve_score(
        &self,
        u0: &[f64],
        tolerance: f64,
        max_iter: usize,
        iterations: &mut usize,
    ) -> (Vec<f64>, f64) {
        let mut u = u0.to_vec();
        let mut m = self.score(&u);
        let mut mnorm = norm(&m);
        let mut damping = 1e-3;
        for _ in 0..max_iter {
            if mnorm <= tolerance || !mnorm.is_finite() {
                break;
            }
            *iterations += 1;
            let jac = self.score_jacobian(&u);
            let jtj = jac.transpose() * &jac;
            let jtm = jac.transpose() * DVector::from_column_slice(&m);
            let mut improved = false;
            while damping < 1e12 {
                let scale = jtj.diagonal().map(|d| d.max(1e-12));
                let lhs = &jtj + DMatrix::from_diagonal(&(scale * damping));
                let Some(step) = lhs.lu().solve(&(-&jtm)) else {
                    damping *= 10.0;
                    continue;
                };
                let cand: Vec<f64> = u.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                let cm = self.score(&cand);
                let cn = norm(&cm);
                if cn.is_finite() && cn < mnorm {
                    u = cand;
                    m = cm;
                    mnorm = cn;
                    damping = (damping / 10.0).max(1e-12);
                    improved = true;
                    break;
                }
                damping *= 10.0;
            }
            if !improved {
                break;
            }
        }
        (u, mnorm)
    }

    fn finish(
        &self,
        estimator: Estimator,
        u: &[f64],
        solved: bool,
        iterations: usize,
        evaluations: usize,
        seed: u64,
    ) -> Result<FitResult> {
        let params = self.reparam.params(u);
        let gap = approximation_gap(&params, &self.gap_rows)?;
        let sigma = self.reparam.sigma(u);
        let span = self.reparam.sigma_hi - self.reparam.sigma_lo;
        let at_boundary = sigma - self.reparam.sigma_lo < 1e-3 * span
            || self.reparam.sigma_hi - sigma < 1e-3 * span;
        let identified = self.identified(u);
        let moment_norm = norm(&self.score(u));
        Ok(FitResult {
            estimator,
            weights: params.weights.clone(),
            sigma,
            log_likelihood: self.loglik(u),
            converged: solved && identified && !at_boundary,
            identified,
            at_boundary,
            iterations,
            evaluations,
            min_approx_gap: gap.max_abs_gap,
            moment_norm,
            prevalence: self.prevalence,
            seed,
        })
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Deterministic start grid: the supplied point followed by seeded draws.
fn start_points(
    reparam: &Reparam,
    init: &DflexParams,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let (lo, hi) = (reparam.sigma_lo, reparam.sigma_hi);
    let sigma0 = init
        .exponent
        .as_f64()
        .clamp(lo + 1e-6 * (hi - lo), hi - 1e-6 * (hi - lo));
    let w0: Vec<f64> = init.weights.iter().map(|w| w.max(1e-6)).collect();
    let total: f64 = w0.iter().sum();
    let w0: Vec<f64> = w0.iter().map(|w| w / total).collect();
    let mut first = reparam.unconstrained(&w0, sigma0)?;
    for v in &mut first {
        *v = v.clamp(-COORD_BOX, COORD_BOX);
    }
    let mut starts = vec![first];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while starts.len() < count.max(1) {
        let mut u: Vec<f64> = (0..reparam.dims - 1)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        u.push(rng.gen_range(-3.0..3.0));
        starts.push(u);
    }
    Ok(starts)
}

fn check_init(
    sample: &CalibrationSample,
    init: &DflexParams,
    config: &FitConfig,
) -> Result<Reparam> {
    init.validate()?;
    if init.dims() != sample.dims() {
        return Err(Error::invalid(
            "initial weights do not match the sample width",
        ));
    }
    let (lo, hi) = config.sigma_bounds;
    if !(lo < hi && lo.is_finite() && hi.is_finite()) {
        return Err(Error::invalid("sigma bounds must be finite with lo < hi"));
    }
    Ok(Reparam {
        dims: sample.dims(),
        sigma_lo: lo,
        sigma_hi: hi,
    })
}

/// Maximum-likelihood fit: multi-start simplex search, then Newton-type
/// refinement of the score at the best point.
pub fn fit_ml(
    sample: &CalibrationSample,
    init: &DflexParams,
    config: &FitConfig,
) -> Result<FitResult> {
    let reparam = check_init(sample, init, config)?;
    let obj = Objective::new(sample, reparam);
    let starts = start_points(&reparam, init, config.starts, config.seed)?;
    let runs: Vec<_> = starts
        .iter()
        .map(|u0| nelder_mead(|u| -obj.loglik(u), u0, &config.simplex))
        .collect();
    let mut iterations: usize = runs.iter().map(|r| r.iterations).sum();
    let mut evaluations: usize = runs.iter().map(|r| r.evaluations).sum();
    // ties resolve to the earliest start
    let best = runs
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.fx.total_cmp(&b.fx).then(i.cmp(j)))
        .map(|(_, r)| r.clone())
        .expect("at least one start");
    // restart from the best vertex to escape a prematurely collapsed simplex
    let mut polish_opts = config.simplex.clone();
    polish_opts.step = 0.05;
    let polish = nelder_mead(|u| -obj.loglik(u), &best.x, &polish_opts);
    iterations += polish.iterations;
    evaluations += polish.evaluations;
    let (mut x, fx, simplex_converged) = if polish.fx <= best.fx {
        (polish.x, polish.fx, polish.converged)
    } else {
        (best.x, best.fx, best.converged)
    };
    let mut newton_iters = 0;
    let (refined, rnorm) = obj.solve_score(
        &x,
        config.moment_tolerance,
        config.gmm_max_iter,
        &mut newton_iters,
    );
    iterations += newton_iters;
    evaluations += newton_iters * 6 * (2 * reparam.len() + 1) * reparam.len();
    let refined_fx = -obj.loglik(&refined);
    let solved = if rnorm <= config.moment_tolerance && refined_fx <= fx + 1e-9 * (1.0 + fx.abs()) {
        x = refined;
        true
    } else {
        simplex_converged
    };
    obj.finish(
        Estimator::MaximumLikelihood,
        &x,
        solved,
        iterations,
        evaluations,
        config.seed,
    )
}

/// Just-identified method of moments on the numerical score equations,
/// solved by Levenberg-Marquardt from several starts. Among roots that are
/// local maxima the one with the highest log-likelihood is returned.
pub fn fit_gmm(
    sample: &CalibrationSample,
    init: &DflexParams,
    config: &FitConfig,
) -> Result<FitResult> {
    let reparam = check_init(sample, init, config)?;
    let obj = Objective::new(sample, reparam);
    let starts = start_points(&reparam, init, config.gmm_starts, config.seed)?;
    let k = reparam.len();
    let mut iterations = 0;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut fallback: Option<(Vec<f64>, f64)> = None;
    for u0 in starts {
        let (u, mnorm) = obj.solve_score(
            &u0,
            config.moment_tolerance,
            config.gmm_max_iter,
            &mut iterations,
        );
        if mnorm <= config.moment_tolerance && obj.identified(&u) {
            let ll = obj.loglik(&u);
            if best.as_ref().is_none_or(|(_, bl)| ll > *bl) {
                best = Some((u, ll));
            }
        } else if fallback.as_ref().is_none_or(|(_, n)| mnorm < *n) {
            fallback = Some((u, mnorm));
        }
    }
    let evaluations = iterations * 6 * (2 * k + 1) * k;
    match best {
        Some((u, _)) => obj.finish(
            Estimator::Moments,
            &u,
            true,
            iterations,
            evaluations,
            config.seed,
        ),
        None => {
            let (u, _) = fallback.expect("at least one start");
            obj.finish(
                Estimator::Moments,
                &u,
                false,
                iterations,
                evaluations,
                config.seed,
            )
        }
    }
}

/// Refits over a grid of prevalence values.
pub fn prevalence_sensitivity(
    sample: &CalibrationSample,
    grid: &[f64],
    init: &DflexParams,
    config: &FitConfig,
) -> Result<Vec<FitResult>> {
    grid.iter()
        .map(|&pi| fit_ml(&sample.with_prevalence(pi)?, init, config))
        .collect()
}

/// Parses `lo:hi:n` into `n` evenly spaced values.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::Usage(format!("grid `{spec}` must look like lo:hi:n"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    match n {
        0 => Err(bad()),
        1 => Ok(vec![lo]),
        _ => Ok((0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(sigma: f64) -> DflexParams {
        DflexParams::uniform(3, Exponent::Finite(sigma)).unwrap()
    }

    #[test]
    fn symmetric_two_row_case() {
        // M(g) = 0.5 for constant rows of 0.5.
        let s = CalibrationSample::new(vec![vec![0.5; 3]], vec![vec![0.5; 3]], 0.5).unwrap();
        let ll = contaminated_loglik(&uniform(-2.0), &s).unwrap();
        assert!((ll - 2.0 * 0.5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn uninformative_model_gives_entropy_bound() {
        let pi = 0.3;
        let cases = vec![vec![pi; 3]; 4];
        let pop = vec![vec![pi; 3]; 9];
        let s = CalibrationSample::new(cases, pop, pi).unwrap();
        let h = 4.0 / 13.0;
        let expected = 4.0 * f64::ln(h) + 9.0 * f64::ln(1.0 - h);
        let ll = contaminated_loglik(&uniform(1.0), &s).unwrap();
        assert!((ll - expected).abs() < 1e-12);
    }

    #[test]
    fn invalid_samples() {
        assert!(CalibrationSample::new(vec![], vec![vec![0.5]], 0.1).is_err());
        assert!(CalibrationSample::new(vec![vec![0.5]], vec![], 0.1).is_err());
        assert!(CalibrationSample::new(vec![vec![0.5]], vec![vec![0.5]], 1.0).is_err());
        assert!(CalibrationSample::new(vec![vec![0.0]], vec![vec![0.5]], 0.5).is_err());
        assert!(CalibrationSample::new(vec![vec![0.5, 0.5]], vec![vec![0.5]], 0.5).is_err());
    }

    #[test]
    fn reparam_round_trip() {
        let r = Reparam {
            dims: 3,
            sigma_lo: -50.0,
            sigma_hi: 10.0,
        };
        for u in [[0.3, -1.2, 0.7], [-4.0, 2.5, -4.9], [0.0, 0.0, 0.0]] {
            let back = r.unconstrained(&r.weights(&u), r.sigma(&u)).unwrap();
            for (a, b) in u.iter().zip(&back) {
                assert!((a - b).abs() < 1e-12, "{u:?} -> {back:?}");
            }
        }
    }

    #[test]
    fn key_value_round_trip() {
        let fit = FitResult {
            estimator: Estimator::MaximumLikelihood,
            weights: vec![0.2, 0.3, 0.5],
            sigma: -7.5,
            log_likelihood: -100.25,
            converged: true,
            identified: true,
            at_boundary: false,
            iterations: 10,
            evaluations: 20,
            min_approx_gap: 0.01,
            moment_norm: 1e-9,
            prevalence: 0.1,
            seed: 7,
        };
        let text = fit.to_key_value();
        assert!(text.contains("alpha1=0.20000000000000001\n"));
        assert!(text.contains("sigma=-7.5\n"));
        assert!(text.contains("converged=true\n"));
        let p = FitResult::params_from_key_value(&text).unwrap();
        assert_eq!(p.weights, fit.weights);
        assert_eq!(p.exponent, Exponent::Finite(-7.5));
    }

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0.1:0.3:3").unwrap().len(), 3);
        assert!(parse_grid("0.1:0.3").is_err());
    }

    #[test]
    fn flat_sample_is_not_identified() {
        let s = CalibrationSample::new(vec![vec![0.4; 3]; 5], vec![vec![0.4; 3]; 50], 0.1).unwrap();
        let cfg = FitConfig {
            starts: 2,
            gmm_starts: 1,
            ..Default::default()
        };
        let ml = fit_ml(&s, &uniform(-1.0), &cfg).unwrap();
        assert!(!ml.converged);
        assert!(!ml.identified);
        let gmm = fit_gmm(&s, &uniform(-1.0), &cfg).unwrap();
        assert!(!gmm.converged);
    }
}
