//! Weighted generalized power mean of normalized feature scores (D_FLEX).

use crate::error::{Error, Result};

/// Default `|sigma|` below which the geometric limit is used.
pub const GEOMETRIC_THRESHOLD: f64 = 1e-6;

const SIMPLEX_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Finite(f64),
    NegInfinity,
    PosInfinity,
}

impl Exponent {
    pub fn from_f64(sigma: f64) -> Self {
        if sigma == f64::NEG_INFINITY {
            Exponent::NegInfinity
        } else if sigma == f64::INFINITY {
            Exponent::PosInfinity
        } else {
            Exponent::Finite(sigma)
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Exponent::Finite(s) => s,
            Exponent::NegInfinity => f64::NEG_INFINITY,
            Exponent::PosInfinity => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    /// Weights are non-negative and sum to one.
    Simplex,
    /// Weights act as free exponents of a product; geometric limit only.
    FreeExponents,
}

/// Evaluation shortcuts exposed on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Exact,
    Min,
    Max,
    Geometric,
}

impl std::str::FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(EvalMode::Exact),
            "min" => Ok(EvalMode::Min),
            "max" => Ok(EvalMode::Max),
            "geometric" => Ok(EvalMode::Geometric),
            other => Err(Error::Usage(format!(
                "unknown mode `{other}` (expected exact, min, max or geometric)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DflexParams {
    pub weights: Vec<f64>,
    pub exponent: Exponent,
    pub weight_mode: WeightMode,
    pub geometric_threshold: f64,
}

impl DflexParams {
    pub fn new(weights: Vec<f64>, exponent: Exponent) -> Result<Self> {
        let p = DflexParams {
            weights,
            exponent,
            weight_mode: WeightMode::Simplex,
            geometric_threshold: GEOMETRIC_THRESHOLD,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn uniform(dims: usize, exponent: Exponent) -> Result<Self> {
        if dims == 0 {
            return Err(Error::invalid("at least one dimension is required"));
        }
        Self::new(vec![1.0 / dims as f64; dims], exponent)
    }

    /// Product `prod g_s^{e_s}` with unrestricted non-negative exponents.
    pub fn free_exponents(exponents: Vec<f64>) -> Result<Self> {
        let p = DflexParams {
            weights: exponents,
            exponent: Exponent::Finite(0.0),
            weight_mode: WeightMode::FreeExponents,
            geometric_threshold: GEOMETRIC_THRESHOLD,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn from_mode(mode: EvalMode, weights: Vec<f64>, sigma: f64) -> Result<Self> {
        let exponent = match mode {
            EvalMode::Exact => Exponent::from_f64(sigma),
            EvalMode::Min => Exponent::NegInfinity,
            EvalMode::Max => Exponent::PosInfinity,
            EvalMode::Geometric => Exponent::Finite(0.0),
        };
        Self::new(weights, exponent)
    }

    pub fn dims(&self) -> usize {
        self.weights.len()
    }

    fn is_geometric(&self) -> bool {
        matches!(self.exponent, Exponent::Finite(s) if s.abs() <= self.geometric_threshold)
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::invalid("at least one weight is required"));
        }
        if let Some(w) = self.weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::invalid(format!(
                "weight {w} is not a finite non-negative number"
            )));
        }
        if !(self.geometric_threshold >= 0.0 && self.geometric_threshold.is_finite()) {
            return Err(Error::invalid(
                "geometric threshold must be finite and non-negative",
            ));
        }
        if let Exponent::Finite(s) = self.exponent {
            if !s.is_finite() {
                return Err(Error::invalid(format!("exponent {s} is not finite")));
            }
        }
        match self.weight_mode {
            WeightMode::Simplex => {
                let sum: f64 = self.weights.iter().sum();
                if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
                    return Err(Error::invalid(format!("weights sum to {sum}, expected 1")));
                }
            }
            WeightMode::FreeExponents => {
                if !self.is_geometric() {
                    return Err(Error::invalid(
                        "free-exponent weights are only defined in the geometric limit",
                    ));
                }
            }
        }
        Ok(())
    }
}

fn check_scores(g: &[f64], dims: usize) -> Result<()> {
    if g.is_empty() {
        return Err(Error::EmptyInput("score vector"));
    }
    if g.len() != dims {
        return Err(Error::invalid(format!(
            "{} scores for {} weights",
            g.len(),
            dims
        )));
    }
    if let Some(v) = g.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid(format!("score {v} outside [0,1]")));
    }
    Ok(())
}

/// Weighted generalized mean `(sum_s a_s g_s^sigma)^(1/sigma)`.
///
/// Coordinates with zero weight are ignored. Finite exponents are evaluated
/// relative to the smallest (`sigma < 0`) or largest (`sigma > 0`) active
/// score, which keeps every power in `[0, 1]`.
pub fn generalized_mean(g: &[f64], params: &DflexParams) -> Result<f64> {
    params.validate()?;
    check_scores(g, params.dims())?;
    Ok(mean_unchecked(g, params))
}

pub(crate) fn mean_unchecked(g: &[f64], params: &DflexParams) -> f64 {
    let active = || {
        g.iter()
            .zip(&params.weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(&v, &w)| (v, w))
    };
    if params.weight_mode == WeightMode::FreeExponents {
        return geometric(active());
    }
    let (lo, hi) = active().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (v, _)| {
        (lo.min(v), hi.max(v))
    });
    let sigma = match params.exponent {
        Exponent::NegInfinity => return lo,
        Exponent::PosInfinity => return hi,
        Exponent::Finite(s) => s,
    };
    let m = if sigma.abs() <= params.geometric_threshold {
        geometric(active())
    } else {
        let anchor = if sigma < 0.0 { lo } else { hi };
        if anchor == 0.0 {
            // sigma < 0 with a zero score, or every active score is zero.
            return 0.0;
        }
        let mut excess = active().map(|(_, w)| w).sum::<f64>() - 1.0;
        for (v, w) in active() {
            if v > 0.0 {
                excess += w * (sigma * (v / anchor).ln()).exp_m1();
            } else {
                // sigma > 0 and v = 0: v^sigma = 0.
                excess -= w;
            }
        }
        anchor * (excess.ln_1p() / sigma).exp()
    };
    m.clamp(lo, hi)
}

fn geometric(active: impl Iterator<Item = (f64, f64)>) -> f64 {
    let mut log_sum = 0.0;
    for (v, w) in active {
        if v == 0.0 {
            return 0.0;
        }
        log_sum += w * v.ln();
    }
    log_sum.exp()
}

/// Coordinate-wise minimum, the strict-complement limit.
pub fn dflex_min(g: &[f64]) -> Result<f64> {
    check_scores(g, g.len())?;
    Ok(g.iter().copied().fold(f64::INFINITY, f64::min))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub max_abs_gap: f64,
    pub mean_abs_gap: f64,
    /// Row index attaining the maximum gap.
    pub argmax: usize,
}

/// Distance between the exact mean and the minimum approximation per row.
pub fn approximation_gap<R: AsRef<[f64]>>(params: &DflexParams, rows: &[R]) -> Result<GapReport> {
    if !matches!(params.exponent, Exponent::Finite(_)) {
        return Err(Error::invalid("approximation gap needs a finite exponent"));
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("score table"));
    }
    let mut report = GapReport {
        max_abs_gap: 0.0,
        mean_abs_gap: 0.0,
        argmax: 0,
    };
    let mut total = 0.0;
    for (i, row) in rows.iter().enumerate() {
        let g = row.as_ref();
        let gap = (generalized_mean(g, params)? - dflex_min(g)?).abs();
        total += gap;
        if gap > report.max_abs_gap {
            report.max_abs_gap = gap;
            report.argmax = i;
        }
    }
    report.mean_abs_gap = total / rows.len() as f64;
    Ok(report)
}
