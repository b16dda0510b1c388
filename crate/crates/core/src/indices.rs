//! Disruption and consolidation indices computed from successor counts.
//!
//! Every index is a ratio of integers evaluated with a single division, so
//! results are bit-reproducible. A zero denominator yields `None`.

use crate::corpus::SuccessorCounts;
use crate::error::{Error, Result};

/// Exact integer ratio `num / den` with `den > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fraction {
    pub num: i128,
    pub den: i128,
}

impl Fraction {
    fn new(num: i128, den: i128) -> Option<Self> {
        (den != 0).then_some(Fraction { num, den })
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Exact equality of rationals by cross multiplication.
    pub fn same_value(self, other: Fraction) -> bool {
        self.num * other.den == other.num * self.den
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IndexSet {
    /// CD index, `(N_i - N_j) / (N_i + N_j + N_k)`.
    pub cd: Option<f64>,
    /// CD without `N_k` in the denominator.
    pub bdtc: Option<f64>,
    /// Disruption component, `N_i / (N_i + N_j + N_k)`.
    pub csf_d: Option<f64>,
    /// Consolidation component, `N_j / (N_i + N_j + N_k)`.
    pub csf_c: Option<f64>,
    /// Share of focal citers not citing the prior art.
    pub bwh: Option<f64>,
    /// Citation-weighted CD, `F * CD`.
    pub mcd: Option<f64>,
}

/// Which index serves as the disruptiveness feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IndexChoice {
    Cd,
    Bdtc,
    CsfD,
    Bwh,
}

impl IndexChoice {
    pub fn pick(self, set: &IndexSet) -> Option<f64> {
        match self {
            IndexChoice::Cd => set.cd,
            IndexChoice::Bdtc => set.bdtc,
            IndexChoice::CsfD => set.csf_d,
            IndexChoice::Bwh => set.bwh,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            IndexChoice::Cd => "cd",
            IndexChoice::Bdtc => "bdtc",
            IndexChoice::CsfD => "csf_d",
            IndexChoice::Bwh => "bwh",
        }
    }

    /// Attainable range of the index.
    pub fn range(self) -> (f64, f64) {
        match self {
            IndexChoice::Cd | IndexChoice::Bdtc => (-1.0, 1.0),
            IndexChoice::CsfD | IndexChoice::Bwh => (0.0, 1.0),
        }
    }
}

impl std::str::FromStr for IndexChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cd" => Ok(IndexChoice::Cd),
            "bdtc" => Ok(IndexChoice::Bdtc),
            "csf_d" => Ok(IndexChoice::CsfD),
            "bwh" => Ok(IndexChoice::Bwh),
            other => Err(Error::Usage(format!(
                "unknown index `{other}` (expected cd, bdtc, csf_d or bwh)"
            ))),
        }
    }
}

/// Exact rational forms of the CD and mCD indices.
pub fn cd_fraction(c: &SuccessorCounts) -> Option<Fraction> {
    let (ni, nj, nk) = (c.n_i as i128, c.n_j as i128, c.n_k as i128);
    Fraction::new(ni - nj, ni + nj + nk)
}

pub fn mcd_fraction(c: &SuccessorCounts) -> Option<Fraction> {
    let (ni, nj, nk) = (c.n_i as i128, c.n_j as i128, c.n_k as i128);
    Fraction::new((ni + nj) * (ni - nj), ni + nj + nk)
}

pub fn disruption_indices(c: &SuccessorCounts) -> Result<IndexSet> {
    if !c.is_consistent() {
        return Err(Error::invalid(format!(
            "F = {} differs from N_i + N_j = {}",
            c.f,
            c.n_i + c.n_j
        )));
    }
    let (ni, nj, nk) = (c.n_i as i128, c.n_j as i128, c.n_k as i128);
    let ratio = |num: i128, den: i128| Fraction::new(num, den).map(Fraction::value);
    let all = ni + nj + nk;
    let cited = ni + nj;
    Ok(IndexSet {
        cd: ratio(ni - nj, all),
        bdtc: ratio(ni - nj, cited),
        csf_d: ratio(ni, all),
        csf_c: ratio(nj, all),
        bwh: ratio(ni, cited),
        mcd: mcd_fraction(c).map(Fraction::value),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(ni: u64, nj: u64, nk: u64) -> IndexSet {
        disruption_indices(&SuccessorCounts::new(ni, nj, nk)).unwrap()
    }

    #[test]
    fn maximal_disruption() {
        let s = idx(5, 0, 0);
        assert_eq!(
            s,
            IndexSet {
                cd: Some(1.0),
                bdtc: Some(1.0),
                csf_d: Some(1.0),
                csf_c: Some(0.0),
                bwh: Some(1.0),
                mcd: Some(5.0)
            }
        );
    }

    #[test]
    fn full_consolidation() {
        let s = idx(0, 5, 0);
        assert_eq!(s.cd, Some(-1.0));
        assert_eq!(s.bdtc, Some(-1.0));
        assert_eq!(s.csf_d, Some(0.0));
        assert_eq!(s.csf_c, Some(1.0));
        assert_eq!(s.bwh, Some(0.0));
        assert_eq!(s.mcd, Some(-5.0));
    }

    #[test]
    fn mixed_case_and_mcd_identity() {
        let c = SuccessorCounts::new(3, 1, 2);
        let s = disruption_indices(&c).unwrap();
        assert!((s.cd.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((s.mcd.unwrap() - 4.0 / 3.0).abs() < 1e-15);
        let cd = cd_fraction(&c).unwrap();
        let f_cd = Fraction {
            num: cd.num * c.f as i128,
            den: cd.den,
        };
        assert!(mcd_fraction(&c).unwrap().same_value(f_cd));
    }

    #[test]
    fn zero_denominators_are_undefined() {
        let s = idx(0, 0, 4);
        assert_eq!(s.cd, Some(0.0));
        assert_eq!(s.csf_d, Some(0.0));
        assert_eq!(s.csf_c, Some(0.0));
        assert_eq!(s.bdtc, None);
        assert_eq!(s.bwh, None);
        assert_eq!(s.mcd, Some(0.0));
        assert_eq!(idx(0, 0, 0), IndexSet::default());
    }

    #[test]
    fn negative_and_inconsistent_inputs_rejected() {
        assert!(SuccessorCounts::from_signed(-1, 0, 0).is_err());
        let bad = SuccessorCounts {
            f: 3,
            n_i: 1,
            n_j: 1,
            n_k: 0,
        };
        assert!(disruption_indices(&bad).is_err());
    }

    #[test]
    fn index_choice_parsing() {
        assert_eq!("csf_d".parse::<IndexChoice>().unwrap(), IndexChoice::CsfD);
        assert!(matches!("mcd".parse::<IndexChoice>(), Err(Error::Usage(_))));
    }
}
