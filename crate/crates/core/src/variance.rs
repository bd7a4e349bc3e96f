//! Variance estimators for the case-count estimators, with the sparse-table
//! fallback rules.
//!
//! The five-cell estimator has three variants:
//!
//! * `Unadjusted`: multivariate delta method on the multinomial proportions.
//! * `Fpc1`: treats `w = (n2 + n4) / N_tot` as fixed and applies a
//!   without-replacement correction to `p* = n6 / (n15 + n6)`.
//! * `Fpc2`: `Fpc1` plus a term for the sampling variability of `w`.
//!
//! Fallbacks: any empty cell switches the delta method to Jeffreys-smoothed
//! proportions; `n6 = 0` smooths `p*`; `n15 + n6 <= 1` replaces both FPC
//! variants with the unadjusted variance.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CellCounts4, CellCounts5, Fallback, RsSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceVariant {
    Unadjusted,
    Fpc1,
    Fpc2,
    RsUnadjusted,
    RsCochran,
    Chapman,
    FourCell,
}

impl VarianceVariant {
    pub fn code(&self) -> &'static str {
        match self {
            VarianceVariant::Unadjusted => "unadjusted",
            VarianceVariant::Fpc1 => "fpc1",
            VarianceVariant::Fpc2 => "fpc2",
            VarianceVariant::RsUnadjusted => "rs_unadjusted",
            VarianceVariant::RsCochran => "cochran_fpc",
            VarianceVariant::Chapman => "chapman",
            VarianceVariant::FourCell => "four_cell",
        }
    }
}

/// Which of the three five-cell variances to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjustment {
    None,
    Fpc1,
    Fpc2,
}

impl Adjustment {
    pub const ALL: [Adjustment; 3] = [Adjustment::None, Adjustment::Fpc1, Adjustment::Fpc2];

    pub fn variant(&self) -> VarianceVariant {
        match self {
            Adjustment::None => VarianceVariant::Unadjusted,
            Adjustment::Fpc1 => VarianceVariant::Fpc1,
            Adjustment::Fpc2 => VarianceVariant::Fpc2,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            Adjustment::None => "unadjusted",
            Adjustment::Fpc1 => "fpc1",
            Adjustment::Fpc2 => "fpc2",
        }
    }
}

impl std::str::FromStr for Adjustment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "unadjusted" => Ok(Adjustment::None),
            "fpc1" => Ok(Adjustment::Fpc1),
            "fpc2" => Ok(Adjustment::Fpc2),
            other => Err(Error::invalid(format!(
                "unknown adjustment `{other}` (expected none, fpc1 or fpc2)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceResult {
    pub var_n: f64,
    /// Variance on the prevalence scale, when the population size is known.
    pub var_pi: Option<f64>,
    pub variant: VarianceVariant,
    pub fallbacks: Vec<Fallback>,
}

impl VarianceResult {
    fn from_pi(var_pi: f64, n_tot: u64, variant: VarianceVariant, fallbacks: Vec<Fallback>) -> Self {
        let n = n_tot as f64;
        Self {
            var_n: n * n * var_pi,
            var_pi: Some(var_pi),
            variant,
            fallbacks,
        }
    }

    pub fn se(&self) -> f64 {
        self.var_n.sqrt()
    }
}

/// Cell proportions used by the delta method; Jeffreys-smoothed when any
/// cell is empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothedProbs {
    pub p15: f64,
    pub p2: f64,
    pub p4: f64,
    pub p6: f64,
    pub p37: f64,
    pub smoothed: bool,
}

impl SmoothedProbs {
    pub fn from_counts(c: &CellCounts5) -> Self {
        let smoothed = c.has_zero_cell();
        let (add, denom) = if smoothed {
            (0.5, c.n_tot() as f64 + 2.5)
        } else {
            (0.0, c.n_tot() as f64)
        };
        let p = c.cells().map(|n| (n as f64 + add) / denom);
        Self {
            p15: p[0],
            p2: p[1],
            p4: p[2],
            p6: p[3],
            p37: p[4],
            smoothed,
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.p15, self.p2, self.p4, self.p6, self.p37]
    }
}

/// Gradient of `pi(p) = p2 + p4 + p6 (p15 + p6 + p37) / (p15 + p6)` in the
/// order `(p15, p2, p4, p6, p37)`.
pub fn delta_gradient(p: &SmoothedProbs) -> [f64; 5] {
    let s = p.p15 + p.p6;
    let s2 = s * s;
    [-p.p6 * p.p37 / s2, 1.0, 1.0, 1.0 + p.p37 * p.p15 / s2, p.p6 / s]
}

/// `d' Σ d` with the multinomial covariance `Σ = (diag(p) - p p') / n`.
pub(crate) fn multinomial_quadratic_form(d: &[f64; 5], p: &[f64; 5], n: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..5 {
        for j in 0..5 {
            let cov = if i == j { p[i] * (1.0 - p[i]) } else { -p[i] * p[j] };
            total += d[i] * d[j] * cov;
        }
    }
    // round-off can leave a tiny negative value for near-degenerate tables
    (total / n).max(0.0)
}

/// Delta-method variance of the five-cell estimator without any finite
/// population correction.
pub fn var5_unadjusted(c: &CellCounts5) -> VarianceResult {
    let p = SmoothedProbs::from_counts(c);
    let d = delta_gradient(&p);
    let var_pi = multinomial_quadratic_form(&d, &p.as_array(), c.n_tot() as f64);
    let fallbacks = if p.smoothed {
        vec![Fallback::JeffreysSmoothing]
    } else {
        Vec::new()
    };
    VarianceResult::from_pi(var_pi, c.n_tot(), VarianceVariant::Unadjusted, fallbacks)
}

/// `n15 + n6 <= 1` (which includes `n15 = n6 = 0`): no FPC variance exists.
fn needs_unadjusted_substitute(c: &CellCounts5) -> bool {
    c.anchor_unrecorded() <= 1
}

struct FpcParts {
    w: f64,
    p_star: f64,
    /// `(1 - w)^2 Var(p*)_FPC`
    var_pi_fpc1: f64,
    smoothed: bool,
}

fn fpc_parts(c: &CellCounts5) -> FpcParts {
    let n_tot = c.n_tot() as f64;
    let w = (c.n2() + c.n4()) as f64 / n_tot;
    let n_rs = c.anchor_unrecorded();
    let pop = c.unrecorded();
    let smoothed = c.n6() == 0;
    let p_star = if smoothed {
        (c.n6() as f64 + 0.5) / (n_rs as f64 + 1.0)
    } else {
        c.n6() as f64 / n_rs as f64
    };
    // n_rs (pop - n_rs) / (pop (n_rs - 1)), integer numerator and denominator
    let fpc = (n_rs as u128 * (pop - n_rs) as u128) as f64 / (pop as u128 * (n_rs - 1) as u128) as f64;
    let var_p_star = fpc * p_star * (1.0 - p_star) / n_rs as f64;
    FpcParts {
        w,
        p_star,
        var_pi_fpc1: (1.0 - w) * (1.0 - w) * var_p_star,
        smoothed,
    }
}

fn substitute(c: &CellCounts5, variant: VarianceVariant) -> VarianceResult {
    let mut v = var5_unadjusted(c);
    v.variant = variant;
    v.fallbacks.push(Fallback::UnadjustedSubstitute);
    v
}

/// FPC1: `N_tot^2 (1 - w)^2 Var(p*)_FPC`.
pub fn var5_fpc1(c: &CellCounts5) -> VarianceResult {
    if needs_unadjusted_substitute(c) {
        return substitute(c, VarianceVariant::Fpc1);
    }
    let parts = fpc_parts(c);
    let fallbacks = if parts.smoothed {
        vec![Fallback::SmoothedPStar]
    } else {
        Vec::new()
    };
    VarianceResult::from_pi(parts.var_pi_fpc1, c.n_tot(), VarianceVariant::Fpc1, fallbacks)
}

/// FPC2: FPC1 plus `(1 - p*)^2 w (1 - w) / N_tot` on the prevalence scale.
/// A smoothed `p*` is used in both terms.
pub fn var5_fpc2(c: &CellCounts5) -> VarianceResult {
    if needs_unadjusted_substitute(c) {
        return substitute(c, VarianceVariant::Fpc2);
    }
    let parts = fpc_parts(c);
    let n_tot = c.n_tot() as f64;
    let q = 1.0 - parts.p_star;
    let extra = q * q * parts.w * (1.0 - parts.w) / n_tot;
    let fallbacks = if parts.smoothed {
        vec![Fallback::SmoothedPStar]
    } else {
        Vec::new()
    };
    VarianceResult::from_pi(parts.var_pi_fpc1 + extra, c.n_tot(), VarianceVariant::Fpc2, fallbacks)
}

pub fn var5(c: &CellCounts5, adjustment: Adjustment) -> VarianceResult {
    match adjustment {
        Adjustment::None => var5_unadjusted(c),
        Adjustment::Fpc1 => var5_fpc1(c),
        Adjustment::Fpc2 => var5_fpc2(c),
    }
}

/// Cochran's correction `n (N - n) / (N (n - 1))`.
pub fn cochran_fpc(n: u64, pop: u64) -> Result<f64> {
    if n < 2 {
        return Err(Error::invalid(format!(
            "finite population correction needs a sample of at least 2, got {n}"
        )));
    }
    if n > pop {
        return Err(Error::invalid(format!("sample size {n} exceeds population {pop}")));
    }
    Ok((n as u128 * (pop - n) as u128) as f64 / (pop as u128 * (n - 1) as u128) as f64)
}

/// Variance of the anchor-only estimator, optionally with Cochran's FPC.
pub fn var_rs(rs: &RsSummary, adjusted: bool) -> Result<VarianceResult> {
    if rs.n_rs == 0 {
        return Err(Error::invalid("anchor sample size must be positive"));
    }
    let pi = rs.n_rs_pos as f64 / rs.n_rs as f64;
    let mut var_pi = pi * (1.0 - pi) / rs.n_rs as f64;
    let variant = if adjusted {
        var_pi *= cochran_fpc(rs.n_rs, rs.n_tot)?;
        VarianceVariant::RsCochran
    } else {
        VarianceVariant::RsUnadjusted
    };
    Ok(VarianceResult::from_pi(var_pi, rs.n_tot, variant, Vec::new()))
}

/// Chapman variance `(n2+n4+1)(n2+n6+1) n4 n6 / ((n2+1)^2 (n2+2))`.
pub fn var_chapman(c: &CellCounts5) -> VarianceResult {
    let (n2, n4, n6) = (c.n2() as u128, c.n4() as u128, c.n6() as u128);
    let num = (n2 + n4 + 1) * (n2 + n6 + 1) * n4 * n6;
    let den = (n2 + 1) * (n2 + 1) * (n2 + 2);
    let var_n = num as f64 / den as f64;
    let n_tot = c.n_tot() as f64;
    VarianceResult {
        var_n,
        var_pi: Some(var_n / (n_tot * n_tot)),
        variant: VarianceVariant::Chapman,
        fallbacks: Vec::new(),
    }
}

/// Four-cell variance `n6 (1 - psi) / psi^2`.
pub fn var_4cell(c: &CellCounts4) -> VarianceResult {
    let psi = c.psi();
    VarianceResult {
        var_n: c.n6 as f64 * (1.0 - psi) / (psi * psi),
        var_pi: None,
        variant: VarianceVariant::FourCell,
        fallbacks: Vec::new(),
    }
}

/// Sum of per-stratum variances under one five-cell variant.
pub fn var_stratified(tables: &BTreeMap<String, CellCounts5>, adjustment: Adjustment) -> Result<VarianceResult> {
    if tables.is_empty() {
        return Err(Error::invalid("stratified variance needs at least one stratum"));
    }
    let mut var_n = 0.0;
    let mut n_tot = 0u64;
    let mut fallbacks: Vec<Fallback> = Vec::new();
    for t in tables.values() {
        let v = var5(t, adjustment);
        var_n += v.var_n;
        n_tot += t.n_tot();
        for f in v.fallbacks {
            if !fallbacks.contains(&f) {
                fallbacks.push(f);
            }
        }
    }
    fallbacks.sort();
    let n = n_tot as f64;
    Ok(VarianceResult {
        var_n,
        var_pi: Some(var_n / (n * n)),
        variant: adjustment.variant(),
        fallbacks,
    })
}
