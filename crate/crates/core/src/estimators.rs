//! Point estimators of the case count `N`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CellCounts4, CellCounts5, CellCounts7, Fallback, RsSummary};

/// `pi_hat = w + (1 - w) * p_star`, the five-cell estimator written as a
/// mix of the recorded fraction and the anchor prevalence among the
/// unrecorded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub w: f64,
    pub p_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub n_hat: f64,
    /// `n_hat / N_tot` when the population size is known.
    pub pi_hat: Option<f64>,
    pub decomposition: Option<Decomposition>,
    pub fallbacks: Vec<Fallback>,
}

impl PointEstimate {
    fn with_total(n_hat: f64, n_tot: u64) -> Self {
        Self {
            n_hat,
            pi_hat: Some(n_hat / n_tot as f64),
            decomposition: None,
            fallbacks: Vec::new(),
        }
    }
}

/// `n6 * (n15 + n6 + n37) / (n15 + n6)`, zero when `n6 = 0`.
fn extrapolated_n6(c: &CellCounts5) -> f64 {
    if c.n6() == 0 {
        return 0.0;
    }
    let num = c.n6() as u128 * c.unrecorded() as u128;
    num as f64 / c.anchor_unrecorded() as f64
}

/// Five-cell MLE: `n2 + n4 + n6 (n15 + n6 + n37) / (n15 + n6)`.
pub fn estimate_5cell(c: &CellCounts5) -> PointEstimate {
    let recorded = c.n2() + c.n4();
    let mut est = PointEstimate::with_total(recorded as f64 + extrapolated_n6(c), c.n_tot());
    let p_star = if c.n6() == 0 {
        est.fallbacks.push(Fallback::ZeroN6Limit);
        0.0
    } else {
        c.n6() as f64 / c.anchor_unrecorded() as f64
    };
    est.decomposition = Some(Decomposition {
        w: recorded as f64 / c.n_tot() as f64,
        p_star,
    });
    est
}

/// `N_tot * (w + (1 - w) p*)`; same value as [`estimate_5cell`] up to round-off.
pub fn estimate_5cell_weighted(c: &CellCounts5) -> f64 {
    let n_tot = c.n_tot() as f64;
    let w = (c.n2() + c.n4()) as f64 / n_tot;
    let p_star = if c.n6() == 0 {
        0.0
    } else {
        c.n6() as f64 / c.anchor_unrecorded() as f64
    };
    n_tot * (w + (1.0 - w) * p_star)
}

/// `N_tot * (pi_rbar1 (1 - phi_r) + phi_r)` with recorded-scale MLEs
/// `phi_r = (n2 + n4) / N_tot` and `pi_rbar1 = n6 / (n15 + n6)`.
pub fn estimate_5cell_recorded(c: &CellCounts5) -> f64 {
    let n_tot = c.n_tot() as f64;
    let phi_r = (c.n2() + c.n4()) as f64 / n_tot;
    let pi_rbar1 = if c.n6() == 0 {
        0.0
    } else {
        c.n6() as f64 / (c.n15() + c.n6()) as f64
    };
    let pi_r1 = 1.0;
    n_tot * (pi_rbar1 * (1.0 - phi_r) + pi_r1 * phi_r)
}

/// Anchor-only estimator `N_tot * n_rs_pos / n_rs`.
pub fn estimate_rs(rs: &RsSummary) -> Result<PointEstimate> {
    if rs.n_rs == 0 {
        return Err(Error::invalid("anchor sample size must be positive"));
    }
    let pi = rs.n_rs_pos as f64 / rs.n_rs as f64;
    let n_hat = (rs.n_tot as u128 * rs.n_rs_pos as u128) as f64 / rs.n_rs as f64;
    Ok(PointEstimate {
        n_hat,
        pi_hat: Some(pi),
        decomposition: None,
        fallbacks: Vec::new(),
    })
}

/// Chapman's bias-corrected Lincoln-Petersen estimator. Uses only `n2`,
/// `n4`, `n6`.
pub fn estimate_chapman(c: &CellCounts5) -> PointEstimate {
    let (a, b, m) = (
        (c.n2() + c.n4() + 1) as u128,
        (c.n2() + c.n6() + 1) as u128,
        (c.n2() + 1) as u128,
    );
    // (a b - m) / m, one rounding
    let n_hat = (a * b - m) as f64 / m as f64;
    PointEstimate::with_total(n_hat, c.n_tot())
}

/// Four-cell MLE with design-known anchor probability: `n2 + n4 + n6 / psi`.
pub fn estimate_4cell(c: &CellCounts4) -> PointEstimate {
    PointEstimate {
        n_hat: (c.n2 + c.n4) as f64 + c.n6 as f64 / c.psi(),
        pi_hat: None,
        decomposition: None,
        fallbacks: Vec::new(),
    }
}

/// Seven-cell MLE `n2 + n4 + n6 (n5 + n6 + n7) / (n5 + n6)`.
pub fn estimate_7cell(c: &CellCounts7) -> PointEstimate {
    let (n2, n4, n5, n6, n7) = (c.cell(2), c.cell(4), c.cell(5), c.cell(6), c.cell(7));
    let mut fallbacks = Vec::new();
    let extra = if n6 == 0 {
        fallbacks.push(Fallback::ZeroN6Limit);
        0.0
    } else {
        (n6 as u128 * (n5 + n6 + n7) as u128) as f64 / (n5 + n6) as f64
    };
    let n_hat = (n2 + n4) as f64 + extra;
    let n_tot = c.n_tot();
    PointEstimate {
        n_hat,
        pi_hat: (n_tot > 0).then(|| n_hat / n_tot as f64),
        decomposition: None,
        fallbacks,
    }
}

/// Sum of per-stratum five-cell estimates.
pub fn stratified_estimate(tables: &BTreeMap<String, CellCounts5>) -> Result<PointEstimate> {
    if tables.is_empty() {
        return Err(Error::invalid("stratified estimate needs at least one stratum"));
    }
    let mut n_hat = 0.0;
    let mut n_tot = 0u64;
    let mut fallbacks = Vec::new();
    for table in tables.values() {
        let e = estimate_5cell(table);
        n_hat += e.n_hat;
        n_tot += table.n_tot();
        for f in e.fallbacks {
            if !fallbacks.contains(&f) {
                fallbacks.push(f);
            }
        }
    }
    Ok(PointEstimate {
        n_hat,
        pi_hat: Some(n_hat / n_tot as f64),
        decomposition: None,
        fallbacks,
    })
}
