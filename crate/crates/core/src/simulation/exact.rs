//! Exhaustive enumeration of tiny populations: checks that, given the
//! unrecorded population size and the anchor's share of it, `n6` is
//! hypergeometric and the FPC variance estimate of `p*` is unbiased.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SimScenario;
use crate::error::{Error, Result};

/// Upper bound on (Stream-1 patterns) x (anchor subsets).
pub const ENUMERATION_LIMIT: f64 = 1e8;
const MAX_POPULATION: u64 = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactCheck {
    /// Largest `|P(n6 | margins) - Hypergeometric pmf|` over all margins.
    pub max_pmf_discrepancy: f64,
    /// Largest `|E[V_hat | margins] - Var(p* | margins)|` over margins with `n_rs* >= 2`.
    pub max_variance_bias: f64,
    /// Distinct `(n_rs*, N_tot*)` margins with positive probability.
    pub margins: usize,
    /// Total enumerated probability; 1 up to round-off.
    pub total_probability: f64,
    pub configurations: u64,
}

fn choose(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn hypergeometric_pmf(pop: u64, successes: u64, draws: u64, x: u64) -> f64 {
    if x > successes || x > draws || draws - x > pop - successes {
        return 0.0;
    }
    choose(successes, x) * choose(pop - successes, draws - x) / choose(pop, draws)
}

/// Next larger integer with the same number of set bits.
fn next_combination(v: u32) -> u32 {
    let t = v | (v.wrapping_sub(1));
    (t.wrapping_add(1)) | (((!t & (!t).wrapping_neg()) - 1) >> (v.trailing_zeros() + 1))
}

/// Cochran's unbiased variance estimate for a sample proportion.
fn v_hat(n6: u64, n_rs: u64, pop: u64) -> f64 {
    let p = n6 as f64 / n_rs as f64;
    let fpc = (n_rs * (pop - n_rs)) as f64 / (pop * (n_rs - 1)) as f64;
    fpc * p * (1.0 - p) / n_rs as f64
}

pub fn exact_conditional_check(s: &SimScenario) -> Result<ExactCheck> {
    s.validate()?;
    if s.n_tot > MAX_POPULATION {
        return Err(Error::EnumerationTooLarge(format!(
            "n_tot = {} exceeds {MAX_POPULATION}",
            s.n_tot
        )));
    }
    let configurations = 2f64.powi(s.n_true as i32) * choose(s.n_tot, s.anchor_size);
    if configurations > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge(format!(
            "{configurations} configurations exceed {ENUMERATION_LIMIT}"
        )));
    }

    let n_tot = s.n_tot as u32;
    let k = s.anchor_size as u32;
    let q = s.q_case();
    let cases: u32 = (1u32 << s.n_true) - 1;
    let p_anchor = 1.0 / choose(s.n_tot, s.anchor_size);

    // (n_rs*, N_tot*) -> n6 -> probability
    let mut joint: BTreeMap<(u64, u64), BTreeMap<u64, f64>> = BTreeMap::new();
    let mut total = 0.0;
    for s1 in 0..=cases {
        let r = s1.count_ones();
        let p_s1 = q.powi(r as i32) * (1.0 - q).powi((s.n_true as u32 - r) as i32);
        if p_s1 == 0.0 {
            continue;
        }
        let p = p_s1 * p_anchor;
        let mut anchor: u32 = (1u32 << k) - 1;
        loop {
            let n6 = (anchor & cases & !s1).count_ones() as u64;
            let n15 = (anchor & !cases).count_ones() as u64;
            let unrecorded = (n_tot - r) as u64;
            *joint
                .entry((n15 + n6, unrecorded))
                .or_default()
                .entry(n6)
                .or_insert(0.0) += p;
            total += p;
            if k == 0 || k == n_tot {
                break;
            }
            anchor = next_combination(anchor);
            if anchor >> n_tot != 0 {
                break;
            }
        }
    }

    let mut max_pmf = 0.0f64;
    let mut max_bias = 0.0f64;
    for (&(n_rs, pop), dist) in &joint {
        let mass: f64 = dist.values().sum();
        let n_d = s.n_true - (s.n_tot - pop);
        for x in 0..=n_rs {
            let cond = dist.get(&x).copied().unwrap_or(0.0) / mass;
            max_pmf = max_pmf.max((cond - hypergeometric_pmf(pop, n_d, n_rs, x)).abs());
        }
        if n_rs >= 2 {
            let (mut e_v, mut e_p, mut e_p2) = (0.0, 0.0, 0.0);
            for (&x, &pr) in dist {
                let w = pr / mass;
                let p = x as f64 / n_rs as f64;
                e_v += w * v_hat(x, n_rs, pop);
                e_p += w * p;
                e_p2 += w * p * p;
            }
            max_bias = max_bias.max((e_v - (e_p2 - e_p * e_p)).abs());
        }
    }

    Ok(ExactCheck {
        max_pmf_discrepancy: max_pmf,
        max_variance_bias: max_bias,
        margins: joint.len(),
        total_probability: total,
        configurations: configurations as u64,
    })
}
