//! Interval constructors: Wald, the shift-and-scale posterior interval for
//! the five-cell estimator, the anchor-only Beta posterior interval, and
//! the transformed-logit interval for Chapman's estimator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{estimate_5cell, estimate_chapman, estimate_rs};
use crate::model::{CellCounts5, RsSummary};
use crate::rng::RngStream;
use crate::variance::{var5, var5_unadjusted, var_chapman, var_rs, Adjustment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMethod {
    Wald,
    Credible,
    BetaCredible,
    TransformedLogit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: IntervalMethod,
    pub truncated_low: bool,
    pub truncated_high: bool,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// Closed-interval membership.
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    /// Clips to `bounds`, setting the truncation flags.
    pub fn clipped(mut self, bounds: Option<(f64, f64)>) -> Self {
        if let Some((lo, hi)) = bounds {
            if self.lower < lo {
                self.lower = lo;
                self.truncated_low = true;
            }
            if self.upper > hi {
                self.upper = hi;
                self.truncated_high = true;
            }
            // an interval entirely outside the bounds collapses onto them
            if self.lower > self.upper {
                if self.truncated_low {
                    self.upper = self.lower;
                } else {
                    self.lower = self.upper;
                }
            }
        }
        self
    }
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::Probability {
            name: "level",
            value: level,
            range: "(0, 1)",
        })
    }
}

/// Two-sided standard normal critical value `z_{(1 + level) / 2}`.
pub fn z_value(level: f64) -> Result<f64> {
    check_level(level)?;
    const TABLE: [(f64, f64); 3] = [
        (0.90, 1.644_853_626_951_472_2),
        (0.95, 1.959_963_984_540_054),
        (0.99, 2.575_829_303_548_900_4),
    ];
    if let Some(&(_, z)) = TABLE.iter().find(|(l, _)| (l - level).abs() < 1e-12) {
        return Ok(z);
    }
    Ok(normal_quantile((1.0 + level) / 2.0))
}

/// Standard normal quantile, Wichura's AS 241 (PPND16), relative accuracy
/// about 1e-16.
#[allow(clippy::excessive_precision, clippy::inconsistent_digit_grouping)]
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "normal_quantile needs p in (0, 1)");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2509.080_928_730_122_7 * r + 33430.575_583_588_128) * r + 67265.770_927_008_7) * r
                + 45921.953_931_549_87)
                * r
                + 13731.693_765_509_461)
                * r
                + 1971.590_950_306_551_3)
                * r
                + 133.141_667_891_784_38)
                * r
                + 3.387_132_872_796_366_5)
            / (((((((5226.495_278_852_545 * r + 28729.085_735_721_943) * r + 39307.895_800_092_71) * r
                + 21213.794_301_586_597)
                * r
                + 5394.196_021_424_751)
                * r
                + 687.187_007_492_057_9)
                * r
                + 42.313_330_701_600_91)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        (((((((7.745_450_142_783_414e-4 * r + 0.022_723_844_989_269_184) * r + 0.241_780_725_177_450_6) * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5)
            / (((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r + 0.015_198_666_563_616_457)
                * r
                + 0.148_103_976_427_480_08)
                * r
                + 0.689_767_334_985_1)
                * r
                + 1.676_384_830_183_803_8)
                * r
                + 2.053_191_626_637_759)
                * r
                + 1.0)
    } else {
        let r = r - 5.0;
        (((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r + 1.242_660_947_388_078_4e-3) * r
            + 0.026_532_189_526_576_124)
            * r
            + 0.296_560_571_828_504_9)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103)
            / (((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r + 1.846_318_317_510_054_8e-5)
                * r
                + 7.868_691_311_456_133e-4)
                * r
                + 0.014_875_361_290_850_615)
                * r
                + 0.136_929_880_922_735_8)
                * r
                + 0.599_832_206_555_888)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// `point ± z se`, clipped to `bounds` when given.
pub fn wald(point: f64, se: f64, level: f64, bounds: Option<(f64, f64)>) -> Result<Interval> {
    if se.is_nan() || se < 0.0 {
        return Err(Error::invalid(format!("standard error must be non-negative, got {se}")));
    }
    let z = z_value(level)?;
    Ok(Interval {
        lower: point - z * se,
        upper: point + z * se,
        level,
        method: IntervalMethod::Wald,
        truncated_low: false,
        truncated_high: false,
    }
    .clipped(bounds))
}

/// Percentile of sorted data with linear interpolation between closest
/// ranks: position `(m - 1) q` in zero-based order statistics.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `min(sqrt(var_adj / var_unadj), 1)`; 1 when the unadjusted variance is 0.
pub fn shrink_factor(var_adjusted: f64, var_unadjusted: f64) -> f64 {
    if var_unadjusted <= 0.0 {
        return 1.0;
    }
    (var_adjusted / var_unadjusted).sqrt().min(1.0)
}

/// Posterior draws after shift-and-scale and truncation, sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredibleDraws {
    pub draws: Vec<f64>,
    /// scale
    pub a: f64,
    /// shift, `N_hat (1 - a)`
    pub b: f64,
    pub seed: u64,
}

/// Raw posterior transforms `N_tot * (p2 + p4 + p6 (p15 + p6 + p37) / (p15 + p6))`
/// for `m` draws from `Dirichlet(n + 1/2)`, appended to `out`.
pub fn posterior_draws_5cell(c: &CellCounts5, m: usize, rng: &mut RngStream, out: &mut Vec<f64>) -> Result<()> {
    let alphas = c.cells().map(|n| n as f64 + 0.5);
    let n_tot = c.n_tot() as f64;
    let mut p = [0.0; 5];
    out.reserve(m);
    for _ in 0..m {
        rng.dirichlet_into(&alphas, &mut p)?;
        let [p15, p2, p4, p6, p37] = p;
        out.push(n_tot * (p2 + p4 + p6 * (p15 + p6 + p37) / (p15 + p6)));
    }
    Ok(())
}

/// Applies `a x + b`, truncates into `bounds`, sorts, and reads off the
/// equal-tailed interval.
pub fn shift_scale_interval(
    raw: &[f64],
    point: f64,
    a: f64,
    bounds: (f64, f64),
    level: f64,
    buf: &mut Vec<f64>,
) -> Result<Interval> {
    check_level(level)?;
    if raw.is_empty() {
        return Err(Error::invalid("credible interval needs at least one draw"));
    }
    let b = point * (1.0 - a);
    let (lo, hi) = bounds;
    buf.clear();
    buf.extend(raw.iter().map(|&x| (a * x + b).clamp(lo, hi)));
    buf.sort_unstable_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let lower = percentile_sorted(buf, tail);
    let upper = percentile_sorted(buf, 1.0 - tail);
    Ok(Interval {
        lower,
        upper,
        level,
        method: IntervalMethod::Credible,
        truncated_low: lower <= lo,
        truncated_high: upper >= hi,
    })
}

/// Posterior interval for the five-cell estimator, with optional FPC
/// shift-and-scale. Draws come from stream 0 of `seed`.
pub fn credible_5cell(
    c: &CellCounts5,
    m: usize,
    adjustment: Adjustment,
    level: f64,
    seed: u64,
) -> Result<(Interval, CredibleDraws)> {
    check_level(level)?;
    if m == 0 {
        return Err(Error::invalid("number of posterior draws must be positive"));
    }
    let mut rng = RngStream::new(seed, 0);
    let mut raw = Vec::new();
    posterior_draws_5cell(c, m, &mut rng, &mut raw)?;
    let point = estimate_5cell(c).n_hat;
    let a = match adjustment {
        Adjustment::None => 1.0,
        adj => shrink_factor(var5(c, adj).var_n, var5_unadjusted(c).var_n),
    };
    let mut sorted = Vec::with_capacity(m);
    let interval = shift_scale_interval(&raw, point, a, c.case_bounds(), level, &mut sorted)?;
    Ok((
        interval,
        CredibleDraws {
            draws: sorted,
            a,
            b: point * (1.0 - a),
            seed,
        },
    ))
}

/// Bounds `[n_rs_pos, N_tot - n_rs_neg]` for the anchor-only estimator.
pub fn rs_bounds(rs: &RsSummary) -> (f64, f64) {
    (rs.n_rs_pos as f64, (rs.n_tot - rs.negatives()) as f64)
}

/// Raw `N_tot * Beta(n_rs_pos + 1/2, n_rs_neg + 1/2)` draws, appended to `out`.
pub fn posterior_draws_rs(rs: &RsSummary, m: usize, rng: &mut RngStream, out: &mut Vec<f64>) -> Result<()> {
    let (a, b) = (rs.n_rs_pos as f64 + 0.5, rs.negatives() as f64 + 0.5);
    let n_tot = rs.n_tot as f64;
    out.reserve(m);
    for _ in 0..m {
        out.push(n_tot * rng.beta(a, b)?);
    }
    Ok(())
}

/// Jeffreys-prior posterior interval for the anchor-only estimator. With
/// `adjusted`, draws are shrunk toward the point estimate by
/// `sqrt(Var_cochran / Var_unadjusted)`.
pub fn credible_rs(rs: &RsSummary, m: usize, level: f64, seed: u64, adjusted: bool) -> Result<Interval> {
    check_level(level)?;
    if m == 0 {
        return Err(Error::invalid("number of posterior draws must be positive"));
    }
    let mut rng = RngStream::new(seed, 0);
    let mut raw = Vec::new();
    posterior_draws_rs(rs, m, &mut rng, &mut raw)?;
    let point = estimate_rs(rs)?.n_hat;
    let a = if adjusted {
        shrink_factor(var_rs(rs, true)?.var_n, var_rs(rs, false)?.var_n)
    } else {
        1.0
    };
    let mut buf = Vec::with_capacity(m);
    let mut iv = shift_scale_interval(&raw, point, a, rs_bounds(rs), level, &mut buf)?;
    iv.method = IntervalMethod::BetaCredible;
    Ok(iv)
}

/// Transformed-logit interval for Chapman's estimator:
/// `n + f0 exp(±z sigma)` with `n = n2 + n4 + n6`,
/// `f0 = (n4 + 1/2)(n6 + 1/2) / (n2 + 1/2)` and
/// `sigma^2 = 1/(n2+1/2) + 1/(n4+1/2) + 1/(n6+1/2) + (n2+1/2) / ((n4+1/2)(n6+1/2))`.
///
/// The second element is true when Chapman's variance is zero (`n4 = 0` or
/// `n6 = 0`); the interval is still produced from the smoothed counts.
pub fn logit_chapman(c: &CellCounts5, level: f64) -> Result<(Interval, bool)> {
    let z = z_value(level)?;
    let observed = c.known_cases() as f64;
    let x11 = c.n2() as f64 + 0.5;
    let x10 = c.n4() as f64 + 0.5;
    let x01 = c.n6() as f64 + 0.5;
    let f0 = x10 * x01 / x11;
    let sigma = (1.0 / x11 + 1.0 / x10 + 1.0 / x01 + x11 / (x10 * x01)).sqrt();
    let degenerate = var_chapman(c).var_n == 0.0;
    Ok((
        Interval {
            lower: observed + f0 * (-z * sigma).exp(),
            upper: observed + f0 * (z * sigma).exp(),
            level,
            method: IntervalMethod::TransformedLogit,
            truncated_low: false,
            truncated_high: false,
        },
        degenerate,
    ))
}

/// Chapman point estimate together with its logit interval.
pub fn chapman_with_interval(c: &CellCounts5, level: f64) -> Result<(f64, Interval, bool)> {
    let (iv, degenerate) = logit_chapman(c, level)?;
    Ok((estimate_chapman(c).n_hat, iv, degenerate))
}
