//! Monte Carlo engine: finite populations with a non-representative
//! Stream 1 and a simple-random-sample anchor stream.

mod exact;
mod presets;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};
use crate::estimators::{estimate_5cell, estimate_chapman, estimate_rs};
use crate::intervals::{
    logit_chapman, posterior_draws_5cell, posterior_draws_rs, rs_bounds, shift_scale_interval, shrink_factor, wald,
};
use crate::model::{CellCounts5, Count};
use crate::rng::RngStream;
use crate::variance::{var5, var_chapman, var_rs, Adjustment};

pub use exact::{exact_conditional_check, ExactCheck, ENUMERATION_LIMIT};
pub use presets::{preset, preset_names, presets};

fn default_p_symp_case() -> f64 {
    0.6
}
fn default_p_symp_noncase() -> f64 {
    0.1
}
fn default_p_s1_symp() -> f64 {
    0.5
}
fn default_p_s1_asymp() -> f64 {
    0.2
}
fn default_replications() -> u64 {
    10_000
}
fn default_draws() -> usize {
    10_000
}
fn default_seed() -> u64 {
    1
}
fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimScenario {
    pub n_tot: Count,
    /// True number of cases, held fixed across replications.
    pub n_true: Count,
    /// Fixed anchor sample size.
    pub anchor_size: Count,
    #[serde(default = "default_p_symp_case")]
    pub p_symp_case: f64,
    #[serde(default = "default_p_symp_noncase")]
    pub p_symp_noncase: f64,
    #[serde(default = "default_p_s1_symp")]
    pub p_s1_symp: f64,
    #[serde(default = "default_p_s1_asymp")]
    pub p_s1_asymp: f64,
    #[serde(default = "default_replications")]
    pub replications: u64,
    /// Posterior draws per credible interval.
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    #[serde(default = "default_level")]
    pub level: f64,
}

impl SimScenario {
    /// Scenario with the default symptom and selection probabilities.
    pub fn new(n_tot: Count, n_true: Count, anchor_size: Count) -> Self {
        Self {
            n_tot,
            n_true,
            anchor_size,
            p_symp_case: default_p_symp_case(),
            p_symp_noncase: default_p_symp_noncase(),
            p_s1_symp: default_p_s1_symp(),
            p_s1_asymp: default_p_s1_asymp(),
            replications: default_replications(),
            draws: default_draws(),
            master_seed: default_seed(),
            level: default_level(),
        }
    }

    /// Anchor size `round(n_tot * psi)`.
    pub fn with_psi(n_tot: Count, n_true: Count, psi: f64) -> Self {
        Self::new(n_tot, n_true, (n_tot as f64 * psi).round() as Count)
    }

    pub fn replications(mut self, r: u64) -> Self {
        self.replications = r;
        self
    }

    pub fn draws(mut self, m: usize) -> Self {
        self.draws = m;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_tot == 0 {
            return Err(Error::invalid("n_tot must be positive"));
        }
        if self.n_true > self.n_tot {
            return Err(Error::invalid(format!(
                "n_true = {} exceeds n_tot = {}",
                self.n_true, self.n_tot
            )));
        }
        if self.anchor_size < 2 || self.anchor_size > self.n_tot {
            return Err(Error::invalid(format!(
                "anchor_size must lie in [2, n_tot = {}], got {}",
                self.n_tot, self.anchor_size
            )));
        }
        check_probability("p_symp_case", self.p_symp_case)?;
        check_probability("p_symp_noncase", self.p_symp_noncase)?;
        check_probability("p_s1_symp", self.p_s1_symp)?;
        check_probability("p_s1_asymp", self.p_s1_asymp)?;
        if self.replications == 0 {
            return Err(Error::invalid("replications must be positive"));
        }
        if self.draws == 0 {
            return Err(Error::invalid("draws must be positive"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Probability {
                name: "level",
                value: self.level,
                range: "(0, 1)",
            });
        }
        Ok(())
    }

    /// Probability that a case is recorded by Stream 1.
    pub fn q_case(&self) -> f64 {
        self.p_symp_case * self.p_s1_symp + (1.0 - self.p_symp_case) * self.p_s1_asymp
    }
}

/// Reusable per-thread buffers.
#[derive(Default)]
pub struct Scratch {
    anchor: Vec<bool>,
    index: Vec<usize>,
    raw: Vec<f64>,
    sorted: Vec<f64>,
}

/// One simulated population and its five-cell table. Individuals
/// `0..n_true` are the cases.
pub fn generate_replication(s: &SimScenario, rng: &mut RngStream) -> Result<CellCounts5> {
    generate_with(s, rng, &mut Scratch::default())
}

fn generate_with(s: &SimScenario, rng: &mut RngStream, scratch: &mut Scratch) -> Result<CellCounts5> {
    let n_tot = s.n_tot as usize;
    let n_true = s.n_true as usize;
    scratch.anchor.resize(n_tot, false);
    rng.srswor_mask(s.anchor_size as usize, &mut scratch.anchor, &mut scratch.index)?;

    let (mut n15, mut n2, mut n4, mut n6, mut n37) = (0, 0, 0, 0, 0);
    for i in 0..n_tot {
        let case = i < n_true;
        let symptomatic = rng.bernoulli(if case { s.p_symp_case } else { s.p_symp_noncase });
        let sampled = rng.bernoulli(if symptomatic { s.p_s1_symp } else { s.p_s1_asymp });
        let in_anchor = scratch.anchor[i];
        // a sampled non-case is never recorded
        let recorded = case && sampled;
        match (case, recorded, in_anchor) {
            (true, true, true) => n2 += 1,
            (true, true, false) => n4 += 1,
            (true, false, true) => n6 += 1,
            (false, _, true) => n15 += 1,
            (_, _, false) => n37 += 1,
        }
    }
    CellCounts5::new(n15, n2, n4, n6, n37, s.n_tot)
}

/// Interval keys reported for the five-cell estimator, in order.
pub const N5_INTERVALS: [&str; 6] = [
    "wald/unadjusted",
    "wald/fpc1",
    "wald/fpc2",
    "credible/unadjusted",
    "credible/fpc1",
    "credible/fpc2",
];
pub const RS_SE: [&str; 2] = ["rs_unadjusted", "cochran_fpc"];
pub const RS_INTERVALS: [&str; 3] = ["wald/rs_unadjusted", "wald/cochran_fpc", "credible/rs_cochran"];

/// Everything one replication contributes to the summary.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    pub counts: CellCounts5,
    pub n5: f64,
    pub n5_se: [f64; 3],
    pub n5_intervals: [(f64, f64); 6],
    pub rs: f64,
    pub rs_se: [f64; 2],
    pub rs_intervals: [(f64, f64); 3],
    pub chapman: f64,
    pub chapman_se: f64,
    pub chapman_interval: (f64, f64),
    /// Fallback codes that fired in this replication.
    pub fallbacks: Vec<&'static str>,
}

pub fn run_replication(s: &SimScenario, index: u64) -> Result<ReplicationResult> {
    replicate(s, index, &mut Scratch::default())
}

fn push_unique(list: &mut Vec<&'static str>, code: &'static str) {
    if !list.contains(&code) {
        list.push(code);
    }
}

fn replicate(s: &SimScenario, index: u64, scratch: &mut Scratch) -> Result<ReplicationResult> {
    let mut rng = RngStream::new(s.master_seed, index);
    let c = generate_with(s, &mut rng, scratch)?;
    let mut fallbacks = Vec::new();

    let est = estimate_5cell(&c);
    for f in &est.fallbacks {
        push_unique(&mut fallbacks, f.code());
    }
    let bounds = c.case_bounds();
    let vars = Adjustment::ALL.map(|adj| var5(&c, adj));
    for v in &vars {
        for f in &v.fallbacks {
            push_unique(&mut fallbacks, f.code());
        }
    }
    let var_unadj = vars[0].var_n;
    scratch.raw.clear();
    posterior_draws_5cell(&c, s.draws, &mut rng, &mut scratch.raw)?;
    let mut n5_intervals = [(0.0, 0.0); 6];
    for (i, v) in vars.iter().enumerate() {
        let w = wald(est.n_hat, v.se(), s.level, Some(bounds))?;
        n5_intervals[i] = (w.lower, w.upper);
        let a = if i == 0 { 1.0 } else { shrink_factor(v.var_n, var_unadj) };
        let cr = shift_scale_interval(&scratch.raw, est.n_hat, a, bounds, s.level, &mut scratch.sorted)?;
        n5_intervals[3 + i] = (cr.lower, cr.upper);
    }

    let rs = c.anchor_summary();
    let rs_est = estimate_rs(&rs)?;
    let rs_vars = [var_rs(&rs, false)?, var_rs(&rs, true)?];
    let rb = rs_bounds(&rs);
    let mut rs_intervals = [(0.0, 0.0); 3];
    for (i, v) in rs_vars.iter().enumerate() {
        let w = wald(rs_est.n_hat, v.se(), s.level, Some(rb))?;
        rs_intervals[i] = (w.lower, w.upper);
    }
    scratch.raw.clear();
    posterior_draws_rs(&rs, s.draws, &mut rng, &mut scratch.raw)?;
    let a = shrink_factor(rs_vars[1].var_n, rs_vars[0].var_n);
    let cr = shift_scale_interval(&scratch.raw, rs_est.n_hat, a, rb, s.level, &mut scratch.sorted)?;
    rs_intervals[2] = (cr.lower, cr.upper);

    let chap = estimate_chapman(&c).n_hat;
    let chap_var = var_chapman(&c);
    let (logit, degenerate) = logit_chapman(&c, s.level)?;
    if degenerate {
        push_unique(&mut fallbacks, "chapman_zero_variance");
    }

    Ok(ReplicationResult {
        counts: c,
        n5: est.n_hat,
        n5_se: [vars[0].se(), vars[1].se(), vars[2].se()],
        n5_intervals,
        rs: rs_est.n_hat,
        rs_se: [rs_vars[0].se(), rs_vars[1].se()],
        rs_intervals,
        chapman: chap,
        chapman_se: chap_var.se(),
        chapman_interval: {
            let t = logit.clipped(Some(bounds));
            (t.lower, t.upper)
        },
        fallbacks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub mean: f64,
    /// Empirical SD across replications; absent for a single replication.
    pub sd: Option<f64>,
    pub avg_se: BTreeMap<String, f64>,
    pub coverage: BTreeMap<String, f64>,
    pub avg_width: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub scenario: SimScenario,
    pub replications: u64,
    pub n5: EstimatorSummary,
    pub rs: EstimatorSummary,
    pub chapman: EstimatorSummary,
    /// Number of replications in which each fallback rule fired.
    pub fallbacks: BTreeMap<String, u64>,
}

/// Runs every replication (in parallel on the current rayon pool) and
/// reduces the results in replication order, so the summary does not
/// depend on the number of threads.
pub fn run_scenario(s: &SimScenario) -> Result<SimSummary> {
    s.validate()?;
    let results: Vec<ReplicationResult> = (0..s.replications)
        .into_par_iter()
        .map_init(Scratch::default, |scratch, i| replicate(s, i, scratch))
        .collect::<Result<_>>()?;
    Ok(summarize(s, &results))
}

fn mean_sd(xs: impl Iterator<Item = f64> + Clone) -> (f64, Option<f64>) {
    let n = xs.clone().count();
    let mean = xs.clone().sum::<f64>() / n as f64;
    let sd = (n > 1).then(|| (xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt());
    (mean, sd)
}

type Column<T> = (&'static str, Vec<T>);

fn summarize_estimator(
    points: &[f64],
    truth: f64,
    se: &[Column<f64>],
    intervals: &[Column<(f64, f64)>],
) -> EstimatorSummary {
    let n = points.len() as f64;
    let (mean, sd) = mean_sd(points.iter().copied());
    let avg_se = se
        .iter()
        .map(|(k, v)| (k.to_string(), v.iter().sum::<f64>() / n))
        .collect();
    let mut coverage = BTreeMap::new();
    let mut avg_width = BTreeMap::new();
    for (k, v) in intervals {
        let hits = v.iter().filter(|&&(lo, hi)| lo <= truth && truth <= hi).count();
        let width: f64 = v.iter().map(|(lo, hi)| hi - lo).sum();
        coverage.insert(k.to_string(), hits as f64 / n);
        avg_width.insert(k.to_string(), width / n);
    }
    EstimatorSummary {
        mean,
        sd,
        avg_se,
        coverage,
        avg_width,
    }
}

/// Reduces replication results, in the order given, into a summary.
pub fn summarize(s: &SimScenario, results: &[ReplicationResult]) -> SimSummary {
    let truth = s.n_true as f64;
    let col = |f: &dyn Fn(&ReplicationResult) -> f64| results.iter().map(f).collect::<Vec<_>>();
    let icol = |f: &dyn Fn(&ReplicationResult) -> (f64, f64)| results.iter().map(f).collect::<Vec<_>>();

    let n5 = summarize_estimator(
        &col(&|r| r.n5),
        truth,
        &[
            (Adjustment::None.code(), col(&|r| r.n5_se[0])),
            (Adjustment::Fpc1.code(), col(&|r| r.n5_se[1])),
            (Adjustment::Fpc2.code(), col(&|r| r.n5_se[2])),
        ],
        &N5_INTERVALS
            .iter()
            .enumerate()
            .map(|(i, k)| (*k, icol(&|r| r.n5_intervals[i])))
            .collect::<Vec<_>>(),
    );
    let rs = summarize_estimator(
        &col(&|r| r.rs),
        truth,
        &[(RS_SE[0], col(&|r| r.rs_se[0])), (RS_SE[1], col(&|r| r.rs_se[1]))],
        &RS_INTERVALS
            .iter()
            .enumerate()
            .map(|(i, k)| (*k, icol(&|r| r.rs_intervals[i])))
            .collect::<Vec<_>>(),
    );
    let chapman = summarize_estimator(
        &col(&|r| r.chapman),
        truth,
        &[("chapman", col(&|r| r.chapman_se))],
        &[("logit", icol(&|r| r.chapman_interval))],
    );

    let mut fallbacks = BTreeMap::new();
    for r in results {
        for code in &r.fallbacks {
            *fallbacks.entry(code.to_string()).or_insert(0) += 1;
        }
    }
    SimSummary {
        scenario: s.clone(),
        replications: results.len() as u64,
        n5,
        rs,
        chapman,
        fallbacks,
    }
}
