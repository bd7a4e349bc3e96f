//! Analysis driver and rendering of estimate reports and simulation
//! summaries to JSON, CSV and Markdown.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{estimate_4cell, estimate_5cell, estimate_chapman, estimate_rs, stratified_estimate};
use crate::intervals::{credible_5cell, credible_rs, logit_chapman, rs_bounds, wald, Interval};
use crate::io::counts_warnings;
use crate::model::{CellCounts4, CellCounts5};
use crate::simulation::{EstimatorSummary, SimSummary};
use crate::variance::{var5, var_4cell, var_chapman, var_rs, var_stratified, Adjustment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Five-cell estimator.
    N5,
    /// Anchor-only estimator.
    Rs,
    Chapman,
    /// Four-cell estimator with a design-known anchor probability.
    FourCell,
}

impl Method {
    pub const DEFAULT: [Method; 3] = [Method::N5, Method::Rs, Method::Chapman];

    pub fn code(&self) -> &'static str {
        match self {
            Method::N5 => "n5",
            Method::Rs => "rs",
            Method::Chapman => "chapman",
            Method::FourCell => "four_cell",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "n5" | "five_cell" => Ok(Method::N5),
            "rs" => Ok(Method::Rs),
            "chapman" => Ok(Method::Chapman),
            "four_cell" | "n4" => Ok(Method::FourCell),
            other => Err(Error::invalid(format!(
                "unknown method `{other}` (expected n5, rs, chapman, four_cell)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
    Markdown,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            "markdown" | "md" => Ok(OutputFormat::Markdown),
            other => Err(Error::invalid(format!(
                "unknown format `{other}` (expected json, csv, markdown)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub methods: Vec<Method>,
    pub level: f64,
    /// Posterior draws per credible interval.
    pub draws: usize,
    pub seed: u64,
    pub adjustments: Vec<Adjustment>,
    /// Anchor sampling probability, required by the four-cell method.
    pub psi: Option<f64>,
    pub format: OutputFormat,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            methods: Method::DEFAULT.to_vec(),
            level: 0.95,
            draws: 10_000,
            seed: 1,
            adjustments: Adjustment::ALL.to_vec(),
            psi: None,
            format: OutputFormat::Json,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.draws == 0 {
            return Err(Error::invalid("draws must be at least 1"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Probability {
                name: "level",
                value: self.level,
                range: "(0, 1)",
            });
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("no methods requested"));
        }
        if self.methods.contains(&Method::FourCell) && self.psi.is_none() {
            return Err(Error::invalid("the four_cell method needs psi"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnalysisInput {
    Counts(CellCounts5),
    Strata(BTreeMap<String, CellCounts5>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: String,
    pub point: f64,
    /// Prevalence scale, when the population size is known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point_pi: Option<f64>,
    pub level: f64,
    pub se: BTreeMap<String, f64>,
    pub intervals: BTreeMap<String, [f64; 2]>,
    pub diagnostics: Vec<String>,
}

impl EstimateReport {
    fn new(method: &str, point: f64, point_pi: Option<f64>, level: f64) -> Self {
        Self {
            method: method.to_string(),
            point,
            point_pi,
            level,
            se: BTreeMap::new(),
            intervals: BTreeMap::new(),
            diagnostics: Vec::new(),
        }
    }

    fn add_interval(&mut self, key: &str, iv: Interval) {
        if iv.truncated_low {
            self.diagnostics.push(format!("{key}: truncated below at {}", iv.lower));
        }
        if iv.truncated_high {
            self.diagnostics.push(format!("{key}: truncated above at {}", iv.upper));
        }
        self.intervals.insert(key.to_string(), [iv.lower, iv.upper]);
    }

    fn note(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        if !self.diagnostics.contains(&msg) {
            self.diagnostics.push(msg);
        }
    }

    /// True when every reported number is finite.
    pub fn is_finite(&self) -> bool {
        self.point.is_finite()
            && self.se.values().all(|v| v.is_finite())
            && self.intervals.values().all(|[a, b]| a.is_finite() && b.is_finite())
    }
}

fn five_cell_report(c: &CellCounts5, cfg: &AnalysisConfig) -> Result<EstimateReport> {
    let est = estimate_5cell(c);
    let mut r = EstimateReport::new("n5", est.n_hat, est.pi_hat, cfg.level);
    for w in counts_warnings(c) {
        r.note(w);
    }
    for f in &est.fallbacks {
        r.note(format!("fallback: {f}"));
    }
    let bounds = c.case_bounds();
    for &adj in &cfg.adjustments {
        let v = var5(c, adj);
        for f in &v.fallbacks {
            r.note(format!("fallback ({}): {f}", adj.code()));
        }
        r.se.insert(adj.code().to_string(), v.se());
        r.add_interval(
            &format!("wald/{}", adj.code()),
            wald(est.n_hat, v.se(), cfg.level, Some(bounds))?,
        );
        let (iv, _) = credible_5cell(c, cfg.draws, adj, cfg.level, cfg.seed)?;
        r.add_interval(&format!("credible/{}", adj.code()), iv);
    }
    Ok(r)
}

fn rs_report(c: &CellCounts5, cfg: &AnalysisConfig) -> Result<EstimateReport> {
    let rs = c.anchor_summary();
    let est = estimate_rs(&rs)?;
    let mut r = EstimateReport::new("rs", est.n_hat, est.pi_hat, cfg.level);
    let bounds = rs_bounds(&rs);
    let unadj = var_rs(&rs, false)?;
    r.se.insert("rs_unadjusted".into(), unadj.se());
    r.add_interval(
        "wald/rs_unadjusted",
        wald(est.n_hat, unadj.se(), cfg.level, Some(bounds))?,
    );
    if rs.n_rs >= 2 {
        let adj = var_rs(&rs, true)?;
        r.se.insert("cochran_fpc".into(), adj.se());
        r.add_interval("wald/cochran_fpc", wald(est.n_hat, adj.se(), cfg.level, Some(bounds))?);
        r.add_interval(
            "credible/rs_cochran",
            credible_rs(&rs, cfg.draws, cfg.level, cfg.seed, true)?,
        );
        r.note("credible/rs_cochran: reconstructed Jeffreys-Beta shift-and-scale interval");
    } else {
        r.note("anchor sample smaller than 2: Cochran correction undefined");
    }
    Ok(r)
}

fn chapman_report(c: &CellCounts5, cfg: &AnalysisConfig) -> Result<EstimateReport> {
    let est = estimate_chapman(c);
    let mut r = EstimateReport::new("chapman", est.n_hat, est.pi_hat, cfg.level);
    r.se.insert("chapman".into(), var_chapman(c).se());
    let (iv, degenerate) = logit_chapman(c, cfg.level)?;
    if degenerate {
        r.note("chapman variance is zero (n4 = 0 or n6 = 0); logit interval uses smoothed cells");
    }
    r.add_interval("logit", iv.clipped(Some(c.case_bounds())));
    r.note("logit: transformed-logit interval on +0.5-smoothed cells; other smoothing conventions shift the upper endpoint");
    Ok(r)
}

fn four_cell_report(c: &CellCounts5, cfg: &AnalysisConfig) -> Result<EstimateReport> {
    let psi = cfg
        .psi
        .ok_or_else(|| Error::invalid("the four_cell method needs psi"))?;
    let c4 = CellCounts4::new(c.n2(), c.n4(), c.n6(), psi)?;
    let est = estimate_4cell(&c4);
    let mut r = EstimateReport::new("four_cell", est.n_hat, Some(est.n_hat / c.n_tot() as f64), cfg.level);
    let v = var_4cell(&c4);
    r.se.insert("four_cell".into(), v.se());
    r.add_interval(
        "wald/four_cell",
        wald(est.n_hat, v.se(), cfg.level, Some(c.case_bounds()))?,
    );
    Ok(r)
}

fn stratified_report(tables: &BTreeMap<String, CellCounts5>, cfg: &AnalysisConfig) -> Result<EstimateReport> {
    let est = stratified_estimate(tables)?;
    let mut r = EstimateReport::new("n5_stratified", est.n_hat, est.pi_hat, cfg.level);
    r.note(format!(
        "{} independent strata; point estimates and variances summed",
        tables.len()
    ));
    r.note("credible intervals are not formed for stratified input");
    for f in &est.fallbacks {
        r.note(format!("fallback: {f}"));
    }
    let (lo, hi) = tables.values().fold((0.0, 0.0), |(lo, hi), t| {
        let (a, b) = t.case_bounds();
        (lo + a, hi + b)
    });
    for &adj in &cfg.adjustments {
        let v = var_stratified(tables, adj)?;
        for f in &v.fallbacks {
            r.note(format!("fallback ({}): {f}", adj.code()));
        }
        r.se.insert(adj.code().to_string(), v.se());
        r.add_interval(
            &format!("wald/{}", adj.code()),
            wald(est.n_hat, v.se(), cfg.level, Some((lo, hi)))?,
        );
    }
    Ok(r)
}

/// Runs every requested method. A stratified input with a single stratum
/// is analysed as an ordinary table.
pub fn run_analysis(input: &AnalysisInput, cfg: &AnalysisConfig) -> Result<Vec<EstimateReport>> {
    cfg.validate()?;
    let counts = match input {
        AnalysisInput::Counts(c) => c,
        AnalysisInput::Strata(m) if m.len() == 1 => m.values().next().unwrap(),
        AnalysisInput::Strata(m) => {
            return Ok(vec![
                stratified_report(m, cfg).map_err(|e| e.in_method("n5_stratified"))?
            ]);
        }
    };
    cfg.methods
        .iter()
        .map(|&m| {
            let r = match m {
                Method::N5 => five_cell_report(counts, cfg),
                Method::Rs => rs_report(counts, cfg),
                Method::Chapman => chapman_report(counts, cfg),
                Method::FourCell => four_cell_report(counts, cfg),
            };
            r.map_err(|e| e.in_method(m.code()))
        })
        .collect()
}

/// Half away from zero, one decimal.
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

fn fmt1(x: f64) -> String {
    format!("{:.1}", round1(x))
}

/// Full-precision shortest round-trip representation.
fn full(x: f64) -> String {
    serde_json::to_string(&x).unwrap_or_else(|_| x.to_string())
}

fn csv_out(rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Display order of variance variants.
fn rank(key: &str) -> usize {
    const ORDER: [&str; 8] = [
        "unadjusted",
        "fpc1",
        "fpc2",
        "rs_unadjusted",
        "cochran_fpc",
        "rs_cochran",
        "chapman",
        "logit",
    ];
    ORDER.iter().position(|k| *k == key).unwrap_or(ORDER.len())
}

fn variant(key: &str) -> &str {
    key.rsplit('/').next().unwrap_or(key)
}

/// Interval keys in display order: Wald rows first, then by variant.
fn interval_order(key: &str) -> (bool, usize) {
    (!key.starts_with("wald/"), rank(variant(key)))
}

pub fn render_reports(reports: &[EstimateReport], format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Json => Ok(serde_json::to_string_pretty(reports)? + "\n"),
        OutputFormat::Csv => {
            let mut rows = vec![["method", "quantity", "variant", "value", "lower", "upper"]
                .map(String::from)
                .to_vec()];
            for r in reports {
                let s = |x: &str| x.to_string();
                rows.push(vec![s(&r.method), s("point"), s(""), full(r.point), s(""), s("")]);
                for (k, v) in &r.se {
                    rows.push(vec![s(&r.method), s("se"), s(k), full(*v), s(""), s("")]);
                }
                for (k, [lo, hi]) in &r.intervals {
                    rows.push(vec![s(&r.method), s("interval"), s(k), s(""), full(*lo), full(*hi)]);
                }
                for d in &r.diagnostics {
                    rows.push(vec![s(&r.method), s("diagnostic"), s(""), s(d), s(""), s("")]);
                }
            }
            csv_out(rows)
        }
        OutputFormat::Markdown => {
            let mut out = String::new();
            let pct = reports.first().map_or(95.0, |r| r.level * 100.0);
            let _ = writeln!(
                out,
                "| Estimator | Variance | Estimate | SE | Interval | {pct}% interval |"
            );
            let _ = writeln!(out, "|---|---|---|---|---|---|");
            for r in reports {
                let mut first = true;
                let mut row = |variance: &str, se: Option<f64>, kind: &str, iv: Option<&[f64; 2]>| {
                    let est = if first { fmt1(r.point) } else { String::new() };
                    let name = if first { r.method.as_str() } else { "" };
                    first = false;
                    let _ = writeln!(
                        out,
                        "| {name} | {variance} | {est} | {} | {kind} | {} |",
                        se.map(fmt1).unwrap_or_default(),
                        iv.map(|[a, b]| format!("[{}, {}]", fmt1(*a), fmt1(*b)))
                            .unwrap_or_default()
                    );
                };
                let mut keys: Vec<&String> = r.se.keys().collect();
                keys.sort_by_key(|k| rank(k));
                let paired = |k: &str| ["wald", "credible"].map(|kind| format!("{kind}/{k}"));
                // intervals not tied to a variance variant, e.g. `logit`
                let mut loose: Vec<(&String, &[f64; 2])> = r
                    .intervals
                    .iter()
                    .filter(|(ik, _)| !r.se.keys().any(|k| paired(k).contains(ik)))
                    .collect();
                loose.sort_by_key(|(ik, _)| rank(variant(ik)));
                let mut loose = loose.into_iter();
                for k in keys {
                    let mut first_row = true;
                    for ik in paired(k) {
                        if let Some(iv) = r.intervals.get(&ik) {
                            let kind = ik.split('/').next().unwrap_or_default();
                            row(
                                if first_row { k } else { "" },
                                first_row.then_some(r.se[k]),
                                kind,
                                Some(iv),
                            );
                            first_row = false;
                        }
                    }
                    if first_row {
                        match loose.next() {
                            Some((ik, iv)) => row(k, Some(r.se[k]), ik, Some(iv)),
                            None => row(k, Some(r.se[k]), "", None),
                        }
                    }
                }
                for (ik, iv) in loose {
                    row("", None, ik, Some(iv));
                }
            }
            let notes: Vec<_> = reports
                .iter()
                .flat_map(|r| r.diagnostics.iter().map(move |d| format!("- {}: {d}", r.method)))
                .collect();
            if !notes.is_empty() {
                out.push_str("\nDiagnostics:\n\n");
                for n in notes {
                    out.push_str(&n);
                    out.push('\n');
                }
            }
            Ok(out)
        }
    }
}

fn sim_rows(name: &str, e: &EstimatorSummary, rows: &mut Vec<Vec<String>>) {
    let s = |x: &str| x.to_string();
    rows.push(vec![s(name), s("mean"), s(""), full(e.mean)]);
    rows.push(vec![s(name), s("sd"), s(""), e.sd.map(full).unwrap_or_else(|| s("NA"))]);
    for (k, v) in &e.avg_se {
        rows.push(vec![s(name), s("avg_se"), s(k), full(*v)]);
    }
    for (k, v) in &e.coverage {
        rows.push(vec![s(name), s("coverage"), s(k), full(*v)]);
    }
    for (k, v) in &e.avg_width {
        rows.push(vec![s(name), s("avg_width"), s(k), full(*v)]);
    }
}

pub fn render_simulation(sum: &SimSummary, format: OutputFormat) -> Result<String> {
    let estimators = [("n5", &sum.n5), ("rs", &sum.rs), ("chapman", &sum.chapman)];
    match format {
        OutputFormat::Json => Ok(serde_json::to_string_pretty(sum)? + "\n"),
        OutputFormat::Csv => {
            let mut rows = vec![["estimator", "metric", "variant", "value"].map(String::from).to_vec()];
            for (name, e) in estimators {
                sim_rows(name, e, &mut rows);
            }
            rows.push(vec![
                "all".into(),
                "replications".into(),
                String::new(),
                sum.replications.to_string(),
            ]);
            for (k, v) in &sum.fallbacks {
                rows.push(vec!["all".into(), "fallback".into(), k.clone(), v.to_string()]);
            }
            csv_out(rows)
        }
        OutputFormat::Markdown => {
            let s = &sum.scenario;
            let mut out = format!(
                "N_tot = {}, N = {}, anchor = {}, replications = {}, draws = {}, seed = {}\n\n",
                s.n_tot, s.n_true, s.anchor_size, sum.replications, s.draws, s.master_seed
            );
            out.push_str("| Estimator | Mean (SD) [avg. SE] | Interval | CI coverage [avg. width] |\n");
            out.push_str("|---|---|---|---|\n");
            for (name, e) in estimators {
                let sd = e.sd.map(fmt1).unwrap_or_else(|| "NA".into());
                let mut se_keys: Vec<&String> = e.avg_se.keys().collect();
                se_keys.sort_by_key(|k| rank(k));
                let ses = se_keys
                    .iter()
                    .map(|k| format!("[{}]", fmt1(e.avg_se[*k])))
                    .collect::<Vec<_>>()
                    .join(", ");
                let head = format!("{} ({sd}) {ses}", fmt1(e.mean));
                let mut iv_keys: Vec<&String> = e.coverage.keys().collect();
                iv_keys.sort_by_key(|k| interval_order(k));
                for (i, k) in iv_keys.into_iter().enumerate() {
                    let cov = e.coverage[k];
                    let _ = writeln!(
                        out,
                        "| {} | {} | {k} | {cov:.3} [{}] |",
                        if i == 0 { name } else { "" },
                        if i == 0 { head.as_str() } else { "" },
                        fmt1(e.avg_width[k])
                    );
                }
            }
            if !sum.fallbacks.is_empty() {
                out.push_str("\nFallback incidence (replications):\n\n");
                for (k, v) in &sum.fallbacks {
                    let _ = writeln!(out, "- {k}: {v}");
                }
            }
            Ok(out)
        }
    }
}
