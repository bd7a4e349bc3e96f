//! Cell-count tables, model parameters and record-level capture histories.
//!
//! Cell naming follows the two-stream layout: with Stream 1 (non-anchor)
//! recording positives only and Stream 2 (anchor) recording both results,
//! every member of the population lands in exactly one of five cells.
//!
//! | cell  | meaning                                                        |
//! |-------|----------------------------------------------------------------|
//! | `n15` | anchor-sampled, tested negative (whatever Stream 1 did)        |
//! | `n2`  | recorded by Stream 1 and anchor-sampled, positive              |
//! | `n4`  | recorded by Stream 1, not anchor-sampled                       |
//! | `n6`  | anchor-sampled positive, not recorded by Stream 1              |
//! | `n37` | neither recorded by Stream 1 nor anchor-sampled                |

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_open_probability, check_probability, Error, Result};

/// Non-negative cell count.
pub type Count = u64;

/// The observed five-cell table plus the known population size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawCounts5")]
pub struct CellCounts5 {
    n15: Count,
    n2: Count,
    n4: Count,
    n6: Count,
    n37: Count,
    n_tot: Count,
}

#[derive(Deserialize)]
struct RawCounts5 {
    n15: Count,
    n2: Count,
    n4: Count,
    n6: Count,
    n37: Count,
    n_tot: Count,
}

impl TryFrom<RawCounts5> for CellCounts5 {
    type Error = Error;

    fn try_from(raw: RawCounts5) -> Result<Self> {
        CellCounts5::new(raw.n15, raw.n2, raw.n4, raw.n6, raw.n37, raw.n_tot)
    }
}

impl CellCounts5 {
    /// Validates that the five cells add up to `n_tot` and that `n_tot > 0`.
    pub fn new(n15: Count, n2: Count, n4: Count, n6: Count, n37: Count, n_tot: Count) -> Result<Self> {
        let sum = [n15, n2, n4, n6, n37]
            .iter()
            .try_fold(0u64, |acc, &c| acc.checked_add(c))
            .ok_or_else(|| Error::invalid("cell counts overflow"))?;
        if sum != n_tot {
            return Err(Error::SumMismatch {
                n15,
                n2,
                n4,
                n6,
                n37,
                sum,
                n_tot,
            });
        }
        if n_tot == 0 {
            return Err(Error::invalid("n_tot must be positive"));
        }
        Ok(Self {
            n15,
            n2,
            n4,
            n6,
            n37,
            n_tot,
        })
    }

    /// Builds a table whose population size is the sum of its cells.
    pub fn from_cells(n15: Count, n2: Count, n4: Count, n6: Count, n37: Count) -> Result<Self> {
        let n_tot = n15
            .checked_add(n2)
            .and_then(|s| s.checked_add(n4))
            .and_then(|s| s.checked_add(n6))
            .and_then(|s| s.checked_add(n37))
            .ok_or_else(|| Error::invalid("cell counts overflow"))?;
        Self::new(n15, n2, n4, n6, n37, n_tot)
    }

    pub fn n15(&self) -> Count {
        self.n15
    }
    pub fn n2(&self) -> Count {
        self.n2
    }
    pub fn n4(&self) -> Count {
        self.n4
    }
    pub fn n6(&self) -> Count {
        self.n6
    }
    pub fn n37(&self) -> Count {
        self.n37
    }
    pub fn n_tot(&self) -> Count {
        self.n_tot
    }

    /// Cells in the canonical order `(n15, n2, n4, n6, n37)`.
    pub fn cells(&self) -> [Count; 5] {
        [self.n15, self.n2, self.n4, self.n6, self.n37]
    }

    /// Individuals known to be cases.
    pub fn known_cases(&self) -> Count {
        self.n2 + self.n4 + self.n6
    }

    /// Individuals known not to be cases.
    pub fn known_negatives(&self) -> Count {
        self.n15
    }

    /// Anchor-sampled individuals not recorded by Stream 1.
    pub fn anchor_unrecorded(&self) -> Count {
        self.n15 + self.n6
    }

    /// Population members not recorded by Stream 1.
    pub fn unrecorded(&self) -> Count {
        self.n15 + self.n6 + self.n37
    }

    /// Truncation bounds `[n_c, N_tot - n15]` on the case count.
    pub fn case_bounds(&self) -> (f64, f64) {
        (self.known_cases() as f64, (self.n_tot - self.n15) as f64)
    }

    /// The anchor sample viewed on its own.
    pub fn anchor_summary(&self) -> RsSummary {
        RsSummary {
            n_rs: self.n15 + self.n2 + self.n6,
            n_rs_pos: self.n2 + self.n6,
            n_tot: self.n_tot,
        }
    }

    pub fn has_zero_cell(&self) -> bool {
        self.cells().contains(&0)
    }

    /// Multiplies every cell and the population size by `k`.
    pub fn scaled(&self, k: Count) -> Result<Self> {
        let m = |c: Count| c.checked_mul(k).ok_or_else(|| Error::invalid("scaled counts overflow"));
        Self::new(
            m(self.n15)?,
            m(self.n2)?,
            m(self.n4)?,
            m(self.n6)?,
            m(self.n37)?,
            m(self.n_tot)?,
        )
    }
}

impl fmt::Display for CellCounts5 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(n15={}, n2={}, n4={}, n6={}, n37={}; n_tot={})",
            self.n15, self.n2, self.n4, self.n6, self.n37, self.n_tot
        )
    }
}

/// Four-cell table: neither stream records negatives, anchor inclusion
/// probability `psi` is known by design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellCounts4 {
    pub n2: Count,
    pub n4: Count,
    pub n6: Count,
    psi: f64,
}

impl CellCounts4 {
    pub fn new(n2: Count, n4: Count, n6: Count, psi: f64) -> Result<Self> {
        check_open_probability("psi", psi)?;
        Ok(Self { n2, n4, n6, psi })
    }

    pub fn psi(&self) -> f64 {
        self.psi
    }
}

/// Seven-cell table: both streams record negatives. Index `i` holds `n_{i+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCounts7 {
    pub n: [Count; 7],
}

impl CellCounts7 {
    pub fn new(n: [Count; 7]) -> Self {
        Self { n }
    }

    /// Cell `n_i` for `i` in `1..=7`.
    pub fn cell(&self, i: usize) -> Count {
        self.n[i - 1]
    }

    pub fn n_tot(&self) -> Count {
        self.n.iter().sum()
    }

    /// Merges cells that become indistinguishable once Stream 1 stops
    /// recording negatives: `n15 = n1 + n5`, `n37 = n3 + n7`.
    pub fn consolidate(&self) -> Result<CellCounts5> {
        CellCounts5::from_cells(
            self.cell(1) + self.cell(5),
            self.cell(2),
            self.cell(4),
            self.cell(6),
            self.cell(3) + self.cell(7),
        )
    }
}

/// The anchor sample on its own: size, positives, and population size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RsSummary {
    pub n_rs: Count,
    pub n_rs_pos: Count,
    pub n_tot: Count,
}

impl RsSummary {
    pub fn new(n_rs: Count, n_rs_pos: Count, n_tot: Count) -> Result<Self> {
        if n_rs == 0 {
            return Err(Error::invalid("anchor sample size must be positive"));
        }
        if n_rs_pos > n_rs || n_rs > n_tot {
            return Err(Error::invalid(format!(
                "need 0 <= positives ({n_rs_pos}) <= sample size ({n_rs}) <= population ({n_tot})"
            )));
        }
        Ok(Self { n_rs, n_rs_pos, n_tot })
    }

    pub fn negatives(&self) -> Count {
        self.n_rs - self.n_rs_pos
    }
}

/// Sampling-scale parameters of the five-cell multinomial model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// P(sampled in the anchor stream)
    pub psi: f64,
    /// P(sampled in Stream 1)
    pub phi: f64,
    /// P(case | sampled in Stream 1)
    pub pi_s1: f64,
    /// P(case | not sampled in Stream 1)
    pub pi_sbar1: f64,
}

/// Recorded-scale parameters: a Stream-1-sampled non-case is sampled but
/// never recorded, so recording in Stream 1 implies being a case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordedParams {
    /// P(recorded in Stream 1)
    pub phi_r: f64,
    /// P(recorded in the anchor stream)
    pub psi_r: f64,
    /// P(case | not recorded in Stream 1)
    pub pi_rbar1: f64,
}

impl ModelParams {
    pub fn new(psi: f64, phi: f64, pi_s1: f64, pi_sbar1: f64) -> Result<Self> {
        check_probability("psi", psi)?;
        check_probability("phi", phi)?;
        check_probability("pi_s1", pi_s1)?;
        check_probability("pi_sbar1", pi_sbar1)?;
        Ok(Self {
            psi,
            phi,
            pi_s1,
            pi_sbar1,
        })
    }

    pub fn theta(&self) -> f64 {
        self.pi_s1 * self.phi
    }

    /// Prevalence.
    pub fn pi(&self) -> f64 {
        self.pi_s1 * self.phi + self.pi_sbar1 * (1.0 - self.phi)
    }

    /// Cell probabilities `(p15, p2, p4, p6, p37)` in the identifiable
    /// `(psi, theta, pi)` form.
    pub fn cell_probs(&self) -> [f64; 5] {
        let (psi, theta, pi) = (self.psi, self.theta(), self.pi());
        [
            psi * (1.0 - pi),
            psi * theta,
            (1.0 - psi) * theta,
            psi * (pi - theta),
            (1.0 - psi) * (1.0 - theta),
        ]
    }

    pub fn recorded(&self) -> RecordedParams {
        let phi_r = self.theta();
        let pi_rbar1 = if phi_r < 1.0 {
            self.pi_sbar1 * (1.0 - self.phi) / (1.0 - phi_r)
        } else {
            0.0
        };
        RecordedParams {
            phi_r,
            psi_r: self.psi,
            pi_rbar1,
        }
    }
}

impl RecordedParams {
    /// Cell probabilities `(p15, p2, p4, p6, p37)` on the recorded scale.
    pub fn cell_probs(&self) -> [f64; 5] {
        let (phi, psi, pi) = (self.phi_r, self.psi_r, self.pi_rbar1);
        [
            (1.0 - phi) * (1.0 - pi) * psi,
            psi * phi,
            (1.0 - psi) * phi,
            (1.0 - phi) * pi * psi,
            (1.0 - phi) * (1.0 - psi),
        ]
    }

    /// Prevalence as a mix of the unrecorded and recorded groups; every
    /// recorded individual is a case.
    pub fn pi(&self) -> f64 {
        self.pi_rbar1 * (1.0 - self.phi_r) + self.phi_r
    }
}

/// Variance and interval fallback rules applied to sparse tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// A cell is empty; every cell proportion was replaced by `(n_k + 0.5) / (N_tot + 2.5)`.
    JeffreysSmoothing,
    /// `n6 = 0`; `p*` was replaced by `(n6 + 0.5) / (n15 + n6 + 1)`.
    SmoothedPStar,
    /// `n15 + n6 <= 1`; the FPC variance was replaced by the unadjusted one.
    UnadjustedSubstitute,
    /// `n6 = 0` in a point estimate; the extrapolation term was set to its zero limit.
    ZeroN6Limit,
}

impl Fallback {
    pub fn code(&self) -> &'static str {
        match self {
            Fallback::JeffreysSmoothing => "jeffreys_smoothing",
            Fallback::SmoothedPStar => "smoothed_p_star",
            Fallback::UnadjustedSubstitute => "unadjusted_substitute",
            Fallback::ZeroN6Limit => "zero_n6_limit",
        }
    }
}

impl fmt::Display for Fallback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// One individual's capture history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptureRecord {
    pub id: String,
    /// Recorded as a case by Stream 1.
    pub stream1_positive: bool,
    pub in_anchor: bool,
    /// Anchor adjudication; present exactly when `in_anchor`.
    pub anchor_result: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stratum: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cell {
    N15,
    N2,
    N4,
    N6,
}

impl CaptureRecord {
    pub fn validate(&self) -> Result<()> {
        match (self.in_anchor, self.anchor_result) {
            (true, None) => Err(Error::MissingAnchorResult(self.id.clone())),
            (false, Some(_)) => Err(Error::invalid(format!(
                "record `{}` has an anchor result but is not in the anchor sample",
                self.id
            ))),
            _ => Ok(()),
        }
    }

    /// Cell of an observed record; `None` means the record carries no
    /// information and belongs to `n37`. Anchor adjudication wins over
    /// Stream 1: a Stream-1 positive judged negative by the anchor is `n15`.
    fn cell(&self) -> Option<Cell> {
        match (self.in_anchor, self.anchor_result, self.stream1_positive) {
            (true, Some(false), _) => Some(Cell::N15),
            (true, Some(true), true) => Some(Cell::N2),
            (true, Some(true), false) => Some(Cell::N6),
            (false, _, true) => Some(Cell::N4),
            _ => None,
        }
    }
}

fn count_cells<'a>(
    records: impl IntoIterator<Item = &'a CaptureRecord>,
    population_size: Count,
) -> Result<CellCounts5> {
    let mut cells = [0u64; 4];
    let mut seen = 0u64;
    for r in records {
        seen += 1;
        match r.cell() {
            Some(Cell::N15) => cells[0] += 1,
            Some(Cell::N2) => cells[1] += 1,
            Some(Cell::N4) => cells[2] += 1,
            Some(Cell::N6) => cells[3] += 1,
            None => {}
        }
    }
    if population_size < seen {
        return Err(Error::PopulationTooSmall {
            population: population_size,
            observed: seen,
        });
    }
    let observed: u64 = cells.iter().sum();
    CellCounts5::new(
        cells[0],
        cells[1],
        cells[2],
        cells[3],
        population_size - observed,
        population_size,
    )
}

fn validate_records(records: &[CaptureRecord]) -> Result<()> {
    let mut ids = HashSet::with_capacity(records.len());
    for r in records {
        r.validate()?;
        if !ids.insert(r.id.as_str()) {
            return Err(Error::DuplicateId(r.id.clone()));
        }
    }
    Ok(())
}

/// Builds the five-cell table from record-level data. Population members
/// without a record are counted in `n37`.
pub fn tabulate(records: &[CaptureRecord], population_size: Count) -> Result<CellCounts5> {
    validate_records(records)?;
    count_cells(records, population_size)
}

/// Per-stratum tables. Every record needs a stratum label that appears in
/// `population_sizes`; strata without records get an all-`n37` table.
pub fn tabulate_by_stratum(
    records: &[CaptureRecord],
    population_sizes: &BTreeMap<String, Count>,
) -> Result<BTreeMap<String, CellCounts5>> {
    validate_records(records)?;
    let mut groups: BTreeMap<&str, Vec<&CaptureRecord>> =
        population_sizes.keys().map(|k| (k.as_str(), Vec::new())).collect();
    for r in records {
        let label = r
            .stratum
            .as_deref()
            .ok_or_else(|| Error::invalid(format!("record `{}` has no stratum", r.id)))?;
        groups
            .get_mut(label)
            .ok_or_else(|| Error::invalid(format!("no population size given for stratum `{label}`")))?
            .push(r);
    }
    groups
        .into_iter()
        .map(|(label, rs)| {
            let size = population_sizes[label];
            count_cells(rs, size)
                .map(|t| (label.to_string(), t))
                .map_err(|e| e.in_method(format!("stratum {label}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, s1: bool, anchor: Option<bool>) -> CaptureRecord {
        CaptureRecord {
            id: id.to_string(),
            stream1_positive: s1,
            in_anchor: anchor.is_some(),
            anchor_result: anchor,
            stratum: None,
        }
    }

    pub(crate) fn crisp_records() -> Vec<CaptureRecord> {
        let mut out = Vec::new();
        let mut push = |n: usize, s1: bool, anchor: Option<bool>| {
            for _ in 0..n {
                let id = format!("p{}", out.len());
                out.push(rec(&id, s1, anchor));
            }
        };
        push(12, true, Some(true));
        push(52, true, None);
        push(19, false, Some(true));
        push(166, false, Some(false));
        push(3, true, Some(false));
        out
    }

    #[test]
    fn crisp_reconstruction() {
        let t = tabulate(&crisp_records(), 1029).unwrap();
        assert_eq!(t.cells(), [169, 12, 52, 19, 777]);
        assert_eq!(t.n_tot(), 1029);
        assert_eq!(t.known_cases(), 83);
        assert_eq!(t.anchor_summary(), RsSummary::new(200, 31, 1029).unwrap());
    }

    #[test]
    fn empty_records_all_unobserved() {
        let t = tabulate(&[], 10).unwrap();
        assert_eq!(t.cells(), [0, 0, 0, 0, 10]);
    }

    #[test]
    fn flag_truth_table() {
        // every consistent (s1, in_anchor, result) combination
        let records = vec![
            rec("a", true, Some(true)),
            rec("b", true, Some(false)),
            rec("c", true, None),
            rec("d", false, Some(true)),
            rec("e", false, Some(false)),
            rec("f", false, None),
        ];
        // hand enumeration: a->n2, b->n15, c->n4, d->n6, e->n15, f->n37
        let t = tabulate(&records, 6).unwrap();
        assert_eq!(t.cells(), [2, 1, 1, 1, 1]);
        let t = tabulate(&records[..4], 6).unwrap();
        assert_eq!(t.cells(), [1, 1, 1, 1, 2]);
    }

    #[test]
    fn tabulate_errors() {
        let dup = vec![rec("x", true, None), rec("x", false, Some(true))];
        assert!(matches!(tabulate(&dup, 5), Err(Error::DuplicateId(_))));

        let mut missing = rec("y", false, None);
        missing.in_anchor = true;
        assert!(matches!(tabulate(&[missing], 5), Err(Error::MissingAnchorResult(_))));

        let many = vec![rec("a", true, None), rec("b", true, None)];
        assert!(matches!(tabulate(&many, 1), Err(Error::PopulationTooSmall { .. })));
    }

    #[test]
    fn stratified_tabulation() {
        let mut records = crisp_records();
        for (i, r) in records.iter_mut().enumerate() {
            r.stratum = Some(if i % 2 == 0 { "a" } else { "b" }.to_string());
        }
        let sizes = BTreeMap::from([("a".to_string(), 500), ("b".to_string(), 529)]);
        let tables = tabulate_by_stratum(&records, &sizes).unwrap();
        let mut total = [0u64; 5];
        for t in tables.values() {
            for (acc, c) in total.iter_mut().zip(t.cells()) {
                *acc += c;
            }
        }
        assert_eq!(total, [169, 12, 52, 19, 777]);

        let missing = BTreeMap::from([("a".to_string(), 500)]);
        assert!(tabulate_by_stratum(&records, &missing).is_err());
    }

    #[test]
    fn sum_mismatch_is_reported() {
        let err = CellCounts5::new(1, 1, 1, 1, 1, 6).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("n15=1") && msg.contains("n_tot=6"), "{msg}");
        assert!(CellCounts5::new(0, 0, 0, 0, 0, 0).is_err());
    }

    #[test]
    fn seven_cell_consolidation() {
        let c7 = CellCounts7::new([1, 2, 3, 4, 5, 6, 7]);
        let c5 = c7.consolidate().unwrap();
        assert_eq!(c5.cells(), [6, 2, 4, 6, 10]);
        assert_eq!(c5.n_tot(), c7.n_tot());
    }

    #[test]
    fn cell_probabilities_agree_across_parameterizations() {
        let grid = [0.0, 0.05, 0.3, 0.5, 0.77, 1.0];
        for &psi in &grid {
            for &phi in &grid {
                for &a in &grid {
                    for &b in &grid {
                        let m = ModelParams::new(psi, phi, a, b).unwrap();
                        let direct = m.cell_probs();
                        let sum: f64 = direct.iter().sum();
                        assert!((sum - 1.0).abs() < 1e-12);
                        assert!(direct.iter().all(|p| (-1e-15..=1.0 + 1e-15).contains(p)));
                        assert!(m.theta() <= m.pi() + 1e-15 && m.pi() <= 1.0 + 1e-15);

                        let rec = m.recorded();
                        assert!((0.0..=1.0 + 1e-12).contains(&rec.pi_rbar1));
                        if m.theta() < 1.0 {
                            for (x, y) in direct.iter().zip(rec.cell_probs()) {
                                assert!((x - y).abs() < 1e-12, "{m:?}");
                            }
                            assert!((rec.pi() - m.pi()).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }
}
