//! Acceptance suite. Prints one PASS/FAIL line per criterion followed by
//! the individual checks, and exits non-zero when any criterion fails.

use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use anchorcrc::estimators::{estimate_5cell_recorded, estimate_5cell_weighted};
use anchorcrc::intervals::rs_bounds;
use anchorcrc::report::render_simulation;
use anchorcrc::simulation::{exact_conditional_check, preset};
use anchorcrc::variance::{var5_unadjusted, var_chapman, var_rs};
use anchorcrc::*;

const SEED: u64 = 1;
const THREADS: [usize; 2] = [1, 8];

struct Criterion {
    title: &'static str,
    checks: Vec<(bool, String)>,
}

impl Criterion {
    fn new(title: &'static str) -> Self {
        Self {
            title,
            checks: Vec::new(),
        }
    }

    fn near(&mut self, name: &str, got: f64, want: f64, tol: f64) {
        let ok = (got - want).abs() <= tol;
        self.checks
            .push((ok, format!("{name}: got {got:.4}, want {want} ± {tol}")));
    }

    fn within(&mut self, name: &str, got: f64, lo: f64, hi: f64) {
        let ok = lo <= got && got <= hi;
        self.checks
            .push((ok, format!("{name}: got {got:.4}, want [{lo}, {hi}]")));
    }

    fn holds(&mut self, name: &str, ok: bool, detail: String) {
        self.checks.push((ok, format!("{name}: {detail}")));
    }

    fn faster(&mut self, name: &str, took: Duration, limit_s: f64) {
        let s = took.as_secs_f64();
        self.checks
            .push((s < limit_s, format!("{name}: {s:.3} s, limit {limit_s} s")));
    }

    fn report(&self, index: usize) -> bool {
        let passed = self.checks.iter().filter(|(ok, _)| *ok).count();
        let ok = passed == self.checks.len();
        println!(
            "{} criterion {index}: {} ({passed}/{} checks)",
            if ok { "PASS" } else { "FAIL" },
            self.title,
            self.checks.len()
        );
        for (ok, line) in &self.checks {
            println!("    {} {line}", if *ok { "ok  " } else { "FAIL" });
        }
        ok
    }
}

fn crisp() -> CellCounts5 {
    CellCounts5::new(169, 12, 52, 19, 777, 1029).unwrap()
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

fn golden() -> Criterion {
    let mut c = Criterion::new("CRISP golden values");
    let start = Instant::now();
    let t = crisp();
    let level = 0.95;
    let bounds = Some(t.case_bounds());
    let n5 = estimate_5cell(&t).n_hat;
    let v5 = Adjustment::ALL.map(|a| var5(&t, a));
    let rs = t.anchor_summary();
    let n_rs = estimate_rs(&rs).unwrap().n_hat;
    let v_rs = [var_rs(&rs, false).unwrap(), var_rs(&rs, true).unwrap()];
    let chap = estimate_chapman(&t).n_hat;
    let v_chap = var_chapman(&t);
    let w5 = v5.clone().map(|v| wald(n5, v.se(), level, bounds).unwrap());
    let w_rs = v_rs
        .clone()
        .map(|v| wald(n_rs, v.se(), level, Some(rs_bounds(&rs))).unwrap());
    let took = start.elapsed();

    c.near("n5", n5, 161.5, 0.05);
    for (v, want) in v5.iter().zip([22.3, 19.1, 20.3]) {
        c.near(&format!("n5 se {}", v.variant.code()), v.se(), want, 0.05);
    }
    c.near("rs", n_rs, 159.5, 0.05);
    for (v, want) in v_rs.iter().zip([26.3, 23.7]) {
        c.near(&format!("rs se {}", v.variant.code()), v.se(), want, 0.05);
    }
    c.near("chapman", chap, 159.0, 0.05);
    c.near("chapman se", v_chap.se(), 29.5, 0.05);
    let wanted = [
        ("wald unadjusted", [117.8, 205.3]),
        ("wald fpc1", [124.1, 198.9]),
        ("wald fpc2", [121.7, 201.3]),
        ("wald rs_unadjusted", [107.9, 211.1]),
        ("wald cochran_fpc", [113.1, 206.0]),
    ];
    let got: Vec<&Interval> = w5.iter().chain(w_rs.iter()).collect();
    for ((name, [lo, hi]), iv) in wanted.iter().zip(got) {
        c.near(&format!("{name} lower"), iv.lower, *lo, 0.05);
        c.near(&format!("{name} upper"), iv.upper, *hi, 0.05);
    }
    c.faster("runtime", took, 1.0);
    c
}

fn credible_output(threads: usize) -> (String, Duration) {
    in_pool(threads, || {
        let start = Instant::now();
        let intervals: Vec<Interval> = Adjustment::ALL
            .iter()
            .map(|&a| credible_5cell(&crisp(), 100_000, a, 0.95, SEED).unwrap().0)
            .collect();
        (serde_json::to_string(&intervals).unwrap(), start.elapsed())
    })
}

static CREDIBLE: OnceLock<(String, Duration)> = OnceLock::new();

fn credible() -> Criterion {
    let mut c = Criterion::new("CRISP credible intervals, M = 100000");
    let (json, took) = CREDIBLE.get_or_init(|| credible_output(8));
    let intervals: Vec<Interval> = serde_json::from_str(json).unwrap();
    let wanted = [
        ("unadjusted", [124.1, 212.5]),
        ("fpc1", [130.1, 203.5]),
        ("fpc2", [126.7, 206.0]),
    ];
    for ((name, [lo, hi]), iv) in wanted.iter().zip(&intervals) {
        c.near(&format!("credible {name} lower"), iv.lower, *lo, 1.0);
        c.near(&format!("credible {name} upper"), iv.upper, *hi, 1.0);
    }
    c.faster("runtime", *took, 10.0);
    c
}

fn logit() -> Criterion {
    let mut c = Criterion::new("CRISP transformed-logit interval");
    let (iv, degenerate) = logit_chapman(&crisp(), 0.95).unwrap();
    c.near("logit lower", iv.lower, 119.7, 0.5);
    c.holds(
        "logit upper",
        iv.upper.is_finite() && iv.upper > estimate_chapman(&crisp()).n_hat && !degenerate,
        format!("{:.4}; gap to 263.0 is {:+.4}", iv.upper, iv.upper - 263.0),
    );
    let reports = run_analysis(
        &AnalysisInput::Counts(crisp()),
        &AnalysisConfig {
            methods: vec![Method::Chapman],
            ..AnalysisConfig::default()
        },
    )
    .unwrap();
    let note = reports[0].diagnostics.iter().find(|d| d.starts_with("logit"));
    c.holds(
        "diagnostic",
        note.is_some(),
        note.cloned().unwrap_or_else(|| "missing".into()),
    );
    c
}

const SCENARIOS: [&str; 4] = [
    "t6/N250/psi0.25",
    "t5/N500/psi0.5",
    "b3/psymp0.25/p1symp0.5",
    "b1/N13/psi0.1",
];

fn scenario(name: &str) -> SimScenario {
    preset(name).unwrap().replications(2000).draws(2000).seed(SEED)
}

fn simulate_all(threads: usize) -> Vec<(SimSummary, String)> {
    in_pool(threads, || {
        SCENARIOS
            .iter()
            .map(|name| {
                let s = run_scenario(&scenario(name)).unwrap();
                let json = render_simulation(&s, OutputFormat::Json).unwrap();
                (s, json)
            })
            .collect()
    })
}

static SIMULATIONS: OnceLock<Vec<(SimSummary, String)>> = OnceLock::new();

fn calibration() -> Criterion {
    let mut c = Criterion::new("simulation calibration, 2000 replications, M = 2000");
    let sims = SIMULATIONS.get_or_init(|| simulate_all(8));

    let t6 = &sims[0].0.n5;
    let sd = t6.sd.unwrap();
    c.within("t6 mean n5", t6.mean, 246.0, 254.0);
    c.within(
        "t6 |avg fpc1 se - sd| / sd",
        (t6.avg_se["fpc1"] - sd).abs() / sd,
        0.0,
        0.10,
    );
    c.within("t6 wald fpc1 coverage", t6.coverage["wald/fpc1"], 0.93, 0.965);
    c.within("t6 wald unadjusted coverage", t6.coverage["wald/unadjusted"], 0.97, 1.0);
    let w = |k: &str| t6.avg_width[k];
    c.holds(
        "t6 widths fpc1 < fpc2 < unadjusted",
        w("wald/fpc1") < w("wald/fpc2") && w("wald/fpc2") < w("wald/unadjusted"),
        format!(
            "{:.2} < {:.2} < {:.2}",
            w("wald/fpc1"),
            w("wald/fpc2"),
            w("wald/unadjusted")
        ),
    );

    let t5 = &sims[1].0.n5;
    c.within("t5 sd n5", t5.sd.unwrap(), 15.6, 19.0);
    c.within("t5 wald fpc1 coverage", t5.coverage["wald/fpc1"], 0.93, 0.965);
    c.within("t5 wald unadjusted coverage", t5.coverage["wald/unadjusted"], 0.99, 1.0);

    let b3 = &sims[2].0.n5;
    let sd = b3.sd.unwrap();
    c.within("b3 mean n5", b3.mean, 152.0, 160.0);
    c.within(
        "b3 |avg fpc1 se - sd| / sd",
        (b3.avg_se["fpc1"] - sd).abs() / sd,
        0.0,
        0.10,
    );

    let b1 = &sims[3].0;
    c.within("b1 mean chapman", b1.chapman.mean, f64::NEG_INFINITY, 10.5);
    c.within("b1 mean n5", b1.n5.mean, 11.5, 14.5);
    c
}

fn random_table(rng: &mut RngStream, allow_zero: bool) -> CellCounts5 {
    let mut draw = |hi: f64| {
        let lo = if allow_zero { 0.0 } else { 1.0 };
        (lo + rng.uniform() * (hi - lo + 1.0)).floor() as u64
    };
    let (n15, n2, n4, n6) = (draw(3000.0), draw(400.0), draw(400.0), draw(400.0));
    let n37 = draw(30_000.0).max(1);
    CellCounts5::from_cells(n15, n2, n4, n6, n37).unwrap()
}

fn ulps(a: f64, b: f64) -> u64 {
    if a == b {
        return 0;
    }
    (a.to_bits() as i64 - b.to_bits() as i64).unsigned_abs()
}

fn oracle_pi(p: &[f64; 5]) -> f64 {
    let [p15, p2, p4, p6, p37] = *p;
    p2 + p4 + p6 * (p15 + p6 + p37) / (p15 + p6)
}

/// Delta-method variance of `N_tot * pi(p)` with a central-difference gradient.
fn oracle_variance(t: &CellCounts5) -> f64 {
    let n = t.n_tot() as f64;
    let p = t.cells().map(|k| k as f64 / n);
    let mut grad = [0.0; 5];
    for i in 0..5 {
        let h = 1e-5 * p[i];
        let (mut up, mut down) = (p, p);
        up[i] += h;
        down[i] -= h;
        grad[i] = (oracle_pi(&up) - oracle_pi(&down)) / (2.0 * h);
    }
    let mut q = 0.0;
    for i in 0..5 {
        for j in 0..5 {
            let cov = if i == j { p[i] - p[i] * p[i] } else { -p[i] * p[j] };
            q += grad[i] * grad[j] * cov;
        }
    }
    n * q
}

fn oracles() -> Criterion {
    let mut c = Criterion::new("exact and oracle checks");
    let start = Instant::now();

    let mut worst = (0.0f64, 0.0f64);
    let mut configs = 0;
    let mut exact = vec![
        SimScenario::new(10, 5, 4),
        SimScenario::new(10, 3, 5),
        SimScenario::new(10, 7, 6),
        SimScenario::new(9, 6, 2),
        SimScenario::new(8, 4, 3),
        SimScenario::new(6, 6, 3),
    ];
    let mut high = SimScenario::new(10, 6, 7);
    high.p_s1_symp = 0.9;
    high.p_s1_asymp = 0.6;
    exact.push(high);
    let mut none = SimScenario::new(10, 4, 5);
    none.p_s1_symp = 0.0;
    none.p_s1_asymp = 0.0;
    exact.push(none);
    for s in &exact {
        let r = exact_conditional_check(s).unwrap();
        worst.0 = worst.0.max(r.max_pmf_discrepancy);
        worst.1 = worst.1.max(r.max_variance_bias);
        configs += r.configurations;
    }
    c.within("hypergeometric pmf discrepancy", worst.0, 0.0, 1e-12);
    c.within("FPC variance estimate bias", worst.1, 0.0, 1e-12);
    c.holds("enumerated configurations", configs > 0, configs.to_string());

    let mut rng = RngStream::new(SEED, 5);
    let mut max_rel = 0.0f64;
    for _ in 0..100 {
        let t = random_table(&mut rng, false);
        let got = var5_unadjusted(&t).var_n;
        max_rel = max_rel.max((got - oracle_variance(&t)).abs() / got);
    }
    c.within(
        "finite-difference delta method, 100 tables, max rel. error",
        max_rel,
        0.0,
        1e-6,
    );

    let mut max_ulps = 0;
    let mut max_excess = f64::NEG_INFINITY;
    for _ in 0..10_000 {
        let t = random_table(&mut rng, true);
        let direct = estimate_5cell(&t).n_hat;
        max_ulps = max_ulps
            .max(ulps(direct, estimate_5cell_weighted(&t)))
            .max(ulps(direct, estimate_5cell_recorded(&t)));
        max_excess = max_excess.max(var5(&t, Adjustment::Fpc1).var_n - var5(&t, Adjustment::Fpc2).var_n);
    }
    c.within(
        "three evaluation paths, 10000 tables, max ulps",
        max_ulps as f64,
        0.0,
        4.0,
    );
    c.within(
        "var fpc1 - var fpc2, 10000 tables, max",
        max_excess,
        f64::NEG_INFINITY,
        0.0,
    );

    let mut violations = Vec::new();
    for i in 0..500 {
        let t = random_table(&mut rng, i % 2 == 0);
        let (lo, hi) = t.case_bounds();
        let inside = |iv: &Interval| lo <= iv.lower && iv.lower <= iv.upper && iv.upper <= hi;
        let n5 = estimate_5cell(&t).n_hat;
        for adj in Adjustment::ALL {
            let raw = wald(n5, var5(&t, adj).se(), 0.95, None).unwrap();
            if !(raw.lower <= n5 && n5 <= raw.upper) {
                violations.push(format!("wald brackets point {t:?}"));
            }
            if !inside(&raw.clipped(Some((lo, hi)))) {
                violations.push(format!("wald {t:?}"));
            }
            if !inside(&credible_5cell(&t, 200, adj, 0.95, SEED + i).unwrap().0) {
                violations.push(format!("credible {t:?}"));
            }
        }
        if !inside(&logit_chapman(&t, 0.95).unwrap().0.clipped(Some((lo, hi)))) {
            violations.push(format!("logit {t:?}"));
        }
        let rs = t.anchor_summary();
        if rs.n_rs >= 2 {
            let (rlo, rhi) = rs_bounds(&rs);
            let iv = credible_rs(&rs, 200, 0.95, SEED + i, true).unwrap();
            if !(rlo <= iv.lower && iv.lower <= iv.upper && iv.upper <= rhi) {
                violations.push(format!("rs credible {t:?}"));
            }
        }
    }
    c.holds(
        "interval truncation invariants, 500 tables",
        violations.is_empty(),
        violations.first().cloned().unwrap_or_else(|| "no violations".into()),
    );
    c.faster("runtime", start.elapsed(), 30.0);
    c
}

fn determinism() -> Criterion {
    let mut c = Criterion::new("bit-identical outputs across runs and thread counts");
    let (first, _) = CREDIBLE.get_or_init(|| credible_output(8));
    let first_sims = SIMULATIONS.get_or_init(|| simulate_all(8));
    let rerun = credible_output(8).0;
    c.holds(
        "credible, second run",
        &rerun == first,
        format!("{} bytes", first.len()),
    );
    for threads in THREADS {
        let other = credible_output(threads).0;
        c.holds(
            &format!("credible, {threads} thread(s)"),
            &other == first,
            format!("{} bytes", other.len()),
        );
    }
    let rerun = simulate_all(8);
    for (name, (a, b)) in SCENARIOS.iter().zip(first_sims.iter().zip(&rerun)) {
        c.holds(
            &format!("{name}, second run"),
            a.1 == b.1,
            format!("{} bytes", a.1.len()),
        );
    }
    for threads in THREADS {
        let other = simulate_all(threads);
        for (name, (a, b)) in SCENARIOS.iter().zip(first_sims.iter().zip(&other)) {
            c.holds(
                &format!("{name}, {threads} thread(s)"),
                a.1 == b.1,
                format!("{} bytes", b.1.len()),
            );
        }
    }
    c
}

fn main() -> ExitCode {
    let criteria: [fn() -> Criterion; 6] = [golden, credible, logit, calibration, oracles, determinism];
    let mut failed = 0;
    for (i, run) in criteria.iter().enumerate() {
        let start = Instant::now();
        let criterion = run();
        if !criterion.report(i + 1) {
            failed += 1;
        }
        println!("    ({:.1} s)", start.elapsed().as_secs_f64());
    }
    println!("acceptance: {} of 6 criteria passed", 6 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
