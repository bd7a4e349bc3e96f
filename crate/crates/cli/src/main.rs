use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anchorcrc::io::{self, PopulationSizes};
use anchorcrc::model::{tabulate, tabulate_by_stratum};
use anchorcrc::report::{render_reports, render_simulation};
use anchorcrc::simulation::{self, SimScenario};
use anchorcrc::{run_analysis, Adjustment, AnalysisConfig, AnalysisInput, CellCounts5, Method, OutputFormat};
use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Case-count estimation with an anchor stream.
#[derive(Parser)]
#[command(name = "anchorcrc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the number of cases from a counts document or a records file.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo scenario and summarize estimator performance.
    Simulate(SimulateArgs),
    /// Build the five-cell table(s) from a records file.
    Tabulate(TabulateArgs),
    /// List the named simulation scenarios.
    Presets(PresetsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
    Markdown,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => OutputFormat::Json,
            Format::Csv => OutputFormat::Csv,
            Format::Markdown => OutputFormat::Markdown,
        }
    }
}

#[derive(Args)]
struct RecordsArgs {
    /// Population size for a records file: an integer, or `label=N,...` per stratum.
    #[arg(long)]
    population_size: Option<String>,
    /// Column of the records file holding the stratum label.
    #[arg(long)]
    stratify_by: Option<String>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Counts document (TOML or JSON), or a records file when --population-size is given.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long, env = "ANCHORCRC_SEED", default_value_t = 1)]
    seed: u64,
    /// Posterior draws per credible interval.
    #[arg(long, default_value_t = 10_000)]
    draws: usize,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Variance adjustments for the five-cell estimator (none, fpc1, fpc2); repeatable.
    #[arg(long, value_delimiter = ',')]
    adjustment: Vec<String>,
    /// Estimators to report (n5, rs, chapman, four_cell).
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    /// Anchor sampling probability for the four-cell estimator.
    #[arg(long)]
    psi: Option<f64>,
    #[command(flatten)]
    records: RecordsArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// Named scenario (see `presets`).
    #[arg(long, conflicts_with = "scenario")]
    preset: Option<String>,
    /// Scenario file (TOML or JSON) with n_tot, n_true, anchor_size and optional settings.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    replications: Option<u64>,
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long, env = "ANCHORCRC_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    level: Option<f64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value = "markdown")]
    format: Format,
}

#[derive(Args)]
struct TabulateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[command(flatten)]
    records: RecordsArgs,
}

#[derive(Args)]
struct PresetsArgs {
    #[arg(long, value_enum, default_value = "markdown")]
    format: Format,
}

enum Failure {
    Input(anyhow::Error),
    Numeric(String),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Input(e.into())
    }
}

fn load_input(path: &Path, records: &RecordsArgs) -> Result<(AnalysisInput, Vec<String>), Failure> {
    let Some(spec) = &records.population_size else {
        if records.stratify_by.is_some() {
            return Err(anyhow::anyhow!("--stratify-by needs a records file and --population-size").into());
        }
        let counts = io::read_counts(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok((AnalysisInput::Counts(counts), Vec::new()));
    };
    let parsed = io::read_records(path, records.stratify_by.as_deref())
        .with_context(|| format!("reading {}", path.display()))?;
    let stratified = records.stratify_by.is_some();
    let input = match io::parse_population_sizes(spec)? {
        PopulationSizes::Total(n) if !stratified => AnalysisInput::Counts(tabulate(&parsed.records, n)?),
        PopulationSizes::Strata(sizes) if stratified => {
            AnalysisInput::Strata(tabulate_by_stratum(&parsed.records, &sizes)?)
        }
        PopulationSizes::Total(_) => {
            return Err(anyhow::anyhow!("--stratify-by needs per-stratum sizes: --population-size a=N,b=M").into())
        }
        PopulationSizes::Strata(_) => {
            return Err(anyhow::anyhow!("per-stratum population sizes need --stratify-by").into())
        }
    };
    Ok((input, parsed.diagnostics))
}

fn estimate(args: EstimateArgs) -> Result<String, Failure> {
    let (input, notes) = load_input(&args.input, &args.records)?;
    let adjustments = if args.adjustment.is_empty() || args.adjustment.iter().any(|a| a == "all") {
        Adjustment::ALL.to_vec()
    } else {
        args.adjustment.iter().map(|a| a.parse()).collect::<Result<_, _>>()?
    };
    let methods = if args.methods.is_empty() {
        let mut m = Method::DEFAULT.to_vec();
        if args.psi.is_some() {
            m.push(Method::FourCell);
        }
        m
    } else {
        args.methods.iter().map(|m| m.parse()).collect::<Result<_, _>>()?
    };
    let cfg = AnalysisConfig {
        methods,
        level: args.level,
        draws: args.draws,
        seed: args.seed,
        adjustments,
        psi: args.psi,
        format: args.format.into(),
    };
    let mut reports = run_analysis(&input, &cfg)?;
    if let Some(bad) = reports.iter().find(|r| !r.is_finite()) {
        return Err(Failure::Numeric(format!(
            "non-finite result for method `{}`",
            bad.method
        )));
    }
    if let Some(first) = reports.first_mut() {
        first.diagnostics.extend(notes);
    }
    Ok(render_reports(&reports, cfg.format)?)
}

fn simulate(args: SimulateArgs) -> Result<String, Failure> {
    let mut s: SimScenario = match (&args.preset, &args.scenario) {
        (Some(name), _) => simulation::preset(name)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            if text.trim_start().starts_with('{') {
                serde_json::from_str(&text)?
            } else {
                toml::from_str(&text)?
            }
        }
        (None, None) => return Err(anyhow::anyhow!("give --preset or --scenario").into()),
    };
    if let Some(r) = args.replications {
        s.replications = r;
    }
    if let Some(m) = args.draws {
        s.draws = m;
    }
    if let Some(seed) = args.seed {
        s.master_seed = seed;
    }
    if let Some(level) = args.level {
        s.level = level;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads.unwrap_or(0))
        .build()?;
    let summary = pool.install(|| anchorcrc::run_scenario(&s))?;
    if !summary.n5.mean.is_finite() || !summary.rs.mean.is_finite() || !summary.chapman.mean.is_finite() {
        return Err(Failure::Numeric("non-finite simulation summary".into()));
    }
    Ok(render_simulation(&summary, args.format.into())?)
}

fn counts_row(label: &str, c: &CellCounts5) -> String {
    format!(
        "| {label} | {} | {} | {} | {} | {} | {} |\n",
        c.n15(),
        c.n2(),
        c.n4(),
        c.n6(),
        c.n37(),
        c.n_tot()
    )
}

fn tabulate_cmd(args: TabulateArgs) -> Result<String, Failure> {
    if args.records.population_size.is_none() {
        return Err(anyhow::anyhow!("tabulate needs --population-size").into());
    }
    let (input, notes) = load_input(&args.input, &args.records)?;
    for n in &notes {
        eprintln!("note: {n}");
    }
    let tables: BTreeMap<String, CellCounts5> = match input {
        AnalysisInput::Counts(c) => BTreeMap::from([(String::new(), c)]),
        AnalysisInput::Strata(m) => m,
    };
    let single = args.records.stratify_by.is_none();
    Ok(match args.format {
        Format::Json if single => serde_json::to_string_pretty(&tables[""])? + "\n",
        Format::Json => serde_json::to_string_pretty(&tables)? + "\n",
        Format::Csv => {
            let mut out = String::from("stratum,n15,n2,n4,n6,n37,n_tot\n");
            for (k, c) in &tables {
                out += &format!(
                    "{k},{},{},{},{},{},{}\n",
                    c.n15(),
                    c.n2(),
                    c.n4(),
                    c.n6(),
                    c.n37(),
                    c.n_tot()
                );
            }
            out
        }
        Format::Markdown => {
            let mut out =
                String::from("| Stratum | n15 | n2 | n4 | n6 | n37 | n_tot |\n|---|---|---|---|---|---|---|\n");
            for (k, c) in &tables {
                out += &counts_row(if k.is_empty() { "all" } else { k }, c);
            }
            out
        }
    })
}

fn presets_cmd(args: PresetsArgs) -> Result<String, Failure> {
    let all = simulation::presets();
    Ok(match args.format {
        Format::Json => {
            let map: BTreeMap<_, _> = all.into_iter().collect();
            serde_json::to_string_pretty(&map)? + "\n"
        }
        Format::Csv => {
            let mut out = String::from("name,n_tot,n_true,anchor_size,p_symp_case,p_s1_symp,p_s1_asymp\n");
            for (name, s) in &all {
                out += &format!(
                    "{name},{},{},{},{},{},{}\n",
                    s.n_tot, s.n_true, s.anchor_size, s.p_symp_case, s.p_s1_symp, s.p_s1_asymp
                );
            }
            out
        }
        Format::Markdown => {
            let mut out = String::from(
                "| Preset | N_tot | N | Anchor | p(symp, case) | p(S1, symp) |\n|---|---|---|---|---|---|\n",
            );
            for (name, s) in &all {
                out += &format!(
                    "| {name} | {} | {} | {} | {} | {} |\n",
                    s.n_tot, s.n_true, s.anchor_size, s.p_symp_case, s.p_s1_symp
                );
            }
            out
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Simulate(a) => simulate(a),
        Command::Tabulate(a) => tabulate_cmd(a),
        Command::Presets(a) => presets_cmd(a),
    };
    match result {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(3)
        }
    }
}
