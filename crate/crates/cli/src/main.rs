//! `bivirus`: validate models, enumerate and count equilibria, simulate
//! trajectories and sample basins from the command line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use bivirus_core::counting::{self, CountReport, Relation};
use bivirus_core::dynamics::{self, IntegratorOptions, Terminal, Trajectory};
use bivirus_core::equilibria::{self, EquilibriumAtlas, SearchBudget};
use bivirus_core::model::{self, BivirusModel, State, ValidationReport};
use bivirus_core::{fixtures, io, Error};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

const EXIT_ASSUMPTION: u8 = 2;
const EXIT_COUNTING: u8 = 3;
const EXIT_DEGENERATE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "bivirus",
    version,
    about = "Equilibria of networked bivirus SIS models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the standing assumptions on a model.
    Validate(Common),
    /// Integrate trajectories and write them as CSV.
    Simulate(SimulateArgs),
    /// Enumerate and classify every equilibrium; writes atlas.json.
    Equilibria(EnumerateArgs),
    /// Poincaré–Hopf and Morse checks; writes count.json.
    Count(CountArgs),
    /// Tally which equilibrium random initial conditions converge to.
    Basins(BasinArgs),
    /// Run every stage and write all artifacts plus index.json.
    Report(ReportArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// Built-in model: example1, example2, scalar1, mixed-n2.
    #[arg(long, conflicts_with = "model")]
    fixture: Option<String>,
    /// Model JSON file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, env = "BIVIRUS_OUT", default_value = ".")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Worker threads for the parallel stages (default: available parallelism).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,
}

#[derive(Args, Clone)]
struct SearchArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_parser = positive_usize)]
    random_seeds: Option<usize>,
    #[arg(long, value_parser = positive_usize)]
    grid_levels: Option<usize>,
    #[arg(long, value_parser = positive_usize)]
    homotopy_steps: Option<usize>,
    /// Homotopy blocks, e.g. "0,1;2,3".
    #[arg(long, value_parser = parse_blocks)]
    blocks: Option<Blocks>,
}

#[derive(Args, Clone)]
struct IntegratorArgs {
    #[arg(long, default_value_t = dynamics::DEFAULT_T_MAX, value_parser = positive_f64)]
    t_max: f64,
    #[arg(long, default_value_t = dynamics::DEFAULT_RTOL, value_parser = positive_f64)]
    rtol: f64,
    #[arg(long, default_value_t = dynamics::DEFAULT_ATOL, value_parser = positive_f64)]
    atol: f64,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    integrator: IntegratorArgs,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Number of random interior initial conditions.
    #[arg(long, default_value_t = 4, value_parser = positive_usize)]
    trajectories: usize,
    /// Initial state file `{"x1": [..], "x2": [..]}`; replaces the random ones.
    #[arg(long)]
    initial: Option<PathBuf>,
}

#[derive(Args)]
struct EnumerateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    search: SearchArgs,
}

#[derive(Args)]
struct CountArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    search: SearchArgs,
    /// Atlas written by `equilibria`; replaces --fixture/--model.
    #[arg(long, conflicts_with_all = ["fixture", "model"])]
    atlas: Option<PathBuf>,
}

#[derive(Args)]
struct BasinArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    search: SearchArgs,
    #[command(flatten)]
    integrator: IntegratorArgs,
    #[arg(long, default_value_t = 200, value_parser = positive_usize)]
    samples: usize,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    search: SearchArgs,
    #[command(flatten)]
    integrator: IntegratorArgs,
    #[arg(long, default_value_t = 200, value_parser = positive_usize)]
    samples: usize,
    #[arg(long, default_value_t = 4, value_parser = positive_usize)]
    trajectories: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
    Csv,
}

#[derive(Clone)]
struct Blocks(Vec<Vec<usize>>);

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(format!("expected a positive integer, got {s:?}")),
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got {s:?}")),
    }
}

fn parse_blocks(s: &str) -> Result<Blocks, String> {
    let mut out = Vec::new();
    for block in s.split(';') {
        let nodes = block
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| format!("bad node index {t:?} in {s:?}"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push(nodes);
    }
    Ok(Blocks(out))
}

/// Error carrying an explicit exit status.
#[derive(Debug)]
struct Exit(u8, String);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Exit {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(Exit(code, _)) = err.downcast_ref::<Exit>() {
        return *code;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::DegenerateEquilibrium { .. } | Error::PerronDegenerate { .. }) => {
            EXIT_DEGENERATE
        }
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn run(command: Command) -> anyhow::Result<u8> {
    let common = match &command {
        Command::Validate(c) => c,
        Command::Simulate(a) => &a.common,
        Command::Equilibria(a) => &a.common,
        Command::Count(a) => &a.common,
        Command::Basins(a) => &a.common,
        Command::Report(a) => &a.common,
    };
    if let Some(w) = common.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w as usize)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match command {
        Command::Validate(c) => cmd_validate(&c),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Equilibria(a) => cmd_equilibria(&a),
        Command::Count(a) => cmd_count(&a),
        Command::Basins(a) => cmd_basins(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

fn load_model(c: &Common) -> anyhow::Result<BivirusModel> {
    match (&c.fixture, &c.model) {
        (Some(name), _) => fixtures::fixture(name).ok_or_else(|| {
            anyhow!(
                "unknown fixture {name:?}; available fixtures: {}",
                fixtures::FIXTURE_NAMES.join(", ")
            )
        }),
        (None, Some(path)) => BivirusModel::load(path)
            .with_context(|| format!("reading model file {}", path.display())),
        (None, None) => bail!("one of --fixture or --model is required"),
    }
}

fn out_dir(c: &Common) -> anyhow::Result<&Path> {
    fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
    Ok(&c.out)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn budget(s: &SearchArgs) -> SearchBudget {
    let mut b = SearchBudget {
        rng_seed: s.seed,
        ..SearchBudget::default()
    };
    if let Some(v) = s.random_seeds {
        b.random_seeds = v;
        b.saturation_window = b.saturation_window.min(v);
    }
    if let Some(v) = s.grid_levels {
        b.grid_levels = v;
    }
    if let Some(v) = s.homotopy_steps {
        b.homotopy_steps = v;
    }
    if let Some(Blocks(blocks)) = &s.blocks {
        b.blocks = Some(blocks.clone());
    }
    b
}

fn integrator(a: &IntegratorArgs, record: bool) -> IntegratorOptions {
    IntegratorOptions {
        rtol: a.rtol,
        atol: a.atol,
        record,
        ..IntegratorOptions::default()
    }
}

/// Fails with exit 2 when an assumption does not hold.
fn require_assumptions(model: &BivirusModel) -> anyhow::Result<ValidationReport> {
    let report = model::validate(model);
    if report.all_pass() {
        Ok(report)
    } else {
        Err(Exit(
            EXIT_ASSUMPTION,
            format!(
                "model fails the standing assumptions:\n  {}",
                report.failures().join("\n  ")
            ),
        )
        .into())
    }
}

fn f4(x: f64) -> String {
    format!("{x:.4}")
}

fn join_f4(v: impl IntoIterator<Item = f64>, sep: &str) -> String {
    v.into_iter().map(f4).collect::<Vec<_>>().join(sep)
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "✓"
    } else {
        "✗"
    }
}

// ---------------------------------------------------------------- validate

#[derive(Serialize)]
struct ValidateOutput<'a> {
    passed: bool,
    assumption1: bool,
    assumption2: bool,
    report: &'a ValidationReport,
    failures: Vec<String>,
}

fn validate_table(report: &ValidationReport) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{:<8} {:>8} {:>9} {:>11} {:>10}",
        "virus", "D > 0", "B >= 0", "irreducible", "R"
    )
    .unwrap();
    for k in 0..2 {
        let r = report.reproduction[k].map_or("n/a".to_string(), f4);
        writeln!(
            s,
            "{:<8} {:>8} {:>9} {:>11} {:>10}",
            k + 1,
            mark(report.healing_positive[k]),
            mark(report.infection_nonnegative[k]),
            mark(report.infection_irreducible[k]),
            r
        )
        .unwrap();
    }
    for f in report.failures() {
        writeln!(s, "FAIL: {f}").unwrap();
    }
    if report.all_pass() {
        writeln!(s, "all assumptions hold").unwrap();
    }
    s
}

fn cmd_validate(c: &Common) -> anyhow::Result<u8> {
    let model = load_model(c)?;
    let report = model::validate(&model);
    match c.format {
        Format::Json => {
            let out = ValidateOutput {
                passed: report.all_pass(),
                assumption1: report.assumption1_holds(),
                assumption2: report.assumption2_holds(),
                report: &report,
                failures: report.failures(),
            };
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Format::Table | Format::Csv => print!("{}", validate_table(&report)),
    }
    Ok(if report.all_pass() {
        0
    } else {
        EXIT_ASSUMPTION
    })
}

// ---------------------------------------------------------------- simulate

fn read_initial(path: &Path, n: usize) -> anyhow::Result<State> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let s: State =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if s.n() != n {
        bail!("initial state has {} nodes, model has {n}", s.n());
    }
    Ok(s)
}

#[derive(Serialize)]
struct TrajectorySummary {
    file: String,
    initial: State,
    final_state: State,
    final_time: f64,
    /// Label of the equilibrium reached, if any.
    converged_to: Option<String>,
    steps_accepted: usize,
    steps_rejected: usize,
}

/// Integrates each initial condition toward the analytic equilibria and
/// writes `trajectory_<i>.csv`.
fn simulate_into(
    model: &BivirusModel,
    initial: &[State],
    a: &IntegratorArgs,
    dir: &Path,
) -> anyhow::Result<Vec<TrajectorySummary>> {
    let (b1, b2) = equilibria::boundary_equilibria(model)?;
    let targets = [State::healthy(model.n()), b1.state, b2.state];
    let labels = ["healthy", "boundary-1", "boundary-2"];
    let opts = integrator(a, true);
    let mut out = Vec::new();
    for (i, s0) in initial.iter().enumerate() {
        let traj: Trajectory = dynamics::integrate(model, s0, a.t_max, &targets, &opts)?;
        let name = format!("trajectory_{i:03}.csv");
        let path = dir.join(&name);
        let file = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        traj.write_csv(BufWriter::new(file))?;
        out.push(TrajectorySummary {
            file: name,
            initial: s0.clone(),
            final_state: traj.final_state().clone(),
            final_time: traj.final_time(),
            converged_to: match traj.terminal {
                Terminal::ConvergedTo(k) => Some(labels[k].to_string()),
                Terminal::MaxTimeReached => None,
            },
            steps_accepted: traj.steps_accepted,
            steps_rejected: traj.steps_rejected,
        });
    }
    Ok(out)
}

fn simulate_table(runs: &[TrajectorySummary]) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{:<22} {:>10} {:<12} final x1 | x2",
        "file", "t_end", "reached"
    )
    .unwrap();
    for r in runs {
        writeln!(
            s,
            "{:<22} {:>10} {:<12} {} | {}",
            r.file,
            f4(r.final_time),
            r.converged_to.as_deref().unwrap_or("-"),
            join_f4(r.final_state.x1.iter().copied(), " "),
            join_f4(r.final_state.x2.iter().copied(), " "),
        )
        .unwrap();
    }
    s
}

fn simulate_csv(runs: &[TrajectorySummary]) -> String {
    let mut s = String::from("file,t_end,reached\n");
    for r in runs {
        writeln!(
            s,
            "{},{},{}",
            r.file,
            r.final_time,
            r.converged_to.as_deref().unwrap_or("")
        )
        .unwrap();
    }
    s
}

fn initial_states(
    model: &BivirusModel,
    seed: u64,
    count: usize,
    file: Option<&Path>,
) -> anyhow::Result<Vec<State>> {
    match file {
        Some(p) => Ok(vec![read_initial(p, model.n())?]),
        None => Ok((0..count as u64)
            .map(|i| dynamics::basin_initial_state(seed, i, model.n()))
            .collect()),
    }
}

fn cmd_simulate(a: &SimulateArgs) -> anyhow::Result<u8> {
    let model = load_model(&a.common)?;
    require_assumptions(&model)?;
    let dir = out_dir(&a.common)?;
    let initial = initial_states(&model, a.seed, a.trajectories, a.initial.as_deref())?;
    let runs = simulate_into(&model, &initial, &a.integrator, dir)?;
    match a.common.format {
        Format::Table => print!("{}", simulate_table(&runs)),
        Format::Json => println!("{}", serde_json::to_string_pretty(&runs)?),
        Format::Csv => print!("{}", simulate_csv(&runs)),
    }
    Ok(0)
}

// ---------------------------------------------------------------- equilibria

fn enumerate(model: &BivirusModel, s: &SearchArgs) -> anyhow::Result<EquilibriumAtlas> {
    require_assumptions(model)?;
    Ok(equilibria::enumerate_all(model, &budget(s))?)
}

fn atlas_table(atlas: &EquilibriumAtlas) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{:>3} {:<12} {:>4} {:>5} {:>10}  x1 | x2",
        "#", "class", "n_k", "index", "margin"
    )
    .unwrap();
    for (i, e) in atlas.equilibria.iter().enumerate() {
        writeln!(
            s,
            "{:>3} {:<12} {:>4} {:>5} {:>10.3e}  {} | {}",
            i,
            e.class.to_string(),
            e.n_k,
            e.index,
            e.hyperbolic_margin,
            join_f4(e.state.x1.iter().copied(), " "),
            join_f4(e.state.x2.iter().copied(), " "),
        )
        .unwrap();
    }
    writeln!(
        s,
        "{} equilibria ({} coexistence); saturated: {}; complete: {}",
        atlas.equilibria.len(),
        atlas.coexistence_count(),
        atlas.search_stats.saturated,
        atlas.complete
    )
    .unwrap();
    for d in &atlas.diagnostics {
        writeln!(s, "note: {d}").unwrap();
    }
    s
}

fn atlas_csv(atlas: &EquilibriumAtlas) -> String {
    let n = atlas.n();
    let mut s = String::from("index,class,n_k,poincare_index,hyperbolic_margin,residual");
    for k in 1..=2 {
        for i in 1..=n {
            write!(s, ",x{k}_{i}").unwrap();
        }
    }
    s.push('\n');
    for (i, e) in atlas.equilibria.iter().enumerate() {
        write!(
            s,
            "{i},{},{},{},{},{}",
            e.class, e.n_k, e.index, e.hyperbolic_margin, e.residual
        )
        .unwrap();
        for v in e.state.x1.iter().chain(e.state.x2.iter()) {
            write!(s, ",{v}").unwrap();
        }
        s.push('\n');
    }
    s
}

fn cmd_equilibria(a: &EnumerateArgs) -> anyhow::Result<u8> {
    let model = load_model(&a.common)?;
    let atlas = enumerate(&model, &a.search)?;
    let dir = out_dir(&a.common)?;
    io::save_atlas(&atlas, dir.join("atlas.json"))?;
    match a.common.format {
        Format::Table => print!("{}", atlas_table(&atlas)),
        Format::Json => println!("{}", io::atlas_to_json(&atlas)?),
        Format::Csv => print!("{}", atlas_csv(&atlas)),
    }
    Ok(0)
}

// ---------------------------------------------------------------- count

fn count_table(r: &CountReport) -> String {
    let mut s = String::new();
    let c = &r.morse.c;
    writeln!(
        s,
        "Morse vector c = [{}]",
        c.iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    )
    .unwrap();
    for (i, v) in c.iter().enumerate().filter(|(_, v)| **v > 0) {
        writeln!(s, "  c{i} = {v}").unwrap();
    }
    writeln!(s, "{:>6} {:>6} {:>3} {:>6}  ok", "lambda", "lhs", "", "rhs").unwrap();
    for v in &r.morse_verdicts.verdicts {
        let rel = match v.relation {
            Relation::GreaterEq => ">=",
            Relation::Equal => "=",
        };
        writeln!(
            s,
            "{:>6} {:>6} {:>3} {:>6}  {}",
            v.index,
            v.lhs,
            rel,
            v.rhs,
            mark(v.holds)
        )
        .unwrap();
    }
    writeln!(s, "Poincaré–Hopf sum = {}  {}", r.ph_sum, mark(r.ph_holds)).unwrap();
    writeln!(s, "boundary configuration: {:?}", r.configuration).unwrap();
    writeln!(
        s,
        "coexistence: {} ({} stable), at least {} admitted  {}",
        r.coexistence_count,
        r.stable_coexistence,
        r.coexistence_bounds.min_total,
        mark(r.bounds_consistent)
    )
    .unwrap();
    if let Some(n2) = &r.n2_check {
        writeln!(s, "two-node configuration family  {}", mark(n2.matched)).unwrap();
    }
    writeln!(
        s,
        "atlas saturated: {}; all laws hold: {}",
        r.atlas_saturated,
        r.all_hold()
    )
    .unwrap();
    s
}

fn count_csv(r: &CountReport) -> String {
    let mut s = String::from("lambda,lhs,relation,rhs,holds\n");
    for v in &r.morse_verdicts.verdicts {
        let rel = match v.relation {
            Relation::GreaterEq => "ge",
            Relation::Equal => "eq",
        };
        writeln!(s, "{},{},{},{},{}", v.index, v.lhs, rel, v.rhs, v.holds).unwrap();
    }
    s
}

/// Exit 3 when a law fails on a saturated atlas; a failure on an
/// unsaturated atlas only means equilibria are probably missing.
fn count_exit(r: &CountReport) -> u8 {
    if r.all_hold() {
        0
    } else if r.atlas_saturated {
        EXIT_COUNTING
    } else {
        eprintln!(
            "warning: counting laws fail on an unsaturated atlas; equilibria are likely missing"
        );
        0
    }
}

fn cmd_count(a: &CountArgs) -> anyhow::Result<u8> {
    let atlas = match &a.atlas {
        Some(path) => {
            io::load_atlas(path).with_context(|| format!("loading atlas {}", path.display()))?
        }
        None => enumerate(&load_model(&a.common)?, &a.search)?,
    };
    let report = counting::count_report(&atlas)?;
    let dir = out_dir(&a.common)?;
    write_json(&dir.join("count.json"), &report)?;
    match a.common.format {
        Format::Table => print!("{}", count_table(&report)),
        Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
        Format::Csv => print!("{}", count_csv(&report)),
    }
    Ok(count_exit(&report))
}

// ---------------------------------------------------------------- basins

#[derive(Serialize)]
struct BasinRow {
    atlas_index: usize,
    class: String,
    n_k: usize,
    hits: usize,
    fraction: f64,
}

#[derive(Serialize)]
struct BasinOutput {
    samples: usize,
    seed: u64,
    rows: Vec<BasinRow>,
    unresolved: usize,
    saddle_hits: Vec<usize>,
    diagnostics: Vec<String>,
}

fn basins(
    model: &BivirusModel,
    atlas: &EquilibriumAtlas,
    samples: usize,
    seed: u64,
    a: &IntegratorArgs,
) -> anyhow::Result<BasinOutput> {
    let sample =
        dynamics::basin_sample(model, atlas, samples, seed, a.t_max, &integrator(a, false))?;
    let tally: BTreeMap<usize, usize> = sample.tally();
    let rows = tally
        .into_iter()
        .map(|(i, hits)| BasinRow {
            atlas_index: i,
            class: atlas.equilibria[i].class.to_string(),
            n_k: atlas.equilibria[i].n_k,
            hits,
            fraction: hits as f64 / samples as f64,
        })
        .collect();
    Ok(BasinOutput {
        samples,
        seed,
        rows,
        unresolved: sample.unresolved,
        saddle_hits: sample.saddle_hits,
        diagnostics: sample.diagnostics,
    })
}

fn basin_table(b: &BasinOutput) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{:>3} {:<12} {:>4} {:>6} {:>8}",
        "#", "class", "n_k", "hits", "fraction"
    )
    .unwrap();
    for r in &b.rows {
        writeln!(
            s,
            "{:>3} {:<12} {:>4} {:>6} {:>8}",
            r.atlas_index,
            r.class,
            r.n_k,
            r.hits,
            f4(r.fraction)
        )
        .unwrap();
    }
    writeln!(
        s,
        "{} samples (seed {}); unresolved: {}",
        b.samples, b.seed, b.unresolved
    )
    .unwrap();
    if !b.saddle_hits.is_empty() {
        writeln!(
            s,
            "samples that reached a non-stable equilibrium: {:?}",
            b.saddle_hits
        )
        .unwrap();
    }
    for d in &b.diagnostics {
        writeln!(s, "note: {d}").unwrap();
    }
    s
}

fn basin_csv(b: &BasinOutput) -> String {
    let mut s = String::from("atlas_index,class,n_k,hits,fraction\n");
    for r in &b.rows {
        writeln!(
            s,
            "{},{},{},{},{}",
            r.atlas_index, r.class, r.n_k, r.hits, r.fraction
        )
        .unwrap();
    }
    s
}

fn cmd_basins(a: &BasinArgs) -> anyhow::Result<u8> {
    let model = load_model(&a.common)?;
    let atlas = enumerate(&model, &a.search)?;
    let out = basins(&model, &atlas, a.samples, a.search.seed, &a.integrator)?;
    match a.common.format {
        Format::Table => print!("{}", basin_table(&out)),
        Format::Json => println!("{}", serde_json::to_string_pretty(&out)?),
        Format::Csv => print!("{}", basin_csv(&out)),
    }
    Ok(0)
}

// ---------------------------------------------------------------- report

#[derive(Serialize)]
struct ReportIndex {
    model_hash: String,
    n: usize,
    seed: u64,
    exit_code: u8,
    validation: String,
    atlas: String,
    count: String,
    basins: String,
    trajectories: Vec<String>,
    summary: String,
}

fn cmd_report(a: &ReportArgs) -> anyhow::Result<u8> {
    let model = load_model(&a.common)?;
    let dir = out_dir(&a.common)?.to_path_buf();

    let validation = model::validate(&model);
    write_json(&dir.join("validation.json"), &validation)?;
    require_assumptions(&model)?;

    let atlas = equilibria::enumerate_all(&model, &budget(&a.search))?;
    io::save_atlas(&atlas, dir.join("atlas.json"))?;
    let report = counting::count_report(&atlas)?;
    write_json(&dir.join("count.json"), &report)?;
    let basin = basins(&model, &atlas, a.samples, a.search.seed, &a.integrator)?;
    write_json(&dir.join("basins.json"), &basin)?;
    let initial = initial_states(&model, a.search.seed, a.trajectories, None)?;
    let runs = simulate_into(&model, &initial, &a.integrator, &dir)?;

    let summary = format!(
        "{}\n{}\n{}\n{}",
        validate_table(&validation),
        atlas_table(&atlas),
        count_table(&report),
        basin_table(&basin)
    );
    fs::write(dir.join("summary.txt"), &summary)?;
    let code = count_exit(&report);
    let index = ReportIndex {
        model_hash: model.hash_hex(),
        n: model.n(),
        seed: a.search.seed,
        exit_code: code,
        validation: "validation.json".into(),
        atlas: "atlas.json".into(),
        count: "count.json".into(),
        basins: "basins.json".into(),
        trajectories: runs.into_iter().map(|r| r.file).collect(),
        summary: "summary.txt".into(),
    };
    write_json(&dir.join("index.json"), &index)?;
    match a.common.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&index)?),
        Format::Table | Format::Csv => {
            print!("{summary}");
            println!("artifacts written to {}", dir.display());
        }
    }
    Ok(code)
}
