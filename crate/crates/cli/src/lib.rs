//! Experiment driver: JSON configs in, CSV and JSON reports out.

use cantor_core::clopen::{Clopen, ClopenSpec};
use cantor_core::comparison::{
    dynamical_compare, measure_gap_check, quarter_criterion, rank_compare_diagonal, CompareOutcome, DiagonalElement,
};
use cantor_core::crossed::LocFn;
use cantor_core::exact::{q_from_f64, Alg};
use cantor_core::group::FiniteGroupSet;
use cantor_core::groupoid::{
    build_groupoid, orbit_invariance_report, orbit_partition_exact, shape_from_tiling, verify_groupoid_axioms,
};
use cantor_core::system::{System, SystemSpec};
use cantor_core::towers::{first_return_analysis, kakutani_rokhlin, tiling_from_returns};
use cantor_core::tsdg::{random_element, tsdg_construct, tsdg_verify};
use cantor_core::window::OrbitWindow;
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECKS: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_COMPUTE: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "cantor", version, about = "Towers, groupoids and comparison checks on Cantor systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Cylinder measures of a system.
    System(RunArgs),
    /// Kakutani–Rokhlin towers over a clopen base.
    Towers(RunArgs),
    /// The tower groupoid of a clopen base.
    Groupoid(RunArgs),
    /// Dynamical comparison of two clopen sets.
    Compare(RunArgs),
    /// Tower subalgebra property report.
    Tsdg(RunArgs),
    /// Run every config in a directory.
    Suite(SuiteArgs),
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub radius: Option<usize>,
    #[arg(long)]
    pub window_length: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SuiteArgs {
    pub directory: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    pub seed: u64,
    pub operation: Operation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn default_radius() -> usize {
    2
}

fn default_nbhd() -> Vec<i64> {
    vec![-1, 0, 1]
}

fn default_half() -> f64 {
    0.5
}

fn default_one() -> f64 {
    1.0
}

fn default_coeff_radius() -> usize {
    1
}

fn default_window() -> usize {
    10_000
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Operation {
    System {
        #[serde(default = "default_radius")]
        radius: usize,
        #[serde(default)]
        window_length: Option<usize>,
    },
    Towers {
        base: ClopenSpec,
    },
    Groupoid {
        base: ClopenSpec,
        #[serde(default = "default_nbhd")]
        k: Vec<i64>,
        #[serde(default = "default_half")]
        eps: f64,
    },
    Compare {
        a: ClopenSpec,
        b: ClopenSpec,
        window: i64,
        #[serde(default)]
        lambda: Option<f64>,
        #[serde(default)]
        base: Option<ClopenSpec>,
    },
    Tsdg {
        base: ClopenSpec,
        #[serde(default = "default_nbhd")]
        neighbourhood: Vec<i64>,
        l: usize,
        #[serde(default = "default_half")]
        delta: f64,
        #[serde(default = "default_one")]
        coefficient_bound: f64,
        #[serde(default = "default_coeff_radius")]
        coefficient_radius: usize,
        #[serde(default = "default_one")]
        h: f64,
        #[serde(default)]
        f_set: Option<ClopenSpec>,
        #[serde(default = "default_window")]
        window_length: usize,
    },
}

impl Operation {
    pub fn name(&self) -> &'static str {
        match self {
            Operation::System { .. } => "system",
            Operation::Towers { .. } => "towers",
            Operation::Groupoid { .. } => "groupoid",
            Operation::Compare { .. } => "compare",
            Operation::Tsdg { .. } => "tsdg",
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub radius: Option<usize>,
    pub window_length: Option<usize>,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub expected: String,
    pub measured: String,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub artifact_version: &'static str,
    pub config: ExperimentConfig,
    pub checks: Vec<CheckRow>,
    pub passed: bool,
}

impl Report {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,expected,measured,pass\n");
        for r in &self.checks {
            let _ = writeln!(out, "{},{},{},{}", csv_field(&r.name), csv_field(&r.expected), csv_field(&r.measured), r.pass);
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Compute(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Compute(_) => EXIT_COMPUTE,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "invalid config: {m}"),
            Failure::Compute(m) => write!(f, "computation error: {m}"),
        }
    }
}

impl From<cantor_core::Error> for Failure {
    fn from(e: cantor_core::Error) -> Self {
        Failure::Compute(e.to_string())
    }
}

/// Rendered outputs of one run, not yet on disk.
pub struct Outcome {
    pub report: Report,
    pub files: Vec<(String, Vec<u8>)>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.report.passed {
            EXIT_OK
        } else {
            EXIT_CHECKS
        }
    }
}

fn row(name: impl Into<String>, expected: impl ToString, measured: impl ToString, pass: bool) -> CheckRow {
    CheckRow { name: name.into(), expected: expected.to_string(), measured: measured.to_string(), pass }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, Failure> {
    serde_json::from_str(text).map_err(|e| Failure::Config(e.to_string()))
}

fn clopen(sys: &Arc<System>, spec: &ClopenSpec, what: &str) -> Result<Clopen, Failure> {
    Clopen::from_spec(sys, spec).map_err(|e| Failure::Config(format!("{what}: {e}")))
}

fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s.into_bytes()
}

/// Parses, validates and runs a config without touching the filesystem.
pub fn run_config(text: &str, expected_op: Option<&str>, ov: &Overrides) -> Result<Outcome, Failure> {
    let mut cfg = parse_config(text)?;
    if let Some(op) = expected_op {
        if cfg.operation.name() != op {
            return Err(Failure::Config(format!(
                "config describes operation {:?}, not {op:?}",
                cfg.operation.name()
            )));
        }
    }
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    match &mut cfg.operation {
        Operation::System { radius, window_length } => {
            if let Some(r) = ov.radius {
                *radius = r;
            }
            if ov.window_length.is_some() {
                *window_length = ov.window_length;
            }
        }
        Operation::Tsdg { window_length, .. } => {
            if let Some(w) = ov.window_length {
                *window_length = w;
            }
        }
        _ => {}
    }
    let sys = Arc::new(System::from_spec(&cfg.system).map_err(|e| Failure::Config(e.to_string()))?);
    let (checks, mut files) = match &cfg.operation {
        Operation::System { radius, window_length } => op_system(&sys, *radius, *window_length, cfg.seed)?,
        Operation::Towers { base } => op_towers(&sys, base)?,
        Operation::Groupoid { base, k, eps } => op_groupoid(&sys, base, k, *eps)?,
        Operation::Compare { a, b, window, lambda, base } => op_compare(&sys, a, b, *window, *lambda, base.as_ref())?,
        Operation::Tsdg { .. } => op_tsdg(&sys, &cfg.operation, cfg.seed)?,
    };
    let passed = checks.iter().all(|c| c.pass);
    let report = Report { artifact_version: env!("CARGO_PKG_VERSION"), config: cfg, checks, passed };
    files.push(("report.csv".into(), report.to_csv().into_bytes()));
    files.push(("report.json".into(), json_bytes(&report)));
    files.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(Outcome { report, files })
}

type OpResult = Result<(Vec<CheckRow>, Vec<(String, Vec<u8>)>), Failure>;

fn op_system(sys: &Arc<System>, radius: usize, window_length: Option<usize>, seed: u64) -> OpResult {
    let radii = vec![radius; sys.rank()];
    let words = sys.words(&radii)?;
    let window = match window_length {
        Some(n) => Some(OrbitWindow::generate(sys, n, seed)?),
        None => None,
    };
    let mut csv = String::from("word,measure,exact,empirical\n");
    let mut total = Alg::from_rational(&sys.field(), Default::default());
    let mut worst: f64 = 0.0;
    for w in words.iter() {
        let mu = sys.word_measure(w, &radii)?;
        total = total.add(&mu);
        let emp = match &window {
            Some(win) => {
                let c = Clopen::from_words_radii(sys, &radii, [w.clone()])?;
                let (f, _) = win.frequency(&c)?;
                worst = worst.max((f - mu.to_f64()).abs());
                f.to_string()
            }
            None => String::new(),
        };
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            csv_field(&sys.format_word(w, &radii)),
            mu.to_f64(),
            csv_field(&mu.to_string()),
            emp
        );
    }
    let mut checks = vec![row("total measure", "1", total.to_string(), total.sub(&Alg::one(&sys.field())).is_zero())];
    if window.is_some() {
        checks.push(row("birkhoff gap", "≤ 0.01", worst, worst <= 1e-2));
    }
    let files = vec![("system.csv".into(), csv.into_bytes()), ("system.json".into(), format!("{}\n", sys.to_json()).into_bytes())];
    Ok((checks, files))
}

fn shape_label(f: &FiniteGroupSet) -> String {
    let v = f.z_values();
    match (v.first(), v.last()) {
        (Some(a), Some(b)) if (b - a + 1) as usize == v.len() => format!("{a}..{b}"),
        _ => v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" "),
    }
}

fn op_towers(sys: &Arc<System>, base: &ClopenSpec) -> OpResult {
    let y = clopen(sys, base, "base")?;
    let (td, kr) = kakutani_rokhlin(sys, &y)?;
    let check = td.verify()?;
    let mut csv = String::from("tower,height,shape,base_measure,product\n");
    for (i, t) in td.towers.iter().enumerate() {
        let mu = t.base.measure_f64()?;
        let h = t.shape.len();
        let _ = writeln!(csv, "{i},{h},{},{mu},{}", shape_label(&t.shape), mu * h as f64);
    }
    let checks = vec![
        row("towers disjoint", "true", check.disjoint, check.disjoint),
        row("towers cover", "true", check.covers, check.covers),
        row("total measure", "1", check.total_measure_is_one, check.total_measure_is_one),
        row("boundary sets empty", "true", kr.boundary_sets_empty, kr.boundary_sets_empty),
    ];
    let files = vec![("towers.csv".into(), csv.into_bytes()), ("towers.json".into(), format!("{}\n", td.to_json()).into_bytes())];
    Ok((checks, files))
}

fn op_groupoid(sys: &Arc<System>, base: &ClopenSpec, k: &[i64], eps: f64) -> OpResult {
    let y = clopen(sys, base, "base")?;
    let t = tiling_from_returns(&first_return_analysis(sys, &y)?)?;
    let g = build_groupoid(&shape_from_tiling(&t)?, false)?;
    let ax = verify_groupoid_axioms(&g)?;
    let inv = orbit_invariance_report(&g, &FiniteGroupSet::from_z(k.iter().copied()), eps)?;
    let exact = orbit_partition_exact(&g)?;
    let mut csv = String::from("block,shape,size,cell_measure,invariance_defect\n");
    for c in &inv.cells {
        let shape = shape_label(&g.shape.cells()[c.block].shape);
        let _ = writeln!(csv, "{},{},{},{},{}", c.block, shape, c.shape_len, c.measure, c.defect);
    }
    let checks = vec![
        row("groupoid axioms", "0 violations", ax.violation_count, ax.passed()),
        row("orbits match shapes", "true", ax.orbits_match_shapes, ax.orbits_match_shapes),
        row("orbit partition", "exact", exact, exact),
        row("orbit invariance", format!("< {eps}"), inv.max_defect, inv.passed),
    ];
    let files = vec![("groupoid.csv".into(), csv.into_bytes()), ("groupoid.json".into(), format!("{}\n", g.to_json()).into_bytes())];
    Ok((checks, files))
}

fn op_compare(
    sys: &Arc<System>,
    a: &ClopenSpec,
    b: &ClopenSpec,
    window: i64,
    lambda: Option<f64>,
    base: Option<&ClopenSpec>,
) -> OpResult {
    if window < 0 {
        return Err(Failure::Config("window must be nonnegative".into()));
    }
    let a = clopen(sys, a, "a")?;
    let b = clopen(sys, b, "b")?;
    let mut checks = Vec::new();
    let mut files = Vec::new();
    let out = dynamical_compare(&a, &b, &FiniteGroupSet::interval(-window, window))?;
    match &out {
        CompareOutcome::Found(w) => {
            let valid = w.validate(&a, &b)?;
            checks.push(row("subequivalence", "witness", format!("{} pieces", w.pieces.len()), valid));
            files.push(("witness.json".into(), json_bytes(&w.to_specs())));
        }
        CompareOutcome::NotFound { radius, unmatched, window_limited, .. } => {
            let note = if *window_limited { ", window below threshold" } else { "" };
            checks.push(row(
                "subequivalence",
                "witness",
                format!("none at radius {radius} with |γ| ≤ {window}: {unmatched} atoms unmatched{note}"),
                false,
            ));
            files.push(("witness.json".into(), b"[]\n".to_vec()));
        }
    }
    if let Some(l) = lambda {
        let g = measure_gap_check(&a, &b, l)?;
        checks.push(row("measure gap", format!("μ(A) < {l}·μ(B)"), format!("{} vs {}", g.mu_e, g.mu_f), g.holds));
    }
    if let Some(base) = base {
        let y = clopen(sys, base, "base")?;
        let (td, _) = kakutani_rokhlin(sys, &y)?;
        let da = DiagonalElement::on_towers(&td, &LocFn::indicator(&a)?)?;
        let db = DiagonalElement::on_towers(&td, &LocFn::indicator(&b)?)?;
        let ranks = rank_compare_diagonal(&da, &db)?;
        let mut csv = String::from("block,cell,rank_a,rank_b\n");
        for r in &ranks.rows {
            let _ = writeln!(csv, "{},{},{},{}", r.block, csv_field(&r.cell), r.rank_a, r.rank_b);
        }
        files.push(("ranks.csv".into(), csv.into_bytes()));
        checks.push(row("rank a ≤ rank b", "every cell", ranks.le_pass, ranks.le_pass));
        let t = tiling_from_returns(&first_return_analysis(sys, &y)?)?;
        let g = build_groupoid(&shape_from_tiling(&t)?, false)?;
        let q = quarter_criterion(&g, &a, &b)?;
        checks.push(row("quarter counts", "slack > 0", q.slack_counts, q.counts_ok));
        checks.push(row("quarter sizes", "slack > 0", q.slack_sizes, q.sizes_ok));
    }
    Ok((checks, files))
}

fn op_tsdg(sys: &Arc<System>, op: &Operation, seed: u64) -> OpResult {
    let Operation::Tsdg { base, neighbourhood, l, delta, coefficient_bound, coefficient_radius, h, f_set, window_length } = op
    else {
        unreachable!("dispatched on the tsdg variant")
    };
    let y = clopen(sys, base, "base")?;
    let (td, _) = kakutani_rokhlin(sys, &y)?;
    let nb = FiniteGroupSet::from_z(neighbourhood.iter().copied());
    let m = q_from_f64(*coefficient_bound).ok_or_else(|| Failure::Config("coefficient_bound must be finite".into()))?;
    let hq = q_from_f64(*h).ok_or_else(|| Failure::Config("h must be finite".into()))?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let f = random_element(sys, &nb, *coefficient_radius, &m, &mut rng)?;
    let hf = LocFn::constant(sys, hq)?;
    let fs = match f_set {
        Some(s) => clopen(sys, s, "f_set")?,
        None => Clopen::full(sys)?,
    };
    let c = tsdg_construct(&td, &[f], &hf, &fs, *delta, *l, &nb)?;
    let w = OrbitWindow::generate(sys, *window_length, seed)?;
    let rep = tsdg_verify(&c, &w)?;
    let checks = rep.rows.iter().map(|r| row(format!("property {}", r.id), r.bound, r.measured, r.pass)).collect();
    Ok((checks, vec![("tsdg.csv".into(), rep.to_csv().into_bytes())]))
}

/// Writes each file through a temporary sibling and an atomic rename.
pub fn write_outputs(dir: &Path, files: &[(String, Vec<u8>)]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, bytes) in files {
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(dir.join(name)).map_err(|e| e.error)?;
    }
    Ok(())
}

fn run_one(args: &RunArgs, op: &str) -> i32 {
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("invalid config: cannot read {}: {e}", args.config.display());
            return EXIT_CONFIG;
        }
    };
    let ov = Overrides { seed: args.seed, radius: args.radius, window_length: args.window_length };
    match run_config(&text, Some(op), &ov) {
        Ok(outcome) => {
            let dir = args
                .out
                .clone()
                .or_else(|| outcome.report.config.out.clone())
                .unwrap_or_else(|| PathBuf::from("out"));
            if let Err(e) = write_outputs(&dir, &outcome.files) {
                eprintln!("computation error: cannot write outputs: {e}");
                return EXIT_COMPUTE;
            }
            print!("{}", outcome.report.to_csv());
            outcome.exit_code()
        }
        Err(f) => {
            eprintln!("{f}");
            f.exit_code()
        }
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct SuiteRow {
    pub config: String,
    pub operation: String,
    pub exit_code: i32,
    pub checks: usize,
    pub failed: usize,
    pub message: String,
}

/// Runs every `*.json` config in `dir` in file-name order; each writes into
/// `out/<stem>/`, and the aggregate goes to `out/aggregate.{csv,json}`.
pub fn run_suite(dir: &Path, out: &Path) -> Result<(i32, Vec<SuiteRow>), Failure> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut rows = Vec::new();
    for p in &paths {
        let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let res = std::fs::read_to_string(p)
            .map_err(|e| Failure::Config(e.to_string()))
            .and_then(|t| run_config(&t, None, &Overrides::default()));
        let r = match res {
            Ok(o) => match write_outputs(&out.join(&stem), &o.files) {
                Ok(()) => SuiteRow {
                    config: stem,
                    operation: o.report.config.operation.name().into(),
                    exit_code: o.exit_code(),
                    checks: o.report.checks.len(),
                    failed: o.report.checks.iter().filter(|c| !c.pass).count(),
                    message: String::new(),
                },
                Err(e) => SuiteRow {
                    config: stem,
                    operation: o.report.config.operation.name().into(),
                    exit_code: EXIT_COMPUTE,
                    checks: 0,
                    failed: 0,
                    message: e.to_string(),
                },
            },
            Err(f) => SuiteRow {
                config: stem,
                operation: String::new(),
                exit_code: f.exit_code(),
                checks: 0,
                failed: 0,
                message: f.to_string(),
            },
        };
        rows.push(r);
    }
    let mut csv = String::from("config,operation,exit_code,checks,failed,message\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            csv_field(&r.config),
            r.operation,
            r.exit_code,
            r.checks,
            r.failed,
            csv_field(&r.message)
        );
    }
    write_outputs(out, &[("aggregate.csv".into(), csv.into_bytes()), ("aggregate.json".into(), json_bytes(&rows))])
        .map_err(|e| Failure::Compute(e.to_string()))?;
    let code = if rows.iter().all(|r| r.exit_code == EXIT_OK) { EXIT_OK } else { EXIT_CHECKS };
    Ok((code, rows))
}

pub fn execute(cli: Cli) -> i32 {
    match &cli.command {
        Command::System(a) => run_one(a, "system"),
        Command::Towers(a) => run_one(a, "towers"),
        Command::Groupoid(a) => run_one(a, "groupoid"),
        Command::Compare(a) => run_one(a, "compare"),
        Command::Tsdg(a) => run_one(a, "tsdg"),
        Command::Suite(s) => match run_suite(&s.directory, &s.out) {
            Ok((code, rows)) => {
                for r in &rows {
                    println!("{}: {} (exit {})", r.config, if r.exit_code == 0 { "pass" } else { "fail" }, r.exit_code);
                }
                code
            }
            Err(f) => {
                eprintln!("{f}");
                f.exit_code()
            }
        },
    }
}
