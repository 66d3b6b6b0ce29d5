//! Command-line front end. Results go to stdout as JSON or CSV; failures print
//! an error object `{"code": ..., "message": ...}` to stdout and set the exit code.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::cpt::CptSolution;
use crate::data::{read_csv_path, LoadedData};
use crate::error::{Error, Result};
use crate::group_file::{load_group, GroupJson, LoadedGroup};
use crate::linalg::{DesignProjector, Mat, Vector};
use crate::optimizer::{build_optimized_group, compare_groups, OptimizerConfig, PartitionMode};
use crate::palmrt::{sampled_tally, sampled_result, PalmrtConfig, PalmrtPlan, Sides, TiePolicy};
use crate::perm::{full_cycle_group, left_shift_group, verify_group, BlockGroup, ExplicitGroup, Perm};
use crate::rng::{stream_rng, Stream, DEFAULT_SEED};
use crate::sim::{self, Dist, GroupChoice, Method, SimulationSpec};
use crate::weighted::{weighted_cpt_test, weighted_palmrt_test};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_METHOD: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "permtest", version, about = "Group permutation tests for one regression coefficient")]
pub struct Cli {
    /// Worker threads for simulations and sampling (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Test H0: b = 0 on a CSV dataset.
    Test(TestArgs),
    /// Type-I rejection rates under b = 0.
    SimulateType1(SimArgs),
    /// Rejection rates over a grid of b values.
    SimulateType2(SimArgs),
    /// Build the design-adaptive block group for a dataset.
    OptimizeGroup(OptimizeArgs),
    /// Write a group file.
    MakeGroup(MakeGroupArgs),
    /// Histogram of the leverages of Z.
    LeverageDensity(LeverageArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Palmrt,
    PalmrtTwoSided,
    Cpt,
    WeightedCpt,
    WeightedPalmrt,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Palmrt => Method::Palmrt,
            MethodArg::PalmrtTwoSided => Method::PalmrtTwoSided,
            MethodArg::Cpt => Method::Cpt,
            MethodArg::WeightedCpt => Method::WeightedCpt,
            MethodArg::WeightedPalmrt => Method::WeightedPalmrt,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DistArg {
    Gaussian,
    T1,
    T2,
}

impl From<DistArg> for Dist {
    fn from(d: DistArg) -> Self {
        match d {
            DistArg::Gaussian => Dist::Gaussian,
            DistArg::T1 => Dist::T1,
            DistArg::T2 => Dist::T2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Contract,
    Random,
}

impl From<ModeArg> for PartitionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Contract => PartitionMode::Contract,
            ModeArg::Random => PartitionMode::Random,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TieArg {
    Strict,
    Half,
}

#[derive(Args, Debug)]
pub struct SeedArg {
    /// Seed for every random stream.
    #[arg(long, env = "PERMTEST_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct OptimizerArgs {
    /// Partition rule inside each index set.
    #[arg(long, value_enum, default_value = "contract")]
    pub mode: ModeArg,
    /// Sets two and three are kept only with at least ceil(n^e) elements.
    #[arg(long, default_value_t = 0.9)]
    pub split_exponent: f64,
    /// The first set is topped up to ceil(n^e) elements.
    #[arg(long, default_value_t = 0.55)]
    pub topup_exponent: f64,
    /// Bin exponent offset for random partitioning.
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
}

impl OptimizerArgs {
    fn config(&self) -> Result<OptimizerConfig> {
        for (name, v) in [("split-exponent", self.split_exponent), ("topup-exponent", self.topup_exponent)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidInput(format!("{name} must lie in (0, 1]")));
            }
        }
        if !(self.epsilon >= 0.0 && self.epsilon < 0.5) {
            return Err(Error::InvalidInput("epsilon must lie in [0, 0.5)".into()));
        }
        Ok(OptimizerConfig {
            mode: self.mode.into(),
            epsilon: self.epsilon,
            topup_exponent: self.topup_exponent,
            split_exponent: self.split_exponent,
        })
    }
}

#[derive(Args, Debug)]
pub struct TestArgs {
    /// Headered CSV; columns other than target and response form Z.
    pub data: PathBuf,
    #[arg(long)]
    pub target_col: String,
    #[arg(long)]
    pub response_col: String,
    #[arg(long, value_enum, default_value = "palmrt")]
    pub method: MethodArg,
    /// cyclic, leftshift[:K+1], identity, random-iid, optimized[:contract|random] or a group JSON path.
    #[arg(long, default_value = "cyclic")]
    pub group_spec: String,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Identity weight for the weighted methods.
    #[arg(long)]
    pub w0: Option<f64>,
    /// Draws for sampled block groups (default ceil(1 / alpha^2)).
    #[arg(long)]
    pub m_samples: Option<usize>,
    /// One-sided PALMRT tie handling.
    #[arg(long, value_enum, default_value = "strict")]
    pub tie_policy: TieArg,
    #[command(flatten)]
    pub seed: SeedArg,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
}

#[derive(Args, Debug)]
pub struct SimArgs {
    /// Sample sizes (comma separated); every (n, p) pair is run.
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    /// Nuisance dimensions (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub p: Vec<usize>,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub dist_data: DistArg,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub dist_noise: DistArg,
    /// Distribution of X when it should differ from that of Z.
    #[arg(long, value_enum)]
    pub dist_x: Option<DistArg>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub alpha: Vec<f64>,
    /// Values of b (Type-II runs only).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub b_grid: Vec<f64>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// cyclic, leftshift, optimized, random-iid or a group JSON path.
    #[arg(long)]
    pub group: Option<String>,
    #[arg(long, default_value_t = 20)]
    pub k_plus_1: usize,
    #[arg(long, default_value_t = 200)]
    pub m_samples: usize,
    #[arg(long)]
    pub w0: Option<f64>,
    /// Add Z beta with random beta to every response.
    #[arg(long)]
    pub beta_fuzz: bool,
    /// Full-scale Type-I grid: n = 300, p = 100, 50000 replicates.
    #[arg(long)]
    pub extended: bool,
    /// Output CSV path (default stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub seed: SeedArg,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
}

#[derive(Args, Debug)]
pub struct DesignSource {
    /// Headered CSV holding the design.
    #[arg(long, conflicts_with = "simulate_design")]
    pub data: Option<PathBuf>,
    #[arg(long, requires = "data")]
    pub target_col: Option<String>,
    /// Column excluded from Z, if any.
    #[arg(long, requires = "data")]
    pub response_col: Option<String>,
    /// Draw X and Z instead of reading them.
    #[arg(long)]
    pub simulate_design: bool,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 60)]
    pub p: usize,
    #[arg(long, value_enum, default_value = "t2")]
    pub dist_data: DistArg,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub dist_x: DistArg,
}

#[derive(Args, Debug)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub source: DesignSource,
    /// Group JSON output.
    #[arg(long)]
    pub out: PathBuf,
    /// Plan report JSON output (default: next to --out with a .plan.json suffix).
    #[arg(long)]
    pub plan_out: Option<PathBuf>,
    /// Level for the sampled comparison in the plan report.
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long, default_value_t = 500)]
    pub m_samples: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GroupKind {
    Cyclic,
    Leftshift,
    Identity,
    Blocks,
}

#[derive(Args, Debug)]
pub struct MakeGroupArgs {
    #[arg(long, value_enum)]
    pub kind: GroupKind,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 20)]
    pub k_plus_1: usize,
    /// 1-based blocks, e.g. "1,2,3;4,5;6" (default: one block).
    #[arg(long)]
    pub blocks: Option<String>,
    /// Output path (default stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct LeverageArgs {
    #[command(flatten)]
    pub source: DesignSource,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[command(flatten)]
    pub seed: SeedArg,
}

/// Parses `args`, runs the command and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return EXIT_OK;
            }
            eprint!("{e}");
            let _ = writeln!(out, "{}", json!({"code": "usage", "message": e.kind().to_string()}));
            return EXIT_USAGE;
        }
    };
    let result = match cli.threads {
        Some(t) => {
            let mut buf = Vec::new();
            let r = sim::with_threads(t, || dispatch(cli.command, &mut buf)).and_then(|r| r);
            let _ = out.write_all(&buf);
            r
        }
        None => dispatch(cli.command, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(out, "{}", error_json(&e));
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidInput(_) => EXIT_USAGE,
        Error::NoSolution | Error::DegenerateResidual | Error::TooLarge(..) => EXIT_METHOD,
        _ => EXIT_DATA,
    }
}

/// `{"code", "message"}`, plus the 1-based positions of the offending pair for
/// group-file closure and duplicate errors.
pub fn error_json(e: &Error) -> Value {
    let mut v = json!({"code": e.code(), "message": e.to_string()});
    match e {
        Error::ClosureViolation(i, j) => {
            v["message"] = json!(format!(
                "group is not closed: element {} composed with element {} is not in the file",
                i + 1,
                j + 1
            ));
            v["pair"] = json!([i + 1, j + 1]);
        }
        Error::DuplicateElement(i, j) => {
            v["message"] = json!(format!("elements {} and {} are equal", i + 1, j + 1));
            v["pair"] = json!([i + 1, j + 1]);
        }
        _ => {}
    }
    v
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Test(a) => cmd_test(&a, out),
        Command::SimulateType1(a) => cmd_simulate(&a, false, out),
        Command::SimulateType2(a) => cmd_simulate(&a, true, out),
        Command::OptimizeGroup(a) => cmd_optimize_group(&a, out),
        Command::MakeGroup(a) => cmd_make_group(&a, out),
        Command::LeverageDensity(a) => cmd_leverage_density(&a, out),
    }
}

fn print_json(out: &mut dyn Write, v: &Value) -> Result<()> {
    writeln!(out, "{}", serde_json::to_string_pretty(v)?)?;
    Ok(())
}

/// Parsed `--group-spec`.
#[derive(Clone, Debug, PartialEq)]
pub enum GroupSpec {
    Cyclic,
    LeftShift(usize),
    Identity,
    RandomIid,
    Optimized(Option<PartitionMode>),
    File(PathBuf),
}

impl GroupSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let (head, tail) = match s.split_once(':') {
            Some((h, t)) => (h, Some(t)),
            None => (s, None),
        };
        match (head, tail) {
            ("cyclic", None) => Ok(GroupSpec::Cyclic),
            ("identity", None) => Ok(GroupSpec::Identity),
            ("random-iid", None) => Ok(GroupSpec::RandomIid),
            ("leftshift", None) => Ok(GroupSpec::LeftShift(20)),
            ("leftshift", Some(k)) => k
                .parse()
                .ok()
                .filter(|&k: &usize| k >= 1)
                .map(GroupSpec::LeftShift)
                .ok_or_else(|| Error::InvalidInput(format!("bad group size in {s}"))),
            ("optimized", None) => Ok(GroupSpec::Optimized(None)),
            ("optimized", Some("contract")) => Ok(GroupSpec::Optimized(Some(PartitionMode::Contract))),
            ("optimized", Some("random")) => Ok(GroupSpec::Optimized(Some(PartitionMode::Random))),
            _ if Path::new(s).extension().is_some_and(|e| e == "json") || Path::new(s).exists() => {
                Ok(GroupSpec::File(PathBuf::from(s)))
            }
            _ => Err(Error::InvalidInput(format!("unknown group spec {s}"))),
        }
    }
}

enum Resolved {
    Explicit(ExplicitGroup),
    Blocks(BlockGroup),
}

fn identity_group(n: usize) -> Result<ExplicitGroup> {
    verify_group(n, vec![Perm::identity(n)])
}

fn resolve_group(spec: &GroupSpec, x: &Vector, z: &Mat, opt: &OptimizerConfig, seed: u64) -> Result<Resolved> {
    let n = x.len();
    Ok(match spec {
        GroupSpec::Cyclic => Resolved::Explicit(full_cycle_group(n)?),
        GroupSpec::LeftShift(k1) => Resolved::Explicit(left_shift_group(n, k1 - 1)?),
        GroupSpec::Identity => Resolved::Explicit(identity_group(n)?),
        GroupSpec::RandomIid => Resolved::Blocks(BlockGroup::full(n)),
        GroupSpec::Optimized(mode) => {
            let mut cfg = *opt;
            if let Some(m) = mode {
                cfg.mode = *m;
            }
            let (g, _, _) = build_optimized_group(x, z, &cfg, &mut stream_rng(seed, Stream::Partition, 0))?;
            Resolved::Blocks(g)
        }
        GroupSpec::File(path) => {
            let g = load_group(path)?;
            if g.n() != n {
                return Err(Error::DimensionMismatch(format!("group file has n = {}, data has {n} rows", g.n())));
            }
            match g {
                LoadedGroup::Explicit(g) => Resolved::Explicit(g),
                LoadedGroup::Blocks(g) => Resolved::Blocks(g),
            }
        }
    })
}

fn group_source(spec: &GroupSpec) -> String {
    match spec {
        GroupSpec::Cyclic => "cyclic".into(),
        GroupSpec::LeftShift(k) => format!("leftshift:{k}"),
        GroupSpec::Identity => "identity".into(),
        GroupSpec::RandomIid => "random-iid".into(),
        GroupSpec::Optimized(None) => "optimized".into(),
        GroupSpec::Optimized(Some(PartitionMode::Contract)) => "optimized:contract".into(),
        GroupSpec::Optimized(Some(PartitionMode::Random)) => "optimized:random".into(),
        GroupSpec::File(p) => p.display().to_string(),
    }
}

fn cmd_test(a: &TestArgs, out: &mut dyn Write) -> Result<()> {
    let data = read_csv_path(&a.data, &a.target_col, Some(&a.response_col))?;
    let LoadedData { x, y, z, .. } = data;
    let y = y.expect("response requested");
    let spec = GroupSpec::parse(&a.group_spec)?;
    let method: Method = a.method.into();
    let seed = a.seed.seed;
    if matches!(method, Method::WeightedCpt | Method::WeightedPalmrt) && a.w0.is_none() {
        return Err(Error::InvalidInput(format!("method {method} needs --w0")));
    }
    let group = resolve_group(&spec, &x, &z, &a.optimizer.config()?, seed)?;
    // CPT variants and weighted PALMRT need every group element.
    let group = match (method, group) {
        (Method::Palmrt | Method::PalmrtTwoSided, g) => g,
        (_, Resolved::Blocks(b)) => Resolved::Explicit(b.enumerate()?),
        (_, g) => g,
    };
    let source = group_source(&spec);
    let mut v = match (method, &group) {
        (Method::Palmrt | Method::PalmrtTwoSided, _) => {
            let sides = if method == Method::PalmrtTwoSided { Sides::Two } else { Sides::One };
            let mut cfg = PalmrtConfig::new(a.alpha, sides)?;
            cfg.tie_policy = match a.tie_policy {
                TieArg::Strict => TiePolicy::Strict,
                TieArg::Half => TiePolicy::Half,
            };
            let (res, used_seed) = match &group {
                Resolved::Explicit(g) => (PalmrtPlan::new(&x, &z, g)?.test(&y, &cfg)?, None),
                Resolved::Blocks(bg) => {
                    let m = a.m_samples.unwrap_or_else(|| (1.0 / (a.alpha * a.alpha)).ceil() as usize);
                    if m == 0 {
                        return Err(Error::InvalidInput("m-samples must be positive".into()));
                    }
                    let proj = DesignProjector::new(&z)?;
                    let mut rng = stream_rng(seed, Stream::Sampling, 0);
                    let t = sampled_tally(&x, &proj, &y, bg, m, &mut rng)?;
                    (sampled_result(t, &cfg), Some(seed))
                }
            };
            json!({
                "method": method.to_string(),
                "phi": res.phi,
                "phi_tie": res.phi_tie,
                "phi1": res.phi1,
                "phi2": res.phi2,
                "alpha": a.alpha,
                "reject": res.reject,
                "k_plus_1": res.k_plus_1,
                "group_source": source,
                "seed": used_seed,
            })
        }
        (Method::WeightedPalmrt, Resolved::Explicit(g)) => {
            let w0 = a.w0.expect("checked");
            let res = weighted_palmrt_test(&x, &z, &y, g, a.alpha, w0)?;
            json!({
                "method": method.to_string(),
                "phi": res.palmrt.phi,
                "phi_tie": res.palmrt.phi_tie,
                "phi1": res.palmrt.phi1,
                "phi2": res.palmrt.phi2,
                "t": res.t,
                "w0": w0,
                "alpha": a.alpha,
                "reject": res.palmrt.reject,
                "k_plus_1": res.palmrt.k_plus_1,
                "group_source": source,
                "seed": Value::Null,
            })
        }
        (Method::Cpt | Method::WeightedCpt, Resolved::Explicit(g)) => {
            let sol: CptSolution = sim::cpt_solution(&x, &z, g)?;
            let res = match method {
                Method::WeightedCpt => weighted_cpt_test(&y, &sol, g, a.alpha, a.w0.expect("checked"))?,
                _ => crate::cpt::cpt_test(&y, &sol, g, a.alpha)?,
            };
            let mut v = json!({
                "method": method.to_string(),
                "r0": res.r0,
                "r": res.r,
                "threshold": res.threshold,
                "alpha": a.alpha,
                "reject": res.reject,
                "k_plus_1": g.order(),
                "group_source": source,
                "seed": Value::Null,
                "solution": serde_json::to_value(&sol)?,
            });
            if let Some(w0) = a.w0.filter(|_| method == Method::WeightedCpt) {
                v["w0"] = json!(w0);
            }
            v
        }
        _ => unreachable!("block groups were enumerated above"),
    };
    if method == Method::WeightedPalmrt && v.get("w0").is_none() {
        v["w0"] = json!(a.w0);
    }
    print_json(out, &v)
}

fn sim_group(name: &str) -> Result<GroupChoice> {
    Ok(match name {
        "cyclic" => GroupChoice::Cyclic,
        "leftshift" => GroupChoice::LeftShift,
        "optimized" => GroupChoice::Optimized,
        "random-iid" => GroupChoice::RandomIid,
        path => match load_group(Path::new(path))? {
            LoadedGroup::Explicit(g) => GroupChoice::FileExplicit(Arc::new(g)),
            LoadedGroup::Blocks(g) => GroupChoice::FileBlocks(Arc::new(g)),
        },
    })
}

fn cmd_simulate(a: &SimArgs, type2: bool, out: &mut dyn Write) -> Result<()> {
    let (dn, dp, dreps) = match (type2, a.extended) {
        (_, true) => (300, 100, 50_000),
        (false, false) => (120, 40, 5000),
        (true, false) => (200, 60, 2000),
    };
    let ns = if a.n.is_empty() { vec![dn] } else { a.n.clone() };
    let ps = if a.p.is_empty() { vec![dp] } else { a.p.clone() };
    let alpha = match (a.alpha.is_empty(), type2) {
        (false, _) => a.alpha.clone(),
        (true, false) => vec![0.05, 0.1, 0.2],
        (true, true) => vec![0.1],
    };
    let method = a.method.map(Method::from).unwrap_or(if type2 { Method::PalmrtTwoSided } else { Method::Palmrt });
    let group = sim_group(a.group.as_deref().unwrap_or(if type2 { "optimized" } else { "leftshift" }))?;
    if type2 && a.b_grid.is_empty() {
        return Err(Error::InvalidInput("simulate-type2 needs --b-grid".into()));
    }
    if !type2 && !a.b_grid.is_empty() {
        return Err(Error::InvalidInput("simulate-type1 takes no --b-grid".into()));
    }
    let optimizer = a.optimizer.config()?;
    let mut cells = Vec::new();
    for &n in &ns {
        for &p in &ps {
            let spec = SimulationSpec {
                n,
                p,
                dist_data: a.dist_data.into(),
                dist_noise: a.dist_noise.into(),
                dist_x: a.dist_x.map(Dist::from),
                b_grid: a.b_grid.clone(),
                reps: a.reps.unwrap_or(dreps),
                alpha_list: alpha.clone(),
                method,
                group: group.clone(),
                k_plus_1: a.k_plus_1,
                m_samples: a.m_samples,
                w0: a.w0,
                seed: a.seed.seed,
                beta_fuzz: a.beta_fuzz,
                optimizer,
            };
            let report = if type2 { sim::run_type2(&spec)? } else { sim::run_type1(&spec)? };
            log::info!("n = {n}, p = {p}: {:.1} s", report.wall_time_secs);
            cells.extend(report.cells);
        }
    }
    let report = sim::SimulationReport { cells, wall_time_secs: 0.0 };
    match &a.out {
        Some(path) => {
            let f = File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            report.write_csv(BufWriter::new(f))
        }
        None => report.write_csv(out),
    }
}

fn load_design(src: &DesignSource, seed: u64) -> Result<(Vector, Mat)> {
    match (&src.data, src.simulate_design) {
        (Some(path), _) => {
            let target = src
                .target_col
                .as_deref()
                .ok_or_else(|| Error::InvalidInput("--data needs --target-col".into()))?;
            let d = read_csv_path(path, target, src.response_col.as_deref())?;
            Ok((d.x, d.z))
        }
        (None, true) => {
            if src.p >= src.n {
                return Err(Error::InvalidInput("need p < n".into()));
            }
            let mut spec = SimulationSpec::type1(src.n, src.p, 1, seed);
            spec.dist_data = src.dist_data.into();
            spec.dist_x = Some(src.dist_x.into());
            let d = sim::generate_dataset(&spec, 0.0, &mut stream_rng(seed, Stream::Simulation, 0));
            Ok((d.x, d.z))
        }
        (None, false) => Err(Error::InvalidInput("pass --data or --simulate-design".into())),
    }
}

fn write_json_file(path: &Path, v: &Value) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    writeln!(f, "{}", serde_json::to_string_pretty(v)?)?;
    Ok(())
}

fn one_based(v: &[usize]) -> Vec<usize> {
    v.iter().map(|&i| i + 1).collect()
}

fn cmd_optimize_group(a: &OptimizeArgs, out: &mut dyn Write) -> Result<()> {
    let seed = a.seed.seed;
    let (x, z) = load_design(&a.source, seed)?;
    let cfg = a.optimizer.config()?;
    let (group, plan, profile) = build_optimized_group(&x, &z, &cfg, &mut stream_rng(seed, Stream::Partition, 0))?;
    let report = compare_groups(&x, &z, a.alpha, a.m_samples, &cfg, seed)?;
    let group_json = serde_json::to_value(GroupJson::from_blocks(&group))?;
    write_json_file(&a.out, &group_json)?;
    let plan_path = a.plan_out.clone().unwrap_or_else(|| a.out.with_extension("plan.json"));
    let plan_json = json!({
        "n": x.len(),
        "p": z.ncols(),
        "mode": match cfg.mode { PartitionMode::Contract => "contract", PartitionMode::Random => "random" },
        "seed": seed,
        "j1": one_based(&plan.j1),
        "j2": one_based(&plan.j2),
        "j3": one_based(&plan.j3),
        "blocks": plan.blocks.iter().map(|b| one_based(b)).collect::<Vec<_>>(),
        "m_param": plan.m_param,
        "s": profile.s,
        "m_max": profile.m_max,
        "gap_terms": [report.gap_terms.0, report.gap_terms.1],
        "objective_approx": report.objective_approx,
        "lambda2_hat": report.lambda2_hat,
        "lambda2_random_hat": report.lambda2_random_hat,
        "alpha": a.alpha,
        "samples_used": report.samples_used,
    });
    write_json_file(&plan_path, &plan_json)?;
    print_json(out, &json!({"group": a.out.display().to_string(), "plan": plan_path.display().to_string()}))
}

fn parse_blocks(s: &str, n: usize) -> Result<Vec<Vec<usize>>> {
    s.split(';')
        .map(|b| {
            b.split(',')
                .map(|t| {
                    let i: usize = t.trim().parse().map_err(|_| Error::InvalidInput(format!("bad block index {t:?}")))?;
                    if i == 0 || i > n {
                        return Err(Error::BadBlocks(format!("index {i} outside 1..={n}")));
                    }
                    Ok(i - 1)
                })
                .collect()
        })
        .collect()
}

fn cmd_make_group(a: &MakeGroupArgs, out: &mut dyn Write) -> Result<()> {
    if a.n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    let gj = match a.kind {
        GroupKind::Cyclic => GroupJson::from_explicit(&full_cycle_group(a.n)?),
        GroupKind::Leftshift => {
            if a.k_plus_1 == 0 {
                return Err(Error::InvalidInput("k-plus-1 must be positive".into()));
            }
            GroupJson::from_explicit(&left_shift_group(a.n, a.k_plus_1 - 1)?)
        }
        GroupKind::Identity => GroupJson::from_explicit(&identity_group(a.n)?),
        GroupKind::Blocks => {
            let blocks = match &a.blocks {
                Some(s) => parse_blocks(s, a.n)?,
                None => vec![(0..a.n).collect()],
            };
            GroupJson::from_blocks(&BlockGroup::new(a.n, blocks)?)
        }
    };
    let v = serde_json::to_value(gj)?;
    match &a.out {
        Some(path) => write_json_file(path, &v),
        None => print_json(out, &v),
    }
}

fn cmd_leverage_density(a: &LeverageArgs, out: &mut dyn Write) -> Result<()> {
    let (_, z) = load_design(&a.source, a.seed.seed)?;
    let hist = sim::leverage_density(&z, a.bins)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["lo", "hi", "count", "density"])?;
    for b in hist {
        w.write_record([b.lo.to_string(), b.hi.to_string(), b.count.to_string(), b.density.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
