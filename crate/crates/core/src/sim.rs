//! Seeded Monte Carlo experiments: Type-I rejection tables and Type-II curves.
//!
//! Replicate `r` draws its data from stream `r` of the simulation RNG, so the
//! same seed yields the same data at every `b` and under any thread count.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Cauchy, Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::Serialize;

use crate::cpt::{cpt_decide, cpt_scores, power_optimized_eta, rank_statistics, solve_eta};
use crate::error::{Error, Result};
use crate::linalg::{DesignProjector, Mat, Vector};
use crate::optimizer::{build_optimized_group, OptimizerConfig};
use crate::palmrt::{exact_result, sampled_result, sampled_tally, PalmrtConfig, PalmrtPlan, Sides, Tally, DECISION_EPS};
use crate::perm::{full_cycle_group, left_shift_group, BlockGroup, ExplicitGroup};
use crate::rng::{stream_rng, Stream};
use crate::weighted::WeightScheme;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Dist {
    Gaussian,
    T1,
    T2,
}

impl FromStr for Dist {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" | "normal" => Ok(Dist::Gaussian),
            "t1" | "cauchy" => Ok(Dist::T1),
            "t2" => Ok(Dist::T2),
            _ => Err(Error::InvalidInput(format!("unknown distribution {s}"))),
        }
    }
}

impl fmt::Display for Dist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dist::Gaussian => "gaussian",
            Dist::T1 => "t1",
            Dist::T2 => "t2",
        })
    }
}

/// I.i.d. draws: standard normal, Student t with one (Cauchy) or two degrees of freedom.
pub fn sample_dist<R: Rng + ?Sized>(dist: Dist, count: usize, rng: &mut R) -> Vec<f64> {
    match dist {
        Dist::Gaussian => (0..count).map(|_| StandardNormal.sample(rng)).collect(),
        Dist::T1 => {
            let d = Cauchy::new(0.0, 1.0).expect("valid scale");
            (0..count).map(|_| d.sample(rng)).collect()
        }
        Dist::T2 => {
            let d = StudentT::new(2.0).expect("valid dof");
            (0..count).map(|_| d.sample(rng)).collect()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Palmrt,
    PalmrtTwoSided,
    Cpt,
    WeightedCpt,
    WeightedPalmrt,
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "palmrt" => Ok(Method::Palmrt),
            "palmrt-two-sided" => Ok(Method::PalmrtTwoSided),
            "cpt" => Ok(Method::Cpt),
            "weighted-cpt" => Ok(Method::WeightedCpt),
            "weighted-palmrt" => Ok(Method::WeightedPalmrt),
            _ => Err(Error::InvalidInput(format!("unknown method {s}"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Palmrt => "palmrt",
            Method::PalmrtTwoSided => "palmrt-two-sided",
            Method::Cpt => "cpt",
            Method::WeightedCpt => "weighted-cpt",
            Method::WeightedPalmrt => "weighted-palmrt",
        })
    }
}

/// Which permutation group a simulation uses.
#[derive(Clone, Debug)]
pub enum GroupChoice {
    /// All `n` cyclic shifts.
    Cyclic,
    /// `k_plus_1` block rotations.
    LeftShift,
    /// Rebuilt from each replicate's design.
    Optimized,
    /// Uniform permutations of all indices.
    RandomIid,
    /// Loaded explicit group.
    FileExplicit(Arc<ExplicitGroup>),
    /// Loaded block group.
    FileBlocks(Arc<BlockGroup>),
}

impl GroupChoice {
    pub fn name(&self) -> &'static str {
        match self {
            GroupChoice::Cyclic => "cyclic",
            GroupChoice::LeftShift => "leftshift",
            GroupChoice::Optimized => "optimized",
            GroupChoice::RandomIid => "random-iid",
            GroupChoice::FileExplicit(_) | GroupChoice::FileBlocks(_) => "file",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimulationSpec {
    pub n: usize,
    pub p: usize,
    pub dist_data: Dist,
    pub dist_noise: Dist,
    /// Distribution of `X` when it differs from that of `Z`.
    pub dist_x: Option<Dist>,
    /// Empty for Type-I runs.
    pub b_grid: Vec<f64>,
    pub reps: usize,
    pub alpha_list: Vec<f64>,
    pub method: Method,
    pub group: GroupChoice,
    pub k_plus_1: usize,
    pub m_samples: usize,
    pub w0: Option<f64>,
    pub seed: u64,
    /// Adds `Z beta` with a random `beta` to every response.
    pub beta_fuzz: bool,
    pub optimizer: OptimizerConfig,
}

impl SimulationSpec {
    /// Type-I defaults: left-shift group of order 20, Gaussian data and noise.
    pub fn type1(n: usize, p: usize, reps: usize, seed: u64) -> Self {
        SimulationSpec {
            n,
            p,
            dist_data: Dist::Gaussian,
            dist_noise: Dist::Gaussian,
            dist_x: None,
            b_grid: Vec::new(),
            reps,
            alpha_list: vec![0.05, 0.1, 0.2],
            method: Method::Palmrt,
            group: GroupChoice::LeftShift,
            k_plus_1: 20,
            m_samples: 100,
            w0: None,
            seed,
            beta_fuzz: false,
            optimizer: OptimizerConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidInput("reps must be at least 1".into()));
        }
        if self.p >= self.n {
            return Err(Error::InvalidInput(format!("need p < n, got p = {}, n = {}", self.p, self.n)));
        }
        if self.alpha_list.is_empty() || self.alpha_list.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(Error::InvalidInput("every alpha must lie in (0, 1)".into()));
        }
        if self.k_plus_1 == 0 {
            return Err(Error::InvalidInput("k_plus_1 must be positive".into()));
        }
        if self.m_samples == 0 {
            return Err(Error::InvalidInput("m_samples must be positive".into()));
        }
        if matches!(self.method, Method::WeightedCpt | Method::WeightedPalmrt) && self.w0.is_none() {
            return Err(Error::InvalidInput("weighted methods need w0".into()));
        }
        match &self.group {
            GroupChoice::FileExplicit(g) if g.n() != self.n => {
                Err(Error::DimensionMismatch(format!("group file has n = {} but spec has n = {}", g.n(), self.n)))
            }
            GroupChoice::FileBlocks(g) if g.n() != self.n => Err(Error::DimensionMismatch(format!(
                "group file has n = {} but spec has n = {}",
                g.n(),
                self.n
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Vector,
    pub z: Mat,
    pub y: Vector,
}

/// `Z` and `X` from `dist_data` (`X` from `dist_x` if set), noise from
/// `dist_noise`, `Y = b X + eps (+ Z beta)`.
pub fn generate_dataset<R: Rng + ?Sized>(spec: &SimulationSpec, b: f64, rng: &mut R) -> Dataset {
    let (n, p) = (spec.n, spec.p);
    let z = Mat::from_vec(n, p, sample_dist(spec.dist_data, n * p, rng));
    let x = Vector::from_vec(sample_dist(spec.dist_x.unwrap_or(spec.dist_data), n, rng));
    let eps = Vector::from_vec(sample_dist(spec.dist_noise, n, rng));
    let mut y = &x * b + eps;
    if spec.beta_fuzz {
        let beta = Vector::from_vec(sample_dist(Dist::Gaussian, p, rng)) * 10.0;
        y += &z * beta;
    }
    Dataset { x, z, y }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cell {
    pub method: String,
    pub group: String,
    pub n: usize,
    pub p: usize,
    pub dist_data: String,
    pub dist_noise: String,
    pub alpha: f64,
    pub b: f64,
    pub reps: usize,
    pub rejections: usize,
    pub reject_rate: f64,
    pub stderr: f64,
    pub seed: u64,
}

impl Cell {
    /// Acceptance rate, i.e. Type-II error when `b != 0`.
    pub fn accept_rate(&self) -> f64 {
        1.0 - self.reject_rate
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationReport {
    pub cells: Vec<Cell>,
    pub wall_time_secs: f64,
}

pub const CSV_HEADER: [&str; 12] =
    ["method", "group", "n", "p", "dist_data", "dist_noise", "alpha", "b", "reps", "reject_rate", "stderr", "seed"];

impl SimulationReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_HEADER)?;
        for c in &self.cells {
            out.write_record([
                c.method.clone(),
                c.group.clone(),
                c.n.to_string(),
                c.p.to_string(),
                c.dist_data.clone(),
                c.dist_noise.clone(),
                c.alpha.to_string(),
                c.b.to_string(),
                c.reps.to_string(),
                c.reject_rate.to_string(),
                c.stderr.to_string(),
                c.seed.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv is utf-8"))
    }
}

/// Binomial standard error `sqrt(rate (1 - rate) / reps)`.
pub fn binomial_stderr(rate: f64, reps: usize) -> f64 {
    (rate * (1.0 - rate) / reps as f64).sqrt()
}

/// Fixed groups shared by all replicates.
enum Prepared {
    Explicit(Arc<ExplicitGroup>),
    Blocks(Arc<BlockGroup>),
    Optimized,
}

fn prepare(spec: &SimulationSpec) -> Result<Prepared> {
    let needs_explicit = matches!(spec.method, Method::Cpt | Method::WeightedCpt | Method::WeightedPalmrt);
    let prepared = match &spec.group {
        GroupChoice::Cyclic => Prepared::Explicit(Arc::new(full_cycle_group(spec.n)?)),
        GroupChoice::LeftShift => Prepared::Explicit(Arc::new(left_shift_group(spec.n, spec.k_plus_1 - 1)?)),
        GroupChoice::FileExplicit(g) => Prepared::Explicit(g.clone()),
        GroupChoice::RandomIid => Prepared::Blocks(Arc::new(BlockGroup::full(spec.n))),
        GroupChoice::FileBlocks(g) => Prepared::Blocks(g.clone()),
        GroupChoice::Optimized => Prepared::Optimized,
    };
    match prepared {
        Prepared::Blocks(bg) if needs_explicit => Ok(Prepared::Explicit(Arc::new(bg.enumerate()?))),
        Prepared::Optimized if needs_explicit => Err(Error::InvalidInput(format!(
            "method {} needs an explicit group; the optimized group is only sampled",
            spec.method
        ))),
        other => Ok(other),
    }
}

/// Decisions of one replicate, one per alpha.
fn replicate(spec: &SimulationSpec, prepared: &Prepared, b: f64, r: u64) -> Result<Vec<bool>> {
    let data = generate_dataset(spec, b, &mut stream_rng(spec.seed, Stream::Simulation, r));
    let sides = if spec.method == Method::PalmrtTwoSided { Sides::Two } else { Sides::One };
    let palmrt_decisions = |t: Tally, sampled: bool| -> Result<Vec<bool>> {
        spec.alpha_list
            .iter()
            .map(|&alpha| {
                let cfg = PalmrtConfig::new(alpha, sides)?;
                Ok(if sampled { sampled_result(t, &cfg).reject } else { exact_result(t, &cfg).reject })
            })
            .collect()
    };
    match (spec.method, prepared) {
        (Method::Palmrt | Method::PalmrtTwoSided, Prepared::Explicit(g)) => {
            let t = PalmrtPlan::new(&data.x, &data.z, g)?.tally(&data.y)?;
            palmrt_decisions(t, false)
        }
        (Method::Palmrt | Method::PalmrtTwoSided, Prepared::Blocks(bg)) => {
            let proj = DesignProjector::new(&data.z)?;
            let mut rng = stream_rng(spec.seed, Stream::Sampling, r);
            let t = sampled_tally(&data.x, &proj, &data.y, bg.as_ref(), spec.m_samples, &mut rng)?;
            palmrt_decisions(t, true)
        }
        (Method::Palmrt | Method::PalmrtTwoSided, Prepared::Optimized) => {
            let mut prng = stream_rng(spec.seed, Stream::Partition, r);
            let (bg, _, _) = build_optimized_group(&data.x, &data.z, &spec.optimizer, &mut prng)?;
            let proj = DesignProjector::new(&data.z)?;
            let mut rng = stream_rng(spec.seed, Stream::Sampling, r);
            let t = sampled_tally(&data.x, &proj, &data.y, &bg, spec.m_samples, &mut rng)?;
            palmrt_decisions(t, true)
        }
        (Method::WeightedPalmrt, Prepared::Explicit(g)) => {
            let scheme = WeightScheme::new(g.order() - 1, spec.w0.expect("validated"))?;
            let t = PalmrtPlan::new(&data.x, &data.z, g)?.tally(&data.y)?;
            let stat = scheme.wi() * t.greater as f64;
            Ok(spec.alpha_list.iter().map(|&a| stat >= 1.0 - a - DECISION_EPS).collect())
        }
        (Method::Cpt | Method::WeightedCpt, Prepared::Explicit(g)) => {
            let sol = cpt_solution(&data.x, &data.z, g)?;
            let r = rank_statistics(&cpt_scores(&data.y, &sol, g)?);
            let weights = match spec.method {
                Method::WeightedCpt => WeightScheme::new(g.order() - 1, spec.w0.expect("validated"))?.weights(),
                _ => vec![1.0 / g.order() as f64; g.order()],
            };
            spec.alpha_list.iter().map(|&a| Ok(cpt_decide(&r, &weights, a)?.reject)).collect()
        }
        _ => unreachable!("prepare rejects other combinations"),
    }
}

/// Power-optimized `eta` when its extra constraints are feasible, otherwise
/// any solution of the stacked system.
pub fn cpt_solution(x: &Vector, z: &Mat, g: &ExplicitGroup) -> Result<crate::cpt::CptSolution> {
    if g.order() >= 2 {
        match power_optimized_eta(x, z, g) {
            Ok(sol) => return Ok(sol),
            Err(Error::NoSolution) => {}
            Err(e) => return Err(e),
        }
    }
    solve_eta(z, g)
}

fn run_grid(spec: &SimulationSpec, grid: &[f64]) -> Result<SimulationReport> {
    spec.validate()?;
    let start = Instant::now();
    let prepared = prepare(spec)?;
    let mut cells = Vec::new();
    for &b in grid {
        let decisions: Vec<Vec<bool>> =
            (0..spec.reps as u64).into_par_iter().map(|r| replicate(spec, &prepared, b, r)).collect::<Result<_>>()?;
        for (ai, &alpha) in spec.alpha_list.iter().enumerate() {
            let rejections = decisions.iter().filter(|d| d[ai]).count();
            let rate = rejections as f64 / spec.reps as f64;
            cells.push(Cell {
                method: spec.method.to_string(),
                group: spec.group.name().to_string(),
                n: spec.n,
                p: spec.p,
                dist_data: spec.dist_data.to_string(),
                dist_noise: spec.dist_noise.to_string(),
                alpha,
                b,
                reps: spec.reps,
                rejections,
                reject_rate: rate,
                stderr: binomial_stderr(rate, spec.reps),
                seed: spec.seed,
            });
        }
    }
    Ok(SimulationReport { cells, wall_time_secs: start.elapsed().as_secs_f64() })
}

/// Rejection rate per alpha under `b = 0`.
pub fn run_type1(spec: &SimulationSpec) -> Result<SimulationReport> {
    if spec.b_grid.iter().any(|&b| b != 0.0) {
        return Err(Error::InvalidInput("Type-I runs need an empty or zero b grid".into()));
    }
    run_grid(spec, &[0.0])
}

/// Rejection rate per `(b, alpha)`; the Type-II error is one minus the rate.
pub fn run_type2(spec: &SimulationSpec) -> Result<SimulationReport> {
    if spec.b_grid.is_empty() {
        return Err(Error::InvalidInput("Type-II runs need a nonempty b grid".into()));
    }
    run_grid(spec, &spec.b_grid)
}

/// Runs `f` on a pool capped at `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(pool.install(f))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub density: f64,
}

/// Histogram of the leverages `||H^Z e_i||^2` over `[0, 1]`.
pub fn leverage_density(z: &Mat, bins: usize) -> Result<Vec<HistogramBin>> {
    if bins == 0 {
        return Err(Error::InvalidInput("bins must be positive".into()));
    }
    let lev = crate::linalg::leverage_norms(z)?;
    let width = 1.0 / bins as f64;
    let mut counts = vec![0usize; bins];
    for &b in lev.iter() {
        let k = ((b.clamp(0.0, 1.0) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let n = lev.len() as f64;
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| HistogramBin {
            lo: k as f64 * width,
            hi: (k + 1) as f64 * width,
            count,
            density: count as f64 / (n * width),
        })
        .collect())
}
