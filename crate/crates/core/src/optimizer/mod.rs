//! Design-adaptive block-product groups aimed at small Type-II error, plus the
//! sampled quantile functionals used to compare groups.

mod algorithms;

pub use algorithms::{cut_stream, partition_random, partition_set, partition_stream, rearrange, remove, scale, Rearranged};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_finite_mat, check_finite_vec, row_norms_sq, DesignProjector, Mat, Vector};
use crate::perm::{BlockGroup, Perm, PermSource};
use crate::rng::{stream_rng, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionMode {
    /// Prefix-balanced stream cut into blocks of controlled mass.
    Contract,
    /// Uniform random bins of size about `n^(1/2 + epsilon)`.
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub mode: PartitionMode,
    /// Bin exponent offset for [`PartitionMode::Random`].
    pub epsilon: f64,
    /// The first set is topped up to at least `ceil(n^topup_exponent)` elements.
    pub topup_exponent: f64,
    /// The second and third sets survive only with at least `ceil(n^split_exponent)`
    /// elements each; the same threshold triggers the top-up.
    pub split_exponent: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { mode: PartitionMode::Contract, epsilon: 0.05, topup_exponent: 0.55, split_exponent: 0.9 }
    }
}

/// Per-index quantities of the design that drive the construction.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignProfile {
    /// `(I - H^Z) x`.
    pub v: Vector,
    pub v_bar: f64,
    /// `a_i = v_i - v_bar`.
    pub a: Vector,
    /// Leverages `||H^Z e_i||^2`.
    pub b: Vector,
    /// `c_i = a_i^2`.
    pub c: Vector,
    pub b_bar: f64,
    pub c_bar: f64,
    /// `max_i a_i^2`.
    pub m_max: f64,
    /// `sum_i a_i^2`.
    pub s: f64,
    /// `||H^Z 1||^2`.
    pub ones_proj_sq: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionPlan {
    pub j1: Vec<usize>,
    pub j2: Vec<usize>,
    pub j3: Vec<usize>,
    pub blocks: Vec<Vec<usize>>,
    pub m_param: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimizerReport {
    pub objective_approx: f64,
    pub lambda2_hat: f64,
    pub lambda2_random_hat: f64,
    pub gap_terms: (f64, f64),
    pub samples_used: usize,
}

fn check_xz(x: &Vector, z: &Mat) -> Result<()> {
    if x.len() != z.nrows() {
        return Err(Error::DimensionMismatch(format!("x has length {}, z has {} rows", x.len(), z.nrows())));
    }
    check_finite_vec(x, "x")?;
    check_finite_mat(z, "z")
}

pub fn compute_profile(x: &Vector, z: &Mat) -> Result<DesignProfile> {
    check_xz(x, z)?;
    let proj = DesignProjector::new(z)?;
    Ok(profile_from(x, &proj))
}

fn profile_from(x: &Vector, proj: &DesignProjector) -> DesignProfile {
    let n = x.len();
    let nf = n as f64;
    let v = proj.residual(x);
    let v_bar = v.sum() / nf;
    let a = v.add_scalar(-v_bar);
    let b = row_norms_sq(proj.basis());
    let c = a.component_mul(&a);
    let ones = Vector::from_element(n, 1.0);
    let h1 = &ones - proj.residual(&ones);
    DesignProfile {
        b_bar: b.sum() / nf,
        c_bar: c.sum() / nf,
        m_max: c.max(),
        s: c.sum(),
        ones_proj_sq: h1.norm_squared(),
        v,
        v_bar,
        a,
        b,
        c,
    }
}

/// Splits indices by the signs of `c_i - c_bar` and `b_i - b_bar`.
/// Differences at rounding level count as zero.
pub fn classify(profile: &DesignProfile) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let (mut i1, mut i2, mut i3) = (Vec::new(), Vec::new(), Vec::new());
    let c_tol = 1e-12 * profile.m_max;
    let snap = |d: f64, tol: f64| if d.abs() <= tol { 0.0 } else { d };
    for i in 0..profile.a.len() {
        let dc = snap(profile.c[i] - profile.c_bar, c_tol);
        let db = snap(profile.b[i] - profile.b_bar, 1e-12);
        if dc * db >= 0.0 {
            i1.push(i);
        } else if dc < 0.0 {
            i2.push(i);
        } else {
            i3.push(i);
        }
    }
    (i1, i2, i3)
}

/// Runs profile, classification, rearrangement and per-set partitioning.
/// `rng` is only consumed in [`PartitionMode::Random`].
pub fn build_optimized_group<R: Rng + ?Sized>(
    x: &Vector,
    z: &Mat,
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> Result<(BlockGroup, PartitionPlan, DesignProfile)> {
    let profile = compute_profile(x, z)?;
    if profile.s <= 1e-12 * x.norm_squared() || profile.s == 0.0 {
        return Err(Error::DegenerateResidual);
    }
    let (i1, i2, i3) = classify(&profile);
    let re = rearrange(&profile, &i1, &i2, &i3, cfg);
    let m_param = profile.m_max.cbrt() * profile.s.powf(2.0 / 3.0);
    let mut blocks = Vec::new();
    for (set, pairs) in re.j.iter().zip(&re.pairs) {
        if set.is_empty() {
            continue;
        }
        let local = match cfg.mode {
            PartitionMode::Contract => partition_set(pairs, m_param),
            PartitionMode::Random => partition_random(&(0..set.len()).collect::<Vec<_>>(), x.len(), cfg.epsilon, rng)?,
        };
        for blk in local {
            let mut g: Vec<usize> = blk.iter().map(|&k| set[k]).collect();
            g.sort_unstable();
            blocks.push(g);
        }
    }
    let [j1, j2, j3] = re.j;
    let plan = PartitionPlan { j1, j2, j3, blocks: blocks.clone(), m_param };
    Ok((BlockGroup::new(x.len(), blocks)?, plan, profile))
}

/// `1/2 n v_bar^2 + sum_i (sum_{S_i} c_j / |S_i|)(sum_{S_i} b_j) + ||v_bar H^Z 1||^2`.
pub fn approx_objective(plan: &PartitionPlan, profile: &DesignProfile) -> f64 {
    let n = profile.a.len() as f64;
    let mut total = 0.5 * n * profile.v_bar * profile.v_bar;
    for blk in &plan.blocks {
        let sc: f64 = blk.iter().map(|&j| profile.c[j]).sum();
        let sb: f64 = blk.iter().map(|&j| profile.b[j]).sum();
        total += sc / blk.len() as f64 * sb;
    }
    total + profile.v_bar * profile.v_bar * profile.ones_proj_sq
}

/// `(|J_2|(b_2 - b)(c_2 - c), |J_3|(b_3 - b)(c_3 - c))` with set means; an
/// empty set contributes zero.
pub fn gap_terms(plan: &PartitionPlan, profile: &DesignProfile) -> (f64, f64) {
    let term = |set: &[usize]| {
        if set.is_empty() {
            return 0.0;
        }
        let k = set.len() as f64;
        let bm = set.iter().map(|&i| profile.b[i]).sum::<f64>() / k;
        let cm = set.iter().map(|&i| profile.c[i]).sum::<f64>() / k;
        k * (bm - profile.b_bar) * (cm - profile.c_bar)
    };
    (term(&plan.j2), term(&plan.j3))
}

/// `1/2 v_pi^T v + ||H^{Z_pi} v||^2`.
pub fn lambda2_statistic(proj: &DesignProjector, v: &Vector, perm: &Perm) -> Result<f64> {
    let vp = perm.apply_vec(v)?;
    let back = perm.apply_vec_transpose(v)?;
    let coords = proj.basis().tr_mul(&back);
    Ok(0.5 * vp.dot(v) + coords.norm_squared())
}

/// `x^T H^{[Z, Z_pi]} x + x_pi^T (I - H^{[Z, Z_pi]}) x`.
pub fn lambda1_statistic(proj: &DesignProjector, x: &Vector, perm: &Perm) -> Result<f64> {
    let r = proj.joint(perm)?.residual(x);
    let px = perm.apply_vec(x)?;
    Ok(x.norm_squared() - x.dot(&r) + px.dot(&r))
}

/// Smallest sample value `lambda` with `#{q > lambda} <= t m`.
pub fn upper_quantile(samples: &[f64], t: f64) -> f64 {
    let mut q = samples.to_vec();
    q.sort_by(f64::total_cmp);
    let m = q.len();
    let allowed = t * m as f64;
    let mut i = 0;
    while i < m {
        let mut j = i;
        while j + 1 < m && q[j + 1] == q[i] {
            j += 1;
        }
        if ((m - 1 - j) as f64) <= allowed + 1e-9 {
            return q[i];
        }
        i = j + 1;
    }
    q[m - 1]
}

fn check_sampling(t: f64, m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidInput("m must be positive".into()));
    }
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::InvalidInput(format!("t must lie in (0, 1), got {t}")));
    }
    Ok(())
}

pub fn lambda2_samples<S: PermSource, R: Rng + ?Sized>(
    x: &Vector,
    z: &Mat,
    sampler: &S,
    m: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_xz(x, z)?;
    let proj = DesignProjector::new(z)?;
    let v = proj.residual(x);
    (0..m).map(|_| lambda2_statistic(&proj, &v, &sampler.draw(rng))).collect()
}

pub fn lambda1_samples<S: PermSource, R: Rng + ?Sized>(
    x: &Vector,
    z: &Mat,
    sampler: &S,
    m: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_xz(x, z)?;
    let proj = DesignProjector::new(z)?;
    (0..m).map(|_| lambda1_statistic(&proj, x, &sampler.draw(rng))).collect()
}

/// Empirical `lambda_2` at level `t` from `m` draws.
pub fn lambda2_sampled<S: PermSource, R: Rng + ?Sized>(
    x: &Vector,
    z: &Mat,
    sampler: &S,
    t: f64,
    m: usize,
    rng: &mut R,
) -> Result<f64> {
    check_sampling(t, m)?;
    Ok(upper_quantile(&lambda2_samples(x, z, sampler, m, rng)?, t))
}

/// Empirical `lambda_1` at level `t` from `m` draws.
pub fn lambda1_sampled<S: PermSource, R: Rng + ?Sized>(
    x: &Vector,
    z: &Mat,
    sampler: &S,
    t: f64,
    m: usize,
    rng: &mut R,
) -> Result<f64> {
    check_sampling(t, m)?;
    Ok(upper_quantile(&lambda1_samples(x, z, sampler, m, rng)?, t))
}

/// Compares the optimized group at `alpha / 4` with uniform permutations at
/// `alpha / 2`. Partitioning and the two samplers draw from separate streams.
pub fn compare_groups(x: &Vector, z: &Mat, alpha: f64, m: usize, cfg: &OptimizerConfig, seed: u64) -> Result<OptimizerReport> {
    crate::palmrt::check_alpha(alpha)?;
    let recommended = (1.0 / (alpha * alpha)).ceil() as usize;
    if m < recommended {
        log::warn!("m = {m} is below the recommended ceil(1 / alpha^2) = {recommended}");
    }
    let (group, plan, profile) = build_optimized_group(x, z, cfg, &mut stream_rng(seed, Stream::Partition, 0))?;
    let lambda2_hat = lambda2_sampled(x, z, &group, alpha / 4.0, m, &mut stream_rng(seed, Stream::Sampling, 0))?;
    let uniform = BlockGroup::full(x.len());
    let lambda2_random_hat = lambda2_sampled(x, z, &uniform, alpha / 2.0, m, &mut stream_rng(seed, Stream::Sampling, 1))?;
    Ok(OptimizerReport {
        objective_approx: approx_objective(&plan, &profile),
        lambda2_hat,
        lambda2_random_hat,
        gap_terms: gap_terms(&plan, &profile),
        samples_used: m,
    })
}
