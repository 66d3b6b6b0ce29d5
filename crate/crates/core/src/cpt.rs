//! Grouped cyclic permutation test.
//!
//! A unit vector `eta` with `Z^T P_k eta = gamma` for every group element makes
//! the statistics `S_k = Y^T P_k^T eta` free of the nuisance coefficients; the
//! test ranks `S_0` among them.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{check_finite_mat, check_finite_vec, left_singular, orthonormal_basis, orthonormal_basis_scaled, Mat, Vector};
use crate::palmrt::{check_alpha, DECISION_EPS};
use crate::perm::ExplicitGroup;

/// `delta` at or below this value is reported as zero.
pub const DEGENERATE_DELTA: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CptSolution {
    #[serde(rename = "eta", serialize_with = "crate::linalg::serialize_vector")]
    pub eta_star: Vector,
    #[serde(serialize_with = "crate::linalg::serialize_vector")]
    pub gamma: Vector,
    pub delta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CptResult {
    pub r0: f64,
    pub r: Vec<f64>,
    pub threshold: f64,
    pub reject: bool,
}

impl CptSolution {
    /// `max_k ||Z^T P_k eta - gamma||_inf`.
    pub fn residual(&self, z: &Mat, g: &ExplicitGroup) -> Result<f64> {
        let mut worst = 0.0_f64;
        for p in g.elements() {
            let v = z.tr_mul(&p.apply_vec(&self.eta_star)?) - &self.gamma;
            worst = worst.max(v.amax());
        }
        Ok(worst)
    }
}

/// Orthonormal basis of the nullspace of `a`, as columns.
pub fn nullspace(a: &Mat) -> Result<Mat> {
    let cols = a.ncols();
    if a.nrows() == 0 {
        return Ok(Mat::identity(cols, cols));
    }
    let row_space = orthonormal_basis(&a.transpose())?;
    let comp = Mat::identity(cols, cols) - row_space.projector();
    Ok(orthonormal_basis_scaled(&comp, 1.0)?.basis().clone())
}

fn check_design(z: &Mat, g: &ExplicitGroup) -> Result<()> {
    if g.n() != z.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "group acts on {} indices but z has {} rows",
            g.n(),
            z.nrows()
        )));
    }
    check_finite_mat(z, "z")
}

/// Solves the stacked system with row blocks `(-I_p | Z^T P_k)`, `k = 0..K`,
/// over the unknowns `(gamma, eta)`. Among solutions, the unit `eta` with the
/// largest component orthogonal to the group-invariant vectors is returned;
/// if every solution is invariant, the one with the largest `eta` block.
pub fn solve_eta(z: &Mat, g: &ExplicitGroup) -> Result<CptSolution> {
    check_design(z, g)?;
    let (n, p) = z.shape();
    let k1 = g.order();
    let mut a = Mat::zeros(k1 * p, p + n);
    for (k, perm) in g.elements().iter().enumerate() {
        // column j of Z^T P_k is row perm(j) of Z
        for j in 0..n {
            let src = perm.image(j);
            for i in 0..p {
                a[(k * p + i, p + j)] = z[(src, i)];
            }
        }
        for i in 0..p {
            a[(k * p + i, i)] = -1.0;
        }
    }
    let null = nullspace(&a)?;
    if null.ncols() == 0 {
        return Err(Error::NoSolution);
    }
    let eta_block = null.rows(p, n).clone_owned();
    // Group-invariant eta always solve the system but give identical S_k.
    // Prefer the direction with the most energy off the invariant subspace.
    let varying = &eta_block - orbit_average(&eta_block, g);
    let (left, sigma) = left_singular(&varying);
    if let Some(top) = argmax(&sigma).filter(|&i| sigma[i] > 1e-8) {
        let eta = left.column(top).clone_owned();
        let eta = &eta * orient(&eta);
        let gamma = z.tr_mul(&eta);
        return Ok(CptSolution { eta_star: eta, gamma, delta: None });
    }
    log::warn!("only group-invariant solutions exist; the CPT statistics will all be equal");
    let (right, sigma) = left_singular(&eta_block.transpose());
    let top = argmax(&sigma).expect("nonempty nullspace");
    let full = &null * right.column(top);
    let eta = full.rows(p, n).clone_owned();
    let norm = eta.norm();
    if norm <= DEGENERATE_DELTA {
        return Err(Error::NoSolution);
    }
    let sign = orient(&eta);
    Ok(CptSolution {
        eta_star: eta * (sign / norm),
        gamma: full.rows(0, p).clone_owned() * (sign / norm),
        delta: None,
    })
}

fn argmax(v: &Vector) -> Option<usize> {
    (0..v.len()).max_by(|&i, &j| v[i].total_cmp(&v[j]))
}

/// Column-wise average over the group orbit: `(1/|G|) sum_k P_k v`.
pub fn orbit_average(m: &Mat, g: &ExplicitGroup) -> Mat {
    let mut out = Mat::zeros(m.nrows(), m.ncols());
    for perm in g.elements() {
        for (j, &t) in perm.images().iter().enumerate() {
            for c in 0..m.ncols() {
                out[(t, c)] += m[(j, c)];
            }
        }
    }
    out / g.order() as f64
}

/// Sign that makes the largest-magnitude entry positive.
fn orient(v: &Vector) -> f64 {
    let i = v.iamax();
    if v[i] < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Maximizes `delta = x^T eta - x^T P_1 eta` over unit `eta` satisfying
/// `Z^T P_k eta = Z^T eta` for all `k` and `x^T P_k eta = x^T P_1 eta` for `k >= 1`.
/// A numerically zero objective returns `delta = 0` with some feasible `eta`.
pub fn power_optimized_eta(x: &Vector, z: &Mat, g: &ExplicitGroup) -> Result<CptSolution> {
    check_design(z, g)?;
    check_finite_vec(x, "x")?;
    let (n, p) = z.shape();
    if x.len() != n {
        return Err(Error::DimensionMismatch("x has the wrong length".into()));
    }
    let k1 = g.order();
    if k1 < 2 {
        return Err(Error::InvalidInput("power optimization needs a non-trivial group".into()));
    }
    let els = g.elements();
    let mats: Vec<Mat> = els.iter().map(|p| p.matrix()).collect();
    let rows = (k1 - 1) * p + (k1 - 2);
    let mut c = Mat::zeros(rows, n);
    let id = Mat::identity(n, n);
    for k in 1..k1 {
        let block = z.transpose() * (&mats[k] - &id);
        c.rows_mut((k - 1) * p, p).copy_from(&block);
    }
    for k in 2..k1 {
        let row = x.transpose() * (&mats[k] - &mats[1]);
        c.row_mut((k1 - 1) * p + (k - 2)).copy_from(&row);
    }
    let null = nullspace(&c)?;
    if null.ncols() == 0 {
        return Err(Error::NoSolution);
    }
    let target = (&id - &mats[1]).transpose() * x;
    let proj = &null * null.tr_mul(&target);
    let delta = proj.norm();
    let (eta, delta) = if delta <= DEGENERATE_DELTA {
        let e = null.column(0).clone_owned();
        let s = orient(&e);
        (e * s, 0.0)
    } else {
        (proj / delta, delta)
    };
    let gamma = z.tr_mul(&eta);
    Ok(CptSolution { eta_star: eta, gamma, delta: Some(delta) })
}

/// `S_k = Y^T P_k^T eta` for every element.
pub fn cpt_scores(y: &Vector, sol: &CptSolution, g: &ExplicitGroup) -> Result<Vec<f64>> {
    if y.len() != g.n() || sol.eta_star.len() != g.n() {
        return Err(Error::DimensionMismatch("y, eta and group sizes differ".into()));
    }
    check_finite_vec(y, "y")?;
    g.elements()
        .iter()
        .map(|p| Ok(y.dot(&p.apply_vec_transpose(&sol.eta_star)?)))
        .collect()
}

/// `R_k = #{j != k : S_k <= S_j} / (K + 1)`.
pub fn rank_statistics(scores: &[f64]) -> Vec<f64> {
    let k1 = scores.len() as f64;
    scores
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let c = scores.iter().enumerate().filter(|&(j, &t)| j != k && s <= t).count();
            c as f64 / k1
        })
        .collect()
}

/// Statistics only; `threshold` and `reject` are filled in at uniform weights and `alpha = 1/2`.
pub fn cpt_statistics(y: &Vector, sol: &CptSolution, g: &ExplicitGroup) -> Result<CptResult> {
    cpt_test(y, sol, g, 0.5)
}

/// Rejects iff `R_0 > Q_{1 - alpha}` of the uniform distribution over `R_0..R_K`.
pub fn cpt_test(y: &Vector, sol: &CptSolution, g: &ExplicitGroup, alpha: f64) -> Result<CptResult> {
    let k1 = g.order();
    let w = vec![1.0 / k1 as f64; k1];
    cpt_decide(&rank_statistics(&cpt_scores(y, sol, g)?), &w, alpha)
}

pub(crate) fn cpt_decide(r: &[f64], weights: &[f64], alpha: f64) -> Result<CptResult> {
    check_alpha(alpha)?;
    let threshold = weighted_quantile(r, weights, 1.0 - alpha)?;
    Ok(CptResult { r0: r[0], r: r.to_vec(), threshold, reject: r[0] > threshold })
}

/// `inf { v in values : sum_{values <= v} weight >= tau }`.
pub fn weighted_quantile(values: &[f64], weights: &[f64], tau: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("no values".into()));
    }
    if values.len() != weights.len() {
        return Err(Error::DimensionMismatch("values and weights differ in length".into()));
    }
    if weights.iter().any(|&w| !(w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput("weights must be nonnegative and sum to 1".into()));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidInput(format!("tau must lie in (0, 1), got {tau}")));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut cum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let v = values[order[i]];
        while i < order.len() && values[order[i]] == v {
            cum += weights[order[i]];
            i += 1;
        }
        if cum >= tau - DECISION_EPS {
            return Ok(v);
        }
    }
    Ok(values[order[order.len() - 1]])
}
