//! Weighted tests for noise that is not exactly exchangeable: the identity
//! element carries weight `w0`, every other element `(1 - w0) / K`.

use crate::cpt::{cpt_decide, cpt_scores, rank_statistics, CptResult, CptSolution};
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::palmrt::{check_alpha, PalmrtPlan, PalmrtResult, DECISION_EPS};
use crate::perm::ExplicitGroup;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightScheme {
    k: usize,
    w0: f64,
    wi: f64,
}

impl WeightScheme {
    /// Requires `K >= 1` and `w0` in `[1/(K+1), 1)`.
    pub fn new(k: usize, w0: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("weighted tests need K >= 1".into()));
        }
        let lo = 1.0 / (k + 1) as f64;
        if !(w0 >= lo - 1e-12 && w0 < 1.0) {
            return Err(Error::InvalidInput(format!("w0 must lie in [{lo}, 1), got {w0}")));
        }
        Ok(WeightScheme { k, w0, wi: (1.0 - w0) / k as f64 })
    }

    pub fn uniform(k: usize) -> Result<Self> {
        Self::new(k, 1.0 / (k + 1) as f64)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn w0(&self) -> f64 {
        self.w0
    }

    pub fn wi(&self) -> f64 {
        self.wi
    }

    /// `(w0, wi, ..., wi)` of length `K + 1`.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = vec![self.wi; self.k + 1];
        w[0] = self.w0;
        w
    }
}

/// Rejects iff `R_0 > Q_{1 - alpha}(sum_k w_k delta_{R_k})`.
pub fn weighted_cpt_test(y: &Vector, sol: &CptSolution, g: &ExplicitGroup, alpha: f64, w0: f64) -> Result<CptResult> {
    let scheme = WeightScheme::new(g.order().saturating_sub(1), w0)?;
    let r = rank_statistics(&cpt_scores(y, sol, g)?);
    cpt_decide(&r, &scheme.weights(), alpha)
}

/// Weighted PALMRT result; `t` is the weighted mass of elements whose
/// comparison favors the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedPalmrtResult {
    pub t: f64,
    pub w0: f64,
    pub palmrt: PalmrtResult,
}

/// `T = sum_{k>=1} w_k 1{x^T r_k > x_{pi_k}^T r_k}`; reject iff `T >= 1 - alpha`.
/// The unweighted statistics are reported alongside.
pub fn weighted_palmrt_test(
    x: &Vector,
    z: &Mat,
    y: &Vector,
    g: &ExplicitGroup,
    alpha: f64,
    w0: f64,
) -> Result<WeightedPalmrtResult> {
    check_alpha(alpha)?;
    let scheme = WeightScheme::new(g.order().saturating_sub(1), w0)?;
    let plan = PalmrtPlan::new(x, z, g)?;
    let tally = plan.tally(y)?;
    let t = scheme.wi() * tally.greater as f64;
    let mut palmrt = plan.test(y, &crate::palmrt::PalmrtConfig::new(alpha, crate::palmrt::Sides::One)?)?;
    palmrt.reject = t >= 1.0 - alpha - DECISION_EPS;
    Ok(WeightedPalmrtResult { t, w0, palmrt })
}
