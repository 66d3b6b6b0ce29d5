//! Grouped PALMRT: the statistics phi, phi', phi_1, phi_2, the pairwise
//! comparison matrix, and sampled estimates for block-product groups.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_finite_mat, check_finite_vec, hstack, orthonormal_basis, DesignProjector, JointResidual, Mat, Vector};
use crate::perm::{full_cycle_group, ExplicitGroup, Perm, PermSource};

/// Slack applied when comparing a statistic against a decision threshold such
/// as `phi <= alpha`. Statistics are ratios of small integers, so this only
/// absorbs rounding in their floating-point representation.
pub const DECISION_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sides {
    One,
    Two,
}

/// How the one-sided decision treats exact ties.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TiePolicy {
    /// Decide on `phi`, where a tie counts fully.
    Strict,
    /// Decide on `phi'`, where a tie counts one half.
    Half,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PalmrtConfig {
    pub alpha: f64,
    pub sides: Sides,
    pub tie_policy: TiePolicy,
}

impl PalmrtConfig {
    pub fn new(alpha: f64, sides: Sides) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(PalmrtConfig { alpha, sides, tie_policy: TiePolicy::Strict })
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PalmrtResult {
    pub phi: f64,
    pub phi_tie: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub reject: bool,
    /// Number of group elements compared, including the identity term.
    pub k_plus_1: usize,
    pub seed: Option<u64>,
}

/// Counts of the comparisons `s0 = x^T r` against `s1 = x_pi^T r`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Tally {
    pub less: usize,
    pub equal: usize,
    pub greater: usize,
}

impl Tally {
    pub fn push(&mut self, s0: f64, s1: f64) {
        if s0 < s1 {
            self.less += 1;
        } else if s0 == s1 {
            self.equal += 1;
        } else {
            self.greater += 1;
        }
    }

    pub fn total(&self) -> usize {
        self.less + self.equal + self.greater
    }
}

/// Turns the tally over the non-identity elements of an explicit group into a result.
pub fn exact_result(t: Tally, cfg: &PalmrtConfig) -> PalmrtResult {
    let k1 = (t.total() + 1) as f64;
    let phi = (1 + t.less + t.equal) as f64 / k1;
    let phi_tie = (1.0 + t.less as f64 + 0.5 * t.equal as f64) / k1;
    let phi2 = (1 + t.greater + t.equal) as f64 / k1;
    PalmrtResult {
        phi,
        phi_tie,
        phi1: phi,
        phi2,
        reject: decide(phi, phi_tie, phi, phi2, cfg),
        k_plus_1: t.total() + 1,
        seed: None,
    }
}

fn decide(phi: f64, phi_tie: f64, phi1: f64, phi2: f64, cfg: &PalmrtConfig) -> bool {
    let a = cfg.alpha + DECISION_EPS;
    match cfg.sides {
        Sides::One => match cfg.tie_policy {
            TiePolicy::Strict => phi <= a,
            TiePolicy::Half => phi_tie <= a,
        },
        Sides::Two => phi1.min(phi2) <= a,
    }
}

fn check_inputs(x: &Vector, z: &Mat, y: &Vector) -> Result<()> {
    let n = z.nrows();
    if x.len() != n || y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "x has length {}, y has length {}, z has {} rows",
            x.len(),
            y.len(),
            n
        )));
    }
    check_finite_vec(x, "x")?;
    check_finite_vec(y, "y")?;
    check_finite_mat(z, "z")?;
    if 2 * z.ncols() > n {
        log::warn!("p = {} exceeds n / 2 = {}; the 2 alpha guarantee assumes p <= n / 2", z.ncols(), n / 2);
    }
    Ok(())
}

/// Joint residual makers for every non-identity element of an explicit group,
/// built once and reused across responses.
pub struct PalmrtPlan<'g> {
    x: Vector,
    group: &'g ExplicitGroup,
    joints: Vec<JointResidual>,
    /// `P_k x` for every element.
    permuted_x: Vec<Vector>,
}

impl<'g> PalmrtPlan<'g> {
    pub fn new(x: &Vector, z: &Mat, group: &'g ExplicitGroup) -> Result<Self> {
        if group.n() != z.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "group acts on {} indices but z has {} rows",
                group.n(),
                z.nrows()
            )));
        }
        check_inputs(x, z, x)?;
        let projector = DesignProjector::new(z)?;
        let permuted_x = group.elements().iter().map(|p| p.apply_vec(x)).collect::<Result<_>>()?;
        let joints = group.elements().iter().map(|p| projector.joint(p)).collect::<Result<_>>()?;
        Ok(PalmrtPlan { x: x.clone(), group, joints, permuted_x })
    }

    /// `(x^T r_k, x_{pi_k}^T r_k)` with `r_k = (I - H^{[Z, Z_{pi_k}]}) y`, for every element.
    pub fn pair_stats(&self, y: &Vector) -> Result<Vec<(f64, f64)>> {
        if y.len() != self.x.len() {
            return Err(Error::DimensionMismatch("y has the wrong length".into()));
        }
        check_finite_vec(y, "y")?;
        Ok(self
            .joints
            .iter()
            .zip(&self.permuted_x)
            .map(|(j, px)| {
                let r = j.residual(y);
                (self.x.dot(&r), px.dot(&r))
            })
            .collect())
    }

    pub fn group(&self) -> &ExplicitGroup {
        self.group
    }

    pub fn tally(&self, y: &Vector) -> Result<Tally> {
        let mut t = Tally::default();
        for (s0, s1) in self.pair_stats(y)?.into_iter().skip(1) {
            t.push(s0, s1);
        }
        Ok(t)
    }

    pub fn test(&self, y: &Vector, cfg: &PalmrtConfig) -> Result<PalmrtResult> {
        Ok(exact_result(self.tally(y)?, cfg))
    }
}

/// `phi = (1 + #{k >= 1 : x^T r_k <= x_{pi_k}^T r_k}) / (K + 1)`.
pub fn palmrt_phi(x: &Vector, z: &Mat, y: &Vector, g: &ExplicitGroup) -> Result<f64> {
    check_inputs(x, z, y)?;
    Ok(PalmrtPlan::new(x, z, g)?.test(y, &PalmrtConfig::new(0.5, Sides::One)?)?.phi)
}

/// Tie-aware statistic `phi'` with strict comparisons and half weight on ties.
pub fn palmrt_phi_tie(x: &Vector, z: &Mat, y: &Vector, g: &ExplicitGroup) -> Result<f64> {
    check_inputs(x, z, y)?;
    Ok(PalmrtPlan::new(x, z, g)?.test(y, &PalmrtConfig::new(0.5, Sides::One)?)?.phi_tie)
}

/// Full test on an explicit group; the decision follows `cfg.sides`.
pub fn palmrt_test(x: &Vector, z: &Mat, y: &Vector, g: &ExplicitGroup, cfg: &PalmrtConfig) -> Result<PalmrtResult> {
    check_inputs(x, z, y)?;
    PalmrtPlan::new(x, z, g)?.test(y, cfg)
}

/// Two-sided test: reject iff `min(phi_1, phi_2) <= alpha`.
pub fn two_sided_palmrt(x: &Vector, z: &Mat, y: &Vector, g: &ExplicitGroup, alpha: f64) -> Result<PalmrtResult> {
    palmrt_test(x, z, y, g, &PalmrtConfig::new(alpha, Sides::Two)?)
}

/// Estimates the statistics from `m` i.i.d. draws of the group. Every draw,
/// including identity draws, contributes one comparison; there is no leading
/// identity term.
pub fn sampled_palmrt<S: PermSource, R: Rng + ?Sized>(
    x: &Vector,
    z: &Mat,
    y: &Vector,
    source: &S,
    m: usize,
    cfg: &PalmrtConfig,
    rng: &mut R,
) -> Result<PalmrtResult> {
    check_inputs(x, z, y)?;
    if source.n() != z.nrows() {
        return Err(Error::DimensionMismatch("group size differs from number of rows".into()));
    }
    let projector = DesignProjector::new(z)?;
    sampled_with_projector(x, &projector, y, source, m, cfg, rng)
}

pub(crate) fn sampled_with_projector<S: PermSource, R: Rng + ?Sized>(
    x: &Vector,
    projector: &DesignProjector,
    y: &Vector,
    source: &S,
    m: usize,
    cfg: &PalmrtConfig,
    rng: &mut R,
) -> Result<PalmrtResult> {
    let recommended = (1.0 / (cfg.alpha * cfg.alpha)).ceil() as usize;
    if m < recommended {
        log::warn!("m = {m} is below the recommended ceil(1 / alpha^2) = {recommended}");
    }
    let t = sampled_tally(x, projector, y, source, m, rng)?;
    Ok(sampled_result(t, cfg))
}

/// Comparisons over `m` i.i.d. draws from `source`.
pub fn sampled_tally<S: PermSource, R: Rng + ?Sized>(
    x: &Vector,
    projector: &DesignProjector,
    y: &Vector,
    source: &S,
    m: usize,
    rng: &mut R,
) -> Result<Tally> {
    if m == 0 {
        return Err(Error::InvalidInput("m must be positive".into()));
    }
    let mut t = Tally::default();
    for _ in 0..m {
        let p = source.draw(rng);
        let r = projector.joint(&p)?.residual(y);
        let px = p.apply_vec(x)?;
        t.push(x.dot(&r), px.dot(&r));
    }
    Ok(t)
}

/// Sampled estimates from a tally over i.i.d. draws.
pub fn sampled_result(t: Tally, cfg: &PalmrtConfig) -> PalmrtResult {
    let mf = t.total() as f64;
    let phi1 = (t.less + t.equal) as f64 / mf;
    let phi2 = (t.greater + t.equal) as f64 / mf;
    let phi_tie = (t.less as f64 + 0.5 * t.equal as f64) / mf;
    PalmrtResult {
        phi: phi1,
        phi_tie,
        phi1,
        phi2,
        reject: decide(phi1, phi_tie, phi1, phi2, cfg),
        k_plus_1: t.total(),
        seed: None,
    }
}

/// `F(pi_1, pi_2; x, Z, e) = x_{pi_1}^T (I - H^{[Z_{pi_1}, Z_{pi_2}]}) e`,
/// computed directly from the stacked permuted designs.
pub fn bivariate_f(x: &Vector, z: &Mat, e: &Vector, pi1: &Perm, pi2: &Perm) -> Result<f64> {
    check_inputs(x, z, e)?;
    let z1 = pi1.apply_rows(z)?;
    let z2 = pi2.apply_rows(z)?;
    let r = orthonormal_basis(&hstack(&z1, &z2))?.residual(e)?;
    Ok(pi1.apply_vec(x)?.dot(&r))
}

/// Pairwise comparisons `r_ab = 1{F_ab < F_ba} + 1/2 1{F_ab = F_ba}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonMatrix {
    r: Vec<Vec<f64>>,
}

impl ComparisonMatrix {
    pub fn size(&self) -> usize {
        self.r.len()
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.r[a][b]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.r
    }

    /// `R_a = (1 / (K + 1)) sum_b r_ab`.
    pub fn row_mean(&self, a: usize) -> f64 {
        self.r[a].iter().sum::<f64>() / self.size() as f64
    }
}

/// Builds the comparison matrix. Each unordered pair shares one projector:
/// with `c = a^{-1} o b` and `y' = P_a^T y`, `F_ab = x^T r` and `F_ba = x_c^T r`
/// where `r = (I - H^{[Z, Z_c]}) y'`.
pub fn comparison_matrix(x: &Vector, z: &Mat, y: &Vector, g: &ExplicitGroup) -> Result<ComparisonMatrix> {
    check_inputs(x, z, y)?;
    if g.n() != z.nrows() {
        return Err(Error::DimensionMismatch("group size differs from number of rows".into()));
    }
    let projector = DesignProjector::new(z)?;
    let els = g.elements();
    let k1 = els.len();
    let mut r = vec![vec![0.5; k1]; k1];
    for a in 0..k1 {
        let inv_a = els[a].inverse();
        let y_a = els[a].apply_vec_transpose(y)?;
        for b in (a + 1)..k1 {
            let c = inv_a.compose(&els[b])?;
            let res = projector.joint(&c)?.residual(&y_a);
            let f_ab = x.dot(&res);
            let f_ba = c.apply_vec(x)?.dot(&res);
            let v = if f_ab < f_ba {
                1.0
            } else if f_ab == f_ba {
                0.5
            } else {
                0.0
            };
            r[a][b] = v;
            r[b][a] = 1.0 - v;
        }
    }
    Ok(ComparisonMatrix { r })
}

/// The five-point instance on which the `2 alpha` bound is attained:
/// `Z = (e_1, e_2)`, `X = 1`, and the cyclic group of order 5.
pub fn sharpness_instance() -> (Vector, Mat, ExplicitGroup) {
    let n = 5;
    let mut z = Mat::zeros(n, 2);
    z[(0, 0)] = 1.0;
    z[(1, 1)] = 1.0;
    let x = Vector::from_element(n, 1.0);
    (x, z, full_cycle_group(n).expect("n > 0"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perm::verify_group;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gauss_vec(n: usize, rng: &mut ChaCha8Rng) -> Vector {
        Vector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)))
    }

    fn gauss_mat(n: usize, p: usize, rng: &mut ChaCha8Rng) -> Mat {
        Mat::from_iterator(n, p, (0..n * p).map(|_| StandardNormal.sample(rng)))
    }

    #[test]
    fn identity_group_gives_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (x, z, y) = (gauss_vec(6, &mut rng), gauss_mat(6, 2, &mut rng), gauss_vec(6, &mut rng));
        let g = verify_group(6, vec![Perm::identity(6)]).unwrap();
        assert_eq!(palmrt_phi(&x, &z, &y, &g).unwrap(), 1.0);
        assert_eq!(palmrt_phi_tie(&x, &z, &y, &g).unwrap(), 1.0);
        let res = two_sided_palmrt(&x, &z, &y, &g, 0.2).unwrap();
        assert_eq!((res.phi1, res.phi2, res.reject), (1.0, 1.0, false));
        let m = comparison_matrix(&x, &z, &y, &g).unwrap();
        assert_eq!(m.rows(), &[vec![0.5]]);
    }

    #[test]
    fn sharpness_instance_shape() {
        let (x, z, g) = sharpness_instance();
        assert_eq!(g.order(), 5);
        assert_eq!(x.len(), 5);
        let h = orthonormal_basis(&z).unwrap().projector();
        let mut expect = Mat::zeros(5, 5);
        expect[(0, 0)] = 1.0;
        expect[(1, 1)] = 1.0;
        assert!((h - expect).abs().max() < 1e-12);
    }

    #[test]
    fn two_sided_flips_with_sign_of_x() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = full_cycle_group(9).unwrap();
        for _ in 0..20 {
            let (x, z, y) = (gauss_vec(9, &mut rng), gauss_mat(9, 2, &mut rng), gauss_vec(9, &mut rng));
            let a = two_sided_palmrt(&x, &z, &y, &g, 0.1).unwrap();
            let b = two_sided_palmrt(&(-&x), &z, &y, &g, 0.1).unwrap();
            assert_eq!(a.phi2, b.phi1);
        }
    }

    #[test]
    fn sampled_singletons_is_identity_comparison() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (x, z, y) = (gauss_vec(8, &mut rng), gauss_mat(8, 2, &mut rng), gauss_vec(8, &mut rng));
        let bg = crate::perm::BlockGroup::new(8, (0..8).map(|i| vec![i]).collect()).unwrap();
        let cfg = PalmrtConfig::new(0.1, Sides::Two).unwrap();
        let res = sampled_palmrt(&x, &z, &y, &bg, 50, &cfg, &mut rng).unwrap();
        assert_eq!((res.phi1, res.phi2, res.phi_tie), (1.0, 1.0, 0.5));
    }

    #[test]
    fn decision_thresholds() {
        let t = Tally { less: 0, equal: 0, greater: 19 };
        let cfg = PalmrtConfig::new(0.05, Sides::One).unwrap();
        let r = exact_result(t, &cfg);
        assert_eq!(r.k_plus_1, 20);
        assert!(r.reject);
        let r = exact_result(Tally { less: 1, equal: 0, greater: 18 }, &cfg);
        assert!(!r.reject);
    }
}
