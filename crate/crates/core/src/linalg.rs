//! Dense linear algebra used by every test: orthonormal bases, projections,
//! residuals and the joint projector for a design and its permuted copy.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, SVD};

use crate::error::{Error, Result};
use crate::perm::Perm;

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative singular-value cutoff for numerical rank.
pub const RANK_TOL: f64 = 1e-10;

/// Smallest eigenvalue of the joint Gram matrix accepted by the fast path.
const GRAM_CERTIFY: f64 = 1e-6;

pub(crate) fn check_finite_mat(m: &Mat, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

pub(crate) fn check_finite_vec(v: &Vector, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Orthonormal basis of a column space.
#[derive(Clone, Debug)]
pub struct ProjectionBasis {
    basis: Mat,
}

impl ProjectionBasis {
    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// The `ambient_dim x rank` matrix with orthonormal columns.
    pub fn basis(&self) -> &Mat {
        &self.basis
    }

    pub fn project(&self, y: &Vector) -> Result<Vector> {
        self.check_len(y)?;
        if self.rank() == 0 {
            return Ok(Vector::zeros(y.len()));
        }
        let coords = self.basis.tr_mul(y);
        Ok(&self.basis * coords)
    }

    pub fn residual(&self, y: &Vector) -> Result<Vector> {
        Ok(y - self.project(y)?)
    }

    /// Dense projector `Q Q^T`.
    pub fn projector(&self) -> Mat {
        &self.basis * self.basis.transpose()
    }

    fn check_len(&self, y: &Vector) -> Result<()> {
        if y.len() != self.ambient_dim() {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} against basis of ambient dimension {}",
                y.len(),
                self.ambient_dim()
            )));
        }
        Ok(())
    }
}

/// Orthonormal basis of `col(m)` via thin QR followed by an SVD of `R`.
/// Singular values below `RANK_TOL * sigma_max` are discarded.
pub fn orthonormal_basis(m: &Mat) -> Result<ProjectionBasis> {
    basis_with_cutoff(m, None)
}

/// Same as [`orthonormal_basis`] but with the cutoff measured against a
/// caller-supplied scale instead of the largest singular value.
pub fn orthonormal_basis_scaled(m: &Mat, scale: f64) -> Result<ProjectionBasis> {
    basis_with_cutoff(m, Some(scale))
}

fn basis_with_cutoff(m: &Mat, scale: Option<f64>) -> Result<ProjectionBasis> {
    if m.nrows() == 0 {
        return Err(Error::InvalidInput("matrix has no rows".into()));
    }
    check_finite_mat(m, "matrix")?;
    let n = m.nrows();
    if m.ncols() == 0 {
        return Ok(ProjectionBasis { basis: Mat::zeros(n, 0) });
    }
    let qr = m.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let (u, sigma) = left_singular(&r);
    let sigma = &sigma;
    let smax = sigma.iter().cloned().fold(0.0_f64, f64::max);
    let reference = scale.unwrap_or(smax);
    if smax == 0.0 || reference <= 0.0 {
        return Ok(ProjectionBasis { basis: Mat::zeros(n, 0) });
    }
    let cutoff = RANK_TOL * reference;
    let keep: Vec<usize> = (0..sigma.len()).filter(|&i| sigma[i] > cutoff).collect();
    let u_keep = u.select_columns(keep.iter());
    Ok(ProjectionBasis { basis: q * u_keep })
}

/// Left singular vectors and singular values of `m`, with the factorization
/// checked against `m`. nalgebra's bidiagonal SVD occasionally stalls on
/// rank-deficient triangular input and returns a visibly wrong factorization,
/// so a failed check retries on the transpose and then on a column-pivoted QR.
pub(crate) fn left_singular(m: &Mat) -> (Mat, Vector) {
    let tol = 1e-9 * m.amax().max(f64::MIN_POSITIVE);
    let svd = SVD::new(m.clone(), true, true);
    if let (Some(u), Some(vt)) = (&svd.u, &svd.v_t) {
        if (u * Mat::from_diagonal(&svd.singular_values) * vt - m).amax() <= tol {
            return (u.clone(), svd.singular_values);
        }
    }
    let t = m.transpose();
    let svd = SVD::new(t.clone(), true, true);
    if let (Some(u), Some(vt)) = (&svd.u, &svd.v_t) {
        if (u * Mat::from_diagonal(&svd.singular_values) * vt - &t).amax() <= tol {
            log::debug!("SVD retried on the transpose");
            return (vt.transpose(), svd.singular_values);
        }
    }
    log::debug!("SVD fell back to column-pivoted QR");
    let qr = m.clone().col_piv_qr();
    let k = m.nrows().min(m.ncols());
    let r = qr.r();
    let sigma = Vector::from_iterator(k, (0..k).map(|i| r[(i, i)].abs()));
    (qr.q().columns(0, k).clone_owned(), sigma)
}

/// `H^M y`.
pub fn project(m: &Mat, y: &Vector) -> Result<Vector> {
    check_rows(m, y)?;
    orthonormal_basis(m)?.project(y)
}

/// `(I - H^M) y`.
pub fn residual(m: &Mat, y: &Vector) -> Result<Vector> {
    check_rows(m, y)?;
    check_finite_vec(y, "vector")?;
    orthonormal_basis(m)?.residual(y)
}

/// `x^T (I - H^{[z, z_perm]}) y` computed from the stacked matrix.
pub fn joint_stat(x: &Vector, z: &Mat, z_perm: &Mat, y: &Vector) -> Result<f64> {
    if z.shape() != z_perm.shape() {
        return Err(Error::DimensionMismatch("z and z_perm differ in shape".into()));
    }
    check_rows(z, x)?;
    check_rows(z, y)?;
    let stacked = hstack(z, z_perm);
    let r = orthonormal_basis(&stacked)?.residual(y)?;
    Ok(x.dot(&r))
}

/// Squared row norms of an orthonormal basis of `col(z)`: `b_i = ||H^Z e_i||^2`.
pub fn leverage_norms(z: &Mat) -> Result<Vector> {
    let q = orthonormal_basis(z)?;
    Ok(row_norms_sq(q.basis()))
}

pub(crate) fn row_norms_sq(q: &Mat) -> Vector {
    let mut out = Vector::zeros(q.nrows());
    for c in 0..q.ncols() {
        for r in 0..q.nrows() {
            out[r] += q[(r, c)] * q[(r, c)];
        }
    }
    out
}

/// Serializes a vector as a plain JSON array.
pub fn serialize_vector<S: serde::Serializer>(v: &Vector, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter())
}

pub fn hstack(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

fn check_rows(m: &Mat, y: &Vector) -> Result<()> {
    if m.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} rows, vector has length {}",
            m.nrows(),
            y.len()
        )));
    }
    Ok(())
}

/// Orthonormal basis of the nuisance design, reused across many permutations.
#[derive(Clone, Debug)]
pub struct DesignProjector {
    q: Arc<Mat>,
}

/// Residual maker for `span([Z, P Z])`.
#[derive(Clone, Debug)]
pub struct JointResidual {
    q: Arc<Mat>,
    kind: JointKind,
}

#[derive(Clone, Debug)]
enum JointKind {
    /// `u = P Q`, `c = Q^T u`, Cholesky of `I - c^T c`.
    Gram { u: Mat, c: Mat, chol: Cholesky<f64, nalgebra::Dyn> },
    /// Orthonormal basis of `(I - H^Z) P Q`.
    Extension(Mat),
}

impl DesignProjector {
    pub fn new(z: &Mat) -> Result<Self> {
        Ok(DesignProjector { q: Arc::new(orthonormal_basis(z)?.basis) })
    }

    pub fn from_basis(basis: ProjectionBasis) -> Self {
        DesignProjector { q: Arc::new(basis.basis) }
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    pub fn rank(&self) -> usize {
        self.q.ncols()
    }

    pub fn basis(&self) -> &Mat {
        &self.q
    }

    /// `(I - H^Z) y`.
    pub fn residual(&self, y: &Vector) -> Vector {
        if self.rank() == 0 {
            return y.clone();
        }
        y - &*self.q * self.q.tr_mul(y)
    }

    /// Projector onto `span([Z, P_perm Z])`.
    ///
    /// When the principal angles between `span(Z)` and its permuted copy stay
    /// away from zero the residual is formed through a small Gram system;
    /// otherwise the extension of the basis is computed exactly by SVD.
    pub fn joint(&self, perm: &Perm) -> Result<JointResidual> {
        if perm.n() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "permutation of size {} against design with {} rows",
                perm.n(),
                self.n()
            )));
        }
        let r = self.rank();
        if r == 0 {
            return Ok(JointResidual { q: self.q.clone(), kind: JointKind::Extension(Mat::zeros(self.n(), 0)) });
        }
        let u = perm.apply_rows(&self.q)?;
        let c = self.q.tr_mul(&u);
        let g = Mat::identity(r, r) - c.tr_mul(&c);
        let mut shifted = g.clone();
        for i in 0..r {
            shifted[(i, i)] -= GRAM_CERTIFY;
        }
        if Cholesky::new(shifted).is_some() {
            if let Some(chol) = Cholesky::new(g) {
                return Ok(JointResidual { q: self.q.clone(), kind: JointKind::Gram { u, c, chol } });
            }
        }
        let q: &Mat = &self.q;
        let mut w = &u - q * &c;
        // second Gram-Schmidt pass keeps w orthogonal to span(Z) at rounding level
        let corr = q * q.tr_mul(&w);
        w -= corr;
        let ext = orthonormal_basis_scaled(&w, 1.0)?;
        Ok(JointResidual { q: self.q.clone(), kind: JointKind::Extension(ext.basis) })
    }
}

impl JointResidual {
    /// Dimension of `span([Z, P Z])`.
    pub fn rank(&self) -> usize {
        self.q.ncols()
            + match &self.kind {
                JointKind::Gram { c, .. } => c.ncols(),
                JointKind::Extension(e) => e.ncols(),
            }
    }

    pub fn uses_gram(&self) -> bool {
        matches!(self.kind, JointKind::Gram { .. })
    }

    /// `(I - H^{[Z, P Z]}) y`.
    pub fn residual(&self, y: &Vector) -> Vector {
        let q: &Mat = &self.q;
        let y1 = if q.ncols() == 0 { y.clone() } else { y - q * q.tr_mul(y) };
        match &self.kind {
            JointKind::Gram { u, c, chol } => {
                let qy = q.tr_mul(&y1);
                let t = u.tr_mul(&y1) - c.tr_mul(&qy);
                let beta = chol.solve(&t);
                let cb = c * &beta;
                y1 - u * beta + q * cb
            }
            JointKind::Extension(e) => {
                if e.ncols() == 0 {
                    y1
                } else {
                    let coords = e.tr_mul(&y1);
                    y1 - e * coords
                }
            }
        }
    }
}
