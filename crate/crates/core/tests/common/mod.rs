#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use permtest::perm::Perm;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss_vec<R: Rng>(n: usize, rng: &mut R) -> Vector {
    Vector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

pub fn gauss_mat<R: Rng>(n: usize, p: usize, rng: &mut R) -> Mat {
    Mat::from_fn(n, p, |_, _| StandardNormal.sample(rng))
}

pub fn random_perm<R: Rng>(n: usize, rng: &mut R) -> Perm {
    let mut map: Vec<usize> = (0..n).collect();
    map.shuffle(rng);
    Perm::from_images(map).unwrap()
}

/// Projector onto `col(m)` through the Moore-Penrose pseudo-inverse of the
/// Gram matrix; independent of the QR/SVD basis used by the library.
pub fn pinv_projector(m: &Mat) -> Mat {
    if m.ncols() == 0 {
        return Mat::zeros(m.nrows(), m.nrows());
    }
    let gram = m.transpose() * m;
    let scale = gram.amax().max(1.0);
    let pinv = gram.pseudo_inverse(1e-10 * scale).unwrap();
    m * pinv * m.transpose()
}

pub fn hstack(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// `P_pi M` from the permutation matrix.
pub fn permute(p: &Perm, m: &Mat) -> Mat {
    p.matrix() * m
}

pub fn permute_vec(p: &Perm, v: &Vector) -> Vector {
    p.matrix() * v
}

/// Straight-line `(x^T r, x_pi^T r)` with `r = (I - H^{[Z, P Z]}) y`.
pub fn pair_oracle(x: &Vector, z: &Mat, y: &Vector, p: &Perm) -> (f64, f64) {
    let n = x.len();
    let h = pinv_projector(&hstack(z, &permute(p, z)));
    let r = (Mat::identity(n, n) - h) * y;
    (x.dot(&r), permute_vec(p, x).dot(&r))
}

/// `phi` and `phi'` from the printed formulas.
pub fn phi_oracle(x: &Vector, z: &Mat, y: &Vector, elements: &[Perm]) -> (f64, f64) {
    let k1 = elements.len() as f64;
    let (mut le, mut tie) = (1.0, 1.0);
    for p in &elements[1..] {
        let (s0, s1) = pair_oracle(x, z, y, p);
        if s0 <= s1 {
            le += 1.0;
        }
        if s0 < s1 {
            tie += 1.0;
        } else if s0 == s1 {
            tie += 0.5;
        }
    }
    (le / k1, tie / k1)
}

/// `F(pi_1, pi_2; x, Z, e) = x_{pi_1}^T (I - H^{[Z_{pi_1}, Z_{pi_2}]}) e`.
pub fn f_oracle(x: &Vector, z: &Mat, e: &Vector, p1: &Perm, p2: &Perm) -> f64 {
    let n = x.len();
    let h = pinv_projector(&hstack(&permute(p1, z), &permute(p2, z)));
    permute_vec(p1, x).dot(&((Mat::identity(n, n) - h) * e))
}

/// Cumulative-sum quantile `inf{v : sum_{values <= v} w >= tau}`.
pub fn quantile_oracle(values: &[f64], weights: &[f64], tau: f64) -> f64 {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut acc = 0.0;
    for (pos, &i) in idx.iter().enumerate() {
        acc += weights[i];
        let last_of_value = pos + 1 == idx.len() || values[idx[pos + 1]] != values[i];
        if last_of_value && acc >= tau - 1e-12 {
            return values[i];
        }
    }
    values[idx[idx.len() - 1]]
}
