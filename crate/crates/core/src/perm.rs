//! Permutations, explicit permutation groups and block-product groups.
//!
//! A [`Perm`] stores the image of each index. Acting on rows, `P_a` sends row
//! `j` of its argument to row `a(j)`, so `(P_a m)[a(j)] = m[j]` and
//! `P_{a o b} = P_a P_b`.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};

/// Upper bound on the number of elements materialized by [`BlockGroup::enumerate`].
pub const ENUMERATE_LIMIT: u128 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Perm {
    map: Vec<usize>,
}

impl Perm {
    pub fn identity(n: usize) -> Self {
        Perm { map: (0..n).collect() }
    }

    /// Builds a permutation from its images `map[j] = a(j)` (0-based).
    pub fn from_images(map: Vec<usize>) -> Result<Self> {
        let n = map.len();
        let mut seen = vec![false; n];
        for &v in &map {
            if v >= n || seen[v] {
                return Err(Error::InvalidPermutation(format!("{map:?} is not a bijection of 0..{n}")));
            }
            seen[v] = true;
        }
        Ok(Perm { map })
    }

    pub fn n(&self) -> usize {
        self.map.len()
    }

    pub fn image(&self, j: usize) -> usize {
        self.map[j]
    }

    pub fn images(&self) -> &[usize] {
        &self.map
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &v)| i == v)
    }

    /// `self o other`, i.e. `j -> self(other(j))`.
    pub fn compose(&self, other: &Perm) -> Result<Perm> {
        self.check_n(other.n())?;
        Ok(Perm { map: other.map.iter().map(|&j| self.map[j]).collect() })
    }

    pub fn inverse(&self) -> Perm {
        let mut inv = vec![0; self.n()];
        for (j, &v) in self.map.iter().enumerate() {
            inv[v] = j;
        }
        Perm { map: inv }
    }

    /// `P_self m`: row `j` of `m` lands in row `self(j)`.
    pub fn apply_rows(&self, m: &Mat) -> Result<Mat> {
        self.check_n(m.nrows())?;
        let mut out = Mat::zeros(m.nrows(), m.ncols());
        for c in 0..m.ncols() {
            for (j, &t) in self.map.iter().enumerate() {
                out[(t, c)] = m[(j, c)];
            }
        }
        Ok(out)
    }

    pub fn apply_vec(&self, v: &Vector) -> Result<Vector> {
        self.check_n(v.len())?;
        let mut out = Vector::zeros(v.len());
        for (j, &t) in self.map.iter().enumerate() {
            out[t] = v[j];
        }
        Ok(out)
    }

    /// `P_self^T v`, equivalently `P_{self^{-1}} v`.
    pub fn apply_vec_transpose(&self, v: &Vector) -> Result<Vector> {
        self.check_n(v.len())?;
        Ok(Vector::from_iterator(v.len(), self.map.iter().map(|&t| v[t])))
    }

    /// Dense permutation matrix.
    pub fn matrix(&self) -> Mat {
        let mut m = Mat::zeros(self.n(), self.n());
        for (j, &t) in self.map.iter().enumerate() {
            m[(t, j)] = 1.0;
        }
        m
    }

    fn check_n(&self, n: usize) -> Result<()> {
        if n != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "permutation of size {} applied to dimension {n}",
                self.n()
            )));
        }
        Ok(())
    }
}

/// Source of permutations drawn uniformly from some group.
pub trait PermSource: Sync {
    fn n(&self) -> usize;
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Perm;
}

/// A finite permutation group stored element by element. Element 0 is the identity.
#[derive(Clone, Debug)]
pub struct ExplicitGroup {
    n: usize,
    elements: Vec<Perm>,
    index: HashMap<Vec<usize>, usize>,
}

impl ExplicitGroup {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn elements(&self) -> &[Perm] {
        &self.elements
    }

    /// Number of elements, `K + 1`.
    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn index_of(&self, p: &Perm) -> Option<usize> {
        self.index.get(&p.map).copied()
    }

    /// Index of `elements[j] o elements[k]`.
    pub fn compose_index(&self, j: usize, k: usize) -> usize {
        let c = self.elements[j].compose(&self.elements[k]).expect("same n");
        self.index_of(&c).expect("closed")
    }
}

impl PermSource for ExplicitGroup {
    fn n(&self) -> usize {
        self.n
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Perm {
        self.elements[rng.random_range(0..self.elements.len())].clone()
    }
}

/// Checks closure under composition and returns the group with the identity first.
pub fn verify_group(n: usize, perms: Vec<Perm>) -> Result<ExplicitGroup> {
    if perms.is_empty() {
        return Err(Error::EmptyGroup);
    }
    let mut index = HashMap::with_capacity(perms.len());
    for (i, p) in perms.iter().enumerate() {
        if p.n() != n {
            return Err(Error::DimensionMismatch(format!("element {i} has size {} but n = {n}", p.n())));
        }
        if let Some(&j) = index.get(&p.map) {
            return Err(Error::DuplicateElement(j, i));
        }
        index.insert(p.map.clone(), i);
    }
    let mut scratch = vec![0usize; n];
    for (i, a) in perms.iter().enumerate() {
        for (j, b) in perms.iter().enumerate() {
            for (s, &t) in b.map.iter().enumerate() {
                scratch[s] = a.map[t];
            }
            if !index.contains_key(&scratch) {
                return Err(Error::ClosureViolation(i, j));
            }
        }
    }
    let mut elements = perms;
    // a finite set closed under composition always contains the identity
    let id = index[&(0..n).collect::<Vec<_>>()];
    elements.swap(0, id);
    let index = elements.iter().enumerate().map(|(i, p)| (p.map.clone(), i)).collect();
    Ok(ExplicitGroup { n, elements, index })
}

/// The cyclic group generated by `(x_1, ..., x_n) -> (x_n, x_1, ..., x_{n-1})`.
pub fn full_cycle_group(n: usize) -> Result<ExplicitGroup> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    let perms = (0..n).map(|i| Perm { map: (0..n).map(|j| (j + i) % n).collect() }).collect();
    verify_group(n, perms)
}

/// Cyclic shifts of `m + 1` contiguous blocks of length `floor(n / (m + 1))`;
/// trailing indices stay fixed. Element `j` moves block `j + 1` to the front.
pub fn left_shift_group(n: usize, m: usize) -> Result<ExplicitGroup> {
    if m + 1 > n {
        return Err(Error::InvalidInput(format!("need m + 1 <= n, got m = {m}, n = {n}")));
    }
    let blocks = m + 1;
    let t = n / blocks;
    let span = blocks * t;
    let perms = (0..blocks)
        .map(|j| {
            let map = (0..n)
                .map(|s| {
                    if s < span {
                        let nb = (s / t + blocks - j) % blocks;
                        nb * t + s % t
                    } else {
                        s
                    }
                })
                .collect();
            Perm { map }
        })
        .collect();
    verify_group(n, perms)
}

/// Direct product of the symmetric groups on disjoint blocks covering `0..n`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockGroup {
    n: usize,
    blocks: Vec<Vec<usize>>,
}

impl BlockGroup {
    pub fn new(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; n];
        for b in &blocks {
            if b.is_empty() {
                return Err(Error::BadBlocks("empty block".into()));
            }
            for &i in b {
                if i >= n {
                    return Err(Error::BadBlocks(format!("index {i} out of range for n = {n}")));
                }
                if seen[i] {
                    return Err(Error::BadBlocks(format!("index {i} appears twice")));
                }
                seen[i] = true;
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::BadBlocks(format!("index {i} is not covered")));
        }
        Ok(BlockGroup { n, blocks })
    }

    /// One block containing every index.
    pub fn full(n: usize) -> Self {
        BlockGroup { n, blocks: vec![(0..n).collect()] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// Group order `prod |S_i|!`, saturating at `u128::MAX`.
    pub fn order(&self) -> u128 {
        let mut total: u128 = 1;
        for b in &self.blocks {
            for k in 2..=b.len() as u128 {
                total = total.saturating_mul(k);
            }
        }
        total
    }

    /// Uniform draw: independent uniform permutations within each block.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Perm {
        let mut map: Vec<usize> = (0..self.n).collect();
        let mut shuffled = Vec::new();
        for b in &self.blocks {
            if b.len() < 2 {
                continue;
            }
            shuffled.clear();
            shuffled.extend_from_slice(b);
            shuffled.shuffle(rng);
            for (&src, &dst) in b.iter().zip(shuffled.iter()) {
                map[src] = dst;
            }
        }
        Perm { map }
    }

    /// All elements as an explicit group, identity first.
    pub fn enumerate(&self) -> Result<ExplicitGroup> {
        let order = self.order();
        if order > ENUMERATE_LIMIT {
            return Err(Error::TooLarge(order, ENUMERATE_LIMIT));
        }
        let per_block: Vec<Vec<Vec<usize>>> = self.blocks.iter().map(|b| lex_permutations(b)).collect();
        let mut digits = vec![0usize; self.blocks.len()];
        let mut perms = Vec::with_capacity(order as usize);
        loop {
            let mut map: Vec<usize> = (0..self.n).collect();
            for (bi, b) in self.blocks.iter().enumerate() {
                for (&src, &dst) in b.iter().zip(per_block[bi][digits[bi]].iter()) {
                    map[src] = dst;
                }
            }
            perms.push(Perm { map });
            let mut pos = 0;
            loop {
                if pos == digits.len() {
                    return verify_group(self.n, perms);
                }
                digits[pos] += 1;
                if digits[pos] < per_block[pos].len() {
                    break;
                }
                digits[pos] = 0;
                pos += 1;
            }
        }
    }
}

impl PermSource for BlockGroup {
    fn n(&self) -> usize {
        self.n
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Perm {
        self.sample(rng)
    }
}

/// Every ordering of `items`, starting from `items` itself, in lexicographic
/// order of positions.
fn lex_permutations(items: &[usize]) -> Vec<Vec<usize>> {
    let k = items.len();
    let mut idx: Vec<usize> = (0..k).collect();
    let mut out = vec![items.to_vec()];
    loop {
        let Some(i) = (1..k).rev().find(|&i| idx[i - 1] < idx[i]) else {
            return out;
        };
        let j = (i..k).rev().find(|&j| idx[j] > idx[i - 1]).expect("pivot exists");
        idx.swap(i - 1, j);
        idx[i..].reverse();
        out.push(idx.iter().map(|&t| items[t]).collect());
    }
}
