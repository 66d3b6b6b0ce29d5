//! Combinatorial steps of the group construction: Remove, Scale, Rearrange
//! and the two set-partitioning rules.

use rand::Rng;

use crate::error::{Error, Result};

use super::{DesignProfile, OptimizerConfig};

/// Greedy sign-balancing removal.
///
/// Takes elements one at a time, from the positive side while the sum of the
/// remaining `a` is positive and from the negative side otherwise, until the
/// accumulated `|b|` reaches `s_target`. Ties in the choice are broken by
/// input order.
///
/// Always `|sum_{I} |b_i| - s_target| <= max |b_i|`. The second printed bound
/// `|sum_{not I} a_i| <= max(|sum_I a_i|, max |a_i|)` is guaranteed when
/// `|sum a_i| <= max |a_i|`, since the remaining sum then never leaves
/// `[-max |a_i|, max |a_i|]`.
pub fn remove(pairs: &[(f64, f64)], s_target: f64) -> Result<Vec<usize>> {
    let total_b: f64 = pairs.iter().map(|p| p.1.abs()).sum();
    if !(s_target >= 0.0) || s_target > total_b * (1.0 + 1e-12) {
        return Err(Error::InvalidInput(format!("remove target {s_target} outside [0, {total_b}]")));
    }
    let mut pos: std::collections::VecDeque<usize> = (0..pairs.len()).filter(|&i| pairs[i].0 >= 0.0).collect();
    let mut neg: std::collections::VecDeque<usize> = (0..pairs.len()).filter(|&i| pairs[i].0 < 0.0).collect();
    let mut rest_a: f64 = pairs.iter().map(|p| p.0).sum();
    let mut sum_b = 0.0;
    let mut taken = Vec::new();
    while !(pos.is_empty() && neg.is_empty()) {
        let i = if neg.is_empty() || (!pos.is_empty() && rest_a > 0.0) {
            pos.pop_front()
        } else {
            neg.pop_front()
        }
        .expect("one side is nonempty");
        taken.push(i);
        rest_a -= pairs[i].0;
        sum_b += pairs[i].1.abs();
        if sum_b >= s_target {
            break;
        }
    }
    Ok(taken)
}

/// Centers both coordinates and multiplies them by `factors`.
pub fn scale(pairs: &[(f64, f64)], factors: (f64, f64)) -> Vec<(f64, f64)> {
    if pairs.is_empty() {
        return Vec::new();
    }
    let k = pairs.len() as f64;
    let ma = pairs.iter().map(|p| p.0).sum::<f64>() / k;
    let mb = pairs.iter().map(|p| p.1).sum::<f64>() / k;
    pairs.iter().map(|&(a, b)| (factors.0 * (a - ma), factors.1 * (b - mb))).collect()
}

/// Largest subset found by sign-balanced growth, smallest `|a|` first, with
/// `|sum a| <= bound`.
pub(crate) fn balanced_subset(idx: &[usize], a: &[f64], bound: f64) -> Vec<usize> {
    let mut pos: Vec<usize> = idx.iter().copied().filter(|&i| a[i] >= 0.0).collect();
    let mut neg: Vec<usize> = idx.iter().copied().filter(|&i| a[i] < 0.0).collect();
    pos.sort_by(|&i, &j| a[i].abs().total_cmp(&a[j].abs()).then(i.cmp(&j)));
    neg.sort_by(|&i, &j| a[i].abs().total_cmp(&a[j].abs()).then(i.cmp(&j)));
    let (mut pi, mut ni) = (0, 0);
    let mut sum = 0.0;
    let mut out = Vec::new();
    loop {
        let prefer_neg = sum > 0.0;
        let order = if prefer_neg { [1, 0] } else { [0, 1] };
        let mut added = false;
        for side in order {
            let next = if side == 0 { pos.get(pi) } else { neg.get(ni) };
            if let Some(&i) = next {
                if (sum + a[i]).abs() <= bound {
                    sum += a[i];
                    out.push(i);
                    if side == 0 {
                        pi += 1;
                    } else {
                        ni += 1;
                    }
                    added = true;
                    break;
                }
            }
        }
        if !added {
            return out;
        }
    }
}

/// Output of [`rearrange`]: the three index sets and their scaled pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct Rearranged {
    pub j: [Vec<usize>; 3],
    pub pairs: [Vec<(f64, f64)>; 3],
}

pub(crate) fn ceil_pow(n: usize, e: f64) -> usize {
    (n as f64).powf(e).ceil() as usize
}

/// Moves elements of `i2`, `i3` into the first set until the sums of `a` and
/// of `c - c_bar` over each set are balanced, then scales each set by
/// `(1, 1/sqrt(M))`. Small second or third sets are merged into the first.
pub fn rearrange(profile: &DesignProfile, i1: &[usize], i2: &[usize], i3: &[usize], cfg: &OptimizerConfig) -> Rearranged {
    let n = profile.a.len();
    let a = profile.a.as_slice();
    let c = profile.c.as_slice();
    let cbar = profile.c_bar;
    let mmax = profile.m_max;
    let s = profile.s;
    let root_s = s.sqrt();

    let mut p2 = balanced_subset(i2, a, root_s);
    let mut p3 = balanced_subset(i3, a, root_s);
    let mut in23 = vec![false; n];
    for &i in p2.iter().chain(&p3) {
        in23[i] = true;
    }
    let mut p1: Vec<usize> = (0..n).filter(|&i| !in23[i]).collect();
    debug_assert!(i1.iter().all(|&i| !in23[i]));

    let sum_a_j: f64 = p1.iter().map(|&i| a[i]).sum();
    let sum_c_j: f64 = p1.iter().map(|&i| c[i] - cbar).sum();
    if sum_a_j * sum_a_j + sum_c_j * sum_c_j / mmax > 8.0 * s {
        let from = if sum_c_j > 0.0 { &mut p2 } else { &mut p3 };
        let pairs: Vec<(f64, f64)> = from.iter().map(|&i| (a[i], c[i] - cbar)).collect();
        let cap: f64 = pairs.iter().map(|p| p.1.abs()).sum();
        let target = sum_c_j.abs().min(cap);
        let moved = remove(&pairs, target).expect("target clamped into range");
        let mut flag = vec![false; from.len()];
        for &k in &moved {
            flag[k] = true;
            p1.push(from[k]);
        }
        let kept: Vec<usize> = from.iter().zip(&flag).filter(|(_, &f)| !f).map(|(&i, _)| i).collect();
        *from = kept;
    }

    if p1.len() < ceil_pow(n, cfg.split_exponent) {
        let floor = ceil_pow(n, cfg.topup_exponent);
        let sums = |set: &[usize]| -> (f64, f64) {
            set.iter().fold((0.0, 0.0), |(sa, sc), &i| (sa + a[i], sc + c[i] - cbar))
        };
        while p1.len() < floor && !(p2.is_empty() && p3.is_empty()) {
            let (a2, c2) = sums(&p2);
            let (a3, c3) = sums(&p3);
            let score = |a2: f64, c2: f64, a3: f64, c3: f64| a2 * a2 + a3 * a3 + (c2 * c2 + c3 * c3) / mmax;
            let mut best: Option<(f64, usize, usize)> = None;
            for (side, set) in [(2usize, &p2), (3usize, &p3)] {
                for (k, &i) in set.iter().enumerate() {
                    let v = if side == 2 {
                        score(a2 - a[i], c2 - (c[i] - cbar), a3, c3)
                    } else {
                        score(a2, c2, a3 - a[i], c3 - (c[i] - cbar))
                    };
                    if best.is_none_or(|(bv, _, _)| v < bv) {
                        best = Some((v, side, k));
                    }
                }
            }
            let (_, side, k) = best.expect("nonempty candidates");
            let i = if side == 2 { p2.remove(k) } else { p3.remove(k) };
            p1.push(i);
        }
    }

    for set in [&mut p1, &mut p2, &mut p3] {
        set.sort_unstable();
    }
    let factors = (1.0, 1.0 / mmax.sqrt());
    let scaled = |set: &[usize]| scale(&set.iter().map(|&i| (a[i], c[i])).collect::<Vec<_>>(), factors);
    let (s1, s2, s3) = (scaled(&p1), scaled(&p2), scaled(&p3));
    let split = ceil_pow(n, cfg.split_exponent);
    if p2.len() >= split && p3.len() >= split {
        Rearranged { j: [p1, p2, p3], pairs: [s1, s2, s3] }
    } else {
        let mut idx = p1;
        idx.extend(p2);
        idx.extend(p3);
        let mut pairs = s1;
        pairs.extend(s2);
        pairs.extend(s3);
        Rearranged { j: [idx, Vec::new(), Vec::new()], pairs: [pairs, Vec::new(), Vec::new()] }
    }
}

fn mass(p: (f64, f64)) -> f64 {
    p.0 * p.0 + p.1 * p.1
}

/// Orders the pairs so that every prefix sum stays short, then cuts the
/// order into consecutive blocks of mass at least `m_param`; a light final
/// block joins its predecessor. Returns local indices into `pairs`.
///
/// For centered input each prefix satisfies `||sum||^2 <= 4 sum_i (a_i^2 + b_i^2)`,
/// and when the total mass is at least `m_param` every block has mass in
/// `[m_param, 2 m_param + max_i (a_i^2 + b_i^2)]`.
pub fn partition_set(pairs: &[(f64, f64)], m_param: f64) -> Vec<Vec<usize>> {
    let stream = partition_stream(pairs);
    cut_stream(pairs, &stream, m_param)
}

/// Step 1: the ordering with bounded prefix sums.
pub fn partition_stream(pairs: &[(f64, f64)]) -> Vec<usize> {
    let k = pairs.len();
    if k == 0 {
        return Vec::new();
    }
    let total: f64 = pairs.iter().map(|&p| mass(p)).sum();
    let mut by_mass: Vec<usize> = (0..k).collect();
    by_mass.sort_by(|&i, &j| mass(pairs[j]).total_cmp(&mass(pairs[i])).then(i.cmp(&j)));
    let mut used = vec![false; k];
    let mut cursor = 0;
    let mut stream = Vec::with_capacity(k);
    let mut u = (0.0, 0.0);
    while stream.len() < k {
        let next = if mass(u) <= total {
            while used[by_mass[cursor]] {
                cursor += 1;
            }
            by_mass[cursor]
        } else {
            // any i with ||u + x_i||^2 <= ||u||^2 - ||x_i||^2 qualifies; the
            // minimizer of ||u + x_i||^2 + ||x_i||^2 does whenever one exists
            (0..k)
                .filter(|&i| !used[i])
                .min_by(|&i, &j| {
                    let fi = mass((u.0 + pairs[i].0, u.1 + pairs[i].1)) + mass(pairs[i]);
                    let fj = mass((u.0 + pairs[j].0, u.1 + pairs[j].1)) + mass(pairs[j]);
                    fi.total_cmp(&fj).then(i.cmp(&j))
                })
                .expect("unused element remains")
        };
        used[next] = true;
        u = (u.0 + pairs[next].0, u.1 + pairs[next].1);
        stream.push(next);
    }
    stream
}

/// Step 2: greedy cutting of an ordering into blocks of mass at least `m_param`.
pub fn cut_stream(pairs: &[(f64, f64)], stream: &[usize], m_param: f64) -> Vec<Vec<usize>> {
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut cur = Vec::new();
    let mut acc = 0.0;
    for &i in stream {
        cur.push(i);
        acc += mass(pairs[i]);
        if acc >= m_param {
            blocks.push(std::mem::take(&mut cur));
            acc = 0.0;
        }
    }
    if !cur.is_empty() {
        match blocks.last_mut() {
            Some(last) => last.extend(cur),
            None => blocks.push(cur),
        }
    }
    blocks
}

/// Uniform assignment of `indices` into `floor(k / n_total^(1/2 + epsilon))`
/// bins; empty bins are dropped and zero bins means one block.
pub fn partition_random<R: Rng + ?Sized>(indices: &[usize], n_total: usize, epsilon: f64, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::InvalidInput(format!("epsilon must lie in (0, 0.5), got {epsilon}")));
    }
    if indices.is_empty() {
        return Ok(Vec::new());
    }
    let bins = (indices.len() as f64 / (n_total as f64).powf(0.5 + epsilon)).floor() as usize;
    if bins <= 1 {
        return Ok(vec![indices.to_vec()]);
    }
    let mut out = vec![Vec::new(); bins];
    for &i in indices {
        out[rng.random_range(0..bins)].push(i);
    }
    out.retain(|b| !b.is_empty());
    Ok(out)
}
