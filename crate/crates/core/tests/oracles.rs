//! Library routines checked against slow, independently written references.

mod common;

use causa::causal::{
    assemble_balance_system, build_confounder_context, indicator_objective, mmd_weighted, CausalContext, Kernel,
    TreatmentAssignment,
};
use causa::eval::{accuracy, kmeans, nmi};
use causa::graph::knn_affinity;
use causa::linalg::polar_factor;
use causa::optim::{gpi_solve, simplex_project, TraceProblem};
use causa::solver::minimize_on_simplex;
use causa::{KernelKind, Mat, Vector};
use common::*;
use rand::Rng;

#[test]
fn simplex_projection_matches_bisection() {
    let mut r = rng(11);
    for trial in 0..200 {
        let n = 1 + trial % 17;
        let scale = [0.1, 1.0, 10.0, 1e3][trial % 4];
        let y: Vec<f64> = (0..n).map(|_| scale * r.random_range(-1.0..1.0)).collect();
        let fast = simplex_project(&y);
        let slow = bisect_simplex(&y);
        assert!(max_abs_diff(&fast, &slow) < 1e-8, "{y:?}");
    }
}

fn contrast_kernel(omega: &[bool]) -> Mat {
    let nt = omega.iter().filter(|&&o| o).count() as f64;
    let nc = omega.len() as f64 - nt;
    Mat::from_fn(omega.len(), omega.len(), |i, j| match (omega[i], omega[j]) {
        (true, true) => 1.0 / (nt * nt),
        (false, false) => 1.0 / (nc * nc),
        _ => -1.0 / (nt * nc),
    })
}

#[test]
fn linear_discrepancy_matches_pairwise_sum_and_embedding() {
    let mut r = rng(12);
    for trial in 0..20 {
        let n = 4 + trial;
        let d = 1 + trial % 5;
        let c = gaussian(d, n, &mut r);
        let omega: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
        let t = TreatmentAssignment::from_omega(omega.clone()).unwrap();
        let tau = random_simplex(n, &mut r);
        let k = contrast_kernel(&omega);
        let mut pairwise = 0.0;
        for i in 0..n {
            for j in 0..n {
                pairwise += k[(i, j)] * tau[i] * tau[j] * c.column(i).dot(&c.column(j));
            }
        }
        let nt = omega.iter().filter(|&&o| o).count() as f64;
        let nc = n as f64 - nt;
        let mut treated = Vector::zeros(d);
        let mut control = Vector::zeros(d);
        for i in 0..n {
            if omega[i] {
                treated += c.column(i) * (tau[i] / nt);
            } else {
                control += c.column(i) * (tau[i] / nc);
            }
        }
        let embedded = (treated - control).norm_squared();
        let fast = mmd_weighted(&c, &tau, &t, Kernel::Linear).unwrap();
        let scale = pairwise.abs().max(1e-12);
        assert!((fast - pairwise).abs() <= 1e-10 * scale);
        assert!((fast - embedded).abs() <= 1e-10 * scale);
    }
}

#[test]
fn gaussian_discrepancy_matches_pairwise_sum() {
    let mut r = rng(13);
    let (d, n, h) = (3, 9, 1.7);
    let c = gaussian(d, n, &mut r);
    let omega: Vec<bool> = (0..n).map(|i| i < 4).collect();
    let t = TreatmentAssignment::from_omega(omega.clone()).unwrap();
    let tau = random_simplex(n, &mut r);
    let k = contrast_kernel(&omega);
    let mut oracle = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d2: f64 = (0..d).map(|f| (c[(f, i)] - c[(f, j)]).powi(2)).sum();
            oracle += k[(i, j)] * tau[i] * tau[j] * (-d2 / (2.0 * h * h)).exp();
        }
    }
    let fast = mmd_weighted(&c, &tau, &t, Kernel::Gaussian { bandwidth: h }).unwrap();
    assert!((fast - oracle).abs() <= 1e-12 * oracle.abs().max(1e-12));
}

fn random_contexts(x: &Mat, view: usize, protos: &[usize], seed: u64) -> Vec<CausalContext> {
    let mut r = rng(seed);
    protos
        .iter()
        .map(|&p| {
            let e: Vec<f64> = (0..x.nrows() - 1).map(|_| r.random_range(0.0..1.0)).collect();
            build_confounder_context(x, view, p, &e, KernelKind::Linear).unwrap()
        })
        .collect()
}

#[test]
fn balance_quadratic_equals_sum_of_discrepancies() {
    let mut r = rng(14);
    let n = 15;
    let views = vec![gaussian(6, n, &mut r), gaussian(4, n, &mut r)];
    let contexts = vec![random_contexts(&views[0], 0, &[0, 3], 1), random_contexts(&views[1], 1, &[2], 2)];
    let ws = vec![gaussian(6, 2, &mut r), gaussian(4, 2, &mut r)];
    let f = uniform(n, 2, 0.0, 1.0, &mut r);
    let sys = assemble_balance_system(&contexts, &views, &ws, &f).unwrap();
    let tau = random_simplex(n, &mut r);
    let t = Vector::from_vec(tau.clone());
    let quad = t.dot(&(&sys.h * &t));
    let mut sum = 0.0;
    for (x, group) in views.iter().zip(&contexts) {
        for ctx in group {
            sum += mmd_weighted(&ctx.confounders(x), &tau, &ctx.treatment, Kernel::Linear).unwrap();
        }
    }
    assert!((quad - sum).abs() <= 1e-10 * sum.abs().max(1e-12));
    for i in 0..n {
        let mut g = 0.0;
        for (x, w) in views.iter().zip(&ws) {
            for col in 0..2 {
                let fit: f64 = (0..x.nrows()).map(|k| x[(k, i)] * w[(k, col)]).sum();
                g += (fit - f[(i, col)]).powi(2);
            }
        }
        assert!((sys.g[i] - g).abs() <= 1e-10 * g.max(1.0));
    }
}

/// Smooth indicator objective written directly from its terms.
fn indicator_oracle(ctx: &CausalContext, x: &Mat, tau: &[f64], f: &Mat, beta: f64) -> f64 {
    let c = ctx.confounders(x);
    let p = ctx.alignment_target(x);
    let n = x.ncols() as f64;
    let mmd = mmd_weighted(&c, tau, &ctx.treatment, ctx.kernel).unwrap();
    let assoc = (c.transpose() * &c - f * f.transpose()).norm_squared();
    let align = (c.transpose() * &p).trace();
    beta / (n * n) * mmd + assoc - align
}

fn check_gradient(kernel: KernelKind, seed: u64) {
    let mut r = rng(seed);
    for trial in 0..6 {
        let n = 8 + 4 * trial;
        let d = 4 + 3 * trial;
        let x = gaussian(d, n, &mut r);
        let f = uniform(n, 3, 0.0, 1.0, &mut r) * 0.3;
        let tau = random_simplex(n, &mut r);
        let beta = [0.0, 1.0, 50.0][trial % 3];
        let e: Vec<f64> = (0..d - 1).map(|_| r.random_range(0.1..0.9)).collect();
        let ctx = build_confounder_context(&x, 0, trial % d, &e, kernel).unwrap();
        let eval = indicator_objective(&ctx, &x, &tau, &f, beta);
        let direct = indicator_oracle(&ctx, &x, &tau, &f, beta);
        assert!((eval.value - direct).abs() <= 1e-9 * direct.abs().max(1.0));
        let h = 1e-6;
        for k in 0..d - 1 {
            let mut up = ctx.clone();
            up.indicator[k] += h;
            let mut down = ctx.clone();
            down.indicator[k] -= h;
            let fd = (indicator_oracle(&up, &x, &tau, &f, beta) - indicator_oracle(&down, &x, &tau, &f, beta)) / (2.0 * h);
            let g = eval.gradient[k];
            assert!(
                (g - fd).abs() <= 1e-5 * g.abs().max(fd.abs()).max(1.0),
                "coordinate {k}: analytic {g}, finite difference {fd}"
            );
        }
    }
}

#[test]
fn indicator_gradient_matches_finite_differences() {
    check_gradient(KernelKind::Linear, 15);
}

#[test]
fn gaussian_indicator_gradient_matches_finite_differences() {
    check_gradient(KernelKind::Gaussian, 16);
}

#[test]
fn indicator_gradient_at_zero_is_the_alignment() {
    let mut r = rng(17);
    let (d, n, proto) = (5, 10, 2);
    let x = gaussian(d, n, &mut r);
    let ctx = build_confounder_context(&x, 0, proto, &vec![0.0; d - 1], KernelKind::Linear).unwrap();
    let eval = indicator_objective(&ctx, &x, &random_simplex(n, &mut r), &Mat::zeros(n, 2), 0.0);
    let rest: Vec<usize> = (0..d).filter(|&k| k != proto).collect();
    for (slot, &k) in rest.iter().enumerate() {
        let p: f64 = (0..n).map(|i| x[(k, i)] * x[(proto, i)]).sum();
        assert!((eval.gradient[slot] + p).abs() < 1e-12 * p.abs().max(1.0));
    }
}

#[test]
fn knn_affinity_matches_brute_force() {
    let mut r = rng(18);
    let (d, n, k) = (6, 10, 3);
    let x = gaussian(d, n, &mut r);
    let dist = |i: usize, j: usize| -> f64 { (0..d).map(|f| (x[(f, i)] - x[(f, j)]).powi(2)).sum::<f64>().sqrt() };
    let mut linked = vec![vec![false; n]; n];
    for i in 0..n {
        let mut ds: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| dist(i, j)).collect();
        ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let kth = ds[k - 1];
        for j in 0..n {
            if j != i && dist(i, j) <= kth {
                linked[i][j] = true;
                linked[j][i] = true;
            }
        }
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if linked[i][j] {
                edges.push(dist(i, j));
            }
        }
    }
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = edges.len();
    let sigma = if m % 2 == 1 { edges[m / 2] } else { 0.5 * (edges[m / 2 - 1] + edges[m / 2]) };
    let a = knn_affinity(&x, k).unwrap();
    for i in 0..n {
        for j in 0..n {
            let want = if linked[i][j] { (-dist(i, j).powi(2) / (2.0 * sigma * sigma)).exp() } else { 0.0 };
            assert!((a[(i, j)] - want).abs() < 1e-12, "({i}, {j})");
        }
    }
}

fn random_orthonormal(d: usize, c: usize, r: &mut rand_chacha::ChaCha8Rng) -> Mat {
    gaussian(d, c, r).qr().q().columns(0, c).into_owned()
}

#[test]
fn gpi_beats_random_search() {
    let mut r = rng(19);
    for trial in 0..6 {
        let b0 = gaussian(5, 5, &mut r);
        // indefinite first, then PSD
        let a = if trial < 3 { &b0 + b0.transpose() } else { b0.transpose() * &b0 };
        let b = gaussian(5, 2, &mut r);
        let problem = TraceProblem::new(a, b).unwrap();
        let start = polar_factor(&problem.b);
        let out = gpi_solve(&problem, &start, 2000, 0.0).unwrap();
        assert!(out.surrogate.windows(2).all(|w| w[1] >= w[0] - 1e-10 * w[0].abs().max(1.0)));
        let best = (0..10_000)
            .map(|_| problem.value(&random_orthonormal(5, 2, &mut r)))
            .fold(f64::INFINITY, f64::min);
        let got = problem.value(&out.w);
        assert!(got <= best + 1e-6, "{got} vs {best}");
        let orth = (out.w.transpose() * &out.w - Mat::identity(2, 2)).amax();
        assert!(orth < 1e-10, "{orth}");
    }
}

/// Long-run projected gradient with the bisection projection.
fn simplex_qp_oracle(h: &Mat, g: &Vector, quad: f64, lin: f64) -> Vec<f64> {
    let lmax = h.clone().symmetric_eigen().eigenvalues.max();
    let step = 1.0 / (2.0 * quad * lmax + 1e-12);
    let n = g.len();
    let mut t = Vector::from_element(n, 1.0 / n as f64);
    for _ in 0..100_000 {
        let grad = h * &t * (2.0 * quad) + g * lin;
        let moved: Vec<f64> = (&t - grad * step).iter().copied().collect();
        t = Vector::from_vec(bisect_simplex(&moved));
    }
    t.iter().copied().collect()
}

#[test]
fn tau_solver_matches_long_projected_gradient() {
    let mut r = rng(20);
    for (n, quad, lin) in [(6, 1.0, 1.0), (12, 0.05, 2.0), (12, 3.0, 0.1)] {
        let b = gaussian(n, n, &mut r);
        let h = b.transpose() * &b + Mat::identity(n, n) * 0.5;
        let g = Vector::from_fn(n, |_, _| r.random_range(0.0..3.0));
        let uniform_start = vec![1.0 / n as f64; n];
        let (tau, report) = minimize_on_simplex(&h, &g, quad, lin, &uniform_start);
        let oracle = simplex_qp_oracle(&h, &g, quad, lin);
        let value = |t: &[f64]| {
            let t = Vector::from_column_slice(t);
            quad * t.dot(&(&h * &t)) + lin * t.dot(&g)
        };
        assert!(
            (value(&tau) - value(&oracle)).abs() <= 1e-8 * value(&oracle).abs().max(1.0),
            "{} vs {}",
            value(&tau),
            value(&oracle)
        );
        assert!(report.trace.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn tau_solver_corner_cases() {
    let n = 5;
    let zero = Mat::zeros(n, n);
    let start = vec![0.2; n];
    let g = Vector::from_vec(vec![3.0, 1.0, 2.0, 5.0, 4.0]);
    let (tau, _) = minimize_on_simplex(&zero, &g, 1.0, 1.0, &start);
    assert!(max_abs_diff(&tau, &[0.0, 1.0, 0.0, 0.0, 0.0]) < 1e-12);
    let tied = Vector::from_vec(vec![3.0, 1.0, 1.0, 5.0, 4.0]);
    let (tau, _) = minimize_on_simplex(&zero, &tied, 1.0, 1.0, &start);
    assert!(max_abs_diff(&tau, &[0.0, 0.5, 0.5, 0.0, 0.0]) < 1e-12);
    let (tau, _) = minimize_on_simplex(&Mat::identity(n, n), &Vector::zeros(n), 1.0, 1.0, &[0.9, 0.1, 0.0, 0.0, 0.0]);
    assert!(max_abs_diff(&tau, &start) < 1e-8);
}

/// Every permutation of `0..k`.
fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for slot in 0..=p.len() {
            let mut q = p.clone();
            q.insert(slot, k - 1);
            out.push(q);
        }
    }
    out
}

fn nmi_oracle(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let entropy = |labels: &[usize], k: usize| -> f64 {
        (0..k)
            .map(|c| labels.iter().filter(|&&l| l == c).count() as f64 / n)
            .filter(|&p| p > 0.0)
            .map(|p| -p * p.ln())
            .sum()
    };
    let mut mi = 0.0;
    for i in 0..ka {
        for j in 0..kb {
            let joint = a.iter().zip(b).filter(|&(&x, &y)| x == i && y == j).count() as f64 / n;
            if joint > 0.0 {
                let pa = a.iter().filter(|&&x| x == i).count() as f64 / n;
                let pb = b.iter().filter(|&&y| y == j).count() as f64 / n;
                mi += joint * (joint / (pa * pb)).ln();
            }
        }
    }
    let (ha, hb) = (entropy(a, ka), entropy(b, kb));
    if ha == 0.0 && hb == 0.0 {
        1.0
    } else if ha == 0.0 || hb == 0.0 {
        0.0
    } else {
        mi / (ha * hb).sqrt()
    }
}

#[test]
fn accuracy_and_nmi_match_enumeration() {
    let mut r = rng(21);
    for trial in 0..40 {
        let k = 2 + trial % 3;
        let n = 6 + trial;
        let truth: Vec<usize> = (0..n).map(|i| i % k).collect();
        let pred: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let best = permutations(k)
            .iter()
            .map(|perm| pred.iter().zip(&truth).filter(|&(&p, &t)| perm[p] == t).count())
            .max()
            .unwrap() as f64
            / n as f64;
        assert!((accuracy(&pred, &truth).unwrap() - best).abs() < 1e-12);
        assert!((nmi(&pred, &truth).unwrap() - nmi_oracle(&pred, &truth)).abs() < 1e-12);
    }
}

#[test]
fn kmeans_reaches_the_brute_force_optimum() {
    let mut r = rng(22);
    let pts = gaussian(2, 12, &mut r);
    let inertia = |labels: &[usize]| -> f64 {
        let mut total = 0.0;
        for c in 0..3 {
            let members: Vec<usize> = (0..12).filter(|&i| labels[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            for f in 0..2 {
                let mean = members.iter().map(|&i| pts[(f, i)]).sum::<f64>() / members.len() as f64;
                total += members.iter().map(|&i| (pts[(f, i)] - mean).powi(2)).sum::<f64>();
            }
        }
        total
    };
    let mut best = f64::INFINITY;
    let mut labels = vec![0usize; 12];
    for code in 0..3usize.pow(12) {
        let mut c = code;
        for l in labels.iter_mut() {
            *l = c % 3;
            c /= 3;
        }
        best = best.min(inertia(&labels));
    }
    let out = kmeans(&pts, 3, 0).unwrap();
    assert!(out.inertia <= best + 1e-9, "{} vs {best}", out.inertia);
    assert!((inertia(&out.labels) - out.inertia).abs() < 1e-9);
}
