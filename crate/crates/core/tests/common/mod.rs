//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tactile_core::learn::LabeledSet;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Optimum of the soft-margin SVM found by accelerated projected gradient on the dual.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub alpha: Vec<f64>,
    pub dual: f64,
    pub primal: f64,
    pub w: Vec<f64>,
    pub b: f64,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean projection onto `{0 ≤ α ≤ C, yᵀα = 0}` by bisection on the multiplier.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |lambda: f64| -> Vec<f64> {
        v.iter()
            .zip(y)
            .map(|(vi, yi)| (vi - lambda * yi).clamp(0.0, c))
            .collect()
    };
    let balance = |lambda: f64| -> f64 {
        v.iter()
            .zip(y)
            .map(|(vi, yi)| yi * (vi - lambda * yi).clamp(0.0, c))
            .sum()
    };
    let span = v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        // yᵀα(λ) is non-increasing in λ
        if balance(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Exact minimiser over `b` of the primal for fixed `w`; the objective is
/// piecewise linear in `b` so one of the breakpoints is optimal.
fn best_bias(margins: &[f64], y: &[f64], c: f64) -> (f64, f64) {
    let cost = |b: f64| -> f64 {
        margins
            .iter()
            .zip(y)
            .map(|(m, yi)| (1.0 - yi * (m + b)).max(0.0))
            .sum::<f64>()
            * c
    };
    let mut best = (0.0, cost(0.0));
    for (m, yi) in margins.iter().zip(y) {
        let b = yi - m;
        let v = cost(b);
        if v < best.1 {
            best = (b, v);
        }
    }
    best
}

/// Solves `max Σα − ½αᵀQα` over the SVM dual polytope until the certified
/// duality gap falls below `rel_gap·(1 + |primal|)`.
pub fn svm_qp_oracle(
    x: &[Vec<f64>],
    y: &[f64],
    c: f64,
    rel_gap: f64,
    max_iter: usize,
) -> QpSolution {
    let n = x.len();
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| y[i] * y[j] * dot(&x[i], &x[j])).collect())
        .collect();
    let qv = |a: &[f64]| -> Vec<f64> { q.iter().map(|row| dot(row, a)).collect() };
    // Lipschitz constant by power iteration, padded
    let mut v = vec![1.0; n];
    let mut lip = 1.0;
    for _ in 0..100 {
        let u = qv(&v);
        lip = dot(&u, &u).sqrt() / dot(&v, &v).sqrt().max(1e-300);
        let norm = dot(&u, &u).sqrt().max(1e-300);
        v = u.iter().map(|t| t / norm).collect();
    }
    let step = 1.0 / (1.05 * lip + 1e-12);
    let dual = |a: &[f64]| a.iter().sum::<f64>() - 0.5 * dot(a, &qv(a));
    let certify = |a: &[f64]| -> (f64, Vec<f64>, f64, f64) {
        let d = x[0].len();
        let mut w = vec![0.0; d];
        for i in 0..n {
            for k in 0..d {
                w[k] += a[i] * y[i] * x[i][k];
            }
        }
        let margins: Vec<f64> = x.iter().map(|xi| dot(&w, xi)).collect();
        let (b, slack) = best_bias(&margins, y, c);
        (0.5 * dot(&w, &w) + slack, w, b, dual(a))
    };

    let mut alpha = vec![0.0; n];
    let mut beta = alpha.clone();
    let mut t = 1.0f64;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let g = qv(&beta);
        let next = project(
            &beta
                .iter()
                .zip(&g)
                .map(|(b, gi)| b - step * (gi - 1.0))
                .collect::<Vec<_>>(),
            y,
            c,
        );
        // gradient-based restart: momentum pointing uphill is dropped
        let uphill: f64 = beta
            .iter()
            .zip(&next)
            .zip(&alpha)
            .map(|((b, x), a)| (b - x) * (x - a))
            .sum();
        if uphill > 0.0 {
            t = 1.0;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        beta = next
            .iter()
            .zip(&alpha)
            .map(|(a, p)| a + (t - 1.0) / t_next * (a - p))
            .collect();
        alpha = next;
        t = t_next;
        if iterations % 50 == 0 || iterations >= max_iter {
            let (primal, w, b, d) = certify(&alpha);
            if primal - d <= rel_gap * (1.0 + primal.abs()) || iterations >= max_iter {
                return QpSolution {
                    alpha,
                    dual: d,
                    primal,
                    w,
                    b,
                    iterations,
                };
            }
        }
    }
}

/// `±1` labels of a two-class set, positive for the larger class id.
pub fn signs(set: &LabeledSet) -> Vec<f64> {
    let classes = set.classes();
    set.labels()
        .iter()
        .map(|&l| if l == classes[1] { 1.0 } else { -1.0 })
        .collect()
}

/// Random binary problem with overlapping Gaussian classes.
pub fn random_problem(seed: u64, n: usize, d: usize, shift: f64) -> LabeledSet {
    let mut r = rng(seed);
    let direction = gaussian(&mut r, d);
    let norm = dot(&direction, &direction).sqrt();
    let mut xs = Vec::with_capacity(n);
    let mut ls = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2;
        let s = if label == 1 { shift } else { -shift };
        let x: Vec<f64> = gaussian(&mut r, d)
            .iter()
            .zip(&direction)
            .map(|(g, u)| g + s * u / norm)
            .collect();
        xs.push(x);
        ls.push(label);
    }
    LabeledSet::new(xs, ls).unwrap()
}

/// Dense `m×n` SBHE oracle: the Sylvester Hadamard entry `(-1)^popcount(r & c)`
/// placed block-diagonally, columns permuted, rows selected.
pub fn dense_sbhe(n: usize, b: usize, permutation: &[usize], rows: &[usize]) -> Vec<Vec<f64>> {
    let scale = 1.0 / (b as f64).sqrt();
    rows.iter()
        .map(|&r| {
            let mut row = vec![0.0; n];
            let block = r / b;
            for (i, &p) in permutation.iter().enumerate() {
                if i / b == block {
                    let parity = ((r % b) & (i % b)).count_ones() % 2;
                    row[p] = if parity == 0 { scale } else { -scale };
                }
            }
            row
        })
        .collect()
}

/// Dense `n×n` synthesis matrix Ψ built column by column from unit coefficients.
pub fn dense_columns(n: usize, synth: impl Fn(&[f64]) -> Vec<f64>) -> Vec<Vec<f64>> {
    (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            synth(&e)
        })
        .collect()
}
