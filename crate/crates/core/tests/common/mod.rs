//! Independent oracles shared by the property suites and the acceptance run.
//! Nothing here calls the code under test to compute an expected value.

#![allow(dead_code)]

use latentrate::baselines::logistic_fit;
use latentrate::model::{
    constrain, grad_log_posterior, log_lik_call, log_posterior, unconstrain, BaseParams, CallRecord,
    ExtParams, ModelKind, Params, PriorConfig, RatingDataset, UnconstrainedVector,
};
use latentrate::sampler::{ess_bulk, LogDensity};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// A small random dataset with per-round ratings and, when asked, difficulty.
pub fn random_dataset(rng: &mut ChaCha8Rng, n_calls: usize, n_cov: usize, difficulty: bool) -> RatingDataset {
    let records = (0..n_calls)
        .map(|c| {
            let n = rng.random_range(1..=10usize);
            let rounds: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<bool>())).collect();
            let x: Vec<f64> = (0..n_cov).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut r = CallRecord::from_rounds(format!("r{c}"), rounds, x, rng.random());
            if difficulty {
                r.difficulty = Some(rng.random());
            }
            r
        })
        .collect();
    let names = (0..n_cov).map(|j| format!("x{j}")).collect();
    RatingDataset::new(records, names).unwrap()
}

/// A random point of moderate size in the unconstrained space.
pub fn random_u(rng: &mut ChaCha8Rng, kind: ModelKind, n_cov: usize) -> UnconstrainedVector {
    let mut v: Vec<f64> = (0..n_cov + 2).map(|_| rng.random_range(-3.0..3.0)).collect();
    match kind {
        ModelKind::Base => v.extend((0..2).map(|_| rng.random_range(-4.0..4.0))),
        ModelKind::Extended => {
            v.extend((0..2).map(|_| rng.random_range(-3.0..3.0)));
            v.extend((0..2).map(|_| rng.random_range(-3.0..2.0)));
        }
    }
    UnconstrainedVector::new(kind, v).unwrap()
}

/// Largest `|g - fd| / max(1, |fd|)` over coordinates, central differences with h = 1e-5.
pub fn gradient_fd_error(u: &UnconstrainedVector, data: &RatingDataset, priors: &PriorConfig) -> f64 {
    let h = 1e-5;
    let g = grad_log_posterior(u, data, priors).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..u.values.len() {
        let mut up = u.clone();
        let mut dn = u.clone();
        up.values[i] += h;
        dn.values[i] -= h;
        let fd = (log_posterior(&up, data, priors).unwrap() - log_posterior(&dn, data, priors).unwrap()) / (2.0 * h);
        worst = worst.max((g[i] - fd).abs() / fd.abs().max(1.0));
    }
    worst
}

/// Worst finite-difference error over `instances` random (u, dataset) pairs of one kind.
pub fn gradient_check(seed: u64, kind: ModelKind, instances: usize) -> f64 {
    let mut r = rng(seed);
    let priors = PriorConfig::default();
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n_cov = r.random_range(0..=3);
        let n_calls = r.random_range(1..=30);
        let data = random_dataset(&mut r, n_calls, n_cov, kind == ModelKind::Extended);
        let u = random_u(&mut r, kind, n_cov);
        worst = worst.max(gradient_fd_error(&u, &data, &priors));
    }
    worst
}

/// Log of the marginal probability of exactly `k` positives in `n` rounds, by
/// summing the probability of every one of the 2^n rating sequences.
pub fn brute_force_log_lik(theta: f64, eps0: f64, eps1: f64, k: u32, n: u32) -> f64 {
    let mut total = 0.0;
    for seq in 0u32..(1 << n) {
        if seq.count_ones() != k {
            continue;
        }
        let mut p0 = 1.0 - theta;
        let mut p1 = theta;
        for i in 0..n {
            let r = (seq >> i) & 1 == 1;
            p0 *= if r { eps0 } else { 1.0 - eps0 };
            p1 *= if r { 1.0 - eps1 } else { eps1 };
        }
        total += p0 + p1;
    }
    total.ln()
}

fn base_params(theta_c: f64, eps0: f64, eps1: f64) -> Params {
    Params::Base(BaseParams {
        intercept: (theta_c / (1.0 - theta_c)).ln(),
        betas: vec![],
        tau: 0.0,
        fpr: eps0,
        fnr: eps1,
    })
}

/// Largest relative gap between `log_lik_call` and enumeration over a grid of
/// (θ_c, ε₀, ε₁) and every (k, N) with N ≤ 10.
pub fn brute_force_check() -> f64 {
    let grid_theta = [0.01, 0.2, 0.5, 0.8, 0.99];
    let grid_eps = [0.001, 0.05, 0.15, 0.3, 0.499];
    let mut worst: f64 = 0.0;
    for &t in &grid_theta {
        for &e0 in &grid_eps {
            for &e1 in &grid_eps {
                let p = base_params(t, e0, e1);
                for n in 1..=10u32 {
                    for k in 0..=n {
                        let rec = CallRecord::new("c", k, n, vec![], false);
                        let got = log_lik_call(&p, &rec).unwrap();
                        let want = brute_force_log_lik(t, e0, e1, k, n);
                        worst = worst.max((got - want).abs() / want.abs().max(1.0));
                    }
                }
            }
        }
    }
    worst
}

/// Worst round-trip error of unconstrain(constrain(u)) and whether every
/// constrained error rate stayed inside (0, 0.5).
pub fn bijection_check(seed: u64, instances: usize) -> (f64, bool) {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    let mut in_range = true;
    for i in 0..instances {
        let kind = if i % 2 == 0 { ModelKind::Base } else { ModelKind::Extended };
        let n_cov = r.random_range(0..=3);
        let mut u = random_u(&mut r, kind, n_cov);
        for v in u.values.iter_mut() {
            *v = r.random_range(-6.0..6.0);
        }
        let (p, _) = constrain(&u);
        if let Params::Base(b) = &p {
            in_range &= b.fpr > 0.0 && b.fpr < 0.5 && b.fnr > 0.0 && b.fnr < 0.5;
        }
        let back = unconstrain(&p).unwrap();
        for (a, b) in u.values.iter().zip(&back.values) {
            worst = worst.max((a - b).abs());
        }
    }
    (worst, in_range)
}

/// Extended-model parameters equivalent to the base model with (ε₀, ε₁) up to a vanishing slope.
pub fn nested_extended(base: &BaseParams, gamma: f64) -> Params {
    let logit2 = |e: f64| (2.0 * e / (1.0 - 2.0 * e)).ln();
    Params::Extended(ExtParams {
        intercept: base.intercept,
        betas: base.betas.clone(),
        tau: base.tau,
        alpha0: logit2(base.fpr),
        alpha1: logit2(base.fnr),
        gamma0: gamma,
        gamma1: gamma,
    })
}

/// Logistic log-likelihood with an intercept and one slope, written out directly.
pub fn logistic_ll_2(x: &[f64], y: &[u8], b0: f64, b1: f64) -> f64 {
    x.iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let eta = b0 + b1 * xi;
            let log1p_exp = if eta > 0.0 { eta + (-eta).exp().ln_1p() } else { eta.exp().ln_1p() };
            f64::from(yi) * eta - log1p_exp
        })
        .sum()
}

/// Maximizer of [`logistic_ll_2`] by repeated grid refinement: a 41×41 grid over
/// the current box, then a box of two cells around the best point.
/// Returns the point and the final grid spacing.
pub fn grid_search_mle(x: &[f64], y: &[u8]) -> ((f64, f64), f64) {
    let (mut c0, mut c1, mut half) = (0.0, 0.0, 8.0);
    let cells = 40;
    loop {
        let step = 2.0 * half / cells as f64;
        let mut best = (f64::NEG_INFINITY, c0, c1);
        for i in 0..=cells {
            for j in 0..=cells {
                let b0 = c0 - half + i as f64 * step;
                let b1 = c1 - half + j as f64 * step;
                let ll = logistic_ll_2(x, y, b0, b1);
                if ll > best.0 {
                    best = (ll, b0, b1);
                }
            }
        }
        c0 = best.1;
        c1 = best.2;
        half = 2.0 * step;
        if step < 1e-6 {
            return ((c0, c1), step);
        }
    }
}

/// Random non-separated two-parameter logistic problem.
pub fn logistic_problem(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<u8>) {
    let b0: f64 = rng.random_range(-1.0..1.0);
    let b1: f64 = rng.random_range(-1.5..1.5);
    loop {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<u8> = x.iter().map(|&xi| u8::from(rng.random::<f64>() < sigmoid(b0 + b1 * xi))).collect();
        let ones = y.iter().filter(|&&v| v == 1).count();
        // overlap in x between the two classes rules out separation
        let max0 = x.iter().zip(&y).filter(|p| *p.1 == 0).map(|p| *p.0).fold(f64::NEG_INFINITY, f64::max);
        let min1 = x.iter().zip(&y).filter(|p| *p.1 == 1).map(|p| *p.0).fold(f64::INFINITY, f64::min);
        let max1 = x.iter().zip(&y).filter(|p| *p.1 == 1).map(|p| *p.0).fold(f64::NEG_INFINITY, f64::max);
        let min0 = x.iter().zip(&y).filter(|p| *p.1 == 0).map(|p| *p.0).fold(f64::INFINITY, f64::min);
        if ones >= 3 && n - ones >= 3 && max0 > min1 && max1 > min0 {
            return (x, y);
        }
    }
}

pub fn design_2(x: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(x.len(), 2, |i, j| if j == 0 { 1.0 } else { x[i] })
}

/// Largest coefficient gap between `logistic_fit` and the grid-search MLE,
/// measured in grid cells. Non-converged fits count as infinitely far.
pub fn logistic_grid_check(seed: u64, problems: usize) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..problems {
        let n = r.random_range(20..80);
        let (x, y) = logistic_problem(&mut r, n);
        let fit = logistic_fit(&design_2(&x), &y).unwrap();
        if !fit.converged {
            return f64::INFINITY;
        }
        let ((g0, g1), step) = grid_search_mle(&x, &y);
        let gap = (fit.coefficients[0] - g0).abs().max((fit.coefficients[1] - g1).abs());
        worst = worst.max(gap / step);
    }
    worst
}

/// Labels with a covariate that is symmetric within each class, so its MLE slope is exactly zero.
pub fn independent_covariate_problem(rng: &mut ChaCha8Rng, pairs: usize) -> (DMatrix<f64>, Vec<u8>) {
    let mut rows: Vec<(f64, f64, u8)> = Vec::new();
    for _ in 0..pairs {
        let y = u8::from(rng.random::<f64>() < 0.4);
        let z: f64 = rng.random_range(-2.0..2.0);
        let w: f64 = rng.random_range(0.1..3.0);
        rows.push((z, w, y));
        rows.push((z, -w, y));
    }
    if rows.iter().all(|r| r.2 == rows[0].2) {
        rows[0].2 ^= 1;
        rows[1].2 ^= 1;
    }
    let x = DMatrix::from_fn(rows.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => rows[i].0,
        _ => rows[i].1,
    });
    (x, rows.iter().map(|r| r.2).collect())
}

/// A Gaussian target with a known precision matrix.
pub struct Gaussian {
    pub mean: Vec<f64>,
    pub precision: Vec<Vec<f64>>,
}

impl Gaussian {
    pub fn standard(d: usize) -> Self {
        let precision = (0..d).map(|i| (0..d).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        Gaussian { mean: vec![0.0; d], precision }
    }

    /// Unit variances with correlation `rho`.
    pub fn correlated(rho: f64) -> Self {
        let det = 1.0 - rho * rho;
        Gaussian {
            mean: vec![0.0; 2],
            precision: vec![vec![1.0 / det, -rho / det], vec![-rho / det, 1.0 / det]],
        }
    }
}

impl LogDensity for Gaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn logp_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.dim();
        let z: Vec<f64> = (0..d).map(|i| x[i] - self.mean[i]).collect();
        let mut quad = 0.0;
        for i in 0..d {
            let pz: f64 = (0..d).map(|j| self.precision[i][j] * z[j]).sum();
            grad[i] = -pz;
            quad += z[i] * pz;
        }
        -0.5 * quad
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Kolmogorov–Smirnov distance of pooled draws from N(0, 1), and the 1%
/// critical value at the bulk effective sample size.
pub fn ks_vs_standard_normal(chains: &[Vec<f64>]) -> (f64, f64) {
    let mut all: Vec<f64> = chains.iter().flatten().copied().collect();
    all.sort_by(f64::total_cmp);
    let n = all.len() as f64;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut d: f64 = 0.0;
    for (i, &x) in all.iter().enumerate() {
        let f = normal.cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let n_eff = ess_bulk(chains).unwrap().min(n);
    (d, 1.628 / n_eff.sqrt())
}
