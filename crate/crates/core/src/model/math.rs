//! Scalar helpers shared by the likelihood, sampler and analysis code.

use statrs::function::gamma::ln_gamma;

pub const LN_HALF: f64 = -std::f64::consts::LN_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Numerically stable `ln(1 + e^x)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `(softplus(x), inv_logit(x))` sharing one exponential.
#[inline]
pub fn softplus_inv_logit(x: f64) -> (f64, f64) {
    let t = (-x.abs()).exp();
    let sp = x.max(0.0) + t.ln_1p();
    let s = if x >= 0.0 { 1.0 / (1.0 + t) } else { t / (1.0 + t) };
    (sp, s)
}

#[inline]
pub fn inv_logit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(inv_logit(x))` without cancellation.
#[inline]
pub fn log_inv_logit(x: f64) -> f64 {
    -softplus(-x)
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[inline]
pub fn log_sum_exp2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `ln C(n, k)` through log-gamma.
pub fn ln_choose(n: u32, k: u32) -> f64 {
    debug_assert!(k <= n);
    if k == 0 || k == n {
        return 0.0;
    }
    let (n, k) = (n as f64, k as f64);
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

#[inline]
pub fn normal_lpdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    -0.5 * z * z - sigma.ln() - LN_SQRT_2PI
}

/// Log-density of a lognormal whose logarithm has mean `mu` and sd `sigma`.
#[inline]
pub fn lognormal_lpdf(x: f64, mu: f64, sigma: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let lx = x.ln();
    normal_lpdf(lx, mu, sigma) - lx
}
