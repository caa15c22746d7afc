//! Floating-point helpers shared by the posterior and the aggregation code.

use libm::{exp, log};

/// Log of exact probability zero.
pub const LOG_ZERO: f64 = f64::NEG_INFINITY;

pub const LN_2: f64 = core::f64::consts::LN_2;

const PAIRWISE_BLOCK: usize = 64;

/// MurmurHash3 64-bit finalizer; a bijection on `u64` with full avalanche.
#[inline]
pub const fn fmix64(mut x: u64) -> u64 {
    x ^= x >> 33;
    x = x.wrapping_mul(0xff51_afd7_ed55_8ccd);
    x ^= x >> 33;
    x = x.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    x ^= x >> 33;
    x
}

/// Pairwise (cascade) summation. Error grows as `O(log n)` instead of `O(n)`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_BLOCK {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// `log(exp(a) + exp(b))`, symmetric in its arguments.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == LOG_ZERO {
        return LOG_ZERO;
    }
    hi + libm::log1p(exp(lo - hi))
}

/// Max-shifted log-sum-exp with pairwise summation of the shifted terms.
/// `scratch` is overwritten with `exp(x - max)`.
pub fn log_sum_exp_into(xs: &[f64], scratch: &mut [f64]) -> f64 {
    debug_assert_eq!(xs.len(), scratch.len());
    let m = xs.iter().copied().fold(LOG_ZERO, nan_max);
    if m == LOG_ZERO || !m.is_finite() {
        return m;
    }
    for (s, &x) in scratch.iter_mut().zip(xs) {
        *s = exp(x - m);
    }
    m + log(pairwise_sum(scratch))
}

/// `max` that propagates NaN instead of skipping it.
#[inline]
pub fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Mean and standard error of the mean (sample standard deviation over
/// `sqrt(n)`); the standard error of a single sample is 0.
pub fn mean_stderr(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let mut n = 0usize;
    let mut acc = CompensatedSum::new();
    for x in xs.clone() {
        acc.add(x);
        n += 1;
    }
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = acc.total() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let mut ss = CompensatedSum::new();
    for x in xs {
        let d = x - mean;
        ss.add(d * d);
    }
    let var = ss.total() / (n - 1) as f64;
    (mean, libm::sqrt(var / n as f64))
}
