//! Closed-form estimates of Eve's information gain and entropy decline,
//! and a quadrature oracle for the per-symbol information.

use alloc::vec::Vec;
use core::f64::consts::{E, PI};
use libm::{cos, exp, exp2, log2, sqrt};

use crate::transmission::{AttackMode, ChannelModel};
use crate::{Error, Result};

/// Estimated information per measured symbol, in bits:
/// `log2(M / (sigma sqrt(2 pi e))) - 1`. May be negative.
pub fn info_per_symbol(symbols: f64, sigma: f64) -> f64 {
    log2(symbols / (sigma * sqrt(2.0 * PI * E))) - 1.0
}

/// Symbols after which the linear entropy decline reaches zero, `L / U`.
pub fn n0(key_bits: f64, info_rate: f64) -> Result<f64> {
    if !(info_rate > 0.0) {
        return Err(Error::Domain("n0 requires a positive information rate"));
    }
    Ok(key_bits / info_rate)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatePoint {
    pub q: u64,
    /// `max(L - q U, 0)`.
    pub entropy: f64,
    /// False once `q ≥ n0`, where the linear estimate no longer applies.
    pub in_domain: bool,
}

/// Linear entropy estimate `L - q U`, clipped at zero.
pub fn estimate_curve(
    key_bits: f64,
    info_rate: f64,
    qs: impl IntoIterator<Item = u64>,
) -> Result<Vec<EstimatePoint>> {
    let horizon = n0(key_bits, info_rate)?;
    Ok(qs
        .into_iter()
        .map(|q| EstimatePoint {
            q,
            entropy: (key_bits - q as f64 * info_rate).max(0.0),
            in_domain: (q as f64) < horizon,
        })
        .collect())
}

/// Smallest message length `q` at which the estimate `L - q U` is at or
/// below `threshold_bits`. `None` when the estimate never declines.
pub fn threshold_crossing(key_bits: f64, info_rate: f64, threshold_bits: f64) -> Option<u64> {
    if threshold_bits >= key_bits {
        return Some(0);
    }
    if !(info_rate > 0.0) {
        return None;
    }
    let q = libm::ceil((key_bits - threshold_bits) / info_rate);
    Some(q as u64)
}

/// `2^-H`: the smallest probability of the correct key compatible with
/// entropy `H`.
pub fn min_prob_from_entropy(entropy_bits: f64) -> f64 {
    exp2(-entropy_bits)
}

/// Requested absolute accuracy of [`exact_symbol_info`], in bits.
pub const SYMBOL_INFO_TOLERANCE: f64 = 1e-4;

/// Ciphertext-only mutual information `I(Y; R)` for one symbol of the
/// wrapped-Gaussian channel (running key and data bit uniform).
pub fn exact_symbol_info(symbols: f64, sigma: f64) -> Result<f64> {
    exact_symbol_info_with_mode(symbols, sigma, AttackMode::CiphertextOnly)
}

/// `I(Y; R)` with the data bit unknown, or `I(Y; R | B)` when it is known.
///
/// `h(Y)` uses the fact that the output density is periodic with period one
/// symbol; the conditional entropy integrates the one- or two-peak noise
/// density over a half period. Both integrals are adaptive Simpson.
pub fn exact_symbol_info_with_mode(symbols: f64, sigma: f64, mode: AttackMode) -> Result<f64> {
    let channel = ChannelModel::wrapped_gaussian(sigma)?;
    if !(symbols >= 2.0) {
        return Err(Error::invalid("M", "at least two symbols"));
    }
    let tol = SYMBOL_INFO_TOLERANCE * 1e-3;
    let mut err = 0.0;

    let output = OutputDensity::new(symbols, sigma);
    let (h_out, e) = integrate(
        |y| neg_plogp(output.eval(y)),
        &breakpoints(0.5, sigma),
        tol / (2.0 * symbols),
    );
    let h_out = 2.0 * symbols * h_out;
    err += 2.0 * symbols * e;

    let (h_cond, cap) = match mode {
        AttackMode::CiphertextOnly => {
            let half = 0.5 * symbols;
            let mix = |y: f64| 0.5 * (channel.density(y, symbols) + channel.density(y - half, symbols));
            let (v, e) = integrate(|y| neg_plogp(mix(y)), &breakpoints(0.25 * symbols, sigma), tol / 4.0);
            err += 4.0 * e;
            (4.0 * v, log2(half))
        }
        AttackMode::KnownPlaintext => {
            let (v, e) = integrate(
                |y| neg_plogp(channel.density(y, symbols)),
                &breakpoints(0.5 * symbols, sigma),
                tol / 2.0,
            );
            err += 2.0 * e;
            (2.0 * v, log2(symbols))
        }
    };
    if !(err <= SYMBOL_INFO_TOLERANCE) {
        return Err(Error::Quadrature {
            achieved: err,
            requested: SYMBOL_INFO_TOLERANCE,
        });
    }
    Ok((h_out - h_cond).clamp(0.0, cap))
}

fn neg_plogp(p: f64) -> f64 {
    if p > 0.0 {
        -p * log2(p)
    } else {
        0.0
    }
}

/// Density of the received phase when the running key is uniform on the
/// integers: `(1/M) Σ_n φ(y - n; σ)`, periodic in `y` with period 1.
struct OutputDensity {
    symbols: f64,
    sigma: f64,
    // Fourier coefficients exp(-2 pi^2 k^2 sigma^2), k ≥ 1
    fourier: Vec<f64>,
}

impl OutputDensity {
    fn new(symbols: f64, sigma: f64) -> Self {
        let mut fourier = Vec::new();
        if sigma >= 0.5 {
            let mut k = 1.0;
            loop {
                let c = exp(-2.0 * PI * PI * k * k * sigma * sigma);
                if c < 1e-18 {
                    break;
                }
                fourier.push(c);
                k += 1.0;
            }
        }
        Self {
            symbols,
            sigma,
            fourier,
        }
    }

    fn eval(&self, y: f64) -> f64 {
        if self.sigma >= 0.5 {
            let s: f64 = self
                .fourier
                .iter()
                .enumerate()
                .map(|(i, c)| 2.0 * c * cos(2.0 * PI * (i + 1) as f64 * y))
                .sum();
            (1.0 + s) / self.symbols
        } else {
            let reach = libm::ceil(40.0 * self.sigma) as i64 + 1;
            let norm = 1.0 / (self.sigma * sqrt(2.0 * PI));
            let s: f64 = (-reach..=reach + 1)
                .map(|n| {
                    let d = y - n as f64;
                    exp(-d * d / (2.0 * self.sigma * self.sigma))
                })
                .sum();
            norm * s / self.symbols
        }
    }
}

/// Panel edges on `[0, end]`, refined geometrically towards the peak at 0.
fn breakpoints(end: f64, sigma: f64) -> Vec<f64> {
    let mut pts = Vec::new();
    pts.push(0.0);
    let mut x = sigma / 8.0;
    while x < end {
        pts.push(x);
        x *= 2.0;
    }
    let last = *pts.last().unwrap_or(&0.0);
    let panels = 16;
    for i in 1..=panels {
        let v = last + (end - last) * i as f64 / panels as f64;
        if v > last {
            pts.push(v);
        }
    }
    pts.dedup();
    pts
}

const MIN_DEPTH: u32 = 3;
const MAX_DEPTH: u32 = 40;

/// Adaptive Simpson over consecutive panels. Returns the integral and the
/// accumulated error estimate.
fn integrate(f: impl Fn(f64) -> f64, edges: &[f64], tol: f64) -> (f64, f64) {
    let span = edges[edges.len() - 1] - edges[0];
    let mut total = 0.0;
    let mut err = 0.0;
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let panel_tol = tol * (b - a) / span;
        let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        total += simpson_step(&f, a, b, fa, fm, fb, whole, panel_tol, 0, &mut err);
    }
    (total, err)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    err: &mut f64,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth >= MAX_DEPTH || (depth >= MIN_DEPTH && delta.abs() <= 15.0 * tol) {
        *err += delta.abs() / 15.0;
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1, err)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1, err)
}
