//! αη symbol encoding, the additive stream-cipher baseline, and the noisy
//! phase-measurement channel.
//!
//! Phases are measured in symbol-index units: the circle has circumference
//! `M`, symbol `s` sits at phase `s`, and noise is added modulo `M`.

use libm::{exp, fmod, log, sqrt};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::keystream::RunningKey;
use crate::numeric::{log_add_exp, LN_2, LOG_ZERO};
use crate::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `-ln(1e-300)` rounded up; wrap terms below this relative size are dropped.
const WRAP_TAIL_NATS: f64 = 700.0;

/// Measurement-noise model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelModel {
    /// Normal noise with standard deviation `sigma`, wrapped onto the circle.
    WrappedGaussian { sigma: f64 },
    /// Noise uniform on an arc covering `arc_fraction` of the circle,
    /// centred on the transmitted symbol.
    UniformArc { arc_fraction: f64 },
}

impl ChannelModel {
    pub fn wrapped_gaussian(sigma: f64) -> Result<Self> {
        let ch = ChannelModel::WrappedGaussian { sigma };
        ch.validate()?;
        Ok(ch)
    }

    pub fn uniform_arc(arc_fraction: f64) -> Result<Self> {
        let ch = ChannelModel::UniformArc { arc_fraction };
        ch.validate()?;
        Ok(ch)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ChannelModel::WrappedGaussian { sigma } => {
                if !(sigma.is_finite() && sigma > 0.0) {
                    return Err(Error::invalid("channel.sigma", "must be finite and positive"));
                }
            }
            ChannelModel::UniformArc { arc_fraction } => {
                if !(arc_fraction > 0.0 && arc_fraction <= 1.0) {
                    return Err(Error::invalid("channel.arc_fraction", "must lie in (0, 1]"));
                }
            }
        }
        Ok(())
    }

    /// Log of the noise density at circular displacement `delta`.
    /// The wrapped Gaussian is strictly positive everywhere; the uniform arc
    /// returns [`LOG_ZERO`] outside its support.
    pub fn log_density(&self, delta: f64, symbols: f64) -> f64 {
        let d = reduce_displacement(delta, symbols).abs();
        match *self {
            ChannelModel::WrappedGaussian { sigma } => {
                let terms = wrap_terms(sigma, symbols);
                wrapped_gaussian_log_density(d, sigma, symbols, terms)
            }
            ChannelModel::UniformArc { arc_fraction } => {
                let width = arc_fraction * symbols;
                if d <= 0.5 * width {
                    -log(width)
                } else {
                    LOG_ZERO
                }
            }
        }
    }

    /// Noise density at circular displacement `delta`.
    pub fn density(&self, delta: f64, symbols: f64) -> f64 {
        exp(self.log_density(delta, symbols))
    }

    /// Draws one noise displacement.
    pub fn sample_noise<R: Rng + ?Sized>(&self, symbols: f64, rng: &mut R) -> f64 {
        match *self {
            ChannelModel::WrappedGaussian { sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                sigma * z
            }
            ChannelModel::UniformArc { arc_fraction } => {
                let u: f64 = rng.random();
                (u - 0.5) * arc_fraction * symbols
            }
        }
    }
}

/// Reduces a displacement onto `[-M/2, M/2)`.
pub fn reduce_displacement(delta: f64, symbols: f64) -> f64 {
    if (-0.5 * symbols..0.5 * symbols).contains(&delta) {
        return delta;
    }
    wrap_phase(delta + 0.5 * symbols, symbols) - 0.5 * symbols
}

/// Reduces a phase onto `[0, M)`.
pub fn wrap_phase(x: f64, symbols: f64) -> f64 {
    let mut r = fmod(x, symbols);
    if r < 0.0 {
        r += symbols;
    }
    if r >= symbols {
        r = 0.0;
    }
    r
}

/// Number of wrap terms on each side of the central one so that the
/// dropped tail is below `1e-300` of the density.
pub fn wrap_terms(sigma: f64, symbols: f64) -> u32 {
    // dropped/kept <= exp(-J (J + 1) M^2 / (2 sigma^2))
    let need = 2.0 * WRAP_TAIL_NATS * (sigma / symbols) * (sigma / symbols);
    let mut j = 1u32;
    while ((j * (j + 1)) as f64) <= need {
        j += 1;
    }
    j
}

/// Wrapped-Gaussian log density at `|delta| <= M/2` using `2 terms + 1`
/// images of the normal density.
pub fn wrapped_gaussian_log_density(delta: f64, sigma: f64, symbols: f64, terms: u32) -> f64 {
    let inv = 1.0 / (2.0 * sigma * sigma);
    let centre = -delta * delta * inv;
    let mut s = 1.0;
    for j in 1..=terms {
        let shift = j as f64 * symbols;
        let a = delta + shift;
        let b = delta - shift;
        s += exp(-a * a * inv - centre) + exp(-b * b * inv - centre);
    }
    centre + log(s) - log(sigma) - LN_SQRT_2PI
}

/// Direct (linear-domain) image sum, used to check the truncation rule.
pub fn wrapped_gaussian_density_with_terms(delta: f64, sigma: f64, symbols: f64, terms: i32) -> f64 {
    let norm = 1.0 / (sigma * sqrt(2.0 * core::f64::consts::PI));
    (-terms..=terms)
        .map(|j| {
            let x = delta + j as f64 * symbols;
            norm * exp(-x * x / (2.0 * sigma * sigma))
        })
        .sum()
}

/// Transmitted phase label in `[0, M)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymbolIndex(u32);

impl SymbolIndex {
    pub fn value(self) -> u32 {
        self.0
    }
}

/// Measured phase in `[0, M)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation(f64);

impl Observation {
    pub fn new(value: f64, symbols: u32) -> Result<Self> {
        if !(value.is_finite() && value >= 0.0 && value < symbols as f64) {
            return Err(Error::invalid("observation", "must be finite and in [0, M)"));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    /// Message bits unknown to the eavesdropper and marginalized.
    CiphertextOnly,
    /// Message bits known to the eavesdropper.
    KnownPlaintext,
}

/// `(r + b M/2) mod M`: the data bit picks one of two antipodal phases.
pub fn encode_symbol(running_key: RunningKey, bit: u8, symbols: u32) -> Result<SymbolIndex> {
    if !symbols.is_multiple_of(2) {
        return Err(Error::invalid("M", "must be even"));
    }
    if running_key.value() >= symbols || bit > 1 {
        return Err(Error::invalid("symbol", "running key or bit out of range"));
    }
    Ok(SymbolIndex(
        (running_key.value() + bit as u32 * (symbols / 2)) % symbols,
    ))
}

/// Adds channel noise to the transmitted phase.
pub fn measure<R: Rng + ?Sized>(
    symbol: SymbolIndex,
    channel: &ChannelModel,
    symbols: u32,
    rng: &mut R,
) -> Observation {
    let m = symbols as f64;
    let noise = channel.sample_noise(m, rng);
    Observation(wrap_phase(symbol.value() as f64 + noise, m))
}

/// Log-density of `observation` given running key `running_key`.
///
/// Ciphertext-only marginalizes the data bit over the two antipodal phases;
/// known-plaintext conditions on `known_bit`.
pub fn symbol_log_likelihood(
    observation: Observation,
    running_key: RunningKey,
    mode: AttackMode,
    known_bit: Option<u8>,
    channel: &ChannelModel,
    symbols: u32,
) -> Result<f64> {
    let m = symbols as f64;
    let r = running_key.value() as f64;
    let y = observation.value();
    match mode {
        AttackMode::CiphertextOnly => {
            let s1 = wrap_phase(r + 0.5 * m, m);
            Ok(log_add_exp(
                channel.log_density(y - r, m),
                channel.log_density(y - s1, m),
            ) - LN_2)
        }
        AttackMode::KnownPlaintext => {
            let bit = known_bit.ok_or_else(|| {
                Error::invalid("known_bit", "known-plaintext likelihood needs the data bit")
            })?;
            let s = encode_symbol(running_key, bit, symbols)?;
            Ok(channel.log_density(y - s.value() as f64, m))
        }
    }
}

/// Fills `out[r]` with [`symbol_log_likelihood`] for every running key
/// `r < M`. `out.len()` must equal `M`.
pub fn fill_symbol_log_likelihoods(
    observation: Observation,
    mode: AttackMode,
    known_bit: Option<u8>,
    channel: &ChannelModel,
    symbols: u32,
    out: &mut [f64],
) -> Result<()> {
    debug_assert_eq!(out.len(), symbols as usize);
    match mode {
        AttackMode::CiphertextOnly => {
            // antipodal keys share a likelihood
            let half = (symbols / 2) as usize;
            for (r, slot) in out[..half].iter_mut().enumerate() {
                *slot = symbol_log_likelihood(
                    observation,
                    RunningKey::new(r as u32, symbols)?,
                    mode,
                    None,
                    channel,
                    symbols,
                )?;
            }
            out.copy_within(0..half, half);
        }
        AttackMode::KnownPlaintext => {
            for (r, slot) in out.iter_mut().enumerate() {
                *slot = symbol_log_likelihood(
                    observation,
                    RunningKey::new(r as u32, symbols)?,
                    mode,
                    known_bit,
                    channel,
                    symbols,
                )?;
            }
        }
    }
    Ok(())
}

/// One-bit additive stream cipher.
#[inline]
pub fn additive_encrypt(plain_bit: u8, key_bit: u8) -> u8 {
    plain_bit ^ key_bit
}

/// Log-probability of an additive-cipher ciphertext bit given the key bit.
/// Without the plaintext every key bit explains the ciphertext equally well.
pub fn additive_log_likelihood(
    cipher_bit: u8,
    key_bit: u8,
    mode: AttackMode,
    known_bit: Option<u8>,
) -> Result<f64> {
    match mode {
        AttackMode::CiphertextOnly => Ok(-LN_2),
        AttackMode::KnownPlaintext => {
            let bit = known_bit.ok_or_else(|| {
                Error::invalid("known_bit", "known-plaintext likelihood needs the data bit")
            })?;
            Ok(if additive_encrypt(bit, key_bit) == cipher_bit {
                0.0
            } else {
                LOG_ZERO
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rk(v: u32) -> RunningKey {
        RunningKey::new(v, 256).unwrap()
    }

    /// Periodic trapezoid rule; spectrally accurate for smooth periodic integrands.
    fn periodic_trapezoid(f: impl Fn(f64) -> f64, period: f64, n: usize) -> f64 {
        let h = period / n as f64;
        (0..n).map(|i| f(-0.5 * period + i as f64 * h)).sum::<f64>() * h
    }

    fn midpoint(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        (0..n).map(|i| f(a + (i as f64 + 0.5) * h)).sum::<f64>() * h
    }

    #[test]
    fn encode_examples() {
        assert_eq!(encode_symbol(rk(0), 0, 256).unwrap().value(), 0);
        assert_eq!(encode_symbol(rk(0), 1, 256).unwrap().value(), 128);
        assert_eq!(encode_symbol(rk(200), 1, 256).unwrap().value(), 72);
        assert!(encode_symbol(RunningKey::new(0, 255).unwrap(), 1, 255).is_err());
    }

    #[test]
    fn vanishing_noise_returns_the_symbol() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ch = ChannelModel::wrapped_gaussian(1e-12).unwrap();
        for s in [0u32, 17, 255] {
            let y = measure(SymbolIndex(s), &ch, 256, &mut rng).value();
            let d = reduce_displacement(y - s as f64, 256.0);
            assert!(d.abs() < 1e-9);
        }
    }

    #[test]
    fn quarter_arc_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ch = ChannelModel::uniform_arc(0.25).unwrap();
        for _ in 0..20_000 {
            let y = measure(SymbolIndex(0), &ch, 256, &mut rng).value();
            assert!((0.0..32.0).contains(&y) || (224.0..256.0).contains(&y), "{y}");
        }
    }

    #[test]
    fn empirical_noise_std_matches_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ch = ChannelModel::wrapped_gaussian(16.0).unwrap();
        let n = 100_000;
        let s = SymbolIndex(100);
        let ds: Vec<f64> = (0..n)
            .map(|_| reduce_displacement(measure(s, &ch, 256, &mut rng).value() - 100.0, 256.0))
            .collect();
        let mean = ds.iter().sum::<f64>() / n as f64;
        let var = ds.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var.sqrt() - 16.0).abs() < 0.2, "std {}", var.sqrt());
    }

    #[test]
    fn gaussian_tail_never_reaches_zero() {
        let ch = ChannelModel::wrapped_gaussian(16.0).unwrap();
        assert!(ch.density(128.0, 256.0) > 0.0);
        // far tail of a narrow channel is still representable in log form
        let narrow = ChannelModel::wrapped_gaussian(1e-3).unwrap();
        assert!(narrow.log_density(128.0, 256.0).is_finite());
    }

    #[test]
    fn arc_density_outside_support_is_zero() {
        let ch = ChannelModel::uniform_arc(0.25).unwrap();
        assert_eq!(ch.density(33.0, 256.0), 0.0);
        assert_eq!(ch.log_density(33.0, 256.0), LOG_ZERO);
        assert!((ch.density(32.0, 256.0) * 64.0 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn densities_integrate_to_one() {
        for sigma in [1.0, 4.0, 16.0, 64.0] {
            let ch = ChannelModel::wrapped_gaussian(sigma).unwrap();
            let total = periodic_trapezoid(|d| ch.density(d, 256.0), 256.0, 8192);
            assert!((total - 1.0).abs() < 1e-9, "sigma {sigma}: {total}");
        }
        for frac in [0.25, 0.5, 1.0] {
            let ch = ChannelModel::uniform_arc(frac).unwrap();
            let half = 0.5 * frac * 256.0;
            let inside = midpoint(|d| ch.density(d, 256.0), -half, half, 1000);
            let outside = midpoint(|d| ch.density(d, 256.0), half, 256.0 - half, 1000);
            assert!((inside + outside - 1.0).abs() < 1e-9, "arc {frac}");
        }
    }

    #[test]
    fn truncation_beyond_five_terms_is_invisible() {
        for sigma in [1.0, 4.0, 16.0, 32.0, 64.0] {
            for i in 0..=64 {
                let d = i as f64 * 2.0;
                let j5 = wrapped_gaussian_density_with_terms(d, sigma, 256.0, 5);
                let j10 = wrapped_gaussian_density_with_terms(d, sigma, 256.0, 10);
                assert!((j10 - j5).abs() <= 1e-300 * j5.abs().max(f64::MIN_POSITIVE));
            }
        }
    }

    #[test]
    fn adaptive_wrap_matches_wide_direct_sum() {
        for sigma in [0.5, 16.0, 64.0, 256.0, 1000.0] {
            let terms = wrap_terms(sigma, 256.0);
            for i in 0..=16 {
                let d = i as f64 * 8.0;
                let fast = exp(wrapped_gaussian_log_density(d, sigma, 256.0, terms));
                let wide = wrapped_gaussian_density_with_terms(d, sigma, 256.0, terms as i32 + 40);
                if wide > 1e-280 {
                    assert!(((fast - wide) / wide).abs() < 1e-13, "sigma {sigma} d {d}");
                } else {
                    assert!(fast < 1e-270, "sigma {sigma} d {d}: {fast}");
                }
            }
        }
        assert!(wrap_terms(64.0, 256.0) <= 10);
    }

    #[test]
    fn ciphertext_only_on_the_symbol() {
        let ch = ChannelModel::wrapped_gaussian(16.0).unwrap();
        let y = Observation::new(40.0, 256).unwrap();
        let got = symbol_log_likelihood(y, rk(40), AttackMode::CiphertextOnly, None, &ch, 256).unwrap();
        let expected = (0.5 * (ch.density(0.0, 256.0) + ch.density(128.0, 256.0))).ln();
        assert!((got - expected).abs() < 1e-14);
    }

    #[test]
    fn known_plaintext_needs_the_bit_and_can_exclude() {
        let ch = ChannelModel::uniform_arc(0.25).unwrap();
        let y = Observation::new(64.0, 256).unwrap();
        assert!(symbol_log_likelihood(y, rk(0), AttackMode::KnownPlaintext, None, &ch, 256).is_err());
        let v = symbol_log_likelihood(y, rk(0), AttackMode::KnownPlaintext, Some(0), &ch, 256).unwrap();
        assert_eq!(v, LOG_ZERO);
        let v = symbol_log_likelihood(y, rk(0), AttackMode::KnownPlaintext, Some(1), &ch, 256).unwrap();
        assert_eq!(v, LOG_ZERO);
    }

    #[test]
    fn likelihood_table_matches_pointwise() {
        let ch = ChannelModel::wrapped_gaussian(16.0).unwrap();
        let y = Observation::new(201.25, 256).unwrap();
        for (mode, bit) in [(AttackMode::CiphertextOnly, None), (AttackMode::KnownPlaintext, Some(1))] {
            let mut table = vec![0.0; 256];
            fill_symbol_log_likelihoods(y, mode, bit, &ch, 256, &mut table).unwrap();
            for r in 0..256 {
                let v = symbol_log_likelihood(y, rk(r), mode, bit, &ch, 256).unwrap();
                assert_eq!(table[r as usize], v);
            }
        }
    }

    #[test]
    fn additive_cipher_truth_table() {
        assert_eq!(additive_encrypt(0, 0), 0);
        assert_eq!(additive_encrypt(1, 0), 1);
        assert_eq!(additive_encrypt(1, 1), 0);
        assert_eq!(additive_encrypt(0, 1), 1);
        let co = additive_log_likelihood(1, 0, AttackMode::CiphertextOnly, None).unwrap();
        assert_eq!(co, additive_log_likelihood(1, 1, AttackMode::CiphertextOnly, None).unwrap());
        assert_eq!(
            additive_log_likelihood(1, 1, AttackMode::KnownPlaintext, Some(1)).unwrap(),
            LOG_ZERO
        );
    }

    proptest! {
        #[test]
        fn density_is_even(d in -128.0f64..128.0, sigma in 0.5f64..64.0, frac in 0.05f64..1.0) {
            let g = ChannelModel::wrapped_gaussian(sigma).unwrap();
            prop_assert_eq!(g.density(d, 256.0), g.density(-d, 256.0));
            let a = ChannelModel::uniform_arc(frac).unwrap();
            prop_assert_eq!(a.density(d, 256.0), a.density(-d, 256.0));
            prop_assert!(g.density(d, 256.0) >= 0.0);
        }

        #[test]
        fn antipodal_keys_share_likelihood(y in 0.0f64..256.0, r in 0u32..256, sigma in 0.5f64..80.0) {
            let ch = ChannelModel::wrapped_gaussian(sigma).unwrap();
            let obs = Observation::new(y, 256).unwrap();
            let a = symbol_log_likelihood(obs, rk(r), AttackMode::CiphertextOnly, None, &ch, 256).unwrap();
            let b = symbol_log_likelihood(obs, rk((r + 128) % 256), AttackMode::CiphertextOnly, None, &ch, 256).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
