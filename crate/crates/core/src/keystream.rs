//! Running-key generation: an L-bit Fibonacci LFSR and an ideal-random
//! reference, both viewed as an ordered list of maps from seed keys to
//! running keys.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::numeric::fmix64;
use crate::{Error, Result};

/// Largest register the LFSR implementation supports.
pub const MAX_LFSR_BITS: u32 = 32;

/// Largest running-key alphabet, as a bit count (`M = 2^16`).
pub const MAX_SYMBOL_BITS: u32 = 16;

/// Tap sets of primitive feedback polynomials, indexed by register length.
/// Tap `t` refers to register position `t` (1-based); tap `L` is always present.
const PRESET_TAPS: &[(u32, &[u32])] = &[
    (2, &[2, 1]),
    (3, &[3, 2]),
    (4, &[4, 3]),
    (5, &[5, 3]),
    (6, &[6, 5]),
    (7, &[7, 6]),
    (8, &[8, 6, 5, 4]),
    (9, &[9, 5]),
    (10, &[10, 7]),
    (11, &[11, 9]),
    (12, &[12, 6, 4, 1]),
    (13, &[13, 4, 3, 1]),
    (14, &[14, 5, 3, 1]),
    (15, &[15, 14]),
    (16, &[16, 15, 13, 4]),
    (17, &[17, 14]),
    (18, &[18, 11]),
    (19, &[19, 6, 2, 1]),
    (20, &[20, 17]),
];

/// Register length and feedback taps of a Fibonacci LFSR.
///
/// Positions are numbered `1..=L`; position `p` is bit `p - 1` of the state
/// word. Each step outputs position `L`, shifts every position up by one and
/// writes the XOR of the tapped positions into position 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LfsrSpec {
    #[serde(rename = "L")]
    length_bits: u32,
    taps: Vec<u32>,
}

impl LfsrSpec {
    pub fn new(length_bits: u32, taps: impl Into<Vec<u32>>) -> Result<Self> {
        let spec = Self {
            length_bits,
            taps: taps.into(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Built-in primitive polynomial for `length_bits` in `2..=20`.
    pub fn preset(length_bits: u32) -> Result<Self> {
        PRESET_TAPS
            .iter()
            .find(|(l, _)| *l == length_bits)
            .map(|(l, taps)| Self {
                length_bits: *l,
                taps: taps.to_vec(),
            })
            .ok_or_else(|| Error::invalid("L", "no built-in LFSR polynomial for this length"))
    }

    /// Lengths with a built-in primitive polynomial.
    pub fn preset_lengths() -> impl Iterator<Item = u32> {
        PRESET_TAPS.iter().map(|(l, _)| *l)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.length_bits;
        if !(2..=MAX_LFSR_BITS).contains(&l) {
            return Err(Error::invalid("prng.lfsr.L", "register length must be in 2..=32"));
        }
        if self.taps.is_empty() {
            return Err(Error::invalid("prng.lfsr.taps", "tap set is empty"));
        }
        if !self.taps.contains(&l) {
            return Err(Error::invalid("prng.lfsr.taps", "tap L must be present"));
        }
        if self.taps.iter().any(|&t| t == 0 || t > l) {
            return Err(Error::invalid("prng.lfsr.taps", "taps must lie in [1, L]"));
        }
        Ok(())
    }

    pub fn length_bits(&self) -> u32 {
        self.length_bits
    }

    pub fn taps(&self) -> &[u32] {
        &self.taps
    }

    fn state_mask(&self) -> u32 {
        if self.length_bits == 32 {
            u32::MAX
        } else {
            (1u32 << self.length_bits) - 1
        }
    }

    fn feedback_mask(&self) -> u32 {
        self.taps.iter().fold(0, |m, &t| m | 1 << (t - 1))
    }

    /// One register step: returns the output bit and the next state.
    #[inline]
    pub fn step(&self, state: u32) -> (u8, u32) {
        Lfsr::new(self, state).step_with_state()
    }

    /// Polynomial in conventional notation, e.g. `x^13 + x^4 + x^3 + x + 1`.
    pub fn polynomial_string(&self) -> alloc::string::String {
        use core::fmt::Write;
        let mut taps = self.taps.clone();
        taps.sort_unstable_by(|a, b| b.cmp(a));
        taps.dedup();
        let mut s = alloc::string::String::new();
        for t in taps {
            let _ = match t {
                1 => write!(s, "x + "),
                _ => write!(s, "x^{t} + "),
            };
        }
        s.push('1');
        s
    }
}

/// Free-function form of [`LfsrSpec::step`].
pub fn lfsr_next_bit(state: u32, spec: &LfsrSpec) -> (u8, u32) {
    spec.step(state)
}

/// A running register. Single-owner; create one per seed.
#[derive(Debug, Clone)]
pub struct Lfsr {
    state: u32,
    feedback: u32,
    mask: u32,
    out_shift: u32,
}

impl Lfsr {
    pub fn new(spec: &LfsrSpec, state: u32) -> Self {
        let mask = spec.state_mask();
        Self {
            state: state & mask,
            feedback: spec.feedback_mask(),
            mask,
            out_shift: spec.length_bits - 1,
        }
    }

    pub fn state(&self) -> u32 {
        self.state
    }

    #[inline]
    pub fn next_bit(&mut self) -> u8 {
        let out = (self.state >> self.out_shift) & 1;
        let fb = (self.state & self.feedback).count_ones() & 1;
        self.state = ((self.state << 1) | fb) & self.mask;
        out as u8
    }

    fn step_with_state(mut self) -> (u8, u32) {
        let b = self.next_bit();
        (b, self.state)
    }

    /// Next `bits` output bits packed most-significant-bit first.
    #[inline]
    pub fn next_symbol(&mut self, bits: u32) -> u32 {
        (0..bits).fold(0, |acc, _| (acc << 1) | self.next_bit() as u32)
    }
}

/// Seed key `K` in `[0, 2^L)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SeedKey(u32);

impl SeedKey {
    pub fn new(value: u32, key_bits: u32) -> Result<Self> {
        if key_bits < 32 && value >> key_bits != 0 {
            return Err(Error::invalid("seed", "seed key out of range [0, 2^L)"));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> u32 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Running key `k_q` in `[0, M)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RunningKey(u32);

impl RunningKey {
    pub fn new(value: u32, symbols: u32) -> Result<Self> {
        if value >= symbols {
            return Err(Error::invalid("running_key", "running key out of range [0, M)"));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> u32 {
        self.0
    }
}

/// Which generator expands a seed key into running keys.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KeystreamSource {
    Lfsr(LfsrSpec),
    /// Uniform running keys, one independent draw per `(seed, q)` from a
    /// keyed random function.
    IdealRandom { key: u64 },
}

/// Deterministic `(seed, q) -> running key` view of a keystream generator.
///
/// Positions `1..=cached_positions` are tabulated at construction (the
/// simulation hot loop reads whole rows); later positions are recomputed on
/// demand. The map is immutable and can be shared between workers.
#[derive(Debug, Clone)]
pub struct KeystreamMap {
    source: KeystreamSource,
    key_bits: u32,
    symbol_bits: u32,
    cached_positions: usize,
    // row-major by position: table[(q - 1) * 2^L + seed]
    table: Vec<u16>,
}

impl KeystreamMap {
    pub fn new(
        source: KeystreamSource,
        key_bits: u32,
        symbol_bits: u32,
        cached_positions: usize,
    ) -> Result<Self> {
        if !(1..=MAX_SYMBOL_BITS).contains(&symbol_bits) {
            return Err(Error::invalid("M", "symbol bits must be in 1..=16 (M a power of two)"));
        }
        match &source {
            KeystreamSource::Lfsr(spec) => {
                spec.validate()?;
                if spec.length_bits() != key_bits {
                    return Err(Error::invalid("prng.lfsr.L", "LFSR length must equal L"));
                }
            }
            KeystreamSource::IdealRandom { .. } => {
                if !(1..=MAX_LFSR_BITS).contains(&key_bits) {
                    return Err(Error::invalid("L", "key bits must be in 1..=32"));
                }
            }
        }
        let n_keys = 1usize << key_bits;
        let mut map = Self {
            source,
            key_bits,
            symbol_bits,
            cached_positions,
            table: vec![0u16; n_keys * cached_positions],
        };
        map.fill_table();
        Ok(map)
    }

    /// LFSR map with the built-in polynomial for `key_bits`.
    pub fn lfsr_preset(key_bits: u32, symbol_bits: u32, cached_positions: usize) -> Result<Self> {
        Self::new(
            KeystreamSource::Lfsr(LfsrSpec::preset(key_bits)?),
            key_bits,
            symbol_bits,
            cached_positions,
        )
    }

    fn fill_table(&mut self) {
        let n_keys = self.n_keys();
        let q_max = self.cached_positions;
        match &self.source {
            KeystreamSource::Lfsr(spec) => {
                for seed in 0..n_keys {
                    let mut reg = Lfsr::new(spec, seed as u32);
                    for q in 0..q_max {
                        self.table[q * n_keys + seed] = reg.next_symbol(self.symbol_bits) as u16;
                    }
                }
            }
            KeystreamSource::IdealRandom { key } => {
                for q in 0..q_max {
                    for seed in 0..n_keys {
                        self.table[q * n_keys + seed] =
                            ideal_symbol(*key, seed as u32, q + 1, self.symbol_bits) as u16;
                    }
                }
            }
        }
    }

    pub fn source(&self) -> &KeystreamSource {
        &self.source
    }

    pub fn key_bits(&self) -> u32 {
        self.key_bits
    }

    pub fn symbol_bits(&self) -> u32 {
        self.symbol_bits
    }

    /// Alphabet size `M = 2^symbol_bits`.
    pub fn symbols(&self) -> u32 {
        1 << self.symbol_bits
    }

    pub fn n_keys(&self) -> usize {
        1usize << self.key_bits
    }

    pub fn cached_positions(&self) -> usize {
        self.cached_positions
    }

    /// Running key of `seed` at position `q ≥ 1`.
    pub fn running_key(&self, seed: SeedKey, q: usize) -> Result<RunningKey> {
        if q == 0 {
            return Err(Error::invalid("q", "positions start at 1"));
        }
        if seed.index() >= self.n_keys() {
            return Err(Error::invalid("seed", "seed key out of range [0, 2^L)"));
        }
        if q <= self.cached_positions {
            return Ok(RunningKey(self.table[(q - 1) * self.n_keys() + seed.index()] as u32));
        }
        let value = match &self.source {
            KeystreamSource::Lfsr(spec) => {
                let mut reg = Lfsr::new(spec, seed.value());
                for _ in 1..q {
                    reg.next_symbol(self.symbol_bits);
                }
                reg.next_symbol(self.symbol_bits)
            }
            KeystreamSource::IdealRandom { key } => {
                ideal_symbol(*key, seed.value(), q, self.symbol_bits)
            }
        };
        Ok(RunningKey(value))
    }

    /// Running keys of every seed at cached position `q`, indexed by seed.
    pub fn row(&self, q: usize) -> Option<&[u16]> {
        if q == 0 || q > self.cached_positions {
            return None;
        }
        let n = self.n_keys();
        Some(&self.table[(q - 1) * n..q * n])
    }
}

#[inline]
fn ideal_symbol(key: u64, seed: u32, q: usize, symbol_bits: u32) -> u32 {
    let word = fmix64(key ^ fmix64(((seed as u64) << 32) ^ q as u64));
    (word >> (64 - symbol_bits)) as u32
}

/// Chi-square statistics of running-key histograms against uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformityReport {
    /// One statistic per position `q = 1..=Q`, each with `M - 1` degrees of freedom.
    pub per_position: Vec<f64>,
    /// Sum of the per-position statistics, `Q (M - 1)` degrees of freedom.
    pub pooled: f64,
    pub degrees_of_freedom: u64,
    pub pooled_degrees_of_freedom: u64,
}

/// Enumerates every seed at positions `1..=positions` and compares the
/// running-key histogram at each position with the uniform distribution on
/// `[0, symbols)`. `budget` caps `2^L * positions`.
pub fn uniformity_stat(
    map: &KeystreamMap,
    symbols: u32,
    positions: usize,
    budget: u64,
) -> Result<UniformityReport> {
    let n_keys = map.n_keys();
    let work = n_keys as u64 * positions as u64;
    if work > budget {
        return Err(Error::ResourceLimit {
            what: "keystream enumeration",
            requested: work as f64,
            limit: budget as f64,
        });
    }
    let dof = symbols.saturating_sub(1) as u64;
    if symbols == 1 {
        return Ok(UniformityReport {
            per_position: vec![0.0; positions],
            pooled: 0.0,
            degrees_of_freedom: 0,
            pooled_degrees_of_freedom: 0,
        });
    }
    if symbols != map.symbols() {
        return Err(Error::invalid("M", "alphabet does not match the keystream map"));
    }
    let expected = n_keys as f64 / symbols as f64;
    let mut counts = vec![0u64; symbols as usize];
    let mut per_position = Vec::with_capacity(positions);
    for q in 1..=positions {
        counts.iter_mut().for_each(|c| *c = 0);
        match map.row(q) {
            Some(row) => row.iter().for_each(|&r| counts[r as usize] += 1),
            None => {
                for seed in 0..n_keys {
                    let r = map.running_key(SeedKey(seed as u32), q)?;
                    counts[r.value() as usize] += 1;
                }
            }
        }
        let stat = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum::<f64>();
        per_position.push(stat);
    }
    let pooled = per_position.iter().sum();
    Ok(UniformityReport {
        per_position,
        pooled,
        degrees_of_freedom: dof,
        pooled_degrees_of_freedom: dof * positions as u64,
    })
}

/// Upper bound `L / log2(M/2)` on the number of statistically independent
/// running keys. `symbols` must be a power of two, at least 4.
pub fn ndep_bound(key_bits: u32, symbols: u32) -> Result<f64> {
    if symbols < 4 || !symbols.is_power_of_two() {
        return Err(Error::invalid("M", "must be a power of two, at least 4"));
    }
    let per_symbol = symbols.trailing_zeros() - 1;
    Ok(key_bits as f64 / per_symbol as f64)
}
