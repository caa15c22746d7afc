//! Eve's exact posterior over all `2^L` seed keys.
//!
//! Probabilities are kept as natural logs. `LOG_ZERO` (negative infinity)
//! marks an exact zero: once a key is excluded it stays excluded, which is
//! what separates analytic elimination from floating-point underflow.
//! Entropies are reported in bits.

use alloc::vec;
use alloc::vec::Vec;
use libm::{exp, exp2, log};

use crate::numeric::{log_sum_exp_into, pairwise_sum, LN_2, LOG_ZERO};
use crate::{Error, Result};

/// Largest key space a posterior may be allocated for, in bits.
pub const MAX_POSTERIOR_BITS: u32 = 20;

/// Relative slack for `collision >= 2^-entropy` (both sides carry rounding).
pub const COLLISION_BOUND_RTOL: f64 = 1e-12;

const CHUNK: usize = 64;

/// Summary statistics of a normalized posterior, produced by
/// [`Posterior::update`] in the same pass that renormalizes it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorStats {
    /// Shannon entropy in bits.
    pub entropy: f64,
    /// `Σ p²`.
    pub collision: f64,
    /// Number of keys with nonzero probability.
    pub support: usize,
    /// `ln Σ p` after normalization; zero up to rounding.
    pub log_mass: f64,
}

#[derive(Debug, Clone)]
pub struct Posterior {
    key_bits: u32,
    log_probs: Vec<f64>,
    scratch: Vec<f64>,
    partials: [Vec<f64>; 3],
}

impl Posterior {
    /// Uniform prior `2^-L` over every seed key.
    pub fn uniform(key_bits: u32) -> Result<Self> {
        Self::uniform_with_limit(key_bits, MAX_POSTERIOR_BITS)
    }

    pub fn uniform_with_limit(key_bits: u32, max_bits: u32) -> Result<Self> {
        if key_bits == 0 {
            return Err(Error::invalid("L", "key space must contain at least two keys"));
        }
        if key_bits > max_bits {
            return Err(Error::ResourceLimit {
                what: "posterior key bits",
                requested: key_bits as f64,
                limit: max_bits as f64,
            });
        }
        let n = 1usize << key_bits;
        let lp = -(key_bits as f64) * LN_2;
        Ok(Self::with_log_probs(key_bits, vec![lp; n]))
    }

    /// Posterior from explicit probabilities (normalized here).
    pub fn from_probabilities(probs: &[f64]) -> Result<Self> {
        let n = probs.len();
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::invalid("posterior", "length must be a power of two, at least 2"));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid("posterior", "probabilities must be finite and nonnegative"));
        }
        let lp = probs
            .iter()
            .map(|&p| if p == 0.0 { LOG_ZERO } else { log(p) })
            .collect();
        let mut post = Self::with_log_probs(n.trailing_zeros(), lp);
        post.normalize(0)?;
        Ok(post)
    }

    fn with_log_probs(key_bits: u32, log_probs: Vec<f64>) -> Self {
        let n = log_probs.len();
        let chunks = n.div_ceil(CHUNK);
        Self {
            key_bits,
            log_probs,
            scratch: vec![0.0; n],
            partials: [vec![0.0; chunks], vec![0.0; chunks], vec![0.0; chunks]],
        }
    }

    pub fn key_bits(&self) -> u32 {
        self.key_bits
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    /// Multiplies every key's probability by its likelihood (adds in log
    /// space) and renormalizes. `q` only labels the inconsistency error.
    pub fn update(&mut self, q: usize, log_likelihood: impl Fn(usize) -> f64) -> Result<PosteriorStats> {
        for (k, lp) in self.log_probs.iter_mut().enumerate() {
            *lp += log_likelihood(k);
        }
        self.normalize(q)
    }

    /// [`Posterior::update`] where key `k` has likelihood `table[row[k]]`.
    pub fn update_from_table(&mut self, q: usize, row: &[u16], table: &[f64]) -> Result<PosteriorStats> {
        debug_assert_eq!(row.len(), self.log_probs.len());
        for (lp, &r) in self.log_probs.iter_mut().zip(row) {
            *lp += table[r as usize];
        }
        self.normalize(q)
    }

    /// Renormalizes and returns the statistics of the result.
    pub fn normalize(&mut self, q: usize) -> Result<PosteriorStats> {
        if self.log_probs.iter().all(|&lp| lp == LOG_ZERO) {
            return Err(Error::Inconsistent { q });
        }
        let lse = log_sum_exp_into(&self.log_probs, &mut self.scratch);
        if lse.is_nan() {
            // a NaN likelihood poisons the whole posterior; keep it visible
            self.log_probs.iter_mut().for_each(|lp| *lp = f64::NAN);
            return Ok(PosteriorStats {
                entropy: f64::NAN,
                collision: f64::NAN,
                support: self.log_probs.len(),
                log_mass: f64::NAN,
            });
        }
        let mass = pairwise_sum(&self.scratch);
        let inv = 1.0 / mass;

        let mut support = 0usize;
        let [ent_parts, coll_parts, mass_parts] = &mut self.partials;
        for (c, (lps, es)) in self
            .log_probs
            .chunks_mut(CHUNK)
            .zip(self.scratch.chunks(CHUNK))
            .enumerate()
        {
            let (mut ent, mut coll, mut tot) = (0.0, 0.0, 0.0);
            for (lp, &e) in lps.iter_mut().zip(es) {
                *lp -= lse;
                if *lp != LOG_ZERO {
                    let p = e * inv;
                    support += 1;
                    ent -= p * *lp;
                    coll += p * p;
                    tot += p;
                }
            }
            ent_parts[c] = ent;
            coll_parts[c] = coll;
            mass_parts[c] = tot;
        }
        let entropy = clamp_entropy(pairwise_sum(ent_parts) / LN_2, self.key_bits);
        Ok(PosteriorStats {
            entropy,
            collision: pairwise_sum(coll_parts),
            support,
            log_mass: log(pairwise_sum(mass_parts)),
        })
    }

    /// Shannon entropy in bits, `0 log 0 = 0`.
    pub fn entropy(&self) -> f64 {
        let terms: Vec<f64> = self
            .log_probs
            .iter()
            .map(|&lp| if lp == LOG_ZERO { 0.0 } else { -exp(lp) * lp })
            .collect();
        clamp_entropy(pairwise_sum(&terms) / LN_2, self.key_bits)
    }

    pub fn prob_correct(&self, true_key: usize) -> f64 {
        exp(self.log_probs[true_key])
    }

    /// `Σ p²`.
    pub fn collision_prob(&self) -> f64 {
        let terms: Vec<f64> = self.log_probs.iter().map(|&lp| exp(2.0 * lp)).collect();
        pairwise_sum(&terms)
    }

    /// Keys other than `true_key` whose probability is not exactly zero.
    pub fn count_nonzero_false(&self, true_key: usize) -> usize {
        self.log_probs
            .iter()
            .enumerate()
            .filter(|&(k, &lp)| k != true_key && lp != LOG_ZERO)
            .count()
    }

    /// `ln Σ p`; zero for a normalized posterior.
    pub fn log_mass(&self) -> f64 {
        let mut scratch = vec![0.0; self.log_probs.len()];
        log_sum_exp_into(&self.log_probs, &mut scratch)
    }
}

// NaN passes through untouched so that a corrupted run stays visible.
fn clamp_entropy(h: f64, key_bits: u32) -> f64 {
    if h < 0.0 {
        0.0
    } else if h > key_bits as f64 {
        key_bits as f64
    } else {
        h
    }
}

/// `collision ≥ 2^-entropy` (Rényi-2 entropy never exceeds Shannon entropy),
/// with [`COLLISION_BOUND_RTOL`] relative slack. False for NaN inputs.
pub fn collision_bound_holds(collision: f64, entropy: f64) -> bool {
    collision >= exp2(-entropy) * (1.0 - COLLISION_BOUND_RTOL)
}
