//! Experiment configuration, single Monte Carlo trials, ensemble
//! aggregation and the invariant suite.
//!
//! A trial draws a seed key and a message uniformly, transmits the message
//! symbol by symbol, and lets Eve update her posterior after each
//! measurement. Trials are independent; trial `i` owns a ChaCha8 generator
//! seeded with [`mix`]`(master_seed, i)`, so results do not depend on how
//! trials are scheduled.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use libm::log2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytic::{estimate_curve, info_per_symbol};
use crate::bayes::{collision_bound_holds, Posterior, MAX_POSTERIOR_BITS};
use crate::keystream::{KeystreamMap, KeystreamSource, LfsrSpec, SeedKey, MAX_SYMBOL_BITS};
use crate::numeric::{fmix64, mean_stderr, CompensatedSum};
use crate::transmission::{
    additive_log_likelihood, encode_symbol, fill_symbol_log_likelihoods, measure, AttackMode,
    ChannelModel,
};
use crate::{Error, Result};

/// Default ceiling on `n_trials * Q_max * 2^L` likelihood evaluations.
pub const DEFAULT_MAX_EVALUATIONS: f64 = 1e10;

/// Largest tolerated `|ln Σ p|` after renormalization.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;
const IDEAL_STREAM_DOMAIN: u64 = 0x1dea_15ee_d5ee_d000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CipherKind {
    AlphaEta,
    /// One-bit additive stream cipher over a noiseless channel.
    Additive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrngChoice {
    Lfsr(LfsrSpec),
    IdealRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(rename = "L")]
    pub key_bits: u32,
    #[serde(rename = "M")]
    pub symbols: u32,
    pub channel: ChannelModel,
    pub cipher: CipherKind,
    pub prng: PrngChoice,
    pub attack: AttackMode,
    #[serde(rename = "Q_max")]
    pub q_max: u32,
    pub n_trials: u64,
    pub master_seed: u64,
    #[serde(default = "default_max_evaluations")]
    pub max_evaluations: f64,
}

fn default_max_evaluations() -> f64 {
    DEFAULT_MAX_EVALUATIONS
}

impl Default for ExperimentConfig {
    /// 13-bit LFSR, `M = 256`, `sigma = 16`, ciphertext-only, 10⁴ trials of
    /// 60 symbols.
    fn default() -> Self {
        Self {
            key_bits: 13,
            symbols: 256,
            channel: ChannelModel::WrappedGaussian { sigma: 16.0 },
            cipher: CipherKind::AlphaEta,
            prng: PrngChoice::Lfsr(LfsrSpec::preset(13).expect("preset exists")),
            attack: AttackMode::CiphertextOnly,
            q_max: 60,
            n_trials: 10_000,
            master_seed: 1,
            max_evaluations: DEFAULT_MAX_EVALUATIONS,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.key_bits == 0 || self.key_bits > MAX_POSTERIOR_BITS {
            return Err(Error::invalid("L", "must be in 1..=20"));
        }
        if self.cipher == CipherKind::AlphaEta {
            let m = self.symbols;
            if m < 2 || !m.is_power_of_two() || m.trailing_zeros() > MAX_SYMBOL_BITS {
                return Err(Error::invalid("M", "must be a power of two in 2..=65536"));
            }
        }
        self.channel.validate()?;
        if let PrngChoice::Lfsr(spec) = &self.prng {
            spec.validate()?;
            if spec.length_bits() != self.key_bits {
                return Err(Error::invalid("prng.lfsr.L", "LFSR length must equal L"));
            }
        }
        if self.q_max == 0 {
            return Err(Error::invalid("Q_max", "must be at least 1"));
        }
        if self.n_trials == 0 {
            return Err(Error::invalid("n_trials", "must be at least 1"));
        }
        if !(self.max_evaluations > 0.0) {
            return Err(Error::invalid("max_evaluations", "must be positive"));
        }
        Ok(())
    }

    /// Number of per-key likelihood evaluations the ensemble will perform.
    pub fn evaluation_count(&self) -> f64 {
        self.n_trials as f64 * self.q_max as f64 * (1u64 << self.key_bits.min(63)) as f64
    }

    pub fn check_budget(&self) -> Result<()> {
        let requested = self.evaluation_count();
        if requested > self.max_evaluations {
            return Err(Error::ResourceLimit {
                what: "likelihood evaluations (n_trials * Q_max * 2^L)",
                requested,
                limit: self.max_evaluations,
            });
        }
        Ok(())
    }

    /// Running-key alphabet bits: `log2 M` for αη, one key bit per symbol
    /// for the additive cipher.
    pub fn symbol_bits(&self) -> u32 {
        match self.cipher {
            CipherKind::AlphaEta => self.symbols.trailing_zeros(),
            CipherKind::Additive => 1,
        }
    }

    pub fn keystream_map(&self) -> Result<KeystreamMap> {
        let source = match &self.prng {
            PrngChoice::Lfsr(spec) => KeystreamSource::Lfsr(spec.clone()),
            PrngChoice::IdealRandom => KeystreamSource::IdealRandom {
                key: mix(self.master_seed ^ IDEAL_STREAM_DOMAIN, u64::MAX),
            },
        };
        KeystreamMap::new(source, self.key_bits, self.symbol_bits(), self.q_max as usize)
    }

    /// Estimated information per symbol for this configuration, in bits.
    ///
    /// αη: `log2 M - h(noise)`, minus one bit when the data bit is unknown;
    /// for the wrapped Gaussian this is [`info_per_symbol`]. The additive
    /// cipher leaks nothing without the plaintext and one key bit per
    /// symbol with it.
    pub fn info_rate(&self) -> f64 {
        let bit_penalty = match self.attack {
            AttackMode::CiphertextOnly => 1.0,
            AttackMode::KnownPlaintext => 0.0,
        };
        match self.cipher {
            CipherKind::Additive => 1.0 - bit_penalty,
            CipherKind::AlphaEta => match self.channel {
                ChannelModel::WrappedGaussian { sigma } => {
                    info_per_symbol(self.symbols as f64, sigma) + 1.0 - bit_penalty
                }
                ChannelModel::UniformArc { arc_fraction } => log2(1.0 / arc_fraction) - bit_penalty,
            },
        }
    }
}

/// Per-trial generator seed: a bijection in `trial_index` for any fixed
/// master seed, with MurmurHash3 finalization on both inputs.
pub fn mix(master_seed: u64, trial_index: u64) -> u64 {
    fmix64(fmix64(master_seed).wrapping_add(trial_index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Test hook: deliberately broken components for checking that the
/// invariant suite notices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// The channel density evaluates to NaN on half of the running keys.
    CorruptDensity,
}

/// Time series of one trial, one entry per symbol `q = 1..=Q_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial_index: u64,
    pub true_key: SeedKey,
    pub entropy: Vec<f64>,
    pub prob_correct: Vec<f64>,
    pub collision: Vec<f64>,
    pub nonzero_false: Vec<u32>,
    /// Largest `|ln Σ p|` seen after any renormalization in the trial.
    pub max_normalization_error: f64,
}

/// A validated configuration with its keystream table, shared by all
/// trials of an ensemble.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: ExperimentConfig,
    map: KeystreamMap,
    fault: Option<Fault>,
}

impl Simulation {
    /// Validates `config` (including the evaluation budget) and tabulates
    /// the keystream.
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        config.check_budget()?;
        let map = config.keystream_map()?;
        Ok(Self {
            config,
            map,
            fault: None,
        })
    }

    pub fn with_fault(mut self, fault: Option<Fault>) -> Self {
        self.fault = fault;
        self
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn map(&self) -> &KeystreamMap {
        &self.map
    }

    pub fn run_trial(&self, trial_index: u64) -> Result<TrialRecord> {
        self.run_trial_observed(trial_index, |_, _, _| {})
    }

    /// Runs one trial, calling `observe(q, true_key, posterior)` after each
    /// update.
    pub fn run_trial_observed(
        &self,
        trial_index: u64,
        mut observe: impl FnMut(usize, SeedKey, &Posterior),
    ) -> Result<TrialRecord> {
        let cfg = &self.config;
        let q_max = cfg.q_max as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.master_seed, trial_index));
        let n_keys = self.map.n_keys();
        let true_key = rng.random_range(0..n_keys);
        let mut posterior = Posterior::uniform(cfg.key_bits)?;

        let alphabet = self.map.symbols();
        let mut table = vec![0.0; alphabet as usize];
        let mut record = TrialRecord {
            trial_index,
            true_key: SeedKey::new(true_key as u32, cfg.key_bits)?,
            entropy: Vec::with_capacity(q_max),
            prob_correct: Vec::with_capacity(q_max),
            collision: Vec::with_capacity(q_max),
            nonzero_false: Vec::with_capacity(q_max),
            max_normalization_error: 0.0,
        };
        let known = |bit: u8| match cfg.attack {
            AttackMode::CiphertextOnly => None,
            AttackMode::KnownPlaintext => Some(bit),
        };

        for q in 1..=q_max {
            let row = self.map.row(q).expect("map caches Q_max positions");
            let running_key = self.map.running_key(record.true_key, q)?;
            let bit = rng.random::<bool>() as u8;
            match cfg.cipher {
                CipherKind::AlphaEta => {
                    let symbol = encode_symbol(running_key, bit, cfg.symbols)?;
                    let y = measure(symbol, &cfg.channel, cfg.symbols, &mut rng);
                    fill_symbol_log_likelihoods(y, cfg.attack, known(bit), &cfg.channel, cfg.symbols, &mut table)?;
                }
                CipherKind::Additive => {
                    let key_bit = running_key.value() as u8;
                    let cipher_bit = bit ^ key_bit;
                    for (kb, slot) in table.iter_mut().enumerate() {
                        *slot = additive_log_likelihood(cipher_bit, kb as u8, cfg.attack, known(bit))?;
                    }
                }
            }
            if self.fault == Some(Fault::CorruptDensity) {
                let half = table.len() / 2;
                table[half..].iter_mut().for_each(|v| *v = f64::NAN);
            }

            let stats = posterior.update_from_table(q, row, &table)?;
            let p_true = posterior.prob_correct(true_key);
            let true_alive = (p_true > 0.0) as usize;
            record.entropy.push(stats.entropy);
            record.prob_correct.push(p_true);
            record.collision.push(stats.collision);
            record.nonzero_false.push((stats.support - true_alive.min(stats.support)) as u32);
            let err = stats.log_mass.abs();
            if err.is_nan() || err > record.max_normalization_error {
                record.max_normalization_error = err;
            }
            observe(q, record.true_key, &posterior);
        }
        Ok(record)
    }
}

/// Convenience wrapper building the keystream table for a single trial.
pub fn run_trial(config: &ExperimentConfig, trial_index: u64) -> Result<TrialRecord> {
    Simulation::new(config.clone())?.run_trial(trial_index)
}

/// One row of the exported curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub q: u32,
    pub mean_entropy: f64,
    pub stderr_entropy: f64,
    pub mean_prob_correct: f64,
    pub stderr_prob_correct: f64,
    pub mean_collision: f64,
    pub stderr_collision: f64,
    pub mean_nonzero_false: f64,
    pub estimate_entropy: f64,
    pub estimate_in_domain: bool,
}

/// Ensemble means and standard errors per `q`, with the analytic estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveAggregate {
    pub config: Option<ExperimentConfig>,
    pub rows: Vec<CurveRow>,
}

/// Mean and standard error of `prob_correct - collision` at one `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BayesGap {
    pub mean: f64,
    pub stderr: f64,
}

/// Aggregates trial records (any order) into per-`q` means and standard
/// errors. Sums are compensated, so permuting `records` changes the result
/// only at the rounding level.
pub fn aggregate(config: &ExperimentConfig, records: &[TrialRecord]) -> Result<CurveAggregate> {
    if records.is_empty() {
        return Err(Error::invalid("n_trials", "no trial records to aggregate"));
    }
    let q_max = config.q_max as usize;
    if records.iter().any(|r| r.entropy.len() != q_max) {
        return Err(Error::invalid("Q_max", "trial record length differs from Q_max"));
    }
    let key_bits = config.key_bits as f64;
    let rate = config.info_rate();
    let estimates = if rate > 0.0 {
        estimate_curve(key_bits, rate, 1..=q_max as u64)?
    } else {
        Vec::new()
    };

    let rows = (0..q_max)
        .map(|i| {
            let (mean_entropy, stderr_entropy) = mean_stderr(records.iter().map(|r| r.entropy[i]));
            let (mean_prob_correct, stderr_prob_correct) =
                mean_stderr(records.iter().map(|r| r.prob_correct[i]));
            let (mean_collision, stderr_collision) =
                mean_stderr(records.iter().map(|r| r.collision[i]));
            let mut nz = CompensatedSum::new();
            records.iter().for_each(|r| nz.add(r.nonzero_false[i] as f64));
            let (estimate_entropy, estimate_in_domain) = match estimates.get(i) {
                Some(p) => (p.entropy, p.in_domain),
                None => (key_bits, false),
            };
            CurveRow {
                q: i as u32 + 1,
                mean_entropy,
                stderr_entropy,
                mean_prob_correct,
                stderr_prob_correct,
                mean_collision,
                stderr_collision,
                mean_nonzero_false: nz.total() / records.len() as f64,
                estimate_entropy,
                estimate_in_domain,
            }
        })
        .collect();
    Ok(CurveAggregate {
        config: Some(config.clone()),
        rows,
    })
}

/// Per-`q` statistics of `prob_correct - collision`. For an exact posterior
/// both have the same expectation.
pub fn bayes_gap(records: &[TrialRecord]) -> Vec<BayesGap> {
    let q_max = records.first().map_or(0, |r| r.prob_correct.len());
    (0..q_max)
        .map(|i| {
            let (mean, stderr) =
                mean_stderr(records.iter().map(|r| r.prob_correct[i] - r.collision[i]));
            BayesGap { mean, stderr }
        })
        .collect()
}

/// Absolute slack added to the statistical bounds, covering rounding when
/// every trial is identical (standard error zero).
pub const STAT_ABS_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InvariantReport {
    pub checks: Vec<InvariantCheck>,
}

impl InvariantReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&InvariantCheck> {
        self.checks.iter().find(|c| !c.passed)
    }

    fn push(&mut self, name: &'static str, passed: bool, detail: String) {
        self.checks.push(InvariantCheck { name, passed, detail });
    }
}

/// Runs the invariant suite over an ensemble's records and aggregate.
pub fn check_invariants(
    config: &ExperimentConfig,
    records: &[TrialRecord],
    curve: &CurveAggregate,
) -> InvariantReport {
    let mut report = InvariantReport::default();
    let key_bits = config.key_bits as f64;

    let mut violations = 0usize;
    let mut first = None;
    for r in records {
        for (i, (&c, &h)) in r.collision.iter().zip(&r.entropy).enumerate() {
            if !collision_bound_holds(c, h) {
                violations += 1;
                first.get_or_insert((r.trial_index, i + 1, c, h));
            }
        }
    }
    let detail = match first {
        None => String::from("collision >= 2^-entropy on every recorded posterior"),
        Some((t, q, c, h)) => format!(
            "{violations} violations; first at trial {t}, q={q}: collision {c:e}, entropy {h}"
        ),
    };
    report.push("collision_vs_entropy", violations == 0, detail);

    let worst = records
        .iter()
        .map(|r| r.max_normalization_error)
        .fold(0.0, |a: f64, b| if b.is_nan() || a.is_nan() { f64::NAN } else { a.max(b) });
    report.push(
        "normalization",
        worst <= NORMALIZATION_TOLERANCE,
        format!("max |ln sum p| = {worst:e}"),
    );

    let in_range = records.iter().all(|r| {
        r.entropy.iter().all(|&h| (0.0..=key_bits).contains(&h))
            && r.prob_correct.iter().chain(&r.collision).all(|&p| (0.0..=1.0).contains(&p))
    });
    report.push(
        "record_ranges",
        in_range,
        String::from("entropy in [0, L], probabilities in [0, 1]"),
    );

    if config.cipher == CipherKind::AlphaEta
        && matches!(config.channel, ChannelModel::WrappedGaussian { .. })
    {
        let full = (1u64 << config.key_bits) - 1;
        let ok = records
            .iter()
            .all(|r| r.nonzero_false.iter().all(|&n| n as u64 == full));
        report.push(
            "nonzero_false_full_support",
            ok,
            format!("every false key keeps nonzero probability ({full})"),
        );
    }

    let gaps = bayes_gap(records);
    let bad_gap = gaps
        .iter()
        .enumerate()
        .find(|(_, g)| !(g.mean.abs() <= 4.0 * g.stderr + STAT_ABS_SLACK));
    report.push(
        "bayes_consistency",
        bad_gap.is_none(),
        match bad_gap {
            None => String::from("|mean(P_correct) - mean(collision)| <= 4 stderr at every q"),
            Some((i, g)) => format!("q={}: gap {:e}, stderr {:e}", i + 1, g.mean, g.stderr),
        },
    );

    let mut prev: (f64, f64) = (key_bits, 0.0);
    let mut rise = None;
    for row in &curve.rows {
        let slack = 2.0 * prev.1.max(row.stderr_entropy) + STAT_ABS_SLACK;
        if !(row.mean_entropy <= prev.0 + slack) && rise.is_none() {
            rise = Some(row.q);
        }
        prev = (row.mean_entropy, row.stderr_entropy);
    }
    report.push(
        "entropy_nonincreasing",
        rise.is_none(),
        match rise {
            None => String::from("mean entropy never rises by more than 2 stderr"),
            Some(q) => format!("mean entropy rises at q={q}"),
        },
    );

    if config.cipher == CipherKind::Additive && config.attack == AttackMode::CiphertextOnly {
        let constant = records
            .iter()
            .all(|r| r.entropy.iter().all(|&h| (h - key_bits).abs() <= 1e-9));
        report.push(
            "entropy_constant",
            constant,
            format!("entropy constant at L = {key_bits} for every q"),
        );
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            key_bits: 8,
            q_max: 12,
            n_trials: 50,
            ..ExperimentConfig::default()
        }
        .with_preset_lfsr()
    }

    impl ExperimentConfig {
        fn with_preset_lfsr(mut self) -> Self {
            self.prng = PrngChoice::Lfsr(LfsrSpec::preset(self.key_bits).unwrap());
            self
        }
    }

    #[test]
    fn default_is_the_reference_configuration() {
        let c = ExperimentConfig::default();
        assert_eq!((c.key_bits, c.symbols, c.q_max, c.n_trials), (13, 256, 60, 10_000));
        assert_eq!(c.channel, ChannelModel::WrappedGaussian { sigma: 16.0 });
        c.validate().unwrap();
        c.check_budget().unwrap();
        assert!((c.info_rate() - 0.9529).abs() < 1e-4);
    }

    #[test]
    fn validation_names_the_field() {
        let bad = |f: fn(&mut ExperimentConfig)| {
            let mut c = ExperimentConfig::default();
            f(&mut c);
            match c.validate() {
                Err(Error::InvalidParameter { field, .. }) => field,
                other => panic!("{other:?}"),
            }
        };
        assert_eq!(bad(|c| c.symbols = 100), "M");
        assert_eq!(bad(|c| c.key_bits = 21), "L");
        assert_eq!(bad(|c| c.q_max = 0), "Q_max");
        assert_eq!(bad(|c| c.n_trials = 0), "n_trials");
        assert_eq!(bad(|c| c.channel = ChannelModel::WrappedGaussian { sigma: -1.0 }), "channel.sigma");
        assert_eq!(bad(|c| c.key_bits = 12), "prng.lfsr.L");
    }

    #[test]
    fn budget_guard() {
        let c = ExperimentConfig {
            n_trials: 10_000_000,
            ..ExperimentConfig::default()
        };
        assert!(matches!(Simulation::new(c), Err(Error::ResourceLimit { .. })));
    }

    #[test]
    fn mix_is_injective_over_a_million_indices() {
        let mut seen: Vec<u64> = (0..1_000_000).map(|i| mix(7, i)).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 1_000_000);
        assert_eq!(mix(7, 3), mix(7, 3));
    }

    #[test]
    fn mix_avalanches_on_master_seed() {
        let mut state = 12345u64;
        let mut flipped = 0u64;
        let n = 10_000;
        for i in 0..n {
            state = fmix64(state.wrapping_add(GOLDEN_GAMMA));
            let bit = 1u64 << (state % 64);
            flipped += (mix(state, i) ^ mix(state ^ bit, i)).count_ones() as u64;
        }
        let mean = flipped as f64 / n as f64;
        assert!(mean >= 30.0, "mean flipped bits {mean}");
    }

    #[test]
    fn trials_are_reproducible() {
        let sim = Simulation::new(small_config()).unwrap();
        assert_eq!(sim.run_trial(3).unwrap(), sim.run_trial(3).unwrap());
        assert_ne!(sim.run_trial(3).unwrap(), sim.run_trial(4).unwrap());
        assert_eq!(run_trial(&small_config(), 3).unwrap(), sim.run_trial(3).unwrap());
    }

    #[test]
    fn gaussian_trials_keep_every_false_key() {
        let sim = Simulation::new(small_config()).unwrap();
        for t in 0..5 {
            let r = sim.run_trial(t).unwrap();
            assert!(r.nonzero_false.iter().all(|&n| n == 255));
            assert_eq!(r.entropy.len(), 12);
            assert!(r.max_normalization_error <= NORMALIZATION_TOLERANCE);
        }
    }

    #[test]
    fn additive_cipher_hides_the_key() {
        let cfg = ExperimentConfig {
            cipher: CipherKind::Additive,
            ..small_config()
        };
        let sim = Simulation::new(cfg.clone()).unwrap();
        for t in 0..5 {
            let r = sim.run_trial(t).unwrap();
            assert!(r.entropy.iter().all(|&h| (h - 8.0).abs() < 1e-12));
        }
        // with the plaintext, each ciphertext bit is a key-stream bit
        let kp = ExperimentConfig {
            attack: AttackMode::KnownPlaintext,
            ..cfg
        };
        let r = Simulation::new(kp).unwrap().run_trial(0).unwrap();
        assert_eq!(r.entropy[7], 0.0);
        assert_eq!(r.prob_correct[7], 1.0);
    }

    #[test]
    fn single_trial_aggregate_has_zero_stderr() {
        let cfg = ExperimentConfig {
            n_trials: 1,
            ..small_config()
        };
        let r = run_trial(&cfg, 0).unwrap();
        let agg = aggregate(&cfg, core::slice::from_ref(&r)).unwrap();
        for (i, row) in agg.rows.iter().enumerate() {
            assert_eq!(row.q as usize, i + 1);
            assert_eq!(row.mean_entropy, r.entropy[i]);
            assert_eq!(row.stderr_entropy, 0.0);
            assert_eq!(row.stderr_prob_correct, 0.0);
            assert_eq!(row.mean_nonzero_false, r.nonzero_false[i] as f64);
        }
    }

    #[test]
    fn aggregation_ignores_record_order() {
        let cfg = small_config();
        let sim = Simulation::new(cfg.clone()).unwrap();
        let mut records: Vec<_> = (0..50).map(|t| sim.run_trial(t).unwrap()).collect();
        let a = aggregate(&cfg, &records).unwrap();
        records.reverse();
        records.swap(3, 17);
        let b = aggregate(&cfg, &records).unwrap();
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert!((x.mean_entropy - y.mean_entropy).abs() <= 1e-9);
            assert!((x.mean_prob_correct - y.mean_prob_correct).abs() <= 1e-9);
            assert!((x.stderr_entropy - y.stderr_entropy).abs() <= 1e-9);
        }
    }

    #[test]
    fn invariant_suite_passes_on_a_clean_run() {
        let cfg = small_config();
        let sim = Simulation::new(cfg.clone()).unwrap();
        let records: Vec<_> = (0..50).map(|t| sim.run_trial(t).unwrap()).collect();
        let curve = aggregate(&cfg, &records).unwrap();
        let report = check_invariants(&cfg, &records, &curve);
        assert!(report.all_passed(), "{:?}", report.first_failure());
    }

    #[test]
    fn corrupted_density_is_caught() {
        let cfg = small_config();
        let sim = Simulation::new(cfg.clone()).unwrap().with_fault(Some(Fault::CorruptDensity));
        let records: Vec<_> = (0..10).map(|t| sim.run_trial(t).unwrap()).collect();
        let curve = aggregate(&cfg, &records).unwrap();
        let report = check_invariants(&cfg, &records, &curve);
        assert_eq!(report.first_failure().unwrap().name, "collision_vs_entropy");
    }

    #[test]
    fn estimate_columns_follow_the_rate() {
        let cfg = small_config();
        let records = vec![run_trial(&cfg, 0).unwrap()];
        let agg = aggregate(&cfg, &records).unwrap();
        let u = cfg.info_rate();
        assert!((agg.rows[0].estimate_entropy - (8.0 - u)).abs() < 1e-12);
        assert!(agg.rows[0].estimate_in_domain);
        assert!(!agg.rows[11].estimate_in_domain);

        let arc = ExperimentConfig {
            channel: ChannelModel::UniformArc { arc_fraction: 0.25 },
            ..cfg
        };
        assert!((arc.info_rate() - 1.0).abs() < 1e-15);
    }
}
