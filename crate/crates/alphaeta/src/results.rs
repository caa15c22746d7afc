//! Curve CSV files and their JSON metadata sidecars.
//!
//! Floats are written in shortest round-trip form, so [`read_results`]
//! recovers exactly the values that were written.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use alphaeta_core::keystream::LfsrSpec;
use alphaeta_core::{CurveAggregate, CurveRow, ExperimentConfig, PrngChoice};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 10] = [
    "q",
    "mean_entropy",
    "stderr_entropy",
    "mean_prob_correct",
    "stderr_prob_correct",
    "mean_collision",
    "stderr_collision",
    "mean_nonzero_false",
    "estimate_entropy",
    "estimate_in_domain",
];

pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub config: ExperimentConfig,
    pub library_version: String,
    pub wall_clock_seconds: f64,
    pub threads: usize,
    /// Feedback polynomial of the LFSR, if one was used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lfsr_polynomial: Option<String>,
    /// Information per symbol behind `estimate_entropy`, in bits.
    pub estimate_rate_bits: f64,
    pub statistics: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_posterior_entropy: Option<Vec<f64>>,
}

impl RunMetadata {
    pub fn new(config: &ExperimentConfig, threads: usize, wall_clock_seconds: f64) -> Self {
        let lfsr_polynomial = match &config.prng {
            PrngChoice::Lfsr(spec) => Some(LfsrSpec::polynomial_string(spec)),
            PrngChoice::IdealRandom => None,
        };
        Self {
            config: config.clone(),
            library_version: LIBRARY_VERSION.to_string(),
            wall_clock_seconds,
            threads,
            lfsr_polynomial,
            estimate_rate_bits: config.info_rate(),
            statistics: statistic_definitions(),
            mean_posterior_entropy: None,
        }
    }
}

fn statistic_definitions() -> BTreeMap<String, String> {
    [
        ("q", "number of measured symbols"),
        ("mean_entropy", "mean over trials of the posterior Shannon entropy of the seed key, bits"),
        ("stderr_entropy", "sample standard deviation of the entropy over sqrt(n_trials)"),
        ("mean_prob_correct", "mean posterior probability of the true seed key"),
        ("stderr_prob_correct", "standard error of prob_correct"),
        ("mean_collision", "mean of sum_k p_k^2 over trials"),
        ("stderr_collision", "standard error of the collision probability"),
        ("mean_nonzero_false", "mean number of false keys with nonzero posterior probability"),
        ("estimate_entropy", "linear estimate max(L - q U, 0), bits; L when U <= 0"),
        ("estimate_in_domain", "true while q < n0 = L / U"),
        (
            "mean_posterior_entropy",
            "entropy of the trial-averaged posterior, keys relabelled k xor true_key, bits",
        ),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

/// `<csv path>.meta.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    let mut name = csv.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Writes the sidecar, then the CSV. If either write fails both files are
/// removed.
pub fn write_results(agg: &CurveAggregate, meta: &RunMetadata, path: &Path) -> Result<()> {
    let sidecar = sidecar_path(path);
    let outcome = write_sidecar(meta, &sidecar).and_then(|()| write_csv(agg, path));
    if outcome.is_err() {
        let _ = fs::remove_file(&sidecar);
        let _ = fs::remove_file(path);
    }
    outcome
}

fn write_sidecar(meta: &RunMetadata, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(meta).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_csv(agg: &CurveAggregate, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let csv_err = |e: csv::Error| Error::io(path, e.into());
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in &agg.rows {
        let fields = [
            r.q.to_string(),
            float(r.mean_entropy),
            float(r.stderr_entropy),
            float(r.mean_prob_correct),
            float(r.stderr_prob_correct),
            float(r.mean_collision),
            float(r.stderr_collision),
            float(r.mean_nonzero_false),
            float(r.estimate_entropy),
            r.estimate_in_domain.to_string(),
        ];
        w.write_record(&fields).map_err(csv_err)?;
    }
    let mut inner = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    inner.flush().map_err(|e| Error::io(path, e))
}

fn float(x: f64) -> String {
    format!("{x:?}")
}

/// Reads a curve CSV. The config is taken from the sidecar when one exists.
pub fn read_results(path: &Path) -> Result<CurveAggregate> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse_error(path, e))?;
    let header = reader.headers().map_err(|e| parse_error(path, e))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header `{}`", CSV_HEADER.join(",")),
        });
    }
    let rows = reader
        .deserialize::<CurveRow>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| parse_error(path, e))?;
    let sidecar = sidecar_path(path);
    let config = if sidecar.exists() {
        Some(read_metadata(&sidecar)?.config)
    } else {
        None
    };
    Ok(CurveAggregate { config, rows })
}

pub fn read_metadata(path: &Path) -> Result<RunMetadata> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        message: e.to_string(),
    })
}

fn parse_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    let message = e.to_string();
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        _ => Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        },
    }
}
