//! JSON-lines output records. Every record names its kind and carries the
//! config hash plus the library version, so files from different runs stay
//! attributable. Timing is opt-in: the `wall_ms` field appears only under
//! `--timing`, keeping default metrics files byte-identical across reruns of
//! the same (config, seed).

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use home_core::diagnostics::{ProbeResult, XorClaim, LN_2};
use home_core::trainer::IterationRecord;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Serialize)]
struct TrainLine<'a> {
    record: &'static str,
    version: &'static str,
    config_hash: &'a str,
    iteration: u64,
    epoch: u64,
    lr: f64,
    loss_total: f64,
    loss_invariance: f64,
    loss_redundancy_per_view: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_ms: Option<u64>,
}

#[derive(Serialize)]
struct ProbeLine<'a> {
    record: &'static str,
    version: &'static str,
    config_hash: &'a str,
    checkpoint: &'a str,
    train_samples: usize,
    test_samples: usize,
    class_count: usize,
    accuracy: f64,
    per_class_accuracy: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_ms: Option<u64>,
}

#[derive(Serialize)]
struct XorLine<'a> {
    record: &'static str,
    version: &'static str,
    config_hash: &'a str,
    samples: usize,
    pairwise_mi: [f64; 3],
    total_correlation: f64,
    expected_total_correlation: f64,
    passes: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_ms: Option<u64>,
}

#[derive(Serialize)]
struct AuditLine<'a> {
    record: &'static str,
    version: &'static str,
    config_hash: &'a str,
    order: usize,
    tuples: u64,
    max_abs: f64,
    mean_abs: f64,
    histogram: &'a [u64],
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_ms: Option<u64>,
}

/// Appends one JSON object per line to a metrics file.
pub struct MetricsWriter {
    out: BufWriter<fs::File>,
    config_hash: String,
    started: Instant,
    timing: bool,
}

impl MetricsWriter {
    pub fn create(path: &Path, config_hash: &str, timing: bool) -> io::Result<Self> {
        Ok(Self {
            out: BufWriter::new(fs::File::create(path)?),
            config_hash: config_hash.to_string(),
            started: Instant::now(),
            timing,
        })
    }

    fn stamp(&self) -> Option<u64> {
        self.timing
            .then(|| u64::try_from(self.started.elapsed().as_millis()).unwrap_or(u64::MAX))
    }

    fn write_line<T: Serialize>(&mut self, line: &T) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, line)?;
        self.out.write_all(b"\n")
    }

    pub fn train_iteration(&mut self, rec: &IterationRecord) -> io::Result<()> {
        let hash = self.config_hash.clone();
        let line = TrainLine {
            record: "train_iteration",
            version: VERSION,
            config_hash: &hash,
            iteration: rec.iteration,
            epoch: rec.epoch,
            lr: rec.lr,
            loss_total: rec.loss_total,
            loss_invariance: rec.loss_invariance,
            loss_redundancy_per_view: &rec.loss_redundancy_per_view,
            wall_ms: self.stamp(),
        };
        self.write_line(&line)
    }

    pub fn probe(
        &mut self,
        checkpoint: &str,
        train_samples: usize,
        test_samples: usize,
        result: &ProbeResult,
    ) -> io::Result<()> {
        let hash = self.config_hash.clone();
        let line = ProbeLine {
            record: "probe",
            version: VERSION,
            config_hash: &hash,
            checkpoint,
            train_samples,
            test_samples,
            class_count: result.class_count,
            accuracy: result.accuracy,
            per_class_accuracy: &result.per_class_accuracy,
            wall_ms: self.stamp(),
        };
        self.write_line(&line)
    }

    pub fn xor_claim(&mut self, claim: &XorClaim) -> io::Result<()> {
        let hash = self.config_hash.clone();
        let line = XorLine {
            record: "xor_claim",
            version: VERSION,
            config_hash: &hash,
            samples: claim.samples,
            pairwise_mi: claim.pairwise_mi,
            total_correlation: claim.total_correlation,
            expected_total_correlation: LN_2,
            passes: claim.passes(),
            wall_ms: self.stamp(),
        };
        self.write_line(&line)
    }

    pub fn moment_order(
        &mut self,
        order: usize,
        tuples: u64,
        max_abs: f64,
        mean_abs: f64,
        histogram: &[u64],
    ) -> io::Result<()> {
        let hash = self.config_hash.clone();
        let line = AuditLine {
            record: "moment_audit",
            version: VERSION,
            config_hash: &hash,
            order,
            tuples,
            max_abs,
            mean_abs,
            histogram,
            wall_ms: self.stamp(),
        };
        self.write_line(&line)
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.out.flush()
    }
}

/// The one-line failure report printed to stderr before a nonzero exit.
#[derive(Serialize)]
pub struct ErrorRecord<'a> {
    pub record: &'static str,
    pub version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<&'a str>,
    pub kind: &'static str,
    pub message: String,
}

pub fn error_line(kind: &'static str, config_hash: Option<&str>, message: String) -> String {
    let record = ErrorRecord {
        record: "error",
        version: VERSION,
        config_hash,
        kind,
        message,
    };
    serde_json::to_string(&record).unwrap_or_else(|_| format!("{{\"record\":\"error\",\"kind\":\"{kind}\"}}"))
}
