//! Run report binding calibration, ledger, seed and output by digest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use parity_rng::entropy::EntropyLedger;
use parity_rng::estimation::ConditionD;
use parity_rng::extractor::{extract, FinalBits};
use parity_rng::formats::{decode_events, decode_seed};
use parity_rng::sanity::{self, SanityTest};
use parity_rng::simulator::actual_trace;
use parity_rng::formats::EventFile;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::io::{read, sha256_hex};
use crate::LedgerFile;

pub const REPORT_FORMAT: &str = "parity-rng-report/1";

/// A file referenced by a report: where it is and what it hashed to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative paths are resolved against the report's directory.
    pub path: String,
    pub sha256: String,
}

impl Artifact {
    pub fn new(report_path: &Path, artifact: &Path, bytes: &[u8]) -> Self {
        Self { path: relative_to_report(report_path, artifact), sha256: sha256_hex(bytes) }
    }

    pub fn resolve(&self, report_path: &Path) -> PathBuf {
        let p = PathBuf::from(&self.path);
        if p.is_absolute() {
            p
        } else {
            report_dir(report_path).join(p)
        }
    }
}

fn report_dir(report_path: &Path) -> PathBuf {
    match report_path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn relative_to_report(report_path: &Path, artifact: &Path) -> String {
    let dir = std::fs::canonicalize(report_dir(report_path)).ok();
    let full = std::fs::canonicalize(artifact).unwrap_or_else(|_| artifact.to_path_buf());
    match (dir, full.parent(), full.file_name()) {
        (Some(d), Some(parent), Some(name)) if d == parent => name.to_string_lossy().into_owned(),
        _ => full.to_string_lossy().into_owned(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedSource {
    File,
    FreshOs,
    /// Expanded from a fixed integer; for tests only, never for output
    /// that must be secret.
    DeterministicTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format: String,
    pub tool_version: String,
    /// Seconds since the epoch; taken from `SOURCE_DATE_EPOCH` when set.
    pub created_unix: u64,
    pub trace: Artifact,
    pub trace_bins: u64,
    pub ledger_file: Artifact,
    pub run_bins: Option<u64>,
    pub condition: ConditionD,
    pub ledger: EntropyLedger,
    pub seed: Artifact,
    pub seed_source: SeedSource,
    pub n_fin: u64,
    pub output: Artifact,
    pub output_padding_bits: u8,
    /// `ε + δ`.
    pub security_level: f64,
    pub sanity: Vec<SanityTest>,
}

pub fn load_trace(bytes: &[u8]) -> Result<parity_rng::trace::BinTrace, CliError> {
    match decode_events(bytes).map_err(CliError::validation)? {
        EventFile::Bin(z) => Ok(z),
        EventFile::Dual { trace, bin_width } => Ok(actual_trace(&trace).with_bin_width(bin_width)),
    }
}

pub fn bits_of(out: &FinalBits) -> Vec<bool> {
    out.iter().collect()
}

/// One line of an audit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub check: String,
    pub ok: bool,
    pub detail: String,
}

impl Finding {
    fn new(check: &str, ok: bool, detail: impl Into<String>) -> Self {
        Self { check: check.to_string(), ok, detail: detail.into() }
    }
}

fn digest_finding(name: &str, report_path: &Path, a: &Artifact) -> (Finding, Option<Vec<u8>>) {
    match read(&a.resolve(report_path)) {
        Ok(bytes) => {
            let got = sha256_hex(&bytes);
            let ok = got == a.sha256;
            let detail = if ok { a.sha256.clone() } else { format!("expected {}, found {got}", a.sha256) };
            (Finding::new(&format!("{name} digest"), ok, detail), Some(bytes))
        }
        Err(e) => (Finding::new(&format!("{name} digest"), false, e.to_string()), None),
    }
}

/// Recomputes everything the report claims from the files it names.
pub fn audit(report_path: &Path, report: &RunReport) -> Vec<Finding> {
    let mut out = vec![Finding::new(
        "format",
        report.format == REPORT_FORMAT,
        report.format.clone(),
    )];
    let (f, trace_bytes) = digest_finding("trace", report_path, &report.trace);
    out.push(f);
    let (f, ledger_bytes) = digest_finding("ledger", report_path, &report.ledger_file);
    out.push(f);
    let (f, seed_bytes) = digest_finding("seed", report_path, &report.seed);
    out.push(f);
    let (f, output_bytes) = digest_finding("output", report_path, &report.output);
    out.push(f);

    if let Some(bytes) = &ledger_bytes {
        match serde_json::from_slice::<LedgerFile>(bytes) {
            Ok(file) => out.push(Finding::new(
                "ledger matches report",
                file.ledger == report.ledger && file.run_bins == report.run_bins,
                "",
            )),
            Err(e) => out.push(Finding::new("ledger matches report", false, e.to_string())),
        }
    }
    let consistent = report.ledger.is_consistent().unwrap_or(false) && report.ledger.cond == report.condition;
    out.push(Finding::new("ledger recomputes", consistent, format!("n_fin bound {}", report.ledger.n_fin)));
    out.push(Finding::new(
        "n_fin within bound",
        report.n_fin <= report.ledger.n_fin,
        format!("{} <= {}", report.n_fin, report.ledger.n_fin),
    ));

    let (Some(trace_bytes), Some(seed_bytes), Some(output_bytes)) = (trace_bytes, seed_bytes, output_bytes) else {
        return out;
    };
    let recomputed = load_trace(&trace_bytes)
        .map_err(|e| e.to_string())
        .and_then(|z| {
            if z.len() as u64 != report.trace_bins {
                return Err(format!("trace has {} bins, report says {}", z.len(), report.trace_bins));
            }
            let seed = decode_seed(&seed_bytes).map_err(|e| e.to_string())?;
            if seed.n_out() as u64 != report.n_fin {
                return Err(format!("seed is for {} output bits, report says {}", seed.n_out(), report.n_fin));
            }
            extract(&z, &seed).map_err(|e| e.to_string())
        });
    match recomputed {
        Ok(bits) => {
            let (bytes, padding) = bits.to_bytes();
            out.push(Finding::new(
                "output recomputes",
                bytes == output_bytes && padding == report.output_padding_bits,
                format!("{} bits", bits.len()),
            ));
            let rerun = sanity::run_all(&bits_of(&bits));
            out.push(Finding::new("sanity results reproduce", rerun == report.sanity, ""));
        }
        Err(e) => out.push(Finding::new("output recomputes", false, e)),
    }
    out
}

pub fn render_text(report: &RunReport, findings: &[Finding]) -> String {
    let mut s = String::new();
    let l = &report.ledger;
    let _ = writeln!(s, "parity-rng run report ({}, tool {})", report.format, report.tool_version);
    let _ = writeln!(s, "created_unix     {}", report.created_unix);
    let _ = writeln!(s, "trace            {} ({} bins)", report.trace.path, report.trace_bins);
    let _ = writeln!(
        s,
        "condition        n_thr={} n_multi={} n_dark={} delta={:e}",
        l.cond.n_thr, l.cond.n_multi, l.cond.n_dark, l.cond.delta
    );
    let _ = writeln!(
        s,
        "ledger           h={} epsilon={:e} n_fin_max={} status={:?}",
        l.h_bound, l.epsilon, l.n_fin, l.status
    );
    let _ = writeln!(s, "security level   {:e} (epsilon + delta)", report.security_level);
    let _ = writeln!(s, "seed             {} ({:?})", report.seed.path, report.seed_source);
    let _ = writeln!(
        s,
        "output           {} ({} bits, {} padding bits)",
        report.output.path, report.n_fin, report.output_padding_bits
    );
    for t in &report.sanity {
        let _ = writeln!(
            s,
            "sanity (advisory) {:<20} p={:.4} {}",
            t.name,
            t.p_value,
            if t.passed { "pass" } else { "FAIL" }
        );
    }
    for f in findings {
        let _ = writeln!(s, "{} {}{}", if f.ok { "ok  " } else { "FAIL" }, f.check, if f.detail.is_empty() {
            String::new()
        } else {
            format!(": {}", f.detail)
        });
    }
    s
}
