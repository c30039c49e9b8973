//! Command-line pipeline: simulate, estimate, plan, extract, verify, report.
//!
//! Every command reads and writes plain files. JSON is used for
//! configuration, calibration, ledgers and reports; event and seed files use
//! the binary layouts in [`parity_rng::formats`].

pub mod error;
pub mod io;
pub mod report;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use parity_rng::entropy::EntropyLedger;
use parity_rng::estimation::{estimate_with_report, CalibrationData, ConditionD, ConditionEstimate};
use parity_rng::extractor::{extract, sample_seed, ToeplitzSeed};
use parity_rng::formats::{decode_seed, encode_bin_trace, encode_dual_trace, encode_seed};
use parity_rng::proofcheck::{run_identity_suite, Injection, SuiteConfig};
use parity_rng::sanity;
use parity_rng::simulator::{actual_trace, simulate_calibration, simulate_run, RunConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

pub use error::{exit, CliError};
use report::{audit, bits_of, load_trace, render_text, Artifact, RunReport, SeedSource, REPORT_FORMAT};

#[derive(Debug, Parser)]
#[command(name = "parity-rng", version, about = "Parity-symmetric radioactive random number generator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a detector run and write its event files.
    Simulate {
        /// Run configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output prefix; writes PREFIX.dual.evt and PREFIX.bins.evt.
        #[arg(long)]
        out: PathBuf,
        /// Also simulate calibration runs of this many bins each and write
        /// PREFIX.calibration.json.
        #[arg(long)]
        calibration_bins: Option<u64>,
    },
    /// Estimate condition (d) for a run of N bins from calibration counts.
    Estimate {
        /// Calibration counts (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Number of bins in the run to be certified.
        #[arg(long)]
        bins: u64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the min-entropy bound and final output length.
    Plan {
        /// Output of `estimate`, or a bare condition record (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Extractor error, as a number or as `2^-k`.
        #[arg(long, value_parser = parse_epsilon)]
        epsilon: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Hash a trace down to the planned number of final bits.
    Extract {
        /// Event file (one-bit or two-bit alphabet).
        trace: PathBuf,
        /// Ledger written by `plan`.
        #[arg(long)]
        ledger: PathBuf,
        /// Existing seed file.
        #[arg(long, conflicts_with_all = ["fresh_seed", "deterministic_seed"])]
        seed_file: Option<PathBuf>,
        /// Draw a new seed from the operating system and save it next to
        /// the output.
        #[arg(long, conflicts_with = "deterministic_seed")]
        fresh_seed: bool,
        /// Expand the seed from this integer. Reproducible, so for testing
        /// only.
        #[arg(long)]
        deterministic_seed: Option<u64>,
        /// Number of final bits; defaults to the ledger's bound and may not
        /// exceed it.
        #[arg(long)]
        n_fin: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Report path; defaults to OUT.report.json.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run the numerical identity suite.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        trials: usize,
        /// Deliberately break one hypothesis to confirm it is caught.
        #[arg(long, value_parser = parse_injection)]
        inject: Option<Injection>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Re-verify a run report against its artifacts and print it.
    Report {
        report: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
}

fn parse_injection(s: &str) -> Result<Injection, String> {
    s.parse()
}

/// Accepts `1e-9`, `0.001` or `2^-32`.
pub fn parse_epsilon(s: &str) -> Result<f64, String> {
    let value = match s.trim().strip_prefix("2^") {
        Some(exp) => {
            let e: i32 = exp.parse().map_err(|_| format!("bad exponent in {s:?}"))?;
            2f64.powi(e)
        }
        None => s.trim().parse().map_err(|_| format!("not a number: {s:?}"))?,
    };
    if value > 0.0 && value < 1.0 {
        Ok(value)
    } else {
        Err(format!("epsilon must lie in (0, 1), got {value}"))
    }
}

/// What `plan` writes and `extract` consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerFile {
    /// Run length the condition was estimated for, when known.
    pub run_bins: Option<u64>,
    pub ledger: EntropyLedger,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ConditionInput {
    Estimate(Box<ConditionEstimate>),
    Bare(ConditionD),
}

fn created_unix() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()))
}

fn emit(out: &mut dyn Write, s: &str) -> Result<(), CliError> {
    out.write_all(s.as_bytes()).map_err(|e| CliError::io("<stdout>", e))
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, out: prefix, calibration_bins } => {
            cmd_simulate(&config, &prefix, calibration_bins, out)
        }
        Command::Estimate { config, bins, delta, out: path } => cmd_estimate(&config, bins, delta, &path, out),
        Command::Plan { config, epsilon, out: path, format } => cmd_plan(&config, epsilon, &path, format, out),
        Command::Extract { trace, ledger, seed_file, fresh_seed, deterministic_seed, n_fin, out: path, report } => {
            let seed = match (seed_file, fresh_seed, deterministic_seed) {
                (Some(p), _, _) => SeedChoice::File(p),
                (None, true, _) => SeedChoice::Fresh,
                (None, false, Some(s)) => SeedChoice::Deterministic(s),
                (None, false, None) => {
                    return Err(CliError::validation(
                        "extract needs --seed-file, --fresh-seed or --deterministic-seed",
                    ))
                }
            };
            let report = report.unwrap_or_else(|| io::with_suffix(&path, ".report.json"));
            cmd_extract(&ExtractArgs { trace, ledger, seed, n_fin, out: path, report }, out)
        }
        Command::Verify { seed, trials, inject, format } => cmd_verify(seed, trials, inject, format, out),
        Command::Report { report, format } => cmd_report(&report, format, out),
    }
}

pub fn cmd_simulate(
    config_path: &Path,
    prefix: &Path,
    calibration_bins: Option<u64>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let config: RunConfig = io::read_json(config_path)?;
    let (w, truth) = simulate_run(&config).map_err(CliError::validation)?;
    let z = actual_trace(&w).with_bin_width(config.bin_width);
    io::write_atomic(&io::with_suffix(prefix, ".dual.evt"), &encode_dual_trace(&w, config.bin_width))?;
    io::write_atomic(&io::with_suffix(prefix, ".bins.evt"), &encode_bin_trace(&z))?;
    if let Some(bins) = calibration_bins {
        let cal = simulate_calibration(&config, bins).map_err(CliError::validation)?;
        io::write_json(&io::with_suffix(prefix, ".calibration.json"), &cal)?;
    }
    emit(out, &io::to_json(&truth))
}

pub fn cmd_estimate(
    calib_path: &Path,
    bins: u64,
    delta: f64,
    out_path: &Path,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let cal: CalibrationData = io::read_json(calib_path)?;
    let est = estimate_with_report(&cal, bins, delta).map_err(CliError::validation)?;
    io::write_json(out_path, &est)?;
    emit(out, &io::to_json(&est.condition))
}

pub fn cmd_plan(
    cond_path: &Path,
    epsilon: f64,
    out_path: &Path,
    format: Format,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let (cond, run_bins) = match io::read_json::<ConditionInput>(cond_path)? {
        ConditionInput::Estimate(e) => (e.condition, Some(e.run_bins)),
        ConditionInput::Bare(c) => (c, None),
    };
    cond.validate().map_err(CliError::validation)?;
    if let Some(bins) = run_bins {
        cond.validate_for_run(bins).map_err(CliError::validation)?;
    }
    let ledger = EntropyLedger::plan(cond, epsilon).map_err(CliError::validation)?;
    let file = LedgerFile { run_bins, ledger };
    io::write_json(out_path, &file)?;
    let text = match format {
        Format::Json => io::to_json(&file),
        Format::Text => format!(
            "h_bound={} n_fin={} epsilon={:e} delta={:e} status={:?}\n",
            ledger.h_bound, ledger.n_fin, ledger.epsilon, ledger.cond.delta, ledger.status
        ),
    };
    emit(out, &text)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SeedChoice {
    File(PathBuf),
    Fresh,
    Deterministic(u64),
}

#[derive(Debug, Clone)]
pub struct ExtractArgs {
    pub trace: PathBuf,
    pub ledger: PathBuf,
    pub seed: SeedChoice,
    pub n_fin: Option<u64>,
    pub out: PathBuf,
    pub report: PathBuf,
}

pub fn cmd_extract(args: &ExtractArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let ledger_bytes = io::read(&args.ledger)?;
    let file: LedgerFile = serde_json::from_slice(&ledger_bytes)
        .map_err(|e| CliError::validation(format!("{}: {e}", args.ledger.display())))?;
    let ledger = file.ledger;
    // The stored bound is recomputed rather than trusted.
    let recomputed = EntropyLedger::plan(ledger.cond, ledger.epsilon).map_err(CliError::validation)?;
    if recomputed != ledger {
        return Err(CliError::Security(format!(
            "ledger does not match its own condition: recomputed n_fin {} vs stored {}",
            recomputed.n_fin, ledger.n_fin
        )));
    }

    let trace_bytes = io::read(&args.trace)?;
    let z = load_trace(&trace_bytes)?;
    let bins = z.len() as u64;
    if let Some(expected) = file.run_bins {
        if expected != bins {
            return Err(CliError::validation(format!(
                "trace has {bins} bins but the condition was estimated for {expected}"
            )));
        }
    }
    ledger.cond.validate_for_run(bins).map_err(CliError::validation)?;

    let n_fin = args.n_fin.unwrap_or(ledger.n_fin);
    if n_fin > ledger.n_fin {
        return Err(CliError::Security(format!(
            "{n_fin} final bits requested but the bound allows at most {}",
            ledger.n_fin
        )));
    }
    if n_fin == 0 {
        return Err(CliError::Security(format!(
            "the bound allows no output (h = {}, status {:?})",
            ledger.h_bound, ledger.status
        )));
    }
    let n_in = z.len();
    let n_out = n_fin as usize;

    let (seed, seed_path, seed_source) = match &args.seed {
        SeedChoice::File(p) => {
            let seed = decode_seed(&io::read(p)?).map_err(CliError::validation)?;
            if seed.n_in() != n_in || seed.n_out() != n_out {
                return Err(CliError::validation(format!(
                    "seed is for {}x{} but this extraction needs {}x{}",
                    seed.n_out(),
                    seed.n_in(),
                    n_out,
                    n_in
                )));
            }
            (seed, p.clone(), SeedSource::File)
        }
        SeedChoice::Fresh => {
            let seed = sample_seed(&mut rand::rngs::OsRng, n_in, n_out).map_err(|e| CliError::Security(e.to_string()))?;
            (seed, io::with_suffix(&args.out, ".seed"), SeedSource::FreshOs)
        }
        SeedChoice::Deterministic(s) => {
            let seed = deterministic_seed(*s, n_in, n_out)?;
            (seed, io::with_suffix(&args.out, ".seed"), SeedSource::DeterministicTest)
        }
    };
    let seed_bytes = encode_seed(&seed);
    if seed_source != SeedSource::File {
        io::write_atomic(&seed_path, &seed_bytes)?;
    }

    let bits = extract(&z, &seed).map_err(CliError::validation)?;
    let (output_bytes, padding) = bits.to_bytes();
    io::write_atomic(&args.out, &output_bytes)?;

    let report = RunReport {
        format: REPORT_FORMAT.to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        created_unix: created_unix(),
        trace: Artifact::new(&args.report, &args.trace, &trace_bytes),
        trace_bins: bins,
        ledger_file: Artifact::new(&args.report, &args.ledger, &ledger_bytes),
        run_bins: file.run_bins,
        condition: ledger.cond,
        ledger,
        seed: Artifact::new(&args.report, &seed_path, &seed_bytes),
        seed_source,
        n_fin,
        output: Artifact::new(&args.report, &args.out, &output_bytes),
        output_padding_bits: padding,
        security_level: ledger.security_level(),
        sanity: sanity::run_all(&bits_of(&bits)),
    };
    io::write_json(&args.report, &report)?;
    emit(
        out,
        &format!(
            "extracted {n_fin} bits from {bins} bins (security level {:e}); report {}\n",
            report.security_level,
            args.report.display()
        ),
    )
}

pub fn cmd_verify(
    seed: u64,
    trials: usize,
    injection: Option<Injection>,
    format: Format,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    if trials == 0 {
        return Err(CliError::validation("--trials must be at least 1"));
    }
    let report = run_identity_suite(&SuiteConfig { seed, trials, injection });
    let text = match format {
        Format::Json => io::to_json(&report),
        Format::Text => format!("{report}\n"),
    };
    emit(out, &text)?;
    if report.passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        Err(CliError::Verification(failed.join(", ")))
    }
}

pub fn cmd_report(report_path: &Path, format: Format, out: &mut dyn Write) -> Result<(), CliError> {
    let report: RunReport = io::read_json(report_path)?;
    let findings = audit(report_path, &report);
    let text = match format {
        Format::Json => io::to_json(&report),
        Format::Text => render_text(&report, &findings),
    };
    let failed: Vec<String> = findings.iter().filter(|f| !f.ok).map(|f| format!("{}: {}", f.check, f.detail)).collect();
    if !failed.is_empty() {
        if format == Format::Text {
            emit(out, &text)?;
        }
        return Err(CliError::Verification(failed.join("; ")));
    }
    emit(out, &text)
}

/// Seed for `n_in × n_out` drawn from a fixed integer; shared with tests.
pub fn deterministic_seed(seed: u64, n_in: usize, n_out: usize) -> Result<ToeplitzSeed, CliError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    sample_seed(&mut rng, n_in, n_out).map_err(CliError::validation)
}
