//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Every tolerance and runtime budget is
//! pinned below.

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use clap::Parser;
use parity_rng::entropy::{min_entropy_bound, output_length_from_bound};
use parity_rng::estimation::{angular_symmetry_test, estimate_condition_d, ConditionD, Verdict};
use parity_rng::extractor::{extract, FinalBits, ToeplitzSeed};
use parity_rng::proofcheck::linalg::{c, random_unitary, CMatrix};
use parity_rng::proofcheck::{
    enumerate_chain, jordan_decompose, measure_direction, random_classical_eve_state, random_invariant_state,
    run_identity_suite, single_event_entropy, Injection, MeasurementChain, ParityModel, SuiteConfig,
};
use parity_rng::sanity;
use parity_rng::simulator::{
    emit_directional_samples, sample_calibration, sample_ground_truth, simulate_run, DetectorModel, RunConfig,
    SourceModel,
};
use parity_rng::trace::{bins_from_timings, timings_from_bins, BinTrace, ReducedSymbol, ReducedTrace};
use parity_rng_cli::{report::RunReport, run, Cli, LedgerFile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BIN: &str = env!("CARGO_BIN_EXE_parity-rng");

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn criterion(number: u32, name: &str, budget: Duration, body: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = panic::catch_unwind(AssertUnwindSafe(body));
    let elapsed = start.elapsed();
    let (passed, detail) = match result {
        Ok(o) => (o.passed, o.detail),
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        }
    };
    let in_time = elapsed <= budget;
    let ok = passed && in_time;
    println!(
        "{} {number:>2} {name}: {detail} [{:.2}s, budget {}s{}]",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs(),
        if in_time { "" } else { ", over budget" }
    );
    ok
}

fn bits_of_u64(value: u64, len: usize) -> Vec<bool> {
    (0..len).map(|i| value >> i & 1 == 1).collect()
}

// 1. z-representation and timing vector are in bijection.
fn bijection() -> Outcome {
    let mut checked = 0u64;
    let mut mismatches = 0u64;
    let mut check = |bits: &[bool]| {
        let z = BinTrace::from_bits(bits.iter().copied()).unwrap();
        let t = timings_from_bins(&z);
        let expected: Vec<u64> = bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i as u64 + 1).collect();
        let expected = if expected.is_empty() { vec![0] } else { expected };
        let back = bins_from_timings(&t, bits.len()).unwrap();
        checked += 1;
        if t.as_slice() != expected.as_slice() || back != z {
            mismatches += 1;
        }
    };
    for n in 1..=12usize {
        for value in 0..1u64 << n {
            check(&bits_of_u64(value, n));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10_000 {
        check(&bits_of_u64(rng.random(), 64));
    }
    outcome(mismatches == 0, format!("{mismatches} mismatches in {checked} traces"))
}

// 2. h = max(0, n_thr - n_multi - 2 n_dark), exactly.
fn ledger_formula() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0u64;
    let mut clamped = 0u64;
    for i in 0..100_000u32 {
        let (n_thr, n_multi, n_dark) = match i % 4 {
            0 => (rng.random::<u64>(), rng.random::<u64>(), rng.random::<u64>()),
            1 => (rng.random_range(0..1u64 << 20), rng.random_range(0..1u64 << 16), rng.random_range(0..1u64 << 16)),
            2 => {
                let m = rng.random_range(0..1u64 << 30);
                let d = rng.random_range(0..1u64 << 30);
                let slack = rng.random_range(0..4u64);
                ((m + 2 * d + slack).saturating_sub(2), m, d)
            }
            _ => (rng.random_range(0..8), rng.random_range(0..8), rng.random_range(0..8)),
        };
        let cond = ConditionD::new(n_thr, n_multi, n_dark, 0.01).unwrap();
        let cost = u128::from(n_multi) + 2 * u128::from(n_dark);
        let expected = if u128::from(n_thr) > cost { (u128::from(n_thr) - cost) as u64 } else { 0 };
        clamped += u64::from(expected == 0);
        mismatches += u64::from(min_entropy_bound(&cond) != expected);
    }
    outcome(mismatches == 0, format!("{mismatches} mismatches in 100000 triples ({clamped} clamped to 0)"))
}

/// `T x` from the matrix definition `T[j][k] = s[j - k + n_in - 1]`.
fn toeplitz_oracle(seed: &[bool], x: &[bool], n_out: usize) -> Vec<bool> {
    let n_in = x.len();
    (0..n_out)
        .map(|j| (0..n_in).fold(false, |acc, k| acc ^ (seed[j + n_in - 1 - k] & x[k])))
        .collect()
}

// 3. Pairwise collision probability of the Toeplitz family.
fn universal_hashing() -> Outcome {
    const N_IN: usize = 8;
    const N_OUT: usize = 3;
    let seed_len = N_IN + N_OUT - 1;
    let seeds: Vec<(Vec<bool>, ToeplitzSeed)> = (0..1u64 << seed_len)
        .map(|s| {
            let bits = bits_of_u64(s, seed_len);
            let seed = ToeplitzSeed::from_bits(bits.iter().copied(), N_IN, N_OUT).unwrap();
            (bits, seed)
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0u64;
    let mut disagreements = 0u64;
    for d in 1..1u64 << N_IN {
        let x: u64 = rng.random_range(0..1 << N_IN);
        let zx = BinTrace::from_bits(bits_of_u64(x, N_IN)).unwrap();
        let zy = BinTrace::from_bits(bits_of_u64(x ^ d, N_IN)).unwrap();
        let diff = bits_of_u64(d, N_IN);
        let mut collisions = 0u64;
        for (bits, seed) in &seeds {
            let hit = extract(&zx, seed).unwrap() == extract(&zy, seed).unwrap();
            let oracle_hit = toeplitz_oracle(bits, &diff, N_OUT).iter().all(|&b| !b);
            disagreements += u64::from(hit != oracle_hit);
            collisions += u64::from(hit);
        }
        worst = worst.max(collisions);
    }
    let bound = (1u64 << seed_len) >> N_OUT;
    outcome(
        worst <= bound && disagreements == 0,
        format!("max collisions {worst}/1024 (bound {bound}/1024), {disagreements} oracle disagreements"),
    )
}

/// Column `k` of the Toeplitz matrix as an `n_out`-bit word.
fn column(seed: u64, n_in: usize, n_out: usize, k: usize) -> u64 {
    (seed >> (n_in - 1 - k)) & ((1 << n_out) - 1)
}

fn hash_word(seed: u64, x: u64, n_in: usize, n_out: usize) -> u64 {
    (0..n_in).filter(|&k| x >> k & 1 == 1).fold(0, |acc, k| acc ^ column(seed, n_in, n_out, k))
}

/// Seed-averaged distance from uniform of the hashed flat source `support`.
fn seed_averaged_distance(support: &[u64], n_in: usize, n_out: usize) -> f64 {
    let seeds = 1u64 << (n_in + n_out - 1);
    let uniform = 1.0 / (1u64 << n_out) as f64;
    let weight = 1.0 / support.len() as f64;
    let mut counts = vec![0u32; 1 << n_out];
    let mut total = 0.0;
    for s in 0..seeds {
        counts.iter_mut().for_each(|c| *c = 0);
        for &x in support {
            counts[hash_word(s, x, n_in, n_out) as usize] += 1;
        }
        total += 0.5 * counts.iter().map(|&c| (c as f64 * weight - uniform).abs()).sum::<f64>();
    }
    total / seeds as f64
}

fn random_subspace(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<u64> {
    // Span of k independent vectors: a flat source of size 2^k.
    let mut basis: Vec<u64> = Vec::new();
    let mut span = vec![0u64];
    while basis.len() < k {
        let v = rng.random_range(1..1u64 << n);
        if span.contains(&v) {
            continue;
        }
        let shifted: Vec<u64> = span.iter().map(|&s| s ^ v).collect();
        span.extend(shifted);
        basis.push(v);
    }
    span
}

// 4. Leftover hashing on flat sources, by exhaustive enumeration.
fn leftover_hashing() -> Outcome {
    const N: usize = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_ratio = 0.0f64;
    let mut cases = 0;
    let mut library_mismatches = 0;
    for k in [4usize, 6, 8] {
        let mut sources: Vec<Vec<u64>> = Vec::new();
        for _ in 0..3 {
            let mut all: Vec<u64> = (0..1u64 << N).collect();
            for i in 0..all.len() {
                let j = rng.random_range(i..all.len());
                all.swap(i, j);
            }
            all.truncate(1 << k);
            sources.push(all);
        }
        for _ in 0..2 {
            sources.push(random_subspace(N, k, &mut rng));
        }
        let shift = rng.random_range(0..1u64 << N);
        let affine: Vec<u64> = random_subspace(N, k, &mut rng).into_iter().map(|x| x ^ shift).collect();
        sources.push(affine);

        for source in &sources {
            for n_fin in 1..=k {
                // The word-level hash must agree with the library extractor.
                for _ in 0..16 {
                    let s = rng.random_range(0..1u64 << (N + n_fin - 1));
                    let seed = ToeplitzSeed::from_bits(bits_of_u64(s, N + n_fin - 1), N, n_fin).unwrap();
                    let x = source[rng.random_range(0..source.len())];
                    let lib = extract(&BinTrace::from_bits(bits_of_u64(x, N)).unwrap(), &seed).unwrap();
                    let expected = FinalBits::from_bits(bits_of_u64(hash_word(s, x, N, n_fin), n_fin));
                    library_mismatches += usize::from(lib != expected);
                }
                let distance = seed_averaged_distance(source, N, n_fin);
                let bound = 2f64.powf((n_fin as f64 - k as f64) / 2.0) / 2.0;
                worst_ratio = worst_ratio.max(distance / bound);
                cases += 1;
            }
        }
    }
    outcome(
        worst_ratio <= 1.0 && library_mismatches == 0,
        format!("{cases} (source, n_fin) cases, worst distance/bound {worst_ratio:.4}, {library_mismatches} extractor mismatches"),
    )
}

fn frobenius_oracle(m: &CMatrix<f64>) -> f64 {
    m.iter().map(|z| z.re * z.re + z.im * z.im).sum::<f64>().sqrt()
}

// 5. Equal outcome probabilities and identical Eve marginals.
fn parity_symmetry() -> Outcome {
    const TOL: f64 = 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_gap = 0.0f64;
    let mut worst_distance = 0.0f64;
    let mut worst_oracle = 0.0f64;
    for d_a in [2usize, 4] {
        for d_e in [2usize, 4] {
            for _ in 0..1000 {
                let model = ParityModel::<f64>::random(d_a, d_e, &mut rng).unwrap();
                let rank = rng.random_range(1..=d_a * d_e);
                let rho = random_invariant_state(&model, rank, &mut rng);
                let m = measure_direction(&rho, &model).unwrap();
                worst_gap = worst_gap.max(m.probability_gap());
                worst_distance = worst_distance.max(m.eve_distance());

                // Independent loop computation of tr_A((E ⊗ I) ρ) for both
                // outcomes; ‖X‖₁ ≤ √d ‖X‖_F bounds the trace norm.
                let r = rho.matrix();
                let marginal = |e_op: &CMatrix<f64>| {
                    let mut out = CMatrix::<f64>::zeros(d_e, d_e);
                    for e in 0..d_e {
                        for f in 0..d_e {
                            let mut acc = c::<f64>(0.0, 0.0);
                            for a in 0..d_a {
                                for b in 0..d_a {
                                    acc += e_op[(a, b)] * r[(b * d_e + f, a * d_e + e)];
                                }
                            }
                            // acc = Σ E[a,b] ρ[(b,f),(a,e)] is entry (f, e).
                            out[(f, e)] = acc;
                        }
                    }
                    out
                };
                let up = marginal(model.e_up());
                let down = marginal(model.e_down());
                let p_gap = (up.trace().re - down.trace().re).abs();
                let bound = (d_e as f64).sqrt() * frobenius_oracle(&(&up - &down));
                worst_oracle = worst_oracle.max(p_gap).max(bound);
            }
        }
    }
    outcome(
        worst_gap <= TOL && worst_distance <= TOL && worst_oracle <= TOL,
        format!(
            "4000 states: max |p_up - p_down| {worst_gap:.1e}, max Eve distance {worst_distance:.1e}, oracle bound {worst_oracle:.1e} (tol {TOL:.0e})"
        ),
    )
}

fn all_reduced(n: usize) -> Vec<ReducedTrace> {
    let symbols = [ReducedSymbol::Neither, ReducedSymbol::Single, ReducedSymbol::Both];
    (0..3usize.pow(n as u32))
        .map(|mut index| {
            let mut v = Vec::with_capacity(n);
            for _ in 0..n {
                v.push(symbols[index % 3]);
                index /= 3;
            }
            ReducedTrace::new(v).unwrap()
        })
        .collect()
}

// 6. Arrow-flip invariance and the single-event count.
fn chain_counting() -> Outcome {
    const FLIP_TOL: f64 = 1e-12;
    const CLASSICAL_TOL: f64 = 1e-10;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_flip = 0.0f64;
    let mut count_mismatches = 0usize;
    let mut worst_classical = 0.0f64;
    let mut reduced_checked = 0usize;
    let mut classical_checked = 0usize;
    for (d_a, d_e) in [(2usize, 1usize), (2, 2), (2, 4), (4, 1), (4, 2), (8, 1)] {
        for n in 1..=4usize {
            for instance in 0..4 {
                let model = ParityModel::<f64>::random(d_a, d_e, &mut rng).unwrap();
                let classical = instance >= 2 && d_e >= 2;
                let rho = if classical {
                    random_classical_eve_state(&model, &mut rng)
                } else {
                    let rank = rng.random_range(1..=d_a * d_e);
                    random_invariant_state(&model, rank, &mut rng)
                };
                let chain = MeasurementChain::random(model, true, &mut rng);
                let ens = enumerate_chain(&rho, &chain, n).unwrap();
                worst_flip = worst_flip.max(ens.arrow_flip_violation());
                for reduced in all_reduced(n) {
                    let s = single_event_entropy(&ens, &reduced).unwrap();
                    let singles = reduced.symbols().iter().filter(|&&x| x == ReducedSymbol::Single).count();
                    count_mismatches += usize::from(s.bits != singles as f64 || s.members != 1 << singles);
                    reduced_checked += 1;
                    if !classical || s.probability <= 1e-9 {
                        continue;
                    }
                    // Classical guessing probability Σ_e max_w P(w, e) / P(fiber).
                    let fiber = ens.fiber(&reduced).unwrap();
                    let states: Vec<_> = fiber.iter().map(|w| ens.eve_state(w).unwrap()).collect();
                    let total: f64 = states.iter().map(|m| m.trace().re).sum();
                    let guess: f64 = (0..d_e)
                        .map(|e| states.iter().map(|m| m[(e, e)].re).fold(f64::MIN, f64::max))
                        .sum::<f64>()
                        / total;
                    let oracle = -guess.log2();
                    let library = s.classical_bits.unwrap_or(f64::NAN);
                    let err = (oracle - s.bits).abs().max((library - oracle).abs());
                    worst_classical = if err.is_nan() { f64::INFINITY } else { worst_classical.max(err) };
                    classical_checked += 1;
                }
            }
        }
    }
    outcome(
        worst_flip <= FLIP_TOL && count_mismatches == 0 && worst_classical <= CLASSICAL_TOL && classical_checked > 0,
        format!(
            "{reduced_checked} reduced traces: {count_mismatches} count mismatches, arrow-flip {worst_flip:.1e} (tol {FLIP_TOL:.0e}); \
             {classical_checked} classical fibers agree within {worst_classical:.1e} (tol {CLASSICAL_TOL:.0e})"
        ),
    )
}

fn kron_with_identity(small: [[f64; 2]; 2], m: usize) -> CMatrix<f64> {
    let mut out = CMatrix::<f64>::zeros(2 * m, 2 * m);
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..m {
                out[(i * m + k, j * m + k)] = c(small[i][j], 0.0);
            }
        }
    }
    out
}

fn max_entry(m: &CMatrix<f64>) -> f64 {
    m.iter().map(|z| z.re.hypot(z.im)).fold(0.0, f64::max)
}

// 7. Joint qubit-block form of direction and parity.
fn jordan() -> Outcome {
    const TOL: f64 = 1e-10;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for d_a in [2usize, 4, 8] {
        let m = d_a / 2;
        let sz = kron_with_identity([[1.0, 0.0], [0.0, -1.0]], m);
        let sx = kron_with_identity([[0.0, 1.0], [1.0, 0.0]], m);
        for _ in 0..1000 {
            let u0 = random_unitary::<f64, _>(d_a, &mut rng);
            let model = ParityModel::<f64>::standard(d_a, 1).unwrap().conjugated(&u0);
            let basis = jordan_decompose(&model).unwrap();
            let u = &basis.unitary;
            let ud = u.adjoint();
            let unitarity = max_entry(&(&ud * u - CMatrix::<f64>::identity(d_a, d_a)));
            let e = model.e_up() - model.e_down();
            let e_err = max_entry(&(&ud * &e * u - &sz));
            let p_err = max_entry(&(&ud * model.parity() * u - &sx));
            worst = worst.max(unitarity).max(e_err).max(p_err).max(basis.max_error());
        }
    }
    outcome(worst <= TOL, format!("3000 instances, max reconstruction error {worst:.1e} (tol {TOL:.0e})"))
}

fn reference_detector() -> DetectorModel {
    DetectorModel { solid_angle_fraction: 0.25, efficiency: 0.8, dark_count_prob: 1e-4 }
}

// 8. Bin-by-bin simulation against the thinned Poisson closed form.
fn simulator_statistics() -> Outcome {
    const BINS: u64 = 1_000_000;
    let (mu, omega, eta, p_dark) = (0.1f64, 0.25f64, 0.8f64, 1e-4f64);
    let config = RunConfig::new(BINS, SourceModel::symmetric(mu), reference_detector(), 8);
    let (w, truth) = simulate_run(&config).unwrap();
    let fired = w.symbols().iter().filter(|s| s.down_fired()).count() as u64;
    // Downward particles reaching D form a Poisson stream of mean μ·a/2.
    let a = eta * omega / 0.5;
    let p = 1.0 - (1.0 - p_dark) * (-mu * a / 2.0).exp();
    let sigma = (p * (1.0 - p) / BINS as f64).sqrt();
    let fraction = fired as f64 / BINS as f64;
    let z = (fraction - p) / sigma;
    outcome(
        z.abs() <= 3.0 && fired == truth.detection_bins,
        format!("fraction {fraction:.6} vs closed form {p:.6}, z = {z:+.2} (limit 3)"),
    )
}

// 9. Condition (d) holds on fresh runs except with probability δ.
fn estimation_coverage() -> Outcome {
    const TRIALS: u64 = 10_000;
    const DELTA: f64 = 0.05;
    const BINS: u64 = 1_000_000;
    let config = RunConfig::new(BINS, SourceModel::symmetric(0.1), reference_detector(), 9);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut failures = 0u64;
    for _ in 0..TRIALS {
        let cal = sample_calibration(&config, BINS, &mut rng);
        let cond = estimate_condition_d(&cal, BINS, DELTA).unwrap();
        let truth = sample_ground_truth(&config, BINS, &mut rng);
        failures += u64::from(!cond.holds_for(truth.detection_bins, truth.multi_emission_bins, truth.dark_count_bins));
    }
    let sigma = (DELTA * (1.0 - DELTA) / TRIALS as f64).sqrt();
    let limit = DELTA + 3.0 * sigma;
    let fraction = failures as f64 / TRIALS as f64;
    outcome(
        fraction <= limit,
        format!("{failures}/{TRIALS} failures, fraction {fraction:.4} (limit {limit:.4})"),
    )
}

fn cli(args: &[&str]) -> Result<String, String> {
    let parsed = Cli::try_parse_from(std::iter::once("parity-rng").chain(args.iter().copied())).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    run(parsed, &mut out).map_err(|e| e.to_string())?;
    Ok(String::from_utf8(out).unwrap())
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

// 10. simulate → estimate → plan → extract → report, through the CLI.
fn end_to_end() -> Outcome {
    const BINS: u64 = 1 << 18;
    const RUNS: u64 = 32;
    const EPSILON_EXP: u32 = 32;
    let dir = tempfile::TempDir::new().unwrap();
    let at = |name: &str| -> PathBuf { dir.path().join(name) };
    let write_config = |i: u64| -> PathBuf {
        let path = at(&format!("run{i}.json"));
        let json = format!(
            r#"{{"bins": {BINS}, "source": {{"mean_emissions_per_bin": 0.6}},
                "detector": {{"solid_angle_fraction": 0.5, "efficiency": 1.0, "dark_count_prob": 1e-4}},
                "rng_seed": {}}}"#,
            1000 + i
        );
        fs::write(&path, json).unwrap();
        path
    };

    let cal_config = write_config(RUNS);
    let cal_prefix = at("calibration");
    cli(&["simulate", "--config", path_str(&cal_config), "--out", path_str(&cal_prefix), "--calibration-bins", "4000000"])
        .unwrap();
    let cond_path = at("cond.json");
    let ledger_path = at("ledger.json");
    cli(&[
        "estimate", "--config", path_str(&at("calibration.calibration.json")), "--bins", &BINS.to_string(),
        "--delta", "1e-6", "--out", path_str(&cond_path),
    ])
    .unwrap();
    cli(&["plan", "--config", path_str(&cond_path), "--epsilon", &format!("2^-{EPSILON_EXP}"), "--out", path_str(&ledger_path)])
        .unwrap();
    let ledger: LedgerFile = serde_json::from_slice(&fs::read(&ledger_path).unwrap()).unwrap();
    let cond = ledger.ledger.cond;
    // Output length recomputed from the condition: floor(h - 2·32 + 2).
    let h = i128::from(cond.n_thr) - i128::from(cond.n_multi) - 2 * i128::from(cond.n_dark);
    let expected_n_fin = (h - 2 * i128::from(EPSILON_EXP) + 2).max(0) as u64;
    let mut problems = Vec::new();
    if ledger.ledger.n_fin != expected_n_fin || output_length_from_bound(h.max(0) as u64, 2f64.powi(-32)).unwrap() != expected_n_fin {
        problems.push(format!("ledger n_fin {} != {expected_n_fin}", ledger.ledger.n_fin));
    }

    let mut all_bits: Vec<bool> = Vec::new();
    for i in 0..RUNS {
        let config = write_config(i);
        let prefix = at(&format!("run{i}"));
        cli(&["simulate", "--config", path_str(&config), "--out", path_str(&prefix)]).unwrap();
        let out = at(&format!("run{i}.bits"));
        cli(&[
            "extract", &format!("{}.bins.evt", path_str(&prefix)), "--ledger", path_str(&ledger_path),
            "--deterministic-seed", &i.to_string(), "--out", path_str(&out),
        ])
        .unwrap();
        let report_path = at(&format!("run{i}.bits.report.json"));
        if let Err(e) = cli(&["report", path_str(&report_path)]) {
            problems.push(format!("run {i}: {e}"));
        }
        let report: RunReport = serde_json::from_slice(&fs::read(&report_path).unwrap()).unwrap();
        let bytes = fs::read(&out).unwrap();
        if report.n_fin != expected_n_fin || bytes.len() as u64 != expected_n_fin.div_ceil(8) {
            problems.push(format!("run {i}: emitted {} bits in {} bytes", report.n_fin, bytes.len()));
        }
        all_bits.extend(FinalBits::from_bytes(&bytes, report.n_fin as usize).iter());
        if i == 0 {
            let status = Command::new(BIN).arg("report").arg(&report_path).output().unwrap().status;
            if !status.success() {
                problems.push(format!("binary report audit exited with {status}"));
            }
        }
    }
    let tests = sanity::run_all(&all_bits);
    let min_p = tests.iter().map(|t| t.p_value).fold(1.0, f64::min);
    if all_bits.len() < 1_000_000 || tests.len() != 3 || min_p <= 0.001 {
        problems.push(format!("sanity on {} bits: min p {min_p:.4}", all_bits.len()));
    }
    let p_values: Vec<String> = tests.iter().map(|t| format!("{}={:.3}", t.name, t.p_value)).collect();
    outcome(
        problems.is_empty(),
        format!(
            "{RUNS} runs x {expected_n_fin} bits = {} bits, digests verified, {}{}",
            all_bits.len(),
            p_values.join(" "),
            if problems.is_empty() { String::new() } else { format!("; problems: {}", problems.join("; ")) }
        ),
    )
}

// 11. Biased sources and broken hypotheses are caught.
fn negative_controls() -> Outcome {
    const REPS: u64 = 1000;
    let mut rejected = 0u64;
    for rep in 0..REPS {
        let source = SourceModel { mean_emissions_per_bin: 0.1, direction_bias: 0.1 };
        let config = RunConfig::new(1, source, reference_detector(), rep);
        let samples = emit_directional_samples(&config, 10_000).unwrap();
        rejected += u64::from(angular_symmetry_test(&samples, 0.01).unwrap().verdict == Verdict::Fail);
    }
    let rate = rejected as f64 / REPS as f64;

    let clean = run_identity_suite(&SuiteConfig { seed: 11, trials: 16, injection: None }).passed();
    let mut flagged = Vec::new();
    for injection in [Injection::NonInvariantState, Injection::NonCovariantDetector] {
        let report = run_identity_suite(&SuiteConfig { seed: 11, trials: 16, injection: Some(injection) });
        let code = Command::new(BIN)
            .args(["verify", "--trials", "8", "--inject", &injection.to_string()])
            .output()
            .unwrap()
            .status
            .code();
        flagged.push((injection, !report.passed() && code == Some(parity_rng_cli::exit::VERIFICATION)));
    }
    let all_flagged = flagged.iter().all(|&(_, f)| f);
    outcome(
        rate >= 0.99 && clean && all_flagged,
        format!(
            "biased source rejected in {rejected}/{REPS} (need 0.99); clean suite passes: {clean}; injections flagged: {}",
            flagged.iter().map(|(i, f)| format!("{i}={f}")).collect::<Vec<_>>().join(" ")
        ),
    )
}

fn main() {
    let secs = Duration::from_secs;
    let results = [
        criterion(1, "bijection", secs(5), bijection),
        criterion(2, "min-entropy ledger", secs(1), ledger_formula),
        criterion(3, "universal hashing", secs(10), universal_hashing),
        criterion(4, "leftover hashing", secs(600), leftover_hashing),
        criterion(5, "parity symmetry", secs(30), parity_symmetry),
        criterion(6, "chain counting", secs(300), chain_counting),
        criterion(7, "jordan decomposition", secs(60), jordan),
        criterion(8, "simulator statistics", secs(30), simulator_statistics),
        criterion(9, "estimation coverage", secs(300), estimation_coverage),
        criterion(10, "end to end", secs(120), end_to_end),
        criterion(11, "negative controls", secs(120), negative_controls),
    ];
    let passed = results.iter().filter(|&&r| r).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
