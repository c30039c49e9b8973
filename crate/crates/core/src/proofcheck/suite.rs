//! Randomized identity suite behind the `verify` command.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::chain::{enumerate_chain_unchecked, ChainEnsemble, MeasurementChain};
use super::jordan::jordan_decompose;
use super::linalg::{self, CMatrix};
use super::model::{check_parity_invariance, measure_direction_unchecked, random_invariant_state, DensityMatrix, ParityModel};
use crate::entropy::{classical_min_entropy, CQDistribution};
use crate::trace::{h_map, single_count, DualSymbol, DualTrace, ReducedSymbol, ReducedTrace};

const CHAIN_BINS: usize = 3;
const EXACT_TOL: f64 = 1e-12;
const SPECTRAL_TOL: f64 = 1e-10;

/// A deliberate breach of one hypothesis, used to confirm the suite
/// notices it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Injection {
    NonInvariantState,
    NonCovariantDetector,
}

impl FromStr for Injection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "non-invariant-state" => Ok(Self::NonInvariantState),
            "non-covariant-detector" => Ok(Self::NonCovariantDetector),
            other => Err(format!(
                "unknown injection {other:?} (expected non-invariant-state or non-covariant-detector)"
            )),
        }
    }
}

impl fmt::Display for Injection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::NonInvariantState => "non-invariant-state",
            Self::NonCovariantDetector => "non-covariant-detector",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub seed: u64,
    pub trials: usize,
    pub injection: Option<Injection>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self { seed: 0, trials: 64, injection: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    pub statement: String,
    pub max_violation: f64,
    pub tolerance: f64,
    pub cases: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub trials: usize,
    pub injection: Option<Injection>,
    pub checks: Vec<IdentityCheck>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&IdentityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let injection = self.injection.map_or_else(|| "none".to_string(), |i| i.to_string());
        writeln!(f, "identity suite: seed={} trials={} injection={}", self.seed, self.trials, injection)?;
        for c in &self.checks {
            writeln!(
                f,
                "{} {:<30} max_violation={:.3e} tol={:.0e} cases={}  [{}]",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.max_violation,
                c.tolerance,
                c.cases,
                c.statement
            )?;
        }
        let ok = self.checks.iter().filter(|c| c.passed).count();
        write!(
            f,
            "result: {} ({}/{})",
            if self.passed() { "PASS" } else { "FAIL" },
            ok,
            self.checks.len()
        )
    }
}

struct Accumulator {
    name: &'static str,
    statement: &'static str,
    tolerance: f64,
    worst: f64,
    cases: usize,
}

impl Accumulator {
    fn new(name: &'static str, statement: &'static str, tolerance: f64) -> Self {
        Self { name, statement, tolerance, worst: 0.0, cases: 0 }
    }

    fn record(&mut self, v: f64) {
        // NaN must count as a failure.
        self.worst = if v.is_nan() || self.worst.is_nan() { f64::NAN } else { self.worst.max(v) };
        self.cases += 1;
    }

    fn finish(self) -> IdentityCheck {
        IdentityCheck {
            name: self.name.to_string(),
            statement: self.statement.to_string(),
            max_violation: self.worst,
            tolerance: self.tolerance,
            cases: self.cases,
            passed: self.worst <= self.tolerance,
        }
    }
}

/// A structurally valid model whose `E↑` is rotated away from `P E↓ P`.
fn noncovariant_model(d_a: usize, d_e: usize, rng: &mut ChaCha8Rng) -> ParityModel<f64> {
    let good = ParityModel::<f64>::random(d_a, d_e, rng).expect("even dimension");
    let rotated = ParityModel::<f64>::random(d_a, d_e, rng).expect("even dimension");
    ParityModel::without_covariance(
        good.parity().clone(),
        rotated.e_up().clone(),
        rotated.e_down().clone(),
        d_e,
    )
    .expect("projectors from a valid model")
}

fn classical_state(model: &ParityModel<f64>, symmetric: bool, rng: &mut ChaCha8Rng) -> DensityMatrix<f64> {
    let (d_a, d_e) = (model.d_a(), model.d_e());
    let mut rho = CMatrix::zeros(d_a * d_e, d_a * d_e);
    for e in 0..d_e {
        let sigma = linalg::random_state::<f64, _>(d_a, d_a, rng);
        let sigma = if symmetric {
            (&sigma + model.parity() * &sigma * model.parity()) * linalg::c::<f64>(0.5, 0.0)
        } else {
            sigma
        };
        let mut proj = CMatrix::zeros(d_e, d_e);
        proj[(e, e)] = linalg::c(1.0 / d_e as f64, 0.0);
        rho += sigma.kronecker(&proj);
    }
    DensityMatrix::new(rho).expect("convex mixture of states")
}

fn all_reduced(n: usize) -> Vec<ReducedTrace> {
    let symbols = [ReducedSymbol::Neither, ReducedSymbol::Single, ReducedSymbol::Both];
    (0..3usize.pow(n as u32))
        .map(|mut i| {
            let mut v = Vec::with_capacity(n);
            for _ in 0..n {
                v.push(symbols[i % 3]);
                i /= 3;
            }
            ReducedTrace::new(v).expect("non-empty")
        })
        .collect()
}

/// `|H_min(W | h(W)=w̃, E) − s(w̃)|` over fibers with nonzero weight, from
/// the diagonals of Eve's states.
fn counting_gap(ens: &ChainEnsemble<f64>, d_e: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for reduced in all_reduced(ens.len()) {
        let fiber: Vec<DualTrace> = reduced.preimages().collect();
        let states: Vec<&CMatrix<f64>> = fiber.iter().map(|w| ens.eve_state(w.symbols()).expect("length")).collect();
        let weight: f64 = states.iter().map(|m| m.trace().re).sum();
        if weight <= SPECTRAL_TOL {
            continue;
        }
        let probs = states
            .iter()
            .flat_map(|m| (0..d_e).map(move |e| m[(e, e)].re.max(0.0) / weight))
            .collect();
        let table = CQDistribution::new(probs, states.len(), d_e).expect("normalized");
        let h = classical_min_entropy(&table).expect("nonempty");
        worst = worst.max((h - single_count(&reduced) as f64).abs());
    }
    worst
}

/// Shortfall of `H_min(g(W)|E)` below the smallest single count among
/// reduced traces that actually occur.
fn g_bound_shortfall(ens: &ChainEnsemble<f64>) -> f64 {
    let n = ens.len();
    let mut floor = usize::MAX;
    for index in 0..(1usize << (2 * n)) {
        let w: Vec<DualSymbol> = (0..n)
            .map(|i| DualSymbol::from_code(((index >> (2 * (n - 1 - i))) & 3) as u8).expect("two bits"))
            .collect();
        if ens.probability(&w).expect("length") > SPECTRAL_TOL {
            floor = floor.min(single_count(&h_map(&DualTrace::new(w).expect("non-empty"))));
        }
    }
    let table = ens.classical_g_table().expect("table");
    let h = classical_min_entropy(&table).expect("nonempty");
    (floor as f64 - h).max(0.0)
}

/// Runs every identity over `trials` random instances.
pub fn run_identity_suite(config: &SuiteConfig) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut structure = Accumulator::new("model_identities", "P^2=I, E_up+E_down=I, E_up E_down=0", EXACT_TOL);
    let mut covariance = Accumulator::new("detector_covariance", "P E_up P = E_down", EXACT_TOL);
    let mut invariance = Accumulator::new("parity_invariance", "P rho P = rho", EXACT_TOL);
    let mut probabilities = Accumulator::new("equal_direction_probabilities", "p_up = p_down", EXACT_TOL);
    let mut marginals = Accumulator::new("equal_eve_marginals", "tr_A E_up rho = tr_A E_down rho", EXACT_TOL);
    let mut chain_cov = Accumulator::new("chain_covariance", "M_up o P = M_down", EXACT_TOL);
    let mut trace_pres = Accumulator::new("instrument_trace_preservation", "sum_w M_w trace preserving", SPECTRAL_TOL);
    let mut bin_start = Accumulator::new("bin_start_invariance", "invariance at every bin start", EXACT_TOL);
    let mut arrow = Accumulator::new("arrow_flip_invariance", "rho_E^w = rho_E^w' when h(w)=h(w')", EXACT_TOL);
    let mut counting = Accumulator::new("single_event_counting", "H_min(W|h(W),E) = s", SPECTRAL_TOL);
    let mut g_bound = Accumulator::new("g_output_bound", "H_min(g(W)|E) >= min s", SPECTRAL_TOL);
    let mut jordan = Accumulator::new("jordan_reconstruction", "E = sz(x)I, P = sx(x)I in a common basis", SPECTRAL_TOL);

    for trial in 0..config.trials {
        let d_a = if trial % 2 == 0 { 2 } else { 4 };
        let d_e = 1 + trial % 3;
        let model = match config.injection {
            Some(Injection::NonCovariantDetector) => noncovariant_model(d_a, d_e, &mut rng),
            _ => ParityModel::<f64>::random(d_a, d_e, &mut rng).expect("even dimension"),
        };
        let symmetric = config.injection != Some(Injection::NonInvariantState);
        let rho = if symmetric {
            random_invariant_state(&model, 2, &mut rng)
        } else {
            DensityMatrix::new(linalg::random_state::<f64, _>(model.dim(), 2, &mut rng)).expect("random state")
        };

        let r = model.residuals();
        structure.record(r.max_structural());
        covariance.record(r.covariance);
        invariance.record(check_parity_invariance(&rho, &model).expect("dimensions"));
        let m = measure_direction_unchecked(&rho, &model).expect("dimensions");
        probabilities.record(m.probability_gap());
        marginals.record(m.eve_distance());

        let chain = MeasurementChain::random(model.clone(), true, &mut rng);
        chain_cov.record(chain.covariance_violation());
        trace_pres.record(chain.trace_preservation_violation());
        let ens = enumerate_chain_unchecked(&rho, &chain, CHAIN_BINS).expect("bounded enumeration");
        bin_start.record(ens.max_invariance_violation());
        arrow.record(ens.arrow_flip_violation());

        let eve_classical = classical_state(&model, symmetric, &mut rng);
        let ens = enumerate_chain_unchecked(&eve_classical, &chain, CHAIN_BINS).expect("bounded enumeration");
        counting.record(counting_gap(&ens, d_e));
        g_bound.record(g_bound_shortfall(&ens));

        jordan.record(match jordan_decompose(&model) {
            Ok(basis) => basis.max_error(),
            Err(_) => r.covariance.max(r.max_structural()),
        });
    }

    let checks = [
        structure,
        covariance,
        invariance,
        probabilities,
        marginals,
        chain_cov,
        trace_pres,
        bin_start,
        arrow,
        counting,
        g_bound,
        jordan,
    ]
    .into_iter()
    .map(Accumulator::finish)
    .collect();
    SuiteReport { seed: config.seed, trials: config.trials, injection: config.injection, checks }
}
