//! Seeded Monte Carlo model of the source and the detector pair.
//!
//! Per bin the source emits `k ~ Poisson(μ)` particles. Each goes down with
//! probability `(1 + b) / 2`. A downward particle fires `D↓` with probability
//! `η · Ω / 0.5`; `D↑` is the exact mirror image and fires on upward particles
//! with the same probability. Each detector also fires on its own with the
//! dark-count probability. No dead time and no memory between bins.
//!
//! Every run draws from one ChaCha8 stream derived from the configured seed,
//! so a config reproduces its trace bit for bit on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimation::{poisson_multi_tail, BinCount, CalibrationData};
use crate::trace::{g_map, BinTrace, DualSymbol, DualTrace};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("parameter {name} = {value} is out of range")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("a run needs at least one bin")]
    NoBins,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceModel {
    pub mean_emissions_per_bin: f64,
    /// `0` is parity symmetric; anything else is only for negative controls.
    #[serde(default)]
    pub direction_bias: f64,
}

impl SourceModel {
    pub fn symmetric(mean_emissions_per_bin: f64) -> Self {
        Self {
            mean_emissions_per_bin,
            direction_bias: 0.0,
        }
    }

    pub fn down_probability(&self) -> f64 {
        (1.0 + self.direction_bias) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorModel {
    /// Fraction of the full sphere covered by `D`; at most one hemisphere.
    pub solid_angle_fraction: f64,
    pub efficiency: f64,
    pub dark_count_prob: f64,
}

impl DetectorModel {
    /// Probability that a particle heading into the detector's hemisphere
    /// fires it.
    pub fn acceptance(&self) -> f64 {
        self.efficiency * self.solid_angle_fraction / 0.5
    }
}

fn default_bin_width() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub bins: u64,
    /// Seconds; metadata only.
    #[serde(default = "default_bin_width")]
    pub bin_width: f64,
    pub source: SourceModel,
    pub detector: DetectorModel,
    pub rng_seed: u64,
}

const RUN_STREAM: u64 = 0;
const DIRECTION_STREAM: u64 = 1;
const CALIBRATION_ON_STREAM: u64 = 2;
const CALIBRATION_OFF_STREAM: u64 = 3;

impl RunConfig {
    pub fn new(bins: u64, source: SourceModel, detector: DetectorModel, rng_seed: u64) -> Self {
        Self {
            bins,
            bin_width: default_bin_width(),
            source,
            detector,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.bins == 0 {
            return Err(SimError::NoBins);
        }
        let checks: [(&'static str, f64, bool); 6] = [
            ("mean_emissions_per_bin", self.source.mean_emissions_per_bin, self.source.mean_emissions_per_bin >= 0.0 && self.source.mean_emissions_per_bin.is_finite()),
            ("direction_bias", self.source.direction_bias, (-1.0..=1.0).contains(&self.source.direction_bias)),
            ("solid_angle_fraction", self.detector.solid_angle_fraction, (0.0..=0.5).contains(&self.detector.solid_angle_fraction)),
            ("efficiency", self.detector.efficiency, (0.0..=1.0).contains(&self.detector.efficiency)),
            ("dark_count_prob", self.detector.dark_count_prob, (0.0..1.0).contains(&self.detector.dark_count_prob)),
            ("bin_width", self.bin_width, self.bin_width > 0.0 && self.bin_width.is_finite()),
        ];
        for (name, value, ok) in checks {
            if !ok {
                return Err(SimError::InvalidParameter { name, value });
            }
        }
        Ok(())
    }

    fn stream(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(stream);
        rng
    }

    fn source_off(&self) -> Self {
        Self {
            source: SourceModel::symmetric(0.0),
            ..*self
        }
    }
}

/// Exact tallies of what happened during a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Bins with at least two emitted particles.
    pub multi_emission_bins: u64,
    /// Bins with a dark count in `D↑`, `D↓` or both.
    pub dark_count_bins: u64,
    /// Bins where `D = D↓` fired.
    pub detection_bins: u64,
    /// Bins with at least one emitted particle.
    pub emission_bins: u64,
}

/// Hemisphere label of a single emitted particle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Up,
    Down,
}

struct BinOutcome {
    symbol: DualSymbol,
    emitted: u64,
    dark: bool,
}

fn simulate_bins(config: &RunConfig, bins: u64, rng: &mut ChaCha8Rng, mut sink: impl FnMut(BinOutcome)) {
    let mu = config.source.mean_emissions_per_bin;
    let emitter = (mu > 0.0).then(|| Poisson::new(mu).expect("validated mean"));
    let p_down = config.source.down_probability();
    let accept = config.detector.acceptance();
    let p_dark = config.detector.dark_count_prob;
    for _ in 0..bins {
        let emitted = emitter.as_ref().map_or(0, |e| e.sample(rng) as u64);
        let (mut up_fired, mut down_fired) = (false, false);
        for _ in 0..emitted {
            let down = rng.random::<f64>() < p_down;
            let detected = rng.random::<f64>() < accept;
            if detected {
                if down {
                    down_fired = true;
                } else {
                    up_fired = true;
                }
            }
        }
        let dark_down = rng.random::<f64>() < p_dark;
        let dark_up = rng.random::<f64>() < p_dark;
        sink(BinOutcome {
            symbol: DualSymbol::from_detectors(up_fired || dark_up, down_fired || dark_down),
            emitted,
            dark: dark_down || dark_up,
        });
    }
}

impl GroundTruth {
    fn record(&mut self, outcome: &BinOutcome) {
        self.multi_emission_bins += u64::from(outcome.emitted >= 2);
        self.emission_bins += u64::from(outcome.emitted >= 1);
        self.dark_count_bins += u64::from(outcome.dark);
        self.detection_bins += u64::from(outcome.symbol.down_fired());
    }
}

pub fn simulate_run(config: &RunConfig) -> Result<(DualTrace, GroundTruth), SimError> {
    config.validate()?;
    let mut rng = config.stream(RUN_STREAM);
    let mut symbols = Vec::with_capacity(config.bins as usize);
    let mut truth = GroundTruth::default();
    simulate_bins(config, config.bins, &mut rng, |outcome| {
        truth.record(&outcome);
        symbols.push(outcome.symbol);
    });
    Ok((DualTrace::new(symbols).expect("bins >= 1"), truth))
}

/// The record the physical detector `D` would have produced.
pub fn actual_trace(w: &DualTrace) -> BinTrace {
    g_map(w)
}

pub fn emit_directional_samples(config: &RunConfig, count: usize) -> Result<Vec<Direction>, SimError> {
    config.validate()?;
    let mut rng = config.stream(DIRECTION_STREAM);
    let p_down = config.source.down_probability();
    Ok((0..count)
        .map(|_| {
            if rng.random::<f64>() < p_down {
                Direction::Down
            } else {
                Direction::Up
            }
        })
        .collect())
}

/// Calibration measurements taken bin by bin: `bins` bins with the source in
/// place (detector and reference counter) and `bins` bins with it removed.
pub fn simulate_calibration(config: &RunConfig, bins: u64) -> Result<CalibrationData, SimError> {
    config.validate()?;
    if bins == 0 {
        return Err(SimError::NoBins);
    }
    let mut on = GroundTruth::default();
    simulate_bins(config, bins, &mut config.stream(CALIBRATION_ON_STREAM), |o| on.record(&o));
    let mut off = GroundTruth::default();
    let dark_config = config.source_off();
    simulate_bins(&dark_config, bins, &mut config.stream(CALIBRATION_OFF_STREAM), |o| off.record(&o));
    Ok(CalibrationData {
        source_on: BinCount::new(on.detection_bins, bins),
        activity: BinCount::new(on.emission_bins, bins),
        source_off: BinCount::new(off.detection_bins, bins),
    })
}

/// Per-bin joint class probabilities of the model, used to draw run tallies
/// without simulating every bin.
#[derive(Debug, Clone, Copy)]
pub struct BinClassProbabilities {
    /// `[no emission, one emission detected, one emission missed,
    ///   ≥2 emissions with a detection, ≥2 emissions without]`
    pub particle: [f64; 5],
    /// `[dark in D↓ and D↑, D↓ only, D↑ only, neither]`
    pub dark: [f64; 4],
}

impl BinClassProbabilities {
    pub fn of(config: &RunConfig) -> Self {
        let mu = config.source.mean_emissions_per_bin;
        let r = config.source.down_probability() * config.detector.acceptance();
        let p0 = (-mu).exp();
        let p1 = mu * p0;
        let x = mu * (1.0 - r);
        let p2_missed = (p0 * (x.exp_m1() - x)).max(0.0);
        let p2 = poisson_multi_tail(mu);
        let p = config.detector.dark_count_prob;
        Self {
            particle: [p0, p1 * r, p1 * (1.0 - r), (p2 - p2_missed).max(0.0), p2_missed],
            dark: [p * p, p * (1.0 - p), (1.0 - p) * p, (1.0 - p) * (1.0 - p)],
        }
    }

    pub fn detection(&self) -> f64 {
        let true_det = self.particle[1] + self.particle[3];
        let dark_down = self.dark[0] + self.dark[1];
        1.0 - (1.0 - true_det) * (1.0 - dark_down)
    }
}

/// Draw the tallies of a `bins`-bin run directly from their joint
/// multinomial law. Same distribution as [`simulate_run`]'s ground truth.
pub fn sample_ground_truth<R: Rng + ?Sized>(config: &RunConfig, bins: u64, rng: &mut R) -> GroundTruth {
    let probs = BinClassProbabilities::of(config);
    let mut truth = GroundTruth::default();
    let mut remaining = bins;
    let mut mass = 1.0f64;
    for (pi, &pp) in probs.particle.iter().enumerate() {
        for (di, &pd) in probs.dark.iter().enumerate() {
            let p = pp * pd;
            let count = if remaining == 0 {
                0
            } else if mass <= p || (pi == 4 && di == 3) {
                remaining
            } else {
                Binomial::new(remaining, (p / mass).clamp(0.0, 1.0))
                    .expect("probability clamped")
                    .sample(rng)
            };
            remaining -= count;
            mass -= p;
            let detected = pi == 1 || pi == 3 || di <= 1;
            truth.emission_bins += if pi >= 1 { count } else { 0 };
            truth.multi_emission_bins += if pi >= 3 { count } else { 0 };
            truth.dark_count_bins += if di <= 2 { count } else { 0 };
            truth.detection_bins += if detected { count } else { 0 };
        }
    }
    truth
}

/// Calibration counts drawn from their exact laws; the fast counterpart of
/// [`simulate_calibration`].
pub fn sample_calibration<R: Rng + ?Sized>(config: &RunConfig, bins: u64, rng: &mut R) -> CalibrationData {
    let on = sample_ground_truth(config, bins, rng);
    let dark = Binomial::new(bins, config.detector.dark_count_prob)
        .expect("validated probability")
        .sample(rng);
    CalibrationData {
        source_on: BinCount::new(on.detection_bins, bins),
        activity: BinCount::new(on.emission_bins, bins),
        source_off: BinCount::new(dark, bins),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{h_map, single_count};

    fn config(mu: f64, omega: f64, eta: f64, dark: f64, bins: u64, seed: u64) -> RunConfig {
        RunConfig::new(
            bins,
            SourceModel::symmetric(mu),
            DetectorModel {
                solid_angle_fraction: omega,
                efficiency: eta,
                dark_count_prob: dark,
            },
            seed,
        )
    }

    #[test]
    fn silent_source() {
        let (w, truth) = simulate_run(&config(0.0, 0.5, 1.0, 0.0, 1000, 3)).unwrap();
        assert_eq!(w.count(DualSymbol::Neither), 1000);
        assert_eq!(truth, GroundTruth::default());
    }

    #[test]
    fn deterministic_per_seed() {
        let c = config(0.3, 0.4, 0.9, 1e-3, 20_000, 99);
        assert_eq!(simulate_run(&c).unwrap(), simulate_run(&c).unwrap());
        let other = RunConfig { rng_seed: 100, ..c };
        assert_ne!(simulate_run(&c).unwrap().0, simulate_run(&other).unwrap().0);
    }

    #[test]
    fn rejects_invalid_config() {
        assert_eq!(simulate_run(&config(0.1, 0.6, 1.0, 0.0, 10, 0)).unwrap_err(), SimError::InvalidParameter { name: "solid_angle_fraction", value: 0.6 });
        assert_eq!(simulate_run(&config(-0.1, 0.5, 1.0, 0.0, 10, 0)).unwrap_err(), SimError::InvalidParameter { name: "mean_emissions_per_bin", value: -0.1 });
        assert_eq!(simulate_run(&config(0.1, 0.5, 1.0, 1.0, 10, 0)).unwrap_err(), SimError::InvalidParameter { name: "dark_count_prob", value: 1.0 });
        assert_eq!(simulate_run(&config(0.1, 0.5, 1.0, 0.0, 0, 0)).unwrap_err(), SimError::NoBins);
    }

    #[test]
    fn saturated_source_is_mostly_both() {
        let mu: f64 = 50.0;
        let n = 10_000u64;
        let (w, _) = simulate_run(&config(mu, 0.5, 1.0, 0.0, n, 5)).unwrap();
        let expected = 1.0 - 2.0 * (-mu / 2.0).exp() * (1.0 - (-mu / 2.0).exp()) - (-mu).exp();
        let frac = w.count(DualSymbol::Both) as f64 / n as f64;
        let sigma = (expected * (1.0 - expected) / n as f64).sqrt().max(1.0 / n as f64);
        assert!((frac - expected).abs() <= 3.0 * sigma, "{frac} vs {expected}");
    }

    #[test]
    fn both_fraction_moderate_source() {
        // exercises the closed form where it is not saturated
        let mu: f64 = 2.0;
        let n = 200_000u64;
        let (w, _) = simulate_run(&config(mu, 0.5, 1.0, 0.0, n, 6)).unwrap();
        let expected = 1.0 - 2.0 * (-mu / 2.0).exp() * (1.0 - (-mu / 2.0).exp()) - (-mu).exp();
        let frac = w.count(DualSymbol::Both) as f64 / n as f64;
        let sigma = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!((frac - expected).abs() <= 4.0 * sigma, "{frac} vs {expected}");
    }

    #[test]
    fn actual_trace_is_g() {
        let w: DualTrace = "DNU".parse().unwrap();
        assert_eq!(actual_trace(&w).to_string(), "100");
        let (w, truth) = simulate_run(&config(0.4, 0.3, 0.7, 1e-2, 5_000, 8)).unwrap();
        let z = actual_trace(&w);
        assert_eq!(z, g_map(&w));
        assert_eq!(z.count_ones() as u64, truth.detection_bins);
    }

    #[test]
    fn singles_respect_the_counting_bound() {
        for seed in 0..20 {
            let (w, t) = simulate_run(&config(0.8, 0.5, 0.9, 5e-3, 5_000, seed)).unwrap();
            let singles = single_count(&h_map(&w)) as i64;
            let bound = t.detection_bins as i64 - t.multi_emission_bins as i64 - 2 * t.dark_count_bins as i64;
            assert!(singles >= bound);
        }
    }

    #[test]
    fn direction_samples() {
        let mut c = config(0.1, 0.5, 1.0, 0.0, 1, 1);
        c.source.direction_bias = 1.0;
        assert!(emit_directional_samples(&c, 10).unwrap().iter().all(|&d| d == Direction::Down));
        for (bias, expected) in [(0.0, 0.5), (0.1, 0.55)] {
            c.source.direction_bias = bias;
            let n = 1_000_000;
            let s = emit_directional_samples(&c, n).unwrap();
            let frac = s.iter().filter(|&&d| d == Direction::Down).count() as f64 / n as f64;
            let sigma = (expected * (1.0 - expected) / n as f64).sqrt();
            assert!((frac - expected).abs() <= 3.0 * sigma, "bias {bias}: {frac}");
        }
    }

    #[test]
    fn up_down_balance_under_symmetry() {
        let (w, _) = simulate_run(&config(0.5, 0.4, 0.8, 1e-3, 200_000, 12)).unwrap();
        let up = w.count(DualSymbol::Up) as f64;
        let down = w.count(DualSymbol::Down) as f64;
        let sigma = ((up + down) / 4.0).sqrt();
        assert!((up - (up + down) / 2.0).abs() <= 4.0 * sigma);
    }

    #[test]
    fn fast_sampler_matches_bin_simulation() {
        let c = config(0.7, 0.35, 0.85, 2e-3, 400_000, 21);
        let (_, sim) = simulate_run(&c).unwrap();
        let probs = BinClassProbabilities::of(&c);
        let n = c.bins as f64;
        let check = |observed: u64, p: f64, what: &str| {
            let sigma = (n * p * (1.0 - p)).sqrt();
            assert!((observed as f64 - n * p).abs() <= 4.0 * sigma, "{what}: {observed} vs {}", n * p);
        };
        let p_multi = probs.particle[3] + probs.particle[4];
        let p_emit = 1.0 - probs.particle[0];
        let p_dark = 1.0 - probs.dark[3];
        check(sim.detection_bins, probs.detection(), "detection (sim)");
        check(sim.multi_emission_bins, p_multi, "multi (sim)");
        check(sim.emission_bins, p_emit, "emission (sim)");
        check(sim.dark_count_bins, p_dark, "dark (sim)");

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let fast = sample_ground_truth(&c, c.bins, &mut rng);
        check(fast.detection_bins, probs.detection(), "detection (fast)");
        check(fast.multi_emission_bins, p_multi, "multi (fast)");
        check(fast.emission_bins, p_emit, "emission (fast)");
        check(fast.dark_count_bins, p_dark, "dark (fast)");
    }

    #[test]
    fn class_probabilities_sum_to_one() {
        for mu in [0.0, 1e-4, 0.1, 1.0, 10.0] {
            let p = BinClassProbabilities::of(&config(mu, 0.25, 0.8, 1e-4, 1, 0));
            assert!((p.particle.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((p.dark.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let t = sample_ground_truth(&config(mu, 0.25, 0.8, 1e-4, 1, 0), 1000, &mut rng);
            assert!(t.detection_bins <= 1000 && t.multi_emission_bins <= t.emission_bins);
        }
    }

    #[test]
    fn calibration_by_simulation() {
        let c = config(0.1, 0.25, 0.8, 1e-3, 1, 17);
        let cal = simulate_calibration(&c, 200_000).unwrap();
        assert_eq!(cal, simulate_calibration(&c, 200_000).unwrap());
        let mu_hat = cal.mu_hat();
        assert!((mu_hat - 0.1).abs() < 0.01, "{mu_hat}");
        assert!((cal.dark_rate_hat() - 1e-3).abs() < 5e-4);
    }
}
