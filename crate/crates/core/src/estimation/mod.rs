//! Calibration statistics for the run parameters `(n_thr, n_multi, n_dark)`
//! and the angular symmetry check on the source.
//!
//! The statistical model is i.i.d. time bins: the per-bin rates observed
//! during calibration are the rates of the upcoming run. Nothing here
//! protects against a source whose behaviour changes between calibration
//! and use.

pub mod binomial;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use binomial::{binomial_lower, binomial_upper};

use crate::simulator::Direction;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimationError {
    #[error("calibration sample {0} is empty")]
    EmptySample(&'static str),
    #[error("count {hits} exceeds number of trials {trials}")]
    CountExceedsTrials { hits: u64, trials: u64 },
    #[error("{name} = {value} is outside (0, 1)")]
    ProbabilityOutOfRange { name: &'static str, value: f64 },
    #[error("run length must be at least one bin")]
    EmptyRun,
    #[error("angular test needs at least two samples, got {0}")]
    TooFewSamples(usize),
    #[error("condition parameter {name} = {value} exceeds run length {bins}")]
    ExceedsRunLength { name: &'static str, value: u64, bins: u64 },
}

/// Parameters that hold for a run except with probability `delta`: at least
/// `n_thr` detections, at most `n_multi` multi-emission bins and at most
/// `n_dark` dark-count bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionD {
    pub n_thr: u64,
    pub n_multi: u64,
    pub n_dark: u64,
    pub delta: f64,
}

impl ConditionD {
    pub fn new(n_thr: u64, n_multi: u64, n_dark: u64, delta: f64) -> Result<Self, EstimationError> {
        let cond = Self {
            n_thr,
            n_multi,
            n_dark,
            delta,
        };
        cond.validate()?;
        Ok(cond)
    }

    pub fn validate(&self) -> Result<(), EstimationError> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(EstimationError::ProbabilityOutOfRange {
                name: "delta",
                value: self.delta,
            });
        }
        Ok(())
    }

    pub fn validate_for_run(&self, bins: u64) -> Result<(), EstimationError> {
        self.validate()?;
        for (name, value) in [("n_thr", self.n_thr), ("n_multi", self.n_multi), ("n_dark", self.n_dark)] {
            if value > bins {
                return Err(EstimationError::ExceedsRunLength { name, value, bins });
            }
        }
        Ok(())
    }

    /// Whether a run with these ground-truth tallies satisfies the condition.
    pub fn holds_for(&self, detections: u64, multi_emission_bins: u64, dark_count_bins: u64) -> bool {
        detections >= self.n_thr && multi_emission_bins <= self.n_multi && dark_count_bins <= self.n_dark
    }
}

/// `hits` bins out of `bins` observed bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinCount {
    pub hits: u64,
    pub bins: u64,
}

impl BinCount {
    pub fn new(hits: u64, bins: u64) -> Self {
        Self { hits, bins }
    }

    pub fn rate(&self) -> f64 {
        self.hits as f64 / self.bins as f64
    }

    fn validate(&self, name: &'static str) -> Result<(), EstimationError> {
        if self.bins == 0 {
            return Err(EstimationError::EmptySample(name));
        }
        if self.hits > self.bins {
            return Err(EstimationError::CountExceedsTrials {
                hits: self.hits,
                trials: self.bins,
            });
        }
        Ok(())
    }
}

/// Measurements taken before the run.
///
/// * `source_on`: bins in which the detector `D` fired with the source in place.
/// * `activity`: bins in which a reference counter saw at least one emission;
///   this is the activity calibration, `μ = -ln(1 - rate)`.
/// * `source_off`: bins in which `D` fired with the source removed (dark counts).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationData {
    pub source_on: BinCount,
    pub activity: BinCount,
    pub source_off: BinCount,
}

impl CalibrationData {
    pub fn validate(&self) -> Result<(), EstimationError> {
        self.source_on.validate("source_on")?;
        self.activity.validate("activity")?;
        self.source_off.validate("source_off")
    }

    /// Point estimate of the mean emissions per bin.
    pub fn mu_hat(&self) -> f64 {
        -(-self.activity.rate()).ln_1p()
    }

    pub fn dark_rate_hat(&self) -> f64 {
        self.source_off.rate()
    }
}

/// `P(k ≥ 2)` for `k ~ Poisson(mu)`.
pub fn poisson_multi_tail(mu: f64) -> f64 {
    if mu.is_infinite() {
        return 1.0;
    }
    (-(-mu).exp_m1() - mu * (-mu).exp()).clamp(0.0, 1.0)
}

/// How `delta` was spent: each of the three parameters gets `delta / 3`, half
/// on the calibration bound and half on the run's own fluctuation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaBudget {
    pub total: f64,
    pub per_calibration_bound: f64,
    pub per_run_fluctuation: f64,
}

impl DeltaBudget {
    pub fn split(delta: f64) -> Self {
        Self {
            total: delta,
            per_calibration_bound: delta / 6.0,
            per_run_fluctuation: delta / 6.0,
        }
    }
}

/// Rate bounds behind an estimated [`ConditionD`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBounds {
    pub detection_lower: f64,
    pub mu_upper: f64,
    pub multi_upper: f64,
    pub dark_single_upper: f64,
    pub dark_bin_upper: f64,
}

/// Calibration report: the estimated condition plus everything needed to
/// audit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionEstimate {
    pub condition: ConditionD,
    pub run_bins: u64,
    pub calibration: CalibrationData,
    pub budget: DeltaBudget,
    pub bounds: RateBounds,
    pub model: String,
}

pub const IID_MODEL: &str = "iid-bins: calibration rates transfer to the run; no adversarial correlations";

pub fn estimate_condition_d(
    cal: &CalibrationData,
    run_bins: u64,
    delta: f64,
) -> Result<ConditionD, EstimationError> {
    estimate_with_report(cal, run_bins, delta).map(|e| e.condition)
}

/// Estimate condition (d) for a run of `run_bins` bins.
///
/// Per parameter the failure budget `delta / 3` is spent as `delta / 6` on a
/// Clopper–Pearson bound of the per-bin rate and `delta / 6` on the binomial
/// quantile of the run count at that bounded rate. The union bound over the
/// six events gives total failure probability at most `delta`.
pub fn estimate_with_report(
    cal: &CalibrationData,
    run_bins: u64,
    delta: f64,
) -> Result<ConditionEstimate, EstimationError> {
    cal.validate()?;
    if run_bins == 0 {
        return Err(EstimationError::EmptyRun);
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(EstimationError::ProbabilityOutOfRange { name: "delta", value: delta });
    }
    let budget = DeltaBudget::split(delta);
    let a = budget.per_calibration_bound;
    let r = budget.per_run_fluctuation;

    let detection_lower = binomial_lower(cal.source_on.hits, cal.source_on.bins, a)?;
    let n_thr = binomial::lower_quantile(run_bins, detection_lower, r);

    let occupied_upper = binomial_upper(cal.activity.hits, cal.activity.bins, a)?;
    let mu_upper = -(-occupied_upper).ln_1p();
    let multi_upper = poisson_multi_tail(mu_upper);
    let n_multi = binomial::upper_quantile(run_bins, multi_upper, r);

    let dark_single_upper = binomial_upper(cal.source_off.hits, cal.source_off.bins, a)?;
    // D↑ mirrors D↓, so a bin is dark in either detector with 1 - (1 - p)^2.
    let dark_bin_upper = 1.0 - (1.0 - dark_single_upper).powi(2);
    let n_dark = binomial::upper_quantile(run_bins, dark_bin_upper, r);

    let condition = ConditionD::new(n_thr, n_multi, n_dark, delta)?;
    Ok(ConditionEstimate {
        condition,
        run_bins,
        calibration: *cal,
        budget,
        bounds: RateBounds {
            detection_lower,
            mu_upper,
            multi_upper,
            dark_single_upper,
            dark_bin_upper,
        },
        model: IID_MODEL.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetryTest {
    pub down: u64,
    pub total: u64,
    pub p_value: f64,
    pub alpha: f64,
    pub verdict: Verdict,
}

/// Exact two-sided binomial test of `P(down) = 1/2`. A failed test means the
/// source cannot be used.
pub fn angular_symmetry_test(samples: &[Direction], alpha: f64) -> Result<SymmetryTest, EstimationError> {
    if samples.len() < 2 {
        return Err(EstimationError::TooFewSamples(samples.len()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(EstimationError::ProbabilityOutOfRange { name: "alpha", value: alpha });
    }
    let total = samples.len() as u64;
    let down = samples.iter().filter(|&&d| d == Direction::Down).count() as u64;
    let tail = down.min(total - down);
    let p_value = if 2 * tail == total {
        1.0
    } else {
        (2.0 * binomial::cdf(tail, total, 0.5)).min(1.0)
    };
    let verdict = if p_value < alpha { Verdict::Fail } else { Verdict::Pass };
    Ok(SymmetryTest {
        down,
        total,
        p_value,
        alpha,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn silent(bins: u64) -> CalibrationData {
        CalibrationData {
            source_on: BinCount::new(0, bins),
            activity: BinCount::new(0, bins),
            source_off: BinCount::new(0, bins),
        }
    }

    #[test]
    fn poisson_tail_matches_pmf_sum() {
        let mu: f64 = 0.1;
        assert_relative_eq!(poisson_multi_tail(mu), 1.0 - (-mu).exp() * 1.1, max_relative = 1e-12);
        let mut term = (-mu).exp() * mu * mu / 2.0;
        let mut sum = 0.0;
        for k in 2..40 {
            sum += term;
            term *= mu / (k + 1) as f64;
        }
        assert_relative_eq!(poisson_multi_tail(mu), sum, max_relative = 1e-12);
        assert_relative_eq!(poisson_multi_tail(mu), 0.004679, epsilon = 1e-6);
        assert_eq!(poisson_multi_tail(0.0), 0.0);
        assert_eq!(poisson_multi_tail(f64::INFINITY), 1.0);
    }

    #[test]
    fn perfect_silence() {
        let est = estimate_with_report(&silent(10_000), 10_000, 0.01).unwrap();
        let c = est.condition;
        assert_eq!(c.n_thr, 0);
        assert!(c.n_dark > 0 && c.n_dark < 100, "{c:?}");
        assert!(c.n_multi > 0 && c.n_multi < 10, "{c:?}");
        // rate bounds are the k = 0 Clopper–Pearson values
        assert_relative_eq!(
            est.bounds.dark_single_upper,
            1.0 - (0.01f64 / 6.0).powf(1e-4),
            max_relative = 1e-10
        );
        assert_relative_eq!(est.bounds.mu_upper, -(0.01f64 / 6.0).powf(1e-4).ln(), max_relative = 1e-8);
    }

    #[test]
    fn estimate_rejects_empty_samples() {
        let mut cal = silent(100);
        cal.source_off.bins = 0;
        assert_eq!(
            estimate_condition_d(&cal, 100, 0.1),
            Err(EstimationError::EmptySample("source_off"))
        );
        assert!(estimate_condition_d(&silent(100), 0, 0.1).is_err());
        assert!(estimate_condition_d(&silent(100), 100, 1.5).is_err());
    }

    #[test]
    fn condition_tracks_calibrated_rates() {
        let cal = CalibrationData {
            source_on: BinCount::new(24_800, 1_000_000),
            activity: BinCount::new(95_163, 1_000_000),
            source_off: BinCount::new(100, 1_000_000),
        };
        let c = estimate_condition_d(&cal, 1_000_000, 0.05).unwrap();
        assert!(c.n_thr < 24_800 && c.n_thr > 24_000, "{c:?}");
        assert!(c.n_multi > 4_679 && c.n_multi < 5_100, "{c:?}");
        assert!(c.n_dark > 200 && c.n_dark < 300, "{c:?}");
    }

    #[test]
    fn symmetry_examples() {
        let mut balanced = vec![Direction::Up; 5000];
        balanced.extend(vec![Direction::Down; 5000]);
        let t = angular_symmetry_test(&balanced, 0.01).unwrap();
        assert_eq!(t.verdict, Verdict::Pass);
        assert_eq!(t.p_value, 1.0);

        let t = angular_symmetry_test(&vec![Direction::Down; 10_000], 0.01).unwrap();
        assert_eq!(t.verdict, Verdict::Fail);
        assert!(t.p_value < 1e-300 || t.p_value == 0.0);

        assert_eq!(
            angular_symmetry_test(&[], 0.01).unwrap_err(),
            EstimationError::TooFewSamples(0)
        );
    }

    #[test]
    fn symmetry_p_value_small_case() {
        // 1 down out of 10: 2 * (1 + 10) / 1024
        let mut s = vec![Direction::Up; 9];
        s.push(Direction::Down);
        let t = angular_symmetry_test(&s, 0.05).unwrap();
        assert_relative_eq!(t.p_value, 22.0 / 1024.0, max_relative = 1e-10);
        assert_eq!(t.verdict, Verdict::Fail);
    }

    #[test]
    fn holds_for_counts() {
        let c = ConditionD::new(10, 2, 1, 0.1).unwrap();
        assert!(c.holds_for(10, 2, 1));
        assert!(!c.holds_for(9, 2, 1));
        assert!(!c.holds_for(10, 3, 1));
        assert!(!c.holds_for(10, 2, 2));
        assert!(c.validate_for_run(5).is_err());
    }
}
