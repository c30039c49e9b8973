//! Min-entropy accounting and the classical oracles behind it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimation::ConditionD;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EntropyError {
    #[error("epsilon = {0} is outside (0, 1)")]
    EpsilonOutOfRange(f64),
    #[error("delta = {0} is outside [0, 1)")]
    DeltaOutOfRange(f64),
    #[error("distribution has no mass")]
    ZeroDistribution,
    #[error("distribution entry {index} is negative or not finite")]
    InvalidProbability { index: usize },
    #[error("distribution mass exceeds one")]
    OverNormalized,
    #[error("table shape {rows}x{cols} does not match {len} entries")]
    ShapeMismatch { rows: usize, cols: usize, len: usize },
    #[error("supports differ: {left} vs {right} outcomes")]
    SupportMismatch { left: usize, right: usize },
}

/// `max(0, n_thr - n_multi - 2 n_dark)`, exact.
pub fn min_entropy_bound(cond: &ConditionD) -> u64 {
    let h = i128::from(cond.n_thr) - i128::from(cond.n_multi) - 2 * i128::from(cond.n_dark);
    h.max(0) as u64
}

/// `2 log2(1/ε)`, the price of security level `ε` in output bits.
fn epsilon_penalty(epsilon: f64) -> Result<f64, EntropyError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(EntropyError::EpsilonOutOfRange(epsilon));
    }
    Ok(-2.0 * epsilon.log2())
}

/// Largest secure output length for a min-entropy bound `h`:
/// `max(0, floor(h - 2 log2(1/ε) + 2))`.
pub fn output_length_from_bound(h: u64, epsilon: f64) -> Result<u64, EntropyError> {
    let real = h as f64 - epsilon_penalty(epsilon)? + 2.0;
    Ok(if real <= 0.0 { 0 } else { real.floor() as u64 })
}

pub fn output_length(cond: &ConditionD, epsilon: f64) -> Result<u64, EntropyError> {
    output_length_from_bound(min_entropy_bound(cond), epsilon)
}

/// Seed-averaged trace distance bound of the leftover hash lemma:
/// `2δ + 2^{(n_fin - h)/2}`.
pub fn lhl_bound<T: Real>(n_fin: u64, h: T, delta: T) -> Result<T, EntropyError> {
    if !(delta >= T::zero() && delta < T::one()) {
        return Err(EntropyError::DeltaOutOfRange(delta.to_f64_lossy()));
    }
    let exponent = (T::lit(n_fin as f64) - h) / T::lit(2.0);
    Ok(T::lit(2.0) * delta + T::lit(2.0).powf(exponent))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LedgerStatus {
    Ok,
    /// The bound was negative and clamped to zero: nothing can be extracted.
    VacuousBound,
    /// The bound is positive but too small to pay for ε.
    NoOutput,
}

/// Output-length plan for one run: final bits at length `n_fin` are
/// `(ε + δ)`-secure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyLedger {
    pub cond: ConditionD,
    pub epsilon: f64,
    pub h_bound: u64,
    pub n_fin: u64,
    pub status: LedgerStatus,
}

impl EntropyLedger {
    pub fn plan(cond: ConditionD, epsilon: f64) -> Result<Self, EntropyError> {
        let h_bound = min_entropy_bound(&cond);
        let n_fin = output_length_from_bound(h_bound, epsilon)?;
        let raw = i128::from(cond.n_thr) - i128::from(cond.n_multi) - 2 * i128::from(cond.n_dark);
        let status = if raw < 0 {
            LedgerStatus::VacuousBound
        } else if n_fin == 0 {
            LedgerStatus::NoOutput
        } else {
            LedgerStatus::Ok
        };
        Ok(Self {
            cond,
            epsilon,
            h_bound,
            n_fin,
            status,
        })
    }

    pub fn security_level(&self) -> f64 {
        self.epsilon + self.cond.delta
    }

    /// Recompute from `cond` and `epsilon`; `Ok(false)` when stored fields
    /// disagree.
    pub fn is_consistent(&self) -> Result<bool, EntropyError> {
        Ok(Self::plan(self.cond, self.epsilon)? == *self)
    }
}

/// Joint classical distribution `P(w, e)`, row-major with `w` as the row.
/// Sub-normalized tables are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct CQDistribution<T> {
    probs: Vec<T>,
    w_len: usize,
    e_len: usize,
}

impl<T: Real> CQDistribution<T> {
    pub fn new(probs: Vec<T>, w_len: usize, e_len: usize) -> Result<Self, EntropyError> {
        if probs.len() != w_len * e_len || probs.is_empty() {
            return Err(EntropyError::ShapeMismatch {
                rows: w_len,
                cols: e_len,
                len: probs.len(),
            });
        }
        if let Some(index) = probs.iter().position(|&p| !(p >= T::zero() && p.is_finite())) {
            return Err(EntropyError::InvalidProbability { index });
        }
        let total = probs.iter().fold(T::zero(), |a, &p| a + p);
        if total > T::one() + T::identity_tol() {
            return Err(EntropyError::OverNormalized);
        }
        Ok(Self { probs, w_len, e_len })
    }

    pub fn get(&self, w: usize, e: usize) -> T {
        self.probs[w * self.e_len + e]
    }

    pub fn w_len(&self) -> usize {
        self.w_len
    }

    pub fn e_len(&self) -> usize {
        self.e_len
    }

    pub fn total(&self) -> T {
        self.probs.iter().fold(T::zero(), |a, &p| a + p)
    }

    /// Optimal probability of guessing `w` from `e`: `Σ_e max_w P(w, e)`.
    pub fn guessing_probability(&self) -> T {
        (0..self.e_len)
            .map(|e| (0..self.w_len).map(|w| self.get(w, e)).fold(T::zero(), |a, b| a.max(b)))
            .fold(T::zero(), |a, b| a + b)
    }

    /// Scale to unit mass; `None` for an all-zero table.
    pub fn normalized(&self) -> Option<Self> {
        let total = self.total();
        (total > T::zero()).then(|| Self {
            probs: self.probs.iter().map(|&p| p / total).collect(),
            w_len: self.w_len,
            e_len: self.e_len,
        })
    }
}

/// `H_min(W|E) = -log2 Σ_e max_w P(w, e)` for classical side information.
pub fn classical_min_entropy<T: Real>(d: &CQDistribution<T>) -> Result<T, EntropyError> {
    let guess = d.guessing_probability();
    if guess <= T::zero() {
        return Err(EntropyError::ZeroDistribution);
    }
    Ok(-guess.log2())
}

/// Half the L1 distance between two distributions on the same outcomes.
pub fn statistical_distance<T: Real>(p: &[T], q: &[T]) -> Result<T, EntropyError> {
    if p.len() != q.len() {
        return Err(EntropyError::SupportMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    let sum = p.iter().zip(q).fold(T::zero(), |acc, (&a, &b)| acc + (a - b).abs());
    Ok(sum / T::lit(2.0))
}
