//! Frequency and serial tests on extracted bits.
//!
//! These are advisory. Passing them says nothing about security, which
//! rests on the entropy accounting; failing them points at a bug or a
//! broken source.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;

/// Significance level below which a test is reported as failed.
pub const SANITY_ALPHA: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanityTest {
    pub name: String,
    pub bits: u64,
    pub statistic: f64,
    pub p_value: f64,
    pub passed: bool,
    pub advisory: bool,
}

impl SanityTest {
    fn new(name: &str, bits: usize, statistic: f64, p_value: f64) -> Self {
        Self {
            name: name.to_string(),
            bits: bits as u64,
            statistic,
            p_value,
            passed: p_value > SANITY_ALPHA,
            advisory: true,
        }
    }
}

/// Monobit test: `p = erfc(|S_n| / √(2n))` with `S_n = #1 − #0`.
pub fn monobit(bits: &[bool]) -> Option<SanityTest> {
    if bits.is_empty() {
        return None;
    }
    let n = bits.len();
    let ones = bits.iter().filter(|&&b| b).count() as f64;
    let s = 2.0 * ones - n as f64;
    let stat = s.abs() / (n as f64).sqrt();
    Some(SanityTest::new("monobit", n, stat, erfc(stat / std::f64::consts::SQRT_2)))
}

/// `ψ²_m` over overlapping, cyclically extended `m`-bit windows.
fn psi_squared(bits: &[bool], m: usize) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let n = bits.len();
    let mut counts = vec![0u64; 1 << m];
    for i in 0..n {
        let pattern = (0..m).fold(0usize, |acc, j| (acc << 1) | usize::from(bits[(i + j) % n]));
        counts[pattern] += 1;
    }
    let sum: f64 = counts.iter().map(|&c| (c as f64) * (c as f64)).sum();
    sum * (1u64 << m) as f64 / n as f64 - n as f64
}

/// Serial test with block length `m ≥ 2`; returns the two p-values from
/// the first and second differences of `ψ²`.
pub fn serial(bits: &[bool], m: usize) -> Option<(SanityTest, SanityTest)> {
    if m < 2 || bits.len() < m {
        return None;
    }
    let (p0, p1, p2) = (psi_squared(bits, m), psi_squared(bits, m - 1), psi_squared(bits, m - 2));
    let d1 = p0 - p1;
    let d2 = p0 - 2.0 * p1 + p2;
    let pv1 = gamma_ur((1u64 << (m - 2)) as f64, d1 / 2.0);
    let pv2 = if m >= 3 { gamma_ur((1u64 << (m - 3)) as f64, d2 / 2.0) } else { 1.0 };
    Some((
        SanityTest::new(&format!("serial-m{m}-first"), bits.len(), d1, pv1),
        SanityTest::new(&format!("serial-m{m}-second"), bits.len(), d2, pv2),
    ))
}

/// Monobit plus the serial test at `m = 3`.
pub fn run_all(bits: &[bool]) -> Vec<SanityTest> {
    let mut out = Vec::new();
    out.extend(monobit(bits));
    if let Some((a, b)) = serial(bits, 3) {
        out.push(a);
        out.push(b);
    }
    out
}
