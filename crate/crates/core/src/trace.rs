//! Measurement records and the exact correspondences between them.
//!
//! A run of `N` time bins can be written down in three ways:
//!
//! * [`BinTrace`]: one bit per bin, `1` where the detector fired.
//! * [`TimingVector`]: the increasing list of (1-based) bins that fired, or
//!   the sentinel `(0)` when nothing fired.
//! * [`DualTrace`]: the outcome of the virtual detector pair (`D↑`, `D↓`),
//!   one of four symbols per bin. [`g_map`] recovers what the real detector
//!   (`D = D↓`) saw and [`h_map`] keeps only how many of the pair fired.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("a trace must contain at least one time bin")]
    Empty,
    #[error("invalid symbol {found:?} at position {position}")]
    InvalidSymbol { position: usize, found: char },
    #[error("timings must be strictly increasing and positive (violated at index {position})")]
    NotIncreasing { position: usize },
    #[error("timing {timing} exceeds the number of bins {bins}")]
    TimingOutOfRange { timing: u64, bins: u64 },
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("packed words carry bits beyond the declared length")]
    TrailingBits,
}

fn words_for(bits: usize) -> usize {
    bits.div_ceil(64)
}

/// Per-bin detection bits `z = (z_1, …, z_N)`, bit-packed.
///
/// Bit `i` (0-based, i.e. bin `i + 1`) lives in word `i / 64` at position
/// `i % 64`. Bits past `len` are always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BinTrace {
    words: Vec<u64>,
    len: usize,
    bin_width: f64,
}

impl BinTrace {
    pub const DEFAULT_BIN_WIDTH: f64 = 1.0;

    pub fn zeros(len: usize) -> Result<Self, TraceError> {
        if len == 0 {
            return Err(TraceError::Empty);
        }
        Ok(Self {
            words: vec![0; words_for(len)],
            len,
            bin_width: Self::DEFAULT_BIN_WIDTH,
        })
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Result<Self, TraceError> {
        let mut words = Vec::new();
        let mut len = 0usize;
        for bit in bits {
            if len.is_multiple_of(64) {
                words.push(0);
            }
            if bit {
                words[len / 64] |= 1 << (len % 64);
            }
            len += 1;
        }
        if len == 0 {
            return Err(TraceError::Empty);
        }
        Ok(Self {
            words,
            len,
            bin_width: Self::DEFAULT_BIN_WIDTH,
        })
    }

    pub fn from_words(words: Vec<u64>, len: usize) -> Result<Self, TraceError> {
        if len == 0 {
            return Err(TraceError::Empty);
        }
        if words.len() != words_for(len) {
            return Err(TraceError::LengthMismatch {
                expected: words_for(len),
                found: words.len(),
            });
        }
        let tail = len % 64;
        if tail != 0 && words[words.len() - 1] >> tail != 0 {
            return Err(TraceError::TrailingBits);
        }
        Ok(Self {
            words,
            len,
            bin_width: Self::DEFAULT_BIN_WIDTH,
        })
    }

    pub fn with_bin_width(mut self, bin_width: f64) -> Self {
        self.bin_width = bin_width;
        self
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn len(&self) -> usize {
        self.len
    }

    /// Always false; kept for the usual `len`/`is_empty` pairing.
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Bit of bin `index + 1`. Panics when out of range.
    pub fn get(&self, index: usize) -> bool {
        assert!(index < self.len, "bin index {index} out of range");
        self.words[index / 64] >> (index % 64) & 1 == 1
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    /// 0-based positions of the set bits, in increasing order.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(w, &word)| {
            let mut rest = word;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let bit = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(w * 64 + bit)
            })
        })
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn xor(&self, other: &Self) -> Result<Self, TraceError> {
        if self.len != other.len {
            return Err(TraceError::LengthMismatch {
                expected: self.len,
                found: other.len,
            });
        }
        Ok(Self {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a ^ b).collect(),
            len: self.len,
            bin_width: self.bin_width,
        })
    }
}

impl FromStr for BinTrace {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bits = s
            .chars()
            .enumerate()
            .map(|(position, c)| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                found => Err(TraceError::InvalidSymbol { position, found }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_bits(bits)
    }
}

impl fmt::Display for BinTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for bit in self.iter() {
            f.write_str(if bit { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Detection timings `(i_1, …, i_{n_det})`, 1-based, or the sentinel `(0)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TimingVector {
    timings: Vec<u64>,
}

impl TimingVector {
    pub fn new(timings: Vec<u64>) -> Result<Self, TraceError> {
        if timings.is_empty() {
            return Err(TraceError::Empty);
        }
        if timings != [0] {
            let mut previous = 0u64;
            for (position, &t) in timings.iter().enumerate() {
                if t <= previous {
                    return Err(TraceError::NotIncreasing { position });
                }
                previous = t;
            }
        }
        Ok(Self { timings })
    }

    /// The record for a run without any detection.
    pub fn no_detection() -> Self {
        Self { timings: vec![0] }
    }

    pub fn is_no_detection(&self) -> bool {
        self.timings == [0]
    }

    /// Length of the record; `1` for the sentinel.
    pub fn n_det(&self) -> usize {
        self.timings.len()
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.timings
    }
}

impl fmt::Display for TimingVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (k, t) in self.timings.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{t}")?;
        }
        f.write_str(")")
    }
}

pub fn timings_from_bins(z: &BinTrace) -> TimingVector {
    let timings: Vec<u64> = z.ones().map(|i| i as u64 + 1).collect();
    if timings.is_empty() {
        TimingVector::no_detection()
    } else {
        TimingVector { timings }
    }
}

pub fn bins_from_timings(timings: &TimingVector, bins: usize) -> Result<BinTrace, TraceError> {
    let mut z = BinTrace::zeros(bins)?;
    if timings.is_no_detection() {
        return Ok(z);
    }
    for &t in timings.as_slice() {
        if t > bins as u64 {
            return Err(TraceError::TimingOutOfRange {
                timing: t,
                bins: bins as u64,
            });
        }
        let i = (t - 1) as usize;
        z.words[i / 64] |= 1 << (i % 64);
    }
    Ok(z)
}

/// Outcome of the detector pair in one bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DualSymbol {
    Neither,
    Up,
    Down,
    Both,
}

impl DualSymbol {
    pub const ALL: [DualSymbol; 4] = [Self::Neither, Self::Up, Self::Down, Self::Both];

    pub fn from_detectors(up_fired: bool, down_fired: bool) -> Self {
        match (up_fired, down_fired) {
            (false, false) => Self::Neither,
            (true, false) => Self::Up,
            (false, true) => Self::Down,
            (true, true) => Self::Both,
        }
    }

    /// Two-bit code: bit 1 is `D↓`, bit 0 is `D↑`.
    pub fn code(self) -> u8 {
        match self {
            Self::Neither => 0b00,
            Self::Up => 0b01,
            Self::Down => 0b10,
            Self::Both => 0b11,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0b00 => Some(Self::Neither),
            0b01 => Some(Self::Up),
            0b10 => Some(Self::Down),
            0b11 => Some(Self::Both),
            _ => None,
        }
    }

    pub fn down_fired(self) -> bool {
        matches!(self, Self::Down | Self::Both)
    }

    pub fn up_fired(self) -> bool {
        matches!(self, Self::Up | Self::Both)
    }

    /// Arrow flip `↑ ↔ ↓`; `none` and `both` are fixed.
    pub fn flipped(self) -> Self {
        match self {
            Self::Up => Self::Down,
            Self::Down => Self::Up,
            other => other,
        }
    }

    pub fn g(self) -> bool {
        self.down_fired()
    }

    pub fn h(self) -> ReducedSymbol {
        match self {
            Self::Neither => ReducedSymbol::Neither,
            Self::Up | Self::Down => ReducedSymbol::Single,
            Self::Both => ReducedSymbol::Both,
        }
    }

    fn letter(self) -> char {
        match self {
            Self::Neither => 'N',
            Self::Up => 'U',
            Self::Down => 'D',
            Self::Both => 'B',
        }
    }
}

/// Number of detectors of the pair that fired in one bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReducedSymbol {
    Neither,
    Single,
    Both,
}

impl ReducedSymbol {
    pub const ALL: [ReducedSymbol; 3] = [Self::Neither, Self::Single, Self::Both];

    fn letter(self) -> char {
        match self {
            Self::Neither => 'N',
            Self::Single => 'S',
            Self::Both => 'B',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DualTrace {
    symbols: Vec<DualSymbol>,
}

impl DualTrace {
    pub fn new(symbols: Vec<DualSymbol>) -> Result<Self, TraceError> {
        if symbols.is_empty() {
            return Err(TraceError::Empty);
        }
        Ok(Self { symbols })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[DualSymbol] {
        &self.symbols
    }

    pub fn count(&self, symbol: DualSymbol) -> usize {
        self.symbols.iter().filter(|&&s| s == symbol).count()
    }

    /// Global `↑ ↔ ↓` swap.
    pub fn flipped(&self) -> Self {
        Self {
            symbols: self.symbols.iter().map(|s| s.flipped()).collect(),
        }
    }
}

impl FromStr for DualTrace {
    type Err = TraceError;

    /// Letters `U`, `D`, `N`, `B` (case-insensitive), one per bin.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let symbols = s
            .chars()
            .enumerate()
            .map(|(position, c)| match c.to_ascii_uppercase() {
                'U' => Ok(DualSymbol::Up),
                'D' => Ok(DualSymbol::Down),
                'N' => Ok(DualSymbol::Neither),
                'B' => Ok(DualSymbol::Both),
                _ => Err(TraceError::InvalidSymbol { position, found: c }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(symbols)
    }
}

impl fmt::Display for DualTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.symbols.iter().try_for_each(|s| write!(f, "{}", s.letter()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ReducedTrace {
    symbols: Vec<ReducedSymbol>,
}

impl ReducedTrace {
    pub fn new(symbols: Vec<ReducedSymbol>) -> Result<Self, TraceError> {
        if symbols.is_empty() {
            return Err(TraceError::Empty);
        }
        Ok(Self { symbols })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[ReducedSymbol] {
        &self.symbols
    }

    /// Every `w` with `h(w) = self`, in lexicographic order of the arrow
    /// choices (`↑` before `↓`, first single bin most significant).
    pub fn preimages(&self) -> impl Iterator<Item = DualTrace> + '_ {
        let singles: Vec<usize> = self
            .symbols
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == ReducedSymbol::Single)
            .map(|(i, _)| i)
            .collect();
        let s = singles.len();
        (0..1u64 << s).map(move |choice| {
            let mut symbols: Vec<DualSymbol> = self
                .symbols
                .iter()
                .map(|r| match r {
                    ReducedSymbol::Neither => DualSymbol::Neither,
                    ReducedSymbol::Single => DualSymbol::Up,
                    ReducedSymbol::Both => DualSymbol::Both,
                })
                .collect();
            for (k, &pos) in singles.iter().enumerate() {
                if choice >> (s - 1 - k) & 1 == 1 {
                    symbols[pos] = DualSymbol::Down;
                }
            }
            DualTrace { symbols }
        })
    }
}

impl FromStr for ReducedTrace {
    type Err = TraceError;

    /// Letters `N`, `S`, `B` (case-insensitive), one per bin.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let symbols = s
            .chars()
            .enumerate()
            .map(|(position, c)| match c.to_ascii_uppercase() {
                'N' => Ok(ReducedSymbol::Neither),
                'S' => Ok(ReducedSymbol::Single),
                'B' => Ok(ReducedSymbol::Both),
                _ => Err(TraceError::InvalidSymbol { position, found: c }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(symbols)
    }
}

impl fmt::Display for ReducedTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.symbols.iter().try_for_each(|s| write!(f, "{}", s.letter()))
    }
}

/// What the real detector `D = D↓` records: `1` exactly on `↓` and `both`.
pub fn g_map(w: &DualTrace) -> BinTrace {
    BinTrace::from_bits(w.symbols.iter().map(|s| s.g())).expect("dual traces are non-empty")
}

pub fn h_map(w: &DualTrace) -> ReducedTrace {
    ReducedTrace {
        symbols: w.symbols.iter().map(|s| s.h()).collect(),
    }
}

/// Number of `single` bins, `s(w̃)`.
pub fn single_count(reduced: &ReducedTrace) -> usize {
    reduced
        .symbols
        .iter()
        .filter(|&&s| s == ReducedSymbol::Single)
        .count()
}
