//! Toeplitz hashing over GF(2).
//!
//! For an input of `n_in` bits and output of `n_out` bits the seed holds
//! `n_in + n_out - 1` bits `s` and defines
//!
//! ```text
//! T[j][k] = s[j + (n_in - 1) - k]      (row j = output bit, column k = input bit)
//! r = T · z  over GF(2)
//! ```
//!
//! Input bit 0 is the first time bin, output bit 0 the first output bit.
//! The family is universal₂ and linear in `z`.

use rand::TryRngCore;
use rayon::prelude::*;
use thiserror::Error;

use crate::trace::{bins_from_timings, BinTrace, TimingVector, TraceError};

#[derive(Debug, Error, PartialEq)]
pub enum ExtractorError {
    #[error("output length {n_out} exceeds input length {n_in}")]
    OutputTooLong { n_in: usize, n_out: usize },
    #[error("input length must be at least one bit")]
    EmptyInput,
    #[error("seed holds {found} bits, expected {expected}")]
    SeedLength { expected: usize, found: usize },
    #[error("trace has {found} bins but the seed was drawn for {expected}")]
    InputLength { expected: usize, found: usize },
    #[error("entropy source failed: {0}")]
    EntropySource(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

fn words_for(bits: usize) -> usize {
    bits.div_ceil(64)
}

fn mask_tail(words: &mut [u64], bits: usize) {
    let tail = bits % 64;
    if tail != 0 {
        if let Some(last) = words.last_mut() {
            *last &= (1u64 << tail) - 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToeplitzSeed {
    words: Vec<u64>,
    n_in: usize,
    n_out: usize,
}

impl ToeplitzSeed {
    pub fn seed_len(n_in: usize, n_out: usize) -> usize {
        n_in + n_out - 1
    }

    fn check_shape(n_in: usize, n_out: usize) -> Result<(), ExtractorError> {
        if n_in == 0 {
            return Err(ExtractorError::EmptyInput);
        }
        if n_out > n_in {
            return Err(ExtractorError::OutputTooLong { n_in, n_out });
        }
        Ok(())
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I, n_in: usize, n_out: usize) -> Result<Self, ExtractorError> {
        Self::check_shape(n_in, n_out)?;
        let expected = Self::seed_len(n_in, n_out);
        let mut words = vec![0u64; words_for(expected)];
        let mut found = 0usize;
        for bit in bits {
            if found < expected && bit {
                words[found / 64] |= 1 << (found % 64);
            }
            found += 1;
        }
        if found != expected {
            return Err(ExtractorError::SeedLength { expected, found });
        }
        Ok(Self { words, n_in, n_out })
    }

    /// Packed little-endian words: bit `i` is word `i / 64`, position `i % 64`.
    /// Bits past the seed length are cleared.
    pub fn from_words(mut words: Vec<u64>, n_in: usize, n_out: usize) -> Result<Self, ExtractorError> {
        Self::check_shape(n_in, n_out)?;
        let expected = Self::seed_len(n_in, n_out);
        if words.len() != words_for(expected) {
            return Err(ExtractorError::SeedLength {
                expected,
                found: words.len() * 64,
            });
        }
        mask_tail(&mut words, expected);
        Ok(Self { words, n_in, n_out })
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn len(&self) -> usize {
        Self::seed_len(self.n_in, self.n_out)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn bit(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len()).map(|i| self.bit(i))
    }

    /// Matrix entry `T[row][col]`.
    pub fn entry(&self, row: usize, col: usize) -> bool {
        self.bit(row + self.n_in - 1 - col)
    }

    /// 64 seed bits starting at bit `start`; bits past the end read as zero.
    #[inline]
    fn window(&self, start: usize) -> u64 {
        let q = start / 64;
        let r = start % 64;
        let lo = self.words.get(q).copied().unwrap_or(0);
        if r == 0 {
            lo
        } else {
            let hi = self.words.get(q + 1).copied().unwrap_or(0);
            (lo >> r) | (hi << (64 - r))
        }
    }
}

/// Draw a uniform seed from `rng`. Failures of the source are returned, never
/// replaced by another source.
pub fn sample_seed<R: TryRngCore + ?Sized>(rng: &mut R, n_in: usize, n_out: usize) -> Result<ToeplitzSeed, ExtractorError> {
    ToeplitzSeed::check_shape(n_in, n_out)?;
    let len = ToeplitzSeed::seed_len(n_in, n_out);
    let mut words = Vec::with_capacity(words_for(len));
    for _ in 0..words_for(len) {
        words.push(
            rng.try_next_u64()
                .map_err(|e| ExtractorError::EntropySource(format!("{e:?}")))?,
        );
    }
    ToeplitzSeed::from_words(words, n_in, n_out)
}

/// Extracted output `r`, packed like [`BinTrace`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinalBits {
    words: Vec<u64>,
    len: usize,
}

impl FinalBits {
    pub fn from_words(mut words: Vec<u64>, len: usize) -> Self {
        words.resize(words_for(len), 0);
        mask_tail(&mut words, len);
        Self { words, len }
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut words = Vec::new();
        let mut len = 0;
        for bit in bits {
            if len % 64 == 0 {
                words.push(0);
            }
            if bit {
                words[len / 64] |= 1 << (len % 64);
            }
            len += 1;
        }
        Self { words, len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(|i| self.get(i))
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn xor(&self, other: &Self) -> Self {
        assert_eq!(self.len, other.len);
        Self {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a ^ b).collect(),
            len: self.len,
        }
    }

    /// Big-endian bit order within bytes; the last byte is zero padded.
    /// Returns the bytes and the number of padding bits.
    pub fn to_bytes(&self) -> (Vec<u8>, u8) {
        let mut bytes = vec![0u8; self.len.div_ceil(8)];
        for i in self.words.iter().enumerate().flat_map(|(w, &word)| {
            let mut rest = word;
            std::iter::from_fn(move || {
                (rest != 0).then(|| {
                    let b = rest.trailing_zeros() as usize;
                    rest &= rest - 1;
                    w * 64 + b
                })
            })
        }) {
            bytes[i / 8] |= 0x80 >> (i % 8);
        }
        let padding = ((8 - self.len % 8) % 8) as u8;
        (bytes, padding)
    }

    pub fn from_bytes(bytes: &[u8], len: usize) -> Self {
        Self::from_bits((0..len).map(|i| bytes[i / 8] & (0x80 >> (i % 8)) != 0))
    }
}

/// Output words handled per parallel task.
const CHUNK_WORDS: usize = 256;
/// Below this many word operations a single thread is faster.
const PARALLEL_THRESHOLD: usize = 1 << 22;

fn check_input(z: &BinTrace, seed: &ToeplitzSeed) -> Result<(), ExtractorError> {
    if z.len() != seed.n_in {
        return Err(ExtractorError::InputLength {
            expected: seed.n_in,
            found: z.len(),
        });
    }
    Ok(())
}

/// XOR into `out` (covering output bits `64·first_word ..`) the seed slice
/// for every shift in `shifts`.
fn accumulate(out: &mut [u64], first_word: usize, seed: &ToeplitzSeed, shifts: &[usize]) {
    for &m in shifts {
        let base = m + 64 * first_word;
        for (w, slot) in out.iter_mut().enumerate() {
            *slot ^= seed.window(base + 64 * w);
        }
    }
}

/// `r = T · z`.
///
/// Each set input bit `k` contributes the seed slice starting at
/// `n_in - 1 - k`, so the cost is (number of detections) × (output words).
/// Large jobs split the output words across rayon workers; every worker
/// sees the same shifts in the same order, so the result does not depend on
/// scheduling.
pub fn extract(z: &BinTrace, seed: &ToeplitzSeed) -> Result<FinalBits, ExtractorError> {
    check_input(z, seed)?;
    let n_out = seed.n_out;
    let shifts: Vec<usize> = z.ones().map(|k| seed.n_in - 1 - k).collect();
    let mut out = vec![0u64; words_for(n_out)];
    if out.len() * shifts.len() >= PARALLEL_THRESHOLD {
        out.par_chunks_mut(CHUNK_WORDS)
            .enumerate()
            .for_each(|(c, chunk)| accumulate(chunk, c * CHUNK_WORDS, seed, &shifts));
    } else {
        accumulate(&mut out, 0, seed, &shifts);
    }
    Ok(FinalBits::from_words(out, n_out))
}

/// Same as [`extract`] but always single threaded.
pub fn extract_sequential(z: &BinTrace, seed: &ToeplitzSeed) -> Result<FinalBits, ExtractorError> {
    check_input(z, seed)?;
    let shifts: Vec<usize> = z.ones().map(|k| seed.n_in - 1 - k).collect();
    let mut out = vec![0u64; words_for(seed.n_out)];
    accumulate(&mut out, 0, seed, &shifts);
    Ok(FinalBits::from_words(out, seed.n_out))
}

/// Row-by-row evaluation straight from the matrix definition. Slow; kept as
/// the reference for the fast path.
pub fn extract_naive(z: &BinTrace, seed: &ToeplitzSeed) -> Result<FinalBits, ExtractorError> {
    check_input(z, seed)?;
    Ok(FinalBits::from_bits((0..seed.n_out).map(|row| {
        (0..seed.n_in).fold(false, |acc, col| acc ^ (seed.entry(row, col) & z.get(col)))
    })))
}

/// Hash the detection timings through their bin representation.
pub fn extract_from_timings(timings: &TimingVector, bins: usize, seed: &ToeplitzSeed) -> Result<FinalBits, ExtractorError> {
    extract(&bins_from_timings(timings, bins)?, seed)
}
