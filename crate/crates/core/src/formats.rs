//! Binary interchange formats for detector records and extractor seeds.
//!
//! Event file, all integers big-endian:
//!
//! ```text
//! offset  size  field
//!      0     8  magic "PRNGEVT\0"
//!      8     2  format version (1)
//!     10     1  alphabet: 1 = one bit per bin, 2 = two bits per bin
//!     11     1  reserved, zero
//!     12     8  number of bins N
//!     20     8  bin width in seconds, IEEE 754 double
//!     28     …  payload, ceil(N·bits/8) bytes
//! ```
//!
//! The payload is a bit stream filled most significant bit first. In the
//! two-bit alphabet each bin is `(down, up)`, so `00` none, `01` up,
//! `10` down, `11` both. Unused bits of the last byte must be zero.
//!
//! Seed file:
//!
//! ```text
//!      0     8  magic "PRNGSEED"
//!      8     2  format version (1)
//!     10     2  reserved, zero
//!     12     8  n_in
//!     20     8  n_out
//!     28     8  seed length in bits, n_in + n_out − 1
//!     36     …  seed bits, most significant bit first, zero padded
//! ```

use thiserror::Error;

use crate::extractor::{ExtractorError, ToeplitzSeed};
use crate::trace::{BinTrace, DualSymbol, DualTrace, TraceError};

pub const EVENT_MAGIC: &[u8; 8] = b"PRNGEVT\0";
pub const SEED_MAGIC: &[u8; 8] = b"PRNGSEED";
pub const FORMAT_VERSION: u16 = 1;

const EVENT_HEADER: usize = 28;
const SEED_HEADER: usize = 36;

#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("not a {expected} file (bad magic)")]
    BadMagic { expected: &'static str },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("unknown alphabet id {0}")]
    UnknownAlphabet(u8),
    #[error("reserved header field is nonzero")]
    Reserved,
    #[error("file holds {found} bytes, expected {expected}")]
    Length { expected: u64, found: u64 },
    #[error("padding bits of the last byte are not zero")]
    NonZeroPadding,
    #[error("bin width must be finite and positive, got {0}")]
    BinWidth(f64),
    #[error("seed length {found} does not fit n_in = {n_in}, n_out = {n_out}")]
    SeedShape { n_in: u64, n_out: u64, found: u64 },
    #[error("expected a {expected} trace, found {found}")]
    WrongAlphabet { expected: &'static str, found: &'static str },
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Seed(#[from] ExtractorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Alphabet {
    Bin = 1,
    Dual = 2,
}

impl Alphabet {
    fn bits(self) -> u64 {
        self as u64
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Bin => "one-bit",
            Self::Dual => "two-bit",
        }
    }
}

/// Decoded contents of an event file.
#[derive(Debug, Clone, PartialEq)]
pub enum EventFile {
    Bin(BinTrace),
    Dual { trace: DualTrace, bin_width: f64 },
}

impl EventFile {
    pub fn alphabet(&self) -> Alphabet {
        match self {
            Self::Bin(_) => Alphabet::Bin,
            Self::Dual { .. } => Alphabet::Dual,
        }
    }

    pub fn into_bin_trace(self) -> Result<BinTrace, FormatError> {
        match self {
            Self::Bin(z) => Ok(z),
            Self::Dual { .. } => Err(FormatError::WrongAlphabet { expected: "one-bit", found: "two-bit" }),
        }
    }

    pub fn into_dual_trace(self) -> Result<(DualTrace, f64), FormatError> {
        match self {
            Self::Dual { trace, bin_width } => Ok((trace, bin_width)),
            Self::Bin(_) => Err(FormatError::WrongAlphabet { expected: "two-bit", found: "one-bit" }),
        }
    }
}

fn header(alphabet: Alphabet, n: usize, bin_width: f64) -> Vec<u8> {
    let mut out = Vec::with_capacity(EVENT_HEADER);
    out.extend_from_slice(EVENT_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_be_bytes());
    out.push(alphabet as u8);
    out.push(0);
    out.extend_from_slice(&(n as u64).to_be_bytes());
    out.extend_from_slice(&bin_width.to_be_bytes());
    out
}

/// Appends bits most significant first.
fn pack_msb<I: IntoIterator<Item = bool>>(out: &mut Vec<u8>, bits: I) {
    let mut byte = 0u8;
    let mut filled = 0;
    for bit in bits {
        byte |= u8::from(bit) << (7 - filled);
        filled += 1;
        if filled == 8 {
            out.push(byte);
            byte = 0;
            filled = 0;
        }
    }
    if filled > 0 {
        out.push(byte);
    }
}

fn unpack_msb(payload: &[u8], count: u64) -> Result<impl Iterator<Item = bool> + '_, FormatError> {
    let used = count % 8;
    if used != 0 {
        let last = payload[payload.len() - 1];
        if last & (0xffu8 >> used) != 0 {
            return Err(FormatError::NonZeroPadding);
        }
    }
    Ok((0..count as usize).map(move |i| payload[i / 8] & (0x80 >> (i % 8)) != 0))
}

pub fn encode_bin_trace(z: &BinTrace) -> Vec<u8> {
    let mut out = header(Alphabet::Bin, z.len(), z.bin_width());
    pack_msb(&mut out, z.iter());
    out
}

pub fn encode_dual_trace(w: &DualTrace, bin_width: f64) -> Vec<u8> {
    let mut out = header(Alphabet::Dual, w.len(), bin_width);
    pack_msb(
        &mut out,
        w.symbols().iter().flat_map(|s| [s.down_fired(), s.up_fired()]),
    );
    out
}

fn read_u64(bytes: &[u8], at: usize) -> u64 {
    u64::from_be_bytes(bytes[at..at + 8].try_into().expect("eight bytes"))
}

fn read_u16(bytes: &[u8], at: usize) -> u16 {
    u16::from_be_bytes(bytes[at..at + 2].try_into().expect("two bytes"))
}

pub fn decode_events(bytes: &[u8]) -> Result<EventFile, FormatError> {
    if bytes.len() < EVENT_HEADER {
        return Err(FormatError::Length { expected: EVENT_HEADER as u64, found: bytes.len() as u64 });
    }
    if &bytes[..8] != EVENT_MAGIC {
        return Err(FormatError::BadMagic { expected: "event" });
    }
    let version = read_u16(bytes, 8);
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let alphabet = match bytes[10] {
        1 => Alphabet::Bin,
        2 => Alphabet::Dual,
        other => return Err(FormatError::UnknownAlphabet(other)),
    };
    if bytes[11] != 0 {
        return Err(FormatError::Reserved);
    }
    let n = read_u64(bytes, 12);
    let bin_width = f64::from_be_bytes(bytes[20..28].try_into().expect("eight bytes"));
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(FormatError::BinWidth(bin_width));
    }
    let stream_bits = n
        .checked_mul(alphabet.bits())
        .ok_or(FormatError::Length { expected: u64::MAX, found: bytes.len() as u64 })?;
    let expected = EVENT_HEADER as u64 + stream_bits.div_ceil(8);
    if bytes.len() as u64 != expected {
        return Err(FormatError::Length { expected, found: bytes.len() as u64 });
    }
    let payload = &bytes[EVENT_HEADER..];
    let bits = unpack_msb(payload, stream_bits)?;
    match alphabet {
        Alphabet::Bin => Ok(EventFile::Bin(BinTrace::from_bits(bits)?.with_bin_width(bin_width))),
        Alphabet::Dual => {
            let bits: Vec<bool> = bits.collect();
            let symbols = bits
                .chunks_exact(2)
                .map(|pair| DualSymbol::from_detectors(pair[1], pair[0]))
                .collect();
            Ok(EventFile::Dual { trace: DualTrace::new(symbols)?, bin_width })
        }
    }
}

pub fn encode_seed(seed: &ToeplitzSeed) -> Vec<u8> {
    let mut out = Vec::with_capacity(SEED_HEADER + seed.len().div_ceil(8));
    out.extend_from_slice(SEED_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&(seed.n_in() as u64).to_be_bytes());
    out.extend_from_slice(&(seed.n_out() as u64).to_be_bytes());
    out.extend_from_slice(&(seed.len() as u64).to_be_bytes());
    pack_msb(&mut out, seed.bits());
    out
}

pub fn decode_seed(bytes: &[u8]) -> Result<ToeplitzSeed, FormatError> {
    if bytes.len() < SEED_HEADER {
        return Err(FormatError::Length { expected: SEED_HEADER as u64, found: bytes.len() as u64 });
    }
    if &bytes[..8] != SEED_MAGIC {
        return Err(FormatError::BadMagic { expected: "seed" });
    }
    let version = read_u16(bytes, 8);
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    if read_u16(bytes, 10) != 0 {
        return Err(FormatError::Reserved);
    }
    let (n_in, n_out, bit_len) = (read_u64(bytes, 12), read_u64(bytes, 20), read_u64(bytes, 28));
    let shape_ok = n_in >= 1
        && n_in <= usize::MAX as u64
        && n_out <= usize::MAX as u64
        && bit_len == ToeplitzSeed::seed_len(n_in as usize, n_out as usize) as u64;
    if !shape_ok {
        return Err(FormatError::SeedShape { n_in, n_out, found: bit_len });
    }
    let expected = SEED_HEADER as u64 + bit_len.div_ceil(8);
    if bytes.len() as u64 != expected {
        return Err(FormatError::Length { expected, found: bytes.len() as u64 });
    }
    let bits = unpack_msb(&bytes[SEED_HEADER..], bit_len)?;
    Ok(ToeplitzSeed::from_bits(bits, n_in as usize, n_out as usize)?)
}
