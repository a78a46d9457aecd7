//! Bit-addressable codeword storage with exact probe accounting.
//!
//! Every read or write of a codeword bit goes through [`BitRead`] /
//! [`BitWrite`], and [`ProbeMeteredBits`] counts each accessed bit. Bit 0 is
//! the most significant bit of the first byte; multi-bit words are read and
//! written most significant bit first.
//!
//! Counters are atomics so that several readers may share one buffer through
//! `&ProbeMeteredBits` while still producing exact totals.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use num_bigint::BigUint;

use crate::error::{Error, Result};

/// Read and write totals, in bits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ProbeCounts {
    pub reads: u64,
    pub writes: u64,
}

impl ProbeCounts {
    pub fn total(&self) -> u64 {
        self.reads + self.writes
    }

    /// Counts accumulated since `earlier`.
    pub fn since(&self, earlier: ProbeCounts) -> ProbeCounts {
        ProbeCounts {
            reads: self.reads - earlier.reads,
            writes: self.writes - earlier.writes,
        }
    }
}

impl std::ops::Add for ProbeCounts {
    type Output = ProbeCounts;
    fn add(self, rhs: ProbeCounts) -> ProbeCounts {
        ProbeCounts {
            reads: self.reads + rhs.reads,
            writes: self.writes + rhs.writes,
        }
    }
}

impl std::ops::AddAssign for ProbeCounts {
    fn add_assign(&mut self, rhs: ProbeCounts) {
        *self = *self + rhs;
    }
}

/// Read access to a bit-addressable codeword.
pub trait BitRead {
    fn len_bits(&self) -> usize;

    /// Reads `width <= 64` bits starting at `offset`, MSB first.
    fn read_bits(&self, offset: usize, width: usize) -> Result<u64>;

    /// Current probe totals of the underlying buffer.
    fn counters(&self) -> ProbeCounts;

    fn read_bit(&self, offset: usize) -> Result<bool> {
        Ok(self.read_bits(offset, 1)? == 1)
    }

    /// Reads an arbitrarily wide unsigned integer, MSB first.
    fn read_biguint(&self, offset: usize, width: usize) -> Result<BigUint> {
        check_window(offset, width, self.len_bits())?;
        let mut digits = Vec::with_capacity(width.div_ceil(64));
        let head = width % 64;
        let mut pos = offset;
        if head != 0 {
            digits.push(self.read_bits(pos, head)?);
            pos += head;
        }
        while pos < offset + width {
            digits.push(self.read_bits(pos, 64)?);
            pos += 64;
        }
        // BigUint wants little-endian 32-bit digits.
        let mut le = Vec::with_capacity(digits.len() * 2);
        for d in digits.iter().rev() {
            le.push(*d as u32);
            le.push((*d >> 32) as u32);
        }
        Ok(BigUint::new(le))
    }

    /// Reads `count` fixed-width symbols laid out back to back.
    fn read_symbols(&self, offset: usize, count: usize, width: usize) -> Result<Vec<u8>> {
        check_window(offset, count * width, self.len_bits())?;
        (0..count)
            .map(|t| self.read_bits(offset + t * width, width).map(|v| v as u8))
            .collect()
    }

    /// True when every bit of the window is zero. Reads the whole window.
    fn is_zero(&self, offset: usize, width: usize) -> Result<bool> {
        let mut zero = true;
        let mut pos = offset;
        let end = offset + width;
        check_window(offset, width, self.len_bits())?;
        while pos < end {
            let w = (end - pos).min(64);
            zero &= self.read_bits(pos, w)? == 0;
            pos += w;
        }
        Ok(zero)
    }
}

/// Write access to a bit-addressable codeword.
pub trait BitWrite: BitRead {
    /// Replaces `width <= 64` bits at `offset` with the low bits of `value`.
    fn write_bits(&mut self, offset: usize, width: usize, value: u64) -> Result<()>;

    fn write_bit(&mut self, offset: usize, bit: bool) -> Result<()> {
        self.write_bits(offset, 1, bit as u64)
    }

    /// Writes `value` zero-extended to `width` bits. Fails if it does not fit.
    fn write_biguint(&mut self, offset: usize, width: usize, value: &BigUint) -> Result<()> {
        check_window(offset, width, self.len_bits())?;
        if value.bits() as usize > width {
            return Err(Error::OutOfRange(format!(
                "value of {} bits does not fit in {width}-bit field",
                value.bits()
            )));
        }
        let digits = value.to_u64_digits();
        let digit = |i: usize| digits.get(i).copied().unwrap_or(0);
        let mut remaining = width;
        let mut pos = offset;
        while remaining > 0 {
            let w = if remaining.is_multiple_of(64) { 64 } else { remaining % 64 };
            let idx = (remaining - 1) / 64;
            self.write_bits(pos, w, digit(idx))?;
            pos += w;
            remaining -= w;
        }
        Ok(())
    }

    fn write_symbols(&mut self, offset: usize, width: usize, symbols: &[u8]) -> Result<()> {
        check_window(offset, symbols.len() * width, self.len_bits())?;
        for (t, &s) in symbols.iter().enumerate() {
            self.write_bits(offset + t * width, width, s as u64)?;
        }
        Ok(())
    }

    fn write_zeros(&mut self, offset: usize, width: usize) -> Result<()> {
        check_window(offset, width, self.len_bits())?;
        let mut pos = offset;
        let end = offset + width;
        while pos < end {
            let w = (end - pos).min(64);
            self.write_bits(pos, w, 0)?;
            pos += w;
        }
        Ok(())
    }
}

fn check_window(offset: usize, width: usize, len: usize) -> Result<()> {
    match offset.checked_add(width) {
        Some(end) if end <= len => Ok(()),
        _ => Err(Error::OutOfRange(format!(
            "bit window [{offset}, {offset}+{width}) exceeds buffer of {len} bits"
        ))),
    }
}

/// Codeword buffer that counts every bit read and written.
#[derive(Debug)]
pub struct ProbeMeteredBits {
    bytes: Vec<u8>,
    len_bits: usize,
    reads: AtomicU64,
    writes: AtomicU64,
    touched: Option<Mutex<Vec<u64>>>,
}

impl Clone for ProbeMeteredBits {
    /// Copies payload and counters; distinct-bit tracking state is copied too.
    fn clone(&self) -> Self {
        ProbeMeteredBits {
            bytes: self.bytes.clone(),
            len_bits: self.len_bits,
            reads: AtomicU64::new(self.reads.load(Ordering::Relaxed)),
            writes: AtomicU64::new(self.writes.load(Ordering::Relaxed)),
            touched: self
                .touched
                .as_ref()
                .map(|t| Mutex::new(t.lock().expect("poisoned").clone())),
        }
    }
}

impl PartialEq for ProbeMeteredBits {
    /// Payload equality; counters are not compared.
    fn eq(&self, other: &Self) -> bool {
        self.len_bits == other.len_bits && self.bytes == other.bytes
    }
}

impl Eq for ProbeMeteredBits {}

impl ProbeMeteredBits {
    /// All-zero buffer of `len_bits` bits.
    pub fn zeroed(len_bits: usize) -> Self {
        ProbeMeteredBits {
            bytes: vec![0; len_bits.div_ceil(8)],
            len_bits,
            reads: AtomicU64::new(0),
            writes: AtomicU64::new(0),
            touched: None,
        }
    }

    /// Wraps serialized bytes. Bits past `len_bits` in the last byte are
    /// cleared so that payload equality is well defined.
    pub fn from_bytes(mut bytes: Vec<u8>, len_bits: usize) -> Result<Self> {
        if bytes.len() != len_bits.div_ceil(8) {
            return Err(Error::OutOfRange(format!(
                "{} bytes cannot hold exactly {len_bits} bits",
                bytes.len()
            )));
        }
        let tail = len_bits % 8;
        if tail != 0 {
            let last = bytes.len() - 1;
            bytes[last] &= 0xffu8 << (8 - tail);
        }
        Ok(ProbeMeteredBits {
            bytes,
            len_bits,
            reads: AtomicU64::new(0),
            writes: AtomicU64::new(0),
            touched: None,
        })
    }

    /// Enables distinct-bit tracking (debug aid; raw counters are unaffected).
    pub fn with_distinct_tracking(mut self) -> Self {
        self.touched = Some(Mutex::new(vec![0; self.len_bits.div_ceil(64)]));
        self
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn checkpoint_counters(&self) -> ProbeCounts {
        ProbeCounts {
            reads: self.reads.load(Ordering::Relaxed),
            writes: self.writes.load(Ordering::Relaxed),
        }
    }

    pub fn reset_counters(&self) {
        self.reads.store(0, Ordering::Relaxed);
        self.writes.store(0, Ordering::Relaxed);
        if let Some(t) = &self.touched {
            t.lock().expect("poisoned").iter_mut().for_each(|w| *w = 0);
        }
    }

    /// Number of distinct bits accessed since tracking was enabled or last reset.
    pub fn distinct_touched(&self) -> Option<u64> {
        self.touched.as_ref().map(|t| {
            t.lock()
                .expect("poisoned")
                .iter()
                .map(|w| w.count_ones() as u64)
                .sum()
        })
    }

    fn mark(&self, offset: usize, width: usize) {
        if let Some(t) = &self.touched {
            let mut t = t.lock().expect("poisoned");
            for b in offset..offset + width {
                t[b / 64] |= 1 << (b % 64);
            }
        }
    }

    fn get_raw(&self, offset: usize, width: usize) -> u64 {
        let mut value = 0u64;
        let mut pos = offset;
        let mut left = width;
        while left > 0 {
            let byte = self.bytes[pos / 8];
            let in_byte = pos % 8;
            let take = (8 - in_byte).min(left);
            let chunk = (byte >> (8 - in_byte - take)) & ((1u16 << take) - 1) as u8;
            value = (value << take) | chunk as u64;
            pos += take;
            left -= take;
        }
        value
    }

    fn set_raw(&mut self, offset: usize, width: usize, value: u64) {
        let mut pos = offset;
        let mut left = width;
        while left > 0 {
            let in_byte = pos % 8;
            let take = (8 - in_byte).min(left);
            let chunk = ((value >> (left - take)) & ((1u64 << take) - 1)) as u8;
            let shift = 8 - in_byte - take;
            let mask = (((1u16 << take) - 1) as u8) << shift;
            let byte = &mut self.bytes[pos / 8];
            *byte = (*byte & !mask) | (chunk << shift);
            pos += take;
            left -= take;
        }
    }
}

impl BitRead for ProbeMeteredBits {
    fn len_bits(&self) -> usize {
        self.len_bits
    }

    fn read_bits(&self, offset: usize, width: usize) -> Result<u64> {
        if width > 64 {
            return Err(Error::OutOfRange(format!("read width {width} exceeds 64")));
        }
        check_window(offset, width, self.len_bits)?;
        self.reads.fetch_add(width as u64, Ordering::Relaxed);
        self.mark(offset, width);
        Ok(self.get_raw(offset, width))
    }

    fn counters(&self) -> ProbeCounts {
        self.checkpoint_counters()
    }
}

impl BitWrite for ProbeMeteredBits {
    fn write_bits(&mut self, offset: usize, width: usize, value: u64) -> Result<()> {
        if width > 64 {
            return Err(Error::OutOfRange(format!("write width {width} exceeds 64")));
        }
        check_window(offset, width, self.len_bits)?;
        self.writes.fetch_add(width as u64, Ordering::Relaxed);
        self.mark(offset, width);
        self.set_raw(offset, width, value);
        Ok(())
    }
}

impl<T: BitRead + ?Sized> BitRead for &T {
    fn len_bits(&self) -> usize {
        (**self).len_bits()
    }
    fn read_bits(&self, offset: usize, width: usize) -> Result<u64> {
        (**self).read_bits(offset, width)
    }
    fn counters(&self) -> ProbeCounts {
        (**self).counters()
    }
}

impl<T: BitRead + ?Sized> BitRead for &mut T {
    fn len_bits(&self) -> usize {
        (**self).len_bits()
    }
    fn read_bits(&self, offset: usize, width: usize) -> Result<u64> {
        (**self).read_bits(offset, width)
    }
    fn counters(&self) -> ProbeCounts {
        (**self).counters()
    }
}

impl<T: BitWrite + ?Sized> BitWrite for &mut T {
    fn write_bits(&mut self, offset: usize, width: usize, value: u64) -> Result<()> {
        (**self).write_bits(offset, width, value)
    }
}

/// A sub-range of another bit store, addressed from zero.
#[derive(Debug)]
pub struct BitWindow<S> {
    inner: S,
    base: usize,
    len: usize,
}

impl<S: BitRead> BitWindow<S> {
    pub fn new(inner: S, base: usize, len: usize) -> Result<Self> {
        check_window(base, len, inner.len_bits())?;
        Ok(BitWindow { inner, base, len })
    }
}

impl<S: BitRead> BitRead for BitWindow<S> {
    fn len_bits(&self) -> usize {
        self.len
    }
    fn read_bits(&self, offset: usize, width: usize) -> Result<u64> {
        check_window(offset, width, self.len)?;
        self.inner.read_bits(self.base + offset, width)
    }
    fn counters(&self) -> ProbeCounts {
        self.inner.counters()
    }
}

impl<S: BitWrite> BitWrite for BitWindow<S> {
    fn write_bits(&mut self, offset: usize, width: usize, value: u64) -> Result<()> {
        check_window(offset, width, self.len)?;
        self.inner.write_bits(self.base + offset, width, value)
    }
}

/// Unmetered append-only bit builder used while assembling codewords.
#[derive(Clone, Debug, Default)]
pub struct BitSink {
    bytes: Vec<u8>,
    len: usize,
}

impl BitSink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push_bits(&mut self, width: usize, value: u64) {
        debug_assert!(width <= 64);
        for t in (0..width).rev() {
            self.push_bit((value >> t) & 1 == 1);
        }
    }

    pub fn push_bit(&mut self, bit: bool) {
        if self.len.is_multiple_of(8) {
            self.bytes.push(0);
        }
        if bit {
            let last = self.bytes.len() - 1;
            self.bytes[last] |= 0x80 >> (self.len % 8);
        }
        self.len += 1;
    }

    pub fn push_biguint(&mut self, width: usize, value: &BigUint) {
        for t in (0..width as u64).rev() {
            self.push_bit(value.bit(t));
        }
    }

    pub fn push_symbols(&mut self, width: usize, symbols: &[u8]) {
        for &s in symbols {
            self.push_bits(width, s as u64);
        }
    }

    pub fn push_zeros(&mut self, count: usize) {
        for _ in 0..count {
            self.push_bit(false);
        }
    }

    pub fn into_metered(self) -> ProbeMeteredBits {
        ProbeMeteredBits::from_bytes(self.bytes, self.len).expect("sized by construction")
    }

    pub fn into_parts(self) -> (Vec<u8>, usize) {
        (self.bytes, self.len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn buf(byte: u8) -> ProbeMeteredBits {
        ProbeMeteredBits::from_bytes(vec![byte], 8).unwrap()
    }

    #[test]
    fn read_slices() {
        let b = buf(0b0000_1010);
        assert_eq!(b.read_bits(0, 4).unwrap(), 0b0000);
        assert_eq!(b.checkpoint_counters(), ProbeCounts { reads: 4, writes: 0 });
        assert_eq!(b.read_bits(4, 4).unwrap(), 0b1010);
        assert_eq!(b.checkpoint_counters().reads, 8);
    }

    #[test]
    fn read_past_end_is_out_of_range() {
        let b = buf(0b0000_1010);
        assert!(matches!(b.read_bits(7, 2), Err(Error::OutOfRange(_))));
        assert_eq!(b.checkpoint_counters().reads, 0);
    }

    #[test]
    fn write_then_read() {
        let mut b = buf(0b0000_1010);
        b.write_bits(0, 4, 0b1111).unwrap();
        assert_eq!(b.as_bytes(), &[0b1111_1010]);
        assert_eq!(b.read_bits(0, 4).unwrap(), 0b1111);
        assert!(b.write_bits(6, 3, 0).is_err());
    }

    #[test]
    fn counters_track_mixed_ops() {
        let mut b = buf(0);
        assert_eq!(b.checkpoint_counters(), ProbeCounts::default());
        b.read_bits(0, 4).unwrap();
        b.write_bits(0, 2, 0b11).unwrap();
        assert_eq!(b.checkpoint_counters(), ProbeCounts { reads: 4, writes: 2 });
        b.reset_counters();
        assert_eq!(b.checkpoint_counters(), ProbeCounts::default());
    }

    #[test]
    fn distinct_tracking_ignores_repeats() {
        let b = ProbeMeteredBits::zeroed(16).with_distinct_tracking();
        b.read_bits(0, 8).unwrap();
        b.read_bits(4, 8).unwrap();
        assert_eq!(b.checkpoint_counters().reads, 16);
        assert_eq!(b.distinct_touched(), Some(12));
    }

    #[test]
    fn window_offsets_share_counters() {
        let mut b = ProbeMeteredBits::zeroed(20);
        {
            let mut w = BitWindow::new(&mut b, 5, 10).unwrap();
            w.write_bits(0, 3, 0b101).unwrap();
            assert!(w.read_bits(8, 3).is_err());
        }
        assert_eq!(b.read_bits(5, 3).unwrap(), 0b101);
        assert_eq!(b.checkpoint_counters(), ProbeCounts { reads: 3, writes: 3 });
    }

    #[test]
    fn biguint_fields_round_trip() {
        let mut b = ProbeMeteredBits::zeroed(300);
        let v = (BigUint::from(1u8) << 200u32) + BigUint::from(12345u32);
        b.write_biguint(17, 201, &v).unwrap();
        assert_eq!(b.read_biguint(17, 201).unwrap(), v);
        assert_eq!(b.checkpoint_counters(), ProbeCounts { reads: 201, writes: 201 });
        assert!(b.write_biguint(0, 200, &v).is_err());
    }

    #[test]
    fn sink_matches_metered_layout() {
        let mut s = BitSink::new();
        s.push_bits(3, 0b101);
        s.push_symbols(2, &[2, 1]);
        s.push_biguint(7, &BigUint::from(5u8));
        let m = s.into_metered();
        assert_eq!(m.len_bits(), 14);
        assert_eq!(m.read_bits(0, 14).unwrap(), 0b101_10_01_0000101);
    }

    proptest! {
        #[test]
        fn probe_conservation(ops in prop::collection::vec((0usize..120, 0usize..=64, any::<u64>(), any::<bool>()), 1..40)) {
            let mut b = ProbeMeteredBits::zeroed(200);
            let mut expect = 0u64;
            for (off, w, v, write) in ops {
                if write {
                    b.write_bits(off, w, v).unwrap();
                } else {
                    b.read_bits(off, w).unwrap();
                }
                expect += w as u64;
            }
            prop_assert_eq!(b.checkpoint_counters().total(), expect);
        }

        #[test]
        fn disjoint_writes_commute(a in 0u64..256, c in 0u64..256) {
            let mut x = ProbeMeteredBits::zeroed(32);
            let mut y = ProbeMeteredBits::zeroed(32);
            x.write_bits(3, 8, a).unwrap();
            x.write_bits(20, 8, c).unwrap();
            y.write_bits(20, 8, c).unwrap();
            y.write_bits(3, 8, a).unwrap();
            prop_assert_eq!(x, y);
        }

        #[test]
        fn window_round_trip(off in 0usize..100, w in 0usize..=64, v in any::<u64>()) {
            let mut b = ProbeMeteredBits::zeroed(170);
            let masked = if w == 64 { v } else { v & ((1u64 << w) - 1) };
            b.write_bits(off, w, v).unwrap();
            prop_assert_eq!(b.read_bits(off, w).unwrap(), masked);
        }
    }
}
