//! Compressed bitvector with low-probe rank queries.
//!
//! The vector is cut into `t`-bit blocks. Each block is stored as its class
//! (weight, `⌈log2(t+1)⌉` bits) and its offset among the vectors of that
//! weight (`⌈log2 C(t, class)⌉` bits, so variable). Every `s_b` blocks form a
//! superblock with a directory entry holding the absolute rank and the
//! absolute payload offset at its start. A query reads one directory entry,
//! at most `s_b` class fields and one offset field.
//!
//! Layout: `[directory][classes][offsets]`. The offset area is sized for the
//! worst vector of admissible weight, so the serialized size depends only on
//! `(m, α)`.

use crate::bitstore::{BitRead, BitSink, ProbeCounts, ProbeMeteredBits};
use crate::enumcode::{binom_rank, binom_unrank, binomial_u64, bits_for, ceil_log2, Ratio};
use crate::error::{Error, Result};

/// Serialized geometry of a rank dictionary over `m` bits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankLayout {
    m: usize,
    max_weight: usize,
    block: usize,
    stride: usize,
    class_width: usize,
    rank_width: usize,
    offset_width: usize,
    blocks: usize,
    superblocks: usize,
    payload_cap: usize,
}

impl RankLayout {
    /// Geometry for vectors of length `m` with weight at most `⌊α m⌋`.
    pub fn new(m: usize, alpha: Ratio) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("empty bitvector".into()));
        }
        if alpha.num() == 0 || alpha.num() > alpha.den() {
            return Err(Error::InvalidArgument(format!("density {alpha} outside (0, 1]")));
        }
        let log_m = ceil_log2(m as u64).max(1);
        let block = 4.max(log_m.div_ceil(2));
        let stride = log_m;
        let blocks = m.div_ceil(block);
        let superblocks = blocks.div_ceil(stride);
        let max_weight = alpha.floor_mul(m as u64) as usize;
        let payload_cap = max_payload(blocks, block, max_weight);
        Ok(RankLayout {
            m,
            max_weight,
            block,
            stride,
            class_width: bits_for(block as u64),
            rank_width: bits_for(m as u64),
            offset_width: bits_for(payload_cap as u64),
            blocks,
            superblocks,
            payload_cap,
        })
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn max_weight(&self) -> usize {
        self.max_weight
    }

    /// Block size `t` in bits.
    pub fn block_bits(&self) -> usize {
        self.block
    }

    /// Blocks per superblock `s_b`.
    pub fn stride(&self) -> usize {
        self.stride
    }

    fn dir_entry_bits(&self) -> usize {
        self.rank_width + self.offset_width
    }

    fn classes_base(&self) -> usize {
        self.superblocks * self.dir_entry_bits()
    }

    fn payload_base(&self) -> usize {
        self.classes_base() + self.blocks * self.class_width
    }

    pub fn total_bits(&self) -> usize {
        self.payload_base() + self.payload_cap
    }

    /// Per-block overhead constant: `total_bits <= m h(α) + c_dir m / t + O(t)`.
    pub fn directory_constant(&self) -> f64 {
        self.class_width as f64 + 1.0 + self.dir_entry_bits() as f64 / self.stride as f64
    }

    fn offset_width_for(&self, class: usize) -> usize {
        ceil_log2(binomial_u64(self.block, class))
    }

    /// Worst-case probes of one rank query.
    pub fn probe_bound(&self) -> u64 {
        let widest = (0..=self.block).map(|c| self.offset_width_for(c)).max().unwrap_or(0);
        (self.dir_entry_bits() + self.stride * self.class_width + widest) as u64
    }

    /// Serializes `bits` into `sink`.
    pub fn write(&self, bits: &[bool], sink: &mut BitSink) -> Result<()> {
        assert_eq!(bits.len(), self.m, "bitvector length must match the layout");
        let weight = bits.iter().filter(|&&b| b).count();
        if weight > self.max_weight {
            return Err(Error::DensityTooHigh {
                weight,
                limit: self.max_weight,
            });
        }
        let mut classes = Vec::with_capacity(self.blocks);
        let mut offsets = Vec::with_capacity(self.blocks);
        let mut padded = vec![false; self.block];
        for b in 0..self.blocks {
            let lo = b * self.block;
            let hi = (lo + self.block).min(self.m);
            padded.fill(false);
            padded[..hi - lo].copy_from_slice(&bits[lo..hi]);
            let c = padded.iter().filter(|&&v| v).count();
            classes.push(c);
            offsets.push(binom_rank(&padded));
        }
        let mut rank = 0usize;
        let mut payload = 0usize;
        for (b, &c) in classes.iter().enumerate() {
            if b % self.stride == 0 {
                sink.push_bits(self.rank_width, rank as u64);
                sink.push_bits(self.offset_width, payload as u64);
            }
            rank += c;
            payload += self.offset_width_for(c);
        }
        debug_assert!(payload <= self.payload_cap);
        for &c in &classes {
            sink.push_bits(self.class_width, c as u64);
        }
        for (&c, &o) in classes.iter().zip(&offsets) {
            sink.push_bits(self.offset_width_for(c), o);
        }
        sink.push_zeros(self.payload_cap - payload);
        Ok(())
    }

    /// Walks to block `b`: returns (rank before the block, payload offset of
    /// the block, class of the block).
    fn locate<S: BitRead + ?Sized>(
        &self,
        store: &S,
        base: usize,
        b: usize,
        need_rank: bool,
    ) -> Result<(usize, usize, usize)> {
        let sb = b / self.stride;
        let entry = base + sb * self.dir_entry_bits();
        let mut rank = if need_rank {
            store.read_bits(entry, self.rank_width)? as usize
        } else {
            0
        };
        let mut payload = store.read_bits(entry + self.rank_width, self.offset_width)? as usize;
        let class_at = |k: usize| -> Result<usize> {
            Ok(store.read_bits(base + self.classes_base() + k * self.class_width, self.class_width)? as usize)
        };
        for k in sb * self.stride..b {
            let c = class_at(k)?;
            if c > self.block {
                return Err(Error::corrupt("rank dictionary class out of range"));
            }
            rank += c;
            payload += self.offset_width_for(c);
        }
        let c = class_at(b)?;
        if c > self.block {
            return Err(Error::corrupt("rank dictionary class out of range"));
        }
        Ok((rank, payload, c))
    }

    fn block_bits_at<S: BitRead + ?Sized>(&self, store: &S, base: usize, payload: usize, class: usize) -> Result<Vec<bool>> {
        if class == 0 {
            return Ok(vec![false; self.block]);
        }
        if class == self.block {
            return Ok(vec![true; self.block]);
        }
        let width = self.offset_width_for(class);
        let off = store.read_bits(base + self.payload_base() + payload, width)?;
        binom_unrank(self.block, class, off).map_err(|_| Error::corrupt("rank dictionary offset out of range"))
    }

    fn check_position(&self, i: usize) -> Result<()> {
        if i > self.m {
            return Err(Error::OutOfRange(format!("rank position {i} beyond length {}", self.m)));
        }
        Ok(())
    }

    /// Number of ones among the first `i` bits (`0 <= i <= m`).
    pub fn rank<S: BitRead + ?Sized>(&self, store: &S, base: usize, i: usize) -> Result<usize> {
        self.check_position(i)?;
        if i == 0 {
            return Ok(0);
        }
        let b = (i - 1) / self.block;
        let within = i - b * self.block;
        let (rank, payload, class) = self.locate(store, base, b, true)?;
        if class == 0 {
            return Ok(rank);
        }
        if class == self.block {
            return Ok(rank + within);
        }
        let bits = self.block_bits_at(store, base, payload, class)?;
        Ok(rank + bits[..within].iter().filter(|&&v| v).count())
    }

    /// `(rank(i), bit i)` for a zero-based position `i < m`, sharing one
    /// directory walk.
    pub fn rank_and_bit<S: BitRead + ?Sized>(&self, store: &S, base: usize, i: usize) -> Result<(usize, bool)> {
        if i >= self.m {
            return Err(Error::OutOfRange(format!("bit {i} beyond length {}", self.m)));
        }
        let b = i / self.block;
        let within = i - b * self.block;
        let (rank, payload, class) = self.locate(store, base, b, true)?;
        let bits = self.block_bits_at(store, base, payload, class)?;
        Ok((rank + bits[..within].iter().filter(|&&v| v).count(), bits[within]))
    }

    /// Bit at zero-based position `i`.
    pub fn get_bit<S: BitRead + ?Sized>(&self, store: &S, base: usize, i: usize) -> Result<bool> {
        if i >= self.m {
            return Err(Error::OutOfRange(format!("bit {i} beyond length {}", self.m)));
        }
        let b = i / self.block;
        let (_, payload, class) = self.locate(store, base, b, false)?;
        Ok(self.block_bits_at(store, base, payload, class)?[i - b * self.block])
    }

    /// Full bitvector, read sequentially.
    pub fn reconstruct<S: BitRead + ?Sized>(&self, store: &S, base: usize) -> Result<Vec<bool>> {
        let mut out = Vec::with_capacity(self.blocks * self.block);
        let mut payload = 0usize;
        for b in 0..self.blocks {
            let c = store.read_bits(base + self.classes_base() + b * self.class_width, self.class_width)? as usize;
            if c > self.block {
                return Err(Error::corrupt("rank dictionary class out of range"));
            }
            out.extend(self.block_bits_at(store, base, payload, c)?);
            payload += self.offset_width_for(c);
        }
        if out[self.m..].iter().any(|&v| v) {
            return Err(Error::corrupt("rank dictionary has bits past its length"));
        }
        out.truncate(self.m);
        Ok(out)
    }
}

/// Largest total offset width over `blocks` classes summing to at most
/// `weight` (a small knapsack over identical items).
fn max_payload(blocks: usize, block: usize, weight: usize) -> usize {
    let widths: Vec<usize> = (0..=block).map(|c| ceil_log2(binomial_u64(block, c))).collect();
    let weight = weight.min(blocks * block);
    // best[w] = max width using the blocks seen so far with total class <= w.
    let mut best = vec![0usize; weight + 1];
    for _ in 0..blocks {
        let mut next = best.clone();
        for w in 0..=weight {
            for (c, &width) in widths.iter().enumerate().take(w.min(block) + 1) {
                next[w] = next[w].max(best[w - c] + width);
            }
        }
        best = next;
    }
    best[weight]
}

/// A rank dictionary that owns its serialized bits.
#[derive(Clone, Debug)]
pub struct RankDictionary {
    layout: RankLayout,
    bits: ProbeMeteredBits,
}

impl RankDictionary {
    pub fn build(bits: &[bool], alpha: Ratio) -> Result<Self> {
        let layout = RankLayout::new(bits.len(), alpha)?;
        let mut sink = BitSink::new();
        layout.write(bits, &mut sink)?;
        Ok(RankDictionary {
            layout,
            bits: sink.into_metered(),
        })
    }

    pub fn layout(&self) -> &RankLayout {
        &self.layout
    }

    pub fn total_bits(&self) -> usize {
        self.layout.total_bits()
    }

    pub fn storage(&self) -> &ProbeMeteredBits {
        &self.bits
    }

    /// Rank of the first `i` bits with the probes it cost.
    pub fn rank(&self, i: usize) -> Result<(usize, ProbeCounts)> {
        let before = self.bits.counters();
        let r = self.layout.rank(&self.bits, 0, i)?;
        let probes = self.bits.counters().since(before);
        debug_assert!(probes.reads <= self.layout.probe_bound());
        Ok((r, probes))
    }

    /// Bit at zero-based position `i`.
    pub fn get_bit(&self, i: usize) -> Result<bool> {
        self.layout.get_bit(&self.bits, 0, i)
    }

    pub fn reconstruct(&self) -> Result<Vec<bool>> {
        self.layout.reconstruct(&self.bits, 0)
    }
}

/// Uncompressed reference: raw bits plus sampled absolute ranks.
#[derive(Clone, Debug)]
pub struct PlainRank {
    bits: ProbeMeteredBits,
    m: usize,
    sample: usize,
    rank_width: usize,
}

impl PlainRank {
    pub fn build(bits: &[bool]) -> Self {
        let m = bits.len();
        let sample = (ceil_log2(m.max(2) as u64)).pow(2).max(8);
        let rank_width = bits_for(m as u64);
        let samples = m.div_ceil(sample);
        let mut sink = BitSink::new();
        let mut rank = 0u64;
        for k in 0..samples {
            sink.push_bits(rank_width, rank);
            rank += bits[k * sample..((k + 1) * sample).min(m)].iter().filter(|&&b| b).count() as u64;
        }
        for &b in bits {
            sink.push_bit(b);
        }
        PlainRank {
            bits: sink.into_metered(),
            m,
            sample,
            rank_width,
        }
    }

    pub fn rank(&self, i: usize) -> Result<usize> {
        if i > self.m {
            return Err(Error::OutOfRange(format!("rank position {i} beyond length {}", self.m)));
        }
        if i == 0 {
            return Ok(0);
        }
        let k = (i - 1) / self.sample;
        let mut r = self.bits.read_bits(k * self.rank_width, self.rank_width)? as usize;
        let raw = self.m.div_ceil(self.sample) * self.rank_width;
        for p in k * self.sample..i {
            r += self.bits.read_bit(raw + p)? as usize;
        }
        Ok(r)
    }
}

/// Binary entropy in bits.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}
