//! The multilevel fixed-length scheme.
//!
//! Level 0 codes `b_0`-symbol blocks with a [`Level0Codec`]. Blocks that are
//! not compressible survive to level 1, where groups of `b_1` level-0 blocks
//! are examined: a group with at most `⌊ε_1 b_1⌋` surviving children is
//! stored with the ψ map (an indicator of the survivors followed by their raw
//! content), otherwise its word is all-zero and the whole group survives to
//! level 2, and so on. Surviving content is tracked over the extended
//! alphabet `X ∪ {⋄}` where ⋄ (code `|X|`) marks symbols already stored below.
//!
//! Codeword layout: all level-0 words, then all level-1 words, and so on.
//! The message is padded to a whole number of level-0 blocks; a group at the
//! end of a level that has fewer than `b_ℓ` real children treats the missing
//! ones as ⋄-blocks.

use num_bigint::BigUint;
use num_traits::Zero;

use crate::bitstore::{BitRead, BitSink, ProbeMeteredBits};
use crate::codecs::{Level0Codec, Level0Mode};
use crate::enumcode::{bits_for, Ratio, SourceModel};
use crate::error::{Error, Result};

/// How the level-0 word length is chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum Level0Choice {
    /// Typical-set coding with `k_0 = ⌈(H + ε_0) b_0⌉`.
    Typical,
    /// Typical-set coding with an explicit `k_0`.
    TypicalWithCodeLen(usize),
    /// LZ78-derived fixed-length coding with the given `k_0`.
    Lz78 { code_len: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultilevelConfig {
    pub epsilon: Ratio,
    /// Overrides the default `b_0` (useful for small experiments).
    pub block_len: Option<usize>,
    pub level0: Level0Choice,
}

impl MultilevelConfig {
    pub fn new(epsilon: Ratio) -> Self {
        MultilevelConfig {
            epsilon,
            block_len: None,
            level0: Level0Choice::Typical,
        }
    }

    pub fn with_block_len(mut self, b0: usize) -> Self {
        self.block_len = Some(b0);
        self
    }

    pub fn with_level0(mut self, level0: Level0Choice) -> Self {
        self.level0 = level0;
        self
    }
}

/// Parameters of one level.
#[derive(Clone, Debug, PartialEq)]
pub struct Level {
    pub epsilon: Ratio,
    /// Children per group (`b_ℓ`); for level 0 this is the block length.
    pub fanout: usize,
    /// Symbols per level-ℓ block (`n_ℓ`).
    pub block_symbols: usize,
    /// Bits per level-ℓ word (`k_ℓ`).
    pub code_len: usize,
    /// Payload slots `p_ℓ = ⌈ε_ℓ b_ℓ⌉` (zero for level 0).
    pub slots: usize,
    /// A group is stored at this level when it has at most this many
    /// surviving children (`⌊ε_ℓ b_ℓ⌋`).
    pub threshold: usize,
    /// Number of level-ℓ blocks in the padded message.
    pub count: usize,
    /// Bit offset of this level's region in the codeword.
    pub offset: usize,
}

impl Level {
    pub fn word_offset(&self, index: usize) -> usize {
        self.offset + index * self.code_len
    }
}

/// Geometry of one ψ word.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PsiGeometry {
    /// Children per group.
    pub blocks: usize,
    /// Symbols per child.
    pub block_symbols: usize,
    /// Bits per symbol.
    pub width: usize,
    /// Payload slots.
    pub slots: usize,
    /// Code of ⋄.
    pub diamond: u8,
}

impl PsiGeometry {
    pub fn len_bits(&self) -> usize {
        self.blocks + self.slots * self.slot_bits()
    }

    pub fn slot_bits(&self) -> usize {
        self.block_symbols * self.width
    }

    pub fn slot_offset(&self, slot: usize) -> usize {
        self.blocks + slot * self.slot_bits()
    }
}

/// ψ: indicator of the non-⋄ children, their content in order, then ⋄
/// padding up to `slots` payload slots. `children[i] = None` is a ⋄-block.
pub fn psi_encode_children(children: &[Option<&[u8]>], geo: &PsiGeometry, sink: &mut BitSink) -> Result<()> {
    debug_assert_eq!(children.len(), geo.blocks);
    let weight = children.iter().filter(|c| c.is_some()).count();
    if weight > geo.slots {
        return Err(Error::TooManyResiduals {
            count: weight,
            capacity: geo.slots,
        });
    }
    for c in children {
        sink.push_bit(c.is_some());
    }
    for c in children.iter().flatten() {
        debug_assert_eq!(c.len(), geo.block_symbols);
        sink.push_symbols(geo.width, c);
    }
    for _ in weight..geo.slots {
        for _ in 0..geo.block_symbols {
            sink.push_bits(geo.width, geo.diamond as u64);
        }
    }
    Ok(())
}

/// ψ over a flat group of `blocks * block_symbols` symbols; children that
/// are entirely ⋄ are left out of the payload.
pub fn psi_encode(group: &[u8], geo: &PsiGeometry) -> Result<BitSink> {
    assert_eq!(group.len(), geo.blocks * geo.block_symbols);
    let children: Vec<Option<&[u8]>> = group
        .chunks(geo.block_symbols)
        .map(|c| (!c.iter().all(|&s| s == geo.diamond)).then_some(c))
        .collect();
    let mut sink = BitSink::new();
    psi_encode_children(&children, geo, &mut sink)?;
    Ok(sink)
}

/// Decoded ψ word: indicator and the stored children in order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PsiWord {
    pub indicator: Vec<bool>,
    pub stored: Vec<Vec<u8>>,
}

impl PsiWord {
    /// Content of child `i`, or `None` when it is a ⋄-block.
    pub fn child(&self, i: usize) -> Option<&[u8]> {
        if !self.indicator[i] {
            return None;
        }
        let slot = self.indicator[..i].iter().filter(|&&b| b).count();
        Some(&self.stored[slot])
    }

    pub fn children(&self) -> Vec<Option<Vec<u8>>> {
        (0..self.indicator.len()).map(|i| self.child(i).map(<[u8]>::to_vec)).collect()
    }
}

/// Reads and parses a ψ word at `offset`, checking that it is well formed.
pub fn psi_read<S: BitRead + ?Sized>(store: &S, offset: usize, geo: &PsiGeometry) -> Result<PsiWord> {
    let mut indicator = Vec::with_capacity(geo.blocks);
    let mut pos = offset;
    while indicator.len() < geo.blocks {
        let w = (geo.blocks - indicator.len()).min(64);
        let v = store.read_bits(pos, w)?;
        indicator.extend((0..w).map(|t| (v >> (w - 1 - t)) & 1 == 1));
        pos += w;
    }
    let weight = indicator.iter().filter(|&&b| b).count();
    if weight > geo.slots {
        return Err(Error::corrupt(format!(
            "ψ indicator weight {weight} exceeds {} slots",
            geo.slots
        )));
    }
    let mut stored = Vec::with_capacity(weight);
    for slot in 0..geo.slots {
        let syms = store.read_symbols(offset + geo.slot_offset(slot), geo.block_symbols, geo.width)?;
        if syms.iter().any(|&s| s > geo.diamond) {
            return Err(Error::corrupt("ψ payload symbol outside X ∪ {⋄}"));
        }
        let all_diamond = syms.iter().all(|&s| s == geo.diamond);
        if slot < weight {
            if all_diamond {
                return Err(Error::corrupt("ψ stores a ⋄-block"));
            }
            stored.push(syms);
        } else if !all_diamond {
            return Err(Error::corrupt("ψ padding slot is not ⋄"));
        }
    }
    Ok(PsiWord { indicator, stored })
}

/// Inverse of [`psi_encode`] on a flat bit buffer.
pub fn psi_decode<S: BitRead + ?Sized>(store: &S, offset: usize, geo: &PsiGeometry) -> Result<Vec<u8>> {
    let word = psi_read(store, offset, geo)?;
    let mut out = Vec::with_capacity(geo.blocks * geo.block_symbols);
    for i in 0..geo.blocks {
        match word.child(i) {
            Some(c) => out.extend_from_slice(c),
            None => out.extend(std::iter::repeat_n(geo.diamond, geo.block_symbols)),
        }
    }
    Ok(out)
}

/// The full parameter ladder.
#[derive(Clone, Debug)]
pub struct LevelPlan {
    model: SourceModel,
    n: usize,
    padded_len: usize,
    width: usize,
    epsilon: Ratio,
    level0: Level0Codec,
    levels: Vec<Level>,
    pad: Vec<u8>,
}

/// `⌈3 (4 + log2|X|) max_a(1/p(a)) (1/ε²) log2(1/ε)⌉`.
pub fn default_block_len(model: &SourceModel, epsilon: Ratio) -> usize {
    let e = epsilon.to_f64();
    let q = model.alphabet_size() as f64;
    let raw = 3.0 * (4.0 + q.log2()) * model.max_inverse_probability() / (e * e) * (1.0 / e).log2();
    // The pmf is quantized to 32 bits; keep that noise from bumping the ceiling.
    (raw - 1e-6).ceil() as usize
}

/// Deterministic pad that tracks the pmf: each pad symbol is the one whose
/// count lags furthest behind its expected share.
pub fn balanced_pad(model: &SourceModel, len: usize) -> Vec<u8> {
    let q = model.alphabet_size();
    let mut counts = vec![0u128; q];
    let mut out = Vec::with_capacity(len);
    for t in 1..=len as u128 {
        let nums = model.numerators();
        let best = (0..q)
            .max_by_key(|&a| {
                let expected = t * nums[a] as u128;
                let have = counts[a] << 32;
                (expected as i128 - have as i128, std::cmp::Reverse(a))
            })
            .expect("nonempty alphabet");
        counts[best] += 1;
        out.push(best as u8);
    }
    out
}

pub fn make_plan(model: &SourceModel, n: usize, config: &MultilevelConfig) -> Result<LevelPlan> {
    let eps = config.epsilon;
    if eps.num() == 0 || 2 * eps.num() > eps.den() {
        return Err(Error::PlanInfeasible(format!("ε_0 = {eps} outside (0, 1/2]")));
    }
    let b0 = config.block_len.unwrap_or_else(|| default_block_len(model, eps));
    if b0 == 0 || n < b0 {
        return Err(Error::PlanInfeasible(format!("message length {n} is below b_0 = {b0}")));
    }
    let level0 = match config.level0 {
        Level0Choice::Typical => Level0Codec::typical(model, b0, eps)?,
        Level0Choice::TypicalWithCodeLen(k) => Level0Codec::typical_with_code_len(model, b0, eps, k)?,
        Level0Choice::Lz78 { code_len } => Level0Codec::lz78(model.alphabet_size(), b0, code_len)?,
    };
    LevelPlan::build(model.clone(), n, eps, level0, None)
}

impl LevelPlan {
    /// Assembles the ladder around a given level-0 codec. When `max_level`
    /// is given it must match the derived value.
    pub fn build(
        model: SourceModel,
        n: usize,
        epsilon: Ratio,
        level0: Level0Codec,
        max_level: Option<usize>,
    ) -> Result<Self> {
        let b0 = level0.block_len();
        if n < b0 {
            return Err(Error::PlanInfeasible(format!("message length {n} is below b_0 = {b0}")));
        }
        let q = model.alphabet_size();
        let width = bits_for(q as u64);
        let padded_len = n.div_ceil(b0) * b0;
        let mut levels = vec![Level {
            epsilon,
            fanout: b0,
            block_symbols: b0,
            code_len: level0.code_len(),
            slots: 0,
            threshold: 0,
            count: padded_len / b0,
            offset: 0,
        }];
        loop {
            let prev = levels.last().expect("level 0");
            let fanout = if levels.len() == 1 { 4 * b0 } else { 4 * prev.fanout };
            let Some(block_symbols) = prev.block_symbols.checked_mul(fanout) else {
                break;
            };
            if block_symbols > n {
                break;
            }
            let eps = prev.epsilon.halved();
            let slots = eps.ceil_mul(fanout as u64) as usize;
            let threshold = eps.floor_mul(fanout as u64) as usize;
            if slots == 0 {
                return Err(Error::PlanInfeasible("a level has no payload slots".into()));
            }
            let code_len = fanout + slots * prev.block_symbols * width;
            levels.push(Level {
                epsilon: eps,
                fanout,
                block_symbols,
                code_len,
                slots,
                threshold,
                count: prev.count.div_ceil(fanout),
                offset: prev.offset + prev.count * prev.code_len,
            });
        }
        if let Some(m) = max_level {
            if m != levels.len() - 1 {
                return Err(Error::PlanInfeasible(format!(
                    "stored ℓ_max {m} disagrees with derived {}",
                    levels.len() - 1
                )));
            }
        }
        let pad = balanced_pad(&model, padded_len - n);
        Ok(LevelPlan {
            model,
            n,
            padded_len,
            width,
            epsilon,
            level0,
            levels,
            pad,
        })
    }

    pub fn model(&self) -> &SourceModel {
        &self.model
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn padded_len(&self) -> usize {
        self.padded_len
    }

    pub fn pad_len(&self) -> usize {
        self.padded_len - self.n
    }

    pub fn pad(&self) -> &[u8] {
        &self.pad
    }

    /// Bits per symbol inside ψ payloads, `⌈log2(|X|+1)⌉`.
    pub fn symbol_width(&self) -> usize {
        self.width
    }

    pub fn diamond(&self) -> u8 {
        self.model.alphabet_size() as u8
    }

    pub fn epsilon(&self) -> Ratio {
        self.epsilon
    }

    pub fn level0(&self) -> &Level0Codec {
        &self.level0
    }

    pub fn block_len(&self) -> usize {
        self.level0.block_len()
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn level(&self, l: usize) -> &Level {
        &self.levels[l]
    }

    pub fn max_level(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn total_bits(&self) -> usize {
        self.levels.iter().map(|l| l.count * l.code_len).sum()
    }

    /// Nominal rate `Σ_ℓ k_ℓ / n_ℓ`.
    pub fn nominal_rate(&self) -> f64 {
        self.levels
            .iter()
            .map(|l| l.code_len as f64 / l.block_symbols as f64)
            .sum()
    }

    /// Measured rate: codeword bits per message symbol.
    pub fn rate(&self) -> f64 {
        self.total_bits() as f64 / self.n as f64
    }

    pub fn psi_geometry(&self, l: usize) -> PsiGeometry {
        assert!(l >= 1);
        let lv = &self.levels[l];
        PsiGeometry {
            blocks: lv.fanout,
            block_symbols: self.levels[l - 1].block_symbols,
            width: self.width,
            slots: lv.slots,
            diamond: self.diamond(),
        }
    }

    /// Level-ℓ ancestor index of level-0 block `j`.
    pub fn ancestor(&self, j: usize, l: usize) -> usize {
        j / (self.levels[l].block_symbols / self.block_len())
    }

    /// Position of the level-(ℓ−1) ancestor of `j` inside its level-ℓ group.
    pub fn position_in_group(&self, j: usize, l: usize) -> usize {
        self.ancestor(j, l - 1) % self.levels[l].fanout
    }

    /// Number of level-0 blocks.
    pub fn block_count(&self) -> usize {
        self.levels[0].count
    }

    /// Message padded to a whole number of level-0 blocks.
    pub fn padded_message(&self, x: &[u8]) -> Vec<u8> {
        let mut v = Vec::with_capacity(self.padded_len);
        v.extend_from_slice(x);
        v.extend_from_slice(&self.pad);
        v
    }

    /// Whether the ladder uses LZ78 at level 0.
    pub fn is_universal(&self) -> bool {
        self.level0.mode() == Level0Mode::Lz78Fixed
    }
}

/// Where each level-0 block ended up and how many blocks survived each pass.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EncodeStats {
    /// `stored_level[j]`: the level whose word holds block `j`.
    pub stored_level: Vec<u8>,
    /// `survivors[ℓ]`: number of level-ℓ blocks that were not stored at or
    /// below level ℓ.
    pub survivors: Vec<usize>,
}

impl EncodeStats {
    /// Fraction of level-0 blocks stored at each level.
    pub fn level_histogram(&self, levels: usize) -> Vec<f64> {
        let mut h = vec![0.0; levels];
        for &l in &self.stored_level {
            h[l as usize] += 1.0;
        }
        let total = self.stored_level.len().max(1) as f64;
        h.iter_mut().for_each(|v| *v /= total);
        h
    }
}

/// Content of level-ℓ block `u` given which level-0 blocks are still live.
fn block_content(plan: &LevelPlan, x: &[u8], live: &[bool], l: usize, u: usize) -> Vec<u8> {
    let b0 = plan.block_len();
    let per = plan.levels[l].block_symbols / b0;
    let mut out = Vec::with_capacity(per * b0);
    for j in u * per..(u + 1) * per {
        if j < live.len() && live[j] {
            out.extend_from_slice(&x[j * b0..(j + 1) * b0]);
        } else {
            out.extend(std::iter::repeat_n(plan.diamond(), b0));
        }
    }
    out
}

/// Encodes `x` (length `plan.n()`). When some block survives every level the
/// error carries the codeword built so far.
pub fn encode(x: &[u8], plan: &LevelPlan) -> Result<(ProbeMeteredBits, EncodeStats)> {
    if x.len() != plan.n() {
        return Err(Error::InvalidArgument(format!(
            "message has {} symbols, plan expects {}",
            x.len(),
            plan.n()
        )));
    }
    if let Some(&s) = x.iter().find(|&&s| s as usize >= plan.model().alphabet_size()) {
        return Err(Error::InvalidArgument(format!("symbol {s} outside the alphabet")));
    }
    let x = plan.padded_message(x);
    let b0 = plan.block_len();
    let blocks = plan.block_count();
    let mut sink = BitSink::new();
    let mut live = vec![false; blocks];
    let mut stored_level = vec![u8::MAX; blocks];
    let k0 = plan.level0().code_len();
    for j in 0..blocks {
        let (word, ok) = plan.level0().encode(&x[j * b0..(j + 1) * b0]);
        sink.push_biguint(k0, &word);
        live[j] = !ok;
        if ok {
            stored_level[j] = 0;
        }
    }
    let mut survivors = vec![live.iter().filter(|&&v| v).count()];
    // alive[u]: level-(ℓ−1) block u still has live content.
    let mut alive: Vec<bool> = live.clone();
    for l in 1..=plan.max_level() {
        let lv = plan.level(l);
        let geo = plan.psi_geometry(l);
        let per0 = plan.level(l - 1).block_symbols / b0;
        let mut next_alive = vec![false; lv.count];
        for g in 0..lv.count {
            let kids = g * lv.fanout..((g + 1) * lv.fanout).min(alive.len());
            let weight = alive[kids.clone()].iter().filter(|&&a| a).count();
            if weight <= lv.threshold {
                let contents: Vec<Option<Vec<u8>>> = (g * lv.fanout..(g + 1) * lv.fanout)
                    .map(|u| {
                        (u < alive.len() && alive[u]).then(|| block_content(plan, &x, &live, l - 1, u))
                    })
                    .collect();
                let refs: Vec<Option<&[u8]>> = contents.iter().map(|c| c.as_deref()).collect();
                psi_encode_children(&refs, &geo, &mut sink)?;
                for u in kids.clone() {
                    if alive[u] {
                        for j in u * per0..((u + 1) * per0).min(blocks) {
                            if live[j] {
                                live[j] = false;
                                stored_level[j] = l as u8;
                            }
                        }
                    }
                }
            } else {
                sink.push_zeros(lv.code_len);
                next_alive[g] = true;
            }
        }
        survivors.push(next_alive.iter().filter(|&&a| a).count());
        alive = next_alive;
    }
    let stats = EncodeStats {
        stored_level,
        survivors,
    };
    let codeword = sink.into_metered();
    if alive.iter().any(|&a| a) {
        return Err(Error::EncodingIncomplete {
            partial: Some(Box::new(codeword)),
        });
    }
    Ok((codeword, stats))
}

/// Full decode of a complete codeword, top-down.
pub fn decode<S: BitRead + ?Sized>(codeword: &S, plan: &LevelPlan) -> Result<Vec<u8>> {
    decode_padded(codeword, plan).map(|mut v| {
        v.truncate(plan.n());
        v
    })
}

/// Like [`decode`] but keeps the pad symbols at the end.
pub fn decode_padded<S: BitRead + ?Sized>(codeword: &S, plan: &LevelPlan) -> Result<Vec<u8>> {
    if codeword.len_bits() < plan.total_bits() {
        return Err(Error::corrupt("codeword shorter than the plan"));
    }
    let mut out = vec![0u8; plan.padded_len()];
    let top = plan.max_level();
    for u in 0..plan.level(top).count {
        decode_node(codeword, plan, top, u, None, &mut out)?;
    }
    Ok(out)
}

/// Decodes level-ℓ block `u`. `given` is its content when an ancestor's ψ
/// stored it (then its own word must be zero).
fn decode_node<S: BitRead + ?Sized>(
    store: &S,
    plan: &LevelPlan,
    l: usize,
    u: usize,
    given: Option<&[u8]>,
    out: &mut [u8],
) -> Result<()> {
    let lv = plan.level(l);
    let offset = lv.word_offset(u);
    if l == 0 {
        let b0 = plan.block_len();
        let word = store.read_biguint(offset, lv.code_len)?;
        let dst = &mut out[u * b0..(u + 1) * b0];
        match given {
            Some(content) => {
                if !word.is_zero() {
                    return Err(Error::corrupt(format!("block {u} stored twice")));
                }
                if content.iter().any(|&s| s == plan.diamond()) {
                    return Err(Error::corrupt(format!("block {u} is ⋄ but has no code")));
                }
                dst.copy_from_slice(content);
            }
            None => match plan.level0().decode(&word)? {
                Some(block) => dst.copy_from_slice(&block),
                None => return Err(Error::corrupt(format!("block {u} is never stored"))),
            },
        }
        return Ok(());
    }
    let child_symbols = plan.level(l - 1).block_symbols;
    let child_count = plan.level(l - 1).count;
    let first = u * lv.fanout;
    match given {
        Some(content) => {
            if !store.is_zero(offset, lv.code_len)? {
                return Err(Error::corrupt(format!("level-{l} block {u} stored twice")));
            }
            for (i, c) in content.chunks(child_symbols).enumerate() {
                let child = first + i;
                if child >= child_count {
                    break;
                }
                let live = !c.iter().all(|&s| s == plan.diamond());
                decode_node(store, plan, l - 1, child, live.then_some(c), out)?;
            }
        }
        None => {
            let geo = plan.psi_geometry(l);
            let word = psi_read(store, offset, &geo)?;
            for i in 0..lv.fanout {
                let child = first + i;
                if child >= child_count {
                    if word.indicator[i] {
                        return Err(Error::corrupt("ψ flags a block past the end"));
                    }
                    continue;
                }
                decode_node(store, plan, l - 1, child, word.child(i), out)?;
            }
        }
    }
    Ok(())
}

/// Reads the level-0 word of block `j` as an integer.
pub fn read_level0_word<S: BitRead + ?Sized>(store: &S, plan: &LevelPlan, j: usize) -> Result<BigUint> {
    let lv = plan.level(0);
    store.read_biguint(lv.word_offset(j), lv.code_len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn half() -> SourceModel {
        SourceModel::new(&[0.5, 0.5]).unwrap()
    }

    fn r(s: &str) -> Ratio {
        s.parse().unwrap()
    }

    #[test]
    fn toy_ladder_arithmetic() {
        let cfg = MultilevelConfig::new(r("0.5")).with_block_len(8);
        let plan = make_plan(&half(), 32768, &cfg).unwrap();
        assert_eq!(plan.max_level(), 2);
        assert_eq!(plan.symbol_width(), 2);
        let l1 = plan.level(1);
        assert_eq!((l1.fanout, l1.block_symbols, l1.slots), (32, 256, 8));
        assert_eq!(l1.code_len, 160);
        let l2 = plan.level(2);
        assert_eq!((l2.fanout, l2.block_symbols), (128, 32768));
        let rate_sum: f64 = plan.nominal_rate();
        assert!((rate_sum - plan.total_bits() as f64 / 32768.0).abs() < 1e-12);
    }

    #[test]
    fn plan_rejects_bad_parameters() {
        let cfg = MultilevelConfig::new(r("0.6"));
        assert!(matches!(make_plan(&half(), 1 << 12, &cfg), Err(Error::PlanInfeasible(_))));
        let cfg = MultilevelConfig::new(r("0.4"));
        assert!(matches!(make_plan(&half(), 100, &cfg), Err(Error::PlanInfeasible(_))));
    }

    #[test]
    fn default_block_lengths() {
        assert_eq!(default_block_len(&half(), r("0.4")), 248);
        assert_eq!(default_block_len(&half(), r("0.25")), 960);
        let skew = SourceModel::new(&[0.2, 0.8]).unwrap();
        assert_eq!(default_block_len(&skew, r("0.25")), 2400);
    }

    fn toy_geo() -> PsiGeometry {
        PsiGeometry {
            blocks: 4,
            block_symbols: 2,
            width: 2,
            slots: 1,
            diamond: 2,
        }
    }

    fn bitstring(sink: BitSink) -> String {
        let store = sink.into_metered();
        (0..store.len_bits())
            .map(|i| if store.read_bit(i).unwrap() { '1' } else { '0' })
            .collect()
    }

    #[test]
    fn psi_examples() {
        let geo = toy_geo();
        let group = [2, 2, 2, 2, 1, 0, 2, 2];
        let sink = psi_encode(&group, &geo).unwrap();
        let store = sink.clone().into_metered();
        assert_eq!(bitstring(sink), "00100100");
        assert_eq!(psi_decode(&store, 0, &geo).unwrap(), group);

        let empty = [2u8; 8];
        let sink = psi_encode(&empty, &geo).unwrap();
        assert_eq!(bitstring(sink), "00001010");

        let crowded = [1, 0, 2, 2, 0, 0, 2, 2];
        assert!(matches!(
            psi_encode(&crowded, &geo),
            Err(Error::TooManyResiduals { count: 2, capacity: 1 })
        ));
    }

    #[test]
    fn balanced_pad_follows_pmf() {
        let m = SourceModel::new(&[0.25, 0.75]).unwrap();
        assert_eq!(balanced_pad(&m, 4), vec![1, 0, 1, 1]);
    }

    fn toy_plan(n: usize) -> LevelPlan {
        let cfg = MultilevelConfig::new(r("0.5")).with_block_len(8);
        make_plan(&half(), n, &cfg).unwrap()
    }

    #[test]
    fn fully_typical_message_stays_at_level_zero() {
        let plan = toy_plan(1 << 12);
        let x: Vec<u8> = (0..1 << 12).map(|i| (i % 2) as u8).collect();
        let (cw, stats) = encode(&x, &plan).unwrap();
        assert!(stats.stored_level.iter().all(|&l| l == 0));
        for l in 1..=plan.max_level() {
            let lv = plan.level(l);
            for g in 0..lv.count {
                assert!(!cw.is_zero(lv.word_offset(g), lv.code_len).unwrap());
            }
        }
        assert_eq!(decode(&cw, &plan).unwrap(), x);
    }

    #[test]
    fn constant_message_is_incomplete() {
        let plan = toy_plan(1 << 12);
        let x = vec![1u8; 1 << 12];
        assert!(matches!(encode(&x, &plan), Err(Error::EncodingIncomplete { partial: Some(_) })));
    }

    #[test]
    fn random_round_trips() {
        let plan = toy_plan(1 << 12);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut incomplete = 0;
        for _ in 0..1000 {
            let x = half().sample(&mut rng, 1 << 12);
            match encode(&x, &plan) {
                Ok((cw, _)) => assert_eq!(decode(&cw, &plan).unwrap(), x),
                Err(Error::EncodingIncomplete { .. }) => incomplete += 1,
                Err(e) => panic!("{e}"),
            }
        }
        assert!(incomplete < 1000);
    }

    #[test]
    fn ragged_length_round_trips() {
        let cfg = MultilevelConfig::new(r("0.5")).with_block_len(8);
        let model = SourceModel::new(&[0.3, 0.7]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let n = rng.gen_range(8..3000);
            let plan = make_plan(&model, n, &cfg).unwrap();
            let x = model.sample(&mut rng, n);
            if let Ok((cw, _)) = encode(&x, &plan) {
                assert_eq!(cw.len_bits(), plan.total_bits());
                assert_eq!(decode(&cw, &plan).unwrap(), x);
            }
        }
    }

    /// Planted level-0 atypical blocks: a group holding two of them with
    /// `⌊ε_1 b_1⌋ = 1` is zeroed and survives to level 2.
    #[test]
    fn two_atypical_blocks_escalate() {
        let model = half();
        let level0 = Level0Codec::typical(&model, 8, r("0.5")).unwrap();
        let mut plan = LevelPlan::build(model, 8 * 64, r("0.5"), level0, None).unwrap();
        // Narrow level 1 to groups of two with a single slot.
        plan.levels.truncate(1);
        let geo_syms = 8;
        plan.levels.push(Level {
            epsilon: r("0.5"),
            fanout: 2,
            block_symbols: 16,
            code_len: 2 + geo_syms * 2,
            slots: 1,
            threshold: 1,
            count: 32,
            offset: 64 * plan.level0.code_len(),
        });
        plan.levels.push(Level {
            epsilon: r("0.25"),
            fanout: 32,
            block_symbols: 512,
            code_len: 32 + 8 * 16 * 2,
            slots: 8,
            threshold: 8,
            count: 1,
            offset: 64 * plan.level0.code_len() + 32 * 18,
        });
        let mut x: Vec<u8> = (0..512).map(|i| (i % 2) as u8).collect();
        // Blocks 2 and 3 (one group) and block 6 are all-ones.
        for j in [2usize, 3, 6] {
            x[j * 8..(j + 1) * 8].fill(1);
        }
        let (cw, stats) = encode(&x, &plan).unwrap();
        assert_eq!(stats.stored_level[2], 2);
        assert_eq!(stats.stored_level[3], 2);
        assert_eq!(stats.stored_level[6], 1);
        assert_eq!(stats.survivors, vec![3, 1, 0]);
        let l1 = plan.level(1);
        assert!(cw.is_zero(l1.word_offset(1), l1.code_len).unwrap());
        assert_eq!(decode(&cw, &plan).unwrap(), x);
    }

    #[test]
    fn level0_bit_flip_is_local_or_detected() {
        let plan = toy_plan(1 << 10);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = half().sample(&mut rng, 1 << 10);
        let Ok((cw, _)) = encode(&x, &plan) else { return };
        let k0 = plan.level0().code_len();
        for trial in 0..200 {
            let j = trial % plan.block_count();
            if read_level0_word(&cw, &plan, j).unwrap().is_zero() {
                continue;
            }
            let bit = j * k0 + rng.gen_range(0..k0);
            let mut bad = cw.clone();
            let v = bad.read_bit(bit).unwrap();
            crate::bitstore::BitWrite::write_bit(&mut bad, bit, !v).unwrap();
            match decode(&bad, &plan) {
                Ok(y) => {
                    for (i, (a, b)) in x.iter().zip(&y).enumerate() {
                        if a != b {
                            assert_eq!(i / 8, j);
                        }
                    }
                }
                Err(Error::CorruptCodeword(_)) => {}
                Err(e) => panic!("{e}"),
            }
        }
    }
}
