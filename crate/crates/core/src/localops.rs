//! Local decoding and local updating for the multilevel scheme.
//!
//! Decoding a block reads its level-0 word; if that is the reserved zero
//! word it climbs the ancestor chain testing a single indicator bit per
//! level until an ancestor group flags the block, then reads that group's
//! indicator and the one payload slot that holds the block.
//!
//! Updating recomputes the ancestor chain bottom-up against the old state,
//! which is read lazily, and stops at the first level whose content after
//! the pass is unchanged. Every changed word is rewritten over the span of
//! bits that actually differ, so the result is bit-identical to a fresh
//! encode of the modified message.

use std::collections::HashMap;

use num_bigint::BigUint;
use num_traits::Zero;

use crate::bitstore::{BitRead, BitSink, BitWrite, ProbeCounts};
use crate::error::{Error, Result};
use crate::multilevel::{psi_encode_children, psi_read, LevelPlan, PsiWord};

/// Ancestor chain of a level-0 block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalAddress {
    pub block: usize,
    /// `groups[ℓ]`: index of the level-ℓ ancestor (`groups[0] = block`).
    pub groups: Vec<usize>,
    /// `positions[ℓ]` for ℓ ≥ 1: position of the level-(ℓ−1) ancestor inside
    /// its level-ℓ group. `positions[0]` is unused.
    pub positions: Vec<usize>,
}

impl LocalAddress {
    pub fn new(plan: &LevelPlan, block: usize) -> Self {
        let top = plan.max_level();
        let groups: Vec<usize> = (0..=top).map(|l| plan.ancestor(block, l)).collect();
        let positions = (0..=top)
            .map(|l| if l == 0 { 0 } else { groups[l - 1] % plan.level(l).fanout })
            .collect();
        LocalAddress {
            block,
            groups,
            positions,
        }
    }
}

/// Per-call memo of ancestor reads, so a range decode never probes the same
/// indicator or payload slot twice.
#[derive(Default)]
struct ReadCache {
    bits: HashMap<(usize, usize, usize), bool>,
    indicators: HashMap<(usize, usize), Vec<bool>>,
    slots: HashMap<(usize, usize, usize), Vec<u8>>,
}

fn read_indicator<S: BitRead + ?Sized>(store: &S, offset: usize, len: usize) -> Result<Vec<bool>> {
    let mut out = Vec::with_capacity(len);
    let mut pos = offset;
    while out.len() < len {
        let w = (len - out.len()).min(64);
        let v = store.read_bits(pos, w)?;
        out.extend((0..w).map(|t| (v >> (w - 1 - t)) & 1 == 1));
        pos += w;
    }
    Ok(out)
}

/// Decodes block `j`, returning its symbols and the level that stored it.
fn decode_block_cached<S: BitRead + ?Sized>(
    store: &S,
    plan: &LevelPlan,
    j: usize,
    cache: &mut ReadCache,
) -> Result<(Vec<u8>, usize)> {
    let lv0 = plan.level(0);
    let word = store.read_biguint(lv0.word_offset(j), lv0.code_len)?;
    if let Some(block) = plan.level0().decode(&word)? {
        return Ok((block, 0));
    }
    let b0 = plan.block_len();
    for l in 1..=plan.max_level() {
        let lv = plan.level(l);
        let g = plan.ancestor(j, l);
        let r = plan.position_in_group(j, l);
        let base = lv.word_offset(g);
        let flagged = match cache.indicators.get(&(l, g)) {
            Some(ind) => ind[r],
            None => match cache.bits.get(&(l, g, r)) {
                Some(&b) => b,
                None => {
                    let b = store.read_bit(base + r)?;
                    cache.bits.insert((l, g, r), b);
                    b
                }
            },
        };
        if !flagged {
            continue;
        }
        if let std::collections::hash_map::Entry::Vacant(e) = cache.indicators.entry((l, g)) {
            let ind = read_indicator(store, base, lv.fanout)?;
            e.insert(ind);
        }
        let ind = &cache.indicators[&(l, g)];
        if !ind[r] {
            return Err(Error::corrupt("indicator bit changed between reads"));
        }
        let slot = ind[..r].iter().filter(|&&b| b).count();
        if slot >= lv.slots {
            return Err(Error::corrupt("indicator weight exceeds the payload slots"));
        }
        let geo = plan.psi_geometry(l);
        let content = match cache.slots.get(&(l, g, slot)) {
            Some(c) => c,
            None => {
                let c = store.read_symbols(base + geo.slot_offset(slot), geo.block_symbols, geo.width)?;
                cache.slots.entry((l, g, slot)).or_insert(c)
            }
        };
        let child = plan.ancestor(j, l - 1);
        let per = plan.level(l - 1).block_symbols / b0;
        let start = (j - child * per) * b0;
        let slice = &content[start..start + b0];
        if slice.iter().any(|&s| s >= plan.diamond()) {
            return Err(Error::corrupt(format!("block {j} is ⋄ in its level-{l} payload")));
        }
        return Ok((slice.to_vec(), l));
    }
    Err(Error::corrupt(format!("block {j} is not stored at any level")))
}

/// Result of a local decode.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalRead {
    pub symbols: Vec<u8>,
    pub probes: ProbeCounts,
}

/// Recovers level-0 block `j` (zero-based). A block stored at level ℓ ≥ 1
/// costs exactly `k_0 + (ℓ−1) + 1 + b_ℓ + n_{ℓ−1} w` probes.
pub fn local_decode_block<S: BitRead + ?Sized>(store: &S, plan: &LevelPlan, j: usize) -> Result<LocalRead> {
    if j >= plan.block_count() {
        return Err(Error::OutOfRange(format!("block {j} of {}", plan.block_count())));
    }
    let before = store.counters();
    let (symbols, _) = decode_block_cached(store, plan, j, &mut ReadCache::default())?;
    Ok(LocalRead {
        symbols,
        probes: store.counters().since(before),
    })
}

/// Level at which block `j` is stored, found by the same probing walk.
pub fn stored_level<S: BitRead + ?Sized>(store: &S, plan: &LevelPlan, j: usize) -> Result<usize> {
    decode_block_cached(store, plan, j, &mut ReadCache::default()).map(|(_, l)| l)
}

/// Recovers `x[start .. start + len]` (zero-based).
pub fn local_decode_range<S: BitRead + ?Sized>(
    store: &S,
    plan: &LevelPlan,
    start: usize,
    len: usize,
) -> Result<LocalRead> {
    check_range(plan, start, len)?;
    let before = store.counters();
    let b0 = plan.block_len();
    let mut cache = ReadCache::default();
    let mut symbols = Vec::with_capacity(len);
    if len > 0 {
        for j in start / b0..=(start + len - 1) / b0 {
            let (block, _) = decode_block_cached(store, plan, j, &mut cache)?;
            let lo = start.max(j * b0) - j * b0;
            let hi = (start + len).min((j + 1) * b0) - j * b0;
            symbols.extend_from_slice(&block[lo..hi]);
        }
    }
    Ok(LocalRead {
        symbols,
        probes: store.counters().since(before),
    })
}

fn check_range(plan: &LevelPlan, start: usize, len: usize) -> Result<()> {
    match start.checked_add(len) {
        Some(end) if end <= plan.n() => Ok(()),
        _ => Err(Error::OutOfRange(format!(
            "range [{start}, {start}+{len}) outside message of {} symbols",
            plan.n()
        ))),
    }
}

/// Lazily read view of the old codeword along one ancestor chain.
struct OldChain<'a, S: ?Sized> {
    store: &'a S,
    plan: &'a LevelPlan,
    addr: LocalAddress,
    words: Vec<Option<BigUint>>,
    psis: Vec<Option<PsiWord>>,
    contents: Vec<Option<Option<Vec<u8>>>>,
}

impl<'a, S: BitRead + ?Sized> OldChain<'a, S> {
    fn new(store: &'a S, plan: &'a LevelPlan, block: usize) -> Self {
        let levels = plan.max_level() + 1;
        OldChain {
            store,
            plan,
            addr: LocalAddress::new(plan, block),
            words: vec![None; levels],
            psis: vec![None; levels],
            contents: vec![None; levels],
        }
    }

    fn word_offset(&self, l: usize) -> usize {
        self.plan.level(l).word_offset(self.addr.groups[l])
    }

    fn word(&mut self, l: usize) -> Result<&BigUint> {
        if self.words[l].is_none() {
            let lv = self.plan.level(l);
            let w = self.store.read_biguint(self.word_offset(l), lv.code_len)?;
            self.words[l] = Some(w);
        }
        Ok(self.words[l].as_ref().expect("just read"))
    }

    /// Parsed ψ of the level-ℓ ancestor (its word must be nonzero).
    fn psi(&mut self, l: usize) -> Result<&PsiWord> {
        if self.psis[l].is_none() {
            let len = self.plan.level(l).code_len;
            let word = self.word(l)?.clone();
            let mut sink = BitSink::new();
            sink.push_biguint(len, &word);
            let parsed = psi_read(&sink.into_metered(), 0, &self.plan.psi_geometry(l))?;
            self.psis[l] = Some(parsed);
        }
        Ok(self.psis[l].as_ref().expect("just parsed"))
    }

    /// Content of the level-ℓ ancestor after pass ℓ; `None` when it was
    /// stored at or below level ℓ.
    fn content(&mut self, l: usize) -> Result<Option<Vec<u8>>> {
        if let Some(c) = &self.contents[l] {
            return Ok(c.clone());
        }
        let c = if !self.word(l)?.is_zero() {
            None
        } else {
            if l == self.plan.max_level() {
                return Err(Error::corrupt("ancestor chain is never stored"));
            }
            let r = self.addr.positions[l + 1];
            let child_symbols = self.plan.level(l).block_symbols;
            let from_parent = if self.word(l + 1)?.is_zero() {
                self.content(l + 1)?
                    .map(|p| p[r * child_symbols..(r + 1) * child_symbols].to_vec())
            } else {
                self.psi(l + 1)?.child(r).map(<[u8]>::to_vec)
            };
            match from_parent {
                Some(v) => Some(v),
                None => return Err(Error::corrupt("zero word with no stored content above")),
            }
        };
        self.contents[l] = Some(c.clone());
        Ok(c)
    }

    /// Contents after pass ℓ−1 of every child of the level-ℓ ancestor.
    fn children(&mut self, l: usize) -> Result<Vec<Option<Vec<u8>>>> {
        if !self.word(l)?.is_zero() {
            return Ok(self.psi(l)?.children());
        }
        let content = self.content(l)?.expect("zero word means live content");
        let diamond = self.plan.diamond();
        Ok(content
            .chunks(self.plan.level(l - 1).block_symbols)
            .map(|c| (!c.iter().all(|&s| s == diamond)).then(|| c.to_vec()))
            .collect())
    }
}

struct PendingWrite {
    offset: usize,
    len: usize,
    old: BigUint,
    new: BigUint,
}

fn sink_value(sink: BitSink) -> BigUint {
    let (bytes, bits) = sink.into_parts();
    if bits == 0 {
        return BigUint::zero();
    }
    BigUint::from_bytes_be(&bytes) >> (bytes.len() * 8 - bits)
}

/// Writes only the span of bits where `old` and `new` differ.
fn apply_write<S: BitWrite + ?Sized>(store: &mut S, w: &PendingWrite) -> Result<()> {
    let diff = &w.old ^ &w.new;
    if diff.is_zero() {
        return Ok(());
    }
    let hi = diff.bits() as usize - 1;
    let lo = diff.trailing_zeros().expect("nonzero") as usize;
    let span = hi - lo + 1;
    let mask = (BigUint::from(1u8) << span) - 1u8;
    let value = (&w.new >> lo) & mask;
    store.write_biguint(w.offset + (w.len - 1 - hi), span, &value)
}

/// Replaces level-0 block `j` with `new_block` in place. On
/// `EncodingIncomplete` the codeword is left untouched.
pub fn local_update_block<S: BitWrite + ?Sized>(
    store: &mut S,
    plan: &LevelPlan,
    j: usize,
    new_block: &[u8],
) -> Result<ProbeCounts> {
    if j >= plan.block_count() {
        return Err(Error::OutOfRange(format!("block {j} of {}", plan.block_count())));
    }
    if new_block.len() != plan.block_len() {
        return Err(Error::InvalidArgument("replacement block has the wrong length".into()));
    }
    if new_block.iter().any(|&s| s >= plan.diamond()) {
        return Err(Error::InvalidArgument("replacement symbol outside the alphabet".into()));
    }
    let before = store.counters();
    let writes = plan_update(&*store, plan, j, new_block)?;
    for w in &writes {
        apply_write(store, w)?;
    }
    Ok(store.counters().since(before))
}

fn plan_update<S: BitRead + ?Sized>(
    store: &S,
    plan: &LevelPlan,
    j: usize,
    new_block: &[u8],
) -> Result<Vec<PendingWrite>> {
    let mut old = OldChain::new(store, plan, j);
    let mut writes = Vec::new();

    let (word0, compressed) = plan.level0().encode(new_block);
    let mut new_content = (!compressed).then(|| new_block.to_vec());
    writes.push(PendingWrite {
        offset: old.word_offset(0),
        len: plan.level(0).code_len,
        old: old.word(0)?.clone(),
        new: word0,
    });
    if old.content(0)? == new_content {
        return Ok(writes);
    }
    let diamond = plan.diamond();
    for l in 1..=plan.max_level() {
        let lv = plan.level(l);
        let mut kids = old.children(l)?;
        kids[old.addr.positions[l]] = new_content.take();
        let weight = kids.iter().flatten().count();
        let new_word = if weight <= lv.threshold {
            let refs: Vec<Option<&[u8]>> = kids.iter().map(|c| c.as_deref()).collect();
            let mut sink = BitSink::new();
            psi_encode_children(&refs, &plan.psi_geometry(l), &mut sink)?;
            sink_value(sink)
        } else {
            let child_symbols = plan.level(l - 1).block_symbols;
            let mut content = Vec::with_capacity(lv.block_symbols);
            for k in &kids {
                match k {
                    Some(c) => content.extend_from_slice(c),
                    None => content.extend(std::iter::repeat_n(diamond, child_symbols)),
                }
            }
            new_content = Some(content);
            BigUint::zero()
        };
        writes.push(PendingWrite {
            offset: old.word_offset(l),
            len: lv.code_len,
            old: old.word(l)?.clone(),
            new: new_word,
        });
        if old.content(l)? == new_content {
            return Ok(writes);
        }
    }
    if new_content.is_some() {
        return Err(Error::incomplete());
    }
    Ok(writes)
}

/// Replaces `x[start .. start + data.len()]`, block by block. Boundary
/// blocks are first decoded locally so their untouched symbols survive.
pub fn local_update_range<S: BitWrite + ?Sized>(
    store: &mut S,
    plan: &LevelPlan,
    start: usize,
    data: &[u8],
) -> Result<ProbeCounts> {
    check_range(plan, start, data.len())?;
    let before = store.counters();
    let b0 = plan.block_len();
    if !data.is_empty() {
        for j in start / b0..=(start + data.len() - 1) / b0 {
            let lo = start.max(j * b0);
            let hi = (start + data.len()).min((j + 1) * b0);
            let block = if hi - lo == b0 {
                data[lo - start..hi - start].to_vec()
            } else {
                let mut block = local_decode_block(&*store, plan, j)?.symbols;
                block[lo - j * b0..hi - j * b0].copy_from_slice(&data[lo - start..hi - start]);
                block
            };
            local_update_block(store, plan, j, &block)?;
        }
    }
    Ok(store.counters().since(before))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumcode::{Ratio, SourceModel};
    use crate::multilevel::{encode, make_plan, MultilevelConfig};
    use crate::ProbeMeteredBits;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn r(s: &str) -> Ratio {
        s.parse().unwrap()
    }

    fn toy(n: usize) -> (SourceModel, LevelPlan) {
        let m = SourceModel::new(&[0.5, 0.5]).unwrap();
        let plan = make_plan(&m, n, &MultilevelConfig::new(r("0.5")).with_block_len(8)).unwrap();
        (m, plan)
    }

    /// Samples messages with a controllable share of all-ones blocks so that
    /// every level gets exercised.
    fn spiky(rng: &mut ChaCha8Rng, m: &SourceModel, n: usize, rate: f64) -> Vec<u8> {
        let mut x = m.sample(rng, n);
        for chunk in x.chunks_mut(8) {
            if rng.gen_bool(rate) {
                chunk.fill(1);
            }
        }
        x
    }

    fn encode_ok(x: &[u8], plan: &LevelPlan) -> Option<ProbeMeteredBits> {
        encode(x, plan).ok().map(|(cw, _)| cw)
    }

    #[test]
    fn probe_formula_per_level() {
        let (m, plan) = toy(1 << 12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut seen = vec![false; plan.max_level() + 1];
        for _ in 0..50 {
            let x = spiky(&mut rng, &m, 1 << 12, 0.12);
            let Some(cw) = encode_ok(&x, &plan) else { continue };
            for j in 0..plan.block_count() {
                let level = stored_level(&cw, &plan, j).unwrap();
                cw.reset_counters();
                let got = local_decode_block(&cw, &plan, j).unwrap();
                assert_eq!(got.symbols, x[j * 8..(j + 1) * 8]);
                let k0 = plan.level0().code_len() as u64;
                let expect = if level == 0 {
                    k0
                } else {
                    let lv = plan.level(level);
                    k0 + level as u64 + lv.fanout as u64 + (plan.level(level - 1).block_symbols * plan.symbol_width()) as u64
                };
                assert_eq!(got.probes.reads, expect);
                assert_eq!(got.probes.writes, 0);
                seen[level] = true;
            }
        }
        assert!(seen.iter().all(|&s| s), "{seen:?}");
    }

    #[test]
    fn range_decode_matches_message() {
        let (m, plan) = toy(1 << 12);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let x = spiky(&mut rng, &m, 1 << 12, 0.1);
            let Some(cw) = encode_ok(&x, &plan) else { continue };
            for _ in 0..50 {
                let s = rng.gen_range(0..300);
                let i = rng.gen_range(0..=(1 << 12) - s);
                let got = local_decode_range(&cw, &plan, i, s).unwrap();
                assert_eq!(got.symbols, x[i..i + s]);
            }
            assert_eq!(local_decode_range(&cw, &plan, 0, 1 << 12).unwrap().symbols, x);
        }
    }

    #[test]
    fn typical_range_costs_k0_per_block() {
        let (_, plan) = toy(1 << 12);
        let x: Vec<u8> = (0..1 << 12).map(|i| (i % 2) as u8).collect();
        let cw = encode_ok(&x, &plan).unwrap();
        let k0 = plan.level0().code_len() as u64;
        assert_eq!(local_decode_range(&cw, &plan, 0, 80).unwrap().probes.reads, 10 * k0);
        assert_eq!(local_decode_range(&cw, &plan, 3, 80).unwrap().probes.reads, 11 * k0);
        assert!(local_decode_range(&cw, &plan, 4090, 10).is_err());
    }

    #[test]
    fn typical_to_typical_touches_only_level0_word() {
        let (_, plan) = toy(1 << 12);
        let x: Vec<u8> = (0..1 << 12).map(|i| (i % 2) as u8).collect();
        let mut cw = encode_ok(&x, &plan).unwrap();
        cw.reset_counters();
        let p = local_update_block(&mut cw, &plan, 5, &[1, 1, 0, 0, 1, 0, 1, 0]).unwrap();
        let k0 = plan.level0().code_len() as u64;
        assert_eq!(p.reads, k0);
        assert!(p.writes <= k0);
    }

    #[test]
    fn golden_update_equivalence() {
        let (m, plan) = toy(1 << 12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut checked = 0;
        while checked < 1000 {
            let mut x = spiky(&mut rng, &m, 1 << 12, 0.08);
            let Some(mut cw) = encode_ok(&x, &plan) else { continue };
            for _ in 0..20 {
                let j = rng.gen_range(0..plan.block_count());
                let new = if rng.gen_bool(0.3) { vec![1u8; 8] } else { m.sample(&mut rng, 8) };
                let mut y = x.clone();
                y[j * 8..(j + 1) * 8].copy_from_slice(&new);
                let snapshot = cw.clone();
                match (local_update_block(&mut cw, &plan, j, &new), encode(&y, &plan)) {
                    (Ok(_), Ok((fresh, _))) => {
                        assert_eq!(cw, fresh);
                        x = y;
                        checked += 1;
                    }
                    (Err(Error::EncodingIncomplete { .. }), Err(Error::EncodingIncomplete { .. })) => {
                        assert_eq!(cw, snapshot);
                    }
                    (a, b) => panic!("update {:?} vs encode {:?}", a.err(), b.err()),
                }
            }
        }
    }

    #[test]
    fn golden_range_update_equivalence() {
        let (m, plan) = toy(1 << 12);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut checked = 0;
        while checked < 300 {
            let mut x = spiky(&mut rng, &m, 1 << 12, 0.08);
            let Some(mut cw) = encode_ok(&x, &plan) else { continue };
            for _ in 0..10 {
                let s = rng.gen_range(1..40);
                let i = rng.gen_range(0..=(1 << 12) - s);
                let data = if rng.gen_bool(0.3) { vec![1u8; s] } else { m.sample(&mut rng, s) };
                let mut y = x.clone();
                y[i..i + s].copy_from_slice(&data);
                match local_update_range(&mut cw, &plan, i, &data) {
                    Ok(_) => {
                        let (fresh, _) = encode(&y, &plan).unwrap();
                        assert_eq!(cw, fresh);
                        x = y;
                        checked += 1;
                    }
                    Err(Error::EncodingIncomplete { .. }) => break,
                    Err(e) => panic!("{e}"),
                }
            }
        }
    }

    #[test]
    fn ragged_tail_updates() {
        let m = SourceModel::new(&[0.5, 0.5]).unwrap();
        let n = 1000;
        let plan = make_plan(&m, n, &MultilevelConfig::new(r("0.5")).with_block_len(8)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut x = spiky(&mut rng, &m, n, 0.05);
        let Some(mut cw) = encode_ok(&x, &plan) else { return };
        for _ in 0..200 {
            let s = rng.gen_range(1..20);
            let i = rng.gen_range(0..=n - s);
            let data = m.sample(&mut rng, s);
            let mut y = x.clone();
            y[i..i + s].copy_from_slice(&data);
            if local_update_range(&mut cw, &plan, i, &data).is_ok() {
                assert_eq!(cw, encode(&y, &plan).unwrap().0);
                x = y;
            } else {
                break;
            }
        }
        assert!(local_update_range(&mut cw, &plan, n - 1, &[0, 0]).is_err());
    }
}
