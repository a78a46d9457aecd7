//! Level-0 fixed-length subcodes and the LZ78 coder behind the universal one.

use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bitstore::{BitRead, BitSink};
use crate::enumcode::{ceil_log2, ceil_log2_big, Ratio, SourceModel, TypicalIndexer, TypicalSetSpec};
use crate::error::{Error, Result};

/// One LZ78 phrase: a pointer to an earlier phrase (0 is the empty phrase)
/// and the symbol that extends it. Only the final phrase may lack a symbol.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Phrase {
    pub pointer: u32,
    pub symbol: Option<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lz78Codeword {
    pub phrases: Vec<Phrase>,
    pub alphabet: usize,
}

impl Lz78Codeword {
    /// `ℓ_LZ`: phrase `t` (1-based) spends `⌈log2 t⌉` pointer bits plus a
    /// `⌈log2 |X|⌉`-bit symbol when present.
    pub fn bit_len(&self) -> usize {
        let sym = ceil_log2(self.alphabet as u64);
        self.phrases
            .iter()
            .enumerate()
            .map(|(i, p)| ceil_log2(i as u64 + 1) + if p.symbol.is_some() { sym } else { 0 })
            .sum()
    }

    pub fn write_to(&self, sink: &mut BitSink) {
        let sym = ceil_log2(self.alphabet as u64);
        for (i, p) in self.phrases.iter().enumerate() {
            sink.push_bits(ceil_log2(i as u64 + 1), p.pointer as u64);
            if let Some(s) = p.symbol {
                sink.push_bits(sym, s as u64);
            }
        }
    }

    /// Parses a phrase stream that expands to exactly `n_symbols` symbols,
    /// pulling bits from `next(width)`. Returns the decoded symbols.
    fn parse_stream(
        alphabet: usize,
        n_symbols: usize,
        mut next: impl FnMut(usize) -> Result<u64>,
    ) -> Result<Vec<u8>> {
        let sym = ceil_log2(alphabet as u64);
        // Each phrase is stored as (parent, last symbol, length).
        let mut dict: Vec<(u32, u8, u32)> = vec![(0, 0, 0)];
        let mut out = Vec::with_capacity(n_symbols);
        while out.len() < n_symbols {
            let t = dict.len() as u64;
            let ptr = next(ceil_log2(t))?;
            if ptr >= t {
                return Err(Error::MalformedStream(format!(
                    "pointer {ptr} in phrase {t} refers past the dictionary"
                )));
            }
            let ptr = ptr as u32;
            let plen = dict[ptr as usize].2 as usize;
            let start = out.len();
            expand(&dict, ptr, &mut out);
            if start + plen == n_symbols {
                if ptr == 0 {
                    return Err(Error::MalformedStream("empty final phrase".into()));
                }
                break;
            }
            let s = next(sym)?;
            if s >= alphabet as u64 {
                return Err(Error::MalformedStream(format!("symbol {s} outside alphabet")));
            }
            if start + plen + 1 > n_symbols {
                return Err(Error::MalformedStream("phrase overruns the symbol count".into()));
            }
            out.push(s as u8);
            dict.push((ptr, s as u8, plen as u32 + 1));
        }
        if out.len() != n_symbols {
            return Err(Error::MalformedStream("phrase overruns the symbol count".into()));
        }
        Ok(out)
    }
}

fn expand(dict: &[(u32, u8, u32)], mut id: u32, out: &mut Vec<u8>) {
    let len = dict[id as usize].2 as usize;
    let start = out.len();
    out.resize(start + len, 0);
    let mut pos = start + len;
    while id != 0 {
        let (parent, s, _) = dict[id as usize];
        pos -= 1;
        out[pos] = s;
        id = parent;
    }
}

/// Standard LZ78 parse. A trailing match that ends exactly at the input end
/// is emitted as a pointer-only phrase.
pub fn lz78_encode(x: &[u8], alphabet: usize) -> Lz78Codeword {
    assert!(!x.is_empty(), "LZ78 input must be nonempty");
    // children[node * q + a] is the id of node extended by a, 0 if absent.
    let q = alphabet;
    let mut children: Vec<u32> = vec![0; q];
    let mut phrases = Vec::new();
    let mut node = 0u32;
    for &a in x {
        let slot = node as usize * q + a as usize;
        let child = children[slot];
        if child != 0 {
            node = child;
        } else {
            phrases.push(Phrase {
                pointer: node,
                symbol: Some(a),
            });
            let id = phrases.len() as u32;
            children[slot] = id;
            children.resize(children.len() + q, 0);
            node = 0;
        }
    }
    if node != 0 {
        phrases.push(Phrase {
            pointer: node,
            symbol: None,
        });
    }
    Lz78Codeword { phrases, alphabet }
}

/// `ℓ_LZ(x)` without materializing the phrase list.
pub fn lz78_len(x: &[u8], alphabet: usize) -> usize {
    lz78_encode(x, alphabet).bit_len()
}

pub fn lz78_decode(cw: &Lz78Codeword, n_symbols: usize) -> Result<Vec<u8>> {
    let mut dict: Vec<(u32, u8, u32)> = vec![(0, 0, 0)];
    let mut out = Vec::with_capacity(n_symbols);
    for (i, p) in cw.phrases.iter().enumerate() {
        if p.pointer as usize >= dict.len() {
            return Err(Error::MalformedStream(format!(
                "pointer {} in phrase {} refers past the dictionary",
                p.pointer,
                i + 1
            )));
        }
        expand(&dict, p.pointer, &mut out);
        match p.symbol {
            Some(s) => {
                if s as usize >= cw.alphabet {
                    return Err(Error::MalformedStream(format!("symbol {s} outside alphabet")));
                }
                out.push(s);
                let len = dict[p.pointer as usize].2 + 1;
                dict.push((p.pointer, s, len));
            }
            None if i + 1 != cw.phrases.len() => {
                return Err(Error::MalformedStream("pointer-only phrase before the end".into()));
            }
            None => {}
        }
    }
    if out.len() != n_symbols {
        return Err(Error::MalformedStream(format!(
            "stream expands to {} symbols, expected {n_symbols}",
            out.len()
        )));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level0Mode {
    TypicalSet,
    Lz78Fixed,
}

/// Fixed-length code for level-0 blocks. The all-zero word is reserved for
/// blocks that are not compressible at level 0.
#[derive(Clone, Debug)]
pub struct Level0Codec {
    mode: Level0Mode,
    block_len: usize,
    code_len: usize,
    alphabet: usize,
    indexer: Option<Arc<TypicalIndexer>>,
}

impl Level0Codec {
    /// Typical-set codec with `k_0 = ⌈(H + ε) b_0⌉`.
    pub fn typical(model: &SourceModel, block_len: usize, epsilon: Ratio) -> Result<Self> {
        let code_len = ((model.entropy() + epsilon.to_f64()) * block_len as f64).ceil() as usize;
        Self::typical_with_code_len(model, block_len, epsilon, code_len)
    }

    /// Typical-set codec with an explicit word length.
    pub fn typical_with_code_len(
        model: &SourceModel,
        block_len: usize,
        epsilon: Ratio,
        code_len: usize,
    ) -> Result<Self> {
        let spec = TypicalSetSpec::new(model, block_len, epsilon)?;
        let indexer = TypicalIndexer::new(spec);
        let needed = ceil_log2_big(&(indexer.count() + 1u32));
        if needed > code_len {
            return Err(Error::PlanInfeasible(format!(
                "|T|+1 needs {needed} bits but k_0 = {code_len}"
            )));
        }
        Ok(Level0Codec {
            mode: Level0Mode::TypicalSet,
            block_len,
            code_len,
            alphabet: model.alphabet_size(),
            indexer: Some(indexer),
        })
    }

    /// LZ78-derived codec: a block is compressible when `ℓ_LZ <= k_0 - 1`.
    pub fn lz78(alphabet: usize, block_len: usize, code_len: usize) -> Result<Self> {
        if code_len < 2 {
            return Err(Error::PlanInfeasible("LZ78 word needs at least 2 bits".into()));
        }
        Ok(Level0Codec {
            mode: Level0Mode::Lz78Fixed,
            block_len,
            code_len,
            alphabet,
            indexer: None,
        })
    }

    pub fn mode(&self) -> Level0Mode {
        self.mode
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn code_len(&self) -> usize {
        self.code_len
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet
    }

    pub fn indexer(&self) -> Option<&Arc<TypicalIndexer>> {
        self.indexer.as_ref()
    }

    /// Returns the `k_0`-bit word as an integer and whether the block was
    /// compressed. Atypical blocks map to zero.
    pub fn encode(&self, block: &[u8]) -> (BigUint, bool) {
        assert_eq!(block.len(), self.block_len);
        match self.mode {
            Level0Mode::TypicalSet => {
                let ix = self.indexer.as_ref().expect("typical codec has an indexer");
                match ix.rank(block) {
                    Ok(r) => (r + 1u32, true),
                    Err(_) => (BigUint::zero(), false),
                }
            }
            Level0Mode::Lz78Fixed => {
                let cw = lz78_encode(block, self.alphabet);
                let len = cw.bit_len();
                if len + 1 > self.code_len {
                    return (BigUint::zero(), false);
                }
                let mut sink = BitSink::new();
                sink.push_bit(true);
                cw.write_to(&mut sink);
                sink.push_zeros(self.code_len - 1 - len);
                let (bytes, bits) = sink.into_parts();
                let v = BigUint::from_bytes_be(&bytes) >> (bytes.len() * 8 - bits);
                (v, true)
            }
        }
    }

    /// True when the block would be stored at level 0.
    pub fn compresses(&self, block: &[u8]) -> bool {
        match self.mode {
            Level0Mode::TypicalSet => self.indexer.as_ref().expect("indexer").spec().is_typical(block),
            Level0Mode::Lz78Fixed => lz78_len(block, self.alphabet) < self.code_len,
        }
    }

    /// Inverse of [`encode`](Self::encode) on the compressed branch; `None`
    /// for the reserved all-zero word.
    pub fn decode(&self, word: &BigUint) -> Result<Option<Vec<u8>>> {
        if word.is_zero() {
            return Ok(None);
        }
        if word.bits() as usize > self.code_len {
            return Err(Error::corrupt("level-0 word wider than k_0"));
        }
        match self.mode {
            Level0Mode::TypicalSet => {
                let ix = self.indexer.as_ref().expect("indexer");
                let idx = word - BigUint::one();
                if &idx >= ix.count() {
                    return Err(Error::corrupt(format!(
                        "level-0 word {word} exceeds typical set size {}",
                        ix.count()
                    )));
                }
                ix.unrank(&idx).map(Some)
            }
            Level0Mode::Lz78Fixed => {
                let k = self.code_len as u64;
                if !word.bit(k - 1) {
                    return Err(Error::corrupt("LZ78 word without leading flag"));
                }
                let mut pos = 1u64;
                let decoded = Lz78Codeword::parse_stream(self.alphabet, self.block_len, |w| {
                    if pos + w as u64 > k {
                        return Err(Error::MalformedStream("phrase stream runs past k_0".into()));
                    }
                    let mut v = 0u64;
                    for _ in 0..w {
                        v = (v << 1) | word.bit(k - 1 - pos) as u64;
                        pos += 1;
                    }
                    Ok(v)
                });
                decoded.map(Some).map_err(|e| Error::corrupt(e.to_string()))
            }
        }
    }

    /// Reads and decodes the word at `offset`, probing exactly `k_0` bits.
    pub fn decode_at<S: BitRead + ?Sized>(&self, store: &S, offset: usize) -> Result<Option<Vec<u8>>> {
        let word = store.read_biguint(offset, self.code_len)?;
        self.decode(&word)
    }
}

/// `k_0 = ⌈b_0 (H + ξ)⌉` with `ξ = (2 + max_a log2 1/p(a)) ε_0 + c·log2 log2 b_0 / log2 b_0`.
pub fn universal_code_len_formula(model: &SourceModel, block_len: usize, epsilon: Ratio, c: f64) -> usize {
    let b = block_len as f64;
    let max_log = model.max_inverse_probability().log2();
    let xi = (2.0 + max_log) * epsilon.to_f64() + c * b.log2().log2() / b.log2();
    (b * (model.entropy() + xi)).ceil() as usize
}

/// Smallest `k_0` such that the Monte Carlo estimate of `Pr[ℓ_LZ >= k_0]`
/// over `samples` blocks drawn from `model` is at most `ε_0^4`.
pub fn calibrate_lz_code_len(
    model: &SourceModel,
    block_len: usize,
    epsilon: Ratio,
    samples: usize,
    seed: u64,
) -> usize {
    assert!(samples > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lens: Vec<usize> = (0..samples)
        .map(|_| lz78_len(&model.sample(&mut rng, block_len), model.alphabet_size()))
        .collect();
    lens.sort_unstable_by(|a, b| b.cmp(a));
    let allowed = (epsilon.to_f64().powi(4) * samples as f64).floor() as usize;
    // At most `allowed` samples may reach k_0, so k_0 exceeds the next one.
    match lens.get(allowed) {
        Some(&l) => (l + 1).max(2),
        None => 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn bits(s: &str) -> Vec<u8> {
        s.bytes().map(|b| b - b'0').collect()
    }

    #[test]
    fn lz78_parse_of_000100() {
        let cw = lz78_encode(&bits("000100"), 2);
        let expect = vec![
            Phrase { pointer: 0, symbol: Some(0) },
            Phrase { pointer: 1, symbol: Some(0) },
            Phrase { pointer: 0, symbol: Some(1) },
            Phrase { pointer: 2, symbol: None },
        ];
        assert_eq!(cw.phrases, expect);
        assert_eq!(cw.bit_len(), 8);
        assert_eq!(lz78_decode(&cw, 6).unwrap(), bits("000100"));
    }

    #[test]
    fn lz78_single_symbol() {
        let cw = lz78_encode(&[1], 2);
        assert_eq!(cw.phrases, vec![Phrase { pointer: 0, symbol: Some(1) }]);
        assert_eq!(cw.bit_len(), 1);
    }

    #[test]
    fn lz78_dangling_pointer() {
        let cw = Lz78Codeword {
            phrases: vec![Phrase { pointer: 3, symbol: Some(0) }],
            alphabet: 2,
        };
        assert!(matches!(lz78_decode(&cw, 1), Err(Error::MalformedStream(_))));
    }

    #[test]
    fn lz78_random_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let q = rng.gen_range(2..=5);
            let n = rng.gen_range(1..=64);
            let x: Vec<u8> = (0..n).map(|_| rng.gen_range(0..q) as u8).collect();
            let cw = lz78_encode(&x, q);
            assert_eq!(lz78_decode(&cw, n).unwrap(), x);
            let mut sink = BitSink::new();
            cw.write_to(&mut sink);
            assert_eq!(sink.len(), cw.bit_len());
        }
    }

    #[test]
    fn lz78_doubling_growth_is_sane() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.gen_range(8..200);
            let x: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            let single = lz78_len(&x, 2);
            let doubled = lz78_len(&[x.clone(), x].concat(), 2);
            let slack = 4 * (ceil_log2(single as u64 + 1) + 1) * 8;
            assert!(doubled <= 2 * single + slack, "{doubled} vs {single}");
        }
    }

    fn toy_codec() -> Level0Codec {
        let m = SourceModel::new(&[0.5, 0.5]).unwrap();
        Level0Codec::typical(&m, 4, "0.5".parse().unwrap()).unwrap()
    }

    #[test]
    fn typical_codec_examples() {
        let c = toy_codec();
        assert_eq!(c.code_len(), 6);
        let (w, ok) = c.encode(&bits("0011"));
        assert!(ok);
        assert_eq!(w, BigUint::from(3u32));
        assert_eq!(c.decode(&w).unwrap(), Some(bits("0011")));
        let (w, ok) = c.encode(&bits("1111"));
        assert!(!ok);
        assert!(w.is_zero());
        assert_eq!(c.decode(&BigUint::zero()).unwrap(), None);
        assert!(matches!(c.decode(&BigUint::from(63u32)), Err(Error::CorruptCodeword(_))));
    }

    #[test]
    fn typical_codec_exhaustive_b10() {
        let m = SourceModel::new(&[0.3, 0.7]).unwrap();
        let c = Level0Codec::typical(&m, 10, "0.4".parse().unwrap()).unwrap();
        for v in 0u32..1024 {
            let x: Vec<u8> = (0..10).map(|i| ((v >> (9 - i)) & 1) as u8).collect();
            let (w, ok) = c.encode(&x);
            assert_eq!(ok, c.compresses(&x));
            if ok {
                assert!(!w.is_zero());
                assert!(w.bits() as usize <= c.code_len());
                assert_eq!(c.decode(&w).unwrap(), Some(x));
            } else {
                assert!(w.is_zero());
            }
        }
    }

    #[test]
    fn lz_codec_threshold() {
        let c = Level0Codec::lz78(2, 6, 8).unwrap();
        let (w, ok) = c.encode(&bits("000100"));
        assert!(!ok);
        assert!(w.is_zero());
        let c = Level0Codec::lz78(2, 6, 9).unwrap();
        let (w, ok) = c.encode(&bits("000100"));
        assert!(ok);
        assert!(w.bit(8));
        assert_eq!(c.decode(&w).unwrap(), Some(bits("000100")));
    }

    #[test]
    fn lz_codec_round_trip_and_reads_from_store() {
        let m = SourceModel::new(&[0.2, 0.8]).unwrap();
        let c = Level0Codec::lz78(2, 64, 60).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let x = m.sample(&mut rng, 64);
            let (w, ok) = c.encode(&x);
            if !ok {
                continue;
            }
            let mut sink = BitSink::new();
            sink.push_bits(3, 0b101);
            sink.push_biguint(c.code_len(), &w);
            let store = sink.into_metered();
            assert_eq!(c.decode_at(&store, 3).unwrap(), Some(x));
            assert_eq!(store.counters().reads, 60);
        }
    }

    #[test]
    fn calibration_is_a_tail_quantile() {
        let m = SourceModel::new(&[0.2, 0.8]).unwrap();
        let eps: Ratio = "0.4".parse().unwrap();
        let k = calibrate_lz_code_len(&m, 200, eps, 5_000, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let over = (0..5_000)
            .filter(|_| lz78_len(&m.sample(&mut rng, 200), 2) >= k)
            .count();
        assert!(over as f64 <= 0.4f64.powi(4) * 5_000.0);
        let formula = universal_code_len_formula(&m, 200, eps, 1.0);
        assert!(formula > 0);
    }

    proptest! {
        #[test]
        fn lz_words_never_zero(x in proptest::collection::vec(0u8..3, 12)) {
            let c = Level0Codec::lz78(3, 12, 40).unwrap();
            let (w, ok) = c.encode(&x);
            prop_assert_eq!(ok, !w.is_zero());
            if ok {
                prop_assert_eq!(c.decode(&w).unwrap(), Some(x));
            }
        }
    }
}
