//! Counting, ranking and unranking.
//!
//! Two engines live here:
//!
//! * typical-set indexing: the lexicographic position of an ε-typical
//!   sequence among all ε-typical sequences of the same length, and back;
//! * binomial offset codes: the lexicographic position of a `t`-bit vector
//!   among the vectors of the same weight (used by the rank dictionary).
//!
//! Binary alphabets use an incremental partial-sum walk over binomial
//! coefficients, which needs O(b) big-integer operations per rank or unrank
//! and no table. Larger alphabets use a memoized completion-count table keyed
//! by the running composition.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;

use crate::error::{Error, Result};

/// Fixed denominator of the quantized probability mass function.
pub const PMF_DENOMINATOR: u64 = 1 << 32;

/// A memoryless source over `{0, .., q-1}`.
///
/// The pmf is held as integer numerators over [`PMF_DENOMINATOR`] so that
/// every width derived from it is reproducible bit for bit.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceModel {
    numerators: Vec<u64>,
    pmf: Vec<f64>,
    entropy: f64,
}

impl SourceModel {
    /// Quantizes `pmf` onto the fixed denominator. The input must sum to one
    /// (within 1e-9) and have strictly positive entries.
    pub fn new(pmf: &[f64]) -> Result<Self> {
        if pmf.len() < 2 || pmf.len() > 255 {
            return Err(Error::InvalidArgument(format!(
                "alphabet size {} outside 2..=255",
                pmf.len()
            )));
        }
        if pmf.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidArgument("pmf entries must be positive".into()));
        }
        let sum: f64 = pmf.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("pmf sums to {sum}, not 1")));
        }
        let mut nums: Vec<u64> = pmf
            .iter()
            .map(|&p| ((p * PMF_DENOMINATOR as f64).round() as u64).max(1))
            .collect();
        let total: u64 = nums.iter().sum();
        let (imax, _) = nums
            .iter()
            .enumerate()
            .max_by_key(|&(i, v)| (*v, std::cmp::Reverse(i)))
            .expect("nonempty");
        nums[imax] = nums[imax] + PMF_DENOMINATOR - total;
        Self::from_numerators(nums)
    }

    /// Builds a model from numerators that must sum to [`PMF_DENOMINATOR`].
    pub fn from_numerators(numerators: Vec<u64>) -> Result<Self> {
        if numerators.len() < 2 || numerators.len() > 255 {
            return Err(Error::InvalidArgument(format!(
                "alphabet size {} outside 2..=255",
                numerators.len()
            )));
        }
        if numerators.contains(&0) {
            return Err(Error::InvalidArgument("pmf numerators must be positive".into()));
        }
        if numerators.iter().sum::<u64>() != PMF_DENOMINATOR {
            return Err(Error::InvalidArgument("pmf numerators must sum to 2^32".into()));
        }
        let pmf: Vec<f64> = numerators
            .iter()
            .map(|&v| v as f64 / PMF_DENOMINATOR as f64)
            .collect();
        let entropy = pmf.iter().map(|&p| -p * p.log2()).sum();
        Ok(SourceModel {
            numerators,
            pmf,
            entropy,
        })
    }

    pub fn uniform(alphabet: usize) -> Result<Self> {
        Self::new(&vec![1.0 / alphabet as f64; alphabet])
    }

    pub fn alphabet_size(&self) -> usize {
        self.pmf.len()
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn numerators(&self) -> &[u64] {
        &self.numerators
    }

    /// Entropy in bits per symbol.
    pub fn entropy(&self) -> f64 {
        self.entropy
    }

    /// `max_a 1/p(a)`.
    pub fn max_inverse_probability(&self) -> f64 {
        self.pmf.iter().map(|p| 1.0 / p).fold(0.0, f64::max)
    }

    pub fn sample_symbol<R: Rng + ?Sized>(&self, rng: &mut R) -> u8 {
        let mut u = rng.gen_range(0..PMF_DENOMINATOR);
        for (a, &v) in self.numerators.iter().enumerate() {
            if u < v {
                return a as u8;
            }
            u -= v;
        }
        unreachable!("numerators sum to the denominator")
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<u8> {
        (0..n).map(|_| self.sample_symbol(rng)).collect()
    }
}

/// A positive rational, kept in lowest terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Ratio {
    num: u64,
    den: u64,
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 {
            return Err(Error::InvalidArgument("zero denominator".into()));
        }
        let g = num.gcd(&den).max(1);
        Ok(Ratio {
            num: num / g,
            den: den / g,
        })
    }

    pub fn num(&self) -> u64 {
        self.num
    }

    pub fn den(&self) -> u64 {
        self.den
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn halved(&self) -> Ratio {
        Ratio::new(self.num, self.den * 2).expect("nonzero")
    }

    /// `floor(self * x)`.
    pub fn floor_mul(&self, x: u64) -> u64 {
        (self.num as u128 * x as u128 / self.den as u128) as u64
    }

    /// `ceil(self * x)`.
    pub fn ceil_mul(&self, x: u64) -> u64 {
        (self.num as u128 * x as u128).div_ceil(self.den as u128) as u64
    }

    /// True when `0 < self < 1/2`.
    pub fn is_below_half(&self) -> bool {
        self.num > 0 && 2 * (self.num as u128) < self.den as u128
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Ratio {
    type Err = Error;

    /// Accepts `a/b` or a plain decimal such as `0.25`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("cannot parse rational from {s:?}"));
        let s = s.trim();
        if let Some((a, b)) = s.split_once('/') {
            let a = a.trim().parse().map_err(|_| bad())?;
            let b = b.trim().parse().map_err(|_| bad())?;
            return Ratio::new(a, b);
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if frac.len() > 9 || (int.is_empty() && frac.is_empty()) {
            return Err(bad());
        }
        let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
        let frac_v: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        let den = 10u64.pow(frac.len() as u32);
        Ratio::new(int * den + frac_v, den)
    }
}

/// Per-symbol count windows defining `T_ε^b`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypicalSetSpec {
    block_len: usize,
    epsilon: Ratio,
    lo: Vec<u64>,
    hi: Vec<u64>,
}

impl TypicalSetSpec {
    /// Windows `lo_a = ⌈b p(a)(1-ε)⌉`, `hi_a = ⌊b p(a)(1+ε)⌋` in exact
    /// arithmetic over the quantized pmf.
    pub fn new(model: &SourceModel, block_len: usize, epsilon: Ratio) -> Result<Self> {
        if epsilon.num == 0 || epsilon.num >= epsilon.den {
            return Err(Error::InvalidArgument(format!("epsilon {epsilon} outside (0,1)")));
        }
        if block_len == 0 {
            return Err(Error::InvalidArgument("block length must be positive".into()));
        }
        let b = block_len as u128;
        let (en, ed) = (epsilon.num as u128, epsilon.den as u128);
        let denom = PMF_DENOMINATOR as u128 * ed;
        let mut lo = Vec::with_capacity(model.alphabet_size());
        let mut hi = Vec::with_capacity(model.alphabet_size());
        for &p in model.numerators() {
            let p = p as u128;
            lo.push((b * p * (ed - en)).div_ceil(denom) as u64);
            hi.push((b * p * (ed + en) / denom) as u64);
        }
        Ok(TypicalSetSpec {
            block_len,
            epsilon,
            lo,
            hi,
        })
    }

    /// Builds a spec from explicit windows (testing and diagnostics).
    pub fn from_windows(block_len: usize, epsilon: Ratio, lo: Vec<u64>, hi: Vec<u64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        TypicalSetSpec {
            block_len,
            epsilon,
            lo,
            hi,
        }
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn alphabet_size(&self) -> usize {
        self.lo.len()
    }

    pub fn epsilon(&self) -> Ratio {
        self.epsilon
    }

    pub fn window(&self, symbol: usize) -> (u64, u64) {
        (self.lo[symbol], self.hi[symbol])
    }

    pub fn is_typical(&self, x: &[u8]) -> bool {
        if x.len() != self.block_len {
            return false;
        }
        let mut counts = vec![0u64; self.alphabet_size()];
        for &s in x {
            match counts.get_mut(s as usize) {
                Some(c) => *c += 1,
                None => return false,
            }
        }
        counts
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(c, (lo, hi))| lo <= c && c <= hi)
    }
}

/// Exact binomial coefficient.
pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 1..=k {
        acc *= n - k + i;
        acc /= i;
    }
    acc
}

/// Cursor over `C(r, k)` that moves one step in `r` or `k` with O(1)
/// small-integer multiplications. Values outside `0 <= k <= r` are zero.
#[derive(Clone, Debug)]
struct BinomCursor {
    r: i64,
    k: i64,
    val: BigUint,
}

impl BinomCursor {
    fn new(r: i64, k: i64) -> Self {
        BinomCursor {
            r,
            k,
            val: Self::direct(r, k),
        }
    }

    fn direct(r: i64, k: i64) -> BigUint {
        if r < 0 || k < 0 || k > r {
            BigUint::zero()
        } else {
            binomial(r as u64, k as u64)
        }
    }

    fn in_range(r: i64, k: i64) -> bool {
        r >= 0 && 0 <= k && k <= r
    }

    fn inc_k(&mut self) {
        let (r, k) = (self.r, self.k + 1);
        self.val = if !Self::in_range(r, k) {
            BigUint::zero()
        } else if self.val.is_zero() {
            Self::direct(r, k)
        } else {
            &self.val * (r - k + 1) as u64 / k as u64
        };
        self.k = k;
    }

    fn dec_k(&mut self) {
        let (r, k) = (self.r, self.k - 1);
        self.val = if !Self::in_range(r, k) {
            BigUint::zero()
        } else if self.val.is_zero() {
            Self::direct(r, k)
        } else {
            &self.val * (k + 1) as u64 / (r - k) as u64
        };
        self.k = k;
    }

    fn inc_r(&mut self) {
        let (r, k) = (self.r + 1, self.k);
        self.val = if !Self::in_range(r, k) {
            BigUint::zero()
        } else if self.val.is_zero() {
            Self::direct(r, k)
        } else {
            &self.val * r as u64 / (r - k) as u64
        };
        self.r = r;
    }

    fn dec_r(&mut self) {
        let (r, k) = (self.r - 1, self.k);
        self.val = if !Self::in_range(r, k) {
            BigUint::zero()
        } else if self.val.is_zero() {
            Self::direct(r, k)
        } else {
            &self.val * (r + 1 - k) as u64 / (r + 1) as u64
        };
        self.r = r;
    }
}

/// Running value of `Σ_{k=l}^{u} C(r, k)` with O(1) updates when the window
/// or the row moves by one.
#[derive(Clone, Debug)]
struct PartialBinomialSum {
    sum: BigUint,
    /// Tracks `C(r, l - 1)`.
    below: BinomCursor,
    /// Tracks `C(r, u)`.
    top: BinomCursor,
}

impl PartialBinomialSum {
    fn new(r: i64, l: i64, u: i64) -> Self {
        let mut sum = BigUint::zero();
        let (from, to) = (l.max(0), u.min(r));
        if from <= to {
            let mut c = BinomCursor::new(r, from);
            for _ in from..=to {
                sum += &c.val;
                c.inc_k();
            }
        }
        PartialBinomialSum {
            sum,
            below: BinomCursor::new(r, l - 1),
            top: BinomCursor::new(r, u),
        }
    }

    /// Window `[l, u] -> [l + 1, u + 1]`.
    fn shift_up(&mut self) {
        self.below.inc_k();
        self.top.inc_k();
        self.sum += &self.top.val;
        self.sum -= &self.below.val;
    }

    /// Window `[l, u] -> [l - 1, u - 1]`.
    fn shift_down(&mut self) {
        self.sum += &self.below.val;
        self.sum -= &self.top.val;
        self.below.dec_k();
        self.top.dec_k();
    }

    /// Row `r -> r + 1` (Pascal's rule).
    fn row_up(&mut self) {
        self.sum <<= 1;
        self.sum += &self.below.val;
        self.sum -= &self.top.val;
        self.below.inc_r();
        self.top.inc_r();
    }

    /// Row `r -> r - 1`.
    fn row_down(&mut self) {
        self.below.dec_r();
        self.top.dec_r();
        self.sum += &self.top.val;
        self.sum -= &self.below.val;
        self.sum >>= 1;
    }
}

#[derive(Debug)]
enum Engine {
    /// Binary alphabet; `min_ones..=max_ones` is the admissible weight range.
    Binary {
        min_ones: i64,
        max_ones: i64,
        first: Option<PartialBinomialSum>,
    },
    /// Completion counts keyed by the composition placed so far.
    Table { memo: Mutex<HashMap<Vec<u32>, BigUint>> },
}

/// Bijection between `T_ε^b` and `[0, |T_ε^b|)` in lexicographic order.
#[derive(Debug)]
pub struct TypicalIndexer {
    spec: TypicalSetSpec,
    count: BigUint,
    engine: Engine,
}

impl TypicalIndexer {
    /// Picks the partial-sum engine for binary alphabets and the memoized
    /// table otherwise.
    pub fn new(spec: TypicalSetSpec) -> Arc<Self> {
        if spec.alphabet_size() == 2 {
            Arc::new(Self::binary(spec))
        } else {
            Arc::new(Self::with_table(spec))
        }
    }

    /// Forces the memoized-table engine regardless of alphabet size.
    pub fn with_table(spec: TypicalSetSpec) -> Self {
        let mut ix = TypicalIndexer {
            spec,
            count: BigUint::zero(),
            engine: Engine::Table {
                memo: Mutex::new(HashMap::new()),
            },
        };
        let mut counts = vec![0u32; ix.spec.alphabet_size()];
        ix.count = ix.completions(&mut counts, 0);
        ix
    }

    fn binary(spec: TypicalSetSpec) -> Self {
        let b = spec.block_len() as i64;
        let (lo0, hi0) = spec.window(0);
        let (lo1, hi1) = spec.window(1);
        let min_ones = (lo1 as i64).max(b - hi0 as i64);
        let max_ones = (hi1 as i64).min(b - lo0 as i64);
        let (count, first) = if min_ones > max_ones {
            (BigUint::zero(), None)
        } else {
            let count = PartialBinomialSum::new(b, min_ones, max_ones).sum;
            (count, Some(PartialBinomialSum::new(b - 1, min_ones, max_ones)))
        };
        TypicalIndexer {
            spec,
            count,
            engine: Engine::Binary {
                min_ones,
                max_ones,
                first,
            },
        }
    }

    pub fn spec(&self) -> &TypicalSetSpec {
        &self.spec
    }

    /// `|T_ε^b|`.
    pub fn count(&self) -> &BigUint {
        &self.count
    }

    pub fn rank(&self, x: &[u8]) -> Result<BigUint> {
        if !self.spec.is_typical(x) {
            return Err(Error::NotTypical);
        }
        match &self.engine {
            Engine::Binary {
                min_ones, max_ones, ..
            } => Ok(binary_rank(x, *min_ones, *max_ones)),
            Engine::Table { .. } => Ok(self.table_rank(x)),
        }
    }

    pub fn unrank(&self, index: &BigUint) -> Result<Vec<u8>> {
        if index >= &self.count {
            return Err(Error::IndexOutOfRange {
                index: index.to_string(),
                size: self.count.to_string(),
            });
        }
        match &self.engine {
            Engine::Binary { first, .. } => {
                let first = first.clone().expect("nonempty set has a first row");
                Ok(binary_unrank(index.clone(), first, self.spec.block_len()))
            }
            Engine::Table { .. } => Ok(self.table_unrank(index.clone())),
        }
    }

    fn completions(&self, counts: &mut Vec<u32>, placed: usize) -> BigUint {
        let Engine::Table { memo } = &self.engine else {
            unreachable!("table engine only")
        };
        let mut memo = memo.lock().expect("poisoned");
        completions_rec(&self.spec, &mut memo, counts, placed)
    }

    fn table_rank(&self, x: &[u8]) -> BigUint {
        let q = self.spec.alphabet_size();
        let mut counts = vec![0u32; q];
        let mut rank = BigUint::zero();
        for (i, &s) in x.iter().enumerate() {
            for a in 0..s as usize {
                counts[a] += 1;
                rank += self.completions(&mut counts, i + 1);
                counts[a] -= 1;
            }
            counts[s as usize] += 1;
        }
        rank
    }

    fn table_unrank(&self, mut index: BigUint) -> Vec<u8> {
        let q = self.spec.alphabet_size();
        let mut counts = vec![0u32; q];
        let mut out = Vec::with_capacity(self.spec.block_len());
        for i in 0..self.spec.block_len() {
            for a in 0..q {
                counts[a] += 1;
                let n = self.completions(&mut counts, i + 1);
                if index < n {
                    out.push(a as u8);
                    break;
                }
                counts[a] -= 1;
                index -= n;
            }
        }
        out
    }
}

fn completions_rec(
    spec: &TypicalSetSpec,
    memo: &mut HashMap<Vec<u32>, BigUint>,
    counts: &mut Vec<u32>,
    placed: usize,
) -> BigUint {
    let remaining = (spec.block_len() - placed) as u64;
    let mut need = 0u64;
    let mut room = 0u64;
    for (a, &c) in counts.iter().enumerate() {
        let (lo, hi) = spec.window(a);
        let c = c as u64;
        if c > hi {
            return BigUint::zero();
        }
        need += lo.saturating_sub(c);
        room += (hi - c).min(remaining);
    }
    if need > remaining || room < remaining {
        return BigUint::zero();
    }
    if remaining == 0 {
        return BigUint::one();
    }
    if let Some(v) = memo.get(counts.as_slice()) {
        return v.clone();
    }
    let mut total = BigUint::zero();
    for a in 0..counts.len() {
        counts[a] += 1;
        total += completions_rec(spec, memo, counts, placed + 1);
        counts[a] -= 1;
    }
    memo.insert(counts.clone(), total.clone());
    total
}

fn binary_rank(x: &[u8], min_ones: i64, max_ones: i64) -> BigUint {
    let b = x.len();
    let ones: i64 = x.iter().map(|&s| s as i64).sum();
    // Walk from the last position backwards; at position i the window is
    // [min_ones - c_i, max_ones - c_i] over the remaining b - 1 - i slots,
    // where c_i counts the ones strictly before i.
    let mut c = ones - x[b - 1] as i64;
    let mut acc = PartialBinomialSum::new(0, min_ones - c, max_ones - c);
    let mut rank = BigUint::zero();
    for i in (0..b).rev() {
        if x[i] == 1 {
            rank += &acc.sum;
        }
        if i == 0 {
            break;
        }
        acc.row_up();
        if x[i - 1] == 1 {
            c -= 1;
            acc.shift_up();
        }
    }
    debug_assert_eq!(c, 0);
    rank
}

fn binary_unrank(mut index: BigUint, mut acc: PartialBinomialSum, b: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(b);
    for i in 0..b {
        if index < acc.sum {
            out.push(0);
        } else {
            index -= &acc.sum;
            out.push(1);
            acc.shift_down();
        }
        if i + 1 < b {
            acc.row_down();
        }
    }
    out
}

/// `|T_ε^b|`.
pub fn typical_count(spec: &TypicalSetSpec) -> BigUint {
    TypicalIndexer::new(spec.clone()).count().clone()
}

/// Zero-based lexicographic index of `x` in `T_ε^b`.
pub fn typical_rank(x: &[u8], spec: &TypicalSetSpec) -> Result<BigUint> {
    TypicalIndexer::new(spec.clone()).rank(x)
}

/// Inverse of [`typical_rank`].
pub fn typical_unrank(index: &BigUint, spec: &TypicalSetSpec) -> Result<Vec<u8>> {
    TypicalIndexer::new(spec.clone()).unrank(index)
}

/// Number of bits needed to write any value in `0..=max`.
pub fn bits_for(max: u64) -> usize {
    (u64::BITS - max.leading_zeros()) as usize
}

/// `⌈log2 x⌉` for `x >= 1`.
pub fn ceil_log2(x: u64) -> usize {
    assert!(x >= 1);
    bits_for(x - 1)
}

/// `⌈log2 x⌉` for a big integer `x >= 1`.
pub fn ceil_log2_big(x: &BigUint) -> usize {
    assert!(!x.is_zero());
    if x.is_one() {
        0
    } else {
        (x - 1u32).bits() as usize
    }
}

const BINOM_MAX: usize = 64;

fn small_binomials() -> &'static [[u64; BINOM_MAX + 1]; BINOM_MAX + 1] {
    use std::sync::OnceLock;
    static TABLE: OnceLock<Box<[[u64; BINOM_MAX + 1]; BINOM_MAX + 1]>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Box::new([[0u64; BINOM_MAX + 1]; BINOM_MAX + 1]);
        for n in 0..=BINOM_MAX {
            t[n][0] = 1;
            for k in 1..=n {
                t[n][k] = t[n - 1][k - 1].wrapping_add(t[n - 1][k]);
            }
        }
        t
    })
}

/// `C(n, k)` for `n <= 64`.
pub fn binomial_u64(n: usize, k: usize) -> u64 {
    assert!(n <= BINOM_MAX, "binomial table covers n <= {BINOM_MAX}");
    if k > n {
        0
    } else {
        small_binomials()[n][k]
    }
}

/// Lexicographic offset of `bits` among vectors of the same length and
/// weight (`0 < 1`, position 0 first). Length must not exceed 64.
pub fn binom_rank(bits: &[bool]) -> u64 {
    let t = bits.len();
    let mut left = bits.iter().filter(|&&b| b).count();
    let mut rank = 0u64;
    for (i, &bit) in bits.iter().enumerate() {
        if bit {
            rank += binomial_u64(t - i - 1, left);
            left -= 1;
        }
    }
    rank
}

/// Inverse of [`binom_rank`].
pub fn binom_unrank(t: usize, weight: usize, offset: u64) -> Result<Vec<bool>> {
    let size = binomial_u64(t, weight);
    if offset >= size {
        return Err(Error::IndexOutOfRange {
            index: offset.to_string(),
            size: size.to_string(),
        });
    }
    let mut out = Vec::with_capacity(t);
    let mut left = weight;
    let mut offset = offset;
    for i in 0..t {
        let zeros_here = binomial_u64(t - i - 1, left);
        if left > 0 && offset >= zeros_here {
            offset -= zeros_here;
            out.push(true);
            left -= 1;
        } else {
            out.push(false);
        }
    }
    Ok(out)
}

/// `|T| <= 2^{⌊b(H+ε)⌋}` checked in integers; implies the real-valued bound.
pub fn within_typical_bound(count: &BigUint, model: &SourceModel, b: usize, eps: Ratio) -> bool {
    let exponent = (b as f64 * (model.entropy() + eps.to_f64())).floor();
    let Some(exponent) = exponent.to_u64() else {
        return false;
    };
    count <= &(BigUint::one() << exponent)
}
