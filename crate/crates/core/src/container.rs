//! On-disk container: a binary header followed by a one-flag-bit body.
//!
//! ```text
//! "LCU1" | version u8 | scheme u8 | mode u8 | flag position u8
//! n u64 | pad u64 | |X| u16
//! ε numerator u32 | ε denominator u32
//! b_0 u64 | k_0 u64 | aux u64
//! constant count u8 | (numerator u32, denominator u32)*
//! pmf numerators u64 * |X|
//! body bit length u64
//! body bytes
//! ```
//!
//! All integers are little-endian. `k_0` holds `ℓ_y` for the block scheme
//! and the block word length for the naive scheme; `aux` holds `ℓ_max`,
//! `b_1` and zero respectively. A header whose `b_0` is zero carries no plan
//! and its body is always raw.
//!
//! Body bit 0 is the flag: 1 means the fixed-length codeword follows, 0 means
//! the message follows raw at `⌈log2|X|⌉` bits per symbol. The flag makes the
//! format lossless for every message, whatever the fixed-length encoder does.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::bitstore::{BitRead, BitSink, BitWindow, BitWrite, ProbeCounts, ProbeMeteredBits};
use crate::blockvarlen::{self, BlockPlan2, NaivePlan, NAIVE_DEFAULT_C};
use crate::codecs::{calibrate_lz_code_len, universal_code_len_formula, Level0Codec};
use crate::enumcode::{ceil_log2, Ratio, SourceModel, PMF_DENOMINATOR};
use crate::error::{Error, Result};
use crate::localops;
use crate::multilevel::{self, default_block_len, LevelPlan};

pub const MAGIC: &[u8; 4] = b"LCU1";
pub const VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Multilevel,
    Blockvar,
    Naive,
}

impl Scheme {
    fn id(self) -> u8 {
        match self {
            Scheme::Multilevel => 0,
            Scheme::Blockvar => 1,
            Scheme::Naive => 2,
        }
    }

    fn from_id(id: u8) -> Result<Self> {
        Ok(match id {
            0 => Scheme::Multilevel,
            1 => Scheme::Blockvar,
            2 => Scheme::Naive,
            _ => return Err(Error::corrupt(format!("unknown scheme id {id}"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// The pmf is supplied by the caller.
    Known,
    /// The pmf is estimated from the message and stored in the header.
    Universal,
}

/// How the universal multilevel scheme picks its LZ78 word length.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UniversalCodeLen {
    /// Monte Carlo calibration against the estimated pmf.
    Calibrated { samples: usize, seed: u64 },
    /// Closed form with the given constant.
    Formula { c: Ratio },
}

/// Default Monte Carlo sample count for universal `k_0` calibration.
pub const DEFAULT_CALIBRATION_SAMPLES: usize = 100_000;

#[derive(Clone, Debug)]
pub struct CompressOptions {
    pub scheme: Scheme,
    pub mode: Mode,
    pub alphabet: usize,
    /// Required in known-source mode.
    pub model: Option<SourceModel>,
    pub epsilon: Ratio,
    /// Overrides `b_0` (multilevel) or `b` (naive).
    pub block_len: Option<usize>,
    pub universal_code_len: UniversalCodeLen,
    /// `(c_0, c_1)` for the block scheme; calibrated when absent.
    pub blockvar_constants: Option<(Ratio, Ratio)>,
    pub naive_constant: Ratio,
}

impl CompressOptions {
    pub fn known(scheme: Scheme, model: SourceModel, epsilon: Ratio) -> Self {
        let mut o = Self::universal(scheme, model.alphabet_size(), epsilon);
        o.mode = Mode::Known;
        o.model = Some(model);
        o
    }

    pub fn universal(scheme: Scheme, alphabet: usize, epsilon: Ratio) -> Self {
        CompressOptions {
            scheme,
            mode: Mode::Universal,
            alphabet,
            model: None,
            epsilon,
            block_len: None,
            universal_code_len: UniversalCodeLen::Calibrated {
                samples: DEFAULT_CALIBRATION_SAMPLES,
                seed: 0,
            },
            blockvar_constants: None,
            naive_constant: Ratio::new(NAIVE_DEFAULT_C, 1).expect("nonzero denominator"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Header {
    pub scheme: Scheme,
    pub mode: Mode,
    pub flag_position: u8,
    pub n: u64,
    pub pad: u64,
    pub alphabet: u16,
    pub epsilon: Ratio,
    pub block_len: u64,
    pub code_len: u64,
    pub aux: u64,
    pub constants: Vec<Ratio>,
    pub pmf: Vec<u64>,
    pub body_bits: u64,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, k: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos + k;
        if end > self.bytes.len() {
            return Err(Error::TruncatedFile(format!("header ends inside {what}")));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
    fn ratio(&mut self, what: &str) -> Result<Ratio> {
        let num = self.u32(what)?;
        let den = self.u32(what)?;
        Ratio::new(num as u64, den as u64).map_err(|_| Error::corrupt(format!("zero denominator in {what}")))
    }
}

fn ratio_u32(r: Ratio, what: &str) -> Result<(u32, u32)> {
    match (u32::try_from(r.num()), u32::try_from(r.den())) {
        (Ok(a), Ok(b)) => Ok((a, b)),
        _ => Err(Error::InvalidArgument(format!("{what} = {r} does not fit 32-bit fields"))),
    }
}

impl Header {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(64 + 8 * self.pmf.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&[VERSION, self.scheme.id(), self.mode as u8, self.flag_position]);
        out.extend_from_slice(&self.n.to_le_bytes());
        out.extend_from_slice(&self.pad.to_le_bytes());
        out.extend_from_slice(&self.alphabet.to_le_bytes());
        let (a, b) = ratio_u32(self.epsilon, "ε_0")?;
        out.extend_from_slice(&a.to_le_bytes());
        out.extend_from_slice(&b.to_le_bytes());
        out.extend_from_slice(&self.block_len.to_le_bytes());
        out.extend_from_slice(&self.code_len.to_le_bytes());
        out.extend_from_slice(&self.aux.to_le_bytes());
        let count = u8::try_from(self.constants.len())
            .map_err(|_| Error::InvalidArgument("too many constants".into()))?;
        out.push(count);
        for &c in &self.constants {
            let (a, b) = ratio_u32(c, "constant")?;
            out.extend_from_slice(&a.to_le_bytes());
            out.extend_from_slice(&b.to_le_bytes());
        }
        for &p in &self.pmf {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out.extend_from_slice(&self.body_bits.to_le_bytes());
        Ok(out)
    }

    /// Parses a header, returning it with the number of bytes consumed.
    pub fn parse(bytes: &[u8]) -> Result<(Header, usize)> {
        let mut c = Cursor { bytes, pos: 0 };
        let magic = c.take(4, "magic").map_err(|_| Error::BadMagic)?;
        if magic != MAGIC {
            return Err(Error::BadMagic);
        }
        let version = c.u8("version")?;
        if version != VERSION {
            return Err(Error::BadVersion(version));
        }
        let scheme = Scheme::from_id(c.u8("scheme")?)?;
        let mode = match c.u8("mode")? {
            0 => Mode::Known,
            1 => Mode::Universal,
            m => return Err(Error::corrupt(format!("unknown mode {m}"))),
        };
        let flag_position = c.u8("flag position")?;
        if flag_position != 0 {
            return Err(Error::corrupt(format!("unsupported flag position {flag_position}")));
        }
        let n = c.u64("n")?;
        let pad = c.u64("pad")?;
        let alphabet = c.u16("alphabet")?;
        let epsilon = c.ratio("ε_0")?;
        let block_len = c.u64("b_0")?;
        let code_len = c.u64("k_0")?;
        let aux = c.u64("aux")?;
        let count = c.u8("constant count")?;
        let constants = (0..count).map(|_| c.ratio("constant")).collect::<Result<Vec<_>>>()?;
        let pmf = (0..alphabet).map(|_| c.u64("pmf")).collect::<Result<Vec<_>>>()?;
        let body_bits = c.u64("body length")?;
        let h = Header {
            scheme,
            mode,
            flag_position,
            n,
            pad,
            alphabet,
            epsilon,
            block_len,
            code_len,
            aux,
            constants,
            pmf,
            body_bits,
        };
        Ok((h, c.pos))
    }

    pub fn model(&self) -> Result<SourceModel> {
        SourceModel::from_numerators(self.pmf.clone())
    }

    /// Bits per symbol in the raw branch.
    pub fn raw_width(&self) -> usize {
        ceil_log2(self.alphabet as u64).max(1)
    }
}

/// A scheme's fixed-length plan.
#[derive(Clone, Debug)]
pub enum Plan {
    Multilevel(LevelPlan),
    Blockvar(BlockPlan2),
    Naive(NaivePlan),
}

impl Plan {
    pub fn total_bits(&self) -> usize {
        match self {
            Plan::Multilevel(p) => p.total_bits(),
            Plan::Blockvar(p) => p.total_bits(),
            Plan::Naive(p) => p.total_bits(),
        }
    }

    pub fn pad_len(&self) -> usize {
        match self {
            Plan::Multilevel(p) => p.pad_len(),
            Plan::Blockvar(p) => p.pad_len(),
            Plan::Naive(p) => p.pad_len(),
        }
    }

    /// Fixed-length encode; `None` when the encoder reports failure.
    pub fn encode(&self, x: &[u8]) -> Result<Option<ProbeMeteredBits>> {
        match self {
            Plan::Multilevel(p) => match multilevel::encode(x, p) {
                Ok((cw, _)) => Ok(Some(cw)),
                Err(Error::EncodingIncomplete { .. }) => Ok(None),
                Err(e) => Err(e),
            },
            Plan::Blockvar(p) => {
                let (cw, errored) = blockvarlen::encode2(x, p)?;
                Ok(errored.is_empty().then_some(cw))
            }
            Plan::Naive(p) => {
                let (cw, errored) = blockvarlen::naive_encode(x, p)?;
                Ok(errored.is_empty().then_some(cw))
            }
        }
    }

    pub fn decode<S: BitRead + ?Sized>(&self, cw: &S) -> Result<Vec<u8>> {
        match self {
            Plan::Multilevel(p) => multilevel::decode(cw, p),
            Plan::Blockvar(p) => blockvarlen::decode2(cw, p),
            Plan::Naive(p) => blockvarlen::naive_decode(cw, p),
        }
    }

    /// Local decode of `x[start .. start + len]`.
    pub fn get<S: BitRead + ?Sized>(&self, cw: &S, start: usize, len: usize) -> Result<(Vec<u8>, ProbeCounts)> {
        Ok(match self {
            Plan::Multilevel(p) => {
                let r = localops::local_decode_range(cw, p, start, len)?;
                (r.symbols, r.probes)
            }
            Plan::Blockvar(p) => blockvarlen::local_decode_range2(cw, p, start, len)?,
            Plan::Naive(p) => blockvarlen::naive_local_decode(cw, p, start, len)?,
        })
    }

    /// Local update of `x[start .. start + data.len()]`. When the codeword
    /// cannot hold the result, returns the full updated message instead so
    /// the caller can store it another way.
    pub fn set<S: BitWrite + ?Sized>(
        &self,
        cw: &mut S,
        start: usize,
        data: &[u8],
    ) -> Result<(ProbeCounts, Option<Vec<u8>>)> {
        let before = cw.counters();
        let failed = match self {
            Plan::Multilevel(p) => match localops::local_update_range(cw, p, start, data) {
                Ok(_) => None,
                // Blocks before the failing one were already applied and
                // the codeword is consistent, so decode and splice.
                Err(Error::EncodingIncomplete { .. }) => Some(multilevel::decode(&*cw, p)?),
                Err(e) => return Err(e),
            },
            Plan::Blockvar(p) => {
                let report = blockvarlen::local_update_range2(cw, p, start, data)?;
                rebuild(&report.errored, p.blocks(), p.n(), |i| p.decode_block(&*cw, i))?
            }
            Plan::Naive(p) => {
                let report = blockvarlen::naive_local_update(cw, p, start, data)?;
                rebuild(&report.errored, p.blocks(), p.n(), |i| blockvarlen::naive_decode_block(&*cw, p, i))?
            }
        };
        let probes = cw.counters().since(before);
        Ok((probes, failed.map(|mut x| {
            x[start..start + data.len()].copy_from_slice(data);
            x
        })))
    }
}

/// Reassembles a message from intact blocks and the returned contents of
/// blocks that fell into the error form; `None` when none did.
fn rebuild(
    errored: &[(usize, Vec<u8>)],
    blocks: usize,
    n: usize,
    mut decode: impl FnMut(usize) -> Result<Vec<u8>>,
) -> Result<Option<Vec<u8>>> {
    if errored.is_empty() {
        return Ok(None);
    }
    let mut x = Vec::new();
    for i in 0..blocks {
        match errored.iter().find(|(e, _)| *e == i) {
            Some((_, block)) => x.extend_from_slice(block),
            None => x.extend(decode(i)?),
        }
    }
    x.truncate(n);
    Ok(Some(x))
}

/// Add-one smoothed empirical pmf over `alphabet` symbols, computed exactly
/// on the fixed denominator.
pub fn estimate_model(x: &[u8], alphabet: usize) -> Result<SourceModel> {
    if x.is_empty() {
        return Err(Error::InvalidArgument("cannot estimate a pmf from an empty message".into()));
    }
    let mut counts = vec![1u128; alphabet];
    for &s in x {
        *counts
            .get_mut(s as usize)
            .ok_or_else(|| Error::InvalidArgument(format!("symbol {s} outside the alphabet")))? += 1;
    }
    let total = (x.len() + alphabet) as u128;
    let mut nums: Vec<u64> = counts
        .iter()
        .map(|&c| ((c * PMF_DENOMINATOR as u128) / total).max(1) as u64)
        .collect();
    let short = PMF_DENOMINATOR - nums.iter().sum::<u64>();
    let imax = (0..alphabet).max_by_key(|&a| (counts[a], std::cmp::Reverse(a))).expect("nonempty");
    nums[imax] += short;
    SourceModel::from_numerators(nums)
}

/// Derives the plan and header fields for an `n`-symbol message under
/// `model` (the caller's pmf, or the estimate in universal mode).
pub fn build_plan(n: usize, opts: &CompressOptions, model: &SourceModel) -> Result<(Plan, Header)> {
    let eps = opts.epsilon;
    let mut constants = Vec::new();
    let (plan, block_len, code_len, aux) = match opts.scheme {
        Scheme::Multilevel => {
            let mut b0 = opts.block_len.unwrap_or_else(|| default_block_len(model, eps));
            if opts.mode == Mode::Universal {
                b0 = b0.min(n);
            }
            let codec = match opts.mode {
                Mode::Known => Level0Codec::typical(model, b0, eps)?,
                Mode::Universal => {
                    let k0 = match opts.universal_code_len {
                        UniversalCodeLen::Calibrated { samples, seed } => {
                            calibrate_lz_code_len(model, b0, eps, samples, seed)
                        }
                        UniversalCodeLen::Formula { c } => {
                            constants.push(c);
                            universal_code_len_formula(model, b0, eps, c.to_f64())
                        }
                    };
                    Level0Codec::lz78(model.alphabet_size(), b0, k0)?
                }
            };
            let (b0, k0) = (codec.block_len(), codec.code_len());
            let plan = LevelPlan::build(model.clone(), n, eps, codec, None)?;
            let aux = plan.max_level();
            (Plan::Multilevel(plan), b0, k0, aux)
        }
        Scheme::Blockvar => {
            let (c0, c1) = match opts.blockvar_constants {
                Some(c) => c,
                None => {
                    let cal = blockvarlen::calibrate_constants(model, n, eps)?;
                    (cal.c0, cal.c1)
                }
            };
            constants.extend([c0, c1]);
            let plan = BlockPlan2::new(model, n, eps, c0, c1)?;
            let (b0, y, b1) = (plan.block_len(), plan.y_len(), plan.sub_len());
            (Plan::Blockvar(plan), b0, y, b1)
        }
        Scheme::Naive => {
            let plan = match opts.block_len {
                Some(b) => NaivePlan::with_block_len(model, n, eps, b)?,
                None => {
                    constants.push(opts.naive_constant);
                    NaivePlan::new(model, n, eps, opts.naive_constant)?
                }
            };
            let (b, k) = (plan.block_len(), plan.code_len());
            (Plan::Naive(plan), b, k, 0)
        }
    };
    let header = Header {
        scheme: opts.scheme,
        mode: opts.mode,
        flag_position: 0,
        n: n as u64,
        pad: plan.pad_len() as u64,
        alphabet: model.alphabet_size() as u16,
        epsilon: eps,
        block_len: block_len as u64,
        code_len: code_len as u64,
        aux: aux as u64,
        constants,
        pmf: model.numerators().to_vec(),
        body_bits: 0,
    };
    Ok((plan, header))
}

/// Rebuilds the plan a header describes; `None` for plan-less headers.
pub fn plan_from_header(h: &Header) -> Result<Option<Plan>> {
    if h.block_len == 0 {
        return Ok(None);
    }
    let model = h.model()?;
    let n = h.n as usize;
    let (b0, k0) = (h.block_len as usize, h.code_len as usize);
    let plan = match h.scheme {
        Scheme::Multilevel => {
            let codec = match h.mode {
                Mode::Known => Level0Codec::typical_with_code_len(&model, b0, h.epsilon, k0)?,
                Mode::Universal => Level0Codec::lz78(model.alphabet_size(), b0, k0)?,
            };
            Plan::Multilevel(LevelPlan::build(model, n, h.epsilon, codec, Some(h.aux as usize))?)
        }
        Scheme::Blockvar => {
            let plan = BlockPlan2::with_sizes(&model, n, h.epsilon, b0, h.aux as usize)?;
            if plan.y_len() != k0 {
                return Err(Error::corrupt("stored ℓ_y disagrees with the plan"));
            }
            Plan::Blockvar(plan)
        }
        Scheme::Naive => {
            let codec = Level0Codec::typical_with_code_len(&model, b0, h.epsilon, k0)?;
            Plan::Naive(NaivePlan::with_codec(&model, n, h.epsilon, codec)?)
        }
    };
    if plan.pad_len() as u64 != h.pad {
        return Err(Error::corrupt("stored pad length disagrees with the plan"));
    }
    Ok(Some(plan))
}

/// Appends `len` bits of `bytes` (MSB first) to `sink`.
fn append_bits(sink: &mut BitSink, bytes: &[u8], len: usize) {
    for (i, &b) in bytes.iter().enumerate() {
        let take = len.saturating_sub(i * 8).min(8);
        if take == 0 {
            break;
        }
        sink.push_bits(take, (b >> (8 - take)) as u64);
    }
}

/// Result of [`Container::set`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SetOutcome {
    pub probes: ProbeCounts,
    /// The updated message has no fixed-length codeword and the container
    /// switched to the raw branch.
    pub rescued: bool,
}

/// Summary used by `inspect`.
#[derive(Clone, Debug, Serialize)]
pub struct ContainerInfo {
    pub header: Header,
    pub compressed: bool,
    pub header_bytes: usize,
    pub body_bits: u64,
    pub bits_per_symbol: f64,
    pub plan_bits: Option<usize>,
    pub levels: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Container {
    header: Header,
    plan: Option<Plan>,
    body: ProbeMeteredBits,
    compressed: bool,
}

impl Container {
    /// Encodes `x`, falling back to the raw branch when the fixed-length
    /// encoder fails. In universal mode a plan that cannot be built also
    /// falls back to raw.
    pub fn compress(x: &[u8], opts: &CompressOptions) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::InvalidArgument("message is empty".into()));
        }
        if !(2..=255).contains(&opts.alphabet) {
            return Err(Error::InvalidArgument(format!("alphabet size {} outside 2..=255", opts.alphabet)));
        }
        if let Some(&s) = x.iter().find(|&&s| s as usize >= opts.alphabet) {
            return Err(Error::InvalidArgument(format!("symbol {s} outside the alphabet")));
        }
        let model = match (opts.mode, &opts.model) {
            (Mode::Known, Some(m)) if m.alphabet_size() == opts.alphabet => m.clone(),
            (Mode::Known, Some(_)) => return Err(Error::InvalidArgument("pmf length disagrees with alphabet".into())),
            (Mode::Known, None) => return Err(Error::InvalidArgument("known-source mode needs a pmf".into())),
            (Mode::Universal, _) => estimate_model(x, opts.alphabet)?,
        };
        let (plan, header) = match build_plan(x.len(), opts, &model) {
            Ok((p, h)) => (Some(p), h),
            Err(Error::PlanInfeasible(_)) if opts.mode == Mode::Universal => {
                let header = Header {
                    scheme: opts.scheme,
                    mode: opts.mode,
                    flag_position: 0,
                    n: x.len() as u64,
                    pad: 0,
                    alphabet: opts.alphabet as u16,
                    epsilon: opts.epsilon,
                    block_len: 0,
                    code_len: 0,
                    aux: 0,
                    constants: Vec::new(),
                    pmf: model.numerators().to_vec(),
                    body_bits: 0,
                };
                (None, header)
            }
            Err(e) => return Err(e),
        };
        Self::encode_with(header, plan, x)
    }

    fn encode_with(mut header: Header, plan: Option<Plan>, x: &[u8]) -> Result<Self> {
        let cw = match &plan {
            Some(p) => p.encode(x)?,
            None => None,
        };
        let mut sink = BitSink::new();
        let compressed = cw.is_some();
        sink.push_bit(compressed);
        match cw {
            Some(cw) => append_bits(&mut sink, cw.as_bytes(), cw.len_bits()),
            None => sink.push_symbols(header.raw_width(), x),
        }
        header.body_bits = sink.len() as u64;
        Ok(Container {
            header,
            plan,
            body: sink.into_metered(),
            compressed,
        })
    }

    /// Fresh encode of `x` under this container's stored plan.
    pub fn reencode(&self, x: &[u8]) -> Result<Self> {
        if x.len() as u64 != self.header.n {
            return Err(Error::InvalidArgument("message length differs from the container".into()));
        }
        Self::encode_with(self.header.clone(), self.plan.clone(), x)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, used) = Header::parse(bytes)?;
        let body_len = header.body_bits.div_ceil(8) as usize;
        let rest = &bytes[used..];
        if rest.len() < body_len {
            return Err(Error::TruncatedFile(format!("body has {} of {body_len} bytes", rest.len())));
        }
        if rest.len() > body_len || header.body_bits == 0 {
            return Err(Error::corrupt("body length disagrees with the header"));
        }
        let compressed = rest[0] & 0x80 != 0;
        let plan = plan_from_header(&header)?;
        let expect = match (&plan, compressed) {
            (Some(p), true) => p.total_bits(),
            (None, true) => return Err(Error::corrupt("compressed body without a plan")),
            (_, false) => header.n as usize * header.raw_width(),
        };
        if header.body_bits != 1 + expect as u64 {
            return Err(Error::corrupt("body length disagrees with the plan"));
        }
        let body = ProbeMeteredBits::from_bytes(rest.to_vec(), header.body_bits as usize)?;
        Ok(Container {
            header,
            plan,
            body,
            compressed,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = self.header.to_bytes()?;
        out.extend_from_slice(self.body.as_bytes());
        Ok(out)
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Writes through a temporary file in the same directory and renames it
    /// over `path`, so readers never see a half-written container.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(&self.to_bytes()?)?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| Error::Io(e.error))?;
        Ok(())
    }

    pub fn header(&self) -> &Header {
        &self.header
    }

    pub fn plan(&self) -> Option<&Plan> {
        self.plan.as_ref()
    }

    pub fn body(&self) -> &ProbeMeteredBits {
        &self.body
    }

    pub fn is_compressed(&self) -> bool {
        self.compressed
    }

    pub fn len(&self) -> usize {
        self.header.n as usize
    }

    pub fn is_empty(&self) -> bool {
        self.header.n == 0
    }

    /// Body bits per message symbol, flag included.
    pub fn bits_per_symbol(&self) -> f64 {
        self.header.body_bits as f64 / self.header.n as f64
    }

    pub fn info(&self) -> Result<ContainerInfo> {
        Ok(ContainerInfo {
            header: self.header.clone(),
            compressed: self.compressed,
            header_bytes: self.header.to_bytes()?.len(),
            body_bits: self.header.body_bits,
            bits_per_symbol: self.bits_per_symbol(),
            plan_bits: self.plan.as_ref().map(Plan::total_bits),
            levels: match &self.plan {
                Some(Plan::Multilevel(p)) => Some(p.max_level() + 1),
                _ => None,
            },
        })
    }

    fn codeword(&self) -> Result<BitWindow<&ProbeMeteredBits>> {
        BitWindow::new(&self.body, 1, self.body.len_bits() - 1)
    }

    fn check_range(&self, start: usize, len: usize) -> Result<()> {
        match start.checked_add(len) {
            Some(end) if end <= self.len() => Ok(()),
            _ => Err(Error::OutOfRange(format!(
                "range [{start}, {start}+{len}) outside message of {} symbols",
                self.len()
            ))),
        }
    }

    pub fn decompress(&self) -> Result<Vec<u8>> {
        if !self.compressed {
            return self.body.read_symbols(1, self.len(), self.header.raw_width());
        }
        let plan = self.plan.as_ref().expect("compressed containers have a plan");
        plan.decode(&self.codeword()?)
    }

    /// Reads `x[start .. start + len]` through the local decoder.
    pub fn get(&self, start: usize, len: usize) -> Result<(Vec<u8>, ProbeCounts)> {
        self.check_range(start, len)?;
        let before = self.body.counters();
        let out = match (&self.plan, self.compressed) {
            (Some(plan), true) => plan.get(&self.codeword()?, start, len)?.0,
            _ => {
                let w = self.header.raw_width();
                self.body.read_symbols(1 + start * w, len, w)?
            }
        };
        Ok((out, self.body.counters().since(before)))
    }

    /// Overwrites `x[start .. start + data.len()]` in place. If the local
    /// update fails, the whole message is re-encoded, and only if that fails
    /// too does the container switch to the raw branch.
    pub fn set(&mut self, start: usize, data: &[u8]) -> Result<SetOutcome> {
        self.check_range(start, data.len())?;
        if let Some(&s) = data.iter().find(|&&s| s as usize >= self.header.alphabet as usize) {
            return Err(Error::InvalidArgument(format!("symbol {s} outside the alphabet")));
        }
        let before = self.body.counters();
        if !self.compressed {
            let w = self.header.raw_width();
            self.body.write_symbols(1 + start * w, w, data)?;
            return Ok(SetOutcome {
                probes: self.body.counters().since(before),
                rescued: false,
            });
        }
        let plan = self.plan.as_ref().expect("compressed containers have a plan");
        let len = self.body.len_bits() - 1;
        let (probes, rescue) = plan.set(&mut BitWindow::new(&mut self.body, 1, len)?, start, data)?;
        let Some(x) = rescue else {
            return Ok(SetOutcome { probes, rescued: false });
        };
        // A range update can fail part way even though the final message
        // encodes fine, so try a full rewrite before going raw.
        let rewrite = Self::encode_with(self.header.clone(), self.plan.clone(), &x)?;
        let probes = probes
            + ProbeCounts {
                reads: 0,
                writes: rewrite.header.body_bits,
            };
        let rescued = !rewrite.compressed;
        *self = rewrite;
        Ok(SetOutcome { probes, rescued })
    }
}
