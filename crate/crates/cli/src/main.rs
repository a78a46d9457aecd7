//! `lcu`: compress files into locally decodable containers, read and patch
//! ranges in place, and run the probe-count benchmarks.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage error.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use lcu_core::bench::{self, ReportFormat, TrialConfig};
use lcu_core::container::{CompressOptions, Container, Plan, Scheme, UniversalCodeLen};
use lcu_core::localops::stored_level;
use lcu_core::{BitRead, BitWindow, Error, Ratio, SourceModel};

#[derive(Parser)]
#[command(name = "lcu", version, about = "Locally decodable, locally updatable compression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compress a file into a container.
    Compress(CompressArgs),
    /// Restore the original file from a container.
    Decompress { input: PathBuf, output: PathBuf },
    /// Read `s` symbols starting at `i` and report the bits probed.
    Get {
        container: PathBuf,
        #[arg(short = 'i', long)]
        index: usize,
        #[arg(short = 's', long, default_value_t = 1)]
        len: usize,
    },
    /// Overwrite symbols starting at `i` in place.
    Set {
        container: PathBuf,
        #[arg(short = 'i', long)]
        index: usize,
        /// Expected length; must match the data when given.
        #[arg(short = 's', long)]
        len: Option<usize>,
        /// Digits for alphabets up to 10 symbols, two hex digits per symbol otherwise.
        #[arg(long)]
        data: String,
    },
    /// Measure local decode and update costs.
    Bench(BenchArgs),
    /// Print the header and sampled block statistics of a container.
    Inspect {
        container: PathBuf,
        /// Blocks to sample.
        #[arg(long, default_value_t = 32)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Multilevel,
    Blockvar,
    Naive,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Scheme {
        match s {
            SchemeArg::Multilevel => Scheme::Multilevel,
            SchemeArg::Blockvar => Scheme::Blockvar,
            SchemeArg::Naive => Scheme::Naive,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Known,
    Universal,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct CompressArgs {
    input: PathBuf,
    output: PathBuf,
    #[arg(long, value_enum, default_value = "multilevel")]
    scheme: SchemeArg,
    #[arg(long, value_enum, default_value = "universal")]
    mode: ModeArg,
    /// Alphabet size. Size 2 reads the file as bits (MSB first); larger
    /// alphabets read one symbol per byte.
    #[arg(long, default_value_t = 2)]
    alphabet: usize,
    /// Comma-separated pmf, known mode only.
    #[arg(long)]
    pmf: Option<String>,
    #[arg(long, default_value = "1/4")]
    eps: String,
    /// Block length override (`b_0`, or `b` for the naive scheme).
    #[arg(long)]
    b0: Option<usize>,
    /// Monte Carlo samples for the universal LZ78 word length.
    #[arg(long, conflicts_with = "k0_formula")]
    k0_samples: Option<usize>,
    /// Use the closed-form universal word length with this constant.
    #[arg(long)]
    k0_formula: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Block-scheme constants; calibrated when omitted.
    #[arg(long, requires = "c1")]
    c0: Option<String>,
    #[arg(long, requires = "c0")]
    c1: Option<String>,
    #[arg(long)]
    naive_c: Option<String>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "multilevel")]
    scheme: SchemeArg,
    #[arg(long, default_value = "0.5,0.5")]
    pmf: String,
    /// Comma-separated message lengths.
    #[arg(long, default_value = "4096")]
    n: String,
    #[arg(long, default_value = "2/5")]
    eps: String,
    /// Comma-separated query lengths.
    #[arg(long, default_value = "1")]
    spans: String,
    /// Messages sampled per configuration.
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Queries per message and query length.
    #[arg(long, default_value_t = 1000)]
    queries: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    b0: Option<usize>,
    #[arg(long)]
    no_updates: bool,
    /// Run the built-in sweep instead of a single configuration.
    #[arg(long)]
    suite: bool,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    #[arg(long, short = 'o')]
    output: Option<PathBuf>,
}

/// A failure reported with exit code 1.
struct Failure(String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::BlockErrored(_) => Failure(format!("{e}; run `lcu decompress` and `lcu compress` again")),
            e => Failure(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure(e.to_string())
    }
}

fn usage(kind: ErrorKind, msg: impl std::fmt::Display) -> ! {
    Cli::command().error(kind, msg).exit()
}

fn ratio_arg(name: &str, s: &str) -> Ratio {
    s.parse()
        .unwrap_or_else(|_| usage(ErrorKind::InvalidValue, format!("--{name}: cannot parse {s:?} as a rational")))
}

fn list_arg<T: std::str::FromStr>(name: &str, s: &str) -> Vec<T> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .unwrap_or_else(|_| usage(ErrorKind::InvalidValue, format!("--{name}: bad entry {v:?}")))
        })
        .collect()
}

fn model_arg(s: &str) -> SourceModel {
    let pmf: Vec<f64> = list_arg("pmf", s);
    SourceModel::new(&pmf).unwrap_or_else(|e| usage(ErrorKind::InvalidValue, format!("--pmf: {e}")))
}

fn read_symbols(path: &Path, alphabet: usize) -> Result<Vec<u8>, Failure> {
    let bytes = std::fs::read(path)?;
    if alphabet == 2 {
        return Ok(bytes.iter().flat_map(|&b| (0..8).rev().map(move |k| (b >> k) & 1)).collect());
    }
    if let Some(&b) = bytes.iter().find(|&&b| b as usize >= alphabet) {
        return Err(Failure(format!("byte {b} is outside the {alphabet}-symbol alphabet")));
    }
    Ok(bytes)
}

fn symbols_to_bytes(x: &[u8], alphabet: usize) -> Vec<u8> {
    if alphabet == 2 {
        return x.chunks(8).map(|c| c.iter().fold(0u8, |acc, &b| (acc << 1) | b)).collect();
    }
    x.to_vec()
}

fn format_symbols(x: &[u8], alphabet: usize) -> String {
    if alphabet <= 10 {
        x.iter().map(|&s| char::from(b'0' + s)).collect()
    } else {
        x.iter().map(|s| format!("{s:02x}")).collect()
    }
}

fn parse_symbols(s: &str, alphabet: usize) -> Option<Vec<u8>> {
    let out: Option<Vec<u8>> = if alphabet <= 10 {
        s.chars().map(|c| c.to_digit(10).map(|d| d as u8)).collect()
    } else {
        if !s.len().is_multiple_of(2) || !s.is_ascii() {
            return None;
        }
        (0..s.len()).step_by(2).map(|k| u8::from_str_radix(&s[k..k + 2], 16).ok()).collect()
    };
    out.filter(|v| v.iter().all(|&b| (b as usize) < alphabet))
}

fn cmd_compress(a: CompressArgs) -> Result<(), Failure> {
    let scheme: Scheme = a.scheme.into();
    let eps = ratio_arg("eps", &a.eps);
    if !(2..=255).contains(&a.alphabet) {
        usage(ErrorKind::InvalidValue, "--alphabet must lie in 2..=255");
    }
    let mut opts = match (a.mode, &a.pmf) {
        (ModeArg::Known, Some(p)) => {
            let m = model_arg(p);
            if m.alphabet_size() != a.alphabet {
                usage(ErrorKind::ArgumentConflict, "--pmf length differs from --alphabet");
            }
            CompressOptions::known(scheme, m, eps)
        }
        (ModeArg::Known, None) => usage(ErrorKind::MissingRequiredArgument, "--mode known needs --pmf"),
        (ModeArg::Universal, Some(_)) => usage(ErrorKind::ArgumentConflict, "--pmf is only valid with --mode known"),
        (ModeArg::Universal, None) => CompressOptions::universal(scheme, a.alphabet, eps),
    };
    opts.block_len = a.b0;
    if let Some(c) = &a.k0_formula {
        opts.universal_code_len = UniversalCodeLen::Formula { c: ratio_arg("k0-formula", c) };
    } else if let Some(samples) = a.k0_samples {
        if samples == 0 {
            usage(ErrorKind::InvalidValue, "--k0-samples must be positive");
        }
        opts.universal_code_len = UniversalCodeLen::Calibrated { samples, seed: a.seed };
    } else if let UniversalCodeLen::Calibrated { samples, .. } = opts.universal_code_len {
        opts.universal_code_len = UniversalCodeLen::Calibrated { samples, seed: a.seed };
    }
    if let (Some(c0), Some(c1)) = (&a.c0, &a.c1) {
        opts.blockvar_constants = Some((ratio_arg("c0", c0), ratio_arg("c1", c1)));
    }
    if let Some(c) = &a.naive_c {
        opts.naive_constant = ratio_arg("naive-c", c);
    }
    let x = read_symbols(&a.input, a.alphabet)?;
    let c = Container::compress(&x, &opts)?;
    c.save(&a.output)?;
    eprintln!(
        "{} symbols -> {} body bits ({:.4} bits/symbol, {})",
        x.len(),
        c.header().body_bits,
        c.bits_per_symbol(),
        if c.is_compressed() { "compressed" } else { "raw" }
    );
    Ok(())
}

fn cmd_decompress(input: &Path, output: &Path) -> Result<(), Failure> {
    let c = Container::open(input)?;
    let x = c.decompress()?;
    std::fs::write(output, symbols_to_bytes(&x, c.header().alphabet as usize))?;
    Ok(())
}

fn cmd_get(path: &Path, index: usize, len: usize) -> Result<(), Failure> {
    let c = Container::open(path)?;
    let (x, probes) = c.get(index, len)?;
    println!("{}", format_symbols(&x, c.header().alphabet as usize));
    println!("reads={} writes={}", probes.reads, probes.writes);
    Ok(())
}

fn cmd_set(path: &Path, index: usize, len: Option<usize>, data: &str) -> Result<(), Failure> {
    let lock = File::open(path)?;
    lock.lock()?;
    let mut c = Container::open(path)?;
    let alphabet = c.header().alphabet as usize;
    let Some(symbols) = parse_symbols(data, alphabet) else {
        usage(ErrorKind::InvalidValue, format!("--data is not a valid {alphabet}-symbol string"));
    };
    if len.is_some_and(|s| s != symbols.len()) || symbols.is_empty() {
        usage(ErrorKind::InvalidValue, "-s disagrees with the length of --data");
    }
    let out = c.set(index, &symbols)?;
    c.save(path)?;
    println!("reads={} writes={}", out.probes.reads, out.probes.writes);
    if out.rescued {
        eprintln!("the update did not fit the fixed-length code; container switched to raw storage");
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<(), Failure> {
    let format = match a.format {
        FormatArg::Csv => ReportFormat::Csv,
        FormatArg::Json => ReportFormat::Json,
    };
    let configs = if a.suite {
        bench::default_suite(a.trials, a.queries, a.seed)?
    } else {
        let model = model_arg(&a.pmf);
        let eps = ratio_arg("eps", &a.eps);
        let spans: Vec<usize> = list_arg("spans", &a.spans);
        let ns: Vec<usize> = list_arg("n", &a.n);
        ns.iter()
            .map(|&n| {
                let mut c = TrialConfig::new(a.scheme.into(), model.clone(), n, eps);
                c.spans = spans.clone();
                c.encodes = a.trials;
                c.queries = a.queries;
                c.seed = a.seed;
                c.block_len = a.b0;
                c.measure_updates = !a.no_updates;
                c
            })
            .collect()
    };
    let mut reports = Vec::with_capacity(configs.len());
    for cfg in &configs {
        reports.push(bench::run_locality_trial(cfg)?);
    }
    let bytes = bench::render_reports(&reports, format)?;
    match a.output {
        Some(p) => std::fs::write(p, bytes)?,
        None => std::io::stdout().write_all(&bytes)?,
    }
    Ok(())
}

/// Scans a word in 64-bit steps and stops at the first nonzero chunk.
fn has_nonzero_bit<S: BitRead>(store: &S, offset: usize, width: usize) -> Result<bool, Failure> {
    let mut pos = offset;
    while pos < offset + width {
        let w = (offset + width - pos).min(64);
        if store.read_bits(pos, w)? != 0 {
            return Ok(true);
        }
        pos += w;
    }
    Ok(false)
}

fn cmd_inspect(path: &Path, samples: usize, seed: u64) -> Result<(), Failure> {
    let c = Container::open(path)?;
    let info = c.info()?;
    let h = &info.header;
    println!("scheme        {:?}", h.scheme);
    println!("mode          {:?}", h.mode);
    println!("symbols       {} (pad {}, alphabet {})", h.n, h.pad, h.alphabet);
    println!("epsilon       {}", h.epsilon);
    println!("block length  {}", h.block_len);
    println!("word length   {}", h.code_len);
    println!("aux           {}", h.aux);
    if !h.constants.is_empty() {
        let cs: Vec<String> = h.constants.iter().map(Ratio::to_string).collect();
        println!("constants     {}", cs.join(" "));
    }
    println!("header bytes  {}", info.header_bytes);
    println!("body bits     {} ({:.4} bits/symbol)", info.body_bits, info.bits_per_symbol);
    println!("branch        {}", if info.compressed { "compressed" } else { "raw" });
    let (Some(plan), true) = (c.plan(), c.is_compressed()) else {
        return Ok(());
    };
    let body = c.body();
    body.reset_counters();
    let cw = BitWindow::new(body, 1, body.len_bits() - 1)?;
    // Sample block indices with a small LCG so inspect needs no RNG state.
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut pick = |bound: usize| {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 33) % bound as u64) as usize
    };
    match plan {
        Plan::Multilevel(p) => {
            let blocks = p.block_count();
            let k = samples.min(blocks).max(1);
            let lv0 = &p.levels()[0];
            let mut hist = vec![0usize; p.max_level() + 1];
            for t in 0..k {
                let j = if k == blocks { t } else { pick(blocks) };
                // A nonzero level-0 word settles it; only zero words need the walk.
                if has_nonzero_bit(&cw, lv0.word_offset(j), lv0.code_len)? {
                    hist[0] += 1;
                } else {
                    hist[stored_level(&cw, p, j)?] += 1;
                }
            }
            println!("levels        {}", p.max_level() + 1);
            for (l, v) in hist.iter().enumerate() {
                println!("  level {l}     {:.1}% of {k} sampled blocks", 100.0 * *v as f64 / k as f64);
            }
        }
        Plan::Blockvar(p) => {
            let k = samples.min(p.blocks()).max(1);
            let mut valid = 0;
            for _ in 0..k {
                valid += usize::from(cw.read_bit(pick(p.blocks()) * p.block_bits())?);
            }
            println!("subblock      {} symbols, {} per block", p.sub_len(), p.subblocks());
            println!("  valid       {:.1}% of {k} sampled blocks", 100.0 * valid as f64 / k as f64);
        }
        Plan::Naive(p) => {
            let k = samples.min(p.blocks()).max(1);
            let mut nonzero = 0;
            for _ in 0..k {
                let i = pick(p.blocks());
                nonzero += usize::from(has_nonzero_bit(&cw, i * p.code_len(), p.code_len())?);
            }
            println!("  typical     {:.1}% of {k} sampled blocks", 100.0 * nonzero as f64 / k as f64);
        }
    }
    println!("probes        {} of {} body bits", body.counters().reads, info.body_bits);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Compress(a) => cmd_compress(a),
        Command::Decompress { input, output } => cmd_decompress(&input, &output),
        Command::Get { container, index, len } => cmd_get(&container, index, len),
        Command::Set {
            container,
            index,
            len,
            data,
        } => cmd_set(&container, index, len, &data),
        Command::Bench(a) => cmd_bench(a),
        Command::Inspect { container, samples, seed } => cmd_inspect(&container, samples, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
