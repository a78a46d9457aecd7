//! Monte Carlo measurement of local decode and update costs.
//!
//! Every probe figure comes from the [`ProbeMeteredBits`] counters of a real
//! codeword. Positions are drawn uniformly for the means; the maxima also
//! include positions that straddle a block boundary, where the costliest
//! queries tend to sit.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blockvarlen::NAIVE_DEFAULT_C;
use crate::container::{build_plan, CompressOptions, Plan, Scheme};
use crate::enumcode::{Ratio, SourceModel};
use crate::error::{Error, Result};
use crate::multilevel;

/// Version of the CSV and JSON layouts below.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// JSON Schema for [`BenchOutput`], shipped alongside the code.
pub const REPORT_JSON_SCHEMA: &str = include_str!("../schema/bench_report.schema.json");

#[derive(Clone, Debug)]
pub struct TrialConfig {
    pub scheme: Scheme,
    pub model: SourceModel,
    pub n: usize,
    pub epsilon: Ratio,
    /// Query lengths `s`.
    pub spans: Vec<usize>,
    /// Number of independently sampled messages.
    pub encodes: usize,
    /// Uniform queries per message and span, for reads and for updates.
    pub queries: usize,
    /// Extra boundary-straddling reads per message and span (max only).
    pub boundary_queries: usize,
    pub measure_updates: bool,
    pub seed: u64,
    pub block_len: Option<usize>,
    pub blockvar_constants: Option<(Ratio, Ratio)>,
    pub naive_constant: Ratio,
}

impl TrialConfig {
    pub fn new(scheme: Scheme, model: SourceModel, n: usize, epsilon: Ratio) -> Self {
        TrialConfig {
            scheme,
            model,
            n,
            epsilon,
            spans: vec![1],
            encodes: 200,
            queries: 1000,
            boundary_queries: 16,
            measure_updates: true,
            seed: 0,
            block_len: None,
            blockvar_constants: None,
            naive_constant: Ratio::new(NAIVE_DEFAULT_C, 1).expect("nonzero denominator"),
        }
    }

    fn options(&self) -> CompressOptions {
        let mut o = CompressOptions::known(self.scheme, self.model.clone(), self.epsilon);
        o.block_len = self.block_len;
        o.blockvar_constants = self.blockvar_constants;
        o.naive_constant = self.naive_constant;
        o
    }
}

/// Cost figures for one query length, in bits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanStats {
    pub s: usize,
    pub read_queries: u64,
    pub read_mean: f64,
    pub read_max: u64,
    pub update_queries: u64,
    /// Reads plus writes per update.
    pub update_mean: f64,
    pub update_max: u64,
    /// Updates the fixed-length codeword could not absorb; excluded above.
    pub update_failures: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub scheme: Scheme,
    pub pmf: Vec<f64>,
    pub entropy: f64,
    pub n: usize,
    pub epsilon: String,
    pub seed: u64,
    pub encodes: usize,
    /// `b_0`, or `b` for the naive scheme.
    pub block_len: usize,
    /// Positions per block that boundary queries are aligned to.
    pub query_unit: usize,
    pub total_bits: usize,
    /// Fixed-length codeword bits per symbol.
    pub rate: f64,
    pub spans: Vec<SpanStats>,
    /// Fraction of level-0 blocks stored at each level (multilevel only).
    pub level_histogram: Vec<f64>,
    /// Pooled fraction of level-ℓ blocks that were not stored at level ℓ.
    pub survival: Vec<f64>,
    /// Messages the fixed-length encoder could not encode.
    pub errors: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchOutput {
    pub schema_version: u32,
    pub reports: Vec<TrialReport>,
}

#[derive(Default)]
struct Acc {
    count: u64,
    sum: u64,
    max: u64,
}

impl Acc {
    fn add(&mut self, v: u64, in_mean: bool) {
        if in_mean {
            self.count += 1;
            self.sum += v;
        }
        self.max = self.max.max(v);
    }
    fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum as f64 / self.count as f64
        }
    }
}

fn query_unit(plan: &Plan) -> usize {
    match plan {
        Plan::Multilevel(p) => p.block_len(),
        Plan::Blockvar(p) => p.sub_len(),
        Plan::Naive(p) => p.block_len(),
    }
}

/// A start position whose `s`-window touches a unit boundary.
fn boundary_start(rng: &mut ChaCha8Rng, n: usize, s: usize, unit: usize) -> usize {
    let units = n / unit;
    if units < 2 {
        return rng.gen_range(0..=n - s);
    }
    let edge = rng.gen_range(1..units) * unit;
    let back = rng.gen_range(0..s.min(edge));
    (edge - back).min(n - s)
}

pub fn run_locality_trial(cfg: &TrialConfig) -> Result<TrialReport> {
    let n = cfg.n;
    if cfg.spans.iter().any(|&s| s == 0 || s > n) {
        return Err(Error::InvalidArgument(format!("query lengths must lie in 1..={n}")));
    }
    let (plan, header) = build_plan(n, &cfg.options(), &cfg.model)?;
    let unit = query_unit(&plan);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut reads: Vec<Acc> = cfg.spans.iter().map(|_| Acc::default()).collect();
    let mut updates: Vec<Acc> = cfg.spans.iter().map(|_| Acc::default()).collect();
    let mut failures = vec![0u64; cfg.spans.len()];
    let (levels, level_counts) = match &plan {
        Plan::Multilevel(p) => (p.levels().len(), p.levels().iter().map(|l| l.count).collect()),
        _ => (0, Vec::new()),
    };
    let mut hist = vec![0.0; levels];
    let mut survivors = vec![0usize; levels];
    let mut encoded = 0usize;
    let mut errors = 0usize;
    for _ in 0..cfg.encodes {
        let x = cfg.model.sample(&mut rng, n);
        let cw = match &plan {
            Plan::Multilevel(p) => match multilevel::encode(&x, p) {
                Ok((cw, stats)) => {
                    for (h, v) in hist.iter_mut().zip(stats.level_histogram(levels)) {
                        *h += v;
                    }
                    for (s, v) in survivors.iter_mut().zip(&stats.survivors) {
                        *s += v;
                    }
                    Some(cw)
                }
                Err(Error::EncodingIncomplete { .. }) => None,
                Err(e) => return Err(e),
            },
            other => other.encode(&x)?,
        };
        let Some(mut cw) = cw else {
            errors += 1;
            continue;
        };
        encoded += 1;
        for (k, &s) in cfg.spans.iter().enumerate() {
            for q in 0..cfg.queries + cfg.boundary_queries {
                let uniform = q < cfg.queries;
                let start = if uniform {
                    rng.gen_range(0..=n - s)
                } else {
                    boundary_start(&mut rng, n, s, unit)
                };
                let (got, p) = plan.get(&cw, start, s)?;
                debug_assert_eq!(got, x[start..start + s]);
                reads[k].add(p.reads, uniform);
            }
            if !cfg.measure_updates {
                continue;
            }
            for _ in 0..cfg.queries {
                let start = rng.gen_range(0..=n - s);
                let data = cfg.model.sample(&mut rng, s);
                let pristine = cw.clone();
                let (p, failed) = plan.set(&mut cw, start, &data)?;
                if failed.is_some() {
                    failures[k] += 1;
                    cw = pristine;
                    continue;
                }
                updates[k].add(p.total(), true);
                // Undo so every update sees the original message.
                let undo = plan.set(&mut cw, start, &x[start..start + s]);
                if !matches!(undo, Ok((_, None))) || cw != pristine {
                    cw = pristine;
                }
            }
        }
    }
    let spans = cfg
        .spans
        .iter()
        .enumerate()
        .map(|(k, &s)| SpanStats {
            s,
            read_queries: reads[k].count,
            read_mean: reads[k].mean(),
            read_max: reads[k].max,
            update_queries: updates[k].count,
            update_mean: updates[k].mean(),
            update_max: updates[k].max,
            update_failures: failures[k],
        })
        .collect();
    let norm = encoded.max(1) as f64;
    Ok(TrialReport {
        scheme: cfg.scheme,
        pmf: cfg.model.pmf().to_vec(),
        entropy: cfg.model.entropy(),
        n,
        epsilon: cfg.epsilon.to_string(),
        seed: cfg.seed,
        encodes: cfg.encodes,
        block_len: header.block_len as usize,
        query_unit: unit,
        total_bits: plan.total_bits(),
        rate: plan.total_bits() as f64 / n as f64,
        spans,
        level_histogram: hist.iter().map(|h| h / norm).collect(),
        survival: survivors
            .iter()
            .zip(&level_counts)
            .map(|(&s, &c): (&usize, &usize)| s as f64 / (c as f64 * norm))
            .collect(),
        errors,
    })
}

/// Default sweep: three sources, three lengths, two ε_0 values, all schemes.
/// Ternary sources use `b_0 = 64` because the completion-count table behind
/// their typical-set index grows too large at the default `b_0`.
pub fn default_suite(encodes: usize, queries: usize, seed: u64) -> Result<Vec<TrialConfig>> {
    let sources = [vec![0.5, 0.5], vec![0.2, 0.8], vec![0.1, 0.3, 0.6]];
    let mut out = Vec::new();
    for pmf in &sources {
        let model = SourceModel::new(pmf)?;
        for &n in &[1usize << 12, 1 << 15, 1 << 18] {
            for eps in ["0.4", "0.25"] {
                for scheme in [Scheme::Multilevel, Scheme::Naive] {
                    let mut c = TrialConfig::new(scheme, model.clone(), n, eps.parse()?);
                    c.spans = vec![1, 3, 8, 32, 256];
                    c.encodes = encodes;
                    c.queries = queries;
                    c.seed = seed;
                    if pmf.len() > 2 && scheme == Scheme::Multilevel {
                        c.block_len = Some(64);
                    }
                    out.push(c);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

/// One CSV row: a scalar metric, or a per-`s` metric when `s` is present.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub scheme: Scheme,
    pub n: usize,
    pub epsilon: String,
    pub seed: u64,
    pub s: Option<usize>,
    pub metric: String,
    pub value: f64,
}

pub fn csv_rows(report: &TrialReport) -> Vec<CsvRow> {
    let row = |s: Option<usize>, metric: String, value: f64| CsvRow {
        scheme: report.scheme,
        n: report.n,
        epsilon: report.epsilon.clone(),
        seed: report.seed,
        s,
        metric,
        value,
    };
    let mut out = vec![
        row(None, "rate".into(), report.rate),
        row(None, "entropy".into(), report.entropy),
        row(None, "total_bits".into(), report.total_bits as f64),
        row(None, "block_len".into(), report.block_len as f64),
        row(None, "errors".into(), report.errors as f64),
    ];
    for (l, v) in report.level_histogram.iter().enumerate() {
        out.push(row(None, format!("level_fraction_{l}"), *v));
    }
    for (l, v) in report.survival.iter().enumerate() {
        out.push(row(None, format!("survival_{l}"), *v));
    }
    for s in &report.spans {
        let k = Some(s.s);
        out.push(row(k, "read_mean".into(), s.read_mean));
        out.push(row(k, "read_max".into(), s.read_max as f64));
        out.push(row(k, "update_mean".into(), s.update_mean));
        out.push(row(k, "update_max".into(), s.update_max as f64));
        out.push(row(k, "update_failures".into(), s.update_failures as f64));
    }
    out
}

pub fn render_reports(reports: &[TrialReport], format: ReportFormat) -> Result<Vec<u8>> {
    match format {
        ReportFormat::Json => {
            let out = BenchOutput {
                schema_version: REPORT_SCHEMA_VERSION,
                reports: reports.to_vec(),
            };
            let mut v = serde_json::to_vec_pretty(&out).map_err(|e| Error::Export(e.to_string()))?;
            v.push(b'\n');
            Ok(v)
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in reports {
                for row in csv_rows(r) {
                    w.serialize(row).map_err(|e| Error::Export(e.to_string()))?;
                }
            }
            w.into_inner().map_err(|e| Error::Export(e.to_string()))
        }
    }
}

pub fn export_reports(reports: &[TrialReport], path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    std::fs::write(path, render_reports(reports, format)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn small(scheme: Scheme) -> TrialConfig {
        let m = SourceModel::new(&[0.5, 0.5]).unwrap();
        let mut c = TrialConfig::new(scheme, m, 1 << 12, "0.5".parse().unwrap());
        c.block_len = Some(8);
        c.spans = vec![1, 3, 8, 32];
        c.encodes = 4;
        c.queries = 50;
        c.seed = 11;
        c
    }

    #[test]
    fn same_seed_same_report() {
        let a = run_locality_trial(&small(Scheme::Multilevel)).unwrap();
        let b = run_locality_trial(&small(Scheme::Multilevel)).unwrap();
        assert_eq!(a, b);
        for s in &a.spans {
            assert!(s.read_mean <= s.read_max as f64);
            assert!(s.update_mean <= s.update_max as f64);
        }
        assert_eq!(a.rate, a.total_bits as f64 / a.n as f64);
        assert!((a.level_histogram.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn full_span_reads_whole_codeword() {
        let mut c = small(Scheme::Naive);
        c.block_len = Some(64);
        c.spans = vec![c.n];
        c.queries = 2;
        c.boundary_queries = 0;
        c.measure_updates = false;
        let r = run_locality_trial(&c).unwrap();
        assert!(r.spans[0].read_queries > 0);
        assert_eq!(r.spans[0].read_mean, r.total_bits as f64);
    }

    #[test]
    fn csv_round_trip_and_stable_bytes() {
        let r = run_locality_trial(&small(Scheme::Multilevel)).unwrap();
        let a = render_reports(std::slice::from_ref(&r), ReportFormat::Csv).unwrap();
        let b = render_reports(std::slice::from_ref(&r), ReportFormat::Csv).unwrap();
        assert_eq!(a, b);
        let mut rd = csv::Reader::from_reader(a.as_slice());
        let rows: Vec<CsvRow> = rd.deserialize().map(|v| v.unwrap()).collect();
        assert_eq!(rows, csv_rows(&r));
    }

    /// Checks `value` against the subset of JSON Schema the shipped file uses.
    fn conforms(value: &Value, schema: &Value, root: &Value) -> bool {
        if let Some(r) = schema.get("$ref").and_then(Value::as_str) {
            let name = r.trim_start_matches("#/$defs/");
            return conforms(value, &root["$defs"][name], root);
        }
        let ty_ok = match schema.get("type") {
            None => true,
            Some(Value::String(t)) => type_matches(value, t),
            Some(Value::Array(ts)) => ts.iter().any(|t| type_matches(value, t.as_str().unwrap())),
            Some(_) => false,
        };
        if !ty_ok {
            return false;
        }
        if let Some(allowed) = schema.get("enum").and_then(Value::as_array) {
            if !allowed.contains(value) {
                return false;
            }
        }
        if let (Some(obj), Some(props)) = (value.as_object(), schema.get("properties").and_then(Value::as_object)) {
            let required = schema.get("required").and_then(Value::as_array).cloned().unwrap_or_default();
            if required.iter().any(|k| !obj.contains_key(k.as_str().unwrap())) {
                return false;
            }
            if schema.get("additionalProperties") == Some(&Value::Bool(false))
                && obj.keys().any(|k| !props.contains_key(k))
            {
                return false;
            }
            if !obj.iter().all(|(k, v)| props.get(k).is_none_or(|s| conforms(v, s, root))) {
                return false;
            }
        }
        if let (Some(arr), Some(items)) = (value.as_array(), schema.get("items")) {
            return arr.iter().all(|v| conforms(v, items, root));
        }
        true
    }

    fn type_matches(v: &Value, t: &str) -> bool {
        match t {
            "object" => v.is_object(),
            "array" => v.is_array(),
            "string" => v.is_string(),
            "number" => v.is_number(),
            "integer" => v.is_u64() || v.is_i64(),
            "null" => v.is_null(),
            _ => false,
        }
    }

    #[test]
    fn json_matches_shipped_schema() {
        let reports = vec![
            run_locality_trial(&small(Scheme::Multilevel)).unwrap(),
            run_locality_trial(&small(Scheme::Naive)).unwrap_or_else(|_| {
                let mut c = small(Scheme::Naive);
                c.block_len = Some(64);
                c.epsilon = "0.4".parse().unwrap();
                run_locality_trial(&c).unwrap()
            }),
        ];
        let bytes = render_reports(&reports, ReportFormat::Json).unwrap();
        assert_eq!(bytes, render_reports(&reports, ReportFormat::Json).unwrap());
        let value: Value = serde_json::from_slice(&bytes).unwrap();
        let schema: Value = serde_json::from_str(REPORT_JSON_SCHEMA).unwrap();
        assert!(conforms(&value, &schema, &schema));
        let mut broken = value.clone();
        broken["reports"][0]["spans"][0]["read_max"] = Value::String("x".into());
        assert!(!conforms(&broken, &schema, &schema));
        let back: BenchOutput = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(back.reports, reports);
    }
}
