//! Desk-scale timing and size measurements over synthetic dictionaries.
//!
//! By default client and server run in one process and talk through the
//! in-process transport, so no network time is measured. `over_wire`
//! starts a loopback HTTP listener instead.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use heapsse_core::{KeyBundle, Keyword};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::client::{Client, ClientError, ClientState, Collection, DEFAULT_INDEX_CAPACITY};
use crate::http::BackgroundServer;
use crate::server::{CloudServer, ServerConfig};
use crate::transport::{HttpTransport, InProcessTransport, Transport};

const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz";
/// Longest substring considered when searching for controlled queries.
pub const MAX_CONTROLLED_LEN: usize = 6;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("no substring matches exactly {0} keywords")]
    TargetUnachievable(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Client(#[from] ClientError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LengthDistribution {
    /// `min + Geometric(p)`, redrawn while above `max`.
    TruncatedGeometric { p: f64, min: usize, max: usize },
    Uniform { min: usize, max: usize },
}

impl Default for LengthDistribution {
    fn default() -> Self {
        LengthDistribution::TruncatedGeometric { p: 0.2, min: 2, max: 20 }
    }
}

impl LengthDistribution {
    fn check(&self) -> Result<(), BenchError> {
        let (min, max) = match *self {
            LengthDistribution::TruncatedGeometric { p, min, max } => {
                if !(p > 0.0 && p <= 1.0) {
                    return Err(BenchError::Config(format!("geometric p = {p} outside (0, 1]")));
                }
                (min, max)
            }
            LengthDistribution::Uniform { min, max } => (min, max),
        };
        if min == 0 || min > max {
            return Err(BenchError::Config(format!("bad length range {min}..={max}")));
        }
        Ok(())
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        match *self {
            LengthDistribution::TruncatedGeometric { p, min, max } => loop {
                let mut len = min;
                while len <= max && !rng.gen_bool(p) {
                    len += 1;
                }
                if len <= max {
                    return len;
                }
            },
            LengthDistribution::Uniform { min, max } => rng.gen_range(min..=max),
        }
    }
}

fn random_word<R: Rng>(len: usize, rng: &mut R) -> String {
    (0..len)
        .map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())] as char)
        .collect()
}

/// `m` distinct lowercase keywords with lengths from the default
/// distribution. Same seed, same list.
pub fn generate_dictionary(m: usize, seed: u64) -> Vec<Keyword> {
    generate_dictionary_with(m, &LengthDistribution::default(), seed)
}

pub fn generate_dictionary_with(m: usize, dist: &LengthDistribution, seed: u64) -> Vec<Keyword> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(m);
    let mut out = Vec::with_capacity(m);
    while out.len() < m {
        let w = random_word(dist.sample(&mut rng), &mut rng);
        if seen.insert(w.clone()) {
            out.push(Keyword::new(w).expect("lowercase word"));
        }
    }
    out
}

/// Substrings of length up to [`MAX_CONTROLLED_LEN`] contained in exactly
/// `target` keywords of `words`, sorted by length then bytes.
pub fn controlled_ds_queries(words: &[Keyword], target: usize) -> Result<Vec<String>, BenchError> {
    if target == 0 {
        return Err(BenchError::Config("matched keyword target must be at least 1".into()));
    }
    let mut counts: HashMap<&[u8], usize> = HashMap::new();
    let mut local = HashSet::new();
    for w in words {
        let b = w.as_bytes();
        local.clear();
        for i in 0..b.len() {
            for j in i + 1..=b.len().min(i + MAX_CONTROLLED_LEN) {
                local.insert(&b[i..j]);
            }
        }
        for s in local.drain() {
            *counts.entry(s).or_default() += 1;
        }
    }
    let mut out: Vec<&[u8]> = counts
        .into_iter()
        .filter(|&(_, c)| c == target)
        .map(|(s, _)| s)
        .collect();
    if out.is_empty() {
        return Err(BenchError::TargetUnachievable(target));
    }
    out.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    Ok(out
        .into_iter()
        .map(|s| String::from_utf8(s.to_vec()).expect("ascii"))
        .collect())
}

/// Picks up to `n` queries, taking them from the first listed length that
/// has any and falling back to the remaining lengths in order.
pub fn pick_queries(candidates: &[String], lengths: &[usize], n: usize) -> Vec<String> {
    let mut out = Vec::new();
    for &l in lengths {
        out.extend(candidates.iter().filter(|s| s.len() == l).take(n - out.len()).cloned());
        if out.len() == n {
            break;
        }
    }
    if out.is_empty() {
        out.extend(candidates.iter().take(n).cloned());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub dictionary_sizes: Vec<usize>,
    #[serde(default)]
    pub keyword_length_distribution: LengthDistribution,
    /// Preferred query lengths for controlled queries, in order.
    pub query_lengths: Vec<usize>,
    pub matched_keyword_targets: Vec<usize>,
    /// Queries timed per (m, d_s) point.
    #[serde(default = "default_queries_per_point")]
    pub queries_per_point: usize,
    pub repetitions: usize,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
    pub seed: u64,
    /// Keyword lengths for the insertion phase.
    #[serde(default)]
    pub insert_lengths: Vec<usize>,
    /// Dictionary size the insertion phase starts from; defaults to the
    /// smallest of `dictionary_sizes`.
    #[serde(default)]
    pub insert_dictionary_size: Option<usize>,
    #[serde(default)]
    pub over_wire: bool,
    /// Skip the outsourcing time measurement, which repeats the full build.
    #[serde(default)]
    pub skip_outsource_timing: bool,
}

fn default_queries_per_point() -> usize {
    20
}

fn default_warmup() -> usize {
    3
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        let cfg: BenchConfig = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.repetitions < 30 {
            return Err(BenchError::Config(format!(
                "repetitions = {} but timing rows need at least 30",
                self.repetitions
            )));
        }
        if self.dictionary_sizes.is_empty() || self.dictionary_sizes.contains(&0) {
            return Err(BenchError::Config("dictionary_sizes must be non-empty and positive".into()));
        }
        if self.matched_keyword_targets.contains(&0) {
            return Err(BenchError::Config("matched keyword targets must be at least 1".into()));
        }
        if self.insert_lengths.contains(&0) {
            return Err(BenchError::Config("insert lengths must be at least 1".into()));
        }
        if self.queries_per_point == 0 {
            return Err(BenchError::Config("queries_per_point must be at least 1".into()));
        }
        self.keyword_length_distribution.check()
    }
}

/// One CSV row. Empty `d_s` / `keyword_len` cells mean "not applicable";
/// for query rows `keyword_len` holds the query length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub phase: String,
    pub m: usize,
    pub d_s: Option<usize>,
    pub keyword_len: Option<usize>,
    pub metric: String,
    pub value: f64,
    pub unit: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub samples: usize,
}

impl Summary {
    pub fn of(samples: &[f64]) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Summary {
            mean,
            std: var.sqrt(),
            samples: n,
        }
    }
}

fn timing_rows(phase: &str, m: usize, d_s: Option<usize>, len: Option<usize>, s: Summary) -> [Row; 2] {
    let row = |metric: &str, value| Row {
        phase: phase.into(),
        m,
        d_s,
        keyword_len: len,
        metric: metric.into(),
        value,
        unit: "ms".into(),
    };
    [row("mean", s.mean), row("std", s.std)]
}

/// A client and a fresh server, wired in-process or over loopback HTTP.
pub struct Harness {
    pub server: Arc<CloudServer>,
    pub client: Client,
    _listener: Option<BackgroundServer>,
}

impl Harness {
    pub fn new(over_wire: bool, seed: u64) -> Result<Self, BenchError> {
        let server = Arc::new(CloudServer::new(ServerConfig::default()));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keys = KeyBundle::generate(128, DEFAULT_INDEX_CAPACITY, &mut rng).expect("valid lambda");
        let (transport, listener): (Box<dyn Transport>, _) = if over_wire {
            let l = BackgroundServer::start(([127, 0, 0, 1], 0).into(), server.clone())?;
            (Box::new(HttpTransport::new(&l.url())), Some(l))
        } else {
            (Box::new(InProcessTransport(server.clone())), None)
        };
        let mut client = Client::new(ClientState::with_keys("in-process", &keys), transport)?;
        client.seed_rng(seed);
        Ok(Harness {
            server,
            client,
            _listener: listener,
        })
    }

    pub fn outsource(&mut self, words: &[Keyword]) -> Result<f64, BenchError> {
        let c = Collection::from_dictionary(words.iter().map(|w| w.to_string()));
        let t = Instant::now();
        self.client.outsource(&c)?;
        Ok(ms(t))
    }

    /// Serialized size of the main index as the server persists it.
    pub fn index_bytes(&self) -> usize {
        serde_json::to_vec(&self.server.snapshot().iw).expect("serializes").len()
    }

    /// Per-repetition mean suggest latency over `queries`, after `warmup`
    /// discarded passes.
    pub fn time_queries(&self, queries: &[String], reps: usize, warmup: usize) -> Result<Summary, BenchError> {
        let mut samples = Vec::with_capacity(reps);
        for r in 0..warmup + reps {
            let t = Instant::now();
            for q in queries {
                std::hint::black_box(self.client.suggest(q)?);
            }
            if r >= warmup {
                samples.push(ms(t) / queries.len() as f64);
            }
        }
        Ok(Summary::of(&samples))
    }

    /// Times `reps` inserts of fresh keywords of length `z`.
    pub fn time_inserts(
        &mut self,
        z: usize,
        reps: usize,
        warmup: usize,
        avoid: &mut HashSet<String>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Summary, BenchError> {
        let mut samples = Vec::with_capacity(reps);
        for r in 0..warmup + reps {
            let w = loop {
                let w = random_word(z, rng);
                if avoid.insert(w.clone()) {
                    break w;
                }
            };
            let t = Instant::now();
            self.client.insert_keyword(&w)?;
            if r >= warmup {
                samples.push(ms(t));
            }
        }
        Ok(Summary::of(&samples))
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Runs every configured phase and returns the report rows.
pub fn run_suite(cfg: &BenchConfig) -> Result<Vec<Row>, BenchError> {
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut sizes: Vec<usize> = cfg.dictionary_sizes.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let insert_m = cfg.insert_dictionary_size.unwrap_or(sizes[0]);
    if !cfg.insert_lengths.is_empty() && !sizes.contains(&insert_m) {
        sizes.push(insert_m);
    }

    for &m in &sizes {
        let words = generate_dictionary_with(m, &cfg.keyword_length_distribution, cfg.seed ^ m as u64);
        let mut h = Harness::new(cfg.over_wire, cfg.seed)?;
        let build = h.outsource(&words)?;
        rows.push(Row {
            phase: "index_bytes".into(),
            m,
            d_s: None,
            keyword_len: None,
            metric: "value".into(),
            value: h.index_bytes() as f64,
            unit: "bytes".into(),
        });
        if !cfg.skip_outsource_timing && cfg.dictionary_sizes.contains(&m) {
            let mut samples = vec![build];
            while samples.len() < cfg.repetitions {
                samples.push(h.outsource(&words)?);
            }
            rows.extend(timing_rows("outsource_time", m, None, None, Summary::of(&samples)));
        }
        if cfg.dictionary_sizes.contains(&m) {
            for &ds in &cfg.matched_keyword_targets {
                let qs = pick_queries(&controlled_ds_queries(&words, ds)?, &cfg.query_lengths, cfg.queries_per_point);
                let s = h.time_queries(&qs, cfg.repetitions, cfg.warmup)?;
                let len = qs.iter().map(String::len).max();
                rows.extend(timing_rows("query_time", m, Some(ds), len, s));
            }
        }
        if m == insert_m && !cfg.insert_lengths.is_empty() {
            let mut avoid: HashSet<String> = words.iter().map(|w| w.to_string()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
            for &z in &cfg.insert_lengths {
                let s = h.time_inserts(z, cfg.repetitions, cfg.warmup, &mut avoid, &mut rng)?;
                rows.extend(timing_rows("insert_time", m, None, Some(z), s));
            }
        }
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[Row], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run_to_file(cfg: &BenchConfig, out: &Path) -> Result<Vec<Row>, BenchError> {
    let rows = run_suite(cfg)?;
    write_csv(&rows, std::fs::File::create(out)?)?;
    Ok(rows)
}

/// Coefficient of determination of the least-squares line through `(x, y)`.
pub fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy * sxy / (sxx * syy)
}
