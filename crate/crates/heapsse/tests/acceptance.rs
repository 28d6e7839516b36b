//! Acceptance suite. Runs every primary criterion, prints one PASS/FAIL line
//! for each and exits non-zero if any failed. Tolerances are the constants
//! below.
//!
//! Run alone with `cargo test -p heapsse --test acceptance`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use heapsse::bench::{controlled_ds_queries, generate_dictionary, r_squared, Harness};
use heapsse::client::{Client, ClientError, ClientState, Collection, PlainFile};
use heapsse::server::{CloudServer, ServerConfig};
use heapsse::transport::{InProcessTransport, RecordingTransport};
use heapsse::wire::{LeakageResponse, SubstringQueryRequest, TraceKind, UpdateKeywordRequest};
use heapsse_core::{KeyBundle, PositionHeap};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const HEAP_EXAMPLE_MAX_RUNTIME: Duration = Duration::from_secs(1);
const CAMPAIGN_TRIALS: u64 = 1000;
const CAMPAIGN_MAX_KEYWORDS: usize = 200;
const CAMPAIGN_MAX_INSERTS: usize = 10;
const CAMPAIGN_MAX_DELETES: usize = 5;
const CAMPAIGN_MIN_QUERIES: usize = 20;
const CAMPAIGN_MAX_RUNTIME: Duration = Duration::from_secs(60);
const NODE_LAW_DICTIONARIES: u64 = 100;
const SCALING_SMALL_M: usize = 5_000;
const SCALING_LARGE_M: usize = 40_000;
const SCALING_DS: usize = 5;
const SCALING_MAX_RATIO: f64 = 2.0;
const SCALING_MAX_RUNTIME: Duration = Duration::from_secs(600);
const TIMING_REPETITIONS: usize = 30;
const INSERT_MIN_R2: f64 = 0.9;

/// Symbols of the campaign dictionaries. None of them can occur in hex,
/// base64 or the JSON framing, so any occurrence in an outbound message is
/// a plaintext leak.
const PLANT_ALPHABET: &[u8] = b"!^~";

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn keys(seed: u64) -> KeyBundle {
    KeyBundle::generate(128, 1 << 20, &mut ChaCha20Rng::seed_from_u64(seed)).unwrap()
}

type Recorder = Arc<RecordingTransport<InProcessTransport>>;

fn recorded_client(server: &Arc<CloudServer>, seed: u64) -> (Client, Recorder) {
    let rec = Arc::new(RecordingTransport::new(InProcessTransport(server.clone())));
    let mut c = Client::new(ClientState::with_keys("in-process", &keys(seed)), Box::new(rec.clone())).unwrap();
    c.seed_rng(seed);
    (c, rec)
}

fn names(c: &Client, s: &str) -> Result<BTreeSet<String>, ClientError> {
    Ok(c.suggest(s)?.into_iter().map(|s| s.keyword).collect())
}

fn heap_worked_example() -> Outcome {
    let t = Instant::now();
    let h = PositionHeap::build(b"bbabbbaaba");
    let c = h.candidates(b"bb");
    let found = h.search(b"bb");
    let elapsed = t.elapsed();
    let pass = c.l1 == [9] && c.l2 == [5, 1, 4] && found == BTreeSet::from([1, 4, 5]) && elapsed < HEAP_EXAMPLE_MAX_RUNTIME;
    Outcome {
        name: "position_heap_worked_example",
        pass,
        detail: format!("L1={:?} L2={:?} search={:?} in {:?}", c.l1, c.l2, found, elapsed),
    }
}

fn outsource_worked_example() -> Outcome {
    let server = Arc::new(CloudServer::new(ServerConfig::default()));
    let (mut c, rec) = recorded_client(&server, 34);
    let mut run = || -> Result<(bool, String), ClientError> {
        let stats = c.outsource(&Collection::from_dictionary(["bbab", "bba", "aba"]))?;
        let got = names(&c, "ab")?;
        rec.clear();
        let raw = c.query_raw("ab")?;
        let wire: heapsse::wire::SubstringQueryResponse =
            serde_json::from_slice(&rec.exchanges()[0].response).unwrap();
        let pass = stats.iw_nodes == 11
            && got == BTreeSet::from(["aba".to_string(), "bbab".to_string()])
            && wire.main.l1.len() == 1
            && wire.main.l2.len() == 2
            && raw == wire;
        Ok((
            pass,
            format!(
                "iw_nodes={} suggest(ab)={:?} raw l1={} l2={}",
                stats.iw_nodes,
                got,
                wire.main.l1.len(),
                wire.main.l2.len()
            ),
        ))
    };
    outcome("outsource_and_query_worked_example", run())
}

fn insert_worked_example() -> Outcome {
    let server = Arc::new(CloudServer::new(ServerConfig::default()));
    let (mut c, rec) = recorded_client(&server, 5);
    let mut run = || -> Result<(bool, String), ClientError> {
        c.outsource(&Collection::from_dictionary(["bbab", "bba", "aba"]))?;
        rec.clear();
        let o = c.insert_keyword("ba")?;
        let sent: UpdateKeywordRequest = serde_json::from_slice(&rec.exchanges()[0].request).unwrap();
        let labels: usize = sent.suffix_tokens.iter().map(Vec::len).sum();
        let ciphertexts = usize::from(!sent.enc_keyword.is_empty());
        let got = names(&c, "ba")?;
        let pass = labels == 7 && ciphertexts == 1 && o.nodes_added == 2 && got.contains("ba");
        Ok((
            pass,
            format!(
                "labels={labels} ciphertexts={ciphertexts} nodes_added={} suggest(ba)={got:?}",
                o.nodes_added
            ),
        ))
    };
    outcome("insertion_worked_example", run())
}

fn outcome(name: &'static str, r: Result<(bool, String), ClientError>) -> Outcome {
    match r {
        Ok((pass, detail)) => Outcome { name, pass, detail },
        Err(e) => Outcome {
            name,
            pass: false,
            detail: format!("error: {e}"),
        },
    }
}

fn plant_word<R: Rng>(rng: &mut R, max: usize) -> String {
    let len = rng.gen_range(1..=max);
    (0..len)
        .map(|_| *PLANT_ALPHABET.choose(rng).unwrap() as char)
        .collect()
}

fn brute_force(live: &BTreeSet<String>, s: &str) -> BTreeSet<String> {
    live.iter().filter(|w| w.contains(s)).cloned().collect()
}

fn contains_bytes(hay: &[u8], needle: &[u8]) -> bool {
    needle.is_empty() || hay.windows(needle.len()).any(|w| w == needle)
}

#[derive(Default)]
struct CampaignStats {
    queries: usize,
    inserts: usize,
    deletes: usize,
    mismatches: usize,
    first_mismatch: Option<String>,
    messages: usize,
    outbound_bytes: usize,
    leaks: usize,
    first_leak: Option<String>,
}

/// Random interleavings of outsource, insert, delete and query, each
/// suggestion compared with plain containment over the live dictionary, and
/// every outbound message scanned for planted plaintext.
fn campaign() -> CampaignStats {
    let mut st = CampaignStats::default();
    for trial in 0..CAMPAIGN_TRIALS {
        let mut rng = ChaCha20Rng::seed_from_u64(0x5eed_0000 + trial);
        let server = Arc::new(CloudServer::new(ServerConfig::default()));
        let (mut c, rec) = recorded_client(&server, trial);

        let target = rng.gen_range(0..=CAMPAIGN_MAX_KEYWORDS);
        let mut initial = BTreeSet::new();
        for _ in 0..target * 4 {
            if initial.len() == target {
                break;
            }
            initial.insert(plant_word(&mut rng, 8));
        }
        let mut dictionary: Vec<String> = initial.iter().cloned().collect();
        dictionary.shuffle(&mut rng);

        let n_files = rng.gen_range(0..=3);
        let files: Vec<PlainFile> = (0..n_files)
            .map(|i| PlainFile {
                name: format!("~name^{trial}!{i}~"),
                contents: format!("~^content!{trial}^{i}^{}~", plant_word(&mut rng, 6)).into_bytes(),
            })
            .collect();
        let mut postings: BTreeMap<String, Vec<String>> = BTreeMap::new();
        if !files.is_empty() {
            for w in dictionary.iter().take(5) {
                let f = files.choose(&mut rng).unwrap();
                postings.insert(w.clone(), vec![f.name.clone()]);
            }
        }
        let planted_blobs: Vec<Vec<u8>> = files
            .iter()
            .flat_map(|f| [f.contents.clone(), f.name.clone().into_bytes()])
            .collect();
        let collection = Collection {
            dictionary: dictionary.clone(),
            files,
            postings: postings.clone(),
        };
        c.outsource(&collection).expect("outsource");

        let mut live = initial.clone();
        let mut revoked: BTreeSet<String> = BTreeSet::new();
        let n_ins = rng.gen_range(0..=CAMPAIGN_MAX_INSERTS);
        let n_del = rng.gen_range(0..=CAMPAIGN_MAX_DELETES);
        let n_q = rng.gen_range(CAMPAIGN_MIN_QUERIES..=CAMPAIGN_MIN_QUERIES + 10);
        let mut ops: Vec<u8> = [vec![b'i'; n_ins], vec![b'd'; n_del], vec![b'q'; n_q]].concat();
        ops.shuffle(&mut rng);

        for op in ops {
            match op {
                b'i' => {
                    let w = plant_word(&mut rng, 8);
                    match c.insert_keyword(&w) {
                        Ok(_) => {
                            assert!(!revoked.contains(&w));
                            live.insert(w);
                        }
                        Err(ClientError::RevokedKeyword(_)) => assert!(revoked.contains(&w)),
                        Err(e) => panic!("insert failed: {e}"),
                    }
                    st.inserts += 1;
                }
                b'd' => {
                    let w = if !live.is_empty() && rng.gen_bool(0.8) {
                        live.iter().nth(rng.gen_range(0..live.len())).unwrap().clone()
                    } else {
                        plant_word(&mut rng, 8)
                    };
                    c.delete_keyword(&w).expect("delete");
                    live.remove(&w);
                    revoked.insert(w);
                    st.deletes += 1;
                }
                _ => {
                    let s = plant_word(&mut rng, 6);
                    let got = names(&c, &s).expect("suggest");
                    let want = brute_force(&live, &s);
                    if got != want {
                        st.mismatches += 1;
                        st.first_mismatch.get_or_insert_with(|| {
                            format!("trial {trial} query {s:?}: got {got:?} want {want:?}")
                        });
                    }
                    st.queries += 1;
                }
            }
        }
        for (w, files) in &postings {
            assert_eq!(c.files_for(w).expect("files").len(), files.len());
        }

        for ex in rec.exchanges() {
            st.messages += 1;
            let outbound = [ex.path.as_bytes(), &ex.request].concat();
            st.outbound_bytes += outbound.len();
            let symbol = outbound.iter().position(|b| PLANT_ALPHABET.contains(b));
            let blob = planted_blobs.iter().find(|p| contains_bytes(&outbound, p));
            if symbol.is_some() || blob.is_some() {
                st.leaks += 1;
                st.first_leak
                    .get_or_insert_with(|| format!("trial {trial} {} {}", ex.method, ex.path));
            }
        }
    }
    st
}

fn node_law() -> Outcome {
    let mut failures = Vec::new();
    let mut total_nodes = 0;
    for i in 0..NODE_LAW_DICTIONARIES {
        let mut rng = ChaCha20Rng::seed_from_u64(0xd1c7 + i);
        let m = rng.gen_range(0..=400);
        let words: BTreeSet<String> = (0..m)
            .map(|_| {
                let len = rng.gen_range(1..=12);
                (0..len).map(|_| rng.gen_range(b'a'..=b'e') as char).collect()
            })
            .collect();
        let expected = 1 + words.iter().map(String::len).sum::<usize>() as u64;
        let server = Arc::new(CloudServer::new(ServerConfig::default()));
        let (mut c, _) = recorded_client(&server, i);
        let got = c.outsource(&Collection::from_dictionary(words)).map(|s| s.iw_nodes);
        match got {
            Ok(n) if n == expected => total_nodes += n,
            other => failures.push(format!("dictionary {i}: expected {expected}, got {other:?}")),
        }
    }
    Outcome {
        name: "node_count_law",
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("{NODE_LAW_DICTIONARIES} dictionaries, {total_nodes} nodes total, all equal 1 + sum |w|")
        } else {
            failures.join("; ")
        },
    }
}

/// Same query length at both sizes when possible, so both points send the
/// same number of tokens.
fn scaling_queries(small: &[String], large: &[String], n: usize) -> (Vec<String>, Vec<String>) {
    for len in [3, 4, 2, 5, 6, 1] {
        let a: Vec<String> = small.iter().filter(|s| s.len() == len).take(n).cloned().collect();
        let b: Vec<String> = large.iter().filter(|s| s.len() == len).take(n).cloned().collect();
        if a.len() >= n.min(5) && b.len() >= n.min(5) {
            return (a, b);
        }
    }
    (small.iter().take(n).cloned().collect(), large.iter().take(n).cloned().collect())
}

fn time_pass(h: &Harness, qs: &[String]) -> f64 {
    let t = Instant::now();
    for q in qs {
        std::hint::black_box(h.client.suggest(q).unwrap());
    }
    t.elapsed().as_secs_f64() * 1e3 / qs.len() as f64
}

fn scaling() -> Outcome {
    let t = Instant::now();
    let run = || -> Result<(bool, String), ClientError> {
        let small_w = generate_dictionary(SCALING_SMALL_M, 81);
        let large_w = generate_dictionary(SCALING_LARGE_M, 82);
        let mut small = Harness::new(false, 81).unwrap();
        let mut large = Harness::new(false, 82).unwrap();
        small.outsource(&small_w).unwrap();
        large.outsource(&large_w).unwrap();
        let (qa, qb) = scaling_queries(
            &controlled_ds_queries(&small_w, SCALING_DS).unwrap(),
            &controlled_ds_queries(&large_w, SCALING_DS).unwrap(),
            20,
        );
        // every chosen query really matches d_s keywords, checked by a scan
        let exact = |w: &[heapsse_core::Keyword], q: &str| {
            w.iter().filter(|k| k.to_string().contains(q)).count() == SCALING_DS
        };
        let verified = qa.iter().all(|q| exact(&small_w, q)) && qb.iter().all(|q| exact(&large_w, q));
        for _ in 0..3 {
            time_pass(&small, &qa);
            time_pass(&large, &qb);
        }
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for _ in 0..TIMING_REPETITIONS {
            a.push(time_pass(&small, &qa));
            b.push(time_pass(&large, &qb));
        }
        let ma = a.iter().sum::<f64>() / a.len() as f64;
        let mb = b.iter().sum::<f64>() / b.len() as f64;
        let ratio = mb / ma;
        let elapsed = t.elapsed();
        let lens: BTreeSet<usize> = qa.iter().chain(&qb).map(String::len).collect();
        Ok((
            verified && ratio <= SCALING_MAX_RATIO && elapsed < SCALING_MAX_RUNTIME,
            format!(
                "mean suggest {ma:.4} ms at m={SCALING_SMALL_M} vs {mb:.4} ms at m={SCALING_LARGE_M}, ratio {ratio:.3} (<= {SCALING_MAX_RATIO}); query lengths {lens:?}, {}+{} queries x {TIMING_REPETITIONS} reps; {elapsed:.1?}",
                qa.len(),
                qb.len()
            ),
        ))
    };
    outcome("query_latency_flat_in_m", run())
}

fn insertion_scaling() -> Outcome {
    let run = || -> Result<(bool, String), ClientError> {
        let words = generate_dictionary(SCALING_SMALL_M, 10);
        let mut h = Harness::new(false, 10).unwrap();
        h.outsource(&words).unwrap();
        let mut avoid: HashSet<String> = words.iter().map(|w| w.to_string()).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(1010);
        let zs: Vec<usize> = (2..=20).collect();
        let mut fresh = |z: usize, rng: &mut ChaCha20Rng| loop {
            let w: String = (0..z).map(|_| rng.gen_range(b'a'..=b'z') as char).collect();
            if avoid.insert(w.clone()) {
                return w;
            }
        };
        let mut sums = vec![0.0; zs.len()];
        // rounds interleave every z so slow drift spreads evenly
        for round in 0..TIMING_REPETITIONS + 3 {
            for (i, &z) in zs.iter().enumerate() {
                let w = fresh(z, &mut rng);
                let t = Instant::now();
                h.client.insert_keyword(&w)?;
                if round >= 3 {
                    sums[i] += t.elapsed().as_secs_f64() * 1e3;
                }
            }
        }
        let means: Vec<f64> = sums.iter().map(|s| s / TIMING_REPETITIONS as f64).collect();
        let labels: Vec<f64> = zs.iter().map(|&z| (z * (z + 5) / 2) as f64).collect();
        let r2 = r_squared(&labels, &means);
        Ok((
            r2 >= INSERT_MIN_R2,
            format!(
                "R^2 = {r2:.4} (>= {INSERT_MIN_R2}) over z=2..20; mean ms at z=2: {:.4}, z=20: {:.4}",
                means[0],
                means[means.len() - 1]
            ),
        ))
    };
    outcome("insert_time_linear_in_labels", run())
}

fn leakage_determinism() -> Outcome {
    let server = Arc::new(CloudServer::new(ServerConfig {
        data_dir: None,
        tracing: true,
    }));
    let (mut c, rec) = recorded_client(&server, 51);
    let mut run = || -> Result<(bool, String), ClientError> {
        c.outsource(&Collection::from_dictionary(generate_dictionary(500, 51).iter().map(|w| w.to_string())))?;
        let traces_since = |since: u64| -> Vec<heapsse::wire::LeakageTrace> {
            let r = server.handle("GET", &format!("/v1/debug/leakage?since={since}"), b"");
            serde_json::from_slice::<LeakageResponse>(&r.body).unwrap().traces
        };
        let query_paths = |since: u64| -> Vec<(heapsse::wire::IndexName, Vec<u32>)> {
            traces_since(since)
                .into_iter()
                .filter(|t| t.kind == TraceKind::QueryPath)
                .map(|t| (t.index, t.node_ids))
                .collect()
        };
        let mut checked = 0;
        let mut failures = Vec::new();
        for (s, x) in [("ab", "c"), ("e", "st"), ("qu", "a"), ("zz", "z"), ("ing", "s")] {
            rec.clear();
            let seq0 = traces_since(0).last().map_or(0, |t| t.seq);
            c.suggest(s)?;
            let seq1 = traces_since(0).last().map_or(0, |t| t.seq);
            c.suggest(s)?;
            c.suggest(&format!("{s}{x}"))?;
            let ex = rec.exchanges();
            let same_body = ex[0].request == ex[1].request;
            let first: Vec<_> = query_paths(seq0).into_iter().take(2).collect();
            let second: Vec<_> = query_paths(seq1).into_iter().take(2).collect();
            let same_trace = first == second && first.len() == 2;
            let a: SubstringQueryRequest = serde_json::from_slice(&ex[0].request).unwrap();
            let b: SubstringQueryRequest = serde_json::from_slice(&ex[2].request).unwrap();
            let prefix = a.tokens.len() == s.len() && b.tokens[..s.len()] == a.tokens[..];
            if !(same_body && same_trace && prefix) {
                failures.push(format!("{s}: body {same_body} trace {same_trace} prefix {prefix}"));
            }
            checked += 1;
        }
        Ok((
            failures.is_empty(),
            if failures.is_empty() {
                format!("{checked} query pairs: identical bodies and query_path traces, shared token prefixes")
            } else {
                failures.join("; ")
            },
        ))
    };
    outcome("leakage_determinism", run())
}

fn main() {
    let mut results = Vec::new();
    let mut report = |o: Outcome| {
        println!("{} {:<36} {}", if o.pass { "PASS" } else { "FAIL" }, o.name, o.detail);
        results.push(o.pass);
    };

    report(heap_worked_example());
    report(outsource_worked_example());
    report(insert_worked_example());

    let t = Instant::now();
    let st = campaign();
    let elapsed = t.elapsed();
    report(Outcome {
        name: "oracle_equivalence_campaign",
        pass: st.mismatches == 0 && elapsed < CAMPAIGN_MAX_RUNTIME,
        detail: format!(
            "{CAMPAIGN_TRIALS} trials, {} queries, {} inserts, {} deletes, {} mismatches in {elapsed:.1?} (< {CAMPAIGN_MAX_RUNTIME:?}){}",
            st.queries,
            st.inserts,
            st.deletes,
            st.mismatches,
            st.first_mismatch.map(|m| format!("; first: {m}")).unwrap_or_default()
        ),
    });
    report(Outcome {
        name: "privacy_hygiene_outbound_scan",
        pass: st.leaks == 0 && st.messages > 0,
        detail: format!(
            "{} client->server messages, {} bytes scanned, {} with planted plaintext{}",
            st.messages,
            st.outbound_bytes,
            st.leaks,
            st.first_leak.map(|m| format!("; first: {m}")).unwrap_or_default()
        ),
    });

    report(node_law());
    report(leakage_determinism());
    report(insertion_scaling());
    report(scaling());

    let failed = results.iter().filter(|p| !**p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
