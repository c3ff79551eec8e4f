#![allow(dead_code)]

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use rand::seq::SliceRandom;
use rand::Rng;
use ssm_core::backend::{BackendDescriptor, MaskQuery, MaskResponse, MaskedLm};
use ssm_core::datasets::{Example, Relation, Task, Words};
use ssm_core::BackendError;

pub const WORDS: [&str; 12] = [
    "the", "a", "man", "dog", "ran", "sat", "on", "mat", "fast", "red", "sky", "blue",
];

pub fn random_words(rng: &mut impl Rng, len: usize) -> Words {
    (0..len)
        .map(|_| WORDS.choose(rng).unwrap().to_string())
        .collect()
}

pub fn random_corpus(rng: &mut impl Rng, sentences: usize) -> Vec<Words> {
    (0..sentences)
        .map(|_| {
            let len = rng.gen_range(3..9);
            // Leave the last two words out of the corpus so some lookups are unseen.
            (0..len)
                .map(|_| WORDS[rng.gen_range(0..WORDS.len() - 2)].to_string())
                .collect()
        })
        .collect()
}

/// A synthetic-task example with random lengths and arity.
pub fn random_example(rng: &mut impl Rng, id: usize, min_len: usize) -> Example {
    let n = rng.gen_range(2..=5);
    let premise_len = rng.gen_range(min_len..min_len + 8);
    Example {
        id: format!("r{id}"),
        premise: random_words(rng, premise_len),
        hypotheses: (0..n)
            .map(|_| {
                let len = rng.gen_range(min_len..min_len + 6);
                random_words(rng, len)
            })
            .collect(),
        gold_index: Some(rng.gen_range(0..n)),
        task: Task::Synthetic,
        relation: Relation::None,
    }
}

/// Additive-smoothing unigram/bigram tables rebuilt from scratch, for
/// cross-checking the library backend.
pub struct OracleCounts {
    pub k: f64,
    pub bigram: bool,
    uni: HashMap<String, f64>,
    bi: HashMap<String, HashMap<String, f64>>,
    n: f64,
    v: f64,
}

impl OracleCounts {
    pub fn new(corpus: &[Words], k: f64, bigram: bool) -> Self {
        let mut uni = HashMap::new();
        let mut bi: HashMap<String, HashMap<String, f64>> = HashMap::new();
        let mut n = 0.0;
        for s in corpus {
            for (i, w) in s.iter().enumerate() {
                *uni.entry(w.clone()).or_insert(0.0) += 1.0;
                let left = if i == 0 { "<s>".to_string() } else { s[i - 1].clone() };
                *bi.entry(left).or_default().entry(w.clone()).or_insert(0.0) += 1.0;
                n += 1.0;
            }
        }
        let v = uni.len() as f64;
        Self { k, bigram, uni, bi, n, v }
    }

    /// Log-probability of `word` filling a masked slot whose left neighbour
    /// outside the mask is `left`.
    pub fn log_prob(&self, word: &str, left: Option<&str>) -> f64 {
        let p = if self.bigram {
            let row = self.bi.get(left.unwrap_or("<s>"));
            let c = row.and_then(|r| r.get(word)).copied().unwrap_or(0.0);
            let total: f64 = row.map(|r| r.values().sum()).unwrap_or(0.0);
            (c + self.k) / (total + self.k * self.v)
        } else {
            (self.uni.get(word).copied().unwrap_or(0.0) + self.k) / (self.n + self.k * self.v)
        };
        if p > 0.0 { p.ln().max(-745.0) } else { -745.0 }
    }

    /// Sum of log-probs for masking `words[start..start+len]`.
    pub fn window(&self, words: &[String], start: usize, len: usize) -> f64 {
        let left = if start == 0 { None } else { Some(words[start - 1].as_str()) };
        words[start..start + len]
            .iter()
            .map(|w| self.log_prob(w, left))
            .sum()
    }

    /// Premise-target g-gram score: sum over every window in `span`.
    pub fn premise_gram(&self, words: &[String], span: std::ops::Range<usize>, g: usize) -> f64 {
        let mut total = 0.0;
        let mut k = span.start;
        while k + g <= span.end {
            total += self.window(words, k, g);
            k += 1;
        }
        total
    }

    /// Hypothesis-target g-gram score: mean over the windows in `span`.
    pub fn hypothesis_gram(&self, words: &[String], span: std::ops::Range<usize>, g: usize) -> f64 {
        let windows = (span.end - span.start + 1 - g) as f64;
        self.premise_gram(words, span, g) / windows
    }
}

/// Adds a constant to every reported log-prob of an inner backend after
/// rounding it to a multiple of 1/256, so all downstream sums stay exact.
pub struct Shifted<'a> {
    pub inner: &'a dyn MaskedLm,
    pub shift: f64,
}

impl MaskedLm for Shifted<'_> {
    fn descriptor(&self) -> BackendDescriptor {
        self.inner.descriptor()
    }

    fn fill_log_probs(&self, queries: &[MaskQuery]) -> Result<Vec<MaskResponse>, BackendError> {
        let mut out = self.inner.fill_log_probs(queries)?;
        for r in &mut out {
            for v in &mut r.per_word_log_prob {
                *v = (*v * 256.0).round() / 256.0 + self.shift;
            }
        }
        Ok(out)
    }
}

/// What the stub does with each incoming connection.
#[derive(Clone, Copy, Debug)]
pub enum StubReply {
    /// Answer from the reference backend.
    Serve,
    /// Close the socket without writing a response.
    Drop,
    /// Reply with the given HTTP status and an empty body.
    Status(u16),
}

/// Minimal single-threaded HTTP/1.1 server answering scoring requests.
pub struct StubServer {
    pub url: String,
    pub bodies: Arc<Mutex<Vec<Vec<u8>>>>,
    pub responses: Arc<Mutex<Vec<Vec<u8>>>>,
    handle: Option<JoinHandle<()>>,
}

impl StubServer {
    /// Serve `script` in order (then keep serving), answering from `reference`.
    pub fn start<B: MaskedLm + 'static>(reference: B, script: Vec<StubReply>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/score", listener.local_addr().unwrap());
        let bodies = Arc::new(Mutex::new(Vec::new()));
        let responses = Arc::new(Mutex::new(Vec::new()));
        let (b, r) = (bodies.clone(), responses.clone());
        let handle = std::thread::spawn(move || {
            let mut script = script.into_iter();
            for stream in listener.incoming() {
                let Ok(stream) = stream else { break };
                let action = script.next().unwrap_or(StubReply::Serve);
                if !handle_conn(stream, action, &reference, &b, &r) {
                    break;
                }
            }
        });
        Self {
            url,
            bodies,
            responses,
            handle: Some(handle),
        }
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        // Unblock accept() with a shutdown request.
        let addr = self.url.trim_start_matches("http://").trim_end_matches("/score");
        if let Ok(mut s) = TcpStream::connect(addr) {
            let _ = s.write_all(b"SHUTDOWN\r\n\r\n");
        }
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn handle_conn(
    stream: TcpStream,
    action: StubReply,
    reference: &dyn MaskedLm,
    bodies: &Mutex<Vec<Vec<u8>>>,
    responses: &Mutex<Vec<Vec<u8>>>,
) -> bool {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).is_err() || request_line.starts_with("SHUTDOWN") {
        return false;
    }
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return true;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            if name.eq_ignore_ascii_case("content-length") {
                content_length = value.trim().parse().unwrap();
            }
        }
    }
    let mut body = vec![0; content_length];
    if reader.read_exact(&mut body).is_err() {
        return true;
    }
    let mut stream = stream;
    match action {
        StubReply::Drop => {
            drop(stream);
        }
        StubReply::Status(code) => {
            let _ = write!(
                stream,
                "HTTP/1.1 {code} Error\r\nContent-Length: 0\r\nConnection: close\r\n\r\n"
            );
        }
        StubReply::Serve => {
            let request: ssm_core::backend::WireRequest =
                serde_json::from_slice(&body).unwrap();
            let queries: Vec<MaskQuery> = request
                .sequences
                .iter()
                .map(|s| MaskQuery::new(s.words.clone(), s.mask_start..s.mask_start + s.mask_len).unwrap())
                .collect();
            let results = reference.fill_log_probs(&queries).unwrap();
            let reply = ssm_core::backend::WireResponse {
                results: results
                    .into_iter()
                    .map(|r| ssm_core::backend::WireResult {
                        log_probs: r.per_word_log_prob,
                    })
                    .collect(),
            };
            let bytes = serde_json::to_vec(&reply).unwrap();
            let _ = write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                bytes.len()
            );
            let _ = stream.write_all(&bytes);
            responses.lock().unwrap().push(bytes);
        }
    }
    bodies.lock().unwrap().push(body);
    true
}
