use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BackendDescriptor, DifferentiableLm, MaskQuery, MaskResponse, MaskedLm};
use crate::error::{BackendError, Error, Result};

pub const UNK: &str = "<unk>";
pub const CHECKPOINT_HEADER: &str = "ssm-tiny-checkpoint v1";

/// Word vocabulary with `<unk>` at index 0 and the rest sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let sorted: BTreeSet<String> = words
            .into_iter()
            .map(|w| w.as_ref().to_string())
            .filter(|w| w != UNK)
            .collect();
        let words: Vec<String> = std::iter::once(UNK.to_string()).chain(sorted).collect();
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self { words, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(0)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// Desk-scale differentiable masked LM.
///
/// Each visible word `t` gets a context representation `r_t = tanh(P e_t)`;
/// the masked position sees `h = mean(r_t)` over visible words and predicts
/// `softmax(W h + b)` over the vocabulary. All masked words of a query share
/// the same `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyBackend {
    vocab: Vocab,
    dim: usize,
    params: Vec<f64>,
    max_batch: usize,
}

struct Layout {
    proj: usize,
    out_w: usize,
    out_b: usize,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    vocab: Vec<String>,
    embed_dim: usize,
    params: Vec<f64>,
}

impl TinyBackend {
    pub fn init(vocab: Vocab, embed_dim: usize, seed: u64) -> Result<Self> {
        if embed_dim == 0 {
            return Err(Error::argument("embedding dimension must be positive"));
        }
        if vocab.len() < 2 {
            return Err(Error::argument("vocabulary needs at least one word besides <unk>"));
        }
        let mut be = Self {
            params: Vec::new(),
            vocab,
            dim: embed_dim,
            max_batch: 512,
        };
        let lay = be.layout();
        be.params = vec![0.0; lay.len];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = Uniform::new_inclusive(-1.0, 1.0);
        let d = embed_dim as f64;
        for (i, p) in be.params[..lay.out_b].iter_mut().enumerate() {
            let scale = if i < lay.proj {
                0.5
            } else if i < lay.out_w {
                1.0 / d.sqrt()
            } else {
                0.1
            };
            *p = scale * unit.sample(&mut rng);
        }
        Ok(be)
    }

    /// Rebuild from a flat parameter vector (layout: embeddings, projection,
    /// output weights, output bias).
    pub fn from_parameters(vocab: Vocab, embed_dim: usize, params: Vec<f64>) -> Result<Self> {
        let be = Self {
            vocab,
            dim: embed_dim,
            params,
            max_batch: 512,
        };
        let expected = be.layout().len;
        if embed_dim == 0 || be.params.len() != expected {
            return Err(Error::argument(format!(
                "parameter count {} does not match vocab {} x dim {embed_dim} (expected {expected})",
                be.params.len(),
                be.vocab.len()
            )));
        }
        Ok(be)
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn embed_dim(&self) -> usize {
        self.dim
    }

    pub fn num_parameters(&self) -> usize {
        self.params.len()
    }

    pub fn zero_output_layer(&mut self) {
        let lay = self.layout();
        self.params[lay.out_w..].fill(0.0);
    }

    pub fn zero_embeddings(&mut self) {
        let lay = self.layout();
        self.params[..lay.proj].fill(0.0);
    }

    fn layout(&self) -> Layout {
        let (v, d) = (self.vocab.len(), self.dim);
        let proj = v * d;
        let out_w = proj + d * d;
        let out_b = out_w + v * d;
        Layout {
            proj,
            out_w,
            out_b,
            len: out_b + v,
        }
    }

    fn embedding(&self, id: usize) -> &[f64] {
        &self.params[id * self.dim..(id + 1) * self.dim]
    }

    fn representation(&self, id: usize) -> Vec<f64> {
        let d = self.dim;
        let proj = &self.params[self.layout().proj..];
        let e = self.embedding(id);
        (0..d)
            .map(|i| {
                proj[i * d..(i + 1) * d]
                    .iter()
                    .zip(e)
                    .map(|(p, x)| p * x)
                    .sum::<f64>()
                    .tanh()
            })
            .collect()
    }

    fn mean_representation(&self, ids: &[usize]) -> Vec<f64> {
        let mut h = vec![0.0; self.dim];
        if ids.is_empty() {
            return h;
        }
        for &t in ids {
            for (acc, r) in h.iter_mut().zip(self.representation(t)) {
                *acc += r;
            }
        }
        let n = ids.len() as f64;
        h.iter_mut().for_each(|x| *x /= n);
        h
    }

    fn log_softmax(&self, h: &[f64]) -> Vec<f64> {
        let lay = self.layout();
        let d = self.dim;
        let w = &self.params[lay.out_w..lay.out_b];
        let b = &self.params[lay.out_b..];
        let z: Vec<f64> = (0..self.vocab.len())
            .map(|v| b[v] + w[v * d..(v + 1) * d].iter().zip(h).map(|(a, x)| a * x).sum::<f64>())
            .collect();
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        z.into_iter().map(|x| x - lse).collect()
    }

    fn context_ids(&self, q: &MaskQuery) -> Vec<usize> {
        q.context().map(|w| self.vocab.id(w)).collect()
    }

    /// Backprop `dr` (gradient w.r.t. the mean representation of `ids`).
    fn backprop_mean(&self, ids: &[usize], dh: &[f64], grad: &mut [f64]) {
        if ids.is_empty() {
            return;
        }
        let lay = self.layout();
        let d = self.dim;
        let n = ids.len() as f64;
        for &t in ids {
            let r = self.representation(t);
            let da: Vec<f64> = (0..d).map(|i| dh[i] / n * (1.0 - r[i] * r[i])).collect();
            let e = self.embedding(t).to_vec();
            for i in 0..d {
                for j in 0..d {
                    grad[lay.proj + i * d + j] += da[i] * e[j];
                    grad[t * d + j] += self.params[lay.proj + i * d + j] * da[i];
                }
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let body = Checkpoint {
            vocab: self.vocab.words.clone(),
            embed_dim: self.dim,
            params: self.params.clone(),
        };
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        writeln!(f, "{CHECKPOINT_HEADER}").map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(&mut f, &body)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
        writeln!(f).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let (header, body) = text.split_once('\n').unwrap_or((text.as_str(), ""));
        if header.trim() != CHECKPOINT_HEADER {
            return Err(Error::schema(format!(
                "{}: unsupported checkpoint header {header:?}",
                path.display()
            )));
        }
        let ck: Checkpoint = serde_json::from_str(body).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: 2,
            message: e.to_string(),
        })?;
        if ck.vocab.first().map(String::as_str) != Some(UNK) {
            return Err(Error::schema("checkpoint vocabulary must start with <unk>"));
        }
        Self::from_parameters(Vocab::new(ck.vocab), ck.embed_dim, ck.params)
    }
}

impl MaskedLm for TinyBackend {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            name: "tiny".into(),
            differentiable: true,
            thread_safe: false,
            max_batch: self.max_batch,
        }
    }

    fn fill_log_probs(
        &self,
        queries: &[MaskQuery],
    ) -> std::result::Result<Vec<MaskResponse>, BackendError> {
        queries
            .iter()
            .map(|q| {
                q.validate()?;
                let lp = self.log_softmax(&self.mean_representation(&self.context_ids(q)));
                Ok(MaskResponse {
                    per_word_log_prob: q.targets.iter().map(|t| lp[self.vocab.id(t)]).collect(),
                })
            })
            .collect()
    }

    fn as_differentiable(&self) -> Option<&dyn DifferentiableLm> {
        Some(self)
    }
}

impl DifferentiableLm for TinyBackend {
    fn parameters(&self) -> &[f64] {
        &self.params
    }

    fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn accumulate_log_prob_gradient(
        &self,
        queries: &[MaskQuery],
        upstream: &[Vec<f64>],
        grad: &mut [f64],
    ) -> Result<()> {
        if upstream.len() != queries.len() || grad.len() != self.params.len() {
            return Err(Error::argument(format!(
                "gradient shapes: {} queries, {} upstream rows, grad {} vs {} params",
                queries.len(),
                upstream.len(),
                grad.len(),
                self.params.len()
            )));
        }
        let lay = self.layout();
        let d = self.dim;
        for (q, up) in queries.iter().zip(upstream) {
            q.validate()?;
            if up.len() != q.span_len() {
                return Err(Error::argument(format!(
                    "{} upstream values for a span of {}",
                    up.len(),
                    q.span_len()
                )));
            }
            let ctx = self.context_ids(q);
            let h = self.mean_representation(&ctx);
            let lp = self.log_softmax(&h);
            let up_total: f64 = up.iter().sum();
            let mut dz: Vec<f64> = lp.iter().map(|l| -up_total * l.exp()).collect();
            for (t, u) in q.targets.iter().zip(up) {
                dz[self.vocab.id(t)] += u;
            }
            let mut dh = vec![0.0; d];
            for (v, &g) in dz.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = lay.out_w + v * d;
                for i in 0..d {
                    grad[row + i] += g * h[i];
                    dh[i] += self.params[row + i] * g;
                }
                grad[lay.out_b + v] += g;
            }
            self.backprop_mean(&ctx, &dh, grad);
        }
        Ok(())
    }

    fn representation_dim(&self) -> usize {
        self.dim
    }

    fn pooled(&self, words: &[String]) -> Vec<f64> {
        let ids: Vec<usize> = words.iter().map(|w| self.vocab.id(w)).collect();
        self.mean_representation(&ids)
    }

    fn accumulate_pooled_gradient(&self, words: &[String], upstream: &[f64], grad: &mut [f64]) {
        let ids: Vec<usize> = words.iter().map(|w| self.vocab.id(w)).collect();
        self.backprop_mean(&ids, upstream, grad);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::words;

    fn backend(seed: u64) -> TinyBackend {
        TinyBackend::init(Vocab::new(words("a b c d e")), 4, seed).unwrap()
    }

    #[test]
    fn zero_output_layer_is_uniform() {
        let mut be = backend(1);
        be.zero_output_layer();
        let q = MaskQuery::new(words("a b zzz"), 1..3).unwrap();
        let r = be.fill_log_probs(&[q]).unwrap();
        let uniform = -(be.vocab().len() as f64).ln();
        for lp in &r[0].per_word_log_prob {
            assert!((lp - uniform).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_queries_identical_outputs() {
        let be = backend(3);
        let q = MaskQuery::new(words("a b c"), 0..1).unwrap();
        let r = be.fill_log_probs(&[q.clone(), q]).unwrap();
        assert_eq!(r[0], r[1]);
    }

    #[test]
    fn softmax_normalizes() {
        let be = backend(5);
        let h = be.mean_representation(&[1, 2]);
        let total: f64 = be.log_softmax(&h).iter().map(|l| l.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_embeddings_pool_to_zero() {
        let mut be = backend(2);
        be.zero_embeddings();
        assert!(be.pooled(&words("a b c")).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn init_is_seeded() {
        assert_eq!(backend(9), backend(9));
        assert_ne!(backend(9), backend(10));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let be = backend(1);
        let q = MaskQuery::new(words("a b c"), 0..2).unwrap();
        let mut g = vec![0.0; be.num_parameters()];
        assert!(be
            .accumulate_log_prob_gradient(std::slice::from_ref(&q), &[vec![1.0]], &mut g)
            .is_err());
        let mut short = vec![0.0; 3];
        assert!(be
            .accumulate_log_prob_gradient(&[q], &[vec![1.0, 1.0]], &mut short)
            .is_err());
        assert!(TinyBackend::from_parameters(Vocab::new(["a"]), 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let be = backend(11);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        be.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(CHECKPOINT_HEADER));
        assert_eq!(TinyBackend::load(&path).unwrap(), be);

        std::fs::write(&path, text.replacen("v1", "v9", 1)).unwrap();
        assert!(TinyBackend::load(&path).is_err());
    }
}
