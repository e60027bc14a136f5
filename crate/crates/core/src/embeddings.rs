//! Fixed word vectors and the multi-scale n-gram utterance encoder.
//!
//! Word vectors are constants of every graph and never trained. The
//! [`ReceptorBank`] holds the trainable part: for each n-gram size `n` in
//! `1..=N` and each of `K` receptors, an affine map followed by ReLU that
//! is mean-pooled over the n-gram positions of an utterance.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::{Graph, NodeId, Params, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub dim: usize,
    /// Seed for hashed vectors (and for out-of-vocabulary fallback in file mode).
    pub seed: u64,
    /// Optional `token v1 v2 …` text file of pretrained vectors.
    #[serde(default)]
    pub file: Option<PathBuf>,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            dim: 400,
            seed: 0,
            file: None,
        }
    }
}

/// Token → vector lookup. Total: unknown tokens get a hashed vector.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    seed: u64,
    stored: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    /// Hash mode: every token maps to a seeded unit-norm Gaussian direction.
    pub fn hashed(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self {
            dim,
            seed,
            stored: HashMap::new(),
        }
    }

    /// File mode. Every line must carry exactly `dim` floats.
    pub fn from_file(path: &Path, dim: usize, seed: u64) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut stored = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let values: Vec<f64> = parts
                .map(|p| p.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    message: format!("line {}: {e}", lineno + 1),
                })?;
            if values.len() != dim {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    message: format!("line {}: expected {dim} values, found {}", lineno + 1, values.len()),
                });
            }
            stored.insert(token.to_string(), values);
        }
        Ok(Self { dim, seed, stored })
    }

    pub fn from_config(cfg: &EmbeddingConfig) -> Result<Self> {
        if cfg.dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        match &cfg.file {
            Some(p) => Self::from_file(p, cfg.dim, cfg.seed),
            None => Ok(Self::hashed(cfg.dim, cfg.seed)),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed_word(&self, token: &str) -> Vec<f64> {
        if let Some(v) = self.stored.get(token) {
            return v.clone();
        }
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(token.as_bytes());
        let digest: [u8; 32] = hasher.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(digest);
        let mut v: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        v
    }

    /// Mean of the member word vectors; zero for an empty phrase.
    pub fn embed_phrase<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        for t in tokens {
            for (a, v) in acc.iter_mut().zip(self.embed_word(t.as_ref())) {
                *a += v;
            }
        }
        if !tokens.is_empty() {
            let k = tokens.len() as f64;
            acc.iter_mut().for_each(|a| *a /= k);
        }
        acc
    }
}

/// Per-scale matrices of n-gram mean vectors for one utterance. Scales
/// longer than the utterance have no rows.
#[derive(Debug, Clone)]
pub struct NgramFeatures {
    scales: Vec<Option<Arc<Tensor>>>,
}

impl NgramFeatures {
    pub fn new<S: AsRef<str>>(table: &EmbeddingTable, tokens: &[S], ngram_max: usize) -> Self {
        let words: Vec<Vec<f64>> = tokens.iter().map(|t| table.embed_word(t.as_ref())).collect();
        let dim = table.dim();
        let scales = (1..=ngram_max)
            .map(|n| {
                if words.len() < n {
                    return None;
                }
                let positions = words.len() - n + 1;
                let mut data = Vec::with_capacity(positions * dim);
                for p in 0..positions {
                    let mut mean = vec![0.0; dim];
                    for w in &words[p..p + n] {
                        for (m, x) in mean.iter_mut().zip(w) {
                            *m += x;
                        }
                    }
                    data.extend(mean.into_iter().map(|m| m / n as f64));
                }
                Some(Arc::new(Tensor::matrix(positions, dim, data).expect("n-gram matrix")))
            })
            .collect();
        Self { scales }
    }

    pub fn scale(&self, n: usize) -> Option<&Arc<Tensor>> {
        self.scales.get(n - 1).and_then(Option::as_ref)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceptorShape {
    pub ngram_max: usize,
    pub receptors_per_ngram: usize,
    pub receptor_dim: usize,
    pub input_dim: usize,
}

impl ReceptorShape {
    pub fn output_dim(&self) -> usize {
        self.ngram_max * self.receptors_per_ngram * self.receptor_dim
    }
}

/// Parameter indices of one bank, ordered by (n, receptor).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReceptorBank {
    pub shape: ReceptorShape,
    weights: Vec<(usize, usize)>,
}

impl ReceptorBank {
    /// Registers `N·K` weight/bias pairs under `prefix`, drawing weights
    /// with `init(rows, cols)`.
    pub fn register(
        params: &mut Params,
        prefix: &str,
        shape: ReceptorShape,
        mut init: impl FnMut(usize, usize) -> Tensor,
    ) -> Self {
        let mut weights = Vec::new();
        for n in 1..=shape.ngram_max {
            for k in 0..shape.receptors_per_ngram {
                let w = params.add(format!("{prefix}.n{n}.r{k}.weight"), init(shape.receptor_dim, shape.input_dim));
                let b = params.add(format!("{prefix}.n{n}.r{k}.bias"), Tensor::zeros(&[shape.receptor_dim]));
                weights.push((w, b));
            }
        }
        Self { shape, weights }
    }

    /// Looks up an existing bank's parameters by name.
    pub fn bind(params: &Params, prefix: &str, shape: ReceptorShape) -> Result<Self> {
        let mut weights = Vec::new();
        for n in 1..=shape.ngram_max {
            for k in 0..shape.receptors_per_ngram {
                let find = |suffix: &str| {
                    let name = format!("{prefix}.n{n}.r{k}.{suffix}");
                    params
                        .index_of(&name)
                        .ok_or_else(|| Error::invalid(format!("missing parameter {name}")))
                };
                weights.push((find("weight")?, find("bias")?));
            }
        }
        Ok(Self { shape, weights })
    }

    pub fn param_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.weights.iter().flat_map(|(w, b)| [*w, *b])
    }

    /// Concatenation of all pooled receptor outputs, in (n, receptor) order.
    pub fn apply(&self, g: &mut Graph, params: &Params, feats: &NgramFeatures) -> Result<NodeId> {
        let k = self.shape.receptors_per_ngram;
        let mut parts = Vec::with_capacity(self.weights.len());
        for n in 1..=self.shape.ngram_max {
            for r in 0..k {
                let (wi, bi) = self.weights[(n - 1) * k + r];
                let node = match feats.scale(n) {
                    Some(x) => {
                        let w = g.param(wi, params.get(wi));
                        let b = g.param(bi, params.get(bi));
                        g.mean_affine_relu(w, b, x.clone())?
                    }
                    None => g.constant(Tensor::zeros(&[self.shape.receptor_dim])),
                };
                parts.push(node);
            }
        }
        g.concat(&parts)
    }
}

/// Encodes an utterance with a receptor bank, outside of any training graph.
pub fn ngram_utterance_repr<S: AsRef<str>>(
    table: &EmbeddingTable,
    bank: &ReceptorBank,
    params: &Params,
    tokens: &[S],
) -> Result<Tensor> {
    let feats = NgramFeatures::new(table, tokens, bank.shape.ngram_max);
    let mut g = Graph::new();
    let out = bank.apply(&mut g, params, &feats)?;
    Ok(g.value(out).clone())
}
