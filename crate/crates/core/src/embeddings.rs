//! Word vectors: in-repo skip-gram training with negative sampling, plus
//! the word2vec text format for loading externally trained tables.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Vocabulary, UNK_ID};
use crate::error::{LexError, Result};

/// A trained embedding table: one row per vocabulary type, plus an
/// unknown-word vector defined as the mean of all rows.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: Array2<f64>,
    vocab: Vocabulary,
    unk: Array1<f64>,
}

impl EmbeddingTable {
    pub fn from_parts(vocab: Vocabulary, vectors: Array2<f64>) -> Result<EmbeddingTable> {
        if vocab.type_count() != vectors.nrows() {
            return Err(LexError::Contract(format!(
                "vocabulary has {} types but the table has {} rows",
                vocab.type_count(),
                vectors.nrows()
            )));
        }
        if vectors.nrows() == 0 || vectors.ncols() == 0 {
            return Err(LexError::Contract("embedding table is empty".into()));
        }
        if !vectors.iter().all(|v| v.is_finite()) {
            return Err(LexError::Contract("non-finite embedding entry".into()));
        }
        let unk = vectors.mean_axis(ndarray::Axis(0)).expect("non-empty");
        Ok(EmbeddingTable {
            dim: vectors.ncols(),
            vectors,
            vocab,
            unk,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn unk_vector(&self) -> ArrayView1<'_, f64> {
        self.unk.view()
    }

    /// The vector for a type id; [`UNK_ID`] and out-of-range ids resolve
    /// to the unknown vector.
    pub fn vector(&self, id: u32) -> ArrayView1<'_, f64> {
        if id == UNK_ID || id as usize >= self.vectors.nrows() {
            self.unk.view()
        } else {
            self.vectors.row(id as usize)
        }
    }

    pub fn vector_for(&self, form: &str) -> ArrayView1<'_, f64> {
        self.vector(self.vocab.id_or_unk(form))
    }

    /// The `k` types most cosine-similar to the query, descending, ties
    /// broken by type id. `k` beyond the vocabulary returns everything.
    pub fn nearest(&self, query: ArrayView1<'_, f64>, k: usize) -> Vec<(u32, f64)> {
        let mut scored: Vec<(u32, f64)> = (0..self.vectors.nrows())
            .map(|i| (i as u32, cosine(query, self.vectors.row(i))))
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite cosine").then(a.0.cmp(&b.0)));
        scored.truncate(k);
        scored
    }

    /// Writes the word2vec text format: a `<type_count> <dim>` header,
    /// then one `form v1 … vD` line per type.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        writeln!(out, "{} {}", self.vectors.nrows(), self.dim).expect("string write");
        for (i, form) in self.vocab.forms().iter().enumerate() {
            out.push_str(form);
            for v in self.vectors.row(i) {
                write!(out, " {v}").expect("string write");
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| LexError::io(path, e))
    }

    /// Reads the word2vec text format. Occurrence counts are not part of
    /// the format, so every loaded type gets count 1.
    pub fn load(path: &Path) -> Result<EmbeddingTable> {
        let text = fs::read_to_string(path).map_err(|e| LexError::io(path, e))?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| LexError::parse(path, 1, "empty embedding file"))?;
        let mut parts = header.split_whitespace();
        let count: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| LexError::parse(path, 1, "bad type count"))?;
        let dim: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| LexError::parse(path, 1, "bad dimension"))?;
        if dim == 0 || count == 0 {
            return Err(LexError::parse(path, 1, "empty table declared"));
        }
        let mut vocab = Vocabulary::default();
        let mut vectors = Array2::zeros((count, dim));
        let mut row = 0usize;
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            if row >= count {
                return Err(LexError::parse(
                    path,
                    lineno + 2,
                    format!("more rows than the declared {count}"),
                ));
            }
            let mut cols = line.split_whitespace();
            let form = cols.next().expect("non-empty line");
            if vocab.id(form).is_some() {
                return Err(LexError::parse(path, lineno + 2, format!("duplicate form {form:?}")));
            }
            vocab.push(form);
            let mut written = 0;
            for col in cols {
                if written >= dim {
                    break;
                }
                vectors[(row, written)] = col
                    .parse()
                    .map_err(|_| LexError::parse(path, lineno + 2, format!("bad float {col:?}")))?;
                written += 1;
            }
            if written != dim {
                return Err(LexError::parse(
                    path,
                    lineno + 2,
                    format!("expected {dim} components, found {written}"),
                ));
            }
            row += 1;
        }
        if row != count {
            return Err(LexError::parse(
                path,
                1,
                format!("declared {count} rows, found {row}"),
            ));
        }
        EmbeddingTable::from_parts(vocab, vectors)
    }
}

fn cosine(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    let dot = a.dot(&b);
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// The negative-sampling distribution: probabilities proportional to
/// count^0.75, normalized to sum 1.
pub fn negative_sampling_distribution(vocab: &Vocabulary) -> Vec<f64> {
    let weights: Vec<f64> = vocab.counts().iter().map(|&c| (c as f64).powf(0.75)).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Skip-gram with negative sampling, trained by plain SGD at a constant
/// learning rate. Single-threaded and deterministic for a given seed.
pub fn train_skipgram(
    tokens: &[String],
    dim: usize,
    context_window: usize,
    negatives: usize,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<EmbeddingTable> {
    train_skipgram_detailed(tokens, dim, context_window, negatives, epochs, lr, seed)
        .map(|(table, _)| table)
}

/// Like [`train_skipgram`], also returning the mean loss per epoch.
pub fn train_skipgram_detailed(
    tokens: &[String],
    dim: usize,
    context_window: usize,
    negatives: usize,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<(EmbeddingTable, Vec<f64>)> {
    if tokens.is_empty() {
        return Err(LexError::Config("cannot train embeddings on an empty corpus".into()));
    }
    if dim == 0 {
        return Err(LexError::Config("embedding dimension must be at least 1".into()));
    }
    if negatives == 0 {
        return Err(LexError::Config("need at least 1 negative sample".into()));
    }
    if context_window == 0 {
        return Err(LexError::Config("context window must be at least 1".into()));
    }

    let vocab = Vocabulary::build(tokens);
    let ids: Vec<usize> = tokens.iter().map(|t| vocab.id(t).unwrap() as usize).collect();
    let types = vocab.type_count();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = 0.5 / dim as f64;
    let mut input = Array2::from_shape_fn((types, dim), |_| (rng.gen::<f64>() * 2.0 - 1.0) * span);
    let mut output = Array2::<f64>::zeros((types, dim));

    let dist = negative_sampling_distribution(&vocab);
    let mut cumulative = Vec::with_capacity(types);
    let mut acc = 0.0;
    for p in &dist {
        acc += p;
        cumulative.push(acc);
    }
    let sample_negative = |rng: &mut ChaCha8Rng| -> usize {
        let u: f64 = rng.gen();
        match cumulative.binary_search_by(|c| c.partial_cmp(&u).expect("finite")) {
            Ok(i) | Err(i) => i.min(types - 1),
        }
    };

    let sigmoid = |x: f64| 1.0 / (1.0 + (-x).exp());
    let mut losses = Vec::with_capacity(epochs);
    let mut accum = vec![0.0f64; dim];

    for _ in 0..epochs {
        let mut epoch_loss = 0.0;
        let mut pairs = 0u64;
        for (pos, &center) in ids.iter().enumerate() {
            let lo = pos.saturating_sub(context_window);
            let hi = (pos + context_window).min(ids.len() - 1);
            for ctx_pos in lo..=hi {
                if ctx_pos == pos {
                    continue;
                }
                let context = ids[ctx_pos];
                accum.iter_mut().for_each(|a| *a = 0.0);
                // positive pair plus sampled negatives; the input vector
                // update is accumulated and applied once per pair
                for neg in 0..=negatives {
                    let (target, label) = if neg == 0 {
                        (context, 1.0)
                    } else {
                        let t = sample_negative(&mut rng);
                        if t == context {
                            continue;
                        }
                        (t, 0.0)
                    };
                    let dot = input.row(center).dot(&output.row(target));
                    let score = sigmoid(dot);
                    epoch_loss -= if label == 1.0 {
                        score.max(1e-12).ln()
                    } else {
                        (1.0 - score).max(1e-12).ln()
                    };
                    let g = (label - score) * lr;
                    for d in 0..dim {
                        accum[d] += g * output[(target, d)];
                        output[(target, d)] += g * input[(center, d)];
                    }
                }
                for d in 0..dim {
                    input[(center, d)] += accum[d];
                }
                pairs += 1;
            }
        }
        losses.push(epoch_loss / pairs.max(1) as f64);
    }

    let table = EmbeddingTable::from_parts(vocab, input)?;
    Ok((table, losses))
}
