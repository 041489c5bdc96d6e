//! Story corpus ingestion and deterministic batch streams.
//!
//! Corpora load from plain text (one story per blank-line-separated block) or
//! JSON lines with a `"story"` field. The validation split is the last 5% of
//! stories in file order, so splitting needs no randomness. A small synthetic
//! story corpus is bundled for fully offline runs.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::rng::{fnv1a64, SplitMix64};
use crate::tokenizer::Vocab;

/// Bundled ~200-story synthetic corpus.
pub const MINI_CORPUS: &str = include_str!("../assets/mini_corpus.txt");

/// Default fraction of stories held out for validation.
pub const DEFAULT_VALIDATION_FRACTION: f64 = 0.05;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("corpus contains no stories")]
    Empty,

    #[error("tokenized {split} split has {tokens} tokens, need more than {needed} for one window")]
    TooShort {
        split: &'static str,
        tokens: usize,
        needed: usize,
    },

    #[error("batch size {batch_size} exceeds the {n_windows} available windows")]
    BatchTooLarge {
        batch_size: usize,
        n_windows: usize,
    },

    #[error("jsonl line {line}: {message}")]
    BadJsonLine { line: usize, message: String },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Loaded stories with a deterministic train/validation split.
#[derive(Debug, Clone)]
pub struct Corpus {
    stories: Vec<String>,
    n_train: usize,
    digest: u64,
}

impl Corpus {
    /// Splits off the trailing `validation_fraction` of stories (at least one
    /// story stays in training; validation may be empty for tiny corpora).
    pub fn from_stories(
        stories: Vec<String>,
        validation_fraction: f64,
    ) -> Result<Self, DataError> {
        let stories: Vec<String> = stories.into_iter().filter(|s| !s.is_empty()).collect();
        if stories.is_empty() {
            return Err(DataError::Empty);
        }
        let n_val = ((stories.len() as f64 * validation_fraction) as usize)
            .min(stories.len().saturating_sub(1));
        let n_train = stories.len() - n_val;
        let mut bytes = Vec::new();
        for s in &stories {
            bytes.extend_from_slice(s.as_bytes());
            bytes.push(0);
        }
        let digest = fnv1a64(&bytes);
        Ok(Self {
            stories,
            n_train,
            digest,
        })
    }

    /// Parses blank-line-separated story blocks.
    pub fn from_text(text: &str, validation_fraction: f64) -> Result<Self, DataError> {
        let stories = text
            .split("\n\n")
            .map(|block| block.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        Self::from_stories(stories, validation_fraction)
    }

    /// Parses JSON lines with a `story` field.
    pub fn from_jsonl(text: &str, validation_fraction: f64) -> Result<Self, DataError> {
        #[derive(Deserialize)]
        struct Line {
            story: String,
        }
        let mut stories = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line =
                serde_json::from_str(line).map_err(|e| DataError::BadJsonLine {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            stories.push(parsed.story);
        }
        Self::from_stories(stories, validation_fraction)
    }

    /// Loads `.jsonl` or plain text based on the file extension.
    pub fn from_file(path: &Path, validation_fraction: f64) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "jsonl") {
            Self::from_jsonl(&text, validation_fraction)
        } else {
            Self::from_text(&text, validation_fraction)
        }
    }

    /// The bundled synthetic corpus.
    pub fn bundled_mini(validation_fraction: f64) -> Self {
        Self::from_text(MINI_CORPUS, validation_fraction).expect("bundled corpus is non-empty")
    }

    pub fn stories(&self) -> &[String] {
        &self.stories
    }

    pub fn train_stories(&self) -> &[String] {
        &self.stories[..self.n_train]
    }

    pub fn validation_stories(&self) -> &[String] {
        &self.stories[self.n_train..]
    }

    /// FNV digest of the story contents, recorded in manifests.
    pub fn digest(&self) -> u64 {
        self.digest
    }

    /// Tokenizes stories in order, appending EOS after each story.
    pub fn tokenize(stories: &[String], vocab: &Vocab) -> Vec<u32> {
        let eos = vocab.specials().eos;
        let mut out = Vec::new();
        for story in stories {
            out.extend(vocab.encode(story));
            out.push(eos);
        }
        out
    }
}

/// One training batch: `batch_size` windows of `context_length` inputs with
/// next-token targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub inputs: Vec<Vec<u32>>,
    pub targets: Vec<Vec<u32>>,
}

impl Batch {
    /// Digest of the token content, used in training diagnostics.
    pub fn digest(&self) -> u64 {
        let mut bytes = Vec::new();
        for row in self.inputs.iter().chain(&self.targets) {
            for &t in row {
                bytes.extend_from_slice(&t.to_le_bytes());
            }
        }
        fnv1a64(&bytes)
    }
}

/// Deterministic infinite batch stream over a token sequence.
///
/// Windows of `context_length + 1` tokens are cut at stride `context_length`
/// (the count for `n` tokens is `(n - 1) / context_length`); each epoch visits
/// every full window once in an order shuffled from (`seed`, epoch). Trailing
/// windows that do not fill a batch are dropped. The stream is a pure function
/// of (tokens, context_length, batch_size, seed).
#[derive(Debug, Clone)]
pub struct BatchStream {
    tokens: Vec<u32>,
    context_length: usize,
    batch_size: usize,
    seed: u64,
    epoch: u64,
    order: Vec<usize>,
    cursor: usize,
}

impl BatchStream {
    pub fn new(
        tokens: Vec<u32>,
        context_length: usize,
        batch_size: usize,
        seed: u64,
    ) -> Result<Self, DataError> {
        let n_windows = window_count(tokens.len(), context_length);
        if n_windows == 0 {
            return Err(DataError::TooShort {
                split: "train",
                tokens: tokens.len(),
                needed: context_length,
            });
        }
        if batch_size == 0 || batch_size > n_windows {
            return Err(DataError::BatchTooLarge {
                batch_size,
                n_windows,
            });
        }
        let mut stream = Self {
            tokens,
            context_length,
            batch_size,
            seed,
            epoch: 0,
            order: Vec::new(),
            cursor: 0,
        };
        stream.reshuffle();
        Ok(stream)
    }

    pub fn n_windows(&self) -> usize {
        window_count(self.tokens.len(), self.context_length)
    }

    fn reshuffle(&mut self) {
        let n = self.n_windows();
        self.order = (0..n).collect();
        let mut rng = SplitMix64::new(self.seed ^ self.epoch.wrapping_mul(0x9E3779B97F4A7C15));
        rng.shuffle(&mut self.order);
        self.cursor = 0;
    }

    fn window(&self, index: usize) -> (Vec<u32>, Vec<u32>) {
        let start = index * self.context_length;
        let slice = &self.tokens[start..start + self.context_length + 1];
        (
            slice[..self.context_length].to_vec(),
            slice[1..].to_vec(),
        )
    }

    /// Next batch; the stream is infinite, re-shuffling each epoch.
    pub fn next_batch(&mut self) -> Batch {
        let mut inputs = Vec::with_capacity(self.batch_size);
        let mut targets = Vec::with_capacity(self.batch_size);
        while inputs.len() < self.batch_size {
            if self.cursor + (self.batch_size - inputs.len()) > self.order.len() {
                // Not enough windows left this epoch: drop the remainder.
                self.epoch += 1;
                self.reshuffle();
            }
            let (i, t) = self.window(self.order[self.cursor]);
            self.cursor += 1;
            inputs.push(i);
            targets.push(t);
        }
        Batch { inputs, targets }
    }

    /// Advances past `n` batches without materializing them.
    pub fn skip_batches(&mut self, n: u64) {
        for _ in 0..n {
            if self.cursor + self.batch_size > self.order.len() {
                self.epoch += 1;
                self.reshuffle();
            }
            self.cursor += self.batch_size;
        }
    }
}

/// Sequential validation windows (no shuffling, no batching).
pub fn validation_windows(tokens: &[u32], context_length: usize) -> Vec<(Vec<u32>, Vec<u32>)> {
    let n = window_count(tokens.len(), context_length);
    (0..n)
        .map(|i| {
            let start = i * context_length;
            let slice = &tokens[start..start + context_length + 1];
            (slice[..context_length].to_vec(), slice[1..].to_vec())
        })
        .collect()
}

/// Number of full (input, shifted-target) windows in `n_tokens` tokens.
pub fn window_count(n_tokens: usize, context_length: usize) -> usize {
    n_tokens.saturating_sub(1) / context_length
}
