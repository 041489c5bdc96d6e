//! Byte-level BPE tokenizer with a 512-entry vocabulary.
//!
//! All 256 single bytes are base tokens, so any input round-trips losslessly;
//! merges only ever reduce token counts. Three special ids (BOS, EOS, PAD)
//! sit between the byte tokens and the merge tokens.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Target vocabulary size used throughout the experiments.
pub const DEFAULT_VOCAB_SIZE: usize = 512;

const N_BYTES: usize = 256;
const N_SPECIALS: usize = 3;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("target vocab size {0} is below the {min} base tokens", min = N_BYTES + N_SPECIALS)]
    TargetTooSmall(usize),

    #[error("token id {0} out of range for vocab of size {1}")]
    IdOutOfRange(u32, usize),

    #[error("vocab file is malformed: {0}")]
    Malformed(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Special token ids, fixed right after the byte tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialIds {
    pub bos: u32,
    pub eos: u32,
    pub pad: u32,
}

impl Default for SpecialIds {
    fn default() -> Self {
        Self {
            bos: N_BYTES as u32,
            eos: N_BYTES as u32 + 1,
            pad: N_BYTES as u32 + 2,
        }
    }
}

/// Trained vocabulary: id -> bytes table plus the ordered merge list.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<Vec<u8>>,
    merges: Vec<(u32, u32)>,
    specials: SpecialIds,
    /// merge pair -> id of the merged token
    merge_lookup: HashMap<(u32, u32), u32>,
}

/// Result of training: the vocab and whether the corpus supported enough
/// merges to reach the requested size.
#[derive(Debug, Clone)]
pub struct BpeTrainOutcome {
    pub vocab: Vocab,
    pub reached_target: bool,
}

impl Vocab {
    /// Byte-level base vocabulary with no merges: 256 bytes + specials.
    pub fn byte_level() -> Self {
        let specials = SpecialIds::default();
        let mut tokens: Vec<Vec<u8>> = (0..N_BYTES).map(|b| vec![b as u8]).collect();
        // Specials carry no bytes; decode skips them.
        for _ in 0..N_SPECIALS {
            tokens.push(vec![]);
        }
        Self {
            tokens,
            merges: Vec::new(),
            specials,
            merge_lookup: HashMap::new(),
        }
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn specials(&self) -> SpecialIds {
        self.specials
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    pub fn token_bytes(&self, id: u32) -> Result<&[u8], TokenizerError> {
        self.tokens
            .get(id as usize)
            .map(|v| v.as_slice())
            .ok_or(TokenizerError::IdOutOfRange(id, self.tokens.len()))
    }

    fn push_merge(&mut self, left: u32, right: u32) -> u32 {
        let mut bytes = self.tokens[left as usize].clone();
        bytes.extend_from_slice(&self.tokens[right as usize]);
        let id = self.tokens.len() as u32;
        self.tokens.push(bytes);
        self.merges.push((left, right));
        self.merge_lookup.insert((left, right), id);
        id
    }

    /// Encodes raw bytes: byte tokens first, then merges applied in training
    /// order priority (lowest merge index first) until none apply.
    pub fn encode_bytes(&self, input: &[u8]) -> Vec<u32> {
        let mut ids: Vec<u32> = input.iter().map(|&b| b as u32).collect();
        if self.merge_lookup.is_empty() {
            return ids;
        }
        loop {
            let mut best: Option<(u32, usize)> = None; // (merged id, position)
            for i in 0..ids.len().saturating_sub(1) {
                if let Some(&id) = self.merge_lookup.get(&(ids[i], ids[i + 1])) {
                    let better = match best {
                        None => true,
                        Some((best_id, _)) => id < best_id,
                    };
                    if better {
                        best = Some((id, i));
                    }
                }
            }
            let Some((id, pos)) = best else { break };
            ids[pos] = id;
            ids.remove(pos + 1);
        }
        ids
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        self.encode_bytes(text.as_bytes())
    }

    pub fn decode_bytes(&self, ids: &[u32]) -> Result<Vec<u8>, TokenizerError> {
        let mut out = Vec::new();
        for &id in ids {
            out.extend_from_slice(self.token_bytes(id)?);
        }
        Ok(out)
    }

    /// Decodes ids to text. Byte sequences that came from `encode` always
    /// reassemble into valid UTF-8; anything else is replaced lossily.
    pub fn decode(&self, ids: &[u32]) -> Result<String, TokenizerError> {
        let bytes = self.decode_bytes(ids)?;
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }

    /// Serializes to the vocab JSON file format.
    pub fn save(&self, path: &Path) -> Result<(), TokenizerError> {
        let file = VocabFile {
            tokens: self.tokens.iter().map(|b| base64_encode(b)).collect(),
            merges: self.merges.iter().map(|&(a, b)| [a, b]).collect(),
            specials: self.specials,
        };
        std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TokenizerError> {
        let text = std::fs::read_to_string(path)?;
        let file: VocabFile = serde_json::from_str(&text)?;
        let tokens: Result<Vec<Vec<u8>>, TokenizerError> =
            file.tokens.iter().map(|s| base64_decode(s)).collect();
        let tokens = tokens?;
        if tokens.len() < N_BYTES + N_SPECIALS {
            return Err(TokenizerError::Malformed(format!(
                "vocab has {} entries, need at least {}",
                tokens.len(),
                N_BYTES + N_SPECIALS
            )));
        }
        for (i, t) in tokens.iter().take(N_BYTES).enumerate() {
            if t.as_slice() != [i as u8] {
                return Err(TokenizerError::Malformed(format!(
                    "base token {i} is not its own byte"
                )));
            }
        }
        let mut merge_lookup = HashMap::new();
        let mut merges = Vec::with_capacity(file.merges.len());
        for (k, [a, b]) in file.merges.iter().enumerate() {
            let id = (N_BYTES + N_SPECIALS + k) as u32;
            if *a >= id || *b >= id {
                return Err(TokenizerError::Malformed(format!(
                    "merge {k} references id not yet defined"
                )));
            }
            merges.push((*a, *b));
            merge_lookup.insert((*a, *b), id);
        }
        if merges.len() + N_BYTES + N_SPECIALS != tokens.len() {
            return Err(TokenizerError::Malformed(
                "merge count does not match token count".into(),
            ));
        }
        Ok(Self {
            tokens,
            merges,
            specials: file.specials,
            merge_lookup,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    tokens: Vec<String>,
    merges: Vec<[u32; 2]>,
    specials: SpecialIds,
}

/// Trains byte-level BPE by greedy highest-frequency pair merging over the
/// given stories. Pairs never cross story boundaries. Frequency ties break to
/// the lexicographically smallest (left bytes, right bytes) pair, so training
/// is deterministic for a given corpus.
pub fn train_bpe(stories: &[String], target_size: usize) -> Result<BpeTrainOutcome, TokenizerError> {
    if stories.is_empty() || stories.iter().all(|s| s.is_empty()) {
        return Err(TokenizerError::EmptyCorpus);
    }
    if target_size < N_BYTES + N_SPECIALS {
        return Err(TokenizerError::TargetTooSmall(target_size));
    }
    let mut vocab = Vocab::byte_level();
    let mut sequences: Vec<Vec<u32>> = stories
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| s.bytes().map(|b| b as u32).collect())
        .collect();

    while vocab.size() < target_size {
        let mut counts: HashMap<(u32, u32), usize> = HashMap::new();
        for seq in &sequences {
            for pair in seq.windows(2) {
                *counts.entry((pair[0], pair[1])).or_insert(0) += 1;
            }
        }
        let best = counts.iter().filter(|&(_, &c)| c >= 2).max_by(
            |(&pair_a, &count_a), (&pair_b, &count_b)| {
                count_a.cmp(&count_b).then_with(|| {
                    // Prefer the lexicographically smaller pair, so reverse the
                    // byte comparison inside max_by.
                    let key_a = (&vocab.tokens[pair_a.0 as usize], &vocab.tokens[pair_a.1 as usize]);
                    let key_b = (&vocab.tokens[pair_b.0 as usize], &vocab.tokens[pair_b.1 as usize]);
                    key_b.cmp(&key_a)
                })
            },
        );
        let Some((&(left, right), _)) = best else {
            // No pair occurs twice: the corpus cannot support more merges.
            return Ok(BpeTrainOutcome {
                vocab,
                reached_target: false,
            });
        };
        let merged = vocab.push_merge(left, right);
        for seq in &mut sequences {
            let mut i = 0;
            while i + 1 < seq.len() {
                if seq[i] == left && seq[i + 1] == right {
                    seq[i] = merged;
                    seq.remove(i + 1);
                } else {
                    i += 1;
                }
            }
        }
    }
    Ok(BpeTrainOutcome {
        vocab,
        reached_target: true,
    })
}

// Minimal base64 (standard alphabet, padded); avoids pulling a crate for one
// file format.
const B64: &[u8; 64] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

fn base64_encode(data: &[u8]) -> String {
    let mut out = String::with_capacity(data.len().div_ceil(3) * 4);
    for chunk in data.chunks(3) {
        let b = [
            chunk[0],
            chunk.get(1).copied().unwrap_or(0),
            chunk.get(2).copied().unwrap_or(0),
        ];
        let n = ((b[0] as u32) << 16) | ((b[1] as u32) << 8) | b[2] as u32;
        out.push(B64[(n >> 18) as usize & 63] as char);
        out.push(B64[(n >> 12) as usize & 63] as char);
        out.push(if chunk.len() > 1 {
            B64[(n >> 6) as usize & 63] as char
        } else {
            '='
        });
        out.push(if chunk.len() > 2 {
            B64[n as usize & 63] as char
        } else {
            '='
        });
    }
    out
}

fn base64_decode(text: &str) -> Result<Vec<u8>, TokenizerError> {
    let mut lookup = [255u8; 256];
    for (i, &c) in B64.iter().enumerate() {
        lookup[c as usize] = i as u8;
    }
    let bytes: Vec<u8> = text.bytes().filter(|&b| b != b'=').collect();
    let mut out = Vec::with_capacity(bytes.len() * 3 / 4);
    for chunk in bytes.chunks(4) {
        let mut n: u32 = 0;
        for &c in chunk {
            let v = lookup[c as usize];
            if v == 255 {
                return Err(TokenizerError::Malformed(format!(
                    "invalid base64 byte {c:#x}"
                )));
            }
            n = (n << 6) | v as u32;
        }
        match chunk.len() {
            4 => out.extend_from_slice(&[(n >> 16) as u8, (n >> 8) as u8, n as u8]),
            3 => {
                n <<= 6;
                out.extend_from_slice(&[(n >> 16) as u8, (n >> 8) as u8]);
            }
            2 => {
                n <<= 12;
                out.push((n >> 16) as u8);
            }
            _ => return Err(TokenizerError::Malformed("truncated base64".into())),
        }
    }
    Ok(out)
}
