//! Autoregressive story completion.
//!
//! Sampling is fully specified so an independent implementation can reproduce
//! it (see [`crate::rng`] for the generator and the categorical draw):
//! logits for the next token come from a full forward pass over the current
//! window (sliding when the context fills up); the PAD logit is masked to
//! negative infinity; with temperature 0 the argmax wins (lowest id on ties);
//! otherwise the top-k logits (all, when k = 0) are divided by the temperature,
//! softmaxed in `f64`, and drawn by inverse CDF.

use thiserror::Error;

use crate::model::{model_logits, ModelConfig, ModelError, ModelWeights};
use crate::rng::SplitMix64;
use crate::tokenizer::{TokenizerError, Vocab};

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("prompt tokenizes to {len} tokens, must be under the context length {max}")]
    PromptTooLong { len: usize, max: usize },

    #[error("prompt is empty")]
    EmptyPrompt,

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SamplerConfig {
    /// 0 means greedy argmax decoding.
    pub temperature: f32,
    /// 0 disables the top-k restriction.
    pub top_k: usize,
    pub max_new_tokens: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            top_k: 40,
            max_new_tokens: 256,
            seed: 0,
        }
    }
}

/// Picks the next token from a logit row, per the module-level sampling spec.
pub fn sample_token(
    logits: &[f32],
    sampler: &SamplerConfig,
    pad_id: u32,
    rng: &mut SplitMix64,
) -> u32 {
    debug_assert!(!logits.is_empty());
    let masked = |id: usize| -> f32 {
        if id as u32 == pad_id {
            f32::NEG_INFINITY
        } else {
            logits[id]
        }
    };
    // (logit desc, id asc) ordering makes greedy and top-k tie-breaks agree.
    let ranked = || {
        let mut ids: Vec<usize> = (0..logits.len()).collect();
        ids.sort_by(|&a, &b| {
            masked(b)
                .partial_cmp(&masked(a))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        ids
    };
    if sampler.temperature == 0.0 {
        return ranked()[0] as u32;
    }
    let ids = ranked();
    let keep = if sampler.top_k == 0 {
        ids.len()
    } else {
        sampler.top_k.min(ids.len())
    };
    let kept = &ids[..keep];
    let max = masked(kept[0]) as f64;
    let probs: Vec<f64> = kept
        .iter()
        .map(|&id| ((masked(id) as f64 - max) / sampler.temperature as f64).exp())
        .collect();
    kept[rng.categorical(&probs)] as u32
}

/// Samples completion token ids for `prompt`. Generation stops at EOS or
/// after `max_new_tokens`; when the window is full, the oldest tokens slide
/// out and positions are recomputed from zero.
pub fn generate_ids(
    weights: &ModelWeights,
    config: &ModelConfig,
    vocab: &Vocab,
    prompt: &str,
    sampler: &SamplerConfig,
) -> Result<Vec<u32>, GenerateError> {
    let prompt_ids = vocab.encode(prompt);
    if prompt_ids.is_empty() {
        return Err(GenerateError::EmptyPrompt);
    }
    if prompt_ids.len() >= config.context_length {
        return Err(GenerateError::PromptTooLong {
            len: prompt_ids.len(),
            max: config.context_length,
        });
    }
    let specials = vocab.specials();
    let mut rng = SplitMix64::new(sampler.seed);
    let mut window = prompt_ids;
    let mut generated: Vec<u32> = Vec::new();
    for _ in 0..sampler.max_new_tokens {
        if window.len() > config.context_length {
            let start = window.len() - config.context_length;
            window.drain(..start);
        }
        let logits = model_logits(weights, config, &window)?;
        let v = config.vocab_size;
        let last_row = &logits.data()[(window.len() - 1) * v..window.len() * v];
        let token = sample_token(last_row, sampler, specials.pad, &mut rng);
        if token == specials.eos {
            break;
        }
        generated.push(token);
        window.push(token);
    }
    Ok(generated)
}

/// [`generate_ids`] decoded to text.
pub fn generate(
    weights: &ModelWeights,
    config: &ModelConfig,
    vocab: &Vocab,
    prompt: &str,
    sampler: &SamplerConfig,
) -> Result<String, GenerateError> {
    let ids = generate_ids(weights, config, vocab, prompt, sampler)?;
    Ok(vocab.decode(&ids)?)
}

/// Formats a graded exercise: the prescribed beginning, a `***` separator
/// line, then the sampled completion.
pub fn complete_story(
    weights: &ModelWeights,
    config: &ModelConfig,
    vocab: &Vocab,
    beginning: &str,
    sampler: &SamplerConfig,
) -> Result<String, GenerateError> {
    if beginning.is_empty() {
        return Err(GenerateError::EmptyPrompt);
    }
    let completion = generate(weights, config, vocab, beginning, sampler)?;
    Ok(format!("{beginning}\n***\n{completion}"))
}
