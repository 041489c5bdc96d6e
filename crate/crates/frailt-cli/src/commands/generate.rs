//! `frailt generate`: sample completions for a prompt file. Output is JSON
//! lines, one record per (prompt, completion) with the `***`-separated story
//! block ready for grading.

use std::path::{Path, PathBuf};

use clap::Args;
use frailt::generator::{complete_story, SamplerConfig};
use frailt::tokenizer::Vocab;
use frailt::trainer::Checkpoint;
use serde::{Deserialize, Serialize};

use crate::manifest::RunManifest;
use crate::CliError;

#[derive(Args)]
pub struct GenerateArgs {
    /// Trained checkpoint (.frlt)
    #[arg(long)]
    pub checkpoint: PathBuf,

    /// Vocab JSON; defaults to vocab.json beside the checkpoint
    #[arg(long)]
    pub vocab: Option<PathBuf>,

    /// Prompt file: blank-line-separated blocks (.txt) or {"prompt": ...} JSONL
    #[arg(long)]
    pub prompts: PathBuf,

    /// Output completions JSONL
    #[arg(long, default_value = "completions.jsonl")]
    pub out: PathBuf,

    /// Greedy decoding (temperature 0); overrides --temperature
    #[arg(long)]
    pub greedy: bool,

    #[arg(long, default_value_t = 1.0)]
    pub temperature: f32,

    /// 0 disables the top-k restriction
    #[arg(long, default_value_t = 40)]
    pub top_k: usize,

    #[arg(long, default_value_t = 192)]
    pub max_new_tokens: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Completions sampled per prompt (seeds advance per completion)
    #[arg(long, default_value_t = 1)]
    pub completions_per_prompt: u32,

    /// Tag recorded on every output row; defaults to the checkpoint arch label
    #[arg(long)]
    pub model_tag: Option<String>,
}

/// One line of the completions file.
#[derive(Debug, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub prompt_id: u32,
    pub completion_id: u32,
    pub model_tag: String,
    /// Beginning, a `***` separator line, completion.
    pub story: String,
}

fn read_prompts(path: &Path) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "jsonl") {
        #[derive(Deserialize)]
        struct Line {
            prompt: String,
        }
        let mut prompts = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let parsed: Line = serde_json::from_str(line)?;
            prompts.push(parsed.prompt);
        }
        Ok(prompts)
    } else {
        Ok(text
            .split("\n\n")
            .map(|b| b.trim().to_string())
            .filter(|b| !b.is_empty())
            .collect())
    }
}

pub fn run(args: GenerateArgs) -> Result<(), CliError> {
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let vocab_path = args
        .vocab
        .clone()
        .unwrap_or_else(|| args.checkpoint.with_file_name("vocab.json"));
    let vocab = Vocab::load(&vocab_path)
        .map_err(|e| CliError::Checkpoint(format!("{}: {e}", vocab_path.display())))?;
    let prompts = read_prompts(&args.prompts)?;
    if prompts.is_empty() {
        return Err(CliError::Runtime("prompt file has no prompts".into()));
    }

    let model_tag = args
        .model_tag
        .clone()
        .unwrap_or_else(|| format!("{}-d{}", checkpoint.config.arch_label(), checkpoint.config.embedding_dim));
    let out_dir = args.out.parent().map(Path::to_path_buf).unwrap_or_default();
    let manifest_dir = if out_dir.as_os_str().is_empty() {
        PathBuf::from(".")
    } else {
        out_dir
    };
    RunManifest::new(
        "generate",
        serde_json::json!({
            "checkpoint": args.checkpoint.display().to_string(),
            "vocab": vocab_path.display().to_string(),
            "prompts": args.prompts.display().to_string(),
            "greedy": args.greedy,
            "temperature": args.temperature,
            "top_k": args.top_k,
            "max_new_tokens": args.max_new_tokens,
            "seed": args.seed,
            "completions_per_prompt": args.completions_per_prompt,
            "model_tag": model_tag,
        }),
        args.seed,
    )
    .with_artifacts(&[&args.out])
    .write(&manifest_dir)?;

    let mut lines = String::new();
    for (prompt_id, beginning) in prompts.iter().enumerate() {
        for completion_id in 0..args.completions_per_prompt {
            let sampler = SamplerConfig {
                temperature: if args.greedy { 0.0 } else { args.temperature },
                top_k: args.top_k,
                max_new_tokens: args.max_new_tokens,
                seed: args
                    .seed
                    .wrapping_add(prompt_id as u64)
                    .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                    .wrapping_add(completion_id as u64),
            };
            let story = complete_story(
                &checkpoint.weights,
                &checkpoint.config,
                &vocab,
                beginning,
                &sampler,
            )?;
            let record = CompletionRecord {
                prompt_id: prompt_id as u32,
                completion_id,
                model_tag: model_tag.clone(),
                story,
            };
            lines.push_str(&serde_json::to_string(&record)?);
            lines.push('\n');
            eprintln!(
                "prompt {prompt_id} completion {completion_id}: {} chars",
                record.story.len()
            );
        }
    }
    std::fs::write(&args.out, lines)?;
    println!("{}", args.out.display());
    Ok(())
}
