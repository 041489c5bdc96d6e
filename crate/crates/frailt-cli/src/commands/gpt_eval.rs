//! `frailt gpt-eval`: grade a completions file with an OpenAI-compatible
//! judge, or the bundled local mock with `--mock`. Scores append to
//! `scores.jsonl` as they arrive, so interrupted runs resume by skipping
//! already-scored (prompt, completion) pairs.

use std::collections::HashSet;
use std::path::PathBuf;
use std::time::Duration;

use clap::Args;
use frailt_eval::{
    aggregate_scores, build_eval_prompt, ClientConfig, EvalClient, EvalError, MockJudge,
    ScoreRecord,
};
use serde::Deserialize;

use crate::manifest::RunManifest;
use crate::CliError;

#[derive(Args)]
pub struct GptEvalArgs {
    /// Completions JSONL produced by `frailt generate`
    #[arg(long)]
    pub completions: PathBuf,

    /// Output directory for scores.jsonl and report.json
    #[arg(long, default_value = "runs/eval")]
    pub out_dir: PathBuf,

    /// Use the bundled in-process mock judge (no key, no network)
    #[arg(long)]
    pub mock: bool,

    /// Chat-completions endpoint base, e.g. https://api.openai.com/v1
    #[arg(long, default_value = "https://api.openai.com/v1")]
    pub endpoint: String,

    /// Judge model name
    #[arg(long, default_value = "gpt-4-1106-preview")]
    pub judge_model: String,

    /// Validation loss of the graded model, recorded in the report
    #[arg(long)]
    pub val_loss: Option<f64>,

    /// Override the model tag recorded in the report
    #[arg(long)]
    pub model_tag: Option<String>,

    /// Max concurrent requests
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,

    /// Per-request timeout in seconds
    #[arg(long, default_value_t = 120)]
    pub timeout_secs: u64,
}

#[derive(Deserialize)]
struct CompletionLine {
    prompt_id: u32,
    completion_id: u32,
    #[serde(default)]
    model_tag: Option<String>,
    story: String,
}

pub fn run(args: GptEvalArgs) -> Result<(), CliError> {
    let api_key = std::env::var("EVAL_API_KEY").ok();
    if !args.mock && api_key.is_none() {
        return Err(CliError::MissingApiKey);
    }

    let text = std::fs::read_to_string(&args.completions)?;
    let mut completions = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let parsed: CompletionLine = serde_json::from_str(line)
            .map_err(|e| CliError::Runtime(format!("completions file: {e}")))?;
        completions.push(parsed);
    }
    if completions.is_empty() {
        return Err(CliError::Runtime("completions file is empty".into()));
    }
    let model_tag = args
        .model_tag
        .clone()
        .or_else(|| completions[0].model_tag.clone())
        .unwrap_or_else(|| "unknown-model".into());

    let scores_path = args.out_dir.join("scores.jsonl");
    let report_path = args.out_dir.join("report.json");
    RunManifest::new(
        "gpt-eval",
        serde_json::json!({
            "completions": args.completions.display().to_string(),
            "mock": args.mock,
            "endpoint": if args.mock { "mock".to_string() } else { args.endpoint.clone() },
            "judge_model": args.judge_model,
            "model_tag": model_tag,
            "val_loss": args.val_loss,
            "max_in_flight": args.max_in_flight,
        }),
        0,
    )
    .with_artifacts(&[&scores_path, &report_path])
    .write(&args.out_dir)?;

    // The mock must outlive the client.
    let mock = if args.mock {
        Some(MockJudge::start().map_err(|e| CliError::Runtime(e.to_string()))?)
    } else {
        None
    };
    let client = EvalClient::new(ClientConfig {
        base_url: mock
            .as_ref()
            .map(|m| m.base_url().to_string())
            .unwrap_or_else(|| args.endpoint.clone()),
        model: args.judge_model.clone(),
        api_key: if args.mock { None } else { api_key },
        timeout: Duration::from_secs(args.timeout_secs),
        max_retries: 3,
        backoff_base: Duration::from_millis(500),
        max_in_flight: args.max_in_flight,
    });

    // Resume: skip pairs that already have a score on disk.
    let existing = frailt_eval::score::load_records(&scores_path)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let scored: HashSet<(u32, u32)> = existing.iter().map(ScoreRecord::key).collect();
    let pending: Vec<&CompletionLine> = completions
        .iter()
        .filter(|c| !scored.contains(&(c.prompt_id, c.completion_id)))
        .collect();
    eprintln!(
        "{} completions, {} already scored, {} pending",
        completions.len(),
        scored.len(),
        pending.len()
    );

    let mut records = existing;
    for chunk in pending.chunks(args.max_in_flight.max(1)) {
        let prompts: Vec<String> = chunk
            .iter()
            .map(|c| build_eval_prompt(&c.story).map_err(|e| CliError::Runtime(e.to_string())))
            .collect::<Result<_, _>>()?;
        let replies = client.score_many(&prompts);
        for (completion, reply) in chunk.iter().zip(replies) {
            match reply {
                Ok(reply) => {
                    let record = ScoreRecord {
                        prompt_id: completion.prompt_id,
                        completion_id: completion.completion_id,
                        model_tag: model_tag.clone(),
                        grammar: reply.grammar,
                        creativity: reply.creativity,
                        consistency: reply.consistency,
                        plot: reply.plot,
                        judge_text: reply.judge_text,
                    };
                    frailt_eval::score::append_record(&scores_path, &record)
                        .map_err(|e| CliError::Runtime(e.to_string()))?;
                    records.push(record);
                }
                Err(EvalError::ScoreOutOfRange { category, value }) => {
                    // Rejected record: logged, not persisted, run continues.
                    eprintln!(
                        "rejected prompt {} completion {}: {category} score {value} out of range",
                        completion.prompt_id, completion.completion_id
                    );
                }
                Err(e) => return Err(CliError::Runtime(e.to_string())),
            }
        }
    }

    let mut report =
        aggregate_scores(&records).map_err(|e| CliError::Runtime(e.to_string()))?;
    report.model_tag = model_tag;
    report.val_loss = args.val_loss;
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
