//! `frailt train`: one model, full protocol, reproducible artifacts.

use std::path::PathBuf;

use clap::Args;
use frailt::trainer::{equalize_budget, TrainingRun};

use crate::commands::{load_corpus, train_vocab, write_loss_csv};
use crate::config;
use crate::manifest::RunManifest;
use crate::CliError;

#[derive(Args)]
pub struct TrainArgs {
    /// JSON config file; flags below override its fields
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Dot-path overrides, e.g. --set train.total_steps=500
    #[arg(long = "set", value_name = "PATH=VALUE")]
    pub sets: Vec<String>,

    /// Architecture spec, e.g. "8" (standard) or "2x4" (recursive)
    #[arg(long)]
    pub arch: Option<String>,

    /// Embedding dimension
    #[arg(long)]
    pub dim: Option<usize>,

    /// Total optimizer steps
    #[arg(long)]
    pub steps: Option<u64>,

    /// Run seed (init, shuffling)
    #[arg(long)]
    pub seed: Option<u64>,

    /// Corpus path or "builtin:mini"
    #[arg(long)]
    pub corpus: Option<String>,

    /// Assert budget parity against a standard model with this many layers
    #[arg(long, value_name = "LAYERS")]
    pub compare: Option<usize>,

    /// Output directory
    #[arg(long, default_value = "runs/train")]
    pub out: PathBuf,
}

pub fn run(args: TrainArgs) -> Result<(), CliError> {
    let shorthand = [
        ("model.arch", args.arch.clone().map(serde_json::Value::from)),
        ("model.embedding_dim", args.dim.map(serde_json::Value::from)),
        ("train.total_steps", args.steps.map(serde_json::Value::from)),
        ("train.seed", args.seed.map(serde_json::Value::from)),
        ("data.corpus", args.corpus.clone().map(serde_json::Value::from)),
    ];
    let (file_config, resolved) = config::resolve(args.config.as_deref(), &args.sets, &shorthand)?;
    let mut model_config = file_config.model_config()?;

    if let Some(standard_layers) = args.compare {
        let depth = model_config.effective_depth();
        if depth != standard_layers {
            return Err(CliError::Config(format!(
                "effective depth {depth} does not match the {standard_layers}-layer standard budget"
            )));
        }
        // Also surface the iteration count the parity implies, when it divides.
        let blocks: usize = model_config.groups.iter().map(|g| g.n_blocks).sum();
        if let Ok(iterations) = equalize_budget(standard_layers, blocks) {
            eprintln!(
                "budget parity: {blocks} blocks x {iterations} iterations = {standard_layers} layers"
            );
        }
    }

    let corpus = load_corpus(&file_config.data.corpus, file_config.data.validation_fraction)?;
    let vocab = train_vocab(&corpus, model_config.vocab_size)?;
    if vocab.size() != model_config.vocab_size {
        eprintln!(
            "warning: model vocab resized {} -> {} to match the trained tokenizer",
            model_config.vocab_size,
            vocab.size()
        );
        model_config.vocab_size = vocab.size();
    }

    let checkpoint_path = args.out.join("model.frlt");
    let vocab_path = args.out.join("vocab.json");
    let losses_path = args.out.join("losses.csv");
    RunManifest::new("train", resolved, file_config.train.seed)
        .with_corpus_digest(corpus.digest())
        .with_artifacts(&[&checkpoint_path, &vocab_path, &losses_path])
        .write(&args.out)?;

    let eval_interval = file_config.train.eval_interval;
    let mut run = TrainingRun::new(model_config, file_config.train.clone(), &corpus, &vocab)?;
    eprintln!(
        "training {} (eff. depth {}, {} params) for {} steps",
        run.model_config().arch_label(),
        run.model_config().effective_depth(),
        frailt::model::param_count(run.model_config()).total,
        file_config.train.total_steps
    );
    run.run_to_completion(|point| {
        if point.step % eval_interval == 0 || point.val_loss.is_some() {
            match point.val_loss {
                Some(val) => eprintln!(
                    "step {:>6}  train {:.4}  val {:.4}",
                    point.step, point.train_loss, val
                ),
                None => eprintln!("step {:>6}  train {:.4}", point.step, point.train_loss),
            }
        }
    })?;

    let final_val = run.state().history.iter().rev().find_map(|p| p.val_loss);
    write_loss_csv(&losses_path, &run.state().history)?;
    vocab.save(&vocab_path)?;
    let checkpoint = run.into_checkpoint();
    checkpoint.save(&checkpoint_path)?;

    let summary = serde_json::json!({
        "arch": checkpoint.config.arch_label(),
        "effective_depth": checkpoint.config.effective_depth(),
        "params": frailt::model::param_count(&checkpoint.config).total,
        "final_val_loss": final_val,
        "checkpoint": checkpoint_path.display().to_string(),
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
