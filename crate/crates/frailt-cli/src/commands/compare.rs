//! `frailt compare`: the paired experiment. Both arms share the seed, data,
//! and schedule; the command refuses unmatched compute budgets.

use std::path::PathBuf;

use clap::Args;
use frailt::model::ModelConfig;
use frailt::trainer::run_experiment;

use crate::commands::{load_corpus, train_vocab, write_loss_csv};
use crate::config;
use crate::manifest::RunManifest;
use crate::CliError;

#[derive(Args)]
pub struct CompareArgs {
    /// Standard arm: number of layers, e.g. 2
    #[arg(long)]
    pub standard: String,

    /// Recursive arm: arch spec, e.g. 1x2
    #[arg(long)]
    pub frailt: String,

    /// JSON config file for everything except the arch
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Dot-path overrides
    #[arg(long = "set", value_name = "PATH=VALUE")]
    pub sets: Vec<String>,

    #[arg(long)]
    pub dim: Option<usize>,

    #[arg(long)]
    pub steps: Option<u64>,

    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long)]
    pub corpus: Option<String>,

    #[arg(long, default_value = "runs/compare")]
    pub out: PathBuf,
}

pub fn run(args: CompareArgs) -> Result<(), CliError> {
    let shorthand = [
        ("model.embedding_dim", args.dim.map(serde_json::Value::from)),
        ("train.total_steps", args.steps.map(serde_json::Value::from)),
        ("train.seed", args.seed.map(serde_json::Value::from)),
        ("data.corpus", args.corpus.clone().map(serde_json::Value::from)),
    ];
    let (file_config, resolved) = config::resolve(args.config.as_deref(), &args.sets, &shorthand)?;

    let build = |arch: &str| -> Result<ModelConfig, CliError> {
        let config = ModelConfig::from_arch_spec(
            arch,
            file_config.model.embedding_dim,
            file_config.model.n_heads,
            file_config.model.vocab_size,
            file_config.model.context_length,
        )
        .map_err(|e| CliError::Config(format!("arch {arch}: {e}")))?;
        config
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(config)
    };
    let mut standard_config = build(&args.standard)?;
    let mut frailt_config = build(&args.frailt)?;
    if standard_config.effective_depth() != frailt_config.effective_depth() {
        return Err(CliError::Config(format!(
            "budget mismatch: standard depth {} vs recursive depth {}",
            standard_config.effective_depth(),
            frailt_config.effective_depth()
        )));
    }

    let corpus = load_corpus(&file_config.data.corpus, file_config.data.validation_fraction)?;
    let vocab = train_vocab(&corpus, file_config.model.vocab_size)?;
    if vocab.size() != standard_config.vocab_size {
        standard_config.vocab_size = vocab.size();
        frailt_config.vocab_size = vocab.size();
    }

    let report_path = args.out.join("report.json");
    let std_csv = args.out.join("losses_standard.csv");
    let frailt_csv = args.out.join("losses_frailt.csv");
    let vocab_path = args.out.join("vocab.json");
    RunManifest::new("compare", resolved, file_config.train.seed)
        .with_corpus_digest(corpus.digest())
        .with_artifacts(&[&report_path, &std_csv, &frailt_csv, &vocab_path])
        .write(&args.out)?;

    let eval_interval = file_config.train.eval_interval;
    let report = run_experiment(
        standard_config,
        frailt_config,
        file_config.train.clone(),
        &corpus,
        &vocab,
        |arm, point| {
            if point.step % eval_interval == 0 {
                match point.val_loss {
                    Some(val) => eprintln!(
                        "[{arm}] step {:>6}  train {:.4}  val {:.4}",
                        point.step, point.train_loss, val
                    ),
                    None => {
                        eprintln!("[{arm}] step {:>6}  train {:.4}", point.step, point.train_loss)
                    }
                }
            }
        },
    )?;

    write_loss_csv(&std_csv, &report.standard.history)?;
    write_loss_csv(&frailt_csv, &report.frailt.history)?;
    vocab.save(&vocab_path)?;
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;

    // Comparison row shaped like the published tables, with the reference
    // losses printed alongside (desk-scale runs are not expected to hit them).
    println!("arch            depth  params    final_val  reference");
    for arm in [&report.standard, &report.frailt] {
        println!(
            "{:<15} {:>5}  {:>8}  {:>9}  {}",
            format!("{} ({})", arm.arch_label, arm.model_kind),
            arm.effective_depth,
            arm.param_total,
            arm.final_val_loss
                .map(|v| format!("{v:.4}"))
                .unwrap_or_else(|| "-".into()),
            arm.paper_reference_loss
                .map(|v| format!("{v:.3}"))
                .unwrap_or_else(|| "-".into()),
        );
    }
    Ok(())
}
