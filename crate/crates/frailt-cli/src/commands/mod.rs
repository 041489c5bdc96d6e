//! Subcommand implementations.

pub mod compare;
pub mod fit;
pub mod generate;
pub mod gpt_eval;
pub mod reference;
pub mod train;

use std::path::Path;

use frailt::data::Corpus;
use frailt::tokenizer::{train_bpe, Vocab};
use frailt::trainer::LossPoint;

use crate::CliError;

/// Loads `builtin:mini` or a corpus file by path.
pub fn load_corpus(spec: &str, validation_fraction: f64) -> Result<Corpus, CliError> {
    if spec == "builtin:mini" || spec == "mini" {
        Ok(Corpus::bundled_mini(validation_fraction))
    } else {
        Ok(Corpus::from_file(Path::new(spec), validation_fraction)?)
    }
}

/// Trains a vocab on the corpus training split, warning when the corpus could
/// not support the requested size.
pub fn train_vocab(corpus: &Corpus, target_size: usize) -> Result<Vocab, CliError> {
    let outcome = train_bpe(corpus.train_stories(), target_size)?;
    if !outcome.reached_target {
        eprintln!(
            "warning: corpus supports only {} tokens of the requested {target_size}",
            outcome.vocab.size()
        );
    }
    Ok(outcome.vocab)
}

/// Writes `step,train_loss,val_loss` rows; the third column is empty on
/// non-evaluation steps.
pub fn write_loss_csv(path: &Path, history: &[LossPoint]) -> Result<(), CliError> {
    let mut out = String::from("step,train_loss,val_loss\n");
    for point in history {
        let val = point
            .val_loss
            .map(|v| format!("{v}"))
            .unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", point.step, point.train_loss, val));
    }
    std::fs::write(path, out)?;
    Ok(())
}
