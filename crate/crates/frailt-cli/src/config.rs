//! Run configuration: a JSON file with `model`, `train`, and `data` sections,
//! overridable with dot-path `--set` flags and a few shorthand flags. The
//! fully resolved JSON lands in the run manifest.

use std::path::Path;

use frailt::model::ModelConfig;
use frailt::trainer::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    /// Architecture spec: `"8"` for a standard stack, `"2x4"` style for the
    /// recursive model.
    pub arch: String,
    pub embedding_dim: usize,
    pub n_heads: usize,
    pub vocab_size: usize,
    pub context_length: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            arch: "1".into(),
            embedding_dim: 64,
            n_heads: 8,
            vocab_size: 512,
            context_length: 256,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSection {
    /// Corpus path, or `"builtin:mini"` for the bundled synthetic stories.
    pub corpus: String,
    pub validation_fraction: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            corpus: "builtin:mini".into(),
            validation_fraction: 0.05,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FileConfig {
    pub model: ModelSection,
    pub train: TrainConfig,
    pub data: DataSection,
}

impl FileConfig {
    pub fn model_config(&self) -> Result<ModelConfig, CliError> {
        let config = ModelConfig::from_arch_spec(
            &self.model.arch,
            self.model.embedding_dim,
            self.model.n_heads,
            self.model.vocab_size,
            self.model.context_length,
        )
        .map_err(|e| CliError::Config(format!("model.arch: {e}")))?;
        config
            .validate()
            .map_err(|e| CliError::Config(format!("model: {e}")))?;
        Ok(config)
    }
}

/// Loads the config file (or the defaults), applies `--set` overrides and
/// shorthand flags, and deserializes with field-path errors.
pub fn resolve(
    config_path: Option<&Path>,
    sets: &[String],
    shorthand: &[(&str, Option<Value>)],
) -> Result<(FileConfig, Value), CliError> {
    let mut value: Value = match config_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => serde_json::to_value(FileConfig::default()).expect("defaults serialize"),
    };
    for (path, maybe) in shorthand {
        if let Some(v) = maybe {
            set_path(&mut value, path, v.clone())
                .map_err(|e| CliError::Config(format!("--{path}: {e}")))?;
        }
    }
    for entry in sets {
        let (path, raw) = entry
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set {entry}: expected path=value")))?;
        set_path(&mut value, path, parse_scalar(raw))
            .map_err(|e| CliError::Config(format!("--set {entry}: {e}")))?;
    }
    let deserializer = value.clone();
    let config: FileConfig = serde_path_to_error::deserialize(&deserializer)
        .map_err(|e| CliError::Config(format!("field {}: {}", e.path(), e.inner())))?;
    config
        .train
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let resolved = serde_json::to_value(&config).expect("config serializes");
    Ok((config, resolved))
}

/// Parses an override scalar: JSON literal when it looks like one, string
/// otherwise.
fn parse_scalar(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn set_path(root: &mut Value, path: &str, new: Value) -> Result<(), String> {
    let mut current = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if !current.is_object() {
            return Err(format!(
                "{} is not an object",
                parts[..i].join(".")
            ));
        }
        let map = current.as_object_mut().expect("checked");
        if i + 1 == parts.len() {
            map.insert((*part).to_string(), new);
            return Ok(());
        }
        current = map
            .entry((*part).to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Err("empty path".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let (config, _) = resolve(None, &[], &[]).unwrap();
        assert_eq!(config.model.arch, "1");
        assert_eq!(config.train.seed, 7);
    }

    #[test]
    fn set_overrides_apply_dot_paths() {
        let sets = vec![
            "train.total_steps=42".to_string(),
            "model.arch=2x4".to_string(),
            "data.validation_fraction=0.1".to_string(),
        ];
        let (config, resolved) = resolve(None, &sets, &[]).unwrap();
        assert_eq!(config.train.total_steps, 42);
        assert_eq!(config.model.arch, "2x4");
        assert_eq!(config.data.validation_fraction, 0.1);
        assert_eq!(resolved["train"]["total_steps"], 42);
    }

    #[test]
    fn shorthand_precedes_set() {
        let sets = vec!["model.embedding_dim=128".to_string()];
        let shorthand = [("model.embedding_dim", Some(Value::from(32)))];
        let (config, _) = resolve(None, &sets, &shorthand).unwrap();
        // --set applies after shorthand, so it wins
        assert_eq!(config.model.embedding_dim, 128);
    }

    #[test]
    fn numeric_looking_arch_stays_a_string() {
        let shorthand = [("model.arch", Some(Value::from("8")))];
        let (config, _) = resolve(None, &[], &shorthand).unwrap();
        assert_eq!(config.model.arch, "8");
    }

    #[test]
    fn type_violation_names_the_field() {
        let sets = vec!["train.total_steps=\"many\"".to_string()];
        let err = resolve(None, &sets, &[]).unwrap_err();
        match err {
            CliError::Config(m) => assert!(m.contains("train.total_steps"), "{m}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_schedule_is_rejected() {
        let sets = vec![
            "train.warmup_steps=100".to_string(),
            "train.total_steps=10".to_string(),
        ];
        assert!(matches!(
            resolve(None, &sets, &[]),
            Err(CliError::Config(_))
        ));
    }
}
