//! Line-based `key=value` codec for [`TrainConfig`].
//!
//! Blank lines and `#` comments are allowed; unknown keys are rejected;
//! missing keys fall back to the defaults. `parse(render(c)) == c`.

use crate::autodiff::AdamParams;
use crate::losses::LossWeights;
use crate::training::TrainConfig;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {0}: expected key=value")]
    BadLine(usize),
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key {key:?}")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: cannot parse value for {key:?}")]
    BadValue { line: usize, key: String },
}

/// Serialize a config, one `key=value` per line, fixed order.
pub fn render(cfg: &TrainConfig) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        s.push_str(k);
        s.push('=');
        s.push_str(&v);
        s.push('\n');
    };
    kv("decoders", cfg.decoders.to_string());
    kv("bits", cfg.bits.to_string());
    kv("image_size", cfg.image_size.to_string());
    kv("epochs", cfg.epochs.to_string());
    kv("batch", cfg.batch.to_string());
    kv("seed", cfg.seed.to_string());
    kv("checkpoint_interval", cfg.checkpoint_interval.to_string());
    kv("lambda_image", cfg.weights.image.to_string());
    kv("lambda_message", cfg.weights.message.to_string());
    kv("lambda_adversarial", cfg.weights.adversarial.to_string());
    kv("lambda_per_message", cfg.weights.per_message.to_string());
    kv("lambda_balance", cfg.weights.balance.to_string());
    kv("lr", cfg.adam.lr.to_string());
    kv("beta1", cfg.adam.beta1.to_string());
    kv("beta2", cfg.adam.beta2.to_string());
    kv("epsilon", cfg.adam.eps.to_string());
    kv("data_dir", cfg.data_dir.clone());
    kv("val_dir", cfg.val_dir.clone());
    s
}

/// Parse a config rendered by [`render`] (or written by hand).
pub fn parse(text: &str) -> Result<TrainConfig, ConfigError> {
    let mut cfg = TrainConfig::default();
    let mut seen = std::collections::BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or(ConfigError::BadLine(line))?;
        let key = key.trim();
        let value = value.trim();
        if !seen.insert(key.to_string()) {
            return Err(ConfigError::DuplicateKey {
                line,
                key: key.to_string(),
            });
        }
        let bad = || ConfigError::BadValue {
            line,
            key: key.to_string(),
        };
        match key {
            "decoders" => cfg.decoders = value.parse().map_err(|_| bad())?,
            "bits" => cfg.bits = value.parse().map_err(|_| bad())?,
            "image_size" => cfg.image_size = value.parse().map_err(|_| bad())?,
            "epochs" => cfg.epochs = value.parse().map_err(|_| bad())?,
            "batch" => cfg.batch = value.parse().map_err(|_| bad())?,
            "seed" => cfg.seed = value.parse().map_err(|_| bad())?,
            "checkpoint_interval" => cfg.checkpoint_interval = value.parse().map_err(|_| bad())?,
            "lambda_image" => cfg.weights.image = value.parse().map_err(|_| bad())?,
            "lambda_message" => cfg.weights.message = value.parse().map_err(|_| bad())?,
            "lambda_adversarial" => cfg.weights.adversarial = value.parse().map_err(|_| bad())?,
            "lambda_per_message" => cfg.weights.per_message = value.parse().map_err(|_| bad())?,
            "lambda_balance" => cfg.weights.balance = value.parse().map_err(|_| bad())?,
            "lr" => cfg.adam.lr = value.parse().map_err(|_| bad())?,
            "beta1" => cfg.adam.beta1 = value.parse().map_err(|_| bad())?,
            "beta2" => cfg.adam.beta2 = value.parse().map_err(|_| bad())?,
            "epsilon" => cfg.adam.eps = value.parse().map_err(|_| bad())?,
            "data_dir" => cfg.data_dir = value.to_string(),
            "val_dir" => cfg.val_dir = value.to_string(),
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
    }
    Ok(cfg)
}

#[allow(dead_code)]
fn _weights_and_adam_are_fully_covered(w: LossWeights, a: AdamParams) -> (LossWeights, AdamParams) {
    // compile-time reminder: extend render/parse when these grow
    let LossWeights {
        image,
        message,
        adversarial,
        per_message,
        balance,
    } = w;
    let AdamParams {
        lr,
        beta1,
        beta2,
        eps,
    } = a;
    (
        LossWeights {
            image,
            message,
            adversarial,
            per_message,
            balance,
        },
        AdamParams {
            lr,
            beta1,
            beta2,
            eps,
        },
    )
}
