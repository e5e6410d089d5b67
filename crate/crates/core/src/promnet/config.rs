use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
/// First id available to ordinary tokens.
pub const FIRST_TOKEN: u32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub model_dim: usize,
    pub head_count: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub feedforward_dim: usize,
    pub max_src_len: usize,
    pub max_tgt_len: usize,
    /// Copy-label order.
    pub n: usize,
    /// Weight of the indicator loss.
    pub lambda: f64,
    pub seed: u64,
    /// When false the fusion weight on the indicator is held at zero, so the
    /// copy distribution is the plain normalized cross-attention.
    pub fusion: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 200,
            model_dim: 32,
            head_count: 2,
            encoder_layers: 1,
            decoder_layers: 1,
            feedforward_dim: 64,
            max_src_len: 64,
            max_tgt_len: 32,
            n: 2,
            lambda: 1.0,
            seed: 0,
            fusion: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("model_dim", self.model_dim),
            ("head_count", self.head_count),
            ("encoder_layers", self.encoder_layers),
            ("decoder_layers", self.decoder_layers),
            ("feedforward_dim", self.feedforward_dim),
            ("max_src_len", self.max_src_len),
            ("max_tgt_len", self.max_tgt_len),
            ("n", self.n),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.vocab_size <= FIRST_TOKEN as usize {
            return Err(Error::Config(format!(
                "vocab_size must exceed the {FIRST_TOKEN} reserved ids"
            )));
        }
        if self.model_dim % self.head_count != 0 {
            return Err(Error::Config(format!(
                "model_dim {} is not divisible by head_count {}",
                self.model_dim, self.head_count
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.head_count
    }

    /// The pointer-generator baseline: no indicator loss, no fusion.
    pub fn baseline(&self) -> ModelConfig {
        ModelConfig {
            lambda: 0.0,
            fusion: false,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    #[default]
    MultiTask,
    TwoStage,
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "multi-task" | "multitask" => Ok(Strategy::MultiTask),
            "two-stage" | "twostage" => Ok(Strategy::TwoStage),
            _ => Err(format!("unknown strategy `{s}` (expected multi-task or two-stage)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub strategy: Strategy,
    /// Indicator-only steps for two-stage training; `None` means 10% of
    /// `total_steps`.
    pub warmup_steps: Option<usize>,
    pub total_steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beam_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            strategy: Strategy::MultiTask,
            warmup_steps: None,
            total_steps: 2000,
            batch_size: 16,
            learning_rate: 0.1,
            beam_size: 4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn warmup(&self) -> usize {
        match self.strategy {
            Strategy::MultiTask => 0,
            Strategy::TwoStage => self.warmup_steps.unwrap_or(self.total_steps / 10),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.beam_size == 0 {
            return Err(Error::Config("beam_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.strategy == Strategy::TwoStage
            && self.total_steps > 0
            && self.warmup() > self.total_steps
        {
            return Err(Error::Config(format!(
                "warmup_steps {} exceeds total_steps {}",
                self.warmup(),
                self.total_steps
            )));
        }
        Ok(())
    }
}
