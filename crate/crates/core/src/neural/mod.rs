//! A small decoder-only transformer with hand-written backpropagation.
//!
//! Parameters live in one flat `f64` buffer described by a
//! [`ParamLayout`]; gradients and optimizer moments use the same layout, so
//! the optimizer, checkpoint format and vocabulary extension all work on
//! plain slices.

mod checkpoint;
mod layout;
mod model;
mod optim;
mod train;

pub use checkpoint::{finetune_init, ModelCheckpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use layout::{LayerOffsets, ParamKind, ParamLayout, ParamSpec};
pub use model::{KvCache, Model};
pub use optim::{lr_at, AdamW, OptimizerConfig};
pub use train::{encode_corpus, eval_loss, train, BatchSampler, LogRecord, TrainConfig};

use crate::vocab::{TokenId, VocabError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Laptop-sized defaults.
    pub fn desk(vocab_size: usize) -> Self {
        ModelConfig { vocab_size, dim: 128, heads: 4, layers: 4, max_len: 1024, seed: 0 }
    }

    /// Width and heads of the full-size model; layer count is not fixed
    /// by the source setup, 12 is the usual pairing with width 768.
    pub fn paper(vocab_size: usize) -> Self {
        ModelConfig { vocab_size, dim: 768, heads: 12, layers: 12, max_len: 1024, seed: 0 }
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return Err(ModelError::HeadsDoNotDivide { dim: self.dim, heads: self.heads });
        }
        if self.max_len < 2 {
            return Err(ModelError::Config(format!("max_len must be at least 2, got {}", self.max_len)));
        }
        if self.vocab_size < 2 || self.layers == 0 {
            return Err(ModelError::Config("vocab_size >= 2 and layers >= 1 required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("dim {dim} is not divisible by heads {heads}")]
    HeadsDoNotDivide { dim: usize, heads: usize },
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { id: TokenId, vocab_size: usize },
    #[error("sequence length {len} exceeds max_len {max_len}")]
    TooLong { len: usize, max_len: usize },
    #[error("sequence too short: need at least {need} tokens, got {len}")]
    TooShort { need: usize, len: usize },
    #[error("all targets are padding")]
    AllPadTargets,
    #[error("non-finite loss {0}; training halted")]
    NonFiniteLoss(f64),
    #[error("checkpoint/vocabulary mismatch: checkpoint {checkpoint:016x}, vocabulary {vocab:016x}")]
    FingerprintMismatch { checkpoint: u64, vocab: u64 },
    #[error("bad checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}
