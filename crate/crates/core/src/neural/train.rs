use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Model, ModelCheckpoint, ModelError};
use crate::codec::{encode, truncate_to_context, CodecError, Variant};
use crate::score::Song;
use crate::vocab::{TokenId, Vocabulary, PAD_ID};

/// Encodes songs for `variant` and cuts each to at most `max_len` tokens
/// at a note boundary.
pub fn encode_corpus(songs: &[Song], variant: Variant, vocab: &Vocabulary, max_len: usize) -> Result<Vec<Vec<TokenId>>, CodecError> {
    songs
        .iter()
        .map(|s| {
            let events = truncate_to_context(&encode(s, variant)?, max_len);
            Ok(vocab.encode(&events)?)
        })
        .collect()
}

/// Seeded epoch-wise shuffling over `0..n`.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(n: usize, seed: u64) -> Self {
        let mut s = BatchSampler { order: (0..n).collect(), pos: 0, rng: ChaCha8Rng::seed_from_u64(seed) };
        s.order.shuffle(&mut s.rng);
        s
    }

    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        if self.order.is_empty() {
            return out;
        }
        while out.len() < size {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    /// Validation every this many steps (and after the last one); 0 disables.
    pub eval_every: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { steps: 1000, batch_size: 8, eval_every: 100, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub step: u64,
    pub lr: f64,
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
}

impl LogRecord {
    pub fn tsv_header() -> &'static str {
        "step\tlr\ttrain_loss\tvalid_loss"
    }

    pub fn tsv(&self) -> String {
        let valid = self.valid_loss.map(|v| format!("{v:.6}")).unwrap_or_default();
        format!("{}\t{:.3e}\t{:.6}\t{}", self.step, self.lr, self.train_loss, valid)
    }
}

/// Token-weighted mean loss over whole sequences.
pub fn eval_loss(model: &Model, seqs: &[Vec<TokenId>]) -> Result<f64, ModelError> {
    let mut total = 0.0;
    let mut count = 0usize;
    for s in seqs {
        let n = s.iter().skip(1).filter(|&&t| t != PAD_ID).count();
        if s.len() < 2 || n == 0 {
            continue;
        }
        total += model.loss(&[s])? * n as f64;
        count += n;
    }
    if count == 0 {
        return Err(ModelError::AllPadTargets);
    }
    Ok(total / count as f64)
}

/// Runs `config.steps` optimizer steps on `checkpoint`, calling `on_log`
/// after each one. Resumes from the checkpoint's step counter, so the
/// learning-rate schedule continues where it left off.
pub fn train(
    checkpoint: &mut ModelCheckpoint,
    train_set: &[Vec<TokenId>],
    valid_set: &[Vec<TokenId>],
    config: &TrainConfig,
    mut on_log: impl FnMut(&LogRecord),
) -> Result<Vec<LogRecord>, ModelError> {
    let usable: Vec<&[TokenId]> = train_set.iter().filter(|s| s.len() >= 2).map(|s| s.as_slice()).collect();
    if usable.is_empty() {
        return Err(ModelError::Config("training set has no sequence of length >= 2".into()));
    }
    let mut sampler = BatchSampler::new(usable.len(), config.seed ^ checkpoint.step());
    let mut log = Vec::with_capacity(config.steps as usize);
    for i in 1..=config.steps {
        let batch: Vec<&[TokenId]> = sampler.next_batch(config.batch_size.max(1)).into_iter().map(|j| usable[j]).collect();
        let (loss, lr) = checkpoint.optimizer.train_step(&mut checkpoint.model, &batch)?;
        let eval_now = config.eval_every > 0 && (i % config.eval_every == 0 || i == config.steps);
        let valid_loss = if eval_now && !valid_set.is_empty() { Some(eval_loss(&checkpoint.model, valid_set)?) } else { None };
        let rec = LogRecord { step: checkpoint.step(), lr, train_loss: loss, valid_loss };
        on_log(&rec);
        log.push(rec);
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampler_covers_each_epoch() {
        let mut s = BatchSampler::new(10, 4);
        let mut seen = s.next_batch(5);
        seen.extend(s.next_batch(5));
        seen.sort();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        let mut a = BatchSampler::new(10, 4);
        let mut b = BatchSampler::new(10, 4);
        assert_eq!(a.next_batch(23), b.next_batch(23));
    }

    #[test]
    fn log_record_tsv() {
        let r = LogRecord { step: 3, lr: 5e-4, train_loss: 1.5, valid_loss: None };
        assert_eq!(r.tsv(), "3\t5.000e-4\t1.500000\t");
    }
}
