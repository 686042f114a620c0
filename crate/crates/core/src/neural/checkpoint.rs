use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::model::INIT_STD;
use super::{AdamW, Model, ModelConfig, ModelError, OptimizerConfig};
use crate::vocab::{extend_vocab, Vocabulary};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"CMCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Model, optimizer state and the fingerprint of the vocabulary the model
/// was trained with.
///
/// On disk (all little-endian): magic, version u32, vocab_size, dim, heads,
/// layers, max_len as u32, seed u64, vocabulary fingerprint u64, step u64,
/// lr0 f64, decay_steps u64, beta1, beta2, eps, weight_decay as f64,
/// parameter count u64, then parameters, first moments and second moments
/// as f32 in layout order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub model: Model,
    pub optimizer: AdamW,
    pub vocab_fingerprint: u64,
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], ModelError> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| ModelError::Format(format!("truncated checkpoint: {e}")))?;
        Ok(buf)
    }
    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f64>, ModelError> {
        let mut raw = vec![0u8; n * 4];
        self.inner
            .read_exact(&mut raw)
            .map_err(|e| ModelError::Format(format!("truncated checkpoint: {e}")))?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect())
    }
}

fn put_f32s(out: &mut Vec<u8>, xs: &[f64]) {
    for &x in xs {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
}

impl ModelCheckpoint {
    pub fn new(model: Model, optimizer: OptimizerConfig, vocab: &Vocabulary) -> Self {
        let optimizer = AdamW::new(optimizer, &model);
        ModelCheckpoint { model, optimizer, vocab_fingerprint: vocab.fingerprint() }
    }

    pub fn step(&self) -> u64 {
        self.optimizer.step
    }

    /// Errors unless `vocab` is the one this model was trained with.
    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<(), ModelError> {
        if vocab.fingerprint() != self.vocab_fingerprint || vocab.len() != self.model.config.vocab_size {
            return Err(ModelError::FingerprintMismatch { checkpoint: self.vocab_fingerprint, vocab: vocab.fingerprint() });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.model.config;
        let o = &self.optimizer.config;
        let n = self.model.num_params();
        let mut out = Vec::with_capacity(128 + 12 * n);
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for v in [c.vocab_size, c.dim, c.heads, c.layers, c.max_len] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&c.seed.to_le_bytes());
        out.extend_from_slice(&self.vocab_fingerprint.to_le_bytes());
        out.extend_from_slice(&self.optimizer.step.to_le_bytes());
        out.extend_from_slice(&o.lr0.to_le_bytes());
        out.extend_from_slice(&o.decay_steps.to_le_bytes());
        for v in [o.beta1, o.beta2, o.eps, o.weight_decay] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(n as u64).to_le_bytes());
        put_f32s(&mut out, &self.model.params);
        put_f32s(&mut out, &self.optimizer.m);
        put_f32s(&mut out, &self.optimizer.v);
        out
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self, ModelError> {
        let mut r = Reader { inner: r };
        if r.bytes::<4>()? != CHECKPOINT_MAGIC {
            return Err(ModelError::Format("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(ModelError::Format(format!("unsupported checkpoint version {version}")));
        }
        let mut dims = [0usize; 5];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let [vocab_size, dim, heads, layers, max_len] = dims;
        let config = ModelConfig { vocab_size, dim, heads, layers, max_len, seed: r.u64()? };
        config.validate().map_err(|e| ModelError::Format(e.to_string()))?;
        let vocab_fingerprint = r.u64()?;
        let step = r.u64()?;
        let opt = OptimizerConfig {
            lr0: r.f64()?,
            decay_steps: r.u64()?,
            beta1: r.f64()?,
            beta2: r.f64()?,
            eps: r.f64()?,
            weight_decay: r.f64()?,
        };
        let mut model = Model::init(ModelConfig { seed: config.seed, ..config })?;
        let n = r.u64()? as usize;
        if n != model.num_params() {
            return Err(ModelError::Format(format!("parameter count {n} does not match config ({})", model.num_params())));
        }
        model.params = r.f32s(n)?;
        let m = r.f32s(n)?;
        let v = r.f32s(n)?;
        let mut rest = [0u8; 1];
        if r.inner.read(&mut rest)? != 0 {
            return Err(ModelError::Format("trailing bytes after checkpoint".into()));
        }
        let optimizer = AdamW::with_state(opt, &model, m, v, step);
        Ok(ModelCheckpoint { model, optimizer, vocab_fingerprint })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }

    /// Loads and checks the vocabulary fingerprint.
    pub fn load_for(path: &Path, vocab: &Vocabulary) -> Result<Self, ModelError> {
        let ck = Self::load(path)?;
        ck.check_vocab(vocab)?;
        Ok(ck)
    }
}

/// Builds the starting point for fine-tuning on `target_vocab`.
///
/// Every tensor is copied, except that the token embedding rows and output
/// projection columns are re-indexed by event: events present in
/// `base_vocab` keep their trained values, new events get fresh
/// normal(0, 0.02) draws from `seed`. Optimizer state is reset with the
/// fine-tuning configuration and the step counter restarts at zero.
pub fn finetune_init(
    pretrained: &ModelCheckpoint,
    base_vocab: &Vocabulary,
    target_vocab: &Vocabulary,
    optimizer: OptimizerConfig,
    seed: u64,
) -> Result<ModelCheckpoint, ModelError> {
    pretrained.check_vocab(base_vocab)?;
    let map = extend_vocab(base_vocab, target_vocab)?;
    let src = &pretrained.model;
    let d = src.config.dim;
    let (v_old, v_new) = (src.config.vocab_size, target_vocab.len());
    let mut model = Model::init(ModelConfig { vocab_size: v_new, ..src.config })?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");

    for (spec, old) in model.layout.specs.clone().iter().zip(&src.layout.specs) {
        debug_assert_eq!(spec.name, old.name);
        match spec.name.as_str() {
            "tok_emb" => {
                for (new_id, base_id) in map.iter() {
                    let dst = spec.offset + new_id as usize * d;
                    match base_id {
                        Some(b) => {
                            let s = old.offset + b as usize * d;
                            model.params[dst..dst + d].copy_from_slice(&src.params[s..s + d]);
                        }
                        None => model.params[dst..dst + d].iter_mut().for_each(|p| *p = normal.sample(&mut rng)),
                    }
                }
            }
            "w_out" => {
                for (new_id, base_id) in map.iter() {
                    for r in 0..d {
                        let dst = spec.offset + r * v_new + new_id as usize;
                        model.params[dst] = match base_id {
                            Some(b) => src.params[old.offset + r * v_old + b as usize],
                            None => normal.sample(&mut rng),
                        };
                    }
                }
            }
            _ => model.params[spec.range()].copy_from_slice(&src.params[old.range()]),
        }
    }
    Ok(ModelCheckpoint::new(model, optimizer, target_vocab))
}
