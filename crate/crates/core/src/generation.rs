//! Grammar-masked sampling from a trained model.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::{allowed_mask, decode, prefix_events, CodecError, GrammarState, Variant};
use crate::neural::{Model, ModelError};
use crate::score::Song;
use crate::vocab::{Event, TokenId, Vocabulary};

#[derive(Debug, thiserror::Error)]
pub enum GenerationError {
    #[error("grammar dead end at position {0}: no token is allowed")]
    DeadEnd(usize),
    #[error("temperature must be positive and finite, got {0}")]
    BadTemperature(f64),
    #[error("model vocabulary size {model} does not match vocabulary size {vocab}")]
    VocabSize { model: usize, vocab: usize },
    #[error("condition prefix ({0} tokens) does not fit the token budget")]
    PrefixTooLong(usize),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// What to generate: the variant's required condition lists, and whether
/// per-note instruments are restricted to the declared ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationCondition {
    pub variant: Variant,
    pub tags: Vec<u8>,
    pub programs: Vec<u8>,
    pub enforce_condition: bool,
}

impl GenerationCondition {
    pub fn unconditional() -> Self {
        GenerationCondition { variant: Variant::Uncond, tags: Vec::new(), programs: Vec::new(), enforce_condition: true }
    }

    pub fn prefix(&self) -> Result<Vec<Event>, CodecError> {
        prefix_events(self.variant, &self.tags, &self.programs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingConfig {
    pub temperature: f64,
    /// Keep only the k most likely allowed tokens; 0 keeps all.
    pub top_k: usize,
    /// Total length cap, prefix included.
    pub max_tokens: usize,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { temperature: 1.0, top_k: 20, max_tokens: 1024, seed: 0 }
    }
}

/// Next-token probabilities after masking, temperature and top-k.
/// Disallowed tokens get exactly zero.
pub fn masked_distribution(logits: &[f64], mask: &[bool], temperature: f64, top_k: usize) -> Result<Vec<f64>, GenerationError> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(GenerationError::BadTemperature(temperature));
    }
    let mut allowed: Vec<usize> = (0..logits.len()).filter(|&i| mask[i]).collect();
    if allowed.is_empty() {
        return Err(GenerationError::DeadEnd(0));
    }
    if top_k > 0 && top_k < allowed.len() {
        allowed.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
        allowed.truncate(top_k);
    }
    let max = allowed.iter().map(|&i| logits[i]).fold(f64::NEG_INFINITY, f64::max);
    let mut probs = vec![0.0; logits.len()];
    let mut sum = 0.0;
    for &i in &allowed {
        let e = ((logits[i] - max) / temperature).exp();
        probs[i] = e;
        sum += e;
    }
    probs.iter_mut().for_each(|p| *p /= sum);
    Ok(probs)
}

pub fn sample_token(logits: &[f64], mask: &[bool], temperature: f64, top_k: usize, rng: &mut impl rand::Rng) -> Result<TokenId, GenerationError> {
    let probs = masked_distribution(logits, mask, temperature, top_k)?;
    let dist = WeightedIndex::new(&probs).map_err(|_| GenerationError::DeadEnd(0))?;
    Ok(dist.sample(rng) as TokenId)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub tokens: Vec<TokenId>,
    pub events: Vec<Event>,
    pub song: Song,
    /// True when generation stopped at the length cap instead of end-of-song.
    pub truncated: bool,
}

/// Samples one song. Every emitted token is allowed by the grammar, so the
/// result always decodes.
pub fn generate(model: &Model, vocab: &Vocabulary, condition: &GenerationCondition, sampling: &SamplingConfig) -> Result<Generated, GenerationError> {
    if model.config.vocab_size != vocab.len() {
        return Err(GenerationError::VocabSize { model: model.config.vocab_size, vocab: vocab.len() });
    }
    let prefix = condition.prefix()?;
    let cap = sampling.max_tokens.min(model.config.max_len);
    if prefix.len() > cap {
        return Err(GenerationError::PrefixTooLong(prefix.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    let mut state = GrammarState::run(condition.variant, &prefix)?;
    let mut tokens = vocab.encode(&prefix).map_err(CodecError::from)?;
    let mut events = prefix;
    let mut cache = model.new_cache();
    let mut logits = Vec::new();
    for &t in &tokens {
        logits = model.step(&mut cache, t)?;
    }
    while !state.is_done() && tokens.len() < cap {
        let mask = allowed_mask(&state, vocab, condition.enforce_condition);
        let id = sample_token(&logits, &mask, sampling.temperature, sampling.top_k, &mut rng).map_err(|e| match e {
            GenerationError::DeadEnd(_) => GenerationError::DeadEnd(tokens.len()),
            e => e,
        })?;
        let event = vocab.event(id).expect("masked ids are real events");
        state = state
            .advance(event)
            .map_err(|rejection| CodecError::Grammar { index: tokens.len(), rejection })?;
        tokens.push(id);
        events.push(event);
        if !state.is_done() && tokens.len() < cap {
            logits = model.step(&mut cache, id)?;
        }
    }
    let song = decode(&events, condition.variant)?;
    Ok(Generated { truncated: !state.is_done(), tokens, events, song })
}

/// How a generated song relates to its condition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adherence {
    pub tags_match: bool,
    /// Instruments used in the notes that were not declared.
    pub undeclared_programs: Vec<u8>,
}

impl Adherence {
    pub fn ok(&self) -> bool {
        self.tags_match && self.undeclared_programs.is_empty()
    }
}

pub fn check_adherence(song: &Song, condition: &GenerationCondition) -> Adherence {
    let mut tags = condition.tags.clone();
    tags.sort_unstable();
    tags.dedup();
    let tags_match = !condition.variant.has_tags() || song.tags() == tags;
    let undeclared_programs = if condition.variant.has_programs() {
        song.programs().into_iter().filter(|p| !condition.programs.contains(p)).collect()
    } else {
        Vec::new()
    };
    Adherence { tags_match, undeclared_programs }
}
