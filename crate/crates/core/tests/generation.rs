use std::collections::HashSet;

use condmusic::codec::{GrammarState, Variant};
use condmusic::generation::{generate, sample_token, GenerationCondition, SamplingConfig};
use condmusic::neural::{Model, ModelConfig};
use condmusic::vocab::Event;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cond(variant: Variant, tags: &[u8], programs: &[u8]) -> GenerationCondition {
    GenerationCondition { variant, tags: tags.to_vec(), programs: programs.to_vec(), enforce_condition: true }
}

fn model_for(variant: Variant) -> Model {
    Model::init(ModelConfig { vocab_size: variant.vocab().len(), dim: 16, heads: 2, layers: 1, max_len: 96, seed: 1 }).unwrap()
}

#[test]
fn prefix_examples() {
    let p = cond(Variant::MmtGi, &[2], &[40, 0, 40]).prefix().unwrap();
    assert_eq!(p, vec![Event::SOS, Event::SOT, Event::tag(2), Event::SOP, Event::instrument(0), Event::instrument(40), Event::SON]);
    let p = cond(Variant::MmtI, &[], &[33]).prefix().unwrap();
    assert_eq!(p, vec![Event::SOS, Event::SOP, Event::instrument(33), Event::SON]);
    assert!(cond(Variant::MmtG, &[], &[]).prefix().is_err());
}

#[test]
fn masked_ids_are_never_drawn() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let logits: Vec<f64> = (0..10).map(|i| i as f64).collect();
    let mask: Vec<bool> = (0..10).map(|i| i % 3 == 0).collect();
    let mut seen = HashSet::new();
    for _ in 0..100_000 {
        let id = sample_token(&logits, &mask, 1.0, 0, &mut rng).unwrap();
        assert!(mask[id as usize]);
        seen.insert(id);
    }
    assert_eq!(seen.len(), 4);
}

#[test]
fn fixed_seed_gives_identical_draws() {
    let logits = [0.3, 1.2, -0.4, 2.0, 0.0];
    let mask = [true; 5];
    let draws = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..200).map(|_| sample_token(&logits, &mask, 0.8, 3, &mut rng).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(draws(4), draws(4));
    assert_ne!(draws(4), draws(5));
}

#[test]
fn instrument_condition_is_enforced() {
    let c = cond(Variant::MmtI, &[], &[0]);
    let m = model_for(Variant::MmtI);
    let vocab = Variant::MmtI.vocab();
    for seed in 0..10 {
        let g = generate(&m, &vocab, &c, &SamplingConfig { max_tokens: 96, seed, ..Default::default() }).unwrap();
        assert!(g.song.programs().iter().all(|&p| p == 0), "{:?}", g.song.programs());
    }
}

#[test]
fn length_cap_keeps_output_prefix_valid() {
    for v in Variant::ALL {
        let c = cond(v, &[1, 5], &[3, 9]);
        let vocab = v.vocab();
        let g = generate(&model_for(v), &vocab, &c, &SamplingConfig { max_tokens: 16, seed: 2, ..Default::default() }).unwrap();
        assert!(g.tokens.len() <= 16);
        assert!(g.tokens.starts_with(&vocab.encode(&c.prefix().unwrap()).unwrap()));
        GrammarState::run(v, &g.events).unwrap();
    }
}
