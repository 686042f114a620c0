//! Pretrains the desk-size model on a synthetic corpus and prints the
//! validation loss against the uniform baseline.
//!
//! cargo run --release --example pretrain_tiny -- [steps]

use condmusic::codec::Variant;
use condmusic::dataset::split_corpus;
use condmusic::neural::{encode_corpus, eval_loss, train, Model, ModelCheckpoint, ModelConfig, OptimizerConfig, TrainConfig};
use condmusic::toy::toy_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let steps: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(300);
    let variant = Variant::Uncond;
    let vocab = variant.vocab();
    let corpus = toy_corpus(80, 7);
    let parts = split_corpus(&corpus, 0);
    let songs = |v: &[condmusic::dataset::CorpusEntry]| v.iter().map(|e| e.song.clone()).collect::<Vec<_>>();
    let cfg = ModelConfig { max_len: 256, ..ModelConfig::desk(vocab.len()) };
    let train_set = encode_corpus(&songs(&parts.train), variant, &vocab, cfg.max_len)?;
    let valid_set = encode_corpus(&songs(&parts.valid), variant, &vocab, cfg.max_len)?;
    println!("train {} songs, valid {} songs, vocab {}", train_set.len(), valid_set.len(), vocab.len());

    let mut ck = ModelCheckpoint::new(Model::init(cfg)?, OptimizerConfig::pretrain(), &vocab);
    let baseline = (vocab.len() as f64).ln();
    println!("ln V = {baseline:.4}, initial valid loss {:.4}", eval_loss(&ck.model, &valid_set)?);
    let tc = TrainConfig { steps, batch_size: 4, eval_every: 50, seed: 0 };
    let start = std::time::Instant::now();
    train(&mut ck, &train_set, &valid_set, &tc, |r| {
        if let Some(v) = r.valid_loss {
            println!("step {:>5}  lr {:.2e}  train {:.4}  valid {:.4}  ({:.0}% below ln V, {:.1}s)", r.step, r.lr, r.train_loss, v, 100.0 * (1.0 - v / baseline), start.elapsed().as_secs_f64());
        }
    })?;
    Ok(())
}
