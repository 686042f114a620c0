//! Pretrains briefly without conditions, extends the vocabulary with genre
//! and instrument controls, and fine-tunes on the same songs.

use condmusic::codec::Variant;
use condmusic::neural::{encode_corpus, eval_loss, finetune_init, train, Model, ModelCheckpoint, ModelConfig, OptimizerConfig, TrainConfig};
use condmusic::score::Song;
use condmusic::toy::toy_corpus;
use condmusic::vocab::extend_vocab;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let songs: Vec<Song> = toy_corpus(48, 5).into_iter().map(|e| e.song).collect();
    let (base, target) = (Variant::Uncond, Variant::MmtGi);
    let (base_vocab, target_vocab) = (base.vocab(), target.vocab());
    let cfg = ModelConfig { dim: 64, heads: 4, layers: 2, max_len: 160, ..ModelConfig::desk(base_vocab.len()) };

    let mut pre = ModelCheckpoint::new(Model::init(cfg)?, OptimizerConfig::pretrain(), &base_vocab);
    let data = encode_corpus(&songs, base, &base_vocab, cfg.max_len)?;
    let tc = TrainConfig { steps: 150, batch_size: 4, eval_every: 0, seed: 0 };
    train(&mut pre, &data, &[], &tc, |_| {})?;
    println!("pretrained loss {:.4}", eval_loss(&pre.model, &data)?);

    let map = extend_vocab(&base_vocab, &target_vocab)?;
    let new: Vec<String> = map.new_ids().iter().map(|&id| target_vocab.event(id).unwrap().to_string()).collect();
    println!("new tokens: {}", new.join(" "));

    let mut ft = finetune_init(&pre, &base_vocab, &target_vocab, OptimizerConfig::finetune(), 1)?;
    let data = encode_corpus(&songs, target, &target_vocab, cfg.max_len)?;
    println!("conditioned loss before fine-tuning {:.4}", eval_loss(&ft.model, &data)?);
    train(&mut ft, &data, &[], &TrainConfig { steps: 100, ..tc }, |_| {})?;
    println!("conditioned loss after 100 steps    {:.4}", eval_loss(&ft.model, &data)?);
    Ok(())
}
