//! Writes a synthetic corpus to disk, reloads it and prints its
//! statistics and split sizes.
//!
//! cargo run --example corpus_stats -- [dir]

use condmusic::dataset::{corpus_stats, load_corpus, save_corpus, split_corpus};
use condmusic::tables::CanonicalTables;
use condmusic::toy::toy_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = match std::env::args().nth(1) {
        Some(d) => std::path::PathBuf::from(d),
        None => std::env::temp_dir().join("condmusic-toy-corpus"),
    };
    let tables = CanonicalTables::builtin();
    save_corpus(&dir, &toy_corpus(64, 1), &tables)?;
    let (entries, report) = load_corpus(&dir, &tables)?;
    println!("{} songs from {} files in {}", entries.len(), report.files, dir.display());

    let stats = corpus_stats(&entries);
    for (id, n) in &stats.genres {
        println!("genre       {:<14} {n}", tables.genre_name(*id).unwrap());
    }
    for (id, n) in &stats.instruments {
        println!("instrument  {:<14} {n}", tables.instrument_name(*id).unwrap());
    }
    let parts = split_corpus(&entries, 0);
    println!("split train/valid/test = {}/{}/{}", parts.train.len(), parts.valid.len(), parts.test.len());
    Ok(())
}
