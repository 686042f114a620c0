//! Encodes a small two-track song under every variant and decodes it back.

use condmusic::codec::{canonical_view, decode, encode, Variant};
use condmusic::score::{Note, Song, Track};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let piano = Track::new(0, vec![Note::new(0, 60, 12), Note::new(12, 64, 12), Note::new(24, 67, 24)]);
    let bass = Track::new(32, vec![Note::new(0, 36, 48)]);
    let song = Song::new(vec![piano, bass]).with_genres(vec![1]);

    for variant in Variant::ALL {
        let events = encode(&song, variant)?;
        let vocab = variant.vocab();
        let ids = vocab.encode(&events)?;
        println!("{variant} (vocab {}, {} tokens)", vocab.len(), ids.len());
        let shown: Vec<String> = events.iter().map(|e| e.to_string()).collect();
        println!("  {}", shown.join(" "));
        println!("  ids {ids:?}");
        let back = decode(&events, variant)?;
        assert_eq!(back, canonical_view(&song, variant));
    }
    println!("all variants round-trip");
    Ok(())
}
