//! Pitch class entropy, scale consistency and groove consistency on a few
//! hand-made songs and on a synthetic corpus.

use condmusic::metrics::{evaluate_songs, groove_consistency, pitch_class_entropy, scale_consistency};
use condmusic::score::{Note, Song, Track};
use condmusic::toy::toy_corpus;

fn main() {
    let chromatic = Song::new(vec![Track::new(0, (0..12).map(|i| Note::new(i * 12, 60 + i as u8, 12)).collect())]);
    let triad = Song::new(vec![Track::new(0, [60, 64, 67, 60, 64, 67].iter().enumerate().map(|(i, &p)| Note::new(i as u32 * 24, p, 12)).collect())]);
    for (name, s) in [("chromatic", &chromatic), ("triad", &triad)] {
        println!(
            "{name:<10} entropy {:.5}  scale {:.5}  groove {:?}",
            pitch_class_entropy(s).unwrap(),
            scale_consistency(s).unwrap(),
            groove_consistency(s).ok()
        );
    }

    let songs: Vec<Song> = toy_corpus(50, 3).into_iter().map(|e| e.song).collect();
    let m = evaluate_songs(&songs);
    for (name, row) in m.rows() {
        match row {
            Ok(r) => println!("{name:<20} {:.4} ± {:.4} (n={})", r.mean, r.ci95, r.n()),
            Err(e) => println!("{name:<20} n/a ({e})"),
        }
    }
}
