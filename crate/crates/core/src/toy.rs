//! Synthetic songs for tests, examples and smoke runs.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::CorpusEntry;
use crate::score::{Note, Song, Track, MAX_BEATS, MAX_DURATION, NUM_GENRES, NUM_INSTRUMENTS, RESOLUTION};

/// Uniformly random, possibly messy song: any program, pitch, onset in
/// range and duration up to the maximum, unsorted notes, duplicate
/// tracks and random velocities. Not normalized.
pub fn random_song(rng: &mut impl Rng, max_notes: usize) -> Song {
    let n_tracks = rng.random_range(0..=4);
    let mut tracks = Vec::with_capacity(n_tracks);
    let max_onset = rng.random_range(1..=MAX_BEATS * RESOLUTION);
    for _ in 0..n_tracks {
        let program = rng.random_range(0..NUM_INSTRUMENTS as u8);
        let n = rng.random_range(0..=max_notes);
        let notes = (0..n)
            .map(|_| Note {
                onset: rng.random_range(0..max_onset),
                pitch: rng.random_range(0..=127),
                duration: rng.random_range(1..=MAX_DURATION),
                velocity: rng.random_range(1..=127),
            })
            .collect();
        tracks.push(Track::new(program, notes));
    }
    let mut song = Song::new(tracks);
    if rng.random_bool(0.6) {
        let k = rng.random_range(1..=3);
        let tags = sample(rng, NUM_GENRES, k).into_iter().map(|t| t as u8).collect();
        song = song.with_genres(tags);
    }
    song
}

const MAJOR_STEPS: [u8; 7] = [0, 2, 4, 5, 7, 9, 11];

/// A small, learnable song: one genre out of four, whose instruments
/// follow from the genre, playing a diatonic motif on every beat for
/// four measures.
pub fn patterned_song(rng: &mut impl Rng) -> Song {
    let genre = rng.random_range(0..4u8);
    let lead = [23u8, 0, 18, 27][genre as usize];
    let root = [60u8, 62, 57, 64][genre as usize];
    let motif: Vec<u8> = (0..4).map(|_| MAJOR_STEPS[rng.random_range(0..7)]).collect();
    let mut melody = Vec::new();
    let mut bass = Vec::new();
    for beat in 0..16u32 {
        let onset = beat * RESOLUTION;
        melody.push(Note::new(onset, root + motif[beat as usize % 4], RESOLUTION));
        if beat % 4 == 0 {
            bass.push(Note::new(onset, root - 24, 4 * RESOLUTION));
        }
    }
    let mut tracks = vec![Track::new(lead, melody)];
    if genre % 2 == 1 {
        tracks.push(Track::new(19, bass));
    }
    Song::new(tracks).with_genres(vec![genre])
}

/// `n` patterned songs with ids `toy-00000`, `toy-00001`, ...
pub fn toy_corpus(n: usize, seed: u64) -> Vec<CorpusEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| CorpusEntry { id: format!("toy-{i:05}"), song: patterned_song(&mut rng) }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{quantize_and_sort, validate_song};

    #[test]
    fn generated_songs_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let s = random_song(&mut rng, 20);
            assert!(validate_song(&s).is_empty(), "{:?}", validate_song(&s));
            let p = patterned_song(&mut rng);
            assert!(validate_song(&p).is_empty());
            assert_eq!(quantize_and_sort(&p).0.note_count(), p.note_count());
        }
    }

    #[test]
    fn corpus_is_seeded() {
        assert_eq!(toy_corpus(5, 2), toy_corpus(5, 2));
        assert_eq!(toy_corpus(3, 2)[2].id, "toy-00002");
    }
}
