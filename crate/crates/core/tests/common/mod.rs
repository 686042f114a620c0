//! Shared helpers for the integration tests: song generators and
//! brute-force reference implementations of the metrics.

#![allow(dead_code)]

use std::collections::BTreeSet;

use condmusic::score::{Note, Song, Track};
use rand::Rng;

/// A random song that every variant can encode: at least one note and at
/// least one genre tag. Unsorted, with duplicate programs and overlong
/// durations allowed.
pub fn encodable_song(rng: &mut impl Rng) -> Song {
    let n_tracks = rng.random_range(1..=4);
    let tracks = (0..n_tracks)
        .map(|_| {
            let program = rng.random_range(0..64u8);
            let n = rng.random_range(1..=30);
            let notes = (0..n)
                .map(|_| Note {
                    onset: rng.random_range(0..64 * 12),
                    pitch: rng.random_range(0..=127),
                    duration: rng.random_range(1..=250),
                    velocity: rng.random_range(1..=127),
                })
                .collect();
            Track::new(program, notes)
        })
        .collect();
    let n_tags = rng.random_range(1..=3);
    let tags = (0..n_tags).map(|_| rng.random_range(0..20u8)).collect();
    Song::new(tracks).with_genres(tags)
}

fn pitched(song: &Song) -> Vec<u8> {
    song.tracks.iter().filter(|t| !t.is_drum).flat_map(|t| t.notes.iter().map(|n| n.pitch)).collect()
}

pub fn oracle_entropy(song: &Song) -> Option<f64> {
    let pitches = pitched(song);
    if pitches.is_empty() {
        return None;
    }
    let n = pitches.len() as f64;
    let mut h = 0.0;
    for pc in 0..12u8 {
        let c = pitches.iter().filter(|&&p| p % 12 == pc).count();
        if c > 0 {
            let p = c as f64 / n;
            h -= p * p.ln() / std::f64::consts::LN_2;
        }
    }
    Some(h)
}

fn scale_from_steps(root: u8, steps: [u8; 7]) -> BTreeSet<u8> {
    let mut set = BTreeSet::new();
    let mut pc = root;
    for s in steps {
        set.insert(pc % 12);
        pc += s;
    }
    set
}

pub fn oracle_scale(song: &Song) -> Option<f64> {
    let pitches = pitched(song);
    if pitches.is_empty() {
        return None;
    }
    let mut best = 0usize;
    for root in 0..12u8 {
        for steps in [[2, 2, 1, 2, 2, 2, 1], [2, 1, 2, 2, 1, 2, 2]] {
            let scale = scale_from_steps(root, steps);
            best = best.max(pitches.iter().filter(|&&p| scale.contains(&(p % 12))).count());
        }
    }
    Some(best as f64 / pitches.len() as f64)
}

pub fn oracle_groove(song: &Song) -> Option<f64> {
    let r = song.steps_per_measure;
    let onsets: Vec<u32> = song.tracks.iter().flat_map(|t| t.notes.iter().map(|n| n.onset)).collect();
    let last = *onsets.iter().max()?;
    let measures = last / r + 1;
    if measures < 2 {
        return None;
    }
    let steps_of = |m: u32| -> BTreeSet<u32> { onsets.iter().filter(|&&o| o / r == m).map(|&o| o - m * r).collect() };
    let mut total = 0.0;
    for m in 0..measures - 1 {
        let (a, b) = (steps_of(m), steps_of(m + 1));
        total += a.symmetric_difference(&b).count() as f64 / r as f64;
    }
    Some(1.0 - total / (measures - 1) as f64)
}
