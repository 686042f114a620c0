//! Quantized multitrack scores and the normalization every other module assumes.
//!
//! Time is measured in integer steps at a fixed resolution of
//! [`RESOLUTION`] steps per quarter note. A note's onset decomposes into a
//! beat index (`onset / 12`) and a position inside that beat (`onset % 12`).

use std::fmt;

use serde::{Deserialize, Serialize};

/// Time steps per quarter note.
pub const RESOLUTION: u32 = 12;
/// Number of representable beats; notes starting at beat 64 or later are dropped.
pub const MAX_BEATS: u32 = 64;
/// Longest representable note, in steps (16 quarter notes).
pub const MAX_DURATION: u32 = 192;
/// Size of the canonical instrument table.
pub const NUM_INSTRUMENTS: usize = 64;
/// Size of the canonical genre table.
pub const NUM_GENRES: usize = 20;
/// Canonical instrument id reserved for percussion tracks.
pub const DRUM_PROGRAM: u8 = 63;
/// 4/4 at 12 steps per quarter note.
pub const DEFAULT_STEPS_PER_MEASURE: u32 = 48;
/// Velocity assigned to decoded notes.
pub const DEFAULT_VELOCITY: u8 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Note {
    pub onset: u32,
    pub pitch: u8,
    pub duration: u32,
    /// Carried through for export; never tokenized.
    pub velocity: u8,
}

impl Note {
    pub fn new(onset: u32, pitch: u8, duration: u32) -> Self {
        Note { onset, pitch, duration, velocity: DEFAULT_VELOCITY }
    }

    pub fn beat(&self) -> u32 {
        self.onset / RESOLUTION
    }

    pub fn position(&self) -> u32 {
        self.onset % RESOLUTION
    }

    pub fn pitch_class(&self) -> usize {
        (self.pitch % 12) as usize
    }

    fn sort_key(&self) -> (u32, u8, u32) {
        (self.onset, self.pitch, self.duration)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Track {
    /// Canonical instrument id, 0-63.
    pub program: u8,
    pub is_drum: bool,
    pub notes: Vec<Note>,
}

impl Track {
    pub fn new(program: u8, notes: Vec<Note>) -> Self {
        Track { program, is_drum: program == DRUM_PROGRAM, notes }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Song {
    pub tracks: Vec<Track>,
    /// Canonical genre ids, 0-19.
    pub genre_tags: Vec<u8>,
    pub has_metadata: bool,
    pub steps_per_measure: u32,
}

impl Default for Song {
    fn default() -> Self {
        Song {
            tracks: Vec::new(),
            genre_tags: Vec::new(),
            has_metadata: false,
            steps_per_measure: DEFAULT_STEPS_PER_MEASURE,
        }
    }
}

impl Song {
    pub fn new(tracks: Vec<Track>) -> Self {
        Song { tracks, ..Default::default() }
    }

    pub fn with_genres(mut self, tags: Vec<u8>) -> Self {
        self.has_metadata = self.has_metadata || !tags.is_empty();
        self.genre_tags = tags;
        self
    }

    pub fn note_count(&self) -> usize {
        self.tracks.iter().map(|t| t.notes.len()).sum()
    }

    /// All notes paired with their track's program, in canonical token order:
    /// `(onset, program, pitch, duration)` ascending.
    pub fn merged_notes(&self) -> Vec<(u8, Note)> {
        let mut all: Vec<(u8, Note)> = self
            .tracks
            .iter()
            .flat_map(|t| t.notes.iter().map(move |n| (t.program, *n)))
            .collect();
        all.sort_by_key(|(p, n)| (n.onset, *p, n.pitch, n.duration));
        all
    }

    /// Sorted, deduplicated programs of all tracks.
    pub fn programs(&self) -> Vec<u8> {
        let mut p: Vec<u8> = self.tracks.iter().map(|t| t.program).collect();
        p.sort_unstable();
        p.dedup();
        p
    }

    /// Sorted, deduplicated genre tags.
    pub fn tags(&self) -> Vec<u8> {
        let mut t = self.genre_tags.clone();
        t.sort_unstable();
        t.dedup();
        t
    }
}

/// What `quantize_and_sort` had to throw away or clip.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NormalizeReport {
    pub dropped_notes: usize,
    pub clipped_durations: usize,
    pub removed_tracks: usize,
}

/// Brings a song into canonical form.
///
/// Notes at beat 64 or later are dropped, durations are clipped to
/// `[1, 192]`, tracks sharing a program are merged, empty tracks are
/// removed, tracks are ordered by program and notes inside a track by
/// `(onset, pitch, duration)`. Genre tags are sorted and deduplicated.
/// Pitches and velocities are left untouched.
pub fn quantize_and_sort(song: &Song) -> (Song, NormalizeReport) {
    let mut report = NormalizeReport::default();
    let limit = MAX_BEATS * RESOLUTION;

    let mut by_program: Vec<Option<Track>> = vec![None; 256];
    for track in &song.tracks {
        let slot = by_program[track.program as usize]
            .get_or_insert_with(|| Track { program: track.program, is_drum: track.is_drum, notes: Vec::new() });
        slot.is_drum |= track.is_drum;
        for note in &track.notes {
            if note.onset >= limit {
                report.dropped_notes += 1;
                continue;
            }
            let mut n = *note;
            let clipped = n.duration.clamp(1, MAX_DURATION);
            if clipped != n.duration {
                report.clipped_durations += 1;
                n.duration = clipped;
            }
            slot.notes.push(n);
        }
    }

    let mut tracks = Vec::new();
    for mut t in by_program.into_iter().flatten() {
        if t.notes.is_empty() {
            continue;
        }
        t.notes.sort_by_key(Note::sort_key);
        tracks.push(t);
    }
    report.removed_tracks = song.tracks.len() - tracks.len();

    let genre_tags = song.tags();
    let out = Song {
        tracks,
        has_metadata: song.has_metadata || !genre_tags.is_empty(),
        genre_tags,
        steps_per_measure: song.steps_per_measure,
    };
    (out, report)
}

/// One broken invariant, located precisely enough to find it in the input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub track: Option<usize>,
    pub note: Option<usize>,
    pub value: i64,
    pub bound: &'static str,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} out of range", self.field)?;
        match (self.track, self.note) {
            (Some(t), Some(n)) => write!(f, " at track {t} note {n}")?,
            (Some(t), None) => write!(f, " at track {t}")?,
            (None, Some(i)) => write!(f, " at index {i}")?,
            (None, None) => {}
        }
        write!(f, ": {} (allowed {})", self.value, self.bound)
    }
}

/// Lists every type-invariant violation; empty means the song is well formed.
pub fn validate_song(song: &Song) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |field, track, note, value: i64, bound| {
        out.push(Violation { field, track, note, value, bound });
    };

    if song.steps_per_measure == 0 {
        push("steps_per_measure", None, None, 0, "> 0");
    }
    for (i, &g) in song.genre_tags.iter().enumerate() {
        if g as usize >= NUM_GENRES {
            push("genre", None, Some(i), g as i64, "0-19");
        }
    }
    if !song.genre_tags.is_empty() && !song.has_metadata {
        push("has_metadata", None, None, 0, "true when genre tags are present");
    }
    for (ti, track) in song.tracks.iter().enumerate() {
        if track.program as usize >= NUM_INSTRUMENTS {
            push("program", Some(ti), None, track.program as i64, "0-63");
        }
        if track.is_drum != (track.program == DRUM_PROGRAM) {
            push("is_drum", Some(ti), None, track.is_drum as i64, "true exactly for the drums program");
        }
        for (ni, n) in track.notes.iter().enumerate() {
            if n.pitch > 127 {
                push("pitch", Some(ti), Some(ni), n.pitch as i64, "0-127");
            }
            if n.velocity > 127 {
                push("velocity", Some(ti), Some(ni), n.velocity as i64, "0-127");
            }
            if n.duration < 1 {
                push("duration", Some(ti), Some(ni), n.duration as i64, ">= 1");
            }
            if n.beat() >= MAX_BEATS {
                push("beat", Some(ti), Some(ni), n.beat() as i64, "0-63");
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn piano(notes: Vec<Note>) -> Song {
        Song::new(vec![Track::new(0, notes)])
    }

    #[test]
    fn note_past_last_beat_is_dropped() {
        let (s, r) = quantize_and_sort(&piano(vec![Note::new(770, 60, 4), Note::new(0, 60, 4)]));
        assert_eq!(r.dropped_notes, 1);
        assert_eq!(s.tracks[0].notes, vec![Note::new(0, 60, 4)]);
        // 767 is the last step of beat 63
        let (s, r) = quantize_and_sort(&piano(vec![Note::new(767, 60, 4)]));
        assert_eq!(r.dropped_notes, 0);
        assert_eq!(s.tracks[0].notes[0].beat(), 63);
    }

    #[test]
    fn notes_are_sorted() {
        let (s, _) = quantize_and_sort(&piano(vec![Note::new(12, 64, 1), Note::new(0, 60, 1)]));
        let got: Vec<_> = s.tracks[0].notes.iter().map(|n| (n.onset, n.pitch)).collect();
        assert_eq!(got, vec![(0, 60), (12, 64)]);
    }

    #[test]
    fn long_duration_is_clipped() {
        let (s, r) = quantize_and_sort(&piano(vec![Note::new(0, 60, 500), Note::new(12, 60, 0)]));
        assert_eq!(s.tracks[0].notes[0].duration, 192);
        assert_eq!(s.tracks[0].notes[1].duration, 1);
        assert_eq!(r.clipped_durations, 2);
    }

    #[test]
    fn tracks_merge_by_program_and_empty_ones_vanish() {
        let song = Song::new(vec![
            Track::new(40, vec![Note::new(0, 70, 3)]),
            Track::new(0, vec![]),
            Track::new(40, vec![Note::new(0, 65, 3)]),
        ]);
        let (s, r) = quantize_and_sort(&song);
        assert_eq!(s.tracks.len(), 1);
        assert_eq!(s.tracks[0].notes.len(), 2);
        assert_eq!(s.tracks[0].notes[0].pitch, 65);
        assert_eq!(r.removed_tracks, 2);
    }

    #[test]
    fn merged_notes_use_cross_track_order() {
        let song = Song::new(vec![
            Track::new(5, vec![Note::new(0, 50, 2)]),
            Track::new(1, vec![Note::new(0, 70, 2), Note::new(0, 60, 2)]),
        ]);
        let order: Vec<_> = song.merged_notes().iter().map(|(p, n)| (*p, n.pitch)).collect();
        assert_eq!(order, vec![(1, 60), (1, 70), (5, 50)]);
    }

    #[test]
    fn validation_reports_each_violation() {
        let mut song = piano(vec![Note::new(0, 60, 1); 4]);
        song.tracks[0].notes[3].pitch = 128;
        let v = validate_song(&song);
        assert_eq!(v.len(), 1);
        assert!(v[0].to_string().starts_with("pitch out of range at track 0 note 3"), "{}", v[0]);

        let bad = Song::new(vec![Track { program: 64, is_drum: false, notes: vec![] }]);
        let v = validate_song(&bad);
        assert!(v.iter().any(|x| x.to_string().starts_with("program out of range")));

        assert!(validate_song(&piano(vec![Note::new(0, 60, 1)])).is_empty());
    }

    #[test]
    fn genre_without_metadata_flag_is_invalid() {
        let mut s = piano(vec![]);
        s.genre_tags = vec![3];
        assert_eq!(validate_song(&s).len(), 1);
        s.genre_tags = vec![20];
        s.has_metadata = true;
        assert_eq!(validate_song(&s)[0].field, "genre");
    }
}
