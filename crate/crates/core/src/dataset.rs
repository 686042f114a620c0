//! Corpus ingestion, subsets, deterministic splits and frequency statistics.
//!
//! One song per JSON file:
//!
//! ```json
//! {
//!   "resolution": 12,
//!   "tracks": [
//!     {"program": 0, "is_drum": false,
//!      "notes": [{"time": 0, "pitch": 60, "duration": 12, "velocity": 64}]}
//!   ],
//!   "metadata": {"genres": ["classical"]}
//! }
//! ```
//!
//! `program` is the external 0-127 number, mapped through
//! [`CanonicalTables`]. A file with a `metadata` object counts as having
//! metadata even when its genre list is empty or unknown.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::score::{quantize_and_sort, validate_song, Note, Song, Track, DEFAULT_STEPS_PER_MEASURE, RESOLUTION};
use crate::tables::CanonicalTables;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{file}: {msg}")]
    File { file: String, msg: String },
    #[error("no valid songs found in {0}")]
    Empty(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SongFile {
    pub resolution: u32,
    pub tracks: Vec<TrackFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<MetadataFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackFile {
    pub program: u8,
    #[serde(default)]
    pub is_drum: bool,
    pub notes: Vec<NoteFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteFile {
    pub time: u64,
    pub pitch: u8,
    pub duration: u64,
    #[serde(default = "default_velocity")]
    pub velocity: u8,
}

fn default_velocity() -> u8 {
    crate::score::DEFAULT_VELOCITY
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetadataFile {
    #[serde(default)]
    pub genres: Vec<String>,
}

/// Counts of what conversion into canonical form had to drop.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConversionReport {
    pub skipped_tracks: usize,
    pub unknown_genres: usize,
    pub dropped_notes: usize,
    pub clipped_durations: usize,
}

impl ConversionReport {
    fn absorb(&mut self, other: ConversionReport) {
        self.skipped_tracks += other.skipped_tracks;
        self.unknown_genres += other.unknown_genres;
        self.dropped_notes += other.dropped_notes;
        self.clipped_durations += other.clipped_durations;
    }
}

fn rescale(value: u64, resolution: u32) -> u64 {
    let r = resolution as u64;
    (value * RESOLUTION as u64 + r / 2) / r
}

/// Converts a parsed file into a normalized song.
pub fn song_from_file(file: &SongFile, tables: &CanonicalTables) -> Result<(Song, ConversionReport), String> {
    let res = file.resolution;
    if res == 0 || (!res.is_multiple_of(RESOLUTION) && !RESOLUTION.is_multiple_of(res)) {
        return Err(format!("resolution {res} cannot be re-quantized to {RESOLUTION} steps per beat"));
    }
    let mut report = ConversionReport::default();
    let mut tracks = Vec::new();
    for t in &file.tracks {
        if t.program > 127 {
            return Err(format!("program {} out of range 0-127", t.program));
        }
        let Some(program) = tables.map_program(t.program, t.is_drum) else {
            report.skipped_tracks += 1;
            continue;
        };
        let mut notes = Vec::with_capacity(t.notes.len());
        for n in &t.notes {
            let onset = rescale(n.time, res).min(u32::MAX as u64) as u32;
            let duration = rescale(n.duration, res).min(u32::MAX as u64) as u32;
            notes.push(Note { onset, pitch: n.pitch, duration, velocity: n.velocity });
        }
        tracks.push(Track::new(program, notes));
    }

    let mut genre_tags = Vec::new();
    if let Some(meta) = &file.metadata {
        for g in &meta.genres {
            match tables.genre_id(g) {
                Some(id) => genre_tags.push(id),
                None => report.unknown_genres += 1,
            }
        }
    }
    let raw = Song {
        tracks,
        genre_tags,
        has_metadata: file.metadata.is_some(),
        steps_per_measure: DEFAULT_STEPS_PER_MEASURE,
    };
    let (song, norm) = quantize_and_sort(&raw);
    report.dropped_notes = norm.dropped_notes;
    report.clipped_durations = norm.clipped_durations;
    if let Some(v) = validate_song(&song).first() {
        return Err(v.to_string());
    }
    Ok((song, report))
}

/// Exports a song at resolution 12 using each instrument's representative program.
pub fn song_to_file(song: &Song, tables: &CanonicalTables) -> SongFile {
    let tracks = song
        .tracks
        .iter()
        .map(|t| {
            let (program, is_drum) = tables.export_program(t.program).unwrap_or((0, t.is_drum));
            TrackFile {
                program,
                is_drum,
                notes: t
                    .notes
                    .iter()
                    .map(|n| NoteFile { time: n.onset as u64, pitch: n.pitch, duration: n.duration as u64, velocity: n.velocity })
                    .collect(),
            }
        })
        .collect();
    let metadata = song.has_metadata.then(|| MetadataFile {
        genres: song.genre_tags.iter().filter_map(|&g| tables.genre_name(g).map(str::to_string)).collect(),
    });
    SongFile { resolution: RESOLUTION, tracks, metadata }
}

pub fn write_song(path: &Path, song: &Song, tables: &CanonicalTables) -> Result<(), DatasetError> {
    let text = serde_json::to_string_pretty(&song_to_file(song, tables)).expect("song files always serialize");
    fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn read_song(path: &Path, tables: &CanonicalTables) -> Result<(Song, ConversionReport), DatasetError> {
    let file_err = |msg: String| DatasetError::File { file: path.display().to_string(), msg };
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let parsed: SongFile = serde_json::from_str(&text).map_err(|e| file_err(e.to_string()))?;
    song_from_file(&parsed, tables).map_err(file_err)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub id: String,
    pub song: Song,
}

impl CorpusEntry {
    pub fn has_metadata(&self) -> bool {
        self.song.has_metadata
    }

    pub fn genre_tags(&self) -> &[u8] {
        &self.song.genre_tags
    }
}

#[derive(Debug, Default)]
pub struct LoadReport {
    pub files: usize,
    pub conversion: ConversionReport,
    /// Files that failed to parse or convert, with the reason.
    pub file_errors: Vec<DatasetError>,
}

fn json_files(path: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(io_err(path))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    Ok(files)
}

fn id_of(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Loads every `*.json` file in a directory (or a single file), sorted by id.
///
/// Broken files are reported in [`LoadReport::file_errors`] and skipped;
/// finding no valid song at all is an error.
pub fn load_corpus(path: &Path, tables: &CanonicalTables) -> Result<(Vec<CorpusEntry>, LoadReport), DatasetError> {
    let files = json_files(path)?;
    let mut report = LoadReport { files: files.len(), ..Default::default() };
    let mut entries = Vec::new();
    for f in &files {
        match read_song(f, tables) {
            Ok((song, conv)) => {
                report.conversion.absorb(conv);
                entries.push(CorpusEntry { id: id_of(f), song });
            }
            Err(e) => report.file_errors.push(e),
        }
    }
    if entries.is_empty() {
        if files.len() == 1 {
            if let Some(e) = report.file_errors.pop() {
                return Err(e);
            }
        }
        return Err(DatasetError::Empty(path.display().to_string()));
    }
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    Ok((entries, report))
}

/// Writes each entry as `<id>.json` under `dir`.
pub fn save_corpus(dir: &Path, entries: &[CorpusEntry], tables: &CanonicalTables) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for e in entries {
        write_song(&dir.join(format!("{}.json", e.id)), &e.song, tables)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Subset {
    /// Everything.
    Full,
    /// Songs that came with a metadata record.
    Metadata,
    /// Songs with at least one known genre.
    Genre,
}

impl Subset {
    pub fn keeps(self, song: &Song) -> bool {
        match self {
            Subset::Full => true,
            Subset::Metadata => song.has_metadata,
            Subset::Genre => song.has_metadata && !song.genre_tags.is_empty(),
        }
    }
}

impl FromStr for Subset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Subset::Full),
            "metadata" => Ok(Subset::Metadata),
            "genre" => Ok(Subset::Genre),
            _ => Err(format!("unknown subset `{s}` (expected full, metadata or genre)")),
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Subset::Full => "full",
            Subset::Metadata => "metadata",
            Subset::Genre => "genre",
        })
    }
}

pub fn filter_subset(entries: &[CorpusEntry], subset: Subset) -> Vec<CorpusEntry> {
    entries.iter().filter(|e| subset.keeps(&e.song)).cloned().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitName {
    Train,
    Valid,
    Test,
}

/// Resolution of the split hash, in buckets.
const SPLIT_BUCKETS: u64 = 10_000;

/// Split an id falls into: a keyed hash of `(seed, id)` bucketed 90/5/5.
pub fn assign_split(id: &str, seed: u64) -> SplitName {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    let digest = h.finalize();
    let bucket = u64::from_le_bytes(digest[..8].try_into().unwrap()) % SPLIT_BUCKETS;
    match bucket {
        b if b < SPLIT_BUCKETS * 90 / 100 => SplitName::Train,
        b if b < SPLIT_BUCKETS * 95 / 100 => SplitName::Valid,
        _ => SplitName::Test,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub valid: Vec<T>,
    pub test: Vec<T>,
}

pub fn split<T: Clone>(items: &[T], id: impl Fn(&T) -> &str, seed: u64) -> Split<T> {
    let mut out = Split { train: Vec::new(), valid: Vec::new(), test: Vec::new() };
    for item in items {
        match assign_split(id(item), seed) {
            SplitName::Train => out.train.push(item.clone()),
            SplitName::Valid => out.valid.push(item.clone()),
            SplitName::Test => out.test.push(item.clone()),
        }
    }
    out
}

pub fn split_corpus(entries: &[CorpusEntry], seed: u64) -> Split<CorpusEntry> {
    split(entries, |e| e.id.as_str(), seed)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusStats {
    /// `(genre id, songs tagged)`, most common first.
    pub genres: Vec<(u8, usize)>,
    /// `(instrument id, tracks)`, most common first.
    pub instruments: Vec<(u8, usize)>,
}

fn ranked(counts: &[usize]) -> Vec<(u8, usize)> {
    let mut v: Vec<(u8, usize)> = counts.iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, &c)| (i as u8, c)).collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    v
}

pub fn corpus_stats(entries: &[CorpusEntry]) -> CorpusStats {
    let mut genres = [0usize; 256];
    let mut instruments = [0usize; 256];
    for e in entries {
        for &g in &e.song.tags() {
            genres[g as usize] += 1;
        }
        for t in &e.song.tracks {
            instruments[t.program as usize] += 1;
        }
    }
    CorpusStats { genres: ranked(&genres), instruments: ranked(&instruments) }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, meta: bool, genres: Vec<u8>) -> CorpusEntry {
        let mut song = Song::new(vec![Track::new(0, vec![Note::new(0, 60, 1)])]);
        song.has_metadata = meta;
        song.genre_tags = genres;
        CorpusEntry { id: id.into(), song }
    }

    #[test]
    fn subsets_nest() {
        let c = vec![entry("a", true, vec![1]), entry("b", true, vec![]), entry("c", false, vec![])];
        let ids = |s| filter_subset(&c, s).into_iter().map(|e| e.id).collect::<Vec<_>>();
        assert_eq!(ids(Subset::Genre), vec!["a"]);
        assert_eq!(ids(Subset::Metadata), vec!["a", "b"]);
        assert_eq!(ids(Subset::Full), vec!["a", "b", "c"]);
    }

    #[test]
    fn stats_rank_by_count() {
        let c = vec![entry("a", true, vec![3]), entry("b", true, vec![5]), entry("c", true, vec![3])];
        assert_eq!(corpus_stats(&c).genres, vec![(3, 2), (5, 1)]);

        let mut two = entry("d", false, vec![]);
        two.song.tracks.push(Track::new(0, vec![]));
        assert_eq!(corpus_stats(&[two]).instruments, vec![(0, 2)]);
        assert_eq!(corpus_stats(&[]), CorpusStats::default());
    }

    #[test]
    fn split_is_a_deterministic_partition() {
        let ids: Vec<String> = (0..1000).map(|i| format!("song-{i}")).collect();
        let a = split(&ids, |s| s.as_str(), 0);
        let b = split(&ids, |s| s.as_str(), 0);
        assert_eq!(a, b);
        assert_eq!(a.train.len() + a.valid.len() + a.test.len(), 1000);
        assert!((880..=920).contains(&a.train.len()), "{}", a.train.len());
        assert!((30..=70).contains(&a.valid.len()), "{}", a.valid.len());
        assert!((30..=70).contains(&a.test.len()), "{}", a.test.len());
        let c = split(&ids, |s| s.as_str(), 1);
        assert_ne!(a, c);
    }

    #[test]
    fn conversion_skips_unmapped_tracks_and_unknown_genres() {
        let tables = CanonicalTables::builtin();
        let file = SongFile {
            resolution: 24,
            tracks: vec![
                TrackFile { program: 0, is_drum: false, notes: vec![NoteFile { time: 48, pitch: 60, duration: 6, velocity: 90 }] },
                TrackFile { program: 120, is_drum: false, notes: vec![NoteFile { time: 0, pitch: 60, duration: 24, velocity: 90 }] },
            ],
            metadata: Some(MetadataFile { genres: vec!["Jazz".into(), "polka".into()] }),
        };
        let (song, report) = song_from_file(&file, &tables).unwrap();
        assert_eq!(report.skipped_tracks, 1);
        assert_eq!(report.unknown_genres, 1);
        assert_eq!(song.tracks.len(), 1);
        assert_eq!(song.tracks[0].notes[0], Note { onset: 24, pitch: 60, duration: 3, velocity: 90 });
        assert_eq!(song.genre_tags, vec![tables.genre_id("jazz").unwrap()]);

        let bad = SongFile { resolution: 7, tracks: vec![], metadata: None };
        assert!(song_from_file(&bad, &tables).is_err());
    }
}
