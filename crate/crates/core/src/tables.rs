//! Canonical instrument and genre tables.
//!
//! The tables ship as plain-text data files under `data/` and are compiled
//! in; [`CanonicalTables::parse`] accepts edited copies.

use std::collections::HashMap;

use crate::score::{DRUM_PROGRAM, NUM_GENRES, NUM_INSTRUMENTS};

const INSTRUMENTS: &str = include_str!("../data/instruments.txt");
const GENRES: &str = include_str!("../data/genres.txt");
const PROGRAM_MAP: &str = include_str!("../data/program_map.txt");

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TableError {
    #[error("{table}: expected {expected} entries, found {found}")]
    Size { table: &'static str, expected: usize, found: usize },
    #[error("{table}: duplicate name `{name}`")]
    Duplicate { table: &'static str, name: String },
    #[error("program map line {line}: {msg}")]
    ProgramMap { line: usize, msg: String },
}

#[derive(Debug, Clone)]
pub struct CanonicalTables {
    instruments: Vec<String>,
    genres: Vec<String>,
    /// External program 0-127 to canonical id; `None` means skip.
    melodic: [Option<u8>; 128],
    drum: Option<u8>,
    /// Program written back when exporting each canonical id.
    export: Vec<Option<u8>>,
    instrument_index: HashMap<String, u8>,
    genre_index: HashMap<String, u8>,
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn name_key(name: &str) -> String {
    name.trim().to_ascii_lowercase().replace('&', "n").replace([' ', '_', '/'], "-")
}

fn index_names(table: &'static str, names: &[String], expected: usize) -> Result<HashMap<String, u8>, TableError> {
    if names.len() != expected {
        return Err(TableError::Size { table, expected, found: names.len() });
    }
    let mut index = HashMap::new();
    for (i, n) in names.iter().enumerate() {
        if index.insert(name_key(n), i as u8).is_some() {
            return Err(TableError::Duplicate { table, name: n.clone() });
        }
    }
    Ok(index)
}

impl CanonicalTables {
    pub fn builtin() -> Self {
        Self::parse(INSTRUMENTS, GENRES, PROGRAM_MAP).expect("bundled tables are valid")
    }

    pub fn parse(instruments: &str, genres: &str, program_map: &str) -> Result<Self, TableError> {
        let instruments: Vec<String> = data_lines(instruments).map(|(_, l)| l.to_string()).collect();
        let genres: Vec<String> = data_lines(genres).map(|(_, l)| l.to_string()).collect();
        let instrument_index = index_names("instruments", &instruments, NUM_INSTRUMENTS)?;
        let genre_index = index_names("genres", &genres, NUM_GENRES)?;

        let mut melodic = [None; 128];
        let mut seen = [false; 128];
        let mut drum = None;
        let mut export = vec![None; NUM_INSTRUMENTS];
        for (line, text) in data_lines(program_map) {
            let err = |msg: String| TableError::ProgramMap { line, msg };
            let mut parts = text.split_whitespace();
            let (Some(src), Some(dst), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(err(format!("expected `<program> <instrument>`, got `{text}`")));
            };
            let target = if dst == "skip" {
                None
            } else {
                Some(*instrument_index.get(&name_key(dst)).ok_or_else(|| err(format!("unknown instrument `{dst}`")))?)
            };
            if src == "drum" {
                drum = target;
                continue;
            }
            let program: usize = src
                .parse()
                .ok()
                .filter(|&p| p < 128)
                .ok_or_else(|| err(format!("bad program `{src}`")))?;
            if std::mem::replace(&mut seen[program], true) {
                return Err(err(format!("program {program} listed twice")));
            }
            melodic[program] = target;
            if let Some(id) = target {
                export[id as usize].get_or_insert(program as u8);
            }
        }
        if let Some(p) = seen.iter().position(|s| !s) {
            return Err(TableError::ProgramMap { line: 0, msg: format!("program {p} missing") });
        }

        Ok(CanonicalTables { instruments, genres, melodic, drum, export, instrument_index, genre_index })
    }

    pub fn instrument_name(&self, id: u8) -> Option<&str> {
        self.instruments.get(id as usize).map(String::as_str)
    }

    pub fn genre_name(&self, id: u8) -> Option<&str> {
        self.genres.get(id as usize).map(String::as_str)
    }

    pub fn instrument_id(&self, name: &str) -> Option<u8> {
        self.instrument_index.get(&name_key(name)).copied()
    }

    /// Unknown genre names map to `None`; the table is closed.
    pub fn genre_id(&self, name: &str) -> Option<u8> {
        self.genre_index.get(&name_key(name)).copied()
    }

    /// Canonical id for an external program number, or `None` to skip the track.
    pub fn map_program(&self, program: u8, is_drum: bool) -> Option<u8> {
        if is_drum {
            self.drum
        } else {
            self.melodic.get(program as usize).copied().flatten()
        }
    }

    /// External `(program, is_drum)` that maps back onto `id`.
    pub fn export_program(&self, id: u8) -> Option<(u8, bool)> {
        if Some(id) == self.drum || (self.drum.is_none() && id == DRUM_PROGRAM) {
            return Some((0, true));
        }
        self.export.get(id as usize).copied().flatten().map(|p| (p, false))
    }

    pub fn instruments(&self) -> &[String] {
        &self.instruments
    }

    pub fn genres(&self) -> &[String] {
        &self.genres
    }
}
