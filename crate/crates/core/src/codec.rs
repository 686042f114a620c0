//! Song <-> event sequence conversion and the streaming grammar behind it.
//!
//! A sequence is `start-of-song`, an optional tag list, an optional
//! instrument list, `start-of-notes`, one five-event group per note
//! (`beat position instrument pitch duration`) and `end-of-song`. Which
//! lists are present depends on the [`Variant`]; lists are strictly
//! ascending, so every accepted sequence is the canonical encoding of the
//! song it decodes to.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::score::{quantize_and_sort, Note, Song, Track, DEFAULT_STEPS_PER_MEASURE, DEFAULT_VELOCITY, MAX_BEATS, MAX_DURATION, NUM_GENRES, NUM_INSTRUMENTS, RESOLUTION};
use crate::vocab::{build_vocab, Event, EventKind, TokenId, Vocabulary, VocabError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// No control prefix.
    Uncond,
    /// Instrument list prefix.
    MmtI,
    /// Genre tag prefix.
    MmtG,
    /// Genre tags, then instruments.
    MmtGi,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Uncond, Variant::MmtI, Variant::MmtG, Variant::MmtGi];

    pub fn has_tags(self) -> bool {
        matches!(self, Variant::MmtG | Variant::MmtGi)
    }

    pub fn has_programs(self) -> bool {
        matches!(self, Variant::MmtI | Variant::MmtGi)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Uncond => "uncond",
            Variant::MmtI => "mmt-i",
            Variant::MmtG => "mmt-g",
            Variant::MmtGi => "mmt-gi",
        }
    }

    pub fn vocab(self) -> Vocabulary {
        build_vocab(self.has_tags(), self.has_programs())
    }

    /// The variant whose vocabulary has this fingerprint.
    pub fn from_fingerprint(fp: u64) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.vocab().fingerprint() == fp)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown variant `{s}` (expected uncond, mmt-i, mmt-g or mmt-gi)"))
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("missing genre condition")]
    MissingGenre,
    #[error("missing instrument condition")]
    MissingInstruments,
    #[error("song is not normalized: {0}")]
    Unnormalized(String),
    #[error("grammar violation at index {index}: {rejection}")]
    Grammar { index: usize, rejection: Rejection },
    #[error("sequence ends before start-of-notes")]
    TruncatedPrefix,
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error("token file line {line}: {msg}")]
    TokenFile { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] IoError),
}

/// `std::io::Error` wrapped so the codec error stays comparable in tests.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct IoError(#[from] pub std::io::Error);

impl PartialEq for IoError {
    fn eq(&self, other: &Self) -> bool {
        self.0.kind() == other.0.kind()
    }
}

impl Eq for IoError {}

/// Field expected next inside a note group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoteField {
    Position,
    Instrument,
    Pitch,
    Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Section {
    ExpectSos,
    /// After `start-of-song`, waiting for `start-of-tags`.
    ExpectTagsMarker,
    Tags,
    /// Waiting for `start-of-program`.
    ExpectProgramMarker,
    Programs,
    /// Unconditional songs: waiting for `start-of-notes`.
    ExpectNotesMarker,
    /// After `start-of-notes` or a complete note group: a beat or the end.
    NoteBoundary,
    InNote(NoteField),
    Done,
}

/// Streaming parser state. Small and `Copy`, so each sampling stream can
/// own one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GrammarState {
    pub variant: Variant,
    pub section: Section,
    pub last_beat: u32,
    /// Bit i set when instrument i was declared in the prefix list.
    pub declared_programs: u64,
    /// Bit i set when tag i was declared.
    pub declared_tags: u32,
}

/// Why an event was refused, with the event kinds that would have been accepted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub found: Event,
    pub expected: Vec<EventKind>,
    pub reason: Option<String>,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(r) = &self.reason {
            write!(f, "{r}; ")?;
        }
        let names: Vec<&str> = self.expected.iter().map(|k| k.name()).collect();
        write!(f, "found {}, expected {{{}}}", self.found, names.join(", "))
    }
}

impl std::error::Error for Rejection {}

fn highest_bit(bits: u64) -> Option<u16> {
    (bits != 0).then(|| 63 - bits.leading_zeros() as u16)
}

impl GrammarState {
    pub fn new(variant: Variant) -> Self {
        GrammarState { variant, section: Section::ExpectSos, last_beat: 0, declared_programs: 0, declared_tags: 0 }
    }

    pub fn is_done(&self) -> bool {
        self.section == Section::Done
    }

    /// True at a point where the sequence could stop without cutting a note in half.
    pub fn at_note_boundary(&self) -> bool {
        matches!(self.section, Section::NoteBoundary | Section::Done)
    }

    pub fn declared_programs(&self) -> Vec<u8> {
        (0..NUM_INSTRUMENTS as u8).filter(|&i| self.declared_programs >> i & 1 == 1).collect()
    }

    pub fn declared_tags(&self) -> Vec<u8> {
        (0..NUM_GENRES as u8).filter(|&i| self.declared_tags >> i & 1 == 1).collect()
    }

    fn after_sos(&self) -> Section {
        if self.variant.has_tags() {
            Section::ExpectTagsMarker
        } else if self.variant.has_programs() {
            Section::ExpectProgramMarker
        } else {
            Section::ExpectNotesMarker
        }
    }

    /// Event kinds that can appear next, ignoring argument constraints.
    pub fn expected_kinds(&self) -> Vec<EventKind> {
        use EventKind::*;
        match self.section {
            Section::ExpectSos => vec![StartOfSong],
            Section::ExpectTagsMarker => vec![StartOfTags],
            Section::Tags if self.declared_tags == 0 => vec![Tag],
            Section::Tags if self.variant.has_programs() => vec![Tag, StartOfProgram],
            Section::Tags => vec![Tag, StartOfNotes],
            Section::ExpectProgramMarker => vec![StartOfProgram],
            Section::Programs if self.declared_programs == 0 => vec![Instrument],
            Section::Programs => vec![Instrument, StartOfNotes],
            Section::ExpectNotesMarker => vec![StartOfNotes],
            Section::NoteBoundary => vec![Beat, EndOfSong],
            Section::InNote(NoteField::Position) => vec![Position],
            Section::InNote(NoteField::Instrument) => vec![Instrument],
            Section::InNote(NoteField::Pitch) => vec![Pitch],
            Section::InNote(NoteField::Duration) => vec![Duration],
            Section::Done => vec![],
        }
    }

    /// Consumes one event, returning the next state or the reason it was refused.
    pub fn advance(&self, event: Event) -> Result<GrammarState, Rejection> {
        use EventKind::*;
        let reject = |reason: Option<String>| Rejection { found: event, expected: self.expected_kinds(), reason };
        if !event.is_valid() {
            return Err(reject(Some(format!("argument {} out of range for {}", event.arg, event.kind))));
        }
        let mut next = *self;
        match (self.section, event.kind) {
            (Section::ExpectSos, StartOfSong) => next.section = self.after_sos(),
            (Section::ExpectTagsMarker, StartOfTags) => next.section = Section::Tags,
            (Section::Tags, Tag) => {
                if let Some(top) = highest_bit(self.declared_tags as u64) {
                    if event.arg <= top {
                        return Err(reject(Some("tag list not strictly increasing".into())));
                    }
                }
                next.declared_tags |= 1 << event.arg;
            }
            (Section::Tags, StartOfProgram) if self.declared_tags != 0 && self.variant.has_programs() => {
                next.section = Section::Programs;
            }
            (Section::Tags, StartOfNotes) if self.declared_tags != 0 && !self.variant.has_programs() => {
                next.section = Section::NoteBoundary;
            }
            (Section::ExpectProgramMarker, StartOfProgram) => next.section = Section::Programs,
            (Section::Programs, Instrument) => {
                if let Some(top) = highest_bit(self.declared_programs) {
                    if event.arg <= top {
                        return Err(reject(Some("instrument list not strictly increasing".into())));
                    }
                }
                next.declared_programs |= 1 << event.arg;
            }
            (Section::Programs, StartOfNotes) if self.declared_programs != 0 => next.section = Section::NoteBoundary,
            (Section::ExpectNotesMarker, StartOfNotes) => next.section = Section::NoteBoundary,
            (Section::NoteBoundary, Beat) => {
                if (event.arg as u32) < self.last_beat {
                    return Err(reject(Some(format!("beat {} before previous beat {}", event.arg, self.last_beat))));
                }
                next.last_beat = event.arg as u32;
                next.section = Section::InNote(NoteField::Position);
            }
            (Section::NoteBoundary, EndOfSong) => next.section = Section::Done,
            (Section::InNote(NoteField::Position), Position) => next.section = Section::InNote(NoteField::Instrument),
            (Section::InNote(NoteField::Instrument), Instrument) => next.section = Section::InNote(NoteField::Pitch),
            (Section::InNote(NoteField::Pitch), Pitch) => next.section = Section::InNote(NoteField::Duration),
            (Section::InNote(NoteField::Duration), Duration) => next.section = Section::NoteBoundary,
            (Section::Done, _) => return Err(reject(Some("token after end-of-song".into()))),
            (section, Tag) if !matches!(section, Section::ExpectSos | Section::ExpectTagsMarker) => {
                return Err(reject(Some("tag outside tag section".into())));
            }
            _ => return Err(reject(None)),
        }
        Ok(next)
    }

    /// Folds `advance` over a whole sequence.
    pub fn run(variant: Variant, events: &[Event]) -> Result<GrammarState, CodecError> {
        events.iter().enumerate().try_fold(GrammarState::new(variant), |s, (index, &e)| {
            s.advance(e).map_err(|rejection| CodecError::Grammar { index, rejection })
        })
    }
}

/// Marks the vocabulary ids the grammar accepts next.
///
/// With `enforce_condition` set and a declared instrument list, the
/// per-note instrument slot is restricted to the declared instruments.
/// Pad is never allowed.
pub fn allowed_mask(state: &GrammarState, vocab: &Vocabulary, enforce_condition: bool) -> Vec<bool> {
    let mut mask = vec![false; vocab.len()];
    let mut allow = |e: Event| {
        if let Some(id) = vocab.id(&e) {
            mask[id as usize] = true;
        }
    };
    let allow_range = |allow: &mut dyn FnMut(Event), kind: EventKind, from: u16| {
        let r = kind.arg_range();
        for a in from.max(r.start)..r.end {
            allow(Event::new(kind, a));
        }
    };
    let v = state.variant;
    match state.section {
        Section::ExpectSos => allow(Event::SOS),
        Section::ExpectTagsMarker => allow(Event::SOT),
        Section::Tags => {
            let from = highest_bit(state.declared_tags as u64).map_or(0, |t| t + 1);
            allow_range(&mut allow, EventKind::Tag, from);
            if state.declared_tags != 0 {
                allow(if v.has_programs() { Event::SOP } else { Event::SON });
            }
        }
        Section::ExpectProgramMarker => allow(Event::SOP),
        Section::Programs => {
            let from = highest_bit(state.declared_programs).map_or(0, |t| t + 1);
            allow_range(&mut allow, EventKind::Instrument, from);
            if state.declared_programs != 0 {
                allow(Event::SON);
            }
        }
        Section::ExpectNotesMarker => allow(Event::SON),
        Section::NoteBoundary => {
            allow_range(&mut allow, EventKind::Beat, state.last_beat as u16);
            allow(Event::EOS);
        }
        Section::InNote(NoteField::Position) => allow_range(&mut allow, EventKind::Position, 0),
        Section::InNote(NoteField::Instrument) => {
            let restrict = enforce_condition && v.has_programs() && state.declared_programs != 0;
            for i in EventKind::Instrument.arg_range() {
                if !restrict || state.declared_programs >> i & 1 == 1 {
                    allow(Event::new(EventKind::Instrument, i));
                }
            }
        }
        Section::InNote(NoteField::Pitch) => allow_range(&mut allow, EventKind::Pitch, 0),
        Section::InNote(NoteField::Duration) => allow_range(&mut allow, EventKind::Duration, 0),
        Section::Done => {}
    }
    mask
}

/// The prefix through `start-of-notes` for the given condition lists.
/// Lists are sorted and deduplicated.
pub fn prefix_events(variant: Variant, tags: &[u8], programs: &[u8]) -> Result<Vec<Event>, CodecError> {
    let mut tags = tags.to_vec();
    tags.sort_unstable();
    tags.dedup();
    let mut programs = programs.to_vec();
    programs.sort_unstable();
    programs.dedup();

    let mut out = vec![Event::SOS];
    if variant.has_tags() {
        if tags.is_empty() {
            return Err(CodecError::MissingGenre);
        }
        out.push(Event::SOT);
        out.extend(tags.iter().map(|&t| Event::tag(t)));
    }
    if variant.has_programs() {
        if programs.is_empty() {
            return Err(CodecError::MissingInstruments);
        }
        out.push(Event::SOP);
        out.extend(programs.iter().map(|&p| Event::instrument(p)));
    }
    out.push(Event::SON);
    Ok(out)
}

fn check_normalized(song: &Song) -> Result<(), CodecError> {
    for &t in &song.genre_tags {
        if t as usize >= NUM_GENRES {
            return Err(CodecError::Unnormalized(format!("genre {t} out of range")));
        }
    }
    for track in &song.tracks {
        if track.program as usize >= NUM_INSTRUMENTS {
            return Err(CodecError::Unnormalized(format!("program {} out of range", track.program)));
        }
        for n in &track.notes {
            if n.beat() >= MAX_BEATS || n.pitch > 127 || !(1..=MAX_DURATION).contains(&n.duration) {
                return Err(CodecError::Unnormalized(format!(
                    "note (onset {}, pitch {}, duration {}) outside the representable range",
                    n.onset, n.pitch, n.duration
                )));
            }
        }
    }
    Ok(())
}

/// Encodes a normalized song (see [`quantize_and_sort`]).
pub fn encode(song: &Song, variant: Variant) -> Result<Vec<Event>, CodecError> {
    check_normalized(song)?;
    let mut out = prefix_events(variant, &song.genre_tags, &song.programs())?;
    for (program, note) in song.merged_notes() {
        out.push(Event::beat(note.beat()));
        out.push(Event::position(note.position()));
        out.push(Event::instrument(program));
        out.push(Event::pitch(note.pitch));
        out.push(Event::duration(note.duration));
    }
    out.push(Event::EOS);
    Ok(out)
}

/// Exact length of `encode(song, variant)` for a normalized song.
pub fn encoded_len(song: &Song, variant: Variant) -> usize {
    let tags = if variant.has_tags() { 1 + song.tags().len() } else { 0 };
    let programs = if variant.has_programs() { 1 + song.programs().len() } else { 0 };
    1 + tags + programs + 1 + 5 * song.note_count() + 1
}

/// Decodes an event sequence.
///
/// The sequence must parse under the variant grammar. A sequence that stops
/// early (no `end-of-song`) is accepted once it has reached the notes;
/// a trailing incomplete note group is dropped.
pub fn decode(events: &[Event], variant: Variant) -> Result<Song, CodecError> {
    let mut state = GrammarState::new(variant);
    let mut tags = Vec::new();
    let mut notes: Vec<(u8, Note)> = Vec::new();
    let mut pending: Vec<Event> = Vec::with_capacity(5);

    for (index, &e) in events.iter().enumerate() {
        let in_prefix = !matches!(state.section, Section::NoteBoundary | Section::InNote(_));
        state = state.advance(e).map_err(|rejection| CodecError::Grammar { index, rejection })?;
        match e.kind {
            EventKind::Tag => tags.push(e.arg as u8),
            EventKind::Instrument if in_prefix => {}
            EventKind::Beat | EventKind::Position | EventKind::Instrument | EventKind::Pitch => pending.push(e),
            EventKind::Duration => {
                let [beat, pos, instr, pitch] = pending[..] else { unreachable!("grammar orders note fields") };
                let onset = beat.arg as u32 * RESOLUTION + pos.arg as u32;
                let note = Note { onset, pitch: pitch.arg as u8, duration: e.arg as u32, velocity: DEFAULT_VELOCITY };
                notes.push((instr.arg as u8, note));
                pending.clear();
            }
            _ => {}
        }
    }
    if matches!(
        state.section,
        Section::ExpectSos
            | Section::ExpectTagsMarker
            | Section::Tags
            | Section::ExpectProgramMarker
            | Section::Programs
            | Section::ExpectNotesMarker
    ) {
        return Err(CodecError::TruncatedPrefix);
    }

    let mut by_program: Vec<Vec<Note>> = vec![Vec::new(); NUM_INSTRUMENTS];
    for (p, n) in notes {
        by_program[p as usize].push(n);
    }
    let tracks = by_program
        .into_iter()
        .enumerate()
        .filter(|(_, n)| !n.is_empty())
        .map(|(p, notes)| Track::new(p as u8, notes))
        .collect();
    let song = Song {
        tracks,
        has_metadata: !tags.is_empty(),
        genre_tags: tags,
        steps_per_measure: DEFAULT_STEPS_PER_MEASURE,
    };
    Ok(quantize_and_sort(&song).0)
}

/// What `decode(encode(song, variant), variant)` must return: the
/// normalized song with everything the variant does not tokenize reset to
/// its decode default (velocity, measure length, and the genre list for
/// variants without tags).
pub fn canonical_view(song: &Song, variant: Variant) -> Song {
    let (mut s, _) = quantize_and_sort(song);
    for t in &mut s.tracks {
        for n in &mut t.notes {
            n.velocity = DEFAULT_VELOCITY;
        }
    }
    if !variant.has_tags() {
        s.genre_tags.clear();
    }
    s.has_metadata = !s.genre_tags.is_empty();
    s.steps_per_measure = DEFAULT_STEPS_PER_MEASURE;
    s
}

/// Cuts an encoded sequence to at most `max_len` events at a note-group
/// boundary, keeping the whole condition prefix.
pub fn truncate_to_context(events: &[Event], max_len: usize) -> Vec<Event> {
    if events.len() <= max_len {
        return events.to_vec();
    }
    let prefix = events.iter().position(|e| *e == Event::SON).map_or(events.len(), |i| i + 1);
    if prefix >= max_len {
        return events[..prefix.min(events.len())].to_vec();
    }
    let groups = (max_len - prefix) / 5;
    events[..prefix + 5 * groups].to_vec()
}

/// Writes a token file: a `#vocab <fingerprint>` header, then one
/// space-separated id sequence per line.
pub fn write_token_file<W: Write>(mut w: W, vocab: &Vocabulary, sequences: &[Vec<TokenId>]) -> Result<(), CodecError> {
    let io = |e: std::io::Error| CodecError::Io(IoError(e));
    writeln!(w, "#vocab {:016x}", vocab.fingerprint()).map_err(io)?;
    for seq in sequences {
        let line: Vec<String> = seq.iter().map(|i| i.to_string()).collect();
        writeln!(w, "{}", line.join(" ")).map_err(io)?;
    }
    Ok(())
}

/// Reads a token file, checking its header against `vocab`.
pub fn read_token_file<R: BufRead>(r: R, vocab: &Vocabulary) -> Result<Vec<Vec<TokenId>>, CodecError> {
    let mut out = Vec::new();
    let mut saw_header = false;
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| CodecError::Io(IoError(e)))?;
        let n = i + 1;
        let err = |msg: String| CodecError::TokenFile { line: n, msg };
        if let Some(fp) = line.strip_prefix("#vocab ") {
            let fp = u64::from_str_radix(fp.trim(), 16).map_err(|e| err(e.to_string()))?;
            if fp != vocab.fingerprint() {
                return Err(err(format!("vocabulary {fp:016x} does not match {:016x}", vocab.fingerprint())));
            }
            saw_header = true;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        if !saw_header {
            return Err(err("missing `#vocab` header".into()));
        }
        let seq = line
            .split_whitespace()
            .map(|t| {
                let id: TokenId = t.parse().map_err(|_| err(format!("bad token `{t}`")))?;
                if id as usize >= vocab.len() {
                    return Err(err(format!("token {id} out of range")));
                }
                Ok(id)
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push(seq);
    }
    if !saw_header {
        return Err(CodecError::TokenFile { line: 0, msg: "missing `#vocab` header".into() });
    }
    Ok(out)
}
