//! Dense token-id space over events.
//!
//! Layout is fixed by section: pad, structural markers, beats, positions,
//! pitches, durations, instruments, tags. Sections a variant does not use are
//! left out, which shifts every later id, so events are always matched by
//! value (never by id) when two vocabularies meet.

use std::collections::HashMap;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::score::{MAX_BEATS, MAX_DURATION, NUM_GENRES, NUM_INSTRUMENTS, RESOLUTION};

pub type TokenId = u32;

pub const PAD_ID: TokenId = 0;
pub const VOCAB_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventKind {
    StartOfSong,
    StartOfTags,
    StartOfProgram,
    StartOfNotes,
    EndOfSong,
    Tag,
    Instrument,
    Beat,
    Position,
    Pitch,
    Duration,
}

impl EventKind {
    pub const ALL: [EventKind; 11] = [
        EventKind::StartOfSong,
        EventKind::StartOfTags,
        EventKind::StartOfProgram,
        EventKind::StartOfNotes,
        EventKind::EndOfSong,
        EventKind::Tag,
        EventKind::Instrument,
        EventKind::Beat,
        EventKind::Position,
        EventKind::Pitch,
        EventKind::Duration,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EventKind::StartOfSong => "start-of-song",
            EventKind::StartOfTags => "start-of-tags",
            EventKind::StartOfProgram => "start-of-program",
            EventKind::StartOfNotes => "start-of-notes",
            EventKind::EndOfSong => "end-of-song",
            EventKind::Tag => "tag",
            EventKind::Instrument => "instrument",
            EventKind::Beat => "beat",
            EventKind::Position => "position",
            EventKind::Pitch => "pitch",
            EventKind::Duration => "duration",
        }
    }

    pub fn is_structural(self) -> bool {
        matches!(
            self,
            EventKind::StartOfSong
                | EventKind::StartOfTags
                | EventKind::StartOfProgram
                | EventKind::StartOfNotes
                | EventKind::EndOfSong
        )
    }

    /// Valid argument range for this kind.
    pub fn arg_range(self) -> Range<u16> {
        match self {
            EventKind::Tag => 0..NUM_GENRES as u16,
            EventKind::Instrument => 0..NUM_INSTRUMENTS as u16,
            EventKind::Beat => 0..MAX_BEATS as u16,
            EventKind::Position => 0..RESOLUTION as u16,
            EventKind::Pitch => 0..128,
            EventKind::Duration => 1..MAX_DURATION as u16 + 1,
            _ => 0..1,
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown event kind `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Event {
    pub kind: EventKind,
    pub arg: u16,
}

impl Event {
    pub const SOS: Event = Event { kind: EventKind::StartOfSong, arg: 0 };
    pub const SOT: Event = Event { kind: EventKind::StartOfTags, arg: 0 };
    pub const SOP: Event = Event { kind: EventKind::StartOfProgram, arg: 0 };
    pub const SON: Event = Event { kind: EventKind::StartOfNotes, arg: 0 };
    pub const EOS: Event = Event { kind: EventKind::EndOfSong, arg: 0 };

    pub fn new(kind: EventKind, arg: u16) -> Self {
        Event { kind, arg }
    }

    pub fn tag(id: u8) -> Self {
        Event::new(EventKind::Tag, id as u16)
    }

    pub fn instrument(id: u8) -> Self {
        Event::new(EventKind::Instrument, id as u16)
    }

    pub fn beat(b: u32) -> Self {
        Event::new(EventKind::Beat, b as u16)
    }

    pub fn position(p: u32) -> Self {
        Event::new(EventKind::Position, p as u16)
    }

    pub fn pitch(p: u8) -> Self {
        Event::new(EventKind::Pitch, p as u16)
    }

    pub fn duration(d: u32) -> Self {
        Event::new(EventKind::Duration, d as u16)
    }

    pub fn is_valid(&self) -> bool {
        self.kind.arg_range().contains(&self.arg)
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.kind.is_structural() {
            f.write_str(self.kind.name())
        } else {
            write!(f, "{}({})", self.kind.name(), self.arg)
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum VocabError {
    #[error("vocabulary shrink not supported: {0} is missing from the target vocabulary")]
    Shrink(Event),
    #[error("token id {id} out of range for vocabulary of size {size}")]
    UnknownId { id: TokenId, size: usize },
    #[error("{0} is not in the vocabulary")]
    UnknownEvent(Event),
    #[error("vocabulary file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("vocabulary fingerprint mismatch: header says {expected:016x}, contents hash to {actual:016x}")]
    Fingerprint { expected: u64, actual: u64 },
}

/// Bijection between events and dense token ids. Id 0 is padding.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    entries: Vec<Option<Event>>,
    index: HashMap<Event, TokenId>,
    sections: HashMap<EventKind, Range<usize>>,
    fingerprint: u64,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl Eq for Vocabulary {}

const SECTION_ORDER: [EventKind; 6] = [
    EventKind::Beat,
    EventKind::Position,
    EventKind::Pitch,
    EventKind::Duration,
    EventKind::Instrument,
    EventKind::Tag,
];

/// Builds the vocabulary for a tag/instrument-list configuration.
///
/// Instrument events are always present because every note carries one;
/// `include_instruments` controls the start-of-program marker that opens a
/// prefix instrument list. `include_tags` controls tag events and the
/// start-of-tags marker.
pub fn build_vocab(include_tags: bool, include_instruments: bool) -> Vocabulary {
    let mut events = Vec::new();
    events.push(Event::SOS);
    if include_tags {
        events.push(Event::SOT);
    }
    if include_instruments {
        events.push(Event::SOP);
    }
    events.push(Event::SON);
    events.push(Event::EOS);
    for kind in SECTION_ORDER {
        if kind == EventKind::Tag && !include_tags {
            continue;
        }
        events.extend(kind.arg_range().map(|a| Event::new(kind, a)));
    }
    Vocabulary::from_events(events).expect("built-in layout has no duplicates")
}

impl Vocabulary {
    /// Builds a vocabulary from events in id order, starting at id 1.
    pub fn from_events(events: Vec<Event>) -> Result<Self, VocabError> {
        let mut entries = Vec::with_capacity(events.len() + 1);
        entries.push(None);
        let mut index = HashMap::new();
        for e in events {
            if !e.is_valid() {
                return Err(VocabError::Parse { line: entries.len(), msg: format!("argument out of range in {e}") });
            }
            if index.insert(e, entries.len() as TokenId).is_some() {
                return Err(VocabError::Parse { line: entries.len(), msg: format!("duplicate {e}") });
            }
            entries.push(Some(e));
        }

        let mut sections: HashMap<EventKind, Range<usize>> = HashMap::new();
        for (id, e) in entries.iter().enumerate() {
            if let Some(e) = e {
                sections
                    .entry(e.kind)
                    .and_modify(|r| {
                        r.start = r.start.min(id);
                        r.end = r.end.max(id + 1);
                    })
                    .or_insert(id..id + 1);
            }
        }

        let mut v = Vocabulary { entries, index, sections, fingerprint: 0 };
        v.fingerprint = v.compute_fingerprint();
        Ok(v)
    }

    fn compute_fingerprint(&self) -> u64 {
        let mut hasher = Sha256::new();
        hasher.update(VOCAB_FORMAT_VERSION.to_le_bytes());
        for line in self.body_lines() {
            hasher.update(line.as_bytes());
            hasher.update(b"\n");
        }
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn version(&self) -> u32 {
        VOCAB_FORMAT_VERSION
    }

    /// Event at `id`; `None` for the pad id or out-of-range ids.
    pub fn event(&self, id: TokenId) -> Option<Event> {
        self.entries.get(id as usize).copied().flatten()
    }

    pub fn entries(&self) -> &[Option<Event>] {
        &self.entries
    }

    pub fn id(&self, event: &Event) -> Option<TokenId> {
        self.index.get(event).copied()
    }

    pub fn contains(&self, event: &Event) -> bool {
        self.index.contains_key(event)
    }

    /// Ids held by one event kind, or `None` if the kind is absent.
    ///
    /// When the section is contiguous with ascending args (always true for
    /// [`build_vocab`]) this is a dense id range.
    pub fn section(&self, kind: EventKind) -> Option<Range<usize>> {
        self.sections.get(&kind).cloned()
    }

    pub fn encode(&self, events: &[Event]) -> Result<Vec<TokenId>, VocabError> {
        events.iter().map(|e| self.id(e).ok_or(VocabError::UnknownEvent(*e))).collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> Result<Vec<Event>, VocabError> {
        ids.iter()
            .map(|&id| self.event(id).ok_or(VocabError::UnknownId { id, size: self.len() }))
            .collect()
    }

    fn body_lines(&self) -> impl Iterator<Item = String> + '_ {
        self.entries.iter().enumerate().map(|(id, e)| match e {
            None => format!("{id} pad 0"),
            Some(e) => format!("{id} {} {}", e.kind.name(), e.arg),
        })
    }

    /// Text form: a header comment with version and fingerprint, then one
    /// `<id> <kind> <arg>` line per id.
    pub fn to_text(&self) -> String {
        let mut out = format!("# condmusic-vocab v{} fingerprint {:016x}\n", VOCAB_FORMAT_VERSION, self.fingerprint);
        for line in self.body_lines() {
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, VocabError> {
        let mut declared = None;
        let mut events = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |msg: String| VocabError::Parse { line, msg };
            let l = raw.trim();
            if l.is_empty() {
                continue;
            }
            if let Some(rest) = l.strip_prefix('#') {
                if let Some(hex) = rest.split_whitespace().skip_while(|w| *w != "fingerprint").nth(1) {
                    declared = Some(u64::from_str_radix(hex, 16).map_err(|e| err(e.to_string()))?);
                }
                continue;
            }
            let parts: Vec<&str> = l.split_whitespace().collect();
            let [id, kind, arg] = parts[..] else {
                return Err(err(format!("expected `<id> <kind> <arg>`, got `{l}`")));
            };
            let id: usize = id.parse().map_err(|_| err(format!("bad id `{id}`")))?;
            let expected_id = events.len();
            if id != expected_id {
                return Err(err(format!("ids must be dense: expected {expected_id}, got {id}")));
            }
            if kind == "pad" {
                if id != 0 {
                    return Err(err("pad must be id 0".into()));
                }
                events.push(None);
                continue;
            }
            let kind: EventKind = kind.parse().map_err(err)?;
            let arg: u16 = arg.parse().map_err(|_| err(format!("bad arg `{arg}`")))?;
            events.push(Some(Event::new(kind, arg)));
        }
        if events.first() != Some(&None) {
            return Err(VocabError::Parse { line: 1, msg: "id 0 must be pad".into() });
        }
        let v = Vocabulary::from_events(events.into_iter().skip(1).map(|e| e.expect("only id 0 is pad")).collect())?;
        if let Some(expected) = declared {
            if expected != v.fingerprint {
                return Err(VocabError::Fingerprint { expected, actual: v.fingerprint });
            }
        }
        Ok(v)
    }
}

/// For each target id, the base id carrying the same event, or `None` for
/// events the base vocabulary has never seen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharedIdMap {
    map: Vec<Option<TokenId>>,
}

impl SharedIdMap {
    pub fn base_id(&self, target_id: TokenId) -> Option<TokenId> {
        self.map.get(target_id as usize).copied().flatten()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (TokenId, Option<TokenId>)> + '_ {
        self.map.iter().enumerate().map(|(i, m)| (i as TokenId, *m))
    }

    /// Target ids with no counterpart in the base vocabulary.
    pub fn new_ids(&self) -> Vec<TokenId> {
        self.iter().filter(|(_, b)| b.is_none()).map(|(t, _)| t).collect()
    }
}

/// Maps a base vocabulary into a larger target vocabulary by event value.
pub fn extend_vocab(base: &Vocabulary, target: &Vocabulary) -> Result<SharedIdMap, VocabError> {
    if let Some(missing) = base.entries.iter().flatten().find(|e| !target.contains(e)) {
        return Err(VocabError::Shrink(*missing));
    }
    let map = target
        .entries
        .iter()
        .map(|e| match e {
            None => Some(PAD_ID),
            Some(e) => base.id(e),
        })
        .collect();
    Ok(SharedIdMap { map })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(include_tags: bool, include_instruments: bool) -> usize {
        // enumerate rather than trust the arithmetic in build_vocab
        let mut n = 1; // pad
        n += 3 + include_tags as usize + include_instruments as usize;
        for k in [EventKind::Beat, EventKind::Position, EventKind::Pitch, EventKind::Duration, EventKind::Instrument] {
            n += k.arg_range().len();
        }
        if include_tags {
            n += EventKind::Tag.arg_range().len();
        }
        n
    }

    #[test]
    fn sizes_follow_layout() {
        assert_eq!(build_vocab(true, true).len(), 486);
        assert_eq!(build_vocab(false, false).len(), 464);
        assert_eq!(build_vocab(false, true).len(), 465);
        assert_eq!(build_vocab(true, false).len(), 485);
        for t in [false, true] {
            for i in [false, true] {
                assert_eq!(build_vocab(t, i).len(), count(t, i));
            }
        }
    }

    #[test]
    fn markers_follow_sections() {
        let v = build_vocab(false, true);
        assert!(v.contains(&Event::SOP));
        assert!(!v.contains(&Event::SOT));
        assert!(!v.contains(&Event::tag(0)));
        assert!(v.contains(&Event::instrument(63)));
    }

    #[test]
    fn ids_round_trip_and_pad_is_zero() {
        let v = build_vocab(true, true);
        assert_eq!(v.event(PAD_ID), None);
        for id in 1..v.len() as TokenId {
            let e = v.event(id).unwrap();
            assert_eq!(v.id(&e), Some(id));
        }
        assert_eq!(v.event(1), Some(Event::SOS));
        let beats = v.section(EventKind::Beat).unwrap();
        assert_eq!(beats, 6..70);
    }

    #[test]
    fn fingerprints_are_stable_and_distinct() {
        assert_eq!(build_vocab(true, false).fingerprint(), build_vocab(true, false).fingerprint());
        let fps: std::collections::HashSet<u64> =
            [(false, false), (false, true), (true, false), (true, true)].iter().map(|&(t, i)| build_vocab(t, i).fingerprint()).collect();
        assert_eq!(fps.len(), 4);
    }

    #[test]
    fn text_round_trip() {
        let v = build_vocab(true, true);
        let text = v.to_text();
        assert!(text.lines().nth(1) == Some("0 pad 0"));
        assert!(text.contains("\n6 beat 0\n"));
        let back = Vocabulary::from_text(&text).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.fingerprint(), v.fingerprint());

        let tampered = text.replace("6 beat 0", "6 beat 1");
        assert!(Vocabulary::from_text(&tampered).is_err());
    }

    #[test]
    fn extension_from_unconditional_to_full() {
        let base = build_vocab(false, false);
        let target = build_vocab(true, true);
        let map = extend_vocab(&base, &target).unwrap();
        let new: Vec<Event> = map.new_ids().iter().map(|&i| target.event(i).unwrap()).collect();
        let mut expected = vec![Event::SOT, Event::SOP];
        expected.extend((0..20).map(Event::tag));
        assert_eq!(new, expected);
        for (t, b) in map.iter() {
            if let Some(b) = b {
                assert_eq!(target.event(t), base.event(b));
            }
        }
    }

    #[test]
    fn identity_extension_and_shrink_error() {
        let v = build_vocab(true, false);
        let map = extend_vocab(&v, &v).unwrap();
        assert!(map.new_ids().is_empty());
        assert!(map.iter().all(|(t, b)| b == Some(t)));

        let err = extend_vocab(&build_vocab(true, true), &build_vocab(false, false)).unwrap_err();
        assert!(err.to_string().contains("vocabulary shrink not supported"));
    }

    #[test]
    fn extension_matches_by_value_not_position() {
        let base = build_vocab(false, false);
        let mut events: Vec<Event> = base.entries().iter().flatten().copied().collect();
        events.reverse();
        let permuted = Vocabulary::from_events(events).unwrap();
        let target = build_vocab(true, true);
        let a = extend_vocab(&base, &target).unwrap();
        let b = extend_vocab(&permuted, &target).unwrap();
        assert_eq!(a.new_ids(), b.new_ids());
        assert_ne!(a, b);
    }
}
