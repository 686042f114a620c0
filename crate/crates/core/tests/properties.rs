mod common;

use condmusic::codec::{allowed_mask, canonical_view, decode, encode, encoded_len, read_token_file, truncate_to_context, write_token_file, GrammarState, Variant};
use condmusic::dataset::{assign_split, song_from_file, song_to_file, SplitName};
use condmusic::metrics::{aggregate, groove_consistency, pitch_class_entropy, scale_consistency};
use condmusic::neural::lr_at;
use condmusic::score::{quantize_and_sort, validate_song, Note, Song, Track};
use condmusic::tables::CanonicalTables;
use condmusic::vocab::{Event, Vocabulary};
use proptest::prelude::*;

fn arb_note() -> impl Strategy<Value = Note> {
    (0u32..900, 0u8..128, 1u32..300, 1u8..128).prop_map(|(onset, pitch, duration, velocity)| Note { onset, pitch, duration, velocity })
}

fn arb_song() -> impl Strategy<Value = Song> {
    let track = (0u8..64, prop::collection::vec(arb_note(), 0..12)).prop_map(|(p, notes)| Track::new(p, notes));
    (prop::collection::vec(track, 0..4), prop::collection::vec(0u8..20, 0..4)).prop_map(|(tracks, tags)| {
        let s = Song::new(tracks);
        if tags.is_empty() {
            s
        } else {
            s.with_genres(tags)
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn normalization_is_idempotent(song in arb_song()) {
        let once = quantize_and_sort(&song).0;
        prop_assert_eq!(quantize_and_sort(&once).0, once.clone());
        prop_assert!(validate_song(&once).is_empty());
    }

    #[test]
    fn normalization_keeps_pitch_and_velocity(song in arb_song()) {
        let (out, report) = quantize_and_sort(&song);
        let key = |s: &Song| {
            let mut v: Vec<(u8, u8, u8)> = s.tracks.iter().flat_map(|t| t.notes.iter().filter(|n| n.onset < 768).map(move |n| (t.program, n.pitch, n.velocity))).collect();
            v.sort();
            v
        };
        prop_assert_eq!(key(&out), key(&song));
        prop_assert_eq!(out.note_count() + report.dropped_notes, song.note_count());
    }

    #[test]
    fn codec_round_trip(song in arb_song()) {
        let song = quantize_and_sort(&song).0;
        for v in Variant::ALL {
            match encode(&song, v) {
                Ok(events) => {
                    prop_assert_eq!(events.len(), encoded_len(&song, v));
                    prop_assert!(GrammarState::run(v, &events).unwrap().is_done());
                    prop_assert_eq!(decode(&events, v).unwrap(), canonical_view(&song, v));
                }
                Err(_) => prop_assert!((v.has_tags() && song.genre_tags.is_empty()) || (v.has_programs() && song.tracks.is_empty())),
            }
        }
    }

    #[test]
    fn truncation_keeps_prefix_and_whole_groups(song in arb_song(), max_len in 2usize..80) {
        let song = quantize_and_sort(&song).0;
        let events = encode(&song, Variant::Uncond).unwrap();
        let cut = truncate_to_context(&events, max_len);
        prop_assert!(cut.len() <= max_len.max(2));
        prop_assert!(events.starts_with(&cut));
        let decoded = decode(&cut, Variant::Uncond).unwrap();
        prop_assert!(decoded.note_count() <= song.note_count());
    }

    #[test]
    fn mask_agrees_with_advance(song in arb_song(), cut in 0usize..200, variant_ix in 0usize..4, enforce: bool) {
        let v = Variant::ALL[variant_ix];
        let song = quantize_and_sort(&song).0;
        if let Ok(events) = encode(&song, v) {
            let vocab = v.vocab();
            let state = GrammarState::run(v, &events[..cut.min(events.len())]).unwrap();
            let mask = allowed_mask(&state, &vocab, enforce);
            for (id, ev) in vocab.entries().iter().enumerate() {
                let ok = ev.is_some_and(|e| state.advance(e).is_ok());
                if enforce {
                    prop_assert!(!mask[id] || ok);
                } else {
                    prop_assert_eq!(mask[id], ok);
                }
            }
        }
    }

    #[test]
    fn token_file_round_trip(songs in prop::collection::vec(arb_song(), 0..5)) {
        let vocab = Variant::MmtI.vocab();
        let seqs: Vec<Vec<u32>> = songs
            .iter()
            .filter_map(|s| encode(&quantize_and_sort(s).0, Variant::MmtI).ok())
            .map(|e| vocab.encode(&e).unwrap())
            .collect();
        let mut buf = Vec::new();
        write_token_file(&mut buf, &vocab, &seqs).unwrap();
        prop_assert_eq!(read_token_file(&buf[..], &vocab).unwrap(), seqs);
    }

    #[test]
    fn json_round_trip(song in arb_song()) {
        let tables = CanonicalTables::builtin();
        let song = canonical_view(&song, Variant::MmtGi);
        let (back, _) = song_from_file(&song_to_file(&song, &tables), &tables).unwrap();
        prop_assert_eq!(back, song);
    }

    #[test]
    fn metrics_stay_in_range(song in arb_song()) {
        let song = quantize_and_sort(&song).0;
        if let Ok(h) = pitch_class_entropy(&song) {
            prop_assert!((0.0..=12f64.log2() + 1e-12).contains(&h));
            prop_assert!((h - common::oracle_entropy(&song).unwrap()).abs() <= 1e-9);
        }
        if let Ok(s) = scale_consistency(&song) {
            prop_assert!((7.0 / 12.0 - 1e-12..=1.0).contains(&s));
            prop_assert!((s - common::oracle_scale(&song).unwrap()).abs() <= 1e-9);
        }
        if let Ok(g) = groove_consistency(&song) {
            prop_assert!((0.0..=1.0).contains(&g));
            prop_assert!((g - common::oracle_groove(&song).unwrap()).abs() <= 1e-9);
        }
    }

    #[test]
    fn confidence_interval_formula(values in prop::collection::vec(-100.0f64..100.0, 2..40)) {
        let r = aggregate(&values).unwrap();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        prop_assert!((r.mean - mean).abs() < 1e-9);
        prop_assert!((r.ci95 - 1.96 * sd / n.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn lr_is_non_increasing(a in 0u64..300_000, b in 0u64..300_000, lr0 in 1e-6f64..1e-2) {
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(lr_at(hi, lr0, 100_000) <= lr_at(lo, lr0, 100_000));
        prop_assert!(lr_at(hi, lr0, 100_000) >= 0.1 * lr0 * (1.0 - 1e-12));
    }

    #[test]
    fn split_is_a_function_of_id_and_seed(id in "[a-z0-9_-]{1,24}", seed: u64) {
        let s = assign_split(&id, seed);
        prop_assert_eq!(s, assign_split(&id, seed));
        prop_assert!(matches!(s, SplitName::Train | SplitName::Valid | SplitName::Test));
    }

    #[test]
    fn vocab_text_round_trip(tags: bool, instruments: bool) {
        let v = condmusic::vocab::build_vocab(tags, instruments);
        let back = Vocabulary::from_text(&v.to_text()).unwrap();
        prop_assert_eq!(back.fingerprint(), v.fingerprint());
        prop_assert_eq!(back.entries(), v.entries());
    }
}

#[test]
fn every_grammar_prefix_has_a_continuation() {
    for v in Variant::ALL {
        let vocab = v.vocab();
        let prefix = condmusic::codec::prefix_events(v, &[0, 19], &[0, 63]).unwrap();
        let mut state = GrammarState::new(v);
        for e in prefix.iter().chain([Event::beat(63), Event::position(11), Event::instrument(63), Event::pitch(127), Event::duration(192)].iter()) {
            assert!(allowed_mask(&state, &vocab, true).iter().any(|&m| m));
            state = state.advance(*e).unwrap();
        }
        assert!(allowed_mask(&state, &vocab, true)[vocab.id(&Event::EOS).unwrap() as usize]);
    }
}
