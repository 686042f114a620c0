//! Steps through the token grammar and prints which event kinds the mask
//! allows at each point.

use condmusic::codec::{allowed_mask, prefix_events, GrammarState, Variant};
use condmusic::vocab::Event;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let variant = Variant::MmtGi;
    let vocab = variant.vocab();
    let mut events = prefix_events(variant, &[2], &[0, 40])?;
    events.extend([Event::beat(0), Event::position(0), Event::instrument(40), Event::pitch(72), Event::duration(12), Event::EOS]);

    let mut state = GrammarState::new(variant);
    for e in &events {
        let mask = allowed_mask(&state, &vocab, true);
        let n = mask.iter().filter(|&&m| m).count();
        let kinds: Vec<&str> = state.expected_kinds().iter().map(|k| k.name()).collect();
        println!("{:<16} {:>4} allowed  [{}]", e.to_string(), n, kinds.join(", "));
        state = state.advance(*e)?;
    }
    assert!(state.is_done());

    // a note for an undeclared instrument is masked out when enforcing
    let state = GrammarState::run(variant, &events[..events.len() - 4])?;
    let piano = vocab.id(&Event::instrument(0)).unwrap() as usize;
    let organ = vocab.id(&Event::instrument(16)).unwrap() as usize;
    let mask = allowed_mask(&state, &vocab, true);
    println!("instrument(0) allowed: {}, instrument(16) allowed: {}", mask[piano], mask[organ]);
    println!("rejected: {}", GrammarState::run(variant, &[Event::SOS, Event::SON]).unwrap_err());
    Ok(())
}
