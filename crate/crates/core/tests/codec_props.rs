mod common;

use commu::codec::{extract_chords, parse_binary, parse_text, to_binary, to_text};
use commu::vocab::Category;
use commu::*;
use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn decode_encode_is_bin_identity(s in arb_sample()) {
        prop_assert!(validate_sample(&s).is_empty());
        let tokens = encode(&s).unwrap();
        prop_assert!(validate_grammar(&tokens).is_valid());
        prop_assert_eq!(decode(&tokens).unwrap(), s.quantized());
    }

    #[test]
    fn encode_decode_is_identity(t in arb_tokens()) {
        prop_assert!(validate_grammar(&t).is_valid(), "{}", validate_grammar(&t));
        let s = decode(&t).unwrap();
        prop_assert_eq!(encode(&s).unwrap(), t);
    }

    #[test]
    fn emitted_positions_stay_on_grid(s in arb_sample()) {
        for t in encode(&s).unwrap() {
            if Category::Position.contains(t) {
                prop_assert!((432..=559).contains(&t));
            }
        }
    }

    #[test]
    fn chords_extracted_from_tokens(s in arb_sample()) {
        prop_assert_eq!(extract_chords(&encode(&s).unwrap()).unwrap(), s.chords);
    }

    #[test]
    fn text_and_binary_frames_roundtrip(ts in prop::collection::vec(arb_tokens(), 0..5)) {
        let text: String = ts.iter().map(|t| to_text(t) + "\n").collect();
        prop_assert_eq!(&parse_text(&text).unwrap(), &ts);
        prop_assert_eq!(&parse_binary(&to_binary(&ts)).unwrap(), &ts);
    }

    #[test]
    fn truncation_is_detected(t in arb_tokens(), cut in 0usize..1000) {
        let cut = cut % t.len();
        prop_assert!(!validate_grammar(&t[..cut]).is_valid());
    }

    #[test]
    fn sample_json_roundtrip(s in arb_sample()) {
        let json = serde_json::to_string(&s).unwrap();
        let back: Sample = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, s);
    }
}

#[test]
fn every_token_has_a_category() {
    for t in 0..VOCAB_SIZE as u16 {
        let cats = Category::of(t);
        if (653..=717).contains(&t) {
            assert_eq!(cats, vec![Category::MinVelocity, Category::MaxVelocity], "token {t}");
        } else {
            assert_eq!(cats.len(), 1, "token {t}: {cats:?}");
        }
    }
}

#[test]
fn chord_tokens_cover_all_symbols_once() {
    let mut seen = std::collections::BTreeSet::new();
    for c in ChordSymbol::all() {
        let t = commu::codec::chord_token(Some(c));
        assert!((196..=303).contains(&t));
        assert!(seen.insert(t));
    }
    assert_eq!(seen.len(), 108);
    assert_eq!(commu::codec::chord_token(None), 195);
}

#[test]
fn example_sample_json() {
    let json = r#"{
        "metadata": {"bpm": 120, "key": "aminor", "time_signature": "4/4",
            "pitch_range": "mid", "num_measures": 4, "instrument": "keyboard",
            "genre": "cinematic", "min_velocity": 40, "max_velocity": 90,
            "track_role": "main_melody", "rhythm": "standard"},
        "chords": [{"bar": 0, "position": 0, "chord": "Amin"},
                   {"bar": 2, "position": 64, "chord": "unknown"}],
        "notes": [{"bar": 0, "position": 0, "pitch": 69, "velocity": 64, "duration": 32}]
    }"#;
    let s: Sample = serde_json::from_str(json).unwrap();
    assert!(validate_sample(&s).is_empty());
    assert_eq!(s.chords[1].chord, None);
    let tokens = encode(&s).unwrap();
    assert_eq!(&tokens[..11], &[584, 623, 627, 634, 638, 642, 652, 674, 699, 720, 727]);
    assert_eq!(&tokens[11..], &[2, 432, 278, 432, 163, 72, 335, 2, 2, 496, 195, 2, 1]);
}
