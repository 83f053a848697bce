mod common;

use commu::combiner::combine;
use commu::midi::{read_midi, sample_to_ticks, MidiNote};
use commu::*;
use common::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

/// Samples sharing everything the combiner checks, with random roles,
/// instruments and notes.
fn compatible_set(seed: u64, n: usize) -> Vec<Sample> {
    let mut r = rng(seed);
    let base = random_metadata(&mut r, NumMeasures::Eight);
    let chords = random_progression(&mut r, 8, 6);
    (0..n)
        .map(|_| {
            let mut m = random_metadata(&mut r, NumMeasures::Eight);
            m.bpm = base.bpm;
            m.key = base.key;
            m.time_signature = base.time_signature;
            if r.random::<f64>() < 0.3 {
                // repeated roles exercise the content tie-break
                m.track_role = base.track_role;
            }
            Sample {
                metadata: m,
                chords: chords.clone(),
                notes: random_notes(&mut r, 8, 20, 0..=127),
            }
        })
        .collect()
}

/// Note-on and note-off events. Overlapping notes of one pitch can be
/// re-paired on read, so events rather than notes are what must survive.
fn events(notes: &[MidiNote]) -> Vec<(u32, bool, u8, u8)> {
    let mut out: Vec<_> = notes
        .iter()
        .flat_map(|n| [(n.start, true, n.pitch, n.velocity), (n.start + n.duration, false, n.pitch, 0)])
        .collect();
    out.sort();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn output_ignores_input_order(seed in any::<u64>(), n in 1usize..7) {
        let set = compatible_set(seed, n);
        let a = combine(&set, 480, false).unwrap();
        let mut shuffled = set.clone();
        shuffled.shuffle(&mut rng(seed ^ 1));
        let b = combine(&shuffled, 480, false).unwrap();
        prop_assert_eq!(a.midi, b.midi);
    }

    #[test]
    fn every_note_traces_to_its_source(seed in any::<u64>(), n in 1usize..7) {
        let set = compatible_set(seed, n);
        let out = combine(&set, 480, false).unwrap();
        let file = read_midi(&out.midi).unwrap();
        prop_assert_eq!(out.manifest.tracks.len(), set.len());
        let mut sources: Vec<usize> = out.manifest.tracks.iter().map(|t| t.source).collect();
        sources.sort();
        prop_assert_eq!(sources, (0..set.len()).collect::<Vec<_>>());
        // every sample gets its own track, so tracks and samples pair up
        // one to one through the manifest
        prop_assert_eq!(file.tracks.len(), set.len());
        for (track, entry) in file.tracks.iter().zip(&out.manifest.tracks) {
            prop_assert_eq!(track.notes.len(), entry.note_count);
            let want = sample_to_ticks(&set[entry.source], 480).notes;
            prop_assert_eq!(events(&track.notes), events(&want));
            prop_assert_eq!(&track.name, &entry.name);
        }
    }
}
