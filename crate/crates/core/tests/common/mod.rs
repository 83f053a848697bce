//! Random data shared by the integration tests. Token-level generators are
//! written against the raw dictionary numbers, not the codec, so they can
//! serve as an independent check of it.
#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeSet;

use commu::midi::{category_program, write_midi, MidiNote, MidiTrackData};
use commu::*;
use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `None` 15% of the time.
fn maybe<T, R: Rng>(rng: &mut R, value: impl FnOnce(&mut R) -> T) -> Option<T> {
    (rng.random::<f64>() >= 0.15).then(|| value(rng))
}

pub fn random_metadata<R: Rng>(rng: &mut R, num_measures: NumMeasures) -> MetadataSet {
    let (mut lo, mut hi) = (rng.random_range(0..=127u8), rng.random_range(0..=127u8));
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
    }
    MetadataSet {
        bpm: maybe(rng, |r| Bpm(5 * r.random_range(1..=40))),
        key: maybe(rng, |r| Key::from_index(r.random_range(0..24)).unwrap()),
        time_signature: maybe(rng, |r| *TimeSignature::ALL.choose(r).unwrap()),
        pitch_range: maybe(rng, |r| *PitchRange::ALL.choose(r).unwrap()),
        num_measures,
        instrument: maybe(rng, |r| *Instrument::ALL.choose(r).unwrap()),
        genre: maybe(rng, |r| *Genre::ALL.choose(r).unwrap()),
        min_velocity: maybe(rng, |_| Velocity(lo)),
        max_velocity: maybe(rng, |_| Velocity(hi)),
        track_role: maybe(rng, |r| *TrackRole::ALL.choose(r).unwrap()),
        rhythm: maybe(rng, |r| *Rhythm::ALL.choose(r).unwrap()),
    }
}

pub fn random_chord<R: Rng>(rng: &mut R) -> ChordSymbol {
    ChordSymbol::from_index(rng.random_range(0..108)).unwrap()
}

pub fn random_progression<R: Rng>(rng: &mut R, bars: u32, max_len: usize) -> ChordProgression {
    let k = rng.random_range(0..=max_len);
    let points: BTreeSet<(u32, u8)> = (0..k)
        .map(|_| (rng.random_range(0..bars), rng.random_range(0..128u8)))
        .collect();
    points
        .into_iter()
        .map(|(bar, position)| ChordEvent {
            bar,
            position,
            chord: maybe(rng, random_chord),
        })
        .collect()
}

/// Notes with distinct (bar, position, pitch), no keyswitches.
pub fn random_notes<R: Rng>(rng: &mut R, bars: u32, max_len: usize, pitches: std::ops::RangeInclusive<u8>) -> Vec<Note> {
    let k = rng.random_range(0..=max_len);
    let keys: BTreeSet<(u32, u8, u8)> = (0..k)
        .map(|_| {
            (
                rng.random_range(0..bars),
                rng.random_range(0..128u8),
                rng.random_range(pitches.clone()),
            )
        })
        .collect();
    keys.into_iter()
        .map(|(bar, position, pitch)| Note {
            bar,
            position,
            pitch: Pitch(pitch),
            velocity: Velocity(rng.random_range(2..=127)),
            duration: rng.random_range(1..=128),
        })
        .collect()
}

pub fn random_sample<R: Rng>(rng: &mut R) -> Sample {
    let nm = *NumMeasures::ALL.choose(rng).unwrap();
    Sample {
        metadata: random_metadata(rng, nm),
        chords: random_progression(rng, nm.bars(), 8),
        notes: random_notes(rng, nm.bars(), 40, 0..=127),
    }
}

/// A grammar-valid sequence built straight from the dictionary table:
/// eleven metadata tokens, the bars, events in (position, chord first,
/// pitch) order, eos. Token 718 is left out because it is an alias that
/// never comes back out of the encoder.
pub fn random_tokens<R: Rng>(rng: &mut R) -> Vec<u16> {
    const META: [(u16, u16); 11] = [
        (560, 600),
        (601, 625),
        (626, 629),
        (630, 637),
        (638, 640),
        (641, 649),
        (650, 652),
        (653, 717),
        (653, 717),
        (719, 725),
        (726, 728),
    ];
    let mut out: Vec<u16> = META.iter().map(|&(a, b)| rng.random_range(a..=b)).collect();
    let bars = [4, 8, 16][(out[4] - 638) as usize];
    for _ in 0..bars {
        let mut bar = vec![2];
        let k = rng.random_range(0..=6);
        // (position, 0 = chord / 1 = note, pitch)
        let events: BTreeSet<(u16, u8, u16)> = (0..k)
            .map(|_| {
                if rng.random::<f64>() < 0.25 {
                    (rng.random_range(0..128), 0, 0)
                } else {
                    (rng.random_range(0..128), 1, rng.random_range(0..128))
                }
            })
            .collect();
        for (pos, kind, pitch) in events {
            bar.push(432 + pos);
            if kind == 0 {
                bar.push(rng.random_range(195..=303));
            } else {
                bar.push(rng.random_range(131..=194));
                bar.push(3 + pitch);
                bar.push(rng.random_range(304..=431));
            }
        }
        out.extend(bar);
    }
    out.push(1);
    out
}

pub fn arb_sample() -> impl Strategy<Value = Sample> {
    any::<u64>().prop_map(|seed| random_sample(&mut rng(seed)))
}

pub fn arb_tokens() -> impl Strategy<Value = Vec<u16>> {
    any::<u64>().prop_map(|seed| random_tokens(&mut rng(seed)))
}

/// One MIDI file with `tracks` instruments playing continuously for `bars`
/// bars of 4/4 at `bpm` in `key`, in quarter notes drawn from the scale.
pub fn synthetic_midi(seed: u64, tracks: &[Instrument], bars: u32, bpm: f64, key: Key, division: u16) -> Vec<u8> {
    let mut r = rng(seed);
    let scale = key.scale_pitch_classes();
    let quarter = division as u32;
    let data: Vec<MidiTrackData> = tracks
        .iter()
        .enumerate()
        .map(|(i, &inst)| {
            let octave_base = [60u8, 48, 72, 36][i % 4];
            let notes = (0..bars * 4)
                .map(|q| {
                    let pc = scale.choose(&mut r).unwrap().index();
                    MidiNote {
                        start: q * quarter,
                        duration: quarter,
                        pitch: octave_base + pc,
                        velocity: r.random_range(40..=100),
                    }
                })
                .collect();
            MidiTrackData {
                name: format!("{inst}"),
                channel: i as u8,
                program: category_program(inst),
                notes,
            }
        })
        .collect();
    write_midi(&data, bpm, TimeSignature::FourFour, Some(key), division)
}
