//! Merging role-tagged samples that share a harmonic context into one
//! multi-track MIDI file.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::midi::{sample_to_ticks, write_midi, MidiTrackData, PERCUSSION_CHANNEL};
use crate::types::*;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CompatibilityReport {
    pub mismatches: Vec<String>,
}

impl CompatibilityReport {
    pub fn is_compatible(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Bar of the first event where two progressions disagree.
fn first_chord_difference(a: &[ChordEvent], b: &[ChordEvent]) -> Option<u32> {
    let n = a.len().max(b.len());
    (0..n).find_map(|i| match (a.get(i), b.get(i)) {
        (Some(x), Some(y)) if x == y => None,
        (Some(x), Some(y)) => Some(x.bar.min(y.bar)),
        (Some(x), None) | (None, Some(x)) => Some(x.bar),
        (None, None) => None,
    })
}

/// Compares every sample against the first. Samples are compatible when
/// bpm, key, time signature, length and chord progression are all equal.
pub fn check_compatibility(samples: &[Sample]) -> CompatibilityReport {
    let mut report = CompatibilityReport::default();
    let Some(first) = samples.first() else {
        return report;
    };
    let a = &first.metadata;
    for (i, s) in samples.iter().enumerate().skip(1) {
        let b = &s.metadata;
        let mut note = |what: String| report.mismatches.push(format!("sample {i}: {what}"));
        if a.bpm != b.bpm {
            note("bpm mismatch".into());
        }
        if a.key != b.key {
            note("key mismatch".into());
        }
        if a.time_signature != b.time_signature {
            note("time signature mismatch".into());
        }
        if a.num_measures != b.num_measures {
            note("num_measures mismatch".into());
        }
        if let Some(bar) = first_chord_difference(&first.chords, &s.chords) {
            note(format!("chord mismatch at bar {bar}"));
        }
    }
    report
}

#[derive(Debug, Error)]
pub enum CombineError {
    #[error("nothing to combine")]
    Empty,
    #[error("incompatible samples: {}", .0.join("; "))]
    Incompatible(Vec<String>),
}

/// Where one output track came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestTrack {
    /// Index of the MIDI track chunk, counting the conductor chunk as 0.
    pub chunk: usize,
    pub name: String,
    pub channel: u8,
    pub program: u8,
    /// Position of the source in the caller's input list.
    pub source: usize,
    pub note_count: usize,
    pub metadata: MetadataSet,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub division: u16,
    pub bpm: u16,
    pub time_signature: String,
    pub key: String,
    pub num_measures: u32,
    pub forced: bool,
    pub warnings: Vec<String>,
    pub tracks: Vec<ManifestTrack>,
}

#[derive(Debug, Clone)]
pub struct Combined {
    pub midi: Vec<u8>,
    pub manifest: Manifest,
}

fn role_rank(role: Option<TrackRole>) -> usize {
    role.map_or(TrackRole::ALL.len(), |r| r.index() as usize)
}

/// Track order: role (enum order, unknown last), then the sample's JSON
/// form, then input position. The content key is what makes the output
/// independent of input order.
pub fn track_order(samples: &[Sample]) -> Vec<usize> {
    let keys: Vec<(usize, String)> = samples
        .iter()
        .map(|s| {
            (
                role_rank(s.metadata.track_role),
                serde_json::to_string(s).unwrap_or_default(),
            )
        })
        .collect();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&i, &j| keys[i].cmp(&keys[j]).then(i.cmp(&j)));
    order
}

/// Melodic channels in assignment order; percussion keeps channel 9.
fn melodic_channel(n: usize) -> u8 {
    let ch = (n % 15) as u8;
    if ch >= PERCUSSION_CHANNEL {
        ch + 1
    } else {
        ch
    }
}

/// One MIDI track per sample with shared tempo, meter and key taken from
/// the first track in output order. `force` skips the compatibility check.
pub fn combine(samples: &[Sample], division: u16, force: bool) -> Result<Combined, CombineError> {
    if samples.is_empty() {
        return Err(CombineError::Empty);
    }
    let report = check_compatibility(samples);
    if !report.is_compatible() && !force {
        return Err(CombineError::Incompatible(report.mismatches));
    }
    let order = track_order(samples);
    let lead = &samples[order[0]].metadata;
    let bpm = lead.bpm.map_or(120, |b| b.0);
    let ts = lead.time_signature.unwrap_or(TimeSignature::FourFour);

    let mut tracks: Vec<MidiTrackData> = Vec::with_capacity(samples.len());
    let mut manifest_tracks = Vec::with_capacity(samples.len());
    let mut melodic = 0;
    for (k, &i) in order.iter().enumerate() {
        let mut track = sample_to_ticks(&samples[i], division);
        if track.channel != PERCUSSION_CHANNEL {
            track.channel = melodic_channel(melodic);
            melodic += 1;
        }
        manifest_tracks.push(ManifestTrack {
            chunk: k + 1,
            name: track.name.clone(),
            channel: track.channel,
            program: track.program,
            source: i,
            note_count: track.notes.len(),
            metadata: samples[i].metadata.clone(),
        });
        tracks.push(track);
    }
    let roles: Vec<Option<TrackRole>> = samples.iter().map(|s| s.metadata.track_role).collect();
    let mut plan: BTreeMap<TrackRole, usize> = BTreeMap::new();
    for r in roles.into_iter().flatten() {
        *plan.entry(r).or_default() += 1;
    }
    let mut warnings = stack_plan(&plan);
    warnings.extend(report.mismatches);

    let midi = write_midi(&tracks, bpm as f64, ts, lead.key, division);
    Ok(Combined {
        midi,
        manifest: Manifest {
            division,
            bpm,
            time_signature: ts.to_string(),
            key: field_label_key(lead.key),
            num_measures: lead.num_measures.bars(),
            forced: force,
            warnings,
            tracks: manifest_tracks,
        },
    })
}

fn field_label_key(key: Option<Key>) -> String {
    key.map_or_else(|| "unknown".into(), |k| k.to_string())
}

/// Checks a composition plan against the one-main-melody convention.
/// Never fails; the result lists warnings.
pub fn stack_plan(plan: &BTreeMap<TrackRole, usize>) -> Vec<String> {
    match plan.get(&TrackRole::MainMelody).copied().unwrap_or(0) {
        0 => vec!["no main melody".into()],
        1 => vec![],
        _ => vec!["multiple main melodies".into()],
    }
}
