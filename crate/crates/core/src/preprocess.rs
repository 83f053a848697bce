//! Corpus construction: key/tempo augmentation and the slice, chunk, parse
//! pipeline that turns arbitrary MIDI files into fixed-length samples.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{encode, to_text, EncodeError};
use crate::midi::{
    program_category, read_midi, KeySignatureEvent, MidiError, MidiFile, MidiTrackData,
    TimeSignatureEvent, PERCUSSION_CHANNEL,
};
use crate::types::*;

pub const BPM_OFFSETS: [i32; 5] = [-10, -5, 0, 5, 10];
pub const DEFAULT_GAP_BARS: u32 = 2;
/// Sample lengths tried longest first when splitting a chunk.
pub const PARSE_LENGTHS: [NumMeasures; 3] =
    [NumMeasures::Sixteen, NumMeasures::Eight, NumMeasures::Four];

/// Signed semitone shift from `from` to `to` with the smallest magnitude;
/// the tritone goes down.
pub fn transpose_delta(from: PitchClass, to: PitchClass) -> i32 {
    let up = (to.index() as i32 - from.index() as i32).rem_euclid(12);
    if up >= 6 {
        up - 12
    } else {
        up
    }
}

fn fold_pitch(pitch: i32) -> u8 {
    let mut p = pitch;
    while p < 0 {
        p += 12;
    }
    while p > Pitch::MAX as i32 {
        p -= 12;
    }
    p as u8
}

/// Shifts key, chord roots and pitches by `semitones`. Pitches that leave
/// 0..=127 are folded back by octaves.
pub fn transpose_sample(s: &Sample, semitones: i32) -> Sample {
    let mut out = s.clone();
    out.metadata.key = s.metadata.key.map(|k| k.transpose(semitones));
    for c in &mut out.chords {
        c.chord = c.chord.map(|ch| ch.transpose(semitones));
    }
    let mut folded = false;
    for n in &mut out.notes {
        let raw = n.pitch.0 as i32 + semitones;
        let p = fold_pitch(raw);
        folded |= p as i32 != raw;
        n.pitch = Pitch(p);
    }
    if folded {
        out.notes.sort_by_key(Note::sort_key);
        out.notes.dedup_by_key(|n| n.sort_key());
    }
    out
}

/// All 60 tempo/key variants of a sample: five tempo offsets times twelve
/// target roots, mode preserved. Grid durations are unchanged; the tempo
/// token alone carries the change in absolute time. A sample with unknown
/// key is treated as rooted on C and keeps its unknown key.
pub fn augment(s: &Sample) -> Vec<Sample> {
    let source = s.metadata.key.map(|k| k.root).unwrap_or(PitchClass::new(0));
    let mut out = Vec::with_capacity(BPM_OFFSETS.len() * 12);
    for offset in BPM_OFFSETS {
        for target in PitchClass::ALL {
            let mut v = transpose_sample(s, transpose_delta(source, target));
            v.metadata.bpm = s.metadata.bpm.map(|b| b.offset(offset));
            out.push(v);
        }
    }
    out
}

/// A stretch of a MIDI file with a single key and time signature. Note
/// ticks are relative to `start_tick`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start_tick: u32,
    pub end_tick: u32,
    pub division: u16,
    pub bpm: f64,
    pub key: Option<Key>,
    pub time_signature: TimeSignatureEvent,
    pub tracks: Vec<MidiTrackData>,
}

impl Segment {
    pub fn bar_ticks(&self) -> u32 {
        self.time_signature.bar_ticks(self.division).max(1)
    }
}

/// Cuts the file at every key- or time-signature event. Segments without
/// notes are dropped.
pub fn slice(midi: &MidiFile) -> Vec<Segment> {
    let file_end = midi
        .tracks
        .iter()
        .flat_map(|t| t.notes.iter().map(|n| n.end().max(n.start + 1)))
        .max()
        .unwrap_or(0);
    let mut cuts: BTreeSet<u32> = midi
        .time_signatures
        .iter()
        .map(|e| e.tick)
        .chain(midi.key_signatures.iter().map(|e| e.tick))
        .filter(|&t| t > 0 && t < file_end)
        .collect();
    cuts.insert(0);
    cuts.insert(file_end);
    let bounds: Vec<u32> = cuts.into_iter().collect();

    let mut segments = Vec::new();
    for w in bounds.windows(2) {
        let (start, end) = (w[0], w[1]);
        let ts = midi
            .time_signatures
            .iter()
            .rev()
            .find(|e| e.tick <= start)
            .copied()
            .unwrap_or_else(|| TimeSignatureEvent::new(0, TimeSignature::FourFour));
        let key = midi
            .key_signatures
            .iter()
            .rev()
            .find(|e| e.tick <= start)
            .map(KeySignatureEvent::key);
        let bpm = midi
            .tempos
            .iter()
            .rev()
            .find(|e| e.tick <= start)
            .map(|e| e.bpm())
            .unwrap_or(120.0);
        let tracks: Vec<MidiTrackData> = midi
            .tracks
            .iter()
            .filter_map(|t| {
                let notes: Vec<_> = t
                    .notes
                    .iter()
                    .filter(|n| (start..end).contains(&n.start))
                    .map(|n| {
                        let mut n = *n;
                        n.duration = n.duration.min(end - n.start);
                        n.start -= start;
                        n
                    })
                    .collect();
                (!notes.is_empty()).then(|| MidiTrackData {
                    notes,
                    ..t.clone()
                })
            })
            .collect();
        if tracks.is_empty() {
            continue;
        }
        segments.push(Segment {
            start_tick: start,
            end_tick: end,
            division: midi.division,
            bpm,
            key,
            time_signature: ts,
            tracks,
        });
    }
    segments
}

/// A run of one track where notes keep appearing, quantized to the grid.
/// Note bars are relative to the chunk's first bar.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub bpm: f64,
    pub key: Option<Key>,
    pub time_signature: Option<TimeSignature>,
    pub program: u8,
    pub channel: u8,
    /// First bar of the chunk within its segment.
    pub start_bar: u32,
    pub num_bars: u32,
    pub notes: Vec<Note>,
}

fn ticks_to_grid(ticks: u32, bar_ticks: u32) -> u32 {
    ((ticks as u64 * GRID as u64 * 2 + bar_ticks as u64) / (2 * bar_ticks as u64)) as u32
}

/// Splits each track of a segment at silences of at least `gap_bars` bars,
/// trimming leading and trailing silence to bar boundaries.
pub fn chunk(segment: &Segment, gap_bars: u32) -> Vec<Chunk> {
    let bt = segment.bar_ticks();
    let gap_bars = gap_bars.max(1);
    let mut out = Vec::new();
    for track in &segment.tracks {
        let active: BTreeSet<u32> = track
            .notes
            .iter()
            .flat_map(|n| n.start / bt..=(n.end().max(n.start + 1) - 1) / bt)
            .collect();
        let mut runs: Vec<(u32, u32)> = Vec::new();
        for bar in active {
            match runs.last_mut() {
                Some((_, last)) if bar - *last - 1 < gap_bars => *last = bar,
                _ => runs.push((bar, bar)),
            }
        }
        for (first, last) in runs {
            let num_bars = last - first + 1;
            let origin = first * bt;
            let mut notes: Vec<Note> = track
                .notes
                .iter()
                .filter(|n| n.start / bt >= first && n.start / bt <= last)
                .map(|n| {
                    let rel = n.start - origin;
                    let mut bar = rel / bt;
                    let mut position = ticks_to_grid(rel % bt, bt);
                    if position >= GRID {
                        bar += 1;
                        position = 0;
                    }
                    if bar >= num_bars {
                        bar = num_bars - 1;
                        position = GRID - 1;
                    }
                    Note {
                        bar,
                        position: position as u8,
                        pitch: Pitch(n.pitch.min(Pitch::MAX)),
                        velocity: Velocity(n.velocity.min(Velocity::MAX)),
                        duration: ticks_to_grid(n.duration, bt).clamp(1, GRID) as u8,
                    }
                })
                .collect();
            notes.sort_by_key(Note::sort_key);
            notes.dedup_by_key(|n| n.sort_key());
            out.push(Chunk {
                bpm: segment.bpm,
                key: segment.key,
                time_signature: segment.time_signature.signature(),
                program: track.program,
                channel: track.channel,
                start_bar: first,
                num_bars,
                notes,
            });
        }
    }
    out
}

/// Metadata derivable from the notes themselves. Fields that need human
/// judgement (genre, track role, rhythm) are left unknown.
fn derive_metadata(chunk: &Chunk, ts: TimeSignature, length: NumMeasures, notes: &[Note]) -> MetadataSet {
    let mean = notes.iter().map(|n| n.pitch.0 as f64).sum::<f64>() / notes.len() as f64;
    let instrument = if chunk.channel == PERCUSSION_CHANNEL {
        Instrument::Percussion
    } else {
        program_category(chunk.program)
    };
    MetadataSet {
        bpm: Some(Bpm::quantize(chunk.bpm)),
        key: chunk.key,
        time_signature: Some(ts),
        pitch_range: Some(PitchRange::classify(mean)),
        num_measures: length,
        instrument: Some(instrument),
        genre: None,
        min_velocity: notes.iter().map(|n| n.velocity).min(),
        max_velocity: notes.iter().map(|n| n.velocity).max(),
        track_role: None,
        rhythm: None,
    }
}

/// Greedily splits a chunk into 16-, 8- and 4-bar samples; a remainder
/// under four bars is dropped. Keyswitch notes are removed and windows left
/// without notes are skipped.
pub fn parse_bars(chunk: &Chunk) -> Vec<Sample> {
    let Some(ts) = chunk.time_signature else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut start = 0;
    while let Some(len) = PARSE_LENGTHS
        .iter()
        .copied()
        .find(|l| l.bars() <= chunk.num_bars - start)
    {
        let end = start + len.bars();
        let notes: Vec<Note> = chunk
            .notes
            .iter()
            .filter(|n| (start..end).contains(&n.bar) && !n.velocity.is_keyswitch())
            .map(|n| Note {
                bar: n.bar - start,
                ..*n
            })
            .collect();
        if !notes.is_empty() {
            out.push(Sample {
                metadata: derive_metadata(chunk, ts, len, &notes),
                chords: Vec::new(),
                notes,
            });
        }
        start = end;
    }
    out
}

/// slice, chunk and parse over one MIDI file.
pub fn ingest_midi(midi: &MidiFile, gap_bars: u32) -> Vec<Sample> {
    slice(midi)
        .iter()
        .flat_map(|seg| chunk(seg, gap_bars))
        .flat_map(|c| parse_bars(&c))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestManifest {
    pub input_glob: String,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub augment: bool,
    #[serde(default = "default_gap")]
    pub gap_bars: u32,
}

fn default_gap() -> u32 {
    DEFAULT_GAP_BARS
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("bad input pattern {pattern:?}: {message}")]
    Pattern { pattern: String, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Midi { path: PathBuf, source: MidiError },
    #[error("{}: {source}", path.display())]
    Encode { path: PathBuf, source: EncodeError },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestSummary {
    pub files: usize,
    pub samples: usize,
    pub outputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// Writes `contents` to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir
        .unwrap_or(Path::new("."))
        .join(format!(".{name}.tmp-{}", std::process::id()));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })
}

/// Runs the ingest pipeline. Files are processed in parallel; outputs are
/// ordered by input path, so results do not depend on scheduling.
pub fn run_ingest(manifest: &IngestManifest) -> Result<IngestSummary, PipelineError> {
    let pattern_err = |message: String| PipelineError::Pattern {
        pattern: manifest.input_glob.clone(),
        message,
    };
    let mut paths: Vec<PathBuf> = glob::glob(&manifest.input_glob)
        .map_err(|e| pattern_err(e.to_string()))?
        .collect::<Result<_, _>>()
        .map_err(|e| pattern_err(e.to_string()))?;
    paths.sort();

    let per_file: Vec<(PathBuf, Vec<Sample>, Vec<String>)> = paths
        .par_iter()
        .map(|path| {
            let bytes = std::fs::read(path).map_err(|source| PipelineError::Io {
                path: path.clone(),
                source,
            })?;
            let midi = read_midi(&bytes).map_err(|source| PipelineError::Midi {
                path: path.clone(),
                source,
            })?;
            let mut samples = ingest_midi(&midi, manifest.gap_bars);
            if manifest.augment {
                samples = samples.iter().flat_map(augment).collect();
            }
            let warnings = midi
                .warnings
                .iter()
                .map(|w| format!("{}: {w}", path.display()))
                .collect();
            Ok((path.clone(), samples, warnings))
        })
        .collect::<Result<_, PipelineError>>()?;

    let out_dir = &manifest.output_dir;
    std::fs::create_dir_all(out_dir).map_err(|source| PipelineError::Io {
        path: out_dir.clone(),
        source,
    })?;
    let mut summary = IngestSummary {
        files: paths.len(),
        ..Default::default()
    };
    for (path, samples, warnings) in per_file {
        summary.warnings.extend(warnings);
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "input".into());
        for (i, sample) in samples.iter().enumerate() {
            let tokens = encode(sample).map_err(|source| PipelineError::Encode {
                path: path.clone(),
                source,
            })?;
            let base = out_dir.join(format!("{stem}_{i:05}"));
            let json_path = base.with_extension("json");
            let tok_path = base.with_extension("tok");
            let json = serde_json::to_vec_pretty(sample).expect("samples serialize");
            for (p, data) in [(&json_path, json), (&tok_path, (to_text(&tokens) + "\n").into_bytes())] {
                write_atomic(p, &data).map_err(|source| PipelineError::Io {
                    path: p.clone(),
                    source,
                })?;
            }
            summary.outputs.push(json_path);
            summary.samples += 1;
        }
    }
    Ok(summary)
}
