//! Objective evaluation: controllability of pitch, velocity and harmony,
//! chroma/groove diversity, and corpus note statistics.
//!
//! Keyswitch notes (velocity <= 1) are not music and are ignored by every
//! metric here.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::types::*;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("sample has no notes")]
    EmptyNotes,
    #[error("sample has no chord events")]
    NoChords,
    #[error("sample metadata lacks {0}")]
    MissingMetadata(&'static str),
    #[error("diversity needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("unknown metadata field {0:?}")]
    UnknownField(String),
}

/// Matched notes out of the notes considered.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub matched: usize,
    pub total: usize,
}

impl Counts {
    pub fn ratio(self) -> Result<f64, MetricError> {
        if self.total == 0 {
            return Err(MetricError::EmptyNotes);
        }
        Ok(self.matched as f64 / self.total as f64)
    }

    fn add(&mut self, other: Counts) {
        self.matched += other.matched;
        self.total += other.total;
    }
}

fn count(s: &Sample, pred: impl Fn(&Note) -> bool) -> Counts {
    let mut c = Counts::default();
    for n in s.musical_notes() {
        c.total += 1;
        c.matched += pred(n) as usize;
    }
    c
}

pub fn pitch_counts(s: &Sample) -> Result<Counts, MetricError> {
    let range = s
        .metadata
        .pitch_range
        .ok_or(MetricError::MissingMetadata("pitch_range"))?;
    Ok(count(s, |n| range.contains(n.pitch)))
}

/// Share of notes inside the pitch-range category's bounds.
pub fn controllability_pitch(s: &Sample) -> Result<f64, MetricError> {
    pitch_counts(s)?.ratio()
}

pub fn velocity_counts(s: &Sample) -> Result<Counts, MetricError> {
    let lo = s
        .metadata
        .min_velocity
        .ok_or(MetricError::MissingMetadata("min_velocity"))?;
    let hi = s
        .metadata
        .max_velocity
        .ok_or(MetricError::MissingMetadata("max_velocity"))?;
    Ok(count(s, |n| (lo..=hi).contains(&n.velocity)))
}

/// Share of notes whose velocity lies in `[min_velocity, max_velocity]`,
/// compared on raw values.
pub fn controllability_velocity(s: &Sample) -> Result<f64, MetricError> {
    velocity_counts(s)?.ratio()
}

/// A chord's span on the grid: active from its event until the next event
/// or the end of the sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChordSpan {
    pub start: u32,
    pub end: u32,
    pub chord: Option<ChordSymbol>,
}

pub fn chord_spans(s: &Sample) -> Vec<ChordSpan> {
    let end = s.grid_len();
    let mut spans: Vec<ChordSpan> = s
        .chords
        .iter()
        .map(|c| ChordSpan {
            start: c.onset(),
            end,
            chord: c.chord,
        })
        .collect();
    spans.sort_by_key(|s| s.start);
    for i in 1..spans.len() {
        spans[i - 1].end = spans[i].start;
    }
    spans
}

/// In scale, or a chord tone of every chord sounding under the note. A note
/// overlapping no chord (or an unknown chord) can only pass via the scale.
pub fn is_consonant(note: &Note, key: Key, spans: &[ChordSpan], sample_end: u32) -> bool {
    let pc = note.pitch.class();
    if key.contains(pc) {
        return true;
    }
    let (start, end) = (note.onset(), note.end().min(sample_end));
    let mut overlapping = spans.iter().filter(|s| s.start < end && s.end > start).peekable();
    overlapping.peek().is_some()
        && overlapping.all(|s| s.chord.is_some_and(|c| c.contains(pc)))
}

pub fn harmony_counts(s: &Sample) -> Result<Counts, MetricError> {
    let key = s.metadata.key.ok_or(MetricError::MissingMetadata("key"))?;
    if s.chords.is_empty() {
        return Err(MetricError::NoChords);
    }
    let spans = chord_spans(s);
    let end = s.grid_len();
    Ok(count(s, |n| is_consonant(n, key, &spans, end)))
}

/// Share of notes that are not dissonant against key and chords.
pub fn controllability_harmony(s: &Sample) -> Result<f64, MetricError> {
    harmony_counts(s)?.ratio()
}

/// Onset counts per pitch class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChromaVector(pub [f64; 12]);

/// Onset counts per in-bar grid position, summed over bars.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrooveVector(pub [f64; GRID as usize]);

impl ChromaVector {
    pub fn of(s: &Sample) -> Self {
        let mut v = [0.0; 12];
        for n in s.musical_notes() {
            v[n.pitch.class().index() as usize] += 1.0;
        }
        ChromaVector(v)
    }
}

impl GrooveVector {
    pub fn of(s: &Sample) -> Self {
        let mut v = [0.0; GRID as usize];
        for n in s.musical_notes() {
            v[n.position as usize % GRID as usize] += 1.0;
        }
        GrooveVector(v)
    }
}

/// Cosine similarity; two zero vectors are identical (1), one zero vector
/// is unrelated to anything (0).
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    match (na == 0.0, nb == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        // sqrt(na * nb) is exact for equal integer-count vectors, so
        // identical inputs give exactly 1
        _ => (dot / (na * nb).sqrt()).min(1.0),
    }
}

pub fn chroma_similarity(a: &Sample, b: &Sample) -> f64 {
    cosine(&ChromaVector::of(a).0, &ChromaVector::of(b).0)
}

pub fn groove_similarity(a: &Sample, b: &Sample) -> f64 {
    cosine(&GrooveVector::of(a).0, &GrooveVector::of(b).0)
}

/// Root mean square of the two dissimilarities.
pub fn distance_from_similarities(sim_chroma: f64, sim_groove: f64) -> f64 {
    (((1.0 - sim_chroma).powi(2) + (1.0 - sim_groove).powi(2)) / 2.0).sqrt()
}

pub fn distance(a: &Sample, b: &Sample) -> f64 {
    distance_from_similarities(chroma_similarity(a, b), groove_similarity(a, b))
}

/// Mean pairwise distance over all unordered pairs.
pub fn diversity(samples: &[Sample]) -> Result<f64, MetricError> {
    let n = samples.len();
    if n < 2 {
        return Err(MetricError::TooFewSamples(n));
    }
    let chroma: Vec<_> = samples.iter().map(ChromaVector::of).collect();
    let groove: Vec<_> = samples.iter().map(GrooveVector::of).collect();
    let mut sum = 0.0;
    // pairs in index order for reproducible summation
    for i in 0..n {
        for j in i + 1..n {
            sum += distance_from_similarities(
                cosine(&chroma[i].0, &chroma[j].0),
                cosine(&groove[i].0, &groove[j].0),
            );
        }
    }
    Ok(sum / (n * (n - 1) / 2) as f64)
}

/// Notes per bar.
pub fn note_density(s: &Sample) -> Result<f64, MetricError> {
    let n = s.musical_notes().count();
    if n == 0 {
        return Err(MetricError::EmptyNotes);
    }
    Ok(n as f64 / s.num_bars() as f64)
}

/// Mean note duration in grid units.
pub fn note_length(s: &Sample) -> Result<f64, MetricError> {
    let (sum, n) = s
        .musical_notes()
        .fold((0u64, 0usize), |(sum, n), note| (sum + note.duration as u64, n + 1));
    if n == 0 {
        return Err(MetricError::EmptyNotes);
    }
    Ok(sum as f64 / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub bin_width: f64,
    /// The last bin also collects everything above its range.
    pub counts: Vec<usize>,
}

impl Histogram {
    fn build(values: &[f64], bin_width: f64, bins: usize) -> Self {
        let mut counts = vec![0; bins];
        for v in values {
            let i = ((v / bin_width).floor().max(0.0) as usize).min(bins - 1);
            counts[i] += 1;
        }
        Histogram { bin_width, counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupStats {
    pub group: String,
    pub n: usize,
    pub density_mean: f64,
    pub density_std: f64,
    pub length_mean: f64,
    pub length_std: f64,
    pub density_histogram: Histogram,
    pub length_histogram: Histogram,
}

/// Counts of samples per (row value, column value) of two metadata fields.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cooccurrence {
    pub row_field: String,
    pub col_field: String,
    pub counts: BTreeMap<String, BTreeMap<String, usize>>,
}

impl Cooccurrence {
    pub fn row_sum(&self, row: &str) -> usize {
        self.counts.get(row).map_or(0, |r| r.values().sum())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub group_by: String,
    pub rows: Vec<GroupStats>,
    /// Samples left out for having no musical notes.
    pub skipped: usize,
    /// Co-occurrence of the grouping field with every other field.
    pub cooccurrence: Vec<Cooccurrence>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn check_field(field: &str) -> Result<(), MetricError> {
    if METADATA_FIELDS.contains(&field) {
        Ok(())
    } else {
        Err(MetricError::UnknownField(field.to_string()))
    }
}

pub fn cooccurrence(samples: &[Sample], row_field: &str, col_field: &str) -> Result<Cooccurrence, MetricError> {
    check_field(row_field)?;
    check_field(col_field)?;
    let mut counts: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for s in samples {
        let r = s.metadata.field_label(row_field).unwrap();
        let c = s.metadata.field_label(col_field).unwrap();
        *counts.entry(r).or_default().entry(c).or_default() += 1;
    }
    Ok(Cooccurrence {
        row_field: row_field.to_string(),
        col_field: col_field.to_string(),
        counts,
    })
}

/// Density and length statistics per value of a metadata field (population
/// standard deviation).
pub fn corpus_stats(samples: &[Sample], group_by: &str) -> Result<CorpusStats, MetricError> {
    check_field(group_by)?;
    let mut groups: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut used = Vec::new();
    let mut skipped = 0;
    for s in samples {
        match (note_density(s), note_length(s)) {
            (Ok(d), Ok(l)) => {
                let g = groups
                    .entry(s.metadata.field_label(group_by).unwrap())
                    .or_default();
                g.0.push(d);
                g.1.push(l);
                used.push(s.clone());
            }
            _ => skipped += 1,
        }
    }
    let rows = groups
        .into_iter()
        .map(|(group, (dens, lens))| {
            let (density_mean, density_std) = mean_std(&dens);
            let (length_mean, length_std) = mean_std(&lens);
            GroupStats {
                group,
                n: dens.len(),
                density_mean,
                density_std,
                length_mean,
                length_std,
                density_histogram: Histogram::build(&dens, 1.0, 17),
                length_histogram: Histogram::build(&lens, 8.0, 16),
            }
        })
        .collect();
    let cooccurrence = METADATA_FIELDS
        .iter()
        .filter(|f| **f != group_by)
        .map(|f| cooccurrence(&used, group_by, f))
        .collect::<Result<_, _>>()?;
    Ok(CorpusStats {
        group_by: group_by.to_string(),
        rows,
        skipped,
        cooccurrence,
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl CorpusStats {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,n,density_mean,density_std,length_mean,length_std\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                csv_field(&r.group),
                r.n,
                r.density_mean,
                r.density_std,
                r.length_mean,
                r.length_std
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleScores {
    pub id: String,
    pub cp: Option<f64>,
    pub cv: Option<f64>,
    pub ch: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupDiversity {
    pub group: String,
    pub n: usize,
    pub diversity: f64,
}

/// Pooled over all scored notes, in the column layout CP / CV / CH / D.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub cp: Option<f64>,
    pub cv: Option<f64>,
    pub ch: Option<f64>,
    pub diversity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub samples: Vec<SampleScores>,
    pub groups: Vec<GroupDiversity>,
    pub summary: Summary,
}

/// Groups sample indices by identical metadata, in first-seen order.
pub fn group_by_metadata(samples: &[Sample]) -> Vec<Vec<usize>> {
    let mut groups: Vec<(MetadataSet, Vec<usize>)> = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        match groups.iter_mut().find(|(m, _)| *m == s.metadata) {
            Some((_, idx)) => idx.push(i),
            None => groups.push((s.metadata.clone(), vec![i])),
        }
    }
    groups.into_iter().map(|(_, idx)| idx).collect()
}

/// Scores every sample and the diversity of every group of two or more.
/// Metrics that do not apply to a sample (no chords, missing metadata,
/// no notes) are left empty.
pub fn evaluate(ids: &[String], samples: &[Sample], groups: &[Vec<usize>]) -> EvaluationReport {
    let (mut cp, mut cv, mut ch) = (Counts::default(), Counts::default(), Counts::default());
    let scores = ids
        .iter()
        .zip(samples)
        .map(|(id, s)| {
            let score = |f: fn(&Sample) -> Result<Counts, MetricError>, acc: &mut Counts| {
                let c = f(s).ok()?;
                acc.add(c);
                c.ratio().ok()
            };
            SampleScores {
                id: id.clone(),
                cp: score(pitch_counts, &mut cp),
                cv: score(velocity_counts, &mut cv),
                ch: score(harmony_counts, &mut ch),
            }
        })
        .collect();
    let groups: Vec<GroupDiversity> = groups
        .iter()
        .enumerate()
        .filter(|(_, g)| g.len() >= 2)
        .map(|(i, g)| {
            let members: Vec<Sample> = g.iter().map(|&j| samples[j].clone()).collect();
            GroupDiversity {
                group: format!("group{i}"),
                n: g.len(),
                diversity: diversity(&members).expect("group has at least two members"),
            }
        })
        .collect();
    let diversity = (!groups.is_empty())
        .then(|| groups.iter().map(|g| g.diversity).sum::<f64>() / groups.len() as f64);
    EvaluationReport {
        samples: scores,
        groups,
        summary: Summary {
            cp: cp.ratio().ok(),
            cv: cv.ratio().ok(),
            ch: ch.ratio().ok(),
            diversity,
        },
    }
}

impl EvaluationReport {
    /// One table with columns `id,cp,cv,ch,diversity`: sample rows, then
    /// group rows, then a `summary` row.
    pub fn to_csv(&self) -> String {
        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("id,cp,cv,ch,diversity\n");
        for s in &self.samples {
            out.push_str(&format!("{},{},{},{},\n", csv_field(&s.id), f(s.cp), f(s.cv), f(s.ch)));
        }
        for g in &self.groups {
            out.push_str(&format!("{},,,,{}\n", csv_field(&g.group), g.diversity));
        }
        let s = &self.summary;
        out.push_str(&format!(
            "summary,{},{},{},{}\n",
            f(s.cp),
            f(s.cv),
            f(s.ch),
            f(s.diversity)
        ));
        out
    }
}
