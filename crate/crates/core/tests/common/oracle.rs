//! Slow reference implementations of the metrics, written from the
//! definitions without touching the library's metric code.

use commu::*;

fn scale_steps(mode: Mode) -> [u8; 7] {
    match mode {
        Mode::Major => [0, 2, 4, 5, 7, 9, 11],
        Mode::Minor => [0, 2, 3, 5, 7, 8, 10],
    }
}

fn chord_steps(suffix: &str) -> &'static [u8] {
    match suffix {
        "maj" => &[0, 4, 7],
        "min" => &[0, 3, 7],
        "aug" => &[0, 4, 8],
        "dim" => &[0, 3, 6],
        "7" => &[0, 4, 7, 10],
        "maj7" => &[0, 4, 7, 11],
        "min7" => &[0, 3, 7, 10],
        "m7b5" => &[0, 3, 6, 10],
        "sus4" => &[0, 5, 7],
        other => panic!("unexpected suffix {other}"),
    }
}

fn in_key(key: Key, pitch: u8) -> bool {
    let rel = (pitch % 12 + 12 - key.root.index()) % 12;
    scale_steps(key.mode).contains(&rel)
}

fn chord_has(chord: ChordSymbol, pitch: u8) -> bool {
    let rel = (pitch % 12 + 12 - chord.root.index()) % 12;
    chord_steps(chord.quality.suffix()).contains(&rel)
}

/// Walks every grid tick a note sounds (cut at the sample end) and looks up
/// the most recent chord event at that tick.
pub fn consonant_by_ticks(s: &Sample, key: Key, n: &Note) -> bool {
    if in_key(key, n.pitch.0) {
        return true;
    }
    let len = s.metadata.num_measures.bars() * 128;
    let onset = n.bar * 128 + n.position as u32;
    let end = (onset + n.duration as u32).min(len);
    let mut heard = Vec::new();
    for tick in onset..end {
        let active = s
            .chords
            .iter()
            .filter(|c| c.bar * 128 + c.position as u32 <= tick)
            .max_by_key(|c| c.bar * 128 + c.position as u32);
        if let Some(c) = active {
            heard.push(c.chord);
        }
    }
    !heard.is_empty() && heard.iter().all(|c| c.is_some_and(|c| chord_has(c, n.pitch.0)))
}

/// (consonant, counted) over non-keyswitch notes, or `None` when CH does
/// not apply (no key or no chords).
pub fn harmony_by_ticks(s: &Sample) -> Option<(usize, usize)> {
    let key = s.metadata.key?;
    if s.chords.is_empty() {
        return None;
    }
    let notes: Vec<&Note> = s.notes.iter().filter(|n| n.velocity.0 > 1).collect();
    let good = notes.iter().filter(|n| consonant_by_ticks(s, key, n)).count();
    Some((good, notes.len()))
}

fn histograms(s: &Sample) -> ([f64; 12], [f64; 128]) {
    let mut chroma = [0.0; 12];
    let mut groove = [0.0; 128];
    for n in s.notes.iter().filter(|n| n.velocity.0 > 1) {
        chroma[(n.pitch.0 % 12) as usize] += 1.0;
        groove[n.position as usize] += 1.0;
    }
    (chroma, groove)
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let zero_a = a.iter().all(|&x| x == 0.0);
    let zero_b = b.iter().all(|&x| x == 0.0);
    if zero_a && zero_b {
        return 1.0;
    }
    if zero_a || zero_b {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let la = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let lb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (la * lb)).min(1.0)
}

pub fn pair_distance(a: &Sample, b: &Sample) -> f64 {
    let (ca, ga) = histograms(a);
    let (cb, gb) = histograms(b);
    let dc = 1.0 - cos(&ca, &cb);
    let dg = 1.0 - cos(&ga, &gb);
    ((dc * dc + dg * dg) / 2.0).sqrt()
}

/// Mean over all ordered pairs of distinct indices.
pub fn diversity_brute(samples: &[Sample]) -> f64 {
    let n = samples.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                total += pair_distance(&samples[i], &samples[j]);
            }
        }
    }
    total / (n * (n - 1)) as f64
}
