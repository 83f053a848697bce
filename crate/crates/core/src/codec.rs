//! Conversion between [`Sample`] and the integer token stream.
//!
//! A stream is the eleven metadata tokens, then one `bar` token per measure,
//! each followed by that bar's events, then `eos`. An event is a position
//! token followed by either a chord token or the (velocity, pitch, duration)
//! triple. Events inside a bar are strictly ordered by position, chords
//! before notes at the same position, and ascending pitch.
//!
//! [`GrammarState`] is the single source of truth for that grammar; the
//! validator, the decoder and the constrained sampler all drive it.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::types::*;
use crate::vocab::*;

pub type TokenSequence = Vec<Token>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("metadata field {field} has unrepresentable value {value}")]
    Metadata { field: &'static str, value: String },
    #[error("{what} at bar {bar} is beyond the {num_bars}-bar sample")]
    BeyondMeasures {
        what: &'static str,
        bar: u32,
        num_bars: u32,
    },
    #[error("grid violation: {0}")]
    Grid(String),
    #[error("duplicate event at bar {bar} position {position}")]
    Duplicate { bar: u32, position: u8 },
}

/// A grammar violation at a token index.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("token {index}: {message}")]
pub struct GrammarViolation {
    pub index: usize,
    pub message: String,
}

impl GrammarViolation {
    fn new(index: usize, message: impl Into<String>) -> Self {
        GrammarViolation {
            index,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct GrammarReport {
    pub violations: Vec<GrammarViolation>,
}

impl GrammarReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for GrammarReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

fn meta_index<T: Copy>(value: Option<T>, index: impl Fn(T) -> u8) -> u8 {
    value.map(|v| index(v) + 1).unwrap_or(0)
}

/// The eleven metadata tokens in prefix order.
pub fn encode_metadata(m: &MetadataSet) -> Result<[Token; METADATA_LEN], EncodeError> {
    if let Some(bpm) = m.bpm {
        if !bpm.is_valid() {
            return Err(EncodeError::Metadata {
                field: "bpm",
                value: bpm.0.to_string(),
            });
        }
    }
    for (field, v) in [("min_velocity", m.min_velocity), ("max_velocity", m.max_velocity)] {
        if let Some(v) = v {
            if !v.is_valid() {
                return Err(EncodeError::Metadata {
                    field,
                    value: v.0.to_string(),
                });
            }
        }
    }
    let offsets = [
        m.bpm.map(|b| (b.0 / 5) as u8).unwrap_or(0),
        meta_index(m.key, Key::index),
        meta_index(m.time_signature, TimeSignature::index),
        meta_index(m.pitch_range, PitchRange::index),
        m.num_measures.index(),
        meta_index(m.instrument, Instrument::index),
        meta_index(m.genre, Genre::index),
        meta_index(m.min_velocity, Velocity::bin),
        meta_index(m.max_velocity, Velocity::bin),
        meta_index(m.track_role, TrackRole::index),
        meta_index(m.rhythm, Rhythm::index),
    ];
    let mut out = [0; METADATA_LEN];
    for (slot, (cat, off)) in Category::METADATA.iter().zip(offsets).enumerate() {
        out[slot] = cat.range().start() + off as Token;
    }
    Ok(out)
}

/// Decodes one metadata slot. The caller guarantees `token` lies in the
/// slot's category range.
fn decode_meta_slot(m: &mut MetadataSet, slot: usize, token: Token) {
    let cat = Category::METADATA[slot];
    let off = (token - cat.range().start()) as u8;
    // `None` when off == 0 (unknown) for every field but num_measures
    let idx = off.checked_sub(1);
    match cat {
        Category::Bpm => m.bpm = (off > 0).then(|| Bpm(off as u16 * 5)),
        Category::Key => m.key = idx.and_then(Key::from_index),
        Category::TimeSignature => m.time_signature = idx.and_then(TimeSignature::from_index),
        Category::PitchRange => m.pitch_range = idx.and_then(PitchRange::from_index),
        Category::NumMeasures => m.num_measures = NumMeasures::ALL[off as usize],
        Category::Instrument => m.instrument = idx.and_then(Instrument::from_index),
        Category::Genre => m.genre = idx.and_then(Genre::from_index),
        Category::MinVelocity => m.min_velocity = idx.map(Velocity::from_bin),
        // 718 is bin 64, an alias of the top bin
        Category::MaxVelocity => m.max_velocity = idx.map(Velocity::from_bin),
        Category::TrackRole => m.track_role = idx.and_then(TrackRole::from_index),
        Category::Rhythm => m.rhythm = idx.and_then(Rhythm::from_index),
        _ => unreachable!("not a metadata category"),
    }
}

pub fn chord_token(chord: Option<ChordSymbol>) -> Token {
    match chord {
        Some(c) => CHORD_BASE + c.index() as Token,
        None => CHORD_UNKNOWN,
    }
}

pub fn position_token(position: u8) -> Token {
    POSITION_BASE + position as Token
}

pub fn pitch_token(pitch: Pitch) -> Token {
    PITCH_BASE + pitch.0 as Token
}

pub fn velocity_token(velocity: Velocity) -> Token {
    VELOCITY_BASE + velocity.bin() as Token
}

pub fn duration_token(duration: u8) -> Token {
    DURATION_BASE + duration as Token - 1
}

enum BodyEvent<'a> {
    Chord(&'a ChordEvent),
    Note(&'a Note),
}

impl BodyEvent<'_> {
    fn key(&self) -> (u32, u8, u8, u8) {
        match self {
            BodyEvent::Chord(c) => (c.bar, c.position, 0, 0),
            BodyEvent::Note(n) => (n.bar, n.position, 1, n.pitch.0),
        }
    }
}

/// Body tokens: one bar marker per measure with its events, then `eos`.
pub fn encode_body(
    chords: &[ChordEvent],
    notes: &[Note],
    num_measures: NumMeasures,
) -> Result<TokenSequence, EncodeError> {
    let num_bars = num_measures.bars();
    let mut events: Vec<BodyEvent> = Vec::with_capacity(chords.len() + notes.len());
    for c in chords {
        if c.bar >= num_bars {
            return Err(EncodeError::BeyondMeasures {
                what: "chord",
                bar: c.bar,
                num_bars,
            });
        }
        if c.position as u32 >= GRID {
            return Err(EncodeError::Grid(format!("chord position {}", c.position)));
        }
        events.push(BodyEvent::Chord(c));
    }
    for n in notes {
        if n.bar >= num_bars {
            return Err(EncodeError::BeyondMeasures {
                what: "note",
                bar: n.bar,
                num_bars,
            });
        }
        if n.position as u32 >= GRID {
            return Err(EncodeError::Grid(format!("note position {}", n.position)));
        }
        if !n.pitch.is_valid() || !n.velocity.is_valid() {
            return Err(EncodeError::Grid(format!(
                "note pitch {} velocity {}",
                n.pitch.0, n.velocity.0
            )));
        }
        if n.duration == 0 || n.duration as u32 > GRID {
            return Err(EncodeError::Grid(format!("note duration {}", n.duration)));
        }
        events.push(BodyEvent::Note(n));
    }
    events.sort_by_key(BodyEvent::key);
    for pair in events.windows(2) {
        let (a, b) = (pair[0].key(), pair[1].key());
        if a == b {
            return Err(EncodeError::Duplicate {
                bar: a.0,
                position: a.1,
            });
        }
    }

    let mut out = Vec::with_capacity(num_bars as usize + events.len() * 4 + 1);
    let mut iter = events.iter().peekable();
    for bar in 0..num_bars {
        out.push(BAR);
        while let Some(ev) = iter.next_if(|e| e.key().0 == bar) {
            match ev {
                BodyEvent::Chord(c) => {
                    out.push(position_token(c.position));
                    out.push(chord_token(c.chord));
                }
                BodyEvent::Note(n) => {
                    out.push(position_token(n.position));
                    out.push(velocity_token(n.velocity));
                    out.push(pitch_token(n.pitch));
                    out.push(duration_token(n.duration));
                }
            }
        }
    }
    out.push(EOS);
    Ok(out)
}

/// Full token stream of a sample.
pub fn encode(sample: &Sample) -> Result<TokenSequence, EncodeError> {
    let mut out = encode_metadata(&sample.metadata)?.to_vec();
    out.extend(encode_body(
        &sample.chords,
        &sample.notes,
        sample.metadata.num_measures,
    )?);
    Ok(out)
}

/// Most recent event in the current bar, for the ordering rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LastEvent {
    position: u8,
    /// `None` for a chord.
    pitch: Option<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Metadata(usize),
    /// Expecting a bar, a position or eos.
    EventStart,
    AfterPosition,
    AfterVelocity,
    AfterPitch,
    Done,
}

/// Incremental recognizer for the token grammar.
#[derive(Debug, Clone)]
pub struct GrammarState {
    consumed: usize,
    phase: Phase,
    num_bars: u32,
    bars_seen: u32,
    last: Option<LastEvent>,
    position: u8,
}

impl Default for GrammarState {
    fn default() -> Self {
        Self::new()
    }
}

impl GrammarState {
    pub fn new() -> Self {
        GrammarState {
            consumed: 0,
            phase: Phase::Metadata(0),
            num_bars: 0,
            bars_seen: 0,
            last: None,
            position: 0,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn consumed(&self) -> usize {
        self.consumed
    }

    /// Bars opened so far.
    pub fn bars_seen(&self) -> u32 {
        self.bars_seen
    }

    pub fn num_bars(&self) -> u32 {
        self.num_bars
    }

    /// Index of the bar currently being filled, if any.
    pub fn current_bar(&self) -> Option<u32> {
        self.bars_seen.checked_sub(1)
    }

    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    fn position_ok(&self, p: u8) -> bool {
        match self.last {
            None => true,
            Some(last) if p > last.position => true,
            Some(last) if p == last.position => last.pitch.is_none_or(|q| q < Pitch::MAX),
            Some(_) => false,
        }
    }

    fn chord_ok(&self) -> bool {
        self.last.is_none_or(|l| self.position > l.position)
    }

    fn pitch_ok(&self, q: u8) -> bool {
        match self.last {
            Some(LastEvent {
                position,
                pitch: Some(prev),
            }) if position == self.position => q > prev,
            _ => true,
        }
    }

    /// Why `token` cannot be consumed next, or `None` if it can.
    pub fn check(&self, token: Token) -> Option<String> {
        if token as usize >= VOCAB_SIZE {
            return Some("token out of vocabulary".into());
        }
        match self.phase {
            Phase::Metadata(slot) => {
                let cat = Category::METADATA[slot];
                (!cat.contains(token))
                    .then(|| format!("expected {cat} token in metadata slot {}", slot + 1))
            }
            Phase::EventStart => {
                if self.bars_seen == 0 && token != BAR {
                    return Some(if token >= *Category::Bpm.range().start() {
                        "metadata overrun".into()
                    } else {
                        "expected bar".into()
                    });
                }
                match token {
                    BAR if self.bars_seen >= self.num_bars => Some("too many bars".into()),
                    BAR => None,
                    EOS if self.bars_seen < self.num_bars => Some(format!(
                        "bar count mismatch: {} of {} bars before eos",
                        self.bars_seen, self.num_bars
                    )),
                    EOS => None,
                    PAD => Some("unexpected pad".into()),
                    t if Category::Position.contains(t) => (!self
                        .position_ok((t - POSITION_BASE) as u8))
                    .then(|| "event out of order".into()),
                    t if t >= *Category::Bpm.range().start() => Some("metadata overrun".into()),
                    _ => Some("expected bar, position or eos".into()),
                }
            }
            Phase::AfterPosition => {
                if Category::Chord.contains(token) {
                    (!self.chord_ok()).then(|| "event out of order".into())
                } else if Category::Velocity.contains(token) {
                    None
                } else {
                    Some("expected chord or velocity".into())
                }
            }
            Phase::AfterVelocity => {
                if Category::Pitch.contains(token) {
                    (!self.pitch_ok((token - PITCH_BASE) as u8))
                        .then(|| "event out of order".into())
                } else {
                    Some("expected pitch".into())
                }
            }
            Phase::AfterPitch => {
                (!Category::Duration.contains(token)).then(|| "expected duration".into())
            }
            Phase::Done => Some("tokens after eos".into()),
        }
    }

    /// Non-allocating equivalent of `self.check(token).is_none()`.
    pub fn allows(&self, token: Token) -> bool {
        if token as usize >= VOCAB_SIZE {
            return false;
        }
        match self.phase {
            Phase::Metadata(slot) => Category::METADATA[slot].contains(token),
            Phase::EventStart => match token {
                BAR => self.bars_seen < self.num_bars,
                EOS => self.bars_seen > 0 && self.bars_seen >= self.num_bars,
                t if self.bars_seen > 0 && Category::Position.contains(t) => {
                    self.position_ok((t - POSITION_BASE) as u8)
                }
                _ => false,
            },
            Phase::AfterPosition => {
                Category::Velocity.contains(token)
                    || (Category::Chord.contains(token) && self.chord_ok())
            }
            Phase::AfterVelocity => {
                Category::Pitch.contains(token) && self.pitch_ok((token - PITCH_BASE) as u8)
            }
            Phase::AfterPitch => Category::Duration.contains(token),
            Phase::Done => false,
        }
    }

    /// `mask[t]` is true iff token `t` may come next.
    pub fn mask(&self) -> Vec<bool> {
        (0..VOCAB_SIZE as Token).map(|t| self.allows(t)).collect()
    }

    pub fn advance(&mut self, token: Token) -> Result<(), GrammarViolation> {
        if !self.allows(token) {
            let msg = self.check(token).unwrap_or_else(|| "rejected token".into());
            return Err(GrammarViolation::new(self.consumed, msg));
        }
        self.consumed += 1;
        self.phase = match self.phase {
            Phase::Metadata(slot) => {
                if Category::METADATA[slot] == Category::NumMeasures {
                    let off = token - Category::NumMeasures.range().start();
                    self.num_bars = NumMeasures::ALL[off as usize].bars();
                }
                if slot + 1 < METADATA_LEN {
                    Phase::Metadata(slot + 1)
                } else {
                    Phase::EventStart
                }
            }
            Phase::EventStart => match token {
                BAR => {
                    self.bars_seen += 1;
                    self.last = None;
                    Phase::EventStart
                }
                EOS => Phase::Done,
                t => {
                    self.position = (t - POSITION_BASE) as u8;
                    Phase::AfterPosition
                }
            },
            Phase::AfterPosition => {
                if Category::Chord.contains(token) {
                    self.last = Some(LastEvent {
                        position: self.position,
                        pitch: None,
                    });
                    Phase::EventStart
                } else {
                    Phase::AfterVelocity
                }
            }
            Phase::AfterVelocity => {
                self.last = Some(LastEvent {
                    position: self.position,
                    pitch: Some((token - PITCH_BASE) as u8),
                });
                Phase::AfterPitch
            }
            Phase::AfterPitch => Phase::EventStart,
            Phase::Done => unreachable!("checked above"),
        };
        Ok(())
    }

    /// Ends the stream; fails unless `eos` was consumed.
    pub fn finish(&self) -> Result<(), GrammarViolation> {
        if self.is_done() {
            Ok(())
        } else {
            Err(GrammarViolation::new(self.consumed, "missing eos"))
        }
    }
}

/// Checks the token grammar, reporting the first offending index.
pub fn validate_grammar(tokens: &[Token]) -> GrammarReport {
    let mut state = GrammarState::new();
    let result = tokens
        .iter()
        .try_for_each(|&t| state.advance(t))
        .and_then(|_| state.finish());
    GrammarReport {
        violations: result.err().into_iter().collect(),
    }
}

/// Decodes a grammar-valid token stream.
pub fn decode(tokens: &[Token]) -> Result<Sample, GrammarViolation> {
    let mut state = GrammarState::new();
    let mut metadata = MetadataSet {
        bpm: None,
        key: None,
        time_signature: None,
        pitch_range: None,
        num_measures: NumMeasures::Four,
        instrument: None,
        genre: None,
        min_velocity: None,
        max_velocity: None,
        track_role: None,
        rhythm: None,
    };
    let mut chords = Vec::new();
    let mut notes = Vec::new();
    let mut velocity = Velocity(0);
    let mut pitch = Pitch(0);

    for &t in tokens {
        let phase = state.phase();
        state.advance(t)?;
        let bar = state.current_bar().unwrap_or(0);
        match phase {
            Phase::Metadata(slot) => decode_meta_slot(&mut metadata, slot, t),
            Phase::AfterPosition if Category::Chord.contains(t) => {
                let chord = if t == CHORD_UNKNOWN {
                    None
                } else {
                    ChordSymbol::from_index((t - CHORD_BASE) as u8)
                };
                chords.push(ChordEvent {
                    bar,
                    position: state.position,
                    chord,
                });
            }
            Phase::AfterPosition => velocity = Velocity::from_bin((t - VELOCITY_BASE) as u8),
            Phase::AfterVelocity => pitch = Pitch((t - PITCH_BASE) as u8),
            Phase::AfterPitch => notes.push(Note {
                bar,
                position: state.position,
                pitch,
                velocity,
                duration: (t - DURATION_BASE + 1) as u8,
            }),
            _ => {}
        }
    }
    state.finish()?;
    Ok(Sample {
        metadata,
        chords,
        notes,
    })
}

/// Grid positions and chord symbols of every chord event in a stream.
pub fn extract_chords(tokens: &[Token]) -> Result<Vec<ChordEvent>, GrammarViolation> {
    decode(tokens).map(|s| s.chords)
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Text { line: usize, message: String },
    #[error("binary frame: {0}")]
    Binary(String),
}

/// One sample per line, space-separated decimal integers.
pub fn to_text(tokens: &[Token]) -> String {
    let mut out = String::with_capacity(tokens.len() * 4);
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&t.to_string());
    }
    out
}

/// Parses a token text corpus; blank lines are skipped.
pub fn parse_text(text: &str) -> Result<Vec<TokenSequence>, FormatError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            line.split_whitespace()
                .map(|w| {
                    w.parse::<Token>().map_err(|e| FormatError::Text {
                        line: i + 1,
                        message: format!("{w:?}: {e}"),
                    })
                })
                .collect()
        })
        .collect()
}

/// Length-prefixed frames: `u32` token count then `u16` tokens, little-endian.
pub fn to_binary(sequences: &[TokenSequence]) -> Vec<u8> {
    let mut out = Vec::new();
    for seq in sequences {
        out.extend_from_slice(&(seq.len() as u32).to_le_bytes());
        for t in seq {
            out.extend_from_slice(&t.to_le_bytes());
        }
    }
    out
}

pub fn parse_binary(mut bytes: &[u8]) -> Result<Vec<TokenSequence>, FormatError> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        if bytes.len() < 4 {
            return Err(FormatError::Binary("truncated length prefix".into()));
        }
        let len = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
        bytes = &bytes[4..];
        if bytes.len() < len * 2 {
            return Err(FormatError::Binary(format!(
                "frame {} declares {len} tokens but only {} bytes remain",
                out.len(),
                bytes.len()
            )));
        }
        let seq = bytes[..len * 2]
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect();
        bytes = &bytes[len * 2..];
        out.push(seq);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> MetadataSet {
        MetadataSet {
            bpm: Some(Bpm(130)),
            key: Some("amajor".parse().unwrap()),
            time_signature: Some(TimeSignature::FourFour),
            pitch_range: Some(PitchRange::Mid),
            num_measures: NumMeasures::Four,
            instrument: Some(Instrument::Keyboard),
            genre: Some(Genre::NewAge),
            min_velocity: Some(Velocity(40)),
            max_velocity: Some(Velocity(80)),
            track_role: Some(TrackRole::MainMelody),
            rhythm: Some(Rhythm::Standard),
        }
    }

    fn note(bar: u32, position: u8, pitch: u8, duration: u8) -> Note {
        Note {
            bar,
            position,
            pitch: Pitch(pitch),
            velocity: Velocity(64),
            duration,
        }
    }

    fn sample() -> Sample {
        Sample {
            metadata: meta(),
            chords: vec![
                ChordEvent::new(0, 0, "Amaj".parse().unwrap()),
                ChordEvent::new(2, 64, "F#min7".parse().unwrap()),
            ],
            notes: vec![note(0, 0, 69, 32), note(0, 0, 73, 32), note(3, 96, 76, 32)],
        }
    }

    #[test]
    fn metadata_tokens() {
        let toks = encode_metadata(&meta()).unwrap();
        assert_eq!(toks[0], 586);
        assert_eq!(toks[1], 611);
        assert_eq!(toks[2], 627);
        assert_eq!(toks[4], 638);
        assert_eq!(toks[7], 674);
        assert_eq!(toks[8], 654 + 40);
    }

    #[test]
    fn body_token_formulas() {
        assert_eq!(position_token(64), 496);
        assert_eq!(chord_token(Some("Cmaj".parse().unwrap())), 196);
        assert_eq!(chord_token(Some("Bsus4".parse().unwrap())), 303);
        assert_eq!(duration_token(32), 335);
        assert_eq!(pitch_token(Pitch(127)), 130);
    }

    #[test]
    fn encode_layout() {
        let toks = encode(&sample()).unwrap();
        assert_eq!(toks[11], BAR);
        // chord at (0,0) precedes the notes at (0,0)
        assert_eq!(&toks[12..14], &[432, 196 + 9 * 9]);
        assert_eq!(toks[14], 432);
        assert_eq!(*toks.last().unwrap(), EOS);
        assert_eq!(toks.iter().filter(|&&t| t == BAR).count(), 4);
        assert!(validate_grammar(&toks).is_valid());
    }

    #[test]
    fn roundtrip_bin_level() {
        let s = sample();
        let toks = encode(&s).unwrap();
        assert_eq!(decode(&toks).unwrap(), s.quantized());
        assert_eq!(encode(&decode(&toks).unwrap()).unwrap(), toks);
    }

    #[test]
    fn unknown_metadata_decodes_to_none() {
        let mut toks = encode(&sample()).unwrap();
        toks[0] = 560;
        toks[6] = 650;
        let s = decode(&toks).unwrap();
        assert_eq!(s.metadata.bpm, None);
        assert_eq!(s.metadata.genre, None);
        assert_eq!(encode(&s).unwrap(), toks);
    }

    #[test]
    fn max_velocity_718_aliases_top_bin() {
        let mut toks = encode(&sample()).unwrap();
        toks[8] = 718;
        assert!(validate_grammar(&toks).is_valid());
        let s = decode(&toks).unwrap();
        assert_eq!(s.metadata.max_velocity, Some(Velocity(127)));
        // 717 must not appear as min velocity
        let mut bad = toks.clone();
        bad[7] = 718;
        assert!(!validate_grammar(&bad).is_valid());
    }

    #[test]
    fn unknown_chord_roundtrips() {
        let mut s = sample();
        s.chords[1].chord = None;
        let toks = encode(&s).unwrap();
        assert!(toks.contains(&CHORD_UNKNOWN));
        assert_eq!(decode(&toks).unwrap(), s.quantized());
    }

    #[test]
    fn grammar_missing_eos() {
        let mut toks = encode(&sample()).unwrap();
        toks.pop();
        let r = validate_grammar(&toks);
        assert_eq!(r.violations[0].message, "missing eos");
    }

    #[test]
    fn grammar_expected_pitch() {
        let mut toks = encode(&metadata_only()).unwrap();
        toks.pop();
        toks.extend([432, 160, 335]);
        let r = validate_grammar(&toks);
        assert_eq!(r.violations[0].message, "expected pitch");
        assert_eq!(r.violations[0].index, 17);
    }

    fn metadata_only() -> Sample {
        Sample {
            metadata: meta(),
            chords: vec![],
            notes: vec![],
        }
    }

    #[test]
    fn grammar_metadata_overrun() {
        let mut toks = encode_metadata(&meta()).unwrap().to_vec();
        toks.push(700);
        let r = validate_grammar(&toks);
        assert_eq!(r.violations[0].message, "metadata overrun");
        assert_eq!(r.violations[0].index, 11);
    }

    #[test]
    fn grammar_ordering() {
        let toks = encode(&sample()).unwrap();
        // swap the two notes at (0,0): pitches 69 then 73
        let mut bad = toks.clone();
        let i = bad.iter().position(|&t| t == pitch_token(Pitch(69))).unwrap();
        let j = bad.iter().position(|&t| t == pitch_token(Pitch(73))).unwrap();
        bad.swap(i, j);
        assert_eq!(validate_grammar(&bad).violations[0].message, "event out of order");
    }

    #[test]
    fn grammar_bar_count() {
        let mut toks = encode(&metadata_only()).unwrap();
        toks.remove(11);
        assert!(validate_grammar(&toks).violations[0]
            .message
            .starts_with("bar count mismatch"));
    }

    #[test]
    fn encode_rejects_out_of_range() {
        let mut s = sample();
        s.notes[2].bar = 4;
        assert!(matches!(encode(&s), Err(EncodeError::BeyondMeasures { .. })));
        let mut s = sample();
        s.notes[1].pitch = Pitch(69);
        assert!(matches!(encode(&s), Err(EncodeError::Duplicate { .. })));
        let mut s = sample();
        s.metadata.bpm = Some(Bpm(123));
        assert!(matches!(encode(&s), Err(EncodeError::Metadata { .. })));
    }

    #[test]
    fn allows_agrees_with_check() {
        let toks = encode(&sample()).unwrap();
        let mut state = GrammarState::new();
        for &t in &toks {
            for cand in 0..VOCAB_SIZE as Token + 2 {
                assert_eq!(state.allows(cand), state.check(cand).is_none(), "{cand} in {:?}", state.phase());
            }
            state.advance(t).unwrap();
        }
        assert!(state.is_done());
    }

    #[test]
    fn text_and_binary_formats() {
        let a = encode(&sample()).unwrap();
        let b = encode(&metadata_only()).unwrap();
        let text = format!("{}\n\n{}\n", to_text(&a), to_text(&b));
        assert_eq!(parse_text(&text).unwrap(), vec![a.clone(), b.clone()]);
        let bin = to_binary(&[a.clone(), b.clone()]);
        assert_eq!(&bin[..4], &(a.len() as u32).to_le_bytes());
        assert_eq!(parse_binary(&bin).unwrap(), vec![a, b]);
        assert!(parse_binary(&bin[..bin.len() - 1]).is_err());
        assert!(parse_text("1 2 x").is_err());
    }
}
