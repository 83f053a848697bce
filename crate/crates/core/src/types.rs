//! Domain types shared across the toolkit: pitches, keys, chords, notes,
//! the eleven scalar metadata fields and the sample that bundles them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Subdivisions per bar on the position/duration grid.
pub const GRID: u32 = 128;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse {what} from {input:?}")]
pub struct ParseError {
    pub what: &'static str,
    pub input: String,
}

impl ParseError {
    fn new(what: &'static str, input: &str) -> Self {
        ParseError {
            what,
            input: input.to_string(),
        }
    }
}

/// Chromatic pitch class, `0 = C` through `11 = B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PitchClass(u8);

const SHARP_NAMES: [&str; 12] = [
    "C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B",
];

impl PitchClass {
    pub const ALL: [PitchClass; 12] = {
        let mut out = [PitchClass(0); 12];
        let mut i = 0;
        while i < 12 {
            out[i] = PitchClass(i as u8);
            i += 1;
        }
        out
    };

    /// Wraps any integer into a pitch class.
    pub fn new(value: i32) -> Self {
        PitchClass(value.rem_euclid(12) as u8)
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn transpose(self, semitones: i32) -> Self {
        PitchClass::new(self.0 as i32 + semitones)
    }

    pub fn name(self) -> &'static str {
        SHARP_NAMES[self.0 as usize]
    }

    /// Accepts sharps (`C#`) and flats (`Db`), case-insensitive.
    fn parse_prefix(s: &str) -> Option<(PitchClass, &str)> {
        let mut chars = s.chars();
        let letter = chars.next()?.to_ascii_uppercase();
        let base = match letter {
            'C' => 0,
            'D' => 2,
            'E' => 4,
            'F' => 5,
            'G' => 7,
            'A' => 9,
            'B' => 11,
            _ => return None,
        };
        let rest = &s[1..];
        if let Some(r) = rest.strip_prefix('#') {
            Some((PitchClass::new(base + 1), r))
        } else if let Some(r) = rest.strip_prefix('b') {
            // "b" followed by a quality suffix is ambiguous only for chords
            // like "Bb7" vs "B" + "b7"; no quality suffix starts with 'b'.
            Some((PitchClass::new(base - 1), r))
        } else {
            Some((PitchClass::new(base), rest))
        }
    }
}

impl fmt::Display for PitchClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// MIDI note number. Pitch 0 is C-2, so C3 = 60 and G8 = 127.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pitch(pub u8);

impl Pitch {
    pub const MAX: u8 = 127;

    pub fn new(value: u8) -> Option<Self> {
        (value <= Self::MAX).then_some(Pitch(value))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn class(self) -> PitchClass {
        PitchClass::new(self.0 as i32)
    }

    pub fn is_valid(self) -> bool {
        self.0 <= Self::MAX
    }

    /// Scientific name in the C-2 = 0 convention, e.g. `C3` for 60.
    pub fn name(self) -> String {
        let octave = self.0 as i32 / 12 - 2;
        format!("{}{}", self.class().name(), octave)
    }
}

/// MIDI velocity, quantized to 64 bins of width two in the token stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Velocity(pub u8);

impl Velocity {
    pub const MAX: u8 = 127;
    pub const BINS: u8 = 64;

    pub fn new(value: u8) -> Option<Self> {
        (value <= Self::MAX).then_some(Velocity(value))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn bin(self) -> u8 {
        self.0 / 2
    }

    /// Decoded representative of a bin: `2 * bin + 1`.
    pub fn from_bin(bin: u8) -> Self {
        Velocity((2 * bin.min(Self::BINS - 1)) + 1)
    }

    /// The value the token stream can reproduce for this velocity.
    pub fn quantized(self) -> Self {
        Velocity::from_bin(self.bin())
    }

    /// Velocity 1 (and the silent 0) mark articulation keyswitches, not music.
    pub fn is_keyswitch(self) -> bool {
        self.0 <= 1
    }

    pub fn is_valid(self) -> bool {
        self.0 <= Self::MAX
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    Major,
    Minor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Key {
    pub root: PitchClass,
    pub mode: Mode,
}

const MAJOR_SCALE: [u8; 7] = [0, 2, 4, 5, 7, 9, 11];
const NATURAL_MINOR_SCALE: [u8; 7] = [0, 2, 3, 5, 7, 8, 10];

impl Key {
    pub fn new(root: PitchClass, mode: Mode) -> Self {
        Key { root, mode }
    }

    /// All 24 keys: majors C..B, then minors C..B.
    pub fn all() -> impl Iterator<Item = Key> {
        [Mode::Major, Mode::Minor]
            .into_iter()
            .flat_map(|mode| PitchClass::ALL.into_iter().map(move |root| Key { root, mode }))
    }

    /// Index in `0..24`, majors first.
    pub fn index(self) -> u8 {
        let base = match self.mode {
            Mode::Major => 0,
            Mode::Minor => 12,
        };
        base + self.root.index()
    }

    pub fn from_index(index: u8) -> Option<Key> {
        match index {
            0..=11 => Some(Key::new(PitchClass(index), Mode::Major)),
            12..=23 => Some(Key::new(PitchClass(index - 12), Mode::Minor)),
            _ => None,
        }
    }

    /// Pitch classes of the key's scale. Minor keys use the natural minor.
    pub fn scale_pitch_classes(self) -> [PitchClass; 7] {
        let template = match self.mode {
            Mode::Major => &MAJOR_SCALE,
            Mode::Minor => &NATURAL_MINOR_SCALE,
        };
        template.map(|step| self.root.transpose(step as i32))
    }

    pub fn contains(self, pc: PitchClass) -> bool {
        self.scale_pitch_classes().contains(&pc)
    }

    pub fn transpose(self, semitones: i32) -> Key {
        Key::new(self.root.transpose(semitones), self.mode)
    }
}

/// Free-function form of [`Key::scale_pitch_classes`].
pub fn scale_pitch_classes(key: Key) -> [PitchClass; 7] {
    key.scale_pitch_classes()
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = match self.mode {
            Mode::Major => "major",
            Mode::Minor => "minor",
        };
        write!(f, "{}{}", self.root.name().to_ascii_lowercase(), mode)
    }
}

impl FromStr for Key {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let (root_part, mode) = if let Some(r) = lower.strip_suffix("major") {
            (r, Mode::Major)
        } else if let Some(r) = lower.strip_suffix("minor") {
            (r, Mode::Minor)
        } else {
            return Err(ParseError::new("key", s));
        };
        match PitchClass::parse_prefix(root_part) {
            Some((root, "")) => Ok(Key::new(root, mode)),
            _ => Err(ParseError::new("key", s)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ChordQuality {
    Maj,
    Min,
    Aug,
    Dim,
    Dom7,
    Maj7,
    Min7,
    M7b5,
    Sus4,
}

impl ChordQuality {
    /// Fixed order used by the token layout.
    pub const ALL: [ChordQuality; 9] = [
        ChordQuality::Maj,
        ChordQuality::Min,
        ChordQuality::Aug,
        ChordQuality::Dim,
        ChordQuality::Dom7,
        ChordQuality::Maj7,
        ChordQuality::Min7,
        ChordQuality::M7b5,
        ChordQuality::Sus4,
    ];

    pub fn index(self) -> u8 {
        ChordQuality::ALL.iter().position(|q| *q == self).unwrap() as u8
    }

    pub fn from_index(index: u8) -> Option<Self> {
        ChordQuality::ALL.get(index as usize).copied()
    }

    /// Semitone offsets from the chord root.
    pub fn intervals(self) -> &'static [u8] {
        match self {
            ChordQuality::Maj => &[0, 4, 7],
            ChordQuality::Min => &[0, 3, 7],
            ChordQuality::Aug => &[0, 4, 8],
            ChordQuality::Dim => &[0, 3, 6],
            ChordQuality::Dom7 => &[0, 4, 7, 10],
            ChordQuality::Maj7 => &[0, 4, 7, 11],
            ChordQuality::Min7 => &[0, 3, 7, 10],
            ChordQuality::M7b5 => &[0, 3, 6, 10],
            ChordQuality::Sus4 => &[0, 5, 7],
        }
    }

    pub fn suffix(self) -> &'static str {
        match self {
            ChordQuality::Maj => "maj",
            ChordQuality::Min => "min",
            ChordQuality::Aug => "aug",
            ChordQuality::Dim => "dim",
            ChordQuality::Dom7 => "7",
            ChordQuality::Maj7 => "maj7",
            ChordQuality::Min7 => "min7",
            ChordQuality::M7b5 => "m7b5",
            ChordQuality::Sus4 => "sus4",
        }
    }

    fn from_suffix(s: &str) -> Option<Self> {
        ChordQuality::ALL.into_iter().find(|q| q.suffix() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChordSymbol {
    pub root: PitchClass,
    pub quality: ChordQuality,
}

impl ChordSymbol {
    pub fn new(root: PitchClass, quality: ChordQuality) -> Self {
        ChordSymbol { root, quality }
    }

    /// All 108 symbols, root-major order.
    pub fn all() -> impl Iterator<Item = ChordSymbol> {
        PitchClass::ALL.into_iter().flat_map(|root| {
            ChordQuality::ALL
                .into_iter()
                .map(move |quality| ChordSymbol { root, quality })
        })
    }

    /// Index in `0..108`: `9 * root + quality`.
    pub fn index(self) -> u8 {
        9 * self.root.index() + self.quality.index()
    }

    pub fn from_index(index: u8) -> Option<Self> {
        if index >= 108 {
            return None;
        }
        Some(ChordSymbol::new(
            PitchClass(index / 9),
            ChordQuality::from_index(index % 9)?,
        ))
    }

    pub fn contains(self, pc: PitchClass) -> bool {
        let offset = PitchClass::new(pc.index() as i32 - self.root.index() as i32).index();
        self.quality.intervals().contains(&offset)
    }

    pub fn transpose(self, semitones: i32) -> Self {
        ChordSymbol::new(self.root.transpose(semitones), self.quality)
    }
}

impl fmt::Display for ChordSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.root.name(), self.quality.suffix())
    }
}

impl FromStr for ChordSymbol {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim();
        // Roots are upper case in chord names, which keeps "Bb7" unambiguous.
        if !trimmed.starts_with(|c: char| c.is_ascii_uppercase()) {
            return Err(ParseError::new("chord", s));
        }
        let (root, suffix) =
            PitchClass::parse_prefix(trimmed).ok_or_else(|| ParseError::new("chord", s))?;
        let quality =
            ChordQuality::from_suffix(suffix).ok_or_else(|| ParseError::new("chord", s))?;
        Ok(ChordSymbol::new(root, quality))
    }
}

macro_rules! named_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $label:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn index(self) -> u8 {
                Self::ALL.iter().position(|v| *v == self).unwrap() as u8
            }

            pub fn from_index(index: u8) -> Option<Self> {
                Self::ALL.get(index as usize).copied()
            }

            pub fn label(self) -> &'static str {
                match self { $($name::$variant => $label),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }

        impl FromStr for $name {
            type Err = ParseError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::ALL
                    .iter()
                    .copied()
                    .find(|v| v.label() == s)
                    .ok_or_else(|| ParseError::new(stringify!($name), s))
            }
        }

        string_serde!($name);
    };
}

macro_rules! string_serde {
    ($name:ident) => {
        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(Key);
string_serde!(ChordSymbol);

named_enum!(
    TimeSignature {
        FourFour => "4/4",
        ThreeFour => "3/4",
        SixEight => "6/8",
    }
);

impl TimeSignature {
    /// Quarter-note beats per bar; 6/8 counts as three quarters.
    pub fn quarters_per_bar(self) -> u32 {
        match self {
            TimeSignature::FourFour => 4,
            TimeSignature::ThreeFour | TimeSignature::SixEight => 3,
        }
    }

    pub fn from_fraction(numerator: u8, denominator: u8) -> Option<Self> {
        match (numerator, denominator) {
            (4, 4) => Some(TimeSignature::FourFour),
            (3, 4) => Some(TimeSignature::ThreeFour),
            (6, 8) => Some(TimeSignature::SixEight),
            _ => None,
        }
    }

    pub fn fraction(self) -> (u8, u8) {
        match self {
            TimeSignature::FourFour => (4, 4),
            TimeSignature::ThreeFour => (3, 4),
            TimeSignature::SixEight => (6, 8),
        }
    }
}

named_enum!(
    PitchRange {
        VeryLow => "very_low",
        Low => "low",
        MidLow => "mid_low",
        Mid => "mid",
        MidHigh => "mid_high",
        High => "high",
        VeryHigh => "very_high",
    }
);

impl PitchRange {
    /// Inclusive MIDI pitch bounds of the category.
    pub fn bounds(self) -> (u8, u8) {
        match self {
            PitchRange::VeryLow => (0, 35),
            PitchRange::Low => (36, 47),
            PitchRange::MidLow => (48, 59),
            PitchRange::Mid => (60, 71),
            PitchRange::MidHigh => (72, 83),
            PitchRange::High => (84, 95),
            PitchRange::VeryHigh => (96, 127),
        }
    }

    pub fn contains(self, pitch: Pitch) -> bool {
        let (lo, hi) = self.bounds();
        (lo..=hi).contains(&pitch.value())
    }

    /// Category of a (possibly fractional) mean pitch; the mean is rounded
    /// to the nearest MIDI number first.
    pub fn classify(mean_pitch: f64) -> PitchRange {
        let rounded = mean_pitch.round().clamp(0.0, 127.0) as u8;
        PitchRange::ALL
            .iter()
            .copied()
            .find(|r| r.contains(Pitch(rounded)))
            .expect("pitch ranges partition 0..=127")
    }
}

named_enum!(
    Instrument {
        Keyboard => "keyboard",
        Lead => "lead",
        Idiophone => "idiophone",
        PluckedString => "plucked_string",
        String => "string",
        Wind => "wind",
        Percussion => "percussion",
        Others => "others",
    }
);

named_enum!(
    Genre {
        NewAge => "newage",
        Cinematic => "cinematic",
    }
);

named_enum!(
    TrackRole {
        MainMelody => "main_melody",
        SubMelody => "sub_melody",
        Accompaniment => "accompaniment",
        Bass => "bass",
        Pad => "pad",
        Riff => "riff",
    }
);

named_enum!(
    Rhythm {
        Standard => "standard",
        Triplet => "triplet",
    }
);

/// Sample length in bars. Only whole-bar lengths are representable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NumMeasures {
    Four,
    Eight,
    Sixteen,
}

impl NumMeasures {
    pub const ALL: [NumMeasures; 3] = [NumMeasures::Four, NumMeasures::Eight, NumMeasures::Sixteen];

    pub fn bars(self) -> u32 {
        match self {
            NumMeasures::Four => 4,
            NumMeasures::Eight => 8,
            NumMeasures::Sixteen => 16,
        }
    }

    pub fn from_bars(bars: u32) -> Option<Self> {
        match bars {
            4 => Some(NumMeasures::Four),
            8 => Some(NumMeasures::Eight),
            16 => Some(NumMeasures::Sixteen),
            _ => None,
        }
    }

    pub fn index(self) -> u8 {
        match self {
            NumMeasures::Four => 0,
            NumMeasures::Eight => 1,
            NumMeasures::Sixteen => 2,
        }
    }
}

impl fmt::Display for NumMeasures {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.bars())
    }
}

impl Serialize for NumMeasures {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u32(self.bars())
    }
}

impl<'de> Deserialize<'de> for NumMeasures {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        // Accept floats so that pickup-measure values like 8.25 produce a
        // clear error instead of a type mismatch.
        let raw = f64::deserialize(deserializer)?;
        if raw.fract() == 0.0 && raw >= 0.0 {
            if let Some(n) = NumMeasures::from_bars(raw as u32) {
                return Ok(n);
            }
        }
        Err(serde::de::Error::custom(format!(
            "num_measures must be 4, 8 or 16, got {raw}"
        )))
    }
}

/// Tempo in beats per minute. Representable values are multiples of 5 in 5..=200.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Bpm(pub u16);

impl Bpm {
    pub const MIN: u16 = 5;
    pub const MAX: u16 = 200;

    pub fn is_valid(self) -> bool {
        (Self::MIN..=Self::MAX).contains(&self.0) && self.0.is_multiple_of(5)
    }

    /// Nearest representable tempo.
    pub fn quantize(bpm: f64) -> Bpm {
        let snapped = (bpm / 5.0).round() * 5.0;
        Bpm(snapped.clamp(Self::MIN as f64, Self::MAX as f64) as u16)
    }

    pub fn offset(self, delta: i32) -> Bpm {
        Bpm((self.0 as i32 + delta).clamp(Self::MIN as i32, Self::MAX as i32) as u16)
    }
}

/// The eleven scalar metadata fields. `None` is the per-field unknown value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MetadataSet {
    pub bpm: Option<Bpm>,
    pub key: Option<Key>,
    pub time_signature: Option<TimeSignature>,
    pub pitch_range: Option<PitchRange>,
    pub num_measures: NumMeasures,
    pub instrument: Option<Instrument>,
    pub genre: Option<Genre>,
    pub min_velocity: Option<Velocity>,
    pub max_velocity: Option<Velocity>,
    pub track_role: Option<TrackRole>,
    pub rhythm: Option<Rhythm>,
}

/// Metadata field names in token order.
pub const METADATA_FIELDS: [&str; 11] = [
    "bpm",
    "key",
    "time_signature",
    "pitch_range",
    "num_measures",
    "instrument",
    "genre",
    "min_velocity",
    "max_velocity",
    "track_role",
    "rhythm",
];

impl MetadataSet {
    /// Display label of a metadata field, `"unknown"` for missing values.
    pub fn field_label(&self, field: &str) -> Option<String> {
        fn opt<T: fmt::Display>(v: Option<T>) -> String {
            v.map(|x| x.to_string()).unwrap_or_else(|| "unknown".into())
        }
        Some(match field {
            "bpm" => opt(self.bpm.map(|b| b.0)),
            "key" => opt(self.key),
            "time_signature" => opt(self.time_signature),
            "pitch_range" => opt(self.pitch_range),
            "num_measures" => self.num_measures.to_string(),
            "instrument" => opt(self.instrument),
            "genre" => opt(self.genre),
            "min_velocity" => opt(self.min_velocity.map(|v| v.0)),
            "max_velocity" => opt(self.max_velocity.map(|v| v.0)),
            "track_role" => opt(self.track_role),
            "rhythm" => opt(self.rhythm),
            _ => return None,
        })
    }
}

/// A chord change on the bar grid. `chord == None` is the unknown chord.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChordEvent {
    pub bar: u32,
    pub position: u8,
    #[serde(with = "optional_chord")]
    pub chord: Option<ChordSymbol>,
}

mod optional_chord {
    use super::*;

    pub fn serialize<S: Serializer>(c: &Option<ChordSymbol>, s: S) -> Result<S::Ok, S::Error> {
        match c {
            Some(c) => s.collect_str(c),
            None => s.serialize_str("unknown"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<ChordSymbol>, D::Error> {
        let s = Option::<String>::deserialize(d)?;
        match s.as_deref() {
            None | Some("unknown") => Ok(None),
            Some(name) => name.parse().map(Some).map_err(serde::de::Error::custom),
        }
    }
}

impl ChordEvent {
    pub fn new(bar: u32, position: u8, chord: ChordSymbol) -> Self {
        ChordEvent {
            bar,
            position,
            chord: Some(chord),
        }
    }

    /// Absolute onset on the grid.
    pub fn onset(&self) -> u32 {
        self.bar * GRID + self.position as u32
    }
}

/// Timed chord events, the sequential twelfth metadatum.
pub type ChordProgression = Vec<ChordEvent>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Note {
    pub bar: u32,
    pub position: u8,
    pub pitch: Pitch,
    pub velocity: Velocity,
    /// In 1/128ths of a bar, `1..=128`.
    pub duration: u8,
}

impl Note {
    pub fn onset(&self) -> u32 {
        self.bar * GRID + self.position as u32
    }

    pub fn end(&self) -> u32 {
        self.onset() + self.duration as u32
    }

    /// Ordering key within a sample.
    pub fn sort_key(&self) -> (u32, u8, u8) {
        (self.bar, self.position, self.pitch.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sample {
    pub metadata: MetadataSet,
    #[serde(default)]
    pub chords: Vec<ChordEvent>,
    #[serde(default)]
    pub notes: Vec<Note>,
}

impl Sample {
    pub fn num_bars(&self) -> u32 {
        self.metadata.num_measures.bars()
    }

    /// Grid length of the sample.
    pub fn grid_len(&self) -> u32 {
        self.num_bars() * GRID
    }

    /// Notes that carry music, i.e. everything but keyswitches.
    pub fn musical_notes(&self) -> impl Iterator<Item = &Note> {
        self.notes.iter().filter(|n| !n.velocity.is_keyswitch())
    }

    /// Copy with every velocity replaced by its bin representative, which is
    /// exactly what survives a trip through the token stream.
    pub fn quantized(&self) -> Sample {
        let mut out = self.clone();
        out.metadata.min_velocity = out.metadata.min_velocity.map(Velocity::quantized);
        out.metadata.max_velocity = out.metadata.max_velocity.map(Velocity::quantized);
        for n in &mut out.notes {
            n.velocity = n.velocity.quantized();
        }
        out
    }

    /// Sorts chords by grid point and notes by (bar, position, pitch).
    pub fn normalize_order(&mut self) {
        self.chords.sort_by_key(|c| (c.bar, c.position));
        self.notes.sort_by_key(Note::sort_key);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

/// Checks every sample invariant and returns the list of violations.
pub fn validate_sample(s: &Sample) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |location: String, message: &str| {
        out.push(Violation {
            location,
            message: message.to_string(),
        })
    };
    let m = &s.metadata;
    if let Some(bpm) = m.bpm {
        if !bpm.is_valid() {
            push("metadata.bpm".into(), "bpm must be a multiple of 5 in 5..=200");
        }
    }
    for (name, v) in [("min_velocity", m.min_velocity), ("max_velocity", m.max_velocity)] {
        if let Some(v) = v {
            if !v.is_valid() {
                push(format!("metadata.{name}"), "velocity out of range");
            }
        }
    }
    if let (Some(lo), Some(hi)) = (m.min_velocity, m.max_velocity) {
        if lo > hi {
            push("metadata".into(), "min > max velocity");
        }
    }

    let bars = s.num_bars();
    let mut prev: Option<(u32, u8)> = None;
    for (i, c) in s.chords.iter().enumerate() {
        let loc = format!("chords[{i}]");
        if c.bar >= bars {
            push(loc.clone(), "chord beyond measure count");
        }
        if c.position as u32 >= GRID {
            push(loc.clone(), "position off grid");
        }
        if let Some(p) = prev {
            if (c.bar, c.position) <= p {
                push(loc.clone(), "chords out of order");
            }
        }
        prev = Some((c.bar, c.position));
    }

    let mut prev: Option<(u32, u8, u8)> = None;
    for (i, n) in s.notes.iter().enumerate() {
        let loc = format!("notes[{i}]");
        if n.bar >= bars {
            push(loc.clone(), "note beyond measure count");
        }
        if n.position as u32 >= GRID {
            push(loc.clone(), "position off grid");
        }
        if !n.pitch.is_valid() {
            push(loc.clone(), "pitch out of range");
        }
        if !n.velocity.is_valid() {
            push(loc.clone(), "velocity out of range");
        } else if n.velocity.is_keyswitch() {
            push(loc.clone(), "keyswitch note");
        }
        if n.duration == 0 || n.duration as u32 > GRID {
            push(loc.clone(), "duration out of range");
        }
        if let Some(p) = prev {
            if n.sort_key() <= p {
                push(loc.clone(), "notes out of order");
            }
        }
        prev = Some(n.sort_key());
    }
    out
}
