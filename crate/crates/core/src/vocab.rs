//! The fixed 729-entry encoding dictionary.

use std::fmt;
use std::ops::RangeInclusive;

pub type Token = u16;

pub const VOCAB_SIZE: usize = 729;
/// Bumped whenever the token layout changes.
pub const VOCAB_VERSION: u32 = 1;

pub const PAD: Token = 0;
pub const EOS: Token = 1;
pub const BAR: Token = 2;

pub const PITCH_BASE: Token = 3;
pub const VELOCITY_BASE: Token = 131;
pub const CHORD_UNKNOWN: Token = 195;
pub const CHORD_BASE: Token = 196;
pub const DURATION_BASE: Token = 304;
pub const POSITION_BASE: Token = 432;

/// Number of metadata tokens preceding the body.
pub const METADATA_LEN: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Pad,
    Eos,
    Bar,
    Pitch,
    Velocity,
    Chord,
    Duration,
    Position,
    Bpm,
    Key,
    TimeSignature,
    PitchRange,
    NumMeasures,
    Instrument,
    Genre,
    MinVelocity,
    MaxVelocity,
    TrackRole,
    Rhythm,
}

impl Category {
    pub const ALL: [Category; 19] = [
        Category::Pad,
        Category::Eos,
        Category::Bar,
        Category::Pitch,
        Category::Velocity,
        Category::Chord,
        Category::Duration,
        Category::Position,
        Category::Bpm,
        Category::Key,
        Category::TimeSignature,
        Category::PitchRange,
        Category::NumMeasures,
        Category::Instrument,
        Category::Genre,
        Category::MinVelocity,
        Category::MaxVelocity,
        Category::TrackRole,
        Category::Rhythm,
    ];

    /// Metadata categories in prefix order.
    pub const METADATA: [Category; METADATA_LEN] = [
        Category::Bpm,
        Category::Key,
        Category::TimeSignature,
        Category::PitchRange,
        Category::NumMeasures,
        Category::Instrument,
        Category::Genre,
        Category::MinVelocity,
        Category::MaxVelocity,
        Category::TrackRole,
        Category::Rhythm,
    ];

    pub fn range(self) -> RangeInclusive<Token> {
        match self {
            Category::Pad => 0..=0,
            Category::Eos => 1..=1,
            Category::Bar => 2..=2,
            Category::Pitch => 3..=130,
            Category::Velocity => 131..=194,
            Category::Chord => 195..=303,
            Category::Duration => 304..=431,
            Category::Position => 432..=559,
            Category::Bpm => 560..=600,
            Category::Key => 601..=625,
            Category::TimeSignature => 626..=629,
            Category::PitchRange => 630..=637,
            Category::NumMeasures => 638..=640,
            Category::Instrument => 641..=649,
            Category::Genre => 650..=652,
            Category::MinVelocity => 653..=717,
            Category::MaxVelocity => 653..=718,
            Category::TrackRole => 719..=725,
            Category::Rhythm => 726..=728,
        }
    }

    pub fn contains(self, token: Token) -> bool {
        self.range().contains(&token)
    }

    /// The unknown-value token of a metadata category. Number of measures
    /// has exactly three slots for three values and therefore none.
    pub fn unknown_token(self) -> Option<Token> {
        match self {
            Category::NumMeasures => None,
            c if Category::METADATA.contains(&c) => Some(*c.range().start()),
            Category::Chord => Some(CHORD_UNKNOWN),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Pad => "pad",
            Category::Eos => "eos",
            Category::Bar => "bar",
            Category::Pitch => "note pitch",
            Category::Velocity => "note velocity",
            Category::Chord => "chord",
            Category::Duration => "note duration",
            Category::Position => "position",
            Category::Bpm => "bpm",
            Category::Key => "key",
            Category::TimeSignature => "time signature",
            Category::PitchRange => "pitch range",
            Category::NumMeasures => "number of measure",
            Category::Instrument => "instrument",
            Category::Genre => "genre",
            Category::MinVelocity => "min velocity",
            Category::MaxVelocity => "max velocity",
            Category::TrackRole => "track-role",
            Category::Rhythm => "rhythm",
        }
    }

    /// Every category containing `token`. Only 653..=717 belongs to two
    /// (min and max velocity share that span).
    pub fn of(token: Token) -> Vec<Category> {
        Category::ALL
            .into_iter()
            .filter(|c| c.contains(token))
            .collect()
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Textual rendering of a token, for diagnostics.
pub fn describe(token: Token) -> String {
    match Category::of(token).first() {
        Some(c) => format!("{token} ({c})"),
        None => format!("{token} (out of vocabulary)"),
    }
}
