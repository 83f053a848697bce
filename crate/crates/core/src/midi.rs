//! Standard MIDI File subset: notes, program change, tempo, time and key
//! signature, track name, end of track. Everything else is skipped on read
//! and never written.

use thiserror::Error;

use crate::types::*;

pub const DEFAULT_DIVISION: u16 = 480;
pub const DEFAULT_TEMPO: u32 = 500_000;
pub const PERCUSSION_CHANNEL: u8 = 9;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MidiError {
    #[error("malformed MIDI at byte {offset}: {message}")]
    Malformed { offset: usize, message: String },
    #[error("unsupported MIDI: {0}")]
    Unsupported(String),
}

fn malformed(offset: usize, message: impl Into<String>) -> MidiError {
    MidiError::Malformed {
        offset,
        message: message.into(),
    }
}

/// A paired note-on/note-off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MidiNote {
    pub start: u32,
    pub duration: u32,
    pub pitch: u8,
    pub velocity: u8,
}

impl MidiNote {
    pub fn end(&self) -> u32 {
        self.start + self.duration
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MidiTrackData {
    pub name: String,
    pub channel: u8,
    pub program: u8,
    pub notes: Vec<MidiNote>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TempoEvent {
    pub tick: u32,
    pub micros_per_quarter: u32,
}

impl TempoEvent {
    pub fn bpm(&self) -> f64 {
        60_000_000.0 / self.micros_per_quarter as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeSignatureEvent {
    pub tick: u32,
    pub numerator: u8,
    /// Power of two, as stored in the file (2 = quarter).
    pub denominator_pow: u8,
    pub clocks_per_click: u8,
    pub thirty_seconds_per_quarter: u8,
}

impl TimeSignatureEvent {
    pub fn new(tick: u32, ts: TimeSignature) -> Self {
        let (num, den) = ts.fraction();
        TimeSignatureEvent {
            tick,
            numerator: num,
            denominator_pow: den.trailing_zeros() as u8,
            clocks_per_click: if ts == TimeSignature::SixEight { 36 } else { 24 },
            thirty_seconds_per_quarter: 8,
        }
    }

    pub fn denominator(&self) -> u32 {
        1u32 << self.denominator_pow.min(31)
    }

    pub fn signature(&self) -> Option<TimeSignature> {
        TimeSignature::from_fraction(self.numerator, self.denominator() as u8)
    }

    /// Bar length in ticks for an arbitrary signature.
    pub fn bar_ticks(&self, division: u16) -> u32 {
        self.numerator as u32 * division as u32 * 4 / self.denominator()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeySignatureEvent {
    pub tick: u32,
    /// Sharps (positive) or flats (negative), -7..=7.
    pub sharps: i8,
    pub minor: bool,
}

impl KeySignatureEvent {
    pub fn new(tick: u32, key: Key) -> Self {
        // position on the circle of fifths of the relative major
        let major_root = match key.mode {
            Mode::Major => key.root,
            Mode::Minor => key.root.transpose(3),
        };
        let mut sharps = (major_root.index() as i32 * 7).rem_euclid(12);
        if sharps > 6 {
            sharps -= 12;
        }
        KeySignatureEvent {
            tick,
            sharps: sharps as i8,
            minor: key.mode == Mode::Minor,
        }
    }

    pub fn key(&self) -> Key {
        let major_root = PitchClass::new(self.sharps as i32 * 7);
        if self.minor {
            Key::new(major_root.transpose(-3), Mode::Minor)
        } else {
            Key::new(major_root, Mode::Major)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MidiFile {
    pub division: u16,
    pub tempos: Vec<TempoEvent>,
    pub time_signatures: Vec<TimeSignatureEvent>,
    pub key_signatures: Vec<KeySignatureEvent>,
    pub tracks: Vec<MidiTrackData>,
    /// Recoverable oddities found while reading (unmatched notes and such).
    pub warnings: Vec<String>,
}

impl MidiFile {
    pub fn new(division: u16) -> Self {
        MidiFile {
            division,
            tempos: Vec::new(),
            time_signatures: Vec::new(),
            key_signatures: Vec::new(),
            tracks: Vec::new(),
            warnings: Vec::new(),
        }
    }

    /// Tempo of the first tempo event, 120 when absent.
    pub fn bpm(&self) -> f64 {
        self.tempos
            .first()
            .map(TempoEvent::bpm)
            .unwrap_or(60_000_000.0 / DEFAULT_TEMPO as f64)
    }

    /// First time signature; `None` when the file has one outside 4/4, 3/4, 6/8.
    pub fn time_signature(&self) -> Option<TimeSignature> {
        match self.time_signatures.first() {
            Some(ts) => ts.signature(),
            None => Some(TimeSignature::FourFour),
        }
    }

    pub fn key(&self) -> Option<Key> {
        self.key_signatures.first().map(KeySignatureEvent::key)
    }
}

/// General MIDI program to instrument category.
pub fn program_category(program: u8) -> Instrument {
    use Instrument::*;
    match program {
        0..=7 => Keyboard,       // pianos
        8..=15 => Idiophone,     // chromatic percussion
        16..=23 => Keyboard,     // organs
        24..=39 => PluckedString, // guitars and basses
        40..=45 => String,
        46 => PluckedString,     // harp
        47 => Percussion,        // timpani
        48..=55 => String,       // ensembles
        56..=79 => Wind,         // brass, reed, pipe
        80..=87 => Lead,
        88..=103 => Others,      // synth pads and effects
        104..=107 => PluckedString,
        108 => Idiophone,        // kalimba
        109 | 111 => Wind,
        110 => String,           // fiddle
        112..=115 => Idiophone,
        116..=118 => Percussion,
        _ => Others,
    }
}

/// Representative program written for a category.
pub fn category_program(instrument: Instrument) -> u8 {
    match instrument {
        Instrument::Keyboard => 0,
        Instrument::Lead => 80,
        Instrument::Idiophone => 10,
        Instrument::PluckedString => 24,
        Instrument::String => 48,
        Instrument::Wind => 73,
        Instrument::Percussion => 0,
        Instrument::Others => 88,
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u8(&mut self) -> Result<u8, MidiError> {
        let b = *self
            .bytes
            .get(self.pos)
            .ok_or_else(|| malformed(self.pos, "unexpected end of data"))?;
        self.pos += 1;
        Ok(b)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], MidiError> {
        if self.pos + n > self.bytes.len() {
            return Err(malformed(self.pos, format!("need {n} bytes")));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16, MidiError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, MidiError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn vlq(&mut self) -> Result<u32, MidiError> {
        let mut value = 0u32;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | (b & 0x7f) as u32;
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(malformed(self.pos, "variable-length quantity longer than 4 bytes"))
    }
}

#[derive(Default)]
struct ChannelState {
    program: Option<u8>,
    notes: Vec<MidiNote>,
    /// Open note-ons per pitch, first-in first-out.
    open: Vec<std::collections::VecDeque<(u32, u8)>>,
    has_events: bool,
}

/// Parses an SMF format 0 or 1 file.
pub fn read_midi(bytes: &[u8]) -> Result<MidiFile, MidiError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != b"MThd" {
        return Err(malformed(0, "missing MThd header"));
    }
    let header_len = r.u32()? as usize;
    if header_len < 6 {
        return Err(malformed(4, "header chunk too short"));
    }
    let header_start = r.pos;
    let format = r.u16()?;
    let ntracks = r.u16()?;
    let division = r.u16()?;
    r.pos = header_start + header_len;
    if format > 1 {
        return Err(MidiError::Unsupported(format!("SMF format {format}")));
    }
    if division & 0x8000 != 0 {
        return Err(MidiError::Unsupported("SMPTE time division".into()));
    }
    if division == 0 {
        return Err(malformed(12, "zero ticks per quarter"));
    }

    let mut file = MidiFile::new(division);
    for track_index in 0..ntracks {
        let chunk_start = r.pos;
        let id = r.take(4)?;
        let len = r.u32()? as usize;
        if id != b"MTrk" {
            // unknown chunk types are skipped per SMF rules
            r.take(len)?;
            continue;
        }
        let body = r.take(len).map_err(|_| malformed(chunk_start, "track chunk overruns file"))?;
        read_track(body, chunk_start + 8, track_index, &mut file)?;
    }
    // stable: keeps file order among equal ticks
    file.tempos.sort_by_key(|e| e.tick);
    file.time_signatures.sort_by_key(|e| e.tick);
    file.key_signatures.sort_by_key(|e| e.tick);
    Ok(file)
}

fn read_track(
    body: &[u8],
    base: usize,
    track_index: u16,
    file: &mut MidiFile,
) -> Result<(), MidiError> {
    let mut r = Reader { bytes: body, pos: 0 };
    let mut tick = 0u32;
    let mut running: Option<u8> = None;
    let mut name = String::new();
    let mut channels: Vec<ChannelState> = (0..16).map(|_| ChannelState::default()).collect();
    let at = |r: &Reader| base + r.pos;

    while r.pos < body.len() {
        tick = tick.saturating_add(r.vlq()?);
        let mut status = r.u8()?;
        let first_data = if status < 0x80 {
            let s = running.ok_or_else(|| malformed(at(&r) - 1, "data byte without running status"))?;
            let d = status;
            status = s;
            Some(d)
        } else {
            None
        };
        match status {
            0xff => {
                running = None;
                let kind = r.u8()?;
                let len = r.vlq()? as usize;
                let data = r.take(len)?;
                match kind {
                    0x2f => break,
                    0x03 if name.is_empty() => name = String::from_utf8_lossy(data).into_owned(),
                    0x51 if len == 3 => file.tempos.push(TempoEvent {
                        tick,
                        micros_per_quarter: u32::from_be_bytes([0, data[0], data[1], data[2]]),
                    }),
                    0x58 if len == 4 => file.time_signatures.push(TimeSignatureEvent {
                        tick,
                        numerator: data[0],
                        denominator_pow: data[1],
                        clocks_per_click: data[2],
                        thirty_seconds_per_quarter: data[3],
                    }),
                    0x59 if len == 2 => file.key_signatures.push(KeySignatureEvent {
                        tick,
                        sharps: data[0] as i8,
                        minor: data[1] != 0,
                    }),
                    _ => {}
                }
            }
            0xf0 | 0xf7 => {
                running = None;
                let len = r.vlq()? as usize;
                r.take(len)?;
            }
            0x80..=0xef => {
                running = Some(status);
                let kind = status & 0xf0;
                let ch = &mut channels[(status & 0x0f) as usize];
                let d1 = match first_data {
                    Some(d) => d,
                    None => r.u8()?,
                };
                let d2 = if matches!(kind, 0xc0 | 0xd0) { 0 } else { r.u8()? };
                match kind {
                    0x90 if d2 > 0 => {
                        ch.has_events = true;
                        if ch.open.is_empty() {
                            ch.open = vec![Default::default(); 128];
                        }
                        ch.open[(d1 & 0x7f) as usize].push_back((tick, d2));
                    }
                    0x80 | 0x90 => {
                        let pitch = d1 & 0x7f;
                        match ch.open.get_mut(pitch as usize).and_then(|q| q.pop_front()) {
                            Some((start, velocity)) => ch.notes.push(MidiNote {
                                start,
                                duration: tick - start,
                                pitch,
                                velocity,
                            }),
                            None => file.warnings.push(format!(
                                "track {track_index}: note-off without note-on (pitch {pitch}, tick {tick})"
                            )),
                        }
                    }
                    0xc0 => {
                        ch.has_events = true;
                        ch.program.get_or_insert(d1 & 0x7f);
                    }
                    _ => {}
                }
            }
            other => return Err(malformed(at(&r) - 1, format!("unexpected status byte {other:#04x}"))),
        }
    }

    for (channel, mut state) in channels.into_iter().enumerate() {
        for (pitch, queue) in state.open.iter_mut().enumerate() {
            for (start, velocity) in queue.drain(..) {
                file.warnings.push(format!(
                    "track {track_index}: note-on without note-off (pitch {pitch}, tick {start}); closed at track end"
                ));
                state.notes.push(MidiNote {
                    start,
                    duration: tick - start,
                    pitch: pitch as u8,
                    velocity,
                });
            }
        }
        if !state.has_events {
            continue;
        }
        state.notes.sort();
        file.tracks.push(MidiTrackData {
            name: name.clone(),
            channel: channel as u8,
            program: state.program.unwrap_or(0),
            notes: state.notes,
        });
    }
    Ok(())
}

fn push_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut buf = [0u8; 4];
    let mut n = 0;
    loop {
        buf[n] = (value & 0x7f) as u8;
        n += 1;
        value >>= 7;
        if value == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        out.push(buf[i] | if i > 0 { 0x80 } else { 0 });
    }
}

fn push_chunk(out: &mut Vec<u8>, events: &[(u32, Vec<u8>)]) {
    let mut body = Vec::new();
    let mut last = 0;
    for (tick, bytes) in events {
        push_vlq(&mut body, tick - last);
        body.extend_from_slice(bytes);
        last = *tick;
    }
    push_vlq(&mut body, 0);
    body.extend_from_slice(&[0xff, 0x2f, 0x00]);
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
}

/// Serializes a format-1 file: a conductor chunk with all meta events, then
/// one chunk per track. Output is a pure function of the input.
pub fn write_midi_file(file: &MidiFile) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&(file.tracks.len() as u16 + 1).to_be_bytes());
    out.extend_from_slice(&file.division.to_be_bytes());

    let mut meta: Vec<(u32, u8, Vec<u8>)> = Vec::new();
    for t in &file.tempos {
        let b = t.micros_per_quarter.to_be_bytes();
        meta.push((t.tick, 0, vec![0xff, 0x51, 0x03, b[1], b[2], b[3]]));
    }
    for ts in &file.time_signatures {
        meta.push((
            ts.tick,
            1,
            vec![
                0xff,
                0x58,
                0x04,
                ts.numerator,
                ts.denominator_pow,
                ts.clocks_per_click,
                ts.thirty_seconds_per_quarter,
            ],
        ));
    }
    for ks in &file.key_signatures {
        meta.push((ks.tick, 2, vec![0xff, 0x59, 0x02, ks.sharps as u8, ks.minor as u8]));
    }
    // stable sort keeps the per-kind order among equal ticks
    meta.sort_by_key(|(tick, kind, _)| (*tick, *kind));
    let meta: Vec<_> = meta.into_iter().map(|(t, _, b)| (t, b)).collect();
    push_chunk(&mut out, &meta);

    for track in &file.tracks {
        let ch = track.channel & 0x0f;
        let mut events: Vec<(u32, Vec<u8>)> = Vec::with_capacity(track.notes.len() * 2 + 2);
        let mut name = vec![0xff, 0x03];
        push_vlq(&mut name, track.name.len() as u32);
        name.extend_from_slice(track.name.as_bytes());
        events.push((0, name));
        events.push((0, vec![0xc0 | ch, track.program & 0x7f]));

        // (tick, off-before-on, pitch, velocity)
        let mut notes: Vec<(u32, u8, u8, u8)> = Vec::with_capacity(track.notes.len() * 2);
        for n in &track.notes {
            let pitch = n.pitch & 0x7f;
            notes.push((n.start, 1, pitch, n.velocity.clamp(1, 127)));
            notes.push((n.start + n.duration.max(1), 0, pitch, 0));
        }
        notes.sort_unstable();
        events.extend(notes.into_iter().map(|(tick, on, pitch, vel)| {
            let status = if on == 1 { 0x90 } else { 0x80 } | ch;
            (tick, vec![status, pitch, vel])
        }));
        push_chunk(&mut out, &events);
    }
    out
}

/// Writes tracks with a single tempo and time signature (and optional key)
/// at tick 0.
pub fn write_midi(
    tracks: &[MidiTrackData],
    bpm: f64,
    time_signature: TimeSignature,
    key: Option<Key>,
    division: u16,
) -> Vec<u8> {
    let mut file = MidiFile::new(division);
    file.tempos.push(TempoEvent {
        tick: 0,
        micros_per_quarter: (60_000_000.0 / bpm).round() as u32,
    });
    file.time_signatures
        .push(TimeSignatureEvent::new(0, time_signature));
    if let Some(key) = key {
        file.key_signatures.push(KeySignatureEvent::new(0, key));
    }
    file.tracks = tracks.to_vec();
    write_midi_file(&file)
}

/// Ticks per bar; 6/8 uses three quarter-note beats.
pub fn bar_ticks(ts: TimeSignature, division: u16) -> u32 {
    ts.quarters_per_bar() * division as u32
}

fn grid_to_ticks(grid: u32, bar_ticks: u32) -> u32 {
    // round half up of grid / 128 * bar_ticks
    ((grid as u64 * bar_ticks as u64 * 2 + GRID as u64) / (2 * GRID as u64)) as u32
}

/// Converts a sample's notes to ticks. Unknown time signatures count as 4/4.
pub fn sample_to_ticks(sample: &Sample, division: u16) -> MidiTrackData {
    let ts = sample
        .metadata
        .time_signature
        .unwrap_or(TimeSignature::FourFour);
    let bar = bar_ticks(ts, division);
    let label = |v: Option<String>| v.unwrap_or_else(|| "unknown".into());
    let name = format!(
        "{}/{}",
        label(sample.metadata.track_role.map(|r| r.to_string())),
        label(sample.metadata.instrument.map(|i| i.to_string()))
    );
    let notes = sample
        .notes
        .iter()
        .map(|n| {
            let start = n.bar * bar + grid_to_ticks(n.position as u32, bar);
            MidiNote {
                start,
                duration: grid_to_ticks(n.duration as u32, bar).max(1),
                pitch: n.pitch.0,
                velocity: n.velocity.0,
            }
        })
        .collect();
    let instrument = sample.metadata.instrument.unwrap_or(Instrument::Keyboard);
    MidiTrackData {
        name,
        channel: if instrument == Instrument::Percussion {
            PERCUSSION_CHANNEL
        } else {
            0
        },
        program: category_program(instrument),
        notes,
    }
}
