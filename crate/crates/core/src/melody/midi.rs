//! Standard MIDI File output (format 0, one monophonic track) and the
//! matching reader used to re-ingest exported melodies.

use std::path::Path;

use super::{MelodySequence, NoteEvent};
use crate::error::{Error, Result};

pub const TICKS_PER_QUARTER: u16 = 480;
pub const DEFAULT_TEMPO_BPM: f64 = 120.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MidiOptions {
    pub tempo_bpm: f64,
    pub velocity: u8,
    pub channel: u8,
}

impl Default for MidiOptions {
    fn default() -> Self {
        MidiOptions {
            tempo_bpm: DEFAULT_TEMPO_BPM,
            velocity: 100,
            channel: 0,
        }
    }
}

fn to_ticks(quarters: f64) -> u32 {
    (quarters * f64::from(TICKS_PER_QUARTER)).round() as u32
}

fn push_vlq(out: &mut Vec<u8>, mut v: u32) {
    let mut buf = [0u8; 4];
    let mut i = 3;
    buf[i] = (v & 0x7f) as u8;
    v >>= 7;
    while v > 0 {
        i -= 1;
        buf[i] = (v & 0x7f) as u8 | 0x80;
        v >>= 7;
    }
    out.extend_from_slice(&buf[i..]);
}

/// Encodes `melody` as SMF bytes. Onsets follow the cumulative sum of
/// `duration + rest`; the end-of-track event sits at the total length so the
/// final rest survives a round trip.
pub fn midi_bytes(melody: &MelodySequence, opts: &MidiOptions) -> Result<Vec<u8>> {
    if melody.is_empty() {
        return Err(Error::EmptySequence);
    }
    if !(opts.tempo_bpm.is_finite() && opts.tempo_bpm > 0.0) {
        return Err(Error::InvalidConfig(format!("tempo {} bpm", opts.tempo_bpm)));
    }
    let channel = opts.channel & 0x0f;
    let vel = opts.velocity.min(127);
    let micros_per_quarter = ((60_000_000.0 / opts.tempo_bpm).round() as u32).min(0xff_ffff);

    // (absolute tick, raw event bytes); positions come from the exact
    // cumulative sum so rounding never drifts.
    let mut abs: Vec<(u32, Vec<u8>)> = Vec::with_capacity(melody.len() * 2 + 2);
    let t = micros_per_quarter.to_be_bytes();
    abs.push((0, vec![0xff, 0x51, 0x03, t[1], t[2], t[3]]));
    let mut cursor = 0.0;
    for n in &melody.notes {
        let key = n.pitch.min(127);
        abs.push((to_ticks(cursor), vec![0x90 | channel, key, vel]));
        abs.push((to_ticks(cursor + n.duration), vec![0x80 | channel, key, 0]));
        cursor += n.duration + n.rest;
    }
    abs.push((to_ticks(cursor), vec![0xff, 0x2f, 0x00]));

    let mut track = Vec::new();
    let mut last = 0;
    for (tick, bytes) in abs {
        push_vlq(&mut track, tick - last);
        last = tick;
        track.extend_from_slice(&bytes);
    }

    let mut out = Vec::with_capacity(track.len() + 22);
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&TICKS_PER_QUARTER.to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    Ok(out)
}

pub fn export_midi(melody: &MelodySequence, opts: &MidiOptions, out: impl AsRef<Path>) -> Result<()> {
    let bytes = midi_bytes(melody, opts)?;
    let out = out.as_ref();
    std::fs::write(out, bytes).map_err(|e| Error::io(out, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Event {
    NoteOn { key: u8, vel: u8 },
    NoteOff { key: u8 },
    EndOfTrack,
    Other,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Midi(format!("truncated file at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn vlq(&mut self) -> Result<u32> {
        let mut v = 0u32;
        for _ in 0..4 {
            let b = self.u8()?;
            v = (v << 7) | u32::from(b & 0x7f);
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(Error::Midi(format!("variable-length quantity too long at byte {}", self.pos)))
    }
}

/// Events of one track chunk with their absolute ticks.
type Track = Vec<(u64, Event)>;

/// Track chunks plus ticks per quarter.
fn parse_tracks(bytes: &[u8]) -> Result<(u16, Vec<Track>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != b"MThd" {
        return Err(Error::Midi("missing MThd header".into()));
    }
    let header_len = r.u32()? as usize;
    if header_len < 6 {
        return Err(Error::Midi(format!("header length {header_len}")));
    }
    let _format = r.u16()?;
    let ntracks = r.u16()?;
    let division = r.u16()?;
    r.take(header_len - 6)?;
    if division & 0x8000 != 0 {
        return Err(Error::Midi("timecode timing is not supported".into()));
    }
    if division == 0 {
        return Err(Error::Midi("zero ticks per quarter".into()));
    }

    let mut tracks = Vec::with_capacity(usize::from(ntracks));
    while tracks.len() < usize::from(ntracks) && r.pos < bytes.len() {
        let id = r.take(4)?;
        let len = r.u32()? as usize;
        let body = r.take(len)?;
        if id != b"MTrk" {
            continue;
        }
        let mut t = Reader { bytes: body, pos: 0 };
        let mut tick = 0u64;
        let mut running: Option<u8> = None;
        let mut events = Vec::new();
        while t.pos < body.len() {
            tick += u64::from(t.vlq()?);
            let mut status = t.u8()?;
            let ev = match status {
                0xff => {
                    let kind = t.u8()?;
                    let n = t.vlq()? as usize;
                    t.take(n)?;
                    running = None;
                    if kind == 0x2f {
                        Event::EndOfTrack
                    } else {
                        Event::Other
                    }
                }
                0xf0 | 0xf7 => {
                    let n = t.vlq()? as usize;
                    t.take(n)?;
                    running = None;
                    Event::Other
                }
                _ => {
                    let first_data = if status & 0x80 == 0 {
                        let data = status;
                        status = running.ok_or_else(|| Error::Midi("data byte without running status".into()))?;
                        Some(data)
                    } else {
                        running = Some(status);
                        None
                    };
                    let data = |t: &mut Reader| -> Result<u8> {
                        match first_data {
                            Some(d) => Ok(d),
                            None => t.u8(),
                        }
                    };
                    match status & 0xf0 {
                        0x90 => {
                            let key = data(&mut t)?;
                            let vel = t.u8()?;
                            if vel == 0 {
                                Event::NoteOff { key }
                            } else {
                                Event::NoteOn { key, vel }
                            }
                        }
                        0x80 => {
                            let key = data(&mut t)?;
                            t.u8()?;
                            Event::NoteOff { key }
                        }
                        0xa0 | 0xb0 | 0xe0 => {
                            data(&mut t)?;
                            t.u8()?;
                            Event::Other
                        }
                        0xc0 | 0xd0 => {
                            data(&mut t)?;
                            Event::Other
                        }
                        _ => return Err(Error::Midi(format!("unexpected status byte {status:#04x}"))),
                    }
                }
            };
            events.push((tick, ev));
        }
        tracks.push(events);
    }
    Ok((division, tracks))
}

/// Decodes the first track containing notes. Durations and rests are in
/// quarter notes, unquantized.
pub fn parse_midi(bytes: &[u8]) -> Result<MelodySequence> {
    let (division, tracks) = parse_tracks(bytes)?;
    let ppq = f64::from(division);
    for track in &tracks {
        let mut spans: Vec<(u8, u64, Option<u64>)> = Vec::new();
        let mut end = 0;
        for &(tick, ev) in track {
            match ev {
                Event::NoteOn { key, .. } => spans.push((key, tick, None)),
                Event::NoteOff { key } => {
                    if let Some(open) = spans.iter_mut().rev().find(|(k, _, off)| *k == key && off.is_none()) {
                        open.2 = Some(tick);
                    }
                }
                Event::EndOfTrack => end = tick,
                Event::Other => {}
            }
            end = end.max(tick);
        }
        if spans.is_empty() {
            continue;
        }
        let mut notes = Vec::with_capacity(spans.len());
        for (i, &(key, on, off)) in spans.iter().enumerate() {
            let off = off.unwrap_or(end);
            let next = spans.get(i + 1).map(|s| s.1).unwrap_or(end).max(off);
            notes.push(NoteEvent::new(key, (off - on) as f64 / ppq, (next - off) as f64 / ppq));
        }
        return Ok(MelodySequence::new(notes));
    }
    Err(Error::EmptySequence)
}

pub fn import_midi(path: impl AsRef<Path>) -> Result<MelodySequence> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_midi(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn onsets(bytes: &[u8]) -> (Vec<u64>, u64) {
        let (_, tracks) = parse_tracks(bytes).unwrap();
        let mut ons = Vec::new();
        let mut end = 0;
        for &(tick, ev) in &tracks[0] {
            match ev {
                Event::NoteOn { .. } => ons.push(tick),
                Event::EndOfTrack => end = tick,
                _ => {}
            }
        }
        (ons, end)
    }

    #[test]
    fn onsets_follow_cumulative_duration_and_rest() {
        let m = MelodySequence::new(vec![NoteEvent::new(60, 1.0, 0.0), NoteEvent::new(62, 1.0, 1.0)]);
        let bytes = midi_bytes(&m, &MidiOptions::default()).unwrap();
        let (ons, end) = onsets(&bytes);
        assert_eq!(ons, vec![0, 480]);
        assert_eq!(end, 3 * 480);
        let (division, tracks) = parse_tracks(&bytes).unwrap();
        assert_eq!(division, 480);
        assert_eq!(tracks.len(), 1);
    }

    #[test]
    fn header_bytes_are_format_zero() {
        let m = MelodySequence::new(vec![NoteEvent::new(60, 1.0, 0.0)]);
        let bytes = midi_bytes(&m, &MidiOptions::default()).unwrap();
        assert_eq!(&bytes[..14], b"MThd\0\0\0\x06\0\0\0\x01\x01\xe0");
        // 500000 us per quarter at 120 bpm
        assert_eq!(&bytes[22..29], &[0x00, 0xff, 0x51, 0x03, 0x07, 0xa1, 0x20]);
    }

    #[test]
    fn vlq_matches_reference_encodings() {
        for (v, enc) in [
            (0u32, vec![0x00]),
            (0x40, vec![0x40]),
            (0x7f, vec![0x7f]),
            (0x80, vec![0x81, 0x00]),
            (0x2000, vec![0xc0, 0x00]),
            (0x3fff, vec![0xff, 0x7f]),
            (0x0fff_ffff, vec![0xff, 0xff, 0xff, 0x7f]),
        ] {
            let mut out = Vec::new();
            push_vlq(&mut out, v);
            assert_eq!(out, enc, "{v:#x}");
            assert_eq!(Reader { bytes: &out, pos: 0 }.vlq().unwrap(), v);
        }
    }

    #[test]
    fn reader_handles_running_status_and_zero_velocity_off() {
        let track = [
            0x00, 0x90, 60, 100, // on
            0x60, 60, 0, // running-status on with vel 0 = off
            0x00, 62, 90, // running-status on
            0x83, 0x60, 0x80, 62, 0, // off after 480
            0x00, 0xff, 0x2f, 0x00,
        ];
        let mut bytes = b"MThd\0\0\0\x06\0\0\0\x01\0\x60MTrk".to_vec();
        bytes.extend_from_slice(&(track.len() as u32).to_be_bytes());
        bytes.extend_from_slice(&track);
        let m = parse_midi(&bytes).unwrap();
        assert_eq!(m.pitches(), vec![60, 62]);
        assert_eq!(m.notes[0].duration, 1.0);
        assert_eq!(m.notes[1].duration, 5.0);
    }

    #[test]
    fn truncated_file_is_an_error() {
        let m = MelodySequence::new(vec![NoteEvent::new(60, 1.0, 0.0)]);
        let bytes = midi_bytes(&m, &MidiOptions::default()).unwrap();
        assert!(matches!(parse_midi(&bytes[..bytes.len() - 2]), Err(Error::Midi(_))));
        assert!(matches!(parse_midi(b"RIFF"), Err(Error::Midi(_))));
    }

    #[test]
    fn empty_melody_is_rejected() {
        let err = midi_bytes(&MelodySequence::default(), &MidiOptions::default()).unwrap_err();
        assert_eq!(err.to_string(), "empty sequence");
    }

    #[test]
    fn round_trip_recovers_triplets() {
        let m = MelodySequence::new(vec![
            NoteEvent::new(60, 0.5, 0.25),
            NoteEvent::new(60, 1.5, 0.0),
            NoteEvent::new(67, 1.0 / 3.0, 2.0),
        ]);
        let back = parse_midi(&midi_bytes(&m, &MidiOptions::default()).unwrap()).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in m.notes.iter().zip(&back.notes) {
            assert_eq!(a.pitch, b.pitch);
            assert!((a.duration - b.duration).abs() < 1e-3);
            assert!((a.rest - b.rest).abs() < 1e-3);
        }
    }
}
