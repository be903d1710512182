//! Standard MIDI File (format 0) writer and a reader for the subset the
//! pipeline consumes.

use crate::midi::{EventKind, MidiSequence, NoteEvent};
use crate::{SymbolicError, PPQ};

/// Appends `value` as a variable-length quantity (7 bits per byte, high bit
/// set on all but the last byte).
pub fn write_vlq(out: &mut Vec<u8>, value: u32) {
    let mut buf = [0u8; 5];
    let mut i = buf.len() - 1;
    let mut v = value;
    buf[i] = (v & 0x7f) as u8;
    v >>= 7;
    while v > 0 {
        i -= 1;
        buf[i] = 0x80 | (v & 0x7f) as u8;
        v >>= 7;
    }
    out.extend_from_slice(&buf[i..]);
}

/// Reads a variable-length quantity, returning the value and bytes consumed.
pub fn read_vlq(bytes: &[u8]) -> Option<(u32, usize)> {
    let mut value: u32 = 0;
    for (i, &b) in bytes.iter().enumerate().take(4) {
        value = (value << 7) | (b & 0x7f) as u32;
        if b & 0x80 == 0 {
            return Some((value, i + 1));
        }
    }
    None
}

pub fn tempo_micros(tempo_qpm: u32) -> u32 {
    ((60_000_000.0 / tempo_qpm as f64).round() as u32).min(0xFF_FFFF)
}

/// Serializes a sequence as a single-track format 0 file at its PPQ.
pub fn write_smf(seq: &MidiSequence) -> Vec<u8> {
    let mut track = Vec::new();
    let us = tempo_micros(seq.tempo_qpm);
    track.extend_from_slice(&[0x00, 0xFF, 0x51, 0x03]);
    track.extend_from_slice(&us.to_be_bytes()[1..]);

    let mut last = 0u32;
    for e in &seq.events {
        write_vlq(&mut track, e.tick - last);
        last = e.tick;
        let status = match e.kind {
            EventKind::On => 0x90,
            EventKind::Off => 0x80,
        };
        track.extend_from_slice(&[status, e.note & 0x7f, e.velocity & 0x7f]);
    }
    track.extend_from_slice(&[0x00, 0xFF, 0x2F, 0x00]);

    let mut out = Vec::with_capacity(22 + track.len());
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&seq.ppq.to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    out
}

/// Reads note events and the first tempo from a format 0 or 1 file,
/// rescaling ticks to 480 PPQ. Running status and zero-velocity note-ons
/// are understood; other events are skipped.
pub fn read_smf(bytes: &[u8]) -> Result<MidiSequence, SymbolicError> {
    let bad = |m: &str| SymbolicError::Smf(m.to_string());
    if bytes.len() < 14 || &bytes[0..4] != b"MThd" {
        return Err(bad("missing MThd header"));
    }
    let header_len = u32::from_be_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let format = u16::from_be_bytes([bytes[8], bytes[9]]);
    let ntracks = u16::from_be_bytes([bytes[10], bytes[11]]);
    let division = u16::from_be_bytes([bytes[12], bytes[13]]);
    if format > 1 {
        return Err(bad("only format 0 and 1 files are supported"));
    }
    if division == 0 || division & 0x8000 != 0 {
        return Err(bad("SMPTE or zero time division"));
    }
    let mut pos = 8 + header_len;
    let mut seq = MidiSequence::new(120);
    let mut tempo_seen = false;

    for _ in 0..ntracks {
        if bytes.len() < pos + 8 || &bytes[pos..pos + 4] != b"MTrk" {
            return Err(bad("missing MTrk chunk"));
        }
        let len = u32::from_be_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let data = bytes
            .get(pos + 8..pos + 8 + len)
            .ok_or_else(|| bad("truncated track"))?;
        pos += 8 + len;

        let mut i = 0;
        let mut tick: u64 = 0;
        let mut running: Option<u8> = None;
        while i < data.len() {
            let (delta, n) = read_vlq(&data[i..]).ok_or_else(|| bad("bad delta time"))?;
            i += n;
            tick += delta as u64;
            let mut status = *data.get(i).ok_or_else(|| bad("truncated event"))?;
            if status & 0x80 != 0 {
                i += 1;
            } else {
                status = running.ok_or_else(|| bad("running status without a prior status"))?;
            }
            match status {
                0xFF => {
                    let kind = *data.get(i).ok_or_else(|| bad("truncated meta event"))?;
                    let (mlen, n) =
                        read_vlq(&data[i + 1..]).ok_or_else(|| bad("bad meta length"))?;
                    let body = data
                        .get(i + 1 + n..i + 1 + n + mlen as usize)
                        .ok_or_else(|| bad("truncated meta"))?;
                    if kind == 0x51 && mlen == 3 && !tempo_seen {
                        let us = u32::from_be_bytes([0, body[0], body[1], body[2]]);
                        if us > 0 {
                            seq.tempo_qpm = (60_000_000.0 / us as f64).round() as u32;
                        }
                        tempo_seen = true;
                    }
                    i += 1 + n + mlen as usize;
                    if kind == 0x2F {
                        break;
                    }
                }
                0xF0 | 0xF7 => {
                    let (slen, n) = read_vlq(&data[i..]).ok_or_else(|| bad("bad sysex length"))?;
                    i += n + slen as usize;
                }
                _ => {
                    running = Some(status);
                    let argc = match status & 0xF0 {
                        0xC0 | 0xD0 => 1,
                        0x80..=0xE0 => 2,
                        _ => return Err(bad("unexpected status byte")),
                    };
                    let args = data
                        .get(i..i + argc)
                        .ok_or_else(|| bad("truncated channel event"))?;
                    i += argc;
                    let scaled = (tick * PPQ as u64 / division as u64) as u32;
                    let kind = match (status & 0xF0, args.get(1).copied().unwrap_or(0)) {
                        (0x90, v) if v > 0 => Some(EventKind::On),
                        (0x90, _) | (0x80, _) => Some(EventKind::Off),
                        _ => None,
                    };
                    if let Some(kind) = kind {
                        let velocity = if kind == EventKind::On { args[1] } else { 0 };
                        seq.events.push(NoteEvent {
                            tick: scaled,
                            kind,
                            note: args[0],
                            velocity,
                        });
                    }
                }
            }
        }
    }
    seq.sort();
    Ok(seq)
}
