//! Deterministic sine synthesizer writing 16-bit stereo PCM at 44.1 kHz.

use crate::midi::MidiSequence;
use crate::{SymbolicError, PPQ};

pub const SAMPLE_RATE: u32 = 44_100;
pub const CHANNELS: u16 = 2;
pub const BITS_PER_SAMPLE: u16 = 16;
pub const AMPLITUDE: f64 = 0.2;
/// 10 ms
pub const ATTACK_FRAMES: u64 = 441;
/// 50 ms; also the length of the silent tail after the last note-off.
pub const RELEASE_FRAMES: u64 = 2205;

fn tick_to_frame(tick: u64, tempo_qpm: u32) -> u64 {
    tick * 60 * SAMPLE_RATE as u64 / (PPQ as u64 * tempo_qpm as u64)
}

/// Number of frames `synthesize_wav` produces for `seq`.
pub fn frame_count(seq: &MidiSequence) -> u64 {
    if seq.events.is_empty() {
        return 0;
    }
    let num = seq.end_tick() as u64 * 60 * SAMPLE_RATE as u64;
    let den = PPQ as u64 * seq.tempo_qpm as u64;
    num.div_ceil(den) + RELEASE_FRAMES
}

pub fn note_frequency(note: u8) -> f64 {
    440.0 * 2f64.powf((note as f64 - 69.0) / 12.0)
}

/// Renders every note as a sine with a linear attack/release envelope,
/// sums overlapping notes, hard-clips and writes both channels.
pub fn synthesize_wav(seq: &MidiSequence) -> Vec<u8> {
    let frames = frame_count(seq) as usize;
    let mut mix = vec![0f64; frames];
    for (onset, note, dur) in seq.notes() {
        let start = tick_to_frame(onset as u64, seq.tempo_qpm) as usize;
        let end = (tick_to_frame((onset + dur) as u64, seq.tempo_qpm) as usize).min(frames);
        let len = end.saturating_sub(start);
        let step = std::f64::consts::TAU * note_frequency(note) / SAMPLE_RATE as f64;
        for k in 0..len {
            let env = (k as f64 / ATTACK_FRAMES as f64)
                .min((len - k) as f64 / RELEASE_FRAMES as f64)
                .min(1.0);
            mix[start + k] += AMPLITUDE * env * (step * k as f64).sin();
        }
    }

    let data_len = frames * CHANNELS as usize * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&CHANNELS.to_le_bytes());
    out.extend_from_slice(&SAMPLE_RATE.to_le_bytes());
    let block_align = CHANNELS * BITS_PER_SAMPLE / 8;
    out.extend_from_slice(&(SAMPLE_RATE * block_align as u32).to_le_bytes());
    out.extend_from_slice(&block_align.to_le_bytes());
    out.extend_from_slice(&BITS_PER_SAMPLE.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for x in mix {
        let s = (x.clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16;
        let b = s.to_le_bytes();
        out.extend_from_slice(&b);
        out.extend_from_slice(&b);
    }
    out
}

/// Header facts of a PCM WAV file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavInfo {
    pub sample_rate: u32,
    pub channels: u16,
    pub bits_per_sample: u16,
    pub data_offset: usize,
    pub data_len: usize,
}

impl WavInfo {
    /// Walks the RIFF chunks. Fails when the declared data size does not
    /// match the bytes actually present.
    pub fn parse(bytes: &[u8]) -> Result<WavInfo, SymbolicError> {
        let bad = |m: &str| SymbolicError::Wav(m.to_string());
        if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
            return Err(bad("not a RIFF/WAVE file"));
        }
        let riff_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        if riff_len + 8 != bytes.len() {
            return Err(bad("RIFF size does not match file length"));
        }
        let mut pos = 12;
        let mut fmt = None;
        while pos + 8 <= bytes.len() {
            let id = &bytes[pos..pos + 4];
            let len = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
            let body = pos + 8;
            if id == b"fmt " {
                let f = bytes
                    .get(body..body + 16)
                    .ok_or_else(|| bad("truncated fmt chunk"))?;
                if u16::from_le_bytes([f[0], f[1]]) != 1 {
                    return Err(bad("not PCM"));
                }
                fmt = Some((
                    u16::from_le_bytes([f[2], f[3]]),
                    u32::from_le_bytes([f[4], f[5], f[6], f[7]]),
                    u16::from_le_bytes([f[14], f[15]]),
                ));
            } else if id == b"data" {
                let (channels, sample_rate, bits_per_sample) =
                    fmt.ok_or_else(|| bad("data before fmt"))?;
                if body + len != bytes.len() {
                    return Err(bad("declared data size does not match payload"));
                }
                return Ok(WavInfo {
                    sample_rate,
                    channels,
                    bits_per_sample,
                    data_offset: body,
                    data_len: len,
                });
            }
            pos = body + len + (len & 1);
        }
        Err(bad("missing data chunk"))
    }

    pub fn frames(&self) -> usize {
        let frame_bytes = (self.channels as usize * self.bits_per_sample as usize / 8).max(1);
        self.data_len / frame_bytes
    }

    pub fn duration_secs(&self) -> f64 {
        self.frames() as f64 / self.sample_rate as f64
    }
}
