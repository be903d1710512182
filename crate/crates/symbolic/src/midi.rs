//! Timed note events and the ABC to MIDI compiler.

use serde::{Deserialize, Serialize};

use crate::abc::{validate::for_each_pitch, AbcTune, Accidental, Key, Note};
use crate::{SymbolicError, PPQ};

pub const VELOCITY: u8 = 80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    // Declaration order matters: off sorts before on at equal ticks.
    Off,
    On,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteEvent {
    pub tick: u32,
    pub kind: EventKind,
    pub note: u8,
    pub velocity: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MidiSequence {
    pub ppq: u16,
    pub tempo_qpm: u32,
    pub events: Vec<NoteEvent>,
}

impl MidiSequence {
    pub fn new(tempo_qpm: u32) -> Self {
        Self {
            ppq: PPQ,
            tempo_qpm,
            events: Vec::new(),
        }
    }

    /// Sorts by (tick, off-before-on, note).
    pub fn sort(&mut self) {
        self.events.sort_by_key(|e| (e.tick, e.kind, e.note));
    }

    pub fn end_tick(&self) -> u32 {
        self.events.iter().map(|e| e.tick).max().unwrap_or(0)
    }

    pub fn duration_secs(&self) -> f64 {
        ticks_to_secs(self.end_tick() as u64, self.tempo_qpm)
    }

    /// Pairs every on with the next off of the same note, returning
    /// `(onset, note, duration)` triples sorted by onset then note.
    pub fn notes(&self) -> Vec<(u32, u8, u32)> {
        let mut open: Vec<Vec<u32>> = vec![Vec::new(); 128];
        let mut out = Vec::new();
        for e in &self.events {
            match e.kind {
                EventKind::On => open[e.note as usize].push(e.tick),
                EventKind::Off => {
                    if !open[e.note as usize].is_empty() {
                        let start = open[e.note as usize].remove(0);
                        out.push((start, e.note, e.tick - start));
                    }
                }
            }
        }
        out.sort();
        out
    }

    /// Structural problems: unsorted events, unmatched ons or offs, notes
    /// outside 0-127. Empty means the sequence is well formed.
    pub fn check(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let sorted = self
            .events
            .windows(2)
            .all(|w| (w[0].tick, w[0].kind) <= (w[1].tick, w[1].kind));
        if !sorted {
            problems.push("events are not sorted by tick (off before on)".to_string());
        }
        let mut open = [0usize; 128];
        for (i, e) in self.events.iter().enumerate() {
            if e.note > 127 || e.velocity > 127 {
                problems.push(format!("event {i}: note or velocity outside 0-127"));
                continue;
            }
            match e.kind {
                EventKind::On => open[e.note as usize] += 1,
                EventKind::Off if open[e.note as usize] == 0 => problems.push(format!(
                    "event {i}: off for note {} without a matching on",
                    e.note
                )),
                EventKind::Off => open[e.note as usize] -= 1,
            }
        }
        for (note, &n) in open.iter().enumerate() {
            if n > 0 {
                problems.push(format!(
                    "note {note}: {n} on event(s) without a matching off"
                ));
            }
        }
        problems
    }
}

pub(crate) fn ticks_to_secs(ticks: u64, tempo_qpm: u32) -> f64 {
    ticks as f64 / PPQ as f64 * 60.0 / tempo_qpm as f64
}

/// Accidentals written earlier in the current bar, indexed by letter. They
/// apply to that letter in every octave until the barline.
#[derive(Debug, Default, Clone)]
pub(crate) struct BarAccidentals([Option<Accidental>; 7]);

/// MIDI note number of `note`: uppercase C is 60, explicit accidentals win
/// and persist for the bar, otherwise the key signature applies.
pub(crate) fn pitch_of(note: &Note, key: &Key, carried: &mut BarAccidentals) -> i32 {
    let slot = &mut carried.0[note.letter.index() as usize];
    let alteration = match note.accidental {
        Accidental::None => match *slot {
            Some(acc) => acc.semitones(),
            None => key.alteration(note.letter),
        },
        explicit => {
            *slot = Some(explicit);
            explicit.semitones()
        }
    };
    60 + note.letter.semitone() + 12 * note.octave_shift + alteration
}

/// Compiles a tune to note events at 480 PPQ, velocity 80.
pub fn abc_to_midi(tune: &AbcTune) -> Result<MidiSequence, SymbolicError> {
    let mut out_of_range = None;
    for_each_pitch(tune, |bar, p| {
        if !(0..=127).contains(&p) && out_of_range.is_none() {
            out_of_range = Some((bar, p));
        }
    });
    if let Some((bar, pitch)) = out_of_range {
        return Err(SymbolicError::PitchRange { bar, pitch });
    }

    let mut seq = MidiSequence::new(tune.tempo_qpm);
    let mut tick: i64 = 0;
    for bar in &tune.bars {
        let mut carried = BarAccidentals::default();
        for element in bar {
            let dur = tune
                .ticks_for(element.units())
                .ok_or(SymbolicError::Unrepresentable(element.units().to_string()))?;
            for note in element.notes() {
                let pitch = pitch_of(note, &tune.key, &mut carried) as u8;
                let (on, off) = (tick as u32, (tick + dur) as u32);
                seq.events.push(NoteEvent {
                    tick: on,
                    kind: EventKind::On,
                    note: pitch,
                    velocity: VELOCITY,
                });
                seq.events.push(NoteEvent {
                    tick: off,
                    kind: EventKind::Off,
                    note: pitch,
                    velocity: 0,
                });
            }
            tick += dur;
        }
    }
    seq.sort();
    Ok(seq)
}

/// Total tick length of the tune body, including trailing rests.
pub fn tune_ticks(tune: &AbcTune) -> u64 {
    tune.elements()
        .filter_map(|e| tune.ticks_for(e.units()))
        .sum::<i64>() as u64
}
