//! ABC notation: the tune model, a parser for the supported subset, the
//! canonical serializer and the bar-arithmetic validator.
//!
//! Supported subset:
//!
//! | feature                                   | handling            |
//! |-------------------------------------------|---------------------|
//! | headers X T M L Q K                       | parsed              |
//! | other header / info fields, `%%` lines    | ignored             |
//! | notes, octave marks `'` `,`               | parsed              |
//! | accidentals `^` `_` `=`                   | parsed              |
//! | double accidentals `^^` `__`              | diagnostic          |
//! | lengths `2` `/2` `/` `//` `3/2` `3/`      | parsed              |
//! | rests `z` `x`                             | parsed              |
//! | chords `[CEG]2`                           | parsed              |
//! | barlines, repeat barlines `|:` `:|` `::`  | bar boundaries (repeats are not expanded) |
//! | voltas `[1` `|1` `:|2`                    | diagnostic          |
//! | decorations `!..!` `+..+` `~ .` and the symbol letters `H`-`W` `h`-`w`, annotations `".."`, slurs `( )` | ignored |
//! | ties `-`, tuplets `(3`, grace notes `{}`, broken rhythm `< >` | diagnostic |
//! | multi-measure rests `Z`, voice overlay `&`, inline fields `[K:..]` | diagnostic |
//! | mid-tune `K:` `M:` `L:` `Q:` `V:` lines    | diagnostic          |
//! | minor and modal keys                      | diagnostic          |
//!
//! `L:` defaults to 1/8 and `Q:` to 1/4=120 when absent.

mod parse;
pub(crate) mod validate;
mod write;

use std::fmt;

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

pub use parse::parse_abc;
pub use validate::validate_tune;
pub use write::serialize_abc;

/// Ticks per whole note at the fixed 480 PPQ resolution.
pub const TICKS_PER_WHOLE: i64 = 4 * crate::PPQ as i64;

/// A parse or validation finding. `line`/`column` are 1-based; zero means
/// the finding is not tied to a source position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl Diagnostic {
    pub fn at(line: usize, column: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            column,
            message: message.into(),
        }
    }

    pub fn general(message: impl Into<String>) -> Self {
        Self::at(0, 0, message)
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            f.write_str(&self.message)
        } else {
            write!(f, "{}:{}: {}", self.line, self.column, self.message)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Letter {
    C,
    D,
    E,
    F,
    G,
    A,
    B,
}

impl Letter {
    pub const ALL: [Letter; 7] = [
        Letter::C,
        Letter::D,
        Letter::E,
        Letter::F,
        Letter::G,
        Letter::A,
        Letter::B,
    ];

    /// Semitone offset above C.
    pub fn semitone(self) -> i32 {
        match self {
            Letter::C => 0,
            Letter::D => 2,
            Letter::E => 4,
            Letter::F => 5,
            Letter::G => 7,
            Letter::A => 9,
            Letter::B => 11,
        }
    }

    /// Diatonic step index above C (C=0 .. B=6).
    pub fn index(self) -> i32 {
        self as i32
    }

    pub fn from_index(index: i32) -> Letter {
        Letter::ALL[index.rem_euclid(7) as usize]
    }

    pub fn from_char(c: char) -> Option<Letter> {
        Some(match c.to_ascii_uppercase() {
            'C' => Letter::C,
            'D' => Letter::D,
            'E' => Letter::E,
            'F' => Letter::F,
            'G' => Letter::G,
            'A' => Letter::A,
            'B' => Letter::B,
            _ => return None,
        })
    }

    pub fn as_char(self) -> char {
        b"CDEFGAB"[self as usize] as char
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Accidental {
    #[default]
    None,
    Sharp,
    Flat,
    Natural,
}

impl Accidental {
    pub(crate) fn semitones(self) -> i32 {
        match self {
            Accidental::Sharp => 1,
            Accidental::Flat => -1,
            Accidental::None | Accidental::Natural => 0,
        }
    }
}

/// A single pitched note. `octave_shift` is relative to the uppercase
/// octave, so `C` is 0, `c` is 1, `c'` is 2 and `C,` is -1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Note {
    pub letter: Letter,
    pub octave_shift: i32,
    pub accidental: Accidental,
    /// Multiplier of the tune's unit length.
    pub length: Rational64,
}

impl Note {
    pub fn new(letter: Letter, octave_shift: i32) -> Self {
        Self {
            letter,
            octave_shift,
            accidental: Accidental::None,
            length: Rational64::from_integer(1),
        }
    }

    pub fn with_length(mut self, length: Rational64) -> Self {
        self.length = length;
        self
    }

    pub fn with_accidental(mut self, accidental: Accidental) -> Self {
        self.accidental = accidental;
        self
    }

    /// Diatonic position counted in letter steps from C0 (MIDI octave -1 is
    /// not representable in ABC so the uppercase octave maps to octave 4).
    pub fn diatonic_position(&self) -> i32 {
        (4 + self.octave_shift) * 7 + self.letter.index()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Element {
    Note(Note),
    Rest {
        length: Rational64,
    },
    /// Sounding duration is `length` times the first member's length.
    Chord {
        notes: Vec<Note>,
        length: Rational64,
    },
}

impl Element {
    /// Duration in multiples of the unit length.
    pub fn units(&self) -> Rational64 {
        match self {
            Element::Note(n) => n.length,
            Element::Rest { length } => *length,
            Element::Chord { notes, length } => {
                *length
                    * notes
                        .first()
                        .map(|n| n.length)
                        .unwrap_or_else(|| Rational64::from_integer(1))
            }
        }
    }

    pub fn notes(&self) -> &[Note] {
        match self {
            Element::Note(n) => std::slice::from_ref(n),
            Element::Rest { .. } => &[],
            Element::Chord { notes, .. } => notes,
        }
    }
}

pub type Bar = Vec<Element>;

/// Major key signature given by its tonic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Key {
    pub tonic: Letter,
    pub tonic_accidental: Accidental,
}

impl Key {
    pub const C_MAJOR: Key = Key {
        tonic: Letter::C,
        tonic_accidental: Accidental::None,
    };

    /// Parses a tonic spelling such as `G`, `F#` or `Bb`. Only spellings
    /// with at most seven sharps or flats are accepted.
    pub fn from_tonic(s: &str) -> Option<Key> {
        let mut chars = s.chars();
        let tonic = chars
            .next()
            .filter(|c| c.is_ascii_uppercase())
            .and_then(Letter::from_char)?;
        let tonic_accidental = match chars.as_str() {
            "" => Accidental::None,
            "#" | "♯" => Accidental::Sharp,
            "b" | "♭" => Accidental::Flat,
            _ => return None,
        };
        let key = Key {
            tonic,
            tonic_accidental,
        };
        key.fifths_checked().map(|_| key)
    }

    fn fifths_checked(&self) -> Option<i32> {
        use Accidental::*;
        use Letter::*;
        Some(match (self.tonic, self.tonic_accidental) {
            (C, None) => 0,
            (G, None) => 1,
            (D, None) => 2,
            (A, None) => 3,
            (E, None) => 4,
            (B, None) => 5,
            (F, Sharp) => 6,
            (C, Sharp) => 7,
            (F, None) => -1,
            (B, Flat) => -2,
            (E, Flat) => -3,
            (A, Flat) => -4,
            (D, Flat) => -5,
            (G, Flat) => -6,
            (C, Flat) => -7,
            _ => return Option::None,
        })
    }

    /// Position on the circle of fifths: sharps positive, flats negative.
    pub fn fifths(&self) -> i32 {
        self.fifths_checked()
            .expect("key constructed from a valid tonic")
    }

    /// Semitone alteration the signature applies to an unaltered letter.
    pub fn alteration(&self, letter: Letter) -> i32 {
        const SHARP_ORDER: [Letter; 7] = [
            Letter::F,
            Letter::C,
            Letter::G,
            Letter::D,
            Letter::A,
            Letter::E,
            Letter::B,
        ];
        let fifths = self.fifths();
        if fifths > 0 && SHARP_ORDER[..fifths as usize].contains(&letter) {
            1
        } else if fifths < 0
            && SHARP_ORDER
                .iter()
                .rev()
                .take((-fifths) as usize)
                .any(|&l| l == letter)
        {
            -1
        } else {
            0
        }
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.tonic.as_char())?;
        match self.tonic_accidental {
            Accidental::Sharp => f.write_str("#"),
            Accidental::Flat => f.write_str("b"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meter {
    pub num: u32,
    pub den: u32,
}

impl Meter {
    pub fn new(num: u32, den: u32) -> Self {
        Self { num, den }
    }

    /// Bar length as a fraction of a whole note.
    pub fn bar_length(&self) -> Rational64 {
        Rational64::new(self.num as i64, self.den as i64)
    }
}

impl fmt::Display for Meter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbcTune {
    pub index: u32,
    pub title: String,
    pub meter: Meter,
    /// Unit note length as a fraction of a whole note.
    pub unit_length: Rational64,
    pub tempo_qpm: u32,
    pub key: Key,
    pub bars: Vec<Bar>,
}

impl AbcTune {
    pub const DEFAULT_UNIT: (i64, i64) = (1, 8);
    pub const DEFAULT_TEMPO: u32 = 120;

    pub fn new(title: impl Into<String>, meter: Meter, key: Key) -> Self {
        Self {
            index: 1,
            title: title.into(),
            meter,
            unit_length: Rational64::new(Self::DEFAULT_UNIT.0, Self::DEFAULT_UNIT.1),
            tempo_qpm: Self::DEFAULT_TEMPO,
            key,
            bars: Vec::new(),
        }
    }

    /// Duration of `units` unit lengths in ticks, if integral.
    pub fn ticks_for(&self, units: Rational64) -> Option<i64> {
        let ticks = units * self.unit_length * TICKS_PER_WHOLE;
        ticks.is_integer().then(|| ticks.to_integer())
    }

    pub fn elements(&self) -> impl Iterator<Item = &Element> {
        self.bars.iter().flatten()
    }

    pub fn note_count(&self) -> usize {
        self.elements().map(|e| e.notes().len()).sum()
    }
}
