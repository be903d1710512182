//! Symbolic music toolkit for the weave pipeline.
//!
//! Everything here is a pure function over values: ABC text is parsed into
//! an [`AbcTune`], compiled to a [`MidiSequence`] at 480 PPQ, and rendered as
//! a Standard MIDI File, a 44.1 kHz stereo WAV, an SVG sketch or an
//! [`AnalysisReport`].
//!
//! ```
//! use weave_symbolic::{abc_to_midi, parse_abc, write_smf};
//!
//! let tune = parse_abc("X:1\nM:4/4\nL:1/4\nK:G\nGABc|").unwrap();
//! let seq = abc_to_midi(&tune).unwrap();
//! assert_eq!(seq.notes()[0].1, 67);
//! assert_eq!(&write_smf(&seq)[..4], b"MThd");
//! ```

pub mod abc;
pub mod analysis;
pub mod midi;
pub mod smf;
pub mod svg;
pub mod wav;

pub use abc::{
    parse_abc, serialize_abc, validate_tune, AbcTune, Accidental, Bar, Diagnostic, Element, Key,
    Letter, Meter, Note,
};
pub use analysis::{analyze_tune, AnalysisReport};
pub use midi::{abc_to_midi, EventKind, MidiSequence, NoteEvent};
pub use num_rational::Rational64;
pub use smf::{read_smf, write_smf};
pub use svg::render_svg;
pub use wav::{synthesize_wav, WavInfo};

/// Ticks per quarter note.
pub const PPQ: u16 = 480;

#[derive(Debug, thiserror::Error)]
pub enum SymbolicError {
    #[error("invalid ABC: {}", join(.0))]
    Abc(Vec<Diagnostic>),
    #[error("bar {bar}: pitch {pitch} outside MIDI range 0-127")]
    PitchRange { bar: usize, pitch: i32 },
    #[error("length {0} is not representable at 480 PPQ")]
    Unrepresentable(String),
    #[error("malformed SMF: {0}")]
    Smf(String),
    #[error("malformed WAV: {0}")]
    Wav(String),
}

fn join(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl From<Vec<Diagnostic>> for SymbolicError {
    fn from(d: Vec<Diagnostic>) -> Self {
        SymbolicError::Abc(d)
    }
}
