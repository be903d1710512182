use num_rational::Rational64;

use super::{AbcTune, Diagnostic};
use crate::midi::{pitch_of, BarAccidentals};

/// Bar-sum and pitch-range checks. A short first bar (anacrusis) and a
/// short last bar are allowed when the tune has at least two bars.
pub fn validate_tune(tune: &AbcTune) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let expected = tune.meter.bar_length();
    let count = tune.bars.len();
    for (i, bar) in tune.bars.iter().enumerate() {
        let sum: Rational64 = bar.iter().map(|e| e.units() * tune.unit_length).sum();
        let edge = count >= 2 && (i == 0 || i + 1 == count);
        if sum == expected || (edge && sum < expected) {
            continue;
        }
        diags.push(Diagnostic::general(format!(
            "bar {} sums {}, expected {}",
            i + 1,
            in_meter_units(sum, tune.meter.den),
            tune.meter
        )));
    }

    for_each_pitch(tune, |bar, pitch| {
        if !(0..=127).contains(&pitch) {
            diags.push(Diagnostic::general(format!(
                "bar {bar}: pitch {pitch} outside MIDI range 0-127"
            )));
        }
    });
    diags
}

/// Formats a whole-note fraction over the meter denominator when that is
/// exact (`3/4` under 4/4, `5/8` under 6/8), reduced otherwise.
fn in_meter_units(sum: Rational64, den: u32) -> String {
    let scaled = sum * Rational64::from_integer(den as i64);
    if scaled.is_integer() {
        format!("{}/{}", scaled.to_integer(), den)
    } else {
        format!("{}/{}", sum.numer(), sum.denom())
    }
}

pub(crate) fn for_each_pitch(tune: &AbcTune, mut f: impl FnMut(usize, i32)) {
    for (i, bar) in tune.bars.iter().enumerate() {
        let mut carried = BarAccidentals::default();
        for element in bar {
            for note in element.notes() {
                f(i + 1, pitch_of(note, &tune.key, &mut carried));
            }
        }
    }
}
