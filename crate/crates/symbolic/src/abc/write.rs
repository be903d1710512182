use std::fmt::Write as _;

use num_rational::Rational64;

use super::{AbcTune, Accidental, Element, Note};

/// Canonical text: headers X, T, M, L, Q, K in that order, then every bar
/// terminated by `|`, four bars per line.
pub fn serialize_abc(tune: &AbcTune) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "X:{}", tune.index);
    let _ = writeln!(out, "T:{}", tune.title.replace('\n', " "));
    let _ = writeln!(out, "M:{}", tune.meter);
    let _ = writeln!(
        out,
        "L:{}/{}",
        tune.unit_length.numer(),
        tune.unit_length.denom()
    );
    let _ = writeln!(out, "Q:1/4={}", tune.tempo_qpm);
    let _ = writeln!(out, "K:{}", tune.key);
    for (i, bar) in tune.bars.iter().enumerate() {
        for (j, element) in bar.iter().enumerate() {
            if j > 0 {
                out.push(' ');
            }
            write_element(&mut out, element);
        }
        out.push('|');
        if i % 4 == 3 || i + 1 == tune.bars.len() {
            out.push('\n');
        }
    }
    out
}

fn write_element(out: &mut String, element: &Element) {
    match element {
        Element::Note(n) => write_note(out, n),
        Element::Rest { length } => {
            out.push('z');
            write_length(out, *length);
        }
        Element::Chord { notes, length } => {
            out.push('[');
            for n in notes {
                write_note(out, n);
            }
            out.push(']');
            write_length(out, *length);
        }
    }
}

fn write_note(out: &mut String, note: &Note) {
    match note.accidental {
        Accidental::Sharp => out.push('^'),
        Accidental::Flat => out.push('_'),
        Accidental::Natural => out.push('='),
        Accidental::None => {}
    }
    let letter = note.letter.as_char();
    if note.octave_shift >= 1 {
        out.push(letter.to_ascii_lowercase());
        out.extend(std::iter::repeat_n('\'', (note.octave_shift - 1) as usize));
    } else {
        out.push(letter);
        out.extend(std::iter::repeat_n(',', (-note.octave_shift) as usize));
    }
    write_length(out, note.length);
}

fn write_length(out: &mut String, length: Rational64) {
    let (n, d) = (*length.numer(), *length.denom());
    match (n, d) {
        (1, 1) => {}
        (n, 1) => {
            let _ = write!(out, "{n}");
        }
        (1, 2) => out.push('/'),
        (1, d) => {
            let _ = write!(out, "/{d}");
        }
        (n, d) => {
            let _ = write!(out, "{n}/{d}");
        }
    }
}
