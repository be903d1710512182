use num_rational::Rational64;

use super::{AbcTune, Accidental, Bar, Diagnostic, Element, Key, Letter, Meter, Note};

/// Parses one tune. All problems found are reported together.
pub fn parse_abc(text: &str) -> Result<AbcTune, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let mut index = None;
    let mut title = None;
    let mut meter = None;
    let mut unit = None;
    let mut tempo = None;
    let mut key = None;
    let mut saw_key = false;
    let mut body: Vec<(usize, &str)> = Vec::new();
    let mut in_body = false;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if !in_body {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('%') {
                continue;
            }
            match field(line) {
                Some((name, value)) => {
                    let value = strip_comment(value).trim();
                    match name {
                        'X' => match value.parse::<u32>() {
                            Ok(n) => index = Some(n),
                            Err(_) => diags.push(Diagnostic::at(line_no, 3, "malformed X: field")),
                        },
                        'T' => {
                            if title.is_none() {
                                title = Some(value.to_string());
                            }
                        }
                        'M' => match parse_meter(value) {
                            Some(m) => meter = Some(m),
                            None => diags.push(Diagnostic::at(
                                line_no,
                                3,
                                format!("unsupported meter {value:?}"),
                            )),
                        },
                        'L' => match parse_fraction(value) {
                            Some(f) if *f.numer() > 0 => unit = Some(f),
                            _ => diags.push(Diagnostic::at(
                                line_no,
                                3,
                                format!("malformed unit length {value:?}"),
                            )),
                        },
                        'Q' => match parse_tempo(value) {
                            Some(q) => tempo = Some(q),
                            None => diags.push(Diagnostic::at(
                                line_no,
                                3,
                                format!("malformed tempo {value:?}"),
                            )),
                        },
                        'K' => {
                            saw_key = true;
                            match parse_key(value) {
                                Ok(k) => key = Some(k),
                                Err(msg) => diags.push(Diagnostic::at(line_no, 3, msg)),
                            }
                            in_body = true;
                        }
                        _ => {}
                    }
                }
                None => {
                    // Body text before the K: line; keep parsing so the
                    // missing-key diagnostic is reported.
                    in_body = true;
                    body.push((line_no, line));
                }
            }
        } else {
            if line.trim().is_empty() {
                break;
            }
            body.push((line_no, line));
        }
    }

    if !saw_key {
        diags.push(Diagnostic::general("missing key (K:) header"));
    }
    if meter.is_none() && !diags.iter().any(|d| d.message.contains("meter")) {
        diags.push(Diagnostic::general("missing meter (M:) header"));
    }

    let unit_length =
        unit.unwrap_or_else(|| Rational64::new(AbcTune::DEFAULT_UNIT.0, AbcTune::DEFAULT_UNIT.1));
    let mut parser = BodyParser::new(&body, unit_length);
    parser.run();
    diags.extend(parser.diags);

    if !diags.is_empty() {
        return Err(diags);
    }
    Ok(AbcTune {
        index: index.unwrap_or(1),
        title: title.unwrap_or_default(),
        meter: meter.expect("checked above"),
        unit_length,
        tempo_qpm: tempo.unwrap_or(AbcTune::DEFAULT_TEMPO),
        key: key.expect("checked above"),
        bars: parser.bars,
    })
}

fn field(line: &str) -> Option<(char, &str)> {
    let mut chars = line.chars();
    let name = chars.next()?;
    if (name.is_ascii_alphabetic() || name == '+') && chars.next() == Some(':') {
        Some((name, &line[2..]))
    } else {
        None
    }
}

fn strip_comment(s: &str) -> &str {
    match s.find('%') {
        Some(i) if i == 0 || s.as_bytes()[i - 1] != b'\\' => &s[..i],
        _ => s,
    }
}

fn parse_meter(s: &str) -> Option<Meter> {
    match s {
        "C" => return Some(Meter::new(4, 4)),
        "C|" => return Some(Meter::new(2, 2)),
        _ => {}
    }
    let (n, d) = s.split_once('/')?;
    let num: u32 = n.trim().parse().ok()?;
    let den: u32 = d.trim().parse().ok()?;
    (num > 0 && den > 0).then(|| Meter::new(num, den))
}

fn parse_fraction(s: &str) -> Option<Rational64> {
    let (n, d) = s.split_once('/')?;
    let num: i64 = n.trim().parse().ok()?;
    let den: i64 = d.trim().parse().ok()?;
    (den > 0).then(|| Rational64::new(num, den))
}

/// `Q:1/4=120`, `Q:3/8=40`, `Q:"Allegro" 1/4=120` or a bare `Q:120`
/// (read as quarter notes per minute).
fn parse_tempo(s: &str) -> Option<u32> {
    let mut rest = String::new();
    let mut in_quote = false;
    for c in s.chars() {
        match c {
            '"' => in_quote = !in_quote,
            _ if !in_quote => rest.push(c),
            _ => {}
        }
    }
    let rest = rest.trim();
    if rest.is_empty() {
        return Some(AbcTune::DEFAULT_TEMPO);
    }
    let qpm = match rest.split_once('=') {
        Some((beat, n)) => {
            let beat = parse_fraction(beat.trim())?;
            let n: i64 = n.trim().parse().ok()?;
            let qpm = beat * Rational64::from_integer(n * 4);
            qpm.round().to_integer()
        }
        None => rest.parse().ok()?,
    };
    u32::try_from(qpm).ok().filter(|&q| q > 0)
}

fn parse_key(s: &str) -> Result<Key, String> {
    let mut words = s.split_whitespace().filter(|w| !w.contains('='));
    let first = words
        .next()
        .ok_or_else(|| "missing key (K:) value".to_string())?;
    // "Gmaj" / "G major" / "Gion"
    let split = first
        .char_indices()
        .skip(1)
        .find(|&(_, c)| c != '#' && c != 'b' && c != '♯' && c != '♭')
        .map(|(i, _)| i)
        .unwrap_or(first.len());
    let (tonic, attached_mode) = first.split_at(split);
    let mode = if attached_mode.is_empty() {
        words.next().unwrap_or("")
    } else {
        attached_mode
    };
    let mode_lc = mode.to_ascii_lowercase();
    if !(mode_lc.is_empty() || ["maj", "major", "ion", "ionian"].contains(&mode_lc.as_str())) {
        return Err(format!("unsupported key mode {mode:?} (major keys only)"));
    }
    Key::from_tonic(tonic).ok_or_else(|| format!("unsupported key {first:?}"))
}

struct BodyParser {
    chars: Vec<(char, usize, usize)>,
    pos: usize,
    unit_length: Rational64,
    bars: Vec<Bar>,
    current: Bar,
    diags: Vec<Diagnostic>,
}

impl BodyParser {
    fn new(lines: &[(usize, &str)], unit_length: Rational64) -> Self {
        let mut chars = Vec::new();
        let mut diags = Vec::new();
        for &(line_no, line) in lines {
            if line.trim_start().starts_with('%') {
                continue;
            }
            if let Some((name, _)) = field(line) {
                if matches!(name, 'K' | 'M' | 'L' | 'Q' | 'V') {
                    diags.push(Diagnostic::at(
                        line_no,
                        1,
                        format!("unsupported mid-tune {name}: field"),
                    ));
                }
                continue;
            }
            for (col, c) in line.chars().enumerate() {
                chars.push((c, line_no, col + 1));
            }
            chars.push(('\n', line_no, line.chars().count() + 1));
        }
        Self {
            chars,
            pos: 0,
            unit_length,
            bars: Vec::new(),
            current: Vec::new(),
            diags,
        }
    }

    fn peek(&self) -> Option<char> {
        self.peek_at(0)
    }

    fn peek_at(&self, offset: usize) -> Option<char> {
        self.chars.get(self.pos + offset).map(|&(c, _, _)| c)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek();
        self.pos += 1;
        c
    }

    fn error_here(&mut self, message: impl Into<String>) {
        let (line, col) = self
            .chars
            .get(self.pos.min(self.chars.len().saturating_sub(1)))
            .map(|&(_, l, c)| (l, c))
            .unwrap_or((0, 0));
        self.diags.push(Diagnostic::at(line, col, message));
    }

    fn close_bar(&mut self) {
        if !self.current.is_empty() {
            self.bars.push(std::mem::take(&mut self.current));
        }
    }

    fn run(&mut self) {
        while let Some(c) = self.peek() {
            match c {
                ' ' | '\t' | '\n' | '`' | '\\' | 'y' | ')' => {
                    self.pos += 1;
                }
                '%' => self.skip_until('\n'),
                '"' => self.skip_delimited('"', "unterminated annotation"),
                '!' => self.skip_delimited('!', "unterminated decoration"),
                '+' => self.skip_delimited('+', "unterminated decoration"),
                '.' | '~' | 'H'..='W' | 'h'..='w' => {
                    self.pos += 1;
                }
                '(' => {
                    if self.peek_at(1).is_some_and(|c| c.is_ascii_digit()) {
                        self.error_here("tuplets are not supported");
                        self.pos += 2;
                    } else {
                        self.pos += 1;
                    }
                }
                '-' => {
                    self.error_here("ties are not supported");
                    self.pos += 1;
                }
                '{' => {
                    self.error_here("grace notes are not supported");
                    self.skip_until('}');
                    self.pos += 1;
                }
                '<' | '>' => {
                    self.error_here("broken rhythm is not supported");
                    self.pos += 1;
                }
                '&' => {
                    self.error_here("voice overlay is not supported");
                    self.pos += 1;
                }
                'Z' => {
                    self.error_here("multi-measure rests are not supported");
                    self.pos += 1;
                }
                '|' | ':' => self.barline(),
                '[' => match self.peek_at(1) {
                    Some('|') => self.barline(),
                    Some(d) if d.is_ascii_digit() => {
                        self.error_here("voltas are not supported");
                        self.pos += 2;
                    }
                    Some(l) if l.is_ascii_alphabetic() && self.peek_at(2) == Some(':') => {
                        self.error_here("inline fields are not supported");
                        self.skip_until(']');
                        self.pos += 1;
                    }
                    _ => self.chord(),
                },
                'z' | 'x' => {
                    self.pos += 1;
                    if let Some(length) = self.length() {
                        self.current.push(Element::Rest { length });
                    }
                }
                '^' | '_' | '=' | 'A'..='G' | 'a'..='g' => {
                    if let Some(note) = self.note() {
                        self.current.push(Element::Note(note));
                    }
                }
                other => {
                    self.error_here(format!("unexpected character {other:?}"));
                    self.pos += 1;
                }
            }
        }
        self.close_bar();
    }

    fn skip_until(&mut self, end: char) {
        while let Some(c) = self.peek() {
            if c == end {
                break;
            }
            self.pos += 1;
        }
    }

    fn skip_delimited(&mut self, delim: char, message: &str) {
        let start = self.pos;
        self.pos += 1;
        while let Some(c) = self.peek() {
            self.pos += 1;
            if c == delim {
                return;
            }
            if c == '\n' {
                break;
            }
        }
        self.pos = start;
        self.error_here(message);
        self.pos = start + 1;
    }

    fn barline(&mut self) {
        while let Some(c) = self.peek() {
            match c {
                '|' | ':' | ']' => self.pos += 1,
                '[' if self.peek_at(1) == Some('|') => self.pos += 1,
                _ => break,
            }
        }
        if self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.error_here("voltas are not supported");
            while self
                .peek()
                .is_some_and(|c| c.is_ascii_digit() || c == ',' || c == '-')
            {
                self.pos += 1;
            }
        }
        self.close_bar();
    }

    fn chord(&mut self) {
        self.pos += 1; // '['
        let mut notes = Vec::new();
        loop {
            match self.peek() {
                Some(']') => {
                    self.pos += 1;
                    break;
                }
                Some(' ') => self.pos += 1,
                Some('^' | '_' | '=' | 'A'..='G' | 'a'..='g') => {
                    if let Some(n) = self.note() {
                        notes.push(n);
                    }
                }
                Some(other) if other != '\n' => {
                    self.error_here(format!("unexpected character {other:?} in chord"));
                    self.pos += 1;
                }
                _ => {
                    self.error_here("unterminated chord");
                    return;
                }
            }
        }
        let Some(length) = self.length() else { return };
        if notes.is_empty() {
            self.error_here("empty chord");
            return;
        }
        let units = length * notes[0].length;
        if self.representable(units) {
            self.current.push(Element::Chord { notes, length });
        }
    }

    fn note(&mut self) -> Option<Note> {
        let accidental = match self.peek() {
            Some('^') => Accidental::Sharp,
            Some('_') => Accidental::Flat,
            Some('=') => Accidental::Natural,
            _ => Accidental::None,
        };
        if accidental != Accidental::None {
            self.pos += 1;
            if matches!(self.peek(), Some('^' | '_')) {
                self.error_here("double accidentals are not supported");
                self.pos += 1;
            }
        }
        let c = self.peek();
        let Some(letter) = c.and_then(Letter::from_char) else {
            self.error_here("accidental without a note");
            return None;
        };
        self.pos += 1;
        let mut octave_shift = if c.is_some_and(|c| c.is_ascii_lowercase()) {
            1
        } else {
            0
        };
        while let Some(m) = self.peek() {
            match m {
                '\'' => octave_shift += 1,
                ',' => octave_shift -= 1,
                _ => break,
            }
            self.pos += 1;
        }
        let length = self.length()?;
        self.representable(length).then_some(Note {
            letter,
            octave_shift,
            accidental,
            length,
        })
    }

    fn representable(&mut self, units: Rational64) -> bool {
        let ticks = units * self.unit_length * super::TICKS_PER_WHOLE;
        if ticks.is_integer() {
            true
        } else {
            self.error_here(format!("length {units} is not representable at 480 PPQ"));
            false
        }
    }

    /// Length multiplier: `2`, `/2`, `/`, `//`, `3/2`, `3/`.
    fn length(&mut self) -> Option<Rational64> {
        let start = self.pos;
        let num = self.digits();
        let mut den: i64 = 1;
        let mut ok = true;
        if self.peek() == Some('/') {
            let mut slashes = 0;
            while self.peek() == Some('/') {
                slashes += 1;
                self.pos += 1;
            }
            match self.digits() {
                Some(d) if slashes == 1 => den = d,
                Some(_) => ok = false,
                None => den = 1 << slashes,
            }
        }
        let num = num.unwrap_or(1);
        if !ok || num == 0 || den == 0 {
            let end = self.pos;
            self.pos = start;
            let text: String = self.chars[start..end].iter().map(|&(c, _, _)| c).collect();
            self.error_here(format!("malformed length {text:?}"));
            self.pos = end;
            return None;
        }
        Some(Rational64::new(num, den))
    }

    fn digits(&mut self) -> Option<i64> {
        let mut value: Option<i64> = None;
        while let Some(d) = self.peek().and_then(|c| c.to_digit(10)) {
            value = Some(
                value
                    .unwrap_or(0)
                    .saturating_mul(10)
                    .saturating_add(d as i64),
            );
            self.bump();
        }
        value
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    #[test]
    fn four_quarter_notes_in_one_bar() {
        let tune = parse_abc("X:1\nT:T\nM:4/4\nL:1/4\nK:C\nCDEF|").unwrap();
        assert_eq!(tune.bars.len(), 1);
        assert_eq!(tune.bars[0].len(), 4);
        assert!(tune.bars[0].iter().all(|e| e.units() == r(1, 1)));
        assert_eq!(tune.title, "T");
        assert_eq!(tune.meter, Meter::new(4, 4));
    }

    #[test]
    fn rest_of_two_eighths_is_a_quarter() {
        let tune = parse_abc("X:1\nM:4/4\nK:C\nz2").unwrap();
        assert_eq!(tune.unit_length, r(1, 8));
        assert_eq!(tune.bars[0], vec![Element::Rest { length: r(2, 1) }]);
        assert_eq!(tune.ticks_for(tune.bars[0][0].units()), Some(480));
    }

    #[test]
    fn missing_key_is_reported() {
        let err = parse_abc("X:1\nM:4/4\nCDEF|").unwrap_err();
        assert!(
            err.iter().any(|d| d.message.contains("missing key")),
            "{err:?}"
        );
    }

    #[test]
    fn missing_meter_is_reported() {
        let err = parse_abc("X:1\nK:C\nCDEF|").unwrap_err();
        assert!(
            err.iter().any(|d| d.message.contains("missing meter")),
            "{err:?}"
        );
    }

    #[test]
    fn length_forms() {
        let tune = parse_abc("M:4/4\nL:1/8\nK:C\nC2 C/2 C/ C// C3/2 C3/ c'2 C,/").unwrap();
        let lens: Vec<_> = tune.bars[0].iter().map(Element::units).collect();
        assert_eq!(
            lens,
            vec![
                r(2, 1),
                r(1, 2),
                r(1, 2),
                r(1, 4),
                r(3, 2),
                r(3, 2),
                r(2, 1),
                r(1, 2)
            ]
        );
        let Element::Note(n) = &tune.bars[0][6] else {
            panic!()
        };
        assert_eq!((n.letter, n.octave_shift), (Letter::C, 2));
        let Element::Note(n) = &tune.bars[0][7] else {
            panic!()
        };
        assert_eq!(n.octave_shift, -1);
    }

    #[test]
    fn malformed_length_carries_position() {
        let err = parse_abc("M:4/4\nK:C\nC/0D").unwrap_err();
        assert_eq!(err.len(), 1);
        assert!(err[0].message.contains("malformed length"));
        assert_eq!((err[0].line, err[0].column), (3, 2));
    }

    #[test]
    fn headers_and_defaults() {
        let tune = parse_abc("X:7\nT:First\nT:Second\nM:C|\nQ:3/8=40\nK:Bb major\nB").unwrap();
        assert_eq!(tune.index, 7);
        assert_eq!(tune.title, "First");
        assert_eq!(tune.meter, Meter::new(2, 2));
        assert_eq!(tune.tempo_qpm, 60);
        assert_eq!(tune.key.to_string(), "Bb");
        let tune = parse_abc("M:6/8\nK:G\nG").unwrap();
        assert_eq!(tune.tempo_qpm, 120);
        assert_eq!(tune.unit_length, r(1, 8));
    }

    #[test]
    fn chords_barlines_and_decorations() {
        let tune =
            parse_abc("M:4/4\nL:1/4\nK:D\n|: \"D\"[DFA]2 !trill!~d .e | ^f =g _a z :|\n[|B4|]")
                .unwrap();
        assert_eq!(tune.bars.len(), 3);
        let Element::Chord { notes, length } = &tune.bars[0][0] else {
            panic!()
        };
        assert_eq!(notes.len(), 3);
        assert_eq!(*length, r(2, 1));
        let accs: Vec<_> = tune.bars[1]
            .iter()
            .flat_map(|e| e.notes())
            .map(|n| n.accidental)
            .collect();
        assert_eq!(
            accs,
            vec![Accidental::Sharp, Accidental::Natural, Accidental::Flat]
        );
    }

    #[test]
    fn bars_continue_across_line_breaks() {
        let tune = parse_abc("M:4/4\nL:1/4\nK:C\nCD\nEF|G4|").unwrap();
        assert_eq!(tune.bars.len(), 2);
        assert_eq!(tune.bars[0].len(), 4);
    }

    #[test]
    fn unsupported_features_are_diagnosed() {
        for (body, needle) in [
            ("C-C", "ties"),
            ("(3CDE", "tuplets"),
            ("{g}C", "grace"),
            ("C>D", "broken"),
            ("|1 C :|2 D", "voltas"),
            ("[K:G] C", "inline"),
            ("^^C", "double"),
            ("Z4", "multi-measure"),
        ] {
            let err = parse_abc(&format!("M:4/4\nK:C\n{body}")).unwrap_err();
            assert!(
                err.iter().any(|d| d.message.contains(needle)),
                "{body}: {err:?}"
            );
        }
        let err = parse_abc("M:4/4\nK:Em\nE").unwrap_err();
        assert!(err[0].message.contains("mode"));
        let err = parse_abc("M:4/4\nK:C\nC\nK:G\nG").unwrap_err();
        assert!(err[0].message.contains("mid-tune"));
    }

    #[test]
    fn blank_line_ends_tune_and_comments_are_skipped() {
        let tune =
            parse_abc("X:1\n% comment\nM:3/4\nK:C\nCDE| % trailing\nFGA|\n\nX:2\nB").unwrap();
        assert_eq!(tune.bars.len(), 2);
    }

    #[test]
    fn empty_body_parses() {
        let tune = parse_abc("X:1\nM:4/4\nK:C\n").unwrap();
        assert!(tune.bars.is_empty());
    }
}
