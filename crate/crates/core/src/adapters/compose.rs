//! Template composer used by the builtin and mock compose tools.
//!
//! Eight bars over a fixed contour of scale degrees, filled to the meter
//! with seeded passing notes and transposed to the requested key.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use weave_symbolic::{serialize_abc, AbcTune, Element, Key, Letter, Meter, Note, Rational64};

use crate::planner::{parse_key, parse_meter};

pub const BARS: usize = 8;
/// Scale degree each bar starts on; the last bar resolves to the tonic.
const CONTOUR: [i32; BARS] = [0, 2, 4, 3, 1, 4, 5, 0];
/// Release tail the synthesizer adds, plus one frame of rounding.
const TAIL_SECS: f64 = 0.05 + 1.0 / 44_100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateParams {
    pub key: Key,
    pub meter: Meter,
    pub tempo_qpm: u32,
    pub max_duration_s: Option<u32>,
}

impl TemplateParams {
    /// Reads the constraint keys out of invocation params; absent or
    /// unusable values fall back to C, 4/4 and 120 qpm.
    pub fn from_params(params: &Value) -> Result<Self, String> {
        let key = match params.get("key_signature").and_then(Value::as_str) {
            Some(k) => parse_key(k).ok_or_else(|| format!("unsupported key_signature {k:?}"))?,
            None => Key::C_MAJOR,
        };
        let meter = match params.get("meter").and_then(Value::as_str) {
            Some(m) => parse_meter(m)
                .map(|(n, d)| Meter::new(n, d))
                .ok_or_else(|| format!("bad meter {m:?}"))?,
            None => Meter::new(4, 4),
        };
        let tempo_qpm = params
            .get("tempo_qpm")
            .and_then(Value::as_u64)
            .unwrap_or(120)
            .clamp(1, 100_000) as u32;
        let max_duration_s = params
            .get("max_duration_s")
            .and_then(Value::as_u64)
            .map(|s| s as u32);
        Ok(Self {
            key,
            meter,
            tempo_qpm,
            max_duration_s,
        })
    }
}

/// Unit length denominator: eighths unless the meter is finer.
fn unit_den(meter: &Meter) -> u32 {
    if meter.den <= 8 && 8 % meter.den == 0 {
        8
    } else {
        meter.den
    }
}

/// Smallest whole tempo at which `quarters` fit in `max_s` with the tail.
fn tempo_for(quarters: f64, tempo: u32, max_s: Option<u32>) -> u32 {
    match max_s {
        Some(max) => {
            let budget = (max as f64 - TAIL_SECS).max(0.01);
            tempo.max((quarters * 60.0 / budget).ceil() as u32)
        }
        None => tempo,
    }
}

fn note_at(key: &Key, degree: i32) -> Note {
    let pos = key.tonic.index() + degree;
    Note::new(Letter::from_index(pos.rem_euclid(7)), pos.div_euclid(7))
}

pub fn compose_tune(title: &str, p: &TemplateParams, seed: [u8; 32]) -> AbcTune {
    let mut rng = ChaCha8Rng::from_seed(seed);
    let lden = unit_den(&p.meter);
    let units = (p.meter.num * lden / p.meter.den) as i64;
    let mut tune = AbcTune::new(title, p.meter, p.key);
    tune.unit_length = Rational64::new(1, lden as i64);

    for (bar_no, &anchor) in CONTOUR.iter().enumerate() {
        let mut bar = Vec::new();
        if bar_no == BARS - 1 {
            if units > 2 {
                bar.push(Element::Note(
                    note_at(&p.key, 1).with_length(Rational64::from_integer(units - 2)),
                ));
                bar.push(Element::Note(
                    note_at(&p.key, 0).with_length(Rational64::from_integer(2)),
                ));
            } else {
                bar.push(Element::Note(
                    note_at(&p.key, 0).with_length(Rational64::from_integer(units)),
                ));
            }
            tune.bars.push(bar);
            break;
        }
        let mut degree = anchor;
        let mut left = units;
        while left > 0 {
            let choices: Vec<i64> = [1, 1, 2, 2, 3].into_iter().filter(|&l| l <= left).collect();
            let len = choices[rng.random_range(0..choices.len())];
            bar.push(Element::Note(
                note_at(&p.key, degree).with_length(Rational64::from_integer(len)),
            ));
            left -= len;
            let step: i32 = [-2, -1, -1, 1, 1, 2][rng.random_range(0..6)];
            degree = (degree + step).clamp(-2, 8);
        }
        tune.bars.push(bar);
    }

    let quarters = BARS as f64 * p.meter.num as f64 * 4.0 / p.meter.den as f64;
    tune.tempo_qpm = tempo_for(quarters, p.tempo_qpm, p.max_duration_s);
    tune
}

/// ABC text of the template tune for `prompt` and `params`.
pub fn compose_abc(prompt: &str, params: &Value, seed: [u8; 32]) -> Result<String, String> {
    let p = TemplateParams::from_params(params)?;
    let words: Vec<&str> = prompt.split_whitespace().take(6).collect();
    let title = if words.is_empty() {
        "Sketch".to_string()
    } else {
        words.join(" ")
    };
    Ok(serialize_abc(&compose_tune(&title, &p, seed)))
}
