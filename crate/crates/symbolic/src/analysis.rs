use serde::{Deserialize, Serialize};

use crate::abc::{validate::for_each_pitch, AbcTune};
use crate::midi::{ticks_to_secs, tune_ticks};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub note_count: usize,
    pub bar_count: usize,
    /// `None` when the tune has no notes.
    pub pitch_min: Option<i32>,
    pub pitch_max: Option<i32>,
    pub total_duration_s: f64,
    pub key: String,
    pub meter: String,
}

/// Counts notes (chord members included), pitch bounds and duration.
pub fn analyze_tune(tune: &AbcTune) -> AnalysisReport {
    let mut pitch_min: Option<i32> = None;
    let mut pitch_max: Option<i32> = None;
    for_each_pitch(tune, |_, p| {
        pitch_min = Some(pitch_min.map_or(p, |m| m.min(p)));
        pitch_max = Some(pitch_max.map_or(p, |m| m.max(p)));
    });
    AnalysisReport {
        note_count: tune.note_count(),
        bar_count: tune.bars.len(),
        pitch_min,
        pitch_max,
        total_duration_s: ticks_to_secs(tune_ticks(tune), tune.tempo_qpm),
        key: tune.key.to_string(),
        meter: tune.meter.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abc::parse_abc;

    #[test]
    fn four_quarters_at_120() {
        let r = analyze_tune(&parse_abc("X:1\nM:4/4\nL:1/4\nQ:1/4=120\nK:C\nCDEF|").unwrap());
        assert_eq!(r.note_count, 4);
        assert_eq!(r.bar_count, 1);
        assert_eq!((r.pitch_min, r.pitch_max), (Some(60), Some(65)));
        assert_eq!(r.total_duration_s, 2.0);
        assert_eq!((r.key.as_str(), r.meter.as_str()), ("C", "4/4"));
    }

    #[test]
    fn empty_body() {
        let r = analyze_tune(&parse_abc("M:4/4\nK:C\n").unwrap());
        assert_eq!(
            (r.note_count, r.total_duration_s, r.pitch_min),
            (0, 0.0, None)
        );
    }

    #[test]
    fn chord_members_count() {
        let r = analyze_tune(&parse_abc("M:4/4\nK:C\n[CEG]").unwrap());
        assert_eq!(r.note_count, 3);
    }
}
