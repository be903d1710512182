//! Score sketch: staff, one ellipse per note, barlines. Not engraving.

use std::fmt::Write as _;

use crate::abc::AbcTune;

pub const MARGIN_PX: f64 = 40.0;
pub const PX_PER_QUARTER: f64 = 80.0;
pub const PX_PER_STEP: f64 = 2.5;
const MIDDLE_LINE_Y: f64 = 60.0;
const HEIGHT: f64 = 120.0;
/// Diatonic position of B4, the middle staff line.
const B4_POSITION: i32 = 4 * 7 + 6;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders a deterministic SVG 1.1 sketch of the tune.
pub fn render_svg(tune: &AbcTune) -> Vec<u8> {
    let quarter_ticks = crate::PPQ as f64;
    let total_quarters = crate::midi::tune_ticks(tune) as f64 / quarter_ticks;
    let width = MARGIN_PX * 2.0 + PX_PER_QUARTER * total_quarters;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{HEIGHT}" viewBox="0 0 {width} {HEIGHT}">"#
    );
    let _ = writeln!(s, "<title>{}</title>", escape(&tune.title));
    for i in -2..=2 {
        let y = MIDDLE_LINE_Y + i as f64 * 2.0 * PX_PER_STEP;
        let _ = writeln!(
            s,
            r#"<line class="staff" x1="0" y1="{y}" x2="{width}" y2="{y}" stroke="black" stroke-width="0.5"/>"#
        );
    }

    let mut tick: i64 = 0;
    let bar_top = MIDDLE_LINE_Y - 4.0 * PX_PER_STEP;
    let bar_bottom = MIDDLE_LINE_Y + 4.0 * PX_PER_STEP;
    let barline = |s: &mut String, tick: i64| {
        let x = MARGIN_PX + PX_PER_QUARTER * tick as f64 / quarter_ticks;
        let _ = writeln!(
            s,
            r#"<line class="bar" x1="{x}" y1="{bar_top}" x2="{x}" y2="{bar_bottom}" stroke="black" stroke-width="1"/>"#
        );
    };
    if !tune.bars.is_empty() {
        barline(&mut s, 0);
    }
    for bar in &tune.bars {
        for element in bar {
            let x = MARGIN_PX + PX_PER_QUARTER * tick as f64 / quarter_ticks;
            for note in element.notes() {
                let y =
                    MIDDLE_LINE_Y - (note.diatonic_position() - B4_POSITION) as f64 * PX_PER_STEP;
                let _ = writeln!(
                    s,
                    r#"<ellipse class="note" cx="{x}" cy="{y}" rx="3.5" ry="2.5"/>"#
                );
            }
            tick += tune.ticks_for(element.units()).unwrap_or(0);
        }
        barline(&mut s, tick);
    }
    s.push_str("</svg>\n");
    s.into_bytes()
}
