//! Parses an ABC tune and renders every output format into a directory.
//!
//! cargo run -p weave-symbolic --example abc_pipeline -- [out-dir]

use weave_symbolic::{
    abc_to_midi, analyze_tune, parse_abc, render_svg, serialize_abc, synthesize_wav, validate_tune,
    write_smf,
};

const TUNE: &str = "X:1
T:The Kesh
M:6/8
L:1/8
Q:3/8=110
K:G
|:GAG GAB|ABA ABd|edd gdd|edB dBA|
GAG GAB|ABA ABd|edd gdB|AGF G3:|
";

fn main() {
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(std::env::temp_dir);
    std::fs::create_dir_all(&out).unwrap();

    let tune = parse_abc(TUNE).unwrap_or_else(|d| panic!("parse: {d:?}"));
    let problems = validate_tune(&tune);
    println!("{} ({} problems)", tune.title, problems.len());
    assert_eq!(parse_abc(&serialize_abc(&tune)).unwrap(), tune);

    let seq = abc_to_midi(&tune).unwrap();
    println!("{} note events at {} qpm", seq.notes().len(), seq.tempo_qpm);
    let files = [
        ("kesh.mid", write_smf(&seq)),
        ("kesh.wav", synthesize_wav(&seq)),
        ("kesh.svg", render_svg(&tune)),
    ];
    for (name, bytes) in files {
        std::fs::write(out.join(name), &bytes).unwrap();
        println!("wrote {} ({} bytes)", out.join(name).display(), bytes.len());
    }
    let a = analyze_tune(&tune);
    println!(
        "{} notes in {} bars, {:.1} s, key {} meter {}",
        a.note_count, a.bar_count, a.total_duration_s, a.key, a.meter
    );
}
