//! Symbolic-kit tools, dispatched on the (input, output) signature.

use weave_symbolic::{
    abc_to_midi, analyze_tune, parse_abc, read_smf, render_svg, synthesize_wav, validate_tune,
    write_smf, AbcTune,
};

use super::{compose::compose_abc, Adapter, Invocation, InvocationResult};
use crate::canonical::to_canonical;
use crate::media::MediaType;
use crate::registry::ToolSpec;
use crate::store::Artifact;

pub struct BuiltinAdapter;

impl Adapter for BuiltinAdapter {
    fn invoke(&self, tool: &ToolSpec, inv: &Invocation, inputs: &[Artifact]) -> InvocationResult {
        let Some(input) = inputs.first() else {
            return InvocationResult::failed("builtin tools need one input");
        };
        match run(input, tool.output, inv) {
            Ok(bytes) => InvocationResult::ok(
                bytes,
                tool.output,
                format!("builtin {} -> {}", input.media(), tool.output),
            ),
            Err(e) => InvocationResult::failed(e),
        }
    }
}

fn utf8(a: &Artifact) -> Result<&str, String> {
    std::str::from_utf8(&a.bytes).map_err(|_| format!("{} input is not UTF-8", a.media()))
}

fn tune(a: &Artifact) -> Result<AbcTune, String> {
    parse_abc(utf8(a)?).map_err(|d| format!("abc does not parse: {}", join(&d)))
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Shared with the mock backend, which only overrides the language-model
/// roles.
pub(crate) fn run(
    input: &Artifact,
    output: MediaType,
    inv: &Invocation,
) -> Result<Vec<u8>, String> {
    match (input.media(), output) {
        (MediaType::TEXT, MediaType::TEXT) => {
            Ok(enrich_text(utf8(input)?, &inv.params).into_bytes())
        }
        (MediaType::TEXT, MediaType::ABC) => {
            compose_abc(utf8(input)?, &inv.params, inv.seed()).map(String::into_bytes)
        }
        (MediaType::ABC, MediaType::SVG) => Ok(render_svg(&tune(input)?)),
        (MediaType::ABC, MediaType::SMF) => {
            let t = tune(input)?;
            let problems = validate_tune(&t);
            if !problems.is_empty() {
                return Err(format!("abc is not valid: {}", join(&problems)));
            }
            abc_to_midi(&t)
                .map(|seq| write_smf(&seq))
                .map_err(|e| e.to_string())
        }
        (MediaType::SMF, MediaType::WAV) => read_smf(&input.bytes)
            .map(|seq| synthesize_wav(&seq))
            .map_err(|e| e.to_string()),
        (MediaType::ABC, MediaType::JSON) => {
            Ok(to_canonical(&analyze_tune(&tune(input)?)).into_bytes())
        }
        (from, to) => Err(format!("no builtin implementation for {from} -> {to}")),
    }
}

/// Restates the request with its constraints spelled out.
pub fn enrich_text(text: &str, params: &serde_json::Value) -> String {
    let mut out = text.trim().to_string();
    if let Some(map) = params.as_object() {
        let mut keys: Vec<_> = map.keys().collect();
        keys.sort();
        for k in keys {
            let v = &map[k];
            let v = v
                .as_str()
                .map(str::to_string)
                .unwrap_or_else(|| v.to_string());
            out.push_str(&format!("\n{k}: {v}"));
        }
    }
    out.push('\n');
    out
}
