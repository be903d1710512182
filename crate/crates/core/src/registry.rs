//! Tool capability declarations and the `tools.toml` bootstrap format.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::media::MediaType;
use crate::policy::{Precision, TierThresholds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToolKind {
    Compose,
    Engrave,
    Synthesize,
    Analyze,
    Enrich,
    Convert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Builtin,
    Mock,
    Http,
}

impl fmt::Display for ToolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok();
        f.write_str(s.as_ref().and_then(|v| v.as_str()).unwrap_or("?"))
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Builtin => "builtin",
            BackendKind::Mock => "mock",
            BackendKind::Http => "http",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MemEstimate {
    pub int4: u64,
    pub int8: u64,
    pub fp16: u64,
}

impl MemEstimate {
    pub fn get(&self, p: Precision) -> u64 {
        match p {
            Precision::Int4 => self.int4,
            Precision::Int8 => self.int8,
            Precision::Fp16 => self.fp16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub id: String,
    pub inputs: Vec<MediaType>,
    pub output: MediaType,
    /// Abstract milliseconds at fp16.
    pub cost_estimate: u64,
    pub mem_estimate_mb: MemEstimate,
    pub kind: ToolKind,
    pub backend: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub supports_batching: bool,
}

impl ToolSpec {
    pub fn consumes(&self, media: MediaType) -> bool {
        self.inputs.contains(&media)
    }
}

/// Every violated invariant, in a fixed order. Empty means valid.
pub fn validate_spec(spec: &ToolSpec) -> Vec<String> {
    let mut d = Vec::new();
    if spec.id.is_empty() {
        d.push("tool id must be non-empty".to_string());
    } else if spec.id.chars().any(|c| c.is_whitespace() || c.is_control()) {
        d.push(format!("tool id {:?} must not contain whitespace", spec.id));
    }
    if spec.inputs.is_empty() {
        d.push("tool must consume at least one modality".to_string());
    }
    for input in &spec.inputs {
        if !input.is_legal() {
            d.push(format!("input {input} is not a legal modality/format pair"));
        }
    }
    if !spec.output.is_legal() {
        d.push(format!(
            "output {} is not a legal modality/format pair",
            spec.output
        ));
    }
    if spec.cost_estimate == 0 {
        d.push("cost_estimate must be positive".to_string());
    }
    let m = &spec.mem_estimate_mb;
    if m.int4 == 0 || m.int8 == 0 || m.fp16 == 0 {
        d.push("mem_estimate_mb entries must be positive".to_string());
    }
    if !(m.int4 <= m.int8 && m.int8 <= m.fp16) {
        d.push(format!(
            "mem_estimate_mb must be monotone (int4 <= int8 <= fp16), got int4={} int8={} fp16={}",
            m.int4, m.int8, m.fp16
        ));
    }
    match (spec.backend, &spec.endpoint) {
        (BackendKind::Http, None) => d.push("http backend requires an endpoint".to_string()),
        (BackendKind::Http, Some(e)) => match url::Url::parse(e) {
            Ok(u) if matches!(u.scheme(), "http" | "https") => {}
            Ok(u) => d.push(format!(
                "endpoint scheme {:?} is not http or https",
                u.scheme()
            )),
            Err(err) => d.push(format!("endpoint {e:?} is not a valid URL: {err}")),
        },
        (_, Some(_)) => d.push(format!(
            "endpoint is only allowed for the http backend, not {}",
            spec.backend
        )),
        (_, None) => {}
    }
    d
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("conflict: tool {0} is already registered")]
    Conflict(String),
    #[error("invalid tool {id}: {}", .diagnostics.join("; "))]
    Validation {
        id: String,
        diagnostics: Vec<String>,
    },
    #[error("config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Registry {
    tools: BTreeMap<String, ToolSpec>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, spec: ToolSpec) -> Result<String, RegistryError> {
        let diagnostics = validate_spec(&spec);
        if !diagnostics.is_empty() {
            return Err(RegistryError::Validation {
                id: spec.id,
                diagnostics,
            });
        }
        if self.tools.contains_key(&spec.id) {
            return Err(RegistryError::Conflict(spec.id));
        }
        let id = spec.id.clone();
        self.tools.insert(id.clone(), spec);
        Ok(id)
    }

    pub fn get(&self, id: &str) -> Option<&ToolSpec> {
        self.tools.get(id)
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    /// Sorted by id.
    pub fn tools(&self) -> impl Iterator<Item = &ToolSpec> {
        self.tools.values()
    }

    /// Single-hop tools reading `from` and producing `to`, sorted by id.
    pub fn find_converters(&self, from: MediaType, to: MediaType) -> Vec<String> {
        self.tools
            .values()
            .filter(|t| t.output == to && t.consumes(from))
            .map(|t| t.id.clone())
            .collect()
    }

    /// The six tools the local pipeline ships with. The two language-model
    /// roles (enrich, compose) run on the deterministic mock backend.
    pub fn builtin() -> Self {
        let mut r = Self::new();
        for spec in default_tools() {
            r.register(spec).expect("default tools are valid");
        }
        r
    }

    /// The default tools, all served over HTTP at `{base}/v1/invoke/{id}`.
    pub fn hosted(base_url: &str) -> Result<Self, RegistryError> {
        Self::builtin().to_hosted(base_url)
    }

    /// The same tools with every backend replaced by HTTP at
    /// `{base}/v1/invoke/{id}`.
    pub fn to_hosted(&self, base_url: &str) -> Result<Self, RegistryError> {
        let base = base_url.trim_end_matches('/');
        let mut r = Self::new();
        for spec in self.tools() {
            let mut spec = spec.clone();
            spec.backend = BackendKind::Http;
            spec.endpoint = Some(format!("{base}/v1/invoke/{}", spec.id));
            r.register(spec)?;
        }
        Ok(r)
    }
}

fn tool(
    id: &str,
    input: MediaType,
    output: MediaType,
    cost: u64,
    mem: (u64, u64, u64),
    kind: ToolKind,
    backend: BackendKind,
) -> ToolSpec {
    ToolSpec {
        id: id.to_string(),
        inputs: vec![input],
        output,
        cost_estimate: cost,
        mem_estimate_mb: MemEstimate {
            int4: mem.0,
            int8: mem.1,
            fp16: mem.2,
        },
        kind,
        backend,
        endpoint: None,
        supports_batching: false,
    }
}

pub fn default_tools() -> Vec<ToolSpec> {
    use BackendKind::*;
    use ToolKind::*;
    vec![
        tool(
            "analyze.abc",
            MediaType::ABC,
            MediaType::JSON,
            80,
            (64, 64, 64),
            Analyze,
            Builtin,
        ),
        tool(
            "compose.abc",
            MediaType::TEXT,
            MediaType::ABC,
            1200,
            (4200, 7800, 15_000),
            Compose,
            Mock,
        ),
        tool(
            "convert.abc2midi",
            MediaType::ABC,
            MediaType::SMF,
            50,
            (32, 32, 32),
            Convert,
            Builtin,
        ),
        tool(
            "engrave.svg",
            MediaType::ABC,
            MediaType::SVG,
            150,
            (64, 64, 64),
            Engrave,
            Builtin,
        ),
        tool(
            "enrich.text",
            MediaType::TEXT,
            MediaType::TEXT,
            400,
            (2000, 3800, 7200),
            Enrich,
            Mock,
        ),
        tool(
            "synth.midi2wav",
            MediaType::SMF,
            MediaType::WAV,
            300,
            (256, 256, 256),
            Synthesize,
            Builtin,
        ),
    ]
}

/// Precision multipliers applied to `cost_estimate` during planning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostFactors {
    pub int4: f64,
    pub int8: f64,
    pub fp16: f64,
}

impl Default for CostFactors {
    fn default() -> Self {
        Self {
            int4: 1.0,
            int8: 1.2,
            fp16: 1.5,
        }
    }
}

impl CostFactors {
    /// Factor in thousandths, so plan costs stay integral.
    pub fn permille(&self, p: Precision) -> u64 {
        let f = match p {
            Precision::Int4 => self.int4,
            Precision::Int8 => self.int8,
            Precision::Fp16 => self.fp16,
        };
        (f * 1000.0).round().max(0.0) as u64
    }
}

/// Parsed `tools.toml`. See `docs/tools.md`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolsConfig {
    /// Start from the six default tools before adding `[[tool]]` entries.
    #[serde(default)]
    pub include_defaults: bool,
    #[serde(default)]
    pub tiers: Option<TierThresholds>,
    #[serde(default)]
    pub cost_factors: Option<CostFactors>,
    #[serde(default, rename = "tool")]
    pub tools: Vec<ToolSpec>,
}

impl ToolsConfig {
    pub fn parse(text: &str) -> Result<Self, RegistryError> {
        toml::from_str(text).map_err(|e| RegistryError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RegistryError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn registry(&self) -> Result<Registry, RegistryError> {
        let mut r = if self.include_defaults {
            Registry::builtin()
        } else {
            Registry::new()
        };
        for spec in &self.tools {
            r.register(spec.clone())?;
        }
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(id: &str, from: MediaType, to: MediaType) -> ToolSpec {
        tool(
            id,
            from,
            to,
            10,
            (1, 2, 3),
            ToolKind::Convert,
            BackendKind::Builtin,
        )
    }

    #[test]
    fn defaults_are_valid_and_sorted() {
        let r = Registry::builtin();
        let ids: Vec<_> = r.tools().map(|t| t.id.as_str()).collect();
        assert_eq!(
            ids,
            [
                "analyze.abc",
                "compose.abc",
                "convert.abc2midi",
                "engrave.svg",
                "enrich.text",
                "synth.midi2wav"
            ]
        );
        assert_eq!(
            r.find_converters(MediaType::ABC, MediaType::SMF),
            vec!["convert.abc2midi"]
        );
        assert!(r.find_converters(MediaType::ABC, MediaType::WAV).is_empty());
    }

    #[test]
    fn register_rules() {
        let mut r = Registry::new();
        let mut s = spec("compose.notagen-mock", MediaType::TEXT, MediaType::ABC);
        s.kind = ToolKind::Compose;
        r.register(s.clone()).unwrap();
        assert!(matches!(r.register(s), Err(RegistryError::Conflict(_))));
        let mut h = spec("remote", MediaType::TEXT, MediaType::ABC);
        h.backend = BackendKind::Http;
        assert!(matches!(
            r.register(h),
            Err(RegistryError::Validation { .. })
        ));
    }

    #[test]
    fn converters_sorted_by_id() {
        let mut r = Registry::new();
        r.register(spec("b.x", MediaType::ABC, MediaType::SVG))
            .unwrap();
        r.register(spec("a.x", MediaType::ABC, MediaType::SVG))
            .unwrap();
        assert_eq!(
            r.find_converters(MediaType::ABC, MediaType::SVG),
            vec!["a.x", "b.x"]
        );
    }

    #[test]
    fn diagnostics() {
        assert!(validate_spec(&spec("ok", MediaType::ABC, MediaType::SVG)).is_empty());
        let mut s = spec("m", MediaType::ABC, MediaType::SVG);
        s.mem_estimate_mb = MemEstimate {
            int4: 9,
            int8: 5,
            fp16: 3,
        };
        assert!(validate_spec(&s)[0].contains("monotone"));
        s.inputs.clear();
        assert!(validate_spec(&s).contains(&"tool must consume at least one modality".to_string()));
        let mut e = spec("e", MediaType::ABC, MediaType::SVG);
        e.endpoint = Some("http://x".into());
        assert_eq!(validate_spec(&e).len(), 1);
        e.backend = BackendKind::Http;
        e.endpoint = Some("ftp://x".into());
        assert_eq!(validate_spec(&e).len(), 1);
    }

    #[test]
    fn hosted_registry_points_every_tool_at_the_base() {
        let r = Registry::hosted("http://127.0.0.1:9000/").unwrap();
        let t = r.get("compose.abc").unwrap();
        assert_eq!(t.backend, BackendKind::Http);
        assert_eq!(
            t.endpoint.as_deref(),
            Some("http://127.0.0.1:9000/v1/invoke/compose.abc")
        );
    }

    #[test]
    fn toml_config() {
        let cfg = ToolsConfig::parse(
            r#"
include_defaults = true

[tiers]
medium_min_mb = 6000
high_min_mb = 20000

[[tool]]
id = "engrave.remote"
inputs = ["symbolic/abc"]
output = "image/pdf"
cost_estimate = 900
mem_estimate_mb = { int4 = 100, int8 = 100, fp16 = 100 }
kind = "engrave"
backend = "http"
endpoint = "https://engrave.example/v1/invoke/engrave.remote"
"#,
        )
        .unwrap();
        assert_eq!(cfg.tiers.unwrap().medium_min_mb, 6000);
        let r = cfg.registry().unwrap();
        assert_eq!(r.len(), 7);
        assert_eq!(
            r.find_converters(MediaType::ABC, MediaType::PDF),
            vec!["engrave.remote"]
        );
        assert!(ToolsConfig::parse("bogus = 1").is_err());
    }
}
