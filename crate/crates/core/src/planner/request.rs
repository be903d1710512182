//! Rule-based extraction of goals and constraints from a user turn.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use weave_symbolic::Key;

use super::PlanError;
use crate::media::MediaType;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraints {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key_signature: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meter: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tempo_qpm: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_duration_s: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style_text: Option<String>,
}

impl Constraints {
    pub fn is_empty(&self) -> bool {
        *self == Constraints::default()
    }

    /// Type checks every present value.
    pub fn validate(&self) -> Result<(), String> {
        if let Some(k) = &self.key_signature {
            parse_key(k)
                .ok_or_else(|| format!("key_signature {k:?} is not a supported major key"))?;
        }
        if let Some(m) = &self.meter {
            parse_meter(m)
                .ok_or_else(|| format!("meter {m:?} must be N/D with positive integers"))?;
        }
        if self.tempo_qpm == Some(0) {
            return Err("tempo_qpm must be positive".into());
        }
        if self.max_duration_s == Some(0) {
            return Err("max_duration_s must be positive".into());
        }
        Ok(())
    }

    pub fn to_params(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("constraints serialize")
    }
}

pub fn parse_meter(s: &str) -> Option<(u32, u32)> {
    let (n, d) = s.split_once('/')?;
    let (n, d) = (n.trim().parse::<u32>().ok()?, d.trim().parse::<u32>().ok()?);
    (n > 0 && d > 0).then_some((n, d))
}

pub fn parse_key(s: &str) -> Option<Key> {
    Key::from_tonic(s)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestSpec {
    pub goals: BTreeSet<MediaType>,
    pub source: MediaType,
    pub constraints: Constraints,
    pub raw_text: String,
}

impl RequestSpec {
    pub fn new(goals: impl IntoIterator<Item = MediaType>, source: MediaType) -> Self {
        Self {
            goals: goals.into_iter().collect(),
            source,
            constraints: Constraints::default(),
            raw_text: String::new(),
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.goals.is_empty() {
            return Err(PlanError::Validation("request has no goals".into()));
        }
        if let Some(g) = self
            .goals
            .iter()
            .chain([&self.source])
            .find(|m| !m.is_legal())
        {
            return Err(PlanError::Validation(format!(
                "{g} is not a legal modality/format pair"
            )));
        }
        self.constraints.validate().map_err(PlanError::Validation)
    }
}

struct Rules {
    goals: Vec<(Regex, MediaType)>,
    key: Regex,
    minor: Regex,
    meter: Regex,
    tempo: Regex,
    duration: Regex,
    style: Regex,
}

fn rules() -> &'static Rules {
    static RULES: OnceLock<Rules> = OnceLock::new();
    RULES.get_or_init(|| {
        let re = |s: &str| Regex::new(s).expect("static pattern");
        Rules {
            goals: vec![
                (re(r"(?i)\b(score|scores|sheet|sheets)\b"), MediaType::SVG),
                (re(r"(?i)\b(audio|play|hear)\b"), MediaType::WAV),
                (re(r"(?i)\bmidi\b"), MediaType::SMF),
                (re(r"(?i)\b(analy[sz]e|describe)\b"), MediaType::JSON),
            ],
            key: re(r"\b[iI]n ([A-G])([#b♯♭]?)(?:[^A-Za-z0-9]|$)"),
            minor: re(r"^\s*(?i:minor|min|m)\b"),
            meter: re(r"(?i)\b(\d+)\s*/\s*(\d+)\s+time\b"),
            tempo: re(r"(?i)\b(\d+)\s*bpm\b"),
            duration: re(r"(?i)\bunder\s+(\d+)\s*(?:s|secs?|seconds?)\b"),
            style: re(r"(?i)\bin the style of\s+([^,.;!?]+)"),
        }
    })
}

/// Derives goals, source and constraints. Deterministic; see the README
/// for the keyword table.
pub fn derive_request_spec(
    text: &str,
    attachments: &[MediaType],
) -> Result<RequestSpec, PlanError> {
    if text.trim().is_empty() && attachments.is_empty() {
        return Err(PlanError::Validation(
            "message has neither text nor attachments".into(),
        ));
    }
    let r = rules();
    let mut goals: BTreeSet<MediaType> = r
        .goals
        .iter()
        .filter(|(re, _)| re.is_match(text))
        .map(|(_, g)| *g)
        .collect();
    if goals.is_empty() {
        goals.insert(MediaType::ABC);
    }

    let mut c = Constraints::default();
    if let Some(m) = r.key.captures(text) {
        let tail = &text[m.get(0).unwrap().end().saturating_sub(1)..];
        if r.minor
            .is_match(tail.trim_start_matches(|ch: char| !ch.is_alphanumeric()))
        {
            return Err(PlanError::Validation(format!(
                "only major keys are supported, got {:?}",
                m[0].trim()
            )));
        }
        let acc = match &m[2] {
            "♯" => "#",
            "♭" => "b",
            other => other,
        };
        c.key_signature = Some(format!("{}{}", &m[1], acc));
    }
    if let Some(m) = r.meter.captures(text) {
        c.meter = Some(format!("{}/{}", &m[1], &m[2]));
    }
    if let Some(m) = r.tempo.captures(text) {
        c.tempo_qpm = m[1].parse().ok();
    }
    if let Some(m) = r.duration.captures(text) {
        c.max_duration_s = m[1].parse().ok();
    }
    if let Some(m) = r.style.captures(text) {
        c.style_text = Some(m[1].trim().to_string());
    }

    let spec = RequestSpec {
        goals,
        source: attachments.first().copied().unwrap_or(MediaType::TEXT),
        constraints: c,
        raw_text: text.to_string(),
    };
    spec.validate()?;
    Ok(spec)
}
