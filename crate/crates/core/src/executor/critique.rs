//! Post-execution checks of sink artifacts against the request.

use std::collections::{BTreeMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use weave_symbolic::{parse_abc, read_smf, validate_tune, AbcTune, WavInfo};

use crate::media::{Format, MediaType};
use crate::planner::{parse_key, parse_meter, RequestSpec};
use crate::store::{ArtifactId, Store, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictStatus {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: VerdictStatus,
    pub checks: Vec<Check>,
}

impl Verdict {
    /// Status is derived, never set independently.
    pub fn from_checks(checks: Vec<Check>) -> Self {
        let status = if checks.iter().all(|c| c.passed) {
            VerdictStatus::Pass
        } else {
            VerdictStatus::Fail
        };
        Self { status, checks }
    }

    pub fn passed(&self) -> bool {
        self.status == VerdictStatus::Pass
    }

    /// Details of the failed checks, one per line.
    pub fn failure_summary(&self) -> String {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{}: {}", c.name, c.detail))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

fn check(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        passed,
        detail: detail.into(),
    }
}

/// Whether `bytes` decode as `media`. Applied to every stored step output.
pub fn format_check(bytes: &[u8], media: MediaType) -> Result<(), String> {
    let text = || std::str::from_utf8(bytes).map_err(|_| format!("{media} output is not UTF-8"));
    match media.format {
        Format::Plain => text().map(|_| ()),
        Format::Abc => parse_abc(text()?)
            .map(|_| ())
            .map_err(|d| format!("abc does not parse: {}", d[0])),
        Format::Smf => read_smf(bytes).map(|_| ()).map_err(|e| e.to_string()),
        Format::Wav => WavInfo::parse(bytes).map(|_| ()).map_err(|e| e.to_string()),
        Format::Svg => {
            let t = text()?;
            if t.trim_start().starts_with("<svg") && t.trim_end().ends_with("</svg>") {
                Ok(())
            } else {
                Err("svg output is not an <svg> document".into())
            }
        }
        Format::Json => serde_json::from_slice::<serde_json::Value>(bytes)
            .map(|_| ())
            .map_err(|e| e.to_string()),
        Format::Pdf => {
            if bytes.starts_with(b"%PDF-") {
                Ok(())
            } else {
                Err("pdf output lacks the %PDF- signature".into())
            }
        }
    }
}

/// Nearest ABC artifact reachable through provenance, including `id`.
fn abc_ancestor(store: &Store, id: &ArtifactId) -> Result<Option<ArtifactId>, StoreError> {
    let mut queue = VecDeque::from([id.clone()]);
    let mut seen = HashSet::new();
    while let Some(a) = queue.pop_front() {
        if !seen.insert(a.clone()) {
            continue;
        }
        let meta = match store.artifact_meta(&a) {
            Ok(m) => m,
            Err(StoreError::NotFound(_)) => continue,
            Err(e) => return Err(e),
        };
        if meta.media() == MediaType::ABC {
            return Ok(Some(a));
        }
        queue.extend(meta.inputs);
    }
    Ok(None)
}

/// Runs every applicable check. A missing sink artifact is an integrity
/// error; anything else that goes wrong becomes a `critique-error` check.
pub fn critique(
    store: &Store,
    artifacts: &BTreeMap<MediaType, ArtifactId>,
    spec: &RequestSpec,
) -> Result<Verdict, StoreError> {
    for id in artifacts.values() {
        if !store.contains(id) {
            return Err(StoreError::Integrity(format!(
                "sink artifact {id} is missing"
            )));
        }
    }
    let mut checks = Vec::new();
    let mut constrained_abcs = Vec::new();
    for (goal, id) in artifacts {
        if let Err(e) = critique_one(store, *goal, id, spec, &mut checks, &mut constrained_abcs) {
            checks.push(check("critique-error", false, format!("{goal}: {e}")));
        }
    }

    let c = &spec.constraints;
    if c.key_signature.is_some() || c.meter.is_some() {
        for abc in constrained_abcs {
            if let Err(e) = constraint_checks(store, &abc, spec, &mut checks) {
                checks.push(check("critique-error", false, format!("{abc}: {e}")));
            }
        }
    }
    Ok(Verdict::from_checks(checks))
}

fn critique_one(
    store: &Store,
    goal: MediaType,
    id: &ArtifactId,
    spec: &RequestSpec,
    checks: &mut Vec<Check>,
    abcs: &mut Vec<ArtifactId>,
) -> Result<(), String> {
    let a = store.get_artifact(id).map_err(|e| e.to_string())?;
    let media = a.media();
    checks.push(check(
        format!("format:{goal}"),
        media == goal,
        format!("expected {goal}, found {media}"),
    ));
    if media != goal {
        return Ok(());
    }
    match goal.format {
        Format::Abc => {
            let text = std::str::from_utf8(&a.bytes).map_err(|_| "abc is not UTF-8".to_string())?;
            match parse_abc(text) {
                Ok(tune) => {
                    let problems = validate_tune(&tune);
                    let detail = if problems.is_empty() {
                        format!("{} bars", tune.bars.len())
                    } else {
                        problems
                            .iter()
                            .map(|d| d.to_string())
                            .collect::<Vec<_>>()
                            .join("; ")
                    };
                    checks.push(check("abc-valid", problems.is_empty(), detail));
                }
                Err(d) => checks.push(check(
                    "abc-parse",
                    false,
                    d.iter()
                        .map(|x| x.to_string())
                        .collect::<Vec<_>>()
                        .join("; "),
                )),
            }
        }
        Format::Wav => {
            let info = WavInfo::parse(&a.bytes).map_err(|e| e.to_string())?;
            let fmt_ok = info.sample_rate == 44_100 && info.channels == 2;
            checks.push(check(
                "wav-format",
                fmt_ok,
                format!(
                    "{} Hz, {} channels, {} bits",
                    info.sample_rate, info.channels, info.bits_per_sample
                ),
            ));
            if let Some(max) = spec.constraints.max_duration_s {
                let d = info.duration_secs();
                checks.push(check(
                    "max_duration_s",
                    d <= max as f64,
                    format!("{d:.3} s against a limit of {max} s"),
                ));
            }
        }
        Format::Smf => {
            let seq = read_smf(&a.bytes).map_err(|e| e.to_string())?;
            let problems = seq.check();
            let detail = if problems.is_empty() {
                format!("{} events", seq.events.len())
            } else {
                problems.join("; ")
            };
            checks.push(check("smf-events", problems.is_empty(), detail));
        }
        _ => {
            let r = format_check(&a.bytes, goal);
            checks.push(check(
                format!("decode:{goal}"),
                r.is_ok(),
                r.err().unwrap_or_else(|| "ok".into()),
            ));
        }
    }
    if let Some(abc) = abc_ancestor(store, id).map_err(|e| e.to_string())? {
        if !abcs.contains(&abc) {
            abcs.push(abc);
        }
    }
    Ok(())
}

fn constraint_checks(
    store: &Store,
    abc: &ArtifactId,
    spec: &RequestSpec,
    checks: &mut Vec<Check>,
) -> Result<(), String> {
    let a = store.get_artifact(abc).map_err(|e| e.to_string())?;
    let text = std::str::from_utf8(&a.bytes).map_err(|_| "abc is not UTF-8".to_string())?;
    let tune: AbcTune = match parse_abc(text) {
        Ok(t) => t,
        // already reported by abc-parse when the abc is itself a goal
        Err(d) => return Err(format!("abc does not parse: {}", d[0])),
    };
    let c = &spec.constraints;
    if let Some(k) = &c.key_signature {
        let ok = parse_key(k).is_some_and(|want| want == tune.key);
        checks.push(check(
            "key_signature",
            ok,
            format!("expected K:{k}, found K:{}", tune.key),
        ));
    }
    if let Some(m) = &c.meter {
        let ok = parse_meter(m).is_some_and(|(n, d)| (n, d) == (tune.meter.num, tune.meter.den));
        checks.push(check(
            "meter",
            ok,
            format!("expected M:{m}, found M:{}", tune.meter),
        ));
    }
    Ok(())
}
