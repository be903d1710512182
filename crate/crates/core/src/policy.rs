//! Hardware tiers, per-tool execution policies and batch admission.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::ToolSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Int4,
    Int8,
    Fp16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    Accelerator,
    Host,
    Paged,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Low => "low",
            Tier::Medium => "medium",
            Tier::High => "high",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tier {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" => Ok(Tier::Low),
            "medium" => Ok(Tier::Medium),
            "high" => Ok(Tier::High),
            other => Err(format!(
                "unknown tier {other:?} (expected low, medium or high)"
            )),
        }
    }
}

impl Precision {
    pub fn as_str(self) -> &'static str {
        match self {
            Precision::Int4 => "int4",
            Precision::Int8 => "int8",
            Precision::Fp16 => "fp16",
        }
    }
}

impl Placement {
    pub fn as_str(self) -> &'static str {
        match self {
            Placement::Accelerator => "accelerator",
            Placement::Host => "host",
            Placement::Paged => "paged",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct HardwareProfile {
    pub accel_mem_mb: u64,
    pub host_mem_mb: u64,
    pub disk_free_mb: u64,
}

impl HardwareProfile {
    pub fn new(accel_mem_mb: u64, host_mem_mb: u64, disk_free_mb: u64) -> Self {
        Self {
            accel_mem_mb,
            host_mem_mb,
            disk_free_mb,
        }
    }

    /// A single 46 GB accelerator on a 256 GB host.
    pub fn a40() -> Self {
        Self::new(46_068, 262_144, 500_000)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TierThresholds {
    pub medium_min_mb: u64,
    pub high_min_mb: u64,
}

impl Default for TierThresholds {
    fn default() -> Self {
        Self {
            medium_min_mb: 8192,
            high_min_mb: 24_576,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ToolPolicy {
    pub precision: Precision,
    pub placement: Placement,
    pub lazy_load: bool,
    pub offload_cache: bool,
    pub max_parallel: u32,
    pub batch_budget_mb: u64,
}

impl ToolPolicy {
    /// Hint forwarded to hosted backends.
    pub fn attention_kernels_hint(&self) -> bool {
        self.placement == Placement::Accelerator
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("capacity: {0}")]
    Capacity(String),
}

/// Where the profile comes from. Tests inject one; the CLI probes.
#[derive(Debug, Clone, Copy)]
pub enum ProbeSource {
    System,
    Injected(HardwareProfile),
}

static SYSTEM_PROFILE: OnceLock<HardwareProfile> = OnceLock::new();

/// Probes once per process and caches the result. Unknown quantities are 0.
pub fn probe_hardware(source: ProbeSource) -> HardwareProfile {
    match source {
        ProbeSource::Injected(p) => p,
        ProbeSource::System => *SYSTEM_PROFILE.get_or_init(probe_system),
    }
}

fn probe_system() -> HardwareProfile {
    HardwareProfile {
        accel_mem_mb: probe_accel_mb().unwrap_or(0),
        host_mem_mb: probe_host_mb().unwrap_or(0),
        disk_free_mb: probe_disk_mb(".").unwrap_or(0),
    }
}

fn probe_host_mb() -> Option<u64> {
    let info = std::fs::read_to_string("/proc/meminfo").ok()?;
    parse_meminfo_total_kb(&info).map(|kb| kb / 1024)
}

pub(crate) fn parse_meminfo_total_kb(info: &str) -> Option<u64> {
    info.lines()
        .find_map(|l| l.strip_prefix("MemTotal:"))
        .and_then(|rest| rest.split_whitespace().next())
        .and_then(|n| n.parse().ok())
}

fn probe_disk_mb(path: &str) -> Option<u64> {
    let c = std::ffi::CString::new(path).ok()?;
    let mut st: libc::statvfs = unsafe { std::mem::zeroed() };
    // SAFETY: c is a valid NUL-terminated path and st is a writable statvfs.
    let rc = unsafe { libc::statvfs(c.as_ptr(), &mut st) };
    (rc == 0).then(|| st.f_bavail as u64 * st.f_frsize as u64 / (1024 * 1024))
}

fn probe_accel_mb() -> Option<u64> {
    let out = std::process::Command::new("nvidia-smi")
        .args(["--query-gpu=memory.total", "--format=csv,noheader,nounits"])
        .output()
        .ok()?;
    if !out.status.success() {
        return None;
    }
    parse_nvidia_smi_mb(&String::from_utf8_lossy(&out.stdout))
}

/// Largest single device; a model does not span devices here.
pub(crate) fn parse_nvidia_smi_mb(out: &str) -> Option<u64> {
    out.lines()
        .filter_map(|l| l.trim().parse::<u64>().ok())
        .max()
}

/// The override always wins; otherwise accelerator memory decides.
pub fn select_tier(
    profile: &HardwareProfile,
    override_tier: Option<Tier>,
    thresholds: &TierThresholds,
) -> Tier {
    if let Some(t) = override_tier {
        return t;
    }
    if profile.accel_mem_mb >= thresholds.high_min_mb {
        Tier::High
    } else if profile.accel_mem_mb >= thresholds.medium_min_mb {
        Tier::Medium
    } else {
        Tier::Low
    }
}

/// Reads `WEAVE_TIER`. Invalid values are an error rather than ignored.
pub fn tier_from_env() -> Result<Option<Tier>, String> {
    match std::env::var("WEAVE_TIER") {
        Ok(v) if !v.trim().is_empty() => v.parse().map(Some),
        _ => Ok(None),
    }
}

pub fn policy_for_tool(
    tier: Tier,
    spec: &ToolSpec,
    profile: &HardwareProfile,
) -> Result<ToolPolicy, PolicyError> {
    let est = &spec.mem_estimate_mb;
    let accel = profile.accel_mem_mb;
    let off_accel = if accel == 0 {
        Placement::Host
    } else {
        Placement::Paged
    };
    let fits = |mb: u64| accel > 0 && mb <= accel;

    let (precision, placement, lazy, max_parallel) = match tier {
        Tier::Low => {
            let placement = if accel == 0 || est.fp16 > accel {
                off_accel
            } else {
                Placement::Accelerator
            };
            (Precision::Int4, placement, true, 1)
        }
        Tier::Medium => {
            let placement = if fits(est.int8) {
                Placement::Accelerator
            } else {
                off_accel
            };
            (Precision::Int8, placement, true, 2)
        }
        Tier::High => {
            if fits(est.fp16) {
                (Precision::Fp16, Placement::Accelerator, false, 4)
            } else if fits(est.int8) {
                (Precision::Int8, Placement::Accelerator, false, 4)
            } else if fits(est.int4) {
                (Precision::Int4, Placement::Accelerator, false, 4)
            } else {
                (Precision::Int4, off_accel, false, 4)
            }
        }
    };

    let needed = est.get(precision);
    let pool = match placement {
        Placement::Accelerator => accel,
        Placement::Host | Placement::Paged => {
            if needed > profile.host_mem_mb {
                return Err(PolicyError::Capacity(format!(
                    "tool {} needs {needed} MB at {} but only {} MB of host memory is available",
                    spec.id,
                    precision.as_str(),
                    profile.host_mem_mb
                )));
            }
            profile.host_mem_mb
        }
    };
    let batch_budget_mb = (pool.saturating_sub(needed) / max_parallel as u64).max(1);
    Ok(ToolPolicy {
        precision,
        placement,
        lazy_load: lazy,
        offload_cache: lazy,
        max_parallel,
        batch_budget_mb,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchJob {
    pub id: String,
    pub mem_mb: u64,
}

impl BatchJob {
    pub fn new(id: impl Into<String>, mem_mb: u64) -> Self {
        Self {
            id: id.into(),
            mem_mb,
        }
    }
}

/// First-fit decreasing over (mem desc, id asc). Every job lands in
/// exactly one batch; a job larger than the budget is a capacity error.
pub fn admit_batches(jobs: &[BatchJob], budget_mb: u64) -> Result<Vec<Vec<BatchJob>>, PolicyError> {
    if let Some(big) = jobs.iter().find(|j| j.mem_mb > budget_mb) {
        return Err(PolicyError::Capacity(format!(
            "job {} needs {} MB, over the batch budget of {budget_mb} MB",
            big.id, big.mem_mb
        )));
    }
    let mut sorted = jobs.to_vec();
    sorted.sort_by(|a, b| b.mem_mb.cmp(&a.mem_mb).then_with(|| a.id.cmp(&b.id)));
    let mut batches: Vec<(u64, Vec<BatchJob>)> = Vec::new();
    for job in sorted {
        match batches
            .iter_mut()
            .find(|(used, _)| used + job.mem_mb <= budget_mb)
        {
            Some((used, batch)) => {
                *used += job.mem_mb;
                batch.push(job);
            }
            None => batches.push((job.mem_mb, vec![job])),
        }
    }
    Ok(batches.into_iter().map(|(_, b)| b).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::{BackendKind, MemEstimate, ToolKind};
    use crate::MediaType;

    fn tool(int4: u64, int8: u64, fp16: u64) -> ToolSpec {
        ToolSpec {
            id: "t".into(),
            inputs: vec![MediaType::TEXT],
            output: MediaType::ABC,
            cost_estimate: 1,
            mem_estimate_mb: MemEstimate { int4, int8, fp16 },
            kind: ToolKind::Compose,
            backend: BackendKind::Builtin,
            endpoint: None,
            supports_batching: false,
        }
    }

    #[test]
    fn tier_boundaries() {
        let th = TierThresholds::default();
        let p = |mb| HardwareProfile::new(mb, 16_000, 0);
        assert_eq!(select_tier(&p(0), None, &th), Tier::Low);
        assert_eq!(select_tier(&p(8191), None, &th), Tier::Low);
        assert_eq!(select_tier(&p(8192), None, &th), Tier::Medium);
        assert_eq!(select_tier(&p(24_575), None, &th), Tier::Medium);
        assert_eq!(select_tier(&p(24_576), None, &th), Tier::High);
        assert_eq!(select_tier(&HardwareProfile::a40(), None, &th), Tier::High);
        assert_eq!(
            select_tier(&HardwareProfile::a40(), Some(Tier::Low), &th),
            Tier::Low
        );
    }

    #[test]
    fn low_tier_example() {
        let p = policy_for_tool(
            Tier::Low,
            &tool(2000, 3000, 4000),
            &HardwareProfile::new(4096, 16_000, 0),
        )
        .unwrap();
        assert_eq!(
            (p.precision, p.placement, p.max_parallel),
            (Precision::Int4, Placement::Accelerator, 1)
        );
        assert!(p.lazy_load && p.offload_cache);
        assert_eq!(p.batch_budget_mb, 2096);
    }

    #[test]
    fn low_tier_pages_when_fp16_exceeds_accelerator() {
        let p = policy_for_tool(
            Tier::Low,
            &tool(2000, 3000, 5000),
            &HardwareProfile::new(4096, 16_000, 0),
        )
        .unwrap();
        assert_eq!(p.placement, Placement::Paged);
    }

    #[test]
    fn high_tier_falls_back() {
        let prof = HardwareProfile::new(24_576, 64_000, 0);
        let p = policy_for_tool(Tier::High, &tool(10, 20_000, 30_000), &prof).unwrap();
        assert_eq!(
            (p.precision, p.placement),
            (Precision::Int8, Placement::Accelerator)
        );
        let p = policy_for_tool(Tier::High, &tool(10, 30_000, 40_000), &prof).unwrap();
        assert_eq!(
            (p.precision, p.placement),
            (Precision::Int4, Placement::Accelerator)
        );
        let p = policy_for_tool(Tier::High, &tool(30_000, 35_000, 40_000), &prof).unwrap();
        assert_eq!(
            (p.precision, p.placement),
            (Precision::Int4, Placement::Paged)
        );
        assert!(!p.lazy_load);
    }

    #[test]
    fn no_accelerator_means_host() {
        let p = policy_for_tool(
            Tier::Medium,
            &tool(1, 2, 3),
            &HardwareProfile::new(0, 1000, 0),
        )
        .unwrap();
        assert_eq!(p.placement, Placement::Host);
        assert!(!p.attention_kernels_hint());
    }

    #[test]
    fn capacity_error() {
        let err = policy_for_tool(
            Tier::Low,
            &tool(9_999_999, 9_999_999, 9_999_999),
            &HardwareProfile::new(0, 512, 0),
        );
        assert!(matches!(err, Err(PolicyError::Capacity(_))));
    }

    #[test]
    fn ffd_example() {
        let jobs: Vec<_> = [("a", 10), ("b", 7), ("c", 5), ("d", 3)]
            .map(|(i, m)| BatchJob::new(i, m))
            .to_vec();
        let batches = admit_batches(&jobs, 12).unwrap();
        let ids: Vec<Vec<&str>> = batches
            .iter()
            .map(|b| b.iter().map(|j| j.id.as_str()).collect())
            .collect();
        assert_eq!(ids, vec![vec!["a"], vec!["b", "c"], vec!["d"]]);
        let err = admit_batches(&[BatchJob::new("huge", 13)], 12).unwrap_err();
        assert!(err.to_string().contains("huge"));
    }

    #[test]
    fn probe_parsers() {
        assert_eq!(
            parse_meminfo_total_kb("MemTotal:       16318412 kB\nMemFree: 1 kB"),
            Some(16_318_412)
        );
        assert_eq!(parse_nvidia_smi_mb("46068\n24576\n"), Some(46_068));
        assert_eq!(parse_nvidia_smi_mb(""), None);
    }
}
