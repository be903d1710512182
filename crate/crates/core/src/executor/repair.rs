use serde::{Deserialize, Serialize};

use crate::planner::PlanGraph;
use crate::registry::Registry;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum FailureCause {
    Failed(String),
    Timeout(String),
    /// The backend returned bytes that do not decode as the declared format.
    FormatCheck(String),
}

impl FailureCause {
    pub fn detail(&self) -> &str {
        match self {
            FailureCause::Failed(d) | FailureCause::Timeout(d) | FailureCause::FormatCheck(d) => d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", content = "tool_id", rename_all = "snake_case")]
pub enum RepairAction {
    Retry,
    Substitute(String),
    Abort,
}

/// Repair for a failed execution of `failed_node` on its planned tool.
pub fn repair(
    plan: &PlanGraph,
    failed_node: &str,
    cause: &FailureCause,
    attempt: u32,
    registry: &Registry,
    max_repair_attempts: u32,
) -> RepairAction {
    let current = plan
        .node(failed_node)
        .map(|n| n.tool_id.clone())
        .unwrap_or_default();
    repair_from(
        plan,
        failed_node,
        &current,
        cause,
        attempt,
        registry,
        max_repair_attempts,
    )
}

/// As [`repair`], when the node currently runs `current_tool` (after an
/// earlier substitution). Attempt 1 retries; later attempts within the
/// budget substitute the next tool by id with the same typed signature,
/// wrapping around; past the budget, or with no alternative, abort.
pub fn repair_from(
    plan: &PlanGraph,
    failed_node: &str,
    current_tool: &str,
    _cause: &FailureCause,
    attempt: u32,
    registry: &Registry,
    max_repair_attempts: u32,
) -> RepairAction {
    if attempt == 0 || attempt > max_repair_attempts {
        return RepairAction::Abort;
    }
    if attempt == 1 {
        return RepairAction::Retry;
    }
    let (Some(tool), Some(edge)) = (
        registry.get(current_tool),
        plan.incoming(failed_node).next(),
    ) else {
        return RepairAction::Abort;
    };
    let alternatives: Vec<String> = registry
        .find_converters(edge.media, tool.output)
        .into_iter()
        .filter(|id| id != current_tool)
        .collect();
    alternatives
        .iter()
        .find(|id| id.as_str() > current_tool)
        .or_else(|| alternatives.first())
        .map(|id| RepairAction::Substitute(id.clone()))
        .unwrap_or(RepairAction::Abort)
}
