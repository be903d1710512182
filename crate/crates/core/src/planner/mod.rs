//! Request derivation and cost-minimal tool graph search.

mod request;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::media::MediaType;
use crate::policy::{policy_for_tool, HardwareProfile, PolicyError, Tier, ToolPolicy};
use crate::registry::{CostFactors, Registry};
pub use request::{derive_request_spec, parse_key, parse_meter, Constraints, RequestSpec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("validation: {0}")]
    Validation(String),
    #[error("unplannable: no tool path reaches {goal}")]
    Unplannable { goal: MediaType },
    #[error(transparent)]
    Capacity(#[from] PolicyError),
}

/// Producer side of an edge: the request source or a plan node.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeRef {
    Source,
    Node(String),
}

impl NodeRef {
    pub const SOURCE: &'static str = "SOURCE";
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeRef::Source => f.write_str(Self::SOURCE),
            NodeRef::Node(id) => f.write_str(id),
        }
    }
}

impl Serialize for NodeRef {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeRef {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(if s == Self::SOURCE {
            NodeRef::Source
        } else {
            NodeRef::Node(s)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanNode {
    pub node_id: String,
    pub tool_id: String,
    pub policy: ToolPolicy,
    /// `cost_estimate` scaled by the precision factor.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEdge {
    pub from: NodeRef,
    pub to: String,
    pub media: MediaType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanGraph {
    pub source: MediaType,
    pub nodes: Vec<PlanNode>,
    pub edges: Vec<PlanEdge>,
    pub sinks: BTreeMap<MediaType, NodeRef>,
    pub total_cost: f64,
}

impl PlanGraph {
    pub fn node(&self, id: &str) -> Option<&PlanNode> {
        self.nodes.iter().find(|n| n.node_id == id)
    }

    /// Edges feeding `node`.
    pub fn incoming<'a>(&'a self, node: &'a str) -> impl Iterator<Item = &'a PlanEdge> + 'a {
        self.edges.iter().filter(move |e| e.to == node)
    }

    /// Tool ids from the source to the sink of `goal`.
    pub fn path_to(&self, goal: MediaType) -> Option<Vec<String>> {
        let mut path = Vec::new();
        let mut at = self.sinks.get(&goal)?.clone();
        let mut guard = 0;
        while let NodeRef::Node(id) = at {
            path.push(self.node(&id)?.tool_id.clone());
            at = self.incoming(&id).next()?.from.clone();
            guard += 1;
            if guard > self.nodes.len() {
                return None;
            }
        }
        path.reverse();
        Some(path)
    }

    /// Sum of node costs along the path to `goal`.
    pub fn goal_cost(&self, goal: MediaType) -> Option<f64> {
        let mut total = 0.0;
        let mut at = self.sinks.get(&goal)?.clone();
        while let NodeRef::Node(id) = at {
            total += self.node(&id)?.cost;
            at = self.incoming(&id).next()?.from.clone();
        }
        Some(total)
    }
}

/// Search label: integer cost in thousandths, then the tool sequence.
type Label = (u64, Vec<String>);

/// Uniform-cost search from `spec.source` to every goal. Ties go to the
/// lexicographically smallest tool-id sequence; shared prefixes become
/// shared nodes.
pub fn plan(
    spec: &RequestSpec,
    registry: &Registry,
    tier: Tier,
    profile: &HardwareProfile,
    factors: &CostFactors,
) -> Result<PlanGraph, PlanError> {
    spec.validate()?;
    let mut policies = BTreeMap::new();
    let mut capacity = BTreeMap::new();
    for t in registry.tools() {
        match policy_for_tool(tier, t, profile) {
            Ok(p) => {
                policies.insert(t.id.clone(), p);
            }
            Err(e) => {
                capacity.insert(t.id.clone(), e);
            }
        }
    }

    let best = search(spec.source, registry, &policies, factors);
    for goal in &spec.goals {
        if *goal != spec.source && !best.contains_key(goal) {
            // would the goal be reachable if the tools that do not fit were allowed?
            let all: BTreeMap<_, _> = registry
                .tools()
                .map(|t| {
                    (
                        t.id.clone(),
                        policies.get(&t.id).copied().unwrap_or(fallback_policy()),
                    )
                })
                .collect();
            let relaxed = search(spec.source, registry, &all, factors);
            if let Some((_, (_, path))) = relaxed.get(goal) {
                if let Some(e) = path.iter().find_map(|id| capacity.get(id)) {
                    return Err(PlanError::Capacity(e.clone()));
                }
            }
            return Err(PlanError::Unplannable { goal: *goal });
        }
    }

    // A reached state is produced by the last tool of its label; its parent
    // state is the input that tool consumed.
    let mut needed: BTreeMap<MediaType, (usize, String, MediaType)> = BTreeMap::new();
    for goal in &spec.goals {
        let mut state = *goal;
        while state != spec.source {
            let (parent, label) = &best[&state];
            let tool = label
                .1
                .last()
                .expect("non-source states have a tool")
                .clone();
            needed.insert(state, (label.1.len(), tool, *parent));
            state = *parent;
        }
    }

    let mut order: Vec<(&MediaType, &(usize, String, MediaType))> = needed.iter().collect();
    order.sort_by(|a, b| (a.1 .0, &a.1 .1, a.0).cmp(&(b.1 .0, &b.1 .1, b.0)));
    let ids: HashMap<MediaType, String> = order
        .iter()
        .enumerate()
        .map(|(i, (state, _))| (**state, format!("n{}", i + 1)))
        .collect();

    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    let mut total_milli = 0u64;
    for (state, (_, tool, parent)) in &order {
        let spec_t = registry
            .get(tool)
            .expect("search only uses registered tools");
        let policy = policies[tool.as_str()];
        let milli = spec_t.cost_estimate * factors.permille(policy.precision);
        total_milli += milli;
        let node_id = ids[*state].clone();
        let from = if *parent == spec.source {
            NodeRef::Source
        } else {
            NodeRef::Node(ids[parent].clone())
        };
        edges.push(PlanEdge {
            from,
            to: node_id.clone(),
            media: *parent,
        });
        nodes.push(PlanNode {
            node_id,
            tool_id: tool.clone(),
            policy,
            cost: milli as f64 / 1000.0,
        });
    }
    let sinks = spec
        .goals
        .iter()
        .map(|g| {
            (
                *g,
                if *g == spec.source {
                    NodeRef::Source
                } else {
                    NodeRef::Node(ids[g].clone())
                },
            )
        })
        .collect();
    Ok(PlanGraph {
        source: spec.source,
        nodes,
        edges,
        sinks,
        total_cost: total_milli as f64 / 1000.0,
    })
}

fn fallback_policy() -> ToolPolicy {
    ToolPolicy {
        precision: crate::policy::Precision::Int4,
        placement: crate::policy::Placement::Host,
        lazy_load: true,
        offload_cache: true,
        max_parallel: 1,
        batch_budget_mb: 1,
    }
}

/// Best label per reachable state, with the state it was reached from.
fn search(
    source: MediaType,
    registry: &Registry,
    policies: &BTreeMap<String, ToolPolicy>,
    factors: &CostFactors,
) -> HashMap<MediaType, (MediaType, Label)> {
    let mut best: HashMap<MediaType, (MediaType, Label)> = HashMap::new();
    let mut done = HashSet::new();
    let mut heap = BinaryHeap::new();
    heap.push(Reverse(((0u64, Vec::<String>::new()), source, source)));
    while let Some(Reverse((label, state, parent))) = heap.pop() {
        if !done.insert(state) {
            continue;
        }
        if state != source {
            best.insert(state, (parent, label.clone()));
        }
        for t in registry.tools().filter(|t| t.consumes(state)) {
            let Some(policy) = policies.get(&t.id) else {
                continue;
            };
            if done.contains(&t.output) {
                continue;
            }
            let mut seq = label.1.clone();
            seq.push(t.id.clone());
            let cost = label.0 + t.cost_estimate * factors.permille(policy.precision);
            heap.push(Reverse(((cost, seq), t.output, state)));
        }
    }
    best
}

/// Re-checks every plan invariant against `registry`. Empty means valid.
pub fn validate_plan(plan: &PlanGraph, registry: &Registry) -> Vec<String> {
    let mut d = Vec::new();
    let mut outputs: HashMap<&str, MediaType> = HashMap::new();
    let mut seen = HashSet::new();
    for n in &plan.nodes {
        if !seen.insert(n.node_id.as_str()) {
            d.push(format!("duplicate node id {}", n.node_id));
        }
        match registry.get(&n.tool_id) {
            Some(t) => {
                outputs.insert(&n.node_id, t.output);
            }
            None => d.push(format!(
                "node {} uses unregistered tool {}",
                n.node_id, n.tool_id
            )),
        }
        if n.policy.max_parallel == 0 {
            d.push(format!("node {} has max_parallel 0", n.node_id));
        }
    }

    for (i, e) in plan.edges.iter().enumerate() {
        let produced = match &e.from {
            NodeRef::Source => Some(plan.source),
            NodeRef::Node(id) => match outputs.get(id.as_str()) {
                Some(m) => Some(*m),
                None if seen.contains(id.as_str()) => None,
                None => {
                    d.push(format!(
                        "edge {i} ({} -> {}) starts at unknown node {id}",
                        e.from, e.to
                    ));
                    None
                }
            },
        };
        if let Some(p) = produced {
            if p != e.media {
                d.push(format!(
                    "edge {i} ({} -> {}) carries {} but the producer outputs {p}",
                    e.from, e.to, e.media
                ));
            }
        }
        match plan.node(&e.to) {
            None => d.push(format!(
                "edge {i} ({} -> {}) ends at unknown node",
                e.from, e.to
            )),
            Some(n) => {
                if let Some(t) = registry.get(&n.tool_id) {
                    if !t.consumes(e.media) {
                        d.push(format!(
                            "edge {i} ({} -> {}) carries {} which tool {} does not accept",
                            e.from, e.to, e.media, t.id
                        ));
                    }
                }
            }
        }
    }

    for n in &plan.nodes {
        if plan.incoming(&n.node_id).next().is_none() {
            d.push(format!("node {} has no input edge", n.node_id));
        }
    }

    // Kahn's algorithm over node-to-node edges
    let mut indegree: HashMap<&str, usize> =
        plan.nodes.iter().map(|n| (n.node_id.as_str(), 0)).collect();
    for e in &plan.edges {
        if matches!(e.from, NodeRef::Node(_)) {
            if let Some(c) = indegree.get_mut(e.to.as_str()) {
                *c += 1;
            }
        }
    }
    let mut ready: Vec<&str> = indegree
        .iter()
        .filter(|(_, c)| **c == 0)
        .map(|(n, _)| *n)
        .collect();
    let mut visited = 0;
    while let Some(n) = ready.pop() {
        visited += 1;
        for e in plan
            .edges
            .iter()
            .filter(|e| e.from == NodeRef::Node(n.to_string()))
        {
            if let Some(c) = indegree.get_mut(e.to.as_str()) {
                *c -= 1;
                if *c == 0 {
                    ready.push(e.to.as_str());
                }
            }
        }
    }
    if visited < indegree.len() {
        d.push("plan graph contains a cycle".to_string());
    }

    for (goal, sink) in &plan.sinks {
        let out = match sink {
            NodeRef::Source => Some(plan.source),
            NodeRef::Node(id) => outputs.get(id.as_str()).copied(),
        };
        match out {
            Some(o) if o == *goal => {}
            Some(o) => d.push(format!("sink for {goal} is {sink}, which outputs {o}")),
            None => d.push(format!("sink for {goal} names unknown node {sink}")),
        }
    }
    d
}

/// Node ids in a topological order (plan order is already topological
/// for planner output; this also handles hand-built graphs).
pub fn topological_order(plan: &PlanGraph) -> Vec<String> {
    let mut placed: HashSet<String> = HashSet::new();
    let mut out = Vec::new();
    while out.len() < plan.nodes.len() {
        let before = out.len();
        for n in &plan.nodes {
            if placed.contains(&n.node_id) {
                continue;
            }
            let ready = plan.incoming(&n.node_id).all(|e| match &e.from {
                NodeRef::Source => true,
                NodeRef::Node(p) => placed.contains(p),
            });
            if ready {
                placed.insert(n.node_id.clone());
                out.push(n.node_id.clone());
            }
        }
        if out.len() == before {
            break;
        }
    }
    out
}
