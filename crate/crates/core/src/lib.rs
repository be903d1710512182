//! Planning, policy, caching and execution for an agentic music pipeline.
//!
//! A user turn becomes a [`RequestSpec`]; the [`planner`] searches the
//! [`Registry`] for the cheapest typed tool graph under the tier's
//! [`ToolPolicy`]; the [`executor`] runs it through builtin, mock or HTTP
//! [`adapters`], memoizing every step in the [`Store`], then critiques the
//! result and repairs within a fixed budget.
//!
//! ```
//! use weave_core::{derive_request_spec, plan, CostFactors, HardwareProfile, Registry, Tier};
//!
//! let spec = derive_request_spec("a jig in G, 6/8 time, let me hear it", &[]).unwrap();
//! let graph = plan(&spec, &Registry::builtin(), Tier::Low, &HardwareProfile::new(4096, 16384, 0),
//!                  &CostFactors::default()).unwrap();
//! let tools: Vec<_> = graph.nodes.iter().map(|n| n.tool_id.as_str()).collect();
//! assert_eq!(tools, ["compose.abc", "convert.abc2midi", "synth.midi2wav"]);
//! ```

pub mod adapters;
pub mod canonical;
pub mod executor;
pub mod media;
pub mod planner;
pub mod policy;
pub mod registry;
pub mod store;

pub use adapters::{Backends, Fault, Invocation, InvocationResult, MockAdapter, Outcome};
pub use canonical::{canonical_json, sha256_hex, to_canonical};
pub use executor::{
    Check, CollectingSink, EventKind, EventSink, ExecError, ExecutionReport, Executor,
    ExecutorConfig, NullSink, ProgressEvent, RepairAction, RepairRecord, StepRecord, StepStatus,
    Verdict, VerdictStatus,
};
pub use media::{Format, MediaType, Modality};
pub use planner::{
    derive_request_spec, plan, validate_plan, Constraints, NodeRef, PlanError, PlanGraph,
    RequestSpec,
};
pub use policy::{
    admit_batches, policy_for_tool, probe_hardware, select_tier, BatchJob, HardwareProfile,
    Placement, PolicyError, Precision, ProbeSource, Tier, TierThresholds, ToolPolicy,
};
pub use registry::{
    validate_spec, BackendKind, CostFactors, MemEstimate, Registry, RegistryError, ToolKind,
    ToolSpec, ToolsConfig,
};
pub use store::{Artifact, ArtifactId, MemoKey, Mode, PlanId, Role, SessionId, Store, StoreError};
