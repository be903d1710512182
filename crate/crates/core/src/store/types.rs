use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::canonical::{sha256_hex, to_canonical};
use crate::media::{Format, MediaType, Modality};
use crate::policy::{Tier, ToolPolicy};

macro_rules! token {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }
    };
}

token!(
    /// Lowercase hex SHA-256 of the artifact bytes.
    ArtifactId
);
token!(SessionId);
token!(TurnId);
token!(PlanId);

impl ArtifactId {
    pub fn of(bytes: &[u8]) -> Self {
        Self(sha256_hex(bytes))
    }
}

impl SessionId {
    pub fn fresh() -> Self {
        Self(format!("s-{}", uuid::Uuid::new_v4().simple()))
    }
}

impl PlanId {
    pub fn fresh() -> Self {
        Self(format!("p-{}", uuid::Uuid::new_v4().simple()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Local,
    Hosted,
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "local" => Ok(Mode::Local),
            "hosted" => Ok(Mode::Hosted),
            other => Err(format!("unknown mode {other:?} (expected local or hosted)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Local => "local",
            Mode::Hosted => "hosted",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    System,
    Tool,
    Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: SessionId,
    pub created_at: DateTime<Utc>,
    pub mode: Mode,
    pub tier_override: Option<Tier>,
    pub turns: Vec<TurnId>,
    pub active_plan: Option<PlanId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub id: TurnId,
    pub session_id: SessionId,
    pub role: Role,
    pub text: String,
    pub attachments: Vec<ArtifactId>,
    pub created_at: DateTime<Utc>,
}

/// Everything about an artifact except its bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub id: ArtifactId,
    pub modality: Modality,
    pub format: Format,
    pub producer: String,
    pub inputs: Vec<ArtifactId>,
    pub created_at: DateTime<Utc>,
    pub size_bytes: u64,
    /// Free-form role tag, e.g. `"drums"` for a stem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<String>,
}

impl ArtifactMeta {
    pub fn media(&self) -> MediaType {
        MediaType {
            modality: self.modality,
            format: self.format,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub meta: ArtifactMeta,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn id(&self) -> &ArtifactId {
        &self.meta.id
    }

    pub fn media(&self) -> MediaType {
        self.meta.media()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MemoKey {
    pub tool_id: String,
    pub input_digest: String,
    pub policy_digest: String,
}

impl MemoKey {
    /// `params` must be a JSON object or null; it is canonicalized here.
    pub fn new(
        tool_id: &str,
        inputs: &[ArtifactId],
        params: &serde_json::Value,
        policy: &ToolPolicy,
    ) -> Self {
        Self {
            tool_id: tool_id.to_string(),
            input_digest: input_digest(inputs, params),
            policy_digest: policy_digest(policy),
        }
    }
}

pub fn input_digest(inputs: &[ArtifactId], params: &serde_json::Value) -> String {
    let doc = serde_json::json!({ "inputs": inputs, "params": params });
    sha256_hex(to_canonical(&doc).as_bytes())
}

pub fn policy_digest(policy: &ToolPolicy) -> String {
    sha256_hex(to_canonical(policy).as_bytes())
}
