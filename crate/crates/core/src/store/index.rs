//! Append-only `index.jsonl` records.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::types::{ArtifactId, ArtifactMeta, MemoKey, Role, Session, SessionId, Turn, TurnId};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
pub(crate) enum Record {
    Artifact(ArtifactMeta),
    Memo {
        #[serde(flatten)]
        key: MemoKey,
        artifact: ArtifactId,
    },
    Evict {
        id: ArtifactId,
    },
    Session(SessionRecord),
    Turn {
        session_id: SessionId,
        id: TurnId,
        role: Role,
        text: String,
        attachments: Vec<ArtifactId>,
        created_at: DateTime<Utc>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct SessionRecord {
    pub id: SessionId,
    pub created_at: DateTime<Utc>,
    pub mode: super::types::Mode,
    pub tier_override: Option<crate::policy::Tier>,
}

impl From<&Session> for SessionRecord {
    fn from(s: &Session) -> Self {
        Self {
            id: s.id.clone(),
            created_at: s.created_at,
            mode: s.mode,
            tier_override: s.tier_override,
        }
    }
}

impl From<&Turn> for Record {
    fn from(t: &Turn) -> Self {
        Record::Turn {
            session_id: t.session_id.clone(),
            id: t.id.clone(),
            role: t.role,
            text: t.text.clone(),
            attachments: t.attachments.clone(),
            created_at: t.created_at,
        }
    }
}
