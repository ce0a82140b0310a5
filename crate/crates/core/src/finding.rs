use serde::{Deserialize, Serialize};

use crate::direntry::SetId;

/// The cross-check a finding records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    // classification
    FirstClusterMatch,
    IdentityWordMatch,
    CreationTimestamp,
    ModificationRecency,
    FolderRelation,
    NameChange,
    BitmapFirstCluster,
    ClusterReused,
    ConflictingMatches,
    InactiveHistory,
    NoClusterEvidence,
    // recovery
    BitmapCluster,
    ChainTermination,
    ChainShort,
    ChainExtendsBeyondSize,
    ReusedByActive,
    ClaimedByInactive,
    LengthConsistency,
    TailStrategy,
    NextEntryAdjacent,
    FatChainInRun,
    NoCandidateRun,
    // carving
    SizeMismatch,
    SizeMismatchExplained,
    FatCompletion,
    FooterFound,
    TimestampTie,
    NameIncomplete,
    NoClusterAlignment,
}

/// One piece of evidence: which check ran, what it found, and the
/// clusters and entry sets it cites.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub check: Check,
    pub result: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub clusters: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sets: Vec<SetId>,
}

impl Finding {
    pub fn new(check: Check, result: impl Into<String>) -> Self {
        Finding {
            check,
            result: result.into(),
            clusters: Vec::new(),
            sets: Vec::new(),
        }
    }

    pub fn clusters(mut self, clusters: impl IntoIterator<Item = u32>) -> Self {
        self.clusters.extend(clusters);
        self
    }

    pub fn sets(mut self, sets: impl IntoIterator<Item = SetId>) -> Self {
        self.sets.extend(sets);
        self
    }
}
