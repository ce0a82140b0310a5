//! Interpretation of inactive entry sets.
//!
//! An inactive set only says that the driver stopped using those records.
//! The file behind it may have been deleted, but a rename to a longer name
//! or a move to another folder leaves exactly the same trace. The verdict
//! here comes from cross-checking the set against the active sets (same
//! first cluster, creation time, identity word, folder) and against the
//! allocation bitmap, and every verdict carries the findings it rests on.

use serde::{Deserialize, Serialize};

use crate::bitmap::AllocationBitmap;
use crate::direntry::{DirectoryTree, FileEntrySet, SetId};
use crate::finding::{Check, Finding};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Deleted,
    Moved,
    Renamed,
    Indeterminate,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Deleted => "deleted",
            Verdict::Moved => "moved",
            Verdict::Renamed => "renamed",
            Verdict::Indeterminate => "indeterminate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InactiveVerdict {
    pub set: SetId,
    pub verdict: Verdict,
    pub evidence: Vec<Finding>,
    /// The active set that corroborates a move or rename.
    pub matched_set: Option<SetId>,
    /// Other inactive sets sharing the first cluster, oldest first.
    pub history: Vec<SetId>,
}

/// Orders sets by (modification, access, creation) time, then location.
pub(crate) fn recency_key(s: &FileEntrySet) -> (u32, u32, u32, SetId) {
    (s.modified.raw, s.accessed.raw, s.created.raw, s.id)
}

/// Classifies one inactive set.
pub fn classify(set: &FileEntrySet, tree: &DirectoryTree, bitmap: &AllocationBitmap) -> InactiveVerdict {
    let mut evidence = Vec::new();
    let verdict = |verdict, evidence, matched_set, history| InactiveVerdict {
        set: set.id,
        verdict,
        evidence,
        matched_set,
        history,
    };

    let fc = set.first_cluster;
    if fc == 0 || bitmap.is_allocated(fc).is_err() {
        evidence.push(Finding::new(
            Check::NoClusterEvidence,
            format!("first cluster {fc} is not a heap cluster; nothing to cross-check"),
        ));
        return verdict(Verdict::Indeterminate, evidence, None, Vec::new());
    }

    let mut history: Vec<&FileEntrySet> = tree
        .sets_with_first_cluster(fc)
        .filter(|s| s.id != set.id && (!s.active || s.from_inactive_directory))
        .collect();
    history.sort_by_key(|s| recency_key(s));
    let history: Vec<SetId> = history.iter().map(|s| s.id).collect();
    if !history.is_empty() {
        evidence.push(
            Finding::new(
                Check::InactiveHistory,
                format!("{} other inactive set(s) share first cluster {fc}", history.len()),
            )
            .clusters([fc])
            .sets(history.iter().copied()),
        );
    }

    let actives: Vec<&FileEntrySet> = tree
        .sets_with_first_cluster(fc)
        .filter(|s| s.id != set.id && s.active && !s.from_inactive_directory)
        .collect();
    evidence.push(
        Finding::new(
            Check::FirstClusterMatch,
            format!("{} active set(s) with first cluster {fc}", actives.len()),
        )
        .clusters([fc])
        .sets(actives.iter().map(|s| s.id)),
    );

    if actives.is_empty() {
        return match bitmap.is_allocated(fc) {
            Ok(false) => {
                evidence.push(Finding::new(Check::BitmapFirstCluster, "unallocated").clusters([fc]));
                verdict(Verdict::Deleted, evidence, None, history)
            }
            _ => {
                evidence.push(Finding::new(Check::BitmapFirstCluster, "allocated").clusters([fc]));
                let owner = tree.active_owner(fc);
                evidence.push(
                    Finding::new(
                        Check::ClusterReused,
                        match owner {
                            Some(o) => format!("first cluster now belongs to active set {o}"),
                            None => "first cluster allocated but no active set claims it".to_string(),
                        },
                    )
                    .clusters([fc])
                    .sets(owner),
                );
                verdict(Verdict::Indeterminate, evidence, None, history)
            }
        };
    }

    let mut moved = Vec::new();
    let mut renamed = Vec::new();
    for a in &actives {
        let same_folder = a.id.parent_cluster == set.id.parent_cluster;
        let creation_equal = a.created.raw == set.created.raw;
        let identity_equal = a.identity_word == set.identity_word;
        let name_differs = a.name != set.name || a.name_length != set.name_length;
        evidence.push(
            Finding::new(
                Check::FolderRelation,
                if same_folder { "same folder" } else { "different folder" },
            )
            .sets([a.id]),
        );
        evidence.push(
            Finding::new(
                Check::CreationTimestamp,
                if creation_equal {
                    format!("equal ({})", a.created)
                } else {
                    format!("differs ({} vs {})", set.created, a.created)
                },
            )
            .sets([a.id]),
        );
        evidence.push(
            Finding::new(
                Check::IdentityWordMatch,
                if identity_equal {
                    format!("equal (0x{:04X})", a.identity_word)
                } else {
                    format!("differs (0x{:04X} vs 0x{:04X})", set.identity_word, a.identity_word)
                },
            )
            .sets([a.id]),
        );
        evidence.push(
            Finding::new(
                Check::NameChange,
                if name_differs {
                    format!("{:?} -> {:?}", set.name, a.name)
                } else {
                    "same name".to_string()
                },
            )
            .sets([a.id]),
        );
        if !same_folder && creation_equal && identity_equal {
            moved.push(*a);
        } else if same_folder && creation_equal && name_differs {
            renamed.push(*a);
        }
    }

    let matched = match (moved.as_slice(), renamed.as_slice()) {
        ([m], []) => Some((Verdict::Moved, *m)),
        ([], [r]) => Some((Verdict::Renamed, *r)),
        _ => None,
    };
    match matched {
        Some((v, m)) => {
            let newer = m.modified.raw >= set.modified.raw;
            evidence.push(
                Finding::new(
                    Check::ModificationRecency,
                    if newer {
                        format!("active copy modified {} is not older than {}", m.modified, set.modified)
                    } else {
                        format!("active copy modified {} is older than {}", m.modified, set.modified)
                    },
                )
                .sets([m.id]),
            );
            verdict(v, evidence, Some(m.id), history)
        }
        None => {
            let result = if moved.is_empty() && renamed.is_empty() {
                "active sets share the first cluster but fail the creation, identity or folder checks; cluster likely reused".to_string()
            } else {
                format!(
                    "{} move candidate(s) and {} rename candidate(s)",
                    moved.len(),
                    renamed.len()
                )
            };
            evidence.push(
                Finding::new(Check::ConflictingMatches, result)
                    .clusters([fc])
                    .sets(moved.iter().chain(renamed.iter()).map(|s| s.id)),
            );
            verdict(Verdict::Indeterminate, evidence, None, history)
        }
    }
}

/// Classifies every inactive set of the tree, ordered by location.
pub fn classify_all(tree: &DirectoryTree, bitmap: &AllocationBitmap) -> Vec<InactiveVerdict> {
    let mut out: Vec<InactiveVerdict> = tree.inactive_sets().map(|s| classify(s, tree, bitmap)).collect();
    out.sort_by_key(|v| v.set);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    FirstCluster,
    IdentityWord,
    FileSize,
    Name,
}

/// Which properties [`find_similar`] compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimilarityCriteria {
    pub first_cluster: bool,
    pub identity_word: bool,
    pub file_size: bool,
    pub name: bool,
}

impl SimilarityCriteria {
    pub const ALL: Self = SimilarityCriteria {
        first_cluster: true,
        identity_word: true,
        file_size: true,
        name: true,
    };

    pub fn only(c: Criterion) -> Self {
        SimilarityCriteria {
            first_cluster: c == Criterion::FirstCluster,
            identity_word: c == Criterion::IdentityWord,
            file_size: c == Criterion::FileSize,
            name: c == Criterion::Name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub set: SetId,
    /// The strongest criterion matched; first cluster is the strongest.
    pub rank: Criterion,
    pub matched: Vec<Criterion>,
}

/// Sets other than `set` sharing at least one selected property, strongest
/// match first.
pub fn find_similar(set: &FileEntrySet, tree: &DirectoryTree, criteria: SimilarityCriteria) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = tree
        .sets()
        .filter(|s| s.id != set.id)
        .filter_map(|s| {
            let mut matched = Vec::new();
            if criteria.first_cluster && set.first_cluster != 0 && s.first_cluster == set.first_cluster {
                matched.push(Criterion::FirstCluster);
            }
            if criteria.identity_word && s.identity_word == set.identity_word {
                matched.push(Criterion::IdentityWord);
            }
            if criteria.file_size && s.file_size == set.file_size {
                matched.push(Criterion::FileSize);
            }
            if criteria.name && s.name == set.name {
                matched.push(Criterion::Name);
            }
            let rank = *matched.first()?;
            Some(Candidate {
                set: s.id,
                rank,
                matched,
            })
        })
        .collect();
    out.sort_by(|a, b| {
        a.rank
            .cmp(&b.rank)
            .then(b.matched.len().cmp(&a.matched.len()))
            .then(a.set.cmp(&b.set))
    });
    out
}
