//! The structured analysis report and output naming.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bitmap::ClusterRun;
use crate::carver::CarveReport;
use crate::classifier::{InactiveVerdict, Verdict};
use crate::direntry::{DirectoryTree, SetId};
use crate::error::Result;
use crate::fat::ClusterChain;
use crate::finding::Finding;
use crate::recovery::RecoveredFile;
use crate::volume::{VolumeGeometry, VolumeImage};

/// Bumped whenever a field is renamed, removed or changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageInfo {
    /// Absolute path; omitted in deterministic reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    pub sha256: String,
    pub length: u64,
    pub partition_offset: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntrySummary {
    pub set: SetId,
    pub path: String,
    pub active: bool,
    pub directory: bool,
    pub first_cluster: u32,
    pub file_size: u64,
    pub no_fat_chain: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeSummary {
    pub directories: usize,
    pub active_sets: usize,
    pub inactive_sets: usize,
    pub malformed_sets: usize,
    pub orphan_records: usize,
    pub entries: Vec<EntrySummary>,
}

impl TreeSummary {
    pub fn new(tree: &DirectoryTree, verdicts: &[InactiveVerdict]) -> Self {
        let mut entries: Vec<EntrySummary> = tree
            .sets()
            .map(|s| EntrySummary {
                set: s.id,
                path: tree.path_of(s.id).unwrap_or_else(|| s.name.clone()),
                active: s.active && !s.from_inactive_directory,
                directory: s.is_directory(),
                first_cluster: s.first_cluster,
                file_size: s.file_size,
                no_fat_chain: s.no_fat_chain,
                verdict: verdicts.iter().find(|v| v.set == s.id).map(|v| v.verdict),
            })
            .collect();
        entries.sort_by_key(|e| e.set);
        TreeSummary {
            directories: tree.directories().len(),
            active_sets: tree.active_sets().count(),
            inactive_sets: tree.inactive_sets().count(),
            malformed_sets: tree.sets().filter(|s| s.is_malformed()).count(),
            orphan_records: tree.directories().iter().map(|d| d.orphans.len()).sum(),
            entries,
        }
    }
}

/// Allocation state of the heap, and optionally of one cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitmapSummary {
    pub allocated_clusters: u32,
    pub unallocated_clusters: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allocated: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unallocated_runs: Vec<ClusterRun>,
}

/// A file the run wrote, named relative to the output directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    pub name: String,
    pub length: u64,
    pub sha256: String,
}

/// A finding not tied to one verdict, recovery or carve hit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoggedFinding {
    pub context: String,
    #[serde(flatten)]
    pub finding: Finding,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
    pub image: ImageInfo,
    pub geometry: VolumeGeometry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<TreeSummary>,
    #[serde(default)]
    pub verdicts: Vec<InactiveVerdict>,
    #[serde(default)]
    pub recoveries: Vec<RecoveredFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carve: Option<CarveReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fat_chain: Option<ClusterChain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bitmap: Option<BitmapSummary>,
    #[serde(default)]
    pub outputs: Vec<OutputFile>,
    #[serde(default)]
    pub findings: Vec<LoggedFinding>,
    #[serde(default)]
    pub walk_errors: Vec<String>,
}

impl Report {
    pub fn new(image: ImageInfo, geometry: VolumeGeometry) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            generated_at: None,
            image,
            geometry,
            tree: None,
            verdicts: Vec::new(),
            recoveries: Vec::new(),
            carve: None,
            fat_chain: None,
            bitmap: None,
            outputs: Vec::new(),
            findings: Vec::new(),
            walk_errors: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 of the image bytes from the partition offset on, read in chunks.
pub fn image_sha256(image: &VolumeImage) -> Result<String> {
    const CHUNK: u64 = 8 << 20;
    let mut h = Sha256::new();
    let mut off = 0;
    while off < image.len() {
        let n = CHUNK.min(image.len() - off);
        h.update(image.read_at(off, n as usize)?);
        off += n;
    }
    Ok(hex::encode(h.finalize()))
}

/// Keeps a name safe for any file system: ASCII letters, digits, `.`, `-`
/// and `_`; everything else becomes `_`.
pub fn sanitize(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') {
                c
            } else {
                '_'
            }
        })
        .collect();
    let s = s.trim_start_matches('.');
    if s.is_empty() {
        "unnamed".to_string()
    } else {
        s.chars().take(120).collect()
    }
}

/// `<label>_<parent>-<offset>_<name>`, unique per entry set.
pub fn output_name(label: &str, set: SetId, name: &str) -> String {
    format!(
        "{label}_{}-{}_{}",
        set.parent_cluster,
        set.record_offset,
        sanitize(name)
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names() {
        let id = SetId {
            parent_cluster: 4,
            record_offset: 1_049_664,
        };
        assert_eq!(
            output_name("deleted", id, "target earth.png"),
            "deleted_4-1049664_target_earth.png"
        );
        assert_eq!(sanitize("../../etc/passwd"), "_.._etc_passwd");
        assert_eq!(sanitize(""), "unnamed");
    }
}
