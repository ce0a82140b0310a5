//! Content recovery for deleted files and for the former tails of
//! shortened files.
//!
//! Deleting a file clears its bitmap bits and flips its entry types, but
//! the driver leaves FAT cells alone. A contiguous file is recovered from
//! its first cluster and size; a fragmented one by following the stale
//! chain. Every cluster used is checked against the bitmap: an allocated
//! cluster has been handed to another file since.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::Volume;
use crate::direntry::{DirectoryTree, DosTimestamp, FileEntrySet, SetId};
use crate::error::{Error, Result};
use crate::fat::{ChainEnd, ClusterChain, END_OF_CHAIN};
use crate::finding::{Check, Finding};

/// What to put in place of clusters that are allocated to something else.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FillPolicy {
    /// Zero bytes of the same length, keeping later offsets intact.
    #[default]
    SubstituteZero,
    /// Leave the cluster out.
    Skip,
    /// Keep the cluster's current bytes, flagged.
    IncludeFlagged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// Unallocated, used as found.
    Clean,
    /// Allocated since; its bytes were included as-is or skipped.
    Overwritten,
    /// Allocated since; replaced by zero filler.
    Substituted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveredCluster {
    pub cluster: u32,
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub owner: Option<SetId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrity {
    Complete,
    Partial,
    TailSpeculative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecoveryMethod {
    Contiguous,
    FatChain,
    StaleFatChain,
    ContiguousRun,
}

/// Metadata carried over from the entry set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileMetadata {
    pub name: String,
    pub name_complete: bool,
    pub created: DosTimestamp,
    pub modified: DosTimestamp,
    pub accessed: DosTimestamp,
    pub attributes: u16,
    pub first_cluster: u32,
    pub file_size: u64,
    pub no_fat_chain: bool,
}

impl FileMetadata {
    pub fn from_set(set: &FileEntrySet) -> Self {
        FileMetadata {
            name: set.name.clone(),
            name_complete: set.name_complete,
            created: set.created,
            modified: set.modified,
            accessed: set.accessed,
            attributes: set.attributes,
            first_cluster: set.first_cluster,
            file_size: set.file_size,
            no_fat_chain: set.no_fat_chain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveredFile {
    pub source: SetId,
    pub metadata: FileMetadata,
    pub method: RecoveryMethod,
    pub clusters: Vec<RecoveredCluster>,
    pub length: u64,
    pub integrity: Integrity,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain_end: Option<ChainEnd>,
    pub findings: Vec<Finding>,
    pub sha256: String,
    #[serde(skip)]
    pub content: Vec<u8>,
}

impl RecoveredFile {
    pub fn cluster_numbers(&self) -> Vec<u32> {
        self.clusters.iter().map(|c| c.cluster).collect()
    }

    fn finish(mut self) -> Self {
        self.length = self.content.len() as u64;
        self.sha256 = hex::encode(Sha256::digest(&self.content));
        self
    }
}

/// Bytes of the file that fall in its `index`-th cluster.
fn portion(size: u64, cluster_size: u64, index: usize) -> usize {
    let start = index as u64 * cluster_size;
    size.saturating_sub(start).min(cluster_size) as usize
}

/// Copies `clusters` into a file of `size` bytes, applying the fill policy
/// to clusters the bitmap marks allocated.
fn gather(
    vol: &Volume,
    tree: Option<&DirectoryTree>,
    source: SetId,
    clusters: &[u32],
    size: u64,
    policy: FillPolicy,
    findings: &mut Vec<Finding>,
) -> Result<(Vec<RecoveredCluster>, Vec<u8>)> {
    let cs = u64::from(vol.geometry.cluster_size_bytes);
    let mut content = Vec::with_capacity(size.min(clusters.len() as u64 * cs) as usize);
    let mut out = Vec::with_capacity(clusters.len());
    let mut overwritten = Vec::new();
    for (i, &cn) in clusters.iter().enumerate() {
        let take = portion(size, cs, i);
        let owner = tree.and_then(|t| t.active_owner(cn));
        let allocated = vol.bitmap.is_allocated(cn)?;
        // a set being recovered does not overwrite itself
        let foreign = allocated && owner != Some(source);
        if !foreign {
            let bytes = vol.read_cluster(cn)?;
            content.extend_from_slice(&bytes[..take]);
            out.push(RecoveredCluster {
                cluster: cn,
                provenance: Provenance::Clean,
                owner: None,
            });
            continue;
        }
        overwritten.push(cn);
        let provenance = match policy {
            FillPolicy::SubstituteZero => {
                content.resize(content.len() + take, 0);
                Provenance::Substituted
            }
            FillPolicy::Skip => Provenance::Overwritten,
            FillPolicy::IncludeFlagged => {
                let bytes = vol.read_cluster(cn)?;
                content.extend_from_slice(&bytes[..take]);
                Provenance::Overwritten
            }
        };
        out.push(RecoveredCluster {
            cluster: cn,
            provenance,
            owner,
        });
    }
    if !overwritten.is_empty() {
        let owners: Vec<SetId> = {
            let mut v: Vec<SetId> = out.iter().filter_map(|c| c.owner).collect();
            v.sort();
            v.dedup();
            v
        };
        findings.push(
            Finding::new(
                Check::BitmapCluster,
                format!(
                    "{} cluster(s) allocated in the bitmap; handled by {:?}",
                    overwritten.len(),
                    policy
                ),
            )
            .clusters(overwritten)
            .sets(owners),
        );
    }
    Ok((out, content))
}

fn integrity_of(clusters: &[RecoveredCluster], covered: bool) -> Integrity {
    if covered && clusters.iter().all(|c| c.provenance == Provenance::Clean) {
        Integrity::Complete
    } else {
        Integrity::Partial
    }
}

fn empty_result(
    set: &FileEntrySet,
    method: RecoveryMethod,
    integrity: Integrity,
    findings: Vec<Finding>,
) -> RecoveredFile {
    RecoveredFile {
        source: set.id,
        metadata: FileMetadata::from_set(set),
        method,
        clusters: Vec::new(),
        length: 0,
        integrity,
        chain_end: None,
        findings,
        sha256: String::new(),
        content: Vec::new(),
    }
    .finish()
}

/// Recovers a file whose no-FAT-chain flag is set: `file_size` bytes read
/// from consecutive clusters starting at the first cluster.
pub fn recover_contiguous(
    set: &FileEntrySet,
    vol: &Volume,
    tree: Option<&DirectoryTree>,
    policy: FillPolicy,
) -> Result<RecoveredFile> {
    let geom = &vol.geometry;
    if set.file_size == 0 {
        return Ok(empty_result(
            set,
            RecoveryMethod::Contiguous,
            Integrity::Complete,
            Vec::new(),
        ));
    }
    geom.check_cluster(set.first_cluster)?;
    let needed = geom.clusters_for(set.file_size);
    if u64::from(set.first_cluster) + needed > u64::from(geom.cluster_end()) {
        return Err(Error::FileSizeExceedsVolume {
            first_cluster: set.first_cluster,
            size: set.file_size,
        });
    }
    let clusters: Vec<u32> = (set.first_cluster..set.first_cluster + needed as u32).collect();
    let mut findings = Vec::new();
    let (clusters, content) = gather(vol, tree, set.id, &clusters, set.file_size, policy, &mut findings)?;
    if set.valid_data_length < set.file_size {
        findings.push(Finding::new(
            Check::LengthConsistency,
            format!(
                "valid data length {} below file size {}; bytes past it were never written",
                set.valid_data_length, set.file_size
            ),
        ));
    }
    Ok(RecoveredFile {
        source: set.id,
        metadata: FileMetadata::from_set(set),
        method: RecoveryMethod::Contiguous,
        integrity: integrity_of(&clusters, true),
        clusters,
        length: 0,
        chain_end: None,
        findings,
        sha256: String::new(),
        content,
    }
    .finish())
}

/// Recovers a FAT-chained file by following its (possibly stale) chain
/// until the file size is covered or the chain ends.
pub fn recover_chained(
    set: &FileEntrySet,
    vol: &Volume,
    tree: Option<&DirectoryTree>,
    policy: FillPolicy,
) -> Result<RecoveredFile> {
    let geom = &vol.geometry;
    if set.file_size == 0 {
        return Ok(empty_result(
            set,
            RecoveryMethod::FatChain,
            Integrity::Complete,
            Vec::new(),
        ));
    }
    geom.check_cluster(set.first_cluster)?;
    let needed = geom.clusters_for(set.file_size) as usize;
    let chain = vol.fat.walk_chain(set.first_cluster, needed);
    let mut findings = chain_sanity(set, &chain, tree, vol);
    let covered = chain.len() >= needed;
    let (clusters, content) = gather(vol, tree, set.id, &chain.clusters, set.file_size, policy, &mut findings)?;
    findings.push(
        Finding::new(
            Check::ChainTermination,
            format!("{} cluster(s), ended by {:?}", chain.len(), chain.terminated_by),
        )
        .clusters(chain.clusters.last().copied()),
    );
    Ok(RecoveredFile {
        source: set.id,
        metadata: FileMetadata::from_set(set),
        method: RecoveryMethod::FatChain,
        integrity: integrity_of(&clusters, covered),
        clusters,
        length: 0,
        chain_end: Some(chain.terminated_by),
        findings,
        sha256: String::new(),
        content,
    }
    .finish())
}

/// Picks contiguous or chained recovery from the set's flag.
pub fn recover(
    set: &FileEntrySet,
    vol: &Volume,
    tree: Option<&DirectoryTree>,
    policy: FillPolicy,
) -> Result<RecoveredFile> {
    if set.no_fat_chain {
        recover_contiguous(set, vol, tree, policy)
    } else {
        recover_chained(set, vol, tree, policy)
    }
}

/// Cross-checks a rebuilt chain against the file size, the bitmap and the
/// other sets of the volume. A chain of exactly the needed length over
/// unallocated clusters yields no findings.
pub fn chain_sanity(
    set: &FileEntrySet,
    chain: &ClusterChain,
    tree: Option<&DirectoryTree>,
    vol: &Volume,
) -> Vec<Finding> {
    let mut findings = Vec::new();
    let cs = u64::from(vol.geometry.cluster_size_bytes);
    let needed = vol.geometry.clusters_for(set.file_size) as usize;

    if chain.len() < needed {
        findings.push(
            Finding::new(
                Check::ChainShort,
                format!(
                    "chain covers {} of {} clusters ({} of {} bytes), ended by {:?}",
                    chain.len(),
                    needed,
                    chain.len() as u64 * cs,
                    set.file_size,
                    chain.terminated_by
                ),
            )
            .clusters(chain.clusters.last().copied()),
        );
    } else if let Some(&last) = chain.clusters.last() {
        let next = vol.fat.cell(last).unwrap_or(0);
        if next != END_OF_CHAIN {
            findings.push(
                Finding::new(
                    Check::ChainExtendsBeyondSize,
                    format!("cell of last cluster {last} holds 0x{next:08X} instead of end of chain"),
                )
                .clusters([last]),
            );
        }
    }

    let mut reused = Vec::new();
    let mut owners = Vec::new();
    for &cn in &chain.clusters {
        if !vol.bitmap.is_free(cn) {
            let owner = tree.and_then(|t| t.active_owner(cn));
            if owner == Some(set.id) {
                continue;
            }
            reused.push(cn);
            owners.extend(owner);
        }
    }
    if !reused.is_empty() {
        owners.sort();
        owners.dedup();
        findings.push(
            Finding::new(
                Check::ReusedByActive,
                format!("{} chain cluster(s) allocated in the bitmap", reused.len()),
            )
            .clusters(reused)
            .sets(owners),
        );
    }

    if let Some(tree) = tree {
        let mut claimed = Vec::new();
        let mut by = Vec::new();
        for &cn in &chain.clusters {
            for other in tree.sets_with_first_cluster(cn) {
                if other.id == set.id || other.active && !other.from_inactive_directory {
                    continue;
                }
                // the same file under an older name or folder is not a conflict
                if cn == set.first_cluster {
                    continue;
                }
                claimed.push(cn);
                by.push(other.id);
            }
        }
        if !claimed.is_empty() {
            findings.push(
                Finding::new(
                    Check::ClaimedByInactive,
                    "chain clusters are first clusters of other inactive sets; possible reuse by a later deleted file",
                )
                .clusters(claimed)
                .sets(by),
            );
        }
    }
    findings
}

/// Looks for content a shortened active file used to hold.
///
/// First the FAT cell of the file's last current cluster is followed: a
/// stale chain continuing from there is the former tail of a fragmented
/// file. Otherwise the unallocated clusters right after the file are taken
/// as a candidate run and cross-checked against the next entry of the
/// folder, other inactive sets, and FAT cells inside the run. Only
/// unallocated clusters are ever returned, and the result is always
/// labelled tail-speculative.
pub fn recover_shortened_tail(set: &FileEntrySet, vol: &Volume, tree: &DirectoryTree) -> Result<RecoveredFile> {
    let geom = &vol.geometry;
    let fat = &vol.fat;
    let extent = set.extent(geom, fat);
    let Some(&last) = extent.clusters.last() else {
        return Ok(empty_result(
            set,
            RecoveryMethod::ContiguousRun,
            Integrity::TailSpeculative,
            vec![Finding::new(Check::NoCandidateRun, "file has no clusters")],
        ));
    };
    let mut findings = Vec::new();

    // stale chain
    let cell = fat.cell(last)?;
    if cell >= 2 && geom.contains_cluster(cell) && !extent.clusters.contains(&cell) {
        findings.push(
            Finding::new(
                Check::TailStrategy,
                format!("stale FAT chain entered at the cell of last current cluster {last} (0x{cell:08X})"),
            )
            .clusters([last]),
        );
        let chain = fat.walk_chain(cell, fat.cell_count());
        let mut tail = Vec::new();
        let mut excluded = Vec::new();
        for &cn in &chain.clusters {
            if extent.clusters.contains(&cn) {
                excluded.push(cn);
            } else if vol.bitmap.is_free(cn) {
                tail.push(cn);
            } else {
                excluded.push(cn);
            }
        }
        if !excluded.is_empty() {
            findings.push(
                Finding::new(Check::BitmapCluster, "stale chain clusters now allocated were left out")
                    .clusters(excluded),
            );
        }
        findings.push(Finding::new(
            Check::ChainTermination,
            format!(
                "stale chain of {} cluster(s) ended by {:?}",
                chain.len(),
                chain.terminated_by
            ),
        ));
        if !tail.is_empty() {
            let mut content = Vec::with_capacity(tail.len() * geom.cluster_size_bytes as usize);
            for &cn in &tail {
                content.extend(vol.read_cluster(cn)?);
            }
            return Ok(RecoveredFile {
                source: set.id,
                metadata: FileMetadata::from_set(set),
                method: RecoveryMethod::StaleFatChain,
                clusters: tail
                    .into_iter()
                    .map(|cluster| RecoveredCluster {
                        cluster,
                        provenance: Provenance::Clean,
                        owner: None,
                    })
                    .collect(),
                length: 0,
                integrity: Integrity::TailSpeculative,
                chain_end: Some(chain.terminated_by),
                findings,
                sha256: String::new(),
                content,
            }
            .finish());
        }
    }

    // contiguous run after the file
    let mut run = Vec::new();
    let mut cn = last + 1;
    while geom.contains_cluster(cn) && vol.bitmap.is_free(cn) {
        run.push(cn);
        cn += 1;
    }
    if run.is_empty() {
        findings.push(
            Finding::new(
                Check::NoCandidateRun,
                format!("cluster after last cluster {last} is allocated or past the heap"),
            )
            .clusters([last]),
        );
        return Ok(empty_result(
            set,
            RecoveryMethod::ContiguousRun,
            Integrity::TailSpeculative,
            findings,
        ));
    }
    findings.push(
        Finding::new(
            Check::TailStrategy,
            format!(
                "{} unallocated cluster(s) directly follow last cluster {last}",
                run.len()
            ),
        )
        .clusters([run[0], *run.last().unwrap()]),
    );

    // an inactive set starting inside the run marks where another file began
    if let Some(pos) = run.iter().position(|&c| {
        tree.sets_with_first_cluster(c)
            .any(|s| s.id != set.id && (!s.active || s.from_inactive_directory))
    }) {
        let starts: Vec<SetId> = tree
            .sets_with_first_cluster(run[pos])
            .filter(|s| s.id != set.id)
            .map(|s| s.id)
            .collect();
        findings.push(
            Finding::new(
                Check::ClaimedByInactive,
                format!("inactive set starts at cluster {}; run cut there", run[pos]),
            )
            .clusters([run[pos]])
            .sets(starts),
        );
        run.truncate(pos);
    }

    let run_end = run.last().map_or(last + 1, |&c| c + 1);
    let next = tree.directory_of(set.id).and_then(|d| {
        d.sets
            .iter()
            .skip_while(|s| s.id != set.id)
            .skip(1)
            .find(|s| s.active && s.first_cluster != 0)
    });
    match next {
        Some(n) => findings.push(
            Finding::new(
                Check::NextEntryAdjacent,
                if n.first_cluster == run_end {
                    format!(
                        "next entry {:?} starts at cluster {}, right after the run",
                        n.name, n.first_cluster
                    )
                } else {
                    format!(
                        "next entry {:?} starts at cluster {}, run ends before {}",
                        n.name, n.first_cluster, run_end
                    )
                },
            )
            .clusters([n.first_cluster])
            .sets([n.id]),
        ),
        None => findings.push(Finding::new(
            Check::NextEntryAdjacent,
            "no later active entry in the folder",
        )),
    }

    let chained: Vec<u32> = run.iter().copied().filter(|&c| fat.cell(c).unwrap_or(0) != 0).collect();
    if !chained.is_empty() {
        let own_chain = fat.walk_chain(set.first_cluster, fat.cell_count());
        let consistent = chained.iter().all(|c| own_chain.clusters.contains(c));
        findings.push(
            Finding::new(
                Check::FatChainInRun,
                if consistent {
                    "FAT cells in the run belong to a chain starting at the file's first cluster"
                } else {
                    "FAT cells in the run chain from elsewhere; the run may belong to another former file"
                },
            )
            .clusters(chained),
        );
    }

    if run.is_empty() {
        return Ok(empty_result(
            set,
            RecoveryMethod::ContiguousRun,
            Integrity::TailSpeculative,
            findings,
        ));
    }
    let mut content = Vec::with_capacity(run.len() * geom.cluster_size_bytes as usize);
    for &cn in &run {
        content.extend(vol.read_cluster(cn)?);
    }
    Ok(RecoveredFile {
        source: set.id,
        metadata: FileMetadata::from_set(set),
        method: RecoveryMethod::ContiguousRun,
        clusters: run
            .into_iter()
            .map(|cluster| RecoveredCluster {
                cluster,
                provenance: Provenance::Clean,
                owner: None,
            })
            .collect(),
        length: 0,
        integrity: Integrity::TailSpeculative,
        chain_end: None,
        findings,
        sha256: String::new(),
        content,
    }
    .finish())
}

#[cfg(test)]
mod tests {
    use super::portion;

    #[test]
    fn last_cluster_portion() {
        assert_eq!(portion(3000, 1024, 0), 1024);
        assert_eq!(portion(3000, 1024, 2), 952);
        assert_eq!(portion(3000, 1024, 3), 0);
        assert_eq!(portion(2048, 1024, 1), 1024);
    }
}
