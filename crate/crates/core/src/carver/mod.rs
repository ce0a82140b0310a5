//! Signature carving of unallocated space, with carved content tied back to
//! the inactive entry sets that still describe it.
//!
//! A header found at the start of an unallocated cluster is matched against
//! every inactive stream extension naming that cluster as first cluster.
//! The most recent match supplies the length (its file size), the name and
//! the timestamps; a FAT-chained match has its remaining fragments followed
//! through the stale chain. Without a match the carve runs to the footer or
//! to the end of the unallocated run.

pub mod signature;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use signature::{builtin, load_catalog, parse_catalog, Granularity, Signature, CATALOG_ENV};

use crate::analysis::Volume;
use crate::bitmap::{AllocationBitmap, ClusterRun};
use crate::classifier::recency_key;
use crate::direntry::{DirectoryTree, FileEntrySet, SetId};
use crate::error::{Error, Result};
use crate::finding::{Check, Finding};
use crate::recovery::{recover_chained, recover_contiguous, FileMetadata, FillPolicy, Provenance};
use crate::volume::{VolumeGeometry, VolumeImage};

/// A header match found by [`scan_unallocated`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanHit {
    pub signature: String,
    /// Volume sector where the header starts.
    pub sector: u64,
    /// Cluster containing that sector.
    pub cluster: u32,
    /// True when the sector is the first of its cluster.
    pub aligned: bool,
}

/// Upper bound on clusters read per chunk while scanning.
const SCAN_CHUNK_BYTES: u64 = 4 << 20;

fn heap_run(geom: &VolumeGeometry) -> ClusterRun {
    ClusterRun {
        start: 2,
        len: geom.cluster_count,
    }
}

/// Looks for signature headers in unallocated clusters.
///
/// In cluster-start mode only the first bytes of each unallocated cluster
/// are compared and the bitmap is required. In every-sector mode each
/// sector is compared; without a bitmap the whole heap is scanned. A
/// signature whose own preference is every-sector is always scanned that way.
pub fn scan_unallocated(
    image: &VolumeImage,
    geom: &VolumeGeometry,
    bitmap: Option<&AllocationBitmap>,
    signatures: &[Signature],
    granularity: Granularity,
) -> Result<Vec<ScanHit>> {
    let runs = match (bitmap, granularity) {
        (Some(bm), _) => bm.unallocated_runs(),
        (None, Granularity::EverySector) => vec![heap_run(geom)],
        (None, Granularity::ClusterStart) => {
            return Err(Error::InvalidOperation(
                "cluster-start scanning needs the allocation bitmap".into(),
            ))
        }
    };
    let cs = u64::from(geom.cluster_size_bytes);
    let ss = u64::from(geom.sector_size_bytes);
    let chunk_clusters = (SCAN_CHUNK_BYTES / cs).max(1) as u32;
    let mut hits = Vec::new();
    for run in runs {
        let mut c = run.start;
        while c < run.end() {
            let n = chunk_clusters.min(run.end() - c);
            let base = crate::volume::cluster_to_offset(geom, c)?;
            let bytes = image.read_at(base, (u64::from(n) * cs) as usize)?;
            for (pos, chunk) in bytes.chunks(ss as usize).enumerate() {
                let off = pos as u64 * ss;
                let aligned = off.is_multiple_of(cs);
                for sig in signatures {
                    let every = granularity == Granularity::EverySector || sig.granularity == Granularity::EverySector;
                    if !aligned && !every {
                        continue;
                    }
                    if chunk.starts_with(&sig.header) {
                        hits.push(ScanHit {
                            signature: sig.name.clone(),
                            sector: (base + off) / ss,
                            cluster: c + (off / cs) as u32,
                            aligned,
                        });
                    }
                }
            }
            c += n;
        }
    }
    hits.sort_by(|a, b| a.sector.cmp(&b.sector).then_with(|| a.signature.cmp(&b.signature)));
    Ok(hits)
}

/// Inactive sets by first cluster, built once per volume.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CarveIndex {
    pub by_first_cluster: BTreeMap<u32, Vec<SetId>>,
}

impl CarveIndex {
    pub fn build(tree: &DirectoryTree) -> Self {
        let mut by_first_cluster: BTreeMap<u32, Vec<SetId>> = BTreeMap::new();
        for s in tree.inactive_sets() {
            if s.first_cluster != 0 && !s.is_directory() {
                by_first_cluster.entry(s.first_cluster).or_default().push(s.id);
            }
        }
        for v in by_first_cluster.values_mut() {
            v.sort();
        }
        CarveIndex { by_first_cluster }
    }

    pub fn candidates(&self, cluster: u32) -> &[SetId] {
        self.by_first_cluster.get(&cluster).map_or(&[], Vec::as_slice)
    }
}

/// Inactive sets, in any folder, whose first cluster is `start_cluster`.
pub fn match_entries(start_cluster: u32, tree: &DirectoryTree) -> Vec<&FileEntrySet> {
    tree.sets_with_first_cluster(start_cluster)
        .filter(|s| (!s.active || s.from_inactive_directory) && !s.is_directory())
        .collect()
}

/// Sector-addressed variant: converts to the containing cluster first.
/// A sector that does not start its cluster cannot be a file start and
/// matches nothing.
pub fn match_entries_at_sector<'t>(
    sector: u64,
    geom: &VolumeGeometry,
    tree: &'t DirectoryTree,
) -> Vec<&'t FileEntrySet> {
    match geom.sector_to_cluster(sector) {
        Some((cn, true)) => match_entries(cn, tree),
        _ => Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub chosen: Option<SetId>,
    /// Candidates sharing the newest timestamps when no single one wins.
    pub tied: Vec<SetId>,
}

/// Picks the candidate with the latest (modification, access, creation)
/// timestamps. Exact ties choose nothing.
pub fn select_most_recent(candidates: &[&FileEntrySet]) -> Selection {
    let key = |s: &FileEntrySet| {
        let (m, a, c, _) = recency_key(s);
        (m, a, c)
    };
    let Some(best) = candidates.iter().map(|s| key(s)).max() else {
        return Selection {
            chosen: None,
            tied: Vec::new(),
        };
    };
    let top: Vec<SetId> = candidates.iter().filter(|s| key(s) == best).map(|s| s.id).collect();
    if top.len() == 1 {
        Selection {
            chosen: Some(top[0]),
            tied: Vec::new(),
        }
    } else {
        Selection {
            chosen: None,
            tied: top,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LengthSource {
    Footer,
    EntryFileSize,
    RunEnd,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CarveHit {
    pub signature: String,
    pub start_cluster: u32,
    pub start_sector: u64,
    pub candidates: Vec<SetId>,
    pub chosen: Option<SetId>,
    pub length: u64,
    pub determined_by: LengthSource,
    /// Length found by the signature alone, before entry metadata.
    pub naive_length: u64,
    pub clusters: Vec<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metadata: Option<FileMetadata>,
    pub findings: Vec<Finding>,
    pub sha256: String,
    #[serde(skip)]
    pub content: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CarveOptions {
    pub granularity: Granularity,
    /// Cap on bytes carved without entry metadata.
    pub max_length: u64,
}

impl Default for CarveOptions {
    fn default() -> Self {
        CarveOptions {
            granularity: Granularity::ClusterStart,
            max_length: 64 << 20,
        }
    }
}

/// Signature-only extent: from the header to the footer, or to the end of
/// the unallocated run (or the length cap).
fn naive_extent(
    hit: &ScanHit,
    sig: &Signature,
    vol: &Volume,
    max_length: u64,
) -> Result<(Vec<u8>, Vec<u32>, LengthSource)> {
    let geom = &vol.geometry;
    let cs = u64::from(geom.cluster_size_bytes);
    let start_in_cluster = (hit.sector * u64::from(geom.sector_size_bytes)) - vol.cluster_offset(hit.cluster)?;
    let mut content = Vec::new();
    let mut clusters = Vec::new();
    let mut cn = hit.cluster;
    let mut skip = start_in_cluster as usize;
    let mut searched = 0usize;
    while geom.contains_cluster(cn) && vol.bitmap.is_free(cn) && (content.len() as u64) < max_length {
        let bytes = vol.read_cluster(cn)?;
        content.extend_from_slice(&bytes[skip..]);
        clusters.push(cn);
        skip = 0;
        if let Some(footer) = &sig.footer {
            // the header itself must not be taken as a footer
            let from = searched
                .max(sig.header.len())
                .saturating_sub(footer.len() - 1)
                .max(sig.header.len());
            if let Some(p) = content[from..]
                .windows(footer.len())
                .position(|w| w == footer.as_slice())
            {
                let end = from + p + footer.len();
                content.truncate(end);
                let used = (start_in_cluster + end as u64).div_ceil(cs) as usize;
                clusters.truncate(used);
                return Ok((content, clusters, LengthSource::Footer));
            }
            searched = content.len();
        }
        cn += 1;
    }
    content.truncate(max_length as usize);
    Ok((content, clusters, LengthSource::RunEnd))
}

/// Carves one scan hit and ties it to its entry set when one survives.
pub fn carve(
    hit: &ScanHit,
    sig: &Signature,
    vol: &Volume,
    tree: &DirectoryTree,
    index: &CarveIndex,
    opts: CarveOptions,
) -> Result<CarveHit> {
    let (naive, naive_clusters, naive_source) = naive_extent(hit, sig, vol, opts.max_length)?;
    let mut findings = Vec::new();
    if naive_source == LengthSource::Footer {
        findings.push(Finding::new(
            Check::FooterFound,
            format!("footer ends {} bytes after the header", naive.len()),
        ));
    }

    let candidates: Vec<SetId> = if hit.aligned {
        index.candidates(hit.cluster).to_vec()
    } else {
        Vec::new()
    };
    let sets: Vec<&FileEntrySet> = candidates.iter().filter_map(|id| tree.get(*id)).collect();
    let selection = select_most_recent(&sets);
    if !selection.tied.is_empty() {
        findings.push(
            Finding::new(
                Check::TimestampTie,
                "candidates share identical timestamps; no entry chosen",
            )
            .sets(selection.tied.iter().copied()),
        );
    }

    let mut out = CarveHit {
        signature: sig.name.clone(),
        start_cluster: hit.cluster,
        start_sector: hit.sector,
        candidates,
        chosen: selection.chosen,
        length: 0,
        determined_by: naive_source,
        naive_length: naive.len() as u64,
        clusters: Vec::new(),
        metadata: None,
        findings,
        sha256: String::new(),
        content: Vec::new(),
    };

    match selection.chosen.and_then(|id| tree.get(id)) {
        Some(set) => {
            let size = set.file_size;
            let rec = if set.no_fat_chain {
                if naive.len() as u64 != size {
                    out.findings.push(Finding::new(
                        Check::SizeMismatch,
                        format!("signature carve gave {} bytes, entry file size is {size}", naive.len()),
                    ));
                }
                recover_contiguous(set, vol, Some(tree), FillPolicy::SubstituteZero)?
            } else {
                if naive.len() as u64 != size {
                    out.findings.push(
                        Finding::new(
                            Check::SizeMismatchExplained,
                            format!(
                                "signature carve gave {} bytes, entry file size is {size}; the entry does not set the no-FAT-chain flag, so the file is fragmented and the FAT holds the rest",
                                naive.len()
                            ),
                        )
                        .sets([set.id]),
                    );
                }
                let rec = recover_chained(set, vol, Some(tree), FillPolicy::SubstituteZero)?;
                out.findings.push(
                    Finding::new(
                        Check::FatCompletion,
                        format!(
                            "{} bytes over {} clusters rebuilt from the FAT chain",
                            rec.length,
                            rec.clusters.len()
                        ),
                    )
                    .clusters(rec.cluster_numbers()),
                );
                rec
            };
            if !set.name_complete {
                out.findings.push(
                    Finding::new(
                        Check::NameIncomplete,
                        format!("only {:?} of a {}-character name survives", set.name, set.name_length),
                    )
                    .sets([set.id]),
                );
            }
            out.findings.extend(rec.findings.iter().cloned());
            out.clusters = rec
                .clusters
                .iter()
                .filter(|c| c.provenance == Provenance::Clean)
                .map(|c| c.cluster)
                .collect();
            out.determined_by = LengthSource::EntryFileSize;
            out.metadata = Some(rec.metadata.clone());
            out.content = rec.content;
        }
        None => {
            out.clusters = naive_clusters;
            out.content = naive;
        }
    }
    out.length = out.content.len() as u64;
    out.sha256 = hex::encode(Sha256::digest(&out.content));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CarveReport {
    pub granularity: Granularity,
    pub hits: Vec<CarveHit>,
    pub index: CarveIndex,
    pub findings: Vec<Finding>,
}

/// Scans, matches and carves the whole volume. Hits come back ordered by
/// start sector.
pub fn carve_all(
    vol: &Volume,
    tree: &DirectoryTree,
    signatures: &[Signature],
    opts: CarveOptions,
) -> Result<CarveReport> {
    let index = CarveIndex::build(tree);
    let scan = scan_unallocated(
        &vol.image,
        &vol.geometry,
        Some(&vol.bitmap),
        signatures,
        opts.granularity,
    )?;
    let mut findings = Vec::new();
    if opts.granularity == Granularity::EverySector {
        findings.push(Finding::new(
            Check::NoClusterAlignment,
            "every-sector scan: hits are not guaranteed to start files",
        ));
    }
    let mut hits = Vec::with_capacity(scan.len());
    for h in &scan {
        let sig = signatures
            .iter()
            .find(|s| s.name == h.signature)
            .expect("hit from a known signature");
        hits.push(carve(h, sig, vol, tree, &index, opts)?);
    }
    Ok(CarveReport {
        granularity: opts.granularity,
        hits,
        index,
        findings,
    })
}
