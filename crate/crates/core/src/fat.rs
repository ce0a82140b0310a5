//! The exFAT File Allocation Table.
//!
//! exFAT keeps a single FAT of 32-bit little-endian cells, one per cluster,
//! with cell `n` at byte `4 * n`. Unlike FAT32 the table does not record
//! allocation (the bitmap does); it only links the clusters of fragmented
//! files and of system files. A zero cell therefore says nothing about
//! whether the cluster is in use, and a non-zero cell may be stale: deleting
//! or shrinking a file leaves its cells untouched.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{VolumeGeometry, VolumeImage};

pub const END_OF_CHAIN: u32 = 0xFFFF_FFFF;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FatTable {
    cells: Vec<u32>,
    cluster_count: u32,
}

/// Why a chain walk stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "reason")]
pub enum ChainEnd {
    EndOfChainMarker,
    ZeroCell,
    /// The last cell held a value that is not a heap cluster.
    OutOfRangeCell {
        value: u32,
    },
    /// The last cell pointed back at a cluster already in the chain.
    CycleDetected {
        revisited: u32,
    },
    LengthLimit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterChain {
    pub clusters: Vec<u32>,
    pub terminated_by: ChainEnd,
}

impl ClusterChain {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Splits the chain into runs of consecutive clusters as `(start, len)`.
    pub fn fragments(&self) -> Vec<(u32, u32)> {
        let mut out: Vec<(u32, u32)> = Vec::new();
        for &c in &self.clusters {
            match out.last_mut() {
                Some((start, len)) if *start + *len == c => *len += 1,
                _ => out.push((c, 1)),
            }
        }
        out
    }
}

impl FatTable {
    /// Builds a table from raw FAT bytes. Trailing bytes that do not form a
    /// whole cell are ignored.
    pub fn from_bytes(bytes: &[u8], cluster_count: u32) -> Result<Self> {
        let needed = u64::from(cluster_count) + 2;
        let available = bytes.len() as u64 / 4;
        if available < needed {
            return Err(Error::FatTooShort {
                available: bytes.len() as u64,
                needed,
            });
        }
        let cells = bytes
            .chunks_exact(4)
            .take(needed as usize)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(FatTable { cells, cluster_count })
    }

    pub fn from_cells(cells: Vec<u32>, cluster_count: u32) -> Result<Self> {
        if (cells.len() as u64) < u64::from(cluster_count) + 2 {
            return Err(Error::FatTooShort {
                available: cells.len() as u64 * 4,
                needed: u64::from(cluster_count) + 2,
            });
        }
        Ok(FatTable { cells, cluster_count })
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn cluster_count(&self) -> u32 {
        self.cluster_count
    }

    /// Byte offset of cell `cn` within the FAT area.
    pub fn cell_offset(cn: u32) -> u64 {
        u64::from(cn) * 4
    }

    pub fn cell(&self, cn: u32) -> Result<u32> {
        self.cells.get(cn as usize).copied().ok_or(Error::ClusterOutOfRange {
            cluster: cn.into(),
            end: self.cells.len() as u64,
        })
    }

    pub fn cells(&self) -> &[u32] {
        &self.cells
    }

    fn is_heap_cluster(&self, value: u32) -> bool {
        value >= 2 && u64::from(value) < u64::from(self.cluster_count) + 2
    }

    /// Follows cells from `start` for at most `max_clusters` clusters.
    ///
    /// Never fails: every way a chain can stop is reported in
    /// [`ClusterChain::terminated_by`]. A start cluster outside the heap
    /// yields an empty chain ending in `OutOfRangeCell`.
    pub fn walk_chain(&self, start: u32, max_clusters: usize) -> ClusterChain {
        let mut clusters = Vec::new();
        if !self.is_heap_cluster(start) {
            return ClusterChain {
                clusters,
                terminated_by: ChainEnd::OutOfRangeCell { value: start },
            };
        }
        if max_clusters == 0 {
            return ClusterChain {
                clusters,
                terminated_by: ChainEnd::LengthLimit,
            };
        }
        let mut seen = HashSet::new();
        let mut current = start;
        loop {
            clusters.push(current);
            seen.insert(current);
            let next = self.cells[current as usize];
            let end = if next == END_OF_CHAIN {
                Some(ChainEnd::EndOfChainMarker)
            } else if next == 0 {
                Some(ChainEnd::ZeroCell)
            } else if !self.is_heap_cluster(next) {
                Some(ChainEnd::OutOfRangeCell { value: next })
            } else if clusters.len() >= max_clusters {
                Some(ChainEnd::LengthLimit)
            } else if seen.contains(&next) {
                Some(ChainEnd::CycleDetected { revisited: next })
            } else {
                None
            };
            if let Some(terminated_by) = end {
                return ClusterChain {
                    clusters,
                    terminated_by,
                };
            }
            current = next;
        }
    }
}

/// Reads the cells for every heap cluster from the FAT area.
pub fn load_fat(image: &VolumeImage, geom: &VolumeGeometry) -> Result<FatTable> {
    let needed_cells = u64::from(geom.cluster_count) + 2;
    let area = u64::from(geom.fat_length_sectors) * u64::from(geom.sector_size_bytes);
    if area < needed_cells * 4 {
        return Err(Error::FatTooShort {
            available: area,
            needed: needed_cells,
        });
    }
    let bytes = image.read_at(geom.fat_offset_bytes(), (needed_cells * 4) as usize)?;
    FatTable::from_bytes(&bytes, geom.cluster_count)
}
