//! The allocation bitmap.
//!
//! The bitmap is a hidden file referenced by the 0x81 root entry. Each
//! cluster of the heap owns one bit, starting with cluster 2 at bit 0 (the
//! least significant bit) of byte 0. Cluster 10 is therefore bit 0 of byte 1.
//! This is the only authoritative allocation record on an exFAT volume.

use serde::{Deserialize, Serialize};

use crate::direntry::SpecialRootEntry;
use crate::error::{Error, Result};
use crate::fat::{ChainEnd, FatTable};
use crate::volume::{read_cluster, VolumeGeometry, VolumeImage};

/// Where the bitmap file lives, as read from the 0x81 entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitmapDescriptor {
    pub first_cluster: u32,
    pub size_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitPosition {
    pub byte_index: usize,
    pub bit_index: u8,
}

/// A maximal run of clusters sharing one allocation state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClusterRun {
    pub start: u32,
    pub len: u32,
}

impl ClusterRun {
    pub fn end(&self) -> u32 {
        self.start + self.len
    }

    pub fn contains(&self, cn: u32) -> bool {
        (self.start..self.end()).contains(&cn)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationBitmap {
    descriptor: BitmapDescriptor,
    cluster_count: u32,
    bits: Vec<u8>,
}

/// Finds the 0x81 entry among the root directory's special entries.
pub fn locate_bitmap(specials: &[SpecialRootEntry], cluster_count: u32) -> Result<BitmapDescriptor> {
    let entry = specials
        .iter()
        .find_map(|s| match s {
            SpecialRootEntry::Bitmap {
                first_cluster,
                size_bytes,
                ..
            } => Some((*first_cluster, *size_bytes)),
            _ => None,
        })
        .ok_or(Error::BitmapEntryMissing)?;
    let needed = u64::from(cluster_count).div_ceil(8);
    if entry.1 < needed {
        return Err(Error::BitmapSizeInconsistent {
            size_bytes: entry.1,
            needed,
            cluster_count,
        });
    }
    Ok(BitmapDescriptor {
        first_cluster: entry.0,
        size_bytes: entry.1,
    })
}

/// Byte and bit holding the allocation flag of cluster `cn`.
pub fn bit_position(cn: u32) -> Result<BitPosition> {
    if cn < 2 {
        return Err(Error::ClusterOutOfRange {
            cluster: cn.into(),
            end: u64::from(u32::MAX) + 1,
        });
    }
    let rel = cn - 2;
    Ok(BitPosition {
        byte_index: (rel / 8) as usize,
        bit_index: (rel % 8) as u8,
    })
}

/// Reads the bitmap file. The FAT chain is followed when it covers the
/// whole file; otherwise the file is read as contiguous clusters.
pub fn load_bitmap(
    image: &VolumeImage,
    geom: &VolumeGeometry,
    fat: &FatTable,
    descriptor: BitmapDescriptor,
) -> Result<AllocationBitmap> {
    geom.check_cluster(descriptor.first_cluster)?;
    let needed = geom.clusters_for(descriptor.size_bytes) as usize;
    let chain = fat.walk_chain(descriptor.first_cluster, needed);
    let clusters: Vec<u32> =
        if chain.len() == needed && matches!(chain.terminated_by, ChainEnd::EndOfChainMarker | ChainEnd::LengthLimit) {
            chain.clusters
        } else {
            (0..needed as u32).map(|i| descriptor.first_cluster + i).collect()
        };
    let mut bits = Vec::with_capacity(needed * geom.cluster_size_bytes as usize);
    for cn in clusters {
        bits.extend(read_cluster(image, geom, cn)?);
    }
    bits.truncate(descriptor.size_bytes as usize);
    AllocationBitmap::from_bytes(bits, geom.cluster_count).map(|mut bm| {
        bm.descriptor = descriptor;
        bm
    })
}

impl AllocationBitmap {
    pub fn from_bytes(bits: Vec<u8>, cluster_count: u32) -> Result<Self> {
        let needed = u64::from(cluster_count).div_ceil(8);
        if (bits.len() as u64) < needed {
            return Err(Error::BitmapSizeInconsistent {
                size_bytes: bits.len() as u64,
                needed,
                cluster_count,
            });
        }
        Ok(AllocationBitmap {
            descriptor: BitmapDescriptor {
                first_cluster: 0,
                size_bytes: bits.len() as u64,
            },
            cluster_count,
            bits,
        })
    }

    pub fn descriptor(&self) -> BitmapDescriptor {
        self.descriptor
    }

    pub fn cluster_count(&self) -> u32 {
        self.cluster_count
    }

    /// Raw bitmap bytes, including bits past the last cluster.
    pub fn bytes(&self) -> &[u8] {
        &self.bits
    }

    fn check(&self, cn: u32) -> Result<BitPosition> {
        if cn < 2 || u64::from(cn) >= u64::from(self.cluster_count) + 2 {
            return Err(Error::ClusterOutOfRange {
                cluster: cn.into(),
                end: u64::from(self.cluster_count) + 2,
            });
        }
        bit_position(cn)
    }

    pub fn is_allocated(&self, cn: u32) -> Result<bool> {
        let pos = self.check(cn)?;
        Ok(self.bits[pos.byte_index] >> pos.bit_index & 1 == 1)
    }

    /// Like [`is_allocated`](Self::is_allocated) but treats out-of-range
    /// clusters as allocated, so callers never read them as free space.
    pub fn is_free(&self, cn: u32) -> bool {
        matches!(self.is_allocated(cn), Ok(false))
    }

    pub fn allocated_count(&self) -> u32 {
        (2..self.cluster_count + 2).filter(|&c| !self.is_free(c)).count() as u32
    }

    /// Maximal runs of unallocated clusters over the whole heap, ascending.
    pub fn unallocated_runs(&self) -> Vec<ClusterRun> {
        self.unallocated_runs_within(2, self.cluster_count + 2)
    }

    /// Unallocated runs restricted to clusters `start..end`.
    pub fn unallocated_runs_within(&self, start: u32, end: u32) -> Vec<ClusterRun> {
        let start = start.max(2);
        let end = end.min(self.cluster_count + 2);
        let mut runs = Vec::new();
        let mut cn = start;
        while cn < end {
            let pos = bit_position(cn).expect("cn >= 2");
            // whole allocated byte: skip ahead
            if pos.bit_index == 0 && self.bits[pos.byte_index] == 0xFF && cn + 8 <= end {
                cn += 8;
                continue;
            }
            if self.is_free(cn) {
                let run_start = cn;
                while cn < end && self.is_free(cn) {
                    cn += 1;
                }
                runs.push(ClusterRun {
                    start: run_start,
                    len: cn - run_start,
                });
            } else {
                cn += 1;
            }
        }
        runs
    }

    /// Maximal allocated runs; together with the unallocated runs they tile
    /// the heap exactly.
    pub fn allocated_runs(&self) -> Vec<ClusterRun> {
        let mut runs = Vec::new();
        let mut next = 2;
        for free in self.unallocated_runs() {
            if free.start > next {
                runs.push(ClusterRun {
                    start: next,
                    len: free.start - next,
                });
            }
            next = free.end();
        }
        let end = self.cluster_count + 2;
        if next < end {
            runs.push(ClusterRun {
                start: next,
                len: end - next,
            });
        }
        runs
    }
}
