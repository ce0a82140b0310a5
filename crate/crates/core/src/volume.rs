//! Evidence image access and volume boot record decoding.
//!
//! A [`VolumeImage`] is an immutable view over a raw image (a whole device
//! dump or a single partition). It is opened read-only and every read is
//! positional, so one handle can be shared across threads without locking.
//!
//! [`VolumeGeometry`] holds the VBR parameters the rest of the crate works
//! from. Clusters are numbered from 2, the first cluster of the heap, so
//! cluster `n` starts `(n - 2)` clusters past the heap offset.

use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The smallest sector size exFAT allows, and the minimum readable span.
pub const MIN_SECTOR_SIZE: u64 = 512;

pub const EXFAT_SIGNATURE: &[u8; 8] = b"EXFAT   ";

enum Backing {
    File(File),
    Memory(Arc<[u8]>),
}

/// Read-only handle over an evidence image, starting at a partition offset.
pub struct VolumeImage {
    source: Option<PathBuf>,
    partition_offset: u64,
    len: u64,
    backing: Backing,
}

impl fmt::Debug for VolumeImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VolumeImage")
            .field("source", &self.source)
            .field("partition_offset", &self.partition_offset)
            .field("len", &self.len)
            .finish()
    }
}

/// Opens `path` read-only. `partition_offset` is the byte offset of the
/// exFAT volume inside the image; partition tables are not walked.
pub fn open_image(path: impl AsRef<Path>, partition_offset: u64) -> Result<VolumeImage> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Unreadable(e),
    })?;
    let total = file.metadata().map_err(Error::Unreadable)?.len();
    let available = total.saturating_sub(partition_offset);
    if available < MIN_SECTOR_SIZE {
        return Err(Error::TooShort {
            offset: partition_offset,
            len: available,
            needed: MIN_SECTOR_SIZE,
        });
    }
    Ok(VolumeImage {
        source: Some(path.to_path_buf()),
        partition_offset,
        len: available,
        backing: Backing::File(file),
    })
}

impl VolumeImage {
    /// Wraps an in-memory image, as produced by the forge.
    pub fn from_bytes(bytes: impl Into<Arc<[u8]>>) -> Result<Self> {
        Self::from_bytes_at(bytes, 0)
    }

    pub fn from_bytes_at(bytes: impl Into<Arc<[u8]>>, partition_offset: u64) -> Result<Self> {
        let bytes = bytes.into();
        let available = (bytes.len() as u64).saturating_sub(partition_offset);
        if available < MIN_SECTOR_SIZE {
            return Err(Error::TooShort {
                offset: partition_offset,
                len: available,
                needed: MIN_SECTOR_SIZE,
            });
        }
        Ok(VolumeImage {
            source: None,
            partition_offset,
            len: available,
            backing: Backing::Memory(bytes),
        })
    }

    pub fn source(&self) -> Option<&Path> {
        self.source.as_deref()
    }

    pub fn partition_offset(&self) -> u64 {
        self.partition_offset
    }

    /// Bytes available from the partition offset to the end of the image.
    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Fills `buf` from volume-relative `offset`.
    pub fn read_exact_at(&self, offset: u64, buf: &mut [u8]) -> Result<()> {
        let end = offset.checked_add(buf.len() as u64);
        if end.is_none_or(|end| end > self.len) {
            return Err(Error::OutOfBounds {
                offset,
                len: buf.len(),
                image_len: self.len,
            });
        }
        let absolute = self.partition_offset + offset;
        match &self.backing {
            Backing::Memory(bytes) => {
                let start = absolute as usize;
                buf.copy_from_slice(&bytes[start..start + buf.len()]);
                Ok(())
            }
            Backing::File(file) => read_file_at(file, absolute, buf).map_err(Error::Io),
        }
    }

    pub fn read_at(&self, offset: u64, len: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; len];
        self.read_exact_at(offset, &mut buf)?;
        Ok(buf)
    }
}

#[cfg(unix)]
fn read_file_at(file: &File, offset: u64, buf: &mut [u8]) -> std::io::Result<()> {
    use std::os::unix::fs::FileExt;
    file.read_exact_at(buf, offset)
}

#[cfg(windows)]
fn read_file_at(file: &File, mut offset: u64, mut buf: &mut [u8]) -> std::io::Result<()> {
    use std::os::windows::fs::FileExt;
    while !buf.is_empty() {
        match file.seek_read(buf, offset)? {
            0 => return Err(std::io::ErrorKind::UnexpectedEof.into()),
            n => {
                buf = &mut buf[n..];
                offset += n as u64;
            }
        }
    }
    Ok(())
}

/// Decoded VBR parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolumeGeometry {
    pub sector_size_bytes: u32,
    pub sectors_per_cluster: u32,
    pub cluster_size_bytes: u32,
    /// Start of the FAT, in sectors (VBR offset 0x50).
    pub fat_offset_sectors: u32,
    pub fat_length_sectors: u32,
    /// Start of the cluster heap, in sectors (VBR offset 0x58).
    pub heap_offset_sectors: u32,
    pub cluster_count: u32,
    pub root_first_cluster: u32,
    pub volume_length_sectors: u64,
    pub volume_serial: u32,
    pub fs_revision: u16,
    /// Filled from the root directory's 0x83 entry, not from the VBR.
    pub volume_label: Option<String>,
    /// The whole boot sector, kept for reporting.
    #[serde(with = "crate::hexser")]
    pub raw_vbr: Vec<u8>,
}

impl VolumeGeometry {
    /// One past the last valid cluster number.
    pub fn cluster_end(&self) -> u32 {
        self.cluster_count + 2
    }

    pub fn contains_cluster(&self, cn: u32) -> bool {
        (2..self.cluster_end()).contains(&cn)
    }

    pub fn check_cluster(&self, cn: u32) -> Result<()> {
        if self.contains_cluster(cn) {
            Ok(())
        } else {
            Err(Error::ClusterOutOfRange {
                cluster: cn.into(),
                end: self.cluster_end().into(),
            })
        }
    }

    pub fn heap_offset_bytes(&self) -> u64 {
        u64::from(self.heap_offset_sectors) * u64::from(self.sector_size_bytes)
    }

    pub fn fat_offset_bytes(&self) -> u64 {
        u64::from(self.fat_offset_sectors) * u64::from(self.sector_size_bytes)
    }

    /// Number of whole clusters needed to hold `size` bytes.
    pub fn clusters_for(&self, size: u64) -> u64 {
        size.div_ceil(u64::from(self.cluster_size_bytes))
    }

    /// Maps a volume sector to the cluster containing it, when it lies in
    /// the heap. The flag is true when the sector is the first of its cluster.
    pub fn sector_to_cluster(&self, sector: u64) -> Option<(u32, bool)> {
        let heap = u64::from(self.heap_offset_sectors);
        if sector < heap {
            return None;
        }
        let rel = sector - heap;
        let spc = u64::from(self.sectors_per_cluster);
        let cn = rel / spc + 2;
        u32::try_from(cn)
            .ok()
            .filter(|&cn| self.contains_cluster(cn))
            .map(|cn| (cn, rel.is_multiple_of(spc)))
    }
}

fn le_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn le_u64(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

/// Decodes the boot sector at volume sector 0.
pub fn parse_vbr(image: &VolumeImage) -> Result<VolumeGeometry> {
    let sector = image.read_at(0, MIN_SECTOR_SIZE as usize)?;
    parse_vbr_bytes(&sector)
}

/// Decodes a boot sector from raw bytes. The filesystem name and boot
/// signature are checked before any field is interpreted.
pub fn parse_vbr_bytes(sector: &[u8]) -> Result<VolumeGeometry> {
    if sector.len() < MIN_SECTOR_SIZE as usize {
        return Err(Error::NotExfat(format!("boot sector is {} bytes", sector.len())));
    }
    if &sector[3..11] != EXFAT_SIGNATURE {
        return Err(Error::NotExfat(format!(
            "filesystem name is {:?}",
            String::from_utf8_lossy(&sector[3..11])
        )));
    }
    if sector[510..512] != [0x55, 0xAA] {
        return Err(Error::NotExfat("boot signature 0x55AA missing".into()));
    }

    let fat_offset_sectors = le_u32(sector, 0x50);
    let fat_length_sectors = le_u32(sector, 0x54);
    let heap_offset_sectors = le_u32(sector, 0x58);
    let cluster_count = le_u32(sector, 0x5C);
    let root_first_cluster = le_u32(sector, 0x60);
    let sector_shift = sector[0x6C];
    let cluster_shift = sector[0x6D];

    let bad = |msg: String| Err(Error::InconsistentGeometry(msg));
    if !(9..=12).contains(&sector_shift) {
        return bad(format!("bytes-per-sector shift {sector_shift} outside 9..=12"));
    }
    if u32::from(sector_shift) + u32::from(cluster_shift) > 25 {
        return bad(format!(
            "cluster size 2^{} bytes exceeds 32 MiB",
            u32::from(sector_shift) + u32::from(cluster_shift)
        ));
    }
    let sector_size_bytes = 1u32 << sector_shift;
    let sectors_per_cluster = 1u32 << cluster_shift;
    if cluster_count == 0 {
        return bad("cluster count is zero".into());
    }
    if fat_offset_sectors == 0 {
        return bad("FAT offset is zero".into());
    }
    if heap_offset_sectors <= fat_offset_sectors {
        return bad(format!(
            "heap offset {heap_offset_sectors} not past FAT offset {fat_offset_sectors}"
        ));
    }
    if u64::from(fat_offset_sectors) + u64::from(fat_length_sectors) > u64::from(heap_offset_sectors) {
        return bad("FAT overlaps the cluster heap".into());
    }
    let fat_bytes = u64::from(fat_length_sectors) * u64::from(sector_size_bytes);
    if fat_bytes < (u64::from(cluster_count) + 2) * 4 {
        return bad(format!(
            "FAT of {fat_bytes} bytes cannot hold {} cells",
            u64::from(cluster_count) + 2
        ));
    }
    if root_first_cluster < 2 || u64::from(root_first_cluster) >= u64::from(cluster_count) + 2 {
        return bad(format!("root cluster {root_first_cluster} outside the heap"));
    }

    Ok(VolumeGeometry {
        sector_size_bytes,
        sectors_per_cluster,
        cluster_size_bytes: sector_size_bytes * sectors_per_cluster,
        fat_offset_sectors,
        fat_length_sectors,
        heap_offset_sectors,
        cluster_count,
        root_first_cluster,
        volume_length_sectors: le_u64(sector, 0x48),
        volume_serial: le_u32(sector, 0x64),
        fs_revision: le_u16(sector, 0x68),
        volume_label: None,
        raw_vbr: sector[..MIN_SECTOR_SIZE as usize].to_vec(),
    })
}

/// Volume-relative byte offset of cluster `cn`.
pub fn cluster_to_offset(geom: &VolumeGeometry, cn: u32) -> Result<u64> {
    geom.check_cluster(cn)?;
    let sector = u64::from(geom.heap_offset_sectors) + u64::from(cn - 2) * u64::from(geom.sectors_per_cluster);
    Ok(sector * u64::from(geom.sector_size_bytes))
}

pub fn read_cluster(image: &VolumeImage, geom: &VolumeGeometry, cn: u32) -> Result<Vec<u8>> {
    let offset = cluster_to_offset(geom, cn)?;
    image.read_at(offset, geom.cluster_size_bytes as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vbr(sector_shift: u8, cluster_shift: u8) -> Vec<u8> {
        let mut s = vec![0u8; 512];
        s[0..3].copy_from_slice(&[0xEB, 0x76, 0x90]);
        s[3..11].copy_from_slice(EXFAT_SIGNATURE);
        s[0x48..0x50].copy_from_slice(&131072u64.to_le_bytes());
        s[0x50..0x54].copy_from_slice(&128u32.to_le_bytes());
        s[0x54..0x58].copy_from_slice(&512u32.to_le_bytes());
        s[0x58..0x5C].copy_from_slice(&1024u32.to_le_bytes());
        s[0x5C..0x60].copy_from_slice(&65000u32.to_le_bytes());
        s[0x60..0x64].copy_from_slice(&4u32.to_le_bytes());
        s[0x6C] = sector_shift;
        s[0x6D] = cluster_shift;
        s[0x6E] = 1;
        s[510] = 0x55;
        s[511] = 0xAA;
        s
    }

    #[test]
    fn decodes_handbuilt_vbr() {
        let g = parse_vbr_bytes(&vbr(9, 1)).unwrap();
        assert_eq!(g.sector_size_bytes, 512);
        assert_eq!(g.cluster_size_bytes, 1024);
        assert_eq!(g.fat_offset_sectors, 128);
        assert_eq!(g.heap_offset_sectors, 1024);
        assert_eq!(g.cluster_count, 65000);
        assert_eq!(g.root_first_cluster, 4);
    }

    #[test]
    fn rejects_fat32_boot_sector() {
        let mut s = vbr(9, 1);
        s[3..11].copy_from_slice(b"MSDOS5.0");
        s[0x52..0x5A].copy_from_slice(b"FAT32   ");
        assert!(matches!(parse_vbr_bytes(&s), Err(Error::NotExfat(_))));
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(matches!(
            parse_vbr_bytes(&vbr(8, 1)),
            Err(Error::InconsistentGeometry(_))
        ));
        let mut s = vbr(9, 1);
        s[0x60..0x64].copy_from_slice(&1u32.to_le_bytes());
        assert!(matches!(parse_vbr_bytes(&s), Err(Error::InconsistentGeometry(_))));
        let mut s = vbr(9, 1);
        s[0x58..0x5C].copy_from_slice(&100u32.to_le_bytes());
        assert!(matches!(parse_vbr_bytes(&s), Err(Error::InconsistentGeometry(_))));
    }

    #[test]
    fn cluster_arithmetic() {
        let g = parse_vbr_bytes(&vbr(9, 1)).unwrap();
        assert_eq!(cluster_to_offset(&g, 2).unwrap(), 1024 * 512);
        assert_eq!(cluster_to_offset(&g, 3).unwrap(), 1024 * 512 + 1024);
        assert!(cluster_to_offset(&g, 1).is_err());
        assert!(cluster_to_offset(&g, 65002).is_err());
        assert!(cluster_to_offset(&g, 65001).is_ok());
        assert_eq!(g.sector_to_cluster(1024), Some((2, true)));
        assert_eq!(g.sector_to_cluster(1025), Some((2, false)));
        assert_eq!(g.sector_to_cluster(1026), Some((3, true)));
        assert_eq!(g.sector_to_cluster(10), None);
    }

    #[test]
    fn offset_beyond_end_is_too_short() {
        let bytes = vec![0u8; 4096];
        assert!(matches!(
            VolumeImage::from_bytes_at(bytes, 4000),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn reads_are_bounds_checked() {
        let img = VolumeImage::from_bytes(vec![7u8; 1024]).unwrap();
        assert_eq!(img.read_at(1000, 24).unwrap(), vec![7u8; 24]);
        assert!(matches!(img.read_at(1000, 25), Err(Error::OutOfBounds { .. })));
        assert!(img.read_at(u64::MAX, 1).is_err());
    }

    #[test]
    fn open_missing_file() {
        assert!(matches!(
            open_image("/nonexistent/evidence.dd", 0),
            Err(Error::NotFound(_))
        ));
    }

    proptest::proptest! {
        #[test]
        fn consecutive_clusters_are_one_cluster_apart(shift in 0u8..7, cn in 2u32..65000) {
            let g = parse_vbr_bytes(&vbr(9, shift)).unwrap();
            let a = cluster_to_offset(&g, cn).unwrap();
            let b = cluster_to_offset(&g, cn + 1).unwrap();
            proptest::prop_assert_eq!(b - a, u64::from(g.cluster_size_bytes));
        }
    }
}
