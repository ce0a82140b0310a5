use std::path::Path;

use crate::bitmap::{load_bitmap, locate_bitmap, AllocationBitmap};
use crate::direntry::{parse_records, walk_tree, DirectoryTree, RecordKind, SpecialRootEntry, WalkOptions};
use crate::error::Result;
use crate::fat::{load_fat, FatTable};
use crate::volume::{cluster_to_offset, open_image, parse_vbr, read_cluster, VolumeGeometry, VolumeImage};

/// An opened volume with its system structures decoded: geometry, FAT,
/// allocation bitmap and the root directory's special entries.
#[derive(Debug)]
pub struct Volume {
    pub image: VolumeImage,
    pub geometry: VolumeGeometry,
    pub fat: FatTable,
    pub bitmap: AllocationBitmap,
    pub root_specials: Vec<SpecialRootEntry>,
}

impl Volume {
    pub fn open(path: impl AsRef<Path>, partition_offset: u64) -> Result<Self> {
        Self::load(open_image(path, partition_offset)?)
    }

    pub fn from_bytes(bytes: impl Into<std::sync::Arc<[u8]>>) -> Result<Self> {
        Self::load(VolumeImage::from_bytes(bytes)?)
    }

    pub fn load(image: VolumeImage) -> Result<Self> {
        let mut geometry = parse_vbr(&image)?;
        let fat = load_fat(&image, &geometry)?;
        let root_specials = read_root_specials(&image, &geometry, &fat)?;
        let descriptor = locate_bitmap(&root_specials, geometry.cluster_count)?;
        let bitmap = load_bitmap(&image, &geometry, &fat, descriptor)?;
        geometry.volume_label = root_specials.iter().find_map(|s| match s {
            SpecialRootEntry::VolumeLabel { label, .. } => Some(label.clone()),
            _ => None,
        });
        Ok(Volume {
            image,
            geometry,
            fat,
            bitmap,
            root_specials,
        })
    }

    pub fn walk(&self, opts: WalkOptions) -> DirectoryTree {
        walk_tree(&self.image, &self.geometry, &self.fat, opts)
    }

    pub fn read_cluster(&self, cn: u32) -> Result<Vec<u8>> {
        read_cluster(&self.image, &self.geometry, cn)
    }

    pub fn cluster_offset(&self, cn: u32) -> Result<u64> {
        cluster_to_offset(&self.geometry, cn)
    }
}

fn read_root_specials(image: &VolumeImage, geom: &VolumeGeometry, fat: &FatTable) -> Result<Vec<SpecialRootEntry>> {
    let chain = fat.walk_chain(geom.root_first_cluster, fat.cell_count());
    let mut specials = Vec::new();
    for cn in chain.clusters {
        let bytes = read_cluster(image, geom, cn)?;
        let base = cluster_to_offset(geom, cn)?;
        for rec in parse_records(&bytes, base, geom.root_first_cluster, true) {
            if let RecordKind::Special(s) = rec.kind {
                specials.push(s);
            }
        }
    }
    Ok(specials)
}
