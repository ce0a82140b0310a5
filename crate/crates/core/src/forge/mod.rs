//! Synthetic exFAT volumes with ground truth.
//!
//! [`Forge`] formats an in-memory volume and applies file operations the
//! way the Windows driver was observed to: contiguous allocation whenever a
//! run fits, deletes that only flip entry types and clear bitmap bits,
//! renames and moves that leave the old set behind inactive, and shortening
//! that leaves FAT cells stale. It is not a general exFAT driver. Every
//! operation is mirrored into a [`Manifest`] that tests compare analyzer
//! output against.

pub mod content;
pub mod fixtures;
pub mod records;
pub mod scenario;

use std::collections::HashMap;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::direntry::{DosTimestamp, SetId, RECORD_SIZE};
use crate::error::{Error, Result};
use crate::fat::END_OF_CHAIN;

pub use content::{generate, ContentKind};
pub use records::{encode_set, name_hash, records_for_name, set_checksum, SetFields};
pub use scenario::{parse_scenario, replay, Op, Replay, Scenario, ShortenTo, Snapshot, Stage};

pub const SECTOR_SIZE: u32 = 512;
const FAT_OFFSET_SECTORS: u32 = 128;
const BOOT_REGION_SECTORS: usize = 12;

/// Assumptions about driver behavior the forge fixes, copied into every
/// manifest.
pub const NOTES: &[&str] = &[
    "allocation is first fit over unallocated runs; a file is fragmented only when no run holds it",
    "fragmented files get a full FAT chain, first fragment included; contiguous files leave FAT cells untouched",
    "delete clears the in-use bit of every record of the set and the file's bitmap bits; FAT cells are untouched",
    "rename to a name needing a different number of records inactivates the old set and appends a new one with the access time set to the operation time; otherwise the set is rewritten in place",
    "move inactivates the source set and appends an identical set in the destination folder",
    "shorten clears the released bitmap bits and leaves their FAT cells stale; the no-FAT-chain flag is set when the remaining clusters are contiguous",
    "directories grow one cluster at a time; inactive entry slots are never reused",
    "the up-case table is a 128-entry placeholder",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolumeParams {
    pub size_bytes: u64,
    pub cluster_size: u32,
    pub label: String,
    pub serial: u32,
}

impl VolumeParams {
    pub fn new(size_bytes: u64, cluster_size: u32) -> Self {
        VolumeParams {
            size_bytes,
            cluster_size,
            label: "FORGED".to_string(),
            serial: 0x5EED_0001,
        }
    }

    pub fn label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

/// Injectable clock: each operation advances it by a fixed step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clock {
    now: NaiveDateTime,
    step: chrono::Duration,
}

impl Clock {
    pub fn new(start: NaiveDateTime, step_seconds: i64) -> Self {
        Clock {
            now: start,
            step: chrono::Duration::seconds(step_seconds),
        }
    }

    pub fn now(&self) -> NaiveDateTime {
        self.now
    }

    pub fn tick(&mut self) -> DosTimestamp {
        self.now += self.step;
        DosTimestamp::from_datetime(&self.now)
    }
}

impl Default for Clock {
    fn default() -> Self {
        let start = NaiveDate::from_ymd_opt(2016, 9, 30)
            .unwrap()
            .and_hms_opt(9, 0, 0)
            .unwrap();
        Clock::new(start, 60)
    }
}

/// Where the forge placed the system structures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub sector_size: u32,
    pub sectors_per_cluster: u32,
    pub cluster_size: u32,
    pub volume_length_sectors: u64,
    pub fat_offset_sectors: u32,
    pub fat_length_sectors: u32,
    pub heap_offset_sectors: u32,
    pub cluster_count: u32,
    pub bitmap_cluster: u32,
    pub bitmap_size_bytes: u64,
    pub upcase_cluster: u32,
    pub upcase_size_bytes: u64,
    pub root_cluster: u32,
}

impl Layout {
    fn compute(p: &VolumeParams) -> Result<Self> {
        let cs = p.cluster_size;
        if !cs.is_power_of_two() || !(SECTOR_SIZE..=1 << 25).contains(&cs) {
            return Err(Error::InvalidOperation(format!(
                "cluster size {cs} must be a power of two between 512 and 32 MiB"
            )));
        }
        let spc = cs / SECTOR_SIZE;
        let total = p.size_bytes / u64::from(SECTOR_SIZE);
        let too_small = |needed_sectors: u64| Error::SizeTooSmall {
            size: p.size_bytes,
            needed: needed_sectors * u64::from(SECTOR_SIZE),
        };
        let mut cc = total.saturating_sub(u64::from(FAT_OFFSET_SECTORS)) / u64::from(spc);
        let (fat_len, heap) = loop {
            let fat_len = ((cc + 2) * 4).div_ceil(u64::from(SECTOR_SIZE));
            let heap = (u64::from(FAT_OFFSET_SECTORS) + fat_len).next_multiple_of(u64::from(spc));
            let fit = total.saturating_sub(heap) / u64::from(spc);
            if fit >= cc {
                break (fat_len, heap);
            }
            cc = fit;
        };
        let cc = u32::try_from(cc.min(0xFFFF_FFF5)).unwrap();
        let bitmap_size = u64::from(cc).div_ceil(8);
        let upcase_size = records::upcase_table().len() as u64;
        let bitmap_clusters = bitmap_size.div_ceil(u64::from(cs)).max(1) as u32;
        let upcase_clusters = upcase_size.div_ceil(u64::from(cs)) as u32;
        let system = bitmap_clusters + upcase_clusters + 1;
        if cc < system {
            return Err(too_small(heap + u64::from(system) * u64::from(spc)));
        }
        Ok(Layout {
            sector_size: SECTOR_SIZE,
            sectors_per_cluster: spc,
            cluster_size: cs,
            volume_length_sectors: total,
            fat_offset_sectors: FAT_OFFSET_SECTORS,
            fat_length_sectors: fat_len as u32,
            heap_offset_sectors: heap as u32,
            cluster_count: cc,
            bitmap_cluster: 2,
            bitmap_size_bytes: bitmap_size,
            upcase_cluster: 2 + bitmap_clusters,
            upcase_size_bytes: upcase_size,
            root_cluster: 2 + bitmap_clusters + upcase_clusters,
        })
    }

    pub fn cluster_offset(&self, cn: u32) -> u64 {
        (u64::from(self.heap_offset_sectors) + u64::from(cn - 2) * u64::from(self.sectors_per_cluster))
            * u64::from(self.sector_size)
    }

    pub fn fat_cell_offset(&self, cn: u32) -> u64 {
        u64::from(self.fat_offset_sectors) * u64::from(self.sector_size) + 4 * u64::from(cn)
    }

    pub fn clusters_for(&self, size: u64) -> u64 {
        size.div_ceil(u64::from(self.cluster_size))
    }

    fn boot_region(&self, p: &VolumeParams) -> Vec<u8> {
        let ss = SECTOR_SIZE as usize;
        let mut r = vec![0u8; BOOT_REGION_SECTORS * ss];
        let v = &mut r[..ss];
        v[0..3].copy_from_slice(&[0xEB, 0x76, 0x90]);
        v[3..11].copy_from_slice(b"EXFAT   ");
        v[0x48..0x50].copy_from_slice(&self.volume_length_sectors.to_le_bytes());
        v[0x50..0x54].copy_from_slice(&self.fat_offset_sectors.to_le_bytes());
        v[0x54..0x58].copy_from_slice(&self.fat_length_sectors.to_le_bytes());
        v[0x58..0x5C].copy_from_slice(&self.heap_offset_sectors.to_le_bytes());
        v[0x5C..0x60].copy_from_slice(&self.cluster_count.to_le_bytes());
        v[0x60..0x64].copy_from_slice(&self.root_cluster.to_le_bytes());
        v[0x64..0x68].copy_from_slice(&p.serial.to_le_bytes());
        v[0x68..0x6A].copy_from_slice(&0x0100u16.to_le_bytes());
        v[0x6C] = SECTOR_SIZE.trailing_zeros() as u8;
        v[0x6D] = self.sectors_per_cluster.trailing_zeros() as u8;
        v[0x6E] = 1;
        v[0x6F] = 0x80;
        v[0x70] = 0xFF;
        v[510] = 0x55;
        v[511] = 0xAA;
        for s in 1..=8 {
            r[s * ss + ss - 2] = 0x55;
            r[s * ss + ss - 1] = 0xAA;
        }
        let sum = records::checksum32(0, &r[..11 * ss], |i| matches!(i, 106 | 107 | 112));
        for chunk in r[11 * ss..].chunks_exact_mut(4) {
            chunk.copy_from_slice(&sum.to_le_bytes());
        }
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FileState {
    Active,
    Deleted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormerReason {
    Deleted,
    Renamed,
    Moved,
}

/// An entry set the forge left inactive, and why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormerSet {
    pub set: SetId,
    pub reason: FormerReason,
    pub op: usize,
    pub name: String,
    pub parent: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEvent {
    pub op: usize,
    pub action: String,
    pub time: DosTimestamp,
    pub clusters: Vec<u32>,
    pub size: u64,
    pub sha256: String,
}

/// Clusters released by a shorten and the content they held.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReleasedTail {
    pub op: usize,
    pub clusters: Vec<u32>,
    pub previous_size: u64,
    pub previous_sha256: String,
    #[serde(skip)]
    pub previous_content: Vec<u8>,
}

/// Ground truth for one file or directory ever created on the volume.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub id: usize,
    pub path: String,
    pub name: String,
    pub is_dir: bool,
    pub parent: Option<usize>,
    pub state: FileState,
    pub clusters: Vec<u32>,
    pub size: u64,
    pub no_fat_chain: bool,
    pub created: DosTimestamp,
    pub modified: DosTimestamp,
    pub accessed: DosTimestamp,
    /// Location of the set currently describing the file; `None` once deleted.
    pub set: Option<SetId>,
    /// Index of the set's first record within its directory.
    pub entry_index: usize,
    pub set_records: usize,
    pub sha256: String,
    pub former_sets: Vec<FormerSet>,
    pub history: Vec<FileEvent>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub released_tail: Option<ReleasedTail>,
    #[serde(skip)]
    pub content: Vec<u8>,
}

impl FileRecord {
    pub fn is_fragmented(&self) -> bool {
        !is_contiguous(&self.clusters)
    }

    /// True if the file was ever stored in more than one fragment.
    pub fn was_fragmented(&self) -> bool {
        self.history.iter().any(|e| !is_contiguous(&e.clusters))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperationRecord {
    pub index: usize,
    pub stage: String,
    pub description: String,
    pub time: DosTimestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub operations: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub params: VolumeParams,
    pub layout: Layout,
    pub files: Vec<FileRecord>,
    pub operations: Vec<OperationRecord>,
    pub stages: Vec<StageRecord>,
    pub notes: Vec<String>,
}

impl Manifest {
    /// The live file at `path`, or else the most recent one that had it.
    pub fn file(&self, path: &str) -> Option<&FileRecord> {
        self.files
            .iter()
            .find(|f| f.path == path && f.state == FileState::Active)
            .or_else(|| self.files.iter().rev().find(|f| f.path == path))
    }

    pub fn live_files(&self) -> impl Iterator<Item = &FileRecord> {
        self.files.iter().filter(|f| f.state == FileState::Active && f.id != 0)
    }

    /// The file and reason behind an inactive set.
    pub fn former(&self, set: SetId) -> Option<(&FileRecord, &FormerSet)> {
        self.files
            .iter()
            .find_map(|f| f.former_sets.iter().find(|s| s.set == set).map(|s| (f, s)))
    }

    pub fn file_by_set(&self, set: SetId) -> Option<&FileRecord> {
        self.files.iter().find(|f| f.set == Some(set))
    }
}

pub fn is_contiguous(clusters: &[u32]) -> bool {
    clusters.windows(2).all(|w| w[1] == w[0] + 1)
}

fn sha256_hex(b: &[u8]) -> String {
    hex::encode(Sha256::digest(b))
}

fn join(parent: &str, name: &str) -> String {
    if parent == "/" {
        format!("/{name}")
    } else {
        format!("{parent}/{name}")
    }
}

/// A volume under construction.
#[derive(Debug, Clone)]
pub struct Forge {
    image: Vec<u8>,
    layout: Layout,
    bitmap: Vec<u8>,
    clock: Clock,
    manifest: Manifest,
    used_records: HashMap<usize, usize>,
    stage: String,
    dummies: usize,
}

impl Forge {
    /// Formats a fresh volume: boot region and backup, one FAT, the
    /// allocation bitmap, an up-case placeholder and a one-cluster root
    /// holding the label, bitmap and up-case entries.
    pub fn format(params: VolumeParams, clock: Clock) -> Result<Self> {
        let layout = Layout::compute(&params)?;
        let mut image = vec![0u8; params.size_bytes as usize];
        let boot = layout.boot_region(&params);
        image[..boot.len()].copy_from_slice(&boot);
        let backup = BOOT_REGION_SECTORS * SECTOR_SIZE as usize;
        image[backup..backup + boot.len()].copy_from_slice(&boot);

        let mut forge = Forge {
            bitmap: vec![0u8; layout.bitmap_size_bytes as usize],
            image,
            clock,
            manifest: Manifest {
                params: params.clone(),
                layout: layout.clone(),
                files: Vec::new(),
                operations: Vec::new(),
                stages: Vec::new(),
                notes: NOTES.iter().map(|s| s.to_string()).collect(),
            },
            layout,
            used_records: HashMap::new(),
            stage: "format".to_string(),
            dummies: 0,
        };
        forge.set_fat(0, 0xFFFF_FFF8);
        forge.set_fat(1, END_OF_CHAIN);

        let l = forge.layout.clone();
        let cs = u64::from(l.cluster_size);
        let bitmap_clusters: Vec<u32> = (l.bitmap_cluster..l.upcase_cluster).collect();
        let upcase_clusters: Vec<u32> = (l.upcase_cluster..l.root_cluster).collect();
        for run in [&bitmap_clusters, &upcase_clusters, &vec![l.root_cluster]] {
            forge.write_chain(run);
            for &c in run.iter() {
                forge.set_bit(c, true);
            }
        }
        debug_assert_eq!(bitmap_clusters.len() as u64, l.bitmap_size_bytes.div_ceil(cs).max(1));

        let table = records::upcase_table();
        let table_sum = records::checksum32(0, &table, |_| false);
        forge.write_at(l.cluster_offset(l.upcase_cluster), &table);
        let root = l.cluster_offset(l.root_cluster);
        forge.write_at(root, &records::label_record(&params.label));
        forge.write_at(
            root + 32,
            &records::bitmap_record(l.bitmap_cluster, l.bitmap_size_bytes),
        );
        forge.write_at(
            root + 64,
            &records::upcase_record(l.upcase_cluster, l.upcase_size_bytes, table_sum),
        );

        let now = DosTimestamp::from_datetime(&forge.clock.now());
        forge.manifest.files.push(FileRecord {
            id: 0,
            path: "/".to_string(),
            name: String::new(),
            is_dir: true,
            parent: None,
            state: FileState::Active,
            clusters: vec![l.root_cluster],
            size: cs,
            no_fat_chain: false,
            created: now,
            modified: now,
            accessed: now,
            set: None,
            entry_index: 0,
            set_records: 0,
            sha256: String::new(),
            former_sets: Vec::new(),
            history: Vec::new(),
            released_tail: None,
            content: Vec::new(),
        });
        forge.used_records.insert(0, 3);
        Ok(forge)
    }

    pub fn image(&self) -> &[u8] {
        &self.image
    }

    pub fn into_image(self) -> Vec<u8> {
        self.image
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn free_clusters(&self) -> u32 {
        (2..self.layout.cluster_count + 2)
            .filter(|&c| !self.is_allocated(c))
            .count() as u32
    }

    /// Marks the start of a named stage; later operations are attributed to it.
    pub fn begin_stage(&mut self, name: impl Into<String>) {
        self.stage = name.into();
    }

    /// Closes the current stage, recording the image digest.
    pub fn end_stage(&mut self) -> StageRecord {
        let rec = StageRecord {
            name: self.stage.clone(),
            operations: self.manifest.operations.len(),
            sha256: sha256_hex(&self.image),
        };
        self.manifest.stages.push(rec.clone());
        rec
    }

    fn begin(&mut self, description: String) -> (usize, DosTimestamp) {
        let time = self.clock.tick();
        let index = self.manifest.operations.len();
        self.manifest.operations.push(OperationRecord {
            index,
            stage: self.stage.clone(),
            description,
            time,
        });
        (index, time)
    }

    fn write_at(&mut self, off: u64, bytes: &[u8]) {
        let off = off as usize;
        self.image[off..off + bytes.len()].copy_from_slice(bytes);
    }

    fn set_fat(&mut self, cn: u32, value: u32) {
        let off = self.layout.fat_cell_offset(cn);
        self.write_at(off, &value.to_le_bytes());
    }

    fn is_allocated(&self, cn: u32) -> bool {
        let i = (cn - 2) as usize;
        self.bitmap[i / 8] & (1 << (i % 8)) != 0
    }

    fn set_bit(&mut self, cn: u32, allocated: bool) {
        let i = (cn - 2) as usize;
        if allocated {
            self.bitmap[i / 8] |= 1 << (i % 8);
        } else {
            self.bitmap[i / 8] &= !(1 << (i % 8));
        }
        let off = self.layout.cluster_offset(self.layout.bitmap_cluster) + (i / 8) as u64;
        self.image[off as usize] = self.bitmap[i / 8];
    }

    fn free_runs(&self) -> Vec<(u32, u32)> {
        let mut runs = Vec::new();
        let end = self.layout.cluster_count + 2;
        let mut c = 2;
        while c < end {
            if self.is_allocated(c) {
                c += 1;
                continue;
            }
            let start = c;
            while c < end && !self.is_allocated(c) {
                c += 1;
            }
            runs.push((start, c - start));
        }
        runs
    }

    /// First-fit allocation: the first run long enough, otherwise free
    /// clusters in ascending order.
    fn allocate(&mut self, n: u64) -> Result<Vec<u32>> {
        if n == 0 {
            return Ok(Vec::new());
        }
        let runs = self.free_runs();
        let free: u64 = runs.iter().map(|r| u64::from(r.1)).sum();
        if free < n {
            return Err(Error::NoSpace { needed: n, free });
        }
        let clusters: Vec<u32> = match runs.iter().find(|r| u64::from(r.1) >= n) {
            Some(&(start, _)) => (start..start + n as u32).collect(),
            None => runs.iter().flat_map(|&(s, l)| s..s + l).take(n as usize).collect(),
        };
        for &c in &clusters {
            self.set_bit(c, true);
        }
        Ok(clusters)
    }

    fn write_chain(&mut self, clusters: &[u32]) {
        for w in clusters.windows(2) {
            self.set_fat(w[0], w[1]);
        }
        if let Some(&last) = clusters.last() {
            self.set_fat(last, END_OF_CHAIN);
        }
    }

    fn write_content(&mut self, clusters: &[u32], content: &[u8]) {
        let cs = self.layout.cluster_size as usize;
        for (i, &c) in clusters.iter().enumerate() {
            let mut buf = vec![0u8; cs];
            let part = &content[(i * cs).min(content.len())..((i + 1) * cs).min(content.len())];
            buf[..part.len()].copy_from_slice(part);
            let off = self.layout.cluster_offset(c);
            self.write_at(off, &buf);
        }
    }

    fn resolve(&self, path: &str) -> Result<usize> {
        let mut cur = 0;
        for comp in path.split('/').filter(|c| !c.is_empty()) {
            cur = self
                .live_child(cur, comp)
                .ok_or_else(|| Error::PathNotFound(path.to_string()))?;
        }
        Ok(cur)
    }

    fn live_child(&self, dir: usize, name: &str) -> Option<usize> {
        self.manifest
            .files
            .iter()
            .find(|f| f.parent == Some(dir) && f.state == FileState::Active && f.name == name)
            .map(|f| f.id)
    }

    fn split_parent(&self, path: &str) -> Result<(usize, String)> {
        let trimmed = path.trim_end_matches('/');
        let (dir, name) = trimmed.rsplit_once('/').unwrap_or(("", trimmed));
        let parent = self.resolve(dir)?;
        if !self.manifest.files[parent].is_dir {
            return Err(Error::InvalidOperation(format!("{dir} is not a directory")));
        }
        check_name(name)?;
        if self.live_child(parent, name).is_some() {
            return Err(Error::InvalidOperation(format!("{path} already exists")));
        }
        Ok((parent, name.to_string()))
    }

    fn record_offset(&self, dir: usize, index: usize) -> u64 {
        let cs = self.layout.cluster_size as usize;
        let byte = index * RECORD_SIZE;
        let cn = self.manifest.files[dir].clusters[byte / cs];
        self.layout.cluster_offset(cn) + (byte % cs) as u64
    }

    fn dir_capacity(&self, dir: usize) -> usize {
        self.manifest.files[dir].clusters.len() * self.layout.cluster_size as usize / RECORD_SIZE
    }

    /// Clusters a directory must grow by to take `n` more records.
    fn growth_needed(&self, dir: usize, n: usize) -> u64 {
        let need = (self.used_records[&dir] + n).saturating_sub(self.dir_capacity(dir));
        (need * RECORD_SIZE).div_ceil(self.layout.cluster_size as usize) as u64
    }

    fn grow_dir(&mut self, dir: usize) -> Result<()> {
        let last = *self.manifest.files[dir].clusters.last().unwrap();
        let next = last + 1;
        let stays_contiguous = dir != 0
            && self.manifest.files[dir].no_fat_chain
            && next < self.layout.cluster_count + 2
            && !self.is_allocated(next);
        let new = if stays_contiguous {
            self.set_bit(next, true);
            next
        } else {
            self.allocate(1)?[0]
        };
        if new != next || !self.manifest.files[dir].no_fat_chain {
            if self.manifest.files[dir].no_fat_chain {
                let existing = self.manifest.files[dir].clusters.clone();
                self.write_chain(&existing);
                self.manifest.files[dir].no_fat_chain = false;
            }
            self.set_fat(last, new);
            self.set_fat(new, END_OF_CHAIN);
        }
        let off = self.layout.cluster_offset(new);
        self.write_at(off, &vec![0u8; self.layout.cluster_size as usize]);
        let cs = u64::from(self.layout.cluster_size);
        let f = &mut self.manifest.files[dir];
        f.clusters.push(new);
        f.size += cs;
        if dir != 0 {
            self.rewrite_set(dir);
        }
        Ok(())
    }

    fn fields(&self, id: usize) -> SetFields {
        let f = &self.manifest.files[id];
        SetFields {
            name: f.name.clone(),
            is_dir: f.is_dir,
            created: f.created,
            modified: f.modified,
            accessed: f.accessed,
            first_cluster: f.clusters.first().copied().unwrap_or(0),
            size: f.size,
            no_fat_chain: f.no_fat_chain,
        }
    }

    fn write_records(&mut self, dir: usize, index: usize, bytes: &[u8]) {
        for (i, rec) in bytes.chunks_exact(RECORD_SIZE).enumerate() {
            let off = self.record_offset(dir, index + i);
            self.write_at(off, rec);
        }
    }

    /// Appends the set for `id` after the last used record of `dir`.
    fn append_set(&mut self, dir: usize, id: usize) -> Result<()> {
        let bytes = encode_set(&self.fields(id));
        let n = bytes.len() / RECORD_SIZE;
        while self.growth_needed(dir, n) > 0 {
            self.grow_dir(dir)?;
        }
        let index = self.used_records[&dir];
        self.write_records(dir, index, &bytes);
        *self.used_records.get_mut(&dir).unwrap() += n;
        let set = SetId {
            parent_cluster: self.manifest.files[dir].clusters[0],
            record_offset: self.record_offset(dir, index),
        };
        let f = &mut self.manifest.files[id];
        f.set = Some(set);
        f.entry_index = index;
        f.set_records = n;
        f.parent = Some(dir);
        Ok(())
    }

    fn rewrite_set(&mut self, id: usize) {
        let bytes = encode_set(&self.fields(id));
        let f = &self.manifest.files[id];
        assert_eq!(
            bytes.len() / RECORD_SIZE,
            f.set_records,
            "in-place rewrite must keep the record count"
        );
        let (dir, index) = (f.parent.unwrap(), f.entry_index);
        self.write_records(dir, index, &bytes);
    }

    fn flip_set(&mut self, id: usize) {
        let f = &self.manifest.files[id];
        let (dir, index, n) = (f.parent.unwrap(), f.entry_index, f.set_records);
        for i in 0..n {
            let off = self.record_offset(dir, index + i) as usize;
            self.image[off] &= 0x7F;
        }
    }

    fn retire_set(&mut self, id: usize, reason: FormerReason, op: usize) {
        self.flip_set(id);
        let f = &mut self.manifest.files[id];
        let set = f.set.take().expect("live file has a set");
        f.former_sets.push(FormerSet {
            set,
            reason,
            op,
            name: f.name.clone(),
            parent: f.parent.unwrap(),
        });
    }

    fn event(&mut self, id: usize, op: usize, action: &str, time: DosTimestamp) {
        let f = &mut self.manifest.files[id];
        f.history.push(FileEvent {
            op,
            action: action.to_string(),
            time,
            clusters: f.clusters.clone(),
            size: f.size,
            sha256: f.sha256.clone(),
        });
    }

    fn refresh_paths(&mut self, id: usize) {
        let parent_path = self.manifest.files[id]
            .parent
            .map(|p| self.manifest.files[p].path.clone())
            .unwrap_or_default();
        let name = self.manifest.files[id].name.clone();
        self.manifest.files[id].path = join(&parent_path, &name);
        let children: Vec<usize> = self
            .manifest
            .files
            .iter()
            .filter(|f| f.parent == Some(id) && f.state == FileState::Active)
            .map(|f| f.id)
            .collect();
        for c in children {
            self.refresh_paths(c);
        }
    }

    fn new_record(&mut self, parent: usize, name: String, is_dir: bool, time: DosTimestamp) -> usize {
        let id = self.manifest.files.len();
        let path = join(&self.manifest.files[parent].path, &name);
        self.manifest.files.push(FileRecord {
            id,
            path,
            name,
            is_dir,
            parent: Some(parent),
            state: FileState::Active,
            clusters: Vec::new(),
            size: 0,
            no_fat_chain: true,
            created: time,
            modified: time,
            accessed: time,
            set: None,
            entry_index: 0,
            set_records: 0,
            sha256: sha256_hex(&[]),
            former_sets: Vec::new(),
            history: Vec::new(),
            released_tail: None,
            content: Vec::new(),
        });
        id
    }

    fn check_space(&self, dir: usize, records: usize, clusters: u64) -> Result<()> {
        let needed = clusters + self.growth_needed(dir, records);
        let free = u64::from(self.free_clusters());
        if free < needed {
            return Err(Error::NoSpace { needed, free });
        }
        Ok(())
    }

    pub fn create_file(&mut self, path: &str, content: Vec<u8>) -> Result<usize> {
        let (parent, name) = self.split_parent(path)?;
        let n = self.layout.clusters_for(content.len() as u64);
        self.check_space(parent, records_for_name(&name), n)?;
        let (op, time) = self.begin(format!("create {path} ({} bytes)", content.len()));
        let id = self.new_record(parent, name, false, time);
        self.append_set(parent, id)?;
        let clusters = self.allocate(n)?;
        let contiguous = is_contiguous(&clusters);
        if !contiguous {
            self.write_chain(&clusters);
        }
        self.write_content(&clusters, &content);
        let f = &mut self.manifest.files[id];
        f.size = content.len() as u64;
        f.sha256 = sha256_hex(&content);
        f.content = content;
        f.clusters = clusters;
        f.no_fat_chain = contiguous;
        self.rewrite_set(id);
        self.event(id, op, "create", time);
        Ok(id)
    }

    pub fn create_dir(&mut self, path: &str) -> Result<usize> {
        let (parent, name) = self.split_parent(path)?;
        self.check_space(parent, records_for_name(&name), 1)?;
        let (op, time) = self.begin(format!("mkdir {path}"));
        let id = self.new_record(parent, name, true, time);
        self.append_set(parent, id)?;
        let clusters = self.allocate(1)?;
        self.write_content(&clusters, &[]);
        let f = &mut self.manifest.files[id];
        f.size = u64::from(self.layout.cluster_size);
        f.clusters = clusters;
        f.sha256 = String::new();
        self.rewrite_set(id);
        self.used_records.insert(id, 0);
        self.event(id, op, "mkdir", time);
        Ok(id)
    }

    /// Fills free space with dummy files of `chunk_clusters` clusters each,
    /// leaving `reserve` clusters free.
    pub fn fill_free_space(&mut self, dir: &str, pattern: u8, chunk_clusters: u32, reserve: u32) -> Result<Vec<usize>> {
        let dir_id = self.resolve(dir)?;
        let mut created = Vec::new();
        loop {
            let name = format!("dummy{:04}.bin", self.dummies + 1);
            let growth = self.growth_needed(dir_id, records_for_name(&name)) as u32;
            let free = self.free_clusters();
            let n = free.saturating_sub(reserve + growth).min(chunk_clusters.max(1));
            if n == 0 {
                break;
            }
            self.dummies += 1;
            let bytes = vec![pattern; n as usize * self.layout.cluster_size as usize];
            created.push(self.create_file(&join(&self.manifest.files[dir_id].path.clone(), &name), bytes)?);
        }
        Ok(created)
    }

    /// Paths of live files whose path starts with `prefix`, which must name
    /// an existing folder followed by a name prefix. Sorted by name.
    pub fn matching(&self, prefix: &str) -> Vec<String> {
        let (dir, stem) = prefix.rsplit_once('/').unwrap_or(("", prefix));
        let Ok(dir) = self.resolve(dir) else { return Vec::new() };
        let mut names: Vec<&FileRecord> = self
            .manifest
            .files
            .iter()
            .filter(|f| f.parent == Some(dir) && f.state == FileState::Active && f.name.starts_with(stem))
            .collect();
        names.sort_by(|a, b| a.name.cmp(&b.name));
        names.into_iter().map(|f| f.path.clone()).collect()
    }

    pub fn delete(&mut self, path: &str) -> Result<()> {
        let id = self.resolve(path)?;
        if id == 0 {
            return Err(Error::InvalidOperation("cannot delete the root directory".into()));
        }
        let (op, time) = self.begin(format!("delete {path}"));
        self.delete_node(id, op, time);
        Ok(())
    }

    fn delete_node(&mut self, id: usize, op: usize, time: DosTimestamp) {
        if self.manifest.files[id].is_dir {
            let children: Vec<usize> = self
                .manifest
                .files
                .iter()
                .filter(|f| f.parent == Some(id) && f.state == FileState::Active)
                .map(|f| f.id)
                .collect();
            for c in children {
                self.delete_node(c, op, time);
            }
        }
        self.retire_set(id, FormerReason::Deleted, op);
        for c in self.manifest.files[id].clusters.clone() {
            self.set_bit(c, false);
        }
        self.manifest.files[id].state = FileState::Deleted;
        self.event(id, op, "delete", time);
    }

    pub fn rename(&mut self, path: &str, new_name: &str) -> Result<()> {
        let id = self.resolve(path)?;
        if id == 0 {
            return Err(Error::InvalidOperation("cannot rename the root directory".into()));
        }
        check_name(new_name)?;
        let parent = self.manifest.files[id].parent.unwrap();
        if self.live_child(parent, new_name).is_some() {
            return Err(Error::InvalidOperation(format!("{new_name} already exists")));
        }
        let records = records_for_name(new_name);
        let in_place = records == self.manifest.files[id].set_records;
        if !in_place {
            self.check_space(parent, records, 0)?;
        }
        let (op, time) = self.begin(format!("rename {path} -> {new_name}"));
        if in_place {
            let f = &mut self.manifest.files[id];
            f.name = new_name.to_string();
            f.accessed = time;
            self.rewrite_set(id);
        } else {
            self.retire_set(id, FormerReason::Renamed, op);
            let f = &mut self.manifest.files[id];
            f.name = new_name.to_string();
            f.accessed = time;
            self.append_set(parent, id)?;
        }
        self.refresh_paths(id);
        self.event(id, op, if in_place { "rename-in-place" } else { "rename" }, time);
        Ok(())
    }

    pub fn move_to(&mut self, path: &str, dest_dir: &str) -> Result<()> {
        let id = self.resolve(path)?;
        let dest = self.resolve(dest_dir)?;
        if id == 0 || !self.manifest.files[dest].is_dir {
            return Err(Error::InvalidOperation(format!("cannot move {path} to {dest_dir}")));
        }
        let mut up = Some(dest);
        while let Some(d) = up {
            if d == id {
                return Err(Error::InvalidOperation(format!("{dest_dir} is inside {path}")));
            }
            up = self.manifest.files[d].parent;
        }
        let name = self.manifest.files[id].name.clone();
        if self.live_child(dest, &name).is_some() {
            return Err(Error::InvalidOperation(format!("{dest_dir}/{name} already exists")));
        }
        self.check_space(dest, self.manifest.files[id].set_records, 0)?;
        let (op, time) = self.begin(format!("move {path} -> {dest_dir}"));
        self.retire_set(id, FormerReason::Moved, op);
        self.append_set(dest, id)?;
        self.refresh_paths(id);
        self.event(id, op, "move", time);
        Ok(())
    }

    pub fn shorten(&mut self, path: &str, to: ShortenTo) -> Result<()> {
        let id = self.resolve(path)?;
        let f = &self.manifest.files[id];
        if f.is_dir {
            return Err(Error::InvalidOperation(format!("{path} is a directory")));
        }
        let cs = u64::from(self.layout.cluster_size);
        let new_size = match to {
            ShortenTo::Bytes(n) if n < f.size => n,
            ShortenTo::Bytes(n) => {
                return Err(Error::InvalidOperation(format!(
                    "{path} is {} bytes, cannot shorten to {n}",
                    f.size
                )))
            }
            ShortenTo::FirstFragment => {
                if !f.is_fragmented() {
                    return Err(Error::InvalidOperation(format!("{path} is not fragmented")));
                }
                let first = f.clusters.windows(2).position(|w| w[1] != w[0] + 1).unwrap() as u64 + 1;
                first * cs - cs / 4
            }
        };
        let (op, time) = self.begin(format!("shorten {path} to {new_size} bytes"));
        let keep = self.layout.clusters_for(new_size) as usize;
        let f = &self.manifest.files[id];
        let released: Vec<u32> = f.clusters[keep..].to_vec();
        let kept: Vec<u32> = f.clusters[..keep].to_vec();
        for &c in &released {
            self.set_bit(c, false);
        }
        let contiguous = is_contiguous(&kept);
        if !contiguous {
            self.set_fat(*kept.last().unwrap(), END_OF_CHAIN);
        }
        let f = &mut self.manifest.files[id];
        let previous = std::mem::take(&mut f.content);
        f.released_tail = Some(ReleasedTail {
            op,
            clusters: released,
            previous_size: f.size,
            previous_sha256: f.sha256.clone(),
            previous_content: previous.clone(),
        });
        f.content = previous[..new_size as usize].to_vec();
        f.sha256 = sha256_hex(&f.content);
        f.size = new_size;
        f.clusters = kept;
        f.no_fat_chain = contiguous;
        f.modified = time;
        f.accessed = time;
        self.rewrite_set(id);
        self.event(id, op, "shorten", time);
        Ok(())
    }
}

fn check_name(name: &str) -> Result<()> {
    let len = name.encode_utf16().count();
    if len == 0 || len > 255 || name.contains(['/', '\\', '\0']) {
        return Err(Error::InvalidOperation(format!("invalid file name {name:?}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_fits_volume() {
        let l = Layout::compute(&VolumeParams::new(64 << 20, 1024)).unwrap();
        assert_eq!(l.cluster_size, 1024);
        let heap_end = u64::from(l.heap_offset_sectors) + u64::from(l.cluster_count) * u64::from(l.sectors_per_cluster);
        assert!(heap_end <= l.volume_length_sectors);
        assert!(u64::from(l.fat_length_sectors) * 512 >= (u64::from(l.cluster_count) + 2) * 4);
        assert_eq!(l.heap_offset_sectors % l.sectors_per_cluster, 0);
    }

    #[test]
    fn too_small() {
        assert!(matches!(
            Layout::compute(&VolumeParams::new(64 * 1024, 1024)),
            Err(Error::SizeTooSmall { .. })
        ));
    }

    #[test]
    fn first_fit_then_fragments() {
        let mut f = Forge::format(VolumeParams::new(1 << 20, 1024), Clock::default()).unwrap();
        let a = f.create_file("/a", vec![1; 3000]).unwrap();
        let _b = f.create_file("/b", vec![2; 1000]).unwrap();
        let c = f.create_file("/c", vec![3; 1000]).unwrap();
        let _d = f.create_file("/d", vec![4; 1000]).unwrap();
        f.delete("/b").unwrap();
        f.delete("/a").unwrap();
        let e = f.create_file("/e", vec![5; 1]).unwrap();
        let m = f.manifest();
        assert_eq!(m.files[e].clusters, vec![m.files[a].clusters[0]]);
        assert!(m.files[e].no_fat_chain);
        assert_eq!(m.files[c].clusters.len(), 1);
    }
}
