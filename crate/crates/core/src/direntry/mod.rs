//! Directory records and entry sets.
//!
//! Directories are arrays of 32-byte records. The first byte of a record is
//! its type; bit 7 is the in-use flag. A file or folder is described by an
//! entry set: a file entry (0x85), a stream extension (0xC0) holding the
//! first cluster and size, and one name extension (0xC1) per 15 UTF-16
//! characters of the name. Delete, rename and move leave the old set in
//! place with bit 7 cleared (0x05 / 0x40 / 0x41).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::fat::{ChainEnd, FatTable};
use crate::volume::VolumeGeometry;

pub mod timestamp;
pub mod tree;

pub use timestamp::DosTimestamp;
pub use tree::{walk_tree, Directory, DirectoryTree, WalkOptions};

pub const RECORD_SIZE: usize = 32;
pub const IN_USE: u8 = 0x80;

pub const TYPE_FILE: u8 = 0x85;
pub const TYPE_STREAM: u8 = 0xC0;
pub const TYPE_NAME: u8 = 0xC1;
pub const TYPE_BITMAP: u8 = 0x81;
pub const TYPE_UPCASE: u8 = 0x82;
pub const TYPE_LABEL: u8 = 0x83;

pub const NAME_CHARS_PER_RECORD: usize = 15;
pub const MAX_NAME_LENGTH: usize = 255;

pub const ATTR_DIRECTORY: u16 = 0x0010;
pub const ATTR_ARCHIVE: u16 = 0x0020;

pub const STREAM_ALLOCATION_POSSIBLE: u8 = 0x01;
pub const STREAM_NO_FAT_CHAIN: u8 = 0x02;

/// Stable address of an entry set: the first cluster of the directory that
/// holds it and the volume offset of its file entry record.
/// Written as `parentCluster:recordOffset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SetId {
    pub parent_cluster: u32,
    pub record_offset: u64,
}

impl fmt::Display for SetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.parent_cluster, self.record_offset)
    }
}

impl FromStr for SetId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (p, o) = s
            .split_once(':')
            .ok_or_else(|| format!("set id {s:?} is not parentCluster:recordOffset"))?;
        Ok(SetId {
            parent_cluster: p.trim().parse().map_err(|e| format!("parent cluster: {e}"))?,
            record_offset: o.trim().parse().map_err(|e| format!("record offset: {e}"))?,
        })
    }
}

impl Serialize for SetId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SetId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    #[serde(with = "crate::hexser")]
    pub bytes: Vec<u8>,
    /// Volume-relative byte offset.
    pub offset: u64,
    pub parent_cluster: u32,
}

impl RawRecord {
    pub fn new(bytes: [u8; RECORD_SIZE], offset: u64, parent_cluster: u32) -> Self {
        RawRecord {
            bytes: bytes.to_vec(),
            offset,
            parent_cluster,
        }
    }

    pub fn type_byte(&self) -> u8 {
        self.bytes[0]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntryRecord {
    pub set_count: u8,
    pub identity_word: u16,
    pub attributes: u16,
    pub created: DosTimestamp,
    pub modified: DosTimestamp,
    pub accessed: DosTimestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamRecord {
    pub flags: u8,
    pub name_length: u8,
    pub name_hash: u16,
    pub valid_data_length: u64,
    pub first_cluster: u32,
    pub file_size: u64,
}

impl StreamRecord {
    pub fn no_fat_chain(&self) -> bool {
        self.flags & STREAM_NO_FAT_CHAIN != 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameRecord {
    pub flags: u8,
    pub units: [u16; NAME_CHARS_PER_RECORD],
}

/// Root-only records describing system files and the label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpecialRootEntry {
    VolumeLabel {
        label: String,
        #[serde(with = "crate::hexser")]
        raw: Vec<u8>,
    },
    Bitmap {
        first_cluster: u32,
        size_bytes: u64,
        #[serde(with = "crate::hexser")]
        raw: Vec<u8>,
    },
    Upcase {
        first_cluster: u32,
        size_bytes: u64,
        table_checksum: u32,
        #[serde(with = "crate::hexser")]
        raw: Vec<u8>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RecordKind {
    FileEntry(FileEntryRecord),
    StreamExtension(StreamRecord),
    NameExtension(NameRecord),
    Special(SpecialRootEntry),
    EndMarker,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedRecord {
    pub kind: RecordKind,
    pub active: bool,
    pub raw: RawRecord,
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

/// Classifies one record by its type byte. Never fails: unrecognised
/// types come back as [`RecordKind::Unknown`] with the raw bytes intact.
pub fn parse_record(raw: RawRecord) -> ParsedRecord {
    let b = &raw.bytes;
    let t = b[0];
    let active = t & IN_USE != 0;
    let kind = match t {
        0x00 => RecordKind::EndMarker,
        0x85 | 0x05 => RecordKind::FileEntry(FileEntryRecord {
            set_count: b[1],
            identity_word: le_u16(b, 0x02),
            attributes: le_u16(b, 0x04),
            created: DosTimestamp::decode(le_u32(b, 0x08)),
            modified: DosTimestamp::decode(le_u32(b, 0x0C)),
            accessed: DosTimestamp::decode(le_u32(b, 0x10)),
        }),
        0xC0 | 0x40 => RecordKind::StreamExtension(StreamRecord {
            flags: b[1],
            name_length: b[3],
            name_hash: le_u16(b, 0x04),
            valid_data_length: le_u64(b, 0x08),
            first_cluster: le_u32(b, 0x14),
            file_size: le_u64(b, 0x18),
        }),
        0xC1 | 0x41 => {
            let mut units = [0u16; NAME_CHARS_PER_RECORD];
            for (i, u) in units.iter_mut().enumerate() {
                *u = le_u16(b, 2 + 2 * i);
            }
            RecordKind::NameExtension(NameRecord { flags: b[1], units })
        }
        TYPE_BITMAP => RecordKind::Special(SpecialRootEntry::Bitmap {
            first_cluster: le_u32(b, 0x14),
            size_bytes: le_u64(b, 0x18),
            raw: b.clone(),
        }),
        TYPE_UPCASE => RecordKind::Special(SpecialRootEntry::Upcase {
            first_cluster: le_u32(b, 0x14),
            size_bytes: le_u64(b, 0x18),
            table_checksum: le_u32(b, 0x04),
            raw: b.clone(),
        }),
        TYPE_LABEL => {
            let count = usize::from(b[1]).min(11);
            let units: Vec<u16> = (0..count).map(|i| le_u16(b, 2 + 2 * i)).collect();
            RecordKind::Special(SpecialRootEntry::VolumeLabel {
                label: String::from_utf16_lossy(&units),
                raw: b.clone(),
            })
        }
        _ => RecordKind::Unknown,
    };
    ParsedRecord { kind, active, raw }
}

/// Splits a directory's bytes into records. With `stop_at_end` the scan ends
/// at the first end-marker record; otherwise every record is returned.
pub fn parse_records(bytes: &[u8], base_offset: u64, parent_cluster: u32, stop_at_end: bool) -> Vec<ParsedRecord> {
    let mut out = Vec::with_capacity(bytes.len() / RECORD_SIZE);
    for (i, chunk) in bytes.chunks_exact(RECORD_SIZE).enumerate() {
        let raw = RawRecord::new(
            chunk.try_into().unwrap(),
            base_offset + (i * RECORD_SIZE) as u64,
            parent_cluster,
        );
        let rec = parse_record(raw);
        if stop_at_end && rec.kind == RecordKind::EndMarker {
            break;
        }
        out.push(rec);
    }
    out
}

/// An assembled file entry set, active or inactive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntrySet {
    pub id: SetId,
    pub active: bool,
    pub set_count: u8,
    /// The 16-bit word at file-entry offset 0x02, compared for equality only.
    pub identity_word: u16,
    pub attributes: u16,
    pub created: DosTimestamp,
    pub modified: DosTimestamp,
    pub accessed: DosTimestamp,
    pub flags: u8,
    pub no_fat_chain: bool,
    pub name_length: u8,
    pub first_cluster: u32,
    pub file_size: u64,
    pub valid_data_length: u64,
    pub name: String,
    /// False when fewer name characters survive than `name_length` says.
    pub name_complete: bool,
    /// Reasons the set does not follow the expected layout; empty if well formed.
    pub malformed: Vec<String>,
    pub from_inactive_directory: bool,
    #[serde(with = "crate::hexser")]
    pub raw: Vec<u8>,
}

/// Where a set's content lives according to its own metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extent {
    pub clusters: Vec<u32>,
    /// Set for FAT-chained sets: how the walk ended.
    pub chain_end: Option<ChainEnd>,
}

impl FileEntrySet {
    pub fn is_directory(&self) -> bool {
        self.attributes & ATTR_DIRECTORY != 0
    }

    pub fn is_malformed(&self) -> bool {
        !self.malformed.is_empty()
    }

    /// Number of name extensions the name length calls for.
    pub fn expected_name_records(&self) -> usize {
        usize::from(self.name_length).div_ceil(NAME_CHARS_PER_RECORD)
    }

    /// Clusters the set describes: a contiguous run when the no-FAT-chain
    /// flag is set, otherwise the FAT chain, each limited to the clusters
    /// needed for `file_size`. Contiguous runs are clipped at the heap end.
    pub fn extent(&self, geom: &VolumeGeometry, fat: &FatTable) -> Extent {
        let needed = geom.clusters_for(self.file_size);
        if needed == 0 || !geom.contains_cluster(self.first_cluster) {
            return Extent {
                clusters: Vec::new(),
                chain_end: None,
            };
        }
        if self.no_fat_chain {
            let end = (u64::from(self.first_cluster) + needed).min(u64::from(geom.cluster_end()));
            Extent {
                clusters: (self.first_cluster..end as u32).collect(),
                chain_end: None,
            }
        } else {
            let chain = fat.walk_chain(self.first_cluster, needed as usize);
            Extent {
                clusters: chain.clusters,
                chain_end: Some(chain.terminated_by),
            }
        }
    }
}

/// Records of one directory after grouping into sets.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssembledDirectory {
    pub sets: Vec<FileEntrySet>,
    /// Stream and name records not claimed by a set, plus unknown records.
    pub orphans: Vec<ParsedRecord>,
    pub specials: Vec<SpecialRootEntry>,
}

/// Groups records (in on-disk order, from one directory) into entry sets.
///
/// A set is a file entry followed by its stream extension and name
/// extensions, up to the file entry's set count. Sets whose members mix
/// active and inactive types, or whose counts disagree, are kept but marked
/// malformed. Records no set claims are returned as orphans.
pub fn assemble_sets(records: &[ParsedRecord]) -> AssembledDirectory {
    let mut out = AssembledDirectory::default();
    let mut i = 0;
    while i < records.len() {
        let rec = &records[i];
        match &rec.kind {
            RecordKind::FileEntry(fe) => {
                let (set, consumed) = assemble_one(rec, fe, &records[i + 1..]);
                out.sets.push(set);
                i += 1 + consumed;
            }
            RecordKind::Special(s) => {
                out.specials.push(s.clone());
                i += 1;
            }
            RecordKind::EndMarker => i += 1,
            _ => {
                out.orphans.push(rec.clone());
                i += 1;
            }
        }
    }
    out
}

fn assemble_one(head: &ParsedRecord, fe: &FileEntryRecord, rest: &[ParsedRecord]) -> (FileEntrySet, usize) {
    let mut malformed = Vec::new();
    let mut raw = head.raw.bytes.clone();
    let secondaries = usize::from(fe.set_count);
    let mut consumed = 0;

    let stream = match rest.first() {
        Some(ParsedRecord {
            kind: RecordKind::StreamExtension(s),
            active,
            raw: r,
        }) if secondaries > 0 => {
            if *active != head.active {
                malformed.push("stream extension activity differs from file entry".to_string());
            }
            raw.extend_from_slice(&r.bytes);
            consumed = 1;
            Some(s.clone())
        }
        _ => {
            malformed.push("file entry not followed by a stream extension".to_string());
            None
        }
    };

    let mut units: Vec<u16> = Vec::new();
    let mut name_records = 0;
    if stream.is_some() {
        while consumed < secondaries {
            match rest.get(consumed) {
                Some(ParsedRecord {
                    kind: RecordKind::NameExtension(n),
                    active,
                    raw: r,
                }) => {
                    if *active != head.active {
                        malformed.push(format!(
                            "name extension {} activity differs from file entry",
                            name_records + 1
                        ));
                    }
                    units.extend_from_slice(&n.units);
                    raw.extend_from_slice(&r.bytes);
                    name_records += 1;
                    consumed += 1;
                }
                _ => break,
            }
        }
    }

    if consumed != secondaries {
        malformed.push(format!(
            "set count {} but {} secondary records follow",
            secondaries, consumed
        ));
    }

    let s = stream.unwrap_or(StreamRecord {
        flags: 0,
        name_length: 0,
        name_hash: 0,
        valid_data_length: 0,
        first_cluster: 0,
        file_size: 0,
    });
    let name_length = usize::from(s.name_length);
    let expected_names = name_length.div_ceil(NAME_CHARS_PER_RECORD);
    if consumed > 0 && name_records != expected_names {
        malformed.push(format!(
            "name length {} needs {} name extensions, found {}",
            name_length, expected_names, name_records
        ));
    }
    let name_complete = units.len() >= name_length;
    units.truncate(name_length);
    // a partial name stops at the first NUL
    if let Some(nul) = units.iter().position(|&u| u == 0) {
        units.truncate(nul);
    }

    let set = FileEntrySet {
        id: SetId {
            parent_cluster: head.raw.parent_cluster,
            record_offset: head.raw.offset,
        },
        active: head.active,
        set_count: fe.set_count,
        identity_word: fe.identity_word,
        attributes: fe.attributes,
        created: fe.created,
        modified: fe.modified,
        accessed: fe.accessed,
        flags: s.flags,
        no_fat_chain: s.no_fat_chain(),
        name_length: s.name_length,
        first_cluster: s.first_cluster,
        file_size: s.file_size,
        valid_data_length: s.valid_data_length,
        name: String::from_utf16_lossy(&units),
        name_complete,
        malformed,
        from_inactive_directory: false,
        raw,
    };
    (set, consumed)
}
