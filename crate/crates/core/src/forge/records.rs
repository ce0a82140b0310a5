//! Encoders for on-disk structures the forge writes.

use crate::direntry::{
    DosTimestamp, ATTR_DIRECTORY, NAME_CHARS_PER_RECORD, RECORD_SIZE, STREAM_ALLOCATION_POSSIBLE, STREAM_NO_FAT_CHAIN,
    TYPE_BITMAP, TYPE_FILE, TYPE_LABEL, TYPE_NAME, TYPE_STREAM, TYPE_UPCASE,
};

/// Fields of a file entry set to encode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetFields {
    pub name: String,
    pub is_dir: bool,
    pub created: DosTimestamp,
    pub modified: DosTimestamp,
    pub accessed: DosTimestamp,
    pub first_cluster: u32,
    pub size: u64,
    pub no_fat_chain: bool,
}

fn name_units(name: &str) -> Vec<u16> {
    name.encode_utf16().collect()
}

/// Records a set with this name occupies: file entry, stream extension and
/// one name extension per 15 characters.
pub fn records_for_name(name: &str) -> usize {
    2 + name_units(name).len().div_ceil(NAME_CHARS_PER_RECORD)
}

/// Name hash over the up-cased name. Only ASCII letters are up-cased,
/// matching the placeholder up-case table.
pub fn name_hash(units: &[u16]) -> u16 {
    let mut hash: u16 = 0;
    for &u in units {
        let u = if (u16::from(b'a')..=u16::from(b'z')).contains(&u) {
            u - 0x20
        } else {
            u
        };
        for b in u.to_le_bytes() {
            hash = hash.rotate_right(1).wrapping_add(u16::from(b));
        }
    }
    hash
}

/// Checksum of a whole entry set, skipping its own field (bytes 2 and 3).
pub fn set_checksum(set: &[u8]) -> u16 {
    let mut sum: u16 = 0;
    for (i, &b) in set.iter().enumerate() {
        if i == 2 || i == 3 {
            continue;
        }
        sum = sum.rotate_right(1).wrapping_add(u16::from(b));
    }
    sum
}

/// 32-bit rotate-and-add checksum used by the boot region and up-case table.
pub fn checksum32(init: u32, bytes: &[u8], skip: impl Fn(usize) -> bool) -> u32 {
    let mut sum = init;
    for (i, &b) in bytes.iter().enumerate() {
        if skip(i) {
            continue;
        }
        sum = sum.rotate_right(1).wrapping_add(u32::from(b));
    }
    sum
}

pub fn encode_set(f: &SetFields) -> Vec<u8> {
    let units = name_units(&f.name);
    let n = records_for_name(&f.name);
    let mut b = vec![0u8; n * RECORD_SIZE];

    b[0] = TYPE_FILE;
    b[1] = (n - 1) as u8;
    let attrs: u16 = if f.is_dir { ATTR_DIRECTORY } else { 0x0020 };
    b[4..6].copy_from_slice(&attrs.to_le_bytes());
    b[0x08..0x0C].copy_from_slice(&f.created.raw.to_le_bytes());
    b[0x0C..0x10].copy_from_slice(&f.modified.raw.to_le_bytes());
    b[0x10..0x14].copy_from_slice(&f.accessed.raw.to_le_bytes());
    // UTC offsets, marked valid at +00:00
    b[0x16] = 0x80;
    b[0x17] = 0x80;
    b[0x18] = 0x80;

    let s = &mut b[RECORD_SIZE..2 * RECORD_SIZE];
    s[0] = TYPE_STREAM;
    s[1] = STREAM_ALLOCATION_POSSIBLE | if f.no_fat_chain { STREAM_NO_FAT_CHAIN } else { 0 };
    s[3] = units.len() as u8;
    s[4..6].copy_from_slice(&name_hash(&units).to_le_bytes());
    s[0x08..0x10].copy_from_slice(&f.size.to_le_bytes());
    s[0x14..0x18].copy_from_slice(&f.first_cluster.to_le_bytes());
    s[0x18..0x20].copy_from_slice(&f.size.to_le_bytes());

    for (i, chunk) in units.chunks(NAME_CHARS_PER_RECORD).enumerate() {
        let r = &mut b[(2 + i) * RECORD_SIZE..(3 + i) * RECORD_SIZE];
        r[0] = TYPE_NAME;
        for (j, u) in chunk.iter().enumerate() {
            r[2 + 2 * j..4 + 2 * j].copy_from_slice(&u.to_le_bytes());
        }
    }

    let sum = set_checksum(&b);
    b[2..4].copy_from_slice(&sum.to_le_bytes());
    b
}

pub fn label_record(label: &str) -> [u8; RECORD_SIZE] {
    let mut r = [0u8; RECORD_SIZE];
    let units: Vec<u16> = label.encode_utf16().take(11).collect();
    r[0] = TYPE_LABEL;
    r[1] = units.len() as u8;
    for (i, u) in units.iter().enumerate() {
        r[2 + 2 * i..4 + 2 * i].copy_from_slice(&u.to_le_bytes());
    }
    r
}

pub fn bitmap_record(first_cluster: u32, size: u64) -> [u8; RECORD_SIZE] {
    let mut r = [0u8; RECORD_SIZE];
    r[0] = TYPE_BITMAP;
    r[0x14..0x18].copy_from_slice(&first_cluster.to_le_bytes());
    r[0x18..0x20].copy_from_slice(&size.to_le_bytes());
    r
}

pub fn upcase_record(first_cluster: u32, size: u64, checksum: u32) -> [u8; RECORD_SIZE] {
    let mut r = [0u8; RECORD_SIZE];
    r[0] = TYPE_UPCASE;
    r[0x04..0x08].copy_from_slice(&checksum.to_le_bytes());
    r[0x14..0x18].copy_from_slice(&first_cluster.to_le_bytes());
    r[0x18..0x20].copy_from_slice(&size.to_le_bytes());
    r
}

/// Placeholder up-case table: the first 128 code points, ASCII letters
/// mapped to upper case.
pub fn upcase_table() -> Vec<u8> {
    (0u16..128)
        .map(|c| if (0x61..=0x7A).contains(&c) { c - 0x20 } else { c })
        .flat_map(u16::to_le_bytes)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::direntry::{assemble_sets, parse_records};

    /// The active set of a copied JPEG, as dumped from a real volume.
    const COLORS_SET: &str = "850219e020000000274b3e49fd658646274b3e49990088888800000000000000\
        c003000ab04200008b950e0000000000000000000b0000008b950e0000000000\
        c10063006f006c006f00720073002e006a007000670000000000000000000000";

    fn colors() -> Vec<u8> {
        hex::decode(COLORS_SET.replace(char::is_whitespace, "")).unwrap()
    }

    #[test]
    fn checksum_of_dumped_set() {
        let b = colors();
        assert_eq!(b.len(), 96);
        assert_eq!(set_checksum(&b), 0xE019);
    }

    #[test]
    fn name_hash_of_dumped_set() {
        let units: Vec<u16> = "colors.jpg".encode_utf16().collect();
        assert_eq!(name_hash(&units), 0x42B0);
    }

    #[test]
    fn encoded_set_parses_back() {
        let f = SetFields {
            name: "a_rather_long_file_name.jpeg".into(),
            is_dir: false,
            created: DosTimestamp::encode(2016, 9, 30, 9, 25, 14),
            modified: DosTimestamp::encode(2016, 9, 30, 9, 26, 0),
            accessed: DosTimestamp::encode(2016, 9, 30, 9, 27, 0),
            first_cluster: 77,
            size: 123_456,
            no_fat_chain: true,
        };
        let b = encode_set(&f);
        assert_eq!(b.len(), 4 * RECORD_SIZE);
        let dir = assemble_sets(&parse_records(&b, 0, 4, true));
        let s = &dir.sets[0];
        assert!(!s.is_malformed(), "{:?}", s.malformed);
        assert_eq!(s.name, f.name);
        assert_eq!(s.first_cluster, 77);
        assert_eq!(s.file_size, 123_456);
        assert!(s.no_fat_chain);
        assert_eq!(s.modified, f.modified);
        assert_eq!(s.accessed, f.accessed);
        assert_eq!(s.identity_word, set_checksum(&b));
    }

    #[test]
    fn record_counts() {
        assert_eq!(records_for_name("colors.jpg"), 3);
        assert_eq!(records_for_name("target_earth.png"), 4);
        assert_eq!(records_for_name(&"x".repeat(30)), 4);
        assert_eq!(records_for_name(&"x".repeat(31)), 5);
    }
}
