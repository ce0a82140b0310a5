//! Byte dumps of entry sets and FAT cells taken from real exFAT volumes.
#![allow(dead_code)]

/// Active set of `colors.jpg`, contiguous.
pub const COLORS_SET: &str = "\
850219e020000000274b3e49fd658646274b3e49990088888800000000000000\
c003000ab04200008b950e0000000000000000000b0000008b950e0000000000\
c10063006f006c006f00720073002e006a007000670000000000000000000000";

/// Inactive set of `target_earth.png`, chained through the FAT.
pub const TARGET_EARTH_SET: &str = "\
050304562000000033944549fb5b1749339445499b0088888800000000000000\
400100106408000073a256000000000000000000f524000073a2560000000000\
41007400610072006700650074005f00650061007200740068002e0070006e00\
4100670000000000000000000000000000000000000000000000000000000000";

/// FAT cells 9460 to 9475: the cell of 9461 holds 9462 and so on.
pub const TARGET_EARTH_FAT: &str = "\
00000000f6240000f7240000f8240000f9240000fa240000fb240000fc240000\
fd240000fe240000ff2400000025000001250000022500000325000004250000";

/// Cell index of the first byte of [`TARGET_EARTH_FAT`].
pub const TARGET_EARTH_FAT_FIRST_CELL: u32 = 9460;

/// Inactive set of `square.jpg` left in the folder it was moved out of.
pub const SQUARE_INACTIVE: &str = "\
0502872b20000000af703e494183033daf703e49190088888800000000000000\
4003000ad53b000068aa4b000000000000000000f702000068aa4b0000000000\
41007300710075006100720065002e006a007000670000000000000000000000";

/// The active set of `square.jpg` in its new folder.
pub const SQUARE_ACTIVE: &str = "\
8502872b20000000af703e494183033daf703e49190088888800000000000000\
c003000ad53b000068aa4b000000000000000000f702000068aa4b0000000000\
c1007300710075006100720065002e006a007000670000000000000000000000";

pub fn bytes(dump: &str) -> Vec<u8> {
    hex::decode(dump).expect("valid dump")
}
