//! Forensic analysis of exFAT volume images.
//!
//! The crate decodes the boot record, FAT, allocation bitmap and directory
//! entry sets of an image opened read-only, interprets inactive entry sets
//! (deleted, moved, renamed), recovers content of deleted and shortened
//! files, and carves unallocated space with help from stale entries. A
//! [`forge`] module builds synthetic volumes with known ground truth.
//!
//! ```no_run
//! use exfat_forensic::{classify_all, Volume, WalkOptions};
//!
//! let vol = Volume::open("evidence.img", 0)?;
//! let tree = vol.walk(WalkOptions::default());
//! for v in classify_all(&tree, &vol.bitmap) {
//!     println!("{} {}", v.set, v.verdict.as_str());
//! }
//! # Ok::<(), exfat_forensic::Error>(())
//! ```

pub mod analysis;
pub mod bitmap;
pub mod carver;
pub mod classifier;
pub mod direntry;
pub mod error;
pub mod fat;
pub mod finding;
pub mod forge;
mod hexser;
pub mod recovery;
pub mod report;
pub mod volume;

pub use analysis::Volume;
pub use bitmap::{bit_position, AllocationBitmap, BitPosition, BitmapDescriptor, ClusterRun};
pub use classifier::{classify, classify_all, find_similar, InactiveVerdict, SimilarityCriteria, Verdict};
pub use direntry::{DirectoryTree, DosTimestamp, FileEntrySet, SetId, WalkOptions};
pub use error::{Error, Result};
pub use fat::{ChainEnd, ClusterChain, FatTable};
pub use finding::{Check, Finding};
pub use recovery::{FillPolicy, Integrity, RecoveredFile};
pub use volume::{cluster_to_offset, open_image, parse_vbr, VolumeGeometry, VolumeImage};

// The book's code blocks, run by `cargo test --doc`. One module per chapter
// so a failure names its chapter.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
    #[doc = include_str!("../../../book/src/layout.md")]
    pub mod layout {}
    #[doc = include_str!("../../../book/src/inactive.md")]
    pub mod inactive {}
    #[doc = include_str!("../../../book/src/recovery.md")]
    pub mod recovery {}
    #[doc = include_str!("../../../book/src/carving.md")]
    pub mod carving {}
    #[doc = include_str!("../../../book/src/forge.md")]
    pub mod forge {}
    #[doc = include_str!("../../../book/src/report.md")]
    pub mod report {}
}
