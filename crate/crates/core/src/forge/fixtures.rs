//! Reference scenarios used by the test suite and the documentation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scenario::{Op, Scenario, ShortenTo};
use super::{ContentKind, VolumeParams};

pub const STAGE_ADD: &str = "stage2-add-files";
pub const STAGE_FRAGMENT: &str = "stage3-fragmented-files";
pub const STAGE_RENAME_MOVE: &str = "stage4-rename-move";
pub const STAGE_SHORTEN: &str = "stage5-shorten";
pub const STAGE_DELETE: &str = "stage6-delete";
pub const STAGE_DELETE_FOLDER: &str = "stage7-delete-folder";

pub const FRAGMENTED_TEXT: &str = "/fragmented.txt";
pub const FRAGMENTED_JPEG: &str = "/fragmented.jpg";

const FILL_RESERVE: u32 = 8;

fn create(path: impl Into<String>, kind: ContentKind, size: u64, seed: u64) -> Op {
    Op::Create {
        path: path.into(),
        kind,
        size,
        seed,
    }
}

fn delete(path: impl Into<String>) -> Op {
    Op::Delete { path: path.into() }
}

/// The seven-stage protocol: format; add photos, documents, small files, a
/// folder and dummy fill; delete the small files and every other dummy and
/// add two files that must fragment; rename two files to long names and
/// move two into the folder; shorten the fragmented text file to its first
/// fragment; delete several files including both fragmented ones; delete
/// the folder.
///
/// Seed 0 is the canonical 16 MiB volume with 1 KiB clusters; other seeds
/// vary sizes, counts and cluster size on an 8 MiB volume.
pub fn protocol(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (size, cs) = if seed == 0 {
        (16u64 << 20, 1024u32)
    } else {
        (8 << 20, [512, 1024, 1024, 2048, 4096][rng.gen_range(0..5)])
    };
    let csu = u64::from(cs);
    let clusters = size / csu;
    let photos = rng.gen_range(4..=7usize);
    let mut s = Scenario::new(VolumeParams::new(size, cs).label("PROTOCOL"));
    s.clock_step = rng.gen_range(2..=600);

    let mut ops = vec![Op::Mkdir {
        path: "/subfolder".into(),
    }];
    for i in 1..=photos {
        ops.push(create(
            format!("/photo{i}.jpg"),
            ContentKind::Jpeg,
            rng.gen_range(8 * csu..60 * csu) + rng.gen_range(0..csu),
            seed * 100 + i as u64,
        ));
        ops.push(create(
            format!("/small{i}.txt"),
            ContentKind::Text,
            rng.gen_range(csu / 2..3 * csu),
            seed * 100 + 50 + i as u64,
        ));
    }
    for i in 1..=2 {
        ops.push(create(
            format!("/doc{i}.pdf"),
            ContentKind::Pdf,
            rng.gen_range(10 * csu..40 * csu),
            seed * 100 + 80 + i,
        ));
    }
    let chunk = (clusters / rng.gen_range(14..22)) as u32;
    ops.push(Op::Fill {
        dir: "/".into(),
        pattern: 0,
        chunk,
        reserve: FILL_RESERVE,
    });
    s = s.stage(STAGE_ADD, ops);

    // Bigger than any run the deletions can free, so both must fragment.
    let longest_gap = u64::from(chunk + FILL_RESERVE) + 16;
    let frag = |rng: &mut ChaCha8Rng| (longest_gap + rng.gen_range(8..64)) * csu - rng.gen_range(1..csu);
    let mut ops: Vec<Op> = (1..=photos).map(|i| delete(format!("/small{i}.txt"))).collect();
    ops.push(Op::DeleteMatching {
        prefix: "/dummy".into(),
        every: 2,
        offset: 1,
    });
    ops.push(create(
        FRAGMENTED_TEXT,
        ContentKind::Text,
        frag(&mut rng),
        seed * 100 + 90,
    ));
    ops.push(create(
        FRAGMENTED_JPEG,
        ContentKind::Jpeg,
        frag(&mut rng),
        seed * 100 + 91,
    ));
    s = s.stage(STAGE_FRAGMENT, ops);

    s = s.stage(
        STAGE_RENAME_MOVE,
        vec![
            Op::Rename {
                path: "/photo1.jpg".into(),
                name: "photo_one_with_a_longer_name.jpg".into(),
            },
            Op::Rename {
                path: "/doc1.pdf".into(),
                name: "document_number_one_renamed.pdf".into(),
            },
            Op::Move {
                path: "/photo2.jpg".into(),
                to: "/subfolder".into(),
            },
            Op::Move {
                path: "/photo3.jpg".into(),
                to: "/subfolder".into(),
            },
        ],
    );

    s = s.stage(
        STAGE_SHORTEN,
        vec![Op::Shorten {
            path: FRAGMENTED_TEXT.into(),
            to: ShortenTo::FirstFragment,
        }],
    );

    let mut ops = vec![delete("/photo4.jpg"), delete("/doc2.pdf")];
    if photos > 4 {
        ops.push(delete(format!("/photo{photos}.jpg")));
    }
    ops.push(delete(FRAGMENTED_JPEG));
    ops.push(delete(FRAGMENTED_TEXT));
    s = s.stage(STAGE_DELETE, ops);

    s.stage(STAGE_DELETE_FOLDER, vec![delete("/subfolder")])
}

/// A two-cluster file at cluster 530 that used to span 530 to 535, followed
/// by a file at 536: bitmap bits 1 1 0 0 0 0 1 1 over clusters 530 to 537.
pub fn shortened_tail() -> Scenario {
    let cs = 1024u64;
    // bitmap, up-case and root take clusters 2 to 4
    let filler = (530 - 5) * cs;
    Scenario::new(VolumeParams::new(1 << 20, cs as u32).label("TAIL")).stage(
        "build",
        vec![
            create("/filler.bin", ContentKind::Zero, filler, 0),
            create("/a.jpg", ContentKind::Jpeg, 6 * cs - 300, 1),
            create("/b.jpg", ContentKind::Jpeg, 2 * cs - 100, 2),
            Op::Shorten {
                path: "/a.jpg".into(),
                to: ShortenTo::Bytes(2 * cs - 200),
            },
        ],
    )
}

pub const TARGET_EARTH_SIZE: u64 = 5_677_683;
pub const TARGET_EARTH_FIRST_CLUSTER: u32 = 9461;

/// A deleted, fragmented `target_earth.png` of 5,677,683 bytes whose chain
/// starts at cluster 9461 and runs sequentially for its first 100 clusters.
pub fn fragmented_replica() -> Scenario {
    let cs = 1024u64;
    // system files take clusters 2 to 6 on this geometry
    let filler = u64::from(TARGET_EARTH_FIRST_CLUSTER - 7) * cs;
    Scenario::new(VolumeParams::new(24 << 20, cs as u32).label("REPLICA"))
        .stage(
            "prepare",
            vec![
                create("/filler.bin", ContentKind::Zero, filler, 0),
                create("/gap.bin", ContentKind::Zero, 100 * cs, 0),
                create("/block.bin", ContentKind::Zero, cs, 0),
                Op::Fill {
                    dir: "/".into(),
                    pattern: 0,
                    chunk: 1500,
                    reserve: FILL_RESERVE,
                },
                delete("/gap.bin"),
                Op::DeleteMatching {
                    prefix: "/dummy".into(),
                    every: 2,
                    offset: 1,
                },
            ],
        )
        .stage(
            "copy",
            vec![create(
                "/target_earth.png",
                ContentKind::Random,
                TARGET_EARTH_SIZE,
                9461,
            )],
        )
        .stage("delete", vec![delete("/target_earth.png")])
}

/// Deleted JPEGs for carving: three contiguous, one fragmented, one renamed
/// before deletion; plus an active JPEG, a deleted dummy with a JPEG
/// embedded off a cluster boundary, and a deleted JPEG whose first clusters
/// were reused by a later file.
pub fn carving(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cs = 1024u64;
    let size = 8u64 << 20;
    let chunk = 400u32;
    let mut sz = |lo: u64, hi: u64| rng.gen_range(lo * cs..hi * cs) + 1;
    let mut ops = vec![
        create("/active.jpg", ContentKind::Jpeg, sz(10, 30), seed + 1),
        create("/alpha.jpg", ContentKind::Jpeg, sz(10, 40), seed + 2),
        create("/bravo.jpg", ContentKind::Jpeg, sz(10, 40), seed + 3),
        create("/charlie.jpg", ContentKind::Jpeg, sz(10, 40), seed + 4),
        create("/renamed.jpg", ContentKind::Jpeg, sz(10, 40), seed + 5),
        create("/embedded.bin", ContentKind::EmbeddedJpeg, sz(12, 20), seed + 6),
        create("/overwritten.jpg", ContentKind::Jpeg, sz(20, 30), seed + 7),
    ];
    ops.push(Op::Fill {
        dir: "/".into(),
        pattern: 0,
        chunk,
        reserve: FILL_RESERVE,
    });
    let mut s = Scenario::new(VolumeParams::new(size, cs as u32).label("CARVING")).stage("populate", ops);
    let frag = (u64::from(chunk + FILL_RESERVE) + 40) * cs + 77;
    s = s.stage(
        "fragment",
        vec![
            Op::DeleteMatching {
                prefix: "/dummy".into(),
                every: 2,
                offset: 1,
            },
            create("/fragmented.jpg", ContentKind::Jpeg, frag, seed + 8),
        ],
    );
    s.stage(
        "delete",
        vec![
            Op::Rename {
                path: "/renamed.jpg".into(),
                name: "renamed_to_a_longer_name.jpg".into(),
            },
            delete("/alpha.jpg"),
            delete("/bravo.jpg"),
            delete("/charlie.jpg"),
            delete("/fragmented.jpg"),
            delete("/renamed_to_a_longer_name.jpg"),
            delete("/embedded.bin"),
            delete("/overwritten.jpg"),
            // lands on the first free run: the start of alpha.jpg
            create("/reuse.txt", ContentKind::Text, 3 * cs, seed + 9),
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::replay;

    #[test]
    fn protocol_has_seven_snapshots() {
        let r = replay(&protocol(3)).unwrap();
        assert_eq!(r.snapshots.len(), 7);
        assert_eq!(r.snapshots[0].name, "format");
    }
}
