use exfat_forensic::fat::ChainEnd;
use exfat_forensic::forge::{generate, Clock, ContentKind, Forge, VolumeParams};
use exfat_forensic::recovery::{chain_sanity, recover, recover_shortened_tail, Integrity, Provenance};
use exfat_forensic::{Check, DirectoryTree, FileEntrySet, FillPolicy, Volume, WalkOptions};

const CS: u64 = 1024;

fn forge() -> Forge {
    Forge::format(VolumeParams::new(1 << 20, CS as u32), Clock::default()).unwrap()
}

fn text(size: u64, seed: u64) -> Vec<u8> {
    generate(ContentKind::Text, size, seed)
}

fn analyze(f: &Forge) -> (Volume, DirectoryTree) {
    let vol = Volume::from_bytes(f.image().to_vec()).unwrap();
    let tree = vol.walk(WalkOptions::default());
    (vol, tree)
}

fn inactive<'t>(tree: &'t DirectoryTree, name: &str) -> &'t FileEntrySet {
    tree.inactive_sets().find(|s| s.name == name).unwrap()
}

/// Clusters 5 to 49 taken, so the next file starts at cluster 50.
fn forge_at_50() -> Forge {
    let mut f = forge();
    f.create_file("/filler.bin", vec![0; 45 * CS as usize]).unwrap();
    f
}

#[test]
fn deleted_contiguous_file() {
    let mut f = forge_at_50();
    let data = text(3000, 1);
    f.create_file("/x.txt", data.clone()).unwrap();
    f.delete("/x.txt").unwrap();
    let (vol, tree) = analyze(&f);
    let rec = recover(inactive(&tree, "x.txt"), &vol, Some(&tree), FillPolicy::default()).unwrap();
    assert_eq!(rec.cluster_numbers(), [50, 51, 52]);
    assert_eq!(rec.length, 3000);
    assert_eq!(rec.integrity, Integrity::Complete);
    assert_eq!(rec.content, data);
}

/// x.txt at 50..52 deleted, then cluster 51 reused by a live file.
fn overwritten_middle() -> (Forge, Vec<u8>) {
    let mut f = forge_at_50();
    let data = text(3000, 1);
    f.create_file("/x.txt", data.clone()).unwrap();
    f.delete("/x.txt").unwrap();
    f.create_file("/y.txt", text(100, 2)).unwrap();
    f.create_file("/z.txt", text(100, 3)).unwrap();
    f.delete("/y.txt").unwrap();
    (f, data)
}

#[test]
fn overwritten_cluster_per_policy() {
    let (f, data) = overwritten_middle();
    let (vol, tree) = analyze(&f);
    let set = inactive(&tree, "x.txt");
    let prov = |p: FillPolicy| {
        let r = recover(set, &vol, Some(&tree), p).unwrap();
        (r.clusters.iter().map(|c| c.provenance).collect::<Vec<_>>(), r)
    };

    let (p, flagged) = prov(FillPolicy::IncludeFlagged);
    assert_eq!(p, [Provenance::Clean, Provenance::Overwritten, Provenance::Clean]);
    assert_eq!(flagged.integrity, Integrity::Partial);
    assert!(flagged
        .findings
        .iter()
        .any(|x| x.check == Check::BitmapCluster && x.clusters == [51]));

    let (p, zeroed) = prov(FillPolicy::SubstituteZero);
    assert_eq!(p, [Provenance::Clean, Provenance::Substituted, Provenance::Clean]);
    assert_eq!(zeroed.length, 3000);
    assert!(zeroed.content[1024..2048].iter().all(|&b| b == 0));
    assert_eq!(zeroed.content[2048..], data[2048..]);

    let (_, skipped) = prov(FillPolicy::Skip);
    assert_eq!(skipped.length, 3000 - CS);
    assert_eq!(skipped.content[1024..], data[2048..]);
}

#[test]
fn empty_file_is_complete() {
    let mut f = forge();
    f.create_file("/empty.txt", Vec::new()).unwrap();
    f.delete("/empty.txt").unwrap();
    let (vol, tree) = analyze(&f);
    let rec = recover(inactive(&tree, "empty.txt"), &vol, Some(&tree), FillPolicy::default()).unwrap();
    assert!(rec.content.is_empty());
    assert_eq!(rec.integrity, Integrity::Complete);
}

/// a, b, c one after the other and a filler leaving five clusters free at
/// the end; b deleted; then an eight-cluster file takes b's three clusters
/// plus the last five.
fn fragmented_deleted() -> (Forge, Vec<u8>) {
    let mut f = forge();
    f.create_file("/a.txt", text(4 * CS, 1)).unwrap();
    f.create_file("/b.txt", text(3 * CS, 2)).unwrap();
    f.create_file("/c.txt", text(4 * CS, 3)).unwrap();
    let rest = u64::from(f.free_clusters()) - 5;
    f.create_file("/filler.bin", vec![0; (rest * CS) as usize]).unwrap();
    f.delete("/b.txt").unwrap();
    let data = text(8 * CS - 10, 4);
    f.create_file("/frag.txt", data.clone()).unwrap();
    f.delete("/frag.txt").unwrap();
    (f, data)
}

#[test]
fn consistent_chain_has_no_findings() {
    let (f, data) = fragmented_deleted();
    let (vol, tree) = analyze(&f);
    let set = inactive(&tree, "frag.txt");
    assert!(!set.no_fat_chain);
    let chain = vol.fat.walk_chain(set.first_cluster, 8);
    assert_eq!(chain.fragments().len(), 2);
    assert!(chain_sanity(set, &chain, Some(&tree), &vol).is_empty());
    let rec = recover(set, &vol, Some(&tree), FillPolicy::default()).unwrap();
    assert_eq!(rec.content, data);
    assert_eq!(rec.integrity, Integrity::Complete);
}

#[test]
fn chain_reused_by_active_file() {
    let (mut f, _) = fragmented_deleted();
    f.create_file("/new.txt", text(2 * CS, 5)).unwrap();
    let (vol, tree) = analyze(&f);
    let set = inactive(&tree, "frag.txt");
    let chain = vol.fat.walk_chain(set.first_cluster, 8);
    let findings = chain_sanity(set, &chain, Some(&tree), &vol);
    assert!(
        findings.iter().any(|x| x.check == Check::ReusedByActive),
        "{findings:?}"
    );
    let rec = recover(set, &vol, Some(&tree), FillPolicy::default()).unwrap();
    assert_eq!(rec.integrity, Integrity::Partial);
}

#[test]
fn zeroed_cell_cuts_the_chain() {
    let (f, _) = fragmented_deleted();
    let (vol, tree) = analyze(&f);
    let set = inactive(&tree, "frag.txt").clone();
    let chain = vol.fat.walk_chain(set.first_cluster, 8);
    // a later file reusing the clusters would have rewritten this cell
    let mut image = f.image().to_vec();
    let at = f.layout().fat_cell_offset(chain.clusters[3]) as usize;
    image[at..at + 4].copy_from_slice(&0u32.to_le_bytes());
    let vol = Volume::from_bytes(image).unwrap();
    let tree = vol.walk(WalkOptions::default());
    let rec = recover(&set, &vol, Some(&tree), FillPolicy::default()).unwrap();
    assert_eq!(rec.integrity, Integrity::Partial);
    assert_eq!(rec.chain_end, Some(ChainEnd::ZeroCell));
    assert_eq!(rec.cluster_numbers(), chain.clusters[..4]);
    assert!(rec.findings.iter().any(|x| x.check == Check::ChainShort));
}

#[test]
fn single_cluster_chain_is_truncated() {
    let mut f = forge();
    let data = text(500, 9);
    f.create_file("/one.txt", data.clone()).unwrap();
    f.delete("/one.txt").unwrap();
    let (_, tree) = analyze(&f);
    let set = inactive(&tree, "one.txt").clone();
    // turn it into a chained file whose only cell is end of chain
    let mut image = f.image().to_vec();
    image[set.id.record_offset as usize + 32 + 1] = 0x01;
    let at = f.layout().fat_cell_offset(set.first_cluster) as usize;
    image[at..at + 4].copy_from_slice(&u32::MAX.to_le_bytes());
    let vol = Volume::from_bytes(image).unwrap();
    let tree = vol.walk(WalkOptions::default());
    let set = inactive(&tree, "one.txt");
    assert!(!set.no_fat_chain);
    let rec = recover(set, &vol, Some(&tree), FillPolicy::default()).unwrap();
    assert_eq!(rec.cluster_numbers(), [set.first_cluster]);
    assert_eq!(rec.chain_end, Some(ChainEnd::EndOfChainMarker));
    assert_eq!(rec.content, data);
    assert_eq!(rec.integrity, Integrity::Complete);
}

#[test]
fn no_tail_when_next_cluster_allocated() {
    let mut f = forge();
    f.create_file("/a.txt", text(2 * CS, 1)).unwrap();
    f.create_file("/b.txt", text(2 * CS, 2)).unwrap();
    let (vol, tree) = analyze(&f);
    let a = tree.active_sets().find(|s| s.name == "a.txt").unwrap();
    let rec = recover_shortened_tail(a, &vol, &tree).unwrap();
    assert!(rec.clusters.is_empty());
    assert_eq!(rec.integrity, Integrity::TailSpeculative);
    assert!(rec.findings.iter().any(|x| x.check == Check::NoCandidateRun));
}

#[test]
fn tail_stops_at_another_deleted_file() {
    let mut f = forge();
    f.create_file("/a.txt", text(4 * CS, 1)).unwrap();
    f.create_file("/b.txt", text(2 * CS, 2)).unwrap();
    f.create_file("/c.txt", text(CS, 3)).unwrap();
    f.delete("/b.txt").unwrap();
    f.shorten("/a.txt", exfat_forensic::forge::ShortenTo::Bytes(CS))
        .unwrap();
    let (vol, tree) = analyze(&f);
    let a = tree.active_sets().find(|s| s.name == "a.txt").unwrap();
    let b = inactive(&tree, "b.txt");
    let rec = recover_shortened_tail(a, &vol, &tree).unwrap();
    let expected: Vec<u32> = (a.first_cluster + 1..b.first_cluster).collect();
    assert_eq!(rec.cluster_numbers(), expected);
    assert!(rec.findings.iter().any(|x| x.check == Check::ClaimedByInactive));
}
