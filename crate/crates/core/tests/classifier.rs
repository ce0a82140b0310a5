use exfat_forensic::classifier::{classify, classify_all, find_similar, SimilarityCriteria, Verdict};
use exfat_forensic::forge::{generate, Clock, ContentKind, Forge, VolumeParams};
use exfat_forensic::{Check, DirectoryTree, Volume, WalkOptions};

fn forge() -> Forge {
    let mut f = Forge::format(VolumeParams::new(1 << 20, 1024), Clock::default()).unwrap();
    f.create_dir("/d").unwrap();
    f.create_file("/a.jpg", generate(ContentKind::Jpeg, 5000, 1)).unwrap();
    f
}

fn analyze(f: &Forge) -> (Volume, DirectoryTree) {
    let vol = Volume::from_bytes(f.image().to_vec()).unwrap();
    let tree = vol.walk(WalkOptions::default());
    (vol, tree)
}

#[test]
fn deleted() {
    let mut f = forge();
    f.delete("/a.jpg").unwrap();
    let (vol, tree) = analyze(&f);
    let v = classify_all(&tree, &vol.bitmap);
    assert_eq!(v.len(), 1);
    assert_eq!(v[0].verdict, Verdict::Deleted);
    assert!(v[0]
        .evidence
        .iter()
        .any(|e| e.check == Check::BitmapFirstCluster && e.result == "unallocated"));
}

#[test]
fn moved_and_renamed() {
    let mut f = forge();
    f.create_file("/b.jpg", generate(ContentKind::Jpeg, 3000, 2)).unwrap();
    f.move_to("/a.jpg", "/d").unwrap();
    f.rename("/b.jpg", "b_with_a_much_longer_name.jpg").unwrap();
    let (vol, tree) = analyze(&f);
    let v = classify_all(&tree, &vol.bitmap);
    let of = |name: &str| v.iter().find(|x| tree.get(x.set).unwrap().name == name).unwrap();
    assert_eq!(of("a.jpg").verdict, Verdict::Moved);
    assert_eq!(tree.path_of(of("a.jpg").matched_set.unwrap()).unwrap(), "/d/a.jpg");
    assert_eq!(of("b.jpg").verdict, Verdict::Renamed);
}

#[test]
fn new_file_on_the_same_first_cluster() {
    let mut f = forge();
    f.delete("/a.jpg").unwrap();
    f.create_file("/new.txt", generate(ContentKind::Text, 2000, 3)).unwrap();
    let (vol, tree) = analyze(&f);
    let set = tree.inactive_sets().next().unwrap();
    let v = classify(set, &tree, &vol.bitmap);
    assert_eq!(v.verdict, Verdict::Indeterminate);
    assert!(v
        .evidence
        .iter()
        .any(|e| e.check == Check::ConflictingMatches && e.result.contains("reused")));
}

#[test]
fn first_cluster_inside_another_file() {
    let mut f = Forge::format(VolumeParams::new(1 << 20, 1024), Clock::default()).unwrap();
    f.create_file("/s.txt", vec![b's'; 1000]).unwrap();
    f.create_file("/a.jpg", generate(ContentKind::Jpeg, 5000, 1)).unwrap();
    f.delete("/s.txt").unwrap();
    f.delete("/a.jpg").unwrap();
    f.create_file("/new.txt", generate(ContentKind::Text, 3000, 3)).unwrap();
    let (vol, tree) = analyze(&f);
    let set = tree.inactive_sets().find(|s| s.name == "a.jpg").unwrap();
    let v = classify(set, &tree, &vol.bitmap);
    assert_eq!(v.verdict, Verdict::Indeterminate);
    let owner = tree.active_sets().find(|s| s.name == "new.txt").unwrap().id;
    assert!(v
        .evidence
        .iter()
        .any(|e| e.check == Check::ClusterReused && e.sets == [owner]));
}

#[test]
fn same_and_other_folder_matches_conflict() {
    let mut f = forge();
    f.move_to("/a.jpg", "/d").unwrap();
    let (vol, tree) = analyze(&f);
    // add an active same-folder twin with another name next to the inactive set
    let mut dirs = tree.directories().to_vec();
    let inactive = tree.inactive_sets().next().unwrap().clone();
    let mut twin = tree.active_sets().find(|s| s.name == "a.jpg").unwrap().clone();
    twin.id = inactive.id;
    twin.id.record_offset += 0x800;
    twin.name = "a_copy_with_longer_name.jpg".into();
    let root = dirs.iter_mut().find(|d| d.path == "/").unwrap();
    root.sets.push(twin);
    let tree = DirectoryTree::from_directories(dirs, &vol.geometry, &vol.fat);
    let v = classify(&inactive, &tree, &vol.bitmap);
    assert_eq!(v.verdict, Verdict::Indeterminate);
    assert!(v
        .evidence
        .iter()
        .any(|e| e.check == Check::ConflictingMatches && e.sets.len() == 2));
}

#[test]
fn history_of_a_cluster() {
    let mut f = forge();
    f.rename("/a.jpg", "a_renamed_to_something_longer.jpg").unwrap();
    f.delete("/a_renamed_to_something_longer.jpg").unwrap();
    let (vol, tree) = analyze(&f);
    let v = classify_all(&tree, &vol.bitmap);
    assert_eq!(v.len(), 2);
    assert!(v.iter().all(|x| x.verdict == Verdict::Deleted));
    assert!(v.iter().all(|x| x.history.len() == 1));
    let first = tree.inactive_sets().next().unwrap();
    let similar = find_similar(first, &tree, SimilarityCriteria::ALL);
    assert_eq!(similar.len(), 1);
}
