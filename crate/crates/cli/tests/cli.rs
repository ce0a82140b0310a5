use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use exfat_forensic::forge::{fixtures, replay, Scenario};
use exfat_forensic::report::Report;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_exfat-forensic"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn forged(dir: &Path, scenario: Scenario) -> PathBuf {
    let path = dir.join("image.img");
    std::fs::write(&path, replay(&scenario).unwrap().image).unwrap();
    path
}

#[test]
fn bitmap_query_on_tail_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let img = forged(dir.path(), fixtures::shortened_tail());
    let img = img.to_str().unwrap();
    assert_eq!(
        stdout(&["bitmap", img, "--cluster", "532"]).trim(),
        "cluster 532: unallocated"
    );
    assert_eq!(
        stdout(&["bitmap", img, "--cluster", "531"]).trim(),
        "cluster 531: allocated"
    );
    assert!(stdout(&["bitmap", img, "--runs"]).contains("532..535 (4 clusters)"));
}

#[test]
fn fatchain_on_replica() {
    let dir = tempfile::tempdir().unwrap();
    let img = forged(dir.path(), fixtures::fragmented_replica());
    let out = stdout(&["fatchain", img.to_str().unwrap(), "--cluster", "9461"]);
    assert!(out.starts_with("0x24F5 0x24F6 0x24F7 "), "{out}");
    assert!(out.contains("ended by EndOfChainMarker"));
}

#[test]
fn recover_writes_content_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let r = replay(&fixtures::fragmented_replica()).unwrap();
    let img = dir.path().join("image.img");
    std::fs::write(&img, &r.image).unwrap();
    let out = dir.path().join("out");
    let earth = r.manifest.file("/target_earth.png").unwrap();
    let target = earth.former_sets[0].set.to_string();
    let json = stdout(&[
        "--json",
        "recover",
        img.to_str().unwrap(),
        "--target",
        &target,
        "--out",
        out.to_str().unwrap(),
    ]);
    let report: Report = serde_json::from_str(&json).unwrap();
    assert_eq!(report.recoveries.len(), 1);
    let name = &report.outputs[0].name;
    assert!(name.ends_with("_target_earth.png"), "{name}");
    let content = std::fs::read(out.join(name)).unwrap();
    assert_eq!(content, earth.content);
    assert!(out.join(format!("{name}.json")).exists());
}

#[test]
fn json_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let img = forged(dir.path(), fixtures::protocol(2));
    let json = stdout(&["--json", "--deterministic", "classify", img.to_str().unwrap()]);
    let report: Report = serde_json::from_str(&json).unwrap();
    assert!(report.generated_at.is_none() && report.image.path.is_none());
    assert!(!report.verdicts.is_empty());
    assert_eq!(report.to_json() + "\n", json);
}

#[test]
fn forge_subcommand_writes_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let scn = dir.path().join("s.scn");
    std::fs::write(
        &scn,
        "volume size=2M cluster=1024\nstage one\ncreate /a.jpg jpeg size=5000 seed=1\nstage two\ndelete /a.jpg\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    stdout(&["forge", scn.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(out.join("image.img").exists() && out.join("manifest.json").exists());
    let snaps = std::fs::read_dir(out.join("snapshots")).unwrap().count();
    assert_eq!(snaps, 3);
    let ls = stdout(&["ls", out.join("image.img").to_str().unwrap(), "--include-inactive"]);
    assert!(ls.contains("deleted") && ls.contains("/a.jpg"), "{ls}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.img");
    std::fs::write(&junk, vec![0u8; 4096]).unwrap();
    assert_eq!(run(&["info", junk.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(
        run(&["info", dir.path().join("missing").to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(run(&["info"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    let img = forged(dir.path(), fixtures::shortened_tail());
    let bad = run(&["recover", img.to_str().unwrap(), "--target", "nope", "--out", "x"]);
    assert_eq!(bad.status.code(), Some(1));
    // a missing catalog is the caller's mistake, not the evidence's
    let out = dir.path().join("carved");
    let missing = dir.path().join("no-such-catalog");
    let carve = run(&[
        "carve",
        img.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--signatures",
        missing.to_str().unwrap(),
    ]);
    assert_eq!(carve.status.code(), Some(1));
}

#[test]
fn first_cluster_target_recovers_every_set_starting_there() {
    let dir = tempfile::tempdir().unwrap();
    let img = forged(dir.path(), fixtures::fragmented_replica());
    let out = dir.path().join("out");
    let json = stdout(&[
        "--json",
        "recover",
        img.to_str().unwrap(),
        "--target",
        "9461",
        "--out",
        out.to_str().unwrap(),
    ]);
    let report: Report = serde_json::from_str(&json).unwrap();
    let mut names: Vec<&str> = report.recoveries.iter().map(|r| r.metadata.name.as_str()).collect();
    names.sort();
    // the deleted gap file started where the later file was allocated
    assert_eq!(names, ["gap.bin", "target_earth.png"]);
}
