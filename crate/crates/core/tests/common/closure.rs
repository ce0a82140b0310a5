//! Forge a scenario, analyze the images it produced, and compare with the
//! forge's manifest. Each check returns a description of the first
//! disagreement.
#![allow(dead_code)]

use exfat_forensic::carver::{carve_all, CarveOptions, Signature};
use exfat_forensic::classifier::{classify, Verdict};
use exfat_forensic::forge::fixtures::{
    self, FRAGMENTED_JPEG, FRAGMENTED_TEXT, STAGE_DELETE, STAGE_RENAME_MOVE, STAGE_SHORTEN,
};
use exfat_forensic::forge::{replay, FormerReason, Manifest, Replay};
use exfat_forensic::recovery::{recover, recover_chained, recover_shortened_tail, Integrity, RecoveryMethod};
use exfat_forensic::{Check, DirectoryTree, FillPolicy, Volume, WalkOptions};

pub type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn open(r: &Replay, stage: &str) -> Result<(Volume, DirectoryTree), String> {
    let snap = r.snapshot(stage).ok_or(format!("no snapshot {stage}"))?;
    let vol = Volume::from_bytes(snap.image.clone()).map_err(|e| format!("{stage}: {e}"))?;
    let tree = vol.walk(WalkOptions::default());
    Ok((vol, tree))
}

fn stage_of(m: &Manifest, op: usize) -> &str {
    &m.operations[op].stage
}

/// Every file deleted in the deletion stage comes back byte-identical.
fn deleted_files_recover(r: &Replay) -> Result<usize, String> {
    let m = &r.manifest;
    let (vol, tree) = open(r, STAGE_DELETE)?;
    let mut n = 0;
    for f in &m.files {
        for former in f.former_sets.iter().filter(|s| s.reason == FormerReason::Deleted) {
            if stage_of(m, former.op) != STAGE_DELETE || f.is_dir {
                continue;
            }
            let set = tree
                .get(former.set)
                .ok_or(format!("{}: set {} not found", f.path, former.set))?;
            ensure!(!set.active, "{}: set still active", f.path);
            let rec =
                recover(set, &vol, Some(&tree), FillPolicy::SubstituteZero).map_err(|e| format!("{}: {e}", f.path))?;
            ensure!(
                rec.integrity == Integrity::Complete,
                "{}: integrity {:?}",
                f.path,
                rec.integrity
            );
            ensure!(
                rec.content == f.content,
                "{}: content differs ({} vs {} bytes)",
                f.path,
                rec.content.len(),
                f.content.len()
            );
            if f.path == FRAGMENTED_JPEG {
                ensure!(
                    rec.method == RecoveryMethod::FatChain,
                    "{}: recovered by {:?}",
                    f.path,
                    rec.method
                );
            }
            if f.path == FRAGMENTED_TEXT {
                // shortened to its first fragment, so the entry says contiguous;
                // the stale chain must agree
                let chained =
                    recover_chained(set, &vol, Some(&tree), FillPolicy::SubstituteZero).map_err(|e| e.to_string())?;
                ensure!(chained.content == f.content, "{}: chained recovery differs", f.path);
            }
            n += 1;
        }
    }
    ensure!(n >= 4, "only {n} files deleted in {STAGE_DELETE}");
    Ok(n)
}

/// Sets left behind by renames and moves are never taken for deletions.
fn moves_and_renames_classify(r: &Replay, stage: &str) -> Result<usize, String> {
    let m = &r.manifest;
    let (vol, tree) = open(r, stage)?;
    let mut n = 0;
    for set in tree.inactive_sets() {
        let Some((f, former)) = m.former(set.id) else { continue };
        let expected = match former.reason {
            FormerReason::Moved => Verdict::Moved,
            FormerReason::Renamed => Verdict::Renamed,
            FormerReason::Deleted => continue,
        };
        if stage_of(m, former.op) != STAGE_RENAME_MOVE {
            continue;
        }
        let v = classify(set, &tree, &vol.bitmap);
        ensure!(
            v.verdict == expected,
            "{stage}: {} ({}) classified {:?}, expected {:?}",
            former.name,
            f.path,
            v.verdict,
            expected
        );
        n += 1;
    }
    ensure!(n == 4, "{stage}: {n} renamed or moved sets found, expected 4");
    Ok(n)
}

/// The released tail of the shortened file comes back through the stale FAT.
fn tail_recovers(r: &Replay) -> Result<usize, String> {
    let m = &r.manifest;
    let f = m.file(FRAGMENTED_TEXT).ok_or("no shortened file")?;
    let tail = f.released_tail.as_ref().ok_or("file was not shortened")?;
    let set_id = f
        .former_sets
        .iter()
        .find(|s| stage_of(m, s.op) == STAGE_DELETE)
        .ok_or("shortened file was not deleted later")?
        .set;
    let (vol, tree) = open(r, STAGE_SHORTEN)?;
    let set = tree.get(set_id).ok_or("shortened set not found")?;
    ensure!(
        set.active && set.file_size == f.size,
        "shortened set does not match the manifest"
    );
    let rec = recover_shortened_tail(set, &vol, &tree).map_err(|e| e.to_string())?;
    ensure!(
        rec.method == RecoveryMethod::StaleFatChain,
        "tail recovered by {:?}",
        rec.method
    );
    ensure!(
        rec.integrity == Integrity::TailSpeculative,
        "tail integrity {:?}",
        rec.integrity
    );
    ensure!(
        rec.cluster_numbers() == tail.clusters,
        "tail clusters {:?}, expected {:?}",
        rec.cluster_numbers(),
        tail.clusters
    );
    let cs = u64::from(vol.geometry.cluster_size_bytes);
    let from = (f.size.div_ceil(cs) * cs) as usize;
    let expected = &tail.previous_content[from..];
    ensure!(
        rec.content.len() >= expected.len() && &rec.content[..expected.len()] == expected,
        "tail content differs"
    );
    Ok(tail.clusters.len())
}

pub fn protocol(seed: u64) -> Outcome {
    let r = replay(&fixtures::protocol(seed)).map_err(|e| format!("seed {seed}: replay: {e}"))?;
    let m = &r.manifest;
    for p in [FRAGMENTED_TEXT, FRAGMENTED_JPEG] {
        ensure!(
            m.file(p).is_some_and(|f| f.was_fragmented()),
            "seed {seed}: {p} never fragmented"
        );
    }
    let deleted = deleted_files_recover(&r).map_err(|e| format!("seed {seed}: {e}"))?;
    let mut classified = 0;
    for stage in [STAGE_RENAME_MOVE, STAGE_DELETE] {
        classified += moves_and_renames_classify(&r, stage).map_err(|e| format!("seed {seed}: {e}"))?;
    }
    let tail = tail_recovers(&r).map_err(|e| format!("seed {seed}: {e}"))?;
    Ok(format!(
        "{deleted} deleted, {classified} move/rename verdicts, {tail} tail clusters"
    ))
}

pub fn shortened_tail() -> Outcome {
    let r = replay(&fixtures::shortened_tail()).map_err(|e| e.to_string())?;
    let vol = Volume::from_bytes(r.image.clone()).map_err(|e| e.to_string())?;
    let tree = vol.walk(WalkOptions::default());
    let bits: Vec<bool> = (530..538).map(|c| !vol.bitmap.is_free(c)).collect();
    ensure!(
        bits == [true, true, false, false, false, false, true, true],
        "bitmap over 530..538 is {bits:?}"
    );
    let a = tree.active_sets().find(|s| s.name == "a.jpg").ok_or("a.jpg missing")?;
    let b = tree.active_sets().find(|s| s.name == "b.jpg").ok_or("b.jpg missing")?;
    ensure!(
        a.first_cluster == 530 && b.first_cluster == 536,
        "a at {}, b at {}",
        a.first_cluster,
        b.first_cluster
    );
    let rec = recover_shortened_tail(a, &vol, &tree).map_err(|e| e.to_string())?;
    ensure!(
        rec.cluster_numbers() == [532, 533, 534, 535],
        "tail {:?}",
        rec.cluster_numbers()
    );
    ensure!(
        rec.integrity == Integrity::TailSpeculative,
        "integrity {:?}",
        rec.integrity
    );
    ensure!(
        rec.findings.iter().any(|f| f.check == Check::NextEntryAdjacent),
        "no next-entry finding"
    );
    Ok("clusters 532-535, tail-speculative".into())
}

pub fn carving(seed: u64) -> Outcome {
    let r = replay(&fixtures::carving(seed)).map_err(|e| e.to_string())?;
    let m = &r.manifest;
    let vol = Volume::from_bytes(r.image.clone()).map_err(|e| e.to_string())?;
    let tree = vol.walk(WalkOptions::default());
    let report = carve_all(&vol, &tree, &[Signature::jpeg()], CarveOptions::default()).map_err(|e| e.to_string())?;
    let deleted_jpegs = m
        .files
        .iter()
        .filter(|f| f.name.ends_with(".jpg") && f.set.is_none())
        .count();
    ensure!(deleted_jpegs >= 5, "{deleted_jpegs} deleted JPEGs");
    let mut named = 0;
    let mut fragmented = false;
    for hit in &report.hits {
        for c in &hit.clusters {
            ensure!(
                vol.bitmap.is_free(*c),
                "hit at {} emits allocated cluster {c}",
                hit.start_cluster
            );
        }
        let expected = m
            .files
            .iter()
            .filter(|f| f.set.is_none() && f.clusters.first() == Some(&hit.start_cluster))
            .max_by_key(|f| (f.modified.raw, f.accessed.raw, f.created.raw));
        let Some(f) = expected else {
            ensure!(
                hit.chosen.is_none(),
                "hit at {} named without a deleted file",
                hit.start_cluster
            );
            continue;
        };
        let meta = hit
            .metadata
            .as_ref()
            .ok_or(format!("{}: no metadata attached", f.path))?;
        ensure!(
            meta.name == f.name,
            "hit at {}: name {:?}, expected {:?}",
            hit.start_cluster,
            meta.name,
            f.name
        );
        ensure!(
            (meta.created, meta.modified, meta.accessed) == (f.created, f.modified, f.accessed),
            "{}: timestamps differ",
            f.path
        );
        if f.was_fragmented() {
            ensure!(
                hit.findings.iter().any(|x| x.check == Check::SizeMismatchExplained),
                "{}: no size-mismatch-explained finding",
                f.path
            );
            ensure!(
                hit.content == f.content,
                "{}: content not completed through the FAT",
                f.path
            );
            fragmented = true;
        }
        named += 1;
    }
    ensure!(named >= 5, "only {named} hits carried a name");
    ensure!(fragmented, "the fragmented JPEG was not carved");
    Ok(format!("{} hits, {named} named", report.hits.len()))
}
