//! Directory tree walking, including inactive subtrees.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{assemble_sets, parse_records, FileEntrySet, ParsedRecord, SetId, SpecialRootEntry};
use crate::fat::FatTable;
use crate::volume::{cluster_to_offset, read_cluster, VolumeGeometry, VolumeImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WalkOptions {
    /// Scan every record of every directory cluster instead of stopping at
    /// the first end marker, and descend into inactive directories.
    pub include_inactive: bool,
}

impl Default for WalkOptions {
    fn default() -> Self {
        WalkOptions { include_inactive: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Directory {
    pub first_cluster: u32,
    pub path: String,
    /// The set describing this directory in its parent; `None` for the root.
    pub owner: Option<SetId>,
    /// Reached through an inactive directory set somewhere above.
    pub from_inactive_directory: bool,
    pub clusters: Vec<u32>,
    pub sets: Vec<FileEntrySet>,
    pub orphans: Vec<ParsedRecord>,
    pub specials: Vec<SpecialRootEntry>,
    /// Unreadable clusters and similar problems met while walking.
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, Default)]
struct TreeIndex {
    by_id: HashMap<SetId, (usize, usize)>,
    by_first_cluster: BTreeMap<u32, Vec<SetId>>,
    active_owner: HashMap<u32, SetId>,
}

/// Every directory reached from the root, in walk order, with lookup
/// indexes over the sets they hold.
#[derive(Debug, Clone)]
pub struct DirectoryTree {
    directories: Vec<Directory>,
    index: TreeIndex,
}

struct Pending {
    first_cluster: u32,
    clusters: Vec<u32>,
    path: String,
    owner: Option<SetId>,
    from_inactive: bool,
}

fn join(parent: &str, name: &str) -> String {
    if parent == "/" {
        format!("/{name}")
    } else {
        format!("{parent}/{name}")
    }
}

fn read_directory(image: &VolumeImage, geom: &VolumeGeometry, p: &Pending, opts: WalkOptions) -> Directory {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    'clusters: for &cn in &p.clusters {
        let (bytes, base) = match read_cluster(image, geom, cn).and_then(|b| Ok((b, cluster_to_offset(geom, cn)?))) {
            Ok(v) => v,
            Err(e) => {
                errors.push(format!("cluster {cn}: {e}"));
                continue;
            }
        };
        let recs = parse_records(&bytes, base, p.first_cluster, false);
        for r in recs {
            if !opts.include_inactive && r.kind == super::RecordKind::EndMarker {
                break 'clusters;
            }
            records.push(r);
        }
    }
    let assembled = assemble_sets(&records);
    let mut sets = assembled.sets;
    for s in &mut sets {
        s.from_inactive_directory = p.from_inactive;
    }
    Directory {
        first_cluster: p.first_cluster,
        path: p.path.clone(),
        owner: p.owner,
        from_inactive_directory: p.from_inactive,
        clusters: p.clusters.clone(),
        sets,
        orphans: assembled.orphans,
        specials: assembled.specials,
        errors,
    }
}

/// Walks the directory tree from the root cluster.
///
/// Active directories are visited first, breadth first, so a directory
/// reachable both through an active and an inactive set is attributed to
/// the active one. Each directory cluster is visited once.
pub fn walk_tree(image: &VolumeImage, geom: &VolumeGeometry, fat: &FatTable, opts: WalkOptions) -> DirectoryTree {
    let root = geom.root_first_cluster;
    let mut active_q = VecDeque::new();
    let mut inactive_q: VecDeque<Pending> = VecDeque::new();
    let mut visited = HashSet::new();
    visited.insert(root);
    active_q.push_back(Pending {
        first_cluster: root,
        clusters: fat.walk_chain(root, fat.cell_count()).clusters,
        path: "/".to_string(),
        owner: None,
        from_inactive: false,
    });

    let mut directories = Vec::new();
    loop {
        let p = match active_q.pop_front() {
            Some(p) => p,
            None => {
                // inactive directories are claimed only once every active one is known
                let Some(p) = inactive_q.pop_front() else { break };
                if !visited.insert(p.first_cluster) {
                    continue;
                }
                p
            }
        };
        let dir = read_directory(image, geom, &p, opts);
        for s in &dir.sets {
            if !s.is_directory() || !geom.contains_cluster(s.first_cluster) {
                continue;
            }
            if !s.active && !opts.include_inactive {
                continue;
            }
            let child = Pending {
                first_cluster: s.first_cluster,
                clusters: s.extent(geom, fat).clusters,
                path: join(&p.path, &s.name),
                owner: Some(s.id),
                from_inactive: p.from_inactive || !s.active,
            };
            if child.from_inactive {
                inactive_q.push_back(child);
            } else if visited.insert(s.first_cluster) {
                active_q.push_back(child);
            }
        }
        directories.push(dir);
    }
    DirectoryTree::from_directories(directories, geom, fat)
}

impl DirectoryTree {
    /// Builds a tree (and its indexes) from already-read directories.
    pub fn from_directories(directories: Vec<Directory>, geom: &VolumeGeometry, fat: &FatTable) -> Self {
        let mut index = TreeIndex::default();
        for (di, dir) in directories.iter().enumerate() {
            for (si, set) in dir.sets.iter().enumerate() {
                index.by_id.insert(set.id, (di, si));
                if set.first_cluster != 0 {
                    index
                        .by_first_cluster
                        .entry(set.first_cluster)
                        .or_default()
                        .push(set.id);
                }
                if set.active && !set.from_inactive_directory {
                    for c in set.extent(geom, fat).clusters {
                        index.active_owner.entry(c).or_insert(set.id);
                    }
                }
            }
        }
        for ids in index.by_first_cluster.values_mut() {
            ids.sort();
        }
        DirectoryTree { directories, index }
    }

    pub fn directories(&self) -> &[Directory] {
        &self.directories
    }

    pub fn root(&self) -> Option<&Directory> {
        self.directories.first()
    }

    pub fn sets(&self) -> impl Iterator<Item = &FileEntrySet> {
        self.directories.iter().flat_map(|d| d.sets.iter())
    }

    pub fn active_sets(&self) -> impl Iterator<Item = &FileEntrySet> {
        self.sets().filter(|s| s.active && !s.from_inactive_directory)
    }

    pub fn inactive_sets(&self) -> impl Iterator<Item = &FileEntrySet> {
        self.sets().filter(|s| !s.active || s.from_inactive_directory)
    }

    pub fn get(&self, id: SetId) -> Option<&FileEntrySet> {
        self.index.by_id.get(&id).map(|&(d, s)| &self.directories[d].sets[s])
    }

    pub fn directory_of(&self, id: SetId) -> Option<&Directory> {
        self.index.by_id.get(&id).map(|&(d, _)| &self.directories[d])
    }

    pub fn directory_by_path(&self, path: &str) -> Option<&Directory> {
        let path = if path.len() > 1 {
            path.trim_end_matches('/')
        } else {
            path
        };
        self.directories.iter().find(|d| d.path == path)
    }

    pub fn path_of(&self, id: SetId) -> Option<String> {
        let dir = self.directory_of(id)?;
        let set = self.get(id)?;
        Some(join(&dir.path, &set.name))
    }

    /// Every set (active or not) whose stream extension names `cn` as
    /// first cluster, ordered by location.
    pub fn sets_with_first_cluster(&self, cn: u32) -> impl Iterator<Item = &FileEntrySet> {
        self.index
            .by_first_cluster
            .get(&cn)
            .into_iter()
            .flatten()
            .filter_map(|id| self.get(*id))
    }

    /// The active set whose content covers cluster `cn`, if any.
    pub fn active_owner(&self, cn: u32) -> Option<SetId> {
        self.index.active_owner.get(&cn).copied()
    }

    /// The set recorded after `id` in the same directory.
    pub fn next_set_in_directory(&self, id: SetId) -> Option<&FileEntrySet> {
        let &(d, s) = self.index.by_id.get(&id)?;
        self.directories[d].sets.get(s + 1)
    }
}
