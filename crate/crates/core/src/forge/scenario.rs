//! Scripted operation timelines and their text format.
//!
//! ```text
//! # comment
//! volume size=16M cluster=1024 label=EVIDENCE
//! clock start=2016-09-30T09:00:00 step=60
//! stage add-files
//! mkdir /subfolder
//! create /photo.jpg jpeg size=40K seed=1
//! fill pattern=0x00 chunk=1500 dir=/ reserve=8
//! stage delete
//! delete /photo.jpg
//! delete-matching /dummy every=2 offset=1
//! rename /a.jpg name=a_much_longer_name.jpg
//! move /b.jpg to=/subfolder
//! shorten /notes.txt first-fragment
//! shorten /notes.txt size=4000
//! ```
//!
//! Sizes take an optional K or M suffix (binary). The formatted volume is
//! snapshot 0; each `stage` line closes the previous stage with a snapshot.

use std::collections::HashMap;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::{generate, Clock, ContentKind, Forge, Manifest, VolumeParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShortenTo {
    Bytes(u64),
    /// Keep only what fits in the file's first fragment.
    FirstFragment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum Op {
    Mkdir {
        path: String,
    },
    Create {
        path: String,
        kind: ContentKind,
        size: u64,
        seed: u64,
    },
    Fill {
        dir: String,
        pattern: u8,
        chunk: u32,
        reserve: u32,
    },
    Delete {
        path: String,
    },
    /// Deletes every `every`-th live file in a folder whose name starts
    /// with a prefix, counting from `offset`, in name order.
    DeleteMatching {
        prefix: String,
        every: usize,
        offset: usize,
    },
    Rename {
        path: String,
        name: String,
    },
    Move {
        path: String,
        to: String,
    },
    Shorten {
        path: String,
        to: ShortenTo,
    },
}

impl Op {
    pub fn apply(&self, forge: &mut Forge) -> Result<()> {
        match self {
            Op::Mkdir { path } => forge.create_dir(path).map(drop),
            Op::Create { path, kind, size, seed } => forge.create_file(path, generate(*kind, *size, *seed)).map(drop),
            Op::Fill {
                dir,
                pattern,
                chunk,
                reserve,
            } => forge.fill_free_space(dir, *pattern, *chunk, *reserve).map(drop),
            Op::Delete { path } => forge.delete(path),
            Op::DeleteMatching { prefix, every, offset } => {
                for path in forge
                    .matching(prefix)
                    .into_iter()
                    .skip(*offset)
                    .step_by((*every).max(1))
                {
                    forge.delete(&path)?;
                }
                Ok(())
            }
            Op::Rename { path, name } => forge.rename(path, name),
            Op::Move { path, to } => forge.move_to(path, to),
            Op::Shorten { path, to } => forge.shorten(path, *to),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub ops: Vec<Op>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub volume: VolumeParams,
    pub clock_start: NaiveDateTime,
    pub clock_step: i64,
    pub stages: Vec<Stage>,
}

impl Scenario {
    pub fn new(volume: VolumeParams) -> Self {
        let clock = Clock::default();
        Scenario {
            volume,
            clock_start: clock.now(),
            clock_step: 60,
            stages: Vec::new(),
        }
    }

    pub fn stage(mut self, name: impl Into<String>, ops: Vec<Op>) -> Self {
        self.stages.push(Stage { name: name.into(), ops });
        self
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub name: String,
    pub image: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct Replay {
    pub image: Vec<u8>,
    pub manifest: Manifest,
    /// The formatted volume, then one image per stage.
    pub snapshots: Vec<Snapshot>,
}

impl Replay {
    pub fn snapshot(&self, name: &str) -> Option<&Snapshot> {
        self.snapshots.iter().find(|s| s.name == name)
    }
}

pub fn replay(scenario: &Scenario) -> Result<Replay> {
    let mut forge = Forge::format(
        scenario.volume.clone(),
        Clock::new(scenario.clock_start, scenario.clock_step),
    )?;
    forge.end_stage();
    let mut snapshots = vec![Snapshot {
        name: "format".to_string(),
        image: forge.image().to_vec(),
    }];
    for stage in &scenario.stages {
        forge.begin_stage(&stage.name);
        for op in &stage.ops {
            op.apply(&mut forge)?;
        }
        forge.end_stage();
        snapshots.push(Snapshot {
            name: stage.name.clone(),
            image: forge.image().to_vec(),
        });
    }
    Ok(Replay {
        manifest: forge.manifest().clone(),
        image: forge.into_image(),
        snapshots,
    })
}

fn parse_size(s: &str) -> std::result::Result<u64, String> {
    let (num, mult) = match s.as_bytes().last() {
        Some(b'K' | b'k') => (&s[..s.len() - 1], 1u64 << 10),
        Some(b'M' | b'm') => (&s[..s.len() - 1], 1 << 20),
        Some(b'G' | b'g') => (&s[..s.len() - 1], 1 << 30),
        _ => (s, 1),
    };
    parse_int(num).map(|n| n * mult)
}

fn parse_int(s: &str) -> std::result::Result<u64, String> {
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(h) => u64::from_str_radix(h, 16),
        None => s.parse(),
    }
    .map_err(|e| format!("bad number {s:?}: {e}"))
}

struct Line<'a> {
    words: Vec<&'a str>,
    keys: HashMap<&'a str, &'a str>,
}

impl<'a> Line<'a> {
    fn split(text: &'a str) -> Self {
        let mut words = Vec::new();
        let mut keys = HashMap::new();
        for tok in text.split_whitespace() {
            match tok.split_once('=') {
                Some((k, v)) => {
                    keys.insert(k, v);
                }
                None => words.push(tok),
            }
        }
        Line { words, keys }
    }

    fn word(&self, i: usize, what: &str) -> std::result::Result<&'a str, String> {
        self.words.get(i).copied().ok_or_else(|| format!("missing {what}"))
    }

    fn key(&self, k: &str) -> std::result::Result<&'a str, String> {
        self.keys.get(k).copied().ok_or_else(|| format!("missing {k}="))
    }
}

/// Parses the scenario text format.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let mut scenario = Scenario::new(VolumeParams::new(16 << 20, 1024));
    let mut saw_volume = false;
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let content = raw.split('#').next().unwrap().trim();
        if content.is_empty() {
            continue;
        }
        let err = |reason: String| Error::Scenario { line: line_no, reason };
        let l = Line::split(content);
        let cmd = l.word(0, "command").map_err(err)?;
        let op = (|| -> std::result::Result<Option<Op>, String> {
            Ok(match cmd {
                "volume" => {
                    if saw_volume || !scenario.stages.is_empty() {
                        return Err("volume must come first and only once".into());
                    }
                    saw_volume = true;
                    let mut p = VolumeParams::new(parse_size(l.key("size")?)?, parse_size(l.key("cluster")?)? as u32);
                    if let Some(label) = l.keys.get("label") {
                        p.label = label.to_string();
                    }
                    if let Some(serial) = l.keys.get("serial") {
                        p.serial = parse_int(serial)? as u32;
                    }
                    scenario.volume = p;
                    None
                }
                "clock" => {
                    if let Some(s) = l.keys.get("start") {
                        scenario.clock_start = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
                            .map_err(|e| format!("bad start {s:?}: {e}"))?;
                    }
                    if let Some(s) = l.keys.get("step") {
                        scenario.clock_step = parse_int(s)? as i64;
                    }
                    None
                }
                "stage" => {
                    scenario.stages.push(Stage {
                        name: l.word(1, "stage name")?.to_string(),
                        ops: Vec::new(),
                    });
                    None
                }
                "mkdir" => Some(Op::Mkdir {
                    path: l.word(1, "path")?.into(),
                }),
                "create" => Some(Op::Create {
                    path: l.word(1, "path")?.into(),
                    kind: l.word(2, "content kind")?.parse()?,
                    size: parse_size(l.key("size")?)?,
                    seed: l.keys.get("seed").map_or(Ok(0), |s| parse_int(s))?,
                }),
                "fill" => Some(Op::Fill {
                    dir: l.keys.get("dir").unwrap_or(&"/").to_string(),
                    pattern: l.keys.get("pattern").map_or(Ok(0), |s| parse_int(s))? as u8,
                    chunk: parse_int(l.key("chunk")?)? as u32,
                    reserve: l.keys.get("reserve").map_or(Ok(8), |s| parse_int(s))? as u32,
                }),
                "delete" => Some(Op::Delete {
                    path: l.word(1, "path")?.into(),
                }),
                "delete-matching" => Some(Op::DeleteMatching {
                    prefix: l.word(1, "path prefix")?.into(),
                    every: l.keys.get("every").map_or(Ok(1), |s| parse_int(s))? as usize,
                    offset: l.keys.get("offset").map_or(Ok(0), |s| parse_int(s))? as usize,
                }),
                "rename" => Some(Op::Rename {
                    path: l.word(1, "path")?.into(),
                    name: l.key("name")?.into(),
                }),
                "move" => Some(Op::Move {
                    path: l.word(1, "path")?.into(),
                    to: l.key("to")?.into(),
                }),
                "shorten" => Some(Op::Shorten {
                    path: l.word(1, "path")?.into(),
                    to: if l.words.get(2) == Some(&"first-fragment") {
                        ShortenTo::FirstFragment
                    } else {
                        ShortenTo::Bytes(parse_size(l.key("size")?)?)
                    },
                }),
                other => return Err(format!("unknown command {other:?}")),
            })
        })()
        .map_err(err)?;
        if let Some(op) = op {
            if scenario.stages.is_empty() {
                scenario.stages.push(Stage {
                    name: "main".to_string(),
                    ops: Vec::new(),
                });
            }
            scenario.stages.last_mut().unwrap().ops.push(op);
        }
    }
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_commands() {
        let s = parse_scenario(
            "volume size=8M cluster=4K label=CASE\n\
             clock start=2020-01-02T03:04:06 step=2\n\
             stage one\n\
             mkdir /d\n\
             create /d/a.jpg jpeg size=10K seed=3 # trailing comment\n\
             fill pattern=0xAA chunk=100 dir=/d reserve=2\n\
             stage two\n\
             rename /d/a.jpg name=b.jpg\n\
             move /d/b.jpg to=/\n\
             shorten /b.jpg size=5000\n\
             shorten /c.txt first-fragment\n\
             delete /b.jpg\n",
        )
        .unwrap();
        assert_eq!(s.volume.size_bytes, 8 << 20);
        assert_eq!(s.volume.cluster_size, 4096);
        assert_eq!(s.volume.label, "CASE");
        assert_eq!(s.clock_step, 2);
        assert_eq!(s.stages.len(), 2);
        assert_eq!(s.stages[0].ops.len(), 3);
        assert_eq!(
            s.stages[0].ops[2],
            Op::Fill {
                dir: "/d".into(),
                pattern: 0xAA,
                chunk: 100,
                reserve: 2
            }
        );
        assert_eq!(
            s.stages[1].ops[3],
            Op::Shorten {
                path: "/c.txt".into(),
                to: ShortenTo::FirstFragment
            }
        );
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse_scenario("volume size=1M cluster=1K\n\nfrobnicate /x\n").unwrap_err();
        assert!(matches!(e, Error::Scenario { line: 3, .. }), "{e}");
        let e = parse_scenario("create /x jpeg\n").unwrap_err();
        assert!(matches!(e, Error::Scenario { line: 1, .. }), "{e}");
    }

    #[test]
    fn empty_scenario_has_one_snapshot() {
        let r = replay(&parse_scenario("volume size=1M cluster=1K\n").unwrap()).unwrap();
        assert_eq!(r.snapshots.len(), 1);
        assert_eq!(r.snapshots[0].image, r.image);
    }
}
