//! `exfat-forensic`: read-only analysis of exFAT volume images.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use exfat_forensic::carver::{self, CarveOptions, Granularity, CATALOG_ENV};
use exfat_forensic::direntry::SetId;
use exfat_forensic::forge::{parse_scenario, replay};
use exfat_forensic::recovery::{recover, recover_shortened_tail, RecoveredFile};
use exfat_forensic::report::{
    image_sha256, output_name, sanitize, sha256_hex, BitmapSummary, ImageInfo, OutputFile, Report, TreeSummary,
};
use exfat_forensic::{classify_all, DirectoryTree, Error, FillPolicy, Volume, WalkOptions};

#[derive(Parser)]
#[command(
    name = "exfat-forensic",
    version,
    about = "Read-only forensic analysis of exFAT volume images"
)]
struct Cli {
    /// Print the report as one JSON document.
    #[arg(long, global = true)]
    json: bool,
    /// Stable ordering and no run-specific fields, for diffable output.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ImageArgs {
    image: PathBuf,
    /// Byte offset of the exFAT partition within the image.
    #[arg(long, default_value_t = 0)]
    offset: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fill {
    Substitute,
    Skip,
    Include,
}

#[derive(Clone, Copy, ValueEnum)]
enum GranularityArg {
    Cluster,
    Sector,
}

#[derive(Subcommand)]
enum Command {
    /// Volume geometry.
    Info(ImageArgs),
    /// Directory tree listing.
    Ls {
        #[command(flatten)]
        image: ImageArgs,
        /// Also list inactive sets, with verdicts.
        #[arg(long)]
        include_inactive: bool,
        /// Only this directory.
        #[arg(long)]
        dir: Option<String>,
    },
    /// Interpret every inactive entry set.
    Classify(ImageArgs),
    /// Recover files from their entry metadata.
    Recover {
        #[command(flatten)]
        image: ImageArgs,
        /// A set id (parentCluster:recordOffset) or a first cluster number.
        #[arg(long)]
        target: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "substitute")]
        fill: Fill,
    },
    /// Recover the former tail of a shortened file.
    Tail {
        #[command(flatten)]
        image: ImageArgs,
        #[arg(long)]
        target: SetId,
        #[arg(long)]
        out: PathBuf,
    },
    /// Carve unallocated space by signature, attaching entry metadata.
    Carve {
        #[command(flatten)]
        image: ImageArgs,
        #[arg(long)]
        out: PathBuf,
        /// Signature catalog; defaults to the file named by the environment
        /// variable, then to the built-in JPEG signature.
        #[arg(long, env = CATALOG_ENV)]
        signatures: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "cluster")]
        granularity: GranularityArg,
    },
    /// Follow a FAT chain.
    Fatchain {
        #[command(flatten)]
        image: ImageArgs,
        #[arg(long)]
        cluster: u32,
    },
    /// Allocation bitmap queries.
    Bitmap {
        #[command(flatten)]
        image: ImageArgs,
        #[arg(long, conflicts_with = "runs")]
        cluster: Option<u32>,
        /// List unallocated runs.
        #[arg(long)]
        runs: bool,
    },
    /// Build a fixture image from a scenario file.
    Forge {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failures to read the evidence itself; everything else is a usage error.
fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(
            Error::NotFound(_)
            | Error::TooShort { .. }
            | Error::Unreadable(_)
            | Error::OutOfBounds { .. }
            | Error::NotExfat(_)
            | Error::InconsistentGeometry(_)
            | Error::FatTooShort { .. }
            | Error::BitmapEntryMissing
            | Error::BitmapSizeInconsistent { .. }
            | Error::Io(_),
        ) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

struct Session {
    vol: Volume,
    report: Report,
}

fn open(args: &ImageArgs, cli: &Cli) -> anyhow::Result<Session> {
    let vol = Volume::open(&args.image, args.offset)?;
    let image = ImageInfo {
        path: (!cli.deterministic).then(|| {
            fs::canonicalize(&args.image)
                .unwrap_or_else(|_| args.image.clone())
                .display()
                .to_string()
        }),
        sha256: image_sha256(&vol.image)?,
        length: vol.image.len(),
        partition_offset: args.offset,
    };
    let mut report = Report::new(image, vol.geometry.clone());
    if !cli.deterministic {
        report.generated_at = Some(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
    }
    Ok(Session { vol, report })
}

fn walk(s: &mut Session, include_inactive: bool) -> DirectoryTree {
    let tree = s.vol.walk(WalkOptions { include_inactive });
    for d in tree.directories() {
        for e in &d.errors {
            s.report.walk_errors.push(format!("{}: {e}", d.path));
        }
    }
    tree
}

fn write_output(dir: &Path, name: &str, bytes: &[u8]) -> anyhow::Result<OutputFile> {
    let path = dir.join(name);
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(OutputFile {
        name: name.to_string(),
        length: bytes.len() as u64,
        sha256: sha256_hex(bytes),
    })
}

/// Writes the content and a JSON sidecar describing how it was obtained.
fn write_recovery(
    dir: &Path,
    label: &str,
    rec: &RecoveredFile,
    outputs: &mut Vec<OutputFile>,
) -> anyhow::Result<String> {
    let name = output_name(label, rec.source, &rec.metadata.name);
    outputs.push(write_output(dir, &name, &rec.content)?);
    let sidecar = serde_json::to_string_pretty(rec)?;
    outputs.push(write_output(dir, &format!("{name}.json"), sidecar.as_bytes())?);
    Ok(name)
}

/// `5-9,12,20-21`
fn ranges(clusters: &[u32]) -> String {
    let mut parts: Vec<String> = Vec::new();
    let mut i = 0;
    while i < clusters.len() {
        let mut j = i;
        while j + 1 < clusters.len() && clusters[j + 1] == clusters[j] + 1 {
            j += 1;
        }
        parts.push(if i == j {
            clusters[i].to_string()
        } else {
            format!("{}-{}", clusters[i], clusters[j])
        });
        i = j + 1;
    }
    if parts.is_empty() {
        "none".into()
    } else {
        parts.join(",")
    }
}

fn finish(cli: &Cli, report: &Report, text: String) -> String {
    if cli.json {
        report.to_json() + "\n"
    } else {
        text
    }
}

fn run(cli: &Cli) -> anyhow::Result<String> {
    let mut t = String::new();
    match &cli.command {
        Command::Info(args) => {
            let s = open(args, cli)?;
            let g = &s.vol.geometry;
            writeln!(t, "image            {}", args.image.display())?;
            writeln!(t, "sha256           {}", s.report.image.sha256)?;
            writeln!(t, "label            {}", g.volume_label.as_deref().unwrap_or(""))?;
            writeln!(t, "serial           {:08X}", g.volume_serial)?;
            writeln!(t, "revision         {}.{:02}", g.fs_revision >> 8, g.fs_revision & 0xFF)?;
            writeln!(t, "sector size      {}", g.sector_size_bytes)?;
            writeln!(t, "cluster size     {}", g.cluster_size_bytes)?;
            writeln!(t, "volume sectors   {}", g.volume_length_sectors)?;
            writeln!(
                t,
                "FAT              sector {} ({} sectors)",
                g.fat_offset_sectors, g.fat_length_sectors
            )?;
            writeln!(t, "cluster heap     sector {}", g.heap_offset_sectors)?;
            writeln!(t, "clusters         {}", g.cluster_count)?;
            writeln!(t, "root cluster     {}", g.root_first_cluster)?;
            let bm = s.vol.bitmap.descriptor();
            writeln!(
                t,
                "bitmap           cluster {} ({} bytes)",
                bm.first_cluster, bm.size_bytes
            )?;
            Ok(finish(cli, &s.report, t))
        }
        Command::Ls {
            image,
            include_inactive,
            dir,
        } => {
            let mut s = open(image, cli)?;
            let tree = walk(&mut s, *include_inactive);
            let verdicts = if *include_inactive {
                classify_all(&tree, &s.vol.bitmap)
            } else {
                Vec::new()
            };
            let mut summary = TreeSummary::new(&tree, &verdicts);
            if let Some(d) = dir {
                let d = tree.directory_by_path(d).ok_or_else(|| anyhow!("no directory {d}"))?;
                summary.entries.retain(|e| e.set.parent_cluster == d.first_cluster);
            }
            if !*include_inactive {
                summary.entries.retain(|e| e.active);
            }
            for e in &summary.entries {
                let state = match (e.active, e.verdict) {
                    (true, _) => "active".to_string(),
                    (false, Some(v)) => v.as_str().to_string(),
                    (false, None) => "inactive".to_string(),
                };
                writeln!(
                    t,
                    "{:<14} {:<13} {:>10} {:>12} {}{}",
                    e.set.to_string(),
                    state,
                    e.first_cluster,
                    e.file_size,
                    e.path,
                    if e.directory { "/" } else { "" }
                )?;
            }
            s.report.verdicts = verdicts;
            s.report.tree = Some(summary);
            Ok(finish(cli, &s.report, t))
        }
        Command::Classify(args) => {
            let mut s = open(args, cli)?;
            let tree = walk(&mut s, true);
            let verdicts = classify_all(&tree, &s.vol.bitmap);
            for v in &verdicts {
                let path = tree.path_of(v.set).unwrap_or_default();
                write!(t, "{:<14} {:<13} {}", v.set.to_string(), v.verdict.as_str(), path)?;
                if let Some(m) = v.matched_set {
                    write!(t, " -> {}", tree.path_of(m).unwrap_or_else(|| m.to_string()))?;
                }
                writeln!(t)?;
                for f in &v.evidence {
                    writeln!(t, "    {:?}: {}", f.check, f.result)?;
                }
            }
            s.report.tree = Some(TreeSummary::new(&tree, &verdicts));
            s.report.verdicts = verdicts;
            Ok(finish(cli, &s.report, t))
        }
        Command::Recover {
            image,
            target,
            out,
            fill,
        } => {
            let mut s = open(image, cli)?;
            let tree = walk(&mut s, true);
            let sets: Vec<_> = match target.parse::<SetId>() {
                Ok(id) => vec![tree.get(id).ok_or_else(|| anyhow!("no entry set {id}"))?],
                Err(_) => {
                    let cn: u32 = target
                        .parse()
                        .map_err(|_| anyhow!("target {target:?} is neither a set id nor a cluster number"))?;
                    let sets: Vec<_> = tree.sets_with_first_cluster(cn).filter(|s| !s.is_directory()).collect();
                    if sets.is_empty() {
                        bail!("no entry set starts at cluster {cn}");
                    }
                    sets
                }
            };
            let policy = match fill {
                Fill::Substitute => FillPolicy::SubstituteZero,
                Fill::Skip => FillPolicy::Skip,
                Fill::Include => FillPolicy::IncludeFlagged,
            };
            fs::create_dir_all(out)?;
            for set in sets {
                let rec = recover(set, &s.vol, Some(&tree), policy)?;
                let label = if set.active { "active" } else { "recovered" };
                let name = write_recovery(out, label, &rec, &mut s.report.outputs)?;
                writeln!(
                    t,
                    "{} {:?} {} bytes {:?} -> {name}",
                    set.id, rec.integrity, rec.length, rec.method
                )?;
                for f in &rec.findings {
                    writeln!(t, "    {:?}: {}", f.check, f.result)?;
                }
                s.report.recoveries.push(rec);
            }
            Ok(finish(cli, &s.report, t))
        }
        Command::Tail { image, target, out } => {
            let mut s = open(image, cli)?;
            let tree = walk(&mut s, true);
            let set = tree.get(*target).ok_or_else(|| anyhow!("no entry set {target}"))?;
            let rec = recover_shortened_tail(set, &s.vol, &tree)?;
            fs::create_dir_all(out)?;
            let name = write_recovery(out, "tail", &rec, &mut s.report.outputs)?;
            let clusters = ranges(&rec.cluster_numbers());
            writeln!(
                t,
                "{} {:?} {:?} clusters {clusters} -> {name}",
                set.id, rec.integrity, rec.method
            )?;
            for f in &rec.findings {
                writeln!(t, "    {:?}: {}", f.check, f.result)?;
            }
            s.report.recoveries.push(rec);
            Ok(finish(cli, &s.report, t))
        }
        Command::Carve {
            image,
            out,
            signatures,
            granularity,
        } => {
            let sigs = match signatures {
                Some(p) => {
                    let text = fs::read_to_string(p).with_context(|| format!("reading catalog {}", p.display()))?;
                    carver::parse_catalog(&text)?
                }
                None => carver::builtin(),
            };
            let mut s = open(image, cli)?;
            let tree = walk(&mut s, true);
            let opts = CarveOptions {
                granularity: match granularity {
                    GranularityArg::Cluster => Granularity::ClusterStart,
                    GranularityArg::Sector => Granularity::EverySector,
                },
                ..CarveOptions::default()
            };
            let report = carver::carve_all(&s.vol, &tree, &sigs, opts)?;
            fs::create_dir_all(out)?;
            for hit in &report.hits {
                let name = match (&hit.chosen, &hit.metadata) {
                    (Some(id), Some(m)) => output_name("carved", *id, &m.name),
                    _ => format!("carved_sector-{}.{}", hit.start_sector, sanitize(&hit.signature)),
                };
                s.report.outputs.push(write_output(out, &name, &hit.content)?);
                writeln!(
                    t,
                    "cluster {:>8} sector {:>10} {:>10} bytes ({:?}) -> {name}",
                    hit.start_cluster, hit.start_sector, hit.length, hit.determined_by
                )?;
                for f in &hit.findings {
                    writeln!(t, "    {:?}: {}", f.check, f.result)?;
                }
            }
            s.report.carve = Some(report);
            Ok(finish(cli, &s.report, t))
        }
        Command::Fatchain { image, cluster } => {
            let mut s = open(image, cli)?;
            s.vol.geometry.check_cluster(*cluster)?;
            let chain = s.vol.fat.walk_chain(*cluster, s.vol.fat.cell_count());
            let hex: Vec<String> = chain.clusters.iter().map(|c| format!("0x{c:04X}")).collect();
            writeln!(t, "{}", hex.join(" "))?;
            writeln!(t, "{} cluster(s), ended by {:?}", chain.len(), chain.terminated_by)?;
            s.report.fat_chain = Some(chain);
            Ok(finish(cli, &s.report, t))
        }
        Command::Bitmap { image, cluster, runs } => {
            let mut s = open(image, cli)?;
            let bm = &s.vol.bitmap;
            let allocated = bm.allocated_count();
            let mut summary = BitmapSummary {
                allocated_clusters: allocated,
                unallocated_clusters: bm.cluster_count() - allocated,
                cluster: *cluster,
                allocated: None,
                unallocated_runs: Vec::new(),
            };
            if let Some(cn) = cluster {
                let a = bm.is_allocated(*cn)?;
                summary.allocated = Some(a);
                writeln!(t, "cluster {cn}: {}", if a { "allocated" } else { "unallocated" })?;
            } else if *runs {
                summary.unallocated_runs = bm.unallocated_runs();
                for r in &summary.unallocated_runs {
                    writeln!(t, "{}..{} ({} clusters)", r.start, r.end() - 1, r.len)?;
                }
            } else {
                writeln!(t, "{allocated} allocated, {} unallocated", summary.unallocated_clusters)?;
            }
            s.report.bitmap = Some(summary);
            Ok(finish(cli, &s.report, t))
        }
        Command::Forge { scenario, out } => {
            let text = fs::read_to_string(scenario).with_context(|| format!("reading {}", scenario.display()))?;
            let r = replay(&parse_scenario(&text)?)?;
            let snapshots = out.join("snapshots");
            fs::create_dir_all(&snapshots)?;
            fs::write(out.join("image.img"), &r.image)?;
            let manifest = serde_json::to_string_pretty(&r.manifest)?;
            fs::write(out.join("manifest.json"), &manifest)?;
            for (i, snap) in r.snapshots.iter().enumerate() {
                let name = format!("{i:02}-{}.img", sanitize(&snap.name));
                fs::write(snapshots.join(&name), &snap.image)?;
                writeln!(t, "snapshots/{name} {}", sha256_hex(&snap.image))?;
            }
            writeln!(t, "image.img {}", sha256_hex(&r.image))?;
            Ok(if cli.json { manifest + "\n" } else { t })
        }
    }
}
