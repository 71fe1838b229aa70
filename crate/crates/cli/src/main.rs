use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use chrono::Utc;
use clap::{Args, Parser, Subcommand, ValueEnum};
use walkdir::WalkDir;

use manipscan::exif::{parse_exif, TagValue};
use manipscan::filename::FilenameMatcher;
use manipscan::pipeline::{analyze_image, AnalyzeOptions, HeatmapFormat, ImageVerdict, Report};
use manipscan::refdb::{EditorLabel, FileStore, ReferenceDb, Storage};
use manipscan::scanner::{ProfileSet, Scanner};
use manipscan::segments::{dqt_fingerprint, extract_dqt, parse_segments};

mod text;

#[derive(Parser)]
#[command(name = "manipscan", version, about = "Image manipulation forensics")]
struct Cli {
    /// Reference database snapshot file.
    #[arg(long, global = true)]
    db: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = ReportFormat::Text)]
    report: ReportFormat,
    /// Directory for heatmap artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Run all three stages on one or more images.
    Analyze(AnalyzeArgs),
    /// Scan an Android extraction directory.
    Scan {
        root: PathBuf,
        /// Profile file replacing the built-in package profiles.
        #[arg(long)]
        profiles: Option<PathBuf>,
    },
    /// Reference database maintenance.
    #[command(subcommand)]
    Db(DbCommand),
    /// Print quantization tables and their fingerprint.
    Dqt { image: PathBuf },
    /// Print Exif IFD0 and IFD1 tags.
    Exif { image: PathBuf },
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(required = true)]
    images: Vec<PathBuf>,
    #[arg(long, default_value_t = manipscan::analysis::DEFAULT_ELA_QUALITY, value_parser = clap::value_parser!(u8).range(1..=100))]
    ela_quality: u8,
    #[arg(long, default_value_t = manipscan::analysis::DEFAULT_ELA_AMPLIFICATION)]
    ela_amplification: f64,
    #[arg(long, default_value_t = manipscan::analysis::DEFAULT_MEDIAN_WINDOW)]
    median_window: usize,
    #[arg(long, default_value_t = manipscan::pipeline::REGION_ELA_QUALITY, value_parser = clap::value_parser!(u8).range(1..=100))]
    region_quality: u8,
    #[arg(long, value_enum, default_value_t = HeatmapKind::Png)]
    heatmap_format: HeatmapKind,
}

#[derive(Clone, Copy, ValueEnum)]
enum HeatmapKind {
    Png,
    Raw,
}

#[derive(Subcommand)]
enum DbCommand {
    /// Add every JPEG/PNG below a directory under one editor label.
    Ingest {
        dir: PathBuf,
        /// name@version
        #[arg(long)]
        label: String,
    },
    /// Write the database as a snapshot file.
    Export { file: PathBuf },
    /// Replace the database with a snapshot file.
    Import { file: PathBuf },
}

/// Failures that map to exit status 2 rather than 1.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("manipscan: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn load_db(path: Option<&Path>) -> Result<ReferenceDb> {
    match path {
        Some(p) => FileStore::new(p).load().with_context(|| format!("loading {}", p.display())),
        None => Ok(ReferenceDb::new()),
    }
}

fn require_db(path: Option<&Path>) -> Result<&Path> {
    path.ok_or_else(|| anyhow!(UsageError("db commands need --db <path>".into())))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let db_path = cli.db.as_deref();
    match cli.command {
        Command::Analyze(a) => {
            let db = load_db(db_path)?;
            let options = AnalyzeOptions {
                ela_quality: a.ela_quality,
                ela_amplification: a.ela_amplification,
                median_window: a.median_window,
                region_quality: a.region_quality,
                artifact_dir: cli.out.clone(),
                heatmap_format: match a.heatmap_format {
                    HeatmapKind::Png => HeatmapFormat::Png,
                    HeatmapKind::Raw => HeatmapFormat::Raw,
                },
                ..AnalyzeOptions::default()
            };
            if !(options.ela_amplification > 0.0) {
                return Err(UsageError("--ela-amplification must be positive".into()).into());
            }
            let verdicts: Vec<ImageVerdict> = a
                .images
                .iter()
                .map(|p| analyze_image(p, &db, &options))
                .collect::<Result<_, _>>()?;
            let mut report = Report::new(&db);
            report.images = verdicts;
            match cli.report {
                ReportFormat::Json => print_json(&report),
                ReportFormat::Text => {
                    print!("{}", text::analyze_report(&report));
                    Ok(())
                }
            }
        }
        Command::Scan { root, profiles } => {
            let db = load_db(db_path)?;
            let profiles = match profiles {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    ProfileSet::from_toml(&text)?
                }
                None => ProfileSet::builtin(),
            };
            let extraction = Scanner::open(&root, &profiles, &db)?.report()?;
            let mut report = Report::new(&db);
            report.extraction = Some(extraction);
            match cli.report {
                ReportFormat::Json => print_json(&report),
                ReportFormat::Text => {
                    print!("{}", text::scan_report(&report));
                    Ok(())
                }
            }
        }
        Command::Db(cmd) => run_db(cmd, require_db(db_path)?, cli.report),
        Command::Dqt { image } => {
            let bytes = std::fs::read(&image).with_context(|| format!("reading {}", image.display()))?;
            let list = parse_segments(&bytes)?;
            let tables = extract_dqt(&list)?;
            let fp = dqt_fingerprint(&tables);
            match cli.report {
                ReportFormat::Json => print_json(&serde_json::json!({
                    "tables": tables.tables.values().map(|t| serde_json::json!({
                        "table_id": t.table_id,
                        "values_natural": t.values_natural().to_vec(),
                    })).collect::<Vec<_>>(),
                    "fingerprint": fp.as_ref().map(|f| f.as_str()),
                })),
                ReportFormat::Text => {
                    print!("{}", text::dqt(&tables, fp.as_ref()));
                    Ok(())
                }
            }
        }
        Command::Exif { image } => {
            let bytes = std::fs::read(&image).with_context(|| format!("reading {}", image.display()))?;
            let list = parse_segments(&bytes)?;
            let payload = list.exif_payloads().next().ok_or_else(|| anyhow!("no Exif APP1 segment"))?;
            let rec = parse_exif(payload)?;
            match cli.report {
                ReportFormat::Json => print_json(&rec),
                ReportFormat::Text => {
                    println!("byte order: {:?}", rec.byte_order);
                    for (label, tags) in [("ifd0", &rec.tags), ("ifd1", &rec.thumbnail_tags)] {
                        for (tag, v) in tags {
                            println!("{label} 0x{tag:04x} {}", render_tag(v));
                        }
                    }
                    Ok(())
                }
            }
        }
    }
}

fn render_tag(v: &TagValue) -> String {
    match v {
        TagValue::Ascii(s) => format!("{s:?}"),
        TagValue::Byte(b) | TagValue::Undefined(b) if b.len() > 16 => format!("<{} bytes>", b.len()),
        other => format!("{other:?}"),
    }
}

fn run_db(cmd: DbCommand, db_path: &Path, format: ReportFormat) -> Result<()> {
    let store = FileStore::new(db_path);
    match cmd {
        DbCommand::Ingest { dir, label } => {
            let label = EditorLabel::parse(&label).map_err(|e| UsageError(e.to_string()))?;
            if !dir.is_dir() {
                return Err(anyhow!("{} is not a directory", dir.display()));
            }
            let mut db = store.load()?;
            let matcher = FilenameMatcher::builtin();
            let mut paths: Vec<PathBuf> = Vec::new();
            for entry in WalkDir::new(&dir).follow_links(false) {
                let entry = entry?;
                if entry.file_type().is_file() {
                    paths.push(entry.into_path());
                }
            }
            paths.sort();
            let (mut ingested, mut skipped) = (0usize, Vec::new());
            let at = Utc::now();
            for p in &paths {
                let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
                let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                match db.ingest_labeled_image(&bytes, &name, &label, &matcher, at) {
                    Ok(_) => ingested += 1,
                    Err(e) => skipped.push(format!("{}: {e}", p.display())),
                }
            }
            store.save(&db)?;
            match format {
                ReportFormat::Json => print_json(&serde_json::json!({
                    "label": label.to_string(),
                    "ingested": ingested,
                    "skipped": skipped,
                })),
                ReportFormat::Text => {
                    println!("ingested {ingested} file(s) as {label}");
                    for s in skipped {
                        println!("skipped {s}");
                    }
                    Ok(())
                }
            }
        }
        DbCommand::Export { file } => {
            let db = store.load()?;
            std::fs::write(&file, db.export_snapshot()).with_context(|| format!("writing {}", file.display()))?;
            Ok(())
        }
        DbCommand::Import { file } => {
            let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let db = ReferenceDb::import_snapshot(&text)?;
            store.save(&db)?;
            Ok(())
        }
    }
}
