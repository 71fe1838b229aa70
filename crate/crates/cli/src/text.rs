//! Plain-text renderings of reports, strongest evidence first.

use std::fmt::Write;

use manipscan::pipeline::{RationaleKind, Report, Verdict};
use manipscan::scanner::Cell;
use manipscan::segments::{DqtFingerprint, QuantTableSet};

fn verdict_label(v: Verdict) -> &'static str {
    match v {
        Verdict::ManipulationIndicated => "manipulation-indicated",
        Verdict::Inconclusive => "inconclusive",
        Verdict::NoSignal => "no-signal",
    }
}

fn kind_label(k: RationaleKind) -> &'static str {
    match k {
        RationaleKind::Exif => "exif",
        RationaleKind::FilenameSignature => "filename-signature",
        RationaleKind::Dqt => "dqt",
        RationaleKind::Stage2Region => "stage2-region",
        RationaleKind::FilenameStructural => "filename-structural",
        RationaleKind::Note => "note",
    }
}

fn header(out: &mut String, report: &Report) {
    let _ = writeln!(
        out,
        "manipscan {} (report schema {} v{}), db {} ({} editors)",
        report.tool_version, report.schema, report.schema_version, report.db.snapshot_sha256, report.db.editors
    );
}

pub fn analyze_report(report: &Report) -> String {
    let mut out = String::new();
    header(&mut out, report);
    for v in &report.images {
        let _ = writeln!(out, "\n{}: {}", v.target, verdict_label(v.verdict));
        let _ = writeln!(out, "  sha256 {}", v.sha256);
        for r in &v.rationale {
            let _ = writeln!(out, "  [{}] {}", kind_label(r.kind), r.text);
        }
        match &v.stage2.skipped {
            Some(reason) => {
                let _ = writeln!(out, "  stage 2 skipped: {reason}");
            }
            None => {
                for a in &v.stage2.analyses {
                    let _ = write!(
                        out,
                        "  {:<8} mean {:>8.3}  max {:>8.3}  otsu score {:>10.3}",
                        a.analysis, a.mean_heat, a.max_heat, a.region.score
                    );
                    if let Some(p) = &a.artifact {
                        let _ = write!(out, "  -> {p}");
                    }
                    out.push('\n');
                }
                if let Some(r) = &v.stage2.region {
                    let _ = writeln!(out, "  region score {:.3} (inside heat {:.1})", r.score, r.mean_inside);
                }
            }
        }
    }
    let _ = writeln!(out, "\nnote: {}", report.convention_note);
    out
}

fn cell(c: Cell) -> &'static str {
    match c {
        Cell::Present => "O",
        Cell::Absent => ".",
        Cell::NotEvaluated => "-",
    }
}

pub fn scan_report(report: &Report) -> String {
    let mut out = String::new();
    header(&mut out, report);
    let Some(x) = &report.extraction else { return out };
    let _ = writeln!(out, "extraction {} sha256 {}", x.root, x.tree_sha256);
    let _ = writeln!(out, "\n{:<40} edit mask orig logs cache acct inst used", "package");
    for r in &x.matrix {
        let _ = writeln!(
            out,
            "{:<40} {:^4} {:^4} {:^4} {:^4} {:^5} {:^4} {:^4} {:^4}",
            r.package_name,
            cell(r.edited_image),
            cell(r.manipulated_region),
            cell(r.original_image),
            cell(r.edit_logs),
            cell(r.image_caching),
            cell(r.account_info),
            cell(r.installation_time),
            cell(r.recent_usage_time)
        );
    }
    let _ = writeln!(out, "(O present, . absent, - not evaluated)");
    if !x.findings.is_empty() {
        out.push_str("\nfindings:\n");
    }
    for f in &x.findings {
        let _ = write!(out, "  {:?} {:?} {}", f.artifact_kind, f.detected_format, f.path);
        if let Some(ext) = &f.recovered_extension {
            let _ = write!(out, " (recovered {ext})");
        }
        out.push('\n');
        for (k, v) in &f.fields {
            let _ = writeln!(out, "    {k} = {v}");
        }
        for n in &f.notes {
            let _ = writeln!(out, "    {n}");
        }
    }
    for d in &x.diagnostics {
        let _ = writeln!(out, "diagnostic: {d}");
    }
    out
}

pub fn dqt(tables: &QuantTableSet, fp: Option<&DqtFingerprint>) -> String {
    let mut out = String::new();
    for t in tables.tables.values() {
        let _ = writeln!(out, "table {}", t.table_id);
        for row in t.values_natural().chunks(8) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:>4}")).collect();
            let _ = writeln!(out, "{}", line.join(""));
        }
    }
    match fp {
        Some(f) => {
            let _ = writeln!(out, "fingerprint {}", f.as_str());
        }
        None => out.push_str("fingerprint none\n"),
    }
    out
}
