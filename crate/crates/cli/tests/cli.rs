use std::path::Path;
use std::process::{Command, Output};

use manipscan::exif::{ByteOrder, TAG_SOFTWARE};
use manipscan::fixtures::{jpeg_fixture, with_exif, ExifWriter};
use manipscan::pipeline::{Report, Verdict};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_manipscan")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&run(&["analyze"])), 2);
    assert_eq!(code(&run(&[])), 2);
    assert_eq!(code(&run(&["analyze", "--bogus", "x.jpg"])), 2);
    assert_eq!(code(&run(&["--report", "xml", "dqt", "x.jpg"])), 2);
    assert_eq!(code(&run(&["db", "export", "out.snap"])), 2);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn io_errors_exit_1() {
    assert_eq!(code(&run(&["analyze", "/nonexistent/a.jpg"])), 1);
    assert_eq!(code(&run(&["dqt", "/nonexistent/a.jpg"])), 1);
    assert_eq!(code(&run(&["scan", "/nonexistent/root"])), 1);
}

#[test]
fn dqt_prints_tables_and_fingerprint() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("fixture.jpg");
    std::fs::write(&img, jpeg_fixture(16, 16, 1, 50)).unwrap();
    let o = run(&["dqt", path_str(&img)]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert_eq!(out.lines().filter(|l| l.starts_with("table ")).count(), 2);
    let rows: Vec<&str> = out.lines().filter(|l| l.split_whitespace().count() == 8).collect();
    assert_eq!(rows.len(), 16);
    assert_eq!(rows[0].split_whitespace().collect::<Vec<_>>(), ["16", "11", "10", "16", "24", "40", "51", "61"]);
    assert!(out.contains("fingerprint c44701e8185306f5e6d09be16a2b0fbd"), "{out}");
}

#[test]
fn ingest_then_analyze_held_out() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("snapseed");
    std::fs::create_dir(&train).unwrap();
    let exif = ExifWriter::new(ByteOrder::BigEndian).ascii(TAG_SOFTWARE, "Snapseed 2.0");
    for i in 0..3 {
        std::fs::write(train.join(format!("IMG_{i}-1.jpeg")), with_exif(&jpeg_fixture(24, 16, i, 93), &exif)).unwrap();
    }
    std::fs::write(train.join("notes.txt"), "not an image").unwrap();
    let db = dir.path().join("ref.snap");
    let o = run(&["--db", path_str(&db), "db", "ingest", path_str(&train), "--label", "Snapseed@2.19"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("ingested 3"));

    let held_out = dir.path().join("holiday-7.jpeg");
    std::fs::write(&held_out, with_exif(&jpeg_fixture(24, 16, 99, 93), &exif)).unwrap();
    let o = run(&["--db", path_str(&db), "--report", "json", "analyze", path_str(&held_out)]);
    assert_eq!(code(&o), 0);
    let report: Report = serde_json::from_str(&stdout(&o)).unwrap();
    let v = &report.images[0];
    assert_eq!(v.verdict, Verdict::ManipulationIndicated);
    assert_eq!(v.stage1.lookup.candidates[0].editor, "Snapseed");
    assert_eq!(report.db.editors, 1);
}

#[test]
fn export_import_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("t");
    std::fs::create_dir(&train).unwrap();
    std::fs::write(train.join("a.jpg"), jpeg_fixture(16, 16, 3, 70)).unwrap();
    let db = dir.path().join("a.snap");
    assert_eq!(code(&run(&["--db", path_str(&db), "db", "ingest", path_str(&train), "--label", "X@1"])), 0);
    let exported = dir.path().join("export.snap");
    assert_eq!(code(&run(&["--db", path_str(&db), "db", "export", path_str(&exported)])), 0);
    let fresh = dir.path().join("b.snap");
    assert_eq!(code(&run(&["--db", path_str(&fresh), "db", "import", path_str(&exported)])), 0);
    assert_eq!(std::fs::read(&db).unwrap(), std::fs::read(&fresh).unwrap());

    let broken = dir.path().join("broken.snap");
    std::fs::write(&broken, "#refdb-snapshot v9\n").unwrap();
    assert_eq!(code(&run(&["--db", path_str(&fresh), "db", "import", path_str(&broken)])), 1);
    assert_eq!(std::fs::read(&db).unwrap(), std::fs::read(&fresh).unwrap());
}

#[test]
fn bad_label_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("a.snap");
    assert_eq!(code(&run(&["--db", path_str(&db), "db", "ingest", path_str(dir.path()), "--label", "noversion"])), 2);
}

#[test]
fn analyze_writes_heatmaps() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("photo.jpg");
    std::fs::write(&img, jpeg_fixture(32, 24, 8, 85)).unwrap();
    let out = dir.path().join("heat");
    let o = run(&["--out", path_str(&out), "analyze", path_str(&img)]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("photo.jpg: "), "{text}");
    for name in ["ela", "noise", "gradient", "pca"] {
        assert!(out.join(format!("photo.{name}.png")).is_file(), "{name}");
    }
}

#[test]
fn scan_json_matrix() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/extraction");
    let o = run(&["--report", "json", "scan", path_str(&root)]);
    assert_eq!(code(&o), 0);
    let report: Report = serde_json::from_str(&stdout(&o)).unwrap();
    let x = report.extraction.unwrap();
    assert_eq!(x.matrix.len(), 5);
    assert!(x.row("com.mt.mtxx.mtxx").is_some());
}

#[test]
fn exif_lists_software() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("e.jpg");
    let exif = ExifWriter::new(ByteOrder::LittleEndian).ascii(TAG_SOFTWARE, "Meitu");
    std::fs::write(&img, with_exif(&jpeg_fixture(8, 8, 1, 90), &exif)).unwrap();
    let o = run(&["exif", path_str(&img)]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("ifd0 0x0131 \"Meitu\""), "{}", stdout(&o));
    let plain = dir.path().join("p.jpg");
    std::fs::write(&plain, jpeg_fixture(8, 8, 1, 90)).unwrap();
    assert_eq!(code(&run(&["exif", path_str(&plain)])), 1);
}
