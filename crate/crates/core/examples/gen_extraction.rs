//! Regenerates the synthetic extraction tree used by the scanner tests.
//!
//! cargo run -p manipscan --example gen_extraction -- tests/fixtures/extraction

fn main() -> std::io::Result<()> {
    let root = std::env::args().nth(1).unwrap_or_else(|| "tests/fixtures/extraction".into());
    let root = std::path::Path::new(&root);
    if root.exists() {
        std::fs::remove_dir_all(root)?;
    }
    manipscan::fixtures::write_extraction_tree(root)?;
    println!("wrote {}", root.display());
    Ok(())
}
