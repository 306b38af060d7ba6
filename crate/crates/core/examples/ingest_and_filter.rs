//! Filters a tracker dump into dataset splits.
//!
//! `cargo run --example ingest_and_filter [dataset_dir]`; without an argument
//! the bundled 50-track fixture is used.

use std::path::{Path, PathBuf};

use reid_fuse::pipeline::{ingest_dataset, Dataset};

fn main() -> reid_fuse::Result<()> {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let dir: PathBuf = match std::env::args().nth(1) {
        Some(d) => d.into(),
        None => {
            let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/filtering");
            for f in ["config.toml", "detections.jsonl"] {
                std::fs::copy(fixture.join(f), tmp.path().join(f)).expect("copy fixture");
            }
            tmp.path().to_path_buf()
        }
    };
    let summary = ingest_dataset(&dir)?;
    println!(
        "{} detections in {} tracks; {} tracks survive the quality filters",
        summary.detections_in, summary.tracks_in, summary.tracks_kept
    );
    let filter = Dataset::open(&dir, None)?.config.filter;
    println!(
        "rules: diagonal >= {}, no occluded parts, longest run >= {} frames, every {}th frame, both quarter masks > {:.0}% foreground",
        filter.l_diag,
        filter.min_traj_length,
        filter.frame_stride,
        100.0 * filter.min_foreground_fraction
    );
    for (split, n) in &summary.samples {
        println!("  {split:<6} {n:>4} samples");
    }
    Ok(())
}
