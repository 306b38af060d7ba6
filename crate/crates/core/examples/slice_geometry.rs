//! Places three overlapping slices along the lateral line of each body quarter.

use reid_fuse::geometry::{export_slice_crops, sample_layouts, GeometryParams};
use reid_fuse::ingest::SampleRecord;
use reid_fuse::model::SampleId;
use reid_fuse::synth::synthetic_detection;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let record = SampleRecord {
        split: "val".into(),
        detection: synthetic_detection(SampleId::new(1, 7, 1010)),
    };
    for overlap in [0.0, 2.0 / 14.0] {
        let params = GeometryParams {
            overlap_fraction: overlap,
            ..GeometryParams::default()
        };
        println!("overlap fraction {overlap:.4}");
        for layout in sample_layouts(&record, &params)? {
            let [p, a] = layout.lateral_segment;
            println!(
                "  {}: lateral line ({:.1}, {:.1}) -> ({:.1}, {:.1}), length {:.1}",
                layout.quarter_kind, p.x, p.y, a.x, a.y, layout.length
            );
            let image = record.detection.image.as_deref().unwrap_or("");
            for crop in export_slice_crops(&layout, image) {
                println!(
                    "    slice {}: x [{:7.2}, {:7.2}]  y [{:7.2}, {:7.2}]",
                    crop.slice, crop.x_range[0], crop.x_range[1], crop.y_range[0], crop.y_range[1]
                );
            }
        }
    }
    Ok(())
}
