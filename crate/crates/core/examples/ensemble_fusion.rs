//! Fuses per-stream cosine rows into one score and shows each stream's share.

use std::collections::BTreeMap;

use reid_fuse::eval::ranking;
use reid_fuse::fusion::fuse_row;
use reid_fuse::model::{FusionParams, StreamId};

fn main() -> reid_fuse::Result<()> {
    let rows: BTreeMap<StreamId, Vec<f64>> = [
        ("q1_sliced", vec![0.91, 0.62, 0.55, 0.40]),
        ("q2_sliced", vec![0.70, 0.88, 0.52, 0.31]),
        ("head", vec![0.83, 0.79, 0.20, 0.44]),
        ("dorsal_fin", vec![0.60, 0.58, 0.57, 0.10]),
    ]
    .into_iter()
    .map(|(s, r)| (StreamId::new(s), r))
    .collect();
    let params = FusionParams::new(rows.keys().map(StreamId::as_str));
    println!(
        "lambda {}, tau {}, k {}",
        params.lambda, params.tau, params.k
    );
    let fused = fuse_row(&rows, &params)?;
    for j in ranking(&fused.fused) {
        println!("candidate {j}: fused {:.5}", fused.fused[j]);
        for (stream, parts) in &fused.breakdown {
            let b = &parts[j];
            println!(
                "    {:<10} cos {:.2}  rank {}  rr {:.5}  s {:.4}",
                stream.as_str(),
                b.cos,
                b.rank,
                b.rr,
                b.s
            );
        }
    }
    Ok(())
}
