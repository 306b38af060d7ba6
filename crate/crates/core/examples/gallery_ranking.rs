//! Builds one stream's gallery index and ranks it for a query by cosine similarity.

use reid_fuse::eval::ranking;
use reid_fuse::gallery::build_index;
use reid_fuse::model::StreamId;
use reid_fuse::synth::{generate, SynthSpec};

fn main() -> reid_fuse::Result<()> {
    let data = generate(&SynthSpec {
        n_ids: 10,
        images_per_id: 4,
        dim: 128,
        ..SynthSpec::default()
    })?;
    let stream = StreamId::new("head");
    let index = build_index(&data.embeddings, data.split("test"), &stream)?;
    println!(
        "{} gallery: {} items of dimension {}",
        stream,
        index.len(),
        index.dim()
    );
    let query = data.split("val")[0];
    let row = index.cosine_row(
        data.embeddings
            .get(&stream, &query)
            .expect("query embedding"),
    )?;
    println!("query {query}");
    for (rank, j) in ranking(&row).into_iter().take(5).enumerate() {
        println!(
            "  {:>2}. {:<16} cos {:+.4}",
            rank + 1,
            index.ids[j].to_string(),
            row[j]
        );
    }
    Ok(())
}
