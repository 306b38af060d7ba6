//! Removes one stream at a time from the ensemble.

use reid_fuse::fusion::without_stream;
use reid_fuse::report::{holdout_table, HoldoutRow};
use reid_fuse::synth::{generate, SynthSpec};

fn main() -> reid_fuse::Result<()> {
    let data = generate(&SynthSpec::default().with_seed(4))?;
    let params = data.config.fusion.clone();
    let map = |p| -> reid_fuse::Result<f64> { Ok(data.test_report(&data.fusion_scorer(p))?.map) };
    let mut rows = vec![HoldoutRow {
        removed: None,
        map: map(params.clone())?,
    }];
    for stream in &params.streams {
        rows.push(HoldoutRow {
            removed: Some(stream.to_string()),
            map: map(without_stream(&params, stream)?)?,
        });
    }
    print!("{}", holdout_table(&rows, "test"));
    Ok(())
}
