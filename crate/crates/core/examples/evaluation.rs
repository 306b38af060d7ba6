//! Within-trajectory and cross-camera mAP for each stream and the ensemble.

use reid_fuse::eval::{model_compare, ModelEntry};
use reid_fuse::report::comparison_table;
use reid_fuse::stats::BootstrapParams;
use reid_fuse::synth::{generate, SynthSpec};

fn main() -> reid_fuse::Result<()> {
    let data = generate(&SynthSpec::default().with_seed(1))?;
    let params = data.config.fusion.clone();
    let mut models = Vec::new();
    for stream in &params.streams {
        let scorer = data.stream_scorer(stream);
        models.push(ModelEntry {
            name: stream.to_string(),
            val: Some(data.val_report(&scorer, 5, 0)?),
            test: Some(data.test_report(&scorer)?),
        });
    }
    let fused = data.fusion_scorer(params);
    models.push(ModelEntry {
        name: "ensemble".into(),
        val: Some(data.val_report(&fused, 5, 0)?),
        test: Some(data.test_report(&fused)?),
    });
    let table = model_compare(&models, &BootstrapParams::default().with_resamples(10_000))?;
    print!("{}", comparison_table(&table));
    Ok(())
}
