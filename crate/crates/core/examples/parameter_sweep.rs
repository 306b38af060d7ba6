//! Cross-camera mAP as lambda, tau and k vary around the defaults.

use reid_fuse::fusion::{sweep, SweepAxis};
use reid_fuse::report::sweep_table;
use reid_fuse::synth::{generate, SynthSpec};

fn main() -> reid_fuse::Result<()> {
    let data = generate(&SynthSpec::default())?;
    let base = data.config.fusion.clone();
    for (axis, lo, hi) in [
        (SweepAxis::Lambda, 0.0, 0.8),
        (SweepAxis::Tau, 0.7, 2.0),
        (SweepAxis::K, 20.0, 500.0),
    ] {
        let table = sweep(&base, axis, axis.standard_grid(), |p| {
            data.test_report(&data.fusion_scorer(p.clone()))
                .map(|r| r.map)
        })?;
        print!("{}", sweep_table(&table));
        println!(
            "spread over [{lo}, {hi}]: {:.4}\n",
            table.spread_within(lo, hi)
        );
    }
    Ok(())
}
