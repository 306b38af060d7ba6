//! Bootstrap confidence intervals and Bonferroni-corrected paired tests.

use reid_fuse::report::{ci_table, pairwise_table};
use reid_fuse::stats::{bootstrap_ci, bootstrap_ci_grouped, pairwise_matrix, BootstrapParams};
use reid_fuse::synth::{generate, SynthSpec};

fn main() -> reid_fuse::Result<()> {
    let data = generate(&SynthSpec::default().with_seed(2))?;
    let params = data.config.fusion.clone();
    let mut models = vec![(
        "ensemble".to_string(),
        data.test_report(&data.fusion_scorer(params.clone()))?,
    )];
    for stream in &params.streams {
        models.push((
            stream.to_string(),
            data.test_report(&data.stream_scorer(stream))?,
        ));
    }
    let boot = BootstrapParams::default().with_resamples(20_000);
    let mut cis = Vec::new();
    for (name, report) in &models {
        cis.push((name.clone(), bootstrap_ci(&report.aps(), &boot)?));
        let groups: Vec<_> = report
            .per_query
            .iter()
            .map(|q| q.query.trajectory_key())
            .collect();
        cis.push((
            format!("{name} (by trajectory)"),
            bootstrap_ci_grouped(&report.aps(), &groups, &boot)?,
        ));
    }
    println!("{}", ci_table(&cis));
    let aps: Vec<(String, Vec<f64>)> = models.iter().map(|(n, r)| (n.clone(), r.aps())).collect();
    print!("{}", pairwise_table(&pairwise_matrix(&aps, &boot)?));
    Ok(())
}
