//! Acceptance checks, one `[PASS]`/`[FAIL]` line per criterion.
//!
//! Run with `cargo test --test acceptance` (add `--release` for speed).

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use reid_fuse::cli::{run, Cli};
use reid_fuse::eval::{average_precision, ranking};
use reid_fuse::fusion::{
    fuse, min_max_row, reciprocal_rank_value, sweep, temperature_scale, without_stream,
    FusionInputs, SweepAxis,
};
use reid_fuse::gallery::SimilarityMatrix;
use reid_fuse::geometry::{
    convex_hull, lateral_segment, quarter_corners, slice_intervals, GeometryParams, Point, Polygon,
};
use reid_fuse::ingest::Quarter;
use reid_fuse::matrix::Matrix;
use reid_fuse::model::{FusionParams, SampleId};
use reid_fuse::pipeline::{ingest_dataset, SAMPLES_FILE};
use reid_fuse::report::sweep_table;
use reid_fuse::stats::{bonferroni_threshold, bootstrap_ci, paired_pvalue, BootstrapParams};
use reid_fuse::synth::{generate, SynthSpec};

type Outcome = Result<String, String>;

fn check(cond: bool, ok: String, bad: String) -> Outcome {
    if cond {
        Ok(ok)
    } else {
        Err(bad)
    }
}

// AP oracle

/// Gallery order by repeated selection of the highest remaining score.
fn oracle_order(scores: &[f64]) -> Vec<usize> {
    let mut used = vec![false; scores.len()];
    let mut order = Vec::with_capacity(scores.len());
    for _ in 0..scores.len() {
        let mut best: Option<usize> = None;
        for j in 0..scores.len() {
            if !used[j] && best.is_none_or(|b| scores[j] > scores[b]) {
                best = Some(j);
            }
        }
        let b = best.unwrap();
        used[b] = true;
        order.push(b);
    }
    order
}

/// Mean over relevant positions of the precision of the prefix ending there.
fn oracle_ap(order: &[usize], relevant: &[bool]) -> Option<f64> {
    let n_rel = relevant.iter().filter(|&&r| r).count();
    if n_rel == 0 {
        return None;
    }
    let mut sum = 0.0;
    for k in 1..=order.len() {
        if relevant[order[k - 1]] {
            let in_prefix = order[..k].iter().filter(|&&j| relevant[j]).count();
            sum += in_prefix as f64 / k as f64;
        }
    }
    Some(sum / n_rel as f64)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn ap_oracle() -> Outcome {
    let mut compared = 0usize;
    let mut mismatches = 0usize;
    for n in 1..=8usize {
        let results: Vec<(usize, usize)> = permutations(n)
            .par_iter()
            .map(|perm| {
                let scores: Vec<f64> = perm.iter().map(|&p| p as f64).collect();
                let order = ranking(&scores);
                let expected_order = oracle_order(&scores);
                let (mut c, mut m) = (0, 0);
                for mask in 1u32..(1 << n) {
                    let relevant: Vec<bool> = (0..n).map(|j| mask >> j & 1 == 1).collect();
                    let set: BTreeSet<usize> = (0..n).filter(|&j| relevant[j]).collect();
                    let got = average_precision(&order, &set).unwrap();
                    c += 1;
                    if got != oracle_ap(&expected_order, &relevant).unwrap() {
                        m += 1;
                    }
                }
                (c, m)
            })
            .collect();
        for (c, m) in results {
            compared += c;
            mismatches += m;
        }
    }
    check(
        mismatches == 0,
        format!("{compared} (ranking, relevance) cases, all exactly equal"),
        format!("{mismatches} of {compared} cases differ"),
    )
}

// fusion formula battery

fn rel_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs()
}

fn argsort_desc(row: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx
}

fn fusion_battery() -> Outcome {
    let mut failures = Vec::new();
    if !rel_eq(reciprocal_rank_value(1, 20), 1.0 / 21.0) {
        failures.push("rr(1, 20)");
    }
    if !rel_eq(temperature_scale(0.3, 0.7), (-1.0f64).exp()) {
        failures.push("s(0.3, 0.7)");
    }
    let mut row = [0.2, 0.8, 0.5];
    min_max_row(&mut row);
    if !(row[0] == 0.0 && rel_eq(row[1], 1.0) && rel_eq(row[2], 0.5)) {
        failures.push("min-max");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut endpoint_cases = 0;
    for _ in 0..200 {
        let n = rng.random_range(2..30);
        let streams = ["a", "b", "c"];
        let sims: Vec<SimilarityMatrix> = streams
            .iter()
            .map(|s| SimilarityMatrix {
                stream: (*s).into(),
                queries: vec![SampleId::new(1, 0, 0)],
                gallery: (0..n as u32).map(|j| SampleId::new(2, j, 0)).collect(),
                values: Matrix::from_rows(
                    vec![(0..n).map(|_| rng.random_range(-1.0..1.0)).collect()],
                    n,
                ),
            })
            .collect();
        let inputs = FusionInputs::new(sims.clone()).unwrap();
        let base = FusionParams::new(streams);
        let rr_sum: Vec<f64> = (0..n)
            .map(|j| {
                sims.iter()
                    .map(|s| {
                        let row = s.values.row(0);
                        let rank = 1
                            + (0..n)
                                .filter(|&i| row[i] > row[j] || (row[i] == row[j] && i < j))
                                .count();
                        reciprocal_rank_value(rank as u32, base.k)
                    })
                    .sum()
            })
            .collect();
        let s_sum: Vec<f64> = (0..n)
            .map(|j| {
                sims.iter()
                    .map(|s| {
                        let mut r: Vec<f64> = s
                            .values
                            .row(0)
                            .iter()
                            .map(|&c| temperature_scale(c, base.tau))
                            .collect();
                        min_max_row(&mut r);
                        r[j]
                    })
                    .sum()
            })
            .collect();
        let one = fuse(&inputs, &base.clone().with_lambda(1.0)).unwrap();
        let zero = fuse(&inputs, &base.clone().with_lambda(0.0)).unwrap();
        if argsort_desc(one.fused.row(0)) != argsort_desc(&rr_sum)
            || argsort_desc(zero.fused.row(0)) != argsort_desc(&s_sum)
        {
            failures.push("lambda endpoint argsort");
            break;
        }
        if !one
            .fused
            .row(0)
            .iter()
            .zip(&rr_sum)
            .all(|(a, b)| rel_eq(*a, *b))
            || !zero
                .fused
                .row(0)
                .iter()
                .zip(&s_sum)
                .all(|(a, b)| rel_eq(*a, *b) || *a == *b)
        {
            failures.push("lambda endpoint values");
            break;
        }
        endpoint_cases += 1;
    }
    check(
        failures.is_empty(),
        format!("rr, s, min-max exact; {endpoint_cases} lambda-endpoint cases match single-term argsort"),
        failures.join(", "),
    )
}

// geometry

fn random_convex(rng: &mut ChaCha8Rng) -> Polygon {
    loop {
        let cx = rng.random_range(-200.0..200.0);
        let cy = rng.random_range(-200.0..200.0);
        let pts: Vec<Point> = (0..rng.random_range(5..20))
            .map(|_| {
                Point::new(
                    cx + rng.random_range(-80.0..80.0),
                    cy + rng.random_range(-40.0..40.0),
                )
            })
            .collect();
        let hull = convex_hull(&pts);
        if hull.len() >= 4 {
            return Polygon::new(hull);
        }
    }
}

fn close(a: Point, b: Point, tol: f64) -> bool {
    (a.x - b.x).abs() <= tol && (a.y - b.y).abs() <= tol
}

fn geometry() -> Outcome {
    let params = GeometryParams::default();
    let mut failures = Vec::new();

    let rect = Polygon::from_coords(&[(10.0, 20.0), (410.0, 20.0), (410.0, 140.0), (10.0, 140.0)]);
    let c = quarter_corners(&rect, Point::new(1.0, 0.0), &params).map_err(|e| e.to_string())?;
    let got: BTreeSet<(i64, i64)> = c.points.iter().map(|p| (p.x as i64, p.y as i64)).collect();
    let exact = c.points.iter().all(|p| rect.vertices().contains(p));
    let recovered = got.len();
    if !(exact && recovered == 4) {
        failures.push(format!("rectangle corners: {recovered}/4"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let upper = random_convex(&mut rng);
        let lower = upper.map(|p| Point::new(p.x, p.y + 100.0));
        let dir = Point::new(1.0, 0.0).rotated(rng.random_range(-0.3..0.3));
        let base_c1 = quarter_corners(&upper, dir, &params).map_err(|e| e.to_string())?;
        let base_c2 = quarter_corners(&lower, dir, &params).map_err(|e| e.to_string())?;
        let base_seg = lateral_segment(
            &base_c1.points,
            &base_c2.points,
            upper.centroid(),
            lower.centroid(),
            Quarter::Q1,
        )
        .map_err(|e| e.to_string())?;
        for step in 0..36 {
            let theta = (step as f64 * 10.0).to_radians();
            let rot = |p: Point| p.rotated(theta);
            let (u, l) = (upper.map(rot), lower.map(rot));
            let c1 = quarter_corners(&u, dir.rotated(theta), &params).map_err(|e| e.to_string())?;
            let c2 = quarter_corners(&l, dir.rotated(theta), &params).map_err(|e| e.to_string())?;
            for (a, b) in c1.points.iter().zip(base_c1.points.iter()) {
                worst = worst.max(a.distance(rot(*b)));
            }
            let seg = lateral_segment(
                &c1.points,
                &c2.points,
                u.centroid(),
                l.centroid(),
                Quarter::Q1,
            )
            .map_err(|e| e.to_string())?;
            for (a, b) in seg.iter().zip(base_seg.iter()) {
                if !close(*a, rot(*b), 1e-6) {
                    worst = worst.max(a.distance(rot(*b)));
                }
            }
        }
    }
    if worst > 1e-6 {
        failures.push(format!("rotation equivariance error {worst:.3e} px"));
    }

    let no_overlap = GeometryParams {
        overlap_fraction: 0.0,
        ..params.clone()
    };
    for length in [1.0, 37.5, 100.0, 512.25, 1234.567] {
        let iv = slice_intervals(length, &no_overlap);
        if iv[0] != [0.0, 0.3 * length]
            || iv[1] != [0.3 * length, 0.7 * length]
            || iv[2] != [0.7 * length, length]
        {
            failures.push(format!("cut placement at L={length}"));
        }
        let covered: f64 = iv.iter().map(|[a, b]| b - a).sum();
        if iv[0][1] != iv[1][0] || iv[1][1] != iv[2][0] || (covered - length).abs() > 1e-9 * length
        {
            failures.push(format!("overlap-0 partition at L={length}"));
        }
    }
    check(
        failures.is_empty(),
        format!("rectangle 4/4 exact, 100 polygons x 36 angles max error {worst:.1e} px, cuts exact, partition holds"),
        failures.join("; "),
    )
}

// bootstrap

fn ks_uniform(mut p: Vec<f64>) -> f64 {
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    p.iter()
        .enumerate()
        .map(|(i, &x)| ((i as f64 + 1.0) / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max)
}

fn bootstrap_calibration() -> Outcome {
    let trials = 1000;
    let n_queries = 60;
    let pvalues: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(1_000 + t);
            let noise = Normal::new(0.0, 0.15).unwrap();
            let base: Vec<f64> = (0..n_queries).map(|_| rng.random_range(0.2..0.9)).collect();
            let a: Vec<f64> = base
                .iter()
                .map(|b| (b + noise.sample(&mut rng)).clamp(0.0, 1.0))
                .collect();
            let b: Vec<f64> = base
                .iter()
                .map(|b| (b + noise.sample(&mut rng)).clamp(0.0, 1.0))
                .collect();
            let params = BootstrapParams::default().with_resamples(2000).with_seed(t);
            paired_pvalue(&a, &b, &params).unwrap().p_value
        })
        .collect();
    let ks = ks_uniform(pvalues);
    let ci = bootstrap_ci(
        &[0.42; 30],
        &BootstrapParams::default().with_resamples(2000),
    )
    .map_err(|e| e.to_string())?;
    let thr = bonferroni_threshold(0.05, 90);
    let thr_2sf = format!("{thr:.1e}");
    check(
        ks < 0.05 && ci.lo == ci.hi && thr_2sf == "5.6e-4",
        format!("KS {ks:.4} over {trials} null trials (B=2000); constant CI [{}, {}]; threshold {thr_2sf}", ci.lo, ci.hi),
        format!("KS {ks:.4}, constant CI [{}, {}], threshold {thr_2sf}", ci.lo, ci.hi),
    )
}

// synthetic benchmark

struct SeedResult {
    fused: f64,
    best_single: f64,
    holdouts_decrease: bool,
}

fn ensemble_seed(seed: u64) -> SeedResult {
    let data = generate(&SynthSpec::default().with_seed(seed)).unwrap();
    let params = data.config.fusion.clone();
    let map = |p: &FusionParams| {
        data.test_report(&data.fusion_scorer(p.clone()))
            .unwrap()
            .map
    };
    let fused = map(&params);
    let best_single = params
        .streams
        .iter()
        .map(|s| data.test_report(&data.stream_scorer(s)).unwrap().map)
        .fold(f64::NEG_INFINITY, f64::max);
    let holdouts_decrease = params
        .streams
        .iter()
        .all(|s| map(&without_stream(&params, s).unwrap()) < fused);
    SeedResult {
        fused,
        best_single,
        holdouts_decrease,
    }
}

fn ensemble_and_holdout() -> (Outcome, Outcome) {
    let results: Vec<SeedResult> = (0..20).map(ensemble_seed).collect();
    let wins = results.iter().filter(|r| r.fused >= r.best_single).count();
    let drops = results.iter().filter(|r| r.holdouts_decrease).count();
    let margin = results.iter().map(|r| r.fused - r.best_single).sum::<f64>() / 20.0;
    (
        check(
            wins >= 18,
            format!("fused >= best single stream in {wins}/20 seeds (mean margin {margin:+.4})"),
            format!("fused >= best single stream in only {wins}/20 seeds"),
        ),
        check(
            drops >= 15,
            format!("every single-stream holdout lowers mAP in {drops}/20 seeds"),
            format!("every holdout lowers mAP in only {drops}/20 seeds"),
        ),
    )
}

fn stability() -> Outcome {
    let data = generate(&SynthSpec::default()).map_err(|e| e.to_string())?;
    let base = data.config.fusion.clone();
    let mut parts = Vec::new();
    let mut ok = true;
    for (axis, lo, hi, rows) in [
        (SweepAxis::Lambda, 0.0, 0.8, 7),
        (SweepAxis::Tau, 0.7, 2.0, 6),
        (SweepAxis::K, 20.0, 500.0, 10),
    ] {
        let table = sweep(&base, axis, axis.standard_grid(), |p| {
            data.test_report(&data.fusion_scorer(p.clone()))
                .map(|r| r.map)
        })
        .map_err(|e| e.to_string())?;
        let spread = table.spread_within(lo, hi);
        let shape = table.rows.len() == rows && sweep_table(&table).lines().count() == rows + 1;
        ok &= spread < 0.01 && shape;
        parts.push(format!(
            "{} spread {spread:.4} over [{lo}, {hi}] ({} rows)",
            axis.label(),
            table.rows.len()
        ));
    }
    check(ok, parts.join("; "), parts.join("; "))
}

// determinism

fn cli(args: &[&str]) -> Result<Vec<u8>, String> {
    use clap::Parser;
    let parsed = Cli::try_parse_from(std::iter::once("reid-fuse").chain(args.iter().copied()))
        .map_err(|e| e.to_string())?;
    let mut buf = Vec::new();
    run(parsed, &mut buf).map_err(|e| e.to_string())?;
    Ok(buf)
}

fn pipeline_run(root: &Path, threads: usize) -> Result<Vec<(String, Vec<u8>)>, String> {
    let dir = root.join(format!(
        "t{threads}_{}",
        root.read_dir().map(|d| d.count()).unwrap_or(0)
    ));
    let d = dir.to_str().unwrap();
    let t = threads.to_string();
    let spec = root.join("spec.toml");
    std::fs::write(&spec, "n_ids = 24\nimages_per_id = 5\ndim = 64\nseed = 3\n")
        .map_err(|e| e.to_string())?;
    let spec = spec.to_str().unwrap();
    let common = ["--threads", &t, "--seed", "9"];
    let with = |args: &[&str]| -> Result<Vec<u8>, String> {
        let mut all: Vec<&str> = args.to_vec();
        all.extend_from_slice(&common);
        cli(&all)
    };
    with(&["synth", "--spec", spec, "--out", d])?;
    with(&["ingest", "--dataset", d])?;
    with(&["gallery", "--dataset", d, "--split", "test"])?;
    let test_report = dir.join("test.json");
    let val_report = dir.join("val.json");
    let head_report = dir.join("head.json");
    with(&[
        "evaluate",
        "--dataset",
        d,
        "--mode",
        "test",
        "--out",
        test_report.to_str().unwrap(),
    ])?;
    with(&[
        "evaluate",
        "--dataset",
        d,
        "--mode",
        "val",
        "--out",
        val_report.to_str().unwrap(),
    ])?;
    with(&[
        "evaluate",
        "--dataset",
        d,
        "--mode",
        "test",
        "--stream",
        "head",
        "--out",
        head_report.to_str().unwrap(),
    ])?;
    let boot = with(&[
        "bootstrap",
        "--json",
        "--resamples",
        "5000",
        "--report",
        test_report.to_str().unwrap(),
        "--report",
        head_report.to_str().unwrap(),
    ])?;
    let mut out = vec![("bootstrap".to_string(), boot)];
    for name in [
        "test.json",
        "val.json",
        "head.json",
        SAMPLES_FILE,
        "matches.jsonl",
        "galleries/test/head.rfe",
    ] {
        out.push((
            name.to_string(),
            std::fs::read(dir.join(name)).map_err(|e| format!("{name}: {e}"))?,
        ));
    }
    Ok(out)
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = pipeline_run(tmp.path(), 1)?;
    let b = pipeline_run(tmp.path(), 4)?;
    let c = pipeline_run(tmp.path(), 4)?;
    let differing: Vec<&str> = a
        .iter()
        .zip(&b)
        .zip(&c)
        .filter(|((x, y), z)| x.1 != y.1 || y.1 != z.1)
        .map(|((x, _), _)| x.0.as_str())
        .collect();
    check(
        differing.is_empty(),
        format!(
            "{} artifacts byte-identical across 3 runs (threads 1, 4, 4)",
            a.len()
        ),
        format!("artifacts differ: {}", differing.join(", ")),
    )
}

// filtering

fn filtering() -> Outcome {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/filtering");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    for f in ["config.toml", "detections.jsonl"] {
        std::fs::copy(fixture.join(f), tmp.path().join(f)).map_err(|e| e.to_string())?;
    }
    let summary = ingest_dataset(tmp.path()).map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(tmp.path().join(SAMPLES_FILE)).map_err(|e| e.to_string())?;
    let got: BTreeSet<String> = reid_fuse::ingest::parse_samples(text.as_bytes())
        .map_err(|e| e.to_string())?
        .iter()
        .map(|r| format!("{} {}", r.split, r.id()))
        .collect();
    let expected: BTreeSet<String> = std::fs::read_to_string(fixture.join("expected_samples.txt"))
        .map_err(|e| e.to_string())?
        .lines()
        .map(str::to_string)
        .collect();
    let missing = expected.difference(&got).count();
    let extra = got.difference(&expected).count();
    check(
        missing == 0 && extra == 0 && summary.tracks_in == 50,
        format!(
            "{} tracks -> {} kept -> {} samples, exact match",
            summary.tracks_in,
            summary.tracks_kept,
            got.len()
        ),
        format!("{missing} expected samples missing, {extra} unexpected"),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |name: &str, start: Instant, outcome: Outcome| {
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("[PASS] {name}: {msg} ({secs:.1}s)"),
            Err(msg) => {
                failed += 1;
                println!("[FAIL] {name}: {msg} ({secs:.1}s)");
            }
        }
    };
    let t = Instant::now();
    report("AP oracle equivalence", t, ap_oracle());
    let t = Instant::now();
    report("fusion formula battery", t, fusion_battery());
    let t = Instant::now();
    report("slice geometry", t, geometry());
    let t = Instant::now();
    report("bootstrap calibration", t, bootstrap_calibration());
    let t = Instant::now();
    let (ensemble, holdout) = ensemble_and_holdout();
    report("ensemble beats single stream", t, ensemble);
    report("holdout lowers mAP", t, holdout);
    let t = Instant::now();
    report("parameter stability", t, stability());
    let t = Instant::now();
    report("determinism", t, determinism());
    let t = Instant::now();
    report("filtering golden fixture", t, filtering());
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
