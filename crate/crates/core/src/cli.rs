//! Command-line front end of the `reid-fuse` binary.

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::eval::{model_compare, EvalMode, EvalReport, ModelEntry, RowScorer};
use crate::fusion::{sweep, without_stream, SweepAxis};
use crate::geometry::GeometryParams;
use crate::model::{parse_stream_list, FusionParams, SampleId, StreamId};
use crate::pipeline::{
    ingest, retrieve_topk, Dataset, Protocol, DETECTIONS_FILE, EMBEDDINGS_DIR, SAMPLES_FILE,
};
use crate::report::{
    ci_table, comparison_table, holdout_table, pairwise_table, sweep_table, HoldoutRow,
};
use crate::service::{serve, SessionConfig, VerificationSession};
use crate::stats::{bootstrap_ci, bootstrap_ci_grouped, pairwise_matrix, BootstrapParams};
use crate::synth::{generate, SynthSpec};

#[derive(Debug, Parser)]
#[command(
    name = "reid-fuse",
    version,
    about = "Patch-ensemble re-identification engine"
)]
pub struct Cli {
    /// Worker threads for parallel steps (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for every random choice of the command.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Engine configuration; overrides `<dataset>/config.toml`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print machine-readable JSON instead of text tables.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter tracker output and write the split sample list.
    Ingest(IngestArgs),
    /// Compute slice crop descriptors for every sample of a split.
    SliceGeometry(SliceArgs),
    /// Build per-stream gallery indices for a split.
    Gallery(GalleryArgs),
    /// Rank a gallery for one query sample.
    Retrieve(RetrieveArgs),
    /// Evaluate a stream or the fused ensemble and write a report.
    Evaluate(EvaluateArgs),
    /// Confidence intervals and pairwise significance over reports.
    Bootstrap(BootstrapArgs),
    /// Vary one fusion parameter over a grid.
    Sweep(SweepArgs),
    /// Remove one stream at a time from the ensemble.
    Holdout(HoldoutArgs),
    /// Generate a synthetic dataset directory.
    Synth(SynthArgs),
    /// Validation and test mAP with confidence intervals, one row per model.
    Compare(CompareArgs),
    /// Run the verification HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Dataset directory.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Detections file (default `<dataset>/detections.jsonl`).
    #[arg(long)]
    pub detections: Option<PathBuf>,
    /// Embedding directory checked for completeness (default `<dataset>/embeddings`).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SliceArgs {
    /// Dataset directory.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Split to process.
    #[arg(long, default_value = "val")]
    pub split: String,
    /// Output JSONL, one line per sample.
    #[arg(long)]
    pub out: PathBuf,
    /// Angle between the swimming direction and the corner search directions.
    #[arg(long, default_value_t = 70.0)]
    pub corner_offset_deg: f64,
    /// Slice overlap as a fraction of each slice's width.
    #[arg(long, default_value_t = 2.0 / 14.0)]
    pub overlap: f64,
}

#[derive(Debug, Args)]
pub struct GalleryArgs {
    /// Dataset directory.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Split to index.
    #[arg(long, default_value = "test")]
    pub split: String,
}

#[derive(Debug, Args, Clone)]
pub struct FusionArgs {
    /// Comma-separated streams to fuse (default: configured set).
    #[arg(long)]
    pub streams: Option<String>,
    /// Weight of the reciprocal-rank term, in [0, 1].
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Similarity temperature.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Reciprocal-rank offset.
    #[arg(long)]
    pub k: Option<u32>,
}

impl FusionArgs {
    fn resolve(&self, config: &EngineConfig) -> Result<FusionParams> {
        let mut p = config.fusion.clone();
        if let Some(s) = &self.streams {
            p.streams = parse_stream_list(s).into_iter().collect();
        }
        if let Some(l) = self.lambda {
            p.lambda = l;
        }
        if let Some(t) = self.tau {
            p.tau = t;
        }
        if let Some(k) = self.k {
            p.k = k;
        }
        p.validate()?;
        if let Some(s) = p.streams.iter().find(|s| !config.registry.contains(s)) {
            return Err(crate::error::ConfigError::UnknownStream(s.to_string()).into());
        }
        Ok(p)
    }
}

#[derive(Debug, Args, Clone)]
pub struct ProtocolArgs {
    /// `val` (within-trajectory) or `test` (cross-camera, verified matches).
    #[arg(long, default_value = "test")]
    pub mode: String,
    /// Split holding the queries.
    #[arg(long, default_value = "val")]
    pub query_split: String,
    /// Split holding the gallery.
    #[arg(long, default_value = "test")]
    pub gallery_split: String,
    /// Images sampled per trajectory in validation mode.
    #[arg(long, default_value_t = 5)]
    pub per_id: usize,
    /// Use every image of the split as validation gallery.
    #[arg(long)]
    pub full_gallery: bool,
}

impl ProtocolArgs {
    fn protocol(&self, seed: u64) -> Result<Protocol> {
        let mode: EvalMode = self.mode.parse().map_err(Error::Usage)?;
        let mut p = match mode {
            EvalMode::Val => Protocol::validation(&self.query_split, seed),
            EvalMode::Test => Protocol::test(&self.query_split, &self.gallery_split),
        };
        p.per_id = self.per_id;
        if self.full_gallery {
            p.gallery = crate::eval::ValidationGallery::FullSplit;
        }
        Ok(p)
    }
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    /// Dataset directory.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Query sample as `camera:trajectory:frame`.
    #[arg(long)]
    pub query: SampleId,
    /// Number of candidates to print.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    /// Split holding the gallery.
    #[arg(long, default_value = "test")]
    pub gallery_split: String,
    #[command(flatten)]
    pub fusion: FusionArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Dataset directory.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Evaluate a single stream by cosine similarity instead of the fusion.
    #[arg(long, conflicts_with = "streams")]
    pub stream: Option<String>,
    #[command(flatten)]
    pub fusion: FusionArgs,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    /// Report file (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    /// Reports written by `evaluate`.
    #[arg(long = "report", required = true)]
    pub reports: Vec<PathBuf>,
    /// Bootstrap resamples.
    #[arg(long, default_value_t = 50_000)]
    pub resamples: usize,
    /// Family-wise significance level before Bonferroni correction.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Resample whole query trajectories instead of single queries.
    #[arg(long)]
    pub trajectory_level: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Dataset directory.
    #[arg(long)]
    pub dataset: PathBuf,
    /// lambda, tau or k.
    #[arg(long)]
    pub axis: SweepAxis,
    /// Comma-separated grid (default: the standard grid of the axis).
    #[arg(long)]
    pub values: Option<String>,
    #[command(flatten)]
    pub fusion: FusionArgs,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
}

#[derive(Debug, Args)]
pub struct HoldoutArgs {
    /// Dataset directory.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Stream to mark in the table; a unique prefix is enough. Every stream
    /// is held out in turn either way.
    #[arg(long)]
    pub drop: Option<String>,
    #[command(flatten)]
    pub fusion: FusionArgs,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML spec; omitted fields take their defaults.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// `name:val_report:test_report`; either report path may be empty.
    #[arg(long = "model", required = true)]
    pub models: Vec<String>,
    /// Bootstrap resamples.
    #[arg(long, default_value_t = 50_000)]
    pub resamples: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Dataset directory.
    #[arg(long)]
    pub dataset: PathBuf,
    /// TCP port to listen on.
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: std::net::IpAddr,
    /// Root directory of the images referenced by samples.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Stream whose proposals are interleaved into the queue.
    #[arg(long)]
    pub baseline: Option<String>,
    /// Split holding the queries.
    #[arg(long, default_value = "val")]
    pub query_split: String,
    /// Split holding the gallery.
    #[arg(long, default_value = "test")]
    pub gallery_split: String,
    #[command(flatten)]
    pub fusion: FusionArgs,
}

/// Parses `argv`, runs the command, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    match run(cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load_config(cli: &Cli, dataset: &Path) -> Result<EngineConfig> {
    match &cli.config {
        Some(p) => EngineConfig::load(p),
        None => EngineConfig::load(&dataset.join(crate::pipeline::CONFIG_FILE)),
    }
}

fn open(cli: &Cli, dataset: &Path) -> Result<Dataset> {
    Dataset::open(dataset, Some(load_config(cli, dataset)?))
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

fn emit_json<T: serde::Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json("<stdout>", e))?;
    emit(out, &(text + "\n"))
}

/// Runs a parsed command, writing human or JSON output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.threads {
        Some(n) if n > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Usage(e.to_string()))?;
            let mut buf = Vec::new();
            let result = pool.install(|| dispatch(&cli, &mut buf));
            emit(out, &String::from_utf8_lossy(&buf))?;
            result
        }
        Some(_) => Err(Error::Usage("--threads must be positive".into())),
        None => dispatch(&cli, out),
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(cli, a, out),
        Command::SliceGeometry(a) => cmd_slice(cli, a, out),
        Command::Gallery(a) => cmd_gallery(cli, a, out),
        Command::Retrieve(a) => cmd_retrieve(cli, a, out),
        Command::Evaluate(a) => cmd_evaluate(cli, a, out),
        Command::Bootstrap(a) => cmd_bootstrap(cli, a, out),
        Command::Sweep(a) => cmd_sweep(cli, a, out),
        Command::Holdout(a) => cmd_holdout(cli, a, out),
        Command::Synth(a) => cmd_synth(cli, a, out),
        Command::Compare(a) => cmd_compare(cli, a, out),
        Command::Serve(a) => cmd_serve(cli, a),
    }
}

fn cmd_ingest(cli: &Cli, a: &IngestArgs, out: &mut dyn Write) -> Result<()> {
    let config = load_config(cli, &a.dataset)?;
    let detections = a
        .detections
        .clone()
        .unwrap_or_else(|| a.dataset.join(DETECTIONS_FILE));
    let emb = a
        .embeddings
        .clone()
        .unwrap_or_else(|| a.dataset.join(EMBEDDINGS_DIR));
    let summary = ingest(
        &detections,
        &config,
        emb.is_dir().then_some(emb.as_path()),
        &a.dataset.join(SAMPLES_FILE),
    )?;
    if cli.json {
        return emit_json(out, &summary);
    }
    let mut text = format!(
        "tracks: {} in, {} kept; detections: {}\n",
        summary.tracks_in, summary.tracks_kept, summary.detections_in
    );
    for (split, n) in &summary.samples {
        text += &format!("split {split}: {n} samples\n");
    }
    emit(out, &text)
}

fn cmd_slice(cli: &Cli, a: &SliceArgs, out: &mut dyn Write) -> Result<()> {
    let ds = open(cli, &a.dataset)?;
    let params = GeometryParams {
        corner_offset_deg: a.corner_offset_deg,
        overlap_fraction: a.overlap,
        ..GeometryParams::default()
    };
    let results = ds.slice_geometry(&a.split, &params)?;
    let mut file =
        std::io::BufWriter::new(std::fs::File::create(&a.out).map_err(|e| Error::io(&a.out, e))?);
    let mut failed = 0;
    for (id, crops) in &results {
        let line = match crops {
            Ok(c) => serde_json::json!({ "sample": id, "crops": c }),
            Err(msg) => {
                failed += 1;
                log::warn!("{id}: {msg}");
                serde_json::json!({ "sample": id, "error": msg })
            }
        };
        writeln!(file, "{line}").map_err(|e| Error::io(&a.out, e))?;
    }
    file.flush().map_err(|e| Error::io(&a.out, e))?;
    emit(
        out,
        &format!("{} samples, {} failed\n", results.len(), failed),
    )
}

fn cmd_gallery(cli: &Cli, a: &GalleryArgs, out: &mut dyn Write) -> Result<()> {
    let ds = open(cli, &a.dataset)?;
    let built = ds.build_galleries(&a.split)?;
    let mut text = String::new();
    for g in &built {
        text += &format!(
            "{} {}: {} items, dim {}\n",
            a.split,
            g.stream,
            g.len(),
            g.dim()
        );
    }
    emit(out, &text)
}

fn cmd_retrieve(cli: &Cli, a: &RetrieveArgs, out: &mut dyn Write) -> Result<()> {
    let ds = open(cli, &a.dataset)?;
    let params = a.fusion.resolve(&ds.config)?;
    let galleries = ds.load_galleries(&a.gallery_split, &params.streams)?;
    let vectors = params
        .streams
        .iter()
        .map(|s| {
            ds.embeddings
                .get(s, &a.query)
                .map(|v| (s.clone(), v))
                .ok_or_else(|| Error::Usage(format!("no {s} embedding for query {}", a.query)))
        })
        .collect::<Result<_>>()?;
    let (_, top) = retrieve_topk(&a.query, &vectors, &galleries, &params, a.top)?;
    if cli.json {
        return emit_json(out, &top);
    }
    let mut text = format!("{:>4}  {:<20}  score\n", "rank", "sample");
    for c in &top {
        text += &format!(
            "{:>4}  {:<20}  {:.6}\n",
            c.rank,
            c.sample.to_string(),
            c.score
        );
    }
    emit(out, &text)
}

fn scorer<'a>(
    ds: &'a Dataset,
    stream: &Option<String>,
    params: &FusionParams,
) -> Result<Box<dyn RowScorer + 'a>> {
    Ok(match stream {
        Some(s) => {
            let id = StreamId::new(s);
            if !ds.config.registry.contains(&id) {
                return Err(crate::error::ConfigError::UnknownStream(s.clone()).into());
            }
            Box::new(ds.stream_scorer(id))
        }
        None => Box::new(ds.fusion_scorer(params.clone())),
    })
}

fn cmd_evaluate(cli: &Cli, a: &EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let ds = open(cli, &a.dataset)?;
    let params = a.fusion.resolve(&ds.config)?;
    let scorer = scorer(&ds, &a.stream, &params)?;
    let report = ds.evaluate(scorer.as_ref(), &a.protocol.protocol(cli.seed)?)?;
    if let Some(path) = &a.out {
        report.save(path)?;
    }
    if cli.json {
        return emit_json(out, &report);
    }
    emit(
        out,
        &format!(
            "{} {} mAP {:.4} over {} queries\n",
            report.descriptor,
            a.protocol.mode,
            report.map,
            report.per_query.len()
        ),
    )
}

fn report_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn cmd_bootstrap(cli: &Cli, a: &BootstrapArgs, out: &mut dyn Write) -> Result<()> {
    let params = BootstrapParams {
        resamples: a.resamples,
        alpha: a.alpha,
        seed: cli.seed,
        ..BootstrapParams::default()
    };
    let reports: Vec<(String, EvalReport)> = a
        .reports
        .iter()
        .map(|p| Ok((report_name(p), EvalReport::load(p)?)))
        .collect::<Result<_>>()?;
    let cis = reports
        .iter()
        .map(|(name, r)| {
            let ci = if a.trajectory_level {
                let groups: Vec<_> = r
                    .per_query
                    .iter()
                    .map(|q| q.query.trajectory_key())
                    .collect();
                bootstrap_ci_grouped(&r.aps(), &groups, &params)?
            } else {
                bootstrap_ci(&r.aps(), &params)?
            };
            Ok((name.clone(), ci))
        })
        .collect::<Result<Vec<_>>>()?;
    let matrix = if reports.len() > 1 {
        let first = reports[0].1.query_ids();
        if reports.iter().any(|(_, r)| r.query_ids() != first) {
            return Err(crate::eval::EvalError::QuerySetMismatch.into());
        }
        let models: Vec<(String, Vec<f64>)> =
            reports.iter().map(|(n, r)| (n.clone(), r.aps())).collect();
        Some(pairwise_matrix(&models, &params)?)
    } else {
        None
    };
    if cli.json {
        return emit_json(
            out,
            &serde_json::json!({ "intervals": cis, "pairwise": matrix }),
        );
    }
    let mut text = ci_table(&cis);
    if let Some(m) = &matrix {
        text += "\n";
        text += &pairwise_table(m);
    }
    emit(out, &text)
}

fn parse_values(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Usage(format!("bad grid value {v:?}")))
        })
        .collect()
}

fn cmd_sweep(cli: &Cli, a: &SweepArgs, out: &mut dyn Write) -> Result<()> {
    let ds = open(cli, &a.dataset)?;
    let base = a.fusion.resolve(&ds.config)?;
    let protocol = a.protocol.protocol(cli.seed)?;
    let values = match &a.values {
        Some(v) => parse_values(v)?,
        None => a.axis.standard_grid().to_vec(),
    };
    let table = sweep(&base, a.axis, &values, |p| {
        p.validate()?;
        Ok::<f64, Error>(ds.evaluate(&ds.fusion_scorer(p.clone()), &protocol)?.map)
    })?;
    if cli.json {
        return emit_json(out, &table);
    }
    emit(out, &sweep_table(&table))
}

/// Resolves a stream name or unique prefix.
fn resolve_stream(name: &str, streams: &std::collections::BTreeSet<StreamId>) -> Result<StreamId> {
    let exact = StreamId::new(name);
    if streams.contains(&exact) {
        return Ok(exact);
    }
    let hits: Vec<&StreamId> = streams
        .iter()
        .filter(|s| s.as_str().starts_with(name))
        .collect();
    match hits.as_slice() {
        [one] => Ok((*one).clone()),
        [] => Err(crate::error::ConfigError::UnknownStream(name.into()).into()),
        _ => Err(Error::Usage(format!("stream prefix {name:?} is ambiguous"))),
    }
}

fn cmd_holdout(cli: &Cli, a: &HoldoutArgs, out: &mut dyn Write) -> Result<()> {
    let ds = open(cli, &a.dataset)?;
    let params = a.fusion.resolve(&ds.config)?;
    let marked = a
        .drop
        .as_deref()
        .map(|d| resolve_stream(d, &params.streams))
        .transpose()?;
    let protocol = a.protocol.protocol(cli.seed)?;
    let eval = |p: &FusionParams| -> Result<f64> {
        Ok(ds.evaluate(&ds.fusion_scorer(p.clone()), &protocol)?.map)
    };
    let mut rows = vec![HoldoutRow {
        removed: None,
        map: eval(&params)?,
    }];
    for s in &params.streams {
        let mut name = s.to_string();
        if marked.as_ref() == Some(s) {
            name.push_str(" *");
        }
        rows.push(HoldoutRow {
            removed: Some(name),
            map: eval(&without_stream(&params, s)?)?,
        });
    }
    if cli.json {
        return emit_json(out, &rows);
    }
    emit(out, &holdout_table(&rows, &a.protocol.mode))
}

fn cmd_synth(cli: &Cli, a: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let mut spec = match &a.spec {
        Some(p) => SynthSpec::load(p)?,
        None => SynthSpec::default(),
    };
    if a.spec.is_none() || cli.seed != 0 {
        spec.seed = cli.seed;
    }
    let data = generate(&spec)?;
    data.write(&a.out)?;
    let counts: Vec<String> = data
        .samples
        .iter()
        .map(|(k, v)| format!("{k} {}", v.len()))
        .collect();
    emit(
        out,
        &format!(
            "wrote {} ({} identities, samples: {})\n",
            a.out.display(),
            spec.n_ids,
            counts.join(", ")
        ),
    )
}

fn cmd_compare(cli: &Cli, a: &CompareArgs, out: &mut dyn Write) -> Result<()> {
    let load = |p: &str| -> Result<Option<EvalReport>> {
        if p.is_empty() {
            Ok(None)
        } else {
            EvalReport::load(Path::new(p)).map(Some)
        }
    };
    let models = a
        .models
        .iter()
        .map(|m| {
            let parts: Vec<&str> = m.splitn(3, ':').collect();
            let [name, val, test] = parts.as_slice() else {
                return Err(Error::Usage(format!(
                    "--model expects name:val_report:test_report, got {m:?}"
                )));
            };
            Ok(ModelEntry {
                name: name.to_string(),
                val: load(val)?,
                test: load(test)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let params = BootstrapParams {
        resamples: a.resamples,
        seed: cli.seed,
        ..BootstrapParams::default()
    };
    let table = model_compare(&models, &params)?;
    if cli.json {
        return emit_json(out, &table);
    }
    emit(out, &comparison_table(&table))
}

fn cmd_serve(cli: &Cli, a: &ServeArgs) -> Result<()> {
    let ds = open(cli, &a.dataset)?;
    let mut cfg = SessionConfig::new(a.fusion.resolve(&ds.config)?);
    cfg.baseline = a.baseline.as_deref().map(StreamId::new);
    cfg.images = a.images.clone();
    cfg.query_split = a.query_split.clone();
    cfg.gallery_split = a.gallery_split.clone();
    cfg.seed = cli.seed;
    let session = VerificationSession::open(ds, cfg).map_err(|e| Error::Usage(e.to_string()))?;
    let addr = SocketAddr::new(a.bind, a.port);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io("<runtime>", e))?;
    runtime
        .block_on(serve(Arc::new(session), addr))
        .map_err(|e| Error::io(addr.to_string(), e))
}
