//! Drives a verification session: queue, retrieval, decisions, live mAP.
//!
//! Pass `--serve` to keep the HTTP API running on 127.0.0.1:8080 afterwards.

use std::sync::Arc;

use reid_fuse::eval::{EvalMode, MatchStatus};
use reid_fuse::pipeline::{ingest_dataset, Dataset, MATCHES_FILE};
use reid_fuse::service::{serve, SessionConfig, VerificationSession, VerifyRequest};
use reid_fuse::synth::{generate, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let data = generate(&SynthSpec {
        n_ids: 12,
        dim: 128,
        ..SynthSpec::default()
    })?;
    data.write(tmp.path())?;
    std::fs::remove_file(tmp.path().join(MATCHES_FILE))?;
    ingest_dataset(tmp.path())?;
    let dataset = Dataset::open(tmp.path(), None)?;
    dataset.build_galleries("test")?;
    let config = SessionConfig::new(dataset.config.fusion.clone());
    let session = VerificationSession::open(dataset, config)?;

    let queue = session.queue(3);
    println!("{} proposals queued", queue.total);
    for entry in &queue.entries {
        let top = session.retrieve(&entry.query.to_string(), 1)?;
        let best = &top.candidates[0];
        println!(
            "query {} -> {} (fused {:.4})",
            entry.query, best.sample, best.score
        );
        let truth = data
            .matches
            .iter()
            .any(|m| m.query == entry.query && m.gallery == entry.proposed);
        let status = if truth {
            MatchStatus::Confirmed
        } else {
            MatchStatus::Rejected
        };
        session.record_verification(VerifyRequest {
            query: entry.query,
            gallery: entry.proposed,
            status,
            annotator: "example".into(),
        })?;
    }
    match session.evaluation_snapshot(EvalMode::Test) {
        Ok(s) => println!(
            "{} confirmed pairs, test mAP {:.4} ({:.4}, {:.4})",
            s.confirmed_pairs, s.report.map, s.ci.lo, s.ci.hi
        ),
        Err(e) => println!("no evaluation yet: {e}"),
    }
    if std::env::args().any(|a| a == "--serve") {
        let runtime = tokio::runtime::Runtime::new()?;
        runtime.block_on(serve(Arc::new(session), "127.0.0.1:8080".parse()?))?;
    }
    Ok(())
}
