//! Full pipeline execution with per-record resumability.
//!
//! Stages run as sequential barriers: a stage's output file is complete
//! before the next stage reads from it. Within a stage, records are
//! processed concurrently up to the configured cap, but results are written
//! in input order, so a run over the same inputs is byte-reproducible.
//!
//! On restart, records whose ids already appear in a stage's output file
//! are not regenerated. The formatting stage is pure and costs no provider
//! calls, so it is rebuilt from scratch on every run (its records carry no
//! id to resume by).

use std::collections::HashMap;
use std::future::Future;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use futures::StreamExt;

use crate::data::{
    find_duplicate_id, read_stage_file, read_stage_file_resume, DataError, RawQuestion, ReadMode,
    StageAppender, StageRecord,
};

use super::stages::{FailedEntry, PipelineCtx, StageOutcome};
use super::summary::{RunSummary, StageCounts};
use super::PipelineError;

pub const STAGE_FILE_NAMES: [&str; 5] = [
    "01_enhanced.jsonl",
    "02_rejected.jsonl",
    "03_rag.jsonl",
    "04_final.jsonl",
    "05_dpo.jsonl",
];
pub const FAILED_FILE_NAME: &str = "failed.jsonl";

/// Paths of every artifact a run writes.
#[derive(Debug, Clone)]
pub struct StagePaths {
    pub enhanced: PathBuf,
    pub rejected: PathBuf,
    pub rag: PathBuf,
    pub final_: PathBuf,
    pub dpo: PathBuf,
    pub failed: PathBuf,
}

impl StagePaths {
    pub fn new(out_dir: &Path) -> Self {
        Self {
            enhanced: out_dir.join(STAGE_FILE_NAMES[0]),
            rejected: out_dir.join(STAGE_FILE_NAMES[1]),
            rag: out_dir.join(STAGE_FILE_NAMES[2]),
            final_: out_dir.join(STAGE_FILE_NAMES[3]),
            dpo: out_dir.join(STAGE_FILE_NAMES[4]),
            failed: out_dir.join(FAILED_FILE_NAME),
        }
    }

    pub fn any_stage_file_exists(&self) -> bool {
        [&self.enhanced, &self.rejected, &self.rag, &self.final_, &self.dpo]
            .iter()
            .any(|p| p.exists())
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Continue into an output directory that already holds stage files.
    pub resume: bool,
    /// Stop after this stage (1-5) completes; later stages do not run.
    pub stop_after: Option<u8>,
    /// Cooperative cancellation: when set, no new records are dispatched,
    /// in-flight records finish, and the summary is marked interrupted.
    pub cancel: Option<Arc<AtomicBool>>,
}

impl RunOptions {
    pub fn resume() -> Self {
        Self {
            resume: true,
            ..Self::default()
        }
    }

    fn cancelled(&self) -> bool {
        self.cancel
            .as_ref()
            .map(|flag| flag.load(Ordering::SeqCst))
            .unwrap_or(false)
    }
}

/// Drives one stage: skips records already present in the output, dispatches
/// the rest concurrently (results written in input order), quarantines
/// failures, and returns the stage's outputs in input order.
async fn drive_stage<I, O, F, Fut>(
    stage_name: &str,
    inputs: Vec<I>,
    output_path: &Path,
    failed_log: &mut StageAppender,
    concurrency: usize,
    cancel: Option<&Arc<AtomicBool>>,
    op: F,
) -> Result<(Vec<O>, StageCounts), PipelineError>
where
    I: StageRecord + Send + 'static,
    O: StageRecord + Send + 'static,
    F: Fn(I) -> Fut,
    Fut: Future<Output = Result<StageOutcome<O>, FailedEntry>>,
{
    let mut counts = StageCounts::new(stage_name);
    counts.input = inputs.len();

    let existing = read_stage_file_resume::<O>(output_path)?.records;
    let mut done: HashMap<String, O> = existing
        .into_iter()
        .filter_map(|rec| {
            let id = rec.record_id()?.to_string();
            Some((id, rec))
        })
        .collect();

    let mut writer = StageAppender::open(output_path)?;

    // Partition into already-done and pending, preserving input order via
    // the slot index.
    let mut merged: Vec<Option<O>> = Vec::with_capacity(inputs.len());
    let mut pending: Vec<(usize, I)> = Vec::new();
    for (slot, input) in inputs.into_iter().enumerate() {
        let id = input
            .record_id()
            .expect("pipeline stage inputs carry ids")
            .to_string();
        match done.remove(&id) {
            Some(existing_rec) => {
                counts.success += 1;
                merged.push(Some(existing_rec));
            }
            None => {
                merged.push(None);
                pending.push((slot, input));
            }
        }
    }

    let op = &op;
    let mut dispatched = 0usize;
    let mut stream = futures::stream::iter(pending.into_iter().map(|(slot, input)| async move {
        (slot, op(input).await)
    }))
    .take_while(|_| {
        let stop = cancel
            .map(|flag| flag.load(Ordering::SeqCst))
            .unwrap_or(false);
        futures::future::ready(!stop)
    })
    .buffered(concurrency.max(1));

    while let Some((slot, outcome)) = stream.next().await {
        dispatched += 1;
        match outcome {
            Ok(StageOutcome::Produced(record)) => {
                writer.append(&record)?;
                counts.success += 1;
                merged[slot] = Some(record);
            }
            Ok(StageOutcome::Skipped { .. }) => {
                counts.skipped += 1;
            }
            Err(failure) => {
                failed_log.append_json(&failure)?;
                counts.failed += 1;
            }
        }
    }
    let _ = dispatched;

    Ok((merged.into_iter().flatten().collect(), counts))
}

/// Runs stages 1-5 end to end with explicitly provided backends.
pub async fn run_pipeline_with(
    raw_path: &Path,
    out_dir: &Path,
    ctx: &PipelineCtx,
    opts: &RunOptions,
) -> Result<RunSummary, PipelineError> {
    std::fs::create_dir_all(out_dir).map_err(|err| DataError::Io {
        path: out_dir.to_path_buf(),
        source: err,
    })?;
    let paths = StagePaths::new(out_dir);
    if !opts.resume && paths.any_stage_file_exists() {
        return Err(PipelineError::OutputExists {
            dir: out_dir.to_path_buf(),
        });
    }

    // User-supplied input: lenient read, then validate.
    let raws: Vec<RawQuestion> = read_stage_file(raw_path, ReadMode::Lenient)?;
    for (index, raw) in raws.iter().enumerate() {
        let report = raw.validate();
        if !report.is_valid() {
            return Err(DataError::InvalidRecord { index, report }.into());
        }
    }
    if let Some(id) = find_duplicate_id(&raws) {
        return Err(DataError::DuplicateId { id }.into());
    }

    // The fault quarantine is per-run.
    let mut failed_log = StageAppender::create(&paths.failed)?;
    let mut summary = RunSummary::default();
    let cancel = opts.cancel.as_ref();
    let cap = ctx.concurrency;

    macro_rules! barrier {
        ($stage:expr) => {
            if opts.stop_after == Some($stage) {
                return Ok(summary);
            }
            if opts.cancelled() {
                summary.interrupted = true;
                return Ok(summary);
            }
        };
    }

    // Stage 1: question enhancement.
    let (enhanced, counts) = drive_stage(
        "enhance",
        raws,
        &paths.enhanced,
        &mut failed_log,
        cap,
        cancel,
        |rec| async move { ctx.enhance_question(&rec).await.map(StageOutcome::Produced) },
    )
    .await?;
    summary.interrupted |= counts.input != counts.success + counts.failed + counts.skipped;
    summary.stages.push(counts);
    barrier!(1);

    // Stage 2: rejected samples.
    let (rejected, counts) = drive_stage(
        "reject",
        enhanced,
        &paths.rejected,
        &mut failed_log,
        cap,
        cancel,
        |rec| async move { ctx.generate_rejected(&rec).await.map(StageOutcome::Produced) },
    )
    .await?;
    summary.interrupted |= counts.input != counts.success + counts.failed + counts.skipped;
    summary.stages.push(counts);
    barrier!(2);

    // Stage 3: external knowledge integration.
    let (rag, counts) = drive_stage(
        "rag",
        rejected,
        &paths.rag,
        &mut failed_log,
        cap,
        cancel,
        |rec| async move { ctx.integrate_knowledge(&rec).await },
    )
    .await?;
    summary.interrupted |= counts.input != counts.success + counts.failed + counts.skipped;
    summary.stages.push(counts);
    barrier!(3);

    // Stage 4: preferred reasoning chain and answer.
    let (finals, counts) = drive_stage(
        "final",
        rag,
        &paths.final_,
        &mut failed_log,
        cap,
        cancel,
        |rec| async move { ctx.build_preferred(&rec).await.map(StageOutcome::Produced) },
    )
    .await?;
    summary.interrupted |= counts.input != counts.success + counts.failed + counts.skipped;
    summary.stages.push(counts);
    barrier!(4);

    // Stage 5: training-triple formatting. Pure, no provider calls, no ids
    // in the output schema: rebuilt every run.
    let mut counts = StageCounts::new("dpo");
    counts.input = finals.len();
    let mut writer = StageAppender::create(&paths.dpo)?;
    for rec in &finals {
        match ctx.format_dpo(rec) {
            Ok(triple) => {
                writer.append(&triple)?;
                counts.success += 1;
            }
            Err(failure) => {
                failed_log.append_json(&failure)?;
                counts.failed += 1;
            }
        }
    }
    summary.stages.push(counts);

    Ok(summary)
}

/// Runs the pipeline with backends built from the config.
pub async fn run_pipeline(
    raw_path: &Path,
    out_dir: &Path,
    config: &super::PipelineConfig,
    opts: &RunOptions,
) -> Result<RunSummary, PipelineError> {
    let ctx = PipelineCtx::new(config)?;
    run_pipeline_with(raw_path, out_dir, &ctx, opts).await
}
