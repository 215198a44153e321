use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::config::{ContentMode, RunConfig};
use super::validate::{validate, Inputs};
use super::{PipelineError, Stage};
use crate::alignment::{load_head, loss_curve_csv, save_head, train_alignment, AlignmentHead, AlignmentPair};
use crate::decouple::{alpha_sidecar, decouple_batch, normalize, pure_style_set, ContentSource, DecoupleOptions};
use crate::eval::{
    adjusted_rand_index, clustering_accuracy, encode_labels, filter_key, kmeans, mean_absolute_error,
    retrieval_table_tsv, score_rankings, spearman_rho, style_score, EvalError, MetricsReport, RelevanceSpec,
    RetrievalOptions,
};
use crate::retrieval::{rankings_tsv, RankedList, RetrievalIndex};
use crate::store::{
    align_sets, load_embedding_set, write_embedding_set, EmbeddingSet, FeatureRole, ManifestRecord, Split,
};
use crate::vector::to_f64;

pub const HEAD_FILE: &str = "head.sdah";
pub const LOSS_CURVE_FILE: &str = "loss_curve.csv";
pub const PURE_STYLE_FILE: &str = "s_pure.sdec";
pub const ALPHA_FILE: &str = "alpha.jsonl";
pub const RANKINGS_FILE: &str = "rankings.tsv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TSV: &str = "report.tsv";
const STAMPS_FILE: &str = "stages.json";
const LOCK_FILE: &str = ".sdec.lock";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    /// A valid artifact from an earlier run with the same inputs was kept.
    Reused,
    /// The configuration does not need this stage.
    NotNeeded,
}

#[derive(Debug)]
pub struct PipelineOutcome {
    pub report: Option<MetricsReport>,
    pub stages: Vec<(Stage, StageStatus)>,
    pub output_dir: PathBuf,
}

impl PipelineOutcome {
    pub fn status(&self, stage: Stage) -> Option<StageStatus> {
        self.stages.iter().find(|(s, _)| *s == stage).map(|&(_, st)| st)
    }
}

/// Exclusive claim on an output directory, released on drop.
pub(crate) struct OutputLock(PathBuf);

impl OutputLock {
    pub(crate) fn acquire(dir: &Path) -> Result<Self, PipelineError> {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(PipelineError::Locked(path)),
            Err(e) => Err(PipelineError::io(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    crate::store::codec::write_atomic(path, text.as_bytes()).map_err(|e| PipelineError::io(path, e))
}

pub(crate) fn read_stamps(dir: &Path) -> BTreeMap<String, String> {
    std::fs::read_to_string(dir.join(STAMPS_FILE)).ok().and_then(|t| serde_json::from_str(&t).ok()).unwrap_or_default()
}

fn write_stamps(dir: &Path, stamps: &BTreeMap<String, String>) -> Result<(), PipelineError> {
    write_text(&dir.join(STAMPS_FILE), &serde_json::to_string_pretty(stamps).unwrap())
}

/// Validates the config and returns the loaded inputs.
pub(crate) fn checked_inputs(cfg: &RunConfig) -> Result<Inputs, PipelineError> {
    let diagnostics = validate(cfg);
    if !diagnostics.is_clean() {
        return Err(PipelineError::Validation(diagnostics.issues));
    }
    Ok(diagnostics.inputs.expect("clean validation loads inputs"))
}

/// Trains the alignment head, or reuses `head.sdah` when it was produced
/// from the same settings.
pub(crate) fn align_stage(
    cfg: &RunConfig,
    inputs: &Inputs,
    force: bool,
    stamps: &mut BTreeMap<String, String>,
) -> Result<(AlignmentHead, StageStatus), PipelineError> {
    let dir = &cfg.output_dir;
    let head_path = dir.join(HEAD_FILE);
    let fingerprint = cfg.align_fingerprint();
    let c_dim = inputs.sets.get(&FeatureRole::ContentUnimodal).map(EmbeddingSet::dim);
    let b_dim = inputs.sets.get(&FeatureRole::ImageMultimodal).map(EmbeddingSet::dim);

    if !force && stamps.get("align") == Some(&fingerprint) {
        match load_head(&head_path) {
            Ok(head) if Some(head.dim_in()) == c_dim && Some(head.dim_out()) == b_dim => {
                log::info!("alignment stage skipped: reusing {}", head_path.display());
                return Ok((head, StageStatus::Reused));
            }
            Ok(_) => log::warn!("{} has stale dimensions; retraining", head_path.display()),
            Err(e) => log::warn!("{} unusable ({e}); retraining", head_path.display()),
        }
    }

    let fail = PipelineError::stage(Stage::Align);
    let table = align_sets(&inputs.sets, &inputs.manifest).map_err(fail)?;
    let pair = |row| {
        let get = |role| table.vector(row, role).map(to_f64);
        AlignmentPair {
            input: get(FeatureRole::ContentUnimodal).expect("validated role c"),
            teacher_img: get(FeatureRole::ImageMultimodal).expect("validated role b"),
            teacher_txt: get(FeatureRole::ContentText),
        }
    };
    let mut pairs: Vec<AlignmentPair> =
        table.rows().iter().filter(|r| table.record(r).split == Split::Train).map(pair).collect();
    if pairs.len() < 2 {
        log::info!("fewer than two train rows; aligning on all {} joined rows", table.len());
        pairs = table.rows().iter().map(pair).collect();
    }
    log::info!("training alignment head on {} pairs", pairs.len());
    let outcome = train_alignment(&pairs, &cfg.train, None).map_err(PipelineError::stage(Stage::Align))?;
    save_head(&outcome.head, &head_path).map_err(PipelineError::stage(Stage::Align))?;
    write_text(&dir.join(LOSS_CURVE_FILE), &loss_curve_csv(&outcome.loss_curve))?;
    stamps.insert("align".into(), fingerprint);
    write_stamps(dir, stamps)?;
    Ok((outcome.head, StageStatus::Ran))
}

pub(crate) fn decouple_options<'h>(cfg: &RunConfig, head: Option<&'h AlignmentHead>) -> DecoupleOptions<'h> {
    let content = match (cfg.decouple.content, head) {
        (ContentMode::Off, _) => ContentSource::Off,
        (ContentMode::Raw, _) => ContentSource::Raw,
        (ContentMode::Trained, Some(h)) => ContentSource::Aligned(h),
        (ContentMode::Trained, None) => unreachable!("trained content requires a head"),
    };
    DecoupleOptions { use_text: cfg.decouple.use_text, content, clamp_alpha: cfg.decouple.clamp_alpha }
}

/// Computes the pure style set in memory.
pub(crate) fn decouple_in_memory(
    cfg: &RunConfig,
    inputs: &Inputs,
    head: Option<&AlignmentHead>,
) -> Result<(EmbeddingSet, String), PipelineError> {
    let fail = PipelineError::stage(Stage::Decouple);
    let table = align_sets(&inputs.sets, &inputs.manifest).map_err(fail)?;
    let vectors =
        decouple_batch(&table, &decouple_options(cfg, head)).map_err(PipelineError::stage(Stage::Decouple))?;
    let set =
        pure_style_set(&vectors, &format!("{}-pure", cfg.model)).map_err(PipelineError::stage(Stage::Decouple))?;
    Ok((set, alpha_sidecar(&vectors)))
}

fn decouple_stage(
    cfg: &RunConfig,
    inputs: &Inputs,
    head: Option<&AlignmentHead>,
    force: bool,
    stamps: &mut BTreeMap<String, String>,
) -> Result<(EmbeddingSet, StageStatus), PipelineError> {
    let dir = &cfg.output_dir;
    let path = dir.join(PURE_STYLE_FILE);
    let head_hash = head.map(|h| hex::encode(Sha256::digest(h.to_bytes())));
    let fingerprint = cfg.decouple_fingerprint(head_hash.as_deref());
    if !force && stamps.get("decouple") == Some(&fingerprint) {
        match load_embedding_set(&path) {
            Ok(set) => {
                log::info!("decouple stage skipped: reusing {}", path.display());
                return Ok((set, StageStatus::Reused));
            }
            Err(e) => log::warn!("{} unusable ({e}); recomputing", path.display()),
        }
    }
    let (set, sidecar) = decouple_in_memory(cfg, inputs, head)?;
    write_embedding_set(&set, &path).map_err(PipelineError::stage(Stage::Decouple))?;
    write_text(&dir.join(ALPHA_FILE), &sidecar)?;
    stamps.insert("decouple".into(), fingerprint);
    write_stamps(dir, stamps)?;
    Ok((set, StageStatus::Ran))
}

fn subset(set: &EmbeddingSet, manifest: &[ManifestRecord], split: Split) -> Result<EmbeddingSet, PipelineError> {
    let rows = manifest
        .iter()
        .filter(|r| r.split == split)
        .filter_map(|r| set.get(&r.id).map(|row| (r.id.clone(), row.to_vec())));
    EmbeddingSet::from_rows(set.model_id(), set.dim(), rows).map_err(PipelineError::stage(Stage::Retrieve))
}

/// Query and gallery splits of the pure style set, plus the rankings.
pub(crate) fn retrieve(
    cfg: &RunConfig,
    manifest: &[ManifestRecord],
    pure: &EmbeddingSet,
) -> Result<(RetrievalIndex, Vec<RankedList>), PipelineError> {
    let queries = subset(pure, manifest, Split::Query)?;
    let gallery = subset(pure, manifest, Split::Gallery)?;
    let index = RetrievalIndex::build(&gallery).map_err(PipelineError::stage(Stage::Retrieve))?;
    let depth = cfg.ks.iter().copied().max().unwrap_or(1);
    let lists =
        index.batch_retrieve(&queries, depth, cfg.allow_self_match).map_err(PipelineError::stage(Stage::Retrieve))?;
    Ok((index, lists))
}

/// Retrieval, clustering and rating metrics for one pure style set.
pub(crate) fn evaluate(
    cfg: &RunConfig,
    manifest: &[ManifestRecord],
    pure: &EmbeddingSet,
    index: &RetrievalIndex,
    lists: &[RankedList],
) -> Result<MetricsReport, PipelineError> {
    let fail = || PipelineError::stage(Stage::Eval);
    let mut report = MetricsReport::new(cfg.model.clone());
    report.meta.config_hash = cfg.hash();
    let opts = RetrievalOptions { allow_self_match: cfg.allow_self_match, recall_mode: cfg.relevance.recall_mode };
    let spec = RelevanceSpec { label_field: cfg.relevance.label_field, label_filter: None };
    let overall = score_rankings(lists, manifest, index.ids(), &spec, &cfg.ks, opts).map_err(fail())?;
    report.metrics.extend(overall.metrics);
    let counts = &mut report.meta.counts;
    counts.insert("queries".into(), lists.len() as u64);
    counts.insert("gallery".into(), index.len() as u64);
    counts.insert("queries_evaluated".into(), overall.queries_evaluated as u64);
    counts.insert("queries_without_relevant".into(), overall.queries_without_relevant as u64);

    for style in &cfg.relevance.style_columns {
        let spec = RelevanceSpec { label_field: cfg.relevance.label_field, label_filter: Some(style.clone()) };
        let filtered = score_rankings(lists, manifest, index.ids(), &spec, &[1], opts).map_err(fail())?;
        report.metrics.insert(filter_key(style), filtered.metrics["mAP@1"]);
        report.meta.counts.insert(format!("queries[style={style}]"), filtered.queries_evaluated as u64);
    }

    // clustering over every query and gallery item
    let evaluated: Vec<&ManifestRecord> = manifest
        .iter()
        .filter(|r| matches!(r.split, Split::Query | Split::Gallery) && pure.position(&r.id).is_some())
        .collect();
    if evaluated.len() >= 2 {
        let points: Vec<Vec<f64>> = evaluated.iter().map(|r| to_f64(pure.get(&r.id).unwrap())).collect();
        let labels: Vec<&str> = evaluated.iter().map(|r| cfg.relevance.label_field.of(r)).collect();
        let (truth, k) = encode_labels(&labels);
        let clusters = kmeans(&points, k, cfg.seed, &cfg.kmeans).map_err(fail())?;
        report.metrics.insert("ACC".into(), clustering_accuracy(&clusters.assignments, &truth).map_err(fail())?);
        report.metrics.insert("ARI".into(), adjusted_rand_index(&clusters.assignments, &truth).map_err(fail())?);
        report.meta.counts.insert("clusters".into(), k as u64);
    }

    rating_metrics(manifest, pure, &mut report)?;
    if cfg.decouple.clamp_alpha {
        report.meta.notes.push("clamp_alpha: confidence weights limited to [0, 1]".into());
    }
    report.validate().map_err(fail())?;
    Ok(report)
}

/// Scores rated items against the mean style vector of gallery items that
/// share their style label.
fn rating_metrics(
    manifest: &[ManifestRecord],
    pure: &EmbeddingSet,
    report: &mut MetricsReport,
) -> Result<(), PipelineError> {
    let rated: Vec<&ManifestRecord> =
        manifest.iter().filter(|r| r.human_score.is_some() && pure.position(&r.id).is_some()).collect();
    if rated.is_empty() {
        return Ok(());
    }
    let mut sums: HashMap<&str, (Vec<f64>, usize)> = HashMap::new();
    for r in manifest.iter().filter(|r| r.split == Split::Gallery) {
        if let Some(v) = pure.get(&r.id) {
            let entry = sums.entry(r.style.as_str()).or_insert_with(|| (vec![0.0; pure.dim()], 0));
            entry.0.iter_mut().zip(v).for_each(|(s, &x)| *s += x as f64);
            entry.1 += 1;
        }
    }
    let (mut predicted, mut human) = (Vec::new(), Vec::new());
    for r in rated {
        let v = to_f64(pure.get(&r.id).unwrap());
        let Some((sum, count)) = sums.get(r.style.as_str()) else {
            continue;
        };
        let mut reference = sum.clone();
        if r.split == Split::Gallery {
            if *count < 2 {
                continue;
            }
            reference.iter_mut().zip(&v).for_each(|(s, x)| *s -= x);
        }
        let Ok(reference) = normalize(&reference) else {
            continue;
        };
        let Ok(v) = normalize(&v) else { continue };
        predicted.push(style_score(&v, &reference).map_err(PipelineError::stage(Stage::Eval))?);
        human.push(r.human_score.unwrap());
    }
    report.meta.counts.insert("rated_items".into(), predicted.len() as u64);
    if predicted.is_empty() {
        report.meta.notes.push("no rated item has a style reference in the gallery".into());
        return Ok(());
    }
    report
        .metrics
        .insert("MAE".into(), mean_absolute_error(&predicted, &human).map_err(PipelineError::stage(Stage::Eval))?);
    match spearman_rho(&predicted, &human) {
        Ok(rho) => {
            report.metrics.insert("spearman_rho".into(), rho);
        }
        Err(e @ (EvalError::ZeroVariance | EvalError::TooFewItems { .. })) => {
            report.meta.notes.push(format!("spearman_rho undefined: {e}"));
        }
        Err(e) => return Err(PipelineError::stage(Stage::Eval)(e)),
    }
    Ok(())
}

fn write_report(cfg: &RunConfig, report: &MetricsReport) -> Result<(), PipelineError> {
    write_text(&cfg.output_dir.join(REPORT_JSON), &report.to_json())?;
    write_text(
        &cfg.output_dir.join(REPORT_TSV),
        &retrieval_table_tsv(std::slice::from_ref(report), &cfg.relevance.style_columns),
    )
}

/// Runs every stage up to and including `until`.
///
/// Alignment and decoupling reuse artifacts produced from identical
/// settings unless `force` is set; retrieval and evaluation always rerun
/// and overwrite their outputs, which are deterministic.
pub fn run_until(cfg: &RunConfig, until: Stage, force: bool) -> Result<PipelineOutcome, PipelineError> {
    let inputs = checked_inputs(cfg)?;
    let mut stages = vec![(Stage::Validate, StageStatus::Ran)];
    let mut outcome = PipelineOutcome { report: None, stages: Vec::new(), output_dir: cfg.output_dir.clone() };
    if until == Stage::Validate {
        outcome.stages = stages;
        return Ok(outcome);
    }
    let _lock = OutputLock::acquire(&cfg.output_dir)?;
    let mut stamps = read_stamps(&cfg.output_dir);

    let head = if cfg.decouple.content == ContentMode::Trained {
        let (head, status) = align_stage(cfg, &inputs, force, &mut stamps)?;
        stages.push((Stage::Align, status));
        Some(head)
    } else {
        stages.push((Stage::Align, StageStatus::NotNeeded));
        None
    };

    if until >= Stage::Decouple {
        let (pure, status) = decouple_stage(cfg, &inputs, head.as_ref(), force, &mut stamps)?;
        stages.push((Stage::Decouple, status));
        if until >= Stage::Retrieve {
            let (index, lists) = retrieve(cfg, &inputs.manifest, &pure)?;
            write_text(&cfg.output_dir.join(RANKINGS_FILE), &rankings_tsv(&lists))?;
            stages.push((Stage::Retrieve, StageStatus::Ran));
            if until >= Stage::Eval {
                let report = evaluate(cfg, &inputs.manifest, &pure, &index, &lists)?;
                write_report(cfg, &report)?;
                stages.push((Stage::Eval, StageStatus::Ran));
                outcome.report = Some(report);
            }
        }
    }
    for (stage, status) in &stages {
        log::debug!("{stage}: {status:?}");
    }
    outcome.stages = stages;
    Ok(outcome)
}

pub fn run_pipeline(cfg: &RunConfig, force: bool) -> Result<PipelineOutcome, PipelineError> {
    run_until(cfg, Stage::Eval, force)
}

/// Distinct style labels among query rows, sorted.
pub fn query_styles(manifest: &[ManifestRecord]) -> BTreeSet<&str> {
    manifest.iter().filter(|r| r.split == Split::Query).map(|r| r.style.as_str()).collect()
}
