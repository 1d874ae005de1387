//! End-to-end orchestration: train, predict, key frames, map, fuse, tune, evaluate.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{Dataset, EventTaxonomy, ScoreMatrix, ThresholdVector};
use crate::error::{Error, Result};
use crate::fuse::{
    default_weights, fuse_scores, micro_f1_at, tune_thresholds, FusionWeights, TunerConfig,
};
use crate::io::{self, ClipKeyframes, ClipObjects};
use crate::metrics::{apply_thresholds, per_class_f1};
use crate::mil::{self, FrameScorer, TrainConfig, TrainHistory};
use crate::repsel::{extract_keyframes, RepselConfig};
use crate::vmap::{aggregate_keyframes, EmbeddingStore, EventMapper, DEFAULT_TOP_K};

/// Environment variable holding the worker-pool size for per-clip stages.
pub const WORKERS_ENV: &str = "AVTAG_WORKERS";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Splits {
    pub train: Vec<String>,
    pub valid: Vec<String>,
    pub test: Vec<String>,
}

impl Splits {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (name, ids) in [
            ("train", &self.train),
            ("valid", &self.valid),
            ("test", &self.test),
        ] {
            if ids.is_empty() {
                return Err(Error::Config(format!("split `{name}` is empty")));
            }
            for id in ids {
                if !seen.insert(id.as_str()) {
                    return Err(Error::Config(format!(
                        "clip `{id}` appears in more than one split"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Where the per-event fusion weights come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum FusionSource {
    /// Favor video (0.8) on events where it beats audio on validation F1,
    /// keeping audio-only weights if that does not improve validation micro F1.
    Derived,
    File {
        path: PathBuf,
    },
    AudioOnly,
}

/// Criterion for keeping the best training epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSelection {
    ValidLoss,
    ValidMicroF1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub events_file: PathBuf,
    pub features_dir: PathBuf,
    pub labels_file: PathBuf,
    pub objects_file: PathBuf,
    pub embeddings_file: PathBuf,
    /// Per-clip video frame features; when absent every listed frame is a key frame.
    #[serde(default)]
    pub video_features_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub splits: Splits,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub repsel: RepselConfig,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_fusion")]
    pub fusion: FusionSource,
    #[serde(default)]
    pub tuner: TunerConfig,
    #[serde(default = "default_selection")]
    pub select_by: ModelSelection,
    #[serde(default)]
    pub seed: u64,
}

fn default_top_k() -> usize {
    DEFAULT_TOP_K
}

fn default_fusion() -> FusionSource {
    FusionSource::Derived
}

fn default_selection() -> ModelSelection {
    ModelSelection::ValidMicroF1
}

impl PipelineConfig {
    /// Read a JSON config; relative paths resolve against the config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = io::read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.events_file);
        fix(&mut self.features_dir);
        fix(&mut self.labels_file);
        fix(&mut self.objects_file);
        fix(&mut self.embeddings_file);
        fix(&mut self.output_dir);
        if let Some(p) = self.video_features_dir.as_mut() {
            fix(p);
        }
        if let FusionSource::File { path } = &mut self.fusion {
            fix(path);
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in [
            &self.events_file,
            &self.features_dir,
            &self.labels_file,
            &self.objects_file,
            &self.embeddings_file,
        ]
        .into_iter()
        .chain(self.video_features_dir.as_ref())
        {
            if !p.exists() {
                return Err(Error::Config(format!(
                    "path does not exist: {}",
                    p.display()
                )));
            }
        }
        if let FusionSource::File { path } = &self.fusion {
            if !path.exists() {
                return Err(Error::Config(format!(
                    "weights file missing: {}",
                    path.display()
                )));
            }
        }
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be >= 1".into()));
        }
        self.splits.validate()?;
        self.train.validate()?;
        self.repsel.validate()
    }

    /// SHA-256 of the config with the output directory blanked.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Deterministic per-stage seed derived from the run seed.
pub fn stage_seed(seed: u64, stage: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage);
    rng.next_u64()
}

pub const STAGE_INIT: u64 = 1;
pub const STAGE_TUNE: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchScores {
    pub branch: String,
    pub micro_f1: f64,
    pub per_class_f1: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub split: String,
    pub n_clips: usize,
    pub branches: Vec<BranchScores>,
}

impl SplitReport {
    pub fn branch(&self, name: &str) -> Option<&BranchScores> {
        self.branches.iter().find(|b| b.branch == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_valid_loss: f64,
    pub final_lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub seed: u64,
    pub config_hash: String,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub events: Vec<String>,
    pub splits: Vec<SplitReport>,
    /// Branch name -> event label -> threshold.
    pub thresholds: serde_json::Map<String, serde_json::Value>,
    pub fusion_weights: serde_json::Map<String, serde_json::Value>,
    pub video_favored: Vec<String>,
    pub training: TrainingSummary,
    pub meta: RunMeta,
}

impl EvaluationReport {
    pub fn split(&self, name: &str) -> Option<&SplitReport> {
        self.splits.iter().find(|s| s.split == name)
    }

    pub fn micro(&self, split: &str, branch: &str) -> Option<f64> {
        self.split(split)?.branch(branch).map(|b| b.micro_f1)
    }

    /// Aligned text table of F1 scores in percent.
    pub fn to_table(&self) -> String {
        let width = self
            .events
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(5)
            .max(12);
        let mut out = String::new();
        let branches = ["audio", "video", "fused"];
        let _ = write!(out, "{:<width$}", "event");
        for s in &self.splits {
            for b in branches {
                let _ = write!(out, " {:>11}", format!("{}/{}", s.split, b));
            }
        }
        out.push('\n');
        let mut row = |name: &str, value: &dyn Fn(&BranchScores) -> f64| {
            let _ = write!(out, "{name:<width$}");
            for s in &self.splits {
                for b in branches {
                    let v = s.branch(b).map(value).unwrap_or(f64::NAN);
                    let _ = write!(out, " {:>11.1}", 100.0 * v);
                }
            }
            out.push('\n');
        };
        for (k, e) in self.events.iter().enumerate() {
            row(e, &|b: &BranchScores| b.per_class_f1[k]);
        }
        row("micro-F1", &|b: &BranchScores| b.micro_f1);
        out
    }
}

fn worker_pool() -> Result<rayon::ThreadPool> {
    let n = std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

/// Key frames for one clip: sparse representative selection on its video
/// features, or every frame when none are available or fewer than `k` exist.
pub fn clip_keyframes(
    video: Option<&Array2<f64>>,
    n_frames: usize,
    cfg: &RepselConfig,
) -> Result<Vec<usize>> {
    match video {
        Some(v) if v.nrows() != n_frames => Err(Error::Dimension(format!(
            "{} video feature rows for {n_frames} object distributions",
            v.nrows()
        ))),
        Some(v) if v.nrows() > cfg.k => {
            let rows: Vec<Vec<f64>> = v.rows().into_iter().map(|r| r.to_vec()).collect();
            extract_keyframes(&rows, cfg)
        }
        _ => Ok((0..n_frames).collect()),
    }
}

/// Video-branch scores for the given clips.
pub fn video_scores(
    clip_ids: &[String],
    objects: &HashMap<String, ClipObjects>,
    video_dir: Option<&Path>,
    mapper: &EventMapper<'_>,
    repsel: &RepselConfig,
    top_k: usize,
) -> Result<(ScoreMatrix, Vec<ClipKeyframes>)> {
    let rows = clip_ids
        .par_iter()
        .map(|id| {
            let clip = objects.get(id).ok_or_else(|| {
                Error::InvalidValue(format!("no object distributions for `{id}`"))
            })?;
            let dists = clip.distributions()?;
            let feats = video_dir
                .map(|d| io::load_features(&io::feature_path(d, id)))
                .transpose()?;
            let keys = clip_keyframes(feats.as_ref(), dists.len(), repsel)?;
            let chosen: Vec<_> = keys.iter().map(|&i| dists[i].clone()).collect();
            let agg = aggregate_keyframes(&chosen, top_k)?;
            let scores = mapper.map(&agg)?;
            Ok((
                scores.0,
                ClipKeyframes {
                    clip_id: id.clone(),
                    keyframes: keys,
                },
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let k = rows.first().map(|r| r.0.len()).unwrap_or(0);
    let mut values = Array2::zeros((rows.len(), k));
    let mut keys = Vec::with_capacity(rows.len());
    for (i, (row, kf)) in rows.into_iter().enumerate() {
        for (e, v) in row.into_iter().enumerate() {
            values[[i, e]] = v;
        }
        keys.push(kf);
    }
    Ok((ScoreMatrix::new(clip_ids.to_vec(), values)?, keys))
}

/// Events whose validation F1 is strictly higher with the video branch.
pub fn video_favored_events(
    audio: &ScoreMatrix,
    video: &ScoreMatrix,
    truth: ArrayView2<'_, bool>,
    tuner: &TunerConfig,
) -> Result<Vec<usize>> {
    let f1 = |s: &ScoreMatrix| -> Result<Vec<f64>> {
        let th = tune_thresholds(s, truth, tuner)?;
        per_class_f1(apply_thresholds(s, &th)?.view(), truth)
    };
    let (fa, fv) = (f1(audio)?, f1(video)?);
    Ok((0..fa.len()).filter(|&k| fv[k] > fa[k]).collect())
}

/// Weight choice from validation data only.
///
/// The video-favored 0.8/0.2 weighting is adopted when its tuned validation
/// micro F1 strictly beats audio alone; otherwise audio-only weights are kept.
pub fn derive_weights(
    audio: &ScoreMatrix,
    video: &ScoreMatrix,
    truth: ArrayView2<'_, bool>,
    tuner: &TunerConfig,
) -> Result<(FusionWeights, Vec<usize>)> {
    let k = audio.n_events();
    let favored = video_favored_events(audio, video, truth, tuner)?;
    let audio_only = FusionWeights::audio_only(k);
    let base = micro_f1_at(audio, truth, &tune_thresholds(audio, truth, tuner)?)?;
    let candidate = default_weights(&favored, k)?;
    let fused = fuse_scores(audio, video, &candidate)?;
    let cand_f1 = micro_f1_at(&fused, truth, &tune_thresholds(&fused, truth, tuner)?)?;
    log::info!("validation micro F1: audio {base:.4}, fused {cand_f1:.4}");
    if cand_f1 > base {
        Ok((candidate, favored))
    } else {
        Ok((audio_only, favored))
    }
}

fn branch_scores(
    name: &str,
    s: &ScoreMatrix,
    truth: ArrayView2<'_, bool>,
    th: &ThresholdVector,
) -> Result<BranchScores> {
    let pred = apply_thresholds(s, th)?;
    Ok(BranchScores {
        branch: name.to_string(),
        micro_f1: crate::metrics::micro_f1(pred.view(), truth)?,
        per_class_f1: per_class_f1(pred.view(), truth)?,
    })
}

/// Persisted score matrices and thresholds, enough to rebuild the report.
#[derive(Debug, Clone)]
pub struct SplitScores {
    pub name: &'static str,
    pub audio: ScoreMatrix,
    pub video: ScoreMatrix,
    pub fused: ScoreMatrix,
}

#[derive(Debug, Clone)]
pub struct Thresholds {
    pub audio: ThresholdVector,
    pub video: ThresholdVector,
    pub fused: ThresholdVector,
}

/// Evaluate frozen thresholds on each split's truth.
pub fn evaluate_splits(
    splits: &[SplitScores],
    truths: &HashMap<&str, Array2<bool>>,
    th: &Thresholds,
) -> Result<Vec<SplitReport>> {
    splits
        .iter()
        .map(|s| {
            let truth = truths
                .get(s.name)
                .ok_or_else(|| Error::InvalidValue(format!("no truth for split `{}`", s.name)))?
                .view();
            Ok(SplitReport {
                split: s.name.to_string(),
                n_clips: s.audio.n_clips(),
                branches: vec![
                    branch_scores("audio", &s.audio, truth, &th.audio)?,
                    branch_scores("video", &s.video, truth, &th.video)?,
                    branch_scores("fused", &s.fused, truth, &th.fused)?,
                ],
            })
        })
        .collect()
}

/// Everything `run_pipeline` produces, in memory.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: EvaluationReport,
    pub model: FrameScorer,
    pub history: TrainHistory,
    pub scores: Vec<SplitScores>,
    pub thresholds: Thresholds,
    pub weights: FusionWeights,
}

fn write_report(report: &EvaluationReport, dir: &Path) -> Result<()> {
    io::save_json(report, &dir.join("report.json"))?;
    let table = dir.join("report.txt");
    std::fs::write(&table, report.to_table()).map_err(|e| Error::io(&table, e))
}

/// Run every stage and write artifacts to `cfg.output_dir`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let started = Instant::now();
    cfg.validate()?;
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let pool = worker_pool()?;
    pool.install(|| run_stages(cfg, started))
}

fn run_stages(cfg: &PipelineConfig, started: Instant) -> Result<PipelineOutput> {
    let out = &cfg.output_dir;
    let tuner = TunerConfig {
        rng_seed: stage_seed(cfg.seed, STAGE_TUNE),
        ..cfg.tuner.clone()
    };
    let train_cfg = TrainConfig {
        rng_seed: stage_seed(cfg.seed, STAGE_INIT),
        ..cfg.train.clone()
    };

    // ingest
    let (tax, sets) = (|| -> Result<(EventTaxonomy, [Dataset; 3])> {
        let tax = io::load_taxonomy(&cfg.events_file)?;
        let labels: HashMap<String, BTreeSet<usize>> = io::load_labels(&cfg.labels_file, &tax)?
            .into_iter()
            .collect();
        let load = |ids: &[String]| io::load_dataset(&cfg.features_dir, &tax, &labels, ids);
        let sets = [
            load(&cfg.splits.train)?,
            load(&cfg.splits.valid)?,
            load(&cfg.splits.test)?,
        ];
        Ok((tax, sets))
    })()
    .map_err(|e| e.in_stage("ingest"))?;
    let [train_set, valid_set, _] = &sets;
    let valid_truth = valid_set.label_matrix();

    // audio branch
    let (model, history) = match cfg.select_by {
        ModelSelection::ValidLoss => mil::train(train_set, valid_set, &train_cfg),
        ModelSelection::ValidMicroF1 => {
            mil::train_with_selection(train_set, valid_set, &train_cfg, |s, _| {
                micro_f1_at(
                    s,
                    valid_truth.view(),
                    &tune_thresholds(s, valid_truth.view(), &tuner)?,
                )
            })
        }
    }
    .map_err(|e| e.in_stage("train"))?;
    mil::save_checkpoint(&model, &out.join("model.ckpt"))?;
    io::save_json(&history, &out.join("history.json"))?;

    let names = ["train", "valid", "test"];
    let audio: Vec<ScoreMatrix> = sets
        .iter()
        .map(|d| mil::predict_parallel(&model, d))
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("predict"))?;
    for (n, s) in names.iter().zip(&audio) {
        io::save_scores(s, &tax, &out.join(format!("scores_audio_{n}.csv")))?;
    }

    // video branch
    let (video, keyframes) = (|| -> Result<(Vec<ScoreMatrix>, Vec<ClipKeyframes>)> {
        let (store, _) = EmbeddingStore::load(&cfg.embeddings_file)?;
        let mapper = EventMapper::new(&tax, &store)?;
        let objects: HashMap<String, ClipObjects> = io::load_objects(&cfg.objects_file)?
            .into_iter()
            .map(|c| (c.clip_id.clone(), c))
            .collect();
        let mut all_keys = Vec::new();
        let mut mats = Vec::new();
        for d in &sets {
            let (m, k) = video_scores(
                &d.clip_ids(),
                &objects,
                cfg.video_features_dir.as_deref(),
                &mapper,
                &cfg.repsel,
                cfg.top_k,
            )?;
            mats.push(m);
            all_keys.extend(k);
        }
        Ok((mats, all_keys))
    })()
    .map_err(|e| e.in_stage("map"))?;
    io::save_json(&keyframes, &out.join("keyframes.json"))?;
    for (n, s) in names.iter().zip(&video) {
        io::save_scores(s, &tax, &out.join(format!("scores_video_{n}.csv")))?;
    }

    // fusion weights and thresholds: validation split only
    let (weights, favored) = match &cfg.fusion {
        FusionSource::Derived => derive_weights(&audio[1], &video[1], valid_truth.view(), &tuner),
        FusionSource::File { path } => io::load_weights(path, &tax).map(|w| (w, Vec::new())),
        FusionSource::AudioOnly => Ok((FusionWeights::audio_only(tax.len()), Vec::new())),
    }
    .map_err(|e| e.in_stage("fuse"))?;
    io::save_weights(&weights, &tax, &out.join("weights.json"))?;
    let fused: Vec<ScoreMatrix> = audio
        .iter()
        .zip(&video)
        .map(|(a, v)| fuse_scores(a, v, &weights))
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("fuse"))?;
    for (n, s) in names.iter().zip(&fused) {
        io::save_scores(s, &tax, &out.join(format!("scores_fused_{n}.csv")))?;
    }

    let thresholds = (|| -> Result<Thresholds> {
        Ok(Thresholds {
            audio: tune_thresholds(&audio[1], valid_truth.view(), &tuner)?,
            video: tune_thresholds(&video[1], valid_truth.view(), &tuner)?,
            fused: tune_thresholds(&fused[1], valid_truth.view(), &tuner)?,
        })
    })()
    .map_err(|e| e.in_stage("tune"))?;
    for (name, th) in [
        ("audio", &thresholds.audio),
        ("video", &thresholds.video),
        ("fused", &thresholds.fused),
    ] {
        io::save_thresholds(th, &tax, &out.join(format!("thresholds_{name}.json")))?;
    }

    // evaluation is the only reader of test labels
    let scores: Vec<SplitScores> = names
        .iter()
        .zip(audio)
        .zip(video)
        .zip(fused)
        .map(|(((&name, audio), video), fused)| SplitScores {
            name,
            audio,
            video,
            fused,
        })
        .collect();
    let truths: HashMap<&str, Array2<bool>> = names
        .iter()
        .zip(&sets)
        .map(|(&n, d)| (n, d.label_matrix()))
        .collect();
    let split_reports =
        evaluate_splits(&scores, &truths, &thresholds).map_err(|e| e.in_stage("evaluate"))?;

    let best = &history.epochs[history.best_epoch - 1];
    let mut th_map = serde_json::Map::new();
    for (name, th) in [
        ("audio", &thresholds.audio),
        ("video", &thresholds.video),
        ("fused", &thresholds.fused),
    ] {
        th_map.insert(
            name.into(),
            serde_json::Value::Object(io::event_map(th.as_slice(), &tax)),
        );
    }
    let report = EvaluationReport {
        events: tax.labels().to_vec(),
        splits: split_reports,
        thresholds: th_map,
        fusion_weights: io::event_map(weights.as_slice(), &tax),
        video_favored: favored.iter().map(|&k| tax.label(k).to_string()).collect(),
        training: TrainingSummary {
            epochs: history.epochs.len(),
            best_epoch: history.best_epoch,
            best_valid_loss: best.valid_loss,
            final_lr: history.epochs.last().map(|e| e.lr).unwrap_or(cfg.train.lr0),
        },
        meta: RunMeta {
            seed: cfg.seed,
            config_hash: cfg.hash(),
            wall_time_secs: started.elapsed().as_secs_f64(),
        },
    };
    write_report(&report, out)?;
    Ok(PipelineOutput {
        report,
        model,
        history,
        scores,
        thresholds,
        weights,
    })
}

/// Epoch budget written into synthetic corpus configs.
pub const SYNTH_EPOCHS: usize = 400;

/// Write a synthetic corpus in the on-disk formats and return a pipeline
/// config (relative paths) that runs on it.
pub fn write_synthetic_corpus(
    data: &crate::synth::SynthData,
    dir: &Path,
) -> Result<PipelineConfig> {
    let feats = dir.join("features");
    let video = dir.join("video");
    for d in [&feats, &video] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    io::save_taxonomy(&data.taxonomy, &dir.join("events.txt"))?;
    let mut table = io::LabelTable::new();
    for ds in [&data.train, &data.valid, &data.test] {
        for c in ds.clips() {
            io::save_features(
                &c.features().to_owned(),
                &io::feature_path(&feats, &c.clip_id),
            )?;
            table.push((c.clip_id.clone(), c.positives().clone()));
        }
    }
    io::save_labels(&table, &data.taxonomy, &dir.join("labels.csv"))?;
    for (id, m) in &data.video_features {
        io::save_features(m, &io::feature_path(&video, id))?;
    }
    io::save_objects(&data.objects, &dir.join("objects.json"))?;
    let emb = dir.join("embeddings.txt");
    let mut text = String::new();
    for (tok, v) in &data.embeddings {
        text.push_str(tok);
        for x in v {
            let _ = write!(text, " {x}");
        }
        text.push('\n');
    }
    std::fs::write(&emb, text).map_err(|e| Error::io(&emb, e))?;

    let cfg = PipelineConfig {
        events_file: "events.txt".into(),
        features_dir: "features".into(),
        labels_file: "labels.csv".into(),
        objects_file: "objects.json".into(),
        embeddings_file: "embeddings.txt".into(),
        video_features_dir: Some("video".into()),
        output_dir: "out".into(),
        splits: Splits {
            train: data.train.clip_ids(),
            valid: data.valid.clip_ids(),
            test: data.test.clip_ids(),
        },
        train: TrainConfig {
            max_epochs: SYNTH_EPOCHS,
            ..TrainConfig::default()
        },
        repsel: RepselConfig::default(),
        top_k: DEFAULT_TOP_K,
        fusion: FusionSource::Derived,
        tuner: TunerConfig::default(),
        select_by: ModelSelection::ValidMicroF1,
        seed: 0,
    };
    io::save_json(&cfg, &dir.join("config.json"))?;
    Ok(cfg)
}
