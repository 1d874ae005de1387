use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use avtag::error::{Error, Result};
use avtag::fuse::{default_weights, fuse_scores, tune_thresholds, FusionWeights, TunerConfig};
use avtag::io::{self, ClipKeyframes};
use avtag::metrics::apply_thresholds;
use avtag::mil::{self, TrainConfig};
use avtag::pipeline::{self, PipelineConfig};
use avtag::repsel::RepselConfig;
use avtag::synth::{generate_synthetic, SynthSpec};
use avtag::vmap::{EmbeddingStore, EventMapper, DEFAULT_TOP_K};
use avtag::EventTaxonomy;

#[derive(Parser)]
#[command(
    name = "avtag",
    version,
    about = "Weak-label audio tagging with visual knowledge fusion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic corpus and a matching pipeline config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// JSON synthetic spec; defaults are used for missing fields.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the frame scorer.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Clip-level audio scores from a checkpoint.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        features_dir: PathBuf,
        /// Clip ids, comma separated.
        #[arg(long, value_delimiter = ',')]
        clips: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select key frames from per-clip video features.
    Keyframes {
        #[arg(long)]
        video_dir: PathBuf,
        #[arg(long, value_delimiter = ',')]
        clips: Vec<String>,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Map object distributions to video-branch event scores.
    Map {
        #[arg(long)]
        objects: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        events: PathBuf,
        /// Key-frame JSON from `keyframes`; every frame is used when absent.
        #[arg(long)]
        keyframes: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_TOP_K)]
        top_k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-event weighted fusion of audio and video scores.
    Fuse {
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        video: PathBuf,
        #[arg(long)]
        events: PathBuf,
        /// Weights JSON keyed by event label.
        #[arg(long, conflicts_with = "video_favored")]
        weights: Option<PathBuf>,
        /// Event labels receiving the 0.8 video weight (others 0.2).
        #[arg(long, value_delimiter = ',')]
        video_favored: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tune class-specific thresholds for micro F1.
    Tune {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        events: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Micro and per-class F1 of thresholded scores.
    Evaluate {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        thresholds: PathBuf,
    },
    /// Run every stage end to end.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn truth_for(
    scores: &avtag::ScoreMatrix,
    labels: &Path,
    tax: &EventTaxonomy,
) -> Result<ndarray::Array2<bool>> {
    let table: HashMap<String, BTreeSet<usize>> =
        io::load_labels(labels, tax)?.into_iter().collect();
    let mut truth = ndarray::Array2::from_elem((scores.n_clips(), tax.len()), false);
    for (i, id) in scores.clip_ids().iter().enumerate() {
        let pos = table
            .get(id)
            .ok_or_else(|| Error::InvalidValue(format!("no labels for clip `{id}`")))?;
        for &k in pos {
            truth[[i, k]] = true;
        }
    }
    Ok(truth)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { out, spec, seed } => {
            let mut spec: SynthSpec = match spec {
                Some(p) => io::read_json(&p)?,
                None => SynthSpec::default(),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            let data = generate_synthetic(&spec)?;
            pipeline::write_synthetic_corpus(&data, &out)?;
            println!("wrote synthetic corpus to {}", out.display());
        }
        Command::Train { config, seed, out } => {
            let mut cfg = PipelineConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let tax = io::load_taxonomy(&cfg.events_file)?;
            let labels: HashMap<_, _> = io::load_labels(&cfg.labels_file, &tax)?
                .into_iter()
                .collect();
            let train = io::load_dataset(&cfg.features_dir, &tax, &labels, &cfg.splits.train)?;
            let valid = io::load_dataset(&cfg.features_dir, &tax, &labels, &cfg.splits.valid)?;
            let train_cfg = TrainConfig {
                rng_seed: pipeline::stage_seed(cfg.seed, pipeline::STAGE_INIT),
                ..cfg.train.clone()
            };
            let (model, history) = mil::train(&train, &valid, &train_cfg)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            mil::save_checkpoint(&model, &out.join("model.ckpt"))?;
            io::save_json(&history, &out.join("history.json"))?;
            println!(
                "best epoch {} of {}",
                history.best_epoch,
                history.epochs.len()
            );
        }
        Command::Predict {
            model,
            events,
            features_dir,
            clips,
            out,
        } => {
            let tax = io::load_taxonomy(&events)?;
            let scorer = mil::load_checkpoint(&model)?;
            let labels: HashMap<String, BTreeSet<usize>> =
                clips.iter().map(|c| (c.clone(), BTreeSet::new())).collect();
            let data = io::load_dataset(&features_dir, &tax, &labels, &clips)?;
            let scores = mil::predict_parallel(&scorer, &data)?;
            io::save_scores(&scores, &tax, &out)?;
        }
        Command::Keyframes {
            video_dir,
            clips,
            k,
            lambda,
            out,
        } => {
            let cfg = RepselConfig {
                k,
                lambda,
                ..Default::default()
            };
            let keys = clips
                .iter()
                .map(|id| {
                    let feats = io::load_features(&io::feature_path(&video_dir, id))?;
                    let keyframes = pipeline::clip_keyframes(Some(&feats), feats.nrows(), &cfg)?;
                    Ok(ClipKeyframes {
                        clip_id: id.clone(),
                        keyframes,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            io::save_json(&keys, &out)?;
        }
        Command::Map {
            objects,
            embeddings,
            events,
            keyframes,
            top_k,
            out,
        } => {
            let tax = io::load_taxonomy(&events)?;
            let (store, stats) = EmbeddingStore::load(&embeddings)?;
            log::info!(
                "loaded {} vectors ({} malformed lines)",
                stats.loaded,
                stats.malformed
            );
            let mapper = EventMapper::new(&tax, &store)?;
            let clips = io::load_objects(&objects)?;
            let keys: HashMap<String, Vec<usize>> = match keyframes {
                Some(p) => io::read_json::<Vec<ClipKeyframes>>(&p)?
                    .into_iter()
                    .map(|c| (c.clip_id, c.keyframes))
                    .collect(),
                None => HashMap::new(),
            };
            let mut ids = Vec::new();
            let mut values = ndarray::Array2::zeros((clips.len(), tax.len()));
            for (i, c) in clips.iter().enumerate() {
                let dists = c.distributions()?;
                let chosen: Vec<_> = match keys.get(&c.clip_id) {
                    Some(ks) => ks
                        .iter()
                        .map(|&j| {
                            dists.get(j).cloned().ok_or_else(|| {
                                Error::InvalidValue(format!(
                                    "clip `{}` has no frame {j}",
                                    c.clip_id
                                ))
                            })
                        })
                        .collect::<Result<_>>()?,
                    None => dists,
                };
                let agg = avtag::vmap::aggregate_keyframes(&chosen, top_k)?;
                for (k, v) in mapper.map(&agg)?.0.into_iter().enumerate() {
                    values[[i, k]] = v;
                }
                ids.push(c.clip_id.clone());
            }
            io::save_scores(&avtag::ScoreMatrix::new(ids, values)?, &tax, &out)?;
        }
        Command::Fuse {
            audio,
            video,
            events,
            weights,
            video_favored,
            out,
        } => {
            let tax = io::load_taxonomy(&events)?;
            let a = io::load_scores(&audio, &tax)?;
            let v = io::load_scores(&video, &tax)?.select(a.clip_ids())?;
            let w: FusionWeights = match weights {
                Some(p) => io::load_weights(&p, &tax)?,
                None => {
                    let ids = video_favored
                        .iter()
                        .map(|l| {
                            tax.id_of(l)
                                .ok_or_else(|| Error::InvalidValue(format!("unknown event `{l}`")))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    default_weights(&ids, tax.len())?
                }
            };
            io::save_scores(&fuse_scores(&a, &v, &w)?, &tax, &out)?;
        }
        Command::Tune {
            scores,
            labels,
            events,
            seed,
            out,
        } => {
            let tax = io::load_taxonomy(&events)?;
            let s = io::load_scores(&scores, &tax)?;
            let truth = truth_for(&s, &labels, &tax)?;
            let cfg = TunerConfig {
                rng_seed: seed,
                ..Default::default()
            };
            io::save_thresholds(&tune_thresholds(&s, truth.view(), &cfg)?, &tax, &out)?;
        }
        Command::Evaluate {
            scores,
            labels,
            events,
            thresholds,
        } => {
            let tax = io::load_taxonomy(&events)?;
            let s = io::load_scores(&scores, &tax)?;
            let truth = truth_for(&s, &labels, &tax)?;
            let th = io::load_thresholds(&thresholds, &tax)?;
            let pred = apply_thresholds(&s, &th)?;
            let per = avtag::metrics::per_class_f1(pred.view(), truth.view())?;
            let micro = avtag::metrics::micro_f1(pred.view(), truth.view())?;
            let report = serde_json::json!({
                "micro_f1": micro,
                "per_class_f1": io::event_map(&per, &tax),
            });
            println!("{}", serde_json::to_string_pretty(&report).expect("json"));
        }
        Command::Pipeline { config, seed, out } => {
            let mut cfg = PipelineConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let result = pipeline::run_pipeline(&cfg)?;
            print!("{}", result.report.to_table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.class(), e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
