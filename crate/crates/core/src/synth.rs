//! Seeded synthetic multimodal data with planted events.
//!
//! Audio: every frame is background noise `N(0, sigma^2 I)` except that each
//! positive (clip, event) pair plants 1-3 frames drawn around an event centre
//! `margin * sigma * s_e`, where `s_e` is a random sign vector. The centre sits
//! `margin * sigma * sqrt(F)` from the background mean along `s_e`.
//!
//! Video: each clip is a sequence of scenes; scene frames share a visual
//! feature centre and an object distribution. Events visible in the video
//! contribute a scene dominated by objects whose embeddings lie close to the
//! event label's embedding.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{ClipBag, Dataset, EventTaxonomy};
use crate::error::{Error, Result};
use crate::io::ClipObjects;
use crate::vmap::ObjectProb;

const EVENT_WORDS: [&str; 17] = [
    "siren", "engine", "horn", "bell", "whistle", "drill", "alarm", "bark", "rain", "thunder",
    "chime", "buzzer", "hammer", "saw", "motor", "fan", "train",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    pub n_events: usize,
    pub frames: usize,
    pub feature_dim: usize,
    /// Event-centre offset per coordinate, in units of `sigma`.
    pub margin: f64,
    pub sigma: f64,
    /// Probability that a clip contains a given event.
    pub positive_rate: f64,
    /// Events whose audio signal uses `hard_margin` instead of `margin`.
    pub hard_events: Vec<usize>,
    pub hard_margin: f64,
    /// Events reliably visible in the video track.
    pub video_events: Vec<usize>,
    /// Chance a present event shows up in the video: visible events / others.
    pub video_recall: f64,
    pub other_recall: f64,
    /// Chance an absent event's objects show up anyway.
    pub video_false_rate: f64,
    pub video_frames: usize,
    pub video_dim: usize,
    pub embedding_dim: usize,
    pub objects_per_event: usize,
    pub distractors: usize,
    /// How many distractor labels get a word vector; the rest are out of vocabulary.
    pub embedded_distractors: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_train: 300,
            n_valid: 60,
            n_test: 60,
            n_events: 5,
            frames: 50,
            feature_dim: 20,
            margin: 2.0,
            sigma: 1.0,
            positive_rate: 0.3,
            hard_events: Vec::new(),
            hard_margin: 0.5,
            video_events: Vec::new(),
            video_recall: 0.95,
            other_recall: 0.3,
            video_false_rate: 0.05,
            video_frames: 12,
            video_dim: 8,
            embedding_dim: 16,
            objects_per_event: 3,
            distractors: 30,
            embedded_distractors: 5,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_events == 0 {
            return bad("synthetic spec needs at least one event".into());
        }
        if self.n_train == 0 || self.n_valid == 0 || self.n_test == 0 {
            return bad("every split needs at least one clip".into());
        }
        if self.feature_dim == 0 || self.video_dim == 0 || self.embedding_dim == 0 {
            return bad("dimensions must be >= 1".into());
        }
        if self.frames < 3 * self.n_events {
            return bad(format!(
                "{} frames cannot hold 3 planted frames for each of {} events",
                self.frames, self.n_events
            ));
        }
        if self.video_frames == 0 {
            return bad("video_frames must be >= 1".into());
        }
        if !(self.sigma > 0.0) || self.margin < 0.0 || self.hard_margin < 0.0 {
            return bad("sigma must be positive and margins non-negative".into());
        }
        for p in [
            self.positive_rate,
            self.video_recall,
            self.other_recall,
            self.video_false_rate,
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("rate {p} outside [0, 1]"));
            }
        }
        if let Some(e) = self
            .hard_events
            .iter()
            .chain(&self.video_events)
            .find(|&&e| e >= self.n_events)
        {
            return bad(format!("event id {e} out of range"));
        }
        if self.embedded_distractors > self.distractors {
            return bad("embedded_distractors exceeds distractors".into());
        }
        if self.objects_per_event == 0 {
            return bad("objects_per_event must be >= 1".into());
        }
        Ok(())
    }

    pub fn event_labels(&self) -> Vec<String> {
        (0..self.n_events)
            .map(|k| match EVENT_WORDS.get(k) {
                Some(w) => (*w).to_string(),
                None => format!("event{k}"),
            })
            .collect()
    }
}

/// Generated corpus, ready to be written to disk.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub taxonomy: EventTaxonomy,
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
    /// Per-frame object distributions for every clip.
    pub objects: Vec<ClipObjects>,
    /// Per-clip video frame features, in clip order.
    pub video_features: Vec<(String, Array2<f64>)>,
    /// `(token, vector)` lines of the word-vector file.
    pub embeddings: Vec<(String, Vec<f64>)>,
    /// Per-event frame accuracy of the direct projection classifier.
    pub frame_accuracy: Vec<f64>,
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| {
        let z: f64 = StandardNormal.sample(rng);
        z * scale
    })
}

fn unit(v: Array1<f64>) -> Vec<f64> {
    let n = v.dot(&v).sqrt();
    v.mapv(|x| x / n).to_vec()
}

struct Generator<'a> {
    spec: &'a SynthSpec,
    centres: Vec<Array1<f64>>,
    signs: Vec<Array1<f64>>,
    /// Planted-frame projection hits / totals per event, for the oracle.
    hits: Vec<(u64, u64)>,
}

impl Generator<'_> {
    fn margin(&self, e: usize) -> f64 {
        if self.spec.hard_events.contains(&e) {
            self.spec.hard_margin
        } else {
            self.spec.margin
        }
    }

    /// Direct per-frame classifier: project onto the sign vector, threshold halfway.
    fn classify(&self, e: usize, frame: ndarray::ArrayView1<'_, f64>) -> bool {
        let f = self.spec.feature_dim as f64;
        let proj = frame.dot(&self.signs[e]) / f.sqrt();
        proj >= 0.5 * self.margin(e) * self.spec.sigma * f.sqrt()
    }

    fn clip(&mut self, rng: &mut ChaCha8Rng, id: String) -> Result<ClipBag> {
        let spec = self.spec;
        let (t, f) = (spec.frames, spec.feature_dim);
        let noise = Normal::new(0.0, spec.sigma).expect("sigma > 0");
        let mut x = Array2::from_shape_fn((t, f), |_| noise.sample(rng));
        let positives: BTreeSet<usize> = (0..spec.n_events)
            .filter(|_| rng.random_bool(spec.positive_rate))
            .collect();
        let mut free: Vec<usize> = (0..t).collect();
        free.shuffle(rng);
        let mut planted = vec![None; t];
        for &e in &positives {
            let n = rng.random_range(1..=3);
            for _ in 0..n {
                let j = free.pop().expect("frames >= 3 K");
                let mut row = x.row_mut(j);
                row += &self.centres[e];
                planted[j] = Some(e);
            }
        }
        for e in 0..spec.n_events {
            for (j, &mark) in planted.iter().enumerate() {
                let truth = mark == Some(e);
                let ok = self.classify(e, x.row(j)) == truth;
                self.hits[e].0 += ok as u64;
                self.hits[e].1 += 1;
            }
        }
        ClipBag::new(id, x, positives)
    }
}

fn scene_distribution(
    rng: &mut ChaCha8Rng,
    main: Option<&[String]>,
    distractors: &[String],
) -> Vec<ObjectProb> {
    let mut entries: Vec<(String, f64)> = Vec::new();
    if let Some(objs) = main {
        let o = &objs[rng.random_range(0..objs.len())];
        entries.push((o.clone(), rng.random_range(4.0..8.0)));
    }
    let mut picks: Vec<&String> = distractors.iter().collect();
    picks.shuffle(rng);
    for d in picks.into_iter().take(14) {
        entries.push((d.clone(), rng.random_range(0.05..0.6)));
    }
    let total: f64 = entries.iter().map(|e| e.1).sum();
    entries
        .into_iter()
        .map(|(label, w)| ObjectProb {
            label,
            prob: w / total,
        })
        .collect()
}

/// Generate train/validation/test datasets plus the video side channel.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let labels = spec.event_labels();
    let taxonomy = EventTaxonomy::new(labels.clone())?;
    let stream = |s: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(spec.seed);
        r.set_stream(s);
        r
    };
    let mut audio_rng = stream(1);
    let mut video_rng = stream(2);
    let mut emb_rng = stream(3);

    let signs: Vec<Array1<f64>> = (0..spec.n_events)
        .map(|_| {
            Array1::from_shape_fn(spec.feature_dim, |_| {
                if audio_rng.random_bool(0.5) {
                    1.0
                } else {
                    -1.0
                }
            })
        })
        .collect();
    let mut gen = Generator {
        spec,
        centres: Vec::new(),
        signs,
        hits: vec![(0, 0); spec.n_events],
    };
    gen.centres = (0..spec.n_events)
        .map(|e| gen.signs[e].mapv(|s| s * gen.margin(e) * spec.sigma))
        .collect();

    let mut make = |prefix: &str, n: usize, gen: &mut Generator| -> Result<Dataset> {
        let clips = (0..n)
            .map(|i| gen.clip(&mut audio_rng, format!("{prefix}{i:04}")))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(taxonomy.clone(), clips)
    };
    let train = make("tr", spec.n_train, &mut gen)?;
    let valid = make("va", spec.n_valid, &mut gen)?;
    let test = make("te", spec.n_test, &mut gen)?;
    let frame_accuracy = gen
        .hits
        .iter()
        .map(|&(ok, n)| ok as f64 / n.max(1) as f64)
        .collect();

    // word vectors: events random, their objects nearby, distractors random
    let d = spec.embedding_dim;
    let mut embeddings = Vec::new();
    let mut event_objects: Vec<Vec<String>> = Vec::new();
    for (e, label) in labels.iter().enumerate() {
        let v = gaussian_vec(&mut emb_rng, d, 1.0);
        embeddings.push((label.clone(), unit(v.clone())));
        let objs: Vec<String> = (0..spec.objects_per_event)
            .map(|m| format!("ob{e}x{m}"))
            .collect();
        for o in &objs {
            let near = &unit(v.clone()).into_iter().collect::<Array1<f64>>()
                + &gaussian_vec(&mut emb_rng, d, 0.15);
            embeddings.push((o.clone(), near.to_vec()));
        }
        event_objects.push(objs);
    }
    let distractors: Vec<String> = (0..spec.distractors).map(|m| format!("dz{m}")).collect();
    for dz in distractors.iter().take(spec.embedded_distractors) {
        embeddings.push((dz.clone(), unit(gaussian_vec(&mut emb_rng, d, 1.0))));
    }

    let mut objects = Vec::new();
    let mut video_features = Vec::new();
    for clip in train
        .clips()
        .iter()
        .chain(valid.clips())
        .chain(test.clips())
    {
        let mut scenes: Vec<Option<usize>> = vec![None];
        for e in 0..spec.n_events {
            let present = clip.positives().contains(&e);
            let p = match (present, spec.video_events.contains(&e)) {
                (true, true) => spec.video_recall,
                (true, false) => spec.other_recall,
                (false, _) => spec.video_false_rate,
            };
            if video_rng.random_bool(p) {
                scenes.push(Some(e));
            }
        }
        scenes.shuffle(&mut video_rng);
        let centres: Vec<Array1<f64>> = scenes
            .iter()
            .map(|_| gaussian_vec(&mut video_rng, spec.video_dim, 4.0))
            .collect();
        let dists: Vec<Vec<ObjectProb>> = scenes
            .iter()
            .map(|s| {
                scene_distribution(
                    &mut video_rng,
                    s.map(|e| event_objects[e].as_slice()),
                    &distractors,
                )
            })
            .collect();
        // contiguous scene segments; every scene gets at least one frame when possible
        let v = spec.video_frames;
        let mut owner: Vec<usize> = (0..v).map(|j| j * scenes.len() / v).collect();
        if scenes.len() > v {
            owner = (0..v).collect();
        }
        let mut feats = Array2::zeros((v, spec.video_dim));
        let mut frames = Vec::with_capacity(v);
        for (j, &s) in owner.iter().enumerate() {
            let jitter = gaussian_vec(&mut video_rng, spec.video_dim, 0.1);
            feats.row_mut(j).assign(&(&centres[s] + &jitter));
            frames.push(dists[s].clone());
        }
        objects.push(ClipObjects {
            clip_id: clip.clip_id.clone(),
            frames,
        });
        video_features.push((clip.clip_id.clone(), feats));
    }

    Ok(SynthData {
        taxonomy,
        train,
        valid,
        test,
        objects,
        video_features,
        embeddings,
        frame_accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthSpec {
        SynthSpec {
            n_train: 20,
            n_valid: 5,
            n_test: 5,
            n_events: 3,
            frames: 12,
            feature_dim: 6,
            ..Default::default()
        }
    }

    #[test]
    fn zero_positive_rate_gives_negative_bags() {
        let spec = SynthSpec {
            positive_rate: 0.0,
            ..small()
        };
        let data = generate_synthetic(&spec).unwrap();
        for ds in [&data.train, &data.valid, &data.test] {
            assert!(ds.clips().iter().all(|c| c.positives().is_empty()));
        }
    }

    #[test]
    fn same_seed_same_data() {
        let a = generate_synthetic(&small()).unwrap();
        let b = generate_synthetic(&small()).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        assert_eq!(a.objects, b.objects);
        assert_eq!(a.embeddings, b.embeddings);
        let c = generate_synthetic(&SynthSpec { seed: 1, ..small() }).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn degenerate_specs_are_rejected() {
        assert!(generate_synthetic(&SynthSpec {
            n_events: 0,
            ..small()
        })
        .is_err());
        assert!(generate_synthetic(&SynthSpec {
            n_train: 0,
            ..small()
        })
        .is_err());
        assert!(generate_synthetic(&SynthSpec {
            frames: 5,
            ..small()
        })
        .is_err());
    }

    #[test]
    fn planted_frames_are_separable_at_two_sigma() {
        let data = generate_synthetic(&SynthSpec::default()).unwrap();
        for acc in &data.frame_accuracy {
            assert!(*acc >= 0.99, "frame accuracy {acc}");
        }
    }

    #[test]
    fn object_distributions_are_valid() {
        let data = generate_synthetic(&small()).unwrap();
        assert_eq!(data.objects.len(), 30);
        for c in &data.objects {
            assert_eq!(c.frames.len(), small().video_frames);
            c.distributions().unwrap();
        }
    }
}
