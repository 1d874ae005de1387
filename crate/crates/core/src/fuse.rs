//! Audio/video fusion and class-specific threshold tuning.

use std::cmp::Ordering;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{ScoreMatrix, ThresholdVector};
use crate::error::{Error, Result};
use crate::metrics::{apply_thresholds, micro_counts, F1Counts};

/// Video weight for events where the video branch is the better one.
pub const VIDEO_FAVORED_WEIGHT: f64 = 0.8;
/// Video weight for every other event.
pub const AUDIO_FAVORED_WEIGHT: f64 = 0.2;

/// Per-event video weight `w_k`; audio gets `1 - w_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights(Vec<f64>);

impl FusionWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if let Some((k, v)) = w
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::InvalidValue(format!("fusion weight {k} is {v}")));
        }
        Ok(Self(w))
    }

    /// All-zero video weights: fusion returns the audio scores.
    pub fn audio_only(k: usize) -> Self {
        Self(vec![0.0; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TunerConfig {
    pub rng_seed: u64,
    /// Stop after this many passes' worth (`K` draws each) of non-improving draws.
    pub max_stale_passes: usize,
}

impl Default for TunerConfig {
    fn default() -> Self {
        Self {
            rng_seed: 0,
            max_stale_passes: 1,
        }
    }
}

/// `w_k * video + (1 - w_k) * audio`, per cell.
pub fn fuse_scores(
    audio: &ScoreMatrix,
    video: &ScoreMatrix,
    w: &FusionWeights,
) -> Result<ScoreMatrix> {
    if audio.clip_ids() != video.clip_ids() {
        return Err(Error::InvalidValue(
            "audio and video scores list different clips".into(),
        ));
    }
    if audio.n_events() != video.n_events() || audio.n_events() != w.len() {
        return Err(Error::Dimension(format!(
            "audio has {} events, video {}, weights {}",
            audio.n_events(),
            video.n_events(),
            w.len()
        )));
    }
    let (a, v) = (audio.values(), video.values());
    let fused = Array2::from_shape_fn(a.dim(), |(i, k)| {
        let (x, y) = (a[[i, k]], v[[i, k]]);
        let wk = w.0[k];
        (wk * y + (1.0 - wk) * x).clamp(x.min(y), x.max(y))
    });
    ScoreMatrix::new(audio.clip_ids().to_vec(), fused)
}

/// 0.8 video weight for the listed events, 0.2 for the rest.
pub fn default_weights(video_better: &[usize], k: usize) -> Result<FusionWeights> {
    let mut w = vec![AUDIO_FAVORED_WEIGHT; k];
    for &e in video_better {
        if e >= k {
            return Err(Error::InvalidValue(format!(
                "event id {e} out of range for {k} events"
            )));
        }
        w[e] = VIDEO_FAVORED_WEIGHT;
    }
    FusionWeights::new(w)
}

/// Confusion counts of one column for every candidate threshold.
///
/// Candidates are the distinct observed scores plus 0 and 1, ascending.
pub fn column_candidates(
    scores: ArrayView1<'_, f64>,
    truth: ArrayView1<'_, bool>,
) -> Vec<(f64, F1Counts)> {
    let mut cells: Vec<(f64, bool)> = scores.iter().copied().zip(truth.iter().copied()).collect();
    cells.sort_by(|a, b| b.0.total_cmp(&a.0));
    let positives = cells.iter().filter(|c| c.1).count() as u64;

    let mut cands: Vec<f64> = scores.iter().copied().chain([0.0, 1.0]).collect();
    cands.sort_by(|a, b| b.total_cmp(a));
    cands.dedup();

    // sweep from the highest threshold down, admitting cells with score >= t
    let mut out = Vec::with_capacity(cands.len());
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut next = 0;
    for t in cands {
        while next < cells.len() && cells[next].0 >= t {
            if cells[next].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            next += 1;
        }
        out.push((
            t,
            F1Counts {
                tp,
                fp,
                fn_: positives - tp,
            },
        ));
    }
    out.reverse();
    out
}

/// Best candidate under `cmp`, preferring the larger threshold on ties.
fn argmax_largest<F>(cands: &[(f64, F1Counts)], mut score: F) -> (f64, F1Counts)
where
    F: FnMut(&F1Counts) -> F1Counts,
{
    let mut best = cands[0];
    let mut best_total = score(&best.1);
    for &(t, c) in &cands[1..] {
        let total = score(&c);
        // ascending candidates: >= moves toward larger thresholds on ties
        if total.cmp_f1(&best_total) != Ordering::Less {
            best = (t, c);
            best_total = total;
        }
    }
    best
}

fn check_shapes(scores: &ScoreMatrix, truth: ArrayView2<'_, bool>) -> Result<()> {
    if scores.values().dim() != truth.dim() {
        return Err(Error::Dimension(format!(
            "scores {:?} vs truth {:?}",
            scores.values().dim(),
            truth.dim()
        )));
    }
    if scores.n_clips() == 0 {
        return Err(Error::Empty("no clips to tune on".into()));
    }
    Ok(())
}

/// Stage 1: per-event threshold maximizing that event's F1.
pub fn tune_thresholds_per_class(
    scores: &ScoreMatrix,
    truth: ArrayView2<'_, bool>,
) -> Result<ThresholdVector> {
    check_shapes(scores, truth)?;
    let th = scores
        .values()
        .axis_iter(Axis(1))
        .zip(truth.axis_iter(Axis(1)))
        .map(|(s, t)| argmax_largest(&column_candidates(s, t), |c| *c).0)
        .collect();
    ThresholdVector::new(th)
}

/// Stage 2: randomized coordinate ascent on micro-averaged F1.
///
/// Classes are visited in a fresh random order each pass; each visit
/// re-optimizes one threshold over its candidate set with the others fixed; the change is kept only if
/// micro F1 strictly improves. Stops after `K * max_stale_passes` consecutive
/// draws without improvement.
pub fn refine_thresholds_micro(
    scores: &ScoreMatrix,
    truth: ArrayView2<'_, bool>,
    th0: &ThresholdVector,
    cfg: &TunerConfig,
) -> Result<ThresholdVector> {
    check_shapes(scores, truth)?;
    if th0.len() != scores.n_events() {
        return Err(Error::Dimension(format!(
            "{} thresholds for {} events",
            th0.len(),
            scores.n_events()
        )));
    }
    if cfg.max_stale_passes == 0 {
        return Err(Error::Config("max_stale_passes must be >= 1".into()));
    }
    let k = scores.n_events();
    let cands: Vec<Vec<(f64, F1Counts)>> = scores
        .values()
        .axis_iter(Axis(1))
        .zip(truth.axis_iter(Axis(1)))
        .map(|(s, t)| column_candidates(s, t))
        .collect();
    let mut th = th0.as_slice().to_vec();
    let col_counts = |e: usize, t: f64| {
        let s = scores.values().column(e);
        F1Counts::from_pairs(
            s.iter()
                .map(|&v| v >= t)
                .zip(truth.column(e).iter().copied()),
        )
    };
    let mut per_class: Vec<F1Counts> = (0..k).map(|e| col_counts(e, th[e])).collect();
    let mut total = per_class.iter().fold(F1Counts::default(), |a, c| a + *c);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let budget = k * cfg.max_stale_passes;
    let mut stale = 0;
    let mut order: Vec<usize> = Vec::new();
    while stale < budget {
        // classes are drawn as a fresh random permutation per pass, so a
        // stale run of `k` draws has tried every class
        if order.is_empty() {
            order = (0..k).collect();
            order.shuffle(&mut rng);
        }
        let e = order.pop().expect("non-empty pass");
        let others = total - per_class[e];
        let (t, c) = argmax_largest(&cands[e], |c| others + *c);
        if (others + c).cmp_f1(&total) == Ordering::Greater {
            th[e] = t;
            per_class[e] = c;
            total = others + c;
            stale = 0;
        } else {
            stale += 1;
        }
    }
    ThresholdVector::new(th)
}

/// Stage 1 followed by stage 2.
pub fn tune_thresholds(
    scores: &ScoreMatrix,
    truth: ArrayView2<'_, bool>,
    cfg: &TunerConfig,
) -> Result<ThresholdVector> {
    let th0 = tune_thresholds_per_class(scores, truth)?;
    refine_thresholds_micro(scores, truth, &th0, cfg)
}

/// Micro F1 of `scores` binarized with `th`.
pub fn micro_f1_at(
    scores: &ScoreMatrix,
    truth: ArrayView2<'_, bool>,
    th: &ThresholdVector,
) -> Result<f64> {
    let pred = apply_thresholds(scores, th)?;
    Ok(micro_counts(pred.view(), truth)?.f1())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn sm(values: Array2<f64>) -> ScoreMatrix {
        let ids = (0..values.nrows()).map(|i| format!("c{i}")).collect();
        ScoreMatrix::new(ids, values).unwrap()
    }

    #[test]
    fn fusion_examples() {
        let audio = sm(array![[1.0, 0.2]]);
        let video = sm(array![[0.5, 0.4]]);
        let w = FusionWeights::new(vec![0.8, 0.5]).unwrap();
        let f = fuse_scores(&audio, &video, &w).unwrap();
        assert_abs_diff_eq!(f.values()[[0, 0]], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(f.values()[[0, 1]], 0.3, epsilon = 1e-12);
        let f0 = fuse_scores(&audio, &video, &FusionWeights::audio_only(2)).unwrap();
        assert_eq!(f0, audio);
    }

    #[test]
    fn fusion_rejects_mismatches() {
        let audio = sm(array![[1.0, 0.2]]);
        let other = ScoreMatrix::new(vec!["zz".into()], array![[0.5, 0.4]]).unwrap();
        assert!(fuse_scores(&audio, &other, &FusionWeights::audio_only(2)).is_err());
        assert!(fuse_scores(&audio, &audio, &FusionWeights::audio_only(3)).is_err());
        assert!(FusionWeights::new(vec![1.2]).is_err());
    }

    #[test]
    fn default_weight_examples() {
        assert_eq!(
            default_weights(&[], 3).unwrap().as_slice(),
            &[0.2, 0.2, 0.2]
        );
        assert_eq!(
            default_weights(&[0, 1, 2], 3).unwrap().as_slice(),
            &[0.8, 0.8, 0.8]
        );
        assert_eq!(
            default_weights(&[1], 3).unwrap().as_slice(),
            &[0.2, 0.8, 0.2]
        );
        assert!(default_weights(&[3], 3).is_err());
    }

    #[test]
    fn stage_one_examples() {
        let th =
            tune_thresholds_per_class(&sm(array![[0.9], [0.1]]), array![[true], [false]].view())
                .unwrap();
        assert_eq!(th.as_slice(), &[0.9]);

        let th =
            tune_thresholds_per_class(&sm(array![[0.9], [0.1]]), array![[false], [false]].view())
                .unwrap();
        assert_eq!(th.as_slice(), &[1.0]);

        let th = tune_thresholds_per_class(
            &sm(array![[0.9], [0.3], [0.6]]),
            array![[true], [true], [true]].view(),
        )
        .unwrap();
        assert_eq!(th.as_slice(), &[0.3]);
    }

    #[test]
    fn candidates_cover_observed_scores_and_bounds() {
        let c = column_candidates(
            array![0.4, 0.4, 0.7].view(),
            array![true, false, true].view(),
        );
        let ts: Vec<f64> = c.iter().map(|x| x.0).collect();
        assert_eq!(ts, vec![0.0, 0.4, 0.7, 1.0]);
        assert_eq!(
            c[1].1,
            F1Counts {
                tp: 2,
                fp: 1,
                fn_: 0
            }
        );
        assert_eq!(
            c[2].1,
            F1Counts {
                tp: 1,
                fp: 0,
                fn_: 1
            }
        );
        assert_eq!(
            c[3].1,
            F1Counts {
                tp: 0,
                fp: 0,
                fn_: 2
            }
        );
    }

    #[test]
    fn single_event_refinement_equals_stage_one() {
        let s = sm(array![[0.9], [0.2], [0.6], [0.4], [0.8]]);
        let t = array![[true], [false], [true], [false], [false]];
        let th0 = tune_thresholds_per_class(&s, t.view()).unwrap();
        let th = refine_thresholds_micro(&s, t.view(), &th0, &TunerConfig::default()).unwrap();
        assert_eq!(th, th0);
    }

    #[test]
    fn refinement_beats_independent_per_class_optima() {
        // event 0: ten positives cleanly separated; event 1: one weak positive
        // below two negatives, so its per-class optimum costs micro F1
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for i in 0..10 {
            rows.push([
                0.9,
                if i == 0 {
                    0.5
                } else if i < 3 {
                    0.6 + 0.1 * i as f64
                } else {
                    0.1
                },
            ]);
            truth.push([true, i == 0]);
        }
        for _ in 0..5 {
            rows.push([0.2, 0.1]);
            truth.push([false, false]);
        }
        let s = sm(Array2::from_shape_fn((rows.len(), 2), |(i, k)| rows[i][k]));
        let t = Array2::from_shape_fn((truth.len(), 2), |(i, k)| truth[i][k]);
        let th1 = tune_thresholds_per_class(&s, t.view()).unwrap();
        assert_eq!(th1.as_slice()[1], 0.5);
        let f1 = micro_f1_at(&s, t.view(), &th1).unwrap();
        let th2 = refine_thresholds_micro(&s, t.view(), &th1, &TunerConfig::default()).unwrap();
        let f2 = micro_f1_at(&s, t.view(), &th2).unwrap();
        assert!(f2 > f1);

        // exhaustive grid over candidate pairs
        let c0 = column_candidates(s.values().column(0), t.column(0));
        let c1 = column_candidates(s.values().column(1), t.column(1));
        let mut grid_best = 0.0f64;
        for (a, _) in &c0 {
            for (b, _) in &c1 {
                let th = ThresholdVector::new(vec![*a, *b]).unwrap();
                grid_best = grid_best.max(micro_f1_at(&s, t.view(), &th).unwrap());
            }
        }
        assert_abs_diff_eq!(f2, grid_best, epsilon = 1e-12);
    }

    #[test]
    fn optimal_start_is_left_unchanged() {
        let s = sm(array![[0.9, 0.8], [0.2, 0.3], [0.7, 0.1]]);
        let t = array![[true, true], [false, false], [true, false]];
        let th0 = ThresholdVector::new(vec![0.7, 0.8]).unwrap();
        assert_eq!(micro_f1_at(&s, t.view(), &th0).unwrap(), 1.0);
        let th = refine_thresholds_micro(&s, t.view(), &th0, &TunerConfig::default()).unwrap();
        assert_eq!(th, th0);
    }
}
