#![allow(dead_code)]

use avtag::mil::{clip_loss, FrameScorer};
use avtag::repsel::DissimilarityMatrix;
use avtag::ClipBag;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..scale))
}

/// A random model, clip and label vector.
pub struct MilInstance {
    pub model: FrameScorer,
    pub clip: ClipBag,
    pub labels: Vec<bool>,
}

pub fn mil_instance(seed: u64, f: usize, t: usize, k: usize, h: usize) -> MilInstance {
    let mut r = rng(seed);
    let model = FrameScorer::init(f, h, k, seed).unwrap();
    let x = random_matrix(&mut r, t, f, 1.0);
    let labels: Vec<bool> = (0..k).map(|_| r.random_bool(0.5)).collect();
    let positives: Vec<usize> = (0..k).filter(|&e| labels[e]).collect();
    MilInstance {
        model,
        clip: ClipBag::new("c", x, positives).unwrap(),
        labels,
    }
}

/// Instance with dimensions drawn from the given inclusive upper bounds.
pub fn random_mil_instance(
    seed: u64,
    max_f: usize,
    max_t: usize,
    max_k: usize,
    max_h: usize,
) -> MilInstance {
    let mut r = rng(seed ^ 0x9e37_79b9);
    let f = r.random_range(1..=max_f);
    let t = r.random_range(1..=max_t);
    let k = r.random_range(1..=max_k);
    let h = r.random_range(0..=max_h);
    mil_instance(seed, f, t, k, h)
}

/// Central difference of the clip loss with respect to every parameter.
pub fn numeric_param_grad(inst: &MilInstance) -> Vec<f64> {
    let mut m = inst.model.clone();
    let x = inst.clip.features();
    (0..m.params().len())
        .map(|i| {
            let orig = m.params()[i];
            m.params_mut()[i] = orig + FD_STEP;
            let up = clip_loss(&m, x, &inst.labels).unwrap();
            m.params_mut()[i] = orig - FD_STEP;
            let down = clip_loss(&m, x, &inst.labels).unwrap();
            m.params_mut()[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Central difference of the clip loss with respect to feature `(j, f)`.
pub fn numeric_feature_slope(inst: &MilInstance, j: usize, f: usize) -> f64 {
    let mut x = inst.clip.features().to_owned();
    let orig = x[[j, f]];
    x[[j, f]] = orig + FD_STEP;
    let up = clip_loss(&inst.model, x.view(), &inst.labels).unwrap();
    x[[j, f]] = orig - FD_STEP;
    let down = clip_loss(&inst.model, x.view(), &inst.labels).unwrap();
    (up - down) / (2.0 * FD_STEP)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-7 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

/// Two tight clusters in the plane whose gap is at least ten times their spread.
pub fn two_cluster_points(seed: u64, n: usize) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    let split = r.random_range(1..n);
    (0..n)
        .map(|i| {
            let cx = if i < split { 0.0 } else { 20.0 };
            vec![cx + r.random_range(-0.5..0.5), r.random_range(-0.5..0.5)]
        })
        .collect()
}

pub fn random_dissimilarity(seed: u64, n: usize) -> DissimilarityMatrix {
    let mut r = rng(seed);
    let pts: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![r.random_range(0.0..10.0), r.random_range(0.0..10.0)])
        .collect();
    avtag::repsel::dissimilarity_matrix(&pts).unwrap()
}

use avtag::metrics::{micro_counts, F1Counts};
use avtag::vmap::{EmbeddingStore, ObjectDistribution};
use avtag::{EventTaxonomy, ScoreMatrix};

/// Random distribution over labels drawn from a pool of `pool` names.
pub fn random_distribution(r: &mut ChaCha8Rng, pool: usize) -> ObjectDistribution {
    let n = r.random_range(1..=pool.min(25));
    let mut names: Vec<usize> = (0..pool).collect();
    for i in (1..pool).rev() {
        names.swap(i, r.random_range(0..=i));
    }
    let weights: Vec<f64> = (0..n)
        .map(|_| {
            // coarse grid values make ties at the cutoff common
            if r.random_bool(0.3) {
                r.random_range(1..4) as f64
            } else {
                r.random_range(0.01..3.0)
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    ObjectDistribution::from_pairs(
        names[..n]
            .iter()
            .zip(&weights)
            .map(|(&i, w)| (format!("obj{i}"), w / total)),
    )
    .unwrap()
}

/// Events and objects with random 2-d or 3-d vectors; some objects left out of
/// the store.
pub struct EmbeddingWorld {
    pub taxonomy: EventTaxonomy,
    pub store: EmbeddingStore,
    pub objects: Vec<String>,
}

pub fn embedding_world(seed: u64) -> EmbeddingWorld {
    let mut r = rng(seed);
    let dim = r.random_range(2..=3);
    let k = r.random_range(1..=6);
    let mut store = EmbeddingStore::new(dim).unwrap();
    let nonzero = |r: &mut ChaCha8Rng| loop {
        let v: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
        if v.iter().any(|x| x.abs() > 1e-3) {
            break v;
        }
    };
    let events: Vec<String> = (0..k).map(|e| format!("event{e}")).collect();
    for e in &events {
        let v = nonzero(&mut r);
        store.insert(e.clone(), v).unwrap();
    }
    let objects: Vec<String> = (0..30).map(|i| format!("obj{i}")).collect();
    for o in &objects {
        if r.random_bool(0.8) {
            let v = nonzero(&mut r);
            store.insert(o.clone(), v).unwrap();
        }
    }
    EmbeddingWorld {
        taxonomy: EventTaxonomy::new(events).unwrap(),
        store,
        objects,
    }
}

/// Nearest event by enumerating every (object, event) cosine directly.
pub fn brute_force_nearest(world: &EmbeddingWorld, object: &str) -> Option<usize> {
    let v = world.store.get(object)?;
    let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mut best: Option<(usize, f64)> = None;
    for (k, e) in world.taxonomy.labels().iter().enumerate() {
        let u = world.store.get(e).unwrap();
        let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
        let cos = dot / (norm(u) * norm(v));
        if best.is_none_or(|(_, b)| cos > b) {
            best = Some((k, cos));
        }
    }
    best.map(|b| b.0)
}

/// Random 2-class score matrix and truth with `n` clips.
pub fn tuner_instance(seed: u64, n: usize, k: usize) -> (ScoreMatrix, Array2<bool>) {
    let mut r = rng(seed);
    let truth = Array2::from_shape_fn((n, k), |_| r.random_bool(0.4));
    let values = Array2::from_shape_fn((n, k), |(i, e)| {
        let base: f64 = if truth[[i, e]] { 0.6 } else { 0.4 };
        // quantized so candidate sets contain repeated scores
        let v = (base + r.random_range(-0.4..0.4)).clamp(0.0, 1.0);
        (v * 50.0).round() / 50.0
    });
    let ids = (0..n).map(|i| format!("c{i}")).collect();
    (ScoreMatrix::new(ids, values).unwrap(), truth)
}

/// Candidate thresholds of one column: distinct scores plus 0 and 1.
pub fn candidates(scores: &ScoreMatrix, e: usize) -> Vec<f64> {
    let mut c: Vec<f64> = scores.values().column(e).to_vec();
    c.extend([0.0, 1.0]);
    c.sort_by(f64::total_cmp);
    c.dedup();
    c
}

pub fn counts_at(scores: &ScoreMatrix, truth: &Array2<bool>, th: &[f64]) -> F1Counts {
    let pred = Array2::from_shape_fn(truth.dim(), |(i, e)| scores.values()[[i, e]] >= th[e]);
    micro_counts(pred.view(), truth.view()).unwrap()
}

/// Exhaustive per-class search: best F1, ties to the larger threshold.
pub fn brute_force_per_class(scores: &ScoreMatrix, truth: &Array2<bool>) -> Vec<f64> {
    (0..truth.ncols())
        .map(|e| {
            let mut best: Option<(f64, f64)> = None;
            for t in candidates(scores, e) {
                let pairs =
                    (0..truth.nrows()).map(|i| (scores.values()[[i, e]] >= t, truth[[i, e]]));
                let f1 = F1Counts::from_pairs(pairs).f1();
                if best.is_none_or(|(_, b)| f1 >= b) {
                    best = Some((t, f1));
                }
            }
            best.unwrap().0
        })
        .collect()
}

/// Best micro F1 over the full grid of candidate pairs of a 2-class instance.
pub fn grid_micro_f1(scores: &ScoreMatrix, truth: &Array2<bool>) -> f64 {
    let mut best = 0.0f64;
    for a in candidates(scores, 0) {
        for b in candidates(scores, 1) {
            best = best.max(counts_at(scores, truth, &[a, b]).f1());
        }
    }
    best
}
