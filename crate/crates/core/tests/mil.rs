mod common;

use avtag::mil::{
    backward, forward_frame_scores, max_pool_clip, predict, predict_parallel, train, FrameScorer,
    NesterovSgd, PlateauScheduler, TrainConfig,
};
use avtag::synth::{generate_synthetic, SynthSpec};
use avtag::{ClipBag, Dataset, EventTaxonomy};
use common::*;
use ndarray::{s, Array2};
use proptest::prelude::*;

#[test]
fn gradient_matches_central_differences_small_instance() {
    for h in [0, 3] {
        let inst = mil_instance(7, 3, 4, 2, h);
        let g = backward(&inst.model, &inst.clip, &inst.labels).unwrap();
        let num = numeric_param_grad(&inst);
        for (i, (a, n)) in g.values.iter().zip(&num).enumerate() {
            let err = relative_error(*a, *n);
            assert!(
                err <= 1e-4,
                "hidden {h} param {i}: analytic {a} numeric {n}"
            );
        }
    }
}

#[test]
fn gradient_loss_matches_clip_loss() {
    let inst = mil_instance(3, 4, 5, 3, 2);
    let g = backward(&inst.model, &inst.clip, &inst.labels).unwrap();
    let l = avtag::mil::clip_loss(&inst.model, inst.clip.features(), &inst.labels).unwrap();
    assert!((g.loss - l).abs() < 1e-12);
}

#[test]
fn only_argmax_frame_moves_the_loss() {
    // K = 1, frame 2 made the strict argmax by construction
    let model = FrameScorer::from_params(2, 0, 1, 0, vec![1.0, -0.5, 0.1]).unwrap();
    let x = Array2::from_shape_vec((4, 2), vec![0.1, 0.2, -0.3, 0.4, 2.0, -1.0, 0.5, 0.5]).unwrap();
    let clip = ClipBag::new("c", x, [0usize]).unwrap();
    let (_, arg) = max_pool_clip(forward_frame_scores(&model, &clip).unwrap().view()).unwrap();
    assert_eq!(arg, vec![2]);
    let inst = MilInstance {
        model,
        clip,
        labels: vec![true],
    };
    for j in 0..4 {
        for f in 0..2 {
            let slope = numeric_feature_slope(&inst, j, f);
            if j == 2 {
                assert!(slope.abs() > 1e-4);
            } else {
                assert!(slope.abs() < 1e-8, "frame {j} feature {f}: {slope}");
            }
        }
    }
}

fn planted() -> (Dataset, Dataset) {
    let data = generate_synthetic(&SynthSpec::default()).unwrap();
    (data.train, data.valid)
}

#[test]
fn training_beats_the_half_baseline_within_twenty_epochs() {
    let (tr, va) = planted();
    let cfg = TrainConfig {
        batch_size: 10,
        grad_clip: 1e-2,
        max_epochs: 20,
        ..Default::default()
    };
    let (_, hist) = train(&tr, &va, &cfg).unwrap();
    let best = hist
        .epochs
        .iter()
        .map(|e| e.valid_loss)
        .fold(f64::INFINITY, f64::min);
    assert!(best < std::f64::consts::LN_2, "best validation loss {best}");
}

#[test]
fn training_history_is_deterministic() {
    let spec = SynthSpec {
        n_train: 40,
        n_valid: 10,
        n_test: 5,
        ..Default::default()
    };
    let data = generate_synthetic(&spec).unwrap();
    let cfg = TrainConfig {
        max_epochs: 6,
        batch_size: 7,
        hidden_units: 3,
        rng_seed: 11,
        ..Default::default()
    };
    let (m1, h1) = train(&data.train, &data.valid, &cfg).unwrap();
    let (m2, h2) = train(&data.train, &data.valid, &cfg).unwrap();
    assert_eq!(h1, h2);
    let bits = |m: &FrameScorer| m.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&m1), bits(&m2));
    assert!(h1.epochs.windows(2).all(|w| w[1].lr <= w[0].lr));
}

#[test]
fn lr_decays_only_after_a_plateau() {
    let mut s = PlateauScheduler::new(0.1, 0.8, 3);
    let lrs: Vec<f64> = [1.0, 0.9, 0.9, 0.9, 0.9, 0.8, 0.8]
        .iter()
        .map(|&l| s.observe(l))
        .collect();
    assert_eq!(lrs[..4], [0.1; 4]);
    for lr in &lrs[4..] {
        assert!((lr - 0.08).abs() < 1e-15);
    }
}

fn random_dataset(seed: u64, n: usize, t: usize, f: usize, k: usize) -> Dataset {
    let mut r = rng(seed);
    let labels: Vec<String> = (0..k).map(|e| format!("e{e}")).collect();
    let clips = (0..n)
        .map(|i| {
            let x = random_matrix(&mut r, t, f, 2.0);
            let pos: Vec<usize> = (0..k).filter(|&e| (i + e) % 3 == 0).collect();
            ClipBag::new(format!("c{i}"), x, pos).unwrap()
        })
        .collect();
    Dataset::new(EventTaxonomy::new(labels).unwrap(), clips).unwrap()
}

#[test]
fn predict_is_forward_then_max_pool() {
    let data = random_dataset(5, 6, 7, 4, 3);
    let model = FrameScorer::init(4, 2, 3, 9).unwrap();
    let scores = predict(&model, &data).unwrap();
    for (i, c) in data.clips().iter().enumerate() {
        let frames = forward_frame_scores(&model, c).unwrap();
        let (pooled, _) = max_pool_clip(frames.view()).unwrap();
        assert_eq!(scores.values().row(i).to_vec(), pooled.to_vec());
    }
    assert_eq!(
        predict_parallel(&model, &data).unwrap().values(),
        scores.values()
    );
}

#[test]
fn predict_ignores_frame_order() {
    let data = random_dataset(8, 4, 6, 3, 2);
    let model = FrameScorer::init(3, 0, 2, 1).unwrap();
    let reversed: Vec<ClipBag> = data
        .clips()
        .iter()
        .map(|c| {
            let x = c.features().slice(s![..;-1, ..]).to_owned();
            ClipBag::new(c.clip_id.clone(), x, c.positives().clone()).unwrap()
        })
        .collect();
    let rev = Dataset::new(data.taxonomy.clone(), reversed).unwrap();
    assert_eq!(
        predict(&model, &data).unwrap().values(),
        predict(&model, &rev).unwrap().values()
    );
}

#[test]
fn mismatched_feature_dims_are_rejected() {
    let data = random_dataset(1, 2, 3, 4, 2);
    let model = FrameScorer::init(5, 0, 2, 0).unwrap();
    assert!(predict(&model, &data).is_err());
}

proptest! {
    #[test]
    fn clipped_steps_stay_bounded(grad in prop::collection::vec(-10.0f64..10.0, 1..20), clip in 1e-4f64..1.0) {
        let mut opt = NesterovSgd::new(grad.len(), 0.0, clip);
        let mut params = vec![0.0; grad.len()];
        let mut g = grad.clone();
        opt.step(&mut params, &mut g, 1.0);
        for (gi, pi) in g.iter().zip(&params) {
            prop_assert!(gi.abs() <= clip);
            prop_assert!(pi.abs() <= clip + 1e-15);
        }
    }

    #[test]
    fn gradients_agree_with_differences(seed in 0u64..1000) {
        let inst = random_mil_instance(seed, 4, 5, 3, 3);
        let g = backward(&inst.model, &inst.clip, &inst.labels).unwrap();
        let num = numeric_param_grad(&inst);
        for (a, n) in g.values.iter().zip(&num) {
            prop_assert!(relative_error(*a, *n) <= 1e-4, "analytic {} numeric {}", a, n);
        }
    }

    #[test]
    fn bag_loss_is_non_negative(p in prop::collection::vec(0.0f64..=1.0, 6), y in prop::collection::vec(any::<bool>(), 6)) {
        let scores = Array2::from_shape_vec((2, 3), p).unwrap();
        let labels = Array2::from_shape_vec((2, 3), y).unwrap();
        let l = avtag::mil::bag_loss(scores.view(), labels.view()).unwrap();
        prop_assert!(l.is_finite() && l >= 0.0);
    }
}
