use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::ClipBag;
use crate::error::{Error, Result};

/// Probabilities are clamped to `[EPS, 1 - EPS]` inside the logarithms.
pub const EPS: f64 = 1e-7;

/// Feedforward frame-level event scorer: `F -> [H, tanh] -> K, sigmoid`.
///
/// Parameters live in one flat buffer in layer order: hidden weights (`H x F`,
/// row-major), hidden bias, output weights (`K x H`, or `K x F` with no hidden
/// layer), output bias.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameScorer {
    input_dim: usize,
    hidden_dim: usize,
    n_events: usize,
    seed: u64,
    params: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    w1: (usize, usize),
    b1: (usize, usize),
    w2: (usize, usize),
    b2: (usize, usize),
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl FrameScorer {
    pub fn param_count(input_dim: usize, hidden_dim: usize, n_events: usize) -> usize {
        if hidden_dim == 0 {
            n_events * input_dim + n_events
        } else {
            hidden_dim * input_dim + hidden_dim + n_events * hidden_dim + n_events
        }
    }

    /// All-zero parameters; every output is exactly 0.5.
    pub fn zeros(input_dim: usize, hidden_dim: usize, n_events: usize) -> Result<Self> {
        Self::from_params(
            input_dim,
            hidden_dim,
            n_events,
            0,
            vec![0.0; Self::param_count(input_dim, hidden_dim, n_events)],
        )
    }

    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn init(input_dim: usize, hidden_dim: usize, n_events: usize, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(input_dim, hidden_dim, n_events)?;
        model.seed = seed;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lay = model.layout();
        let out_in = model.output_fan_in();
        let mut fill = |range: (usize, usize), fan_in: usize, fan_out: usize, p: &mut [f64]| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut p[range.0..range.1] {
                *w = rng.random_range(-limit..limit);
            }
        };
        if hidden_dim > 0 {
            fill(lay.w1, input_dim, hidden_dim, &mut model.params);
        }
        fill(lay.w2, out_in, n_events, &mut model.params);
        Ok(model)
    }

    pub fn from_params(
        input_dim: usize,
        hidden_dim: usize,
        n_events: usize,
        seed: u64,
        params: Vec<f64>,
    ) -> Result<Self> {
        if input_dim == 0 || n_events == 0 {
            return Err(Error::Config(format!(
                "scorer needs input and output dims >= 1, got {input_dim} and {n_events}"
            )));
        }
        let expected = Self::param_count(input_dim, hidden_dim, n_events);
        if params.len() != expected {
            return Err(Error::Dimension(format!(
                "expected {expected} parameters, got {}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("model parameter".into()));
        }
        Ok(Self {
            input_dim,
            hidden_dim,
            n_events,
            seed,
            params,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn n_events(&self) -> usize {
        self.n_events
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn output_fan_in(&self) -> usize {
        if self.hidden_dim == 0 {
            self.input_dim
        } else {
            self.hidden_dim
        }
    }

    fn layout(&self) -> Layout {
        let (f, h, k) = (self.input_dim, self.hidden_dim, self.n_events);
        let w1 = (0, h * f);
        let b1 = (w1.1, w1.1 + h);
        let fan = self.output_fan_in();
        let w2 = (b1.1, b1.1 + k * fan);
        let b2 = (w2.1, w2.1 + k);
        Layout { w1, b1, w2, b2 }
    }

    fn view2(&self, range: (usize, usize), rows: usize, cols: usize) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((rows, cols), &self.params[range.0..range.1]).expect("layout")
    }

    fn view1(&self, range: (usize, usize)) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params[range.0..range.1])
    }

    /// Hidden activations (`T x H`), or `None` for the linear scorer.
    fn hidden(&self, x: ArrayView2<'_, f64>) -> Option<Array2<f64>> {
        if self.hidden_dim == 0 {
            return None;
        }
        let lay = self.layout();
        let w1 = self.view2(lay.w1, self.hidden_dim, self.input_dim);
        let b1 = self.view1(lay.b1);
        let mut a = x.dot(&w1.t());
        a += &b1;
        a.mapv_inplace(f64::tanh);
        Some(a)
    }

    fn output(&self, h: ArrayView2<'_, f64>) -> Array2<f64> {
        let lay = self.layout();
        let w2 = self.view2(lay.w2, self.n_events, self.output_fan_in());
        let b2 = self.view1(lay.b2);
        let mut z = h.dot(&w2.t());
        z += &b2;
        z.mapv_inplace(sigmoid);
        z
    }

    fn check_input(&self, x: ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.input_dim {
            return Err(Error::Dimension(format!(
                "features have dim {}, model expects {}",
                x.ncols(),
                self.input_dim
            )));
        }
        Ok(())
    }

    /// Frame-level probabilities (`T x K`) for a raw feature matrix.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let p = match self.hidden(x) {
            Some(h) => self.output(h.view()),
            None => self.output(x),
        };
        if let Some(((j, k), _)) = p.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "activation at frame {j}, event {k}"
            )));
        }
        Ok(p)
    }
}

/// Frame-level event probabilities for one clip.
pub fn forward_frame_scores(model: &FrameScorer, clip: &ClipBag) -> Result<Array2<f64>> {
    model.forward(clip.features())
}

/// Clip-level scores (`K`) and the frame attaining each maximum (smallest index on ties).
pub fn max_pool_clip(frame_scores: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Vec<usize>)> {
    if frame_scores.nrows() == 0 || frame_scores.ncols() == 0 {
        return Err(Error::Empty("frame score matrix".into()));
    }
    let mut scores = Array1::zeros(frame_scores.ncols());
    let mut argmax = Vec::with_capacity(frame_scores.ncols());
    for (k, col) in frame_scores.axis_iter(Axis(1)).enumerate() {
        let mut best = 0;
        for (j, &v) in col.iter().enumerate() {
            if v > col[best] {
                best = j;
            }
        }
        scores[k] = col[best];
        argmax.push(best);
    }
    Ok((scores, argmax))
}

fn cell_loss(p: f64, y: bool) -> f64 {
    let p = p.clamp(EPS, 1.0 - EPS);
    if y {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Mean binary cross-entropy over all clips and events.
pub fn bag_loss(clip_scores: ArrayView2<'_, f64>, labels: ArrayView2<'_, bool>) -> Result<f64> {
    if clip_scores.dim() != labels.dim() {
        return Err(Error::Dimension(format!(
            "scores {:?} vs labels {:?}",
            clip_scores.dim(),
            labels.dim()
        )));
    }
    if clip_scores.is_empty() {
        return Err(Error::Empty("no scores to evaluate".into()));
    }
    let total: f64 = clip_scores
        .iter()
        .zip(labels.iter())
        .map(|(&p, &y)| cell_loss(p, y))
        .sum();
    Ok(total / clip_scores.len() as f64)
}

/// Gradient of one clip's loss contribution, in the scorer's parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub loss: f64,
    pub values: Vec<f64>,
}

impl Gradient {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Loss `-(1/K) sum_k [y log p + (1-y) log(1-p)]` for one clip and its gradient.
///
/// For each event the gradient reaches the scorer only through the frame that
/// attains the clip-level maximum.
pub fn backward(model: &FrameScorer, clip: &ClipBag, labels: &[bool]) -> Result<Gradient> {
    let x = clip.features();
    model.check_input(x)?;
    let k_total = model.n_events;
    if labels.len() != k_total {
        return Err(Error::Dimension(format!(
            "{} labels for a model with {k_total} events",
            labels.len()
        )));
    }
    let hidden = model.hidden(x);
    let h_view = hidden.as_ref().map(|h| h.view()).unwrap_or(x);
    let frames = model.output(h_view);
    let (clip_scores, argmax) = max_pool_clip(frames.view())?;

    let lay = model.layout();
    let fan = model.output_fan_in();
    let w2 = model.view2(lay.w2, k_total, fan);
    let mut grad = vec![0.0; model.params.len()];
    // d loss / d hidden activation, only for frames that win some event
    let mut d_hidden: Vec<(usize, Array1<f64>)> = Vec::new();
    let mut loss = 0.0;
    let scale = 1.0 / k_total as f64;

    for k in 0..k_total {
        let p = clip_scores[k];
        let y = labels[k];
        loss += cell_loss(p, y) * scale;
        // the clamp is flat outside (EPS, 1 - EPS)
        if !(p > EPS && p < 1.0 - EPS) {
            continue;
        }
        let dz = (p - if y { 1.0 } else { 0.0 }) * scale;
        let j = argmax[k];
        let h_row = h_view.row(j);
        let w_off = lay.w2.0 + k * fan;
        for (g, &h) in grad[w_off..w_off + fan].iter_mut().zip(h_row.iter()) {
            *g += dz * h;
        }
        grad[lay.b2.0 + k] += dz;
        if hidden.is_some() {
            let contrib = w2.row(k).mapv(|w| w * dz);
            match d_hidden.iter_mut().find(|(jj, _)| *jj == j) {
                Some((_, acc)) => *acc += &contrib,
                None => d_hidden.push((j, contrib)),
            }
        }
    }

    if let Some(h) = hidden.as_ref() {
        let f = model.input_dim;
        for (j, dh) in d_hidden {
            let h_row = h.row(j);
            let x_row = x.row(j);
            for u in 0..model.hidden_dim {
                let da = dh[u] * (1.0 - h_row[u] * h_row[u]);
                if da == 0.0 {
                    continue;
                }
                let off = lay.w1.0 + u * f;
                for (g, &xv) in grad[off..off + f].iter_mut().zip(x_row.iter()) {
                    *g += da * xv;
                }
                grad[lay.b1.0 + u] += da;
            }
        }
    }

    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!(
            "gradient for clip `{}`",
            clip.clip_id
        )));
    }
    Ok(Gradient { loss, values: grad })
}

/// Clip loss as `backward` defines it, without the gradient.
pub fn clip_loss(model: &FrameScorer, x: ArrayView2<'_, f64>, labels: &[bool]) -> Result<f64> {
    let frames = model.forward(x)?;
    let (scores, _) = max_pool_clip(frames.view())?;
    let row = scores.insert_axis(Axis(0));
    let y = Array2::from_shape_fn((1, labels.len()), |(_, k)| labels[k]);
    bag_loss(row.view(), y.view())
}

/// Slice of the hidden-layer weights, exposed for diagnostics.
pub fn hidden_weights(model: &FrameScorer) -> Option<ArrayView2<'_, f64>> {
    (model.hidden_dim > 0).then(|| {
        let lay = model.layout();
        model.view2(lay.w1, model.hidden_dim, model.input_dim)
    })
}

/// Output-layer weights (`K x fan_in`).
pub fn output_weights(model: &FrameScorer) -> ArrayView2<'_, f64> {
    let lay = model.layout();
    model.view2(lay.w2, model.n_events, model.output_fan_in())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn zero_model_outputs_one_half() {
        let model = FrameScorer::zeros(3, 2, 4).unwrap();
        let clip = ClipBag::new("c", array![[1.0, -2.0, 3.0], [0.5, 0.5, 0.5]], []).unwrap();
        let p = forward_frame_scores(&model, &clip).unwrap();
        assert_eq!(p.dim(), (2, 4));
        assert!(p.iter().all(|&v| v == 0.5));
        let single = ClipBag::new("s", array![[1.0, 1.0, 1.0]], []).unwrap();
        assert_eq!(forward_frame_scores(&model, &single).unwrap().dim(), (1, 4));
    }

    #[test]
    fn linear_scorer_matches_hand_computation() {
        let model = FrameScorer::from_params(2, 0, 1, 0, vec![1.0, -1.0, 0.0]).unwrap();
        let p = model.forward(array![[2.0, 1.0]].view()).unwrap();
        // sigmoid(1)
        assert_abs_diff_eq!(p[[0, 0]], 0.731_058_578_630_004_9, epsilon = 1e-12);
    }

    #[test]
    fn forward_rejects_wrong_dim() {
        let model = FrameScorer::zeros(3, 0, 1).unwrap();
        assert!(model.forward(array![[1.0, 2.0]].view()).is_err());
    }

    #[test]
    fn max_pool_examples() {
        let (s, a) = max_pool_clip(array![[0.1], [0.9], [0.3]].view()).unwrap();
        assert_eq!((s[0], a[0]), (0.9, 1));
        let (s, a) = max_pool_clip(array![[0.4], [0.4]].view()).unwrap();
        assert_eq!((s[0], a[0]), (0.4, 0));
        let (s, _) = max_pool_clip(array![[0.2, 0.7]].view()).unwrap();
        assert_eq!(s.to_vec(), vec![0.2, 0.7]);
        assert!(max_pool_clip(Array2::<f64>::zeros((0, 2)).view()).is_err());
    }

    #[test]
    fn bag_loss_examples() {
        let half = bag_loss(array![[0.5]].view(), array![[true]].view()).unwrap();
        assert_abs_diff_eq!(half, std::f64::consts::LN_2, epsilon = 1e-12);

        let l = bag_loss(array![[0.9, 0.2]].view(), array![[true, false]].view()).unwrap();
        assert_abs_diff_eq!(l, 0.164_252_033_486_018, epsilon = 1e-9);

        let perfect = bag_loss(
            array![[1.0, 0.0], [0.0, 1.0]].view(),
            array![[true, false], [false, true]].view(),
        )
        .unwrap();
        assert!((0.0..1e-6).contains(&perfect));

        assert!(bag_loss(array![[0.5]].view(), array![[true, false]].view()).is_err());
    }

    #[test]
    fn saturated_correct_predictions_have_no_gradient() {
        // huge biases drive the sigmoid to exactly 1 and 0
        let mut params = vec![0.0; FrameScorer::param_count(2, 0, 2)];
        params[4] = 60.0;
        params[5] = -60.0;
        let model = FrameScorer::from_params(2, 0, 2, 0, params).unwrap();
        let clip = ClipBag::new("c", array![[0.3, -0.1], [1.0, 2.0]], [0]).unwrap();
        let g = backward(&model, &clip, &[true, false]).unwrap();
        assert!(g.norm() < 1e-4);
        assert!(g.loss < 1e-6);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = FrameScorer::init(5, 3, 2, 11).unwrap();
        let b = FrameScorer::init(5, 3, 2, 11).unwrap();
        let c = FrameScorer::init(5, 3, 2, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.params(), c.params());
        let limit = (6.0f64 / 8.0).sqrt();
        assert!(hidden_weights(&a).unwrap().iter().all(|w| w.abs() <= limit));
        let out_limit = (6.0f64 / 5.0).sqrt();
        assert!(output_weights(&a).iter().all(|w| w.abs() <= out_limit));
    }
}
