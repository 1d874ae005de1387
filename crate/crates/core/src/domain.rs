//! Domain types shared by every stage of the tagging pipeline.

use std::collections::{BTreeSet, HashMap, HashSet};

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Ordered set of sound-event labels. Index `k` is the event id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventTaxonomy {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl EventTaxonomy {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::Empty("taxonomy has no events".into()));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (k, label) in labels.iter().enumerate() {
            if label.trim().is_empty() {
                return Err(Error::InvalidValue(format!("event {k} has an empty label")));
            }
            if index.insert(label.clone(), k).is_some() {
                return Err(Error::InvalidValue(format!(
                    "duplicate event label `{label}`"
                )));
            }
        }
        Ok(Self { labels, index })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, k: usize) -> &str {
        &self.labels[k]
    }

    pub fn id_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }
}

/// One clip: a `T x F` frame-feature matrix and its weak (clip-level) labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipBag {
    pub clip_id: String,
    features: Array2<f64>,
    positives: BTreeSet<usize>,
}

impl ClipBag {
    pub fn new(
        clip_id: impl Into<String>,
        features: Array2<f64>,
        positives: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        let clip_id = clip_id.into();
        let (t, f) = features.dim();
        if t == 0 || f == 0 {
            return Err(Error::Empty(format!(
                "clip `{clip_id}` has a {t}x{f} feature matrix"
            )));
        }
        if let Some(((j, d), v)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "clip `{clip_id}` frame {j} dim {d} is {v}"
            )));
        }
        Ok(Self {
            clip_id,
            features,
            positives: positives.into_iter().collect(),
        })
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn n_frames(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn positives(&self) -> &BTreeSet<usize> {
        &self.positives
    }

    /// Binary label vector of length `k`.
    pub fn label_vector(&self, k: usize) -> Vec<bool> {
        (0..k).map(|e| self.positives.contains(&e)).collect()
    }
}

/// A taxonomy plus a list of clips sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub taxonomy: EventTaxonomy,
    clips: Vec<ClipBag>,
}

impl Dataset {
    pub fn new(taxonomy: EventTaxonomy, clips: Vec<ClipBag>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(clips.len());
        let dim = clips.first().map(ClipBag::dim);
        for clip in &clips {
            if !seen.insert(clip.clip_id.as_str()) {
                return Err(Error::InvalidValue(format!(
                    "duplicate clip id `{}`",
                    clip.clip_id
                )));
            }
            if Some(clip.dim()) != dim {
                return Err(Error::Dimension(format!(
                    "clip `{}` has feature dim {}, expected {}",
                    clip.clip_id,
                    clip.dim(),
                    dim.unwrap_or(0)
                )));
            }
            if let Some(&bad) = clip.positives.iter().find(|&&k| k >= taxonomy.len()) {
                return Err(Error::InvalidValue(format!(
                    "clip `{}` references event id {bad} but the taxonomy has {} events",
                    clip.clip_id,
                    taxonomy.len()
                )));
            }
        }
        Ok(Self { taxonomy, clips })
    }

    pub fn clips(&self) -> &[ClipBag] {
        &self.clips
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn n_events(&self) -> usize {
        self.taxonomy.len()
    }

    /// Feature dimension, or `None` for an empty dataset.
    pub fn feature_dim(&self) -> Option<usize> {
        self.clips.first().map(ClipBag::dim)
    }

    pub fn clip_ids(&self) -> Vec<String> {
        self.clips.iter().map(|c| c.clip_id.clone()).collect()
    }

    /// `N x K` truth matrix.
    pub fn label_matrix(&self) -> Array2<bool> {
        let k = self.n_events();
        Array2::from_shape_fn((self.clips.len(), k), |(i, e)| {
            self.clips[i].positives.contains(&e)
        })
    }

    /// Sub-dataset with the given clip ids, in the given order.
    pub fn subset(&self, ids: &[String]) -> Result<Dataset> {
        let by_id: HashMap<&str, &ClipBag> =
            self.clips.iter().map(|c| (c.clip_id.as_str(), c)).collect();
        let clips = ids
            .iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .map(|c| (*c).clone())
                    .ok_or_else(|| Error::InvalidValue(format!("unknown clip id `{id}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(self.taxonomy.clone(), clips)
    }
}

/// Clip-by-event probabilities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    clip_ids: Vec<String>,
    values: Array2<f64>,
}

impl ScoreMatrix {
    pub fn new(clip_ids: Vec<String>, values: Array2<f64>) -> Result<Self> {
        if clip_ids.len() != values.nrows() {
            return Err(Error::Dimension(format!(
                "{} clip ids for {} score rows",
                clip_ids.len(),
                values.nrows()
            )));
        }
        if let Some(((i, k), v)) = values
            .indexed_iter()
            .find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::InvalidValue(format!(
                "score for clip `{}` event {k} is {v}, outside [0, 1]",
                clip_ids[i]
            )));
        }
        Ok(Self { clip_ids, values })
    }

    pub fn clip_ids(&self) -> &[String] {
        &self.clip_ids
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n_clips(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_events(&self) -> usize {
        self.values.ncols()
    }

    /// Rows reordered to follow `ids`.
    pub fn select(&self, ids: &[String]) -> Result<ScoreMatrix> {
        let pos: HashMap<&str, usize> = self
            .clip_ids
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let rows = ids
            .iter()
            .map(|id| {
                pos.get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::InvalidValue(format!("no scores for clip `{id}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let values = Array2::from_shape_fn((rows.len(), self.n_events()), |(i, k)| {
            self.values[[rows[i], k]]
        });
        Ok(ScoreMatrix {
            clip_ids: ids.to_vec(),
            values,
        })
    }
}

/// Per-event decision thresholds in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdVector(Vec<f64>);

impl ThresholdVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((k, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::InvalidValue(format!(
                "threshold {k} is {v}, outside [0, 1]"
            )));
        }
        Ok(Self(values))
    }

    pub fn uniform(k: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; k])
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
