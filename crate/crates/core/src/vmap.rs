//! Visual knowledge mapping: object distributions to sound-event scores.

use std::cmp::Ordering;
use std::collections::hash_map::Entry;
use std::collections::{HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::EventTaxonomy;
use crate::error::{Error, Result};

/// Number of object classes kept by rectification.
pub const DEFAULT_TOP_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectProb {
    pub label: String,
    pub prob: f64,
}

/// Probability distribution over visual-object labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectDistribution {
    entries: Vec<ObjectProb>,
}

impl ObjectDistribution {
    pub fn new(entries: Vec<ObjectProb>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Empty("object distribution has no entries".into()));
        }
        let mut seen = HashSet::with_capacity(entries.len());
        let mut total = 0.0;
        for e in &entries {
            if !e.prob.is_finite() || e.prob < 0.0 {
                return Err(Error::InvalidValue(format!(
                    "object `{}` has probability {}",
                    e.label, e.prob
                )));
            }
            if !seen.insert(e.label.as_str()) {
                return Err(Error::InvalidValue(format!(
                    "duplicate object `{}`",
                    e.label
                )));
            }
            total += e.prob;
        }
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidValue(format!(
                "object probabilities sum to {total}"
            )));
        }
        Ok(Self { entries })
    }

    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, f64)>) -> Result<Self> {
        Self::new(
            pairs
                .into_iter()
                .map(|(label, prob)| ObjectProb {
                    label: label.into(),
                    prob,
                })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[ObjectProb] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn prob(&self, label: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.label == label)
            .map(|e| e.prob)
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.prob).sum()
    }
}

/// Keep the `top_k` heaviest entries (cutoff ties by label) and renormalize.
fn truncate_normalize(mut entries: Vec<ObjectProb>, top_k: usize) -> Result<ObjectDistribution> {
    if top_k == 0 {
        return Err(Error::Config("top_k must be >= 1".into()));
    }
    if entries.is_empty() {
        return Err(Error::Empty("nothing to rectify".into()));
    }
    entries.sort_by(|a, b| {
        b.prob
            .partial_cmp(&a.prob)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.label.cmp(&b.label))
    });
    entries.truncate(top_k);
    let mass: f64 = entries.iter().map(|e| e.prob).sum();
    if !(mass > 0.0) {
        return Err(Error::InvalidValue("retained object mass is zero".into()));
    }
    for e in &mut entries {
        e.prob /= mass;
    }
    ObjectDistribution::new(entries)
}

/// Retain the `top_k` most probable objects and renormalize their mass.
///
/// A distribution that already fits is returned as is, so rectification is
/// exactly idempotent.
pub fn rectify(dist: &ObjectDistribution, top_k: usize) -> Result<ObjectDistribution> {
    if top_k == 0 {
        return Err(Error::Config("top_k must be >= 1".into()));
    }
    if dist.len() <= top_k {
        return Ok(dist.clone());
    }
    truncate_normalize(dist.entries.clone(), top_k)
}

/// Rectify each key frame, sum per label, and rectify the sum.
pub fn aggregate_keyframes(
    dists: &[ObjectDistribution],
    top_k: usize,
) -> Result<ObjectDistribution> {
    if dists.is_empty() {
        return Err(Error::Empty("no key-frame distributions".into()));
    }
    let mut order: Vec<String> = Vec::new();
    let mut sums: HashMap<String, f64> = HashMap::new();
    for d in dists {
        for e in rectify(d, top_k)?.entries {
            match sums.get_mut(&e.label) {
                Some(s) => *s += e.prob,
                None => {
                    order.push(e.label.clone());
                    sums.insert(e.label, e.prob);
                }
            }
        }
    }
    let summed = order
        .into_iter()
        .map(|label| {
            let prob = sums[&label];
            ObjectProb { label, prob }
        })
        .collect();
    truncate_normalize(summed, top_k)
}

/// Cosine similarity; an all-zero argument is an error.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Dimension(format!(
            "vectors of length {} and {}",
            u.len(),
            v.len()
        )));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|b| b * b).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Embedding(
            "cosine similarity of a zero vector".into(),
        ));
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Counters from parsing a word-vector file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub loaded: usize,
    pub malformed: usize,
    pub duplicates: usize,
}

/// Token -> dense vector lookup.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingStore {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Embedding("embedding dimension must be >= 1".into()));
        }
        Ok(Self {
            dim,
            vectors: HashMap::new(),
        })
    }

    /// Insert unless the token is already present. Returns whether it was inserted.
    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(Error::Dimension(format!(
                "vector of length {} in a {}-d store",
                vector.len(),
                self.dim
            )));
        }
        let token = token.into();
        if self.vectors.contains_key(&token) {
            return Ok(false);
        }
        self.vectors.insert(token, vector);
        Ok(true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    /// Parse the text layout `token v1 v2 ... vd`, one entry per line.
    ///
    /// The dimension is fixed by the first well-formed line. Tokens may contain
    /// spaces: the last `d` fields are the vector. Malformed lines are counted
    /// and skipped; repeated tokens keep their first vector.
    pub fn from_reader<R: BufRead>(reader: R) -> std::io::Result<(Self, LoadStats)> {
        let mut store = EmbeddingStore::default();
        let mut stats = LoadStats::default();
        for line in reader.lines() {
            let line = line?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            let dim = if store.dim == 0 {
                fields.len().saturating_sub(1)
            } else {
                store.dim
            };
            if dim == 0 || fields.len() < dim + 1 {
                stats.malformed += 1;
                continue;
            }
            let split = fields.len() - dim;
            let parsed: std::result::Result<Vec<f64>, _> =
                fields[split..].iter().map(|s| s.parse::<f64>()).collect();
            let vector = match parsed {
                Ok(v) if v.iter().all(|x| x.is_finite()) => v,
                _ => {
                    stats.malformed += 1;
                    continue;
                }
            };
            store.dim = dim;
            let token = fields[..split].join(" ");
            match store.vectors.entry(token) {
                Entry::Occupied(_) => stats.duplicates += 1,
                Entry::Vacant(slot) => {
                    slot.insert(vector);
                    stats.loaded += 1;
                }
            }
        }
        if stats.malformed > 0 {
            log::warn!("skipped {} malformed embedding lines", stats.malformed);
        }
        Ok((store, stats))
    }

    pub fn load(path: &Path) -> Result<(Self, LoadStats)> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let (store, stats) =
            Self::from_reader(std::io::BufReader::new(file)).map_err(|e| Error::io(path, e))?;
        if store.is_empty() {
            return Err(Error::Embedding(format!(
                "{}: no usable embedding vectors",
                path.display()
            )));
        }
        Ok((store, stats))
    }
}

/// Lowercase and split on anything that is not alphanumeric.
pub fn tokenize(label: &str) -> Vec<String> {
    label
        .to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Mean vector of the label's in-vocabulary tokens.
pub fn label_embedding(label: &str, store: &EmbeddingStore) -> Result<Vec<f64>> {
    let tokens = tokenize(label);
    if tokens.is_empty() {
        return Err(Error::Embedding(format!("label `{label}` has no tokens")));
    }
    let mut acc = vec![0.0; store.dim()];
    let mut found = 0usize;
    for t in &tokens {
        if let Some(v) = store.get(t) {
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x;
            }
            found += 1;
        }
    }
    if found == 0 {
        return Err(Error::Embedding(format!(
            "no token of `{label}` is in the embedding vocabulary"
        )));
    }
    let inv = 1.0 / found as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    Ok(acc)
}

/// Per-event confidences from the video branch, in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoEventScores(pub Vec<f64>);

/// Event-label embeddings, computed once per taxonomy.
#[derive(Debug, Clone)]
pub struct EventMapper<'a> {
    store: &'a EmbeddingStore,
    events: Vec<Vec<f64>>,
}

impl<'a> EventMapper<'a> {
    pub fn new(taxonomy: &EventTaxonomy, store: &'a EmbeddingStore) -> Result<Self> {
        let events = taxonomy
            .labels()
            .iter()
            .map(|l| {
                let v = label_embedding(l, store)?;
                if v.iter().all(|&x| x == 0.0) {
                    return Err(Error::Embedding(format!(
                        "event label `{l}` embeds to the zero vector"
                    )));
                }
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { store, events })
    }

    /// Event with the highest cosine similarity to `label`, ties by lowest
    /// index. `None` when the label cannot be embedded.
    pub fn nearest_event(&self, label: &str) -> Result<Option<usize>> {
        let v = match label_embedding(label, self.store) {
            Ok(v) if v.iter().any(|&x| x != 0.0) => v,
            _ => return Ok(None),
        };
        let mut best: Option<(usize, f64)> = None;
        for (k, e) in self.events.iter().enumerate() {
            let sim = cosine(&v, e)?;
            if best.is_none_or(|(_, b)| sim > b) {
                best = Some((k, sim));
            }
        }
        Ok(best.map(|(k, _)| k))
    }

    /// Accumulated object mass per event, before clipping.
    pub fn map_raw(&self, dist: &ObjectDistribution) -> Result<Vec<f64>> {
        let mut scores = vec![0.0; self.events.len()];
        for e in dist.entries() {
            if let Some(k) = self.nearest_event(&e.label)? {
                scores[k] += e.prob;
            }
        }
        Ok(scores)
    }

    pub fn map(&self, dist: &ObjectDistribution) -> Result<VideoEventScores> {
        let raw = self.map_raw(dist)?;
        Ok(VideoEventScores(
            raw.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        ))
    }
}

/// Give each object's probability to its nearest sound event.
pub fn map_objects_to_events(
    dist: &ObjectDistribution,
    taxonomy: &EventTaxonomy,
    store: &EmbeddingStore,
) -> Result<VideoEventScores> {
    EventMapper::new(taxonomy, store)?.map(dist)
}
