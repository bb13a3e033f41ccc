//! Global speaker-ID assignment.
//!
//! Per-utterance audio embeddings are clustered by connected components over
//! the "cosine similarity ≥ threshold" graph (single-linkage at a fixed
//! cut), clusters are numbered by the start time of their earliest
//! utterance, and every subtitle line receives its cluster's id. A
//! threshold-sweep tool reports pair-classification metrics over a labeled
//! validation set.
//!
//! Pairwise similarities may be computed in parallel; clustering itself is a
//! sequential fold over the finished similarity table, so output is
//! bit-identical however many threads ran.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::schema::{self, FieldTable, Loaded, SchemaMode};
use crate::timeline::{GlobalSpeakerId, SubtitleTrack};

/// One utterance's embedding vector, tied to its subtitle line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceEmbedding {
    pub subtitle_index: u32,
    pub vector: Vec<f64>,
}

/// A validated batch of embeddings sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    items: Vec<UtteranceEmbedding>,
}

impl EmbeddingSet {
    pub fn new(dim: usize, items: Vec<UtteranceEmbedding>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("embedding dimension must be ≥ 1".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for item in &items {
            if item.subtitle_index == 0 {
                return Err(Error::Validation(
                    "embedding subtitle_index must be positive".into(),
                ));
            }
            if !seen.insert(item.subtitle_index) {
                return Err(Error::Validation(format!(
                    "duplicate embedding for subtitle index {}",
                    item.subtitle_index
                )));
            }
            if item.vector.len() != dim {
                return Err(Error::Validation(format!(
                    "embedding for subtitle index {} has dimension {}, expected {dim}",
                    item.subtitle_index,
                    item.vector.len()
                )));
            }
            if item.vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "embedding for subtitle index {} contains a non-finite value",
                    item.subtitle_index
                )));
            }
            if item.vector.iter().all(|&v| v == 0.0) {
                return Err(Error::Validation(format!(
                    "embedding for subtitle index {} is all-zero",
                    item.subtitle_index
                )));
            }
        }
        Ok(EmbeddingSet { dim, items })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn items(&self) -> &[UtteranceEmbedding] {
        &self.items
    }

    pub fn get(&self, subtitle_index: u32) -> Option<&UtteranceEmbedding> {
        self.items.iter().find(|e| e.subtitle_index == subtitle_index)
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        schema::to_pretty_bytes(&EmbeddingsFile {
            dim: self.dim,
            items: self.items.clone(),
        })
    }
}

/// Cosine similarity, clamped to [-1, 1] against rounding.
pub fn cosine(a: &UtteranceEmbedding, b: &UtteranceEmbedding) -> Result<f64> {
    cosine_slices(&a.vector, &b.vector)
}

fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Validation(format!(
            "cosine on mismatched dimensions {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut dot = 0.0;
    let mut norm_a = 0.0;
    let mut norm_b = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        norm_a += x * x;
        norm_b += y * y;
    }
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(Error::Validation("cosine on a zero vector".into()));
    }
    Ok((dot / (norm_a.sqrt() * norm_b.sqrt())).clamp(-1.0, 1.0))
}

/// Similarity lookup keyed by unordered index pairs.
#[derive(Debug, Clone, Default)]
pub struct PairSims {
    map: BTreeMap<(u32, u32), f64>,
}

impl PairSims {
    pub fn insert(&mut self, a: u32, b: u32, sim: f64) {
        self.map.insert(Self::key(a, b), sim);
    }

    pub fn get(&self, a: u32, b: u32) -> Option<f64> {
        self.map.get(&Self::key(a, b)).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    fn key(a: u32, b: u32) -> (u32, u32) {
        (a.min(b), a.max(b))
    }
}

/// All-pairs cosine similarities for an embedding set.
pub fn pairwise_similarities(set: &EmbeddingSet) -> Result<PairSims> {
    let pairs = index_pairs(set.items().len());
    let computed = par::ordered_map(&pairs, |&(i, j)| pair_sim(set, i, j));
    collect_sims(computed)
}

/// Sequential reference for [`pairwise_similarities`]; this is also what the
/// dispatching version runs when the `parallel` feature is off.
pub fn pairwise_similarities_seq(set: &EmbeddingSet) -> Result<PairSims> {
    let pairs = index_pairs(set.items().len());
    let computed = par::ordered_map_seq(&pairs, |&(i, j)| pair_sim(set, i, j));
    collect_sims(computed)
}

fn index_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(n.saturating_mul(n.saturating_sub(1)) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            pairs.push((i, j));
        }
    }
    pairs
}

fn pair_sim(set: &EmbeddingSet, i: usize, j: usize) -> Result<((u32, u32), f64)> {
    let a = &set.items()[i];
    let b = &set.items()[j];
    Ok(((a.subtitle_index, b.subtitle_index), cosine(a, b)?))
}

fn collect_sims(computed: Vec<Result<((u32, u32), f64)>>) -> Result<PairSims> {
    let mut sims = PairSims::default();
    for entry in computed {
        let ((a, b), sim) = entry?;
        sims.insert(a, b, sim);
    }
    Ok(sims)
}

/// Mapping from subtitle indices to global speaker ids at one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub mapping: BTreeMap<u32, GlobalSpeakerId>,
    pub threshold: f64,
}

/// Cluster embeddings into global speaker ids.
///
/// Two utterances share a cluster when they are connected through pairs with
/// cosine ≥ threshold. Ids are numbered by each cluster's earliest utterance
/// in the track's canonical order: the cluster holding the earliest line is
/// C1, the next earliest among the rest is C2, and so on.
pub fn cluster(
    track: &SubtitleTrack,
    embeddings: &EmbeddingSet,
    threshold: f64,
) -> Result<ClusterAssignment> {
    if embeddings.items().is_empty() {
        return Err(Error::Validation("cannot cluster zero embeddings".into()));
    }
    if !(-1.0..=1.0).contains(&threshold) {
        return Err(Error::Validation(format!(
            "threshold {threshold} outside [-1, 1]"
        )));
    }
    for item in embeddings.items() {
        if track.line(item.subtitle_index).is_none() {
            return Err(Error::Validation(format!(
                "embedding references subtitle index {} not present in the track",
                item.subtitle_index
            )));
        }
    }

    let items = embeddings.items();
    let sims = pairwise_similarities(embeddings)?;
    let mut dsu = DisjointSets::new(items.len());
    for i in 0..items.len() {
        for j in (i + 1)..items.len() {
            let sim = sims
                .get(items[i].subtitle_index, items[j].subtitle_index)
                .expect("all pairs were just computed");
            if sim >= threshold {
                dsu.union(i, j);
            }
        }
    }

    // order clusters by their earliest member in canonical track order
    let mut earliest: BTreeMap<usize, (crate::timeline::TimeMs, crate::timeline::TimeMs, u32)> =
        BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        let line = track.line(item.subtitle_index).expect("checked above");
        let key = (line.start, line.end, line.index);
        let root = dsu.find(i);
        match earliest.get(&root) {
            Some(existing) if *existing <= key => {}
            _ => {
                earliest.insert(root, key);
            }
        }
    }
    let mut roots: Vec<(usize, (crate::timeline::TimeMs, crate::timeline::TimeMs, u32))> =
        earliest.into_iter().collect();
    roots.sort_by_key(|&(_, key)| key);
    let id_of_root: BTreeMap<usize, GlobalSpeakerId> = roots
        .into_iter()
        .enumerate()
        .map(|(i, (root, _))| (root, GlobalSpeakerId::new((i + 1) as u32).expect("i + 1 ≥ 1")))
        .collect();

    let mut mapping = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        mapping.insert(item.subtitle_index, id_of_root[&dsu.find(i)]);
    }
    Ok(ClusterAssignment { mapping, threshold })
}

/// Attach global speaker ids to every line of a track.
///
/// The assignment must cover exactly the track's subtitle indices.
pub fn assign_global_ids(
    track: &SubtitleTrack,
    assignment: &ClusterAssignment,
) -> Result<SubtitleTrack> {
    for line in track.lines() {
        if !assignment.mapping.contains_key(&line.index) {
            return Err(Error::Validation(format!(
                "cluster assignment is missing subtitle index {}",
                line.index
            )));
        }
    }
    for index in assignment.mapping.keys() {
        if track.line(*index).is_none() {
            return Err(Error::Validation(format!(
                "cluster assignment references unknown subtitle index {index}"
            )));
        }
    }
    track.map_lines(|mut line| {
        line.global_id = Some(assignment.mapping[&line.index]);
        line
    })
}

/// Union-find over item positions.
struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let root = self.find(self.parent[x]);
            self.parent[x] = root;
        }
        self.parent[x]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Threshold sweep
// ---------------------------------------------------------------------------

/// A labeled utterance pair for threshold selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    #[serde(rename = "a")]
    pub index_a: u32,
    #[serde(rename = "b")]
    pub index_b: u32,
    pub same_speaker: bool,
}

/// Pair-classification metrics at one threshold. `accuracy` is accuracy of
/// the same-speaker prediction over the labeled pairs, not any downstream
/// identification accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Evaluate "same speaker iff similarity ≥ t" over a labeled pair set for
/// every threshold in the grid. Rows come back sorted by threshold.
pub fn sweep_thresholds(
    pairs: &[LabeledPair],
    sims: &PairSims,
    grid: &[f64],
) -> Result<Vec<SweepRow>> {
    if pairs.is_empty() {
        return Err(Error::Validation("sweep needs at least one pair".into()));
    }
    if grid.is_empty() {
        return Err(Error::Validation("sweep needs at least one threshold".into()));
    }
    for pair in pairs {
        if pair.index_a == pair.index_b {
            return Err(Error::Validation(format!(
                "labeled pair ({}, {}) repeats one utterance",
                pair.index_a, pair.index_b
            )));
        }
        if sims.get(pair.index_a, pair.index_b).is_none() {
            return Err(Error::Validation(format!(
                "no similarity for pair ({}, {})",
                pair.index_a, pair.index_b
            )));
        }
    }
    let mut thresholds = grid.to_vec();
    thresholds.sort_by(f64::total_cmp);
    let rows = thresholds
        .into_iter()
        .map(|t| {
            let mut tp = 0u64;
            let mut fp = 0u64;
            let mut fn_ = 0u64;
            let mut tn = 0u64;
            for pair in pairs {
                let sim = sims.get(pair.index_a, pair.index_b).expect("checked above");
                let predicted_same = sim >= t;
                match (predicted_same, pair.same_speaker) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => tn += 1,
                }
            }
            let ratio = |num: u64, den: u64| {
                if den == 0 {
                    0.0
                } else {
                    num as f64 / den as f64
                }
            };
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, tp + fn_);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            SweepRow {
                threshold: t,
                accuracy: ratio(tp + tn, tp + fp + fn_ + tn),
                precision,
                recall,
                f1,
            }
        })
        .collect();
    Ok(rows)
}

/// Evenly spaced threshold grid, endpoints inclusive.
pub fn threshold_grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if step <= 0.0 || !step.is_finite() {
        return Err(Error::Validation(format!("bad sweep step {step}")));
    }
    if to < from {
        return Err(Error::Validation(format!(
            "sweep range [{from}, {to}] is empty"
        )));
    }
    let mut grid = Vec::new();
    let mut i = 0u32;
    loop {
        let t = from + f64::from(i) * step;
        if t > to + step * 1e-9 {
            break;
        }
        grid.push(t.min(to));
        i += 1;
    }
    Ok(grid)
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct EmbeddingsFile {
    dim: usize,
    #[serde(default)]
    items: Vec<UtteranceEmbedding>,
}

const EMBEDDINGS_FIELDS: FieldTable = FieldTable(&[
    ("", &["dim", "items"]),
    ("items[]", &["subtitle_index", "vector"]),
]);

pub fn load_embeddings(bytes: &[u8], mode: SchemaMode) -> Result<Loaded<EmbeddingSet>> {
    let mut warnings = Vec::new();
    let file: EmbeddingsFile = schema::load_checked(bytes, &EMBEDDINGS_FIELDS, mode, &mut warnings)?;
    let set = EmbeddingSet::new(file.dim, file.items)?;
    Ok(Loaded {
        value: set,
        warnings,
    })
}

#[derive(Serialize, Deserialize)]
struct PairsFile {
    #[serde(default)]
    pairs: Vec<LabeledPair>,
}

const PAIRS_FIELDS: FieldTable =
    FieldTable(&[("", &["pairs"]), ("pairs[]", &["a", "b", "same_speaker"])]);

pub fn load_pairs(bytes: &[u8], mode: SchemaMode) -> Result<Loaded<Vec<LabeledPair>>> {
    let mut warnings = Vec::new();
    let file: PairsFile = schema::load_checked(bytes, &PAIRS_FIELDS, mode, &mut warnings)?;
    Ok(Loaded {
        value: file.pairs,
        warnings,
    })
}

#[derive(Serialize, Deserialize)]
struct SweepFile {
    rows: Vec<SweepRow>,
}

pub fn sweep_to_json_bytes(rows: &[SweepRow]) -> Vec<u8> {
    schema::to_pretty_bytes(&SweepFile {
        rows: rows.to_vec(),
    })
}
