use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::autodiff::Tensor;
use crate::encoder::{EncoderMode, PreparedGraph};
use crate::features::{FeatureStats, PaperFeatureVector, F_PLUS_WIDTH, SLOT_Q};
use crate::graph::{build_graph, temporal_split, venue_excluded_view, Citation, HeteroGraph, PaperRecord, SplitName};
use crate::objectives::{median, partition_environments, Environment};
use crate::synth::SyntheticCorpus;

use super::{TrainConfig, TrainError};

/// Venue tier class `0..5` (A* first) from the 1..=5 prestige score.
pub fn venue_class(v: f64) -> usize {
    (5.0 - v).round().clamp(0.0, 4.0) as usize
}

/// A corpus prepared for training: normalized features, labels, splits,
/// environments and the two graph views in two flavours (training, where
/// citations made by validation/test papers are hidden, and evaluation).
pub struct Dataset {
    pub ids: Vec<String>,
    pub raw: Vec<PaperFeatureVector>,
    /// Citation labels; `NaN` where absent.
    pub y: Vec<f64>,
    pub split: Vec<Option<SplitName>>,
    pub stats: FeatureStats,
    /// Normalized venue-inclusive rows `[n, 9]`.
    pub f_plus: Tensor,
    pub env: Vec<Environment>,
    pub venue_class: Vec<usize>,
    /// Ground-truth or early-signal exposure per paper, when available.
    pub exposure: Option<Vec<f64>>,
    /// Training-split median of raw Q.
    pub q_threshold: f64,
    pub train_with: PreparedGraph,
    pub train_without: PreparedGraph,
    pub eval_with: PreparedGraph,
    pub eval_without: PreparedGraph,
    pub graph: HeteroGraph,
}

fn prepared(g: &HeteroGraph, rows: &[f64]) -> Result<(PreparedGraph, PreparedGraph), TrainError> {
    let mut with = PreparedGraph::new(g, EncoderMode::WithVenue)?;
    with.set_paper_features(rows.to_vec())?;
    let mut without = PreparedGraph::new(&venue_excluded_view(g), EncoderMode::WithoutVenue)?;
    without.set_paper_features(rows.to_vec())?;
    Ok((with, without))
}

impl Dataset {
    /// `feats[i]` belongs to `records[i]`; `exposure` maps ids to `E*`.
    pub fn new(
        records: &[PaperRecord],
        feats: &[PaperFeatureVector],
        citations: &[Citation],
        exposure: Option<&HashMap<String, f64>>,
        config: &TrainConfig,
    ) -> Result<Self, TrainError> {
        let graph = build_graph(records, feats, citations)?;
        let split_cfg = config.split();
        let split = temporal_split(records, &split_cfg)?;
        let n = graph.paper_ids.len();
        let idx_of: HashMap<&str, usize> = records.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
        let rec_of: Vec<usize> = graph.paper_ids.iter().map(|id| idx_of[id.as_str()]).collect();
        let raw: Vec<PaperFeatureVector> = rec_of.iter().map(|&i| feats[i]).collect();
        let y: Vec<f64> = rec_of
            .iter()
            .map(|&i| records[i].label_citations.map_or(f64::NAN, |c| c as f64))
            .collect();
        let which: HashMap<&str, SplitName> = [SplitName::Train, SplitName::Val, SplitName::Test]
            .into_iter()
            .flat_map(|s| split.ids(s).iter().map(move |id| (id.as_str(), s)))
            .collect();
        let split_of: Vec<Option<SplitName>> = graph.paper_ids.iter().map(|id| which.get(id.as_str()).copied()).collect();
        for (i, s) in split_of.iter().enumerate() {
            if s.is_some() && y[i].is_nan() {
                return Err(TrainError::MissingLabel(graph.paper_ids[i].clone()));
            }
        }
        let train_feats: Vec<&PaperFeatureVector> =
            (0..n).filter(|&i| split_of[i] == Some(SplitName::Train)).map(|i| &raw[i]).collect();
        if train_feats.is_empty() {
            return Err(TrainError::EmptySplit("train"));
        }
        let stats = FeatureStats::fit(train_feats.iter().copied());
        let q_threshold = median(&train_feats.iter().map(|f| f.q).collect::<Vec<_>>());
        let mut plus = Vec::with_capacity(n * F_PLUS_WIDTH);
        let mut node_rows = Vec::with_capacity(n * crate::graph::PAPER_NODE_WIDTH);
        for f in &raw {
            plus.extend_from_slice(&stats.views(f).f_plus);
            node_rows.extend_from_slice(&stats.node_row(f));
        }
        let env = partition_environments(&raw.iter().map(|f| f.v).collect::<Vec<_>>(), &config.environments());
        let venue_class = raw.iter().map(|f| venue_class(f.v)).collect();
        let exposure = exposure.map(|m| graph.paper_ids.iter().map(|id| m.get(id).copied().unwrap_or(f64::NAN)).collect());

        let last_train_year = split_cfg.train.1;
        let train_view = graph.hide_citing_years(last_train_year + 1..=i32::MAX);
        let (train_with, train_without) = prepared(&train_view, &node_rows)?;
        let (eval_with, eval_without) = prepared(&graph, &node_rows)?;
        Ok(Self {
            ids: graph.paper_ids.clone(),
            raw,
            y,
            split: split_of,
            stats,
            f_plus: Tensor::new(vec![n, F_PLUS_WIDTH], plus)?,
            env,
            venue_class,
            exposure,
            q_threshold,
            train_with,
            train_without,
            eval_with,
            eval_without,
            graph,
        })
    }

    /// Dataset over a generated corpus, with its true exposure attached.
    pub fn from_synthetic(corpus: &SyntheticCorpus, config: &TrainConfig) -> Result<Self, TrainError> {
        let exposure: HashMap<String, f64> = corpus.truth.iter().map(|t| (t.id.clone(), t.e_true)).collect();
        Self::new(&corpus.records, &corpus.features, &corpus.citations, Some(&exposure), config)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn indices(&self, which: SplitName) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == Some(which)).collect()
    }

    /// `f_plus` rows of `idx`.
    pub fn rows(&self, idx: &[usize]) -> Tensor {
        let mut data = Vec::with_capacity(idx.len() * F_PLUS_WIDTH);
        for &i in idx {
            data.extend_from_slice(self.f_plus.row(i));
        }
        Tensor::new(vec![idx.len(), F_PLUS_WIDTH], data).expect("row width")
    }

    /// Raw value of the slot a factor intervenes on.
    pub fn raw_slot(&self, i: usize, slot: usize) -> f64 {
        self.raw[i].plus_raw()[slot]
    }

    pub fn raw_q(&self, i: usize) -> f64 {
        self.raw_slot(i, SLOT_Q)
    }
}

/// Shuffles each environment separately and deals its members round-robin
/// over `ceil(n / batch_size)` batches, so every batch sees both
/// environments whenever each has at least as many members as batches.
pub fn stratified_batches<R: Rng + ?Sized>(idx: &[usize], env: &[Environment], batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    if idx.is_empty() {
        return vec![];
    }
    let n_batches = idx.len().div_ceil(batch_size);
    let mut batches = vec![Vec::with_capacity(batch_size); n_batches];
    let mut slot = 0;
    for e in Environment::ALL {
        let mut members: Vec<usize> = idx.iter().copied().filter(|&i| env[i] == e).collect();
        members.shuffle(rng);
        for m in members {
            batches[slot % n_batches].push(m);
            slot += 1;
        }
    }
    for b in &mut batches {
        b.shuffle(rng);
    }
    batches
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn batches_cover_once_and_mix_environments() {
        let env: Vec<Environment> = (0..50).map(|i| if i % 10 == 0 { Environment::High } else { Environment::Low }).collect();
        let idx: Vec<usize> = (0..50).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let b = stratified_batches(&idx, &env, 16, &mut rng);
        assert_eq!(b.len(), 4);
        let mut all: Vec<usize> = b.concat();
        all.sort_unstable();
        assert_eq!(all, idx);
        for batch in &b {
            assert!(batch.iter().any(|&i| env[i] == Environment::High));
            assert!(batch.len() <= 16);
        }
    }

    #[test]
    fn venue_classes() {
        assert_eq!(venue_class(5.0), 0);
        assert_eq!(venue_class(1.0), 4);
        assert_eq!(venue_class(3.0), 2);
    }
}
