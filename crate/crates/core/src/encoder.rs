//! Heterogeneous graph-transformer encoder over the scholarly graph.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Bound, Linear, ParamId, ParamStore, Tape, Tensor, Var};
use crate::graph::{HeteroGraph, NodeKind};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error("mode {mode:?} does not match graph: {detail}")]
    ModeGraphMismatch { mode: EncoderMode, detail: String },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub dropout: f64,
    /// Input widths for paper, author, venue, topic nodes.
    pub input_widths: [usize; 4],
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            hidden: 128,
            heads: 4,
            dropout: 0.4,
            input_widths: [crate::graph::PAPER_NODE_WIDTH, 1, 1, 1],
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        let bad = |m: String| Err(EncoderError::InvalidConfig(m));
        if self.layers == 0 {
            return bad("layers must be >= 1".into());
        }
        if self.hidden == 0 || self.heads == 0 || self.input_widths.contains(&0) {
            return bad(format!(
                "zero width: hidden {}, heads {}, inputs {:?}",
                self.hidden, self.heads, self.input_widths
            ));
        }
        if self.hidden % self.heads != 0 {
            return bad(format!("hidden {} not divisible by heads {}", self.hidden, self.heads));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0,1)", self.dropout));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EncoderMode {
    WithVenue,
    WithoutVenue,
}

impl EncoderMode {
    pub fn tag(self) -> &'static str {
        match self {
            EncoderMode::WithVenue => "with_venue",
            EncoderMode::WithoutVenue => "without_venue",
        }
    }
}

/// Message-passing relations; information flows from `src` to `dst`.
///
/// Citations pass only from the cited paper to the citing one, so a paper
/// never receives messages from the papers that cite it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Relation {
    CitedBy,
    Writes,
    WrittenBy,
    PublishedIn,
    Publishes,
    HasTopic,
    TopicOf,
}

impl Relation {
    pub const ALL: [Relation; 7] = [
        Relation::CitedBy,
        Relation::Writes,
        Relation::WrittenBy,
        Relation::PublishedIn,
        Relation::Publishes,
        Relation::HasTopic,
        Relation::TopicOf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Relation::CitedBy => "cited_by",
            Relation::Writes => "writes",
            Relation::WrittenBy => "written_by",
            Relation::PublishedIn => "published_in",
            Relation::Publishes => "publishes",
            Relation::HasTopic => "has_topic",
            Relation::TopicOf => "topic_of",
        }
    }

    pub fn endpoints(self) -> (NodeKind, NodeKind) {
        use NodeKind::*;
        match self {
            Relation::CitedBy => (Paper, Paper),
            Relation::Writes => (Author, Paper),
            Relation::WrittenBy => (Paper, Author),
            Relation::PublishedIn => (Paper, Venue),
            Relation::Publishes => (Venue, Paper),
            Relation::HasTopic => (Paper, Topic),
            Relation::TopicOf => (Topic, Paper),
        }
    }
}

fn kind_ix(k: NodeKind) -> usize {
    match k {
        NodeKind::Paper => 0,
        NodeKind::Author => 1,
        NodeKind::Venue => 2,
        NodeKind::Topic => 3,
    }
}

#[derive(Clone, Debug)]
struct KindLayer {
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
    ln_gamma: ParamId,
    ln_beta: ParamId,
}

#[derive(Clone, Copy, Debug)]
struct RelationLayer {
    att: ParamId,
    msg: ParamId,
    prior: ParamId,
}

#[derive(Clone, Debug)]
struct Layer {
    kinds: [KindLayer; 4],
    relations: [RelationLayer; 7],
}

/// Parameter handles of the encoder; the tensors live in a shared
/// [`ParamStore`] under names `encoder/...`.
#[derive(Clone, Debug)]
pub struct Encoder {
    config: EncoderConfig,
    input: [Linear; 4],
    layers: Vec<Layer>,
}

/// Graph topology and node inputs laid out for [`Encoder::encode`].
#[derive(Clone, Debug)]
pub struct PreparedGraph {
    pub mode: EncoderMode,
    counts: [usize; 4],
    features: [Tensor; 4],
    edges: Vec<(Relation, Arc<[usize]>, Arc<[usize]>)>,
}

impl PreparedGraph {
    pub fn new(g: &HeteroGraph, mode: EncoderMode) -> Result<Self, EncoderError> {
        if mode == EncoderMode::WithoutVenue && (!g.venues.is_empty() || !g.published_in.is_empty()) {
            return Err(EncoderError::ModeGraphMismatch {
                mode,
                detail: format!("{} venue nodes, {} published_in edges", g.venues.len(), g.published_in.len()),
            });
        }
        let counts = NodeKind::ALL.map(|k| g.node_count(k));
        let features = NodeKind::ALL.map(|k| {
            let w = HeteroGraph::feature_width(k);
            Tensor::new(vec![g.node_count(k), w], g.node_features(k).to_vec()).expect("graph feature width")
        });
        let split = |pairs: Vec<(usize, usize)>| -> (Arc<[usize]>, Arc<[usize]>) {
            let (s, d): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            (s.into(), d.into())
        };
        let mut edges = vec![];
        for rel in Relation::ALL {
            let pairs: Vec<(usize, usize)> = match rel {
                Relation::CitedBy => g.cites.iter().map(|&(citing, cited)| (cited, citing)).collect(),
                Relation::Writes => g.writes.iter().map(|&(a, p, _)| (a, p)).collect(),
                Relation::WrittenBy => g.writes.iter().map(|&(a, p, _)| (p, a)).collect(),
                Relation::PublishedIn => g.published_in.clone(),
                Relation::Publishes => g.published_in.iter().map(|&(p, v)| (v, p)).collect(),
                Relation::HasTopic => g.has_topic.clone(),
                Relation::TopicOf => g.has_topic.iter().map(|&(p, t)| (t, p)).collect(),
            };
            if !pairs.is_empty() {
                let (s, d) = split(pairs);
                edges.push((rel, s, d));
            }
        }
        Ok(Self {
            mode,
            counts,
            features,
            edges,
        })
    }

    pub fn paper_count(&self) -> usize {
        self.counts[0]
    }

    pub fn edge_count(&self, rel: Relation) -> usize {
        self.edges.iter().find(|e| e.0 == rel).map_or(0, |e| e.1.len())
    }

    /// Replaces the paper-node input rows (`[papers, 8]`, row-major).
    pub fn set_paper_features(&mut self, rows: Vec<f64>) -> Result<(), EncoderError> {
        let w = self.features[0].cols();
        self.features[0] = Tensor::new(vec![self.counts[0], w], rows)?;
        Ok(())
    }
}

/// Attention weights of one layer into one destination kind.
#[derive(Clone, Debug)]
pub struct AttentionTrace {
    pub layer: usize,
    pub dst: NodeKind,
    /// `[edges, heads]` weights.
    pub weights: Var,
    /// Destination node of every row of `weights`.
    pub dst_index: Arc<[usize]>,
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(config: EncoderConfig, store: &mut ParamStore, rng: &mut R) -> Result<Self, EncoderError> {
        config.validate()?;
        let (h, heads, dh) = (config.hidden, config.heads, config.head_dim());
        let input = NodeKind::ALL.map(|k| {
            Linear::new(store, &format!("encoder/input/{}", k.name()), config.input_widths[kind_ix(k)], h, true, rng)
        });
        let mut layers = vec![];
        for l in 0..config.layers {
            let kinds = NodeKind::ALL.map(|k| {
                let p = format!("encoder/layer{}/{}", l, k.name());
                KindLayer {
                    q: Linear::new(store, &format!("{}/q", p), h, h, true, rng),
                    k: Linear::new(store, &format!("{}/k", p), h, h, true, rng),
                    v: Linear::new(store, &format!("{}/v", p), h, h, true, rng),
                    out: Linear::new(store, &format!("{}/out", p), h, h, false, rng),
                    ln_gamma: store.add(format!("{}/ln/gamma", p), Tensor::full(&[h], 1.0)),
                    ln_beta: store.add(format!("{}/ln/beta", p), Tensor::zeros(&[h])),
                }
            });
            let relations = Relation::ALL.map(|r| {
                let p = format!("encoder/layer{}/rel/{}", l, r.name());
                let block = |store: &mut ParamStore, name: String, rng: &mut R| {
                    let t = Tensor::uniform(&[heads * dh, dh], crate::autodiff::glorot_bound(dh, dh), rng);
                    store.add(name, t)
                };
                RelationLayer {
                    att: block(store, format!("{}/att", p), rng),
                    msg: block(store, format!("{}/msg", p), rng),
                    prior: store.add(format!("{}/prior", p), Tensor::scalar(0.0)),
                }
            });
            layers.push(Layer { kinds, relations });
        }
        Ok(Self { config, input, layers })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    /// Paper embeddings `[papers, hidden]`.
    pub fn encode<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        p: &Bound,
        g: &PreparedGraph,
        train: bool,
        rng: &mut R,
    ) -> Result<Var, EncoderError> {
        Ok(self.encode_traced(tape, p, g, train, rng)?.0)
    }

    /// [`Encoder::encode`] plus the attention weights of every layer.
    pub fn encode_traced<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        p: &Bound,
        g: &PreparedGraph,
        train: bool,
        rng: &mut R,
    ) -> Result<(Var, Vec<AttentionTrace>), EncoderError> {
        let cfg = &self.config;
        let (heads, dh) = (cfg.heads, cfg.head_dim());
        let inv_sqrt = 1.0 / (dh as f64).sqrt();
        let mut trace = vec![];

        let mut h: [Option<Var>; 4] = [None; 4];
        for k in NodeKind::ALL {
            let i = kind_ix(k);
            if g.counts[i] > 0 {
                let x = tape.constant(g.features[i].clone());
                h[i] = Some(self.input[i].forward(tape, p, x)?);
            }
        }

        for (l, layer) in self.layers.iter().enumerate() {
            let last = l + 1 == self.layers.len();
            let dst_kinds: &[NodeKind] = if last { &[NodeKind::Paper] } else { &NodeKind::ALL };
            let mut keys: [Option<Var>; 4] = [None; 4];
            let mut values: [Option<Var>; 4] = [None; 4];
            let mut queries: [Option<Var>; 4] = [None; 4];
            for (rel, _, _) in &g.edges {
                let (src, dst) = rel.endpoints();
                if !dst_kinds.contains(&dst) {
                    continue;
                }
                let (si, di) = (kind_ix(src), kind_ix(dst));
                let hs = h[si].expect("edge source kind has nodes");
                if keys[si].is_none() {
                    keys[si] = Some(layer.kinds[si].k.forward(tape, p, hs)?);
                    values[si] = Some(layer.kinds[si].v.forward(tape, p, hs)?);
                }
                if queries[di].is_none() {
                    let hd = h[di].expect("edge destination kind has nodes");
                    queries[di] = Some(layer.kinds[di].q.forward(tape, p, hd)?);
                }
            }

            let mut next = h;
            for &dst in dst_kinds {
                let di = kind_ix(dst);
                let Some(hd) = h[di] else { continue };
                let kl = &layer.kinds[di];
                let incoming: Vec<_> = g.edges.iter().filter(|e| e.0.endpoints().1 == dst).collect();
                let residual = if incoming.is_empty() {
                    hd
                } else {
                    let mut logits = vec![];
                    let mut messages = vec![];
                    let mut dst_all: Vec<usize> = vec![];
                    let q = queries[di].expect("query computed");
                    for (rel, src_idx, dst_idx) in incoming {
                        let si = kind_ix(rel.endpoints().0);
                        let rl = &layer.relations[Relation::ALL.iter().position(|r| r == rel).unwrap()];
                        let k_rel = tape.head_matmul(keys[si].unwrap(), p.var(rl.att), heads)?;
                        let v_rel = tape.head_matmul(values[si].unwrap(), p.var(rl.msg), heads)?;
                        let ke = tape.gather_rows(k_rel, src_idx.clone())?;
                        let qe = tape.gather_rows(q, dst_idx.clone())?;
                        let score = tape.head_dot(qe, ke, heads)?;
                        let score = tape.scale(score, inv_sqrt)?;
                        logits.push(tape.add_scalar(score, p.var(rl.prior))?);
                        messages.push(tape.gather_rows(v_rel, src_idx.clone())?);
                        dst_all.extend_from_slice(dst_idx);
                    }
                    let dst_all: Arc<[usize]> = dst_all.into();
                    let logits = if logits.len() == 1 { logits[0] } else { tape.concat(&logits, 0)? };
                    let messages = if messages.len() == 1 { messages[0] } else { tape.concat(&messages, 0)? };
                    let n_dst = g.counts[di];
                    let attn = tape.segment_softmax(logits, dst_all.clone(), n_dst)?;
                    trace.push(AttentionTrace {
                        layer: l,
                        dst,
                        weights: attn,
                        dst_index: dst_all.clone(),
                    });
                    let weighted = tape.head_scale(messages, attn, heads)?;
                    let agg = tape.scatter_add_rows(weighted, dst_all, n_dst)?;
                    let out = kl.out.forward(tape, p, agg)?;
                    let out = tape.dropout(out, cfg.dropout, train, rng)?;
                    tape.add(hd, out)?
                };
                let normed = tape.layer_norm(residual, p.var(kl.ln_gamma), p.var(kl.ln_beta), 1e-5)?;
                next[di] = Some(tape.gelu(normed)?);
            }
            h = next;
        }
        let z = match h[0] {
            Some(z) => z,
            None => tape.constant(Tensor::zeros(&[0, cfg.hidden])),
        };
        Ok((z, trace))
    }
}

/// Registers a fresh encoder in a new store, fully determined by `seed`.
pub fn init_params(config: &EncoderConfig, seed: u64) -> Result<(ParamStore, Encoder), EncoderError> {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let enc = Encoder::new(config.clone(), &mut store, &mut rng)?;
    Ok((store, enc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::finite_difference_check;
    use crate::graph::{venue_excluded_view, AuthorRole};
    use rand::seq::SliceRandom;

    fn small_config() -> EncoderConfig {
        EncoderConfig {
            hidden: 8,
            heads: 2,
            dropout: 0.0,
            ..Default::default()
        }
    }

    fn random_graph(seed: u64, papers: usize) -> HeteroGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_auth = papers / 2 + 1;
        let n_venue = 3;
        let n_topic = 4;
        let mut writes = vec![];
        let mut published_in = vec![];
        let mut has_topic = vec![];
        let mut cites = vec![];
        let years: Vec<i32> = (0..papers).map(|i| 2010 + (i % 5) as i32).collect();
        for p in 0..papers {
            let mut authors: Vec<usize> = (0..n_auth).collect();
            authors.shuffle(&mut rng);
            let k = rng.random_range(1..=3.min(n_auth));
            for (pos, &a) in authors[..k].iter().enumerate() {
                writes.push((a, p, AuthorRole::at(pos, k)));
            }
            published_in.push((p, rng.random_range(0..n_venue)));
            has_topic.push((p, rng.random_range(0..n_topic)));
            for q in 0..papers {
                if q != p && years[p] >= years[q] && rng.random::<f64>() < 0.2 {
                    cites.push((p, q));
                }
            }
        }
        HeteroGraph {
            paper_ids: (0..papers).map(|i| format!("p{}", i)).collect(),
            paper_years: years,
            authors: (0..n_auth).map(|i| format!("a{}", i)).collect(),
            venues: (0..n_venue).map(|i| format!("v{}", i)).collect(),
            topics: (0..n_topic).map(|i| format!("t{}", i)).collect(),
            cites,
            writes,
            published_in,
            has_topic,
            paper_features: (0..papers * 8).map(|_| rng.random::<f64>()).collect(),
            author_features: (0..n_auth).map(|_| rng.random::<f64>()).collect(),
            venue_features: (0..n_venue).map(|_| rng.random::<f64>()).collect(),
            topic_features: (0..n_topic).map(|_| rng.random::<f64>()).collect(),
            dropped_citations: 0,
        }
    }

    fn embed(store: &ParamStore, enc: &Encoder, g: &HeteroGraph, mode: EncoderMode) -> Tensor {
        let pg = PreparedGraph::new(g, mode).unwrap();
        let mut tape = Tape::new();
        let b = store.bind(&mut tape, false);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let z = enc.encode(&mut tape, &b, &pg, false, &mut rng).unwrap();
        tape.value(z).clone()
    }

    #[test]
    fn init_is_seed_deterministic_and_bounded() {
        let cfg = EncoderConfig::default();
        let (a, _) = init_params(&cfg, 3).unwrap();
        let (b, _) = init_params(&cfg, 3).unwrap();
        assert_eq!(a, b);
        let (c, _) = init_params(&cfg, 4).unwrap();
        assert_ne!(a, c);
        let w = a.get(a.id("encoder/layer0/paper/q/w").unwrap());
        let bound = (6.0f64 / 256.0).sqrt();
        assert!(w.data().iter().all(|v| v.abs() <= bound));
        assert!(w.data().iter().any(|v| v.abs() > bound * 0.9));
    }

    #[test]
    fn invalid_configs_rejected() {
        for cfg in [
            EncoderConfig { hidden: 0, ..Default::default() },
            EncoderConfig { hidden: 10, heads: 4, ..Default::default() },
            EncoderConfig { input_widths: [8, 0, 1, 1], ..Default::default() },
        ] {
            assert!(matches!(init_params(&cfg, 0), Err(EncoderError::InvalidConfig(_))));
        }
    }

    #[test]
    fn mode_must_match_graph() {
        let g = random_graph(1, 6);
        assert!(matches!(
            PreparedGraph::new(&g, EncoderMode::WithoutVenue),
            Err(EncoderError::ModeGraphMismatch { .. })
        ));
        assert!(PreparedGraph::new(&venue_excluded_view(&g), EncoderMode::WithoutVenue).is_ok());
    }

    #[test]
    fn isolated_paper_depends_only_on_itself() {
        let (store, enc) = init_params(&small_config(), 5).unwrap();
        let mut g = random_graph(2, 8);
        // paper 0 becomes isolated
        g.cites.retain(|&(a, b)| a != 0 && b != 0);
        g.writes.retain(|w| w.1 != 0);
        g.published_in.retain(|e| e.0 != 0);
        g.has_topic.retain(|e| e.0 != 0);
        let z1 = embed(&store, &enc, &g, EncoderMode::WithVenue);
        let mut g2 = g.clone();
        for v in g2.paper_features[8..].iter_mut() {
            *v += 1.0;
        }
        g2.author_features.iter_mut().for_each(|v| *v *= -1.0);
        let z2 = embed(&store, &enc, &g2, EncoderMode::WithVenue);
        assert_eq!(z1.row(0), z2.row(0));
        assert_ne!(z1.row(1), z2.row(1));

        // residual path only: two rounds of gelu(layer_norm(.)) on the input projection
        let mut tape = Tape::new();
        let b = store.bind(&mut tape, false);
        let x = tape.constant(Tensor::new(vec![1, 8], g.paper_features[..8].to_vec()).unwrap());
        let mut hcur = enc.input[0].forward(&mut tape, &b, x).unwrap();
        for layer in &enc.layers {
            let kl = &layer.kinds[0];
            let n = tape.layer_norm(hcur, b.var(kl.ln_gamma), b.var(kl.ln_beta), 1e-5).unwrap();
            hcur = tape.gelu(n).unwrap();
        }
        assert_eq!(tape.value(hcur).row(0), z1.row(0));
    }

    #[test]
    fn attention_sums_to_one_per_node_and_head() {
        let (store, enc) = init_params(&small_config(), 6).unwrap();
        let g = random_graph(3, 10);
        let pg = PreparedGraph::new(&g, EncoderMode::WithVenue).unwrap();
        let mut tape = Tape::new();
        let b = store.bind(&mut tape, false);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (_, trace) = enc.encode_traced(&mut tape, &b, &pg, false, &mut rng).unwrap();
        assert!(!trace.is_empty());
        for t in &trace {
            let w = tape.value(t.weights);
            let n = pg.counts[kind_ix(t.dst)];
            let mut sums = vec![vec![0.0; 2]; n];
            let mut seen = vec![false; n];
            for (r, &d) in t.dst_index.iter().enumerate() {
                seen[d] = true;
                for k in 0..2 {
                    sums[d][k] += w.row(r)[k];
                }
            }
            for d in 0..n {
                if seen[d] {
                    for s in &sums[d] {
                        assert!((s - 1.0).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn neighbor_order_permutation_invariant() {
        let (store, enc) = init_params(&small_config(), 7).unwrap();
        for seed in 0..5 {
            let g = random_graph(10 + seed, 12);
            let z = embed(&store, &enc, &g, EncoderMode::WithVenue);
            let mut h = g.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            h.cites.shuffle(&mut rng);
            h.writes.shuffle(&mut rng);
            h.published_in.shuffle(&mut rng);
            h.has_topic.shuffle(&mut rng);
            let zp = embed(&store, &enc, &h, EncoderMode::WithVenue);
            for (a, b) in z.data().iter().zip(zp.data()) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn without_venue_ignores_venue_changes() {
        let (store, enc) = init_params(&small_config(), 8).unwrap();
        let g = random_graph(20, 10);
        let mut h = g.clone();
        h.venue_features.iter_mut().for_each(|v| *v = 9.0);
        h.published_in.iter_mut().for_each(|e| e.1 = 0);
        h.venues.push("extra".into());
        h.venue_features.push(0.5);
        let a = embed(&store, &enc, &venue_excluded_view(&g), EncoderMode::WithoutVenue);
        let b = embed(&store, &enc, &venue_excluded_view(&h), EncoderMode::WithoutVenue);
        assert_eq!(a, b);
        assert_ne!(a, embed(&store, &enc, &g, EncoderMode::WithVenue));
    }

    #[test]
    fn eval_mode_is_deterministic_and_dropout_changes_train() {
        let cfg = EncoderConfig { dropout: 0.4, ..small_config() };
        let (store, enc) = init_params(&cfg, 9).unwrap();
        let g = random_graph(30, 10);
        assert_eq!(embed(&store, &enc, &g, EncoderMode::WithVenue), embed(&store, &enc, &g, EncoderMode::WithVenue));
        let pg = PreparedGraph::new(&g, EncoderMode::WithVenue).unwrap();
        let mut tape = Tape::new();
        let b = store.bind(&mut tape, false);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = enc.encode(&mut tape, &b, &pg, true, &mut rng).unwrap();
        assert_ne!(tape.value(z), &embed(&store, &enc, &g, EncoderMode::WithVenue));
    }

    #[test]
    fn gradient_through_both_layers() {
        let (store, enc) = init_params(&small_config(), 11).unwrap();
        let g = random_graph(40, 6);
        let pg = PreparedGraph::new(&g, EncoderMode::WithVenue).unwrap();
        let mut crng = ChaCha8Rng::seed_from_u64(99);
        let head = Tensor::uniform(&[6, 8], 1.0, &mut crng);
        // probe gradients w.r.t. layer-0 and layer-1 weights through a random linear head on z
        for name in ["encoder/layer0/author/k/w", "encoder/layer1/paper/q/w", "encoder/layer0/rel/cited_by/att", "encoder/input/paper/w"] {
            let id = store.id(name).unwrap();
            let x = store.get(id).clone();
            let err = finite_difference_check(
                |tape, v| {
                    let mut b = store.bind(tape, false);
                    b = rebind(&b, id, v);
                    let mut rng = ChaCha8Rng::seed_from_u64(0);
                    let z = enc.encode(tape, &b, &pg, false, &mut rng).map_err(|e| match e {
                        EncoderError::Autodiff(a) => a,
                        other => panic!("{}", other),
                    })?;
                    let c = tape.constant(head.clone());
                    let zc = tape.mul(z, c)?;
                    tape.sum(zc)
                },
                &x,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-5, "{}: {}", name, err);
        }
    }

    fn rebind(b: &Bound, id: ParamId, v: Var) -> Bound {
        b.with_var(id, v)
    }
}
