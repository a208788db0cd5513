//! Scholarly records, heterogeneous graph construction, and temporal splits.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, Write};
use std::ops::RangeInclusive;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::PaperFeatureVector;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("every line of the record stream is malformed ({} errors, first: {})", .0.len(), .0[0])]
    AllLinesMalformed(Vec<MalformedRecord>),
    #[error("no feature vector for paper {0}")]
    MissingFeatures(String),
    #[error("split year ranges overlap: {0}")]
    OverlappingYearRanges(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MalformedRecord {
    pub line: usize,
    pub reason: String,
}

impl std::fmt::Display for MalformedRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.reason)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuthorRecord {
    pub name: String,
    #[serde(default)]
    pub affiliation: String,
    #[serde(default)]
    pub pub_count: u64,
    #[serde(default)]
    pub total_citations: u64,
    #[serde(default)]
    pub country: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaperRecord {
    pub id: String,
    pub title: String,
    #[serde(rename = "abstract", default)]
    pub abstract_text: String,
    #[serde(default)]
    pub keywords: Vec<String>,
    pub pub_year: i32,
    pub venue_name: String,
    pub authors: Vec<AuthorRecord>,
    #[serde(default)]
    pub fulltext_urls: Vec<String>,
    /// Five-year citation count; absent at inference time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_citations: Option<u64>,
}

impl PaperRecord {
    fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if self.authors.is_empty() {
            return Err("authors must be nonempty".into());
        }
        Ok(())
    }
}

/// A directed citation between two paper ids.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Citation {
    pub citing: String,
    pub cited: String,
}

#[derive(Debug, Default)]
pub struct IngestOutcome {
    pub records: Vec<PaperRecord>,
    pub errors: Vec<MalformedRecord>,
}

/// Parses line-delimited JSON records. Malformed lines are collected with
/// their 1-based line numbers; the call fails only if every nonblank line is
/// malformed.
pub fn ingest_papers<R: BufRead>(reader: R) -> Result<IngestOutcome, GraphError> {
    let mut out = IngestOutcome::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<PaperRecord>(&line)
            .map_err(|e| e.to_string())
            .and_then(|r| r.validate().map(|_| r));
        match parsed {
            Ok(r) => out.records.push(r),
            Err(reason) => out.errors.push(MalformedRecord { line: i + 1, reason }),
        }
    }
    if out.records.is_empty() && !out.errors.is_empty() {
        return Err(GraphError::AllLinesMalformed(out.errors));
    }
    Ok(out)
}

pub fn write_records<W: Write>(mut w: W, records: &[PaperRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads `citing<TAB>cited` rows.
pub fn read_citations(path: &Path) -> Result<Vec<Citation>, GraphError> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .filter_map(|l| {
            let (a, b) = l.split_once('\t')?;
            Some(Citation {
                citing: a.trim().to_string(),
                cited: b.trim().to_string(),
            })
        })
        .collect())
}

pub fn write_citations(path: &Path, cites: &[Citation]) -> std::io::Result<()> {
    let mut s = String::new();
    for c in cites {
        s.push_str(&format!("{}\t{}\n", c.citing, c.cited));
    }
    fs::write(path, s)
}

/// Case-folded, whitespace-collapsed entity key.
pub fn normalize_name(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    Paper,
    Author,
    Venue,
    Topic,
}

impl NodeKind {
    pub const ALL: [NodeKind; 4] = [NodeKind::Paper, NodeKind::Author, NodeKind::Venue, NodeKind::Topic];

    pub fn name(self) -> &'static str {
        match self {
            NodeKind::Paper => "paper",
            NodeKind::Author => "author",
            NodeKind::Venue => "venue",
            NodeKind::Topic => "topic",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AuthorRole {
    First,
    Last,
    Middle,
}

impl AuthorRole {
    pub fn at(position: usize, n_authors: usize) -> Self {
        if position == 0 {
            AuthorRole::First
        } else if position + 1 == n_authors {
            AuthorRole::Last
        } else {
            AuthorRole::Middle
        }
    }
}

/// Number of paper-node input features: `[R, Q, C, H, Y, A1, A2, A3]`.
pub const PAPER_NODE_WIDTH: usize = 8;

/// Typed academic graph. Node indices are positions in the per-kind vectors;
/// edges are `(src, dst)` index pairs. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct HeteroGraph {
    pub paper_ids: Vec<String>,
    pub paper_years: Vec<i32>,
    pub authors: Vec<String>,
    pub venues: Vec<String>,
    pub topics: Vec<String>,
    /// citing -> cited
    pub cites: Vec<(usize, usize)>,
    /// author -> paper
    pub writes: Vec<(usize, usize, AuthorRole)>,
    /// paper -> venue
    pub published_in: Vec<(usize, usize)>,
    /// paper -> topic
    pub has_topic: Vec<(usize, usize)>,
    /// Row-major `[papers, 8]`, raw agent scores.
    pub paper_features: Vec<f64>,
    pub author_features: Vec<f64>,
    pub venue_features: Vec<f64>,
    pub topic_features: Vec<f64>,
    /// Citations dropped by the time rule or because an endpoint is unknown.
    pub dropped_citations: usize,
}

impl HeteroGraph {
    pub fn node_count(&self, kind: NodeKind) -> usize {
        match kind {
            NodeKind::Paper => self.paper_ids.len(),
            NodeKind::Author => self.authors.len(),
            NodeKind::Venue => self.venues.len(),
            NodeKind::Topic => self.topics.len(),
        }
    }

    pub fn node_features(&self, kind: NodeKind) -> &[f64] {
        match kind {
            NodeKind::Paper => &self.paper_features,
            NodeKind::Author => &self.author_features,
            NodeKind::Venue => &self.venue_features,
            NodeKind::Topic => &self.topic_features,
        }
    }

    pub fn feature_width(kind: NodeKind) -> usize {
        match kind {
            NodeKind::Paper => PAPER_NODE_WIDTH,
            _ => 1,
        }
    }

    pub fn paper_index(&self) -> HashMap<&str, usize> {
        self.paper_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect()
    }

    /// Same graph with every citation whose citing paper was published in
    /// `years` removed.
    pub fn hide_citing_years(&self, years: RangeInclusive<i32>) -> HeteroGraph {
        let mut g = self.clone();
        g.cites.retain(|&(src, _)| !years.contains(&self.paper_years[src]));
        g
    }

    /// Writes `manifest.tsv` (node counts per kind) and one
    /// `edges_<kind>.tsv` of `(src_id, dst_id)` rows per edge kind.
    pub fn export(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        let mut manifest = String::from("kind\tcount\n");
        for k in NodeKind::ALL {
            manifest.push_str(&format!("{}\t{}\n", k.name(), self.node_count(k)));
        }
        fs::write(dir.join("manifest.tsv"), manifest)?;
        for (name, rows) in self.edge_lists() {
            let mut s = String::new();
            for (a, b) in rows {
                s.push_str(&format!("{}\t{}\n", a, b));
            }
            fs::write(dir.join(format!("edges_{}.tsv", name)), s)?;
        }
        Ok(())
    }

    /// Edge lists by kind, expressed with entity ids rather than indices.
    pub fn edge_lists(&self) -> Vec<(&'static str, Vec<(String, String)>)> {
        let p = |i: usize| self.paper_ids[i].clone();
        vec![
            ("cites", self.cites.iter().map(|&(a, b)| (p(a), p(b))).collect()),
            (
                "writes",
                self.writes.iter().map(|&(a, b, _)| (self.authors[a].clone(), p(b))).collect(),
            ),
            (
                "published_in",
                self.published_in.iter().map(|&(a, b)| (p(a), self.venues[b].clone())).collect(),
            ),
            (
                "has_topic",
                self.has_topic.iter().map(|&(a, b)| (p(a), self.topics[b].clone())).collect(),
            ),
        ]
    }
}

/// Paper-node feature row `[R, Q, C, H, Y, A1, A2, A3]`; V is carried by the
/// venue node instead.
pub fn paper_node_row(f: &PaperFeatureVector) -> [f64; PAPER_NODE_WIDTH] {
    [f.r, f.q, f.c, f.h, f.pub_year as f64, f.a1, f.a2, f.a3]
}

fn scale_by_max(values: &mut [f64]) {
    let max = values.iter().copied().fold(0.0_f64, f64::max);
    if max > 0.0 {
        values.iter_mut().for_each(|v| *v /= max);
    }
}

/// Builds the heterogeneous graph. `feats[i]` belongs to `records[i]`.
/// Authors, venues and topics are deduplicated by [`normalize_name`];
/// citations whose citing paper is older than the cited one are dropped.
pub fn build_graph(
    records: &[PaperRecord],
    feats: &[PaperFeatureVector],
    citations: &[Citation],
) -> Result<HeteroGraph, GraphError> {
    if feats.len() < records.len() {
        return Err(GraphError::MissingFeatures(records[feats.len()].id.clone()));
    }
    let mut author_ix: HashMap<String, usize> = HashMap::new();
    let mut venue_ix: HashMap<String, usize> = HashMap::new();
    let mut topic_ix: HashMap<String, usize> = HashMap::new();
    let mut g = HeteroGraph {
        paper_ids: Vec::with_capacity(records.len()),
        paper_years: Vec::with_capacity(records.len()),
        authors: vec![],
        venues: vec![],
        topics: vec![],
        cites: vec![],
        writes: vec![],
        published_in: vec![],
        has_topic: vec![],
        paper_features: Vec::with_capacity(records.len() * PAPER_NODE_WIDTH),
        author_features: vec![],
        venue_features: vec![],
        topic_features: vec![],
        dropped_citations: 0,
    };
    let mut author_cites: Vec<u64> = vec![];
    let mut topic_counts: Vec<f64> = vec![];
    let mut seen_ids = HashSet::new();

    fn intern(ix: &mut HashMap<String, usize>, names: &mut Vec<String>, key: String) -> (usize, bool) {
        if let Some(&i) = ix.get(&key) {
            return (i, false);
        }
        names.push(key.clone());
        ix.insert(key, names.len() - 1);
        (names.len() - 1, true)
    }

    for (r, f) in records.iter().zip(feats) {
        if !seen_ids.insert(r.id.as_str()) {
            continue;
        }
        let p = g.paper_ids.len();
        g.paper_ids.push(r.id.clone());
        g.paper_years.push(r.pub_year);
        g.paper_features.extend_from_slice(&paper_node_row(f));

        let mut on_paper = HashSet::new();
        for (pos, a) in r.authors.iter().enumerate() {
            let (ai, new) = intern(&mut author_ix, &mut g.authors, normalize_name(&a.name));
            if new {
                author_cites.push(a.total_citations);
            } else {
                author_cites[ai] = author_cites[ai].max(a.total_citations);
            }
            if on_paper.insert(ai) {
                g.writes.push((ai, p, AuthorRole::at(pos, r.authors.len())));
            }
        }

        let venue = normalize_name(&r.venue_name);
        if !venue.is_empty() {
            let (vi, new) = intern(&mut venue_ix, &mut g.venues, venue);
            if new {
                g.venue_features.push((f.v - 1.0) / 4.0);
            }
            g.published_in.push((p, vi));
        }

        let mut topics_here = HashSet::new();
        for k in &r.keywords {
            let key = normalize_name(k);
            if key.is_empty() {
                continue;
            }
            let (ti, new) = intern(&mut topic_ix, &mut g.topics, key);
            if new {
                topic_counts.push(0.0);
            }
            if topics_here.insert(ti) {
                topic_counts[ti] += 1.0;
                g.has_topic.push((p, ti));
            }
        }
    }

    g.author_features = author_cites.iter().map(|&c| (c as f64).ln_1p()).collect();
    scale_by_max(&mut g.author_features);
    g.topic_features = topic_counts.iter().map(|c| c.ln_1p()).collect();
    scale_by_max(&mut g.topic_features);

    let index = g.paper_index();
    let mut seen = HashSet::new();
    let mut cites = vec![];
    let mut dropped = 0;
    for c in citations {
        match (index.get(c.citing.as_str()), index.get(c.cited.as_str())) {
            (Some(&a), Some(&b)) if a != b && g.paper_years[a] >= g.paper_years[b] => {
                if seen.insert((a, b)) {
                    cites.push((a, b));
                }
            }
            _ => dropped += 1,
        }
    }
    g.cites = cites;
    g.dropped_citations = dropped;
    Ok(g)
}

/// The graph with venue nodes and `PublishedIn` edges removed. Paper-node
/// features carry no venue slot, so they pass through unchanged.
pub fn venue_excluded_view(g: &HeteroGraph) -> HeteroGraph {
    HeteroGraph {
        venues: vec![],
        venue_features: vec![],
        published_in: vec![],
        ..g.clone()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train: (i32, i32),
    pub val: (i32, i32),
    pub test: (i32, i32),
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train: (2010, 2018),
            val: (2019, 2019),
            test: (2020, 2020),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorpusSplit {
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub split_years: SplitConfig,
}

impl CorpusSplit {
    pub fn split_of(&self, id: &str) -> Option<SplitName> {
        if self.train_ids.iter().any(|x| x == id) {
            Some(SplitName::Train)
        } else if self.val_ids.iter().any(|x| x == id) {
            Some(SplitName::Val)
        } else if self.test_ids.iter().any(|x| x == id) {
            Some(SplitName::Test)
        } else {
            None
        }
    }

    pub fn ids(&self, which: SplitName) -> &[String] {
        match which {
            SplitName::Train => &self.train_ids,
            SplitName::Val => &self.val_ids,
            SplitName::Test => &self.test_ids,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for SplitName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            other => Err(format!("unknown split {:?}", other)),
        }
    }
}

/// Assigns records to train/val/test purely by publication year. Records
/// outside every range are left out; duplicate ids are assigned once.
pub fn temporal_split(records: &[PaperRecord], config: &SplitConfig) -> Result<CorpusSplit, GraphError> {
    let ranges = [("train", config.train), ("val", config.val), ("test", config.test)];
    for (i, (na, a)) in ranges.iter().enumerate() {
        if a.0 > a.1 {
            return Err(GraphError::OverlappingYearRanges(format!("{} range {}..{} is empty", na, a.0, a.1)));
        }
        for (nb, b) in &ranges[i + 1..] {
            if a.0 <= b.1 && b.0 <= a.1 {
                return Err(GraphError::OverlappingYearRanges(format!(
                    "{} {}..{} and {} {}..{}",
                    na, a.0, a.1, nb, b.0, b.1
                )));
            }
        }
    }
    let mut split = CorpusSplit {
        split_years: config.clone(),
        ..Default::default()
    };
    let mut seen = HashSet::new();
    let inr = |r: (i32, i32), y: i32| r.0 <= y && y <= r.1;
    for rec in records {
        if !seen.insert(rec.id.as_str()) {
            continue;
        }
        let y = rec.pub_year;
        let bucket = if inr(config.train, y) {
            &mut split.train_ids
        } else if inr(config.val, y) {
            &mut split.val_ids
        } else if inr(config.test, y) {
            &mut split.test_ids
        } else {
            continue;
        };
        bucket.push(rec.id.clone());
    }
    Ok(split)
}

/// Node counts per kind, keyed by kind name.
pub fn node_counts(g: &HeteroGraph) -> BTreeMap<&'static str, usize> {
    NodeKind::ALL.iter().map(|&k| (k.name(), g.node_count(k))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn author(name: &str) -> AuthorRecord {
        AuthorRecord {
            name: name.into(),
            affiliation: "Uni".into(),
            pub_count: 1,
            total_citations: 1,
            country: "US".into(),
        }
    }

    pub(crate) fn record(id: &str, year: i32, venue: &str, authors: &[&str], keywords: &[&str]) -> PaperRecord {
        PaperRecord {
            id: id.into(),
            title: format!("paper {}", id),
            abstract_text: String::new(),
            keywords: keywords.iter().map(|s| s.to_string()).collect(),
            pub_year: year,
            venue_name: venue.into(),
            authors: authors.iter().map(|a| author(a)).collect(),
            fulltext_urls: vec![],
            label_citations: Some(3),
        }
    }

    fn feats(n: usize) -> Vec<PaperFeatureVector> {
        (0..n).map(|_| PaperFeatureVector::floor(2015)).collect()
    }

    #[test]
    fn ingest_empty_stream() {
        let out = ingest_papers("".as_bytes()).unwrap();
        assert!(out.records.is_empty() && out.errors.is_empty());
    }

    #[test]
    fn ingest_single_line() {
        let line = serde_json::to_string(&record("p1", 2015, "V", &["a"], &[])).unwrap();
        let out = ingest_papers(line.as_bytes()).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].id, "p1");
    }

    #[test]
    fn ingest_reports_malformed_middle_line() {
        let good = serde_json::to_string(&record("p1", 2015, "V", &["a"], &[])).unwrap();
        let good2 = serde_json::to_string(&record("p3", 2016, "V", &["b"], &[])).unwrap();
        let text = format!("{}\n{{\"id\": \"p2\", \"title\": 5}}\n{}\n", good, good2);
        let out = ingest_papers(text.as_bytes()).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.errors.len(), 1);
        assert_eq!(out.errors[0].line, 2);
    }

    #[test]
    fn ingest_rejects_authorless_and_all_bad() {
        let mut r = record("p1", 2015, "V", &["a"], &[]);
        r.authors.clear();
        let text = serde_json::to_string(&r).unwrap() + "\nnot json\n";
        match ingest_papers(text.as_bytes()) {
            Err(GraphError::AllLinesMalformed(errs)) => assert_eq!(errs.len(), 2),
            other => panic!("unexpected {:?}", other.map(|o| o.records.len())),
        }
    }

    #[test]
    fn ingest_rejects_negative_label() {
        let text = r#"{"id":"x","title":"t","pub_year":2015,"venue_name":"v","authors":[{"name":"a"}],"label_citations":-1}
{"id":"y","title":"t","pub_year":2015,"venue_name":"v","authors":[{"name":"a"}]}"#;
        let out = ingest_papers(text.as_bytes()).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.errors[0].line, 1);
    }

    #[test]
    fn empty_graph() {
        let g = build_graph(&[], &[], &[]).unwrap();
        for k in NodeKind::ALL {
            assert_eq!(g.node_count(k), 0);
        }
    }

    #[test]
    fn single_paper_counts() {
        let recs = vec![record("p1", 2015, "KDD", &["Ann", "Bob"], &["graphs"])];
        let g = build_graph(&recs, &feats(1), &[]).unwrap();
        assert_eq!(
            [NodeKind::Paper, NodeKind::Author, NodeKind::Venue, NodeKind::Topic].map(|k| g.node_count(k)),
            [1, 2, 1, 1]
        );
        assert_eq!((g.cites.len(), g.writes.len(), g.published_in.len(), g.has_topic.len()), (0, 2, 1, 1));
        assert_eq!(g.writes[0].2, AuthorRole::First);
        assert_eq!(g.writes[1].2, AuthorRole::Last);
        assert_eq!(g.paper_features.len(), PAPER_NODE_WIDTH);
        assert_eq!(g.author_features.len(), 2);
    }

    #[test]
    fn roles_first_middle_last() {
        let recs = vec![record("p1", 2015, "KDD", &["a", "b", "c", "d"], &[])];
        let g = build_graph(&recs, &feats(1), &[]).unwrap();
        let roles: Vec<_> = g.writes.iter().map(|w| w.2).collect();
        assert_eq!(roles, [AuthorRole::First, AuthorRole::Middle, AuthorRole::Middle, AuthorRole::Last]);
    }

    #[test]
    fn entities_deduplicated_by_normalized_name() {
        let recs = vec![
            record("p1", 2015, "Web  Search", &["Ann Lee"], &["GNN"]),
            record("p2", 2016, "web search", &["ann   lee"], &["gnn"]),
        ];
        let g = build_graph(&recs, &feats(2), &[]).unwrap();
        assert_eq!((g.authors.len(), g.venues.len(), g.topics.len()), (1, 1, 1));
    }

    #[test]
    fn same_year_mutual_citations_kept() {
        let recs = vec![record("a", 2015, "V", &["x"], &[]), record("b", 2015, "V", &["y"], &[])];
        let cites = vec![
            Citation { citing: "a".into(), cited: "b".into() },
            Citation { citing: "b".into(), cited: "a".into() },
        ];
        let g = build_graph(&recs, &feats(2), &cites).unwrap();
        assert_eq!(g.cites.len(), 2);
    }

    #[test]
    fn backwards_in_time_citation_dropped() {
        let recs = vec![record("old", 2012, "V", &["x"], &[]), record("new", 2015, "V", &["y"], &[])];
        let cites = vec![
            Citation { citing: "old".into(), cited: "new".into() },
            Citation { citing: "new".into(), cited: "old".into() },
            Citation { citing: "new".into(), cited: "old".into() },
            Citation { citing: "new".into(), cited: "ghost".into() },
        ];
        let g = build_graph(&recs, &feats(2), &cites).unwrap();
        assert_eq!(g.cites, vec![(1, 0)]);
        assert_eq!(g.dropped_citations, 2);
    }

    #[test]
    fn missing_features_error() {
        let recs = vec![record("p1", 2015, "V", &["a"], &[])];
        assert!(matches!(build_graph(&recs, &[], &[]), Err(GraphError::MissingFeatures(id)) if id == "p1"));
    }

    #[test]
    fn venue_view_removes_venues() {
        let recs = vec![record("p1", 2015, "KDD", &["a"], &["t"])];
        let g = build_graph(&recs, &feats(1), &[]).unwrap();
        let v = venue_excluded_view(&g);
        assert_eq!(v.venues.len(), 0);
        assert!(v.published_in.is_empty());
        assert_eq!(v.paper_ids, g.paper_ids);
        assert_eq!(v.writes, g.writes);
        assert_eq!(v.paper_features, g.paper_features);
    }

    #[test]
    fn venue_view_fixed_point_without_venues() {
        let recs = vec![record("p1", 2015, "", &["a"], &["t"])];
        let g = build_graph(&recs, &feats(1), &[]).unwrap();
        assert_eq!(venue_excluded_view(&g), g);
    }

    #[test]
    fn split_examples() {
        let recs: Vec<_> = (2010..=2019).map(|y| record(&format!("p{}", y), y, "V", &["a"], &[])).collect();
        let cfg = SplitConfig {
            train: (2010, 2018),
            val: (2019, 2019),
            test: (2020, 2020),
        };
        let s = temporal_split(&recs, &cfg).unwrap();
        assert_eq!((s.train_ids.len(), s.val_ids.len(), s.test_ids.len()), (9, 1, 0));
        assert_eq!(s.val_ids, vec!["p2019".to_string()]);

        let old = vec![record("p", 2005, "V", &["a"], &[])];
        let s = temporal_split(&old, &cfg).unwrap();
        assert!(s.train_ids.is_empty() && s.val_ids.is_empty() && s.test_ids.is_empty());
        assert_eq!(s.split_of("p"), None);
    }

    #[test]
    fn split_rejects_overlap() {
        let cfg = SplitConfig {
            train: (2010, 2019),
            val: (2019, 2019),
            test: (2020, 2020),
        };
        assert!(matches!(temporal_split(&[], &cfg), Err(GraphError::OverlappingYearRanges(_))));
    }

    #[test]
    fn hide_citing_years_masks_only_those_edges() {
        let recs = vec![
            record("a", 2015, "V", &["x"], &[]),
            record("b", 2019, "V", &["y"], &[]),
            record("c", 2020, "V", &["z"], &[]),
        ];
        let cites = vec![
            Citation { citing: "b".into(), cited: "a".into() },
            Citation { citing: "c".into(), cited: "a".into() },
        ];
        let g = build_graph(&recs, &feats(3), &cites).unwrap();
        let h = g.hide_citing_years(2020..=2020);
        assert_eq!(h.cites, vec![(1, 0)]);
    }

    #[test]
    fn export_writes_manifest_and_edge_files() {
        let dir = tempfile::tempdir().unwrap();
        let recs = vec![record("p1", 2015, "KDD", &["Ann", "Bob"], &["graphs"])];
        let g = build_graph(&recs, &feats(1), &[]).unwrap();
        g.export(dir.path()).unwrap();
        let m = fs::read_to_string(dir.path().join("manifest.tsv")).unwrap();
        assert!(m.contains("author\t2"));
        let w = fs::read_to_string(dir.path().join("edges_writes.tsv")).unwrap();
        assert_eq!(w, "ann\tp1\nbob\tp1\n");
        assert!(dir.path().join("edges_cites.tsv").exists());
    }
}
