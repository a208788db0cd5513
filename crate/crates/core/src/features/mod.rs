//! Metadata agents and the paper feature vector.

mod content;
mod people;
mod venue;

use std::fs::File;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use content::{
    find_repo_urls, hotness_from_counts, quality_words, score_reproducibility, score_text_quality,
    score_topic_hotness, HeuristicScorer, HttpQualityScorer, PriorYearCounts, QualityOutcome, QualityRequest,
    QualityResponse, QualityScorer, RepoVerifier, ReproOutcome, ScorerError, VerifierUnavailable,
};
pub use people::{
    author_score, score_author_reputation, score_collaboration, InstitutionPrestige, InstitutionTier,
    ReputationNorms, INSTITUTION_SATURATION, TEAM_SATURATION,
};
pub use venue::{
    score_venue_prestige, token_set_similarity, venue_tokens, VenueEntry, VenueRankingTable, VenueTier,
    FUZZY_THRESHOLD,
};

use crate::graph::PaperRecord;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("duplicate venue after normalization: {0}")]
    DuplicateVenue(String),
    #[error("bad resource file: {0}")]
    BadResource(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn tsv_reader(path: &Path) -> Result<csv::Reader<File>, FeatureError> {
    Ok(csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .flexible(true)
        .quoting(false)
        .from_path(path)?)
}

pub(crate) fn tsv_writer(path: &Path) -> Result<csv::Writer<File>, FeatureError> {
    Ok(csv::WriterBuilder::new()
        .delimiter(b'\t')
        .quote_style(csv::QuoteStyle::Never)
        .from_path(path)?)
}

/// Agent outputs for one paper.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaperFeatureVector {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub v: f64,
    pub r: f64,
    pub c: f64,
    pub h: f64,
    pub q: f64,
    pub pub_year: i32,
}

/// Number of fields in the venue-inclusive view.
pub const F_PLUS_WIDTH: usize = 9;
/// Number of fields in the venue-excluded view.
pub const F_MINUS_WIDTH: usize = 8;
/// Field names of the venue-inclusive view, in slot order.
pub const F_PLUS_NAMES: [&str; F_PLUS_WIDTH] = ["V", "R", "C", "H", "Q", "Y", "A1", "A2", "A3"];
pub const SLOT_V: usize = 0;
pub const SLOT_R: usize = 1;
pub const SLOT_Q: usize = 4;

impl PaperFeatureVector {
    /// Every agent at its floor: the vector of a record without usable
    /// metadata.
    pub fn floor(pub_year: i32) -> Self {
        Self {
            a1: 1.0,
            a2: 1.0,
            a3: 3.0,
            v: 1.0,
            r: 0.0,
            c: 1.0,
            h: 0.0,
            q: 1.0,
            pub_year,
        }
    }

    /// Raw `[V, R, C, H, Q, Y, A1, A2, A3]`.
    pub fn plus_raw(&self) -> [f64; F_PLUS_WIDTH] {
        [self.v, self.r, self.c, self.h, self.q, self.pub_year as f64, self.a1, self.a2, self.a3]
    }

    pub fn is_valid(&self) -> bool {
        let in_scale = |x: f64| (1.0..=5.0).contains(&x);
        in_scale(self.a1)
            && in_scale(self.a2)
            && in_scale(self.a3)
            && in_scale(self.v)
            && in_scale(self.c)
            && in_scale(self.q)
            && (self.r == 0.0 || self.r == 1.0)
            && self.h.is_finite()
            && self.h >= 0.0
    }
}

/// Per-field min/max over the training split, in venue-inclusive slot order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub min: [f64; F_PLUS_WIDTH],
    pub max: [f64; F_PLUS_WIDTH],
}

impl FeatureStats {
    pub fn fit<'a, I: IntoIterator<Item = &'a PaperFeatureVector>>(train: I) -> Self {
        let mut min = [f64::INFINITY; F_PLUS_WIDTH];
        let mut max = [f64::NEG_INFINITY; F_PLUS_WIDTH];
        let mut any = false;
        for f in train {
            any = true;
            for (j, x) in f.plus_raw().into_iter().enumerate() {
                min[j] = min[j].min(x);
                max[j] = max[j].max(x);
            }
        }
        if !any {
            return Self {
                min: [0.0; F_PLUS_WIDTH],
                max: [1.0; F_PLUS_WIDTH],
            };
        }
        Self { min, max }
    }

    /// Min-max scaling of one slot; a constant field maps to `x - min`.
    pub fn normalize_slot(&self, slot: usize, x: f64) -> f64 {
        let range = self.max[slot] - self.min[slot];
        let scale = if range > 0.0 { range } else { 1.0 };
        (x - self.min[slot]) / scale
    }

    pub fn views(&self, f: &PaperFeatureVector) -> FeatureViews {
        let raw = f.plus_raw();
        let mut plus = [0.0; F_PLUS_WIDTH];
        for (j, x) in raw.into_iter().enumerate() {
            plus[j] = self.normalize_slot(j, x);
        }
        FeatureViews { f_plus: plus }
    }

    /// Normalized paper-node row in graph order `[R, Q, C, H, Y, A1, A2, A3]`.
    pub fn node_row(&self, f: &PaperFeatureVector) -> [f64; crate::graph::PAPER_NODE_WIDTH] {
        let p = self.views(f).f_plus;
        [p[1], p[4], p[2], p[3], p[5], p[6], p[7], p[8]]
    }
}

/// Normalized venue-inclusive vector; the venue-excluded view is derived
/// from it by deleting the V slot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureViews {
    pub f_plus: [f64; F_PLUS_WIDTH],
}

impl FeatureViews {
    pub fn f_minus(&self) -> [f64; F_MINUS_WIDTH] {
        minus_of(&self.f_plus)
    }
}

/// Deletes the V slot.
pub fn minus_of(plus: &[f64; F_PLUS_WIDTH]) -> [f64; F_MINUS_WIDTH] {
    let mut out = [0.0; F_MINUS_WIDTH];
    out.copy_from_slice(&plus[1..]);
    out
}

/// Immutable dependency snapshot shared by all agents.
pub struct AgentDeps {
    pub venues: VenueRankingTable,
    pub institutions: InstitutionPrestige,
    pub norms: ReputationNorms,
    pub prior_counts: PriorYearCounts,
    pub scorer: Option<Box<dyn QualityScorer>>,
    pub verifier: Option<Box<dyn RepoVerifier>>,
    pub exemplar_refs: Vec<String>,
}

impl Default for AgentDeps {
    fn default() -> Self {
        Self {
            venues: VenueRankingTable::default(),
            institutions: InstitutionPrestige::default(),
            norms: ReputationNorms::default(),
            prior_counts: PriorYearCounts::default(),
            scorer: None,
            verifier: None,
            exemplar_refs: vec![],
        }
    }
}

/// A soft error raised by one agent while scoring one record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub paper_id: String,
    pub agent: String,
    pub message: String,
}

/// Runs all six agents on one record.
pub fn extract_features(record: &PaperRecord, deps: &AgentDeps) -> (PaperFeatureVector, Vec<Diagnostic>) {
    let mut diags = vec![];
    let mut note = |agent: &str, message: String| {
        diags.push(Diagnostic {
            paper_id: record.id.clone(),
            agent: agent.into(),
            message,
        })
    };
    let (a1, a2, a3) = if record.authors.is_empty() {
        note("A", "no authors; reputation floored".into());
        (1.0, 1.0, 3.0)
    } else {
        score_author_reputation(&record.authors, &deps.institutions, &deps.norms)
    };
    let c = if record.authors.is_empty() {
        1.0
    } else {
        score_collaboration(&record.authors, &deps.institutions)
    };
    let v = score_venue_prestige(&record.venue_name, &deps.venues);
    let repro = score_reproducibility(
        &record.title,
        &record.abstract_text,
        &record.fulltext_urls,
        deps.verifier.as_deref(),
    );
    if let Some(reason) = repro.pattern_only {
        note("R", format!("pattern-only: {}", reason));
    }
    let h = score_topic_hotness(&record.keywords, record.pub_year, &deps.prior_counts);
    let quality = score_text_quality(&record.title, &record.abstract_text, deps.scorer.as_deref(), &deps.exemplar_refs);
    if let Some(reason) = quality.fallback {
        note("Q", format!("heuristic fallback: {}", reason));
    }
    let f = PaperFeatureVector {
        a1,
        a2,
        a3,
        v,
        r: repro.r,
        c,
        h,
        q: quality.q,
        pub_year: record.pub_year,
    };
    (f, diags)
}

/// [`extract_features`] over a corpus, in parallel, preserving input order.
pub fn extract_all(records: &[PaperRecord], deps: &AgentDeps) -> (Vec<PaperFeatureVector>, Vec<Diagnostic>) {
    let results: Vec<_> = records.par_iter().map(|r| extract_features(r, deps)).collect();
    let mut feats = Vec::with_capacity(results.len());
    let mut diags = vec![];
    for (f, d) in results {
        feats.push(f);
        diags.extend(d);
    }
    (feats, diags)
}

const FEATURE_HEADER: [&str; 10] = ["id", "A1", "A2", "A3", "V", "R", "C", "H", "Q", "PubYear"];

/// Writes one feature row per paper.
pub fn write_features(path: &Path, ids: &[String], feats: &[PaperFeatureVector]) -> Result<(), FeatureError> {
    let mut w = tsv_writer(path)?;
    w.write_record(FEATURE_HEADER)?;
    for (id, f) in ids.iter().zip(feats) {
        let mut row = vec![id.clone()];
        row.extend([f.a1, f.a2, f.a3, f.v, f.r, f.c, f.h, f.q].iter().map(|x| format!("{:?}", x)));
        row.push(f.pub_year.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<(Vec<String>, Vec<PaperFeatureVector>), FeatureError> {
    let mut rdr = tsv_reader(path)?;
    let mut ids = vec![];
    let mut feats = vec![];
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = || FeatureError::BadResource(format!("{}: row {}", path.display(), i + 2));
        if row.len() != FEATURE_HEADER.len() {
            return Err(bad());
        }
        let x = |j: usize| row[j].parse::<f64>().map_err(|_| bad());
        ids.push(row[0].to_string());
        feats.push(PaperFeatureVector {
            a1: x(1)?,
            a2: x(2)?,
            a3: x(3)?,
            v: x(4)?,
            r: x(5)?,
            c: x(6)?,
            h: x(7)?,
            q: x(8)?,
            pub_year: row[9].parse().map_err(|_| bad())?,
        });
    }
    Ok((ids, feats))
}

pub fn write_diagnostics(path: &Path, diags: &[Diagnostic]) -> Result<(), FeatureError> {
    let mut w = tsv_writer(path)?;
    w.write_record(["id", "agent", "message"])?;
    for d in diags {
        let msg = d.message.replace(['\t', '\n'], " ");
        w.write_record([d.paper_id.as_str(), d.agent.as_str(), msg.as_str()])?;
    }
    w.flush()?;
    Ok(())
}
