//! Author reputation (A) and collaboration (C) agents.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::graph::{normalize_name, AuthorRecord, PaperRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstitutionTier {
    Top,
    Mid,
    Low,
}

impl InstitutionTier {
    pub fn prestige(self) -> f64 {
        match self {
            InstitutionTier::Top => 1.0,
            InstitutionTier::Mid => 0.5,
            InstitutionTier::Low => 0.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            InstitutionTier::Top => "top",
            InstitutionTier::Mid => "mid",
            InstitutionTier::Low => "low",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "top" | "high" | "1" => Some(InstitutionTier::Top),
            "mid" | "medium" | "2" => Some(InstitutionTier::Mid),
            "low" | "3" => Some(InstitutionTier::Low),
            _ => None,
        }
    }
}

/// Institution prestige lookup (the external-knowledge snapshot).
#[derive(Clone, Debug)]
pub struct InstitutionPrestige {
    entries: HashMap<String, (InstitutionTier, String)>,
    /// Prestige for affiliations not found in the map.
    pub unknown_prestige: f64,
}

impl Default for InstitutionPrestige {
    fn default() -> Self {
        Self {
            entries: HashMap::new(),
            unknown_prestige: 0.0,
        }
    }
}

impl InstitutionPrestige {
    pub fn new<I: IntoIterator<Item = (String, InstitutionTier, String)>>(rows: I) -> Self {
        Self {
            entries: rows.into_iter().map(|(n, t, c)| (normalize_name(&n), (t, c))).collect(),
            ..Default::default()
        }
    }

    pub fn prestige(&self, affiliation: &str) -> f64 {
        self.entries
            .get(&normalize_name(affiliation))
            .map_or(self.unknown_prestige, |(t, _)| t.prestige())
    }

    pub fn country(&self, affiliation: &str) -> Option<&str> {
        self.entries
            .get(&normalize_name(affiliation))
            .map(|(_, c)| c.as_str())
            .filter(|c| !c.is_empty())
    }

    /// Reads `name<TAB>tier[<TAB>country]` rows with a header line.
    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        let mut rdr = super::tsv_reader(path)?;
        let mut rows = vec![];
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let tier_s = row.get(1).unwrap_or("");
            let tier = InstitutionTier::parse(tier_s)
                .ok_or_else(|| FeatureError::BadResource(format!("{}: row {}: tier {:?}", path.display(), i + 2, tier_s)))?;
            rows.push((row.get(0).unwrap_or("").to_string(), tier, row.get(2).unwrap_or("").to_string()));
        }
        Ok(Self::new(rows))
    }

    pub fn save(&self, path: &Path) -> Result<(), FeatureError> {
        let mut w = super::tsv_writer(path)?;
        w.write_record(["name", "tier", "country"])?;
        let mut rows: Vec<_> = self.entries.iter().collect();
        rows.sort_by(|a, b| a.0.cmp(b.0));
        for (name, (tier, country)) in rows {
            w.write_record([name.as_str(), tier.label(), country.as_str()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Corpus maxima used to scale citation and publication counts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReputationNorms {
    pub max_log_citations: f64,
    pub max_log_pubs: f64,
}

impl Default for ReputationNorms {
    fn default() -> Self {
        // ~1e5 citations, ~1e3 papers.
        Self {
            max_log_citations: 100_000f64.ln_1p(),
            max_log_pubs: 1_000f64.ln_1p(),
        }
    }
}

impl ReputationNorms {
    pub fn from_records<'a, I: IntoIterator<Item = &'a PaperRecord>>(records: I) -> Self {
        let mut n = Self {
            max_log_citations: 0.0,
            max_log_pubs: 0.0,
        };
        for a in records.into_iter().flat_map(|r| &r.authors) {
            n.max_log_citations = n.max_log_citations.max((a.total_citations as f64).ln_1p());
            n.max_log_pubs = n.max_log_pubs.max((a.pub_count as f64).ln_1p());
        }
        n
    }
}

fn ratio(x: f64, max: f64) -> f64 {
    if max > 0.0 {
        (x / max).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// One author's reputation on the 1..=5 scale:
/// `1 + 4 * mean(log-citations share, log-pubcount share, prestige)`.
pub fn author_score(a: &AuthorRecord, prestige: &InstitutionPrestige, norms: &ReputationNorms) -> f64 {
    let cites = ratio((a.total_citations as f64).ln_1p(), norms.max_log_citations);
    let pubs = ratio((a.pub_count as f64).ln_1p(), norms.max_log_pubs);
    let inst = prestige.prestige(&a.affiliation).clamp(0.0, 1.0);
    1.0 + 4.0 * (cites + pubs + inst) / 3.0
}

/// `(A1, A2, A3)`: first author, last author, and the mean over the
/// remaining authors (3.0 when there are none).
pub fn score_author_reputation(
    authors: &[AuthorRecord],
    prestige: &InstitutionPrestige,
    norms: &ReputationNorms,
) -> (f64, f64, f64) {
    let Some(first) = authors.first() else {
        return (1.0, 1.0, 3.0);
    };
    let a1 = author_score(first, prestige, norms);
    let a2 = authors.last().map_or(a1, |a| author_score(a, prestige, norms));
    let a3 = if authors.len() > 2 {
        let mid = &authors[1..authors.len() - 1];
        mid.iter().map(|a| author_score(a, prestige, norms)).sum::<f64>() / mid.len() as f64
    } else {
        3.0
    };
    (a1, a2, a3)
}

/// Team sizes at or above this saturate the team-size band.
pub const TEAM_SATURATION: usize = 8;
/// Distinct-institution count at which the diversity band saturates.
pub const INSTITUTION_SATURATION: usize = 5;

/// Collaboration score on 1..=5:
/// `1 + 4 * mean(team band, institution band, international flag)`, where
/// each band rises linearly from 0 at one member to 1 at saturation.
pub fn score_collaboration(authors: &[AuthorRecord], prestige: &InstitutionPrestige) -> f64 {
    let band = |n: usize, sat: usize| ((n.saturating_sub(1)) as f64 / (sat - 1) as f64).min(1.0);
    let institutions: BTreeSet<String> = authors
        .iter()
        .map(|a| normalize_name(&a.affiliation))
        .filter(|s| !s.is_empty())
        .collect();
    let countries: BTreeSet<String> = authors
        .iter()
        .filter_map(|a| {
            let c = normalize_name(&a.country);
            if c.is_empty() {
                prestige.country(&a.affiliation).map(normalize_name)
            } else {
                Some(c)
            }
        })
        .collect();
    let intl = if countries.len() > 1 { 1.0 } else { 0.0 };
    let team = band(authors.len(), TEAM_SATURATION);
    let inst = band(institutions.len(), INSTITUTION_SATURATION);
    1.0 + 4.0 * (team + inst + intl) / 3.0
}
