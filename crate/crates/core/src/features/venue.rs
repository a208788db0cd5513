use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::graph::normalize_name;

/// Minimum token-set similarity for a fuzzy venue match.
pub const FUZZY_THRESHOLD: f64 = 0.90;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VenueTier {
    #[serde(rename = "A*")]
    AStar,
    A,
    B,
    C,
    #[serde(rename = "unranked")]
    Unranked,
}

impl VenueTier {
    pub const ALL: [VenueTier; 5] = [VenueTier::AStar, VenueTier::A, VenueTier::B, VenueTier::C, VenueTier::Unranked];

    pub fn score(self) -> f64 {
        match self {
            VenueTier::AStar => 5.0,
            VenueTier::A => 4.0,
            VenueTier::B => 3.0,
            VenueTier::C => 2.0,
            VenueTier::Unranked => 1.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            VenueTier::AStar => "A*",
            VenueTier::A => "A",
            VenueTier::B => "B",
            VenueTier::C => "C",
            VenueTier::Unranked => "unranked",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A*" | "ASTAR" => Some(VenueTier::AStar),
            "A" => Some(VenueTier::A),
            "B" => Some(VenueTier::B),
            "C" => Some(VenueTier::C),
            "" | "UNRANKED" | "NONE" => Some(VenueTier::Unranked),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VenueEntry {
    pub canonical_name: String,
    pub aliases: Vec<String>,
    pub tier: VenueTier,
}

static ABBREVIATIONS: Lazy<HashMap<&'static str, &'static str>> = Lazy::new(|| {
    [
        ("intl", "international"),
        ("int", "international"),
        ("internat", "international"),
        ("conf", "conference"),
        ("proc", "proceedings"),
        ("procs", "proceedings"),
        ("symp", "symposium"),
        ("trans", "transactions"),
        ("j", "journal"),
        ("jour", "journal"),
        ("assoc", "association"),
        ("comput", "computing"),
        ("sci", "science"),
        ("eng", "engineering"),
        ("syst", "systems"),
        ("sys", "systems"),
        ("natl", "national"),
        ("adv", "advances"),
        ("res", "research"),
        ("inf", "information"),
        ("info", "information"),
        ("mgmt", "management"),
        ("annu", "annual"),
        ("ann", "annual"),
        ("appl", "applications"),
        ("artif", "artificial"),
        ("intell", "intelligence"),
        ("mach", "machine"),
        ("lang", "language"),
        ("process", "processing"),
        ("ws", "workshop"),
    ]
    .into_iter()
    .collect()
});

static STOPWORDS: Lazy<BTreeSet<&'static str>> =
    Lazy::new(|| ["a", "an", "and", "at", "for", "in", "of", "on", "the", "to"].into_iter().collect());

/// Lowercased word tokens with abbreviations expanded and stopwords removed.
pub fn venue_tokens(name: &str) -> BTreeSet<String> {
    name.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty() && !STOPWORDS.contains(t))
        .map(|t| ABBREVIATIONS.get(t).copied().unwrap_or(t).to_string())
        .collect()
}

/// Intersection-over-union of the two names' [`venue_tokens`].
pub fn token_set_similarity(a: &str, b: &str) -> f64 {
    let (ta, tb) = (venue_tokens(a), venue_tokens(b));
    let union = ta.union(&tb).count();
    if union == 0 {
        return 0.0;
    }
    ta.intersection(&tb).count() as f64 / union as f64
}

/// Venue ranking lookup with exact and fuzzy matching.
#[derive(Clone, Debug, Default)]
pub struct VenueRankingTable {
    entries: Vec<VenueEntry>,
    exact: HashMap<String, usize>,
}

impl VenueRankingTable {
    pub fn new(entries: Vec<VenueEntry>) -> Result<Self, FeatureError> {
        let mut exact = HashMap::new();
        let mut canon = BTreeSet::new();
        for (i, e) in entries.iter().enumerate() {
            let key = normalize_name(&e.canonical_name);
            if !canon.insert(key.clone()) {
                return Err(FeatureError::DuplicateVenue(e.canonical_name.clone()));
            }
            exact.insert(key, i);
        }
        for (i, e) in entries.iter().enumerate() {
            for a in &e.aliases {
                exact.entry(normalize_name(a)).or_insert(i);
            }
        }
        Ok(Self { entries, exact })
    }

    pub fn entries(&self) -> &[VenueEntry] {
        &self.entries
    }

    /// Exact (normalized) hit on a canonical name or alias first, then the
    /// best token-set match at or above [`FUZZY_THRESHOLD`].
    pub fn lookup(&self, venue_name: &str) -> Option<&VenueEntry> {
        let key = normalize_name(venue_name);
        if key.is_empty() {
            return None;
        }
        if let Some(&i) = self.exact.get(&key) {
            return Some(&self.entries[i]);
        }
        let mut best: Option<(f64, usize)> = None;
        for (i, e) in self.entries.iter().enumerate() {
            let s = std::iter::once(&e.canonical_name)
                .chain(&e.aliases)
                .map(|n| token_set_similarity(venue_name, n))
                .fold(0.0, f64::max);
            if s >= FUZZY_THRESHOLD && best.is_none_or(|(b, _)| s > b) {
                best = Some((s, i));
            }
        }
        best.map(|(_, i)| &self.entries[i])
    }

    /// Reads `canonical_name<TAB>aliases<TAB>tier` rows (aliases
    /// pipe-separated) with a header line.
    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        let mut rdr = super::tsv_reader(path)?;
        let mut entries = vec![];
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let tier_s = row.get(2).unwrap_or("");
            let tier = VenueTier::parse(tier_s)
                .ok_or_else(|| FeatureError::BadResource(format!("{}: row {}: tier {:?}", path.display(), i + 2, tier_s)))?;
            entries.push(VenueEntry {
                canonical_name: row.get(0).unwrap_or("").to_string(),
                aliases: row
                    .get(1)
                    .unwrap_or("")
                    .split('|')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect(),
                tier,
            });
        }
        Self::new(entries)
    }

    pub fn save(&self, path: &Path) -> Result<(), FeatureError> {
        let mut w = super::tsv_writer(path)?;
        w.write_record(["canonical_name", "aliases", "tier"])?;
        for e in &self.entries {
            w.write_record([e.canonical_name.as_str(), &e.aliases.join("|"), e.tier.label()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Venue prestige V in 1..=5; no match scores 1.
pub fn score_venue_prestige(venue_name: &str, table: &VenueRankingTable) -> f64 {
    table.lookup(venue_name).map_or(1.0, |e| e.tier.score())
}
