//! Venue-confounded, long-tailed synthetic corpora with known exposure and
//! known causal effects of the actionable factors.
//!
//! Generation order: institutions, authors and venues; per paper the team,
//! keywords, abstract and optional repository link; the metadata agents
//! score every paper; a latent quality `q` is formed from the agent scores;
//! the venue is then chosen with a tier preference that rises with `q`
//! (the confounding path); exposure `E` is log-linear in the venue tier and
//! `q`; citation counts are negative-binomial around
//! `exp(a·log(1+E) + b·q)`; citation edges point to earlier papers with
//! probability proportional to their exposure.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{
    extract_all, AgentDeps, FeatureError, InstitutionPrestige, InstitutionTier, PaperFeatureVector, PriorYearCounts,
    ReputationNorms, VenueEntry, VenueRankingTable, VenueTier,
};
use crate::graph::{write_citations, write_records, AuthorRecord, Citation, PaperRecord};
use crate::objectives::{normalized_venue, Factor};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Generator parameters. Effect sizes act on the latent quality; `s_v` is
/// the venue-to-exposure shortcut strength.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub n_papers: usize,
    pub n_authors: usize,
    pub n_venues: usize,
    pub n_topics: usize,
    pub n_institutions: usize,
    /// Relative frequency of venue tiers A*, A, B, C, unranked.
    pub tier_weights: [f64; 5],
    /// How strongly better papers land in better venues.
    pub venue_selectivity: f64,
    pub s_v: f64,
    pub beta_r: f64,
    pub beta_q: f64,
    pub beta_c: f64,
    pub beta_h: f64,
    /// Exposure-to-citation gain.
    pub a: f64,
    /// Quality-to-citation gain.
    pub b: f64,
    pub noise_q: f64,
    pub noise_e: f64,
    /// Negative-binomial shape; smaller is more over-dispersed.
    pub dispersion: f64,
    /// Zero noise and `y = round(mean)`.
    pub deterministic: bool,
    pub repo_prob: f64,
    pub refs_mean: f64,
    pub first_year: i32,
    pub last_year: i32,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_papers: 5000,
            n_authors: 3000,
            n_venues: 40,
            n_topics: 60,
            n_institutions: 50,
            tier_weights: [0.1, 0.2, 0.25, 0.25, 0.2],
            venue_selectivity: 1.0,
            s_v: 2.0,
            beta_r: 0.6,
            beta_q: 0.6,
            beta_c: 0.3,
            beta_h: 0.3,
            a: 1.0,
            b: 0.5,
            noise_q: 0.3,
            noise_e: 0.5,
            dispersion: 0.7,
            deterministic: false,
            repo_prob: 0.35,
            refs_mean: 8.0,
            first_year: 2010,
            last_year: 2020,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if self.n_papers < 1 || self.n_authors < 1 || self.n_venues < 1 || self.n_topics < 1 || self.n_institutions < 1 {
            return bad("all counts must be at least 1");
        }
        if self.tier_weights.iter().any(|w| !(*w >= 0.0)) || self.tier_weights.iter().sum::<f64>() <= 0.0 {
            return bad("tier_weights must be nonnegative with a positive sum");
        }
        let nonneg = [
            self.venue_selectivity,
            self.s_v,
            self.beta_r,
            self.beta_q,
            self.beta_c,
            self.beta_h,
            self.noise_q,
            self.noise_e,
            self.refs_mean,
        ];
        if nonneg.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return bad("selectivity, s_v, effect sizes, noise scales and refs_mean must be finite and >= 0");
        }
        if !(self.a > 0.0) || !(self.b > 0.0) || !(self.dispersion > 0.0) {
            return bad("a, b and dispersion must be > 0");
        }
        if !(0.0..=1.0).contains(&self.repo_prob) {
            return bad("repo_prob must lie in [0, 1]");
        }
        if self.first_year > self.last_year {
            return bad("first_year after last_year");
        }
        Ok(())
    }

    fn noise(&self) -> (f64, f64) {
        if self.deterministic {
            (0.0, 0.0)
        } else {
            (self.noise_q, self.noise_e)
        }
    }
}

/// Per-paper generative quantities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub id: String,
    pub e_true: f64,
    /// Realized latent quality (with noise).
    pub q: f64,
    /// Noise-free latent quality.
    pub q_base: f64,
    /// Normalized venue tier in [0, 1].
    pub v_norm: f64,
    /// Expected citation count given `e_true` and `q`.
    pub mean_citations: f64,
}

pub struct SyntheticCorpus {
    pub config: GenConfig,
    pub records: Vec<PaperRecord>,
    pub citations: Vec<Citation>,
    pub truth: Vec<TruthRow>,
    /// Agent scores, aligned with `records`.
    pub features: Vec<PaperFeatureVector>,
    pub venues: VenueRankingTable,
    pub institutions: Vec<(String, InstitutionTier, String)>,
    pub prior_counts: PriorYearCounts,
}

impl SyntheticCorpus {
    pub fn labels(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.label_citations.unwrap_or(0) as f64).collect()
    }

    /// Agent dependencies matching the generated resources.
    pub fn agent_deps(&self) -> AgentDeps {
        AgentDeps {
            venues: self.venues.clone(),
            institutions: InstitutionPrestige::new(self.institutions.clone()),
            norms: ReputationNorms::from_records(&self.records),
            prior_counts: self.prior_counts.clone(),
            ..Default::default()
        }
    }

    /// Writes `corpus.jsonl`, `citations.tsv`, `truth.tsv`, `venues.tsv`,
    /// `institutions.tsv` and `keyword_counts.tsv`.
    pub fn write(&self, dir: &Path) -> Result<(), SynthError> {
        std::fs::create_dir_all(dir)?;
        write_records(std::io::BufWriter::new(std::fs::File::create(dir.join("corpus.jsonl"))?), &self.records)?;
        write_citations(&dir.join("citations.tsv"), &self.citations)?;
        write_truth(&dir.join("truth.tsv"), &self.truth)?;
        self.venues.save(&dir.join("venues.tsv"))?;
        InstitutionPrestige::new(self.institutions.clone()).save(&dir.join("institutions.tsv"))?;
        self.prior_counts.save(&dir.join("keyword_counts.tsv"))?;
        Ok(())
    }
}

/// `id, E_true, q` rows.
pub fn write_truth(path: &Path, truth: &[TruthRow]) -> std::io::Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "id\tE_true\tq")?;
    for t in truth {
        writeln!(f, "{}\t{:?}\t{:?}", t.id, t.e_true, t.q)?;
    }
    f.flush()
}

/// Reads `id, E_true, q` rows written by [`write_truth`].
pub fn read_truth(path: &Path) -> Result<Vec<(String, f64, f64)>, SynthError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = vec![];
    for (i, line) in text.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        let parse = |s: Option<&&str>| s.and_then(|s| s.trim().parse::<f64>().ok());
        match (cols.first(), parse(cols.get(1)), parse(cols.get(2))) {
            (Some(id), Some(e), Some(q)) => out.push((id.to_string(), e, q)),
            _ => {
                return Err(SynthError::Io(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("{}: bad row {}", path.display(), i + 1),
                )))
            }
        }
    }
    Ok(out)
}

const COUNTRIES: [&str; 8] = ["US", "CN", "DE", "GB", "FR", "JP", "CA", "IN"];
const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "ne", "ru", "ta", "vo", "shi", "den", "mar", "pel", "tor", "gan", "lis", "bor", "fen",
];
const CUES: [[&str; 4]; 3] = [
    ["problem", "challenge", "limitation", "gap"],
    ["propose", "method", "framework", "algorithm"],
    ["results", "experiments", "outperforms", "demonstrate"],
];

fn filler_vocabulary() -> Vec<String> {
    let mut v = Vec::with_capacity(SYLLABLES.len() * SYLLABLES.len());
    for a in SYLLABLES {
        for b in SYLLABLES {
            v.push(format!("{}{}", a, b));
        }
    }
    v
}

/// Abstract whose length, cue coverage and lexical diversity all grow with
/// the writing skill `s` in [0, 1].
fn make_abstract<R: Rng>(s: f64, vocab: &[String], rng: &mut R) -> String {
    let n = (20.0 + 260.0 * s + 20.0 * (rng.random::<f64>() - 0.5)).round().max(5.0) as usize;
    let pool = ((n as f64 * (0.2 + 0.8 * s)).round() as usize).clamp(3, vocab.len());
    let start = rng.random_range(0..vocab.len());
    let mut words: Vec<&str> = (0..n).map(|_| vocab[(start + rng.random_range(0..pool)) % vocab.len()].as_str()).collect();
    for cat in CUES {
        if rng.random::<f64>() < 0.15 + 0.85 * s {
            let w = cat[rng.random_range(0..cat.len())];
            let at = rng.random_range(0..=words.len());
            words.insert(at, w);
        }
    }
    words.join(" ")
}

/// Zipf-like index in `0..n` with exponent 1.
fn zipf<R: Rng>(cum: &[f64], rng: &mut R) -> usize {
    let x = rng.random::<f64>() * cum[cum.len() - 1];
    cum.partition_point(|&c| c <= x).min(cum.len() - 1)
}

fn cumulative(w: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    w.map(|x| {
        acc += x;
        acc
    })
    .collect()
}

/// Noise-free latent quality from agent scores; `h_max` normalizes H.
pub fn latent_quality(f: &PaperFeatureVector, h_max: f64, c: &GenConfig) -> f64 {
    let h = if h_max > 0.0 { f.h / h_max } else { 0.0 };
    c.beta_r * f.r + c.beta_q * (f.q - 3.0) / 2.0 + c.beta_c * (f.c - 3.0) / 2.0 + c.beta_h * h
}

/// Expected citations given exposure and latent quality.
pub fn citation_mean(e: f64, q: f64, c: &GenConfig) -> f64 {
    (c.a * e.ln_1p() + c.b * q).exp()
}

const MAX_MEAN: f64 = 1e7;

pub fn generate(config: &GenConfig) -> Result<SyntheticCorpus, SynthError> {
    config.validate()?;
    let c = config;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let vocab = filler_vocabulary();

    let inst_tiers = [InstitutionTier::Top, InstitutionTier::Mid, InstitutionTier::Low];
    let institutions: Vec<(String, InstitutionTier, String)> = (0..c.n_institutions)
        .map(|i| {
            let tier = inst_tiers[(rng.random::<f64>() * 3.0) as usize % 3];
            (format!("Institute {:03}", i), tier, COUNTRIES[rng.random_range(0..COUNTRIES.len())].to_string())
        })
        .collect();
    let lognormal = Normal::<f64>::new(0.0, 1.0).expect("unit normal");
    let authors: Vec<AuthorRecord> = (0..c.n_authors)
        .map(|i| {
            let (aff, _, country) = &institutions[rng.random_range(0..institutions.len())];
            let pubs = (2.5 + 1.0 * lognormal.sample(&mut rng)).exp().round() as u64;
            let cites = (pubs as f64 * (2.0 + 1.2 * lognormal.sample(&mut rng)).exp()).round() as u64;
            AuthorRecord {
                name: format!("Author {:05}", i),
                affiliation: aff.clone(),
                pub_count: pubs,
                total_citations: cites,
                country: country.clone(),
            }
        })
        .collect();

    let tier_cum = cumulative(c.tier_weights.iter().copied());
    let mut venue_tiers: Vec<VenueTier> = (0..c.n_venues).map(|_| VenueTier::ALL[zipf(&tier_cum, &mut rng)]).collect();
    // every tier present when there is room, so the tier preference can act
    for (i, t) in VenueTier::ALL.iter().enumerate().take(c.n_venues) {
        if !venue_tiers.contains(t) {
            venue_tiers[i] = *t;
        }
    }
    let venue_names: Vec<String> = (0..c.n_venues).map(|i| format!("Synthetic Venue {:03}", i)).collect();
    let venues = VenueRankingTable::new(
        venue_names
            .iter()
            .zip(&venue_tiers)
            .map(|(n, t)| VenueEntry {
                canonical_name: n.clone(),
                aliases: vec![],
                tier: *t,
            })
            .collect(),
    )?;

    let topic_cum = cumulative((1..=c.n_topics).map(|k| 1.0 / k as f64));
    let author_cum = cumulative((1..=c.n_authors).map(|k| 1.0 / (k as f64).sqrt()));
    let mut author_order: Vec<usize> = (0..c.n_authors).collect();
    author_order.shuffle(&mut rng);

    let span = (c.last_year - c.first_year + 1) as usize;
    let year_cum = cumulative((0..span).map(|k| 1.0 + 0.1 * k as f64));
    let mut records: Vec<PaperRecord> = (0..c.n_papers)
        .map(|i| {
            let year = c.first_year + zipf(&year_cum, &mut rng) as i32;
            let team = 1 + Poisson::new(2.0).expect("poisson").sample(&mut rng) as usize;
            let mut members: Vec<usize> = vec![];
            for _ in 0..team.min(c.n_authors) {
                let mut a = author_order[zipf(&author_cum, &mut rng)];
                let mut tries = 0;
                while members.contains(&a) && tries < 20 {
                    a = author_order[zipf(&author_cum, &mut rng)];
                    tries += 1;
                }
                if !members.contains(&a) {
                    members.push(a);
                }
            }
            let n_kw = 1 + rng.random_range(0..3);
            let mut keywords: Vec<String> = vec![];
            for _ in 0..n_kw {
                let k = format!("topic {:03}", zipf(&topic_cum, &mut rng));
                if !keywords.contains(&k) {
                    keywords.push(k);
                }
            }
            let skill: f64 = rng.random();
            let abstract_text = make_abstract(skill, &vocab, &mut rng);
            let fulltext_urls = if rng.random::<f64>() < c.repo_prob {
                vec![format!("https://github.com/synthetic-lab/paper-{:05}", i)]
            } else {
                vec![]
            };
            PaperRecord {
                id: format!("P{:05}", i),
                title: format!("A study of {}", keywords.join(" and ")),
                abstract_text,
                keywords,
                pub_year: year,
                venue_name: String::new(),
                authors: members.into_iter().map(|a| authors[a].clone()).collect(),
                fulltext_urls,
                label_citations: None,
            }
        })
        .collect();

    let prior_counts = PriorYearCounts::from_records(&records);
    let deps = AgentDeps {
        venues: venues.clone(),
        institutions: InstitutionPrestige::new(institutions.clone()),
        norms: ReputationNorms::from_records(&records),
        prior_counts: prior_counts.clone(),
        ..Default::default()
    };
    let (mut features, _) = extract_all(&records, &deps);

    let h_max = features.iter().map(|f| f.h).fold(0.0, f64::max);
    let q_base: Vec<f64> = features.iter().map(|f| latent_quality(f, h_max, c)).collect();
    let q_mean = q_base.iter().sum::<f64>() / q_base.len() as f64;
    let q_sd = (q_base.iter().map(|q| (q - q_mean).powi(2)).sum::<f64>() / q_base.len() as f64).sqrt();

    // venue choice: tier preference rises with standardized quality
    let by_tier: Vec<Vec<usize>> = VenueTier::ALL
        .iter()
        .map(|t| (0..c.n_venues).filter(|&v| venue_tiers[v] == *t).collect())
        .collect();
    let (sd_q, sd_e) = c.noise();
    let std_normal = Normal::<f64>::new(0.0, 1.0).expect("unit normal");
    let mut truth = Vec::with_capacity(c.n_papers);
    for (i, rec) in records.iter_mut().enumerate() {
        let z = if q_sd > 0.0 { (q_base[i] - q_mean) / q_sd } else { 0.0 };
        let weights: Vec<f64> = VenueTier::ALL
            .iter()
            .enumerate()
            .map(|(k, t)| {
                if by_tier[k].is_empty() {
                    0.0
                } else {
                    c.tier_weights[k] * (c.venue_selectivity * z * normalized_venue(t.score())).exp()
                }
            })
            .collect();
        let tier_idx = zipf(&cumulative(weights.into_iter()), &mut rng);
        let pool = &by_tier[tier_idx];
        let v = pool[rng.random_range(0..pool.len())];
        rec.venue_name = venue_names[v].clone();
        features[i].v = venue_tiers[v].score();

        let v_norm = normalized_venue(features[i].v);
        let q = q_base[i] + sd_q * std_normal.sample(&mut rng);
        let e_true = (c.s_v * v_norm + 0.5 * q + sd_e * std_normal.sample(&mut rng)).exp();
        let mean = citation_mean(e_true, q, c).min(MAX_MEAN);
        let y = if c.deterministic {
            mean.round()
        } else {
            let lambda = Gamma::new(c.dispersion, mean / c.dispersion).expect("gamma").sample(&mut rng);
            if lambda > 0.0 {
                Poisson::new(lambda.min(MAX_MEAN)).expect("poisson").sample(&mut rng)
            } else {
                0.0
            }
        };
        rec.label_citations = Some(y as u64);
        truth.push(TruthRow {
            id: rec.id.clone(),
            e_true,
            q,
            q_base: q_base[i],
            v_norm,
            mean_citations: mean,
        });
    }

    let citations = sample_citations(&records, &truth, c.refs_mean, &mut rng);
    Ok(SyntheticCorpus {
        config: c.clone(),
        records,
        citations,
        truth,
        features,
        venues,
        institutions,
        prior_counts,
    })
}

/// Each paper cites `k ~ Poisson(refs_mean)` distinct papers from strictly
/// earlier years, drawn with probability proportional to their exposure.
fn sample_citations<R: Rng>(records: &[PaperRecord], truth: &[TruthRow], refs_mean: f64, rng: &mut R) -> Vec<Citation> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by_key(|&i| (records[i].pub_year, i));
    let cum = cumulative(order.iter().map(|&i| truth[i].e_true));
    let poisson = (refs_mean > 0.0).then(|| Poisson::new(refs_mean).expect("poisson"));
    let mut out = vec![];
    for &i in &order {
        let year = records[i].pub_year;
        let n_prior = order.partition_point(|&j| records[j].pub_year < year);
        if n_prior == 0 {
            continue;
        }
        let Some(p) = &poisson else { continue };
        let k = (p.sample(rng) as usize).min(n_prior);
        let total = cum[n_prior - 1];
        let mut chosen: Vec<usize> = Vec::with_capacity(k);
        let mut tries = 0;
        while chosen.len() < k && tries < 20 * k {
            tries += 1;
            let x = rng.random::<f64>() * total;
            let pos = cum[..n_prior].partition_point(|&c| c <= x).min(n_prior - 1);
            if !chosen.contains(&pos) {
                chosen.push(pos);
            }
        }
        chosen.sort_unstable();
        out.extend(chosen.into_iter().map(|pos| Citation {
            citing: records[i].id.clone(),
            cited: records[order[pos]].id.clone(),
        }));
    }
    out
}

/// Gauss–Hermite nodes and weights for `∫ e^{-x²} f(x) dx`.
fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 0.0); n];
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let mut z = 0.0f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * out[0].0,
            3 => 1.91 * z - 0.91 * out[1].0,
            _ => 2.0 * z - out[i - 2].0,
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (pim4, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / (j + 1) as f64).sqrt() * p2 - (j as f64 / (j + 1) as f64).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / (pp * pp);
        out[i] = (z, w);
        out[n - 1 - i] = (-z, w);
    }
    out
}

/// `E[citation_mean]` over the generator's quality and exposure noise for a
/// paper with normalized venue `v_norm` and noise-free quality `q0`.
pub fn expected_citations(v_norm: f64, q0: f64, c: &GenConfig) -> f64 {
    let (sd_q, sd_e) = c.noise();
    let mean_at = |eq: f64, ee: f64| {
        let q = q0 + eq;
        citation_mean((c.s_v * v_norm + 0.5 * q + ee).exp(), q, c)
    };
    if sd_q == 0.0 && sd_e == 0.0 {
        return mean_at(0.0, 0.0);
    }
    let nodes = gauss_hermite(32);
    let s2 = std::f64::consts::SQRT_2;
    let mut acc = 0.0;
    for &(xi, wi) in &nodes {
        for &(xj, wj) in &nodes {
            acc += wi * wj * mean_at(s2 * sd_q * xi, s2 * sd_e * xj);
        }
    }
    acc / std::f64::consts::PI
}

/// Noise-free quality after setting `factor` to its intervention target.
pub fn intervened_quality(factor: Factor, f: &PaperFeatureVector, q_base: f64, c: &GenConfig) -> f64 {
    match factor {
        Factor::R => q_base + c.beta_r * (1.0 - f.r),
        Factor::Q => q_base + c.beta_q * (5.0 - f.q) / 2.0,
    }
}

/// Population-average effect of the intervention on `log1p` of the
/// expected citation count. The venue is held at its realized tier.
pub fn ground_truth_effect(factor: Factor, corpus: &SyntheticCorpus) -> f64 {
    let c = &corpus.config;
    let n = corpus.truth.len();
    if n == 0 {
        return 0.0;
    }
    corpus
        .truth
        .iter()
        .zip(&corpus.features)
        .map(|(t, f)| {
            let q1 = intervened_quality(factor, f, t.q_base, c);
            expected_citations(t.v_norm, q1, c).ln_1p() - expected_citations(t.v_norm, t.q_base, c).ln_1p()
        })
        .sum::<f64>()
        / n as f64
}

/// Sample skewness (population moments).
pub fn skewness(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n;
    if m2 == 0.0 {
        0.0
    } else {
        m3 / m2.powf(1.5)
    }
}

/// Share of the total held by the top `frac` of items.
pub fn top_share(x: &[f64], frac: f64) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    let k = ((v.len() as f64 * frac).ceil() as usize).max(1);
    let total: f64 = v.iter().sum();
    if total == 0.0 {
        0.0
    } else {
        v[..k].iter().sum::<f64>() / total
    }
}
