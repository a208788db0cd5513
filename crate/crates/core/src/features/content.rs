//! Content-derived agents: reproducibility (R), topic hotness (H) and text
//! quality (Q).

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::time::Duration;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::FeatureError;
use crate::graph::normalize_name;

static REPO_URL: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?i)\b(?:https?://)?(?:www\.)?(?:github\.com|gitlab\.com|bitbucket\.org|codeberg\.org|huggingface\.co)/[A-Za-z0-9_.-]+/[A-Za-z0-9_.-]+").unwrap()
});

#[derive(Debug, Error)]
#[error("repository verifier unavailable: {0}")]
pub struct VerifierUnavailable(pub String);

/// Confirms that a detected repository actually holds code or data.
pub trait RepoVerifier: Send + Sync {
    fn has_content(&self, url: &str) -> Result<bool, VerifierUnavailable>;
}

/// Repository URLs found in the title, abstract, and full-text links.
pub fn find_repo_urls(title: &str, abstract_text: &str, fulltext_urls: &[String]) -> Vec<String> {
    let mut out = vec![];
    for text in [title, abstract_text].into_iter().chain(fulltext_urls.iter().map(String::as_str)) {
        for m in REPO_URL.find_iter(text) {
            let url = m.as_str().trim_end_matches(['.', ',', ')']).to_string();
            if !out.contains(&url) {
                out.push(url);
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReproOutcome {
    pub r: f64,
    /// Set when the verifier failed and the pattern result was used as-is.
    pub pattern_only: Option<String>,
}

/// R = 1 when a repository link is present and, if a verifier is supplied,
/// at least one linked repository is confirmed nonempty.
pub fn score_reproducibility(
    title: &str,
    abstract_text: &str,
    fulltext_urls: &[String],
    verifier: Option<&dyn RepoVerifier>,
) -> ReproOutcome {
    let urls = find_repo_urls(title, abstract_text, fulltext_urls);
    if urls.is_empty() {
        return ReproOutcome { r: 0.0, pattern_only: None };
    }
    let Some(verifier) = verifier else {
        return ReproOutcome { r: 1.0, pattern_only: None };
    };
    let mut failure = None;
    for url in &urls {
        match verifier.has_content(url) {
            Ok(true) => return ReproOutcome { r: 1.0, pattern_only: None },
            Ok(false) => {}
            Err(e) => {
                log::warn!("{}; using pattern match for {}", e, url);
                failure = Some(e.to_string());
            }
        }
    }
    match failure {
        Some(reason) => ReproOutcome {
            r: 1.0,
            pattern_only: Some(reason),
        },
        None => ReproOutcome { r: 0.0, pattern_only: None },
    }
}

/// Per-keyword paper counts by year.
#[derive(Clone, Debug, Default)]
pub struct PriorYearCounts {
    counts: HashMap<(String, i32), u64>,
}

impl PriorYearCounts {
    pub fn new<I: IntoIterator<Item = (String, i32, u64)>>(rows: I) -> Self {
        let mut counts = HashMap::new();
        for (k, y, c) in rows {
            *counts.entry((normalize_name(&k), y)).or_insert(0) += c;
        }
        Self { counts }
    }

    pub fn get(&self, keyword: &str, year: i32) -> u64 {
        self.counts.get(&(normalize_name(keyword), year)).copied().unwrap_or(0)
    }

    /// Counts papers per (keyword, year) in a corpus.
    pub fn from_records<'a, I: IntoIterator<Item = &'a crate::graph::PaperRecord>>(records: I) -> Self {
        let mut rows = vec![];
        for r in records {
            let kws: BTreeSet<String> = r.keywords.iter().map(|k| normalize_name(k)).filter(|k| !k.is_empty()).collect();
            rows.extend(kws.into_iter().map(|k| (k, r.pub_year, 1)));
        }
        Self::new(rows)
    }

    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        let mut rdr = super::tsv_reader(path)?;
        let mut rows = vec![];
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let bad = || FeatureError::BadResource(format!("{}: row {}", path.display(), i + 2));
            let year = row.get(1).and_then(|s| s.trim().parse().ok()).ok_or_else(bad)?;
            let count = row.get(2).and_then(|s| s.trim().parse().ok()).ok_or_else(bad)?;
            rows.push((row.get(0).unwrap_or("").to_string(), year, count));
        }
        Ok(Self::new(rows))
    }

    pub fn save(&self, path: &Path) -> Result<(), FeatureError> {
        let mut w = super::tsv_writer(path)?;
        w.write_record(["keyword", "year", "count"])?;
        let mut rows: Vec<_> = self.counts.iter().collect();
        rows.sort();
        for ((k, y), c) in rows {
            w.write_record([k.clone(), y.to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// H = ln(1 + mean prior-year paper count over the keywords); 0 without
/// keywords.
pub fn score_topic_hotness(keywords: &[String], pub_year: i32, counts: &PriorYearCounts) -> f64 {
    let values: Vec<u64> = keywords
        .iter()
        .filter(|k| !k.trim().is_empty())
        .map(|k| counts.get(k, pub_year - 1))
        .collect();
    if values.is_empty() {
        return 0.0;
    }
    hotness_from_counts(&values)
}

pub fn hotness_from_counts(counts: &[u64]) -> f64 {
    if counts.is_empty() {
        return 0.0;
    }
    let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / counts.len() as f64;
    mean.ln_1p()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityRequest {
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub exemplar_refs: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityResponse {
    pub score: f64,
    #[serde(default)]
    pub rationale: String,
}

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("quality scorer timed out")]
    Timeout,
    #[error("quality scorer failed: {0}")]
    Failed(String),
}

/// Grades title/abstract clarity on a 1..=5 scale.
pub trait QualityScorer: Send + Sync {
    fn score(&self, request: &QualityRequest) -> Result<QualityResponse, ScorerError>;
}

const PROBLEM_CUES: &[&str] = &[
    "problem", "problems", "challenge", "challenges", "challenging", "limitation", "limitations", "gap", "issue",
    "issues", "lack", "difficult",
];
const METHOD_CUES: &[&str] = &[
    "propose", "proposes", "proposed", "method", "methods", "approach", "framework", "model", "algorithm",
    "introduce", "introduces", "design",
];
const RESULT_CUES: &[&str] = &[
    "result", "results", "show", "shows", "outperform", "outperforms", "experiment", "experiments",
    "demonstrate", "demonstrates", "achieve", "achieves", "improve", "improves", "evaluation",
];

/// Words of an abstract as the heuristic sees them.
pub fn quality_words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Deterministic stand-in for an LLM grader:
/// `1 + 4 * mean(length adequacy, structure cues, type-token band)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct HeuristicScorer;

impl HeuristicScorer {
    pub fn components(abstract_text: &str) -> [f64; 3] {
        let words = quality_words(abstract_text);
        let n = words.len();
        if n == 0 {
            return [0.0; 3];
        }
        let length = if n < 100 {
            n as f64 / 100.0
        } else if n <= 400 {
            1.0
        } else {
            (1.0 - (n - 400) as f64 / 400.0).max(0.0)
        };
        let set: BTreeSet<&str> = words.iter().map(String::as_str).collect();
        let cues = [PROBLEM_CUES, METHOD_CUES, RESULT_CUES]
            .iter()
            .filter(|cat| cat.iter().any(|c| set.contains(c)))
            .count() as f64
            / 3.0;
        let ttr = set.len() as f64 / n as f64;
        let band = if ttr < 0.4 {
            ttr / 0.4
        } else if ttr <= 0.8 {
            1.0
        } else {
            ((1.0 - ttr) / 0.2).max(0.0)
        };
        [length, cues, band]
    }

    pub fn grade(abstract_text: &str) -> f64 {
        let c = Self::components(abstract_text);
        1.0 + 4.0 * (c[0] + c[1] + c[2]) / 3.0
    }
}

impl QualityScorer for HeuristicScorer {
    fn score(&self, request: &QualityRequest) -> Result<QualityResponse, ScorerError> {
        Ok(QualityResponse {
            score: Self::grade(&request.abstract_text),
            rationale: "heuristic".into(),
        })
    }
}

/// JSON-over-HTTP client for an external grader: POSTs a
/// [`QualityRequest`] and expects a [`QualityResponse`].
pub struct HttpQualityScorer {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpQualityScorer {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(true)
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            agent,
        }
    }
}

impl QualityScorer for HttpQualityScorer {
    fn score(&self, request: &QualityRequest) -> Result<QualityResponse, ScorerError> {
        let resp = self.agent.post(&self.endpoint).send_json(request).map_err(|e| match e {
            ureq::Error::Timeout(_) => ScorerError::Timeout,
            other => ScorerError::Failed(other.to_string()),
        })?;
        resp.into_body()
            .read_json::<QualityResponse>()
            .map_err(|e| ScorerError::Failed(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QualityOutcome {
    pub q: f64,
    /// Set when the external scorer failed and the heuristic was used.
    pub fallback: Option<String>,
}

/// Q in 1..=5. External scores are clamped; scorer failures fall back to
/// the heuristic and flag the record.
pub fn score_text_quality(
    title: &str,
    abstract_text: &str,
    scorer: Option<&dyn QualityScorer>,
    exemplar_refs: &[String],
) -> QualityOutcome {
    let Some(scorer) = scorer else {
        return QualityOutcome {
            q: HeuristicScorer::grade(abstract_text),
            fallback: None,
        };
    };
    let request = QualityRequest {
        title: title.to_string(),
        abstract_text: abstract_text.to_string(),
        exemplar_refs: exemplar_refs.to_vec(),
    };
    match scorer.score(&request) {
        Ok(r) if r.score.is_finite() => QualityOutcome {
            q: r.score.clamp(1.0, 5.0),
            fallback: None,
        },
        Ok(r) => QualityOutcome {
            q: HeuristicScorer::grade(abstract_text),
            fallback: Some(format!("non-finite score {}", r.score)),
        },
        Err(e) => {
            log::warn!("{}; falling back to heuristic", e);
            QualityOutcome {
                q: HeuristicScorer::grade(abstract_text),
                fallback: Some(e.to_string()),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    struct FixedVerifier(Result<bool, ()>);
    impl RepoVerifier for FixedVerifier {
        fn has_content(&self, _url: &str) -> Result<bool, VerifierUnavailable> {
            self.0.map_err(|_| VerifierUnavailable("offline".into()))
        }
    }

    struct FixedScorer(Result<f64, ()>);
    impl QualityScorer for FixedScorer {
        fn score(&self, _r: &QualityRequest) -> Result<QualityResponse, ScorerError> {
            match self.0 {
                Ok(s) => Ok(QualityResponse {
                    score: s,
                    rationale: String::new(),
                }),
                Err(_) => Err(ScorerError::Timeout),
            }
        }
    }

    #[test]
    fn repo_link_detected() {
        let o = score_reproducibility("t", "code at github.com/org/repo.", &[], None);
        assert_eq!(o.r, 1.0);
        assert_eq!(find_repo_urls("", "see https://gitlab.com/a/b, and github.com/org/repo", &[]).len(), 2);
    }

    #[test]
    fn no_links_scores_zero() {
        assert_eq!(score_reproducibility("t", "plain text https://example.com/x/y", &[], None).r, 0.0);
    }

    #[test]
    fn empty_repo_rejected_by_verifier() {
        let v = FixedVerifier(Ok(false));
        assert_eq!(score_reproducibility("", "github.com/org/repo", &[], Some(&v)).r, 0.0);
        let v = FixedVerifier(Ok(true));
        assert_eq!(score_reproducibility("", "", &["https://github.com/o/r".into()], Some(&v)).r, 1.0);
    }

    #[test]
    fn unavailable_verifier_degrades_to_pattern() {
        let v = FixedVerifier(Err(()));
        let o = score_reproducibility("", "github.com/org/repo", &[], Some(&v));
        assert_eq!(o.r, 1.0);
        assert!(o.pattern_only.is_some());
    }

    #[test]
    fn hotness_examples() {
        let counts = PriorYearCounts::new([("gnn".to_string(), 2019, 10), ("llm".to_string(), 2019, 20), ("dead".to_string(), 2019, 0)]);
        assert_eq!(score_topic_hotness(&[], 2020, &counts), 0.0);
        let h = score_topic_hotness(&["GNN".into(), "llm".into()], 2020, &counts);
        assert!((h - 16f64.ln()).abs() < 1e-12);
        assert!((h - 2.7726).abs() < 1e-4);
        assert_eq!(score_topic_hotness(&["dead".into()], 2020, &counts), 0.0);
        // only the previous year counts
        assert_eq!(score_topic_hotness(&["gnn".into()], 2019, &counts), 0.0);
    }

    #[test]
    fn heuristic_floor_and_clamp() {
        assert_eq!(score_text_quality("t", "", None, &[]).q, 1.0);
        let o = score_text_quality("t", "x", Some(&FixedScorer(Ok(7.2))), &[]);
        assert_eq!(o.q, 5.0);
        assert!(o.fallback.is_none());
        assert_eq!(score_text_quality("t", "x", Some(&FixedScorer(Ok(-3.0))), &[]).q, 1.0);
    }

    #[test]
    fn scorer_failure_falls_back() {
        let o = score_text_quality("t", "", Some(&FixedScorer(Err(()))), &[]);
        assert_eq!(o.q, 1.0);
        assert!(o.fallback.is_some());
    }

    const FIXTURE: &str = "Graph learning faces a key challenge: citation signals are missing for new papers. \
        We propose a framework that combines metadata agents with a heterogeneous encoder. \
        Experiments on two corpora show that the approach outperforms strong baselines.";

    #[test]
    fn heuristic_regression_pin() {
        // 36 words, 33 distinct, all three cue groups present:
        // length 0.36, cues 1, ttr 33/36 -> band (1 - ttr)/0.2
        let c = HeuristicScorer::components(FIXTURE);
        assert_eq!(quality_words(FIXTURE).len(), 36);
        assert!((c[0] - 0.36).abs() < 1e-12);
        assert_eq!(c[1], 1.0);
        let ttr = 33.0 / 36.0;
        assert!((c[2] - (1.0 - ttr) / 0.2).abs() < 1e-12, "{:?}", c);
        let q = HeuristicScorer::grade(FIXTURE);
        assert!((q - 3.368_888_888_888_889).abs() < 1e-12, "q = {}", q);
    }

    #[test]
    fn heuristic_is_deterministic_and_bounded() {
        let long = FIXTURE.repeat(30);
        for text in [FIXTURE, long.as_str(), "a", "a a a a a a"] {
            let q = HeuristicScorer::grade(text);
            assert!((1.0..=5.0).contains(&q));
            assert_eq!(q, HeuristicScorer::grade(text));
        }
    }

    fn one_shot_server(body: &'static str, status: &'static str) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            let (mut s, _) = listener.accept().unwrap();
            let mut buf = vec![0u8; 65536];
            let mut seen = Vec::new();
            // read headers + body (content-length bounded)
            loop {
                let n = s.read(&mut buf).unwrap();
                seen.extend_from_slice(&buf[..n]);
                let text = String::from_utf8_lossy(&seen);
                if let Some(hdr_end) = text.find("\r\n\r\n") {
                    let len = text[..hdr_end]
                        .lines()
                        .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap()))
                        .unwrap_or(0);
                    if seen.len() >= hdr_end + 4 + len {
                        assert!(text.contains("\"exemplar_refs\""));
                        break;
                    }
                }
                if n == 0 {
                    break;
                }
            }
            let resp = format!(
                "HTTP/1.1 {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                status,
                body.len(),
                body
            );
            s.write_all(resp.as_bytes()).unwrap();
        });
        format!("http://{}/score", addr)
    }

    #[test]
    fn http_scorer_contract() {
        let url = one_shot_server(r#"{"score": 4.5, "rationale": "clear"}"#, "200 OK");
        let scorer = HttpQualityScorer::new(url, Duration::from_secs(5));
        let o = score_text_quality("t", "abstract", Some(&scorer), &["exemplar".into()]);
        assert_eq!(o.q, 4.5);
        assert!(o.fallback.is_none());
    }

    #[test]
    fn http_scorer_error_falls_back() {
        let url = one_shot_server(r#"{"error": "boom"}"#, "500 Internal Server Error");
        let scorer = HttpQualityScorer::new(url, Duration::from_secs(5));
        let o = score_text_quality("t", "", Some(&scorer), &[]);
        assert_eq!(o.q, 1.0);
        assert!(o.fallback.is_some());
    }
}
