//! Log-space error metrics, NDCG@K and grouped evaluation reports.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objectives::Environment;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("length mismatch: {0} targets vs {1} predictions")]
    LengthMismatch(usize, usize),
    #[error("metric over an empty sample")]
    Empty,
    #[error("K must be at least 1")]
    InvalidK,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn check(y: &[f64], u: &[f64]) -> Result<(), MetricsError> {
    if y.len() != u.len() {
        return Err(MetricsError::LengthMismatch(y.len(), u.len()));
    }
    if y.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

/// Mean absolute error between `log1p(y)` and `u`.
pub fn male(y: &[f64], u: &[f64]) -> Result<f64, MetricsError> {
    check(y, u)?;
    Ok(y.iter().zip(u).map(|(y, u)| (y.ln_1p() - u).abs()).sum::<f64>() / y.len() as f64)
}

/// Root mean squared error between `log1p(y)` and `u`.
pub fn rmsle(y: &[f64], u: &[f64]) -> Result<f64, MetricsError> {
    check(y, u)?;
    Ok((y.iter().zip(u).map(|(y, u)| (y.ln_1p() - u).powi(2)).sum::<f64>() / y.len() as f64).sqrt())
}

/// Indices sorted by `key` descending; ties keep original order.
fn rank_desc(key: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..key.len()).collect();
    idx.sort_by(|&a, &b| key[b].total_cmp(&key[a]));
    idx
}

fn dcg(gains: impl Iterator<Item = f64>) -> f64 {
    gains.enumerate().map(|(i, g)| g / ((i + 2) as f64).log2()).sum()
}

/// NDCG@K with gain `log1p(y)`, ranking by `u` descending. Returns 1 when
/// the ideal DCG is 0.
pub fn ndcg_at_k(y: &[f64], u: &[f64], k: usize) -> Result<f64, MetricsError> {
    check(y, u)?;
    if k == 0 {
        return Err(MetricsError::InvalidK);
    }
    let gain: Vec<f64> = y.iter().map(|y| y.ln_1p()).collect();
    let got = dcg(rank_desc(u).into_iter().take(k).map(|i| gain[i]));
    let ideal = dcg(rank_desc(&gain).into_iter().take(k).map(|i| gain[i]));
    if ideal == 0.0 {
        return Ok(1.0);
    }
    Ok(got / ideal)
}

/// Mid-ranks (1-based, ties averaged).
fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation; 0 when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    check(a, b)?;
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(0.0);
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Spearman rank correlation with tie-averaged ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    check(a, b)?;
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Citation band relative to the evaluated sample's median.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Low,
    High,
}

/// `Low` for `y` strictly below the median of `y`, `High` otherwise.
pub fn default_bands(y: &[f64]) -> Vec<Band> {
    let m = crate::objectives::median(y);
    y.iter().map(|&v| if v < m { Band::Low } else { Band::High }).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub male: f64,
    pub rmsle: f64,
    pub count: usize,
}

fn group_metrics(y: &[f64], u: &[f64]) -> Result<GroupMetrics, MetricsError> {
    Ok(GroupMetrics {
        male: male(y, u)?,
        rmsle: rmsle(y, u)?,
        count: y.len(),
    })
}

pub const DEFAULT_KS: [usize; 2] = [10, 20];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub male: f64,
    pub rmsle: f64,
    pub count: usize,
    /// NDCG keyed by K.
    pub ndcg: BTreeMap<usize, f64>,
    /// Venue environments: `low` / `high`. Empty groups are omitted.
    pub env: BTreeMap<Environment, GroupMetrics>,
    /// Citation bands: `low` / `high`.
    pub band: BTreeMap<Band, GroupMetrics>,
}

impl EvalReport {
    /// Largest RMSLE over the populated venue environments.
    pub fn worst_group_rmsle(&self) -> f64 {
        self.env.values().map(|g| g.rmsle).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_json(&self) -> Result<String, MetricsError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Flattened `group, metric, value` rows.
    pub fn rows(&self) -> Vec<(String, String, f64)> {
        let mut out = vec![
            ("overall".to_string(), "male".to_string(), self.male),
            ("overall".to_string(), "rmsle".to_string(), self.rmsle),
            ("overall".to_string(), "count".to_string(), self.count as f64),
        ];
        for (k, v) in &self.ndcg {
            out.push(("overall".into(), format!("ndcg@{}", k), *v));
        }
        let mut push = |group: String, g: &GroupMetrics| {
            out.push((group.clone(), "male".into(), g.male));
            out.push((group.clone(), "rmsle".into(), g.rmsle));
            out.push((group, "count".into(), g.count as f64));
        };
        for (e, g) in &self.env {
            push(format!("env:{}", e.name()), g);
        }
        for (b, g) in &self.band {
            push(format!("band:{}", if *b == Band::Low { "low" } else { "high" }), g);
        }
        out
    }

    pub fn write_tsv(&self, path: &Path) -> Result<(), MetricsError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "group\tmetric\tvalue")?;
        for (g, m, v) in self.rows() {
            writeln!(f, "{}\t{}\t{:?}", g, m, v)?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<(), MetricsError> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }
}

/// Overall metrics, NDCG at `ks`, and per-environment / per-band breakdowns.
pub fn group_report(y: &[f64], u: &[f64], env: &[Environment], bands: &[Band], ks: &[usize]) -> Result<EvalReport, MetricsError> {
    check(y, u)?;
    if env.len() != y.len() {
        return Err(MetricsError::LengthMismatch(y.len(), env.len()));
    }
    if bands.len() != y.len() {
        return Err(MetricsError::LengthMismatch(y.len(), bands.len()));
    }
    let mut ndcg = BTreeMap::new();
    for &k in ks {
        ndcg.insert(k, ndcg_at_k(y, u, k)?);
    }
    fn split<K: Ord + Copy>(y: &[f64], u: &[f64], keys: &[K]) -> Result<BTreeMap<K, GroupMetrics>, MetricsError> {
        let mut parts: BTreeMap<K, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for ((&y, &u), &k) in y.iter().zip(u).zip(keys) {
            let e = parts.entry(k).or_default();
            e.0.push(y);
            e.1.push(u);
        }
        parts.into_iter().map(|(k, (y, u))| Ok((k, group_metrics(&y, &u)?))).collect()
    }
    Ok(EvalReport {
        male: male(y, u)?,
        rmsle: rmsle(y, u)?,
        count: y.len(),
        ndcg,
        env: split(y, u, env)?,
        band: split(y, u, bands)?,
    })
}
