//! Post-training counterfactual report: per-paper effects of setting an
//! actionable factor to its improved value, plus per-factor summaries.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Tape};
use crate::objectives::{intervene, median, CounterfactualConfig, Factor};
use crate::predictor::{Model, PredictorError};
use crate::train::{Dataset, ModelMeta};

#[derive(Debug, Error)]
pub enum WhatIfError {
    #[error("checkpoint is untrained: {0}")]
    UntrainedCheckpoint(String),
    #[error("feature statistics of the data differ from the checkpoint's")]
    StatsMismatch,
    #[error("paper index {0} out of range")]
    BadIndex(usize),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhatIfRow {
    pub paper_id: String,
    pub factor: Factor,
    pub u: f64,
    pub u_cf: f64,
    /// `u_cf - u`, computed from the two stored values.
    pub delta: f64,
    pub y_hat: f64,
    pub y_hat_cf: f64,
    /// Raw factor value below the factor's threshold.
    pub low: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorSummary {
    pub factor: Factor,
    pub count: usize,
    pub low_count: usize,
    pub median_delta: f64,
    pub mean_delta: f64,
    /// Share of low-region rows whose effect opposes the desired direction;
    /// 0 when the low region is empty.
    pub violation_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhatIfSummary {
    pub factors: Vec<FactorSummary>,
}

impl WhatIfSummary {
    pub fn get(&self, f: Factor) -> Option<&FactorSummary> {
        self.factors.iter().find(|s| s.factor == f)
    }
}

/// Predicted citation count from a log-space output, floored at zero.
pub fn citations_of(u: f64) -> f64 {
    u.exp_m1().max(0.0)
}

/// Summary statistics over already-computed rows.
pub fn summarize(rows: &[WhatIfRow], factors: &[Factor]) -> WhatIfSummary {
    let factors = factors
        .iter()
        .map(|&f| {
            let deltas: Vec<f64> = rows.iter().filter(|r| r.factor == f).map(|r| r.delta).collect();
            let low: Vec<&WhatIfRow> = rows.iter().filter(|r| r.factor == f && r.low).collect();
            let violations = low.iter().filter(|r| f.direction() * r.delta < 0.0).count();
            FactorSummary {
                factor: f,
                count: deltas.len(),
                low_count: low.len(),
                median_delta: median(&deltas),
                mean_delta: if deltas.is_empty() {
                    0.0
                } else {
                    deltas.iter().sum::<f64>() / deltas.len() as f64
                },
                violation_rate: if low.is_empty() {
                    0.0
                } else {
                    violations as f64 / low.len() as f64
                },
            }
        })
        .collect();
    WhatIfSummary { factors }
}

/// Effects for every `(paper, factor)` pair over dataset rows `idx`, using
/// the evaluation graph views with dropout off.
pub fn whatif(
    model: &Model,
    meta: &ModelMeta,
    data: &Dataset,
    idx: &[usize],
    factors: &[Factor],
) -> Result<(Vec<WhatIfRow>, WhatIfSummary), WhatIfError> {
    if meta.epochs_trained == 0 {
        return Err(WhatIfError::UntrainedCheckpoint("no completed epochs".into()));
    }
    if meta.stats != data.stats {
        return Err(WhatIfError::StatsMismatch);
    }
    if let Some(&bad) = idx.iter().find(|&&i| i >= data.len()) {
        return Err(WhatIfError::BadIndex(bad));
    }
    let mut tape = Tape::new();
    let p = model.store.bind(&mut tape, false);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (zw_all, zo_all) = model.embed(&mut tape, &p, &data.eval_with, &data.eval_without, false, &mut rng)?;
    let ix: Arc<[usize]> = idx.into();
    let zw = tape.gather_rows(zw_all, ix.clone())?;
    let zo = match zo_all {
        Some(z) => Some(tape.gather_rows(z, ix)?),
        None => None,
    };
    let rows_plus = data.rows(idx);
    let base = model.heads(&mut tape, &p, zw, zo, &rows_plus)?;
    let u = tape.value(base.u).data().to_vec();
    let cf_cfg = CounterfactualConfig {
        factors: factors.to_vec(),
        q_threshold: meta.q_threshold,
    };
    let mut rows = Vec::with_capacity(idx.len() * factors.len());
    for &f in factors {
        let moved = intervene(&rows_plus, f, &meta.stats);
        let cf = model.heads(&mut tape, &p, zw, zo, &moved)?;
        let u_cf = tape.value(cf.u).data();
        for (k, &i) in idx.iter().enumerate() {
            rows.push(WhatIfRow {
                paper_id: data.ids[i].clone(),
                factor: f,
                u: u[k],
                u_cf: u_cf[k],
                delta: u_cf[k] - u[k],
                y_hat: citations_of(u[k]),
                y_hat_cf: citations_of(u_cf[k]),
                low: cf_cfg.is_low(f, data.raw_slot(i, f.slot())),
            });
        }
    }
    let summary = summarize(&rows, factors);
    Ok((rows, summary))
}

pub const WHATIF_HEADER: &str = "paper_id\tfactor\tu\tu_cf\tdelta\ty_hat\ty_hat_cf\tlow";

pub fn write_rows(path: &Path, rows: &[WhatIfRow]) -> Result<(), WhatIfError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{}", WHATIF_HEADER)?;
    for r in rows {
        writeln!(
            f,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.paper_id,
            r.factor.name(),
            r.u,
            r.u_cf,
            r.delta,
            r.y_hat,
            r.y_hat_cf,
            u8::from(r.low)
        )?;
    }
    f.flush()?;
    Ok(())
}

pub fn write_summary(path: &Path, summary: &WhatIfSummary) -> Result<(), WhatIfError> {
    std::fs::write(path, serde_json::to_string_pretty(summary)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, GenConfig};
    use crate::train::TrainConfig;

    fn setup() -> (Model, ModelMeta, Dataset) {
        let corpus = generate(&GenConfig {
            n_papers: 150,
            n_authors: 90,
            n_venues: 8,
            n_topics: 6,
            n_institutions: 10,
            seed: 4,
            ..Default::default()
        })
        .unwrap();
        let cfg = TrainConfig {
            hidden: 8,
            heads: 2,
            head_hidden: 8,
            disc_hidden: 4,
            ..Default::default()
        };
        let data = Dataset::from_synthetic(&corpus, &cfg).unwrap();
        let model = Model::new(cfg.model_config(), 3).unwrap();
        let meta = ModelMeta {
            model: cfg.model_config(),
            train: cfg,
            stats: data.stats.clone(),
            q_threshold: data.q_threshold,
            best_epoch: 1,
            epochs_trained: 1,
        };
        (model, meta, data)
    }

    #[test]
    fn rows_obey_identity_and_summary_recomputes() {
        let (model, meta, data) = setup();
        let idx: Vec<usize> = (0..data.len()).collect();
        let (rows, summary) = whatif(&model, &meta, &data, &idx, &Factor::ALL).unwrap();
        assert_eq!(rows.len(), 2 * data.len());
        for r in &rows {
            assert_eq!(r.delta, r.u_cf - r.u);
            assert!(r.y_hat >= 0.0 && r.y_hat_cf >= 0.0);
        }
        assert_eq!(summarize(&rows, &Factor::ALL), summary);
        let r_rows: Vec<&WhatIfRow> = rows.iter().filter(|r| r.factor == Factor::R).collect();
        let s = summary.get(Factor::R).unwrap();
        assert_eq!(s.count, data.len());
        assert_eq!(s.low_count, r_rows.iter().filter(|r| r.low).count());
    }

    #[test]
    fn already_reproducible_paper_has_zero_effect() {
        let (model, meta, data) = setup();
        let with_r: Vec<usize> = (0..data.len()).filter(|&i| data.raw[i].r == 1.0).collect();
        assert!(!with_r.is_empty());
        let (rows, summary) = whatif(&model, &meta, &data, &with_r, &[Factor::R]).unwrap();
        assert!(rows.iter().all(|r| r.delta == 0.0 && !r.low));
        assert_eq!(summary.factors[0].violation_rate, 0.0);
    }

    #[test]
    fn zero_parameters_give_zero_effects() {
        let (mut model, meta, data) = setup();
        let ids: Vec<_> = model.store.ids().collect();
        for id in ids {
            model.store.get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let idx: Vec<usize> = (0..data.len()).collect();
        let (rows, summary) = whatif(&model, &meta, &data, &idx, &Factor::ALL).unwrap();
        assert!(rows.iter().all(|r| r.delta == 0.0));
        assert!(summary.factors.iter().all(|s| s.violation_rate == 0.0));
    }

    #[test]
    fn untrained_and_mismatched_checkpoints_rejected() {
        let (model, mut meta, data) = setup();
        meta.epochs_trained = 0;
        assert!(matches!(
            whatif(&model, &meta, &data, &[0], &[Factor::R]),
            Err(WhatIfError::UntrainedCheckpoint(_))
        ));
        meta.epochs_trained = 1;
        meta.stats = crate::features::FeatureStats::fit(std::iter::empty());
        assert!(matches!(whatif(&model, &meta, &data, &[0], &[Factor::R]), Err(WhatIfError::StatsMismatch)));
    }

    #[test]
    fn files_written() {
        let (model, meta, data) = setup();
        let (rows, summary) = whatif(&model, &meta, &data, &[0, 1], &[Factor::Q]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_rows(&dir.path().join("w.tsv"), &rows).unwrap();
        write_summary(&dir.path().join("s.json"), &summary).unwrap();
        let text = std::fs::read_to_string(dir.path().join("w.tsv")).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with(WHATIF_HEADER));
        let back: WhatIfSummary = serde_json::from_str(&std::fs::read_to_string(dir.path().join("s.json")).unwrap()).unwrap();
        assert_eq!(back, summary);
    }
}
