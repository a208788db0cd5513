use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bound, Tape, Tensor, Var};
use crate::graph::SplitName;
use crate::metrics::{default_bands, group_report, EvalReport, DEFAULT_KS};
use crate::objectives::{
    counterfactual_delta, group_risk_vars, mono_loss_var, smooth_loss_var, CounterfactualConfig, Environment,
    GroupDroState, LossBundle,
};
use crate::predictor::{pred_loss_var, Model, VENUE_CLASSES};

use super::data::{stratified_batches, Dataset};
use super::optim::{lr_at, AdamW, EarlyStopping, StopDecision};
use super::store::ModelMeta;
use super::{TrainConfig, TrainError};

/// How environment risks are combined into the main loss.
pub enum WeightPolicy<'a> {
    /// Plain mean over the batch.
    Mean,
    /// Fixed environment weights.
    Fixed([f64; 2]),
    /// Adversarial weights, updated from this batch's risks first.
    Dro(&'a mut GroupDroState),
}

/// The taped objective of one batch plus the values of every term.
pub struct Objective {
    pub total: Var,
    pub u: Var,
    pub bundle: LossBundle,
}

fn column(values: impl Iterator<Item = f64>) -> Tensor {
    let data: Vec<f64> = values.collect();
    Tensor::new(vec![data.len(), 1], data).expect("column")
}

/// Builds `λ_main·L_dro + λ_reg·L_reg + λ_adv·L_adv + λ_corr·L_calib` for
/// `batch` on the training graph views.
#[allow(clippy::too_many_arguments)]
pub fn build_objective<R: Rng + ?Sized>(
    tape: &mut Tape,
    model: &Model,
    p: &Bound,
    data: &Dataset,
    batch: &[usize],
    cfg: &TrainConfig,
    policy: WeightPolicy<'_>,
    train: bool,
    rng: &mut R,
) -> Result<Objective, TrainError> {
    let weights = cfg.weights();
    let (zw_all, zo_all) = model.embed(tape, p, &data.train_with, &data.train_without, train, rng)?;
    let idx: Arc<[usize]> = batch.into();
    let zw = tape.gather_rows(zw_all, idx.clone())?;
    let zo = match zo_all {
        Some(z) => Some(tape.gather_rows(z, idx.clone())?),
        None => None,
    };
    let fp = data.rows(batch);
    let fw = model.heads(tape, p, zw, zo, &fp)?;
    let targets = tape.constant(column(batch.iter().map(|&i| data.y[i].ln_1p())));
    let per = pred_loss_var(tape, targets, fw.u)?;
    let l_pred = tape.mean(per)?;
    let envs: Vec<Environment> = batch.iter().map(|&i| data.env[i]).collect();
    let risks = group_risk_vars(tape, per, &envs)?;
    let observed = risks.map(|r| r.map(|v| tape.value(v).item()));
    let mut l_env = observed.map(|o| o.unwrap_or(f64::NAN));

    let (l_dro, w) = match policy {
        WeightPolicy::Mean => {
            let n_high = envs.iter().filter(|&&e| e == Environment::High).count() as f64;
            let frac = n_high / envs.len() as f64;
            (l_pred, [1.0 - frac, frac])
        }
        WeightPolicy::Fixed(w) => {
            let mut acc: Option<Var> = None;
            for e in Environment::ALL {
                if let Some(r) = risks[e.index()] {
                    let t = tape.scale(r, w[e.index()])?;
                    acc = Some(match acc {
                        Some(a) => tape.add(a, t)?,
                        None => t,
                    });
                }
            }
            (acc.expect("nonempty batch"), w)
        }
        WeightPolicy::Dro(state) => {
            if let Some(l) = state.fill_risks(observed) {
                state.update(l);
            }
            let w = state.w;
            // environments never observed drop out and the rest renormalize
            let seen: Vec<Environment> = Environment::ALL
                .into_iter()
                .filter(|e| state.last_risks[e.index()].is_some())
                .collect();
            let z: f64 = seen.iter().map(|e| w[e.index()]).sum();
            let mut acc: Option<Var> = None;
            for e in seen {
                let k = e.index();
                let r = match risks[k] {
                    Some(r) => r,
                    None => {
                        let last = state.last_risks[k].expect("seen environment");
                        l_env[k] = last;
                        tape.constant(Tensor::scalar(last))
                    }
                };
                let t = tape.scale(r, w[k] / z)?;
                acc = Some(match acc {
                    Some(a) => tape.add(a, t)?,
                    None => t,
                });
            }
            (acc.expect("nonempty batch"), w)
        }
    };

    let cf = CounterfactualConfig {
        factors: cfg.factors.clone(),
        q_threshold: data.q_threshold,
    };
    let mut mono_vals = vec![];
    let mut smooth_vals = vec![];
    let mut l_reg: Option<Var> = None;
    for &factor in &cf.factors {
        let delta = counterfactual_delta(tape, model, p, &fw, &fp, factor, &data.stats)?;
        let low: Vec<bool> = batch.iter().map(|&i| cf.is_low(factor, data.raw_slot(i, factor.slot()))).collect();
        let mono = mono_loss_var(tape, delta, &low, factor.direction())?;
        let smooth = smooth_loss_var(tape, delta)?;
        mono_vals.push(tape.value(mono).item());
        smooth_vals.push(tape.value(smooth).item());
        let a = tape.scale(mono, weights.mono)?;
        let b = tape.scale(smooth, weights.smooth)?;
        let t = tape.add(a, b)?;
        l_reg = Some(match l_reg {
            Some(acc) => tape.add(acc, t)?,
            None => t,
        });
    }
    let l_reg = match l_reg {
        Some(v) => v,
        None => tape.constant(Tensor::scalar(0.0)),
    };

    let l_adv = if weights.adv > 0.0 {
        let rev = tape.grad_reverse(fw.head_input, cfg.adv_scale)?;
        let logits = model.discriminator.forward(tape, p, rev)?;
        let ls = tape.log_softmax(logits)?;
        let mut onehot = vec![0.0; batch.len() * VENUE_CLASSES];
        for (r, &i) in batch.iter().enumerate() {
            onehot[r * VENUE_CLASSES + data.venue_class[i]] = 1.0;
        }
        let oh = tape.constant(Tensor::new(vec![batch.len(), VENUE_CLASSES], onehot)?);
        let picked = tape.mul(ls, oh)?;
        let s = tape.sum(picked)?;
        tape.scale(s, -1.0 / batch.len() as f64)?
    } else {
        tape.constant(Tensor::scalar(0.0))
    };

    let l_calib = match (&data.exposure, fw.e_hat, weights.corr > 0.0) {
        (Some(exp), Some(e_hat), true) => {
            let keep: Vec<f64> = batch.iter().map(|&i| if exp[i].is_finite() { 1.0 } else { 0.0 }).collect();
            let n_keep: f64 = keep.iter().sum();
            if n_keep > 0.0 {
                let target = tape.constant(column(batch.iter().map(|&i| if exp[i].is_finite() { exp[i] } else { 0.0 })));
                let d = tape.sub(e_hat, target)?;
                let sq = tape.square(d)?;
                let mask = tape.constant(column(keep.iter().map(|k| k / n_keep)));
                let m = tape.mul(sq, mask)?;
                tape.sum(m)?
            } else {
                tape.constant(Tensor::scalar(0.0))
            }
        }
        _ => tape.constant(Tensor::scalar(0.0)),
    };

    let t_main = tape.scale(l_dro, weights.main)?;
    let t_reg = tape.scale(l_reg, weights.reg)?;
    let t_adv = tape.scale(l_adv, weights.adv)?;
    let t_cal = tape.scale(l_calib, weights.corr)?;
    let s1 = tape.add(t_main, t_reg)?;
    let s2 = tape.add(s1, t_adv)?;
    let total = tape.add(s2, t_cal)?;

    let bundle = LossBundle {
        l_env,
        l_pred: tape.value(l_pred).item(),
        l_groupdro: tape.value(l_dro).item(),
        l_mono: mono_vals,
        l_smooth: smooth_vals,
        l_reg: tape.value(l_reg).item(),
        l_adv: tape.value(l_adv).item(),
        l_calib: tape.value(l_calib).item(),
        l_total: tape.value(total).item(),
        w,
        ..Default::default()
    };
    Ok(Objective {
        total,
        u: fw.u,
        bundle,
    })
}

/// One optimization step on `batch`: objective, backward, AdamW update.
#[allow(clippy::too_many_arguments)]
pub fn train_step<R: Rng + ?Sized>(
    model: &mut Model,
    opt: &mut AdamW,
    dro: &mut GroupDroState,
    data: &Dataset,
    batch: &[usize],
    cfg: &TrainConfig,
    lr: f64,
    rng: &mut R,
) -> Result<LossBundle, TrainError> {
    let mut tape = Tape::new();
    let p = model.store.bind(&mut tape, true);
    let policy = if cfg.group_dro {
        WeightPolicy::Dro(dro)
    } else {
        WeightPolicy::Mean
    };
    let obj = build_objective(&mut tape, model, &p, data, batch, cfg, policy, true, rng)?;
    let mut bundle = obj.bundle;
    bundle.lr = lr;
    if !bundle.l_total.is_finite() {
        return Err(TrainError::NonFiniteLoss {
            step: opt.steps() as usize,
            detail: format!("{:?}", bundle),
        });
    }
    let grads = tape.backward(obj.total)?;
    let g = p.collect_grads(&model.store, &grads);
    opt.step(&mut model.store, &g, lr);
    Ok(bundle)
}

/// Model outputs for a set of papers on the evaluation graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictions {
    pub idx: Vec<usize>,
    pub u: Vec<f64>,
    pub e_hat: Option<Vec<f64>>,
}

/// Deterministic (dropout-free) predictions for `idx`.
pub fn predict(model: &Model, data: &Dataset, idx: &[usize]) -> Result<Predictions, TrainError> {
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
    let fw = model.heads(&mut tape, &p, zw, zo, &data.rows(idx))?;
    Ok(Predictions {
        idx: idx.to_vec(),
        u: tape.value(fw.u).data().to_vec(),
        e_hat: fw.e_hat.map(|e| tape.value(e).data().to_vec()),
    })
}

/// EvalReport and the unweighted mean prediction loss over a split.
pub fn evaluate(model: &Model, data: &Dataset, which: SplitName) -> Result<(EvalReport, f64, Predictions), TrainError> {
    let idx = data.indices(which);
    if idx.is_empty() {
        return Err(TrainError::EmptySplit(match which {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        }));
    }
    let pred = predict(model, data, &idx)?;
    let y: Vec<f64> = idx.iter().map(|&i| data.y[i]).collect();
    let env: Vec<Environment> = idx.iter().map(|&i| data.env[i]).collect();
    let report = group_report(&y, &pred.u, &env, &default_bands(&y), &DEFAULT_KS)?;
    let loss = y.iter().zip(&pred.u).map(|(y, u)| (y.ln_1p() - u).powi(2)).sum::<f64>() / y.len() as f64;
    Ok((report, loss, pred))
}

/// One row of the training history; `epoch` is 1-based, or `best`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: String,
    pub train_total: f64,
    pub train_pred: f64,
    pub val_loss: f64,
    pub val_male: f64,
    pub val_rmsle: f64,
    pub val_ndcg10: f64,
    pub val_ndcg20: f64,
    pub val_worst_rmsle: f64,
    pub lr: f64,
    pub w_low: f64,
    pub w_high: f64,
}

pub struct FitOutcome {
    /// Parameters of the best validation epoch.
    pub model: Model,
    pub meta: ModelMeta,
    pub history: Vec<HistoryRow>,
    pub losses: Vec<LossBundle>,
    pub val_reports: Vec<EvalReport>,
}

/// Trains until early stopping or `max_epochs`, keeping the parameters of
/// the best validation epoch.
pub fn fit(data: &Dataset, cfg: &TrainConfig) -> Result<FitOutcome, TrainError> {
    cfg.validate()?;
    let train_idx = data.indices(SplitName::Train);
    if train_idx.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if data.indices(SplitName::Val).is_empty() {
        return Err(TrainError::EmptySplit("val"));
    }
    let mut model = Model::new(cfg.model_config(), cfg.seed)?;
    let mut opt = AdamW::new(&model.store, cfg.weight_decay);
    let mut dro = GroupDroState::new(cfg.dro());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut stopper = EarlyStopping::new(cfg.patience.max(1));
    let mut best_store = model.store.clone();
    let mut history = vec![];
    let mut losses = vec![];
    let mut reports = vec![];
    let mut step = 0;
    let mut epochs_run = 0;
    for epoch in 0..cfg.max_epochs {
        let lr = lr_at(epoch, cfg)?;
        let batches = stratified_batches(&train_idx, &data.env, cfg.batch_size, &mut rng);
        let (mut tot, mut pred) = (0.0, 0.0);
        for batch in &batches {
            let mut b = train_step(&mut model, &mut opt, &mut dro, data, batch, cfg, lr, &mut rng)?;
            b.step = step;
            b.epoch = epoch + 1;
            tot += b.l_total;
            pred += b.l_pred;
            losses.push(b);
            step += 1;
        }
        epochs_run = epoch + 1;
        let (report, val_loss, _) = evaluate(&model, data, SplitName::Val)?;
        if !val_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                step,
                detail: format!("validation loss {} after epoch {}", val_loss, epoch + 1),
            });
        }
        let last_w = losses.last().map_or([0.5, 0.5], |b| b.w);
        let nb = batches.len() as f64;
        history.push(HistoryRow {
            epoch: (epoch + 1).to_string(),
            train_total: tot / nb,
            train_pred: pred / nb,
            val_loss,
            val_male: report.male,
            val_rmsle: report.rmsle,
            val_ndcg10: report.ndcg.get(&10).copied().unwrap_or(f64::NAN),
            val_ndcg20: report.ndcg.get(&20).copied().unwrap_or(f64::NAN),
            val_worst_rmsle: report.worst_group_rmsle(),
            lr,
            w_low: last_w[0],
            w_high: last_w[1],
        });
        reports.push(report);
        log::info!(
            "epoch {} train {:.4} val {:.4} male {:.4} w=({:.3},{:.3})",
            epoch + 1,
            tot / nb,
            val_loss,
            history.last().map_or(0.0, |h| h.val_male),
            last_w[0],
            last_w[1]
        );
        match stopper.observe(epoch + 1, val_loss) {
            StopDecision::Improved => best_store = model.store.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }
    let best_epoch = stopper.best_epoch.unwrap_or(epochs_run);
    let mut best_row = history[best_epoch - 1].clone();
    best_row.epoch = "best".into();
    history.push(best_row);
    model.store = best_store;
    let meta = ModelMeta {
        model: cfg.model_config(),
        train: cfg.clone(),
        stats: data.stats.clone(),
        q_threshold: data.q_threshold,
        best_epoch,
        epochs_trained: epochs_run,
    };
    Ok(FitOutcome {
        model,
        meta,
        history,
        losses,
        val_reports: reports,
    })
}

pub const HISTORY_HEADER: &str =
    "epoch\ttrain_total\ttrain_pred\tval_loss\tval_male\tval_rmsle\tval_ndcg10\tval_ndcg20\tval_worst_rmsle\tlr\tw_low\tw_high";

pub fn write_history(path: &Path, rows: &[HistoryRow]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{}", HISTORY_HEADER)?;
    for r in rows {
        writeln!(
            f,
            "{}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}",
            r.epoch,
            r.train_total,
            r.train_pred,
            r.val_loss,
            r.val_male,
            r.val_rmsle,
            r.val_ndcg10,
            r.val_ndcg20,
            r.val_worst_rmsle,
            r.lr,
            r.w_low,
            r.w_high
        )?;
    }
    f.flush()
}

pub fn write_loss_ledger(path: &Path, bundles: &[LossBundle]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{}", LossBundle::LEDGER_HEADER)?;
    for b in bundles {
        writeln!(f, "{}", b.ledger_row())?;
    }
    f.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::finite_difference_check;
    use crate::objectives::GroupDroConfig;
    use crate::synth::{generate, GenConfig};

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            hidden: 8,
            heads: 2,
            head_hidden: 8,
            disc_hidden: 4,
            batch_size: 32,
            warmup_epochs: 1,
            max_epochs: 3,
            ..Default::default()
        }
    }

    fn tiny_data(cfg: &TrainConfig, seed: u64) -> Dataset {
        let corpus = generate(&GenConfig {
            n_papers: 150,
            n_authors: 90,
            n_venues: 10,
            n_topics: 12,
            seed,
            ..Default::default()
        })
        .unwrap();
        Dataset::from_synthetic(&corpus, cfg).unwrap()
    }

    #[test]
    fn dro_with_one_environment_equals_erm() {
        let cfg = TrainConfig {
            lambda_reg: 0.0,
            dropout: 0.0,
            tau: 2.0, // every paper lands in the low environment
            ..tiny_cfg()
        };
        let data = tiny_data(&cfg, 1);
        let batch: Vec<usize> = data.indices(SplitName::Train).into_iter().take(16).collect();
        let run = |dro_on: bool| {
            let c = TrainConfig { group_dro: dro_on, ..cfg.clone() };
            let mut model = Model::new(c.model_config(), 3).unwrap();
            let mut opt = AdamW::new(&model.store, c.weight_decay);
            let mut dro = GroupDroState::new(GroupDroConfig::default());
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let b = train_step(&mut model, &mut opt, &mut dro, &data, &batch, &c, 1e-3, &mut rng).unwrap();
            (model.store, b)
        };
        let (s_dro, b_dro) = run(true);
        let (s_erm, b_erm) = run(false);
        assert!((b_dro.l_total - b_erm.l_total).abs() < 1e-12);
        for id in s_dro.ids() {
            for (a, b) in s_dro.get(id).data().iter().zip(s_erm.get(id).data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bundle_total_reconstructs() {
        let cfg = TrainConfig {
            lambda_adv: 0.1,
            lambda_corr: 0.1,
            ..tiny_cfg()
        };
        let data = tiny_data(&cfg, 2);
        let batch: Vec<usize> = data.indices(SplitName::Train).into_iter().take(24).collect();
        let mut model = Model::new(cfg.model_config(), 1).unwrap();
        let mut opt = AdamW::new(&model.store, cfg.weight_decay);
        let mut dro = GroupDroState::new(cfg.dro());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..3 {
            let b = train_step(&mut model, &mut opt, &mut dro, &data, &batch, &cfg, 1e-3, &mut rng).unwrap();
            assert!((b.reconstructed_total(&cfg.weights()) - b.l_total).abs() < 1e-10);
            assert!(b.l_adv > 0.0 && b.l_calib > 0.0);
            assert!(b.w.iter().all(|w| (0.1..=0.9).contains(w)));
        }
    }

    #[test]
    fn total_gradient_matches_finite_differences() {
        // gradient reversal at scale -1 is the identity, so the taped
        // gradient is the true derivative of the total
        let cfg = TrainConfig {
            lambda_adv: 0.1,
            adv_scale: -1.0,
            lambda_corr: 0.1,
            dropout: 0.0,
            ..tiny_cfg()
        };
        let data = tiny_data(&cfg, 3);
        let batch: Vec<usize> = data.indices(SplitName::Train).into_iter().take(16).collect();
        let model = Model::new(cfg.model_config(), 2).unwrap();
        let id = model.store.id("encoder/layer0/paper/q/w").unwrap();
        let f = |tape: &mut Tape, xv: Var| {
            let p = model.store.bind(tape, false).with_var(id, xv);
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let obj = build_objective(tape, &model, &p, &data, &batch, &cfg, WeightPolicy::Fixed([0.3, 0.7]), false, &mut rng)
                .expect("objective");
            Ok(obj.total)
        };
        // the total is O(10); smaller steps drown in round-off
        let err = finite_difference_check(f, model.store.get(id), 1e-4).unwrap();
        assert!(err < 1e-4, "relative error {}", err);
    }

    #[test]
    fn fit_is_deterministic_and_single_epoch_works() {
        let cfg = TrainConfig { max_epochs: 1, ..tiny_cfg() };
        let data = tiny_data(&cfg, 4);
        let a = fit(&data, &cfg).unwrap();
        let b = fit(&data, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.losses, b.losses);
        assert_eq!(a.model.store, b.model.store);
        assert_eq!(a.meta.best_epoch, 1);
        assert_eq!(a.meta.epochs_trained, 1);
        assert_eq!(a.history.len(), 2);
        assert_eq!(a.history[1].epoch, "best");
    }
}
