//! Venue environments, GroupDRO, counterfactual regularizers and the total
//! objective.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Bound, Tape, Tensor, Var};
use crate::features::{FeatureStats, SLOT_Q, SLOT_R};
use crate::predictor::{Forward, Model, PredictorError};

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("factor {0:?} is not actionable (expected R or Q)")]
    NonActionableFactor(String),
    #[error("{0} label(s) for {1} losses")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Environment {
    Low,
    High,
}

impl Environment {
    pub const ALL: [Environment; 2] = [Environment::Low, Environment::High];

    pub fn index(self) -> usize {
        match self {
            Environment::Low => 0,
            Environment::High => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Environment::Low => "low",
            Environment::High => "high",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentConfig {
    /// Threshold on `(V - 1) / 4`; at or above it a paper is `High`.
    pub tau: f64,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        Self { tau: 0.8 }
    }
}

/// Venue prestige on 1..=5 mapped to [0, 1].
pub fn normalized_venue(v_raw: f64) -> f64 {
    (v_raw - 1.0) / 4.0
}

pub fn environment_of(v_raw: f64, cfg: &EnvironmentConfig) -> Environment {
    if normalized_venue(v_raw) >= cfg.tau {
        Environment::High
    } else {
        Environment::Low
    }
}

pub fn partition_environments(v_raw: &[f64], cfg: &EnvironmentConfig) -> Vec<Environment> {
    v_raw.iter().map(|&v| environment_of(v, cfg)).collect()
}

/// Mean loss per environment; `None` where an environment has no samples.
pub fn group_risks(losses: &[f64], envs: &[Environment]) -> Result<[Option<f64>; 2], ObjectiveError> {
    if losses.len() != envs.len() {
        return Err(ObjectiveError::LengthMismatch(envs.len(), losses.len()));
    }
    let mut sum = [0.0; 2];
    let mut n = [0usize; 2];
    for (l, e) in losses.iter().zip(envs) {
        sum[e.index()] += l;
        n[e.index()] += 1;
    }
    Ok([0, 1].map(|i| (n[i] > 0).then(|| sum[i] / n[i] as f64)))
}

/// Taped per-environment mean of a `[b, 1]` loss column.
pub fn group_risk_vars(tape: &mut Tape, losses: Var, envs: &[Environment]) -> Result<[Option<Var>; 2], ObjectiveError> {
    let b = tape.value(losses).len();
    if b != envs.len() {
        return Err(ObjectiveError::LengthMismatch(envs.len(), b));
    }
    let mut out = [None, None];
    for e in Environment::ALL {
        let n = envs.iter().filter(|&&x| x == e).count();
        if n == 0 {
            continue;
        }
        let w: Vec<f64> = envs.iter().map(|&x| if x == e { 1.0 / n as f64 } else { 0.0 }).collect();
        let mask = tape.constant(Tensor::new(vec![b, 1], w)?);
        let m = tape.mul(losses, mask)?;
        out[e.index()] = Some(tape.sum(m)?);
    }
    Ok(out)
}

/// `Σ_e w_e L_e`.
pub fn groupdro_objective(w: [f64; 2], l: [f64; 2]) -> f64 {
    w[0] * l[0] + w[1] * l[1]
}

/// Taped [`groupdro_objective`]: `w` enters as a constant multiplier, so
/// gradients reach the model only through the risks.
pub fn groupdro_objective_var(tape: &mut Tape, w: [f64; 2], risks: [Var; 2]) -> Result<Var, AutodiffError> {
    let a = tape.scale(risks[0], w[0])?;
    let b = tape.scale(risks[1], w[1])?;
    tape.add(a, b)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupDroConfig {
    pub alpha: f64,
    pub eps: f64,
    pub w_min: f64,
    pub w_max: f64,
}

impl Default for GroupDroConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            eps: 1e-8,
            w_min: 0.1,
            w_max: 0.9,
        }
    }
}

/// Exponentiated-gradient step on the environment weights, normalized by
/// the spread of the risks, then clipped to `[w_min, w_max]` and
/// renormalized.
pub fn update_group_weights(w: [f64; 2], l: [f64; 2], cfg: &GroupDroConfig) -> [f64; 2] {
    let mean = (l[0] + l[1]) / 2.0;
    let sd = (((l[0] - mean).powi(2) + (l[1] - mean).powi(2)) / 2.0).sqrt();
    let tilde = [0, 1].map(|e| w[e] * (cfg.alpha * (l[e] - mean) / (sd + cfg.eps)).exp());
    let z = tilde[0] + tilde[1];
    let clipped = tilde.map(|t| (t / z).clamp(cfg.w_min, cfg.w_max));
    let z = clipped[0] + clipped[1];
    clipped.map(|c| c / z)
}

/// Environment weights plus the last observed risk of each environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupDroState {
    pub w: [f64; 2],
    pub config: GroupDroConfig,
    pub last_risks: [Option<f64>; 2],
}

impl GroupDroState {
    pub fn new(config: GroupDroConfig) -> Self {
        Self {
            w: [0.5, 0.5],
            config,
            last_risks: [None, None],
        }
    }

    /// Fills missing environments from the previous step's risks. Returns
    /// `None` when an environment has never been observed.
    pub fn fill_risks(&mut self, observed: [Option<f64>; 2]) -> Option<[f64; 2]> {
        for e in Environment::ALL {
            match observed[e.index()] {
                Some(l) => self.last_risks[e.index()] = Some(l),
                None => log::debug!("environment {} empty in batch; reusing last risk", e.name()),
            }
        }
        Some([self.last_risks[0]?, self.last_risks[1]?])
    }

    pub fn update(&mut self, l: [f64; 2]) -> [f64; 2] {
        self.w = update_group_weights(self.w, l, &self.config);
        self.w
    }
}

/// Actionable factors for counterfactual interventions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Factor {
    R,
    Q,
}

impl Factor {
    pub const ALL: [Factor; 2] = [Factor::R, Factor::Q];

    pub fn name(self) -> &'static str {
        match self {
            Factor::R => "R",
            Factor::Q => "Q",
        }
    }

    pub fn parse(s: &str) -> Result<Self, ObjectiveError> {
        match s.trim() {
            "R" | "r" => Ok(Factor::R),
            "Q" | "q" => Ok(Factor::Q),
            other => Err(ObjectiveError::NonActionableFactor(other.to_string())),
        }
    }

    /// Slot in the venue-inclusive feature vector.
    pub fn slot(self) -> usize {
        match self {
            Factor::R => SLOT_R,
            Factor::Q => SLOT_Q,
        }
    }

    /// Raw value the intervention sets.
    pub fn target(self) -> f64 {
        match self {
            Factor::R => 1.0,
            Factor::Q => 5.0,
        }
    }

    /// Desired sign of the effect.
    pub fn direction(self) -> f64 {
        1.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualConfig {
    pub factors: Vec<Factor>,
    /// Training-split median Q; papers below it are in Q's low region.
    pub q_threshold: f64,
}

impl CounterfactualConfig {
    /// Raw-scale threshold below which a paper is in the factor's low region.
    pub fn threshold(&self, f: Factor) -> f64 {
        match f {
            Factor::R => 1.0,
            Factor::Q => self.q_threshold,
        }
    }

    pub fn is_low(&self, f: Factor, raw: f64) -> bool {
        raw < self.threshold(f)
    }
}

/// Median of a sample (mean of the middle pair for even sizes); 0 if empty.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// `f_plus` rows with `factor` set to its intervention target (normalized).
pub fn intervene(f_plus: &Tensor, factor: Factor, stats: &FeatureStats) -> Tensor {
    let mut out = f_plus.clone();
    let target = stats.normalize_slot(factor.slot(), factor.target());
    let c = out.cols();
    for r in 0..out.rows() {
        out.data_mut()[r * c + factor.slot()] = target;
    }
    out
}

/// `Δ_v = u(s^{v↑}) - u(s)` with the exposure estimate recomputed from the
/// intervened features; embeddings are held fixed.
pub fn counterfactual_delta(
    tape: &mut Tape,
    model: &Model,
    p: &Bound,
    base: &Forward,
    f_plus: &Tensor,
    factor: Factor,
    stats: &FeatureStats,
) -> Result<Var, ObjectiveError> {
    let moved = intervene(f_plus, factor, stats);
    let cf = model.heads(tape, p, base.z_with, base.z_without, &moved)?;
    Ok(tape.sub(cf.u, base.u)?)
}

/// `mean_p max(0, -t Δ(p)) · 1{p in low region}` on plain values.
pub fn mono_loss(delta: &[f64], low: &[bool], direction: f64) -> f64 {
    if delta.is_empty() {
        return 0.0;
    }
    let s: f64 = delta
        .iter()
        .zip(low)
        .map(|(&d, &l)| if l { (-direction * d).max(0.0) } else { 0.0 })
        .sum();
    s / delta.len() as f64
}

pub fn smooth_loss(delta: &[f64]) -> f64 {
    if delta.is_empty() {
        return 0.0;
    }
    delta.iter().map(|d| d * d).sum::<f64>() / delta.len() as f64
}

/// Taped [`mono_loss`] on a `[b, 1]` effect column.
pub fn mono_loss_var(tape: &mut Tape, delta: Var, low: &[bool], direction: f64) -> Result<Var, AutodiffError> {
    let b = tape.value(delta).len();
    let neg = tape.scale(delta, -direction)?;
    let h = tape.hinge(neg)?;
    let mask = tape.constant(Tensor::new(vec![b, 1], low.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect())?);
    let m = tape.mul(h, mask)?;
    tape.mean(m)
}

pub fn smooth_loss_var(tape: &mut Tape, delta: Var) -> Result<Var, AutodiffError> {
    let s = tape.square(delta)?;
    tape.mean(s)
}

/// `λ_mono Σ_v L_mono(v) + λ_smooth Σ_v L_smooth(v)`.
pub fn total_reg(mono: &[f64], smooth: &[f64], lambda_mono: f64, lambda_smooth: f64) -> f64 {
    lambda_mono * mono.iter().sum::<f64>() + lambda_smooth * smooth.iter().sum::<f64>()
}

/// Loss weights of the full objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub main: f64,
    pub reg: f64,
    pub mono: f64,
    pub smooth: f64,
    pub adv: f64,
    pub corr: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            main: 1.0,
            reg: 0.05,
            mono: 1.0,
            smooth: 0.1,
            adv: 0.0,
            corr: 0.0,
        }
    }
}

/// `λ_main L_dro + λ_reg L_reg + λ_adv L_adv + λ_corr L_calib`.
pub fn total_loss(l_dro: f64, l_reg: f64, l_adv: f64, l_calib: f64, w: &LossWeights) -> f64 {
    w.main * l_dro + w.reg * l_reg + w.adv * l_adv + w.corr * l_calib
}

/// Every term of one optimization step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBundle {
    pub step: usize,
    pub epoch: usize,
    /// Per-environment prediction risk (`NaN` when never observed).
    pub l_env: [f64; 2],
    pub l_pred: f64,
    pub l_groupdro: f64,
    /// Per-factor monotonicity and smoothness terms, in `Factor::ALL` order.
    pub l_mono: Vec<f64>,
    pub l_smooth: Vec<f64>,
    pub l_reg: f64,
    pub l_adv: f64,
    pub l_calib: f64,
    pub l_total: f64,
    pub lr: f64,
    pub w: [f64; 2],
}

impl LossBundle {
    pub fn reconstructed_total(&self, w: &LossWeights) -> f64 {
        total_loss(self.l_groupdro, self.l_reg, self.l_adv, self.l_calib, w)
    }

    pub const LEDGER_HEADER: &'static str = "step\tL_low\tL_high\tw_low\tw_high\tL_mono\tL_smooth\tL_total";

    /// One ledger row: step, L_low, L_high, w_low, w_high, L_mono, L_smooth,
    /// L_total.
    pub fn ledger_row(&self) -> String {
        format!(
            "{}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}",
            self.step,
            self.l_env[0],
            self.l_env[1],
            self.w[0],
            self.w[1],
            self.l_mono.iter().sum::<f64>(),
            self.l_smooth.iter().sum::<f64>(),
            self.l_total
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn environments_from_venue() {
        let cfg = EnvironmentConfig::default();
        assert_eq!(environment_of(5.0, &cfg), Environment::High);
        assert_eq!(environment_of(1.0, &cfg), Environment::Low);
        assert_eq!(environment_of(4.2, &cfg), Environment::High);
        assert_eq!(environment_of(4.0, &cfg), Environment::Low);
    }

    #[test]
    fn group_risk_examples() {
        use Environment::*;
        assert_eq!(group_risks(&[1.0, 3.0], &[Low, Low]).unwrap(), [Some(2.0), None]);
        assert_eq!(group_risks(&[1.0, 3.0, 5.0], &[Low, Low, High]).unwrap(), [Some(2.0), Some(5.0)]);
        assert_eq!(group_risks(&[4.0, 7.0], &[High, Low]).unwrap(), [Some(7.0), Some(4.0)]);
        assert!(group_risks(&[1.0], &[]).is_err());
    }

    #[test]
    fn taped_group_risks_match() {
        use Environment::*;
        let mut t = Tape::new();
        let l = t.constant(Tensor::new(vec![3, 1], vec![1.0, 3.0, 5.0]).unwrap());
        let r = group_risk_vars(&mut t, l, &[Low, Low, High]).unwrap();
        assert_eq!(t.value(r[0].unwrap()).item(), 2.0);
        assert_eq!(t.value(r[1].unwrap()).item(), 5.0);
    }

    #[test]
    fn empty_environment_reuses_last_risk() {
        let mut s = GroupDroState::new(GroupDroConfig::default());
        assert_eq!(s.fill_risks([Some(1.0), None]), None);
        assert_eq!(s.fill_risks([None, Some(2.0)]), Some([1.0, 2.0]));
        assert_eq!(s.fill_risks([Some(3.0), None]), Some([3.0, 2.0]));
    }

    #[test]
    fn objective_examples() {
        assert_eq!(groupdro_objective([0.5, 0.5], [1.0, 1.0]), 1.0);
        assert!((groupdro_objective([0.6, 0.4], [1.0, 2.0]) - 1.4).abs() < 1e-15);
        assert_eq!(groupdro_objective([1.0, 0.0], [0.3, 9.0]), 0.3);
    }

    #[test]
    fn weight_update_examples() {
        let cfg = GroupDroConfig::default();
        assert_eq!(update_group_weights([0.3, 0.7], [2.0, 2.0], &cfg), [0.3, 0.7]);
        let w = update_group_weights([0.5, 0.5], [1.0, 0.5], &cfg);
        // (0.5 e^{0.1 z}, 0.5 e^{-0.1 z}) normalized, z = 0.25 / (0.25 + eps)
        let z: f64 = 0.25 / (0.25 + 1e-8);
        let (a, b) = (0.5 * (0.1 * z).exp(), 0.5 * (-0.1 * z).exp());
        assert!((w[0] - a / (a + b)).abs() < 1e-12);
        assert!((w[0] - 0.549834).abs() < 1e-6 && (w[1] - 0.450166).abs() < 1e-6);
        // clip binding: alpha large enough to push past 0.9
        let big = GroupDroConfig { alpha: 5.0, ..cfg };
        assert_eq!(update_group_weights([0.5, 0.5], [3.0, 1.0], &big), [0.9, 0.1]);
    }

    #[test]
    fn counterfactual_factors() {
        assert_eq!(Factor::parse("R").unwrap(), Factor::R);
        assert!(matches!(Factor::parse("V"), Err(ObjectiveError::NonActionableFactor(_))));
        let cfg = CounterfactualConfig {
            factors: Factor::ALL.to_vec(),
            q_threshold: 3.0,
        };
        assert!(cfg.is_low(Factor::R, 0.0));
        assert!(!cfg.is_low(Factor::R, 1.0));
        assert!(cfg.is_low(Factor::Q, 2.9));
        assert!(!cfg.is_low(Factor::Q, 3.0));
    }

    #[test]
    fn mono_and_smooth_examples() {
        assert_eq!(mono_loss(&[0.2], &[true], 1.0), 0.0);
        assert!((mono_loss(&[-0.2], &[true], 1.0) - 0.2).abs() < 1e-15);
        assert_eq!(mono_loss(&[-0.2, -5.0], &[false, false], 1.0), 0.0);
        assert_eq!(smooth_loss(&[0.0, 0.0]), 0.0);
        assert_eq!(smooth_loss(&[1.0, -1.0]), 1.0);
        let d = [0.3, -0.7, 1.1];
        assert!((smooth_loss(&d.map(|x| 2.5 * x)) - 6.25 * smooth_loss(&d)).abs() < 1e-12);

        let mut t = Tape::new();
        let dv = t.constant(Tensor::new(vec![3, 1], vec![-0.2, 0.4, -1.0]).unwrap());
        let m = mono_loss_var(&mut t, dv, &[true, true, false], 1.0).unwrap();
        assert!((t.value(m).item() - mono_loss(&[-0.2, 0.4, -1.0], &[true, true, false], 1.0)).abs() < 1e-15);
        let s = smooth_loss_var(&mut t, dv).unwrap();
        assert!((t.value(s).item() - smooth_loss(&[-0.2, 0.4, -1.0])).abs() < 1e-15);
    }

    #[test]
    fn reg_and_total_examples() {
        assert_eq!(total_reg(&[0.4, 0.1], &[1.0, 2.0], 0.0, 0.0), 0.0);
        assert!((total_reg(&[0.2, 0.3], &[5.0, 5.0], 1.0, 0.0) - 0.5).abs() < 1e-15);
        assert_eq!(total_reg(&[0.2, 0.3, 0.0], &[0.0, 0.0, 0.0], 1.0, 0.1), total_reg(&[0.2, 0.3], &[0.0, 0.0], 1.0, 0.1));
        let w = LossWeights { adv: 0.0, corr: 0.0, ..Default::default() };
        assert!((total_loss(2.0, 0.4, 0.0, 0.0, &w) - 2.02).abs() < 1e-12);
        let zero = LossWeights { main: 0.0, reg: 0.0, mono: 0.0, smooth: 0.0, adv: 0.0, corr: 0.0 };
        assert_eq!(total_loss(2.0, 0.4, 1.0, 1.0, &zero), 0.0);
        let plain = LossWeights { reg: 0.0, ..Default::default() };
        assert_eq!(total_loss(1.7, 3.0, 0.0, 0.0, &plain), 1.7);
    }

    #[test]
    fn median_of_samples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    proptest! {
        #[test]
        fn update_stays_on_clipped_simplex(w0 in 0.1f64..0.9, l0 in 0.0f64..10.0, l1 in 0.0f64..10.0, alpha in 0.0f64..3.0) {
            let cfg = GroupDroConfig { alpha, ..Default::default() };
            let w = update_group_weights([w0, 1.0 - w0], [l0, l1], &cfg);
            prop_assert!((w[0] + w[1] - 1.0).abs() < 1e-12);
            prop_assert!(w.iter().all(|&x| (0.1..=0.9).contains(&x)));
            // direction follows the risk gap when no clip binds
            let mean = (l0 + l1) / 2.0;
            if (l0 - l1).abs() > 1e-9 && w[0] > 0.1 && w[0] < 0.9 && alpha > 0.0 {
                prop_assert_eq!((w[0] - w0).signum(), (l0 - mean).signum());
            }
        }

        #[test]
        fn total_loss_is_linear_in_each_weight(l in prop::array::uniform4(0.0f64..5.0), lam in 0.0f64..2.0, k in 0usize..4) {
            let mut w = LossWeights::default();
            let base = total_loss(l[0], l[1], l[2], l[3], &w);
            match k { 0 => w.main += lam, 1 => w.reg += lam, 2 => w.adv += lam, _ => w.corr += lam }
            let bumped = total_loss(l[0], l[1], l[2], l[3], &w);
            prop_assert!((bumped - base - lam * l[k]).abs() < 1e-12);
        }

        #[test]
        fn mono_is_nonneg_and_zero_for_aligned_effects(d in prop::collection::vec(-3.0f64..3.0, 1..20)) {
            let low = vec![true; d.len()];
            prop_assert!(mono_loss(&d, &low, 1.0) >= 0.0);
            let aligned: Vec<f64> = d.iter().map(|x| x.abs()).collect();
            prop_assert_eq!(mono_loss(&aligned, &low, 1.0), 0.0);
        }
    }
}
