//! Exposure head (Stage A), citation head (Stage B), and the full model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Bound, Linear, ParamStore, Tape, Tensor, Var};
use crate::encoder::{Encoder, EncoderConfig, EncoderError, PreparedGraph};
use crate::features::{F_MINUS_WIDTH, F_PLUS_WIDTH};

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("negative citation count {0}")]
    NegativeTarget(f64),
    #[error("width mismatch in {head}: expected {expected} columns, got {got}")]
    WidthMismatch { head: &'static str, expected: usize, got: usize },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Whether venue information reaches the citation head only through the
/// exposure estimate (two-stage) or directly (single-stage ablation).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorMode {
    TwoStage,
    SingleStage,
}

impl std::str::FromStr for PredictorMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "two_stage" => Ok(PredictorMode::TwoStage),
            "single_stage" => Ok(PredictorMode::SingleStage),
            _ => Err(format!("unknown predictor mode {:?} (two_stage|single_stage)", s)),
        }
    }
}

/// One-hidden-layer feed-forward head with gelu.
#[derive(Clone, Debug)]
pub struct Mlp {
    l1: Linear,
    l2: Linear,
    in_width: usize,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, in_width: usize, hidden: usize, out: usize, rng: &mut R) -> Self {
        Self {
            l1: Linear::new(store, &format!("{}/l1", name), in_width, hidden, true, rng),
            l2: Linear::new(store, &format!("{}/l2", name), hidden, out, true, rng),
            in_width,
        }
    }

    pub fn in_width(&self) -> usize {
        self.in_width
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var, AutodiffError> {
        let h = self.l1.forward(tape, p, x)?;
        let h = tape.gelu(h)?;
        self.l2.forward(tape, p, h)
    }
}

fn check_width(tape: &Tape, head: &'static str, x: Var, expected: usize) -> Result<(), PredictorError> {
    let got = tape.value(x).cols();
    if got != expected {
        return Err(PredictorError::WidthMismatch { head, expected, got });
    }
    Ok(())
}

/// Stage A: `Ê = softplus(g_φ([z_with_venue; f_plus]))`.
#[derive(Clone, Debug)]
pub struct StageAHead {
    mlp: Mlp,
    z_width: usize,
}

impl StageAHead {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, z_width: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            mlp: Mlp::new(store, "stage_a", z_width + F_PLUS_WIDTH, hidden, 1, rng),
            z_width,
        }
    }

    /// `z` is `[b, z_width]`, `f_plus` is `[b, 9]`; returns `[b, 1]`.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, z: Var, f_plus: Var) -> Result<Var, PredictorError> {
        check_width(tape, "stage_a z", z, self.z_width)?;
        check_width(tape, "stage_a f_plus", f_plus, F_PLUS_WIDTH)?;
        let x = tape.concat(&[z, f_plus], 1)?;
        let o = self.mlp.forward(tape, p, x)?;
        Ok(tape.softplus(o)?)
    }
}

/// Stage B: `u = f_θ([z_without_venue; f_minus; Ê])`, read as `log(1+Ŷ)`.
#[derive(Clone, Debug)]
pub struct StageBHead {
    mlp: Mlp,
    z_width: usize,
}

impl StageBHead {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, z_width: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            mlp: Mlp::new(store, "stage_b", z_width + F_MINUS_WIDTH + 1, hidden, 1, rng),
            z_width,
        }
    }

    /// The concatenated head input `[z; f_minus; Ê]`.
    pub fn input(&self, tape: &mut Tape, z: Var, f_minus: Var, e_hat: Var) -> Result<Var, PredictorError> {
        check_width(tape, "stage_b z", z, self.z_width)?;
        check_width(tape, "stage_b f_minus", f_minus, F_MINUS_WIDTH)?;
        check_width(tape, "stage_b e_hat", e_hat, 1)?;
        Ok(tape.concat(&[z, f_minus, e_hat], 1)?)
    }

    pub fn forward_input(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var, PredictorError> {
        Ok(self.mlp.forward(tape, p, x)?)
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, z: Var, f_minus: Var, e_hat: Var) -> Result<Var, PredictorError> {
        let x = self.input(tape, z, f_minus, e_hat)?;
        self.forward_input(tape, p, x)
    }
}

/// Per-sample log-space squared error `(log1p(y) - u)^2`.
pub fn pred_loss(y: f64, u: f64) -> Result<f64, PredictorError> {
    if !(y >= 0.0) {
        return Err(PredictorError::NegativeTarget(y));
    }
    let d = y.ln_1p() - u;
    Ok(d * d)
}

/// Taped form of [`pred_loss`]: `targets` holds `log1p(y)` as `[b, 1]`.
pub fn pred_loss_var(tape: &mut Tape, targets: Var, u: Var) -> Result<Var, AutodiffError> {
    let d = tape.sub(targets, u)?;
    tape.square(d)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub head_hidden: usize,
    pub disc_hidden: usize,
    pub mode: PredictorMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            head_hidden: 64,
            disc_hidden: 32,
            mode: PredictorMode::TwoStage,
        }
    }
}

/// Number of venue-tier classes the adversary predicts.
pub const VENUE_CLASSES: usize = 5;

/// Encoder, heads and venue adversary over one shared parameter store.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub encoder: Encoder,
    pub stage_a: StageAHead,
    pub stage_b: StageBHead,
    /// Citation head of the single-stage ablation: `[z_with; f_plus] -> u`.
    pub single: Mlp,
    pub discriminator: Mlp,
}

/// Batch outputs of one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    pub z_with: Var,
    pub z_without: Option<Var>,
    pub e_hat: Option<Var>,
    pub u: Var,
    /// Stage-B input (two-stage) or single-stage head input.
    pub head_input: Var,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, PredictorError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = Encoder::new(config.encoder.clone(), &mut store, &mut rng)?;
        let h = config.encoder.hidden;
        let stage_a = StageAHead::new(&mut store, h, config.head_hidden, &mut rng);
        let stage_b = StageBHead::new(&mut store, h, config.head_hidden, &mut rng);
        let single = Mlp::new(&mut store, "single", h + F_PLUS_WIDTH, config.head_hidden, 1, &mut rng);
        let disc_in = match config.mode {
            PredictorMode::TwoStage => h + F_MINUS_WIDTH + 1,
            PredictorMode::SingleStage => h + F_PLUS_WIDTH,
        };
        let discriminator = Mlp::new(&mut store, "adversary", disc_in, config.disc_hidden, VENUE_CLASSES, &mut rng);
        Ok(Self {
            config,
            store,
            encoder,
            stage_a,
            stage_b,
            single,
            discriminator,
        })
    }

    /// Full-graph embeddings for both views; the venue-excluded view is
    /// skipped in single-stage mode.
    pub fn embed<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        p: &Bound,
        with_venue: &PreparedGraph,
        without_venue: &PreparedGraph,
        train: bool,
        rng: &mut R,
    ) -> Result<(Var, Option<Var>), PredictorError> {
        let zw = self.encoder.encode(tape, p, with_venue, train, rng)?;
        let zo = match self.config.mode {
            PredictorMode::TwoStage => Some(self.encoder.encode(tape, p, without_venue, train, rng)?),
            PredictorMode::SingleStage => None,
        };
        Ok((zw, zo))
    }

    /// Heads on already-gathered batch embeddings and normalized `f_plus`
    /// rows `[b, 9]`.
    pub fn heads(&self, tape: &mut Tape, p: &Bound, z_with: Var, z_without: Option<Var>, f_plus: &Tensor) -> Result<Forward, PredictorError> {
        let fp = tape.constant(f_plus.clone());
        match self.config.mode {
            PredictorMode::TwoStage => {
                let zo = z_without.expect("two-stage forward needs the venue-excluded embedding");
                let fm = tape.constant(minus_rows(f_plus));
                let e_hat = self.stage_a.forward(tape, p, z_with, fp)?;
                let x = self.stage_b.input(tape, zo, fm, e_hat)?;
                let u = self.stage_b.forward_input(tape, p, x)?;
                Ok(Forward {
                    z_with,
                    z_without: Some(zo),
                    e_hat: Some(e_hat),
                    u,
                    head_input: x,
                })
            }
            PredictorMode::SingleStage => {
                let x = tape.concat(&[z_with, fp], 1)?;
                let u = self.single.forward(tape, p, x)?;
                Ok(Forward {
                    z_with,
                    z_without: None,
                    e_hat: None,
                    u,
                    head_input: x,
                })
            }
        }
    }
}

/// Deletes the V column of `[b, 9]` rows.
pub fn minus_rows(f_plus: &Tensor) -> Tensor {
    let mut data = Vec::with_capacity(f_plus.rows() * F_MINUS_WIDTH);
    for r in 0..f_plus.rows() {
        data.extend_from_slice(&f_plus.row(r)[1..]);
    }
    Tensor::new(vec![f_plus.rows(), F_MINUS_WIDTH], data).expect("f_minus rows")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{finite_difference_check, finite_difference_check_many};

    fn rand_tensor(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::uniform(shape, 1.0, &mut rng)
    }

    fn heads(z: usize) -> (ParamStore, StageAHead, StageBHead) {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let a = StageAHead::new(&mut store, z, 6, &mut rng);
        let b = StageBHead::new(&mut store, z, 6, &mut rng);
        (store, a, b)
    }

    #[test]
    fn zero_stage_a_gives_softplus_zero() {
        let (mut store, a, _) = heads(4);
        store.zero_all();
        let mut tape = Tape::new();
        let p = store.bind(&mut tape, false);
        let z = tape.constant(Tensor::zeros(&[1, 4]));
        let f = tape.constant(Tensor::zeros(&[1, 9]));
        let e = a.forward(&mut tape, &p, z, f).unwrap();
        assert!((tape.value(e).item() - 2f64.ln()).abs() < 1e-15);
        assert!((tape.value(e).item() - 0.6931).abs() < 1e-4);
    }

    #[test]
    fn stage_a_bounded_and_sensitive_to_venue() {
        let (store, a, _) = heads(4);
        let z = rand_tensor(&[3, 4], 2);
        let f = rand_tensor(&[3, 9], 3);
        let mut tape = Tape::new();
        let p = store.bind(&mut tape, false);
        let (zv, fv) = (tape.constant(z.clone()), tape.constant(f.clone()));
        let e = a.forward(&mut tape, &p, zv, fv).unwrap();
        assert!(tape.value(e).data().iter().all(|v| v.is_finite() && *v >= 0.0 && *v < 1e6));
        // finite-difference probe on the V slot
        let h = 1e-6;
        let eval = |fm: &Tensor| {
            let mut t = Tape::new();
            let p = store.bind(&mut t, false);
            let (zv, fv) = (t.constant(z.clone()), t.constant(fm.clone()));
            let e = a.forward(&mut t, &p, zv, fv).unwrap();
            t.value(e).data()[0]
        };
        let mut up = f.clone();
        up.data_mut()[0] += h;
        assert!((eval(&up) - eval(&f)).abs() / h > 1e-6);
    }

    #[test]
    fn stage_b_never_reads_venue() {
        let (store, _, b) = heads(4);
        let z = rand_tensor(&[2, 4], 5);
        let plus = rand_tensor(&[2, 9], 6);
        let mut other = plus.clone();
        other.data_mut()[0] = 123.0;
        other.data_mut()[9] = -7.0;
        let run = |f: &Tensor| {
            let mut t = Tape::new();
            let p = store.bind(&mut t, false);
            let zv = t.constant(z.clone());
            let fm = t.constant(minus_rows(f));
            let e = t.constant(Tensor::full(&[2, 1], 0.7));
            let u = b.forward(&mut t, &p, zv, fm, e).unwrap();
            t.value(u).clone()
        };
        assert_eq!(run(&plus), run(&other));
    }

    #[test]
    fn zero_stage_b_predicts_zero() {
        let (mut store, _, b) = heads(4);
        store.zero_all();
        let mut t = Tape::new();
        let p = store.bind(&mut t, false);
        let z = t.constant(rand_tensor(&[3, 4], 7));
        let fm = t.constant(rand_tensor(&[3, 8], 8));
        let e = t.constant(rand_tensor(&[3, 1], 9));
        let u = b.forward(&mut t, &p, z, fm, e).unwrap();
        assert!(t.value(u).data().iter().all(|&v| v == 0.0));
        assert_eq!(t.value(u).data()[0].exp_m1(), 0.0);
    }

    #[test]
    fn width_mismatch_rejected() {
        let (store, a, _) = heads(4);
        let mut t = Tape::new();
        let p = store.bind(&mut t, false);
        let z = t.constant(Tensor::zeros(&[1, 5]));
        let f = t.constant(Tensor::zeros(&[1, 9]));
        assert!(matches!(a.forward(&mut t, &p, z, f), Err(PredictorError::WidthMismatch { .. })));
    }

    #[test]
    fn pred_loss_examples() {
        assert_eq!(pred_loss(0.0, 0.0).unwrap(), 0.0);
        assert!((pred_loss(std::f64::consts::E - 1.0, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(pred_loss(9.0, 10f64.ln()).unwrap() < 1e-30);
        assert!(matches!(pred_loss(-1.0, 0.0), Err(PredictorError::NegativeTarget(_))));
        // symmetry of the residual
        let (a, b) = (pred_loss(3.0, 4f64.ln() + 0.3).unwrap(), pred_loss(3.0, 4f64.ln() - 0.3).unwrap());
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn heads_pass_gradient_checks() {
        let (store, a, b) = heads(4);
        // moderate inputs keep the gelu units away from their flat tail, where
        // gradients shrink to the finite-difference noise floor
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let z = Tensor::uniform(&[3, 4], 0.5, &mut rng);
        let f = Tensor::uniform(&[3, 9], 0.5, &mut rng);
        let ids: Vec<_> = store.ids().collect();
        for &id in &ids {
            let err = finite_difference_check(
                |tape, v| {
                    let p = store.bind(tape, false).with_var(id, v);
                    let zv = tape.constant(z.clone());
                    let fv = tape.constant(f.clone());
                    let e = a.forward(tape, &p, zv, fv).map_err(unwrap_ad)?;
                    let fm = tape.constant(minus_rows(&f));
                    let u = b.forward(tape, &p, zv, fm, e).map_err(unwrap_ad)?;
                    let s = tape.square(u)?;
                    tape.sum(s)
                },
                store.get(id),
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-6, "{}: {}", store.name(id), err);
        }
        // and w.r.t. the inputs
        let err = finite_difference_check_many(
            |tape, v| {
                let p = store.bind(tape, false);
                let e = a.forward(tape, &p, v[0], v[1]).map_err(unwrap_ad)?;
                let u = b.forward(tape, &p, v[0], v[2], e).map_err(unwrap_ad)?;
                tape.sum(u)
            },
            &[z.clone(), f.clone(), minus_rows(&f)],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "inputs: {}", err);
    }

    fn unwrap_ad(e: PredictorError) -> AutodiffError {
        match e {
            PredictorError::Autodiff(a) => a,
            other => panic!("{}", other),
        }
    }
}
