//! Bias-aware citation prediction: metadata agents, a heterogeneous graph
//! encoder, a two-stage exposure-shielded predictor, group-robust training
//! with counterfactual regularization, and a synthetic corpus generator for
//! checking all of it.

pub mod autodiff;
pub mod encoder;
pub mod features;
pub mod graph;
pub mod metrics;
pub mod objectives;
pub mod predictor;
pub mod synth;
pub mod train;
pub mod whatif;
pub mod cli;
