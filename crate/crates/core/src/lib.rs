//! Uncertainty quantification for sampled LLM outputs.
//!
//! The crate is `no_std` (with `alloc`) and contains every computation in the
//! toolkit: the inference simulator, the perturbed-sampling plan, the grey-box
//! and black-box metric suite, and the calibration advisor. Anything that
//! touches the network or the filesystem lives in the `uqkit` companion crate,
//! which talks to this one through the provider traits in [`provider`].
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`model`] | samples, sample sets, task and validation typology, metric scores |
//! | [`provider`] | chat / embedding / NLI traits, judgments, deterministic stubs |
//! | [`sim`] | softmax, temperature, top-k, top-p, seeded token draws, simulated chat |
//! | [`sampler`] | K-of-M x R prompt plans and their execution |
//! | [`greybox`] | token-level entropy, Brier uncertainty, per-category breakdown |
//! | [`blackbox`] | embedding dispersion, semantic entropy, LUQ, EigenScore, spectral scores |
//! | [`calibration`] | regression, anchor distance, flagging, metric recommender, subsampling |
//!
//! All logarithms are natural logarithms.

#![cfg_attr(not(any(feature = "std", test)), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod blackbox;
pub mod calibration;
mod error;
pub mod greybox;
pub mod linalg;
pub mod model;
mod num;
pub mod provider;
pub mod rng;
pub mod sampler;
pub mod sim;
pub mod text;

pub use error::{Error, ProviderError, Result};
pub use model::{
    MetricId, MetricScore, OutputSpec, ReferenceAnchor, ResponseSample, SampleSet,
    SamplingParams, TaskType, TokenDraw, ValidationLevel,
};
