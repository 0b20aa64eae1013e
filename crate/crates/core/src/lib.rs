//! Domain generalisation by adversarial synthesis of worst-case target
//! domains in Fourier amplitude space.
//!
//! The pieces, bottom-up:
//!
//! - [`tensor`]: `f64` tensors with a reverse-mode tape.
//! - [`fourier`]: 2-D DFT, amplitude/phase split, the non-redundant
//!   half-spectrum, and a differentiable amplitude-to-image op.
//! - [`head`]: the variational Bayesian linear head (ELBO, logit moments).
//! - [`losses`]: margin-hinge classifier-discrepancy losses (MCD and the
//!   label-anchored SMCD).
//! - [`generator`]: the amplitude generator, post-synthesis mixup and target
//!   batch construction.
//! - [`swad`]: overfit-aware dense weight averaging.
//! - [`trainer`]: the alternating model / generator optimisation, baselines
//!   and evaluation.
//! - [`data`]: MNIST IDX parsing, Rotated/Colored-MNIST and procedural glyph
//!   domains, leave-one-domain-out splits.
//! - [`cli`]: config files, run manifests, metrics CSV, checkpoints and the
//!   `train`/`eval`/`sweep`/`synth` commands behind the `agfa` binary.
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod fourier;
pub mod generator;
pub mod gradcheck;
pub mod head;
pub mod losses;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod swad;
pub mod tensor;
pub mod trainer;
