//! Core of the CueCAn missing-object pipeline: tensors, reverse-mode
//! autodiff, the contextual attention unit, encoder/decoder networks,
//! synthetic scene generation, training, and the downstream region
//! classifiers. No_std + alloc; all IO lives in the companion CLI crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod blob;
pub mod check;
pub mod cuecan;
pub mod error;
pub mod fmath;
pub mod forest;
pub mod kernels;
pub mod metrics;
pub mod nets;
pub mod optim;
pub mod reference;
pub mod rng;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod train;
pub mod video;
