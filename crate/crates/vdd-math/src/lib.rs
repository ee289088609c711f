//! Tape-based reverse-mode autodiff over `ndarray` with the handful of ops a
//! small world-model stack needs: dense/conv layers, GRU cells, categorical
//! softmax machinery, stop-gradients, and an Adam optimizer with global-norm
//! clipping. Everything runs on f64 and is deterministic given a seed.

pub mod conv;
pub mod io;
pub mod nn;
pub mod optim;
pub mod seed;
pub mod tape;

pub use nn::{GruCell, Linear, Mlp};
pub use optim::Adam;
pub use tape::{ParamStore, Tape, Tensor};
