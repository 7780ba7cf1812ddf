pub mod error;
pub mod fw;
pub mod lap;
pub mod matrix;
pub mod oracles;
pub mod prox;
pub mod qap;
pub mod rng;
pub mod tos;

pub use error::{Error, Result};
pub use matrix::{frobenius_inner, frobenius_norm, Matrix};
pub use rng::RngState;
