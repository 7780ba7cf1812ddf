//! Seeded pseudo-randomness.
//!
//! The generator is xoshiro256++ (Blackman & Vigna), seeded from a `u64`
//! through SplitMix64 as implemented by `rand_xoshiro`. Independent streams
//! for the same seed are obtained with the generator's 2^128-step jump, so
//! stream `k` never overlaps stream `k + 1` in practice. Library code never
//! touches system entropy.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{invalid, Result};
use crate::matrix::Matrix;

/// Single-owner random stream. Pass it explicitly; never share it.
#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    inner: Xoshiro256PlusPlus,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// Stream `stream` of `seed`: the base generator advanced by `stream` jumps.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = Xoshiro256PlusPlus::seed_from_u64(seed);
        for _ in 0..stream {
            inner.jump();
        }
        Self { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }

    /// Uniform index in `1..=count`.
    pub fn draw_uniform_index(&mut self, count: usize) -> Result<usize> {
        if count == 0 {
            return Err(invalid("draw_uniform_index: count must be at least 1"));
        }
        Ok(self.inner.random_range(1..=count))
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn gaussian_matrix(&mut self, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| self.standard_normal())
    }

    pub fn uniform_matrix(&mut self, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| lo + (hi - lo) * self.uniform())
    }
}
