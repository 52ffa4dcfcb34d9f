use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Pure state of (logic level) ⊗ (readout qubit) ⊗ (truncated Fock space).
///
/// Amplitudes are stored with the logic level as the slowest index and the
/// Fock number as the fastest: `index = (level * 2 + readout) * (n_max + 1) + n`.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemState {
    levels: usize,
    fock_dim: usize,
    amplitudes: Vec<C64>,
}

impl SystemState {
    /// `|level⟩ ⊗ |0⟩ ⊗ |n = 0⟩`.
    pub fn basis(levels: usize, n_max: usize, level: usize) -> Self {
        assert!(level < levels, "level index {level} out of range");
        let mut state = Self::zeros(levels, n_max);
        let k = state.index(level, 0, 0);
        state.amplitudes[k] = C64::new(1.0, 0.0);
        state
    }

    /// Normalized logic superposition with readout `|0⟩` and motion `|0⟩`.
    pub fn from_logic(logic: &[C64], n_max: usize) -> Result<Self> {
        let norm: f64 = logic.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidProtocol(
                "initial logic amplitudes have zero norm".into(),
            ));
        }
        let mut state = Self::zeros(logic.len(), n_max);
        for (level, c) in logic.iter().enumerate() {
            let k = state.index(level, 0, 0);
            state.amplitudes[k] = c / norm;
        }
        Ok(state)
    }

    /// Wraps raw amplitudes; the length must be `levels * 2 * (n_max + 1)`.
    pub fn from_amplitudes(levels: usize, n_max: usize, amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != levels * 2 * (n_max + 1) {
            return Err(Error::InvalidProtocol(format!(
                "expected {} amplitudes, got {}",
                levels * 2 * (n_max + 1),
                amplitudes.len()
            )));
        }
        Ok(Self {
            levels,
            fock_dim: n_max + 1,
            amplitudes,
        })
    }

    fn zeros(levels: usize, n_max: usize) -> Self {
        Self {
            levels,
            fock_dim: n_max + 1,
            amplitudes: vec![C64::new(0.0, 0.0); levels * 2 * (n_max + 1)],
        }
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn fock_dim(&self) -> usize {
        self.fock_dim
    }

    pub fn n_max(&self) -> usize {
        self.fock_dim - 1
    }

    #[inline]
    pub fn index(&self, level: usize, readout: usize, n: usize) -> usize {
        (level * 2 + readout) * self.fock_dim + n
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amplitudes
    }

    /// Amplitudes of one logic level: readout-major, Fock-minor.
    pub fn level_block(&self, level: usize) -> &[C64] {
        let w = 2 * self.fock_dim;
        &self.amplitudes[level * w..(level + 1) * w]
    }

    pub fn level_block_mut(&mut self, level: usize) -> &mut [C64] {
        let w = 2 * self.fock_dim;
        &mut self.amplitudes[level * w..(level + 1) * w]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) {
        let norm = self.norm_sqr().sqrt();
        self.amplitudes.iter_mut().for_each(|c| *c /= norm);
    }

    pub fn level_population(&self, level: usize) -> f64 {
        self.level_block(level).iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn level_populations(&self) -> Vec<f64> {
        (0..self.levels).map(|k| self.level_population(k)).collect()
    }

    /// Probability of finding the readout ion in `|readout⟩`.
    pub fn readout_probability(&self, readout: usize) -> f64 {
        (0..self.levels)
            .map(|k| {
                let start = self.index(k, readout, 0);
                self.amplitudes[start..start + self.fock_dim]
                    .iter()
                    .map(|c| c.norm_sqr())
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn fock_populations(&self) -> Vec<f64> {
        let mut pops = vec![0.0; self.fock_dim];
        for chunk in self.amplitudes.chunks(self.fock_dim) {
            for (p, c) in pops.iter_mut().zip(chunk) {
                *p += c.norm_sqr();
            }
        }
        pops
    }

    /// Combined population of the two highest Fock states kept.
    pub fn top_fock_population(&self) -> f64 {
        let pops = self.fock_populations();
        pops.iter().rev().take(2).sum()
    }

    /// Reduced density matrix of logic ⊗ readout (motion traced out),
    /// indexed by `level * 2 + readout`.
    pub fn spin_density_matrix(&self) -> DMatrix<C64> {
        let dim = 2 * self.levels;
        let nf = self.fock_dim;
        DMatrix::from_fn(dim, dim, |i, j| {
            (0..nf)
                .map(|n| self.amplitudes[i * nf + n] * self.amplitudes[j * nf + n].conj())
                .sum()
        })
    }

    /// `Tr ρ²` of the spin reduced state; 1 iff spin and motion are unentangled.
    pub fn spin_purity(&self) -> f64 {
        let rho = self.spin_density_matrix();
        (&rho * &rho).trace().re
    }

    /// `⟨other|self⟩`.
    pub fn overlap(&self, other: &Self) -> C64 {
        other
            .amplitudes
            .iter()
            .zip(&self.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}
