//! Time-dependent Schrödinger integration for small dense Hamiltonians.
//!
//! Steps use the sixth-order Magnus integrator on three Gauss-Legendre nodes;
//! each step exponential is formed from a Hermitian eigendecomposition, so the
//! per-step propagator is unitary to rounding error. Step counts are chosen by
//! doubling until two successive propagators agree to a tolerance.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct IntegratorOptions {
    /// Max element-wise difference accepted between the N- and 2N-step propagators.
    pub tolerance: f64,
    pub initial_steps: usize,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            initial_steps: 64,
            max_steps: 1 << 15,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Propagation {
    pub propagator: DMatrix<C64>,
    pub steps: usize,
    /// Step-doubling deviation of the accepted propagator.
    pub deviation: f64,
    /// Largest population of the top two basis states seen by the evolved
    /// first basis vector over the whole trajectory.
    pub max_edge_population: f64,
}

/// `exp(-i h)` for Hermitian `h`.
pub fn expm_hermitian(h: &DMatrix<C64>) -> DMatrix<C64> {
    let herm = (h + h.adjoint()) * C64::new(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    let v = &eig.eigenvectors;
    let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::from_polar(1.0, -l)));
    v * phases * v.adjoint()
}

fn commutator(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a * b - b * a
}

/// One sixth-order Magnus step exponent, returned as the Hermitian generator
/// `H_eff` with `U_step = exp(-i H_eff)`.
fn magnus6_generator<H>(hamiltonian: &H, t: f64, h: f64) -> DMatrix<C64>
where
    H: Fn(f64) -> DMatrix<C64>,
{
    let c = 15f64.sqrt() / 10.0;
    let mi = C64::new(0.0, -1.0);
    let a1 = hamiltonian(t + (0.5 - c) * h) * mi;
    let a2 = hamiltonian(t + 0.5 * h) * mi;
    let a3 = hamiltonian(t + (0.5 + c) * h) * mi;
    let re = |x: f64| C64::new(x, 0.0);

    let alpha1 = &a2 * re(h);
    let alpha2 = (&a3 - &a1) * re(15f64.sqrt() * h / 3.0);
    let alpha3 = (&a3 - &a2 * re(2.0) + &a1) * re(10.0 * h / 3.0);
    let c1 = commutator(&alpha1, &alpha2);
    let c2 = commutator(&alpha1, &(&alpha3 * re(2.0) + &c1)) * re(-1.0 / 60.0);
    let left = &alpha1 * re(-20.0) - &alpha3 + &c1;
    let right = &alpha2 + &c2;
    let omega = &alpha1 + &alpha3 * re(1.0 / 12.0) + commutator(&left, &right) * re(1.0 / 240.0);
    // Ω = -i H_eff
    omega * C64::new(0.0, 1.0)
}

fn edge_population(u: &DMatrix<C64>) -> f64 {
    let dim = u.nrows();
    (dim.saturating_sub(2)..dim).map(|r| u[(r, 0)].norm_sqr()).sum()
}

/// Fixed-step propagation from `0` to `t_final`.
pub fn propagate<H>(dim: usize, hamiltonian: &H, t_final: f64, steps: usize) -> (DMatrix<C64>, f64)
where
    H: Fn(f64) -> DMatrix<C64>,
{
    let h = t_final / steps as f64;
    let mut u = DMatrix::<C64>::identity(dim, dim);
    let mut edge = 0.0f64;
    for j in 0..steps {
        let step = expm_hermitian(&magnus6_generator(hamiltonian, j as f64 * h, h));
        u = step * u;
        edge = edge.max(edge_population(&u));
    }
    (u, edge)
}

/// Step-doubling propagation to the requested tolerance.
pub fn integrate<H>(
    dim: usize,
    hamiltonian: &H,
    t_final: f64,
    options: &IntegratorOptions,
) -> Result<Propagation>
where
    H: Fn(f64) -> DMatrix<C64>,
{
    let mut steps = options.initial_steps.max(1);
    let (mut prev, _) = propagate(dim, hamiltonian, t_final, steps);
    loop {
        let next_steps = steps * 2;
        if next_steps > options.max_steps {
            let (candidate, _) = propagate(dim, hamiltonian, t_final, steps);
            let deviation = (&candidate - &prev).camax();
            return Err(Error::IntegratorTolerance { steps, deviation });
        }
        let (next, edge) = propagate(dim, hamiltonian, t_final, next_steps);
        let deviation = (&next - &prev).camax();
        if deviation < options.tolerance {
            return Ok(Propagation {
                propagator: next,
                steps: next_steps,
                deviation,
                max_edge_population: edge,
            });
        }
        prev = next;
        steps = next_steps;
    }
}
