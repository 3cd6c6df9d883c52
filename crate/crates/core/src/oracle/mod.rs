//! Exact density-matrix treatment of the atoms-only superradiance master
//! equation for a handful of atoms per ensemble.
//!
//! ```text
//! dρ/dt = −i(δ/2)[J_A^z − J_B^z, ρ] + γc·D[J^−]ρ + w·Σ_j D[σ_j^+]ρ
//! D[O]ρ = OρO† − ½{O†O, ρ}
//! ```
//!
//! Atoms `0..N` form ensemble A and `N..2N` ensemble B. Basis index bit `k`
//! set means atom `k` is excited. Density matrices are stored row-major and
//! vectorized as `vec(ρ)[i·D + j] = ρ_ij`, so `vec(AρB) = (A ⊗ Bᵀ)·vec(ρ)`.

mod fit;
mod sparse;

use std::ops::ControlFlow;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cumulant::{self, CumulantError};
use crate::model::ModelParams;
use crate::ode::{Dopri5, OdeError, Tolerances};
use crate::spectrum::{self, SpectrumResult};

pub use fit::{fit_gamma_delta, fit_gamma_delta_with, FitError, FitOptions, FitReport};
pub use sparse::CsrMatrix;

/// Largest N accepted without raising the limit explicitly.
pub const DEFAULT_MAX_N: u64 = 3;
/// N = 4 (Liouville dimension 65536) runs matrix-free; nothing larger is
/// supported.
pub const HARD_MAX_N: u64 = 4;
/// Largest N whose superoperator is assembled as a sparse matrix.
const ASSEMBLE_MAX_N: u64 = 3;
/// Largest zero-charge block solved densely when refining a steady state.
const SECTOR_SOLVE_MAX: usize = 2000;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("N = {n} atoms per ensemble exceeds the oracle budget of {max} (Liouville dimension 4^(2N) = {dim})")]
    TooLarge { n: u64, max: u64, dim: u128 },
    #[error("invalid parameters: {0}")]
    Params(#[from] crate::model::ModelError),
    #[error("propagation failed: {0}")]
    Propagation(#[from] OdeError),
    #[error("steady state not converged: residual {residual:e} above tolerance {tol:e}")]
    NonConvergence { residual: f64, tol: f64 },
    #[error("time grid must be finite, non-negative and non-decreasing")]
    BadTimeGrid,
    #[error("cumulant solver failed: {0}")]
    Cumulant(#[from] CumulantError),
    #[error("correlation fit failed: {0}")]
    Fit(#[from] FitError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecayMode {
    /// γc·D[J⁻] with J⁻ summed over both ensembles.
    Collective,
    /// γc·D[σ_j⁻] for every atom separately (validation only).
    IndependentDecay,
}

/// One contribution to the generator, recorded for inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Term {
    DetuningCommutator { delta: f64 },
    CollectiveDecay { rate: f64 },
    IndependentDecay { rate: f64, atoms: usize },
    Pump { rate: f64, atoms: usize },
}

#[derive(Debug, Clone)]
struct Jump {
    rate: f64,
    op: CsrMatrix,
    op_adj: CsrMatrix,
    /// O†O
    number: CsrMatrix,
}

impl Jump {
    fn new(rate: f64, op: CsrMatrix) -> Self {
        let op_adj = op.adjoint();
        let number = op_adj.matmul(&op);
        Self {
            rate,
            op,
            op_adj,
            number,
        }
    }
}

/// Generator of the master equation acting on vectorized density matrices.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    params: ModelParams,
    mode: DecayMode,
    hilbert_dim: usize,
    h_diag: Vec<f64>,
    jumps: Vec<Jump>,
    terms: Vec<Term>,
    assembled: Option<CsrMatrix>,
    j_minus: CsrMatrix,
}

fn lowering(atoms: usize, k: usize) -> CsrMatrix {
    let dim = 1usize << atoms;
    CsrMatrix::from_triplets(
        dim,
        dim,
        (0..dim)
            .filter(|i| i & (1 << k) != 0)
            .map(|i| (i ^ (1 << k), i, ONE))
            .collect(),
    )
}

fn collective_lowering(atoms: usize) -> CsrMatrix {
    let dim = 1usize << atoms;
    let mut triplets = Vec::new();
    for i in 0..dim {
        for k in 0..atoms {
            if i & (1 << k) != 0 {
                triplets.push((i ^ (1 << k), i, ONE));
            }
        }
    }
    CsrMatrix::from_triplets(dim, dim, triplets)
}

fn z_value(index: usize, atom: usize) -> f64 {
    if index & (1 << atom) != 0 {
        1.0
    } else {
        -1.0
    }
}

/// Builds the generator with the default size budget.
pub fn build_liouvillian(params: &ModelParams, mode: DecayMode) -> Result<Liouvillian, OracleError> {
    build_liouvillian_with(params, mode, DEFAULT_MAX_N)
}

/// Builds the generator allowing up to `max_n` atoms per ensemble (never
/// more than [`HARD_MAX_N`]).
pub fn build_liouvillian_with(
    params: &ModelParams,
    mode: DecayMode,
    max_n: u64,
) -> Result<Liouvillian, OracleError> {
    params.validate()?;
    let max = max_n.min(HARD_MAX_N);
    if params.n > max {
        return Err(OracleError::TooLarge {
            n: params.n,
            max,
            dim: 1u128 << (4 * params.n.min(31)),
        });
    }
    let n = params.n as usize;
    let atoms = 2 * n;
    let dim = 1usize << atoms;

    let mut terms = Vec::new();
    let h_diag: Vec<f64> = (0..dim)
        .map(|i| {
            let a: f64 = (0..n).map(|k| z_value(i, k)).sum();
            let b: f64 = (n..atoms).map(|k| z_value(i, k)).sum();
            // (δ/2)(J_A^z − J_B^z) with J^z = ½Σσ^z
            0.25 * params.delta * (a - b)
        })
        .collect();
    if params.delta != 0.0 {
        terms.push(Term::DetuningCommutator {
            delta: params.delta,
        });
    }

    let j_minus = collective_lowering(atoms);
    let mut jumps = Vec::new();
    match mode {
        DecayMode::Collective => {
            jumps.push(Jump::new(params.gamma_c, j_minus.clone()));
            terms.push(Term::CollectiveDecay {
                rate: params.gamma_c,
            });
        }
        DecayMode::IndependentDecay => {
            for k in 0..atoms {
                jumps.push(Jump::new(params.gamma_c, lowering(atoms, k)));
            }
            terms.push(Term::IndependentDecay {
                rate: params.gamma_c,
                atoms,
            });
        }
    }
    if params.w > 0.0 {
        for k in 0..atoms {
            jumps.push(Jump::new(params.w, lowering(atoms, k).transpose()));
        }
        terms.push(Term::Pump {
            rate: params.w,
            atoms,
        });
    }

    let mut liouvillian = Liouvillian {
        params: *params,
        mode,
        hilbert_dim: dim,
        h_diag,
        jumps,
        terms,
        assembled: None,
        j_minus,
    };
    if params.n <= ASSEMBLE_MAX_N {
        liouvillian.assembled = Some(liouvillian.assemble());
    }
    Ok(liouvillian)
}

impl Liouvillian {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn mode(&self) -> DecayMode {
        self.mode
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn hilbert_dim(&self) -> usize {
        self.hilbert_dim
    }

    /// Dimension of the space of vectorized density matrices, 4^(2N).
    pub fn dim(&self) -> usize {
        self.hilbert_dim * self.hilbert_dim
    }

    /// The assembled sparse superoperator, when the system is small enough.
    pub fn matrix(&self) -> Option<&CsrMatrix> {
        self.assembled.as_ref()
    }

    pub fn collective_lowering(&self) -> &CsrMatrix {
        &self.j_minus
    }

    fn assemble(&self) -> CsrMatrix {
        let d = self.hilbert_dim;
        let id = CsrMatrix::identity(d);
        let commutator: Vec<C64> = (0..d * d)
            .map(|idx| C64::new(0.0, -(self.h_diag[idx / d] - self.h_diag[idx % d])))
            .collect();
        let mut total = CsrMatrix::diagonal(&commutator);
        for jump in &self.jumps {
            let r = C64::new(jump.rate, 0.0);
            let half = C64::new(-0.5 * jump.rate, 0.0);
            total = total
                .add(&jump.op.kron(&jump.op.conj()).scale(r))
                .add(&jump.number.kron(&id).scale(half))
                .add(&id.kron(&jump.number.transpose()).scale(half));
        }
        total
    }

    /// `out = L(ρ)` for a vectorized ρ.
    pub fn apply_into(&self, rho: &[C64], out: &mut [C64]) {
        match &self.assembled {
            Some(m) => m.matvec_into(rho, out),
            None => self.apply_matrix_free(rho, out),
        }
    }

    pub fn apply(&self, rho: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; rho.len()];
        self.apply_into(rho, &mut out);
        out
    }

    /// Action computed from the Hilbert-space operators without assembling
    /// the superoperator.
    pub fn apply_matrix_free(&self, rho: &[C64], out: &mut [C64]) {
        let d = self.hilbert_dim;
        for (idx, o) in out.iter_mut().enumerate() {
            let (i, j) = (idx / d, idx % d);
            *o = rho[idx] * C64::new(0.0, -(self.h_diag[i] - self.h_diag[j]));
        }
        let mut tmp = vec![ZERO; d * d];
        for jump in &self.jumps {
            tmp.iter_mut().for_each(|v| *v = ZERO);
            jump.op.mul_dense_acc(rho, d, ONE, &mut tmp);
            jump.op_adj.dense_mul_acc(&tmp, d, C64::new(jump.rate, 0.0), out);
            let half = C64::new(-0.5 * jump.rate, 0.0);
            jump.number.mul_dense_acc(rho, d, half, out);
            jump.number.dense_mul_acc(rho, d, half, out);
        }
    }

    /// Heisenberg-picture action `L†(A) = i[H, A] + Σ r(O†AO − ½{O†O, A})`.
    pub fn apply_adjoint(&self, a: &[C64]) -> Vec<C64> {
        let d = self.hilbert_dim;
        let mut out: Vec<C64> = (0..d * d)
            .map(|idx| a[idx] * C64::new(0.0, self.h_diag[idx / d] - self.h_diag[idx % d]))
            .collect();
        let mut tmp = vec![ZERO; d * d];
        for jump in &self.jumps {
            tmp.iter_mut().for_each(|v| *v = ZERO);
            jump.op_adj.mul_dense_acc(a, d, ONE, &mut tmp);
            jump.op.dense_mul_acc(&tmp, d, C64::new(jump.rate, 0.0), &mut out);
            let half = C64::new(-0.5 * jump.rate, 0.0);
            jump.number.mul_dense_acc(a, d, half, &mut out);
            jump.number.dense_mul_acc(a, d, half, &mut out);
        }
        out
    }

    /// Propagates `x0` under `dx/dt = L(x)`, handing the state to `sample`
    /// at every requested time.
    fn propagate<S>(&self, x0: Vec<C64>, times: &[f64], tol: f64, mut sample: S) -> Result<Vec<C64>, OracleError>
    where
        S: FnMut(usize, &[C64]),
    {
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) || times.windows(2).any(|w| w[1] < w[0]) {
            return Err(OracleError::BadTimeGrid);
        }
        let mut x = x0;
        let mut t = 0.0;
        let mut stepper = Dopri5::new(x.len(), Tolerances::uniform(tol));
        let mut rhs = |_t: f64, y: &[C64], dy: &mut [C64]| self.apply_into(y, dy);
        for (k, &target) in times.iter().enumerate() {
            if target > t {
                stepper.advance(&mut rhs, &mut t, &mut x, target, |_, _, _| ControlFlow::Continue(()))?;
            }
            sample(k, &x);
        }
        Ok(x)
    }
}

/// Density matrix of `2n` two-level atoms, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n: u64,
    dim: usize,
    data: Vec<C64>,
}

impl DensityMatrix {
    pub fn from_vec(n: u64, data: Vec<C64>) -> Self {
        let dim = 1usize << (2 * n);
        assert_eq!(data.len(), dim * dim, "density matrix size mismatch");
        Self { n, dim, data }
    }

    pub fn maximally_mixed(n: u64) -> Self {
        let dim = 1usize << (2 * n);
        let mut data = vec![ZERO; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = C64::new(1.0 / dim as f64, 0.0);
        }
        Self { n, dim, data }
    }

    pub fn pure(n: u64, psi: &[C64]) -> Self {
        let dim = 1usize << (2 * n);
        assert_eq!(psi.len(), dim);
        let data = (0..dim * dim)
            .map(|idx| psi[idx / dim] * psi[idx % dim].conj())
            .collect();
        Self { n, dim, data }
    }

    /// Every atom in the ground state.
    pub fn all_ground(n: u64) -> Self {
        let dim = 1usize << (2 * n);
        let mut psi = vec![ZERO; dim];
        psi[0] = ONE;
        Self::pure(n, &psi)
    }

    /// `single^{⊗2n}` for a 2×2 single-atom matrix in the (ground, excited)
    /// basis ordering of the bit convention.
    pub fn tensor_power(n: u64, single: [[C64; 2]; 2]) -> Self {
        let atoms = 2 * n as usize;
        let dim = 1usize << atoms;
        let data = (0..dim * dim)
            .map(|idx| {
                let (i, j) = (idx / dim, idx % dim);
                (0..atoms).fold(ONE, |acc, k| acc * single[(i >> k) & 1][(j >> k) & 1])
            })
            .collect();
        Self { n, dim, data }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.dim + j]
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Largest entry of `ρ − ρ†`.
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in i..self.dim {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    fn hermitian_part(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| 0.5 * (self.get(i, j) + self.get(j, i).conj()))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.hermitian_part()
            .symmetric_eigenvalues()
            .iter()
            .fold(f64::INFINITY, |m, &v| m.min(v))
    }

    /// Largest absolute entry of the difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    fn symmetrized(mut self) -> Self {
        let d = self.dim;
        for i in 0..d {
            for j in i..d {
                let avg = 0.5 * (self.data[i * d + j] + self.data[j * d + i].conj());
                self.data[i * d + j] = avg;
                self.data[j * d + i] = avg.conj();
            }
        }
        let tr = self.trace().re;
        self.data.iter_mut().for_each(|v| *v /= tr);
        self
    }

    /// Relabels atoms: atom `k` of the result is atom `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let atoms = 2 * self.n as usize;
        assert_eq!(perm.len(), atoms);
        let map = |i: usize| (0..atoms).fold(0usize, |acc, k| acc | (((i >> perm[k]) & 1) << k));
        let mut data = vec![ZERO; self.dim * self.dim];
        for i in 0..self.dim {
            for j in 0..self.dim {
                data[map(i) * self.dim + map(j)] = self.get(i, j);
            }
        }
        Self {
            n: self.n,
            dim: self.dim,
            data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Observable {
    /// `<σ^z>` averaged over all atoms.
    SzPerAtom,
    /// `<σ_i^+ σ_j^->` averaged over ordered pairs of distinct atoms in the
    /// same ensemble (zero when N = 1).
    IntraCoherence,
    /// `<σ_Ai^+ σ_Bj^->` averaged over all cross-ensemble pairs.
    CrossCoherence,
    /// `<J^+ J^->` with `J^-` summed over both ensembles.
    CollectiveIntensity,
}

/// `<σ_i^+ σ_j^->` for i ≠ j.
fn pair_coherence(rho: &DensityMatrix, i: usize, j: usize) -> C64 {
    // Tr(σi⁺σj⁻ρ) = Σ_b ρ[b, a] with a = σi⁺σj⁻ b
    let mut acc = ZERO;
    for b in 0..rho.dim {
        if b & (1 << j) != 0 && b & (1 << i) == 0 {
            let a = b ^ (1 << j) ^ (1 << i);
            acc += rho.get(b, a);
        }
    }
    acc
}

fn excited_population(rho: &DensityMatrix, k: usize) -> f64 {
    (0..rho.dim)
        .filter(|i| i & (1 << k) != 0)
        .map(|i| rho.get(i, i).re)
        .sum()
}

pub fn expectation(rho: &DensityMatrix, observable: Observable) -> C64 {
    let n = rho.n as usize;
    let atoms = 2 * n;
    match observable {
        Observable::SzPerAtom => {
            let total: f64 = (0..atoms).map(|k| 2.0 * excited_population(rho, k) - 1.0).sum();
            C64::new(total / atoms as f64, 0.0)
        }
        Observable::IntraCoherence => {
            if n < 2 {
                return ZERO;
            }
            let mut acc = ZERO;
            let mut count = 0usize;
            for ensemble in [0..n, n..atoms] {
                for i in ensemble.clone() {
                    for j in ensemble.clone() {
                        if i != j {
                            acc += pair_coherence(rho, i, j);
                            count += 1;
                        }
                    }
                }
            }
            acc / count as f64
        }
        Observable::CrossCoherence => {
            let mut acc = ZERO;
            for i in 0..n {
                for j in n..atoms {
                    acc += pair_coherence(rho, i, j);
                }
            }
            acc / (n * n) as f64
        }
        Observable::CollectiveIntensity => {
            let mut acc = ZERO;
            for i in 0..atoms {
                acc += excited_population(rho, i);
                for j in 0..atoms {
                    if i != j {
                        acc += pair_coherence(rho, i, j);
                    }
                }
            }
            acc
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateOptions {
    /// Required Frobenius norm of `L(ρ)`.
    pub tol: f64,
    /// Residual at which evolution hands over to the dense block solve.
    pub march_tol: f64,
    pub integrator_tol: f64,
    pub max_time: f64,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            march_tol: 1e-4,
            integrator_tol: 1e-10,
            max_time: 1e5,
        }
    }
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Stationary state reached from the maximally mixed state.
pub fn oracle_steady_state(liouvillian: &Liouvillian, tol: f64) -> Result<DensityMatrix, OracleError> {
    oracle_steady_state_with(
        liouvillian,
        &SteadyStateOptions {
            tol,
            ..SteadyStateOptions::default()
        },
    )
}

pub fn oracle_steady_state_with(
    liouvillian: &Liouvillian,
    opts: &SteadyStateOptions,
) -> Result<DensityMatrix, OracleError> {
    let n = liouvillian.params.n;
    let d = liouvillian.hilbert_dim;
    let can_solve = liouvillian.assembled.is_some() && sector_indices(d).len() <= SECTOR_SOLVE_MAX;
    let march_tol = if can_solve { opts.march_tol.max(opts.tol) } else { opts.tol };

    let rho = evolve_until_stationary(liouvillian, DensityMatrix::maximally_mixed(n).data, march_tol, opts)?;
    let mut rho = DensityMatrix::from_vec(n, rho).symmetrized();
    let mut residual = norm(&liouvillian.apply(&rho.data));

    if residual > opts.tol && can_solve {
        if let Some(solved) = solve_zero_charge_block(liouvillian) {
            let solved = DensityMatrix::from_vec(n, solved).symmetrized();
            let r = norm(&liouvillian.apply(&solved.data));
            if r < residual {
                rho = solved;
                residual = r;
            }
        }
    }
    if residual > opts.tol {
        // non-unique or slow fixed point: keep evolving
        let data = evolve_until_stationary(liouvillian, rho.data, opts.tol, opts)?;
        rho = DensityMatrix::from_vec(n, data).symmetrized();
        residual = norm(&liouvillian.apply(&rho.data));
    }
    if residual > opts.tol {
        return Err(OracleError::NonConvergence {
            residual,
            tol: opts.tol,
        });
    }
    Ok(rho)
}

fn evolve_until_stationary(
    liouvillian: &Liouvillian,
    mut x: Vec<C64>,
    target: f64,
    opts: &SteadyStateOptions,
) -> Result<Vec<C64>, OracleError> {
    if norm(&liouvillian.apply(&x)) <= target {
        return Ok(x);
    }
    let mut t = 0.0;
    let mut stepper = Dopri5::new(x.len(), Tolerances::uniform(opts.integrator_tol));
    let mut rhs = |_t: f64, y: &[C64], dy: &mut [C64]| liouvillian.apply_into(y, dy);
    stepper.advance(&mut rhs, &mut t, &mut x, opts.max_time, |_, _, dy| {
        if norm(dy) <= target {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })?;
    Ok(x)
}

/// Vectorized indices `(i, j)` with equal excitation numbers in ket and bra.
/// The generator conserves this difference, and the stationary state from a
/// diagonal start lives entirely inside the zero block.
fn sector_indices(d: usize) -> Vec<usize> {
    (0..d * d)
        .filter(|idx| (idx / d).count_ones() == (idx % d).count_ones())
        .collect()
}

fn solve_zero_charge_block(liouvillian: &Liouvillian) -> Option<Vec<C64>> {
    let matrix = liouvillian.assembled.as_ref()?;
    let d = liouvillian.hilbert_dim;
    let sector = sector_indices(d);
    let mut position = vec![usize::MAX; d * d];
    for (p, &idx) in sector.iter().enumerate() {
        position[idx] = p;
    }
    let m = sector.len();
    let mut a = DMatrix::<C64>::zeros(m, m);
    for (p, &idx) in sector.iter().enumerate() {
        for (col, v) in matrix.row(idx) {
            let q = position[col];
            debug_assert!(q != usize::MAX, "generator leaks out of the zero-charge block");
            a[(p, q)] = v;
        }
    }
    // Replace the first equation with the trace condition.
    for q in 0..m {
        a[(0, q)] = ZERO;
    }
    for i in 0..d {
        a[(0, position[i * d + i])] = ONE;
    }
    let mut b = nalgebra::DVector::<C64>::zeros(m);
    b[0] = ONE;
    let x = a.lu().solve(&b)?;
    if x.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return None;
    }
    let mut out = vec![ZERO; d * d];
    for (p, &idx) in sector.iter().enumerate() {
        out[idx] = x[p];
    }
    Some(out)
}

/// Density matrices at the requested times, starting from `rho0` at t = 0.
pub fn evolve(
    rho0: &DensityMatrix,
    liouvillian: &Liouvillian,
    times: &[f64],
    tol: f64,
) -> Result<Vec<DensityMatrix>, OracleError> {
    let mut out = Vec::with_capacity(times.len());
    liouvillian.propagate(rho0.data.clone(), times, tol, |_, x| {
        out.push(DensityMatrix::from_vec(rho0.n, x.to_vec()));
    })?;
    Ok(out)
}

/// Samples of `<J^+(τ) J^-(0)>` in the stationary state.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSeries {
    pub taus: Vec<f64>,
    pub values: Vec<C64>,
}

/// Quantum regression: evolve `B(0) = J^- ρ_ss` with the same generator and
/// sample `Tr(J^+ B(τ))`.
pub fn two_time_correlation(
    rho_ss: &DensityMatrix,
    liouvillian: &Liouvillian,
    tau_grid: &[f64],
) -> Result<CorrelationSeries, OracleError> {
    two_time_correlation_with(rho_ss, liouvillian, tau_grid, 1e-11)
}

pub fn two_time_correlation_with(
    rho_ss: &DensityMatrix,
    liouvillian: &Liouvillian,
    tau_grid: &[f64],
    tol: f64,
) -> Result<CorrelationSeries, OracleError> {
    let d = liouvillian.hilbert_dim;
    let j_minus = &liouvillian.j_minus;
    let mut b0 = vec![ZERO; d * d];
    j_minus.mul_dense_acc(&rho_ss.data, d, ONE, &mut b0);

    // Tr(J⁺B) = Σ_{a,b} (J⁺)_{ab} B_{ba} = Σ over J⁻ entries (b, a): conj(v)·B_{ba}
    let entries: Vec<(usize, usize, C64)> = j_minus.triplets().collect();
    let mut values = vec![ZERO; tau_grid.len()];
    liouvillian.propagate(b0, tau_grid, tol, |k, x| {
        values[k] = entries.iter().map(|&(b, a, v)| v.conj() * x[b * d + a]).sum();
    })?;
    Ok(CorrelationSeries {
        taus: tau_grid.to_vec(),
        values,
    })
}

/// One row of the exact-versus-cumulant comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub params: ModelParams,
    pub sz_oracle: f64,
    pub sz_cumulant: f64,
    pub gamma_oracle: f64,
    pub gamma_cumulant: f64,
    pub delta_oracle: f64,
    pub delta_cumulant: f64,
    pub fit_residual: f64,
}

impl OracleComparison {
    /// `|sz_cumulant − sz_oracle| / |sz_oracle|`.
    pub fn sz_relative_deviation(&self) -> f64 {
        (self.sz_cumulant - self.sz_oracle).abs() / self.sz_oracle.abs()
    }
}

/// Default correlation window: long enough for the slowest single-atom
/// coherence `exp(−(w+γc)τ/2)` to decay by ~e^-12.
pub fn default_tau_grid(params: &ModelParams, points: usize) -> Vec<f64> {
    let horizon = 24.0 / (params.w + params.gamma_c);
    (0..points).map(|k| horizon * k as f64 / (points - 1) as f64).collect()
}

/// Solves one parameter point with both the exact oracle (collective mode)
/// and the cumulant equations.
pub fn compare_with_cumulant(params: &ModelParams) -> Result<OracleComparison, OracleError> {
    let liouvillian = build_liouvillian(params, DecayMode::Collective)?;
    let rho = oracle_steady_state(&liouvillian, 1e-10)?;
    let series = two_time_correlation(&rho, &liouvillian, &default_tau_grid(params, 601))?;
    let fit = fit_gamma_delta(&series)?;

    let ss = cumulant::steady_state(params, 1e-12)?;
    let cumulant_spectrum: SpectrumResult = spectrum::gamma_delta(params, ss.state.sz);

    Ok(OracleComparison {
        params: *params,
        sz_oracle: expectation(&rho, Observable::SzPerAtom).re,
        sz_cumulant: ss.state.sz,
        gamma_oracle: fit.result.gamma,
        gamma_cumulant: cumulant_spectrum.gamma,
        delta_oracle: fit.result.delta_mod,
        delta_cumulant: cumulant_spectrum.delta_mod,
        fit_residual: fit.residual,
    })
}
