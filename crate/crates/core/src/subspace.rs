//! Online estimation of the identifiable-subspace projector.
//!
//! The estimator carries three symmetric matrices: the filtered Gram `Q`,
//! the filtered kernel projector `P̄`, and the projector estimate `P`:
//!
//! ```text
//! dQ/dt = −βQ + φφᵀ
//! dP̄/dt = −γP̄ + N̄N̄ᵀ
//! dP/dt = −γP + γI − γ²P̄
//! ```
//!
//! `N̄` is an orthonormal kernel basis of `Q`, sampled at multiples of the
//! hold period `δ` and held in between.

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::regression::RegressorSignal;
use crate::simkit::{grid_multiple, OdeSystem, Rk4};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubspaceHyperParams {
    /// Forgetting rate of the filtered Gram.
    pub beta: f64,
    pub gamma: f64,
    /// Hold period of the kernel basis.
    pub delta: f64,
    #[serde(default = "default_rank_tol")]
    pub rank_tol: f64,
}

fn default_rank_tol() -> f64 {
    1e-8
}

impl Default for SubspaceHyperParams {
    fn default() -> Self {
        SubspaceHyperParams {
            beta: 1.0,
            gamma: 1.0,
            delta: 1.0,
            rank_tol: default_rank_tol(),
        }
    }
}

impl SubspaceHyperParams {
    /// Checks positivity and returns the number of integrator steps per
    /// hold period.
    pub fn hold_steps(&self, step: f64) -> Result<u64> {
        for (name, v) in [
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("rank_tol", self.rank_tol),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        grid_multiple(self.delta, step, "delta")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceEstimatorState {
    pub q: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub p_bar: DMatrix<f64>,
    /// Held kernel basis (`n × m`, possibly `m = 0`).
    pub nu_bar: DMatrix<f64>,
    pub t: f64,
    /// Index of the current hold period.
    pub k: u64,
    /// Integrator steps taken so far.
    pub steps: u64,
}

impl SubspaceEstimatorState {
    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    /// `Ṗ` from the right-hand side (never by differencing).
    pub fn p_dot(&self, gamma: f64) -> DMatrix<f64> {
        p_dot(gamma, &self.p, &self.p_bar)
    }

    fn pack(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(3 * self.q.len());
        x.extend_from_slice(self.q.as_slice());
        x.extend_from_slice(self.p_bar.as_slice());
        x.extend_from_slice(self.p.as_slice());
        x
    }

    fn unpack(&mut self, x: &[f64]) {
        let m = self.q.len();
        self.q.copy_from_slice(&x[..m]);
        self.p_bar.copy_from_slice(&x[m..2 * m]);
        self.p.copy_from_slice(&x[2 * m..3 * m]);
    }
}

pub fn p_dot(gamma: f64, p: &DMatrix<f64>, p_bar: &DMatrix<f64>) -> DMatrix<f64> {
    let n = p.nrows();
    p * (-gamma) + DMatrix::identity(n, n) * gamma - p_bar * (gamma * gamma)
}

/// Zero matrices and the full-space kernel basis.
pub fn subspace_init(n: usize, hp: &SubspaceHyperParams, step: f64) -> Result<SubspaceEstimatorState> {
    if n == 0 {
        return Err(Error::config("dimension must be at least 1"));
    }
    hp.hold_steps(step)?;
    Ok(SubspaceEstimatorState {
        q: DMatrix::zeros(n, n),
        p: DMatrix::zeros(n, n),
        p_bar: DMatrix::zeros(n, n),
        nu_bar: DMatrix::identity(n, n),
        t: 0.0,
        k: 0,
        steps: 0,
    })
}

/// Orthonormal basis of the numerical kernel of symmetric `q`: eigenvectors
/// whose singular value is at most `rank_tol·max(σ_max, 1)`.
pub fn kernel_basis(q: &DMatrix<f64>, rank_tol: f64) -> Result<DMatrix<f64>> {
    let n = q.nrows();
    if q.ncols() != n {
        return Err(Error::contract("kernel basis needs a square matrix"));
    }
    let asym = linalg::asymmetry(q);
    if asym > 1e-10 {
        return Err(Error::contract(format!("matrix is not symmetric (asymmetry {asym:e})")));
    }
    let (vals, vecs) = linalg::sym_eigen(q);
    let smax = vals.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let cut = rank_tol * smax.max(1.0);
    let keep: Vec<usize> = (0..n).filter(|&k| vals[k].abs() <= cut).collect();
    let mut out = DMatrix::zeros(n, keep.len());
    for (dst, &k) in keep.iter().enumerate() {
        out.set_column(dst, &vecs.column(k));
    }
    Ok(linalg::with_canonical_signs(out))
}

/// Right-hand side of the three matrix ODEs on flat column-major blocks
/// `[Q, P̄, P]`. Shared by the standalone estimator, the learner and the
/// network so all of them discretize identically.
pub(crate) fn subspace_rhs(
    beta: f64,
    gamma: f64,
    hold_proj: &DMatrix<f64>,
    phi: &DVector<f64>,
    x: &[f64],
    dx: &mut [f64],
) {
    let n = phi.len();
    let m = n * n;
    let q = DMatrixView::from_slice(&x[..m], n, n);
    let p_bar = DMatrixView::from_slice(&x[m..2 * m], n, n);
    let p = DMatrixView::from_slice(&x[2 * m..3 * m], n, n);
    {
        let mut dq = DMatrixViewMut::from_slice(&mut dx[..m], n, n);
        dq.copy_from(&q);
        dq *= -beta;
        dq.ger(1.0, phi, phi, 1.0);
    }
    {
        let mut dpb = DMatrixViewMut::from_slice(&mut dx[m..2 * m], n, n);
        dpb.copy_from(hold_proj);
        dpb.zip_apply(&p_bar, |d, v| *d -= gamma * v);
    }
    let mut dp = DMatrixViewMut::from_slice(&mut dx[2 * m..3 * m], n, n);
    dp.copy_from(&p);
    dp *= -gamma;
    let g2 = gamma * gamma;
    dp.zip_apply(&p_bar, |d, v| *d -= g2 * v);
    for i in 0..n {
        dp[(i, i)] += gamma;
    }
}

/// Symmetrize an `n × n` block stored column-major in `x`.
pub(crate) fn symmetrize_block(x: &mut [f64], n: usize) {
    for j in 0..n {
        for i in (j + 1)..n {
            let a = 0.5 * (x[i + j * n] + x[j + i * n]);
            x[i + j * n] = a;
            x[j + i * n] = a;
        }
    }
}

/// The estimator driven by a known regressor, as an ODE over `[Q, P̄, P]`.
pub struct SubspaceSystem<'a> {
    hp: SubspaceHyperParams,
    regressor: &'a dyn RegressorSignal,
    hold_steps: u64,
    nu_bar: DMatrix<f64>,
    hold_proj: DMatrix<f64>,
}

impl<'a> SubspaceSystem<'a> {
    pub fn new(hp: SubspaceHyperParams, regressor: &'a dyn RegressorSignal, step: f64) -> Result<Self> {
        let n = regressor.dim();
        let hold_steps = hp.hold_steps(step)?;
        Ok(SubspaceSystem {
            hp,
            regressor,
            hold_steps,
            nu_bar: DMatrix::identity(n, n),
            hold_proj: DMatrix::identity(n, n),
        })
    }

    pub fn initial_state(&self) -> Vec<f64> {
        vec![0.0; 3 * self.regressor.dim().pow(2)]
    }

    pub fn held_basis(&self) -> &DMatrix<f64> {
        &self.nu_bar
    }

    fn set_basis(&mut self, nu_bar: DMatrix<f64>) {
        self.hold_proj = &nu_bar * nu_bar.transpose();
        self.nu_bar = nu_bar;
    }

    /// Unpack a flat state into `(Q, P̄, P)`.
    pub fn matrices(&self, x: &[f64]) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let n = self.regressor.dim();
        let m = n * n;
        (
            DMatrix::from_column_slice(n, n, &x[..m]),
            DMatrix::from_column_slice(n, n, &x[m..2 * m]),
            DMatrix::from_column_slice(n, n, &x[2 * m..3 * m]),
        )
    }
}

impl OdeSystem for SubspaceSystem<'_> {
    fn dim(&self) -> usize {
        3 * self.regressor.dim().pow(2)
    }

    fn rhs(&self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
        let phi = self.regressor.eval(t);
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Evaluation {
                source_name: self.regressor.name().to_string(),
                t,
            });
        }
        subspace_rhs(self.hp.beta, self.hp.gamma, &self.hold_proj, &phi, x, dx);
        Ok(())
    }

    fn block_name(&self, index: usize) -> String {
        let m = self.regressor.dim().pow(2);
        ["Q", "Pbar", "P"][(index / m).min(2)].to_string()
    }

    fn at_node(&mut self, step: u64, _t: f64, x: &mut [f64]) -> Result<()> {
        let n = self.regressor.dim();
        let m = n * n;
        for b in 0..3 {
            symmetrize_block(&mut x[b * m..(b + 1) * m], n);
        }
        if step % self.hold_steps == 0 {
            let q = DMatrix::from_column_slice(n, n, &x[..m]);
            self.set_basis(kernel_basis(&q, self.hp.rank_tol)?);
        }
        Ok(())
    }
}

/// Advance a standalone estimator state by one RK4 step of size `h`,
/// refreshing the held kernel basis when the new time is a hold instant.
pub fn subspace_step(
    state: &mut SubspaceEstimatorState,
    hp: &SubspaceHyperParams,
    regressor: &dyn RegressorSignal,
    h: f64,
) -> Result<()> {
    let n = state.dim();
    if regressor.dim() != n {
        return Err(Error::contract("regressor and estimator dimensions differ"));
    }
    let hold = hp.hold_steps(h)?;
    let mut sys = SubspaceSystem::new(*hp, regressor, h)?;
    sys.set_basis(state.nu_bar.clone());
    let mut x = state.pack();
    Rk4::new(x.len()).step(&sys, state.t, &mut x, h)?;
    for b in 0..3 {
        symmetrize_block(&mut x[b * n * n..(b + 1) * n * n], n);
    }
    state.unpack(&x);
    state.steps += 1;
    state.t = state.steps as f64 * h;
    if state.steps % hold == 0 {
        state.nu_bar = kernel_basis(&state.q, hp.rank_tol)?;
        state.k = state.steps / hold;
    }
    Ok(())
}

/// `‖P − N_dN_dᵀ‖₂`.
pub fn subspace_error(p: &DMatrix<f64>, n_d: &DMatrix<f64>) -> Result<f64> {
    if p.nrows() != n_d.nrows() || p.ncols() != p.nrows() {
        return Err(Error::contract("projector and basis shapes disagree"));
    }
    Ok(linalg::spectral_norm(&(p - n_d * n_d.transpose())))
}

/// Factor `P ≈ P_dP_dᵀ` from the eigenpairs of `P` above `eig_threshold`,
/// columns ordered by decreasing eigenvalue.
pub fn identifiable_factor(p: &DMatrix<f64>, eig_threshold: f64) -> DMatrix<f64> {
    let n = p.nrows();
    let mut sym = p.clone();
    linalg::symmetrize(&mut sym);
    let (vals, vecs) = linalg::sym_eigen(&sym);
    let keep: Vec<usize> = (0..n).rev().filter(|&k| vals[k] > eig_threshold).collect();
    let mut out = DMatrix::zeros(n, keep.len());
    for (dst, &k) in keep.iter().enumerate() {
        out.set_column(dst, &(vecs.column(k) * vals[k].sqrt()));
    }
    linalg::with_canonical_signs(out)
}
