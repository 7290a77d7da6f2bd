//! Numerical check of the exponential-tracking property of perturbed stable
//! LTV systems `ẋ = Υ(t)x + u(t)`.
//!
//! Given a stable `Υ*` with spectral abscissa `−υ`, a perturbation with
//! `‖Υ(t) − Υ*‖ ≤ ρa·e^{−ρb t}` and an input with `‖u(t) − u*(t)‖ ≤ ρc·e^{−ρd t}`,
//! the state tracks the reference `x*(t) = ∫₀ᵗ e^{Υ*(t−τ)} u*(τ) dτ` at any rate
//! below `min{υ, ρb, ρd}`. When `u*` itself decays at `ρg`, `x` decays at any
//! rate below `min{υ, ρb, ρd, ρg}`.

use nalgebra::{DMatrix, DVector};

use super::fit::decay_rate_fit;
use super::hurwitz::spectral_abscissa;
use super::noise::NoiseChannel;
use super::ode::{integrate, IntegratorConfig, OdeSystem};
use crate::error::{Error, Result};
use crate::linalg;

/// Unperturbed input of the reference system.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceInput {
    /// `u*(t) = a ⊙ sin(ω t + φ)` component-wise.
    Sinusoid {
        amplitude: DVector<f64>,
        frequency: DVector<f64>,
        phase: DVector<f64>,
    },
    /// `u*(t) = e^{−ρg t} v`.
    Decaying { direction: DVector<f64>, rate: f64 },
}

impl ReferenceInput {
    fn eval(&self, t: f64) -> DVector<f64> {
        match self {
            ReferenceInput::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => DVector::from_iterator(
                amplitude.len(),
                (0..amplitude.len()).map(|k| amplitude[k] * (frequency[k] * t + phase[k]).sin()),
            ),
            ReferenceInput::Decaying { direction, rate } => direction * (-rate * t).exp(),
        }
    }

    fn decay_rate(&self) -> Option<f64> {
        match self {
            ReferenceInput::Decaying { rate, .. } => Some(*rate),
            ReferenceInput::Sinusoid { .. } => None,
        }
    }
}

/// One synthetic instance of the perturbed LTV system.
#[derive(Debug, Clone, PartialEq)]
pub struct LtvInstance {
    pub upsilon_star: DMatrix<f64>,
    /// Perturbation direction; normalized to unit spectral norm on use.
    pub matrix_perturbation: DMatrix<f64>,
    pub rho_a: f64,
    pub rho_b: f64,
    /// Input perturbation direction; normalized to unit length on use.
    pub input_perturbation: DVector<f64>,
    pub rho_c: f64,
    pub rho_d: f64,
    pub reference_input: ReferenceInput,
    pub x0: DVector<f64>,
    pub horizon: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LtvReport {
    pub stability_margin: f64,
    pub tracking_rate: f64,
    pub tracking_required: f64,
    /// `(fitted, required)` decay of `‖x‖` when the reference input decays.
    pub state_decay: Option<(f64, f64)>,
    pub passed: bool,
}

/// Reference `x*` and gap `e = x − x*` integrated together. Carrying the gap
/// explicitly keeps its decaying forcing separate from the persistent
/// reference, so truncation error in `x*` does not floor the gap.
struct Joint<'a> {
    inst: &'a LtvInstance,
    e: DMatrix<f64>,
    du: DVector<f64>,
    n: usize,
}

impl OdeSystem for Joint<'_> {
    fn dim(&self) -> usize {
        2 * self.n
    }

    fn rhs(&self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
        let n = self.n;
        let inst = self.inst;
        let xs = DVector::from_column_slice(&x[..n]);
        let gap = DVector::from_column_slice(&x[n..]);
        let pert = &self.e * (inst.rho_a * (-inst.rho_b * t).exp());
        let dref = &inst.upsilon_star * &xs + inst.reference_input.eval(t);
        let dgap = &inst.upsilon_star * &gap
            + &pert * (&xs + &gap)
            + &self.du * (inst.rho_c * (-inst.rho_d * t).exp());
        dx[..n].copy_from_slice(dref.as_slice());
        dx[n..].copy_from_slice(dgap.as_slice());
        Ok(())
    }

    fn block_name(&self, index: usize) -> String {
        if index < self.n {
            format!("reference[{index}]")
        } else {
            format!("gap[{}]", index - self.n)
        }
    }
}

/// Run one instance and compare fitted decay rates with the guaranteed ones
/// (with a 0.9 safety factor).
pub fn ltv_convergence_harness(inst: &LtvInstance) -> Result<LtvReport> {
    let n = inst.upsilon_star.nrows();
    if n == 0 || inst.upsilon_star.ncols() != n {
        return Err(Error::config("Υ* must be a non-empty square matrix"));
    }
    if inst.matrix_perturbation.shape() != (n, n)
        || inst.input_perturbation.len() != n
        || inst.x0.len() != n
    {
        return Err(Error::config("perturbation and state dimensions disagree with Υ*"));
    }
    let margin = -spectral_abscissa(&inst.upsilon_star);
    if !(margin > 0.0) {
        return Err(Error::config(format!(
            "Υ* is not stable (spectral abscissa {})",
            -margin
        )));
    }
    for (name, v) in [
        ("rho_a", inst.rho_a),
        ("rho_b", inst.rho_b),
        ("rho_c", inst.rho_c),
        ("rho_d", inst.rho_d),
    ] {
        if !(v > 0.0) {
            return Err(Error::config(format!("{name} must be positive, got {v}")));
        }
    }
    if let Some(g) = inst.reference_input.decay_rate() {
        if !(g > 0.0) {
            return Err(Error::config("reference input decay rate must be positive"));
        }
    }

    let enorm = linalg::spectral_norm(&inst.matrix_perturbation);
    let unorm = inst.input_perturbation.norm();
    if enorm == 0.0 || unorm == 0.0 {
        return Err(Error::config("perturbation directions must be nonzero"));
    }
    let mut joint = Joint {
        inst,
        e: &inst.matrix_perturbation / enorm,
        du: &inst.input_perturbation / unorm,
        n,
    };

    let cfg = IntegratorConfig::new(inst.step, inst.horizon, 1);
    let mut x0 = vec![0.0; 2 * n];
    x0[n..].copy_from_slice(inst.x0.as_slice());
    let mut times = Vec::new();
    let mut gap = Vec::new();
    let mut norm = Vec::new();
    integrate(&mut joint, x0, &cfg, vec![], |_, _, t, x| {
        times.push(t);
        gap.push(x[n..].iter().map(|v| v * v).sum::<f64>().sqrt());
        norm.push((0..n).map(|k| (x[k] + x[n + k]).powi(2)).sum::<f64>().sqrt());
        Ok(())
    })?;

    let tracking_required = 0.9 * margin.min(inst.rho_b).min(inst.rho_d);
    let tracking_rate = decay_rate_fit(&times, &gap, fit_window(&times, &gap, inst.horizon))?.rate();
    let mut passed = tracking_rate >= tracking_required;

    let state_decay = match inst.reference_input.decay_rate() {
        Some(g) => {
            let required = tracking_required.min(0.9 * g);
            let rate = decay_rate_fit(&times, &norm, fit_window(&times, &norm, inst.horizon))?.rate();
            passed &= rate >= required;
            Some((rate, required))
        }
        None => None,
    };

    Ok(LtvReport {
        stability_margin: margin,
        tracking_rate,
        tracking_required,
        state_decay,
        passed,
    })
}

/// Fit window: from a quarter of the horizon until the signal reaches the
/// round-off floor (1e-10 of its peak).
fn fit_window(t: &[f64], v: &[f64], horizon: f64) -> (f64, f64) {
    let peak = v.iter().copied().fold(0.0, f64::max);
    let floor = 1e-10 * peak;
    let end = t
        .iter()
        .zip(v)
        .filter(|(_, &vi)| vi > floor)
        .map(|(&ti, _)| ti)
        .fold(0.0, f64::max);
    (0.25 * horizon, end.min(horizon))
}

/// Seeded random instance of dimension `n`. The three (or four) rates are
/// drawn from well-separated bands so that the slowest one dominates.
pub fn random_instance(seed: u64, n: usize, decaying_reference: bool) -> LtvInstance {
    let mut rng = NoiseChannel::gaussian(1.0, seed).stream(0xA11CE);
    let mut u = NoiseChannel::gaussian(1.0, seed).stream(0xB0B);
    let mut uniform = move || u.uniform();
    let mut bands = if decaying_reference {
        vec![0.5, 0.9, 1.3, 1.7]
    } else {
        vec![0.5, 1.0, 1.5]
    };
    // Fisher–Yates shuffle of the bands.
    for k in (1..bands.len()).rev() {
        let j = ((uniform() * (k + 1) as f64) as usize).min(k);
        bands.swap(k, j);
    }
    let jitter = |u: f64| 0.95 + 0.1 * u;
    let margin = bands[0] * jitter(uniform());
    let rho_b = bands[1] * jitter(uniform());
    let rho_d = bands[2] * jitter(uniform());

    let b = DMatrix::from_fn(n, n, |_, _| rng.sample() / (n as f64).sqrt());
    let shift = spectral_abscissa(&b) + margin;
    let upsilon_star = b - DMatrix::identity(n, n) * shift;

    let reference_input = if decaying_reference {
        ReferenceInput::Decaying {
            direction: DVector::from_fn(n, |_, _| rng.sample()),
            rate: bands[3] * jitter(uniform()),
        }
    } else {
        ReferenceInput::Sinusoid {
            amplitude: DVector::from_fn(n, |_, _| 1.0 + rng.sample().abs()),
            frequency: DVector::from_fn(n, |_, _| 0.5 + 2.0 * uniform()),
            phase: DVector::from_fn(n, |_, _| std::f64::consts::TAU * uniform()),
        }
    };
    let slowest = margin.min(rho_b).min(rho_d).min(reference_input.decay_rate().unwrap_or(f64::INFINITY));

    LtvInstance {
        upsilon_star,
        matrix_perturbation: DMatrix::from_fn(n, n, |_, _| rng.sample()),
        rho_a: 0.5 + uniform(),
        rho_b,
        input_perturbation: DVector::from_fn(n, |_, _| rng.sample()),
        rho_c: 0.5 + uniform(),
        rho_d,
        reference_input,
        x0: DVector::from_fn(n, |_, _| rng.sample()),
        horizon: (25.0 / slowest).ceil(),
        step: 1e-2,
    }
}
