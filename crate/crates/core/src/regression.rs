//! Regressor signals, windowed Gram matrices and the excitation-analysis
//! oracle that reports the identifiable and non-identifiable subspaces.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::simkit::NoiseChannel;

/// Deterministic vector-valued signal `φ(t)` of fixed dimension.
pub trait RegressorSignal: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, t: f64) -> DVector<f64>;

    fn name(&self) -> &str {
        "regressor"
    }
}

/// One sinusoidal term `a·sin(ω t + φ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinusoidTerm {
    pub amplitude: f64,
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

impl SinusoidTerm {
    pub fn new(amplitude: f64, frequency: f64, phase: f64) -> Self {
        SinusoidTerm {
            amplitude,
            frequency,
            phase,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.amplitude * (self.frequency * t + self.phase).sin()
    }
}

/// Each channel is a sum of sinusoids; an empty channel is identically zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SineSumRegressor {
    pub channels: Vec<Vec<SinusoidTerm>>,
}

impl SineSumRegressor {
    pub fn new(channels: Vec<Vec<SinusoidTerm>>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::config("a regressor needs at least one channel"));
        }
        for term in channels.iter().flatten() {
            if !(term.amplitude.is_finite() && term.frequency.is_finite() && term.phase.is_finite()) {
                return Err(Error::config("sinusoid parameters must be finite"));
            }
        }
        Ok(SineSumRegressor { channels })
    }

    /// `(sin t, −sin t)`: one excited direction out of two.
    pub fn antiphase_pair() -> Self {
        SineSumRegressor {
            channels: vec![
                vec![SinusoidTerm::new(1.0, 1.0, 0.0)],
                vec![SinusoidTerm::new(-1.0, 1.0, 0.0)],
            ],
        }
    }

    /// `(sin t, cos t)`: persistently exciting in the plane.
    pub fn quadrature_pair() -> Self {
        SineSumRegressor {
            channels: vec![
                vec![SinusoidTerm::new(1.0, 1.0, 0.0)],
                vec![SinusoidTerm::new(1.0, 1.0, std::f64::consts::FRAC_PI_2)],
            ],
        }
    }

    pub fn zero(n: usize) -> Self {
        SineSumRegressor {
            channels: vec![Vec::new(); n],
        }
    }
}

impl RegressorSignal for SineSumRegressor {
    fn dim(&self) -> usize {
        self.channels.len()
    }

    fn eval(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.channels.len(),
            self.channels.iter().map(|c| c.iter().map(|s| s.eval(t)).sum::<f64>()),
        )
    }

    fn name(&self) -> &str {
        "sine-sum regressor"
    }
}

/// Regressor from a closure, mostly for tests and ad-hoc studies.
pub struct FnRegressor<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(f64) -> DVector<f64> + Send + Sync> FnRegressor<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnRegressor { dim, f }
    }
}

impl<F: Fn(f64) -> DVector<f64> + Send + Sync> RegressorSignal for FnRegressor<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64) -> DVector<f64> {
        (self.f)(t)
    }

    fn name(&self) -> &str {
        "closure regressor"
    }
}

/// Regressor recorded on a uniform grid, linearly interpolated between
/// samples and held constant outside the recorded span.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledRegressor {
    t0: f64,
    dt: f64,
    samples: Vec<DVector<f64>>,
    dim: usize,
}

impl SampledRegressor {
    pub fn new(t0: f64, dt: f64, samples: Vec<DVector<f64>>) -> Result<Self> {
        let dim = samples.first().map(|s| s.len()).ok_or_else(|| Error::contract("no samples"))?;
        if !(dt > 0.0) {
            return Err(Error::contract("sample spacing must be positive"));
        }
        if samples.iter().any(|s| s.len() != dim) {
            return Err(Error::contract("samples differ in dimension"));
        }
        Ok(SampledRegressor { t0, dt, samples, dim })
    }

    pub fn span(&self) -> (f64, f64) {
        (self.t0, self.t0 + self.dt * (self.samples.len() - 1) as f64)
    }
}

impl RegressorSignal for SampledRegressor {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64) -> DVector<f64> {
        let last = self.samples.len() - 1;
        let s = ((t - self.t0) / self.dt).max(0.0);
        let k = s.floor() as usize;
        if k >= last {
            return self.samples[last].clone();
        }
        let frac = s - k as f64;
        // Exact at the nodes (frac == 0) so node-aligned quadrature sees the
        // recorded values unchanged.
        if frac == 0.0 {
            return self.samples[k].clone();
        }
        &self.samples[k] * (1.0 - frac) + &self.samples[k + 1] * frac
    }

    fn name(&self) -> &str {
        "sampled regressor"
    }
}

/// `z(t) = φ(t)ᵀθ + ε(t)` with the true parameter kept for diagnostics.
pub struct RegressionModel {
    pub regressor: Box<dyn RegressorSignal>,
    pub theta_true: DVector<f64>,
    pub noise: NoiseChannel,
}

impl RegressionModel {
    pub fn new(
        regressor: Box<dyn RegressorSignal>,
        theta_true: DVector<f64>,
        noise: NoiseChannel,
    ) -> Result<Self> {
        if regressor.dim() != theta_true.len() {
            return Err(Error::config(format!(
                "regressor dimension {} does not match parameter length {}",
                regressor.dim(),
                theta_true.len()
            )));
        }
        noise.validate()?;
        Ok(RegressionModel {
            regressor,
            theta_true,
            noise,
        })
    }

    pub fn dim(&self) -> usize {
        self.theta_true.len()
    }

    /// Measurement for a given noise sample.
    pub fn measure(&self, t: f64, eps: f64) -> (DVector<f64>, f64) {
        let phi = self.regressor.eval(t);
        let z = phi.dot(&self.theta_true) + eps;
        (phi, z)
    }
}

/// Result of the excitation analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationCertificate {
    pub window: f64,
    /// Order of deficiency: dimension of the non-identifiable subspace.
    pub order: usize,
    pub phi_a: DMatrix<f64>,
    pub phi_b: DMatrix<f64>,
    pub n_d: DMatrix<f64>,
    pub n_u: DMatrix<f64>,
    pub rank_tol: f64,
}

impl ExcitationCertificate {
    pub fn dim(&self) -> usize {
        self.n_d.nrows()
    }

    /// Orthogonal projector onto the identifiable subspace.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.n_d * self.n_d.transpose()
    }

    /// Certificate for the given identifiable basis with no bounds
    /// attached, used when the subspace is known by construction.
    pub fn from_basis(n_d: DMatrix<f64>, window: f64) -> Result<Self> {
        let n = n_d.nrows();
        let n_d = linalg::orthonormal_columns(&n_d, 1e-12);
        let proj = &n_d * n_d.transpose();
        let (vals, vecs) = linalg::sym_eigen(&(DMatrix::identity(n, n) - &proj));
        let keep: Vec<usize> = (0..n).filter(|&k| vals[k] > 0.5).collect();
        let mut n_u = DMatrix::zeros(n, keep.len());
        for (dst, &k) in keep.iter().enumerate() {
            n_u.set_column(dst, &vecs.column(k));
        }
        Ok(ExcitationCertificate {
            window,
            order: n_u.ncols(),
            phi_a: proj.clone(),
            phi_b: proj,
            n_d: linalg::with_canonical_signs(n_d),
            n_u: linalg::with_canonical_signs(n_u),
            rank_tol: 1e-8,
        })
    }
}

fn checked_eval(reg: &dyn RegressorSignal, t: f64) -> Result<DVector<f64>> {
    let v = reg.eval(t);
    if v.len() != reg.dim() {
        return Err(Error::contract(format!(
            "{} returned length {} instead of {}",
            reg.name(),
            v.len(),
            reg.dim()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Evaluation {
            source_name: reg.name().to_string(),
            t,
        });
    }
    Ok(v)
}

/// `∫_{t0}^{t0+T} φφᵀ dτ` by composite Simpson quadrature. The number of
/// panels is the smallest even count with spacing at most `quad_step`.
pub fn gram_window(reg: &dyn RegressorSignal, t0: f64, window: f64, quad_step: f64) -> Result<DMatrix<f64>> {
    if !(window > 0.0) {
        return Err(Error::contract(format!("window must be positive, got {window}")));
    }
    if !(quad_step > 0.0) || quad_step > window / 10.0 {
        return Err(Error::contract(format!(
            "quadrature step {quad_step} must lie in (0, window/10]"
        )));
    }
    let n = reg.dim();
    let mut panels = (window / quad_step - 1e-9).ceil() as usize;
    if panels % 2 == 1 {
        panels += 1;
    }
    let h = window / panels as f64;
    let mut acc = DMatrix::zeros(n, n);
    for k in 0..=panels {
        let t = t0 + k as f64 * h;
        let w = if k == 0 || k == panels {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let phi = checked_eval(reg, t)?;
        acc.ger(w, &phi, &phi, 1.0);
    }
    acc *= h / 3.0;
    linalg::symmetrize(&mut acc);
    Ok(acc)
}

/// Numerical rank: count of eigenvalues above `rank_tol·λ_max`.
fn numerical_rank(vals: &DVector<f64>, rank_tol: f64) -> usize {
    let top = vals.iter().copied().fold(0.0, f64::max);
    if top <= 0.0 {
        return 0;
    }
    vals.iter().filter(|&&v| v > rank_tol * top).count()
}

/// Excitation analysis over `[t_start, horizon]` with windows of length
/// `window` starting every quarter window.
///
/// The identifiable basis comes from the eigen-decomposition of the average
/// window Gram. The bounds are the scaled projectors `λ_a·N_dN_dᵀ` and
/// `λ_b·N_dN_dᵀ`, where `λ_a` and `λ_b` are the extreme eigenvalues of
/// `N_dᵀ G N_d` over all windows; this pair brackets every sampled window.
pub fn excitation_analysis(
    reg: &dyn RegressorSignal,
    window: f64,
    t_start: f64,
    horizon: f64,
    rank_tol: f64,
    quad_step: f64,
) -> Result<ExcitationCertificate> {
    if !(rank_tol > 0.0) {
        return Err(Error::contract("rank tolerance must be positive"));
    }
    if !(window > 0.0) || horizon - t_start < 5.0 * window - 1e-9 {
        return Err(Error::contract(format!(
            "analysis span {} must cover at least five windows of {window}",
            horizon - t_start
        )));
    }
    let n = reg.dim();
    let stride = window / 4.0;
    let count = ((horizon - t_start - window) / stride + 1e-9).floor() as usize + 1;
    let mut grams = Vec::with_capacity(count);
    for k in 0..count {
        grams.push(gram_window(reg, t_start + k as f64 * stride, window, quad_step)?);
    }
    let mut avg = grams.iter().fold(DMatrix::zeros(n, n), |a, g| a + g);
    avg /= count as f64;

    let (vals, vecs) = linalg::sym_eigen(&avg);
    let rank = numerical_rank(&vals, rank_tol);
    let ranks: Vec<usize> = grams
        .iter()
        .map(|g| numerical_rank(&linalg::sym_eigenvalues(g), rank_tol))
        .collect();
    if ranks.iter().any(|&r| r != rank) {
        let mut all = vec![rank];
        all.extend(ranks);
        return Err(Error::RankMismatch { ranks: all });
    }

    // Ascending eigenvalues: the top `rank` columns are identifiable.
    let q = n - rank;
    let n_u = linalg::with_canonical_signs(vecs.columns(0, q).into_owned());
    let mut n_d = DMatrix::zeros(n, rank);
    for j in 0..rank {
        n_d.set_column(j, &vecs.column(n - 1 - j));
    }
    let n_d = linalg::with_canonical_signs(n_d);

    let proj = &n_d * n_d.transpose();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for g in &grams {
        let reduced = n_d.transpose() * g * &n_d;
        let ev = linalg::sym_eigenvalues(&reduced);
        if rank > 0 {
            lo = lo.min(ev[0]);
            hi = hi.max(ev[rank - 1]);
        }
    }
    if rank == 0 {
        lo = 0.0;
    }
    Ok(ExcitationCertificate {
        window,
        order: q,
        phi_a: &proj * lo,
        phi_b: &proj * hi,
        n_d,
        n_u,
        rank_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn trapezoid_gram(reg: &dyn RegressorSignal, t0: f64, t: f64, m: usize) -> DMatrix<f64> {
        let n = reg.dim();
        let h = t / m as f64;
        let mut acc = DMatrix::zeros(n, n);
        for k in 0..=m {
            let w = if k == 0 || k == m { 0.5 } else { 1.0 };
            let p = reg.eval(t0 + k as f64 * h);
            acc += &p * p.transpose() * w;
        }
        acc * h
    }

    #[test]
    fn antiphase_gram_matches_closed_form() {
        let reg = SineSumRegressor::antiphase_pair();
        let g = gram_window(&reg, 0.0, PI, 1e-3).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[PI / 2.0, -PI / 2.0, -PI / 2.0, PI / 2.0]);
        assert!((&g - &expect).amax() < 1e-12);
        let trap = trapezoid_gram(&reg, 0.0, PI, 200_000);
        assert!((&g - trap).amax() < 1e-9);
    }

    #[test]
    fn zero_regressor_gives_zero_gram() {
        let g = gram_window(&SineSumRegressor::zero(3), 1.7, 2.0, 0.01).unwrap();
        assert_eq!(g, DMatrix::zeros(3, 3));
    }

    #[test]
    fn antiphase_gram_is_sandwiched() {
        let reg = SineSumRegressor::antiphase_pair();
        let lower = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let upper = &lower * 2.0;
        for k in 0..20 {
            let g = gram_window(&reg, 0.37 * k as f64, PI, 1e-3).unwrap();
            assert!(linalg::min_eigenvalue(&(&g - &lower)) >= -1e-10);
            assert!(linalg::min_eigenvalue(&(&upper - &g)) >= -1e-10);
        }
    }

    #[test]
    fn quadrature_step_is_checked() {
        let reg = SineSumRegressor::antiphase_pair();
        assert!(gram_window(&reg, 0.0, 1.0, 0.2).unwrap_err().is_config());
        let bad = FnRegressor::new(1, |t| DVector::from_element(1, if t > 0.5 { f64::NAN } else { 0.0 }));
        match gram_window(&bad, 0.0, 1.0, 0.01) {
            Err(Error::Evaluation { t, .. }) => assert!(t > 0.5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn antiphase_analysis() {
        let reg = SineSumRegressor::antiphase_pair();
        let cert = excitation_analysis(&reg, PI, 0.0, 10.0 * PI, 1e-8, 1e-3).unwrap();
        assert_eq!(cert.order, 1);
        let s = 1.0 / 2f64.sqrt();
        assert!((cert.n_d[(0, 0)] - s).abs() < 1e-12 && (cert.n_d[(1, 0)] + s).abs() < 1e-12);
        assert!((cert.n_u[(0, 0)] - s).abs() < 1e-12 && (cert.n_u[(1, 0)] - s).abs() < 1e-12);
        assert!((cert.phi_a[(0, 0)] - PI / 2.0).abs() < 1e-9);
    }

    #[test]
    fn quadrature_pair_is_persistently_exciting() {
        let reg = SineSumRegressor::quadrature_pair();
        let cert = excitation_analysis(&reg, 2.0 * PI, 0.0, 12.0 * PI, 1e-8, 1e-3).unwrap();
        assert_eq!(cert.order, 0);
        assert!((cert.phi_a.clone() - DMatrix::identity(2, 2) * PI).amax() < 1e-9);
    }

    #[test]
    fn zero_regressor_is_fully_unexcited() {
        let cert = excitation_analysis(&SineSumRegressor::zero(3), 1.0, 0.0, 6.0, 1e-8, 0.01).unwrap();
        assert_eq!(cert.order, 3);
        assert_eq!(cert.n_d.ncols(), 0);
        assert!((&cert.n_u.transpose() * &cert.n_u - DMatrix::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn changing_rank_is_reported() {
        // Second channel switches on half way through the horizon.
        let reg = FnRegressor::new(2, |t| {
            DVector::from_vec(vec![t.sin(), if t > 10.0 { t.cos() } else { 0.0 }])
        });
        match excitation_analysis(&reg, PI, 0.0, 20.0, 1e-8, 1e-3) {
            Err(Error::RankMismatch { ranks }) => assert!(ranks.contains(&1) && ranks.contains(&2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sampled_regressor_interpolates() {
        let samples = (0..11).map(|k| DVector::from_element(1, k as f64)).collect();
        let s = SampledRegressor::new(0.0, 0.1, samples).unwrap();
        assert!((s.eval(0.3)[0] - 3.0).abs() < 1e-12);
        assert_eq!(s.eval(0.5)[0], 5.0);
        assert!((s.eval(0.35)[0] - 3.5).abs() < 1e-12);
        assert_eq!(s.eval(5.0)[0], 10.0);
    }

    #[test]
    fn measurement_is_exact() {
        let model = RegressionModel::new(
            Box::new(SineSumRegressor::quadrature_pair()),
            DVector::from_vec(vec![2.0, -1.0]),
            NoiseChannel::none(),
        )
        .unwrap();
        for k in 0..50 {
            let t = 0.13 * k as f64;
            let (phi, z) = model.measure(t, 0.25);
            assert_eq!(z, phi.dot(&model.theta_true) + 0.25);
        }
    }
}
