//! Identification of SISO plants in observable canonical form, alone or
//! coupled through their outputs, recast as linear regressions through stable
//! input/output filters.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::regression::SinusoidTerm;
use crate::simkit::{hurwitz_check, NoiseChannel, NoiseStream, Rk4};
use crate::source::{check_finite, MeasurementSource};

/// `n × n` matrix with first column `v`, the shifted identity in the top
/// right block and zeros in the remaining last row.
pub fn companion(v: &DVector<f64>) -> DMatrix<f64> {
    let n = v.len();
    let mut m = DMatrix::zeros(n, n);
    m.set_column(0, v);
    for i in 0..n.saturating_sub(1) {
        m[(i, i + 1)] = 1.0;
    }
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalPlant {
    pub f: DVector<f64>,
    pub b: DVector<f64>,
    pub g: Option<DVector<f64>>,
    pub w: DVector<f64>,
    pub f_mat: DMatrix<f64>,
    pub w_mat: DMatrix<f64>,
    /// `col(h₁ᵀ, h₁ᵀW, …, h₁ᵀW^{n−1})`.
    pub h_w: DMatrix<f64>,
    h_w_inv: DMatrix<f64>,
    /// First row of `H_W⁻¹`, i.e. `h₁ᵀH_W⁻¹`.
    h1_hinv: DVector<f64>,
    /// `W^j` for `j = 0..n`.
    w_powers: Vec<DMatrix<f64>>,
}

pub fn make_plant(
    f: DVector<f64>,
    b: DVector<f64>,
    g: Option<DVector<f64>>,
    w: DVector<f64>,
) -> Result<CanonicalPlant> {
    let n = f.len();
    if n == 0 || b.len() != n || w.len() != n || g.as_ref().is_some_and(|g| g.len() != n) {
        return Err(Error::Design(format!(
            "plant vectors must share a nonzero length (f: {}, b: {}, w: {}, g: {:?})",
            n,
            b.len(),
            w.len(),
            g.as_ref().map(|g| g.len())
        )));
    }
    let w_mat = companion(&w);
    let report = hurwitz_check(&w_mat);
    if !report.stable {
        let eig: Vec<String> = linalg::eigenvalues(&w_mat)
            .iter()
            .filter(|z| z.re >= 0.0)
            .map(|z| format!("{:.4}{:+.4}i", z.re, z.im))
            .collect();
        return Err(Error::Design(format!(
            "filter matrix W is not Hurwitz; eigenvalues with non-negative real part: {}",
            eig.join(", ")
        )));
    }
    let mut w_powers = vec![DMatrix::identity(n, n)];
    for j in 1..n {
        w_powers.push(&w_powers[j - 1] * &w_mat);
    }
    let mut h_w = DMatrix::zeros(n, n);
    for j in 0..n {
        h_w.set_row(j, &w_powers[j].row(0));
    }
    let det = h_w.determinant();
    let scale = h_w.iter().map(|v| v.abs()).fold(1.0, f64::max).powi(n as i32);
    if det.abs() <= 1e-12 * scale {
        return Err(Error::Design(format!("H_W is singular (det = {det:e})")));
    }
    let h_w_inv = h_w
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Design("H_W could not be inverted".into()))?;
    let h1_hinv = h_w_inv.row(0).transpose();
    Ok(CanonicalPlant {
        f_mat: companion(&f),
        f,
        b,
        g,
        w,
        w_mat,
        h_w,
        h_w_inv,
        h1_hinv,
        w_powers,
    })
}

impl CanonicalPlant {
    pub fn order(&self) -> usize {
        self.f.len()
    }

    /// `col(b, f)` or `col(b, f, g)`.
    pub fn theta(&self) -> DVector<f64> {
        let mut v: Vec<f64> = self.b.iter().chain(self.f.iter()).copied().collect();
        if let Some(g) = &self.g {
            v.extend(g.iter());
        }
        DVector::from_vec(v)
    }

    /// `H_W⁻¹·col(rᵀ, rᵀW, …, rᵀW^{n−1})`.
    pub fn pi_matrix(&self, r: &DVector<f64>) -> DMatrix<f64> {
        let n = self.order();
        let mut stacked = DMatrix::zeros(n, n);
        for j in 0..n {
            stacked.set_row(j, &(r.transpose() * &self.w_powers[j]));
        }
        &self.h_w_inv * stacked
    }

    /// `h₁ᵀΠ` for the filter state `r`, without forming `Π`.
    pub fn pi_row(&self, r: &DVector<f64>) -> DVector<f64> {
        let n = self.order();
        let mut row = DVector::zeros(n);
        for j in 0..n {
            let c = self.h1_hinv[j];
            if c != 0.0 {
                row += (r.transpose() * &self.w_powers[j]).transpose() * c;
            }
        }
        row
    }

    fn plant_rhs(&self, x: &[f64], u: f64, coupling: f64, dx: &mut [f64]) {
        let n = self.order();
        for i in 0..n {
            let shifted = if i + 1 < n { x[i + 1] } else { 0.0 };
            let mut d = self.f[i] * x[0] + shifted + self.b[i] * u;
            if let Some(g) = &self.g {
                d += g[i] * coupling;
            }
            dx[i] = d;
        }
    }

    /// `ṙ = Wᵀr + h₁·input`.
    fn filter_rhs(&self, r: &[f64], input: f64, dr: &mut [f64]) {
        let n = self.order();
        // (Wᵀr)_0 = Σ w_i r_i ; (Wᵀr)_i = r_{i−1} for i ≥ 1.
        let mut first = input;
        for i in 0..n {
            first += self.w[i] * r[i];
        }
        dr[0] = first;
        for i in 1..n {
            dr[i] = r[i - 1];
        }
    }
}

struct Closure<F>(usize, F);

impl<F: Fn(f64, &[f64], &mut [f64])> crate::simkit::OdeSystem for Closure<F> {
    fn dim(&self) -> usize {
        self.0
    }
    fn rhs(&self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
        (self.1)(t, x, dx);
        Ok(())
    }
}

/// One RK4 step of the plant with input and coupling held over the step.
/// Returns the new state and its output `h₁ᵀx`.
pub fn plant_step(
    plant: &CanonicalPlant,
    x: &DVector<f64>,
    u: f64,
    coupling_input: f64,
    h: f64,
) -> Result<(DVector<f64>, f64)> {
    if !u.is_finite() || !coupling_input.is_finite() {
        return Err(Error::Evaluation {
            source_name: "plant input".into(),
            t: f64::NAN,
        });
    }
    let sys = Closure(plant.order(), |_t: f64, x: &[f64], dx: &mut [f64]| {
        plant.plant_rhs(x, u, coupling_input, dx)
    });
    let mut next = x.as_slice().to_vec();
    Rk4::new(next.len()).step(&sys, 0.0, &mut next, h)?;
    let y = next[0];
    Ok((DVector::from_vec(next), y))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub r_u: DVector<f64>,
    pub r_y: DVector<f64>,
    pub r_c: Option<DVector<f64>>,
}

impl FilterBank {
    pub fn new(n: usize, coupled: bool) -> Self {
        FilterBank {
            r_u: DVector::zeros(n),
            r_y: DVector::zeros(n),
            r_c: coupled.then(|| DVector::zeros(n)),
        }
    }
}

/// One RK4 step of the filters with inputs held over the step.
pub fn filter_step(bank: &mut FilterBank, plant: &CanonicalPlant, u: f64, y: f64, y_coupled: f64, h: f64) -> Result<()> {
    let mut rk = Rk4::new(plant.order());
    let inputs = [(u, &mut bank.r_u), (y, &mut bank.r_y)];
    for (input, r) in inputs {
        step_filter(plant, r, input, h, &mut rk)?;
    }
    if let Some(rc) = bank.r_c.as_mut() {
        step_filter(plant, rc, y_coupled, h, &mut rk)?;
    }
    Ok(())
}

fn step_filter(plant: &CanonicalPlant, r: &mut DVector<f64>, input: f64, h: f64, rk: &mut Rk4) -> Result<()> {
    let sys = Closure(plant.order(), move |_t: f64, r: &[f64], dr: &mut [f64]| plant.filter_rhs(r, input, dr));
    rk.step(&sys, 0.0, r.as_mut_slice(), h)
}

/// Regressor `φᵀ = h₁ᵀ[Π_u Π_y (Π_c)]`.
pub fn regressor_row(bank: &FilterBank, plant: &CanonicalPlant) -> DVector<f64> {
    let mut parts: Vec<f64> = plant.pi_row(&bank.r_u).iter().chain(plant.pi_row(&bank.r_y).iter()).copied().collect();
    if let Some(rc) = &bank.r_c {
        parts.extend(plant.pi_row(rc).iter());
    }
    DVector::from_vec(parts)
}

/// Measurement `z = y + h₁ᵀΠ_y w`.
pub fn measurement(bank: &FilterBank, plant: &CanonicalPlant, y: f64) -> f64 {
    y + plant.pi_row(&bank.r_y).dot(&plant.w)
}

/// Exploration input: a sum of sinusoids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct InputSignal {
    pub terms: Vec<SinusoidTerm>,
}

impl InputSignal {
    pub fn eval(&self, t: f64) -> f64 {
        self.terms.iter().map(|s| s.eval(t)).sum()
    }

    /// `10·Σ_{j=1..k} sin((2j − 1)t + 2j)`.
    pub fn odd_harmonics(k: usize) -> Self {
        InputSignal {
            terms: (1..=k)
                .map(|j| SinusoidTerm::new(10.0, (2 * j - 1) as f64, (2 * j) as f64))
                .collect(),
        }
    }
}

/// A plant (or a network of identical plants coupled through outputs) with
/// its filter bank, integrated jointly with the estimators.
///
/// Per node the state is `[x, r_u, r_y]` plus `r_c` when coupled. Plants
/// couple through true outputs; the filters and measurements see the
/// measured, noisy outputs.
pub struct SysidSource {
    plant: CanonicalPlant,
    inputs: Vec<InputSignal>,
    /// `coupling[i][j] = c_ij`: node `i` receives `y_j`.
    coupling: DMatrix<f64>,
    x0: Vec<DVector<f64>>,
    theta: DVector<f64>,
    noise: NoiseChannel,
    streams: Vec<NoiseStream>,
    eps: Vec<f64>,
}

impl SysidSource {
    /// Single plant (no coupling vector).
    pub fn single(plant: CanonicalPlant, input: InputSignal, x0: DVector<f64>, noise: NoiseChannel) -> Result<Self> {
        if plant.g.is_some() {
            return Err(Error::config("a single plant must not have a coupling vector"));
        }
        Self::build(plant, vec![input], DMatrix::zeros(1, 1), vec![x0], noise)
    }

    /// `N` identical plants coupled through `c_ij`.
    pub fn network(
        plant: CanonicalPlant,
        inputs: Vec<InputSignal>,
        coupling: DMatrix<f64>,
        x0: Vec<DVector<f64>>,
        noise: NoiseChannel,
    ) -> Result<Self> {
        if plant.g.is_none() {
            return Err(Error::config("a coupled network needs a coupling vector g"));
        }
        Self::build(plant, inputs, coupling, x0, noise)
    }

    fn build(
        plant: CanonicalPlant,
        inputs: Vec<InputSignal>,
        coupling: DMatrix<f64>,
        x0: Vec<DVector<f64>>,
        noise: NoiseChannel,
    ) -> Result<Self> {
        let nodes = inputs.len();
        if nodes == 0 || coupling.shape() != (nodes, nodes) || x0.len() != nodes {
            return Err(Error::config(format!(
                "{nodes} inputs, {:?} coupling, {} initial states do not agree",
                coupling.shape(),
                x0.len()
            )));
        }
        if x0.iter().any(|x| x.len() != plant.order()) {
            return Err(Error::config("initial plant state has the wrong length"));
        }
        noise.validate()?;
        if plant.g.is_some() {
            let a = network_matrix(&plant, &coupling);
            let report = hurwitz_check(&a);
            if !report.stable {
                return Err(Error::Stability(format!(
                    "coupled plant network is unstable (spectral abscissa {:.4})",
                    report.abscissa
                )));
            }
        }
        let theta = plant.theta();
        let streams = (0..nodes).map(|i| noise.stream(i as u64)).collect();
        Ok(SysidSource {
            plant,
            inputs,
            coupling,
            x0,
            theta,
            noise,
            streams,
            eps: vec![0.0; nodes],
        })
    }

    pub fn plant(&self) -> &CanonicalPlant {
        &self.plant
    }

    pub fn coupled(&self) -> bool {
        self.plant.g.is_some()
    }

    pub fn noise(&self) -> NoiseChannel {
        self.noise
    }

    /// Same plant and inputs with another noise channel.
    pub fn with_noise(&self, noise: NoiseChannel) -> Result<Self> {
        Self::build(self.plant.clone(), self.inputs.clone(), self.coupling.clone(), self.x0.clone(), noise)
    }

    fn node_len(&self) -> usize {
        let n = self.plant.order();
        if self.coupled() {
            4 * n
        } else {
            3 * n
        }
    }

    /// True outputs `y_j = x_j[0]`.
    fn outputs(&self, s: &[f64]) -> Vec<f64> {
        (0..self.nodes()).map(|j| s[j * self.node_len()]).collect()
    }

    pub fn filter_bank(&self, node: usize, s: &[f64]) -> FilterBank {
        let n = self.plant.order();
        let o = node * self.node_len();
        FilterBank {
            r_u: DVector::from_column_slice(&s[o + n..o + 2 * n]),
            r_y: DVector::from_column_slice(&s[o + 2 * n..o + 3 * n]),
            r_c: self
                .coupled()
                .then(|| DVector::from_column_slice(&s[o + 3 * n..o + 4 * n])),
        }
    }

    pub fn plant_state(&self, node: usize, s: &[f64]) -> DVector<f64> {
        let o = node * self.node_len();
        DVector::from_column_slice(&s[o..o + self.plant.order()])
    }

    fn coupled_input(&self, i: usize, y: &[f64]) -> f64 {
        (0..self.nodes()).map(|j| self.coupling[(i, j)] * y[j]).sum()
    }
}

/// `I ⊗ F + C ⊗ (g h₁ᵀ)`: the closed interconnection of the plants.
pub fn network_matrix(plant: &CanonicalPlant, coupling: &DMatrix<f64>) -> DMatrix<f64> {
    let n = plant.order();
    let nodes = coupling.nrows();
    let mut gh = DMatrix::zeros(n, n);
    if let Some(g) = &plant.g {
        gh.set_column(0, g);
    }
    DMatrix::identity(nodes, nodes).kronecker(&plant.f_mat) + coupling.kronecker(&gh)
}

impl MeasurementSource for SysidSource {
    fn nodes(&self) -> usize {
        self.inputs.len()
    }

    fn param_dim(&self) -> usize {
        self.theta.len()
    }

    fn theta_true(&self) -> &DVector<f64> {
        &self.theta
    }

    fn state_dim(&self) -> usize {
        self.nodes() * self.node_len()
    }

    fn initial_state(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.state_dim()];
        for (i, x0) in self.x0.iter().enumerate() {
            let o = i * self.node_len();
            s[o..o + x0.len()].copy_from_slice(x0.as_slice());
        }
        s
    }

    fn rhs(&self, t: f64, s: &[f64], ds: &mut [f64]) -> Result<()> {
        let n = self.plant.order();
        let len = self.node_len();
        let y = self.outputs(s);
        let y_meas: Vec<f64> = y.iter().zip(&self.eps).map(|(a, e)| a + e).collect();
        for i in 0..self.nodes() {
            let o = i * len;
            let u = self.inputs[i].eval(t);
            let c_true = self.coupled_input(i, &y);
            self.plant.plant_rhs(&s[o..o + n], u, c_true, &mut ds[o..o + n]);
            self.plant.filter_rhs(&s[o + n..o + 2 * n], u, &mut ds[o + n..o + 2 * n]);
            self.plant.filter_rhs(&s[o + 2 * n..o + 3 * n], y_meas[i], &mut ds[o + 2 * n..o + 3 * n]);
            if self.coupled() {
                let c_meas = self.coupled_input(i, &y_meas);
                self.plant.filter_rhs(&s[o + 3 * n..o + 4 * n], c_meas, &mut ds[o + 3 * n..o + 4 * n]);
            }
        }
        Ok(())
    }

    fn measure(&self, node: usize, t: f64, s: &[f64]) -> Result<(DVector<f64>, f64)> {
        let bank = self.filter_bank(node, s);
        let y = s[node * self.node_len()] + self.eps[node];
        let phi = regressor_row(&bank, &self.plant);
        let z = measurement(&bank, &self.plant, y);
        check_finite(self.name(), t, &phi, z)?;
        Ok((phi, z))
    }

    fn at_node(&mut self, _step: u64, _t: f64, _s: &[f64]) -> Result<()> {
        for (e, st) in self.eps.iter_mut().zip(&mut self.streams) {
            *e = st.sample();
        }
        Ok(())
    }

    fn name(&self) -> &str {
        if self.coupled() {
            "coupled plant network"
        } else {
            "plant"
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simkit::{decay_rate_fit, integrate, IntegratorConfig};
    use crate::source::SourceOnly;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn app1_plant() -> CanonicalPlant {
        make_plant(v(&[-2.5, -11.0, -5.0]), v(&[1.0, -5.0, 9.0]), None, v(&[-4.0, -9.25, -6.25])).unwrap()
    }

    #[test]
    fn design_matrices() {
        let p = app1_plant();
        let expect = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, -4.0, 1.0, 0.0, 6.75, -4.0, 1.0]);
        assert!((&p.h_w - expect).amax() < 1e-14);
        assert!((p.h_w.determinant() - 1.0).abs() < 1e-12);
        let mut eig: Vec<(f64, f64)> = linalg::eigenvalues(&p.w_mat).iter().map(|z| (z.re, z.im)).collect();
        eig.sort_by(|a, b| a.1.total_cmp(&b.1));
        assert!((eig[0].0 + 1.5).abs() < 1e-9 && (eig[0].1 + 2.0).abs() < 1e-9);
        assert!((eig[1].0 + 1.0).abs() < 1e-9 && eig[1].1.abs() < 1e-9);
        assert!((eig[2].0 + 1.5).abs() < 1e-9 && (eig[2].1 - 2.0).abs() < 1e-9);
        assert!(hurwitz_check(&p.f_mat).stable);
    }

    #[test]
    fn unstable_filter_is_rejected() {
        let err = make_plant(v(&[0.0; 3]), v(&[0.0; 3]), None, v(&[1.0, 0.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::Design(_)));
        let scalar = make_plant(v(&[-2.0]), v(&[1.0]), None, v(&[-1.0])).unwrap();
        assert_eq!(scalar.w_mat, DMatrix::from_element(1, 1, -1.0));
        assert_eq!(scalar.h_w, DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn plant_stepping() {
        let p = app1_plant();
        let (x, y) = plant_step(&p, &DVector::zeros(3), 0.0, 0.0, 1e-3).unwrap();
        assert_eq!((x, y), (DVector::zeros(3), 0.0));
        let mut x = v(&[1.0, -1.0, 2.0]);
        for _ in 0..30_000 {
            x = plant_step(&p, &x, 0.0, 0.0, 1e-3).unwrap().0;
        }
        assert!(x.norm() < 1e-4);
        // Superposition.
        let (mut a, mut b, mut ab) = (DVector::zeros(3), DVector::zeros(3), DVector::zeros(3));
        for k in 0..2000 {
            let t = k as f64 * 1e-3;
            let (u1, u2) = (t.sin(), (3.0 * t).cos());
            a = plant_step(&p, &a, u1, 0.0, 1e-3).unwrap().0;
            b = plant_step(&p, &b, u2, 0.0, 1e-3).unwrap().0;
            ab = plant_step(&p, &ab, u1 + u2, 0.0, 1e-3).unwrap().0;
        }
        assert!((ab - a - b).amax() < 1e-9);
    }

    #[test]
    fn filter_step_response() {
        let p = app1_plant();
        let mut bank = FilterBank::new(3, false);
        filter_step(&mut bank, &p, 0.0, 0.0, 0.0, 1e-3).unwrap();
        assert_eq!(bank.r_u, DVector::zeros(3));
        for _ in 0..40_000 {
            filter_step(&mut bank, &p, 1.0, 0.0, 0.0, 1e-3).unwrap();
        }
        let h1 = v(&[1.0, 0.0, 0.0]);
        let steady = -p.w_mat.transpose().try_inverse().unwrap() * h1;
        assert!((&bank.r_u - steady).amax() < 1e-9);
        let zero = FilterBank::new(3, false);
        assert_eq!(regressor_row(&zero, &p), DVector::zeros(6));
        assert_eq!(measurement(&zero, &p, 0.7), 0.7);
    }

    #[test]
    fn pi_rows_match_definition() {
        let p = app1_plant();
        let r = v(&[0.3, -1.2, 2.5]);
        let pi = p.pi_matrix(&r);
        assert!((pi.row(0).transpose() - p.pi_row(&r)).amax() < 1e-14);
        for j in 0..3 {
            let lhs = p.w_powers[j].row(0) * &pi;
            let rhs = r.transpose() * &p.w_powers[j];
            assert!((lhs - rhs).amax() < 1e-12);
        }
    }

    fn residuals(x0: DVector<f64>) -> (Vec<f64>, Vec<f64>) {
        let src = SysidSource::single(app1_plant(), InputSignal::odd_harmonics(3), x0, NoiseChannel::none()).unwrap();
        let theta = src.theta_true().clone();
        let mut sys = SourceOnly::new(src);
        let x0 = sys.initial_state();
        let cfg = IntegratorConfig::new(1e-3, 20.0, 10);
        let (mut t, mut res) = (Vec::new(), Vec::new());
        integrate(&mut sys, x0, &cfg, vec![], |s, _, ti, x| {
            let (phi, z) = s.source.measure(0, ti, x)?;
            t.push(ti);
            res.push(z - phi.dot(&theta));
            Ok(())
        })
        .unwrap();
        (t, res)
    }

    #[test]
    fn algebraic_representation_is_exact_from_rest() {
        let (_, res) = residuals(DVector::zeros(3));
        assert!(res.iter().all(|r| r.abs() < 1e-6), "max {}", res.iter().fold(0.0f64, |a, r| a.max(r.abs())));
    }

    #[test]
    fn initial_state_transient_decays_with_filter() {
        let (t, res) = residuals(v(&[1.0, 2.0, -1.0]));
        let abs: Vec<f64> = res.iter().map(|r| r.abs()).collect();
        let fit = decay_rate_fit(&t, &abs, (5.0, 15.0)).unwrap();
        // The slowest filter mode is at −1.
        assert!((fit.rate() - 1.0).abs() < 0.1, "rate {}", fit.rate());
    }

    #[test]
    fn ring_network_is_stable() {
        let plant = make_plant(
            v(&[-2.5, -11.0, -5.0]),
            v(&[1.0, -5.0, 9.0]),
            Some(v(&[0.0, 0.0, 1.0])),
            v(&[-4.0, -9.25, -6.25]),
        )
        .unwrap();
        let mut c = DMatrix::zeros(5, 5);
        for (i, j) in [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)] {
            c[(i, j)] = 1.0;
        }
        assert!(hurwitz_check(&network_matrix(&plant, &c)).stable);
        let inputs = vec![InputSignal::odd_harmonics(1); 5];
        let src = SysidSource::network(plant, inputs, c, vec![DVector::zeros(3); 5], NoiseChannel::none()).unwrap();
        assert_eq!(src.theta_true().len(), 9);
        assert_eq!(src.state_dim(), 60);
    }
}
