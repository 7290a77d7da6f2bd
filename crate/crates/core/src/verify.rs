//! Property-verification suites, runnable from the command line.
//!
//! Each suite returns a list of named checks; suites are independent and run
//! in parallel.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::config::{preset, ExperimentConfig};
use crate::distributed::{
    complementary_de_check, positivity_matrix, DirectedGraph, NodeConfig, SensorNetwork, StackedBases,
};
use crate::error::{Error, Result};
use crate::experiment::{self, build_plant, coupling_matrix, sysid_source, RunOutput};
use crate::learner::{batch_lsq_oracle, lsq_cost, EstimatorParams, LearnerHyperParams, LearnerSystem};
use crate::linalg;
use crate::regression::{
    excitation_analysis, gram_window, ExcitationCertificate, RegressionModel, RegressorSignal, SineSumRegressor,
    SinusoidTerm,
};
use crate::simkit::{
    decay_rate_fit, hurwitz_check, integrate, ltv_convergence_harness, random_instance, IntegratorConfig,
    NoiseChannel, OdeSystem,
};
use crate::source::{MeasurementSource, ModelBankSource, ModelSource, SourceOnly};
use crate::subspace::{subspace_error, SubspaceHyperParams, SubspaceSystem};
use crate::sysid::network_matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    /// `value <= bound`.
    fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check::new(name, value <= bound, format!("{value:.3e} <= {bound:.0e}"))
    }

    /// `value >= bound`.
    fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check::new(name, value >= bound, format!("{value:.4e} >= {bound:.1e}"))
    }
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub checks: Vec<Check>,
    /// Set when the suite could not finish.
    pub error: Option<String>,
    pub elapsed: Duration,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.checks.iter().all(|c| c.passed)
    }
}

type SuiteFn = fn() -> Result<Vec<Check>>;

pub const SUITES: [(&str, SuiteFn); 15] = [
    ("rk4-order", rk4_order),
    ("csv-determinism", csv_determinism),
    ("excitation-certificate", excitation_certificate),
    ("subspace-convergence", subspace_convergence),
    ("learner-identities", learner_identities),
    ("noise-free-rate", noise_free_rate),
    ("grid-oracle", grid_oracle),
    ("graph-positivity", graph_positivity),
    ("ltv-harness", ltv_harness),
    ("consensus-hurwitz", consensus_hurwitz),
    ("single-node-reduction", single_node_reduction),
    ("network-properties", network_properties),
    ("pi-representation", pi_representation),
    ("algebraic-exactness", algebraic_exactness),
    ("noise-injection", noise_injection),
];

pub fn suite_names() -> Vec<&'static str> {
    SUITES.iter().map(|(n, _)| *n).collect()
}

fn run_suite(name: &'static str, f: SuiteFn) -> SuiteReport {
    let start = Instant::now();
    let (checks, error) = match f() {
        Ok(c) => (c, None),
        Err(e) => (vec![], Some(e.to_string())),
    };
    SuiteReport {
        suite: name,
        checks,
        error,
        elapsed: start.elapsed(),
    }
}

/// Run the named suites (all of them when `names` is empty) in parallel.
pub fn run_suites(names: &[String]) -> Result<Vec<SuiteReport>> {
    let selected: Vec<(&'static str, SuiteFn)> = if names.is_empty() {
        SUITES.to_vec()
    } else {
        names
            .iter()
            .map(|n| {
                SUITES
                    .iter()
                    .find(|(s, _)| s == n)
                    .copied()
                    .ok_or_else(|| Error::config(format!("unknown suite `{n}`; known: {}", suite_names().join(", "))))
            })
            .collect::<Result<_>>()?
    };
    Ok(selected.into_par_iter().map(|(n, f)| run_suite(n, f)).collect())
}

pub fn run_all() -> Vec<SuiteReport> {
    run_suites(&[]).expect("all suite names are known")
}

fn rate(t: &[f64], v: &[f64], window: (f64, f64)) -> Result<f64> {
    Ok(decay_rate_fit(t, v, window)?.rate())
}

fn rk4_order() -> Result<Vec<Check>> {
    struct Decay;
    impl OdeSystem for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
            dx[0] = -x[0];
            Ok(())
        }
    }
    let terminal_error = |h: f64| -> Result<f64> {
        let mut end = 0.0;
        integrate(&mut Decay, vec![1.0], &IntegratorConfig::new(h, 1.0, 1), vec![], |_, _, _, x| {
            end = x[0];
            Ok(())
        })?;
        Ok((end - (-1.0f64).exp()).abs())
    };
    let ratio = terminal_error(0.1)? / terminal_error(0.05)?;
    Ok(vec![Check::new(
        "halving the step divides the error by about 16",
        (8.0..=32.0).contains(&ratio),
        format!("ratio {ratio:.2}"),
    )])
}

fn csv_determinism() -> Result<Vec<Check>> {
    let mut cfg = synthetic_network(1.0, true)?;
    cfg.integrator.horizon = 2.0;
    let a = experiment::run(&cfg)?.series.to_csv_string();
    let b = experiment::run(&cfg)?.series.to_csv_string();
    cfg.noise.seed += 1;
    let c = experiment::run(&cfg)?.series.to_csv_string();
    Ok(vec![
        Check::new("same seed gives byte-identical CSV", a == b, format!("{} bytes", a.len())),
        Check::new("another seed changes the CSV", a != c, ""),
    ])
}

/// Three-channel regressor excited along two directions only.
fn deficient_regressor() -> SineSumRegressor {
    SineSumRegressor::new(vec![
        vec![SinusoidTerm::new(1.0, 1.0, 0.3)],
        vec![SinusoidTerm::new(-1.0, 1.0, 0.3)],
        vec![SinusoidTerm::new(0.5, 2.0, 0.0)],
    ])
    .expect("valid regressor")
}

fn excitation_certificate() -> Result<Vec<Check>> {
    use std::f64::consts::PI;
    let mut checks = Vec::new();
    let cases: [(&str, Box<dyn RegressorSignal>); 2] = [
        ("antiphase pair", Box::new(SineSumRegressor::antiphase_pair())),
        ("three channels", Box::new(deficient_regressor())),
    ];
    for (label, reg) in cases {
        let cert = excitation_analysis(reg.as_ref(), PI, 0.0, 10.0 * PI, 1e-8, 1e-3)?;
        let n = cert.dim();
        let (mut lo, mut hi) = (f64::INFINITY, f64::INFINITY);
        let mut leak: f64 = 0.0;
        let mut sup: f64 = 0.0;
        for k in 0..40 {
            let t0 = 0.23 * k as f64;
            let g = gram_window(reg.as_ref(), t0, cert.window, 1e-3)?;
            lo = lo.min(linalg::min_eigenvalue(&(&g - &cert.phi_a)));
            hi = hi.min(linalg::min_eigenvalue(&(&cert.phi_b - &g)));
            let phi = reg.eval(t0);
            leak = leak.max((cert.n_u.transpose() * &phi).norm());
            sup = sup.max(phi.norm());
        }
        let split = &cert.n_d * cert.n_d.transpose() + &cert.n_u * cert.n_u.transpose() - DMatrix::identity(n, n);
        checks.push(Check::at_least(format!("{label}: window Gram above lower bound"), lo, -1e-8));
        checks.push(Check::at_least(format!("{label}: window Gram below upper bound"), hi, -1e-8));
        checks.push(Check::at_most(format!("{label}: regressor orthogonal to blind basis"), leak, 1e-6 * sup));
        checks.push(Check::at_most(format!("{label}: bases split the space"), split.amax(), 1e-10));
    }
    Ok(checks)
}

fn subspace_convergence() -> Result<Vec<Check>> {
    let reg = SineSumRegressor::antiphase_pair();
    let s = 0.5f64.sqrt();
    let n_d = DMatrix::from_column_slice(2, 1, &[s, -s]);
    let mut checks = Vec::new();
    let mut rates = Vec::new();
    for gamma in [1.0, 2.0] {
        let hp = SubspaceHyperParams {
            gamma,
            ..Default::default()
        };
        let mut sys = SubspaceSystem::new(hp, &reg, 1e-3)?;
        let (mut t, mut err) = (Vec::new(), Vec::new());
        let (mut p_lo, mut p_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let x0 = sys.initial_state();
        integrate(&mut sys, x0, &IntegratorConfig::new(1e-3, 25.0, 10), vec![], |s, _, ti, x| {
            let (_, _, p) = s.matrices(x);
            let ev = linalg::sym_eigenvalues(&p);
            p_lo = p_lo.min(ev[0]);
            p_hi = p_hi.max(ev[1]);
            t.push(ti);
            err.push(subspace_error(&p, &n_d)?);
            Ok(())
        })?;
        checks.push(Check::at_most(format!("gamma {gamma}: projector error at t = 25"), *err.last().unwrap(), 1e-3));
        checks.push(Check::new(
            format!("gamma {gamma}: projector spectrum within [0, 1]"),
            p_lo >= -1e-6 && p_hi <= 1.0 + 1e-6,
            format!("[{p_lo:.2e}, {p_hi:.6}]"),
        ));
        rates.push(rate(&t, &err, (std::f64::consts::PI + 1.0, 15.0))?);
    }
    checks.push(Check::new(
        "larger gamma converges faster",
        rates[0] > 0.0 && rates[1] > rates[0],
        format!("rates {:.3} < {:.3}", rates[0], rates[1]),
    ));
    Ok(checks)
}

/// Identity diagnostics recorded by a run.
fn identity_checks(label: &str, out: &RunOutput) -> Vec<Check> {
    let s = &out.summary;
    let get = |k: &str| s.get(k).unwrap_or(f64::NAN);
    vec![
        Check::at_most(format!("{label}: inverse identity"), get("max_inv_res"), 1e-6),
        Check::at_most(format!("{label}: closed-form estimate"), get("max_cf_res"), 1e-6),
        Check::new(
            format!("{label}: projector spectrum within [0, 1]"),
            get("min_p_eig") >= -1e-6 && get("max_p_eig") <= 1.0 + 1e-6,
            format!("[{:.2e}, {:.9}]", get("min_p_eig"), get("max_p_eig")),
        ),
        Check::at_most(format!("{label}: oracle keeps the prior on blind directions"), get("max_prior_res"), 1e-8),
    ]
}

fn learner_identities() -> Result<Vec<Check>> {
    let runs = ["fig1", "fig2", "fig3", "fig4", "fig8", "fig9"]
        .par_iter()
        .map(|name| {
            let mut cfg = preset(name)?;
            cfg.output.columns.clear();
            Ok((*name, experiment::run(&cfg)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut checks = Vec::new();
    for (name, out) in &runs {
        checks.extend(identity_checks(name, out));
        if let Some(gap) = out.series.column("oracle_gap") {
            if out.final_estimates.len() == 1 {
                let t = out.series.times();
                let worst = t.iter().zip(&gap).filter(|(ti, _)| **ti >= 15.0).map(|(_, g)| *g).fold(0.0, f64::max);
                checks.push(Check::at_most(format!("{name}: tracks the least-squares optimum after t = 15"), worst, 1e-2));
                let r = rate(t, &gap, (5.0, 30.0))?;
                checks.push(Check::new(format!("{name}: optimum gap decays"), r > 0.0, format!("rate {r:.3}")));
            }
        }
    }
    Ok(checks)
}

fn noise_free_rate() -> Result<Vec<Check>> {
    let mut cfg = preset("app1_k3")?;
    cfg.output.fit_window = Some([10.0, 30.0]);
    let out = experiment::run(&cfg)?;
    let beta = cfg.estimator.beta;
    let r = out.summary.get("rate_id_err").unwrap_or(f64::NAN);
    Ok(vec![Check::at_least("identifiable error decays at least at 0.9 beta/2", r, 0.45 * beta)])
}

fn grid_oracle() -> Result<Vec<Check>> {
    let h = 1e-3;
    let horizon = 3.0;
    let theta = DVector::from_vec(vec![1.0, -1.0]);
    let reg = SineSumRegressor::new(vec![
        vec![SinusoidTerm::new(1.0, 1.0, 0.0)],
        vec![SinusoidTerm::new(1.0, 2.0, 0.7)],
    ])?;
    let hp = LearnerHyperParams {
        alpha: 1.0,
        beta: 1.0,
        kappa: 1.0,
        theta0: DVector::zeros(2),
    };
    let params = EstimatorParams {
        subspace: SubspaceHyperParams::default(),
        learner: hp.clone(),
    };
    let model = RegressionModel::new(Box::new(reg), theta, NoiseChannel::none())?;
    let mut sys = LearnerSystem::new(ModelSource::new(model), params, h)?;
    let (mut times, mut phis, mut zs) = (Vec::new(), Vec::new(), Vec::new());
    let mut last = None;
    let x0 = sys.initial_state();
    integrate(&mut sys, x0, &IntegratorConfig::new(h, horizon, 1), vec![], |s, _, t, x| {
        let (phi, z) = s.source.measure(0, t, s.source_state(x))?;
        times.push(t);
        phis.push(phi);
        zs.push(z);
        last = Some(s.snapshot(t, x));
        Ok(())
    })?;
    let snap = last.expect("recorded");
    let cert = ExcitationCertificate::from_basis(DMatrix::identity(2, 2), 1.0)?;
    let star = batch_lsq_oracle(&snap.q, &snap.varphi, &cert, snap.t, &hp)?.theta_star;

    // 5×5 grid whose centre is offset from the optimum by less than half a
    // spacing, so the optimum's nearest node is the centre.
    let spacing = 0.02;
    let centre = &star + DVector::from_vec(vec![0.3 * spacing, -0.2 * spacing]);
    let mut best = (f64::INFINITY, 0, 0);
    for i in 0..5 {
        for j in 0..5 {
            let cand = &centre + DVector::from_vec(vec![(i as f64 - 2.0) * spacing, (j as f64 - 2.0) * spacing]);
            let c = lsq_cost(&times, &phis, &zs, &cand, &hp);
            if c < best.0 {
                best = (c, i, j);
            }
        }
    }
    Ok(vec![
        Check::new(
            "grid minimiser is the node nearest the oracle optimum",
            (best.1, best.2) == (2, 2),
            format!("argmin node ({}, {}), optimum {:.4?}", best.1, best.2, star.as_slice()),
        ),
        Check::at_least("prior pulls the optimum off the true parameter", (&star - DVector::from_vec(vec![1.0, -1.0])).norm(), 1e-3),
    ])
}

fn fig7_graph() -> Result<DirectedGraph> {
    preset("app2")?.graph()
}

fn graph_positivity() -> Result<Vec<Check>> {
    let g = fig7_graph()?;
    let axis = |k: usize| {
        let mut m = DMatrix::zeros(3, 1);
        m[(k, 0)] = 1.0;
        m
    };
    let cert_for = |blind: &DMatrix<f64>| {
        let n_d = DMatrix::identity(3, 3) - blind * blind.transpose();
        ExcitationCertificate::from_basis(n_d, 1.0)
    };
    let positive: Vec<DMatrix<f64>> = (0..5).map(|i| axis(i % 3)).collect();
    let s = 0.5f64.sqrt();
    let shared = DMatrix::from_column_slice(3, 1, &[s, s, 0.0]);
    let negative: Vec<DMatrix<f64>> = vec![shared; 5];
    let mut checks = Vec::new();
    for (label, bases) in [("distinct blind axes", positive), ("shared blind direction", negative)] {
        let lam = linalg::min_eigenvalue(&positivity_matrix(&g, &bases)?);
        let certs = bases.iter().map(cert_for).collect::<Result<Vec<_>>>()?;
        let comp = complementary_de_check(&certs)?.complementary;
        checks.push(Check::new(
            format!("{label}: positivity agrees with complementarity"),
            (lam > 1e-9) == comp,
            format!("lambda_min {lam:.3e}, complementary {comp}"),
        ));
    }
    checks.push(Check::new(
        "both outcomes are exercised",
        checks.len() == 2 && checks[0].detail.contains("true") && checks[1].detail.contains("false"),
        "",
    ));
    Ok(checks)
}

fn ltv_harness() -> Result<Vec<Check>> {
    let cases: Vec<(u64, bool)> = (1..=20).flat_map(|s| [(s, false), (s, true)]).collect();
    cases
        .par_iter()
        .map(|&(seed, decaying)| {
            let r = ltv_convergence_harness(&random_instance(seed, 4, decaying))?;
            let mut detail = format!("tracking {:.3} >= {:.3}", r.tracking_rate, r.tracking_required);
            if let Some((fit, need)) = r.state_decay {
                detail.push_str(&format!(", state {fit:.3} >= {need:.3}"));
            }
            let kind = if decaying { "decaying" } else { "sinusoidal" };
            Ok(Check::new(format!("seed {seed}, {kind} reference"), r.passed, detail))
        })
        .collect()
}

fn consensus_hurwitz() -> Result<Vec<Check>> {
    let cfg = preset("app2")?;
    let plant = build_plant(cfg.plant.as_ref().expect("app2 has a plant"))?;
    let c = coupling_matrix(cfg.plant.as_ref().expect("app2 has a plant"), cfg.nodes.len())?;
    let plants = hurwitz_check(&network_matrix(&plant, &c));
    let certs = experiment::certificates(&cfg)?.expect("app2 has an analysis section");
    let graph = cfg.graph()?;
    let nodes = cfg.node_configs(plant.theta().len())?;
    let eta_u: Vec<f64> = nodes.iter().map(|n| n.eta_u).collect();
    let eta_d: Vec<f64> = nodes.iter().map(|n| n.eta_d).collect();
    let st = StackedBases::new(&graph, &certs, &eta_u, &eta_d)?;
    let consensus = hurwitz_check(&st.consensus_matrix());
    let bases: Vec<DMatrix<f64>> = certs.iter().map(|c| c.n_u.clone()).collect();
    let lam = linalg::min_eigenvalue(&positivity_matrix(&graph, &bases)?);
    let comp = complementary_de_check(&certs)?;
    Ok(vec![
        Check::new("coupled plants are stable", plants.stable, format!("abscissa {:.3}", plants.abscissa)),
        Check::new("local excitation is complementary", comp.complementary, format!("lambda_min {:.3e}", comp.lambda_min)),
        Check::new("consensus matrix is Hurwitz", consensus.stable, format!("abscissa {:.3e}", consensus.abscissa)),
        Check::new("positivity matrix is positive definite", lam > 0.0, format!("lambda_min {lam:.3e}")),
    ])
}

fn single_node_reduction() -> Result<Vec<Check>> {
    let h = 1e-3;
    let params = EstimatorParams {
        subspace: SubspaceHyperParams::default(),
        learner: LearnerHyperParams {
            alpha: 1.0,
            beta: 1.0,
            kappa: 1.0,
            theta0: DVector::from_vec(vec![0.5, 0.5]),
        },
    };
    let make = || {
        RegressionModel::new(
            Box::new(SineSumRegressor::antiphase_pair()),
            DVector::from_vec(vec![1.0, 2.0]),
            NoiseChannel::gaussian(0.3, 11),
        )
    };
    let cfg = IntegratorConfig::new(h, 5.0, 100);
    let mut solo = LearnerSystem::new(ModelSource::new(make()?), params.clone(), h)?;
    let mut a = Vec::new();
    let x0 = solo.initial_state();
    integrate(&mut solo, x0, &cfg, vec![], |s, _, t, x| {
        a.push(s.snapshot(t, x).theta_d);
        Ok(())
    })?;
    let node = NodeConfig {
        eta_d: 1.0,
        eta_u: 1.0,
        estimator: params,
    };
    let graph = DirectedGraph::from_edges(1, &[])?;
    let mut net = SensorNetwork::new(ModelBankSource::new(vec![make()?])?, graph, vec![node], h)?;
    let mut b = Vec::new();
    let x0 = net.initial_state();
    integrate(&mut net, x0, &cfg, vec![], |s, _, t, x| {
        b.push(s.snapshot(t, x).remove(0).estimator.theta_d);
        Ok(())
    })?;
    Ok(vec![Check::new(
        "one-node network reproduces the standalone learner bit for bit",
        a == b,
        format!("{} samples", a.len()),
    )])
}

/// Three nodes on a directed ring in R³; node `i` never sees coordinate `i`,
/// so every kernel is exact and the blind directions are complementary.
pub fn synthetic_network(eta_u_scale: f64, noisy: bool) -> Result<ExperimentConfig> {
    let noise = if noisy {
        "kind = \"gaussian\"\nsigma = 0.5\nseed = 17"
    } else {
        "kind = \"none\""
    };
    let tone = |a: f64, w: f64, p: f64| format!("{{ amplitude = {a:?}, frequency = {w:?}, phase = {p:?} }}");
    let node = |blind: usize, eta_u: f64, prior: f64| {
        let channels: Vec<String> = (0..3)
            .map(|k| {
                if k == blind {
                    "{ terms = [] }".to_string()
                } else {
                    format!("{{ terms = [{}] }}", tone(1.0 + k as f64 * 0.5, 1.0 + k as f64, 0.4 * blind as f64))
                }
            })
            .collect();
        format!(
            "[[nodes]]\neta_d = 1.0\neta_u = {eta_u:?}\ntheta0 = [{prior:?}, {prior:?}, {prior:?}]\nchannels = [{}]\n",
            channels.join(", ")
        )
    };
    let nodes: String = (0..3).map(|i| node(i, eta_u_scale * (1.0 + i as f64 * 0.5), i as f64 - 1.0)).collect();
    let text = format!(
        r#"name = "synthetic_network"
kind = "distributed"

[integrator]
step = 1e-3
horizon = 20.0
record_stride = 10

[noise]
{noise}

[estimator]
alpha = 1.0
beta = 1.0
gamma = 2.0
delta = 1.0
kappa = 1.0

[regressor]
theta = [1.0, -2.0, 3.0]

[graph]
edges = [[2, 1], [3, 2], [1, 3]]

{nodes}
[analysis]
window = 6.283185307179586
start = 0.0
horizon = 40.0

[output]
fit_window = [2.0, 12.0]
"#
    );
    ExperimentConfig::from_toml(&text)
}

fn network_properties() -> Result<Vec<Check>> {
    let runs = [(1.0, false), (2.0, false), (1.0, true)]
        .par_iter()
        .map(|&(scale, noisy)| experiment::run(&synthetic_network(scale, noisy)?))
        .collect::<Result<Vec<_>>>()?;
    let (base, fast, noisy) = (&runs[0], &runs[1], &runs[2]);
    let col = |o: &RunOutput, c: &str| o.series.column(c).expect("network diagnostics recorded");
    let t = base.series.times();
    let auto = col(base, "auto_gap");
    let nonauto = col(base, "nonauto");
    let noisy_nonauto = col(noisy, "nonauto");
    let band = noisy_nonauto[noisy_nonauto.len() / 2..].iter().copied().fold(0.0, f64::max);
    let r1 = base.summary.get("rate_ref_gap").unwrap_or(f64::NAN);
    let r2 = fast.summary.get("rate_ref_gap").unwrap_or(f64::NAN);
    let mut checks = vec![
        Check::at_most("autonomous coefficient reaches its limit", *auto.last().unwrap(), 1e-6),
        Check::new("autonomous gap decays exponentially", rate(t, &auto, (2.0, 12.0))? > 0.0, ""),
        Check::at_most("nonautonomous part vanishes without noise", *nonauto.last().unwrap(), 1e-3 * nonauto[0].max(1.0)),
        Check::new("nonautonomous part decays exponentially", rate(t, &nonauto, (2.0, 12.0))? > 0.0, ""),
        Check::new(
            "nonautonomous part stays in a bounded band with noise",
            band.is_finite() && band < noisy_nonauto[0].max(1.0),
            format!("sup over second half {band:.3e}"),
        ),
        Check::at_most("every node recovers the parameter", base.summary.get("final_max_err").unwrap_or(f64::NAN), 1e-3),
        Check::new(
            "doubling the consensus gains speeds up reference tracking",
            r1 > 0.0 && r2 > r1,
            format!("rates {r1:.3} < {r2:.3}"),
        ),
    ];
    for (label, o) in [("noise-free", base), ("doubled gains", fast), ("noisy", noisy)] {
        checks.extend(identity_checks(&format!("synthetic {label}"), o));
    }
    Ok(checks)
}

fn pi_representation() -> Result<Vec<Check>> {
    let cfg = preset("app1_k3")?;
    let src = sysid_source(&cfg)?;
    let plant = src.plant().clone();
    let n = plant.order();
    let mut sys = SourceOnly::new(src);
    let mut worst: f64 = 0.0;
    let x0 = sys.initial_state();
    integrate(&mut sys, x0, &IntegratorConfig::new(1e-3, 5.0, 250), vec![], |s, _, _, x| {
        let r = s.source.filter_bank(0, x).r_u;
        let pi = plant.pi_matrix(&r);
        let mut w_pow = DMatrix::identity(n, n);
        for _ in 0..n {
            let lhs = w_pow.row(0) * &pi;
            let rhs = r.transpose() * &w_pow;
            worst = worst.max((lhs - rhs).amax() / (1.0 + r.amax()));
            w_pow = &w_pow * &plant.w_mat;
        }
        Ok(())
    })?;
    Ok(vec![Check::at_most("first rows of W powers map the filter state through the representation", worst, 1e-8)])
}

fn algebraic_exactness() -> Result<Vec<Check>> {
    let cfg = preset("app1_k3")?;
    let src = sysid_source(&cfg)?;
    let theta = src.theta_true().clone();
    let mut sys = SourceOnly::new(src);
    let mut worst: f64 = 0.0;
    let x0 = sys.initial_state();
    integrate(&mut sys, x0, &IntegratorConfig::new(1e-3, 20.0, 10), vec![], |s, _, t, x| {
        let (phi, z) = s.source.measure(0, t, x)?;
        worst = worst.max((z - phi.dot(&theta)).abs());
        Ok(())
    })?;
    Ok(vec![Check::at_most("measurement equals regressor times parameter from rest", worst, 1e-6)])
}

fn noise_injection() -> Result<Vec<Check>> {
    let mut cfg = preset("app2")?;
    cfg.integrator.horizon = 5.0;
    let run = |noise: NoiseChannel| -> Result<(Vec<f64>, f64)> {
        let mut c = cfg.clone();
        c.noise = noise;
        let src = sysid_source(&c)?;
        let nodes = src.nodes();
        let mut sys = SourceOnly::new(src);
        let mut state = Vec::new();
        let mut r_y = 0.0;
        let x0 = sys.initial_state();
        integrate(&mut sys, x0, &c.integrator.config(), vec![], |s, _, _, x| {
            state = (0..nodes).flat_map(|i| s.source.plant_state(i, x).iter().copied().collect::<Vec<_>>()).collect();
            r_y = s.source.filter_bank(0, x).r_y.norm();
            Ok(())
        })?;
        Ok((state, r_y))
    };
    let (clean, ry_clean) = run(NoiseChannel::none())?;
    let (noisy, ry_noisy) = run(NoiseChannel::gaussian(1.0, 5))?;
    Ok(vec![
        Check::new("noise leaves plant states untouched", clean == noisy, ""),
        Check::new("noise reaches the output filters", ry_clean != ry_noisy, ""),
    ])
}
