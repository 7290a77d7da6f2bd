//! Builds the objects described by an [`ExperimentConfig`], runs them and
//! collects recorded columns plus a summary.

use std::fmt;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::config::{one_based, ChannelSection, ExperimentConfig, ExperimentKind, PlantSection};
use crate::distributed::{complementary_de_check, reference_trajectory, NodeSnapshot, SensorNetwork, StackedBases};
use crate::error::{Error, Result};
use crate::learner::{batch_lsq_oracle, EstimatorSnapshot, LearnerHyperParams, LearnerSystem};
use crate::linalg;
use crate::regression::{excitation_analysis, ExcitationCertificate, RegressionModel, RegressorSignal, SineSumRegressor};
use crate::simkit::{decay_rate_fit, hurwitz_check, integrate, NoiseChannel, TimeSeries};
use crate::source::{sample_regressors, MeasurementSource, ModelBankSource, ModelSource};
use crate::subspace::{subspace_error, SubspaceSystem};
use crate::sysid::{make_plant, CanonicalPlant, InputSignal, SysidSource};

/// Ordered name/value pairs printed after a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    pub entries: Vec<(String, f64)>,
}

impl Summary {
    fn add(&mut self, name: impl Into<String>, value: f64) {
        self.entries.push((name.into(), value));
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.entries.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
        for (name, value) in &self.entries {
            writeln!(f, "  {name:<width$}  {value:>12.4e}")?;
        }
        Ok(())
    }
}

pub struct RunOutput {
    pub name: String,
    pub series: TimeSeries,
    pub summary: Summary,
    pub theta_true: DVector<f64>,
    /// Estimator state of every node at the horizon.
    pub final_snapshots: Vec<EstimatorSnapshot>,
    /// Final estimate of every node (for networks this includes the
    /// consensus part).
    pub final_estimates: Vec<DVector<f64>>,
    pub certificates: Vec<ExcitationCertificate>,
    pub elapsed: Duration,
}

impl RunOutput {
    /// Columns the config asks for, all of them when none are listed.
    pub fn selected(&self, cfg: &ExperimentConfig) -> Result<TimeSeries> {
        if cfg.output.columns.is_empty() {
            Ok(self.series.clone())
        } else {
            self.series.select(&cfg.output.columns)
        }
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let mut out = match cfg.kind {
        ExperimentKind::Subspace => run_subspace(cfg),
        ExperimentKind::Learn => {
            let cert = certificates(cfg)?.map(|mut c| c.remove(0));
            run_single(cfg, ModelSource::new(single_model(cfg)?), cert)
        }
        ExperimentKind::SysidSingle => {
            let cert = certificates(cfg)?.map(|mut c| c.remove(0));
            run_single(cfg, sysid_source(cfg)?, cert)
        }
        ExperimentKind::Distributed => run_network(cfg, model_bank(cfg)?, certificates(cfg)?),
        ExperimentKind::SysidNetwork => run_network(cfg, sysid_source(cfg)?, certificates(cfg)?),
        ExperimentKind::Verify => Err(Error::config("verification suites are run through the verify module")),
    }?;
    out.elapsed = start.elapsed();
    out.summary.add("runtime_s", out.elapsed.as_secs_f64());
    Ok(out)
}

/// Excitation certificate of every node, from the noise-free regressors;
/// `None` when the config has no `[analysis]` section.
pub fn certificates(cfg: &ExperimentConfig) -> Result<Option<Vec<ExcitationCertificate>>> {
    if cfg.analysis.is_none() {
        return Ok(None);
    }
    let (a, tol) = cfg.analysis()?;
    let analyse = |r: &dyn RegressorSignal| excitation_analysis(r, a.window, a.start, a.horizon, tol, a.quad_step);
    let certs = match cfg.kind {
        ExperimentKind::Subspace | ExperimentKind::Learn => {
            let r = cfg.regressor.as_ref().ok_or_else(|| Error::config("missing [regressor] section"))?;
            vec![analyse(&sine_regressor(&r.channels)?)?]
        }
        ExperimentKind::Distributed => node_regressors(cfg)?
            .par_iter()
            .map(|r| analyse(r))
            .collect::<Result<Vec<_>>>()?,
        ExperimentKind::SysidSingle | ExperimentKind::SysidNetwork => {
            let clean = sysid_source(cfg)?.with_noise(NoiseChannel::none())?;
            sample_regressors(clean, cfg.integrator.step, a.horizon)?
                .par_iter()
                .map(|r| analyse(r))
                .collect::<Result<Vec<_>>>()?
        }
        ExperimentKind::Verify => return Ok(None),
    };
    Ok(Some(certs))
}

fn sine_regressor(channels: &[ChannelSection]) -> Result<SineSumRegressor> {
    SineSumRegressor::new(channels.iter().map(|c| c.terms.clone()).collect())
}

fn theta_true(cfg: &ExperimentConfig) -> Result<DVector<f64>> {
    let r = cfg.regressor.as_ref().ok_or_else(|| Error::config("missing [regressor] section"))?;
    Ok(DVector::from_vec(r.theta.clone()))
}

fn single_model(cfg: &ExperimentConfig) -> Result<RegressionModel> {
    let r = cfg.regressor.as_ref().ok_or_else(|| Error::config("missing [regressor] section"))?;
    RegressionModel::new(Box::new(sine_regressor(&r.channels)?), theta_true(cfg)?, cfg.noise)
}

fn node_regressors(cfg: &ExperimentConfig) -> Result<Vec<SineSumRegressor>> {
    cfg.nodes
        .iter()
        .enumerate()
        .map(|(i, n)| {
            if n.channels.is_empty() {
                return Err(Error::config(format!("node {} has no regressor channels", i + 1)));
            }
            sine_regressor(&n.channels)
        })
        .collect()
}

fn model_bank(cfg: &ExperimentConfig) -> Result<ModelBankSource> {
    let theta = theta_true(cfg)?;
    let models = node_regressors(cfg)?
        .into_iter()
        .map(|r| RegressionModel::new(Box::new(r), theta.clone(), cfg.noise))
        .collect::<Result<Vec<_>>>()?;
    ModelBankSource::new(models)
}

pub fn build_plant(p: &PlantSection) -> Result<CanonicalPlant> {
    let v = |x: &[f64]| DVector::from_column_slice(x);
    make_plant(v(&p.f), v(&p.b), p.g.as_deref().map(v), v(&p.w))
}

/// Coupling matrix `c_ij` from one-based `[receiver, sender]` pairs.
pub fn coupling_matrix(p: &PlantSection, nodes: usize) -> Result<DMatrix<f64>> {
    let mut c = DMatrix::zeros(nodes, nodes);
    for (i, j) in one_based(&p.coupling, nodes, "coupling pair")? {
        c[(i, j)] = 1.0;
    }
    Ok(c)
}

pub fn sysid_source(cfg: &ExperimentConfig) -> Result<SysidSource> {
    let p = cfg.plant.as_ref().ok_or_else(|| Error::config("missing [plant] section"))?;
    let plant = build_plant(p)?;
    let x0 = match &p.x0 {
        Some(x) => DVector::from_column_slice(x),
        None => DVector::zeros(plant.order()),
    };
    let inputs: Vec<InputSignal> = p.inputs.iter().map(|c| InputSignal { terms: c.terms.clone() }).collect();
    match cfg.kind {
        ExperimentKind::SysidSingle => {
            if inputs.len() != 1 {
                return Err(Error::config(format!("a single plant takes one input, got {}", inputs.len())));
            }
            SysidSource::single(plant, inputs[0].clone(), x0, cfg.noise)
        }
        _ => {
            let nodes = inputs.len();
            if nodes != cfg.nodes.len() {
                return Err(Error::config(format!(
                    "{nodes} plant inputs but {} estimator nodes",
                    cfg.nodes.len()
                )));
            }
            let c = coupling_matrix(p, nodes)?;
            SysidSource::network(plant, inputs, c, vec![x0; nodes], cfg.noise)
        }
    }
}

fn fit_rate(series: &TimeSeries, column: &str, window: (f64, f64)) -> f64 {
    match series.column(column) {
        Some(v) => decay_rate_fit(series.times(), &v, window).map(|f| f.rate()).unwrap_or(f64::NAN),
        None => f64::NAN,
    }
}

fn column_max(series: &TimeSeries, column: &str) -> f64 {
    series.column(column).map_or(f64::NAN, |v| v.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

fn column_min(series: &TimeSeries, column: &str) -> f64 {
    series.column(column).map_or(f64::NAN, |v| v.into_iter().fold(f64::INFINITY, f64::min))
}

/// Diagnostics shared by single and network runs for one estimator.
struct Identities {
    inv_res: f64,
    cf_res: f64,
    p_min: f64,
    p_max: f64,
}

fn identities(s: &EstimatorSnapshot, hp: &LearnerHyperParams) -> Identities {
    let ev = linalg::sym_eigenvalues(&s.p);
    Identities {
        inv_res: s.inverse_identity_residual(hp),
        cf_res: s.closed_form_residual(),
        p_min: ev[0],
        p_max: ev[ev.len() - 1],
    }
}

/// `‖N_uᵀ(θ* − θ₀)‖`: the oracle keeps the prior in unexcited directions.
fn prior_residual(theta_star: &DVector<f64>, cert: &ExcitationCertificate, hp: &LearnerHyperParams) -> f64 {
    (cert.n_u.transpose() * (theta_star - &hp.theta0)).norm()
}

fn run_subspace(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let r = cfg.regressor.as_ref().ok_or_else(|| Error::config("missing [regressor] section"))?;
    let reg = sine_regressor(&r.channels)?;
    let n = reg.dim();
    let cert = certificates(cfg)?.map(|mut c| c.remove(0));
    let hp = cfg.estimator_params(0, n)?.subspace;
    let mut sys = SubspaceSystem::new(hp, &reg, cfg.integrator.step)?;
    let mut names = vec!["rank".to_string(), "p_eig_min".into(), "p_eig_max".into()];
    if cert.is_some() {
        names.push("p_gap".into());
    }
    let mut series = TimeSeries::new(names);
    let x0 = sys.initial_state();
    integrate(&mut sys, x0, &cfg.integrator.config(), vec![], |s, _, t, x| {
        let (_, _, p) = s.matrices(x);
        let ev = linalg::sym_eigenvalues(&p);
        let mut row = vec![(n - s.held_basis().ncols()) as f64, ev[0], ev[n - 1]];
        if let Some(c) = &cert {
            row.push(subspace_error(&p, &c.n_d)?);
        }
        series.push(t, row)
    })?;
    let mut summary = Summary::default();
    summary.add("final_rank", series.last("rank").unwrap_or(f64::NAN));
    if cert.is_some() {
        summary.add("final_p_gap", series.last("p_gap").unwrap_or(f64::NAN));
        summary.add("rate_p_gap", fit_rate(&series, "p_gap", cfg.fit_window()));
    }
    Ok(RunOutput {
        name: cfg.name.clone(),
        series,
        summary,
        theta_true: DVector::from_vec(r.theta.clone()),
        final_snapshots: vec![],
        final_estimates: vec![],
        certificates: cert.into_iter().collect(),
        elapsed: Duration::ZERO,
    })
}

fn run_single<S: MeasurementSource>(
    cfg: &ExperimentConfig,
    source: S,
    cert: Option<ExcitationCertificate>,
) -> Result<RunOutput> {
    let n = source.param_dim();
    let theta = source.theta_true().clone();
    let params = cfg.estimator_params(0, n)?;
    let hp = params.learner.clone();
    let mut sys = LearnerSystem::new(source, params, cfg.integrator.step)?;

    let mut names: Vec<String> = vec!["err".into(), "sub_err".into()];
    names.extend((1..=n).map(|k| format!("e{k}")));
    names.extend(["rank", "inv_res", "cf_res", "p_eig_min", "p_eig_max"].map(String::from));
    if cert.is_some() {
        names.extend(["id_err", "oracle_gap", "prior_res", "p_gap"].map(String::from));
    }
    let mut series = TimeSeries::new(names);
    let mut last = None;
    let x0 = sys.initial_state();
    integrate(&mut sys, x0, &cfg.integrator.config(), vec![], |s, _, t, x| {
        let snap = s.snapshot(t, x);
        let e = &snap.theta_hat - &theta;
        let mut row = vec![e.norm(), (&snap.p * &e).norm()];
        row.extend(e.iter());
        let id = identities(&snap, &hp);
        row.extend([(n - s.held_basis().ncols()) as f64, id.inv_res, id.cf_res, id.p_min, id.p_max]);
        if let Some(c) = &cert {
            let star = batch_lsq_oracle(&snap.q, &snap.varphi, c, t, &hp)?;
            row.push((c.n_d.transpose() * &e).norm());
            row.push((&snap.theta_hat - &star.theta_star).norm());
            row.push(prior_residual(&star.theta_star, c, &hp));
            row.push(subspace_error(&snap.p, &c.n_d)?);
        }
        last = Some(snap);
        series.push(t, row)
    })?;
    let last = last.ok_or_else(|| Error::config("nothing was recorded"))?;

    let fit = cfg.fit_window();
    let mut summary = Summary::default();
    for col in ["err", "sub_err", "id_err", "oracle_gap"] {
        if series.column_index(col).is_some() {
            summary.add(format!("final_{col}"), series.last(col).unwrap_or(f64::NAN));
            summary.add(format!("rate_{col}"), fit_rate(&series, col, fit));
        }
    }
    summary.add("final_rank", series.last("rank").unwrap_or(f64::NAN));
    summary.add("max_inv_res", column_max(&series, "inv_res"));
    summary.add("max_cf_res", column_max(&series, "cf_res"));
    summary.add("min_p_eig", column_min(&series, "p_eig_min"));
    summary.add("max_p_eig", column_max(&series, "p_eig_max"));
    if cert.is_some() {
        summary.add("max_prior_res", column_max(&series, "prior_res"));
    }
    Ok(RunOutput {
        name: cfg.name.clone(),
        series,
        summary,
        theta_true: theta,
        final_estimates: vec![last.theta_hat.clone()],
        final_snapshots: vec![last],
        certificates: cert.into_iter().collect(),
        elapsed: Duration::ZERO,
    })
}

fn stack_errors(nodes: &[DVector<f64>], theta: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        nodes.len() * theta.len(),
        nodes.iter().flat_map(|s| (s - theta).iter().copied().collect::<Vec<_>>()),
    )
}

fn run_network<S: MeasurementSource>(
    cfg: &ExperimentConfig,
    source: S,
    certs: Option<Vec<ExcitationCertificate>>,
) -> Result<RunOutput> {
    let n = source.param_dim();
    let count = source.nodes();
    let theta = source.theta_true().clone();
    let graph = cfg.graph()?;
    let node_cfgs = cfg.node_configs(n)?;
    let hps: Vec<LearnerHyperParams> = node_cfgs.iter().map(|c| c.estimator.learner.clone()).collect();
    let eta_u: Vec<f64> = node_cfgs.iter().map(|c| c.eta_u).collect();
    let eta_d: Vec<f64> = node_cfgs.iter().map(|c| c.eta_d).collect();

    let mut summary = Summary::default();
    // The comparison system only exists when the blind directions are
    // jointly covered.
    let stacked = match &certs {
        Some(cs) => {
            let report = complementary_de_check(cs)?;
            summary.add("complementary", f64::from(u8::from(report.complementary)));
            summary.add("excitation_lambda_min", report.lambda_min);
            let st = StackedBases::new(&graph, cs, &eta_u, &eta_d)?;
            let abscissa = hurwitz_check(&st.consensus_matrix()).abscissa;
            summary.add("consensus_abscissa", abscissa);
            (report.complementary && abscissa < 0.0).then_some(st)
        }
        None => None,
    };

    let mut sys = SensorNetwork::new(source, graph, node_cfgs, cfg.integrator.step)?;
    let mut base: Vec<String> = (1..=count).map(|i| format!("err{i}")).collect();
    base.extend(["max_err", "inv_res", "cf_res", "p_eig_min", "p_eig_max"].map(String::from));
    if certs.is_some() {
        base.extend(["oracle_gap", "prior_res"].map(String::from));
    }
    if stacked.is_some() {
        base.extend(["auto_gap", "nonauto"].map(String::from));
    }
    let mut rows: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut stars: Vec<Vec<DVector<f64>>> = Vec::new();
    let mut actual: Vec<DVector<f64>> = Vec::new();
    let mut last: Option<Vec<NodeSnapshot>> = None;
    let x0 = sys.initial_state();
    integrate(&mut sys, x0, &cfg.integrator.config(), vec![], |s, _, t, x| {
        let snap = s.snapshot(t, x);
        let errs: Vec<f64> = snap.iter().map(|s| (&s.theta_hat - &theta).norm()).collect();
        let mut row = errs.clone();
        row.push(errs.iter().copied().fold(0.0, f64::max));
        let mut id = Identities {
            inv_res: 0.0,
            cf_res: 0.0,
            p_min: f64::INFINITY,
            p_max: f64::NEG_INFINITY,
        };
        for (s, hp) in snap.iter().zip(&hps) {
            let k = identities(&s.estimator, hp);
            id.inv_res = id.inv_res.max(k.inv_res);
            id.cf_res = id.cf_res.max(k.cf_res);
            id.p_min = id.p_min.min(k.p_min);
            id.p_max = id.p_max.max(k.p_max);
        }
        row.extend([id.inv_res, id.cf_res, id.p_min, id.p_max]);
        if let Some(cs) = &certs {
            let sols = snap
                .iter()
                .zip(cs)
                .zip(&hps)
                .map(|((s, c), hp)| batch_lsq_oracle(&s.estimator.q, &s.estimator.varphi, c, t, hp))
                .collect::<Result<Vec<_>>>()?;
            let gap = snap
                .iter()
                .zip(&sols)
                .map(|(s, sol)| (&s.estimator.theta_hat - &sol.theta_star).norm())
                .fold(0.0, f64::max);
            let prior = sols
                .iter()
                .zip(cs)
                .zip(&hps)
                .map(|((sol, c), hp)| prior_residual(&sol.theta_star, c, hp))
                .fold(0.0, f64::max);
            row.extend([gap, prior]);
            stars.push(sols.into_iter().map(|s| s.theta_star).collect());
        }
        if let Some(st) = &stacked {
            let projs: Vec<DMatrix<f64>> = snap.iter().map(|s| s.estimator.p.clone()).collect();
            row.push(st.autonomous_gap(&projs));
            row.push(st.nonautonomous_residual(&snap, &theta));
            let hats: Vec<DVector<f64>> = snap.iter().map(|s| s.theta_hat.clone()).collect();
            actual.push(stack_errors(&hats, &theta));
        }
        rows.push((t, row));
        last = Some(snap);
        Ok(())
    })?;
    let last = last.ok_or_else(|| Error::config("nothing was recorded"))?;

    let mut names = base;
    let times: Vec<f64> = rows.iter().map(|(t, _)| *t).collect();
    if let Some(st) = &stacked {
        let reference = reference_trajectory(st, &times, &stars, &theta)?;
        for ((_, row), (r, a)) in rows.iter_mut().zip(reference.iter().zip(&actual)) {
            row.push((r - a).norm());
        }
        names.push("ref_gap".into());
    }
    let mut series = TimeSeries::new(names);
    for (t, row) in rows {
        series.push(t, row)?;
    }

    let fit = cfg.fit_window();
    summary.add("final_max_err", series.last("max_err").unwrap_or(f64::NAN));
    summary.add("rate_max_err", fit_rate(&series, "max_err", fit));
    if stacked.is_some() {
        summary.add("final_ref_gap", series.last("ref_gap").unwrap_or(f64::NAN));
        summary.add("rate_ref_gap", fit_rate(&series, "ref_gap", fit));
        summary.add("final_auto_gap", series.last("auto_gap").unwrap_or(f64::NAN));
    }
    summary.add("max_inv_res", column_max(&series, "inv_res"));
    summary.add("max_cf_res", column_max(&series, "cf_res"));
    summary.add("min_p_eig", column_min(&series, "p_eig_min"));
    summary.add("max_p_eig", column_max(&series, "p_eig_max"));
    if certs.is_some() {
        summary.add("max_prior_res", column_max(&series, "prior_res"));
    }
    let final_estimates = last.iter().map(|s| s.theta_hat.clone()).collect();
    Ok(RunOutput {
        name: cfg.name.clone(),
        series,
        summary,
        theta_true: theta,
        final_snapshots: last.into_iter().map(|s| s.estimator).collect(),
        final_estimates,
        certificates: certs.unwrap_or_default(),
        elapsed: Duration::ZERO,
    })
}
