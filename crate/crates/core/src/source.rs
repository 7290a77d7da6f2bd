//! Measurement sources feeding one or more estimators.
//!
//! A source may carry its own ODE state (plants, filters) which is integrated
//! in lockstep with the estimators, so every RK4 stage sees consistent
//! regressors and measurements.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::regression::{RegressionModel, SampledRegressor};
use crate::simkit::{integrate, IntegratorConfig, NoiseStream, OdeSystem};

pub trait MeasurementSource: Send + Sync {
    /// Number of measurement channels (estimator nodes).
    fn nodes(&self) -> usize;

    fn param_dim(&self) -> usize;

    /// Ground truth, for diagnostics only.
    fn theta_true(&self) -> &DVector<f64>;

    fn state_dim(&self) -> usize {
        0
    }

    fn initial_state(&self) -> Vec<f64> {
        vec![0.0; self.state_dim()]
    }

    fn rhs(&self, _t: f64, _s: &[f64], _ds: &mut [f64]) -> Result<()> {
        Ok(())
    }

    /// Regressor and measurement seen by `node` at time `t` given the source
    /// state `s`.
    fn measure(&self, node: usize, t: f64, s: &[f64]) -> Result<(DVector<f64>, f64)>;

    /// Called once per grid node before the step leaving it; noise samples
    /// for the coming step are drawn here.
    fn at_node(&mut self, _step: u64, _t: f64, _s: &[f64]) -> Result<()> {
        Ok(())
    }

    fn name(&self) -> &str;
}

pub(crate) fn check_finite(name: &str, t: f64, phi: &DVector<f64>, z: f64) -> Result<()> {
    if !z.is_finite() || phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::Evaluation {
            source_name: name.to_string(),
            t,
        });
    }
    Ok(())
}

/// A regression model with step-held measurement noise.
pub struct ModelSource {
    model: RegressionModel,
    stream: NoiseStream,
    eps: f64,
}

impl ModelSource {
    pub fn new(model: RegressionModel) -> Self {
        let stream = model.noise.stream(0);
        ModelSource {
            model,
            stream,
            eps: 0.0,
        }
    }

    pub fn model(&self) -> &RegressionModel {
        &self.model
    }
}

impl MeasurementSource for ModelSource {
    fn nodes(&self) -> usize {
        1
    }

    fn param_dim(&self) -> usize {
        self.model.dim()
    }

    fn theta_true(&self) -> &DVector<f64> {
        &self.model.theta_true
    }

    fn measure(&self, _node: usize, t: f64, _s: &[f64]) -> Result<(DVector<f64>, f64)> {
        let (phi, z) = self.model.measure(t, self.eps);
        check_finite(self.model.regressor.name(), t, &phi, z)?;
        Ok((phi, z))
    }

    fn at_node(&mut self, _step: u64, _t: f64, _s: &[f64]) -> Result<()> {
        self.eps = self.stream.sample();
        Ok(())
    }

    fn name(&self) -> &str {
        self.model.regressor.name()
    }
}

/// Several independent regression models, one per node, each with its own
/// noise stream.
pub struct ModelBankSource {
    models: Vec<RegressionModel>,
    streams: Vec<NoiseStream>,
    eps: Vec<f64>,
}

impl ModelBankSource {
    pub fn new(models: Vec<RegressionModel>) -> Result<Self> {
        let first = models.first().ok_or_else(|| Error::config("no models"))?;
        let n = first.dim();
        if models.iter().any(|m| m.dim() != n || m.theta_true != first.theta_true) {
            return Err(Error::config("all node models must share the parameter vector"));
        }
        let streams = models
            .iter()
            .enumerate()
            .map(|(i, m)| m.noise.stream(i as u64))
            .collect();
        let eps = vec![0.0; models.len()];
        Ok(ModelBankSource { models, streams, eps })
    }
}

impl MeasurementSource for ModelBankSource {
    fn nodes(&self) -> usize {
        self.models.len()
    }

    fn param_dim(&self) -> usize {
        self.models[0].dim()
    }

    fn theta_true(&self) -> &DVector<f64> {
        &self.models[0].theta_true
    }

    fn measure(&self, node: usize, t: f64, _s: &[f64]) -> Result<(DVector<f64>, f64)> {
        let (phi, z) = self.models[node].measure(t, self.eps[node]);
        check_finite(self.models[node].regressor.name(), t, &phi, z)?;
        Ok((phi, z))
    }

    fn at_node(&mut self, _step: u64, _t: f64, _s: &[f64]) -> Result<()> {
        for (e, s) in self.eps.iter_mut().zip(&mut self.streams) {
            *e = s.sample();
        }
        Ok(())
    }

    fn name(&self) -> &str {
        "model bank"
    }
}

/// Integrates a source's own state without any estimator attached.
pub struct SourceOnly<S> {
    pub source: S,
}

impl<S: MeasurementSource> SourceOnly<S> {
    pub fn new(source: S) -> Self {
        SourceOnly { source }
    }

    pub fn initial_state(&self) -> Vec<f64> {
        self.source.initial_state()
    }
}

impl<S: MeasurementSource> OdeSystem for SourceOnly<S> {
    fn dim(&self) -> usize {
        self.source.state_dim()
    }

    fn rhs(&self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
        self.source.rhs(t, x, dx)
    }

    fn at_node(&mut self, step: u64, t: f64, x: &mut [f64]) -> Result<()> {
        self.source.at_node(step, t, x)
    }
}

/// Record each node's regressor on the integration grid and wrap the samples
/// as interpolated signals, for offline excitation analysis.
pub fn sample_regressors<S: MeasurementSource>(
    source: S,
    step: f64,
    horizon: f64,
) -> Result<Vec<SampledRegressor>> {
    let nodes = source.nodes();
    let mut sys = SourceOnly::new(source);
    let x0 = sys.initial_state();
    let cfg = IntegratorConfig::new(step, horizon, 1);
    let mut samples: Vec<Vec<DVector<f64>>> = vec![Vec::new(); nodes];
    integrate(&mut sys, x0, &cfg, vec![], |s, _, t, x| {
        for (i, out) in samples.iter_mut().enumerate() {
            out.push(s.source.measure(i, t, x)?.0);
        }
        Ok(())
    })?;
    samples
        .into_iter()
        .map(|s| SampledRegressor::new(0.0, step, s))
        .collect()
}
