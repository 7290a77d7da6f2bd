//! Fixed-step classic Runge–Kutta integration over flat state vectors.

use crate::error::{Error, Result};

/// A first-order ODE system `ẋ = f(t, x)` over a flat state vector.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    fn rhs(&self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()>;

    /// Human-readable name of the state block holding `index`, used in
    /// integration error messages.
    fn block_name(&self, index: usize) -> String {
        format!("x[{index}]")
    }

    /// Called at every grid node before the step that leaves it (and once at
    /// the final node). Sample-and-hold updates and per-step noise draws
    /// happen here.
    fn at_node(&mut self, _step: u64, _t: f64, _x: &mut [f64]) -> Result<()> {
        Ok(())
    }
}

/// Scratch buffers for one RK4 step.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Rk4 {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Advance `x` from `t` to `t + h` in place.
    pub fn step<S: OdeSystem + ?Sized>(
        &mut self,
        sys: &S,
        t: f64,
        x: &mut [f64],
        h: f64,
    ) -> Result<()> {
        let n = x.len();
        if self.k1.len() != n {
            *self = Rk4::new(n);
        }
        let half = 0.5 * h;

        eval(sys, t, x, &mut self.k1)?;
        for i in 0..n {
            self.tmp[i] = x[i] + half * self.k1[i];
        }
        eval(sys, t + half, &self.tmp, &mut self.k2)?;
        for i in 0..n {
            self.tmp[i] = x[i] + half * self.k2[i];
        }
        eval(sys, t + half, &self.tmp, &mut self.k3)?;
        for i in 0..n {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        eval(sys, t + h, &self.tmp, &mut self.k4)?;

        let sixth = h / 6.0;
        for i in 0..n {
            x[i] += sixth * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        Ok(())
    }
}

fn eval<S: OdeSystem + ?Sized>(sys: &S, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
    sys.rhs(t, x, dx)?;
    if let Some(bad) = dx.iter().position(|v| !v.is_finite()) {
        return Err(Error::Integration {
            t,
            block: sys.block_name(bad),
        });
    }
    Ok(())
}

/// Step size, horizon and recording stride of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub step: f64,
    pub horizon: f64,
    pub record_stride: u64,
}

impl IntegratorConfig {
    pub fn new(step: f64, horizon: f64, record_stride: u64) -> Self {
        IntegratorConfig {
            step,
            horizon,
            record_stride,
        }
    }

    /// Number of steps covering the horizon; the horizon must be an integer
    /// multiple of the step.
    pub fn steps(&self) -> Result<u64> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::config(format!("step must be positive, got {}", self.step)));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::config(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::config("record_stride must be at least 1"));
        }
        grid_multiple(self.horizon, self.step, "horizon")
    }
}

/// `span / step` as an integer, or a configuration error when `span` is not
/// on the integration grid (relative tolerance 1e-9).
pub fn grid_multiple(span: f64, step: f64, what: &str) -> Result<u64> {
    let ratio = span / step;
    let rounded = ratio.round();
    if rounded < 1.0 || (ratio - rounded).abs() > 1e-9 * rounded.max(1.0) {
        return Err(Error::config(format!(
            "{what} = {span} is not an integer multiple of the step {step}"
        )));
    }
    Ok(rounded as u64)
}

/// One-shot action fired at a grid node.
pub struct EventHook<'a, S> {
    pub time: f64,
    pub action: Box<dyn FnMut(&mut S, f64, &mut [f64]) -> Result<()> + 'a>,
}

impl<'a, S> EventHook<'a, S> {
    pub fn new(time: f64, action: impl FnMut(&mut S, f64, &mut [f64]) -> Result<()> + 'a) -> Self {
        EventHook {
            time,
            action: Box::new(action),
        }
    }
}

/// Integrate `sys` from `x0` over the configured horizon.
///
/// Hooks fire at their grid node before `at_node` and before recording; the
/// recorder sees every `record_stride`-th node including `t = 0`. Returns the
/// terminal state.
pub fn integrate<'a, S, F>(
    sys: &mut S,
    x0: Vec<f64>,
    config: &IntegratorConfig,
    hooks: Vec<EventHook<'a, S>>,
    mut record: F,
) -> Result<Vec<f64>>
where
    S: OdeSystem,
    F: FnMut(&S, u64, f64, &[f64]) -> Result<()>,
{
    let steps = config.steps()?;
    let h = config.step;
    if x0.len() != sys.dim() {
        return Err(Error::contract(format!(
            "initial state has length {}, system dimension is {}",
            x0.len(),
            sys.dim()
        )));
    }
    let mut scheduled: Vec<(u64, EventHook<'a, S>)> = Vec::with_capacity(hooks.len());
    for hook in hooks {
        let ratio = hook.time / h;
        let node = ratio.round();
        if node < 0.0 || (ratio - node).abs() > 1e-9 * node.max(1.0) || node as u64 > steps {
            return Err(Error::config(format!(
                "event at t = {} is not a grid node of the run",
                hook.time
            )));
        }
        scheduled.push((node as u64, hook));
    }
    scheduled.sort_by_key(|(node, _)| *node);

    let mut x = x0;
    let mut rk = Rk4::new(x.len());
    let mut next_hook = 0;
    for i in 0..=steps {
        let t = i as f64 * h;
        while next_hook < scheduled.len() && scheduled[next_hook].0 == i {
            (scheduled[next_hook].1.action)(sys, t, &mut x)?;
            next_hook += 1;
        }
        sys.at_node(i, t, &mut x)?;
        if i % config.record_stride == 0 {
            record(sys, i, t, &x)?;
        }
        if i < steps {
            rk.step(sys, t, &mut x, h)?;
        }
    }
    Ok(x)
}
