//! Fixtures shared by the benchmarks: the shipped presets turned into
//! ready-to-integrate systems together with their initial states.

use delearn_core::config::preset;
use delearn_core::distributed::SensorNetwork;
use delearn_core::experiment::sysid_source;
use delearn_core::learner::LearnerSystem;
use delearn_core::source::MeasurementSource;
use delearn_core::sysid::SysidSource;
use delearn_core::Result;

/// Single-estimator identification system of a preset (`app1_k1`, `app1_k3`).
pub fn single_learner(name: &str) -> Result<(LearnerSystem<SysidSource>, Vec<f64>)> {
    let cfg = preset(name)?;
    let source = sysid_source(&cfg)?;
    let params = cfg.estimator_params(0, source.param_dim())?;
    let sys = LearnerSystem::new(source, params, cfg.integrator.step)?;
    let x0 = sys.initial_state();
    Ok((sys, x0))
}

/// The five-node identification network.
pub fn network() -> Result<(SensorNetwork<SysidSource>, Vec<f64>)> {
    let cfg = preset("app2")?;
    let source = sysid_source(&cfg)?;
    let nodes = cfg.node_configs(source.param_dim())?;
    let sys = SensorNetwork::new(source, cfg.graph()?, nodes, cfg.integrator.step)?;
    let x0 = sys.initial_state();
    Ok((sys, x0))
}
