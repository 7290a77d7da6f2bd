//! Experiment description files (TOML) and the presets shipped with the crate.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::distributed::{DirectedGraph, NodeConfig};
use crate::error::{Error, Result};
use crate::learner::{EstimatorParams, LearnerHyperParams};
use crate::regression::SinusoidTerm;
use crate::simkit::{IntegratorConfig, NoiseChannel};
use crate::subspace::SubspaceHyperParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Subspace estimator alone on a sinusoidal regressor.
    Subspace,
    /// Single learner on a sinusoidal regression model.
    Learn,
    /// Sensor network on per-node sinusoidal regression models.
    Distributed,
    /// Single plant in canonical form.
    SysidSingle,
    /// Output-coupled plants identified by a sensor network.
    SysidNetwork,
    /// The property-verification suites; needs no other section.
    Verify,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub step: f64,
    pub horizon: f64,
    #[serde(default = "default_stride")]
    pub record_stride: u64,
}

fn default_stride() -> u64 {
    10
}

impl IntegratorSection {
    pub fn config(&self) -> IntegratorConfig {
        IntegratorConfig::new(self.step, self.horizon, self.record_stride)
    }
}

/// Estimator hyperparameters shared by every node unless overridden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub kappa: f64,
    #[serde(default = "default_rank_tol")]
    pub rank_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
}

fn default_rank_tol() -> f64 {
    1e-8
}

/// Per-node overrides for network experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct NodeSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
    pub eta_d: f64,
    pub eta_u: f64,
    /// Regressor channels of this node (synthetic networks only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub channels: Vec<ChannelSection>,
}

/// One regressor component as a sum of sinusoids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    #[serde(default)]
    pub terms: Vec<SinusoidTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressorSection {
    pub theta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub channels: Vec<ChannelSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub f: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<f64>>,
    pub w: Vec<f64>,
    /// Initial plant state, shared by every plant; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Exploration input of each plant.
    pub inputs: Vec<ChannelSection>,
    /// `[i, j]` (one based): plant `i` is driven by the output of plant `j`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coupling: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    /// `[i, j]` (one based): node `i` receives the estimate of node `j`.
    pub edges: Vec<[usize; 2]>,
}

/// Offline excitation analysis of the noise-free regressor, used for the
/// ground-truth subspaces and least-squares oracle in diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    pub window: f64,
    pub start: f64,
    pub horizon: f64,
    #[serde(default = "default_quad_step")]
    pub quad_step: f64,
    /// Defaults to the estimator's tolerance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_tol: Option<f64>,
}

fn default_quad_step() -> f64 {
    1e-2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Columns written to CSV; all recorded columns when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub columns: Vec<String>,
    /// Columns drawn in the SVG plot; the CSV columns when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub plot: Vec<String>,
    /// Window `[from, to]` of the decay-rate fits in the summary.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub kind: ExperimentKind,
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub noise: NoiseChannel,
    pub estimator: EstimatorSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regressor: Option<RegressorSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plant: Option<PlantSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nodes: Vec<NodeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AnalysisSection>,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    /// Structural checks that do not need to build anything.
    pub fn validate(&self) -> Result<()> {
        let need = |present: bool, what: &str| {
            if present {
                Ok(())
            } else {
                Err(Error::config(format!("kind {:?} requires a [{what}] section", self.kind)))
            }
        };
        match self.kind {
            ExperimentKind::Subspace | ExperimentKind::Learn => need(self.regressor.is_some(), "regressor")?,
            ExperimentKind::Distributed => {
                need(self.regressor.is_some(), "regressor")?;
                need(self.graph.is_some(), "graph")?;
                need(!self.nodes.is_empty(), "nodes")?;
            }
            ExperimentKind::SysidSingle => need(self.plant.is_some(), "plant")?,
            ExperimentKind::SysidNetwork => {
                need(self.plant.is_some(), "plant")?;
                need(self.graph.is_some(), "graph")?;
                need(!self.nodes.is_empty(), "nodes")?;
            }
            ExperimentKind::Verify => {}
        }
        self.integrator.config().steps()?;
        self.noise.validate()?;
        Ok(())
    }

    /// Command-line overrides. A new seed only matters for noisy runs.
    pub fn apply_overrides(&mut self, seed: Option<u64>, horizon: Option<f64>, step: Option<f64>) -> Result<()> {
        if let Some(seed) = seed {
            self.noise.seed = seed;
        }
        if let Some(h) = horizon {
            self.integrator.horizon = h;
        }
        if let Some(h) = step {
            self.integrator.step = h;
        }
        self.validate()
    }

    /// Number of estimator nodes.
    pub fn node_count(&self) -> usize {
        match self.kind {
            ExperimentKind::Distributed | ExperimentKind::SysidNetwork => self.nodes.len(),
            _ => 1,
        }
    }

    /// Estimator settings of one node (or of the single estimator).
    pub fn estimator_params(&self, node: usize, dim: usize) -> Result<EstimatorParams> {
        let e = &self.estimator;
        let o = self.nodes.get(node).cloned().unwrap_or_default();
        let theta0 = o
            .theta0
            .or_else(|| e.theta0.clone())
            .unwrap_or_else(|| vec![0.0; dim]);
        if theta0.len() != dim {
            return Err(Error::config(format!(
                "node {}: prior has length {}, expected {dim}",
                node + 1,
                theta0.len()
            )));
        }
        let beta = o.beta.unwrap_or(e.beta);
        Ok(EstimatorParams {
            subspace: SubspaceHyperParams {
                beta,
                gamma: o.gamma.unwrap_or(e.gamma),
                delta: o.delta.unwrap_or(e.delta),
                rank_tol: o.rank_tol.unwrap_or(e.rank_tol),
            },
            learner: LearnerHyperParams {
                alpha: o.alpha.unwrap_or(e.alpha),
                beta,
                kappa: o.kappa.unwrap_or(e.kappa),
                theta0: DVector::from_vec(theta0),
            },
        })
    }

    pub fn node_configs(&self, dim: usize) -> Result<Vec<NodeConfig>> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                Ok(NodeConfig {
                    eta_d: n.eta_d,
                    eta_u: n.eta_u,
                    estimator: self.estimator_params(i, dim)?,
                })
            })
            .collect()
    }

    pub fn graph(&self) -> Result<DirectedGraph> {
        let g = self.graph.as_ref().ok_or_else(|| Error::config("missing [graph] section"))?;
        let edges = one_based(&g.edges, self.nodes.len(), "graph edge")?;
        DirectedGraph::from_edges(self.nodes.len(), &edges)
    }

    /// Analysis settings with the tolerance resolved.
    pub fn analysis(&self) -> Result<(AnalysisSection, f64)> {
        let a = self
            .analysis
            .clone()
            .ok_or_else(|| Error::config("missing [analysis] section"))?;
        let tol = a.rank_tol.unwrap_or(self.estimator.rank_tol);
        Ok((a, tol))
    }

    pub fn fit_window(&self) -> (f64, f64) {
        match self.output.fit_window {
            Some([a, b]) => (a, b),
            None => (self.integrator.horizon / 6.0, self.integrator.horizon),
        }
    }
}

pub(crate) fn one_based(pairs: &[[usize; 2]], nodes: usize, what: &str) -> Result<Vec<(usize, usize)>> {
    pairs
        .iter()
        .map(|&[i, j]| {
            if i == 0 || j == 0 || i > nodes || j > nodes {
                Err(Error::config(format!("{what} [{i}, {j}] is outside nodes 1..={nodes}")))
            } else {
                Ok((i - 1, j - 1))
            }
        })
        .collect()
}

const PRESET_FILES: [(&str, &str); 3] = [
    ("app1_k1", include_str!("../presets/app1_k1.toml")),
    ("app1_k3", include_str!("../presets/app1_k3.toml")),
    ("app2", include_str!("../presets/app2.toml")),
];

/// A named experiment: a base preset plus a noise setting and the columns
/// to emit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FigurePreset {
    pub name: &'static str,
    pub base: &'static str,
    pub noisy: bool,
    pub columns: &'static [&'static str],
}

pub const FIGURES: [FigurePreset; 8] = [
    FigurePreset { name: "fig1", base: "app1_k1", noisy: false, columns: &["sub_err"] },
    FigurePreset { name: "fig2", base: "app1_k3", noisy: false, columns: &["sub_err"] },
    FigurePreset { name: "fig3", base: "app1_k1", noisy: true, columns: &["sub_err"] },
    FigurePreset { name: "fig4", base: "app1_k3", noisy: true, columns: &["sub_err"] },
    FigurePreset { name: "fig5", base: "app1_k1", noisy: false, columns: &["e1", "e2", "e3", "e4", "e5", "e6"] },
    FigurePreset { name: "fig6", base: "app1_k3", noisy: false, columns: &["e1", "e2", "e3", "e4", "e5", "e6"] },
    FigurePreset { name: "fig8", base: "app2", noisy: false, columns: &["err1", "err2", "err3", "err4", "err5"] },
    FigurePreset { name: "fig9", base: "app2", noisy: true, columns: &["err1", "err2", "err3", "err4", "err5"] },
];

/// Measurement noise used by the noisy figure variants.
pub const FIGURE_NOISE_SIGMA: f64 = 1.0;
pub const FIGURE_NOISE_SEED: u64 = 2024;

pub fn preset_names() -> Vec<&'static str> {
    PRESET_FILES
        .iter()
        .map(|(n, _)| *n)
        .chain(FIGURES.iter().map(|f| f.name))
        .collect()
}

/// Raw text of a base preset file.
pub fn preset_source(name: &str) -> Option<&'static str> {
    PRESET_FILES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Resolve a base or figure preset into a configuration.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    if let Some(text) = preset_source(name) {
        return ExperimentConfig::from_toml(text);
    }
    let fig = FIGURES
        .iter()
        .find(|f| f.name == name)
        .ok_or_else(|| Error::config(format!("unknown preset `{name}`; known: {}", preset_names().join(", "))))?;
    let mut cfg = preset(fig.base)?;
    cfg.name = fig.name.to_string();
    cfg.noise = if fig.noisy {
        NoiseChannel::gaussian(FIGURE_NOISE_SIGMA, FIGURE_NOISE_SEED)
    } else {
        NoiseChannel::none()
    };
    cfg.output.columns = fig.columns.iter().map(|c| c.to_string()).collect();
    cfg.output.plot.clear();
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses_and_round_trips() {
        for name in preset_names() {
            let cfg = preset(name).unwrap();
            let text = cfg.to_toml().unwrap();
            let back = ExperimentConfig::from_toml(&text).unwrap();
            assert_eq!(cfg, back, "{name}");
        }
    }

    #[test]
    fn unknown_preset_is_a_config_error() {
        let err = preset("fig7").unwrap_err();
        assert!(err.is_config());
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = ExperimentConfig::from_toml("name = \"x\"\nkind = \"nope\"\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
        let err = ExperimentConfig::from_toml(&preset_source("app1_k1").unwrap().replace("kappa", "kapa")).unwrap_err();
        assert!(err.to_string().contains("kapa"), "{err}");
    }

    #[test]
    fn missing_sections_are_reported() {
        let mut cfg = preset("app2").unwrap();
        cfg.graph = None;
        assert!(cfg.validate().unwrap_err().to_string().contains("[graph]"));
    }

    #[test]
    fn node_overrides_resolve() {
        let cfg = preset("app2").unwrap();
        let nodes = cfg.node_configs(9).unwrap();
        for (k, n) in nodes.iter().enumerate() {
            let i = (k + 1) as f64;
            assert_eq!(n.estimator.learner.alpha, i);
            assert_eq!(n.estimator.subspace.gamma, i);
            assert_eq!(n.eta_d, i);
            assert_eq!(n.eta_u, 6.0 - i);
            assert_eq!(n.estimator.learner.theta0, DVector::from_element(9, 6.0 - i));
        }
        assert!(cfg.graph().unwrap().is_strongly_connected());
    }
}
