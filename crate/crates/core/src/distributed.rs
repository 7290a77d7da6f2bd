//! Cooperative estimation over a directed sensor network: each node runs the
//! local estimator and fills in its blind directions by consensus with its
//! in-neighbours.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::learner::{EstimatorBlock, EstimatorParams, EstimatorSnapshot, Hold, estimator_rhs};
use crate::linalg;
use crate::regression::ExcitationCertificate;
use crate::simkit::{hurwitz_check, OdeSystem, Rk4};
use crate::source::MeasurementSource;

/// Weighted digraph; `a_ij > 0` means node `i` receives from node `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedGraph {
    adjacency: DMatrix<f64>,
}

impl DirectedGraph {
    pub fn new(adjacency: DMatrix<f64>) -> Result<Self> {
        if !adjacency.is_square() || adjacency.nrows() == 0 {
            return Err(Error::Graph(format!("adjacency must be square and nonempty, got {:?}", adjacency.shape())));
        }
        for i in 0..adjacency.nrows() {
            if adjacency[(i, i)] != 0.0 {
                return Err(Error::Graph(format!("self loop at node {}", i + 1)));
            }
        }
        if adjacency.iter().any(|&a| !(a >= 0.0) || !a.is_finite()) {
            return Err(Error::Graph("edge weights must be finite and nonnegative".into()));
        }
        Ok(DirectedGraph { adjacency })
    }

    /// Unit-weight graph from `(receiver, sender)` pairs, zero based.
    pub fn from_edges(nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut a = DMatrix::zeros(nodes, nodes);
        for &(i, j) in edges {
            if i >= nodes || j >= nodes {
                return Err(Error::Graph(format!("edge ({i}, {j}) out of range for {nodes} nodes")));
            }
            a[(i, j)] = 1.0;
        }
        Self::new(a)
    }

    pub fn nodes(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.nodes();
        let mut l = -self.adjacency.clone();
        for i in 0..n {
            // Exact zero row sums: the diagonal is the sum of the very values
            // that appear negated off the diagonal.
            l[(i, i)] = self.adjacency.row(i).iter().sum();
        }
        l
    }

    /// Nodes reachable from `start` following information flow.
    fn reachable(&self, start: usize) -> Vec<bool> {
        let n = self.nodes();
        let mut seen = vec![false; n];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(j) = queue.pop_front() {
            for i in 0..n {
                if self.adjacency[(i, j)] > 0.0 && !seen[i] {
                    seen[i] = true;
                    queue.push_back(i);
                }
            }
        }
        seen
    }

    pub fn is_strongly_connected(&self) -> bool {
        (0..self.nodes()).all(|s| self.reachable(s).iter().all(|&r| r))
    }
}

/// Positive left null vector `ξ` of the Laplacian with `Σξ = 1`.
pub fn left_eigenvector(graph: &DirectedGraph) -> Result<DVector<f64>> {
    if !graph.is_strongly_connected() {
        return Err(Error::Graph("graph is not strongly connected".into()));
    }
    let lt = graph.laplacian().transpose();
    let svd = lt.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Graph("SVD failed".into()))?;
    let k = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .expect("nonempty graph");
    let mut xi = v_t.row(k).transpose();
    let sum: f64 = xi.sum();
    xi /= sum;
    if xi.iter().any(|&v| v <= 1e-12) {
        return Err(Error::Graph(format!(
            "left null vector is not positive ({:?}); graph is not strongly connected",
            xi.as_slice()
        )));
    }
    Ok(xi)
}

/// `diag(X)ᵀ[(ΞL + LᵀΞ) ⊗ I]diag(X)` with `Ξ = diag(ξ)`.
pub fn positivity_matrix(graph: &DirectedGraph, bases: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    check_bases(graph, bases)?;
    let xi = DMatrix::from_diagonal(&left_eigenvector(graph)?);
    let l = graph.laplacian();
    let sym = &xi * &l + l.transpose() * &xi;
    let n = bases[0].nrows();
    let x = linalg::block_diag(bases);
    Ok(x.transpose() * linalg::kron(&sym, &DMatrix::identity(n, n)) * x)
}

fn check_bases(graph: &DirectedGraph, bases: &[DMatrix<f64>]) -> Result<()> {
    if bases.len() != graph.nodes() {
        return Err(Error::contract(format!("{} bases for {} nodes", bases.len(), graph.nodes())));
    }
    let n = bases[0].nrows();
    if bases.iter().any(|b| b.nrows() != n) {
        return Err(Error::contract("bases must share the ambient dimension"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplementarityReport {
    pub complementary: bool,
    /// Smallest eigenvalue of the summed lower excitation bounds.
    pub lambda_min: f64,
    /// Dimension of the directions blind to every node.
    pub common_blind_dim: usize,
}

/// Whether the nodes' identifiable subspaces jointly cover the whole space.
/// Evaluated on the excitation bounds and, independently, on the blind
/// bases: `ΣN_uN_uᵀ` has eigenvalue `N` exactly on their intersection.
pub fn complementary_de_check(certs: &[ExcitationCertificate]) -> Result<ComplementarityReport> {
    let first = certs.first().ok_or_else(|| Error::contract("no certificates"))?;
    let n = first.dim();
    if certs.iter().any(|c| c.dim() != n) {
        return Err(Error::contract("certificates differ in dimension"));
    }
    let tol = certs.iter().map(|c| c.rank_tol).fold(0.0, f64::max);
    let sum_a = certs.iter().fold(DMatrix::zeros(n, n), |s, c| s + &c.phi_a);
    let ev = linalg::sym_eigenvalues(&sum_a);
    let lambda_min = ev[0];
    let by_bounds = lambda_min > tol;

    let count = certs.len() as f64;
    let blind = certs.iter().fold(DMatrix::zeros(n, n), |s, c| s + &c.n_u * c.n_u.transpose());
    let common_blind_dim = linalg::sym_eigenvalues(&blind)
        .iter()
        .filter(|&&v| v >= count - 1e-8)
        .count();
    let by_bases = common_blind_dim == 0;
    if by_bounds != by_bases {
        return Err(Error::contract(format!(
            "excitation bounds (lambda_min {lambda_min:e}) and blind bases (common dimension {common_blind_dim}) disagree"
        )));
    }
    Ok(ComplementarityReport {
        complementary: by_bounds,
        lambda_min,
        common_blind_dim,
    })
}

/// Stacked constant matrices of the network error dynamics.
#[derive(Debug, Clone)]
pub struct StackedBases {
    pub n_u: DMatrix<f64>,
    pub n_d: DMatrix<f64>,
    pub h_u: DMatrix<f64>,
    pub h_d: DMatrix<f64>,
    /// `L ⊗ I_n`.
    pub l_kron: DMatrix<f64>,
}

impl StackedBases {
    pub fn new(graph: &DirectedGraph, certs: &[ExcitationCertificate], eta_u: &[f64], eta_d: &[f64]) -> Result<Self> {
        let bases: Vec<DMatrix<f64>> = certs.iter().map(|c| c.n_u.clone()).collect();
        check_bases(graph, &bases)?;
        if eta_u.len() != certs.len() || eta_d.len() != certs.len() {
            return Err(Error::contract("one gain pair per node is required"));
        }
        let n = certs[0].dim();
        let gain = |eta: &[f64]| {
            let d: Vec<f64> = certs
                .iter()
                .zip(eta)
                .flat_map(|(c, &e)| std::iter::repeat(e).take(c.order))
                .collect();
            DMatrix::from_diagonal(&DVector::from_vec(d))
        };
        let n_ds: Vec<DMatrix<f64>> = certs.iter().map(|c| c.n_d.clone()).collect();
        Ok(StackedBases {
            n_u: linalg::block_diag(&bases),
            n_d: linalg::block_diag(&n_ds),
            h_u: gain(eta_u),
            h_d: gain(eta_d),
            l_kron: linalg::kron(&graph.laplacian(), &DMatrix::identity(n, n)),
        })
    }

    /// `−H_U N_Uᵀ(L⊗I)N_U`.
    pub fn consensus_matrix(&self) -> DMatrix<f64> {
        -(&self.h_u * self.n_u.transpose() * &self.l_kron * &self.n_u)
    }

    /// `H_U N_Uᵀ P_U(L⊗I)P_U N_U` for the current projectors, where
    /// `P_U = diag(I − P_i)`.
    pub fn autonomous_coefficient(&self, projectors: &[DMatrix<f64>]) -> DMatrix<f64> {
        let p_u = blind_projector(projectors);
        &self.h_u * self.n_u.transpose() * &p_u * &self.l_kron * &p_u * &self.n_u
    }

    /// Distance of the autonomous coefficient from its limit.
    pub fn autonomous_gap(&self, projectors: &[DMatrix<f64>]) -> f64 {
        linalg::spectral_norm(&(self.autonomous_coefficient(projectors) + self.consensus_matrix()))
    }

    /// Norm of the nonautonomous part of the stacked blind-direction error
    /// dynamics, recomputed from node states and the true parameter.
    pub fn nonautonomous_residual(&self, nodes: &[NodeSnapshot], theta: &DVector<f64>) -> f64 {
        let projectors: Vec<DMatrix<f64>> = nodes.iter().map(|s| s.estimator.p.clone()).collect();
        let p_u = blind_projector(&projectors);
        let p_d = linalg::block_diag(&projectors);
        let stack = |f: &dyn Fn(&NodeSnapshot) -> DVector<f64>| {
            DVector::from_iterator(
                nodes.len() * theta.len(),
                nodes.iter().flat_map(|s| f(s).iter().copied().collect::<Vec<_>>()),
            )
        };
        let err_u = stack(&|s| &s.theta_u - theta);
        let err_d = stack(&|s| &s.estimator.theta_d - theta);
        let hat_u = stack(&|s| s.theta_u.clone());
        let left = &self.h_u * self.n_u.transpose() * &p_u * &self.l_kron;
        let a = &left * &p_u * &self.n_d * (self.n_d.transpose() * &err_u);
        let b = &left * &p_d * err_d;
        let c = &self.h_d * self.n_u.transpose() * &p_d * hat_u;
        (a + b + c).norm()
    }
}

fn blind_projector(projectors: &[DMatrix<f64>]) -> DMatrix<f64> {
    let blocks: Vec<DMatrix<f64>> = projectors
        .iter()
        .map(|p| DMatrix::identity(p.nrows(), p.nrows()) - p)
        .collect();
    linalg::block_diag(&blocks)
}

/// Integrate the comparison system driven by the local least-squares
/// solutions.
///
/// `theta_star[k][i]` is node `i`'s solution at `times[k]`; the forcing is
/// linearly interpolated between samples. Returns the stacked comparison
/// error at every sample time.
pub fn reference_trajectory(
    stacked: &StackedBases,
    times: &[f64],
    theta_star: &[Vec<DVector<f64>>],
    theta: &DVector<f64>,
) -> Result<Vec<DVector<f64>>> {
    let a = stacked.consensus_matrix();
    let report = hurwitz_check(&a);
    if !report.stable {
        return Err(Error::Stability(format!(
            "consensus matrix is not Hurwitz (spectral abscissa {:.3e}); the blind directions are not complementary",
            report.abscissa
        )));
    }
    if times.len() != theta_star.len() || times.is_empty() {
        return Err(Error::contract("one set of local solutions per sample time is required"));
    }
    let b = -(&stacked.h_u * stacked.n_u.transpose() * &stacked.l_kron * &stacked.n_d);
    let forcing: Vec<DVector<f64>> = theta_star
        .iter()
        .map(|nodes| {
            let errs: Vec<f64> = nodes.iter().flat_map(|s| (s - theta).iter().copied().collect::<Vec<_>>()).collect();
            stacked.n_d.transpose() * DVector::from_vec(errs)
        })
        .collect();

    struct Reference<'a> {
        a: &'a DMatrix<f64>,
        b: &'a DMatrix<f64>,
        times: &'a [f64],
        forcing: &'a [DVector<f64>],
        k: usize,
    }
    impl OdeSystem for Reference<'_> {
        fn dim(&self) -> usize {
            self.a.nrows()
        }
        fn rhs(&self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
            let (t0, t1) = (self.times[self.k], self.times[self.k + 1]);
            let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
            let f = &self.forcing[self.k] * (1.0 - w) + &self.forcing[self.k + 1] * w;
            let out = self.a * DVector::from_column_slice(x) + self.b * f;
            dx.copy_from_slice(out.as_slice());
            Ok(())
        }
    }

    let mut sys = Reference {
        a: &a,
        b: &b,
        times,
        forcing: &forcing,
        k: 0,
    };
    let mut x = vec![0.0; a.nrows()];
    let mut rk = Rk4::new(x.len());
    let combine = |x: &[f64], f: &DVector<f64>| &stacked.n_d * f + &stacked.n_u * DVector::from_column_slice(x);
    let mut out = vec![combine(&x, &forcing[0])];
    for k in 0..times.len() - 1 {
        sys.k = k;
        rk.step(&sys, times[k], &mut x, times[k + 1] - times[k])?;
        out.push(combine(&x, &forcing[k + 1]));
    }
    Ok(out)
}

/// Per-node settings.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeConfig {
    /// Decay gain of the blind-direction estimate along identified directions.
    pub eta_d: f64,
    /// Consensus gain.
    pub eta_u: f64,
    /// Local estimator; its prior also seeds the consensus state.
    pub estimator: EstimatorParams,
}

impl NodeConfig {
    fn validate(&self, node: usize) -> Result<()> {
        for (name, v) in [("eta_d", self.eta_d), ("eta_u", self.eta_u)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("node {}: {name} must be positive, got {v}", node + 1)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSnapshot {
    pub estimator: EstimatorSnapshot,
    pub theta_u: DVector<f64>,
    /// `P θ_d + (I − P) θ_u`.
    pub theta_hat: DVector<f64>,
}

/// The whole network (shared source state plus every node's estimator and
/// consensus state) as one ODE, so RK4 stages see consistent neighbours.
pub struct SensorNetwork<S> {
    pub source: S,
    graph: DirectedGraph,
    nodes: Vec<NodeConfig>,
    blocks: Vec<EstimatorBlock>,
    hold_steps: Vec<u64>,
    holds: Vec<Hold>,
    n: usize,
}

impl<S: MeasurementSource> SensorNetwork<S> {
    pub fn new(source: S, graph: DirectedGraph, nodes: Vec<NodeConfig>, step: f64) -> Result<Self> {
        let count = source.nodes();
        if graph.nodes() != count || nodes.len() != count {
            return Err(Error::config(format!(
                "source has {count} nodes, graph {}, node configs {}",
                graph.nodes(),
                nodes.len()
            )));
        }
        if count > 1 && !graph.is_strongly_connected() {
            return Err(Error::Graph("communication graph is not strongly connected".into()));
        }
        let n = source.param_dim();
        let mut hold_steps = Vec::with_capacity(count);
        let mut blocks = Vec::with_capacity(count);
        let mut base = source.state_dim();
        for (i, cfg) in nodes.iter().enumerate() {
            cfg.validate(i)?;
            hold_steps.push(
                cfg.estimator
                    .validate(n, step)
                    .map_err(|e| Error::config(format!("node {}: {e}", i + 1)))?,
            );
            blocks.push(EstimatorBlock { n, base });
            base += EstimatorBlock::len(n) + n;
        }
        Ok(SensorNetwork {
            source,
            graph,
            nodes,
            blocks,
            hold_steps,
            holds: vec![Hold::full(n); count],
            n,
        })
    }

    pub fn graph(&self) -> &DirectedGraph {
        &self.graph
    }

    pub fn node_configs(&self) -> &[NodeConfig] {
        &self.nodes
    }

    pub fn initial_state(&self) -> Vec<f64> {
        let mut x = self.source.initial_state();
        for (blk, cfg) in self.blocks.iter().zip(&self.nodes) {
            x.extend(blk.initial(&cfg.estimator.learner));
            x.extend(cfg.estimator.learner.theta0.iter());
        }
        x
    }

    fn theta_u_range(&self, i: usize) -> std::ops::Range<usize> {
        let end = self.blocks[i].range().end;
        end..end + self.n
    }

    pub fn source_state<'x>(&self, x: &'x [f64]) -> &'x [f64] {
        &x[..self.source.state_dim()]
    }

    pub fn snapshot(&self, t: f64, x: &[f64]) -> Vec<NodeSnapshot> {
        (0..self.nodes.len())
            .map(|i| {
                let estimator = self.blocks[i].snapshot(x, t, &self.nodes[i].estimator);
                let theta_u = DVector::from_column_slice(&x[self.theta_u_range(i)]);
                let theta_hat = combine(&estimator.p, &estimator.theta_d, &theta_u);
                NodeSnapshot {
                    estimator,
                    theta_u,
                    theta_hat,
                }
            })
            .collect()
    }

    pub fn held_basis(&self, node: usize) -> &DMatrix<f64> {
        &self.holds[node].basis
    }
}

fn combine(p: &DMatrix<f64>, theta_d: &DVector<f64>, theta_u: &DVector<f64>) -> DVector<f64> {
    p * theta_d + theta_u - p * theta_u
}

impl<S: MeasurementSource> OdeSystem for SensorNetwork<S> {
    fn dim(&self) -> usize {
        self.source.state_dim() + self.nodes.len() * (EstimatorBlock::len(self.n) + self.n)
    }

    fn rhs(&self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
        let sd = self.source.state_dim();
        self.source.rhs(t, &x[..sd], &mut dx[..sd])?;
        let n = self.n;
        let count = self.nodes.len();
        let mut projectors = Vec::with_capacity(count);
        let mut estimates = Vec::with_capacity(count);
        for i in 0..count {
            let (phi, z) = self.source.measure(i, t, &x[..sd])?;
            let r = self.blocks[i].range();
            estimator_rhs(&self.nodes[i].estimator, &self.holds[i].proj, &phi, z, t, &x[r.clone()], &mut dx[r]);
            let p = self.blocks[i].p(x);
            let theta_u = DVector::from_column_slice(&x[self.theta_u_range(i)]);
            estimates.push(combine(&p, &self.blocks[i].theta_d(x), &theta_u));
            projectors.push(p);
        }
        let adjacency = self.graph.adjacency();
        for i in 0..count {
            let p = &projectors[i];
            let range = self.theta_u_range(i);
            let theta_u = DVector::from_column_slice(&x[range.clone()]);
            let mut disagreement = DVector::zeros(n);
            for j in 0..count {
                let a = adjacency[(i, j)];
                if a != 0.0 {
                    disagreement += (&estimates[i] - &estimates[j]) * a;
                }
            }
            let blind = &disagreement - p * &disagreement;
            let d = -(p * &theta_u) * self.nodes[i].eta_d - blind * self.nodes[i].eta_u;
            dx[range].copy_from_slice(d.as_slice());
        }
        Ok(())
    }

    fn block_name(&self, index: usize) -> String {
        let sd = self.source.state_dim();
        if index < sd {
            return format!("{} state", self.source.name());
        }
        let per = EstimatorBlock::len(self.n) + self.n;
        let i = (index - sd) / per;
        if self.theta_u_range(i).contains(&index) {
            format!("node {} theta_u", i + 1)
        } else {
            format!("node {} {}", i + 1, self.blocks[i].name(index))
        }
    }

    fn at_node(&mut self, step: u64, t: f64, x: &mut [f64]) -> Result<()> {
        let sd = self.source.state_dim();
        self.source.at_node(step, t, &x[..sd])?;
        for i in 0..self.nodes.len() {
            let blk = self.blocks[i];
            blk.symmetrize(x);
            if step % self.hold_steps[i] == 0 {
                let basis = blk
                    .kernel(x, self.nodes[i].estimator.subspace.rank_tol)
                    .map_err(|e| Error::config(format!("node {}: {e}", i + 1)))?;
                self.holds[i].set(basis);
            }
            blk.check_omega(x, t, Some(i))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::{LearnerHyperParams, LearnerSystem};
    use crate::regression::{RegressionModel, SineSumRegressor, SinusoidTerm};
    use crate::simkit::{integrate, IntegratorConfig, NoiseChannel};
    use crate::source::{ModelBankSource, ModelSource};
    use crate::subspace::SubspaceHyperParams;

    fn fig7() -> DirectedGraph {
        // (receiver, sender), one based: 2←1, 5←1, 4←5, 3←2, 3←4, 1←3.
        let edges = [(2, 1), (5, 1), (4, 5), (3, 2), (3, 4), (1, 3)];
        let e: Vec<(usize, usize)> = edges.iter().map(|&(i, j)| (i - 1, j - 1)).collect();
        DirectedGraph::from_edges(5, &e).unwrap()
    }

    #[test]
    fn laplacian_rows_vanish() {
        let g = fig7();
        let l = g.laplacian();
        for i in 0..5 {
            assert_eq!(l.row(i).iter().sum::<f64>(), 0.0);
        }
        assert!(g.is_strongly_connected());
    }

    #[test]
    fn ring_has_uniform_left_vector() {
        let g = DirectedGraph::from_edges(3, &[(1, 0), (2, 1), (0, 2)]).unwrap();
        let xi = left_eigenvector(&g).unwrap();
        assert!((xi - DVector::from_element(3, 1.0 / 3.0)).amax() < 1e-12);
    }

    #[test]
    fn fig7_left_vector_oracle() {
        let g = fig7();
        let xi = left_eigenvector(&g).unwrap();
        // Columns of ξᵀL = 0: ξ₁ = ξ₂ + ξ₅, ξ₂ = ξ₃, ξ₁ = 2ξ₃, ξ₄ = ξ₃,
        // ξ₅ = ξ₄, hence ξ ∝ (2, 1, 1, 1, 1).
        let expect = DVector::from_vec(vec![2.0, 1.0, 1.0, 1.0, 1.0]) / 6.0;
        assert!((&xi - expect).amax() < 1e-10, "{xi}");
        assert!((xi.transpose() * g.laplacian()).amax() < 1e-10);
        assert!((xi.sum() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let g = DirectedGraph::from_edges(2, &[]).unwrap();
        assert!(matches!(left_eigenvector(&g), Err(Error::Graph(_))));
        let chain = DirectedGraph::from_edges(3, &[(1, 0), (2, 1)]).unwrap();
        assert!(!chain.is_strongly_connected());
        assert!(DirectedGraph::from_edges(2, &[(0, 0)]).is_err());
    }

    fn axis(n: usize, k: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, 1);
        m[(k, 0)] = 1.0;
        m
    }

    #[test]
    fn complementary_axes() {
        let c1 = ExcitationCertificate::from_basis(axis(2, 0), 1.0).unwrap();
        let c2 = ExcitationCertificate::from_basis(axis(2, 1), 1.0).unwrap();
        let r = complementary_de_check(&[c1.clone(), c2]).unwrap();
        assert!(r.complementary && r.common_blind_dim == 0);
        let r = complementary_de_check(&[c1.clone(), c1]).unwrap();
        assert!(!r.complementary);
        assert_eq!(r.common_blind_dim, 1);
    }

    #[test]
    fn positivity_equivalence() {
        let g = fig7();
        let s = 1.0 / 2f64.sqrt();
        // Blind directions spread over distinct axes in R³: trivial intersection.
        let pos: Vec<DMatrix<f64>> = (0..5).map(|i| axis(3, i % 3)).collect();
        assert!(linalg::min_eigenvalue(&positivity_matrix(&g, &pos).unwrap()) > 1e-6);
        // A direction shared by every node.
        let shared = DMatrix::from_column_slice(3, 1, &[s, s, 0.0]);
        let neg: Vec<DMatrix<f64>> = (0..5).map(|_| shared.clone()).collect();
        let m = positivity_matrix(&g, &neg).unwrap();
        assert!(linalg::min_eigenvalue(&m).abs() < 1e-12);
    }

    fn certs_from_axes() -> Vec<ExcitationCertificate> {
        (0..5)
            .map(|i| {
                let mut nd = DMatrix::zeros(3, 2);
                let (a, b) = ((i + 1) % 3, (i + 2) % 3);
                nd[(a.min(b), 0)] = 1.0;
                nd[(a.max(b), 1)] = 1.0;
                ExcitationCertificate::from_basis(nd, 1.0).unwrap()
            })
            .collect()
    }

    #[test]
    fn consensus_matrix_is_hurwitz_and_scales() {
        let certs = certs_from_axes();
        let g = fig7();
        let st = StackedBases::new(&g, &certs, &[1.0; 5], &[1.0; 5]).unwrap();
        let a1 = hurwitz_check(&st.consensus_matrix());
        assert!(a1.stable);
        let st2 = StackedBases::new(&g, &certs, &[2.0; 5], &[1.0; 5]).unwrap();
        let a2 = hurwitz_check(&st2.consensus_matrix());
        assert!((a2.abscissa - 2.0 * a1.abscissa).abs() < 1e-9);
        let shared: Vec<_> = (0..5).map(|_| certs[0].clone()).collect();
        let bad = StackedBases::new(&g, &shared, &[1.0; 5], &[1.0; 5]).unwrap();
        assert!(!hurwitz_check(&bad.consensus_matrix()).stable);
        let times = [0.0, 1.0];
        let theta = DVector::zeros(3);
        let sols = vec![vec![DVector::zeros(3); 5]; 2];
        assert!(matches!(reference_trajectory(&bad, &times, &sols, &theta), Err(Error::Stability(_))));
    }

    #[test]
    fn reference_with_exact_local_solutions_is_zero() {
        let certs = certs_from_axes();
        let st = StackedBases::new(&fig7(), &certs, &[1.0; 5], &[1.0; 5]).unwrap();
        let theta = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        let times: Vec<f64> = (0..=100).map(|k| k as f64 * 0.1).collect();
        let sols = vec![vec![theta.clone(); 5]; times.len()];
        let out = reference_trajectory(&st, &times, &sols, &theta).unwrap();
        assert!(out.iter().all(|v| v.amax() == 0.0));
    }

    #[test]
    fn reference_matches_closed_form_for_constant_forcing() {
        // Two nodes, R², each blind along one axis.
        let g = DirectedGraph::from_edges(2, &[(0, 1), (1, 0)]).unwrap();
        let c1 = ExcitationCertificate::from_basis(axis(2, 0), 1.0).unwrap();
        let c2 = ExcitationCertificate::from_basis(axis(2, 1), 1.0).unwrap();
        let st = StackedBases::new(&g, &[c1, c2], &[1.0, 1.0], &[1.0, 1.0]).unwrap();
        let theta = DVector::zeros(2);
        // Node 1 knows x₁ = 1, node 2 knows x₂ = −1.
        let sols = vec![DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![0.0, -1.0])];
        let times: Vec<f64> = (0..=1000).map(|k| k as f64 * 0.01).collect();
        let out = reference_trajectory(&st, &times, &vec![sols; times.len()], &theta).unwrap();
        // Blind coordinates obey u̇₁ = −(u₁ − (−1)), u̇₂ = −(u₂ − 1).
        let t = 10.0f64;
        let decay = 1.0 - (-t).exp();
        let last = out.last().unwrap();
        let expect = [1.0, -decay, decay, -1.0];
        for k in 0..4 {
            assert!((last[k] - expect[k]).abs() < 1e-9, "{last}");
        }
    }

    fn params(theta0: DVector<f64>) -> EstimatorParams {
        EstimatorParams {
            subspace: SubspaceHyperParams::default(),
            learner: LearnerHyperParams {
                alpha: 1.0,
                beta: 1.0,
                kappa: 1.0,
                theta0,
            },
        }
    }

    #[test]
    fn single_node_reduces_to_learner() {
        let h = 1e-3;
        let theta0 = DVector::from_vec(vec![0.5, 0.5]);
        let make = || {
            RegressionModel::new(
                Box::new(SineSumRegressor::antiphase_pair()),
                DVector::from_vec(vec![1.0, 2.0]),
                NoiseChannel::gaussian(0.3, 11),
            )
            .unwrap()
        };
        let mut solo = LearnerSystem::new(ModelSource::new(make()), params(theta0.clone()), h).unwrap();
        let node = NodeConfig {
            eta_d: 1.0,
            eta_u: 1.0,
            estimator: params(theta0.clone()),
        };
        let g = DirectedGraph::from_edges(1, &[]).unwrap();
        let mut net = SensorNetwork::new(ModelBankSource::new(vec![make()]).unwrap(), g, vec![node], h).unwrap();
        let cfg = IntegratorConfig::new(h, 5.0, 100);
        let mut a = Vec::new();
        let x0 = solo.initial_state();
        integrate(&mut solo, x0, &cfg, vec![], |s, _, t, x| {
            a.push(s.snapshot(t, x).theta_d);
            Ok(())
        })
        .unwrap();
        let mut b = Vec::new();
        let x0 = net.initial_state();
        integrate(&mut net, x0, &cfg, vec![], |s, _, t, x| {
            let snap = s.snapshot(t, x);
            b.push(snap[0].estimator.theta_d.clone());
            Ok(())
        })
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn complementary_pair_recovers_full_parameter() {
        let h = 1e-3;
        let theta = DVector::from_vec(vec![1.0, -2.0]);
        // Node 1 sees only the first coordinate, node 2 only the second.
        let m1 = SineSumRegressor::new(vec![vec![SinusoidTerm::new(1.0, 1.0, 0.0)], vec![]]).unwrap();
        let m2 = SineSumRegressor::new(vec![vec![], vec![SinusoidTerm::new(1.0, 2.0, 0.5)]]).unwrap();
        let models = vec![
            RegressionModel::new(Box::new(m1), theta.clone(), NoiseChannel::none()).unwrap(),
            RegressionModel::new(Box::new(m2), theta.clone(), NoiseChannel::none()).unwrap(),
        ];
        let g = DirectedGraph::from_edges(2, &[(0, 1), (1, 0)]).unwrap();
        let nodes = (0..2)
            .map(|_| NodeConfig {
                eta_d: 1.0,
                eta_u: 2.0,
                estimator: params(DVector::zeros(2)),
            })
            .collect();
        let mut net = SensorNetwork::new(ModelBankSource::new(models).unwrap(), g, nodes, h).unwrap();
        let x0 = net.initial_state();
        let mut last = None;
        integrate(&mut net, x0, &IntegratorConfig::new(h, 25.0, 1000), vec![], |s, _, t, x| {
            last = Some(s.snapshot(t, x));
            Ok(())
        })
        .unwrap();
        for node in last.unwrap() {
            assert!((&node.theta_hat - &theta).amax() < 1e-3, "{}", node.theta_hat);
        }
    }
}
