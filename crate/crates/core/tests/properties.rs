//! Randomised invariants.

use delearn_core::config::{preset, ExperimentConfig};
use delearn_core::distributed::{left_eigenvector, DirectedGraph};
use delearn_core::learner::{EstimatorParams, LearnerHyperParams, LearnerSystem};
use delearn_core::linalg;
use delearn_core::regression::{excitation_analysis, RegressionModel, SineSumRegressor, SinusoidTerm};
use delearn_core::simkit::{fmt17, integrate, IntegratorConfig, NoiseChannel};
use delearn_core::source::ModelSource;
use delearn_core::subspace::{kernel_basis, SubspaceHyperParams, SubspaceSystem};
use delearn_core::sysid::{make_plant, plant_step};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn tone() -> impl Strategy<Value = SinusoidTerm> {
    (0.2..2.0f64, 0.5..3.0f64, 0.0..6.3f64).prop_map(|(a, w, p)| SinusoidTerm::new(a, w, p))
}

/// Up to three channels, each a sum of at most two tones (possibly empty).
fn regressor() -> impl Strategy<Value = SineSumRegressor> {
    prop::collection::vec(prop::collection::vec(tone(), 0..=2), 2..=3)
        .prop_map(|ch| SineSumRegressor::new(ch).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn projector_spectrum_stays_in_unit_interval(reg in regressor(), gamma in 0.5..3.0f64) {
        let hp = SubspaceHyperParams { gamma, ..Default::default() };
        let mut sys = SubspaceSystem::new(hp, &reg, 1e-2).unwrap();
        let x0 = sys.initial_state();
        let mut worst: f64 = 0.0;
        integrate(&mut sys, x0, &IntegratorConfig::new(1e-2, 8.0, 5), vec![], |s, _, _, x| {
            let (_, _, p) = s.matrices(x);
            let ev = linalg::sym_eigenvalues(&p);
            worst = worst.max(-ev[0]).max(ev[ev.len() - 1] - 1.0);
            Ok(())
        }).unwrap();
        prop_assert!(worst <= 1e-6, "excursion {worst:e}");
    }

    #[test]
    fn learner_identities_hold(reg in regressor(), seed in 0u64..1000, alpha in 0.5..3.0f64, kappa in 0.5..2.0f64) {
        let n = reg.channels.len();
        let theta = DVector::from_fn(n, |i, _| i as f64 - 1.0);
        let model = RegressionModel::new(Box::new(reg), theta, NoiseChannel::gaussian(0.1, seed)).unwrap();
        let hp = LearnerHyperParams { alpha, beta: 1.0, kappa, theta0: DVector::from_element(n, 0.5) };
        let params = EstimatorParams { subspace: SubspaceHyperParams::default(), learner: hp.clone() };
        let mut sys = LearnerSystem::new(ModelSource::new(model), params, 1e-2).unwrap();
        let x0 = sys.initial_state();
        let (mut inv, mut cf): (f64, f64) = (0.0, 0.0);
        integrate(&mut sys, x0, &IntegratorConfig::new(1e-2, 6.0, 10), vec![], |s, _, t, x| {
            let snap = s.snapshot(t, x);
            inv = inv.max(snap.inverse_identity_residual(&hp));
            cf = cf.max(snap.closed_form_residual());
            Ok(())
        }).unwrap();
        prop_assert!(inv <= 1e-6, "inverse residual {inv:e}");
        prop_assert!(cf <= 1e-6, "closed-form residual {cf:e}");
    }

    #[test]
    fn certificate_bases_split_the_space(reg in regressor()) {
        let cert = excitation_analysis(&reg, 2.0 * std::f64::consts::PI, 0.0, 40.0, 1e-8, 1e-2).unwrap();
        let n = cert.dim();
        let split = &cert.n_d * cert.n_d.transpose() + &cert.n_u * cert.n_u.transpose();
        prop_assert!((split - DMatrix::identity(n, n)).amax() < 1e-10);
        prop_assert_eq!(cert.n_u.ncols(), cert.order);
        for k in 0..50 {
            let phi = delearn_core::regression::RegressorSignal::eval(&reg, 0.37 * k as f64);
            prop_assert!((cert.n_u.transpose() * &phi).norm() <= 1e-6 * (1.0 + phi.norm()));
        }
    }

    #[test]
    fn kernel_basis_of_low_rank_gram(entries in prop::collection::vec(-1.0..1.0f64, 8), rank in 0usize..=2) {
        // Q = AAᵀ with A of size 4 × rank.
        let a = DMatrix::from_column_slice(4, 2, &entries).columns(0, rank).into_owned();
        let q = &a * a.transpose();
        let k = kernel_basis(&q, 1e-8).unwrap();
        let expect = 4 - linalg::orthonormal_columns(&a, 1e-8).ncols();
        prop_assert_eq!(k.ncols(), expect);
        prop_assert!((k.transpose() * &k - DMatrix::identity(k.ncols(), k.ncols())).amax() < 1e-10);
        prop_assert!((&q * &k).amax() < 1e-8);
    }

    #[test]
    fn left_vector_of_strongly_connected_graphs(n in 2usize..7, extra in prop::collection::vec((0usize..7, 0usize..7), 0..8)) {
        // A directed ring plus arbitrary extra edges is strongly connected.
        let mut edges: Vec<(usize, usize)> = (0..n).map(|i| ((i + 1) % n, i)).collect();
        edges.extend(extra.into_iter().filter(|(i, j)| i < &n && j < &n && i != j));
        let g = DirectedGraph::from_edges(n, &edges).unwrap();
        let l = g.laplacian();
        for i in 0..n {
            prop_assert!(l.row(i).sum().abs() < 1e-12);
        }
        let xi = left_eigenvector(&g).unwrap();
        prop_assert!(xi.iter().all(|v| *v > 0.0));
        prop_assert!((xi.sum() - 1.0).abs() < 1e-10);
        prop_assert!((l.transpose() * &xi).amax() < 1e-10);
    }

    #[test]
    fn noise_streams_are_reproducible(seed in any::<u64>(), channel in 0u64..16, sigma in 0.0..3.0f64) {
        let ch = NoiseChannel::gaussian(sigma, seed);
        let a: Vec<f64> = { let mut s = ch.stream(channel); (0..64).map(|_| s.sample()).collect() };
        let b: Vec<f64> = { let mut s = ch.stream(channel); (0..64).map(|_| s.sample()).collect() };
        prop_assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        if sigma > 0.0 {
            let c: Vec<f64> = { let mut s = ch.stream(channel + 1); (0..64).map(|_| s.sample()).collect() };
            prop_assert_ne!(a, c);
        }
    }

    #[test]
    fn csv_numbers_round_trip(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(fmt17(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
    }

    #[test]
    fn plant_is_linear(u1 in -5.0..5.0f64, u2 in -5.0..5.0f64, x in prop::collection::vec(-1.0..1.0f64, 3)) {
        let v = |s: &[f64]| DVector::from_column_slice(s);
        let plant = make_plant(v(&[-2.5, -11.0, -5.0]), v(&[1.0, -5.0, 9.0]), None, v(&[-4.0, -9.25, -6.25])).unwrap();
        let x = v(&x);
        let zero = DVector::zeros(3);
        let (a, _) = plant_step(&plant, &x, u1, 0.0, 1e-2).unwrap();
        let (b, _) = plant_step(&plant, &zero, u2, 0.0, 1e-2).unwrap();
        let (c, _) = plant_step(&plant, &x, u1 + u2, 0.0, 1e-2).unwrap();
        prop_assert!((a + b - c).amax() < 1e-9);
    }

    #[test]
    fn configs_round_trip(seed in any::<u64>(), sigma in 0.0..2.0f64, stride in 1u64..50, which in 0usize..3) {
        let mut cfg = preset(["app1_k1", "app1_k3", "app2"][which]).unwrap();
        cfg.noise = NoiseChannel::gaussian(sigma, seed);
        cfg.integrator.record_stride = stride;
        let text = cfg.to_toml().unwrap();
        prop_assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }
}
