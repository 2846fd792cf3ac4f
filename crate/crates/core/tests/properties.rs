//! Property tests for the structural invariants.

use nalgebra::DVector;
use proptest::prelude::*;
use updens_core::input_model::{
    cholesky, estimate_covariance, estimate_mean, InputSample,
};
use updens_core::kde::{DensityGrid, Kernel, KernelDensityModel, TabulatedDensity};
use updens_core::rng::RngStream;
use updens_core::surrogate::{HierarchicalNetwork, NetworkArchitecture, TruncationLevel};

fn sample_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..5, 1usize..12).prop_flat_map(|(d, n)| {
        proptest::collection::vec(
            proptest::collection::vec(-50.0..50.0f64, d..=d),
            n..=n,
        )
    })
}

fn nondegenerate_sample_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..4).prop_flat_map(|d| {
        proptest::collection::vec(
            proptest::collection::vec(-10.0..10.0f64, d..=d),
            (d + 2)..(d + 10),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn moment_estimates_are_permutation_invariant(rows in sample_strategy(), seed in 0u64..1000) {
        let sample = InputSample::from_vecs(rows.clone()).unwrap();
        let mean = estimate_mean(&sample).unwrap();
        let cov = estimate_covariance(&sample).unwrap();

        let mut shuffled = rows;
        let mut rng = RngStream::new(seed).rng();
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut rng);
        let shuffled = InputSample::from_vecs(shuffled).unwrap();
        let mean_p = estimate_mean(&shuffled).unwrap();
        let cov_p = estimate_covariance(&shuffled).unwrap();

        for j in 0..mean.len() {
            prop_assert!((mean[j] - mean_p[j]).abs() <= 1e-9 * (1.0 + mean[j].abs()));
        }
        let scale = 1.0 + cov.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (a, b) in cov.iter().zip(cov_p.iter()) {
            prop_assert!((a - b).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn covariance_is_symmetric_psd(rows in sample_strategy(), probe_seed in 0u64..1000) {
        let sample = InputSample::from_vecs(rows).unwrap();
        let cov = estimate_covariance(&sample).unwrap();
        let d = cov.nrows();
        for i in 0..d {
            for j in 0..d {
                prop_assert_eq!(cov[(i, j)], cov[(j, i)]);
            }
        }
        let scale = cov.iter().fold(0.0f64, |a, v| a.max(v.abs())) + 1.0;
        let mut rng = RngStream::new(probe_seed).rng();
        for _ in 0..10 {
            let v = DVector::from_iterator(d, (0..d).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)));
            let q = (v.transpose() * &cov * &v)[(0, 0)];
            prop_assert!(q >= -1e-12 * scale, "negative quadratic form {q}");
        }
    }

    #[test]
    fn cholesky_round_trips_covariances(rows in nondegenerate_sample_strategy()) {
        let sample = InputSample::from_vecs(rows).unwrap();
        let cov = estimate_covariance(&sample).unwrap();
        let l = cholesky(&cov).unwrap();
        let d = cov.nrows();
        for i in 0..d {
            for j in (i + 1)..d {
                prop_assert_eq!(l[(i, j)], 0.0);
            }
            prop_assert!(l[(i, i)] >= 0.0);
        }
        let err = (&l * l.transpose() - &cov).norm();
        let denom = cov.norm();
        if denom > 1e-12 {
            prop_assert!(err / denom <= 1e-10, "relative reconstruction error {}", err / denom);
        } else {
            prop_assert!(err <= 1e-12);
        }
    }

    #[test]
    fn kde_is_nonnegative_and_normalized(
        centers in proptest::collection::vec(-20.0..20.0f64, 2..40),
        h in 0.05f64..3.0,
        query in -50.0f64..50.0,
    ) {
        let model = KernelDensityModel::new(centers.clone(), h, Kernel::Gaussian).unwrap();
        prop_assert!(model.evaluate(query) >= 0.0);

        // Grid extending at least 8 bandwidths beyond the centers.
        let lo = centers.iter().cloned().fold(f64::INFINITY, f64::min) - 8.0 * h;
        let hi = centers.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 8.0 * h;
        let grid = DensityGrid::new(lo, hi, 4000).unwrap();
        let tab = TabulatedDensity::from_model(&model, &grid);
        prop_assert!((tab.integral() - 1.0).abs() <= 1e-3, "integral {}", tab.integral());
    }

    #[test]
    fn kde_scaling_consistency(
        centers in proptest::collection::vec(-10.0..10.0f64, 3..25),
        h in 0.1f64..2.0,
        scale in 0.2f64..5.0,
    ) {
        let scaled: Vec<f64> = centers.iter().map(|c| c * scale).collect();
        let model = KernelDensityModel::new(scaled.clone(), h * scale, Kernel::Gaussian).unwrap();
        let lo = scaled.iter().cloned().fold(f64::INFINITY, f64::min) - 8.0 * h * scale;
        let hi = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 8.0 * h * scale;
        let grid = DensityGrid::new(lo, hi, 4000).unwrap();
        let tab = TabulatedDensity::from_model(&model, &grid);
        prop_assert!((tab.integral() - 1.0).abs() <= 1e-3, "integral {}", tab.integral());
    }

    #[test]
    fn l1_is_symmetric_and_triangular(
        seeds in proptest::collection::vec(0u64..10_000, 3..=3),
    ) {
        // Three random KDEs tabulated on one shared grid.
        let grid = DensityGrid::new(-25.0, 25.0, 2000).unwrap();
        let models: Vec<TabulatedDensity> = seeds
            .iter()
            .map(|&s| {
                let mut rng = RngStream::new(s).rng();
                let centers: Vec<f64> = (0..12)
                    .map(|_| rand::Rng::random_range(&mut rng, -10.0..10.0))
                    .collect();
                let h = rand::Rng::random_range(&mut rng, 0.2..1.5);
                let m = KernelDensityModel::new(centers, h, Kernel::Gaussian).unwrap();
                TabulatedDensity::from_model(&m, &grid)
            })
            .collect();
        let ab = models[0].l1(&models[1]).unwrap();
        let ba = models[1].l1(&models[0]).unwrap();
        prop_assert_eq!(ab, ba);
        let ac = models[0].l1(&models[2]).unwrap();
        let cb = models[2].l1(&models[1]).unwrap();
        prop_assert!(ab <= ac + cb + 1e-12, "triangle violated: {ab} > {ac} + {cb}");
    }

    #[test]
    fn truncation_bound_and_idempotence(z in -1e6f64..1e6, beta in 0.001f64..100.0) {
        let t = TruncationLevel::bounded(beta).unwrap();
        let once = t.apply(z);
        prop_assert!(once.abs() <= beta);
        prop_assert_eq!(t.apply(once), once);
        if z.abs() <= beta {
            prop_assert_eq!(once, z);
        }
    }

    #[test]
    fn network_flatten_reconstruct_round_trips(
        level in 0usize..2,
        outer in 1usize..3,
        m in 1usize..4,
        d in 1usize..4,
        dstar_raw in 1usize..4,
        seed in 0u64..10_000,
    ) {
        let dstar = dstar_raw.min(d);
        let arch = NetworkArchitecture {
            level,
            outer_count: outer,
            hidden_units: m,
            input_dim: d,
            interaction_order: dstar,
            weight_bound: f64::INFINITY,
        };
        let mut rng = RngStream::new(seed).rng();
        let weights: Vec<f64> = (0..arch.weight_count())
            .map(|_| rand::Rng::random_range(&mut rng, -0.5..0.5))
            .collect();
        let net = HierarchicalNetwork::new(arch, weights.clone()).unwrap();
        prop_assert_eq!(net.weights(), &weights[..]);
        let restored = HierarchicalNetwork::from_json(&net.to_json()).unwrap();
        prop_assert_eq!(&restored, &net);
        let x: Vec<f64> = (0..d).map(|_| rand::Rng::random_range(&mut rng, -2.0..2.0)).collect();
        prop_assert_eq!(restored.eval(&x).unwrap(), net.eval(&x).unwrap());
    }
}
