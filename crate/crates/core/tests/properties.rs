use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use nurf::activation::eval_activation;
use nurf::experiment::quantile;
use nurf::geometry::hyperplane_from_point_gradient;
use nurf::kernels::gram_matrix;
use nurf::samplers::{read_weights, residual_schedule, write_weights};
use nurf::{ActivationSpec, Neuron};

fn vec3() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 3)
}

proptest! {
    #[test]
    fn hyperplane_passes_through_its_point(x in vec3(), g in vec3()) {
        prop_assume!(g.iter().map(|v| v * v).sum::<f64>() > 1e-6);
        let n = hyperplane_from_point_gradient(&x, &g).unwrap();
        prop_assert!((n.a.norm() - 1.0).abs() < 1e-12);
        prop_assert!(n.preactivation(&x).abs() < 1e-12);
        prop_assert!((n.negate().preactivation(&x) + n.preactivation(&x)).abs() < 1e-12);
    }

    #[test]
    fn smooth_activations_are_monotone(s in 1u8..=2, delta in 0.001f64..1.0, t in -5.0f64..5.0, h in 1e-3f64..1.0) {
        let spec = ActivationSpec::new(s, delta).unwrap();
        prop_assert!(eval_activation(&spec, t + h) >= eval_activation(&spec, t));
    }

    #[test]
    fn sigmoid_is_antisymmetric_about_one_half(delta in 0.001f64..1.0, t in -5.0f64..5.0) {
        let spec = ActivationSpec::sigmoid(delta);
        prop_assert!((eval_activation(&spec, t) + eval_activation(&spec, -t) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn residual_schedule_is_increasing_and_ends_at_target(n in 1usize..2000, kappa in 1.1f64..4.0, n0 in 1usize..50) {
        let s = residual_schedule(n, kappa, n0).unwrap();
        prop_assert_eq!(*s.last().unwrap(), n);
        prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn weight_files_round_trip(rows in prop::collection::vec((vec3(), -2.0f64..2.0), 1..20)) {
        let neurons: Vec<Neuron> = rows.into_iter().map(|(a, b)| Neuron { a: DVector::from_vec(a), b }).collect();
        let mut buf = Vec::new();
        write_weights(&mut buf, &neurons).unwrap();
        let back = read_weights(buf.as_slice()).unwrap();
        prop_assert_eq!(back, neurons);
    }

    #[test]
    fn gram_matrices_are_positive_semidefinite(seed in any::<u64>()) {
        let mut rng = nurf::RngStream::new(seed, 0);
        let x = DMatrix::from_fn(12, 2, |_, _| 0.5 * rng.standard_normal().tanh());
        let neurons: Vec<Neuron> = (0..30)
            .map(|_| Neuron::new(DVector::from_fn(2, |_, _| rng.standard_normal()), rng.standard_normal().tanh()).unwrap())
            .collect();
        let g = gram_matrix(&x, &neurons, &ActivationSpec::sigmoid(0.05));
        let eig = g.symmetric_eigenvalues();
        prop_assert!(eig.iter().all(|l| *l > -1e-10));
    }

    #[test]
    fn quantiles_are_ordered(mut v in prop::collection::vec(-10.0f64..10.0, 1..40)) {
        v.sort_by(f64::total_cmp);
        let (q1, q2, q3) = (quantile(&v, 0.25).unwrap(), quantile(&v, 0.5).unwrap(), quantile(&v, 0.75).unwrap());
        prop_assert!(v[0] <= q1 && q1 <= q2 && q2 <= q3 && q3 <= v[v.len() - 1]);
    }
}
