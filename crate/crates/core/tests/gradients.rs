use drm_core::nn::{Activation, Architecture, Tensor2};
use drm_core::value::{critic_loss, expectile_value_loss};
use drm_oracles::{central_difference, relative_error, weighted_output};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor2 {
    Tensor2::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    // Smooth activations keep finite differences away from ReLU kinks.
    #[test]
    fn backward_matches_finite_differences(
        widths in prop::collection::vec(1usize..=6, 2..=4),
        seed in any::<u64>(),
        rows in 1usize..=5,
        identity_head in any::<bool>(),
    ) {
        let mut acts = vec![Activation::Tanh; widths.len() - 1];
        if identity_head {
            *acts.last_mut().unwrap() = Activation::Identity;
        }
        let net = Architecture::new(widths.clone(), acts).unwrap().init(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch = random_tensor(&mut rng, rows, widths[0]);
        let upstream = random_tensor(&mut rng, rows, *widths.last().unwrap());
        let (_, trace) = net.forward(&batch).unwrap();
        let grads = net.backward(&trace, &upstream).unwrap();

        let fd = central_difference(|p| weighted_output(&net, &batch, &upstream, p), &net.flat_params(), 1e-6);
        for (a, b) in grads.flatten().iter().zip(&fd) {
            prop_assert!(relative_error(*a, *b, 1e-2) < 1e-4, "analytic {a} vs numeric {b}");
        }
        let fd_in = central_difference(
            |x| {
                let probe = Tensor2::from_vec(rows, widths[0], x.to_vec()).unwrap();
                let out = net.predict(&probe).unwrap();
                out.data().iter().zip(upstream.data()).map(|(o, w)| o * w).sum()
            },
            batch.data(),
            1e-6,
        );
        for (a, b) in grads.input.data().iter().zip(&fd_in) {
            prop_assert!(relative_error(*a, *b, 1e-2) < 1e-4);
        }
        let only_input = net.input_gradient(&trace, &upstream).unwrap();
        prop_assert_eq!(only_input.data(), grads.input.data());
    }

    #[test]
    fn expectile_gradient_matches_finite_differences(
        values in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..=16),
        expectile in 0.05f64..0.95,
    ) {
        let (v, q): (Vec<f64>, Vec<f64>) = values.into_iter().unzip();
        // Residuals too close to zero straddle the weight switch.
        prop_assume!(v.iter().zip(&q).all(|(a, b)| (a - b).abs() > 1e-3));
        let (_, grad) = expectile_value_loss(&v, &q, expectile).unwrap();
        let fd = central_difference(|x| expectile_value_loss(x, &q, expectile).unwrap().0, &v, 1e-7);
        for (a, b) in grad.iter().zip(&fd) {
            prop_assert!(relative_error(*a, *b, 1e-2) < 1e-4, "analytic {a} vs numeric {b}");
        }
    }

    #[test]
    fn critic_gradient_matches_finite_differences(
        values in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0), 1..=16),
    ) {
        let q1: Vec<f64> = values.iter().map(|t| t.0).collect();
        let q2: Vec<f64> = values.iter().map(|t| t.1).collect();
        let y: Vec<f64> = values.iter().map(|t| t.2).collect();
        let loss = critic_loss(&q1, &q2, &y).unwrap();
        let fd1 = central_difference(|x| critic_loss(x, &q2, &y).unwrap().loss, &q1, 1e-6);
        let fd2 = central_difference(|x| critic_loss(&q1, x, &y).unwrap().loss, &q2, 1e-6);
        for (a, b) in loss.grad_q1.iter().zip(&fd1).chain(loss.grad_q2.iter().zip(&fd2)) {
            prop_assert!(relative_error(*a, *b, 1e-2) < 1e-4);
        }
    }
}
