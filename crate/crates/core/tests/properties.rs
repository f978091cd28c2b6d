use ndarray::{Array1, Array2};
use proptest::prelude::*;

use nica::diagnostics::{rademacher_bound, recovery_bound, BoundInputs};
use nica::metrics::{assignment_cost, hungarian};
use nica::nn::{gaussian_matrix, Activation, MlpParams, MlpSpec};
use nica::rng;

fn activation(kind: u8) -> Activation {
    match kind % 3 {
        0 => Activation::LeakyRelu { slope: 0.2 },
        1 => Activation::Relu,
        _ => Activation::Identity,
    }
}

fn random_net(widths: Vec<usize>, kind: u8, seed: u64) -> MlpParams {
    let spec = MlpSpec::new(widths, activation(kind), true).unwrap();
    MlpParams::init(spec, &mut rng::seeded(seed)).unwrap()
}

fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in all_permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn backprop_matches_central_differences(
        widths in prop::collection::vec(1usize..6, 2..5),
        kind in 0u8..3,
        seed in any::<u64>(),
    ) {
        let net = random_net(widths.clone(), kind, seed);
        let mut r = rng::seeded(seed ^ 0x5eed);
        let x = gaussian_matrix(3, widths[0], &mut r);
        let g = gaussian_matrix(3, *widths.last().unwrap(), &mut r);
        let objective = |n: &MlpParams| (&n.forward_batch(x.view()).unwrap() * &g).sum();
        let (_, cache) = net.forward_cached(x.view()).unwrap();
        let (grads, _) = net.backward_batch(&cache, g.view()).unwrap();

        let h = 1e-6;
        let mut num = 0.0;
        let mut den = 0.0;
        for (layer, grad) in grads.iter().enumerate() {
            for idx in ndarray::indices(grad.dim()) {
                let mut plus = net.clone();
                plus.weights[layer][idx] += h;
                let mut minus = net.clone();
                minus.weights[layer][idx] -= h;
                let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
                num += (fd - grad[idx]).powi(2);
                den += grad[idx].powi(2).max(fd * fd);
            }
        }
        let rel = if den > 0.0 { (num / den).sqrt() } else { num.sqrt() };
        prop_assert!(rel <= 1e-5, "relative error {}", rel);
    }

    #[test]
    fn frobenius_product_is_a_lipschitz_bound(
        widths in prop::collection::vec(1usize..7, 2..5),
        kind in 0u8..3,
        seed in any::<u64>(),
    ) {
        let net = random_net(widths.clone(), kind, seed);
        let mut r = rng::seeded(seed.wrapping_add(1));
        let a: Array1<f64> = gaussian_matrix(1, widths[0], &mut r).row(0).to_owned();
        let b: Array1<f64> = gaussian_matrix(1, widths[0], &mut r).row(0).to_owned();
        let fa = net.forward(a.view()).unwrap();
        let fb = net.forward(b.view()).unwrap();
        let lhs = (&fa - &fb).mapv(|v| v * v).sum().sqrt();
        let lip: f64 = net.frobenius_norms().iter().product();
        let rhs = lip * (&a - &b).mapv(|v| v * v).sum().sqrt();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-12, "{} > {}", lhs, rhs);
    }

    #[test]
    fn hungarian_matches_brute_force(d in 1usize..7, values in prop::collection::vec(-10.0f64..10.0, 36)) {
        let cost = Array2::from_shape_fn((d, d), |(i, j)| values[i * 6 + j]);
        let got = hungarian(&cost).unwrap();
        let best = all_permutations(d)
            .iter()
            .map(|p| assignment_cost(&cost, p))
            .fold(f64::INFINITY, f64::min);
        prop_assert!((assignment_cost(&cost, &got) - best).abs() <= 1e-9);
        let mut seen = got.clone();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..d).collect::<Vec<_>>());
    }

    #[test]
    fn recovery_bound_monotone(
        c_x in 0.1f64..2.0,
        c_u in 0.1f64..2.0,
        norms in prop::collection::vec(0.2f64..1.5, 2..5),
        dim in 1usize..5,
        n in 100usize..1_000_000,
        delta in 0.01f64..0.5,
        nu in 0.0f64..1.0,
        c_t in 0.1f64..100.0,
        sigma in 0.1f64..10.0,
        which in 0usize..8,
    ) {
        let base = BoundInputs {
            c_x, c_u, num_layers: norms.len(), layer_norms: norms.clone(), dim, n, delta, nu, c_t, sigma_star: sigma,
        };
        let eval = |i: &BoundInputs| recovery_bound(i, rademacher_bound(i)).unwrap();
        let b0 = eval(&base);
        let mut more_b = base.clone();
        more_b.layer_norms[which % norms.len()] *= 1.1;
        let more_n = BoundInputs { n: n * 2, ..base.clone() };
        let more_sigma = BoundInputs { sigma_star: sigma * 1.1, ..base.clone() };
        let more_nu = BoundInputs { nu: nu + 0.1, ..base.clone() };
        let more_ct = BoundInputs { c_t: c_t * 1.1, ..base };
        prop_assert!(eval(&more_b) > b0);
        prop_assert!(eval(&more_n) < b0);
        prop_assert!(eval(&more_sigma) < b0);
        prop_assert!(eval(&more_nu) > b0);
        prop_assert!(eval(&more_ct) > b0);
    }
}
