//! Randomised properties of the network, the exploration directions and
//! the exploration score, checked against independent oracles.

use age_core::adversarial::{fgm_direction, pgd_direction, AdvConfig};
use age_core::age::{age_score, select_arm, train_step, AgeConfig, AgeModel, ShallowNet};
use age_core::baselines::vanilla_select;
use age_core::nn::{AdamConfig, FieldLayout, Network, NetworkSpec, SparseFeatureVector};
use age_core::rng::{derive_seed, rng_for};
use age_core::uncertainty::{ucb_from_predictions, UncertaintyMethod};
use proptest::prelude::*;
use rand::Rng;

fn spec(seed: u64) -> NetworkSpec {
    // vary shape with the seed so the sweep covers several architectures
    let mut rng = rng_for(seed, &[1]);
    NetworkSpec {
        layout: FieldLayout::new(vec![rng.random_range(2..6), rng.random_range(2..6)], 4).unwrap(),
        embed_dim: rng.random_range(2..5),
        hidden: vec![rng.random_range(8..16), rng.random_range(4..10)],
        embedding_init_std: 0.5,
        output_bias: rng.random_range(-2.0..1.0),
    }
}

fn random_input(net: &Network, seed: u64) -> SparseFeatureVector {
    let mut rng = rng_for(seed, &[2]);
    let mut user = Vec::new();
    let mut off = 0u32;
    for &s in &net.layout.field_sizes {
        user.push(off + rng.random_range(0..s as u32));
        off += s as u32;
    }
    SparseFeatureVector::new(user, rng.random_range(0..net.layout.num_arms as u32))
}

fn central_difference(net: &Network, h: &[f64], step: f64) -> Vec<f64> {
    (0..h.len())
        .map(|i| {
            let mut up = h.to_vec();
            let mut down = h.to_vec();
            up[i] += step;
            down[i] -= step;
            (net.forward_dense(&up, None).unwrap() - net.forward_dense(&down, None).unwrap())
                / (2.0 * step)
        })
        .collect()
}

#[test]
fn input_gradient_matches_finite_differences_on_100_networks() {
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let net = Network::new(&spec(seed), seed).unwrap();
        let x = random_input(&net, seed);
        let h = net.embed(&x).unwrap();
        let analytic = net.grad_wrt_embedding(&x, None).unwrap();
        let numeric = central_difference(&net, &h, 1e-5);
        for (a, n) in analytic.iter().zip(&numeric) {
            let scale = a.abs().max(n.abs());
            // components below 1e-7 are dominated by rounding in the quotient
            if scale > 1e-7 {
                worst = worst.max((a - n).abs() / scale);
            } else {
                assert!((a - n).abs() < 1e-9, "seed {seed}: {a} vs {n}");
            }
        }
    }
    assert!(worst <= 1e-4, "worst relative error {worst}");
}

#[test]
fn adversarial_step_ascends_on_99_percent_of_networks() {
    let mut ascents = 0;
    let mut total = 0;
    for seed in 0..1000 {
        let net = Network::new(&spec(seed), seed).unwrap();
        let x = random_input(&net, seed);
        let dir = fgm_direction(&net, &x, &AdvConfig::fgm()).unwrap();
        if dir.degenerate {
            continue;
        }
        total += 1;
        let h = net.embed(&x).unwrap();
        let moved: Vec<f64> = h.iter().zip(&dir.vector).map(|(a, g)| a + 1e-4 * g).collect();
        if net.forward_dense(&moved, None).unwrap() > net.forward_dense(&h, None).unwrap() {
            ascents += 1;
        }
    }
    assert!(total > 900);
    assert!(ascents as f64 >= 0.99 * total as f64, "{ascents}/{total}");
}

#[test]
fn directions_have_unit_norm_and_are_deterministic() {
    for seed in 0..50 {
        let net = Network::new(&spec(seed), seed).unwrap();
        let x = random_input(&net, seed);
        for cfg in [AdvConfig::fgm(), AdvConfig::pgd(1), AdvConfig::pgd(4), AdvConfig::pgd(10)] {
            let d = pgd_direction(&net, &x, &cfg).unwrap();
            if d.degenerate {
                assert!(d.vector.iter().all(|v| *v == 0.0));
                continue;
            }
            let norm = d.vector.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() <= 1e-12, "{norm}");
            assert_eq!(d, pgd_direction(&net, &x, &cfg).unwrap());
        }
        assert_eq!(
            pgd_direction(&net, &x, &AdvConfig::pgd(1)).unwrap(),
            fgm_direction(&net, &x, &AdvConfig::fgm()).unwrap()
        );
    }
}

fn age_cfg(method: UncertaintyMethod, lambda: f64) -> AgeConfig {
    let mut cfg = AgeConfig {
        lambda,
        dgu_enabled: false,
        ..AgeConfig::default()
    };
    cfg.uncertainty.method = method;
    cfg.uncertainty.dropout_rate = 0.2;
    cfg
}

#[test]
fn ucb_perturbation_never_lowers_the_score() {
    for seed in 0..200 {
        let net = Network::new(&spec(seed), seed).unwrap();
        let shallow = ShallowNet::for_network(&net, 4, -1.0, seed);
        let x = random_input(&net, seed);
        for lambda in [1e-4, 1e-3, 1e-2] {
            let b = age_score(&net, &shallow, &x, &age_cfg(UncertaintyMethod::McUcb, lambda), 0, seed)
                .unwrap();
            assert!(b.uncertainty >= 0.0);
            assert!(b.final_score >= b.base_pred, "seed {seed} λ {lambda}: {b:?}");
        }
    }
}

#[test]
fn closed_gate_reproduces_vanilla_choices() {
    for seed in 0..100 {
        let net = Network::new(&spec(seed), seed).unwrap();
        let shallow = ShallowNet::for_network(&net, 4, -1.0, seed);
        let user = random_input(&net, seed).active_indices;
        let pool: Vec<SparseFeatureVector> = (0..net.layout.num_arms as u32)
            .map(|a| SparseFeatureVector::new(user.clone(), a))
            .collect();
        for method in [UncertaintyMethod::McUcb, UncertaintyMethod::McTs] {
            let mut cfg = age_cfg(method, 1.0);
            cfg.dgu_enabled = true;
            cfg.dgu_threshold = Some(1.0);
            let (arm, parts) = select_arm(&net, &shallow, &pool, &cfg, &[], seed).unwrap();
            assert!(parts.iter().all(|b| b.gate == 0));
            assert_eq!(arm, vanilla_select(&net, &pool).unwrap());
        }
    }
}

#[test]
fn training_on_separable_toy_lowers_moving_average_loss() {
    // two arms, one user field; arm 0 always clicks, arm 1 never does
    let spec = NetworkSpec {
        layout: FieldLayout::new(vec![2], 2).unwrap(),
        embed_dim: 4,
        hidden: vec![8, 4],
        embedding_init_std: 0.1,
        output_bias: 0.0,
    };
    let net = Network::new(&spec, 3).unwrap();
    let shallow = ShallowNet::for_network(&net, 4, 0.0, 3);
    let adam = AdamConfig {
        learning_rate: 1e-2,
        ..AdamConfig::default()
    };
    let mut model = AgeModel::new(net, shallow, adam);
    let mut rng = rng_for(9, &[0]);
    let mut averages = Vec::new();
    let mut window = 0.0;
    for step in 0..1000u64 {
        let arm = rng.random_range(0..2u32);
        let user = rng.random_range(0..2u32);
        let x = SparseFeatureVector::new(vec![user], arm);
        let label = u8::from(arm == 0);
        let losses = train_step(&mut model, &x, label, 0.0, derive_seed(9, &[step])).unwrap();
        window += losses.main;
        if (step + 1) % 100 == 0 {
            averages.push(window / 100.0);
            window = 0.0;
        }
    }
    for pair in averages.windows(2) {
        assert!(pair[1] < pair[0], "{averages:?}");
    }
}

proptest! {
    #[test]
    fn ucb_is_permutation_invariant(
        preds in prop::collection::vec(0.001f64..0.999, 2..30),
        base in 0.001f64..0.999,
        rotate in 0usize..30,
    ) {
        let a = ucb_from_predictions(&preds, base).unwrap();
        let mut shuffled = preds.clone();
        shuffled.reverse();
        let k = rotate % shuffled.len();
        shuffled.rotate_left(k);
        let b = ucb_from_predictions(&shuffled, base).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn ucb_vanishes_only_when_predictions_equal_base(
        base in 0.001f64..0.999,
        n in 2usize..20,
        bump in 1e-6f64..0.1,
    ) {
        prop_assert_eq!(ucb_from_predictions(&vec![base; n], base).unwrap(), 0.0);
        let mut preds = vec![base; n];
        preds[0] = (base + bump).min(0.9999);
        prop_assert!(ucb_from_predictions(&preds, base).unwrap() > 0.0);
    }

    #[test]
    fn fgm_ignores_positive_output_rescaling(seed in 0u64..500, factor in 0.1f64..10.0) {
        let net = Network::new(&spec(seed), seed).unwrap();
        let x = random_input(&net, seed);
        let mut scaled = net.clone();
        let out = scaled.mlp.output_layer_mut();
        for w in out.weights.iter_mut() {
            *w *= factor;
        }
        let a = fgm_direction(&net, &x, &AdvConfig::fgm()).unwrap();
        let b = fgm_direction(&scaled, &x, &AdvConfig::fgm()).unwrap();
        prop_assert_eq!(a.degenerate, b.degenerate);
        for (u, v) in a.vector.iter().zip(&b.vector) {
            prop_assert!((u - v).abs() <= 1e-9);
        }
    }
}
