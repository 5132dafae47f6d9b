use gridform::env::InputTensor;
use gridform::qnet::{
    action_value, decode_action, gradient_check, q_value, top_k, Architecture, KernelPreset, OutputVector,
    QNetwork,
};
use gridform::SwitchConfig;
use proptest::prelude::*;

fn input(width: usize, fill: &[f64]) -> InputTensor<f64> {
    InputTensor::from_rows(std::array::from_fn(|r| {
        (0..width).map(|j| fill[(r * width + j) % fill.len()]).collect()
    }))
}

#[test]
fn gradient_check_over_several_seeds() {
    for seed in 0..4 {
        let g = gradient_check(seed, 48).unwrap();
        assert!(
            g.max_relative_error < 1e-4,
            "seed {seed}: {}",
            g.max_relative_error
        );
        assert!(g.zero_coordinates > 0);
        assert_eq!(g.max_zero_gradient, 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decoding_ignores_monotone_rescaling(
        raw in prop::collection::vec(-5.0f64..5.0, 8),
        k in 1usize..8,
        scale in 0.1f64..10.0,
        shift in -3.0f64..3.0,
    ) {
        let a = OutputVector::normalize(&raw);
        let moved: Vec<f64> = raw.iter().map(|&z| (scale * z + shift).exp()).collect();
        let b = OutputVector::normalize(&moved);
        prop_assert_eq!(decode_action(&a, k), decode_action(&b, k));
        prop_assert!(a.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn greedy_value_dominates_every_action(
        values in prop::collection::vec(0.0f64..1.0, 6),
        k in 1usize..6,
        mask in 0u64..64,
    ) {
        let v = OutputVector { values };
        let q = q_value(&v, k);
        prop_assert!((q - action_value(&v, &decode_action(&v, k))).abs() < 1e-15);
        let a = SwitchConfig::from_mask(mask, 6);
        if a.closed_count() == k {
            prop_assert!(action_value(&v, &a) <= q + 1e-15);
        }
    }

    #[test]
    fn q_value_is_monotone_in_each_entry(
        values in prop::collection::vec(0.0f64..1.0, 6),
        k in 1usize..6,
        i in 0usize..6,
        bump in 0.0f64..1.0,
    ) {
        let mut up = values.clone();
        up[i] += bump;
        let hi = q_value(&OutputVector { values: up }, k);
        let lo = q_value(&OutputVector { values }, k);
        prop_assert!(hi >= lo);
    }

    #[test]
    fn top_k_is_sorted_and_distinct(values in prop::collection::vec(-1.0f64..1.0, 1..12), k in 0usize..12) {
        let k = k.min(values.len());
        let idx = top_k(&values, k);
        prop_assert_eq!(idx.len(), k);
        for w in idx.windows(2) {
            prop_assert!(values[w[0]] >= values[w[1]]);
        }
        let cut = idx.last().map(|&i| values[i]);
        if let Some(cut) = cut {
            let above = values.iter().filter(|&&x| x > cut).count();
            prop_assert!(above < k || k == 0);
        }
    }

    #[test]
    fn forward_is_deterministic_and_clone_safe(seed in 0u64..1000, fill in prop::collection::vec(0.0f64..1.0, 1..20)) {
        let net = QNetwork::<f64>::new(Architecture::new(8, 8, KernelPreset::K3), seed);
        let x = input(8, &fill);
        let a = net.forward(&x).unwrap();
        let b = net.clone().forward(&x).unwrap();
        prop_assert_eq!(&a, &b);
        let restored = QNetwork::<f64>::from_checkpoint(&net.to_checkpoint()).unwrap();
        prop_assert_eq!(restored.forward(&x).unwrap(), a);
    }
}
