use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use relearn_core::nn::{
    backward, check_gradients, lr_schedule, lstm_cell_forward, Activation, DenseLayer, Layer, LayerStack, Loss,
    LstmCell, Optimizer, Sample,
};

fn vec_in(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, n)
}

fn two_layer(seed: u64) -> LayerStack {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    LayerStack::new(vec![
        Layer::Dense(DenseLayer::init(3, 5, Activation::Tanh, &mut rng)),
        Layer::Lstm(LstmCell::init(5, 4, &mut rng)),
        Layer::Dense(DenseLayer::init(4, 1, Activation::Identity, &mut rng)),
    ])
    .unwrap()
}

fn batch(seed: u64) -> Vec<Sample> {
    (0..4)
        .map(|i| {
            let x = |k: usize| ((seed as f64 + i as f64 * 1.7 + k as f64 * 0.3).sin()) * 1.2;
            Sample { seq: (0..6).map(|t| vec![x(t), x(t + 11), x(t + 23)]).collect(), target: vec![x(i + 5)] }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lstm_outputs_stay_in_gate_ranges(
        seed in any::<u64>(),
        x in vec_in(3, -50.0, 50.0),
        h in vec_in(4, -1.0, 1.0),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cell = LstmCell::init(3, 4, &mut rng);
        let (h_t, c_t) = lstm_cell_forward(&x, &h, &[0.0; 4], &cell).unwrap();
        // With c_prev = 0 the cell is g*i, a product of a tanh and a sigmoid.
        // Saturated gates round to exactly 1 in f64.
        prop_assert!(c_t.iter().all(|c| c.abs() <= 1.0));
        prop_assert!(h_t.iter().all(|v| v.abs() <= 1.0 && v.is_finite()));
    }

    #[test]
    fn lr_schedule_is_bounded_and_non_increasing(total in 1u64..10_000, base in 1e-6f64..1.0, a in 0u64..20_000, b in 0u64..20_000) {
        let (lo, hi) = (a.min(b), a.max(b));
        let (l1, l2) = (lr_schedule(lo, total, base), lr_schedule(hi, total, base));
        prop_assert!(l2 <= l1);
        prop_assert!((0.0..=base).contains(&l1) && (0.0..=base).contains(&l2));
    }

    #[test]
    fn frozen_layers_survive_optimizer_steps(seed in 0u64..1000, steps in 1usize..6) {
        let mut stack = two_layer(seed);
        stack.set_trainable(0, false);
        let before = stack.layers()[0].clone();
        let mut opt = Optimizer::sgd(0.1);
        for _ in 0..steps {
            let (_, g) = backward(&stack, &batch(seed), Loss::Mse).unwrap();
            opt.step_stack(&mut stack, &g).unwrap();
        }
        prop_assert_eq!(&stack.layers()[0], &before);
        prop_assert_eq!(opt.step_count(), steps as u64);
    }

    #[test]
    fn random_networks_pass_gradient_check(seed in 0u64..10_000) {
        let stack = two_layer(seed);
        let r = check_gradients(&stack, &batch(seed), Loss::Mse, 1e-5).unwrap();
        prop_assert!(r.max_rel_error <= 1e-4, "max rel error {}", r.max_rel_error);
    }
}

#[test]
fn training_is_deterministic() {
    let run = || {
        let mut stack = two_layer(5);
        let mut opt = Optimizer::adam(0.01, relearn_core::nn::LrSchedule::Constant);
        for _ in 0..10 {
            let (_, g) = backward(&stack, &batch(5), Loss::Mse).unwrap();
            opt.step_stack(&mut stack, &g).unwrap();
        }
        stack.checksum()
    };
    assert_eq!(run(), run());
}

#[test]
fn scalar_gradient_example() {
    let layer = DenseLayer::new(relearn_core::nn::Tensor2::from_vec(1, 1, vec![1.0]).unwrap(), vec![0.0], Activation::Identity).unwrap();
    let stack = LayerStack::new(vec![Layer::Dense(layer)]).unwrap();
    let (loss, g) = backward(&stack, &[Sample { seq: vec![vec![1.0]], target: vec![0.0] }], Loss::Mse).unwrap();
    assert_eq!(loss, 1.0);
    assert_eq!(g.slices()[0], &[2.0]);
}
