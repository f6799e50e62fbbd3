mod common;

use aoi_core::fa::{Belief, FaTracker, PredictMode};
use aoi_core::rng::{SeedTree, Stream};
use aoi_core::traffic::{ActivationModel, ActivationVector, EventChain, TrafficProcess};
use proptest::prelude::*;
use rand::Rng;

fn filtered(model: &ActivationModel, obs: &[ActivationVector]) -> Vec<f64> {
    let mut b = Belief::<f64>::stationary(model).unwrap();
    for w in obs {
        b = b.forward_step(w, model).unwrap();
    }
    b.weights().to_vec()
}

fn max_abs_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn belief_matches_path_sum_on_the_largest_case() {
    let mut rng = SeedTree::new(42).stream(Stream::Layout);
    let model = common::random_model(3, 4, &mut rng);
    let obs: Vec<ActivationVector> = (0..8).map(|_| ActivationVector((0..4).map(|_| rng.random::<bool>()).collect())).collect();
    let gap = max_abs_gap(&filtered(&model, &obs), &common::path_sum_posterior(&model, &obs));
    assert!(gap <= 1e-10, "max abs error {gap}");
}

#[test]
fn belief_matches_path_sum_on_generated_traffic() {
    for seed in 0..5 {
        let tree = SeedTree::new(seed);
        let mut rng = tree.stream(Stream::Layout);
        let model = common::random_model(2, 3, &mut rng);
        let mut process = TrafficProcess::stationary(model.clone(), tree.stream(Stream::Events), tree.stream(Stream::Activations));
        let obs: Vec<ActivationVector> = (0..8).map(|_| process.advance().activity).collect();
        let gap = max_abs_gap(&filtered(&model, &obs), &common::path_sum_posterior(&model, &obs));
        assert!(gap <= 1e-10, "seed {seed}: max abs error {gap}");
    }
}

#[test]
fn tracker_forecast_is_the_propagated_noisy_or() {
    let model = ActivationModel::new(
        vec![EventChain::new(0.2, 0.3).unwrap(), EventChain::new(0.1, 0.4).unwrap()],
        vec![vec![0.9, 0.0], vec![0.5, 0.6]],
    )
    .unwrap();
    let mut tracker = FaTracker::<f64>::new(model.clone(), PredictMode::Marginal).unwrap();
    let w = ActivationVector(vec![true, false]);
    tracker.observe(&w).unwrap();
    let post = common::path_sum_posterior(&model, std::slice::from_ref(&w));
    let chains = [(0.2, 0.3), (0.1, 0.4)];
    let mut expected = [0.0; 2];
    for (s, p) in post.iter().enumerate() {
        for next in 0..4usize {
            let trans: f64 = (0..2)
                .map(|k| {
                    let (on, off) = chains[k];
                    let p_on = if s >> k & 1 == 1 { 1.0 - off } else { on };
                    if next >> k & 1 == 1 {
                        p_on
                    } else {
                        1.0 - p_on
                    }
                })
                .product();
            let e0 = next & 1 == 1;
            let e1 = next >> 1 & 1 == 1;
            expected[0] += p * trans * if e0 { 0.9 } else { 0.0 };
            expected[1] += p * trans * (1.0 - (if e0 { 0.5 } else { 1.0 }) * (if e1 { 0.4 } else { 1.0 }));
        }
    }
    let got = tracker.forecast().probs;
    assert!(max_abs_gap(&got, &expected) < 1e-12, "{got:?} vs {expected:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn belief_equals_path_sum_for_small_models(
        events in 1usize..=3,
        devices in 1usize..=4,
        steps in 1usize..=5,
        seed in 0u64..10_000,
    ) {
        let mut rng = SeedTree::new(seed).stream(Stream::Layout);
        let model = common::random_model(events, devices, &mut rng);
        let obs: Vec<ActivationVector> = (0..steps).map(|_| ActivationVector((0..devices).map(|_| rng.random::<bool>()).collect())).collect();
        let b = filtered(&model, &obs);
        let total: f64 = b.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(max_abs_gap(&b, &common::path_sum_posterior(&model, &obs)) <= 1e-10);
    }
}
