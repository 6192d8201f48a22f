//! Property tests for masks, ERK allocation, readjustment and the schedule.

use feddst::nn::{LayerSpec, Network, Tensor};
use feddst::sparsity::{
    cosine_alpha, erk_distribution, readjust, Mask, ReadjustmentSchedule, SparseModel, SparsityDistribution,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn conv_or_linear_shapes() -> impl Strategy<Value = Vec<Vec<usize>>> {
    let conv = (1usize..12, 1usize..6, 1usize..6).prop_map(|(o, i, k)| vec![o, i, k, k]);
    let lin = (1usize..60, 1usize..60).prop_map(|(o, i)| vec![o, i]);
    prop::collection::vec(prop_oneof![conv, lin], 1..6)
}

proptest! {
    #[test]
    fn erk_keeps_exact_total_within_layer_bounds(shapes in conv_or_linear_shapes(), s in 0.0f64..0.99) {
        let d = erk_distribution(&shapes, s).unwrap();
        let n: usize = shapes.iter().map(|sh| sh.iter().product::<usize>()).sum();
        prop_assert_eq!(d.total_retained(), ((1.0 - s) * n as f64 + 1e-9).floor() as usize);
        for (k, size) in d.retained().iter().zip(d.sizes()) {
            prop_assert!(k <= size);
        }
    }

    #[test]
    fn erk_total_shrinks_as_sparsity_grows(shapes in conv_or_linear_shapes(), a in 0.0f64..0.98, b in 0.0f64..0.98) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let dl = erk_distribution(&shapes, lo).unwrap();
        let dh = erk_distribution(&shapes, hi).unwrap();
        prop_assert!(dh.total_retained() <= dl.total_retained());
    }

    #[test]
    fn inflated_gives_up_floor_alpha_per_layer(counts in prop::collection::vec((1usize..500, 0.0f64..1.0), 1..6), alpha in 0.0f64..1.0) {
        let sizes: Vec<usize> = counts.iter().map(|c| c.0).collect();
        let kept: Vec<usize> = counts.iter().map(|&(n, f)| (n as f64 * f) as usize).collect();
        let d = SparsityDistribution::from_counts(sizes, kept.clone()).unwrap();
        let inf = d.inflated(alpha);
        for (&k, &ki) in kept.iter().zip(inf.retained()) {
            let dropped = k - ki;
            prop_assert!(dropped as f64 <= alpha * k as f64 + 1e-6);
            prop_assert!((dropped + 1) as f64 > alpha * k as f64 - 1e-6);
        }
    }

    #[test]
    fn random_mask_has_exact_counts(counts in prop::collection::vec((1usize..300, 0.0f64..=1.0), 1..6), seed: u64) {
        let sizes: Vec<usize> = counts.iter().map(|c| c.0).collect();
        let kept: Vec<usize> = counts.iter().map(|&(n, f)| (n as f64 * f) as usize).collect();
        let mask = Mask::random(&sizes, &kept, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(mask.layer_sizes(), sizes);
        prop_assert_eq!(mask.nnz_per_layer(), kept);
    }

    #[test]
    fn readjust_restores_counts_and_bounds_flips(
        input in 1usize..40,
        outs in prop::collection::vec(1usize..40, 1..4),
        s in 0.1f64..0.95,
        alpha in 0.0f64..1.0,
        seed: u64,
    ) {
        let mut layers = Vec::new();
        let mut width = input;
        for &o in &outs {
            layers.push(LayerSpec::Linear { in_features: width, out_features: o, has_bias: false });
            width = o;
        }
        let mut net = Network::<f32>::zeros(vec![input], layers).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let widths: Vec<Vec<usize>> = net.prunable_params().iter().map(|&p| net.params()[p].shape().to_vec()).collect();
        let base = erk_distribution(&widths, s).unwrap();
        for p in net.params_mut() {
            for v in p.data_mut() {
                *v = rand::Rng::random_range(&mut rng, -1.0f32..1.0);
            }
        }
        let grads: Vec<Tensor<f32>> = net
            .params()
            .iter()
            .map(|p| {
                let data = (0..p.len()).map(|_| rand::Rng::random_range(&mut rng, -1.0f32..1.0)).collect();
                Tensor::new(p.shape().to_vec(), data).unwrap()
            })
            .collect();
        let mask = Mask::random(base.sizes(), base.retained(), &mut rng);
        let mut model = SparseModel::new(net, mask).unwrap();
        let report = readjust(&mut model, &grads, alpha, &base).unwrap();
        prop_assert_eq!(model.mask.nnz_per_layer(), base.retained().to_vec());
        prop_assert!(model.mask.is_satisfied_by(&model.net));
        let budget: usize = base.retained().iter().zip(base.inflated(alpha).retained()).map(|(k, ki)| k - ki).sum();
        prop_assert_eq!(report.pruned, budget);
        prop_assert_eq!(report.grown, budget);
        prop_assert!(report.flipped <= 2 * budget);
    }

    #[test]
    fn cosine_alpha_is_bounded_and_nonincreasing(alpha in 0.0f64..=1.0, end in 1usize..500, between in 1usize..20) {
        let sched = ReadjustmentSchedule { rounds_between: between, end_round: end, alpha, readjust_epoch: 1 };
        let mut prev = f64::INFINITY;
        for r in 1..=end + 3 {
            let a = cosine_alpha(r, &sched);
            prop_assert!((0.0..=alpha + 1e-12).contains(&a));
            prop_assert!(a <= prev + 1e-12);
            prev = a;
        }
        prop_assert_eq!(cosine_alpha(1, &sched), alpha);
        prop_assert!(cosine_alpha(end + 1, &sched).abs() < 1e-12);
        prop_assert_eq!(cosine_alpha(end + 2, &sched), 0.0);
    }
}
