use fairvfl_core::data::synth_dataset;
use fairvfl_core::fedsim::{audit_transcript, AsyncSchedule};
use fairvfl_core::metrics::harmonic_mean;
use fairvfl_core::model::{
    deo_gap, finite_diff_check, margins, DualPair, LossSpec, ParamBlocks, VerticalDataset,
};
use fairvfl_core::optimizer::{run_training, TrainConfig};
use proptest::prelude::*;

fn dataset(n: usize, parties: usize, bias: f64, seed: u64) -> VerticalDataset {
    synth_dataset(n, 3 * parties, parties, bias, seed).unwrap()
}

fn theta_for(d: &VerticalDataset, raw: &[f64]) -> ParamBlocks {
    ParamBlocks::from_flat(&d.widths(), &raw[..d.m()]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn swapping_groups_negates_the_gap(
        seed in 0u64..10_000,
        parties in 1usize..5,
        raw in prop::collection::vec(-2.0f64..2.0, 12),
    ) {
        let d = dataset(60, parties, 0.7, seed);
        let theta = theta_for(&d, &raw);
        let swapped = d.swap_groups();
        prop_assert_eq!(deo_gap(&swapped, &theta).unwrap(), -deo_gap(&d, &theta).unwrap());
    }

    #[test]
    fn margins_add_over_blocks_and_parameters(
        seed in 0u64..10_000,
        parties in 1usize..5,
        a in prop::collection::vec(-2.0f64..2.0, 12),
        b in prop::collection::vec(-2.0f64..2.0, 12),
    ) {
        let d = dataset(40, parties, 0.3, seed);
        let (ta, tb) = (theta_for(&d, &a), theta_for(&d, &b));
        let z = margins(&d, &ta).unwrap();
        let dense = d.dense();
        for (i, row) in dense.iter().enumerate() {
            let direct: f64 = row.iter().zip(&a).map(|(x, t)| x * t).sum();
            prop_assert!((z[i] - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
        }
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let zs = margins(&d, &theta_for(&d, &sum)).unwrap();
        let zb = margins(&d, &tb).unwrap();
        for i in 0..d.n() {
            prop_assert!((zs[i] - z[i] - zb[i]).abs() <= 1e-12 * (1.0 + zs[i].abs()));
        }
    }

    #[test]
    fn harmonic_mean_sits_between_its_arguments(ac in 0.0f64..=100.0, fr in 0.0f64..=100.0) {
        let hm = harmonic_mean(ac, fr);
        prop_assert!(hm >= ac.min(fr) - 1e-12 && hm <= ac.max(fr) + 1e-12);
        prop_assert_eq!(harmonic_mean(ac, fr), harmonic_mean(fr, ac));
        prop_assert!((harmonic_mean(ac, ac) - ac).abs() <= 1e-12);
    }

    #[test]
    fn gradients_match_central_differences(
        seed in 0u64..10_000,
        parties in 1usize..4,
        raw in prop::collection::vec(-1.0f64..1.0, 12),
        l1 in 0.0f64..3.0,
        l2 in 0.0f64..3.0,
        eps in 0.0f64..0.3,
        c in 0.0f64..0.05,
    ) {
        let d = dataset(50, parties, 1.0, seed);
        let spec = LossSpec::for_samples(d.n(), eps).unwrap();
        let err = finite_diff_check(&d, &theta_for(&d, &raw), &DualPair::projected(l1, l2), &spec, c, 1e-5).unwrap();
        prop_assert!(err < 1e-6, "relative error {}", err);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn training_replays_and_keeps_the_protocol(
        seed in 0u64..10_000,
        parties in 2usize..5,
        q in 1usize..6,
        eps in 0.0f64..0.2,
    ) {
        let d = dataset(80, parties, 1.2, seed);
        let mut cfg = TrainConfig::new(eps, 30);
        cfg.async_schedule = AsyncSchedule::uniform(q, seed);
        let a = run_training(&d, &cfg).unwrap();
        let b = run_training(&d, &cfg).unwrap();
        cfg.deterministic = true;
        let c = run_training(&d, &cfg).unwrap();
        let (a, b, c) = (a.timeless(), b.timeless(), c.timeless());
        prop_assert_eq!(&a.rows, &b.rows);
        prop_assert_eq!(&a.rows, &c.rows);
        prop_assert_eq!(&a.transcript, &c.transcript);

        prop_assert!(audit_transcript(&a.transcript, d.n(), d.parties()).is_ok());
        prop_assert_eq!(a.transcript.len(), 30 * (parties + 1));
        for r in &a.rows {
            prop_assert!(r.lambda1 >= 0.0 && r.lambda2 >= 0.0);
            prop_assert!(r.steps.iter().all(|&s| (1..=q).contains(&s)) || r.round == 0);
        }
    }
}
