use mmoe::csvio::{parse_dataset, write_dataset};
use mmoe::eval::{metrics, NrmseNorm, PolyakAverager};
use mmoe::gaussian::{self, GaussianFamily, GaussianParams};
use mmoe::init::warmup_s0;
use mmoe::linalg::DEFAULT_EPSILON_STAR;
use mmoe::logistic::{self, LogisticParams};
use mmoe::mm::{mm_step_with_gamma, MmState, StepSchedule, SurrogateFamily};
use mmoe::{Dataset, Sample};
use mmoe_testkit::random;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn probabilities_are_distributions(seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let dims = random::gaussian_dims(&mut rng, 5);
        let theta = random::gaussian_params(&mut rng, dims);
        let z = random::gaussian_sample(&mut rng, dims);
        for p in [gaussian::gating_probs(&theta, &z.x).unwrap(), gaussian::responsibilities(&theta, &z).unwrap()] {
            prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let ldims = random::logistic_dims(&mut rng, 5);
        let lt = random::logistic_params(&mut rng, ldims);
        let lz = random::logistic_sample(&mut rng, ldims);
        let c = logistic::class_probs(&lt, &lz.x).unwrap();
        prop_assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn steps_stay_admissible(seed in any::<u64>(), gamma in 0.01f64..1.0) {
        let mut rng = random::rng(seed);
        let dims = random::gaussian_dims(&mut rng, 3);
        let family = GaussianFamily::new(dims, DEFAULT_EPSILON_STAR).unwrap();
        let theta = random::gaussian_params(&mut rng, dims);
        let batch: Vec<Sample> = (0..30).map(|_| random::gaussian_sample(&mut rng, dims)).collect();
        let s0 = warmup_s0(&family, &theta, &batch).unwrap();
        let state = MmState::from_stats(&family, s0).unwrap();
        let z = random::gaussian_sample(&mut rng, dims);
        let next = mm_step_with_gamma(&state, &z, gamma, &family).unwrap();
        prop_assert!(family.check_admissible(&next.s).is_ok());
        prop_assert!(next.theta.sigma2.iter().all(|v| *v > 0.0));
        prop_assert_eq!(next.iteration, 1);
    }

    #[test]
    fn schedule_is_a_decreasing_step_in_unit_interval(g0 in 0.01f64..0.99, alpha in 0.51f64..=1.0, offset in 0usize..200) {
        let s = StepSchedule::new(g0, alpha).unwrap().with_offset(offset);
        let mut prev = 1.0;
        for n in 1..200 {
            let g = s.gamma(n);
            prop_assert!(g > 0.0 && g < 1.0);
            prop_assert!(g <= prev);
            prev = g;
        }
    }

    #[test]
    fn polyak_matches_direct_mean(values in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 1..100)) {
        let mut avg = PolyakAverager::new(5);
        for (i, v) in values.iter().enumerate() {
            avg.update(i + 5, v).unwrap();
        }
        let n = values.len() as f64;
        for j in 0..3 {
            let direct = values.iter().map(|v| v[j]).sum::<f64>() / n;
            prop_assert!((avg.mean().unwrap()[j] - direct).abs() <= 1e-12 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn csv_round_trips(rows in prop::collection::vec((prop::collection::vec(-1e12f64..1e12, 2), -1e12f64..1e12, 1usize..5), 1..40)) {
        let data = Dataset {
            samples: rows.iter().map(|(x, y, _)| Sample::continuous(x.clone(), vec![*y])).collect(),
            labels: Some(rows.iter().map(|r| r.2).collect()),
        };
        let text = write_dataset(&data).unwrap();
        prop_assert_eq!(parse_dataset(text.as_bytes()).unwrap(), data);
    }

    #[test]
    fn params_json_round_trips(seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let gd = random::gaussian_dims(&mut rng, 4);
        let g = random::gaussian_params(&mut rng, gd);
        prop_assert_eq!(GaussianParams::from_json_slice(g.to_json().as_bytes()).unwrap(), g);
        let ld = random::logistic_dims(&mut rng, 4);
        let l = random::logistic_params(&mut rng, ld);
        prop_assert_eq!(LogisticParams::from_json_slice(l.to_json().as_bytes()).unwrap(), l);
    }

    #[test]
    fn metrics_are_nonnegative_and_zero_at_truth(truth in prop::collection::vec(-100f64..100.0, 2..50), shift in -5f64..5.0) {
        prop_assume!(truth.iter().any(|v| *v != truth[0]));
        let exact = metrics(&truth, &truth, NrmseNorm::Range).unwrap();
        prop_assert_eq!(exact.mse, 0.0);
        let pred: Vec<f64> = truth.iter().map(|t| t + shift).collect();
        let m = metrics(&pred, &truth, NrmseNorm::Range).unwrap();
        prop_assert!((m.mse - shift * shift).abs() <= 1e-9 * shift.abs().max(1.0));
        prop_assert!(m.nrmse.unwrap() >= 0.0);
    }
}
