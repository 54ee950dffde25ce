use mmoe::datagen::{lowdim_truth, sample_gaussian, CovariateLaw};
use mmoe::gaussian::{GaussianDims, GaussianFamily, StatBlocks};
use mmoe::init::{kmeans_init, perturbed_truth_init, warmup_s0, GateInit};
use mmoe::linalg::{self, DEFAULT_EPSILON_STAR};
use mmoe::mm::SurrogateFamily;
use mmoe::Sample;

#[test]
fn lowdim_warmup_gate_curvature_is_positive_definite() {
    let truth = lowdim_truth();
    let family = GaussianFamily::new(truth.dims, DEFAULT_EPSILON_STAR).unwrap();
    let data = sample_gaussian(&truth, 2000, 3, CovariateLaw::Uniform).unwrap();
    let init = perturbed_truth_init(&truth, 0.005, 3).unwrap();
    let s0 = warmup_s0(&family, &init, &data.samples[..85]).unwrap();
    let blocks = StatBlocks::split(truth.dims, &s0).unwrap();
    // s2 stores half of the averaged bound
    let m2 = linalg::mat_square(blocks.s2).unwrap() * 2.0;
    assert!(linalg::min_eigenvalue(&m2) >= DEFAULT_EPSILON_STAR * (1.0 - 1e-9));
    family.check_admissible(&s0).unwrap();
}

#[test]
fn single_and_duplicated_batches() {
    let truth = lowdim_truth();
    let family = GaussianFamily::new(truth.dims, DEFAULT_EPSILON_STAR).unwrap();
    let z = Sample::continuous(vec![0.4, -0.2], vec![1.3]);
    let single = warmup_s0(&family, &truth, std::slice::from_ref(&z)).unwrap();
    assert_eq!(single, family.suff_stat(&truth, &z).unwrap());
    let dup = warmup_s0(&family, &truth, &[z.clone(), z.clone(), z]).unwrap();
    for (a, b) in dup.iter().zip(&single) {
        assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
    }
    assert!(warmup_s0(&family, &truth, &[]).is_err());
}

#[test]
fn single_cluster_variance_is_least_squares_residual() {
    let dims = GaussianDims::new(1, 1, 1, 0, 1).unwrap();
    let xs = [-1.0, -0.5, 0.0, 0.5, 1.0, 1.5];
    let ys = [0.1, 0.8, 1.2, 2.1, 2.9, 3.2];
    let batch: Vec<Sample> = xs.iter().zip(&ys).map(|(&x, &y)| Sample::continuous(vec![x], vec![y])).collect();
    let theta = kmeans_init(&batch, dims, 3, 0, GateInit::Zero, DEFAULT_EPSILON_STAR).unwrap();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let icept = my - slope * mx;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - icept - slope * x).powi(2)).sum();
    assert!((theta.upsilon[0] - icept).abs() < 1e-12);
    assert!((theta.upsilon[1] - slope).abs() < 1e-12);
    assert!((theta.sigma2[0] - rss / n).abs() < 1e-12);
    assert_eq!(theta, kmeans_init(&batch, dims, 3, 0, GateInit::Zero, DEFAULT_EPSILON_STAR).unwrap());
}
