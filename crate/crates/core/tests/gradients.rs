use mmoe_testkit::checks;

#[test]
fn gaussian_gradient_matches_finite_differences() {
    let rep = checks::gaussian_gradients(100, 31);
    assert!(rep.max_relative_error < 1e-5, "{rep:?}");
}

#[test]
fn logistic_gradient_matches_finite_differences() {
    let rep = checks::logistic_gradients(100, 32);
    assert!(rep.max_relative_error < 1e-5, "{rep:?}");
}
