use mmoe_testkit::checks;

#[test]
fn gaussian_surrogate_majorizes_nll() {
    let rep = checks::gaussian_majorization(10_000, 11);
    assert!(rep.min_gap >= -1e-9, "{rep:?}");
    assert!(rep.max_tangent_gap <= 1e-9, "{rep:?}");
    assert!(rep.max_loss_mismatch <= 1e-10, "{rep:?}");
}

#[test]
fn logistic_surrogate_majorizes_nll() {
    let rep = checks::logistic_majorization(10_000, 12);
    assert!(rep.min_gap >= -1e-9, "{rep:?}");
    assert!(rep.max_tangent_gap <= 1e-9, "{rep:?}");
    assert!(rep.max_loss_mismatch <= 1e-10, "{rep:?}");
}
