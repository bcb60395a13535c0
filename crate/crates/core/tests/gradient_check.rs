#[path = "support/gradcheck.rs"]
mod gradcheck;

#[test]
fn backward_matches_central_differences() {
    let worst = gradcheck::max_relative_error(20, 1e-6);
    assert!(worst < 1e-6, "max relative error {worst:e}");
}
