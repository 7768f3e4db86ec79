mod common;

#[test]
fn plane_distance_metric() {
    common::plane_distance_is_a_metric().unwrap();
}

#[test]
fn density_dilation_invariance() {
    common::density_ratio_is_dilation_invariant().unwrap();
}

#[test]
fn excess_monotone_in_radius() {
    common::excess_is_monotone_in_radius().unwrap();
}

#[test]
fn bracket_order_and_monotonicity() {
    common::brackets_are_ordered_and_monotone().unwrap();
}

#[test]
fn excess_sets_nested() {
    common::excess_sets_are_nested().unwrap();
}

#[test]
fn first_variation_residual() {
    common::first_variation_residual_decays().unwrap();
}

#[test]
fn profile_gradients() {
    common::profile_gradients_match_differences().unwrap();
}

#[test]
fn determinism() {
    common::runs_are_deterministic().unwrap();
}
