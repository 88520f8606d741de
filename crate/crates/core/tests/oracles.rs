//! Oracle checks that run in seconds: shape functions, closed-form
//! energies, finite differences, distance bounds, FEM patch tests, early
//! stopping and file formats.

mod checks;

fn pass(outcome: checks::Outcome) {
    match outcome {
        Ok(summary) => eprintln!("{summary}"),
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn shape_functions_and_quadrature() {
    pass(checks::shape_suite());
}

#[test]
fn expressions_match_invariant_closed_forms() {
    pass(checks::expressions_vs_closed_form(1000));
}

#[test]
fn gradients_match_central_differences() {
    pass(checks::gradient_integrity());
}

#[test]
fn smooth_distance_is_sandwiched() {
    pass(checks::smooth_distance_sandwich(10_000));
}

#[test]
fn fem_patch_tests_and_convergence() {
    pass(checks::fem_oracle());
}

#[test]
fn early_stopping_sequences() {
    pass(checks::early_stopping(100));
}

#[test]
fn mesh_vtk_and_config_formats() {
    pass(checks::formats());
}
