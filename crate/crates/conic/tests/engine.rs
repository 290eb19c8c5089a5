use nalgebra::{Complex, DMatrix, DVector};
use proptest::prelude::*;
use radcom_conic::{dump_text, CMatrix, ConicProblem, LinExpr, Route, Sense, SolveOptions, SolveStatus};

fn c(re: f64, im: f64) -> Complex<f64> {
    Complex::new(re, im)
}

fn both_routes() -> [SolveOptions; 2] {
    [Route::Direct, Route::Dual].map(|route| SolveOptions { route, ..Default::default() })
}

#[test]
fn lp_vertex() {
    // max x + 2y s.t. x + y ≤ 4, x ≤ 3, y ≤ 2, x, y ≥ 0
    let mut p = ConicProblem::new();
    let x = p.add_free();
    let y = p.add_free();
    p.set_objective(Sense::Maximize, LinExpr::var(x, 1.0).add_var(y, 2.0));
    p.add_le(LinExpr::var(x, 1.0).add_var(y, 1.0).add_const(-4.0));
    p.add_le(LinExpr::var(x, 1.0).add_const(-3.0));
    p.add_le(LinExpr::var(y, 1.0).add_const(-2.0));
    p.add_le(LinExpr::var(x, -1.0));
    p.add_le(LinExpr::var(y, -1.0));
    for o in both_routes() {
        let s = p.solve(&o).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.value(x) - 2.0).abs() < 1e-7 && (s.value(y) - 2.0).abs() < 1e-7, "{:?}", s.free);
        assert!((s.primal_objective - 6.0).abs() < 1e-7);
    }
}

#[test]
fn soc_projection() {
    // min t s.t. ‖(x − 3, y + 4)‖ ≤ t, x = 0: distance from (0, y) to (3, −4) is 3
    let mut p = ConicProblem::new();
    let (t, x, y) = (p.add_free(), p.add_free(), p.add_free());
    p.set_objective(Sense::Minimize, LinExpr::var(t, 1.0));
    p.add_soc(LinExpr::var(t, 1.0), vec![LinExpr::var(x, 1.0).add_const(-3.0), LinExpr::var(y, 1.0).add_const(4.0)]);
    p.add_eq(LinExpr::var(x, 1.0));
    for o in both_routes() {
        let s = p.solve(&o).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.value(t) - 3.0).abs() < 1e-7);
        assert!((s.value(y) + 4.0).abs() < 1e-6);
    }
}

#[test]
fn factored_quadratic_matches_closed_form() {
    // min x0 over the ellipse 4 x0² + x1²/4 ≤ 1
    let f = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
    let mut p = ConicProblem::new();
    let xs = p.add_free_vec(2);
    p.set_objective(Sense::Minimize, LinExpr::var(xs[0], 1.0));
    p.add_factored_quadratic_le(&xs, &f, LinExpr::constant(-1.0));
    let s = p.solve(&SolveOptions::default()).unwrap();
    assert_eq!(s.status, SolveStatus::Optimal);
    assert!((s.value(xs[0]) + 0.5).abs() < 1e-7, "{:?}", s.free);
}

#[test]
fn hermitian_block_with_complex_data() {
    // max Re tr(C W) s.t. tr W = 1 gives the largest eigenvalue of C
    let cm = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 2.0), c(0.0, -2.0), c(1.0, 0.0)]);
    let mut p = ConicProblem::new();
    let w = p.add_psd(2);
    p.set_objective(Sense::Maximize, LinExpr::new().add_trace(w, &cm, 1.0));
    p.add_eq(LinExpr::constant(-1.0).add_trace(w, &CMatrix::identity(2, 2), 1.0));
    for o in both_routes() {
        let s = p.solve(&o).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.primal_objective - 3.0).abs() < 1e-7, "{}", s.primal_objective);
        assert!(p.max_violation(&s) < 1e-7);
    }
}

#[test]
fn unbounded_and_infeasible_are_reported() {
    let mut p = ConicProblem::new();
    let x = p.add_free();
    p.set_objective(Sense::Minimize, LinExpr::var(x, 1.0));
    p.add_le(LinExpr::var(x, 1.0).add_const(-1.0));
    assert_eq!(p.solve(&SolveOptions::default()).unwrap().status, SolveStatus::Unbounded);

    let mut q = ConicProblem::new();
    let w = q.add_psd(2);
    q.set_objective(Sense::Minimize, LinExpr::new().add_trace(w, &CMatrix::identity(2, 2), 1.0));
    q.add_le(LinExpr::constant(1.0).add_trace(w, &CMatrix::identity(2, 2), 1.0));
    assert_eq!(q.solve(&SolveOptions::default()).unwrap().status, SolveStatus::InfeasibleCertificate);
}

#[test]
fn dump_lists_the_standard_form() {
    let mut p = ConicProblem::new();
    let w = p.add_psd(2);
    p.set_objective(Sense::Minimize, LinExpr::new().add_trace(w, &CMatrix::identity(2, 2), 1.0));
    p.add_le(LinExpr::constant(1.0).add_trace(w, &CMatrix::identity(2, 2), -1.0));
    let text = dump_text(&p.lower(Route::Direct).unwrap());
    assert!(text.starts_with("# conic standard form"));
    assert!(text.lines().count() > 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn trace_minimization_over_random_channels(re in prop::collection::vec(-3.0f64..3.0, 4), im in prop::collection::vec(-3.0f64..3.0, 4)) {
        let h = DVector::from_fn(4, |i, _| c(re[i], im[i]));
        prop_assume!(h.norm() > 1e-2);
        let mut p = ConicProblem::new();
        let w = p.add_psd(4);
        p.set_objective(Sense::Minimize, LinExpr::new().add_trace(w, &CMatrix::identity(4, 4), 1.0));
        p.add_le(LinExpr::constant(1.0).add_trace(w, &(&h * h.adjoint()), -1.0));
        let s = p.solve(&SolveOptions::default()).unwrap();
        prop_assert_eq!(s.status, SolveStatus::Optimal);
        let want = 1.0 / h.norm_squared();
        prop_assert!((s.primal_objective - want).abs() <= 1e-7 * want);
        prop_assert!(s.primal_objective >= s.dual_objective - 1e-9 * (1.0 + want));
    }
}
