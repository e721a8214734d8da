mod common;

use proptest::prelude::*;
use tropmorph::lp::{lp_solve, LinearProgram, LpError, Relation};

#[test]
fn simplex_matches_vertex_enumeration() {
    for seed in 0..200 {
        let p = common::random_lp(seed);
        let sol = lp_solve(&p.lp, 1e-9).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        let oracle = common::vertex_enumeration(&p);
        assert!(
            (sol.objective - oracle).abs() <= 1e-6,
            "seed {seed}: simplex {} vs oracle {oracle}",
            sol.objective
        );
        assert!(p.lp.max_violation(&sol.x) <= 1e-7, "seed {seed}: infeasible point");
        assert!((p.lp.objective_at(&sol.x) - sol.objective).abs() <= 1e-9);
    }
}

#[test]
fn detects_infeasible_and_unbounded() {
    let mut lp = LinearProgram::new(1);
    lp.add_dense_constraint(&[1.0], Relation::Le, 1.0);
    lp.add_dense_constraint(&[1.0], Relation::Ge, 2.0);
    assert_eq!(lp_solve(&lp, 1e-9).unwrap_err(), LpError::Infeasible);

    let mut lp = LinearProgram::new(2);
    lp.set_cost(0, -1.0);
    lp.add_dense_constraint(&[1.0, -1.0], Relation::Le, 1.0);
    assert_eq!(lp_solve(&lp, 1e-9).unwrap_err(), LpError::Unbounded);
}

#[test]
fn free_variables_take_negative_values() {
    // min |x - (-3)| written with an epigraph variable t.
    let mut lp = LinearProgram::new(2);
    lp.set_free(0);
    lp.set_cost(1, 1.0);
    lp.add_dense_constraint(&[1.0, -1.0], Relation::Le, -3.0);
    lp.add_dense_constraint(&[-1.0, -1.0], Relation::Le, 3.0);
    let sol = lp_solve(&lp, 1e-9).unwrap();
    assert!(sol.objective.abs() < 1e-9);
    assert!((sol.x[0] + 3.0).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn objective_scales_with_costs(seed in 0u64..10_000, k in 0.1f64..10.0) {
        let p = common::random_lp(seed);
        let base = lp_solve(&p.lp, 1e-9).unwrap().objective;
        let mut scaled = p.lp.clone();
        for (j, c) in p.costs.iter().enumerate() {
            scaled.set_cost(j, k * c);
        }
        let v = lp_solve(&scaled, 1e-9).unwrap().objective;
        prop_assert!((v - k * base).abs() <= 1e-6 * (1.0 + v.abs()));
    }

    #[test]
    fn row_slack_at_the_optimum_keeps_the_value(seed in 0u64..10_000) {
        let p = common::random_lp(seed);
        let base = lp_solve(&p.lp, 1e-9).unwrap();
        let mut tighter = p.lp.clone();
        // The old optimum stays feasible and a restriction cannot improve
        // on it, so the value is unchanged.
        let a: Vec<f64> = (0..p.costs.len()).map(|j| if j % 2 == 0 { 1.0 } else { -0.5 }).collect();
        let ax: f64 = a.iter().zip(&base.x).map(|(a, x)| a * x).sum();
        tighter.add_dense_constraint(&a, Relation::Le, ax + 1e-3);
        let v = lp_solve(&tighter, 1e-9).unwrap().objective;
        prop_assert!((v - base.objective).abs() <= 1e-6);
    }
}
