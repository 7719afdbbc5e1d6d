use wandcal_lp::selftest;

#[test]
fn random_problems_match_vertex_enumeration() {
    let report = selftest::run(200, 7);
    println!("{report:?}");
    assert!(report.infeasible > 10, "generator should produce infeasible cases");
    assert!(report.passed(1e-8, 1e-7), "{report:?}");
}

#[test]
fn other_seeds_match_vertex_enumeration() {
    for seed in 100..105 {
        let report = selftest::run(200, seed);
        assert!(report.passed(1e-8, 1e-7), "seed {seed}: {report:?}");
    }
}
