mod common;

use common::{case_json, case_path};
use gridform::grid::{load_case, validate};
use gridform::Error;
use proptest::prelude::*;

#[test]
fn shipped_cases_validate() {
    for name in ["7bus.json", "123bus.json"] {
        let text = std::fs::read_to_string(case_path(name)).unwrap();
        let case = load_case(&text).unwrap();
        assert!(validate(&case).is_empty(), "{name}");
        assert!(case.s_base_mva > 0.0);
    }
}

#[test]
fn seven_bus_is_stored_in_megawatts() {
    let text = std::fs::read_to_string(case_path("7bus.json")).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(doc["power_unit"], "mw");
    let case = load_case(&text).unwrap();
    // 89 MW of load on a 10 MVA base.
    assert!((case.total_load_p() - 8.9).abs() < 1e-12);
}

#[test]
fn broken_references_are_reported() {
    let text = case_json(
        &[(1, "dg"), (2, "plain")],
        &[(1, 1, 9, 0.01, 0.01, true, true)],
        &[(1, 1.0, 0.5)],
        &[(2, 0.5, 0.2, 0)],
        2,
    );
    match load_case(&text) {
        Err(Error::InvalidCase(v)) => assert!(!v.is_empty()),
        other => panic!("{other:?}"),
    }
    let wrong_schema = text.replace("gridform-case-v1", "gridform-case-v0");
    assert!(matches!(load_case(&wrong_schema), Err(Error::Schema { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn case_json_round_trips(
        r in prop::collection::vec(1e-4f64..0.1, 3),
        loads in prop::collection::vec((0.0f64..2.0, 0.0f64..1.0, 0u32..3), 2),
        horizon in 1usize..6,
    ) {
        let text = case_json(
            &[(1, "dg"), (2, "plain"), (3, "plain")],
            &[
                (1, 1, 2, r[0], 2.0 * r[0], false, true),
                (2, 2, 3, r[1], 2.0 * r[1], true, true),
                (3, 1, 3, r[2], 2.0 * r[2], true, false),
            ],
            &[(1, 2.0, 1.0)],
            &[(2, loads[0].0, loads[0].1, loads[0].2), (3, loads[1].0, loads[1].1, loads[1].2)],
            horizon,
        );
        let case = load_case(&text).unwrap();
        let again = load_case(&case.to_json()).unwrap();
        prop_assert_eq!(case, again);
    }
}
