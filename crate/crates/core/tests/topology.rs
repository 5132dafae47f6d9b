mod common;

use common::{matrix_tree_count, shipped, spans_by_search};
use gridform::grid::load_case;
use gridform::{SwitchConfig, TransformedGraph};
use proptest::prelude::*;

#[test]
fn seven_bus_shape() {
    let tg = shipped("7bus.json");
    assert_eq!(tg.case().bus_count(), 7);
    assert_eq!(tg.case().dg_count(), 2);
    assert_eq!(tg.switch_count(), 8);
    assert_eq!(tg.node_count(), 8);
    assert_eq!(tg.edge_count(), 10);
    assert_eq!(tg.required_closed_count().unwrap(), 5);
}

#[test]
fn feeder_123_shape() {
    let tg = shipped("123bus.json");
    assert_eq!(tg.case().bus_count(), 124);
    assert_eq!(tg.case().line_count(), 125);
    assert_eq!(tg.case().dg_count(), 11);
    assert_eq!(tg.switch_count(), 13);
    assert_eq!(tg.node_count(), 125);
    assert_eq!(tg.edge_count(), 136);
    // (124 + 1) - 1 - 112 fixed - 11 DGs
    assert_eq!(tg.required_closed_count().unwrap(), 1);
}

#[test]
fn seven_bus_enumeration_matches_search_oracle() {
    let tg = shipped("7bus.json");
    let e = tg.enumerate_feasible().unwrap();
    assert_eq!(e.tested, 256);
    let by_search: Vec<SwitchConfig> = (0..256u64)
        .filter(|&m| spans_by_search(tg.case(), m))
        .map(|m| SwitchConfig::from_mask(m, 8))
        .collect();
    let mut got = e.feasible.clone();
    got.sort();
    let mut want = by_search;
    want.sort();
    assert_eq!(got, want);
    assert_eq!(e.count() as u128, matrix_tree_count(tg.case()));
    assert!(e.count() <= 56);
    assert!(e.feasible.iter().all(|c| c.closed_count() == 5));
}

#[test]
fn feeder_123_enumeration_matches_oracles() {
    let tg = shipped("123bus.json");
    let e = tg.enumerate_feasible().unwrap();
    assert_eq!(e.tested, 8192);
    let by_search = (0..8192u64).filter(|&m| spans_by_search(tg.case(), m)).count();
    assert_eq!(e.count(), by_search);
    assert_eq!(e.count() as u128, matrix_tree_count(tg.case()));
    for cfg in &e.feasible {
        assert_eq!(tg.islands(cfg).unwrap().islands.len(), 11);
    }
}

#[test]
fn every_feasible_config_forms_one_island_per_dg() {
    let tg = shipped("7bus.json");
    let n = tg.case().bus_count();
    for cfg in tg.enumerate_feasible().unwrap().feasible {
        let set = tg.islands(&cfg).unwrap();
        assert_eq!(set.islands.len(), 2);
        let mut covered: Vec<usize> = set.islands.iter().flat_map(|i| i.buses.clone()).collect();
        covered.sort();
        assert_eq!(covered, (0..n).collect::<Vec<_>>());
        for island in &set.islands {
            let dgs = island
                .buses
                .iter()
                .filter(|&&b| tg.dg_at_bus(b).is_some())
                .count();
            assert_eq!(dgs, 1);
            assert_eq!(island.lines.len() + 1, island.buses.len());
        }
    }
}

#[test]
fn matrix_tree_oracle_on_small_graphs() {
    // Complete graph K4 through a single DG: Cayley gives 4^2 = 16 trees.
    let lines: Vec<_> = [(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)]
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| (i as u32 + 1, a, b, 0.01, 0.01, true, i < 3))
        .collect();
    let text = common::case_json(
        &[(1, "dg"), (2, "plain"), (3, "plain"), (4, "plain")],
        &lines,
        &[(1, 1.0, 0.5)],
        &[],
        1,
    );
    let tg = TransformedGraph::new(load_case(&text).unwrap());
    assert_eq!(matrix_tree_count(tg.case()), 16);
    assert_eq!(tg.enumerate_feasible().unwrap().count(), 16);
}

/// Rewrites the 7-bus case with its lines listed in another order.
fn permuted(perm: &[usize]) -> TransformedGraph {
    let tg = shipped("7bus.json");
    let mut case = tg.case().clone();
    case.lines = perm.iter().map(|&i| tg.case().lines[i].clone()).collect();
    TransformedGraph::new(case)
}

proptest! {
    #[test]
    fn feasibility_is_invariant_under_switch_relabeling(
        perm in Just((0..8usize).collect::<Vec<_>>()).prop_shuffle(),
        mask in 0u64..256,
    ) {
        let base = shipped("7bus.json");
        let relabeled = permuted(&perm);
        // Switch j of the relabeled case is line perm[j] of the original.
        let moved = SwitchConfig::from_closed(8, (0..8).filter(|&j| mask >> perm[j] & 1 == 1));
        prop_assert_eq!(
            base.is_feasible(&SwitchConfig::from_mask(mask, 8)),
            relabeled.is_feasible(&moved)
        );
    }
}
