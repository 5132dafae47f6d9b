#![allow(dead_code)]

use std::path::PathBuf;

use gridform::grid::{load_case, NetworkCase};
use gridform::TransformedGraph;

pub fn case_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("cases").join(name)
}

pub fn shipped(name: &str) -> TransformedGraph {
    let text = std::fs::read_to_string(case_path(name)).unwrap();
    TransformedGraph::new(load_case(&text).unwrap())
}

/// Endpoints of every line as bus indices, from raw case data.
fn ends(case: &NetworkCase) -> Vec<(usize, usize)> {
    case.lines
        .iter()
        .map(|l| {
            (
                case.bus_index(l.from_bus).unwrap(),
                case.bus_index(l.to_bus).unwrap(),
            )
        })
        .collect()
}

/// Whether fixed lines, DG ties to a virtual node, and the switches closed in
/// `mask` form a spanning tree, by edge count plus breadth-first reachability.
pub fn spans_by_search(case: &NetworkCase, mask: u64) -> bool {
    let n = case.buses.len();
    let root = n;
    let mut adj = vec![Vec::new(); n + 1];
    let mut edges = 0;
    let mut sw = 0;
    for (l, (a, b)) in case.lines.iter().zip(ends(case)) {
        let on = if l.switchable {
            let bit = mask >> sw & 1 == 1;
            sw += 1;
            bit
        } else {
            true
        };
        if on {
            adj[a].push(b);
            adj[b].push(a);
            edges += 1;
        }
    }
    for dg in &case.dgs {
        let b = case.bus_index(dg.bus).unwrap();
        adj[b].push(root);
        adj[root].push(b);
        edges += 1;
    }
    if edges != n {
        return false;
    }
    let mut seen = vec![false; n + 1];
    let mut stack = vec![root];
    seen[root] = true;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.iter().all(|&s| s)
}

/// Determinant of an integer matrix by fraction-free elimination.
pub fn bareiss_det(mut m: Vec<Vec<i128>>) -> i128 {
    let n = m.len();
    if n == 0 {
        return 1;
    }
    let mut sign = 1;
    let mut prev = 1i128;
    for k in 0..n - 1 {
        if m[k][k] == 0 {
            match (k + 1..n).find(|&r| m[r][k] != 0) {
                Some(r) => {
                    m.swap(k, r);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) / prev;
            }
        }
        prev = m[k][k];
    }
    sign * m[n - 1][n - 1]
}

/// Spanning trees of the augmented graph that contain every fixed and
/// virtual edge: contract those edges, then apply Kirchhoff's theorem to the
/// switch multigraph on the contracted nodes.
pub fn matrix_tree_count(case: &NetworkCase) -> u128 {
    let n = case.buses.len();
    let mut parent: Vec<usize> = (0..=n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    let mut forced: Vec<(usize, usize)> = case
        .lines
        .iter()
        .zip(ends(case))
        .filter(|(l, _)| !l.switchable)
        .map(|(_, e)| e)
        .collect();
    forced.extend(case.dgs.iter().map(|d| (case.bus_index(d.bus).unwrap(), n)));
    for (a, b) in forced {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra == rb {
            return 0;
        }
        parent[ra] = rb;
    }
    let mut label = vec![usize::MAX; n + 1];
    let mut count = 0;
    for v in 0..=n {
        let r = find(&mut parent, v);
        if label[r] == usize::MAX {
            label[r] = count;
            count += 1;
        }
    }
    let mut lap = vec![vec![0i128; count]; count];
    for (l, (a, b)) in case.lines.iter().zip(ends(case)) {
        if !l.switchable {
            continue;
        }
        let (x, y) = (label[find(&mut parent, a)], label[find(&mut parent, b)]);
        if x == y {
            continue;
        }
        lap[x][x] += 1;
        lap[y][y] += 1;
        lap[x][y] -= 1;
        lap[y][x] -= 1;
    }
    let minor: Vec<Vec<i128>> = lap[1..].iter().map(|row| row[1..].to_vec()).collect();
    bareiss_det(minor) as u128
}

/// A case document with every line switchable unless listed in `fixed`.
pub fn case_json(
    buses: &[(u32, &str)],
    lines: &[(u32, u32, u32, f64, f64, bool, bool)],
    dgs: &[(u32, f64, f64)],
    loads: &[(u32, f64, f64, u32)],
    horizon: usize,
) -> String {
    let buses: Vec<_> = buses
        .iter()
        .map(|(id, kind)| serde_json::json!({"id": id, "kind": kind}))
        .collect();
    let lines: Vec<_> = lines
        .iter()
        .map(|&(id, f, t, r, x, sw, closed)| {
            serde_json::json!({"id": id, "from_bus": f, "to_bus": t, "r": r, "x": x,
                "flow_limit": 10.0, "switchable": sw, "closed": closed})
        })
        .collect();
    let dgs: Vec<_> = dgs
        .iter()
        .map(|&(bus, p, q)| {
            serde_json::json!({"bus": bus, "p_max": p * 1.5, "q_max": q * 1.5,
                "p_expected": vec![p; horizon], "q_expected": vec![q; horizon]})
        })
        .collect();
    let loads: Vec<_> = loads
        .iter()
        .map(|&(bus, p, q, pr)| serde_json::json!({"bus": bus, "p": p, "q": q, "priority": pr}))
        .collect();
    serde_json::json!({
        "schema": "gridform-case-v1", "name": "toy", "power_unit": "pu",
        "s_base_mva": 1.0, "horizon_steps": horizon, "step_minutes": 10.0,
        "buses": buses, "lines": lines, "dgs": dgs, "loads": loads
    })
    .to_string()
}

/// Load bus 3 fed from one of two DG buses through one of two switches.
///
/// DG 1 is small, DG 2 large; `k = 1`.
pub fn two_switch_toy(horizon: usize) -> TransformedGraph {
    let text = case_json(
        &[(1, "dg"), (2, "dg"), (3, "plain")],
        &[
            (1, 1, 3, 0.01, 0.02, true, true),
            (2, 2, 3, 0.01, 0.02, true, false),
        ],
        &[(1, 0.2, 0.1), (2, 1.0, 0.5)],
        &[(3, 0.5, 0.2, 0)],
        horizon,
    );
    TransformedGraph::new(load_case(&text).unwrap())
}
