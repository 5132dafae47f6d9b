//! Virtual-node transformation, radial-feasibility checks, island extraction,
//! and the exhaustive feasible-configuration enumerator.
//!
//! Tying every DG bus to one synthetic node turns "a forest of radial islands,
//! each fed by exactly one DG" into "a spanning tree of the augmented graph".
//! A switch configuration is feasible iff the energized edges (fixed lines,
//! virtual edges, closed switches) form such a spanning tree.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::NetworkCase;

/// Largest switch count accepted by [`TransformedGraph::enumerate_feasible`].
pub const ENUMERATION_LIMIT: usize = 24;

/// Open/closed status of every remotely controlled switch, in case line order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SwitchConfig {
    alpha: Vec<bool>,
}

impl SwitchConfig {
    pub fn new(alpha: Vec<bool>) -> Self {
        Self { alpha }
    }

    pub fn all_open(w: usize) -> Self {
        Self {
            alpha: vec![false; w],
        }
    }

    pub fn all_closed(w: usize) -> Self {
        Self { alpha: vec![true; w] }
    }

    /// Switches whose bit is set in `mask` are closed.
    pub fn from_mask(mask: u64, w: usize) -> Self {
        Self {
            alpha: (0..w).map(|j| mask >> j & 1 == 1).collect(),
        }
    }

    pub fn from_closed(w: usize, closed: impl IntoIterator<Item = usize>) -> Self {
        let mut alpha = vec![false; w];
        for j in closed {
            alpha[j] = true;
        }
        Self { alpha }
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn is_closed(&self, j: usize) -> bool {
        self.alpha[j]
    }

    pub fn bits(&self) -> &[bool] {
        &self.alpha
    }

    pub fn closed_count(&self) -> usize {
        self.alpha.iter().filter(|&&a| a).count()
    }

    pub fn closed_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.alpha.iter().enumerate().filter_map(|(j, &a)| a.then_some(j))
    }

    /// Per-switch `|alpha_new - alpha_old|`.
    pub fn operations_from(&self, previous: &SwitchConfig) -> Vec<u32> {
        self.alpha
            .iter()
            .zip(&previous.alpha)
            .map(|(a, b)| u32::from(a != b))
            .collect()
    }
}

impl fmt::Display for SwitchConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &a in &self.alpha {
            f.write_str(if a { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl std::str::FromStr for SwitchConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::SwitchString(s.to_string())),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub(crate) struct DisjointSets {
    parent: Vec<usize>,
    size: Vec<usize>,
    components: usize,
}

impl DisjointSets {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
            components: n,
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false if `a` and `b` were already joined.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        self.components -= 1;
        true
    }

    pub(crate) fn components(&self) -> usize {
        self.components
    }
}

/// The case augmented with one virtual node tied to every DG bus.
#[derive(Debug, Clone)]
pub struct TransformedGraph {
    base: NetworkCase,
    /// Bus-index endpoints of each line, in case order.
    line_ends: Vec<(usize, usize)>,
    /// Line indices of non-switchable lines.
    fixed_edges: Vec<usize>,
    /// Line index of each switch; switch `j` is `lines[switch_edges[j]]`.
    switch_edges: Vec<usize>,
    /// `Some(j)` if line `i` is switch `j`.
    switch_of_line: Vec<Option<usize>>,
    /// Bus index of each DG unit; one virtual edge per entry.
    dg_buses: Vec<usize>,
    /// Bus index of each load.
    load_buses: Vec<usize>,
    /// DG unit index per bus, if any.
    dg_at_bus: Vec<Option<usize>>,
}

/// One radial microgrid of a feasible configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Island {
    /// Index into the case's DG list.
    pub dg: usize,
    /// Bus index of that DG.
    pub dg_bus: usize,
    /// Member bus indices, ascending.
    pub buses: Vec<usize>,
    /// Closed line indices inside the island, ascending.
    pub lines: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IslandSet {
    /// Ordered by DG index.
    pub islands: Vec<Island>,
}

#[derive(Debug, Clone)]
pub struct Enumeration {
    /// Number of configurations tested (`2^w`).
    pub tested: u64,
    pub feasible: Vec<SwitchConfig>,
}

impl Enumeration {
    pub fn count(&self) -> usize {
        self.feasible.len()
    }
}

impl TransformedGraph {
    /// Builds the augmented graph. The case is assumed to be valid.
    pub fn new(case: NetworkCase) -> Self {
        let index = |id: u32| {
            case.bus_index(id)
                .unwrap_or_else(|| panic!("line endpoint {id} is not a bus; validate the case first"))
        };
        let line_ends: Vec<_> = case
            .lines
            .iter()
            .map(|l| (index(l.from_bus), index(l.to_bus)))
            .collect();
        let mut fixed_edges = Vec::new();
        let mut switch_edges = Vec::new();
        let mut switch_of_line = vec![None; case.lines.len()];
        for (i, line) in case.lines.iter().enumerate() {
            if line.switchable {
                switch_of_line[i] = Some(switch_edges.len());
                switch_edges.push(i);
            } else {
                fixed_edges.push(i);
            }
        }
        let dg_buses: Vec<_> = case.dgs.iter().map(|d| index(d.bus)).collect();
        let load_buses = case.loads.iter().map(|l| index(l.bus)).collect();
        let mut dg_at_bus = vec![None; case.buses.len()];
        for (g, &b) in dg_buses.iter().enumerate() {
            dg_at_bus[b] = Some(g);
        }
        Self {
            base: case,
            line_ends,
            fixed_edges,
            switch_edges,
            switch_of_line,
            dg_buses,
            load_buses,
            dg_at_bus,
        }
    }

    pub fn case(&self) -> &NetworkCase {
        &self.base
    }

    /// Index of the synthetic node (one past the last bus).
    pub fn virtual_node(&self) -> usize {
        self.base.buses.len()
    }

    pub fn node_count(&self) -> usize {
        self.base.buses.len() + 1
    }

    pub fn edge_count(&self) -> usize {
        self.base.lines.len() + self.dg_buses.len()
    }

    /// `(virtual node, dg bus)` pairs.
    pub fn virtual_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let v = self.virtual_node();
        self.dg_buses.iter().map(move |&b| (v, b))
    }

    pub fn fixed_edges(&self) -> &[usize] {
        &self.fixed_edges
    }

    pub fn switch_edges(&self) -> &[usize] {
        &self.switch_edges
    }

    pub fn switch_count(&self) -> usize {
        self.switch_edges.len()
    }

    pub fn switch_of_line(&self, line: usize) -> Option<usize> {
        self.switch_of_line[line]
    }

    pub fn line_ends(&self, line: usize) -> (usize, usize) {
        self.line_ends[line]
    }

    pub fn dg_buses(&self) -> &[usize] {
        &self.dg_buses
    }

    pub fn load_buses(&self) -> &[usize] {
        &self.load_buses
    }

    pub fn dg_at_bus(&self, bus: usize) -> Option<usize> {
        self.dg_at_bus[bus]
    }

    /// Whether line `i` is energized under `cfg`.
    pub fn line_closed(&self, line: usize, cfg: &SwitchConfig) -> bool {
        match self.switch_of_line[line] {
            Some(j) => cfg.is_closed(j),
            None => true,
        }
    }

    /// The configuration stored in the case file.
    pub fn initial_config(&self) -> SwitchConfig {
        SwitchConfig::new(
            self.switch_edges
                .iter()
                .map(|&i| self.base.lines[i].closed)
                .collect(),
        )
    }

    /// Number of switches a spanning tree of the augmented graph must close.
    pub fn required_closed_count(&self) -> Result<usize> {
        let k = self.node_count() as i64 - 1 - self.fixed_edges.len() as i64 - self.dg_buses.len() as i64;
        if k < 0 || k > self.switch_count() as i64 {
            return Err(Error::NoSpanningTree {
                required: k,
                switches: self.switch_count(),
            });
        }
        Ok(k as usize)
    }

    fn check_len(&self, cfg: &SwitchConfig) -> Result<()> {
        if cfg.len() != self.switch_count() {
            return Err(Error::ConfigLength {
                expected: self.switch_count(),
                found: cfg.len(),
            });
        }
        Ok(())
    }

    /// True iff `cfg` closes exactly the required number of switches and the
    /// energized augmented graph connects every node.
    pub fn is_feasible(&self, cfg: &SwitchConfig) -> bool {
        if cfg.len() != self.switch_count() {
            return false;
        }
        match self.required_closed_count() {
            Ok(k) if cfg.closed_count() == k => {}
            _ => return false,
        }
        let mut sets = DisjointSets::new(self.node_count());
        let mut merges = 0usize;
        let mut energized = 0usize;
        let edges = self
            .fixed_edges
            .iter()
            .map(|&i| self.line_ends[i])
            .chain(self.virtual_edges())
            .chain(cfg.closed_indices().map(|j| self.line_ends[self.switch_edges[j]]));
        for (a, b) in edges {
            energized += 1;
            merges += usize::from(sets.union(a, b));
        }
        let connected = sets.components() == 1;
        if connected {
            debug_assert_eq!(merges, energized, "spanning edge set must be acyclic");
        }
        connected
    }

    /// Splits a feasible configuration into its microgrids.
    pub fn islands(&self, cfg: &SwitchConfig) -> Result<IslandSet> {
        self.check_len(cfg)?;
        if !self.is_feasible(cfg) {
            return Err(Error::InfeasibleConfiguration);
        }
        let n = self.base.buses.len();
        let mut sets = DisjointSets::new(n);
        let closed: Vec<usize> = (0..self.base.lines.len())
            .filter(|&i| self.line_closed(i, cfg))
            .collect();
        for &i in &closed {
            let (a, b) = self.line_ends[i];
            sets.union(a, b);
        }
        let mut island_of_root = vec![usize::MAX; n];
        let mut islands: Vec<Island> = self
            .dg_buses
            .iter()
            .enumerate()
            .map(|(g, &b)| {
                island_of_root[sets.find(b)] = g;
                Island {
                    dg: g,
                    dg_bus: b,
                    buses: Vec::new(),
                    lines: Vec::new(),
                }
            })
            .collect();
        for bus in 0..n {
            let g = island_of_root[sets.find(bus)];
            debug_assert!(g != usize::MAX, "feasible configuration energizes every bus");
            islands[g].buses.push(bus);
        }
        for i in closed {
            let g = island_of_root[sets.find(self.line_ends[i].0)];
            islands[g].lines.push(i);
        }
        Ok(IslandSet { islands })
    }

    /// Tests all `2^w` configurations and returns the feasible ones in mask order.
    pub fn enumerate_feasible(&self) -> Result<Enumeration> {
        let w = self.switch_count();
        if w > ENUMERATION_LIMIT {
            return Err(Error::TooManySwitches {
                switches: w,
                limit: ENUMERATION_LIMIT,
            });
        }
        let tested = 1u64 << w;
        let k = match self.required_closed_count() {
            Ok(k) => k,
            Err(_) => {
                return Ok(Enumeration {
                    tested,
                    feasible: Vec::new(),
                })
            }
        };
        let feasible = (0..tested)
            .into_par_iter()
            .filter(|mask| mask.count_ones() as usize == k)
            .map(|mask| SwitchConfig::from_mask(mask, w))
            .filter(|cfg| self.is_feasible(cfg))
            .collect();
        Ok(Enumeration { tested, feasible })
    }

    /// Writes one row per configuration, one 0/1 column per switch (headed by line id).
    pub fn write_configs_csv<W: Write>(&self, out: W, configs: &[SwitchConfig]) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(
            self.switch_edges
                .iter()
                .map(|&i| format!("line_{}", self.base.lines[i].id)),
        )?;
        for cfg in configs {
            writer.write_record(cfg.bits().iter().map(|&a| if a { "1" } else { "0" }))?;
        }
        writer.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Bus, BusKind, DgUnit, Line, Load};

    fn line(id: u32, a: u32, b: u32, switchable: bool) -> Line {
        Line {
            id,
            from_bus: a,
            to_bus: b,
            r: 0.01,
            x: 0.02,
            flow_limit: 10.0,
            switchable,
            closed: true,
        }
    }

    fn case(buses: &[(u32, BusKind)], lines: Vec<Line>) -> NetworkCase {
        NetworkCase {
            name: "t".into(),
            s_base_mva: 1.0,
            horizon_steps: 1,
            step_minutes: 10.0,
            buses: buses
                .iter()
                .map(|&(id, kind)| Bus {
                    id,
                    kind,
                    base_voltage: 1.0,
                })
                .collect(),
            lines,
            dgs: buses
                .iter()
                .filter(|(_, k)| *k == BusKind::Dg)
                .map(|&(bus, _)| DgUnit {
                    bus,
                    p_max: 1.0,
                    q_max: 1.0,
                    p_expected: vec![0.5],
                    q_expected: vec![0.1],
                })
                .collect(),
            loads: vec![Load {
                bus: buses[0].0,
                p: 0.1,
                q: 0.0,
                priority: 0,
            }],
        }
    }

    /// Four-bus ring with one DG; every line switchable.
    fn ring() -> TransformedGraph {
        use BusKind::*;
        TransformedGraph::new(case(
            &[(1, Dg), (2, Plain), (3, Plain), (4, Plain)],
            vec![
                line(1, 1, 2, true),
                line(2, 2, 3, true),
                line(3, 3, 4, true),
                line(4, 4, 1, true),
            ],
        ))
    }

    #[test]
    fn single_dg_adds_one_pendant_edge() {
        let tg = ring();
        assert_eq!(tg.node_count(), 5);
        assert_eq!(tg.edge_count(), 5);
        assert_eq!(tg.virtual_edges().collect::<Vec<_>>(), vec![(4, 0)]);
        assert_eq!(tg.required_closed_count().unwrap(), 3);
    }

    #[test]
    fn all_open_is_infeasible() {
        let tg = ring();
        assert!(!tg.is_feasible(&SwitchConfig::all_open(4)));
    }

    #[test]
    fn ring_cycle_is_infeasible_and_paths_are_feasible() {
        // 2 DGs on the ring: buses 1 and 3; k = 4 - 2 = 2.
        use BusKind::*;
        let tg = TransformedGraph::new(case(
            &[(1, Dg), (2, Plain), (3, Dg), (4, Plain)],
            vec![
                line(1, 1, 2, true),
                line(2, 2, 3, true),
                line(3, 3, 4, true),
                line(4, 4, 1, true),
            ],
        ));
        assert_eq!(tg.required_closed_count().unwrap(), 2);
        // 1-2 and 2-3 closed: path DG1-2-DG3 closes a cycle through the virtual node, bus 4 stranded.
        let cyc = SwitchConfig::from_closed(4, [0, 1]);
        assert!(!tg.is_feasible(&cyc));
        let ok = SwitchConfig::from_closed(4, [0, 2]);
        assert!(tg.is_feasible(&ok));
        let set = tg.islands(&ok).unwrap();
        assert_eq!(set.islands.len(), 2);
        assert_eq!(set.islands[0].buses, vec![0, 1]);
        assert_eq!(set.islands[1].buses, vec![2, 3]);
        // Brute force: a 2-subset is feasible iff it leaves buses 2 and 4 each attached to exactly one DG.
        let en = tg.enumerate_feasible().unwrap();
        assert_eq!(en.tested, 16);
        assert_eq!(en.count(), 4);
    }

    #[test]
    fn already_tree_with_no_switches() {
        use BusKind::*;
        let tg = TransformedGraph::new(case(
            &[(1, Dg), (2, Plain), (3, Plain)],
            vec![line(1, 1, 2, false), line(2, 2, 3, false)],
        ));
        assert_eq!(tg.required_closed_count().unwrap(), 0);
        let empty = SwitchConfig::all_open(0);
        assert!(tg.is_feasible(&empty));
        let en = tg.enumerate_feasible().unwrap();
        assert_eq!((en.tested, en.count()), (1, 1));
        assert_eq!(tg.islands(&empty).unwrap().islands[0].buses, vec![0, 1, 2]);
    }

    #[test]
    fn two_bus_single_switch() {
        use BusKind::*;
        let tg = TransformedGraph::new(case(&[(1, Dg), (2, Plain)], vec![line(1, 1, 2, true)]));
        let en = tg.enumerate_feasible().unwrap();
        assert_eq!(en.count(), 1);
        assert_eq!(en.feasible[0], SwitchConfig::all_closed(1));
    }

    #[test]
    fn too_many_fixed_lines() {
        use BusKind::*;
        let tg = TransformedGraph::new(case(
            &[(1, Dg), (2, Plain)],
            vec![line(1, 1, 2, false), line(2, 2, 1, false)],
        ));
        assert!(matches!(
            tg.required_closed_count(),
            Err(Error::NoSpanningTree { required: -1, .. })
        ));
    }

    #[test]
    fn islands_rejects_infeasible() {
        let tg = ring();
        assert!(matches!(
            tg.islands(&SwitchConfig::all_open(4)),
            Err(Error::InfeasibleConfiguration)
        ));
        assert!(matches!(
            tg.islands(&SwitchConfig::all_open(3)),
            Err(Error::ConfigLength { .. })
        ));
    }

    #[test]
    fn config_csv_has_header_and_rows() {
        let tg = ring();
        let en = tg.enumerate_feasible().unwrap();
        let mut buf = Vec::new();
        tg.write_configs_csv(&mut buf, &en.feasible).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("line_1,line_2,line_3,line_4"));
        assert_eq!(lines.count(), 4);
    }

    #[test]
    fn config_display_and_ops() {
        let a = SwitchConfig::from_closed(4, [0, 2]);
        let b = SwitchConfig::from_closed(4, [0, 3]);
        assert_eq!(a.to_string(), "1010");
        assert_eq!(a.operations_from(&b), vec![0, 0, 1, 1]);
        assert_eq!("1010".parse::<SwitchConfig>().unwrap(), a);
        assert!("10x0".parse::<SwitchConfig>().is_err());
    }
}
