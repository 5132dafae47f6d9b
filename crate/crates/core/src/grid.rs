//! Distribution-network case data model and its JSON on-disk format.
//!
//! All powers held by [`NetworkCase`] are per-unit on `s_base_mva`. Case files
//! may store powers either in MW/MVAr/MVA (`"power_unit": "mw"`, the default)
//! or already in per-unit (`"power_unit": "pu"`); conversion happens in
//! [`load_case`]. Impedances are always per-unit.

// `!(x > 0.0)` style checks also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CASE_SCHEMA: &str = "gridform-case-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusKind {
    Plain,
    Dg,
    Substation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    pub kind: BusKind,
    #[serde(default = "unit_voltage")]
    pub base_voltage: f64,
}

fn unit_voltage() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: u32,
    pub from_bus: u32,
    pub to_bus: u32,
    pub r: f64,
    pub x: f64,
    /// Apparent-power upper bound.
    pub flow_limit: f64,
    pub switchable: bool,
    /// Initial status of a switchable line. Fixed lines are always closed.
    #[serde(default)]
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgUnit {
    pub bus: u32,
    pub p_max: f64,
    pub q_max: f64,
    pub p_expected: Vec<f64>,
    pub q_expected: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub bus: u32,
    pub p: f64,
    pub q: f64,
    /// Lower priorities are shed first.
    #[serde(default)]
    pub priority: u32,
}

/// The physical system under study. Immutable once loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCase {
    pub name: String,
    pub s_base_mva: f64,
    pub horizon_steps: usize,
    pub step_minutes: f64,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub dgs: Vec<DgUnit>,
    pub loads: Vec<Load>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
enum PowerUnit {
    #[default]
    Mw,
    Pu,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseDocument {
    schema: String,
    #[serde(default)]
    name: String,
    #[serde(default)]
    power_unit: PowerUnit,
    s_base_mva: f64,
    horizon_steps: usize,
    step_minutes: f64,
    buses: Vec<Bus>,
    lines: Vec<Line>,
    dgs: Vec<DgUnit>,
    loads: Vec<Load>,
}

/// A single failed invariant, naming the offending element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub element: String,
    pub problem: String,
}

impl Violation {
    fn new(element: impl Into<String>, problem: impl Into<String>) -> Self {
        Self {
            element: element.into(),
            problem: problem.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.element, self.problem)
    }
}

impl NetworkCase {
    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn line_count(&self) -> usize {
        self.lines.len()
    }

    pub fn dg_count(&self) -> usize {
        self.dgs.len()
    }

    pub fn switch_count(&self) -> usize {
        self.lines.iter().filter(|l| l.switchable).count()
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Sum of all nominal load active power (p.u.).
    pub fn total_load_p(&self) -> f64 {
        self.loads.iter().map(|l| l.p).sum()
    }

    /// Serializes to the versioned JSON case format with per-unit powers.
    pub fn to_json(&self) -> String {
        let doc = CaseDocument {
            schema: CASE_SCHEMA.to_string(),
            name: self.name.clone(),
            power_unit: PowerUnit::Pu,
            s_base_mva: self.s_base_mva,
            horizon_steps: self.horizon_steps,
            step_minutes: self.step_minutes,
            buses: self.buses.clone(),
            lines: self.lines.clone(),
            dgs: self.dgs.clone(),
            loads: self.loads.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("case serialization cannot fail")
    }
}

/// Parses and validates a case document.
pub fn load_case(text: &str) -> Result<NetworkCase> {
    let doc: CaseDocument = serde_json::from_str(text)?;
    if doc.schema != CASE_SCHEMA {
        return Err(Error::Schema {
            expected: CASE_SCHEMA,
            found: doc.schema,
        });
    }
    let mut case = NetworkCase {
        name: doc.name,
        s_base_mva: doc.s_base_mva,
        horizon_steps: doc.horizon_steps,
        step_minutes: doc.step_minutes,
        buses: doc.buses,
        lines: doc.lines,
        dgs: doc.dgs,
        loads: doc.loads,
    };
    if doc.power_unit == PowerUnit::Mw {
        if !(case.s_base_mva > 0.0) {
            return Err(Error::InvalidCase(vec![Violation::new(
                "case",
                "s_base_mva must be positive",
            )]));
        }
        let s = case.s_base_mva;
        for line in &mut case.lines {
            line.flow_limit /= s;
        }
        for dg in &mut case.dgs {
            dg.p_max /= s;
            dg.q_max /= s;
            dg.p_expected.iter_mut().for_each(|v| *v /= s);
            dg.q_expected.iter_mut().for_each(|v| *v /= s);
        }
        for load in &mut case.loads {
            load.p /= s;
            load.q /= s;
        }
    }
    let violations = validate(&case);
    if violations.is_empty() {
        Ok(case)
    } else {
        Err(Error::InvalidCase(violations))
    }
}

/// Checks every case invariant. Returns an empty list iff the case is valid.
pub fn validate(case: &NetworkCase) -> Vec<Violation> {
    let mut out = Vec::new();
    if case.buses.is_empty() {
        out.push(Violation::new("case", "empty case"));
        return out;
    }
    if case.horizon_steps < 1 {
        out.push(Violation::new("case", "horizon_steps must be at least 1"));
    }
    if !(case.s_base_mva > 0.0) {
        out.push(Violation::new("case", "s_base_mva must be positive"));
    }

    let mut bus_ids = BTreeMap::new();
    for (i, bus) in case.buses.iter().enumerate() {
        if bus_ids.insert(bus.id, i).is_some() {
            out.push(Violation::new(format!("bus {}", bus.id), "duplicate id"));
        }
    }

    let mut line_ids = BTreeSet::new();
    for line in &case.lines {
        let name = format!("line {}", line.id);
        if !line_ids.insert(line.id) {
            out.push(Violation::new(&name, "duplicate id"));
        }
        if line.from_bus == line.to_bus {
            out.push(Violation::new(&name, "self-loop"));
        }
        for end in [line.from_bus, line.to_bus] {
            if !bus_ids.contains_key(&end) {
                out.push(Violation::new(&name, format!("unknown bus {end}")));
            }
        }
        if !(line.r >= 0.0) || !(line.x >= 0.0) {
            out.push(Violation::new(&name, "negative impedance"));
        }
        if !(line.flow_limit > 0.0) {
            out.push(Violation::new(&name, "flow_limit must be positive"));
        }
    }

    let mut dg_buses = BTreeSet::new();
    for dg in &case.dgs {
        let name = format!("dg at bus {}", dg.bus);
        match bus_ids.get(&dg.bus).map(|&i| case.buses[i].kind) {
            None => out.push(Violation::new(&name, "unknown bus")),
            Some(BusKind::Plain) => out.push(Violation::new(&name, "bus is not a dg bus")),
            Some(_) => {}
        }
        if !dg_buses.insert(dg.bus) {
            out.push(Violation::new(&name, "more than one DG unit on bus"));
        }
        if !(dg.p_max > 0.0) {
            out.push(Violation::new(&name, "p_max must be positive"));
        }
        if !(dg.q_max >= 0.0) {
            out.push(Violation::new(&name, "q_max must be non-negative"));
        }
        if dg.p_expected.len() != case.horizon_steps || dg.q_expected.len() != case.horizon_steps {
            out.push(Violation::new(
                &name,
                format!("trajectories must have length {}", case.horizon_steps),
            ));
        }
        if dg.p_expected.iter().chain(&dg.q_expected).any(|v| !(*v >= 0.0)) {
            out.push(Violation::new(&name, "negative expected output"));
        }
    }
    for bus in &case.buses {
        if bus.kind == BusKind::Dg && !dg_buses.contains(&bus.id) {
            out.push(Violation::new(
                format!("bus {}", bus.id),
                "DG bus without DG unit",
            ));
        }
    }
    if case.dgs.is_empty() {
        out.push(Violation::new("case", "at least one DG is required"));
    }

    let mut load_buses = BTreeSet::new();
    for load in &case.loads {
        let name = format!("load at bus {}", load.bus);
        if !bus_ids.contains_key(&load.bus) {
            out.push(Violation::new(&name, "unknown bus"));
        }
        if !load_buses.insert(load.bus) {
            out.push(Violation::new(&name, "more than one load on bus"));
        }
        if !(load.p >= 0.0) || !(load.q >= 0.0) {
            out.push(Violation::new(&name, "negative demand"));
        }
    }

    if out.is_empty() && !base_graph_connected(case, &bus_ids) {
        out.push(Violation::new("case", "disconnected base graph"));
    }
    out
}

fn base_graph_connected(case: &NetworkCase, bus_ids: &BTreeMap<u32, usize>) -> bool {
    let n = case.buses.len();
    let mut adj = vec![Vec::new(); n];
    for line in &case.lines {
        let (a, b) = (bus_ids[&line.from_bus], bus_ids[&line.to_bus]);
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}
