//! Static-formation baseline and dynamic-versus-static comparison reports.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::env::{evaluate_config, Environment, RewardConfig, Scenario, ServedLoad};
use crate::error::{Error, Result};
use crate::powerflow::{PfSolution, SweepSettings};
use crate::qnet::{decode_action, QNetwork};
use crate::scalar::Scalar;
use crate::topology::{SwitchConfig, TransformedGraph};

/// One configuration held for the whole horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselinePlan {
    pub cfg: SwitchConfig,
    /// Step-0 reward that selected `cfg`.
    pub reward0: f64,
    /// Load indices shed at each step.
    pub shed_schedule: Vec<Vec<usize>>,
    /// Served and demanded active power per step, p.u.
    pub served_p: Vec<f64>,
    pub demand_p: Vec<f64>,
    pub loss_p: Vec<f64>,
    #[serde(skip)]
    pub pf: Vec<Option<PfSolution<f64>>>,
}

/// Served and demanded active power, summed in load order so equal service
/// gives bit-equal totals regardless of island layout.
fn served_totals<T: Scalar>(served: &[ServedLoad<T>], p_load: &[T]) -> (f64, f64, Vec<usize>) {
    let mut shed: Vec<usize> = served.iter().flat_map(|s| s.shed.iter().copied()).collect();
    shed.sort_unstable();
    let mut s = T::zero();
    let mut d = T::zero();
    if !served.is_empty() {
        for (j, &p) in p_load.iter().enumerate() {
            d += p;
            if shed.binary_search(&j).is_err() {
                s += p;
            }
        }
    }
    (s.to_f64_lossless(), d.to_f64_lossless(), shed)
}

/// The best fixed configuration by step-0 reward, with whole-load shedding
/// at every step where an island is short or fails to converge.
pub fn static_baseline(
    tg: &TransformedGraph,
    reward: &RewardConfig,
    scenario: &Scenario<f64>,
) -> Result<BaselinePlan> {
    let candidates = tg.enumerate_feasible()?.feasible;
    if candidates.is_empty() || scenario.is_empty() {
        return Err(Error::NoFeasibleConfiguration);
    }
    let params = reward.params::<f64>(tg.case().horizon_steps);
    let settings = SweepSettings::default();
    let initial = tg.initial_config();
    let scores: Vec<f64> = candidates
        .par_iter()
        .map(|cfg| {
            let ops = cfg.operations_from(&initial);
            evaluate_config(tg, &params, &settings, cfg, &scenario.steps[0], &ops)
                .0
                .value
        })
        .collect();
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    let cfg = candidates[best].clone();
    let ops = cfg.operations_from(&initial);
    let mut plan = BaselinePlan {
        cfg: cfg.clone(),
        reward0: scores[best],
        shed_schedule: Vec::new(),
        served_p: Vec::new(),
        demand_p: Vec::new(),
        loss_p: Vec::new(),
        pf: Vec::new(),
    };
    for inj in &scenario.steps {
        let (_, pf, served) = evaluate_config(tg, &params, &settings, &cfg, inj, &ops);
        let (s, d, shed) = served_totals(&served, &inj.p_load);
        plan.served_p.push(s);
        plan.demand_p.push(d);
        plan.shed_schedule.push(shed);
        plan.loss_p.push(pf.as_ref().map_or(0.0, |p| p.total_loss_p()));
        plan.pf.push(pf);
    }
    Ok(plan)
}

/// One step of the comparison, powers in MW.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub step: usize,
    pub dg_output_mw: f64,
    pub total_load_mw: f64,
    pub served_dynamic_mw: f64,
    pub served_static_mw: f64,
    pub topology_dynamic: String,
    pub topology_static: String,
    pub switch_ops_dynamic: u32,
    pub loss_dynamic_mw: f64,
    pub loss_static_mw: f64,
    pub guard_triggered: bool,
}

/// Bus voltages of one configuration at the first step it was in force.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VoltageProfile {
    pub scheme: String,
    pub topology: String,
    pub step: usize,
    pub bus_ids: Vec<u32>,
    /// `None` for buses in a non-converged island.
    pub voltages: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub static_topology: String,
    pub shed_energy_dynamic_mwh: f64,
    pub shed_energy_static_mwh: f64,
    #[serde(skip)]
    pub profiles: Vec<VoltageProfile>,
}

impl ComparisonReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn profiles_json(&self) -> String {
        serde_json::to_string_pretty(&self.profiles).expect("profiles serialize")
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn profile(
    tg: &TransformedGraph,
    scheme: &str,
    cfg: &SwitchConfig,
    step: usize,
    pf: &PfSolution<f64>,
) -> VoltageProfile {
    let buses = &tg.case().buses;
    let mut voltages = vec![None; buses.len()];
    for island in pf.islands.iter().filter(|i| i.converged) {
        for (&b, &v) in island.buses.iter().zip(&island.v) {
            voltages[b] = Some(v);
        }
    }
    VoltageProfile {
        scheme: scheme.to_string(),
        topology: cfg.to_string(),
        step,
        bus_ids: buses.iter().map(|b| b.id).collect(),
        voltages,
    }
}

/// Runs the greedy policy (guard on) and the static baseline on one scenario.
pub fn compare(
    net: &QNetwork<f64>,
    tg: &TransformedGraph,
    reward: &RewardConfig,
    scenario: &Scenario<f64>,
) -> Result<ComparisonReport> {
    let plan = static_baseline(tg, reward, scenario)?;
    let k = tg.required_closed_count()?;
    let case = tg.case();
    let mw = case.s_base_mva;
    let hours = case.step_minutes / 60.0;
    let mut env = Environment::reset(tg, reward, scenario.clone())?;
    let mut rows = Vec::with_capacity(scenario.len());
    let mut profiles = Vec::new();
    let mut seen: Vec<String> = Vec::new();
    let mut shed_dynamic = 0.0;
    let mut shed_static = 0.0;
    while !env.is_finished() {
        let t = env.state().t;
        let action = decode_action(&net.forward(&env.observe())?, k);
        let out = env.step(&action, true)?;
        let info = &out.info;
        let (served, demand, _) = served_totals(&info.served, &scenario.steps[t].p_load);
        let inj = &scenario.steps[t];
        let dg_output: f64 = inj.p_dg.iter().sum();
        let total_load: f64 = inj.p_load.iter().sum();
        let topo = info.applied.to_string();
        if let Some(pf) = &info.pf {
            if !seen.contains(&topo) {
                seen.push(topo.clone());
                profiles.push(profile(tg, "dynamic", &info.applied, t, pf));
            }
        }
        if let (0, Some(pf)) = (t, &plan.pf[t]) {
            profiles.push(profile(tg, "static", &plan.cfg, t, pf));
        }
        shed_dynamic += (demand - served) * mw * hours;
        shed_static += (plan.demand_p[t] - plan.served_p[t]) * mw * hours;
        rows.push(ComparisonRow {
            step: t,
            dg_output_mw: dg_output * mw,
            total_load_mw: total_load * mw,
            served_dynamic_mw: served * mw,
            served_static_mw: plan.served_p[t] * mw,
            topology_dynamic: topo,
            topology_static: plan.cfg.to_string(),
            switch_ops_dynamic: info.switch_ops.iter().sum(),
            loss_dynamic_mw: info.loss_p * mw,
            loss_static_mw: plan.loss_p[t] * mw,
            guard_triggered: info.guard_triggered,
        });
    }
    Ok(ComparisonReport {
        rows,
        static_topology: plan.cfg.to_string(),
        shed_energy_dynamic_mwh: shed_dynamic,
        shed_energy_static_mwh: shed_static,
        profiles,
    })
}
