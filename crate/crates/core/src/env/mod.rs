//! The multi-microgrid formation MDP.
//!
//! At step `t` the agent observes the configuration in force and the
//! injections of step `t`, proposes a configuration for step `t`, and is
//! rewarded for it under those same injections. Topology infeasibility is the
//! only hard constraint: it ends the episode unless the online guard is on, in
//! which case the proposal is discarded and the previous configuration kept.

mod input;
mod reward;
mod scenario;

use std::io::Write;

use serde::Serialize;

pub use input::{build_input, input_width, InputTensor, Normalizer, INPUT_ROWS};
pub use reward::{
    assemble_reward, balance_penalty, branch_penalty, deficiency, island_terms, reward, switch_penalty,
    topology_reward, voltage_penalty, IslandTerms, Reward, RewardBreakdown, RewardConfig, RewardParams,
};
pub use scenario::{generate_scenario, Scenario, ScenarioOptions};

use crate::error::{Error, Result};
use crate::powerflow::{solve_all, solve_island, InjectionSet, IslandSolution, PfSolution, SweepSettings};
use crate::scalar::Scalar;
use crate::topology::{Island, SwitchConfig, TransformedGraph};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvState<T> {
    pub t: usize,
    pub cfg: SwitchConfig,
    pub injections: InjectionSet<T>,
    /// Cumulative operations per switch.
    pub op_counts: Vec<u32>,
}

/// Load supplied in one island after shedding.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ServedLoad<T> {
    pub dg: usize,
    pub demand_p: T,
    pub served_p: T,
    /// Shed load indices, in shedding order.
    pub shed: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StepInfo<T> {
    /// The configuration actually in force after the step.
    pub applied: SwitchConfig,
    /// Whether the proposed configuration was feasible.
    pub proposal_feasible: bool,
    pub guard_triggered: bool,
    pub reward: Reward<T>,
    /// Per-island service; empty when the applied configuration is infeasible.
    pub served: Vec<ServedLoad<T>>,
    /// Operations performed by this step, per switch.
    pub switch_ops: Vec<u32>,
    pub loss_p: T,
    pub min_voltage: T,
    pub max_voltage: T,
    pub pf: Option<PfSolution<T>>,
}

impl<T: Scalar> StepInfo<T> {
    pub fn served_p(&self) -> T {
        self.served.iter().map(|s| s.served_p).sum()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StepOutcome<T> {
    pub next_state: EnvState<T>,
    pub reward: T,
    pub done: bool,
    pub info: StepInfo<T>,
}

/// Sheds whole loads from an island, lowest priority first (larger first
/// within a priority), until it converges without deficiency.
pub fn serve_island<T: Scalar>(
    tg: &TransformedGraph,
    island: &Island,
    injections: &InjectionSet<T>,
    settings: &SweepSettings,
    solution: &IslandSolution<T>,
) -> ServedLoad<T> {
    let case = tg.case();
    let members: Vec<usize> = tg
        .load_buses()
        .iter()
        .enumerate()
        .filter(|(_, b)| island.buses.binary_search(b).is_ok())
        .map(|(j, _)| j)
        .collect();
    let demand_p: T = members.iter().map(|&j| injections.p_load[j]).sum();
    let ok = |s: &IslandSolution<T>| s.converged && s.deficiency() <= T::zero();
    if ok(solution) {
        return ServedLoad {
            dg: island.dg,
            demand_p,
            served_p: demand_p,
            shed: Vec::new(),
        };
    }
    let mut order = members.clone();
    order.sort_by(|&a, &b| {
        case.loads[a]
            .priority
            .cmp(&case.loads[b].priority)
            .then(
                injections.p_load[b]
                    .partial_cmp(&injections.p_load[a])
                    .unwrap_or(std::cmp::Ordering::Equal),
            )
            .then(a.cmp(&b))
    });
    let mut reduced = injections.clone();
    let mut shed = Vec::new();
    for j in order {
        reduced.p_load[j] = T::zero();
        reduced.q_load[j] = T::zero();
        shed.push(j);
        if ok(&solve_island(tg, island, &reduced, settings, None)) {
            break;
        }
    }
    let served_p = members.iter().map(|&j| reduced.p_load[j]).sum();
    ServedLoad {
        dg: island.dg,
        demand_p,
        served_p,
        shed,
    }
}

/// Solves, rewards, and serves a configuration against one injection set.
pub fn evaluate_config<T: Scalar>(
    tg: &TransformedGraph,
    params: &RewardParams<T>,
    settings: &SweepSettings,
    cfg: &SwitchConfig,
    injections: &InjectionSet<T>,
    op_counts: &[u32],
) -> (Reward<T>, Option<PfSolution<T>>, Vec<ServedLoad<T>>) {
    if !tg.is_feasible(cfg) {
        return (reward(tg, params, op_counts, None), None, Vec::new());
    }
    let islands = tg.islands(cfg).expect("feasible configuration");
    let pf = solve_all(tg, cfg, injections, settings).expect("feasible configuration");
    let served = islands
        .islands
        .iter()
        .zip(&pf.islands)
        .map(|(island, sol)| serve_island(tg, island, injections, settings, sol))
        .collect();
    (reward(tg, params, op_counts, Some(&pf)), Some(pf), served)
}

/// One episode of the MDP over a fixed scenario.
#[derive(Debug, Clone)]
pub struct Environment<'a, T> {
    tg: &'a TransformedGraph,
    normalizer: Normalizer,
    params: RewardParams<T>,
    n_step: f64,
    settings: SweepSettings,
    scenario: Scenario<T>,
    state: EnvState<T>,
    finished: bool,
}

impl<'a, T: Scalar> Environment<'a, T> {
    /// Starts an episode at `t = 0` in the case's initial configuration.
    pub fn reset(tg: &'a TransformedGraph, config: &RewardConfig, scenario: Scenario<T>) -> Result<Self> {
        let horizon = tg.case().horizon_steps;
        if scenario.len() != horizon {
            return Err(Error::ScenarioLength {
                expected: horizon,
                found: scenario.len(),
            });
        }
        let cfg = tg.initial_config();
        if !tg.is_feasible(&cfg) {
            return Err(Error::InitialTopologyInfeasible);
        }
        let state = EnvState {
            t: 0,
            cfg,
            injections: scenario.steps[0].clone(),
            op_counts: vec![0; tg.switch_count()],
        };
        Ok(Self {
            tg,
            normalizer: Normalizer::from_case(tg),
            params: config.params(horizon),
            n_step: config.n_step.unwrap_or(horizon as f64),
            settings: SweepSettings::default(),
            scenario,
            state,
            finished: false,
        })
    }

    pub fn graph(&self) -> &'a TransformedGraph {
        self.tg
    }

    pub fn state(&self) -> &EnvState<T> {
        &self.state
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn params(&self) -> &RewardParams<T> {
        &self.params
    }

    pub fn settings(&self) -> &SweepSettings {
        &self.settings
    }

    /// Encodes an arbitrary state with this environment's frozen normalizer.
    pub fn encode(&self, state: &EnvState<T>) -> InputTensor<T> {
        build_input(
            self.tg,
            &self.normalizer,
            &state.cfg,
            &state.injections,
            &state.op_counts,
            self.n_step,
        )
    }

    pub fn observe(&self) -> InputTensor<T> {
        self.encode(&self.state)
    }

    /// Applies a proposed configuration for the current step.
    pub fn step(&mut self, action: &SwitchConfig, online_guard: bool) -> Result<StepOutcome<T>> {
        if self.finished {
            return Err(Error::EpisodeFinished);
        }
        if action.len() != self.tg.switch_count() {
            return Err(Error::ConfigLength {
                expected: self.tg.switch_count(),
                found: action.len(),
            });
        }
        let t = self.state.t;
        let proposal_feasible = self.tg.is_feasible(action);
        let guard_triggered = online_guard && !proposal_feasible;
        let applied = if guard_triggered {
            self.state.cfg.clone()
        } else {
            action.clone()
        };
        let switch_ops = applied.operations_from(&self.state.cfg);
        let mut op_counts = self.state.op_counts.clone();
        for (c, o) in op_counts.iter_mut().zip(&switch_ops) {
            *c += o;
        }
        let injections = &self.scenario.steps[t];
        let (reward, pf, served) = evaluate_config(
            self.tg,
            &self.params,
            &self.settings,
            &applied,
            injections,
            &op_counts,
        );
        let (loss_p, min_voltage, max_voltage) = match &pf {
            Some(pf) => {
                let volts = pf
                    .islands
                    .iter()
                    .filter(|i| i.converged)
                    .flat_map(|i| i.v.iter().copied());
                let (lo, hi) = volts.fold((T::infinity(), T::neg_infinity()), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
                (pf.total_loss_p(), lo, hi)
            }
            None => (T::zero(), T::nan(), T::nan()),
        };
        let done = !reward.topo_ok || t + 1 == self.scenario.len();
        let next_t = t + 1;
        let next_injections = self.scenario.steps[next_t.min(self.scenario.len() - 1)].clone();
        self.state = EnvState {
            t: next_t,
            cfg: applied.clone(),
            injections: next_injections,
            op_counts,
        };
        self.finished = done;
        Ok(StepOutcome {
            next_state: self.state.clone(),
            reward: reward.value,
            done,
            info: StepInfo {
                applied,
                proposal_feasible,
                guard_triggered,
                reward,
                served,
                switch_ops,
                loss_p,
                min_voltage,
                max_voltage,
                pf,
            },
        })
    }
}

/// One JSON-lines record of an episode log.
#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub t: usize,
    pub action: String,
    pub applied: String,
    pub proposal_feasible: bool,
    pub guard_triggered: bool,
    pub reward: f64,
    pub f_topo: f64,
    pub f_ac: Vec<f64>,
    pub f_swi: f64,
    pub f_pb: Vec<f64>,
    pub loss_p: f64,
    pub min_voltage: Option<f64>,
    pub max_voltage: Option<f64>,
    pub op_counts: Vec<u32>,
    pub served_p: Vec<f64>,
    pub demand_p: Vec<f64>,
}

impl StepRecord {
    pub fn new<T: Scalar>(t: usize, action: &SwitchConfig, outcome: &StepOutcome<T>) -> Self {
        let info = &outcome.info;
        let b = &info.reward.breakdown;
        let finite = |v: T| v.is_finite().then(|| v.to_f64_lossless());
        Self {
            t,
            action: action.to_string(),
            applied: info.applied.to_string(),
            proposal_feasible: info.proposal_feasible,
            guard_triggered: info.guard_triggered,
            reward: outcome.reward.to_f64_lossless(),
            f_topo: b.f_topo.to_f64_lossless(),
            f_ac: b.f_ac.iter().map(|v| v.to_f64_lossless()).collect(),
            f_swi: b.f_swi.to_f64_lossless(),
            f_pb: b.f_pb.iter().map(|v| v.to_f64_lossless()).collect(),
            loss_p: info.loss_p.to_f64_lossless(),
            min_voltage: finite(info.min_voltage),
            max_voltage: finite(info.max_voltage),
            op_counts: outcome.next_state.op_counts.clone(),
            served_p: info.served.iter().map(|s| s.served_p.to_f64_lossless()).collect(),
            demand_p: info.served.iter().map(|s| s.demand_p.to_f64_lossless()).collect(),
        }
    }
}

/// Writes records as JSON lines.
pub fn write_episode_log<W: Write>(mut out: W, records: &[StepRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
