//! Multi-buffer experience replay, ε-greedy exploration, and the training loop.

use std::collections::VecDeque;
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{
    build_input, generate_scenario, Environment, InputTensor, RewardConfig, Scenario, ScenarioOptions,
};
use crate::error::{Error, Result};
use crate::qnet::{
    decode_action, double_td_target, td_target, Adam, Architecture, KernelPreset, Params, QNetwork,
};
use crate::scalar::Scalar;
use crate::topology::{SwitchConfig, TransformedGraph};

/// RNG streams derived from the run seed.
pub const STREAM_SCENARIO: u64 = 1;
pub const STREAM_EXPLORE: u64 = 2;
pub const STREAM_BATCH: u64 = 3;

/// Independent ChaCha8 stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One experience `(S_t, A_t, r_t, S_{t+1}, D_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<T> {
    pub state_input: InputTensor<T>,
    pub action: SwitchConfig,
    pub reward: T,
    pub next_input: InputTensor<T>,
    /// `D_t`: the configuration was infeasible.
    pub done: bool,
    /// The episode ended here, by infeasibility or by reaching the horizon.
    pub terminal: bool,
}

/// Three bounded stores: everything, high-reward, and feasible-topology transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffers<T> {
    pub memory1: VecDeque<Arc<Transition<T>>>,
    pub memory2: VecDeque<Arc<Transition<T>>>,
    pub memory3: VecDeque<Arc<Transition<T>>>,
    pub maxlen: usize,
    pub batch_sizes: [usize; 3],
    pub r_std: T,
}

fn push_bounded<X>(buf: &mut VecDeque<X>, item: X, cap: usize) {
    if cap == 0 {
        return;
    }
    if buf.len() == cap {
        buf.pop_front();
    }
    buf.push_back(item);
}

impl<T: Scalar> ReplayBuffers<T> {
    pub fn new(maxlen: usize, batch_sizes: [usize; 3], r_std: T) -> Self {
        Self {
            memory1: VecDeque::new(),
            memory2: VecDeque::new(),
            memory3: VecDeque::new(),
            maxlen,
            batch_sizes,
            r_std,
        }
    }

    pub fn record(&mut self, transition: Transition<T>) {
        let high = transition.reward >= self.r_std;
        let feasible = !transition.done;
        let tr = Arc::new(transition);
        if high {
            push_bounded(&mut self.memory2, tr.clone(), self.maxlen);
        }
        if feasible {
            push_bounded(&mut self.memory3, tr.clone(), self.maxlen);
        }
        push_bounded(&mut self.memory1, tr, self.maxlen);
    }

    fn buffers(&self) -> [&VecDeque<Arc<Transition<T>>>; 3] {
        [&self.memory1, &self.memory2, &self.memory3]
    }

    /// Every buffer can supply its batch and memory1 holds at least `min_fill`.
    pub fn is_ready(&self, min_fill: usize) -> bool {
        self.memory1.len() >= min_fill
            && self
                .buffers()
                .iter()
                .zip(self.batch_sizes)
                .all(|(b, n)| b.len() >= n)
    }

    /// Uniform samples without replacement from each buffer, concatenated.
    pub fn sample_minibatch<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<Arc<Transition<T>>>> {
        if !self.is_ready(0) {
            return Err(Error::ReplayNotReady);
        }
        let mut batch = Vec::with_capacity(self.batch_sizes.iter().sum());
        for (buf, n) in self.buffers().into_iter().zip(self.batch_sizes) {
            if n == 0 {
                continue;
            }
            for i in sample(rng, buf.len(), n) {
                batch.push(buf[i].clone());
            }
        }
        Ok(batch)
    }
}

/// Multiplicatively annealed exploration rate with a floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplorationSchedule {
    pub epsilon: f64,
    pub k: f64,
    pub epsilon_min: f64,
}

impl ExplorationSchedule {
    pub fn step(&mut self) {
        let next = self.k * self.epsilon;
        self.epsilon = if next > self.epsilon_min {
            next
        } else {
            self.epsilon_min
        };
    }
}

/// With probability ε a uniformly random configuration with exactly `k`
/// closed switches, otherwise the greedy decoded action.
pub fn select_action<T: Scalar, R: Rng + ?Sized>(
    schedule: &ExplorationSchedule,
    net: &QNetwork<T>,
    input: &InputTensor<T>,
    k: usize,
    rng: &mut R,
) -> Result<SwitchConfig> {
    let w = net.outputs();
    if rng.random::<f64>() < schedule.epsilon {
        return Ok(SwitchConfig::from_closed(w, sample(rng, w, k)));
    }
    Ok(decode_action(&net.forward(input)?, k))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonDecay {
    /// Once per episode, after replay has started.
    #[default]
    PerEpisode,
    /// Once per gradient step.
    PerStep,
}

/// How the bootstrapped next-state value is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Bootstrap {
    /// The online network selects the next configuration, the target network values it.
    #[default]
    Double,
    /// Top-k value of the target network alone.
    TargetMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum TargetSync {
    /// Copy the online network on game-over and at the end of every episode.
    #[default]
    EpisodeEnd,
    /// Copy every `every` environment steps instead.
    Periodic { every: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub episodes: usize,
    pub learning_rate: f64,
    pub maxlen: usize,
    pub batch_sizes: [usize; 3],
    /// Replay starts once memory1 holds this many transitions.
    pub min_fill: usize,
    /// High-reward threshold; `None` means `0.5 * r_topo`.
    pub r_std: Option<f64>,
    pub epsilon_start: f64,
    pub epsilon_decay: f64,
    pub epsilon_min: f64,
    pub decay: EpsilonDecay,
    pub target_sync: TargetSync,
    pub bootstrap: Bootstrap,
    pub kernel: KernelPreset,
    pub seed: u64,
    /// Roll out the greedy policy on each training scenario after the episode.
    pub greedy_probe: bool,
    pub scenario: ScenarioOptions,
    pub reward: RewardConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 600,
            learning_rate: 1e-3,
            maxlen: 10_000,
            batch_sizes: [16, 8, 8],
            min_fill: 200,
            r_std: None,
            epsilon_start: 1.0,
            epsilon_decay: 0.995,
            epsilon_min: 0.1,
            decay: EpsilonDecay::PerEpisode,
            target_sync: TargetSync::EpisodeEnd,
            bootstrap: Bootstrap::Double,
            kernel: KernelPreset::K3,
            seed: 0,
            greedy_probe: true,
            scenario: ScenarioOptions::default(),
            reward: RewardConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn r_std(&self) -> f64 {
        self.r_std.unwrap_or(0.5 * self.reward.r_topo)
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.episodes == 0 {
            return bad("episodes must be at least 1");
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay < 1.0) {
            return bad("epsilon_decay must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.epsilon_min) || self.epsilon_start < self.epsilon_min {
            return bad("epsilon bounds");
        }
        if self.batch_sizes.iter().sum::<usize>() == 0 {
            return bad("empty minibatch");
        }
        if let TargetSync::Periodic { every: 0 } = self.target_sync {
            return bad("periodic sync interval must be positive");
        }
        Ok(())
    }
}

/// One row of the training curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    /// Feasible steps before game-over (the horizon if none).
    pub survived: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    pub epsilon: f64,
    /// Mean minibatch loss; empty before replay starts.
    pub loss: Option<f64>,
    pub greedy_survived: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeLog>,
}

impl TrainingLog {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for e in &self.episodes {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// First episode ending a run of `window` consecutive full-horizon greedy
    /// rollouts after replay training has started, if any.
    pub fn sustained_at(&self, horizon: usize, window: usize) -> Option<usize> {
        let mut run = 0;
        for e in self.episodes.iter().skip_while(|e| e.loss.is_none()) {
            if e.greedy_survived == Some(horizon) {
                run += 1;
                if run >= window {
                    return Some(e.episode);
                }
            } else {
                run = 0;
            }
        }
        None
    }
}

/// `Σ γ^k r_k`, accumulated front to back.
pub fn discounted_return<T: Scalar>(rewards: &[T], gamma: T) -> T {
    let mut power = T::one();
    let mut total = T::zero();
    for &r in rewards {
        total += power * r;
        power *= gamma;
    }
    total
}

/// The network shape for a case.
pub fn architecture_for(tg: &TransformedGraph, kernel: KernelPreset) -> Architecture {
    Architecture::new(crate::env::input_width(tg), tg.switch_count(), kernel)
}

/// One gradient step on a sampled minibatch; returns the mean loss.
#[allow(clippy::too_many_arguments)]
pub fn replay_step<T: Scalar, R: Rng + ?Sized>(
    online: &mut QNetwork<T>,
    target: &QNetwork<T>,
    optimizer: &mut Adam<T>,
    buffers: &ReplayBuffers<T>,
    k: usize,
    gamma: T,
    bootstrap: Bootstrap,
    rng: &mut R,
) -> Result<T> {
    let batch = buffers.sample_minibatch(rng)?;
    let net: &QNetwork<T> = online;
    // Per-sample gradients in parallel, summed in batch order.
    let parts: Vec<Result<(T, Params<T>)>> = batch
        .par_iter()
        .map(|tr| {
            let y = match bootstrap {
                Bootstrap::Double => {
                    double_td_target(tr.reward, tr.terminal, net, target, &tr.next_input, k, gamma)?
                }
                Bootstrap::TargetMax => td_target(tr.reward, tr.terminal, target, &tr.next_input, k, gamma)?,
            };
            let cache = net.forward_cached(&tr.state_input)?;
            let b = net.backward(&cache, &tr.action, y);
            Ok((b.loss, b.grads))
        })
        .collect();
    let mut grads = Params::zeros(&online.arch);
    let mut loss = T::zero();
    for part in parts {
        let (l, g) = part?;
        loss += l;
        grads.add_assign(&g);
    }
    let scale = T::one() / T::of(batch.len() as f64);
    loss *= scale;
    grads.scale(scale);
    if !loss.is_finite() {
        return Err(Error::Diverged(format!(
            "non-finite loss after {} optimizer steps",
            optimizer.steps
        )));
    }
    optimizer.apply(&mut online.params, &grads)?;
    Ok(loss)
}

/// Runs the greedy policy on one scenario; returns per-step rewards and
/// whether each step was feasible.
pub fn greedy_rollout<T: Scalar>(
    net: &QNetwork<T>,
    tg: &TransformedGraph,
    reward: &RewardConfig,
    scenario: Scenario<T>,
    guard: bool,
) -> Result<Vec<(T, bool)>> {
    let k = tg.required_closed_count()?;
    let mut env = Environment::reset(tg, reward, scenario)?;
    let mut out = Vec::new();
    while !env.is_finished() {
        let action = decode_action(&net.forward(&env.observe())?, k);
        let step = env.step(&action, guard)?;
        out.push((step.reward, step.info.reward.topo_ok));
    }
    Ok(out)
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct Trained<T> {
    pub online: QNetwork<T>,
    pub target: QNetwork<T>,
    pub log: TrainingLog,
    pub gradient_steps: u64,
}

/// The training loop. Single-threaded apart from per-sample gradient
/// evaluation, and deterministic for a given `(case, config)`.
pub fn train<T: Scalar>(tg: &TransformedGraph, config: &TrainConfig) -> Result<Trained<T>> {
    config.validate()?;
    let k = tg.required_closed_count()?;
    if !tg.is_feasible(&tg.initial_config()) {
        return Err(Error::InitialTopologyInfeasible);
    }
    let horizon = tg.case().horizon_steps;
    let gamma = T::of(config.reward.gamma);
    let arch = architecture_for(tg, config.kernel);
    let mut online = QNetwork::<T>::new(arch, config.seed);
    let mut target = online.clone();
    let mut optimizer = Adam::new(&arch, config.learning_rate);
    let mut buffers = ReplayBuffers::new(config.maxlen, config.batch_sizes, T::of(config.r_std()));
    let mut schedule = ExplorationSchedule {
        epsilon: config.epsilon_start,
        k: config.epsilon_decay,
        epsilon_min: config.epsilon_min,
    };
    let mut scenario_rng = stream_rng(config.seed, STREAM_SCENARIO);
    let mut explore_rng = stream_rng(config.seed, STREAM_EXPLORE);
    let mut batch_rng = stream_rng(config.seed, STREAM_BATCH);
    let mut log = TrainingLog::default();
    let mut env_steps = 0usize;

    for episode in 0..config.episodes {
        let scenario = generate_scenario::<T>(tg, scenario_rng.next_u64(), &config.scenario);
        let mut env = Environment::reset(tg, &config.reward, scenario.clone())?;
        let mut survived = 0;
        let mut rewards = Vec::with_capacity(horizon);
        let mut losses = Vec::new();
        let epsilon = schedule.epsilon;
        loop {
            let state_input = env.observe();
            let action = select_action(&schedule, &online, &state_input, k, &mut explore_rng)?;
            let outcome = env.step(&action, false)?;
            env_steps += 1;
            let feasible = outcome.info.reward.topo_ok;
            if feasible {
                survived += 1;
            }
            rewards.push(outcome.reward);
            buffers.record(Transition {
                state_input,
                action,
                reward: outcome.reward,
                next_input: env.encode(&outcome.next_state),
                done: !feasible,
                terminal: outcome.done,
            });
            if buffers.is_ready(config.min_fill) {
                let loss = replay_step(
                    &mut online,
                    &target,
                    &mut optimizer,
                    &buffers,
                    k,
                    gamma,
                    config.bootstrap,
                    &mut batch_rng,
                )?;
                losses.push(loss.to_f64_lossless());
                if config.decay == EpsilonDecay::PerStep {
                    schedule.step();
                }
            }
            match config.target_sync {
                TargetSync::EpisodeEnd if outcome.done => target = online.clone(),
                TargetSync::Periodic { every } if env_steps.is_multiple_of(every) => target = online.clone(),
                _ => {}
            }
            if outcome.done {
                break;
            }
        }
        if config.decay == EpsilonDecay::PerEpisode && !losses.is_empty() {
            schedule.step();
        }
        let greedy_survived = if config.greedy_probe {
            let steps = greedy_rollout(&online, tg, &config.reward, scenario, false)?;
            Some(steps.iter().filter(|(_, ok)| *ok).count())
        } else {
            None
        };
        log.episodes.push(EpisodeLog {
            episode,
            survived,
            ret: discounted_return(&rewards, gamma).to_f64_lossless(),
            epsilon,
            loss: (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64),
            greedy_survived,
        });
    }
    Ok(Trained {
        online,
        target,
        log,
        gradient_steps: optimizer.steps,
    })
}

/// Scenario seeds for an evaluation run.
pub fn evaluation_scenarios<T: Scalar>(
    tg: &TransformedGraph,
    count: usize,
    seed: u64,
    options: &ScenarioOptions,
) -> Vec<Scenario<T>> {
    let mut rng = stream_rng(seed, STREAM_SCENARIO);
    (0..count)
        .map(|_| generate_scenario(tg, rng.next_u64(), options))
        .collect()
}

/// Outcome of one evaluation MDP.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub steps: usize,
    pub feasible_steps: usize,
    pub full_length: bool,
    #[serde(rename = "return")]
    pub ret: f64,
    pub served_p: Vec<f64>,
    pub demand_p: Vec<f64>,
    /// Steps whose applied configuration was infeasible.
    pub hard_violations: usize,
    /// Steps with at least one bus outside the voltage band.
    pub voltage_violation_steps: usize,
    /// Steps with at least one overloaded line.
    pub branch_violation_steps: usize,
    /// Whether any switch exceeded its operation limit.
    pub switch_violation: bool,
    pub switch_operations: u32,
    #[serde(skip)]
    pub decision_ms: Vec<f64>,
}

/// Aggregates over evaluation scenarios.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalMetrics {
    pub scenarios: usize,
    pub decisions: usize,
    pub guard_on: bool,
    pub hard_violation_rate: f64,
    pub voltage_violation_rate: f64,
    pub switch_violation_rate: f64,
    pub branch_violation_rate: f64,
    pub full_length_rate: f64,
    pub mean_return: f64,
    pub mean_feasible_steps: f64,
    pub mean_decision_ms: f64,
    #[serde(skip)]
    pub per_scenario: Vec<ScenarioResult>,
}

impl EvalMetrics {
    fn aggregate(per_scenario: Vec<ScenarioResult>, guard_on: bool) -> Self {
        let n = per_scenario.len();
        let decisions: usize = per_scenario.iter().map(|s| s.steps).sum();
        let rate = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let sum = |f: &dyn Fn(&ScenarioResult) -> usize| per_scenario.iter().map(f).sum::<usize>();
        let ms: Vec<f64> = per_scenario
            .iter()
            .flat_map(|s| s.decision_ms.iter().copied())
            .collect();
        Self {
            scenarios: n,
            decisions,
            guard_on,
            hard_violation_rate: rate(sum(&|s| s.hard_violations), decisions),
            voltage_violation_rate: rate(sum(&|s| s.voltage_violation_steps), decisions),
            switch_violation_rate: rate(sum(&|s| usize::from(s.switch_violation)), n),
            branch_violation_rate: rate(sum(&|s| s.branch_violation_steps), decisions),
            full_length_rate: rate(sum(&|s| usize::from(s.full_length)), n),
            mean_return: if n == 0 {
                0.0
            } else {
                per_scenario.iter().map(|s| s.ret).sum::<f64>() / n as f64
            },
            mean_feasible_steps: rate(sum(&|s| s.feasible_steps), n),
            mean_decision_ms: if ms.is_empty() {
                0.0
            } else {
                ms.iter().sum::<f64>() / ms.len() as f64
            },
            per_scenario,
        }
    }

    /// Summary metrics as pretty JSON; per-scenario detail is omitted.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}

/// Runs one MDP with the greedy policy and records its outcome.
pub fn run_scenario<T: Scalar>(
    net: &QNetwork<T>,
    tg: &TransformedGraph,
    reward: &RewardConfig,
    scenario: Scenario<T>,
    guard_on: bool,
) -> Result<ScenarioResult> {
    let k = tg.required_closed_count()?;
    let horizon = scenario.len();
    let gamma = T::of(reward.gamma);
    let mut env = Environment::reset(tg, reward, scenario)?;
    let mut res = ScenarioResult {
        steps: 0,
        feasible_steps: 0,
        full_length: false,
        ret: 0.0,
        served_p: Vec::new(),
        demand_p: Vec::new(),
        hard_violations: 0,
        voltage_violation_steps: 0,
        branch_violation_steps: 0,
        switch_violation: false,
        switch_operations: 0,
        decision_ms: Vec::new(),
    };
    let mut rewards = Vec::with_capacity(horizon);
    while !env.is_finished() {
        let start = Instant::now();
        let state = env.state();
        let input = build_input(
            tg,
            env.normalizer(),
            &state.cfg,
            &state.injections,
            &state.op_counts,
            env.params().n_step.to_f64_lossless(),
        );
        let action = decode_action(&net.forward(&input)?, k);
        res.decision_ms.push(start.elapsed().as_secs_f64() * 1e3);
        let out = env.step(&action, guard_on)?;
        let b = &out.info.reward.breakdown;
        res.steps += 1;
        if out.info.reward.topo_ok {
            res.feasible_steps += 1;
        } else {
            res.hard_violations += 1;
        }
        res.voltage_violation_steps += usize::from(b.voltage_violations > 0);
        res.branch_violation_steps += usize::from(b.branch_violations > 0);
        res.switch_violation |= b.switch_violations > 0;
        res.switch_operations += out.info.switch_ops.iter().sum::<u32>();
        res.served_p.push(out.info.served_p().to_f64_lossless());
        res.demand_p.push(
            out.info
                .served
                .iter()
                .map(|s| s.demand_p)
                .sum::<T>()
                .to_f64_lossless(),
        );
        rewards.push(out.reward);
    }
    res.full_length = res.feasible_steps == horizon;
    res.ret = discounted_return(&rewards, gamma).to_f64_lossless();
    Ok(res)
}

/// Evaluates the greedy policy on each scenario in parallel.
pub fn evaluate<T: Scalar>(
    net: &QNetwork<T>,
    tg: &TransformedGraph,
    reward: &RewardConfig,
    scenarios: &[Scenario<T>],
    guard_on: bool,
) -> Result<EvalMetrics> {
    let per: Vec<ScenarioResult> = scenarios
        .par_iter()
        .map(|s| run_scenario(net, tg, reward, s.clone(), guard_on))
        .collect::<Result<_>>()?;
    Ok(EvalMetrics::aggregate(per, guard_on))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr(reward: f64, done: bool, tag: usize) -> Transition<f64> {
        Transition {
            state_input: InputTensor::zeros(2),
            action: SwitchConfig::from_closed(2, [tag % 2]),
            reward,
            next_input: InputTensor::zeros(2),
            done,
            terminal: done,
        }
    }

    #[test]
    fn record_filters() {
        let mut b = ReplayBuffers::new(10, [1, 1, 1], 0.5);
        b.record(tr(0.5, false, 0));
        assert_eq!((b.memory1.len(), b.memory2.len(), b.memory3.len()), (1, 1, 1));
        b.record(tr(0.2, true, 1));
        assert_eq!((b.memory1.len(), b.memory2.len(), b.memory3.len()), (2, 1, 1));
    }

    #[test]
    fn ring_keeps_newest() {
        let mut b = ReplayBuffers::new(1, [1, 0, 0], 0.5);
        b.record(tr(0.1, false, 0));
        b.record(tr(0.2, false, 1));
        assert_eq!(b.memory1.len(), 1);
        assert_eq!(b.memory1[0].reward, 0.2);
    }

    #[test]
    fn sampling_composition_and_determinism() {
        let mut b = ReplayBuffers::new(100, [8, 4, 4], 0.5);
        for i in 0..40 {
            b.record(tr(i as f64 / 40.0, i % 3 == 0, i));
        }
        let s1 = b.sample_minibatch(&mut stream_rng(5, 0)).unwrap();
        let s2 = b.sample_minibatch(&mut stream_rng(5, 0)).unwrap();
        assert_eq!(s1.len(), 16);
        assert!(s1.iter().zip(&s2).all(|(a, b)| Arc::ptr_eq(a, b)));
        assert!(s1[8..12].iter().all(|t| t.reward >= 0.5));
        assert!(s1[12..].iter().all(|t| !t.done));

        b.batch_sizes = [4, 0, 0];
        assert_eq!(b.sample_minibatch(&mut stream_rng(1, 0)).unwrap().len(), 4);
    }

    #[test]
    fn underfilled_is_not_ready() {
        let mut b = ReplayBuffers::new(10, [2, 1, 1], 0.5);
        b.record(tr(0.9, false, 0));
        let err = b.sample_minibatch(&mut stream_rng(0, 0)).unwrap_err();
        assert_eq!(err.to_string(), "replay not ready");
    }

    #[test]
    fn epsilon_schedule() {
        let mut s = ExplorationSchedule {
            epsilon: 1.0,
            k: 0.995,
            epsilon_min: 0.1,
        };
        s.step();
        assert_eq!(s.epsilon, 0.995);
        s.epsilon = 0.1005;
        s.step();
        assert_eq!(s.epsilon, 0.1);
        s.step();
        assert_eq!(s.epsilon, 0.1);
    }

    #[test]
    fn greedy_when_epsilon_zero() {
        let arch = Architecture::new(4, 4, KernelPreset::K3);
        let net = QNetwork::<f64>::new(arch, 9);
        let x = InputTensor::from_rows(std::array::from_fn(|r| vec![r as f64 / 5.0; 4]));
        let greedy = decode_action(&net.forward(&x).unwrap(), 2);
        let s = ExplorationSchedule {
            epsilon: 0.0,
            k: 0.5,
            epsilon_min: 0.0,
        };
        let mut rng = stream_rng(1, 0);
        for _ in 0..20 {
            assert_eq!(select_action(&s, &net, &x, 2, &mut rng).unwrap(), greedy);
        }
    }

    #[test]
    fn discounted_return_matches_closed_form() {
        assert_eq!(discounted_return(&[1.0, 1.0, 1.0], 0.5), 1.75);
        assert_eq!(discounted_return::<f64>(&[], 0.9), 0.0);
    }

    #[test]
    fn config_defaults_and_overrides() {
        let c =
            TrainConfig::from_json(r#"{"episodes": 3, "target_sync": {"mode": "periodic", "every": 50}}"#)
                .unwrap();
        assert_eq!(c.episodes, 3);
        assert_eq!(c.batch_sizes, [16, 8, 8]);
        assert_eq!(c.target_sync, TargetSync::Periodic { every: 50 });
        assert_eq!(c.r_std(), 0.5);
        assert!(TrainConfig::from_json(r#"{"episode": 3}"#).is_err());
    }

    #[test]
    fn empty_evaluation() {
        let m = EvalMetrics::aggregate(Vec::new(), true);
        assert_eq!(m.scenarios, 0);
        assert_eq!(m.decisions, 0);
        assert_eq!(m.hard_violation_rate, 0.0);
    }
}
