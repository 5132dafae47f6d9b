//! Backward/forward-sweep AC power flow on radial islands.
//!
//! Each island is solved independently with its DG bus as the slack
//! (`V = 1.0 ∠ 0` p.u.). Loads are constant-power injections.

use num_complex::Complex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::topology::{Island, SwitchConfig, TransformedGraph};

/// DG availability and load demand at one time step (p.u.).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InjectionSet<T> {
    /// Available DG output, indexed like `case.dgs`.
    pub p_dg: Vec<T>,
    pub q_dg: Vec<T>,
    /// Demand, indexed like `case.loads`.
    pub p_load: Vec<T>,
    pub q_load: Vec<T>,
}

impl<T: Scalar> InjectionSet<T> {
    /// Nominal loads, DG output taken from the expected trajectory at `step`.
    pub fn expected(tg: &TransformedGraph, step: usize) -> Self {
        let case = tg.case();
        Self {
            p_dg: case.dgs.iter().map(|d| T::of(d.p_expected[step])).collect(),
            q_dg: case.dgs.iter().map(|d| T::of(d.q_expected[step])).collect(),
            p_load: case.loads.iter().map(|l| T::of(l.p)).collect(),
            q_load: case.loads.iter().map(|l| T::of(l.q)).collect(),
        }
    }

    /// Copy with every load scaled to zero.
    pub fn without_loads(&self) -> Self {
        Self {
            p_load: vec![T::zero(); self.p_load.len()],
            q_load: vec![T::zero(); self.q_load.len()],
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSettings {
    /// Largest complex voltage change between sweeps accepted as converged.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 100,
        }
    }
}

/// Power-flow result for one island.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IslandSolution<T> {
    pub dg: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Member bus indices; `v` is aligned with it.
    pub buses: Vec<usize>,
    /// Voltage magnitudes. Only meaningful when `converged`.
    pub v: Vec<T>,
    /// Voltage angles (rad), aligned with `buses`.
    pub angle: Vec<T>,
    /// Closed line indices; `branch_s` is aligned with it.
    pub lines: Vec<usize>,
    /// Sending-end apparent power `|S|` of each line.
    pub branch_s: Vec<T>,
    pub loss_p: T,
    pub loss_q: T,
    /// Active and reactive power drawn from the slack DG.
    pub slack_p: T,
    pub slack_q: T,
    /// Total island demand.
    pub load_p: T,
    pub load_q: T,
    /// Available DG active output in the island.
    pub dg_p: T,
}

impl<T: Scalar> IslandSolution<T> {
    /// Generation deficiency `M = load + loss - DG`; loss counts as zero if not converged.
    pub fn deficiency(&self) -> T {
        let loss = if self.converged { self.loss_p } else { T::zero() };
        self.load_p + loss - self.dg_p
    }

    pub fn voltage_of(&self, bus: usize) -> Option<T> {
        self.buses.iter().position(|&b| b == bus).map(|i| self.v[i])
    }

    /// Complex voltage profile usable as a warm start, aligned with `buses`.
    pub fn complex_voltages(&self) -> Vec<Complex<T>> {
        self.v
            .iter()
            .zip(&self.angle)
            .map(|(&m, &a)| Complex::from_polar(m, a))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PfSolution<T> {
    pub islands: Vec<IslandSolution<T>>,
}

impl<T: Scalar> PfSolution<T> {
    pub fn all_converged(&self) -> bool {
        self.islands.iter().all(|i| i.converged)
    }

    pub fn total_loss_p(&self) -> T {
        self.islands.iter().map(|i| i.loss_p).sum()
    }
}

/// Rooted-tree layout of an island.
struct Ladder<T> {
    /// Bus index per local node; local 0 is the DG bus.
    order: Vec<usize>,
    /// Local parent of each node (root points to itself).
    parent: Vec<usize>,
    /// Line index connecting each node to its parent.
    parent_line: Vec<usize>,
    z: Vec<Complex<T>>,
    load: Vec<Complex<T>>,
}

impl<T: Scalar> Ladder<T> {
    fn build(tg: &TransformedGraph, island: &Island, injections: &InjectionSet<T>) -> Self {
        let case = tg.case();
        let n = case.buses.len();
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for &i in &island.lines {
            let (a, b) = tg.line_ends(i);
            adj[a].push((b, i));
            adj[b].push((a, i));
        }
        let mut local = vec![usize::MAX; n];
        let mut order = vec![island.dg_bus];
        let mut parent = vec![0];
        let mut parent_line = vec![usize::MAX];
        local[island.dg_bus] = 0;
        let mut head = 0;
        while head < order.len() {
            let u = order[head];
            for &(v, line) in &adj[u] {
                if local[v] == usize::MAX {
                    local[v] = order.len();
                    order.push(v);
                    parent.push(head);
                    parent_line.push(line);
                }
            }
            head += 1;
        }
        debug_assert_eq!(order.len(), island.buses.len(), "island must be connected");
        let z = parent_line
            .iter()
            .map(|&i| {
                if i == usize::MAX {
                    Complex::new(T::zero(), T::zero())
                } else {
                    let l = &case.lines[i];
                    Complex::new(T::of(l.r), T::of(l.x))
                }
            })
            .collect();
        let mut load = vec![Complex::new(T::zero(), T::zero()); order.len()];
        for (j, &bus) in tg.load_buses().iter().enumerate() {
            if local[bus] != usize::MAX {
                load[local[bus]] += Complex::new(injections.p_load[j], injections.q_load[j]);
            }
        }
        Self {
            order,
            parent,
            parent_line,
            z,
            load,
        }
    }

    /// Branch current into each node from its parent (root entry: total slack current).
    fn backward(&self, v: &[Complex<T>], current: &mut [Complex<T>]) {
        for (i, c) in current.iter_mut().enumerate() {
            *c = (self.load[i] / v[i]).conj();
        }
        for i in (1..self.order.len()).rev() {
            let p = self.parent[i];
            let c = current[i];
            current[p] += c;
        }
    }

    fn forward(&self, current: &[Complex<T>], v: &mut [Complex<T>]) {
        for i in 1..self.order.len() {
            v[i] = v[self.parent[i]] - self.z[i] * current[i];
        }
    }
}

/// Solves one radial island by backward/forward sweep.
///
/// `warm_start` is an optional complex voltage profile aligned with `island.buses`.
pub fn solve_island<T: Scalar>(
    tg: &TransformedGraph,
    island: &Island,
    injections: &InjectionSet<T>,
    settings: &SweepSettings,
    warm_start: Option<&[Complex<T>]>,
) -> IslandSolution<T> {
    let ladder = Ladder::build(tg, island, injections);
    let m = ladder.order.len();
    let one = Complex::new(T::one(), T::zero());
    let mut v = vec![one; m];
    if let Some(ws) = warm_start {
        for (i, &bus) in ladder.order.iter().enumerate().skip(1) {
            if let Some(p) = island.buses.iter().position(|&b| b == bus) {
                v[i] = ws[p];
            }
        }
    }
    let mut current = vec![Complex::new(T::zero(), T::zero()); m];
    let tol = T::of(settings.tolerance);
    let floor = T::of(1e-3);
    let mut converged = false;
    let mut iterations = 0;
    let mut next = v.clone();
    for it in 1..=settings.max_iterations {
        iterations = it;
        ladder.backward(&v, &mut current);
        ladder.forward(&current, &mut next);
        let mut mismatch = T::zero();
        let mut sane = true;
        for (a, b) in next.iter().zip(&v) {
            let d = (a - b).norm();
            if !d.is_finite() || a.norm() < floor {
                sane = false;
                break;
            }
            mismatch = mismatch.max(d);
        }
        std::mem::swap(&mut v, &mut next);
        if !sane {
            break;
        }
        if mismatch < tol {
            converged = true;
            break;
        }
    }

    let dg_p = injections.p_dg[island.dg];
    let load_p = ladder.load.iter().map(|s| s.re).sum();
    let load_q = ladder.load.iter().map(|s| s.im).sum();
    let mut branch_s = vec![T::zero(); island.lines.len()];
    let (mut loss_p, mut loss_q) = (T::zero(), T::zero());
    let mut slack = Complex::new(T::zero(), T::zero());
    if converged {
        ladder.backward(&v, &mut current);
        for i in 1..m {
            let s_from = v[ladder.parent[i]] * current[i].conj();
            let pos = island
                .lines
                .iter()
                .position(|&l| l == ladder.parent_line[i])
                .expect("ladder line belongs to island");
            branch_s[pos] = s_from.norm();
            let i2 = current[i].norm_sqr();
            loss_p += ladder.z[i].re * i2;
            loss_q += ladder.z[i].im * i2;
        }
        slack = v[0] * current[0].conj();
    }

    let mut magnitudes = vec![T::nan(); island.buses.len()];
    let mut angle = vec![T::nan(); island.buses.len()];
    for (i, &bus) in ladder.order.iter().enumerate() {
        let pos = island
            .buses
            .iter()
            .position(|&b| b == bus)
            .expect("bus in island");
        magnitudes[pos] = v[i].norm();
        angle[pos] = v[i].arg();
    }
    IslandSolution {
        dg: island.dg,
        converged,
        iterations,
        buses: island.buses.clone(),
        v: magnitudes,
        angle,
        lines: island.lines.clone(),
        branch_s,
        loss_p,
        loss_q,
        slack_p: slack.re,
        slack_q: slack.im,
        load_p,
        load_q,
        dg_p,
    }
}

/// Solves every island of a feasible configuration.
pub fn solve_all<T: Scalar>(
    tg: &TransformedGraph,
    cfg: &SwitchConfig,
    injections: &InjectionSet<T>,
    settings: &SweepSettings,
) -> Result<PfSolution<T>> {
    let set = tg.islands(cfg).map_err(|e| match e {
        Error::ConfigLength { .. } => e,
        _ => Error::InfeasibleConfiguration,
    })?;
    Ok(PfSolution {
        islands: set
            .islands
            .iter()
            .map(|island| solve_island(tg, island, injections, settings, None))
            .collect(),
    })
}
