//! Step reward: topology reward minus AC-flow, switching, and power-balance penalties.
//!
//! The term functions are generic over [`Field`] so they can be evaluated in
//! exact rational arithmetic as well as in the float scalar used by the
//! environment.

use serde::{Deserialize, Serialize};

use crate::powerflow::PfSolution;
use crate::scalar::{Field, Scalar};
use crate::topology::TransformedGraph;

/// Reward magnitudes and limits. Stored as `f64` and converted per use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// Feasibility reward magnitude (paid as `+r_topo` or `-r_topo`).
    pub r_topo: f64,
    /// Penalty per bus outside `[v_min, v_max]`.
    pub p_vol: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// Divisor for branch overflow penalties.
    pub b_base: f64,
    /// Operations allowed per switch before it is penalized.
    pub s_upp: u32,
    /// Normalizer for the switching penalty; `None` uses the case horizon.
    pub n_step: Option<f64>,
    /// Discount factor.
    pub gamma: f64,
    /// Penalty for an island whose power flow does not converge.
    pub p_nc: f64,
    /// Weight on island active loss.
    pub loss_weight: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            r_topo: 1.0,
            p_vol: 0.05,
            v_min: 0.95,
            v_max: 1.05,
            b_base: 1.0,
            s_upp: 4,
            n_step: None,
            gamma: 0.95,
            p_nc: 1.0,
            loss_weight: 1.0,
        }
    }
}

/// [`RewardConfig`] converted to a concrete field.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardParams<R> {
    pub r_topo: R,
    pub p_vol: R,
    pub v_min: R,
    pub v_max: R,
    pub b_base: R,
    pub s_upp: u32,
    pub n_step: R,
    pub p_nc: R,
    pub loss_weight: R,
}

impl RewardConfig {
    pub fn params<T: Scalar>(&self, horizon: usize) -> RewardParams<T> {
        RewardParams {
            r_topo: T::of(self.r_topo),
            p_vol: T::of(self.p_vol),
            v_min: T::of(self.v_min),
            v_max: T::of(self.v_max),
            b_base: T::of(self.b_base),
            s_upp: self.s_upp,
            n_step: T::of(self.n_step.unwrap_or(horizon as f64)),
            p_nc: T::of(self.p_nc),
            loss_weight: T::of(self.loss_weight),
        }
    }
}

/// Per-island quantities the reward needs from a power-flow solution.
#[derive(Debug, Clone, PartialEq)]
pub struct IslandTerms<R> {
    pub converged: bool,
    pub voltages: Vec<R>,
    pub loss_p: R,
    /// `(|S|, upper bound)` per closed line.
    pub flows: Vec<(R, R)>,
    pub load_p: R,
    pub dg_p: R,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewardBreakdown<R> {
    pub f_topo: R,
    /// AC-flow penalty per island.
    pub f_ac: Vec<R>,
    pub f_swi: R,
    /// Power-balance penalty per island.
    pub f_pb: Vec<R>,
    /// Buses outside the voltage band.
    pub voltage_violations: usize,
    /// Lines above their flow limit.
    pub branch_violations: usize,
    /// Switches above the operation limit.
    pub switch_violations: usize,
    pub non_converged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reward<R> {
    pub value: R,
    /// `S_topo`: whether the configuration formed radial microgrids.
    pub topo_ok: bool,
    pub breakdown: RewardBreakdown<R>,
}

fn of<R: Field>(n: u32) -> R {
    R::from_u32(n).expect("small integers are representable")
}

pub fn topology_reward<R: Field>(feasible: bool, r_topo: &R) -> R {
    if feasible {
        r_topo.clone()
    } else {
        R::zero() - r_topo.clone()
    }
}

/// Zero inside the closed band `[v_min, v_max]`, `p_vol` outside.
pub fn voltage_penalty<R: Field>(v: &R, v_min: &R, v_max: &R, p_vol: &R) -> R {
    if v_min <= v && v <= v_max {
        R::zero()
    } else {
        p_vol.clone()
    }
}

/// `(flow - limit) / b_base` above the limit, zero otherwise.
pub fn branch_penalty<R: Field>(flow: &R, limit: &R, b_base: &R) -> R {
    if flow > limit {
        (flow.clone() - limit.clone()) / b_base.clone()
    } else {
        R::zero()
    }
}

/// Zero while cumulative operations stay within `s_upp`, then `ops / n_step`.
pub fn switch_penalty<R: Field>(ops: u32, s_upp: u32, n_step: &R) -> R {
    if ops <= s_upp {
        R::zero()
    } else {
        of::<R>(ops) / n_step.clone()
    }
}

/// Generation deficiency `M = load + loss - dg`.
pub fn deficiency<R: Field>(load_p: &R, loss_p: &R, dg_p: &R) -> R {
    load_p.clone() + loss_p.clone() - dg_p.clone()
}

/// `max(0, M)`.
pub fn balance_penalty<R: Field>(m: &R) -> R {
    if *m > R::zero() {
        m.clone()
    } else {
        R::zero()
    }
}

/// Assembles the step reward. `islands` is ignored when `feasible` is false.
pub fn assemble_reward<R: Field>(
    params: &RewardParams<R>,
    feasible: bool,
    islands: &[IslandTerms<R>],
    op_counts: &[u32],
) -> Reward<R> {
    let f_topo = topology_reward(feasible, &params.r_topo);
    if !feasible {
        return Reward {
            value: f_topo.clone(),
            topo_ok: false,
            breakdown: RewardBreakdown {
                f_topo,
                f_ac: Vec::new(),
                f_swi: R::zero(),
                f_pb: Vec::new(),
                voltage_violations: 0,
                branch_violations: 0,
                switch_violations: 0,
                non_converged: 0,
            },
        };
    }

    let mut voltage_violations = 0;
    let mut branch_violations = 0;
    let mut non_converged = 0;
    let mut f_ac = Vec::with_capacity(islands.len());
    let mut f_pb = Vec::with_capacity(islands.len());
    for island in islands {
        if island.converged {
            let mut vol = R::zero();
            for v in &island.voltages {
                let p = voltage_penalty(v, &params.v_min, &params.v_max, &params.p_vol);
                if p != R::zero() {
                    voltage_violations += 1;
                }
                vol = vol + p;
            }
            let mut bran = R::zero();
            for (flow, limit) in &island.flows {
                if flow > limit {
                    branch_violations += 1;
                }
                bran = bran + branch_penalty(flow, limit, &params.b_base);
            }
            f_ac.push(vol + params.loss_weight.clone() * island.loss_p.clone() + bran);
            let m = deficiency(&island.load_p, &island.loss_p, &island.dg_p);
            f_pb.push(balance_penalty(&m));
        } else {
            non_converged += 1;
            f_ac.push(params.p_nc.clone());
            let m = deficiency(&island.load_p, &R::zero(), &island.dg_p);
            f_pb.push(balance_penalty(&m));
        }
    }

    let mut switch_violations = 0;
    let mut f_swi = R::zero();
    for &ops in op_counts {
        if ops > params.s_upp {
            switch_violations += 1;
        }
        f_swi = f_swi + switch_penalty(ops, params.s_upp, &params.n_step);
    }

    let breakdown = RewardBreakdown {
        f_topo,
        f_ac,
        f_swi,
        f_pb,
        voltage_violations,
        branch_violations,
        switch_violations,
        non_converged,
    };
    Reward {
        value: breakdown.recombine(),
        topo_ok: true,
        breakdown,
    }
}

impl<R: Field> RewardBreakdown<R> {
    /// `f_topo - Σ f_ac - f_swi - Σ f_pb`, in a fixed evaluation order.
    pub fn recombine(&self) -> R {
        let mut r = self.f_topo.clone();
        for x in &self.f_ac {
            r = r - x.clone();
        }
        r = r - self.f_swi.clone();
        for x in &self.f_pb {
            r = r - x.clone();
        }
        r
    }
}

/// Extracts the reward inputs of every island from a power-flow solution.
pub fn island_terms<T: Scalar>(tg: &TransformedGraph, pf: &PfSolution<T>) -> Vec<IslandTerms<T>> {
    let lines = &tg.case().lines;
    pf.islands
        .iter()
        .map(|s| IslandTerms {
            converged: s.converged,
            voltages: s.v.clone(),
            loss_p: s.loss_p,
            flows: s
                .lines
                .iter()
                .zip(&s.branch_s)
                .map(|(&l, &f)| (f, T::of(lines[l].flow_limit)))
                .collect(),
            load_p: s.load_p,
            dg_p: s.dg_p,
        })
        .collect()
}

/// Reward of a configuration given its power flow (`None` when infeasible).
pub fn reward<T: Scalar>(
    tg: &TransformedGraph,
    params: &RewardParams<T>,
    op_counts: &[u32],
    pf: Option<&PfSolution<T>>,
) -> Reward<T> {
    match pf {
        Some(pf) => assemble_reward(params, true, &island_terms(tg, pf), op_counts),
        None => assemble_reward(params, false, &[], op_counts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rational;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    fn params() -> RewardParams<Rational> {
        RewardParams {
            r_topo: r(1, 1),
            p_vol: r(5, 100),
            v_min: r(95, 100),
            v_max: r(105, 100),
            b_base: r(1, 1),
            s_upp: 4,
            n_step: r(20, 1),
            p_nc: r(1, 1),
            loss_weight: r(1, 1),
        }
    }

    fn clean_island() -> IslandTerms<Rational> {
        IslandTerms {
            converged: true,
            voltages: vec![r(1, 1), r(98, 100)],
            loss_p: r(0, 1),
            flows: vec![(r(1, 2), r(1, 1))],
            load_p: r(4, 10),
            dg_p: r(1, 1),
        }
    }

    #[test]
    fn infeasible_pays_minus_r_topo() {
        let out = assemble_reward(&params(), false, &[], &[0; 8]);
        assert_eq!(out.value, r(-1, 1));
        assert!(!out.topo_ok);
    }

    #[test]
    fn clean_feasible_pays_exactly_r_topo() {
        let out = assemble_reward(&params(), true, &[clean_island(), clean_island()], &[1; 8]);
        assert_eq!(out.value, r(1, 1));
        assert_eq!(out.breakdown.f_ac, vec![r(0, 1), r(0, 1)]);
    }

    #[test]
    fn deficiency_example() {
        let m = deficiency(&r(1, 2), &r(1, 100), &r(45, 100));
        assert_eq!(balance_penalty(&m), r(6, 100));
        assert_eq!(balance_penalty(&r(-1, 10)), r(0, 1));
    }

    #[test]
    fn float_deficiency_example() {
        let m = deficiency(&0.5f64, &0.01, &0.45);
        assert!((balance_penalty(&m) - 0.06).abs() < 1e-15);
    }

    #[test]
    fn non_converged_island_is_penalized_not_terminal() {
        let mut island = clean_island();
        island.converged = false;
        let out = assemble_reward(&params(), true, &[island], &[0]);
        assert!(out.topo_ok);
        assert_eq!(out.breakdown.non_converged, 1);
        assert_eq!(out.value, r(0, 1));
    }

    #[test]
    fn switch_penalty_starts_after_limit() {
        let n = r(20, 1);
        for ops in 0..=4 {
            assert_eq!(switch_penalty(ops, 4, &n), r(0, 1));
        }
        assert_eq!(switch_penalty(5, 4, &n), r(5, 20));
    }

    #[test]
    fn recombine_matches_value() {
        let mut island = clean_island();
        island.voltages.push(r(90, 100));
        island.flows.push((r(3, 2), r(1, 1)));
        island.loss_p = r(1, 50);
        island.dg_p = r(3, 10);
        let out = assemble_reward(&params(), true, &[island, clean_island()], &[6, 0]);
        assert_eq!(out.value, out.breakdown.recombine());
        // 1 - (0.05 + 0.02 + 0.5) - 0 - 6/20 - (0.4 + 0.02 - 0.3)
        assert_eq!(out.value, r(1, 1) - r(57, 100) - r(6, 20) - r(12, 100));
        assert_eq!(out.breakdown.voltage_violations, 1);
        assert_eq!(out.breakdown.branch_violations, 1);
        assert_eq!(out.breakdown.switch_violations, 1);
    }
}
