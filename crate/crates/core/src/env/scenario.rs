//! Uncertain DG output scenarios.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::powerflow::InjectionSet;
use crate::scalar::Scalar;
use crate::topology::TransformedGraph;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioOptions {
    /// Forecast error covered by three standard deviations (0.2 = 20 %).
    pub forecast_error: f64,
    /// Apply the same draw rule to loads.
    pub perturb_loads: bool,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        Self {
            forecast_error: 0.2,
            perturb_loads: false,
        }
    }
}

/// One injection set per step of the horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario<T> {
    pub steps: Vec<InjectionSet<T>>,
}

impl<T: Scalar> Scenario<T> {
    /// The expected trajectories without noise.
    pub fn nominal(tg: &TransformedGraph) -> Self {
        Self {
            steps: (0..tg.case().horizon_steps)
                .map(|t| InjectionSet::expected(tg, t))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Draws `Normal(mean, sigma)` with `3 sigma = error * mean`, rejecting
/// samples beyond three sigma, then clips to `[0, cap]`.
pub(crate) fn draw(rng: &mut ChaCha8Rng, mean: f64, error: f64, cap: f64) -> f64 {
    let sigma = (error * mean / 3.0).abs();
    if sigma == 0.0 {
        return mean.clamp(0.0, cap);
    }
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 3.0 {
            return (mean + sigma * z).clamp(0.0, cap);
        }
    }
}

/// Samples a scenario; identical seeds give identical trajectories.
pub fn generate_scenario<T: Scalar>(
    tg: &TransformedGraph,
    seed: u64,
    options: &ScenarioOptions,
) -> Scenario<T> {
    let case = tg.case();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let err = options.forecast_error;
    let steps = (0..case.horizon_steps)
        .map(|t| {
            let mut p_dg = Vec::with_capacity(case.dgs.len());
            let mut q_dg = Vec::with_capacity(case.dgs.len());
            for dg in &case.dgs {
                p_dg.push(T::of(draw(&mut rng, dg.p_expected[t], err, dg.p_max)));
                q_dg.push(T::of(draw(&mut rng, dg.q_expected[t], err, dg.q_max)));
            }
            let (p_load, q_load) = if options.perturb_loads {
                case.loads
                    .iter()
                    .map(|l| {
                        (
                            T::of(draw(&mut rng, l.p, err, f64::INFINITY)),
                            T::of(draw(&mut rng, l.q, err, f64::INFINITY)),
                        )
                    })
                    .unzip()
            } else {
                case.loads.iter().map(|l| (T::of(l.p), T::of(l.q))).unzip()
            };
            InjectionSet {
                p_dg,
                q_dg,
                p_load,
                q_load,
            }
        })
        .collect();
    Scenario { steps }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_mean_is_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(draw(&mut rng, 0.0, 0.2, 5.0), 0.0);
        }
    }

    #[test]
    fn draws_stay_within_three_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for _ in 0..20_000 {
            let x = draw(&mut rng, 1.0, 0.2, 10.0);
            lo = lo.min(x);
            hi = hi.max(x);
        }
        assert!(lo >= 0.8 && hi <= 1.2, "{lo} {hi}");
        // The tails are reached.
        assert!(lo < 0.85 && hi > 1.15);
    }

    #[test]
    fn draws_are_clipped_to_capacity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert!(draw(&mut rng, 1.0, 0.2, 1.05) <= 1.05);
        }
    }
}
