//! Bundled problem instances: the admission-control demo, the 2-state
//! closed-form benchmark, and seeded random small instances for the
//! comparison experiments.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{
    ActionGrid, ControlledGenerator, CostSpec, LyapunovSpec, ModelSpec, RunningCost,
};

/// Admission-control birth–death chain on 10 states (state = queue
/// length + 1). Arrivals at rate 1, service at the chosen rate
/// u ∈ {0.5, 1, 2}, holding plus effort running cost, linear terminal
/// cost. Satisfies H1 (M = 3), H2 (Φ(i) = i, λ₀ = κ₀ = 1, B₀ = {1}),
/// and H3 (K = 1) by construction.
pub fn demo_model() -> ModelSpec {
    demo_model_sized(10)
}

/// The demo chain truncated to `n_states` states (used by the oracle
/// experiment, which needs a small state space).
pub fn demo_model_sized(n_states: usize) -> ModelSpec {
    let service_rates = [0.5, 1.0, 2.0];
    let grid = ActionGrid::scalar(&service_rates).expect("demo grid");
    let mut triplets = Vec::new();
    for i in 0..n_states {
        for (u, &rate) in service_rates.iter().enumerate() {
            if i + 1 < n_states {
                triplets.push((i, i + 1, u, 1.0));
            }
            if i > 0 {
                triplets.push((i, i - 1, u, rate));
            }
        }
    }
    let gen = ControlledGenerator::from_triplets(n_states, 3, &triplets, 1).expect("demo rates");
    let holding = 0.1;
    let effort = 0.05;
    // exact maxima of the finite data
    let c1 = holding * (n_states - 1) as f64 + effort * 2.0;
    let c2 = 0.2 * (n_states - 1) as f64;
    let costs = CostSpec {
        running: RunningCost::HoldingEffort { holding, effort },
        terminal: (0..n_states).map(|i| 0.2 * i as f64).collect(),
        c0: 0.0,
        c1,
        c2,
    };
    let lyapunov = LyapunovSpec {
        phi: (1..=n_states).map(|i| i as f64).collect(),
        lambda0: 1.0,
        kappa0: 1.0,
        b0: vec![0],
    };
    ModelSpec::new(n_states, 1.0, grid, gen, costs, Some(lyapunov)).expect("demo model")
}

/// Uncontrolled 2-state chain with q₁₂ = q₂₁ = 1, f ≡ 0, g = (0, 1),
/// T = 1. Its value has the closed form V(s, 1) = (1 − e^{−2(T−s)})/2.
pub fn two_state_closed_form() -> ModelSpec {
    let grid = ActionGrid::scalar(&[1.0]).expect("grid");
    let gen = ControlledGenerator::from_triplets(2, 1, &[(0, 1, 0, 1.0), (1, 0, 0, 1.0)], 1)
        .expect("rates");
    let costs = CostSpec {
        running: RunningCost::Constant { c: 0.0 },
        terminal: vec![0.0, 1.0],
        c0: 0.0,
        c1: 0.0,
        c2: 1.0,
    };
    let lyapunov = LyapunovSpec {
        phi: vec![1.0, 1.0],
        lambda0: 1.0,
        kappa0: 0.0,
        b0: vec![],
    };
    ModelSpec::new(2, 1.0, grid, gen, costs, Some(lyapunov)).expect("closed-form model")
}

/// V(s, 1) of [`two_state_closed_form`], the scalar oracle used across
/// the solver and simulator tests.
pub fn two_state_value(s: f64) -> f64 {
    (1.0 - (-2.0 * (1.0 - s)).exp()) / 2.0
}

/// Seeded random instance with n_states ≤ 5 and 2–3 actions: banded
/// nonnegative rates, state-plus-action running cost (time-independent),
/// random nonnegative terminal cost. Bounds are set to the exact maxima.
pub fn random_small_instance(seed: u64) -> ModelSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_states = rng.gen_range(2..=5usize);
    let n_actions = rng.gen_range(2..=3usize);
    let bandwidth = rng.gen_range(1..=2usize);
    let mut action_vals = Vec::new();
    while action_vals.len() < n_actions {
        let v: f64 = rng.gen_range(0.0..3.0);
        if action_vals.iter().all(|&x: &f64| (x - v).abs() > 1e-3) {
            action_vals.push(v);
        }
    }
    let grid = ActionGrid::scalar(&action_vals).expect("random grid");

    let mut triplets = Vec::new();
    for i in 0..n_states {
        for u in 0..n_actions {
            for j in i.saturating_sub(bandwidth)..(i + bandwidth + 1).min(n_states) {
                if j != i && rng.gen_bool(0.8) {
                    triplets.push((i, j, u, rng.gen_range(0.0..2.0)));
                }
            }
        }
    }
    let gen = ControlledGenerator::from_triplets(n_states, n_actions, &triplets, bandwidth)
        .expect("random rates");

    // f(t, i, u) = a_i + b_u, frozen into a 2-node table
    let a: Vec<f64> = (0..n_states).map(|_| rng.gen_range(0.0..1.0)).collect();
    let b: Vec<f64> = (0..n_actions).map(|_| rng.gen_range(0.0..0.5)).collect();
    let row: Vec<Vec<f64>> = (0..n_states)
        .map(|i| (0..n_actions).map(|u| a[i] + b[u]).collect())
        .collect();
    let c1 = row
        .iter()
        .flat_map(|r| r.iter().copied())
        .fold(0.0_f64, f64::max);
    let terminal: Vec<f64> = (0..n_states).map(|_| rng.gen_range(0.0..1.0)).collect();
    let c2 = terminal.iter().copied().fold(0.0_f64, f64::max);
    let costs = CostSpec {
        running: RunningCost::Table {
            times: vec![0.0, 1.0],
            values: vec![row.clone(), row],
        },
        terminal,
        c0: 0.0,
        c1,
        c2,
    };
    ModelSpec::new(n_states, 1.0, grid, gen, costs, None).expect("random model")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate;

    #[test]
    fn demo_satisfies_all_assumptions() {
        let model = demo_model();
        let report = validate(&model);
        assert!(report.h1_pass);
        assert_eq!(report.rate_bound, 3.0);
        assert!(report.h2_checked && report.h2_pass);
        assert!(report.h3_pass);
        assert_eq!(report.bandwidth_declared, 1);
    }

    #[test]
    fn demo_drift_enumeration() {
        // drift = 1_{i<10} - u·1_{i>1} <= 1 <= Φ(i) for every (i, u)
        let model = demo_model();
        let gen = model.generator();
        let ly = model.lyapunov().unwrap();
        for i in 0..model.n_states() {
            for u in 0..3 {
                let drift: f64 = gen
                    .neighbors(i, u)
                    .iter()
                    .map(|&(j, q)| q * (ly.phi[j] - ly.phi[i]))
                    .sum();
                assert!(drift <= ly.lambda0 * ly.phi[i] + if i == 0 { ly.kappa0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn demo_cost_bounds_are_exact_maxima() {
        let model = demo_model();
        assert_eq!(model.costs().c1, 1.0);
        assert_eq!(model.costs().c2, 1.8);
        let mut worst: f64 = 0.0;
        for i in 0..10 {
            for u in 0..3 {
                worst = worst.max(model.running_cost(0.5, i, u));
            }
        }
        assert_eq!(worst, model.costs().c1);
    }

    #[test]
    fn random_instances_are_valid() {
        for seed in 0..30 {
            let model = random_small_instance(seed);
            let report = validate(&model);
            assert!(report.h1_pass && report.h3_pass, "seed {seed}");
            assert!(model.n_states() <= 5);
        }
    }
}
