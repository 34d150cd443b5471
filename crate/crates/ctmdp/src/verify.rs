//! Structural verification experiments: the dynamic programming
//! principle, the time-Lipschitz bound with its explicit constant, the
//! delay-no-gain property, and an independent brute-force value oracle
//! built from per-interval matrix exponentials (Feynman–Kac augmented
//! generator) instead of ODE stepping.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{CtmdpError, Result};
use crate::hjb::{scheme_tolerance, TimeGrid, ValueFunction};
use crate::model::ModelSpec;
use crate::policy::{
    feedback_from_value, random_delay_policy, splitmix64, DelayParams, DelayPolicy,
};
use crate::simulate::{
    integrate_cost_to, path_rng, sample_segment_with_rng, summarize, McEstimate,
};

/// Outcome of one verification experiment.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub quantities: BTreeMap<String, f64>,
    pub passed: bool,
    pub tolerance: f64,
    pub details: String,
}

/// Stopping-time family used by the DPP check: a deterministic time t₁,
/// or the first jump capped at t₁ (a stopping time of the path
/// filtration).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauKind {
    Deterministic(f64),
    FirstJumpCapped(f64),
}

impl TauKind {
    fn cap(&self) -> f64 {
        match self {
            TauKind::Deterministic(t1) | TauKind::FirstJumpCapped(t1) => *t1,
        }
    }
}

/// MC estimate of E[∫ₛ^τ f(t, Λ_t, μ_t) dt + V(τ, Λ_τ)] under one policy.
fn dpp_expectation(
    model: &ModelSpec,
    value: &ValueFunction,
    policy: &DelayPolicy,
    s: f64,
    i: usize,
    tau: TauKind,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    let refresh = value.grid().clone();
    let samples: Vec<Result<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = path_rng(seed, k as u64);
            let segment = sample_segment_with_rng(model, policy, s, i, &mut rng)?;
            let t1 = tau.cap();
            let tau_path = match tau {
                TauKind::Deterministic(_) => t1,
                TauKind::FirstJumpCapped(_) => segment.first_jump().map_or(t1, |j| j.min(t1)),
            };
            let running = integrate_cost_to(model, policy, &segment, &refresh, tau_path)?;
            Ok(running + value.interp(tau_path, segment.state_at(tau_path)))
        })
        .collect();
    let mut values = Vec::with_capacity(n_paths);
    for v in samples {
        values.push(v?);
    }
    Ok(summarize(&values, seed))
}

/// Dynamic programming check at (s, i): the HJB feedback attains
/// V(s, i) = E[∫ₛ^τ f dt + V(τ, Λ_τ)] within MC and scheme tolerance,
/// and 20 random delay policies satisfy the ≥ inequality.
pub fn dpp_check(
    model: &ModelSpec,
    value: &ValueFunction,
    s: f64,
    i: usize,
    tau: TauKind,
    n_paths: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    let t1 = tau.cap();
    if !(s < t1 && t1 <= model.horizon() + 1e-12) {
        return Err(CtmdpError::TimeOutOfRange(format!(
            "need s < t1 <= T, got s = {s}, t1 = {t1}, T = {}",
            model.horizon()
        )));
    }
    let tol = scheme_tolerance(model, value.grid().dt());
    let v_ref = value.interp(s, i);

    let feedback = feedback_from_value(value, model)?;
    let fb = dpp_expectation(model, value, &feedback, s, i, tau, n_paths, seed)?;
    let fb_gap = fb.mean - v_ref;
    let fb_ok = fb_gap.abs() <= 3.0 * fb.stderr + tol;

    let n_policies = 20;
    let params = DelayParams::new(0.1 * model.horizon(), 1, s, model.horizon())?;
    let mut min_gap = f64::INFINITY;
    let mut violations = 0usize;
    for p in 0..n_policies {
        let pol_seed = splitmix64(seed ^ (p as u64 + 101));
        let policy = random_delay_policy(model, value.grid(), params, pol_seed);
        let est_seed = splitmix64(seed ^ (p as u64 + 20_101));
        let est = dpp_expectation(model, value, &policy, s, i, tau, n_paths, est_seed)?;
        let gap = est.mean - v_ref;
        if gap < -(3.0 * est.stderr + tol) {
            violations += 1;
        }
        min_gap = min_gap.min(gap);
    }

    let kind_tag = match tau {
        TauKind::Deterministic(_) => "deterministic",
        TauKind::FirstJumpCapped(_) => "first_jump_capped",
    };
    let mut q = BTreeMap::new();
    q.insert("v_s_i".into(), v_ref);
    q.insert("t1".into(), t1);
    q.insert("feedback_mean".into(), fb.mean);
    q.insert("feedback_stderr".into(), fb.stderr);
    q.insert("feedback_gap".into(), fb_gap);
    q.insert("min_policy_gap".into(), min_gap);
    q.insert("n_policies".into(), n_policies as f64);
    q.insert("n_paths".into(), n_paths as f64);
    q.insert("violations".into(), violations as f64);
    Ok(ExperimentReport {
        name: format!("dpp_{kind_tag}"),
        quantities: q,
        passed: fb_ok && violations == 0,
        tolerance: tol,
        details: format!(
            "tau = {kind_tag}(t1 = {t1}); feedback attains V within 3se+tol: {fb_ok}; \
             {violations} of {n_policies} random delay policies beat V beyond tolerance"
        ),
    })
}

/// Time-Lipschitz check: the empirical constant of the solved value
/// against the explicit bound 3C₁ + 2MC₂ + TC₀, with first-order scheme
/// slack 10·Δt·M·C₁.
pub fn lipschitz_check(model: &ModelSpec, value: &ValueFunction) -> Result<ExperimentReport> {
    if value.n_states() != model.n_states() {
        return Err(CtmdpError::GridMismatch(
            "value function does not match the model".into(),
        ));
    }
    let grid = value.grid();
    let dt = grid.dt();
    let mut empirical = 0.0_f64;
    for n in 0..grid.n_steps() {
        for i in 0..model.n_states() {
            empirical = empirical.max((value.value(n + 1, i) - value.value(n, i)).abs() / dt);
        }
    }
    let c = model.costs();
    let m = model.generator().rate_bound();
    let bound = 3.0 * c.c1 + 2.0 * m * c.c2 + model.horizon() * c.c0;
    let slack = 10.0 * dt * m * c.c1;
    let mut q = BTreeMap::new();
    q.insert("empirical_constant".into(), empirical);
    q.insert("paper_constant".into(), bound);
    q.insert("scheme_slack".into(), slack);
    Ok(ExperimentReport {
        name: "lipschitz".into(),
        quantities: q,
        passed: empirical <= bound + slack,
        tolerance: slack,
        details: format!(
            "max_n,i |V(t_n+1,i)-V(t_n,i)|/dt = {empirical:.6} vs 3C1+2MC2+TC0 = {bound:.6}"
        ),
    })
}

/// Delay-no-gain at (s, i) = (params.s, i): no random delay policy beats
/// V beyond MC + scheme tolerance, and the delay-free HJB feedback
/// attains V within the same tolerance.
pub fn delay_no_gain(
    model: &ModelSpec,
    value: &ValueFunction,
    params: DelayParams,
    i: usize,
    n_policies: usize,
    n_paths: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    if params.m < 1 {
        return Err(CtmdpError::MalformedPolicy(
            "delay_no_gain needs m >= 1 delay slots".into(),
        ));
    }
    let s = params.s;
    let tol = scheme_tolerance(model, value.grid().dt());
    let v_ref = value.interp(s, i);
    let refresh = value.grid();

    let mut gaps = Vec::with_capacity(n_policies);
    let mut violations = 0usize;
    let mut worst_margin = f64::INFINITY;
    for p in 0..n_policies {
        let pol_seed = splitmix64(seed ^ (p as u64 + 577));
        let policy = random_delay_policy(model, refresh, params, pol_seed);
        let est_seed = splitmix64(seed ^ (p as u64 + 90_577));
        let est = crate::simulate::estimate_j_with(model, &policy, s, i, n_paths, est_seed, refresh)?;
        let gap = est.mean - v_ref;
        let margin = gap + 3.0 * est.stderr + tol;
        if margin < 0.0 {
            violations += 1;
        }
        worst_margin = worst_margin.min(margin);
        gaps.push(gap);
    }
    let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let max_gap = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len().max(1) as f64;

    let feedback = feedback_from_value(value, model)?;
    let fb_seed = splitmix64(seed ^ 0xFEED_BAC0);
    let fb = crate::simulate::estimate_j_with(model, &feedback, s, i, n_paths, fb_seed, refresh)?;
    let fb_gap = fb.mean - v_ref;
    let fb_ok = fb_gap <= 3.0 * fb.stderr + tol && fb_gap >= -(3.0 * fb.stderr + tol);

    let mut q = BTreeMap::new();
    q.insert("v_s_i".into(), v_ref);
    q.insert("n_policies".into(), n_policies as f64);
    q.insert("n_paths".into(), n_paths as f64);
    q.insert("min_gap".into(), min_gap);
    q.insert("mean_gap".into(), mean_gap);
    q.insert("max_gap".into(), max_gap);
    q.insert("worst_margin".into(), worst_margin);
    q.insert("violations".into(), violations as f64);
    q.insert("feedback_gap".into(), fb_gap);
    q.insert("feedback_stderr".into(), fb.stderr);
    Ok(ExperimentReport {
        name: "delay_no_gain".into(),
        quantities: q,
        passed: violations == 0 && fb_ok,
        tolerance: tol,
        details: format!(
            "m = {}, r0 = {}: {violations} of {n_policies} delayed policies beat V(s,i) beyond \
             3se+tol; feedback gap {fb_gap:.6} within tolerance: {fb_ok}",
            params.m, params.r0
        ),
    })
}

// ── dense matrix exponential for the oracle ─────────────────────────────

#[derive(Debug, Clone)]
struct Mat {
    n: usize,
    a: Vec<f64>,
}

impl Mat {
    fn zeros(n: usize) -> Self {
        Self { n, a: vec![0.0; n * n] }
    }

    fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.a[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] = v;
    }

    fn matmul(&self, other: &Mat) -> Mat {
        let n = self.n;
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let x = self.a[i * n + k];
                if x == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.a[i * n + j] += x * other.a[k * n + j];
                }
            }
        }
        out
    }

    fn max_row_sum(&self) -> f64 {
        let n = self.n;
        (0..n)
            .map(|i| (0..n).map(|j| self.a[i * n + j].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// exp(A) by scaling and squaring with a Taylor expansion of order 16
/// on the scaled matrix (‖A‖/2^s ≤ 1/2 gives truncation below 1e-19).
fn expm(a: &Mat) -> Mat {
    let norm = a.max_row_sum();
    let s = if norm <= 0.5 {
        0
    } else {
        (norm / 0.5).log2().ceil() as u32
    };
    let scale = 2.0_f64.powi(s as i32);
    let n = a.n;
    let mut scaled = Mat::zeros(n);
    for idx in 0..n * n {
        scaled.a[idx] = a.a[idx] / scale;
    }
    // Horner evaluation of sum_{k<=16} X^k / k!
    let mut result = Mat::identity(n);
    for k in (1..=16u32).rev() {
        let mut next = scaled.matmul(&result);
        for idx in 0..n * n {
            next.a[idx] /= k as f64;
        }
        for i in 0..n {
            next.a[i * n + i] += 1.0;
        }
        result = next;
    }
    for _ in 0..s {
        result = result.matmul(&result);
    }
    result
}

/// Independent value oracle: exhaustive enumeration of all |U|^|S|
/// per-interval feedback maps, combined across a coarse uniform mesh of
/// [s, T] by exact backward induction. Each map's interval step is
/// evaluated exactly through the augmented (|S|+1)-dimensional generator
/// exponential [[Q, f], [0, 0]], with f frozen at the interval midpoint.
/// The result is the exact cost of an admissible policy, so it upper
/// bounds the value function.
pub fn brute_force_value(
    model: &ModelSpec,
    s: f64,
    i: usize,
    n_intervals: usize,
) -> Result<f64> {
    let n = model.n_states();
    let n_actions = model.grid().len();
    if n > 6 {
        return Err(CtmdpError::ComplexityBudgetExceeded(format!(
            "oracle supports at most 6 states, model has {n}"
        )));
    }
    if n_intervals == 0 {
        return Err(CtmdpError::ComplexityBudgetExceeded(
            "oracle needs at least one interval".into(),
        ));
    }
    let maps_count = (n_actions as u128).pow(n as u32);
    if maps_count.saturating_mul(n_intervals as u128) > 1_000_000 {
        return Err(CtmdpError::ComplexityBudgetExceeded(format!(
            "|U|^|S| * n_intervals = {} exceeds 1e6",
            maps_count * n_intervals as u128
        )));
    }
    if i >= n {
        return Err(CtmdpError::IndexOutOfRange(format!(
            "state {i} out of 0..{n}"
        )));
    }
    if !(s < model.horizon()) {
        return Err(CtmdpError::TimeOutOfRange(format!(
            "start {s} not before horizon {}",
            model.horizon()
        )));
    }

    let h = (model.horizon() - s) / n_intervals as f64;
    let gen = model.generator();
    let mut v: Vec<f64> = (0..n).map(|j| model.terminal_cost(j)).collect();
    let mut map = vec![0usize; n];
    for l in (0..n_intervals).rev() {
        let tmid = s + (l as f64 + 0.5) * h;
        let mut best = vec![f64::INFINITY; n];
        map.iter_mut().for_each(|m| *m = 0);
        loop {
            // augmented generator for this feedback map
            let mut aug = Mat::zeros(n + 1);
            for row in 0..n {
                let u = map[row];
                for &(j, q) in gen.neighbors(row, u) {
                    aug.set(row, j, aug.get(row, j) + q * h);
                    aug.set(row, row, aug.get(row, row) - q * h);
                }
                aug.set(row, n, model.running_cost(tmid, row, u) * h);
            }
            let e = expm(&aug);
            for row in 0..n {
                let mut w = e.get(row, n);
                for j in 0..n {
                    w += e.get(row, j) * v[j];
                }
                if w < best[row] {
                    best[row] = w;
                }
            }
            // odometer over the map
            let mut pos = n;
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                map[pos] += 1;
                if map[pos] < n_actions {
                    break;
                }
                map[pos] = 0;
            }
            if map.iter().all(|&x| x == 0) {
                break;
            }
        }
        v = best;
    }
    Ok(v[i])
}

/// Oracle sandwich experiment: brute-force values over a ladder of
/// interval counts against the solver value at (s, i).
pub fn oracle_check(
    model: &ModelSpec,
    value: &ValueFunction,
    s: f64,
    i: usize,
    intervals: &[usize],
) -> Result<ExperimentReport> {
    let v_ref = value.interp(s, i);
    let mut q = BTreeMap::new();
    q.insert("v_s_i".into(), v_ref);
    let mut prev = f64::INFINITY;
    let mut sandwich_ok = true;
    let mut monotone_ok = true;
    let mut final_gap = f64::NAN;
    for &l in intervals {
        let oracle = brute_force_value(model, s, i, l)?;
        let gap = oracle - v_ref;
        q.insert(format!("oracle_L{l}"), oracle);
        q.insert(format!("gap_L{l}"), gap);
        if gap < -1e-3 {
            sandwich_ok = false;
        }
        if oracle > prev + 1e-6 {
            monotone_ok = false;
        }
        prev = oracle;
        final_gap = gap;
    }
    q.insert("final_gap".into(), final_gap);
    Ok(ExperimentReport {
        name: "oracle".into(),
        quantities: q,
        passed: sandwich_ok && monotone_ok,
        tolerance: 1e-3,
        details: format!(
            "piecewise-feedback matrix-exponential oracle over L in {intervals:?}: \
             sandwich (oracle >= V - 1e-3): {sandwich_ok}; non-increasing: {monotone_ok}; \
             final gap {final_gap:.3e}"
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hjb::{solve_backward, Scheme};
    use crate::instances::{demo_model, demo_model_sized, two_state_closed_form, two_state_value};

    #[test]
    fn expm_diagonal() {
        let mut a = Mat::zeros(2);
        a.set(0, 0, 1.0);
        a.set(1, 1, -2.0);
        let e = expm(&a);
        assert!((e.get(0, 0) - 1.0_f64.exp()).abs() < 1e-14);
        assert!((e.get(1, 1) - (-2.0_f64).exp()).abs() < 1e-14);
        assert!(e.get(0, 1).abs() < 1e-16);
    }

    #[test]
    fn expm_nilpotent() {
        let mut a = Mat::zeros(2);
        a.set(0, 1, 1.0);
        let e = expm(&a);
        assert_eq!(e.get(0, 0), 1.0);
        assert!((e.get(0, 1) - 1.0).abs() < 1e-15);
        assert_eq!(e.get(1, 0), 0.0);
    }

    #[test]
    fn expm_two_state_generator_closed_form() {
        // exp(t Q) for Q = [[-1, 1], [1, -1]]: off-diagonal (1-e^{-2t})/2
        let mut a = Mat::zeros(2);
        a.set(0, 0, -1.0);
        a.set(0, 1, 1.0);
        a.set(1, 0, 1.0);
        a.set(1, 1, -1.0);
        let e = expm(&a);
        let p12 = (1.0 - (-2.0_f64).exp()) / 2.0;
        assert!((e.get(0, 1) - p12).abs() < 1e-14);
        assert!((e.get(0, 0) - (1.0 - p12)).abs() < 1e-14);
    }

    #[test]
    fn expm_inverse_property() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = rng.gen_range(2..5);
            let mut a = Mat::zeros(n);
            let mut neg = Mat::zeros(n);
            for i in 0..n {
                for j in 0..n {
                    let x: f64 = rng.gen_range(-2.0..2.0);
                    a.set(i, j, x);
                    neg.set(i, j, -x);
                }
            }
            let prod = expm(&a).matmul(&expm(&neg));
            for i in 0..n {
                for j in 0..n {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((prod.get(i, j) - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn oracle_single_action_matches_closed_form() {
        let model = two_state_closed_form();
        for l in [1usize, 3, 8] {
            let o = brute_force_value(&model, 0.0, 0, l).unwrap();
            assert!(
                (o - two_state_value(0.0)).abs() < 1e-12,
                "L = {l}: {o} vs {}",
                two_state_value(0.0)
            );
        }
    }

    #[test]
    fn oracle_constant_cost() {
        use crate::model::{ActionGrid, ControlledGenerator, CostSpec, RunningCost};
        let grid = ActionGrid::scalar(&[1.0, 2.0]).unwrap();
        let gen = ControlledGenerator::from_triplets(
            2,
            2,
            &[(0, 1, 0, 1.0), (1, 0, 0, 1.0), (0, 1, 1, 2.0), (1, 0, 1, 2.0)],
            1,
        )
        .unwrap();
        let costs = CostSpec {
            running: RunningCost::Constant { c: 0.3 },
            terminal: vec![0.0, 0.0],
            c0: 0.0,
            c1: 0.3,
            c2: 0.0,
        };
        let model = ModelSpec::new(2, 1.0, grid, gen, costs, None).unwrap();
        let o = brute_force_value(&model, 0.0, 0, 4).unwrap();
        assert!((o - 0.3).abs() < 1e-12, "oracle {o}");
        let o = brute_force_value(&model, 0.25, 1, 2).unwrap();
        assert!((o - 0.3 * 0.75).abs() < 1e-12);
    }

    #[test]
    fn oracle_budget_enforced() {
        let model = demo_model(); // 10 states
        assert!(matches!(
            brute_force_value(&model, 0.0, 0, 4),
            Err(CtmdpError::ComplexityBudgetExceeded(_))
        ));
    }

    #[test]
    fn oracle_sandwich_on_restricted_demo() {
        let model = demo_model_sized(4);
        let grid = TimeGrid::from_dt(1.0, 1e-3).unwrap();
        let value = solve_backward(&model, &grid, Scheme::Rk4).unwrap();
        let report = oracle_check(&model, &value, 0.0, 0, &[2, 4, 8]).unwrap();
        assert!(report.passed, "{report:?}");
        assert!(report.quantities["final_gap"].abs() <= 5e-3);
    }

    #[test]
    fn lipschitz_trivial_and_closed_form() {
        // f == 0, g == 0: empirical constant 0
        use crate::model::{ActionGrid, ControlledGenerator, CostSpec, RunningCost};
        let grid = ActionGrid::scalar(&[1.0]).unwrap();
        let gen = ControlledGenerator::from_triplets(2, 1, &[(0, 1, 0, 1.0), (1, 0, 0, 1.0)], 1)
            .unwrap();
        let costs = CostSpec {
            running: RunningCost::Constant { c: 0.0 },
            terminal: vec![0.0, 0.0],
            c0: 0.0,
            c1: 0.0,
            c2: 0.0,
        };
        let model = ModelSpec::new(2, 1.0, grid, gen, costs, None).unwrap();
        let tg = TimeGrid::uniform(1.0, 100).unwrap();
        let value = solve_backward(&model, &tg, Scheme::ExplicitEuler).unwrap();
        let rep = lipschitz_check(&model, &value).unwrap();
        assert_eq!(rep.quantities["empirical_constant"], 0.0);
        assert!(rep.passed);

        // closed form: |V'| peaks at 1 near s = T, bound 2MC2 = 2
        let model = two_state_closed_form();
        let tg = TimeGrid::from_dt(1.0, 1e-3).unwrap();
        let value = solve_backward(&model, &tg, Scheme::Rk4).unwrap();
        let rep = lipschitz_check(&model, &value).unwrap();
        let emp = rep.quantities["empirical_constant"];
        assert!((emp - 1.0).abs() < 1e-2, "empirical {emp}");
        assert_eq!(rep.quantities["paper_constant"], 2.0);
        assert!(rep.passed);
    }

    #[test]
    fn lipschitz_constant_running_cost() {
        use crate::model::{ActionGrid, ControlledGenerator, CostSpec, RunningCost};
        let c = 0.4;
        let grid = ActionGrid::scalar(&[1.0]).unwrap();
        let gen = ControlledGenerator::from_triplets(2, 1, &[(0, 1, 0, 1.0), (1, 0, 0, 1.0)], 1)
            .unwrap();
        let costs = CostSpec {
            running: RunningCost::Constant { c },
            terminal: vec![0.0, 0.0],
            c0: 0.0,
            c1: c,
            c2: 0.0,
        };
        let model = ModelSpec::new(2, 1.0, grid, gen, costs, None).unwrap();
        let tg = TimeGrid::uniform(1.0, 500).unwrap();
        let value = solve_backward(&model, &tg, Scheme::ExplicitEuler).unwrap();
        let rep = lipschitz_check(&model, &value).unwrap();
        // V = c (T - t): empirical constant c, bound 3c
        assert!((rep.quantities["empirical_constant"] - c).abs() < 1e-12);
        assert_eq!(rep.quantities["paper_constant"], 3.0 * c);
        assert!(rep.passed);
    }

    #[test]
    fn dpp_zero_data_is_exact() {
        use crate::model::{ActionGrid, ControlledGenerator, CostSpec, RunningCost};
        let grid = ActionGrid::scalar(&[1.0]).unwrap();
        let gen = ControlledGenerator::from_triplets(2, 1, &[(0, 1, 0, 1.0), (1, 0, 0, 1.0)], 1)
            .unwrap();
        let costs = CostSpec {
            running: RunningCost::Constant { c: 0.0 },
            terminal: vec![0.0, 0.0],
            c0: 0.0,
            c1: 0.0,
            c2: 0.0,
        };
        let model = ModelSpec::new(2, 1.0, grid, gen, costs, None).unwrap();
        let tg = TimeGrid::uniform(1.0, 100).unwrap();
        let value = solve_backward(&model, &tg, Scheme::ExplicitEuler).unwrap();
        let rep = dpp_check(&model, &value, 0.0, 0, TauKind::Deterministic(0.5), 200, 3).unwrap();
        assert!(rep.passed);
        assert_eq!(rep.quantities["feedback_mean"], 0.0);
    }

    /// Tower-property check against the closed form: for the uncontrolled
    /// chain, E[V(t1, Λ_t1)] must equal V(0, 1) exactly, and the MC
    /// estimate must agree within 3 stderr.
    #[test]
    fn dpp_uncontrolled_deterministic_tau_matches_closed_form() {
        let model = two_state_closed_form();
        let tg = TimeGrid::from_dt(1.0, 1e-3).unwrap();
        let value = solve_backward(&model, &tg, Scheme::Rk4).unwrap();
        let rep =
            dpp_check(&model, &value, 0.0, 0, TauKind::Deterministic(0.4), 20_000, 99).unwrap();
        assert!(rep.passed, "{rep:?}");
        // independent evaluation of the tower identity at t1 = 0.4:
        // E[V(0.4, Λ_0.4)] = p * V(0.4, 2) + (1-p) * V(0.4, 1) with
        // p = (1 - e^{-0.8})/2 and V(0.4, 2) = 1 - V(0.4, 1)... computed
        // from the closed form directly:
        let p = (1.0 - (-2.0_f64 * 0.4).exp()) / 2.0;
        let v_t1_1 = two_state_value(0.4);
        let v_t1_2 = 1.0 - v_t1_1; // symmetry of the 2-state chain
        let tower = p * v_t1_2 + (1.0 - p) * v_t1_1;
        assert!((tower - two_state_value(0.0)).abs() < 1e-12);
        let fb_mean = rep.quantities["feedback_mean"];
        let fb_se = rep.quantities["feedback_stderr"];
        assert!((fb_mean - tower).abs() <= 3.0 * fb_se + 1e-9);
    }

    #[test]
    fn dpp_demo_both_tau_kinds() {
        let model = demo_model();
        let tg = TimeGrid::from_dt(1.0, 1e-3).unwrap();
        let value = solve_backward(&model, &tg, Scheme::ExplicitEuler).unwrap();
        for tau in [
            TauKind::Deterministic(0.2),
            TauKind::FirstJumpCapped(0.2),
        ] {
            let rep = dpp_check(&model, &value, 0.0, 0, tau, 2000, 12).unwrap();
            assert!(rep.passed, "{rep:?}");
        }
    }

    #[test]
    fn delay_no_gain_single_action_model() {
        let model = two_state_closed_form();
        let tg = TimeGrid::from_dt(1.0, 1e-3).unwrap();
        let value = solve_backward(&model, &tg, Scheme::ExplicitEuler).unwrap();
        let params = DelayParams::new(0.1, 1, 0.0, 1.0).unwrap();
        let rep = delay_no_gain(&model, &value, params, 0, 5, 4000, 7).unwrap();
        assert!(rep.passed, "{rep:?}");
        // with one action every policy attains J = V up to MC noise
        assert!(rep.quantities["min_gap"].abs() < 0.05);
    }

    #[test]
    fn delay_no_gain_demo_small() {
        let model = demo_model();
        let tg = TimeGrid::from_dt(1.0, 1e-3).unwrap();
        let value = solve_backward(&model, &tg, Scheme::ExplicitEuler).unwrap();
        let params = DelayParams::new(0.1, 1, 0.0, 1.0).unwrap();
        let rep = delay_no_gain(&model, &value, params, 0, 10, 2000, 21).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(rep.quantities["min_gap"] >= -rep.tolerance - 0.05);
    }

    #[test]
    fn delay_no_gain_requires_delay() {
        let model = demo_model();
        let tg = TimeGrid::uniform(1.0, 100).unwrap();
        let value = solve_backward(&model, &tg, Scheme::ExplicitEuler).unwrap();
        let params = DelayParams::markov(0.0);
        assert!(delay_no_gain(&model, &value, params, 0, 2, 100, 1).is_err());
    }
}
