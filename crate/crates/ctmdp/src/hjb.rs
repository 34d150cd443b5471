//! Backward solution of the Hamilton-Jacobi-Bellman equation
//!
//! ```text
//! -∂v/∂t - inf_μ { Σ_{j≠i} q_ij(μ) (v(t,j) - v(t,i)) + f(t,i,μ) } = 0,
//! v(T, i) = g(i),
//! ```
//!
//! on a uniform time grid, plus grid residuals and the comparison test.
//! With q and f affine in μ the infimum over P(U) is attained at a point
//! mass, so the Hamiltonian minimizes over grid actions only; the
//! `dirac_attainment` property test asserts this against random mixtures.

use crate::error::{CtmdpError, Result};
use crate::model::{Mixture, ModelSpec};

/// Uniform partition 0 = t₀ < t₁ < ... < t_N = T.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
    dt: f64,
}

impl TimeGrid {
    /// Grid with `n_steps` uniform intervals on [0, t_end].
    pub fn uniform(t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(CtmdpError::GridMismatch(format!(
                "grid horizon {t_end} must be positive and finite"
            )));
        }
        if n_steps < 2 {
            return Err(CtmdpError::GridMismatch(
                "time grid needs at least 2 steps".into(),
            ));
        }
        let dt = t_end / n_steps as f64;
        let mut nodes: Vec<f64> = (0..=n_steps)
            .map(|k| t_end * k as f64 / n_steps as f64)
            .collect();
        nodes[n_steps] = t_end;
        Ok(Self { nodes, dt })
    }

    /// Grid from a requested step: N = round(t_end / dt) intervals with
    /// the step adjusted to t_end / N so the grid is exactly uniform.
    pub fn from_dt(t_end: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(CtmdpError::GridMismatch(format!(
                "dt = {dt} must be positive and finite"
            )));
        }
        let n_steps = (t_end / dt).round().max(2.0) as usize;
        Self::uniform(t_end, n_steps)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, n: usize) -> f64 {
        self.nodes[n]
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of intervals N.
    pub fn n_steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Index of the left node of the interval containing t, i.e. n with
    /// t ∈ [tₙ, tₙ₊₁); t ≥ T maps to N. Queries within one part in 1e9
    /// of a node snap to that node.
    pub fn left_index(&self, t: f64) -> usize {
        let tol = self.dt * 1e-9;
        let idx = self.nodes.partition_point(|&x| x <= t + tol);
        idx.saturating_sub(1)
    }
}

/// Numerical integrator for the backward value ODE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Monotone first-order scheme; requires dt · 2M ≤ 1.
    #[serde(rename = "euler")]
    ExplicitEuler,
    /// Classical fourth-order Runge-Kutta.
    Rk4,
}

impl std::str::FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "euler" => Ok(Scheme::ExplicitEuler),
            "rk4" => Ok(Scheme::Rk4),
            other => Err(format!("unknown scheme '{other}' (expected euler|rk4)")),
        }
    }
}

/// The solved value function V(tₙ, i) with its feedback table.
#[derive(Debug, Clone)]
pub struct ValueFunction {
    grid: TimeGrid,
    /// values[n][i] = V(tₙ, i).
    values: Vec<Vec<f64>>,
    /// argmin[n][i]: lowest-index grid action attaining the Hamiltonian
    /// minimum at (tₙ, i) against values[n].
    argmin: Vec<Vec<usize>>,
}

impl ValueFunction {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_states(&self) -> usize {
        self.values[0].len()
    }

    pub fn value(&self, n: usize, i: usize) -> f64 {
        self.values[n][i]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn argmin(&self, n: usize, i: usize) -> usize {
        self.argmin[n][i]
    }

    /// V(t, i) by linear interpolation between grid nodes (clamped).
    pub fn interp(&self, t: f64, i: usize) -> f64 {
        let n = self.grid.left_index(t);
        if n >= self.grid.n_steps() {
            return self.values[self.grid.n_steps()][i];
        }
        let t0 = self.grid.node(n);
        let w = ((t - t0) / self.grid.dt()).clamp(0.0, 1.0);
        self.values[n][i] * (1.0 - w) + self.values[n + 1][i] * w
    }
}

/// The minimized Hamiltonian at (t, i) against a value row:
/// min over grid actions u of Σ_{j≠i} q_ij(u)(v[j] − v[i]) + f(t, i, u),
/// with ties broken toward the lowest action index.
pub fn hamiltonian(
    model: &ModelSpec,
    t: f64,
    i: usize,
    v_row: &[f64],
) -> Result<(f64, usize)> {
    if i >= model.n_states() {
        return Err(CtmdpError::IndexOutOfRange(format!(
            "state {i} out of 0..{}",
            model.n_states()
        )));
    }
    if v_row.len() != model.n_states() {
        return Err(CtmdpError::IndexOutOfRange(format!(
            "value row has {} entries, model has {} states",
            v_row.len(),
            model.n_states()
        )));
    }
    let gen = model.generator();
    let mut best = f64::INFINITY;
    let mut best_u = 0;
    for u in 0..model.grid().len() {
        let drift: f64 = gen
            .neighbors(i, u)
            .iter()
            .map(|&(j, q)| q * (v_row[j] - v_row[i]))
            .sum();
        let cand = drift + model.running_cost(t, i, u);
        if cand < best {
            best = cand;
            best_u = u;
        }
    }
    Ok((best, best_u))
}

/// The relaxed Hamiltonian at a mixture:
/// Σ_u μ(u) [ Σ_{j≠i} q_ij(u)(v[j] − v[i]) + f(t, i, u) ].
pub fn relaxed_hamiltonian(model: &ModelSpec, t: f64, i: usize, v_row: &[f64], mu: &Mixture) -> f64 {
    let gen = model.generator();
    mu.weights()
        .iter()
        .enumerate()
        .filter(|(_, &w)| w != 0.0)
        .map(|(u, &w)| {
            let drift: f64 = gen
                .neighbors(i, u)
                .iter()
                .map(|&(j, q)| q * (v_row[j] - v_row[i]))
                .sum();
            w * (drift + model.running_cost(t, i, u))
        })
        .sum()
}

/// First-order scheme error allowance used by the comparison and Monte
/// Carlo consistency experiments: 10·Δt·(C1 + M·(C2 + C1·T)).
pub fn scheme_tolerance(model: &ModelSpec, dt: f64) -> f64 {
    let c = model.costs();
    let m = model.generator().rate_bound();
    10.0 * dt * (c.c1 + m * (c.c2 + c.c1 * model.horizon()))
}

/// Integrate the value ODE dV/dt = −H(t, V(t,·)) backward from
/// V(T,·) = g and tabulate the per-node feedback minimizer.
pub fn solve_backward(model: &ModelSpec, grid: &TimeGrid, scheme: Scheme) -> Result<ValueFunction> {
    if (grid.horizon() - model.horizon()).abs() > 1e-12 * model.horizon().max(1.0) {
        return Err(CtmdpError::GridMismatch(format!(
            "grid horizon {} != model horizon {}",
            grid.horizon(),
            model.horizon()
        )));
    }
    let m = model.generator().rate_bound();
    if scheme == Scheme::ExplicitEuler && grid.dt() * 2.0 * m > 1.0 + 1e-12 {
        return Err(CtmdpError::StabilityViolation {
            dt: grid.dt(),
            rate_bound: m,
        });
    }
    let n_states = model.n_states();
    let n_steps = grid.n_steps();
    let dt = grid.dt();

    let h_row = |t: f64, v: &[f64]| -> Result<Vec<f64>> {
        (0..n_states)
            .map(|i| hamiltonian(model, t, i, v).map(|(h, _)| h))
            .collect()
    };

    let mut values = vec![vec![0.0; n_states]; n_steps + 1];
    values[n_steps] = (0..n_states).map(|i| model.terminal_cost(i)).collect();
    for n in (0..n_steps).rev() {
        let t_hi = grid.node(n + 1);
        let t_lo = grid.node(n);
        let prev = values[n + 1].clone();
        let next: Vec<f64> = match scheme {
            Scheme::ExplicitEuler => {
                let h = h_row(t_hi, &prev)?;
                (0..n_states).map(|i| prev[i] + dt * h[i]).collect()
            }
            Scheme::Rk4 => {
                let t_mid = 0.5 * (t_lo + t_hi);
                let k1 = h_row(t_hi, &prev)?;
                let s1: Vec<f64> = (0..n_states).map(|i| prev[i] + 0.5 * dt * k1[i]).collect();
                let k2 = h_row(t_mid, &s1)?;
                let s2: Vec<f64> = (0..n_states).map(|i| prev[i] + 0.5 * dt * k2[i]).collect();
                let k3 = h_row(t_mid, &s2)?;
                let s3: Vec<f64> = (0..n_states).map(|i| prev[i] + dt * k3[i]).collect();
                let k4 = h_row(t_lo, &s3)?;
                (0..n_states)
                    .map(|i| prev[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                    .collect()
            }
        };
        for (i, &v) in next.iter().enumerate() {
            if !v.is_finite() {
                return Err(CtmdpError::NonFiniteValue {
                    t: t_lo,
                    state: i,
                });
            }
        }
        values[n] = next;
    }

    let mut argmin = vec![vec![0usize; n_states]; n_steps + 1];
    for n in 0..=n_steps {
        let t = grid.node(n);
        let row = values[n].clone();
        for i in 0..n_states {
            argmin[n][i] = hamiltonian(model, t, i, &row)?.1;
        }
    }

    Ok(ValueFunction {
        grid: grid.clone(),
        values,
        argmin,
    })
}

/// Max over interior nodes and states of |∂ₜV + H(tₙ, i, V(tₙ,·))| with a
/// central-difference time derivative. Boundary nodes are excluded.
pub fn residual(model: &ModelSpec, value: &ValueFunction) -> Result<f64> {
    if value.n_states() != model.n_states() {
        return Err(CtmdpError::GridMismatch(format!(
            "value function over {} states, model has {}",
            value.n_states(),
            model.n_states()
        )));
    }
    let grid = value.grid();
    let dt = grid.dt();
    let mut worst = 0.0_f64;
    for n in 1..grid.n_steps() {
        let t = grid.node(n);
        for i in 0..model.n_states() {
            let dv = (value.value(n + 1, i) - value.value(n - 1, i)) / (2.0 * dt);
            let (h, _) = hamiltonian(model, t, i, &value.values[n])?;
            worst = worst.max((dv + h).abs());
        }
    }
    Ok(worst)
}

/// Outcome of the discrete comparison-principle check.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ComparisonReport {
    /// max over all grid nodes and states of V₂ − V₁.
    pub interior_sup: f64,
    /// max over states of g₂ − g₁.
    pub terminal_sup: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Solve the equation for two terminal conditions sharing everything else
/// and check sup over the whole grid of (V₂ − V₁) against its value at
/// the terminal time, within the first-order scheme allowance.
pub fn comparison_test(
    model: &ModelSpec,
    g1: &[f64],
    g2: &[f64],
    grid: &TimeGrid,
) -> Result<ComparisonReport> {
    let m1 = model.with_terminal(g1.to_vec())?;
    let m2 = model.with_terminal(g2.to_vec())?;
    let v1 = solve_backward(&m1, grid, Scheme::ExplicitEuler)?;
    let v2 = solve_backward(&m2, grid, Scheme::ExplicitEuler)?;
    let mut interior_sup = f64::NEG_INFINITY;
    for n in 0..=grid.n_steps() {
        for i in 0..model.n_states() {
            interior_sup = interior_sup.max(v2.value(n, i) - v1.value(n, i));
        }
    }
    let terminal_sup = g1
        .iter()
        .zip(g2)
        .map(|(a, b)| b - a)
        .fold(f64::NEG_INFINITY, f64::max);
    let tolerance = scheme_tolerance(&m2, grid.dt()).max(scheme_tolerance(&m1, grid.dt()));
    Ok(ComparisonReport {
        interior_sup,
        terminal_sup,
        tolerance,
        passed: interior_sup <= terminal_sup + tolerance,
    })
}

impl ModelSpec {
    /// Clone with a replaced terminal cost; C2 is raised to cover it.
    pub fn with_terminal(&self, g: Vec<f64>) -> Result<ModelSpec> {
        if g.len() != self.n_states() {
            return Err(CtmdpError::GridMismatch(format!(
                "terminal vector has {} entries, model has {} states",
                g.len(),
                self.n_states()
            )));
        }
        let mut costs = self.costs().clone();
        costs.c2 = g.iter().copied().fold(costs.c2, f64::max);
        costs.terminal = g;
        ModelSpec::new(
            self.n_states(),
            self.horizon(),
            self.grid().clone(),
            self.generator().clone(),
            costs,
            self.lyapunov().cloned(),
        )
    }
}
