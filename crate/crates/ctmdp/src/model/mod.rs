//! CTMDP problem instances: state space, action grid, controlled generator,
//! costs, Lyapunov data, and mechanical validation of the standing
//! assumptions H1 (bounded exit rates), H2 (Lyapunov drift), H3 (bounded
//! jump bandwidth).
//!
//! States are `0..n_states` internally; the file format and CLI use 1-based
//! state labels, converted at the I/O boundary only.

pub mod wasserstein;

pub use wasserstein::wasserstein1;

use crate::error::{CtmdpError, Result};

/// Tolerance for probability-mass normalization checks.
pub const PROB_TOL: f64 = 1e-12;

/// Tolerance for metric identity-of-indiscernibles checks.
pub const METRIC_TOL: f64 = 1e-9;

/// A finite grid of actions in R^k. The action space U is a compact subset
/// of R^k; the toolkit works on a finite discretization of it.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionGrid {
    points: Vec<Vec<f64>>,
    dim: usize,
}

impl ActionGrid {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(CtmdpError::MalformedModel("action grid is empty".into()));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(CtmdpError::MalformedModel(
                "action grid points must have dimension >= 1".into(),
            ));
        }
        for (idx, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(CtmdpError::MalformedModel(format!(
                    "action grid point {idx} has dimension {} != {dim}",
                    p.len()
                )));
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(CtmdpError::MalformedModel(format!(
                    "action grid point {idx} has a non-finite coordinate"
                )));
            }
        }
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                if points[i] == points[j] {
                    return Err(CtmdpError::MalformedModel(format!(
                        "action grid points {i} and {j} coincide"
                    )));
                }
            }
        }
        Ok(Self { points, dim })
    }

    /// 1-D helper: grid from scalar action values.
    pub fn scalar(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| vec![v]).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, u: usize) -> &[f64] {
        &self.points[u]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Euclidean distance between grid points u and v.
    pub fn distance(&self, u: usize, v: usize) -> f64 {
        self.points[u]
            .iter()
            .zip(&self.points[v])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// A probability measure on the action grid: the relaxed control value
/// μ ∈ P(U) restricted to a finite support.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    weights: Vec<f64>,
}

impl Mixture {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(CtmdpError::MalformedModel("mixture has no weights".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(CtmdpError::MalformedModel(
                "mixture weights must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > PROB_TOL {
            return Err(CtmdpError::MalformedModel(format!(
                "mixture weights sum to {sum}, not 1 within {PROB_TOL:e}"
            )));
        }
        Ok(Self { weights })
    }

    /// Point mass at grid index `u`.
    pub fn dirac(u: usize, n_actions: usize) -> Self {
        let mut weights = vec![0.0; n_actions];
        weights[u] = 1.0;
        Self { weights }
    }

    pub fn uniform(n_actions: usize) -> Self {
        Self {
            weights: vec![1.0 / n_actions as f64; n_actions],
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Index of the grid point carrying all mass, if this is a point mass.
    pub fn as_dirac(&self) -> Option<usize> {
        let mut hit = None;
        for (u, &w) in self.weights.iter().enumerate() {
            if w > 0.0 {
                if hit.is_some() {
                    return None;
                }
                hit = Some(u);
            }
        }
        hit
    }
}

/// The controlled transition-rate family (q_ij(u)) over grid actions,
/// stored sparsely per (state, action) row. The diagonal is derived
/// (conservative rows), the declared bandwidth K is the H3 claim, and the
/// rate bound M = max_{i,u} q_i(u) is computed from the data.
#[derive(Debug, Clone)]
pub struct ControlledGenerator {
    n_states: usize,
    n_actions: usize,
    /// neighbors[i][u] -> sorted (j, q_ij(u)) with j != i and q > 0.
    neighbors: Vec<Vec<Vec<(usize, f64)>>>,
    /// exit[i][u] = q_i(u) = sum of the off-diagonal row.
    exit: Vec<Vec<f64>>,
    bandwidth: usize,
    rate_bound: f64,
}

impl ControlledGenerator {
    /// Build from sparse 0-based triplets (i, j, u, rate). Triplets with
    /// i == j are accepted only if consistent with the derived diagonal
    /// (checked after assembly, within 1e-12 of -q_i(u)).
    pub fn from_triplets(
        n_states: usize,
        n_actions: usize,
        triplets: &[(usize, usize, usize, f64)],
        bandwidth: usize,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(CtmdpError::MalformedModel(
                "generator needs at least one state and one action".into(),
            ));
        }
        let mut neighbors = vec![vec![Vec::new(); n_actions]; n_states];
        let mut diagonal: Vec<(usize, usize, f64)> = Vec::new();
        for &(i, j, u, rate) in triplets {
            if i >= n_states || j >= n_states {
                return Err(CtmdpError::MalformedModel(format!(
                    "rate entry ({i}, {j}, {u}) has a state index out of 0..{n_states}"
                )));
            }
            if u >= n_actions {
                return Err(CtmdpError::MalformedModel(format!(
                    "rate entry ({i}, {j}, {u}) has an action index out of 0..{n_actions}"
                )));
            }
            if !rate.is_finite() {
                return Err(CtmdpError::MalformedModel(format!(
                    "rate q_{{{i},{j}}}(u{u}) is not finite"
                )));
            }
            if i == j {
                diagonal.push((i, u, rate));
                continue;
            }
            if rate < 0.0 {
                return Err(CtmdpError::MalformedModel(format!(
                    "rate q_{{{i},{j}}}(u{u}) = {rate} is negative"
                )));
            }
            let row = &mut neighbors[i][u];
            if row.iter().any(|&(jj, _)| jj == j) {
                return Err(CtmdpError::MalformedModel(format!(
                    "duplicate rate entry for (i={i}, j={j}, u={u})"
                )));
            }
            if rate > 0.0 {
                row.push((j, rate));
            }
        }
        for rows in &mut neighbors {
            for row in rows.iter_mut() {
                row.sort_by_key(|&(j, _)| j);
            }
        }
        let exit: Vec<Vec<f64>> = neighbors
            .iter()
            .map(|rows| {
                rows.iter()
                    .map(|row| row.iter().map(|&(_, q)| q).sum())
                    .collect()
            })
            .collect();
        for (i, u, rate) in diagonal {
            let expected = -exit[i][u];
            if (rate - expected).abs() > 1e-12 {
                return Err(CtmdpError::MalformedModel(format!(
                    "row sum inconsistent: declared q_{{{i},{i}}}(u{u}) = {rate}, derived {expected}"
                )));
            }
        }
        let rate_bound = exit
            .iter()
            .flat_map(|r| r.iter().copied())
            .fold(0.0_f64, f64::max);
        Ok(Self {
            n_states,
            n_actions,
            neighbors,
            exit,
            bandwidth,
            rate_bound,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Declared H3 bandwidth K.
    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    /// Computed H1 bound M = max_{i,u} q_i(u).
    pub fn rate_bound(&self) -> f64 {
        self.rate_bound
    }

    /// q_ij(u) for a grid action; i == j returns the derived diagonal.
    pub fn rate(&self, i: usize, j: usize, u: usize) -> Result<f64> {
        self.check_indices(i, j, u)?;
        if i == j {
            return Ok(-self.exit[i][u]);
        }
        Ok(self.neighbors[i][u]
            .iter()
            .find(|&&(jj, _)| jj == j)
            .map_or(0.0, |&(_, q)| q))
    }

    /// Total exit rate q_i(u).
    pub fn exit_rate(&self, i: usize, u: usize) -> f64 {
        self.exit[i][u]
    }

    /// Sorted (j, q_ij(u)) pairs with positive rate.
    pub fn neighbors(&self, i: usize, u: usize) -> &[(usize, f64)] {
        &self.neighbors[i][u]
    }

    /// Exit rate q_i(μ) = Σ_u μ(u) q_i(u) under a mixture.
    pub fn exit_rate_under_mixture(&self, i: usize, mu: &Mixture) -> f64 {
        mu.weights()
            .iter()
            .zip(&self.exit[i])
            .map(|(w, q)| w * q)
            .sum()
    }

    /// Merged off-diagonal row under a mixture: sorted (j, q_ij(μ)) with
    /// q_ij(μ) = Σ_u μ(u) q_ij(u) > 0.
    pub fn neighbor_rates_under_mixture(&self, i: usize, mu: &Mixture) -> Vec<(usize, f64)> {
        let mut merged: Vec<(usize, f64)> = Vec::new();
        for (u, &w) in mu.weights().iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for &(j, q) in &self.neighbors[i][u] {
                match merged.binary_search_by_key(&j, |&(jj, _)| jj) {
                    Ok(pos) => merged[pos].1 += w * q,
                    Err(pos) => merged.insert(pos, (j, w * q)),
                }
            }
        }
        merged
    }

    fn check_indices(&self, i: usize, j: usize, u: usize) -> Result<()> {
        if i >= self.n_states || j >= self.n_states {
            return Err(CtmdpError::IndexOutOfRange(format!(
                "state index ({i}, {j}) out of 0..{}",
                self.n_states
            )));
        }
        if u >= self.n_actions {
            return Err(CtmdpError::IndexOutOfRange(format!(
                "action index {u} out of 0..{}",
                self.n_actions
            )));
        }
        Ok(())
    }
}

/// q_ij(μ) in the relaxed-affine form Σ_u μ(u) q_ij(u).
///
/// The affine dependence is a modeling choice of this toolkit: it makes
/// μ ↦ q_ij(μ) W₁-continuous automatically and lets the HJB infimum over
/// P(U) be attained at a point mass.
pub fn rate_under_mixture(
    gen: &ControlledGenerator,
    i: usize,
    j: usize,
    mu: &Mixture,
) -> Result<f64> {
    if mu.len() != gen.n_actions() {
        return Err(CtmdpError::GridMismatch(format!(
            "mixture has {} weights, generator has {} actions",
            mu.len(),
            gen.n_actions()
        )));
    }
    let mut total = 0.0;
    for (u, &w) in mu.weights().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        total += w * gen.rate(i, j, u)?;
    }
    Ok(total)
}

/// Running cost f(t, i, u), either tabulated on a time grid (linear
/// interpolation in t) or one of the named built-in families.
#[derive(Debug, Clone)]
pub enum RunningCost {
    /// f ≡ c.
    Constant { c: f64 },
    /// f(t, i, u) = c0 + c1·t.
    Linear { c0: f64, c1: f64 },
    /// f(t, i, u) = holding·(i−1) + effort·u₁ with u₁ the first action
    /// coordinate and states labeled 1..n (so `i−1` is the 0-based index).
    HoldingEffort { holding: f64, effort: f64 },
    /// Dense table values[t][i][u] over increasing `times`, interpolated
    /// linearly in t and clamped outside the declared range.
    Table {
        times: Vec<f64>,
        values: Vec<Vec<Vec<f64>>>,
    },
}

impl RunningCost {
    fn eval(&self, t: f64, i: usize, u: usize, grid: &ActionGrid) -> f64 {
        match self {
            RunningCost::Constant { c } => *c,
            RunningCost::Linear { c0, c1 } => c0 + c1 * t,
            RunningCost::HoldingEffort { holding, effort } => {
                holding * i as f64 + effort * grid.point(u)[0]
            }
            RunningCost::Table { times, values } => {
                if t <= times[0] {
                    return values[0][i][u];
                }
                let last = times.len() - 1;
                if t >= times[last] {
                    return values[last][i][u];
                }
                let hi = times.partition_point(|&x| x <= t);
                let (t0, t1) = (times[hi - 1], times[hi]);
                let w = (t - t0) / (t1 - t0);
                values[hi - 1][i][u] * (1.0 - w) + values[hi][i][u] * w
            }
        }
    }
}

/// Running and terminal costs with their declared bounds: C0 the time
/// Lipschitz modulus of f, C1 = sup f, C2 = sup g.
#[derive(Debug, Clone)]
pub struct CostSpec {
    pub running: RunningCost,
    pub terminal: Vec<f64>,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

/// H2 data: a Lyapunov function Φ ≥ 1 with drift constants λ₀ > 0, κ₀ ≥ 0
/// and the exceptional set B₀.
#[derive(Debug, Clone)]
pub struct LyapunovSpec {
    pub phi: Vec<f64>,
    pub lambda0: f64,
    pub kappa0: f64,
    /// 0-based member states of B₀.
    pub b0: Vec<usize>,
}

impl LyapunovSpec {
    pub fn in_b0(&self, i: usize) -> bool {
        self.b0.contains(&i)
    }
}

/// A complete problem instance on a finite state truncation 0..n_states
/// with horizon [0, T].
#[derive(Debug, Clone)]
pub struct ModelSpec {
    n_states: usize,
    horizon: f64,
    grid: ActionGrid,
    generator: ControlledGenerator,
    costs: CostSpec,
    lyapunov: Option<LyapunovSpec>,
}

impl ModelSpec {
    pub fn new(
        n_states: usize,
        horizon: f64,
        grid: ActionGrid,
        generator: ControlledGenerator,
        costs: CostSpec,
        lyapunov: Option<LyapunovSpec>,
    ) -> Result<Self> {
        if n_states == 0 {
            return Err(CtmdpError::MalformedModel("n_states must be >= 1".into()));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(CtmdpError::MalformedModel(format!(
                "horizon T = {horizon} must be positive and finite"
            )));
        }
        if generator.n_states() != n_states {
            return Err(CtmdpError::MalformedModel(format!(
                "generator covers {} states, model declares {n_states}",
                generator.n_states()
            )));
        }
        if generator.n_actions() != grid.len() {
            return Err(CtmdpError::MalformedModel(format!(
                "generator covers {} actions, grid has {}",
                generator.n_actions(),
                grid.len()
            )));
        }
        if costs.terminal.len() != n_states {
            return Err(CtmdpError::MalformedModel(format!(
                "terminal cost has {} entries, model declares {n_states} states",
                costs.terminal.len()
            )));
        }
        if costs.c0 < 0.0 || costs.c1 < 0.0 || costs.c2 < 0.0 {
            return Err(CtmdpError::MalformedModel(
                "cost bounds C0, C1, C2 must be nonnegative".into(),
            ));
        }
        if let RunningCost::Table { times, values } = &costs.running {
            if times.len() < 2 || times.windows(2).any(|w| w[1] <= w[0]) {
                return Err(CtmdpError::MalformedModel(
                    "running-cost table needs >= 2 strictly increasing times".into(),
                ));
            }
            if values.len() != times.len()
                || values
                    .iter()
                    .any(|vi| vi.len() != n_states || vi.iter().any(|vu| vu.len() != grid.len()))
            {
                return Err(CtmdpError::MalformedModel(
                    "running-cost table shape must be [times][states][actions]".into(),
                ));
            }
        }
        if let Some(ly) = &lyapunov {
            if ly.phi.len() != n_states {
                return Err(CtmdpError::MalformedModel(format!(
                    "Lyapunov phi has {} entries, model declares {n_states} states",
                    ly.phi.len()
                )));
            }
            if ly.phi.iter().any(|&p| !(p >= 1.0) || !p.is_finite()) {
                return Err(CtmdpError::MalformedModel(
                    "Lyapunov phi must satisfy phi(i) >= 1".into(),
                ));
            }
            if !(ly.lambda0 > 0.0) || ly.kappa0 < 0.0 {
                return Err(CtmdpError::MalformedModel(
                    "Lyapunov constants need lambda0 > 0, kappa0 >= 0".into(),
                ));
            }
            if ly.b0.iter().any(|&i| i >= n_states) {
                return Err(CtmdpError::MalformedModel(
                    "Lyapunov B0 contains a state out of range".into(),
                ));
            }
        }
        let model = Self {
            n_states,
            horizon,
            grid,
            generator,
            costs,
            lyapunov,
        };
        model.check_cost_bounds()?;
        Ok(model)
    }

    /// Sampled verification of the declared cost bounds: 0 ≤ f ≤ C1 and
    /// the C0 time-Lipschitz modulus on sampled pairs, 0 ≤ g ≤ C2.
    fn check_cost_bounds(&self) -> Result<()> {
        let slack = 1e-9 * self.costs.c1.max(1.0);
        let mut times: Vec<f64> = (0..=100)
            .map(|k| self.horizon * k as f64 / 100.0)
            .collect();
        if let RunningCost::Table { times: tt, .. } = &self.costs.running {
            times.extend(tt.iter().copied());
            times.sort_by(f64::total_cmp);
            times.dedup();
        }
        for i in 0..self.n_states {
            let g = self.costs.terminal[i];
            if !g.is_finite() || g < 0.0 || g > self.costs.c2 + 1e-9 * self.costs.c2.max(1.0) {
                return Err(CtmdpError::MalformedModel(format!(
                    "terminal cost g({}) = {g} violates 0 <= g <= C2 = {}",
                    i + 1,
                    self.costs.c2
                )));
            }
            for u in 0..self.grid.len() {
                let mut prev: Option<(f64, f64)> = None;
                for &t in &times {
                    let f = self.running_cost(t, i, u);
                    if !f.is_finite() || f < 0.0 || f > self.costs.c1 + slack {
                        return Err(CtmdpError::MalformedModel(format!(
                            "running cost f({t}, {}, u{u}) = {f} violates 0 <= f <= C1 = {}",
                            i + 1,
                            self.costs.c1
                        )));
                    }
                    if let Some((tp, fp)) = prev {
                        if (f - fp).abs() > self.costs.c0 * (t - tp) + slack {
                            return Err(CtmdpError::MalformedModel(format!(
                                "running cost slope |f({t})−f({tp})| exceeds C0·|t−s| at state {}, action {u}",
                                i + 1
                            )));
                        }
                    }
                    prev = Some((t, f));
                }
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn grid(&self) -> &ActionGrid {
        &self.grid
    }

    pub fn generator(&self) -> &ControlledGenerator {
        &self.generator
    }

    pub fn costs(&self) -> &CostSpec {
        &self.costs
    }

    pub fn lyapunov(&self) -> Option<&LyapunovSpec> {
        self.lyapunov.as_ref()
    }

    /// f(t, i, u) for a grid action.
    pub fn running_cost(&self, t: f64, i: usize, u: usize) -> f64 {
        self.costs.running.eval(t, i, u, &self.grid)
    }

    /// f(t, i, μ) = Σ_u μ(u) f(t, i, u), affine in μ.
    pub fn running_cost_mixture(&self, t: f64, i: usize, mu: &Mixture) -> f64 {
        mu.weights()
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(|(u, &w)| w * self.running_cost(t, i, u))
            .sum()
    }

    pub fn terminal_cost(&self, i: usize) -> f64 {
        self.costs.terminal[i]
    }
}

/// Outcome of the mechanical H1–H3 check.
#[derive(Debug, Clone, serde::Serialize)]
pub struct AssumptionReport {
    pub h1_pass: bool,
    /// Computed M = max_{i,u} q_i(u).
    pub rate_bound: f64,
    pub h2_checked: bool,
    pub h2_pass: bool,
    /// max over (i, u) of Q_uΦ(i) − λ₀Φ(i) − κ₀·1_{B₀}(i); negative means
    /// the drift inequality holds with that margin. None without H2 data.
    pub h2_margin: Option<f64>,
    pub h3_pass: bool,
    pub bandwidth_declared: usize,
    /// max over stored positive rates of |j − i|.
    pub bandwidth_observed: usize,
}

impl AssumptionReport {
    /// True when every checkable assumption holds (H2 only if data exists).
    pub fn all_checked_pass(&self) -> bool {
        self.h1_pass && self.h3_pass && (!self.h2_checked || self.h2_pass)
    }
}

/// Verify H1–H3 on a constructed model. Structural well-formedness is
/// enforced at construction; this reports the assumption-level facts.
pub fn validate(model: &ModelSpec) -> AssumptionReport {
    let gen = model.generator();
    let h1_pass = gen
        .exit
        .iter()
        .all(|row| row.iter().all(|q| q.is_finite()));

    let mut bandwidth_observed = 0usize;
    for i in 0..gen.n_states() {
        for u in 0..gen.n_actions() {
            for &(j, _) in gen.neighbors(i, u) {
                bandwidth_observed = bandwidth_observed.max(i.abs_diff(j));
            }
        }
    }
    let h3_pass = bandwidth_observed <= gen.bandwidth();

    let (h2_checked, h2_pass, h2_margin) = match model.lyapunov() {
        None => (false, false, None),
        Some(ly) => {
            let mut margin = f64::NEG_INFINITY;
            for i in 0..gen.n_states() {
                for u in 0..gen.n_actions() {
                    let drift: f64 = gen
                        .neighbors(i, u)
                        .iter()
                        .map(|&(j, q)| q * (ly.phi[j] - ly.phi[i]))
                        .sum();
                    let bound =
                        ly.lambda0 * ly.phi[i] + if ly.in_b0(i) { ly.kappa0 } else { 0.0 };
                    margin = margin.max(drift - bound);
                }
            }
            (true, margin <= 1e-9, Some(margin))
        }
    };

    AssumptionReport {
        h1_pass,
        rate_bound: gen.rate_bound(),
        h2_checked,
        h2_pass,
        h2_margin,
        h3_pass,
        bandwidth_declared: gen.bandwidth(),
        bandwidth_observed,
    }
}
