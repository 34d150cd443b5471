//! Delay-dependent controls: the path shift operator
//! θ^k λ(t) = λ((t − k·r₀) ∨ s), the measurable policy map h, and
//! evaluation of the applied mixture μ_t = h(t, θ⁰Λ(t), ..., θ^mΛ(t))
//! from a realized path.
//!
//! Policy maps are piecewise-constant in t on a solver time grid (left
//! node for t ∈ [tₙ, tₙ₊₁)) and tabulated over state tuples on demand;
//! lazily derived values are pure functions of (seed, node, tuple), so
//! the internal cache is only an optimization and needs no ordering.

use std::collections::HashMap;
use std::sync::RwLock;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CtmdpError, Result};
use crate::hjb::{TimeGrid, ValueFunction};
use crate::model::{Mixture, ModelSpec};

/// Delay structure of Def-style controls: delay interval r₀, number of
/// delays m, and the start time s of the control problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayParams {
    pub r0: f64,
    pub m: usize,
    pub s: f64,
}

impl DelayParams {
    pub fn new(r0: f64, m: usize, s: f64, horizon: f64) -> Result<Self> {
        if m >= 1 && !(r0 > 0.0) {
            return Err(CtmdpError::MalformedPolicy(format!(
                "r0 = {r0} must be positive when m = {m} >= 1"
            )));
        }
        if !(s >= 0.0) || s >= horizon {
            return Err(CtmdpError::MalformedPolicy(format!(
                "start time s = {s} must lie in [0, T) with T = {horizon}"
            )));
        }
        Ok(Self { r0, m, s })
    }

    /// Markov-style parameters (no delay slots).
    pub fn markov(s: f64) -> Self {
        Self { r0: 1.0, m: 0, s }
    }
}

/// One càdlàg trajectory skeleton: states piecewise-constant and
/// right-continuous, states[k] holding on [τ_k, τ_{k+1}).
#[derive(Debug, Clone, PartialEq)]
pub struct PathSegment {
    start_time: f64,
    jump_times: Vec<f64>,
    states: Vec<usize>,
}

impl PathSegment {
    pub fn new(start_time: f64, start_state: usize) -> Self {
        Self {
            start_time,
            jump_times: Vec::new(),
            states: vec![start_state],
        }
    }

    pub fn from_parts(
        start_time: f64,
        start_state: usize,
        jumps: &[(f64, usize)],
    ) -> Result<Self> {
        let mut path = Self::new(start_time, start_state);
        for &(t, j) in jumps {
            path.push_jump(t, j)?;
        }
        Ok(path)
    }

    pub fn push_jump(&mut self, t: f64, state: usize) -> Result<()> {
        let last = self.jump_times.last().copied().unwrap_or(self.start_time);
        if t <= last {
            return Err(CtmdpError::TimeOutOfRange(format!(
                "jump time {t} does not increase past {last}"
            )));
        }
        if state == *self.states.last().unwrap() {
            return Err(CtmdpError::MalformedPolicy(format!(
                "jump at {t} does not change the state {state}"
            )));
        }
        self.jump_times.push(t);
        self.states.push(state);
        Ok(())
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn start_state(&self) -> usize {
        self.states[0]
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn n_jumps(&self) -> usize {
        self.jump_times.len()
    }

    /// Right-continuous lookup; times before the start clamp to the
    /// start state (the pre-s history convention).
    pub fn state_at(&self, t: f64) -> usize {
        let idx = self.jump_times.partition_point(|&x| x <= t);
        self.states[idx]
    }

    /// Terminal state of the segment.
    pub fn last_state(&self) -> usize {
        *self.states.last().unwrap()
    }

    /// First jump time strictly after the start, if any.
    pub fn first_jump(&self) -> Option<f64> {
        self.jump_times.first().copied()
    }
}

/// θ^k λ evaluated at t: the path state at (t − k·r₀) ∨ s.
pub fn shift_eval(path: &PathSegment, k: usize, r0: f64, s: f64, t: f64) -> Result<usize> {
    if t < s {
        return Err(CtmdpError::TimeOutOfRange(format!(
            "shift query at t = {t} before start s = {s}"
        )));
    }
    let te = (t - k as f64 * r0).max(s);
    Ok(path.state_at(te))
}

/// Which policy family a `DelayPolicy` belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// h(t, i₀): depends on the current state only (m = 0).
    Markov,
    /// h(t, i₀, ..., i_m): reads the delayed slots.
    Delayed,
    /// h(t, i₀, ..., i_m) with m ≥ 2.
    MultiDelay,
    /// Dirac-valued h: a deterministic action curve.
    DeterministicCurve,
    /// Dirac at the HJB Hamiltonian minimizer.
    Feedback,
}

enum PolicyMap {
    /// Uniform mixture everywhere.
    Uniform { n_actions: usize },
    /// Constant point mass.
    Dirac { u: usize, n_actions: usize },
    /// Entries keyed by (time node, state tuple); missing tuples fall
    /// back to the uniform mixture.
    Table {
        tgrid: TimeGrid,
        n_actions: usize,
        entries: HashMap<(usize, Vec<usize>), Mixture>,
    },
    /// Dirac at the value function's per-node minimizer of the current
    /// state; delayed slots are ignored by construction.
    Feedback {
        tgrid: TimeGrid,
        n_actions: usize,
        argmin: Vec<Vec<usize>>,
    },
    /// Mixture drawn uniformly from the simplex (Dirichlet(1,...,1)),
    /// a pure function of (seed, time node, state tuple).
    RandomSimplex {
        tgrid: TimeGrid,
        n_actions: usize,
        seed: u64,
        cache: RwLock<HashMap<(usize, Vec<usize>), Mixture>>,
    },
}

/// A randomized delay-dependent control: delay parameters plus the
/// measurable map h from (t, θ⁰Λ(t), ..., θ^mΛ(t)) to mixtures.
pub struct DelayPolicy {
    params: DelayParams,
    kind: PolicyKind,
    map: PolicyMap,
}

impl DelayPolicy {
    pub fn params(&self) -> &DelayParams {
        &self.params
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn n_actions(&self) -> usize {
        match &self.map {
            PolicyMap::Uniform { n_actions }
            | PolicyMap::Dirac { n_actions, .. }
            | PolicyMap::Table { n_actions, .. }
            | PolicyMap::Feedback { n_actions, .. }
            | PolicyMap::RandomSimplex { n_actions, .. } => *n_actions,
        }
    }

    pub fn uniform(params: DelayParams, n_actions: usize) -> Self {
        Self {
            params,
            kind: PolicyKind::Markov,
            map: PolicyMap::Uniform { n_actions },
        }
    }

    pub fn dirac(params: DelayParams, u: usize, n_actions: usize) -> Result<Self> {
        if u >= n_actions {
            return Err(CtmdpError::IndexOutOfRange(format!(
                "action {u} out of 0..{n_actions}"
            )));
        }
        Ok(Self {
            params,
            kind: PolicyKind::Markov,
            map: PolicyMap::Dirac { u, n_actions },
        })
    }

    /// Tabulated policy; entries are keyed on all m+1 slots. Markov and
    /// feedback kinds must have m = 0 so that h structurally ignores
    /// delayed slots.
    pub fn from_table(
        params: DelayParams,
        kind: PolicyKind,
        tgrid: TimeGrid,
        n_actions: usize,
        entries: HashMap<(usize, Vec<usize>), Mixture>,
    ) -> Result<Self> {
        if matches!(kind, PolicyKind::Markov | PolicyKind::Feedback) && params.m != 0 {
            return Err(CtmdpError::MalformedPolicy(format!(
                "{kind:?} policies must have m = 0, got m = {}",
                params.m
            )));
        }
        let n_nodes = tgrid.n_steps() + 1;
        for ((t_idx, tuple), mix) in &entries {
            if *t_idx >= n_nodes {
                return Err(CtmdpError::MalformedPolicy(format!(
                    "table time index {t_idx} out of 0..{n_nodes}"
                )));
            }
            if tuple.len() != params.m + 1 {
                return Err(CtmdpError::MalformedPolicy(format!(
                    "table tuple {tuple:?} has {} states, expected m+1 = {}",
                    tuple.len(),
                    params.m + 1
                )));
            }
            if mix.len() != n_actions {
                return Err(CtmdpError::MalformedPolicy(format!(
                    "table mixture has {} weights, expected {n_actions}",
                    mix.len()
                )));
            }
        }
        Ok(Self {
            params,
            kind,
            map: PolicyMap::Table {
                tgrid,
                n_actions,
                entries,
            },
        })
    }

    /// Tabulated view of the policy on a time grid: every stored or
    /// derivable (node, tuple) entry, for dumping to the policy file
    /// format. Tuples range over all (m+1)-tuples of model states, so
    /// this is meant for small m.
    pub fn materialize(
        &self,
        n_states: usize,
    ) -> Result<(TimeGrid, Vec<(usize, Vec<usize>, Mixture)>)> {
        let tgrid = match &self.map {
            PolicyMap::Table { tgrid, .. }
            | PolicyMap::Feedback { tgrid, .. }
            | PolicyMap::RandomSimplex { tgrid, .. } => tgrid.clone(),
            PolicyMap::Uniform { .. } | PolicyMap::Dirac { .. } => TimeGrid::uniform(1.0, 2)?,
        };
        let slots = self.params.m + 1;
        let tuple_count = n_states.checked_pow(slots as u32).ok_or_else(|| {
            CtmdpError::ComplexityBudgetExceeded("policy table too large to materialize".into())
        })?;
        if tuple_count.saturating_mul(tgrid.n_steps() + 1) > 2_000_000 {
            return Err(CtmdpError::ComplexityBudgetExceeded(format!(
                "policy table of {} entries exceeds the dump budget",
                tuple_count * (tgrid.n_steps() + 1)
            )));
        }
        let mut rows = Vec::new();
        for t_idx in 0..=tgrid.n_steps() {
            let mut tuple = vec![0usize; slots];
            loop {
                let mix = self.eval(t_idx, &tuple)?;
                rows.push((t_idx, tuple.clone(), mix));
                // odometer increment over the tuple
                let mut pos = slots;
                loop {
                    if pos == 0 {
                        break;
                    }
                    pos -= 1;
                    tuple[pos] += 1;
                    if tuple[pos] < n_states {
                        break;
                    }
                    tuple[pos] = 0;
                }
                if tuple.iter().all(|&x| x == 0) {
                    break;
                }
            }
        }
        Ok((tgrid, rows))
    }

    fn eval(&self, t_idx: usize, tuple: &[usize]) -> Result<Mixture> {
        match &self.map {
            PolicyMap::Uniform { n_actions } => Ok(Mixture::uniform(*n_actions)),
            PolicyMap::Dirac { u, n_actions } => Ok(Mixture::dirac(*u, *n_actions)),
            PolicyMap::Feedback { argmin, n_actions, .. } => {
                let i0 = tuple[0];
                let row = argmin.get(t_idx).ok_or_else(|| {
                    CtmdpError::IndexOutOfRange(format!("feedback node {t_idx} out of range"))
                })?;
                let u = *row.get(i0).ok_or_else(|| {
                    CtmdpError::IndexOutOfRange(format!("feedback state {i0} out of range"))
                })?;
                Ok(Mixture::dirac(u, *n_actions))
            }
            PolicyMap::Table {
                entries, n_actions, ..
            } => Ok(entries
                .get(&(t_idx, tuple.to_vec()))
                .cloned()
                .unwrap_or_else(|| Mixture::uniform(*n_actions))),
            PolicyMap::RandomSimplex {
                n_actions,
                seed,
                cache,
                ..
            } => {
                let key = (t_idx, tuple.to_vec());
                if let Some(hit) = cache.read().unwrap().get(&key) {
                    return Ok(hit.clone());
                }
                let mix = sample_simplex(*seed, t_idx, tuple, *n_actions);
                cache.write().unwrap().insert(key, mix.clone());
                Ok(mix)
            }
        }
    }

    /// Time grid the map is piecewise-constant on, when it has one.
    pub fn tgrid(&self) -> Option<&TimeGrid> {
        match &self.map {
            PolicyMap::Table { tgrid, .. }
            | PolicyMap::Feedback { tgrid, .. }
            | PolicyMap::RandomSimplex { tgrid, .. } => Some(tgrid),
            PolicyMap::Uniform { .. } | PolicyMap::Dirac { .. } => None,
        }
    }
}

impl std::fmt::Debug for DelayPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DelayPolicy")
            .field("params", &self.params)
            .field("kind", &self.kind)
            .finish_non_exhaustive()
    }
}

/// Uniform simplex sample from a counter-style stream keyed by
/// (seed, node, tuple): normalized iid Exp(1) draws.
fn sample_simplex(seed: u64, t_idx: usize, tuple: &[usize], n_actions: usize) -> Mixture {
    let mut h = splitmix64(seed ^ 0xD6E8_FEB8_6659_FD93);
    h = splitmix64(h ^ t_idx as u64);
    for &s in tuple {
        h = splitmix64(h ^ (s as u64).wrapping_add(0x9E37_79B9_7F4A_7C15));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(h);
    let draws: Vec<f64> = (0..n_actions)
        .map(|_| -f64::ln(1.0 - rng.gen::<f64>()))
        .collect();
    let sum: f64 = draws.iter().sum();
    Mixture::new(draws.iter().map(|x| x / sum).collect())
        .expect("normalized exponential draws form a mixture")
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// μ_t for a policy against a realized path: all m+1 shift lookups are
/// evaluated, then h is applied to the tuple.
pub fn control_at(policy: &DelayPolicy, path: &PathSegment, t: f64) -> Result<Mixture> {
    let p = policy.params;
    if t < p.s {
        return Err(CtmdpError::TimeOutOfRange(format!(
            "control query at t = {t} before policy start s = {}",
            p.s
        )));
    }
    let mut tuple = Vec::with_capacity(p.m + 1);
    for k in 0..=p.m {
        tuple.push(shift_eval(path, k, p.r0, p.s, t)?);
    }
    let t_idx = policy.tgrid().map(|g| g.left_index(t)).unwrap_or(0);
    policy.eval(t_idx, &tuple)
}

/// Markov feedback policy realizing the Hamiltonian minimizer of a
/// solved value function: h(t, i) = δ at argmin, left node in t.
pub fn feedback_from_value(value: &ValueFunction, model: &ModelSpec) -> Result<DelayPolicy> {
    if value.n_states() != model.n_states() {
        return Err(CtmdpError::GridMismatch(format!(
            "value function over {} states, model has {}",
            value.n_states(),
            model.n_states()
        )));
    }
    let grid = value.grid().clone();
    let argmin: Vec<Vec<usize>> = (0..=grid.n_steps())
        .map(|n| (0..model.n_states()).map(|i| value.argmin(n, i)).collect())
        .collect();
    Ok(DelayPolicy {
        params: DelayParams::markov(0.0),
        kind: PolicyKind::Feedback,
        map: PolicyMap::Feedback {
            tgrid: grid,
            n_actions: model.grid().len(),
            argmin,
        },
    })
}

/// Seeded random delay policy: mixtures drawn uniformly from the simplex,
/// piecewise-constant on the given solver grid, tabulated over the m+1
/// state slots on demand.
pub fn random_delay_policy(
    model: &ModelSpec,
    grid: &TimeGrid,
    params: DelayParams,
    seed: u64,
) -> DelayPolicy {
    let kind = match params.m {
        0 => PolicyKind::Markov,
        1 => PolicyKind::Delayed,
        _ => PolicyKind::MultiDelay,
    };
    DelayPolicy {
        params,
        kind,
        map: PolicyMap::RandomSimplex {
            tgrid: grid.clone(),
            n_actions: model.grid().len(),
            seed,
            cache: RwLock::new(HashMap::new()),
        },
    }
}
