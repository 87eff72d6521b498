//! Backward value iteration on a rectilinear state grid, threshold-feasible
//! control sets, and exact policy evaluation under a finite-support
//! distribution.
//!
//! Grid values are interpolated between nodes. The true value functions are
//! only upper semi-continuous, so neither interpolation mode reproduces them
//! exactly near discontinuities; the pessimistic mode errs low.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambiguity::{AmbiguitySet, NominalDistribution};
use crate::dro_dual::{argmax_first, robust_bellman_all, DualSolveResult, SolverConfig, ValueEvaluator};
use crate::error::{check_dim, Error, Result};
use crate::model::{axis_points, BoxRegion, Region, SystemModel};

const RANGE_SLACK: f64 = 1e-9;
const NODE_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecKind {
    ReachAvoid,
    Safety,
}

impl fmt::Display for SpecKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpecKind::ReachAvoid => "reach_avoid",
            SpecKind::Safety => "safety",
        })
    }
}

impl FromStr for SpecKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reach_avoid" | "reach-avoid" => Ok(SpecKind::ReachAvoid),
            "safety" => Ok(SpecKind::Safety),
            other => Err(Error::Config(format!("unknown spec kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    Multilinear,
    /// Minimum over the corners of the enclosing cell.
    Pessimistic,
}

/// How the stored input is chosen among the enumerated inputs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum PolicyRule {
    /// Bellman argmax, ties to the first enumerated input.
    #[default]
    Optimal,
    /// The first enumerated input whenever its robust value reaches
    /// `alpha`; otherwise the argmax over the remaining inputs.
    PreferFirst { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisOptions {
    pub interpolation: Interpolation,
    pub policy_rule: PolicyRule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateGrid {
    working: BoxRegion,
    points: Vec<usize>,
    axes: Vec<Vec<f64>>,
    len: usize,
}

impl StateGrid {
    pub fn new(working: BoxRegion, points: Vec<usize>) -> Result<Self> {
        check_dim(working.dim(), points.len(), "grid points per dimension")?;
        if points.iter().any(|&n| n < 2) {
            return Err(Error::Config("state grid needs >= 2 points per dimension".into()));
        }
        if working.lower().iter().zip(working.upper()).any(|(l, u)| l >= u) {
            return Err(Error::Config("working box must have positive width".into()));
        }
        let axes: Vec<Vec<f64>> = (0..working.dim())
            .map(|d| axis_points(working.lower()[d], working.upper()[d], points[d]))
            .collect();
        let len = points
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .ok_or_else(|| Error::Config("state grid too large".into()))?;
        Ok(Self {
            working,
            points,
            axes,
            len,
        })
    }

    pub fn uniform(working: BoxRegion, per_dim: usize) -> Result<Self> {
        let n = working.dim();
        Self::new(working, vec![per_dim; n])
    }

    /// Grid whose spacing is at most `resolution` in every dimension.
    pub fn with_resolution(working: BoxRegion, resolution: f64) -> Result<Self> {
        if !(resolution > 0.0) {
            return Err(Error::Config("grid resolution must be positive".into()));
        }
        let points = working
            .lower()
            .iter()
            .zip(working.upper())
            .map(|(l, u)| ((u - l) / resolution - 1e-9).ceil().max(1.0) as usize + 1)
            .collect();
        Self::new(working, points)
    }

    pub fn working_box(&self) -> &BoxRegion {
        &self.working
    }

    pub fn dim(&self) -> usize {
        self.points.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn points_per_dim(&self) -> &[usize] {
        &self.points
    }

    pub fn axis(&self, d: usize) -> &[f64] {
        &self.axes[d]
    }

    /// Node coordinates. The last dimension varies fastest.
    pub fn node(&self, mut index: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        for d in (0..self.dim()).rev() {
            x[d] = self.axes[d][index % self.points[d]];
            index /= self.points[d];
        }
        x
    }

    pub fn nodes(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len).map(|i| self.node(i))
    }

    fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.points).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    /// Index of the node nearest to `x` (clamped into the working box).
    pub fn nearest_index(&self, x: &[f64]) -> usize {
        let idx: Vec<usize> = (0..self.dim())
            .map(|d| {
                let (lo, hi, n) = (self.working.lower()[d], self.working.upper()[d], self.points[d]);
                let s = (x[d] - lo) / (hi - lo) * (n - 1) as f64;
                if s.is_nan() {
                    0
                } else {
                    s.round().clamp(0.0, (n - 1) as f64) as usize
                }
            })
            .collect();
        self.flat(&idx)
    }

    /// Lower cell index and fractional offset of `x` along axis `d`.
    #[inline]
    fn locate_axis(&self, d: usize, x: f64) -> (usize, f64) {
        let (lo, hi, n) = (self.working.lower()[d], self.working.upper()[d], self.points[d]);
        let s = (x - lo) / (hi - lo) * (n - 1) as f64;
        let i0 = (s.floor().max(0.0) as usize).min(n - 2);
        let mut frac = (s - i0 as f64).clamp(0.0, 1.0);
        if frac < NODE_SNAP {
            frac = 0.0;
        } else if frac > 1.0 - NODE_SNAP {
            frac = 1.0;
        }
        (i0, frac)
    }

    fn locate(&self, x: &[f64], out: &mut Vec<(usize, f64)>) {
        out.clear();
        out.extend((0..self.dim()).map(|d| self.locate_axis(d, x[d])));
    }
}

/// One stage of values plus the region structure needed to evaluate it
/// anywhere in the state space.
struct StageView<'a> {
    grid: &'a StateGrid,
    values: &'a [f64],
    safe: &'a Region,
    target: Option<&'a Region>,
    kind: SpecKind,
    terminal: bool,
    interpolation: Interpolation,
    clamped: &'a AtomicU64,
}

impl StageView<'_> {
    fn query(&self, x: &[f64]) -> f64 {
        if x.iter().any(|v| !v.is_finite()) || !self.safe.contains_unchecked(x) {
            return 0.0;
        }
        if self.kind == SpecKind::ReachAvoid {
            if self.target.is_some_and(|g| g.contains_unchecked(x)) {
                return 1.0;
            }
            if self.terminal {
                return 0.0;
            }
        } else if self.terminal {
            return 1.0;
        }
        let inside = self.grid.working.contains_unchecked(x);
        if !inside {
            self.clamped.fetch_add(1, Ordering::Relaxed);
        }
        interpolate(self.grid, self.values, x, self.interpolation).clamp(0.0, 1.0)
    }
}

fn interpolate(grid: &StateGrid, values: &[f64], x: &[f64], mode: Interpolation) -> f64 {
    let n = grid.dim();
    if n == 1 {
        let (i0, t) = grid.locate_axis(0, x[0]);
        let (a, b) = (values[i0], values[i0 + 1]);
        return match mode {
            Interpolation::Multilinear => {
                if t == 0.0 {
                    a
                } else if t == 1.0 {
                    b
                } else {
                    a + t * (b - a)
                }
            }
            Interpolation::Pessimistic => {
                if t == 0.0 {
                    a
                } else if t == 1.0 {
                    b
                } else {
                    a.min(b)
                }
            }
        };
    }
    let mut cell = Vec::with_capacity(n);
    grid.locate(x, &mut cell);
    let mut idx = vec![0usize; n];
    let mut acc = 0.0;
    let mut worst = f64::INFINITY;
    for corner in 0..(1usize << n) {
        let mut weight = 1.0;
        for d in 0..n {
            let (i0, t) = cell[d];
            if corner >> d & 1 == 1 {
                idx[d] = i0 + 1;
                weight *= t;
            } else {
                idx[d] = i0;
                weight *= 1.0 - t;
            }
        }
        if weight == 0.0 {
            continue;
        }
        let v = values[grid.flat(&idx)];
        acc += weight * v;
        worst = worst.min(v);
    }
    match mode {
        Interpolation::Multilinear => acc,
        Interpolation::Pessimistic => worst,
    }
}

/// Per-stage values on a [`StateGrid`], indexed `0..=T`.
#[derive(Debug)]
pub struct ValueGrid {
    grid: StateGrid,
    stages: Vec<Vec<f64>>,
    kind: SpecKind,
    safe: Region,
    target: Option<Region>,
    interpolation: Interpolation,
    clamped: AtomicU64,
}

impl Clone for ValueGrid {
    fn clone(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            stages: self.stages.clone(),
            kind: self.kind,
            safe: self.safe.clone(),
            target: self.target.clone(),
            interpolation: self.interpolation,
            clamped: AtomicU64::new(self.clamped.load(Ordering::Relaxed)),
        }
    }
}

impl PartialEq for ValueGrid {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid
            && self.stages == other.stages
            && self.kind == other.kind
            && self.safe == other.safe
            && self.target == other.target
            && self.interpolation == other.interpolation
    }
}

impl ValueGrid {
    /// Assembles a value grid from stored stages (e.g. a cache file).
    pub fn from_parts(
        model: &SystemModel,
        grid: StateGrid,
        stages: Vec<Vec<f64>>,
        kind: SpecKind,
        interpolation: Interpolation,
    ) -> Result<Self> {
        check_dim(model.state_dim(), grid.dim(), "state grid")?;
        if stages.len() != model.horizon() + 1 {
            return Err(Error::Config(format!(
                "expected {} stages, got {}",
                model.horizon() + 1,
                stages.len()
            )));
        }
        for s in &stages {
            check_dim(grid.len(), s.len(), "stage values")?;
        }
        let target = match kind {
            SpecKind::ReachAvoid => Some(
                model
                    .target()
                    .cloned()
                    .ok_or_else(|| Error::InvalidModel("reach-avoid needs a target region".into()))?,
            ),
            SpecKind::Safety => None,
        };
        Ok(Self {
            grid,
            stages,
            kind,
            safe: model.safe().clone(),
            target,
            interpolation,
            clamped: AtomicU64::new(0),
        })
    }

    pub fn grid(&self) -> &StateGrid {
        &self.grid
    }

    pub fn spec_kind(&self) -> SpecKind {
        self.kind
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    /// The horizon `T`; stages run `0..=T`.
    pub fn horizon(&self) -> usize {
        self.stages.len() - 1
    }

    pub fn stage(&self, t: usize) -> &[f64] {
        &self.stages[t]
    }

    pub fn stages(&self) -> &[Vec<f64>] {
        &self.stages
    }

    /// Number of queries inside S but outside the working box, answered by
    /// clamping to the nearest face.
    pub fn clamped_queries(&self) -> u64 {
        self.clamped.load(Ordering::Relaxed)
    }

    fn view(&self, t: usize) -> StageView<'_> {
        StageView {
            grid: &self.grid,
            values: &self.stages[t],
            safe: &self.safe,
            target: self.target.as_ref(),
            kind: self.kind,
            terminal: t == self.horizon(),
            interpolation: self.interpolation,
            clamped: &self.clamped,
        }
    }

    /// `v_t(x)`: structural values in G and outside S, the indicator at the
    /// terminal stage, interpolated grid values elsewhere.
    pub fn query_value(&self, t: usize, x: &[f64]) -> Result<f64> {
        if t > self.horizon() {
            return Err(Error::Argument(format!("stage {t} beyond horizon {}", self.horizon())));
        }
        check_dim(self.grid.dim(), x.len(), "query state")?;
        Ok(self.view(t).query(x))
    }
}

/// Per-stage inputs on a [`StateGrid`], indexed `0..T`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    grid: StateGrid,
    input_dim: usize,
    stages: Vec<Vec<f64>>,
}

impl PolicyTable {
    pub fn from_parts(grid: StateGrid, input_dim: usize, stages: Vec<Vec<f64>>) -> Result<Self> {
        for s in &stages {
            check_dim(grid.len() * input_dim, s.len(), "policy stage")?;
        }
        Ok(Self {
            grid,
            input_dim,
            stages,
        })
    }

    pub fn grid(&self) -> &StateGrid {
        &self.grid
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn input(&self, t: usize, node: usize) -> &[f64] {
        &self.stages[t][node * self.input_dim..(node + 1) * self.input_dim]
    }

    /// Flattened inputs of stage `t`, node-major.
    pub fn stage(&self, t: usize) -> &[f64] {
        &self.stages[t]
    }

    /// Input at the node nearest to `x`.
    pub fn lookup(&self, t: usize, x: &[f64]) -> &[f64] {
        self.input(t, self.grid.nearest_index(x))
    }
}

fn check_grid_covers(model: &SystemModel, grid: &StateGrid) -> Result<()> {
    check_dim(model.state_dim(), grid.dim(), "state grid")?;
    if let Region::Box(s) = model.safe() {
        let w = grid.working_box();
        let covered = s
            .lower()
            .iter()
            .zip(s.upper())
            .zip(w.lower().iter().zip(w.upper()))
            .all(|((sl, su), (wl, wu))| wl <= sl && su <= wu);
        if !covered {
            return Err(Error::Config("working box does not cover the safe region".into()));
        }
    }
    Ok(())
}

fn target_for(model: &SystemModel, kind: SpecKind) -> Result<Option<&Region>> {
    match kind {
        SpecKind::ReachAvoid => model
            .target()
            .map(Some)
            .ok_or_else(|| Error::InvalidModel("reach-avoid needs a target region".into())),
        SpecKind::Safety => Ok(None),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum NodeClass {
    Unsafe,
    Target,
    Interior,
}

fn classify(model: &SystemModel, grid: &StateGrid, kind: SpecKind) -> Vec<NodeClass> {
    grid.nodes()
        .map(|x| {
            if !model.safe().contains_unchecked(&x) {
                NodeClass::Unsafe
            } else if kind == SpecKind::ReachAvoid
                && model.target().is_some_and(|g| g.contains_unchecked(&x))
            {
                NodeClass::Target
            } else {
                NodeClass::Interior
            }
        })
        .collect()
}

fn terminal_values(classes: &[NodeClass], kind: SpecKind) -> Vec<f64> {
    classes
        .iter()
        .map(|c| match (c, kind) {
            (NodeClass::Unsafe, _) => 0.0,
            (NodeClass::Target, _) => 1.0,
            (NodeClass::Interior, SpecKind::Safety) => 1.0,
            (NodeClass::Interior, SpecKind::ReachAvoid) => 0.0,
        })
        .collect()
}

fn choose(all: Vec<DualSolveResult>, rule: PolicyRule) -> DualSolveResult {
    let PolicyRule::PreferFirst { alpha } = rule else {
        return argmax_first(all);
    };
    if all.len() == 1 {
        return argmax_first(all);
    }
    // the stored value stays the optimum; only the input changes
    let value = all.iter().map(|r| r.value).fold(f64::NEG_INFINITY, f64::max);
    let mut iter = all.into_iter();
    let head = iter.next().expect("input enumeration is non-empty");
    let mut pick = if head.value >= alpha {
        head
    } else {
        argmax_first(iter.collect())
    };
    pick.value = value;
    pick
}

/// Robust value iteration with default options (multilinear interpolation,
/// Bellman-optimal inputs).
pub fn value_iteration(
    model: &SystemModel,
    amb: &AmbiguitySet,
    grid: &StateGrid,
    cfg: &SolverConfig,
    kind: SpecKind,
) -> Result<(ValueGrid, PolicyTable)> {
    value_iteration_with(model, amb, grid, cfg, kind, &SynthesisOptions::default())
}

pub fn value_iteration_with(
    model: &SystemModel,
    amb: &AmbiguitySet,
    grid: &StateGrid,
    cfg: &SolverConfig,
    kind: SpecKind,
    opts: &SynthesisOptions,
) -> Result<(ValueGrid, PolicyTable)> {
    cfg.validate()?;
    check_grid_covers(model, grid)?;
    check_dim(model.disturbance_dim(), amb.nominal().dim(), "nominal atoms")?;
    let target = target_for(model, kind)?;
    let horizon = model.horizon();
    let inputs = model.input_set().enumerate(cfg.input_grid)?;
    let first = inputs[0].clone();
    let classes = classify(model, grid, kind);
    let clamped = AtomicU64::new(0);

    let mut stages = vec![Vec::new(); horizon + 1];
    stages[horizon] = terminal_values(&classes, kind);
    let mut policy = vec![Vec::new(); horizon];

    for t in (0..horizon).rev() {
        let next = StageView {
            grid,
            values: &stages[t + 1],
            safe: model.safe(),
            target,
            kind,
            terminal: t + 1 == horizon,
            interpolation: opts.interpolation,
            clamped: &clamped,
        };
        let query = |y: &[f64]| next.query(y);
        let v = ValueEvaluator::new(&query, format!("v_{}", t + 1));
        let solved: Vec<Result<(f64, Vec<f64>)>> = (0..grid.len())
            .into_par_iter()
            .map(|node| match classes[node] {
                NodeClass::Unsafe => Ok((0.0, first.clone())),
                NodeClass::Target => Ok((1.0, first.clone())),
                NodeClass::Interior => {
                    let x = grid.node(node);
                    let all = robust_bellman_all(&v, model, &x, amb, cfg)?;
                    let best = choose(all, opts.policy_rule);
                    if !(best.value >= -RANGE_SLACK && best.value <= 1.0 + RANGE_SLACK) {
                        return Err(Error::ValueOutOfRange {
                            stage: t,
                            node,
                            value: best.value,
                        });
                    }
                    Ok((best.value.clamp(0.0, 1.0), best.u_star))
                }
            })
            .collect();
        let mut values = Vec::with_capacity(grid.len());
        let mut inputs_t = Vec::with_capacity(grid.len() * first.len());
        for r in solved {
            let (val, u) = r?;
            values.push(val);
            inputs_t.extend_from_slice(&u);
        }
        stages[t] = values;
        policy[t] = inputs_t;
    }

    let vg = ValueGrid {
        grid: grid.clone(),
        stages,
        kind,
        safe: model.safe().clone(),
        target: target.cloned(),
        interpolation: opts.interpolation,
        clamped,
    };
    let table = PolicyTable {
        grid: grid.clone(),
        input_dim: first.len(),
        stages: policy,
    };
    Ok((vg, table))
}

/// Inputs whose worst-case expected `v_{t+1}` reaches `alpha`, in
/// enumeration order.
pub fn feasible_controls(
    model: &SystemModel,
    amb: &AmbiguitySet,
    vg: &ValueGrid,
    t: usize,
    x: &[f64],
    alpha: f64,
    cfg: &SolverConfig,
) -> Result<Vec<Vec<f64>>> {
    if t >= vg.horizon() {
        return Err(Error::Argument(format!("stage {t} has no successor")));
    }
    let next = vg.view(t + 1);
    let query = |y: &[f64]| next.query(y);
    let v = ValueEvaluator::new(&query, format!("v_{}", t + 1));
    Ok(robust_bellman_all(&v, model, x, amb, cfg)?
        .into_iter()
        .filter(|r| r.value >= alpha)
        .map(|r| r.u_star)
        .collect())
}

/// Exact expectation recursion for a fixed policy under a finite-support
/// distribution: `V_t(x) = [structure] Σ p_i V_{t+1}(f(x, π_t(x), ŵ_i))`.
/// The policy is looked up at the nearest node of its own grid.
pub fn evaluate_fixed_distribution(
    model: &SystemModel,
    policy: &PolicyTable,
    dist: &NominalDistribution,
    grid: &StateGrid,
    kind: SpecKind,
) -> Result<ValueGrid> {
    evaluate_fixed_distribution_with(model, policy, dist, grid, kind, Interpolation::Multilinear)
}

pub fn evaluate_fixed_distribution_with(
    model: &SystemModel,
    policy: &PolicyTable,
    dist: &NominalDistribution,
    grid: &StateGrid,
    kind: SpecKind,
    interpolation: Interpolation,
) -> Result<ValueGrid> {
    check_dim(model.state_dim(), grid.dim(), "state grid")?;
    check_dim(model.state_dim(), policy.grid().dim(), "policy grid")?;
    check_dim(model.input_dim(), policy.input_dim(), "policy inputs")?;
    check_dim(model.disturbance_dim(), dist.dim(), "distribution atoms")?;
    if policy.horizon() != model.horizon() {
        return Err(Error::Argument(format!(
            "policy covers {} stages, model horizon is {}",
            policy.horizon(),
            model.horizon()
        )));
    }
    let target = target_for(model, kind)?;
    let horizon = model.horizon();
    let classes = classify(model, grid, kind);
    let clamped = AtomicU64::new(0);
    let mut stages = vec![Vec::new(); horizon + 1];
    stages[horizon] = terminal_values(&classes, kind);

    for t in (0..horizon).rev() {
        let next = StageView {
            grid,
            values: &stages[t + 1],
            safe: model.safe(),
            target,
            kind,
            terminal: t + 1 == horizon,
            interpolation,
            clamped: &clamped,
        };
        let values: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|node| match classes[node] {
                NodeClass::Unsafe => 0.0,
                NodeClass::Target => 1.0,
                NodeClass::Interior => {
                    let x = grid.node(node);
                    let u = policy.lookup(t, &x);
                    let mut y = vec![0.0; x.len()];
                    dist.atoms()
                        .iter()
                        .map(|(w, p)| {
                            model.step_into(&x, u, w, &mut y);
                            p * next.query(&y)
                        })
                        .sum::<f64>()
                        .clamp(0.0, 1.0)
                }
            })
            .collect();
        stages[t] = values;
    }
    Ok(ValueGrid {
        grid: grid.clone(),
        stages,
        kind,
        safe: model.safe().clone(),
        target: target.cloned(),
        interpolation,
        clamped,
    })
}

/// Probe points of `X0` on a grid of the given resolution over its bounding
/// box, filtered by membership.
pub fn initial_probes(model: &SystemModel, resolution: f64) -> Result<Vec<Vec<f64>>> {
    if !(resolution > 0.0) {
        return Err(Error::Argument("resolution must be positive".into()));
    }
    let bb = model
        .init()
        .bounding_box()
        .ok_or_else(|| Error::Argument("initial region is unbounded".into()))?;
    let axes: Vec<Vec<f64>> = bb
        .lower()
        .iter()
        .zip(bb.upper())
        .map(|(&l, &u)| {
            let n = ((u - l) / resolution - 1e-9).ceil().max(0.0) as usize + 1;
            axis_points(l, u, n)
        })
        .collect();
    Ok(crate::model::tensor_product(&axes)
        .into_iter()
        .filter(|x| model.init().contains_unchecked(x))
        .collect())
}

/// Smallest stage-0 value over the initial-region probes, with the first
/// probe attaining it.
pub fn min_over_initial(vg: &ValueGrid, model: &SystemModel, resolution: f64) -> Result<(f64, Vec<f64>)> {
    let probes = initial_probes(model, resolution)?;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for x in probes {
        let v = vg.query_value(0, &x)?;
        if best.as_ref().map_or(true, |b| v < b.0) {
            best = Some((v, x));
        }
    }
    best.ok_or_else(|| Error::Argument("no probe point falls inside the initial region".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_system, BuiltinSystem, InputSet};
    use crate::polynomial::Polynomial;

    fn room() -> SystemModel {
        builtin_system(BuiltinSystem::RoomTemperature)
    }

    fn room_grid() -> StateGrid {
        StateGrid::with_resolution(BoxRegion::interval(23.0, 26.0).unwrap(), 0.01).unwrap()
    }

    fn nominal_amb(theta: f64) -> AmbiguitySet {
        let n = NominalDistribution::new(
            [-0.1, -0.05, 0.0, 0.05, 0.1].iter().map(|&w| (vec![w], 0.2)).collect(),
        )
        .unwrap();
        AmbiguitySet::new(n, theta, 1.0).unwrap()
    }

    fn const_grid(model: &SystemModel, grid: &StateGrid, c: f64) -> ValueGrid {
        let stages = vec![vec![c; grid.len()]; model.horizon() + 1];
        ValueGrid::from_parts(model, grid.clone(), stages, SpecKind::ReachAvoid, Interpolation::Multilinear).unwrap()
    }

    #[test]
    fn grid_nodes_are_exact() {
        let g = room_grid();
        assert_eq!(g.len(), 301);
        assert_eq!(g.node(140), vec![24.4]);
        assert_eq!(g.node(160), vec![24.6]);
        assert_eq!(g.nearest_index(&[24.404]), 140);
        assert_eq!(g.nearest_index(&[100.0]), 300);
    }

    #[test]
    fn query_structure() {
        let m = room();
        let g = room_grid();
        let vg = const_grid(&m, &g, 0.5);
        assert_eq!(vg.query_value(3, &[24.5]).unwrap(), 1.0);
        assert_eq!(vg.query_value(3, &[22.9]).unwrap(), 0.0);
        assert_eq!(vg.query_value(3, &[23.5]).unwrap(), 0.5);
        assert_eq!(vg.query_value(12, &[23.5]).unwrap(), 0.0);
    }

    #[test]
    fn query_at_node_returns_stored_value() {
        let m = room();
        let g = room_grid();
        let stages: Vec<Vec<f64>> = (0..=12)
            .map(|_| (0..g.len()).map(|i| (i % 7) as f64 / 7.0).collect())
            .collect();
        for mode in [Interpolation::Multilinear, Interpolation::Pessimistic] {
            let vg = ValueGrid::from_parts(&m, g.clone(), stages.clone(), SpecKind::ReachAvoid, mode).unwrap();
            for i in [0usize, 17, 99, 139, 161, 300] {
                let x = g.node(i);
                assert_eq!(vg.query_value(5, &x).unwrap(), stages[5][i], "node {i}");
            }
        }
    }

    #[test]
    fn pessimistic_takes_corner_minimum() {
        let m = room();
        let g = room_grid();
        let stages: Vec<Vec<f64>> = (0..=12).map(|_| (0..g.len()).map(|i| (i % 2) as f64).collect()).collect();
        let p = ValueGrid::from_parts(&m, g.clone(), stages.clone(), SpecKind::ReachAvoid, Interpolation::Pessimistic).unwrap();
        let l = ValueGrid::from_parts(&m, g, stages, SpecKind::ReachAvoid, Interpolation::Multilinear).unwrap();
        assert_eq!(p.query_value(0, &[23.005]).unwrap(), 0.0);
        assert!((l.query_value(0, &[23.005]).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn clamping_outside_working_box_is_counted() {
        let m = builtin_system(BuiltinSystem::Safety1d);
        let g = StateGrid::uniform(BoxRegion::interval(-2.0, 4.0).unwrap(), 61).unwrap();
        let stages = vec![vec![0.25; g.len()]; m.horizon() + 1];
        let vg = ValueGrid::from_parts(&m, g, stages, SpecKind::Safety, Interpolation::Multilinear).unwrap();
        assert_eq!(vg.query_value(0, &[10.0]).unwrap(), 0.25);
        assert_eq!(vg.query_value(0, &[-3.0]).unwrap(), 0.0);
        assert_eq!(vg.clamped_queries(), 1);
    }

    #[test]
    fn one_step_into_target() {
        // x' = 24.5 + w/100, T = 1: every successor is in G
        let f = Polynomial::new(3, vec![(vec![0, 0, 0], 24.5), (vec![0, 0, 1], 0.01)]).unwrap();
        let m = SystemModel::new(
            "jump",
            1,
            InputSet::finite(vec![vec![0.0], vec![1.0]]).unwrap(),
            BoxRegion::interval(-0.12, 0.12).unwrap(),
            vec![f],
            1,
            Region::Box(BoxRegion::interval(23.6, 23.8).unwrap()),
            Region::Box(BoxRegion::interval(23.0, 26.0).unwrap()),
            Some(Region::Box(BoxRegion::interval(24.4, 24.6).unwrap())),
        )
        .unwrap();
        let (vg, _) = value_iteration(&m, &nominal_amb(0.05), &room_grid(), &SolverConfig::default(), SpecKind::ReachAvoid).unwrap();
        assert!(vg.stage(0).iter().enumerate().all(|(i, &v)| {
            let x = room_grid().node(i)[0];
            v == 1.0 || !(23.0..=26.0).contains(&x)
        }));
    }

    #[test]
    fn invariant_safe_set_gives_one() {
        // x' = 0.5 x + 0.1 w stays inside [-1, 1]
        let f = Polynomial::new(3, vec![(vec![1, 0, 0], 0.5), (vec![0, 0, 1], 0.1)]).unwrap();
        let b = BoxRegion::interval(-1.0, 1.0).unwrap();
        let m = SystemModel::new(
            "contract",
            1,
            InputSet::finite(vec![vec![0.0]]).unwrap(),
            b.clone(),
            vec![f],
            5,
            Region::Box(b.clone()),
            Region::Box(b.clone()),
            None,
        )
        .unwrap();
        let n = NominalDistribution::point_mass(vec![0.0]);
        let amb = AmbiguitySet::new(n, 0.5, 1.0).unwrap();
        let (vg, _) = value_iteration(&m, &amb, &StateGrid::uniform(b, 21).unwrap(), &SolverConfig::default(), SpecKind::Safety).unwrap();
        for s in vg.stages() {
            assert!(s.iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn terminal_stage_is_indicator() {
        let m = room();
        let g = room_grid();
        let cfg = SolverConfig::default();
        let (vg, policy) = value_iteration(&m, &nominal_amb(0.0), &g, &cfg, SpecKind::ReachAvoid).unwrap();
        for (i, x) in g.nodes().enumerate() {
            let expect = if (24.4..=24.6).contains(&x[0]) { 1.0 } else { 0.0 };
            assert_eq!(vg.stage(12)[i], expect);
        }
        assert_eq!(policy.horizon(), 12);
        for t in 0..12 {
            assert!(policy.stage(t).iter().all(|&u| u == 0.0 || u == 1.0));
        }
    }

    #[test]
    fn heating_wins_near_cold_boundary() {
        let m = room();
        let g = room_grid();
        let safe_indicator = |y: &[f64]| if (23.0..=26.0).contains(&y[0]) { 1.0 } else { 0.0 };
        let v = ValueEvaluator::new(&safe_indicator, "1_S");
        let amb = nominal_amb(0.0);
        let all = robust_bellman_all(&v, &m, &[23.1], &amb, &SolverConfig::default()).unwrap();
        // by hand: f(23.1, 0, w) = 22.776 + w < 23 for all nominal atoms
        assert_eq!(all[0].value, 0.0);
        assert_eq!(all[1].value, 1.0);
        let stages = vec![vec![1.0; g.len()]; 13];
        let vg = ValueGrid::from_parts(&m, g, stages, SpecKind::Safety, Interpolation::Multilinear).unwrap();
        let fc = feasible_controls(&m, &amb, &vg, 6, &[23.1], 0.9, &SolverConfig::default()).unwrap();
        assert_eq!(fc, vec![vec![1.0]]);
    }

    #[test]
    fn feasible_controls_trivial_cases() {
        let m = room();
        let g = room_grid();
        let vg = const_grid(&m, &g, 1.0);
        let amb = nominal_amb(0.05);
        let cfg = SolverConfig::default();
        let all = feasible_controls(&m, &amb, &vg, 3, &[24.0], 0.99, &cfg).unwrap();
        assert_eq!(all, vec![vec![0.0], vec![1.0]]);
        let vg0 = const_grid(&m, &g, 0.3);
        let zero = feasible_controls(&m, &amb, &vg0, 3, &[23.2], 0.0, &cfg).unwrap();
        assert_eq!(zero.len(), 2);
    }

    #[test]
    fn policy_exiting_safe_set_scores_zero() {
        let m = room();
        let g = room_grid();
        // u = 0 everywhere: from 23.05 the room cools below 23 at once
        let policy = PolicyTable::from_parts(g.clone(), 1, vec![vec![0.0; g.len()]; 12]).unwrap();
        let dist = NominalDistribution::point_mass(vec![0.0]);
        let vg = evaluate_fixed_distribution(&m, &policy, &dist, &g, SpecKind::ReachAvoid).unwrap();
        assert_eq!(vg.query_value(0, &[23.05]).unwrap(), 0.0);
        assert_eq!(vg.query_value(0, &[24.5]).unwrap(), 1.0);
    }

    #[test]
    fn point_mass_safe_rollout() {
        let m = builtin_system(BuiltinSystem::RoomTemperature);
        let m = m.with_target(None).unwrap();
        let g = room_grid();
        // u = 1 from 23.7 with w = 0 moves to 23.8254 and keeps warming, staying below 26 for 12 steps
        let policy = PolicyTable::from_parts(g.clone(), 1, vec![vec![1.0; g.len()]; 12]).unwrap();
        let mut x = vec![23.7];
        for _ in 0..12 {
            x = m.eval_dynamics(&x, &[1.0], &[0.0]).unwrap();
            assert!(x[0] <= 26.0);
        }
        let dist = NominalDistribution::point_mass(vec![0.0]);
        let vg = evaluate_fixed_distribution(&m, &policy, &dist, &g, SpecKind::Safety).unwrap();
        assert_eq!(vg.query_value(0, &[23.7]).unwrap(), 1.0);
    }

    #[test]
    fn min_over_initial_probes() {
        let m = room();
        let g = room_grid();
        assert_eq!(initial_probes(&m, 0.01).unwrap().len(), 21);
        let vg = const_grid(&m, &g, 0.8);
        let (v, x) = min_over_initial(&vg, &m, 0.01).unwrap();
        assert_eq!((v, x), (0.8, vec![23.6]));
        let stages: Vec<Vec<f64>> = (0..=12).map(|_| g.nodes().map(|x| (x[0] - 23.0) / 3.0).collect()).collect();
        let mono = ValueGrid::from_parts(&m, g, stages, SpecKind::ReachAvoid, Interpolation::Multilinear).unwrap();
        let (_, arg) = min_over_initial(&mono, &m, 0.01).unwrap();
        assert_eq!(arg, vec![23.6]);
    }

    #[test]
    fn prefer_first_rule() {
        let r = |u: f64, value: f64| DualSolveResult {
            value,
            lambda_star: 0.0,
            lambda_unbounded: false,
            u_star: vec![u],
            inner_minimizers: vec![],
            refinement_levels: 0,
        };
        let rule = PolicyRule::PreferFirst { alpha: 0.9 };
        let pick = choose(vec![r(0.0, 0.92), r(1.0, 0.97)], rule);
        assert_eq!((pick.u_star[0], pick.value), (0.0, 0.97));
        let pick = choose(vec![r(0.0, 0.85), r(1.0, 0.97)], rule);
        assert_eq!(pick.u_star[0], 1.0);
        // an infeasible first input is never kept, even on ties
        let pick = choose(vec![r(0.0, 0.0), r(1.0, 0.0)], rule);
        assert_eq!((pick.u_star[0], pick.value), (1.0, 0.0));
        let pick = choose(vec![r(0.0, 0.5), r(1.0, 0.2), r(2.0, 0.3)], rule);
        assert_eq!((pick.u_star[0], pick.value), (2.0, 0.5));
        let pick = choose(vec![r(0.0, 0.92), r(1.0, 0.97)], PolicyRule::Optimal);
        assert_eq!(pick.u_star[0], 1.0);
    }

    #[test]
    fn working_box_must_cover_box_safe_set() {
        let m = room();
        let g = StateGrid::uniform(BoxRegion::interval(23.5, 26.0).unwrap(), 11).unwrap();
        assert!(value_iteration(&m, &nominal_amb(0.0), &g, &SolverConfig::default(), SpecKind::ReachAvoid).is_err());
    }
}
