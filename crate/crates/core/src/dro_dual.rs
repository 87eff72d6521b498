//! Worst-case expectations over a Wasserstein ball.
//!
//! For a fixed state and input the inner problem
//! `inf_{μ ∈ 𝔻} ∫ v(f(x,u,w)) dμ(w)` is solved through its dual
//! `sup_{λ≥0} -λθ^p + Σ p_i inf_w [v(f(x,u,w)) + λ d^p(w, ŵ_i)]`.
//! The infimum over `w` is taken on an adaptively refined grid of the
//! disturbance box and the outer concave maximization over `λ` uses a
//! golden-section search. [`primal_worst_case`] solves the primal transport
//! LP on a fixed grid by vertex enumeration and serves as an oracle.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::ambiguity::{AmbiguitySet, NominalDistribution};
use crate::error::{check_dim, Error, Result};
use crate::model::{axis_points, SystemModel};

/// Upper bound on the number of points in one disturbance grid; in high
/// dimension the per-axis count is reduced to stay under it.
pub const MAX_DISTURBANCE_GRID: usize = 1 << 14;

const MAX_GOLDEN_ITERATIONS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Width of the final λ bracket.
    pub lambda_tolerance: f64,
    /// Points per disturbance dimension in the coarse grid and in each
    /// refinement grid.
    pub disturbance_grid_initial: usize,
    pub refinement_rounds: usize,
    /// Side-length factor applied per refinement round.
    pub refinement_shrink: f64,
    /// Points per input dimension when gridding a polytope input set.
    pub input_grid: usize,
    /// Restricts the disturbance set to exactly these points (no
    /// refinement). Used to pose discretized instances.
    pub fixed_disturbance_points: Option<Vec<Vec<f64>>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda_tolerance: 1e-7,
            disturbance_grid_initial: 65,
            refinement_rounds: 3,
            refinement_shrink: 0.25,
            input_grid: 21,
            fixed_disturbance_points: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_tolerance > 0.0 && self.lambda_tolerance.is_finite()) {
            return Err(Error::Config("lambda_tolerance must be positive".into()));
        }
        if self.disturbance_grid_initial < 2 {
            return Err(Error::Config("disturbance_grid_initial must be >= 2".into()));
        }
        if !(self.refinement_shrink > 0.0 && self.refinement_shrink < 1.0) {
            return Err(Error::Config("refinement_shrink must lie in (0, 1)".into()));
        }
        if self.input_grid < 1 {
            return Err(Error::Config("input_grid must be >= 1".into()));
        }
        if let Some(pts) = &self.fixed_disturbance_points {
            if pts.is_empty() {
                return Err(Error::Config("fixed_disturbance_points is empty".into()));
            }
        }
        Ok(())
    }

    /// Same settings with the disturbance set pinned to `points`.
    pub fn with_fixed_points(&self, points: Vec<Vec<f64>>) -> Self {
        Self {
            fixed_disturbance_points: Some(points),
            ..self.clone()
        }
    }
}

/// A next-stage value function handed to the solver.
pub struct ValueEvaluator<'a> {
    func: &'a (dyn Fn(&[f64]) -> f64 + Sync),
    description: String,
    range: (f64, f64),
    enforce_range: bool,
}

impl<'a> ValueEvaluator<'a> {
    /// A value function with range `[0, 1]`.
    pub fn new(func: &'a (dyn Fn(&[f64]) -> f64 + Sync), description: impl Into<String>) -> Self {
        Self {
            func,
            description: description.into(),
            range: (0.0, 1.0),
            enforce_range: true,
        }
    }

    /// A function whose range is only estimated (e.g. from a probe pass).
    /// The range sets the λ search interval but is not asserted.
    pub fn with_estimated_range(
        func: &'a (dyn Fn(&[f64]) -> f64 + Sync),
        description: impl Into<String>,
        lo: f64,
        hi: f64,
    ) -> Self {
        Self {
            func,
            description: description.into(),
            range: (lo, hi.max(lo)),
            enforce_range: false,
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let v = (self.func)(x);
        debug_assert!(
            !self.enforce_range || (v >= self.range.0 - 1e-9 && v <= self.range.1 + 1e-9),
            "value {v} outside {:?} for {}",
            self.range,
            self.description
        );
        v
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn range(&self) -> (f64, f64) {
        self.range
    }
}

impl std::fmt::Debug for ValueEvaluator<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ValueEvaluator")
            .field("description", &self.description)
            .field("range", &self.range)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolveResult {
    pub value: f64,
    /// Optimal multiplier. `f64::INFINITY` when `lambda_unbounded`.
    pub lambda_star: f64,
    /// Set for θ = 0, where the dual multiplier is unbounded.
    pub lambda_unbounded: bool,
    pub u_star: Vec<f64>,
    /// Per nominal atom, the inner minimizer `w*_i` and the inner value `l_i`.
    pub inner_minimizers: Vec<(Vec<f64>, f64)>,
    pub refinement_levels: usize,
}

/// Evaluation context for one `(x, u)` pair. Coarse-grid values of
/// `v(f(x,u,·))` are computed once and reused for every λ.
struct InnerProblem<'a> {
    v: &'a ValueEvaluator<'a>,
    model: &'a SystemModel,
    x: &'a [f64],
    u: &'a [f64],
    amb: &'a AmbiguitySet,
    per_dim: usize,
    rounds: usize,
    shrink: f64,
    grid: Vec<Vec<f64>>,
    grid_vals: Vec<f64>,
    patches: RefCell<HashMap<PatchKey, Rc<Patch>>>,
}

type PatchKey = (usize, SmallVec<[u64; 4]>);

struct Patch {
    /// Flattened points, `dim` coordinates each.
    points: Vec<f64>,
    values: Vec<f64>,
}

impl<'a> InnerProblem<'a> {
    fn new(
        v: &'a ValueEvaluator<'a>,
        model: &'a SystemModel,
        x: &'a [f64],
        u: &'a [f64],
        amb: &'a AmbiguitySet,
        cfg: &'a SolverConfig,
    ) -> Self {
        let wbox = model.disturbance_box();
        let (grid, per_dim, rounds) = match &cfg.fixed_disturbance_points {
            Some(pts) => (pts.clone(), 0, 0),
            None => {
                let per_dim = disturbance_points_per_dim(cfg.disturbance_grid_initial, wbox.dim());
                (wbox.grid_points(per_dim), per_dim, cfg.refinement_rounds)
            }
        };
        let mut me = Self {
            v,
            model,
            x,
            u,
            amb,
            per_dim,
            rounds,
            shrink: cfg.refinement_shrink,
            grid,
            grid_vals: Vec::new(),
            patches: RefCell::new(HashMap::new()),
        };
        let mut buf = vec![0.0; model.state_dim()];
        me.grid_vals = me.grid.iter().map(|w| me.value_at(w, &mut buf)).collect();
        me
    }

    #[inline]
    fn value_at(&self, w: &[f64], buf: &mut [f64]) -> f64 {
        self.model.step_into(self.x, self.u, w, buf);
        self.v.eval(buf)
    }

    /// Refinement grid of the given round centered at `center`, with
    /// `v(f(x,u,·))` evaluated on it. The grid depends only on the round and
    /// the center, so it is shared by every λ iterate and every atom.
    fn patch(&self, round: usize, center: &[f64], buf: &mut [f64]) -> Rc<Patch> {
        let key: PatchKey = (round, center.iter().map(|c| c.to_bits()).collect());
        if let Some(p) = self.patches.borrow().get(&key) {
            return Rc::clone(p);
        }
        let wbox = self.model.disturbance_box();
        let scale = 0.5 * self.shrink.powi(round as i32 + 1);
        let axes: Vec<Vec<f64>> = (0..center.len())
            .map(|d| {
                let (l, u) = (wbox.lower()[d], wbox.upper()[d]);
                let h = scale * (u - l);
                axis_points((center[d] - h).max(l), (center[d] + h).min(u), self.per_dim)
            })
            .collect();
        let mut points = Vec::new();
        let mut values = Vec::new();
        let mut idx = vec![0usize; axes.len()];
        let mut w: Vec<f64> = axes.iter().map(|a| a[0]).collect();
        loop {
            points.extend_from_slice(&w);
            values.push(self.value_at(&w, buf));
            if !advance(&mut idx, &axes, &mut w) {
                break;
            }
        }
        let p = Rc::new(Patch { points, values });
        self.patches.borrow_mut().insert(key, Rc::clone(&p));
        p
    }

    /// `min_w v(f(x,u,w)) + λ d^p(w, atom)`. The atom is the first
    /// incumbent and is replaced only on strict improvement.
    fn solve_atom(
        &self,
        lambda: f64,
        atom: &[f64],
        atom_val: f64,
        costs: Option<&[f64]>,
        buf: &mut [f64],
    ) -> (f64, Vec<f64>) {
        let mut best = atom_val;
        let mut best_idx: Option<usize> = None;
        for (j, (w, &vj)) in self.grid.iter().zip(&self.grid_vals).enumerate() {
            let c = match costs {
                Some(cs) => cs[j],
                None => self.amb.cost(w, atom),
            };
            let cand = vj + lambda * c;
            if cand < best {
                best = cand;
                best_idx = Some(j);
            }
        }
        let mut w_best = match best_idx {
            Some(j) => self.grid[j].clone(),
            None => atom.to_vec(),
        };
        if self.rounds == 0 {
            return (best, w_best);
        }
        let dim = w_best.len();
        for round in 0..self.rounds {
            let patch = self.patch(round, &w_best, buf);
            let mut hit: Option<usize> = None;
            for (j, (w, &vj)) in patch.points.chunks_exact(dim).zip(&patch.values).enumerate() {
                let cand = vj + lambda * self.amb.cost(w, atom);
                if cand < best {
                    best = cand;
                    hit = Some(j);
                }
            }
            if let Some(j) = hit {
                w_best.copy_from_slice(&patch.points[j * dim..(j + 1) * dim]);
            }
        }
        (best, w_best)
    }
}

/// Steps `idx` through the tensor grid of `axes` (last axis fastest),
/// keeping `w` in sync. Returns `false` after the last point.
fn advance(idx: &mut [usize], axes: &[Vec<f64>], w: &mut [f64]) -> bool {
    for d in (0..axes.len()).rev() {
        idx[d] += 1;
        if idx[d] < axes[d].len() {
            w[d] = axes[d][idx[d]];
            return true;
        }
        idx[d] = 0;
        w[d] = axes[d][0];
    }
    false
}

/// Per-axis grid size keeping the tensor grid under [`MAX_DISTURBANCE_GRID`].
pub fn disturbance_points_per_dim(requested: usize, dim: usize) -> usize {
    let mut n = requested.max(2);
    while dim > 1 && n > 2 && n.checked_pow(dim as u32).map_or(true, |t| t > MAX_DISTURBANCE_GRID) {
        n -= 1;
    }
    n
}

fn check_inputs(model: &SystemModel, x: &[f64], u: &[f64], amb: &AmbiguitySet) -> Result<()> {
    check_dim(model.state_dim(), x.len(), "state")?;
    check_dim(model.input_dim(), u.len(), "input")?;
    check_dim(model.disturbance_dim(), amb.nominal().dim(), "nominal atoms")
}

/// Inner infimum `l = min_w v(f(x,u,w)) + λ d^p(w, atom)` over the
/// (refined) disturbance grid, with its minimizer.
#[allow(clippy::too_many_arguments)]
pub fn inner_inf(
    v: &ValueEvaluator<'_>,
    model: &SystemModel,
    x: &[f64],
    u: &[f64],
    lambda: f64,
    atom: &[f64],
    amb: &AmbiguitySet,
    cfg: &SolverConfig,
) -> Result<(f64, Vec<f64>)> {
    check_inputs(model, x, u, amb)?;
    check_dim(model.disturbance_dim(), atom.len(), "atom")?;
    if !(lambda >= 0.0) {
        return Err(Error::Argument(format!("lambda {lambda} must be >= 0")));
    }
    let prob = InnerProblem::new(v, model, x, u, amb, cfg);
    let mut buf = vec![0.0; model.state_dim()];
    let atom_val = prob.value_at(atom, &mut buf);
    Ok(prob.solve_atom(lambda, atom, atom_val, None, &mut buf))
}

struct DualObjective<'a> {
    prob: InnerProblem<'a>,
    atom_vals: Vec<f64>,
    costs: Vec<Vec<f64>>,
}

impl<'a> DualObjective<'a> {
    fn new(prob: InnerProblem<'a>) -> Self {
        let mut buf = vec![0.0; prob.model.state_dim()];
        let atoms = prob.amb.nominal().atoms();
        let atom_vals = atoms.iter().map(|(w, _)| prob.value_at(w, &mut buf)).collect();
        let costs = atoms
            .iter()
            .map(|(a, _)| prob.grid.iter().map(|w| prob.amb.cost(w, a)).collect())
            .collect();
        Self {
            prob,
            atom_vals,
            costs,
        }
    }

    fn eval(&self, lambda: f64, buf: &mut [f64]) -> f64 {
        let mut acc = -lambda * self.prob.amb.budget();
        for (i, (a, p)) in self.prob.amb.nominal().atoms().iter().enumerate() {
            acc += p * self.prob.solve_atom(lambda, a, self.atom_vals[i], Some(&self.costs[i]), buf).0;
        }
        acc
    }

    fn parts(&self, lambda: f64, buf: &mut [f64]) -> Vec<(Vec<f64>, f64)> {
        self.prob
            .amb
            .nominal()
            .atoms()
            .iter()
            .enumerate()
            .map(|(i, (a, _))| {
                let (l, w) = self.prob.solve_atom(lambda, a, self.atom_vals[i], Some(&self.costs[i]), buf);
                (w, l)
            })
            .collect()
    }

    fn nominal_expectation(&self) -> f64 {
        self.prob
            .amb
            .nominal()
            .atoms()
            .iter()
            .zip(&self.atom_vals)
            .map(|((_, p), v)| p * v)
            .sum()
    }
}

/// Maximizes a concave function on `[lo, hi]` by golden-section search.
/// Every evaluated point, including both endpoints, competes for the
/// maximum; ties keep the earliest evaluation.
pub fn golden_section_max(
    mut f: impl FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
    tol: f64,
) -> (f64, f64) {
    let mut best = (lo, f(lo));
    if hi <= lo {
        return best;
    }
    let consider = |x: f64, fx: f64, best: &mut (f64, f64)| {
        if fx > best.1 {
            *best = (x, fx);
        }
    };
    let f_hi = f(hi);
    consider(hi, f_hi, &mut best);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    consider(c, fc, &mut best);
    consider(d, fd, &mut best);
    for _ in 0..MAX_GOLDEN_ITERATIONS {
        if b - a <= tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
            consider(c, fc, &mut best);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
            consider(d, fd, &mut best);
        }
    }
    best
}

fn lambda_upper(v: &ValueEvaluator<'_>, amb: &AmbiguitySet) -> f64 {
    let (lo, hi) = v.range();
    (hi - lo) / amb.budget()
}

/// The dual objective `g(λ)` for a fixed `(x, u)`.
pub fn dual_objective(
    v: &ValueEvaluator<'_>,
    model: &SystemModel,
    x: &[f64],
    u: &[f64],
    amb: &AmbiguitySet,
    cfg: &SolverConfig,
    lambdas: &[f64],
) -> Result<Vec<f64>> {
    check_inputs(model, x, u, amb)?;
    let obj = DualObjective::new(InnerProblem::new(v, model, x, u, amb, cfg));
    let mut buf = vec![0.0; model.state_dim()];
    Ok(lambdas.iter().map(|&l| obj.eval(l, &mut buf)).collect())
}

/// Worst-case expectation of `v(f(x,u,·))` over the ambiguity set, with
/// the control fixed to `u`.
pub fn dual_value(
    v: &ValueEvaluator<'_>,
    model: &SystemModel,
    x: &[f64],
    u: &[f64],
    amb: &AmbiguitySet,
    cfg: &SolverConfig,
) -> Result<DualSolveResult> {
    check_inputs(model, x, u, amb)?;
    let prob = InnerProblem::new(v, model, x, u, amb, cfg);
    let rounds = prob.rounds;
    let obj = DualObjective::new(prob);
    if amb.radius() == 0.0 {
        return Ok(DualSolveResult {
            value: obj.nominal_expectation(),
            lambda_star: f64::INFINITY,
            lambda_unbounded: true,
            u_star: u.to_vec(),
            inner_minimizers: amb
                .nominal()
                .atoms()
                .iter()
                .zip(&obj.atom_vals)
                .map(|((w, _), l)| (w.clone(), *l))
                .collect(),
            refinement_levels: 0,
        });
    }
    let mut buf = vec![0.0; model.state_dim()];
    let hi = lambda_upper(v, amb);
    let (lambda_star, g_star) =
        golden_section_max(|l| obj.eval(l, &mut buf), 0.0, hi, cfg.lambda_tolerance);
    let inner = obj.parts(lambda_star, &mut buf);
    let value = -lambda_star * amb.budget() + weighted(&inner, amb.nominal());
    debug_assert!((value - g_star).abs() <= 1e-9 * (1.0 + g_star.abs()));
    Ok(DualSolveResult {
        value,
        lambda_star,
        lambda_unbounded: false,
        u_star: u.to_vec(),
        inner_minimizers: inner,
        refinement_levels: rounds,
    })
}

fn weighted(inner: &[(Vec<f64>, f64)], nominal: &NominalDistribution) -> f64 {
    inner
        .iter()
        .zip(nominal.atoms())
        .map(|((_, l), (_, p))| p * l)
        .sum()
}

/// [`dual_value`] for every enumerated input, in enumeration order.
pub fn robust_bellman_all(
    v: &ValueEvaluator<'_>,
    model: &SystemModel,
    x: &[f64],
    amb: &AmbiguitySet,
    cfg: &SolverConfig,
) -> Result<Vec<DualSolveResult>> {
    model
        .input_set()
        .enumerate(cfg.input_grid)?
        .iter()
        .map(|u| dual_value(v, model, x, u, amb, cfg))
        .collect()
}

/// `sup_u` of [`dual_value`]; ties go to the earliest enumerated input.
pub fn robust_bellman(
    v: &ValueEvaluator<'_>,
    model: &SystemModel,
    x: &[f64],
    amb: &AmbiguitySet,
    cfg: &SolverConfig,
) -> Result<DualSolveResult> {
    let all = robust_bellman_all(v, model, x, amb, cfg)?;
    Ok(argmax_first(all))
}

pub(crate) fn argmax_first(all: Vec<DualSolveResult>) -> DualSolveResult {
    let mut iter = all.into_iter();
    let mut best = iter.next().expect("input enumeration is non-empty");
    for r in iter {
        if r.value > best.value {
            best = r;
        }
    }
    best
}

/// Optimal transport plan of the discretized primal problem.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalSolution {
    pub value: f64,
    /// Worst-case marginal over the grid points, in grid order.
    pub marginal: Vec<f64>,
    /// `plan[i][j]`: mass moved from atom `i` to grid point `j`.
    pub plan: Vec<Vec<f64>>,
}

/// Upper bound on the number of bases [`primal_worst_case`] will enumerate.
pub const MAX_PRIMAL_BASES: u128 = 5_000_000;

/// `min Σ_j μ_j v_j` over distributions on the grid within transport budget
/// `θ^p` of `nominal`, by enumerating basic feasible solutions of the
/// transport LP (one row per atom plus the budget row with a slack).
pub fn primal_worst_case(
    values_on_grid: &[(Vec<f64>, f64)],
    nominal: &NominalDistribution,
    theta: f64,
    p: f64,
) -> Result<PrimalSolution> {
    if values_on_grid.is_empty() {
        return Err(Error::Argument("empty disturbance grid".into()));
    }
    let amb = AmbiguitySet::new(nominal.clone(), theta, p)?;
    let k = values_on_grid.len();
    let m = nominal.len();
    for (w, _) in values_on_grid {
        check_dim(nominal.dim(), w.len(), "grid point")?;
    }
    let nvars = m * k + 1;
    if m * k > 40 {
        return Err(Error::TooLarge(format!("{m} atoms x {k} grid points exceeds 40 variables")));
    }
    let combos = binomial(nvars as u128, (m + 1) as u128);
    if combos > MAX_PRIMAL_BASES {
        return Err(Error::TooLarge(format!("{combos} candidate bases")));
    }
    let rows = m + 1;
    // column c < m*k is κ_{i,j} with i = c / k, j = c % k; the last is the slack
    let column = |c: usize| -> Vec<f64> {
        let mut col = vec![0.0; rows];
        if c == m * k {
            col[m] = 1.0;
        } else {
            let (i, j) = (c / k, c % k);
            col[i] = 1.0;
            col[m] = amb.cost(&values_on_grid[j].0, &nominal.atoms()[i].0);
        }
        col
    };
    let objective = |c: usize| if c == m * k { 0.0 } else { values_on_grid[c % k].1 };
    let mut rhs: Vec<f64> = nominal.atoms().iter().map(|(_, q)| *q).collect();
    rhs.push(amb.budget());

    let mut best: Option<(f64, Vec<usize>, Vec<f64>)> = None;
    let mut basis: Vec<usize> = (0..rows).collect();
    loop {
        let mat: Vec<Vec<f64>> = basis.iter().map(|&c| column(c)).collect();
        if let Some(sol) = solve_columns(&mat, &rhs) {
            if sol.iter().all(|&s| s >= -1e-12) {
                let val: f64 = basis.iter().zip(&sol).map(|(&c, s)| objective(c) * s).sum();
                if best.as_ref().map_or(true, |b| val < b.0 - 1e-15) {
                    best = Some((val, basis.clone(), sol));
                }
            }
        }
        if !next_combination(&mut basis, nvars) {
            break;
        }
    }
    let (value, basis, sol) =
        best.ok_or_else(|| Error::Infeasible("no transport plan meets the budget".into()))?;
    let mut plan = vec![vec![0.0; k]; m];
    for (&c, &s) in basis.iter().zip(&sol) {
        if c < m * k {
            plan[c / k][c % k] = s.max(0.0);
        }
    }
    let marginal = (0..k).map(|j| plan.iter().map(|row| row[j]).sum()).collect();
    Ok(PrimalSolution {
        value,
        marginal,
        plan,
    })
}

fn binomial(n: u128, r: u128) -> u128 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

fn next_combination(c: &mut [usize], n: usize) -> bool {
    let r = c.len();
    let mut i = r;
    while i > 0 {
        i -= 1;
        if c[i] < n - r + i {
            c[i] += 1;
            for j in i + 1..r {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Solves `B s = rhs` where `B` is given by columns. `None` if singular.
fn solve_columns(cols: &[Vec<f64>], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = rhs.len();
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|r| {
            let mut row: Vec<f64> = cols.iter().map(|c| c[r]).collect();
            row.push(rhs[r]);
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        for r in 0..n {
            if r != col {
                let factor = a[r][col] / a[col][col];
                if factor != 0.0 {
                    for c in col..=n {
                        a[r][c] -= factor * a[col][c];
                    }
                }
            }
        }
    }
    Some((0..n).map(|r| a[r][n] / a[r][r]).collect())
}
