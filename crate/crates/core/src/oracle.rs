//! Small exact instances used to cross-check the solvers.
//!
//! Two families: random discretized inner problems, where the dual solver
//! is compared with the primal transport LP, and a finite five-state game,
//! where value iteration is compared with exhaustive game-tree evaluation
//! that uses the primal LP as the adversary.

use rand::seq::index::sample;
use rand::Rng;
use serde::Serialize;

use crate::ambiguity::{child_rng, AmbiguitySet, NominalDistribution};
use crate::dro_dual::{dual_value, primal_worst_case, SolverConfig, ValueEvaluator};
use crate::error::{Error, Result};
use crate::model::{BoxRegion, InputSet, Region, SystemModel};
use crate::polynomial::Polynomial;
use crate::synthesis::{value_iteration, SpecKind, StateGrid};

/// `x' = w` on `W = [-1, 1]`: the inner problem sees `v` directly.
pub fn pass_through_model() -> SystemModel {
    let f = Polynomial::new(3, [(vec![0, 0, 1], 1.0)]).expect("valid");
    SystemModel::new(
        "pass_through",
        1,
        InputSet::finite(vec![vec![0.0]]).expect("valid"),
        BoxRegion::interval(-1.0, 1.0).expect("valid"),
        vec![f],
        1,
        Region::Box(BoxRegion::interval(-1.0, 1.0).expect("valid")),
        Region::Box(BoxRegion::interval(-1.0, 1.0).expect("valid")),
        None,
    )
    .expect("valid")
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualityFixture {
    pub points: Vec<f64>,
    pub values: Vec<f64>,
    pub nominal: NominalDistribution,
    pub theta: f64,
    pub order: f64,
}

/// 2 to 5 distinct grid points in `[-1, 1]`, values in `[0, 1]`, 1 to 3
/// atoms placed on grid points, `θ ∈ [0, 1]`, order 1 or 2.
pub fn random_duality_fixture(rng: &mut impl Rng) -> DualityFixture {
    let k = rng.random_range(2..=5);
    let mut points: Vec<f64> = Vec::with_capacity(k);
    while points.len() < k {
        let w: f64 = rng.random_range(-1.0..=1.0);
        if points.iter().all(|p| (p - w).abs() > 1e-3) {
            points.push(w);
        }
    }
    points.sort_by(f64::total_cmp);
    let values = (0..k).map(|_| rng.random_range(0.0..=1.0)).collect();
    let m = rng.random_range(1..=k.min(3));
    let idx = sample(rng, k, m).into_vec();
    let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|r| r / total).collect();
    let head: f64 = weights[..m - 1].iter().sum();
    weights[m - 1] = 1.0 - head;
    let nominal = NominalDistribution::new(
        idx.iter().zip(weights).map(|(&i, p)| (vec![points[i]], p)).collect(),
    )
    .expect("distinct atoms with positive weights");
    DualityFixture {
        points,
        values,
        nominal,
        theta: rng.random_range(0.0..=1.0),
        order: if rng.random_bool(0.5) { 1.0 } else { 2.0 },
    }
}

/// Dual and primal values of one fixture.
pub fn duality_pair(fx: &DualityFixture, cfg: &SolverConfig) -> Result<(f64, f64)> {
    let model = pass_through_model();
    let amb = AmbiguitySet::new(fx.nominal.clone(), fx.theta, fx.order)?;
    let lookup = |y: &[f64]| -> f64 {
        fx.points
            .iter()
            .zip(&fx.values)
            .min_by(|a, b| (a.0 - y[0]).abs().total_cmp(&(b.0 - y[0]).abs()))
            .map(|(_, v)| *v)
            .expect("non-empty grid")
    };
    let v = ValueEvaluator::new(&lookup, "fixture values");
    let cfg = cfg.with_fixed_points(fx.points.iter().map(|&w| vec![w]).collect());
    let dual = dual_value(&v, &model, &[0.0], &[0.0], &amb, &cfg)?.value;
    let grid: Vec<(Vec<f64>, f64)> = fx
        .points
        .iter()
        .zip(&fx.values)
        .map(|(&w, &v)| (vec![w], v))
        .collect();
    let primal = primal_worst_case(&grid, &fx.nominal, fx.theta, fx.order)?.value;
    Ok((dual, primal))
}

/// States of the finite game.
pub const GAME_STATES: [f64; 5] = [0.0, 1.0, 2.0, 3.0, 4.0];
pub const GAME_DISTURBANCES: [f64; 3] = [-1.0, 0.0, 1.0];
pub const GAME_SAFE: (f64, f64) = (0.0, 3.5);
pub const GAME_TARGET: (f64, f64) = (2.5, 3.5);
pub const GAME_TARGET_ENLARGED: (f64, f64) = (1.5, 3.5);

/// `clamp(x + u + w, 0, 4)` in exact integer arithmetic.
pub fn game_step(x: f64, u: f64, w: f64) -> f64 {
    (x + u + w).clamp(0.0, 4.0)
}

/// The interpolating polynomial of `s ↦ clamp(s, 0, 4)` on the integers
/// `-2..=6`, composed with `s = x + u + w`.
fn clamp_polynomial() -> Result<Polynomial> {
    let nodes: Vec<f64> = (-2..=6).map(f64::from).collect();
    let mut interp = Polynomial::zero(1);
    for (i, &si) in nodes.iter().enumerate() {
        let mut basis = Polynomial::constant(1, 1.0);
        for (j, &sj) in nodes.iter().enumerate() {
            if i != j {
                let factor = Polynomial::new(1, [(vec![1], 1.0), (vec![0], -sj)])?
                    .scale(1.0 / (si - sj));
                basis = basis.mul(&factor)?;
            }
        }
        interp = interp.add(&basis.scale(si.clamp(0.0, 4.0)))?;
    }
    let s = Polynomial::new(3, [(vec![1, 0, 0], 1.0), (vec![0, 1, 0], 1.0), (vec![0, 0, 1], 1.0)])?;
    interp.compose_univariate(&s)
}

/// The finite game as a [`SystemModel`]. S is widened slightly below 0 so
/// that rounding in the interpolant cannot push state 0 out of S.
pub fn game_model(target: (f64, f64), horizon: usize) -> Result<SystemModel> {
    SystemModel::new(
        "finite_game",
        1,
        InputSet::finite(vec![vec![-1.0], vec![0.0], vec![1.0]])?,
        BoxRegion::interval(-1.0, 1.0)?,
        vec![clamp_polynomial()?],
        horizon,
        Region::Box(BoxRegion::interval(0.0, 0.0)?),
        Region::Box(BoxRegion::interval(GAME_SAFE.0 - 0.25, GAME_SAFE.1)?),
        Some(Region::Box(BoxRegion::interval(target.0, target.1)?)),
    )
}

/// Integer nodes `-1..=4`; node `-1` lies outside S and is never reached.
pub fn game_grid() -> StateGrid {
    StateGrid::new(BoxRegion::interval(-1.0, 4.0).expect("valid"), vec![6]).expect("valid")
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameInstance {
    pub nominal: NominalDistribution,
    pub theta: f64,
    pub order: f64,
    pub horizon: usize,
}

/// One or two atoms on the disturbance grid, `θ ∈ [0, 1.5]`, order 1 or 2,
/// horizon 1 to 3.
pub fn random_game_instance(rng: &mut impl Rng) -> GameInstance {
    let m = rng.random_range(1..=2);
    let idx = sample(rng, 3, m).into_vec();
    let first: f64 = if m == 1 { 1.0 } else { rng.random_range(0.1..0.9) };
    let weights = if m == 1 { vec![1.0] } else { vec![first, 1.0 - first] };
    let nominal = NominalDistribution::new(
        idx.iter()
            .zip(weights)
            .map(|(&i, p)| (vec![GAME_DISTURBANCES[i]], p))
            .collect(),
    )
    .expect("valid atoms");
    GameInstance {
        nominal,
        theta: rng.random_range(0.0..=1.5),
        order: if rng.random_bool(0.5) { 1.0 } else { 2.0 },
        horizon: rng.random_range(1..=3),
    }
}

fn inside(r: (f64, f64), x: f64) -> bool {
    r.0 <= x && x <= r.1
}

/// Exhaustive game tree: the controller maximizes over the three inputs,
/// the adversary answers with the primal worst-case distribution on the
/// disturbance grid, recursively to depth `T - t`. No memoization.
pub fn game_tree_value(
    inst: &GameInstance,
    kind: SpecKind,
    target: (f64, f64),
    t: usize,
    x: f64,
) -> Result<f64> {
    match kind {
        SpecKind::ReachAvoid => {
            if inside(target, x) {
                return Ok(1.0);
            }
            if !inside(GAME_SAFE, x) {
                return Ok(0.0);
            }
        }
        SpecKind::Safety => {
            if !inside(GAME_SAFE, x) {
                return Ok(0.0);
            }
        }
    }
    if t == inst.horizon {
        return Ok(if kind == SpecKind::Safety { 1.0 } else { 0.0 });
    }
    let mut best = f64::NEG_INFINITY;
    for u in [-1.0, 0.0, 1.0] {
        let mut leaves = Vec::with_capacity(3);
        for w in GAME_DISTURBANCES {
            let v = game_tree_value(inst, kind, target, t + 1, game_step(x, u, w))?;
            leaves.push((vec![w], v));
        }
        let value = primal_worst_case(&leaves, &inst.nominal, inst.theta, inst.order)?.value;
        best = best.max(value);
    }
    Ok(best)
}

/// Value iteration on the polynomial model restricted to the same
/// disturbance grid; values at `(t, state)` for every stage.
pub fn game_dp_values(
    inst: &GameInstance,
    kind: SpecKind,
    target: (f64, f64),
    cfg: &SolverConfig,
) -> Result<Vec<Vec<f64>>> {
    let model = game_model(target, inst.horizon)?;
    let amb = AmbiguitySet::new(inst.nominal.clone(), inst.theta, inst.order)?;
    let cfg = cfg.with_fixed_points(GAME_DISTURBANCES.iter().map(|&w| vec![w]).collect());
    let grid = game_grid();
    let (vg, _) = value_iteration(&model, &amb, &grid, &cfg, kind)?;
    (0..=inst.horizon)
        .map(|t| GAME_STATES.iter().map(|&x| vg.query_value(t, &[x])).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameComparison {
    /// Largest `|tree − dp|` over stages, states and both specifications.
    pub max_abs_diff: f64,
    /// Largest decrease of the reach-avoid value when G is enlarged.
    pub monotonicity_violation: f64,
}

pub fn compare_game(inst: &GameInstance, cfg: &SolverConfig) -> Result<GameComparison> {
    let mut max_abs_diff: f64 = 0.0;
    for kind in [SpecKind::ReachAvoid, SpecKind::Safety] {
        let dp = game_dp_values(inst, kind, GAME_TARGET, cfg)?;
        for (t, row) in dp.iter().enumerate() {
            for (&x, &v) in GAME_STATES.iter().zip(row) {
                let tree = game_tree_value(inst, kind, GAME_TARGET, t, x)?;
                max_abs_diff = max_abs_diff.max((tree - v).abs());
            }
        }
    }
    let small = game_dp_values(inst, SpecKind::ReachAvoid, GAME_TARGET, cfg)?;
    let large = game_dp_values(inst, SpecKind::ReachAvoid, GAME_TARGET_ENLARGED, cfg)?;
    let monotonicity_violation = small
        .iter()
        .flatten()
        .zip(large.iter().flatten())
        .map(|(s, l)| s - l)
        .fold(0.0, f64::max);
    Ok(GameComparison {
        max_abs_diff,
        monotonicity_violation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub duality_cases: usize,
    pub max_duality_gap: f64,
    pub game_cases: usize,
    pub max_game_diff: f64,
    pub max_monotonicity_violation: f64,
}

impl OracleReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_duality_gap <= tol && self.max_game_diff <= tol && self.max_monotonicity_violation <= tol
    }

    pub fn to_text(&self) -> String {
        format!(
            "duality: {} fixtures, max |dual - primal| = {:.3e}\n\
             game tree: {} instances, max |tree - dp| = {:.3e}, max G-monotonicity violation = {:.3e}\n",
            self.duality_cases,
            self.max_duality_gap,
            self.game_cases,
            self.max_game_diff,
            self.max_monotonicity_violation
        )
    }
}

/// Runs both oracle families with generators derived from `seed`.
pub fn run_oracle_suite(
    seed: u64,
    duality_cases: usize,
    game_cases: usize,
    cfg: &SolverConfig,
) -> Result<OracleReport> {
    if duality_cases == 0 && game_cases == 0 {
        return Err(Error::Config("oracle suite needs at least one case".into()));
    }
    let mut max_duality_gap: f64 = 0.0;
    for i in 0..duality_cases {
        let fx = random_duality_fixture(&mut child_rng(seed, i as u64));
        let (d, p) = duality_pair(&fx, cfg)?;
        max_duality_gap = max_duality_gap.max((d - p).abs());
    }
    let mut max_game_diff: f64 = 0.0;
    let mut max_mono: f64 = 0.0;
    for i in 0..game_cases {
        let inst = random_game_instance(&mut child_rng(seed ^ 0x9e37_79b9_7f4a_7c15, i as u64));
        let c = compare_game(&inst, cfg)?;
        max_game_diff = max_game_diff.max(c.max_abs_diff);
        max_mono = max_mono.max(c.monotonicity_violation);
    }
    Ok(OracleReport {
        duality_cases,
        max_duality_gap,
        game_cases,
        max_game_diff,
        max_monotonicity_violation: max_mono,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolant_reproduces_clamp() {
        let p = clamp_polynomial().unwrap();
        for x in GAME_STATES {
            for u in [-1.0, 0.0, 1.0] {
                for w in GAME_DISTURBANCES {
                    let got = p.eval(&[x, u, w]).unwrap();
                    assert!((got - game_step(x, u, w)).abs() < 1e-9, "{x} {u} {w}: {got}");
                }
            }
        }
    }

    #[test]
    fn duality_fixture_is_well_formed() {
        for i in 0..50 {
            let fx = random_duality_fixture(&mut child_rng(5, i));
            assert!((2..=5).contains(&fx.points.len()));
            assert!(fx.nominal.len() <= 3);
            for (w, _) in fx.nominal.atoms() {
                assert!(fx.points.contains(&w[0]));
            }
        }
    }

    #[test]
    fn zero_radius_game_is_expectation() {
        let inst = GameInstance {
            nominal: NominalDistribution::new(vec![(vec![-1.0], 0.5), (vec![1.0], 0.5)]).unwrap(),
            theta: 0.0,
            order: 1.0,
            horizon: 1,
        };
        // from 2, u = +1 lands on 2 or 4 (unsafe), u = 0 on 1 or 3 (target)
        let v = game_tree_value(&inst, SpecKind::ReachAvoid, GAME_TARGET, 0, 2.0).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
        let v = game_tree_value(&inst, SpecKind::Safety, GAME_TARGET, 0, 2.0).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn game_instances_agree() {
        let cfg = SolverConfig::default();
        for i in 0..5 {
            let inst = random_game_instance(&mut child_rng(17, i));
            let c = compare_game(&inst, &cfg).unwrap();
            assert!(c.max_abs_diff <= 1e-6, "{inst:?}: {c:?}");
            assert!(c.monotonicity_violation <= 1e-9, "{inst:?}: {c:?}");
        }
    }
}
