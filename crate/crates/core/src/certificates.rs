//! Distributionally robust control barrier certificates.
//!
//! A certificate is a polynomial `v̄` with parameters `η > 0`, `β ≤ 0`, `δ`
//! and an associated polynomial control `u(x)`. [`check_drcbc`] verifies
//! the defining inequalities on dense probe grids, using [`dual_value`] for
//! the worst-case expectation. This is a numerical check, not a proof:
//! nothing between probe points is examined.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambiguity::{child_rng, empirical_nominal, AmbiguitySet, TrueDistribution};
use crate::dro_dual::{disturbance_points_per_dim, dual_value, SolverConfig, ValueEvaluator};
use crate::error::{check_dim, Error, Result};
use crate::model::{builtin_system, BoxRegion, BuiltinSystem, SystemModel};
use crate::polynomial::Polynomial;

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateCandidate {
    v_bar: Polynomial,
    control: Vec<Polynomial>,
    eta: f64,
    beta: f64,
    delta: f64,
}

impl CertificateCandidate {
    pub fn new(
        v_bar: Polynomial,
        control: Vec<Polynomial>,
        eta: f64,
        beta: f64,
        delta: f64,
    ) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Argument(format!("eta must be positive, got {eta}")));
        }
        if !(beta <= 0.0 && beta.is_finite()) {
            return Err(Error::Argument(format!("beta must be <= 0, got {beta}")));
        }
        if !delta.is_finite() {
            return Err(Error::Argument("delta must be finite".into()));
        }
        if control.is_empty() {
            return Err(Error::Argument("certificate needs at least one control polynomial".into()));
        }
        for c in &control {
            check_dim(v_bar.arity(), c.arity(), "control polynomial arity")?;
        }
        Ok(Self {
            v_bar,
            control,
            eta,
            beta,
            delta,
        })
    }

    pub fn v_bar(&self) -> &Polynomial {
        &self.v_bar
    }

    pub fn control(&self) -> &[Polynomial] {
        &self.control
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn state_dim(&self) -> usize {
        self.v_bar.arity()
    }

    pub fn input_dim(&self) -> usize {
        self.control.len()
    }

    /// The raw polynomial control `u(x)`.
    pub fn control_at(&self, x: &[f64]) -> Vec<f64> {
        self.control.iter().map(|c| c.eval_unchecked(x)).collect()
    }

    /// `u(x)` mapped into the model's input set.
    pub fn admissible_control(&self, model: &SystemModel, x: &[f64]) -> Vec<f64> {
        model.input_set().project(&self.control_at(x))
    }

    fn check_model(&self, model: &SystemModel) -> Result<()> {
        check_dim(model.state_dim(), self.state_dim(), "certificate state dimension")?;
        check_dim(model.input_dim(), self.input_dim(), "certificate input dimension")
    }
}

/// Lower bound on the safety probability over `T` steps from a state with
/// certificate value `v0`: `η^{-T} v0 + (Σ_{i<T} η^{-i}) β`.
pub fn safety_lower_bound(cand: &CertificateCandidate, horizon: usize, v0: f64) -> f64 {
    let eta = cand.eta;
    let t = horizon as f64;
    if eta == 1.0 {
        return v0 + t * cand.beta;
    }
    let r = eta.recip();
    let sum = (1.0 - r.powf(t)) / (1.0 - r);
    r.powf(t) * v0 + sum * cand.beta
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// `v̄ ≤ 0` outside S.
    OffSafeNonPositive,
    /// `v̄ ≤ 1` on S.
    SafeAtMostOne,
    /// Worst-case expectation of `v̄` after one step minus `v̄/η` is at
    /// least `β` on S.
    RobustDecrease,
    /// `u(x) ∈ U`.
    InputAdmissible,
    /// `v̄ ≥ δ` on X0.
    InitialAtLeastDelta,
    /// `-v̄/η - β - θ^p λ(x) + Σ p_i l_i(x) ≥ 0` on S.
    DualBudget,
    /// `l_i(x) ≤ v̄(f(x,u(x),w)) + λ(x) d^p(w, ŵ_i)` on S × W.
    InnerBound,
    /// `λ(x) ≥ 0` on S.
    MultiplierNonNegative,
}

impl Condition {
    pub fn id(self) -> &'static str {
        match self {
            Condition::OffSafeNonPositive => "C1a",
            Condition::SafeAtMostOne => "C1b",
            Condition::RobustDecrease => "C2",
            Condition::InputAdmissible => "C3",
            Condition::InitialAtLeastDelta => "C4",
            Condition::DualBudget => "S-budget",
            Condition::InnerBound => "S-inner",
            Condition::MultiplierNonNegative => "S-lambda",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Condition::OffSafeNonPositive => "v <= 0 outside S",
            Condition::SafeAtMostOne => "v <= 1 on S",
            Condition::RobustDecrease => "worst-case E[v(x')] - v(x)/eta >= beta on S",
            Condition::InputAdmissible => "u(x) in U",
            Condition::InitialAtLeastDelta => "v >= delta on X0",
            Condition::DualBudget => "-v/eta - beta - theta^p lambda + sum p_i l_i >= 0 on S",
            Condition::InnerBound => "l_i <= v(f(x,u,w)) + lambda d^p(w, w_i) on S x W",
            Condition::MultiplierNonNegative => "lambda >= 0 on S",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionRecord {
    pub condition: Condition,
    pub passed: bool,
    /// Smallest margin over the probes (`+∞` when no probe applies).
    pub worst_margin: f64,
    pub worst_point: Option<Vec<f64>>,
    pub probes: usize,
}

/// Probe densities and the pass tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyGrid {
    pub state_per_dim: usize,
    pub disturbance_per_dim: usize,
    pub margin_tolerance: f64,
}

impl Default for VerifyGrid {
    fn default() -> Self {
        Self::for_dim(1)
    }
}

impl VerifyGrid {
    /// 401 state and 101 disturbance points per axis in 1-D, 17 otherwise.
    pub fn for_dim(state_dim: usize) -> Self {
        if state_dim <= 1 {
            Self {
                state_per_dim: 401,
                disturbance_per_dim: 101,
                margin_tolerance: 1e-4,
            }
        } else {
            Self {
                state_per_dim: 17,
                disturbance_per_dim: 17,
                margin_tolerance: 1e-4,
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if self.state_per_dim < 2 || self.disturbance_per_dim < 2 {
            return Err(Error::Config("verification grids need at least 2 points per axis".into()));
        }
        if !(self.margin_tolerance >= 0.0 && self.margin_tolerance.is_finite()) {
            return Err(Error::Config("margin_tolerance must be a non-negative number".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub records: Vec<ConditionRecord>,
    pub overall: bool,
    pub verify_box: (Vec<f64>, Vec<f64>),
    pub grid: VerifyGrid,
    /// Estimated range of `v̄` over the probed successor states, which sets
    /// the λ search interval of the worst-case expectations.
    pub successor_range: Option<(f64, f64)>,
}

impl VerificationReport {
    fn assemble(
        records: Vec<ConditionRecord>,
        verify_box: &BoxRegion,
        grid: &VerifyGrid,
        successor_range: Option<(f64, f64)>,
    ) -> Self {
        let overall = records.iter().all(|r| r.passed);
        Self {
            records,
            overall,
            verify_box: (verify_box.lower().to_vec(), verify_box.upper().to_vec()),
            grid: grid.clone(),
            successor_range,
        }
    }

    pub fn record(&self, condition: Condition) -> Option<&ConditionRecord> {
        self.records.iter().find(|r| r.condition == condition)
    }

    pub fn failed(&self) -> impl Iterator<Item = &ConditionRecord> + '_ {
        self.records.iter().filter(|r| !r.passed)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "verify box {:?} .. {:?}, {} state points/axis, {} disturbance points/axis, tolerance {:e}\n",
            self.verify_box.0,
            self.verify_box.1,
            self.grid.state_per_dim,
            self.grid.disturbance_per_dim,
            self.grid.margin_tolerance
        ));
        if let Some((lo, hi)) = self.successor_range {
            out.push_str(&format!("successor range of v: [{lo:.6}, {hi:.6}]\n"));
        }
        for r in &self.records {
            let at = match &r.worst_point {
                Some(p) => format!(" at {}", fmt_point(p)),
                None => " (no probes)".to_string(),
            };
            out.push_str(&format!(
                "{:<9} {:<4} worst margin {:>13.6e}{} over {} probes: {}\n",
                r.condition.id(),
                if r.passed { "PASS" } else { "FAIL" },
                r.worst_margin,
                at,
                r.probes,
                r.condition.description()
            ));
        }
        out.push_str(if self.overall { "overall PASS\n" } else { "overall FAIL\n" });
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("condition,passed,worst_margin,worst_point,probes\n");
        for r in &self.records {
            let pt = r
                .worst_point
                .as_ref()
                .map(|p| p.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(" "))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{:e},{},{}\n",
                r.condition.id(),
                r.passed,
                r.worst_margin,
                pt,
                r.probes
            ));
        }
        out
    }
}

fn fmt_point(p: &[f64]) -> String {
    let parts: Vec<String> = p.iter().map(|v| format!("{v:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Running minimum; ties keep the earliest probe so the result does not
/// depend on how the parallel map was scheduled.
struct Worst {
    margin: f64,
    point: Option<Vec<f64>>,
    probes: usize,
}

impl Worst {
    fn new() -> Self {
        Self {
            margin: f64::INFINITY,
            point: None,
            probes: 0,
        }
    }

    fn push(&mut self, margin: f64, point: &[f64]) {
        self.probes += 1;
        // NaN margins count as failures
        let m = if margin.is_nan() { f64::NEG_INFINITY } else { margin };
        if self.point.is_none() || m < self.margin {
            self.margin = m;
            self.point = Some(point.to_vec());
        }
    }

    fn finish(self, condition: Condition, tol: f64) -> ConditionRecord {
        ConditionRecord {
            condition,
            passed: self.margin >= -tol,
            worst_margin: self.margin,
            worst_point: self.point,
            probes: self.probes,
        }
    }
}

struct Probes {
    state: Vec<Vec<f64>>,
    initial: Vec<Vec<f64>>,
    disturbance: Vec<Vec<f64>>,
}

fn probes(model: &SystemModel, verify_box: &BoxRegion, grid: &VerifyGrid) -> Result<Probes> {
    check_dim(model.state_dim(), verify_box.dim(), "verify box")?;
    grid.validate()?;
    let initial = match model.init().bounding_box() {
        Some(bb) => {
            if !verify_box.contains_box(bb) {
                return Err(Error::Config(format!(
                    "verify box {:?}..{:?} does not contain X0 {:?}..{:?}",
                    verify_box.lower(),
                    verify_box.upper(),
                    bb.lower(),
                    bb.upper()
                )));
            }
            bb.grid_points(grid.state_per_dim)
        }
        None => verify_box.grid_points(grid.state_per_dim),
    };
    let initial = initial
        .into_iter()
        .filter(|x| model.init().contains_unchecked(x))
        .collect();
    let wd = model.disturbance_dim();
    let disturbance = model
        .disturbance_box()
        .grid_points(disturbance_points_per_dim(grid.disturbance_per_dim, wd));
    Ok(Probes {
        state: verify_box.grid_points(grid.state_per_dim),
        initial,
        disturbance,
    })
}

/// Conditions that only involve `v̄` and `u`.
fn pointwise_records(
    cand: &CertificateCandidate,
    model: &SystemModel,
    pr: &Probes,
    tol: f64,
) -> Vec<ConditionRecord> {
    let mut off = Worst::new();
    let mut upper = Worst::new();
    let mut input = Worst::new();
    for x in &pr.state {
        let v = cand.v_bar.eval_unchecked(x);
        if model.safe().contains_unchecked(x) {
            upper.push(1.0 - v, x);
        } else {
            off.push(-v, x);
        }
        input.push(-model.input_set().violation(&cand.control_at(x)), x);
    }
    let mut init = Worst::new();
    for x in &pr.initial {
        init.push(cand.v_bar.eval_unchecked(x) - cand.delta, x);
    }
    vec![
        off.finish(Condition::OffSafeNonPositive, tol),
        upper.finish(Condition::SafeAtMostOne, tol),
        input.finish(Condition::InputAdmissible, tol),
        init.finish(Condition::InitialAtLeastDelta, tol),
    ]
}

/// Checks the certificate conditions on probe grids over `verify_box`.
///
/// The worst-case expectation uses the raw polynomial control `u(x)` and
/// `v̄` itself, which need not stay in `[0, 1]`; the λ search interval is
/// taken from the range of `v̄` over all probed successor states.
pub fn check_drcbc(
    cand: &CertificateCandidate,
    model: &SystemModel,
    amb: &AmbiguitySet,
    verify_box: &BoxRegion,
    grid: &VerifyGrid,
    cfg: &SolverConfig,
) -> Result<VerificationReport> {
    cand.check_model(model)?;
    check_dim(model.disturbance_dim(), amb.nominal().dim(), "nominal atoms")?;
    if !amb.has_polynomial_cost() {
        return Err(Error::Config(
            "certificate checks need a polynomial transport cost (Euclidean metric, even order)".into(),
        ));
    }
    cfg.validate()?;
    let pr = probes(model, verify_box, grid)?;
    let tol = grid.margin_tolerance;
    let mut records = pointwise_records(cand, model, &pr, tol);

    let safe: Vec<&Vec<f64>> = pr
        .state
        .iter()
        .filter(|x| model.safe().contains_unchecked(x))
        .collect();
    let range = successor_range(cand, model, &safe, &pr.disturbance);
    let vbar = |y: &[f64]| cand.v_bar.eval_unchecked(y);
    let (lo, hi) = range.unwrap_or((0.0, 0.0));
    let evaluator = ValueEvaluator::with_estimated_range(&vbar, "certificate", lo, hi);
    let solver = SolverConfig {
        disturbance_grid_initial: grid.disturbance_per_dim,
        ..cfg.clone()
    };
    let margins: Vec<f64> = safe
        .par_iter()
        .map(|x| {
            let u = cand.control_at(x);
            let r = dual_value(&evaluator, model, x, &u, amb, &solver)?;
            Ok(r.value - cand.v_bar.eval_unchecked(x) / cand.eta - cand.beta)
        })
        .collect::<Result<_>>()?;
    let mut dec = Worst::new();
    for (x, m) in safe.iter().zip(margins) {
        dec.push(m, x);
    }
    records.insert(2, dec.finish(Condition::RobustDecrease, tol));
    Ok(VerificationReport::assemble(records, verify_box, grid, range))
}

fn successor_range(
    cand: &CertificateCandidate,
    model: &SystemModel,
    states: &[&Vec<f64>],
    ws: &[Vec<f64>],
) -> Option<(f64, f64)> {
    let per_state: Vec<(f64, f64)> = states
        .par_iter()
        .map(|x| {
            let u = cand.control_at(x);
            let mut next = vec![0.0; model.state_dim()];
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for w in ws {
                model.step_into(x, &u, w, &mut next);
                let v = cand.v_bar.eval_unchecked(&next);
                if v.is_finite() {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            (lo, hi)
        })
        .collect();
    let (lo, hi) = per_state
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(l, h)| (a.min(l), b.max(h)));
    (lo <= hi).then_some((lo, hi))
}

/// Auxiliary polynomials of a sum-of-squares certificate solution: the
/// multiplier `λ(x)` and one inner bound `l_i(x)` per nominal atom.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SosAuxiliary {
    pub lambda: Option<Polynomial>,
    pub inner: Vec<Polynomial>,
}

/// Grid-checks the pointwise implications of a full sum-of-squares
/// solution bundle.
pub fn check_sos_conditions(
    cand: &CertificateCandidate,
    aux: &SosAuxiliary,
    model: &SystemModel,
    amb: &AmbiguitySet,
    verify_box: &BoxRegion,
    grid: &VerifyGrid,
) -> Result<VerificationReport> {
    cand.check_model(model)?;
    let lambda = aux
        .lambda
        .as_ref()
        .ok_or_else(|| Error::Argument("missing multiplier polynomial lambda(x)".into()))?;
    let atoms = amb.nominal().atoms();
    if aux.inner.len() != atoms.len() {
        return Err(Error::Argument(format!(
            "expected {} inner-bound polynomials l_i(x), got {}",
            atoms.len(),
            aux.inner.len()
        )));
    }
    check_dim(cand.state_dim(), lambda.arity(), "lambda polynomial arity")?;
    for l in &aux.inner {
        check_dim(cand.state_dim(), l.arity(), "inner-bound polynomial arity")?;
    }
    check_dim(model.disturbance_dim(), amb.nominal().dim(), "nominal atoms")?;
    let pr = probes(model, verify_box, grid)?;
    let tol = grid.margin_tolerance;
    let mut records = pointwise_records(cand, model, &pr, tol);

    let safe: Vec<&Vec<f64>> = pr
        .state
        .iter()
        .filter(|x| model.safe().contains_unchecked(x))
        .collect();
    let budget = amb.budget();
    // (budget margin, multiplier margin, worst inner margin and its w)
    let per_state: Vec<(f64, f64, f64, Vec<f64>)> = safe
        .par_iter()
        .map(|x| {
            let lam = lambda.eval_unchecked(x);
            let ls: Vec<f64> = aux.inner.iter().map(|l| l.eval_unchecked(x)).collect();
            let weighted: f64 = ls.iter().zip(atoms).map(|(l, (_, p))| p * l).sum();
            let v = cand.v_bar.eval_unchecked(x);
            let budget_margin = -v / cand.eta - cand.beta - budget * lam + weighted;
            let u = cand.control_at(x);
            let mut next = vec![0.0; model.state_dim()];
            let mut worst = f64::INFINITY;
            let mut worst_w = pr.disturbance[0].clone();
            for w in &pr.disturbance {
                model.step_into(x, &u, w, &mut next);
                let vn = cand.v_bar.eval_unchecked(&next);
                for ((atom, _), l) in atoms.iter().zip(&ls) {
                    let m = vn + lam * amb.cost(w, atom) - l;
                    if m < worst || m.is_nan() {
                        worst = if m.is_nan() { f64::NEG_INFINITY } else { m };
                        worst_w = w.clone();
                    }
                }
            }
            (budget_margin, lam, worst, worst_w)
        })
        .collect();
    let mut bud = Worst::new();
    let mut inner = Worst::new();
    let mut mult = Worst::new();
    for (x, (b, lam, m, w)) in safe.iter().zip(&per_state) {
        bud.push(*b, x);
        mult.push(*lam, x);
        let mut xw = (*x).clone();
        xw.extend_from_slice(w);
        inner.push(*m, &xw);
    }
    records.push(bud.finish(Condition::DualBudget, tol));
    records.push(inner.finish(Condition::InnerBound, tol));
    records.push(mult.finish(Condition::MultiplierNonNegative, tol));
    Ok(VerificationReport::assemble(records, verify_box, grid, None))
}

/// Seed used to draw the nominal samples of the bundled fixtures.
pub const DEFAULT_NOMINAL_SEED: u64 = 2025;

pub const FIXTURE_NAMES: [&str; 3] = ["v_bar_1", "v_bar_2", "v_bar_4d"];

/// A printed certificate together with the setting it was computed for.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateFixture {
    pub name: &'static str,
    pub candidate: CertificateCandidate,
    pub system: BuiltinSystem,
    pub radius: f64,
    pub order: f64,
    pub verify_box: BoxRegion,
    pub true_distribution: TrueDistribution,
    /// Number of samples behind the empirical nominal distribution.
    pub nominal_samples: usize,
}

impl CertificateFixture {
    pub fn model(&self) -> SystemModel {
        builtin_system(self.system)
    }

    /// Ambiguity set around an empirical nominal drawn from the true
    /// distribution with the given seed.
    pub fn ambiguity(&self, seed: u64) -> Result<AmbiguitySet> {
        let mut rng = child_rng(seed, 0);
        let samples = (0..self.nominal_samples)
            .map(|_| self.true_distribution.sample(&mut rng))
            .collect::<Result<Vec<_>>>()?;
        let support = self.model().disturbance_box().clone();
        AmbiguitySet::new(empirical_nominal(&samples, &support)?, self.radius, self.order)
    }

    pub fn default_grid(&self) -> VerifyGrid {
        VerifyGrid::for_dim(self.candidate.state_dim())
    }
}

/// Loads a bundled certificate by name (`v_bar_1`, `v_bar_2`, `v_bar_4d`).
pub fn certificate_fixture(name: &str) -> Result<CertificateFixture> {
    let parse = |text: &str| Polynomial::parse_terms(text);
    let one_d = |v: &str, u: &str, radius: f64, name: &'static str| -> Result<CertificateFixture> {
        Ok(CertificateFixture {
            name,
            candidate: CertificateCandidate::new(parse(v)?, vec![parse(u)?], 1.0, -0.0015, 0.96)?,
            system: BuiltinSystem::Safety1d,
            radius,
            order: 2.0,
            verify_box: BoxRegion::interval(-2.0, 4.0)?,
            true_distribution: TrueDistribution::truncated_gaussian(
                vec![0.0],
                vec![2.0],
                BoxRegion::interval(-4.0, 1.0)?,
            )?,
            nominal_samples: 5,
        })
    };
    match name {
        "v_bar_1" => one_d(
            include_str!("../fixtures/v_bar_1.poly"),
            include_str!("../fixtures/u_1.poly"),
            0.1,
            "v_bar_1",
        ),
        "v_bar_2" => one_d(
            include_str!("../fixtures/v_bar_2.poly"),
            include_str!("../fixtures/u_2.poly"),
            0.01,
            "v_bar_2",
        ),
        "v_bar_4d" => Ok(CertificateFixture {
            name: "v_bar_4d",
            candidate: CertificateCandidate::new(
                parse(include_str!("../fixtures/v_bar_4d.poly"))?,
                vec![parse(include_str!("../fixtures/u_4d.poly"))?],
                1.0,
                -0.0004,
                0.96,
            )?,
            system: BuiltinSystem::Safety4d,
            radius: 0.1,
            order: 2.0,
            verify_box: BoxRegion::cube(4, -1.0, 1.0)?,
            true_distribution: TrueDistribution::truncated_gaussian(
                vec![0.0],
                vec![0.8],
                BoxRegion::interval(-0.8, 0.8)?,
            )?,
            nominal_samples: 5,
        }),
        other => Err(Error::Config(format!(
            "unknown certificate fixture `{other}` (expected one of {})",
            FIXTURE_NAMES.join(", ")
        ))),
    }
}
