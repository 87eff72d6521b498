//! Monte Carlo evaluation of closed-loop policies and the repeated
//! synthesis study for the room-temperature system.
//!
//! Nothing here touches the filesystem; the CLI writes reports.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambiguity::{
    child_rng, empirical_nominal, AmbiguitySet, TrueDistribution, DEFAULT_REJECTION_CAP,
};
use crate::certificates::CertificateCandidate;
use crate::dro_dual::SolverConfig;
use crate::error::{check_dim, Error, Result};
use crate::model::{builtin_system, BuiltinSystem, Region, SystemModel};
use crate::synthesis::{
    evaluate_fixed_distribution, initial_probes, min_over_initial, value_iteration_with,
    PolicyRule, PolicyTable, SpecKind, StateGrid, SynthesisOptions,
};

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy)]
pub enum PolicySource<'a> {
    /// Time-varying table, applied at the nearest node.
    Table(&'a PolicyTable),
    /// Certificate control polynomials, projected into U.
    Certificate(&'a CertificateCandidate),
}

impl PolicySource<'_> {
    fn input(&self, model: &SystemModel, t: usize, x: &[f64]) -> Vec<f64> {
        match self {
            PolicySource::Table(p) => p.lookup(t, x).to_vec(),
            PolicySource::Certificate(c) => c.admissible_control(model, x),
        }
    }

    fn check(&self, model: &SystemModel) -> Result<()> {
        match self {
            PolicySource::Table(p) => {
                check_dim(model.state_dim(), p.grid().dim(), "policy grid")?;
                check_dim(model.input_dim(), p.input_dim(), "policy inputs")?;
                if p.horizon() < model.horizon() {
                    return Err(Error::Argument(format!(
                        "policy covers {} stages, model horizon is {}",
                        p.horizon(),
                        model.horizon()
                    )));
                }
                Ok(())
            }
            PolicySource::Certificate(c) => {
                check_dim(model.state_dim(), c.state_dim(), "certificate state dimension")?;
                check_dim(model.input_dim(), c.input_dim(), "certificate input dimension")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum InitialState {
    /// Uniform over X0 (rejection sampling inside its bounding box).
    #[default]
    Uniform,
    Fixed { x0: Vec<f64> },
    /// Trial `i` starts at probe `i mod n` of the X0 grid at this resolution.
    Grid { resolution: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub trials: usize,
    pub master_seed: u64,
    pub true_distribution: TrueDistribution,
    pub spec_kind: SpecKind,
    pub initial: InitialState,
    /// Keep every trajectory in the report.
    pub log_trajectories: bool,
}

impl SimulationConfig {
    pub fn new(trials: usize, master_seed: u64, true_distribution: TrueDistribution, spec_kind: SpecKind) -> Self {
        Self {
            trials,
            master_seed,
            true_distribution,
            spec_kind,
            initial: InitialState::Uniform,
            log_trajectories: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub trial: usize,
    /// `x_0 .. x_T`, cut short only if the state becomes NaN.
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub successes: usize,
    pub trials: usize,
    pub rate: f64,
    pub wilson_interval_95: (f64, f64),
    pub trajectories: Vec<Trajectory>,
}

impl SimulationReport {
    fn from_counts(successes: usize, trials: usize, trajectories: Vec<Trajectory>) -> Self {
        Self {
            successes,
            trials,
            rate: successes as f64 / trials as f64,
            wilson_interval_95: wilson_interval(successes, trials),
            trajectories,
        }
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.wilson_interval_95.1 - self.wilson_interval_95.0)
    }

    pub fn to_text(&self) -> String {
        format!(
            "successes {} / {} trials, rate {:.4}, 95% Wilson interval [{:.4}, {:.4}]\n",
            self.successes, self.trials, self.rate, self.wilson_interval_95.0, self.wilson_interval_95.1
        )
    }

    /// One row per logged step: `trial,t,success,x...,u...`.
    pub fn trajectories_csv(&self) -> String {
        let mut out = String::from("trial,t,success,state,input\n");
        for tr in &self.trajectories {
            for (t, x) in tr.states.iter().enumerate() {
                let u = tr
                    .inputs
                    .get(t)
                    .map(|u| join(u))
                    .unwrap_or_default();
                out.push_str(&format!("{},{},{},{},{}\n", tr.trial, t, tr.success, join(x), u));
            }
        }
        out
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|c| format!("{c}")).collect::<Vec<_>>().join(" ")
}

/// 95% Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0).min(p), (center + half).min(1.0).max(p))
}

/// Overflowed coordinates keep their sign, so `+∞` still belongs to an
/// unbounded set such as `{x ≥ -2}`. NaN belongs to nothing.
fn in_region(r: &Region, x: &[f64]) -> bool {
    !x.iter().any(|v| v.is_nan()) && r.contains_unchecked(x)
}

/// Sequential scorer: the outcome is decided at the first step that
/// resolves the event.
fn score(model: &SystemModel, kind: SpecKind, states: &[Vec<f64>]) -> bool {
    let horizon = model.horizon();
    for t in 0..=horizon {
        let Some(x) = states.get(t) else {
            return false;
        };
        match kind {
            SpecKind::ReachAvoid => {
                let target = model.target().expect("checked before simulation");
                if in_region(target, x) {
                    return true;
                }
                if !in_region(model.safe(), x) {
                    return false;
                }
            }
            SpecKind::Safety => {
                if !in_region(model.safe(), x) {
                    return false;
                }
            }
        }
    }
    kind == SpecKind::Safety
}

/// Scores a trajectory with the sum-product form of the events:
/// `1_G(x_0) + Σ_{t≥1} (Π_{s<t} 1_{S∖G}(x_s)) 1_G(x_t)` for reach-avoid and
/// `Π_t 1_S(x_t)` for safety. Missing (NaN) steps count as outside
/// every region.
pub fn rescore(model: &SystemModel, kind: SpecKind, trajectory: &Trajectory) -> Result<bool> {
    let horizon = model.horizon();
    let at = |t: usize| trajectory.states.get(t).map(Vec::as_slice);
    let ind = |r: &Region, t: usize| -> f64 {
        match at(t) {
            Some(x) if in_region(r, x) => 1.0,
            _ => 0.0,
        }
    };
    match kind {
        SpecKind::Safety => {
            let prod: f64 = (0..=horizon).map(|t| ind(model.safe(), t)).product();
            Ok(prod == 1.0)
        }
        SpecKind::ReachAvoid => {
            let g = model
                .target()
                .ok_or_else(|| Error::Argument("reach-avoid needs a target region".into()))?;
            let s_not_g = |t: usize| ind(model.safe(), t) * (1.0 - ind(g, t));
            let mut total = 0.0;
            for t in 0..=horizon {
                let prefix: f64 = (0..t).map(s_not_g).product();
                total += prefix * ind(g, t);
            }
            Ok(total == 1.0)
        }
    }
}

fn sample_initial(model: &SystemModel, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let init = model.init();
    let bb = init
        .bounding_box()
        .ok_or_else(|| Error::Config("uniform initial states need a bounded X0".into()))?;
    for _ in 0..DEFAULT_REJECTION_CAP {
        let x: Vec<f64> = bb
            .lower()
            .iter()
            .zip(bb.upper())
            .map(|(&l, &u)| if u > l { rng.random_range(l..=u) } else { l })
            .collect();
        if init.contains_unchecked(&x) {
            return Ok(x);
        }
    }
    Err(Error::DegenerateTruncation {
        attempts: DEFAULT_REJECTION_CAP,
    })
}

fn rollout(
    model: &SystemModel,
    policy: PolicySource<'_>,
    sim: &SimulationConfig,
    grid_starts: &[Vec<f64>],
    trial: usize,
) -> Result<Trajectory> {
    let mut rng = child_rng(sim.master_seed, trial as u64);
    let x0 = match &sim.initial {
        InitialState::Uniform => sample_initial(model, &mut rng)?,
        InitialState::Fixed { x0 } => x0.clone(),
        InitialState::Grid { .. } => grid_starts[trial % grid_starts.len()].clone(),
    };
    let horizon = model.horizon();
    let mut states = Vec::with_capacity(horizon + 1);
    let mut inputs = Vec::with_capacity(horizon);
    states.push(x0);
    for t in 0..horizon {
        let x = states.last().expect("non-empty");
        let u = policy.input(model, t, x);
        let w = sim.true_distribution.sample(&mut rng)?;
        let mut y = vec![0.0; model.state_dim()];
        model.step_into(x, &u, &w, &mut y);
        inputs.push(u);
        if y.iter().any(|v| v.is_nan()) {
            // absorbing outside every region
            break;
        }
        states.push(y);
    }
    let success = score(model, sim.spec_kind, &states);
    Ok(Trajectory {
        trial,
        states,
        inputs,
        success,
    })
}

/// Closed-loop Monte Carlo estimate of the event probability. Trial `i`
/// draws everything from its own child generator, so the result does not
/// depend on the number of workers.
pub fn monte_carlo(
    model: &SystemModel,
    policy: PolicySource<'_>,
    sim: &SimulationConfig,
) -> Result<SimulationReport> {
    if sim.trials == 0 {
        return Err(Error::Config("trials must be >= 1".into()));
    }
    policy.check(model)?;
    check_dim(model.disturbance_dim(), sim.true_distribution.dim(), "true distribution")?;
    if sim.spec_kind == SpecKind::ReachAvoid && model.target().is_none() {
        return Err(Error::Argument("reach-avoid needs a target region".into()));
    }
    let grid_starts = match &sim.initial {
        InitialState::Grid { resolution } => initial_probes(model, *resolution)?,
        InitialState::Fixed { x0 } => {
            check_dim(model.state_dim(), x0.len(), "initial state")?;
            Vec::new()
        }
        InitialState::Uniform => Vec::new(),
    };
    if matches!(sim.initial, InitialState::Grid { .. }) && grid_starts.is_empty() {
        return Err(Error::Config("initial grid has no points inside X0".into()));
    }
    let trajectories: Vec<Trajectory> = (0..sim.trials)
        .into_par_iter()
        .map(|i| rollout(model, policy, sim, &grid_starts, i))
        .collect::<Result<_>>()?;
    let successes = trajectories.iter().filter(|t| t.success).count();
    let kept = if sim.log_trajectories { trajectories } else { Vec::new() };
    Ok(SimulationReport::from_counts(successes, sim.trials, kept))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyGroup {
    pub samples: usize,
    pub radius: f64,
}

/// The five `(N, θ)` groups of the room-temperature study.
pub const PAPER_GROUPS: [StudyGroup; 5] = [
    StudyGroup { samples: 1, radius: 0.1 },
    StudyGroup { samples: 5, radius: 0.05 },
    StudyGroup { samples: 10, radius: 0.025 },
    StudyGroup { samples: 20, radius: 0.01 },
    StudyGroup { samples: 40, radius: 0.005 },
];

pub const DESK_REPETITIONS: usize = 20;
pub const PAPER_REPETITIONS: usize = 100;
pub const DESK_TRIALS: usize = 2000;
pub const PAPER_TRIALS: usize = 10000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub system: String,
    pub groups: Vec<StudyGroup>,
    pub repetitions: usize,
    pub seed: u64,
    /// Satisfaction threshold; also the threshold of the prefer-first rule.
    pub alpha: f64,
    pub order: f64,
    /// Spacing of the synthesis grid over S.
    pub state_resolution: f64,
    /// Spacing of the X0 probes for the minimum.
    pub initial_resolution: f64,
    /// Atoms per axis in the discretized true distribution used for
    /// evaluation.
    pub evaluation_atoms: usize,
    pub prefer_first: bool,
    pub solver: SolverConfig,
    /// Defaults to uniform over the model's disturbance box.
    #[serde(skip)]
    pub true_distribution: Option<TrueDistribution>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            system: BuiltinSystem::RoomTemperature.name().to_string(),
            groups: PAPER_GROUPS.to_vec(),
            repetitions: DESK_REPETITIONS,
            seed: 0,
            alpha: 0.9,
            order: 1.0,
            state_resolution: 0.01,
            initial_resolution: 0.01,
            evaluation_atoms: 201,
            prefer_first: true,
            solver: SolverConfig::default(),
            true_distribution: None,
        }
    }
}

impl StudyConfig {
    pub fn paper_scale(mut self) -> Self {
        self.repetitions = PAPER_REPETITIONS;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be >= 1".into()));
        }
        if self.groups.is_empty() {
            return Err(Error::Config("study needs at least one group".into()));
        }
        for g in &self.groups {
            if g.samples == 0 || !(g.radius >= 0.0) {
                return Err(Error::Config(format!("invalid study group {g:?}")));
            }
        }
        if !(self.state_resolution > 0.0 && self.initial_resolution > 0.0) {
            return Err(Error::Config("resolutions must be positive".into()));
        }
        if self.evaluation_atoms == 0 {
            return Err(Error::Config("evaluation_atoms must be >= 1".into()));
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepetitionRow {
    pub group: usize,
    pub repetition: usize,
    pub samples: usize,
    pub radius: f64,
    /// Mean of the drawn samples.
    pub sample_mean: f64,
    pub dr_min_probability: f64,
    pub dr_success: bool,
    pub baseline_min_probability: f64,
    pub baseline_success: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub group: usize,
    pub samples: usize,
    pub radius: f64,
    pub completed: usize,
    pub dr_average_all: f64,
    pub dr_average_successes: f64,
    pub dr_success_rate: f64,
    pub baseline_average_all: f64,
    pub baseline_average_successes: f64,
    pub baseline_success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub rows: Vec<RepetitionRow>,
    pub groups: Vec<GroupSummary>,
}

impl StudyReport {
    pub fn repetitions_csv(&self) -> String {
        let mut out = String::from(
            "group,repetition,samples,radius,sample_mean,dr_min_probability,dr_success,baseline_min_probability,baseline_success,error\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.group,
                r.repetition,
                r.samples,
                r.radius,
                r.sample_mean,
                r.dr_min_probability,
                r.dr_success,
                r.baseline_min_probability,
                r.baseline_success,
                r.error.as_deref().unwrap_or("").replace(',', ";")
            ));
        }
        out
    }

    pub fn groups_csv(&self) -> String {
        let mut out = String::from(
            "group,samples,radius,completed,dr_average_all,dr_average_successes,dr_success_rate,baseline_average_all,baseline_average_successes,baseline_success_rate\n",
        );
        for g in &self.groups {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                g.group,
                g.samples,
                g.radius,
                g.completed,
                g.dr_average_all,
                g.dr_average_successes,
                g.dr_success_rate,
                g.baseline_average_all,
                g.baseline_average_successes,
                g.baseline_success_rate
            ));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from(
            "group  N   theta   DR avg (all/succ)   DR success   baseline avg (all/succ)   baseline success\n",
        );
        for g in &self.groups {
            out.push_str(&format!(
                "{:>5} {:>3} {:>7} {:>8.4} / {:<8.4} {:>10.1}% {:>12.4} / {:<8.4} {:>14.1}%\n",
                g.group,
                g.samples,
                g.radius,
                g.dr_average_all,
                g.dr_average_successes,
                100.0 * g.dr_success_rate,
                g.baseline_average_all,
                g.baseline_average_successes,
                100.0 * g.baseline_success_rate
            ));
        }
        out
    }
}

/// Everything one repetition needs that does not change between
/// repetitions.
struct StudyContext {
    model: SystemModel,
    grid: StateGrid,
    truth: TrueDistribution,
    evaluation: crate::ambiguity::NominalDistribution,
    options: SynthesisOptions,
}

impl StudyContext {
    fn new(study: &StudyConfig) -> Result<Self> {
        let system: BuiltinSystem = study.system.parse()?;
        let model = builtin_system(system);
        if model.target().is_none() {
            return Err(Error::Config(format!("system `{}` has no target region", study.system)));
        }
        let working = model
            .safe()
            .bounding_box()
            .ok_or_else(|| Error::Config("the study needs a bounded safe set".into()))?
            .clone();
        let grid = StateGrid::with_resolution(working, study.state_resolution)?;
        let truth = study
            .true_distribution
            .clone()
            .unwrap_or_else(|| TrueDistribution::UniformBox(model.disturbance_box().clone()));
        let evaluation = truth.discretize(study.evaluation_atoms)?;
        let options = SynthesisOptions {
            policy_rule: if study.prefer_first {
                PolicyRule::PreferFirst { alpha: study.alpha }
            } else {
                PolicyRule::Optimal
            },
            ..SynthesisOptions::default()
        };
        Ok(Self {
            model,
            grid,
            truth,
            evaluation,
            options,
        })
    }

    fn evaluate(&self, study: &StudyConfig, amb: &AmbiguitySet) -> Result<f64> {
        let (_, policy) = value_iteration_with(
            &self.model,
            amb,
            &self.grid,
            &study.solver,
            SpecKind::ReachAvoid,
            &self.options,
        )?;
        let vg = evaluate_fixed_distribution(
            &self.model,
            &policy,
            &self.evaluation,
            &self.grid,
            SpecKind::ReachAvoid,
        )?;
        Ok(min_over_initial(&vg, &self.model, study.initial_resolution)?.0)
    }

    fn repetition(&self, study: &StudyConfig, gi: usize, g: StudyGroup, rep: usize) -> RepetitionRow {
        let stream = ((gi as u64) << 32) | rep as u64;
        let mut row = RepetitionRow {
            group: gi,
            repetition: rep,
            samples: g.samples,
            radius: g.radius,
            sample_mean: f64::NAN,
            dr_min_probability: f64::NAN,
            dr_success: false,
            baseline_min_probability: f64::NAN,
            baseline_success: false,
            error: None,
        };
        let result = (|| -> Result<()> {
            let mut rng = child_rng(study.seed, stream);
            let samples = (0..g.samples)
                .map(|_| self.truth.sample(&mut rng))
                .collect::<Result<Vec<_>>>()?;
            row.sample_mean = samples.iter().map(|w| w[0]).sum::<f64>() / samples.len() as f64;
            let nominal = empirical_nominal(&samples, self.model.disturbance_box())?;
            let dr = AmbiguitySet::new(nominal, g.radius, study.order)?;
            row.dr_min_probability = self.evaluate(study, &dr)?;
            row.dr_success = row.dr_min_probability >= study.alpha;
            let base = dr.with_radius(0.0)?;
            row.baseline_min_probability = self.evaluate(study, &base)?;
            row.baseline_success = row.baseline_min_probability >= study.alpha;
            Ok(())
        })();
        if let Err(e) = result {
            row.error = Some(e.to_string());
            row.dr_success = false;
            row.baseline_success = false;
        }
        row
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn summarize(gi: usize, g: StudyGroup, rows: &[RepetitionRow], total: usize) -> GroupSummary {
    let ok: Vec<&RepetitionRow> = rows.iter().filter(|r| r.error.is_none()).collect();
    GroupSummary {
        group: gi,
        samples: g.samples,
        radius: g.radius,
        completed: ok.len(),
        dr_average_all: mean(ok.iter().map(|r| r.dr_min_probability)),
        dr_average_successes: mean(ok.iter().filter(|r| r.dr_success).map(|r| r.dr_min_probability)),
        dr_success_rate: rows.iter().filter(|r| r.dr_success).count() as f64 / total as f64,
        baseline_average_all: mean(ok.iter().map(|r| r.baseline_min_probability)),
        baseline_average_successes: mean(
            ok.iter()
                .filter(|r| r.baseline_success)
                .map(|r| r.baseline_min_probability),
        ),
        baseline_success_rate: rows.iter().filter(|r| r.baseline_success).count() as f64
            / total as f64,
    }
}

/// Repeated synthesis study: for every group and repetition, draw `N`
/// samples, synthesize the robust policy (radius θ) and the empirical
/// baseline (θ = 0), evaluate both exactly under the discretized true
/// distribution and record the minimum over X0. Per-repetition failures
/// are recorded in the row instead of aborting.
pub fn run_group_study(study: &StudyConfig) -> Result<StudyReport> {
    study.validate()?;
    let ctx = StudyContext::new(study)?;
    let mut rows = Vec::new();
    let mut groups = Vec::new();
    for (gi, g) in study.groups.iter().enumerate() {
        let group_rows: Vec<RepetitionRow> = (0..study.repetitions)
            .into_par_iter()
            .map(|rep| ctx.repetition(study, gi, *g, rep))
            .collect();
        groups.push(summarize(gi, *g, &group_rows, study.repetitions));
        rows.extend(group_rows);
    }
    Ok(StudyReport { rows, groups })
}
