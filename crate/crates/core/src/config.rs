//! Experiment configuration files (TOML).
//!
//! Every section and field is optional; see [`ExperimentConfig`] for the
//! defaults. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ambiguity::{child_rng, empirical_nominal, AmbiguitySet, NominalDistribution, TrueDistribution};
use crate::certificates::{certificate_fixture, CertificateCandidate, VerifyGrid};
use crate::dro_dual::SolverConfig;
use crate::error::{Error, Result};
use crate::harness::{InitialState, StudyConfig};
use crate::model::{builtin_system, BoxRegion, BuiltinSystem, SystemModel};
use crate::polynomial::Polynomial;
use crate::synthesis::{Interpolation, PolicyRule, SpecKind, StateGrid, SynthesisOptions};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub model: ModelSection,
    pub ambiguity: AmbiguitySection,
    pub grid: GridSection,
    pub solver: SolverConfig,
    pub simulation: SimulationSection,
    pub study: StudyConfig,
    pub certificate: CertificateSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// `room_temperature`, `safety_1d` or `safety_4d`.
    pub system: String,
    pub horizon: Option<usize>,
    /// Defaults to reach-avoid when the system has a target, else safety.
    pub spec: Option<SpecKind>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            system: BuiltinSystem::RoomTemperature.name().to_string(),
            horizon: None,
            spec: None,
        }
    }
}

/// A disturbance distribution. Box supports default to the model's W.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    Uniform,
    TruncatedGaussian { mean: Vec<f64>, std: Vec<f64> },
    Finite { atoms: Vec<Vec<f64>>, weights: Vec<f64> },
}

impl DistributionSpec {
    pub fn build(&self, model: &SystemModel) -> Result<TrueDistribution> {
        let support = model.disturbance_box().clone();
        match self {
            DistributionSpec::Uniform => Ok(TrueDistribution::UniformBox(support)),
            DistributionSpec::TruncatedGaussian { mean, std } => {
                TrueDistribution::truncated_gaussian(mean.clone(), std.clone(), support)
            }
            DistributionSpec::Finite { atoms, weights } => Ok(TrueDistribution::FiniteSupport(
                finite(atoms, weights)?,
            )),
        }
    }
}

fn finite(atoms: &[Vec<f64>], weights: &[f64]) -> Result<NominalDistribution> {
    if atoms.len() != weights.len() {
        return Err(Error::Config(format!(
            "{} atoms but {} weights",
            atoms.len(),
            weights.len()
        )));
    }
    NominalDistribution::new(atoms.iter().cloned().zip(weights.iter().copied()).collect())
}

/// The disturbance law of the built-in case studies.
pub fn default_truth(system: BuiltinSystem) -> DistributionSpec {
    match system {
        BuiltinSystem::RoomTemperature => DistributionSpec::Uniform,
        BuiltinSystem::Safety1d => DistributionSpec::TruncatedGaussian {
            mean: vec![0.0],
            std: vec![2.0],
        },
        BuiltinSystem::Safety4d => DistributionSpec::TruncatedGaussian {
            mean: vec![0.0],
            std: vec![0.8],
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NominalSpec {
    Atoms { atoms: Vec<Vec<f64>>, weights: Vec<f64> },
    /// Empirical distribution of `samples` draws from the true
    /// distribution, using the generator stream `seed`.
    Sampled { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmbiguitySection {
    pub radius: f64,
    pub order: f64,
    pub nominal: NominalSpec,
}

impl Default for AmbiguitySection {
    fn default() -> Self {
        Self {
            radius: 0.05,
            order: 1.0,
            nominal: NominalSpec::Sampled { samples: 5, seed: 0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    /// Node spacing; ignored when `points_per_dim` is given.
    pub resolution: f64,
    pub points_per_dim: Option<Vec<usize>>,
    /// Working box; defaults to the bounding box of S.
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub interpolation: Interpolation,
    pub policy_rule: PolicyRule,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            resolution: 0.01,
            points_per_dim: None,
            lower: None,
            upper: None,
            interpolation: Interpolation::Multilinear,
            policy_rule: PolicyRule::Optimal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub trials: usize,
    /// Defaults to the built-in system's disturbance law.
    pub distribution: Option<DistributionSpec>,
    pub initial: InitialState,
    pub log_trajectories: bool,
    /// Atoms per axis when the true distribution is discretized for exact
    /// evaluation.
    pub evaluation_atoms: usize,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            trials: crate::harness::DESK_TRIALS,
            distribution: None,
            initial: InitialState::Uniform,
            log_trajectories: false,
            evaluation_atoms: 201,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertificateSection {
    /// Bundled certificate name; overrides the polynomial files.
    pub fixture: Option<String>,
    /// Generator stream for a fixture's empirical nominal.
    pub nominal_seed: u64,
    pub v_bar: Option<String>,
    pub control: Vec<String>,
    pub eta: f64,
    pub beta: f64,
    pub delta: f64,
    pub verify_lower: Option<Vec<f64>>,
    pub verify_upper: Option<Vec<f64>>,
    pub grid: Option<VerifyGrid>,
}

impl Default for CertificateSection {
    fn default() -> Self {
        Self {
            fixture: None,
            nominal_seed: crate::certificates::DEFAULT_NOMINAL_SEED,
            v_bar: None,
            control: Vec::new(),
            eta: 1.0,
            beta: 0.0,
            delta: 0.0,
            verify_lower: None,
            verify_upper: None,
            grid: None,
        }
    }
}

/// A certificate ready to check: candidate, model, ambiguity set and the
/// verification box and grid.
#[derive(Debug, Clone)]
pub struct ResolvedCertificate {
    pub name: String,
    pub candidate: CertificateCandidate,
    pub model: SystemModel,
    pub ambiguity: AmbiguitySet,
    pub truth: TrueDistribution,
    pub verify_box: BoxRegion,
    pub grid: VerifyGrid,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn system(&self) -> Result<BuiltinSystem> {
        self.model.system.parse()
    }

    pub fn build_model(&self) -> Result<SystemModel> {
        let model = builtin_system(self.system()?);
        match self.model.horizon {
            Some(h) => model.with_horizon(h),
            None => Ok(model),
        }
    }

    pub fn spec_kind(&self, model: &SystemModel) -> SpecKind {
        self.model.spec.unwrap_or(if model.target().is_some() {
            SpecKind::ReachAvoid
        } else {
            SpecKind::Safety
        })
    }

    pub fn truth(&self, model: &SystemModel) -> Result<TrueDistribution> {
        let spec = match &self.simulation.distribution {
            Some(s) => s.clone(),
            None => default_truth(self.system()?),
        };
        spec.build(model)
    }

    /// The ambiguity set, plus the drawn samples when the nominal is
    /// empirical.
    pub fn ambiguity(&self, model: &SystemModel) -> Result<(AmbiguitySet, Option<Vec<Vec<f64>>>)> {
        let a = &self.ambiguity;
        let (nominal, samples) = match &a.nominal {
            NominalSpec::Atoms { atoms, weights } => (finite(atoms, weights)?, None),
            NominalSpec::Sampled { samples, seed } => {
                if *samples == 0 {
                    return Err(Error::Config("nominal needs at least one sample".into()));
                }
                let truth = self.truth(model)?;
                let mut rng = child_rng(self.seed, *seed);
                let drawn = (0..*samples)
                    .map(|_| truth.sample(&mut rng))
                    .collect::<Result<Vec<_>>>()?;
                (empirical_nominal(&drawn, model.disturbance_box())?, Some(drawn))
            }
        };
        Ok((AmbiguitySet::new(nominal, a.radius, a.order)?, samples))
    }

    pub fn state_grid(&self, model: &SystemModel) -> Result<StateGrid> {
        let g = &self.grid;
        let working = match (&g.lower, &g.upper) {
            (Some(l), Some(u)) => BoxRegion::new(l.clone(), u.clone())?,
            (None, None) => model
                .safe()
                .bounding_box()
                .cloned()
                .ok_or_else(|| Error::Config("S is unbounded: set grid.lower and grid.upper".into()))?,
            _ => return Err(Error::Config("grid.lower and grid.upper must be given together".into())),
        };
        match &g.points_per_dim {
            Some(p) => StateGrid::new(working, p.clone()),
            None => StateGrid::with_resolution(working, g.resolution),
        }
    }

    pub fn synthesis_options(&self) -> SynthesisOptions {
        SynthesisOptions {
            interpolation: self.grid.interpolation,
            policy_rule: self.grid.policy_rule,
        }
    }

    pub fn certificate(&self) -> Result<ResolvedCertificate> {
        let c = &self.certificate;
        let verify = |default: Option<BoxRegion>| -> Result<BoxRegion> {
            match (&c.verify_lower, &c.verify_upper) {
                (Some(l), Some(u)) => BoxRegion::new(l.clone(), u.clone()),
                (None, None) => default.ok_or_else(|| {
                    Error::Config("set certificate.verify_lower and certificate.verify_upper".into())
                }),
                _ => Err(Error::Config("verify_lower and verify_upper must be given together".into())),
            }
        };
        if let Some(name) = &c.fixture {
            let fx = certificate_fixture(name)?;
            let model = fx.model();
            let ambiguity = fx.ambiguity(c.nominal_seed)?;
            let grid = c.grid.clone().unwrap_or_else(|| fx.default_grid());
            return Ok(ResolvedCertificate {
                name: name.clone(),
                candidate: fx.candidate.clone(),
                model,
                ambiguity,
                truth: fx.true_distribution.clone(),
                verify_box: verify(Some(fx.verify_box.clone()))?,
                grid,
            });
        }
        let path = c
            .v_bar
            .as_ref()
            .ok_or_else(|| Error::Config("certificate needs `fixture` or `v_bar`".into()))?;
        let v_bar = read_polynomial(Path::new(path))?;
        let control = c
            .control
            .iter()
            .map(|p| read_polynomial(Path::new(p)))
            .collect::<Result<Vec<_>>>()?;
        let candidate = CertificateCandidate::new(v_bar, control, c.eta, c.beta, c.delta)?;
        let model = self.build_model()?;
        let (ambiguity, _) = self.ambiguity(&model)?;
        let grid = c
            .grid
            .clone()
            .unwrap_or_else(|| VerifyGrid::for_dim(model.state_dim()));
        Ok(ResolvedCertificate {
            name: path.clone(),
            candidate,
            truth: self.truth(&model)?,
            verify_box: verify(model.safe().bounding_box().cloned())?,
            model,
            ambiguity,
            grid,
        })
    }
}

pub fn read_polynomial(path: &Path) -> Result<Polynomial> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    Polynomial::parse_terms(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let c = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        let m = c.build_model().unwrap();
        assert_eq!(c.spec_kind(&m), SpecKind::ReachAvoid);
        assert_eq!(c.state_grid(&m).unwrap().len(), 301);
    }

    #[test]
    fn round_trip() {
        let mut c = ExperimentConfig::default();
        c.seed = 9;
        c.ambiguity.nominal = NominalSpec::Atoms {
            atoms: vec![vec![-0.01], vec![0.02]],
            weights: vec![0.4, 0.6],
        };
        c.grid.policy_rule = PolicyRule::PreferFirst { alpha: 0.9 };
        let text = c.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn sections_parse() {
        let text = r#"
seed = 4

[model]
system = "safety_1d"
horizon = 10

[ambiguity]
radius = 0.1
order = 2.0
nominal = { kind = "sampled", samples = 5, seed = 1 }

[grid]
lower = [-2.0]
upper = [4.0]
resolution = 0.05
policy_rule = { rule = "prefer_first", alpha = 0.9 }

[solver]
disturbance_grid_initial = 33

[simulation]
trials = 100
distribution = { kind = "truncated_gaussian", mean = [0.0], std = [2.0] }
initial = { mode = "fixed", x0 = [0.0] }

[study]
repetitions = 3

[certificate]
fixture = "v_bar_2"
"#;
        let c = ExperimentConfig::from_toml_str(text).unwrap();
        let m = c.build_model().unwrap();
        assert_eq!(m.horizon(), 10);
        assert_eq!(c.spec_kind(&m), SpecKind::Safety);
        assert_eq!(c.state_grid(&m).unwrap().len(), 121);
        let (amb, samples) = c.ambiguity(&m).unwrap();
        assert_eq!(samples.unwrap().len(), 5);
        assert_eq!(amb.order(), 2.0);
        assert_eq!(c.solver.disturbance_grid_initial, 33);
        assert_eq!(c.study.repetitions, 3);
        let cert = c.certificate().unwrap();
        assert_eq!(cert.model.horizon(), 40);
        assert_eq!(cert.grid.state_per_dim, 401);
    }

    #[test]
    fn unknown_keys_and_systems_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("[model]\nsystme = \"x\"").is_err());
        let c = ExperimentConfig::from_toml_str("[model]\nsystem = \"nope\"").unwrap();
        assert!(matches!(c.build_model(), Err(Error::Config(_))));
    }

    #[test]
    fn unbounded_safe_set_needs_working_box() {
        let c = ExperimentConfig::from_toml_str("[model]\nsystem = \"safety_1d\"").unwrap();
        let m = c.build_model().unwrap();
        assert!(matches!(c.state_grid(&m), Err(Error::Config(_))));
    }

    #[test]
    fn sampled_nominal_is_seeded() {
        let c = ExperimentConfig::default();
        let m = c.build_model().unwrap();
        let (a, _) = c.ambiguity(&m).unwrap();
        let (b, _) = c.ambiguity(&m).unwrap();
        assert_eq!(a, b);
    }
}
