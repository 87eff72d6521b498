//! Finite-support nominal distributions, Wasserstein balls around them, and
//! the "true" disturbance distributions used to generate data and to
//! stress-test policies.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::model::{tensor_product, BoxRegion};

const MASS_TOLERANCE: f64 = 1e-12;

/// Default cap on truncated-Gaussian rejection attempts.
pub const DEFAULT_REJECTION_CAP: u64 = 1_000_000;

/// `Σ p_i δ_{w_i}` with distinct support points.
#[derive(Debug, Clone, PartialEq)]
pub struct NominalDistribution {
    atoms: Vec<(Vec<f64>, f64)>,
}

impl NominalDistribution {
    pub fn new(atoms: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        let dim = atoms
            .first()
            .ok_or_else(|| Error::InvalidDistribution("no atoms".into()))?
            .0
            .len();
        if dim == 0 {
            return Err(Error::InvalidDistribution("atoms must have dimension >= 1".into()));
        }
        let mut total = 0.0;
        for (i, (w, p)) in atoms.iter().enumerate() {
            check_dim(dim, w.len(), "atom support point")?;
            if !(*p > 0.0 && *p <= 1.0) {
                return Err(Error::InvalidDistribution(format!(
                    "atom {i} has probability {p} outside (0, 1]"
                )));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidDistribution(format!("atom {i} is not finite")));
            }
            if atoms[..i].iter().any(|(v, _)| v == w) {
                return Err(Error::InvalidDistribution(format!("atom {i} repeats a support point")));
            }
            total += p;
        }
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { atoms })
    }

    pub fn point_mass(w: Vec<f64>) -> Self {
        Self::new(vec![(w, 1.0)]).expect("point mass is valid")
    }

    /// Checks that every support point lies in `support`.
    pub fn within(self, support: &BoxRegion) -> Result<Self> {
        for (i, (w, _)) in self.atoms.iter().enumerate() {
            check_dim(support.dim(), w.len(), "atom vs disturbance box")?;
            if !support.contains_unchecked(w) {
                return Err(Error::InvalidDistribution(format!(
                    "atom {i} at {w:?} lies outside the disturbance box"
                )));
            }
        }
        Ok(self)
    }

    pub fn atoms(&self) -> &[(Vec<f64>, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].0.len()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (w, p) in &self.atoms {
            for (mi, wi) in m.iter_mut().zip(w) {
                *mi += p * wi;
            }
        }
        m
    }
}

/// Empirical distribution of `samples`: distinct values become atoms in
/// first-occurrence order, weighted by their frequency.
pub fn empirical_nominal(samples: &[Vec<f64>], support: &BoxRegion) -> Result<NominalDistribution> {
    if samples.is_empty() {
        return Err(Error::InvalidDistribution("empty sample list".into()));
    }
    let mut atoms: Vec<(Vec<f64>, usize)> = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        check_dim(support.dim(), s.len(), "sample")?;
        if !support.contains_unchecked(s) {
            return Err(Error::InvalidDistribution(format!(
                "sample {i} at {s:?} lies outside the disturbance box"
            )));
        }
        match atoms.iter_mut().find(|(w, _)| w == s) {
            Some((_, count)) => *count += 1,
            None => atoms.push((s.clone(), 1)),
        }
    }
    let n = samples.len() as f64;
    NominalDistribution::new(
        atoms
            .into_iter()
            .map(|(w, c)| (w, c as f64 / n))
            .collect(),
    )
}

/// Ground metric between disturbances. Only the Euclidean metric is
/// supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GroundMetric {
    #[default]
    Euclidean,
}

impl GroundMetric {
    #[inline]
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            GroundMetric::Euclidean => {
                if a.len() == 1 {
                    (a[0] - b[0]).abs()
                } else {
                    a.iter()
                        .zip(b)
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>()
                        .sqrt()
                }
            }
        }
    }
}

/// Wasserstein ball `{μ : W_p(μ, nominal) <= radius}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguitySet {
    nominal: NominalDistribution,
    radius: f64,
    order: f64,
    metric: GroundMetric,
}

impl AmbiguitySet {
    pub fn new(nominal: NominalDistribution, radius: f64, order: f64) -> Result<Self> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::InvalidDistribution(format!("radius {radius} must be >= 0")));
        }
        if !(order >= 1.0 && order.is_finite()) {
            return Err(Error::InvalidDistribution(format!("order {order} must be >= 1")));
        }
        Ok(Self {
            nominal,
            radius,
            order,
            metric: GroundMetric::Euclidean,
        })
    }

    pub fn nominal(&self) -> &NominalDistribution {
        &self.nominal
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn metric(&self) -> GroundMetric {
        self.metric
    }

    /// `θ^p`, the transport budget.
    pub fn budget(&self) -> f64 {
        self.radius.powf(self.order)
    }

    /// `d(a, b)^p`.
    #[inline]
    pub fn cost(&self, a: &[f64], b: &[f64]) -> f64 {
        let d = self.metric.distance(a, b);
        if self.order == 1.0 {
            d
        } else if self.order == 2.0 {
            d * d
        } else {
            d.powf(self.order)
        }
    }

    pub fn with_radius(&self, radius: f64) -> Result<Self> {
        Self::new(self.nominal.clone(), radius, self.order)
    }

    /// True when `d^p` is a polynomial in `w` (Euclidean metric, even
    /// integer order).
    pub fn has_polynomial_cost(&self) -> bool {
        self.order.fract() == 0.0 && (self.order as i64) % 2 == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrueDistribution {
    UniformBox(BoxRegion),
    TruncatedGaussian {
        mean: Vec<f64>,
        std: Vec<f64>,
        support: BoxRegion,
    },
    FiniteSupport(NominalDistribution),
}

impl TrueDistribution {
    pub fn truncated_gaussian(mean: Vec<f64>, std: Vec<f64>, support: BoxRegion) -> Result<Self> {
        check_dim(support.dim(), mean.len(), "truncated Gaussian mean")?;
        check_dim(support.dim(), std.len(), "truncated Gaussian std")?;
        if std.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidDistribution("std must be positive".into()));
        }
        if support
            .lower()
            .iter()
            .zip(support.upper())
            .any(|(l, u)| l >= u)
        {
            return Err(Error::InvalidDistribution(
                "truncation box must have positive volume".into(),
            ));
        }
        Ok(TrueDistribution::TruncatedGaussian { mean, std, support })
    }

    pub fn dim(&self) -> usize {
        match self {
            TrueDistribution::UniformBox(b) => b.dim(),
            TrueDistribution::TruncatedGaussian { support, .. } => support.dim(),
            TrueDistribution::FiniteSupport(n) => n.dim(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        self.sample_capped(rng, DEFAULT_REJECTION_CAP)
    }

    pub fn sample_capped<R: Rng + ?Sized>(&self, rng: &mut R, cap: u64) -> Result<Vec<f64>> {
        match self {
            TrueDistribution::UniformBox(b) => Ok(b
                .lower()
                .iter()
                .zip(b.upper())
                .map(|(&l, &u)| if l == u { l } else { rng.random_range(l..=u) })
                .collect()),
            TrueDistribution::TruncatedGaussian { mean, std, support } => {
                for _ in 0..cap {
                    let draw: Vec<f64> = mean
                        .iter()
                        .zip(std)
                        .map(|(m, s)| {
                            let z: f64 = StandardNormal.sample(rng);
                            m + s * z
                        })
                        .collect();
                    if support.contains_unchecked(&draw) {
                        return Ok(draw);
                    }
                }
                Err(Error::DegenerateTruncation { attempts: cap })
            }
            TrueDistribution::FiniteSupport(n) => {
                let r: f64 = rng.random();
                let mut acc = 0.0;
                for (w, p) in n.atoms() {
                    acc += p;
                    if r < acc {
                        return Ok(w.clone());
                    }
                }
                Ok(n.atoms().last().expect("non-empty").0.clone())
            }
        }
    }

    /// Finite-support approximation on a tensor grid of cell midpoints,
    /// `per_dim` cells per axis, each weighted by the cell's probability
    /// mass (density at the midpoint times cell volume, renormalized).
    pub fn discretize(&self, per_dim: usize) -> Result<NominalDistribution> {
        let per_dim = per_dim.max(1);
        match self {
            TrueDistribution::FiniteSupport(n) => Ok(n.clone()),
            TrueDistribution::UniformBox(b) => {
                let pts = midpoint_grid(b, per_dim);
                let p = 1.0 / pts.len() as f64;
                NominalDistribution::new(pts.into_iter().map(|w| (w, p)).collect())
            }
            TrueDistribution::TruncatedGaussian { mean, std, support } => {
                let pts = midpoint_grid(support, per_dim);
                let weights: Vec<f64> = pts
                    .iter()
                    .map(|w| {
                        let q: f64 = w
                            .iter()
                            .zip(mean.iter().zip(std))
                            .map(|(x, (m, s))| ((x - m) / s).powi(2))
                            .sum();
                        (-0.5 * q).exp()
                    })
                    .collect();
                let total: f64 = weights.iter().sum();
                NominalDistribution::new(
                    pts.into_iter()
                        .zip(weights)
                        .filter(|(_, wt)| *wt > 0.0)
                        .map(|(w, wt)| (w, wt / total))
                        .collect(),
                )
            }
        }
    }
}

fn midpoint_grid(b: &BoxRegion, per_dim: usize) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = b
        .lower()
        .iter()
        .zip(b.upper())
        .map(|(&l, &u)| {
            if l == u {
                vec![l]
            } else {
                let h = (u - l) / per_dim as f64;
                (0..per_dim).map(|i| l + h * (i as f64 + 0.5)).collect()
            }
        })
        .collect();
    tensor_product(&axes)
}

/// Independent generator for stream `index` under `master_seed`.
///
/// Streams are ChaCha8 keystreams selected by the stream id, so trial `i`
/// draws the same numbers no matter which worker runs it or in what order.
pub fn child_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Exact order-`p` Wasserstein distance between two 1-D finite
/// distributions via the quantile coupling.
pub fn wasserstein_1d(mu: &NominalDistribution, nu: &NominalDistribution, p: f64) -> Result<f64> {
    check_dim(1, mu.dim(), "wasserstein_1d first argument")?;
    check_dim(1, nu.dim(), "wasserstein_1d second argument")?;
    if !(p >= 1.0) {
        return Err(Error::Argument(format!("order {p} must be >= 1")));
    }
    let sorted = |d: &NominalDistribution| {
        let mut v: Vec<(f64, f64)> = d.atoms().iter().map(|(w, q)| (w[0], *q)).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    };
    let a = sorted(mu);
    let b = sorted(nu);
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut cost = 0.0;
    loop {
        let m = ra.min(rb);
        cost += m * (a[i].0 - b[j].0).abs().powf(p);
        ra -= m;
        rb -= m;
        let a_done = ra <= 1e-15;
        let b_done = rb <= 1e-15;
        if a_done {
            i += 1;
            if i == a.len() {
                break;
            }
            ra = a[i].1;
        }
        if b_done {
            j += 1;
            if j == b.len() {
                break;
            }
            rb = b[j].1;
        }
    }
    Ok(cost.powf(1.0 / p))
}
