//! Discrete-time stochastic control systems `x' = f(x, u, w)` with
//! polynomial dynamics, plus the regions and input sets they are posed over.

use std::fmt;
use std::str::FromStr;

use smallvec::SmallVec;

use crate::error::{check_dim, Error, Result};
use crate::polynomial::Polynomial;

/// Closed axis-aligned box `{x : lower <= x <= upper}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxRegion {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len(), "box bounds")?;
        if lower.is_empty() {
            return Err(Error::InvalidModel("box must have at least one dimension".into()));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite()) || l > u {
                return Err(Error::InvalidModel(format!(
                    "box dimension {i}: need finite lower <= upper, got [{l}, {u}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo], vec![hi])
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    #[inline]
    pub fn contains_unchecked(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    pub fn contains_box(&self, other: &BoxRegion) -> bool {
        self.dim() == other.dim()
            && self.contains_unchecked(&other.lower)
            && self.contains_unchecked(&other.upper)
    }

    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| v.clamp(*l, *u))
            .collect()
    }

    /// Largest Euclidean distance between two points of the box.
    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) * (u - l))
            .sum::<f64>()
            .sqrt()
    }

    /// Tensor grid with `per_dim` points per axis, endpoints included.
    /// A degenerate axis contributes a single point.
    pub fn grid_points(&self, per_dim: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| axis_points(l, u, per_dim))
            .collect();
        tensor_product(&axes)
    }
}

/// `n` evenly spaced points on `[lo, hi]`, computed as a convex combination
/// so that both endpoints (and any integer-step nodes) are exact.
pub(crate) fn axis_points(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if lo == hi {
        return vec![lo];
    }
    if n <= 1 {
        return vec![0.5 * (lo + hi)];
    }
    let d = (n - 1) as f64;
    (0..n)
        .map(|i| (lo * (d - i as f64) + hi * i as f64) / d)
        .collect()
}

pub(crate) fn tensor_product(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::with_capacity(axes.len())];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for &v in axis {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// State-space region. Both variants are closed sets.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Box(BoxRegion),
    /// `{x : s(x) >= 0}`. `bounds`, when known, is a box containing the set;
    /// it is used for probing and sampling only.
    SuperLevel {
        poly: Polynomial,
        bounds: Option<BoxRegion>,
    },
}

impl Region {
    pub fn arity(&self) -> usize {
        match self {
            Region::Box(b) => b.dim(),
            Region::SuperLevel { poly, .. } => poly.arity(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        check_dim(self.arity(), x.len(), "region membership")?;
        Ok(self.contains_unchecked(x))
    }

    #[inline]
    pub fn contains_unchecked(&self, x: &[f64]) -> bool {
        match self {
            Region::Box(b) => b.contains_unchecked(x),
            Region::SuperLevel { poly, .. } => poly.eval_unchecked(x) >= 0.0,
        }
    }

    pub fn bounding_box(&self) -> Option<&BoxRegion> {
        match self {
            Region::Box(b) => Some(b),
            Region::SuperLevel { bounds, .. } => bounds.as_ref(),
        }
    }

    /// Closed ball `{x : r^2 - |x - c|^2 >= 0}` as a super-level set.
    pub fn ball(center: &[f64], radius: f64) -> Result<Self> {
        let n = center.len();
        let mut poly = Polynomial::constant(n, radius * radius);
        for (i, &c) in center.iter().enumerate() {
            // -(x_i - c)^2 = -x_i^2 + 2 c x_i - c^2
            let mut sq = vec![0; n];
            sq[i] = 2;
            let mut lin = vec![0; n];
            lin[i] = 1;
            let piece = Polynomial::new(
                n,
                [(sq, -1.0), (lin, 2.0 * c), (vec![0; n], -c * c)],
            )?;
            poly = poly.add(&piece)?;
        }
        let lower = center.iter().map(|c| c - radius).collect();
        let upper = center.iter().map(|c| c + radius).collect();
        Ok(Region::SuperLevel {
            poly,
            bounds: Some(BoxRegion::new(lower, upper)?),
        })
    }
}

/// Admissible inputs.
#[derive(Debug, Clone, PartialEq)]
pub enum InputSet {
    /// Explicit list; enumeration order is list order.
    Finite(Vec<Vec<f64>>),
    /// `{u : A u >= b}` intersected with `bounds`; `bounds` also defines the
    /// enumeration grid.
    BoxPolytope {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        bounds: BoxRegion,
    },
}

impl InputSet {
    pub fn finite(inputs: Vec<Vec<f64>>) -> Result<Self> {
        let m = inputs
            .first()
            .ok_or_else(|| Error::InvalidModel("finite input set is empty".into()))?
            .len();
        if m == 0 {
            return Err(Error::InvalidModel("inputs must have dimension >= 1".into()));
        }
        for u in &inputs {
            check_dim(m, u.len(), "finite input vector")?;
        }
        Ok(InputSet::Finite(inputs))
    }

    pub fn polytope(a: Vec<Vec<f64>>, b: Vec<f64>, bounds: BoxRegion) -> Result<Self> {
        check_dim(a.len(), b.len(), "polytope rows")?;
        for row in &a {
            check_dim(bounds.dim(), row.len(), "polytope row width")?;
        }
        let set = InputSet::BoxPolytope { a, b, bounds };
        // non-emptiness witnessed on a coarse probe grid
        if set.enumerate(9).map(|v| v.is_empty()).unwrap_or(true) {
            return Err(Error::InvalidModel("input polytope is empty".into()));
        }
        Ok(set)
    }

    /// The interval `[lo, hi]` written as `u >= lo, -u >= -hi`.
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::polytope(vec![vec![1.0], vec![-1.0]], vec![lo, -hi], BoxRegion::interval(lo, hi)?)
    }

    pub fn dim(&self) -> usize {
        match self {
            InputSet::Finite(v) => v[0].len(),
            InputSet::BoxPolytope { bounds, .. } => bounds.dim(),
        }
    }

    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        match self {
            InputSet::Finite(v) => v.iter().any(|w| w.as_slice() == u),
            InputSet::BoxPolytope { a, b, .. } => polytope_holds(a, b, u, tol),
        }
    }

    /// Candidate inputs in deterministic order. Finite sets are returned as
    /// listed; polytopes are gridded with `per_dim` points per axis.
    pub fn enumerate(&self, per_dim: usize) -> Result<Vec<Vec<f64>>> {
        match self {
            InputSet::Finite(v) => Ok(v.clone()),
            InputSet::BoxPolytope { a, b, bounds } => {
                let pts: Vec<Vec<f64>> = bounds
                    .grid_points(per_dim.max(1))
                    .into_iter()
                    .filter(|u| polytope_holds(a, b, u, 1e-12))
                    .collect();
                if pts.is_empty() {
                    Err(Error::InfeasibleInput)
                } else {
                    Ok(pts)
                }
            }
        }
    }

    /// Maps an arbitrary vector into the set: nearest member for finite
    /// sets, box clamping for polytopes (falling back to the nearest point of
    /// a 101-point grid when the clamped point violates `A u >= b`).
    /// Non-finite components are treated as the box lower bound.
    pub fn project(&self, u: &[f64]) -> Vec<f64> {
        match self {
            InputSet::Finite(v) => v
                .iter()
                .min_by(|p, q| sq_dist(p, u).total_cmp(&sq_dist(q, u)))
                .cloned()
                .expect("finite set is non-empty"),
            InputSet::BoxPolytope { a, b, bounds } => {
                let sanitized: Vec<f64> = u
                    .iter()
                    .zip(bounds.lower())
                    .map(|(v, l)| if v.is_nan() { *l } else { *v })
                    .collect();
                let clamped = bounds.clamp(&sanitized);
                if polytope_holds(a, b, &clamped, 1e-12) {
                    return clamped;
                }
                self.enumerate(101)
                    .unwrap_or_default()
                    .into_iter()
                    .min_by(|p, q| sq_dist(p, &clamped).total_cmp(&sq_dist(q, &clamped)))
                    .unwrap_or(clamped)
            }
        }
    }

    /// Worst violation of the defining constraints (positive = violated).
    pub fn violation(&self, u: &[f64]) -> f64 {
        match self {
            InputSet::Finite(v) => {
                if v.iter().any(|w| w.as_slice() == u) {
                    0.0
                } else {
                    v.iter()
                        .map(|w| sq_dist(w, u).sqrt())
                        .fold(f64::INFINITY, f64::min)
                }
            }
            InputSet::BoxPolytope { a, b, .. } => a
                .iter()
                .zip(b)
                .map(|(row, bk)| bk - dot(row, u))
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn polytope_holds(a: &[Vec<f64>], b: &[f64], u: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(row, bk)| dot(row, u) >= bk - tol)
}

pub(crate) type Scratch = SmallVec<[f64; 12]>;

#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub name: String,
    state_dim: usize,
    input_set: InputSet,
    disturbance_box: BoxRegion,
    /// One polynomial per state component over `(x, u, w)`.
    dynamics: Vec<Polynomial>,
    horizon: usize,
    init: Region,
    safe: Region,
    target: Option<Region>,
}

impl SystemModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        state_dim: usize,
        input_set: InputSet,
        disturbance_box: BoxRegion,
        dynamics: Vec<Polynomial>,
        horizon: usize,
        init: Region,
        safe: Region,
        target: Option<Region>,
    ) -> Result<Self> {
        check_dim(state_dim, dynamics.len(), "dynamics components")?;
        let arity = state_dim + input_set.dim() + disturbance_box.dim();
        for p in &dynamics {
            check_dim(arity, p.arity(), "dynamics polynomial arity (n + m + l)")?;
        }
        if horizon == 0 {
            return Err(Error::InvalidModel("horizon must be >= 1".into()));
        }
        check_dim(state_dim, init.arity(), "initial region")?;
        check_dim(state_dim, safe.arity(), "safe region")?;
        if let Some(g) = &target {
            check_dim(state_dim, g.arity(), "target region")?;
            if !probe_subset(g, &safe, 21) {
                return Err(Error::InvalidModel("target region is not inside the safe region".into()));
            }
        }
        Ok(Self {
            name: name.into(),
            state_dim,
            input_set,
            disturbance_box,
            dynamics,
            horizon,
            init,
            safe,
            target,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_set.dim()
    }

    pub fn disturbance_dim(&self) -> usize {
        self.disturbance_box.dim()
    }

    pub fn input_set(&self) -> &InputSet {
        &self.input_set
    }

    pub fn disturbance_box(&self) -> &BoxRegion {
        &self.disturbance_box
    }

    pub fn dynamics(&self) -> &[Polynomial] {
        &self.dynamics
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn init(&self) -> &Region {
        &self.init
    }

    pub fn safe(&self) -> &Region {
        &self.safe
    }

    pub fn target(&self) -> Option<&Region> {
        self.target.as_ref()
    }

    /// Same system with a different horizon.
    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidModel("horizon must be >= 1".into()));
        }
        let mut m = self.clone();
        m.horizon = horizon;
        Ok(m)
    }

    pub fn with_target(&self, target: Option<Region>) -> Result<Self> {
        Self::new(
            self.name.clone(),
            self.state_dim,
            self.input_set.clone(),
            self.disturbance_box.clone(),
            self.dynamics.clone(),
            self.horizon,
            self.init.clone(),
            self.safe.clone(),
            target,
        )
    }

    pub fn eval_dynamics(&self, x: &[f64], u: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.state_dim, x.len(), "state")?;
        check_dim(self.input_dim(), u.len(), "input")?;
        check_dim(self.disturbance_dim(), w.len(), "disturbance")?;
        let mut out = vec![0.0; self.state_dim];
        self.step_into(x, u, w, &mut out);
        Ok(out)
    }

    /// Unchecked successor evaluation into `out`.
    #[inline]
    pub fn step_into(&self, x: &[f64], u: &[f64], w: &[f64], out: &mut [f64]) {
        let mut z: Scratch = SmallVec::with_capacity(x.len() + u.len() + w.len());
        z.extend_from_slice(x);
        z.extend_from_slice(u);
        z.extend_from_slice(w);
        for (o, p) in out.iter_mut().zip(&self.dynamics) {
            *o = p.eval_unchecked(&z);
        }
    }
}

/// Checks `a ⊆ b` on a probe grid over `a`'s bounding box. Regions without
/// a bounding box cannot be probed and are accepted.
pub fn probe_subset(a: &Region, b: &Region, per_dim: usize) -> bool {
    let Some(bb) = a.bounding_box() else {
        return true;
    };
    bb.grid_points(per_dim)
        .iter()
        .filter(|x| a.contains_unchecked(x))
        .all(|x| b.contains_unchecked(x))
}

/// The case-study systems shipped with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BuiltinSystem {
    RoomTemperature,
    Safety1d,
    Safety4d,
}

impl BuiltinSystem {
    pub const ALL: [BuiltinSystem; 3] = [
        BuiltinSystem::RoomTemperature,
        BuiltinSystem::Safety1d,
        BuiltinSystem::Safety4d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinSystem::RoomTemperature => "room_temperature",
            BuiltinSystem::Safety1d => "safety_1d",
            BuiltinSystem::Safety4d => "safety_4d",
        }
    }
}

impl fmt::Display for BuiltinSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BuiltinSystem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown built-in system `{s}`")))
    }
}

pub fn builtin_system(which: BuiltinSystem) -> SystemModel {
    match which {
        BuiltinSystem::RoomTemperature => room_temperature(),
        BuiltinSystem::Safety1d => safety_1d(),
        BuiltinSystem::Safety4d => safety_4d(),
    }
    .expect("built-in systems are well-formed")
}

fn room_temperature() -> Result<SystemModel> {
    let (t_e, t_h, a_e, a_h, tau) = (15.0, 50.0, 8e-3, 3.6e-3, 5.0);
    // x' = x + tau (a_e (T_e - x) + a_h (T_h - x) u) + w over (x, u, w)
    let f = Polynomial::new(
        3,
        [
            (vec![1, 0, 0], 1.0 - tau * a_e),
            (vec![0, 0, 0], tau * a_e * t_e),
            (vec![0, 1, 0], tau * a_h * t_h),
            (vec![1, 1, 0], -tau * a_h),
            (vec![0, 0, 1], 1.0),
        ],
    )?;
    SystemModel::new(
        BuiltinSystem::RoomTemperature.name(),
        1,
        InputSet::finite(vec![vec![0.0], vec![1.0]])?,
        BoxRegion::interval(-0.12, 0.12)?,
        vec![f],
        12,
        Region::Box(BoxRegion::interval(23.6, 23.8)?),
        Region::Box(BoxRegion::interval(23.0, 26.0)?),
        Some(Region::Box(BoxRegion::interval(24.4, 24.6)?)),
    )
}

fn safety_1d() -> Result<SystemModel> {
    // x' = x + 0.1 x^2 + u + w
    let f = Polynomial::new(
        3,
        [
            (vec![1, 0, 0], 1.0),
            (vec![2, 0, 0], 0.1),
            (vec![0, 1, 0], 1.0),
            (vec![0, 0, 1], 1.0),
        ],
    )?;
    SystemModel::new(
        BuiltinSystem::Safety1d.name(),
        1,
        InputSet::interval(0.0, 2.0)?,
        BoxRegion::interval(-4.0, 1.0)?,
        vec![f],
        40,
        Region::Box(BoxRegion::interval(-0.5, 0.0)?),
        Region::SuperLevel {
            poly: Polynomial::new(1, [(vec![1], 1.0), (vec![0], 2.0)])?,
            bounds: None,
        },
        None,
    )
}

fn safety_4d() -> Result<SystemModel> {
    let tau = 0.01;
    // variables: x1 x2 x3 x4 u w
    let e = |p: [u32; 6]| p.to_vec();
    let f1 = Polynomial::new(
        6,
        [
            (e([1, 0, 0, 0, 0, 0]), 1.0 - tau),
            (e([0, 3, 0, 0, 0, 0]), tau),
            (e([0, 0, 1, 1, 0, 0]), -3.0 * tau),
            (e([0, 0, 0, 0, 1, 0]), tau),
            (e([0, 0, 0, 0, 0, 1]), tau),
        ],
    )?;
    let f2 = Polynomial::new(
        6,
        [
            (e([0, 1, 0, 0, 0, 0]), 1.0),
            (e([1, 0, 0, 0, 0, 0]), -tau),
            (e([0, 3, 0, 0, 0, 0]), -tau),
        ],
    )?;
    let f3 = Polynomial::new(
        6,
        [
            (e([0, 0, 1, 0, 0, 0]), 1.0 - tau),
            (e([1, 0, 0, 1, 0, 0]), tau),
        ],
    )?;
    let f4 = Polynomial::new(
        6,
        [
            (e([0, 0, 0, 1, 0, 0]), 1.0),
            (e([1, 0, 1, 0, 0, 0]), tau),
            (e([0, 0, 0, 3, 0, 0]), -tau),
        ],
    )?;
    let origin = [0.0; 4];
    SystemModel::new(
        BuiltinSystem::Safety4d.name(),
        4,
        InputSet::interval(-1.0, 1.0)?,
        BoxRegion::interval(-0.8, 0.8)?,
        vec![f1, f2, f3, f4],
        100,
        Region::ball(&origin, 0.3)?,
        Region::ball(&origin, 1.0)?,
        None,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn room_temperature_steps() {
        let m = builtin_system(BuiltinSystem::RoomTemperature);
        let off = m.eval_dynamics(&[23.7], &[0.0], &[0.0]).unwrap()[0];
        let on = m.eval_dynamics(&[23.7], &[1.0], &[0.0]).unwrap()[0];
        assert!((off - 23.352).abs() < 1e-12, "{off}");
        assert!((on - 23.8254).abs() < 1e-12, "{on}");
    }

    #[test]
    fn identity_dynamics_hold_still() {
        let f = Polynomial::new(
            3,
            [(vec![1, 0, 0], 1.0), (vec![0, 1, 0], 1.0), (vec![0, 0, 1], 1.0)],
        )
        .unwrap();
        let m = SystemModel::new(
            "id",
            1,
            InputSet::interval(-1.0, 1.0).unwrap(),
            BoxRegion::interval(-1.0, 1.0).unwrap(),
            vec![f],
            1,
            Region::Box(BoxRegion::interval(0.0, 1.0).unwrap()),
            Region::Box(BoxRegion::interval(-5.0, 5.0).unwrap()),
            None,
        )
        .unwrap();
        assert_eq!(m.eval_dynamics(&[0.37], &[0.0], &[0.0]).unwrap(), vec![0.37]);
        assert!(m.eval_dynamics(&[0.0, 1.0], &[0.0], &[0.0]).is_err());
    }

    #[test]
    fn deterministic_evaluation() {
        let m = builtin_system(BuiltinSystem::Safety4d);
        let x = [0.1, -0.2, 0.05, 0.3];
        let a = m.eval_dynamics(&x, &[0.4], &[-0.3]).unwrap();
        let b = m.eval_dynamics(&x, &[0.4], &[-0.3]).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn membership_edges() {
        let s = Region::Box(BoxRegion::interval(23.0, 26.0).unwrap());
        assert!(s.contains(&[26.0]).unwrap());
        assert!(!s.contains(&[26.001]).unwrap());
        assert!(s.contains(&[1.0, 2.0]).is_err());
        let ball = builtin_system(BuiltinSystem::Safety4d);
        assert!(ball.safe().contains(&[1.0, 0.0, 0.0, 0.0]).unwrap());
        assert!(!ball.safe().contains(&[1.0, 0.01, 0.0, 0.0]).unwrap());
    }

    #[test]
    fn builtin_parameters() {
        let rt = builtin_system(BuiltinSystem::RoomTemperature);
        assert_eq!(
            rt.target(),
            Some(&Region::Box(BoxRegion::interval(24.4, 24.6).unwrap()))
        );
        assert_eq!(rt.horizon(), 12);
        let s1 = builtin_system(BuiltinSystem::Safety1d);
        assert_eq!(s1.disturbance_box(), &BoxRegion::interval(-4.0, 1.0).unwrap());
        assert!(s1.safe().contains(&[-2.0]).unwrap());
        assert!(!s1.safe().contains(&[-2.0001]).unwrap());
        let s4 = builtin_system(BuiltinSystem::Safety4d);
        let Region::SuperLevel { poly, .. } = s4.init() else {
            panic!("4-D initial set is a ball");
        };
        // radius^2 = 0.09 is the constant term
        assert!((poly.eval(&[0.0; 4]).unwrap() - 0.09).abs() < 1e-15);
        assert_eq!(s4.horizon(), 100);
    }

    #[test]
    fn builtins_nest_regions() {
        for b in BuiltinSystem::ALL {
            let m = builtin_system(b);
            assert!(probe_subset(m.init(), m.safe(), 41), "{b}: X0 ⊆ S");
            if let Some(g) = m.target() {
                assert!(probe_subset(g, m.safe(), 41), "{b}: G ⊆ S");
            }
        }
    }

    #[test]
    fn target_outside_safe_is_rejected() {
        let rt = builtin_system(BuiltinSystem::RoomTemperature);
        let bad = Region::Box(BoxRegion::interval(25.5, 26.5).unwrap());
        assert!(rt.with_target(Some(bad)).is_err());
    }

    #[test]
    fn input_set_enumeration_and_projection() {
        let u = InputSet::interval(0.0, 2.0).unwrap();
        let pts = u.enumerate(5).unwrap();
        assert_eq!(pts, vec![vec![0.0], vec![0.5], vec![1.0], vec![1.5], vec![2.0]]);
        assert_eq!(u.project(&[3.0]), vec![2.0]);
        assert_eq!(u.project(&[f64::NAN]), vec![0.0]);
        assert!(u.contains(&[1.3], 1e-9));
        let fin = InputSet::finite(vec![vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(fin.project(&[0.7]), vec![1.0]);
        assert!(InputSet::finite(vec![]).is_err());
    }

    #[test]
    fn axis_points_hit_integer_nodes_exactly() {
        let pts = axis_points(23.0, 26.0, 301);
        assert_eq!(pts[140], 24.4);
        assert_eq!(pts[160], 24.6);
        assert_eq!(pts[300], 26.0);
    }
}
