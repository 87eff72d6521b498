//! Monte Carlo rates against exact policy evaluation on the integer lattice
//! game, where every successor is a lattice node.

use drsynth::ambiguity::{AmbiguitySet, NominalDistribution, TrueDistribution};
use drsynth::dro_dual::SolverConfig;
use drsynth::harness::{monte_carlo, InitialState, PolicySource, SimulationConfig};
use drsynth::oracle::{game_grid, game_model, game_step, GAME_DISTURBANCES, GAME_SAFE, GAME_TARGET};
use drsynth::synthesis::{evaluate_fixed_distribution, value_iteration, PolicyTable, SpecKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn inside(r: (f64, f64), x: f64) -> bool {
    r.0 <= x && x <= r.1
}

/// Probability of satisfying the spec from `(t, x)` under the stored policy,
/// enumerating every disturbance path with the integer step.
fn enumerate(policy: &PolicyTable, weights: &[f64], kind: SpecKind, t: usize, x: f64) -> f64 {
    if kind == SpecKind::ReachAvoid && inside(GAME_TARGET, x) {
        return 1.0;
    }
    if !inside(GAME_SAFE, x) {
        return 0.0;
    }
    if t == policy.horizon() {
        return if kind == SpecKind::Safety { 1.0 } else { 0.0 };
    }
    let u = policy.lookup(t, &[x])[0];
    GAME_DISTURBANCES
        .iter()
        .zip(weights)
        .map(|(&w, &p)| p * enumerate(policy, weights, kind, t + 1, game_step(x, u, w)))
        .sum()
}

#[test]
fn monte_carlo_matches_exact_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let grid = game_grid();
    let cfg = SolverConfig::default().with_fixed_points(GAME_DISTURBANCES.iter().map(|&w| vec![w]).collect());
    for case in 0..10 {
        let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let dist = NominalDistribution::new(
            GAME_DISTURBANCES.iter().zip(&weights).map(|(&w, &p)| (vec![w], p)).collect(),
        )
        .unwrap();
        let horizon = rng.random_range(2..=4);
        let kind = if rng.random_bool(0.5) { SpecKind::ReachAvoid } else { SpecKind::Safety };
        let model = game_model(GAME_TARGET, horizon).unwrap();
        // a mildly robust policy, so it is not trivially optimal for the truth
        let amb = AmbiguitySet::new(dist.clone(), 0.3, 1.0).unwrap();
        let (_, policy) = value_iteration(&model, &amb, &grid, &cfg, kind).unwrap();
        let exact = evaluate_fixed_distribution(&model, &policy, &dist, &grid, kind).unwrap();

        let x0 = rng.random_range(0..=3) as f64;
        let oracle = enumerate(&policy, &weights, kind, 0, x0);
        let dp = exact.query_value(0, &[x0]).unwrap();
        assert!((dp - oracle).abs() < 1e-9, "case {case}: dp {dp} vs enumeration {oracle}");

        let mut sim = SimulationConfig::new(4000, 1000 + case, TrueDistribution::FiniteSupport(dist), kind);
        sim.initial = InitialState::Fixed { x0: vec![x0] };
        let rep = monte_carlo(&model, PolicySource::Table(&policy), &sim).unwrap();
        let slack = 3.0 * rep.half_width();
        assert!(
            (rep.rate - oracle).abs() <= slack.max(1e-12),
            "case {case} ({kind}, T={horizon}, x0={x0}): MC {} vs exact {oracle} (3 half-widths {slack})",
            rep.rate
        );
    }
}
