use pacconf::rng::domain;
use pacconf::safeplan::{
    collect_calibration_data, evaluate_shield, nominal_rollouts, safety_bound, select_safety_threshold, GridConfig,
    Gridworld, SafetyThreshold, UnsafetyOracle,
};
use proptest::prelude::*;

fn world(text: &str) -> Gridworld {
    Gridworld::new(GridConfig::parse(text).unwrap()).unwrap()
}

const FIELD: &str = "horizon = 30\nepsilon = 0.3\nsigma = 0.0\nseed = 5\nmap\n.S.......\n.........\n..#.#.#..\n.........\n..#.#.#..\n........G\n";

#[test]
fn presets_parse_and_differ_in_noise() {
    let a = GridConfig::trap_rows();
    let b = GridConfig::heavy_noise();
    assert_eq!((a.width, a.height), (12, 32));
    assert_eq!(a.obstacles, b.obstacles);
    assert!(b.sigma > a.sigma);
    assert_eq!(GridConfig::preset("trap-rows").unwrap(), a);
    assert!(GridConfig::preset("nope").is_err());
    assert_eq!(GridConfig::parse(&a.to_text()).unwrap(), a);
}

#[test]
fn all_safe_pool_selects_one() {
    let flags = vec![false; 1000];
    let s = select_safety_threshold(&flags, &[], 0.01, 0.05).unwrap();
    assert_eq!(s.threshold, SafetyThreshold::At(1.0));
    // each interval at delta / 2
    assert!((s.unsafe_rate.hi() - (1.0 - 0.0125f64.powf(1e-3))).abs() < 1e-12);
    assert!(s.unsafe_rate.hi() <= 0.01);
}

#[test]
fn constructed_pools_match_exhaustive_scan() {
    let flags: Vec<bool> = (0..1000).map(|i| i < 100).collect();
    let scores: Vec<f64> = (0..200).map(|i| if i < 100 { 0.3 } else { 0.7 } + f64::from(i % 7) * 0.01).collect();
    for xi in [0.0, 0.02, 0.05, 0.08, 0.12] {
        let s = select_safety_threshold(&flags, &scores, xi, 0.1).unwrap();
        let mut candidates: Vec<f64> = scores.iter().copied().chain([0.0, 1.0]).collect();
        candidates.sort_by(|a, b| b.total_cmp(a));
        candidates.dedup();
        let brute = candidates
            .into_iter()
            .map(SafetyThreshold::At)
            .find(|&g| safety_bound(&flags, &scores, g, 0.1).unwrap() <= xi)
            .unwrap_or(SafetyThreshold::AlwaysBackup);
        assert_eq!(s.threshold, brute, "xi {xi}");
    }
}

#[test]
fn perfect_scores_make_the_shield_safe() {
    let w = world(FIELD);
    assert!(nominal_rollouts(&w, 2000, 1, domain::SAFETY_POOL).iter().any(|r| !r.safe));
    for gamma in [0.11, 0.5, 0.9] {
        let e = evaluate_shield(&w, SafetyThreshold::At(gamma), 2000, 2).unwrap();
        assert_eq!(e.safety_rate, 1.0, "gamma {gamma}");
    }
}

#[test]
fn disabled_shield_matches_nominal_rate() {
    let w = world(FIELD);
    let e = evaluate_shield(&w, SafetyThreshold::At(1.5), 20_000, 3).unwrap();
    let oracle = UnsafetyOracle::estimate(&w, 20_000, 4).unwrap();
    let se = (oracle.nominal_unsafe_rate() * (1.0 - oracle.nominal_unsafe_rate()) / 20_000.0).sqrt();
    assert!(((1.0 - e.safety_rate) - oracle.nominal_unsafe_rate()).abs() < 5.0 * se * 2f64.sqrt());
}

#[test]
fn every_unsafe_pool_rollout_contributes_a_score() {
    let w = GridConfig::trap_rows();
    let w = Gridworld::new(w).unwrap();
    let data = collect_calibration_data(&w, 300, 400, 9);
    let pool = nominal_rollouts(&w, 400, 9, domain::FIRST_UNSAFE_POOL);
    assert_eq!(data.scores.len(), pool.iter().filter(|r| !r.safe).count());
    assert_eq!(data.unsafe_flags.len(), 300);
}

#[test]
fn bound_dominates_true_unsafety() {
    // at every candidate the certified bound should sit above the oracle
    // value for most draws; check the median draw
    let w = Gridworld::new(GridConfig::trap_rows()).unwrap();
    let oracle = UnsafetyOracle::estimate(&w, 200_000, 1).unwrap();
    for gamma in [0.3, 0.45, 0.6, 0.9, 1.0] {
        let g = SafetyThreshold::At(gamma);
        let mut bounds: Vec<f64> = (0..15)
            .map(|i| {
                let data = collect_calibration_data(&w, 3000, 3000, 100 + i);
                safety_bound(&data.unsafe_flags, &data.scores, g, 0.1).unwrap()
            })
            .collect();
        bounds.sort_by(f64::total_cmp);
        let truth = oracle.p_unsafe(g);
        assert!(bounds[7] >= truth - 3.0 * oracle.standard_error(g), "gamma {gamma}: {} < {truth}", bounds[7]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fast_selection_matches_scan(
        flags in prop::collection::vec(any::<bool>(), 1..200),
        scores in prop::collection::vec((0u8..=20).prop_map(|s| f64::from(s) / 20.0), 0..60),
        xi in 0.0..0.5f64,
        delta in 0.01..0.5f64,
    ) {
        let s = select_safety_threshold(&flags, &scores, xi, delta).unwrap();
        let mut candidates: Vec<f64> = scores.iter().copied().chain([0.0, 1.0]).collect();
        candidates.sort_by(|a, b| b.total_cmp(a));
        candidates.dedup();
        let brute = candidates
            .into_iter()
            .map(SafetyThreshold::At)
            .find(|&g| safety_bound(&flags, &scores, g, delta).unwrap() <= xi)
            .unwrap_or(SafetyThreshold::AlwaysBackup);
        prop_assert_eq!(s.threshold, brute);
        prop_assert!(s.bound <= xi);
        prop_assert!((s.bound - safety_bound(&flags, &scores, s.threshold, delta).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn threshold_nonincreasing_as_budget_tightens(
        flags in prop::collection::vec(any::<bool>(), 1..200),
        scores in prop::collection::vec(0.0..=1.0f64, 0..60),
        xi1 in 0.0..0.5f64,
        xi2 in 0.0..0.5f64,
    ) {
        let (small, large) = if xi1 <= xi2 { (xi1, xi2) } else { (xi2, xi1) };
        let rank = |t: SafetyThreshold| match t {
            SafetyThreshold::At(g) => g,
            SafetyThreshold::AlwaysBackup => f64::NEG_INFINITY,
        };
        let a = select_safety_threshold(&flags, &scores, small, 0.1).unwrap().threshold;
        let b = select_safety_threshold(&flags, &scores, large, 0.1).unwrap().threshold;
        prop_assert!(rank(a) <= rank(b));
    }
}
