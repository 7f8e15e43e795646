use std::time::Duration;

use num_rational::BigRational;
use num_traits::One;
use proptest::prelude::*;

use teamreach::almost_sure::{encode, solve_almost_sure, verify_certificate, AlmostSureAnswer, EncodeOptions};
use teamreach::bench::{
    builtin, fuzz_game, gen_jamming, gen_pursuit, gen_robot, perturb, pursuit_scenario, robot_scenario, FuzzConfig,
    RobotGoal,
};
use teamreach::game::{induced_mdp_exact, merge_team, restrict_absorbing, MemorylessProfile};
use teamreach::io::{parse_game, serialize_game};
use teamreach::iratl::{cpre, parse_formula, satisfying_states, solve_sure, CheckConfig, SurePath, Verdict};
use teamreach::one_shot::{
    best_response_value, brute_force_independent, build_local_game, grid_slack, joint_value, joint_weights,
    solve_independent, solve_shared, LocalGame, SearchConfig, Selector,
};
use teamreach::rational::{from_f64, ratio};
use teamreach::sat::SatBackend;
use teamreach::smt::{
    bisect_value, decide_threshold_exact, discover_solver, emit_local_game_query, profile_from_model, run_solver,
    SatStatus, SolverEndpoint,
};
use teamreach::vi::{certify, value_iteration, Mode, StopConfig, ViConfig};
use teamreach::Game;

fn small() -> FuzzConfig {
    FuzzConfig::default()
}

fn wider() -> FuzzConfig {
    FuzzConfig { max_states: 4, team: 2, max_actions: 3, max_opp_actions: 3, max_weight: 5 }
}

fn game_strategy() -> impl Strategy<Value = Game> {
    (any::<u64>(), any::<bool>()).prop_map(|(seed, wide)| fuzz_game(seed, &if wide { wider() } else { small() }))
}

/// A game plus a valuation with targets at 1.
fn game_and_valuation() -> impl Strategy<Value = (Game, Vec<f64>)> {
    game_strategy().prop_flat_map(|g| {
        let n = g.num_states();
        (Just(g), prop::collection::vec(0.0..=1.0f64, n)).prop_map(|(g, mut v)| {
            for (s, x) in v.iter_mut().enumerate() {
                if g.is_target(s) {
                    *x = 1.0;
                }
            }
            (g, v)
        })
    })
}

fn local_strategy() -> impl Strategy<Value = LocalGame> {
    (prop::collection::vec(1usize..=3, 1..=3), 1usize..=3).prop_flat_map(|(team_sizes, opp)| {
        let rows: usize = team_sizes.iter().product();
        prop::collection::vec(0.0..=1.0f64, rows * opp).prop_map(move |payoff| LocalGame {
            team_sizes: team_sizes.clone(),
            opp,
            payoff,
        })
    })
}

fn is_yes(g: &Game) -> bool {
    matches!(solve_almost_sure(g, &SatBackend::Embedded, EncodeOptions::default()).unwrap(), AlmostSureAnswer::Yes(_))
}

fn quick_solver() -> Option<SolverEndpoint> {
    discover_solver().map(|e| SolverEndpoint { timeout: Duration::from_secs(10), ..e })
}

// ---------------------------------------------------------------- game model

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shared_iterates_dominate_independent(g in game_strategy(), budget in 1usize..60) {
        // equal iteration budgets: a stopping rule can halt the two runs at different depths
        let stop = StopConfig { tolerance: f64::MIN_POSITIVE, max_iters: budget };
        let sh = value_iteration(&g, &ViConfig { stop, ..ViConfig::new(Mode::Shared) }).unwrap();
        let ind = value_iteration(&g, &ViConfig { stop, ..ViConfig::new(Mode::Independent) }).unwrap();
        // a run may stop earlier only at an exact fixpoint (delta 0)
        prop_assert!(sh.iterations <= budget && ind.iterations <= budget);
        for s in 0..g.num_states() {
            prop_assert!(sh.values[s] >= ind.values[s] - 1e-6, "state {s}: {} < {}", sh.values[s], ind.values[s]);
        }
    }
}

fn benchmarks() -> Vec<(&'static str, Game)> {
    let sc = pursuit_scenario(1).unwrap();
    let (h, w, starts, cell) = robot_scenario(1).unwrap();
    vec![
        ("door", builtin("door").unwrap()),
        ("memory", builtin("memory").unwrap()),
        ("jamming", gen_jamming(2, &[1, 1]).unwrap()),
        ("pursuit1", gen_pursuit(&sc.graph, &sc.team, sc.opponent).unwrap()),
        ("robot1", gen_robot(h, w, &starts, &RobotGoal::AnyAt(cell)).unwrap()),
    ]
}

#[test]
fn benchmark_shared_dominates_independent() {
    for (name, g) in benchmarks() {
        let sh = value_iteration(&g, &ViConfig::new(Mode::Shared)).unwrap();
        let ind = value_iteration(&g, &ViConfig::new(Mode::Independent)).unwrap();
        for s in 0..g.num_states() {
            assert!(sh.values[s] >= ind.values[s] - 1e-6, "{name} state {s}: {} < {}", sh.values[s], ind.values[s]);
        }
    }
}

#[test]
fn benchmark_certification_is_dominated() {
    const EPS: f64 = 1e-4;
    const SEARCH_SLACK: f64 = 1e-3;
    for (name, g) in benchmarks() {
        for mode in [Mode::Independent, Mode::Shared] {
            let r = value_iteration(&g, &ViConfig::new(mode)).unwrap();
            let c = certify(&r.game, &r.profile, &StopConfig::certification()).unwrap();
            for s in 0..r.game.num_states() {
                assert!(
                    c[s] <= r.values[s] + EPS + SEARCH_SLACK,
                    "{name} {mode:?} state {s}: {} > {}",
                    c[s],
                    r.values[s]
                );
            }
        }
    }
}

proptest! {
    #[test]
    fn restrict_absorbing_is_idempotent(g in game_strategy(), mask in any::<u8>()) {
        let keep: Vec<usize> = (0..g.num_states()).filter(|s| mask >> s & 1 == 1).collect();
        let once = restrict_absorbing(&g, &keep).unwrap();
        let twice = restrict_absorbing(&once, &keep).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn induced_mdp_keeps_unit_mass(g in game_strategy(), weights in prop::collection::vec(1i64..=6, 64)) {
        let mut it = weights.iter().cycle();
        let profile: Vec<Vec<Vec<BigRational>>> = (0..g.team_size())
            .map(|p| {
                (0..g.num_states())
                    .map(|s| {
                        let w: Vec<i64> = (0..g.available[s][p].len()).map(|_| *it.next().unwrap()).collect();
                        let total: i64 = w.iter().sum();
                        w.iter().map(|&x| ratio(x, total)).collect()
                    })
                    .collect()
            })
            .collect();
        let mdp = induced_mdp_exact(&g, &profile).unwrap();
        for s in 0..mdp.num_states() {
            for tj in 0..mdp.team_joint_count(s) {
                for b in 0..mdp.opp_count(s) {
                    prop_assert_eq!(mdp.dist(s, tj, b).sum(), BigRational::one());
                }
            }
        }
    }

    #[test]
    fn valid_games_are_accepted_everywhere(g in game_strategy()) {
        prop_assert!(g.validate().ok);
        prop_assert!(merge_team(&g).is_ok());
        prop_assert!(certify(&g, &MemorylessProfile::uniform(&g), &StopConfig::default()).is_ok());
        let cnf = encode(&g, EncodeOptions::default());
        prop_assert!(cnf.num_vars > 0);
        prop_assert!(solve_almost_sure(&g, &SatBackend::Embedded, EncodeOptions::default()).is_ok());
    }

    // ------------------------------------------------------------------- io

    #[test]
    fn serialization_round_trips(g in game_strategy()) {
        let text = serialize_game(&g);
        let back = parse_game(&text).unwrap();
        prop_assert_eq!(&back, &g);
        prop_assert_eq!(serialize_game(&back), text);
    }

    // -------------------------------------------------------------- one-shot

    #[test]
    fn pure_opponent_suffices(local in local_strategy(), seed in any::<u64>()) {
        let sel = local_selector(&local, seed);
        let value = best_response_value(&local, &sel).unwrap();
        let w = joint_weights(&local.team_sizes, &sel);
        let q = dirichletish(local.opp, seed ^ 0x9e37);
        let mixed: f64 = (0..local.opp)
            .map(|b| q[b] * w.iter().enumerate().map(|(j, wj)| wj * local.entry(j, b)).sum::<f64>())
            .sum();
        prop_assert!(mixed >= value - 1e-12);
    }

    #[test]
    fn local_search_is_sound(local in local_strategy().prop_filter("grid oracle size", |l| l.team_sizes.len() <= 2)) {
        let ind = solve_independent(&local, &SearchConfig::default()).unwrap();
        let sh = solve_shared(&local).unwrap();
        let res = 30;
        let oracle = brute_force_independent(&local, res).unwrap();
        prop_assert!(ind.value <= oracle + grid_slack(&local, res) + 1e-12);
        prop_assert!(ind.value <= sh.value + 1e-9);
    }

    #[test]
    fn reported_values_are_reevaluated(local in local_strategy()) {
        let ind = solve_independent(&local, &SearchConfig::default()).unwrap();
        let Selector::Product(sel) = &ind.selector else { panic!("independent solution has a product selector") };
        prop_assert!((ind.value - best_response_value(&local, sel).unwrap()).abs() <= 1e-12);
        let sh = solve_shared(&local).unwrap();
        let Selector::Joint(x) = &sh.selector else { panic!("shared solution has a joint selector") };
        prop_assert!((sh.value - joint_value(&local, x)).abs() <= 1e-12);
    }

    #[test]
    fn shared_pre_is_monotone((g, x) in game_and_valuation(), bumps in prop::collection::vec(0.0..=0.5f64, 8)) {
        let y: Vec<f64> = x.iter().enumerate().map(|(s, v)| (v + bumps[s % bumps.len()]).min(1.0)).collect();
        for s in 0..g.num_states() {
            let vx = solve_shared(&build_local_game(&g, s, &x).unwrap()).unwrap().value;
            let vy = solve_shared(&build_local_game(&g, s, &y).unwrap()).unwrap().value;
            prop_assert!(vx <= vy + 1e-9, "state {s}: {vx} > {vy}");
        }
    }
}

fn local_selector(local: &LocalGame, seed: u64) -> Vec<Vec<f64>> {
    local.team_sizes.iter().enumerate().map(|(p, &k)| dirichletish(k, seed.wrapping_add(p as u64))).collect()
}

/// Deterministic pseudo-random point of the simplex.
fn dirichletish(k: usize, seed: u64) -> Vec<f64> {
    let mut x = seed | 1;
    let w: Vec<f64> = (0..k)
        .map(|_| {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            (x % 1000) as f64 + 1.0
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v / total).collect()
}

// ------------------------------------------------------------ value iteration

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shared_iterates_are_monotone_and_bounded(g in game_strategy()) {
        let r = value_iteration(&g, &ViConfig { keep_trace: true, ..ViConfig::new(Mode::Shared) }).unwrap();
        for w in r.trace.windows(2) {
            for (a, b) in w[0].iter().zip(&w[1]) {
                prop_assert!(*b >= a - 1e-12);
                prop_assert!((0.0..=1.0).contains(b));
            }
        }
    }

    #[test]
    fn independent_iterates_are_bounded(g in game_strategy()) {
        let r = value_iteration(&g, &ViConfig { keep_trace: true, ..ViConfig::new(Mode::Independent) }).unwrap();
        prop_assert!(r.trace.iter().flatten().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn certification_grows_with_iterations(g in game_strategy(), seed in any::<u64>()) {
        let profile = MemorylessProfile {
            probs: (0..g.team_size())
                .map(|p| (0..g.num_states()).map(|s| dirichletish(g.available[s][p].len(), seed ^ (s as u64) << 3 ^ p as u64)).collect())
                .collect(),
        };
        let mut prev = vec![0.0; g.num_states()];
        for k in 1..12 {
            let c = certify(&g, &profile, &StopConfig { tolerance: 0.0, max_iters: k }).unwrap();
            for s in 0..g.num_states() {
                prop_assert!(c[s] >= prev[s] - 1e-12);
            }
            prev = c;
        }
    }
}

// --------------------------------------------------------------- almost-sure

proptest! {
    #[test]
    fn certificates_verify(g in game_strategy(), unary in any::<bool>()) {
        if let AlmostSureAnswer::Yes(cert) =
            solve_almost_sure(&g, &SatBackend::Embedded, EncodeOptions { unary }).unwrap()
        {
            prop_assert!(verify_certificate(&g, &cert).is_ok());
        }
    }

    #[test]
    fn encodings_agree(g in game_strategy()) {
        let binary = is_yes(&g);
        let unary = matches!(
            solve_almost_sure(&g, &SatBackend::Embedded, EncodeOptions { unary: true }).unwrap(),
            AlmostSureAnswer::Yes(_)
        );
        prop_assert_eq!(binary, unary);
    }

    #[test]
    fn probabilities_do_not_matter(g in game_strategy(), seed in any::<u64>()) {
        prop_assert_eq!(is_yes(&g), is_yes(&perturb(&g, seed)));
    }

    #[test]
    fn shared_dominates_almost_sure(g in game_strategy()) {
        if !is_yes(&merge_team(&g).unwrap()) {
            prop_assert!(!is_yes(&g));
        }
    }

    // ------------------------------------------------------------------ IRATL

    #[test]
    fn independent_true_implies_shared_true(g in game_strategy(), op in 0usize..3, win in 0usize..2) {
        let path = ["X goal", "G !trap", "F goal"][op];
        let win = ["sure", "almost"][win];
        let g = with_labels(g);
        let cfg = CheckConfig::default();
        let ind = satisfying_states(&g, &parse_formula(&format!("<<p1,p2>>^ind_{win} {path}")).unwrap(), &cfg).unwrap();
        let sh = satisfying_states(&g, &parse_formula(&format!("<<p1,p2>>^sh_{win} {path}")).unwrap(), &cfg).unwrap();
        for s in 0..g.num_states() {
            if ind.verdicts[s] == Verdict::True {
                prop_assert_eq!(sh.verdicts[s], Verdict::True);
            }
        }
    }

    #[test]
    fn sure_fixpoints_stabilise_within_state_count(g in game_strategy(), mask in any::<u8>()) {
        let n = g.num_states();
        let x: Vec<bool> = (0..n).map(|s| mask >> s & 1 == 1).collect();
        let mut cur = x.clone();
        for _ in 0..n {
            let pre = cpre(&g, &cur);
            let next: Vec<bool> = (0..n).map(|s| x[s] && pre[s]).collect();
            prop_assert!(next.iter().zip(&cur).all(|(a, b)| !a || *b));
            cur = next;
        }
        prop_assert_eq!(solve_sure(&g, &SurePath::Always(&x)), cur.clone());
        let mut reach = vec![false; n];
        for _ in 0..n {
            let pre = cpre(&g, &reach);
            let next: Vec<bool> = (0..n).map(|s| x[s] || pre[s]).collect();
            prop_assert!(next.iter().zip(&reach).all(|(a, b)| *a || !b));
            reach = next;
        }
        let all = vec![true; n];
        prop_assert_eq!(solve_sure(&g, &SurePath::Until(&all, &x)), reach);
    }
}

/// Fuzz games name their absorbing states `goal` and `trap`.
fn with_labels(mut g: Game) -> Game {
    for s in 0..g.num_states() {
        if g.states[s] == "goal" {
            g.labels[s].insert("goal".into());
        }
        if g.states[s] == "trap" {
            g.labels[s].insert("trap".into());
        }
    }
    g
}

// ---------------------------------------------------------------------- SMT

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn threshold_models_replay(seed in any::<u64>(), t in 0u32..10) {
        let Some(endpoint) = quick_solver() else { return Ok(()) };
        let g = fuzz_game(seed, &small());
        let t = ratio(t as i64, 10);
        let verdict = decide_threshold_exact(&g, &t, &endpoint).unwrap();
        if verdict.status == SatStatus::Sat {
            let profile = profile_from_model(&g, verdict.model.as_ref().unwrap());
            let c = certify(&g, &profile, &StopConfig::certification()).unwrap();
            prop_assert!(from_f64(c[g.initial] + 1e-6) > t, "certified {} at t {}", c[g.initial], t);
        }
    }

    #[test]
    fn local_queries_agree_with_grid((g, v) in game_and_valuation(), c in 0.0..=1.0f64) {
        let Some(endpoint) = quick_solver() else { return Ok(()) };
        let local = build_local_game(&g, 0, &v).unwrap();
        let res = 40;
        let oracle = brute_force_independent(&local, res).unwrap();
        let slack = grid_slack(&local, res);
        match run_solver(&endpoint, &emit_local_game_query(&local, c)).unwrap().status {
            SatStatus::Sat => prop_assert!(oracle >= c - slack - 1e-9, "sat at {c}, oracle {oracle}"),
            SatStatus::Unsat => prop_assert!(oracle <= c + 1e-9, "unsat at {c}, oracle {oracle}"),
            SatStatus::Unknown | SatStatus::Timeout => {}
        }
    }

    #[test]
    fn bisection_brackets_certified_values(seed in any::<u64>()) {
        let Some(endpoint) = quick_solver() else { return Ok(()) };
        let g = fuzz_game(seed, &small());
        let r = bisect_value(&g, 1e-2, &endpoint).unwrap();
        prop_assert!(r.lo <= r.hi);
        if !r.partial {
            prop_assert!(r.hi - r.lo <= 1e-2);
        }
        let vi = value_iteration(&g, &ViConfig::default()).unwrap();
        let c = certify(&g, &vi.profile, &StopConfig::certification()).unwrap();
        prop_assert!(c[g.initial] <= r.hi + 1e-6, "certified {} above unsat bound {}", c[g.initial], r.hi);
    }

    #[test]
    fn exact_backend_never_flips_verdicts(seed in any::<u64>(), t in 1u32..10) {
        let Some(endpoint) = quick_solver() else { return Ok(()) };
        let g = with_labels(fuzz_game(seed, &small()));
        let f = parse_formula(&format!("<<p1,p2>>^ind_>{t}/10 F goal")).unwrap();
        let approx = satisfying_states(&g, &f, &CheckConfig::default()).unwrap();
        let exact = satisfying_states(&g, &f, &CheckConfig { solver: Some(endpoint), ..CheckConfig::default() }).unwrap();
        for s in 0..g.num_states() {
            let (a, e) = (approx.verdicts[s], exact.verdicts[s]);
            prop_assert!(a == Verdict::Unknown || e == Verdict::Unknown || a == e, "state {s}: {a} vs {e}");
        }
    }
}
