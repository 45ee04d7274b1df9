use super::*;
use crate::parser::parse_model;
use crate::space::Location;

const SI: &str = include_str!("../../../../models/si.mela");
const LV: &str = include_str!("../../../../models/lv.mela");
const CHOLERA: &str = include_str!("../../../../models/cholera.mela");

fn compile(src: &str) -> CompiledModel {
    let model = parse_model(src).expect("parses");
    CompiledModel::compile(&model, EngineOptions::default()).expect("compiles")
}

fn find<'a>(
    ts: &'a [AggregateTransition],
    action: &str,
    loc: Location,
) -> &'a AggregateTransition {
    ts.iter()
        .find(|t| t.label.action == action && t.label.location == Some(loc))
        .unwrap_or_else(|| panic!("no `{action}` at {loc}"))
}

#[test]
fn si_initial_state() {
    let m = compile(SI);
    let init = m.initial_state();
    assert_eq!(m.format_state(&init), "{S@1:2, S@2:1, I@1:1}");
    assert!(init.env_counts().is_empty());
}

#[test]
fn cholera_initial_state_has_env() {
    let m = compile(CHOLERA);
    let init = m.initial_state();
    assert_eq!(init.count(m.series(0, 0)), 100); // S@(0,0)
    assert_eq!(init.count(m.series(1, 0)), 1); // I@(0,0)
    assert_eq!(init.env_counts(), &[1]);
}

#[test]
fn duplicate_init_entries_merge() {
    let m = compile("space line(1);\nagent A(l) = (a, 1.0) up A(l);\ninit = A(1)[2] | A(1)[3];");
    assert_eq!(m.initial_state().count(0), 5);
}

#[test]
fn si_init_enables_nine_transitions_with_exact_rates() {
    let m = compile(SI);
    let ts = m.enabled_transitions(&m.initial_state()).unwrap();
    assert_eq!(ts.len(), 9, "{}", m.transition_table(&ts));

    let l1 = Location::One(1);
    let l2 = Location::One(2);
    let (s1, s2, i1, i2) = (m.series(0, 0), m.series(0, 1), m.series(1, 0), m.series(1, 1));

    assert_eq!(find(&ts, "birth", l1).rate, 2.0 * 0.1);
    assert_eq!(find(&ts, "birth", l1).delta, vec![(s1, 1)]);
    assert_eq!(find(&ts, "birth", l2).rate, 0.1);
    assert_eq!(find(&ts, "deathS", l1).rate, 2.0 * 0.05);
    assert_eq!(find(&ts, "deathS", l2).rate, 0.05);
    assert_eq!(find(&ts, "deathI", l1).rate, 0.1);
    assert_eq!(find(&ts, "deathI", l1).delta, vec![(i1, -1)]);

    let move_s = find(&ts, "moveS", l1);
    assert_eq!(move_s.rate, 2.0 * 0.5);
    assert_eq!(move_s.delta, vec![(s1, -1), (s2, 1)]);
    assert_eq!(find(&ts, "moveS", l2).rate, 0.5);
    assert_eq!(find(&ts, "moveI", l1).delta, vec![(i1, -1), (i2, 1)]);

    let contact = find(&ts, "contact", l1);
    assert_eq!(contact.rate, 1.0 * 2.0 * 0.4 * 0.6);
    assert_eq!(contact.delta, vec![(s1, -1), (i1, 1)]);
    assert_eq!(contact.label.mode, TransitionMode::Pair(Mode::Keep, Mode::Keep));
    assert_eq!(contact.label.value, 0.4 * 0.6);
}

#[test]
fn lone_infective_has_no_contact_channel() {
    let m = compile(SI);
    let state = m.state_from_counts(&[("I", Location::One(1), 1)], &[]);
    let ts = m.enabled_transitions(&state).unwrap();
    // deathI and one collapsed movement destination; contact has no passive
    // partner in its target set and is disabled.
    let actions: Vec<&str> = ts.iter().map(|t| t.label.action.as_str()).collect();
    assert_eq!(actions, ["deathI", "moveI"], "{}", m.transition_table(&ts));
    assert!(ts.iter().all(|t| t.label.action != "contact"));
}

#[test]
fn cholera_env_contact_only_in_water_cells() {
    let m = compile(CHOLERA);
    let ts = m.enabled_transitions(&m.initial_state()).unwrap();
    let env_contacts: Vec<&AggregateTransition> = ts
        .iter()
        .filter(|t| t.label.action == "contactE")
        .collect();
    assert_eq!(env_contacts.len(), 1);
    let t = env_contacts[0];
    assert_eq!(t.label.location, Some(Location::Two(0, 0)));
    assert_eq!(t.rate, 1.0 * 100.0 * 0.02 * 0.4); // k * m * cE * pE
    let s00 = m.series(0, 0);
    let i00 = m.series(1, 0);
    assert_eq!(t.delta, vec![(s00, -1), (i00, 1)]);
}

#[test]
fn lv_predator_without_prey_cannot_eat() {
    let m = compile(LV);
    let state = m.state_from_counts(
        &[("Pd", Location::One(1), 10), ("Pr", Location::One(4), 15)],
        &[],
    );
    let ts = m.enabled_transitions(&state).unwrap();
    assert!(ts.iter().all(|t| t.label.action != "eat"));
    // movement from vertex 1 splits uniformly over its two neighbours
    let moves: Vec<&AggregateTransition> = ts
        .iter()
        .filter(|t| t.label.action == "movePd")
        .collect();
    assert_eq!(moves.len(), 2);
    for mv in moves {
        assert_eq!(mv.rate, 10.0 * 0.3 * 0.5);
    }
}

#[test]
fn apply_transition_examples() {
    let m = compile(SI);
    let l1 = Location::One(1);

    let state = m.state_from_counts(&[("S", l1, 2), ("I", l1, 1)], &[]);
    let ts = m.enabled_transitions(&state).unwrap();
    let next = m.apply_transition(&state, find(&ts, "contact", l1)).unwrap();
    assert_eq!(m.format_state(&next), "{S@1:1, I@1:2}");

    let state = m.state_from_counts(&[("S", l1, 2)], &[]);
    let ts = m.enabled_transitions(&state).unwrap();
    let next = m.apply_transition(&state, find(&ts, "deathS", l1)).unwrap();
    assert_eq!(m.format_state(&next), "{S@1:1}");

    let state = m.state_from_counts(&[("S", l1, 1)], &[]);
    let ts = m.enabled_transitions(&state).unwrap();
    let next = m.apply_transition(&state, find(&ts, "moveS", l1)).unwrap();
    assert_eq!(m.format_state(&next), "{S@2:1}");
    assert_eq!(next.iter_nonzero().count(), 1);
}

#[test]
fn oracle_pair_and_no_update_branch() {
    let m = compile(SI);
    let l1 = Location::One(1);
    let state = m.state_from_counts(&[("S", l1, 1), ("I", l1, 1)], &[]);
    let lts = individual_lts(&m, &state, 6).unwrap();

    let pairs: Vec<&IndividualEdge> = lts
        .edges
        .iter()
        .filter(|e| e.label.action == "contact" && e.effective)
        .collect();
    assert_eq!(pairs.len(), 1);
    assert_eq!(pairs[0].label.value, 0.4 * 0.6);

    let no_update: Vec<&IndividualEdge> = lts
        .edges
        .iter()
        .filter(|e| e.label.action == "contact" && !e.effective)
        .collect();
    assert_eq!(no_update.len(), 1);
    assert_eq!(no_update[0].label.value, 0.4 * (1.0 - 0.6));
    assert!(no_update[0].delta.is_empty());
}

#[test]
fn oracle_two_pairs_sum_to_aggregate() {
    let m = compile(SI);
    let l1 = Location::One(1);
    let state = m.state_from_counts(&[("S", l1, 2), ("I", l1, 1)], &[]);
    let lts = individual_lts(&m, &state, 6).unwrap();

    let pairs: Vec<&IndividualEdge> = lts
        .edges
        .iter()
        .filter(|e| e.label.action == "contact" && e.effective)
        .collect();
    assert_eq!(pairs.len(), 2);

    let ts = m.enabled_transitions(&state).unwrap();
    let agg = find(&ts, "contact", l1);
    let sum: f64 = pairs.iter().map(|e| e.label.value).sum();
    assert!((sum - agg.rate).abs() <= 1e-12 * agg.rate);
    assert_eq!(agg.rate, 2.0 * 0.4 * 0.6);
}

#[test]
fn oracle_nil_agent_has_no_transitions() {
    let m = compile("space line(1);\nagent A(l) = nil;\ninit = A(1)[1];");
    let lts = individual_lts(&m, &m.initial_state(), 6).unwrap();
    assert!(lts.edges.is_empty());
    assert!(m
        .enabled_transitions(&m.initial_state())
        .unwrap()
        .is_empty());
}

#[test]
fn oracle_bound_is_enforced() {
    let m = compile(SI);
    let err = individual_lts(&m, &m.initial_state(), 2).unwrap_err();
    assert!(matches!(err, OracleError::TooManyAgents { total: 4, max: 2 }));
}

#[test]
fn oracle_matches_aggregate_on_si_init() {
    let m = compile(SI);
    let state = m.initial_state();
    let lts = individual_lts(&m, &state, 6).unwrap();
    let ts = m.enabled_transitions(&state).unwrap();
    let issues = lts.check_against(&ts, 1e-12);
    assert!(issues.is_empty(), "{issues:?}");
}

#[test]
fn label_mode_matches_delta_sign_pattern() {
    for src in [SI, LV, CHOLERA] {
        let m = compile(src);
        let ts = m.enabled_transitions(&m.initial_state()).unwrap();
        for t in &ts {
            let net: i64 = t.delta.iter().map(|(_, d)| d).sum();
            assert_eq!(
                net,
                t.label.mode.net_change(),
                "{} label {} delta {:?}",
                t.label.action,
                t.label.mode,
                t.delta
            );
        }
    }
}

#[test]
fn permuting_init_entries_leaves_transitions_unchanged() {
    let m1 = compile(SI);
    let permuted = SI.replace(
        "init = S(1)[2] | S(2)[1] | I(1)[1];",
        "init = I(1) | S(2) | S(1) | S(1);",
    );
    let m2 = compile(&permuted);
    let s1 = m1.initial_state();
    let s2 = m2.initial_state();
    assert_eq!(s1, s2);
    let t1 = m1.enabled_transitions(&s1).unwrap();
    let t2 = m2.enabled_transitions(&s2).unwrap();
    assert_eq!(t1, t2);
}

#[test]
fn self_pairing_uses_ordered_pair_count() {
    // An agent with both active and passive forms of one action: with n
    // copies in one place there are n*(n-1) ordered pairs, which the
    // individual-level oracle confirms.
    let src = "
space line(1);
param r = 0.2; param q = 0.5;
agent A(l) = ->{l}(touch, r) . B(l) + <-(touch, q) . B(l);
agent B(l) = (idle, 1.0) . B(l);
init = A(1)[3];
";
    let model = parse_model(src).unwrap();
    let m = CompiledModel::compile(&model, EngineOptions::default()).unwrap();
    let state = m.initial_state();
    let ts = m.enabled_transitions(&state).unwrap();
    let lts = individual_lts(&m, &state, 6).unwrap();
    let issues = lts.check_against(&ts, 1e-12);
    assert!(issues.is_empty(), "{issues:?}");
    // both participants turn into B: delta A:-2, B:+2, 3*2 ordered pairs
    let touch = ts
        .iter()
        .find(|t| t.label.action == "touch")
        .expect("touch fires");
    assert_eq!(touch.rate, 3.0 * 2.0 * 0.2 * 0.5);
    assert_eq!(touch.delta, vec![(0, -2), (1, 2)]);
}

#[test]
fn unpaired_influence_fires_behind_option() {
    let model = parse_model(LV).unwrap();
    let m = CompiledModel::compile(
        &model,
        EngineOptions {
            unpaired_influence_fires: true,
        },
    )
    .unwrap();
    let state = m.state_from_counts(&[("Pd", Location::One(1), 10)], &[]);
    let ts = m.enabled_transitions(&state).unwrap();
    let eat = ts.iter().find(|t| t.label.action == "eat").expect("eat fires alone");
    assert_eq!(eat.rate, 10.0 * 0.02);
    assert_eq!(eat.label.mode, TransitionMode::Solo(Mode::Create));
    // and the oracle agrees under the same option
    let lts = individual_lts(&m, &state, 12).unwrap();
    assert!(lts.check_against(&ts, 1e-12).is_empty());
}

#[test]
fn eval_rate_expr_spec_examples() {
    let m = compile(SI);
    let l1 = Location::One(1);
    let state = m.state_from_counts(&[("S", l1, 2), ("I", l1, 1)], &[]);

    assert_eq!(
        eval_rate_expr(&m, &RateExpr::Num(0.3), &state).unwrap(),
        0.3
    );

    let e = crate::expr::RateExpr::Binary {
        op: crate::expr::BinOp::Mul,
        lhs: Box::new(RateExpr::Count {
            agent: "S".into(),
            loc: CountLoc::Lit(l1),
        }),
        rhs: Box::new(RateExpr::Num(0.5)),
    };
    assert_eq!(eval_rate_expr(&m, &e, &state).unwrap(), 1.0);

    let e = crate::expr::RateExpr::Binary {
        op: crate::expr::BinOp::Div,
        lhs: Box::new(RateExpr::Count {
            agent: "I".into(),
            loc: CountLoc::Lit(l1),
        }),
        rhs: Box::new(crate::expr::RateExpr::Binary {
            op: crate::expr::BinOp::Add,
            lhs: Box::new(RateExpr::Count {
                agent: "S".into(),
                loc: CountLoc::Lit(l1),
            }),
            rhs: Box::new(RateExpr::Count {
                agent: "I".into(),
                loc: CountLoc::Lit(l1),
            }),
        }),
    };
    assert_eq!(eval_rate_expr(&m, &e, &state).unwrap(), 1.0 / 3.0);
}

#[test]
fn cross_location_pair_moves_both_participants() {
    // Active side moves on firing, passive side changes state: the delta
    // combines all four entries and the label carries the felt location.
    let src = "
param r = 1.0; param p = 0.5;
space line(2);
agent A(l)  = ->{all}(push, r) . A(new(l));
agent Bb(l) = <-(push, p) . C(l);
agent C(l)  = (idle, 1.0) up C(l);
init = A(1) | Bb(2);
";
    let model = parse_model(src).unwrap();
    let m = CompiledModel::compile(&model, EngineOptions::default()).unwrap();
    let state = m.initial_state();
    let ts = m.enabled_transitions(&state).unwrap();
    let push = ts.iter().find(|t| t.label.action == "push").expect("push");
    assert_eq!(push.rate, 1.0 * 1.0 * 1.0 * 0.5);
    assert_eq!(push.label.location, Some(Location::One(2)));
    // series: A@1=0 A@2=1 Bb@1=2 Bb@2=3 C@1=4 C@2=5
    assert_eq!(push.delta, vec![(0, -1), (1, 1), (3, -1), (5, 1)]);
    let lts = individual_lts(&m, &state, 6).unwrap();
    assert!(lts.check_against(&ts, 1e-12).is_empty());
}

#[test]
fn create_mode_keeps_initiator_and_places_offspring_at_destination() {
    let src = "
param r = 0.3;
space line(2);
agent A(l) = (spawn, r) up A(new(l));
init = A(1)[2];
";
    let model = parse_model(src).unwrap();
    let m = CompiledModel::compile(&model, EngineOptions::default()).unwrap();
    let ts = m.enabled_transitions(&m.initial_state()).unwrap();
    assert_eq!(ts.len(), 1);
    assert_eq!(ts[0].rate, 2.0 * 0.3);
    // offspring appears at the movement destination; the parents stay put
    assert_eq!(ts[0].delta, vec![(1, 1)]);
    let next = m.apply_transition(&m.initial_state(), &ts[0]).unwrap();
    assert_eq!(m.format_state(&next), "{A@1:2, A@2:1}");
}

#[test]
fn env_multiplicity_scales_the_pair_rate() {
    let doubled = CHOLERA.replace("E[1]", "E[2]");
    let m = compile(&doubled);
    let ts = m.enabled_transitions(&m.initial_state()).unwrap();
    let t = ts
        .iter()
        .find(|t| t.label.action == "contactE")
        .expect("contactE");
    assert_eq!(t.rate, 2.0 * 100.0 * 0.02 * 0.4);
}

#[test]
fn duplicate_dist_destinations_merge() {
    let src = "
param m = 1.0;
space line(2);
agent A(l) = (hop, m) . A(dist(2[0.5], 2[0.5]));
init = A(1)[3];
";
    let model = parse_model(src).unwrap();
    let m = CompiledModel::compile(&model, EngineOptions::default()).unwrap();
    let ts = m.enabled_transitions(&m.initial_state()).unwrap();
    assert_eq!(ts.len(), 1);
    assert_eq!(ts[0].rate, 3.0 * 1.0 * 1.0);
    assert_eq!(ts[0].delta, vec![(0, -1), (1, 1)]);
}

#[test]
fn unmatched_passive_action_never_fires() {
    // Deleting I's active contact prefix leaves S's passive contact with no
    // possible partner: validation warns, and no pairing rule ever fires
    // from any reachable small state.
    let src = SI.replace("+ ->{l}(contact, c) . I(l)", "");
    let model = parse_model(&src).unwrap();
    let m = CompiledModel::compile(&model, EngineOptions::default()).unwrap();
    let mut frontier = vec![m.initial_state()];
    for _ in 0..3 {
        let mut next = Vec::new();
        for state in &frontier {
            let ts = m.enabled_transitions(state).unwrap();
            assert!(ts.iter().all(|t| t.label.action != "contact"));
            for t in &ts {
                next.push(m.apply_transition(state, t).unwrap());
            }
        }
        frontier = next;
    }
}

#[test]
fn movement_transitions_conserve_population() {
    for src in [SI, LV, CHOLERA] {
        let m = compile(src);
        let ts = m.enabled_transitions(&m.initial_state()).unwrap();
        for t in ts.iter().filter(|t| t.label.action.starts_with("move")) {
            let net: i64 = t.delta.iter().map(|(_, d)| d).sum();
            assert_eq!(net, 0, "{} is not conservative", t.label.action);
        }
    }
}
