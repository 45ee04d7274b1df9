//! Aggregate semantics vs individual-level oracle.
//!
//! For every corpus model, walk the reachable states holding at most six
//! agents (scaling initial multiplicities down where needed) and check that
//! summing individual-edge values per (action, location, delta) reproduces
//! every aggregate rate within 1e-12 relative.

use std::collections::{BTreeSet, VecDeque};

use mela_core::ast::InitEntry;
use mela_core::diag::NodePos;
use mela_core::parse_model;
use mela_core::semantics::{individual_lts, CompiledModel, EngineOptions, SystemState};
use mela_core::space::Location;

const MAX_AGENTS: u64 = 6;
const MAX_STATES: usize = 400;

fn compile_with_init(src: &str, init: Option<Vec<InitEntry>>) -> CompiledModel {
    let mut model = parse_model(src).expect("parses");
    if let Some(init) = init {
        model.init = init;
    }
    CompiledModel::compile(&model, EngineOptions::default()).expect("compiles")
}

fn entry(name: &str, location: Option<Location>, multiplicity: u64) -> InitEntry {
    InitEntry {
        name: name.to_string(),
        location,
        multiplicity,
        pos: NodePos::default(),
    }
}

/// Breadth-first reachable states whose total population stays within the
/// oracle bound.
fn bounded_reachable(model: &CompiledModel) -> Vec<SystemState> {
    let init = model.initial_state();
    assert!(init.total_agents() <= MAX_AGENTS);
    let mut seen = BTreeSet::from([init.clone()]);
    let mut out = vec![init.clone()];
    let mut queue = VecDeque::from([init]);
    while let Some(state) = queue.pop_front() {
        if out.len() >= MAX_STATES {
            break;
        }
        for t in model.enabled_transitions(&state).expect("transitions") {
            let next = model.apply_transition(&state, &t).expect("applies");
            if next.total_agents() > MAX_AGENTS || seen.contains(&next) {
                continue;
            }
            seen.insert(next.clone());
            out.push(next.clone());
            queue.push_back(next);
            if out.len() >= MAX_STATES {
                break;
            }
        }
    }
    out
}

fn check_model(model: &CompiledModel, min_states: usize) {
    let states = bounded_reachable(model);
    assert!(
        states.len() >= min_states,
        "only {} states sampled",
        states.len()
    );
    for state in &states {
        let aggregate = model.enabled_transitions(state).expect("aggregate");
        let oracle = individual_lts(model, state, MAX_AGENTS).expect("oracle");
        let issues = oracle.check_against(&aggregate, 1e-12);
        assert!(
            issues.is_empty(),
            "state {}: {issues:?}",
            model.format_state(state)
        );
    }
}

#[test]
fn si_matches_oracle_on_reachable_states() {
    let model = compile_with_init(include_str!("../../../models/si.mela"), None);
    check_model(&model, 50);

    // pinned value: the initial state's contact channel fires at 2*c*p
    let init = model.initial_state();
    let ts = model.enabled_transitions(&init).unwrap();
    let contact = ts
        .iter()
        .find(|t| t.label.action == "contact")
        .expect("contact enabled");
    let expected = 2.0 * 0.4 * 0.6;
    assert!((contact.rate - expected).abs() <= 1e-12 * expected);
}

#[test]
fn lv_matches_oracle_on_reachable_states() {
    let init = vec![
        entry("Pd", Some(Location::One(1)), 1),
        entry("Pd", Some(Location::One(2)), 1),
        entry("Pr", Some(Location::One(3)), 2),
        entry("Pr", Some(Location::One(4)), 2),
    ];
    let model = compile_with_init(include_str!("../../../models/lv.mela"), Some(init));
    check_model(&model, 50);
}

#[test]
fn cholera_matches_oracle_on_reachable_states() {
    let init = vec![
        entry("S", Some(Location::Two(0, 0)), 2),
        entry("I", Some(Location::Two(0, 0)), 1),
        entry("E", None, 1),
    ];
    let model = compile_with_init(include_str!("../../../models/cholera.mela"), Some(init));
    check_model(&model, 50);
}

#[test]
fn nested_matches_oracle_on_reachable_states() {
    let init = vec![
        entry("S", Some(Location::Three(0, 0, 1)), 1),
        entry("S", Some(Location::Three(0, 0, 2)), 1),
        entry("I", Some(Location::Three(1, 1, 1)), 1),
    ];
    let model = compile_with_init(include_str!("../../../models/nested.mela"), Some(init));
    check_model(&model, 50);
}

#[test]
fn nonnegativity_along_random_walks() {
    // 10^4 applied transitions over the corpus: counts never go negative
    // (apply_transition would error) and every delta matches its mode.
    use mela_core::stochastic::rng::Rng;
    for src in [
        include_str!("../../../models/si.mela"),
        include_str!("../../../models/lv.mela"),
        include_str!("../../../models/cholera.mela"),
    ] {
        let model = compile_with_init(src, None);
        let mut rng = Rng::new(17);
        let mut state = model.initial_state();
        for _ in 0..10_000 {
            let ts = model.enabled_transitions(&state).expect("transitions");
            if ts.is_empty() {
                break;
            }
            let pick = (rng.next_u64() % ts.len() as u64) as usize;
            state = model.apply_transition(&state, &ts[pick]).expect("applies");
        }
    }
}
