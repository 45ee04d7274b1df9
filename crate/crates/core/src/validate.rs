//! Static validation of a parsed model.
//!
//! All checks return diagnostics as data; an empty list means the model
//! satisfies every static invariant: names resolve, arities match the
//! declared space, bodies are guarded, init lies inside the space, and every
//! passive action has an active counterpart (warning otherwise).

use std::collections::BTreeSet;

use crate::ast::*;
use crate::diag::Diagnostic;
use crate::expr::{CountLoc, RateExpr};
use crate::space::{build_space, Space};

/// Validate a model, returning every finding. Errors make the model
/// unusable for analysis; warnings do not.
pub fn validate(model: &ModelDef) -> Vec<Diagnostic> {
    let mut diags = Vec::new();

    let space = match build_space(
        model.space.decl.clone(),
        model.space.neighbourhood,
        model.space.entry,
    ) {
        Ok(s) => s,
        Err(e) => {
            diags.push(Diagnostic::error(e.to_string(), Some(model.space.pos.pos())));
            return diags;
        }
    };

    let agent_names: BTreeSet<&str> = model.agents.iter().map(|a| a.name.as_str()).collect();

    for agent in &model.agents {
        check_agent(model, agent, &space, &agent_names, &mut diags);
    }
    for env in &model.env_factors {
        check_env(model, env, &space, &mut diags);
    }
    check_init(model, &space, &mut diags);
    check_action_pairing(model, &mut diags);

    diags
}

fn check_agent(
    model: &ModelDef,
    agent: &AgentDef,
    space: &Space,
    agent_names: &BTreeSet<&str>,
    diags: &mut Vec<Diagnostic>,
) {
    if agent.location_arity() != space.arity() {
        diags.push(Diagnostic::error(
            format!(
                "agent `{}` has {} location coordinates but the space has {}",
                agent.name,
                agent.location_arity(),
                space.arity()
            ),
            Some(agent.pos.pos()),
        ));
    }

    check_guardedness(&agent.body, &agent.name, true, diags);

    for prefix in agent.body.prefixes() {
        if !agent_names.contains(prefix.target.as_str()) {
            diags.push(Diagnostic::error(
                format!(
                    "continuation references undefined agent `{}`",
                    prefix.target
                ),
                Some(prefix.pos.pos()),
            ));
        }
        check_destination(model, prefix, space, diags);
        check_expr(model, &prefix.action.value, Some(agent), prefix, space, diags);
        if let ActionKind::Influence(set) = &prefix.action.kind {
            check_location_set(set, space, &prefix.action.name, diags, prefix.pos.pos());
        }
        if prefix.action.kind == ActionKind::Passive {
            if let RateExpr::Num(v) = prefix.action.value {
                if !(0.0..=1.0).contains(&v) {
                    diags.push(Diagnostic::error(
                        format!(
                            "passive action `{}` has probability {} outside [0,1]",
                            prefix.action.name, v
                        ),
                        Some(prefix.pos.pos()),
                    ));
                }
            }
        }
    }
}

/// `nil` only as a whole body; constant references only under a prefix.
fn check_guardedness(
    term: &ProcessTerm,
    agent: &str,
    is_whole_body: bool,
    diags: &mut Vec<Diagnostic>,
) {
    match term {
        ProcessTerm::Nil if is_whole_body => {}
        ProcessTerm::Nil => diags.push(Diagnostic::error(
            format!("`nil` may only appear as the whole body of agent `{agent}`"),
            None,
        )),
        ProcessTerm::ConstantRef { name, pos } => diags.push(Diagnostic::error(
            format!(
                "unguarded reference to `{name}` in agent `{agent}`: constant references must occur under an action prefix"
            ),
            Some(pos.pos()),
        )),
        ProcessTerm::Choice(l, r) => {
            check_guardedness(l, agent, false, diags);
            check_guardedness(r, agent, false, diags);
        }
        ProcessTerm::Prefix(_) => {}
    }
}

fn check_destination(
    model: &ModelDef,
    prefix: &Prefix,
    space: &Space,
    diags: &mut Vec<Diagnostic>,
) {
    match &prefix.destination {
        DestinationExpr::Same | DestinationExpr::New => {}
        DestinationExpr::NewOuter => {
            if !matches!(space.decl, crate::space::SpaceDecl::Nested { .. }) {
                diags.push(Diagnostic::error(
                    format!(
                        "`new_v` in action `{}` requires a nested space",
                        prefix.action.name
                    ),
                    Some(prefix.pos.pos()),
                ));
            }
        }
        DestinationExpr::Literal(l) => {
            if !space.contains(l) {
                diags.push(Diagnostic::error(
                    format!(
                        "destination {} of action `{}` is outside the space",
                        l, prefix.action.name
                    ),
                    Some(prefix.pos.pos()),
                ));
            }
        }
        DestinationExpr::Empirical(items) => {
            let mut const_sum = Some(0.0);
            for (l, p) in items {
                if !space.contains(l) {
                    diags.push(Diagnostic::error(
                        format!(
                            "destination {} of action `{}` is outside the space",
                            l, prefix.action.name
                        ),
                        Some(prefix.pos.pos()),
                    ));
                }
                check_params_declared(model, p, diags, prefix.pos.pos());
                match (const_sum, p) {
                    (Some(acc), RateExpr::Num(v)) => const_sum = Some(acc + v),
                    _ => const_sum = None,
                }
            }
            if let Some(sum) = const_sum {
                if (sum - 1.0).abs() > 1e-9 {
                    diags.push(Diagnostic::error(
                        format!(
                            "destination probabilities of action `{}` sum to {sum}, expected 1",
                            prefix.action.name
                        ),
                        Some(prefix.pos.pos()),
                    ));
                }
            }
        }
    }
}

fn check_location_set(
    set: &LocationSetExpr,
    space: &Space,
    action: &str,
    diags: &mut Vec<Diagnostic>,
    pos: crate::diag::Pos,
) {
    if let LocationSetExpr::ExplicitList(ls) = set {
        for l in ls {
            if !space.contains(l) {
                diags.push(Diagnostic::error(
                    format!("target location {l} of action `{action}` is outside the space"),
                    Some(pos),
                ));
            }
        }
    }
}

fn check_expr(
    model: &ModelDef,
    expr: &RateExpr,
    _agent: Option<&AgentDef>,
    prefix: &Prefix,
    space: &Space,
    diags: &mut Vec<Diagnostic>,
) {
    expr.visit(&mut |e| match e {
        RateExpr::Param(name) => {
            if !model.params.contains_key(name) {
                diags.push(Diagnostic::error(
                    format!(
                        "undeclared parameter `{name}` in action `{}`",
                        prefix.action.name
                    ),
                    Some(prefix.pos.pos()),
                ));
            }
        }
        RateExpr::Count { agent, loc } => {
            if model.agent(agent).is_none() {
                diags.push(Diagnostic::error(
                    format!(
                        "count term references undefined agent `{agent}` in action `{}`",
                        prefix.action.name
                    ),
                    Some(prefix.pos.pos()),
                ));
            }
            if let CountLoc::Lit(l) = loc {
                if !space.contains(l) {
                    diags.push(Diagnostic::error(
                        format!(
                            "count location {l} in action `{}` is outside the space",
                            prefix.action.name
                        ),
                        Some(prefix.pos.pos()),
                    ));
                }
            }
        }
        _ => {}
    });
}

fn check_params_declared(
    model: &ModelDef,
    expr: &RateExpr,
    diags: &mut Vec<Diagnostic>,
    pos: crate::diag::Pos,
) {
    expr.visit(&mut |e| {
        if let RateExpr::Param(name) = e {
            if !model.params.contains_key(name) {
                diags.push(Diagnostic::error(
                    format!("undeclared parameter `{name}`"),
                    Some(pos),
                ));
            }
        }
    });
}

fn check_env(model: &ModelDef, env: &EnvDef, space: &Space, diags: &mut Vec<Diagnostic>) {
    check_location_set(&env.target, space, &env.action, diags, env.pos.pos());
    env.rate.visit(&mut |e| match e {
        RateExpr::Param(name) => {
            if !model.params.contains_key(name) {
                diags.push(Diagnostic::error(
                    format!(
                        "undeclared parameter `{name}` in environment factor `{}`",
                        env.name
                    ),
                    Some(env.pos.pos()),
                ));
            }
        }
        RateExpr::Count { agent, loc } => {
            if model.agent(agent).is_none() {
                diags.push(Diagnostic::error(
                    format!(
                        "count term references undefined agent `{agent}` in environment factor `{}`",
                        env.name
                    ),
                    Some(env.pos.pos()),
                ));
            }
            if let CountLoc::Lit(l) = loc {
                if !space.contains(l) {
                    diags.push(Diagnostic::error(
                        format!(
                            "count location {l} in environment factor `{}` is outside the space",
                            env.name
                        ),
                        Some(env.pos.pos()),
                    ));
                }
            }
        }
        _ => {}
    });
}

fn check_init(model: &ModelDef, space: &Space, diags: &mut Vec<Diagnostic>) {
    for entry in &model.init {
        let is_agent = model.agent(&entry.name).is_some();
        let is_env = model.env_factor(&entry.name).is_some();
        if !is_agent && !is_env {
            diags.push(Diagnostic::error(
                format!("init references undefined name `{}`", entry.name),
                Some(entry.pos.pos()),
            ));
            continue;
        }
        match (&entry.location, is_agent) {
            (Some(l), true) => {
                if !space.contains(l) {
                    diags.push(Diagnostic::error(
                        format!("init location {l} of `{}` is outside the space", entry.name),
                        Some(entry.pos.pos()),
                    ));
                }
            }
            (None, true) => diags.push(Diagnostic::error(
                format!("init entry for agent `{}` needs a location", entry.name),
                Some(entry.pos.pos()),
            )),
            (Some(_), false) => diags.push(Diagnostic::error(
                format!(
                    "environment factor `{}` has no location attribute",
                    entry.name
                ),
                Some(entry.pos.pos()),
            )),
            (None, false) => {}
        }
    }
}

/// Passive actions must have an active (agent or environment) counterpart
/// somewhere in the model and vice versa; a mismatch cannot ever synchronise,
/// which is almost certainly a modelling mistake, so it is reported as a
/// warning. An agent mixing active and passive forms of one action is legal
/// but unusual, also a warning.
fn check_action_pairing(model: &ModelDef, diags: &mut Vec<Diagnostic>) {
    let mut passive: BTreeSet<&str> = BTreeSet::new();
    let mut active: BTreeSet<&str> = BTreeSet::new();
    for agent in &model.agents {
        let mut own_passive: BTreeSet<&str> = BTreeSet::new();
        let mut own_active: BTreeSet<&str> = BTreeSet::new();
        for p in agent.body.prefixes() {
            match &p.action.kind {
                ActionKind::Passive => {
                    passive.insert(&p.action.name);
                    own_passive.insert(&p.action.name);
                }
                ActionKind::Influence(_) => {
                    active.insert(&p.action.name);
                    own_active.insert(&p.action.name);
                }
                ActionKind::NoInfluence => {}
            }
        }
        for name in own_passive.intersection(&own_active) {
            diags.push(Diagnostic::warning(
                format!(
                    "agent `{}` has both active and passive forms of action `{name}`",
                    agent.name
                ),
                Some(agent.pos.pos()),
            ));
        }
    }
    for env in &model.env_factors {
        active.insert(&env.action);
    }
    for name in passive.difference(&active) {
        diags.push(Diagnostic::warning(
            format!("passive action `{name}` has no active counterpart; it can never fire"),
            None,
        ));
    }
    for name in active.difference(&passive) {
        diags.push(Diagnostic::warning(
            format!("influence action `{name}` has no passive counterpart; it can never fire"),
            None,
        ));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_model;

    const SI: &str = "
param b = 0.1; param dS = 0.05; param dI = 0.1;
param mS = 0.5; param mI = 0.5; param c = 0.4; param p = 0.6;
space line(2);
agent S(l) = (birth, b) up S(l) + (deathS, dS) down S(l)
           + (moveS, mS) . S(new(l)) + <-(contact, p) . I(l);
agent I(l) = (deathI, dI) down I(l) + (moveI, mI) . I(new(l))
           + ->{l}(contact, c) . I(l);
init = S(1)[2] | S(2)[1] | I(1)[1];
";

    #[test]
    fn si_model_validates_cleanly() {
        let m = parse_model(SI).unwrap();
        assert_eq!(validate(&m), vec![]);
    }

    #[test]
    fn init_outside_space_is_an_error() {
        let m = parse_model(&SI.replace("I(1)[1]", "I(3)[1]")).unwrap();
        let diags = validate(&m);
        assert!(diags
            .iter()
            .any(|d| d.is_error() && d.message.contains("outside the space")));
    }

    #[test]
    fn unmatched_passive_action_is_a_warning() {
        // Delete I's active contact prefix: S's passive contact can never pair.
        let src = SI.replace("+ ->{l}(contact, c) . I(l)", "");
        let m = parse_model(&src).unwrap();
        let diags = validate(&m);
        assert!(diags.iter().any(|d| !d.is_error()
            && d.message.contains("passive action `contact` has no active counterpart")));
        assert!(diags.iter().all(|d| !d.is_error()));
    }

    #[test]
    fn undeclared_parameter_is_an_error() {
        let src = SI.replace("param c = 0.4;", "");
        let m = parse_model(&src).unwrap();
        let diags = validate(&m);
        assert!(diags
            .iter()
            .any(|d| d.is_error() && d.message.contains("undeclared parameter `c`")));
    }

    #[test]
    fn unguarded_constant_reference_is_an_error() {
        let src = "space line(1);\nagent A(l) = B(l);\nagent B(l) = (a, 1.0) . A(l);\ninit = A(1);";
        let m = parse_model(src).unwrap();
        let diags = validate(&m);
        assert!(diags
            .iter()
            .any(|d| d.is_error() && d.message.contains("unguarded reference")));
    }

    #[test]
    fn arity_mismatch_is_an_error() {
        let src = "space grid2d(2,2);\nagent A(l) = (a, 1.0) . A(l);\ninit = A((0,0));";
        let m = parse_model(src).unwrap();
        let diags = validate(&m);
        assert!(diags
            .iter()
            .any(|d| d.is_error() && d.message.contains("location coordinates")));
    }

    #[test]
    fn undefined_continuation_is_an_error() {
        let src = "space line(1);\nagent A(l) = (a, 1.0) . Z(l);\ninit = A(1);";
        let m = parse_model(src).unwrap();
        let diags = validate(&m);
        assert!(diags
            .iter()
            .any(|d| d.is_error() && d.message.contains("undefined agent `Z`")));
    }
}
