//! Individual-level transition oracle.
//!
//! Expands a population state into a literal multiset of individuals and
//! applies each rule to each individual or ordered (active, passive) pair.
//! The enumeration is exponential in the population, so it is bounded and
//! meant for small states; its purpose is to verify the aggregate engine:
//! summing edge values per (action, location, delta) must reproduce every
//! aggregate rate.
//!
//! No-update branches of influence pairs are retained as bookkeeping edges
//! with value `r * (1 - p)` and an empty delta (`effective = false`); the
//! aggregate chain drops them as self-loops.

use thiserror::Error;

use crate::ast::{ActionKind, Mode};
use crate::expr::{self};
use crate::space::Location;

use super::{
    normalize_delta, AggregateTransition, CompiledModel, Counts, Delta, EvalCtx, InfluenceLabel,
    SemanticsError, SystemState, TransitionLabel, TransitionMode,
};

/// One derivation of the individual-level semantics.
#[derive(Debug, Clone)]
pub struct IndividualEdge {
    pub label: TransitionLabel,
    pub delta: Delta,
    pub target: SystemState,
    /// False for bookkeeping branches that leave the state unchanged.
    pub effective: bool,
}

/// The one-step labelled transition multigraph out of a state.
#[derive(Debug, Clone)]
pub struct IndividualLts {
    pub root: SystemState,
    pub edges: Vec<IndividualEdge>,
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("state holds {total} agents, oracle bound is {max}")]
    TooManyAgents { total: u64, max: u64 },
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
}

impl IndividualLts {
    /// Sum of `value` over effective edges with the given action, felt
    /// location and delta.
    pub fn rate_of(&self, action: &str, location: Option<Location>, delta: &Delta) -> f64 {
        self.edges
            .iter()
            .filter(|e| {
                e.effective
                    && e.label.action == action
                    && e.label.location == location
                    && &e.delta == delta
            })
            .map(|e| e.label.value)
            .sum()
    }

    /// Group effective edges by (action, location, delta) and sum values.
    pub fn aggregate_view(&self) -> Vec<(String, Option<Location>, Delta, f64)> {
        let mut grouped: Vec<(String, Option<Location>, Delta, f64)> = Vec::new();
        for e in self.edges.iter().filter(|e| e.effective) {
            match grouped.iter_mut().find(|(a, l, d, _)| {
                a == &e.label.action && l == &e.label.location && d == &e.delta
            }) {
                Some((_, _, _, sum)) => *sum += e.label.value,
                None => grouped.push((
                    e.label.action.clone(),
                    e.label.location,
                    e.delta.clone(),
                    e.label.value,
                )),
            }
        }
        grouped
    }

    /// Check every aggregate transition against the oracle sums at relative
    /// tolerance `tol`; returns mismatch descriptions.
    pub fn check_against(&self, aggregate: &[AggregateTransition], tol: f64) -> Vec<String> {
        let mut issues = Vec::new();
        let view = self.aggregate_view();
        // Aggregate channels may repeat a (action, location, delta) key
        // (duplicate prefixes); sum them before comparing.
        let mut agg: Vec<(String, Option<Location>, Delta, f64)> = Vec::new();
        for t in aggregate {
            match agg.iter_mut().find(|(a, l, d, _)| {
                a == &t.label.action && l == &t.label.location && d == &t.delta
            }) {
                Some((_, _, _, sum)) => *sum += t.rate,
                None => agg.push((
                    t.label.action.clone(),
                    t.label.location,
                    t.delta.clone(),
                    t.rate,
                )),
            }
        }
        for (action, loc, delta, rate) in &agg {
            let oracle_rate = self.rate_of(action, *loc, delta);
            let scale = rate.abs().max(oracle_rate.abs()).max(f64::MIN_POSITIVE);
            if (rate - oracle_rate).abs() / scale > tol {
                issues.push(format!(
                    "`{action}`@{loc:?}: aggregate {rate} vs oracle {oracle_rate}"
                ));
            }
        }
        for (action, loc, delta, oracle_rate) in &view {
            if !agg
                .iter()
                .any(|(a, l, d, _)| a == action && l == loc && d == delta)
            {
                issues.push(format!(
                    "`{action}`@{loc:?}: oracle rate {oracle_rate} missing from aggregate"
                ));
            }
        }
        issues
    }
}

/// Derive the one-step individual-level LTS of `state`.
pub fn individual_lts(
    model: &CompiledModel,
    state: &SystemState,
    max_agents: u64,
) -> Result<IndividualLts, OracleError> {
    let total = state.total_agents();
    if total > max_agents {
        return Err(OracleError::TooManyAgents {
            total,
            max: max_agents,
        });
    }

    // Expand into individuals, series order.
    let mut individuals: Vec<(usize, usize)> = Vec::with_capacity(total as usize);
    for (series, c) in state.iter_nonzero() {
        let a = model.series_agent(series);
        let li = series % model.space.len();
        for _ in 0..c {
            individuals.push((a, li));
        }
    }

    let mut edges = Vec::new();

    for (i, &(a_idx, li)) in individuals.iter().enumerate() {
        let here = model.space.locations()[li];
        for prefix in model.prefixes_of(a_idx) {
            let ctx = EvalCtx {
                model,
                counts: Counts::State(state),
                here: Some(here),
            };
            match &prefix.kind {
                ActionKind::NoInfluence => {
                    let r = expr::eval(&prefix.value, &ctx).map_err(|source| {
                        SemanticsError::Eval {
                            action: prefix.action.clone(),
                            location: Some(here),
                            source,
                        }
                    })?;
                    if r == 0.0 {
                        continue;
                    }
                    for (dest, pd) in model.destination_distribution(prefix, here, state)? {
                        let di = model.space.index_of(&dest).expect("destination in space");
                        let mut delta = Vec::new();
                        model.participant_delta(
                            &mut delta,
                            a_idx,
                            li,
                            prefix.mode,
                            prefix.target,
                            di,
                        );
                        let delta = normalize_delta(delta);
                        if delta.is_empty() || r * pd == 0.0 {
                            continue;
                        }
                        push_edge(
                            model,
                            state,
                            &mut edges,
                            TransitionLabel {
                                mode: TransitionMode::Solo(prefix.mode),
                                influence: InfluenceLabel::None,
                                action: prefix.action.clone(),
                                value: r * pd,
                                location: Some(here),
                            },
                            delta,
                            true,
                        )?;
                    }
                }
                ActionKind::Influence(set) => {
                    let r = expr::eval(&prefix.value, &ctx).map_err(|source| {
                        SemanticsError::Eval {
                            action: prefix.action.clone(),
                            location: Some(here),
                            source,
                        }
                    })?;
                    if r == 0.0 {
                        continue;
                    }
                    let targets = model.resolve_target_set(set, Some(here));
                    let active_dist = model.destination_distribution(prefix, here, state)?;
                    let mut partner_found = false;

                    for (j, &(b_idx, qj)) in individuals.iter().enumerate() {
                        if i == j {
                            continue; // an individual cannot influence itself
                        }
                        let l_q = model.space.locations()[qj];
                        if !targets.contains(&l_q) {
                            continue;
                        }
                        for passive in model.prefixes_of(b_idx) {
                            if passive.kind != ActionKind::Passive
                                || passive.action != prefix.action
                            {
                                continue;
                            }
                            partner_found = true;
                            let qctx = EvalCtx {
                                model,
                                counts: Counts::State(state),
                                here: Some(l_q),
                            };
                            let p = expr::eval_probability(&passive.value, &qctx).map_err(
                                |source| SemanticsError::Eval {
                                    action: passive.action.clone(),
                                    location: Some(l_q),
                                    source,
                                },
                            )?;
                            let passive_dist =
                                model.destination_distribution(passive, l_q, state)?;
                            for (a_dest, ap) in &active_dist {
                                let adi =
                                    model.space.index_of(a_dest).expect("destination in space");
                                for (b_dest, bp) in &passive_dist {
                                    let bdi = model
                                        .space
                                        .index_of(b_dest)
                                        .expect("destination in space");
                                    let mut delta = Vec::new();
                                    model.participant_delta(
                                        &mut delta,
                                        a_idx,
                                        li,
                                        prefix.mode,
                                        prefix.target,
                                        adi,
                                    );
                                    model.participant_delta(
                                        &mut delta,
                                        b_idx,
                                        qj,
                                        passive.mode,
                                        passive.target,
                                        bdi,
                                    );
                                    let delta = normalize_delta(delta);
                                    let value = r * p * ap * bp;
                                    if delta.is_empty() || value == 0.0 {
                                        continue;
                                    }
                                    push_edge(
                                        model,
                                        state,
                                        &mut edges,
                                        TransitionLabel {
                                            mode: TransitionMode::Pair(prefix.mode, passive.mode),
                                            influence: influence_label(model, set, here),
                                            action: prefix.action.clone(),
                                            value,
                                            location: Some(l_q),
                                        },
                                        delta,
                                        true,
                                    )?;
                                }
                            }
                            // No-update branch: the influence is not felt;
                            // bookkeeping self-loop with value r * (1 - p).
                            if 1.0 - p > 0.0 {
                                edges.push(IndividualEdge {
                                    label: TransitionLabel {
                                        mode: TransitionMode::Solo(prefix.mode),
                                        influence: influence_label(model, set, here),
                                        action: prefix.action.clone(),
                                        value: r * (1.0 - p),
                                        location: Some(here),
                                    },
                                    delta: Vec::new(),
                                    target: state.clone(),
                                    effective: false,
                                });
                            }
                        }
                    }

                    if model.options.unpaired_influence_fires && !partner_found {
                        for (dest, pd) in &active_dist {
                            let di = model.space.index_of(dest).expect("destination in space");
                            let mut delta = Vec::new();
                            model.participant_delta(
                                &mut delta,
                                a_idx,
                                li,
                                prefix.mode,
                                prefix.target,
                                di,
                            );
                            let delta = normalize_delta(delta);
                            if delta.is_empty() || r * pd == 0.0 {
                                continue;
                            }
                            push_edge(
                                model,
                                state,
                                &mut edges,
                                TransitionLabel {
                                    mode: TransitionMode::Solo(prefix.mode),
                                    influence: influence_label(model, set, here),
                                    action: prefix.action.clone(),
                                    value: r * pd,
                                    location: Some(here),
                                },
                                delta,
                                true,
                            )?;
                        }
                    }
                }
                ActionKind::Passive => {}
            }
        }
    }

    // Environment factors: each instance pairs with each matching passive
    // individual in range; the factor itself never changes.
    for (e_idx, env_name) in model.env_names().iter().enumerate() {
        let k = state.env_counts()[e_idx];
        if k == 0 {
            continue;
        }
        let env = &model.envs[e_idx];
        let ctx = EvalCtx {
            model,
            counts: Counts::State(state),
            here: None,
        };
        let r = expr::eval(&env.rate, &ctx).map_err(|source| SemanticsError::Eval {
            action: env.action.clone(),
            location: None,
            source,
        })?;
        if r == 0.0 {
            continue;
        }
        let targets = model.resolve_target_set(&env.target, None);
        for _instance in 0..k {
            for &(b_idx, qj) in &individuals {
                let l_q = model.space.locations()[qj];
                if !targets.contains(&l_q) {
                    continue;
                }
                for passive in model.prefixes_of(b_idx) {
                    if passive.kind != ActionKind::Passive || passive.action != env.action {
                        continue;
                    }
                    let qctx = EvalCtx {
                        model,
                        counts: Counts::State(state),
                        here: Some(l_q),
                    };
                    let p = expr::eval_probability(&passive.value, &qctx).map_err(|source| {
                        SemanticsError::Eval {
                            action: passive.action.clone(),
                            location: Some(l_q),
                            source,
                        }
                    })?;
                    let passive_dist = model.destination_distribution(passive, l_q, state)?;
                    for (b_dest, bp) in &passive_dist {
                        let bdi = model.space.index_of(b_dest).expect("destination in space");
                        let mut delta = Vec::new();
                        model.participant_delta(
                            &mut delta,
                            b_idx,
                            qj,
                            passive.mode,
                            passive.target,
                            bdi,
                        );
                        let delta = normalize_delta(delta);
                        let value = r * p * bp;
                        if delta.is_empty() || value == 0.0 {
                            continue;
                        }
                        push_edge(
                            model,
                            state,
                            &mut edges,
                            TransitionLabel {
                                mode: TransitionMode::Pair(Mode::Keep, passive.mode),
                                influence: influence_label_env(model, env),
                                action: env.action.clone(),
                                value,
                                location: Some(l_q),
                            },
                            delta,
                            true,
                        )?;
                    }
                    // Env no-update branch carries no location.
                    if 1.0 - p > 0.0 {
                        edges.push(IndividualEdge {
                            label: TransitionLabel {
                                mode: TransitionMode::Solo(Mode::Keep),
                                influence: influence_label_env(model, env),
                                action: env.action.clone(),
                                value: r * (1.0 - p),
                                location: None,
                            },
                            delta: Vec::new(),
                            target: state.clone(),
                            effective: false,
                        });
                    }
                }
            }
        }
        let _ = env_name;
    }

    Ok(IndividualLts {
        root: state.clone(),
        edges,
    })
}

fn influence_label(
    model: &CompiledModel,
    set: &crate::ast::LocationSetExpr,
    here: Location,
) -> InfluenceLabel {
    match set {
        crate::ast::LocationSetExpr::All => InfluenceLabel::All,
        _ => InfluenceLabel::Targets(model.resolve_target_set(set, Some(here))),
    }
}

fn influence_label_env(model: &CompiledModel, env: &super::CompiledEnv) -> InfluenceLabel {
    match &env.target {
        crate::ast::LocationSetExpr::All => InfluenceLabel::All,
        _ => InfluenceLabel::Targets(model.resolve_target_set(&env.target, None)),
    }
}

fn push_edge(
    model: &CompiledModel,
    state: &SystemState,
    edges: &mut Vec<IndividualEdge>,
    label: TransitionLabel,
    delta: Delta,
    effective: bool,
) -> Result<(), SemanticsError> {
    let shim = AggregateTransition {
        label: label.clone(),
        rate: label.value,
        delta: delta.clone(),
    };
    let target = model.apply_transition(state, &shim)?;
    edges.push(IndividualEdge {
        label,
        delta,
        target,
        effective,
    });
    Ok(())
}
