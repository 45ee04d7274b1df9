//! Operational semantics over congruence-normal population states.
//!
//! A state stores one count per (agent state, location) pair plus a
//! multiset of environment factors; parallel compositions that differ only
//! in presentation collapse to the same vector. From a state the engine
//! derives every enabled aggregate transition together with its label
//! `(mode, influence, action, value, location)` and rate:
//!
//! * a no-influence prefix of an agent state with count `n` fires at
//!   `n * r`, split over the destination distribution for movements;
//! * an active influence prefix pairs with every matching passive prefix
//!   inside its target set at `n * m * r * p` (mass action over
//!   individual pairs: when active and passive are the same population the
//!   pair count is `n * (n - 1)`);
//! * environment factors pair with passive prefixes at `k * m * r * p` and
//!   are never changed themselves;
//! * no-update branches (`r * (1 - p)`) and unpaired influence firings are
//!   self-loops of the jump chain and are not emitted (the individual-level
//!   oracle in [`individual_lts`] retains the no-update bookkeeping).
//!
//! Rates are always evaluated against the pre-transition state.

mod oracle;

pub use oracle::{individual_lts, IndividualEdge, IndividualLts, OracleError};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::ast::{ActionKind, DestinationExpr, LocationSetExpr, Mode, ModelDef, ProcessTerm};
use crate::diag::Diagnostic;
use crate::expr::{self, CountLoc, EvalError, ExprEnv, RateExpr};
use crate::space::{build_space, eval_destination, DestinationError, Location, Space};

/// Index of an (agent state, location) pair in the stable series order:
/// agent states in definition order, locations in space order.
pub type SeriesId = usize;

/// Engine switches. `unpaired_influence_fires` enables the permissive
/// reading in which an active influence prefix with no passive partner
/// anywhere in its target set fires alone like a no-influence action;
/// by default such prefixes are disabled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EngineOptions {
    pub unpaired_influence_fires: bool,
}

/// One prefix of an agent definition, with names resolved.
#[derive(Debug, Clone)]
pub struct CompiledPrefix {
    pub action: String,
    pub kind: ActionKind,
    pub mode: Mode,
    pub value: RateExpr,
    /// Agent-state index the prefix continues as.
    pub target: usize,
    pub destination: DestinationExpr,
}

#[derive(Debug, Clone)]
struct CompiledEnv {
    action: String,
    target: LocationSetExpr,
    rate: RateExpr,
}

/// A validated model lowered for transition derivation.
#[derive(Debug, Clone)]
pub struct CompiledModel {
    pub params: BTreeMap<String, f64>,
    pub space: Space,
    pub options: EngineOptions,
    agent_names: Vec<String>,
    env_names: Vec<String>,
    prefixes: Vec<Vec<CompiledPrefix>>,
    envs: Vec<CompiledEnv>,
    /// action name -> (agent index, prefix index) of passive prefixes
    passive_index: BTreeMap<String, Vec<(usize, usize)>>,
    init_counts: Vec<u64>,
    init_env: Vec<u64>,
}

/// Population state: counts per series plus the environment multiset.
/// Zero entries are never distinguished from absent ones, so this vector is
/// the congruence-normal form of a parallel composition.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SystemState {
    counts: Vec<u64>,
    env: Vec<u64>,
}

impl SystemState {
    pub fn count(&self, series: SeriesId) -> u64 {
        self.counts[series]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn env_counts(&self) -> &[u64] {
        &self.env
    }

    /// Non-zero entries, in series order.
    pub fn iter_nonzero(&self) -> impl Iterator<Item = (SeriesId, u64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, c)| **c > 0)
            .map(|(i, c)| (i, *c))
    }

    pub fn total_agents(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Net population effect of a transition: signed change per series,
/// sorted by series id, no zero entries.
pub type Delta = Vec<(SeriesId, i64)>;

/// Label mode: the population effect of the initiator, or of the
/// (active, passive) pair for influence transitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionMode {
    Solo(Mode),
    Pair(Mode, Mode),
}

impl TransitionMode {
    /// Net agent-count change implied by the mode.
    pub fn net_change(&self) -> i64 {
        match self {
            TransitionMode::Solo(m) => m.net_change(),
            TransitionMode::Pair(a, b) => a.net_change() + b.net_change(),
        }
    }
}

impl std::fmt::Display for TransitionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransitionMode::Solo(m) => f.write_str(m.token()),
            // Keep-Keep pairs show as plain `.` like solo state changes.
            TransitionMode::Pair(Mode::Keep, Mode::Keep) => f.write_str("."),
            TransitionMode::Pair(a, b) => write!(f, "{}+{}", a.token(), b.token()),
        }
    }
}

/// Label influence entry: no influence, a resolved target set, or passive.
#[derive(Debug, Clone, PartialEq)]
pub enum InfluenceLabel {
    None,
    Targets(Vec<Location>),
    All,
    Passive,
}

impl std::fmt::Display for InfluenceLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InfluenceLabel::None => f.write_str("-"),
            InfluenceLabel::All => f.write_str("all"),
            InfluenceLabel::Passive => f.write_str("<-"),
            InfluenceLabel::Targets(ls) => {
                f.write_str("{")?;
                for (i, l) in ls.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{l}")?;
                }
                f.write_str("}")
            }
        }
    }
}

/// The 5-tuple transition label.
///
/// `location` is the location the action is felt at (the influenced agent's
/// location for pairs); it is `None` exactly for environment-initiated
/// actions that updated no agent. `value` is the per-individual value: the
/// rate `r`, the movement rate `r * p_i`, or the combined `r * p`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionLabel {
    pub mode: TransitionMode,
    pub influence: InfluenceLabel,
    pub action: String,
    pub value: f64,
    pub location: Option<Location>,
}

/// An aggregate transition: label, total rate (individual value times
/// multiplicities) and the state delta.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateTransition {
    pub label: TransitionLabel,
    pub rate: f64,
    pub delta: Delta,
}

#[derive(Debug, Error)]
pub enum SemanticsError {
    #[error("evaluating rate of `{action}`{}: {source}", fmt_at(.location))]
    Eval {
        action: String,
        location: Option<Location>,
        source: EvalError,
    },
    #[error("destination of `{action}` at {location}: {source}")]
    Destination {
        action: String,
        location: Location,
        source: DestinationError,
    },
    #[error("applying `{action}` drives the count of {series} negative")]
    NegativeCount { action: String, series: String },
}

fn fmt_at(loc: &Option<Location>) -> String {
    match loc {
        Some(l) => format!(" at {l}"),
        None => String::new(),
    }
}

/// Aggregate rate of a solo channel: `count * rate * destination-probability`.
#[inline]
pub fn solo_rate(count: f64, rate: f64, dest_prob: f64) -> f64 {
    count * rate * dest_prob
}

/// Aggregate rate of an influence pair channel:
/// `n_active * n_passive * r * p`.
#[inline]
pub fn pair_rate(n_active: f64, n_passive: f64, rate: f64, prob: f64) -> f64 {
    n_active * n_passive * rate * prob
}

/// Count source for expression evaluation: an integer population state or a
/// continuous vector (fluid view). Both index the same series order, so the
/// two analyses share one arithmetic path.
#[derive(Clone, Copy)]
pub enum Counts<'a> {
    State(&'a SystemState),
    Continuous(&'a [f64]),
}

impl Counts<'_> {
    fn get(&self, series: SeriesId) -> f64 {
        match self {
            Counts::State(s) => s.counts[series] as f64,
            Counts::Continuous(x) => x[series],
        }
    }
}

/// Expression environment over a model and a count source.
pub struct EvalCtx<'a> {
    pub model: &'a CompiledModel,
    pub counts: Counts<'a>,
    pub here: Option<Location>,
}

impl ExprEnv for EvalCtx<'_> {
    fn param(&self, name: &str) -> Option<f64> {
        self.model.params.get(name).copied()
    }

    fn count(&self, agent: &str, loc: &CountLoc) -> Result<f64, EvalError> {
        let a = self
            .model
            .agent_index(agent)
            .ok_or_else(|| EvalError::UnknownAgent(agent.to_string()))?;
        let l = match loc {
            CountLoc::Here => self.here.ok_or(EvalError::HereUnavailable)?,
            CountLoc::Lit(l) => *l,
        };
        // A location outside the space holds no agents.
        match self.model.space.index_of(&l) {
            Some(li) => Ok(self.counts.get(self.model.series(a, li))),
            None => Ok(0.0),
        }
    }
}

impl CompiledModel {
    /// Validate and lower a model. Returns the validator's findings if any
    /// of them is an error.
    pub fn compile(model: &ModelDef, options: EngineOptions) -> Result<Self, Vec<Diagnostic>> {
        let diags = crate::validate::validate(model);
        if diags.iter().any(Diagnostic::is_error) {
            return Err(diags);
        }
        let space = build_space(
            model.space.decl.clone(),
            model.space.neighbourhood,
            model.space.entry,
        )
        .expect("validated space builds");

        let agent_names: Vec<String> = model.agents.iter().map(|a| a.name.clone()).collect();
        let env_names: Vec<String> = model.env_factors.iter().map(|e| e.name.clone()).collect();
        let agent_index = |name: &str| agent_names.iter().position(|n| n == name);

        let mut prefixes = Vec::with_capacity(model.agents.len());
        let mut passive_index: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
        for (a_idx, agent) in model.agents.iter().enumerate() {
            let mut compiled = Vec::new();
            if !matches!(agent.body, ProcessTerm::Nil) {
                for p in agent.body.prefixes() {
                    let target = agent_index(&p.target).expect("validated continuation");
                    if p.action.kind == ActionKind::Passive {
                        passive_index
                            .entry(p.action.name.clone())
                            .or_default()
                            .push((a_idx, compiled.len()));
                    }
                    compiled.push(CompiledPrefix {
                        action: p.action.name.clone(),
                        kind: p.action.kind.clone(),
                        mode: p.action.mode,
                        value: p.action.value.clone(),
                        target,
                        destination: p.destination.clone(),
                    });
                }
            }
            prefixes.push(compiled);
        }

        let envs = model
            .env_factors
            .iter()
            .map(|e| CompiledEnv {
                action: e.action.clone(),
                target: e.target.clone(),
                rate: e.rate.clone(),
            })
            .collect();

        let n_series = agent_names.len() * space.len();
        let mut init_counts = vec![0u64; n_series];
        let mut init_env = vec![0u64; env_names.len()];
        for entry in &model.init {
            if let Some(a) = agent_index(&entry.name) {
                let li = space
                    .index_of(entry.location.as_ref().expect("validated init location"))
                    .expect("validated init location");
                init_counts[a * space.len() + li] += entry.multiplicity;
            } else {
                let e = env_names
                    .iter()
                    .position(|n| n == &entry.name)
                    .expect("validated init name");
                init_env[e] += entry.multiplicity;
            }
        }

        Ok(CompiledModel {
            params: model.params.clone(),
            space,
            options,
            agent_names,
            env_names,
            prefixes,
            envs,
            passive_index,
            init_counts,
            init_env,
        })
    }

    pub fn agent_names(&self) -> &[String] {
        &self.agent_names
    }

    pub fn env_names(&self) -> &[String] {
        &self.env_names
    }

    pub fn agent_index(&self, name: &str) -> Option<usize> {
        self.agent_names.iter().position(|n| n == name)
    }

    pub fn prefixes_of(&self, agent: usize) -> &[CompiledPrefix] {
        &self.prefixes[agent]
    }

    /// Action name and target set of an environment factor.
    pub fn env_signature(&self, env: usize) -> (&str, &LocationSetExpr) {
        (&self.envs[env].action, &self.envs[env].target)
    }

    pub fn env_rate(&self, env: usize) -> &RateExpr {
        &self.envs[env].rate
    }

    pub fn n_series(&self) -> usize {
        self.agent_names.len() * self.space.len()
    }

    #[inline]
    pub fn series(&self, agent: usize, loc_index: usize) -> SeriesId {
        agent * self.space.len() + loc_index
    }

    pub fn series_agent(&self, series: SeriesId) -> usize {
        series / self.space.len()
    }

    pub fn series_location(&self, series: SeriesId) -> Location {
        self.space.locations()[series % self.space.len()]
    }

    /// `Agent@location` name of a series, e.g. `S@1` or `S@(0,1)`.
    pub fn series_name(&self, series: SeriesId) -> String {
        format!(
            "{}@{}",
            self.agent_names[self.series_agent(series)],
            self.series_location(series)
        )
    }

    pub fn series_names(&self) -> Vec<String> {
        (0..self.n_series()).map(|s| self.series_name(s)).collect()
    }

    /// The initial configuration, congruence-normalised: duplicate init
    /// entries sum, and the environment multiset is populated.
    pub fn initial_state(&self) -> SystemState {
        SystemState {
            counts: self.init_counts.clone(),
            env: self.init_env.clone(),
        }
    }

    /// Build a state from `(agent, location, count)` triples. Duplicates sum.
    pub fn state_from_counts(
        &self,
        entries: &[(&str, Location, u64)],
        env: &[(&str, u64)],
    ) -> SystemState {
        let mut counts = vec![0u64; self.n_series()];
        for (name, loc, c) in entries {
            let a = self.agent_index(name).expect("known agent");
            let li = self.space.index_of(loc).expect("location in space");
            counts[self.series(a, li)] += c;
        }
        let mut env_counts = vec![0u64; self.env_names.len()];
        for (name, c) in env {
            let e = self
                .env_names
                .iter()
                .position(|n| n == name)
                .expect("known env factor");
            env_counts[e] += c;
        }
        SystemState {
            counts,
            env: env_counts,
        }
    }

    /// `{S@1:2, S@2:1, I@1:1}` rendering of a state.
    pub fn format_state(&self, state: &SystemState) -> String {
        let mut s = String::from("{");
        let mut first = true;
        for (series, c) in state.iter_nonzero() {
            if !first {
                s.push_str(", ");
            }
            first = false;
            let _ = write!(s, "{}:{}", self.series_name(series), c);
        }
        for (e, c) in state.env.iter().enumerate() {
            if *c > 0 {
                if !first {
                    s.push_str(", ");
                }
                first = false;
                let _ = write!(s, "{}:{}", self.env_names[e], c);
            }
        }
        s.push('}');
        s
    }

    /// Resolve a target set at an acting location. `Here` is the actor's
    /// own location; `all` is the whole location set.
    pub fn resolve_target_set(
        &self,
        set: &LocationSetExpr,
        here: Option<Location>,
    ) -> Vec<Location> {
        match set {
            LocationSetExpr::Here => here.into_iter().collect(),
            LocationSetExpr::All => self.space.locations().to_vec(),
            LocationSetExpr::ExplicitList(ls) => ls.clone(),
        }
    }

    fn influence_label(&self, set: &LocationSetExpr, here: Option<Location>) -> InfluenceLabel {
        match set {
            LocationSetExpr::All => InfluenceLabel::All,
            _ => InfluenceLabel::Targets(self.resolve_target_set(set, here)),
        }
    }

    /// The destination distribution of a prefix continuation at `here`,
    /// evaluated against `state`.
    pub fn destination_distribution(
        &self,
        prefix: &CompiledPrefix,
        here: Location,
        state: &SystemState,
    ) -> Result<Vec<(Location, f64)>, SemanticsError> {
        self.destination_distribution_with(prefix, here, Counts::State(state))
    }

    /// As [`CompiledModel::destination_distribution`], over any count
    /// source (the fluid view passes continuous counts).
    pub fn destination_distribution_with(
        &self,
        prefix: &CompiledPrefix,
        here: Location,
        counts: Counts<'_>,
    ) -> Result<Vec<(Location, f64)>, SemanticsError> {
        // A destroyed agent's continuation is discarded; the movement
        // distribution is irrelevant.
        if prefix.mode == Mode::Destroy {
            return Ok(vec![(here, 1.0)]);
        }
        let ctx = EvalCtx {
            model: self,
            counts,
            here: Some(here),
        };
        let dist = eval_destination(&self.space, &prefix.destination, here, &mut |e| {
            expr::eval_probability(e, &ctx)
        })
        .map_err(|source| SemanticsError::Destination {
            action: prefix.action.clone(),
            location: here,
            source,
        })?;
        Ok(dist.entries().to_vec())
    }

    /// Delta contribution of one participant, before merging.
    pub(crate) fn participant_delta(
        &self,
        out: &mut Vec<(SeriesId, i64)>,
        agent: usize,
        loc_index: usize,
        mode: Mode,
        target: usize,
        dest_index: usize,
    ) {
        match mode {
            Mode::Keep => {
                out.push((self.series(agent, loc_index), -1));
                out.push((self.series(target, dest_index), 1));
            }
            Mode::Create => out.push((self.series(target, dest_index), 1)),
            Mode::Destroy => out.push((self.series(agent, loc_index), -1)),
        }
    }

    /// Every enabled aggregate transition of `state`, in a deterministic
    /// order: agents in definition order, locations in space order, prefixes
    /// in body order, destinations in location order, then passive partners,
    /// then environment factors.
    pub fn enabled_transitions(
        &self,
        state: &SystemState,
    ) -> Result<Vec<AggregateTransition>, SemanticsError> {
        let mut out = Vec::new();

        for a_idx in 0..self.agent_names.len() {
            for li in 0..self.space.len() {
                let n = state.counts[self.series(a_idx, li)];
                if n == 0 {
                    continue;
                }
                let here = self.space.locations()[li];
                for prefix in &self.prefixes[a_idx] {
                    match &prefix.kind {
                        ActionKind::NoInfluence => {
                            self.solo_transitions(
                                state, a_idx, li, here, n, prefix, None, &mut out,
                            )?;
                        }
                        ActionKind::Influence(set) => {
                            self.influence_transitions(
                                state, a_idx, li, here, n, prefix, set, &mut out,
                            )?;
                        }
                        ActionKind::Passive => {}
                    }
                }
            }
        }

        for (e_idx, env) in self.envs.iter().enumerate() {
            let k = state.env[e_idx];
            if k == 0 {
                continue;
            }
            self.env_transitions(state, env, k, &mut out)?;
        }

        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn solo_transitions(
        &self,
        state: &SystemState,
        a_idx: usize,
        li: usize,
        here: Location,
        n: u64,
        prefix: &CompiledPrefix,
        influence: Option<&LocationSetExpr>,
        out: &mut Vec<AggregateTransition>,
    ) -> Result<(), SemanticsError> {
        let ctx = EvalCtx {
            model: self,
            counts: Counts::State(state),
            here: Some(here),
        };
        let r = expr::eval(&prefix.value, &ctx).map_err(|source| SemanticsError::Eval {
            action: prefix.action.clone(),
            location: Some(here),
            source,
        })?;
        if r == 0.0 {
            return Ok(());
        }
        let dist = self.destination_distribution(prefix, here, state)?;
        for (dest, p) in dist {
            let di = self.space.index_of(&dest).expect("destination in space");
            let mut delta = Vec::with_capacity(2);
            self.participant_delta(&mut delta, a_idx, li, prefix.mode, prefix.target, di);
            let delta = normalize_delta(delta);
            if delta.is_empty() {
                continue; // self-loop: does not alter the jump chain
            }
            let rate = solo_rate(n as f64, r, p);
            if rate == 0.0 {
                continue;
            }
            out.push(AggregateTransition {
                label: TransitionLabel {
                    mode: TransitionMode::Solo(prefix.mode),
                    influence: match influence {
                        Some(set) => self.influence_label(set, Some(here)),
                        None => InfluenceLabel::None,
                    },
                    action: prefix.action.clone(),
                    value: r * p,
                    location: Some(here),
                },
                rate,
                delta,
            });
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn influence_transitions(
        &self,
        state: &SystemState,
        a_idx: usize,
        li: usize,
        here: Location,
        n: u64,
        prefix: &CompiledPrefix,
        set: &LocationSetExpr,
        out: &mut Vec<AggregateTransition>,
    ) -> Result<(), SemanticsError> {
        let targets = self.resolve_target_set(set, Some(here));
        let ctx = EvalCtx {
            model: self,
            counts: Counts::State(state),
            here: Some(here),
        };
        let r = expr::eval(&prefix.value, &ctx).map_err(|source| SemanticsError::Eval {
            action: prefix.action.clone(),
            location: Some(here),
            source,
        })?;
        if r == 0.0 {
            return Ok(());
        }
        let active_dist = self.destination_distribution(prefix, here, state)?;

        let mut paired_any = false;
        if let Some(passives) = self.passive_index.get(&prefix.action) {
            for &(b_idx, q_idx) in passives {
                let passive = &self.prefixes[b_idx][q_idx];
                for l_q in &targets {
                    let Some(qi) = self.space.index_of(l_q) else {
                        continue;
                    };
                    let m = state.counts[self.series(b_idx, qi)];
                    if m == 0 {
                        continue;
                    }
                    // An individual cannot influence itself: within one
                    // population there are n * (n - 1) ordered pairs.
                    let m_eff = if b_idx == a_idx && qi == li { m - 1 } else { m };
                    if m_eff == 0 {
                        continue;
                    }
                    let qctx = EvalCtx {
                        model: self,
                        counts: Counts::State(state),
                        here: Some(*l_q),
                    };
                    let p = expr::eval_probability(&passive.value, &qctx).map_err(|source| {
                        SemanticsError::Eval {
                            action: passive.action.clone(),
                            location: Some(*l_q),
                            source,
                        }
                    })?;
                    if p > 0.0 {
                        paired_any = true;
                    }
                    let passive_dist = self.destination_distribution(passive, *l_q, state)?;
                    for (a_dest, ap) in &active_dist {
                        let adi = self.space.index_of(a_dest).expect("destination in space");
                        for (b_dest, bp) in &passive_dist {
                            let bdi = self.space.index_of(b_dest).expect("destination in space");
                            let mut delta = Vec::with_capacity(4);
                            self.participant_delta(
                                &mut delta,
                                a_idx,
                                li,
                                prefix.mode,
                                prefix.target,
                                adi,
                            );
                            self.participant_delta(
                                &mut delta, b_idx, qi, passive.mode, passive.target, bdi,
                            );
                            let delta = normalize_delta(delta);
                            let rate = pair_rate(n as f64, m_eff as f64, r, p) * ap * bp;
                            if delta.is_empty() || rate == 0.0 {
                                continue;
                            }
                            out.push(AggregateTransition {
                                label: TransitionLabel {
                                    mode: TransitionMode::Pair(prefix.mode, passive.mode),
                                    influence: self.influence_label(set, Some(here)),
                                    action: prefix.action.clone(),
                                    value: r * p * ap * bp,
                                    location: Some(*l_q),
                                },
                                rate,
                                delta,
                            });
                        }
                    }
                }
            }
        }

        // Permissive reading behind the engine option: with no partner in
        // range the prefix fires alone, once, like a no-influence action.
        if self.options.unpaired_influence_fires && !paired_any {
            self.solo_transitions(state, a_idx, li, here, n, prefix, Some(set), out)?;
        }
        Ok(())
    }

    fn env_transitions(
        &self,
        state: &SystemState,
        env: &CompiledEnv,
        k: u64,
        out: &mut Vec<AggregateTransition>,
    ) -> Result<(), SemanticsError> {
        let ctx = EvalCtx {
            model: self,
            counts: Counts::State(state),
            here: None,
        };
        let r = expr::eval(&env.rate, &ctx).map_err(|source| SemanticsError::Eval {
            action: env.action.clone(),
            location: None,
            source,
        })?;
        if r == 0.0 {
            return Ok(());
        }
        let targets = self.resolve_target_set(&env.target, None);
        let Some(passives) = self.passive_index.get(&env.action) else {
            return Ok(());
        };
        for &(b_idx, q_idx) in passives {
            let passive = &self.prefixes[b_idx][q_idx];
            for l_q in &targets {
                let Some(qi) = self.space.index_of(l_q) else {
                    continue;
                };
                let m = state.counts[self.series(b_idx, qi)];
                if m == 0 {
                    continue;
                }
                let qctx = EvalCtx {
                    model: self,
                    counts: Counts::State(state),
                    here: Some(*l_q),
                };
                let p = expr::eval_probability(&passive.value, &qctx).map_err(|source| {
                    SemanticsError::Eval {
                        action: passive.action.clone(),
                        location: Some(*l_q),
                        source,
                    }
                })?;
                let passive_dist = self.destination_distribution(passive, *l_q, state)?;
                for (b_dest, bp) in &passive_dist {
                    let bdi = self.space.index_of(b_dest).expect("destination in space");
                    let mut delta = Vec::with_capacity(2);
                    self.participant_delta(
                        &mut delta, b_idx, qi, passive.mode, passive.target, bdi,
                    );
                    let delta = normalize_delta(delta);
                    let rate = pair_rate(k as f64, m as f64, r, p) * bp;
                    if delta.is_empty() || rate == 0.0 {
                        continue;
                    }
                    out.push(AggregateTransition {
                        label: TransitionLabel {
                            mode: TransitionMode::Pair(Mode::Keep, passive.mode),
                            influence: self.influence_label(&env.target, None),
                            action: env.action.clone(),
                            value: r * p * bp,
                            location: Some(*l_q),
                        },
                        rate,
                        delta,
                    });
                }
            }
        }
        Ok(())
    }

    /// Apply a transition's delta, returning the successor state. The
    /// environment multiset never changes.
    pub fn apply_transition(
        &self,
        state: &SystemState,
        t: &AggregateTransition,
    ) -> Result<SystemState, SemanticsError> {
        let mut counts = state.counts.clone();
        for (series, d) in &t.delta {
            let c = counts[*series] as i64 + d;
            if c < 0 {
                return Err(SemanticsError::NegativeCount {
                    action: t.label.action.clone(),
                    series: self.series_name(*series),
                });
            }
            counts[*series] = c as u64;
        }
        Ok(SystemState {
            counts,
            env: state.env.clone(),
        })
    }

    /// Render a transition list as a TSV table:
    /// `action  mode  influence  location  rate  delta`.
    pub fn transition_table(&self, transitions: &[AggregateTransition]) -> String {
        let mut s = String::from("action\tmode\tinfluence\tlocation\trate\tdelta\n");
        for t in transitions {
            let delta = t
                .delta
                .iter()
                .map(|(series, d)| format!("{}:{:+}", self.series_name(*series), d))
                .collect::<Vec<_>>()
                .join(" ");
            let loc = match t.label.location {
                Some(l) => l.to_string(),
                None => "-".to_string(),
            };
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}",
                t.label.action, t.label.mode, t.label.influence, loc, t.rate, delta
            );
        }
        s
    }
}

/// Merge duplicate series, drop zeros, sort by series id.
pub(crate) fn normalize_delta(raw: Vec<(SeriesId, i64)>) -> Delta {
    let mut map: BTreeMap<SeriesId, i64> = BTreeMap::new();
    for (s, d) in raw {
        *map.entry(s).or_insert(0) += d;
    }
    map.into_iter().filter(|(_, d)| *d != 0).collect()
}

/// Evaluate a rate expression against a state with no agent context
/// (count terms must use literal locations).
pub fn eval_rate_expr(
    model: &CompiledModel,
    expr: &RateExpr,
    state: &SystemState,
) -> Result<f64, EvalError> {
    expr::eval(
        expr,
        &EvalCtx {
            model,
            counts: Counts::State(state),
            here: None,
        },
    )
}

#[cfg(test)]
mod tests;
