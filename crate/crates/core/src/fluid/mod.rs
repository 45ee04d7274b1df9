//! Fluid (mean-field) approximation: dP/dt = M x v.
//!
//! Every aggregate transition schema of the model becomes a reaction
//! channel whose rate function treats counts as continuous; the
//! stoichiometry matrix M collects the channel deltas column by column and
//! the ODE right-hand side is the matrix-vector product M x v(x). Channel
//! rate functions share the arithmetic of the stochastic engine, so at any
//! integer state a channel evaluates to exactly the aggregate transition
//! rate.

use std::fmt::Write as _;

use thiserror::Error;

use crate::ast::{ActionKind, DestinationExpr, LocationSetExpr, Mode};
use crate::expr::{self};
use crate::semantics::{
    normalize_delta, pair_rate, solo_rate, CompiledModel, Counts, Delta, EvalCtx, InfluenceLabel,
    SemanticsError, TransitionMode,
};
use crate::space::Location;

/// How a channel's rate is computed from a continuous count vector.
/// Indices reference the compiled model's prefix table.
#[derive(Debug, Clone)]
pub enum ChannelRate {
    /// `x[agent@loc] * r * p_dest`
    Solo {
        agent: usize,
        loc: usize,
        prefix: usize,
        dest: Location,
        /// Set when the channel realises an unpaired influence firing
        /// (engine option): the rate carries an indicator that no passive
        /// partner is present in the target set.
        unpaired_guard: bool,
    },
    /// `x[active] * x[passive] * r * p * pa * pb`; within one population the
    /// pair count is `x * (x - 1)`.
    Pair {
        active_agent: usize,
        active_loc: usize,
        active_prefix: usize,
        passive_agent: usize,
        passive_loc: usize,
        passive_prefix: usize,
        a_dest: Location,
        b_dest: Location,
    },
    /// `k * x[passive] * r * p * pb` with the constant environment
    /// multiplicity `k` taken from the initial configuration.
    Env {
        env: usize,
        mult: u64,
        passive_agent: usize,
        passive_loc: usize,
        passive_prefix: usize,
        b_dest: Location,
    },
}

/// One reaction channel of the fluid view.
#[derive(Debug, Clone)]
pub struct ReactionChannel {
    pub id: usize,
    pub action: String,
    pub mode: TransitionMode,
    pub influence: InfluenceLabel,
    /// Location the action is felt at.
    pub location: Option<Location>,
    pub delta: Delta,
    pub rate: ChannelRate,
}

#[derive(Debug, Error)]
pub enum OdeError {
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error("solution blew up at t = {t}: {series} is not finite")]
    BlowUp { t: f64, series: String },
}

/// Derive the full channel list: one channel per (prefix, location,
/// destination) schema and per influence pairing, independent of current
/// counts. Channels with an empty delta are omitted.
pub fn derive_channels(model: &CompiledModel) -> Result<Vec<ReactionChannel>, SemanticsError> {
    let mut out = Vec::new();
    let n_locs = model.space.len();

    for a_idx in 0..model.agent_names().len() {
        for li in 0..n_locs {
            let here = model.space.locations()[li];
            for (p_idx, prefix) in model.prefixes_of(a_idx).iter().enumerate() {
                match &prefix.kind {
                    ActionKind::NoInfluence => {
                        for dest in destination_support(model, prefix, here)? {
                            let di = model.space.index_of(&dest).expect("support in space");
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
                            if delta.is_empty() {
                                continue;
                            }
                            out.push(ReactionChannel {
                                id: out.len(),
                                action: prefix.action.clone(),
                                mode: TransitionMode::Solo(prefix.mode),
                                influence: InfluenceLabel::None,
                                location: Some(here),
                                delta,
                                rate: ChannelRate::Solo {
                                    agent: a_idx,
                                    loc: li,
                                    prefix: p_idx,
                                    dest,
                                    unpaired_guard: false,
                                },
                            });
                        }
                    }
                    ActionKind::Influence(set) => {
                        derive_influence_channels(model, a_idx, li, here, p_idx, set, &mut out)?;
                    }
                    ActionKind::Passive => {}
                }
            }
        }
    }

    let init = model.initial_state();
    for e_idx in 0..model.env_names().len() {
        let mult = init.env_counts()[e_idx];
        if mult == 0 {
            continue;
        }
        derive_env_channels(model, e_idx, mult, &mut out)?;
    }

    Ok(out)
}

fn derive_influence_channels(
    model: &CompiledModel,
    a_idx: usize,
    li: usize,
    here: Location,
    p_idx: usize,
    set: &LocationSetExpr,
    out: &mut Vec<ReactionChannel>,
) -> Result<(), SemanticsError> {
    let prefix = &model.prefixes_of(a_idx)[p_idx];
    let targets = model.resolve_target_set(set, Some(here));
    let influence = match set {
        LocationSetExpr::All => InfluenceLabel::All,
        _ => InfluenceLabel::Targets(targets.clone()),
    };
    let mut paired_possible = false;

    for b_idx in 0..model.agent_names().len() {
        for (q_idx, passive) in model.prefixes_of(b_idx).iter().enumerate() {
            if passive.kind != ActionKind::Passive || passive.action != prefix.action {
                continue;
            }
            for l_q in &targets {
                let Some(qi) = model.space.index_of(l_q) else {
                    continue;
                };
                paired_possible = true;
                for a_dest in destination_support(model, prefix, here)? {
                    let adi = model.space.index_of(&a_dest).expect("support in space");
                    for b_dest in destination_support(model, passive, *l_q)? {
                        let bdi = model.space.index_of(&b_dest).expect("support in space");
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
                            qi,
                            passive.mode,
                            passive.target,
                            bdi,
                        );
                        let delta = normalize_delta(delta);
                        if delta.is_empty() {
                            continue;
                        }
                        out.push(ReactionChannel {
                            id: out.len(),
                            action: prefix.action.clone(),
                            mode: TransitionMode::Pair(prefix.mode, passive.mode),
                            influence: influence.clone(),
                            location: Some(*l_q),
                            delta,
                            rate: ChannelRate::Pair {
                                active_agent: a_idx,
                                active_loc: li,
                                active_prefix: p_idx,
                                passive_agent: b_idx,
                                passive_loc: qi,
                                passive_prefix: q_idx,
                                a_dest,
                                b_dest,
                            },
                        });
                    }
                }
            }
        }
    }

    if model.options.unpaired_influence_fires {
        // Solo firing under the permissive option; the indicator switches it
        // off whenever a partner is present. When pairing is impossible the
        // guard is statically off.
        for dest in destination_support(model, prefix, here)? {
            let di = model.space.index_of(&dest).expect("support in space");
            let mut delta = Vec::new();
            model.participant_delta(&mut delta, a_idx, li, prefix.mode, prefix.target, di);
            let delta = normalize_delta(delta);
            if delta.is_empty() {
                continue;
            }
            out.push(ReactionChannel {
                id: out.len(),
                action: prefix.action.clone(),
                mode: TransitionMode::Solo(prefix.mode),
                influence: influence.clone(),
                location: Some(here),
                delta,
                rate: ChannelRate::Solo {
                    agent: a_idx,
                    loc: li,
                    prefix: p_idx,
                    dest,
                    unpaired_guard: paired_possible,
                },
            });
        }
    }
    Ok(())
}

fn derive_env_channels(
    model: &CompiledModel,
    e_idx: usize,
    mult: u64,
    out: &mut Vec<ReactionChannel>,
) -> Result<(), SemanticsError> {
    let (action, set) = model.env_signature(e_idx);
    let targets = model.resolve_target_set(set, None);
    let influence = match set {
        LocationSetExpr::All => InfluenceLabel::All,
        _ => InfluenceLabel::Targets(targets.clone()),
    };
    for b_idx in 0..model.agent_names().len() {
        for (q_idx, passive) in model.prefixes_of(b_idx).iter().enumerate() {
            if passive.kind != ActionKind::Passive || passive.action != action {
                continue;
            }
            for l_q in &targets {
                let Some(qi) = model.space.index_of(l_q) else {
                    continue;
                };
                for b_dest in destination_support(model, passive, *l_q)? {
                    let bdi = model.space.index_of(&b_dest).expect("support in space");
                    let mut delta = Vec::new();
                    model.participant_delta(
                        &mut delta,
                        b_idx,
                        qi,
                        passive.mode,
                        passive.target,
                        bdi,
                    );
                    let delta = normalize_delta(delta);
                    if delta.is_empty() {
                        continue;
                    }
                    out.push(ReactionChannel {
                        id: out.len(),
                        action: action.to_string(),
                        mode: TransitionMode::Pair(Mode::Keep, passive.mode),
                        influence: influence.clone(),
                        location: Some(*l_q),
                        delta,
                        rate: ChannelRate::Env {
                            env: e_idx,
                            mult,
                            passive_agent: b_idx,
                            passive_loc: qi,
                            passive_prefix: q_idx,
                            b_dest,
                        },
                    });
                }
            }
        }
    }
    Ok(())
}

/// The (state-independent) set of destinations a prefix can move to from
/// `here`.
fn destination_support(
    model: &CompiledModel,
    prefix: &crate::semantics::CompiledPrefix,
    here: Location,
) -> Result<Vec<Location>, SemanticsError> {
    if prefix.mode == Mode::Destroy {
        return Ok(vec![here]);
    }
    match &prefix.destination {
        DestinationExpr::Same => Ok(vec![here]),
        DestinationExpr::Literal(l) => Ok(vec![*l]),
        DestinationExpr::New => {
            model
                .space
                .neighbours(&here)
                .map_err(|e| SemanticsError::Destination {
                    action: prefix.action.clone(),
                    location: here,
                    source: e.into(),
                })
        }
        DestinationExpr::NewOuter => {
            let (ex, ey) = model.space.entry;
            let vs = model
                .space
                .outer_neighbours(&here)
                .map_err(|e| SemanticsError::Destination {
                    action: prefix.action.clone(),
                    location: here,
                    source: e.into(),
                })?;
            Ok(vs.into_iter().map(|v| Location::Three(ex, ey, v)).collect())
        }
        DestinationExpr::Empirical(items) => {
            let mut ls: Vec<Location> = items.iter().map(|(l, _)| *l).collect();
            ls.sort_unstable();
            ls.dedup();
            Ok(ls)
        }
    }
}

/// Probability of a particular destination under a prefix at `here`,
/// against a continuous count vector. Replays the stochastic engine's
/// distribution computation and picks one entry.
fn dest_prob(
    model: &CompiledModel,
    agent: usize,
    prefix_idx: usize,
    here: Location,
    dest: &Location,
    counts: Counts<'_>,
) -> Result<f64, SemanticsError> {
    let prefix = &model.prefixes_of(agent)[prefix_idx];
    let dist = model.destination_distribution_with(prefix, here, counts)?;
    Ok(dist
        .iter()
        .find(|(l, _)| l == dest)
        .map(|(_, p)| *p)
        .unwrap_or(0.0))
}

impl ReactionChannel {
    /// Evaluate the channel's rate function at a continuous count vector.
    pub fn rate_at(&self, model: &CompiledModel, x: &[f64]) -> Result<f64, SemanticsError> {
        let counts = Counts::Continuous(x);
        match &self.rate {
            ChannelRate::Solo {
                agent,
                loc,
                prefix,
                dest,
                unpaired_guard,
            } => {
                let cp = &model.prefixes_of(*agent)[*prefix];
                let here = model.space.locations()[*loc];
                if *unpaired_guard && partner_mass(model, *agent, *loc, cp, x) > 0.0 {
                    return Ok(0.0);
                }
                let ctx = EvalCtx {
                    model,
                    counts,
                    here: Some(here),
                };
                let r = expr::eval(&cp.value, &ctx).map_err(|source| SemanticsError::Eval {
                    action: cp.action.clone(),
                    location: Some(here),
                    source,
                })?;
                let p = dest_prob(model, *agent, *prefix, here, dest, counts)?;
                Ok(solo_rate(x[model.series(*agent, *loc)], r, p))
            }
            ChannelRate::Pair {
                active_agent,
                active_loc,
                active_prefix,
                passive_agent,
                passive_loc,
                passive_prefix,
                a_dest,
                b_dest,
            } => {
                let ap = &model.prefixes_of(*active_agent)[*active_prefix];
                let pp = &model.prefixes_of(*passive_agent)[*passive_prefix];
                let l_p = model.space.locations()[*active_loc];
                let l_q = model.space.locations()[*passive_loc];
                let actx = EvalCtx {
                    model,
                    counts,
                    here: Some(l_p),
                };
                let r = expr::eval(&ap.value, &actx).map_err(|source| SemanticsError::Eval {
                    action: ap.action.clone(),
                    location: Some(l_p),
                    source,
                })?;
                let qctx = EvalCtx {
                    model,
                    counts,
                    here: Some(l_q),
                };
                let p = expr::eval_probability(&pp.value, &qctx).map_err(|source| {
                    SemanticsError::Eval {
                        action: pp.action.clone(),
                        location: Some(l_q),
                        source,
                    }
                })?;
                let n = x[model.series(*active_agent, *active_loc)];
                let self_pair = active_agent == passive_agent && active_loc == passive_loc;
                let m = if self_pair {
                    (n - 1.0).max(0.0)
                } else {
                    x[model.series(*passive_agent, *passive_loc)]
                };
                let pa = dest_prob(model, *active_agent, *active_prefix, l_p, a_dest, counts)?;
                let pb = dest_prob(model, *passive_agent, *passive_prefix, l_q, b_dest, counts)?;
                Ok(pair_rate(n, m, r, p) * pa * pb)
            }
            ChannelRate::Env {
                env,
                mult,
                passive_agent,
                passive_loc,
                passive_prefix,
                b_dest,
            } => {
                let (action, _) = model.env_signature(*env);
                let rate_expr = model.env_rate(*env);
                let pp = &model.prefixes_of(*passive_agent)[*passive_prefix];
                let l_q = model.space.locations()[*passive_loc];
                let ctx = EvalCtx {
                    model,
                    counts,
                    here: None,
                };
                let r = expr::eval(rate_expr, &ctx).map_err(|source| SemanticsError::Eval {
                    action: action.to_string(),
                    location: None,
                    source,
                })?;
                let qctx = EvalCtx {
                    model,
                    counts,
                    here: Some(l_q),
                };
                let p = expr::eval_probability(&pp.value, &qctx).map_err(|source| {
                    SemanticsError::Eval {
                        action: pp.action.clone(),
                        location: Some(l_q),
                        source,
                    }
                })?;
                let m = x[model.series(*passive_agent, *passive_loc)];
                let pb = dest_prob(model, *passive_agent, *passive_prefix, l_q, b_dest, counts)?;
                Ok(pair_rate(*mult as f64, m, r, p) * pb)
            }
        }
    }
}

/// Continuous mass of potential passive partners of `prefix` (used by the
/// unpaired-influence indicator).
fn partner_mass(
    model: &CompiledModel,
    a_idx: usize,
    li: usize,
    prefix: &crate::semantics::CompiledPrefix,
    x: &[f64],
) -> f64 {
    let ActionKind::Influence(set) = &prefix.kind else {
        return 0.0;
    };
    let here = model.space.locations()[li];
    let targets = model.resolve_target_set(set, Some(here));
    let mut mass = 0.0;
    for b_idx in 0..model.agent_names().len() {
        let has_passive = model
            .prefixes_of(b_idx)
            .iter()
            .any(|q| q.kind == ActionKind::Passive && q.action == prefix.action);
        if !has_passive {
            continue;
        }
        for l in &targets {
            let Some(qi) = model.space.index_of(l) else {
                continue;
            };
            let c = x[model.series(b_idx, qi)];
            mass += if b_idx == a_idx && qi == li {
                (c - 1.0).max(0.0)
            } else {
                c
            };
        }
    }
    mass
}

/// Evaluate all channel rates at `x`: the rate vector v(x).
pub fn channel_rates(
    model: &CompiledModel,
    channels: &[ReactionChannel],
    x: &[f64],
) -> Result<Vec<f64>, SemanticsError> {
    channels.iter().map(|c| c.rate_at(model, x)).collect()
}

/// The ODE right-hand side M x v(x): sum of delta_j * rate_j(x).
pub fn ode_rhs(
    model: &CompiledModel,
    channels: &[ReactionChannel],
    x: &[f64],
) -> Result<Vec<f64>, SemanticsError> {
    let mut dx = vec![0.0; x.len()];
    for c in channels {
        let v = c.rate_at(model, x)?;
        if v == 0.0 {
            continue;
        }
        for (series, d) in &c.delta {
            dx[*series] += *d as f64 * v;
        }
    }
    Ok(dx)
}

/// Sparse stoichiometry matrix: rows are series, columns are channels.
#[derive(Debug, Clone, PartialEq)]
pub struct StoichiometryMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    /// (row, col, value), column-major order.
    pub entries: Vec<(usize, usize, i64)>,
}

impl StoichiometryMatrix {
    pub fn column(&self, col: usize) -> Vec<(usize, i64)> {
        self.entries
            .iter()
            .filter(|(_, c, _)| *c == col)
            .map(|(r, _, v)| (*r, *v))
            .collect()
    }

    pub fn column_sum(&self, col: usize) -> i64 {
        self.entries
            .iter()
            .filter(|(_, c, _)| *c == col)
            .map(|(_, _, v)| v)
            .sum()
    }

    /// Matrix-market-style sparse text export (1-based indices).
    pub fn export_matrix_market(&self) -> String {
        let mut out = String::from("%%MatrixMarket matrix coordinate integer general\n");
        let _ = writeln!(out, "{} {} {}", self.n_rows, self.n_cols, self.entries.len());
        for (r, c, v) in &self.entries {
            let _ = writeln!(out, "{} {} {}", r + 1, c + 1, v);
        }
        out
    }
}

/// Build M from the channel deltas.
pub fn stoichiometry_matrix(
    model: &CompiledModel,
    channels: &[ReactionChannel],
) -> StoichiometryMatrix {
    let mut entries = Vec::new();
    for c in channels {
        for (series, d) in &c.delta {
            entries.push((*series, c.id, *d));
        }
    }
    StoichiometryMatrix {
        n_rows: model.n_series(),
        n_cols: channels.len(),
        entries,
    }
}

/// A fixed-step RK4 solution sampled on a grid.
#[derive(Debug, Clone)]
pub struct OdeSolution {
    pub grid: Vec<f64>,
    pub series: Vec<String>,
    /// `values[time_index][series_index]`
    pub values: Vec<Vec<f64>>,
    /// Number of negative components clipped to zero during integration.
    pub clipped: u64,
    /// First clip event (time, series name), if any.
    pub first_clip: Option<(f64, String)>,
}

/// Integrate dP/dt = M x v with classic fixed-step RK4 from `x0`.
///
/// Steps land exactly on grid points (a step is shortened when a grid point
/// falls inside it). Negative components are clipped to zero and counted;
/// a non-finite component aborts with [`OdeError::BlowUp`].
pub fn integrate(
    model: &CompiledModel,
    channels: &[ReactionChannel],
    x0: Vec<f64>,
    t_end: f64,
    dt: f64,
    grid: &[f64],
) -> Result<OdeSolution, OdeError> {
    assert!(dt > 0.0 && t_end > 0.0);
    let mut x = x0;
    let mut t = 0.0f64;
    let mut values = Vec::with_capacity(grid.len());
    let mut gi = 0usize;
    let mut clipped = 0u64;
    let mut first_clip = None;

    let record_tol = 1e-9 * dt;
    while gi < grid.len() && grid[gi] <= t + record_tol {
        values.push(x.clone());
        gi += 1;
    }

    while t < t_end - record_tol {
        let mut next = t + dt;
        // do not step past the next grid point or the horizon
        if gi < grid.len() && grid[gi] < next {
            next = grid[gi];
        }
        if t_end < next {
            next = t_end;
        }
        let h = next - t;
        if h <= 0.0 {
            break;
        }

        // A diverging solution usually overflows inside a rate evaluation
        // before any state component itself reaches infinity.
        rk4_step(model, channels, &mut x, h).map_err(|e| match e {
            SemanticsError::Eval {
                source: crate::expr::EvalError::NonFinite,
                action,
                location,
            } => OdeError::BlowUp {
                t: next,
                series: match location {
                    Some(l) => format!("the rate of `{action}` at {l}"),
                    None => format!("the rate of `{action}`"),
                },
            },
            other => OdeError::Semantics(other),
        })?;
        t = next;

        for (si, v) in x.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(OdeError::BlowUp {
                    t,
                    series: model.series_name(si),
                });
            }
            if *v < 0.0 {
                *v = 0.0;
                clipped += 1;
                if first_clip.is_none() {
                    first_clip = Some((t, model.series_name(si)));
                }
            }
        }

        while gi < grid.len() && grid[gi] <= t + record_tol {
            values.push(x.clone());
            gi += 1;
        }
    }

    // grid points at or beyond the horizon take the final value
    while gi < grid.len() {
        values.push(x.clone());
        gi += 1;
    }

    Ok(OdeSolution {
        grid: grid.to_vec(),
        series: model.series_names(),
        values,
        clipped,
        first_clip,
    })
}

fn rk4_step(
    model: &CompiledModel,
    channels: &[ReactionChannel],
    x: &mut [f64],
    h: f64,
) -> Result<(), SemanticsError> {
    let n = x.len();
    let k1 = ode_rhs(model, channels, x)?;
    let mut tmp = vec![0.0; n];
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    let k2 = ode_rhs(model, channels, &tmp)?;
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    let k3 = ode_rhs(model, channels, &tmp)?;
    for i in 0..n {
        tmp[i] = x[i] + h * k3[i];
    }
    let k4 = ode_rhs(model, channels, &tmp)?;
    for i in 0..n {
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(())
}

/// ODE output CSV in the ensemble shape: `time,series,value`.
pub fn ode_csv(solution: &OdeSolution) -> String {
    let mut out = String::from("time,series,value\n");
    for (ti, t) in solution.grid.iter().enumerate() {
        for (si, name) in solution.series.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{}\n",
                t,
                crate::stochastic::csv_field(name),
                solution.values[ti][si]
            ));
        }
    }
    out
}

/// Human-readable channel table: id, action, mode, location, rate form and
/// delta. Channels whose rate expressions reference counts are flagged
/// `state-dep`.
pub fn channel_table(model: &CompiledModel, channels: &[ReactionChannel]) -> String {
    let mut out = String::from("id\taction\tmode\tlocation\trate\tdelta\n");
    for c in channels {
        let delta = c
            .delta
            .iter()
            .map(|(s, d)| format!("{}:{:+}", model.series_name(*s), d))
            .collect::<Vec<_>>()
            .join(" ");
        let loc = match c.location {
            Some(l) => l.to_string(),
            None => "-".to_string(),
        };
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            c.id,
            c.action,
            c.mode,
            loc,
            rate_form(model, c),
            delta
        );
    }
    out
}

fn rate_form(model: &CompiledModel, c: &ReactionChannel) -> String {
    let series = |a: usize, l: usize| model.series_name(model.series(a, l));
    match &c.rate {
        ChannelRate::Solo {
            agent,
            loc,
            prefix,
            dest,
            unpaired_guard,
        } => {
            let p = &model.prefixes_of(*agent)[*prefix];
            let guard = if *unpaired_guard { " [if unpaired]" } else { "" };
            let mut s = format!("n[{}] * ({})", series(*agent, *loc), p.value);
            if !matches!(
                p.destination,
                DestinationExpr::Same | DestinationExpr::Literal(_)
            ) && p.mode != Mode::Destroy
            {
                let _ = write!(s, " * P(move to {dest})");
            }
            let flag = if p.value.is_constant() { "" } else { " [state-dep]" };
            let smooth = if p.value.has_min_max() { " [non-smooth]" } else { "" };
            format!("{s}{guard}{flag}{smooth}")
        }
        ChannelRate::Pair {
            active_agent,
            active_loc,
            active_prefix,
            passive_agent,
            passive_loc,
            passive_prefix,
            ..
        } => {
            let ap = &model.prefixes_of(*active_agent)[*active_prefix];
            let pp = &model.prefixes_of(*passive_agent)[*passive_prefix];
            let self_pair = active_agent == passive_agent && active_loc == passive_loc;
            let n = series(*active_agent, *active_loc);
            let m = if self_pair {
                format!("(n[{}] - 1)", series(*passive_agent, *passive_loc))
            } else {
                format!("n[{}]", series(*passive_agent, *passive_loc))
            };
            let flag = if ap.value.is_constant() && pp.value.is_constant() {
                ""
            } else {
                " [state-dep]"
            };
            let smooth = if ap.value.has_min_max() || pp.value.has_min_max() {
                " [non-smooth]"
            } else {
                ""
            };
            format!(
                "n[{}] * {} * ({}) * ({}){}{}",
                n, m, ap.value, pp.value, flag, smooth
            )
        }
        ChannelRate::Env {
            env,
            mult,
            passive_agent,
            passive_loc,
            passive_prefix,
            ..
        } => {
            let pp = &model.prefixes_of(*passive_agent)[*passive_prefix];
            let rate = model.env_rate(*env);
            let flag = if rate.is_constant() && pp.value.is_constant() {
                ""
            } else {
                " [state-dep]"
            };
            let smooth = if rate.has_min_max() || pp.value.has_min_max() {
                " [non-smooth]"
            } else {
                ""
            };
            format!(
                "{} * n[{}] * ({}) * ({}){}{}",
                mult,
                series(*passive_agent, *passive_loc),
                rate,
                pp.value,
                flag,
                smooth
            )
        }
    }
}
