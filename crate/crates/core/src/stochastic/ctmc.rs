//! Bounded explicit-state enumeration and generator export.
//!
//! Breadth-first search from the initial state; states are numbered in
//! discovery order. Birth actions make most state spaces infinite, so each
//! series can be capped: a transition that would push a count past its cap
//! is either dropped (the default `truncate` policy, counted in the
//! metadata) or reported as an error. Off-diagonal generator entries are
//! stored explicitly; the diagonal is minus the row's exit rate.

use std::collections::{BTreeMap, HashMap, VecDeque};

use thiserror::Error;

use crate::semantics::{CompiledModel, SemanticsError, SeriesId, SystemState, TransitionLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CapPolicy {
    #[default]
    Truncate,
    Error,
}

/// Per-series count caps with an optional default for unlisted series.
#[derive(Debug, Clone, Default)]
pub struct Caps {
    pub default: Option<u64>,
    pub per_series: BTreeMap<SeriesId, u64>,
}

impl Caps {
    pub fn unbounded() -> Self {
        Caps::default()
    }

    pub fn uniform(cap: u64) -> Self {
        Caps {
            default: Some(cap),
            per_series: BTreeMap::new(),
        }
    }

    fn cap(&self, series: SeriesId) -> u64 {
        self.per_series
            .get(&series)
            .copied()
            .or(self.default)
            .unwrap_or(u64::MAX)
    }

    fn allows(&self, state: &SystemState) -> Option<SeriesId> {
        state
            .iter_nonzero()
            .find(|(s, c)| *c > self.cap(*s))
            .map(|(s, _)| s)
    }
}

/// One off-diagonal generator entry.
#[derive(Debug, Clone)]
pub struct CtmcEntry {
    pub from: usize,
    pub to: usize,
    pub rate: f64,
    pub label: TransitionLabel,
}

/// Explicit-state view of the truncated CTMC.
#[derive(Debug, Clone)]
pub struct CtmcExplicit {
    /// States in BFS discovery order; index 0 is the initial state.
    pub states: Vec<SystemState>,
    pub entries: Vec<CtmcEntry>,
    /// Total exit rate per state (sum of kept entries from it).
    pub exit_rates: Vec<f64>,
    /// Number of transitions dropped by the cap policy.
    pub truncated: u64,
    pub series: Vec<String>,
    pub cap_policy: CapPolicy,
}

#[derive(Debug, Error)]
pub enum EnumerateError {
    #[error(
        "state bound exceeded: more than {max_states} states (found {states} states, {transitions} transitions, {truncated} truncated)"
    )]
    MaxStatesExceeded {
        max_states: usize,
        states: usize,
        transitions: usize,
        truncated: u64,
    },
    #[error("cap exceeded for {series} while applying `{action}`")]
    CapExceeded { series: String, action: String },
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
}

/// Enumerate the reachable (capped) state space from the initial state.
pub fn enumerate_state_space(
    model: &CompiledModel,
    caps: &Caps,
    max_states: usize,
    policy: CapPolicy,
) -> Result<CtmcExplicit, EnumerateError> {
    let initial = model.initial_state();
    if let Some(series) = caps.allows(&initial) {
        return Err(EnumerateError::CapExceeded {
            series: model.series_name(series),
            action: "<init>".to_string(),
        });
    }

    let mut states = vec![initial.clone()];
    let mut index: HashMap<SystemState, usize> = HashMap::new();
    index.insert(initial.clone(), 0);
    let mut queue: VecDeque<usize> = VecDeque::from([0]);
    let mut entries: Vec<CtmcEntry> = Vec::new();
    let mut truncated = 0u64;

    while let Some(from) = queue.pop_front() {
        let state = states[from].clone();
        for t in model.enabled_transitions(&state)? {
            let next = model.apply_transition(&state, &t)?;
            if let Some(series) = caps.allows(&next) {
                match policy {
                    CapPolicy::Truncate => {
                        truncated += 1;
                        continue;
                    }
                    CapPolicy::Error => {
                        return Err(EnumerateError::CapExceeded {
                            series: model.series_name(series),
                            action: t.label.action.clone(),
                        })
                    }
                }
            }
            let to = match index.get(&next) {
                Some(&i) => i,
                None => {
                    if states.len() >= max_states {
                        return Err(EnumerateError::MaxStatesExceeded {
                            max_states,
                            states: states.len(),
                            transitions: entries.len(),
                            truncated,
                        });
                    }
                    let i = states.len();
                    states.push(next.clone());
                    index.insert(next, i);
                    queue.push_back(i);
                    i
                }
            };
            debug_assert_ne!(from, to, "self-loops are suppressed upstream");
            entries.push(CtmcEntry {
                from,
                to,
                rate: t.rate,
                label: t.label,
            });
        }
    }

    let mut exit_rates = vec![0.0; states.len()];
    for e in &entries {
        exit_rates[e.from] += e.rate;
    }

    Ok(CtmcExplicit {
        states,
        entries,
        exit_rates,
        truncated,
        series: model.series_names(),
        cap_policy: policy,
    })
}

impl CtmcExplicit {
    /// Maximum absolute row-sum defect of the generator, where the diagonal
    /// is defined as minus the exit rate. Zero within 1e-12 by construction;
    /// re-checked after import round trips.
    pub fn max_row_sum_defect(&self) -> f64 {
        let mut row = vec![0.0f64; self.states.len()];
        for e in &self.entries {
            row[e.from] += e.rate;
        }
        row.iter()
            .zip(&self.exit_rates)
            .map(|(sum, exit)| (sum - exit).abs())
            .fold(0.0, f64::max)
    }

    /// States file: header `states N series K`, a line of series names,
    /// then one line per state: index followed by the count vector.
    pub fn export_states(&self) -> String {
        let mut out = format!("states {} series {}\n", self.states.len(), self.series.len());
        out.push_str(&self.series.join(" "));
        out.push('\n');
        for (i, s) in self.states.iter().enumerate() {
            out.push_str(&i.to_string());
            for c in s.counts() {
                out.push(' ');
                out.push_str(&c.to_string());
            }
            out.push('\n');
        }
        out
    }

    /// Transitions file: header `transitions M`, then `from to rate action`
    /// per line.
    pub fn export_transitions(&self) -> String {
        let mut out = format!("transitions {}\n", self.entries.len());
        for e in &self.entries {
            out.push_str(&format!(
                "{} {} {} {}\n",
                e.from, e.to, e.rate, e.label.action
            ));
        }
        out
    }

    /// Metadata: state/transition counts, truncation count and cap policy.
    pub fn export_meta(&self) -> String {
        format!(
            "states {}\ntransitions {}\ntruncated {}\ncap_policy {}\n",
            self.states.len(),
            self.entries.len(),
            self.truncated,
            match self.cap_policy {
                CapPolicy::Truncate => "truncate",
                CapPolicy::Error => "error",
            }
        )
    }

    /// The exported content of this CTMC, for round-trip comparison.
    pub fn to_imported_view(&self) -> ImportedCtmc {
        ImportedCtmc {
            series: self.series.clone(),
            states: self.states.iter().map(|s| s.counts().to_vec()).collect(),
            transitions: self
                .entries
                .iter()
                .map(|e| (e.from, e.to, e.rate, e.label.action.clone()))
                .collect(),
        }
    }
}

/// A CTMC reconstructed from exported files. Labels beyond the action name
/// are not part of the file format.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportedCtmc {
    pub series: Vec<String>,
    pub states: Vec<Vec<u64>>,
    pub transitions: Vec<(usize, usize, f64, String)>,
}

#[derive(Debug, Error)]
pub enum ImportError {
    #[error("line {0}: {1}")]
    Malformed(usize, String),
}

/// Parse exported states and transitions files back into an
/// [`ImportedCtmc`].
pub fn import_ctmc(states_text: &str, transitions_text: &str) -> Result<ImportedCtmc, ImportError> {
    let mut lines = states_text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| ImportError::Malformed(1, "empty states file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != "states" || fields[2] != "series" {
        return Err(ImportError::Malformed(1, "bad states header".into()));
    }
    let n_states: usize = fields[1]
        .parse()
        .map_err(|_| ImportError::Malformed(1, "bad state count".into()))?;
    let n_series: usize = fields[3]
        .parse()
        .map_err(|_| ImportError::Malformed(1, "bad series count".into()))?;

    let (_, names) = lines
        .next()
        .ok_or_else(|| ImportError::Malformed(2, "missing series names".into()))?;
    let series: Vec<String> = names.split_whitespace().map(str::to_string).collect();
    if series.len() != n_series {
        return Err(ImportError::Malformed(2, "series name count mismatch".into()));
    }

    let mut states = Vec::with_capacity(n_states);
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let idx: usize = it
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| ImportError::Malformed(lineno + 1, "bad state index".into()))?;
        if idx != states.len() {
            return Err(ImportError::Malformed(
                lineno + 1,
                format!("state index {idx} out of order"),
            ));
        }
        let counts: Vec<u64> = it
            .map(|f| f.parse())
            .collect::<Result<_, _>>()
            .map_err(|_| ImportError::Malformed(lineno + 1, "bad count".into()))?;
        if counts.len() != n_series {
            return Err(ImportError::Malformed(lineno + 1, "count vector length".into()));
        }
        states.push(counts);
    }
    if states.len() != n_states {
        return Err(ImportError::Malformed(0, "state count mismatch".into()));
    }

    let mut lines = transitions_text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| ImportError::Malformed(1, "empty transitions file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 2 || fields[0] != "transitions" {
        return Err(ImportError::Malformed(1, "bad transitions header".into()));
    }
    let n_trans: usize = fields[1]
        .parse()
        .map_err(|_| ImportError::Malformed(1, "bad transition count".into()))?;

    let mut transitions = Vec::with_capacity(n_trans);
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(ImportError::Malformed(lineno + 1, "expected 4 fields".into()));
        }
        let from: usize = fields[0]
            .parse()
            .map_err(|_| ImportError::Malformed(lineno + 1, "bad from".into()))?;
        let to: usize = fields[1]
            .parse()
            .map_err(|_| ImportError::Malformed(lineno + 1, "bad to".into()))?;
        let rate: f64 = fields[2]
            .parse()
            .map_err(|_| ImportError::Malformed(lineno + 1, "bad rate".into()))?;
        transitions.push((from, to, rate, fields[3].to_string()));
    }
    if transitions.len() != n_trans {
        return Err(ImportError::Malformed(0, "transition count mismatch".into()));
    }

    Ok(ImportedCtmc {
        series,
        states,
        transitions,
    })
}
