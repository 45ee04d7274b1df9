//! Exact stochastic simulation of the derived jump chain.
//!
//! The simulator is the Gillespie direct method: at each step the full
//! channel list is recomputed from the semantics, a waiting time is drawn
//! from Exp(total rate), then a channel is selected proportionally to its
//! rate. Two uniform draws per event, waiting time first. Absorption (no
//! enabled channel) ends a run normally and is flagged on the trajectory.

pub mod ctmc;
pub mod rng;
pub mod stats;

pub use ctmc::{enumerate_state_space, CapPolicy, Caps, CtmcEntry, CtmcExplicit};

use rayon::prelude::*;

use crate::semantics::{CompiledModel, SemanticsError, SystemState, TransitionLabel};
use rng::{replica_seed, Rng};

/// One recorded step of a trajectory: the state at `time` after firing
/// `label` (`None` for the initial entry).
#[derive(Debug, Clone)]
pub struct TrajectoryEntry {
    pub time: f64,
    pub state: SystemState,
    pub label: Option<TransitionLabel>,
}

/// A single exact trajectory. Times are strictly increasing from 0.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub seed: u64,
    pub entries: Vec<TrajectoryEntry>,
    /// True when the run ended because no transition was enabled.
    pub absorbed: bool,
}

impl Trajectory {
    pub fn n_events(&self) -> usize {
        self.entries.len() - 1
    }

    pub fn final_state(&self) -> &SystemState {
        &self.entries.last().expect("at least the initial entry").state
    }

    pub fn final_time(&self) -> f64 {
        self.entries.last().expect("at least the initial entry").time
    }

    /// Last-value-before-or-at sampling on a time grid. Grid times before 0
    /// yield the initial state.
    pub fn sample_counts(&self, model: &CompiledModel, grid: &[f64]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(grid.len());
        let mut at = 0usize;
        for &g in grid {
            while at + 1 < self.entries.len() && self.entries[at + 1].time <= g {
                at += 1;
            }
            let state = &self.entries[at].state;
            out.push((0..model.n_series()).map(|s| state.count(s) as f64).collect());
        }
        out
    }
}

/// Run one exact trajectory to `t_end` (or absorption) from the model's
/// initial state. Identical `(model, t_end, seed)` gives an identical
/// trajectory.
pub fn ssa_run(
    model: &CompiledModel,
    t_end: f64,
    seed: u64,
) -> Result<Trajectory, SemanticsError> {
    let mut rng = Rng::new(seed);
    let mut state = model.initial_state();
    let mut t = 0.0;
    let mut entries = vec![TrajectoryEntry {
        time: 0.0,
        state: state.clone(),
        label: None,
    }];
    let mut absorbed = false;

    loop {
        let transitions = model.enabled_transitions(&state)?;
        let total: f64 = transitions.iter().map(|t| t.rate).sum();
        if total <= 0.0 {
            absorbed = true;
            break;
        }
        let tau = rng.exp(total);
        if t + tau > t_end {
            break;
        }
        t += tau;

        let pick = rng.next_f64() * total;
        let mut acc = 0.0;
        let mut chosen = transitions.len() - 1;
        for (i, tr) in transitions.iter().enumerate() {
            acc += tr.rate;
            if pick < acc {
                chosen = i;
                break;
            }
        }
        let fired = &transitions[chosen];
        state = model.apply_transition(&state, fired)?;
        entries.push(TrajectoryEntry {
            time: t,
            state: state.clone(),
            label: Some(fired.label.clone()),
        });
    }

    Ok(Trajectory {
        seed,
        entries,
        absorbed,
    })
}

/// Per-grid-point mean and variance of every series over an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub grid: Vec<f64>,
    pub series: Vec<String>,
    /// `mean[time_index][series_index]`
    pub mean: Vec<Vec<f64>>,
    /// Unbiased sample variance; zero for a single replica.
    pub variance: Vec<Vec<f64>>,
    pub replicas: u64,
}

/// Replicas folded per fixed-size block so the reduction order (and the
/// floating-point result) does not depend on thread count.
const REPLICA_BLOCK: u64 = 32;

struct BlockAccum {
    sum: Vec<Vec<f64>>,
    sumsq: Vec<Vec<f64>>,
}

/// Simulate `replicas` independent trajectories and accumulate per-series
/// statistics on `grid`. Replica `r` uses `replica_seed(base_seed, r)`;
/// replica parallelism comes from the ambient rayon pool.
pub fn simulate_ensemble(
    model: &CompiledModel,
    t_end: f64,
    replicas: u64,
    base_seed: u64,
    grid: &[f64],
) -> Result<Ensemble, SemanticsError> {
    assert!(replicas >= 1, "at least one replica");
    let n_series = model.n_series();
    let n_grid = grid.len();

    let n_blocks = replicas.div_ceil(REPLICA_BLOCK);
    let results: Vec<Result<BlockAccum, SemanticsError>> = (0..n_blocks)
        .into_par_iter()
        .map(|block| {
            let mut acc = BlockAccum {
                sum: vec![vec![0.0; n_series]; n_grid],
                sumsq: vec![vec![0.0; n_series]; n_grid],
            };
            let lo = block * REPLICA_BLOCK;
            let hi = (lo + REPLICA_BLOCK).min(replicas);
            for r in lo..hi {
                let traj = ssa_run(model, t_end, replica_seed(base_seed, r))?;
                let sampled = traj.sample_counts(model, grid);
                for (ti, row) in sampled.iter().enumerate() {
                    for (si, v) in row.iter().enumerate() {
                        acc.sum[ti][si] += v;
                        acc.sumsq[ti][si] += v * v;
                    }
                }
            }
            Ok(acc)
        })
        .collect();

    let mut sum = vec![vec![0.0; n_series]; n_grid];
    let mut sumsq = vec![vec![0.0; n_series]; n_grid];
    for res in results {
        let acc = res?;
        for ti in 0..n_grid {
            for si in 0..n_series {
                sum[ti][si] += acc.sum[ti][si];
                sumsq[ti][si] += acc.sumsq[ti][si];
            }
        }
    }

    let n = replicas as f64;
    let mut mean = vec![vec![0.0; n_series]; n_grid];
    let mut variance = vec![vec![0.0; n_series]; n_grid];
    for ti in 0..n_grid {
        for si in 0..n_series {
            let m = sum[ti][si] / n;
            mean[ti][si] = m;
            variance[ti][si] = if replicas > 1 {
                (sumsq[ti][si] - n * m * m) / (n - 1.0)
            } else {
                0.0
            };
        }
    }

    Ok(Ensemble {
        grid: grid.to_vec(),
        series: model.series_names(),
        mean,
        variance,
        replicas,
    })
}

/// Quote a CSV field if it contains a comma or a quote.
pub(crate) fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Long-form trajectory CSV: `time,agentState,location,count`, every series
/// at every recorded event time.
pub fn trajectory_csv_long(model: &CompiledModel, traj: &Trajectory) -> String {
    let mut out = String::from("time,agentState,location,count\n");
    for entry in &traj.entries {
        for series in 0..model.n_series() {
            let agent = &model.agent_names()[model.series_agent(series)];
            let loc = model.series_location(series).to_string();
            out.push_str(&format!(
                "{},{},{},{}\n",
                entry.time,
                csv_field(agent),
                csv_field(&loc),
                entry.state.count(series)
            ));
        }
    }
    out
}

/// Wide-form trajectory CSV: one column per series.
pub fn trajectory_csv_wide(model: &CompiledModel, traj: &Trajectory) -> String {
    let mut out = String::from("time");
    for name in model.series_names() {
        out.push(',');
        out.push_str(&csv_field(&name));
    }
    out.push('\n');
    for entry in &traj.entries {
        out.push_str(&entry.time.to_string());
        for series in 0..model.n_series() {
            out.push_str(&format!(",{}", entry.state.count(series)));
        }
        out.push('\n');
    }
    out
}

/// Ensemble CSV: `time,series,mean,variance`.
pub fn ensemble_csv(ensemble: &Ensemble) -> String {
    let mut out = String::from("time,series,mean,variance\n");
    for (ti, t) in ensemble.grid.iter().enumerate() {
        for (si, name) in ensemble.series.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                t,
                csv_field(name),
                ensemble.mean[ti][si],
                ensemble.variance[ti][si]
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_model;
    use crate::semantics::EngineOptions;

    const SI: &str = include_str!("../../../../models/si.mela");
    const DIE: &str = include_str!("../../../../models/die.mela");
    const PURE_MOVE: &str = include_str!("../../../../models/pure_move.mela");

    fn compile(src: &str) -> CompiledModel {
        let model = parse_model(src).expect("parses");
        CompiledModel::compile(&model, EngineOptions::default()).expect("compiles")
    }

    #[test]
    fn die_model_fires_exactly_once() {
        let m = compile(DIE);
        let traj = ssa_run(&m, 1e9, 1).unwrap();
        assert_eq!(traj.n_events(), 1);
        assert!(traj.absorbed);
        assert_eq!(traj.final_state().total_agents(), 0);
        assert_eq!(
            traj.entries[1].label.as_ref().unwrap().action.as_str(),
            "die"
        );
    }

    #[test]
    fn identical_seed_identical_trajectory() {
        let m = compile(SI);
        let a = ssa_run(&m, 10.0, 42).unwrap();
        let b = ssa_run(&m, 10.0, 42).unwrap();
        assert_eq!(a.n_events(), b.n_events());
        for (x, y) in a.entries.iter().zip(&b.entries) {
            assert_eq!(x.time, y.time);
            assert_eq!(x.state, y.state);
        }
        assert_eq!(
            trajectory_csv_long(&m, &a),
            trajectory_csv_long(&m, &b)
        );
    }

    #[test]
    fn times_strictly_increase() {
        let m = compile(SI);
        let traj = ssa_run(&m, 20.0, 7).unwrap();
        assert!(traj.n_events() > 5);
        for w in traj.entries.windows(2) {
            assert!(w[1].time > w[0].time);
        }
    }

    #[test]
    fn zero_contact_rate_never_converts() {
        let src = SI.replace("param c  = 0.4;", "param c  = 0.0;");
        let m = compile(&src);
        let traj = ssa_run(&m, 50.0, 3).unwrap();
        assert!(traj
            .entries
            .iter()
            .flat_map(|e| e.label.as_ref())
            .all(|l| l.action != "contact"));
    }

    #[test]
    fn pure_movement_conserves_population_each_step() {
        let m = compile(PURE_MOVE);
        for seed in 0..5 {
            let traj = ssa_run(&m, 5.0, seed).unwrap();
            assert!(traj.n_events() > 10);
            for e in &traj.entries {
                assert_eq!(e.state.total_agents(), 25);
            }
        }
    }

    #[test]
    fn fired_labels_match_enabled_transitions() {
        let m = compile(SI);
        let traj = ssa_run(&m, 5.0, 9).unwrap();
        let mut state = m.initial_state();
        for e in &traj.entries[1..] {
            let ts = m.enabled_transitions(&state).unwrap();
            let label = e.label.as_ref().unwrap();
            let matched = ts.iter().find(|t| &t.label == label).expect("fired label enabled");
            state = m.apply_transition(&state, matched).unwrap();
            assert_eq!(state, e.state);
        }
    }

    #[test]
    fn single_replica_ensemble_reproduces_ssa() {
        let m = compile(SI);
        let grid: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        let ens = simulate_ensemble(&m, 10.0, 1, 42, &grid).unwrap();
        let traj = ssa_run(&m, 10.0, 42).unwrap();
        let sampled = traj.sample_counts(&m, &grid);
        for (ti, row) in sampled.iter().enumerate() {
            for (si, v) in row.iter().enumerate() {
                assert_eq!(ens.mean[ti][si], *v);
                assert_eq!(ens.variance[ti][si], 0.0);
            }
        }
    }

    #[test]
    fn ensemble_statistics_are_bit_identical_across_calls() {
        let m = compile(SI);
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5).collect();
        let a = simulate_ensemble(&m, 10.0, 100, 5, &grid).unwrap();
        let b = simulate_ensemble(&m, 10.0, 100, 5, &grid).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rate_evaluation_failure_names_the_action() {
        let src = "
space line(1);
agent A(l) = (risky, 1 / #B(1)) . A(l);
agent B(l) = (idle, 1.0) up B(l);
init = A(1);
";
        let model = parse_model(src).unwrap();
        let m = CompiledModel::compile(&model, EngineOptions::default()).unwrap();
        let err = ssa_run(&m, 1.0, 0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("risky") && msg.contains("division by zero"), "{msg}");
    }

    #[test]
    fn state_dependent_movement_simulates() {
        let src = "
param m = 1.0;
space line(3) boundary=closed;
agent A(l) = (hop, m) . A(dist(2[#A(2) / (#A(2) + #A(3)) ], 3[#A(3) / (#A(2) + #A(3))]));
init = A(1)[2] | A(2) | A(3)[3];
";
        let model = parse_model(src).unwrap();
        let m = CompiledModel::compile(&model, EngineOptions::default()).unwrap();
        let traj = ssa_run(&m, 2.0, 5).unwrap();
        for e in &traj.entries {
            assert_eq!(e.state.total_agents(), 6);
        }
    }

    #[test]
    fn absorption_is_flagged() {
        let m = compile(DIE);
        let traj = ssa_run(&m, 1e9, 0).unwrap();
        assert!(traj.absorbed);
        let partial = ssa_run(&m, 1e-12, 0).unwrap();
        assert!(!partial.absorbed || partial.n_events() == 1);
    }
}
