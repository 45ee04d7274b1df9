//! `mela`: command-line front end for the MELA toolkit.
//!
//! Subcommands: `validate`, `simulate`, `ode`, `enumerate`, `info`.
//! Exit codes: 0 success, 1 model or runtime error, 2 I/O or usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mela_core::diag::{all_clear, Diagnostic};
use mela_core::fluid;
use mela_core::semantics::{CompiledModel, EngineOptions};
use mela_core::stochastic::{self, ctmc};
use mela_core::{parse_model, validate, ModelDef};

#[derive(Parser)]
#[command(
    name = "mela",
    version,
    about = "Parse, validate, simulate and analyse MELA models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and statically check a model.
    Validate {
        /// Path to the .mela model file
        model: PathBuf,
        /// Machine-readable JSON report on stdout
        #[arg(long)]
        json: bool,
    },
    /// Exact stochastic simulation (one trajectory or an ensemble).
    Simulate {
        model: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Number of independent replicas
        #[arg(long, default_value_t = 1)]
        replicas: u64,
        /// Sample grid `start:end:step` (default `0:t_end:t_end/20`)
        #[arg(long)]
        grid: Option<String>,
        /// Wide-form trajectory CSV (one column per series)
        #[arg(long)]
        wide: bool,
    },
    /// Fluid ODE approximation via fixed-step RK4.
    Ode {
        model: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// RK4 step size
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// Sample grid `start:end:step` (default `0:t_end:t_end/20`)
        #[arg(long)]
        grid: Option<String>,
        /// Also write the stoichiometry matrix (matrix-market text)
        #[arg(long)]
        emit_matrix: bool,
    },
    /// Bounded explicit-state CTMC enumeration and export.
    Enumerate {
        model: PathBuf,
        /// Default count cap applied to every series
        #[arg(long)]
        cap_default: Option<u64>,
        /// Per-series cap `Agent@loc=N` (repeatable)
        #[arg(long = "cap")]
        caps: Vec<String>,
        /// Abort after discovering this many states
        #[arg(long, default_value_t = 10_000)]
        max_states: usize,
        /// `truncate` drops transitions past a cap, `error` aborts
        #[arg(long, default_value = "truncate")]
        cap_policy: String,
        /// Output directory
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Permissive unpaired-influence semantics
        #[arg(long)]
        unpaired_influence: bool,
    },
    /// Print a model summary.
    Info {
        model: PathBuf,
        /// Also print the enabled-transition table of the initial state
        #[arg(long)]
        transitions: bool,
        /// Permissive unpaired-influence semantics
        #[arg(long)]
        unpaired_influence: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Simulation horizon
    #[arg(long, default_value_t = 10.0)]
    t_end: f64,
    /// Base random seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Permissive unpaired-influence semantics
    #[arg(long)]
    unpaired_influence: bool,
}

enum Failure {
    /// Model or runtime error (exit 1); message already printed.
    Model,
    /// I/O or usage error (exit 2).
    Io(String),
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { model, json } => cmd_validate(&model, json),
        Command::Simulate {
            model,
            run,
            replicas,
            grid,
            wide,
        } => cmd_simulate(&model, &run, replicas, grid.as_deref(), wide),
        Command::Ode {
            model,
            run,
            dt,
            grid,
            emit_matrix,
        } => cmd_ode(&model, &run, dt, grid.as_deref(), emit_matrix),
        Command::Enumerate {
            model,
            cap_default,
            caps,
            max_states,
            cap_policy,
            out_dir,
            unpaired_influence,
        } => cmd_enumerate(
            &model,
            cap_default,
            &caps,
            max_states,
            &cap_policy,
            &out_dir,
            unpaired_influence,
        ),
        Command::Info {
            model,
            transitions,
            unpaired_influence,
        } => cmd_info(&model, transitions, unpaired_influence),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Model) => ExitCode::from(1),
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn read_model_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))
}

fn print_diagnostics(path: &Path, diags: &[Diagnostic]) {
    for d in diags {
        match d.pos {
            Some(pos) => eprintln!("{}:{}: {}: {}", path.display(), pos, d.severity, d.message),
            None => eprintln!("{}: {}: {}", path.display(), d.severity, d.message),
        }
    }
}

fn load_model(path: &Path) -> Result<ModelDef, Failure> {
    let text = read_model_text(path)?;
    match parse_model(&text) {
        Ok(model) => Ok(model),
        Err(diags) => {
            print_diagnostics(path, &diags);
            Err(Failure::Model)
        }
    }
}

/// Parse, validate (printing warnings) and compile.
fn load_compiled(path: &Path, options: EngineOptions) -> Result<CompiledModel, Failure> {
    let model = load_model(path)?;
    match CompiledModel::compile(&model, options) {
        Ok(compiled) => {
            let warnings: Vec<Diagnostic> = validate(&model)
                .into_iter()
                .filter(|d| !d.is_error())
                .collect();
            print_diagnostics(path, &warnings);
            Ok(compiled)
        }
        Err(diags) => {
            print_diagnostics(path, &diags);
            Err(Failure::Model)
        }
    }
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<PathBuf, Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::Io(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, content)
        .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn parse_grid(spec: Option<&str>, t_end: f64) -> Result<Vec<f64>, Failure> {
    let (start, end, step) = match spec {
        None => (0.0, t_end, t_end / 20.0),
        Some(s) => {
            let parts: Vec<&str> = s.split(':').collect();
            if parts.len() != 3 {
                return Err(Failure::Io(format!(
                    "bad grid `{s}`: expected start:end:step"
                )));
            }
            let nums: Vec<f64> = parts
                .iter()
                .map(|p| p.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| Failure::Io(format!("bad grid `{s}`: {e}")))?;
            (nums[0], nums[1], nums[2])
        }
    };
    if step <= 0.0 || end < start {
        return Err(Failure::Io(format!(
            "bad grid: start {start}, end {end}, step {step}"
        )));
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

fn engine_options(unpaired: bool) -> EngineOptions {
    EngineOptions {
        unpaired_influence_fires: unpaired,
    }
}

/// Run `f` in a rayon pool honouring MELA_THREADS, if set.
fn run_in_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    match std::env::var("MELA_THREADS") {
        Err(_) => Ok(f()),
        Ok(v) => {
            let threads: usize = v.parse().map_err(|_| {
                Failure::Io(format!(
                    "MELA_THREADS must be a positive integer, got `{v}`"
                ))
            })?;
            if threads == 0 {
                return Err(Failure::Io("MELA_THREADS must be at least 1".to_string()));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Failure::Io(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

// ---------------------------------------------------------------------------

fn cmd_validate(path: &Path, json: bool) -> CliResult {
    let text = read_model_text(path)?;
    let diags = match parse_model(&text) {
        Ok(model) => validate(&model),
        Err(diags) => diags,
    };
    let ok = all_clear(&diags);
    if json {
        let items: Vec<serde_json::Value> = diags
            .iter()
            .map(|d| {
                serde_json::json!({
                    "severity": d.severity.to_string(),
                    "message": d.message,
                    "line": d.pos.map(|p| p.line),
                    "col": d.pos.map(|p| p.col),
                })
            })
            .collect();
        let report = serde_json::json!({
            "file": path.display().to_string(),
            "valid": ok,
            "diagnostics": items,
        });
        println!("{}", serde_json::to_string_pretty(&report).expect("json"));
    } else {
        print_diagnostics(path, &diags);
        if ok {
            println!("{}: ok", path.display());
        }
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::Model)
    }
}

fn cmd_simulate(
    path: &Path,
    run: &RunArgs,
    replicas: u64,
    grid: Option<&str>,
    wide: bool,
) -> CliResult {
    if run.t_end <= 0.0 {
        return Err(Failure::Io("--t-end must be positive".to_string()));
    }
    if replicas < 1 {
        return Err(Failure::Io("--replicas must be at least 1".to_string()));
    }
    let model = load_compiled(path, engine_options(run.unpaired_influence))?;

    if replicas == 1 {
        let traj = stochastic::ssa_run(&model, run.t_end, run.seed).map_err(|e| {
            eprintln!("error: {e}");
            Failure::Model
        })?;
        let csv = if wide {
            stochastic::trajectory_csv_wide(&model, &traj)
        } else {
            stochastic::trajectory_csv_long(&model, &traj)
        };
        let out = write_file(&run.out_dir, "trajectory.csv", &csv)?;
        println!(
            "seed {}: {} events to t = {}{}",
            run.seed,
            traj.n_events(),
            traj.final_time(),
            if traj.absorbed { " (absorbed)" } else { "" }
        );
        println!("final state: {}", model.format_state(traj.final_state()));
        println!("wrote {}", out.display());
    } else {
        let grid = parse_grid(grid, run.t_end)?;
        let ensemble = run_in_pool(|| {
            stochastic::simulate_ensemble(&model, run.t_end, replicas, run.seed, &grid)
        })?
        .map_err(|e| {
            eprintln!("error: {e}");
            Failure::Model
        })?;
        let out = write_file(
            &run.out_dir,
            "ensemble.csv",
            &stochastic::ensemble_csv(&ensemble),
        )?;
        println!(
            "{} replicas (base seed {}), {} grid points, {} series",
            replicas,
            run.seed,
            ensemble.grid.len(),
            ensemble.series.len()
        );
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn cmd_ode(
    path: &Path,
    run: &RunArgs,
    dt: f64,
    grid: Option<&str>,
    emit_matrix: bool,
) -> CliResult {
    if run.t_end <= 0.0 || dt <= 0.0 {
        return Err(Failure::Io("--t-end and --dt must be positive".to_string()));
    }
    let model = load_compiled(path, engine_options(run.unpaired_influence))?;
    let grid = parse_grid(grid, run.t_end)?;

    let channels = fluid::derive_channels(&model).map_err(|e| {
        eprintln!("error: {e}");
        Failure::Model
    })?;
    let x0: Vec<f64> = model
        .initial_state()
        .counts()
        .iter()
        .map(|c| *c as f64)
        .collect();
    let solution = fluid::integrate(&model, &channels, x0, run.t_end, dt, &grid).map_err(|e| {
        eprintln!("error: {e}");
        Failure::Model
    })?;

    let out = write_file(&run.out_dir, "ode.csv", &fluid::ode_csv(&solution))?;
    let table = write_file(
        &run.out_dir,
        "channels.tsv",
        &fluid::channel_table(&model, &channels),
    )?;
    println!(
        "{} channels, {} series, dt = {dt}",
        channels.len(),
        model.n_series()
    );
    if solution.clipped > 0 {
        if let Some((t, series)) = &solution.first_clip {
            eprintln!(
                "warning: clipped {} negative components (first: {series} at t = {t})",
                solution.clipped
            );
        }
    }
    println!("wrote {}", out.display());
    println!("wrote {}", table.display());
    if emit_matrix {
        let matrix = fluid::stoichiometry_matrix(&model, &channels);
        let mm = write_file(&run.out_dir, "matrix.mtx", &matrix.export_matrix_market())?;
        println!("wrote {}", mm.display());
    }
    Ok(())
}

fn parse_caps(model: &CompiledModel, specs: &[String]) -> Result<ctmc::Caps, Failure> {
    let mut caps = ctmc::Caps::default();
    let names = model.series_names();
    for spec in specs {
        let (series_name, value) = spec
            .rsplit_once('=')
            .ok_or_else(|| Failure::Io(format!("bad cap `{spec}`: expected Agent@loc=N")))?;
        let cap: u64 = value
            .parse()
            .map_err(|_| Failure::Io(format!("bad cap value in `{spec}`")))?;
        let series = names
            .iter()
            .position(|n| n == series_name)
            .ok_or_else(|| Failure::Io(format!("unknown series `{series_name}` in cap")))?;
        caps.per_series.insert(series, cap);
    }
    Ok(caps)
}

fn cmd_enumerate(
    path: &Path,
    cap_default: Option<u64>,
    cap_specs: &[String],
    max_states: usize,
    cap_policy: &str,
    out_dir: &Path,
    unpaired: bool,
) -> CliResult {
    let policy = match cap_policy {
        "truncate" => ctmc::CapPolicy::Truncate,
        "error" => ctmc::CapPolicy::Error,
        other => {
            return Err(Failure::Io(format!(
                "bad --cap-policy `{other}` (expected truncate or error)"
            )))
        }
    };
    let model = load_compiled(path, engine_options(unpaired))?;
    let mut caps = parse_caps(&model, cap_specs)?;
    caps.default = cap_default;

    match ctmc::enumerate_state_space(&model, &caps, max_states, policy) {
        Ok(chain) => {
            let states = write_file(out_dir, "ctmc.states", &chain.export_states())?;
            let transitions = write_file(out_dir, "ctmc.transitions", &chain.export_transitions())?;
            let meta = write_file(out_dir, "ctmc.meta", &chain.export_meta())?;
            println!(
                "{} states, {} transitions, {} truncated",
                chain.states.len(),
                chain.entries.len(),
                chain.truncated
            );
            println!("wrote {}", states.display());
            println!("wrote {}", transitions.display());
            println!("wrote {}", meta.display());
            Ok(())
        }
        Err(e) => {
            eprintln!("error: {e}");
            Err(Failure::Model)
        }
    }
}

fn cmd_info(path: &Path, transitions: bool, unpaired: bool) -> CliResult {
    let parsed = load_model(path)?;
    let model = match CompiledModel::compile(&parsed, engine_options(unpaired)) {
        Ok(m) => m,
        Err(diags) => {
            print_diagnostics(path, &diags);
            return Err(Failure::Model);
        }
    };

    println!("model: {}", path.display());
    println!("space: {} locations", model.space.len());
    if !model.params.is_empty() {
        let params: Vec<String> = model
            .params
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        println!("params: {}", params.join(" "));
    }
    for (i, name) in model.agent_names().iter().enumerate() {
        println!("agent {name}: {} prefixes", model.prefixes_of(i).len());
    }
    for name in model.env_names() {
        println!("env factor {name}");
    }
    let init = model.initial_state();
    println!(
        "init: {} ({} agents)",
        model.format_state(&init),
        init.total_agents()
    );

    if transitions {
        match model.enabled_transitions(&init) {
            Ok(ts) => print!("{}", model.transition_table(&ts)),
            Err(e) => {
                eprintln!("error: {e}");
                return Err(Failure::Model);
            }
        }
    }
    Ok(())
}
