//! Subcommands of the `hgsim` binary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hgsim_core::circuit::{
    execute, unroll, Circuit, ExecuteOptions, Execution, InputSignals, VertexKind,
};
use hgsim_core::gates::{gate_output, GateSpec};
use hgsim_core::modes::SolverConfig;
use hgsim_core::signals::BinarySignal;
use serde_json::json;

use crate::format::CircuitFile;
use crate::mis::FallingPair;
use crate::presets;
use crate::report::{self, cell, Metadata};
use crate::spf::{check_spf, PulseSetup, SweepRange};
use crate::CliError;

const DEFAULT_HORIZON: f64 = 10.0;

#[derive(Debug, Parser)]
#[command(name = "hgsim", version, about = "Timing simulation of digitized hybrid gate circuits")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Simulation horizon; defaults to the file's `defaults.horizon`, else 10.
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    /// Relative integrator tolerance.
    #[arg(long, global = true)]
    pub rel_tol: Option<f64>,
    /// Absolute integrator tolerance.
    #[arg(long, global = true)]
    pub abs_tol: Option<f64>,
    /// Threshold crossing time tolerance.
    #[arg(long, global = true)]
    pub time_tol: Option<f64>,
    /// Seed for shuffling event insertion order.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Directory for CSV, JSON and TOML outputs.
    #[arg(long, global = true, default_value = "hgsim-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the circuit rules and report every violation.
    Validate { circuit: String },
    /// Execute the circuit and dump every vertex signal.
    Simulate {
        circuit: String,
        /// Input signal CSV for a port, as `PORT=FILE`; overrides the file's stimulus.
        #[arg(long = "input", value_name = "PORT=FILE")]
        inputs: Vec<String>,
        /// Also write the analog trajectory of every gate.
        #[arg(long)]
        trajectories: bool,
        /// Samples per trajectory dump.
        #[arg(long, default_value_t = 2000)]
        samples: usize,
    },
    /// Output norm, shortest pulse and last transition against input pulse width.
    SweepPulse {
        circuit: String,
        #[command(flatten)]
        sweep: PulseSweepArgs,
        /// Bisect for a width whose output norm is within `tol` below this value.
        #[arg(long)]
        target_norm: Option<f64>,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Rising output delay of a two-input gate against input fall separation.
    SweepMis {
        circuit: String,
        /// Gate to measure; defaults to the only two-input gate.
        #[arg(long)]
        gate: Option<String>,
        #[arg(long, default_value_t = 0.0)]
        lo: f64,
        #[arg(long, default_value_t = 5.0)]
        hi: f64,
        #[arg(long, default_value_t = 51)]
        count: usize,
        /// Input slot that falls first.
        #[arg(long, value_enum, default_value_t = Slot::B)]
        first: Slot,
        /// Time of the first fall.
        #[arg(long, default_value_t = 1.0)]
        t0: f64,
    },
    /// Unroll feedback loops from a vertex and tabulate the z-values.
    Unroll {
        circuit: String,
        #[arg(long)]
        from: String,
        #[arg(long)]
        k: usize,
    },
    /// Evaluate the short-pulse filtration predicates F1–F5 over a width sweep.
    SpfCheck {
        circuit: String,
        #[command(flatten)]
        sweep: PulseSweepArgs,
        /// F4 fails when some output pulse is at most this wide.
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        /// F5 fails when an output transition comes later than this after the pulse end.
        #[arg(long, default_value_t = 2.0)]
        settle: f64,
    },
}

#[derive(Debug, Clone, Args)]
pub struct PulseSweepArgs {
    #[arg(long, default_value_t = 0.01)]
    pub lo: f64,
    #[arg(long, default_value_t = 1.0)]
    pub hi: f64,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// Pulse start time.
    #[arg(long, default_value_t = 1.0)]
    pub start: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Slot {
    A,
    B,
}

/// A parsed circuit file with its source name and directory.
pub struct Loaded {
    pub name: String,
    pub file: CircuitFile,
    pub circuit: Circuit,
    pub base: PathBuf,
}

/// Reads `source` as a path, or as a preset name when no such file exists.
pub fn load(source: &str, time_tol: Option<f64>) -> Result<Loaded, CliError> {
    let path = Path::new(source);
    let (text, base) = if path.exists() {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        (text, path.parent().map(Path::to_path_buf).unwrap_or_default())
    } else if let Some(text) = presets::preset(source) {
        (text.to_string(), PathBuf::from("."))
    } else {
        let names: Vec<&str> = presets::names().collect();
        return Err(CliError::Io(format!(
            "{source}: no such file or preset (presets: {})",
            names.join(", ")
        )));
    };
    let file = CircuitFile::parse(&text)?;
    let circuit = file.build(time_tol)?;
    Ok(Loaded {
        name: source.to_string(),
        file,
        circuit,
        base,
    })
}

struct Context {
    global: Global,
    loaded: Loaded,
    horizon: f64,
    opts: ExecuteOptions,
}

impl Context {
    fn new(global: &Global, source: &str) -> Result<Self, CliError> {
        let loaded = load(source, global.time_tol)?;
        let horizon = global
            .horizon
            .or(loaded.file.defaults.horizon)
            .unwrap_or(DEFAULT_HORIZON);
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(CliError::Validation(format!("horizon must be positive, got {horizon}")));
        }
        let mut solver = SolverConfig::default();
        if let Some(t) = global.rel_tol.or(loaded.file.defaults.rel_tol) {
            solver.rel_tol = t;
        }
        if let Some(t) = global.abs_tol.or(loaded.file.defaults.abs_tol) {
            solver.abs_tol = t;
        }
        let mut opts = ExecuteOptions::new(horizon);
        opts.solver = solver;
        opts.insertion_seed = global.seed;
        Ok(Self {
            global: global.clone(),
            loaded,
            horizon,
            opts,
        })
    }

    fn time_tol(&self) -> f64 {
        self.global
            .time_tol
            .or(self.loaded.file.defaults.time_tol)
            .unwrap_or_else(|| hgsim_core::threshold::ThresholdSpec::new(0.0).time_tol)
    }

    fn metadata(&self, command: &str) -> Metadata {
        Metadata::new(command)
            .with("circuit", &self.loaded.name)
            .with("horizon", self.horizon)
            .with("rel_tol", self.opts.solver.rel_tol)
            .with("abs_tol", self.opts.solver.abs_tol)
            .with("time_tol", self.time_tol())
            .with("seed", self.global.seed.map_or("none".to_string(), |s| s.to_string()))
    }

    fn out(&self, name: &str) -> PathBuf {
        self.global.out_dir.join(name)
    }

    fn stimuli(&self) -> Result<InputSignals, CliError> {
        Ok(self.loaded.file.inputs(self.horizon, &self.loaded.base)?)
    }
}

/// Parses the arguments and runs one subcommand.
pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.global.jobs {
        // the global pool can only be configured once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let g = &cli.global;
    match &cli.command {
        Command::Validate { circuit } => validate(&Context::new(g, circuit)?),
        Command::Simulate {
            circuit,
            inputs,
            trajectories,
            samples,
        } => simulate(&Context::new(g, circuit)?, inputs, *trajectories, *samples),
        Command::SweepPulse {
            circuit,
            sweep,
            target_norm,
            tol,
        } => sweep_pulse(&Context::new(g, circuit)?, sweep, *target_norm, *tol),
        Command::SweepMis {
            circuit,
            gate,
            lo,
            hi,
            count,
            first,
            t0,
        } => {
            let range = SweepRange::new(*lo, *hi, *count, false)?;
            sweep_mis(&Context::new(g, circuit)?, gate.as_deref(), &range, *first, *t0)
        }
        Command::Unroll { circuit, from, k } => unroll_cmd(&Context::new(g, circuit)?, from, *k),
        Command::SpfCheck {
            circuit,
            sweep,
            eps,
            settle,
        } => spf_check(&Context::new(g, circuit)?, sweep, *eps, *settle),
    }
}

fn validate(cx: &Context) -> Result<(), CliError> {
    let v = cx.loaded.circuit.validate();
    for d in &v.diagnostics {
        println!("{d}");
    }
    if !v.is_ok() {
        return Err(CliError::Validation(format!(
            "{} rule violations",
            v.diagnostics.len()
        )));
    }
    let delta = v.delta_min.map_or("none".to_string(), |d| d.to_string());
    println!("ok: {} vertices, minimum delay {delta}", cx.loaded.circuit.len());
    Ok(())
}

fn parse_input(spec: &str, horizon: f64) -> Result<(String, BinarySignal), CliError> {
    let (port, file) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Validation(format!("`{spec}` is not PORT=FILE")))?;
    let path = Path::new(file);
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let s = BinarySignal::from_csv(&text)
        .and_then(|s| s.with_horizon(horizon))
        .map_err(|e| CliError::Validation(format!("{file}: {e}")))?;
    Ok((port.to_string(), s))
}

fn simulate(cx: &Context, overrides: &[String], trajectories: bool, samples: usize) -> Result<(), CliError> {
    let mut inputs = cx.stimuli()?;
    for spec in overrides {
        let (port, s) = parse_input(spec, cx.horizon)?;
        inputs.insert(port, s);
    }
    let c = &cx.loaded.circuit;
    let ex = execute(c, &inputs, &cx.opts)?;
    let meta = cx.metadata("simulate");
    for (v, id) in ex.ids.iter().enumerate() {
        let text = meta.clone().with("vertex", id).header() + &ex.signal(v).to_csv();
        report::write(&cx.out(&format!("{id}.csv")), &text)?;
    }
    if trajectories {
        write_trajectories(cx, &ex, samples, &meta)?;
    }
    let transitions: BTreeMap<&str, usize> =
        ex.ids.iter().map(String::as_str).zip(ex.records.iter().map(Vec::len)).collect();
    let summary = json!({
        "metadata": meta.entries.iter().cloned().collect::<BTreeMap<_, _>>(),
        "iterations": ex.iteration_times.len(),
        "iteration_times": ex.iteration_times,
        "events_processed": ex.events_processed,
        "mode_switches": ex.mode_switches,
        "depth_histogram": ex.depth_histogram(),
        "transitions": transitions,
    });
    let text = serde_json::to_string_pretty(&summary).expect("json values serialize") + "\n";
    report::write(&cx.out("summary.json"), &text)?;
    println!(
        "{} iterations, {} events, {} transitions written to {}",
        ex.iteration_times.len(),
        ex.events_processed,
        transitions.values().sum::<usize>(),
        cx.global.out_dir.display()
    );
    Ok(())
}

fn write_trajectories(cx: &Context, ex: &Execution, samples: usize, meta: &Metadata) -> Result<(), CliError> {
    let c = &cx.loaded.circuit;
    for v in c.gates() {
        let VertexKind::Gate(g) = &c.vertex(v).kind else { continue };
        let ins: Vec<BinarySignal> = c
            .drivers(v)
            .into_iter()
            .map(|d| ex.signal(d.expect("validated circuit")))
            .collect();
        let run = gate_output(g, &ins, &cx.opts.solver)?;
        let id = &c.vertex(v).id;
        let text = run.trajectory.to_csv(samples, &meta.clone().with("vertex", id).entries);
        report::write(&cx.out(&format!("{id}.trajectory.csv")), &text)?;
    }
    Ok(())
}

fn sweep_pulse(cx: &Context, args: &PulseSweepArgs, target: Option<f64>, tol: f64) -> Result<(), CliError> {
    let range = SweepRange::new(args.lo, args.hi, args.count, true)?;
    let setup = PulseSetup::new(&cx.loaded.circuit, args.start, cx.opts.clone())?;
    let mut meta = cx
        .metadata("sweep-pulse")
        .with("start", args.start)
        .with("lo", range.lo)
        .with("hi", range.hi);
    let rows = match target {
        Some(eps) => {
            meta.push("target_norm", eps).push("tol", tol);
            let row = setup.bisect_norm(range.lo, range.hi, eps, tol)?;
            println!("width {} gives norm {}", row.width, row.norm);
            vec![row]
        }
        None => {
            meta.push("count", range.count);
            setup.sweep(&range.points())?
        }
    };
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.width.to_string(),
                r.norm.to_string(),
                cell(r.min_pulse),
                cell(r.last_transition),
                r.transitions.to_string(),
            ]
        })
        .collect();
    let columns = ["width", "norm", "min_pulse", "last_transition", "transitions"];
    let path = cx.out("sweep_pulse.csv");
    report::write(&path, &report::table(&meta, &columns, &cells))?;
    println!("{} rows written to {}", rows.len(), path.display());
    Ok(())
}

fn two_input_gate(c: &Circuit, id: Option<&str>) -> Result<(String, Arc<GateSpec>), CliError> {
    let candidates: Vec<(String, Arc<GateSpec>)> = c
        .gates()
        .into_iter()
        .filter_map(|v| match &c.vertex(v).kind {
            VertexKind::Gate(g) if id.map_or(g.arity() == 2, |id| id == c.vertex(v).id) => {
                Some((c.vertex(v).id.clone(), g.clone()))
            }
            _ => None,
        })
        .collect();
    match (candidates.len(), id) {
        (1, _) => Ok(candidates.into_iter().next().expect("one candidate")),
        (0, Some(id)) => Err(CliError::Validation(format!("no gate `{id}`"))),
        _ => Err(CliError::Validation(
            "name the gate to measure with --gate".into(),
        )),
    }
}

fn sweep_mis(cx: &Context, gate: Option<&str>, range: &SweepRange, first: Slot, t0: f64) -> Result<(), CliError> {
    let (id, g) = two_input_gate(&cx.loaded.circuit, gate)?;
    let pair = FallingPair {
        first: match first {
            Slot::A => 0,
            Slot::B => 1,
        },
        t0,
        horizon: cx.horizon,
    };
    let rows = pair.sweep(&g, &range.points(), &cx.opts.solver)?;
    let meta = cx
        .metadata("sweep-mis")
        .with("gate", &id)
        .with("first", if pair.first == 0 { "a" } else { "b" })
        .with("t0", t0)
        .with("count", range.count);
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.separation.to_string(), cell(r.delay)])
        .collect();
    let path = cx.out("sweep_mis.csv");
    report::write(&path, &report::table(&meta, &["separation", "delay"], &cells))?;
    println!("{} rows written to {}", rows.len(), path.display());
    Ok(())
}

fn unroll_cmd(cx: &Context, from: &str, k: usize) -> Result<(), CliError> {
    let c = &cx.loaded.circuit;
    let u = unroll(c, from, k)?;
    let file = cx.loaded.file.from_unrolled(&u, c);
    report::write(&cx.out("unrolled.toml"), &file.to_toml())?;
    let cells: Vec<Vec<String>> = u
        .circuit
        .vertices()
        .iter()
        .enumerate()
        .map(|(v, vx)| {
            vec![
                vx.id.clone(),
                u.origin[v].map_or(String::new(), |o| c.vertex(o).id.clone()),
                u.level[v].map_or(String::new(), |l| l.to_string()),
                u.z[v].to_string(),
            ]
        })
        .collect();
    for row in &cells {
        println!("z({}) = {}", row[0], row[3]);
    }
    let meta = cx.metadata("unroll").with("from", from).with("k", k);
    let table = report::table(&meta, &["vertex", "origin", "level", "z"], &cells);
    report::write(&cx.out("z_values.csv"), &table)?;
    Ok(())
}

fn spf_check(cx: &Context, args: &PulseSweepArgs, eps: f64, settle: f64) -> Result<(), CliError> {
    let range = SweepRange::new(args.lo, args.hi, args.count, true)?;
    let report = check_spf(&cx.loaded.circuit, &range, args.start, eps, settle, &cx.opts)?;
    for p in &report.predicates {
        println!("{} {}: {}", p.name, if p.holds { "holds" } else { "fails" }, p.witness);
    }
    let meta = cx
        .metadata("spf-check")
        .with("start", args.start)
        .with("eps", eps)
        .with("settle", settle)
        .with("count", range.count);
    let cells: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.width.to_string(),
                r.norm.to_string(),
                cell(r.min_pulse),
                cell(r.last_transition),
                r.transitions.to_string(),
            ]
        })
        .collect();
    let columns = ["width", "norm", "min_pulse", "last_transition", "transitions"];
    report::write(&cx.out("spf_sweep.csv"), &report::table(&meta, &columns, &cells))?;
    Ok(())
}
