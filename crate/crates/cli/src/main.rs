use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mgstab_core::criteria::{ConditionId, StabilityReport};
use mgstab_core::dynamics::{classify_run, settle_target};
use mgstab_core::rlcbench::compare_methods;
use mgstab_core::sweep::{Layer, RegionGrid, TriState};
use mgstab_core::{
    compare_controllers, parse_scenario, parse_sweep, presets, simulate, stability_report, sweep, Error, Scenario,
};
use serde_json::json;

#[derive(Parser)]
#[command(name = "mgstab", version, about = "Stability analysis of DC microgrids with constant power loads")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Large- and small-signal verdicts for a scenario (JSON on stdout, summary on stderr).
    Check { scenario: PathBuf },
    /// Integrate a scenario and classify the trajectory.
    Simulate {
        scenario: PathBuf,
        /// Write the full trajectory here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Two-parameter stability-region sweep.
    Sweep {
        spec: PathBuf,
        /// Output stem: writes `<stem>_small.csv`, `<stem>_large.csv`, `<stem>_sim.csv` and `<stem>.gp`.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Exact poles vs proposed criteria vs Brayton–Moser on the RLC circuit.
    RlcBench {
        #[arg(long, default_value_t = 1.0)]
        l: f64,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
        rl: f64,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Print the full comparison as JSON instead of the table.
        #[arg(long)]
        json: bool,
    },
    /// Simulate a scenario and its droop-controller twin.
    CompareControllers { scenario: PathBuf },
    /// Write the reference scenario and sweep files.
    GenExamples {
        #[arg(long, default_value = "scenarios")]
        dir: PathBuf,
    },
}

enum Failure {
    Input(String),
    Analysis(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Analysis(e.to_string())
        }
    }
}

type CliResult = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| Failure::Analysis(format!("{}: {e}", path.display())))
}

fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    let s = parse_scenario(&read(path)?)?;
    for w in s.grid.warnings() {
        eprintln!("warning: {w}");
    }
    Ok(s)
}

macro_rules! print_json {
    ($v:expr) => {
        println!("{}", serde_json::to_string_pretty(&$v).expect("report serializes"))
    };
}

fn verdict_word(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "stable",
        Some(false) => "not established",
        None => "n/a",
    }
}

fn summary(r: &StabilityReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "large-signal: {}", verdict_word(r.large_signal));
    let _ = writeln!(s, "small-signal: {}", verdict_word(r.small_signal));
    let _ = writeln!(s, "P_max = {:.4} W", r.p_max);
    for c in &r.conditions {
        let tag = match (c.id, c.equilibrium) {
            (ConditionId::C4, Some(k)) => format!("C4[{k}]"),
            (id, _) => format!("{id:?}"),
        };
        let _ = writeln!(
            s,
            "  {tag:<6} {}  margin {:+.4e}  {}",
            if c.pass { "pass" } else { "FAIL" },
            c.margin,
            c.detail
        );
    }
    for (k, e) in r.equilibria.iter().enumerate() {
        let _ = writeln!(
            s,
            "  eq[{k}] v_l = {:.4} V ({:?}{}), max Re λ = {:+.4e}",
            e.equilibrium.v_l,
            e.equilibrium.branch_tag,
            if e.equilibrium.on_hyperbola { "" } else { ", constant-current" },
            e.max_real_eigenvalue
        );
    }
    for n in &r.notes {
        let _ = writeln!(s, "  note: {n}");
    }
    s
}

fn check(path: &Path) -> CliResult {
    let s = load_scenario(path)?;
    let r = stability_report(&s.grid)?;
    eprint!("{}", summary(&r));
    print_json!(r);
    Ok(())
}

fn simulate_cmd(path: &Path, csv: Option<&Path>) -> CliResult {
    let s = load_scenario(path)?;
    let series = simulate(&s)?;
    let m = classify_run(&series, &s.grid)?;
    if let Some(p) = csv {
        write(p, &series.to_csv())?;
    }
    print_json!(json!({
        "metrics": m,
        "target_v_l": settle_target(&s.grid),
        "samples": series.times.len(),
        "termination": format!("{:?}", series.termination),
        "events": series.events.iter().map(|e| json!({"t": e.t, "kind": e.kind})).collect::<Vec<_>>(),
    }));
    Ok(())
}

fn counts(g: &RegionGrid, f: impl Fn(&mgstab_core::sweep::Cell) -> Option<TriState>) -> serde_json::Value {
    let n = |t: TriState| g.cells.iter().filter(|c| f(c) == Some(t)).count();
    json!({
        "stable": n(TriState::Stable),
        "unstable": n(TriState::Unstable),
        "no_equilibrium": n(TriState::NoEquilibrium),
    })
}

fn sweep_cmd(path: &Path, csv: Option<&Path>) -> CliResult {
    let spec = parse_sweep(&read(path)?)?;
    let g = sweep(&spec)?;
    let layers: Vec<Layer> = Layer::ALL.into_iter().filter(|&l| g.has_layer(l)).collect();
    let mut written = Vec::new();
    if let Some(stem) = csv {
        let stem = stem.with_extension("");
        let name = stem.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        for &l in &layers {
            let p = PathBuf::from(format!("{}_{}.csv", stem.display(), l.suffix()));
            write(&p, &g.to_csv(l))?;
            written.push(p.display().to_string());
        }
        let gp = stem.with_extension("gp");
        write(&gp, &g.gnuplot_script(&name, &layers))?;
        written.push(gp.display().to_string());
    }
    let errors = g.cells.iter().filter(|c| !c.errors.is_empty()).count();
    print_json!(json!({
        "axis1": g.axis1_path,
        "axis2": g.axis2_path,
        "cells": g.cells.len(),
        "small_signal": counts(&g, |c| c.small_signal),
        "large_signal": counts(&g, |c| c.large_signal),
        "simulated": g.cells.iter().filter(|c| c.sim.is_some()).count(),
        "containment_violations": g.containment_violations().len(),
        "mismatch_cells": g.mismatch_cells().iter().map(|c| [c.x, c.y]).collect::<Vec<_>>(),
        "cells_with_errors": errors,
        "files": written,
    }));
    Ok(())
}

fn rlc_bench(l: f64, c: f64, rl: f64, samples: usize, as_json: bool) -> CliResult {
    let r = compare_methods(l, c, rl, samples)?;
    if as_json {
        print_json!(r);
    } else {
        print!("{}", r.to_text());
    }
    Ok(())
}

fn compare_cmd(path: &Path) -> CliResult {
    let s = load_scenario(path)?;
    let c = compare_controllers(&s)?;
    for (name, r) in [("proposed", &c.proposed), ("droop", &c.droop)] {
        eprintln!(
            "{name:<9} steady {:.4} V, startup overshoot {}, post-plug-in overshoot {}",
            r.metrics.steady_value,
            r.startup.map_or("n/a".into(), |w| format!("{:.4} V", w.overshoot)),
            r.post_plug.map_or("n/a".into(), |w| format!("{:.4} V", w.overshoot)),
        );
    }
    print_json!(c);
    Ok(())
}

fn gen_examples(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| Failure::Analysis(format!("{}: {e}", dir.display())))?;
    for (stem, s) in presets::all() {
        let p = dir.join(format!("{stem}.toml"));
        write(&p, &s.to_toml())?;
        println!("{}", p.display());
    }
    let p = dir.join("region_sweep.toml");
    write(&p, &presets::region_sweep(50).to_toml())?;
    println!("{}", p.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = match &cli.command {
        Command::Check { scenario } => check(scenario),
        Command::Simulate { scenario, csv } => simulate_cmd(scenario, csv.as_deref()),
        Command::Sweep { spec, csv } => sweep_cmd(spec, csv.as_deref()),
        Command::RlcBench {
            l,
            c,
            rl,
            samples,
            json,
        } => rlc_bench(*l, *c, *rl, *samples, *json),
        Command::CompareControllers { scenario } => compare_cmd(scenario),
        Command::GenExamples { dir } => gen_examples(dir),
    };
    match out {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Analysis(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
