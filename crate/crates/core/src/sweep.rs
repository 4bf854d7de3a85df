//! Two-parameter stability-region sweeps.
//!
//! A sweep document is a scenario plus a `[sweep]` table:
//!
//! ```toml
//! [sweep]
//! mode = "both"            # small_signal | large_signal | both | simulation
//! axis1 = { path = "cpl.p_l", min = 100.0, max = 2000.0, n = 50 }
//! axis2 = { path = "load.c_l", min = 0.01, max = 0.2, n = 50 }
//! # optional: simulate only cells within `radius` (fraction of each axis span) of `center`
//! simulate_near = { center = [1500.0, 0.07], radius = 0.1 }
//! ```
//!
//! Parameter paths: `cpl.p_l`, `cpl.v_min`, `load.c_l`, `load.r_l`,
//! `branch.<field>` (every branch) and `branch[k].<field>`, with `<field>` one
//! of `v_ref r_t l_t c_b r_p r_q l_q r_pd`.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{large_signal_verdict, small_signal_verdict};
use crate::dynamics::{classify_run, simulate, Verdict};
use crate::equilibrium::{solve_equilibria, upper_equilibrium};
use crate::error::{Error, Result};
use crate::netmodel::{parse_document, scenario_from_table, Controller, CplParams, GridSpec, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BranchField {
    VRef,
    RT,
    LT,
    CB,
    RP,
    RQ,
    LQ,
    RPd,
}

const BRANCH_FIELDS: [(&str, BranchField); 8] = [
    ("v_ref", BranchField::VRef),
    ("r_t", BranchField::RT),
    ("l_t", BranchField::LT),
    ("c_b", BranchField::CB),
    ("r_p", BranchField::RP),
    ("r_q", BranchField::RQ),
    ("l_q", BranchField::LQ),
    ("r_pd", BranchField::RPd),
];

/// A numeric scenario field addressed by a sweep axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamPath {
    CplPower,
    CplVmin,
    LoadCapacitance,
    LoadResistance,
    /// `index: None` sets the field on every branch.
    Branch { index: Option<usize>, field: BranchField },
}

impl fmt::Display for ParamPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamPath::CplPower => f.write_str("cpl.p_l"),
            ParamPath::CplVmin => f.write_str("cpl.v_min"),
            ParamPath::LoadCapacitance => f.write_str("load.c_l"),
            ParamPath::LoadResistance => f.write_str("load.r_l"),
            ParamPath::Branch { index, field } => {
                let name = BRANCH_FIELDS.iter().find(|p| p.1 == *field).expect("listed").0;
                match index {
                    Some(k) => write!(f, "branch[{k}].{name}"),
                    None => write!(f, "branch.{name}"),
                }
            }
        }
    }
}

impl FromStr for ParamPath {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let simple = match s {
            "cpl.p_l" => Some(ParamPath::CplPower),
            "cpl.v_min" => Some(ParamPath::CplVmin),
            "load.c_l" => Some(ParamPath::LoadCapacitance),
            "load.r_l" => Some(ParamPath::LoadResistance),
            _ => None,
        };
        if let Some(p) = simple {
            return Ok(p);
        }
        let unknown = || format!("unknown parameter path `{s}`");
        let rest = s.strip_prefix("branch").ok_or_else(unknown)?;
        let (index, field) = if let Some(f) = rest.strip_prefix('.') {
            (None, f)
        } else {
            let rest = rest.strip_prefix('[').ok_or_else(unknown)?;
            let (k, f) = rest.split_once("].").ok_or_else(unknown)?;
            (Some(k.parse::<usize>().map_err(|_| unknown())?), f)
        };
        let field = BRANCH_FIELDS.iter().find(|p| p.0 == field).ok_or_else(unknown)?.1;
        Ok(ParamPath::Branch { index, field })
    }
}

impl ParamPath {
    /// Checks that the path addresses a field that exists on `grid`.
    pub fn resolve(&self, grid: &GridSpec) -> std::result::Result<(), String> {
        if let ParamPath::Branch { index, field } = *self {
            let targets: Vec<usize> = match index {
                Some(k) if k >= grid.n_branches() => {
                    return Err(format!("branch index {k} out of range (grid has {})", grid.n_branches()))
                }
                Some(k) => vec![k],
                None => (0..grid.n_branches()).collect(),
            };
            for k in targets {
                let proposed = grid.branches[k].is_proposed();
                let ok = match field {
                    BranchField::RP | BranchField::RQ | BranchField::LQ => proposed,
                    BranchField::RPd => !proposed,
                    _ => true,
                };
                if !ok {
                    return Err(format!("branch[{k}] has no field `{self}`"));
                }
            }
        }
        Ok(())
    }

    /// Writes `value` into `grid` (no validation).
    pub fn apply(&self, grid: &mut GridSpec, value: f64) {
        match *self {
            ParamPath::CplPower => grid.cpl = grid.cpl.with_power(value),
            ParamPath::CplVmin => grid.cpl = CplParams::new(grid.cpl.p_l, value, grid.cpl.plug_in_time),
            ParamPath::LoadCapacitance => grid.load.c_l = value,
            ParamPath::LoadResistance => grid.load.r_l = value,
            ParamPath::Branch { index, field } => {
                let n = grid.n_branches();
                let range = index.map_or(0..n, |k| k..k + 1);
                for br in &mut grid.branches[range] {
                    match (field, &mut br.controller) {
                        (BranchField::VRef, _) => br.v_ref = value,
                        (BranchField::RT, _) => br.r_t = value,
                        (BranchField::LT, _) => br.l_t = value,
                        (BranchField::CB, _) => br.c_b = value,
                        (BranchField::RP, Controller::Proposed { r_p, .. }) => *r_p = value,
                        (BranchField::RQ, Controller::Proposed { r_q, .. }) => *r_q = value,
                        (BranchField::LQ, Controller::Proposed { l_q, .. }) => *l_q = value,
                        (BranchField::RPd, Controller::Droop { r_pd }) => *r_pd = value,
                        _ => {}
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub path: ParamPath,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Axis {
    /// Evenly spaced points, both ends included.
    pub fn values(&self) -> Vec<f64> {
        let step = (self.max - self.min) / (self.n - 1) as f64;
        (0..self.n)
            .map(|k| if k + 1 == self.n { self.max } else { self.min + step * k as f64 })
            .collect()
    }

    fn validate(&self, prefix: &str, grid: &GridSpec) -> Result<()> {
        self.path
            .resolve(grid)
            .map_err(|m| Error::validation(format!("{prefix}.path"), m))?;
        if self.n < 2 {
            return Err(Error::validation(format!("{prefix}.n"), "needs at least 2 points"));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min < self.max) {
            return Err(Error::validation(
                format!("{prefix}.min"),
                format!("need finite min < max (got {} .. {})", self.min, self.max),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    SmallSignal,
    LargeSignal,
    Both,
    /// Both criteria plus a simulation in every cell (or every cell of the window).
    Simulation,
}

/// Neighbourhood of `center` in which cells are also simulated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimWindow {
    pub center: [f64; 2],
    /// Half-width as a fraction of each axis span.
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// Supplies every non-swept parameter, and `t_end` / tolerances for simulated cells.
    pub base: Scenario,
    pub axis1: Axis,
    pub axis2: Axis,
    pub mode: SweepMode,
    pub sim_window: Option<SimWindow>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAxis {
    path: String,
    min: f64,
    max: f64,
    n: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    #[serde(default = "default_mode")]
    mode: SweepMode,
    axis1: RawAxis,
    axis2: RawAxis,
    simulate_near: Option<SimWindow>,
}

fn default_mode() -> SweepMode {
    SweepMode::Both
}

impl RawAxis {
    fn into_axis(self, prefix: &str) -> Result<Axis> {
        let path = self
            .path
            .parse()
            .map_err(|m: String| Error::validation(format!("{prefix}.path"), m))?;
        Ok(Axis {
            path,
            min: self.min,
            max: self.max,
            n: self.n,
        })
    }
}

/// Parses a scenario document carrying a `[sweep]` table.
pub fn parse_sweep(text: &str) -> Result<SweepSpec> {
    let (table, sweep) = parse_document(text)?;
    let sweep = sweep.ok_or_else(|| Error::validation("sweep", "missing [sweep] table"))?;
    let raw: RawSweep = sweep
        .try_into()
        .map_err(|e: toml::de::Error| Error::Syntax(format!("in [sweep]: {e}")))?;
    let spec = SweepSpec {
        base: scenario_from_table(table)?,
        axis1: raw.axis1.into_axis("sweep.axis1")?,
        axis2: raw.axis2.into_axis("sweep.axis2")?,
        mode: raw.mode,
        sim_window: raw.simulate_near,
    };
    spec.validate()?;
    Ok(spec)
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        self.axis1.validate("sweep.axis1", &self.base.grid)?;
        self.axis2.validate("sweep.axis2", &self.base.grid)?;
        if let Some(w) = &self.sim_window {
            if !(w.radius > 0.0 && w.center.iter().all(|c| c.is_finite())) {
                return Err(Error::validation("sweep.simulate_near", "need finite center and radius > 0"));
            }
        }
        Ok(())
    }

    /// Scenario document plus `[sweep]` table, readable by [`parse_sweep`].
    pub fn to_toml(&self) -> String {
        let mode = match self.mode {
            SweepMode::SmallSignal => "small_signal",
            SweepMode::LargeSignal => "large_signal",
            SweepMode::Both => "both",
            SweepMode::Simulation => "simulation",
        };
        let mut s = self.base.to_toml();
        let _ = write!(s, "\n[sweep]\nmode = \"{mode}\"\n");
        for (name, a) in [("axis1", &self.axis1), ("axis2", &self.axis2)] {
            let _ = writeln!(
                s,
                "{name} = {{ path = \"{}\", min = {:?}, max = {:?}, n = {} }}",
                a.path, a.min, a.max, a.n
            );
        }
        if let Some(w) = &self.sim_window {
            let _ = writeln!(
                s,
                "simulate_near = {{ center = [{:?}, {:?}], radius = {:?} }}",
                w.center[0], w.center[1], w.radius
            );
        }
        s
    }

    fn simulates(&self, x: f64, y: f64) -> bool {
        let inside = |w: &SimWindow| {
            (x - w.center[0]).abs() <= w.radius * (self.axis1.max - self.axis1.min) * (1.0 + 1e-12)
                && (y - w.center[1]).abs() <= w.radius * (self.axis2.max - self.axis2.min) * (1.0 + 1e-12)
        };
        match (&self.sim_window, self.mode) {
            (Some(w), _) => inside(w),
            (None, SweepMode::Simulation) => true,
            (None, _) => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TriState {
    Stable,
    Unstable,
    NoEquilibrium,
}

impl TriState {
    pub fn code(self) -> i32 {
        match self {
            TriState::Unstable => 0,
            TriState::Stable => 1,
            TriState::NoEquilibrium => 2,
        }
    }
}

fn verdict_code(v: Verdict) -> i32 {
    match v {
        Verdict::Oscillating => 0,
        Verdict::Stable => 1,
        Verdict::Diverged => 2,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub x: f64,
    pub y: f64,
    pub small_signal: Option<TriState>,
    pub large_signal: Option<TriState>,
    pub sim: Option<Verdict>,
    /// `-max Re λ` at the upper equilibrium.
    pub small_margin: Option<f64>,
    /// `1 - σ_max`.
    pub sigma_margin: Option<f64>,
    /// Best C4 margin over the operating equilibria.
    pub c4_margin: Option<f64>,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionGrid {
    pub axis1_path: String,
    pub axis2_path: String,
    pub axis1: Vec<f64>,
    pub axis2: Vec<f64>,
    /// Row-major over `axis2`: cell `(i, j)` sits at `j * axis1.len() + i`.
    pub cells: Vec<Cell>,
}

fn eval_cell(spec: &SweepSpec, x: f64, y: f64) -> Cell {
    let mut cell = Cell {
        x,
        y,
        small_signal: None,
        large_signal: None,
        sim: None,
        small_margin: None,
        sigma_margin: None,
        c4_margin: None,
        errors: Vec::new(),
    };
    let mut grid = spec.base.grid.clone();
    spec.axis1.path.apply(&mut grid, x);
    spec.axis2.path.apply(&mut grid, y);
    if let Err(e) = grid.validate() {
        cell.errors.push(e.to_string());
        return cell;
    }
    let small = spec.mode != SweepMode::LargeSignal;
    let large = spec.mode != SweepMode::SmallSignal;

    if small {
        match upper_equilibrium(&grid) {
            Ok(eq) => {
                let (ev, pass) = small_signal_verdict(&grid, &eq);
                cell.small_margin = ev.first().map(|z| -z.0);
                cell.small_signal = Some(if pass { TriState::Stable } else { TriState::Unstable });
            }
            Err(Error::NoEquilibrium { .. }) => cell.small_signal = Some(TriState::NoEquilibrium),
            Err(e) => cell.errors.push(e.to_string()),
        }
    }
    if large {
        let operating = solve_equilibria(&grid, true).map(|e| !e.is_empty());
        match (operating, large_signal_verdict(&grid)) {
            (Ok(false) | Err(Error::NoEquilibrium { .. }), _) => cell.large_signal = Some(TriState::NoEquilibrium),
            (Err(e), _) | (_, Err(e)) => cell.errors.push(e.to_string()),
            (Ok(true), Ok(r)) => {
                cell.sigma_margin = r.sigma_max.map(|s| 1.0 - s);
                cell.c4_margin = r
                    .conditions
                    .iter()
                    .filter(|c| c.equilibrium.is_some_and(|k| r.equilibria[k].operating))
                    .map(|c| c.margin)
                    .reduce(f64::max);
                cell.large_signal = Some(if r.large_signal == Some(true) {
                    TriState::Stable
                } else {
                    TriState::Unstable
                });
            }
        }
    }
    if spec.simulates(x, y) {
        let scenario = Scenario {
            grid,
            ..spec.base.clone()
        };
        match simulate(&scenario).and_then(|s| classify_run(&s, &scenario.grid)) {
            Ok(m) => cell.sim = Some(m.verdict),
            Err(e) => cell.errors.push(e.to_string()),
        }
    }
    cell
}

/// Evaluates every cell in parallel. Per-cell failures land in [`Cell::errors`].
pub fn sweep(spec: &SweepSpec) -> Result<RegionGrid> {
    spec.validate()?;
    let xs = spec.axis1.values();
    let ys = spec.axis2.values();
    let n1 = xs.len();
    let cells = (0..n1 * ys.len())
        .into_par_iter()
        .map(|k| eval_cell(spec, xs[k % n1], ys[k / n1]))
        .collect();
    Ok(RegionGrid {
        axis1_path: spec.axis1.path.to_string(),
        axis2_path: spec.axis2.path.to_string(),
        axis1: xs,
        axis2: ys,
        cells,
    })
}

/// Region layers that can be written as matrix CSVs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Small,
    Large,
    Sim,
}

impl Layer {
    pub const ALL: [Layer; 3] = [Layer::Small, Layer::Large, Layer::Sim];

    pub fn suffix(self) -> &'static str {
        match self {
            Layer::Small => "small",
            Layer::Large => "large",
            Layer::Sim => "sim",
        }
    }

    fn code(self, c: &Cell) -> Option<i32> {
        match self {
            Layer::Small => c.small_signal.map(TriState::code),
            Layer::Large => c.large_signal.map(TriState::code),
            Layer::Sim => c.sim.map(verdict_code),
        }
    }
}

impl RegionGrid {
    pub fn cell(&self, i: usize, j: usize) -> &Cell {
        &self.cells[j * self.axis1.len() + i]
    }

    /// Cell whose axis values are closest to `(x, y)` in span-normalized distance.
    pub fn nearest(&self, x: f64, y: f64) -> &Cell {
        let span = |v: &[f64]| (v[v.len() - 1] - v[0]).abs().max(f64::MIN_POSITIVE);
        let (sx, sy) = (span(&self.axis1), span(&self.axis2));
        self.cells
            .iter()
            .min_by(|a, b| {
                let d = |c: &Cell| ((c.x - x) / sx).powi(2) + ((c.y - y) / sy).powi(2);
                d(a).total_cmp(&d(b))
            })
            .expect("grid is nonempty")
    }

    /// Large-signal Stable cells that are not small-signal Stable.
    pub fn containment_violations(&self) -> Vec<&Cell> {
        self.cells
            .iter()
            .filter(|c| c.large_signal == Some(TriState::Stable) && c.small_signal != Some(TriState::Stable))
            .collect()
    }

    /// Small-signal Stable, large-signal Unstable, and oscillating in simulation.
    pub fn mismatch_cells(&self) -> Vec<&Cell> {
        self.cells
            .iter()
            .filter(|c| {
                c.small_signal == Some(TriState::Stable)
                    && c.large_signal == Some(TriState::Unstable)
                    && c.sim == Some(Verdict::Oscillating)
            })
            .collect()
    }

    pub fn has_layer(&self, layer: Layer) -> bool {
        self.cells.iter().any(|c| layer.code(c).is_some())
    }

    /// Matrix CSV: the top-left entry is the number of columns, the first row
    /// holds axis-1 values, the first column axis-2 values. Codes: `0`
    /// Unstable/Oscillating, `1` Stable, `2` NoEquilibrium/Diverged, `-1` not evaluated.
    /// The layout is gnuplot's `matrix nonuniform`.
    pub fn to_csv(&self, layer: Layer) -> String {
        let mut s = String::new();
        let _ = write!(s, "{}", self.axis1.len());
        for x in &self.axis1 {
            let _ = write!(s, ",{x:?}");
        }
        s.push('\n');
        for (j, y) in self.axis2.iter().enumerate() {
            let _ = write!(s, "{y:?}");
            for i in 0..self.axis1.len() {
                let _ = write!(s, ",{}", layer.code(self.cell(i, j)).unwrap_or(-1));
            }
            s.push('\n');
        }
        s
    }

    /// gnuplot script plotting `{stem}_{layer}.csv` for each given layer.
    pub fn gnuplot_script(&self, stem: &str, layers: &[Layer]) -> String {
        let mut s = String::from("set datafile separator ','\nset view map\nset cbrange [-1:2]\n");
        let _ = writeln!(s, "set xlabel '{}'\nset ylabel '{}'", self.axis1_path, self.axis2_path);
        for l in layers {
            let _ = writeln!(
                s,
                "set title '{0}'\nplot '{stem}_{0}.csv' matrix nonuniform with image notitle\npause -1",
                l.suffix()
            );
        }
        s
    }
}
