//! Microgrid parameterization: converter branches, the point-of-load (PoL)
//! network, the constant power load (CPL) law and scenario files.
//!
//! Scenario files are TOML:
//!
//! ```toml
//! [[branch]]
//! v_ref = 100.0
//! r_p = 0.6
//! r_q = 0.9
//! l_q = 1.0
//! r_t = 3.0
//! l_t = 0.5
//! c_b = 5.0
//! controller = "proposed"   # or "droop", which requires r_pd
//!
//! [load]
//! c_l = 1.0
//! r_l = 2.0
//!
//! [cpl]
//! p_l = 800.0
//! v_min = 10.0
//! plug_in_time = 20.0
//!
//! [sim]
//! t_end = 80.0
//! ```
//!
//! All quantities are SI. Omitted `sim` tolerances default to
//! `abs_tol = 1e-8`, `rel_tol = 1e-6` and the initial state to all zeros.

use serde::{Deserialize, Serialize};

use crate::dynamics::State;
use crate::error::{Error, Result};

pub const DEFAULT_ABS_TOL: f64 = 1e-8;
pub const DEFAULT_REL_TOL: f64 = 1e-6;

/// Voltage regulation stage of a converter branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Controller {
    /// Current-mode controller: `R_p` in parallel with the series `R_q`-`L_q` path.
    Proposed { r_p: f64, r_q: f64, l_q: f64 },
    /// Plain droop resistance.
    Droop { r_pd: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchParams {
    pub v_ref: f64,
    /// Line resistance.
    pub r_t: f64,
    /// Line inductance.
    pub l_t: f64,
    /// Bus capacitance.
    pub c_b: f64,
    pub controller: Controller,
}

impl BranchParams {
    pub fn proposed(v_ref: f64, r_p: f64, r_q: f64, l_q: f64, r_t: f64, l_t: f64, c_b: f64) -> Self {
        BranchParams {
            v_ref,
            r_t,
            l_t,
            c_b,
            controller: Controller::Proposed { r_p, r_q, l_q },
        }
    }

    pub fn is_proposed(&self) -> bool {
        matches!(self.controller, Controller::Proposed { .. })
    }

    /// DC resistance of the controller stage alone.
    pub fn controller_resistance(&self) -> f64 {
        match self.controller {
            Controller::Proposed { r_p, r_q, .. } => r_p * r_q / (r_p + r_q),
            Controller::Droop { r_pd } => r_pd,
        }
    }

    /// Steady-state Thevenin resistance seen from the PoL.
    pub fn thevenin_resistance(&self) -> f64 {
        self.controller_resistance() + self.r_t
    }

    fn validate(&self, index: usize) -> Result<()> {
        let path = |f: &str| format!("branch[{index}].{f}");
        positive(self.v_ref, &path("v_ref"))?;
        positive(self.r_t, &path("r_t"))?;
        positive(self.l_t, &path("l_t"))?;
        positive(self.c_b, &path("c_b"))?;
        match self.controller {
            Controller::Proposed { r_p, r_q, l_q } => {
                positive(r_p, &path("r_p"))?;
                positive(r_q, &path("r_q"))?;
                positive(l_q, &path("l_q"))?;
            }
            Controller::Droop { r_pd } => positive(r_pd, &path("r_pd"))?,
        }
        Ok(())
    }
}

/// Two-segment CPL law: constant current `i_max` up to `v_min`, constant power above.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CplParams {
    pub p_l: f64,
    pub v_min: f64,
    i_max: f64,
    pub plug_in_time: f64,
}

impl CplParams {
    /// `i_max` is always derived as `p_l / v_min` so both segments meet at `v_min`.
    pub fn new(p_l: f64, v_min: f64, plug_in_time: f64) -> Self {
        CplParams {
            p_l,
            v_min,
            i_max: p_l / v_min,
            plug_in_time,
        }
    }

    /// Builds a CPL whose current limit does not match `p_l / v_min`.
    /// Only used to exercise the smoothness check.
    #[doc(hidden)]
    pub fn with_mismatched_current_limit(p_l: f64, v_min: f64, i_max: f64, plug_in_time: f64) -> Self {
        CplParams {
            p_l,
            v_min,
            i_max,
            plug_in_time,
        }
    }

    pub fn i_max(&self) -> f64 {
        self.i_max
    }

    pub fn with_power(&self, p_l: f64) -> Self {
        CplParams::new(p_l, self.v_min, self.plug_in_time)
    }

    fn validate(&self) -> Result<()> {
        finite(self.p_l, "cpl.p_l")?;
        if self.p_l < 0.0 {
            return Err(Error::validation("cpl.p_l", "must be >= 0"));
        }
        positive(self.v_min, "cpl.v_min")?;
        finite(self.plug_in_time, "cpl.plug_in_time")?;
        if self.plug_in_time < 0.0 {
            return Err(Error::validation("cpl.plug_in_time", "must be >= 0"));
        }
        Ok(())
    }
}

/// Current drawn by the CPL at PoL voltage `v_l`.
pub fn cpl_current(cpl: &CplParams, v_l: f64, active: bool) -> f64 {
    if !active {
        0.0
    } else if v_l <= cpl.v_min {
        cpl.i_max
    } else {
        cpl.p_l / v_l
    }
}

/// Linear part of the load at the PoL.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadParams {
    pub c_l: f64,
    pub r_l: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub branches: Vec<BranchParams>,
    pub load: LoadParams,
    pub cpl: CplParams,
}

/// Non-fatal parameter remarks.
#[derive(Debug, Clone, PartialEq)]
pub struct Warning {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl GridSpec {
    pub fn new(branches: Vec<BranchParams>, load: LoadParams, cpl: CplParams) -> Result<Self> {
        let grid = GridSpec { branches, load, cpl };
        grid.validate()?;
        Ok(grid)
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn all_proposed(&self) -> bool {
        self.branches.iter().all(BranchParams::is_proposed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.branches.is_empty() {
            return Err(Error::validation("branch", "at least one branch is required"));
        }
        for (i, b) in self.branches.iter().enumerate() {
            b.validate(i)?;
        }
        positive(self.load.c_l, "load.c_l")?;
        positive(self.load.r_l, "load.r_l")?;
        self.cpl.validate()
    }

    pub fn warnings(&self) -> Vec<Warning> {
        self.branches
            .iter()
            .enumerate()
            .filter_map(|(i, b)| match b.controller {
                Controller::Proposed { r_p, r_q, .. } if r_p <= r_q => Some(Warning {
                    path: format!("branch[{i}].r_p"),
                    message: format!("r_p = {r_p} <= r_q = {r_q}; the controller is meant to have r_p >> r_q"),
                }),
                _ => None,
            })
            .collect()
    }

    pub fn with_cpl_power(&self, p_l: f64) -> Self {
        GridSpec {
            cpl: self.cpl.with_power(p_l),
            ..self.clone()
        }
    }

    /// Same grid with every proposed controller replaced by its droop equivalent.
    pub fn droop_twin(&self) -> Result<Self> {
        let branches = self
            .branches
            .iter()
            .enumerate()
            .map(|(i, b)| droop_equivalent(b).map_err(|_| Error::WrongControllerKind { index: i }))
            .collect::<Result<Vec<_>>>()?;
        Ok(GridSpec {
            branches,
            ..self.clone()
        })
    }
}

/// Droop branch with the same steady-state resistance as a proposed-controller branch.
pub fn droop_equivalent(branch: &BranchParams) -> Result<BranchParams> {
    match branch.controller {
        Controller::Proposed { r_p, r_q, .. } => Ok(BranchParams {
            controller: Controller::Droop {
                r_pd: r_p * r_q / (r_p + r_q),
            },
            ..*branch
        }),
        Controller::Droop { .. } => Err(Error::WrongControllerKind { index: 0 }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Zero,
    Given(State),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub grid: GridSpec,
    pub t_end: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub initial_state: InitialState,
    pub label: Option<String>,
    pub notes: Option<String>,
}

impl Scenario {
    pub fn new(grid: GridSpec, t_end: f64) -> Result<Self> {
        let s = Scenario {
            grid,
            t_end,
            abs_tol: DEFAULT_ABS_TOL,
            rel_tol: DEFAULT_REL_TOL,
            initial_state: InitialState::Zero,
            label: None,
            notes: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = Some(label.to_string());
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        finite(self.t_end, "sim.t_end")?;
        if self.t_end <= self.grid.cpl.plug_in_time {
            return Err(Error::validation(
                "sim.t_end",
                format!("must exceed cpl.plug_in_time = {}", self.grid.cpl.plug_in_time),
            ));
        }
        unit_interval(self.abs_tol, "sim.abs_tol")?;
        unit_interval(self.rel_tol, "sim.rel_tol")?;
        if let InitialState::Given(s) = &self.initial_state {
            s.check_layout(&self.grid).map_err(|m| Error::validation("sim.initial_state", m))?;
        }
        Ok(())
    }

    /// Serializes to the same TOML schema [`parse_scenario`] reads.
    pub fn to_toml(&self) -> String {
        let raw = RawScenario::from(self);
        toml::to_string(&raw).expect("scenario is always representable as TOML")
    }
}

fn finite(x: f64, path: &str) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(path, "must be finite"))
    }
}

fn positive(x: f64, path: &str) -> Result<()> {
    finite(x, path)?;
    if x > 0.0 {
        Ok(())
    } else {
        Err(Error::validation(path, format!("must be > 0 (got {x})")))
    }
}

fn unit_interval(x: f64, path: &str) -> Result<()> {
    finite(x, path)?;
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::validation(path, format!("must lie in (0, 1) (got {x})")))
    }
}

// ---------------------------------------------------------------------------
// File schema

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct RawBranch {
    v_ref: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    r_p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    r_q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    l_q: Option<f64>,
    r_t: Option<f64>,
    l_t: Option<f64>,
    c_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    controller: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    r_pd: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLoad {
    c_l: Option<f64>,
    r_l: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCpl {
    p_l: Option<f64>,
    v_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    plug_in_time: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RawInitial {
    Named(String),
    Explicit {
        #[serde(default)]
        i_q: Vec<f64>,
        i_t: Vec<f64>,
        v_c: Vec<f64>,
        v_l: f64,
    },
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    t_end: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    abs_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rel_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    initial_state: Option<RawInitial>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeta {
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    notes: Option<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct RawScenario {
    #[serde(default)]
    branch: Vec<RawBranch>,
    load: Option<RawLoad>,
    cpl: Option<RawCpl>,
    sim: Option<RawSim>,
    #[serde(skip_serializing_if = "Option::is_none")]
    meta: Option<RawMeta>,
}

fn required(v: Option<f64>, path: &str) -> Result<f64> {
    v.ok_or_else(|| Error::validation(path, "missing required field"))
}

impl RawBranch {
    fn into_branch(self, i: usize) -> Result<BranchParams> {
        let path = |f: &str| format!("branch[{i}].{f}");
        let v_ref = required(self.v_ref, &path("v_ref"))?;
        let r_t = required(self.r_t, &path("r_t"))?;
        let l_t = required(self.l_t, &path("l_t"))?;
        let c_b = required(self.c_b, &path("c_b"))?;
        let controller = match self.controller.as_deref().unwrap_or("proposed") {
            "proposed" => Controller::Proposed {
                r_p: required(self.r_p, &path("r_p"))?,
                r_q: required(self.r_q, &path("r_q"))?,
                l_q: required(self.l_q, &path("l_q"))?,
            },
            "droop" => Controller::Droop {
                r_pd: required(self.r_pd, &path("r_pd"))?,
            },
            other => {
                return Err(Error::validation(
                    path("controller"),
                    format!("expected \"proposed\" or \"droop\", got {other:?}"),
                ))
            }
        };
        Ok(BranchParams {
            v_ref,
            r_t,
            l_t,
            c_b,
            controller,
        })
    }
}

impl RawScenario {
    pub(crate) fn into_scenario(self) -> Result<Scenario> {
        let branches = self
            .branch
            .into_iter()
            .enumerate()
            .map(|(i, b)| b.into_branch(i))
            .collect::<Result<Vec<_>>>()?;
        let load = self.load.ok_or_else(|| Error::validation("load", "missing table"))?;
        let load = LoadParams {
            c_l: required(load.c_l, "load.c_l")?,
            r_l: required(load.r_l, "load.r_l")?,
        };
        let cpl = self.cpl.ok_or_else(|| Error::validation("cpl", "missing table"))?;
        let cpl = CplParams::new(
            required(cpl.p_l, "cpl.p_l")?,
            required(cpl.v_min, "cpl.v_min")?,
            cpl.plug_in_time.unwrap_or(0.0),
        );
        let grid = GridSpec { branches, load, cpl };
        grid.validate()?;

        let sim = self.sim.ok_or_else(|| Error::validation("sim", "missing table"))?;
        let initial_state = match sim.initial_state {
            None => InitialState::Zero,
            Some(RawInitial::Named(name)) if name == "zero" => InitialState::Zero,
            Some(RawInitial::Named(name)) => {
                return Err(Error::validation(
                    "sim.initial_state",
                    format!("expected \"zero\" or an explicit state table, got {name:?}"),
                ))
            }
            Some(RawInitial::Explicit { i_q, i_t, v_c, v_l }) => InitialState::Given(State { i_q, i_t, v_c, v_l }),
        };
        let meta = self.meta.unwrap_or_default();
        let scenario = Scenario {
            grid,
            t_end: required(sim.t_end, "sim.t_end")?,
            abs_tol: sim.abs_tol.unwrap_or(DEFAULT_ABS_TOL),
            rel_tol: sim.rel_tol.unwrap_or(DEFAULT_REL_TOL),
            initial_state,
            label: meta.label,
            notes: meta.notes,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

impl From<&Scenario> for RawScenario {
    fn from(s: &Scenario) -> Self {
        let branch = s
            .grid
            .branches
            .iter()
            .map(|b| {
                let mut raw = RawBranch {
                    v_ref: Some(b.v_ref),
                    r_t: Some(b.r_t),
                    l_t: Some(b.l_t),
                    c_b: Some(b.c_b),
                    ..Default::default()
                };
                match b.controller {
                    Controller::Proposed { r_p, r_q, l_q } => {
                        raw.r_p = Some(r_p);
                        raw.r_q = Some(r_q);
                        raw.l_q = Some(l_q);
                        raw.controller = Some("proposed".into());
                    }
                    Controller::Droop { r_pd } => {
                        raw.r_pd = Some(r_pd);
                        raw.controller = Some("droop".into());
                    }
                }
                raw
            })
            .collect();
        let initial_state = match &s.initial_state {
            InitialState::Zero => None,
            InitialState::Given(st) => Some(RawInitial::Explicit {
                i_q: st.i_q.clone(),
                i_t: st.i_t.clone(),
                v_c: st.v_c.clone(),
                v_l: st.v_l,
            }),
        };
        let meta = (s.label.is_some() || s.notes.is_some()).then(|| RawMeta {
            label: s.label.clone(),
            notes: s.notes.clone(),
        });
        RawScenario {
            branch,
            load: Some(RawLoad {
                c_l: Some(s.grid.load.c_l),
                r_l: Some(s.grid.load.r_l),
            }),
            cpl: Some(RawCpl {
                p_l: Some(s.grid.cpl.p_l),
                v_min: Some(s.grid.cpl.v_min),
                plug_in_time: Some(s.grid.cpl.plug_in_time),
            }),
            sim: Some(RawSim {
                t_end: Some(s.t_end),
                abs_tol: Some(s.abs_tol),
                rel_tol: Some(s.rel_tol),
                initial_state,
            }),
            meta,
        }
    }
}

/// Parses a TOML document into a table, splitting off an optional `[sweep]` section.
pub(crate) fn parse_document(text: &str) -> Result<(toml::Table, Option<toml::Value>)> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Syntax(e.to_string()))?;
    let sweep = table.remove("sweep");
    Ok((table, sweep))
}

pub(crate) fn scenario_from_table(table: toml::Table) -> Result<Scenario> {
    let raw: RawScenario = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Syntax(e.to_string()))?;
    raw.into_scenario()
}

/// Parses and validates a scenario document. A `[sweep]` table, if present, is ignored.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let (table, _) = parse_document(text)?;
    scenario_from_table(table)
}
