//! Scenario files.
//!
//! Scenarios are TOML documents. Numeric fields that describe geometry or
//! angles accept either a number or a short expression such as `"8b"`,
//! `"pi/60"` or `"-pi/1080"`, where `b` is the wing span and `pi` is π.
//! Unknown keys are rejected. Dotted overrides (`controller.Kp.x=0.5`) are
//! applied to the parsed document before it is interpreted.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{validate_time_constants, ControllerError, ControllerGains};
use crate::graph::{FormationGraph, GraphError};
use crate::planner::{
    CenterCommand, FilterGains, FilterState, FormationCenterState, FormationLayout, PlannerError,
    Schedule, Segment,
};
use crate::vehicle::{default_lift_slope, ThrustLimit, UavParams, UavState, VehicleError};
use crate::wake::{DisturbanceModel, DisturbanceSpec, WakeError};
use crate::Vec3;

/// Source of the shipped five-aircraft V-formation preset.
pub const VSHAPE5_CFG: &str = include_str!("../../../../presets/vshape5.cfg");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("invalid override `{0}`; expected key.path=value")]
    OverrideSyntax(String),
    #[error("override `{key}`: {reason}")]
    OverridePath { key: String, reason: String },
    #[error("{path}: cannot evaluate `{expr}`: {reason}")]
    Expression {
        path: String,
        expr: String,
        reason: String,
    },
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
    #[error("vehicle: {0}")]
    Vehicle(#[from] VehicleError),
    #[error("center: {0}")]
    Planner(#[from] PlannerError),
    #[error("controller: {0}")]
    Controller(#[from] ControllerError),
    #[error("disturbance: {0}")]
    Wake(#[from] WakeError),
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

/// A number or an expression in `b` and `pi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Num {
    Value(f64),
    Expr(String),
}

impl From<f64> for Num {
    fn from(v: f64) -> Self {
        Num::Value(v)
    }
}

impl Num {
    fn resolve(&self, path: &str, span: f64) -> Result<f64, ScenarioError> {
        match self {
            Num::Value(v) => Ok(*v),
            Num::Expr(e) => eval_expr(e, span).map_err(|reason| ScenarioError::Expression {
                path: path.into(),
                expr: e.clone(),
                reason,
            }),
        }
    }
}

/// Evaluates `[-] factor (('*' | '/') factor)*`, where a factor is a number,
/// `b`, `pi`, or a number immediately followed by `b` or `pi`.
pub fn eval_expr(expr: &str, span: f64) -> Result<f64, String> {
    let s: String = expr.chars().filter(|c| !c.is_whitespace()).collect();
    let (sign, body) = match s.strip_prefix('-') {
        Some(rest) => (-1.0, rest),
        None => (1.0, s.strip_prefix('+').unwrap_or(&s)),
    };
    if body.is_empty() {
        return Err("empty expression".into());
    }
    let mut value = 1.0;
    let mut op = '*';
    let mut rest = body;
    loop {
        let end = rest.find(['*', '/']).unwrap_or(rest.len());
        let f = factor(&rest[..end], span)?;
        value = if op == '*' { value * f } else { value / f };
        if end == rest.len() {
            break;
        }
        op = rest.as_bytes()[end] as char;
        rest = &rest[end + 1..];
    }
    Ok(sign * value)
}

fn factor(tok: &str, span: f64) -> Result<f64, String> {
    let symbol = |name: &str| match name {
        "b" => Some(span),
        "pi" => Some(std::f64::consts::PI),
        _ => None,
    };
    if tok.is_empty() {
        return Err("missing operand".into());
    }
    if let Some(v) = symbol(tok) {
        return Ok(v);
    }
    let split = tok
        .find(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E')
        .or_else(|| tok.strip_suffix('b').map(|p| p.len()))
        .unwrap_or(tok.len());
    let (num, sym) = tok.split_at(split);
    let n: f64 = num
        .parse()
        .map_err(|_| format!("`{tok}` is not a number"))?;
    if sym.is_empty() {
        return Ok(n);
    }
    symbol(sym)
        .map(|v| n * v)
        .ok_or_else(|| format!("unknown symbol `{sym}`"))
}

/// Per-axis triple as written in scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axes {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<Axes> for Vec3 {
    fn from(a: Axes) -> Self {
        Vec3::new(a.x, a.y, a.z)
    }
}

impl From<Vec3> for Axes {
    fn from(v: Vec3) -> Self {
        Axes {
            x: v.x,
            y: v.y,
            z: v.z,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSection {
    /// `"baseline"` fills every airframe constant; explicit fields override it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wing_area: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wing_span: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drag_coeff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lift_bias: Option<f64>,
    /// Defaults to `5 q̄ S` at the center's initial speed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lift_slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub air_density: Option<f64>,
    #[serde(default)]
    pub thrust_limit: ThrustLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    pub n: usize,
    /// 1-based vehicle pairs.
    pub edges: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutSection {
    pub offsets: Vec<[Num; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentEntry {
    pub from: Num,
    pub to: Num,
    pub value: Num,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    #[serde(default)]
    pub accel: Vec<SegmentEntry>,
    #[serde(default)]
    pub path_rate: Vec<SegmentEntry>,
    #[serde(default)]
    pub heading_rate: Vec<SegmentEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CenterSection {
    pub position: [Num; 3],
    pub speed: Num,
    #[serde(default = "zero_num")]
    pub path_angle: Num,
    #[serde(default = "zero_num")]
    pub heading: Num,
    #[serde(default)]
    pub schedule: ScheduleSection,
}

fn zero_num() -> Num {
    Num::Value(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleInit {
    pub position: [Num; 3],
    pub speed: Num,
    #[serde(default = "zero_num")]
    pub path_angle: Num,
    #[serde(default = "zero_num")]
    pub course_angle: Num,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterInit {
    pub r_hat: [Num; 3],
    pub v_hat: [Num; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    pub kappa_p: Axes,
    pub kappa_v: Axes,
    pub c_p: Axes,
    pub c_v: Axes,
}

impl Default for FilterSection {
    fn default() -> Self {
        let g = FilterGains::default();
        Self {
            kappa_p: g.kappa_p.into(),
            kappa_v: g.kappa_v.into(),
            c_p: g.c_p.into(),
            c_v: g.c_v.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    #[serde(rename = "Kp")]
    pub kp: Axes,
    #[serde(rename = "Kv")]
    pub kv: Axes,
    #[serde(rename = "Cp")]
    pub cp: Axes,
    #[serde(rename = "Cv")]
    pub cv: Axes,
    pub ude_time_constant: Axes,
    #[serde(default = "yes")]
    pub cooperative: bool,
    /// Feed the thrust clamp deficit to the UDE so saturation is not
    /// mistaken for a disturbance.
    #[serde(default = "yes")]
    pub anti_windup: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    /// Steady-state averaging window `[start, end]` in seconds.
    #[serde(default = "MetricsConfig::default_window")]
    pub window: [f64; 2],
    /// Position error threshold for convergence time [m].
    #[serde(default = "MetricsConfig::default_threshold")]
    pub threshold: f64,
}

impl MetricsConfig {
    fn default_window() -> [f64; 2] {
        [100.0, 120.0]
    }

    fn default_threshold() -> f64 {
        0.1
    }
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            window: Self::default_window(),
            threshold: Self::default_threshold(),
        }
    }
}

/// Scenario document as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub dt: f64,
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    pub vehicle: VehicleSection,
    pub graph: GraphSection,
    pub layout: LayoutSection,
    pub center: CenterSection,
    pub vehicles: Vec<VehicleInit>,
    /// Defaults to the vehicles' own initial positions and velocities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filters: Option<Vec<FilterInit>>,
    #[serde(default)]
    pub filter: FilterSection,
    pub controller: ControllerSection,
    #[serde(default)]
    pub disturbance: DisturbanceSpec,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

/// A `key.path=value` assignment applied on top of a scenario document.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: toml::Value,
}

impl Override {
    /// The value is read as a TOML literal, or as a bare string when that fails.
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let (key, raw) = text
            .split_once('=')
            .ok_or_else(|| ScenarioError::OverrideSyntax(text.into()))?;
        let key = key.trim();
        if key.is_empty() || key.split('.').any(str::is_empty) {
            return Err(ScenarioError::OverrideSyntax(text.into()));
        }
        let raw = raw.trim();
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.into()));
        Ok(Self {
            path: key.split('.').map(String::from).collect(),
            value,
        })
    }

    fn apply(&self, root: &mut toml::Value) -> Result<(), ScenarioError> {
        let fail = |reason: String| ScenarioError::OverridePath {
            key: self.path.join("."),
            reason,
        };
        let (last, parents) = self.path.split_last().expect("non-empty path");
        let mut node = root;
        for seg in parents {
            node = match node {
                toml::Value::Table(t) => t
                    .entry(seg.clone())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new())),
                toml::Value::Array(a) => {
                    let idx: usize = seg
                        .parse()
                        .map_err(|_| fail(format!("`{seg}` is not an array index")))?;
                    let len = a.len();
                    a.get_mut(idx)
                        .ok_or_else(|| fail(format!("index {idx} out of range (length {len})")))?
                }
                _ => return Err(fail(format!("`{seg}` is not a table or array"))),
            };
        }
        match node {
            toml::Value::Table(t) => {
                t.insert(last.clone(), self.value.clone());
            }
            toml::Value::Array(a) => {
                let idx: usize = last
                    .parse()
                    .map_err(|_| fail(format!("`{last}` is not an array index")))?;
                let len = a.len();
                *a.get_mut(idx)
                    .ok_or_else(|| fail(format!("index {idx} out of range (length {len})")))? =
                    self.value.clone();
            }
            _ => return Err(fail("parent is not a table or array".into())),
        }
        Ok(())
    }
}

fn parse_file(text: &str) -> Result<ScenarioFile, ScenarioError> {
    let de = toml::Deserializer::new(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let msg = inner.to_string();
        let msg = msg.trim_end();
        if path.is_empty() || path == "." {
            ScenarioError::Parse(msg.to_string())
        } else {
            ScenarioError::Parse(format!("at `{path}`: {msg}"))
        }
    })
}

/// Fully resolved, validated experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub dt: f64,
    pub duration: f64,
    pub seed: u64,
    pub airframe: UavParams,
    pub thrust_limit: ThrustLimit,
    /// 1-based edge list as configured.
    pub edges: Vec<(usize, usize)>,
    pub layout: FormationLayout,
    pub center: FormationCenterState,
    pub command: CenterCommand,
    pub initial: Vec<UavState>,
    pub filter_initial: Vec<FilterState>,
    pub filter_gains: FilterGains,
    pub controller: ControllerGains,
    pub ude_time_constants: Vec3,
    pub anti_windup: bool,
    pub disturbance: DisturbanceSpec,
    pub metrics: MetricsConfig,
}

impl Scenario {
    /// The shipped five-aircraft V-formation experiment.
    pub fn vshape5() -> Self {
        Self::from_toml_str(VSHAPE5_CFG, &[]).expect("shipped preset is valid")
    }

    pub fn load(path: &Path, overrides: &[Override]) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn from_toml_str(text: &str, overrides: &[Override]) -> Result<Self, ScenarioError> {
        let file = parse_file(text)?;
        if overrides.is_empty() {
            return Self::from_file(&file);
        }
        let mut doc: toml::Value =
            toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        for o in overrides {
            o.apply(&mut doc)?;
        }
        let merged = toml::to_string(&doc).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        Self::from_file(&parse_file(&merged)?)
    }

    pub fn from_file(f: &ScenarioFile) -> Result<Self, ScenarioError> {
        let airframe = resolve_airframe(&f.vehicle, &f.center)?;
        let span = airframe.wing_span;
        let num = |path: &str, v: &Num| v.resolve(path, span);
        let triple = |path: &str, v: &[Num; 3]| -> Result<Vec3, ScenarioError> {
            Ok(Vec3::new(
                num(&format!("{path}[0]"), &v[0])?,
                num(&format!("{path}[1]"), &v[1])?,
                num(&format!("{path}[2]"), &v[2])?,
            ))
        };
        let layout = FormationLayout {
            offsets: f
                .layout
                .offsets
                .iter()
                .enumerate()
                .map(|(i, o)| triple(&format!("layout.offsets[{i}]"), o))
                .collect::<Result<_, _>>()?,
        };
        let c = &f.center;
        let center = FormationCenterState {
            position: triple("center.position", &c.position)?,
            speed: num("center.speed", &c.speed)?,
            path_angle: num("center.path_angle", &c.path_angle)?,
            heading: num("center.heading", &c.heading)?,
        };
        let schedule = |name: &str, entries: &[SegmentEntry]| -> Result<Schedule, ScenarioError> {
            let segs = entries
                .iter()
                .enumerate()
                .map(|(k, s)| {
                    let p = format!("center.schedule.{name}[{k}]");
                    Ok(Segment {
                        from: num(&format!("{p}.from"), &s.from)?,
                        to: num(&format!("{p}.to"), &s.to)?,
                        value: num(&format!("{p}.value"), &s.value)?,
                    })
                })
                .collect::<Result<Vec<_>, ScenarioError>>()?;
            Ok(Schedule::new(segs)?)
        };
        let command = CenterCommand {
            accel: schedule("accel", &c.schedule.accel)?,
            path_rate: schedule("path_rate", &c.schedule.path_rate)?,
            heading_rate: schedule("heading_rate", &c.schedule.heading_rate)?,
        };
        let initial: Vec<UavState> = f
            .vehicles
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let p = format!("vehicles[{i}]");
                Ok(UavState {
                    position: triple(&format!("{p}.position"), &v.position)?,
                    total_speed: num(&format!("{p}.speed"), &v.speed)?,
                    path_angle: num(&format!("{p}.path_angle"), &v.path_angle)?,
                    course_angle: num(&format!("{p}.course_angle"), &v.course_angle)?,
                })
            })
            .collect::<Result<_, ScenarioError>>()?;
        let filter_initial = match &f.filters {
            None => initial
                .iter()
                .map(|s| FilterState {
                    r_hat: s.position,
                    v_hat: s.velocity(),
                })
                .collect(),
            Some(list) => list
                .iter()
                .enumerate()
                .map(|(i, fi)| {
                    Ok(FilterState {
                        r_hat: triple(&format!("filters[{i}].r_hat"), &fi.r_hat)?,
                        v_hat: triple(&format!("filters[{i}].v_hat"), &fi.v_hat)?,
                    })
                })
                .collect::<Result<_, ScenarioError>>()?,
        };
        let fs = &f.filter;
        let cs = &f.controller;
        let sc = Scenario {
            name: f.name.clone(),
            dt: f.dt,
            duration: f.duration,
            seed: f.seed,
            airframe,
            thrust_limit: f.vehicle.thrust_limit,
            edges: f.graph.edges.iter().map(|e| (e[0], e[1])).collect(),
            layout,
            center,
            command,
            initial,
            filter_initial,
            filter_gains: FilterGains {
                kappa_p: fs.kappa_p.into(),
                kappa_v: fs.kappa_v.into(),
                c_p: fs.c_p.into(),
                c_v: fs.c_v.into(),
            },
            controller: ControllerGains {
                kp: cs.kp.into(),
                kv: cs.kv.into(),
                cp: cs.cp.into(),
                cv: cs.cv.into(),
                cooperative: cs.cooperative,
            },
            ude_time_constants: cs.ude_time_constant.into(),
            anti_windup: cs.anti_windup,
            disturbance: f.disturbance.clone(),
            metrics: f.metrics,
        };
        if f.graph.n != sc.initial.len() {
            return Err(invalid(
                "graph.n",
                format!(
                    "{} vehicles declared but {} initial states given",
                    f.graph.n,
                    sc.initial.len()
                ),
            ));
        }
        sc.validate()?;
        Ok(sc)
    }

    pub fn n(&self) -> usize {
        self.initial.len()
    }

    pub fn graph(&self) -> Result<FormationGraph, GraphError> {
        FormationGraph::from_one_based(self.n(), &self.edges)
    }

    /// Number of integration steps.
    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn disturbance_model(&self) -> Result<DisturbanceModel, WakeError> {
        DisturbanceModel::new(self.disturbance.clone(), self.n(), self.airframe, self.seed)
    }

    /// Checks every cross-field invariant. Warnings are logged for a
    /// disconnected graph and for breakpoints off the step grid.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.duration >= self.dt) || !self.duration.is_finite() {
            return Err(invalid(
                "duration",
                format!("must be at least dt, got {}", self.duration),
            ));
        }
        let n = self.n();
        if n == 0 {
            return Err(invalid("vehicles", "at least one vehicle is required"));
        }
        for (what, len) in [
            ("layout.offsets", self.layout.len()),
            ("filters", self.filter_initial.len()),
        ] {
            if len != n {
                return Err(invalid(what, format!("has {len} entries for {n} vehicles")));
            }
        }
        self.airframe.validate()?;
        for (i, s) in self.initial.iter().enumerate() {
            s.check_envelope()
                .map_err(|e| invalid(format!("vehicles[{i}]"), e.to_string()))?;
        }
        if !(self.center.speed > 0.0) {
            return Err(PlannerError::Speed(self.center.speed).into());
        }
        let g = self.graph()?;
        if !g.is_connected() {
            log::warn!("communication graph is disconnected");
        }
        self.filter_gains.validate()?;
        self.controller.validate()?;
        validate_time_constants(&self.ude_time_constants)?;
        self.disturbance_model()?;
        let [w0, w1] = self.metrics.window;
        if !(w0 < w1) {
            return Err(invalid("metrics.window", format!("[{w0}, {w1}] is empty")));
        }
        if !(self.metrics.threshold > 0.0) {
            return Err(invalid("metrics.threshold", "must be positive"));
        }
        let steps = self.duration / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            log::warn!(
                "duration {} is not a multiple of dt {}",
                self.duration,
                self.dt
            );
        }
        for t in self.command.breakpoints() {
            let k = t / self.dt;
            if t > 0.0 && t < self.duration && (k - k.round()).abs() > 1e-9 * k.max(1.0) {
                log::warn!("schedule breakpoint {t} s is not on the step grid");
            }
        }
        Ok(())
    }

    /// Document with every value explicit, suitable for echoing.
    pub fn to_file(&self) -> ScenarioFile {
        let v3 = |v: &Vec3| [Num::Value(v.x), Num::Value(v.y), Num::Value(v.z)];
        let seg = |s: &Schedule| -> Vec<SegmentEntry> {
            s.segments()
                .iter()
                .map(|s| SegmentEntry {
                    from: s.from.into(),
                    to: s.to.into(),
                    value: s.value.into(),
                })
                .collect()
        };
        let a = &self.airframe;
        ScenarioFile {
            name: self.name.clone(),
            dt: self.dt,
            duration: self.duration,
            seed: self.seed,
            vehicle: VehicleSection {
                preset: None,
                mass: Some(a.mass),
                wing_area: Some(a.wing_area),
                wing_span: Some(a.wing_span),
                drag_coeff: Some(a.drag_coeff),
                lift_bias: Some(a.lift_bias),
                lift_slope: Some(a.lift_slope),
                air_density: Some(a.air_density),
                thrust_limit: self.thrust_limit,
            },
            graph: GraphSection {
                n: self.n(),
                edges: self.edges.iter().map(|&(i, j)| [i, j]).collect(),
            },
            layout: LayoutSection {
                offsets: self.layout.offsets.iter().map(v3).collect(),
            },
            center: CenterSection {
                position: v3(&self.center.position),
                speed: self.center.speed.into(),
                path_angle: self.center.path_angle.into(),
                heading: self.center.heading.into(),
                schedule: ScheduleSection {
                    accel: seg(&self.command.accel),
                    path_rate: seg(&self.command.path_rate),
                    heading_rate: seg(&self.command.heading_rate),
                },
            },
            vehicles: self
                .initial
                .iter()
                .map(|s| VehicleInit {
                    position: v3(&s.position),
                    speed: s.total_speed.into(),
                    path_angle: s.path_angle.into(),
                    course_angle: s.course_angle.into(),
                })
                .collect(),
            filters: Some(
                self.filter_initial
                    .iter()
                    .map(|f| FilterInit {
                        r_hat: v3(&f.r_hat),
                        v_hat: v3(&f.v_hat),
                    })
                    .collect(),
            ),
            filter: FilterSection {
                kappa_p: self.filter_gains.kappa_p.into(),
                kappa_v: self.filter_gains.kappa_v.into(),
                c_p: self.filter_gains.c_p.into(),
                c_v: self.filter_gains.c_v.into(),
            },
            controller: ControllerSection {
                kp: self.controller.kp.into(),
                kv: self.controller.kv.into(),
                cp: self.controller.cp.into(),
                cv: self.controller.cv.into(),
                ude_time_constant: self.ude_time_constants.into(),
                cooperative: self.controller.cooperative,
                anti_windup: self.anti_windup,
            },
            disturbance: self.disturbance.clone(),
            metrics: self.metrics,
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.to_file()).expect("scenario documents always serialize")
    }
}

fn resolve_airframe(v: &VehicleSection, c: &CenterSection) -> Result<UavParams, ScenarioError> {
    let density = v.air_density.unwrap_or(UavParams::DEFAULT_AIR_DENSITY);
    let base = match v.preset.as_deref() {
        Some("baseline") => {
            let speed = match &c.speed {
                Num::Value(s) => *s,
                Num::Expr(_) => 0.0,
            };
            Some(UavParams::baseline(density, speed))
        }
        Some(other) => {
            return Err(invalid(
                "vehicle.preset",
                format!("unknown preset `{other}`; expected `baseline`"),
            ))
        }
        None => None,
    };
    let pick = |name: &str, own: Option<f64>, from_base: Option<f64>| {
        own.or(from_base).ok_or_else(|| {
            invalid(
                format!("vehicle.{name}"),
                "required when no preset is given",
            )
        })
    };
    let mass = pick("mass", v.mass, base.map(|b| b.mass))?;
    let wing_area = pick("wing_area", v.wing_area, base.map(|b| b.wing_area))?;
    let wing_span = pick("wing_span", v.wing_span, base.map(|b| b.wing_span))?;
    let drag_coeff = pick("drag_coeff", v.drag_coeff, base.map(|b| b.drag_coeff))?;
    let center_speed = match &c.speed {
        Num::Value(s) => *s,
        Num::Expr(e) => eval_expr(e, wing_span).map_err(|reason| ScenarioError::Expression {
            path: "center.speed".into(),
            expr: e.clone(),
            reason,
        })?,
    };
    Ok(UavParams {
        mass,
        wing_area,
        wing_span,
        drag_coeff,
        lift_bias: v.lift_bias.unwrap_or(0.0),
        lift_slope: v
            .lift_slope
            .unwrap_or_else(|| default_lift_slope(density, center_speed, wing_area)),
        air_density: density,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn expressions() {
        let b = 9.144;
        assert_eq!(eval_expr("8b", b).unwrap(), 8.0 * b);
        assert_eq!(eval_expr("-b", b).unwrap(), -b);
        assert_eq!(eval_expr("pi/60", b).unwrap(), PI / 60.0);
        assert_eq!(eval_expr("-pi/1080", b).unwrap(), -PI / 1080.0);
        assert_eq!(eval_expr("2*pi", b).unwrap(), 2.0 * PI);
        assert_eq!(eval_expr(" 0.5 b ", b).unwrap(), 0.5 * b);
        assert_eq!(eval_expr("1e-3", b).unwrap(), 1e-3);
        assert_eq!(eval_expr("3pi/4", b).unwrap(), 3.0 * PI / 4.0);
        assert!(eval_expr("", b).is_err());
        assert!(eval_expr("8c", b).is_err());
        assert!(eval_expr("pi//2", b).is_err());
    }

    #[test]
    fn preset_values() {
        let sc = Scenario::vshape5();
        assert_eq!(sc.n(), 5);
        assert_eq!(sc.dt, 0.01);
        assert_eq!(sc.duration, 120.0);
        let b = 9.144;
        assert_eq!(sc.layout, FormationLayout::vshape5(b));
        assert_eq!(sc.center.position, Vec3::new(26.87, 200.0, -5000.0));
        assert_eq!(sc.center.speed, 120.0);
        assert_eq!(sc.initial[2].course_angle, PI / 120.0);
        assert_eq!(sc.initial[4].course_angle, PI / 100.0);
        assert_eq!(sc.initial[0].position, Vec3::new(190.0, 190.0, -5005.0));
        assert_eq!(sc.initial[3].total_speed, 119.0);
        assert_eq!(sc.command.rates_at(20.0).path_rate, PI / 60.0);
        assert_eq!(sc.command.rates_at(60.0).heading_rate, -PI / 1080.0);
        assert_eq!(sc.controller, ControllerGains::default());
        assert_eq!(sc.filter_gains, FilterGains::default());
        assert_eq!(sc.ude_time_constants, Vec3::repeat(0.2));
        assert_eq!(sc.airframe.mass, 9295.44);
        assert_eq!(sc.filter_initial[1].r_hat, sc.initial[1].position);
        let g = sc.graph().unwrap();
        assert_eq!(g.degrees().as_slice(), &[2.0, 3.0, 4.0, 3.0, 2.0]);
    }

    #[test]
    fn overrides_apply() {
        let o = [
            Override::parse("controller.Kp.x=0.5").unwrap(),
            Override::parse("vehicles.1.speed=117").unwrap(),
            Override::parse("name=custom").unwrap(),
        ];
        let sc = Scenario::from_toml_str(VSHAPE5_CFG, &o).unwrap();
        assert_eq!(sc.controller.kp.x, 0.5);
        assert_eq!(sc.initial[1].total_speed, 117.0);
        assert_eq!(sc.name, "custom");
        assert!(sc.to_toml_string().contains("x = 0.5"));
    }

    #[test]
    fn override_errors() {
        assert!(matches!(
            Override::parse("novalue"),
            Err(ScenarioError::OverrideSyntax(_))
        ));
        assert!(matches!(
            Override::parse("a..b=1"),
            Err(ScenarioError::OverrideSyntax(_))
        ));
        let bad = [Override::parse("vehicles.9.speed=1").unwrap()];
        assert!(matches!(
            Scenario::from_toml_str(VSHAPE5_CFG, &bad),
            Err(ScenarioError::OverridePath { .. })
        ));
        let unknown = [Override::parse("controller.Kq.x=1").unwrap()];
        let err = Scenario::from_toml_str(VSHAPE5_CFG, &unknown)
            .unwrap_err()
            .to_string();
        assert!(err.contains("Kq"), "{err}");
    }

    #[test]
    fn unknown_key_names_key_and_line() {
        let text = VSHAPE5_CFG.replace("duration = 120.0", "duration = 120.0\ndurashun = 3");
        let err = Scenario::from_toml_str(&text, &[]).unwrap_err().to_string();
        assert!(err.contains("durashun"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn echo_roundtrip() {
        let sc = Scenario::vshape5();
        let again = Scenario::from_toml_str(&sc.to_toml_string(), &[]).unwrap();
        assert_eq!(sc, again);
    }

    #[test]
    fn validation_failures() {
        let cases = [
            ("dt = 0.01", "dt = -1.0"),
            ("n = 5", "n = 4"),
            ("threshold = 0.1", "threshold = 0.0"),
        ];
        for (from, to) in cases {
            let text = VSHAPE5_CFG.replacen(from, to, 1);
            assert!(
                Scenario::from_toml_str(&text, &[]).is_err(),
                "{to} accepted"
            );
        }
        let bad_expr = VSHAPE5_CFG.replacen("\"8b\"", "\"8q\"", 1);
        let err = Scenario::from_toml_str(&bad_expr, &[])
            .unwrap_err()
            .to_string();
        assert!(err.contains("layout.offsets[0]"), "{err}");
    }

    #[test]
    fn lift_slope_default_uses_center_speed() {
        let sc = Scenario::vshape5();
        let q = 0.5 * sc.airframe.air_density * 120.0 * 120.0;
        assert_relative_eq!(
            sc.airframe.lift_slope,
            5.0 * q * 27.87,
            max_relative = 1e-14
        );
    }
}
