//! Scenario files.
//!
//! A scenario is a small TOML document: a few top-level keys plus one level
//! of sections. Every key is checked, so a typo is reported with its full
//! path (`controller.famlies`) instead of being silently ignored. The full
//! schema is documented in `scenarios/SCHEMA.md`.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use resetlab::tuning::AlphaPlacement;
use resetlab::{ControllerSpec, Signal, SimConfig};
use toml::{Table, Value};

pub const SCHEMA_VERSION: i64 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{key}: {message}")]
pub struct ConfigError {
    /// Dotted path of the offending key, or `<file>` for problems with the
    /// document as a whole.
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Step,
    Track,
    Bode,
    Sensitivity,
    OvershootMap,
    Windup,
    Stability,
}

impl Kind {
    const ALL: [(&'static str, Kind); 7] = [
        ("step", Kind::Step),
        ("track", Kind::Track),
        ("bode", Kind::Bode),
        ("sensitivity", Kind::Sensitivity),
        ("overshoot-map", Kind::OvershootMap),
        ("windup", Kind::Windup),
        ("stability", Kind::Stability),
    ];

    pub fn name(self) -> &'static str {
        Self::ALL.iter().find(|(_, k)| *k == self).unwrap().0
    }

    /// Section holding the kind-specific parameters, if any.
    fn section(self) -> Option<&'static str> {
        match self {
            Kind::Step => None,
            Kind::Track => Some("track"),
            Kind::Bode => Some("bode"),
            Kind::Sensitivity => Some("sensitivity"),
            Kind::OvershootMap => Some("map"),
            Kind::Windup => Some("windup"),
            Kind::Stability => Some("stability"),
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Pind,
    Cr,
}

impl Family {
    pub fn tag(self) -> &'static str {
        match self {
            Family::Pind => "pind",
            Family::Cr => "cr",
        }
    }
}

/// One controller of the scenario grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub label: String,
    pub family: Family,
    pub spec: ControllerSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Step,
    Track { discard: f64 },
    Bode { lo: f64, hi: f64, points: usize, harmonics: Vec<u32> },
    Sensitivity { lo: f64, hi: f64, points: usize, sim_omegas: Vec<f64>, periods: f64, discard: f64 },
    OvershootMap { pm: Vec<f64> },
    Windup { low: f64, high: f64 },
    Stability { kp_scale: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub kind: Kind,
    pub description: String,
    /// Output sub-directory, relative to the output root.
    pub output: String,
    pub grid: Vec<GridPoint>,
    /// Scale of the `1/(m s²)` plant: `plant = 1/(mass s²)`.
    pub mass: f64,
    pub saturation: Option<f64>,
    pub reference: Signal,
    pub sim: SimConfig,
    pub params: Params,
}

/// Typed access to one table that remembers which keys were read.
struct Section<'a> {
    path: String,
    table: &'a Table,
    seen: BTreeSet<&'a str>,
}

impl<'a> Section<'a> {
    fn new(path: &str, table: &'a Table) -> Self {
        Self {
            path: path.to_string(),
            table,
            seen: BTreeSet::new(),
        }
    }

    fn key(&self, k: &str) -> String {
        if self.path.is_empty() {
            k.to_string()
        } else {
            format!("{}.{}", self.path, k)
        }
    }

    fn raw(&mut self, k: &str) -> Option<&'a Value> {
        let (name, v) = self.table.get_key_value(k)?;
        self.seen.insert(name.as_str());
        Some(v)
    }

    fn err(&self, k: &str, msg: impl Into<String>) -> ConfigError {
        ConfigError::new(self.key(k), msg)
    }

    fn float_of(&self, k: &str, v: &Value) -> Result<f64, ConfigError> {
        match v {
            Value::Float(x) => Ok(*x),
            Value::Integer(i) => Ok(*i as f64),
            _ => Err(self.err(k, format!("expected a number, found {}", v.type_str()))),
        }
    }

    fn opt_f64(&mut self, k: &str) -> Result<Option<f64>, ConfigError> {
        match self.raw(k) {
            None => Ok(None),
            Some(v) => self.float_of(k, v).map(Some),
        }
    }

    fn positive(&mut self, k: &str) -> Result<Option<f64>, ConfigError> {
        let v = self.opt_f64(k)?;
        match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => Err(self.err(k, format!("must be positive and finite, got {x}"))),
            _ => Ok(v),
        }
    }

    fn require<T>(&self, k: &str, v: Option<T>) -> Result<T, ConfigError> {
        v.ok_or_else(|| self.err(k, "missing required key"))
    }

    fn opt_str(&mut self, k: &str) -> Result<Option<&'a str>, ConfigError> {
        match self.raw(k) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.as_str())),
            Some(v) => Err(self.err(k, format!("expected a string, found {}", v.type_str()))),
        }
    }

    fn opt_int(&mut self, k: &str) -> Result<Option<i64>, ConfigError> {
        match self.raw(k) {
            None => Ok(None),
            Some(Value::Integer(i)) => Ok(Some(*i)),
            Some(v) => Err(self.err(k, format!("expected an integer, found {}", v.type_str()))),
        }
    }

    fn opt_list(&mut self, k: &str) -> Result<Option<&'a Vec<Value>>, ConfigError> {
        match self.raw(k) {
            None => Ok(None),
            Some(Value::Array(a)) => Ok(Some(a)),
            Some(v) => Err(self.err(k, format!("expected a list, found {}", v.type_str()))),
        }
    }

    fn f64_list(&mut self, k: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(items) = self.opt_list(k)? else { return Ok(None) };
        let out = items
            .iter()
            .enumerate()
            .map(|(i, v)| self.float_of(&format!("{k}[{i}]"), v))
            .collect::<Result<Vec<_>, _>>()?;
        if out.is_empty() {
            return Err(self.err(k, "list must not be empty"));
        }
        Ok(Some(out))
    }

    fn positive_list(&mut self, k: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let v = self.f64_list(k)?;
        if let Some(bad) = v.iter().flatten().position(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(self.err(&format!("{k}[{bad}]"), "must be positive and finite"));
        }
        Ok(v)
    }

    fn int_list(&mut self, k: &str, min: i64, max: i64) -> Result<Option<Vec<u32>>, ConfigError> {
        let Some(items) = self.opt_list(k)? else { return Ok(None) };
        let mut out = Vec::with_capacity(items.len());
        for (i, v) in items.iter().enumerate() {
            match v {
                Value::Integer(x) if (min..=max).contains(x) => out.push(*x as u32),
                _ => return Err(self.err(&format!("{k}[{i}]"), format!("expected an integer in [{min}, {max}]"))),
            }
        }
        if out.is_empty() {
            return Err(self.err(k, "list must not be empty"));
        }
        Ok(Some(out))
    }

    fn fraction(&mut self, k: &str, default: f64) -> Result<f64, ConfigError> {
        let v = self.opt_f64(k)?.unwrap_or(default);
        if !(0.0..1.0).contains(&v) {
            return Err(self.err(k, format!("must lie in [0, 1), got {v}")));
        }
        Ok(v)
    }

    /// Any key that was never read is unknown.
    fn finish(self) -> Result<(), ConfigError> {
        match self.table.keys().find(|k| !self.seen.contains(k.as_str())) {
            Some(k) => Err(self.err(k, "unknown key")),
            None => Ok(()),
        }
    }
}

fn section<'a>(root: &mut Section<'a>, name: &str) -> Result<Option<Section<'a>>, ConfigError> {
    match root.raw(name) {
        None => Ok(None),
        Some(Value::Table(t)) => Ok(Some(Section::new(name, t))),
        Some(v) => Err(root.err(name, format!("expected a section, found {}", v.type_str()))),
    }
}

pub fn load(path: &Path) -> Result<Scenario, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("<file>", format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<Scenario, ConfigError> {
    let doc: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::new("<file>", e.message().to_string()))?;
    let mut root = Section::new("", &doc);

    let schema = root.opt_int("schema")?;
    let schema = root.require("schema", schema)?;
    if schema != SCHEMA_VERSION {
        return Err(root.err("schema", format!("unsupported schema version {schema}, expected {SCHEMA_VERSION}")));
    }
    let kind_name = root.opt_str("kind")?;
    let kind_name = root.require("kind", kind_name)?;
    let kind = Kind::ALL
        .iter()
        .find(|(n, _)| *n == kind_name)
        .map(|(_, k)| *k)
        .ok_or_else(|| {
            let names: Vec<&str> = Kind::ALL.iter().map(|(n, _)| *n).collect();
            root.err("kind", format!("unknown scenario kind '{kind_name}', expected one of {names:?}"))
        })?;
    let description = root.opt_str("description")?.unwrap_or("").to_string();
    let output = root.opt_str("output")?;
    let output = root.require("output", output)?;
    if output.is_empty() || Path::new(output).is_absolute() || output.split(['/', '\\']).any(|p| p == "..") {
        return Err(root.err("output", "must be a relative directory name without '..'"));
    }

    let mut ctl = section(&mut root, "controller")?
        .ok_or_else(|| ConfigError::new("controller", "missing required section"))?;
    let (grid, saturation) = controller_grid(&mut ctl)?;
    ctl.finish()?;
    if kind == Kind::OvershootMap && grid.iter().any(|g| g.family != Family::Cr) {
        return Err(ConfigError::new("controller.families", "overshoot-map needs families = [\"cr\"]"));
    }
    let omega_c = grid[0].spec.omega_c;

    let mass = match section(&mut root, "plant")? {
        None => 1.0,
        Some(mut p) => {
            let m = p.positive("mass")?.unwrap_or(1.0);
            p.finish()?;
            m
        }
    };

    let reference = match section(&mut root, "reference")? {
        None if kind == Kind::Track => return Err(ConfigError::new("reference", "missing required section")),
        None => Signal::unit_step(),
        Some(mut r) => {
            if !matches!(kind, Kind::Step | Kind::Track) {
                return Err(ConfigError::new("reference", format!("section not used by kind '{kind}'")));
            }
            let s = reference(&mut r)?;
            r.finish()?;
            s
        }
    };
    if kind == Kind::Track && matches!(reference, Signal::Step { .. }) {
        return Err(ConfigError::new("reference.type", "track scenarios need a periodic reference"));
    }

    let sim = match section(&mut root, "sim")? {
        None => SimConfig::for_crossover(omega_c),
        Some(mut s) => {
            let c = sim_config(&mut s, omega_c, &reference)?;
            s.finish()?;
            c
        }
    };
    sim.validate().map_err(|e| ConfigError::new("sim", e.to_string()))?;

    let params = kind_params(kind, &mut root)?;

    for (_, other) in Kind::ALL {
        if let Some(sec) = other.section() {
            if other != kind && doc.contains_key(sec) {
                return Err(ConfigError::new(sec, format!("section not used by kind '{kind}'")));
            }
        }
    }
    root.finish()?;

    Ok(Scenario {
        kind,
        description,
        output: output.to_string(),
        grid,
        mass,
        saturation,
        reference,
        sim,
        params,
    })
}

fn controller_grid(ctl: &mut Section) -> Result<(Vec<GridPoint>, Option<f64>), ConfigError> {
    let families = match ctl.opt_list("families")? {
        None => vec![Family::Pind, Family::Cr],
        Some(items) => {
            let mut out = Vec::new();
            for (i, v) in items.iter().enumerate() {
                let f = match v.as_str() {
                    Some("pind") => Family::Pind,
                    Some("cr") => Family::Cr,
                    _ => return Err(ctl.err(&format!("families[{i}]"), "expected \"pind\" or \"cr\"")),
                };
                if out.contains(&f) {
                    return Err(ctl.err(&format!("families[{i}]"), "duplicate family"));
                }
                out.push(f);
            }
            if out.is_empty() {
                return Err(ctl.err("families", "list must not be empty"));
            }
            out
        }
    };
    let ns = ctl.int_list("n", 0, 16)?.unwrap_or_else(|| vec![1]);

    let mut base = ControllerSpec::default();
    if let Some(v) = ctl.positive("omega_c")? {
        base.omega_c = v;
    }
    if let Some(v) = ctl.opt_f64("a")? {
        base.a = v;
    }
    if let Some(v) = ctl.opt_f64("ratio")? {
        base.ratio = v;
    }
    if let Some(v) = ctl.positive("omega_h_mult")? {
        base.omega_h_mult = v;
    }
    if let Some(v) = ctl.opt_f64("gamma")? {
        base.gamma = v;
    }
    if let Some(v) = ctl.opt_f64("alpha")? {
        base.alpha = v;
    }
    if let Some(v) = ctl.positive("omega_f_mult")? {
        base.omega_f_mult = v;
    }
    base.kp = ctl.positive("kp")?;
    if let Some(p) = ctl.opt_str("alpha_placement")? {
        base.alpha_placement = match p {
            "lead" => AlphaPlacement::Lead,
            "reset-lag" => AlphaPlacement::ResetLag,
            _ => return Err(ctl.err("alpha_placement", "expected \"lead\" or \"reset-lag\"")),
        };
    }
    let saturation = ctl.positive("saturation")?;

    let mut grid = Vec::new();
    for &family in &families {
        for &n in &ns {
            let spec = ControllerSpec {
                n,
                cr_enabled: family == Family::Cr,
                ..base.clone()
            };
            spec.validate()
                .map_err(|e| ConfigError::new(ctl.path.clone(), e.to_string()))?;
            grid.push(GridPoint {
                label: format!("{}_n{n}", family.tag()),
                family,
                spec,
            });
        }
    }
    Ok((grid, saturation))
}

fn reference(r: &mut Section) -> Result<Signal, ConfigError> {
    let ty = r.opt_str("type")?.unwrap_or("step");
    let amplitude = r.opt_f64("amplitude")?.unwrap_or(1.0);
    if !amplitude.is_finite() || amplitude == 0.0 {
        return Err(r.err("amplitude", "must be finite and non-zero"));
    }
    let signal = match ty {
        "step" => Signal::step(amplitude),
        "sine" => {
            let w = r.positive("omega")?;
            let w = r.require("omega", w)?;
            match Signal::sine(w) {
                Signal::Sine(mut tone) => {
                    tone.amplitude = amplitude;
                    Signal::Sine(tone)
                }
                other => other,
            }
        }
        "multisine" => {
            let ws = r.positive_list("omegas")?;
            let ws = r.require("omegas", ws)?;
            match Signal::multisine(&ws) {
                Signal::Multisine(mut tones) => {
                    tones.iter_mut().for_each(|t| t.amplitude = amplitude);
                    Signal::Multisine(tones)
                }
                other => other,
            }
        }
        _ => return Err(r.err("type", format!("unknown reference type '{ty}'"))),
    };
    Ok(signal)
}

fn sim_config(s: &mut Section, omega_c: f64, reference: &Signal) -> Result<SimConfig, ConfigError> {
    let mut cfg = SimConfig::for_crossover(omega_c);
    if let Some(dt) = s.positive("dt")? {
        cfg = cfg.with_dt(dt);
    }
    let duration = s.positive("duration")?;
    let periods = s.positive("periods")?;
    match (duration, periods) {
        (Some(_), Some(_)) => return Err(s.err("periods", "give either duration or periods, not both")),
        (Some(d), None) => cfg = cfg.with_duration(d),
        (None, Some(p)) => {
            let base = reference
                .base_period()
                .ok_or_else(|| s.err("periods", "needs a periodic reference"))?;
            cfg = cfg.with_duration(p * base);
        }
        (None, None) => {}
    }
    if let Some(b) = s.positive("instability_bound")? {
        cfg.instability_bound = b;
    }
    if let Some(k) = s.opt_int("record_stride")? {
        if k < 1 {
            return Err(s.err("record_stride", "must be at least 1"));
        }
        cfg = cfg.with_stride(k as usize);
    }
    if let Some(tol) = s.positive("event_tol")? {
        cfg.event_tol = tol;
    }
    Ok(cfg)
}

fn band(p: &mut Section) -> Result<(f64, f64, usize), ConfigError> {
    let lo = p.positive("lo")?;
    let lo = p.require("lo", lo)?;
    let hi = p.positive("hi")?;
    let hi = p.require("hi", hi)?;
    if hi <= lo {
        return Err(p.err("hi", "must exceed lo"));
    }
    let points = p.opt_int("points")?.unwrap_or(200);
    if !(2..=100_000).contains(&points) {
        return Err(p.err("points", "must lie in [2, 100000]"));
    }
    Ok((lo, hi, points as usize))
}

fn kind_params(kind: Kind, root: &mut Section) -> Result<Params, ConfigError> {
    let Some(name) = kind.section() else { return Ok(Params::Step) };
    let empty = Table::new();
    let mut p = match section(root, name)? {
        Some(s) => s,
        None => Section::new(name, &empty),
    };
    let params = match kind {
        Kind::Step => Params::Step,
        Kind::Track => Params::Track {
            discard: p.fraction("discard", 0.5)?,
        },
        Kind::Bode => {
            let (lo, hi, points) = band(&mut p)?;
            let harmonics = p.int_list("harmonics", 1, 99)?.unwrap_or_else(|| vec![1]);
            Params::Bode { lo, hi, points, harmonics }
        }
        Kind::Sensitivity => {
            let (lo, hi, points) = band(&mut p)?;
            let sim_omegas = p.positive_list("sim_omegas")?.unwrap_or_default();
            let periods = p.positive("periods")?.unwrap_or(40.0);
            let discard = p.fraction("discard", 0.5)?;
            if periods * (1.0 - discard) < 20.0 {
                return Err(p.err("periods", "the kept window must span at least 20 periods"));
            }
            Params::Sensitivity { lo, hi, points, sim_omegas, periods, discard }
        }
        Kind::OvershootMap => {
            let pm = p.f64_list("pm")?;
            let pm = p.require("pm", pm)?;
            if let Some(i) = pm.iter().position(|x| !(0.0 < *x && *x < 90.0)) {
                return Err(p.err(&format!("pm[{i}]"), "phase margin must lie in (0, 90) degrees"));
            }
            Params::OvershootMap { pm }
        }
        Kind::Windup => {
            let low = p.positive("low")?;
            let low = p.require("low", low)?;
            let high = p.positive("high")?;
            let high = p.require("high", high)?;
            if high <= low {
                return Err(p.err("high", "must exceed low"));
            }
            Params::Windup { low, high }
        }
        Kind::Stability => Params::Stability {
            kp_scale: p.positive_list("kp_scale")?.unwrap_or_else(|| vec![1.0]),
        },
    };
    p.finish()?;
    Ok(params)
}
