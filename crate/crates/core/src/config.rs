//! Sectioned `key = value` run configuration.
//!
//! ```text
//! preset = circuit_sec6      # optional, loaded first
//! [circuit]
//! c_store = 2.2e-9           # SI base units throughout
//! ```
//!
//! Keys are checked against a fixed schema. Parsing reports every problem it
//! finds, each with its line number.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::circuit::{CapacitanceDrive, CircuitParams, CoupledDrive, DiodeModel, SimOptions, SwitchModel};
use crate::device::{
    BacksideDrieModel, DeviceModel, ElectrodeGeometry, ParasiticModel, DEFAULT_CAPACITANCE_FLOOR,
    DEFAULT_GROUNDING_REDUCTION,
};
use crate::energy::{HarvestOperatingPoint, DEFAULT_DEVICE_VOLUME};
use crate::error::{Error, Result};
use crate::mech::{
    proof_mass_from_geometry, simulate_motion, stiffness_from_resonance, ExcitationSpec, ResonatorParams,
    StopperModel, SILICON_DENSITY,
};
use crate::presets;
use crate::sweep::{SweepAxis, SweepBase, SweepMetric, SweepSpec, DEFAULT_DURATION_PERIODS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Section {
    Device,
    Resonator,
    Energy,
    Circuit,
    Drive,
    Sweep,
}

impl Section {
    pub const ALL: [Section; 6] = [
        Self::Device,
        Self::Resonator,
        Self::Energy,
        Self::Circuit,
        Self::Drive,
        Self::Sweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Device => "device",
            Self::Resonator => "resonator",
            Self::Energy => "energy",
            Self::Circuit => "circuit",
            Self::Drive => "drive",
            Self::Sweep => "sweep",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Number(f64),
    Bool(bool),
    Word(String),
    List(Vec<f64>),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(x) => write!(f, "{x:e}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Word(w) => f.write_str(w),
            Value::List(xs) => {
                let parts: Vec<String> = xs.iter().map(|x| format!("{x:e}")).collect();
                f.write_str(&parts.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Number(Bound),
    Count,
    Bool,
    Word(&'static [&'static str]),
    List,
}

#[derive(Debug, Clone, Copy)]
enum Bound {
    Positive,
    NonNegative,
    PositiveOrInf,
}

struct KeySpec {
    section: Section,
    key: &'static str,
    kind: Kind,
    required: bool,
}

const fn key(section: Section, key: &'static str, kind: Kind, required: bool) -> KeySpec {
    KeySpec {
        section,
        key,
        kind,
        required,
    }
}

use Bound::*;
use Section::*;

const POS: Kind = Kind::Number(Positive);
const NONNEG: Kind = Kind::Number(NonNegative);

const STOPPER_MODELS: &[&str] = &["inelastic_stop", "clamp", "disabled"];
const DRIVE_KINDS: &[&str] = &["abs_sine", "direct_sine", "coupled"];
const AXES: &[&str] = &["pulse_width", "clock_period", "c_store", "frequency", "c_min"];
const METRICS: &[&str] = &["mean_v_out", "net_converted_energy"];

static SCHEMA: &[KeySpec] = &[
    key(Device, "n_fingers", Kind::Count, true),
    key(Device, "finger_length", POS, true),
    key(Device, "finger_width", POS, true),
    key(Device, "dielectric_thickness", POS, true),
    key(Device, "air_gap", POS, true),
    key(Device, "dielectric_rel_permittivity", POS, true),
    key(Device, "stopper_limit", POS, true),
    key(Device, "c_substrate", NONNEG, false),
    key(Device, "c_fringe_peak", NONNEG, false),
    key(Device, "substrate_grounded", Kind::Bool, false),
    key(Device, "grounding_reduction", NONNEG, false),
    key(Device, "c_floor", POS, false),
    key(Device, "drie_depth", NONNEG, false),
    key(Device, "drie_cmin_baseline", NONNEG, false),
    key(Device, "drie_cmin_plateau", NONNEG, false),
    key(Device, "drie_plateau_depth", POS, false),
    key(Device, "drie_mass_loss_at_plateau", NONNEG, false),
    key(Resonator, "f0", POS, true),
    key(Resonator, "footprint_area", POS, true),
    key(Resonator, "silicon_thickness", POS, true),
    key(Resonator, "density", POS, false),
    key(Resonator, "removed_fraction", NONNEG, false),
    key(Resonator, "quality_factor", POS, false),
    key(Resonator, "stopper_limit", POS, false),
    key(Resonator, "stopper_model", Kind::Word(STOPPER_MODELS), false),
    key(Resonator, "excitation_amplitude", NONNEG, false),
    key(Resonator, "excitation_frequency", POS, false),
    key(Resonator, "sweep_start", POS, false),
    key(Resonator, "sweep_stop", POS, false),
    key(Resonator, "sweep_step", POS, false),
    key(Resonator, "duration", POS, false),
    key(Resonator, "max_step", POS, false),
    key(Resonator, "bias_voltage", NONNEG, false),
    key(Energy, "v_in", NONNEG, true),
    key(Energy, "frequency", POS, true),
    key(Energy, "c_max", POS, false),
    key(Energy, "c_min", POS, false),
    key(Energy, "device_volume", POS, false),
    key(Energy, "projection_c_max", POS, false),
    key(Energy, "projection_frequency", POS, false),
    key(Energy, "projection_depth", NONNEG, false),
    key(Circuit, "c_res", POS, true),
    key(Circuit, "c_store", POS, true),
    key(Circuit, "l_fly", POS, true),
    key(Circuit, "r_load", Kind::Number(PositiveOrInf), true),
    key(Circuit, "v_initial", NONNEG, true),
    key(Circuit, "clock_period", POS, true),
    key(Circuit, "pulse_width", POS, true),
    key(Circuit, "clock_offset", NONNEG, false),
    key(Circuit, "switch_on_resistance", POS, false),
    key(Circuit, "switch_off_conductance", POS, false),
    key(Circuit, "diode_forward_drop", NONNEG, false),
    key(Circuit, "diode_on_resistance", POS, false),
    key(Circuit, "diode_off_conductance", NONNEG, false),
    key(Circuit, "flyback_enabled", Kind::Bool, false),
    key(Circuit, "duration_periods", POS, false),
    key(Circuit, "sample_interval", POS, false),
    key(Circuit, "step_scale", POS, false),
    key(Drive, "kind", Kind::Word(DRIVE_KINDS), false),
    key(Drive, "c_max", POS, true),
    key(Drive, "c_min", POS, true),
    key(Drive, "frequency", POS, true),
    key(Sweep, "axis", Kind::Word(AXES), true),
    key(Sweep, "grid", Kind::List, true),
    key(Sweep, "metric", Kind::Word(METRICS), false),
    key(Sweep, "axis2", Kind::Word(AXES), false),
    key(Sweep, "grid2", Kind::List, false),
    key(Sweep, "duration_periods", POS, false),
    key(Sweep, "clock_cycles", POS, false),
];

fn spec_for(section: Section, k: &str) -> Option<&'static KeySpec> {
    SCHEMA.iter().find(|s| s.section == section && s.key == k)
}

/// One located problem in a configuration text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub line: usize,
    pub message: String,
}

/// Every problem found in a configuration text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigIssue>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines: Vec<String> = self
            .0
            .iter()
            .map(|i| {
                if i.line == 0 {
                    i.message.clone()
                } else {
                    format!("line {}: {}", i.line, i.message)
                }
            })
            .collect();
        f.write_str(&lines.join("\n"))
    }
}

impl std::error::Error for ConfigErrors {}

impl From<ConfigErrors> for Error {
    fn from(e: ConfigErrors) -> Self {
        Error::Config(e.to_string())
    }
}

#[derive(Debug, Clone)]
struct Entry {
    value: Value,
    line: usize,
}

/// A validated configuration. Equality compares values only, not the
/// preset name or source lines.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub preset: Option<String>,
    sections: BTreeMap<Section, BTreeMap<String, Entry>>,
    headers: BTreeMap<Section, usize>,
}

impl PartialEq for RunConfig {
    fn eq(&self, other: &Self) -> bool {
        let flat = |c: &RunConfig| -> Vec<(Section, String, Value)> {
            c.sections
                .iter()
                .flat_map(|(s, m)| m.iter().map(move |(k, e)| (*s, k.clone(), e.value.clone())))
                .collect()
        };
        flat(self) == flat(other)
    }
}

fn parse_value(kind: Kind, raw: &str) -> std::result::Result<Value, String> {
    let number = |s: &str| -> std::result::Result<f64, String> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| format!("'{}' is not a number (SI units, decimal or scientific notation)", s.trim()))
    };
    match kind {
        Kind::Number(bound) => {
            let x = number(raw)?;
            let ok = match bound {
                Positive => x.is_finite() && x > 0.0,
                NonNegative => x.is_finite() && x >= 0.0,
                PositiveOrInf => x > 0.0,
            };
            if ok {
                Ok(Value::Number(x))
            } else {
                Err(match bound {
                    Positive => format!("must be strictly positive, got {raw}"),
                    NonNegative => format!("must be non-negative, got {raw}"),
                    PositiveOrInf => format!("must be positive or inf, got {raw}"),
                })
            }
        }
        Kind::Count => {
            let x = number(raw)?;
            if x >= 1.0 && x.fract() == 0.0 && x <= f64::from(u32::MAX) {
                Ok(Value::Number(x))
            } else {
                Err(format!("must be a whole number >= 1, got {raw}"))
            }
        }
        Kind::Bool => match raw {
            "true" => Ok(Value::Bool(true)),
            "false" => Ok(Value::Bool(false)),
            _ => Err(format!("expected true or false, got '{raw}'")),
        },
        Kind::Word(options) => {
            if options.contains(&raw) {
                Ok(Value::Word(raw.to_string()))
            } else {
                Err(format!("expected one of {}, got '{raw}'", options.join(", ")))
            }
        }
        Kind::List => {
            let xs = raw
                .split(',')
                .map(number)
                .collect::<std::result::Result<Vec<f64>, String>>()?;
            if xs.iter().all(|x| x.is_finite()) {
                Ok(Value::List(xs))
            } else {
                Err("list values must be finite".into())
            }
        }
    }
}

/// Parse and validate a configuration text.
pub fn parse_config(text: &str) -> std::result::Result<RunConfig, ConfigErrors> {
    let mut issues = Vec::new();
    let mut unreadable: Vec<(Section, String)> = Vec::new();
    let mut preset: Option<(String, usize)> = None;
    let mut current: Option<Section> = None;
    let mut own = RunConfig::default();

    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                issues.push(ConfigIssue {
                    line: line_no,
                    message: format!("malformed section header '{line}'"),
                });
                current = None;
                continue;
            };
            match Section::from_name(name.trim()) {
                Some(s) => {
                    if own.headers.contains_key(&s) {
                        issues.push(ConfigIssue {
                            line: line_no,
                            message: format!("section [{}] appears twice", s.name()),
                        });
                    }
                    own.headers.insert(s, line_no);
                    own.sections.entry(s).or_default();
                    current = Some(s);
                }
                None => {
                    issues.push(ConfigIssue {
                        line: line_no,
                        message: format!("unknown section [{}]", name.trim()),
                    });
                    current = None;
                }
            }
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            issues.push(ConfigIssue {
                line: line_no,
                message: format!("expected 'key = value', got '{line}'"),
            });
            continue;
        };
        let (k, v) = (k.trim(), v.trim());
        let Some(section) = current else {
            if k == "preset" {
                if presets::preset_text(v).is_some() {
                    preset = Some((v.to_string(), line_no));
                } else {
                    issues.push(ConfigIssue {
                        line: line_no,
                        message: format!("unknown preset '{v}' (known: {})", presets::PRESET_NAMES.join(", ")),
                    });
                }
            } else {
                issues.push(ConfigIssue {
                    line: line_no,
                    message: format!("key '{k}' outside any section"),
                });
            }
            continue;
        };
        let Some(spec) = spec_for(section, k) else {
            issues.push(ConfigIssue {
                line: line_no,
                message: format!("unknown key '{k}' in [{}]", section.name()),
            });
            continue;
        };
        match parse_value(spec.kind, v) {
            Ok(value) => {
                let map = own.sections.entry(section).or_default();
                if map.contains_key(k) {
                    issues.push(ConfigIssue {
                        line: line_no,
                        message: format!("duplicate key '{k}' in [{}]", section.name()),
                    });
                }
                map.insert(k.to_string(), Entry { value, line: line_no });
            }
            Err(msg) => {
                unreadable.push((section, k.to_string()));
                issues.push(ConfigIssue {
                    line: line_no,
                    message: format!("[{}] {k} {msg}", section.name()),
                })
            }
        }
    }

    // Layer the file over its preset.
    let mut cfg = match &preset {
        Some((name, _)) => {
            let text = presets::preset_text(name).unwrap_or_default();
            match parse_config(text) {
                Ok(mut base) => {
                    base.preset = Some(name.clone());
                    base
                }
                Err(e) => {
                    issues.extend(e.0);
                    RunConfig::default()
                }
            }
        }
        None => RunConfig::default(),
    };
    for (s, map) in own.sections {
        let dst = cfg.sections.entry(s).or_default();
        for (k, e) in map {
            dst.insert(k, e);
        }
    }
    for (s, line) in own.headers {
        cfg.headers.insert(s, line);
    }

    if issues.is_empty() {
        issues.extend(cfg.semantic_issues());
    } else {
        // Builders cannot run on a partial config; report what is missing.
        issues.extend(cfg.missing_keys().into_iter().filter(|i| {
            !unreadable
                .iter()
                .any(|(s, k)| i.message == missing_message(*s, k))
        }));
    }
    if issues.is_empty() {
        Ok(cfg)
    } else {
        issues.sort_by_key(|i| i.line);
        Err(ConfigErrors(issues))
    }
}

fn missing_message(s: Section, k: &str) -> String {
    format!("missing required key '{k}' in [{}]", s.name())
}

impl RunConfig {
    pub fn from_preset(name: &str) -> Result<Self> {
        let text = presets::preset_text(name)
            .ok_or_else(|| Error::Config(format!("unknown preset '{name}'")))?;
        let mut cfg = parse_config(text)?;
        cfg.preset = Some(name.to_string());
        Ok(cfg)
    }

    pub fn has_section(&self, s: Section) -> bool {
        self.sections.get(&s).is_some_and(|m| !m.is_empty())
    }

    pub fn get(&self, s: Section, k: &str) -> Option<&Value> {
        self.sections.get(&s)?.get(k).map(|e| &e.value)
    }

    /// Set a value, checked against the schema.
    pub fn set(&mut self, s: Section, k: &str, raw: &str) -> Result<()> {
        let spec = spec_for(s, k).ok_or_else(|| Error::Config(format!("unknown key '{k}' in [{}]", s.name())))?;
        let value = parse_value(spec.kind, raw).map_err(|m| Error::Config(format!("[{}] {k} {m}", s.name())))?;
        self.sections
            .entry(s)
            .or_default()
            .insert(k.to_string(), Entry { value, line: 0 });
        Ok(())
    }

    /// Canonical text form; parsing it gives back an equal configuration.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        if let Some(p) = &self.preset {
            out.push_str(&format!("# expanded from preset {p}\n"));
        }
        for (s, map) in &self.sections {
            if map.is_empty() {
                continue;
            }
            if out.contains('[') {
                out.push('\n');
            }
            out.push_str(&format!("[{}]\n", s.name()));
            for spec in SCHEMA.iter().filter(|k| k.section == *s) {
                if let Some(e) = map.get(spec.key) {
                    out.push_str(&format!("{} = {}\n", spec.key, e.value));
                }
            }
        }
        out
    }

    fn line_of(&self, s: Section, k: &str) -> usize {
        self.sections
            .get(&s)
            .and_then(|m| m.get(k))
            .map(|e| e.line)
            .filter(|&l| l > 0)
            .or_else(|| self.headers.get(&s).copied())
            .unwrap_or(0)
    }

    fn missing_keys(&self) -> Vec<ConfigIssue> {
        let mut issues = Vec::new();
        for s in Section::ALL {
            if !self.has_section(s) {
                continue;
            }
            for spec in SCHEMA.iter().filter(|k| k.section == s && k.required) {
                if self.get(s, spec.key).is_none() {
                    issues.push(ConfigIssue {
                        line: self.headers.get(&s).copied().unwrap_or(0),
                        message: missing_message(s, spec.key),
                    });
                }
            }
        }
        issues
    }

    fn semantic_issues(&self) -> Vec<ConfigIssue> {
        let mut issues = self.missing_keys();
        if !issues.is_empty() {
            return issues;
        }
        let mut check = |s: Section, key_hint: &str, r: Result<()>| {
            if let Err(e) = r {
                issues.push(ConfigIssue {
                    line: self.line_of(s, key_hint),
                    message: format!("[{}] {}", s.name(), e),
                });
            }
        };
        if self.has_section(Device) {
            check(Device, "", self.device_model().and_then(|d| d.validate()));
        }
        if self.has_section(Resonator) {
            check(Resonator, "", self.resonator().map(|_| ()));
        }
        if self.has_section(Energy) {
            let hint = if self.get(Energy, "c_min").is_some() { "c_min" } else { "" };
            check(Energy, hint, self.operating_point().and_then(|op| op.validate()));
        }
        if self.has_section(Circuit) {
            check(Circuit, "", self.circuit_params().and_then(|p| p.validate()));
        }
        if self.has_section(Drive) {
            let kind_ok = self.drive_kind() != "coupled" || (self.has_section(Device) && self.has_section(Resonator));
            check(
                Drive,
                "kind",
                if kind_ok {
                    Ok(())
                } else {
                    Err(Error::Config("coupled drive needs [device] and [resonator] sections".into()))
                },
            );
            check(Drive, "c_min", self.analytic_drive().and_then(|d| d.validate()));
        }
        if self.has_section(Sweep) {
            check(Sweep, "grid", self.sweep_spec().and_then(|s| s.validate()));
            if let (Some(a2), Some(_)) = (self.get(Sweep, "axis2"), self.get(Sweep, "grid2")) {
                if Some(a2) == self.get(Sweep, "axis") {
                    check(Sweep, "axis2", Err(Error::Config("axis2 must differ from axis".into())));
                }
            } else if self.get(Sweep, "axis2").is_some() != self.get(Sweep, "grid2").is_some() {
                check(Sweep, "axis2", Err(Error::Config("axis2 and grid2 go together".into())));
            }
        }
        issues
    }

    fn num(&self, s: Section, k: &str) -> Result<f64> {
        match self.get(s, k) {
            Some(Value::Number(x)) => Ok(*x),
            Some(_) => Err(Error::Config(format!("[{}] {k} is not a number", s.name()))),
            None => Err(Error::Config(format!("missing required key '{k}' in [{}]", s.name()))),
        }
    }

    fn num_or(&self, s: Section, k: &str, default: f64) -> f64 {
        self.num(s, k).unwrap_or(default)
    }

    fn opt_num(&self, s: Section, k: &str) -> Option<f64> {
        self.num(s, k).ok()
    }

    fn flag_or(&self, s: Section, k: &str, default: bool) -> bool {
        match self.get(s, k) {
            Some(Value::Bool(b)) => *b,
            _ => default,
        }
    }

    fn word_or<'a>(&'a self, s: Section, k: &str, default: &'a str) -> &'a str {
        match self.get(s, k) {
            Some(Value::Word(w)) => w,
            _ => default,
        }
    }

    fn list(&self, s: Section, k: &str) -> Result<Vec<f64>> {
        match self.get(s, k) {
            Some(Value::List(xs)) => Ok(xs.clone()),
            Some(Value::Number(x)) => Ok(vec![*x]),
            _ => Err(Error::Config(format!("missing required key '{k}' in [{}]", s.name()))),
        }
    }

    fn need(&self, s: Section) -> Result<()> {
        if self.has_section(s) {
            Ok(())
        } else {
            Err(Error::Config(format!("configuration has no [{}] section", s.name())))
        }
    }

    pub fn device_model(&self) -> Result<DeviceModel> {
        self.need(Device)?;
        let geometry = ElectrodeGeometry {
            n_fingers: self.num(Device, "n_fingers")? as u32,
            finger_length: self.num(Device, "finger_length")?,
            finger_width: self.num(Device, "finger_width")?,
            dielectric_thickness: self.num(Device, "dielectric_thickness")?,
            air_gap: self.num(Device, "air_gap")?,
            dielectric_rel_permittivity: self.num(Device, "dielectric_rel_permittivity")?,
            stopper_limit: self.num(Device, "stopper_limit")?,
        };
        let parasitics = ParasiticModel {
            c_substrate: self.num_or(Device, "c_substrate", 0.0),
            c_fringe_peak: self.num_or(Device, "c_fringe_peak", 0.0),
            substrate_grounded: self.flag_or(Device, "substrate_grounded", false),
            grounding_reduction: self.num_or(Device, "grounding_reduction", DEFAULT_GROUNDING_REDUCTION),
        };
        let d = BacksideDrieModel::default();
        let drie = BacksideDrieModel {
            depth: self.num_or(Device, "drie_depth", d.depth),
            cmin_baseline: self.num_or(Device, "drie_cmin_baseline", d.cmin_baseline),
            cmin_plateau: self.num_or(Device, "drie_cmin_plateau", d.cmin_plateau),
            plateau_depth: self.num_or(Device, "drie_plateau_depth", d.plateau_depth),
            mass_loss_at_plateau: self.num_or(Device, "drie_mass_loss_at_plateau", d.mass_loss_at_plateau),
        };
        Ok(DeviceModel {
            geometry,
            parasitics,
            drie,
            c_floor: self.num_or(Device, "c_floor", DEFAULT_CAPACITANCE_FLOOR),
        })
    }

    pub fn resonator(&self) -> Result<ResonatorParams> {
        self.need(Resonator)?;
        let mass = proof_mass_from_geometry(
            self.num(Resonator, "footprint_area")?,
            self.num(Resonator, "silicon_thickness")?,
            self.num_or(Resonator, "density", SILICON_DENSITY),
            self.num_or(Resonator, "removed_fraction", 0.0),
        )?;
        let stiffness = stiffness_from_resonance(mass, self.num(Resonator, "f0")?)?;
        let mut p = ResonatorParams::new(
            mass,
            stiffness,
            self.num_or(Resonator, "quality_factor", 20.0),
            self.num_or(Resonator, "stopper_limit", 50e-6),
        );
        p.stopper_model = match self.word_or(Resonator, "stopper_model", "inelastic_stop") {
            "clamp" => StopperModel::Clamp,
            "disabled" => StopperModel::Disabled,
            _ => StopperModel::InelasticStop,
        };
        let bias = self.num_or(Resonator, "bias_voltage", 0.0);
        if bias > 0.0 {
            p.coupling = Some(crate::mech::ElectrostaticCoupling {
                bias_voltage: bias,
                device: self.device_model()?,
            });
        }
        p.validate()?;
        Ok(p)
    }

    /// Base excitation: a single tone, or a stepped sweep when a sweep range is given.
    pub fn excitation(&self) -> Result<ExcitationSpec> {
        let p = self.resonator()?;
        let amplitude = self.num_or(Resonator, "excitation_amplitude", 5e-6);
        let range = (
            self.opt_num(Resonator, "sweep_start"),
            self.opt_num(Resonator, "sweep_stop"),
            self.opt_num(Resonator, "sweep_step"),
        );
        let exc = match range {
            (Some(start), Some(stop), Some(step)) => ExcitationSpec::FrequencySweep {
                amplitude,
                start,
                stop,
                step,
            },
            (None, None, None) => ExcitationSpec::Sinusoid {
                amplitude,
                frequency: self.num_or(Resonator, "excitation_frequency", p.natural_frequency()),
            },
            _ => {
                return Err(Error::Config(
                    "sweep_start, sweep_stop and sweep_step must be given together".into(),
                ))
            }
        };
        exc.validate()?;
        Ok(exc)
    }

    /// Time-domain run length and step for the resonator.
    pub fn resonator_timing(&self) -> Result<(f64, f64)> {
        let p = self.resonator()?;
        let f0 = p.natural_frequency();
        Ok((
            self.num_or(Resonator, "duration", 200.0 / f0),
            self.num_or(Resonator, "max_step", p.default_step()),
        ))
    }

    pub fn operating_point(&self) -> Result<HarvestOperatingPoint> {
        self.need(Energy)?;
        let (c_max, c_min) = match (self.opt_num(Energy, "c_max"), self.get(Energy, "c_min")) {
            (Some(a), Some(Value::Number(b))) => (a, *b),
            (None, None) => {
                let d = self.device_model().map_err(|_| {
                    Error::Config("[energy] needs c_max and c_min, or a [device] section to derive them".into())
                })?;
                (d.c_max(), d.c_min())
            }
            _ => return Err(Error::Config("[energy] c_max and c_min go together".into())),
        };
        Ok(HarvestOperatingPoint {
            v_in: self.num(Energy, "v_in")?,
            c_max,
            c_min,
            frequency: self.num(Energy, "frequency")?,
            device_volume: self.num_or(Energy, "device_volume", DEFAULT_DEVICE_VOLUME),
        })
    }

    /// Backside-etch density projection inputs: (C_max, frequency, depth).
    pub fn projection(&self) -> Option<(f64, f64, f64)> {
        let c_max = self.opt_num(Energy, "projection_c_max")?;
        let f = self
            .opt_num(Energy, "projection_frequency")
            .or_else(|| self.opt_num(Energy, "frequency"))?;
        let depth = self.num_or(Energy, "projection_depth", 20e-6);
        Some((c_max, f, depth))
    }

    pub fn circuit_params(&self) -> Result<CircuitParams> {
        self.need(Circuit)?;
        let diode = DiodeModel {
            forward_drop: self.num_or(Circuit, "diode_forward_drop", DiodeModel::silicon().forward_drop),
            on_resistance: self.num_or(Circuit, "diode_on_resistance", DiodeModel::silicon().on_resistance),
            off_conductance: self.num_or(Circuit, "diode_off_conductance", DiodeModel::silicon().off_conductance),
        };
        let sw = SwitchModel::default();
        Ok(CircuitParams {
            c_res: self.num(Circuit, "c_res")?,
            c_store: self.num(Circuit, "c_store")?,
            l_fly: self.num(Circuit, "l_fly")?,
            r_load: self.num(Circuit, "r_load")?,
            d1: diode,
            d2: diode,
            d_fly: diode,
            switch: SwitchModel {
                on_resistance: self.num_or(Circuit, "switch_on_resistance", sw.on_resistance),
                off_conductance: self.num_or(Circuit, "switch_off_conductance", sw.off_conductance),
                clock_period: self.num(Circuit, "clock_period")?,
                pulse_width: self.num(Circuit, "pulse_width")?,
                clock_offset: self.num_or(Circuit, "clock_offset", 0.0),
            },
            v_initial: self.num(Circuit, "v_initial")?,
            flyback_enabled: self.flag_or(Circuit, "flyback_enabled", true),
        })
    }

    /// Circuit run length: `duration_periods` clock periods (default 60).
    pub fn circuit_duration(&self) -> Result<f64> {
        let p = self.circuit_params()?;
        Ok(self.num_or(Circuit, "duration_periods", DEFAULT_DURATION_PERIODS) * p.switch.clock_period)
    }

    pub fn sim_options(&self) -> SimOptions {
        let mut o = SimOptions {
            step_scale: self.num_or(Circuit, "step_scale", 1.0),
            ..SimOptions::default()
        };
        o.sample_interval = self.opt_num(Circuit, "sample_interval");
        o
    }

    fn drive_kind(&self) -> &str {
        self.word_or(Drive, "kind", "abs_sine")
    }

    fn analytic_drive(&self) -> Result<CapacitanceDrive> {
        self.need(Drive)?;
        let (c_max, c_min, frequency) = (
            self.num(Drive, "c_max")?,
            self.num(Drive, "c_min")?,
            self.num(Drive, "frequency")?,
        );
        Ok(match self.drive_kind() {
            "direct_sine" => CapacitanceDrive::DirectSine { c_max, c_min, frequency },
            _ => CapacitanceDrive::AbsSine { c_max, c_min, frequency },
        })
    }

    /// Capacitance drive; the coupled kind simulates the resonator over
    /// `duration` at the drive frequency first.
    pub fn drive(&self, duration: f64) -> Result<CapacitanceDrive> {
        if self.drive_kind() != "coupled" {
            return self.analytic_drive();
        }
        let device = self.device_model()?;
        let res = self.resonator()?;
        let frequency = self.num(Drive, "frequency")?;
        let exc = ExcitationSpec::Sinusoid {
            amplitude: self.num_or(Resonator, "excitation_amplitude", 5e-6),
            frequency,
        };
        let step = res.default_step().min(1.0 / (2000.0 * frequency));
        let motion = simulate_motion(&res, &exc, duration * (1.0 + 1e-9), step)?;
        Ok(CapacitanceDrive::Coupled(CoupledDrive {
            device,
            motion: Arc::new(motion),
            frequency,
        }))
    }

    pub fn sweep_base(&self) -> Result<SweepBase> {
        let mut base = SweepBase::new(self.circuit_params()?, self.analytic_drive()?);
        base.duration_periods = self.num_or(Sweep, "duration_periods", DEFAULT_DURATION_PERIODS);
        base.clock_cycles = self.opt_num(Sweep, "clock_cycles");
        base.options = SimOptions {
            step_scale: self.num_or(Circuit, "step_scale", 1.0),
            ..SimOptions::default()
        };
        Ok(base)
    }

    pub fn sweep_metric(&self) -> SweepMetric {
        self.word_or(Sweep, "metric", "mean_v_out").parse().unwrap_or(SweepMetric::MeanVOut)
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec> {
        self.need(Sweep)?;
        Ok(SweepSpec {
            axis: self.word_or(Sweep, "axis", "").parse()?,
            grid: self.list(Sweep, "grid")?,
            base: self.sweep_base()?,
            metric: self.sweep_metric(),
        })
    }

    /// Second axis of a 2-D sweep, when configured.
    pub fn sweep_second_axis(&self) -> Result<Option<(SweepAxis, Vec<f64>)>> {
        match self.get(Sweep, "axis2") {
            Some(Value::Word(w)) => Ok(Some((w.parse()?, self.list(Sweep, "grid2")?))),
            _ => Ok(None),
        }
    }
}
