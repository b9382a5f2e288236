//! Flat `key=value` experiment configuration.
//!
//! Keys live in `[section]` blocks or are written `section.key=value`. Values
//! with physical dimensions take a unit suffix. Every value read, including
//! defaults, is recorded so the resolved configuration can be echoed into
//! output headers and parsed back.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use spindyad::model::{self, DyadParams};
use spindyad::noise::{DEFAULT_DT, DEFAULT_SWITCH_RATE};
use spindyad::protocol::optimal_tau_zq;
use spindyad::{ElectricNoiseConfig, FluctuatorConfig, PulseProgram, SimConfig, Target};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Levels,
    Echo,
    Deer,
    FieldSweep,
    PolTransfer,
    ZqDecay,
    XiSweep,
    Electrometry,
    Thermometry,
    Custom,
}

impl Preset {
    pub const ALL: [Preset; 10] = [
        Preset::Levels,
        Preset::Echo,
        Preset::Deer,
        Preset::FieldSweep,
        Preset::PolTransfer,
        Preset::ZqDecay,
        Preset::XiSweep,
        Preset::Electrometry,
        Preset::Thermometry,
        Preset::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Levels => "levels",
            Preset::Echo => "echo",
            Preset::Deer => "deer",
            Preset::FieldSweep => "field_sweep",
            Preset::PolTransfer => "pol_transfer",
            Preset::ZqDecay => "zq_decay",
            Preset::XiSweep => "xi_sweep",
            Preset::Electrometry => "electrometry",
            Preset::Thermometry => "thermometry",
            Preset::Custom => "custom",
        }
    }

    fn is_zero_quantum(self) -> bool {
        matches!(
            self,
            Preset::ZqDecay | Preset::XiSweep | Preset::Electrometry | Preset::Thermometry
        )
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| ConfigError(format!("unknown preset '{s}'")))
    }
}

/// Physical dimension of a value and its accepted suffixes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Frequency,
    Field,
    Time,
    Temperature,
    ElectricField,
    Length,
    Plain,
}

impl Unit {
    fn suffixes(self) -> &'static [(&'static str, f64)] {
        match self {
            Unit::Frequency => &[("GHz", 1e9), ("MHz", 1e6), ("kHz", 1e3), ("Hz", 1.0)],
            Unit::Field => &[("mT", 1e-3), ("uT", 1e-6), ("nT", 1e-9), ("T", 1.0)],
            Unit::Time => &[("ms", 1e-3), ("us", 1e-6), ("ns", 1e-9), ("s", 1.0)],
            Unit::Temperature => &[("K", 1.0)],
            Unit::ElectricField => &[("V_per_m", 1.0)],
            Unit::Length => &[("nm", 1e-9), ("um", 1e-6), ("m", 1.0)],
            Unit::Plain => &[],
        }
    }

    /// Suffix used when echoing a value.
    pub fn canonical(self) -> &'static str {
        match self {
            Unit::Frequency => "Hz",
            Unit::Field => "T",
            Unit::Time => "s",
            Unit::Temperature => "K",
            Unit::ElectricField => "V_per_m",
            Unit::Length => "m",
            Unit::Plain => "",
        }
    }
}

/// Parses `value` with an optional unit suffix into SI units.
pub fn parse_quantity(value: &str, unit: Unit) -> Result<f64, ConfigError> {
    let v = value.trim();
    let (number, scale) = unit
        .suffixes()
        .iter()
        .find_map(|(suffix, scale)| v.strip_suffix(suffix).map(|n| (n.trim(), *scale)))
        .unwrap_or((v, 1.0));
    match number.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x * scale),
        _ => {
            let accepted: Vec<&str> = unit.suffixes().iter().map(|s| s.0).collect();
            if accepted.is_empty() {
                err(format!("cannot parse '{v}' as a number"))
            } else {
                err(format!(
                    "cannot parse '{v}'; expected a number with optional suffix {}",
                    accepted.join("/")
                ))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Linear,
    Log,
}

impl Spacing {
    fn name(self) -> &'static str {
        match self {
            Spacing::Linear => "linear",
            Spacing::Log => "log",
        }
    }
}

/// `count` values from `start` to `stop`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    pub spacing: Spacing,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        (0..self.count)
            .map(|k| {
                let f = k as f64 / (self.count - 1) as f64;
                match self.spacing {
                    Spacing::Linear => self.start + f * (self.stop - self.start),
                    Spacing::Log => self.start * (self.stop / self.start).powf(f),
                }
            })
            .collect()
    }

    fn validate(&self, what: &str) -> Result<(), ConfigError> {
        if self.count == 0 {
            return err(format!("{what}: count must be at least 1"));
        }
        if self.spacing == Spacing::Log && !(self.start > 0.0 && self.stop > 0.0) {
            return err(format!("{what}: log spacing needs positive bounds"));
        }
        if self.count > 1 && self.stop <= self.start {
            return err(format!("{what}: stop must exceed start"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub variable: String,
    pub grid: Grid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub target: Target,
    pub shared_field: bool,
    pub tau_zq: f64,
    pub echo: bool,
    pub theta: f64,
    pub program: Option<PulseProgram>,
    /// Total free-evolution times of the trace.
    pub times: Grid,
    /// Early-time window of the thermometry slope.
    pub window: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub preset: Preset,
    pub label: String,
    pub params: DyadParams,
    pub noise: FluctuatorConfig,
    pub electric: Option<ElectricNoiseConfig>,
    pub sim: SimConfig,
    pub protocol: ProtocolConfig,
    pub sweep: Option<Sweep>,
    pub out_dir: PathBuf,
    pub plot: bool,
    /// Resolved `(section.key, value)` pairs in read order.
    pub resolved: Vec<(String, String)>,
}

impl Config {
    /// The resolved configuration as config text.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.resolved {
            s.push_str(&format!("{k}={v}\n"));
        }
        s
    }
}

/// Command-line values that replace file values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trajectories: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub no_plot: bool,
}

const SECTIONS: [&str; 6] = ["dyad", "noise", "sim", "protocol", "sweep", "output"];

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// Splits config text into `section.key -> value`.
fn tokenize(text: &str) -> Result<BTreeMap<String, Entry>, ConfigError> {
    let mut map = BTreeMap::new();
    let mut section: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim();
            if !SECTIONS.contains(&name) {
                return err(format!("line {line}: unknown section [{name}]"));
            }
            section = Some(name.to_string());
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return err(format!("line {line}: expected key=value, found '{content}'"));
        };
        let key = key.trim();
        let full = match (&section, key.contains('.')) {
            (_, true) => key.to_string(),
            (Some(s), false) => format!("{s}.{key}"),
            (None, false) => key.to_string(),
        };
        let entry = Entry {
            value: value.trim().to_string(),
            line,
        };
        if map.insert(full.clone(), entry).is_some() {
            return err(format!("line {line}: duplicate key '{full}'"));
        }
    }
    Ok(map)
}

/// Consumes keys and records each resolved value.
struct Reader {
    raw: BTreeMap<String, Entry>,
    /// Directory that relative paths are resolved against.
    base: PathBuf,
    resolved: Vec<(String, String)>,
}

impl Reader {
    fn take(&mut self, key: &str) -> Option<Entry> {
        self.raw.remove(key)
    }

    fn has(&self, key: &str) -> bool {
        self.raw.contains_key(key)
    }

    fn record(&mut self, key: &str, value: String) {
        self.resolved.push((key.to_string(), value));
    }

    fn context(key: &str, e: &Entry, msg: impl fmt::Display) -> ConfigError {
        ConfigError(format!("line {}: key '{key}': {msg}", e.line))
    }

    fn quantity(&mut self, key: &str, unit: Unit, default: Option<f64>) -> Result<f64, ConfigError> {
        let v = match self.take(key) {
            Some(e) => parse_quantity(&e.value, unit).map_err(|m| Self::context(key, &e, m))?,
            None => match default {
                Some(d) => d,
                None => return err(format!("missing required key '{key}'")),
            },
        };
        self.record(key, format!("{v}{}", unit.canonical()));
        Ok(v)
    }

    fn optional_quantity(&mut self, key: &str, unit: Unit) -> Result<Option<f64>, ConfigError> {
        if self.has(key) {
            self.quantity(key, unit, None).map(Some)
        } else {
            Ok(None)
        }
    }

    fn parsed<T: FromStr + fmt::Display>(&mut self, key: &str, default: Option<T>) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let v = match self.take(key) {
            Some(e) => e.value.parse::<T>().map_err(|m| Self::context(key, &e, m))?,
            None => match default {
                Some(d) => d,
                None => return err(format!("missing required key '{key}'")),
            },
        };
        self.record(key, v.to_string());
        Ok(v)
    }

    fn bool(&mut self, key: &str, default: bool) -> Result<bool, ConfigError> {
        let v = match self.take(key) {
            Some(e) => match e.value.as_str() {
                "true" => true,
                "false" => false,
                other => {
                    return Err(Self::context(key, &e, format!("expected true or false, got '{other}'")))
                }
            },
            None => default,
        };
        self.record(key, v.to_string());
        Ok(v)
    }

    fn spacing(&mut self, key: &str, default: Spacing) -> Result<Spacing, ConfigError> {
        let v = match self.take(key) {
            Some(e) => match e.value.as_str() {
                "linear" => Spacing::Linear,
                "log" => Spacing::Log,
                other => return Err(Self::context(key, &e, format!("expected linear or log, got '{other}'"))),
            },
            None => default,
        };
        self.record(key, v.name().to_string());
        Ok(v)
    }
}

fn sweep_unit(variable: &str) -> Result<Unit, ConfigError> {
    Ok(match variable {
        "delta_b" | "b_field" => Unit::Field,
        "xi" | "theta" => Unit::Plain,
        "eps_rms" => Unit::ElectricField,
        "tau" | "tau_tilde" | "tau_zq" => Unit::Time,
        other => return err(format!("unknown sweep variable '{other}'")),
    })
}

/// Sweep variables each preset accepts, and its default sweep if any.
fn sweep_rules(preset: Preset) -> (&'static [&'static str], Option<(&'static str, Grid)>) {
    let g = |start, stop, count, spacing| Grid {
        start,
        stop,
        count,
        spacing,
    };
    match preset {
        Preset::Levels => (&["b_field"], Some(("b_field", g(0.0, 0.1, 1001, Spacing::Linear)))),
        Preset::FieldSweep => (&["delta_b"], Some(("delta_b", g(-10e-6, 10e-6, 21, Spacing::Linear)))),
        Preset::XiSweep => (&["xi"], Some(("xi", g(0.1, 1.0, 5, Spacing::Linear)))),
        Preset::Electrometry => (&["eps_rms"], Some(("eps_rms", g(5e6, 2e7, 3, Spacing::Log)))),
        Preset::PolTransfer => (&["tau_zq"], None),
        Preset::Thermometry => (&[], None),
        Preset::Echo | Preset::Deer | Preset::Custom => (&["delta_b", "xi", "eps_rms"], None),
        Preset::ZqDecay => (&["delta_b", "xi", "eps_rms", "theta"], None),
    }
}

fn default_times(preset: Preset) -> Grid {
    let (start, stop, count, spacing) = match preset {
        Preset::Thermometry => (0.0, 4e-6, 17, Spacing::Linear),
        Preset::FieldSweep => (0.5e-6, 16e-3, 56, Spacing::Log),
        Preset::Electrometry | Preset::XiSweep => (0.5e-6, 1e-3, 40, Spacing::Log),
        Preset::ZqDecay => (0.0, 200e-6, 41, Spacing::Linear),
        _ => (0.0, 100e-6, 41, Spacing::Linear),
    };
    Grid {
        start,
        stop,
        count,
        spacing,
    }
}

/// Parses config text; relative paths inside it are resolved against `base`.
pub fn parse_config(text: &str, base: &Path, overrides: &Overrides) -> Result<Config, ConfigError> {
    let mut raw = tokenize(text)?;
    let set = |raw: &mut BTreeMap<String, Entry>, key: &str, value: String| {
        raw.insert(key.to_string(), Entry { value, line: 0 });
    };
    if let Some(seed) = overrides.seed {
        set(&mut raw, "sim.seed", seed.to_string());
    }
    if let Some(n) = overrides.trajectories {
        set(&mut raw, "sim.trajectories", n.to_string());
    }
    if let Some(dir) = &overrides.out_dir {
        set(&mut raw, "output.dir", dir.display().to_string());
    }
    if overrides.no_plot {
        set(&mut raw, "output.plot", "false".into());
    }
    let mut r = Reader {
        raw,
        base: base.to_path_buf(),
        resolved: Vec::new(),
    };

    let schema: u32 = r.parsed("schema", None)?;
    if schema != SCHEMA_VERSION {
        return err(format!("unsupported schema {schema}, expected {SCHEMA_VERSION}"));
    }
    let preset: Preset = r.parsed("preset", None)?;
    let label: String = r.parsed("label", Some(preset.name().to_string()))?;

    let params = read_dyad(&mut r, preset)?;
    let (noise, electric) = read_noise(&mut r, preset)?;
    let sim = read_sim(&mut r, preset)?;
    let protocol = read_protocol(&mut r, preset, &params)?;
    let sweep = read_sweep(&mut r, preset)?;
    let out_dir = PathBuf::from(r.parsed::<String>("output.dir", Some("out".into()))?);
    let plot = r.bool("output.plot", true)?;

    if let Some((key, e)) = r.raw.iter().min_by_key(|(_, e)| e.line) {
        return err(format!("line {}: unknown key '{key}'", e.line));
    }
    params.validate().map_err(|e| ConfigError(e.to_string()))?;
    noise.validate().map_err(|e| ConfigError(e.to_string()))?;
    if let Some(e) = &electric {
        e.validate().map_err(|e| ConfigError(e.to_string()))?;
    }
    Ok(Config {
        preset,
        label,
        params,
        noise,
        electric,
        sim,
        protocol,
        sweep,
        out_dir,
        plot,
        resolved: r.resolved,
    })
}

fn read_dyad(r: &mut Reader, preset: Preset) -> Result<DyadParams, ConfigError> {
    let mut p = DyadParams::default();
    p.delta = 2.0 * PI * r.quantity("dyad.delta", Unit::Frequency, Some(p.delta / (2.0 * PI)))?;
    // gyromagnetic ratio written as a frequency per tesla
    p.gamma_e = 2.0 * PI * r.quantity("dyad.gamma_e", Unit::Frequency, Some(p.gamma_e / (2.0 * PI)))?;

    let projected = r.has("dyad.j_par") || r.has("dyad.j_perp");
    let geometric = r.has("dyad.j_coupling") || r.has("dyad.distance") || r.has("dyad.theta");
    if projected && geometric {
        return err("give either j_par/j_perp or j_coupling (or distance) with theta, not both");
    }
    if r.has("dyad.j_coupling") && r.has("dyad.distance") {
        return err("give either j_coupling or distance, not both");
    }
    if geometric {
        let j = match r.optional_quantity("dyad.distance", Unit::Length)? {
            Some(d) => {
                p.distance = Some(d);
                model::coupling_from_distance(d, p.gamma_e).map_err(|e| ConfigError(e.to_string()))?
            }
            None => r.quantity("dyad.j_coupling", Unit::Frequency, None)?,
        };
        let theta = r.quantity("dyad.theta", Unit::Plain, Some(FRAC_PI_2))?;
        p = p.with_geometry(j, theta);
    } else if projected || preset != Preset::Levels {
        let j_par = r.quantity("dyad.j_par", Unit::Frequency, None)?;
        let j_perp = r.quantity("dyad.j_perp", Unit::Frequency, Some(0.0))?;
        p = p.with_projected(j_par, j_perp);
    }
    let bm = model::anticrossing_field(&p);
    p.b_field = r.quantity("dyad.b_field", Unit::Field, Some(bm))?;
    // couplings written per V/m and per K
    p.d_par = 2.0 * PI * r.quantity("dyad.d_par", Unit::Frequency, Some(p.d_par / (2.0 * PI)))?;
    p.d_perp = 2.0 * PI * r.quantity("dyad.d_perp", Unit::Frequency, Some(p.d_perp / (2.0 * PI)))?;
    p.ddelta_dt =
        2.0 * PI * r.quantity("dyad.ddelta_dt", Unit::Frequency, Some(p.ddelta_dt / (2.0 * PI)))?;
    Ok(p)
}

fn read_noise(
    r: &mut Reader,
    preset: Preset,
) -> Result<(FluctuatorConfig, Option<ElectricNoiseConfig>), ConfigError> {
    let beta_rms = r.quantity("noise.beta_rms", Unit::Field, Some(1e-6))?;
    let xi = r.quantity("noise.xi", Unit::Plain, Some(0.0))?;
    let switch_rate = r.quantity("noise.switch_rate", Unit::Frequency, Some(DEFAULT_SWITCH_RATE))?;
    let noise = FluctuatorConfig {
        beta_rms,
        xi,
        switch_rate,
        seed: 0,
    };
    let wants_electric = preset == Preset::Electrometry || r.has("noise.eps_rms");
    let electric = if wants_electric {
        let eps_rms = r.quantity("noise.eps_rms", Unit::ElectricField, Some(0.0))?;
        let rate = r.quantity("noise.eps_switch_rate", Unit::Frequency, Some(switch_rate))?;
        Some(ElectricNoiseConfig {
            eps_rms,
            switch_rate: rate,
            seed: 0,
        })
    } else {
        None
    };
    Ok((noise, electric))
}

fn read_sim(r: &mut Reader, preset: Preset) -> Result<SimConfig, ConfigError> {
    let n_trajectories = r.parsed("sim.trajectories", Some(500usize))?;
    if n_trajectories == 0 {
        return err("sim.trajectories must be at least 1");
    }
    let dt = r.quantity("sim.dt", Unit::Time, Some(DEFAULT_DT))?;
    if dt <= 0.0 {
        return err("sim.dt must be positive");
    }
    let master_seed = r.parsed("sim.seed", Some(0u64))?;
    let near_bm = r.bool("sim.near_bm", preset == Preset::FieldSweep)?;
    let delta_b = r.quantity("sim.delta_b", Unit::Field, Some(0.0))?;
    let delta_temperature = r.quantity("sim.delta_temperature", Unit::Temperature, Some(0.0))?;
    Ok(SimConfig {
        n_trajectories,
        dt,
        master_seed,
        near_bm,
        delta_b,
        delta_temperature,
    })
}

fn read_protocol(r: &mut Reader, preset: Preset, p: &DyadParams) -> Result<ProtocolConfig, ConfigError> {
    let (default_target, default_shared) = match preset {
        Preset::FieldSweep => (Target::Both, true),
        _ => (Target::SpinS, false),
    };
    let target = r.parsed("protocol.target", Some(default_target))?;
    let shared_field = r.bool("protocol.shared_field", default_shared)?;
    let default_tau_zq = if p.j_par != 0.0 {
        Some(optimal_tau_zq(p.j_par).abs())
    } else {
        None
    };
    let needs_zq = preset.is_zero_quantum() || preset == Preset::PolTransfer;
    let tau_zq = if needs_zq || r.has("protocol.tau_zq") {
        r.quantity("protocol.tau_zq", Unit::Time, default_tau_zq)?
    } else {
        default_tau_zq.unwrap_or(0.0)
    };
    let echo = r.bool("protocol.echo", !matches!(preset, Preset::Thermometry | Preset::Electrometry))?;
    let default_theta = if preset == Preset::Thermometry { FRAC_PI_2 } else { 0.0 };
    let theta = r.quantity("protocol.theta", Unit::Plain, Some(default_theta))?;

    let program = if preset == Preset::Custom {
        let path: String = r.parsed("protocol.program", None)?;
        let text = std::fs::read_to_string(r.base.join(&path))
            .map_err(|e| ConfigError(format!("cannot read program '{path}': {e}")))?;
        Some(text.parse::<PulseProgram>().map_err(|e| ConfigError(format!("program '{path}': {e}")))?)
    } else {
        None
    };

    let d = default_times(preset);
    let times = Grid {
        start: r.quantity("protocol.t_start", Unit::Time, Some(d.start))?,
        stop: r.quantity("protocol.t_stop", Unit::Time, Some(d.stop))?,
        count: r.parsed("protocol.t_count", Some(d.count))?,
        spacing: r.spacing("protocol.t_spacing", d.spacing)?,
    };
    times.validate("protocol times")?;
    if times.start < 0.0 {
        return err("protocol.t_start must be non-negative");
    }
    let window = if preset == Preset::Thermometry {
        r.quantity("protocol.window", Unit::Time, Some(times.stop))?
    } else {
        0.0
    };
    Ok(ProtocolConfig {
        target,
        shared_field,
        tau_zq,
        echo,
        theta,
        program,
        times,
        window,
    })
}

fn read_sweep(r: &mut Reader, preset: Preset) -> Result<Option<Sweep>, ConfigError> {
    let (allowed, default) = sweep_rules(preset);
    let given = ["sweep.variable", "sweep.start", "sweep.stop", "sweep.count", "sweep.spacing"]
        .iter()
        .any(|k| r.has(k));
    if !given && default.is_none() {
        return Ok(None);
    }
    let variable: String = match &default {
        Some((v, _)) => r.parsed("sweep.variable", Some(v.to_string()))?,
        None => r.parsed("sweep.variable", None)?,
    };
    if !allowed.contains(&variable.as_str()) {
        return err(format!(
            "preset {} cannot sweep '{variable}' (allowed: {})",
            preset.name(),
            if allowed.is_empty() { "none".to_string() } else { allowed.join(", ") }
        ));
    }
    let unit = sweep_unit(&variable)?;
    let d = default.map(|(_, g)| g);
    let grid = Grid {
        start: r.quantity("sweep.start", unit, d.as_ref().map(|g| g.start))?,
        stop: r.quantity("sweep.stop", unit, d.as_ref().map(|g| g.stop))?,
        count: r.parsed("sweep.count", d.as_ref().map(|g| g.count))?,
        spacing: r.spacing("sweep.spacing", d.as_ref().map_or(Spacing::Linear, |g| g.spacing))?,
    };
    grid.validate("sweep")?;
    Ok(Some(Sweep { variable, grid }))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL_ZQ: &str = "schema=1\npreset=zq_decay\n[dyad]\nj_par=50kHz\n[noise]\nbeta_rms=1uT\nxi=0.5\n";

    #[test]
    fn minimal_zq_config_gets_defaults() {
        let c = parse_config(MINIMAL_ZQ, Path::new("."), &Overrides::default()).unwrap();
        assert_eq!(c.preset, Preset::ZqDecay);
        assert_eq!(c.sim.dt, 10e-9);
        assert_eq!(c.noise.beta_rms, 1e-6);
        assert_eq!(c.noise.xi, 0.5);
        assert!((c.protocol.tau_zq - 5e-6).abs() < 1e-18);
        assert!(c.resolved.iter().any(|(k, v)| k == "sim.dt" && v == "0.00000001s"));
    }

    #[test]
    fn unknown_key_is_named() {
        let text = MINIMAL_ZQ.replace("beta_rms", "beta_rm");
        let e = parse_config(&text, Path::new("."), &Overrides::default()).unwrap_err();
        assert!(e.0.contains("noise.beta_rm"), "{e}");
    }

    #[test]
    fn missing_required_key() {
        let e = parse_config("schema=1\npreset=echo\n", Path::new("."), &Overrides::default()).unwrap_err();
        assert!(e.0.contains("dyad.j_par"), "{e}");
    }

    #[test]
    fn bad_suffix_rejected() {
        let text = MINIMAL_ZQ.replace("1uT", "1uHz");
        let e = parse_config(&text, Path::new("."), &Overrides::default()).unwrap_err();
        assert!(e.0.contains("mT/uT/nT/T"), "{e}");
    }

    #[test]
    fn suffixes_scale() {
        assert_eq!(parse_quantity("2.5MHz", Unit::Frequency).unwrap(), 2.5e6);
        assert_eq!(parse_quantity("3us", Unit::Time).unwrap(), 3e-6);
        assert_eq!(parse_quantity("4e6V_per_m", Unit::ElectricField).unwrap(), 4e6);
        assert_eq!(parse_quantity("-2K", Unit::Temperature).unwrap(), -2.0);
        assert_eq!(parse_quantity("0.1", Unit::Field).unwrap(), 0.1);
        assert!(parse_quantity("1 furlong", Unit::Length).is_err());
    }

    #[test]
    fn resolved_text_round_trips() {
        let c = parse_config(MINIMAL_ZQ, Path::new("."), &Overrides::default()).unwrap();
        let c2 = parse_config(&c.to_text(), Path::new("."), &Overrides::default()).unwrap();
        assert_eq!(c.params, c2.params);
        assert_eq!(c.sim, c2.sim);
        assert_eq!(c.to_text(), c2.to_text());
    }

    #[test]
    fn overrides_replace_file_values() {
        let o = Overrides {
            seed: Some(9),
            trajectories: Some(3),
            out_dir: Some("elsewhere".into()),
            no_plot: true,
        };
        let c = parse_config(MINIMAL_ZQ, Path::new("."), &o).unwrap();
        assert_eq!(c.sim.master_seed, 9);
        assert_eq!(c.sim.n_trajectories, 3);
        assert_eq!(c.out_dir, PathBuf::from("elsewhere"));
        assert!(!c.plot);
    }

    #[test]
    fn field_sweep_defaults_span_ten_microtesla() {
        let c = parse_config(
            "schema=1\npreset=field_sweep\n[dyad]\nj_par=0.75MHz\nj_perp=0.75MHz\n",
            Path::new("."), &Overrides::default(),
        )
        .unwrap();
        let s = c.sweep.unwrap();
        assert_eq!(s.variable, "delta_b");
        assert_eq!((s.grid.start, s.grid.stop), (-10e-6, 10e-6));
        assert!(c.sim.near_bm);
    }

    #[test]
    fn sweep_variable_must_suit_preset() {
        let text = format!("{MINIMAL_ZQ}[sweep]\nvariable=b_field\nstart=0T\nstop=1T\ncount=3\n");
        assert!(parse_config(&text, Path::new("."), &Overrides::default()).is_err());
    }
}
