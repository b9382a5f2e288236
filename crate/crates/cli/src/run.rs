//! Preset execution. Every artifact is rendered in memory first so that
//! a run either writes all its files or none.

use std::f64::consts::PI;
use std::fmt::Write as _;

use spindyad::analysis::AnalysisError;
use spindyad::engine::{self, apply_sweep_value, EnsembleResult, SweepPoint};
use spindyad::model::{self, ModelError};
use spindyad::protocol::{optimal_tau_zq, polarization_transfer, transfer_mismatch};
use spindyad::{
    coherence_trace, fit_stretched_exponential, slope_frequency, temperature_shift, EngineError,
    Experiment, FitResult, InitialState, NoiseTrajectory, Protocol, SweepVariable, Target,
    TimeTrace,
};
use thiserror::Error;

use crate::config::{Config, ConfigError, Preset, Spacing};
use crate::svg::{Plot, Series};

/// Index of `|0,-1/2>` in the reduced basis.
const TRANSFER_TARGET: usize = 2;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Simulation(#[from] EngineError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Fit(#[from] AnalysisError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::Simulation(_) | RunError::Model(_) => "simulation",
            RunError::Fit(_) => "fit",
            RunError::Io(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Simulation(_) | RunError::Model(_) | RunError::Io(_) => 3,
            RunError::Fit(_) => 4,
        }
    }
}

/// Named file contents produced by a run.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: Vec<(String, String)>,
    /// `key=value` lines also written to `summary.txt`.
    pub summary: Vec<(String, String)>,
}

impl Artifacts {
    fn note(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.to_string(), value.to_string()));
    }
}

/// Resolved configuration as `# key=value` header pairs.
///
/// The output directory is left out: moving a run does not change its bytes.
pub fn header(cfg: &Config) -> Vec<(String, String)> {
    cfg.resolved
        .iter()
        .filter(|(k, _)| k != "output.dir")
        .cloned()
        .collect()
}

fn header_text(cfg: &Config) -> String {
    header(cfg)
        .iter()
        .map(|(k, v)| format!("# {k}={v}\n"))
        .collect()
}

fn header_lines(cfg: &Config) -> Vec<String> {
    header(cfg).iter().map(|(k, v)| format!("{k}={v}")).collect()
}

fn progress(msg: &str) {
    eprintln!("progress: {msg}");
}

pub fn execute(cfg: &Config) -> Result<Artifacts, RunError> {
    let mut art = match cfg.preset {
        Preset::Levels => levels(cfg)?,
        Preset::PolTransfer => pol_transfer(cfg)?,
        Preset::Thermometry => thermometry(cfg)?,
        _ => decay(cfg)?,
    };
    let mut summary = header_text(cfg);
    for (k, v) in &art.summary {
        let _ = writeln!(summary, "{k}={v}");
    }
    art.files.push(("summary.txt".into(), summary));
    art.files.push(("resolved.cfg".into(), cfg.to_text()));
    if !cfg.plot {
        art.files.retain(|(name, _)| !name.ends_with(".svg"));
    }
    Ok(art)
}

fn protocol(cfg: &Config) -> Result<Protocol, RunError> {
    let pc = &cfg.protocol;
    Ok(match cfg.preset {
        Preset::Echo | Preset::FieldSweep => Protocol::HahnEcho {
            target: pc.target,
            shared_field: pc.shared_field,
        },
        Preset::Deer => Protocol::Deer {
            shared_field: pc.shared_field,
        },
        Preset::ZqDecay | Preset::XiSweep | Preset::Electrometry | Preset::Thermometry => {
            Protocol::ZqDecay {
                tau_zq: pc.tau_zq,
                echo: pc.echo,
                theta: pc.theta,
            }
        }
        Preset::Custom => Protocol::Custom {
            program: pc
                .program
                .clone()
                .ok_or_else(|| ConfigError("custom preset needs protocol.program".into()))?,
        },
        Preset::Levels | Preset::PolTransfer => {
            return Err(ConfigError(format!("preset {} has no time trace", cfg.preset)).into())
        }
    })
}

/// The configured experiment with the time grid converted to per-half delays.
fn experiment(cfg: &Config) -> Result<Experiment, RunError> {
    let protocol = protocol(cfg)?;
    let per_tau = protocol.evolution_time(1.0);
    if per_tau <= 0.0 {
        return Err(ConfigError("program has no noisy delay to scan".into()).into());
    }
    let taus = cfg.protocol.times.values().iter().map(|t| t / per_tau).collect();
    let mut e = Experiment::new(cfg.params.clone(), protocol, taus);
    e.label = cfg.label.clone();
    e.noise = cfg.noise;
    e.electric = cfg.electric;
    e.sim = cfg.sim.clone();
    Ok(e)
}

/// Echo-type traces are fitted on the coherence amplitude, zero-quantum traces on `P0`.
fn fits_coherence(preset: Preset) -> bool {
    matches!(
        preset,
        Preset::Echo | Preset::Deer | Preset::FieldSweep | Preset::Custom
    )
}

enum Outcome {
    Fit(FitResult),
    NoDecay,
}

impl Outcome {
    fn t2(&self) -> Option<f64> {
        match self {
            Outcome::Fit(f) => Some(f.t2),
            Outcome::NoDecay => None,
        }
    }
}

fn fit(trace: &TimeTrace) -> Result<Outcome, RunError> {
    match fit_stretched_exponential(trace) {
        Ok(f) => Ok(Outcome::Fit(f)),
        Err(AnalysisError::NoDecayResolvable { .. }) => Ok(Outcome::NoDecay),
        Err(e) => Err(e.into()),
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

struct Point {
    value: Option<f64>,
    result: EnsembleResult,
    fitted: TimeTrace,
    outcome: Outcome,
}

fn run_points(cfg: &Config, base: &Experiment) -> Result<Vec<Point>, RunError> {
    let coherence = fits_coherence(cfg.preset);
    let runs: Vec<(Option<f64>, Experiment)> = match &cfg.sweep {
        None => vec![(None, base.clone())],
        Some(s) => {
            let var: SweepVariable = s.variable.parse().map_err(ConfigError)?;
            s.grid
                .values()
                .into_iter()
                .map(|v| Ok((Some(v), apply_sweep_value(var, v, base)?)))
                .collect::<Result<_, RunError>>()?
        }
    };
    let n = runs.len();
    let mut points = Vec::with_capacity(n);
    for (k, (value, exp)) in runs.into_iter().enumerate() {
        progress(&format!("{} point {}/{n}", cfg.preset, k + 1));
        let result = engine::run_ensemble(&exp)?;
        let fitted = if coherence {
            coherence_trace(&result)
        } else {
            result.trace.clone()
        };
        let outcome = fit(&fitted)?;
        points.push(Point {
            value,
            result,
            fitted,
            outcome,
        });
    }
    Ok(points)
}

fn traces_csv(cfg: &Config, traces: Vec<SweepPoint>, footer: &[(String, String)]) -> Result<String, RunError> {
    let mut buf = Vec::new();
    engine::write_csv(&mut buf, &header(cfg), &traces, footer)?;
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}

fn fit_table(cfg: &Config, variable: &str, points: &[Point], eta: Option<&[Option<f64>]>) -> String {
    let mut s = header_text(cfg);
    s.push_str(variable);
    s.push_str(",t2_s,stretch_n,amplitude,offset,residual_rms,converged,status");
    if eta.is_some() {
        s.push_str(",eta");
    }
    s.push('\n');
    for (i, p) in points.iter().enumerate() {
        let value = fmt_opt(p.value);
        match &p.outcome {
            Outcome::Fit(f) => {
                let _ = write!(
                    s,
                    "{value},{},{},{},{},{},{},ok",
                    f.t2, f.stretch_n, f.amplitude, f.offset, f.residual_rms, f.converged
                );
            }
            Outcome::NoDecay => {
                let _ = write!(s, "{value},,,,,,,no_decay");
            }
        }
        if let Some(eta) = eta {
            let _ = write!(s, ",{}", fmt_opt(eta[i]));
        }
        s.push('\n');
    }
    s
}

fn trace_plot(cfg: &Config, title: &str, y_label: &str, series: Vec<Series>) -> String {
    Plot {
        title: title.to_string(),
        x_label: "free evolution time (s)".into(),
        y_label: y_label.to_string(),
        log_x: cfg.protocol.times.spacing == Spacing::Log,
        series,
    }
    .render(&header_lines(cfg))
}

fn series_name(variable: Option<&str>, value: Option<f64>) -> String {
    match (variable, value) {
        (Some(var), Some(v)) => format!("{var}={v:.3e}"),
        _ => "P0".into(),
    }
}

/// Far-from-resonance single-quantum echo on the spin-1 with the configured noise.
fn sq_reference(cfg: &Config) -> Result<(TimeTrace, Outcome), RunError> {
    let times: Vec<f64> = std::iter::once(0.0)
        .chain((0..40).map(|k| 0.5e-6 * (400.0f64).powf(k as f64 / 39.0)))
        .collect();
    let mut e = Experiment::new(
        cfg.params.clone(),
        Protocol::HahnEcho {
            target: Target::SpinS,
            shared_field: false,
        },
        times.iter().map(|t| t / 2.0).collect(),
    );
    e.label = format!("{}_sq_reference", cfg.label);
    e.noise = cfg.noise;
    e.sim = cfg.sim.clone();
    e.sim.near_bm = false;
    e.sim.delta_b = 0.0;
    e.sim.delta_temperature = 0.0;
    progress("single-quantum reference");
    let coherence = coherence_trace(&engine::run_ensemble(&e)?);
    let outcome = fit(&coherence)?;
    Ok((coherence, outcome))
}

/// Echo, DEER, zero-quantum and custom runs, with or without a sweep.
fn decay(cfg: &Config) -> Result<Artifacts, RunError> {
    let base = experiment(cfg)?;
    let points = run_points(cfg, &base)?;
    let variable = cfg.sweep.as_ref().map(|s| s.variable.as_str());
    let coherence = fits_coherence(cfg.preset);
    let mut art = Artifacts::default();
    art.note("fit_signal", if coherence { "coherence_amplitude" } else { "p0" });

    let reference = match cfg.preset {
        Preset::FieldSweep | Preset::XiSweep => Some(sq_reference(cfg)?),
        _ => None,
    };
    let t2_sq = reference.as_ref().and_then(|(_, o)| o.t2());
    let eta: Option<Vec<Option<f64>>> = (cfg.preset == Preset::FieldSweep).then(|| {
        points
            .iter()
            .map(|p| Some(p.outcome.t2()? / t2_sq?))
            .collect()
    });

    let footer = match (&cfg.sweep, &points[0].outcome) {
        (None, Outcome::Fit(f)) => f.metadata(),
        (None, Outcome::NoDecay) => vec![("fit_status".into(), "no_decay".into())],
        _ => vec![],
    };
    let as_sweep = |trace: &TimeTrace, value| SweepPoint {
        value,
        trace: trace.clone(),
    };
    let raw: Vec<SweepPoint> = points.iter().map(|p| as_sweep(&p.result.trace, p.value)).collect();
    art.files.push(("trace.csv".into(), traces_csv(cfg, raw, &footer)?));
    if coherence {
        let c: Vec<SweepPoint> = points.iter().map(|p| as_sweep(&p.fitted, p.value)).collect();
        art.files.push(("coherence.csv".into(), traces_csv(cfg, c, &footer)?));
    }
    if let Some((trace, outcome)) = &reference {
        let footer = match outcome {
            Outcome::Fit(f) => f.metadata(),
            Outcome::NoDecay => vec![("fit_status".into(), "no_decay".into())],
        };
        art.files
            .push(("reference.csv".into(), traces_csv(cfg, vec![as_sweep(trace, None)], &footer)?));
        art.note("t2_sq_reference_s", fmt_opt(t2_sq));
    }
    if let Some(var) = variable {
        art.files
            .push(("table.csv".into(), fit_table(cfg, var, &points, eta.as_deref())));
    }

    for (i, p) in points.iter().enumerate() {
        let prefix = match p.value {
            Some(v) => format!("{}={v}:", variable.unwrap_or("value")),
            None => String::new(),
        };
        match &p.outcome {
            Outcome::Fit(f) => {
                art.note(&format!("{prefix}t2_s"), f.t2);
                art.note(&format!("{prefix}stretch_n"), f.stretch_n);
            }
            Outcome::NoDecay => art.note(&format!("{prefix}t2_s"), "no_decay"),
        }
        if let Some(Some(e)) = eta.as_ref().map(|e| e[i]) {
            art.note(&format!("{prefix}eta"), e);
        }
    }
    let t2s: Vec<Option<f64>> = points.iter().map(|p| p.outcome.t2()).collect();
    match cfg.preset {
        Preset::FieldSweep => {
            let best = eta
                .iter()
                .flatten()
                .zip(&points)
                .filter_map(|(e, p)| Some((e.as_ref().copied()?, p.value?)))
                .max_by(|a, b| a.0.total_cmp(&b.0));
            if let Some((e, v)) = best {
                art.note("eta_peak", e);
                art.note("eta_peak_delta_b_t", v);
            }
        }
        Preset::XiSweep => {
            let monotone = t2s.windows(2).all(|w| match (w[0], w[1]) {
                (Some(a), Some(b)) => b <= a,
                _ => true,
            });
            art.note("t2_non_increasing_in_xi", monotone);
            if let Some(sq) = t2_sq {
                let first = t2s.first().copied().flatten();
                art.note("t2_first_exceeds_sq_reference", first.is_none_or(|t| t > sq));
            }
        }
        Preset::Electrometry => {
            let decreasing = t2s.windows(2).all(|w| match (w[0], w[1]) {
                (Some(a), Some(b)) => b < a,
                _ => false,
            });
            art.note("t2_strictly_decreasing_in_eps_rms", decreasing);
        }
        _ => {}
    }

    if cfg.plot {
        let series = points
            .iter()
            .map(|p| Series {
                name: series_name(variable, p.value),
                x: p.result.trace.times.clone(),
                y: p.result.trace.signal_mean.clone(),
            })
            .collect();
        art.files.push((
            "plot.svg".into(),
            trace_plot(cfg, &cfg.label, "m_S = 0 population", series),
        ));
    }
    Ok(art)
}

fn levels(cfg: &Config) -> Result<Artifacts, RunError> {
    let b_values = match &cfg.sweep {
        Some(s) => s.grid.values(),
        None => vec![cfg.params.b_field],
    };
    let p = &cfg.params;
    let plain = model::level_diagram(p, &b_values, false)?;
    let shifted = model::level_diagram(p, &b_values, true)?;
    let hz = |w: f64| w / (2.0 * PI);

    let mut csv = header_text(cfg);
    csv.push_str("b_field_t");
    for k in 0..6 {
        let _ = write!(csv, ",level_{k}_hz");
    }
    for k in 0..6 {
        let _ = write!(csv, ",shifted_{k}_hz");
    }
    csv.push('\n');
    for (i, b) in b_values.iter().enumerate() {
        let _ = write!(csv, "{b}");
        for branch in plain.branches.iter().chain(&shifted.branches) {
            let _ = write!(csv, ",{}", hz(branch[i]));
        }
        csv.push('\n');
    }

    let mut art = Artifacts::default();
    let bm = model::anticrossing_field(p);
    art.note("b_m_t", bm);
    art.note(
        "gap_at_b_m_hz",
        hz(model::anticrossing_gap(&p.clone().with_field(bm))?),
    );
    let mut best = (f64::INFINITY, f64::NAN);
    for &b in &b_values {
        let gap = model::anticrossing_gap(&p.clone().with_field(b))?;
        if gap < best.0 {
            best = (gap, b);
        }
    }
    art.note("grid_gap_min_t", best.1);
    art.note("grid_gap_min_hz", hz(best.0));
    art.files.push(("levels.csv".into(), csv));

    if cfg.plot {
        for (name, diagram, title) in [
            ("plot.svg", &plain, "energy levels"),
            ("plot_shifted.svg", &shifted, "energy levels + gamma_e B / 2"),
        ] {
            let series = diagram
                .branches
                .iter()
                .enumerate()
                .map(|(k, e)| Series {
                    name: format!("level {k}"),
                    x: b_values.clone(),
                    y: e.iter().map(|w| hz(*w)).collect(),
                })
                .collect();
            let plot = Plot {
                title: title.into(),
                x_label: "B (T)".into(),
                y_label: "energy / h (Hz)".into(),
                log_x: false,
                series,
            };
            art.files.push((name.into(), plot.render(&header_lines(cfg))));
        }
    }
    Ok(art)
}

/// Noise-free transfer fidelity onto `|0,-1/2>` for each `tau_zq`.
fn pol_transfer(cfg: &Config) -> Result<Artifacts, RunError> {
    let taus = match &cfg.sweep {
        Some(s) => s.grid.values(),
        None => vec![cfg.protocol.tau_zq],
    };
    let p = &cfg.params;
    let dt = cfg.sim.dt;
    let mut rows = Vec::with_capacity(taus.len());
    for &tau in &taus {
        let prog = polarization_transfer(tau);
        let steps = (prog.total_duration() / dt).ceil() as usize + 1;
        let rho = engine::propagate(
            &InitialState::Optical.density(),
            &prog,
            p,
            &NoiseTrajectory::quiet(steps, dt),
            &cfg.sim,
        )?;
        rows.push((tau, rho.fidelity_with_pure(TRANSFER_TARGET), transfer_mismatch(tau, p.j_par)));
    }

    let mut art = Artifacts::default();
    art.note("optimal_tau_zq_s", optimal_tau_zq(p.j_par));
    let mut csv = header_text(cfg);
    csv.push_str("tau_zq_s,fidelity,mismatch\n");
    for (tau, fid, mismatch) in &rows {
        let _ = writeln!(csv, "{tau},{fid},{}", fmt_opt(*mismatch));
    }
    art.files.push(("table.csv".into(), csv));
    for (tau, fid, mismatch) in &rows {
        let prefix = if cfg.sweep.is_some() {
            format!("tau_zq={tau}:")
        } else {
            String::new()
        };
        art.note(&format!("{prefix}fidelity"), fid);
        if let Some(m) = mismatch {
            art.note(&format!("{prefix}warning"), format!("tau_zq is {:.1}% off 1/(4 j_par)", 100.0 * m));
        }
    }
    if cfg.plot && rows.len() > 1 {
        let plot = Plot {
            title: cfg.label.clone(),
            x_label: "tau_zq (s)".into(),
            y_label: "fidelity with |0,-1/2>".into(),
            log_x: false,
            series: vec![Series {
                name: "fidelity".into(),
                x: rows.iter().map(|r| r.0).collect(),
                y: rows.iter().map(|r| r.1).collect(),
            }],
        };
        art.files.push(("plot.svg".into(), plot.render(&header_lines(cfg))));
    }
    Ok(art)
}

/// Recovers an injected temperature offset from the early-time zero-quantum slope.
fn thermometry(cfg: &Config) -> Result<Artifacts, RunError> {
    let exp = experiment(cfg)?;
    progress("thermometry");
    let trace = engine::run(&exp)?;
    let dw = slope_frequency(&trace, cfg.protocol.window)?;
    let dt = temperature_shift(dw, &cfg.params)?;

    let injected = cfg.sim.delta_temperature;
    let expected = model::thermal_frequency(injected, &cfg.params);
    let mut art = Artifacts::default();
    art.note("slope_window_s", cfg.protocol.window);
    art.note("delta_temperature_injected_k", injected);
    art.note("delta_omega_expected_rad_s", expected);
    art.note("delta_omega_recovered_rad_s", dw);
    art.note("delta_temperature_recovered_k", dt);
    if injected != 0.0 {
        art.note("delta_temperature_relative_error", (dt - injected).abs() / injected.abs());
    }
    let footer = vec![
        ("delta_omega_recovered_rad_s".to_string(), dw.to_string()),
        ("delta_temperature_recovered_k".to_string(), dt.to_string()),
    ];
    let series = vec![Series {
        name: "P0".into(),
        x: trace.times.clone(),
        y: trace.signal_mean.clone(),
    }];
    art.files.push((
        "trace.csv".into(),
        traces_csv(cfg, vec![SweepPoint { value: None, trace }], &footer)?,
    ));
    if cfg.plot {
        art.files
            .push(("plot.svg".into(), trace_plot(cfg, &cfg.label, "m_S = 0 population", series)));
    }
    Ok(art)
}
