//! Time propagation of pulse programs under sampled noise, and trajectory averaging.
//!
//! Delays are evolved in the doubly rotating frame. Noise is piecewise constant
//! on the `dt` grid, so each maximal run of identical noise values needs one
//! eigendecomposition; any sub-interval of the run is then exact.

use std::f64::consts::PI;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use nalgebra::{Matrix4, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{Basis, ComplexMatrix, DensityMatrix, LinalgError};
use crate::model::{self, DyadParams, ModelError};
use crate::noise::{
    self, ElectricNoiseConfig, FluctuatorConfig, NoiseError, NoiseTrajectory, DEFAULT_DT,
};
use crate::protocol::{self, PulseElement, PulseProgram, ProtocolError, Target};

type M4 = Matrix4<Complex64>;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("trajectory covers {available} s but the program needs {needed} s")]
    TrajectoryTooShort { needed: f64, available: f64 },
    #[error("dt = {dt} s exceeds the bound {limit} s set by the fastest eigenfrequency")]
    DtBound { dt: f64, limit: f64 },
    #[error("propagation requires the reduced basis, got {0:?}")]
    Basis(Basis),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("state left the physical set: {0}")]
    Unphysical(String),
    #[error("trajectory {index}: {source}")]
    Trajectory {
        index: usize,
        #[source]
        source: Box<EngineError>,
    },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_trajectories: usize,
    pub dt: f64,
    pub master_seed: u64,
    /// Keep the double-quantum coupling in the static generator.
    pub near_bm: bool,
    /// Static field detuning from resonance, T.
    pub delta_b: f64,
    /// Static temperature offset, K.
    pub delta_temperature: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_trajectories: 500,
            dt: DEFAULT_DT,
            master_seed: 0,
            near_bm: false,
            delta_b: 0.0,
            delta_temperature: 0.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.n_trajectories == 0 {
            return Err(EngineError::Config("n_trajectories must be at least 1".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(EngineError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !self.delta_b.is_finite() || !self.delta_temperature.is_finite() {
            return Err(EngineError::Config("non-finite detuning".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeTrace {
    /// Total free-evolution time of each point, s.
    pub times: Vec<f64>,
    /// Mean `m_S = 0` population.
    pub signal_mean: Vec<f64>,
    pub signal_sem: Vec<f64>,
    pub metadata: Vec<(String, String)>,
}

impl TimeTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

fn to_m4(m: &ComplexMatrix) -> M4 {
    M4::from_fn(|i, j| m[(i, j)])
}

fn from_m4(m: &M4) -> ComplexMatrix {
    ComplexMatrix::from_fn(4, 4, |i, j| m[(i, j)])
}

/// Spectral form of a constant generator.
#[derive(Debug, Clone)]
struct Spectral {
    vals: [f64; 4],
    vecs: M4,
    diagonal: bool,
}

impl Spectral {
    fn of(h: &M4) -> Spectral {
        let off = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .any(|(i, j)| i != j && h[(i, j)] != Complex64::new(0.0, 0.0));
        if !off {
            return Spectral {
                vals: [h[(0, 0)].re, h[(1, 1)].re, h[(2, 2)].re, h[(3, 3)].re],
                vecs: M4::identity(),
                diagonal: true,
            };
        }
        let eig = SymmetricEigen::new(*h);
        Spectral {
            vals: [
                eig.eigenvalues[0],
                eig.eigenvalues[1],
                eig.eigenvalues[2],
                eig.eigenvalues[3],
            ],
            vecs: eig.eigenvectors,
            diagonal: false,
        }
    }

    fn max_abs_eigenvalue(&self) -> f64 {
        self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    fn check_dt(&self, dt: f64) -> Result<(), EngineError> {
        // at least 20 steps per period of the fastest cyclic eigenfrequency
        let fmax = self.max_abs_eigenvalue() / (2.0 * PI);
        if fmax > 0.0 {
            let limit = 1.0 / (20.0 * fmax);
            if dt > limit {
                return Err(EngineError::DtBound { dt, limit });
            }
        }
        Ok(())
    }

    fn evolve(&self, rho: &mut M4, t: f64) {
        if t == 0.0 {
            return;
        }
        let phase = |k: usize| Complex64::from_polar(1.0, -self.vals[k] * t);
        if self.diagonal {
            for i in 0..4 {
                for j in 0..4 {
                    rho[(i, j)] *= phase(i) * phase(j).conj();
                }
            }
        } else {
            let mut vd = self.vecs;
            for k in 0..4 {
                let mut col = vd.column_mut(k);
                col *= phase(k);
            }
            let u = vd * self.vecs.adjoint();
            *rho = u * *rho * u.adjoint();
        }
    }
}

/// Static part of the generator plus the operators noise couples to.
struct Frame {
    static_h: M4,
    sz: M4,
    spz: M4,
    gamma_e: f64,
    params: DyadParams,
    quiet: Spectral,
    dt: f64,
}

impl Frame {
    fn new(p: &DyadParams, cfg: &SimConfig) -> Result<Frame, EngineError> {
        let h = model::sim_frame_hamiltonian(p, cfg.delta_b, 0.0, 0.0, cfg.near_bm)
            + model::thermal_term(cfg.delta_temperature, p);
        let ops = crate::linalg::ReducedOperators::new();
        let static_h = to_m4(&h);
        let quiet = Spectral::of(&static_h);
        quiet.check_dt(cfg.dt)?;
        Ok(Frame {
            static_h,
            sz: to_m4(&ops.s.z),
            spz: to_m4(&ops.sp.z),
            gamma_e: p.gamma_e,
            params: p.clone(),
            quiet,
            dt: cfg.dt,
        })
    }

    fn noisy_h(&self, beta: f64, beta_prime: f64, eps: [f64; 3]) -> M4 {
        let mut h = self.static_h
            + self.sz * Complex64::from(self.gamma_e * beta)
            + self.spz * Complex64::from(self.gamma_e * beta_prime);
        if eps != [0.0; 3] {
            h += to_m4(&model::electric_term(eps, &self.params, Basis::Reduced4));
        }
        h
    }
}

/// Maximal runs of identical noise values with lazily built spectra.
struct RunCache<'a> {
    traj: &'a NoiseTrajectory,
    starts: Vec<usize>,
    spectra: Vec<Option<Spectral>>,
}

impl<'a> RunCache<'a> {
    fn new(traj: &'a NoiseTrajectory) -> Self {
        let same = |a: usize, b: usize| {
            traj.beta_s[a] == traj.beta_s[b]
                && traj.beta_s_prime[a] == traj.beta_s_prime[b]
                && traj.eps_at(a) == traj.eps_at(b)
        };
        let mut starts = Vec::new();
        for k in 0..traj.len() {
            if k == 0 || !same(k - 1, k) {
                starts.push(k);
            }
        }
        let spectra = vec![None; starts.len()];
        RunCache {
            traj,
            starts,
            spectra,
        }
    }

    fn run_of(&self, step: usize) -> usize {
        self.starts.partition_point(|&s| s <= step) - 1
    }

    fn run_end(&self, run: usize) -> usize {
        self.starts.get(run + 1).copied().unwrap_or(self.traj.len())
    }

    fn spectrum(&mut self, run: usize, frame: &Frame) -> Result<&Spectral, EngineError> {
        if self.spectra[run].is_none() {
            let k = self.starts[run];
            let h = frame.noisy_h(
                self.traj.beta_s[k],
                self.traj.beta_s_prime[k],
                self.traj.eps_at(k),
            );
            let s = Spectral::of(&h);
            s.check_dt(frame.dt)?;
            self.spectra[run] = Some(s);
        }
        Ok(self.spectra[run].as_ref().expect("filled above"))
    }

    fn evolve(
        &mut self,
        rho: &mut M4,
        start: f64,
        duration: f64,
        frame: &Frame,
    ) -> Result<(), EngineError> {
        if self.traj.is_empty() {
            return Err(EngineError::TrajectoryTooShort {
                needed: start + duration,
                available: 0.0,
            });
        }
        let dt = self.traj.dt;
        let end = start + duration;
        let mut t = start;
        while end - t > 1e-9 * dt {
            let step = ((t / dt + 1e-6).floor() as usize).min(self.traj.len() - 1);
            let run = self.run_of(step);
            let seg_end = (self.run_end(run) as f64 * dt).min(end);
            let seg = seg_end - t;
            if seg > 0.0 {
                self.spectrum(run, frame)?.evolve(rho, seg);
            }
            if seg_end <= t {
                // floating-point stall at the final boundary
                break;
            }
            t = seg_end;
        }
        Ok(())
    }
}

enum Step {
    Unitary(M4),
    Delay { start: f64, duration: f64, noisy: bool },
    Repump,
}

struct Compiled {
    steps: Vec<Step>,
    duration: f64,
}

fn compile(prog: &PulseProgram) -> Result<Compiled, EngineError> {
    prog.validate()?;
    let mut steps = Vec::with_capacity(prog.elements.len());
    let mut clock = 0.0;
    for e in &prog.elements {
        match *e {
            PulseElement::Rotation {
                target,
                axis,
                angle,
                shared_field,
            } => {
                let u = protocol::rotation_unitary(target, axis, angle, shared_field, Basis::Reduced4)?;
                steps.push(Step::Unitary(to_m4(u.matrix())));
            }
            PulseElement::Delay { duration, noisy } => {
                steps.push(Step::Delay {
                    start: clock,
                    duration,
                    noisy,
                });
                clock += duration;
            }
            PulseElement::Repump => steps.push(Step::Repump),
        }
    }
    Ok(Compiled {
        steps,
        duration: clock,
    })
}

fn repump_m4(rho: &M4) -> M4 {
    to_m4(&protocol::repump_matrix(&from_m4(rho)))
}

fn spot_check(rho: &M4) -> Result<(), EngineError> {
    let tr: Complex64 = (0..4).map(|k| rho[(k, k)]).sum();
    if (tr - Complex64::new(1.0, 0.0)).norm() > 1e-9 {
        return Err(EngineError::Unphysical(format!("trace {tr}")));
    }
    let herm = (rho - rho.adjoint()).iter().fold(0.0f64, |m, v| m.max(v.norm()));
    if herm > 1e-9 {
        return Err(EngineError::Unphysical(format!("hermiticity defect {herm}")));
    }
    Ok(())
}

fn propagate_compiled(
    rho0: &M4,
    prog: &Compiled,
    cache: &mut RunCache<'_>,
    frame: &Frame,
) -> Result<M4, EngineError> {
    let available = cache.traj.duration();
    if prog.duration > available + 1e-6 * cache.traj.dt {
        return Err(EngineError::TrajectoryTooShort {
            needed: prog.duration,
            available,
        });
    }
    let mut rho = *rho0;
    for step in &prog.steps {
        match step {
            Step::Unitary(u) => rho = u * rho * u.adjoint(),
            Step::Delay {
                start,
                duration,
                noisy,
            } => {
                if *noisy {
                    cache.evolve(&mut rho, *start, *duration, frame)?;
                } else {
                    frame.quiet.evolve(&mut rho, *duration);
                }
            }
            Step::Repump => rho = repump_m4(&rho),
        }
        spot_check(&rho)?;
    }
    Ok(rho)
}

/// Propagates `rho0` through `prog` along one noise realization.
pub fn propagate(
    rho0: &DensityMatrix,
    prog: &PulseProgram,
    p: &DyadParams,
    traj: &NoiseTrajectory,
    cfg: &SimConfig,
) -> Result<DensityMatrix, EngineError> {
    if rho0.basis() != Basis::Reduced4 {
        return Err(EngineError::Basis(rho0.basis()));
    }
    cfg.validate()?;
    p.validate()?;
    if (traj.dt - cfg.dt).abs() > 1e-12 * cfg.dt {
        return Err(EngineError::Config(format!(
            "trajectory dt {} differs from configured dt {}",
            traj.dt, cfg.dt
        )));
    }
    let frame = Frame::new(p, cfg)?;
    let compiled = compile(prog)?;
    let mut cache = RunCache::new(traj);
    let out = propagate_compiled(&to_m4(rho0.matrix()), &compiled, &mut cache, &frame)?;
    Ok(DensityMatrix::new(from_m4(&out), Basis::Reduced4)?)
}

/// Program family indexed by the per-half delay `tau`.
#[derive(Debug, Clone, PartialEq)]
pub enum Protocol {
    HahnEcho { target: Target, shared_field: bool },
    Deer { shared_field: bool },
    ZqDecay { tau_zq: f64, echo: bool, theta: f64 },
    /// Every noisy delay of `program` is set to `tau`; quiet delays are kept.
    Custom { program: PulseProgram },
}

impl Protocol {
    pub fn program(&self, tau: f64) -> PulseProgram {
        match self {
            Protocol::HahnEcho {
                target,
                shared_field,
            } => protocol::hahn_echo(tau, *target, *shared_field),
            Protocol::Deer { shared_field } => protocol::deer(tau, *shared_field),
            Protocol::ZqDecay {
                tau_zq,
                echo,
                theta,
            } => protocol::zq_experiment(*tau_zq, tau, *echo, *theta),
            Protocol::Custom { program } => {
                let mut p = program.clone();
                for e in &mut p.elements {
                    if let PulseElement::Delay {
                        duration,
                        noisy: true,
                    } = e
                    {
                        *duration = tau;
                    }
                }
                p
            }
        }
    }

    /// Total time spent in noisy free evolution for a given `tau`.
    pub fn evolution_time(&self, tau: f64) -> f64 {
        match self {
            Protocol::HahnEcho { .. } | Protocol::Deer { .. } => 2.0 * tau,
            Protocol::ZqDecay { echo, .. } => {
                if *echo {
                    2.0 * tau
                } else {
                    tau
                }
            }
            Protocol::Custom { program } => {
                let n = program
                    .elements
                    .iter()
                    .filter(|e| matches!(e, PulseElement::Delay { noisy: true, .. }))
                    .count();
                n as f64 * tau
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Protocol::HahnEcho { .. } => "hahn_echo",
            Protocol::Deer { .. } => "deer",
            Protocol::ZqDecay { .. } => "zq_decay",
            Protocol::Custom { .. } => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitialState {
    /// `|0><0|_S (x) 1/2`.
    #[default]
    Optical,
    Custom(DensityMatrix),
}

impl InitialState {
    pub fn density(&self) -> DensityMatrix {
        match self {
            InitialState::Optical => {
                let mut m = ComplexMatrix::zeros(4, 4);
                m[(0, 0)] = Complex64::new(0.5, 0.0);
                m[(2, 2)] = Complex64::new(0.5, 0.0);
                DensityMatrix::from_raw(m, Basis::Reduced4)
            }
            InitialState::Custom(rho) => rho.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub label: String,
    pub params: DyadParams,
    pub noise: FluctuatorConfig,
    pub electric: Option<ElectricNoiseConfig>,
    pub sim: SimConfig,
    pub protocol: Protocol,
    /// Per-half delays; one trace point each.
    pub taus: Vec<f64>,
    pub initial: InitialState,
}

impl Experiment {
    pub fn new(params: DyadParams, protocol: Protocol, taus: Vec<f64>) -> Self {
        Experiment {
            label: protocol.label().to_string(),
            params,
            noise: FluctuatorConfig::default(),
            electric: None,
            sim: SimConfig::default(),
            protocol,
            taus,
            initial: InitialState::Optical,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        self.sim.validate()?;
        self.params.validate()?;
        self.noise.validate()?;
        if let Some(e) = &self.electric {
            e.validate()?;
        }
        if self.taus.is_empty() {
            return Err(EngineError::Config("no delay values".into()));
        }
        if let Some(bad) = self.taus.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
            return Err(EngineError::Config(format!("invalid delay {bad}")));
        }
        Ok(())
    }

    pub fn metadata(&self) -> Vec<(String, String)> {
        let p = &self.params;
        let mut m: Vec<(String, String)> = vec![
            ("label".into(), self.label.clone()),
            ("protocol".into(), self.protocol.label().into()),
            ("master_seed".into(), self.sim.master_seed.to_string()),
            ("n_trajectories".into(), self.sim.n_trajectories.to_string()),
            ("dt_s".into(), self.sim.dt.to_string()),
            ("near_bm".into(), self.sim.near_bm.to_string()),
            ("delta_b_t".into(), self.sim.delta_b.to_string()),
            ("delta_temperature_k".into(), self.sim.delta_temperature.to_string()),
            ("delta_rad_s".into(), p.delta.to_string()),
            ("b_field_t".into(), p.b_field.to_string()),
            ("gamma_e_rad_s_t".into(), p.gamma_e.to_string()),
            ("j_par_hz".into(), p.j_par.to_string()),
            ("j_perp_hz".into(), p.j_perp.to_string()),
            ("d_par".into(), p.d_par.to_string()),
            ("d_perp".into(), p.d_perp.to_string()),
            ("ddelta_dt".into(), p.ddelta_dt.to_string()),
            ("beta_rms_t".into(), self.noise.beta_rms.to_string()),
            ("xi".into(), self.noise.xi.to_string()),
            ("switch_rate_hz".into(), self.noise.switch_rate.to_string()),
        ];
        if let Some(e) = &self.electric {
            m.push(("eps_rms_v_per_m".into(), e.eps_rms.to_string()));
            m.push(("eps_switch_rate_hz".into(), e.switch_rate.to_string()));
        }
        match &self.protocol {
            Protocol::HahnEcho {
                target,
                shared_field,
            } => {
                m.push(("target".into(), target.to_string()));
                m.push(("shared_field".into(), shared_field.to_string()));
            }
            Protocol::Deer { shared_field } => {
                m.push(("shared_field".into(), shared_field.to_string()));
            }
            Protocol::ZqDecay {
                tau_zq,
                echo,
                theta,
            } => {
                m.push(("tau_zq_s".into(), tau_zq.to_string()));
                m.push(("echo".into(), echo.to_string()));
                m.push(("theta_rad".into(), theta.to_string()));
            }
            Protocol::Custom { program } => {
                m.push(("program".into(), program.label.clone()));
            }
        }
        m
    }
}

/// Ensemble results: mean signal, its standard error and the averaged states.
#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub trace: TimeTrace,
    pub mean_states: Vec<DensityMatrix>,
}

fn run_trajectory(
    exp: &Experiment,
    programs: &[Compiled],
    rho0: &M4,
    frame: &Frame,
    duration: f64,
    index: usize,
) -> Result<Vec<M4>, EngineError> {
    let mut magnetic = exp.noise;
    magnetic.seed = exp.sim.master_seed;
    let stream = index as u64;
    let mut traj = noise::sample_magnetic_trajectory(&magnetic, duration, exp.sim.dt, stream)?;
    if let Some(e) = &exp.electric {
        let mut e = *e;
        e.seed = exp.sim.master_seed;
        traj = traj.with_electric(noise::sample_electric_trajectory(
            &e,
            duration,
            exp.sim.dt,
            stream,
        )?);
    }
    let mut cache = RunCache::new(&traj);
    programs
        .iter()
        .map(|prog| propagate_compiled(rho0, prog, &mut cache, frame))
        .collect()
}

/// Runs every trajectory and keeps the ensemble-averaged states.
pub fn run_ensemble(exp: &Experiment) -> Result<EnsembleResult, EngineError> {
    exp.validate()?;
    let rho0 = exp.initial.density();
    if rho0.basis() != Basis::Reduced4 {
        return Err(EngineError::Basis(rho0.basis()));
    }
    let rho0 = to_m4(rho0.matrix());
    let frame = Frame::new(&exp.params, &exp.sim)?;
    let programs = exp
        .taus
        .iter()
        .map(|&tau| compile(&exp.protocol.program(tau)))
        .collect::<Result<Vec<_>, _>>()?;
    let duration = programs.iter().fold(0.0f64, |m, p| m.max(p.duration));

    let n = exp.sim.n_trajectories;
    let per_traj: Vec<Result<Vec<M4>, EngineError>> = (0..n)
        .into_par_iter()
        .map(|i| run_trajectory(exp, &programs, &rho0, &frame, duration, i))
        .collect();

    let points = programs.len();
    let mut sums = vec![M4::zeros(); points];
    let mut signals = vec![Vec::with_capacity(n); points];
    for (index, result) in per_traj.into_iter().enumerate() {
        let states = result.map_err(|e| EngineError::Trajectory {
            index,
            source: Box::new(e),
        })?;
        for (k, rho) in states.iter().enumerate() {
            sums[k] += rho;
            signals[k].push(rho[(0, 0)].re + rho[(2, 2)].re);
        }
    }

    let mut signal_mean = Vec::with_capacity(points);
    let mut signal_sem = Vec::with_capacity(points);
    for s in &signals {
        let (mean, sem) = mean_sem(s);
        signal_mean.push(mean);
        signal_sem.push(sem);
    }
    let inv = Complex64::from(1.0 / n as f64);
    let mean_states = sums
        .iter()
        .map(|s| DensityMatrix::new(from_m4(&(s * inv)), Basis::Reduced4))
        .collect::<Result<Vec<_>, _>>()?;
    let times = exp
        .taus
        .iter()
        .map(|&t| exp.protocol.evolution_time(t))
        .collect();
    Ok(EnsembleResult {
        trace: TimeTrace {
            times,
            signal_mean,
            signal_sem,
            metadata: exp.metadata(),
        },
        mean_states,
    })
}

/// Mean of the `m_S = 0` population over trajectories at each delay.
pub fn run(exp: &Experiment) -> Result<TimeTrace, EngineError> {
    run_ensemble(exp).map(|r| r.trace)
}

/// Sequential mean and standard error of the mean.
pub fn mean_sem(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    DeltaB,
    Xi,
    EpsRms,
    Tau,
    TauTilde,
    Theta,
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepVariable::DeltaB => "delta_b",
            SweepVariable::Xi => "xi",
            SweepVariable::EpsRms => "eps_rms",
            SweepVariable::Tau => "tau",
            SweepVariable::TauTilde => "tau_tilde",
            SweepVariable::Theta => "theta",
        })
    }
}

impl FromStr for SweepVariable {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "delta_b" => SweepVariable::DeltaB,
            "xi" => SweepVariable::Xi,
            "eps_rms" => SweepVariable::EpsRms,
            "tau" => SweepVariable::Tau,
            "tau_tilde" => SweepVariable::TauTilde,
            "theta" => SweepVariable::Theta,
            other => return Err(format!("unknown sweep variable '{other}'")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: Option<f64>,
    pub trace: TimeTrace,
}

/// Applies one sweep value to a copy of `base`.
pub fn apply_sweep_value(
    variable: SweepVariable,
    value: f64,
    base: &Experiment,
) -> Result<Experiment, EngineError> {
    let mut exp = base.clone();
    match variable {
        SweepVariable::DeltaB => exp.sim.delta_b = value,
        SweepVariable::Xi => exp.noise.xi = value,
        SweepVariable::EpsRms => {
            let rate = exp.noise.switch_rate;
            exp.electric
                .get_or_insert(ElectricNoiseConfig {
                    eps_rms: 0.0,
                    switch_rate: rate,
                    seed: 0,
                })
                .eps_rms = value;
        }
        SweepVariable::Tau | SweepVariable::TauTilde => exp.taus = vec![value],
        SweepVariable::Theta => match &mut exp.protocol {
            Protocol::ZqDecay { theta, .. } => *theta = value,
            _ => {
                return Err(EngineError::Config(
                    "theta sweep requires the zq_decay protocol".into(),
                ))
            }
        },
    }
    exp.metadata_push(variable, value);
    Ok(exp)
}

impl Experiment {
    fn metadata_push(&mut self, variable: SweepVariable, value: f64) {
        self.label = format!("{}[{}={}]", self.label, variable, value);
    }
}

/// One run per value.
pub fn sweep(
    variable: SweepVariable,
    values: &[f64],
    base: &Experiment,
) -> Result<Vec<SweepPoint>, EngineError> {
    values
        .iter()
        .map(|&v| {
            let exp = apply_sweep_value(variable, v, base)?;
            Ok(SweepPoint {
                value: Some(v),
                trace: run(&exp)?,
            })
        })
        .collect()
}

/// CSV with `#` metadata header, columns `sweep_value,time_s,signal_mean,signal_sem`
/// and `#` footer lines.
pub fn write_csv<W: Write>(
    mut out: W,
    header: &[(String, String)],
    points: &[SweepPoint],
    footer: &[(String, String)],
) -> io::Result<()> {
    for (k, v) in header {
        writeln!(out, "# {k}={v}")?;
    }
    writeln!(out, "sweep_value,time_s,signal_mean,signal_sem")?;
    for point in points {
        let value = point.value.map(|v| v.to_string()).unwrap_or_default();
        let t = &point.trace;
        for i in 0..t.len() {
            writeln!(
                out,
                "{value},{},{},{}",
                t.times[i], t.signal_mean[i], t.signal_sem[i]
            )?;
        }
    }
    for (k, v) in footer {
        writeln!(out, "# {k}={v}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{expectation, ReducedOperators};

    fn params() -> DyadParams {
        DyadParams::default().with_projected(50e3, 0.0)
    }

    fn quiet_cfg() -> SimConfig {
        SimConfig {
            n_trajectories: 1,
            ..SimConfig::default()
        }
    }

    #[test]
    fn empty_program_returns_input() {
        let rho = InitialState::Optical.density();
        let traj = NoiseTrajectory::quiet(0, DEFAULT_DT);
        let out = propagate(&rho, &PulseProgram::new("empty"), &params(), &traj, &quiet_cfg()).unwrap();
        assert_eq!(out, rho);
    }

    #[test]
    fn short_trajectory_is_rejected() {
        let rho = InitialState::Optical.density();
        let traj = NoiseTrajectory::quiet(10, DEFAULT_DT);
        let prog = protocol::hahn_echo(1e-6, Target::SpinS, false);
        assert!(matches!(
            propagate(&rho, &prog, &params(), &traj, &quiet_cfg()),
            Err(EngineError::TrajectoryTooShort { .. })
        ));
    }

    #[test]
    fn coarse_dt_is_rejected() {
        let rho = InitialState::Optical.density();
        let cfg = SimConfig {
            dt: 1e-6,
            ..quiet_cfg()
        };
        let traj = NoiseTrajectory::quiet(10, 1e-6);
        let prog = protocol::hahn_echo(1e-6, Target::SpinS, false);
        let strong = DyadParams::default().with_projected(0.75e6, 0.0);
        assert!(matches!(
            propagate(&rho, &prog, &strong, &traj, &cfg),
            Err(EngineError::DtBound { .. })
        ));
    }

    #[test]
    fn pol_transfer_reaches_partner_polarization() {
        let p = params();
        let rho = InitialState::Optical.density();
        let prog = protocol::polarization_transfer(protocol::optimal_tau_zq(p.j_par));
        let traj = NoiseTrajectory::quiet(2000, DEFAULT_DT);
        let out = propagate(&rho, &prog, &p, &traj, &quiet_cfg()).unwrap();
        assert!(out.fidelity_with_pure(2) > 0.999_999);
    }

    #[test]
    fn echo_refocuses_static_detuning() {
        let p = params();
        let cfg = SimConfig {
            delta_b: 3e-6,
            ..quiet_cfg()
        };
        let rho = InitialState::Optical.density();
        let prog = protocol::hahn_echo(2.5e-6, Target::SpinS, false);
        let traj = NoiseTrajectory::quiet(500, DEFAULT_DT);
        let out = propagate(&rho, &prog, &p, &traj, &cfg).unwrap();
        let ops = ReducedOperators::new();
        assert!((expectation(&out, &ops.p0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn run_single_trajectory_matches_propagate() {
        let p = params();
        let mut exp = Experiment::new(
            p.clone(),
            Protocol::HahnEcho {
                target: Target::SpinS,
                shared_field: false,
            },
            vec![3e-6],
        );
        exp.sim.n_trajectories = 1;
        exp.sim.master_seed = 7;
        let trace = run(&exp).unwrap();
        let mut cfg = exp.noise;
        cfg.seed = 7;
        let traj = noise::sample_magnetic_trajectory(&cfg, 6e-6, DEFAULT_DT, 0).unwrap();
        let rho = propagate(
            &InitialState::Optical.density(),
            &exp.protocol.program(3e-6),
            &p,
            &traj,
            &exp.sim,
        )
        .unwrap();
        let ops = ReducedOperators::new();
        let direct = expectation(&rho, &ops.p0).unwrap();
        assert!((trace.signal_mean[0] - direct).abs() < 1e-14);
        assert_eq!(trace.signal_sem[0], 0.0);
        assert_eq!(trace.times, vec![6e-6]);
    }

    #[test]
    fn mean_sem_basic() {
        assert_eq!(mean_sem(&[1.0]), (1.0, 0.0));
        let (m, s) = mean_sem(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn csv_layout() {
        let trace = TimeTrace {
            times: vec![0.0, 1e-6],
            signal_mean: vec![1.0, 0.5],
            signal_sem: vec![0.0, 0.01],
            metadata: vec![],
        };
        let mut buf = Vec::new();
        write_csv(
            &mut buf,
            &[("seed".into(), "3".into())],
            &[SweepPoint {
                value: Some(2.0),
                trace,
            }],
            &[("t2_s".into(), "1e-5".into())],
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "# seed=3\nsweep_value,time_s,signal_mean,signal_sem\n2,0,1,0\n2,0.000001,0.5,0.01\n# t2_s=1e-5\n"
        );
    }

    #[test]
    fn sweep_variable_names_round_trip() {
        for v in [
            SweepVariable::DeltaB,
            SweepVariable::Xi,
            SweepVariable::EpsRms,
            SweepVariable::Tau,
            SweepVariable::TauTilde,
            SweepVariable::Theta,
        ] {
            assert_eq!(v.to_string().parse::<SweepVariable>().unwrap(), v);
        }
    }
}
