//! Random telegraph-style fluctuators for the magnetic and electric environment.
//!
//! Each channel holds a value drawn uniformly from `[-sqrt(3) sigma, sqrt(3) sigma]`
//! (stationary rms `sigma`) and re-draws it at Poisson-distributed instants with
//! rate `switch_rate`. Switch instants live on the continuous time axis; the
//! per-step value stored in a trajectory is the average of the channel over that
//! step. Refining `dt` therefore resolves the same realization more finely
//! instead of drawing a new one.
//!
//! Every channel owns a ChaCha stream keyed by `(seed, channel)` and positioned
//! by `stream_id`, so a trajectory is a pure function of its inputs.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("xi must lie in [0, 1], got {0}")]
    XiOutOfRange(f64),
    #[error("rms amplitude must be non-negative and finite, got {0}")]
    NegativeRms(f64),
    #[error("switch rate must be positive and finite, got {0}")]
    BadRate(f64),
    #[error("time step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("duration must be non-negative and finite, got {0}")]
    BadDuration(f64),
    #[error("switch probability per step {0} exceeds 0.5; the noise is under-resolved")]
    UnderResolved(f64),
    #[error("trajectory is empty")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluctuatorConfig {
    /// Stationary rms field at each site, T.
    pub beta_rms: f64,
    /// Fraction of the noise power that is site-local.
    pub xi: f64,
    /// Re-draw rate, Hz.
    pub switch_rate: f64,
    pub seed: u64,
}

impl Default for FluctuatorConfig {
    fn default() -> Self {
        FluctuatorConfig {
            beta_rms: 1e-6,
            xi: 0.0,
            switch_rate: DEFAULT_SWITCH_RATE,
            seed: 0,
        }
    }
}

pub const DEFAULT_SWITCH_RATE: f64 = 100e3;
pub const DEFAULT_DT: f64 = 10e-9;

impl FluctuatorConfig {
    pub fn validate(&self) -> Result<(), NoiseError> {
        if !(self.beta_rms >= 0.0 && self.beta_rms.is_finite()) {
            return Err(NoiseError::NegativeRms(self.beta_rms));
        }
        if !(0.0..=1.0).contains(&self.xi) {
            return Err(NoiseError::XiOutOfRange(self.xi));
        }
        check_rate(self.switch_rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElectricNoiseConfig {
    /// Per-axis rms field, V/m.
    pub eps_rms: f64,
    pub switch_rate: f64,
    pub seed: u64,
}

impl ElectricNoiseConfig {
    pub fn validate(&self) -> Result<(), NoiseError> {
        if !(self.eps_rms >= 0.0 && self.eps_rms.is_finite()) {
            return Err(NoiseError::NegativeRms(self.eps_rms));
        }
        check_rate(self.switch_rate)
    }
}

fn check_rate(rate: f64) -> Result<(), NoiseError> {
    if rate > 0.0 && rate.is_finite() {
        Ok(())
    } else {
        Err(NoiseError::BadRate(rate))
    }
}

/// Splits the site rms into `(global, local)` parts so that independent local
/// channels reproduce `xi`.
pub fn partition(xi: f64, beta_rms: f64) -> Result<(f64, f64), NoiseError> {
    if !(0.0..=1.0).contains(&xi) {
        return Err(NoiseError::XiOutOfRange(xi));
    }
    if !(beta_rms >= 0.0 && beta_rms.is_finite()) {
        return Err(NoiseError::NegativeRms(beta_rms));
    }
    Ok(((1.0 - xi).sqrt() * beta_rms, xi.sqrt() * beta_rms))
}

/// Channel tags mixed into the seed.
#[derive(Debug, Clone, Copy)]
enum Channel {
    Global = 0,
    LocalS = 1,
    LocalSPrime = 2,
    ElectricX = 3,
    ElectricY = 4,
    ElectricZ = 5,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn channel_rng(seed: u64, channel: Channel, stream_id: u64) -> ChaCha8Rng {
    let key = splitmix64(seed ^ splitmix64(channel as u64 + 1));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(stream_id);
    rng
}

/// Step-averaged values of one fluctuator channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPath {
    pub values: Vec<f64>,
    pub switches: usize,
}

fn step_count(duration: f64, dt: f64) -> Result<usize, NoiseError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(NoiseError::BadStep(dt));
    }
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(NoiseError::BadDuration(duration));
    }
    Ok((duration / dt - 1e-9).ceil().max(0.0) as usize)
}

fn check_resolution(rate: f64, dt: f64) -> Result<(), NoiseError> {
    let p = rate * dt;
    if p > 0.5 {
        return Err(NoiseError::UnderResolved(p));
    }
    Ok(())
}

fn sample_channel(
    rng: &mut ChaCha8Rng,
    rms: f64,
    rate: f64,
    steps: usize,
    dt: f64,
) -> ChannelPath {
    if rms == 0.0 {
        return ChannelPath {
            values: vec![0.0; steps],
            switches: 0,
        };
    }
    let half_width = 3.0_f64.sqrt() * rms;
    let waiting = Exp::new(rate).expect("rate validated");
    let mut value = rng.random_range(-half_width..half_width);
    let mut next = waiting.sample(rng);
    let mut switches = 0;
    let mut values = Vec::with_capacity(steps);
    for k in 0..steps {
        let start = k as f64 * dt;
        let end = (k + 1) as f64 * dt;
        if next >= end {
            values.push(value);
            continue;
        }
        let mut acc = 0.0;
        let mut t = start;
        while next < end {
            acc += value * (next - t);
            t = next;
            value = rng.random_range(-half_width..half_width);
            switches += 1;
            next += waiting.sample(rng);
        }
        acc += value * (end - t);
        values.push(acc / dt);
    }
    ChannelPath { values, switches }
}

/// Piecewise-constant fields over a protocol, one value per step of `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTrajectory {
    pub dt: f64,
    /// Field at the spin-1 site, T.
    pub beta_s: Vec<f64>,
    /// Field at the spin-1/2 site, T.
    pub beta_s_prime: Vec<f64>,
    /// Electric field at the spin-1, V/m.
    pub eps: Option<Vec<[f64; 3]>>,
    /// Re-draw events per magnetic channel: global, local S, local S'.
    pub switch_counts: [usize; 3],
}

impl NoiseTrajectory {
    /// Noise-free trajectory of `steps` steps.
    pub fn quiet(steps: usize, dt: f64) -> Self {
        NoiseTrajectory {
            dt,
            beta_s: vec![0.0; steps],
            beta_s_prime: vec![0.0; steps],
            eps: None,
            switch_counts: [0; 3],
        }
    }

    pub fn len(&self) -> usize {
        self.beta_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta_s.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 * self.dt
    }

    pub fn with_electric(mut self, electric: ElectricTrajectory) -> Self {
        let mut eps = electric.eps;
        eps.resize(self.len(), [0.0; 3]);
        self.eps = Some(eps);
        self
    }

    pub fn eps_at(&self, step: usize) -> [f64; 3] {
        self.eps.as_ref().map_or([0.0; 3], |e| e[step])
    }

    /// CSV with columns `step,beta_s,beta_s_prime,eps_x,eps_y,eps_z`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "step,beta_s,beta_s_prime,eps_x,eps_y,eps_z")?;
        for k in 0..self.len() {
            let [ex, ey, ez] = self.eps_at(k);
            writeln!(
                out,
                "{k},{},{},{ex},{ey},{ez}",
                self.beta_s[k], self.beta_s_prime[k]
            )?;
        }
        Ok(())
    }
}

pub fn sample_magnetic_trajectory(
    cfg: &FluctuatorConfig,
    duration: f64,
    dt: f64,
    stream_id: u64,
) -> Result<NoiseTrajectory, NoiseError> {
    cfg.validate()?;
    let steps = step_count(duration, dt)?;
    check_resolution(cfg.switch_rate, dt)?;
    let (global_rms, local_rms) = partition(cfg.xi, cfg.beta_rms)?;
    let path = |channel, rms| {
        let mut rng = channel_rng(cfg.seed, channel, stream_id);
        sample_channel(&mut rng, rms, cfg.switch_rate, steps, dt)
    };
    let global = path(Channel::Global, global_rms);
    let local_s = path(Channel::LocalS, local_rms);
    let local_sp = path(Channel::LocalSPrime, local_rms);
    let beta_s = global
        .values
        .iter()
        .zip(&local_s.values)
        .map(|(g, l)| g + l)
        .collect();
    let beta_s_prime = global
        .values
        .iter()
        .zip(&local_sp.values)
        .map(|(g, l)| g + l)
        .collect();
    Ok(NoiseTrajectory {
        dt,
        beta_s,
        beta_s_prime,
        eps: None,
        switch_counts: [global.switches, local_s.switches, local_sp.switches],
    })
}

/// Per-step electric field vectors from three independent axes.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectricTrajectory {
    pub dt: f64,
    pub eps: Vec<[f64; 3]>,
    pub switch_counts: [usize; 3],
}

pub fn sample_electric_trajectory(
    cfg: &ElectricNoiseConfig,
    duration: f64,
    dt: f64,
    stream_id: u64,
) -> Result<ElectricTrajectory, NoiseError> {
    cfg.validate()?;
    let steps = step_count(duration, dt)?;
    check_resolution(cfg.switch_rate, dt)?;
    let axes = [Channel::ElectricX, Channel::ElectricY, Channel::ElectricZ].map(|channel| {
        let mut rng = channel_rng(cfg.seed, channel, stream_id);
        sample_channel(&mut rng, cfg.eps_rms, cfg.switch_rate, steps, dt)
    });
    let eps = (0..steps)
        .map(|k| [axes[0].values[k], axes[1].values[k], axes[2].values[k]])
        .collect();
    Ok(ElectricTrajectory {
        dt,
        eps,
        switch_counts: [axes[0].switches, axes[1].switches, axes[2].switches],
    })
}

/// `<(b - b')^2> / (<b^2> + <b'^2>)` with time averages over the trajectory.
pub fn empirical_xi(traj: &NoiseTrajectory) -> Result<f64, NoiseError> {
    if traj.is_empty() {
        return Err(NoiseError::Empty);
    }
    let (mut diff, mut total) = (0.0, 0.0);
    for (b, bp) in traj.beta_s.iter().zip(&traj.beta_s_prime) {
        diff += (b - bp) * (b - bp);
        total += b * b + bp * bp;
    }
    if total == 0.0 {
        return Ok(0.0);
    }
    Ok(diff / total)
}
