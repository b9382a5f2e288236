//! Coherence times, enhancement ratios and frequency shifts from time traces.

use argmin::core::{CostFunction, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;
use thiserror::Error;

use crate::engine::{EnsembleResult, TimeTrace};
use crate::linalg::DensityMatrix;
use crate::model::DyadParams;

pub const STRETCH_MIN: f64 = 0.5;
pub const STRETCH_MAX: f64 = 3.0;
const MAX_ITERS: u64 = 500;
const SIMPLEX_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("no decay resolvable: signal drop {drop:.3e} below threshold {threshold:.3e}")]
    NoDecayResolvable { drop: f64, threshold: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("|delta_omega| * window = {0:.3} is outside the small-angle regime")]
    OutsideSmallAngle(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// 1/e time of the envelope, s.
    pub t2: f64,
    pub stretch_n: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub residual_rms: f64,
    pub converged: bool,
}

impl FitResult {
    pub fn metadata(&self) -> Vec<(String, String)> {
        vec![
            ("fit_t2_s".into(), self.t2.to_string()),
            ("fit_stretch_n".into(), self.stretch_n.to_string()),
            ("fit_amplitude".into(), self.amplitude.to_string()),
            ("fit_offset".into(), self.offset.to_string()),
            ("fit_residual_rms".into(), self.residual_rms.to_string()),
            ("fit_converged".into(), self.converged.to_string()),
        ]
    }
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    Some(if xs.len().is_multiple_of(2) {
        0.5 * (xs[m - 1] + xs[m])
    } else {
        xs[m]
    })
}

/// `1/sem^2` weights with every SEM floored at the median positive SEM.
///
/// Early points of a trajectory average can have round-off sized SEMs; the
/// floor keeps them from dominating. No SEMs at all give unit weights.
fn weights(sem: &[f64]) -> Vec<f64> {
    match median(sem.iter().copied().filter(|s| *s > 0.0).collect()) {
        None => vec![1.0; sem.len()],
        Some(floor) => sem
            .iter()
            .map(|&s| {
                let s = s.max(floor);
                1.0 / (s * s)
            })
            .collect(),
    }
}

/// Weighted linear least squares for `y ~ c + a g`; returns `(c, a, wssr)`.
fn linear_part(g: &[f64], y: &[f64], w: &[f64]) -> (f64, f64, f64) {
    let sw: f64 = w.iter().sum();
    let gbar = g.iter().zip(w).map(|(gi, wi)| gi * wi).sum::<f64>() / sw;
    let ybar = y.iter().zip(w).map(|(yi, wi)| yi * wi).sum::<f64>() / sw;
    let (mut sgg, mut sgy) = (0.0, 0.0);
    for ((&gi, &yi), &wi) in g.iter().zip(y).zip(w) {
        sgg += wi * (gi - gbar) * (gi - gbar);
        sgy += wi * (gi - gbar) * (yi - ybar);
    }
    let a = if sgg > 0.0 { sgy / sgg } else { 0.0 };
    let c = ybar - a * gbar;
    let wssr = g
        .iter()
        .zip(y)
        .zip(w)
        .map(|((&gi, &yi), &wi)| wi * (yi - c - a * gi).powi(2))
        .sum();
    (c, a, wssr)
}

fn envelope(u: &[f64], scale: f64, n: f64) -> Vec<f64> {
    u.iter().map(|&t| (-(t / scale).powf(n)).exp()).collect()
}

struct Profile<'a> {
    /// Times divided by the initial T2 estimate.
    u: &'a [f64],
    y: &'a [f64],
    w: &'a [f64],
    /// Weighted total sum of squares about the weighted mean.
    wtss: f64,
}

impl Profile<'_> {
    fn clamp(n: f64) -> f64 {
        n.clamp(STRETCH_MIN, STRETCH_MAX)
    }
}

impl CostFunction for Profile<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Vec<f64>) -> Result<f64, argmin::core::Error> {
        let n = Self::clamp(x[1]);
        let penalty = (x[1] - n).powi(2) * 1e6;
        let g = envelope(self.u, x[0].exp(), n);
        let (_, _, wssr) = linear_part(&g, self.y, self.w);
        // relative rms residual, so the simplex tolerance is scale-free
        Ok((wssr / self.wtss).sqrt() + penalty)
    }
}

/// First time the normalized signal falls below `1/e`, by linear interpolation.
fn initial_t2(t: &[f64], y: &[f64], offset: f64, amplitude: f64) -> f64 {
    let level = (-1.0f64).exp();
    let norm: Vec<f64> = y.iter().map(|v| (v - offset) / amplitude).collect();
    for k in 1..t.len() {
        if norm[k] < level {
            let (a, b) = (norm[k - 1], norm[k]);
            let frac = if a != b { (a - level) / (a - b) } else { 0.0 };
            let est = t[k - 1] + frac.clamp(0.0, 1.0) * (t[k] - t[k - 1]);
            if est > 0.0 {
                return est;
            }
            return t[k];
        }
    }
    *t.last().expect("non-empty")
}

/// Least-squares fit of `offset + amplitude exp[-(t/T2)^n]`.
pub fn fit_stretched_exponential(trace: &TimeTrace) -> Result<FitResult, AnalysisError> {
    let (t, y, sem) = (&trace.times, &trace.signal_mean, &trace.signal_sem);
    if t.len() < 8 {
        return Err(AnalysisError::TooFewPoints {
            needed: 8,
            got: t.len(),
        });
    }
    if y.len() != t.len() || sem.len() != t.len() {
        return Err(AnalysisError::Invalid("trace columns differ in length".into()));
    }
    if t.iter().chain(y).chain(sem).any(|v| !v.is_finite()) {
        return Err(AnalysisError::Invalid("non-finite trace value".into()));
    }
    if t.windows(2).any(|w| !(w[1] > w[0])) || t[0] < 0.0 {
        return Err(AnalysisError::Invalid("times must be non-negative and increasing".into()));
    }

    let median_sem = median(sem.to_vec()).unwrap_or(0.0);
    let threshold = (3.0 * median_sem).max(1e-9);
    let drop = (y[0] - y[y.len() - 1]).abs();
    if drop < threshold {
        return Err(AnalysisError::NoDecayResolvable { drop, threshold });
    }

    let offset0 = y[y.len() - 1];
    let amplitude0 = y[0] - offset0;
    let t0 = initial_t2(t, y, offset0, amplitude0);
    let u: Vec<f64> = t.iter().map(|v| v / t0).collect();
    let w = weights(sem);
    let sw: f64 = w.iter().sum();
    let ybar = y.iter().zip(&w).map(|(yi, wi)| yi * wi).sum::<f64>() / sw;
    let wtss = y.iter().zip(&w).map(|(yi, wi)| wi * (yi - ybar).powi(2)).sum::<f64>();
    let problem = Profile {
        u: &u,
        y,
        w: &w,
        wtss,
    };

    let simplex = vec![vec![0.0, 1.0], vec![0.3, 1.0], vec![0.0, 1.4]];
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(SIMPLEX_TOL)
        .map_err(|e| AnalysisError::Invalid(e.to_string()))?;
    let result = Executor::new(problem, solver)
        .configure(|s| s.max_iters(MAX_ITERS))
        .run()
        .map_err(|e| AnalysisError::Invalid(e.to_string()))?;
    let state = result.state();
    let best = state
        .get_best_param()
        .cloned()
        .ok_or_else(|| AnalysisError::Invalid("fit produced no parameters".into()))?;
    let converged = matches!(
        state.get_termination_status(),
        TerminationStatus::Terminated(TerminationReason::SolverConverged)
    );

    let scale = best[0].exp();
    let n = Profile::clamp(best[1]);
    let g = envelope(&u, scale, n);
    let (offset, amplitude, _) = linear_part(&g, y, &w);
    let residual_rms = (g
        .iter()
        .zip(y)
        .map(|(gi, yi)| (yi - offset - amplitude * gi).powi(2))
        .sum::<f64>()
        / y.len() as f64)
        .sqrt();
    Ok(FitResult {
        t2: scale * t0,
        stretch_n: n,
        amplitude,
        offset,
        residual_rms,
        converged,
    })
}

/// Coherence amplitude `sqrt(4 Tr(rho^2) - 1)` of ensemble-averaged states.
///
/// Starting from `|0><0| (x) 1/2`, a Hahn echo on the spin-1 alone gives
/// exactly the echo contrast `2 P0 - 1`. Unlike `P0` it ignores coherent
/// beating and phase drifts common to all trajectories.
pub fn coherence_amplitude(states: &[DensityMatrix]) -> Vec<f64> {
    states
        .iter()
        .map(|rho| (4.0 * rho.purity() - 1.0).max(0.0).sqrt())
        .collect()
}

/// Trace of [`coherence_amplitude`] over the ensemble states of a run.
pub fn coherence_trace(result: &EnsembleResult) -> TimeTrace {
    let trace = &result.trace;
    TimeTrace {
        times: trace.times.clone(),
        signal_mean: coherence_amplitude(&result.mean_states),
        signal_sem: vec![0.0; trace.len()],
        metadata: trace.metadata.clone(),
    }
}

/// `eta = T2,m / T2,SQ`.
pub fn enhancement_ratio(t2_m: f64, t2_sq: f64) -> Result<f64, AnalysisError> {
    if !(t2_m > 0.0 && t2_sq > 0.0) {
        return Err(AnalysisError::Invalid(format!(
            "coherence times must be positive, got {t2_m} and {t2_sq}"
        )));
    }
    Ok(t2_m / t2_sq)
}

/// Frequency shift from the early-time slope of a non-echoed zero-quantum trace.
///
/// The trace signal is the `m_S = 0` population `P0 = 1/2 - sin(dw t)/2`, so
/// `dw = -2 dP0/dt`, i.e. `-4` times the slope of `(P0 - 1/2)/2`.
pub fn slope_frequency(trace: &TimeTrace, window: f64) -> Result<f64, AnalysisError> {
    let pts: Vec<(f64, f64)> = trace
        .times
        .iter()
        .zip(&trace.signal_mean)
        .filter(|(t, _)| **t <= window * (1.0 + 1e-12))
        .map(|(t, y)| (*t, *y))
        .collect();
    if pts.len() < 4 {
        return Err(AnalysisError::TooFewPoints {
            needed: 4,
            got: pts.len(),
        });
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(AnalysisError::Invalid("window holds a single time".into()));
    }
    let sigma_slope = 0.5 * sxy / sxx;
    let dw = -4.0 * sigma_slope;
    let angle = (dw * window).abs();
    if angle > 0.3 {
        return Err(AnalysisError::OutsideSmallAngle(angle));
    }
    Ok(dw)
}

/// `dT = dw / (dDelta/dT)`.
pub fn temperature_shift(delta_omega: f64, p: &DyadParams) -> Result<f64, AnalysisError> {
    if p.ddelta_dt == 0.0 || !p.ddelta_dt.is_finite() {
        return Err(AnalysisError::Invalid("ddelta_dt must be non-zero".into()));
    }
    Ok(delta_omega / p.ddelta_dt)
}
