//! Pulse programs and the protocol presets built from them.
//!
//! Pulses are instantaneous rotations `exp(-i angle S_axis)`; delays are free
//! evolution under the simulation-frame Hamiltonian and may or may not see the
//! stochastic fields. Readout is always the `m_S = 0` population of the spin-1.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::linalg::{
    self, Basis, ComplexMatrix, DensityMatrix, LinalgError, ReducedOperators, Unitary,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("unsupported basis {0:?} for pulse construction")]
    UnsupportedBasis(Basis),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid pulse element: {0}")]
    InvalidElement(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    SpinS,
    SpinSPrime,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PulseElement {
    Rotation {
        target: Target,
        axis: Axis,
        angle: f64,
        /// Both spins driven by one field: the spin-1/2 turns by `angle / sqrt(2)`.
        shared_field: bool,
    },
    Delay {
        duration: f64,
        noisy: bool,
    },
    /// Optical reset of the spin-1 into `m_S = 0`.
    Repump,
}

impl PulseElement {
    pub fn rotation(target: Target, axis: Axis, angle: f64) -> Self {
        PulseElement::Rotation {
            target,
            axis,
            angle,
            shared_field: false,
        }
    }

    pub fn shared(axis: Axis, angle: f64) -> Self {
        PulseElement::Rotation {
            target: Target::Both,
            axis,
            angle,
            shared_field: true,
        }
    }

    pub fn delay(duration: f64, noisy: bool) -> Self {
        PulseElement::Delay { duration, noisy }
    }

    fn validate(&self) -> Result<(), ProtocolError> {
        match *self {
            PulseElement::Rotation { angle, .. } if !angle.is_finite() => Err(
                ProtocolError::InvalidElement(format!("non-finite angle {angle}")),
            ),
            PulseElement::Delay { duration, .. } if !(duration >= 0.0 && duration.is_finite()) => {
                Err(ProtocolError::InvalidElement(format!(
                    "delay duration {duration}"
                )))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseProgram {
    pub elements: Vec<PulseElement>,
    pub label: String,
}

impl PulseProgram {
    pub fn new(label: impl Into<String>) -> Self {
        PulseProgram {
            elements: Vec::new(),
            label: label.into(),
        }
    }

    pub fn push(mut self, element: PulseElement) -> Self {
        self.elements.push(element);
        self
    }

    /// Concatenates `other` after `self`, joining the labels with `+`.
    pub fn then(mut self, other: PulseProgram) -> Self {
        self.elements.extend(other.elements);
        if self.label.is_empty() {
            self.label = other.label;
        } else if !other.label.is_empty() {
            self.label = format!("{}+{}", self.label, other.label);
        }
        self
    }

    /// Sum of all delays; pulses take no time.
    pub fn total_duration(&self) -> f64 {
        self.elements
            .iter()
            .map(|e| match e {
                PulseElement::Delay { duration, .. } => *duration,
                _ => 0.0,
            })
            .sum()
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        self.elements.iter().try_for_each(PulseElement::validate)
    }
}

fn axis_ops(ops: &linalg::SpinOperators, axis: Axis) -> &ComplexMatrix {
    match axis {
        Axis::X => &ops.x,
        Axis::Y => &ops.y,
        Axis::Z => &ops.z,
    }
}

/// Generator `G` such that the pulse is `exp(-i G)`.
pub fn rotation_generator(
    ops: &ReducedOperators,
    target: Target,
    axis: Axis,
    angle: f64,
    shared_field: bool,
) -> ComplexMatrix {
    let prime_angle = if shared_field { angle / SQRT_2 } else { angle };
    let on_s = || axis_ops(&ops.s, axis).map(|v| v * angle);
    let on_sp = |a: f64| axis_ops(&ops.sp, axis).map(|v| v * a);
    match target {
        Target::SpinS => on_s(),
        Target::SpinSPrime => on_sp(prime_angle),
        Target::Both => on_s() + on_sp(prime_angle),
    }
}

pub fn rotation_unitary(
    target: Target,
    axis: Axis,
    angle: f64,
    shared_field: bool,
    basis: Basis,
) -> Result<Unitary, ProtocolError> {
    if basis != Basis::Reduced4 {
        return Err(ProtocolError::UnsupportedBasis(basis));
    }
    let ops = ReducedOperators::new();
    let g = rotation_generator(&ops, target, axis, angle, shared_field);
    Ok(linalg::evolve_unitary(&g, 1.0)?)
}

/// `rho -> |0><0|_S (x) Tr_S(rho)` in the reduced basis.
pub fn repump(rho: &DensityMatrix) -> Result<DensityMatrix, ProtocolError> {
    if rho.basis() != Basis::Reduced4 {
        return Err(ProtocolError::UnsupportedBasis(rho.basis()));
    }
    Ok(DensityMatrix::from_raw(
        repump_matrix(rho.matrix()),
        Basis::Reduced4,
    ))
}

pub(crate) fn repump_matrix(m: &ComplexMatrix) -> ComplexMatrix {
    // reduced index = 2 * (S' index) + (S~ index), S~ index 0 is m_S = 0
    let mut out = ComplexMatrix::zeros(4, 4);
    for a in 0..2 {
        for b in 0..2 {
            out[(2 * a, 2 * b)] = m[(2 * a, 2 * b)] + m[(2 * a + 1, 2 * b + 1)];
        }
    }
    out
}

/// `(pi/2)x - tau - (pi)x - tau - (pi/2)x` on `target`; time axis is `2 tau`.
pub fn hahn_echo(tau: f64, target: Target, shared_field: bool) -> PulseProgram {
    let pulse = |angle| PulseElement::Rotation {
        target,
        axis: Axis::X,
        angle,
        shared_field,
    };
    PulseProgram::new("hahn_echo")
        .push(pulse(FRAC_PI_2))
        .push(PulseElement::delay(tau, true))
        .push(pulse(PI))
        .push(PulseElement::delay(tau, true))
        .push(pulse(FRAC_PI_2))
}

/// Hahn echo on the spin-1 with a simultaneous inversion of the spin-1/2.
///
/// With a shared drive field every pulse already reaches both spins, so the
/// sequence is the shared-field Hahn echo.
pub fn deer(tau: f64, shared_field: bool) -> PulseProgram {
    if shared_field {
        let mut p = hahn_echo(tau, Target::Both, true);
        p.label = "deer".into();
        return p;
    }
    PulseProgram::new("deer")
        .push(PulseElement::rotation(Target::SpinS, Axis::X, FRAC_PI_2))
        .push(PulseElement::delay(tau, true))
        .push(PulseElement::rotation(Target::Both, Axis::X, PI))
        .push(PulseElement::delay(tau, true))
        .push(PulseElement::rotation(Target::SpinS, Axis::X, FRAC_PI_2))
}

/// Inter-pulse spacing for complete transfer, `1 / (4 J_par)`.
pub fn optimal_tau_zq(j_par: f64) -> f64 {
    1.0 / (4.0 * j_par)
}

/// Relative deviation of `tau_zq` from `1/(4 J_par)` when it exceeds 1 %.
pub fn transfer_mismatch(tau_zq: f64, j_par: f64) -> Option<f64> {
    let ideal = optimal_tau_zq(j_par);
    let rel = ((tau_zq - ideal) / ideal).abs();
    (!rel.is_finite() || rel > 0.01).then_some(rel)
}

/// Moves the spin-1 polarization onto the spin-1/2 and re-pumps the spin-1,
/// ending in `|0,-1/2><0,-1/2|` when `tau_zq = 1/(4 J_par)`.
pub fn polarization_transfer(tau_zq: f64) -> PulseProgram {
    let both = |axis, angle| PulseElement::rotation(Target::Both, axis, angle);
    PulseProgram::new("pol_transfer")
        .push(both(Axis::X, -FRAC_PI_2))
        .push(PulseElement::delay(tau_zq, false))
        .push(both(Axis::X, PI))
        .push(PulseElement::delay(tau_zq, false))
        .push(both(Axis::Y, FRAC_PI_2))
        .push(PulseElement::delay(tau_zq, false))
        .push(both(Axis::X, PI))
        .push(PulseElement::delay(tau_zq, false))
        .push(PulseElement::rotation(Target::SpinSPrime, Axis::X, -FRAC_PI_2))
        .push(PulseElement::Repump)
}

/// Polarization transfer plus a warning value when `tau_zq` is mistuned.
pub fn polarization_transfer_checked(tau_zq: f64, j_par: f64) -> (PulseProgram, Option<f64>) {
    (polarization_transfer(tau_zq), transfer_mismatch(tau_zq, j_par))
}

/// Coherence-order conversion, `(pi/2)x - tau - (pi)x - tau - (pi/2)x` on both spins.
pub fn coc(tau_zq: f64) -> PulseProgram {
    let both = |angle| PulseElement::rotation(Target::Both, Axis::X, angle);
    PulseProgram::new("coc")
        .push(both(FRAC_PI_2))
        .push(PulseElement::delay(tau_zq, false))
        .push(both(PI))
        .push(PulseElement::delay(tau_zq, false))
        .push(both(FRAC_PI_2))
}

/// `exp(-i 2 pi J_par S~y S'y 2 tau_zq)`.
pub fn coc_closed_form(j_par: f64, tau_zq: f64) -> ComplexMatrix {
    let ops = ReducedOperators::new();
    let g = (&ops.s.y * &ops.sp.y).map(|v| v * (2.0 * PI * j_par * 2.0 * tau_zq));
    linalg::evolve_unitary(&g, 1.0)
        .expect("generator is Hermitian")
        .into_matrix()
}

/// Zero-quantum free evolution: optional phase `theta` on the spin-1, then
/// `tau_tilde`, with a global `(pi)x` and a second `tau_tilde` when `echo`.
pub fn zq_block(tau_tilde: f64, echo: bool, theta: f64) -> PulseProgram {
    let mut p = PulseProgram::new("zq_block");
    if theta != 0.0 {
        p = p.push(PulseElement::rotation(Target::SpinS, Axis::Z, theta));
    }
    p = p.push(PulseElement::delay(tau_tilde, true));
    if echo {
        p = p
            .push(PulseElement::rotation(Target::Both, Axis::X, PI))
            .push(PulseElement::delay(tau_tilde, true));
    }
    p
}

/// Zero- to single-quantum conversion ahead of the `m_S = 0` readout.
///
/// Maps `S~x S'y - S~y S'x` to `(S~z - S'z)/2` and leaves `S~x S'x + S~y S'y`
/// invariant.
pub fn zq_readout(tau_zq: f64) -> PulseProgram {
    let both = |angle| PulseElement::rotation(Target::Both, Axis::X, angle);
    PulseProgram::new("zq_readout")
        .push(both(FRAC_PI_2))
        .push(PulseElement::delay(tau_zq, false))
        .push(both(PI))
        .push(PulseElement::delay(tau_zq, false))
        .push(both(-FRAC_PI_2))
}

/// Full zero-quantum experiment from optical initialization to readout.
pub fn zq_experiment(tau_zq: f64, tau_tilde: f64, echo: bool, theta: f64) -> PulseProgram {
    let mut p = polarization_transfer(tau_zq)
        .then(coc(tau_zq))
        .then(zq_block(tau_tilde, echo, theta))
        .then(zq_readout(tau_zq));
    p.label = "zq_experiment".into();
    p
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::SpinS => "s",
            Target::SpinSPrime => "s_prime",
            Target::Both => "both",
        })
    }
}

impl FromStr for Target {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "s" => Ok(Target::SpinS),
            "s_prime" => Ok(Target::SpinSPrime),
            "both" => Ok(Target::Both),
            other => Err(format!("unknown target '{other}'")),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

impl FromStr for Axis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            other => Err(format!("unknown axis '{other}'")),
        }
    }
}

/// One element per line: `kind target axis angle duration [flag]`, `-` for
/// unused columns. Comment lines start with `#`; `# label: <text>` names the program.
impl fmt::Display for PulseProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# label: {}", self.label)?;
        for e in &self.elements {
            match *e {
                PulseElement::Rotation {
                    target,
                    axis,
                    angle,
                    shared_field,
                } => {
                    write!(f, "rotation {target} {axis} {angle} 0")?;
                    if shared_field {
                        write!(f, " shared")?;
                    }
                    writeln!(f)?;
                }
                PulseElement::Delay { duration, noisy } => {
                    let flag = if noisy { "noisy" } else { "quiet" };
                    writeln!(f, "delay - - 0 {duration} {flag}")?;
                }
                PulseElement::Repump => writeln!(f, "repump - - 0 0")?,
            }
        }
        Ok(())
    }
}

impl FromStr for PulseProgram {
    type Err = ProtocolError;

    fn from_str(text: &str) -> Result<Self, ProtocolError> {
        let mut program = PulseProgram::new("");
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |reason: String| ProtocolError::Parse { line, reason };
            let trimmed = raw.trim();
            if let Some(comment) = trimmed.strip_prefix('#') {
                if let Some(label) = comment.trim().strip_prefix("label:") {
                    program.label = label.trim().to_string();
                }
                continue;
            }
            if trimmed.is_empty() {
                continue;
            }
            let cols: Vec<&str> = trimmed.split_whitespace().collect();
            if cols.len() < 5 || cols.len() > 6 {
                return Err(err(format!("expected 5 or 6 columns, found {}", cols.len())));
            }
            let num = |s: &str, what: &str| {
                s.parse::<f64>()
                    .map_err(|_| err(format!("bad {what} '{s}'")))
            };
            let flag = cols.get(5).copied();
            let element = match cols[0] {
                "rotation" => {
                    let shared_field = match flag {
                        None => false,
                        Some("shared") => true,
                        Some(other) => return Err(err(format!("unknown flag '{other}'"))),
                    };
                    PulseElement::Rotation {
                        target: cols[1].parse().map_err(err)?,
                        axis: cols[2].parse().map_err(err)?,
                        angle: num(cols[3], "angle")?,
                        shared_field,
                    }
                }
                "delay" => {
                    let noisy = match flag {
                        None | Some("noisy") => true,
                        Some("quiet") => false,
                        Some(other) => return Err(err(format!("unknown flag '{other}'"))),
                    };
                    PulseElement::Delay {
                        duration: num(cols[4], "duration")?,
                        noisy,
                    }
                }
                "repump" => PulseElement::Repump,
                other => return Err(err(format!("unknown element kind '{other}'"))),
            };
            element.validate().map_err(|e| err(e.to_string()))?;
            program.elements.push(element);
        }
        Ok(program)
    }
}
