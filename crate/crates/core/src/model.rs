//! Hamiltonians of the spin-1 / spin-1/2 dyad.
//!
//! All frequencies are angular (rad/s) internally. Dipolar amplitudes `J`,
//! `J_par`, `J_perp` are kept in cyclic units (Hz) and enter every
//! Hamiltonian as `2 pi J`.

use std::f64::consts::PI;

use thiserror::Error;

use crate::linalg::{
    self, Basis, ComplexMatrix, FullOperators, LinalgError, ReducedOperators,
};

/// Vacuum permeability, T m / A.
pub const MU_0: f64 = 1.256_637_062_12e-6;
/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;

pub const DEFAULT_DELTA: f64 = 2.0 * PI * 2.87e9;
pub const DEFAULT_GAMMA_E: f64 = 2.0 * PI * 28.025e9;
/// Longitudinal electric coupling, rad/s per V/m (0.35 Hz cm/V).
pub const DEFAULT_D_PAR: f64 = 2.0 * PI * 0.35e-2;
/// Transverse electric coupling, rad/s per V/m (17 Hz cm/V).
pub const DEFAULT_D_PERP: f64 = 2.0 * PI * 0.17;
/// Thermal shift of the crystal field near room temperature, rad/s per K.
pub const DEFAULT_DDELTA_DT: f64 = -2.0 * PI * 74.0e3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("inconsistent couplings: J_par={j_par} J_perp={j_perp} but J={j}, theta={theta} imply {exp_par}, {exp_perp}")]
    InconsistentCoupling {
        j: f64,
        theta: f64,
        j_par: f64,
        j_perp: f64,
        exp_par: f64,
        exp_perp: f64,
    },
    #[error("field range must be nonempty and ascending")]
    BadFieldRange,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Physical constants and couplings of the dyad.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadParams {
    /// Crystal field, rad/s.
    pub delta: f64,
    /// Static field along the crystal axis, T.
    pub b_field: f64,
    /// `|gamma_e|`, rad/s per T.
    pub gamma_e: f64,
    /// Bare dipolar amplitude, Hz. Only needed for the non-secular `sin 2 theta` term.
    pub j_coupling: Option<f64>,
    /// Angle between the inter-spin vector and the field, rad.
    pub theta: Option<f64>,
    /// Secular coupling `J (1 - 3 cos^2 theta)`, Hz.
    pub j_par: f64,
    /// Double-quantum coupling `-(3/4) J sin^2 theta`, Hz.
    pub j_perp: f64,
    /// rad/s per V/m.
    pub d_par: f64,
    /// rad/s per V/m.
    pub d_perp: f64,
    /// rad/s per K.
    pub ddelta_dt: f64,
    /// Inter-spin separation, m.
    pub distance: Option<f64>,
}

impl Default for DyadParams {
    fn default() -> Self {
        DyadParams {
            delta: DEFAULT_DELTA,
            b_field: 0.0,
            gamma_e: DEFAULT_GAMMA_E,
            j_coupling: None,
            theta: None,
            j_par: 0.0,
            j_perp: 0.0,
            d_par: DEFAULT_D_PAR,
            d_perp: DEFAULT_D_PERP,
            ddelta_dt: DEFAULT_DDELTA_DT,
            distance: None,
        }
    }
}

pub fn projected_couplings(j: f64, theta: f64) -> (f64, f64) {
    let cos = theta.cos();
    let sin = theta.sin();
    (j * (1.0 - 3.0 * cos * cos), -0.75 * j * sin * sin)
}

impl DyadParams {
    /// Couplings from the bare amplitude and the inter-spin angle.
    pub fn with_geometry(mut self, j: f64, theta: f64) -> Self {
        let (j_par, j_perp) = projected_couplings(j, theta);
        self.j_coupling = Some(j);
        self.theta = Some(theta);
        self.j_par = j_par;
        self.j_perp = j_perp;
        self
    }

    /// Secular and double-quantum couplings set directly; the `sin 2 theta` term is dropped.
    pub fn with_projected(mut self, j_par: f64, j_perp: f64) -> Self {
        self.j_coupling = None;
        self.theta = None;
        self.j_par = j_par;
        self.j_perp = j_perp;
        self
    }

    pub fn with_field(mut self, b: f64) -> Self {
        self.b_field = b;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ModelError::InvalidParameter {
                    name,
                    reason: format!("must be positive and finite, got {v}"),
                })
            }
        };
        positive("delta", self.delta)?;
        positive("gamma_e", self.gamma_e)?;
        for (name, v) in [
            ("b_field", self.b_field),
            ("j_par", self.j_par),
            ("j_perp", self.j_perp),
            ("d_par", self.d_par),
            ("d_perp", self.d_perp),
            ("ddelta_dt", self.ddelta_dt),
        ] {
            if !v.is_finite() {
                return Err(ModelError::InvalidParameter {
                    name,
                    reason: "not finite".into(),
                });
            }
        }
        if let Some(r) = self.distance {
            positive("distance", r)?;
        }
        if let (Some(j), Some(theta)) = (self.j_coupling, self.theta) {
            let (exp_par, exp_perp) = projected_couplings(j, theta);
            let scale = j.abs().max(f64::MIN_POSITIVE);
            if (exp_par - self.j_par).abs() > 1e-9 * scale
                || (exp_perp - self.j_perp).abs() > 1e-9 * scale
            {
                return Err(ModelError::InconsistentCoupling {
                    j,
                    theta,
                    j_par: self.j_par,
                    j_perp: self.j_perp,
                    exp_par,
                    exp_perp,
                });
            }
        }
        Ok(())
    }

    /// Amplitude of the single-quantum term `-(3/4) J sin 2 theta`, Hz; zero without geometry.
    pub fn j_single_quantum(&self) -> f64 {
        match (self.j_coupling, self.theta) {
            (Some(j), Some(theta)) => -0.75 * j * (2.0 * theta).sin(),
            _ => 0.0,
        }
    }
}

fn scaled(m: &ComplexMatrix, s: f64) -> ComplexMatrix {
    m.map(|v| v * s)
}

/// Six-level lab-frame Hamiltonian, including every dipolar term.
pub fn full_hamiltonian(p: &DyadParams) -> ComplexMatrix {
    let ops = FullOperators::new();
    let (s, sp) = (&ops.s, &ops.sp);
    let zeeman = p.gamma_e * p.b_field;
    let mut h = scaled(&(&s.z * &s.z), p.delta) + scaled(&s.z, zeeman) + scaled(&sp.z, zeeman);

    let secular = &s.z * &sp.z - scaled(&(&s.plus * &sp.minus + &s.minus * &sp.plus), 0.25);
    h += scaled(&secular, 2.0 * PI * p.j_par);

    let sq = (&s.plus + &s.minus) * &sp.z + &s.z * (&sp.plus + &sp.minus);
    h += scaled(&sq, 2.0 * PI * p.j_single_quantum());

    let dq = &s.plus * &sp.plus + &s.minus * &sp.minus;
    h += scaled(&dq, 2.0 * PI * p.j_perp);
    h
}

fn dq_operator(ops: &ReducedOperators) -> ComplexMatrix {
    &ops.s.plus * &ops.sp.plus + &ops.s.minus * &ops.sp.minus
}

/// Four-level Hamiltonian on the `{0, -1} x {+1/2, -1/2}` manifold, identity terms dropped.
pub fn reduced_hamiltonian(p: &DyadParams, include_dq: bool) -> ComplexMatrix {
    let ops = ReducedOperators::new();
    let zeeman = p.gamma_e * p.b_field;
    let jp = 2.0 * PI * p.j_par;
    let mut h = scaled(&ops.s.z, zeeman - p.delta)
        + scaled(&ops.sp.z, zeeman - PI * p.j_par)
        + scaled(&(&ops.s.z * &ops.sp.z), jp);
    if include_dq {
        h += scaled(&dq_operator(&ops), 2.0 * PI * p.j_perp * std::f64::consts::SQRT_2);
    }
    h
}

/// Generator in the frame rotating resonantly with both spins.
///
/// `delta_b` is the static detuning from resonance, `beta`/`beta_prime` the
/// instantaneous noise fields at each site.
pub fn sim_frame_hamiltonian(
    p: &DyadParams,
    delta_b: f64,
    beta: f64,
    beta_prime: f64,
    near_bm: bool,
) -> ComplexMatrix {
    let ops = ReducedOperators::new();
    let mut h = scaled(&ops.s.z, p.gamma_e * (delta_b + beta))
        + scaled(&ops.sp.z, p.gamma_e * (delta_b + beta_prime))
        + scaled(&(&ops.s.z * &ops.sp.z), 2.0 * PI * p.j_par);
    if near_bm {
        h += scaled(&dq_operator(&ops), 2.0 * PI * p.j_perp * std::f64::consts::SQRT_2);
    }
    h
}

/// Bare dipolar amplitude in Hz for a separation in meters: `2 pi J = mu0 gamma^2 hbar / (4 pi r^3)`.
pub fn coupling_from_distance(distance: f64, gamma_e: f64) -> Result<f64, ModelError> {
    if !(distance > 0.0) {
        return Err(ModelError::InvalidParameter {
            name: "distance",
            reason: format!("must be positive, got {distance}"),
        });
    }
    let omega = MU_0 * gamma_e * gamma_e * HBAR / (4.0 * PI * distance.powi(3));
    Ok(omega / (2.0 * PI))
}

pub fn distance_from_coupling(j: f64, gamma_e: f64) -> Result<f64, ModelError> {
    if !(j > 0.0) {
        return Err(ModelError::InvalidParameter {
            name: "j_coupling",
            reason: format!("must be positive, got {j}"),
        });
    }
    let r3 = MU_0 * gamma_e * gamma_e * HBAR / (4.0 * PI * 2.0 * PI * j);
    Ok(r3.cbrt())
}

/// Field of the `|0,+1/2>` / `|-1,-1/2>` anti-crossing, T.
pub fn anticrossing_field(p: &DyadParams) -> f64 {
    (p.delta + PI * p.j_par) / (2.0 * p.gamma_e)
}

/// Eigen-energies of the six-level Hamiltonian along a field sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelDiagram {
    pub b_values: Vec<f64>,
    /// `branches[k][i]`: energy of branch `k` at `b_values[i]`, rad/s.
    pub branches: Vec<Vec<f64>>,
    pub shift_applied: bool,
}

/// Energy offset removed from every level when plotting the shifted diagram.
///
/// With `+|gamma_e| B / 2` the four levels of the `{0,-1}` manifold that
/// surround the anti-crossing become flat at `B_m`.
pub fn level_shift(p: &DyadParams, b: f64) -> f64 {
    0.5 * p.gamma_e * b
}

pub fn level_diagram(
    p: &DyadParams,
    b_values: &[f64],
    apply_shift: bool,
) -> Result<LevelDiagram, ModelError> {
    if b_values.is_empty() || b_values.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(ModelError::BadFieldRange);
    }
    let n = 6;
    let mut branches: Vec<Vec<f64>> = (0..n).map(|_| Vec::with_capacity(b_values.len())).collect();
    let mut previous: Option<ComplexMatrix> = None;
    for &b in b_values {
        let h = full_hamiltonian(&p.clone().with_field(b));
        let (vals, vecs) = linalg::hermitian_eigen(&h)?;
        let order = match &previous {
            None => {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
                idx
            }
            Some(prev) => match_by_overlap(prev, &vecs),
        };
        let mut ordered = ComplexMatrix::zeros(n, n);
        for (branch, &col) in order.iter().enumerate() {
            let shift = if apply_shift { level_shift(p, b) } else { 0.0 };
            branches[branch].push(vals[col] + shift);
            ordered.set_column(branch, &vecs.column(col));
        }
        previous = Some(ordered);
    }
    Ok(LevelDiagram {
        b_values: b_values.to_vec(),
        branches,
        shift_applied: apply_shift,
    })
}

/// For each previous branch, the new eigenvector column with maximal overlap.
fn match_by_overlap(prev: &ComplexMatrix, next: &ComplexMatrix) -> Vec<usize> {
    let n = prev.ncols();
    let overlap = prev.adjoint() * next;
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            pairs.push((overlap[(i, j)].norm_sqr(), i, j));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut assigned = vec![usize::MAX; n];
    let mut used = vec![false; n];
    for (_, i, j) in pairs {
        if assigned[i] == usize::MAX && !used[j] {
            assigned[i] = j;
            used[j] = true;
        }
    }
    assigned
}

/// Gap between the two eigenstates of the reduced Hamiltonian that live on `|1>` and `|4>`.
pub fn anticrossing_gap(p: &DyadParams) -> Result<f64, ModelError> {
    let h = reduced_hamiltonian(p, true);
    let (vals, vecs) = linalg::hermitian_eigen(&h)?;
    let mut weighted: Vec<(f64, f64)> = (0..4)
        .map(|k| {
            let w = vecs[(0, k)].norm_sqr() + vecs[(3, k)].norm_sqr();
            (w, vals[k])
        })
        .collect();
    weighted.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok((weighted[0].1 - weighted[1].1).abs())
}

/// Electric-field coupling of the spin-1, `eps` in V/m.
pub fn electric_term(eps: [f64; 3], p: &DyadParams, basis: Basis) -> ComplexMatrix {
    let [ex, ey, ez] = eps;
    match basis {
        Basis::Full6 => {
            let ops = FullOperators::new();
            let s = &ops.s;
            let axial = &s.z * &s.z - scaled(&ops.identity, 2.0 / 3.0);
            let transverse = scaled(&(&s.x * &s.y + &s.y * &s.x), ex)
                + scaled(&(&s.x * &s.x - &s.y * &s.y), ey);
            scaled(&axial, p.d_par * ez) - scaled(&transverse, p.d_perp)
        }
        Basis::Reduced4 => {
            // S_{x,y} -> sqrt(2) S~_{x,y}; the transverse products then vanish identically for spin-1/2.
            let ops = ReducedOperators::new();
            let s = &ops.s;
            let transverse = scaled(&(&s.x * &s.y + &s.y * &s.x), ex)
                + scaled(&(&s.x * &s.x - &s.y * &s.y), ey);
            scaled(&s.z, -p.d_par * ez) - scaled(&transverse, 2.0 * p.d_perp)
        }
    }
}

/// Crystal-field shift `delta_omega S~z` for a temperature change in K.
pub fn thermal_term(delta_t: f64, p: &DyadParams) -> ComplexMatrix {
    let ops = ReducedOperators::new();
    scaled(&ops.s.z, thermal_frequency(delta_t, p))
}

pub fn thermal_frequency(delta_t: f64, p: &DyadParams) -> f64 {
    p.ddelta_dt * delta_t
}
