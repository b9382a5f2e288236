//! Dense complex linear algebra for the small Hilbert spaces of the dyad.
//!
//! Two bases are used throughout the crate:
//!
//! * `Full6`: `|m_S, m_S'>` with `m_S` in `{+1, 0, -1}` and `m_S'` in
//!   `{+1/2, -1/2}`, both descending, spin-1 factor first.
//! * `Reduced4`: the `{m_S = 0, m_S = -1}` manifold written with a fictitious
//!   spin-1/2 for the spin-1, ordered
//!   `|1> = |0,+1/2>`, `|2> = |-1,+1/2>`, `|3> = |0,-1/2>`, `|4> = |-1,-1/2>`.
//!   This is the Kronecker order `S' (x) S~`, see [`reduced_pair`].

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

pub type ComplexMatrix = DMatrix<Complex64>;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Hermiticity tolerance for operators built by this crate.
pub const HERMITIAN_TOL: f64 = 1e-12;
pub const DENSITY_HERMITIAN_TOL: f64 = 1e-10;
pub const DENSITY_TRACE_TOL: f64 = 1e-10;
pub const DENSITY_PSD_TOL: f64 = 1e-9;
pub const UNITARY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not Hermitian: max |H - H^dagger| = {defect:e}")]
    NotHermitian { defect: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("negative evolution time {0}")]
    NegativeTime(f64),
    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),
    #[error("matrix is not unitary: max |U^dagger U - I| = {0:e}")]
    NotUnitary(f64),
    #[error("expectation value has imaginary residue {0:e}")]
    ComplexExpectation(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    Full6,
    Reduced4,
}

impl Basis {
    pub fn dim(self) -> usize {
        match self {
            Basis::Full6 => 6,
            Basis::Reduced4 => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpinKind {
    /// Spin-1 in the `{+1, 0, -1}` basis.
    SpinOne,
    /// Spin-1/2 in the `{+1/2, -1/2}` basis.
    SpinHalf,
    /// Two-level reduction of the spin-1 on `{m_S = 0, m_S = -1}`; `m_S = 0`
    /// is the "up" state.
    FictitiousHalf,
}

/// Cartesian and ladder operators of a single spin.
#[derive(Debug, Clone)]
pub struct SpinOperators {
    pub x: ComplexMatrix,
    pub y: ComplexMatrix,
    pub z: ComplexMatrix,
    pub plus: ComplexMatrix,
    pub minus: ComplexMatrix,
}

impl SpinOperators {
    pub fn dim(&self) -> usize {
        self.z.nrows()
    }

    pub fn identity(&self) -> ComplexMatrix {
        ComplexMatrix::identity(self.dim(), self.dim())
    }
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn spin_operators(kind: SpinKind) -> SpinOperators {
    let (z, plus) = match kind {
        SpinKind::SpinOne => {
            let s2 = std::f64::consts::SQRT_2;
            let z = ComplexMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                c(1.0),
                c(0.0),
                c(-1.0),
            ]));
            let mut plus = ComplexMatrix::zeros(3, 3);
            plus[(0, 1)] = c(s2);
            plus[(1, 2)] = c(s2);
            (z, plus)
        }
        SpinKind::SpinHalf | SpinKind::FictitiousHalf => {
            let z = ComplexMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                c(0.5),
                c(-0.5),
            ]));
            let mut plus = ComplexMatrix::zeros(2, 2);
            plus[(0, 1)] = c(1.0);
            (z, plus)
        }
    };
    let minus = plus.adjoint();
    let x = (&plus + &minus).map(|v| v * 0.5);
    let y = (&plus - &minus).map(|v| v * Complex64::new(0.0, -0.5));
    SpinOperators {
        x,
        y,
        z,
        plus,
        minus,
    }
}

/// Kronecker product `a (x) b`.
pub fn tensor(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// Embeds a product `A_S~ (x) B_S'` into the reduced basis ordering.
pub fn reduced_pair(s_tilde: &ComplexMatrix, s_prime: &ComplexMatrix) -> ComplexMatrix {
    tensor(s_prime, s_tilde)
}

/// Embeds a product `A_S (x) B_S'` into the full six-level basis.
pub fn full_pair(s: &ComplexMatrix, s_prime: &ComplexMatrix) -> ComplexMatrix {
    tensor(s, s_prime)
}

/// Largest entrywise deviation `max |M - M^dagger|`.
pub fn hermitian_defect(m: &ComplexMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.norm()))
}

fn check_hermitian(m: &ComplexMatrix, tol: f64) -> Result<(), LinalgError> {
    let defect = hermitian_defect(m);
    if defect > tol * max_abs(m).max(1.0) {
        return Err(LinalgError::NotHermitian { defect });
    }
    Ok(())
}

pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a * b - b * a
}

pub fn trace(m: &ComplexMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// Eigenvalues and eigenvectors (columns) of a Hermitian matrix.
pub fn hermitian_eigen(h: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix), LinalgError> {
    check_hermitian(h, HERMITIAN_TOL)?;
    let eig = SymmetricEigen::new(h.clone());
    Ok((eig.eigenvalues.iter().copied().collect(), eig.eigenvectors))
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(h: &ComplexMatrix) -> Result<Vec<f64>, LinalgError> {
    let (mut vals, _) = hermitian_eigen(h)?;
    vals.sort_by(|a, b| a.total_cmp(b));
    Ok(vals)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Unitary(ComplexMatrix);

impl Unitary {
    pub fn new(m: ComplexMatrix) -> Result<Self, LinalgError> {
        let defect = unitarity_defect(&m);
        if defect > UNITARY_TOL {
            return Err(LinalgError::NotUnitary(defect));
        }
        Ok(Unitary(m))
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn adjoint(&self) -> Unitary {
        Unitary(self.0.adjoint())
    }

    /// `self * other`: `other` acts first.
    pub fn compose(&self, other: &Unitary) -> Unitary {
        Unitary(&self.0 * &other.0)
    }

    pub fn conjugate(&self, m: &ComplexMatrix) -> ComplexMatrix {
        &self.0 * m * self.0.adjoint()
    }
}

/// `max |U^dagger U - I|`, entrywise.
pub fn unitarity_defect(u: &ComplexMatrix) -> f64 {
    let n = u.nrows();
    max_abs(&(u.adjoint() * u - ComplexMatrix::identity(n, n)))
}

/// Distance between two operators modulo a global phase, in the max-norm.
pub fn phase_insensitive_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    let overlap = trace(&(b.adjoint() * a));
    let phase = if overlap.norm() > 0.0 {
        overlap / overlap.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    max_abs(&(a - b.map(|v| v * phase)))
}

/// `U = exp(-i H t)` through the Hermitian eigendecomposition of `H`.
pub fn evolve_unitary(h: &ComplexMatrix, t: f64) -> Result<Unitary, LinalgError> {
    if t < 0.0 {
        return Err(LinalgError::NegativeTime(t));
    }
    let (vals, vecs) = hermitian_eigen(h)?;
    let phases = nalgebra::DVector::from_iterator(
        vals.len(),
        vals.iter().map(|e| Complex64::from_polar(1.0, -e * t)),
    );
    let u = &vecs * ComplexMatrix::from_diagonal(&phases) * vecs.adjoint();
    Ok(Unitary(u))
}

/// Hermitian, unit-trace, positive semidefinite state.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
    basis: Basis,
}

impl DensityMatrix {
    pub fn new(matrix: ComplexMatrix, basis: Basis) -> Result<Self, LinalgError> {
        if matrix.nrows() != basis.dim() || matrix.ncols() != basis.dim() {
            return Err(LinalgError::DimensionMismatch {
                left: matrix.nrows(),
                right: basis.dim(),
            });
        }
        let rho = DensityMatrix { matrix, basis };
        rho.validate()?;
        Ok(rho)
    }

    pub(crate) fn from_raw(matrix: ComplexMatrix, basis: Basis) -> Self {
        DensityMatrix { matrix, basis }
    }

    /// Checks Hermiticity, trace and positivity within the crate tolerances.
    pub fn validate(&self) -> Result<(), LinalgError> {
        let defect = hermitian_defect(&self.matrix);
        if defect > DENSITY_HERMITIAN_TOL {
            return Err(LinalgError::InvalidDensity(format!(
                "hermiticity defect {defect:e}"
            )));
        }
        let tr = trace(&self.matrix);
        if (tr.re - 1.0).abs() > DENSITY_TRACE_TOL || tr.im.abs() > DENSITY_TRACE_TOL {
            return Err(LinalgError::InvalidDensity(format!("trace {tr}")));
        }
        let sym = (&self.matrix + self.matrix.adjoint()).map(|v| v * 0.5);
        let min = SymmetricEigen::new(sym)
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |acc, &v| acc.min(v));
        if min < -DENSITY_PSD_TOL {
            return Err(LinalgError::InvalidDensity(format!(
                "negative eigenvalue {min:e}"
            )));
        }
        Ok(())
    }

    /// Projector onto a basis state.
    pub fn basis_state(index: usize, basis: Basis) -> Self {
        let n = basis.dim();
        let mut m = ComplexMatrix::zeros(n, n);
        m[(index, index)] = c(1.0);
        DensityMatrix { matrix: m, basis }
    }

    pub fn maximally_mixed(basis: Basis) -> Self {
        let n = basis.dim();
        DensityMatrix {
            matrix: ComplexMatrix::identity(n, n).map(|v| v / n as f64),
            basis,
        }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    /// `U rho U^dagger`.
    pub fn conjugated(&self, u: &Unitary) -> Result<DensityMatrix, LinalgError> {
        if u.dim() != self.basis.dim() {
            return Err(LinalgError::DimensionMismatch {
                left: u.dim(),
                right: self.basis.dim(),
            });
        }
        Ok(DensityMatrix {
            matrix: u.conjugate(&self.matrix),
            basis: self.basis,
        })
    }

    pub fn purity(&self) -> f64 {
        trace(&(&self.matrix * &self.matrix)).re
    }

    /// `Tr(rho sigma)` for a pure target `sigma`.
    pub fn fidelity_with_pure(&self, target_index: usize) -> f64 {
        self.matrix[(target_index, target_index)].re
    }
}

/// `Re Tr(rho O)` for Hermitian `O`.
pub fn expectation(rho: &DensityMatrix, o: &ComplexMatrix) -> Result<f64, LinalgError> {
    let n = rho.matrix.nrows();
    if o.nrows() != n || o.ncols() != n {
        return Err(LinalgError::DimensionMismatch {
            left: n,
            right: o.nrows(),
        });
    }
    check_hermitian(o, HERMITIAN_TOL)?;
    let value = trace(&(&rho.matrix * o));
    if value.im.abs() > 1e-10 * max_abs(o).max(1.0) {
        return Err(LinalgError::ComplexExpectation(value.im));
    }
    Ok(value.re)
}

/// Operators of the dyad in the reduced four-level basis.
#[derive(Debug, Clone)]
pub struct ReducedOperators {
    /// Fictitious spin-1/2 of the spin-1.
    pub s: SpinOperators,
    /// The spin-1/2 partner.
    pub sp: SpinOperators,
    pub identity: ComplexMatrix,
    /// Projector onto `m_S = 0`.
    pub p0: ComplexMatrix,
}

impl ReducedOperators {
    pub fn new() -> Self {
        let half = spin_operators(SpinKind::FictitiousHalf);
        let prime = spin_operators(SpinKind::SpinHalf);
        let id2 = half.identity();
        let embed_s = |m: &ComplexMatrix| reduced_pair(m, &id2);
        let embed_sp = |m: &ComplexMatrix| reduced_pair(&id2, m);
        let s = SpinOperators {
            x: embed_s(&half.x),
            y: embed_s(&half.y),
            z: embed_s(&half.z),
            plus: embed_s(&half.plus),
            minus: embed_s(&half.minus),
        };
        let sp = SpinOperators {
            x: embed_sp(&prime.x),
            y: embed_sp(&prime.y),
            z: embed_sp(&prime.z),
            plus: embed_sp(&prime.plus),
            minus: embed_sp(&prime.minus),
        };
        let identity = ComplexMatrix::identity(4, 4);
        let p0 = identity.map(|v| v * 0.5) + &s.z;
        ReducedOperators {
            s,
            sp,
            identity,
            p0,
        }
    }

    /// `S~x S'y - S~y S'x`, the zero-quantum coherence carried by the protected state.
    pub fn zq_antisymmetric(&self) -> ComplexMatrix {
        &self.s.x * &self.sp.y - &self.s.y * &self.sp.x
    }

    /// `S~x S'x + S~y S'y`, the zero-quantum partner invisible to readout.
    pub fn zq_symmetric(&self) -> ComplexMatrix {
        &self.s.x * &self.sp.x + &self.s.y * &self.sp.y
    }
}

impl Default for ReducedOperators {
    fn default() -> Self {
        Self::new()
    }
}

/// Operators of the dyad in the full six-level basis.
#[derive(Debug, Clone)]
pub struct FullOperators {
    pub s: SpinOperators,
    pub sp: SpinOperators,
    pub identity: ComplexMatrix,
    pub p0: ComplexMatrix,
}

impl FullOperators {
    pub fn new() -> Self {
        let one = spin_operators(SpinKind::SpinOne);
        let half = spin_operators(SpinKind::SpinHalf);
        let id3 = one.identity();
        let id2 = half.identity();
        let embed_s = |m: &ComplexMatrix| full_pair(m, &id2);
        let embed_sp = |m: &ComplexMatrix| full_pair(&id3, m);
        let mut p0_single = ComplexMatrix::zeros(3, 3);
        p0_single[(1, 1)] = c(1.0);
        FullOperators {
            s: SpinOperators {
                x: embed_s(&one.x),
                y: embed_s(&one.y),
                z: embed_s(&one.z),
                plus: embed_s(&one.plus),
                minus: embed_s(&one.minus),
            },
            sp: SpinOperators {
                x: embed_sp(&half.x),
                y: embed_sp(&half.y),
                z: embed_sp(&half.z),
                plus: embed_sp(&half.plus),
                minus: embed_sp(&half.minus),
            },
            identity: ComplexMatrix::identity(6, 6),
            p0: embed_s(&p0_single),
        }
    }
}

impl Default for FullOperators {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: &ComplexMatrix, b: &ComplexMatrix, tol: f64) -> bool {
        max_abs(&(a - b)) < tol
    }

    fn check_algebra(ops: &SpinOperators) {
        let i = I;
        let cyc = [
            (&ops.x, &ops.y, &ops.z),
            (&ops.y, &ops.z, &ops.x),
            (&ops.z, &ops.x, &ops.y),
        ];
        for (a, b, c3) in cyc {
            assert!(close(&commutator(a, b), &c3.map(|v| v * i), 1e-14));
        }
        assert!(close(&ops.plus, &(&ops.x + ops.y.map(|v| v * i)), 1e-14));
        assert!(close(&ops.minus, &(&ops.x - ops.y.map(|v| v * i)), 1e-14));
    }

    #[test]
    fn commutation_relations_hold_for_every_kind() {
        for kind in [SpinKind::SpinOne, SpinKind::SpinHalf, SpinKind::FictitiousHalf] {
            check_algebra(&spin_operators(kind));
        }
    }

    #[test]
    fn spin_half_sz_eigenvalues() {
        let ops = spin_operators(SpinKind::SpinHalf);
        assert_eq!(hermitian_eigenvalues(&ops.z).unwrap(), vec![-0.5, 0.5]);
    }

    #[test]
    fn spin_one_sz_squared_trace() {
        let ops = spin_operators(SpinKind::SpinOne);
        assert_eq!(trace(&(&ops.z * &ops.z)).re, 2.0);
    }

    #[test]
    fn pauli_anticommutator_vanishes() {
        let ops = spin_operators(SpinKind::SpinHalf);
        let anti = &ops.x * &ops.y + &ops.y * &ops.x;
        assert!(max_abs(&anti) < 1e-15);
    }

    #[test]
    fn tensor_examples() {
        let id2 = ComplexMatrix::identity(2, 2);
        assert_eq!(tensor(&id2, &id2), ComplexMatrix::identity(4, 4));

        let one = spin_operators(SpinKind::SpinOne);
        let half = spin_operators(SpinKind::SpinHalf);
        let szi = tensor(&one.z, &id2);
        let vals = hermitian_eigenvalues(&szi).unwrap();
        assert_eq!(vals, vec![-1.0, -1.0, 0.0, 0.0, 1.0, 1.0]);

        let id3 = one.identity();
        let lhs = tensor(&one.z, &id2) * tensor(&id3, &half.z);
        assert!(close(&lhs, &tensor(&one.z, &half.z), 1e-15));
    }

    #[test]
    fn reduced_basis_order_matches_state_labels() {
        let ops = ReducedOperators::new();
        // |1>=|0,+>, |2>=|-1,+>, |3>=|0,->, |4>=|-1,->
        let sz: Vec<f64> = (0..4).map(|k| ops.s.z[(k, k)].re).collect();
        let spz: Vec<f64> = (0..4).map(|k| ops.sp.z[(k, k)].re).collect();
        assert_eq!(sz, vec![0.5, -0.5, 0.5, -0.5]);
        assert_eq!(spz, vec![0.5, 0.5, -0.5, -0.5]);
        let p0: Vec<f64> = (0..4).map(|k| ops.p0[(k, k)].re).collect();
        assert_eq!(p0, vec![1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn zero_time_gives_identity() {
        let ops = ReducedOperators::new();
        let h = &ops.s.x * &ops.sp.z + &ops.s.z;
        let u = evolve_unitary(&h, 0.0).unwrap();
        assert!(close(u.matrix(), &ComplexMatrix::identity(4, 4), 1e-15));
    }

    #[test]
    fn spin_half_phase_rotation() {
        let ops = spin_operators(SpinKind::SpinHalf);
        let omega = 2.0 * PI * 1.0e6;
        let h = ops.z.map(|v| v * omega);
        let u = evolve_unitary(&h, PI / omega).unwrap();
        let expected = ComplexMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::from_polar(1.0, -PI / 2.0),
            Complex64::from_polar(1.0, PI / 2.0),
        ]));
        assert!(close(u.matrix(), &expected, 1e-12));
    }

    #[test]
    fn non_hermitian_input_is_rejected_with_defect() {
        let mut h = ComplexMatrix::zeros(2, 2);
        h[(0, 1)] = c(1.0);
        match evolve_unitary(&h, 1.0) {
            Err(LinalgError::NotHermitian { defect }) => assert_eq!(defect, 1.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_time_is_rejected() {
        let h = ComplexMatrix::identity(2, 2);
        assert!(matches!(
            evolve_unitary(&h, -1.0),
            Err(LinalgError::NegativeTime(_))
        ));
    }

    #[test]
    fn expectation_examples() {
        let ops = ReducedOperators::new();
        let mixed = DensityMatrix::maximally_mixed(Basis::Reduced4);
        assert!(expectation(&mixed, &ops.s.z).unwrap().abs() < 1e-15);
        // |0,-1/2> is |3>
        let rho = DensityMatrix::basis_state(2, Basis::Reduced4);
        assert_eq!(expectation(&rho, &ops.p0).unwrap(), 1.0);
        assert_eq!(expectation(&rho, &ops.sp.z).unwrap(), -0.5);
    }

    #[test]
    fn expectation_dimension_mismatch() {
        let rho = DensityMatrix::maximally_mixed(Basis::Reduced4);
        let o = ComplexMatrix::identity(6, 6);
        assert!(matches!(
            expectation(&rho, &o),
            Err(LinalgError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn density_validation_rejects_bad_states() {
        let bad_trace = ComplexMatrix::identity(4, 4);
        assert!(DensityMatrix::new(bad_trace, Basis::Reduced4).is_err());
        let mut negative = ComplexMatrix::zeros(4, 4);
        negative[(0, 0)] = c(1.5);
        negative[(1, 1)] = c(-0.5);
        assert!(DensityMatrix::new(negative, Basis::Reduced4).is_err());
        assert!(DensityMatrix::new(ComplexMatrix::identity(4, 4), Basis::Full6).is_err());
    }

    #[test]
    fn full_operators_projector() {
        let ops = FullOperators::new();
        let diag: Vec<f64> = (0..6).map(|k| ops.p0[(k, k)].re).collect();
        assert_eq!(diag, vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let sz: Vec<f64> = (0..6).map(|k| ops.s.z[(k, k)].re).collect();
        assert_eq!(sz, vec![1.0, 1.0, 0.0, 0.0, -1.0, -1.0]);
    }
}
