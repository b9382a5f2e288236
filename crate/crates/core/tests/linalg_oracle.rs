use num_complex::Complex64;
use proptest::prelude::*;
use spindyad::linalg::{
    self, evolve_unitary, hermitian_eigen, max_abs, unitarity_defect, Basis, ComplexMatrix,
    DensityMatrix,
};

/// `exp(-i h t)` by scaling and squaring a 20-term Taylor series.
fn taylor_exp(h: &ComplexMatrix, t: f64) -> ComplexMatrix {
    let n = h.nrows();
    let a = h.map(|v| v * Complex64::new(0.0, -t));
    let norm = a.norm();
    let mut k = 0;
    while norm / 2f64.powi(k) > 0.5 {
        k += 1;
    }
    let a = a.map(|v| v / 2f64.powi(k));
    let mut term = ComplexMatrix::identity(n, n);
    let mut sum = term.clone();
    for j in 1..=20 {
        term = &term * &a / Complex64::from(j as f64);
        sum += &term;
    }
    for _ in 0..k {
        sum = &sum * &sum;
    }
    sum
}

fn hermitian_from(entries: &[f64], n: usize, scale: f64) -> ComplexMatrix {
    let m = ComplexMatrix::from_fn(n, n, |i, j| {
        Complex64::new(entries[2 * (i * n + j)], entries[2 * (i * n + j) + 1])
    });
    (&m + m.adjoint()).map(|v| v * (0.5 * scale))
}

fn random_density(entries: &[f64]) -> DensityMatrix {
    // A A^dagger / Tr is positive semidefinite with unit trace
    let a = ComplexMatrix::from_fn(4, 4, |i, j| {
        Complex64::new(entries[2 * (i * 4 + j)], entries[2 * (i * 4 + j) + 1])
    });
    let m = &a * a.adjoint();
    let tr = linalg::trace(&m);
    DensityMatrix::new(m.map(|v| v / tr), Basis::Reduced4).unwrap()
}

#[test]
fn random_hermitian_matches_taylor_oracle() {
    // fixed pseudo-random entries, no RNG dependency
    let mut x = 0.123_f64;
    let mut next = || {
        x = (x * 997.0 + 0.371).fract();
        2.0 * x - 1.0
    };
    for n in [4, 6] {
        let entries: Vec<f64> = (0..2 * n * n).map(|_| next()).collect();
        let h = hermitian_from(&entries, n, 1.0);
        let u = evolve_unitary(&h, 1.0).unwrap();
        assert!(max_abs(&(u.matrix() - taylor_exp(&h, 1.0))) < 1e-9);
    }
}

#[test]
fn eigendecomposition_reconstructs_input() {
    let ops = linalg::FullOperators::new();
    let h = &ops.s.z * &ops.s.z + ops.s.x.map(|v| v * 0.3) + (&ops.s.plus * &ops.sp.minus).map(|v| v * 0.2);
    let h = (&h + h.adjoint()).map(|v| v * 0.5);
    let (vals, vecs) = hermitian_eigen(&h).unwrap();
    let d = ComplexMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        6,
        vals.iter().map(|v| Complex64::from(*v)),
    ));
    assert!(max_abs(&(&vecs * d * vecs.adjoint() - &h)) < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn evolution_matches_taylor_for_moderate_norms(
        entries in prop::collection::vec(-1.0f64..1.0, 32),
        t in 0.0f64..3.0,
    ) {
        let h = hermitian_from(&entries, 4, 1.0);
        let u = evolve_unitary(&h, t).unwrap();
        prop_assert!(max_abs(&(u.matrix() - taylor_exp(&h, t))) < 1e-9);
    }

    #[test]
    fn propagators_stay_unitary_up_to_a_millisecond(
        entries in prop::collection::vec(-1.0f64..1.0, 72),
        scale_exp in 3.0f64..10.0,
        t in 0.0f64..1e-3,
    ) {
        // generators up to ~2 pi GHz, as in the lab-frame Hamiltonians
        let h = hermitian_from(&entries, 6, 10f64.powf(scale_exp));
        let u = evolve_unitary(&h, t).unwrap();
        prop_assert!(unitarity_defect(u.matrix()) < 1e-10);
    }

    #[test]
    fn evolution_composes_additively_in_time(
        entries in prop::collection::vec(-1.0f64..1.0, 32),
        t1 in 0.0f64..2.0,
        t2 in 0.0f64..2.0,
    ) {
        let h = hermitian_from(&entries, 4, 1.0);
        let whole = evolve_unitary(&h, t1 + t2).unwrap();
        let split = evolve_unitary(&h, t2).unwrap().compose(&evolve_unitary(&h, t1).unwrap());
        prop_assert!(max_abs(&(whole.matrix() - split.matrix())) < 1e-12);
    }

    #[test]
    fn conjugation_keeps_density_invariants(
        h_entries in prop::collection::vec(-1.0f64..1.0, 32),
        rho_entries in prop::collection::vec(-1.0f64..1.0, 32),
        t in 0.0f64..10.0,
    ) {
        let rho = random_density(&rho_entries);
        let u = evolve_unitary(&hermitian_from(&h_entries, 4, 1.0), t).unwrap();
        let out = rho.conjugated(&u).unwrap();
        prop_assert!(out.validate().is_ok());
        prop_assert!((out.purity() - rho.purity()).abs() < 1e-12);
    }
}
