use std::f64::consts::{FRAC_PI_2, PI};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use spindyad::analysis::{
    enhancement_ratio, fit_stretched_exponential, slope_frequency, temperature_shift,
    AnalysisError,
};
use spindyad::engine::{run, Experiment, Protocol, TimeTrace};
use spindyad::model::DyadParams;
use spindyad::protocol::optimal_tau_zq;

fn synthetic(t2: f64, n: f64, amplitude: f64, offset: f64, sigma: f64, seed: u64) -> TimeTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).unwrap();
    let times: Vec<f64> = (0..60).map(|k| k as f64 * 3.0 * t2 / 59.0).collect();
    let signal_mean = times
        .iter()
        .map(|t| {
            let e = if sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            offset + amplitude * (-(t / t2).powf(n)).exp() + e
        })
        .collect();
    TimeTrace {
        signal_sem: vec![sigma; times.len()],
        times,
        signal_mean,
        metadata: vec![],
    }
}

#[test]
fn recovers_synthetic_stretched_exponential() {
    for seed in 0..5 {
        let fit = fit_stretched_exponential(&synthetic(20e-6, 1.5, 0.5, 0.5, 0.01, seed)).unwrap();
        assert!((fit.t2 / 20e-6 - 1.0).abs() < 0.05, "seed {seed}: {fit:?}");
        assert!((fit.stretch_n - 1.5).abs() < 0.1, "seed {seed}: {fit:?}");
    }
}

#[test]
fn exact_data_is_fitted_tightly() {
    let fit = fit_stretched_exponential(&synthetic(7e-6, 2.2, 1.0, 0.0, 0.0, 0)).unwrap();
    assert!((fit.t2 / 7e-6 - 1.0).abs() < 1e-4, "{fit:?}");
    assert!((fit.stretch_n - 2.2).abs() < 1e-3, "{fit:?}");
    assert!(fit.residual_rms < 1e-6);
}

#[test]
fn flat_trace_reports_no_decay() {
    let mut trace = synthetic(1.0, 1.0, 0.0, 0.5, 0.0, 0);
    trace.signal_sem = vec![1e-3; trace.len()];
    assert!(matches!(
        fit_stretched_exponential(&trace),
        Err(AnalysisError::NoDecayResolvable { .. })
    ));
}

#[test]
fn short_trace_is_rejected() {
    let mut trace = synthetic(1e-6, 1.0, 1.0, 0.0, 0.0, 0);
    trace.times.truncate(5);
    trace.signal_mean.truncate(5);
    trace.signal_sem.truncate(5);
    assert!(matches!(
        fit_stretched_exponential(&trace),
        Err(AnalysisError::TooFewPoints { .. })
    ));
}

#[test]
fn enhancement_ratio_rejects_non_positive_times() {
    assert_eq!(enhancement_ratio(4.0, 2.0).unwrap(), 2.0);
    assert!(enhancement_ratio(0.0, 2.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fit_is_equivariant_under_time_scaling(
        t2 in 1e-6f64..1e-3,
        n in 0.8f64..2.5,
        k in 0.1f64..10.0,
    ) {
        let a = fit_stretched_exponential(&synthetic(t2, n, 1.0, 0.0, 0.0, 0)).unwrap();
        let b = fit_stretched_exponential(&synthetic(t2 * k, n, 1.0, 0.0, 0.0, 0)).unwrap();
        prop_assert!((b.t2 / (a.t2 * k) - 1.0).abs() < 1e-4);
        prop_assert!((b.stretch_n - a.stretch_n).abs() < 1e-3);
    }

    #[test]
    fn fit_is_equivariant_under_affine_signal_maps(
        amplitude in 0.05f64..2.0,
        offset in -1.0f64..1.0,
    ) {
        let fit = fit_stretched_exponential(&synthetic(10e-6, 1.3, amplitude, offset, 0.0, 0)).unwrap();
        prop_assert!((fit.t2 / 10e-6 - 1.0).abs() < 1e-4);
        prop_assert!((fit.amplitude / amplitude - 1.0).abs() < 1e-4);
        prop_assert!((fit.offset - offset).abs() < 1e-4 * amplitude);
    }

    #[test]
    fn slope_frequency_inverts_linear_traces(dw in -5e4f64..5e4) {
        let times: Vec<f64> = (0..9).map(|k| k as f64 * 0.5e-6).collect();
        let trace = TimeTrace {
            signal_mean: times.iter().map(|t| 0.5 - 0.5 * dw * t).collect(),
            signal_sem: vec![0.0; times.len()],
            times,
            metadata: vec![],
        };
        let got = slope_frequency(&trace, 4e-6).unwrap();
        prop_assert!((got - dw).abs() < 1e-9 * dw.abs().max(1.0));
    }
}

#[test]
fn slope_frequency_refuses_large_angles() {
    let times: Vec<f64> = (0..9).map(|k| k as f64 * 0.5e-6).collect();
    let dw = 2.0 * PI * 100e3;
    let trace = TimeTrace {
        signal_mean: times.iter().map(|t| 0.5 - 0.5 * (dw * t).sin()).collect(),
        signal_sem: vec![0.0; times.len()],
        times,
        metadata: vec![],
    };
    assert!(matches!(
        slope_frequency(&trace, 4e-6),
        Err(AnalysisError::OutsideSmallAngle(_))
    ));
}

#[test]
fn thermometry_round_trip_noise_free() {
    let j = 50e3;
    for ddelta_dt in [-2.0 * PI * 74e3, 2.0 * PI * 1e3, 2.0 * PI * 1e6] {
        let p = DyadParams {
            ddelta_dt,
            ..DyadParams::default().with_projected(j, 0.0)
        };
        let dw = 2.0 * PI * 10e3;
        let mut exp = Experiment::new(
            p.clone(),
            Protocol::ZqDecay {
                tau_zq: optimal_tau_zq(j),
                echo: false,
                theta: FRAC_PI_2,
            },
            (0..=8).map(|k| k as f64 * 0.25e-6).collect(),
        );
        exp.noise.beta_rms = 0.0;
        exp.sim.n_trajectories = 1;
        exp.sim.delta_temperature = dw / ddelta_dt;
        let trace = run(&exp).unwrap();
        let got = slope_frequency(&trace, 2e-6).unwrap();
        assert!((got / dw - 1.0).abs() < 0.02, "{got} vs {dw}");
        let dt = temperature_shift(got, &p).unwrap();
        assert!((dt / exp.sim.delta_temperature - 1.0).abs() < 0.02);
    }
}
