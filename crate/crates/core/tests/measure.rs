use std::f64::consts::{PI, SQRT_2};
use std::sync::OnceLock;

use approx::assert_relative_eq;
use num_complex::Complex64;
use rustfft::FftPlanner;
use wavescatter::evolve::{propagate, StopCriterion, Trajectory};
use wavescatter::harness::{run, run_with_trajectory, Scenario};
use wavescatter::measure::{group_velocity_fit, Region, ScatteringResult};
use wavescatter::{
    build_packet, Error, GridSpec, PacketSpec, PotentialProfile, PropagatorConfig, RunConfig,
    UnitSystem,
};

const UNITS: UnitSystem = UnitSystem { hbar: 1.0, mass: 1.0 };

/// E = 2V₀ at 100 incident wavelengths and the default resolution, shared
/// by every test that only reads it.
fn collision() -> &'static (RunConfig, ScatteringResult, Trajectory) {
    static RUN: OnceLock<(RunConfig, ScatteringResult, Trajectory)> = OnceLock::new();
    RUN.get_or_init(|| {
        let config = Scenario::step(5.0, 2.0, 100.0).to_config().unwrap();
        let (result, traj) = run_with_trajectory(&config).unwrap();
        (config, result, traj)
    })
}

fn default_run(w_over_lambda: f64) -> (RunConfig, ScatteringResult) {
    let config = Scenario::step(5.0, 2.0, w_over_lambda).to_config().unwrap();
    let result = run(&config).unwrap();
    (config, result)
}

fn fifty() -> &'static (RunConfig, ScatteringResult) {
    static RUN: OnceLock<(RunConfig, ScatteringResult)> = OnceLock::new();
    RUN.get_or_init(|| default_run(50.0))
}

fn wide_coarse_run(e_over_v0: f64, v0: Option<f64>) -> ScatteringResult {
    // Diffraction ripple on narrower flat tops shifts the current plateaus
    // by ~0.2%.
    let mut scenario = Scenario::step(5.0, e_over_v0, 200.0);
    scenario.points_per_wavelength = 40.0;
    let mut config = scenario.to_config().unwrap();
    if let Some(v0) = v0 {
        config.potential = PotentialProfile::step(v0);
    }
    run(&config).unwrap()
}

#[test]
fn collision_splits_probability_as_the_stationary_problem_predicts() {
    let (_, result, _) = collision();
    assert_relative_eq!(result.analytic.r, 0.029437251522859414, max_relative = 1e-12);
    assert!((result.p_left - result.analytic.r).abs() < 0.01 * result.analytic.r + 1e-3);
    assert!((result.p_right - result.analytic.t).abs() < 0.01 * result.analytic.t + 1e-3);
}

#[test]
fn every_sample_accounts_for_the_whole_norm() {
    let (_, result, traj) = collision();
    for i in 0..traj.len() {
        let total = traj.left_probability[i] + traj.right_probability[i];
        assert!((total - traj.norms[i]).abs() < 1e-9, "sample {i}");
    }
    assert!((result.p_left + result.p_right - 1.0).abs() < 1e-9);
    assert!(result.norm_drift < 1e-9);
}

#[test]
fn fitted_velocities_are_the_group_velocities() {
    let (_, result, _) = collision();
    assert_relative_eq!(result.v_incident.unwrap(), 5.0, max_relative = 0.005);
    assert_relative_eq!(result.v_transmitted.unwrap(), 5.0 / SQRT_2, max_relative = 0.01);
}

#[test]
fn outgoing_widths_follow_the_velocity_ratio() {
    let (_, result, _) = collision();
    let w_i = result.width_incident;
    assert_relative_eq!(result.width_transmitted.unwrap(), w_i / SQRT_2, max_relative = 0.05);
    assert_relative_eq!(result.width_reflected.unwrap(), w_i, max_relative = 0.05);
    assert!(result.width_at_arrival.unwrap() > 0.0);
}

#[test]
fn currents_agree_with_region_probabilities() {
    let (_, result, _) = collision();
    let current = result.current_estimate.unwrap();
    assert_relative_eq!(current.r, result.analytic.r, max_relative = 0.01);
    // Realises T = j_C / j_A far right of the step.
    assert_relative_eq!(current.t, result.analytic.t, max_relative = 0.02);
    assert_relative_eq!(current.r, result.p_left, max_relative = 0.01);
    assert_relative_eq!(current.t, result.p_right, max_relative = 0.01);
}

#[test]
fn currents_without_a_step_show_full_transmission() {
    let current = wide_coarse_run(2.0, Some(0.0)).current_estimate.unwrap();
    assert!(current.r.abs() < 1e-3, "{current:?}");
    assert!((current.t - 1.0).abs() < 1e-3, "{current:?}");
}

#[test]
fn currents_below_the_step_show_total_reflection() {
    let current = wide_coarse_run(0.5, None).current_estimate.unwrap();
    assert!((current.r - 1.0).abs() < 1e-3, "{current:?}");
    assert!(current.t.abs() < 1e-3, "{current:?}");
}

#[test]
fn standing_wave_does_not_move() {
    let grid = GridSpec::anchored(0.02, 5000, 6000).unwrap();
    // A real field holds equal and opposite momenta.
    let mut state = build_packet(grid, &PacketSpec::gaussian(-40.0, 4.0, 5.0)).unwrap();
    for z in state.psi.iter_mut() {
        *z = Complex64::new(z.re, 0.0);
    }
    state.normalize().unwrap();
    let (_, traj) = propagate(
        &state,
        &PotentialProfile::step(0.0),
        PropagatorConfig::crank_nicolson(2e-3),
        UNITS,
        StopCriterion::MaxTime { t: 3.0 },
        50,
    )
    .unwrap();
    let v = group_velocity_fit(&traj, Region::Left, (0.0, 3.0)).unwrap();
    assert!(v.abs() < 1e-9, "standing wave drifts at {v:e}");
}

#[test]
fn short_windows_cannot_be_fitted() {
    let (_, _, traj) = collision();
    let dt = traj.times[1] - traj.times[0];
    let window = (traj.times[0], traj.times[0] + 3.0 * dt);
    assert!(matches!(group_velocity_fit(traj, Region::Left, window), Err(Error::Domain(_))));
}

/// Width `(∫|ψ|²)²/∫|ψ|⁴` of the exact transmitted packet at time `t`: the
/// flat-top's closed-form spectrum times the step's transmission amplitude,
/// superposed over `κ` with one FFT.
fn exact_transmitted_width(packet: &PacketSpec, v0: f64, t: f64) -> f64 {
    let (w, x0, k0) = (packet.width_wi, packet.center_x0, packet.k0);
    let ramp = 0.1 * w;
    let spectrum = |k: f64| {
        let q = k - k0;
        let rect = if q == 0.0 { w } else { 2.0 * (q * w / 2.0).sin() / q };
        let denominator = PI * PI - (q * ramp).powi(2);
        let taper = if denominator.abs() < 1e-12 {
            0.5
        } else {
            PI * PI * (q * ramp / 2.0).cos() / denominator
        };
        Complex64::from_polar(rect * taper, -q * x0)
    };
    let n = 1usize << 20;
    let dx = 0.02;
    let dq = 2.0 * PI / (n as f64 * dx);
    let kappa0 = (k0 * k0 - 2.0 * v0).sqrt();
    let mut amplitudes: Vec<Complex64> = (0..n)
        .map(|j| {
            // Natural FFT order: index j carries offset q_j from κ₀.
            let q = if j < n / 2 { j as f64 } else { j as f64 - n as f64 } * dq;
            let kappa = kappa0 + q;
            if kappa <= 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            let k = (kappa * kappa + 2.0 * v0).sqrt();
            let transmission = 2.0 * k / (k + kappa);
            spectrum(k) * transmission * (kappa / k) * Complex64::from_polar(1.0, -0.5 * k * k * t)
        })
        .collect();
    FftPlanner::new().plan_fft_inverse(n).process(&mut amplitudes);
    let density: Vec<f64> = amplitudes[..n / 2].iter().map(|z| z.norm_sqr()).collect();
    let p2: f64 = density.iter().sum();
    let p4: f64 = density.iter().map(|p| p * p).sum();
    p2 * p2 * dx / p4
}

#[test]
fn transmitted_width_matches_exact_superposition() {
    let (config, result) = fifty();
    let exact = exact_transmitted_width(&config.packet, 6.25, result.final_time);
    assert_relative_eq!(result.width_transmitted.unwrap(), exact, max_relative = 5e-4);
}

#[test]
fn width_ratio_error_shrinks_from_fifty_to_two_hundred_wavelengths() {
    let wide = default_run(200.0);
    let errors: Vec<f64> = [fifty(), &wide]
        .into_iter()
        .map(|(_, result)| {
            let ratio = result.width_transmitted.unwrap() / result.width_incident;
            (ratio - 1.0 / SQRT_2).abs()
        })
        .collect();
    assert!(errors[1] < 0.05 / SQRT_2, "w_T/w_I off by {} at 200", errors[1]);
    assert!(errors[1] < errors[0], "w_T/w_I errors {errors:?} at 50 and 200 wavelengths");
}
