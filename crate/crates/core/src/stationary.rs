//! Closed-form plane-wave scattering.
//!
//! A particle of energy `E` incident from the left on a potential that is
//! constant on either side of one or more boundaries. For the single step the
//! amplitude ratios have the familiar closed form
//!
//! ```text
//! B/A = (k - κ) / (k + κ)        C/A = 2k / (k + κ)
//! ```
//!
//! with `k² = 2mE/ħ²` and `κ² = k² - 2mV₀/ħ²`. Reflection and transmission
//! probabilities are `R = |B/A|²` and `T = (κ/k)|C/A|²`, the transmitted
//! intensity being weighted by the ratio of group velocities on the two sides.
//!
//! General piecewise-constant profiles are handled with 2×2 transfer matrices
//! acting on `(ψ, ψ')`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values of ħ and m. Everything else in the crate is expressed in the units
/// these two fix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitSystem {
    pub hbar: f64,
    pub mass: f64,
}

impl Default for UnitSystem {
    fn default() -> Self {
        UnitSystem { hbar: 1.0, mass: 1.0 }
    }
}

impl UnitSystem {
    pub fn new(hbar: f64, mass: f64) -> Result<Self> {
        let units = UnitSystem { hbar, mass };
        units.validate()?;
        Ok(units)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hbar.is_finite() && self.hbar > 0.0) {
            return Err(Error::config(format!("hbar must be positive, got {}", self.hbar)));
        }
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(Error::config(format!("mass must be positive, got {}", self.mass)));
        }
        Ok(())
    }

    /// Kinetic energy `ħ²k²/2m` of a plane wave.
    pub fn kinetic_energy(&self, k: f64) -> f64 {
        self.hbar * self.hbar * k * k / (2.0 * self.mass)
    }

    /// Group velocity `ħk/m`.
    pub fn group_velocity(&self, k: f64) -> f64 {
        self.hbar * k / self.mass
    }
}

/// The scattering potential.
///
/// `Step` is zero for `x < 0` and `v0` for `x > 0`. `PiecewiseConstant` holds
/// `levels[0]` left of `boundaries[0]`, `levels[i]` between `boundaries[i-1]`
/// and `boundaries[i]`, and the last level right of the last boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialProfile {
    Step { v0: f64 },
    PiecewiseConstant { boundaries: Vec<f64>, levels: Vec<f64> },
}

impl PotentialProfile {
    pub fn step(v0: f64) -> Self {
        PotentialProfile::Step { v0 }
    }

    /// Rectangular barrier of height `v0` on `[left, left + width]`.
    pub fn barrier(left: f64, width: f64, v0: f64) -> Self {
        PotentialProfile::PiecewiseConstant {
            boundaries: vec![left, left + width],
            levels: vec![0.0, v0, 0.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PotentialProfile::Step { v0 } => {
                if !v0.is_finite() {
                    return Err(Error::config("step height must be finite"));
                }
            }
            PotentialProfile::PiecewiseConstant { boundaries, levels } => {
                if boundaries.is_empty() {
                    return Err(Error::config("piecewise-constant potential needs at least one boundary"));
                }
                if levels.len() != boundaries.len() + 1 {
                    return Err(Error::config(format!(
                        "{} boundaries need {} levels, got {}",
                        boundaries.len(),
                        boundaries.len() + 1,
                        levels.len()
                    )));
                }
                if boundaries.iter().chain(levels).any(|v| !v.is_finite()) {
                    return Err(Error::config("potential boundaries and levels must be finite"));
                }
                if boundaries.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::config("potential boundaries must be strictly increasing"));
                }
            }
        }
        Ok(())
    }

    /// `(boundaries, levels)` form; a step becomes one boundary at the origin.
    pub fn to_piecewise(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            PotentialProfile::Step { v0 } => (vec![0.0], vec![0.0, *v0]),
            PotentialProfile::PiecewiseConstant { boundaries, levels } => {
                (boundaries.clone(), levels.clone())
            }
        }
    }

    pub fn left_level(&self) -> f64 {
        match self {
            PotentialProfile::Step { .. } => 0.0,
            PotentialProfile::PiecewiseConstant { levels, .. } => levels[0],
        }
    }

    pub fn right_level(&self) -> f64 {
        match self {
            PotentialProfile::Step { v0 } => *v0,
            PotentialProfile::PiecewiseConstant { levels, .. } => *levels.last().unwrap(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        let (_, levels) = self.to_piecewise();
        levels.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Position of the first boundary, where the incident packet first meets
    /// the potential.
    pub fn first_boundary(&self) -> f64 {
        match self {
            PotentialProfile::Step { .. } => 0.0,
            PotentialProfile::PiecewiseConstant { boundaries, .. } => boundaries[0],
        }
    }

    /// Position of the last boundary.
    pub fn last_boundary(&self) -> f64 {
        match self {
            PotentialProfile::Step { .. } => 0.0,
            PotentialProfile::PiecewiseConstant { boundaries, .. } => *boundaries.last().unwrap(),
        }
    }

    /// Potential at `x`. A point lying on a boundary (within `tol`) gets the
    /// mean of the two adjacent levels.
    pub fn value_at(&self, x: f64, tol: f64) -> f64 {
        let (boundaries, levels) = self.to_piecewise();
        for (i, &b) in boundaries.iter().enumerate() {
            if (x - b).abs() <= tol {
                return 0.5 * (levels[i] + levels[i + 1]);
            }
            if x < b {
                return levels[i];
            }
        }
        *levels.last().unwrap()
    }
}

/// Complex amplitude ratios of a stationary scattering state
/// `A e^{ikx} + B e^{-ikx}` (left) and `C e^{iκx}` (right).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatteringAmplitudes {
    pub b_over_a: Complex64,
    pub c_over_a: Complex64,
    pub k: f64,
    pub kappa: Complex64,
    /// Energy the amplitudes were computed at, when known.
    pub energy: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityPair {
    pub r: f64,
    pub t: f64,
}

impl ProbabilityPair {
    pub fn from_amplitudes(amps: &ScatteringAmplitudes) -> Self {
        ProbabilityPair {
            r: reflection_probability(amps),
            t: transmission_probability(amps),
        }
    }
}

/// Wavenumbers on the two sides of a step.
///
/// `kappa` is real and positive above the step, zero exactly at `E = V₀`, and
/// positive imaginary below it so that `e^{iκx}` decays to the right.
pub fn wavenumbers(energy: f64, v0: f64, units: UnitSystem) -> Result<(f64, Complex64)> {
    if !(energy.is_finite() && energy > 0.0) {
        return Err(Error::domain(format!("energy must be positive, got {energy}")));
    }
    if !v0.is_finite() {
        return Err(Error::domain("step height must be finite"));
    }
    let k = (2.0 * units.mass * energy).sqrt() / units.hbar;
    Ok((k, region_wavenumber(energy, v0, units)))
}

/// Wavenumber in a region of constant potential, with the decaying branch
/// below the level.
pub(crate) fn region_wavenumber(energy: f64, level: f64, units: UnitSystem) -> Complex64 {
    let excess = energy - level;
    let magnitude = (2.0 * units.mass * excess.abs()).sqrt() / units.hbar;
    if excess > 0.0 {
        Complex64::new(magnitude, 0.0)
    } else if excess < 0.0 {
        Complex64::new(0.0, magnitude)
    } else {
        Complex64::new(0.0, 0.0)
    }
}

/// Amplitude ratios for the step from the two wavenumbers.
pub fn step_amplitudes(k: f64, kappa: Complex64) -> Result<ScatteringAmplitudes> {
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::domain(format!("incident wavenumber must be positive, got {k}")));
    }
    let denom = k + kappa;
    if denom.norm() == 0.0 {
        return Err(Error::domain("kappa = -k makes the amplitude ratios singular"));
    }
    let c_over_a = 2.0 * k / denom;
    Ok(ScatteringAmplitudes {
        // Written as C/A - 1 so continuity 1 + B/A = C/A holds to the last bit.
        b_over_a: c_over_a - 1.0,
        c_over_a,
        k,
        kappa,
        energy: None,
    })
}

/// Convenience: amplitudes for the step at energy `E` and height `V₀`.
pub fn step_scattering(energy: f64, v0: f64, units: UnitSystem) -> Result<ScatteringAmplitudes> {
    let (k, kappa) = wavenumbers(energy, v0, units)?;
    let mut amps = step_amplitudes(k, kappa)?;
    amps.energy = Some(energy);
    Ok(amps)
}

pub fn reflection_probability(amps: &ScatteringAmplitudes) -> f64 {
    amps.b_over_a.norm_sqr()
}

/// `Re(κ)/k · |C/A|²`; zero whenever the transmitted wave does not propagate.
pub fn transmission_probability(amps: &ScatteringAmplitudes) -> f64 {
    if amps.kappa.im != 0.0 || amps.kappa.re <= 0.0 {
        return 0.0;
    }
    amps.kappa.re / amps.k * amps.c_over_a.norm_sqr()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Mat2([[Complex64; 2]; 2]);

impl Mat2 {
    fn identity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        Mat2([[one, zero], [zero, one]])
    }

    fn mul(&self, rhs: &Mat2) -> Mat2 {
        let a = &self.0;
        let b = &rhs.0;
        Mat2([
            [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
            [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
        ])
    }

    fn apply(&self, v: [Complex64; 2]) -> [Complex64; 2] {
        [
            self.0[0][0] * v[0] + self.0[0][1] * v[1],
            self.0[1][0] * v[0] + self.0[1][1] * v[1],
        ]
    }

    /// Propagation of `(ψ, ψ')` across a constant region of width `d` with
    /// wavenumber `q`. Well defined at `q = 0` and for imaginary `q`.
    fn propagation(q: Complex64, d: f64) -> Mat2 {
        let phase = q * d;
        let cos = phase.cos();
        let sin_over_q = if phase.norm() < 1e-8 {
            d * (1.0 - phase * phase / 6.0)
        } else {
            phase.sin() / q
        };
        let q_sin = q * phase.sin();
        Mat2([[cos, sin_over_q], [-q_sin, cos]])
    }

    /// Maps `(ψ, ψ')` at `x` to the plane-wave coefficients `(A, B)` of
    /// `A e^{ikx} + B e^{-ikx}`.
    fn plane_wave_split(k: f64, x: f64) -> Mat2 {
        let ik = Complex64::new(0.0, k);
        let half = Complex64::new(0.5, 0.0);
        let fwd = (-ik * x).exp();
        let bwd = (ik * x).exp();
        Mat2([
            [half * fwd, half * fwd / ik],
            [half * bwd, -half * bwd / ik],
        ])
    }
}

/// Amplitude ratios for any piecewise-constant potential.
///
/// The transmitted wave `C e^{iκx}` (with `C = 1`) fixes `(ψ, ψ')` at the last
/// boundary; propagation matrices carry it leftward through every interior
/// region and a final interface matrix splits it into incident and reflected
/// waves. `k` is the leftmost wavenumber and `kappa` the rightmost.
pub fn transfer_matrix_amplitudes(
    potential: &PotentialProfile,
    energy: f64,
    units: UnitSystem,
) -> Result<ScatteringAmplitudes> {
    potential.validate()?;
    if !(energy.is_finite() && energy > 0.0) {
        return Err(Error::domain(format!("energy must be positive, got {energy}")));
    }
    let (boundaries, levels) = potential.to_piecewise();
    let left = levels[0];
    if energy <= left {
        return Err(Error::domain(format!(
            "energy {energy} does not exceed the leftmost level {left}; no incident travelling wave"
        )));
    }
    let k = (2.0 * units.mass * (energy - left)).sqrt() / units.hbar;
    let kappa = region_wavenumber(energy, *levels.last().unwrap(), units);

    let last = *boundaries.last().unwrap();
    let psi = (Complex64::new(0.0, 1.0) * kappa * last).exp();
    let outgoing = [psi, Complex64::new(0.0, 1.0) * kappa * psi];

    let mut transfer = Mat2::identity();
    for j in (1..boundaries.len()).rev() {
        let width = boundaries[j] - boundaries[j - 1];
        let q = region_wavenumber(energy, levels[j], units);
        transfer = Mat2::propagation(q, -width).mul(&transfer);
    }
    let total = Mat2::plane_wave_split(k, boundaries[0]).mul(&transfer);
    let [a, b] = total.apply(outgoing);
    if a.norm() == 0.0 || !a.is_finite() {
        return Err(Error::domain("transfer matrix produced a degenerate incident amplitude"));
    }
    Ok(ScatteringAmplitudes {
        b_over_a: b / a,
        c_over_a: 1.0 / a,
        k,
        kappa,
        energy: Some(energy),
    })
}

/// Analytic `(R, T)` for a potential at energy `E`.
pub fn analytic_probabilities(
    potential: &PotentialProfile,
    energy: f64,
    units: UnitSystem,
) -> Result<ProbabilityPair> {
    let amps = match potential {
        PotentialProfile::Step { v0 } => step_scattering(energy, *v0, units)?,
        PotentialProfile::PiecewiseConstant { .. } => {
            transfer_matrix_amplitudes(potential, energy, units)?
        }
    };
    Ok(ProbabilityPair::from_amplitudes(&amps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const UNITS: UnitSystem = UnitSystem { hbar: 1.0, mass: 1.0 };

    #[test]
    fn wavenumbers_free_case() {
        let (k, kappa) = wavenumbers(1.0, 0.0, UNITS).unwrap();
        assert_abs_diff_eq!(k, 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(kappa.re, 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(kappa.im, 0.0);
    }

    #[test]
    fn wavenumbers_below_step_are_decaying() {
        let (k, kappa) = wavenumbers(1.0, 2.0, UNITS).unwrap();
        assert_abs_diff_eq!(k, 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(kappa.re, 0.0);
        assert_abs_diff_eq!(kappa.im, 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn wavenumbers_above_step() {
        let (k, kappa) = wavenumbers(2.0, 1.0, UNITS).unwrap();
        assert_abs_diff_eq!(k, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(kappa.re, 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn wavenumbers_at_threshold_is_exact_zero() {
        let (_, kappa) = wavenumbers(3.0, 3.0, UNITS).unwrap();
        assert_eq!(kappa, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn wavenumbers_respect_units() {
        let units = UnitSystem::new(2.0, 3.0).unwrap();
        let (k, _) = wavenumbers(1.5, 0.0, units).unwrap();
        assert_abs_diff_eq!(k, (2.0f64 * 3.0 * 1.5).sqrt() / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn non_positive_energy_is_rejected() {
        assert!(matches!(wavenumbers(0.0, 1.0, UNITS), Err(Error::Domain(_))));
        assert!(matches!(wavenumbers(-1.0, 1.0, UNITS), Err(Error::Domain(_))));
        assert!(UnitSystem::new(0.0, 1.0).is_err());
    }

    #[test]
    fn amplitudes_without_step() {
        let amps = step_amplitudes(1.7, Complex64::new(1.7, 0.0)).unwrap();
        assert_eq!(amps.b_over_a, Complex64::new(0.0, 0.0));
        assert_eq!(amps.c_over_a, Complex64::new(1.0, 0.0));
        assert_eq!(transmission_probability(&amps), 1.0);
    }

    #[test]
    fn amplitudes_at_threshold() {
        let amps = step_amplitudes(1.3, Complex64::new(0.0, 0.0)).unwrap();
        assert_eq!(amps.b_over_a, Complex64::new(1.0, 0.0));
        assert_eq!(amps.c_over_a, Complex64::new(2.0, 0.0));
        assert_eq!(reflection_probability(&amps), 1.0);
        assert_eq!(transmission_probability(&amps), 0.0);
    }

    #[test]
    fn amplitudes_at_kappa_over_k_inverse_sqrt2() {
        // Frozen from a 30-digit evaluation of (1 - 1/√2)/(1 + 1/√2) and 2/(1 + 1/√2).
        let amps = step_amplitudes(1.0, Complex64::new(0.5f64.sqrt(), 0.0)).unwrap();
        assert_abs_diff_eq!(amps.b_over_a.re, 0.171_572_875_253_809_902, epsilon = 1e-15);
        assert_abs_diff_eq!(amps.c_over_a.re, 1.171_572_875_253_809_902, epsilon = 1e-15);
        // ((√2 - 1)/(√2 + 1))² = 17 - 12√2
        let r = reflection_probability(&amps);
        let t = transmission_probability(&amps);
        assert_abs_diff_eq!(r, 0.029_437_251_522_859_414, epsilon = 1e-15);
        assert_abs_diff_eq!(t, 0.970_562_748_477_140_586, epsilon = 1e-15);
        assert_abs_diff_eq!(r + t, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn total_reflection_below_step() {
        let amps = step_scattering(1.0, 2.0, UNITS).unwrap();
        assert_abs_diff_eq!(amps.b_over_a.norm(), 1.0, epsilon = 1e-12);
        assert_eq!(transmission_probability(&amps), 0.0);
        assert_abs_diff_eq!(reflection_probability(&amps), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn singular_amplitudes_rejected() {
        assert!(step_amplitudes(1.0, Complex64::new(-1.0, 0.0)).is_err());
        assert!(step_amplitudes(0.0, Complex64::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn transfer_matrix_reduces_to_step() {
        let pot = PotentialProfile::step(1.0);
        let tm = transfer_matrix_amplitudes(&pot, 2.0, UNITS).unwrap();
        let direct = step_amplitudes(2.0, Complex64::new(2f64.sqrt(), 0.0)).unwrap();
        assert_abs_diff_eq!((tm.b_over_a - direct.b_over_a).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!((tm.c_over_a - direct.c_over_a).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn transfer_matrix_zero_barrier_is_identity() {
        let pot = PotentialProfile::PiecewiseConstant {
            boundaries: vec![-1.0, 0.5, 2.0],
            levels: vec![0.0; 4],
        };
        let tm = transfer_matrix_amplitudes(&pot, 0.7, UNITS).unwrap();
        assert_abs_diff_eq!(tm.b_over_a.norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!((tm.c_over_a - 1.0).norm(), 0.0, epsilon = 1e-14);
    }

    fn barrier_transmission_closed_form(v0: f64, a: f64, e: f64) -> f64 {
        if e > v0 {
            let q = (2.0 * (e - v0)).sqrt();
            1.0 / (1.0 + v0 * v0 * (q * a).sin().powi(2) / (4.0 * e * (e - v0)))
        } else {
            let q = (2.0 * (v0 - e)).sqrt();
            1.0 / (1.0 + v0 * v0 * (q * a).sinh().powi(2) / (4.0 * e * (v0 - e)))
        }
    }

    #[test]
    fn rectangular_barrier_matches_closed_form() {
        let pot = PotentialProfile::barrier(0.0, 1.0, 1.0);
        let probs = analytic_probabilities(&pot, 2.0, UNITS).unwrap();
        let expected = barrier_transmission_closed_form(1.0, 1.0, 2.0);
        assert_abs_diff_eq!(probs.t, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(probs.r + probs.t, 1.0, epsilon = 1e-12);

        // Tunnelling regime and a shifted barrier.
        let pot = PotentialProfile::barrier(3.0, 0.8, 2.5);
        let probs = analytic_probabilities(&pot, 1.1, UNITS).unwrap();
        assert_abs_diff_eq!(probs.t, barrier_transmission_closed_form(2.5, 0.8, 1.1), epsilon = 1e-12);
    }

    #[test]
    fn transfer_matrix_rejects_energy_below_left_level() {
        let pot = PotentialProfile::PiecewiseConstant {
            boundaries: vec![0.0],
            levels: vec![1.0, 0.0],
        };
        assert!(matches!(
            transfer_matrix_amplitudes(&pot, 0.5, UNITS),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            transfer_matrix_amplitudes(&pot, 1.0, UNITS),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn potential_validation() {
        let bad = PotentialProfile::PiecewiseConstant {
            boundaries: vec![1.0, 0.0],
            levels: vec![0.0, 1.0, 0.0],
        };
        assert!(bad.validate().is_err());
        let bad = PotentialProfile::PiecewiseConstant {
            boundaries: vec![0.0],
            levels: vec![0.0],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn potential_value_at_boundary_is_mean() {
        let pot = PotentialProfile::step(3.0);
        assert_eq!(pot.value_at(-1e-3, 1e-9), 0.0);
        assert_eq!(pot.value_at(0.0, 1e-9), 1.5);
        assert_eq!(pot.value_at(1e-3, 1e-9), 3.0);
        let pot = PotentialProfile::barrier(1.0, 2.0, 4.0);
        assert_eq!(pot.value_at(3.0, 1e-9), 2.0);
        assert_eq!(pot.value_at(2.0, 1e-9), 4.0);
        assert_eq!(pot.value_at(5.0, 1e-9), 0.0);
    }

    #[test]
    fn transfer_matrix_matches_step_across_ratio_sweep() {
        let v0 = 1.7;
        for i in 1..=1000 {
            let ratio = 10.0 * i as f64 / 1000.0;
            let e = ratio * v0;
            let direct = step_scattering(e, v0, UNITS).unwrap();
            let tm = transfer_matrix_amplitudes(&PotentialProfile::step(v0), e, UNITS).unwrap();
            assert!((tm.b_over_a - direct.b_over_a).norm() < 1e-12, "E/V0 = {ratio}");
            assert!((tm.c_over_a - direct.c_over_a).norm() < 1e-12, "E/V0 = {ratio}");
            assert_eq!(tm.kappa, direct.kappa);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn probabilities_sum_to_one(v0 in 0.0f64..50.0, excess in 1e-6f64..100.0) {
            let amps = step_scattering(v0 + excess, v0, UNITS).unwrap();
            let probs = ProbabilityPair::from_amplitudes(&amps);
            prop_assert!((probs.r + probs.t - 1.0).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&probs.r));
            prop_assert!((0.0..=1.0).contains(&probs.t));
            prop_assert!(amps.b_over_a.norm() <= 1.0);
        }
    }

    proptest! {
        #[test]
        fn continuity_at_origin(e in 1e-3f64..100.0, v0 in -10.0f64..100.0) {
            let amps = step_scattering(e, v0, UNITS).unwrap();
            prop_assert!((1.0 + amps.b_over_a - amps.c_over_a).norm() < 1e-15);
        }

        #[test]
        fn evanescent_regime(v0 in 1e-2f64..100.0, frac in 1e-3f64..0.999) {
            let amps = step_scattering(frac * v0, v0, UNITS).unwrap();
            prop_assert!((amps.b_over_a.norm() - 1.0).abs() < 1e-12);
            prop_assert_eq!(transmission_probability(&amps), 0.0);
        }

        #[test]
        fn scale_invariance(e in 1e-2f64..100.0, v0 in 0.0f64..100.0, s in 1e-3f64..1e3) {
            let base = step_scattering(e, v0, UNITS).unwrap();
            let scaled = step_scattering(s * e, s * v0, UNITS).unwrap();
            prop_assert!((base.b_over_a - scaled.b_over_a).norm() < 1e-12);
            prop_assert!((base.c_over_a - scaled.c_over_a).norm() < 1e-12);
        }

        #[test]
        fn barrier_probabilities_conserved(
            width in 0.05f64..3.0,
            v0 in 0.0f64..5.0,
            e in 0.05f64..8.0,
        ) {
            let pot = PotentialProfile::barrier(-0.3, width, v0);
            let probs = analytic_probabilities(&pot, e, UNITS).unwrap();
            prop_assert!((probs.r + probs.t - 1.0).abs() < 1e-10);
            prop_assert!((probs.t - barrier_transmission_closed_form(v0, width, e)).abs() < 1e-10);
        }
    }
}
